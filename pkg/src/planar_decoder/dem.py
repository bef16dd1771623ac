"""Detector error models: types, text format, merging and subsampling.

The text format is the subset of Stim's DEM language needed for graphlike
repetition-code models::

    # comment
    detector(0, 1) D7
    error(0.001) D3 D7
    error(0.002) D0 L0
    logical_observable L0

Detector coordinates are ``(column, round)`` pairs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DemParseError, MissingCoordinatesError, NonGraphlikeError

Coord = tuple[float, float]


def xor_probability(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent events occurs."""
    return p1 * (1.0 - p2) + p2 * (1.0 - p1)


@dataclass(frozen=True)
class ErrorMechanism:
    """An independent error source flipping a fixed set of detectors and observables.

    ``logical_mask`` is a bitmask: bit ``k`` set means observable ``k`` flips.
    """

    probability: float
    detectors: tuple[int, ...]
    logical_mask: int = 0

    def __post_init__(self):
        dets = tuple(sorted(int(d) for d in self.detectors))
        if len(set(dets)) != len(dets):
            raise ValueError(f"duplicate detector in {self.detectors}")
        object.__setattr__(self, "detectors", dets)
        if not 0.0 <= self.probability < 1.0:
            raise ValueError(f"probability {self.probability} outside [0, 1)")
        if self.logical_mask < 0:
            raise ValueError("logical_mask must be non-negative")

    @property
    def key(self) -> tuple[tuple[int, ...], int]:
        return self.detectors, self.logical_mask


@dataclass(frozen=True)
class DetectorErrorModel:
    detector_count: int
    observable_count: int
    mechanisms: tuple[ErrorMechanism, ...] = ()
    coords: dict[int, Coord] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mechanisms", tuple(self.mechanisms))
        object.__setattr__(
            self, "coords", {int(k): (float(v[0]), float(v[1])) for k, v in self.coords.items()}
        )
        for i, m in enumerate(self.mechanisms):
            if m.detectors and m.detectors[-1] >= self.detector_count:
                raise ValueError(f"mechanism {i} references detector {m.detectors[-1]} out of range")
            if m.logical_mask >> self.observable_count:
                raise ValueError(f"mechanism {i} references an observable out of range")
        for k in self.coords:
            if not 0 <= k < self.detector_count:
                raise ValueError(f"coordinate for detector {k} out of range")

    @property
    def has_coords(self) -> bool:
        return len(self.coords) == self.detector_count

    def coord_array(self) -> np.ndarray:
        if not self.has_coords:
            missing = sorted(set(range(self.detector_count)) - set(self.coords))
            raise MissingCoordinatesError(f"detectors without coordinates: {missing[:10]}")
        return np.array([self.coords[k] for k in range(self.detector_count)], dtype=float).reshape(-1, 2)

    def incidence_matrix(self) -> np.ndarray:
        """Dense ``detector_count x len(mechanisms)`` boolean incidence matrix."""
        h = np.zeros((self.detector_count, len(self.mechanisms)), dtype=bool)
        for j, m in enumerate(self.mechanisms):
            h[list(m.detectors), j] = True
        return h

    def logical_vector(self, observable: int = 0) -> np.ndarray:
        return np.array([(m.logical_mask >> observable) & 1 for m in self.mechanisms], dtype=bool)

    def probabilities(self) -> np.ndarray:
        return np.array([m.probability for m in self.mechanisms], dtype=float)

    def with_probabilities(self, probabilities: Sequence[float]) -> "DetectorErrorModel":
        if len(probabilities) != len(self.mechanisms):
            raise ValueError("one probability per mechanism required")
        mechs = tuple(
            ErrorMechanism(float(p), m.detectors, m.logical_mask)
            for p, m in zip(probabilities, self.mechanisms)
        )
        return DetectorErrorModel(self.detector_count, self.observable_count, mechs, self.coords)


@dataclass(frozen=True)
class SyndromeBatch:
    """Per-shot detector outcomes and, optionally, the true observable flips."""

    detectors: np.ndarray
    observables: np.ndarray | None = None

    def __post_init__(self):
        det = np.array(self.detectors, dtype=bool, copy=True)
        if det.ndim != 2:
            raise ValueError("detector bits must be a 2-D (shots, detectors) array")
        det.setflags(write=False)
        object.__setattr__(self, "detectors", det)
        if self.observables is not None:
            obs = np.array(self.observables, dtype=bool, copy=True)
            if obs.ndim != 2 or obs.shape[0] != det.shape[0]:
                raise ValueError("observable bits must be (shots, observables) with matching shots")
            obs.setflags(write=False)
            object.__setattr__(self, "observables", obs)

    @property
    def shots(self) -> int:
        return self.detectors.shape[0]

    @property
    def detector_count(self) -> int:
        return self.detectors.shape[1]

    def __len__(self) -> int:
        return self.shots

    def take(self, rows) -> "SyndromeBatch":
        obs = None if self.observables is None else self.observables[rows]
        return SyndromeBatch(self.detectors[rows], obs)


# ---------------------------------------------------------------------------
# Text format

_INSTRUCTION = re.compile(r"^([A-Za-z_]+)\s*(?:\(([^)]*)\))?\s*(.*)$")
_TARGET = re.compile(r"^([DL])(\d+)$")


def _parse_targets(text: str, line_number: int) -> tuple[list[int], list[int]]:
    dets: list[int] = []
    obs: list[int] = []
    for tok in text.split():
        m = _TARGET.match(tok)
        if m is None:
            raise DemParseError(f"unsupported target {tok!r}", line_number)
        (dets if m.group(1) == "D" else obs).append(int(m.group(2)))
    if len(set(dets)) != len(dets):
        raise DemParseError("duplicate detector within one instruction", line_number)
    if len(set(obs)) != len(obs):
        raise DemParseError("duplicate observable within one instruction", line_number)
    return dets, obs


def _parse_args(text: str | None, line_number: int) -> list[float]:
    if text is None or not text.strip():
        return []
    try:
        return [float(a) for a in text.split(",")]
    except ValueError:
        raise DemParseError(f"bad numeric arguments ({text})", line_number) from None


def parse_dem(text: str | Iterable[str]) -> DetectorErrorModel:
    """Parse DEM text (a string or an iterable of lines)."""
    lines = text.splitlines() if isinstance(text, str) else text
    mechanisms: list[ErrorMechanism] = []
    coords: dict[int, Coord] = {}
    max_det = -1
    max_obs = -1
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _INSTRUCTION.match(line)
        if m is None:
            raise DemParseError(f"malformed line {raw.strip()!r}", n)
        name, arg_text, target_text = m.group(1), m.group(2), m.group(3)
        args = _parse_args(arg_text, n)
        dets, obs = _parse_targets(target_text, n)
        if dets:
            max_det = max(max_det, max(dets))
        if obs:
            max_obs = max(max_obs, max(obs))
        if name == "error":
            if len(args) != 1:
                raise DemParseError("error() takes exactly one probability", n)
            p = args[0]
            if not 0.0 <= p < 1.0:
                raise DemParseError(f"probability {p} out of range [0, 1)", n)
            mask = 0
            for k in obs:
                mask |= 1 << k
            mechanisms.append(ErrorMechanism(p, tuple(dets), mask))
        elif name == "detector":
            if obs:
                raise DemParseError("detector declaration cannot target observables", n)
            if args:
                if len(args) != 2:
                    raise DemParseError("detector coordinates must be (column, round)", n)
                for d in dets:
                    coords[d] = (args[0], args[1])
        elif name == "logical_observable":
            if dets or args:
                raise DemParseError("logical_observable takes only L targets", n)
        else:
            raise DemParseError(f"unsupported instruction {name!r}", n)
    return DetectorErrorModel(max_det + 1, max_obs + 1, tuple(mechanisms), coords)


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write_dem(model: DetectorErrorModel) -> str:
    out = [f"# detectors={model.detector_count} observables={model.observable_count}"]
    for k in sorted(model.coords):
        c, r = model.coords[k]
        out.append(f"detector({_fmt(c)}, {_fmt(r)}) D{k}")
    seen = max((m.detectors[-1] for m in model.mechanisms if m.detectors), default=-1)
    seen = max([seen, *model.coords.keys()])
    if model.detector_count - 1 > seen:
        out.append(f"detector D{model.detector_count - 1}")
    for m in model.mechanisms:
        targets = [f"D{d}" for d in m.detectors]
        targets += [f"L{k}" for k in range(model.observable_count) if (m.logical_mask >> k) & 1]
        out.append(f"error({m.probability!r}) " + " ".join(targets))
    if model.observable_count:
        out.append(f"logical_observable L{model.observable_count - 1}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Transformations


def merge_parallel(model: DetectorErrorModel) -> DetectorErrorModel:
    """XOR-combine mechanisms sharing (detectors, logical_mask); first occurrence order."""
    merged: dict[tuple[tuple[int, ...], int], float] = {}
    for m in model.mechanisms:
        key = m.key
        merged[key] = xor_probability(merged[key], m.probability) if key in merged else m.probability
    mechs = tuple(ErrorMechanism(p, dets, mask) for (dets, mask), p in merged.items())
    return DetectorErrorModel(model.detector_count, model.observable_count, mechs, model.coords)


def validate_graphlike(model: DetectorErrorModel) -> None:
    """Raise NonGraphlikeError for the first mechanism touching three or more detectors."""
    for i, m in enumerate(model.mechanisms):
        if len(m.detectors) > 2:
            raise NonGraphlikeError(i, len(m.detectors))


def is_graphlike(model: DetectorErrorModel) -> bool:
    return all(len(m.detectors) <= 2 for m in model.mechanisms)


def detector_columns(model: DetectorErrorModel) -> list[float]:
    coords = model.coord_array()
    return sorted(set(coords[:, 0].tolist())) if len(coords) else []


def subsample_offsets(source_distance: int, target_distance: int) -> list[int]:
    return list(range(source_distance - target_distance + 1))


def subsample(
    batch: SyndromeBatch,
    model: DetectorErrorModel,
    target_distance: int,
    offset: int,
) -> tuple[SyndromeBatch, DetectorErrorModel]:
    """Restrict a repetition-code dataset and its DEM to a window of data qubits.

    The window keeps ``target_distance`` data qubits, i.e. ``target_distance - 1``
    detector columns starting at column index ``offset``. The observable is
    re-anchored on the window's leftmost data qubit by XOR-ing in every detector
    left of the window (the XOR of one column over all rounds equals the flip
    parity of its two neighbouring data qubits). Mechanisms crossing the window
    edge keep only their in-window detector; beveled edges then coincide with the
    transverse boundary edge on the same node and are XOR-merged into it.
    """
    if batch.detector_count != model.detector_count:
        raise ValueError("batch and model disagree on detector count")
    if target_distance < 3 or target_distance % 2 == 0:
        raise ValueError("target_distance must be an odd integer >= 3")
    coords = model.coord_array()
    columns = sorted(set(coords[:, 0].tolist()))
    source_distance = len(columns) + 1
    if target_distance > source_distance:
        raise ValueError(f"target distance {target_distance} exceeds source distance {source_distance}")
    if not 0 <= offset <= source_distance - target_distance:
        raise ValueError(
            f"offset {offset} out of range for {source_distance}->{target_distance} "
            f"(valid 0..{source_distance - target_distance})"
        )
    window = columns[offset : offset + target_distance - 1]
    lo, hi = window[0], window[-1]
    col = coords[:, 0]
    left = col < lo
    keep = (col >= lo) & (col <= hi)
    kept = np.flatnonzero(keep)
    new_index = -np.ones(model.detector_count, dtype=int)
    new_index[kept] = np.arange(len(kept))

    mechanisms = []
    for m in model.mechanisms:
        mask = m.logical_mask
        if model.observable_count and sum(bool(left[d]) for d in m.detectors) % 2:
            mask ^= 1
        dets = tuple(int(new_index[d]) for d in m.detectors if keep[d])
        if not dets and not mask:
            continue
        mechanisms.append(ErrorMechanism(m.probability, dets, mask))
    new_coords = {int(new_index[k]): (model.coords[k][0] - lo, model.coords[k][1]) for k in kept}
    sub_model = merge_parallel(
        DetectorErrorModel(len(kept), model.observable_count, tuple(mechanisms), new_coords)
    )

    observables = batch.observables
    if observables is not None and observables.shape[1] and left.any():
        observables = observables.copy()
        observables[:, 0] ^= np.bitwise_xor.reduce(batch.detectors[:, left], axis=1)
    return SyndromeBatch(batch.detectors[:, kept], observables), sub_model

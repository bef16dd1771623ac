"""Decoder priors from detector data by pairwise correlation analysis.

For a graphlike model with independent mechanisms, two detectors ``i`` and
``j`` are correlated only through the mechanisms touching both. Writing
``a = <x_i>``, ``b = <x_j>`` and ``c = <x_i x_j>``, the probability of that
shared source is::

    p_ij = 1/2 - 1/2 * sqrt(1 - 4 (c - a b) / (1 - 2a - 2b + 4c))

Boundary probabilities follow from ``1 - 2<x_i> = (1 - 2 p_i) prod_j (1 - 2 p_ij)``.
Standard errors come from a grouped jackknife over shots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .dem import DetectorErrorModel, ErrorMechanism, SyndromeBatch, validate_graphlike
from .errors import InsufficientDataError, NonPhysicalEstimateError

P_FLOOR = 1e-12
P_CEILING = 0.5 - 1e-12
DEFAULT_EMPIRICAL = 1e-4
JACKKNIFE_BLOCKS = 100
MIN_SHOTS = 1000
POLICIES = ("clamp", "reject")


def pair_probability(a, b, c):
    """Two-point estimate of the shared-mechanism probability.

    Returns ``(p, discriminant)``; ``p`` is NaN where the discriminant is negative.
    """
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    # written symmetrically in a and b so that p_ij == p_ji bit for bit
    den = 1.0 - 2.0 * (a + b) + 4.0 * c
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(den != 0, 1.0 - 4.0 * (c - a * b) / den, np.nan)
        p = 0.5 - 0.5 * np.sqrt(np.where(q >= 0, q, np.nan))
    return p, q


def boundary_probability(mean, incident):
    """Deconvolve known edge probabilities out of a detector's firing rate.

    Edges are divided out in descending order of probability.
    """
    ratio = 1.0 - 2.0 * float(mean)
    for p in sorted((float(x) for x in incident), reverse=True):
        ratio /= 1.0 - 2.0 * p
    return 0.5 - 0.5 * ratio


@dataclass(frozen=True)
class Skeleton:
    """Detector groups of a graphlike model.

    Mechanisms flipping the same detectors cannot be told apart by detector
    statistics, so estimation is per group and the result is split back over
    the group's members in proportion to their prior probabilities.
    """

    model: DetectorErrorModel
    pairs: np.ndarray  # (k, 2) detector pairs, i < j
    boundaries: np.ndarray  # detectors carrying a single-detector group
    pair_members: tuple[tuple[int, ...], ...]
    boundary_members: tuple[tuple[int, ...], ...]

    @classmethod
    def from_model(cls, model: DetectorErrorModel) -> "Skeleton":
        validate_graphlike(model)
        pairs: dict[tuple[int, int], list[int]] = {}
        singles: dict[int, list[int]] = {}
        for k, m in enumerate(model.mechanisms):
            if len(m.detectors) == 2:
                pairs.setdefault(tuple(m.detectors), []).append(k)
            elif len(m.detectors) == 1:
                singles.setdefault(m.detectors[0], []).append(k)
        pk = sorted(pairs)
        bk = sorted(singles)
        return cls(
            model,
            np.array(pk, dtype=np.int64).reshape(-1, 2),
            np.array(bk, dtype=np.int64),
            tuple(tuple(pairs[p]) for p in pk),
            tuple(tuple(singles[b]) for b in bk),
        )


class CorrelationAccumulator:
    """Running sums of ``x_i`` and ``x_i x_j`` over skeleton pairs.

    Shot ``t`` lands in jackknife block ``t % blocks``, so the sums are the
    same however the shots are chunked and accumulators merge by addition.
    """

    def __init__(self, skeleton: Skeleton, blocks: int = JACKKNIFE_BLOCKS, heatmap: bool = False):
        n = skeleton.model.detector_count
        self.skeleton = skeleton
        self.blocks = blocks
        self.counts = np.zeros(blocks, dtype=np.int64)
        self.singles = np.zeros((blocks, n), dtype=np.int64)
        self.pairs = np.zeros((blocks, len(skeleton.pairs)), dtype=np.int64)
        self.products = np.zeros((n, n), dtype=np.int64) if heatmap else None
        self.shots = 0

    def update(self, batch: SyndromeBatch) -> "CorrelationAccumulator":
        x = batch.detectors
        if x.shape[1] != self.skeleton.model.detector_count:
            raise ValueError("batch and skeleton disagree on detector count")
        block = (self.shots + np.arange(len(x))) % self.blocks
        xi = x.astype(np.int64)
        pi, pj = self.skeleton.pairs[:, 0], self.skeleton.pairs[:, 1]
        both = (x[:, pi] & x[:, pj]).astype(np.int64)
        np.add.at(self.counts, block, 1)
        np.add.at(self.singles, block, xi)
        np.add.at(self.pairs, block, both)
        if self.products is not None:
            xf = x.astype(np.float64)
            self.products += np.rint(xf.T @ xf).astype(np.int64)
        self.shots += len(x)
        return self

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        if other.blocks != self.blocks:
            raise ValueError("accumulators use different block counts")
        # other's shot numbering continues after ours
        shift = self.shots % self.blocks
        order = (np.arange(self.blocks) - shift) % self.blocks
        self.counts += other.counts[order]
        self.singles += other.singles[order]
        self.pairs += other.pairs[order]
        if self.products is not None and other.products is not None:
            self.products += other.products
        self.shots += other.shots
        return self


@dataclass(frozen=True)
class Correction:
    kind: str  # "edge" or "boundary"
    detectors: tuple[int, ...]
    estimate: float
    emitted: float
    reason: str

    def to_dict(self) -> dict:
        value = self.estimate if np.isfinite(self.estimate) else None
        return {
            "kind": self.kind,
            "detectors": list(self.detectors),
            "estimate": value,
            "emitted": self.emitted,
            "reason": self.reason,
        }

    @property
    def name(self) -> str:
        return "p_" + "_".join(f"D{d}" for d in self.detectors)


@dataclass(frozen=True)
class CorrelationReport:
    skeleton: Skeleton
    shots: int
    detector_means: np.ndarray
    pair_means: np.ndarray
    edge_estimates: np.ndarray
    edge_stderr: np.ndarray
    boundary_estimates: np.ndarray
    boundary_stderr: np.ndarray
    corrections: tuple[Correction, ...] = ()
    heatmap: np.ndarray | None = field(default=None, repr=False)

    @property
    def pairs(self) -> np.ndarray:
        return self.skeleton.pairs

    @property
    def boundaries(self) -> np.ndarray:
        return self.skeleton.boundaries

    def edge(self, i: int, j: int) -> float:
        """Estimate for the pair ``{i, j}``, symmetric in its arguments."""
        key = (min(i, j), max(i, j))
        hit = np.flatnonzero((self.pairs[:, 0] == key[0]) & (self.pairs[:, 1] == key[1]))
        if not len(hit):
            raise KeyError(f"pair {key} is not in the skeleton")
        return float(self.edge_estimates[hit[0]])

    def group_estimates(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-mechanism estimates and standard errors, split within groups."""
        model = self.skeleton.model
        prior = model.probabilities()
        est = prior.copy()
        se = np.zeros_like(prior)
        groups = list(zip(self.skeleton.pair_members, self.edge_estimates, self.edge_stderr))
        groups += list(zip(self.skeleton.boundary_members, self.boundary_estimates, self.boundary_stderr))
        for members, p, s in groups:
            idx = np.array(members)
            w = prior[idx]
            w = w / w.sum() if w.sum() > 0 else np.full(len(idx), 1.0 / len(idx))
            est[idx] = p * w
            se[idx] = s * w
        return est, se


def _estimates(skel: Skeleton, counts, singles, pairs):
    """Edge and boundary estimates from summed statistics (leading axis = replicate)."""
    n = counts[:, None].astype(float)
    means = singles / n
    pm = pairs / n
    i, j = skel.pairs[:, 0], skel.pairs[:, 1]
    edge, disc = pair_probability(means[:, i], means[:, j], pm)
    bnd = np.empty((len(counts), len(skel.boundaries)))
    incident = [np.flatnonzero((i == d) | (j == d)) for d in skel.boundaries]
    for r in range(len(counts)):
        safe = np.where(np.isfinite(edge[r]), edge[r], P_CEILING)
        for k, d in enumerate(skel.boundaries):
            bnd[r, k] = boundary_probability(means[r, d], safe[incident[k]])
    return means, pm, edge, disc, bnd


def report_from_accumulator(acc: CorrelationAccumulator) -> CorrelationReport:
    skel = acc.skeleton
    if acc.shots < MIN_SHOTS:
        raise InsufficientDataError(f"{acc.shots} shots; at least {MIN_SHOTS} are needed")
    tot = (acc.counts.sum()[None], acc.singles.sum(0)[None], acc.pairs.sum(0)[None])
    means, pm, edge, disc, bnd = (v[0] for v in _estimates(skel, *tot))
    used = acc.counts > 0
    g = int(np.count_nonzero(used))
    loo = (tot[0] - acc.counts[used], tot[1] - acc.singles[used], tot[2] - acc.pairs[used])
    _, _, edge_j, _, bnd_j = _estimates(skel, *loo)

    def jackknife(rep):
        with np.errstate(invalid="ignore"):
            return np.sqrt((g - 1) / g * np.sum((rep - rep.mean(0)) ** 2, axis=0))

    corrections = []
    for k, (a, b) in enumerate(skel.pairs):
        if not disc[k] >= 0:
            edge[k] = P_CEILING
            corrections.append(Correction("edge", (int(a), int(b)), float("nan"), P_CEILING, "negative discriminant"))
    if edge.size:
        edge = np.where(np.isfinite(edge), edge, P_CEILING)
    heat = None
    if acc.products is not None:
        prod = acc.products / acc.shots
        heat, _ = pair_probability(means[:, None], means[None, :], prod)
        np.fill_diagonal(heat, np.nan)
    return CorrelationReport(
        skeleton=skel,
        shots=acc.shots,
        detector_means=means,
        pair_means=pm,
        edge_estimates=edge,
        edge_stderr=jackknife(edge_j),
        boundary_estimates=bnd,
        boundary_stderr=jackknife(bnd_j),
        corrections=tuple(corrections),
        heatmap=heat,
    )


def estimate_pij(
    batches: SyndromeBatch | Iterable[SyndromeBatch],
    skeleton: DetectorErrorModel,
    blocks: int = JACKKNIFE_BLOCKS,
    heatmap: bool = False,
) -> CorrelationReport:
    """Edge and boundary probabilities for the skeleton's detector groups."""
    acc = CorrelationAccumulator(Skeleton.from_model(skeleton), blocks=blocks, heatmap=heatmap)
    for b in [batches] if isinstance(batches, SyndromeBatch) else batches:
        acc.update(b)
    return report_from_accumulator(acc)


@dataclass(frozen=True)
class CorrectedModel:
    model: DetectorErrorModel
    corrections: tuple[Correction, ...]

    def log_json(self) -> str:
        return json.dumps({"corrections": [c.to_dict() for c in self.corrections]}, indent=2) + "\n"


def correct_boundaries(
    report: CorrelationReport, policy: str = "clamp", empirical: float = DEFAULT_EMPIRICAL
) -> CorrectedModel:
    """Replace non-physical estimates and emit a decode-ready model.

    Negative boundary or edge estimates, and boundaries at or above one half,
    are set to ``empirical`` under ``"clamp"`` and abort under ``"reject"``.
    Physical values below ``P_FLOOR`` are raised to it; every change is logged.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if not P_FLOOR <= empirical <= P_CEILING:
        raise ValueError("empirical value must lie in [P_FLOOR, 0.5)")
    skel = report.skeleton
    fixed = list(report.corrections)
    bad = []
    edge = report.edge_estimates.copy()
    bnd = report.boundary_estimates.copy()
    for kind, values, keys in (
        ("edge", edge, [tuple(map(int, p)) for p in skel.pairs]),
        ("boundary", bnd, [(int(d),) for d in skel.boundaries]),
    ):
        for k, v in enumerate(values):
            if v < 0 or (kind == "boundary" and v >= 0.5):
                bad.append(Correction(kind, keys[k], float(v), empirical, "negative" if v < 0 else "above one half"))
            elif v < P_FLOOR or v > P_CEILING:
                new = min(max(v, P_FLOOR), P_CEILING)
                fixed.append(Correction(kind, keys[k], float(v), new, "outside floor or ceiling"))
                values[k] = new
    if bad and policy == "reject":
        raise NonPhysicalEstimateError([(c.name, c.estimate) for c in bad])
    for c in bad:
        target = edge if c.kind == "edge" else bnd
        keys = skel.pairs if c.kind == "edge" else skel.boundaries[:, None]
        k = int(np.flatnonzero(np.all(keys == np.array(c.detectors), axis=1))[0])
        target[k] = empirical
    fixed += bad
    adjusted = CorrelationReport(
        skel, report.shots, report.detector_means, report.pair_means, edge,
        report.edge_stderr, bnd, report.boundary_stderr, (), None,
    )
    est, _ = adjusted.group_estimates()
    groups = {k for members in skel.pair_members + skel.boundary_members for k in members}
    mechs = tuple(
        ErrorMechanism(float(np.clip(est[k], P_FLOOR, P_CEILING)) if k in groups else m.probability, m.detectors, m.logical_mask)
        for k, m in enumerate(skel.model.mechanisms)
    )
    model = DetectorErrorModel(skel.model.detector_count, skel.model.observable_count, mechs, skel.model.coords)
    return CorrectedModel(model, tuple(fixed))


def heatmap_csv(report: CorrelationReport) -> str:
    """``row,col,value`` lines for every finite off-diagonal heatmap entry."""
    if report.heatmap is None:
        raise ValueError("report was built without a heatmap")
    lines = ["row,col,value"]
    h = report.heatmap
    for r, c in zip(*np.nonzero(np.isfinite(h))):
        lines.append(f"{r},{c},{h[r, c]:.9g}")
    return "\n".join(lines) + "\n"

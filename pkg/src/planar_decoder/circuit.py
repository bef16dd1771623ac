"""Bit-flip repetition-code memory circuits, circuit-level noise and Pauli frames.

Qubit layout interleaves data and ancilla qubits: data qubit ``j`` is ``2j`` and
ancilla ``i`` (between data ``i`` and ``i + 1``) is ``2i + 1``. Each round runs
``CX(data i -> ancilla i)``, then ``CX(data i+1 -> ancilla i)``, then measures the
ancillas; ancillas are reset before every round after the first.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dem import Coord, DetectorErrorModel, ErrorMechanism, SyndromeBatch, xor_probability
from .errors import NonGraphlikeError

RESET, MEASURE, IDLE, CX, TICK = "R", "M", "I", "CX", "TICK"

X_ERROR, DEPOLARIZE1, DEPOLARIZE2 = "X_ERROR", "DEPOLARIZE1", "DEPOLARIZE2"

# SI1000 (superconducting-inspired) multipliers of the base rate p.
# Keys: operation class -> (channel, multiplier, timing).
SI1000_TABLE: dict[str, tuple[str, float, str]] = {
    "CX": (DEPOLARIZE2, 1.0, "after"),
    "R": (X_ERROR, 2.0, "after"),
    "M": (X_ERROR, 5.0, "before"),
    "I": (DEPOLARIZE1, 0.1, "after"),
    "I_resonator": (DEPOLARIZE1, 2.0, "after"),
}

DEPOLARIZING_TABLE: dict[str, tuple[str, float, str]] = {
    "CX": (DEPOLARIZE2, 1.0, "after"),
    "R": (X_ERROR, 1.0, "after"),
    "M": (X_ERROR, 1.0, "before"),
    "I": (DEPOLARIZE1, 1.0, "after"),
    "I_resonator": (DEPOLARIZE1, 1.0, "after"),
}

NOISE_TABLES = {"depolarizing": DEPOLARIZING_TABLE, "si1000": SI1000_TABLE}


@dataclass(frozen=True)
class Operation:
    kind: str
    qubits: tuple[int, ...] = ()
    record: int | None = None


@dataclass(frozen=True)
class Circuit:
    qubit_count: int
    operations: tuple[Operation, ...]
    detectors: tuple[tuple[int, ...], ...]
    observables: tuple[tuple[int, ...], ...]
    detector_coords: tuple[Coord, ...] = ()
    distance: int | None = None
    rounds: int | None = None

    @property
    def measurement_count(self) -> int:
        return sum(1 for op in self.operations if op.kind == MEASURE)

    @property
    def detector_count(self) -> int:
        return len(self.detectors)

    @property
    def observable_count(self) -> int:
        return len(self.observables)

    def moments(self) -> list[list[tuple[int, Operation]]]:
        """Operations grouped by TICK boundaries, with their program indices."""
        out: list[list[tuple[int, Operation]]] = [[]]
        for k, op in enumerate(self.operations):
            if op.kind == TICK:
                if out[-1]:
                    out.append([])
            else:
                out[-1].append((k, op))
        return [m for m in out if m]


def build_repetition_circuit(distance: int, rounds: int) -> Circuit:
    """Syndrome-measurement circuit for a distance-``distance`` bit-flip repetition code."""
    if distance < 3 or distance % 2 == 0:
        raise ValueError("distance must be an odd integer >= 3")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    d, r = distance, rounds
    data = [2 * j for j in range(d)]
    anc = [2 * i + 1 for i in range(d - 1)]
    ops: list[Operation] = []
    rec = 0
    anc_rec = np.zeros((r, d - 1), dtype=int)
    data_rec = np.zeros(d, dtype=int)

    def tick():
        ops.append(Operation(TICK))

    ops.extend(Operation(RESET, (q,)) for q in range(2 * d - 1))
    tick()
    for t in range(r):
        if t > 0:
            ops.extend(Operation(RESET, (a,)) for a in anc)
            ops.extend(Operation(IDLE, (q,)) for q in data)
            tick()
        ops.extend(Operation(CX, (data[i], anc[i])) for i in range(d - 1))
        ops.append(Operation(IDLE, (data[-1],)))
        tick()
        ops.extend(Operation(CX, (data[i + 1], anc[i])) for i in range(d - 1))
        ops.append(Operation(IDLE, (data[0],)))
        tick()
        for i, a in enumerate(anc):
            ops.append(Operation(MEASURE, (a,), rec))
            anc_rec[t, i] = rec
            rec += 1
        if t == r - 1:
            for j, q in enumerate(data):
                ops.append(Operation(MEASURE, (q,), rec))
                data_rec[j] = rec
                rec += 1
        else:
            ops.extend(Operation(IDLE, (q,)) for q in data)
        tick()

    detectors: list[tuple[int, ...]] = []
    coords: list[Coord] = []
    for t in range(r + 1):
        for i in range(d - 1):
            if t == 0:
                recs = (anc_rec[0, i],)
            elif t < r:
                recs = (anc_rec[t, i], anc_rec[t - 1, i])
            else:
                recs = (data_rec[i], data_rec[i + 1], anc_rec[r - 1, i])
            detectors.append(tuple(int(x) for x in recs))
            coords.append((float(i), float(t)))
    observables = ((int(data_rec[0]),),)
    return Circuit(2 * d - 1, tuple(ops), tuple(detectors), observables, tuple(coords), d, r)


@dataclass(frozen=True)
class NoiseSpec:
    model: str
    p: float

    def __post_init__(self):
        if self.model not in NOISE_TABLES:
            raise ValueError(f"unknown noise model {self.model!r}; expected one of {sorted(NOISE_TABLES)}")
        if not 0.0 <= self.p < 0.5:
            raise ValueError("p must lie in [0, 0.5)")


@dataclass(frozen=True)
class FaultSite:
    op_index: int
    timing: str
    channel: str
    qubits: tuple[int, ...]
    probability: float


@dataclass(frozen=True)
class NoisyCircuit:
    circuit: Circuit
    sites: tuple[FaultSite, ...]
    noise: NoiseSpec | None = None
    _program: list = field(default=None, init=False, repr=False, compare=False)

    def program(self):
        if self._program is None:
            object.__setattr__(self, "_program", _compile(self))
        return self._program


def attach_noise(circuit: Circuit, spec: NoiseSpec) -> NoisyCircuit:
    table = NOISE_TABLES[spec.model]
    sites: list[FaultSite] = []
    for moment in circuit.moments():
        resonator = any(op.kind in (MEASURE, RESET) for _, op in moment)
        for k, op in moment:
            if op.kind == IDLE:
                key = "I_resonator" if resonator else "I"
            else:
                key = op.kind
            channel, mult, timing = table[key]
            prob = min(mult * spec.p, _channel_max(channel))
            sites.append(FaultSite(k, timing, channel, op.qubits, prob))
    sites.sort(key=lambda s: (s.op_index, s.timing != "before"))
    return NoisyCircuit(circuit, tuple(sites), spec)


def _channel_max(channel: str) -> float:
    return {X_ERROR: 1.0, DEPOLARIZE1: 0.75, DEPOLARIZE2: 15.0 / 16.0}[channel]


# ---------------------------------------------------------------------------
# Pauli frames

# Pauli index within one qubit: 0=I, 1=X, 2=Y, 3=Z. (x, z) components:
_PX = np.array([0, 1, 1, 0], dtype=bool)
_PZ = np.array([0, 0, 1, 1], dtype=bool)


def channel_paulis(channel: str) -> list[tuple[int, ...]]:
    """Non-identity Pauli outcomes of a channel, as per-qubit Pauli indices."""
    if channel == X_ERROR:
        return [(1,)]
    if channel == DEPOLARIZE1:
        return [(1,), (2,), (3,)]
    if channel == DEPOLARIZE2:
        return [(a, b) for a in range(4) for b in range(4) if (a, b) != (0, 0)]
    raise ValueError(channel)


def independent_component_probability(channel: str, p: float) -> float:
    """Probability of each independent Pauli component reproducing the channel exactly."""
    if channel == X_ERROR:
        return p
    if channel == DEPOLARIZE1:
        return 0.5 * (1.0 - math.sqrt(max(0.0, 1.0 - 4.0 * p / 3.0)))
    if channel == DEPOLARIZE2:
        return 0.5 * (1.0 - max(0.0, 1.0 - 16.0 * p / 15.0) ** 0.125)
    raise ValueError(channel)


@dataclass
class _NoiseStep:
    site_indices: np.ndarray
    channel: str
    qubits: np.ndarray  # (k, arity)
    probs: np.ndarray  # (k,)


def _compile(noisy: NoisyCircuit) -> list:
    """Group operations and fault sites into vectorised steps, one moment at a time."""
    circuit = noisy.circuit
    by_op: dict[int, list[int]] = {}
    for s_idx, site in enumerate(noisy.sites):
        by_op.setdefault(site.op_index, []).append(s_idx)

    def noise_steps(indices: list[int]) -> list:
        steps = []
        for channel in (X_ERROR, DEPOLARIZE1, DEPOLARIZE2):
            sel = [s for s in indices if noisy.sites[s].channel == channel]
            if sel:
                steps.append(
                    (
                        "noise",
                        _NoiseStep(
                            np.array(sel),
                            channel,
                            np.array([noisy.sites[s].qubits for s in sel], dtype=int),
                            np.array([noisy.sites[s].probability for s in sel]),
                        ),
                    )
                )
        return steps

    program: list = []
    for moment in circuit.moments():
        before = [s for k, _ in moment for s in by_op.get(k, []) if noisy.sites[s].timing == "before"]
        after = [s for k, _ in moment for s in by_op.get(k, []) if noisy.sites[s].timing == "after"]
        program.extend(noise_steps(before))
        resets = [op.qubits[0] for _, op in moment if op.kind == RESET]
        meas = [(op.qubits[0], op.record) for _, op in moment if op.kind == MEASURE]
        cxs = [op.qubits for _, op in moment if op.kind == CX]
        if resets:
            program.append(("R", np.array(resets)))
        if cxs:
            arr = np.array(cxs)
            program.append(("CX", arr[:, 0], arr[:, 1]))
        if meas:
            arr = np.array(meas)
            program.append(("M", arr[:, 0], arr[:, 1]))
        program.extend(noise_steps(after))
    return program


Injector = Callable[[_NoiseStep], tuple[np.ndarray, np.ndarray]]


def _run_frames(noisy: NoisyCircuit, rows: int, inject: Injector) -> tuple[np.ndarray, np.ndarray]:
    """Propagate ``rows`` independent Pauli frames; returns (measurement flips, final z frame)."""
    circuit = noisy.circuit
    x = np.zeros((rows, circuit.qubit_count), dtype=bool)
    z = np.zeros((rows, circuit.qubit_count), dtype=bool)
    records = np.zeros((rows, circuit.measurement_count), dtype=bool)
    for step in noisy.program():
        kind = step[0]
        if kind == "noise":
            ns = step[1]
            fx, fz = inject(ns)  # (rows, k, arity)
            for a in range(ns.qubits.shape[1]):
                q = ns.qubits[:, a]
                # sites in one moment touch distinct qubits, so fancy-index XOR is safe
                x[:, q] ^= fx[:, :, a]
                z[:, q] ^= fz[:, :, a]
        elif kind == "R":
            x[:, step[1]] = False
            z[:, step[1]] = False
        elif kind == "CX":
            c, t = step[1], step[2]
            x[:, t] ^= x[:, c]
            z[:, c] ^= z[:, t]
        elif kind == "M":
            records[:, step[2]] = x[:, step[1]]
    return records, z


def _records_to_batch(circuit: Circuit, records: np.ndarray) -> SyndromeBatch:
    det = _xor_columns(records, circuit.detectors)
    obs = _xor_columns(records, circuit.observables)
    return SyndromeBatch(det, obs)


def _xor_columns(records: np.ndarray, groups: Sequence[Sequence[int]]) -> np.ndarray:
    out = np.zeros((records.shape[0], len(groups)), dtype=bool)
    for i, g in enumerate(groups):
        out[:, i] = np.bitwise_xor.reduce(records[:, list(g)], axis=1)
    return out


def propagate_faults(noisy: NoisyCircuit, faults: Sequence[Sequence[tuple[int, tuple[int, ...]]]]) -> SyndromeBatch:
    """Deterministically inject faults and report the resulting detector/observable flips.

    ``faults[row]`` is a list of ``(site_index, pauli)`` pairs, where ``pauli`` is a
    tuple of per-qubit Pauli indices (1=X, 2=Y, 3=Z) matching the site's arity.
    """
    rows = len(faults)
    chosen: dict[int, list[tuple[int, tuple[int, ...]]]] = {}
    for row, fs in enumerate(faults):
        for s_idx, pauli in fs:
            chosen.setdefault(s_idx, []).append((row, tuple(pauli)))

    def inject(ns: _NoiseStep):
        k, arity = ns.qubits.shape
        fx = np.zeros((rows, k, arity), dtype=bool)
        fz = np.zeros((rows, k, arity), dtype=bool)
        for col, s_idx in enumerate(ns.site_indices):
            for row, pauli in chosen.get(int(s_idx), ()):
                if len(pauli) != arity:
                    raise ValueError(f"site {s_idx} has arity {arity}, got Pauli {pauli}")
                fx[row, col] ^= _PX[list(pauli)]
                fz[row, col] ^= _PZ[list(pauli)]
        return fx, fz

    records, _ = _run_frames(noisy, rows, inject)
    return _records_to_batch(noisy.circuit, records)


def fault_signatures(noisy: NoisyCircuit) -> tuple[list[tuple[int, tuple[int, ...]]], SyndromeBatch]:
    """Signature of every (site, non-identity Pauli) single fault."""
    components = [(s, pauli) for s, site in enumerate(noisy.sites) for pauli in channel_paulis(site.channel)]
    batch = propagate_faults(noisy, [[c] for c in components])
    return components, batch


def extract_dem(noisy: NoisyCircuit) -> DetectorErrorModel:
    """Detector error model by single-fault propagation and XOR-merging of signatures.

    Each channel is decomposed into independent Pauli components (exact for X flips
    and depolarizing channels), so the merged model reproduces the circuit's joint
    detector/observable distribution exactly.
    """
    circuit = noisy.circuit
    components, batch = fault_signatures(noisy)
    merged: dict[tuple[tuple[int, ...], int], float] = {}
    for (s_idx, _), det_row, obs_row in zip(components, batch.detectors, batch.observables):
        site = noisy.sites[s_idx]
        q = independent_component_probability(site.channel, site.probability)
        if q == 0.0:
            continue
        dets = tuple(int(i) for i in np.flatnonzero(det_row))
        mask = int(sum(1 << int(k) for k in np.flatnonzero(obs_row)))
        if not dets and not mask:
            continue
        if len(dets) > 2:
            raise NonGraphlikeError(len(merged), len(dets))
        key = (dets, mask)
        merged[key] = xor_probability(merged[key], q) if key in merged else q
    mechanisms = tuple(ErrorMechanism(p, dets, mask) for (dets, mask), p in sorted(merged.items()))
    coords = {k: c for k, c in enumerate(circuit.detector_coords)}
    return DetectorErrorModel(circuit.detector_count, circuit.observable_count, mechanisms, coords)


def repetition_dem(distance: int, rounds: int, noise: str, p: float) -> DetectorErrorModel:
    noisy = attach_noise(build_repetition_circuit(distance, rounds), NoiseSpec(noise, p))
    return extract_dem(noisy)


# ---------------------------------------------------------------------------
# Sampling

BLOCK_SHOTS = 1024


def _sample_block(noisy: NoisyCircuit, seed: int, block: int) -> SyndromeBatch:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    rows = BLOCK_SHOTS

    def inject(ns: _NoiseStep):
        k, arity = ns.qubits.shape
        u = rng.random((rows, k))
        p = ns.probs[None, :]
        if ns.channel == X_ERROR:
            fx = (u < p)[:, :, None]
            return fx, np.zeros_like(fx)
        n_out = 3 if ns.channel == DEPOLARIZE1 else 15
        fired = u < p
        idx = np.where(fired, np.minimum((u / np.where(p > 0, p, 1.0) * n_out).astype(np.int64), n_out - 1) + 1, 0)
        if arity == 1:
            paulis = idx[:, :, None]
        else:
            paulis = np.stack([idx // 4, idx % 4], axis=-1)
        return _PX[paulis], _PZ[paulis]

    records, _ = _run_frames(noisy, rows, inject)
    return _records_to_batch(noisy.circuit, records)


def sample_syndromes(noisy: NoisyCircuit, shots: int, seed: int, threads: int = 1) -> SyndromeBatch:
    """Pauli-frame sampling of ``shots`` runs.

    Shots are generated in fixed blocks of ``BLOCK_SHOTS`` whose RNG streams are keyed
    by ``(seed, block index)``; the output therefore depends only on ``(seed, shots)``
    and any shorter run is a prefix of a longer one, independent of ``threads``.
    """
    if shots < 0:
        raise ValueError("shots must be non-negative")
    blocks = -(-shots // BLOCK_SHOTS)
    if threads > 1 and blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _sample_block(noisy, seed, b), range(blocks)))
    else:
        parts = [_sample_block(noisy, seed, b) for b in range(blocks)]
    c = noisy.circuit
    if not parts:
        return SyndromeBatch(np.zeros((0, c.detector_count), bool), np.zeros((0, c.observable_count), bool))
    det = np.vstack([b.detectors for b in parts])[:shots]
    obs = np.vstack([b.observables for b in parts])[:shots]
    return SyndromeBatch(det, obs)

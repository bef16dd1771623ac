"""Code-capacity decoding of surface codes as two independent planar problems.

X errors are decoded against the Z checks and Z errors against the X checks.
Each half is written as a graphlike DEM whose detectors are the checks (with
grid coordinates) and whose mechanisms are the data qubits, so the repetition
code machinery applies unchanged. A qubit on a rough boundary touches a single
check and becomes a boundary mechanism; on the rotated code two such qubits
can share a check, and their identical mechanisms are merged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import DecodeContext, build_context, decode, decode_batch
from .dem import DetectorErrorModel, ErrorMechanism, SyndromeBatch

CODES = ("surface", "rotated_surface")
NOISES = ("uncorrelated", "depolarizing")


@dataclass(frozen=True)
class CheckGraph:
    """One half of a CSS code: which checks each qubit flips, and the logical."""

    check_coords: np.ndarray  # (checks, 2) = (column, row)
    incidence: np.ndarray  # (checks, qubits) bool
    logical: np.ndarray  # (qubits,) bool; qubits on the logical's support

    @property
    def check_count(self) -> int:
        return self.incidence.shape[0]

    @property
    def qubit_count(self) -> int:
        return self.incidence.shape[1]

    def dem(self, p: float) -> DetectorErrorModel:
        mechs = [
            ErrorMechanism(float(p), tuple(np.flatnonzero(self.incidence[:, q]).tolist()), int(self.logical[q]))
            for q in range(self.qubit_count)
        ]
        coords = {k: tuple(self.check_coords[k]) for k in range(self.check_count)}
        return DetectorErrorModel(self.check_count, 1, tuple(mechs), coords)

    def syndromes(self, errors: np.ndarray) -> np.ndarray:
        e = np.asarray(errors, dtype=np.float64)
        return ((e @ self.incidence.T.astype(np.float64)).astype(np.int64) & 1).astype(bool)

    def logical_flips(self, errors: np.ndarray) -> np.ndarray:
        return (np.count_nonzero(np.asarray(errors, dtype=bool) & self.logical, axis=1) % 2).astype(bool)


def _graph(qubits, checks, coord_of, logical_of) -> CheckGraph:
    qindex = {q: k for k, q in enumerate(qubits)}
    inc = np.zeros((len(checks), len(qubits)), dtype=bool)
    for c, (_, support) in enumerate(checks):
        for q in support:
            inc[c, qindex[q]] = True
    coords = np.array([coord_of(c[0]) for c in checks], dtype=float).reshape(-1, 2)
    logical = np.array([logical_of(q) for q in qubits], dtype=bool)
    return CheckGraph(coords, inc, logical)


def surface_code(distance: int) -> tuple[CheckGraph, CheckGraph, int]:
    """Unrotated planar code on a ``(2d-1) x (2d-1)`` lattice.

    Qubits sit at ``(x, y)`` with ``x + y`` even; Z checks at (odd, even) and
    X checks at (even, odd). Returns ``(x_half, z_half, qubit_count)``.
    """
    n = 2 * distance - 1
    qubits = [(x, y) for y in range(n) for x in range(n) if (x + y) % 2 == 0]
    qset = set(qubits)

    def star(x, y):
        return [q for q in ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)) if q in qset]

    z_checks = [((x, y), star(x, y)) for y in range(0, n, 2) for x in range(1, n, 2)]
    x_checks = [((x, y), star(x, y)) for y in range(1, n, 2) for x in range(0, n, 2)]
    x_half = _graph(qubits, z_checks, lambda c: ((c[0] - 1) / 2, c[1] / 2), lambda q: q[0] == 0)
    z_half = _graph(qubits, x_checks, lambda c: ((c[1] - 1) / 2, c[0] / 2), lambda q: q[1] == 0)
    return x_half, z_half, len(qubits)


def rotated_surface_code(distance: int) -> tuple[CheckGraph, CheckGraph, int]:
    """Rotated code with data qubits on a ``d x d`` grid.

    Plaquette ``(i, j)`` covers qubits ``(i..i+1, j..j+1)`` and is a Z check when
    ``i + j`` is even. Weight-2 Z checks sit on the top and bottom edges, weight-2
    X checks on the left and right.
    """
    d = distance
    qubits = [(i, j) for j in range(d) for i in range(d)]
    qset = set(qubits)

    def cell(i, j):
        return [q for q in ((i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)) if q in qset]

    z_checks, x_checks = [], []
    for j in range(-1, d):
        for i in range(-1, d):
            bulk = 0 <= i < d - 1 and 0 <= j < d - 1
            horizontal_edge = 0 <= i < d - 1 and j in (-1, d - 1)
            vertical_edge = 0 <= j < d - 1 and i in (-1, d - 1)
            is_z = (i + j) % 2 == 0
            if (bulk and is_z) or (horizontal_edge and is_z):
                z_checks.append(((i, j), cell(i, j)))
            elif (bulk and not is_z) or (vertical_edge and not is_z):
                x_checks.append(((i, j), cell(i, j)))
    x_half = _graph(qubits, z_checks, lambda c: (c[0] + 0.5, c[1] + 0.5), lambda q: q[0] == 0)
    z_half = _graph(qubits, x_checks, lambda c: (c[1] + 0.5, c[0] + 0.5), lambda q: q[1] == 0)
    return x_half, z_half, len(qubits)


def code_halves(code: str, distance: int) -> tuple[CheckGraph, CheckGraph, int]:
    if distance < 3 or distance % 2 == 0:
        raise ValueError("distance must be an odd integer >= 3")
    if code == "surface":
        return surface_code(distance)
    if code == "rotated_surface":
        return rotated_surface_code(distance)
    raise ValueError(f"unknown code {code!r}; expected one of {CODES}")


@dataclass(frozen=True)
class CodeCapacityContext:
    code: str
    distance: int
    x_half: CheckGraph
    z_half: CheckGraph
    x: DecodeContext
    z: DecodeContext

    @property
    def qubit_count(self) -> int:
        return self.x_half.qubit_count


def build_code_capacity_context(code: str, distance: int, p_x: float, p_z: float) -> CodeCapacityContext:
    for p in (p_x, p_z):
        if not 0.0 <= p < 0.5:
            raise ValueError("priors must lie in [0, 0.5)")
    x_half, z_half, _ = code_halves(code, distance)
    return CodeCapacityContext(
        code, distance, x_half, z_half, build_context(x_half.dem(p_x)), build_context(z_half.dem(p_z))
    )


def decoder_priors(noise: str, p: float) -> tuple[float, float]:
    """Per-half priors: ``(p, p)`` for independent X/Z noise, ``(2p/3, 2p/3)`` for depolarizing."""
    if noise == "uncorrelated":
        return p, p
    if noise == "depolarizing":
        return 2 * p / 3, 2 * p / 3
    raise ValueError(f"unknown noise {noise!r}; expected one of {NOISES}")


def sample_pauli_errors(noise: str, p: float, qubits: int, shots: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """X and Z components of i.i.d. single-qubit errors."""
    rng = np.random.default_rng(seed)
    if noise == "uncorrelated":
        return rng.random((shots, qubits)) < p, rng.random((shots, qubits)) < p
    if noise == "depolarizing":
        u = rng.random((shots, qubits))
        # [0, p/3) is X, [p/3, 2p/3) is Y, [2p/3, p) is Z
        x = u < 2 * p / 3
        z = (u >= p / 3) & (u < p)
        return x, z
    raise ValueError(f"unknown noise {noise!r}; expected one of {NOISES}")


@dataclass(frozen=True)
class CodeCapacityResult:
    shots: int
    failures: int
    x_failures: int
    z_failures: int

    @property
    def logical_error_rate(self) -> float:
        return self.failures / self.shots if self.shots else 0.0


def decode_code_capacity(ctx: CodeCapacityContext, x_syndrome, z_syndrome) -> tuple[int, int]:
    """Most likely (X-logical, Z-logical) flips given both syndromes."""
    return decode(ctx.x, x_syndrome).predicted_class, decode(ctx.z, z_syndrome).predicted_class


def run_code_capacity(
    code: str, distance: int, noise: str, p: float, shots: int, seed: int, threads: int = 1
) -> CodeCapacityResult:
    px, pz = decoder_priors(noise, p)
    ctx = build_code_capacity_context(code, distance, px, pz)
    ex, ez = sample_pauli_errors(noise, p, ctx.qubit_count, shots, seed)
    fails = []
    for half, sub, err in ((ctx.x_half, ctx.x, ex), (ctx.z_half, ctx.z, ez)):
        batch = SyndromeBatch(half.syndromes(err), half.logical_flips(err)[:, None])
        res = decode_batch(sub, batch, threads=threads)
        fails.append(res.predictions != batch.observables[:, 0])
    either = fails[0] | fails[1]
    return CodeCapacityResult(shots, int(either.sum()), int(fails[0].sum()), int(fails[1].sum()))

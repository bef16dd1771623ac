"""Zero-field Ising models on straight-line planar graphs.

The log-partition function is evaluated with the Kac-Ward determinant

    Z = 2^n * prod_e cosh(J_e) * det(I - W)^(1/2),

where ``W`` acts on directed edges: ``W[(i->j), (j->l)] = exp(i*phi/2) * tanh(J_jl)``
for every non-backtracking continuation, ``phi`` being the signed turning angle
between the two segments. The Boltzmann weight of a configuration is
``exp(sum_e J_e s_i s_j)``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .errors import KacWardPhaseError, NonPlanarError, SingularKacWardError, TooManySpinsError

DENSE_SPIN_LIMIT = 64
PHASE_TOLERANCE = 1e-6


def _orientation(ax, ay, bx, by, cx, cy):
    return np.sign((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))


def find_crossing(positions: np.ndarray, edges: np.ndarray, tol: float = 1e-12) -> tuple[int, int] | None:
    """First pair of edges whose straight segments meet outside a shared endpoint.

    Also reports collinear overlaps, an edge running through a vertex, and two
    edges leaving a common vertex in the same direction.
    """
    m = len(edges)
    if m < 2:
        return None
    p = positions[edges[:, 0]]
    q = positions[edges[:, 1]]
    lo = np.minimum(p, q) - tol
    hi = np.maximum(p, q) + tol
    for i in range(m - 1):
        j = np.arange(i + 1, m)
        box = np.all((lo[j] <= hi[i]) & (hi[j] >= lo[i]), axis=1)
        j = j[box]
        if not len(j):
            continue
        a, b = p[i], q[i]
        c, d = p[j], q[j]
        shared = (
            (edges[j, 0] == edges[i, 0])
            | (edges[j, 0] == edges[i, 1])
            | (edges[j, 1] == edges[i, 0])
            | (edges[j, 1] == edges[i, 1])
        )
        o1 = _orientation(a[0], a[1], b[0], b[1], c[:, 0], c[:, 1])
        o2 = _orientation(a[0], a[1], b[0], b[1], d[:, 0], d[:, 1])
        o3 = _orientation(c[:, 0], c[:, 1], d[:, 0], d[:, 1], a[0], a[1])
        o4 = _orientation(c[:, 0], c[:, 1], d[:, 0], d[:, 1], b[0], b[1])
        proper = (o1 * o2 < 0) & (o3 * o4 < 0)
        collinear = (o1 == 0) & (o2 == 0)
        if np.any(proper & ~shared):
            return i, int(j[np.flatnonzero(proper & ~shared)[0]])
        # collinear segments overlap in more than a shared endpoint
        for k in np.flatnonzero(collinear):
            jj = int(j[k])
            if _collinear_overlap(a, b, c[k], d[k], tol):
                return i, jj
        # an endpoint of one segment lying strictly inside the other
        for k in np.flatnonzero(~shared & ((o1 == 0) | (o2 == 0) | (o3 == 0) | (o4 == 0))):
            jj = int(j[k])
            if _touches(a, b, c[k], d[k], tol):
                return i, jj
    return None


def _collinear_overlap(a, b, c, d, tol):
    axis = 0 if abs(b[0] - a[0]) >= abs(b[1] - a[1]) else 1
    s0, s1 = sorted((a[axis], b[axis]))
    t0, t1 = sorted((c[axis], d[axis]))
    return min(s1, t1) - max(s0, t0) > tol


def _on_segment(p, a, b, tol):
    cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
    if abs(cross) > tol:
        return False
    return (min(a[0], b[0]) - tol <= p[0] <= max(a[0], b[0]) + tol) and (
        min(a[1], b[1]) - tol <= p[1] <= max(a[1], b[1]) + tol
    )


def _touches(a, b, c, d, tol):
    return any(
        (
            _on_segment(c, a, b, tol),
            _on_segment(d, a, b, tol),
            _on_segment(a, c, d, tol),
            _on_segment(b, c, d, tol),
        )
    )


class PlanarEmbeddedGraph:
    """A simple graph drawn with straight segments and no crossings.

    Directed edge (dart) ``2e`` runs ``edges[e, 0] -> edges[e, 1]``; ``2e + 1`` is its
    reverse. The rotation system lists darts leaving each vertex counterclockwise.
    """

    def __init__(self, positions, edges, check_crossings: bool = True):
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        n = len(pos)
        if len(e) and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise NonPlanarError("self-loops are not allowed")
        key = np.sort(e, axis=1)
        if len(np.unique(key, axis=0)) != len(key):
            raise NonPlanarError("parallel edges are not allowed")
        if check_crossings:
            hit = find_crossing(pos, e)
            if hit is not None:
                raise NonPlanarError(f"edges {hit[0]} and {hit[1]} cross in the drawing")
        self.positions = pos
        self.edges = e
        self.positions.setflags(write=False)
        self.edges.setflags(write=False)

        tails = np.empty(2 * len(e), dtype=np.int64)
        heads = np.empty(2 * len(e), dtype=np.int64)
        tails[0::2], heads[0::2] = e[:, 0], e[:, 1]
        tails[1::2], heads[1::2] = e[:, 1], e[:, 0]
        delta = pos[heads] - pos[tails]
        self.tails, self.heads = tails, heads
        self.angles = np.arctan2(delta[:, 1], delta[:, 0])
        order = np.lexsort((self.angles, tails))
        degree = np.bincount(tails, minlength=n)
        start = np.concatenate([[0], np.cumsum(degree)[:-1]])
        rank = np.empty(len(order), dtype=np.int64)
        rank[order] = np.arange(len(order)) - start[tails[order]]
        self.degree = degree
        self._rot_order, self._rot_start, self._rot_rank = order, start, rank

    @property
    def vertex_count(self) -> int:
        return len(self.positions)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def rotation(self, v: int) -> np.ndarray:
        """Darts leaving ``v`` in counterclockwise order."""
        s = self._rot_start[v]
        return self._rot_order[s : s + self.degree[v]]

    def is_connected(self) -> bool:
        if self.vertex_count <= 1:
            return True
        adj = sp.coo_matrix(
            (np.ones(len(self.edges)), (self.edges[:, 0], self.edges[:, 1])),
            shape=(self.vertex_count,) * 2,
        )
        ncomp, _ = connected_components(adj, directed=False)
        return ncomp == 1

    def face_successor(self) -> np.ndarray:
        """``next[d]``: the dart following ``d`` along the face on its left."""
        rev = np.arange(len(self.tails)) ^ 1
        v = self.tails[rev]
        r = (self._rot_rank[rev] - 1) % self.degree[v]
        return self._rot_order[self._rot_start[v] + r]

    @functools.cached_property
    def kac_ward_structure(self) -> "KacWardStructure":
        return KacWardStructure.build(self)


@dataclass(frozen=True)
class Faces:
    walks: list[np.ndarray]
    face_of_dart: np.ndarray
    signed_areas: np.ndarray
    outer: int

    def __len__(self) -> int:
        return len(self.walks)


def enumerate_faces(graph: PlanarEmbeddedGraph) -> Faces:
    """Faces of the embedding as dart cycles; the outer face has the most negative area."""
    if not graph.is_connected():
        raise ValueError("face enumeration requires a connected graph")
    nxt = graph.face_successor()
    n_darts = len(nxt)
    face_of = -np.ones(n_darts, dtype=np.int64)
    walks: list[np.ndarray] = []
    for d0 in range(n_darts):
        if face_of[d0] >= 0:
            continue
        walk = [d0]
        face_of[d0] = len(walks)
        d = nxt[d0]
        while d != d0:
            face_of[d] = len(walks)
            walk.append(d)
            d = nxt[d]
        walks.append(np.array(walk, dtype=np.int64))
    if not walks:
        # an isolated vertex has a single (outer) face
        return Faces([np.zeros(0, dtype=np.int64)], face_of, np.zeros(1), 0)
    pos = graph.positions
    areas = np.empty(len(walks))
    for f, w in enumerate(walks):
        a, b = pos[graph.tails[w]], pos[graph.heads[w]]
        areas[f] = 0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1])
    return Faces(walks, face_of, areas, int(np.argmin(areas)))


@dataclass(frozen=True)
class SpinGlassInstance:
    graph: PlanarEmbeddedGraph
    couplings: np.ndarray
    aux_spin: int | None = None

    def __post_init__(self):
        j = np.asarray(self.couplings, dtype=float).reshape(-1)
        if len(j) != self.graph.edge_count:
            raise ValueError("one coupling per edge required")
        if not np.all(np.isfinite(j)):
            raise ValueError("couplings must be finite")
        object.__setattr__(self, "couplings", j)

    @property
    def spin_count(self) -> int:
        return self.graph.vertex_count


@dataclass(frozen=True)
class KacWardStructure:
    """Sparsity pattern and phases of ``I - W`` for one embedded graph."""

    size: int
    indices: np.ndarray
    indptr: np.ndarray
    phases: np.ndarray  # per stored entry; 0 on the diagonal
    edge_of_entry: np.ndarray  # edge whose weight multiplies the entry, -1 on the diagonal

    @classmethod
    def build(cls, g: PlanarEmbeddedGraph) -> "KacWardStructure":
        n_darts = len(g.tails)
        # every dart k = (u->v) continues into each dart leaving v except its reverse
        counts = g.degree[g.heads]
        rows = np.repeat(np.arange(n_darts), counts)
        first = g._rot_start[g.heads]
        within = np.arange(len(rows)) - np.repeat(np.cumsum(counts) - counts, counts)
        cols = g._rot_order[np.repeat(first, counts) + within]
        keep = cols != (rows ^ 1)
        rows, cols = rows[keep], cols[keep]
        turn = g.angles[cols] - g.angles[rows]
        turn = np.mod(turn + np.pi, 2 * np.pi) - np.pi
        phase = np.exp(0.5j * turn)
        all_rows = np.concatenate([np.arange(n_darts), rows])
        all_cols = np.concatenate([np.arange(n_darts), cols])
        all_phase = np.concatenate([np.zeros(n_darts, complex), -phase])
        edge = np.concatenate([-np.ones(n_darts, np.int64), cols // 2])
        order = np.lexsort((all_rows, all_cols))
        indptr = np.searchsorted(all_cols[order], np.arange(n_darts + 1))
        return cls(n_darts, all_rows[order], indptr, all_phase[order], edge[order])

    @functools.cached_property
    def transitions(self) -> sp.csc_matrix:
        """Unweighted phase matrix ``A`` with ``W = A @ diag(tanh J[edge(col)])``."""
        off = self.edge_of_entry >= 0
        data = np.where(off, -self.phases, 0.0)
        a = sp.csc_matrix((data, self.indices, self.indptr), shape=(self.size, self.size))
        a.eliminate_zeros()
        return a

    def matrix(self, couplings: np.ndarray) -> sp.csc_matrix:
        return self.weighted_matrix(np.tanh(np.asarray(couplings, dtype=float)))

    def weighted_matrix(self, weights: np.ndarray) -> sp.csc_matrix:
        """``I - W`` for arbitrary positive edge weights in place of ``tanh J``."""
        w = np.asarray(weights, dtype=float)
        data = np.where(self.edge_of_entry < 0, 1.0 + 0j, self.phases * w[self.edge_of_entry])
        return sp.csc_matrix((data, self.indices, self.indptr), shape=(self.size, self.size))


def _permutation_parity(perm: np.ndarray) -> int:
    """Parity of a permutation via pointer doubling: (n - #cycles) mod 2."""
    n = len(perm)
    if n == 0:
        return 0
    label = np.arange(n)
    jump = np.asarray(perm)
    for _ in range(max(1, math.ceil(math.log2(n))) + 1):
        label = np.minimum(label, label[jump])
        jump = jump[jump]
    cycles = int(np.count_nonzero(label == np.arange(n)))
    return (n - cycles) % 2


def kac_ward_logdet(structure: KacWardStructure, couplings: np.ndarray, dense: bool = False) -> float:
    """Real log det(I - W); raises if the determinant's phase is not ~0."""
    return KacWardFactor(structure, couplings, dense=dense).check().logdet


PIVOT_TOLERANCE = 1e-8
RESOLUTION = 1e-7  # keeps the low-rank log-ratio accurate to about 1e-9


@dataclass(frozen=True)
class DeterminantRatio:
    """``log |det(I - W') / det(I - W)|`` from a low-rank update.

    When the ratio is below what double precision can resolve, ``resolved`` is
    False and ``log_ratio`` is an upper bound rather than the value.
    """

    log_ratio: float
    resolved: bool


class KacWardFactor:
    """LU factorization of ``I - W`` supporting cheap coupling updates.

    Construction never raises on a bad phase; ``well_conditioned`` and
    ``phase_residue`` report the quality so callers can choose which of several
    related matrices to trust, and ``check()`` applies the phase assertion.
    """

    def __init__(
        self,
        structure: KacWardStructure,
        couplings: np.ndarray | None = None,
        dense: bool = False,
        weights: np.ndarray | None = None,
    ):
        # the determinant identity is polynomial in the edge weights, so weights
        # above 1 (no real coupling) are as valid as tanh J
        self.structure = structure
        if weights is None:
            self.couplings = np.asarray(couplings, dtype=float)
            self.weights = np.tanh(self.couplings)
        else:
            self.couplings = None
            self.weights = np.asarray(weights, dtype=float)
        self.dense = dense
        self._lu = None
        self.phase_residue = 0.0
        self.min_pivot = 1.0
        if structure.size == 0:
            self.logdet = 0.0
            return
        mat = structure.weighted_matrix(self.weights)
        if dense:
            lu, piv = sla.lu_factor(mat.toarray(), check_finite=False)
            u = np.diag(lu)
            parity = int(np.count_nonzero(piv != np.arange(len(piv)))) % 2
            self._lu = ("dense", lu, piv)
        else:
            try:
                f = spla.splu(mat, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularKacWardError(str(exc)) from exc
            u = f.U.diagonal()
            parity = _permutation_parity(f.perm_r) ^ _permutation_parity(f.perm_c)
            self._lu = ("sparse", f)
        mag = np.abs(u)
        if np.any(mag == 0) or not np.all(np.isfinite(mag)):
            raise SingularKacWardError("I - W is numerically singular")
        self.logdet = float(np.sum(np.log(mag)))
        self.min_pivot = float(mag.min() / max(1.0, mag.max()))
        self.phase_residue = abs(math.remainder(float(np.sum(np.angle(u))) + math.pi * parity, 2 * math.pi))

    @property
    def well_conditioned(self) -> bool:
        return self.min_pivot > PIVOT_TOLERANCE and self.phase_residue < PHASE_TOLERANCE

    def check(self) -> "KacWardFactor":
        check_phase(self.phase_residue)
        return self

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self._lu[0] == "dense":
            return sla.lu_solve(self._lu[1:], rhs, check_finite=False)
        return self._lu[1].solve(rhs)

    def ratio(self, couplings: np.ndarray) -> DeterminantRatio:
        """Determinant ratio for new couplings differing on a few edges."""
        new = np.asarray(couplings, dtype=float)
        t_old, t_new = self.weights, np.tanh(new)
        edges = np.flatnonzero(t_old != t_new)
        if not len(edges):
            return DeterminantRatio(0.0, True)
        darts = np.concatenate([2 * edges, 2 * edges + 1])
        delta = np.concatenate([t_new[edges] - t_old[edges]] * 2)
        cols = self.structure.transitions[:, darts].toarray()
        x = self.solve(cols.astype(complex))
        small = np.eye(len(darts), dtype=complex) - x[darts, :] * delta[None, :]
        sv = np.linalg.svd(small, compute_uv=False)
        floor = RESOLUTION * sv[0]
        if sv[-1] <= floor:
            return DeterminantRatio(float(np.sum(np.log(np.maximum(sv, floor)))), False)
        sign, logabs = np.linalg.slogdet(small)
        # rounding in the phase grows with the conditioning of the small system
        cond = sv[0] / sv[-1]
        residue = abs(math.remainder(float(np.angle(sign)), 2 * math.pi))
        if residue > max(PHASE_TOLERANCE, 1e-12 * cond):
            if cond < 1e6:
                check_phase(float(np.angle(sign)))
            # the singular values still bound |det| from above
            return DeterminantRatio(float(np.sum(np.log(np.maximum(sv, floor)))), False)
        return DeterminantRatio(float(logabs), True)

    def logdet_with(self, couplings: np.ndarray) -> float:
        r = self.ratio(couplings)
        if not r.resolved:
            raise SingularKacWardError("updated determinant is below double-precision resolution")
        return self.logdet + r.log_ratio


def check_phase(phase: float, tolerance: float = PHASE_TOLERANCE) -> None:
    residue = math.remainder(phase, 2 * math.pi)
    if abs(residue) > tolerance:
        raise KacWardPhaseError(f"det(I - W) has phase {residue:.3e}; the drawing is probably not planar")


def log_partition(instance: SpinGlassInstance, dense: bool | None = None) -> float:
    """Natural log of the partition function ``sum_s exp(sum_e J_e s_i s_j)``."""
    g = instance.graph
    n = g.vertex_count
    j = instance.couplings
    if dense is None:
        dense = n < DENSE_SPIN_LIMIT
    logdet = kac_ward_logdet(g.kac_ward_structure, j, dense=dense)
    return n * math.log(2.0) + float(np.sum(log_cosh(j))) + 0.5 * logdet


def log_cosh(x):
    x = np.abs(np.asarray(x, dtype=float))
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


BRUTE_FORCE_LIMIT = 24


def brute_force_log_partition(instance: SpinGlassInstance | None = None, *, n=None, edges=None, couplings=None) -> float:
    """Exact log Z by enumerating all 2^n spin configurations."""
    if instance is not None:
        n = instance.spin_count
        edges = instance.graph.edges
        couplings = instance.couplings
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    couplings = np.asarray(couplings, dtype=float)
    if n > BRUTE_FORCE_LIMIT:
        raise TooManySpinsError(f"{n} spins exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}")
    if n == 0:
        return 0.0
    chunk_bits = min(n, 16)
    low = ((np.arange(2**chunk_bits)[:, None] >> np.arange(chunk_bits)) & 1).astype(np.int8)
    parts = []
    for high in range(2 ** (n - chunk_bits)):
        hb = ((high >> np.arange(n - chunk_bits)) & 1).astype(np.int8)
        bits = np.hstack([low, np.broadcast_to(hb, (len(low), n - chunk_bits))])
        s = 1 - 2 * bits.astype(np.int8)
        energy = (s[:, edges[:, 0]] * s[:, edges[:, 1]]) @ couplings if len(edges) else np.zeros(len(s))
        parts.append(logsumexp(energy))
    return float(logsumexp(parts))


def enumerate_spin_weights(n: int, edges, couplings):
    """Yield ``(spins, log weight)`` for every configuration; small test helper."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    for s in itertools.product((1, -1), repeat=n):
        s = np.array(s)
        yield s, float(np.sum(couplings * s[edges[:, 0]] * s[edges[:, 1]])) if len(edges) else 0.0

"""Exact maximum-likelihood decoding of graphlike planar DEMs.

The error graph has one vertex per detector plus a left and a right boundary
vertex. Its faces become Ising spins (the unbounded face is the auxiliary spin),
and each mechanism becomes a dual coupling ``J = 1/2 log((1 - p) / p)`` whose sign
is flipped when the mechanism belongs to the reference error. Summing the
Boltzmann weights over all spin configurations sums the probabilities of every
error in the coset of the reference error, twice.

The same coset sum is also the even-subgraph generating function of the error
graph itself, with weight ``exp(-2 sigma_e J_e)`` per mechanism (the
low-temperature expansion of the dual model). Anchored on the coset's most
likely member, every term is at most 1 and the empty subgraph contributes 1,
so this determinant never underflows; the dual determinant instead shrinks
with the class probability squared. Decoding runs on the dual and switches a
class to the primal form when the dual cannot resolve it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components, dijkstra

from .dem import DetectorErrorModel, SyndromeBatch, merge_parallel, validate_graphlike
from .errors import KacWardPhaseError, NoLogicalRepresentativeError, NonPlanarError, UnsatisfiableSyndromeError
from .gf2 import GF2Solver
from .ising import (
    DENSE_SPIN_LIMIT,
    KacWardFactor,
    PHASE_TOLERANCE,
    KacWardStructure,
    PlanarEmbeddedGraph,
    SpinGlassInstance,
    check_phase,
    enumerate_faces,
    find_crossing,
    log_cosh,
)

P_FLOOR = 1e-12
LOG2 = math.log(2.0)
METHODS = ("auto", "dual", "primal")
DENSE_DART_LIMIT = 192
# refining a class the dual cannot resolve needs a matching over this many
# odd vertices at most; beyond it the class stays an upper bound
REFINE_TERMINALS = 48  # measured crossover of dense and sparse LU on the error graph


def clamp_probability(p):
    return np.clip(np.asarray(p, dtype=float), P_FLOOR, 1.0 - P_FLOOR)


def coupling(p):
    """Ising coupling ``1/2 log((1 - p) / p)`` of a mechanism with probability ``p``."""
    p = clamp_probability(p)
    return 0.5 * (np.log1p(-p) - np.log(p))


@dataclass(frozen=True)
class DualBlock:
    """Spin glass dual to one connected component of the error graph.

    ``coupling_map[k, e]`` is ``J_e`` when mechanism ``e`` separates the two faces
    joined by dual edge ``k``; the signed dual couplings are ``coupling_map @ sigma``.
    """

    graph: PlanarEmbeddedGraph
    aux_spin: int
    coupling_map: sp.csr_matrix
    dense: bool

    @property
    def spin_count(self) -> int:
        return self.graph.vertex_count

    def couplings(self, sigma: np.ndarray) -> np.ndarray:
        return self.coupling_map @ sigma

    def factor(self, sigma: np.ndarray) -> KacWardFactor:
        return KacWardFactor(self.graph.kac_ward_structure, self.couplings(sigma), dense=self.dense)

    def log_partition(self, sigma: np.ndarray) -> float:
        f = self.factor(sigma).check()
        return self._assemble(f.couplings, f.logdet)

    def _assemble(self, j: np.ndarray, logdet: float) -> float:
        return self.spin_count * LOG2 + float(np.sum(log_cosh(j))) + 0.5 * logdet


@dataclass(frozen=True)
class DecodeContext:
    """Everything needed to decode syndromes of one DEM.

    Primal edge ``e`` is mechanism ``active[e]`` of ``model``. Vertices
    ``0..detector_count-1`` are detectors; ``left`` and ``right`` are the
    boundary vertices.
    """

    model: DetectorErrorModel
    active: np.ndarray
    probabilities: np.ndarray
    couplings: np.ndarray
    masks: np.ndarray
    primal_positions: np.ndarray
    primal_edges: np.ndarray
    left: int
    right: int
    blocks: tuple[DualBlock, ...]
    edge_block: np.ndarray  # block of each primal edge
    dual_edge: np.ndarray  # dual edge within its block, -1 for bridges
    bridges: np.ndarray
    solver: GF2Solver
    representative: np.ndarray | None
    detached: tuple[tuple[float, int], ...]
    prefactor: float
    observable_count: int
    rep_block: int = -1
    primal: KacWardStructure | None = None
    lengths: sp.csr_matrix | None = None  # |2 J| between primal vertices
    edge_lookup: dict | None = None  # sorted vertex pair -> primal edge

    @property
    def primal_dense(self) -> bool:
        return self.primal.size < DENSE_DART_LIMIT

    @property
    def detector_count(self) -> int:
        return self.model.detector_count

    @property
    def edge_count(self) -> int:
        return len(self.active)

    @property
    def spin_count(self) -> int:
        return sum(b.spin_count for b in self.blocks)

    def incidence(self) -> np.ndarray:
        h = np.zeros((self.detector_count, self.edge_count), dtype=bool)
        for e, (u, v) in enumerate(self.primal_edges):
            for w in (u, v):
                if w < self.detector_count:
                    h[w, e] = True
        return h

    def sigma(self, errors: np.ndarray) -> np.ndarray:
        return 1.0 - 2.0 * np.asarray(errors, dtype=float)

    def dual_instances(self, errors: np.ndarray) -> list[SpinGlassInstance]:
        """Signed dual spin glasses for a primal error (one per block)."""
        s = self.sigma(errors)
        return [SpinGlassInstance(b.graph, b.couplings(s), b.aux_spin) for b in self.blocks]

    def error_log_probability(self, errors: np.ndarray) -> float:
        """log of the probability of one specific primal error pattern."""
        x = np.asarray(errors, dtype=bool)
        p = self.probabilities
        return float(np.sum(np.where(x, np.log(p), np.log1p(-p))))


def _boundary_positions(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if len(coords):
        cmin, cmax = coords[:, 0].min(), coords[:, 0].max()
        mid = 0.5 * (coords[:, 1].min() + coords[:, 1].max())
    else:
        cmin = cmax = mid = 0.0
    return np.array([cmin - 1.0, mid]), np.array([cmax + 1.0, mid])


def _dual_positions(n: int, edges: list[tuple[int, int]]) -> np.ndarray:
    if n == 1:
        return np.zeros((1, 2))
    if n == 2:
        return np.array([[0.0, 0.0], [1.0, 0.0]])
    g = nx.Graph()
    g.add_nodes_from(range(n))
    g.add_edges_from(edges)
    planar, embedding = nx.check_planarity(g)
    if not planar:
        raise NonPlanarError("dual graph is not planar")
    pos = nx.combinatorial_embedding_to_pos(embedding)
    return np.array([pos[i] for i in range(n)], dtype=float)


def build_context(model: DetectorErrorModel) -> DecodeContext:
    """Map a graphlike, coordinated DEM onto planar dual spin glasses."""
    if model.observable_count > 1:
        raise ValueError("only single-observable models are supported")
    validate_graphlike(model)
    model = merge_parallel(model)
    coords = model.coord_array()
    n_det = model.detector_count

    detached = []
    active = []
    for i, m in enumerate(model.mechanisms):
        if m.probability == 0.0:
            continue
        if not m.detectors:
            if m.logical_mask & 1:
                detached.append((float(m.probability), 1))
            continue
        active.append(i)
    active = np.array(active, dtype=np.int64)
    mechs = [model.mechanisms[i] for i in active]
    probs = clamp_probability([m.probability for m in mechs]).reshape(-1)
    couplings = coupling(probs).reshape(-1)
    masks = np.array([m.logical_mask & 1 for m in mechs], dtype=bool)

    left, right = n_det, n_det + 1
    lpos, rpos = _boundary_positions(coords)
    positions = np.vstack([coords.reshape(-1, 2), lpos, rpos])
    cmin, cmax = lpos[0] + 1.0, rpos[0] - 1.0
    edges = np.empty((len(mechs), 2), dtype=np.int64)
    for e, m in enumerate(mechs):
        if len(m.detectors) == 2:
            edges[e] = m.detectors
        else:
            d = m.detectors[0]
            c = coords[d, 0]
            edges[e] = (d, left if c - cmin <= cmax - c else right)

    key = np.sort(edges, axis=1)
    if len(key):
        _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
        if np.any(counts > 1):
            dup = key[first[np.argmax(counts > 1)]]
            raise NonPlanarError(
                f"mechanisms between vertices {tuple(dup)} differ only in their logical effect"
            )
    hit = find_crossing(positions, edges)
    if hit is not None:
        a, b = (model.mechanisms[active[k]].detectors for k in hit)
        raise NonPlanarError(f"mechanisms on detectors {a} and {b} cross in the (column, round) drawing")

    n_vert = n_det + 2
    adj = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_vert, n_vert)).tocsr()
    _, labels = connected_components(adj, directed=False)
    edge_label = labels[edges[:, 0]] if len(edges) else np.zeros(0, dtype=np.int64)

    blocks: list[DualBlock] = []
    edge_block = -np.ones(len(edges), dtype=np.int64)
    dual_edge = -np.ones(len(edges), dtype=np.int64)
    bridges = []
    for comp in np.unique(edge_label):
        e_idx = np.flatnonzero(edge_label == comp)
        verts = np.unique(edges[e_idx])
        local = -np.ones(n_vert, dtype=np.int64)
        local[verts] = np.arange(len(verts))
        sub = PlanarEmbeddedGraph(positions[verts], local[edges[e_idx]], check_crossings=False)
        faces = enumerate_faces(sub)
        bounded = [f for f in range(len(faces)) if f != faces.outer]
        for f in bounded:
            w = faces.walks[f]
            if np.count_nonzero(masks[e_idx[w // 2]]) % 2:
                raise NoLogicalRepresentativeError(
                    "an undetectable cycle of mechanisms flips the observable; the logical class is ill-defined"
                )
        # spins: bounded faces first, aux spin last
        spin_of_face = np.empty(len(faces), dtype=np.int64)
        spin_of_face[bounded] = np.arange(len(bounded))
        spin_of_face[faces.outer] = len(bounded)
        f1 = spin_of_face[faces.face_of_dart[2 * np.arange(len(e_idx))]]
        f2 = spin_of_face[faces.face_of_dart[2 * np.arange(len(e_idx)) + 1]]
        pairs: dict[tuple[int, int], int] = {}
        rows, cols, vals = [], [], []
        for k, (a, b) in enumerate(zip(f1.tolist(), f2.tolist())):
            e = int(e_idx[k])
            edge_block[e] = len(blocks)
            if a == b:
                bridges.append(e)
                continue
            pk = (min(a, b), max(a, b))
            if pk not in pairs:
                pairs[pk] = len(pairs)
            dual_edge[e] = pairs[pk]
            rows.append(pairs[pk])
            cols.append(e)
            vals.append(couplings[e])
        n_spin = len(faces)
        dual_edges = list(pairs)
        dpos = _dual_positions(n_spin, dual_edges)
        dgraph = PlanarEmbeddedGraph(dpos, np.array(dual_edges, dtype=np.int64).reshape(-1, 2))
        cmap = sp.csr_matrix((vals, (rows, cols)), shape=(len(dual_edges), len(edges)))
        blocks.append(DualBlock(dgraph, n_spin - 1, cmap, n_spin < DENSE_SPIN_LIMIT))

    h = np.zeros((n_det, len(edges)), dtype=bool)
    for e, (u, v) in enumerate(edges):
        for w in (u, v):
            if w < n_det:
                h[w, e] = True
    solver = GF2Solver(h)

    representative = None
    rep_block = -1
    if model.observable_count:
        representative = _logical_representative(edges, masks, left, right, n_vert)
        if representative is not None:
            rep_block = int(edge_block[np.flatnonzero(representative)[0]])
    primal = PlanarEmbeddedGraph(positions, edges, check_crossings=False).kac_ward_structure
    # dijkstra treats explicit zeros as missing edges
    ell = np.maximum(np.abs(2.0 * couplings), 1e-300)
    lengths = sp.coo_matrix((ell, (edges[:, 0], edges[:, 1])), shape=(n_vert, n_vert))
    lengths = (lengths + lengths.T).tocsr()

    prefactor = float(np.sum(0.5 * (np.log(probs) + np.log1p(-probs))))
    return DecodeContext(
        model=model,
        active=active,
        probabilities=probs,
        couplings=couplings,
        masks=masks,
        primal_positions=positions,
        primal_edges=edges,
        left=left,
        right=right,
        blocks=tuple(blocks),
        edge_block=edge_block,
        dual_edge=dual_edge,
        bridges=np.array(bridges, dtype=np.int64),
        solver=solver,
        representative=representative,
        detached=tuple(detached),
        prefactor=prefactor,
        observable_count=model.observable_count,
        rep_block=rep_block,
        primal=primal,
        lengths=lengths,
        edge_lookup={(int(min(u, v)), int(max(u, v))): e for e, (u, v) in enumerate(edges)},
    )


def _logical_representative(edges, masks, left, right, n_vert) -> np.ndarray | None:
    """Fewest-mechanism chain from the left to the right boundary.

    ``None`` when no chain joins the boundaries: every undetectable error is
    then a cycle, so the syndrome alone fixes the logical class.
    """
    m = len(edges)
    if not m:
        return None
    # edge-indexed adjacency so the path can be read back as mechanisms
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    eid = np.concatenate([np.arange(m), np.arange(m)])
    adj = sp.csr_matrix((np.ones(2 * m), (src, dst)), shape=(n_vert, n_vert))
    _, pred = breadth_first_order(adj, left, directed=True, return_predecessors=True)
    if pred[right] < 0:
        return None
    lookup = {}
    for s, t, e in zip(src.tolist(), dst.tolist(), eid.tolist()):
        lookup.setdefault((s, t), e)
    rep = np.zeros(m, dtype=bool)
    v = right
    while v != left:
        u = int(pred[v])
        rep[lookup[(u, v)]] = True
        v = u
    if np.count_nonzero(masks[rep]) % 2 == 0:
        raise NoLogicalRepresentativeError("boundary-to-boundary chains do not flip the observable")
    return rep


# ---------------------------------------------------------------------------
# Coset probabilities


def reference_error(ctx: DecodeContext, syndrome) -> np.ndarray:
    """A mechanism subset (over primal edges) whose detector signature is ``syndrome``."""
    gamma = np.asarray(syndrome, dtype=bool).reshape(-1)
    if len(gamma) != ctx.detector_count:
        raise ValueError(f"syndrome has {len(gamma)} bits, model has {ctx.detector_count} detectors")
    return ctx.solver.solve(gamma)


def _class_error(ctx: DecodeContext, e0: np.ndarray, class_bit: int) -> np.ndarray:
    if ctx.representative is None:
        return e0
    base = int(np.count_nonzero(ctx.masks[e0]) % 2)
    return e0 ^ ctx.representative if base != class_bit else e0


def _odd_vertices(ctx: DecodeContext, errors: np.ndarray) -> np.ndarray:
    degree = np.zeros(len(ctx.primal_positions), dtype=np.int64)
    np.add.at(degree, ctx.primal_edges[errors].reshape(-1), 1)
    return np.flatnonzero(degree % 2)


def ground_state(ctx: DecodeContext, errors: np.ndarray) -> np.ndarray:
    """Most likely error in the coset of ``errors``.

    Two errors share a coset exactly when they have the same odd-degree
    vertices, boundary vertices included (the parity at the left boundary
    tells the classes apart). The most likely such error is a minimum-weight
    T-join under lengths ``|2 J|``, found by matching the odd vertices along
    shortest paths. Mechanisms with ``p > 1/2`` start out included.
    """
    base = ctx.couplings < 0
    terminals = _odd_vertices(ctx, np.asarray(errors, dtype=bool) ^ base)
    join = np.zeros(ctx.edge_count, dtype=bool)
    if len(terminals):
        dist, pred = dijkstra(ctx.lengths, indices=terminals, return_predecessors=True)
        g = nx.Graph()
        for a in range(len(terminals)):
            for b in range(a + 1, len(terminals)):
                if np.isfinite(dist[a, terminals[b]]):
                    g.add_edge(a, b, weight=float(dist[a, terminals[b]]))
        for a, b in nx.min_weight_matching(g):
            v, src = int(terminals[b]), int(terminals[a])
            while v != src:
                u = int(pred[a, v])
                join[ctx.edge_lookup[(min(u, v), max(u, v))]] ^= True
                v = u
    return base ^ join


def _primal_factor(ctx: DecodeContext, errors: np.ndarray) -> tuple[KacWardFactor, float]:
    sj = ctx.sigma(ground_state(ctx, errors)) * ctx.couplings
    # P(E ^ C) / P(E) is the product of exp(-2 sigma_e J_e) over the edges of C
    f = KacWardFactor(ctx.primal, dense=ctx.primal_dense, weights=np.exp(-2.0 * sj))
    return f, ctx.prefactor + float(np.sum(sj))


def _primal_log_weight(ctx: DecodeContext, errors: np.ndarray) -> float:
    """log sum of P(E ^ C) over all cycles C, from the error graph's own determinant.

    The coset is re-anchored on its most likely member so that every cycle has
    weight at most 1. Open walks along a long heavy chain still grow
    geometrically, so the matrix is well conditioned only while the most
    likely member is short; the phase check guards the result.
    """
    f, head = _primal_factor(ctx, errors)
    return head + 0.5 * f.check().logdet


def _dual_log_weight(ctx: DecodeContext, errors: np.ndarray) -> tuple[float, float, bool]:
    """Dual evaluation of one coset: ``(log weight, worst phase residue, all blocks well conditioned)``.

    The phase residue tracks the rounding error of a determinant (on the primal
    side pivot sizes span many decades and say little), so it is the common
    yardstick when choosing between the two evaluations.
    """
    s = ctx.sigma(errors)
    total = ctx.prefactor + float(np.dot(s[ctx.bridges], ctx.couplings[ctx.bridges]))
    residue, good = 0.0, True
    for b in ctx.blocks:
        f = b.factor(s)
        residue = max(residue, f.phase_residue)
        good &= f.well_conditioned
        total += b._assemble(f.couplings, f.logdet) - LOG2
    return total, residue, good


def _coset_log_weight(ctx: DecodeContext, errors: np.ndarray, method: str = "auto") -> float:
    """log sum of P(E ^ C) over all cycles C, before detached-logical composition."""
    if method == "primal":
        return _primal_log_weight(ctx, errors)
    _check_method(method)
    value, residue, _ = _dual_log_weight(ctx, errors)
    if method == "auto" and residue > 0 and _refinable(ctx, errors):
        # keep whichever side shows the smaller rounding in its phase
        f, head = _primal_factor(ctx, errors)
        if f.phase_residue < residue:
            value, residue = head + 0.5 * f.logdet, f.phase_residue
    check_phase(residue)
    return value


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _compose_detached(ctx: DecodeContext, logp: np.ndarray) -> np.ndarray:
    lp = np.array(logp, dtype=float)
    for p, _ in ctx.detached:
        a, b = math.log1p(-p), math.log(p)
        lp = np.array([np.logaddexp(lp[0] + a, lp[1] + b), np.logaddexp(lp[1] + a, lp[0] + b)])
    return lp


def _raw_class_log_probs(ctx: DecodeContext, e0: np.ndarray, method: str = "auto") -> tuple[np.ndarray, bool]:
    """Per-class log weights for one satisfiable syndrome; returns ``(log weights, resolved)``.

    ``dual`` leaves a class the low-rank update cannot resolve as an upper
    bound; ``auto`` evaluates such a class on the primal side instead.
    """
    _check_method(method)
    base = int(np.count_nonzero(ctx.masks[e0]) % 2)
    if ctx.representative is None:
        out = np.full(2, -np.inf)
        out[base] = _coset_log_weight(ctx, e0, method)
        return out, True
    errors = {base: e0, 1 - base: e0 ^ ctx.representative}
    if method == "primal":
        return np.array([_primal_log_weight(ctx, errors[c]) for c in (0, 1)]), True
    try:
        out, lost = _dual_class_log_probs(ctx, e0, base)
    except KacWardPhaseError:
        return np.array([_coset_log_weight(ctx, errors[c], "auto") for c in (0, 1)]), True
    if lost >= 0 and method == "auto" and _refinable(ctx, errors[lost]):
        f, head = _primal_factor(ctx, errors[lost])
        if f.phase_residue < PHASE_TOLERANCE:
            out[lost] = head + 0.5 * f.logdet
            lost = -1
    return out, lost < 0


def _refinable(ctx: DecodeContext, errors: np.ndarray) -> bool:
    return len(_odd_vertices(ctx, errors ^ (ctx.couplings < 0))) <= REFINE_TERMINALS


def _anchored_pair(block: DualBlock, f: KacWardFactor, j_other: np.ndarray) -> tuple[float, float, bool]:
    """Block log weights of the anchor class and, by low-rank update, of the other class."""
    r = f.ratio(j_other)
    value = block._assemble(f.couplings, f.logdet) - LOG2
    return value, block._assemble(j_other, f.logdet + r.log_ratio) - LOG2, r.resolved


def _dual_class_log_probs(ctx: DecodeContext, e0: np.ndarray, base: int) -> tuple[np.ndarray, int]:
    """Dual evaluation of both classes; returns the log weights and the unresolved class or -1.

    The block carrying the logical representative is factored for the class
    whose matrix is well conditioned (the likelier one); the other class follows
    from a low-rank determinant update, which loses the class once its
    determinant ratio drops below double precision.
    """
    sig = {base: ctx.sigma(e0)}
    sig[1 - base] = sig[base] * np.where(ctx.representative, -1.0, 1.0)
    out = np.empty(2)
    for c in (0, 1):
        out[c] = ctx.prefactor + float(np.dot(sig[c][ctx.bridges], ctx.couplings[ctx.bridges]))
    lost = -1
    for k, b in enumerate(ctx.blocks):
        if k != ctx.rep_block:
            lz = b.log_partition(sig[0]) - LOG2
            out += lz
            continue
        first = b.factor(sig[base])
        anchor, f = base, first
        if not first.well_conditioned:
            second = b.factor(sig[1 - base])
            if second.well_conditioned or second.min_pivot > first.min_pivot:
                anchor, f = 1 - base, second
        value, other_value, resolved = _anchored_pair(b, f.check(), b.couplings(sig[1 - anchor]))
        if not resolved and other_value > value:
            # the anchor may be the unlikelier class; re-anchor if the other one factors cleanly
            g = b.factor(sig[1 - anchor])
            if g.well_conditioned:
                anchor = 1 - anchor
                value, other_value, resolved = _anchored_pair(b, g.check(), b.couplings(sig[1 - anchor]))
        if not resolved:
            lost = 1 - anchor
        out[anchor] += value
        out[1 - anchor] += other_value
    return out, lost


def coset_log_prob(ctx: DecodeContext, syndrome, class_bit: int, method: str = "auto") -> float:
    """log P(observable = class_bit, syndrome) under the context's model.

    Each class is evaluated from its own full factorization. ``auto`` uses the
    dual spin glass unless one of its determinants is ill conditioned.
    """
    if class_bit not in (0, 1):
        raise ValueError("class_bit must be 0 or 1")
    _check_method(method)
    e0 = reference_error(ctx, syndrome)
    if ctx.representative is None:
        raw = np.full(2, -np.inf)
        raw[int(np.count_nonzero(ctx.masks[e0]) % 2)] = _coset_log_weight(ctx, e0, method)
    else:
        raw = np.array([_coset_log_weight(ctx, _class_error(ctx, e0, c), method) for c in (0, 1)])
    return float(_compose_detached(ctx, raw)[class_bit])


@dataclass(frozen=True)
class DecodeOutcome:
    predicted_class: int
    llr: float
    log_coset: tuple[float, float]
    satisfiable: bool = True
    resolved: bool = True  # False: one class evaded double precision; its log_coset entry is only an upper bound

    @classmethod
    def from_log_probs(cls, lp, resolved: bool = True) -> "DecodeOutcome":
        llr = float(lp[1] - lp[0]) if np.isfinite(lp[0]) or np.isfinite(lp[1]) else 0.0
        return cls(int(llr > 0), llr, (float(lp[0]), float(lp[1])), resolved=resolved)


UNSATISFIABLE = DecodeOutcome(0, 0.0, (-math.inf, -math.inf), satisfiable=False)


def _decode_solved(ctx: DecodeContext, e0: np.ndarray, method: str = "auto") -> DecodeOutcome:
    raw, resolved = _raw_class_log_probs(ctx, e0, method)
    return DecodeOutcome.from_log_probs(_compose_detached(ctx, raw), resolved)


def decode(ctx: DecodeContext, syndrome, method: str = "auto") -> DecodeOutcome:
    """Most likely observable value given the syndrome (ties go to 0)."""
    return _decode_solved(ctx, reference_error(ctx, syndrome), method)


@dataclass(frozen=True)
class BatchResult:
    outcomes: list[DecodeOutcome]
    predictions: np.ndarray
    failures: int | None
    satisfiable: np.ndarray

    @property
    def shots(self) -> int:
        return len(self.outcomes)

    @property
    def unsatisfiable(self) -> int:
        return int(np.count_nonzero(~self.satisfiable))


def count_failures(predictions: np.ndarray, observables: np.ndarray | None, satisfiable: np.ndarray):
    """Shots whose prediction misses the true observable; unsatisfiable shots always fail."""
    if observables is None:
        return None
    truth = np.asarray(observables, dtype=bool)
    truth = truth[:, 0] if truth.ndim == 2 and truth.shape[1] else np.zeros(len(predictions), dtype=bool)
    return int(np.count_nonzero((predictions != truth) | ~satisfiable))


def decode_batch(ctx: DecodeContext, batch: SyndromeBatch, threads: int = 1, method: str = "auto") -> BatchResult:
    """Decode every shot; results keep shot order regardless of ``threads``."""
    if batch.detector_count != ctx.detector_count:
        raise ValueError("batch and context disagree on detector count")
    e0, ok = ctx.solver.solve_batch(batch.detectors)

    def work(rows: range) -> list[DecodeOutcome]:
        return [_decode_solved(ctx, e0[i], method) if ok[i] else UNSATISFIABLE for i in rows]

    n = batch.shots
    if threads <= 1 or n < 2:
        outcomes = work(range(n))
    else:
        step = max(1, -(-n // (4 * threads)))
        chunks = [range(i, min(n, i + step)) for i in range(0, n, step)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = [o for part in pool.map(work, chunks) for o in part]
    pred = np.array([o.predicted_class for o in outcomes], dtype=bool)
    return BatchResult(outcomes, pred, count_failures(pred, batch.observables, ok), ok)

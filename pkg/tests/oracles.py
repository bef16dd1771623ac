"""Independent reference computations used by the tests.

None of these share code paths with the decoder: they enumerate error subsets,
convolve mechanism distributions over syndrome space, or simulate circuits on
a dense state vector.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.special import logsumexp


def all_subsets(n: int) -> np.ndarray:
    return ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)


def syndrome_codes(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    return bits @ (1 << np.arange(bits.shape[-1], dtype=np.int64))


class EnumeratedModel:
    """Every error subset of a small DEM with its log-probability, syndrome and class."""

    def __init__(self, model, max_mechanisms: int = 20):
        n = len(model.mechanisms)
        if n > max_mechanisms:
            raise ValueError(f"{n} mechanisms is too many to enumerate")
        h = model.incidence_matrix().astype(np.int64)
        l = model.logical_vector().astype(np.int64)
        p = model.probabilities()
        x = all_subsets(n).astype(np.int64)
        self.errors = x.astype(bool)
        self.log_weight = x @ np.log(p) + (1 - x) @ np.log1p(-p)
        self.syndromes = (x @ h.T) % 2
        self.codes = syndrome_codes(self.syndromes)
        self.classes = (x @ l) % 2

    def coset_log_prob(self, syndrome, class_bit: int) -> float:
        sel = (self.codes == syndrome_codes(np.asarray(syndrome)[None])[0]) & (self.classes == class_bit)
        return float(logsumexp(self.log_weight[sel])) if sel.any() else -np.inf


def joint_distribution(model) -> np.ndarray:
    """Exact ``P(syndrome code, observable)`` table of shape ``(2**m, 2)``.

    Each independent mechanism XOR-convolves the table with its two outcomes.
    """
    m = model.detector_count
    table = np.zeros((2**m, 2))
    table[0, 0] = 1.0
    codes = np.arange(2**m)
    for mech in model.mechanisms:
        shift = sum(1 << d for d in mech.detectors)
        flip = mech.logical_mask & 1
        moved = np.zeros_like(table)
        moved[codes ^ shift] = table[:, ::-1] if flip else table
        table = (1 - mech.probability) * table + mech.probability * moved
    return table


def min_weight(model, syndrome, weights) -> float:
    """Minimum total weight of an error subset with the given syndrome."""
    enum = EnumeratedModel(model)
    w = enum.errors.astype(float) @ np.asarray(weights, dtype=float)
    sel = enum.codes == syndrome_codes(np.asarray(syndrome)[None])[0]
    return float(w[sel].min())


def kernel_mld(model, syndrome) -> tuple[float, float]:
    """Both coset log-probabilities by enumerating the null space of the incidence matrix.

    A particular solution is found by Gaussian elimination; the coset of
    observable class ``l`` is the set of solutions with that class.
    """
    h = model.incidence_matrix().astype(np.uint8)
    gamma = np.asarray(syndrome, dtype=np.uint8)
    x0, basis = _gf2_solve_and_kernel(h, gamma)
    l = model.logical_vector().astype(np.int64)
    p = model.probabilities()
    lp, lq = np.log(p), np.log1p(-p)
    out = [[], []]
    k = len(basis)
    for chunk in range(0, 2**k, 1 << 14):
        idx = np.arange(chunk, min(2**k, chunk + (1 << 14)))
        coeff = ((idx[:, None] >> np.arange(k)) & 1).astype(np.int64)
        errs = (x0[None, :] + coeff @ basis) % 2
        w = errs @ lp + (1 - errs) @ lq
        cls = (errs @ l) % 2
        for c in (0, 1):
            if np.any(cls == c):
                out[c].append(logsumexp(w[cls == c]))
    return tuple(float(logsumexp(v)) if v else -np.inf for v in out)


def _gf2_solve_and_kernel(h: np.ndarray, b: np.ndarray):
    h = h.copy() % 2
    b = b.copy() % 2
    m, n = h.shape
    aug = np.hstack([h, b[:, None]]).astype(np.uint8)
    pivots = []
    row = 0
    for col in range(n):
        hits = [r for r in range(row, m) if aug[r, col]]
        if not hits:
            continue
        aug[[row, hits[0]]] = aug[[hits[0], row]]
        for r in range(m):
            if r != row and aug[r, col]:
                aug[r] ^= aug[row]
        pivots.append(col)
        row += 1
        if row == m:
            break
    if np.any(aug[row:, n]):
        raise ValueError("inconsistent syndrome")
    x0 = np.zeros(n, dtype=np.int64)
    for r, c in enumerate(pivots):
        x0[c] = aug[r, n]
    free = [c for c in range(n) if c not in pivots]
    basis = np.zeros((len(free), n), dtype=np.int64)
    for k, f in enumerate(free):
        basis[k, f] = 1
        for r, c in enumerate(pivots):
            basis[k, c] = aug[r, f]
    return x0, basis


def cycle_space_log_sum(edges: np.ndarray, signed_couplings: np.ndarray, vertex_count: int) -> float:
    """``log sum_C exp(sum_e J_e (-1)^{C_e})`` over the cycle space of a graph."""
    inc = np.zeros((vertex_count, len(edges)), dtype=np.uint8)
    for e, (u, v) in enumerate(edges):
        inc[u, e] ^= 1
        inc[v, e] ^= 1
    _, basis = _gf2_solve_and_kernel(inc, np.zeros(vertex_count, dtype=np.uint8))
    k = len(basis)
    coeff = ((np.arange(2**k)[:, None] >> np.arange(k)) & 1).astype(np.int64)
    cycles = (coeff @ basis) % 2
    return float(logsumexp((1 - 2 * cycles) @ np.asarray(signed_couplings, dtype=float)))


# ---------------------------------------------------------------------------
# Dense state-vector simulation of a Clifford circuit with injected Paulis

_PAULI = {
    0: np.eye(2, dtype=complex),
    1: np.array([[0, 1], [1, 0]], dtype=complex),
    2: np.array([[0, -1j], [1j, 0]], dtype=complex),
    3: np.array([[1, 0], [0, -1]], dtype=complex),
}


class StateVector:
    def __init__(self, qubits: int):
        self.n = qubits
        self.psi = np.zeros(2**qubits, dtype=complex)
        self.psi[0] = 1.0

    def _apply1(self, gate: np.ndarray, q: int) -> None:
        t = self.psi.reshape([2] * self.n)
        t = np.moveaxis(np.tensordot(gate, t, axes=([1], [q])), 0, q)
        self.psi = t.reshape(-1)

    def pauli(self, q: int, k: int) -> None:
        if k:
            self._apply1(_PAULI[k], q)

    def cx(self, c: int, t: int) -> None:
        idx = np.arange(2**self.n)
        cbit = (idx >> (self.n - 1 - c)) & 1
        src = np.where(cbit == 1, idx ^ (1 << (self.n - 1 - t)), idx)
        self.psi = self.psi[src]

    def prob_one(self, q: int) -> float:
        idx = np.arange(2**self.n)
        return float(np.sum(np.abs(self.psi[((idx >> (self.n - 1 - q)) & 1) == 1]) ** 2))

    def measure(self, q: int) -> int:
        p1 = self.prob_one(q)
        if min(p1, 1 - p1) > 1e-9:
            raise AssertionError(f"measurement of qubit {q} is not deterministic (p1={p1})")
        bit = int(p1 > 0.5)
        return bit

    def reset(self, q: int) -> None:
        if self.measure(q):
            self.pauli(q, 1)


def simulate_with_faults(noisy, faults) -> tuple[np.ndarray, np.ndarray]:
    """Detector and observable bits of one run with the given ``(site, pauli)`` faults."""
    circuit = noisy.circuit
    chosen: dict[int, list[tuple[int, ...]]] = {}
    for s, pauli in faults:
        chosen.setdefault(s, []).append(tuple(pauli))
    by_op: dict[int, list[int]] = {}
    for s, site in enumerate(noisy.sites):
        by_op.setdefault(site.op_index, []).append(s)
    sv = StateVector(circuit.qubit_count)
    records = np.zeros(circuit.measurement_count, dtype=bool)

    def inject(sites):
        for s in sites:
            for pauli in chosen.get(s, ()):
                for q, k in zip(noisy.sites[s].qubits, pauli):
                    sv.pauli(q, k)

    for moment in circuit.moments():
        idx = [k for k, _ in moment]
        inject([s for k in idx for s in by_op.get(k, []) if noisy.sites[s].timing == "before"])
        for _, op in moment:
            if op.kind == "R":
                sv.reset(op.qubits[0])
        for _, op in moment:
            if op.kind == "CX":
                sv.cx(*op.qubits)
        for _, op in moment:
            if op.kind == "M":
                records[op.record] = sv.measure(op.qubits[0])
        inject([s for k in idx for s in by_op.get(k, []) if noisy.sites[s].timing == "after"])
    det = np.array([np.bitwise_xor.reduce(records[list(g)]) for g in circuit.detectors], dtype=bool)
    obs = np.array([np.bitwise_xor.reduce(records[list(g)]) for g in circuit.observables], dtype=bool)
    return det, obs


def pairs(n: int):
    return itertools.combinations(range(n), 2)


def random_planar_graph(rng: np.random.Generator, n: int, keep: float = 0.7):
    """Random connected straight-line planar graph on ``n`` points.

    Edges are a random subset of a Delaunay triangulation that always contains
    a spanning tree.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import minimum_spanning_tree
    from scipy.spatial import Delaunay

    pts = rng.random((n, 2))
    if n == 2:
        return pts, np.array([[0, 1]])
    if n == 3:
        return pts, np.array([[0, 1], [1, 2], [0, 2]])[: 2 + int(rng.random() < keep)]
    tri = Delaunay(pts)
    es = set()
    for s in tri.simplices:
        for a, b in ((0, 1), (1, 2), (0, 2)):
            es.add((min(s[a], s[b]), max(s[a], s[b])))
    es = np.array(sorted(es))
    w = rng.random(len(es)) + 0.1
    tree = minimum_spanning_tree(coo_matrix((w, (es[:, 0], es[:, 1])), shape=(n, n))).tocoo()
    in_tree = {(min(a, b), max(a, b)) for a, b in zip(tree.row, tree.col)}
    chosen = [tuple(e) for e in es if tuple(e) in in_tree or rng.random() < keep]
    return pts, np.array(chosen, dtype=np.int64)


def sample_from_dem(model, shots: int, seed: int):
    """Detector and observable bits from independently drawn DEM mechanisms."""
    rng = np.random.default_rng(seed)
    x = (rng.random((shots, len(model.mechanisms))) < model.probabilities()).astype(np.int64)
    det = (x @ model.incidence_matrix().T.astype(np.int64)) % 2
    obs = (x @ model.logical_vector().astype(np.int64)) % 2
    return det.astype(bool), obs.astype(bool)[:, None]


def spin_sum_log_partition(n: int, edges, couplings) -> float:
    """``log sum_s exp(sum_e J_e s_u s_v)`` by listing all ``2**n`` spin states."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    s = 1 - 2 * all_subsets(n).astype(np.int64)
    energy = (s[:, edges[:, 0]] * s[:, edges[:, 1]]) @ np.asarray(couplings, dtype=float)
    return float(logsumexp(energy))

"""Minimum-weight perfect matching baseline for graphlike DEMs."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from .dem import DetectorErrorModel, SyndromeBatch, merge_parallel, validate_graphlike
from .errors import UnsatisfiableSyndromeError

P_MAX = 0.5 - 1e-12
P_MIN = 1e-12


def matching_weight(p):
    """Edge weight ``log((1 - p) / p)`` with ``p`` clamped into ``[1e-12, 0.5 - 1e-12]``."""
    p = np.clip(np.asarray(p, dtype=float), P_MIN, P_MAX)
    return np.log1p(-p) - np.log(p)


@dataclass(frozen=True)
class MatchingGraph:
    """Detectors plus one boundary node; parallel mechanisms keep only the lightest.

    Between a fixed pair of nodes only the lightest mechanism can appear in a
    minimum-weight solution, so heavier parallel edges are dropped.
    """

    detector_count: int
    edges: np.ndarray  # (m, 2) node pairs; node detector_count is the boundary
    weights: np.ndarray
    masks: np.ndarray  # observable-0 flip per edge
    mechanism_index: np.ndarray  # index into the source model's mechanisms

    @property
    def boundary(self) -> int:
        return self.detector_count

    @property
    def node_count(self) -> int:
        return self.detector_count + 1

    @classmethod
    def from_dem(cls, model: DetectorErrorModel) -> "MatchingGraph":
        validate_graphlike(model)
        n = model.detector_count
        best: dict[tuple[int, int], tuple[float, int, int]] = {}
        for i, m in enumerate(model.mechanisms):
            if not m.detectors or m.probability == 0.0:
                continue
            u = m.detectors[0]
            v = m.detectors[1] if len(m.detectors) == 2 else n
            w = float(matching_weight(m.probability))
            key = (min(u, v), max(u, v))
            cand = (w, i, m.logical_mask & 1)
            if key not in best or cand < best[key]:
                best[key] = cand
        keys = sorted(best)
        edges = np.array(keys, dtype=np.int64).reshape(-1, 2)
        vals = [best[k] for k in keys]
        return cls(
            detector_count=n,
            edges=edges,
            weights=np.array([v[0] for v in vals], dtype=float),
            masks=np.array([v[2] for v in vals], dtype=bool),
            mechanism_index=np.array([v[1] for v in vals], dtype=np.int64),
        )

    def adjacency(self) -> sp.csr_matrix:
        n = self.node_count
        # dijkstra treats explicit zeros as missing edges
        w = np.maximum(self.weights, 1e-300)
        a = sp.coo_matrix((w, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))
        return (a + a.T).tocsr()

    def edge_lookup(self) -> dict[tuple[int, int], int]:
        return {(int(u), int(v)): k for k, (u, v) in enumerate(self.edges)}


@dataclass(frozen=True)
class MatchingResult:
    predicted_class: int
    edges: np.ndarray  # indices into MatchingGraph edges
    weight: float


class MwpmDecoder:
    def __init__(self, model: DetectorErrorModel):
        self.model = merge_parallel(model)
        self.graph = MatchingGraph.from_dem(self.model)
        self._adj = self.graph.adjacency()
        self._lookup = self.graph.edge_lookup()
        self._bdist, self._bpred = dijkstra(self._adj, indices=self.graph.boundary, return_predecessors=True)

    def _path_edges(self, pred_row: np.ndarray, src: int, dst: int) -> list[int]:
        out = []
        v = dst
        while v != src:
            u = int(pred_row[v])
            if u < 0:
                raise UnsatisfiableSyndromeError(f"no path between nodes {src} and {dst}")
            out.append(self._lookup[(min(u, v), max(u, v))])
            v = u
        return out

    def decode(self, syndrome) -> MatchingResult:
        gamma = np.asarray(syndrome, dtype=bool).reshape(-1)
        if len(gamma) != self.graph.detector_count:
            raise ValueError("syndrome length does not match the detector count")
        defects = np.flatnonzero(gamma)
        if not len(defects):
            return MatchingResult(0, np.zeros(0, dtype=np.int64), 0.0)
        dist, pred = dijkstra(self._adj, indices=defects, return_predecessors=True)
        k = len(defects)
        bdist = self._bdist[defects]
        g = nx.Graph()
        # matching a defect pair either directly or by sending both to the boundary
        for a in range(k):
            for b in range(a + 1, k):
                d = dist[a, defects[b]]
                via = bdist[a] + bdist[b]
                w = min(d, via)
                if np.isfinite(w):
                    g.add_edge(a, b, weight=w)
        if k % 2:
            for a in range(k):
                if np.isfinite(bdist[a]):
                    g.add_edge(a, "B", weight=bdist[a])
        nodes = k + (k % 2)
        matching = nx.min_weight_matching(g) if g.number_of_edges() else set()
        if 2 * len(matching) != nodes:
            raise UnsatisfiableSyndromeError("some defect cannot be matched to a partner or the boundary")
        chosen: list[int] = []
        for a, b in sorted(matching, key=lambda e: tuple(map(str, e))):
            if b == "B" or a == "B":
                i = a if b == "B" else b
                chosen += self._path_edges(self._bpred, self.graph.boundary, int(defects[i]))
                continue
            if dist[a, defects[b]] <= bdist[a] + bdist[b]:
                chosen += self._path_edges(pred[a], int(defects[a]), int(defects[b]))
            else:
                chosen += self._path_edges(self._bpred, self.graph.boundary, int(defects[a]))
                chosen += self._path_edges(self._bpred, self.graph.boundary, int(defects[b]))
        # paths may overlap; the correction is their symmetric difference
        counts = np.bincount(np.array(chosen, dtype=np.int64), minlength=len(self.graph.edges))
        used = np.flatnonzero(counts % 2)
        cls = int(np.count_nonzero(self.graph.masks[used]) % 2)
        return MatchingResult(cls, used, float(np.sum(self.graph.weights[used])))

    def signature(self, edges: np.ndarray) -> np.ndarray:
        out = np.zeros(self.graph.node_count, dtype=np.int64)
        for u, v in self.graph.edges[edges]:
            out[u] ^= 1
            out[v] ^= 1
        return out[: self.graph.detector_count].astype(bool)


@dataclass(frozen=True)
class MwpmBatchResult:
    predictions: np.ndarray
    satisfiable: np.ndarray
    failures: int | None

    @property
    def unsatisfiable(self) -> int:
        return int(np.count_nonzero(~self.satisfiable))


def decode_mwpm_batch(decoder: MwpmDecoder, batch: SyndromeBatch, threads: int = 1) -> MwpmBatchResult:
    def one(i: int) -> tuple[int, bool]:
        try:
            return decoder.decode(batch.detectors[i]).predicted_class, True
        except UnsatisfiableSyndromeError:
            return 0, False

    idx = range(batch.shots)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            res = list(pool.map(one, idx))
    else:
        res = [one(i) for i in idx]
    pred = np.array([r[0] for r in res], dtype=bool)
    ok = np.array([r[1] for r in res], dtype=bool)
    failures = None
    if batch.observables is not None:
        truth = batch.observables[:, 0] if batch.observables.shape[1] else np.zeros(batch.shots, dtype=bool)
        failures = int(np.count_nonzero((pred != truth) | ~ok))
    return MwpmBatchResult(pred, ok, failures)


def decode_mwpm(decoder: MwpmDecoder, syndrome) -> MatchingResult:
    return decoder.decode(syndrome)

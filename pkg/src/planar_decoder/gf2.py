"""Linear algebra over GF(2) on bit-packed rows."""

from __future__ import annotations

import numpy as np

from .errors import UnsatisfiableSyndromeError


def _pack(bits: np.ndarray) -> np.ndarray:
    """Pack a 2-D bool array row-wise into uint64 words."""
    bits = np.asarray(bits, dtype=bool)
    rows, cols = bits.shape
    words = max(1, (cols + 63) // 64)
    padded = np.zeros((rows, words * 64), dtype=bool)
    padded[:, :cols] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return packed.view(np.uint64).reshape(rows, words).copy()


def _unpack(words: np.ndarray, cols: int) -> np.ndarray:
    raw = np.ascontiguousarray(words).view(np.uint8)
    return np.unpackbits(raw, axis=1, count=cols, bitorder="little").astype(bool)


class GF2Solver:
    """Row-reduced factorization ``T @ H = R`` of a binary matrix ``H``.

    ``R`` is in reduced row-echelon form with pivot columns ``pivots``; ``T`` is
    invertible. Solving ``H x = b`` reads ``c = T b``: a solution exists iff
    ``c[rank:] == 0``, and ``x[pivots] = c[:rank]`` with all free variables zero.
    """

    def __init__(self, matrix: np.ndarray):
        h = np.asarray(matrix, dtype=bool)
        if h.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        m, n = h.shape
        self.shape = (m, n)
        aug = _pack(np.hstack([h, np.eye(m, dtype=bool)]))
        pivots: list[int] = []
        rank = 0
        for col in range(n):
            if rank == m:
                break
            w, b = divmod(col, 64)
            mask = np.uint64(1) << np.uint64(b)
            has = (aug[rank:, w] & mask) != 0
            hits = np.flatnonzero(has)
            if not len(hits):
                continue
            r = rank + int(hits[0])
            if r != rank:
                aug[[rank, r]] = aug[[r, rank]]
            others = np.flatnonzero((aug[:, w] & mask) != 0)
            others = others[others != rank]
            if len(others):
                aug[others] ^= aug[rank]
            pivots.append(col)
            rank += 1
        full = _unpack(aug, n + m)
        self.rank = rank
        self.pivots = np.array(pivots, dtype=np.int64)
        self.reduced = full[:, :n]
        self.transform = full[:, n:]
        self._transform_f = self.transform.astype(np.float64)

    def solve(self, rhs) -> np.ndarray:
        """One solution of ``H x = rhs``; raises if the system is inconsistent."""
        x, ok = self.solve_batch(np.asarray(rhs, dtype=bool).reshape(1, -1))
        if not ok[0]:
            raise UnsatisfiableSyndromeError("syndrome is outside the column space of the incidence matrix")
        return x[0]

    def solve_batch(self, rhs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve for every row of ``rhs``; returns ``(solutions, consistent)``.

        Rows that are inconsistent get an all-zero solution and ``False``.
        """
        b = np.asarray(rhs, dtype=bool)
        m, n = self.shape
        if b.ndim != 2 or b.shape[1] != m:
            raise ValueError(f"expected right-hand sides with {m} bits")
        c = (b.astype(np.float64) @ self._transform_f.T).astype(np.int64) & 1
        ok = ~np.any(c[:, self.rank :], axis=1)
        x = np.zeros((len(b), n), dtype=bool)
        x[:, self.pivots] = c[:, : self.rank].astype(bool)
        x[~ok] = False
        return x, ok

    def kernel_basis(self) -> np.ndarray:
        """Rows spanning the null space of ``H``."""
        m, n = self.shape
        free = np.setdiff1d(np.arange(n), self.pivots)
        basis = np.zeros((len(free), n), dtype=bool)
        basis[np.arange(len(free)), free] = True
        if self.rank:
            basis[:, self.pivots] = self.reduced[: self.rank][:, free].T
        return basis

    def in_column_space(self, rhs) -> bool:
        return bool(self.solve_batch(np.asarray(rhs, dtype=bool).reshape(1, -1))[1][0])


def rank(matrix: np.ndarray) -> int:
    return GF2Solver(matrix).rank


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product over GF(2) of boolean matrices."""
    return ((np.asarray(a, dtype=np.float64) @ np.asarray(b, dtype=np.float64)).astype(np.int64) & 1).astype(bool)


def span(basis: np.ndarray) -> np.ndarray:
    """Every GF(2) combination of the rows of ``basis`` (2^k rows)."""
    basis = np.asarray(basis, dtype=bool)
    k = len(basis)
    coeffs = ((np.arange(2**k)[:, None] >> np.arange(k)) & 1).astype(bool)
    return matmul(coeffs, basis) if k else np.zeros((1, basis.shape[1]), dtype=bool)

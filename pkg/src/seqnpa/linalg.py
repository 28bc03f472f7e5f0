"""Exact sparse elimination and pseudo-inverse utilities."""
from __future__ import annotations

import heapq
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import SeqNPAError

__all__ = ["AffineParametrization", "affine_parametrization", "PseudoInverse",
           "pseudo_inverse", "pseudo_inverse_apply"]


class InconsistentSystem(SeqNPAError):
    """The affine constraints admit no solution."""


@dataclass(eq=False)
class AffineParametrization:
    """Solution set ``{y : A y = b}`` written as ``y = offset + basis @ t``.

    ``free`` lists the columns left free by elimination; ``t`` holds exactly
    their values, so ``y[free] == t``.
    """

    offset: np.ndarray
    basis: sp.csc_matrix
    free: np.ndarray
    rank: int

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def point(self, t):
        return self.offset + self.basis @ t


def _as_fraction(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    return Fraction(float(v))


def affine_parametrization(rows, rhs, n_cols: int) -> AffineParametrization:
    """Exact Gaussian elimination of ``A y = b`` on sparse rows.

    Rows are ``{col: coefficient}`` mappings (or a scipy sparse matrix).  The
    shortest remaining row is eliminated first, pivoting on its least-used
    column, which keeps fill-in low for the short integer rows produced by
    the hierarchy.  Arithmetic is in exact rationals.

    Raises
    ------
    InconsistentSystem
        If elimination reaches ``0 = nonzero``.
    """
    if sp.issparse(rows):
        csr = sp.csr_matrix(rows)
        rows = [dict(zip(csr.indices[csr.indptr[i]:csr.indptr[i + 1]].tolist(),
                         csr.data[csr.indptr[i]:csr.indptr[i + 1]].tolist()))
                for i in range(csr.shape[0])]
    const = n_cols
    work = []
    for r, b in zip(rows, rhs):
        d = {int(c): _as_fraction(v) for c, v in r.items() if v != 0}
        if b:
            d[const] = -_as_fraction(b)
        work.append(d)

    col_rows = defaultdict(set)
    for i, d in enumerate(work):
        for c in d:
            col_rows[c].add(i)
    heap = [(len(d), i) for i, d in enumerate(work)]
    heapq.heapify(heap)
    alive = [True] * len(work)
    pivots = {}
    order = []
    while heap:
        length, i = heapq.heappop(heap)
        if not alive[i] or length != len(work[i]):
            continue
        row = work[i]
        alive[i] = False
        for c in row:
            col_rows[c].discard(i)
        if not row:
            continue
        candidates = [c for c in row if c != const]
        if not candidates:
            raise InconsistentSystem("constraints imply 0 = nonzero")
        p = min(candidates, key=lambda c: (len(col_rows[c]), c))
        scale = row[p]
        expr = {c: -v / scale for c, v in row.items() if c != p}
        pivots[p] = expr
        order.append(p)
        for j in list(col_rows[p]):
            target = work[j]
            coef = target.pop(p)
            col_rows[p].discard(j)
            for c, v in expr.items():
                nv = target.get(c, 0) + coef * v
                if nv:
                    if c not in target:
                        col_rows[c].add(j)
                    target[c] = nv
                elif c in target:
                    del target[c]
                    col_rows[c].discard(j)
            heapq.heappush(heap, (len(target), j))

    resolved = {}
    for p in reversed(order):
        out = {}
        for c, v in pivots[p].items():
            sub = resolved.get(c)
            if sub is None:
                out[c] = out.get(c, 0) + v
            else:
                for c2, v2 in sub.items():
                    out[c2] = out.get(c2, 0) + v * v2
        resolved[p] = {c: v for c, v in out.items() if v}

    free = np.array(sorted(set(range(n_cols)) - set(resolved)), dtype=np.int64)
    free_pos = {int(c): i for i, c in enumerate(free)}
    offset = np.zeros(n_cols)
    data, ri, ci = [], [], []
    for c in free:
        ri.append(int(c))
        ci.append(free_pos[int(c)])
        data.append(1.0)
    for p, expr in resolved.items():
        for c, v in expr.items():
            if c == const:
                offset[p] = float(v)
            else:
                ri.append(p)
                ci.append(free_pos[c])
                data.append(float(v))
    basis = sp.csc_matrix((data, (ri, ci)), shape=(n_cols, len(free)))
    return AffineParametrization(offset, basis, free, len(resolved))


@dataclass(eq=False)
class PseudoInverse:
    """Thin SVD of ``E`` with singular values below ``rank_tol * s_max`` dropped."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    rank_tol: float

    @property
    def rank(self) -> int:
        return len(self.s)

    @property
    def op_norm(self) -> float:
        """``||E^+||_op``: reciprocal of the smallest retained singular value."""
        return float(1.0 / self.s[-1]) if len(self.s) else 0.0

    def apply(self, y: np.ndarray) -> np.ndarray:
        """``E^+ y``."""
        return self.vt.T @ ((self.u.T @ y) / self.s)

    def project_kernel(self, x: np.ndarray) -> np.ndarray:
        """``(1 - E^+ E) x``: orthogonal projection onto ``ker E``."""
        return x - self.vt.T @ (self.vt @ x)


DENSE_SVD_LIMIT = 40_000_000


def pseudo_inverse(E, rank_tol: float = 1e-10) -> PseudoInverse:
    """Factor ``E`` (dense or sparse) for repeated pseudo-inverse application."""
    shape = E.shape
    if shape[0] * shape[1] > DENSE_SVD_LIMIT:
        raise SeqNPAError(f"constraint map of shape {shape} is too large for a dense SVD")
    dense = E.toarray() if sp.issparse(E) else np.asarray(E, float)
    # the row space is what matters; factor the smaller Gram side when tall
    u, s, vt = np.linalg.svd(dense, full_matrices=False)
    keep = s > rank_tol * (s[0] if len(s) else 0.0)
    return PseudoInverse(u[:, keep], s[keep], vt[keep], rank_tol)


def pseudo_inverse_apply(E, y: np.ndarray, rank_tol: float = 1e-10) -> np.ndarray:
    """``E^+ y`` via thin SVD."""
    return pseudo_inverse(E, rank_tol).apply(np.asarray(y, float))

"""Class-structured SDPs, a bundled ADMM solver and SDPA sparse interop.

A problem is stored in the form produced by the hierarchy: every entry of
the ``m x m`` matrix variable is either a copy of one scalar variable (its
class) or fixed to zero, and the class values ``y`` obey sparse affine rows
``A y = b``.  The program is

    maximize  c . y   subject to  A y = b,  X(y) >= 0.

The solver eliminates ``A y = b`` exactly once (see
:func:`~seqnpa.linalg.affine_parametrization`), so the affine projection
inside the iteration is a small Cholesky solve.
"""
from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import SDPAFormatError, SeqNPAError
from .linalg import affine_parametrization, pseudo_inverse, pseudo_inverse_apply

__all__ = [
    "SdpProblem",
    "SdpSolution",
    "solve",
    "project_psd",
    "min_eigenvalue",
    "pseudo_inverse_apply",
    "export_sdpa",
    "import_sdpa",
    "DEFAULT_TOL",
    "DEFAULT_MAX_ITERS",
]

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 200_000
EIGH_DRIVER = "ev"  # symmetric QR


@dataclass(eq=False)
class SdpProblem:
    """Class-structured SDP in maximization form.

    Attributes
    ----------
    class_matrix : ndarray of int, shape (m, m)
        Variable id of each entry, ``-1`` for entries fixed to zero.
    rows : scipy.sparse.csr_matrix
        Affine rows ``A`` over variables.
    rhs : ndarray
        Right-hand sides ``b``.
    objective : ndarray
        Dense objective ``c`` over variables.
    entry_bound : float or None
        A bound ``|y_i| <= entry_bound`` valid for every feasible point, if
        known.  It makes the dual bound reported by :func:`solve` rigorous.
    """

    class_matrix: np.ndarray
    rows: sp.csr_matrix
    rhs: np.ndarray
    objective: np.ndarray
    entry_bound: Optional[float] = None
    sense: str = "maximize"
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_classes(cls, class_matrix, rows, normalization_class: int = 0,
                     objective=None, entry_bound: Optional[float] = 1.0) -> "SdpProblem":
        """Homogeneous ``rows`` plus the normalization ``y[normalization_class] = 1``."""
        class_matrix = np.asarray(class_matrix, dtype=np.int64)
        n_vars = int(class_matrix.max()) + 1
        rows = sp.csr_matrix(rows, shape=(rows.shape[0], n_vars))
        norm = sp.csr_matrix(([1.0], ([0], [normalization_class])), shape=(1, n_vars))
        A = sp.vstack([rows, norm], format="csr")
        rhs = np.zeros(A.shape[0])
        rhs[-1] = 1.0
        c = np.zeros(n_vars)
        if isinstance(objective, dict):
            for i, v in objective.items():
                c[i] += v
        elif objective is not None:
            c[:] = objective
        return cls(class_matrix, A, rhs, c, entry_bound)

    @property
    def size(self) -> int:
        return self.class_matrix.shape[0]

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def positions(self) -> list:
        """Variable-to-entries map: upper-triangle ``(row, col)`` lists."""
        out = [[] for _ in range(self.n_vars)]
        iu, ju = np.triu_indices(self.size)
        for i, j in zip(iu.tolist(), ju.tolist()):
            c = self.class_matrix[i, j]
            if c >= 0:
                out[c].append((i, j))
        return out

    def validate(self) -> list:
        """All invariant violations (empty when valid)."""
        problems = []
        cm = self.class_matrix
        if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
            return [f"class matrix must be square, got shape {cm.shape}"]
        if not np.array_equal(cm, cm.T):
            problems.append("class matrix is not symmetric")
        if cm.min(initial=0) < -1 or cm.max(initial=-1) >= self.n_vars:
            problems.append("class matrix references unknown variables")
        used = np.zeros(self.n_vars, bool)
        used[cm[cm >= 0]] = True
        for c in np.flatnonzero(~used)[:5]:
            problems.append(f"variable {c} covers no entry")
        if self.rows.shape[1] != self.n_vars:
            problems.append(f"rows have {self.rows.shape[1]} columns, expected {self.n_vars}")
        if self.rows.shape[0] != len(self.rhs):
            problems.append(f"{self.rows.shape[0]} rows but {len(self.rhs)} right-hand sides")
        for name, arr in (("rows", self.rows.data), ("rhs", self.rhs),
                          ("objective", self.objective)):
            if not np.all(np.isfinite(arr)):
                problems.append(f"{name} contain non-finite values")
        if self.sense != "maximize":
            problems.append(f"unsupported sense {self.sense!r}")
        return problems

    def expand(self, y) -> np.ndarray:
        """Matrix ``X(y)``."""
        return np.append(np.asarray(y, float), 0.0)[self.class_matrix]

    def class_sums(self, matrix) -> np.ndarray:
        """Adjoint of :meth:`expand`: ``sum`` of entries over each class."""
        cm = self.class_matrix.ravel()
        mask = cm >= 0
        return np.bincount(cm[mask], weights=np.asarray(matrix, float).ravel()[mask],
                           minlength=self.n_vars)

    def class_counts(self) -> np.ndarray:
        cm = self.class_matrix.ravel()
        return np.bincount(cm[cm >= 0], minlength=self.n_vars).astype(float)

    def class_values(self, matrix) -> np.ndarray:
        """Least-squares class values of a matrix (entry means per class)."""
        return self.class_sums(matrix) / self.class_counts()

    def parametrization(self):
        """Cached exact parametrization of ``{A y = b}``."""
        if "param" not in self._cache:
            self._cache["param"] = affine_parametrization(self.rows, self.rhs, self.n_vars)
        return self._cache["param"]

    def constraint_residual(self, y) -> float:
        """``||A y - b||_inf``."""
        if self.rows.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.rows @ y - self.rhs)))

    def value(self, y) -> float:
        return float(self.objective @ y)


@dataclass
class SdpSolution:
    """Solver output.

    ``value`` is the objective at the returned matrix.  ``certified_value``
    is an upper bound on the optimum obtained from the dual iterate; it is
    rigorous when the problem carries an ``entry_bound`` and ``nan``
    otherwise.  Residual and PSD violation are recomputed from ``matrix``.
    """

    matrix: np.ndarray
    y: np.ndarray
    value: float
    certified_value: float
    residual: float
    psd_violation: float
    iterations: int
    converged: bool
    tol: float
    seed: int

    def summary(self) -> dict:
        return {
            "value": self.value,
            "certified_value": self.certified_value,
            "residual_inf": self.residual,
            "min_eigenvalue": self.psd_violation,
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol,
            "seed": self.seed,
        }


def _eigh(matrix):
    return la.eigh(matrix, driver=EIGH_DRIVER, check_finite=False)


def project_psd(matrix) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clip negative eigenvalues to zero."""
    m = np.asarray(matrix, float)
    m = 0.5 * (m + m.T)
    w, v = _eigh(m)
    if w[0] >= 0:
        return m
    pos = w > 0
    vp = v[:, pos]
    out = (vp * w[pos]) @ vp.T
    return 0.5 * (out + out.T)


def min_eigenvalue(matrix) -> float:
    m = np.asarray(matrix, float)
    return float(la.eigh(0.5 * (m + m.T), eigvals_only=True, driver=EIGH_DRIVER,
                         check_finite=False)[0])


class _AffineSolver:
    """Weighted least squares over ``y = offset + N t``.

    Minimizing ``||X(y) - V||_F^2 - (2/rho) c.y`` reduces to
    ``G t = N^T (s(V) - D offset + c / rho)`` with ``G = N^T D N`` and
    ``D`` the class multiplicities.
    """

    def __init__(self, problem: SdpProblem):
        self.problem = problem
        param = problem.parametrization()
        self.offset = param.offset
        self.N = param.basis.tocsc()
        self.NT = self.N.T.tocsr()
        counts = problem.class_counts()
        self.base = counts * self.offset
        dim = self.N.shape[1]
        if dim:
            G = (self.NT @ sp.diags(counts) @ self.N).toarray()
            self.chol = la.cho_factor(G, lower=True, check_finite=False)
        else:
            self.chol = None
        self.Nc = self.NT @ problem.objective

    def solve(self, sums: np.ndarray, rho: float) -> np.ndarray:
        if self.chol is None:
            return self.offset.copy()
        rhs = self.NT @ (sums - self.base) + self.Nc / rho
        t = la.cho_solve(self.chol, rhs, check_finite=False)
        return self.offset + self.N @ t


def dual_bound(problem: SdpProblem, Y: np.ndarray) -> float:
    """Upper bound on the optimum from any PSD ``Y``.

    For feasible ``y`` and ``Y >= 0``: ``c.y <= (c + X*(Y)).y``.  Writing
    ``y = offset + N t`` with ``t = y[free]`` and ``|t| <= entry_bound``
    bounds the right side by ``q.offset + entry_bound * ||N^T q||_1``.
    """
    param = problem.parametrization()
    q = problem.objective + problem.class_sums(Y)
    slack = np.abs(param.basis.T @ q).sum() if param.dim else 0.0
    if problem.entry_bound is None:
        return float(q @ param.offset) if slack == 0.0 else math.nan
    return float(q @ param.offset + problem.entry_bound * slack)


def solve(problem: SdpProblem, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
          seed: int = 0, rho: float = 1.0, relax: float = 1.6,
          check_every: int = 10) -> SdpSolution:
    """Maximize with ADMM (Douglas-Rachford splitting).

    Alternates the exact affine projection (objective folded in) with the
    PSD projection; ``rho`` is adapted by residual balancing.  Stops when
    the primal gap ``||X - Z||_F``, the dual change and the duality gap are
    all below ``tol``.  The iteration starts from zero and is deterministic;
    ``seed`` is recorded for provenance only.
    """
    problems = problem.validate()
    if problems:
        raise SeqNPAError("invalid problem: " + "; ".join(problems))
    aff = _AffineSolver(problem)
    m = problem.size
    Z = np.zeros((m, m))
    U = np.zeros((m, m))
    y = aff.offset.copy()
    it = 0
    done = False
    scale = 1.0 + np.abs(problem.objective).sum()
    while it < max_iters and not done:
        it += 1
        y = aff.solve(problem.class_sums(Z - U), rho)
        X = problem.expand(y)
        W = relax * X + (1.0 - relax) * Z + U
        Z_old = Z
        Z = project_psd(W)
        U = W - Z
        if it % check_every == 0:
            r = float(np.linalg.norm(X - Z))
            s = rho * float(np.linalg.norm(Z - Z_old))
            if r < tol and s < tol:
                value = problem.value(y)
                bound = dual_bound(problem, -rho * U)
                done = not (bound - value > tol * scale)
            if not done and it % (10 * check_every) == 0:
                if r > 10 * s:
                    rho *= 2.0
                    U /= 2.0
                elif s > 10 * r:
                    rho /= 2.0
                    U *= 2.0
    X = problem.expand(y)
    lam = min_eigenvalue(X)
    res = problem.constraint_residual(y)
    bound = dual_bound(problem, project_psd(-rho * U))
    value = problem.value(y)
    converged = done and res <= tol and lam >= -tol
    return SdpSolution(X, y, value, bound, res, lam, it, bool(converged), tol, seed)


# ---------------------------------------------------------------------------
# SDPA sparse format

def _num(v: float) -> str:
    v = float(v)
    if v == 0.0:
        v = 0.0  # drop the sign of negative zero
    return format(v, ".17g")


def export_sdpa(problem: SdpProblem, destination=None) -> str:
    """Write ``problem`` in SDPA sparse format and return the text.

    SDPA minimizes ``sum c_i x_i`` subject to ``sum_i F_i x_i - F_0 >= 0``.
    Block 1 is the moment matrix (``F_i`` has ones on the entries of
    variable ``i``); block 2 is diagonal and holds each affine row twice,
    as ``a.y - b >= 0`` and ``-a.y + b >= 0``.  ``c = -objective``.
    """
    m = problem.size
    n_rows = problem.rows.shape[0]
    out = io.StringIO()
    out.write("* seqnpa class-structured SDP (maximize -c.x)\n")
    if problem.entry_bound is not None:
        out.write(f"* entry_bound {_num(problem.entry_bound)}\n")
    out.write(f"{problem.n_vars}\n")
    out.write(f"{2 if n_rows else 1}\n")
    out.write(f"{m} -{2 * n_rows}\n" if n_rows else f"{m}\n")
    out.write(" ".join(_num(-v) for v in problem.objective) + "\n")
    for r in range(n_rows):
        b = problem.rhs[r]
        if b != 0.0:
            out.write(f"0 2 {2 * r + 1} {2 * r + 1} {_num(b)}\n")
            out.write(f"0 2 {2 * r + 2} {2 * r + 2} {_num(-b)}\n")
    cols = problem.rows.tocsc()
    for var, entries in enumerate(problem.positions()):
        for i, j in entries:
            out.write(f"{var + 1} 1 {i + 1} {j + 1} 1\n")
        lo, hi = cols.indptr[var], cols.indptr[var + 1]
        for r, a in sorted(zip(cols.indices[lo:hi].tolist(), cols.data[lo:hi].tolist())):
            out.write(f"{var + 1} 2 {2 * r + 1} {2 * r + 1} {_num(a)}\n")
            out.write(f"{var + 1} 2 {2 * r + 2} {2 * r + 2} {_num(-a)}\n")
    text = out.getvalue()
    if destination is not None:
        Path(destination).write_text(text)
    return text


_SPLIT = re.compile(r"[\s,{}()]+")


def _tokens(line):
    return [t for t in _SPLIT.split(line) if t]


def import_sdpa(source) -> SdpProblem:
    """Read an SDPA sparse file written by :func:`export_sdpa`.

    ``source`` is a path or the file text.  Only the class-structured
    layout described in :func:`export_sdpa` is accepted; anything else
    raises :class:`SDPAFormatError` naming the offending line.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    entry_bound = None
    body = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if not s:
            continue
        if s[0] in '*"':
            m = re.match(r"\*\s*entry_bound\s+(\S+)", s)
            if m:
                entry_bound = float(m.group(1))
            continue
        body.append((lineno, s))
    if len(body) < 4:
        raise SDPAFormatError("truncated header", line=body[-1][0] if body else 1)

    def ints(lineno, s, count=None):
        try:
            vals = [int(t) for t in _tokens(s)]
        except ValueError:
            raise SDPAFormatError(f"expected integers, got {s!r}", line=lineno) from None
        if count is not None and len(vals) < count:
            raise SDPAFormatError(f"expected {count} integers", line=lineno)
        return vals

    n_vars = ints(*body[0], 1)[0]
    n_blocks = ints(*body[1], 1)[0]
    if n_blocks not in (1, 2):
        raise SDPAFormatError(f"expected 1 or 2 blocks, got {n_blocks}", line=body[1][0])
    sizes = ints(*body[2], n_blocks)[:n_blocks]
    size = sizes[0]
    if size <= 0:
        raise SDPAFormatError("block 1 must be a dense block", line=body[2][0])
    n_rows = 0
    if n_blocks == 2:
        if sizes[1] >= 0 or sizes[1] % 2:
            raise SDPAFormatError("block 2 must be diagonal of even size", line=body[2][0])
        n_rows = -sizes[1] // 2
    lineno, s = body[3]
    try:
        c = np.array([float(t) for t in _tokens(s)])
    except ValueError:
        raise SDPAFormatError(f"bad objective vector {s!r}", line=lineno) from None
    if len(c) != n_vars:
        raise SDPAFormatError(f"objective has {len(c)} entries, expected {n_vars}",
                              line=lineno)

    class_matrix = np.full((size, size), -1, dtype=np.int64)
    rhs_pos = np.zeros(n_rows)
    rhs_neg = np.zeros(n_rows)
    coef_pos = {}
    coef_neg = {}
    for lineno, s in body[4:]:
        toks = _tokens(s)
        if len(toks) != 5:
            raise SDPAFormatError(f"expected 5 fields, got {len(toks)}", line=lineno)
        try:
            var, blk, i, j = (int(t) for t in toks[:4])
            val = float(toks[4])
        except ValueError:
            raise SDPAFormatError(f"malformed entry {s!r}", line=lineno) from None
        if not 0 <= var <= n_vars:
            raise SDPAFormatError(f"constraint index {var} out of range", line=lineno)
        if blk not in range(1, n_blocks + 1):
            raise SDPAFormatError(f"block index {blk} out of range", line=lineno)
        bsize = size if blk == 1 else 2 * n_rows
        if not (1 <= i <= bsize and 1 <= j <= bsize):
            raise SDPAFormatError(f"entry ({i}, {j}) outside block {blk} of size {bsize} "
                                  "(indices are 1-based)", line=lineno)
        if i > j:
            raise SDPAFormatError(f"entry ({i}, {j}) is below the diagonal", line=lineno)
        if blk == 1:
            if var == 0 or val != 1.0:
                raise SDPAFormatError("moment block entries must be variable entries "
                                      "with value 1", line=lineno)
            if class_matrix[i - 1, j - 1] != -1:
                raise SDPAFormatError(f"entry ({i}, {j}) covered twice", line=lineno)
            class_matrix[i - 1, j - 1] = class_matrix[j - 1, i - 1] = var - 1
        else:
            if i != j:
                raise SDPAFormatError("off-diagonal entry in diagonal block", line=lineno)
            r, neg = divmod(i - 1, 2)
            if var == 0:
                (rhs_neg if neg else rhs_pos)[r] = val
            else:
                (coef_neg if neg else coef_pos)[(r, var - 1)] = val
    if not np.array_equal(rhs_pos, -rhs_neg) or coef_pos != {k: -v for k, v in coef_neg.items()}:
        raise SDPAFormatError("diagonal block is not a list of equality pairs",
                              line=body[-1][0])
    keys = sorted(coef_pos)
    data = [coef_pos[k] for k in keys]
    A = sp.csr_matrix((data, ([k[0] for k in keys], [k[1] for k in keys])),
                      shape=(n_rows, n_vars))
    objective = np.array([-v if v != 0.0 else 0.0 for v in c])
    problem = SdpProblem(class_matrix, A, rhs_pos, objective, entry_bound)
    issues = problem.validate()
    if issues:
        raise SDPAFormatError("; ".join(issues), line=body[-1][0])
    return problem

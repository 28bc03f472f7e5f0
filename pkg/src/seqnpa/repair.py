"""Turning an almost-feasible moment matrix into a feasible one.

Three stages, each with a measured distance:

1. ``project_affine``: ``Gamma_1 = Gamma_comp - E^+ E Gamma_comp`` lands in
   the kernel of the constraint map ``E``.
2. ``mix_to_psd``: a convex combination with a strictly feasible point
   removes the negative eigenvalues of ``Gamma_1``.
3. ``renormalize``: divide by the identity entry.

Every feasible moment matrix of the hierarchy is singular: completeness
forces ``Gamma v = 0`` for ``v = e_1 - sum_a e_{f[a|x]}``, and further kernel
directions follow from positivity.  Strict feasibility is therefore
measured on the minimal face, i.e. on the range of the strictly feasible
point, and ``mu`` is its smallest eigenvalue there.

When positivity forces kernel directions beyond the linear ones (Mermin
level 1, for instance), ``Gamma_1`` can be negative on directions where the
strict point vanishes and mixing cannot help.  :func:`repair` then falls
back to :func:`project_face`, which projects onto ``ker E`` intersected
with the matrices supported on the face.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as la

from .errors import RepairError
from .hierarchy import (
    MomentIndex,
    build_constraints,
    build_index,
    constraint_map,
    evaluate_objective,
    objective_vector,
    smat,
    svec,
    svec_indices,
)
from .linalg import pseudo_inverse
from .sdp import EIGH_DRIVER, min_eigenvalue
from .strategy import classical_strategy, moment_matrix, random_strategy

__all__ = [
    "StrictFeasiblePoint",
    "RepairContext",
    "RepairReport",
    "strict_feasible",
    "project_affine",
    "project_face",
    "mix_to_psd",
    "renormalize",
    "repair",
    "op_norm",
    "structural_kernel",
]

FACE_TOL = 1e-10
PSD_TOL = 1e-12


def op_norm(matrix) -> float:
    """Spectral norm of a symmetric matrix via the symmetric eigensolver."""
    m = np.asarray(matrix, float)
    if m.size == 0:
        return 0.0
    w = la.eigh(0.5 * (m + m.T), eigvals_only=True, driver=EIGH_DRIVER, check_finite=False)
    return float(max(abs(w[0]), abs(w[-1])))


def _spectrum(matrix):
    m = np.asarray(matrix, float)
    return la.eigh(0.5 * (m + m.T), driver=EIGH_DRIVER, check_finite=False)


@dataclass(eq=False)
class StrictFeasiblePoint:
    """Strictly feasible anchor for positivity restoration.

    Attributes
    ----------
    gamma : ndarray
        The moment matrix.
    mu : float
        Smallest eigenvalue on the face (eigenvalues above
        ``FACE_TOL * lambda_max``).
    face : ndarray
        Orthonormal basis of the face (columns).
    lambda_min : float
        Smallest eigenvalue of the whole matrix (zero up to rounding).
    provenance : dict
        Seeds, sample count and mixture weights.
    """

    gamma: np.ndarray
    mu: float
    face: np.ndarray
    lambda_min: float
    provenance: dict

    @property
    def face_dim(self) -> int:
        return self.face.shape[1]

    @classmethod
    def from_gamma(cls, gamma, provenance: Optional[dict] = None) -> "StrictFeasiblePoint":
        """Recompute face and ``mu`` of a stored matrix."""
        gamma = np.asarray(gamma, float)
        w, v = _spectrum(gamma)
        keep = w > FACE_TOL * w[-1]
        return cls(gamma, float(w[keep][0]), v[:, keep], float(w[0]), dict(provenance or {}))

    def save(self, path) -> None:
        np.savez(path, gamma=self.gamma, provenance=json.dumps(self.provenance))

    @classmethod
    def load(cls, path) -> "StrictFeasiblePoint":
        with np.load(path) as data:
            return cls.from_gamma(data["gamma"], json.loads(str(data["provenance"])))


def _sample_average(game, index, seeds, dims):
    total = np.zeros((index.size, index.size))
    for s in seeds:
        total += moment_matrix(random_strategy(game, dims, seed=s), index)
    return total / len(seeds)


def strict_feasible(game, scheme, samples: int = 64, seed: int = 0, dims=None,
                    max_retries: int = 3, index: Optional[MomentIndex] = None,
                    mu_floor: float = 1e-8) -> StrictFeasiblePoint:
    """Average of random strategies mixed 50/50 with uniform classical noise.

    The sample count doubles until the face dimension (numerical rank)
    stops growing and ``mu >= mu_floor``.

    Raises
    ------
    RepairError
        If the conditions still fail after ``max_retries`` doublings.
    """
    index = index or build_index(game, scheme)
    dims = tuple(dims) if dims is not None else (2,) * game.k
    noise = moment_matrix(classical_strategy(game, noisy=True), index)
    seeds = list(range(seed, seed + samples))
    avg = _sample_average(game, index, seeds, dims)
    prev_rank = -1
    for attempt in range(max_retries + 1):
        gamma = 0.5 * avg + 0.5 * noise
        w, v = _spectrum(gamma)
        keep = w > FACE_TOL * w[-1]
        rank = int(keep.sum())
        mu = float(w[keep][0])
        if rank == prev_rank and mu >= mu_floor:
            return StrictFeasiblePoint(gamma, mu, v[:, keep], float(w[0]), {
                "seed": seed, "samples": len(seeds), "dims": list(dims),
                "weights": {"random_average": 0.5, "uniform_noise": 0.5},
                "attempts": attempt + 1})
        prev_rank = rank
        if attempt == max_retries:
            break
        more = list(range(seeds[-1] + 1, seeds[-1] + 1 + len(seeds)))
        avg = 0.5 * avg + 0.5 * _sample_average(game, index, more, dims)
        seeds += more
    raise RepairError(f"no strictly feasible point after {len(seeds)} samples "
                      f"(face rank {rank}, mu {mu:.3g}); increase --samples")


def structural_kernel(problem, tol: float = 1e-9) -> np.ndarray:
    """Common kernel of every matrix satisfying the linear constraints.

    Computed as the kernel of ``sum_i M_i^2`` over a basis ``M_i`` of the
    solution space of the constraint rows (homogeneous, so the
    normalization offset counts as one more direction).
    """
    par = problem.parametrization()
    total = np.zeros((problem.size, problem.size))
    basis = par.basis.tocsc()
    for i in range(-1, par.dim):
        y = par.offset if i < 0 else basis[:, i].toarray().ravel()
        m = problem.expand(y)
        total += m @ m
    w, v = np.linalg.eigh(total)
    return v[:, w <= tol * w[-1]]


@dataclass(eq=False)
class RepairContext:
    """Constraint map, its pseudo-inverse and the strict point for one instance."""

    index: MomentIndex
    cmap: object
    pinv: object
    strict: StrictFeasiblePoint
    objective: dict
    _face_pinv: object = field(default=None, repr=False)

    @classmethod
    def build(cls, game, scheme, samples: int = 64, seed: int = 0,
              rank_tol: float = 1e-10, strict: Optional[StrictFeasiblePoint] = None):
        index = build_index(game, scheme)
        system = build_constraints(index)
        cmap = constraint_map(index, system)
        pinv = pseudo_inverse(cmap.matrix, rank_tol)
        if strict is None:
            strict = strict_feasible(game, scheme, samples=samples, seed=seed, index=index)
        return cls(index, cmap, pinv, strict, objective_vector(game, index))

    def residual(self, gamma) -> float:
        g = np.asarray(gamma, float)
        return float(np.linalg.norm(self.cmap(0.5 * (g + g.T))))

    def face_pinv(self):
        """Pseudo-inverse of ``S -> E(B S B^T)`` with ``B`` the face basis (cached)."""
        if self._face_pinv is None:
            B = self.strict.face
            r = B.shape[1]
            iu, ju, wts = svec_indices(r)
            lift = np.empty((self.cmap.matrix.shape[1], len(iu)))
            for c, (i, j) in enumerate(zip(iu, ju)):
                # B S B^T for the unit svec coordinate c
                outer = np.outer(B[:, i], B[:, j]) / wts[c]
                lift[:, c] = svec(outer + outer.T if i != j else outer)
            self._face_pinv = pseudo_inverse(self.cmap.matrix @ lift)
        return self._face_pinv


@dataclass
class RepairReport:
    """Measured quantities of one repair run (all norms are spectral unless noted)."""

    input_residual: float
    pinv_norm: float
    dist_project: float
    dist_mix: float
    dist_normalize: float
    mix_weight: float
    lambda_min_projected: float
    lambda_min_final: float
    final_residual: float
    total_distance: float
    projection_bound: float
    normalization_entry: float
    score_input: float
    score_repaired: float
    score_gap_bound: float
    extra: dict = field(default_factory=dict)

    def check(self) -> list:
        """Invariant violations of the report (empty when consistent)."""
        problems = []
        stages = self.dist_project + self.dist_mix + self.dist_normalize
        if self.total_distance > stages + 1e-12:
            problems.append("total distance exceeds the sum of stage distances")
        if self.dist_project > self.projection_bound + 1e-10:
            problems.append("projection distance exceeds ||E^+|| ||E(Gamma)||")
        if abs(self.score_input - self.score_repaired) > self.score_gap_bound + 1e-12:
            problems.append("score moved more than ||beta||_1 ||delta||_max")
        return problems

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")


def project_affine(gamma, ctx: RepairContext):
    """``(Gamma_1, distance, bound)`` with ``Gamma_1`` in ``ker E``."""
    g = np.asarray(gamma, float)
    g = 0.5 * (g + g.T)
    size = g.shape[0]
    x = svec(g)
    r = ctx.cmap.matrix @ x
    g1 = smat(ctx.pinv.project_kernel(x), size)
    dist = op_norm(g1 - g)
    bound = ctx.pinv.op_norm * float(np.linalg.norm(r))
    return g1, dist, bound


def project_face(gamma, ctx: RepairContext):
    """Project onto ``ker E`` within matrices ``B S B^T`` supported on the face.

    ``S -> B S B^T`` is an isometry, so the result is the Frobenius-nearest
    such matrix.  Returns ``(Gamma_1, distance, bound, off_face)`` where
    ``off_face = ||Gamma - P Gamma P||_op`` and
    ``bound = off_face + ||E_B^+||_op ||E(P Gamma P)||_2``.
    """
    g = np.asarray(gamma, float)
    g = 0.5 * (g + g.T)
    B = ctx.strict.face
    inner = B.T @ g @ B
    on_face = B @ inner @ B.T
    pinv = ctx.face_pinv()
    g1 = B @ smat(pinv.project_kernel(svec(inner)), B.shape[1]) @ B.T
    g1 = 0.5 * (g1 + g1.T)
    off = op_norm(g - on_face)
    bound = off + pinv.op_norm * float(np.linalg.norm(ctx.cmap(on_face)))
    return g1, op_norm(g1 - g), bound, off


def mix_to_psd(gamma1, strict: StrictFeasiblePoint):
    """``(Gamma_2, t)`` with ``t = delta / (mu + delta)``, ``delta = max(0, -lambda_min)``.

    Raises
    ------
    RepairError
        If the mixture is still not PSD, which means ``Gamma_1`` has negative
        directions outside the face of the strict point.
    """
    if strict.mu <= 0:
        raise RepairError("strict point has mu <= 0")
    lam = min_eigenvalue(gamma1)
    # rounding leaves singular PSD inputs at about -1e-15; treat those as PSD
    delta = -lam if lam < -PSD_TOL else 0.0
    t = delta / (strict.mu + delta)
    g2 = gamma1 if t == 0.0 else (1.0 - t) * gamma1 + t * strict.gamma
    lam2 = min_eigenvalue(g2)
    if lam2 < -max(PSD_TOL, 1e-9 * delta):
        raise RepairError(f"mixture still has eigenvalue {lam2:.3g}: the projected matrix "
                          "leaves the face of the strictly feasible point")
    return g2, t


def renormalize(gamma2) -> np.ndarray:
    g = np.asarray(gamma2, float)
    z = g[0, 0]
    if not z > 0.5:
        raise RepairError(f"normalization entry {z:.3g} is not above 1/2")
    out = g / z
    out[0, 0] = 1.0
    return out


def repair(gamma_comp, ctx: RepairContext, face: str = "auto"):
    """Run the three stages and measure every distance.

    ``face`` selects the projection: ``"never"`` uses :func:`project_affine`
    only, ``"always"`` uses :func:`project_face`, and ``"auto"`` falls back
    to the face projection when mixing after the plain one fails.

    Returns
    -------
    (ndarray, RepairReport)
    """
    g = np.asarray(gamma_comp, float)
    g = 0.5 * (g + g.T)
    if g.shape != (ctx.index.size, ctx.index.size):
        raise RepairError(f"matrix shape {g.shape} does not match the index")
    lam_in = min_eigenvalue(g)
    if lam_in < -1e-8:
        raise RepairError(f"input is not PSD (lambda_min {lam_in:.3g})")
    if not 0.9 <= g[0, 0] <= 1.1:
        raise RepairError(f"input normalization {g[0, 0]:.6g} outside [0.9, 1.1]")
    if face not in ("auto", "never", "always"):
        raise ValueError(f"face must be auto, never or always, not {face!r}")
    in_res = ctx.residual(g)
    restricted, off = face == "always", 0.0
    if not restricted:
        g1, d1, bound = project_affine(g, ctx)
        try:
            g2, t = mix_to_psd(g1, ctx.strict)
        except RepairError:
            if face == "never":
                raise
            restricted = True
    if restricted:
        g1, d1, bound, off = project_face(g, ctx)
        g2, t = mix_to_psd(g1, ctx.strict)
    lam1 = min_eigenvalue(g1)
    d2 = op_norm(g2 - g1)
    out = renormalize(g2)
    d3 = op_norm(out - g2)
    beta_l1 = float(sum(abs(v) for v in ctx.objective.values()))
    report = RepairReport(
        input_residual=in_res,
        pinv_norm=ctx.pinv.op_norm,
        dist_project=d1,
        dist_mix=d2,
        dist_normalize=d3,
        mix_weight=t,
        lambda_min_projected=lam1,
        lambda_min_final=min_eigenvalue(out),
        final_residual=ctx.residual(out),
        total_distance=op_norm(out - g),
        projection_bound=bound,
        normalization_entry=float(g2[0, 0]),
        score_input=evaluate_objective(ctx.objective, ctx.index, g),
        score_repaired=evaluate_objective(ctx.objective, ctx.index, out),
        score_gap_bound=beta_l1 * float(np.max(np.abs(out - g))),
        extra={"mu": ctx.strict.mu, "normalization_drift": abs(g1[0, 0] - 1.0),
               "gamma1_minus_gamma2_bound": t * op_norm(g1 - ctx.strict.gamma),
               "face_restricted": restricted, "off_face_distance": off,
               "face_pinv_norm": ctx.face_pinv().op_norm if restricted else None},
    )
    problems = report.check()
    if problems:
        raise RepairError("; ".join(problems))
    return out, report

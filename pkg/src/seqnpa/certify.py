"""Audits: flatness, soundness against simulated strategies, monotonicity, norm bound.

Every audit returns an :class:`AuditReport` whose text form ends with one
machine-readable line ``RESULT <name> PASS|FAIL key=value ...``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .game import NonlocalGame
from .hierarchy import assemble, build_index
from .sdp import DEFAULT_TOL, SdpSolution, solve
from .strategy import ghz_strategy, random_strategy, score, tsirelson_strategy
from .words import LevelScheme

__all__ = [
    "FlatnessVerdict",
    "AuditReport",
    "flatness",
    "audit_soundness",
    "audit_monotonicity",
    "audit_norm_bound",
    "solve_level",
    "reference_strategies",
]

SOUNDNESS_SLACK = 1e-6
MONOTONE_SLACK = 1e-6


@dataclass
class FlatnessVerdict:
    rank_full: int
    rank_principal: int
    singular_full: list
    singular_principal: list
    threshold: float
    flat: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _rank(sv: np.ndarray, cutoff: float) -> int:
    return int(np.sum(sv >= cutoff))


def flatness(gamma, index, threshold: float = 1e-6) -> FlatnessVerdict:
    """Compare numerical ranks of ``Gamma`` and its degree ``n-1`` block.

    Singular values count when they reach ``threshold * sigma_max(Gamma)``,
    so the verdict is invariant under positive scaling.
    """
    g = np.asarray(gamma, float)
    n = index.n
    if n < 1:
        raise ValueError("flatness needs level n >= 1")
    block = index.principal_positions(n - 1)
    sv = np.linalg.svd(g, compute_uv=False)
    sv_p = np.linalg.svd(g[np.ix_(block, block)], compute_uv=False)
    cutoff = threshold * (sv[0] if len(sv) else 0.0)
    r_full, r_p = _rank(sv, cutoff), _rank(sv_p, cutoff)
    return FlatnessVerdict(r_full, r_p, sv.tolist(), sv_p.tolist(), threshold,
                           bool(r_full == r_p))


@dataclass
class AuditReport:
    name: str
    passed: bool
    summary: dict
    details: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    def result_line(self) -> str:
        items = " ".join(f"{k}={_fmt(v)}" for k, v in self.summary.items())
        return f"RESULT {self.name} {'PASS' if self.passed else 'FAIL'} {items}"

    def to_text(self) -> str:
        lines = [f"audit: {self.name}"]
        for k, v in self.inputs.items():
            lines.append(f"input {k}: {v}")
        for k, v in self.details.items():
            lines.append(f"{k}: {json.dumps(v, default=_json_default)}")
        lines.append(self.result_line())
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "summary": self.summary,
                "details": self.details, "inputs": self.inputs}


def _fmt(v):
    return f"{v:.10g}" if isinstance(v, float) else str(v)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def solve_level(game: NonlocalGame, scheme, tol: float = DEFAULT_TOL, **opts):
    """Assemble and solve; returns ``(solution, index)``."""
    problem, index, _ = assemble(game, scheme)
    return solve(problem, tol=tol, **opts), index


def reference_strategies(game: NonlocalGame) -> dict:
    """Known optimal constructions that apply to ``game``'s alphabets."""
    out = {}
    if tuple(game.answers) == (2, 2) and tuple(game.questions) == (2, 2):
        out["tsirelson"] = tsirelson_strategy(game)
    if tuple(game.answers) == (2, 2, 2) and tuple(game.questions) == (2, 2, 2):
        out["ghz"] = ghz_strategy(game)
    return out


def _scheme_str(scheme) -> str:
    return str(LevelScheme.full(scheme) if isinstance(scheme, int) else scheme)


def audit_soundness(game: NonlocalGame, scheme, strategies: int = 100, seed: int = 0,
                    dims=None, tol: float = DEFAULT_TOL,
                    solution: Optional[SdpSolution] = None) -> AuditReport:
    """Every simulated score must stay below the hierarchy value plus ``1e-6``.

    Samples ``strategies`` random dilated strategies with seeds
    ``seed..seed+strategies-1`` and adds the reference constructions.
    """
    if solution is None:
        solution, _ = solve_level(game, scheme, tol=tol)
    value = solution.value
    rows = []
    for i in range(strategies):
        s = seed + i
        sc = score(random_strategy(game, dims, seed=s), game)
        rows.append({"strategy": f"seed={s}", "score": sc})
    for name, strat in reference_strategies(game).items():
        rows.append({"strategy": name, "score": score(strat, game)})
    violations = [r for r in rows if r["score"] > value + SOUNDNESS_SLACK]
    best = max(rows, key=lambda r: r["score"])
    summary = {
        "value": value,
        "certified_value": solution.certified_value,
        "max_score": best["score"],
        "max_gap": best["score"] - value,
        "best_strategy": best["strategy"],
        "violations": len(violations),
        "converged": solution.converged,
    }
    return AuditReport(
        "soundness", not violations, summary,
        details={"violating": violations, "scores": rows},
        inputs={"game": game.name, "game_digest": game.digest(),
                "scheme": _scheme_str(scheme), "seed": seed, "strategies": strategies})


def audit_monotonicity(game: NonlocalGame, n_max: int = 2, tol: float = DEFAULT_TOL,
                       solutions: Optional[dict] = None) -> AuditReport:
    """Values at levels ``1..n_max`` must be nonincreasing within ``1e-6``."""
    if n_max < 2:
        raise ValueError("monotonicity needs n_max >= 2")
    solutions = dict(solutions or {})
    values = {}
    for n in range(1, n_max + 1):
        if n not in solutions:
            solutions[n], _ = solve_level(game, n, tol=tol)
        values[n] = solutions[n].value
    bad = [(n, values[n - 1], values[n]) for n in range(2, n_max + 1)
           if values[n] > values[n - 1] + MONOTONE_SLACK]
    summary = {f"value_n{n}": v for n, v in values.items()}
    summary["violations"] = len(bad)
    return AuditReport("monotonicity", not bad, summary,
                       details={"increases": bad,
                                "converged": {n: s.converged for n, s in solutions.items()}},
                       inputs={"game": game.name, "game_digest": game.digest(),
                               "n_max": n_max})


def audit_norm_bound(gamma, index) -> AuditReport:
    """Pass iff ``||Gamma||_op <= |words| + 1e-8``."""
    g = np.asarray(gamma, float)
    n_words = index.size if hasattr(index, "size") else int(index)
    norm = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (g + g.T))))) if g.size else 0.0
    passed = norm <= n_words + 1e-8
    return AuditReport("norm-bound", passed, {"op_norm": norm, "words": n_words})

"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records one PASS/FAIL line that pytest prints in the
"acceptance criteria" section of its terminal summary (see conftest.py).
"""
import math
import time

import numpy as np
import pytest

from conftest import CRITERIA
from seqnpa.bipartite import build_bipartite
from seqnpa.certify import audit_monotonicity, audit_norm_bound, audit_soundness
from seqnpa.game import classical_value
from seqnpa.hierarchy import assemble, residual
from seqnpa.repair import RepairContext, repair, strict_feasible
from seqnpa.sdp import export_sdpa, import_sdpa, min_eigenvalue, solve
from seqnpa.strategy import ghz_strategy, moment_matrix, perturb, random_strategy, score, tsirelson_strategy
from seqnpa.words import Word, adjoint, apply_hom, multiply, reduce_word

from wordtools import Representation, random_word, rewrite_randomly

COS2 = math.cos(math.pi / 8) ** 2
CASES = 10_000


def record(number, passed, detail):
    CRITERIA.append((number, bool(passed), detail))
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def test_criterion_01_chsh_value(chsh):
    t0 = time.perf_counter()
    sol = solve(assemble(chsh, 1)[0])
    elapsed = time.perf_counter() - t0
    err = abs(sol.value - COS2)
    record(1, sol.converged and err <= 1e-3 and elapsed < 30,
           f"value={sol.value:.9f} |value-cos^2(pi/8)|={err:.2e} (tol 1e-3) "
           f"time={elapsed:.2f}s (<30s)")


def test_criterion_02_chsh_classical(chsh):
    t0 = time.perf_counter()
    value = classical_value(chsh)
    elapsed = time.perf_counter() - t0
    record(2, value == 0.75 and elapsed < 1, f"classical={value!r} (exactly 0.75) "
           f"time={elapsed:.4f}s (<1s)")


def test_criterion_03_mermin(mermin):
    t0 = time.perf_counter()
    sol = solve(assemble(mermin, 1)[0])
    ghz = score(ghz_strategy(mermin), mermin)
    cv = classical_value(mermin)
    elapsed = time.perf_counter() - t0
    ok = (sol.converged and abs(sol.value - 4) <= 1e-2 and abs(ghz - 4) <= 1e-9
          and cv == 2.0 and elapsed < 300)
    record(3, ok, f"value={sol.value:.9f} (4 +- 1e-2) ghz={ghz:.12f} (4 +- 1e-9) "
           f"classical={cv!r} (exactly 2) time={elapsed:.1f}s (<300s)")


def test_criterion_04_soundness(chsh, mermin, chsh1, mermin1):
    details, ok = [], True
    for game, inst in ((chsh, chsh1), (mermin, mermin1)):
        rep = audit_soundness(game, 1, strategies=100, seed=0, solution=inst.solution)
        n_random = sum(1 for r in rep.details["scores"] if r["strategy"].startswith("seed="))
        ok = ok and rep.passed and n_random == 100
        details.append(f"{game.name}: {n_random} strategies, max_gap={rep.summary['max_gap']:.2e}"
                       f" violations={rep.summary['violations']}")
    record(4, ok, "; ".join(details) + " (slack 1e-6)")


def test_criterion_05_monotonicity(chsh, chsh1, chsh2):
    rep = audit_monotonicity(chsh, n_max=2, solutions={1: chsh1.solution, 2: chsh2.solution})
    v1, v2 = rep.summary["value_n1"], rep.summary["value_n2"]
    record(5, rep.passed and chsh2.solution.converged,
           f"n=1: {v1:.10f} n=2: {v2:.10f} increase={v2 - v1:.2e} (<= 1e-6)")


def test_criterion_06_repair(chsh):
    t0 = time.perf_counter()
    ctx = RepairContext.build(chsh, 1)
    base = tsirelson_strategy(chsh)
    reports, problems = [], []
    for eps in (1e-2, 1e-3, 1e-4):
        out, rep = repair(moment_matrix(perturb(base, eps), ctx.index), ctx)
        reports.append(rep)
        if rep.final_residual > 1e-8:
            problems.append(f"eps={eps}: residual {rep.final_residual:.2e}")
        if rep.lambda_min_final < -1e-10:
            problems.append(f"eps={eps}: lambda_min {rep.lambda_min_final:.2e}")
        if out[0, 0] != 1.0:
            problems.append(f"eps={eps}: Gamma_11={out[0, 0]!r}")
        slack = rep.projection_bound - rep.dist_project
        if slack < -1e-10:
            problems.append(f"eps={eps}: projection bound slack {slack:.2e}")
    d = [r.total_distance for r in reports]
    ratios = [d[0] / d[1], d[1] / d[2]]
    if not d[0] > d[1] > d[2]:
        problems.append("distances not decreasing")
    if not all(3 <= r <= 30 for r in ratios):
        problems.append(f"ratios {ratios} outside [3, 30]")
    elapsed = time.perf_counter() - t0
    if elapsed >= 300:
        problems.append(f"took {elapsed:.0f}s")
    min_slack = min(r.projection_bound - r.dist_project for r in reports)
    record(6, not problems,
           "distances=" + ",".join(f"{x:.3e}" for x in d)
           + " ratios=" + ",".join(f"{x:.2f}" for x in ratios)
           + f" max_residual={max(r.final_residual for r in reports):.1e}"
           + f" min_lambda={min(r.lambda_min_final for r in reports):.1e}"
           + f" min_bound_slack={min_slack:.2e} time={elapsed:.1f}s"
           + ("" if not problems else " problems: " + "; ".join(problems)))


@pytest.mark.xfail(strict=True, reason=(
    "every feasible moment matrix is singular: the completeness rows force "
    "Gamma v = 0 for v = e_1 - sum_a e_f[a|x], so lambda_min >= 1e-8 cannot hold; "
    "the strict point is positive definite only on its face (see decisions ledger)"))
def test_criterion_07_strict_feasibility(chsh, mermin, chsh1, chsh2, mermin1):
    details, ok = [], True
    for label, game, inst in (("chsh n=1", chsh, chsh1), ("chsh n=2", chsh, chsh2),
                              ("mermin3 n=1", mermin, mermin1)):
        sp = strict_feasible(game, inst.index.n, index=inst.index)
        res = residual(inst.index, sp.gamma, system=inst.system)[1]
        lam = min_eigenvalue(sp.gamma)
        ok = ok and lam >= 1e-8 and res <= 1e-9
        details.append(f"{label}: lambda_min={lam:.1e} residual={res:.1e} "
                       f"face mu={sp.mu:.3g} (rank {sp.face_dim}/{inst.index.size})")
    record(7, ok, "; ".join(details) + " [literal lambda_min >= 1e-8 is unattainable]")


def _count_failures(check, seed):
    rng = np.random.default_rng(seed)
    return sum(0 if check(rng) else 1 for _ in range(CASES))


def test_criterion_08_word_algebra():
    def confluence(rng):
        w = random_word(rng, max_len=8)
        return rewrite_randomly(w.letters, rng) == reduce_word(w).letters

    def involution(rng):
        w = reduce_word(random_word(rng))
        return adjoint(adjoint(w)) == w and reduce_word(w) == w

    def associativity(rng):
        u, v, w = (reduce_word(random_word(rng)) for _ in range(3))
        return multiply(multiply(u, v), w) == multiply(u, multiply(v, w))

    def homomorphism(rng):
        u, v = (reduce_word(random_word(rng, level=1)) for _ in range(2))
        a, x = int(rng.integers(2)), int(rng.integers(2))
        lifted = multiply(apply_hom(a, x, u), apply_hom(a, x, v))
        return apply_hom(a, x, multiply(u, v)) == lifted

    reps = {}

    def representation(rng):
        dim = int(rng.integers(1, 9))
        key = (dim, int(rng.integers(8)))
        if key not in reps:
            reps[key] = Representation(np.random.default_rng(key), (2, 2), (2, 2), 2, dim)
        rep = reps[key]
        w = random_word(rng, max_len=8)
        return np.max(np.abs(rep(w.letters) - rep(reduce_word(w).letters))) <= 1e-12

    checks = {"confluence": confluence, "involution": involution,
              "associativity": associativity, "homomorphism": homomorphism,
              "representation": representation}
    failures = {name: _count_failures(fn, seed) for seed, (name, fn) in enumerate(checks.items())}
    record(8, not any(failures.values()),
           " ".join(f"{k}={v}/{CASES}" for k, v in failures.items()) + " failures")


def test_criterion_09_norm_bound(chsh, mermin, chsh1, chsh2, mermin1, chsh_repair_ctx):
    matrices = []
    for game, inst in ((chsh, chsh1), (chsh, chsh2), (mermin, mermin1)):
        for seed in range(5):
            matrices.append(("simulated", moment_matrix(random_strategy(game, seed=seed),
                                                        inst.index), inst.index))
        matrices.append(("solver", inst.solution.matrix, inst.index))
    matrices.append(("strict", chsh_repair_ctx.strict.gamma, chsh_repair_ctx.index))
    base = tsirelson_strategy(chsh)
    for eps in (1e-2, 1e-3, 1e-4):
        out, _ = repair(moment_matrix(perturb(base, eps), chsh_repair_ctx.index), chsh_repair_ctx)
        matrices.append(("repaired", out, chsh_repair_ctx.index))
    reports = [(kind, audit_norm_bound(g, idx)) for kind, g, idx in matrices]
    worst = max(r.summary["op_norm"] / r.summary["words"] for _, r in reports)
    record(9, all(r.passed for _, r in reports),
           f"{len(reports)} matrices (simulated, solver, strict, repaired); "
           f"max ||Gamma||_op/|words| = {worst:.3f} (<= 1 + 1e-8/|words|)")


def test_criterion_10_sdpa_round_trip(chsh1, mermin1, tmp_path):
    details, ok = [], True
    for label, inst in (("chsh n=1", chsh1), ("mermin3 n=1", mermin1)):
        path = tmp_path / "problem.dat-s"
        text = export_sdpa(inst.problem, path)
        again = import_sdpa(path)
        identical = export_sdpa(again) == text
        sol = solve(again)
        diff = abs(sol.value - inst.solution.value)
        ok = ok and identical and diff <= 2 * sol.tol
        details.append(f"{label}: byte_identical={identical} value_diff={diff:.1e}")
    record(10, ok, "; ".join(details) + " (<= 2 tol = 2e-7)")


def test_criterion_11_bipartite(chsh, chsh1, chsh2):
    details, ok = [], True
    for n, inst in ((1, chsh1), (2, chsh2)):
        prog = build_bipartite(chsh, n)
        sol = solve(prog.problem())
        diff = abs(sol.value - inst.solution.value)
        ok = ok and sol.converged and diff <= 1e-6
        details.append(f"n={n}: bipartite={sol.value:.10f} sequential="
                       f"{inst.solution.value:.10f} diff={diff:.1e}")
    record(11, ok, "; ".join(details) + " (<= 1e-6)")

import math

import numpy as np
import pytest

from seqnpa.certify import (
    AuditReport,
    audit_monotonicity,
    audit_norm_bound,
    audit_soundness,
    flatness,
)
from seqnpa.game import NonlocalGame
from seqnpa.repair import repair
from seqnpa.strategy import classical_strategy, moment_matrix, perturb, random_strategy, tsirelson_strategy

COS2 = math.cos(math.pi / 8) ** 2


def test_flatness_rank_one(chsh, chsh1, chsh2):
    s = classical_strategy(chsh, [[0, 1], [1, 0]])
    for inst in (chsh1, chsh2):
        v = flatness(moment_matrix(s, inst.index), inst.index)
        assert v.flat and v.rank_full == v.rank_principal == 1


def test_flatness_identity_not_flat(chsh1):
    v = flatness(np.eye(17), chsh1.index)
    assert not v.flat and v.rank_full == 17 and v.rank_principal == 1


def test_flatness_scale_invariant(chsh, chsh1):
    g = moment_matrix(random_strategy(chsh, seed=1), chsh1.index)
    a, b = flatness(g, chsh1.index), flatness(1e3 * g, chsh1.index)
    assert (a.rank_full, a.rank_principal, a.flat) == (b.rank_full, b.rank_principal, b.flat)
    assert a.rank_principal <= a.rank_full


def test_flatness_on_level_two_optimum(chsh2):
    verdict = flatness(chsh2.solution.matrix, chsh2.index)
    assert verdict.rank_principal <= verdict.rank_full
    if verdict.flat:
        assert abs(chsh2.solution.value - COS2) <= 1e-3


def test_soundness_zero_payoff(chsh):
    zero = NonlocalGame((2, 2), (2, 2), np.zeros((2, 2, 2, 2)), name="zero")
    rep = audit_soundness(zero, 1, strategies=5)
    assert rep.passed
    assert abs(rep.summary["value"]) <= 1e-9 and rep.summary["max_score"] == 0.0


def test_soundness_report_lines(chsh, chsh1):
    rep = audit_soundness(chsh, 1, strategies=10, seed=7, solution=chsh1.solution)
    assert rep.passed and rep.summary["violations"] == 0
    line = rep.result_line()
    assert line.startswith("RESULT soundness PASS ") and "max_gap=" in line
    assert rep.to_text().splitlines()[-1] == line
    assert rep.inputs["game_digest"] == chsh.digest()
    assert any(r["strategy"] == "tsirelson" for r in rep.details["scores"])


def test_soundness_detects_violation(chsh, chsh1):
    from dataclasses import replace

    fake = replace(chsh1.solution, value=0.5)
    rep = audit_soundness(chsh, 1, strategies=3, solution=fake)
    assert not rep.passed and rep.result_line().startswith("RESULT soundness FAIL")
    assert rep.details["violating"]


def test_monotonicity_constant_game():
    const = NonlocalGame((2, 2), (2, 2), np.full((2, 2, 2, 2), 0.25), name="const")
    rep = audit_monotonicity(const, n_max=2)
    assert rep.passed
    assert rep.summary["value_n1"] == pytest.approx(1.0, abs=1e-6)
    assert rep.summary["value_n2"] == pytest.approx(1.0, abs=1e-6)


def test_monotonicity_needs_two_levels(chsh):
    with pytest.raises(ValueError):
        audit_monotonicity(chsh, n_max=1)


@pytest.mark.slow
def test_monotonicity_chsh_corr(chsh_corr):
    rep = audit_monotonicity(chsh_corr, n_max=2)
    assert rep.passed
    for n in (1, 2):
        assert rep.summary[f"value_n{n}"] >= 2 * math.sqrt(2) - 1e-3


def test_norm_bound(chsh, chsh1, chsh_repair_ctx):
    g = moment_matrix(random_strategy(chsh, seed=0), chsh1.index)
    assert audit_norm_bound(g, chsh1.index).passed
    assert not audit_norm_bound(2 * 17 * np.eye(17), chsh1.index).passed
    leaky = moment_matrix(perturb(tsirelson_strategy(chsh), 1e-2), chsh1.index)
    out, _ = repair(leaky, chsh_repair_ctx)
    rep = audit_norm_bound(out, 17)
    assert rep.passed and isinstance(rep, AuditReport)

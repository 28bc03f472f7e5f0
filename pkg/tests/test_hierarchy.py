import itertools
from fractions import Fraction

import numpy as np
import pytest

from seqnpa.errors import SizeGuardError
from seqnpa.game import NonlocalGame
from seqnpa.hierarchy import (
    build_constraints,
    build_index,
    constraint_map,
    evaluate_objective,
    objective_vector,
    residual,
    smat,
    svec,
)
from seqnpa.strategy import moment_matrix, perturb, random_strategy, score, tsirelson_strategy
from seqnpa.words import Letter, LevelScheme, Word, adjoint, multiply, parse_word


def naive_class_count(words):
    """Distinct products up to adjoint, by pairwise comparison of reduced words."""
    reps = []
    for w in words:
        for v in words:
            u = multiply(adjoint(w), v)
            if u.is_zero:
                continue
            if not any(u == r or adjoint(u) == r for r in reps):
                reps.append(u)
    return len(reps)


def test_index_sizes(chsh1, mermin1):
    assert chsh1.index.size == 17 and chsh1.problem.size == 17
    assert mermin1.index.size == 65 and mermin1.problem.size == 65
    assert chsh1.index.class_words[0] == Word(2, ())


def test_class_count_matches_naive_oracle(chsh1, chsh2):
    assert chsh1.index.n_classes == naive_class_count(chsh1.index.words)
    assert chsh2.index.size == 209
    assert chsh2.index.n_classes == 15185


def test_class_partition_matches_products(chsh1):
    idx = chsh1.index
    for i, w in enumerate(idx.words):
        for j, v in enumerate(idx.words):
            u = multiply(adjoint(w), v)
            c = idx.class_matrix[i, j]
            if u.is_zero:
                assert c == -1
            else:
                cw = idx.class_words[c]
                assert cw == u or cw == adjoint(u)


def test_size_guard(chsh):
    with pytest.raises(SizeGuardError):
        build_index(chsh, 2, cap=100)


def test_plus_scheme(chsh):
    scheme = LevelScheme.parse("plus(1, f[00|00]*f[11|11])")
    idx = build_index(chsh, scheme)
    assert idx.size == 18
    assert parse_word("f[00|00]*f[11|11]") in idx.position


def _row_space_contains(rows, n_cols, target):
    """Membership test by rank (entries are small rationals, so float rank is exact enough)."""
    m = np.array([[float(row.get(c, 0)) for c in range(n_cols)] for row in rows])
    t = np.array([[float(target.get(c, 0)) for c in range(n_cols)]])
    return np.linalg.matrix_rank(m) == np.linalg.matrix_rank(np.vstack([m, t]))


def _letter_class(idx, a, x):
    return idx.letter_class(Letter(a, x))


def test_completeness_rows(chsh1):
    idx, system = chsh1.index, chsh1.system
    for x in itertools.product(range(2), repeat=2):
        target = {0: Fraction(-1)}
        for a in itertools.product(range(2), repeat=2):
            c = _letter_class(idx, a, x)
            target[c] = target.get(c, 0) + 1
        assert _row_space_contains(system.rows, idx.n_classes, target)


def test_marginal_rows(chsh1):
    # sum_{a_1} f[a_1 a_2 | x_1 x_2] independent of x_1
    idx, system = chsh1.index, chsh1.system
    for a2, x2 in itertools.product(range(2), repeat=2):
        target = {}
        for a1 in range(2):
            for x1, sign in ((0, 1), (1, -1)):
                c = _letter_class(idx, (a1, a2), (x1, x2))
                target[c] = target.get(c, 0) + sign
        assert _row_space_contains(system.rows, idx.n_classes, target)


def test_ons_degree_one_marginals(chsh1):
    # sum_{a_2} f[a_1 a_2 | x_1 x_2] independent of x_2: not a relation row, follows from ons
    idx, system = chsh1.index, chsh1.system
    for a1, x1 in itertools.product(range(2), repeat=2):
        target = {}
        for a2 in range(2):
            for x2, sign in ((0, 1), (1, -1)):
                c = _letter_class(idx, (a1, a2), (x1, x2))
                target[c] = target.get(c, 0) + sign
        assert _row_space_contains(system.rows, idx.n_classes, target)
    relation_only = [r for r, f in zip(system.rows, system.families) if f == "relation"]
    assert not _row_space_contains(relation_only, idx.n_classes, target)


def test_rows_deduplicated(chsh1, mermin1):
    for inst in (chsh1, mermin1):
        keys = set()
        for row in inst.system.rows:
            items = sorted(row.items())
            lead = items[0][1]
            assert lead == 1
            key = tuple((c, v / lead) for c, v in items)
            assert key not in keys
            keys.add(key)
        assert all(0 <= c < inst.index.n_classes for row in inst.system.rows for c in row)


def test_family_labels(mermin1):
    counts = mermin1.system.family_counts()
    assert set(counts) == {"relation", "ons(2)", "ons(3)"}


def test_objective_vectors(chsh, mermin, chsh1, mermin1):
    obj = objective_vector(chsh, chsh1.index)
    assert len(obj) == 8 and all(v == 0.25 for v in obj.values())
    obj = objective_vector(mermin, mermin1.index)
    assert len(obj) == 32 and all(abs(v) == 1 for v in obj.values())
    for c, v in obj.items():
        f = mermin1.index.class_words[c].letters[0]
        assert v == mermin.payoff[f.answers + f.questions]
    zero = NonlocalGame((2, 2), (2, 2), np.zeros((2, 2, 2, 2)))
    assert objective_vector(zero, chsh1.index) == {}


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_simulated_matrix_feasible(chsh, chsh1, seed):
    strat = random_strategy(chsh, seed=seed)
    gamma = moment_matrix(strat, chsh1.index)
    _, norm = residual(chsh1.index, gamma, system=chsh1.system)
    assert norm <= 1e-9
    obj = objective_vector(chsh, chsh1.index)
    assert evaluate_objective(obj, chsh1.index, gamma) == pytest.approx(score(strat, chsh),
                                                                        abs=1e-12)


def test_simulated_matrix_feasible_mermin(mermin, mermin1):
    gamma = moment_matrix(random_strategy(mermin, seed=5), mermin1.index)
    assert residual(mermin1.index, gamma, system=mermin1.system)[1] <= 1e-9


def test_residual_detects_violations(chsh, chsh1):
    idx = chsh1.index
    assert residual(idx, np.eye(idx.size), system=chsh1.system)[1] > 0.1
    cmap = constraint_map(idx, chsh1.system)
    base = tsirelson_strategy(chsh)
    norms = [residual(idx, moment_matrix(perturb(base, e), idx), cmap)[1]
             for e in (1e-2, 1e-3)]
    assert 0 < norms[1] < norms[0]
    assert 5 <= norms[0] / norms[1] <= 20


def test_class_expanded_point_feasible(chsh1):
    y = chsh1.solution.y
    gamma = chsh1.index.expand(y)
    vec, norm = residual(chsh1.index, gamma, system=chsh1.system)
    assert norm <= len(vec) * 1e-9


def test_svec_isometry():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(6, 6))
    a = a + a.T
    assert np.linalg.norm(svec(a)) == pytest.approx(np.linalg.norm(a))
    assert np.allclose(smat(svec(a), 6), a)


def test_constraints_deterministic(chsh):
    a = build_constraints(build_index(chsh, 1)).to_text()
    b = build_constraints(build_index(chsh, 1)).to_text()
    assert a == b

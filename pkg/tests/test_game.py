import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqnpa.errors import EnumerationTooLarge, GameError
from seqnpa.game import (
    NonlocalGame,
    builtin_game,
    classical_value,
    game_from_correlator,
    load_game,
    save_game,
    validate,
)


def brute_force(game):
    """Enumerate every deterministic strategy of every party (no shortcuts)."""
    funcs = [list(itertools.product(range(a), repeat=x))
             for a, x in zip(game.answers, game.questions)]
    best = -np.inf
    for choice in itertools.product(*funcs):
        total = 0.0
        for x in itertools.product(*[range(m) for m in game.questions]):
            a = tuple(choice[j][x[j]] for j in range(game.k))
            total += game.payoff[a + x]
        best = max(best, total)
    return best


def test_chsh_prob_payoff():
    g = builtin_game("chsh-prob")
    assert g.k == 2 and g.answers == (2, 2) and g.questions == (2, 2)
    for a, b, x, y in itertools.product(range(2), repeat=4):
        assert g.payoff[a, b, x, y] == (0.25 if (a ^ b) == (x & y) else 0.0)
    assert validate(g) == []


def test_chsh_corr_expansion():
    g = builtin_game("chsh-corr")
    signs = {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1}
    for a, b, x, y in itertools.product(range(2), repeat=4):
        assert g.payoff[a, b, x, y] == signs[x, y] * (-1) ** (a + b)


def test_mermin_expansion():
    g = builtin_game("mermin3-corr")
    signs = {(0, 0, 1): 1, (0, 1, 0): 1, (1, 0, 0): 1, (1, 1, 1): -1}
    for idx in itertools.product(range(2), repeat=6):
        a, x = idx[:3], idx[3:]
        assert g.payoff[idx] == signs.get(x, 0) * (-1) ** sum(a)
    assert np.count_nonzero(g.payoff) == 32


def test_unknown_builtin():
    with pytest.raises(GameError, match="available"):
        builtin_game("nope")


@pytest.mark.parametrize("name,value", [("chsh-prob", 0.75), ("chsh-corr", 2.0),
                                        ("mermin3-corr", 2.0)])
def test_classical_value_builtins(name, value):
    g = builtin_game(name)
    assert classical_value(g) == value
    assert brute_force(g) == value


def test_classical_value_single_answer():
    g = NonlocalGame((1, 1), (2, 2), np.full((1, 1, 2, 2), 0.25))
    assert classical_value(g) == 1.0


def test_classical_value_refuses_large_games():
    g = NonlocalGame((4, 4), (9, 9), np.zeros((4, 4, 9, 9)))
    with pytest.raises(EnumerationTooLarge, match="10\\*\\*8|100000000"):
        classical_value(g)


def test_validate_reports_mu_sum():
    g = builtin_game("chsh-prob")
    bad = NonlocalGame(g.answers, g.questions, g.payoff * 2, mu=g.mu * 2,
                       predicate=g.predicate)
    assert "mu sums to 2" in validate(bad)


def test_validate_reports_every_nan():
    payoff = np.zeros((2, 2, 2, 2))
    payoff[0, 1, 1, 0] = np.nan
    payoff[1, 1, 1, 1] = np.inf
    problems = validate(NonlocalGame((2, 2), (2, 2), payoff))
    assert any("(0, 1, 1, 0)" in p for p in problems)
    assert any("(1, 1, 1, 1)" in p for p in problems)


def test_validate_mismatched_payoff():
    g = builtin_game("chsh-prob")
    bad = NonlocalGame(g.answers, g.questions, np.zeros_like(g.payoff), mu=g.mu,
                       predicate=g.predicate)
    assert any("mu * predicate" in p for p in validate(bad))


def test_round_trip(tmp_path):
    for name in ("chsh-prob", "mermin3-corr"):
        g = builtin_game(name)
        path = tmp_path / f"{name}.json"
        save_game(g, path)
        h = load_game(path)
        assert h.digest() == g.digest()
        assert np.array_equal(h.payoff, g.payoff)


def test_load_errors(tmp_path):
    with pytest.raises(GameError, match="not found"):
        load_game(tmp_path / "missing.json")
    path = tmp_path / "short.json"
    path.write_text(json.dumps({"answers": [2, 2], "questions": [2, 2], "payoff": [0] * 15}))
    with pytest.raises(GameError, match="15 entries"):
        load_game(path)
    path.write_text("{not json")
    with pytest.raises(GameError):
        load_game(path)


def _random_game(draw_seed):
    rng = np.random.default_rng(draw_seed)
    answers = tuple(int(v) for v in rng.integers(1, 4, size=2))
    questions = tuple(int(v) for v in rng.integers(1, 3, size=2))
    return NonlocalGame(answers, questions, rng.normal(size=answers + questions))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_classical_matches_full_enumeration(seed):
    g = _random_game(seed)
    assert classical_value(g) == pytest.approx(brute_force(g), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_classical_relabel_invariance(seed):
    g = _random_game(seed)
    rng = np.random.default_rng(seed + 1)
    payoff = g.payoff
    for axis in range(2 * g.k):
        payoff = np.take(payoff, rng.permutation(payoff.shape[axis]), axis=axis)
    h = NonlocalGame(g.answers, g.questions, payoff)
    assert classical_value(h) == pytest.approx(classical_value(g), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 10.0), st.floats(-3.0, 3.0))
def test_classical_scaling_and_shift(seed, c, gamma):
    g = _random_game(seed)
    scaled = NonlocalGame(g.answers, g.questions, c * g.payoff)
    assert classical_value(scaled) == pytest.approx(c * classical_value(g), rel=1e-12)
    # uniform mu: adding gamma * mu(x) to every answer tuple of x shifts the value by gamma
    mu = 1.0 / np.prod(g.questions)
    shifted = NonlocalGame(g.answers, g.questions, g.payoff + gamma * mu)
    assert classical_value(shifted) == pytest.approx(classical_value(g) + gamma, abs=1e-9)


def test_correlator_helper():
    g = game_from_correlator({(0, 0): 1}, 2)
    assert classical_value(g) == 1.0

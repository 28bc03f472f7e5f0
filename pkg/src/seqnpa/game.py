"""Multipartite nonlocal games and the brute-force classical value.

A game with ``k`` parties is stored as a dense payoff tensor ``beta`` whose
axes are ``(a_1, ..., a_k, x_1, ..., x_k)``.  Party 1 is the party that acts
last in the sequential picture; party ``k`` acts first.  The score of a
correlation ``p(a|x)`` is ``sum(beta * p)``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import EnumerationTooLarge, GameError

__all__ = [
    "NonlocalGame",
    "BUILTIN_GAMES",
    "builtin_game",
    "classical_value",
    "validate",
    "load_game",
    "save_game",
    "game_from_correlator",
]

ENUMERATION_BOUND = 10**8


@dataclass(frozen=True, eq=False)
class NonlocalGame:
    """A k-partite nonlocal game.

    Parameters
    ----------
    answers, questions : tuple of int
        Alphabet sizes ``|A_j|`` and ``|X_j|`` for parties ``1..k``.
    payoff : ndarray
        Real tensor of shape ``answers + questions``.
    mu : ndarray, optional
        Question distribution, shape ``questions``.
    predicate : ndarray, optional
        Winning predicate in the payoff axis order ``(a..., x...)``.
    name : str
        Free-form label used in reports.
    """

    answers: tuple
    questions: tuple
    payoff: np.ndarray
    mu: Optional[np.ndarray] = None
    predicate: Optional[np.ndarray] = None
    name: str = "custom"
    _hash: str = field(default="", repr=False)

    def __post_init__(self):
        object.__setattr__(self, "answers", tuple(int(a) for a in self.answers))
        object.__setattr__(self, "questions", tuple(int(x) for x in self.questions))
        payoff = np.array(self.payoff, dtype=float)
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)
        for attr in ("mu", "predicate"):
            value = getattr(self, attr)
            if value is not None:
                value = np.array(value, dtype=float)
                value.setflags(write=False)
                object.__setattr__(self, attr, value)

    @property
    def k(self) -> int:
        return len(self.answers)

    @property
    def shape(self) -> tuple:
        return self.answers + self.questions

    def payoff_at(self, answers: Sequence[int], questions: Sequence[int]) -> float:
        return float(self.payoff[tuple(answers) + tuple(questions)])

    def to_dict(self) -> dict:
        """Self-describing dictionary (the game file schema)."""
        out = {
            "name": self.name,
            "k": self.k,
            "answers": list(self.answers),
            "questions": list(self.questions),
        }
        if self.mu is not None and self.predicate is not None:
            out["mu"] = [float(v) for v in self.mu.ravel()]
            out["predicate"] = [int(v) for v in self.predicate.ravel()]
        else:
            out["payoff"] = [float(v) for v in self.payoff.ravel()]
        return out

    def digest(self) -> str:
        """Stable content hash, used in run manifests and audit reports."""
        import hashlib

        h = hashlib.sha256()
        h.update(repr((self.answers, self.questions)).encode())
        h.update(np.ascontiguousarray(self.payoff).tobytes())
        return h.hexdigest()[:16]


def game_from_correlator(terms, k, name="custom"):
    """Expand a +-1 correlator Bell expression into the (a, x) payoff basis.

    ``terms`` maps question tuples to coefficients of ``<A_x1 ... A_xk>``;
    every party has binary answers and binary questions.  The expectation of a
    product of +-1 observables is ``sum_a (-1)^{sum a} p(a|x)``.
    """
    payoff = np.zeros((2,) * k + (2,) * k)
    for x, coeff in terms.items():
        for a in itertools.product(range(2), repeat=k):
            payoff[a + tuple(x)] += coeff * (-1) ** sum(a)
    return NonlocalGame((2,) * k, (2,) * k, payoff, name=name)


def _chsh_prob():
    mu = np.full((2, 2), 0.25)
    predicate = np.zeros((2, 2, 2, 2))
    for a, b, x, y in itertools.product(range(2), repeat=4):
        predicate[a, b, x, y] = float((a ^ b) == (x & y))
    payoff = predicate * mu[None, None, :, :]
    return NonlocalGame((2, 2), (2, 2), payoff, mu=mu, predicate=predicate,
                        name="chsh-prob")


def _chsh_corr():
    terms = {(0, 0): 1, (0, 1): 1, (1, 0): 1, (1, 1): -1}
    return game_from_correlator(terms, 2, name="chsh-corr")


def _mermin3_corr():
    terms = {(0, 0, 1): 1, (0, 1, 0): 1, (1, 0, 0): 1, (1, 1, 1): -1}
    return game_from_correlator(terms, 3, name="mermin3-corr")


BUILTIN_GAMES = {
    "chsh-prob": _chsh_prob,
    "chsh-corr": _chsh_corr,
    "mermin3-corr": _mermin3_corr,
}


def builtin_game(name: str) -> NonlocalGame:
    try:
        factory = BUILTIN_GAMES[name]
    except KeyError:
        available = ", ".join(sorted(BUILTIN_GAMES))
        raise GameError(f"unknown game {name!r}; available: {available}") from None
    return factory()


def validate(game: NonlocalGame) -> list:
    """Check every game invariant.

    Returns
    -------
    list of str
        All violations found; an empty list means the game is valid.
    """
    problems = []
    if game.k < 2:
        problems.append(f"need at least 2 parties, got {game.k}")
    if len(game.questions) != game.k:
        problems.append(
            f"{game.k} answer alphabets but {len(game.questions)} question alphabets")
    for label, sizes in (("answers", game.answers), ("questions", game.questions)):
        for j, size in enumerate(sizes, start=1):
            if size < 1:
                problems.append(f"{label} alphabet of party {j} has size {size}")
    expected = game.shape
    if game.payoff.shape != expected:
        problems.append(f"payoff shape {game.payoff.shape} != {expected}")
    else:
        bad = np.argwhere(~np.isfinite(game.payoff))
        for idx in bad:
            problems.append(f"payoff entry {tuple(int(i) for i in idx)} is not finite")
    if (game.mu is None) != (game.predicate is None):
        problems.append("mu and predicate must be given together")
    if game.mu is not None and game.predicate is not None:
        if game.mu.shape != game.questions:
            problems.append(f"mu shape {game.mu.shape} != {game.questions}")
        else:
            total = float(np.sum(game.mu))
            if not math.isclose(total, 1.0, abs_tol=1e-12):
                problems.append(f"mu sums to {total:g}")
            if np.any(game.mu < 0):
                problems.append("mu has negative entries")
        if game.predicate.shape != expected:
            problems.append(f"predicate shape {game.predicate.shape} != {expected}")
        elif not np.all(np.isin(game.predicate, (0.0, 1.0))):
            problems.append("predicate takes values outside {0, 1}")
        if (game.mu.shape == game.questions and game.predicate.shape == expected
                and game.payoff.shape == expected):
            implied = game.predicate * game.mu.reshape((1,) * game.k + game.questions)
            if not np.allclose(implied, game.payoff, rtol=0, atol=1e-12):
                problems.append("payoff differs from mu * predicate")
    return problems


def classical_value(game: NonlocalGame) -> float:
    """Maximum score over deterministic strategies, by enumeration.

    Party 1's response is optimized pointwise for each joint response of
    parties 2..k, which is exact and avoids one enumeration layer.

    Raises
    ------
    EnumerationTooLarge
        If the number of deterministic strategies exceeds ``10**8``.
    """
    count = 1
    for a, x in zip(game.answers, game.questions):
        count *= a ** x
    if count > ENUMERATION_BOUND:
        raise EnumerationTooLarge(
            f"game too large for brute force: {count} deterministic strategies "
            f"(bound {ENUMERATION_BOUND})")
    k = game.k
    beta = game.payoff
    # axes of beta reordered to (a_1, x_1, a_2, x_2, ..., a_k, x_k)
    perm = [ax for j in range(k) for ax in (j, k + j)]
    beta = np.transpose(beta, perm)
    per_party = [list(itertools.product(range(a), repeat=x))
                 for a, x in zip(game.answers, game.questions)]
    best = -math.inf
    for funcs in itertools.product(*per_party[1:]):
        t = beta
        # contract parties k..2 by selecting a_j = f_j(x_j); adjacent fancy
        # indices collapse the (a_j, x_j) axis pair into one x_j axis in place
        for j in range(k - 1, 0, -1):
            f = np.asarray(funcs[j - 1])
            xs = np.arange(game.questions[j])
            t = t[(slice(None),) * (2 * j) + (f, xs)]
        # t has axes (a_1, x_1, x_2, ..., x_k) -> sum over x_2.. then best a_1 per x_1
        t = t.reshape(game.answers[0], game.questions[0], -1).sum(axis=2)
        best = max(best, float(t.max(axis=0).sum()))
    return best


def load_game(path) -> NonlocalGame:
    """Read a game file (JSON).  See :func:`save_game` for the schema."""
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise GameError(f"game file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise GameError(f"cannot read game file {path}: {exc}") from None
    return game_from_dict(data)


def game_from_dict(data: dict) -> NonlocalGame:
    try:
        answers = tuple(int(v) for v in data["answers"])
        questions = tuple(int(v) for v in data["questions"])
    except (KeyError, TypeError, ValueError) as exc:
        raise GameError(f"game description needs integer lists answers/questions: {exc}")
    k = int(data.get("k", len(answers)))
    if k != len(answers) or k != len(questions):
        raise GameError(f"declared k={k} but got {len(answers)} answer and "
                        f"{len(questions)} question alphabets")
    shape = answers + questions
    size = math.prod(shape)
    name = str(data.get("name", "custom"))
    if "payoff" in data:
        flat = data["payoff"]
        if len(flat) != size:
            raise GameError(f"payoff has {len(flat)} entries, shape {shape} needs {size}")
        game = NonlocalGame(answers, questions, np.asarray(flat, float).reshape(shape),
                            name=name)
    elif "mu" in data and "predicate" in data:
        mu, pred = data["mu"], data["predicate"]
        if len(mu) != math.prod(questions):
            raise GameError(f"mu has {len(mu)} entries, shape {questions} "
                            f"needs {math.prod(questions)}")
        if len(pred) != size:
            raise GameError(f"predicate has {len(pred)} entries, shape {shape} needs {size}")
        mu = np.asarray(mu, float).reshape(questions)
        pred = np.asarray(pred, float).reshape(shape)
        payoff = pred * mu.reshape((1,) * k + questions)
        game = NonlocalGame(answers, questions, payoff, mu=mu, predicate=pred, name=name)
    else:
        raise GameError("game description needs either payoff or mu+predicate")
    problems = validate(game)
    if problems:
        raise GameError("invalid game: " + "; ".join(problems))
    return game


def save_game(game: NonlocalGame, path) -> None:
    """Write ``game`` as JSON.

    Schema: ``k``, ``answers``, ``questions`` and either ``payoff`` (flat,
    row-major over axes ``(a_1..a_k, x_1..x_k)``) or ``mu`` (flat over
    ``(x_1..x_k)``) plus ``predicate`` (flat, same axes as payoff).
    """
    Path(path).write_text(json.dumps(game.to_dict(), indent=1) + "\n")

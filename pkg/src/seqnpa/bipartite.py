"""Stand-alone two-party sequential program, used as a cross-check.

Built directly from the bipartite formulation with its own word encoding:
a letter is ``(a, b, x, y)`` with Alice (who acts first) in the leading
slots, a word is a tuple of letters, and Bob's words are tuples of
``(b, y)``.  Operationally non-signaling rows are enumerated over pairs
``r, s`` of Bob words, not over reduced products, and ``T_{a|x}`` sends the
unit to ``sum_b f[ab|xy_0]``.  None of the k-partite machinery is reused
except the SDP container and solver.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

import scipy.sparse as sp

from .errors import GameError
from .game import NonlocalGame
from .sdp import SdpProblem

__all__ = ["BipartiteProgram", "build_bipartite"]


def _reduce(word, same):
    out = []
    for f in word:
        if out and same(out[-1], f):
            if out[-1] != f:
                return None
            continue
        out.append(f)
    return tuple(out)


def _ab_same(f, g):
    return f[2:] == g[2:]


def _b_same(f, g):
    return f[1] == g[1]


def _mul(*words):
    out = ()
    for w in words:
        if w is None:
            return None
        out += w
    return _reduce(out, _ab_same)


def _enum(letters, degree, same):
    words = [()]
    frontier = [()]
    for _ in range(degree):
        frontier = [p + (f,) for p in frontier for f in letters if not p or not same(p[-1], f)]
        words.extend(frontier)
    return words


class BipartiteProgram:
    """Words, Hankel classes and constraint rows of the two-party program."""

    def __init__(self, game: NonlocalGame, n: int):
        if game.k != 2:
            raise GameError("the bipartite program needs a 2-party game")
        self.game, self.n = game, n
        # party 1 in the game acts last, so Alice is party 2
        self.nb, self.na = game.answers
        self.ny, self.nx = game.questions
        self.letters = sorted(itertools.product(range(self.na), range(self.nb),
                                                range(self.nx), range(self.ny)))
        self.words = _enum(self.letters, n, _ab_same)
        self.classes = {}
        self.class_of = {}
        size = len(self.words)
        self.class_matrix = [[-1] * size for _ in range(size)]
        for i, w in enumerate(self.words):
            for j in range(i, size):
                c = self._class(_mul(w[::-1], self.words[j]))
                if c is not None:
                    self.class_matrix[i][j] = self.class_matrix[j][i] = c
        self.rows = []

    def _canon(self, u):
        return min(u, u[::-1])

    def _class(self, u, create=True):
        """Class id of a reduced word; None for zero; -2 if absent and not created."""
        if u is None:
            return None
        key = self._canon(u)
        if key not in self.classes:
            if not create:
                return -2
            self.classes[key] = len(self.classes)
        return self.classes[key]

    def _emit(self, terms):
        """``terms``: list of (coeff, word or None).  Adds the row if representable."""
        row = {}
        for coeff, u in terms:
            c = self._class(u, create=False)
            if c is None:
                continue
            if c == -2:
                return False
            row[c] = row.get(c, 0) + coeff
        row = {c: Fraction(v) for c, v in row.items() if v}
        if row:
            self.rows.append(row)
        return True

    def build_rows(self):
        n, budget = self.n, 2 * self.n
        words = self.words
        one = ()
        for w, v in itertools.product(words, repeat=2):
            if len(w) + len(v) + 1 > budget:
                continue
            wa = w[::-1]
            for x, y in itertools.product(range(self.nx), range(self.ny)):
                terms = [(1, _mul(wa, ((a, b, x, y),), v))
                         for a in range(self.na) for b in range(self.nb)]
                self._emit(terms + [(-1, _mul(wa, one, v))])
            for a, x in itertools.product(range(self.na), range(self.nx)):
                for y, y2 in itertools.combinations(range(self.ny), 2):
                    terms = [(1, _mul(wa, ((a, b, x, y),), v)) for b in range(self.nb)]
                    terms += [(-1, _mul(wa, ((a, b, x, y2),), v)) for b in range(self.nb)]
                    self._emit(terms)
        bob_letters = sorted(itertools.product(range(self.nb), range(self.ny)))
        bob_words = _enum(bob_letters, n, _b_same)
        for r, s in itertools.product(bob_words, repeat=2):
            u = _reduce(r[::-1] + s, _b_same)
            if u is None:
                continue
            for w, v in itertools.product(words, repeat=2):
                if len(w) + len(v) + len(r) + len(s) > budget:
                    continue
                wa = w[::-1]
                for x, x2 in itertools.combinations(range(self.nx), 2):
                    terms = []
                    for coeff, xq in ((1, x), (-1, x2)):
                        for a in range(self.na):
                            for t_coeff, tu in self._lift(a, xq, u):
                                terms.append((coeff * t_coeff, _mul(wa, tu, v)))
                    self._emit(terms)
        return self.rows

    def _lift(self, a, x, u):
        """``T_{a|x}(u)`` as a list of (coeff, word)."""
        if not u:
            return [(1, ((a, b, x, 0),)) for b in range(self.nb)]
        return [(1, tuple((a, b, x, y) for b, y in u))]

    def objective(self) -> dict:
        out = {}
        for a, b, x, y in self.letters:
            beta = float(self.game.payoff[b, a, y, x])
            if beta:
                c = self.classes[((a, b, x, y),)]
                out[c] = out.get(c, 0.0) + beta
        return out

    def problem(self) -> SdpProblem:
        if not self.rows:
            self.build_rows()
        n_classes = len(self.classes)
        data, ri, ci = [], [], []
        for r, row in enumerate(self.rows):
            for c, v in sorted(row.items()):
                ri.append(r)
                ci.append(c)
                data.append(float(v))
        A = sp.csr_matrix((data, (ri, ci)), shape=(len(self.rows), n_classes))
        return SdpProblem.from_classes(self.class_matrix, A, self.classes[()],
                                       self.objective())

    def sequential_word(self, u):
        """The k-partite encoding ``f[(b, a)|(y, x)]`` of a bipartite word."""
        from .words import Letter, Word
        return Word(2, tuple(Letter((b, a), (y, x)) for a, b, x, y in u))


def build_bipartite(game: NonlocalGame, n: int) -> BipartiteProgram:
    prog = BipartiteProgram(game, n)
    prog.build_rows()
    return prog

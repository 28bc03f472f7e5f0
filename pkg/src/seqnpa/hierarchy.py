"""The level-n sequential NPA program for a k-partite game.

The moment matrix is indexed by the reduced words of the top level ``k``.
Entries are grouped into Hankel classes: ``(w, v)`` belongs to the class of
the reduced product ``w* v``.  Moment matrices are real symmetric, so a
class and its adjoint class are merged (see :func:`canonical`).

Linear constraints are stored as sparse rows over class ids with zero
right-hand side; normalization ``Gamma[1, 1] = 1`` is kept separate.  Row
families:

``relation``
    completeness ``sum_a f[a|x] = 1`` and marginal relations
    ``sum_{a_1..a_l} f[a|x]`` independent of ``x_1..x_l``, bordered by
    ``w*, v`` within the degree budget ``deg w + deg v + 1 <= 2n``.
``ons(j)``
    operationally non-signaling rows of party ``j``.

:func:`constraint_map` builds the same constraints as a sparse matrix acting
on raw symmetric matrices (explicit Hankel rows included), which is what the
repair pipeline works with.
"""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import SizeGuardError, WordError
from .game import NonlocalGame
from .words import (
    LevelScheme,
    Letter,
    Word,
    adjoint,
    apply_homs,
    enumerate_words,
    multiply,
    scheme_words,
    word_key,
)

__all__ = [
    "MomentIndex",
    "MomentMatrix",
    "ConstraintSystem",
    "build_index",
    "canonical",
    "relation_constraints",
    "ons_constraints",
    "build_constraints",
    "objective_vector",
    "constraint_map",
    "residual",
    "assemble",
    "DEFAULT_WORD_CAP",
]

DEFAULT_WORD_CAP = 5000
ZERO_CLASS = -1


def canonical(word: Word) -> Word:
    """Representative of ``{u, u*}``: the smaller of the two in word order."""
    if word.letters is None:
        return word
    adj = adjoint(word)
    return adj if word_key(adj) < word_key(word) else word


@dataclass(eq=False)
class MomentIndex:
    """Word basis, per-level word sets and Hankel classes.

    Attributes
    ----------
    words : list of Word
        Level-k words indexing rows/columns of the moment matrix.
    level_words : dict
        ``j -> W^n_[j]`` (full level ``n`` for ``j < k``).
    class_matrix : ndarray of int
        ``class_matrix[i, j]`` is the class id of ``(words[i], words[j])``,
        or ``-1`` for entries that vanish identically.
    class_words : list of Word
        Canonical word of every class; class 0 is the identity.
    """

    game: NonlocalGame
    scheme: LevelScheme
    words: list
    level_words: dict
    position: dict
    class_matrix: np.ndarray
    class_words: list
    class_lookup: dict
    class_positions: list = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.words)

    @property
    def n(self) -> int:
        return self.scheme.n

    @property
    def k(self) -> int:
        return self.game.k

    @property
    def n_classes(self) -> int:
        return len(self.class_words)

    def class_of_word(self, word: Word) -> Optional[int]:
        """Class id of a (reduced) level-k word, ``-1`` for zero, None if absent."""
        if word.letters is None:
            return ZERO_CLASS
        return self.class_lookup.get(canonical(word))

    def class_of_pair(self, w: Word, v: Word) -> Optional[int]:
        return self.class_of_word(multiply(adjoint(w), v))

    def letter_class(self, letter: Letter) -> Optional[int]:
        return self.class_lookup.get(Word(self.k, (letter,)))

    def principal_positions(self, degree: int) -> np.ndarray:
        """Positions of words with degree ``<= degree`` (a leading block)."""
        return np.array([i for i, w in enumerate(self.words) if w.degree <= degree])

    def expand(self, y: np.ndarray) -> np.ndarray:
        """Moment matrix from one value per class (zero class -> 0)."""
        ext = np.append(np.asarray(y, dtype=float), 0.0)
        return ext[self.class_matrix]

    def class_means(self, matrix: np.ndarray) -> np.ndarray:
        """Average of ``matrix`` over the positions of each class."""
        flat = np.asarray(matrix, float).ravel()
        cm = self.class_matrix.ravel()
        mask = cm >= 0
        sums = np.bincount(cm[mask], weights=flat[mask], minlength=self.n_classes)
        return sums / self.class_counts

    @property
    def class_counts(self) -> np.ndarray:
        cm = self.class_matrix.ravel()
        return np.bincount(cm[cm >= 0], minlength=self.n_classes).astype(float)


@dataclass(eq=False)
class MomentMatrix:
    index: MomentIndex
    values: np.ndarray

    def entry(self, w: Word, v: Word) -> float:
        return float(self.values[self.index.position[w], self.index.position[v]])


def build_index(game: NonlocalGame, scheme, cap: int = DEFAULT_WORD_CAP) -> MomentIndex:
    """Enumerate words and compute Hankel classes by canonical-form hashing."""
    if isinstance(scheme, int):
        scheme = LevelScheme.full(scheme)
    k = game.k
    words = scheme_words(game.answers, game.questions, k, scheme)
    if len(words) > cap:
        raise SizeGuardError(f"{len(words)} words exceed the cap of {cap}")
    level_words = {j: enumerate_words(game.answers, game.questions, j, scheme.n)
                   for j in range(1, k)}
    level_words[k] = words
    position = {w: i for i, w in enumerate(words)}

    size = len(words)
    canon = {}
    raw = np.empty((size, size), dtype=object)
    adjs = [adjoint(w) for w in words]
    for i in range(size):
        for j in range(i, size):
            u = multiply(adjs[i], words[j])
            if u.letters is None:
                c = None
            else:
                c = canonical(u)
                canon[c] = None
            raw[i, j] = raw[j, i] = c
    class_words = sorted(canon, key=word_key)
    lookup = {w: cid for cid, w in enumerate(class_words)}
    class_matrix = np.full((size, size), ZERO_CLASS, dtype=np.int64)
    for i in range(size):
        for j in range(i, size):
            c = raw[i, j]
            if c is not None:
                class_matrix[i, j] = class_matrix[j, i] = lookup[c]
    positions = [[] for _ in class_words]
    for i in range(size):
        for j in range(i, size):
            c = class_matrix[i, j]
            if c >= 0:
                positions[c].append((i, j))
    return MomentIndex(game, scheme, words, level_words, position, class_matrix,
                       class_words, lookup, positions)


# ---------------------------------------------------------------------------
# constraint rows

@dataclass(eq=False)
class ConstraintSystem:
    """Homogeneous rows over class ids plus the normalization row.

    ``rows`` is a list of ``{class_id: Fraction}`` dicts, each normalized so
    that its smallest class id has coefficient +1; ``families`` labels each
    row (``"relation"``, ``"ons(2)"``, ...).
    """

    n_classes: int
    rows: list
    families: list
    normalization_class: int = 0

    def __len__(self):
        return len(self.rows)

    def matrix(self) -> sp.csr_matrix:
        """Rows as a sparse float matrix of shape ``(len(rows), n_classes)``."""
        data, ri, ci = [], [], []
        for r, row in enumerate(self.rows):
            for c, v in row.items():
                ri.append(r)
                ci.append(c)
                data.append(float(v))
        return sp.csr_matrix((data, (ri, ci)), shape=(len(self.rows), self.n_classes))

    def family_counts(self) -> dict:
        counts = defaultdict(int)
        for f in self.families:
            counts[f] += 1
        return dict(counts)

    def to_text(self, index: Optional[MomentIndex] = None) -> str:
        """Auditable text export: one row per line, ``family: coef*c<id> ...``."""
        lines = [f"# classes {self.n_classes}", f"# rows {len(self.rows)}",
                 f"normalization: 1*c{self.normalization_class} = 1"]
        for fam, row in zip(self.families, self.rows):
            terms = " ".join(f"{_frac(v)}*c{c}" for c, v in sorted(row.items()))
            lines.append(f"{fam}: {terms} = 0")
        if index is not None:
            lines.append("# class words")
            for cid, w in enumerate(index.class_words):
                lines.append(f"c{cid} = {w}")
        return "\n".join(lines) + "\n"


def _frac(v: Fraction) -> str:
    return f"{v.numerator}" if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


class _RowCollector:
    """Accumulates rows with exact coefficients and drops duplicates."""

    def __init__(self):
        self.rows = []
        self.families = []
        self.seen = set()
        self.dropped_zero = 0
        self.dropped_duplicate = 0
        self.dropped_unrepresentable = 0

    def add(self, terms: dict, family: str):
        row = {c: Fraction(v) for c, v in terms.items() if v != 0}
        if not row:
            self.dropped_zero += 1
            return
        items = sorted(row.items())
        lead = items[0][1]
        key = tuple((c, v / lead) for c, v in items)
        if key in self.seen:
            self.dropped_duplicate += 1
            return
        self.seen.add(key)
        self.rows.append(dict(key))
        self.families.append(family)


def _accumulate(index: MomentIndex, terms: dict, coeff, word: Word) -> bool:
    """Add ``coeff * L(word)`` to ``terms``; False if the word has no class."""
    c = index.class_of_word(word)
    if c is None:
        return False
    if c != ZERO_CLASS:
        terms[c] = terms.get(c, 0) + coeff
    return True


def _relation_instances(game: NonlocalGame):
    """Level-k relations as lists of ``(coeff, letter or None)``; None is identity."""
    k = game.k
    a_all = list(itertools.product(*[range(n) for n in game.answers]))
    x_all = list(itertools.product(*[range(n) for n in game.questions]))
    for x in x_all:
        yield [(1, Letter(a, x)) for a in a_all] + [(-1, None)]
    for l in range(1, k):
        a_head = list(itertools.product(*[range(n) for n in game.answers[:l]]))
        x_head = list(itertools.product(*[range(n) for n in game.questions[:l]]))
        a_tail = itertools.product(*[range(n) for n in game.answers[l:]])
        x_tail = list(itertools.product(*[range(n) for n in game.questions[l:]]))
        for at in a_tail:
            for xt in x_tail:
                for xh, xh2 in itertools.combinations(x_head, 2):
                    yield ([(1, Letter(ah + at, xh + xt)) for ah in a_head]
                           + [(-1, Letter(ah + at, xh2 + xt)) for ah in a_head])


def relation_constraints(index: MomentIndex, collector: Optional[_RowCollector] = None):
    """Bordered relation rows ``L(w* R v) = 0`` with ``deg w + deg v + 1 <= 2n``."""
    own = collector is None
    collector = collector or _RowCollector()
    k, budget = index.k, 2 * index.n
    words = index.words
    relations = list(_relation_instances(index.game))
    ident = Word(k, ())
    for i, w in enumerate(words):
        wa = adjoint(w)
        for v in words[i:]:
            if w.degree + v.degree + 1 > budget:
                break
            for rel in relations:
                terms = {}
                ok = True
                for coeff, letter in rel:
                    mid = ident if letter is None else Word(k, (letter,))
                    if not _accumulate(index, terms, coeff, multiply(multiply(wa, mid), v)):
                        ok = False
                        break
                if ok:
                    collector.add(terms, "relation")
                else:
                    collector.dropped_unrepresentable += 1
    return collector.rows if own else collector


def ons_constraints(index: MomentIndex, j: int, collector: Optional[_RowCollector] = None):
    """Operationally non-signaling rows of party ``j`` (``2 <= j <= k``).

    For each suffix ``(a_{j+1..k}, x_{j+1..k})``, question pair
    ``x_j < x'_j``, words ``w, v`` at level ``j`` and a nonzero product
    ``u = r* s`` at level ``j-1`` with ``deg w + deg v + deg u <= 2n``, emit
    ``sum_{a_j} L(H(w* T_{a_j|x_j}(u) v)) - L(H(w* T_{a_j|x'_j}(u) v)) = 0``
    where ``H`` lifts level-j words to level k.  Any ``r, s`` produce a
    product whose reduced degree is at most ``deg r + deg s``, and every
    reduced ``u`` splits as ``r* s`` with ``deg r + deg s = deg u``, so
    enumerating reduced ``u`` directly covers the index set.  ``u = 1`` rows
    cancel identically and are skipped.
    """
    game = index.game
    k, n = game.k, index.n
    if not 2 <= j <= k:
        raise ValueError(f"party index j={j} outside [2, {k}]")
    own = collector is None
    collector = collector or _RowCollector()
    family = f"ons({j})"
    budget = 2 * n
    wj = enumerate_words(game.answers, game.questions, j, n)
    us = [u for u in enumerate_words(game.answers, game.questions, j - 1, 2 * n)
          if u.degree >= 1]
    suffix_a = list(itertools.product(*[range(m) for m in game.answers[j:]]))
    suffix_x = list(itertools.product(*[range(m) for m in game.questions[j:]]))
    qpairs = list(itertools.combinations(range(game.questions[j - 1]), 2))
    n_answers = game.answers[j - 1]

    def lift_u(a, x, u):
        return apply_homs((a,), (x,), u)

    lifted = {}
    for u in us:
        for x in range(game.questions[j - 1]):
            for a in range(n_answers):
                lifted[u, a, x] = lift_u(a, x, u)

    for sa in suffix_a:
        for sx in suffix_x:
            for x, x2 in qpairs:
                for u in us:
                    for i, w in enumerate(wj):
                        if w.degree + u.degree > budget:
                            break
                        wa = adjoint(w)
                        for v in wj[i:]:
                            if w.degree + v.degree + u.degree > budget:
                                break
                            terms = {}
                            ok = True
                            for coeff, xq in ((1, x), (-1, x2)):
                                for a in range(n_answers):
                                    mono = multiply(multiply(wa, lifted[u, a, xq]), v)
                                    mono = apply_homs(sa, sx, mono)
                                    if not _accumulate(index, terms, coeff, mono):
                                        ok = False
                                        break
                                if not ok:
                                    break
                            if ok:
                                collector.add(terms, family)
                            else:
                                collector.dropped_unrepresentable += 1
    return collector.rows if own else collector


def build_constraints(index: MomentIndex) -> ConstraintSystem:
    """All relation and ons rows, deduplicated, in deterministic order."""
    collector = _RowCollector()
    relation_constraints(index, collector)
    for j in range(2, index.k + 1):
        ons_constraints(index, j, collector)
    system = ConstraintSystem(index.n_classes, collector.rows, collector.families)
    system.stats = {
        "dropped_zero": collector.dropped_zero,
        "dropped_duplicate": collector.dropped_duplicate,
        "dropped_unrepresentable": collector.dropped_unrepresentable,
    }
    return system


def objective_vector(game: NonlocalGame, index: MomentIndex) -> dict:
    """Sparse objective ``{class_id: beta}`` on the classes of degree-1 letters."""
    out = {}
    for a in itertools.product(*[range(m) for m in game.answers]):
        for x in itertools.product(*[range(m) for m in game.questions]):
            beta = float(game.payoff[a + x])
            if beta == 0.0:
                continue
            c = index.letter_class(Letter(a, x))
            if c is None:
                raise WordError(f"letter f[{a}|{x}] missing from the index")
            out[c] = out.get(c, 0.0) + beta
    return out


def evaluate_objective(objective: dict, index: MomentIndex, gamma: np.ndarray) -> float:
    """``sum beta * Gamma[1, f]`` read from the identity row of ``gamma``."""
    total = 0.0
    for c, beta in objective.items():
        w = index.class_words[c]
        total += beta * gamma[0, index.position[w]]
    return total


# ---------------------------------------------------------------------------
# the constraint map on raw symmetric matrices

def svec_indices(size: int):
    """Upper-triangle positions in row-major order and their svec weights."""
    iu, ju = np.triu_indices(size)
    weights = np.where(iu == ju, 1.0, math.sqrt(2.0))
    return iu, ju, weights


def svec(matrix: np.ndarray) -> np.ndarray:
    """Orthonormal coordinates of a symmetric matrix (Frobenius isometry)."""
    iu, ju, wts = svec_indices(matrix.shape[0])
    return matrix[iu, ju] * wts


def smat(vec: np.ndarray, size: int) -> np.ndarray:
    iu, ju, wts = svec_indices(size)
    out = np.zeros((size, size))
    out[iu, ju] = vec / wts
    out[ju, iu] = vec / wts
    return out


@dataclass(eq=False)
class ConstraintMap:
    """Sparse matrix ``E`` acting on ``svec(Gamma)``.

    Rows are grouped into ``hankel`` (``Gamma_p - Gamma_q`` for positions in
    one class, each class as a star around its first position), ``zero``
    (entries whose word product vanishes) and the constraint families, where
    ``L(u)`` is read at the first position of ``u``'s class.
    """

    matrix: sp.csr_matrix
    families: list
    size: int

    def __call__(self, gamma: np.ndarray) -> np.ndarray:
        return self.matrix @ svec(gamma)


def constraint_map(index: MomentIndex, system: ConstraintSystem) -> ConstraintMap:
    size = index.size
    iu, ju, wts = svec_indices(size)
    col = {(int(i), int(j)): c for c, (i, j) in enumerate(zip(iu, ju))}
    data, ri, ci, fams = [], [], [], []
    r = 0

    def put(row_terms, fam):
        nonlocal r
        for (i, j), v in row_terms:
            c = col[(i, j)]
            ri.append(r)
            ci.append(c)
            data.append(v / wts[c])
        fams.append(fam)
        r += 1

    for positions in index.class_positions:
        first = positions[0]
        for p in positions[1:]:
            put([(first, 1.0), (p, -1.0)], "hankel")
    zero_i, zero_j = np.nonzero(np.triu(index.class_matrix == ZERO_CLASS))
    for i, j in zip(zero_i, zero_j):
        put([((int(i), int(j)), 1.0)], "zero")
    for fam, row in zip(system.families, system.rows):
        put([(index.class_positions[c][0], float(v)) for c, v in sorted(row.items())], fam)
    matrix = sp.csr_matrix((data, (ri, ci)), shape=(r, len(iu)))
    return ConstraintMap(matrix, fams, size)


def residual(index: MomentIndex, gamma, cmap: Optional[ConstraintMap] = None,
             system: Optional[ConstraintSystem] = None):
    """Evaluate ``E(Gamma)`` on raw entries.

    Returns
    -------
    (ndarray, float)
        The stacked residual vector and its Euclidean norm.
    """
    values = gamma.values if isinstance(gamma, MomentMatrix) else np.asarray(gamma, float)
    if values.shape != (index.size, index.size):
        raise ValueError(f"matrix shape {values.shape} does not match index size {index.size}")
    if cmap is None:
        cmap = constraint_map(index, system or build_constraints(index))
    sym = 0.5 * (values + values.T)
    vec = cmap(sym)
    return vec, float(np.linalg.norm(vec))


def assemble(game: NonlocalGame, scheme, cap: int = DEFAULT_WORD_CAP):
    """Build the SDP for ``game`` at ``scheme``.

    Returns the :class:`~seqnpa.sdp.SdpProblem` together with the index and
    constraint system it was built from.
    """
    from .sdp import SdpProblem

    index = build_index(game, scheme, cap=cap)
    system = build_constraints(index)
    objective = objective_vector(game, index)
    problem = SdpProblem.from_classes(
        class_matrix=index.class_matrix,
        rows=system.matrix(),
        normalization_class=system.normalization_class,
        objective=objective,
    )
    return problem, index, system

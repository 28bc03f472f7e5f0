"""Words in the sequential projection algebras.

A letter at level ``j`` is a generator ``f[a_1..a_j | x_1..x_j]``.  Letters
are self-adjoint projections; two letters sharing a question tuple are
orthogonal unless they are equal.  Those are the only rewrite rules: the
completeness and marginal sum relations are linear and live in the
constraint system, not here.  Under these rules a word is reduced iff no two
adjacent letters share a question tuple, and the stack-based reduction below
reaches that normal form in one pass.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import WordError

__all__ = [
    "Letter",
    "Word",
    "IDENTITY",
    "ZERO",
    "identity",
    "reduce_word",
    "adjoint",
    "multiply",
    "apply_hom",
    "apply_homs",
    "letters_at_level",
    "LevelScheme",
    "enumerate_words",
    "parse_word",
    "word_key",
]


class Letter(NamedTuple):
    answers: tuple
    questions: tuple

    @property
    def level(self) -> int:
        return len(self.answers)

    def __str__(self):
        return f"f[{_fmt(self.answers)}|{_fmt(self.questions)}]"


def _fmt(values):
    if all(v < 10 for v in values):
        return "".join(str(v) for v in values)
    return ",".join(str(v) for v in values)


class Word(NamedTuple):
    """A monomial at a fixed level.

    ``letters is None`` encodes the zero element; an empty tuple is the
    identity.  Words built through :func:`reduce_word` are in normal form.
    """

    level: int
    letters: Optional[tuple]

    @property
    def is_zero(self) -> bool:
        return self.letters is None

    @property
    def is_identity(self) -> bool:
        return self.letters == ()

    @property
    def degree(self) -> int:
        return 0 if self.letters is None else len(self.letters)

    def __str__(self):
        if self.letters is None:
            return "0"
        if not self.letters:
            return "1"
        return "*".join(str(f) for f in self.letters)

    def __mul__(self, other):
        return multiply(self, other)


def identity(level: int) -> Word:
    return Word(level, ())


def zero(level: int) -> Word:
    return Word(level, None)


IDENTITY = identity
ZERO = zero


def word_key(word: Word):
    """Total order used everywhere: degree first, then letters lexicographically."""
    if word.letters is None:
        return (-1, ())
    return (len(word.letters), word.letters)


def _reduce_letters(letters: Sequence[Letter]):
    out = []
    for f in letters:
        if out and out[-1].questions == f.questions:
            if out[-1].answers != f.answers:
                return None
            continue
        out.append(f)
    return tuple(out)


def reduce_word(word: Word) -> Word:
    """Normal form of ``word`` under projectivity and orthogonality."""
    if word.letters is None:
        return word
    for f in word.letters:
        if f.level != word.level:
            raise WordError(f"letter {f} has level {f.level}, word has level {word.level}")
    return Word(word.level, _reduce_letters(word.letters))


def make_word(letters: Iterable[Letter], level: Optional[int] = None) -> Word:
    letters = tuple(Letter(tuple(f[0]), tuple(f[1])) for f in letters)
    if level is None:
        if not letters:
            raise WordError("level required for the empty word")
        level = letters[0].level
    return reduce_word(Word(level, letters))


def adjoint(word: Word) -> Word:
    if word.letters is None:
        return word
    # letters are self-adjoint, and reversal of a reduced word is reduced
    return Word(word.level, word.letters[::-1])


def multiply(w: Word, v: Word) -> Word:
    if w.level != v.level:
        raise WordError(f"cannot multiply words of levels {w.level} and {v.level}")
    if w.letters is None or v.letters is None:
        return Word(w.level, None)
    if w.letters and v.letters and w.letters[-1].questions == v.letters[0].questions:
        if w.letters[-1].answers != v.letters[0].answers:
            return Word(w.level, None)
        return Word(w.level, w.letters + v.letters[1:])
    return Word(w.level, w.letters + v.letters)


def multiply_all(*words: Word) -> Word:
    out = words[0]
    for w in words[1:]:
        out = multiply(out, w)
    return out


def apply_hom(answer: int, question: int, word: Word) -> Word:
    """Lift a level ``j-1`` word to level ``j`` by appending ``(answer, question)``.

    The map sends identity to identity (bookkeeping convention; the abstract
    homomorphism is non-unital, which only matters through the completeness
    rows of the constraint system).
    """
    level = word.level + 1
    if word.letters is None:
        return Word(level, None)
    return Word(level, tuple(Letter(f.answers + (answer,), f.questions + (question,))
                             for f in word.letters))


def apply_homs(answers: Sequence[int], questions: Sequence[int], word: Word) -> Word:
    """Compose lifts: ``answers[0]`` is appended first (party ``level+1``)."""
    if word.letters is None:
        return Word(word.level + len(answers), None)
    suffix_a, suffix_x = tuple(answers), tuple(questions)
    if not suffix_a:
        return word
    return Word(word.level + len(suffix_a),
                tuple(Letter(f.answers + suffix_a, f.questions + suffix_x)
                      for f in word.letters))


def letters_at_level(answers: Sequence[int], questions: Sequence[int], level: int):
    """All letters at ``level`` for alphabet sizes of parties ``1..level``, sorted."""
    a_ranges = [range(n) for n in answers[:level]]
    x_ranges = [range(n) for n in questions[:level]]
    return sorted(Letter(a, x) for a in itertools.product(*a_ranges)
                  for x in itertools.product(*x_ranges))


@dataclass(frozen=True)
class LevelScheme:
    """Which words index the moment matrix.

    ``LevelScheme(n)`` is the full level ``n``; ``extra`` adds explicit
    words on top (for intermediate levels such as "1 + a few products").
    """

    n: int
    extra: tuple = field(default_factory=tuple)

    @classmethod
    def full(cls, n: int) -> "LevelScheme":
        return cls(int(n))

    @classmethod
    def plus(cls, n: int, extra: Iterable[Word]) -> "LevelScheme":
        return cls(int(n), tuple(extra))

    @classmethod
    def parse(cls, text: str) -> "LevelScheme":
        """Parse ``"2"``, ``"full(2)"`` or ``"plus(1, f[00|00]*f[11|11], ...)"``.

        Words in ``plus`` are parsed lazily by :func:`enumerate_words`, so
        they are stored as strings here.
        """
        text = text.strip()
        if re.fullmatch(r"\d+", text):
            return cls(int(text))
        m = re.fullmatch(r"full\((\d+)\)", text)
        if m:
            return cls(int(m.group(1)))
        m = re.fullmatch(r"plus\((\d+)\s*(?:,(.*))?\)", text)
        if m:
            parts = re.split(r",(?![^\[]*\])", m.group(2) or "")
            extra = tuple(s.strip() for s in parts if s.strip())
            return cls(int(m.group(1)), extra)
        raise WordError(f"cannot parse level scheme {text!r}")

    def __str__(self):
        if not self.extra:
            return f"full({self.n})"
        return "plus({}, {})".format(self.n, ", ".join(str(w) for w in self.extra))

    def _extra_words(self, level):
        out = []
        for w in self.extra:
            out.append(parse_word(w, level) if isinstance(w, str) else w)
        return out


def enumerate_words(answers: Sequence[int], questions: Sequence[int], level: int,
                    degree: int) -> list:
    """All reduced nonzero words of degree ``<= degree`` at ``level``.

    Ordered by degree, then lexicographically; the identity comes first.
    """
    letters = letters_at_level(answers, questions, level)
    words = [Word(level, ())]
    frontier = [()]
    for _ in range(degree):
        nxt = []
        for prefix in frontier:
            last_q = prefix[-1].questions if prefix else None
            for f in letters:
                if f.questions != last_q:
                    nxt.append(prefix + (f,))
        frontier = nxt
        words.extend(Word(level, t) for t in frontier)
    return words


def scheme_words(answers, questions, level, scheme: LevelScheme) -> list:
    """Words for a level scheme: the full level plus any extras, deduplicated."""
    words = enumerate_words(answers, questions, level, scheme.n)
    if scheme.extra:
        seen = set(words)
        for w in scheme._extra_words(level):
            w = reduce_word(w)
            if w.level != level:
                raise WordError(f"extra word {w} is not at level {level}")
            if not w.is_zero and w not in seen:
                seen.add(w)
                words.append(w)
        words.sort(key=word_key)
    return words


_TOKEN = re.compile(r"f\[([0-9,]*)\|([0-9,]*)\]")


def _parse_tuple(text):
    if "," in text:
        return tuple(int(v) for v in text.split(","))
    return tuple(int(c) for c in text)


def parse_word(text: str, level: Optional[int] = None) -> Word:
    """Inverse of ``str(word)``: ``f[01|10]*f[11|00]``, ``1`` or ``0``."""
    text = text.strip()
    if text in ("0", "1"):
        if level is None:
            raise WordError(f"level required to parse {text!r}")
        return Word(level, None if text == "0" else ())
    letters = []
    for token in text.split("*"):
        m = _TOKEN.fullmatch(token.strip())
        if not m:
            raise WordError(f"bad letter token {token!r}")
        a, x = _parse_tuple(m.group(1)), _parse_tuple(m.group(2))
        if len(a) != len(x):
            raise WordError(f"letter {token!r} has mismatched tuple lengths")
        letters.append(Letter(a, x))
    lvl = letters[0].level
    if level is not None and lvl != level:
        raise WordError(f"word {text!r} has level {lvl}, expected {level}")
    return reduce_word(Word(lvl, tuple(letters)))

"""Finite-dimensional sequential strategies in dilated form.

Hilbert space layout (tensor order)::

    H_1 (x) H_2 (x) ... (x) H_k (x) anc_k (x) ... (x) anc_2

Party 1 measures a PVM on ``H_1``.  Party ``j >= 2`` applies a unitary
``U_x`` on ``H_j (x) anc_j`` and reads its answer with the projectors
``Pi_a`` on ``anc_j``.  In the Heisenberg picture a level-k letter is

    F_1 = M[a_1|x_1],   F_j = U_{x_j}^dag (Pi_{a_j} F_{j-1}) U_{x_j},

so letters are genuine projections satisfying every relation of the word
algebra, and every word has a concrete operator.  The leakage knob replaces
``U_x`` by ``U_x R_x^eps`` where ``R_x`` rotates ``H_{j-1} (x) H_j``; the
answer-summed map of party ``j`` then depends on ``x`` and only the ons rows
are violated.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la
from scipy.stats import ortho_group

from .errors import StrategyError
from .game import NonlocalGame
from .words import Letter, Word

__all__ = [
    "DilatedStrategy",
    "letter_operator",
    "word_operator",
    "moment_matrix",
    "correlation",
    "score",
    "perturb",
    "random_strategy",
    "classical_strategy",
    "tsirelson_strategy",
    "ghz_strategy",
    "save_strategy",
    "load_strategy",
]

VALIDATION_TOL = 1e-10
IMAG_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class DilatedStrategy:
    """A k-party sequential strategy.

    Parameters
    ----------
    answers, questions : tuple of int
        Alphabet sizes of parties ``1..k``.
    system_dims : tuple of int
        ``dim H_j`` for ``j = 1..k``.
    ancilla_dims : tuple of int
        ``dim anc_j`` for ``j = 2..k``.
    state : ndarray
        Density matrix on the full space.
    measurement : list
        ``measurement[x][a]``: PVM of party 1 on ``H_1``.
    unitaries : list
        ``unitaries[j-2][x]``: unitary of party ``j`` on ``H_j (x) anc_j``.
    projectors : list
        ``projectors[j-2][a]``: projector of party ``j`` on ``anc_j``.
    leaks : list, optional
        ``leaks[j-2][x]``: unitary on ``H_{j-1} (x) H_j`` composed after
        ``U_x``; None means no leakage.
    """

    answers: tuple
    questions: tuple
    system_dims: tuple
    ancilla_dims: tuple
    state: np.ndarray
    measurement: list
    unitaries: list
    projectors: list
    leaks: Optional[list] = None
    seed: Optional[int] = None
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def k(self) -> int:
        return len(self.answers)

    @property
    def dims(self) -> tuple:
        """Dimensions of all tensor factors in layout order."""
        return tuple(self.system_dims) + tuple(reversed(self.ancilla_dims))

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def _factor(self, j: int, ancilla: bool = False) -> int:
        """Tensor-factor index of ``H_j`` or ``anc_j`` (parties numbered from 1)."""
        if not ancilla:
            return j - 1
        return self.k + (self.k - j)

    def validate(self) -> list:
        """Every invariant violation (empty list when valid)."""
        problems = []
        k = self.k
        tol = VALIDATION_TOL
        if len(self.questions) != k or len(self.system_dims) != k:
            problems.append("alphabet and system dimension lists must have length k")
        if len(self.ancilla_dims) != k - 1:
            problems.append(f"need {k - 1} ancilla dimensions")
            return problems
        for j in range(2, k + 1):
            if self.ancilla_dims[j - 2] < self.answers[j - 1]:
                problems.append(f"ancilla of party {j} smaller than its answer alphabet")
        D = self.dim
        rho = self.state
        if rho.shape != (D, D):
            problems.append(f"state shape {rho.shape} != ({D}, {D})")
        else:
            if not np.allclose(rho, rho.conj().T, atol=tol):
                problems.append("state is not Hermitian")
            if abs(np.trace(rho) - 1) > tol:
                problems.append(f"state trace {np.trace(rho).real:.3g} != 1")
            if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0] < -tol:
                problems.append("state is not PSD")
        d1 = self.system_dims[0]
        if len(self.measurement) != self.questions[0]:
            problems.append("party 1 needs one measurement per question")
        for x, pvm in enumerate(self.measurement):
            if len(pvm) != self.answers[0]:
                problems.append(f"party 1 question {x}: wrong number of outcomes")
                continue
            problems += _check_pvm(pvm, d1, f"party 1 question {x}", tol)
        for j in range(2, k + 1):
            dj = self.system_dims[j - 1] * self.ancilla_dims[j - 2]
            us = self.unitaries[j - 2]
            if len(us) != self.questions[j - 1]:
                problems.append(f"party {j} needs one unitary per question")
            for x, u in enumerate(us):
                if u.shape != (dj, dj):
                    problems.append(f"party {j} unitary {x} has shape {u.shape}")
                elif not np.allclose(u.conj().T @ u, np.eye(dj), atol=tol):
                    problems.append(f"party {j} unitary {x} is not unitary")
            pis = self.projectors[j - 2]
            if len(pis) != self.answers[j - 1]:
                problems.append(f"party {j}: wrong number of projectors")
            else:
                problems += _check_pvm(pis, self.ancilla_dims[j - 2], f"party {j}", tol)
            if self.leaks is not None and self.leaks[j - 2] is not None:
                dl = self.system_dims[j - 2] * self.system_dims[j - 1]
                for x, r in enumerate(self.leaks[j - 2]):
                    if r.shape != (dl, dl) or not np.allclose(r.conj().T @ r, np.eye(dl),
                                                               atol=tol):
                        problems.append(f"party {j} leak {x} is not a unitary on "
                                        f"H_{j - 1} (x) H_{j}")
        return problems


def _check_pvm(ops, dim, label, tol):
    problems = []
    total = np.zeros((dim, dim), complex)
    for a, p in enumerate(ops):
        if p.shape != (dim, dim):
            problems.append(f"{label} outcome {a}: shape {p.shape} != ({dim}, {dim})")
            return problems
        if not np.allclose(p, p.conj().T, atol=tol) or not np.allclose(p @ p, p, atol=tol):
            problems.append(f"{label} outcome {a} is not an orthogonal projector")
        total = total + p
    if not np.allclose(total, np.eye(dim), atol=tol):
        problems.append(f"{label} outcomes do not sum to identity")
    return problems


def _embed(op: np.ndarray, targets: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """Lift ``op`` acting on the factors ``targets`` (in that order) to the full space."""
    n = len(dims)
    rest = [i for i in range(n) if i not in targets]
    order = list(targets) + rest
    d_rest = math.prod(dims[i] for i in rest)
    full = np.kron(op, np.eye(d_rest))
    shape = [dims[i] for i in order]
    full = full.reshape(shape + shape)
    inv = np.argsort(order)
    full = full.transpose(list(inv) + [n + i for i in inv])
    D = math.prod(dims)
    return full.reshape(D, D)


def _party_unitary(strategy: DilatedStrategy, j: int, x: int) -> np.ndarray:
    key = ("U", j, x)
    cache = strategy._cache
    if key not in cache:
        dims = strategy.dims
        u = _embed(strategy.unitaries[j - 2][x],
                   [strategy._factor(j), strategy._factor(j, ancilla=True)], dims)
        if strategy.leaks is not None and strategy.leaks[j - 2] is not None:
            r = _embed(strategy.leaks[j - 2][x],
                       [strategy._factor(j - 1), strategy._factor(j)], dims)
            u = u @ r
        cache[key] = u
    return cache[key]


def letter_operator(strategy: DilatedStrategy, letter: Letter) -> np.ndarray:
    """Concrete projection of a level-k letter on the full space."""
    if letter.level != strategy.k:
        raise StrategyError(f"letter {letter} is not at level {strategy.k}")
    key = ("F", letter)
    cache = strategy._cache
    if key in cache:
        return cache[key]
    dims = strategy.dims
    a, x = letter.answers, letter.questions
    for j in range(strategy.k):
        if not (0 <= a[j] < strategy.answers[j] and 0 <= x[j] < strategy.questions[j]):
            raise StrategyError(f"letter {letter} outside the alphabets")
    F = _embed(strategy.measurement[x[0]][a[0]], [0], dims)
    for j in range(2, strategy.k + 1):
        pi = _embed(strategy.projectors[j - 2][a[j - 1]],
                    [strategy._factor(j, ancilla=True)], dims)
        u = _party_unitary(strategy, j, x[j - 1])
        F = u.conj().T @ (pi @ F) @ u
    cache[key] = F
    return F


def word_operator(strategy: DilatedStrategy, word: Word) -> np.ndarray:
    """Product of the letter operators of ``word`` (identity for the empty word)."""
    D = strategy.dim
    if word.letters is None:
        return np.zeros((D, D), complex)
    out = np.eye(D, dtype=complex)
    for f in word.letters:
        out = out @ letter_operator(strategy, f)
    return out


def moment_matrix(strategy: DilatedStrategy, index, real_part: bool = False) -> np.ndarray:
    """``Gamma[w, v] = tr(rho w^dag v)`` over the words of ``index`` (real part).

    Parameters
    ----------
    real_part : bool
        Accept a genuinely complex matrix and return its real part.  The
        constraint rows are real and the real part of a Hermitian PSD matrix
        is PSD, so this is still a valid (near-)feasible point.  Used for
        perturbed strategies with complex states such as GHZ.

    Raises
    ------
    StrategyError
        If ``real_part`` is false and the imaginary part exceeds ``1e-8``.
    """
    words = index.words if hasattr(index, "words") else index
    rho = strategy.state
    ops = [word_operator(strategy, w) for w in words]
    V = np.stack([o.ravel() for o in ops])
    R = np.stack([(o @ rho).ravel() for o in ops])
    # tr(rho W_i^dag W_j) = tr(W_i^dag W_j rho) = <vec W_i, vec W_j rho>
    G = V.conj() @ R.T
    G = 0.5 * (G + G.conj().T)
    imag = float(np.max(np.abs(G.imag))) if G.size else 0.0
    if imag > IMAG_TOL and not real_part:
        raise StrategyError(f"moment matrix has imaginary part {imag:.3g}; the "
                            "hierarchy uses real symmetric moment matrices")
    return np.ascontiguousarray(G.real)


def correlation(strategy: DilatedStrategy) -> np.ndarray:
    """``p[a_1..a_k, x_1..x_k]`` from the degree-1 letters."""
    shape = tuple(strategy.answers) + tuple(strategy.questions)
    p = np.zeros(shape)
    rho = strategy.state
    for a in itertools.product(*[range(n) for n in strategy.answers]):
        for x in itertools.product(*[range(n) for n in strategy.questions]):
            F = letter_operator(strategy, Letter(a, x))
            p[a + x] = float(np.real(np.trace(rho @ F)))
    return p


def score(strategy: DilatedStrategy, game: NonlocalGame) -> float:
    if tuple(game.answers) != tuple(strategy.answers) or \
            tuple(game.questions) != tuple(strategy.questions):
        raise StrategyError("strategy alphabets do not match the game")
    return float(np.sum(game.payoff * correlation(strategy)))


# ---------------------------------------------------------------------------
# constructors

def _basis_projectors(dim: int, n_outcomes: int):
    """Projectors onto basis vectors grouped by index mod ``n_outcomes``."""
    out = []
    for a in range(n_outcomes):
        diag = np.array([1.0 if i % n_outcomes == a else 0.0 for i in range(dim)])
        out.append(np.diag(diag).astype(complex))
    return out


def _controlled_shift(pvm, anc_dim: int) -> np.ndarray:
    """``sum_a P_a (x) X^a`` with ``X`` the cyclic shift on the ancilla."""
    shift = np.roll(np.eye(anc_dim), 1, axis=0)
    return sum(np.kron(p, np.linalg.matrix_power(shift, a)) for a, p in enumerate(pvm))


def _pvm_from_unitary(v: np.ndarray, n_outcomes: int):
    return [v @ p @ v.conj().T for p in _basis_projectors(v.shape[0], n_outcomes)]


def _ancilla_zero_state(system_state: np.ndarray, ancilla_dims) -> np.ndarray:
    anc = np.zeros((math.prod(ancilla_dims),) * 2)
    anc[0, 0] = 1.0
    return np.kron(system_state, anc)


def _haar_orthogonal(dim: int, rng) -> np.ndarray:
    if dim == 1:
        return np.eye(1, dtype=complex)
    return ortho_group.rvs(dim, random_state=rng).astype(complex)


def random_strategy(game, dims: Sequence[int] = None, seed: int = 0,
                    ancilla_dims: Sequence[int] = None) -> DilatedStrategy:
    """Haar-random real orthogonal unitaries, real Wishart state, basis projectors.

    Real matrices keep every moment matrix real, as the hierarchy requires.
    ``dims`` are the system dimensions ``dim H_j`` (default 2 each);
    ancillas default to the answer alphabet sizes.
    """
    answers, questions = tuple(game.answers), tuple(game.questions)
    k = len(answers)
    dims = tuple(dims) if dims is not None else (2,) * k
    ancilla_dims = (tuple(ancilla_dims) if ancilla_dims is not None
                    else tuple(answers[1:]))
    rng = np.random.default_rng(seed)
    measurement = []
    for x in range(questions[0]):
        v = _haar_orthogonal(dims[0], rng)
        measurement.append(_pvm_from_unitary(v, answers[0]))
    unitaries, projectors = [], []
    for j in range(2, k + 1):
        dj = dims[j - 1] * ancilla_dims[j - 2]
        unitaries.append([_haar_orthogonal(dj, rng)
                          for _ in range(questions[j - 1])])
        projectors.append(_basis_projectors(ancilla_dims[j - 2], answers[j - 1]))
    D = math.prod(dims) * math.prod(ancilla_dims)
    g = rng.standard_normal((D, D))
    rho = (g @ g.T).astype(complex)
    rho /= np.trace(rho).real
    return DilatedStrategy(answers, questions, dims, ancilla_dims, rho, measurement,
                           unitaries, projectors, seed=seed, label=f"random(seed={seed})")


def classical_strategy(game, responses=None, noisy: bool = False) -> DilatedStrategy:
    """Deterministic strategy ``a_j = responses[j][x_j]`` in diagonal form.

    With ``noisy=True`` every party instead outputs a uniformly random
    answer independent of its question (``responses`` is ignored).
    """
    answers, questions = tuple(game.answers), tuple(game.questions)
    k = len(answers)
    if noisy:
        dims = answers
        measurement = [_basis_projectors(answers[0], answers[0])
                       for _ in range(questions[0])]
        unitaries, projectors = [], []
        for j in range(2, k + 1):
            pvm = _basis_projectors(answers[j - 1], answers[j - 1])
            unitaries.append([_controlled_shift(pvm, answers[j - 1])
                              for _ in range(questions[j - 1])])
            projectors.append(_basis_projectors(answers[j - 1], answers[j - 1]))
        system = np.eye(math.prod(dims)) / math.prod(dims)
        rho = _ancilla_zero_state(system, answers[1:]).astype(complex)
        return DilatedStrategy(answers, questions, dims, answers[1:], rho, measurement,
                               unitaries, projectors, label="uniform-noise")
    if responses is None:
        responses = [[0] * q for q in questions]
    dims = (1,) * k
    measurement = []
    for x in range(questions[0]):
        measurement.append([np.eye(1, dtype=complex) * (responses[0][x] == a)
                            for a in range(answers[0])])
    unitaries, projectors = [], []
    for j in range(2, k + 1):
        d = answers[j - 1]
        shift = np.roll(np.eye(d), 1, axis=0)
        unitaries.append([np.linalg.matrix_power(shift, responses[j - 1][x]).astype(complex)
                          for x in range(questions[j - 1])])
        projectors.append(_basis_projectors(d, d))
    rho = _ancilla_zero_state(np.eye(1), answers[1:]).astype(complex)
    return DilatedStrategy(answers, questions, dims, answers[1:], rho, measurement,
                           unitaries, projectors, label=f"classical{responses}")


def _observable_pvm(obs: np.ndarray):
    """``(1 + O)/2, (1 - O)/2`` for a +-1 observable: answer 0 is outcome +1."""
    eye = np.eye(obs.shape[0])
    return [(eye + obs) / 2, (eye - obs) / 2]


_X = np.array([[0, 1], [1, 0]], complex)
_Y = np.array([[0, -1j], [1j, 0]], complex)
_Z = np.array([[1, 0], [0, -1]], complex)


def _local_measurement_strategy(game, state, observables, label):
    """Qubit strategy where party ``j`` measures ``observables[j][x]`` on ``H_j``."""
    k = game.k
    measurement = [_observable_pvm(o) for o in observables[0]]
    unitaries, projectors = [], []
    for j in range(2, k + 1):
        unitaries.append([_controlled_shift(_observable_pvm(o), 2)
                          for o in observables[j - 1]])
        projectors.append(_basis_projectors(2, 2))
    rho = _ancilla_zero_state(np.outer(state, state.conj()), (2,) * (k - 1))
    return DilatedStrategy(tuple(game.answers), tuple(game.questions), (2,) * k,
                           (2,) * (k - 1), rho, measurement, unitaries, projectors,
                           label=label)


def tsirelson_strategy(game) -> DilatedStrategy:
    """Maximally entangled qubits with the optimal CHSH observables."""
    if tuple(game.answers) != (2, 2) or tuple(game.questions) != (2, 2):
        raise StrategyError("the Tsirelson strategy needs a 2-party binary game")
    phi = np.array([1, 0, 0, 1], complex) / math.sqrt(2)
    s = 1 / math.sqrt(2)
    first = [(_Z + _X) * s, (_Z - _X) * s]
    second = [_Z, _X]
    return _local_measurement_strategy(game, phi, [first, second], "tsirelson")


def ghz_strategy(game) -> DilatedStrategy:
    """GHZ state ``(|000> + i|111>)/sqrt 2``; question 0 measures X, question 1 Y.

    Attains 4 on the Mermin expression ``<A0B0C1> + <A0B1C0> + <A1B0C0> -
    <A1B1C1>``.
    """
    if tuple(game.answers) != (2, 2, 2) or tuple(game.questions) != (2, 2, 2):
        raise StrategyError("the GHZ strategy needs a 3-party binary game")
    psi = np.zeros(8, complex)
    psi[0] = 1 / math.sqrt(2)
    psi[7] = 1j / math.sqrt(2)
    obs = [_X, _Y]
    return _local_measurement_strategy(game, psi, [obs, obs, obs], "ghz")


def _leak_generator(dim: int, x: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, x])
    g = rng.standard_normal((dim, dim))
    h = 0.5 * (g - g.T)
    return h / np.linalg.norm(h, 2)


def perturb(strategy: DilatedStrategy, eps: float, seed: int = 0) -> DilatedStrategy:
    """Compose every party's unitary with the rotation ``R_x^eps = exp(eps A_x)``.

    ``A_x`` is a fixed, seeded, unit-norm real antisymmetric generator on
    ``H_{j-1} (x) H_j``, different for each question.  ``eps = 0`` returns
    the strategy unchanged.
    """
    if not 0.0 <= eps <= 0.5:
        raise StrategyError(f"eps must lie in [0, 1/2], got {eps}")
    if eps == 0.0:
        return strategy
    leaks = []
    for j in range(2, strategy.k + 1):
        dl = strategy.system_dims[j - 2] * strategy.system_dims[j - 1]
        leaks.append([la.expm(eps * _leak_generator(dl, x, seed + j)).astype(complex)
                      for x in range(strategy.questions[j - 1])])
    return replace(strategy, leaks=leaks, label=f"{strategy.label}+leak({eps:g})",
                   _cache={})


# ---------------------------------------------------------------------------
# serialization

def _enc(m):
    m = np.asarray(m, complex)
    return {"shape": list(m.shape), "re": m.real.ravel().tolist(), "im": m.imag.ravel().tolist()}


def _dec(d):
    return (np.asarray(d["re"], float) + 1j * np.asarray(d["im"], float)).reshape(d["shape"])


def strategy_to_dict(strategy: DilatedStrategy) -> dict:
    """JSON-ready dictionary.  Complex matrices are stored as row-major
    ``re``/``im`` float lists with an explicit ``shape``."""
    return {
        "answers": list(strategy.answers),
        "questions": list(strategy.questions),
        "system_dims": list(strategy.system_dims),
        "ancilla_dims": list(strategy.ancilla_dims),
        "seed": strategy.seed,
        "label": strategy.label,
        "state": _enc(strategy.state),
        "measurement": [[_enc(p) for p in pvm] for pvm in strategy.measurement],
        "unitaries": [[_enc(u) for u in us] for us in strategy.unitaries],
        "projectors": [[_enc(p) for p in ps] for ps in strategy.projectors],
        "leaks": None if strategy.leaks is None else
        [None if ls is None else [_enc(r) for r in ls] for ls in strategy.leaks],
    }


def strategy_from_dict(d: dict) -> DilatedStrategy:
    s = DilatedStrategy(
        tuple(d["answers"]), tuple(d["questions"]), tuple(d["system_dims"]),
        tuple(d["ancilla_dims"]), _dec(d["state"]),
        [[_dec(p) for p in pvm] for pvm in d["measurement"]],
        [[_dec(u) for u in us] for us in d["unitaries"]],
        [[_dec(p) for p in ps] for ps in d["projectors"]],
        None if d.get("leaks") is None else
        [None if ls is None else [_dec(r) for r in ls] for ls in d["leaks"]],
        d.get("seed"), d.get("label", ""))
    problems = s.validate()
    if problems:
        raise StrategyError("invalid strategy: " + "; ".join(problems))
    return s


def save_strategy(strategy: DilatedStrategy, path) -> None:
    Path(path).write_text(json.dumps(strategy_to_dict(strategy)) + "\n")


def load_strategy(path) -> DilatedStrategy:
    return strategy_from_dict(json.loads(Path(path).read_text()))

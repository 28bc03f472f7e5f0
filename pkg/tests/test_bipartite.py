import numpy as np
import pytest

from seqnpa.bipartite import build_bipartite
from seqnpa.errors import GameError
from seqnpa.sdp import solve


def _mapped_rows(prog, problem, index):
    """Bipartite rows with columns renumbered to the sequential class ids."""
    perm = np.empty(len(prog.classes), dtype=int)
    for u, c in prog.classes.items():
        perm[c] = index.class_of_word(prog.sequential_word(u))
    assert sorted(perm) == list(range(index.n_classes))
    out = np.zeros((problem.rows.shape[0], index.n_classes))
    out[:, perm] = problem.rows.toarray()
    return out


def test_same_classes_and_row_space(chsh, chsh1):
    prog = build_bipartite(chsh, 1)
    problem = prog.problem()
    assert len(prog.words) == 17 and len(prog.classes) == chsh1.index.n_classes
    a = _mapped_rows(prog, problem, chsh1.index)
    b = chsh1.problem.rows.toarray()
    ra, rb = np.linalg.matrix_rank(a), np.linalg.matrix_rank(b)
    assert ra == rb == np.linalg.matrix_rank(np.vstack([a, b]))
    assert problem.parametrization().dim == chsh1.problem.parametrization().dim == 23


def test_values_agree_level1(chsh, chsh1, chsh_corr):
    sol = solve(build_bipartite(chsh, 1).problem())
    assert abs(sol.value - chsh1.solution.value) <= 1e-6
    sol = solve(build_bipartite(chsh_corr, 1).problem())
    assert sol.value == pytest.approx(2 * np.sqrt(2), abs=1e-5)


def test_objective_matches(chsh, chsh1):
    prog = build_bipartite(chsh, 1)
    obj = prog.objective()
    assert len(obj) == 8 and all(v == 0.25 for v in obj.values())


def test_requires_two_parties(mermin):
    with pytest.raises(GameError):
        build_bipartite(mermin, 1)

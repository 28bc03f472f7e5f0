"""Sequential NPA hierarchy for multipartite nonlocal games.

Modules
-------
game        games, classical value, game files
words       word algebra of the sequential projection algebras
hierarchy   moment index, Hankel classes, constraint rows
sdp         class-structured SDPs, ADMM solver, SDPA interop
strategy    dilated sequential strategies and their moment matrices
repair      projection / mixing / renormalization of near-feasible matrices
certify     flatness, soundness, monotonicity and norm audits
cli         the ``seqnpa`` command
"""

__version__ = "0.1.0"

from .game import NonlocalGame, builtin_game, classical_value, load_game  # noqa: E402
from .hierarchy import assemble, build_index  # noqa: E402
from .sdp import SdpProblem, SdpSolution, solve  # noqa: E402
from .words import LevelScheme, Word, parse_word  # noqa: E402

__all__ = [
    "NonlocalGame",
    "builtin_game",
    "classical_value",
    "load_game",
    "assemble",
    "build_index",
    "SdpProblem",
    "SdpSolution",
    "solve",
    "LevelScheme",
    "Word",
    "parse_word",
]

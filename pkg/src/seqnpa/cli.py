"""Command-line interface: ``seqnpa <command> [options]``.

Numbers go to files in the output directory (``--out``, default
``$SEQNPA_OUT`` or ``./seqnpa-runs``); a short human summary goes to stdout.
Every run writes ``manifest.json`` with the configuration, seeds, library
versions and a SHA-256 checksum of each output file.

Exit codes: 0 success, 1 failed audit / non-convergence / module error,
2 usage error or unreadable game file.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .certify import (
    audit_monotonicity,
    audit_norm_bound,
    audit_soundness,
    flatness,
    reference_strategies,
)
from .errors import EnumerationTooLarge, GameError, SeqNPAError
from .game import BUILTIN_GAMES, builtin_game, classical_value, load_game
from .hierarchy import assemble, build_index, evaluate_objective, objective_vector
from .repair import RepairContext, StrictFeasiblePoint, repair, strict_feasible
from .sdp import DEFAULT_MAX_ITERS, DEFAULT_TOL, export_sdpa, import_sdpa, solve
from .strategy import (
    classical_strategy,
    correlation,
    moment_matrix,
    perturb,
    random_strategy,
    save_strategy,
    score,
)
from .words import LevelScheme

OUT_ENV = "SEQNPA_OUT"
DEFAULT_OUT = "seqnpa-runs"


class UsageError(Exception):
    pass


def _eps_list(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from None
    if not vals or any(not 0.0 <= v <= 0.5 for v in vals):
        raise argparse.ArgumentTypeError("eps values must lie in [0, 0.5]")
    return vals


def _dims(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimension list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--game", required=True,
                        help=f"builtin ({', '.join(sorted(BUILTIN_GAMES))}) or JSON path")
    common.add_argument("--level", type=int, default=1, help="hierarchy level n")
    common.add_argument("--scheme", default=None,
                        help='level scheme, e.g. "full(2)" or "plus(1, f[00|00]*f[11|11])"')
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--eps", type=_eps_list, default=[1e-2, 1e-3, 1e-4])
    common.add_argument("--samples", type=int, default=64)
    common.add_argument("--out", default=None, help=f"output directory (env {OUT_ENV})")
    common.add_argument("--format", choices=("text", "json"), default="text")

    parser = argparse.ArgumentParser(prog="seqnpa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"seqnpa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the hierarchy")
    sub.add_parser("classical", parents=[common], help="brute-force classical value")
    p = sub.add_parser("repair", parents=[common], help="repair perturbed strategies")
    p.add_argument("--strategy", default="reference", choices=("reference", "random"))
    p = sub.add_parser("audit", parents=[common], help="run audits")
    p.add_argument("--audit", default="soundness",
                   choices=("soundness", "monotonicity", "flatness", "norm", "all"))
    p.add_argument("--strategies", type=int, default=100)
    p.add_argument("--n-max", type=int, default=2)
    p = sub.add_parser("export-sdpa", parents=[common], help="write the SDP in SDPA format")
    p.add_argument("--verify", action="store_true",
                   help="re-import, check byte-identical re-export and re-solve")
    p = sub.add_parser("simulate", parents=[common], help="simulate a strategy")
    p.add_argument("--strategy", default="random",
                   choices=("random", "reference", "classical", "noise"))
    p.add_argument("--dims", type=_dims, default=None, help="system dimensions, e.g. 2,2")
    return parser


def _load_game(spec: str):
    if spec in BUILTIN_GAMES:
        return builtin_game(spec)
    if not Path(spec).exists() and not spec.endswith(".json"):
        builtin_game(spec)  # raises with the list of builtin names
    return load_game(spec)


def _scheme(args):
    return LevelScheme.parse(args.scheme) if args.scheme else LevelScheme.full(args.level)


class Run:
    """Output directory bookkeeping and the manifest."""

    def __init__(self, args):
        self.args = args
        base = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
        self.dir = Path(base)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.summary = {}

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def write_json(self, name, data):
        self.path(name).write_text(json.dumps(data, indent=1, sort_keys=True,
                                              default=_json_default) + "\n")

    def write_text(self, name, text):
        self.path(name).write_text(text)

    def save_npy(self, name, array):
        np.save(self.path(name), np.asarray(array))

    def finish(self, exit_code: int):
        config = {k: v for k, v in vars(self.args).items()}
        manifest = {
            "command": self.args.command,
            "config": config,
            "seed": self.args.seed,
            "exit_code": exit_code,
            "summary": self.summary,
            "versions": {"seqnpa": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "files": {name: _sha256(self.dir / name) for name in sorted(set(self.files))},
        }
        (self.dir / "manifest.json").write_text(
            json.dumps(manifest, indent=1, sort_keys=True, default=_json_default) + "\n")
        if self.args.format == "json":
            print(json.dumps(self.summary, sort_keys=True, default=_json_default))
        else:
            for k, v in self.summary.items():
                print(f"{k}: {v}")
        return exit_code


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (LevelScheme, Path)):
        return str(o)
    raise TypeError(type(o))


def cmd_solve(args, run: Run) -> int:
    game, scheme = _load_game(args.game), _scheme(args)
    t0 = time.perf_counter()
    problem, index, system = assemble(game, scheme)
    sol = solve(problem, tol=args.tol, max_iters=args.max_iters, seed=args.seed)
    elapsed = time.perf_counter() - t0
    report = dict(sol.summary(), game=game.name, game_digest=game.digest(),
                  scheme=str(scheme), words=index.size, classes=index.n_classes,
                  rows=len(system), free_dim=problem.parametrization().dim,
                  seconds=round(elapsed, 3))
    run.write_json("solution.json", report)
    run.save_npy("moment_matrix.npy", sol.matrix)
    run.write_text("words.txt", "\n".join(str(w) for w in index.words) + "\n")
    run.summary.update(value=sol.value, certified_value=sol.certified_value,
                       converged=sol.converged, iterations=sol.iterations)
    return 0 if sol.converged else 1


def cmd_classical(args, run: Run) -> int:
    game = _load_game(args.game)
    try:
        value = classical_value(game)
    except EnumerationTooLarge as exc:
        run.summary["error"] = str(exc)
        print(f"refused: {exc}", file=sys.stderr)
        return 1
    run.write_json("classical.json", {"game": game.name, "game_digest": game.digest(),
                                      "classical_value": value})
    run.summary["classical_value"] = value
    return 0


def _strict_point(args, game, scheme, run: Run) -> StrictFeasiblePoint:
    cache = run.dir / f"strict_{game.digest()}_{scheme}.npz".replace(" ", "")
    if cache.exists():
        return StrictFeasiblePoint.load(cache)
    point = strict_feasible(game, scheme, samples=args.samples, seed=args.seed)
    point.save(cache)
    run.files.append(cache.name)
    return point


def _base_strategy(args, game):
    refs = reference_strategies(game)
    if getattr(args, "strategy", "reference") == "reference" and refs:
        return next(iter(refs.values()))
    return random_strategy(game, seed=args.seed)


def cmd_repair(args, run: Run) -> int:
    game, scheme = _load_game(args.game), _scheme(args)
    strict = _strict_point(args, game, scheme, run)
    ctx = RepairContext.build(game, scheme, strict=strict)
    base = _base_strategy(args, game)
    table = ["eps\tinput_residual\ttotal_distance\tmix_weight\tfinal_residual"]
    distances = []
    for eps in args.eps:
        gamma_comp = moment_matrix(perturb(base, eps, seed=args.seed), ctx.index,
                                   real_part=True)
        gamma, report = repair(gamma_comp, ctx)
        tag = f"{eps:g}"
        report.save(run.path(f"repair_eps{tag}.json"))
        run.save_npy(f"repaired_eps{tag}.npy", gamma)
        table.append(f"{eps:g}\t{report.input_residual:.6e}\t{report.total_distance:.6e}"
                     f"\t{report.mix_weight:.6e}\t{report.final_residual:.6e}")
        distances.append(report.total_distance)
    run.write_text("distances.tsv", "\n".join(table) + "\n")
    run.summary.update(strategy=base.label, mu=strict.mu, pinv_norm=ctx.pinv.op_norm,
                       distances={f"{e:g}": d for e, d in zip(args.eps, distances)})
    return 0


def cmd_audit(args, run: Run) -> int:
    game, scheme = _load_game(args.game), _scheme(args)
    kinds = ("soundness", "monotonicity", "flatness", "norm") if args.audit == "all" \
        else (args.audit,)
    ok = True
    for kind in kinds:
        if kind == "soundness":
            rep = audit_soundness(game, scheme, strategies=args.strategies, seed=args.seed,
                                  tol=args.tol)
        elif kind == "monotonicity":
            rep = audit_monotonicity(game, n_max=args.n_max, tol=args.tol)
        else:
            problem, index, _ = assemble(game, scheme)
            sol = solve(problem, tol=args.tol, max_iters=args.max_iters, seed=args.seed)
            if kind == "norm":
                rep = audit_norm_bound(sol.matrix, index)
            else:
                verdict = flatness(sol.matrix, index)
                run.write_json("flatness.json", verdict.to_dict())
                run.summary.update(flat=verdict.flat, rank_full=verdict.rank_full,
                                   rank_principal=verdict.rank_principal)
                continue
        run.write_text(f"audit_{kind}.txt", rep.to_text())
        print(rep.result_line())
        ok = ok and rep.passed
        run.summary[kind] = "PASS" if rep.passed else "FAIL"
    return 0 if ok else 1


def cmd_export_sdpa(args, run: Run) -> int:
    game, scheme = _load_game(args.game), _scheme(args)
    problem, _, _ = assemble(game, scheme)
    text = export_sdpa(problem)
    run.write_text("problem.dat-s", text)
    run.summary["variables"] = problem.n_vars
    if not args.verify:
        return 0
    again = import_sdpa(run.dir / "problem.dat-s")
    identical = export_sdpa(again) == text
    s1 = solve(problem, tol=args.tol, max_iters=args.max_iters, seed=args.seed)
    s2 = solve(again, tol=args.tol, max_iters=args.max_iters, seed=args.seed)
    diff = abs(s1.value - s2.value)
    run.summary.update(byte_identical=identical, value=s1.value, reimported_value=s2.value,
                       value_difference=diff)
    return 0 if identical and diff <= 2 * args.tol else 1


def cmd_simulate(args, run: Run) -> int:
    game, scheme = _load_game(args.game), _scheme(args)
    if args.strategy == "random":
        strat = random_strategy(game, args.dims, seed=args.seed)
    elif args.strategy == "reference":
        refs = reference_strategies(game)
        if not refs:
            raise UsageError(f"no reference strategy for game {game.name}")
        strat = next(iter(refs.values()))
    elif args.strategy == "classical":
        strat = classical_strategy(game)
    else:
        strat = classical_strategy(game, noisy=True)
    eps = args.eps[0] if len(args.eps) == 1 else 0.0
    strat = perturb(strat, eps, seed=args.seed)
    index = build_index(game, scheme)
    gamma = moment_matrix(strat, index, real_part=True)
    save_strategy(strat, run.path("strategy.json"))
    run.save_npy("moment_matrix.npy", gamma)
    run.save_npy("correlation.npy", correlation(strat))
    norm = audit_norm_bound(gamma, index)
    run.summary.update(strategy=strat.label, eps=eps, score=score(strat, game),
                       objective_on_gamma=evaluate_objective(objective_vector(game, index),
                                                             index, gamma),
                       norm_bound=("PASS" if norm.passed else "FAIL"))
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "classical": cmd_classical,
    "repair": cmd_repair,
    "audit": cmd_audit,
    "export-sdpa": cmd_export_sdpa,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.tol <= 0 or args.max_iters <= 0 or args.samples <= 0 or args.level < 0:
        parser.error("--tol, --max-iters and --samples must be positive, --level >= 0")
    try:
        game_ok = _load_game(args.game)
    except GameError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    del game_ok
    run = Run(args)
    try:
        code = COMMANDS[args.command](args, run)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SeqNPAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.summary["error"] = str(exc)
        return run.finish(1)
    return run.finish(code)


if __name__ == "__main__":
    sys.exit(main())

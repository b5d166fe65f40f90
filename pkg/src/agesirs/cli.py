"""Command-line entry point: ``agesirs <subcommand> --config <path> [...]``.

Exit status is 0 when every assertion passes, 1 when any fails (the JSON
report names it), and 2 when the scenario or the run itself is invalid.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checks
from .errors import AgeSIRSError
from .io import iteration_csv, trajectory_csv, write_json
from .scenario import bundled_scenario, load_scenario
from .solver import PicardSettings, picard_solve, simulate_direct
from .suite import run_suite, summarize

log = logging.getLogger("agesirs")


def _simulate(cfg, seed, out):
    k = cfg.constants()
    traj = simulate_direct(cfg.x0, cfg.model, cfg.T, k)
    trajectory_csv(out / "trajectory.csv", traj)
    return checks.check_trajectory(cfg, traj, k, "direct"), {"constants": k.as_dict()}


def _picard(cfg, seed, out):
    k = cfg.constants()
    traj, plog = picard_solve(cfg.x0, cfg.model, cfg.T, PicardSettings(cfg.tol, cfg.max_iter), k)
    trajectory_csv(out / "picard_trajectory.csv", traj)
    iteration_csv(out / "picard_iterations.csv", plog.deltas)
    d = np.asarray(plog.deltas)
    rises = int(np.sum(np.diff(d[1:]) >= 0)) if d.size > 2 else 0
    found = [checks.Assertion("picard_contraction[unshifted]", "mild_solution", rises == 0, rises, 0)]
    found += checks.check_trajectory(cfg, traj, k, "picard")
    return found, {"iterations": plog.iterations, "deltas": plog.deltas}


def _validate(cfg, seed, out):
    return run_suite(cfg, seed), {}


def _resolvent(cfg, seed, out):
    return checks.check_resolvent(cfg, np.random.default_rng(seed)), {}


def _semigroup(cfg, seed, out):
    rng = np.random.default_rng(seed)
    k = cfg.constants()
    return checks.check_semigroup(cfg, k, rng) + checks.check_reaction(rng, cfg.grid), {}


def _equivalence(cfg, seed, out):
    found, _ = checks.check_picard(cfg, cfg.constants())
    return found, {}


def _convergence(cfg, seed, out):
    return checks.check_convergence(cfg) + checks.check_cross_validation(cfg), {}


def _depend(cfg, seed, out):
    return checks.check_dependence(cfg, cfg.constants(), seed), {}


COMMANDS = {
    "simulate": (_simulate, "direct characteristics run; writes trajectory.csv"),
    "picard": (_picard, "Picard mild-solution run; writes trajectory and iteration log"),
    "validate": (_validate, "full property suite"),
    "resolvent-check": (_resolvent, "resolvent residual order and norm bound"),
    "semigroup-check": (_semigroup, "semigroup bound and reaction exponential"),
    "equivalence-check": (_equivalence, "shifted vs unshifted Picard, uniqueness, contraction"),
    "convergence": (_convergence, "refinement ladder J, 2J, 4J with observed orders"),
    "depend": (_depend, "continuous-dependence probe"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agesirs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True,
                       help="scenario YAML file, or 'reference' / 'saturating' for a bundled one")
        p.add_argument("--out", default=None, help="output directory (default: scenario 'output')")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--grid", type=int, default=None, metavar="J", help="interpolate the scenario onto J cells")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _config_path(arg: str) -> Path:
    path = Path(arg)
    if not path.exists() and path.suffix == "":
        return bundled_scenario(arg)
    return path


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handler, _ = COMMANDS[args.command]
    try:
        cfg = load_scenario(_config_path(args.config)).on_grid(args.grid)
        seed = cfg.seed if args.seed is None else args.seed
        out = Path(args.out if args.out is not None else cfg.output)
        log.info("%s: scenario %s, J=%d, seed=%d", args.command, cfg.name, cfg.grid.J, seed)
        found, extra = handler(cfg, seed, out)
    except AgeSIRSError as exc:
        print(f"agesirs {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    report = summarize(args.command, cfg, found, extra)
    report["seed"] = seed
    path = write_json(out / f"{args.command}.json", report)
    for a in found:
        log.info("%s %s value=%s bound=%s", "PASS" if a.passed else "FAIL", a.name, a.value, a.bound)
    if report["failing"]:
        print(f"FAILED: {', '.join(report['failing'])} (see {path})", file=sys.stderr)
        return 1
    print(f"ok: {len(found)} assertions passed ({path})")
    return 0


if __name__ == "__main__":
    sys.exit(main())

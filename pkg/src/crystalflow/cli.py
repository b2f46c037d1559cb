"""``crystalflow`` command line entry point.

Exit codes: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .experiments import (PenaltyVariant, StudyError, penalty_comparison_study,
                          space_refinement_study, time_refinement_study)
from .flow import FlowError, StepBoundWarning, _Stepper, evolve, validate_config
from .initial import initial_profile
from .io import (OUTPUT_DIR_ENV, ConfigError, OutputLockedError, RunConfig, output_lock, parse_config, parse_override,
                 resolve_output_dir, study_summary, write_diagnostics_csv, write_json,
                 write_snapshot_csv, write_study_csv)
from .pdhg import H1_DOT, L2

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("evolve", "space-refine", "time-refine", "penalty-compare", "validate")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crystalflow",
                                description="Crystal surface evolution with a PDHG inner solver.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("-c", "--config", help="YAML config file")
        sp.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. pdhg.lambda=250 (repeatable)")
        sp.add_argument("-v", "--verbose", action="store_true", help="per-step progress on stderr")
        if name != "validate":
            sp.add_argument("-o", "--output-dir",
                            help=f"output directory (default: output.dir, then ${OUTPUT_DIR_ENV})")
    return p


def _err(msg: str):
    print(f"crystalflow: {msg}", file=sys.stderr)


def _manifest(cfg: RunConfig, command: str, started: float, files: list[Path], status: int, **extra):
    return {
        "artifact": "crystalflow",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "started": started,
        "finished": time.time(),
        "files": sorted(p.name for p in files),
        "exit_status": status,
        **extra,
    }


def _step_line(rec) -> str:
    return (f"step {rec.n:4d} t={rec.t:.6g} tv={rec.tv_energy:.10g} iters={rec.inner_iters} "
            f"converged={rec.converged} |M|1={rec.mob_l1:.4g} |1/M|1={rec.mob_inv_l1:.4g}")


def cmd_validate(cfg: RunConfig, args) -> int:
    flow = cfg.flow
    stepper = _Stepper(flow)
    A0 = stepper.laplacian(initial_profile(flow.initial, flow.grid))
    check = validate_config(flow, A0)
    print(f"estimate ||A D^t D||_2 = {check.estimate:.6e} (power iteration "
          f"{'converged' if check.converged else 'not converged'})")
    print(f"(tau/lambda)*estimate = {check.ratio:.6e}; margin = {check.margin:.4g}")
    if check.passed:
        print("validation passed")
        return EXIT_OK
    _err("step-size bound violated: (tau/lambda)||A D^t D|| must be < 1")
    return EXIT_CONFIG


def cmd_evolve(cfg: RunConfig, args, out: Path) -> int:
    started = time.time()
    progress = (lambda r: print(_step_line(r), file=sys.stderr)) if args.verbose else None
    status, extra = EXIT_OK, {}
    try:
        trace = evolve(cfg.flow, progress=progress)
    except FlowError as exc:
        _err(str(exc))
        trace, status = exc.trace, EXIT_NUMERIC
        extra["error"] = str(exc)
        extra["failed_step"] = exc.step
    files = []
    if trace is not None and trace.records:
        files.append(write_snapshot_csv(trace, out))
        files.append(write_diagnostics_csv(trace, out))
    write_json(_manifest(cfg, "evolve", started, files, status, **extra), out / "manifest.json")
    return status


def cmd_study(cfg: RunConfig, args, out: Path) -> int:
    started = time.time()
    flow = cfg.flow
    values = cfg.study_values
    log = (lambda *a: print(*a, file=sys.stderr)) if args.verbose else (lambda *a: None)
    status, extra = EXIT_OK, {}
    try:
        if args.command == "space-refine":
            result = space_refinement_study(flow, values, on_pair=lambda p, r, a: log(
                f"n_x={p} relative={r:.6e} absolute={a:.6e}"))
        elif args.command == "time-refine":
            result = time_refinement_study(flow, values, on_pair=lambda p, r, a: log(
                f"n_t={p} relative={r:.6e} absolute={a:.6e}"))
        else:
            v = cfg.values
            variants = (
                PenaltyVariant(H1_DOT, H1_DOT, flow.pdhg.lam, flow.pdhg.sigma, flow.pdhg.max_iter),
                PenaltyVariant(L2, L2, v["study.l2_lambda"], v["study.l2_sigma"], v["study.l2_max_iter"]),
            )
            result = penalty_comparison_study(flow, values, variants, on_run=lambda n, name, rep: log(
                f"n_x={n} {name}: {rep.iterations} iterations, converged={rep.converged}"))
    except StudyError as exc:
        _err(str(exc))
        result, status = exc.partial, EXIT_NUMERIC
        extra["error"] = str(exc)
    files = [write_study_csv(result, out)]
    files.append(write_json(study_summary(result), out / f"{result.name}_summary.json"))
    write_json(_manifest(cfg, args.command, started, files, status, **extra), out / "manifest.json")
    return status


def run_command(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = dict(parse_override(s) for s in args.set)
        cfg = parse_config(args.config, overrides=overrides, command=args.command)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    if args.command == "validate":
        try:
            return cmd_validate(cfg, args)
        except ArithmeticError as exc:
            _err(str(exc))
            return EXIT_NUMERIC
    out = resolve_output_dir(args.output_dir, cfg)
    try:
        with output_lock(out), warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", StepBoundWarning)
            if args.command == "evolve":
                return cmd_evolve(cfg, args, out)
            return cmd_study(cfg, args, out)
    except OutputLockedError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(str(exc))
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()

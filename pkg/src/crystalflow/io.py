"""Config parsing and plot-ready CSV/JSON output.

Config files are YAML mappings.  Every key is optional; unknown keys are
errors so typos do not silently fall back to defaults::

    nx: 200
    nt: 10
    T: 1.0e-2
    epsilon: 0.04
    mobility: {variant: exact-sign, slope: 10}
    pdhg: {lambda: 500, sigma: 5.0e-4, delta: 5.0e-6, max_iter: 200000, penalty: h1-dot}
    initial: {kind: sine}
    output: {dir: results, snapshot_stride: 1}
"""

from __future__ import annotations

import copy
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .flow import NONCONVERGENCE_POLICIES, FlowConfig, FlowTrace
from .grid import GridSpec
from .initial import KINDS
from .mobility import EXACT_SIGN, SMOOTHED_SIGN, MobilityConfig
from .pdhg import ENGINES, H1_DOT, L2, SOLVERS, PdhgConfig

OUTPUT_DIR_ENV = "CRYSTALFLOW_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "crystalflow-output"
LOCK_NAME = ".crystalflow.lock"

SNAPSHOT_HEADER = "t,x,h"
DIAGNOSTICS_HEADER = "n,t,tv_energy,mob_l1,mob_inv_l1,inner_iters,converged,phi_before,phi_after"
STUDY_HEADER = "param,value,variant"


class OutputLockedError(RuntimeError):
    pass


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = ""
        if key:
            where += f"{key}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)
        self.key = key
        self.line = line


# key path -> (type, default, check, check description)
def _pos(v):
    return v > 0


def _int_at_least(k):
    return lambda v: v >= k


def _choice(opts):
    return lambda v: v in opts


SCHEMA: dict[str, tuple[type | tuple, Any, Any, str]] = {
    "nx": (int, 200, _int_at_least(4), "an integer >= 4"),
    "nt": (int, 10, _int_at_least(1), "an integer >= 1"),
    "T": (float, 1e-2, _pos, "positive"),
    "epsilon": (float, 0.04, lambda v: 0 < v < 3.141592653589793, "in (0, pi)"),
    "on_nonconvergence": (str, "abort", _choice(NONCONVERGENCE_POLICIES), f"one of {NONCONVERGENCE_POLICIES}"),
    "enforce_step_bound": (bool, False, None, ""),
    "mobility.variant": (str, EXACT_SIGN, _choice((EXACT_SIGN, SMOOTHED_SIGN)), f"one of {(EXACT_SIGN, SMOOTHED_SIGN)}"),
    "mobility.slope": (float, 10.0, _pos, "positive"),
    "pdhg.lambda": (float, 500.0, _pos, "positive"),
    "pdhg.sigma": (float, 5e-4, _pos, "positive"),
    "pdhg.delta": (float, 5e-6, _pos, "positive"),
    "pdhg.max_iter": (int, 200_000, _int_at_least(1), "an integer >= 1"),
    "pdhg.penalty": (str, H1_DOT, _choice((H1_DOT, L2)), f"one of {(H1_DOT, L2)}"),
    "pdhg.ergodic_tracking": (bool, False, None, ""),
    "pdhg.solver": (str, "flux", _choice(SOLVERS), f"one of {SOLVERS}"),
    "pdhg.engine": (str, "numba", _choice(ENGINES), f"one of {ENGINES}"),
    "initial.kind": (str, "sine", _choice(KINDS), f"one of {KINDS}"),
    "output.dir": (str, None, None, ""),
    "output.snapshot_stride": (int, 1, _int_at_least(1), "an integer >= 1"),
    "study.values": (list, None, None, ""),
    "study.l2_lambda": (float, 5e-5, _pos, "positive"),
    "study.l2_sigma": (float, 5e-5, _pos, "positive"),
    "study.l2_max_iter": (int, 20_000_000, _int_at_least(1), "an integer >= 1"),
}

SECTIONS = sorted({k.split(".")[0] for k in SCHEMA if "." in k})

# Per-subcommand default overrides.
REFINE_DEFAULTS = {"T": 1e-4, "epsilon": 0.05, "mobility.variant": SMOOTHED_SIGN,
                   "pdhg.max_iter": 2_000_000}
COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "evolve": {},
    "validate": {},
    "space-refine": dict(REFINE_DEFAULTS, **{"study.values": [16, 32, 64, 128, 256, 512]}),
    "time-refine": dict(REFINE_DEFAULTS, **{"nx": 256, "study.values": [5, 10, 20, 40, 80]}),
    "penalty-compare": {"T": 1e-6, "nt": 1, "epsilon": 0.05, "mobility.variant": SMOOTHED_SIGN,
                        "pdhg.max_iter": 2_000_000, "study.values": [32, 64, 124, 250, 500, 750]},
}


@dataclass
class RunConfig:
    """Resolved settings: the flow config plus output and study options."""

    flow: FlowConfig
    output_dir: str | None = None
    study_values: list[int] | None = None
    values: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return unflatten(self.values)


def defaults(command: str = "evolve") -> dict[str, Any]:
    flat = {k: copy.deepcopy(spec[1]) for k, spec in SCHEMA.items()}
    flat.update(copy.deepcopy(COMMAND_DEFAULTS.get(command, {})))
    return flat


def unflatten(flat: dict[str, Any]) -> dict:
    out: dict = {}
    for key, val in flat.items():
        if val is None:
            continue
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return out


def _flatten_node(node, prefix, out, lines):
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("expected a mapping", prefix or None, node.start_mark.line + 1)
    for knode, vnode in node.value:
        key = f"{prefix}.{knode.value}" if prefix else str(knode.value)
        line = knode.start_mark.line + 1
        if key in SECTIONS:
            _flatten_node(vnode, key, out, lines)
            continue
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, line)
        if key in out:
            raise ConfigError("duplicate key", key, line)
        out[key] = yaml.safe_load(yaml.serialize(vnode))
        lines[key] = vnode.start_mark.line + 1


def _coerce(key: str, value: Any, line: int | None):
    typ, _, check, desc = SCHEMA[key]
    if value is None and SCHEMA[key][1] is None:
        return None
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key, line)
        value = float(value)
    elif typ is int:
        if isinstance(value, bool) or not (isinstance(value, int) or
                                           (isinstance(value, float) and value.is_integer())):
            raise ConfigError(f"expected an integer, got {value!r}", key, line)
        value = int(value)
    elif typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", key, line)
    elif typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key, line)
    elif typ is list:
        if not isinstance(value, list) or not value or not all(
                isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value):
            raise ConfigError(f"expected a non-empty list of positive integers, got {value!r}", key, line)
    if check is not None and not check(value):
        raise ConfigError(f"must be {desc}, got {value!r}", key, line)
    return value


def parse_config(path: str | os.PathLike | None = None, *, text: str | None = None,
                 overrides: dict[str, Any] | None = None, command: str = "evolve") -> RunConfig:
    """Build a :class:`RunConfig` from a YAML file (or ``text``), then flat ``overrides``.

    Missing keys take the defaults for ``command``.
    """
    flat = defaults(command)
    lines: dict[str, int] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    if text is not None:
        try:
            root = yaml.compose(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                              line=mark.line + 1 if mark else None) from exc
        found: dict[str, Any] = {}
        if root is not None:
            _flatten_node(root, "", found, lines)
        flat.update(found)
    for key, val in (overrides or {}).items():
        if key not in SCHEMA:
            raise ConfigError("unknown key", key)
        flat[key] = val
    for key in SCHEMA:
        flat[key] = _coerce(key, flat[key], lines.get(key))
    return build_run_config(flat, lines)


def build_run_config(flat: dict[str, Any], lines: dict[str, int] | None = None) -> RunConfig:
    lines = lines or {}
    try:
        flow = FlowConfig(
            grid=GridSpec(flat["nx"]),
            final_time=flat["T"],
            n_t=flat["nt"],
            mobility=MobilityConfig.make(flat["epsilon"], flat["mobility.variant"], flat["mobility.slope"]),
            pdhg=PdhgConfig(lam=flat["pdhg.lambda"], sigma=flat["pdhg.sigma"], delta=flat["pdhg.delta"],
                            max_iter=flat["pdhg.max_iter"], penalty=flat["pdhg.penalty"],
                            ergodic_tracking=flat["pdhg.ergodic_tracking"],
                            solver=flat["pdhg.solver"], engine=flat["pdhg.engine"]),
            initial=flat["initial.kind"],
            snapshot_stride=flat["output.snapshot_stride"],
            on_nonconvergence=flat["on_nonconvergence"],
            enforce_step_bound=flat["enforce_step_bound"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    values = dict(flat)
    values["pdhg.engine"] = flow.pdhg.engine
    return RunConfig(flow, flat["output.dir"], flat["study.values"], values)


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def parse_override(text: str) -> tuple[str, Any]:
    """``key.path=value`` with a YAML-typed value."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {raw!r}", key.strip()) from exc


def resolve_output_dir(flag: str | None, cfg: RunConfig) -> Path:
    return Path(flag or cfg.output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


@contextmanager
def output_lock(directory: Path):
    """Exclusive lock file so two runs never write into the same directory."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise OutputLockedError(f"output directory {directory} is locked by another run ({lock})") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def _g(v) -> str:
    return format(float(v), ".17g")


def _write_lines(path: Path, header: str, rows) -> Path:
    try:
        with open(path, "w", newline="\n", encoding="ascii") as fh:
            fh.write(header + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc
    return path


def write_snapshot_csv(trace: FlowTrace, directory, name: str = "snapshots.csv") -> Path:
    x = trace.config.grid.x
    rows = ((_g(t), _g(xj), _g(hj)) for _, t, h in trace.snapshots for xj, hj in zip(x, h))
    return _write_lines(Path(directory) / name, SNAPSHOT_HEADER, rows)


def write_diagnostics_csv(trace: FlowTrace, directory, name: str = "diagnostics.csv") -> Path:
    rows = ((str(r.n), _g(r.t), _g(r.tv_energy), _g(r.mob_l1), _g(r.mob_inv_l1), str(r.inner_iters),
             "1" if r.converged else "0", _g(r.phi_before), _g(r.phi_after)) for r in trace.records)
    return _write_lines(Path(directory) / name, DIAGNOSTICS_HEADER, rows)


def write_study_csv(result, directory, name: str | None = None) -> Path:
    name = name or f"{result.name}_study.csv"
    rows = ((_g(p), _g(v), var) for p, v, var in result.rows)
    return _write_lines(Path(directory) / name, STUDY_HEADER, rows)


def study_summary(result) -> dict:
    return {
        "name": result.name,
        "slope": None if result.slope != result.slope else result.slope,
        "residual": None if result.residual != result.residual else result.residual,
        "censored": [{"param": p, "variant": v} for (p, v), c in sorted(result.censored.items()) if c],
        "failed": result.extras.get("failed"),
    }


def write_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path

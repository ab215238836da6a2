"""Batch front end.

    dgblowup run CONFIG [--ttol X] [--stol X] [--p N] [--r0 N] [--sigma X] [--hp]
                        [--max-steps N] [--out DIR]
    dgblowup verify SUITE

The configuration is a flat ``key = value`` file (``#`` starts a comment).
Keys are ``problem``, ``out``, ``snapshot_every``, ``seed`` and every field
of :class:`~dgblowup.adapt.AdaptConfig` (``stol`` is accepted for
``stol_plus``). A run writes into the output directory:

* ``steps.csv``       one row per accepted step (header row first),
* ``summary.txt``     ``key = value`` block,
* ``estimators.log``  ``m t_m k_m r_m eta_time int_eta_space int_eta_space_dt``,
* ``bound.log``       ``m psi theta theta_tilde delta bound_rec bound_err``,
* ``snapshots/``      mesh leaf lists and ``x value`` tables every
  ``snapshot_every`` steps (0 disables them).

Exit codes: 0 for a normal end (NoRoot, step cap, end time), 2 for a
configuration error, 3 when the solver aborts.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

from .adapt import AdaptConfig, AdaptiveSolver, InitialResolutionError, RunResult, StepRecord
from .fem import dump_field
from .problems import PRESETS, preset

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3

_ALIASES = {"stol": "stol_plus", "max-steps": "max_steps"}
_RUN_KEYS = {"problem", "out", "snapshot_every", "seed", "hp"}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    problem: str
    adapt: AdaptConfig
    out: Path
    snapshot_every: int = 0
    seed: int = 0


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines into a dict of strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[_ALIASES.get(key, key)] = value
    return out


_INT_KEYS = {"p", "r0", "max_steps", "n_root", "initial_level", "max_level", "max_cycles", "max_picard", "max_dofs"}
_OPTIONAL_KEYS = {"sigma", "t_final", "stol_minus"}


def _convert(name: str, value: str):
    if name in _OPTIONAL_KEYS and value.lower() in ("none", ""):
        return None
    try:
        return int(value) if name in _INT_KEYS else float(value)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r}") from None


def build_run_config(values: dict[str, str]) -> RunConfig:
    """Validate parsed values and build a :class:`RunConfig`."""
    values = dict(values)
    adapt_names = set(AdaptConfig.field_names())
    unknown = set(values) - adapt_names - _RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    problem = values.pop("problem", "quadratic_gaussian")
    if problem not in PRESETS:
        raise ConfigError(f"unknown problem {problem!r}; choose from {sorted(PRESETS)}")
    out = Path(values.pop("out", "run_output"))
    try:
        snapshot_every = int(values.pop("snapshot_every", "0"))
        seed = int(values.pop("seed", "0"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    hp = values.pop("hp", "false").lower() in ("1", "true", "yes", "on")
    kwargs = {}
    for f in fields(AdaptConfig):
        if f.name in values:
            kwargs[f.name] = _convert(f.name, values[f.name])
    if hp and kwargs.get("sigma") is None:
        kwargs["sigma"] = 0.47
    try:
        adapt = AdaptConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if snapshot_every < 0:
        raise ConfigError("snapshot_every must be non-negative")
    return RunConfig(problem, adapt, out, snapshot_every, seed)


def load_run_config(path, overrides: dict[str, str] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    values = parse_config_text(text)
    values.update(overrides or {})
    return build_run_config(values)


def write_csv(path: Path, records: list[StepRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(StepRecord.columns())
        for rec in records:
            w.writerow(rec.row())


def format_summary(summary: dict) -> str:
    return "".join(f"{k} = {float(v)!r}\n" if isinstance(v, float) else f"{k} = {v}\n" for k, v in summary.items())


def execute(cfg: RunConfig, log=print) -> tuple[RunResult, dict]:
    """Run the adaptive solver and write every output file."""
    out = cfg.out
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    snap_dir = out / "snapshots"
    if cfg.snapshot_every:
        snap_dir.mkdir(exist_ok=True)

    def snapshot(solver, rec):
        if cfg.snapshot_every and rec.m % cfg.snapshot_every == 0:
            st = solver.state
            (snap_dir / f"step_{rec.m:06d}_mesh.txt").write_text(st.mesh.to_text())
            (snap_dir / f"step_{rec.m:06d}_field.txt").write_text(dump_field(st.trace))

    start = time.perf_counter()
    solver = AdaptiveSolver(preset(cfg.problem), cfg.adapt)
    result = solver.run(snapshot)
    wall = time.perf_counter() - start
    write_csv(out / "steps.csv", result.records)
    (out / "estimators.log").write_text("".join(line + "\n" for line in result.estimator_lines))
    (out / "bound.log").write_text("".join(rec.bound_log_line() + "\n" for rec in result.records))
    summary = result.summary()
    summary["wall_time"] = wall
    (out / "summary.txt").write_text(format_summary(summary))
    log(format_summary(summary), end="")
    return result, summary


def _run(args) -> int:
    overrides = {}
    for key in ("ttol", "stol", "p", "r0", "sigma", "max_steps", "out"):
        val = getattr(args, key)
        if val is not None:
            overrides[_ALIASES.get(key, key)] = str(val)
    if args.hp:
        overrides["hp"] = "true"
    try:
        cfg = load_run_config(args.config, overrides)
        result, _ = execute(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InitialResolutionError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    if not result.normal:
        print(f"solver abort: {result.reason}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def _verify(args) -> int:
    from .verify import SUITES, run_suite
    if args.suite not in SUITES:
        print(f"unknown suite {args.suite!r}; choose from {sorted(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(args.suite)
    for res in results:
        print(res.line())
    return EXIT_OK if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgblowup", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the adaptive solver from a key = value config file")
    run.add_argument("config")
    run.add_argument("--ttol", type=float)
    run.add_argument("--stol", type=float)
    run.add_argument("--p", type=int)
    run.add_argument("--r0", type=int)
    run.add_argument("--sigma", type=float)
    run.add_argument("--hp", action="store_true", help="temporal hp mode (sigma defaults to 0.47)")
    run.add_argument("--max-steps", dest="max_steps", type=int)
    run.add_argument("--out")
    run.set_defaults(func=_run)
    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("suite")
    ver.set_defaults(func=_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

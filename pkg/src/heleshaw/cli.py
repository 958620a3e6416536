"""Command line entry point.

Every subcommand reads one experiment config (a path, or the name of a
bundled config such as ``checkerboard.json``) and writes its artifacts under
``--out``.  Diagnostics go to standard error; nothing is printed on standard
output.

Exit codes: 0 success, 1 a check failed, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import harness
from .cell import build_vel_table
from .errors import ConfigError, ExperimentFailed, NumericalError
from .harness import DEFAULT_THRESHOLDS, DEFAULT_TOLERANCES, ExperimentConfig
from .macrosim import EffectiveProblem, simulate_effective
from .microsim import simulate, write_events_jsonl, write_trajectory_csv
from .rand_fields import sample_realization, validate_model

log = logging.getLogger("heleshaw")

SUBCOMMANDS = ("simulate", "cell", "table", "effective", "compare", "validate")
_NESTED_KEYS = {"thresholds": set(DEFAULT_THRESHOLDS), "tolerances": set(DEFAULT_TOLERANCES)}


def bundled_config(name: str) -> Path:
    return Path(str(resources.files("heleshaw") / "configs" / name))


def resolve_config(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    b = bundled_config(p.name)
    if b.exists():
        return b
    raise ConfigError(f"config {path!r} not found (and no bundled config of that name)")


def read_config_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` pairs (dotted keys) to a parsed config.

    Keys must name an existing entry, a known top-level field, or a known
    threshold or tolerance.  Values are parsed as JSON when possible.
    """
    known_top = {"schema", "kind", "model", "eps_list", "seeds", "T", "omega0", "omega0_inner", "sample_times",
                 "interval", "bc", "n_points", "x_grid", "q_grid", "n_schedule", "oracle_q", "table",
                 "tolerances", "thresholds", "output", "description"}
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for i, part in enumerate(parts[:-1]):
            if part not in node and i == 0 and part in _NESTED_KEYS:
                node[part] = {}
            if not isinstance(node, dict) or part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown override key {key!r}")
            node = node[part]
        last = parts[-1]
        if len(parts) == 1:
            ok = last in data or last in known_top
        elif len(parts) == 2 and parts[0] in _NESTED_KEYS:
            ok = last in _NESTED_KEYS[parts[0]]
        else:
            ok = last in node
        if not ok:
            raise ConfigError(f"unknown override key {key!r}")
        node[last] = _parse_value(value)
    return data


def load(args) -> ExperimentConfig:
    data = apply_overrides(read_config_json(resolve_config(args.config)), args.set)
    if args.seed_offset:
        data["seeds"] = [int(s) + args.seed_offset for s in data.get("seeds", [])]
    return ExperimentConfig.from_json(data)


def out_dir(args, config: ExperimentConfig) -> Path:
    out = Path(args.out or config.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_outcome(report) -> int:
    for c in report.checks:
        log.info("%s", c.line())
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        raise ExperimentFailed(f"checks failed: {', '.join(failed)}")
    return 0


def cmd_simulate(args, config):
    if config.omega0 is None:
        raise ConfigError("simulate needs omega0 in the config")
    out = out_dir(args, config)
    for eps in config.eps_list:
        for seed in config.seeds:
            traj = simulate(sample_realization(config.model, seed), eps, config.omega0, config.T,
                            sample_times=config.sample_times, tol=config.tol_elliptic)
            stem = f"eps{eps:g}_seed{seed}"
            write_trajectory_csv(traj, out / f"trajectory_{stem}.csv")
            write_events_jsonl(traj, out / f"events_{stem}.jsonl")
            log.info("eps=%g seed=%d: %d steps, final support %s", eps, seed, traj.n_steps,
                     traj.final.support.intervals)
    return 0


def _table(config, jobs):
    table = harness.table_for(config, jobs)
    for f in table.failures:
        log.error("%s", f)
    return table


def cmd_table(args, config):
    out = out_dir(args, config)
    table = build_vel_table(config.model, config.x_grid, config.q_grid, seeds=config.seeds,
                            n_schedule=config.n_schedule, tol=config.tolerances["vbar"], jobs=args.jobs)
    (out / "vel_table.json").write_text(json.dumps(table.to_json(), indent=2, sort_keys=True) + "\n")
    if table.failures:
        for f in table.failures:
            log.error("%s", f)
        raise NumericalError(f"{len(table.failures)} table cell(s) did not converge")
    return 0


def cmd_cell(args, config):
    return _report_outcome(harness.run_cell_suite(config, out_dir(args, config), args.jobs))


def cmd_effective(args, config):
    if config.omega0 is None:
        raise ConfigError("effective needs omega0 in the config")
    out = out_dir(args, config)
    table = _table(config, args.jobs)
    if table.failures:
        raise NumericalError(f"{len(table.failures)} table cell(s) did not converge")
    traj = simulate_effective(EffectiveProblem.from_table(table, config.omega0, config.T),
                              sample_times=config.sample_times, tol=config.tol_elliptic)
    (out / "vel_table.json").write_text(json.dumps(table.to_json(), indent=2, sort_keys=True) + "\n")
    write_trajectory_csv(traj, out / "trajectory_effective.csv")
    write_events_jsonl(traj, out / "events_effective.jsonl")
    log.info("effective run: %d steps, final support %s", traj.n_steps, traj.final.support.intervals)
    return 0


def cmd_compare(args, config):
    return _report_outcome(harness.run_experiment(config, out_dir(args, config), args.jobs))


def cmd_validate(args, config):
    report = validate_model(config.model)
    lines = report.lines()
    for line in lines:
        log.info("%s", line)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validation.txt").write_text("\n".join(lines) + "\n")
    return 0 if report.ok else 1


COMMANDS = {"simulate": cmd_simulate, "cell": cmd_cell, "table": cmd_table, "effective": cmd_effective,
            "compare": cmd_compare, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heleshaw", description="Random Hele-Shaw homogenization experiments.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="config path or bundled config name")
    p.add_argument("--out", help="output directory (default: the config's output entry)")
    p.add_argument("--jobs", type=int, default=harness.default_jobs(), help="worker processes")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (dotted keys, repeatable)")
    p.add_argument("--seed-offset", type=int, default=0, help="add K to every seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", force=True)
    if args.jobs < 1:
        log.error("--jobs must be at least 1")
        return 2
    try:
        config = load(args)
        return COMMANDS[args.command](args, config)
    except ExperimentFailed as exc:
        log.error("%s", exc)
        return 1
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except NumericalError as exc:
        log.error("numerical failure (%s): %s", type(exc).__name__, exc)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

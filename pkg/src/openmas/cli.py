"""Command-line front end: ``run``, ``baseline``, ``verify`` and ``replay``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

from .errors import InvalidInputError
from .opdc import OpdcParams
from .scenario import (
    ScenarioConfig,
    config_from_mapping,
    fixed_membership,
    generate,
    inputs_from_events,
    simulate,
)
from .stability import TraceRecord, stability_report
from .tracefile import TraceFormatError, read_events, read_trace, write_csv, write_events, write_trace

log = logging.getLogger("openmas")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_VERIFY = 3

# distance to the fixed point below which the baseline counts as converged
CONVERGENCE_TOL = 1e-12

RUN_FIGURES = {
    "fig1_agents.csv": "n_agents",
    "fig2_state_to_tpi.csv": "state_to_tpi",
    "fig3_tpi_to_mean.csv": "tpi_to_mean",
    "fig4_state_to_mean.csv": "state_to_mean",
}
BASELINE_FIGURES = {
    "fig5_state_to_mean.csv": "state_to_mean",
    "fig6_state_to_tpi.csv": "state_to_tpi",
}


class ConfigError(Exception):
    pass


@dataclass
class RunOutput:
    trace: Path
    report: Path
    csvs: dict[str, Path] = field(default_factory=dict)
    events: Optional[Path] = None
    passed: bool = True


def load_config(path: str | Path) -> tuple[ScenarioConfig, OpdcParams]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    try:
        return config_from_mapping(data)
    except InvalidInputError as exc:
        raise ConfigError(f"config {path}: {exc}") from exc


def _write_report(path: Path, report: dict[str, Any]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(report, fh, indent=2, allow_nan=False)
        fh.write("\n")


def _emit(out: Path, trace: Sequence[TraceRecord], p: OpdcParams, figures: dict[str, str],
          report: dict[str, Any]) -> RunOutput:
    out.mkdir(parents=True, exist_ok=True)
    result = RunOutput(trace=out / "trace.txt", report=out / "report.json", passed=bool(report["passed"]))
    write_trace(result.trace, trace, p)
    for name, column in figures.items():
        write_csv(out / name, trace, column)
        result.csvs[column] = out / name
    _write_report(result.report, report)
    return result


def cmd_run(config: ScenarioConfig, p: OpdcParams, out: Path) -> RunOutput:
    """Simulate one seeded scenario and write trace, event log, report and CSVs."""
    sc = generate(config)
    trace = simulate(sc.x0, sc.graph0, sc.u0, sc.inputs, p)
    report = stability_report(trace, p)
    report["config"] = config.to_dict()
    result = _emit(out, trace, p, RUN_FIGURES, report)
    result.events = out / "events.log"
    write_events(result.events, sc.x0, sc.graph0, sc.u0, sc.events)
    return result


def convergence_step(trace: Sequence[TraceRecord], tol: float = CONVERGENCE_TOL) -> Optional[int]:
    for rec in trace:
        if rec.dist_state_tpi <= tol:
            return rec.k
    return None


def cmd_baseline(config: ScenarioConfig, p: OpdcParams, out: Path) -> RunOutput:
    """Fixed-membership run of the same config; also reports the convergence step."""
    config = fixed_membership(config)
    sc = generate(config)
    trace = simulate(sc.x0, sc.graph0, sc.u0, sc.inputs, p)
    report = stability_report(trace, p)
    report["config"] = config.to_dict()
    report["convergence_step"] = convergence_step(trace)
    report["convergence_tol"] = CONVERGENCE_TOL
    result = _emit(out, trace, p, BASELINE_FIGURES, report)
    result.events = out / "events.log"
    write_events(result.events, sc.x0, sc.graph0, sc.u0, sc.events)
    return result


def _readable(path: Path) -> None:
    if not path.is_file():
        raise TraceFormatError("no such file", path=path)


def cmd_verify(trace_path: Path, report_path: Optional[Path] = None) -> dict[str, Any]:
    _readable(trace_path)
    trace, p = read_trace(trace_path)
    report = stability_report(trace, p)
    if report_path is not None:
        _write_report(report_path, report)
    return report


def cmd_replay(events_path: Path, config: ScenarioConfig, p: OpdcParams, out: Path) -> RunOutput:
    """Rebuild a run from its event log alone, without touching the generator."""
    _readable(events_path)
    elog = read_events(events_path)
    if elog.graph0.n != config.n0:
        raise ConfigError(f"event log starts with {elog.graph0.n} agents, config says n0={config.n0}")
    if len(elog.events) != config.horizon:
        # the log lines are 1-based with two header lines
        raise TraceFormatError(
            f"event log has {len(elog.events)} steps, config horizon is {config.horizon}",
            len(elog.events) + 3, events_path,
        )
    try:
        inputs = inputs_from_events(elog.graph0, elog.u0, elog.events)
    except InvalidInputError as exc:
        raise TraceFormatError(str(exc), path=events_path) from exc
    trace = simulate(elog.x0, elog.graph0, elog.u0, inputs, p)
    report = stability_report(trace, p)
    report["config"] = config.to_dict()
    return _emit(out, trace, p, RUN_FIGURES, report)


# ---------------------------------------------------------------- argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors count as configuration errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _seed_range(text: str) -> range:
    a, sep, b = text.partition("..")
    try:
        lo, hi = int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}") from None
    if not sep or lo > hi or lo < 0:
        raise argparse.ArgumentTypeError(f"expected a..b with 0 <= a <= b, got {text!r}")
    return range(lo, hi + 1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="openmas", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_flags(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", required=True, type=Path, help="JSON config file")
        sp.add_argument("--out", required=True, type=Path, help="output directory")
        sp.add_argument("--horizon", type=int, help="override the configured horizon")
        seeds = sp.add_mutually_exclusive_group()
        seeds.add_argument("--seed", type=int, help="override the configured seed")
        seeds.add_argument("--seeds", type=_seed_range, help="batch of seeds a..b, one subdirectory each")

    scenario_flags(sub.add_parser("run", help="simulate an open network"))
    scenario_flags(sub.add_parser("baseline", help="simulate the fixed-membership network"))

    vp = sub.add_parser("verify", help="check assumptions and stability certificates of a trace")
    vp.add_argument("trace", type=Path)
    vp.add_argument("--out", type=Path, help="write the JSON report here")

    rp = sub.add_parser("replay", help="rebuild a run from its event log")
    rp.add_argument("events", type=Path)
    rp.add_argument("--config", required=True, type=Path)
    rp.add_argument("--out", required=True, type=Path)
    rp.add_argument("--horizon", type=int)
    return parser


def _job(kind: str, config: ScenarioConfig, p: OpdcParams, out: Path) -> int:
    cmd = cmd_run if kind == "run" else cmd_baseline
    result = cmd(config, p, out)
    with open(result.report, encoding="ascii") as fh:
        report = json.load(fh)
    summary = f"seed {config.seed}: passed={result.passed}"
    radius = report.get("radius", {})
    if radius.get("R") is not None:
        summary += f" R={radius['R']:.6g} ({radius['formula']})"
    if kind == "baseline":
        summary += f" convergence_step={report['convergence_step']}"
    print(summary)
    return EXIT_OK if result.passed else EXIT_VERIFY


def _with_overrides(config: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    try:
        if args.horizon is not None:
            config = replace(config, horizon=args.horizon)
        if getattr(args, "seed", None) is not None:
            config = replace(config, seed=args.seed)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    return config


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "verify":
        report = cmd_verify(args.trace, args.out)
        print(json.dumps(report, indent=2))
        return EXIT_OK if report["passed"] else EXIT_VERIFY

    config, p = load_config(args.config)
    config = _with_overrides(config, args)
    if args.command == "replay":
        result = cmd_replay(args.events, config, p, args.out)
        print(f"replayed {config.horizon} steps into {args.out}: passed={result.passed}")
        return EXIT_OK if result.passed else EXIT_VERIFY

    if args.seeds is None:
        return _job(args.command, config, p, args.out)
    configs = [replace(config, seed=s) for s in args.seeds]
    outs = [args.out / f"seed_{s}" for s in args.seeds]
    workers = min(len(configs), os.cpu_count() or 1)
    if workers == 1:
        codes = [_job(args.command, c, p, o) for c, o in zip(configs, outs)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_job, [args.command] * len(configs), configs, [p] * len(configs), outs))
    return max(codes)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidInputError as exc:
        # bad inputs that only surface mid-run are still input problems
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ArithmeticError, RuntimeError, ValueError) as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

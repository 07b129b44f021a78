"""Command-line front end: scenario configs, experiment dispatch and CSV/JSON output.

Powers in configs are given in dBm and converted with
``p_W = 10 ** ((dBm - 30) / 10)``; everything past this module is linear.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import fdma, tdma
from .harness import (KINDS, SOLVERS, ExperimentResult, ExperimentSpec, Failure, ResultRow,
                      run_experiment)
from .model import Layout, SystemParams, dbm_to_watts, draw_instance, watts_to_dbm
from .numerics import ConvergenceError, InfeasibleError

__all__ = [
    "ConfigError",
    "RunConfig",
    "CSV_COLUMNS",
    "parse_config",
    "format_config",
    "emit_result",
    "format_result",
    "read_result_json",
    "build_parser",
    "main",
]

log = logging.getLogger("chargefwd")

CSV_COLUMNS = ("grid_value", "solver", "mean_sum_rate", "stderr", "mean_alpha0",
               "mean_wpt_energy", "mean_gap", "mean_ms")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2


class ConfigError(ValueError):
    """A scenario config or command line that cannot be turned into a run."""


def _float(text):
    return float(text)


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _pair(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"{text!r} is not an x,y pair")
    return tuple(parts)


def _floats(text):
    return tuple(float(p) for p in text.split(",") if p.strip())


def _names(text):
    return tuple(p.strip() for p in text.split(",") if p.strip())


# key -> (parser, default text)
CONFIG_KEYS = {
    "K": (_int, "4"),
    "N": (_int, "64"),
    "P_dbm": (_float, "30"),
    "P_peak_dbm": (_float, None),  # omitted: twice the total power
    "eta": (_float, "0.8"),
    "N0_dbm_per_hz": (_float, "-174"),
    "bandwidth_hz": (_float, "1e7"),
    "Ec_joules": (_float, "1e-7"),
    "pathloss_exponent": (_float, "3"),
    "rician_factor": (_float, "3"),
    "reference_distance_m": (_float, "1"),
    "relay_x_m": (_float, "0"),
    "source_center_m": (_pair, "-5,0"),
    "destination_center_m": (_pair, "5,0"),
    "region_side_m": (_float, "2"),
    "experiment": (str, "power-sweep"),
    "grid": (_floats, "20,25,30,35,40"),
    "realizations": (_int, "100"),
    "seed": (_int, "0"),
    "solvers": (_names, "tdma-optimal,fdma-optimal"),
    "paired": (_bool, "false"),
    "timing": (_bool, "false"),
    "workers": (_int, "1"),
}


def _read_pairs(text):
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: key {key!r} repeated (first on line {seen[key][0]})")
        seen[key] = (lineno, value)
    return seen


def parse_config(text: str):
    """Parse a ``key = value`` scenario into (SystemParams, Layout, ExperimentSpec).

    Omitted keys take their defaults; unknown keys are an error.
    """
    given = _read_pairs(text)
    values = {}
    for key, (parse, default) in CONFIG_KEYS.items():
        lineno, raw = given.get(key, (None, default))
        if raw is None:
            values[key] = None
            continue
        try:
            values[key] = parse(raw)
        except ValueError as exc:
            where = f"line {lineno}" if lineno else "default"
            raise ConfigError(f"{where}: key {key!r}: {exc}") from None

    def build(keys, factory):
        try:
            return factory()
        except ValueError as exc:
            lines = [f"line {given[k][0]}" for k in keys if k in given]
            where = ", ".join(lines) or "defaults"
            raise ConfigError(f"{where}: keys {', '.join(keys)}: {exc}") from None

    total = float(dbm_to_watts(values["P_dbm"]))
    peak = 2.0 * total if values["P_peak_dbm"] is None else float(dbm_to_watts(values["P_peak_dbm"]))
    params = build(
        ("K", "N", "P_dbm", "P_peak_dbm", "eta", "N0_dbm_per_hz", "bandwidth_hz", "Ec_joules"),
        lambda: SystemParams(
            num_pairs=values["K"], num_subcarriers=values["N"], total_energy=total,
            peak_power=peak, conversion_efficiency=values["eta"],
            noise_density=float(dbm_to_watts(values["N0_dbm_per_hz"])),
            bandwidth=values["bandwidth_hz"], processing_cost=values["Ec_joules"]))
    layout = build(
        ("relay_x_m", "source_center_m", "destination_center_m", "region_side_m",
         "pathloss_exponent", "rician_factor", "reference_distance_m"),
        lambda: _layout(values))
    spec = build(
        ("experiment", "grid", "realizations", "seed", "solvers", "paired", "timing", "workers"),
        lambda: ExperimentSpec(values["experiment"], values["grid"], values["realizations"],
                               values["seed"], values["solvers"], values["paired"],
                               values["timing"], values["workers"]))
    return params, layout, spec


def _layout(values):
    if values["reference_distance_m"] < 0:
        raise ValueError("reference_distance_m must be nonnegative")
    return Layout(values["relay_x_m"], values["source_center_m"], values["destination_center_m"],
                  values["region_side_m"], values["pathloss_exponent"], values["rician_factor"],
                  values["reference_distance_m"])


def _dbm_text(watts: float) -> str:
    """Shortest dBm text that converts back to exactly ``watts``, when one is nearby."""
    guess = float(watts_to_dbm(watts))
    candidates = [guess]
    for direction in (np.inf, -np.inf):
        step = guess
        for _ in range(8):
            step = float(np.nextafter(step, direction))
            candidates.append(step)
    for dbm in candidates:
        if float(dbm_to_watts(dbm)) == watts:
            return repr(dbm)
    return repr(guess)


def format_config(params: SystemParams, layout: Layout, spec: ExperimentSpec) -> str:
    """Render a scenario that ``parse_config`` maps back to the same values."""
    costs = set(params.processing_cost)
    if len(costs) != 1:
        raise ConfigError("configs hold a single processing cost shared by all pairs")
    r = repr
    lines = [
        f"K = {params.num_pairs}",
        f"N = {params.num_subcarriers}",
        f"P_dbm = {_dbm_text(params.total_energy)}",
        f"eta = {r(params.conversion_efficiency)}",
        f"N0_dbm_per_hz = {_dbm_text(params.noise_density)}",
        f"bandwidth_hz = {r(params.bandwidth)}",
        f"Ec_joules = {r(costs.pop())}",
        f"pathloss_exponent = {r(layout.pathloss_exponent)}",
        f"rician_factor = {r(layout.rician_factor)}",
        f"reference_distance_m = {r(layout.reference_distance)}",
        f"relay_x_m = {r(layout.relay_x)}",
        f"source_center_m = {','.join(map(r, map(float, layout.source_center)))}",
        f"destination_center_m = {','.join(map(r, map(float, layout.destination_center)))}",
        f"region_side_m = {r(layout.region_side)}",
        f"experiment = {spec.kind}",
        f"grid = {','.join(map(r, spec.grid))}",
        f"realizations = {spec.realizations}",
        f"seed = {spec.base_seed}",
        f"solvers = {','.join(spec.solvers)}",
        f"paired = {str(spec.paired).lower()}",
        f"timing = {str(spec.timing).lower()}",
        f"workers = {spec.workers}",
    ]
    if params.peak_power != 2.0 * params.total_energy:
        lines.insert(3, f"P_peak_dbm = {_dbm_text(params.peak_power)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RunConfig:
    scenario: Path = None
    kind: str = None
    grid: str = None
    output: Path = None
    output_format: str = "csv"
    seed: int = None
    verbosity: int = 0

    def __post_init__(self):
        if self.output_format not in ("csv", "json"):
            raise ConfigError(f"output format must be csv or json, got {self.output_format!r}")
        if self.scenario is not None and not Path(self.scenario).is_file():
            raise ConfigError(f"scenario file {str(self.scenario)!r} does not exist")
        if self.output is not None:
            parent = Path(self.output).resolve().parent
            if not parent.is_dir():
                raise ConfigError(f"output directory {str(parent)!r} does not exist")


def _number(value):
    return format(value, ".17e")


def _csv_text(result: ExperimentResult) -> str:
    out = io.StringIO()
    out.write(",".join(CSV_COLUMNS) + "\n")
    for row in result.rows:
        cells = [_number(row.grid_value), row.solver] + [
            _number(getattr(row, c)) for c in CSV_COLUMNS[2:]]
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def _json_float(value):
    return None if math.isnan(value) else value


def _json_text(result: ExperimentResult) -> str:
    doc = {
        "kind": result.kind,
        "columns": list(CSV_COLUMNS) + ["count"],
        "rows": [{c: (row.solver if c == "solver" else _json_float(getattr(row, c)))
                  for c in CSV_COLUMNS} | {"count": row.count} for row in result.rows],
        "failures": [{f.name: getattr(fail, f.name) for f in fields(Failure)}
                     for fail in result.failures],
        "samples": [{"grid_value": value, "solver": solver,
                     "values": [[_json_float(float(v)) for v in row] for row in stats]}
                    for (value, solver), stats in result.samples.items()],
    }
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def format_result(result: ExperimentResult, fmt: str = "csv") -> str:
    if fmt == "csv":
        return _csv_text(result)
    if fmt == "json":
        return _json_text(result)
    raise ConfigError(f"output format must be csv or json, got {fmt!r}")


def emit_result(result: ExperimentResult, fmt: str = "csv", path=None) -> None:
    """Write the result to ``path``, or to stdout when no path is given."""
    text = format_result(result, fmt)
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _nan(value):
    return math.nan if value is None else float(value)


def read_result_json(text: str) -> ExperimentResult:
    doc = json.loads(text)
    rows = tuple(
        ResultRow(_nan(r["grid_value"]), r["solver"],
                  *(_nan(r[c]) for c in CSV_COLUMNS[2:]), int(r["count"]))
        for r in doc["rows"])
    failures = tuple(Failure(**f) for f in doc["failures"])
    samples = {(s["grid_value"], s["solver"]):
               np.array([[_nan(v) for v in row] for row in s["values"]], dtype=float)
               for s in doc["samples"]}
    return ExperimentResult(doc["kind"], rows, failures, samples)


def _allocation_dict(alloc) -> dict:
    out = {}
    for f in fields(alloc):
        value = getattr(alloc, f.name)
        if isinstance(value, np.ndarray):
            value = value.tolist()
        elif isinstance(value, (np.floating, np.integer)):
            value = value.item()
        elif isinstance(value, tuple):
            value = list(value)
        if isinstance(value, float) and math.isnan(value):
            value = None
        out[f.name] = value
    out["wpt_energy"] = float(alloc.wpt_energy)
    return out


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors, not solver failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chargefwd", description="Charge-then-forward relay allocation.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", type=Path, help="scenario file (key = value lines)")
        p.add_argument("--seed", type=int, help="overrides the scenario seed")

    for name, methods in (("solve-tdma", ("optimal", "suboptimal", "eea", "era")),
                          ("solve-fdma", ("optimal", "suboptimal", "eea", "fsa"))):
        p = sub.add_parser(name, help=f"solve one {name[6:].upper()} instance and print it as JSON")
        common(p)
        p.add_argument("--method", choices=methods, default="optimal")
        p.add_argument("--output", type=Path)

    for name in ("sweep", "gap"):
        p = sub.add_parser(name, help="run a Monte-Carlo sweep" if name == "sweep"
                           else "mean FDMA duality gap against N")
        common(p)
        if name == "sweep":
            p.add_argument("--kind", choices=sorted(KINDS))
            p.add_argument("--solvers", help="comma-separated, from: " + ",".join(SOLVERS))
        p.add_argument("--grid", help="comma-separated grid values")
        p.add_argument("--realizations", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--output", type=Path)
        p.add_argument("--format", dest="output_format", choices=("csv", "json"), default="csv")
    return parser


def _load(run: RunConfig):
    text = Path(run.scenario).read_text(encoding="utf-8") if run.scenario else ""
    return parse_config(text)


def _solve(args, run, params, layout, spec):
    family = args.command[6:]
    solver = {("tdma", m): getattr(tdma, f"solve_tdma_{m}") for m in ("optimal", "suboptimal", "eea", "era")}
    solver |= {("fdma", m): getattr(fdma, f"solve_fdma_{m}") for m in ("optimal", "suboptimal", "eea", "fsa")}
    seed = spec.base_seed
    inst = draw_instance(params, layout, seed)
    alloc = solver[family, args.method](inst, params)
    doc = {"solver": f"{family}-{args.method}", "seed": seed, "allocation": _allocation_dict(alloc)}
    text = json.dumps(doc, indent=2) + "\n"
    if run.output is None:
        sys.stdout.write(text)
    else:
        Path(run.output).write_text(text, encoding="utf-8")


def _sweep_spec(args, spec: ExperimentSpec) -> ExperimentSpec:
    changes = {f.name: getattr(spec, f.name) for f in fields(spec)}
    if args.command == "gap":
        changes.update(kind="gap-vs-N", solvers=("fdma-optimal",), paired=True)
        if args.grid is None and spec.kind != "gap-vs-N":
            changes["grid"] = (4, 8, 16, 32, 64)
    else:
        if args.kind:
            changes["kind"] = args.kind
        if args.solvers:
            changes["solvers"] = _names(args.solvers)
    if args.grid is not None:
        try:
            changes["grid"] = _floats(args.grid)
        except ValueError as exc:
            raise ConfigError(f"--grid: {exc}") from None
    for name in ("realizations", "workers"):
        if getattr(args, name) is not None:
            changes[name] = getattr(args, name)
    try:
        return ExperimentSpec(**changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        run = RunConfig(args.config, getattr(args, "kind", None), getattr(args, "grid", None),
                        args.output, getattr(args, "output_format", "csv"), args.seed, args.verbose)
        params, layout, spec = _load(run)
        if run.seed is not None:
            spec = ExperimentSpec(**{f.name: getattr(spec, f.name) for f in fields(spec)}
                                  | {"base_seed": run.seed})
        if args.command in ("sweep", "gap"):
            spec = _sweep_spec(args, spec)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command.startswith("solve-"):
        try:
            _solve(args, run, params, layout, spec)
        except (ConvergenceError, InfeasibleError, ValueError, FloatingPointError) as exc:
            print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        return EXIT_OK

    log.info("running %s over %d grid points x %d realizations", spec.kind, len(spec.grid),
             spec.realizations)
    result = run_experiment(spec, params, layout)
    try:
        emit_result(result, run.output_format, run.output)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for fail in result.failures:
        log.warning("grid %s, %s, realization %d: %s", fail.grid_value, fail.solver,
                    fail.realization, fail.message)
    if result.failures:
        print(f"solver failure on {len(result.failures)} instance(s)", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

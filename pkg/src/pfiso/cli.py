"""Command-line entry point: ``pfiso run|compare|field-dump|replay``.

Exit codes are 0 on success, 1 when a simulation aborts and 2 for usage or
configuration errors. Failures print one JSON object on stderr, for example
``{"error": "ScenarioError", "field": "path", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coordination import read_slp_log, replay_inboxes, write_slp_log
from .errors import PfisoError, ScenarioError
from .potential import World, field_grid
from .scenario import (PlannerKind, ScenarioConfig, apply_overrides, default_scenario_path,
                       load_scenario, override_keys)
from .sim import (TRACE_COLUMNS, RunResult, metrics_from_dict, metrics_to_dict, run_scenario,
                  write_metrics_json, write_trace_csv)
from .svg import Series, line_plot, paths_plot, write_svg

__all__ = ["CompareReport", "cmd_run", "cmd_compare", "cmd_field_dump", "cmd_replay", "main"]

EXIT_OK, EXIT_ABORT, EXIT_USAGE = 0, 1, 2

# state-vs-time figures as (trace column, axis label, file stem)
STATE_PLOTS = (
    ("beta", "sideslip angle [rad]", "beta"),
    ("psi", "yaw angle [rad]", "psi"),
    ("yaw_rate", "yaw rate [rad/s]", "yaw_rate"),
    ("v", "longitudinal speed [m/s]", "speed"),
)
# metrics where the larger value is the better one are not ranked by minimum
_VERDICT_SKIP = ("final_x", "min_separation", "min_speed")


class UsageError(Exception):
    """Bad command-line usage; reported with exit code 2."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass
class CompareReport:
    """Per-planner metrics for every vehicle plus the planner minimising each metric."""

    planners: list
    metrics: dict
    verdicts: dict
    aborted: dict
    artifacts: list = field(default_factory=list)

    def __post_init__(self):
        if sorted(self.metrics) != sorted(self.planners) or sorted(self.aborted) != sorted(self.planners):
            raise ValueError("report must cover exactly the requested planners")

    def to_dict(self) -> dict:
        return {
            "planners": list(self.planners),
            "metrics": {k: metrics_to_dict(v) for k, v in self.metrics.items()},
            "verdicts": self.verdicts,
            "aborted": self.aborted,
            "artifacts": list(self.artifacts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CompareReport":
        return cls(planners=list(d["planners"]),
                   metrics={k: metrics_from_dict(v) for k, v in d["metrics"].items()},
                   verdicts=d["verdicts"], aborted=d["aborted"], artifacts=list(d["artifacts"]))

    @classmethod
    def load(cls, path) -> "CompareReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _verdicts(planners, metrics) -> dict:
    out: dict = {}
    runs = [p for p in planners if metrics.get(p)]
    if not runs:
        return out
    for vid in metrics[runs[0]]:
        out[vid] = {}
        for name in metrics[runs[0]][vid].__dataclass_fields__:
            if name in _VERDICT_SKIP:
                continue
            # first planner in request order wins ties
            best = min(runs, key=lambda p: getattr(metrics[p][vid], name))
            out[vid][name] = best
    return out


def _prepare(config, overrides, seed) -> ScenarioConfig:
    path = Path(config) if config else default_scenario_path()
    cfg = load_scenario(path)
    if seed is not None:
        overrides = list(overrides) + [f"sim.seed={int(seed)}"]
    return apply_overrides(cfg, overrides or [])


def _planner(name: str) -> PlannerKind:
    try:
        return PlannerKind(name.strip().upper().replace("-", "_"))
    except ValueError:
        choices = ", ".join(k.value for k in PlannerKind)
        raise UsageError(f"unknown planner {name!r}; choose from {choices}", field="--planners") from None


def _write_run(result: RunResult, out: Path, cfg: ScenarioConfig, label: str) -> list:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for vid, tr in result.traces.items():
        write_trace_csv(out / f"trace_{vid}.csv", tr)
        written.append(f"trace_{vid}.csv")
    write_metrics_json(out / "metrics.json", result.metrics, {
        "planner": label,
        "ticks": result.ticks,
        "aborted": result.aborted,
        "error": result.error,
        "minimum_events": result.minimum_events,
    })
    written.append("metrics.json")
    write_slp_log(out / "slp_log.ndjson", result.messages)
    written.append("slp_log.ndjson")
    return written


def _state_series(result: RunResult, column: str, suffix: str = "", dashed=False) -> list:
    c = TRACE_COLUMNS.index(column)
    t = TRACE_COLUMNS.index("t")
    out = []
    for vid, tr in result.traces.items():
        arr = tr.array()
        if len(arr):
            out.append(Series(f"{vid}{suffix}", arr[:, t], arr[:, c], dashed=dashed))
    return out


def _path_series(result: RunResult, suffix: str = "") -> list:
    out = []
    for vid, tr in result.traces.items():
        arr = tr.array()
        if len(arr):
            out.append(Series(f"{vid}{suffix}", arr[:, 1], arr[:, 2],
                              dashed=vid != next(iter(result.traces))))
    return out


def _x_range(cfg: ScenarioConfig, series) -> tuple:
    xs = [float(np.min(s.x)) for s in series] + [float(np.max(s.x)) for s in series]
    return (min(xs + [0.0]), max(xs + [cfg.finish_x]))


def cmd_run(config=None, out_dir="out", overrides=(), seed=None, planner=None) -> int:
    """Simulate one scenario and write traces, metrics, the SLP log and five SVG figures."""
    cfg = _prepare(config, overrides, seed)
    label = "config"
    if planner:
        cfg = cfg.with_planner(_planner(planner))
        label = cfg.vehicles[0].planner.value
    result = run_scenario(cfg)
    out = Path(out_dir)
    _write_run(result, out, cfg, label)
    series = _path_series(result)
    write_svg(out / "paths.svg", paths_plot(series, cfg.road, f"Paths ({label})",
                                            _x_range(cfg, series)))
    for column, ylabel, stem in STATE_PLOTS:
        write_svg(out / f"{stem}.svg",
                  line_plot(_state_series(result, column), f"{ylabel} ({label})", "t [s]", ylabel))
    if result.aborted:
        _report_error(result.error["type"], result.error["message"], tick=result.error["tick"],
                      vehicle_id=result.error["vehicle_id"])
        return EXIT_ABORT
    return EXIT_OK


def cmd_compare(config=None, planners=("PF_CS", "PF_SP", "PF_ISO"), out_dir="out",
                overrides=(), seed=None) -> CompareReport:
    """Run the same scenario once per planner and write ``compare_report.json``."""
    kinds = [_planner(p) for p in planners]
    if len(kinds) < 2:
        raise UsageError("compare needs at least two planners", field="--planners")
    if len({k.value for k in kinds}) != len(kinds):
        raise UsageError("planners must be distinct", field="--planners")
    cfg = _prepare(config, overrides, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [k.value for k in kinds]
    metrics, aborted, artifacts, series = {}, {}, [], []
    for kind in kinds:
        result = run_scenario(cfg.with_planner(kind))
        files = _write_run(result, out / kind.value, cfg, kind.value)
        artifacts += [f"{kind.value}/{f}" for f in files]
        metrics[kind.value] = result.metrics
        aborted[kind.value] = result.aborted
        for s, dashed in zip(_path_series(result, f" {kind.value}"), (False, True)):
            s.dashed = dashed
            series.append(s)
    write_svg(out / "paths_compare.svg",
              paths_plot(series, cfg.road, "Paths by planner", _x_range(cfg, series)))
    artifacts.append("paths_compare.svg")
    artifacts.append("compare_report.json")
    report = CompareReport(names, metrics, _verdicts(names, metrics), aborted, artifacts)
    report.save(out / "compare_report.json")
    return report


def snapshot_states(cfg: ScenarioConfig, t_snapshot: float) -> list:
    """Vehicle states at ``t_snapshot`` seconds into the run."""
    sim = cfg.sim
    if not (0.0 <= t_snapshot <= sim.duration) or not math.isfinite(t_snapshot):
        raise UsageError(f"snapshot t={t_snapshot} s outside the run [0, {sim.duration}] s",
                         field="--time")
    ticks = int(round(t_snapshot / sim.dt))
    short = apply_overrides(cfg, [f"sim.duration_s={ticks * sim.dt}"]) if ticks else None
    if short is None:
        return [v.state for v in cfg.vehicles]
    result = run_scenario(short)
    if result.aborted:
        raise PfisoError(f"run aborted before the snapshot: {result.error['message']}")
    if result.ticks < ticks:
        raise UsageError(f"all vehicles finished at t={result.ticks * sim.dt:.2f} s, before "
                         f"the snapshot t={t_snapshot} s", field="--time")
    states = []
    for spec in cfg.vehicles:
        row = result.traces[spec.state.id].rows[-1]
        rec = dict(zip(TRACE_COLUMNS, row))
        states.append(spec.state.replace(x=rec["x"], y=rec["y"], psi=rec["psi"], beta=rec["beta"],
                                         yaw_rate=rec["yaw_rate"], v=rec["v"]))
    return states


def field_axes(cfg: ScenarioConfig, states, resolution: float):
    """Cell-centred grid axes: 120 m along x around the vehicles, the full road width in y."""
    if not resolution > 0:
        raise UsageError("resolution must be > 0", field="--resolution")
    road = cfg.road
    x0 = math.floor(min(s.x for s in states) - 40.0)
    nx = int(math.ceil(120.0 / resolution))
    ny = int(math.ceil((road.y_upper - road.y_bottom) / resolution))
    xs = x0 + (np.arange(nx) + 0.5) * resolution
    ys = road.y_bottom + (np.arange(ny) + 0.5) * resolution
    return xs, ys


def cmd_field_dump(config=None, t_snapshot=0.0, resolution=0.5, out_dir="out",
                   overrides=(), seed=None) -> list:
    """Write ``field_<id>.csv`` (columns ``x,y,U``) for each vehicle's own view."""
    cfg = _prepare(config, overrides, seed)
    states = snapshot_states(cfg, float(t_snapshot))
    xs, ys = field_axes(cfg, states, float(resolution))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, ego in enumerate(states):
        world = World(cfg.road, ego, [s for j, s in enumerate(states) if j != i])
        grid = field_grid(world, cfg.pf, xs, ys)
        path = out / f"field_{ego.id}.csv"
        with open(path, "w", newline="\n") as fh:
            fh.write("x,y,U\n")
            for r, y in enumerate(ys):
                for c, x in enumerate(xs):
                    fh.write(f"{float(x)!r},{float(y)!r},{float(grid[r, c])!r}\n")
        written.append(path)
    return written


def cmd_replay(log_path, config=None, out_dir="out", overrides=(), seed=None) -> Path:
    """Rebuild every inbox from an SLP log and write them as ``inboxes.ndjson``."""
    cfg = _prepare(config, overrides, seed)
    try:
        messages = read_slp_log(log_path)
    except OSError as err:
        raise ScenarioError(f"cannot read SLP log {log_path}: {err.strerror}", field="log",
                            path=log_path) from err
    except (ValueError, KeyError) as err:
        raise ScenarioError(f"malformed SLP log {log_path}: {err}", field="log",
                            path=log_path) from err
    ids = [v.state.id for v in cfg.vehicles]
    accepts = {v.state.id: v.receive_slp for v in cfg.vehicles}
    inboxes = replay_inboxes(messages, ids, cfg.sim.drop_probability, cfg.sim.seed, accepts)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "inboxes.ndjson"
    with open(path, "w", newline="\n") as fh:
        for tick in sorted(inboxes):
            for receiver in ids:
                msgs = inboxes[tick].get(receiver, [])
                fh.write(json.dumps({"tick": tick, "receiver": receiver,
                                     "messages": [json.loads(m.to_json()) for m in msgs]},
                                    separators=(",", ":")) + "\n")
    return path


# ---------------------------------------------------------------------------
# argument parsing


def _report_error(kind: str, message: str, **extra) -> None:
    body = {"error": kind, "message": message}
    body.update({k: v for k, v in extra.items() if v is not None})
    sys.stderr.write(json.dumps(body, sort_keys=True) + "\n")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _override_epilog() -> str:
    try:
        keys = override_keys()
    except PfisoError:
        keys = []
    lines = ["override keys for --set (vehicles may also be addressed by id,",
             "and iso.w1, iso.w2, iso.w3 are short for iso.weights.w*):"]
    lines += [f"  {k}" for k in keys]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    epilog = _override_epilog()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="pfiso", description="Potential-field merging simulator.",
                     epilog=epilog, formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="scenario JSON (default: bundled merge scenario)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       dest="overrides", help="override a config value; repeatable")
        p.add_argument("--seed", type=int, help="seed for the message-drop RNG")

    p = sub.add_parser("run", help="simulate one scenario", epilog=epilog, formatter_class=fmt)
    common(p)
    p.add_argument("--planners", help="use this single planner for every vehicle")
    p = sub.add_parser("compare", help="compare planners on one scenario", epilog=epilog,
                       formatter_class=fmt)
    common(p)
    p.add_argument("--planners", default="PF_CS,PF_SP,PF_ISO",
                   help="comma-separated planners, at least two (default: all three)")
    p = sub.add_parser("field-dump", help="dump potential grids at a snapshot", epilog=epilog,
                       formatter_class=fmt)
    common(p)
    p.add_argument("--time", type=float, default=0.0, dest="t_snapshot",
                   help="snapshot time in seconds (default: 0)")
    p.add_argument("--resolution", type=float, default=0.5, help="grid spacing in metres")
    p = sub.add_parser("replay", help="rebuild inboxes from an SLP log", epilog=epilog,
                       formatter_class=fmt)
    common(p)
    p.add_argument("--log", required=True, help="NDJSON SLP log written by run")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "run":
            planners = args.planners.split(",") if args.planners else []
            if len(planners) > 1:
                raise UsageError("run takes a single planner; use compare for several",
                                 field="--planners")
            return cmd_run(args.config, args.out, args.overrides, args.seed,
                           planners[0] if planners else None)
        if args.command == "compare":
            report = cmd_compare(args.config, [p for p in args.planners.split(",") if p],
                                 args.out, args.overrides, args.seed)
            sys.stdout.write(json.dumps(report.verdicts, indent=2, sort_keys=True) + "\n")
            return EXIT_ABORT if any(report.aborted.values()) else EXIT_OK
        if args.command == "field-dump":
            for path in cmd_field_dump(args.config, args.t_snapshot, args.resolution, args.out,
                                       args.overrides, args.seed):
                sys.stdout.write(f"{path}\n")
            return EXIT_OK
        if args.command == "replay":
            sys.stdout.write(f"{cmd_replay(args.log, args.config, args.out, args.overrides, args.seed)}\n")
            return EXIT_OK
    except UsageError as err:
        _report_error("UsageError", str(err), field=err.field)
        return EXIT_USAGE
    except ScenarioError as err:
        _report_error("ScenarioError", str(err), field=err.field, path=err.path)
        return EXIT_USAGE
    except PfisoError as err:
        _report_error(type(err).__name__, str(err))
        return EXIT_ABORT
    return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

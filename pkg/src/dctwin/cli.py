"""Command-line front end: run simulations, emit result files, plot them.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 wire-protocol
error from an external scheduler.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import re
import shlex
import sys
from dataclasses import dataclass

from . import engine as engine_mod
from . import ml_policy, schedulers
from .bridge import ExternalSchedulerBridge, ProtocolError
from .dataloader import DataFormatError, WorkloadSet, load_canonical, load_swf
from .model import ConfigError, CoolingParams, SimWindow, SystemConfig, validate_config
from .stats_accounting import SchemaError, StatsReport, load_accounts, save_accounts


class UsageError(Exception):
    pass


class PlotError(Exception):
    pass


_DURATION_RE = re.compile(r"^(\d+)([smhd]?)$")
_DURATION_UNITS = {"": 1, "s": 1, "m": 60, "h": 3600, "d": 86400}

_INT_CONFIG_KEYS = {"total_nodes", "timestep_s", "size_small_lt", "size_large_ge"}
_FLOAT_CONFIG_KEYS = {
    "node_idle_w",
    "node_max_w",
    "conversion_efficiency",
    "supply_temp_c",
    "tau_s",
    "flow_heat_capacity_w_per_c",
    "cooling_static_w",
    "cooling_slope",
    "carbon_kg_per_kwh",
    "fugaku_reference_w",
}
_ML_ALPHA_PREFIX = "ml_alpha_"

_PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
)


def parse_duration(text: str) -> int:
    """Duration in integer seconds, with optional s/m/h/d suffix ('1h' -> 3600)."""
    match = _DURATION_RE.match(text.strip())
    if not match:
        raise ValueError(f"bad duration '{text}' (use seconds or a 30s/15m/1h/15d form)")
    return int(match.group(1)) * _DURATION_UNITS[match.group(2)]


def parse_system_config(path: str | None) -> SystemConfig:
    """Build a SystemConfig from a flat key=value file (defaults when absent)."""
    values: dict[str, float | int] = {}
    alpha: dict[str, float] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise UsageError(f"cannot read system config: {exc}") from exc
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            try:
                if key in _INT_CONFIG_KEYS:
                    values[key] = int(value)
                elif key in _FLOAT_CONFIG_KEYS:
                    values[key] = float(value)
                elif key.startswith(_ML_ALPHA_PREFIX):
                    feature = key[len(_ML_ALPHA_PREFIX) :]
                    if feature not in ml_policy.SCORED_FEATURES:
                        raise UsageError(f"{path}:{lineno}: unknown score feature '{feature}'")
                    alpha[feature] = float(value)
                else:
                    raise UsageError(f"{path}:{lineno}: unknown config key '{key}'")
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from exc
    cooling_defaults = CoolingParams()
    cooling = CoolingParams(
        supply_temp=float(values.get("supply_temp_c", cooling_defaults.supply_temp)),
        thermal_mass_tau=float(values.get("tau_s", cooling_defaults.thermal_mass_tau)),
        flow_heat_capacity=float(
            values.get("flow_heat_capacity_w_per_c", cooling_defaults.flow_heat_capacity)
        ),
        cooling_overhead_static=float(
            values.get("cooling_static_w", cooling_defaults.cooling_overhead_static)
        ),
        cooling_overhead_slope=float(
            values.get("cooling_slope", cooling_defaults.cooling_overhead_slope)
        ),
    )
    defaults = SystemConfig()
    config = SystemConfig(
        total_nodes=int(values.get("total_nodes", defaults.total_nodes)),
        timestep=int(values.get("timestep_s", defaults.timestep)),
        node_idle_watts=float(values.get("node_idle_w", defaults.node_idle_watts)),
        node_max_watts=float(values.get("node_max_w", defaults.node_max_watts)),
        conversion_efficiency=float(
            values.get("conversion_efficiency", defaults.conversion_efficiency)
        ),
        cooling=cooling,
        carbon_intensity=float(values.get("carbon_kg_per_kwh", defaults.carbon_intensity)),
        size_small_lt=int(values.get("size_small_lt", defaults.size_small_lt)),
        size_large_ge=int(values.get("size_large_ge", defaults.size_large_ge)),
        fugaku_reference_w=(
            float(values["fugaku_reference_w"]) if "fugaku_reference_w" in values else None
        ),
        ml_alpha=tuple(sorted(alpha.items())),
    )
    try:
        return validate_config(config)
    except ConfigError as exc:
        raise UsageError(f"invalid system config: {exc}") from exc


@dataclass(frozen=True)
class RunSpec:
    """Everything one simulation invocation needs; reserializable to argv."""

    workloads: tuple[str, ...]
    system: str | None = None
    fast_forward: int = 0
    duration: int | None = None
    policy: str = "replay"
    backfill: str = "none"
    scheduler: str = "default"
    accounts: bool = False
    accounts_json: str | None = None
    ml_model: str | None = None
    output_enabled: bool = False
    output_dir: str | None = None
    seed: int = 0

    def to_argv(self) -> list[str]:
        argv = ["-f", *self.workloads]
        if self.system is not None:
            argv += ["--system", self.system]
        argv += ["-ff", str(self.fast_forward)]
        if self.duration is not None:
            argv += ["-t", str(self.duration)]
        argv += ["--policy", self.policy, "--backfill", self.backfill]
        argv += ["--scheduler", self.scheduler]
        if self.accounts:
            argv.append("--accounts")
        if self.accounts_json is not None:
            argv += ["--accounts-json", self.accounts_json]
        if self.ml_model is not None:
            argv += ["--ml-model", self.ml_model]
        if self.output_enabled:
            argv.append("-o")
            if self.output_dir is not None:
                argv.append(self.output_dir)
        argv += ["--seed", str(self.seed)]
        return argv


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); remap to usage errors
        raise UsageError(f"{message}\n{self.format_usage()}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="dctwin", description="Scheduling-integrated data-center twin")
    parser.add_argument("-f", dest="workloads", nargs="+", required=True, metavar="FILE",
                        help="workload files (canonical CSV, or SWF by .swf extension)")
    parser.add_argument("--system", default=None, metavar="CFG",
                        help="system config file (key=value lines)")
    parser.add_argument("-ff", dest="fast_forward", default="0", metavar="DUR",
                        help="fast-forward from dataset start (seconds or 1h/15d)")
    parser.add_argument("-t", dest="duration", default=None, metavar="DUR",
                        help="simulated duration (default: rest of the dataset)")
    parser.add_argument("--policy", default="replay", choices=schedulers.POLICIES)
    parser.add_argument("--backfill", default="none",
                        choices=sorted({*schedulers.BACKFILLS, "firstfit"}))
    parser.add_argument("--scheduler", default="default", metavar="NAME",
                        help="'default' for built-in policies, or 'bridge:<command>'")
    parser.add_argument("--accounts", action="store_true",
                        help="accumulate per-account statistics and write accounts.json")
    parser.add_argument("--accounts-json", default=None, metavar="PATH",
                        help="load account statistics from a prior run")
    parser.add_argument("--ml-model", default=None, metavar="PATH",
                        help="trained ranking model (required for --policy ml)")
    parser.add_argument("-o", dest="output", nargs="?", const="", default=None, metavar="DIR",
                        help="write output files (optional explicit directory)")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def parse_args(argv: list[str]) -> RunSpec:
    args = _build_parser().parse_args(argv)
    try:
        fast_forward = parse_duration(args.fast_forward)
        duration = parse_duration(args.duration) if args.duration is not None else None
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    scheduler = args.scheduler
    if scheduler != "default" and not scheduler.startswith("bridge:"):
        raise UsageError(f"unknown scheduler '{scheduler}' (use 'default' or 'bridge:<command>')")
    if args.policy == "ml" and args.ml_model is None:
        raise UsageError("--policy ml requires --ml-model")
    return RunSpec(
        workloads=tuple(args.workloads),
        system=args.system,
        fast_forward=fast_forward,
        duration=duration,
        policy=args.policy,
        backfill=schedulers.normalize_backfill(args.backfill),
        scheduler=scheduler,
        accounts=args.accounts,
        accounts_json=args.accounts_json,
        ml_model=args.ml_model,
        output_enabled=args.output is not None,
        output_dir=args.output if args.output else None,
        seed=args.seed,
    )


def _load_workloads(paths: tuple[str, ...]) -> WorkloadSet:
    sets = [
        load_swf(path) if path.endswith(".swf") else load_canonical(path) for path in paths
    ]
    if len(sets) == 1:
        return sets[0]
    jobs: list = []
    metadata: dict[str, str] = {}
    for ws in sets:
        jobs.extend(ws.jobs)
        metadata.update(ws.metadata)
    merged = sorted(jobs, key=lambda j: (j.submit, j.id))
    seen = set()
    for job in merged:
        if job.id in seen:
            raise DataFormatError(f"duplicate job id {job.id} across workload files")
        seen.add(job.id)
    lo = min(w.dataset_span.start for w in sets)
    hi = max(w.dataset_span.end for w in sets)
    return WorkloadSet(tuple(merged), SimWindow(lo, hi), metadata)


def _resolve_window(spec: RunSpec, workload: WorkloadSet) -> SimWindow:
    start = workload.dataset_span.start + spec.fast_forward
    if spec.duration is not None:
        return SimWindow(start, start + spec.duration)
    return SimWindow(start, max(start, workload.dataset_span.end))


def _auto_output_dir(spec: RunSpec) -> str:
    digest = hashlib.sha1(" ".join(spec.to_argv()).encode()).hexdigest()[:7]
    return os.path.join("simulation_results", digest)


def execute(spec: RunSpec) -> tuple[engine_mod.SimulationOutput, str | None]:
    """Run one simulation described by a RunSpec; returns output and its directory."""
    config = parse_system_config(spec.system)
    workload = _load_workloads(spec.workloads)
    window = _resolve_window(spec, workload)
    accounts = load_accounts(spec.accounts_json) if spec.accounts_json else None
    model = None
    if spec.ml_model is not None:
        model = ml_policy.load_model(spec.ml_model, alpha_override=dict(config.ml_alpha))
    bridge = None
    if spec.scheduler.startswith("bridge:"):
        bridge = ExternalSchedulerBridge(shlex.split(spec.scheduler[len("bridge:") :]))
    try:
        output = engine_mod.run(
            config,
            workload,
            window,
            spec.policy,
            spec.backfill,
            accounts=accounts,
            collect_accounts=spec.accounts,
            ml_model=model,
            bridge=bridge,
        )
    finally:
        if bridge is not None:
            try:
                bridge.close()
            except ProtocolError:
                pass
    out_dir = None
    if spec.output_enabled:
        out_dir = spec.output_dir or _auto_output_dir(spec)
        emit_outputs(output, out_dir)
    return output, out_dir


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def render_stats(report: StatsReport) -> str:
    lines = [
        ("completed_jobs", report.completed_jobs),
        ("dismissed_jobs", report.dismissed_jobs),
        ("unfinished_jobs", report.unfinished_jobs),
        ("throughput_jobs_per_hour", report.throughput_jobs_per_hour),
        ("avg_system_power_w", report.avg_system_power_w),
        ("total_energy_j", report.total_energy_j),
        ("total_compute_energy_j", report.total_compute_energy_j),
        ("total_loss_j", report.total_loss_j),
        ("power_efficiency", report.power_efficiency),
        ("carbon_kg", report.carbon_kg),
        ("avg_job_size_nodes", report.avg_job_size_nodes),
        ("size_small", report.size_histogram["small"]),
        ("size_medium", report.size_histogram["medium"]),
        ("size_large", report.size_histogram["large"]),
        ("aggregate_node_hours", report.aggregate_node_hours),
        ("avg_wait_s", report.avg_wait_s),
        ("avg_turnaround_s", report.avg_turnaround_s),
        ("awrt_s", report.awrt_s),
        ("pwsrt_s_per_node_hour", report.pwsrt_s_per_node_hour),
    ]
    return "".join(f"{key}: {_fmt(value)}\n" for key, value in lines)


def emit_outputs(output: engine_mod.SimulationOutput, out_dir: str) -> None:
    """Write every result file with deterministic content and row order."""
    os.makedirs(out_dir, exist_ok=True)
    snaps = [t.snapshot for t in output.ticks]
    _write_csv(
        os.path.join(out_dir, "power_history.csv"),
        ["t", "compute_w", "loss_w", "facility_w", "pue", "return_temp"],
        (
            (s.t, s.compute_watts, s.loss_watts, s.facility_watts, s.pue, s.return_temp)
            for s in snaps
        ),
    )
    _write_csv(
        os.path.join(out_dir, "util.csv"),
        ["t", "utilization"],
        ((s.t, s.utilization) for s in snaps),
    )
    _write_csv(
        os.path.join(out_dir, "queue_history.csv"),
        ["t", "queued"],
        ((t.snapshot.t, t.queued) for t in output.ticks),
    )
    _write_csv(
        os.path.join(out_dir, "running_history.csv"),
        ["t", "running"],
        ((t.snapshot.t, t.running) for t in output.ticks),
    )
    records = sorted(output.records, key=lambda r: (r.end, r.job.id))
    _write_csv(
        os.path.join(out_dir, "job_history.csv"),
        [
            "job_id", "account", "submit", "start", "end", "wall_limit",
            "nodes_requested", "priority", "nodes_assigned", "wait_s",
            "turnaround_s", "runtime_s", "node_seconds", "energy_j",
            "avg_power_w", "edp_js", "ed2p_js2", "size_class",
            "boundary_flag", "finished",
        ],
        (
            (
                r.job.id, r.job.account_id, r.job.submit, r.start, r.end,
                r.job.wall_limit, r.job.nodes_requested, r.job.priority,
                ";".join(str(n) for n in r.nodes), r.stats.wait,
                r.stats.turnaround, r.stats.runtime, r.stats.node_seconds,
                r.stats.energy, r.stats.avg_power, r.stats.edp, r.stats.ed2p,
                r.stats.size_class, str(r.job.boundary_flag), int(r.finished),
            )
            for r in records
        ),
    )
    with open(os.path.join(out_dir, "stats.out"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_stats(output.report))
    if output.accounts_collected:
        save_accounts(output.accounts, os.path.join(out_dir, "accounts.json"))


# -- plotting ------------------------------------------------------------


def _read_series(path: str, column: str) -> tuple[list[float], list[float]]:
    if not os.path.exists(path):
        raise PlotError(f"missing timeseries file: {path}")
    xs: list[float] = []
    ys: list[float] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if column not in header:
            raise PlotError(f"{path}: no column '{column}'")
        t_idx, c_idx = header.index("t"), header.index(column)
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if parts[c_idx] == "":
                continue
            xs.append(float(parts[t_idx]))
            ys.append(float(parts[c_idx]))
    return xs, ys


def _panel(svg: list[str], series, x0, y0, width, height, title, unit) -> None:
    all_x = [x for xs, _, _ in series for x in xs]
    all_y = [y for _, ys, _ in series for y in ys]
    xmin, xmax = min(all_x), max(all_x)
    ymin, ymax = min(all_y), max(all_y)
    if xmax == xmin:
        xmax = xmin + 1
    if ymax == ymin:
        ymax = ymin + 1
    pad = 0.05 * (ymax - ymin)
    ymin, ymax = ymin - pad, ymax + pad

    def sx(x):
        return x0 + (x - xmin) / (xmax - xmin) * width

    def sy(y):
        return y0 + height - (y - ymin) / (ymax - ymin) * height

    svg.append(
        f'<rect x="{x0}" y="{y0}" width="{width}" height="{height}" '
        'fill="none" stroke="#333" stroke-width="1"/>'
    )
    svg.append(f'<text x="{x0}" y="{y0 - 8}" font-size="14" fill="#111">{title}</text>')
    for frac in (0.0, 0.5, 1.0):
        y = ymin + frac * (ymax - ymin)
        svg.append(
            f'<text x="{x0 - 6}" y="{sy(y):.1f}" font-size="10" fill="#555" '
            f'text-anchor="end" dominant-baseline="middle">{y:.1f}{unit}</text>'
        )
    for frac in (0.0, 0.5, 1.0):
        x = xmin + frac * (xmax - xmin)
        svg.append(
            f'<text x="{sx(x):.1f}" y="{y0 + height + 14}" font-size="10" fill="#555" '
            f'text-anchor="middle">{x / 3600.0:.2f}h</text>'
        )
    for xs, ys, color in series:
        points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        svg.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )


def plot_timeseries(run_dirs: list[str], out_path: str) -> None:
    """One SVG with stacked utilization and power panels, one line per run dir."""
    if not run_dirs:
        raise PlotError("no run directories given")
    ordered = sorted(run_dirs)
    labeled = []
    for i, run_dir in enumerate(ordered):
        color = _PALETTE[i % len(_PALETTE)]
        util = _read_series(os.path.join(run_dir, "util.csv"), "utilization")
        power = _read_series(os.path.join(run_dir, "power_history.csv"), "facility_w")
        labeled.append((os.path.basename(os.path.normpath(run_dir)), color, util, power))

    width, height = 900, 620
    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    util_series = [(xs, [y * 100.0 for y in ys], color) for _, color, (xs, ys), _ in labeled]
    power_series = [(xs, [y / 1000.0 for y in ys], color) for _, color, _, (xs, ys) in labeled]
    _panel(svg, util_series, 70, 40, width - 110, 230, "System utilization", "%")
    _panel(svg, power_series, 70, 340, width - 110, 230, "Facility power", "kW")
    for i, (label, color, _, _) in enumerate(labeled):
        y = 52 + 16 * i
        svg.append(f'<rect x="{width - 190}" y="{y - 9}" width="12" height="3" fill="{color}"/>')
        svg.append(f'<text x="{width - 172}" y="{y}" font-size="11" fill="#111">{label}</text>')
    svg.append("</svg>")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(svg) + "\n")


# -- entry points --------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        spec = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        output, out_dir = execute(spec)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, SchemaError, ConfigError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not output.valid:
        print(f"simulation aborted: {output.error}", file=sys.stderr)
        return 3 if output.error_kind == "protocol" else 2
    report = output.report
    print(
        f"{spec.policy}/{spec.backfill}: window [{output.window.start}, {output.window.end}) "
        f"completed={report.completed_jobs} dismissed={report.dismissed_jobs} "
        f"unfinished={report.unfinished_jobs} energy={report.total_energy_j:.1f} J"
    )
    if out_dir is not None:
        print(f"results written to {out_dir}")
    return 0


def plot_main(argv: list[str] | None = None) -> int:
    parser = _Parser(prog="dctwin-plot", description="Overlay run outputs as an SVG")
    parser.add_argument("run_dirs", nargs="+", help="output directories, one line per run")
    parser.add_argument("-o", dest="out", default="timeseries.svg", help="output SVG path")
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
        plot_timeseries(args.run_dirs, args.out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (PlotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"plot written to {args.out}")
    return 0


def main_entry() -> None:
    sys.exit(main())


def plot_entry() -> None:
    sys.exit(plot_main())


if __name__ == "__main__":
    main_entry()

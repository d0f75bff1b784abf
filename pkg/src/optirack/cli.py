"""Command-line front end: cost sweeps, allocation replay, trace throughput.

Subcommands write a CSV with a fixed column schema and, unless --no-plot is
given, render a PNG figure next to it. Exit status is 0 on success and
nonzero with a diagnostic on stderr for any domain error.
"""

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import collectives, verify
from .allocation import (
    FixedSliceAllocator,
    PhotonicAllocator,
    fragmentation_report,
    parse_workload,
)
from .cost import CostBreakdown, CostParams, closed_form, eval_cost
from .errors import ParseError, SimulationError, SpecInvalid, VerificationFailed
from .topology import RackConfig, load_rack_config, log_radix

SWEEP_COLUMNS = ("algorithm", "P", "M_bytes", "alpha_us", "beta_us",
                 "reconfig_us", "total_us", "rounds", "reconfig_events")
ALLOC_COLUMNS = ("allocator", "requests_total", "rejected_with_free_capacity",
                 "rejection_rate")
THROUGHPUT_COLUMNS = ("gpus", "radix", "iterations", "t_baseline_us",
                      "t_photonic_us", "speedup")

_KNOWN_ALGORITHMS = ("ring", "tree", "dnc")

DEFAULT_GPU_COUNTS = (64, 128, 256)
DEFAULT_BUFFER_BYTES = (1024, 4096, 16384, 65536, 262144, 1048576)


# -- sweep specification ----------------------------------------------------


@dataclass(frozen=True)
class AlgorithmEntry:
    name: str
    params: CostParams
    gpu_counts: tuple[int, ...] | None = None  # None: inherit the sweep's
    pipeline_chunks: int = 1


@dataclass(frozen=True)
class SweepSpec:
    gpu_counts: tuple[int, ...]
    buffer_bytes: tuple[int, ...]
    algorithms: tuple[AlgorithmEntry, ...]
    verify_schedules: bool = True

    def validate(self) -> None:
        if not self.gpu_counts or any(p < 1 for p in self.gpu_counts):
            raise SpecInvalid("gpu_counts must be a non-empty list of P >= 1")
        if not self.buffer_bytes or any(m < 0 for m in self.buffer_bytes):
            raise SpecInvalid("buffer_bytes must be non-empty and >= 0")
        if not self.algorithms:
            raise SpecInvalid("at least one algorithm entry is required")
        seen = set()
        for entry in self.algorithms:
            if entry.name in seen:
                raise SpecInvalid(f"duplicate algorithm entry {entry.name!r}")
            seen.add(entry.name)
            radix = _radix_of(entry.name)
            if radix is None and entry.name not in _KNOWN_ALGORITHMS:
                raise SpecInvalid(f"unknown algorithm {entry.name!r}")
            counts = entry.gpu_counts or self.gpu_counts
            if any(p < 1 for p in counts):
                raise SpecInvalid(f"{entry.name}: gpu_counts must be >= 1")
            if radix is not None:
                for p in counts:
                    if log_radix(p, radix) is None:
                        raise SpecInvalid(
                            f"{entry.name} paired with P={p}, "
                            f"which is not a power of {radix}")


def _radix_of(name: str) -> int | None:
    if not name.startswith("radix-"):
        return None
    try:
        radix = int(name.split("-", 1)[1])
    except ValueError:
        raise SpecInvalid(f"bad radix in algorithm name {name!r}") from None
    if radix < 2:
        raise SpecInvalid(f"radix must be >= 2 in {name!r}")
    return radix


def _params_from_json(raw: dict) -> CostParams:
    return CostParams(
        alpha_us=float(raw.get("alpha_us", 0.7)),
        bandwidth=float(raw.get("bandwidth_gbps", 300.0)) * 1000.0,
        reconfig_delay_us=float(raw.get("reconfig_delay_us", 0.0)),
        lasers_per_tile=int(raw.get("lasers_per_tile", 16)),
        charge_reconfig=bool(raw.get("charge_reconfig", False)),
        reconfig_per_diff=bool(raw.get("reconfig_per_diff", False)),
    )


_ENTRY_KEYS = {"alpha_us", "bandwidth_gbps", "reconfig_delay_us",
               "lasers_per_tile", "charge_reconfig", "reconfig_per_diff",
               "gpu_counts", "pipeline_chunks"}


def load_sweep_spec(path: str | Path) -> SweepSpec:
    """Load and validate a sweep spec from a JSON file."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read sweep spec {path}: {exc}") from exc
    if not isinstance(raw, dict) or "algorithms" not in raw:
        raise SpecInvalid(f"sweep spec {path} must be an object with algorithms")
    algorithms = []
    algos = raw["algorithms"]
    if not isinstance(algos, dict):
        raise SpecInvalid("algorithms must map algorithm name to its settings")
    for name, settings in algos.items():
        if not isinstance(settings, dict):
            raise SpecInvalid(f"{name}: settings must be an object")
        unknown = set(settings) - _ENTRY_KEYS
        if unknown:
            raise SpecInvalid(f"{name}: unknown keys {sorted(unknown)}")
        counts = settings.get("gpu_counts")
        algorithms.append(AlgorithmEntry(
            name=name,
            params=_params_from_json(settings),
            gpu_counts=tuple(int(p) for p in counts) if counts else None,
            pipeline_chunks=int(settings.get("pipeline_chunks", 1)),
        ))
    spec = SweepSpec(
        gpu_counts=tuple(int(p) for p in raw.get("gpu_counts",
                                                 DEFAULT_GPU_COUNTS)),
        buffer_bytes=tuple(int(m) for m in raw.get("buffer_bytes",
                                                   DEFAULT_BUFFER_BYTES)),
        algorithms=tuple(algorithms),
        verify_schedules=bool(raw.get("verify", True)),
    )
    spec.validate()
    return spec


@dataclass(frozen=True)
class SweepRow:
    algorithm: str
    nranks: int
    payload_bytes: int
    cost: CostBreakdown


def run_sweep(spec: SweepSpec) -> list[SweepRow]:
    """Generate, optionally verify, and price every (algorithm, P, M) cell."""
    spec.validate()
    rows: list[SweepRow] = []
    for entry in sorted(spec.algorithms, key=lambda e: e.name):
        for nranks in sorted(entry.gpu_counts or spec.gpu_counts):
            schedules: dict[int, collectives.Schedule] = {}
            for payload in sorted(spec.buffer_bytes):
                schedule = collectives.generate(
                    entry.name, nranks, payload,
                    pipeline_chunks=entry.pipeline_chunks)
                schedules[payload] = schedule
                if spec.verify_schedules:
                    ledger = verify.simulate_chunks(schedule)
                    if not verify.check_allreduce(ledger):
                        deficiency = verify.first_deficiency(ledger)
                        raise VerificationFailed(
                            f"({entry.name}, P={nranks}, M={payload}) failed "
                            f"the chunk oracle: first deficiency {deficiency}")
                rows.append(SweepRow(entry.name, nranks, payload,
                                     eval_cost(schedule, entry.params)))
    rows.sort(key=lambda r: (r.algorithm, r.nranks, r.payload_bytes))
    return rows


def write_sweep_csv(rows: list[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([
                row.algorithm, row.nranks, row.payload_bytes,
                row.cost.alpha_us, row.cost.beta_us, row.cost.reconfig_us,
                row.cost.total_us, row.cost.rounds, row.cost.reconfig_events,
            ])


# -- traces and throughput --------------------------------------------------


@dataclass(frozen=True)
class CollectiveCall:
    nbytes: int
    count: int = 1


@dataclass(frozen=True)
class Iteration:
    compute_us: float
    collectives: tuple[CollectiveCall, ...]


@dataclass(frozen=True)
class Trace:
    iterations: tuple[Iteration, ...]


def parse_trace_lines(lines, source: str = "<trace>") -> Trace:
    iterations: list[Iteration] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{source}:{lineno}: {exc}") from exc
        if not isinstance(raw, dict) or "compute_us" not in raw \
                or "collectives" not in raw:
            raise ParseError(
                f"{source}:{lineno}: need compute_us and collectives")
        compute = raw["compute_us"]
        if not isinstance(compute, (int, float)) or compute < 0:
            raise ParseError(f"{source}:{lineno}: compute_us must be >= 0")
        calls = []
        if not isinstance(raw["collectives"], list):
            raise ParseError(f"{source}:{lineno}: collectives must be a list")
        for call in raw["collectives"]:
            if not isinstance(call, dict) or "bytes" not in call:
                raise ParseError(f"{source}:{lineno}: collective needs bytes")
            nbytes = call["bytes"]
            count = call.get("count", 1)
            if not isinstance(nbytes, int) or nbytes < 0:
                raise ParseError(
                    f"{source}:{lineno}: bytes must be a non-negative integer")
            if not isinstance(count, int) or count < 0:
                raise ParseError(
                    f"{source}:{lineno}: count must be a non-negative integer")
            calls.append(CollectiveCall(nbytes=nbytes, count=count))
        iterations.append(Iteration(float(compute), tuple(calls)))
    return Trace(iterations=tuple(iterations))


def ingest_trace(path: str | Path) -> Trace:
    """Load a training trace: one JSON iteration object per line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read trace {path}: {exc}") from exc
    return parse_trace_lines(text.splitlines(), source=str(path))


def serialize_trace(trace: Trace) -> str:
    """Inverse of parse_trace_lines: one JSON object per line."""
    lines = []
    for iteration in trace.iterations:
        lines.append(json.dumps({
            "compute_us": iteration.compute_us,
            "collectives": [
                {"bytes": c.nbytes, "count": c.count}
                for c in iteration.collectives
            ],
        }, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class SpeedupReport:
    t_baseline_us: float
    t_photonic_us: float
    speedup: float


def eval_training_throughput(trace: Trace, nranks: int,
                             baseline: CostParams, photonic: CostParams,
                             radix: int = 2) -> SpeedupReport:
    """End-to-end time ratio of ring on the baseline fabric vs radix-k.

    Both sides charge identical compute; collectives are priced with the
    closed forms, ring for the baseline and radix-k for the photonic fabric.
    A trace whose collectives contribute nothing yields speedup 1.0.
    """
    t_base = 0.0
    t_phot = 0.0
    for iteration in trace.iterations:
        t_base += iteration.compute_us
        t_phot += iteration.compute_us
        for call in iteration.collectives:
            if call.count == 0:
                continue
            ring = closed_form("ring", nranks, call.nbytes, baseline)
            rad = closed_form(f"radix-{radix}", nranks, call.nbytes, photonic)
            t_base += call.count * ring.total_us
            t_phot += call.count * rad.total_us
    speedup = 1.0 if t_phot == 0.0 else t_base / t_phot
    return SpeedupReport(t_baseline_us=t_base, t_photonic_us=t_phot,
                         speedup=speedup)


# -- subcommands ------------------------------------------------------------


def _maybe_render(args: argparse.Namespace, renderer: str, *render_args) -> None:
    if getattr(args, "no_plot", False):
        return
    # matplotlib import is deferred so --no-plot runs stay light
    from . import report

    figure_path = Path(args.out).with_suffix(".png")
    getattr(report, renderer)(*render_args, figure_path)
    print(f"wrote {figure_path}")


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = load_sweep_spec(args.config)
    rows = run_sweep(spec)
    write_sweep_csv(rows, args.out)
    print(f"wrote {args.out} ({len(rows)} rows)")
    _maybe_render(args, "render_sweep_figure", rows)
    return 0


def _default_replay_config() -> RackConfig:
    return RackConfig(num_servers=8, tiles_per_server=32)


def _cmd_alloc_replay(args: argparse.Namespace) -> int:
    events = parse_workload(args.workload)
    config = (load_rack_config(args.config) if args.config
              else _default_replay_config())
    shapes = tuple(int(s) for s in args.shapes.split(","))
    allocators = [
        PhotonicAllocator(config),
        FixedSliceAllocator(config, shapes),
    ]
    result = fragmentation_report(events, allocators)
    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ALLOC_COLUMNS)
        for stat in result.stats:
            writer.writerow([stat.allocator, stat.requests_total,
                             stat.rejected_with_free_capacity,
                             stat.rejection_rate])
    print(f"wrote {args.out}")
    _maybe_render(args, "render_alloc_figure", result.stats)
    return 0


def _cmd_throughput(args: argparse.Namespace) -> int:
    trace = ingest_trace(args.trace)
    baseline = CostParams(alpha_us=args.alpha_us,
                          bandwidth=args.bandwidth_gbps * 1000.0)
    photonic = CostParams(alpha_us=args.alpha_us,
                          bandwidth=args.bandwidth_gbps * 1000.0,
                          reconfig_delay_us=args.reconfig_us,
                          charge_reconfig=True)
    result = eval_training_throughput(trace, args.gpus, baseline, photonic,
                                      radix=args.radix)
    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(THROUGHPUT_COLUMNS)
        writer.writerow([args.gpus, args.radix, len(trace.iterations),
                         result.t_baseline_us, result.t_photonic_us,
                         result.speedup])
    print(f"wrote {args.out} (speedup {result.speedup:.3f})")
    _maybe_render(args, "render_throughput_figure", result)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optirack",
        description="Cost and allocation simulator for optically "
                    "circuit-switched GPU racks")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="cost sweep over (algorithm, P, M)")
    sweep.add_argument("--config", required=True, help="sweep spec JSON file")
    sweep.add_argument("--out", required=True, help="output CSV path")
    sweep.add_argument("--no-plot", action="store_true",
                       help="skip the PNG figure")
    sweep.set_defaults(func=_cmd_sweep)

    alloc = sub.add_parser("alloc-replay",
                           help="replay an arrive/depart workload against "
                                "the photonic and fixed-slice allocators")
    alloc.add_argument("--workload", required=True,
                       help="workload JSONL file (one event per line)")
    alloc.add_argument("--out", required=True, help="output CSV path")
    alloc.add_argument("--config", help="rack config JSON (default 8x32 rack)")
    alloc.add_argument("--shapes", default="1,2,4,8,16,32",
                       help="allowed fixed slice sizes, comma separated")
    alloc.add_argument("--no-plot", action="store_true",
                       help="skip the PNG figure")
    alloc.set_defaults(func=_cmd_alloc_replay)

    tput = sub.add_parser("throughput",
                          help="trace-driven speedup of radix-k over ring")
    tput.add_argument("--trace", required=True,
                      help="trace JSONL file (one iteration per line)")
    tput.add_argument("--gpus", required=True, type=int, help="rank count P")
    tput.add_argument("--radix", type=int, default=2,
                      help="radix of the photonic collective (default 2)")
    tput.add_argument("--out", required=True, help="output CSV path")
    tput.add_argument("--alpha-us", type=float, default=0.7)
    tput.add_argument("--reconfig-us", type=float, default=3.7)
    tput.add_argument("--bandwidth-gbps", type=float, default=300.0)
    tput.add_argument("--no-plot", action="store_true",
                      help="skip the PNG figure")
    tput.set_defaults(func=_cmd_throughput)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Multi-tenant GPU allocation over the optical rack.

The photonic allocator hands out any free tiles: the fabric can build
circuits between arbitrary tiles, so a tenant's GPUs need not be contiguous
or even share a server. Placement prefers spanning as few servers as
possible (among ties, lowest server then tile index) and is only rejected
when fewer GPUs are free than requested or when the placement's worst-round
cross-server circuit demand cannot fit the fiber pools.

The fixed-slice baseline models an electrically switched rack: a tenant gets
a contiguous, wrap-free run of tiles inside one server, rounded up to an
allowed slice size. Its rejections with capacity to spare are what
fragmentation reports count.
"""

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

from . import collectives
from .errors import (
    FiberInfeasible,
    InsufficientFreeGpus,
    MalformedWorkload,
    NoFeasibleSlice,
    UnknownAllocation,
)
from .topology import GpuId, RackConfig, TopologyState, build_rack, log_radix


@dataclass(frozen=True)
class TenantRequest:
    tenant: str
    size: int


@dataclass(frozen=True)
class Allocation:
    tenant: str
    gpus: tuple[GpuId, ...]
    algorithm_hint: str


def choose_algorithm(size: int) -> str:
    """Hint chosen at grant time: digit-group halving for powers of two."""
    if size >= 2 and log_radix(size, 2) is not None:
        return "radix-2"
    return "ring"


@dataclass
class Occupancy:
    num_servers: int
    tiles_per_server: int
    busy: dict[GpuId, str] = field(default_factory=dict)
    allocations: dict[str, Allocation] = field(default_factory=dict)

    @classmethod
    def for_rack(cls, config: RackConfig) -> "Occupancy":
        return cls(config.num_servers, config.tiles_per_server)

    @property
    def total_gpus(self) -> int:
        return self.num_servers * self.tiles_per_server

    def free_gpus(self) -> list[GpuId]:
        return [
            GpuId(s, t)
            for s in range(self.num_servers)
            for t in range(self.tiles_per_server)
            if GpuId(s, t) not in self.busy
        ]

    def free_count(self) -> int:
        return self.total_gpus - len(self.busy)

    def register(self, allocation: Allocation) -> None:
        if allocation.tenant in self.allocations:
            raise ValueError(f"tenant {allocation.tenant!r} already holds GPUs")
        for gpu in allocation.gpus:
            if gpu in self.busy:
                raise ValueError(f"{gpu} is already busy")
        for gpu in allocation.gpus:
            self.busy[gpu] = allocation.tenant
        self.allocations[allocation.tenant] = allocation


def _fewest_server_placement(occupancy: Occupancy, size: int) -> list[GpuId]:
    """Free GPUs for a request, spanning the fewest servers possible.

    Among placements with minimal span, the lowest server-index set wins,
    and tiles are taken in ascending order within each chosen server.
    """
    free_by_server: dict[int, list[int]] = {}
    for gpu in occupancy.free_gpus():
        free_by_server.setdefault(gpu.server, []).append(gpu.tile)
    counts = sorted(((len(t), s) for s, t in free_by_server.items()),
                    key=lambda pair: (-pair[0], pair[1]))
    span = 0
    covered = 0
    for count, _ in counts:
        covered += count
        span += 1
        if covered >= size:
            break
    servers = sorted(free_by_server)
    chosen: tuple[int, ...] | None = None
    for combo in itertools.combinations(servers, span):
        if sum(len(free_by_server[s]) for s in combo) >= size:
            chosen = combo  # combinations yields lexicographically smallest first
            break
    assert chosen is not None
    gpus: list[GpuId] = []
    for server in chosen:
        for tile in sorted(free_by_server[server]):
            gpus.append(GpuId(server, tile))
            if len(gpus) == size:
                return gpus
    raise AssertionError("placement accounting is inconsistent")


def _check_fibers(state: TopologyState, gpus: list[GpuId], hint: str) -> None:
    if len(gpus) < 2 or len({g.server for g in gpus}) < 2:
        return
    schedule = collectives.generate(hint, len(gpus), len(gpus))
    worst = collectives.max_circuit_demand(schedule, gpus)
    pool = state.config.fibers_per_server_pair
    for pair, needed in worst.items():
        if needed > pool:
            raise FiberInfeasible(
                f"server pair {pair} needs {needed} concurrent circuits for "
                f"{hint} but the fiber pool holds {pool}")


def allocate(state: TopologyState, occupancy: Occupancy,
             req: TenantRequest) -> Allocation:
    """Grant ``req.size`` free GPUs, or raise.

    Raises InsufficientFreeGpus when fewer GPUs are free than requested and
    FiberInfeasible when the placement's worst round of the hinted algorithm
    cannot fit the per-server-pair fiber pools.
    """
    if req.size < 0:
        raise ValueError(f"request size must be >= 0, got {req.size}")
    free = occupancy.free_count()
    if free < req.size:
        raise InsufficientFreeGpus(
            f"request {req.tenant!r} wants {req.size} GPUs, only {free} free")
    hint = choose_algorithm(req.size)
    gpus = _fewest_server_placement(occupancy, req.size) if req.size else []
    _check_fibers(state, gpus, hint)
    allocation = Allocation(tenant=req.tenant, gpus=tuple(gpus),
                            algorithm_hint=hint)
    occupancy.register(allocation)
    return allocation


def release(occupancy: Occupancy, allocation: Allocation) -> None:
    held = occupancy.allocations.get(allocation.tenant)
    if held is None or held != allocation:
        raise UnknownAllocation(
            f"tenant {allocation.tenant!r} does not hold this allocation")
    for gpu in allocation.gpus:
        del occupancy.busy[gpu]
    del occupancy.allocations[allocation.tenant]


def baseline_allocate_fixed(occupancy: Occupancy, req: TenantRequest,
                            allowed_shapes: Iterable[int]) -> Allocation:
    """Fixed-slice grant: a contiguous wrap-free run inside one server.

    Scans runs in (server, start tile) order and grants the smallest allowed
    size >= req.size that fits the run, from the start of the run. Slice
    granularity means a tenant may receive more GPUs than it asked for.
    """
    if req.size < 0:
        raise ValueError(f"request size must be >= 0, got {req.size}")
    shapes = sorted(set(allowed_shapes))
    if any(s < 1 for s in shapes):
        raise ValueError("allowed shapes must be positive")
    if req.size == 0:
        allocation = Allocation(req.tenant, (), choose_algorithm(0))
        occupancy.register(allocation)
        return allocation
    fitting = [s for s in shapes if s >= req.size]
    if not fitting:
        raise NoFeasibleSlice(
            f"no allowed slice size (max {max(shapes, default=0)}) fits "
            f"request of {req.size}")
    for server in range(occupancy.num_servers):
        run_start = None
        tiles = occupancy.tiles_per_server
        for tile in range(tiles + 1):
            free = tile < tiles and GpuId(server, tile) not in occupancy.busy
            if free and run_start is None:
                run_start = tile
            elif not free and run_start is not None:
                run_len = tile - run_start
                grant = next((s for s in fitting if s <= run_len), None)
                if grant is not None:
                    gpus = tuple(GpuId(server, run_start + i) for i in range(grant))
                    allocation = Allocation(req.tenant, gpus,
                                            choose_algorithm(grant))
                    occupancy.register(allocation)
                    return allocation
                run_start = None
    raise NoFeasibleSlice(
        f"no contiguous free run admits an allowed slice >= {req.size}")


# -- workload replay --------------------------------------------------------


@dataclass(frozen=True)
class WorkloadEvent:
    event: str  # "arrive" | "depart"
    tenant: str
    size: int = 0


def parse_workload_lines(lines: Iterable[str], source: str = "<workload>"
                         ) -> list[WorkloadEvent]:
    events: list[WorkloadEvent] = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedWorkload(f"{source}:{lineno}: {exc}") from exc
        if not isinstance(raw, dict) or "event" not in raw or "tenant" not in raw:
            raise MalformedWorkload(
                f"{source}:{lineno}: need an object with event and tenant")
        kind = raw["event"]
        if kind not in ("arrive", "depart"):
            raise MalformedWorkload(f"{source}:{lineno}: unknown event {kind!r}")
        size = 0
        if kind == "arrive":
            if "size" not in raw:
                raise MalformedWorkload(f"{source}:{lineno}: arrive needs a size")
            size = raw["size"]
            if not isinstance(size, int) or size < 0:
                raise MalformedWorkload(
                    f"{source}:{lineno}: size must be a non-negative integer")
        events.append(WorkloadEvent(kind, str(raw["tenant"]), size))
    return events


def parse_workload(path: str | Path) -> list[WorkloadEvent]:
    """Load a workload: one JSON event object per line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MalformedWorkload(f"cannot read workload {path}: {exc}") from exc
    return parse_workload_lines(text.splitlines(), source=str(path))


class Allocator(Protocol):
    name: str

    def reset(self) -> None: ...
    def free_count(self) -> int: ...
    def try_allocate(self, req: TenantRequest) -> Allocation: ...
    def release_tenant(self, tenant: str) -> None: ...


class PhotonicAllocator:
    """Replayable wrapper around allocate/release for one rack config."""

    def __init__(self, config: RackConfig, name: str = "photonic"):
        self.name = name
        self.config = config
        self.reset()

    def reset(self) -> None:
        self.state = build_rack(self.config)
        self.occupancy = Occupancy.for_rack(self.config)

    def free_count(self) -> int:
        return self.occupancy.free_count()

    def try_allocate(self, req: TenantRequest) -> Allocation:
        return allocate(self.state, self.occupancy, req)

    def release_tenant(self, tenant: str) -> None:
        if tenant not in self.occupancy.allocations:
            raise UnknownAllocation(f"tenant {tenant!r} holds no allocation")
        release(self.occupancy, self.occupancy.allocations[tenant])


class FixedSliceAllocator:
    """Replayable fixed-slice baseline bound to one rack geometry."""

    def __init__(self, config: RackConfig, allowed_shapes: Iterable[int],
                 name: str = "fixed-slice"):
        self.name = name
        self.config = config
        self.allowed_shapes = tuple(sorted(set(allowed_shapes)))
        self.reset()

    def reset(self) -> None:
        self.occupancy = Occupancy.for_rack(self.config)

    def free_count(self) -> int:
        return self.occupancy.free_count()

    def try_allocate(self, req: TenantRequest) -> Allocation:
        return baseline_allocate_fixed(self.occupancy, req, self.allowed_shapes)

    def release_tenant(self, tenant: str) -> None:
        if tenant not in self.occupancy.allocations:
            raise UnknownAllocation(f"tenant {tenant!r} holds no allocation")
        release(self.occupancy, self.occupancy.allocations[tenant])


@dataclass(frozen=True)
class AllocatorStats:
    allocator: str
    requests_total: int
    rejected_with_free_capacity: int

    @property
    def rejection_rate(self) -> float:
        if self.requests_total == 0:
            return 0.0
        return self.rejected_with_free_capacity / self.requests_total


@dataclass(frozen=True)
class FragmentationReport:
    stats: tuple[AllocatorStats, ...]


_REJECTIONS = (InsufficientFreeGpus, FiberInfeasible, NoFeasibleSlice)


def fragmentation_report(events: list[WorkloadEvent],
                         allocators: list[Allocator]) -> FragmentationReport:
    """Replay one workload against each allocator from an empty rack.

    A rejection counts against an allocator only when it still had at least
    ``size`` free GPUs, i.e. when the refusal is fragmentation or placement
    policy rather than genuine exhaustion. Departures of tenants that were
    rejected are no-ops so the same workload replays against any allocator.
    """
    stats = []
    for allocator in allocators:
        allocator.reset()
        arrived: set[str] = set()
        live: set[str] = set()
        requests = 0
        rejected_with_capacity = 0
        for event in events:
            if event.event == "arrive":
                if event.tenant in live:
                    raise MalformedWorkload(
                        f"tenant {event.tenant!r} arrives while still present")
                arrived.add(event.tenant)
                requests += 1
                free_before = allocator.free_count()
                try:
                    allocator.try_allocate(
                        TenantRequest(event.tenant, event.size))
                    live.add(event.tenant)
                except _REJECTIONS:
                    if free_before >= event.size:
                        rejected_with_capacity += 1
            else:
                if event.tenant not in arrived:
                    raise MalformedWorkload(
                        f"tenant {event.tenant!r} departs before arriving")
                if event.tenant in live:
                    allocator.release_tenant(event.tenant)
                    live.discard(event.tenant)
        stats.append(AllocatorStats(allocator.name, requests,
                                    rejected_with_capacity))
    return FragmentationReport(stats=tuple(stats))

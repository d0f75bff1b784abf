"""Rack-scale optical fabric model.

A rack is a set of servers, each holding a photonic interposer with up to 32
GPU tiles. Every tile drives up to 16 wavelength-multiplexed lasers, so the
transmit side of a tile is a budget of 16 wavelength lanes that concurrent
outgoing circuits share. Circuits are directed (a duplex link is two
circuits). Within a server any tile can reach any other tile through the
interposer waveguides, so intra-server circuits are limited only by the
transmit wavelength budget; circuits between servers additionally consume one
fiber from a per-server-pair pool for their lifetime.
"""

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import (
    FiberExhausted,
    InfeasibleTarget,
    InvalidConfig,
    ParseError,
    SelfLoop,
    SizeMismatch,
    UnknownCircuit,
    WavelengthBudgetExceeded,
)

MAX_TILES_PER_SERVER = 32
MAX_LASERS_PER_TILE = 16

# Keys a rack config file must contain, exactly.
_CONFIG_KEYS = (
    "num_servers",
    "tiles_per_server",
    "lasers_per_tile",
    "egress_bandwidth_gbps",
    "fibers_per_server_pair",
    "alpha_fixed_us",
    "reconfig_delay_us",
)


class GpuId(NamedTuple):
    server: int
    tile: int


class Medium(Enum):
    WAVEGUIDE = "waveguide"
    FIBER = "fiber"


@dataclass(frozen=True)
class Circuit:
    """A directed optical circuit between two GPU tiles.

    ``wavelengths`` is the number of laser lanes the source tile commits to
    this circuit; bandwidth follows from the lane fraction, see cost.
    """

    src: GpuId
    dst: GpuId
    wavelengths: int = 1

    @property
    def medium(self) -> Medium:
        return Medium.WAVEGUIDE if self.src.server == self.dst.server else Medium.FIBER

    @property
    def server_pair(self) -> tuple[int, int] | None:
        """Unordered server pair for cross-server circuits, else None."""
        if self.src.server == self.dst.server:
            return None
        a, b = self.src.server, self.dst.server
        return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class RackConfig:
    num_servers: int
    tiles_per_server: int
    lasers_per_tile: int = MAX_LASERS_PER_TILE
    egress_bandwidth: float = 300_000.0  # bytes per microsecond, per direction
    fibers_per_server_pair: int = 64
    alpha_fixed_us: float = 0.7
    reconfig_delay_us: float = 3.7

    def validate(self) -> None:
        if self.num_servers < 1:
            raise InvalidConfig(f"num_servers must be >= 1, got {self.num_servers}")
        if not 1 <= self.tiles_per_server <= MAX_TILES_PER_SERVER:
            raise InvalidConfig(
                f"tiles_per_server must be in [1, {MAX_TILES_PER_SERVER}], "
                f"got {self.tiles_per_server}"
            )
        if not 1 <= self.lasers_per_tile <= MAX_LASERS_PER_TILE:
            raise InvalidConfig(
                f"lasers_per_tile must be in [1, {MAX_LASERS_PER_TILE}], "
                f"got {self.lasers_per_tile}"
            )
        if self.egress_bandwidth <= 0:
            raise InvalidConfig("egress_bandwidth must be positive")
        if self.fibers_per_server_pair < 0:
            raise InvalidConfig("fibers_per_server_pair must be >= 0")
        if self.alpha_fixed_us < 0 or self.reconfig_delay_us < 0:
            raise InvalidConfig("latency constants must be >= 0")

    @property
    def total_gpus(self) -> int:
        return self.num_servers * self.tiles_per_server

    def gpus(self) -> list[GpuId]:
        return [
            GpuId(s, t)
            for s in range(self.num_servers)
            for t in range(self.tiles_per_server)
        ]


def load_rack_config(path: str | Path) -> RackConfig:
    """Load a rack config from a JSON file.

    The file must contain exactly the keys in _CONFIG_KEYS. Bandwidth is
    given in GB/s and converted to bytes/us (300 GB/s -> 300000 bytes/us).
    """
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read rack config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidConfig(f"rack config {path} must be a JSON object")
    missing = [k for k in _CONFIG_KEYS if k not in raw]
    extra = [k for k in raw if k not in _CONFIG_KEYS]
    if missing or extra:
        raise InvalidConfig(
            f"rack config {path} keys mismatch: missing={missing} extra={extra}"
        )
    config = RackConfig(
        num_servers=int(raw["num_servers"]),
        tiles_per_server=int(raw["tiles_per_server"]),
        lasers_per_tile=int(raw["lasers_per_tile"]),
        egress_bandwidth=float(raw["egress_bandwidth_gbps"]) * 1000.0,
        fibers_per_server_pair=int(raw["fibers_per_server_pair"]),
        alpha_fixed_us=float(raw["alpha_fixed_us"]),
        reconfig_delay_us=float(raw["reconfig_delay_us"]),
    )
    config.validate()
    return config


@dataclass
class ReconfigReport:
    changed: bool
    delay_us: float


@dataclass
class TopologyState:
    """Mutable circuit state of a rack.

    ``circuits`` maps handles to active circuits; wavelength and fiber usage
    are kept incrementally and always equal a recount over the active set.
    """

    config: RackConfig
    circuits: dict[int, Circuit] = field(default_factory=dict)
    wavelength_usage: dict[GpuId, int] = field(default_factory=dict)
    fiber_usage: dict[tuple[int, int], int] = field(default_factory=dict)
    fiber_index: dict[int, int] = field(default_factory=dict)
    reconfig_count: int = 0
    _next_handle: int = 0

    def active_circuits(self) -> frozenset[Circuit]:
        return frozenset(self.circuits.values())

    def used_wavelengths(self, gpu: GpuId) -> int:
        return self.wavelength_usage.get(gpu, 0)

    def used_fibers(self, pair: tuple[int, int]) -> int:
        return self.fiber_usage.get(pair, 0)


def build_rack(config: RackConfig) -> TopologyState:
    """Validate the config and return an empty (no circuits) rack state."""
    config.validate()
    return TopologyState(config=config)


def _check_endpoint(config: RackConfig, gpu: GpuId, role: str) -> None:
    if not (0 <= gpu.server < config.num_servers):
        raise ValueError(f"{role} server {gpu.server} out of range")
    if not (0 <= gpu.tile < config.tiles_per_server):
        raise ValueError(f"{role} tile {gpu.tile} out of range")


def _validate_circuit(config: RackConfig, circuit: Circuit) -> None:
    _check_endpoint(config, circuit.src, "src")
    _check_endpoint(config, circuit.dst, "dst")
    if circuit.src == circuit.dst:
        raise SelfLoop(f"circuit endpoints coincide: {circuit.src}")
    if circuit.wavelengths < 1:
        raise ValueError(f"wavelengths must be >= 1, got {circuit.wavelengths}")


def establish_circuit(
    state: TopologyState, src: GpuId, dst: GpuId, wavelengths: int = 1
) -> int:
    """Bring up one directed circuit and return its handle.

    Raises SelfLoop, WavelengthBudgetExceeded, or FiberExhausted when a
    budget would be violated; on error the state is unchanged.
    """
    circuit = Circuit(src=src, dst=dst, wavelengths=wavelengths)
    _validate_circuit(state.config, circuit)
    used = state.used_wavelengths(src)
    if used + wavelengths > state.config.lasers_per_tile:
        raise WavelengthBudgetExceeded(
            f"tile {src}: {used} + {wavelengths} > {state.config.lasers_per_tile}"
        )
    pair = circuit.server_pair
    if pair is not None:
        pool = state.config.fibers_per_server_pair
        if state.used_fibers(pair) >= pool:
            raise FiberExhausted(f"server pair {pair}: all {pool} fibers in use")

    handle = state._next_handle
    state._next_handle += 1
    state.circuits[handle] = circuit
    state.wavelength_usage[src] = used + wavelengths
    if pair is not None:
        state.fiber_usage[pair] = state.used_fibers(pair) + 1
        taken = {
            state.fiber_index[h]
            for h, c in state.circuits.items()
            if h in state.fiber_index and c.server_pair == pair
        }
        state.fiber_index[handle] = next(
            i for i in itertools.count() if i not in taken)
    return handle


def teardown_circuit(state: TopologyState, handle: int) -> None:
    if handle not in state.circuits:
        raise UnknownCircuit(f"no active circuit with handle {handle}")
    circuit = state.circuits.pop(handle)
    remaining = state.wavelength_usage[circuit.src] - circuit.wavelengths
    if remaining:
        state.wavelength_usage[circuit.src] = remaining
    else:
        del state.wavelength_usage[circuit.src]
    pair = circuit.server_pair
    if pair is not None:
        left = state.fiber_usage[pair] - 1
        if left:
            state.fiber_usage[pair] = left
        else:
            del state.fiber_usage[pair]
        del state.fiber_index[handle]


def check_feasible(config: RackConfig, target: Iterable[Circuit]) -> None:
    """Raise InfeasibleTarget if the circuit set violates any budget."""
    wavelengths: dict[GpuId, int] = {}
    fibers: dict[tuple[int, int], int] = {}
    for circuit in target:
        try:
            _validate_circuit(config, circuit)
        except (SelfLoop, ValueError) as exc:
            raise InfeasibleTarget(str(exc)) from exc
        wavelengths[circuit.src] = wavelengths.get(circuit.src, 0) + circuit.wavelengths
        pair = circuit.server_pair
        if pair is not None:
            fibers[pair] = fibers.get(pair, 0) + 1
    for gpu, used in wavelengths.items():
        if used > config.lasers_per_tile:
            raise InfeasibleTarget(
                f"tile {gpu} needs {used} wavelengths > {config.lasers_per_tile}"
            )
    for pair, used in fibers.items():
        if used > config.fibers_per_server_pair:
            raise InfeasibleTarget(
                f"server pair {pair} needs {used} fibers > "
                f"{config.fibers_per_server_pair}"
            )


def reconfigure(state: TopologyState, target: Iterable[Circuit]) -> ReconfigReport:
    """Atomically replace the active circuit set with ``target``.

    A no-op target (set-equal to the active circuits) costs nothing; any
    change costs one reconfiguration delay regardless of how many circuits
    move, since the switches settle in parallel.
    """
    desired = frozenset(target)
    check_feasible(state.config, desired)
    if desired == state.active_circuits():
        return ReconfigReport(changed=False, delay_us=0.0)
    for handle in list(state.circuits):
        teardown_circuit(state, handle)
    for circuit in sorted(desired, key=lambda c: (c.src, c.dst, c.wavelengths)):
        establish_circuit(state, circuit.src, circuit.dst, circuit.wavelengths)
    state.reconfig_count += 1
    return ReconfigReport(changed=True, delay_us=state.config.reconfig_delay_us)


# -- all-to-all group topology ----------------------------------------------


@dataclass(frozen=True)
class SipacParams:
    """Parameters of the leveled all-to-all-group topology.

    ``group_size`` nodes per fully connected group, ``levels`` digit
    positions; the topology spans group_size ** levels nodes.
    """

    group_size: int
    levels: int

    def validate(self) -> None:
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")

    @property
    def num_nodes(self) -> int:
        return self.group_size**self.levels


def sipac_topology(params: SipacParams, gpus: list[GpuId]) -> set[Circuit]:
    """Directed circuit set of the leveled all-to-all-group topology.

    Write each node index in base ``group_size``. For every digit position,
    nodes that agree on all other digits form a fully connected directed
    group. Node i is mapped onto gpus[i]. Edge count is
    levels * group_size**(levels-1) * group_size * (group_size - 1).
    """
    params.validate()
    n = params.num_nodes
    if len(gpus) != n:
        raise SizeMismatch(f"need exactly {n} GPUs, got {len(gpus)}")
    r, l = params.group_size, params.levels
    circuits: set[Circuit] = set()
    for level in range(l):
        stride = r**level
        for base in range(n):
            # base iterates group anchors: digit at `level` equal to zero
            if (base // stride) % r != 0:
                continue
            members = [base + v * stride for v in range(r)]
            for a, b in itertools.permutations(members, 2):
                circuits.add(Circuit(src=gpus[a], dst=gpus[b], wavelengths=1))
    assert len(circuits) == l * r ** (l - 1) * r * (r - 1)
    return circuits


def log_radix(n: int, k: int) -> int | None:
    """Exact base-k logarithm of n, or None if n is not a power of k."""
    if n < 1 or k < 2:
        return None
    m = round(math.log(n, k)) if n > 1 else 0
    for candidate in (m - 1, m, m + 1):
        if candidate >= 0 and k**candidate == n:
            return candidate
    return None

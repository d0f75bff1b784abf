"""Alpha-beta cost model with wavelength quantization and reconfiguration.

Per-round time is alpha plus the slowest rank's serialization time. A rank
driving f concurrent outgoing circuits splits its egress lanes: each circuit
gets floor(L/f) of the L per-tile lasers, i.e. bandwidth (floor(L/f)/L) * B.
With f=1 that is the full B; with f=3 and L=16 each circuit gets 5/16 B, so
a fanout-3 round pays a 16/15 serialization premium over a perfect three-way
split. Reconfiguration charges the switch settling delay either on every
round (the effective-alpha view) or only on rounds whose circuit set differs
from the previous round's.
"""

from dataclasses import dataclass

from .collectives import Schedule
from .errors import UnsupportedAlgorithm
from .topology import log_radix


@dataclass(frozen=True)
class CostParams:
    alpha_us: float
    bandwidth: float  # bytes per microsecond, per direction
    reconfig_delay_us: float = 0.0
    lasers_per_tile: int = 16
    charge_reconfig: bool = False
    # False: delta on every round; True: only on circuit-set changes
    # (the first round always counts as a change: the fabric must be set up).
    reconfig_per_diff: bool = False


@dataclass(frozen=True)
class CostBreakdown:
    alpha_us: float
    beta_us: float
    reconfig_us: float
    total_us: float
    rounds: int
    reconfig_events: int


def per_circuit_bandwidth(params: CostParams, fanout: int) -> float:
    """Bandwidth one circuit gets when its source tile drives ``fanout`` circuits."""
    if fanout < 1:
        raise ValueError(f"fanout must be >= 1, got {fanout}")
    lanes = params.lasers_per_tile // fanout
    if lanes == 0:
        raise ValueError(
            f"fanout {fanout} exceeds the {params.lasers_per_tile}-lane budget")
    return lanes / params.lasers_per_tile * params.bandwidth


def eval_cost(schedule: Schedule, params: CostParams) -> CostBreakdown:
    """Round-by-round cost of a schedule under the model above.

    alpha_us and reconfig_us are exact multiples of their constants (count
    times constant, not a float accumulation); beta_us is summed per round.
    """
    beta_us = 0.0
    reconfig_events = 0
    previous = None
    for rnd in schedule.rounds:
        fanout: dict[int, int] = {}
        for t in rnd.transfers:
            fanout[t.src] = fanout.get(t.src, 0) + 1
        slowest = 0.0
        for t in rnd.transfers:
            bw = per_circuit_bandwidth(params, fanout[t.src])
            slowest = max(slowest, t.nbytes / bw)
        beta_us += slowest
        circuits = rnd.required_circuits
        if params.charge_reconfig:
            if not params.reconfig_per_diff or previous is None or circuits != previous:
                reconfig_events += 1
        previous = circuits
    nrounds = len(schedule.rounds)
    alpha_us = nrounds * params.alpha_us
    reconfig_us = reconfig_events * params.reconfig_delay_us
    return CostBreakdown(
        alpha_us=alpha_us,
        beta_us=beta_us,
        reconfig_us=reconfig_us,
        total_us=alpha_us + beta_us + reconfig_us,
        rounds=nrounds,
        reconfig_events=reconfig_events,
    )


def closed_form(algorithm: str, nranks: int, payload_bytes: int,
                params: CostParams) -> CostBreakdown:
    """Closed-form cost for ring and radix-k under a perfect bandwidth split.

    ring:     2(P-1) rounds,      beta = 2 (P-1)/P M/B
    radix-k:  2 log_k(P) rounds,  beta = 2 (P-1)/P M/B

    The radix form assumes each of the k-1 concurrent circuits gets exactly
    B/(k-1), which eval_cost reproduces when k-1 divides lasers_per_tile.
    Reconfiguration events follow the same two charging modes as eval_cost:
    every round, or (per-diff) one event for ring's unchanging circuit set
    and 2 log_k(P) - 1 events for radix-k, whose reduce and gather meet on a
    shared circuit set in the middle.
    """
    if nranks < 1:
        raise ValueError(f"nranks must be >= 1, got {nranks}")
    if payload_bytes < 0:
        raise ValueError(f"payload_bytes must be >= 0, got {payload_bytes}")
    if algorithm == "ring":
        nrounds = 2 * (nranks - 1)
        per_diff_events = 1 if nrounds else 0
    elif algorithm.startswith("radix-"):
        try:
            radix = int(algorithm.split("-", 1)[1])
        except ValueError:
            raise UnsupportedAlgorithm(f"bad radix in {algorithm!r}") from None
        if radix < 2:
            raise ValueError(f"radix must be >= 2, got {radix}")
        m = log_radix(nranks, radix)
        if m is None:
            raise UnsupportedAlgorithm(
                f"closed form needs nranks to be a power of {radix}, got {nranks}")
        nrounds = 2 * m
        per_diff_events = 2 * m - 1 if m else 0
    else:
        raise UnsupportedAlgorithm(f"no closed form for {algorithm!r}")
    if params.charge_reconfig:
        reconfig_events = per_diff_events if params.reconfig_per_diff else nrounds
    else:
        reconfig_events = 0
    alpha_us = nrounds * params.alpha_us
    beta_us = 2 * (nranks - 1) * payload_bytes / (nranks * params.bandwidth)
    reconfig_us = reconfig_events * params.reconfig_delay_us
    return CostBreakdown(
        alpha_us=alpha_us,
        beta_us=beta_us,
        reconfig_us=reconfig_us,
        total_us=alpha_us + beta_us + reconfig_us,
        rounds=nrounds,
        reconfig_events=reconfig_events,
    )

"""Simulator for optically circuit-switched multi-GPU racks.

Models the optical fabric (wavelength and fiber budgets, microsecond-scale
reconfiguration), generates allreduce schedules shaped for it, prices them
with an alpha-beta cost model, verifies them against a chunk ledger, and
replays multi-tenant allocation workloads.
"""

from .allocation import (
    Allocation,
    FixedSliceAllocator,
    FragmentationReport,
    Occupancy,
    PhotonicAllocator,
    TenantRequest,
    allocate,
    baseline_allocate_fixed,
    choose_algorithm,
    fragmentation_report,
    parse_workload,
    release,
)
from .cli import (
    SweepSpec,
    Trace,
    eval_training_throughput,
    ingest_trace,
    load_sweep_spec,
    run_sweep,
    serialize_trace,
)
from .collectives import (
    Combine,
    Round,
    Schedule,
    Transfer,
    circuit_demand,
    format_schedule,
    gen_dnc,
    gen_recursive_radix,
    gen_ring,
    gen_tree,
    generate,
    max_circuit_demand,
)
from .cost import CostBreakdown, CostParams, closed_form, eval_cost
from .topology import (
    Circuit,
    GpuId,
    RackConfig,
    SipacParams,
    TopologyState,
    build_rack,
    establish_circuit,
    load_rack_config,
    reconfigure,
    sipac_topology,
    teardown_circuit,
)
from .verify import ChunkLedger, check_allreduce, first_deficiency, simulate_chunks

__version__ = "0.1.0"

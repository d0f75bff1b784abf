"""Exception types raised across the simulator.

Everything inherits from SimulationError so callers (and the CLI) can catch
domain failures in one place without swallowing programming errors.
"""


class SimulationError(Exception):
    """Base class for all domain-level failures."""


# -- topology ---------------------------------------------------------------

class InvalidConfig(SimulationError):
    """Rack configuration violates a hardware bound or is malformed."""


class SelfLoop(SimulationError):
    """Circuit endpoints are the same GPU."""


class WavelengthBudgetExceeded(SimulationError):
    """A tile would transmit on more wavelengths than it has lasers."""


class FiberExhausted(SimulationError):
    """No free fiber remains in the pool for a server pair."""


class UnknownCircuit(SimulationError):
    """Circuit handle does not name an active circuit."""


class InfeasibleTarget(SimulationError):
    """A reconfiguration target violates a wavelength or fiber budget."""


class SizeMismatch(SimulationError):
    """GPU list length does not match the expected node or rank count."""


# -- allocation -------------------------------------------------------------

class InsufficientFreeGpus(SimulationError):
    """Fewer free GPUs than the request size."""


class FiberInfeasible(SimulationError):
    """A placement exists but its per-round fiber demand cannot be met."""


class NoFeasibleSlice(SimulationError):
    """No contiguous free run admits an allowed fixed slice size."""


class UnknownAllocation(SimulationError):
    """Release of a tenant that holds no allocation."""


class MalformedWorkload(SimulationError):
    """Workload event stream is inconsistent or unparseable."""


# -- collectives ------------------------------------------------------------

class NotAPowerOfRadix(SimulationError):
    """Rank count is not an exact power of the requested radix."""


class UnsupportedAlgorithm(SimulationError):
    """Algorithm name is not recognized (or has no closed form)."""


# -- verification -----------------------------------------------------------

class MalformedTransfer(SimulationError):
    """Transfer references a rank or chunk outside the schedule's bounds."""


# -- cli --------------------------------------------------------------------

class SpecInvalid(SimulationError):
    """Sweep specification is inconsistent (e.g. radix vs GPU count pairing)."""


class ParseError(SimulationError):
    """A config, trace, or workload file failed to parse."""


class VerificationFailed(SimulationError):
    """A generated schedule failed the chunk-ledger oracle during a sweep."""

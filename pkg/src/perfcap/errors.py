"""Exception types shared across the package."""


class PerfcapError(Exception):
    """Base class for all perfcap errors."""


class InvalidInputError(PerfcapError, ValueError):
    """An argument violates an operation's precondition."""


class LoadError(PerfcapError):
    """A file could not be parsed or failed invariant validation on load."""


class CalibrationError(LoadError):
    """A camera rig entry is malformed or not a rigid transform."""


class DegenerateGeometryError(PerfcapError):
    """The alignment system is ill-conditioned (near-parallel rays)."""


class DegenerateBlendError(PerfcapError):
    """A dual-quaternion blend collapsed to near-zero norm."""


class ConstructionError(PerfcapError):
    """Embedded-graph construction failed (e.g. unreachable vertex)."""

"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: configuration problems exit 2,
numeric synthesis failures 3, stability-certificate failures 4 and
scheduling violations 5.
"""


class SelfTrigError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(SelfTrigError):
    """Bad user input: dimensions, schema violations, inadmissible networks."""


class SynthesisError(SelfTrigError):
    """Numeric failure during offline synthesis (Riccati solve, controllability)."""


class CertificateError(SelfTrigError):
    """The closed-loop contraction condition cannot be certified."""


class SchedulingError(SelfTrigError):
    """Slot conflict or empty feasible wait set in the reservation machinery."""


class GainLookupError(SelfTrigError, LookupError):
    """Requested downsampling factor has no entry in the gain table."""

"""Self-triggered MPC toolkit.

Offline: synthesize per-loop lookup tables of value matrices and feedback
gains over a set of admissible sampling waits, plus a contraction
certificate.  Online: at every sample jointly pick the input and the time
until the next sample, coordinating many loops on one shared channel with
conflict-free slot reservations.
"""

from .controller import Decision, decide, partition_1d, value_of
from .errors import (
    CertificateError,
    ConfigurationError,
    GainLookupError,
    SchedulingError,
    SelfTrigError,
    SynthesisError,
)
from .model import (
    LiftedModel,
    LtiSystem,
    WeightSpec,
    lift_dynamics,
    lift_range,
    lift_weights,
    stage_cost_sum,
)
from .scenario import load_scenario, scenario_from_dict
from .scheduler import (
    ReservationLedger,
    excluded_waits,
    feasible_set,
    feasible_waits_heterogeneous,
    reserve,
    verify_conflict_free,
)
from .simulator import (
    LoopSpec,
    LoopTrace,
    Scenario,
    SimTrace,
    SweepSummary,
    TxEvent,
    average_sampling_interval,
    empiric_cost,
    rng_substream,
    run_periodic,
    run_self_triggered,
    step_plant,
    sweep_alpha,
)
from .synthesis import (
    GainTable,
    StabilityCertificate,
    build_gain_table,
    deserialize_gain_table,
    downsampled_controllable,
    is_controllable,
    pstar_is_gamma,
    select_pstar,
    serialize_gain_table,
    solve_periodic_riccati,
    stability_certificate,
    uncontrollable_reason,
)

__version__ = "0.1.0"

__all__ = [
    "CertificateError",
    "ConfigurationError",
    "Decision",
    "GainLookupError",
    "GainTable",
    "LiftedModel",
    "LoopSpec",
    "LoopTrace",
    "LtiSystem",
    "ReservationLedger",
    "Scenario",
    "SchedulingError",
    "SelfTrigError",
    "SimTrace",
    "StabilityCertificate",
    "SweepSummary",
    "SynthesisError",
    "TxEvent",
    "WeightSpec",
    "average_sampling_interval",
    "build_gain_table",
    "decide",
    "deserialize_gain_table",
    "downsampled_controllable",
    "empiric_cost",
    "excluded_waits",
    "feasible_set",
    "feasible_waits_heterogeneous",
    "is_controllable",
    "lift_dynamics",
    "lift_range",
    "lift_weights",
    "load_scenario",
    "partition_1d",
    "pstar_is_gamma",
    "reserve",
    "rng_substream",
    "run_periodic",
    "run_self_triggered",
    "scenario_from_dict",
    "select_pstar",
    "serialize_gain_table",
    "solve_periodic_riccati",
    "stability_certificate",
    "stage_cost_sum",
    "step_plant",
    "sweep_alpha",
    "uncontrollable_reason",
    "value_of",
    "verify_conflict_free",
]

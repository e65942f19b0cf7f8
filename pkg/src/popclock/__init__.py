"""Loosely-stabilizing leaderless phase clock and the adaptive majority protocol built on it."""

__version__ = "0.1.0"

from .engine import (  # noqa: E402
    CorruptedConfigurationError,
    IdentityProtocol,
    InteractionEvent,
    InvalidPopulationError,
    Protocol,
    RngStream,
    TraceRecord,
    run,
    sample_pair,
    step,
)
from .majority import (  # noqa: E402
    InputChangeModel,
    MajorityAgentState,
    MajorityProtocol,
    Opinion,
    inject_input_change,
    majority_transition,
    subphase_of,
    tally,
)
from .monitors import ConfigClass, PhaseReport, SignalLogEntry, classify, span, verify_phase_clock  # noqa: E402
from .phase_clock import ClockParams, ClockProtocol, Interval, clock_transition, interval_of, make_params, ring_distance  # noqa: E402

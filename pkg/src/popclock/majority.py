"""Adaptive majority on top of the phase clock.

Every agent carries an input, an opinion and an output, each in ``{A, B, U}``.
The working interval is cut into six equal subintervals; the first, third and
fifth host the adoption, cancellation and broadcasting subprotocols.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Any, NamedTuple

from .engine import Protocol, RngStream
from .phase_clock import ClockParams, clock_transition

__all__ = [
    "Opinion",
    "MajorityAgentState",
    "InputChangeModel",
    "InputChangeInjector",
    "CANCEL_BROADCAST",
    "USD",
    "MODES",
    "subphase_length",
    "subphase_of",
    "majority_transition",
    "inject_input_change",
    "tally",
    "MajorityProtocol",
]

CANCEL_BROADCAST = "cancel-broadcast"
USD = "usd"
MODES = (CANCEL_BROADCAST, USD)


class Opinion(IntEnum):
    A = 0
    B = 1
    U = 2

    def __str__(self) -> str:
        return self.name


class MajorityAgentState(NamedTuple):
    clock: int
    input: Opinion
    opinion: Opinion
    output: Opinion


@dataclass(frozen=True, slots=True)
class InputChangeModel:
    """Per-interaction probability ``rate`` of converting one input.

    ``direction="a-to-b"`` turns a uniformly chosen A-input agent into B;
    ``"symmetric"`` flips a uniformly chosen decided input either way.
    """

    rate: float
    direction: str = "a-to-b"

    def __post_init__(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must lie in [0, 1], got {self.rate}")
        if self.direction not in ("a-to-b", "symmetric"):
            raise ValueError(f"unknown direction {self.direction!r}")


def subphase_length(p: ClockParams) -> int:
    return (p.work_end - p.launch_end) // 6


def subphase_of(q: int, p: ClockParams) -> int | None:
    """1, 2 or 3 inside the first, third or fifth working subinterval; ``None`` elsewhere."""
    if q < p.launch_end or q >= p.work_end:
        return None
    length = subphase_length(p)
    if length < 1:
        raise ValueError("working interval too short for six subintervals")
    return {0: 1, 2: 2, 4: 3}.get((q - p.launch_end) // length)


def _interact(u: MajorityAgentState, v: MajorityAgentState, p: ClockParams, mode: str):
    clock, tag, signal = clock_transition(u.clock, v.clock, p)
    mine = u.input if signal else u.opinion
    theirs = v.opinion
    v_new = v
    sp = subphase_of(clock, p)
    if sp == 1:
        if mine == Opinion.U:
            mine = theirs
    elif mode == CANCEL_BROADCAST:
        if sp == 2:
            if mine != theirs and mine != Opinion.U and theirs != Opinion.U:
                mine = Opinion.U
                v_new = v._replace(opinion=Opinion.U)
        elif sp == 3 and mine == Opinion.U:
            mine = theirs
    elif sp in (2, 3):
        if mine != Opinion.U and theirs != Opinion.U and mine != theirs:
            mine = Opinion.U
        elif mine == Opinion.U and theirs != Opinion.U:
            mine = theirs
    output = mine if clock >= p.work_end else u.output
    return MajorityAgentState(clock, u.input, Opinion(mine), Opinion(output)), v_new, tag, signal


def majority_transition(
    u: MajorityAgentState, v: MajorityAgentState, p: ClockParams, mode: str = CANCEL_BROADCAST
) -> tuple[MajorityAgentState, MajorityAgentState]:
    """One interaction with initiator ``u`` and responder ``v``.

    Order: clock update, input copy on a signal, subphase rule on the updated
    clock, output copy once the clock is in the gathering interval.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    u2, v2, _, _ = _interact(u, v, p, mode)
    return u2, v2


class MajorityProtocol(Protocol):
    name = "adaptive-majority"

    def __init__(self, params: ClockParams, mode: str = CANCEL_BROADCAST) -> None:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if subphase_length(params) < 1:
            raise ValueError("working interval too short for six subintervals")
        self.params = params
        self.mode = mode

    def transition(self, initiator, responder):
        u2, v2, tag, signal = _interact(initiator, responder, self.params, self.mode)
        return u2, v2, (tag, signal)

    def is_valid(self, state: Any) -> bool:
        return (
            isinstance(state, MajorityAgentState)
            and 0 <= state.clock < self.params.q_size
            and all(x in (0, 1, 2) for x in (state.input, state.opinion, state.output))
        )


def inject_input_change(
    config: list[MajorityAgentState], model: InputChangeModel, rng: RngStream
) -> tuple[list[MajorityAgentState], bool]:
    """Possibly convert one input; called once before every interaction.

    Two uniforms are consumed per call whatever happens, so the stream stays
    aligned with the batched kernel. The victim is the k-th eligible agent in
    index order.
    """
    coin, pick = rng.take_uniform_pairs(1)
    if coin[0] >= model.rate:
        return config, False
    if model.direction == "a-to-b":
        eligible = [i for i, s in enumerate(config) if s.input == Opinion.A]
    else:
        eligible = [i for i, s in enumerate(config) if s.input != Opinion.U]
    if not eligible:
        return config, False
    i = eligible[int(pick[0] * len(eligible))]
    s = config[i]
    new = list(config)
    new[i] = s._replace(input=Opinion.B if s.input == Opinion.A else Opinion.A)
    return new, True


class InputChangeInjector:
    """Adapter for :func:`popclock.engine.run`; mutates the live configuration."""

    def __init__(self, model: InputChangeModel, rng: RngStream) -> None:
        self.model = model
        self.rng = rng

    def __call__(self, config: list[MajorityAgentState]) -> bool:
        new, changed = inject_input_change(config, self.model, self.rng)
        if changed:
            config[:] = new
        return changed


def tally(config) -> dict[str, tuple[int, int, int]]:
    out = {}
    for field_name in ("input", "opinion", "output"):
        counts = [0, 0, 0]
        for s in config:
            counts[int(getattr(s, field_name))] += 1
        out[field_name] = tuple(counts)
    return out

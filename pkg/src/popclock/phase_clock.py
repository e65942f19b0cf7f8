"""Leaderless phase clock on a ring of ``q_size`` states.

The ring is cut into hours of ``tau`` minutes and grouped into three
intervals: one launch hour, ``hours_work`` working hours and
``hours_gather`` gathering hours. Only the initiator of an interaction moves.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import asdict, dataclass
from enum import IntEnum
from typing import Any

from .engine import Protocol

__all__ = [
    "Interval",
    "ClockParams",
    "make_params",
    "interval_of",
    "clock_transition",
    "ring_distance",
    "ClockProtocol",
    "STEP_FORWARD",
    "HOPPING",
    "RESET",
]

STEP_FORWARD = "step-forward"
HOPPING = "hopping"
RESET = "reset"


class Interval(IntEnum):
    LAUNCH = 0
    WORK = 1
    GATHER = 2


@dataclass(frozen=True, slots=True)
class ClockParams:
    n: int
    c: int
    w: int
    kappa: float
    tau: int
    s: int
    hours_launch: int
    hours_work: int
    hours_gather: int
    q_size: int
    launch_end: int
    work_end: int
    delta: int

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ClockParams:
        p = make_params(int(data["n"]), int(data["c"]), int(data["w"]), kappa_override=float(data["kappa"]))
        for key, value in data.items():
            if key in p.to_dict() and p.to_dict()[key] != value:
                raise ValueError(f"inconsistent ClockParams field {key!r}: {value!r} != {p.to_dict()[key]!r}")
        return p


def make_params(n: int, c: int = 6, w: int = 26, kappa_override: float | None = None) -> ClockParams:
    """Derive the clock geometry.

    ``tau = ceil(kappa * ln n)`` with ``kappa = 36 * (c + 4)`` unless overridden.
    ``s = ceil(sqrt(10 + w))`` keeps the hour counts integral.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if w < 1:
        raise ValueError(f"w must be >= 1, got {w}")
    if c < 0:
        raise ValueError(f"c must be >= 0, got {c}")
    kappa = float(36 * (c + 4)) if kappa_override is None else float(kappa_override)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    tau = max(1, math.ceil(kappa * math.log(n)))
    s = math.isqrt(10 + w)
    if s * s < 10 + w:
        s += 1
    hours_launch = 1
    hours_work = 14 + w + 4 * s
    hours_gather = 6 + 2 * s
    q_size = (hours_launch + hours_work + hours_gather) * tau
    return ClockParams(
        n=n,
        c=c,
        w=w,
        kappa=kappa,
        tau=tau,
        s=s,
        hours_launch=hours_launch,
        hours_work=hours_work,
        hours_gather=hours_gather,
        q_size=q_size,
        launch_end=tau,
        work_end=tau * (1 + hours_work),
        delta=(7 + 2 * s) * tau,
    )


def interval_of(q: int, p: ClockParams) -> Interval:
    if q < p.launch_end:
        return Interval.LAUNCH
    if q < p.work_end:
        return Interval.WORK
    return Interval.GATHER


def clock_transition(q1: int, q2: int, p: ClockParams) -> tuple[int, str, bool]:
    """New initiator clock, applied rule and signal flag. The responder never moves."""
    if q1 < p.work_end:
        return q1 + 1, STEP_FORWARD, False
    if q2 >= p.work_end:
        q = q1 + 1
        if q == p.q_size:
            return 0, STEP_FORWARD, True
        return q, STEP_FORWARD, False
    if q2 < p.launch_end:
        return q2, HOPPING, True
    return p.work_end, RESET, False


def ring_distance(q1: int, q2: int, p: ClockParams) -> int:
    d = abs(q1 - q2)
    return min(d, p.q_size - d)


class ClockProtocol(Protocol):
    name = "phase-clock"

    def __init__(self, params: ClockParams) -> None:
        self.params = params

    def transition(self, initiator: int, responder: int):
        q, tag, signal = clock_transition(initiator, responder, self.params)
        return q, responder, (tag, signal)

    def is_valid(self, state: Any) -> bool:
        return isinstance(state, numbers.Integral) and 0 <= state < self.params.q_size

"""Configuration predicates and the signal-log verifier.

Everything here is a pure function of a snapshot; nothing feeds back into a run.
"""

from __future__ import annotations

import bisect
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .phase_clock import ClockParams

__all__ = [
    "ConfigClass",
    "SignalLogEntry",
    "PhaseReport",
    "span",
    "classify",
    "almost_gather_threshold",
    "verify_phase_clock",
]

MAX_RECORDED_VIOLATIONS = 200


@dataclass(frozen=True, slots=True)
class ConfigClass:
    synchronous: bool
    homogeneous_launch: bool
    homogeneous_work: bool
    homogeneous_gather: bool
    almost_homogeneous_gather: bool
    span: int


@dataclass(frozen=True, slots=True)
class SignalLogEntry:
    step: int
    agent: int


@dataclass
class PhaseReport:
    bursts: list[tuple[int, int]] = field(default_factory=list)
    overlaps: list[tuple[int, int]] = field(default_factory=list)
    violations: list[dict[str, Any]] = field(default_factory=list)
    violation_counts: dict[str, int] = field(default_factory=lambda: {"first_window": 0, "burst_window": 0, "next_signal": 0})
    first_window_checked: bool = False
    max_first_signal_latency: int | None = None
    max_burst_length: int = 0
    min_overlap_length: int | None = None

    @property
    def ok(self) -> bool:
        return sum(self.violation_counts.values()) == 0

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["ok"] = self.ok
        return d

    def _add(self, bullet: str, agent: int, step: int | None, detail: str) -> None:
        self.violation_counts[bullet] += 1
        if len(self.violations) < MAX_RECORDED_VIOLATIONS:
            self.violations.append({"bullet": bullet, "agent": agent, "step": step, "detail": detail})


def _clock_values(config: Iterable[Any]) -> np.ndarray:
    vals = [getattr(x, "clock", x) for x in config]
    return np.asarray(vals, dtype=np.int64)


def span(config: Iterable[Any], p: ClockParams) -> int:
    """Largest pairwise ring distance between clock values.

    All points fit on an arc of length ``q_size - G`` where ``G`` is the widest
    empty gap; while that arc is shorter than half the ring it is the answer.
    Otherwise the distances are enumerated.
    """
    x = np.unique(_clock_values(config))
    if x.size == 0:
        raise ValueError("span of an empty configuration")
    if x.size == 1:
        return 0
    q = p.q_size
    gap = max(int(np.diff(x).max()), int(x[0] + q - x[-1]))
    arc = q - gap
    if 2 * arc < q:
        return arc
    d = np.abs(x[:, None] - x[None, :])
    return int(np.minimum(d, q - d).max())


def almost_gather_threshold(n: int) -> int:
    return math.ceil(0.9 * n - 1e-9)


def classify(config: Sequence[Any], p: ClockParams) -> ConfigClass:
    clocks = _clock_values(config)
    if clocks.size == 0:
        raise ValueError("classify of an empty configuration")
    n = clocks.size
    launch = int(np.count_nonzero(clocks < p.launch_end))
    gather = int(np.count_nonzero(clocks >= p.work_end))
    work = n - launch - gather
    s = span(clocks, p)
    return ConfigClass(
        synchronous=s < p.delta,
        homogeneous_launch=launch == n,
        homogeneous_work=work == n,
        homogeneous_gather=gather == n,
        almost_homogeneous_gather=launch == 0 and gather >= almost_gather_threshold(n),
        span=s,
    )


def _entries(log: Iterable[Any]) -> list[tuple[int, int]]:
    out = []
    for e in log:
        if isinstance(e, SignalLogEntry):
            out.append((e.step, e.agent))
        else:
            t, a = e
            out.append((int(t), int(a)))
    return out


def verify_phase_clock(log: Iterable[Any], p: ClockParams, interval: tuple[int, int], n: int) -> PhaseReport:
    """Check a signal log against the (tau, w)-phase-clock conditions on ``interval``.

    Three conditions are checked, each reported under its own label:

    ``first_window``
        every agent signals within the first ``2 (w+1) tau n`` steps;
    ``burst_window``
        a signal at ``t`` is matched by a signal of every agent within ``tau n``;
    ``next_signal``
        consecutive signals of one agent are ``(w+1) tau n`` to ``2 (w+1) tau n`` apart.

    A requirement whose window reaches past the interval cannot be decided
    from the log and is skipped, never counted as a violation.
    """
    entries = _entries(log)
    steps = [t for t, _ in entries]
    if any(b < a for a, b in zip(steps, steps[1:])):
        raise ValueError("signal log must be sorted by step")
    t1, t2 = interval
    if t2 < t1:
        raise ValueError("interval end precedes its start")
    burst = p.tau * n
    lo = (p.w + 1) * p.tau * n
    hi = 2 * lo
    report = PhaseReport()

    per_agent: list[list[int]] = [[] for _ in range(n)]
    for t, a in entries:
        if not 0 <= a < n:
            raise ValueError(f"agent {a} outside population of size {n}")
        per_agent[a].append(t)
    inside = [(t, a) for t, a in entries if t1 <= t <= t2]

    if t2 - t1 >= hi:
        report.first_window_checked = True
        latency = 0
        for a in range(n):
            i = bisect.bisect_left(per_agent[a], t1)
            first = per_agent[a][i] if i < len(per_agent[a]) else None
            if first is None or first > t1 + hi:
                report._add("first_window", a, first, f"no signal in [{t1}, {t1 + hi}]")
            if first is not None:
                latency = max(latency, first - t1)
        report.max_first_signal_latency = latency

    for t, u in inside:
        lo_w, hi_w = t - burst, t + burst
        decidable = lo_w >= t1 and hi_w <= t2
        if not decidable:
            continue
        for v in range(n):
            times = per_agent[v]
            i = bisect.bisect_left(times, lo_w)
            if i >= len(times) or times[i] > hi_w:
                report._add("burst_window", v, t, f"agent {u} signalled at {t}; agent {v} has none within {burst}")

    for a in range(n):
        mine = [t for t in per_agent[a] if t1 <= t <= t2]
        for x, y in zip(mine, mine[1:]):
            if not lo <= y - x <= hi:
                report._add("next_signal", a, y, f"signals at {x} and {y} are {y - x} apart, need [{lo}, {hi}]")
        if mine and mine[-1] + hi <= t2:
            report._add("next_signal", a, mine[-1], f"no signal within {hi} after {mine[-1]}")

    i = 0
    while i < len(inside):
        start = inside[i][0]
        j = i
        while j + 1 < len(inside) and inside[j + 1][0] <= start + burst:
            j += 1
        report.bursts.append((start, inside[j][0]))
        i = j + 1
    for (_, e), (s, _) in zip(report.bursts, report.bursts[1:]):
        report.overlaps.append((e + 1, s - 1))
    if report.bursts:
        report.max_burst_length = max(e - s + 1 for s, e in report.bursts)
    if report.overlaps:
        report.min_overlap_length = min(e - s + 1 for s, e in report.overlaps)
    return report

"""Reference processes used to cross-check the protocol code.

None of these import the clock or majority transitions; they are separate
implementations of the urn, the one-way epidemic, the undecided-state
dynamics and the ring span.
"""

from __future__ import annotations

import itertools
from collections.abc import Sequence
from fractions import Fraction
from typing import Any

import numpy as np

from .engine import RngStream

__all__ = [
    "InvalidUrnError",
    "polya_sample",
    "polya_mean",
    "polya_mean_enumerated",
    "epidemic_completion_time",
    "epidemic_expected_time",
    "usd_consensus",
    "brute_force_span",
]


class InvalidUrnError(ValueError):
    pass


def polya_sample(a: int, b: int, m: int, rng: RngStream) -> int:
    """Red balls in the urn after ``m`` reinforcing draws from ``a`` red, ``b`` blue."""
    if a < 0 or b < 0 or a + b < 1:
        raise InvalidUrnError(f"urn needs at least one ball, got a={a}, b={b}")
    if m < 0:
        raise ValueError("m must be >= 0")
    red, total = a, a + b
    for x in rng.generator.random(m):
        if x * total < red:
            red += 1
        total += 1
    return red


def polya_mean(a: int, b: int, m: int) -> Fraction:
    return Fraction(a * (a + b + m), a + b)


def polya_mean_enumerated(a: int, b: int, m: int) -> Fraction:
    """Exact mean by summing over all ``2**m`` draw sequences."""
    if a + b < 1:
        raise InvalidUrnError("empty urn")
    mean = Fraction(0)
    for seq in itertools.product((True, False), repeat=m):
        red, blue, prob = a, b, Fraction(1)
        for is_red in seq:
            total = red + blue
            if is_red:
                prob *= Fraction(red, total)
                red += 1
            else:
                prob *= Fraction(blue, total)
                blue += 1
        mean += prob * red
    return mean


def epidemic_completion_time(n: int, rng: RngStream) -> int:
    """Interactions until all ``n`` agents are infected, starting from one.

    Transition ``(q1, q2) -> (max(q1, q2), q2)``: a susceptible initiator
    catches the infection from an infected responder.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return 0
    infected = np.zeros(n, dtype=bool)
    infected[0] = True
    count = 1
    steps = 0
    while True:
        us, vs = rng.take_pairs(n, 4096)
        for u, v in zip(us.tolist(), vs.tolist()):
            steps += 1
            if infected[v] and not infected[u]:
                infected[u] = True
                count += 1
                if count == n:
                    return steps


def epidemic_expected_time(n: int) -> float:
    """Exact mean completion time under the ordered-distinct-pair scheduler.

    With ``i`` infected the per-step success probability is
    ``i (n - i) / (n (n - 1))``; the mean is the sum of geometric means.
    """
    return float(sum(n * (n - 1) / (i * (n - i)) for i in range(1, n)))


_X, _Y, _BLANK = 0, 1, 2
_NAMES = {"x": _X, "y": _Y, "b": _BLANK, "blank": _BLANK, "A": _X, "B": _Y, "U": _BLANK}


def _usd_absorbed(counts: list[int]) -> bool:
    x, y, blank = counts
    return (x == 0 and y == 0) or (blank == 0 and (x == 0 or y == 0))


def usd_consensus(config: Sequence[Any], steps: int, rng: RngStream) -> dict[str, int]:
    """Run the one-way undecided-state dynamics on a count representation.

    ``config`` lists per-agent states ``"x"``, ``"y"`` or ``"b"`` (``"A"``,
    ``"B"``, ``"U"`` are accepted as aliases). Opposite opinions blank the
    initiator; a blank initiator adopts a decided responder. The run stops
    early once no rule can fire.
    """
    counts = [0, 0, 0]
    for s in config:
        counts[_NAMES[s] if isinstance(s, str) else int(s)] += 1
    n = sum(counts)
    if n < 2:
        raise ValueError("need at least two agents")
    done = 0
    while done < steps and not _usd_absorbed(counts):
        xs, ys = rng.take_uniform_pairs(min(4096, steps - done))
        for r1, r2 in zip(xs.tolist(), ys.tolist()):
            done += 1
            k = int(r1 * n)
            su = _X if k < counts[_X] else (_Y if k < counts[_X] + counts[_Y] else _BLANK)
            rest = list(counts)
            rest[su] -= 1
            k = int(r2 * (n - 1))
            sv = _X if k < rest[_X] else (_Y if k < rest[_X] + rest[_Y] else _BLANK)
            if su != _BLANK and sv != _BLANK and su != sv:
                counts[su] -= 1
                counts[_BLANK] += 1
            elif su == _BLANK and sv != _BLANK:
                counts[_BLANK] -= 1
                counts[sv] += 1
            else:
                continue
            if _usd_absorbed(counts):
                break
    return {"x": counts[_X], "y": counts[_Y], "blank": counts[_BLANK], "steps": done}


def brute_force_span(config: Sequence[Any], p) -> int:
    """Maximum pairwise ring distance by direct enumeration."""
    clocks = [int(getattr(x, "clock", x)) for x in config]
    if not clocks:
        raise ValueError("empty configuration")
    q = p.q_size
    best = 0
    for i in range(len(clocks)):
        for j in range(i + 1, len(clocks)):
            d = abs(clocks[i] - clocks[j])
            best = max(best, min(d, q - d))
    return best

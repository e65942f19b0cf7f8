"""Population-protocol scheduler.

Agents are anonymous in the model; the integer ids used here are simulator
bookkeeping only. One interaction picks an ordered pair ``(u, v)`` of distinct
agents uniformly among the ``n * (n - 1)`` possibilities, applies the protocol
transition and reports what happened.
"""

from __future__ import annotations

import abc
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

__all__ = [
    "PAIR_BLOCK",
    "GENERATOR_FAMILY",
    "InvalidPopulationError",
    "CorruptedConfigurationError",
    "RngStream",
    "InteractionEvent",
    "Protocol",
    "IdentityProtocol",
    "TraceRecord",
    "sample_pair",
    "step",
    "run",
]

# Pairs are drawn in fixed-size vectorised blocks. The block size is part of
# the replay contract: the scalar and batched paths see the same sequence.
PAIR_BLOCK = 1 << 16
GENERATOR_FAMILY = "numpy.PCG64/SeedSequence"


class InvalidPopulationError(ValueError):
    pass


class CorruptedConfigurationError(RuntimeError):
    def __init__(self, message: str, step: int | None = None) -> None:
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class RngStream:
    """Seeded random source for one trial.

    ``(master_seed, stream_index)`` is mixed through :class:`numpy.random.SeedSequence`,
    so trial ``i`` is independent of trial ``j`` and can be replayed alone.
    ``purpose`` separates auxiliary streams (e.g. input changes) of the same
    trial from its scheduler stream.
    """

    def __init__(self, master_seed: int, stream_index: int = 0, purpose: int = 0) -> None:
        if master_seed < 0 or master_seed >= 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        self.purpose = int(purpose)
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_index, self.purpose))
        self.generator = np.random.Generator(np.random.PCG64(seq))
        self._n: int | None = None
        self._u = np.empty(0, dtype=np.int64)
        self._v = np.empty(0, dtype=np.int64)
        self._pos = 0
        self._a = self._b = np.empty(0)
        self._upos = 0

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, stream_index={self.stream_index}, purpose={self.purpose})"

    def child(self, purpose: int) -> RngStream:
        return RngStream(self.master_seed, self.stream_index, purpose)

    def _refill(self, n: int) -> None:
        g = self.generator
        u = g.integers(0, n, size=PAIR_BLOCK, dtype=np.int64)
        v = g.integers(0, n - 1, size=PAIR_BLOCK, dtype=np.int64)
        v += v >= u
        self._u, self._v, self._pos = u, v, 0

    def take_pairs(self, n: int, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Return the next ``count`` ordered pairs for a population of size ``n``."""
        if n < 2:
            raise InvalidPopulationError(f"population needs at least 2 agents, got n={n}")
        if self._n is None:
            self._n = n
        elif self._n != n:
            raise InvalidPopulationError("population size changed on a live stream")
        us, vs = [], []
        while count > 0:
            if self._pos >= len(self._u):
                self._refill(n)
            take = min(count, len(self._u) - self._pos)
            us.append(self._u[self._pos:self._pos + take])
            vs.append(self._v[self._pos:self._pos + take])
            self._pos += take
            count -= take
        if not us:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        if len(us) == 1:
            return us[0], vs[0]
        return np.concatenate(us), np.concatenate(vs)

    def take_uniform_pairs(self, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``count`` pairs of U(0,1) draws, block-buffered like :meth:`take_pairs`."""
        xs, ys = [], []
        while count > 0:
            if self._upos >= len(self._a):
                self._a = self.generator.random(PAIR_BLOCK)
                self._b = self.generator.random(PAIR_BLOCK)
                self._upos = 0
            take = min(count, len(self._a) - self._upos)
            xs.append(self._a[self._upos:self._upos + take])
            ys.append(self._b[self._upos:self._upos + take])
            self._upos += take
            count -= take
        if not xs:
            return np.empty(0), np.empty(0)
        return np.concatenate(xs), np.concatenate(ys)


def sample_pair(rng: RngStream, n: int) -> tuple[int, int]:
    """Draw one ordered pair ``(initiator, responder)`` with ``initiator != responder``."""
    u, v = rng.take_pairs(n, 1)
    return int(u[0]), int(v[0])


@dataclass(frozen=True, slots=True)
class InteractionEvent:
    step: int
    initiator: int
    responder: int
    rule_tag: str
    signal: bool

    def __post_init__(self) -> None:
        if self.initiator == self.responder:
            raise ValueError("initiator and responder must differ")


class Protocol(abc.ABC):
    """A population protocol: a pure transition on (initiator, responder) states."""

    name: str = "protocol"

    @abc.abstractmethod
    def transition(self, initiator: Any, responder: Any) -> tuple[Any, Any, tuple[str, bool]]:
        """Return ``(new_initiator, new_responder, (rule_tag, signal))``."""

    def is_valid(self, state: Any) -> bool:
        return True


class IdentityProtocol(Protocol):
    name = "identity"

    def transition(self, initiator, responder):
        return initiator, responder, ("identity", False)


Hook = Callable[[InteractionEvent, Sequence[Any]], None]


@dataclass
class TraceRecord:
    events: list[InteractionEvent] = field(default_factory=list)
    final: list[Any] = field(default_factory=list)
    injections: int = 0

    @property
    def signals(self) -> list[tuple[int, int]]:
        return [(e.step, e.initiator) for e in self.events if e.signal]


def _apply(config: list, protocol: Protocol, u: int, v: int, step_index: int) -> InteractionEvent:
    a, b = config[u], config[v]
    if not (protocol.is_valid(a) and protocol.is_valid(b)):
        raise CorruptedConfigurationError(f"invalid state at agent {u if not protocol.is_valid(a) else v}", step_index)
    a2, b2, (tag, signal) = protocol.transition(a, b)
    config[u] = a2
    config[v] = b2
    return InteractionEvent(step_index, u, v, tag, bool(signal))


def step(config: Sequence[Any], protocol: Protocol, rng: RngStream, step_index: int = 1) -> tuple[list[Any], InteractionEvent]:
    """Apply one scheduled interaction; the input configuration is not modified."""
    new = list(config)
    u, v = sample_pair(rng, len(new))
    return new, _apply(new, protocol, u, v, step_index)


def run(
    config: Sequence[Any],
    protocol: Protocol,
    steps: int,
    hooks: Iterable[Hook] = (),
    rng: RngStream | None = None,
    injector: Callable[[list[Any]], bool] | None = None,
) -> TraceRecord:
    """Apply ``steps`` interactions, calling every hook after each one.

    ``injector`` (if given) is called on the live configuration before every
    interaction and returns whether it changed something.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if rng is None:
        raise ValueError("an RngStream is required")
    hooks = list(hooks)
    current = list(config)
    trace = TraceRecord()
    n = len(current)
    done = 0
    while done < steps:
        us, vs = rng.take_pairs(n, min(PAIR_BLOCK, steps - done))
        for u, v in zip(us.tolist(), vs.tolist()):
            done += 1
            if injector is not None and injector(current):
                trace.injections += 1
            event = _apply(current, protocol, u, v, done)
            trace.events.append(event)
            for hook in hooks:
                hook(event, current)
    trace.final = current
    return trace

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popclock import kernels as K
from popclock.engine import RngStream, run
from popclock.experiments import ClockDriver
from popclock.majority import (
    CANCEL_BROADCAST,
    USD,
    InputChangeInjector,
    InputChangeModel,
    MajorityAgentState,
    MajorityProtocol,
    Opinion,
    inject_input_change,
    majority_transition,
    subphase_length,
    subphase_of,
    tally,
)
from popclock.phase_clock import ClockProtocol, clock_transition, make_params

A, B, U = Opinion.A, Opinion.B, Opinion.U
P = make_params(16, 6, 1, kappa_override=1)  # tau = 3, small ring
L = subphase_length(P)


def agent(clock, opinion=U, inp=A, output=U):
    return MajorityAgentState(clock, Opinion(inp), Opinion(opinion), Opinion(output))


def test_subphase_boundaries():
    assert subphase_of(0, P) is None
    assert subphase_of(P.launch_end, P) == 1
    assert subphase_of(P.launch_end + L, P) is None
    assert subphase_of(P.launch_end + 2 * L, P) == 2
    assert subphase_of(P.launch_end + 3 * L - 1, P) == 2
    assert subphase_of(P.launch_end + 3 * L, P) is None
    assert subphase_of(P.launch_end + 4 * L, P) == 3
    assert subphase_of(P.work_end, P) is None


def test_adoption():
    u, v = majority_transition(agent(P.launch_end - 1, U), agent(0, A), P)
    assert u.opinion == A and v.opinion == A


@pytest.mark.parametrize("mode", [CANCEL_BROADCAST, USD])
def test_cancellation(mode):
    q = P.launch_end + 2 * L
    u, v = majority_transition(agent(q, A), agent(5, B), P, mode)
    assert u.opinion == U
    assert v.opinion == (U if mode == CANCEL_BROADCAST else B)


def test_broadcast():
    q = P.launch_end + 4 * L
    u, _ = majority_transition(agent(q, U), agent(5, B), P)
    assert u.opinion == B
    u, _ = majority_transition(agent(q, A), agent(5, B), P)
    assert u.opinion == A


def test_usd_adoption_in_third_subphase():
    q = P.launch_end + 4 * L
    u, _ = majority_transition(agent(q, U), agent(5, A), P, USD)
    assert u.opinion == A
    u, _ = majority_transition(agent(q, A), agent(5, B), P, USD)
    assert u.opinion == U


def test_output_copied_on_entering_gather():
    u, _ = majority_transition(agent(P.work_end - 1, A, output=B), agent(0, B), P)
    assert u.clock == P.work_end and u.output == A
    u, _ = majority_transition(agent(P.work_end - 2, A, output=B), agent(0, B), P)
    assert u.output == B


def test_signal_copies_input():
    u, _ = majority_transition(agent(P.q_size - 1, U, inp=B), agent(P.work_end), P)
    assert u.clock == 0 and u.opinion == B
    u, _ = majority_transition(agent(P.work_end + 1, A, inp=B), agent(1), P)
    assert u.clock == 1 and u.opinion == B


def test_bad_mode_rejected():
    with pytest.raises(ValueError):
        majority_transition(agent(0), agent(0), P, "bogus")
    with pytest.raises(ValueError):
        MajorityProtocol(P, "bogus")


def test_tally_examples():
    cfg = [agent(0, A, inp=A)] * 6 + [agent(0, B, inp=A)] * 4
    t = tally(cfg)
    assert t["input"] == (10, 0, 0)
    assert t["opinion"] == (6, 4, 0)
    assert t["output"] == (0, 0, 10)


states = st.builds(
    agent,
    st.integers(0, P.q_size - 1),
    st.sampled_from(list(Opinion)),
    st.sampled_from(list(Opinion)),
    st.sampled_from(list(Opinion)),
)


@settings(max_examples=500)
@given(states, states, st.sampled_from([CANCEL_BROADCAST, USD]))
def test_invariants(u, v, mode):
    proto = MajorityProtocol(P, mode)
    u2, v2, (tag, signal) = proto.transition(u, v)
    # closure
    assert proto.is_valid(u2) and proto.is_valid(v2)
    # clock part agrees with the bare clock
    assert (u2.clock, tag, signal) == clock_transition(u.clock, v.clock, P)
    # inputs never change inside an interaction
    assert u2.input == u.input and v2.input == v.input
    # responder untouched except by subphase-2 cancellation
    sp = subphase_of(u2.clock, P)
    if v2 != v:
        assert mode == CANCEL_BROADCAST and sp == 2
        assert v2 == v._replace(opinion=U)
    # output moves only when the updated clock is in the gathering interval
    if u2.output != u.output:
        assert u2.clock >= P.work_end
    if u2.clock >= P.work_end:
        assert u2.output == u2.opinion
    # cancellation keeps #A - #B
    if sp == 2 and mode == CANCEL_BROADCAST and not signal:
        before = tally([u, v])["opinion"]
        after = tally([u2, v2])["opinion"]
        assert before[0] - before[1] == after[0] - after[1]


def test_leak_rate_zero():
    cfg = [agent(0, inp=A)] * 5
    for seed in range(20):
        new, changed = inject_input_change(cfg, InputChangeModel(0.0), RngStream(seed))
        assert new == cfg and not changed


def test_leak_forced():
    cfg = [agent(0, inp=B), agent(0, inp=A), agent(0, inp=U)]
    new, changed = inject_input_change(cfg, InputChangeModel(1.0), RngStream(0))
    assert changed and [s.input for s in new] == [B, B, U]
    new, changed = inject_input_change(new, InputChangeModel(1.0), RngStream(0))
    assert not changed


def test_leak_symmetric():
    cfg = [agent(0, inp=B), agent(0, inp=U)]
    new, changed = inject_input_change(cfg, InputChangeModel(1.0, "symmetric"), RngStream(3))
    assert changed and new[0].input == A


def test_leak_model_validation():
    for bad in (dict(rate=-0.1), dict(rate=1.5), dict(rate=0.1, direction="up")):
        with pytest.raises(ValueError):
            InputChangeModel(**bad)


def test_leak_count_matches_binomial():
    n = 100
    steps = round(n * math.log(n))
    model = InputChangeModel(1 / n)
    counts = []
    for trial in range(1000):
        rng = RngStream(77, trial)
        cfg = [agent(0, inp=A)] * n
        changes = 0
        for _ in range(steps):
            cfg, changed = inject_input_change(cfg, model, rng)
            changes += changed
        counts.append(changes)
    mean = steps / n
    sd = math.sqrt(steps * (1 / n) * (1 - 1 / n) / 1000)
    assert abs(np.mean(counts) - mean) < 5 * sd


# ------------------------------------------------ compiled kernels vs engine


def _engine_final(clocks, inputs, params, mode, rate, seed, steps):
    cfg = [MajorityAgentState(int(q), Opinion(i), Opinion(i), U) for q, i in zip(clocks, inputs)]
    rng = RngStream(seed)
    injector = InputChangeInjector(InputChangeModel(rate), rng.child(1)) if rate > 0 else None
    trace = run(cfg, MajorityProtocol(params, mode), steps, rng=rng, injector=injector)
    return trace


@pytest.mark.parametrize("mode,rate", [(CANCEL_BROADCAST, 0.0), (USD, 0.0), (CANCEL_BROADCAST, 0.05), (USD, 0.02)])
def test_majority_kernel_matches_engine(mode, rate):
    p = make_params(12, 6, 1, kappa_override=1)
    gen = np.random.default_rng(5)
    clocks = gen.integers(0, p.q_size, size=12)
    inputs = np.array([0] * 6 + [1] * 4 + [2] * 2)
    steps = 30_000
    trace = _engine_final(clocks, inputs, p, mode, rate, 19, steps)
    drv = ClockDriver(p, clocks, RngStream(19), inputs=inputs, mode=mode, leak=InputChangeModel(rate))
    assert drv.advance(0, steps) == 0
    assert drv.clocks.tolist() == [s.clock for s in trace.final]
    assert drv.inputs.tolist() == [int(s.input) for s in trace.final]
    assert drv.opinions.tolist() == [int(s.opinion) for s in trace.final]
    assert drv.outputs.tolist() == [int(s.output) for s in trace.final]
    assert drv.signal_log() == trace.signals
    assert int(drv.trk[K.T_INJECTIONS]) == trace.injections


def test_clock_kernel_matches_engine():
    p = make_params(20, 6, 2, kappa_override=1)
    clocks = np.random.default_rng(8).integers(0, p.q_size, size=20)
    steps = 50_000
    trace = run(clocks.tolist(), ClockProtocol(p), steps, rng=RngStream(4))
    drv = ClockDriver(p, clocks, RngStream(4))
    drv.advance(0, steps)
    assert drv.clocks.tolist() == trace.final
    assert drv.signal_log() == trace.signals


def test_driver_does_not_alias_caller_arrays():
    p = make_params(8, 6, 1, kappa_override=1)
    clocks = np.zeros(8, dtype=np.int64)
    inputs = np.zeros(8, dtype=np.int64)
    ClockDriver(p, clocks, RngStream(0), inputs=inputs, leak=InputChangeModel(1.0)).advance(0, 500)
    assert not clocks.any() and not inputs.any()

"""Compiled inner loops for long runs.

The kernels consume pre-drawn pair blocks from :class:`popclock.engine.RngStream`
and reproduce the transitions of :mod:`popclock.phase_clock` and
:mod:`popclock.majority` exactly; the test-suite replays both paths on the
same stream and compares them state for state.

Book-keeping lives in a small ``int64`` tracker array so a run can stop at an
event, hand control back to Python, and resume mid-block.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# stop-mask bits and stop reasons
STOP_PHASE_END = 1
STOP_LAUNCH_HIT = 2
STOP_FIRST_SIGNAL = 4
STOP_SUBPHASE2 = 8

# tracker slots
T_STEP = 0
T_SIGNALLED = 1
T_WORK_RUN = 2
T_BEST_WORK_RUN = 3
T_SYNC = 4
T_SAMPLES = 5
T_MAX_SPAN = 6
T_HIT_ALMOST = 7
T_HIT_GATHER = 8
T_HIT_LAUNCH = 9
T_LAUNCH = 10
T_WORK = 11
T_GATHER = 12
T_NSIG = 13
T_NSAMP = 14
T_PHASE_START = 15
T_PHASE_END = 16
T_ENDED_HL = 17
T_SP2_STEP = 18
T_SP2_A = 19
T_SP2_B = 20
T_SP2_U = 21
T_OP = 22  # 22..24: opinion counts A, B, U
T_IN = 25  # 25..27: input counts A, B, U
T_INJECTIONS = 28
N_SLOTS = 32

SAMPLE_COLS = 8  # step, span, launch, work, gather, opinion A, B, U

MODE_CODES = {"cancel-broadcast": 0, "usd": 1}
DIRECTION_CODES = {"a-to-b": 0, "symmetric": 1}


def new_tracker() -> np.ndarray:
    trk = np.zeros(N_SLOTS, dtype=np.int64)
    for slot in (T_HIT_ALMOST, T_HIT_GATHER, T_HIT_LAUNCH, T_PHASE_START, T_PHASE_END, T_SP2_STEP):
        trk[slot] = -1
    return trk


def init_counts(trk: np.ndarray, clocks: np.ndarray, launch_end: int, work_end: int) -> None:
    launch = int(np.count_nonzero(clocks < launch_end))
    gather = int(np.count_nonzero(clocks >= work_end))
    trk[T_LAUNCH] = launch
    trk[T_WORK] = clocks.size - launch - gather
    trk[T_GATHER] = gather


def init_opinion_counts(trk: np.ndarray, inputs: np.ndarray, opinions: np.ndarray) -> None:
    for k in range(3):
        trk[T_OP + k] = int(np.count_nonzero(opinions == k))
        trk[T_IN + k] = int(np.count_nonzero(inputs == k))


@njit(cache=True)
def ring_span(clocks, q_size):
    x = np.sort(clocks)
    n = x.shape[0]
    if n < 2:
        return 0
    gap = x[0] + q_size - x[n - 1]
    for i in range(1, n):
        g = x[i] - x[i - 1]
        if g > gap:
            gap = g
    arc = q_size - gap
    if 2 * arc < q_size:
        return arc
    best = 0
    for i in range(n):
        for j in range(i + 1, n):
            d = x[j] - x[i]
            if q_size - d < d:
                d = q_size - d
            if d > best:
                best = d
    return best


@njit(cache=True)
def _interval(q, launch_end, work_end):
    if q < launch_end:
        return 0
    if q < work_end:
        return 1
    return 2


@njit(cache=True)
def _observe(trk, clocks, signal, agent, delta, q_size, almost_thr, stride,
             sig_step, sig_agent, samples, stop_mask):
    n = clocks.shape[0]
    step = trk[T_STEP]
    reason = 0
    if signal:
        k = trk[T_NSIG]
        sig_step[k] = step
        sig_agent[k] = agent
        trk[T_NSIG] = k + 1
        if trk[T_SIGNALLED] == 0:
            trk[T_SIGNALLED] = 1
            trk[T_PHASE_START] = step
            if stop_mask & STOP_FIRST_SIGNAL:
                reason = STOP_FIRST_SIGNAL
    launch = trk[T_LAUNCH]
    work = trk[T_WORK]
    gather = trk[T_GATHER]
    if work == n:
        trk[T_WORK_RUN] += 1
        if trk[T_WORK_RUN] > trk[T_BEST_WORK_RUN]:
            trk[T_BEST_WORK_RUN] = trk[T_WORK_RUN]
    else:
        trk[T_WORK_RUN] = 0
    if gather == n and trk[T_HIT_GATHER] < 0:
        trk[T_HIT_GATHER] = step
    if launch == 0 and gather >= almost_thr and trk[T_HIT_ALMOST] < 0:
        trk[T_HIT_ALMOST] = step
    if launch == n and trk[T_HIT_LAUNCH] < 0:
        trk[T_HIT_LAUNCH] = step
        if stop_mask & STOP_LAUNCH_HIT:
            reason = STOP_LAUNCH_HIT
    if stride > 0 and step % stride == 0:
        s = ring_span(clocks, q_size)
        k = trk[T_NSAMP]
        samples[k, 0] = step
        samples[k, 1] = s
        samples[k, 2] = launch
        samples[k, 3] = work
        samples[k, 4] = gather
        samples[k, 5] = trk[T_OP]
        samples[k, 6] = trk[T_OP + 1]
        samples[k, 7] = trk[T_OP + 2]
        trk[T_NSAMP] = k + 1
        trk[T_SAMPLES] += 1
        if s < delta:
            trk[T_SYNC] += 1
        if s > trk[T_MAX_SPAN]:
            trk[T_MAX_SPAN] = s
    if trk[T_SIGNALLED] == 1 and gather == 0:
        trk[T_PHASE_END] = step
        trk[T_ENDED_HL] = 1 if work == 0 else 0
        trk[T_SIGNALLED] = 0
        if stop_mask & STOP_PHASE_END:
            reason = STOP_PHASE_END
    return reason


@njit(cache=True)
def clock_kernel(clocks, us, vs, start, launch_end, work_end, q_size, delta, almost_thr, stride,
                 stop_mask, trk, sig_step, sig_agent, samples):
    m = us.shape[0]
    i = start
    while i < m:
        u = us[i]
        v = vs[i]
        i += 1
        q1 = clocks[u]
        q2 = clocks[v]
        signal = False
        if q1 < work_end:
            q = q1 + 1
        elif q2 >= work_end:
            q = q1 + 1
            if q == q_size:
                q = 0
                signal = True
        elif q2 < launch_end:
            q = q2
            signal = True
        else:
            q = work_end
        clocks[u] = q
        a = _interval(q1, launch_end, work_end)
        b = _interval(q, launch_end, work_end)
        if a != b:
            trk[T_LAUNCH + a] -= 1
            trk[T_LAUNCH + b] += 1
        trk[T_STEP] += 1
        reason = _observe(trk, clocks, signal, u, delta, q_size, almost_thr, stride,
                          sig_step, sig_agent, samples, stop_mask)
        if reason != 0:
            return i, reason
    return i, 0


@njit(cache=True)
def _subphase(q, launch_end, work_end, sub_len):
    if q < launch_end or q >= work_end:
        return 0
    idx = (q - launch_end) // sub_len
    if idx == 0:
        return 1
    if idx == 2:
        return 2
    if idx == 4:
        return 3
    return 0


@njit(cache=True)
def _set_opinion(opinions, trk, agent, value):
    old = opinions[agent]
    if old != value:
        trk[T_OP + old] -= 1
        trk[T_OP + value] += 1
        opinions[agent] = value


@njit(cache=True)
def _leak(inputs, trk, pick, direction):
    n = inputs.shape[0]
    if direction == 0:
        eligible = trk[T_IN]
    else:
        eligible = trk[T_IN] + trk[T_IN + 1]
    if eligible == 0:
        return
    k = int(pick * eligible)
    seen = 0
    for j in range(n):
        x = inputs[j]
        if x == 0 or (direction == 1 and x == 1):
            if seen == k:
                new = 1 if x == 0 else 0
                inputs[j] = new
                trk[T_IN + x] -= 1
                trk[T_IN + new] += 1
                trk[T_INJECTIONS] += 1
                return
            seen += 1


@njit(cache=True)
def majority_kernel(clocks, inputs, opinions, outputs, us, vs, coins, picks, rate, direction,
                    start, launch_end, work_end, q_size, delta, almost_thr, stride, sub_len, mode,
                    stop_mask, trk, sig_step, sig_agent, samples):
    m = us.shape[0]
    i = start
    while i < m:
        if rate > 0.0 and coins[i] < rate:
            _leak(inputs, trk, picks[i], direction)
        u = us[i]
        v = vs[i]
        i += 1
        q1 = clocks[u]
        q2 = clocks[v]
        signal = False
        if q1 < work_end:
            q = q1 + 1
        elif q2 >= work_end:
            q = q1 + 1
            if q == q_size:
                q = 0
                signal = True
        elif q2 < launch_end:
            q = q2
            signal = True
        else:
            q = work_end
        clocks[u] = q
        a = _interval(q1, launch_end, work_end)
        b = _interval(q, launch_end, work_end)
        if a != b:
            trk[T_LAUNCH + a] -= 1
            trk[T_LAUNCH + b] += 1
        trk[T_STEP] += 1

        if signal:
            _set_opinion(opinions, trk, u, inputs[u])
        sp = _subphase(q, launch_end, work_end, sub_len)
        sp2_hit = False
        if sp == 2 and trk[T_SP2_STEP] < 0:
            trk[T_SP2_STEP] = trk[T_STEP]
            trk[T_SP2_A] = trk[T_OP]
            trk[T_SP2_B] = trk[T_OP + 1]
            trk[T_SP2_U] = trk[T_OP + 2]
            sp2_hit = True
        mine = opinions[u]
        theirs = opinions[v]
        if sp == 1:
            if mine == 2:
                _set_opinion(opinions, trk, u, theirs)
        elif mode == 0:
            if sp == 2:
                if mine != theirs and mine != 2 and theirs != 2:
                    _set_opinion(opinions, trk, u, 2)
                    _set_opinion(opinions, trk, v, 2)
            elif sp == 3 and mine == 2:
                _set_opinion(opinions, trk, u, theirs)
        elif sp == 2 or sp == 3:
            if mine != 2 and theirs != 2 and mine != theirs:
                _set_opinion(opinions, trk, u, 2)
            elif mine == 2 and theirs != 2:
                _set_opinion(opinions, trk, u, theirs)
        if q >= work_end:
            outputs[u] = opinions[u]

        reason = _observe(trk, clocks, signal, u, delta, q_size, almost_thr, stride,
                          sig_step, sig_agent, samples, stop_mask)
        if sp2_hit and (stop_mask & STOP_SUBPHASE2):
            reason = STOP_SUBPHASE2
        if reason != 0:
            return i, reason
    return i, 0

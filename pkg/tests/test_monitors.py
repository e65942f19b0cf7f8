from __future__ import annotations

import numpy as np
import pytest

from popclock.monitors import SignalLogEntry, almost_gather_threshold, classify, span, verify_phase_clock
from popclock.oracles import brute_force_span
from popclock.phase_clock import make_params

P = make_params(10, 6, 26, kappa_override=1)  # tau = 3
FIX = make_params(4, 6, 3, kappa_override=1)


def _ring(q_size):
    return type("R", (), {"q_size": q_size})()


def test_span_examples():
    assert span([7] * 5, P) == 0
    assert span([0, 10], P) == 10
    assert span([0, P.q_size - 1], P) == 1


def test_span_matches_brute_force_on_random_small_instances():
    gen = np.random.default_rng(2024)
    for _ in range(1000):
        q = int(gen.integers(2, 65))
        n = int(gen.integers(1, 33))
        cfg = gen.integers(0, q, size=n).tolist()
        assert span(cfg, _ring(q)) == brute_force_span(cfg, _ring(q)), (q, cfg)


def test_span_wide_configurations_use_pairwise_path():
    # points spread round the whole ring: the widest gap leaves an arc over half
    q = 60
    cfg = [0, 20, 40]
    assert span(cfg, _ring(q)) == brute_force_span(cfg, _ring(q)) == 20


def test_span_rejects_empty():
    with pytest.raises(ValueError):
        span([], P)


def test_classify_examples():
    c = classify([0] * 10, P)
    assert c.homogeneous_launch and c.synchronous and c.span == 0

    almost = [P.work_end] * 9 + [P.launch_end]
    c = classify(almost, P)
    assert c.almost_homogeneous_gather and not c.homogeneous_gather

    c = classify([0, P.q_size // 2], P)
    assert P.q_size // 2 >= P.delta
    assert not c.synchronous and c.span == P.q_size // 2


def test_almost_gather_needs_no_launch_agent():
    cfg = [P.work_end] * 9 + [0]
    assert not classify(cfg, P).almost_homogeneous_gather
    assert almost_gather_threshold(10) == 9 and almost_gather_threshold(11) == 10


def _fixture_log(p, n):
    period = (p.w + 1) * p.tau * n
    return [(k * period + a, a) for k in range(3) for a in range(n)], period


def test_verifier_accepts_constructed_clock():
    n = FIX.n
    log, period = _fixture_log(FIX, n)
    rep = verify_phase_clock(log, FIX, (0, 2 * period + n), n)
    assert rep.ok, rep.violations
    assert rep.first_window_checked
    assert len(rep.bursts) == 3 and len(rep.overlaps) == 2
    assert rep.max_burst_length == n
    assert rep.min_overlap_length >= FIX.w * FIX.tau * n


def test_verifier_accepts_entry_objects():
    log, period = _fixture_log(FIX, FIX.n)
    rep = verify_phase_clock([SignalLogEntry(t, a) for t, a in log], FIX, (0, 2 * period + FIX.n), FIX.n)
    assert rep.ok


def test_verifier_rejects_missing_signal():
    n = FIX.n
    log, period = _fixture_log(FIX, n)
    log.remove((period + 2, 2))
    rep = verify_phase_clock(log, FIX, (0, 2 * period + n), n)
    assert not rep.ok
    assert rep.violation_counts["burst_window"] > 0
    assert {v["agent"] for v in rep.violations} == {2}


def test_verifier_rejects_early_second_signal():
    n = FIX.n
    log, period = _fixture_log(FIX, n)
    log = sorted(log + [(period // 2, 1)])
    rep = verify_phase_clock(log, FIX, (0, 2 * period + n), n)
    assert rep.violation_counts["next_signal"] > 0
    assert any(v["agent"] == 1 and v["bullet"] == "next_signal" for v in rep.violations)


def test_verifier_rejects_silent_agent_in_first_window():
    n = FIX.n
    log, period = _fixture_log(FIX, n)
    log = [(t, a) for t, a in log if a != 3]
    rep = verify_phase_clock(log, FIX, (0, 2 * period + n), n)
    assert rep.violation_counts["first_window"] == 1


def test_verifier_input_errors():
    with pytest.raises(ValueError):
        verify_phase_clock([(5, 0), (3, 1)], FIX, (0, 10), 4)
    with pytest.raises(ValueError):
        verify_phase_clock([(1, 9)], FIX, (0, 10), 4)
    with pytest.raises(ValueError):
        verify_phase_clock([], FIX, (10, 0), 4)


def test_verifier_skips_undecidable_windows():
    # a short interval: nothing can be decided, so nothing is reported
    rep = verify_phase_clock([(3, 0)], FIX, (0, 10), 4)
    assert rep.ok and not rep.first_window_checked

"""Seeded trial batches and their result records.

Each ``run_*`` function takes an :class:`ExperimentSpec`, runs ``trials``
independent trials (trial ``i`` uses ``RngStream(seed, i)``) and returns an
:class:`ExperimentResult` whose metadata is enough to replay any trial.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from . import __version__
from . import kernels as K
from .engine import GENERATOR_FAMILY, PAIR_BLOCK, RngStream
from .majority import MODES, InputChangeModel, Opinion, subphase_length
from .monitors import almost_gather_threshold, classify, verify_phase_clock
from .oracles import epidemic_completion_time, epidemic_expected_time, polya_mean, polya_sample
from .phase_clock import ClockParams, make_params

__all__ = [
    "KINDS",
    "ExperimentSpec",
    "ExperimentResult",
    "ClockDriver",
    "load_init_file",
    "run_maintenance",
    "run_recovery",
    "run_majority",
    "run_calibration",
    "run_experiment",
    "write_result",
    "read_jsonl",
]

KINDS = ("clock-run", "recovery", "majority", "epidemic", "polya")
INITS = ("homogeneous", "random")

# purposes of the auxiliary per-trial streams
_LEAK_STREAM = 1
_INIT_STREAM = 2


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    n: int = 128
    w: int = 26
    c: int = 6
    kappa: float | None = 8.0
    seed: int = 0
    trials: int = 1
    phases: int = 3
    steps: int | None = None
    mode: str = "cancel-broadcast"
    rate: float = 0.0
    direction: str = "a-to-b"
    inputs: tuple[int, int, int] | None = None
    init: str = "homogeneous"
    stride: int | None = None
    step_cap: int | None = None
    workers: int = 1
    coupling: bool = False
    keep_signals: bool = False

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.n < 1 or (self.kind not in ("epidemic", "polya") and self.n < 2):
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.trials < 0:
            raise ValueError("trials must be >= 0")
        if self.phases < 0:
            raise ValueError("phases must be >= 0")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        InputChangeModel(self.rate, self.direction)
        if not (self.init in INITS or self.init.startswith("file:")):
            raise ValueError(f"init must be homogeneous, random or file:PATH, got {self.init!r}")
        if self.inputs is not None:
            if len(self.inputs) != 3 or min(self.inputs) < 0:
                raise ValueError("inputs must be three non-negative counts A,B,U")
            if self.kind == "majority" and sum(self.inputs) != self.n:
                raise ValueError(f"inputs {self.inputs} do not sum to n={self.n}")
        if self.kind == "clock-run" and self.init != "homogeneous":
            raise ValueError("clock-run starts from a homogeneous launching configuration")
        if self.kind == "majority":
            if self.init == "random":
                raise ValueError("majority runs start from a homogeneous launching configuration or a file")
            if subphase_length(self.params()) < 1:
                raise ValueError("working interval too short for six subintervals (L < 1)")
        if self.stride is not None and self.stride < 0:
            raise ValueError("stride must be >= 0")

    def params(self) -> ClockParams:
        return make_params(self.n, self.c, self.w, kappa_override=self.kappa)

    def effective_stride(self) -> int:
        return self.n if self.stride is None else self.stride

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        if d["inputs"] is not None:
            d["inputs"] = list(d["inputs"])
        return d


@dataclass
class ExperimentResult:
    metadata: dict[str, Any]
    records: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)


def _metadata(spec: ExperimentSpec) -> dict[str, Any]:
    meta = {
        "type": "metadata",
        "spec": spec.to_dict(),
        "build": {
            "popclock": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "generator": GENERATOR_FAMILY,
            "pair_block": PAIR_BLOCK,
        },
    }
    if spec.kind in ("clock-run", "recovery", "majority") or spec.coupling:
        meta["clock_params"] = spec.params().to_dict()
    return meta


# ---------------------------------------------------------------- driver


class ClockDriver:
    """Runs the compiled kernels in blocks, stopping on requested events.

    With ``inputs`` given the majority kernel is used, otherwise the bare
    clock kernel.
    """

    def __init__(
        self,
        params: ClockParams,
        clocks: np.ndarray,
        rng: RngStream,
        stride: int = 0,
        inputs: np.ndarray | None = None,
        opinions: np.ndarray | None = None,
        outputs: np.ndarray | None = None,
        mode: str = "cancel-broadcast",
        leak: InputChangeModel | None = None,
        keep_samples: bool = False,
    ) -> None:
        self.p = params
        self.n = clocks.size
        self.clocks = np.array(clocks, dtype=np.int64)
        self.rng = rng
        self.stride = stride
        self.majority = inputs is not None
        self.trk = K.new_tracker()
        K.init_counts(self.trk, self.clocks, params.launch_end, params.work_end)
        if self.majority:
            self.inputs = np.array(inputs, dtype=np.int64)
            self.opinions = np.ascontiguousarray(opinions if opinions is not None else inputs, dtype=np.int64).copy()
            self.outputs = (
                np.full(self.n, int(Opinion.U), dtype=np.int64)
                if outputs is None
                else np.ascontiguousarray(outputs, dtype=np.int64).copy()
            )
            K.init_opinion_counts(self.trk, self.inputs, self.opinions)
            self.mode = K.MODE_CODES[mode]
            self.leak = leak if leak is not None else InputChangeModel(0.0)
            self.leak_rng = rng.child(_LEAK_STREAM)
            self.sub_len = subphase_length(params)
        self.almost = almost_gather_threshold(self.n)
        self.signals_step: list[np.ndarray] = []
        self.signals_agent: list[np.ndarray] = []
        self.keep_samples = keep_samples
        self.samples: list[np.ndarray] = []
        self._us = self._vs = np.empty(0, dtype=np.int64)
        self._coins = self._picks = np.empty(0)
        self._pos = 0
        self._sig_step = np.empty(PAIR_BLOCK, dtype=np.int64)
        self._sig_agent = np.empty(PAIR_BLOCK, dtype=np.int64)
        nsamp = (PAIR_BLOCK // stride + 2) if stride > 0 else 1
        self._samples = np.empty((nsamp, K.SAMPLE_COLS), dtype=np.int64)

    @property
    def step(self) -> int:
        return int(self.trk[K.T_STEP])

    def advance(self, stop_mask: int, max_step: int) -> int:
        """Run until a stop event fires (returned) or ``max_step`` is reached (returns 0)."""
        p = self.p
        while self.step < max_step:
            if self._pos >= self._us.size:
                count = min(PAIR_BLOCK, max_step - self.step)
                self._us, self._vs = self.rng.take_pairs(self.n, count)
                if self.majority and self.leak.rate > 0:
                    self._coins, self._picks = self.leak_rng.take_uniform_pairs(count)
                self._pos = 0
            end = min(self._us.size, self._pos + (max_step - self.step))
            us, vs = self._us[:end], self._vs[:end]
            if self.majority:
                pos, reason = K.majority_kernel(
                    self.clocks, self.inputs, self.opinions, self.outputs, us, vs,
                    self._coins, self._picks, float(self.leak.rate), K.DIRECTION_CODES[self.leak.direction],
                    self._pos, p.launch_end, p.work_end, p.q_size, p.delta, self.almost, self.stride,
                    self.sub_len, self.mode, stop_mask, self.trk, self._sig_step, self._sig_agent, self._samples,
                )
            else:
                pos, reason = K.clock_kernel(
                    self.clocks, us, vs, self._pos, p.launch_end, p.work_end, p.q_size, p.delta,
                    self.almost, self.stride, stop_mask, self.trk, self._sig_step, self._sig_agent, self._samples,
                )
            self._pos = pos
            self._harvest()
            if reason:
                return int(reason)
        return 0

    def _harvest(self) -> None:
        k = int(self.trk[K.T_NSIG])
        if k:
            self.signals_step.append(self._sig_step[:k].copy())
            self.signals_agent.append(self._sig_agent[:k].copy())
            self.trk[K.T_NSIG] = 0
        k = int(self.trk[K.T_NSAMP])
        if k:
            if self.keep_samples:
                self.samples.append(self._samples[:k].copy())
            self.trk[K.T_NSAMP] = 0

    def signal_log(self) -> list[tuple[int, int]]:
        if not self.signals_step:
            return []
        steps = np.concatenate(self.signals_step)
        agents = np.concatenate(self.signals_agent)
        return list(zip(steps.tolist(), agents.tolist()))

    def take_phase_stats(self) -> dict[str, int]:
        t = self.trk
        stats = {
            "longest_homogeneous_work": int(t[K.T_BEST_WORK_RUN]),
            "samples": int(t[K.T_SAMPLES]),
            "synchronous_samples": int(t[K.T_SYNC]),
            "max_span": int(t[K.T_MAX_SPAN]),
        }
        t[K.T_BEST_WORK_RUN] = 0
        t[K.T_SAMPLES] = 0
        t[K.T_SYNC] = 0
        t[K.T_MAX_SPAN] = 0
        return stats

    def counts(self, which: str) -> tuple[int, int, int]:
        arr = {"input": self.inputs, "opinion": self.opinions, "output": self.outputs}[which]
        return tuple(int(np.count_nonzero(arr == k)) for k in range(3))


def load_init_file(path: str, n: int, q_size: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Read ``clock[,input]`` lines; blank lines and ``#`` comments are skipped."""
    clocks, inputs = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            head, _, tail = line.partition(",")
            q = int(head)
            if not 0 <= q < q_size:
                raise ValueError(f"{path}:{lineno}: clock value {q} outside [0, {q_size})")
            clocks.append(q)
            if tail.strip():
                inputs.append(int(Opinion[tail.strip().upper()]))
    if len(clocks) != n:
        raise ValueError(f"{path}: {len(clocks)} agents, expected n={n}")
    if inputs and len(inputs) != n:
        raise ValueError(f"{path}: inputs given for some agents only")
    return np.asarray(clocks, dtype=np.int64), (np.asarray(inputs, dtype=np.int64) if inputs else None)


def _initial_clocks(spec: ExperimentSpec, p: ClockParams, trial: int) -> np.ndarray:
    if spec.init == "homogeneous":
        return np.zeros(spec.n, dtype=np.int64)
    if spec.init == "random":
        g = RngStream(spec.seed, trial, _INIT_STREAM).generator
        return g.integers(0, p.q_size, size=spec.n, dtype=np.int64)
    clocks, _ = load_init_file(spec.init[len("file:"):], spec.n, p.q_size)
    return clocks


def _class_dict(clocks: np.ndarray, p: ClockParams) -> dict[str, Any]:
    return asdict(classify(clocks, p))


def _map_trials(spec: ExperimentSpec, fn: Callable[[ExperimentSpec, int], dict[str, Any]]) -> list[dict[str, Any]]:
    idx = list(range(spec.trials))
    if spec.workers > 1 and spec.trials > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(fn, [spec] * len(idx), idx))
    return [fn(spec, i) for i in idx]


def _mean_se(xs: list[float]) -> tuple[float, float]:
    a = np.asarray(xs, dtype=float)
    if a.size == 0:
        return float("nan"), float("nan")
    se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else float("nan")
    return float(a.mean()), se


def _frac(flags: list[bool]) -> float:
    return float(np.mean(flags)) if flags else float("nan")


# ------------------------------------------------------------ maintenance


def _maintenance_trial(spec: ExperimentSpec, trial: int) -> dict[str, Any]:
    p = spec.params()
    n = spec.n
    clocks = _initial_clocks(spec, p, trial)
    initial = _class_dict(clocks, p)
    drv = ClockDriver(p, clocks, RngStream(spec.seed, trial), stride=spec.effective_stride())
    cap = spec.step_cap if spec.step_cap is not None else (spec.phases + 1) * 2 * p.q_size * n
    need_work = p.w * p.tau * n
    phases = []
    start = 0
    while len(phases) < spec.phases:
        if drv.advance(K.STOP_PHASE_END, cap) != K.STOP_PHASE_END:
            break
        stats = drv.take_phase_stats()
        end = int(drv.trk[K.T_PHASE_END])
        phases.append({
            "phase": len(phases) + 1,
            "start_step": start,
            "end_step": end,
            "ended_homogeneous_launch": bool(drv.trk[K.T_ENDED_HL]),
            "work_run_ok": stats["longest_homogeneous_work"] >= need_work,
            **stats,
        })
        start = end
    tail = drv.take_phase_stats()
    total_samples = sum(ph["samples"] for ph in phases) + tail["samples"]
    sync_samples = sum(ph["synchronous_samples"] for ph in phases) + tail["synchronous_samples"]
    log = drv.signal_log()
    report = verify_phase_clock(log, p, (0, drv.step), n)
    record = {
        "type": "trial",
        "trial": trial,
        "steps": drv.step,
        "completed_phases": len(phases),
        "initial_class": initial,
        "synchrony_fraction": sync_samples / total_samples if total_samples else float("nan"),
        "all_synchronous": total_samples > 0 and sync_samples == total_samples,
        "all_phases_homogeneous_launch": len(phases) == spec.phases and all(ph["ended_homogeneous_launch"] for ph in phases),
        "all_phases_work_run_ok": len(phases) == spec.phases and all(ph["work_run_ok"] for ph in phases),
        "phases": phases,
        "phase_report": {
            "ok": report.ok,
            "violation_counts": report.violation_counts,
            "first_window_checked": report.first_window_checked,
            "max_first_signal_latency": report.max_first_signal_latency,
            "bursts": len(report.bursts),
            "max_burst_length": report.max_burst_length,
            "min_overlap_length": report.min_overlap_length,
            "violations": report.violations[:10],
        },
        "signals": len(log),
    }
    if spec.keep_signals:
        record["signal_log"] = log
    return record


def run_maintenance(spec: ExperimentSpec) -> ExperimentResult:
    if spec.init != "homogeneous":
        raise ValueError("maintenance runs start from a homogeneous launching configuration")
    res = ExperimentResult(_metadata(spec))
    res.records = _map_trials(spec, _maintenance_trial)
    r = res.records
    res.summary = {
        "type": "summary",
        "trials": len(r),
        "fraction_all_synchronous_and_launch": _frac([x["all_synchronous"] and x["all_phases_homogeneous_launch"] for x in r]),
        "fraction_work_run_ok": _frac([x["all_phases_work_run_ok"] for x in r]),
        "fraction_verifier_ok": _frac([x["phase_report"]["ok"] for x in r]),
        "mean_synchrony_fraction": _mean_se([x["synchrony_fraction"] for x in r])[0],
    }
    return res


# --------------------------------------------------------------- recovery


def _recovery_trial(spec: ExperimentSpec, trial: int) -> dict[str, Any]:
    p = spec.params()
    n = spec.n
    clocks = _initial_clocks(spec, p, trial)
    initial = _class_dict(clocks, p)
    cap = spec.step_cap if spec.step_cap is not None else 20 * n * p.w * p.tau
    scale = n * p.w * p.tau
    record = {"type": "trial", "trial": trial, "initial_class": initial, "step_cap": cap}
    if initial["homogeneous_launch"]:
        record.update(converged=True, convergence_step=0, normalized=0.0,
                      hit_almost_homogeneous_gather=None, hit_homogeneous_gather=None)
        return record
    drv = ClockDriver(p, clocks, RngStream(spec.seed, trial), stride=0)
    drv.trk[K.T_HIT_GATHER] = 0 if initial["homogeneous_gather"] else -1
    drv.trk[K.T_HIT_ALMOST] = 0 if initial["almost_homogeneous_gather"] else -1
    reason = drv.advance(K.STOP_LAUNCH_HIT, cap)
    converged = reason == K.STOP_LAUNCH_HIT
    conv = int(drv.trk[K.T_HIT_LAUNCH]) if converged else None

    def hit(slot: int) -> int | None:
        v = int(drv.trk[slot])
        return v if v >= 0 else None

    record.update(
        converged=converged,
        convergence_step=conv,
        normalized=(conv / scale) if converged else None,
        hit_almost_homogeneous_gather=hit(K.T_HIT_ALMOST),
        hit_homogeneous_gather=hit(K.T_HIT_GATHER),
        steps=drv.step,
    )
    return record


def run_recovery(spec: ExperimentSpec) -> ExperimentResult:
    if spec.init == "homogeneous":
        spec = replace(spec, init="random")
    res = ExperimentResult(_metadata(spec))
    res.records = _map_trials(spec, _recovery_trial)
    conv = [x["normalized"] for x in res.records if x["converged"]]
    res.summary = {
        "type": "summary",
        "trials": len(res.records),
        "converged_fraction": _frac([x["converged"] for x in res.records]),
        "median_normalized_convergence": float(np.median(conv)) if conv else None,
        "max_normalized_convergence": float(np.max(conv)) if conv else None,
    }
    return res


# --------------------------------------------------------------- majority


def _majority_of(counts: tuple[int, int, int]) -> int | None:
    a, b, _ = counts
    if a > b:
        return int(Opinion.A)
    if b > a:
        return int(Opinion.B)
    return None


def _all_output(counts: tuple[int, int, int], value: int | None, n: int) -> bool:
    if value is None:
        return True
    return counts[value] == n


def _split_inputs(spec: ExperimentSpec) -> np.ndarray:
    if spec.init.startswith("file:"):
        _, inputs = load_init_file(spec.init[len("file:"):], spec.n, spec.params().q_size)
        if inputs is not None:
            return inputs
    a, b, u = spec.inputs if spec.inputs is not None else (spec.n, 0, 0)
    return np.repeat(np.array([0, 1, 2], dtype=np.int64), [a, b, u])


def _majority_trial(spec: ExperimentSpec, trial: int) -> dict[str, Any]:
    p = spec.params()
    n = spec.n
    inputs = _split_inputs(spec)
    clocks = _initial_clocks(spec, p, trial)
    drv = ClockDriver(
        p, clocks, RngStream(spec.seed, trial), stride=spec.effective_stride(), inputs=inputs,
        mode=spec.mode, leak=InputChangeModel(spec.rate, spec.direction),
    )
    cap = spec.step_cap if spec.step_cap is not None else (spec.phases + 1) * 2 * p.q_size * n
    phases = []
    start_step, start_inputs = 0, drv.counts("input")
    while len(phases) < spec.phases:
        reason = drv.advance(K.STOP_PHASE_END | K.STOP_FIRST_SIGNAL, cap)
        if reason == K.STOP_FIRST_SIGNAL:
            # phase boundary in the input sense: the burst copies inputs from here on
            next_start = (int(drv.trk[K.T_PHASE_START]), drv.counts("input"))
            reason = drv.advance(K.STOP_PHASE_END, cap)
        else:
            next_start = None
        if reason != K.STOP_PHASE_END:
            break
        if next_start is None:
            next_start = (int(drv.trk[K.T_PHASE_START]), drv.counts("input"))
        stats = drv.take_phase_stats()
        out = drv.counts("output")
        maj = _majority_of(start_inputs)
        current = drv.counts("input")
        cur_maj = _majority_of(current)
        phases.append({
            "phase": len(phases) + 1,
            "start_step": start_step,
            "end_step": int(drv.trk[K.T_PHASE_END]),
            "inputs_at_start": list(start_inputs),
            "majority_at_start": None if maj is None else Opinion(maj).name,
            "output_tally": list(out),
            "opinion_tally": list(drv.counts("opinion")),
            "inputs_at_end": list(current),
            "correct": _all_output(out, maj, n),
            "agrees_with_current_inputs": _all_output(out, cur_maj, n),
            "synchronized": stats["samples"] > 0 and stats["synchronous_samples"] == stats["samples"],
            "ended_homogeneous_launch": bool(drv.trk[K.T_ENDED_HL]),
            **stats,
        })
        if next_start is not None:
            start_step, start_inputs = next_start
    record = {
        "type": "trial",
        "trial": trial,
        "steps": drv.step,
        "completed_phases": len(phases),
        "injections": int(drv.trk[K.T_INJECTIONS]),
        "phases": phases,
        "all_correct": len(phases) == spec.phases and all(ph["correct"] for ph in phases),
        "all_correct_synchronized": len(phases) == spec.phases
        and all(ph["correct"] for ph in phases if ph["synchronized"]),
    }
    if spec.keep_signals:
        record["signal_log"] = drv.signal_log()
    return record


def run_majority(spec: ExperimentSpec) -> ExperimentResult:
    res = ExperimentResult(_metadata(spec))
    res.records = _map_trials(spec, _majority_trial)
    r = res.records
    res.summary = {
        "type": "summary",
        "trials": len(r),
        "correct_fraction": _frac([x["all_correct"] for x in r]),
        "correct_synchronized_fraction": _frac([x["all_correct_synchronized"] for x in r]),
        "agrees_with_current_inputs_fraction": _frac(
            [all(ph["agrees_with_current_inputs"] for ph in x["phases"]) and bool(x["phases"]) for x in r]
        ),
        "mean_injections": _mean_se([x["injections"] for x in r])[0],
    }
    return res


# ------------------------------------------------------------ calibration


def polya_coupling_sample(spec: ExperimentSpec, trial: int) -> tuple[int, int]:
    """A-opinion count when the first agent reaches the cancellation subphase."""
    p = spec.params()
    a, b, u = spec.inputs
    inputs = np.repeat(np.array([0, 1, 2], dtype=np.int64), [a, b, u])
    drv = ClockDriver(p, np.zeros(spec.n, dtype=np.int64), RngStream(spec.seed, trial), stride=0,
                      inputs=inputs, mode=spec.mode)
    cap = spec.step_cap if spec.step_cap is not None else 2 * p.q_size * spec.n
    if drv.advance(K.STOP_SUBPHASE2, cap) != K.STOP_SUBPHASE2:
        raise RuntimeError("no agent reached the cancellation subphase before the step cap")
    return int(drv.trk[K.T_SP2_A]), int(drv.trk[K.T_SP2_U])


def _epidemic_trial(spec: ExperimentSpec, trial: int) -> dict[str, Any]:
    return {"type": "trial", "trial": trial, "completion_time": epidemic_completion_time(spec.n, RngStream(spec.seed, trial))}


def _polya_trial(spec: ExperimentSpec, trial: int) -> dict[str, Any]:
    a, b, m = spec.inputs
    rec = {"type": "trial", "trial": trial, "urn_red": polya_sample(a, b, m, RngStream(spec.seed, trial, 3))}
    if spec.coupling:
        rec["protocol_a"], rec["protocol_undecided"] = polya_coupling_sample(spec, trial)
    return rec


def run_calibration(spec: ExperimentSpec) -> ExperimentResult:
    res = ExperimentResult(_metadata(spec))
    if spec.kind == "epidemic":
        res.records = _map_trials(spec, _epidemic_trial)
        times = [x["completion_time"] for x in res.records]
        mean, se = _mean_se(times)
        lo = spec.n * math.log(spec.n)
        hi = 4 * spec.n * math.log(spec.n)
        res.summary = {
            "type": "summary", "n": spec.n, "trials": len(times), "mean": mean, "se": se,
            "exact_mean": epidemic_expected_time(spec.n), "lower": lo, "upper": hi,
            "pass": bool(lo <= mean <= hi),
        }
    elif spec.kind == "polya":
        if spec.inputs is None:
            raise ValueError("polya needs --inputs a,b,m")
        a, b, m = spec.inputs
        if spec.coupling:
            spec = replace(spec, n=a + b + m)
            res.metadata = _metadata(spec)
        res.records = _map_trials(spec, _polya_trial)
        urn = [x["urn_red"] for x in res.records]
        mean, se = _mean_se(urn)
        expected = float(polya_mean(a, b, m))
        z = (mean - expected) / se if se and se > 0 else float("nan")
        res.summary = {
            "type": "summary", "a": a, "b": b, "m": m, "trials": len(urn),
            "mean": mean, "se": se, "expected_mean": expected, "z": z, "pass": bool(abs(z) <= 3),
        }
        if spec.coupling:
            prot = [x["protocol_a"] for x in res.records]
            pm, pse = _mean_se(prot)
            pooled = math.sqrt(se**2 + pse**2)
            res.summary.update(
                protocol_mean=pm, protocol_se=pse, pooled_se=pooled,
                difference=pm - mean, coupling_pass=bool(abs(pm - mean) <= 3 * pooled),
                undecided_left=sum(x["protocol_undecided"] for x in res.records),
            )
    else:
        raise ValueError(f"{spec.kind!r} is not a calibration kind")
    return res


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    if spec.kind == "clock-run":
        return run_maintenance(spec)
    if spec.kind == "recovery":
        return run_recovery(spec)
    if spec.kind == "majority":
        return run_majority(spec)
    return run_calibration(spec)


# ----------------------------------------------------------------- output


def _scalar_columns(record: dict[str, Any]) -> dict[str, Any]:
    return {k: v for k, v in record.items() if v is None or isinstance(v, (bool, int, float, str))}


def write_result(result: ExperimentResult, out: str | None = None, fmt: str = "jsonl") -> str:
    """Serialise a result; returns the text and writes it to ``out`` when given.

    ``jsonl``: metadata line, one line per trial, summary line.
    ``csv``: scalar trial columns only; metadata and summary go to ``<out>.meta.json``.
    """
    if fmt == "jsonl":
        lines = [json.dumps(result.metadata)]
        lines += [json.dumps(r) for r in result.records]
        lines.append(json.dumps(result.summary))
        text = "\n".join(lines) + "\n"
    elif fmt == "csv":
        rows = [_scalar_columns(r) for r in result.records]
        cols: list[str] = []
        for r in rows:
            cols += [c for c in r if c not in cols]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        text = buf.getvalue()
        if out:
            with open(out + ".meta.json", "w", encoding="utf-8") as fh:
                json.dump({"metadata": result.metadata, "summary": result.summary}, fh, indent=2)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if out:
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def read_jsonl(path: str) -> ExperimentResult:
    with open(path, encoding="utf-8") as fh:
        objs = [json.loads(line) for line in fh if line.strip()]
    meta = next(o for o in objs if o.get("type") == "metadata")
    summary = next((o for o in objs if o.get("type") == "summary"), {})
    return ExperimentResult(meta, [o for o in objs if o.get("type") == "trial"], summary)

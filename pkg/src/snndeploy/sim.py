"""Timestep simulator with hardware-faithful semantics.

Two engines share the same timestep law (decay, integrate spikes drained
from the previous step, compare, subtract-reset, at most one spike per
neuron per step, one-step projection delay):

* ``reference_dense`` - composed dense float64 matrices per projection;
  the oracle engine.
* ``placed_int8`` - iterates per-PE population slices with synapse lists
  (int8 weights after quantization) and float32 membrane state, mirroring
  the chip's arithmetic.

With ``exact_order=True`` both engines accumulate synaptic input
sequentially in ascending presynaptic index, making runs bit-reproducible
and the two engines bit-identical when given the same weights and dtype.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Optional

import numpy as np

from .errors import SimulationError
from .events import SpikeTrain
from .ir import LIF
from .network import SPIKE_LIST_INPUT, Network, Population
from .partition import Placement

MJ_PER_FRAME = 0.765  # measured inference energy per 1 ms frame, high DVFS level


def derive_decay(lif: LIF, dt: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Euler-forward discretization of the LIF membrane equation.

    dv/dt = (v_leak - v + r*i)/tau  discretizes to
    v' = alpha*v + (1-alpha)*v_leak + coupling*i  with  alpha = 1 - dt/tau
    and coupling = (dt/tau)*r.

    Returns per-neuron ``(alpha, coupling)``; raises for tau <= dt, where
    the discretization becomes undamped.
    """
    tau = np.atleast_1d(np.asarray(lif.tau, dtype=np.float64))
    if np.any(tau <= dt):
        raise SimulationError(f"tau must exceed dt={dt} for a stable Euler-forward step")
    alpha = 1.0 - dt / tau
    coupling = (dt / tau) * np.atleast_1d(np.asarray(lif.r, dtype=np.float64))
    return alpha, np.broadcast_to(coupling, np.broadcast_shapes(alpha.shape, coupling.shape)).copy()


@dataclass
class RunResult:
    """Recorded output of one simulation run."""

    spikes: dict[str, SpikeTrain]
    counts_per_step: dict[str, np.ndarray]  # population -> (T,) spike counts
    predicted_class: int
    no_output_spikes: bool
    tie: bool
    timesteps: int
    engine: str
    runtime_s: float
    total_spikes_routed: int
    total_spikes_recorded: int
    v_traces: dict[str, np.ndarray] = field(default_factory=dict)


def estimate_energy(result_or_frames, mj_per_frame: float = MJ_PER_FRAME) -> float:
    """Constant-energy extrapolation: frames x measured mJ/frame.

    This scales a single measured per-frame figure; it is not a power
    simulation.  Accepts a :class:`RunResult` or a frame count.
    """
    frames = result_or_frames.timesteps if isinstance(result_or_frames, RunResult) else int(result_or_frames)
    if frames < 0:
        raise ValueError("frame count must be non-negative")
    return float(Decimal(str(mj_per_frame)) * frames)


def _ordered_accumulate(acc: np.ndarray, matrix: np.ndarray, active: np.ndarray) -> None:
    # Sequential column adds in ascending pre index; bit-reproducible.
    for c in active:
        acc += matrix[:, c]


def _input_spike_matrix(train: SpikeTrain, timesteps: int) -> list[np.ndarray]:
    """Per-timestep arrays of input neuron indices that fire."""
    per_step: list[list[int]] = [[] for _ in range(timesteps)]
    for n, ts in enumerate(train.times):
        for t in ts:
            if t < 0:
                raise SimulationError("negative input spike timestep")
            if t < timesteps:
                per_step[int(t)].append(n)
    return [np.asarray(sorted(s), dtype=np.int64) for s in per_step]


def _finalize(
    net: Network,
    engine: str,
    timesteps: int,
    rec: dict[str, list[list[int]]],
    routed: int,
    t0: float,
    v_traces: dict[str, np.ndarray],
) -> RunResult:
    spikes = {}
    counts = {}
    recorded = 0
    for p in net.populations:
        if p.id not in rec:
            continue
        times = [np.asarray(ts, dtype=np.int64) for ts in rec[p.id]]
        st = SpikeTrain(size=p.size, times=times)
        spikes[p.id] = st
        c = np.zeros(timesteps, dtype=np.int64)
        for ts in times:
            np.add.at(c, ts, 1)
        counts[p.id] = c
        recorded += st.total_spikes()
    out = net.output_population
    out_counts = np.array([len(ts) for ts in spikes[out.id].times]) if out.id in spikes else np.zeros(out.size)
    best = int(np.argmax(out_counts))
    no_spike = bool(out_counts.sum() == 0)
    tie = bool(np.sum(out_counts == out_counts[best]) > 1)
    return RunResult(
        spikes=spikes,
        counts_per_step=counts,
        predicted_class=best,
        no_output_spikes=no_spike,
        tie=tie,
        timesteps=timesteps,
        engine=engine,
        runtime_s=time.perf_counter() - t0,
        total_spikes_routed=routed,
        total_spikes_recorded=recorded,
        v_traces=v_traces,
    )


def _run_reference(
    net: Network,
    input_spikes: SpikeTrain,
    timesteps: int,
    exact_order: bool,
    record_v: bool,
    mode: str = "integrate_then_fire",
) -> RunResult:
    t0 = time.perf_counter()
    pops = {p.id: p for p in net.populations}
    matrices = {
        (pr.pre, pr.post): pr.dense_matrix(pops[pr.pre].size, pops[pr.post].size)
        for pr in net.projections
    }
    incoming: dict[str, list] = {p.id: [] for p in net.populations}
    for pr in net.projections:
        incoming[pr.post].append(pr)

    v = {p.id: np.zeros(p.size, dtype=np.float64) for p in net.populations if p.kind != SPIKE_LIST_INPUT}
    prev_fired = {p.id: np.empty(0, dtype=np.int64) for p in net.populations}
    rec: dict[str, list[list[int]]] = {p.id: [[] for _ in range(p.size)] for p in net.populations if p.record_spikes}
    traces = {p.id: np.zeros((timesteps, p.size)) for p in net.populations if p.kind != SPIKE_LIST_INPUT} if record_v else {}
    in_pop = net.input_population
    in_per_step = _input_spike_matrix(input_spikes, timesteps)
    routed = 0

    for t in range(timesteps):
        fired_now: dict[str, np.ndarray] = {}
        for p in net.populations:
            if p.kind == SPIKE_LIST_INPUT:
                fired_now[p.id] = in_per_step[t]
                continue
            acc = np.zeros(p.size, dtype=np.float64)
            for pr in incoming[p.id]:
                active = prev_fired[pr.pre]
                if len(active) == 0:
                    continue
                m = matrices[(pr.pre, pr.post)]
                if exact_order:
                    _ordered_accumulate(acc, m, active)
                else:
                    acc += m[:, active].sum(axis=1)
            if mode == "integrate_then_fire":
                vp = p.alpha * v[p.id] + (1.0 - p.alpha) * p.v_leak + p.coupling * acc
                fired = vp >= p.threshold
                vp = np.where(fired, vp - p.threshold, vp)
            elif mode == "fire_then_integrate":
                # threshold test lags one step: spike off the previous potential
                fired = v[p.id] >= p.threshold
                v_temp = np.where(fired, v[p.id] - p.threshold, v[p.id])
                vp = p.alpha * v_temp + (1.0 - p.alpha) * p.v_leak + p.coupling * acc
            else:
                raise SimulationError(f"unknown reset mode {mode!r}")
            v[p.id] = vp
            if record_v:
                traces[p.id][t] = vp
            fired_now[p.id] = np.nonzero(fired)[0]
        for pid, idx in fired_now.items():
            routed += len(idx)
            if pid in rec:
                for n in idx:
                    rec[pid][int(n)].append(t)
        prev_fired = fired_now
    return _finalize(net, "reference_dense", timesteps, rec, routed, t0, traces)


def _slice_tables(net: Network, pl: Optional[Placement]):
    """Per-population slice ranges plus per-slice incoming synapse tables."""
    if pl is None:
        ranges = {p.id: [(0, p.size)] for p in net.populations}
    else:
        ranges = {p.id: [] for p in net.populations}
        for sl in pl.slices:
            ranges[sl.population].append((sl.lo, sl.hi))
        for p in net.populations:
            got = sorted(ranges[p.id])
            if not got or got[0][0] != 0 or got[-1][1] != p.size or any(
                a[1] != b[0] for a, b in zip(got, got[1:])
            ):
                raise SimulationError(f"placement does not cover population {p.id!r}")
            ranges[p.id] = got
    tables = {}
    for p in net.populations:
        for lo, hi in ranges[p.id]:
            parts = []
            for pr in net.projections:
                if pr.post != p.id:
                    continue
                s = pr.synapses
                sel = s[(s["post"] >= lo) & (s["post"] < hi)]
                sel = sel[np.lexsort((sel["post"], sel["pre"]))]
                parts.append((pr.pre, sel))
            tables[(p.id, lo, hi)] = parts
    return ranges, tables


def _run_placed(
    net: Network,
    pl: Optional[Placement],
    input_spikes: SpikeTrain,
    timesteps: int,
    state_dtype,
    record_v: bool,
) -> RunResult:
    t0 = time.perf_counter()
    ranges, tables = _slice_tables(net, pl)
    dtype = np.dtype(state_dtype)
    v = {}
    params = {}
    for p in net.populations:
        if p.kind == SPIKE_LIST_INPUT:
            continue
        v[p.id] = np.zeros(p.size, dtype=dtype)
        params[p.id] = (
            p.alpha.astype(dtype),
            p.threshold.astype(dtype),
            p.v_leak.astype(dtype),
            p.coupling.astype(dtype),
        )
    rec: dict[str, list[list[int]]] = {p.id: [[] for _ in range(p.size)] for p in net.populations if p.record_spikes}
    traces = {p.id: np.zeros((timesteps, p.size), dtype=dtype) for p in net.populations if p.kind != SPIKE_LIST_INPUT} if record_v else {}
    in_pop = net.input_population
    in_per_step = _input_spike_matrix(input_spikes, timesteps)
    # Per-population boolean spike FIFO: written at t, drained at t+1.
    fifo = {p.id: np.zeros(p.size, dtype=bool) for p in net.populations}
    routed = 0

    for t in range(timesteps):
        drained = {pid: f.copy() for pid, f in fifo.items()}
        for f in fifo.values():
            f[:] = False
        fifo[in_pop.id][in_per_step[t]] = True
        for p in net.populations:
            if p.kind == SPIKE_LIST_INPUT:
                continue
            alpha, thr, v_leak, coupling = params[p.id]
            for lo, hi in ranges[p.id]:
                acc = np.zeros(hi - lo, dtype=dtype)
                for pre_id, syn in tables[(p.id, lo, hi)]:
                    if not drained[pre_id].any():
                        continue
                    hit = syn[drained[pre_id][syn["pre"]]]
                    # np.add.at is sequential in array order (ascending pre).
                    np.add.at(acc, hit["post"].astype(np.int64) - lo, hit["weight"].astype(dtype))
                sl = slice(lo, hi)
                vp = alpha[sl] * v[p.id][sl] + (dtype.type(1.0) - alpha[sl]) * v_leak[sl] + coupling[sl] * acc
                fired = vp >= thr[sl]
                vp = np.where(fired, vp - thr[sl], vp)
                v[p.id][sl] = vp
                if record_v:
                    traces[p.id][t, sl] = vp
                idx = np.nonzero(fired)[0] + lo
                fifo[p.id][idx] = True
                routed += len(idx)
                if p.id in rec:
                    for n in idx:
                        rec[p.id][int(n)].append(t)
        # input spikes count as routed and recorded at their emission step
        idx = in_per_step[t]
        routed += len(idx)
        if in_pop.id in rec:
            for n in idx:
                rec[in_pop.id][int(n)].append(t)
    return _finalize(net, "placed_int8", timesteps, rec, routed, t0, traces)


def run(
    net: Network,
    pl: Optional[Placement],
    input_spikes: SpikeTrain,
    engine: str = "placed_int8",
    max_timesteps: Optional[int] = None,
    exact_order: bool = False,
    state_dtype=np.float32,
    record_v: bool = False,
    mode: str = "integrate_then_fire",
) -> RunResult:
    """Execute the network for ``max_timesteps`` steps.

    ``placed_int8`` iterates placement slices with FIFO spike exchange and
    ``state_dtype`` membrane state (float32 by default, float64 for
    engine-equivalence testing).  ``reference_dense`` is the float64
    oracle; ``exact_order`` forces its sequential accumulation order.
    """
    net.validate()
    in_pop = net.input_population
    if input_spikes.size != in_pop.size:
        raise SimulationError(
            f"input spike train has {input_spikes.size} neurons, input population "
            f"expects {in_pop.size}"
        )
    timesteps = net.max_timesteps if max_timesteps is None else max_timesteps
    if timesteps <= 0:
        raise SimulationError(f"max_timesteps must be positive, got {timesteps}")
    if engine == "reference_dense":
        return _run_reference(net, input_spikes, timesteps, exact_order, record_v, mode)
    if engine == "placed_int8":
        if mode != "integrate_then_fire":
            raise SimulationError("the placed engine models hardware order only")
        return _run_placed(net, pl, input_spikes, timesteps, state_dtype, record_v)
    raise ValueError(f"unknown engine {engine!r}")

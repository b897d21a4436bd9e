"""Event-driven simulation, trace extraction, and Monte Carlo estimators.

Sampling is exact (exponential holding times, jump-probability kernel) and
fully reproducible: streams come from the counter-based Philox generator
keyed by (master seed, stream index), so replica r is independent of
scheduling and identical across platforms.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (BudgetExceeded, DegenerateData, WindowExceedsTrajectory)
from .model import Configuration, ProcessParams, WalkSpec

CEMETERY = -1
DEFAULT_STEP_CAP = 1_000_000_000
_BLOCK = 1 << 14


def replica_rng(seed: int, stream: int) -> np.random.Generator:
    """Philox stream (seed, stream); child streams never collide."""
    return np.random.Generator(np.random.Philox(key=(int(seed), int(stream))))


class _Blocks:
    """Batched draws from a Generator; consumption order is deterministic."""

    def __init__(self, rng: np.random.Generator, block: int = _BLOCK):
        self._rng = rng
        self._block = block
        self._exp = rng.exponential(1.0, block)
        self._uni = rng.random(block)
        self._ei = 0
        self._ui = 0

    def exponential(self) -> float:
        if self._ei == self._block:
            self._exp = self._rng.exponential(1.0, self._block)
            self._ei = 0
        v = self._exp[self._ei]
        self._ei += 1
        return float(v)

    def uniform(self) -> float:
        if self._ui == self._block:
            self._uni = self._rng.random(self._block)
            self._ui = 0
        v = self._uni[self._ui]
        self._ui += 1
        return float(v)


@dataclass(frozen=True)
class Trajectory:
    """One continuous-time path: initial state plus a chronological move list."""

    initial: tuple[int, ...]
    times: np.ndarray
    move_from: np.ndarray
    move_to: np.ndarray
    horizon: float
    seed: int
    stream: int

    @property
    def n_events(self) -> int:
        return len(self.times)

    def final_state(self) -> tuple[int, ...]:
        counts = list(self.initial)
        for x, y in zip(self.move_from, self.move_to):
            counts[x] -= 1
            counts[y] += 1
        return tuple(counts)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time,site_from,site_to\n")
            for t, x, y in zip(self.times, self.move_from, self.move_to):
                fh.write(f"{t!r},{int(x)},{int(y)}\n")


def simulate(spec: WalkSpec, params: ProcessParams,
             eta0: Configuration | Sequence[int], horizon: float, seed: int,
             stream: int = 0, max_events: int | None = None) -> Trajectory:
    """Exact event-driven path of the inclusion process up to ``horizon``.

    ``max_events`` additionally truncates the event count (the recorded
    horizon is then the last event time).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    counts = list(eta0.counts if isinstance(eta0, Configuration) else eta0)
    if len(counts) != spec.kappa:
        raise ValueError("initial state has wrong number of sites")
    if sum(counts) != params.n:
        raise ValueError("initial state has wrong particle count")
    mv_x, mv_y, mv_r = [], [], []
    for x in range(spec.kappa):
        for y in range(spec.kappa):
            if x != y and spec.rates[x, y] > 0:
                mv_x.append(x)
                mv_y.append(y)
                mv_r.append(float(spec.rates[x, y]))
    nmoves = len(mv_x)
    d = params.d
    blocks = _Blocks(replica_rng(seed, stream))
    times, efrom, eto = [], [], []
    t = 0.0
    rates = [0.0] * nmoves
    while True:
        if max_events is not None and len(times) >= max_events:
            break
        total = 0.0
        for k in range(nmoves):
            cx = counts[mv_x[k]]
            if cx:
                rate = cx * (d + counts[mv_y[k]]) * mv_r[k]
            else:
                rate = 0.0
            rates[k] = rate
            total += rate
        t_next = t + blocks.exponential() / total
        if t_next <= t:
            t_next = math.nextafter(t, math.inf)
        if t_next > horizon:
            break
        t = t_next
        u = blocks.uniform() * total
        acc = 0.0
        k = nmoves - 1
        for k in range(nmoves):
            acc += rates[k]
            if u <= acc:
                break
        x, y = mv_x[k], mv_y[k]
        counts[x] -= 1
        counts[y] += 1
        times.append(t)
        efrom.append(x)
        eto.append(y)
    real_horizon = horizon if max_events is None or len(times) < max_events \
        else (times[-1] if times else 0.0)
    return Trajectory(
        initial=tuple(eta0.counts if isinstance(eta0, Configuration) else eta0),
        times=np.asarray(times, dtype=float),
        move_from=np.asarray(efrom, dtype=np.int32),
        move_to=np.asarray(eto, dtype=np.int32),
        horizon=real_horizon, seed=seed, stream=stream)


@dataclass(frozen=True)
class TracePath:
    """Trace of a trajectory on the metastable states of a site set.

    ``labels``/``sojourns`` list the visited sites with their trace-clock
    sojourn times (consecutive equal labels merged: the clock is frozen off
    the set). ``marginal`` holds state labels at the requested wall-clock
    sample times, with the cemetery label for non-metastable states.
    """

    a_set: tuple[int, ...]
    labels: np.ndarray
    sojourns: np.ndarray
    trace_time: float
    off_time: float
    horizon: float
    theta: float
    window: float | None
    off_occupation: float | None
    marginal_times: np.ndarray | None = None
    marginal: np.ndarray | None = None

    def transition_counts(self, kappa: int) -> np.ndarray:
        counts = np.zeros((kappa, kappa), dtype=np.int64)
        for a, b in zip(self.labels[:-1], self.labels[1:]):
            counts[a, b] += 1
        return counts

    def time_at(self, kappa: int) -> np.ndarray:
        out = np.zeros(kappa)
        for lab, s in zip(self.labels, self.sojourns):
            out[lab] += s
        return out


def trace_project(traj: Trajectory, a_set, theta: float,
                  window: float | None = None,
                  marginal_times: Sequence[float] | None = None) -> TracePath:
    """Project a trajectory onto the metastable states of ``a_set``.

    ``window`` (in rescaled time) restricts the off-set occupation report to
    wall-clock ``[0, theta * window]`` and is returned normalized by
    ``theta``; requesting a window beyond the horizon raises.
    """
    a_set = tuple(sorted(set(int(v) for v in a_set)))
    if window is not None and theta * window > traj.horizon * (1 + 1e-12):
        raise WindowExceedsTrajectory(
            f"window {theta * window:.3g} exceeds horizon {traj.horizon:.3g}")
    counts = list(traj.initial)
    n = sum(counts)
    kappa = len(counts)
    in_a = [x in a_set for x in range(kappa)]

    def metastable_site() -> int | None:
        for x in a_set:
            if counts[x] == n:
                return x
        return None

    sample_ts = None
    sample_out = None
    si = 0
    if marginal_times is not None:
        sample_ts = np.asarray(sorted(float(theta * t) for t in marginal_times))
        if sample_ts.size and sample_ts[-1] > traj.horizon * (1 + 1e-12):
            raise WindowExceedsTrajectory("marginal sample beyond horizon")
        sample_out = np.full(sample_ts.size, CEMETERY, dtype=np.int64)

    labels: list[int] = []
    sojourns: list[float] = []
    cur_label = metastable_site()       # None while off the metastable set
    seg_label = cur_label               # open trace segment (revisits merge)
    seg_time = 0.0
    trace_time = 0.0
    off_time = 0.0
    off_in_window = 0.0
    limit = theta * window if window is not None else None
    t_prev = 0.0

    def advance(until: float):
        nonlocal trace_time, off_time, off_in_window, seg_time, si, t_prev
        dt = until - t_prev
        if dt < 0:
            dt = 0.0
        if sample_ts is not None:
            while si < sample_ts.size and sample_ts[si] <= until:
                here = metastable_site()
                sample_out[si] = here if here is not None else CEMETERY
                si += 1
        if cur_label is not None:
            trace_time += dt
            seg_time += dt
        else:
            off_time += dt
            if limit is not None:
                overlap = min(until, limit) - min(t_prev, limit)
                if overlap > 0:
                    off_in_window += overlap
        t_prev = until

    for t, x, y in zip(traj.times, traj.move_from, traj.move_to):
        advance(float(t))
        counts[x] -= 1
        counts[y] += 1
        new_label = y if (counts[y] == n and in_a[y]) else None
        if new_label is not None and new_label != seg_label:
            if seg_label is not None:
                labels.append(seg_label)
                sojourns.append(seg_time)
            seg_label = new_label
            seg_time = 0.0
        cur_label = new_label
    advance(traj.horizon)
    if seg_label is not None:
        labels.append(seg_label)
        sojourns.append(seg_time)

    return TracePath(
        a_set=a_set,
        labels=np.asarray(labels, dtype=np.int64),
        sojourns=np.asarray(sojourns, dtype=float),
        trace_time=trace_time, off_time=off_time, horizon=traj.horizon,
        theta=theta, window=window,
        off_occupation=(off_in_window / theta if window is not None else None),
        marginal_times=sample_ts, marginal=sample_out)


@dataclass(frozen=True)
class MCTraceRates:
    """Maximum-likelihood trace-rate estimates with per-entry standard errors."""

    a_set: tuple[int, ...]
    estimate: np.ndarray
    stderr: np.ndarray
    jump_counts: np.ndarray
    time_at: np.ndarray
    no_transitions: np.ndarray
    replicas: int
    seed: int


def mc_mean_jump_rate(spec: WalkSpec, params: ProcessParams, a_set,
                      replicas: int, horizon: float, seed: int,
                      threads: int = 1) -> MCTraceRates:
    """Estimate trace rates as (#jumps x->y) / (trace time at x).

    Each replica runs an independent trajectory started from a metastable
    state (cycling over the set); entries never observed are flagged rather
    than raised.
    """
    if replicas < 1:
        raise ValueError("need at least one replica")
    a_set = tuple(sorted(set(int(v) for v in a_set)))
    kappa = spec.kappa
    args = [(spec, params, a_set, horizon, seed, i) for i in range(replicas)]
    results = _map_replicas(_trace_replica, args, threads)
    jumps = np.zeros((kappa, kappa), dtype=np.int64)
    time_at = np.zeros(kappa)
    for cnt, tat in results:
        jumps += cnt
        time_at += tat
    k = len(a_set)
    est = np.zeros((k, k))
    err = np.zeros((k, k))
    miss = np.zeros((k, k), dtype=bool)
    for i, x in enumerate(a_set):
        for j, y in enumerate(a_set):
            if x == y:
                continue
            if time_at[x] > 0 and jumps[x, y] > 0:
                est[i, j] = jumps[x, y] / time_at[x]
                err[i, j] = math.sqrt(jumps[x, y]) / time_at[x]
            else:
                miss[i, j] = True
    sub_jumps = jumps[np.ix_(list(a_set), list(a_set))]
    return MCTraceRates(a_set=a_set, estimate=est, stderr=err,
                        jump_counts=sub_jumps, time_at=time_at[list(a_set)],
                        no_transitions=miss, replicas=replicas, seed=seed)


def _trace_replica(arg):
    spec, params, a_set, horizon, seed, i = arg
    start = Configuration.single_site(spec.kappa, params.n, a_set[i % len(a_set)])
    traj = simulate(spec, params, start, horizon, seed, stream=i)
    path = trace_project(traj, a_set, theta=1.0)
    return path.transition_counts(spec.kappa), path.time_at(spec.kappa)


@dataclass(frozen=True)
class HittingTask:
    """One hitting-time experiment.

    ``chain`` selects the process: ``inclusion`` runs the particle system in
    continuous time until some site's count drops to ``threshold`` or below;
    ``auxiliary`` runs the discrete reversed chain on the inner-core closure
    of ``r_set`` until it leaves the inner core (threshold
    ``floor(eps * log N)``).
    """

    chain: str
    start: tuple[int, ...]
    replicas: int
    seed: int
    threshold: float | None = None
    r_set: tuple[int, ...] | None = None
    eps: float | None = None
    step_cap: int = DEFAULT_STEP_CAP

    def __post_init__(self):
        if self.chain not in ("inclusion", "auxiliary"):
            raise ValueError(f"unknown chain {self.chain!r}")
        if self.chain == "inclusion" and self.threshold is None:
            raise ValueError("inclusion chain needs a threshold")
        if self.chain == "auxiliary" and (self.r_set is None or self.eps is None):
            raise ValueError("auxiliary chain needs r_set and eps")


@dataclass(frozen=True)
class MCHitting:
    """Per-replica hitting observations; censored entries hit the step cap."""

    values: np.ndarray
    censored: np.ndarray
    mean: float
    variance: float

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())


def mc_hitting(task: HittingTask, spec: WalkSpec, params: ProcessParams,
               threads: int = 1) -> MCHitting:
    """Monte Carlo hitting times; continuous time for the inclusion chain,
    step counts for the auxiliary chain.

    Capped replicas are reported as censored (value = budget consumed); the
    mean and variance use uncensored replicas only. Raises only when every
    replica is censored.
    """
    args = [(task, spec, params, i) for i in range(task.replicas)]
    results = _map_replicas(_hitting_replica, args, threads)
    values = np.array([v for v, _ in results])
    censored = np.array([c for _, c in results], dtype=bool)
    if censored.all():
        raise BudgetExceeded(f"all {task.replicas} replicas hit the step cap")
    ok = values[~censored]
    return MCHitting(values=values, censored=censored,
                     mean=float(ok.mean()),
                     variance=float(ok.var(ddof=1)) if ok.size > 1 else 0.0)


def _hitting_replica(arg):
    task, spec, params, i = arg
    blocks = _Blocks(replica_rng(task.seed, i))
    if task.chain == "inclusion":
        return _run_inclusion_hit(task, spec, params, blocks)
    return _run_auxiliary_hit(task, spec, params, blocks)


def _run_inclusion_hit(task: HittingTask, spec: WalkSpec, params: ProcessParams,
                       blocks: _Blocks):
    counts = list(task.start)
    thresh = task.threshold
    mv = [(x, y, float(spec.rates[x, y]))
          for x in range(spec.kappa) for y in range(spec.kappa)
          if x != y and spec.rates[x, y] > 0]
    d = params.d
    t = 0.0
    if min(counts) <= thresh:
        return 0.0, False
    rates = [0.0] * len(mv)
    for step in range(task.step_cap):
        total = 0.0
        for k, (x, y, rxy) in enumerate(mv):
            cx = counts[x]
            rate = cx * (d + counts[y]) * rxy if cx else 0.0
            rates[k] = rate
            total += rate
        t += blocks.exponential() / total
        u = blocks.uniform() * total
        acc = 0.0
        for k in range(len(mv)):
            acc += rates[k]
            if u <= acc:
                break
        x, y, _ = mv[k]
        counts[x] -= 1
        counts[y] += 1
        if counts[x] <= thresh:
            return t, False
    return t, True


def _run_auxiliary_hit(task: HittingTask, spec: WalkSpec, params: ProcessParams,
                       blocks: _Blocks):
    r_set = tuple(sorted(set(task.r_set)))
    floor_c = int(math.floor(task.eps * math.log(params.n)))
    counts = list(task.start)
    if any(counts[x] for x in range(spec.kappa) if x not in r_set):
        raise ValueError("auxiliary-chain start must be supported on R")
    if min(counts[x] for x in r_set) <= floor_c:
        return 0.0, False
    pairs = [(x, y, float(spec.rates[y, x]))
             for x in r_set for y in r_set if x != y]
    d = params.d
    weights = [0.0] * len(pairs)
    for step in range(task.step_cap):
        total = 0.0
        for k, (x, y, ryx) in enumerate(pairs):
            w = counts[y] * (d + counts[x]) * ryx
            weights[k] = w
            total += w
        u = blocks.uniform() * total
        acc = 0.0
        for k in range(len(pairs)):
            acc += weights[k]
            if u <= acc:
                break
        x, y, _ = pairs[k]
        counts[x] -= 1
        counts[y] += 1
        if counts[x] <= floor_c:
            return float(step + 1), False
    return float(task.step_cap), True


def _map_replicas(fn, args, threads: int):
    """Run replica jobs, reducing in replica-index order regardless of pool."""
    if threads <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, args))


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float


def scaling_fit(points: Sequence[tuple[float, float]]) -> FitResult:
    """Log-log least squares over (N, value) points."""
    if len(points) < 3:
        raise DegenerateData(f"need at least 3 points, got {len(points)}")
    ns = np.array([p[0] for p in points], dtype=float)
    vs = np.array([p[1] for p in points], dtype=float)
    if (ns <= 0).any() or (vs <= 0).any():
        raise DegenerateData("log-log fit needs positive coordinates")
    x = np.log(ns)
    y = np.log(vs)
    if np.ptp(x) == 0:
        raise DegenerateData("all sizes identical")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return FitResult(slope=float(slope), intercept=float(intercept), r_squared=r2)

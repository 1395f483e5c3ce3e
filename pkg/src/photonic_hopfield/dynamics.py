"""Metropolis and exchange Monte Carlo on the interference Hamiltonian.

One MC step is M single-flip proposals at uniformly random sites. The
per-segment JIT kernel and the pure-python reference path consume the RNG
stream identically (per step: one integers(M) draw, then one random(M)
draw), so trajectories are bit-reproducible across both and across any
worker layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import FieldCache, ModelInstance, random_spins
from .seeding import split_seed

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


@njit(cache=True)
def _segment_kernel(sigma, fields, pr_in, SL, n_ph, T, sites, u,
                    pr_trace, spins_out, snap_stride, step_offset):
    """Advance one replica by sites.shape[0] MC steps, in place.

    Candidate probabilities are recomputed from the cached fields at O(P)
    per proposal; rejected proposals touch nothing. Snapshots land in
    spins_out at global steps divisible by snap_stride.
    """
    n_steps, M = sites.shape
    P = fields.shape[0]
    Mn = float(M) ** n_ph
    pr = pr_in
    snap_row = 0
    for s in range(n_steps):
        for t in range(M):
            i = sites[s, t]
            si = sigma[i]
            pn = 0.0
            for p in range(P):
                fr = fields[p].real - 2.0 * si * SL[p, i].real
                fi = fields[p].imag - 2.0 * si * SL[p, i].imag
                a2 = fr * fr + fi * fi
                w = a2
                for _ in range(n_ph - 1):
                    w *= a2
                pn += w
            pn /= Mn
            dH = -M * (pn - pr)
            if dH <= 0.0:
                accept = True
            elif T > 0.0:
                accept = u[s, t] < math.exp(-dH / T)
            else:
                accept = False
            if accept:
                for p in range(P):
                    fields[p] = fields[p] - 2.0 * si * SL[p, i]
                sigma[i] = -si
                pr = pn
        if pr_trace.shape[0] > 0:
            pr_trace[s] = pr
        if snap_stride > 0 and (step_offset + s + 1) % snap_stride == 0:
            for j in range(M):
                spins_out[snap_row, j] = np.int8(sigma[j])
            snap_row += 1
    return pr


_EMPTY_TRACE = np.empty(0, dtype=np.float64)
_EMPTY_SNAPS = np.empty((0, 0), dtype=np.int8)


@dataclass
class MCState:
    """One replica: spins, cached fields, current Pr and a private RNG."""

    sigma: np.ndarray
    cache: FieldCache
    pr: float
    temperature: float
    rng: np.random.Generator
    step_count: int = 0

    @classmethod
    def initialize(cls, inst: ModelInstance, temperature: float, seed) -> "MCState":
        if not inst.fast_path:
            raise ValueError("dynamics requires a bunched output set with DFT input")
        rng = np.random.default_rng(seed)
        sigma = random_spins(inst.M, rng)
        cache = FieldCache.build(inst.S, inst.out_set.modes, sigma, inst.n_ph)
        return cls(sigma=sigma, cache=cache, pr=cache.probability(),
                   temperature=float(temperature), rng=rng)

    def energy(self) -> float:
        return -self.cache.M * self.pr


def _candidate_pr(cache: FieldCache, si: float, i: int) -> float:
    # scalar arithmetic in the exact op order of _segment_kernel, so the
    # python path and the JIT path make bit-identical accept decisions
    fields = cache.fields
    rows = cache.S_rows
    M = cache.M
    Mn = float(M) ** cache.n_ph
    pn = 0.0
    for p in range(fields.shape[0]):
        fr = fields[p].real - 2.0 * si * rows[p, i].real
        fi = fields[p].imag - 2.0 * si * rows[p, i].imag
        a2 = fr * fr + fi * fi
        w = a2
        for _ in range(cache.n_ph - 1):
            w *= a2
        pn += w
    return pn / Mn


def metropolis_flip(state: MCState, inst: ModelInstance, i: int) -> bool:
    """Propose flipping spin i; accept with min(1, e^{-dH/T}). In place.

    Always consumes exactly one uniform from the state's RNG so that the
    stream stays aligned with the batched kernel. Rejections leave sigma,
    cache and pr bit-identical.
    """
    u = state.rng.random()
    return _decide_flip(state, i, u)


def _decide_flip(state: MCState, i: int, u: float) -> bool:
    cache = state.cache
    si = state.sigma[i]
    pn = _candidate_pr(cache, si, i)
    dH = -cache.M * (pn - state.pr)
    if dH <= 0.0:
        accept = True
    elif state.temperature > 0.0:
        accept = u < math.exp(-dH / state.temperature)
    else:
        accept = False
    if accept:
        cache.fields = cache.fields - 2.0 * si * cache.S_rows[:, i]
        state.sigma[i] = -si
        state.pr = pn
    return accept


def mc_step(state: MCState, inst: ModelInstance) -> MCState:
    """One MC step = M uniform-random-site flip proposals (with replacement)."""
    sites = state.rng.integers(0, inst.M, size=inst.M)
    for i in sites:
        metropolis_flip(state, inst, int(i))
    state.step_count += 1
    return state


def advance(state: MCState, inst: ModelInstance, n_steps: int,
            record_pr: bool = False, snap_stride: int = 0,
            use_kernel: bool = True, phase_offset: int | None = None):
    """Run n_steps MC steps through the JIT kernel (or the reference path).

    Returns (pr_trace, snapshots); empty arrays when not requested. The RNG
    draws happen here, per step, so kernel and reference runs are identical.
    phase_offset anchors the snapshot stride (defaults to steps done so far).
    """
    M = inst.M
    sites = np.empty((n_steps, M), dtype=np.int64)
    u = np.empty((n_steps, M), dtype=np.float64)
    for s in range(n_steps):
        sites[s] = state.rng.integers(0, M, size=M)
        u[s] = state.rng.random(M)
    pr_trace = np.empty(n_steps, dtype=np.float64) if record_pr else _EMPTY_TRACE
    off = state.step_count if phase_offset is None else phase_offset
    if snap_stride > 0:
        n_snaps = (off + n_steps) // snap_stride - off // snap_stride
        snaps = np.empty((n_snaps, M), dtype=np.int8)
    else:
        snaps = _EMPTY_SNAPS
    if use_kernel:
        state.pr = float(_segment_kernel(
            state.sigma, state.cache.fields, state.pr, state.cache.S_rows,
            state.cache.n_ph, state.temperature, sites, u,
            pr_trace, snaps, snap_stride, off))
    else:
        row = 0
        for s in range(n_steps):
            for t in range(M):
                _decide_flip(state, int(sites[s, t]), float(u[s, t]))
            if record_pr:
                pr_trace[s] = state.pr
            if snap_stride > 0 and (off + s + 1) % snap_stride == 0:
                snaps[row] = state.sigma.astype(np.int8)
                row += 1
    state.step_count += n_steps
    return pr_trace, snaps


@dataclass(frozen=True)
class Schedule:
    """EMC schedule: ladder, thermalization, measurement, exchange cadence."""

    temperatures: tuple
    n_therm: int = 200_000
    n_measure: int = 200_000
    exchange_interval: int = 200
    snapshot_stride: int = 1

    def __post_init__(self):
        temps = tuple(float(t) for t in self.temperatures)
        if not temps:
            raise ValueError("schedule needs at least one temperature")
        if any(t <= 0 for t in temps):
            raise ValueError("temperatures must be positive")
        if any(b <= a for a, b in zip(temps, temps[1:])):
            raise ValueError("temperature ladder must be strictly increasing")
        if self.n_therm < 0 or self.n_measure < 0:
            raise ValueError("step counts must be non-negative")
        if self.exchange_interval < 1 or self.snapshot_stride < 1:
            raise ValueError("intervals must be >= 1")
        object.__setattr__(self, "temperatures", temps)

    @property
    def n_temps(self) -> int:
        return len(self.temperatures)


def geometric_ladder(t_min: float = 0.05, t_max: float = 0.6, count: int = 12) -> tuple:
    """Geometric temperature ladder; count=1 collapses to (t_min,)."""
    if count == 1:
        return (float(t_min),)
    return tuple(float(t) for t in np.geomspace(t_min, t_max, count))


@dataclass
class Trajectory:
    """Measurement-phase record for one replica slot.

    pr is per MC step (length n_measure); spins holds snapshots every
    snapshot_stride steps as +-1 int8 rows.
    """

    group: int
    temp_index: int
    temperature: float
    pr: np.ndarray
    spins: np.ndarray
    snapshot_stride: int

    def __len__(self) -> int:
        return len(self.pr)

    @property
    def M(self) -> int:
        return self.spins.shape[1]

    @property
    def energy(self) -> np.ndarray:
        return -self.M * self.pr


def exchange_sweep(replicas: list, rng: np.random.Generator, parity: int = 0) -> list:
    """Parallel-tempering swap pass over adjacent temperature pairs.

    Pairs (parity, parity+1), (parity+2, parity+3), ... swap configurations
    with probability min(1, exp((1/T_a - 1/T_b)(E_a - E_b))). Temperatures
    and RNG streams stay with the ladder slots; sigma, cache and pr move.
    """
    if len(replicas) < 2:
        return replicas
    temps = [r.temperature for r in replicas]
    if any(b <= a for a, b in zip(temps, temps[1:])):
        raise ValueError("replicas must be sorted by strictly increasing temperature")
    M = replicas[0].cache.M
    for a in range(parity % 2, len(replicas) - 1, 2):
        ra, rb = replicas[a], replicas[a + 1]
        ea, eb = -M * ra.pr, -M * rb.pr
        logp = (1.0 / ra.temperature - 1.0 / rb.temperature) * (ea - eb)
        if logp >= 0.0 or rng.random() < math.exp(logp):
            ra.sigma, rb.sigma = rb.sigma, ra.sigma
            ra.cache, rb.cache = rb.cache, ra.cache
            ra.pr, rb.pr = rb.pr, ra.pr
    return replicas


class EMC:
    """Exchange Monte Carlo driver: replica groups x temperature ladder.

    Each group is an independent ladder (its own RNG streams); groups exist
    to provide replica pairs for overlap statistics. Fully deterministic
    given (instance, schedule, n_groups, seed); `snapshot_state` /
    `restore_state` give checkpoint support at exchange-sweep granularity.
    """

    PR_CHECK_TOL = 1e-8

    def __init__(self, inst: ModelInstance, schedule: Schedule,
                 n_groups: int = 36, seed: int = 0, use_kernel: bool = True):
        if n_groups < 1:
            raise ValueError("need at least one replica group")
        self.inst = inst
        self.schedule = schedule
        self.n_groups = n_groups
        self.seed = seed
        self.use_kernel = use_kernel
        self.replicas = [
            [MCState.initialize(inst, T, split_seed(seed, "dynamics", g, ti))
             for ti, T in enumerate(schedule.temperatures)]
            for g in range(n_groups)
        ]
        self.exchange_rngs = [
            np.random.default_rng(split_seed(seed, "exchange", g))
            for g in range(n_groups)
        ]
        self.sweep_count = 0
        self.steps_done = 0  # total MC steps completed (therm + measure)
        n_meas = schedule.n_measure
        n_snaps = n_meas // schedule.snapshot_stride
        self._pr_buf = np.zeros((n_groups, schedule.n_temps, n_meas))
        self._spin_buf = np.zeros((n_groups, schedule.n_temps, n_snaps, inst.M), dtype=np.int8)

    @property
    def total_steps(self) -> int:
        return self.schedule.n_therm + self.schedule.n_measure

    def _segments(self):
        """(start, stop) step ranges between exchange points."""
        step = self.schedule.exchange_interval
        bounds = list(range(0, self.total_steps, step)) + [self.total_steps]
        for a, b in zip(bounds, bounds[1:]):
            if b > a:
                yield a, b

    def run(self, checkpoint_hook=None) -> list:
        """Advance to completion; returns trajectories for every slot.

        checkpoint_hook, if given, is called as hook(emc) after each
        exchange sweep and may persist snapshot_state().
        """
        for start, stop in self._segments():
            if start < self.steps_done:
                continue  # already done (resumed run)
            self._advance_segment(start, stop)
            if stop < self.total_steps:
                self.sweep_count += 1
                for g in range(self.n_groups):
                    exchange_sweep(self.replicas[g], self.exchange_rngs[g],
                                   parity=self.sweep_count % 2)
                self._consistency_check()
                if checkpoint_hook is not None:
                    checkpoint_hook(self)
        return self.trajectories()

    def _advance_segment(self, start: int, stop: int) -> None:
        sched = self.schedule
        n_therm = sched.n_therm
        for g in range(self.n_groups):
            for ti, state in enumerate(self.replicas[g]):
                if stop <= n_therm:
                    advance(state, self.inst, stop - start, use_kernel=self.use_kernel)
                elif start >= n_therm:
                    self._advance_measure(g, ti, state, start - n_therm, stop - n_therm)
                else:
                    advance(state, self.inst, n_therm - start, use_kernel=self.use_kernel)
                    self._advance_measure(g, ti, state, 0, stop - n_therm)
        self.steps_done = stop

    def _advance_measure(self, g: int, ti: int, state: MCState, m_start: int, m_stop: int) -> None:
        stride = self.schedule.snapshot_stride
        # stride phase counts measurement steps only
        pr_trace, snaps = advance(state, self.inst, m_stop - m_start,
                                  record_pr=True, snap_stride=stride,
                                  use_kernel=self.use_kernel, phase_offset=m_start)
        self._pr_buf[g, ti, m_start:m_stop] = pr_trace
        if snaps.shape[0]:
            row0 = m_start // stride
            self._spin_buf[g, ti, row0:row0 + snaps.shape[0]] = snaps

    def _consistency_check(self) -> None:
        for group in self.replicas:
            for state in group:
                fresh = state.cache.recomputed_fields(state.sigma)
                drift = np.abs(fresh - state.cache.fields).max() if len(fresh) else 0.0
                pr_drift = abs(state.cache.probability() - state.pr)
                if drift > self.PR_CHECK_TOL or pr_drift > self.PR_CHECK_TOL:
                    raise RuntimeError(
                        f"cache drift beyond tolerance: fields {drift:.3e}, pr {pr_drift:.3e}"
                    )

    def trajectories(self) -> list:
        out = []
        for g in range(self.n_groups):
            for ti, T in enumerate(self.schedule.temperatures):
                out.append(Trajectory(
                    group=g, temp_index=ti, temperature=T,
                    pr=self._pr_buf[g, ti].copy(),
                    spins=self._spin_buf[g, ti].copy(),
                    snapshot_stride=self.schedule.snapshot_stride))
        return out

    # -- checkpointing -------------------------------------------------

    def snapshot_state(self) -> dict:
        """Everything needed to resume after the last completed sweep."""
        return {
            "steps_done": self.steps_done,
            "sweep_count": self.sweep_count,
            "sigma": np.array([[s.sigma for s in grp] for grp in self.replicas]),
            "fields": np.array([[s.cache.fields for s in grp] for grp in self.replicas]),
            "pr": np.array([[s.pr for s in grp] for grp in self.replicas]),
            "step_counts": np.array([[s.step_count for s in grp] for grp in self.replicas]),
            "rng_states": [[s.rng.bit_generator.state for s in grp] for grp in self.replicas],
            "exchange_rng_states": [r.bit_generator.state for r in self.exchange_rngs],
            "pr_buf": self._pr_buf.copy(),
            "spin_buf": self._spin_buf.copy(),
        }

    def restore_state(self, snap: dict) -> None:
        self.steps_done = int(snap["steps_done"])
        self.sweep_count = int(snap["sweep_count"])
        for g in range(self.n_groups):
            for ti, state in enumerate(self.replicas[g]):
                state.sigma = np.array(snap["sigma"][g][ti], dtype=np.float64)
                state.cache.fields = np.array(snap["fields"][g][ti], dtype=np.complex128)
                state.pr = float(snap["pr"][g][ti])
                state.step_count = int(snap["step_counts"][g][ti])
                state.rng.bit_generator.state = snap["rng_states"][g][ti]
        for r, st in zip(self.exchange_rngs, snap["exchange_rng_states"]):
            r.bit_generator.state = st
        self._pr_buf = np.array(snap["pr_buf"], dtype=np.float64)
        self._spin_buf = np.array(snap["spin_buf"], dtype=np.int8)


def run_emc(inst: ModelInstance, schedule: Schedule, n_replica_groups: int = 36,
            seed: int = 0, use_kernel: bool = True) -> list:
    """Thermalize then measure every ladder slot; returns all trajectories."""
    return EMC(inst, schedule, n_replica_groups, seed, use_kernel=use_kernel).run()


def self_correlation(traj: Trajectory, tau: int) -> float:
    """F(tau) = (1/(N_valid M)) sum_i sum_t sigma_i(t) sigma_i(t + tau).

    Needs per-step spin records (snapshot_stride == 1). Single-temperature
    trajectories are the meaningful input: exchange moves teleport the
    configuration between basins and wipe out the low-T plateau.
    """
    if traj.snapshot_stride != 1:
        raise ValueError("self-correlation needs snapshot_stride == 1 records")
    n = traj.spins.shape[0]
    if not 0 <= tau < n:
        raise ValueError(f"tau={tau} outside [0, {n})")
    if tau == 0:
        return 1.0
    a = traj.spins[: n - tau].astype(np.float64)
    b = traj.spins[tau:].astype(np.float64)
    return float((a * b).mean())


def update_time_per_flip(inst: ModelInstance, temperature: float = 0.3,
                         n_steps: int = 4000, repeats: int = 3, seed: int = 0) -> float:
    """Mean wall seconds per single-flip update at this channel count.

    Times the update kernel alone on a pre-drawn proposal stream, so the
    figure reflects the O(|Lambda|) field-recompute cost rather than RNG
    generation overhead.
    """
    import time

    state = MCState.initialize(inst, temperature, seed)
    M = inst.M
    sites = state.rng.integers(0, M, size=(n_steps, M))
    u = state.rng.random((n_steps, M))
    cache = state.cache

    def run(rows):
        state.pr = float(_segment_kernel(
            state.sigma, cache.fields, state.pr, cache.S_rows, cache.n_ph,
            state.temperature, sites[:rows], u[:rows],
            _EMPTY_TRACE, _EMPTY_SNAPS, 0, 0))

    run(min(4, n_steps))  # trigger JIT outside the timed region
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run(n_steps)
        samples.append((time.perf_counter() - t0) / (n_steps * M))
    return float(np.mean(samples))


def measurement_noise(pr: float, n_exp: int) -> float:
    """Binomial error of a frequency estimate: sqrt(pr (1 - pr) / n_exp)."""
    if not 0.0 <= pr <= 1.0:
        raise ValueError("pr must lie in [0, 1]")
    if n_exp < 1:
        raise ValueError("n_exp must be >= 1")
    return math.sqrt(pr * (1.0 - pr) / n_exp)


def thermal_fluctuation(traj: Trajectory) -> float:
    """Std of successive-step Pr differences over the measurement window."""
    if len(traj.pr) < 2:
        raise ValueError("trajectory too short for fluctuation estimate")
    return float(np.diff(traj.pr).std())

"""Order parameters and phase-structure estimation.

Replica overlap distributions P(q), channel-overlap distributions P(m),
(alpha, T) sweeps and finite-size studies. Two normalizations of the
channel overlap are carried everywhere: "all-pairs" (the literal definition,
denominator over all ordered index pairs; capped near 0.4 for any spin
state) and "family" (unit mass within the fully-bunched channel family;
retrieval sits near 1). Classification thresholds refer to the family scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics, model
from .dynamics import Schedule, Trajectory
from .model import ModelInstance

NORMALIZATIONS = ("all-pairs", "family")


def overlap_q(a, b) -> float:
    """Replica overlap q_ab = (1/M) sum_j sigma_j^a sigma_j^b."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("overlap needs two equal-length spin vectors")
    return float((a * b).mean())


@dataclass(frozen=True)
class Histogram:
    """Unit-mass histogram on uniform bins (default 51 over [-1, 1])."""

    edges: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_samples(cls, samples, n_bins: int = 51, lo: float = -1.0, hi: float = 1.0) -> "Histogram":
        samples = np.asarray(samples, dtype=np.float64)
        counts, edges = np.histogram(samples, bins=n_bins, range=(lo, hi))
        return cls(edges=edges, counts=counts)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros_like(self.counts, dtype=np.float64)
        width = np.diff(self.edges)
        return self.counts / (total * width)

    def peak_positions(self) -> np.ndarray:
        """Centers of strict local maxima of the density (plateau-tolerant ends)."""
        d = self.density
        peaks = []
        for i in range(len(d)):
            left = d[i - 1] if i > 0 else -np.inf
            right = d[i + 1] if i < len(d) - 1 else -np.inf
            if d[i] > 0 and d[i] >= left and d[i] >= right and (d[i] > left or d[i] > right):
                peaks.append(self.centers[i])
        return np.array(peaks)


def _as_sample_groups(trajs):
    # accept either a flat list (one disorder sample) or a list of lists
    if not trajs:
        raise ValueError("no trajectories given")
    if isinstance(trajs[0], Trajectory):
        return [list(trajs)]
    return [list(t) for t in trajs]


def overlap_samples(trajs, stride: int | None = None) -> np.ndarray:
    """q over all distinct replica pairs of one sample at matching snapshots.

    Trajectories must share a temperature and disorder sample; stride picks
    every stride-th stored snapshot (default: all, which for stored data
    already means one per snapshot_stride MC steps).
    """
    trajs = list(trajs)
    if len(trajs) < 2:
        raise ValueError("need at least two replicas for overlaps")
    temps = {round(t.temperature, 12) for t in trajs}
    if len(temps) > 1:
        raise ValueError("overlap replicas must share a temperature")
    step = 1 if stride is None else max(1, stride // trajs[0].snapshot_stride)
    spins = [t.spins[::step].astype(np.float64) for t in trajs]
    n = min(s.shape[0] for s in spins)
    out = []
    for i in range(len(spins)):
        for j in range(i + 1, len(spins)):
            out.append((spins[i][:n] * spins[j][:n]).mean(axis=1))
    return np.concatenate(out) if out else np.empty(0)


def collect_pq(trajs, stride: int | None = None, n_bins: int = 51) -> Histogram:
    """P(q) pooled over disorder samples (list of per-sample trajectory lists)."""
    groups = _as_sample_groups(trajs)
    qs = [overlap_samples(g, stride=stride) for g in groups]
    return Histogram.from_samples(np.concatenate(qs), n_bins=n_bins)


def _mhat_block(rows: np.ndarray, inst: ModelInstance, normalization: str) -> np.ndarray:
    """m-hat for a (n_snapshots, M) block of spin rows; (n_snapshots, P) complex."""
    if inst.n_ph != 2:
        raise ValueError("channel overlaps are defined for two photons only")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"unknown normalization {normalization!r}")
    f = rows.astype(np.float64) @ inst.S.T  # fields of every snapshot at once
    af2 = np.abs(f) ** 2
    if normalization == "family":
        denom = np.sqrt((af2**2).sum(axis=1))
    else:
        denom = af2.sum(axis=1)  # all ordered pairs: sqrt((sum|f|^2)^2) = M for unitary S
    if np.any(denom < 1e-12):
        raise ValueError("null overlap field")
    return f[:, list(inst.out_set.modes)] ** 2 / denom[:, None]


def channel_overlap_samples(trajs, inst: ModelInstance, stride: int | None = None,
                            normalization: str = "all-pairs") -> np.ndarray:
    """Complex m-hat over (snapshot x replica x planted channel) for one sample."""
    vals = []
    for t in trajs:
        step = 1 if stride is None else max(1, stride // t.snapshot_stride)
        vals.append(_mhat_block(t.spins[::step], inst, normalization).ravel())
    return np.concatenate(vals)


def collect_pm(trajs, insts, stride: int | None = None, n_bins: int = 51,
               normalization: str = "all-pairs"):
    """(P(Re m-hat), P(|m-hat|)) pooled over samples.

    trajs: flat list (single sample) or list of per-sample lists; insts: the
    matching ModelInstance or list of instances.
    """
    groups = _as_sample_groups(trajs)
    if isinstance(insts, ModelInstance):
        insts = [insts]
    if len(insts) != len(groups):
        raise ValueError("one instance per trajectory group required")
    vals = [channel_overlap_samples(g, inst, stride, normalization)
            for g, inst in zip(groups, insts)]
    m = np.concatenate(vals)
    return (Histogram.from_samples(m.real, n_bins=n_bins),
            Histogram.from_samples(np.abs(m), n_bins=n_bins, lo=0.0, hi=1.0))


@dataclass(frozen=True)
class PhaseThresholds:
    theta_m: float = 0.5  # family-scale retrieval threshold
    theta_q: float = 0.3


@dataclass
class CellStats:
    """Summary statistics of one (alpha, T) grid cell."""

    alpha: float
    temperature: float
    M: int
    P: int
    mean_abs_q: float
    frac_q_above: float  # fraction of |q| samples above 0.5
    mean_max_mhat_family: float
    mean_max_mhat_allpairs: float
    mean_abs_mhat_family: float
    mean_abs_mhat_allpairs: float
    energy_mean: float
    energy_std: float
    sigma_thermal: float
    hist_q: Histogram
    hist_m_re: Histogram
    hist_m_abs: Histogram
    n_pairs: int
    per_sample_max_family: np.ndarray = field(default_factory=lambda: np.empty(0))
    per_sample_max_allpairs: np.ndarray = field(default_factory=lambda: np.empty(0))
    label: str = ""


def classify_phase(cell: CellStats, thresholds: PhaseThresholds = PhaseThresholds()) -> str:
    """Retrieval / spin-glass / paramagnet by the documented heuristic.

    An auxiliary label, never a substitute for the stored histograms; the
    thresholds are configuration, not physics.
    """
    if cell.n_pairs == 0:
        raise ValueError("empty cell")
    if cell.mean_max_mhat_family > thresholds.theta_m:
        return "retrieval"
    if cell.mean_abs_q > thresholds.theta_q:
        return "spin-glass"
    return "paramagnet"


def spin_contribution(spin_stack: np.ndarray, inst: ModelInstance) -> dict:
    """Overlap statistics of one sample from a (replicas, snapshots, M) stack.

    The spin-only part of cell_contribution; what `analyze` rebuilds from
    persisted snapshots.
    """
    if spin_stack.ndim != 3:
        raise ValueError("expected a (replicas, snapshots, M) array")
    R = spin_stack.shape[0]
    spins = spin_stack.astype(np.float64)
    qs = [(spins[i] * spins[j]).mean(axis=1) for i in range(R) for j in range(i + 1, R)]
    m_fam = np.concatenate([_mhat_block(spin_stack[r], inst, "family") for r in range(R)])
    m_ap = np.concatenate([_mhat_block(spin_stack[r], inst, "all-pairs") for r in range(R)])
    fam, ap = np.abs(m_fam), np.abs(m_ap)
    return {
        "M": inst.M,
        "P": inst.P,
        "q": np.concatenate(qs) if qs else np.empty(0),
        "abs_fam": fam.ravel(),
        "abs_ap": ap.ravel(),
        "re_ap": m_ap.real.ravel(),
        "max_fam": fam.max(axis=1),
        "max_ap": ap.max(axis=1),
    }


def cell_contribution(trajs, inst: ModelInstance, stride: int | None = None) -> dict:
    """Compact statistics of one disorder sample at one temperature.

    Small enough to cross process boundaries: raw q and m-hat samples,
    per-snapshot-replica max overlaps, and streaming energy moments.
    """
    trajs = list(trajs)
    step = 1 if stride is None else max(1, stride // trajs[0].snapshot_stride)
    n = min(t.spins[::step].shape[0] for t in trajs)
    stack = np.stack([t.spins[::step][:n] for t in trajs])
    out = spin_contribution(stack, inst)
    e = np.concatenate([t.energy for t in trajs])
    # moments via (mean, std) so results match bit-for-bit when rebuilt from
    # persisted per-sample summaries (repr round-trips floats exactly)
    e_mean, e_std = float(e.mean()), float(e.std())
    out.update({
        "e_sum": e_mean * e.size,
        "e_sumsq": (e_std**2 + e_mean**2) * e.size,
        "e_n": int(e.size),
        "sigma_t": float(np.mean([dynamics.thermal_fluctuation(t) for t in trajs])),
    })
    return out


def combine_contributions(alpha: float, T: float, contribs,
                          thresholds: PhaseThresholds = PhaseThresholds(),
                          n_bins: int = 51) -> CellStats:
    """Pool per-sample contributions (equal sample weight) into one cell."""
    contribs = list(contribs)
    if not contribs:
        raise ValueError("no contributions to combine")
    q_all = np.concatenate([c["q"] for c in contribs])
    abs_ap = np.concatenate([c["abs_ap"] for c in contribs])
    e_n = sum(c["e_n"] for c in contribs)
    e_mean = sum(c["e_sum"] for c in contribs) / e_n
    e_var = max(sum(c["e_sumsq"] for c in contribs) / e_n - e_mean**2, 0.0)
    cell = CellStats(
        alpha=alpha, temperature=T, M=contribs[0]["M"], P=contribs[0]["P"],
        mean_abs_q=float(np.abs(q_all).mean()),
        frac_q_above=float((np.abs(q_all) > 0.5).mean()),
        mean_max_mhat_family=float(np.mean([c["max_fam"].mean() for c in contribs])),
        mean_max_mhat_allpairs=float(np.mean([c["max_ap"].mean() for c in contribs])),
        mean_abs_mhat_family=float(np.concatenate([c["abs_fam"] for c in contribs]).mean()),
        mean_abs_mhat_allpairs=float(abs_ap.mean()),
        energy_mean=float(e_mean),
        energy_std=float(np.sqrt(e_var)),
        sigma_thermal=float(np.mean([c["sigma_t"] for c in contribs])),
        hist_q=Histogram.from_samples(q_all, n_bins=n_bins),
        hist_m_re=Histogram.from_samples(np.concatenate([c["re_ap"] for c in contribs]), n_bins=n_bins),
        hist_m_abs=Histogram.from_samples(abs_ap, n_bins=n_bins, lo=0.0, hi=1.0),
        n_pairs=int(q_all.size),
        per_sample_max_family=np.array([c["max_fam"].mean() for c in contribs]),
        per_sample_max_allpairs=np.array([c["max_ap"].mean() for c in contribs]),
    )
    cell.label = classify_phase(cell, thresholds)
    return cell


def _cell_stats(alpha: float, T: float, per_sample_trajs, insts, stride,
                thresholds: PhaseThresholds, n_bins: int = 51) -> CellStats:
    contribs = [cell_contribution(trajs, inst, stride)
                for trajs, inst in zip(per_sample_trajs, insts)]
    return combine_contributions(alpha, T, contribs, thresholds, n_bins)


@dataclass
class SweepResult:
    """Grid of per-cell statistics from phase_sweep."""

    alphas: tuple
    temperatures: tuple
    cells: list  # CellStats in (alpha-major, T-minor) order

    def cell(self, alpha: float, T: float) -> CellStats:
        for c in self.cells:
            if abs(c.alpha - alpha) < 1e-12 and abs(c.temperature - T) < 1e-12:
                return c
        raise KeyError(f"no cell at alpha={alpha}, T={T}")


def phase_sweep(M: int, alphas, temperatures, n_therm: int, n_measure: int,
                exchange_interval: int = 200, n_groups: int = 36,
                n_samples: int = 20, seed: int = 0, n_ph: int = 2,
                thresholds: PhaseThresholds = PhaseThresholds(),
                use_kernel: bool = True, progress=None) -> SweepResult:
    """EMC over the T grid (one ladder per alpha and disorder sample).

    The temperature grid is the exchange ladder, so a single-T grid runs
    plain Metropolis. Snapshots for overlap statistics are taken every
    exchange_interval steps. P = round(alpha M^n_ph) bunched channels.
    """
    alphas = tuple(float(a) for a in alphas)
    temperatures = tuple(sorted(float(t) for t in temperatures))
    if not alphas or not temperatures:
        raise ValueError("alpha and temperature grids must be non-empty")
    sched = Schedule(temperatures=temperatures, n_therm=n_therm, n_measure=n_measure,
                     exchange_interval=exchange_interval,
                     snapshot_stride=exchange_interval)
    cells = []
    for alpha in alphas:
        P = round(alpha * M**n_ph)
        if P < 1 or P > M:
            raise ValueError(f"alpha={alpha} gives P={P} outside [1, M] for bunched channels")
        insts, runs = [], []
        for s in range(n_samples):
            inst = model.sample_instance(M, n_ph, P, seed, s)
            trajs = dynamics.run_emc(inst, sched, n_replica_groups=n_groups,
                                     seed=dynamics_seed(seed, s),
                                     use_kernel=use_kernel)
            insts.append(inst)
            runs.append(trajs)
            if progress is not None:
                progress(alpha=alpha, sample=s)
        for ti, T in enumerate(temperatures):
            per_sample = [[t for t in trajs if t.temp_index == ti] for trajs in runs]
            cells.append(_cell_stats(alpha, T, per_sample, insts,
                                     stride=None, thresholds=thresholds))
    return SweepResult(alphas=alphas, temperatures=temperatures, cells=cells)


def dynamics_seed(master_seed: int, sample: int) -> int:
    """The per-sample EMC seed; shared by the library sweeps and the CLI."""
    from .seeding import split_seed

    return split_seed(master_seed, "run", sample)


def finite_size_study(M_list, alpha: float, T: float, n_therm: int, n_measure: int,
                      exchange_interval: int = 200, n_groups: int = 12,
                      n_samples: int = 8, seed: int = 0,
                      thresholds: PhaseThresholds = PhaseThresholds(),
                      use_kernel: bool = True) -> list:
    """Per-M cell statistics at fixed (alpha, T); P = round(alpha M^2)."""
    out = []
    for M in M_list:
        res = phase_sweep(M, [alpha], [T], n_therm, n_measure, exchange_interval,
                          n_groups, n_samples, seed=seed, thresholds=thresholds,
                          use_kernel=use_kernel)
        out.append(res.cells[0])
    return out

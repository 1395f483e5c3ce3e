"""The spin Hamiltonian induced by photon interference.

An instance is (scattering matrix S, input state, output channel set Lambda);
the energy of a phase configuration sigma is H = -M Pr(Lambda | sigma). For
fully-bunched channel sets the probability reduces to mode fields
f_k = sum_j S_kj sigma_j and costs O(|Lambda|) per spin flip; the exact
permanent route from `linops` stays available as the oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import linops
from .linops import FockSuperposition, ModeConfig, multiplicity
from .seeding import split_seed

UNITARITY_TOL = 1e-10


def as_spins(sigma) -> np.ndarray:
    """Validate and return sigma as a float64 array of exact +-1 entries."""
    s = np.asarray(sigma, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("spin configuration must be one-dimensional")
    if not np.all(np.abs(s) == 1.0):
        raise ValueError("spins must be exactly +1 or -1")
    return s


def random_spins(M: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=M).astype(np.float64) * 2.0 - 1.0


@dataclass(frozen=True)
class ExplicitOutputs:
    """Lambda given as an explicit list of output configurations."""

    configs: tuple

    def __post_init__(self):
        if len(set(self.configs)) != len(self.configs):
            raise ValueError("output configurations must be distinct")
        if not self.configs:
            raise ValueError("empty output set")

    @property
    def P(self) -> int:
        return len(self.configs)


@dataclass(frozen=True)
class BunchedSubset:
    """Lambda = fully-bunched channels on a subset of output modes."""

    modes: tuple

    def __post_init__(self):
        modes = tuple(int(m) for m in self.modes)
        if len(set(modes)) != len(modes):
            raise ValueError("bunched mode indices must be distinct")
        if not modes:
            raise ValueError("empty output set")
        object.__setattr__(self, "modes", modes)

    @property
    def P(self) -> int:
        return len(self.modes)


@dataclass(frozen=True)
class ModelInstance:
    """One disorder sample: S, the output set and the input state.

    input_state None means the DFT-prepared uniform-amplitude input, which
    is the only case the fast bunched path is derived for.
    """

    S: np.ndarray
    out_set: ExplicitOutputs | BunchedSubset
    M: int
    n_ph: int
    input_state: FockSuperposition | None = None

    def __post_init__(self):
        S = np.asarray(self.S, dtype=np.complex128)
        if S.shape != (self.M, self.M):
            raise ValueError(f"S has shape {S.shape}, expected ({self.M}, {self.M})")
        dev = np.abs(S.conj().T @ S - np.eye(self.M)).max()
        if dev > UNITARITY_TOL:
            raise ValueError(f"S is not unitary: max deviation {dev:.3e}")
        object.__setattr__(self, "S", S)
        if isinstance(self.out_set, BunchedSubset):
            if max(self.out_set.modes) >= self.M:
                raise ValueError("bunched mode index out of range")
        else:
            for k in self.out_set.configs:
                if k.M != self.M or k.n_ph != self.n_ph:
                    raise ValueError(f"output configuration {k} inconsistent with instance")
            if self.out_set.P >= linops.config_space_size(self.M, self.n_ph):
                raise ValueError("explicit output set must be a strict subset of the config space")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha = {self.alpha} outside (0, 1)")
        if self.input_state is not None:
            if self.input_state.M != self.M or self.input_state.n_ph != self.n_ph:
                raise ValueError("input state inconsistent with instance dimensions")

    @property
    def alpha(self) -> float:
        return self.out_set.P / self.M**self.n_ph

    @property
    def P(self) -> int:
        return self.out_set.P

    def input_amplitudes(self) -> FockSuperposition:
        if self.input_state is not None:
            return self.input_state
        return linops.dft_input_amplitudes(self.M, self.n_ph)

    def output_configs(self) -> list[ModeConfig]:
        if isinstance(self.out_set, ExplicitOutputs):
            return list(self.out_set.configs)
        return [ModeConfig((m,) * self.n_ph, self.M) for m in self.out_set.modes]

    @property
    def fast_path(self) -> bool:
        return isinstance(self.out_set, BunchedSubset) and self.input_state is None


def sample_instance(M: int, n_ph: int, P: int, master_seed: int, sample: int) -> ModelInstance:
    """Disorder sample `sample`: Haar S plus a random P-mode bunched set."""
    S = linops.haar_random_unitary(M, split_seed(master_seed, "matrix", sample))
    lam_rng = np.random.default_rng(split_seed(master_seed, "lambda", sample))
    modes = tuple(int(m) for m in lam_rng.choice(M, size=P, replace=False))
    return ModelInstance(S=S, out_set=BunchedSubset(modes), M=M, n_ph=n_ph)


def coupling_tensor(inst: ModelInstance, x: ModeConfig, y: ModeConfig) -> complex:
    """Hebb-like coupling J_Lambda(x, y) between input configurations.

    (a_x a_y* / sqrt(mu(x) mu(y))) sum_{k in Lambda} perm(S_{k|x}) perm*(S_{k|y}) / mu(k)
    """
    amps = inst.input_amplitudes()
    ax, ay = amps.amplitude(x), amps.amplitude(y)
    if ax == 0 or ay == 0:
        return 0.0 + 0.0j
    acc = 0.0 + 0.0j
    for k in inst.output_configs():
        pk_x = linops.permanent(linops.submatrix(inst.S, k, x))
        pk_y = linops.permanent(linops.submatrix(inst.S, k, y))
        acc += pk_x * np.conj(pk_y) / multiplicity(k)
    return complex(ax * np.conj(ay) / math.sqrt(multiplicity(x) * multiplicity(y)) * acc)


def output_probability_exact(inst: ModelInstance, sigma) -> float:
    """Pr(Lambda | sigma) by the permanent route. Slow; the oracle."""
    sigma = as_spins(sigma)
    psi = linops.apply_phase_layer(inst.input_amplitudes(), sigma)
    total = 0.0
    for k in inst.output_configs():
        total += abs(linops.evolve_superposition(inst.S, psi, k)) ** 2
    return float(total)


def output_probability_from_couplings(inst: ModelInstance, sigma) -> float:
    """Pr(Lambda | sigma) as the double sum over couplings. Even slower oracle.

    sum_{x,y} J(x,y) prod_i sigma_{x_i} prod_j sigma_{y_j}; agrees with the
    amplitude route to rounding.
    """
    sigma = as_spins(sigma)
    configs = linops.enumerate_configs(inst.M, inst.n_ph)
    total = 0.0 + 0.0j
    for x in configs:
        px = float(np.prod(sigma[list(x.modes)]))
        for y in configs:
            py = float(np.prod(sigma[list(y.modes)]))
            total += coupling_tensor(inst, x, y) * px * py
    return float(total.real)


def fully_bunched_probability(S, sigma, modes, n_ph: int) -> float:
    """Pr of all photons bunching into one of `modes`, DFT-uniform input.

    (1 / M^n_ph) sum_{mu in modes} |f_mu|^(2 n_ph) with f_mu = sum_j S_mu,j sigma_j.
    O(|modes| M) from scratch; the per-flip O(|modes|) update lives in FieldCache.
    """
    S = np.asarray(S)
    sigma = as_spins(sigma)
    modes = list(modes)
    if modes and (min(modes) < 0 or max(modes) >= S.shape[0]):
        raise IndexError("bunched mode index out of range")
    f = S[modes] @ sigma
    return float((np.abs(f) ** (2 * n_ph)).sum() / S.shape[0] ** n_ph)


@dataclass
class FieldCache:
    """Mode fields f_k = sum_j S_kj sigma_j for the bunched channels.

    Mutable, owned by one Monte Carlo worker at a time. After any flip
    sequence the fields track a full recomputation to ~1e-12 per update
    step (additions of identical magnitudes, no cancellation growth).
    """

    S_rows: np.ndarray
    fields: np.ndarray
    n_ph: int
    M: int

    @classmethod
    def build(cls, S, modes, sigma, n_ph: int) -> "FieldCache":
        S = np.asarray(S, dtype=np.complex128)
        rows = np.ascontiguousarray(S[list(modes)])
        return cls(S_rows=rows, fields=rows @ as_spins(sigma), n_ph=n_ph, M=S.shape[0])

    def probability(self) -> float:
        return float((np.abs(self.fields) ** (2 * self.n_ph)).sum() / self.M**self.n_ph)

    def recomputed_fields(self, sigma) -> np.ndarray:
        return self.S_rows @ as_spins(sigma)


def flip_update(cache: FieldCache, sigma, i: int) -> float:
    """Apply sigma_i -> -sigma_i to the cached fields, in place.

    `sigma` is the pre-flip configuration; the caller flips sigma[i] itself.
    Returns the probability change. Flipping the same spin twice restores
    fields and Pr up to rounding.
    """
    if not 0 <= i < cache.M:
        raise IndexError(f"spin index {i} out of range for M={cache.M}")
    before = cache.probability()
    cache.fields -= 2.0 * sigma[i] * cache.S_rows[:, i]
    return cache.probability() - before


def energy(inst: ModelInstance, sigma) -> float:
    """H[sigma | Lambda] = -M Pr(Lambda | sigma)."""
    if inst.fast_path:
        pr = fully_bunched_probability(inst.S, sigma, inst.out_set.modes, inst.n_ph)
    else:
        pr = output_probability_exact(inst, sigma)
    return -inst.M * pr


def memory_overlap(S, sigma, k: ModeConfig) -> complex:
    """Two-photon overlap of sigma with the pattern of output channel k.

    m_k = (1/M) sum_{x1,x2} sigma_x1 [S_k1,x1 S_k2,x2 + S_k1,x2 S_k2,x1] sigma_x2,
    which factors to (2/M) f_k1 f_k2 and costs O(M).
    """
    if k.n_ph != 2:
        raise ValueError("memory overlap is defined for two photons only")
    S = np.asarray(S)
    sigma = as_spins(sigma)
    k1, k2 = k.modes
    f = S[[k1, k2]] @ sigma
    return complex(2.0 / S.shape[0] * f[0] * f[1])


def normalized_memory_overlap(S, sigma, k: ModeConfig) -> complex:
    """m_k divided by the root sum of |m|^2 over all ordered index pairs.

    For unitary S that denominator is exactly 2 (sum_k |f_k|^2 = M), which
    pins max |m-hat| near 0.40 at M=50 regardless of sigma; use
    bunched_overlaps for the family-normalized observable that reaches
    retrieval scale.
    """
    if k.n_ph != 2:
        raise ValueError("memory overlap is defined for two photons only")
    S = np.asarray(S)
    sigma = as_spins(sigma)
    M = S.shape[0]
    f = S @ sigma
    denom = (2.0 / M) * (np.abs(f) ** 2).sum()
    if denom < 1e-12:
        raise ValueError("null overlap field")
    k1, k2 = k.modes
    return complex((2.0 / M) * f[k1] * f[k2] / denom)


def bunched_overlaps(S, sigma, modes) -> np.ndarray:
    """Bunched-channel overlaps normalized within the fully-bunched family.

    m-hat_mu = f_mu^2 / sqrt(sum_k |f_k|^4); unit total mass over the M
    diagonal channels, so single-channel retrieval shows up near |m-hat| = 1.
    The quantity is complex; its real part carries the two-peak structure.
    """
    S = np.asarray(S)
    sigma = as_spins(sigma)
    f = S @ sigma
    denom = math.sqrt(float((np.abs(f) ** 4).sum()))
    if denom < 1e-12:
        raise ValueError("null overlap field")
    return f[list(modes)] ** 2 / denom

"""Exact linear-optics core: Fock configurations, permanents, scattering
amplitudes, DFT input states and Haar random unitaries.

Everything in this module is the slow, trusted route. The fast evaluation
paths in `model` are validated against these functions, never the other
way around.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

# Full enumeration is an oracle, not the production path: refuse blowups.
CONFIG_SPACE_CAP = 10**6
PERMANENT_SIZE_CAP = 20


class ConfigSpaceError(ValueError):
    """A full Fock-space enumeration would exceed the configured cap."""


@dataclass(frozen=True)
class ModeConfig:
    """A Fock occupation pattern: N_ph mode indices in [0, M), stored sorted.

    Photons are indistinguishable, so two patterns are equal iff their
    sorted index tuples are equal; the constructor canonicalizes.
    """

    modes: tuple
    M: int

    def __post_init__(self):
        modes = tuple(sorted(int(m) for m in self.modes))
        if not modes:
            raise ValueError("a configuration needs at least one photon")
        if modes[0] < 0 or modes[-1] >= self.M:
            raise ValueError(f"mode index out of range for M={self.M}: {modes}")
        object.__setattr__(self, "modes", modes)

    @property
    def n_ph(self) -> int:
        return len(self.modes)

    def occupations(self) -> np.ndarray:
        """Per-mode photon counts n_j, length M."""
        occ = np.zeros(self.M, dtype=np.int64)
        for m in self.modes:
            occ[m] += 1
        return occ


def multiplicity(c: ModeConfig) -> int:
    """mu(c) = product of n_j! over the per-mode occupations n_j."""
    mu = 1
    for n in Counter(c.modes).values():
        mu *= math.factorial(n)
    return mu


def config_space_size(M: int, n_ph: int) -> int:
    """Number of distinct N_ph-photon configurations over M modes."""
    return math.comb(n_ph + M - 1, n_ph)


def enumerate_configs(M: int, n_ph: int) -> list[ModeConfig]:
    """All canonical configurations, lexicographic, guarded by the cap."""
    if M < 1 or n_ph < 1:
        raise ValueError("need M >= 1 and n_ph >= 1")
    size = config_space_size(M, n_ph)
    if size > CONFIG_SPACE_CAP:
        raise ConfigSpaceError(
            f"config space too large: {size} > {CONFIG_SPACE_CAP} (M={M}, n_ph={n_ph})"
        )
    return [ModeConfig(c, M) for c in combinations_with_replacement(range(M), n_ph)]


def permanent(A) -> complex:
    """Permanent of a square matrix via Ryser's formula in Gray-code order.

    perm(A) = (-1)^n sum_{S nonempty} (-1)^{|S|} prod_i sum_{j in S} A_ij,
    walked so each step toggles one column in the running row sums: O(2^n n).
    Sizes up to 3 use the written-out expansion.
    """
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"permanent needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n > PERMANENT_SIZE_CAP:
        raise ValueError(f"matrix size {n} exceeds permanent cap {PERMANENT_SIZE_CAP}")
    if n == 1:
        return complex(A[0, 0])
    if n == 2:
        return complex(A[0, 0] * A[1, 1] + A[0, 1] * A[1, 0])
    if n == 3:
        return complex(
            A[0, 0] * (A[1, 1] * A[2, 2] + A[1, 2] * A[2, 1])
            + A[0, 1] * (A[1, 0] * A[2, 2] + A[1, 2] * A[2, 0])
            + A[0, 2] * (A[1, 0] * A[2, 1] + A[1, 1] * A[2, 0])
        )

    rowsum = np.zeros(n, dtype=np.complex128)
    total = 0.0 + 0.0j
    gray = 0
    size = 0
    for k in range(1, 1 << n):
        g = k ^ (k >> 1)
        bit = g ^ gray
        j = bit.bit_length() - 1
        if g & bit:
            rowsum += A[:, j]
            size += 1
        else:
            rowsum -= A[:, j]
            size -= 1
        gray = g
        term = np.prod(rowsum)
        total += term if size % 2 == 0 else -term
    return complex(total if n % 2 == 0 else -total)


def submatrix(U, k: ModeConfig, c: ModeConfig) -> np.ndarray:
    """N_ph x N_ph block with entry (i, j) = U[k_i, c_j]; repeats duplicate rows/cols."""
    U = np.asarray(U)
    if k.n_ph != c.n_ph:
        raise ValueError("output and input configurations must have equal photon number")
    if max(k.modes) >= U.shape[0] or max(c.modes) >= U.shape[1]:
        raise IndexError("configuration indexes outside the matrix")
    return U[np.ix_(k.modes, c.modes)]


def scattering_amplitude(U, c: ModeConfig, k: ModeConfig) -> complex:
    """<k|U|c> = perm(U_{k|c}) / sqrt(mu(c) mu(k))."""
    return permanent(submatrix(U, k, c)) / math.sqrt(multiplicity(c) * multiplicity(k))


def transition_probability(U, c: ModeConfig, k: ModeConfig) -> float:
    """|<k|U|c>|^2."""
    return abs(scattering_amplitude(U, c, k)) ** 2


def dft_matrix(M: int) -> np.ndarray:
    """Unitary DFT, entries e^{-2 pi i kl / M} / sqrt(M)."""
    if M < 1:
        raise ValueError("M must be >= 1")
    kl = np.outer(np.arange(M), np.arange(M))
    return np.exp(-2j * np.pi * kl / M) / math.sqrt(M)


@dataclass(frozen=True)
class FockSuperposition:
    """|psi> = sum_c a_c |c> over canonical N_ph-photon configurations."""

    M: int
    n_ph: int
    amplitudes: dict

    def __post_init__(self):
        norm = sum(abs(a) ** 2 for a in self.amplitudes.values())
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"state not normalized: sum |a|^2 = {norm!r}")
        for c in self.amplitudes:
            if c.M != self.M or c.n_ph != self.n_ph:
                raise ValueError(f"configuration {c} inconsistent with (M={self.M}, n_ph={self.n_ph})")

    def amplitude(self, c: ModeConfig) -> complex:
        return self.amplitudes.get(c, 0.0 + 0.0j)


def dft_input_amplitudes(M: int, n_ph: int) -> FockSuperposition:
    """State produced by the DFT from all photons in mode 0.

    Closed form a_x = sqrt(n_ph! / (M^n_ph mu(x))), all amplitudes positive
    real; must (and does, see tests) match the permanent route entrywise.
    """
    nf = math.factorial(n_ph)
    amps = {
        x: complex(math.sqrt(nf / (M**n_ph * multiplicity(x))))
        for x in enumerate_configs(M, n_ph)
    }
    return FockSuperposition(M=M, n_ph=n_ph, amplitudes=amps)


def haar_random_unitary(M: int, seed) -> np.ndarray:
    """Haar-distributed M x M unitary, deterministic per seed.

    QR of a complex Ginibre matrix with the R-diagonal phases divided out;
    fixing those phases is what makes the factorization unique and the
    distribution exactly Haar.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def apply_phase_layer(psi: FockSuperposition, sigma) -> FockSuperposition:
    """Spin layer on the input state: a'_c = a_c prod_j sigma_{c_j}.

    With sigma in {-1, +1}^M this flips amplitude signs only, so the norm
    is preserved exactly and applying the same sigma twice is the identity.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (psi.M,):
        raise ValueError(f"phase layer has shape {sigma.shape}, expected ({psi.M},)")
    new = {
        c: a * float(np.prod(sigma[list(c.modes)]))
        for c, a in psi.amplitudes.items()
    }
    return FockSuperposition(M=psi.M, n_ph=psi.n_ph, amplitudes=new)


def evolve_superposition(S, psi: FockSuperposition, k: ModeConfig) -> complex:
    """Exact output amplitude <k|S|psi> = sum_c a_c <k|S|c>. Slow route."""
    out = 0.0 + 0.0j
    for c, a in psi.amplitudes.items():
        if a != 0:
            out += a * scattering_amplitude(S, c, k)
    return complex(out)

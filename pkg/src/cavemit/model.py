"""Few-level atom in a 1D cavity: parameters, couplings, Hamiltonian elements.

Atomic units throughout (hbar = 1, energies in hartree, lengths in bohr).
The cavity of length L supports standing-wave modes sin(n pi r / L).  With
the atom pinned at r_A = L/2 every even harmonic has a node at the atom and
decouples, so the M coupled modes are the odd harmonics n_alpha = 2*alpha - 1
with frequencies

    omega_alpha = n_alpha * pi * c / L.

The light-matter coupling is bilinear in the mode displacement and the
transition dipole,

    H_AF = sum_alpha omega_alpha * lam_alpha * Q_alpha * mu,

with |lam_alpha| constant across modes and the sign alternating as
(-1)**alpha, which matches the sign of sin(n_alpha pi / 2) at the atom up to
a global phase.  The quadratic dipole self-energy term is dropped (constant
shift for two levels; negligible here for three).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# 1D soft-Coulomb hydrogen parameterization (a.u.)
LEVEL_ENERGIES = (-0.6738, -0.2798, -0.1547)
DIPOLE_12 = 1.034
DIPOLE_23 = -2.536
COUPLING_MAG = 0.0103
CAVITY_LENGTH = 2.362e5
LIGHT_SPEED = 137.036


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AtomSpec:
    """Level energies, dipole matrix, and the initially occupied level."""

    energies: np.ndarray        # (K,) hartree, ascending
    dipole: np.ndarray          # (K, K) real symmetric, zero diagonal
    initial_level: int          # index of the initially occupied level

    def __post_init__(self):
        object.__setattr__(self, "energies", _freeze(self.energies))
        object.__setattr__(self, "dipole", _freeze(self.dipole))
        K = self.energies.size
        if self.dipole.shape != (K, K):
            raise ValueError("dipole matrix shape does not match level count")
        if not np.allclose(self.dipole, self.dipole.T, atol=1e-14):
            raise ValueError("dipole matrix must be Hermitian (real symmetric)")
        if not (0 <= self.initial_level < K):
            raise ValueError("initial_level out of range")

    @property
    def n_levels(self) -> int:
        return self.energies.size


@dataclass(frozen=True)
class CavitySpec:
    """Coupled-mode frequencies, couplings, and geometry of the 1D cavity."""

    n_modes: int
    length: float               # L (bohr)
    light_speed: float          # c (a.u.)
    omega: np.ndarray           # (M,) hartree, strictly increasing
    lam: np.ndarray             # (M,) coupling constants, alternating sign
    harmonic_index: np.ndarray  # (M,) integer harmonic n_alpha of each mode
    atom_position: float        # r_A (bohr)
    epsilon0: float = 1.0       # field normalization constant

    def __post_init__(self):
        object.__setattr__(self, "omega", _freeze(self.omega))
        object.__setattr__(self, "lam", _freeze(self.lam))
        n = np.asarray(self.harmonic_index, dtype=int)
        n.setflags(write=False)
        object.__setattr__(self, "harmonic_index", n)
        if not (self.omega.size == self.lam.size == n.size == self.n_modes):
            raise ValueError("inconsistent mode array lengths")
        if np.any(np.diff(self.omega) <= 0):
            raise ValueError("mode frequencies must be strictly increasing")
        expected = n * np.pi * self.light_speed / self.length
        if not np.allclose(self.omega, expected, rtol=1e-12):
            raise ValueError("omega_alpha must equal n_alpha * pi * c / L")
        mags = np.abs(self.lam)
        if mags.max(initial=0.0) > 0 and not np.allclose(mags, mags[0], rtol=1e-12):
            raise ValueError("|lam_alpha| must be constant across modes")
        if not (0.0 <= self.atom_position <= self.length):
            raise ValueError("atom_position outside the cavity")


@dataclass(frozen=True)
class ModelSpec:
    """Immutable atom + cavity model; single source of Hamiltonian elements."""

    atom: AtomSpec
    cavity: CavitySpec
    rwa: bool = False           # drop counter-rotating terms (exact propagator only)

    def __post_init__(self):
        eps = self.atom.energies
        if self.atom.n_levels >= 2:
            gap = eps[1] - eps[0]
            om = self.cavity.omega
            tol = 1e-9 * gap
            if not (om[0] - tol <= gap <= om[-1] + tol):
                raise ValueError("cavity band does not cover the 1-2 transition")

    @property
    def n_levels(self) -> int:
        return self.atom.n_levels

    @property
    def n_modes(self) -> int:
        return self.cavity.n_modes


def build_paper_model(levels: int, n_modes: int, scale: float = 1.0,
                      coupling: float = COUPLING_MAG, rwa: bool = False) -> ModelSpec:
    """Soft-Coulomb hydrogen model: 2 or 3 levels coupled to the odd cavity harmonics.

    ``scale`` divides the cavity length (raising all mode frequencies), which
    keeps the 1-2 transition inside the band for small desk-size mode counts.
    ``coupling`` overrides the coupling magnitude (0 turns interaction off).
    """
    if levels not in (2, 3):
        raise ValueError("levels must be 2 or 3")
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    if scale <= 0:
        raise ValueError("scale must be positive")

    eps = np.array(LEVEL_ENERGIES[:levels])
    mu = np.zeros((levels, levels))
    mu[0, 1] = mu[1, 0] = DIPOLE_12
    if levels == 3:
        mu[1, 2] = mu[2, 1] = DIPOLE_23
    atom = AtomSpec(energies=eps, dipole=mu, initial_level=levels - 1)

    L = CAVITY_LENGTH / scale
    alpha = np.arange(1, n_modes + 1)
    harmonics = 2 * alpha - 1
    omega = harmonics * np.pi * LIGHT_SPEED / L
    lam = coupling * (-1.0) ** alpha
    cavity = CavitySpec(n_modes=n_modes, length=L, light_speed=LIGHT_SPEED,
                        omega=omega, lam=lam, harmonic_index=harmonics,
                        atom_position=L / 2.0)
    return ModelSpec(atom=atom, cavity=cavity, rwa=rwa)


def coupling_ratio(model: ModelSpec) -> float:
    """Resonant-mode coupling strength over the 1-2 gap: mu_12 |lam| sqrt(de/2) / de."""
    if model.n_levels < 2:
        raise ValueError("need at least two levels")
    de = model.atom.energies[1] - model.atom.energies[0]
    g = model.atom.dipole[0, 1] * np.abs(model.cavity.lam).max(initial=0.0) * np.sqrt(de / 2.0)
    return g / de


def electronic_hamiltonian(model: ModelSpec, Q: np.ndarray) -> np.ndarray:
    """K x K matter Hamiltonian at frozen mode displacements Q.

    H_el(Q) = diag(eps) + (sum_a omega_a lam_a Q_a) mu + (1/2 sum_a omega_a^2 Q_a^2) I.
    The scalar field-potential term shifts all levels equally.
    """
    Q = np.asarray(Q, dtype=float)
    if Q.shape != (model.n_modes,):
        raise ValueError("Q has wrong length")
    om, lam = model.cavity.omega, model.cavity.lam
    g = float(np.dot(om * lam, Q))
    pot = 0.5 * float(np.dot(om * om, Q * Q))
    H = np.diag(model.atom.energies + pot) + g * model.atom.dipole
    return H


def mode_function(model: ModelSpec, r) -> np.ndarray:
    """Mode profiles zeta_a(r) = sqrt(omega_a / (eps0 L)) sin(n_a pi r / L).

    Scalar r gives shape (M,); an array of positions gives (len(r), M).
    """
    cav = model.cavity
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0) or np.any(r_arr > cav.length):
        raise ValueError("position outside the cavity")
    amp = np.sqrt(cav.omega / (cav.epsilon0 * cav.length))
    phase = np.multiply.outer(r_arr, cav.harmonic_index * np.pi / cav.length)
    return amp * np.sin(phase)


def make_r_grid(model: ModelSpec, n_points: int = 2048) -> np.ndarray:
    """Uniform observation grid on [0, L]."""
    if n_points < 2:
        raise ValueError("need at least two grid points")
    return np.linspace(0.0, model.cavity.length, n_points)

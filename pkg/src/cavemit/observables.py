"""Shared estimators: atomic populations and the normal-ordered field intensity.

The field at a point is E(r) = sum_a e_a(r) Q_a with e_a = sqrt(2 omega_a)
zeta_a, so the normal-ordered intensity is the quadratic form

    :I(r): = sum_ab e_a(r) e_b(r) (<Q_a Q_b>_sym - delta_ab / (2 omega_a)),

whose cross-mode terms carry the traveling wavepacket and the light cone.
Its mode-diagonal restriction,

    I_diag(r) = 2 sum_a omega_a zeta_a(r)^2 <Q_a^2> - sum_a zeta_a(r)^2,

is also provided (``intensity``); it is evaluated as
2 sum_a omega_a zeta_a^2 (<Q_a^2> - 1/(2 omega_a)) so the exact vacuum nulls
bitwise, not merely to rounding.  Run outputs report the full quadratic form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelSpec, mode_function


@dataclass
class ObservableSeries:
    """Time series of populations plus intensity profiles at snapshot times."""

    times: np.ndarray                   # (n_t,)
    populations: np.ndarray             # (n_t, K)
    pop_stderr: np.ndarray              # (n_t, K); zeros for deterministic methods
    r_grid: np.ndarray                  # (n_r,)
    intensity: dict                     # snapshot time -> (n_r,) intensity
    intensity_stderr: dict              # snapshot time -> (n_r,) standard error
    manifest: dict = field(default_factory=dict)


def intensity(model: ModelSpec, r_grid: np.ndarray, q_square_means: np.ndarray) -> np.ndarray:
    """Normal-ordered intensity on r_grid from per-mode second moments <Q_a^2>."""
    q2 = np.asarray(q_square_means, dtype=float)
    if q2.shape != (model.n_modes,):
        raise ValueError("q_square_means has wrong length")
    zeta = mode_function(model, r_grid)                 # (n_r, M)
    om = model.cavity.omega
    excess = 2.0 * om * (q2 - 0.5 / om)
    return zeta * zeta @ excess


def intensity_stderr(model: ModelSpec, r_grid: np.ndarray, q_square_se: np.ndarray) -> np.ndarray:
    """Standard error of the mode-diagonal intensity for independent per-mode errors."""
    se = np.asarray(q_square_se, dtype=float)
    zeta = mode_function(model, r_grid)
    om = model.cavity.omega
    return np.sqrt(zeta ** 4 @ (2.0 * om * se) ** 2)


def field_weights(model: ModelSpec, r_grid: np.ndarray) -> np.ndarray:
    """Pointwise field expansion weights e_a(r) = sqrt(2 omega_a) zeta_a(r)."""
    return np.sqrt(2.0 * model.cavity.omega) * mode_function(model, r_grid)


def vacuum_field_square(model: ModelSpec, r_grid: np.ndarray) -> np.ndarray:
    """<0| E(r)^2 |0> = sum_a zeta_a(r)^2, the normal-ordering subtraction."""
    return (mode_function(model, r_grid) ** 2).sum(axis=1)


def intensity_from_cov(model: ModelSpec, r_grid: np.ndarray,
                       cov_excess: np.ndarray) -> np.ndarray:
    """Full quadratic-form intensity from the vacuum-subtracted <Q_a Q_b> matrix."""
    C = np.asarray(cov_excess, dtype=float)
    M = model.n_modes
    if C.shape != (M, M):
        raise ValueError("cov_excess must be (n_modes, n_modes)")
    e = field_weights(model, r_grid)
    return ((e @ C) * e).sum(axis=1)


def ci_q_square(state) -> np.ndarray:
    """Per-mode <Q_a^2> of a CI state.

    <Q_a^2> = (1 + 2<n_a> + 2 Re<a_a a_a>) / (2 omega_a); the anomalous term
    comes from the vacuum <-> same-mode-double coherences of the 2-photon basis.
    """
    basis = state.basis
    om = state.model_omega
    c = state.coeffs.reshape(basis.n_levels, basis.n_configs)
    prob = (np.abs(c) ** 2).sum(axis=0)                 # (n_cfg,) matter traced out
    M = basis.n_modes
    occ = np.zeros(M)
    m1, m2 = basis.cfg_mode1, basis.cfg_mode2
    sel = m1 >= 0
    np.add.at(occ, m1[sel], prob[sel])
    sel = m2 >= 0
    np.add.at(occ, m2[sel], prob[sel])
    anom = np.zeros(M)
    if basis.same_mode_double_index is not None:
        idx = basis.same_mode_double_index              # (M,) config index of |2_a>
        c0 = c[:, 0]
        c2 = c[:, idx]                                  # (K, M)
        anom = 2.0 * np.sqrt(2.0) * (np.conj(c0)[:, None] * c2).sum(axis=0).real
    return (1.0 + 2.0 * occ + anom) / (2.0 * om)


def ensemble_q_square(q_square_samples: np.ndarray, n_batches: int = 16):
    """Unbiased mean and batch-means standard error of per-trajectory Q_a^2 samples.

    ``q_square_samples`` has shape (n_traj, M).  Batches are contiguous index
    ranges, so the weighted batch means recombine to the full mean exactly.
    """
    x = np.asarray(q_square_samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two trajectories")
    n = x.shape[0]
    nb = max(2, min(n_batches, n))
    bounds = np.linspace(0, n, nb + 1).astype(int)
    sums = np.add.reduceat(x, bounds[:-1], axis=0)
    counts = np.diff(bounds).astype(float)
    mean = sums.sum(axis=0) / n
    bmeans = sums / counts[:, None]
    # weighted scatter of batch means about the global mean
    dev = bmeans - mean
    var_mean = (counts[:, None] * dev ** 2).sum(axis=0) / n / (nb - 1)
    return mean, np.sqrt(var_mean)

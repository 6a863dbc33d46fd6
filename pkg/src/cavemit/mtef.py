"""Multi-trajectory Ehrenfest dynamics.

Per trajectory, the matter density matrix and the classical field obey

    drho/dt = -i [H_A + (sum_a omega_a lam_a Q_a) mu, rho]
    dQ_a/dt = P_a
    dP_a/dt = -omega_a^2 Q_a - omega_a lam_a Tr(rho mu)

integrated jointly by RK4 with the field in rotating variables (free harmonic
motion exact; see ensemble module).  The ensemble average over vacuum Wigner
samples yields populations and the field intensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ensemble
from .model import ModelSpec
from .observables import ObservableSeries
from .sampling import FieldSample, SeedPolicy, sample_vacuum


@dataclass
class MtefTrajectory:
    rho: np.ndarray         # (K, K) complex, Tr = 1
    field: FieldSample
    time: float = 0.0


def _rhs(rho, w, t, eps, mu, om, wl):
    B, K = rho.shape[0], rho.shape[1]
    phase = np.exp(-1j * om * t)
    Q = (w * phase).real / om                        # (B, M)
    g = Q @ wl                                       # (B,)
    # A = rho H for H = diag(eps) + g mu; then -i[H, rho] = -i (A^dag - A),
    # assembled componentwise so rho stays Hermitian to rounding
    A = rho * eps[None, None, :]
    A += g[:, None, None] * np.tensordot(rho, mu, axes=([2], [0]))
    drho = np.empty_like(rho)
    for i in range(K):
        for j in range(i, K):
            val = (-1j) * (A[:, j, i].conj() - A[:, i, j])
            drho[:, i, j] = val
            if j > i:
                drho[:, j, i] = val.conj()
    mu_exp = (rho.reshape(B, -1) @ mu.T.reshape(-1)).real
    dw = (-1j) * wl * mu_exp[:, None] * np.conj(phase)
    return drho, dw


def _rk4(rho, w, t, dt, eps, mu, om, wl):
    k1r, k1w = _rhs(rho, w, t, eps, mu, om, wl)
    k2r, k2w = _rhs(rho + 0.5 * dt * k1r, w + 0.5 * dt * k1w, t + 0.5 * dt, eps, mu, om, wl)
    k3r, k3w = _rhs(rho + 0.5 * dt * k2r, w + 0.5 * dt * k2w, t + 0.5 * dt, eps, mu, om, wl)
    k4r, k4w = _rhs(rho + dt * k3r, w + dt * k3w, t + dt, eps, mu, om, wl)
    return (rho + dt / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r),
            w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w))


def mtef_step(traj: MtefTrajectory, model: ModelSpec, dt: float) -> MtefTrajectory:
    """One RK4 step of the coupled (rho, field) flow for a single trajectory."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    om = model.cavity.omega
    wl = om * model.cavity.lam
    w = ensemble.rotating_from_qp(traj.field.Q, traj.field.P, om)[None, :]
    rho, w = _rk4(traj.rho[None, :, :], w, 0.0, dt,
                  model.atom.energies, model.atom.dipole, om, wl)
    Q, P = ensemble.qp_from_rotating(w[0], om, dt)
    return MtefTrajectory(rho=rho[0], field=FieldSample(Q=Q, P=P),
                          time=traj.time + dt)


def mean_field_energy(traj: MtefTrajectory, model: ModelSpec) -> float:
    """Conserved mean-field energy of one trajectory."""
    om, lam = model.cavity.omega, model.cavity.lam
    Q, P = traj.field.Q, traj.field.P
    g = float(np.dot(om * lam, Q))
    mu_exp = np.trace(traj.rho @ model.atom.dipole).real
    e_atom = float(np.dot(np.diagonal(traj.rho).real, model.atom.energies))
    return e_atom + 0.5 * float(np.sum(P * P + om * om * Q * Q)) + g * mu_exp


def _batch_worker(args, lo, hi):
    model, dt, n_steps, snap_order, seed, r_grid = args
    om = model.cavity.omega
    wl = om * model.cavity.lam
    eps, mu = model.atom.energies, model.atom.dipole
    K, M, B = model.n_levels, model.n_modes, hi - lo
    eT, vac = ensemble.snapshot_intensity_kernel(model, r_grid)

    policy = SeedPolicy(seed)
    Q = np.empty((B, M))
    P = np.empty((B, M))
    for j, ti in enumerate(range(lo, hi)):
        fs = sample_vacuum(model, policy.stream(ti))
        Q[j], P[j] = fs.Q, fs.P
    w = om * Q + 1j * P
    rho = np.zeros((B, K, K), dtype=complex)
    rho[:, model.atom.initial_level, model.atom.initial_level] = 1.0

    totals = ensemble.new_totals(n_steps + 1, K, len(snap_order), len(vac))
    snap_row = {idx: row for row, idx in enumerate(snap_order)}

    def record(i, t):
        pops = np.einsum('bkk->bk', rho).real
        totals["pop_sum"][i] += pops.sum(axis=0)
        totals["pop_sumsq"][i] += (pops * pops).sum(axis=0)
        if i in snap_row:
            Qt = (w * np.exp(-1j * om * t)).real / om
            sample = (Qt @ eT) ** 2 - vac[None, :]
            totals["i_sum"][snap_row[i]] += sample.sum(axis=0)
            totals["i_sumsq"][snap_row[i]] += (sample * sample).sum(axis=0)

    record(0, 0.0)
    for i in range(1, n_steps + 1):
        rho, w = _rk4(rho, w, (i - 1) * dt, dt, eps, mu, om, wl)
        record(i, i * dt)
    return totals


def run_mtef(model: ModelSpec, n_traj: int, dt: float, t_final: float,
             snapshot_times=(), r_grid=None, seed: int = 0,
             workers: int = 1) -> ObservableSeries:
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    r_grid = ensemble.default_r_grid(model, r_grid)
    n_steps, times, snap_idx = ensemble.time_grid(dt, t_final, snapshot_times)
    snap_order = sorted(snap_idx)
    args = (model, dt, n_steps, snap_order, seed, r_grid)
    totals = ensemble.run_batches(_batch_worker, args, n_traj, workers,
                                  ensemble.DEFAULT_BATCH_SIZE)
    manifest = {"method": "mtef", "dt": dt, "master_seed": seed}
    return ensemble.assemble_series(model, times, totals, n_traj, snap_idx,
                                    r_grid, manifest)

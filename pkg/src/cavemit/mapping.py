"""Mapping-variable semiclassical dynamics: fully linearized (LSC/PBME) and
forward-backward (FBTS) trajectories over one shared mapping-Hamiltonian core.

Each matter state k is replaced by a harmonic mapping oscillator (r_k, p_k);
the mapping Hamiltonian used here carries the conventional 1/2 on the
bilinear,

    H_m = 1/2 sum_a (P_a^2 + omega_a^2 Q_a^2)
        + 1/2 sum_kl h_kl(Q) (r_k r_l + p_k p_l - delta_kl),
    h(Q) = diag(eps) + (sum_a omega_a lam_a Q_a) mu,

which reproduces correct single-mode Rabi frequencies (``half_bilinear=False``
gives the literal unhalved form for comparison).  FBTS doubles the mapping
variables and moves the field under the average of the forward and backward
mapping Hamiltonians.  Internally the mapping pair is propagated as the
complex amplitude z_k = r_k + i p_k, for which the Hamilton equations reduce
to dz/dt = -i h(Q(t)) z, and in the frame rotating with the diagonal of h so
that only the field coupling is integrated numerically (the populations,
weights, and forward-backward estimators are invariant under that frame).

LSC initial conditions: every oscillator is drawn from the ground-state
Gaussian and the occupied one is reweighted onto the first excited Wigner
function with the polynomial factor 2(r^2 + p^2) - 1.  FBTS draws forward and
backward Gaussians independently with the complex occupation weight
(r + ip)(r' - ip'); time-t estimators use the conjugate pairing that makes
the t = 0 moments reproduce the initial density matrix exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ensemble
from .errors import NumericalGuardError
from .model import ModelSpec
from .observables import ObservableSeries
from .sampling import FieldSample, SeedPolicy, sample_mapping_gaussian, sample_vacuum

DIVERGENCE_BOUND = 1.0e3


@dataclass
class MappingState:
    r: np.ndarray                       # (K,) forward mapping coordinates
    p: np.ndarray
    field: FieldSample
    weight: complex = 1.0
    r_back: Optional[np.ndarray] = None  # FBTS backward copies
    p_back: Optional[np.ndarray] = None
    time: float = 0.0


def mapping_hamiltonian(model: ModelSpec, Q: np.ndarray, r: np.ndarray,
                        p: np.ndarray, half_bilinear: bool = True) -> float:
    """Mapping (subsystem) part of H_m at frozen field displacements Q.

    Returns pref * sum_kl h_kl(Q) (r_k r_l + p_k p_l - delta_kl); the field
    kinetic/potential energy is added by the caller.
    """
    om, lam = model.cavity.omega, model.cavity.lam
    g = float(np.dot(om * lam, np.asarray(Q, dtype=float)))
    h = np.diag(model.atom.energies) + g * model.atom.dipole
    pref = 0.5 if half_bilinear else 1.0
    return pref * float(r @ h @ r + p @ h @ p - np.trace(h))


def _coupling_frame(mu, eps, t):
    # mu in the frame rotating with the (shifted) level energies:
    # mu~_kl = mu_kl exp(i (eps_k - eps_l) t); transposed for right-multiplication
    return (mu * np.exp(1j * (eps[:, None] - eps[None, :]) * t)).T


def _lsc_rhs(z, w, t, eps, mu, om, wl, pref2, shift):
    # z holds e^{+i eps_eff t} (r + ip): free mapping rotation handled exactly
    phase = np.exp(-1j * om * t)
    Q = (w * phase).real / om
    g = Q @ wl
    zmu = z @ _coupling_frame(mu, eps - shift, t * pref2)
    dz = (-1j * pref2) * g[:, None] * zmu
    mu_quad = (z.conj() * zmu).sum(axis=1).real
    dw = (-1j) * wl * (0.5 * pref2 * mu_quad)[:, None] * np.conj(phase)
    return dz, dw


def _fbts_rhs(zf, zb, w, t, eps, mu, om, wl, pref2):
    phase = np.exp(-1j * om * t)
    Q = (w * phase).real / om
    g = Q @ wl
    mu_t = _coupling_frame(mu, eps, t * pref2)
    zfmu = zf @ mu_t
    zbmu = zb @ mu_t
    dzf = (-1j * pref2) * g[:, None] * zfmu
    dzb = (-1j * pref2) * g[:, None] * zbmu
    quad = ((zf.conj() * zfmu).sum(axis=1) + (zb.conj() * zbmu).sum(axis=1)).real
    dw = (-1j) * wl * (0.25 * pref2 * quad)[:, None] * np.conj(phase)
    return dzf, dzb, dw


def _rk4(rhs, state, t, dt, *args):
    k1 = rhs(*state, t, *args)
    k2 = rhs(*(y + 0.5 * dt * k for y, k in zip(state, k1)), t + 0.5 * dt, *args)
    k3 = rhs(*(y + 0.5 * dt * k for y, k in zip(state, k2)), t + 0.5 * dt, *args)
    k4 = rhs(*(y + dt * k for y, k in zip(state, k3)), t + dt, *args)
    return tuple(y + dt / 6.0 * (a + 2 * b + 2 * c + d)
                 for y, a, b, c, d in zip(state, k1, k2, k3, k4))


def lsc_step(state: MappingState, model: ModelSpec, dt: float,
             half_bilinear: bool = True, trace_stabilize: bool = False,
             divergence_bound: float = DIVERGENCE_BOUND) -> MappingState:
    """One RK4 step of the LSC Hamilton equations for a single trajectory."""
    om = model.cavity.omega
    wl = om * model.cavity.lam
    eps, mu = model.atom.energies, model.atom.dipole
    pref2 = 1.0 if half_bilinear else 2.0
    shift = float(eps.sum()) / model.n_levels if trace_stabilize else 0.0
    w = ensemble.rotating_from_qp(state.field.Q, state.field.P, om)[None, :]
    z = (state.r + 1j * state.p)[None, :]
    z, w = _rk4(_lsc_rhs, (z, w), 0.0, dt, eps, mu, om, wl, pref2, shift)
    z = z * np.exp(-1j * pref2 * (eps - shift) * dt)   # back to the lab frame
    radius = float((z.real ** 2 + z.imag ** 2).sum())
    if radius > divergence_bound:
        raise NumericalGuardError(f"mapping radius {radius:.3g} exceeds bound")
    Q, P = ensemble.qp_from_rotating(w[0], om, dt)
    return MappingState(r=z[0].real, p=z[0].imag, field=FieldSample(Q=Q, P=P),
                        weight=state.weight, time=state.time + dt)


def fbts_step(state: MappingState, model: ModelSpec, dt: float,
              half_bilinear: bool = True,
              divergence_bound: float = DIVERGENCE_BOUND) -> MappingState:
    """One RK4 step of the six FBTS Hamilton equations for a single trajectory."""
    om = model.cavity.omega
    wl = om * model.cavity.lam
    eps, mu = model.atom.energies, model.atom.dipole
    pref2 = 1.0 if half_bilinear else 2.0
    w = ensemble.rotating_from_qp(state.field.Q, state.field.P, om)[None, :]
    zf = (state.r + 1j * state.p)[None, :]
    zb = (state.r_back + 1j * state.p_back)[None, :]
    zf, zb, w = _rk4(_fbts_rhs, (zf, zb, w), 0.0, dt, eps, mu, om, wl, pref2)
    back = np.exp(-1j * pref2 * eps * dt)              # back to the lab frame
    zf = zf * back
    zb = zb * back
    radius = float((np.abs(zf) ** 2 + np.abs(zb) ** 2).sum())
    if radius > divergence_bound:
        raise NumericalGuardError(f"mapping radius {radius:.3g} exceeds bound")
    Q, P = ensemble.qp_from_rotating(w[0], om, dt)
    return MappingState(r=zf[0].real, p=zf[0].imag, r_back=zb[0].real,
                        p_back=zb[0].imag, field=FieldSample(Q=Q, P=P),
                        weight=state.weight, time=state.time + dt)


def lsc_energy(state: MappingState, model: ModelSpec,
               half_bilinear: bool = True) -> float:
    """Conserved H_m of one LSC trajectory (field part included)."""
    om = model.cavity.omega
    Q, P = state.field.Q, state.field.P
    field = 0.5 * float(np.sum(P * P + om * om * Q * Q))
    return field + mapping_hamiltonian(model, Q, state.r, state.p, half_bilinear)


def fbts_energy(state: MappingState, model: ModelSpec,
                half_bilinear: bool = True) -> float:
    """Conserved H_e = (H_m(x) + H_m(x')) / 2 of one FBTS trajectory."""
    om = model.cavity.omega
    Q, P = state.field.Q, state.field.P
    field = 0.5 * float(np.sum(P * P + om * om * Q * Q))
    hf = mapping_hamiltonian(model, Q, state.r, state.p, half_bilinear)
    hb = mapping_hamiltonian(model, Q, state.r_back, state.p_back, half_bilinear)
    return field + 0.5 * (hf + hb)


def _propagate_lsc(args, lo, hi, record_mask=None):
    model, dt, n_steps, snap_order, seed, pref2, shift, bound, r_grid = args
    om = model.cavity.omega
    wl = om * model.cavity.lam
    eps, mu = model.atom.energies, model.atom.dipole
    K, M, B = model.n_levels, model.n_modes, hi - lo
    occ = model.atom.initial_level
    eT, vac = ensemble.snapshot_intensity_kernel(model, r_grid)

    policy = SeedPolicy(seed)
    Q = np.empty((B, M)); P = np.empty((B, M))
    z = np.empty((B, K), dtype=complex)
    for j, ti in enumerate(range(lo, hi)):
        s = policy.stream(ti)
        fs = sample_vacuum(model, s)
        Q[j], P[j] = fs.Q, fs.P
        r, p = sample_mapping_gaussian(K, s)
        z[j] = r + 1j * p
    w = om * Q + 1j * P
    weight = 2.0 * np.abs(z[:, occ]) ** 2 - 1.0
    mask = np.ones(B, dtype=bool) if record_mask is None else record_mask

    totals = ensemble.new_totals(n_steps + 1, K, len(snap_order), len(vac))
    snap_row = {idx: row for row, idx in enumerate(snap_order)}
    diverged = np.zeros(B, dtype=bool)

    def record(i, t):
        pops = (weight[:, None] * 0.5 * (z.real ** 2 + z.imag ** 2 - 1.0))[mask]
        totals["pop_sum"][i] += pops.sum(axis=0)
        totals["pop_sumsq"][i] += (pops * pops).sum(axis=0)
        if i in snap_row:
            Qt = (w * np.exp(-1j * om * t)).real / om
            sample = (weight[:, None] * ((Qt @ eT) ** 2 - vac[None, :]))[mask]
            totals["i_sum"][snap_row[i]] += sample.sum(axis=0)
            totals["i_sumsq"][snap_row[i]] += (sample * sample).sum(axis=0)

    record(0, 0.0)
    for i in range(1, n_steps + 1):
        z, w = _rk4(_lsc_rhs, (z, w), (i - 1) * dt, dt, eps, mu, om, wl,
                    pref2, shift)
        diverged |= (z.real ** 2 + z.imag ** 2).sum(axis=1) > bound
        record(i, i * dt)
    totals["rejected"] = float(diverged.sum()) if record_mask is None else 0.0
    return totals, diverged


def _lsc_worker(args, lo, hi):
    totals, diverged = _propagate_lsc(args, lo, hi)
    if diverged.any():
        rejected = totals["rejected"]
        totals, _ = _propagate_lsc(args, lo, hi, record_mask=~diverged)
        totals["rejected"] = rejected
    return totals


def _propagate_fbts(args, lo, hi, record_mask=None):
    model, dt, n_steps, snap_order, seed, pref2, bound, r_grid = args
    om = model.cavity.omega
    wl = om * model.cavity.lam
    eps, mu = model.atom.energies, model.atom.dipole
    K, M, B = model.n_levels, model.n_modes, hi - lo
    occ = model.atom.initial_level
    eT, vac = ensemble.snapshot_intensity_kernel(model, r_grid)

    policy = SeedPolicy(seed)
    Q = np.empty((B, M)); P = np.empty((B, M))
    zf = np.empty((B, K), dtype=complex)
    zb = np.empty((B, K), dtype=complex)
    for j, ti in enumerate(range(lo, hi)):
        s = policy.stream(ti)
        fs = sample_vacuum(model, s)
        Q[j], P[j] = fs.Q, fs.P
        r, p = sample_mapping_gaussian(K, s)
        zf[j] = r + 1j * p
        rb, pb = sample_mapping_gaussian(K, s)
        zb[j] = rb + 1j * pb
    w = om * Q + 1j * P
    weight = zf[:, occ] * zb[:, occ].conj()
    mask = np.ones(B, dtype=bool) if record_mask is None else record_mask

    totals = ensemble.new_totals(n_steps + 1, K, len(snap_order), len(vac))
    snap_row = {idx: row for row, idx in enumerate(snap_order)}
    diverged = np.zeros(B, dtype=bool)

    def record(i, t):
        pops = (weight[:, None] * zf.conj() * zb).real[mask]
        totals["pop_sum"][i] += pops.sum(axis=0)
        totals["pop_sumsq"][i] += (pops * pops).sum(axis=0)
        if i in snap_row:
            Qt = (w * np.exp(-1j * om * t)).real / om
            unit = (weight * (zf.conj() * zb).sum(axis=1)).real
            sample = (unit[:, None] * ((Qt @ eT) ** 2 - vac[None, :]))[mask]
            totals["i_sum"][snap_row[i]] += sample.sum(axis=0)
            totals["i_sumsq"][snap_row[i]] += (sample * sample).sum(axis=0)

    record(0, 0.0)
    for i in range(1, n_steps + 1):
        zf, zb, w = _rk4(_fbts_rhs, (zf, zb, w), (i - 1) * dt, dt,
                         eps, mu, om, wl, pref2)
        diverged |= (np.abs(zf) ** 2 + np.abs(zb) ** 2).sum(axis=1) > bound
        record(i, i * dt)
    totals["rejected"] = float(diverged.sum()) if record_mask is None else 0.0
    return totals, diverged


def _fbts_worker(args, lo, hi):
    totals, diverged = _propagate_fbts(args, lo, hi)
    if diverged.any():
        rejected = totals["rejected"]
        totals, _ = _propagate_fbts(args, lo, hi, record_mask=~diverged)
        totals["rejected"] = rejected
    return totals


def run_lsc(model: ModelSpec, n_traj: int, dt: float, t_final: float,
            snapshot_times=(), r_grid=None, seed: int = 0, workers: int = 1,
            half_bilinear: bool = True, trace_stabilize: bool = False,
            divergence_bound: float = DIVERGENCE_BOUND) -> ObservableSeries:
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    r_grid = ensemble.default_r_grid(model, r_grid)
    n_steps, times, snap_idx = ensemble.time_grid(dt, t_final, snapshot_times)
    eps = model.atom.energies
    shift = float(eps.sum()) / model.n_levels if trace_stabilize else 0.0
    pref2 = 1.0 if half_bilinear else 2.0
    args = (model, dt, n_steps, sorted(snap_idx), seed, pref2, shift,
            divergence_bound, r_grid)
    totals = ensemble.run_batches(_lsc_worker, args, n_traj, workers,
                                  ensemble.DEFAULT_BATCH_SIZE)
    rejected = int(totals.pop("rejected", 0.0))
    manifest = {"method": "lsc", "dt": dt, "master_seed": seed,
                "rejected_trajectories": rejected,
                "rejected_fraction": rejected / n_traj}
    n_eff = n_traj - rejected
    return ensemble.assemble_series(model, times, totals, max(n_eff, 1), snap_idx,
                                    r_grid, manifest)


def run_fbts(model: ModelSpec, n_traj: int, dt: float, t_final: float,
             snapshot_times=(), r_grid=None, seed: int = 0, workers: int = 1,
             half_bilinear: bool = True,
             divergence_bound: float = DIVERGENCE_BOUND) -> ObservableSeries:
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    r_grid = ensemble.default_r_grid(model, r_grid)
    n_steps, times, snap_idx = ensemble.time_grid(dt, t_final, snapshot_times)
    pref2 = 1.0 if half_bilinear else 2.0
    args = (model, dt, n_steps, sorted(snap_idx), seed, pref2, divergence_bound,
            r_grid)
    totals = ensemble.run_batches(_fbts_worker, args, n_traj, workers,
                                  ensemble.DEFAULT_BATCH_SIZE)
    rejected = int(totals.pop("rejected", 0.0))
    manifest = {"method": "fbts", "dt": dt, "master_seed": seed,
                "rejected_trajectories": rejected,
                "rejected_fraction": rejected / n_traj}
    n_eff = n_traj - rejected
    return ensemble.assemble_series(model, times, totals, max(n_eff, 1), snap_idx,
                                    r_grid, manifest)

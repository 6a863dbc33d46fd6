"""Fewest-switches surface hopping for the field-coupled few-level atom.

The field moves classically on one adiabatic surface of the displacement-
dependent matter Hamiltonian h(Q) = diag(eps) + (sum_a omega_a lam_a Q_a) mu;
the coefficient density matrix evolves with the adiabatic energies and the
nonadiabatic coupling

    d_ij,a = omega_a lam_a <phi_i| mu |phi_j> / (E_j - E_i),    i != j,

which factorizes into a fixed mode direction (omega_a lam_a) times a scalar.
Hops from the active surface are drawn from the standard fewest-switches flux

    g_(a->j) = max(0, 2 Re(rho_aj (P . d_aj)) dt / rho_aa),

accepted hops rescale the momentum along d to conserve total energy, and
frustrated hops leave the momentum unchanged.  Populations are reported as
the diabatic composition of the active surface.  Eigenvector signs follow the
previous step (overlap alignment); the two-level eigenproblem is evaluated in
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import ensemble
from .errors import DegenerateGeometryError, NumericalGuardError
from .model import ModelSpec, electronic_hamiltonian
from .observables import ObservableSeries
from .sampling import FieldSample, SeedPolicy, sample_vacuum

DEGENERACY_TOL = 1e-12


@dataclass
class FsshTrajectory:
    rho: np.ndarray             # (K, K) complex, adiabatic basis
    active: int
    field: FieldSample
    evecs: np.ndarray           # (K, K) reference eigenvectors (columns)
    time: float = 0.0
    hop_log: dict = dc_field(default_factory=lambda: {
        "attempted": 0, "accepted": 0, "frustrated": 0})


def adiabatic_states(model: ModelSpec, Q: np.ndarray):
    """Eigenvalues, sign-fixed eigenvectors, and the nonadiabatic coupling tensor.

    Returns (E, V, nac) with nac[i, j, a] = d_ij,a; the identity (field
    potential) part of dH/dQ contributes nothing off-diagonally.
    """
    H = electronic_hamiltonian(model, Q)
    E, V = np.linalg.eigh(H)
    if np.any(np.abs(np.diff(E)) < DEGENERACY_TOL):
        raise DegenerateGeometryError("adiabatic surfaces degenerate")
    # deterministic phase: largest-magnitude component positive
    for i in range(V.shape[1]):
        k = np.argmax(np.abs(V[:, i]))
        if V[k, i] < 0:
            V[:, i] = -V[:, i]
    mu_ad = V.T @ model.atom.dipole @ V
    den = E[None, :] - E[:, None]
    scal = np.zeros_like(mu_ad)
    off = ~np.eye(len(E), dtype=bool)
    scal[off] = mu_ad[off] / den[off]
    wl = model.cavity.omega * model.cavity.lam
    nac = scal[:, :, None] * wl[None, None, :]
    return E, V, nac


class _Adiabatic2:
    """Closed-form eigenframe of stacked 2x2 matter Hamiltonians.

    Column convention: v2 = (vx, vy) for the upper surface, v1 = (-vy, vx);
    a single continuity sign per trajectory keeps the frame smooth.
    """

    __slots__ = ("E", "vx", "vy", "mu01")

    def __init__(self, eps, mu, g, ref=None):
        h11 = eps[0]
        h22 = eps[1]
        m = mu[0, 1]
        mid = 0.5 * (h11 + h22) * np.ones_like(g)
        d = 0.5 * (h11 - h22) * np.ones_like(g)
        h12 = m * g
        rad = np.hypot(d, h12)
        if np.any(rad < DEGENERACY_TOL):
            raise DegenerateGeometryError("adiabatic surfaces degenerate")
        pos = d >= 0
        vx = np.where(pos, rad + d, h12)
        vy = np.where(pos, h12, rad - d)
        nrm = np.hypot(vx, vy)
        vx = vx / nrm
        vy = vy / nrm
        if ref is not None:
            s = np.where(vx * ref.vx + vy * ref.vy < 0, -1.0, 1.0)
            vx = s * vx
            vy = s * vy
        self.E = np.stack([mid - rad, mid + rad], axis=-1)
        self.vx, self.vy = vx, vy
        self.mu01 = m

    def mu_diag(self, active):
        # <a| mu |a> = -+ 2 m vx vy on the lower/upper surface
        base = 2.0 * self.mu01 * self.vx * self.vy
        return np.where(active == 0, -base, base)

    def mu_offdiag(self):
        # <1| mu |2> in the aligned frame
        return self.mu01 * (self.vx * self.vx - self.vy * self.vy)

    def nac_scal(self):
        # d_12 scalar part = mu_12 / (E_2 - E_1); d_21 = -d_12
        return self.mu_offdiag() / (self.E[:, 1] - self.E[:, 0])

    def pops(self, active):
        # diabatic composition of the active column
        lo = np.stack([self.vy * self.vy, self.vx * self.vx], axis=-1)
        hi = np.stack([self.vx * self.vx, self.vy * self.vy], axis=-1)
        return np.where((active == 0)[:, None], lo, hi)

    def matrix(self):
        V = np.empty(self.vx.shape + (2, 2))
        V[..., 0, 1] = self.vx
        V[..., 1, 1] = self.vy
        V[..., 0, 0] = -self.vy
        V[..., 1, 0] = self.vx
        return V


def _rhs2(rho, w, t, active, ref, eps, mu, om, wl):
    phase = np.exp(-1j * om * t)
    z = w * phase
    Q = z.real / om
    P = z.imag
    g = Q @ wl
    ad = _Adiabatic2(eps, mu, g, ref)
    p_eff = P @ wl
    Dv = p_eff * ad.nac_scal()                     # D = [[0, Dv], [-Dv, 0]]
    e01 = ad.E[:, 0] - ad.E[:, 1]
    r00, r01 = rho[:, 0, 0], rho[:, 0, 1]
    r10, r11 = rho[:, 1, 0], rho[:, 1, 1]
    drho = np.empty_like(rho)
    drho[:, 0, 0] = -Dv * (r10 + r01)
    drho[:, 0, 1] = -1j * e01 * r01 - Dv * (r11 - r00)
    drho[:, 1, 0] = 1j * e01 * r10 - Dv * (r11 - r00)
    drho[:, 1, 1] = Dv * (r01 + r10)
    force = ad.mu_diag(active)
    dw = (-1j) * wl * force[:, None] * np.conj(phase)
    return drho, dw


def _rk4(rho, w, t, dt, active, ref, eps, mu, om, wl):
    k1r, k1w = _rhs2(rho, w, t, active, ref, eps, mu, om, wl)
    k2r, k2w = _rhs2(rho + 0.5 * dt * k1r, w + 0.5 * dt * k1w, t + 0.5 * dt,
                     active, ref, eps, mu, om, wl)
    k3r, k3w = _rhs2(rho + 0.5 * dt * k2r, w + 0.5 * dt * k2w, t + 0.5 * dt,
                     active, ref, eps, mu, om, wl)
    k4r, k4w = _rhs2(rho + dt * k3r, w + dt * k3w, t + dt,
                     active, ref, eps, mu, om, wl)
    return (rho + dt / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r),
            w + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w))


def _hop_update(rho, w, t, active, ad, uniforms, om, wl, dt, counters, rescale):
    """Draw fewest-switches hops and apply momentum rescaling (2-level)."""
    B = rho.shape[0]
    idx = np.arange(B)
    phase = np.exp(-1j * om * t)
    z = w * phase
    P = z.imag
    p_eff = P @ wl
    Dv = p_eff * ad.nac_scal()
    rho_aa = np.maximum(rho[idx, active, active].real, 1e-300)
    other = 1 - active
    rho_ao = rho[idx, active, other]
    # P . d_(a -> other): d_01 = +nac_scal, d_10 = -nac_scal
    pd = np.where(active == 0, Dv, -Dv)
    raw = 2.0 * rho_ao.real * pd * dt / rho_aa
    if np.any(raw > 1.0 + 1e-12):
        raise NumericalGuardError("summed hop probability exceeds 1; reduce dt")
    prob = np.clip(raw, 0.0, 1.0)
    attempt = uniforms < prob
    counters["attempted"] += int(attempt.sum())
    wl_norm = np.linalg.norm(wl)
    if not attempt.any() or wl_norm == 0.0:
        return w, active
    u_dir = wl / wl_norm
    dE = ad.E[idx, other] - ad.E[idx, active]
    if rescale == "direction":
        Pu = P @ u_dir
        disc = Pu * Pu - 2.0 * dE
        ok = attempt & (disc >= 0.0)
        sgn = np.where(Pu >= 0.0, 1.0, -1.0)
        Pu_new = sgn * np.sqrt(np.maximum(disc, 0.0))
        P_new = P + (Pu_new - Pu)[:, None] * u_dir[None, :]
    elif rescale == "uniform":
        kin = 0.5 * (P * P).sum(axis=1)
        scale2 = 1.0 - dE / np.maximum(kin, 1e-300)
        ok = attempt & (scale2 >= 0.0)
        P_new = np.sqrt(np.maximum(scale2, 0.0))[:, None] * P
    else:
        raise ValueError(f"unknown rescale mode {rescale!r}")
    counters["accepted"] += int(ok.sum())
    counters["frustrated"] += int((attempt & ~ok).sum())
    if ok.any():
        active = np.where(ok, other, active)
        P_out = np.where(ok[:, None], P_new, P)
        Q = z.real / om
        w = (om * Q + 1j * P_out) * np.conj(phase)
    return w, active


def fssh_step(traj: FsshTrajectory, model: ModelSpec, dt: float,
              stream: np.random.Generator,
              rescale: str = "direction") -> FsshTrajectory:
    """One RK4 step plus a stochastic hop attempt for a single trajectory."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if model.n_levels != 2:
        raise NotImplementedError("surface hopping is implemented for 2 levels")
    om = model.cavity.omega
    wl = om * model.cavity.lam
    eps, mu = model.atom.energies, model.atom.dipole
    w = ensemble.rotating_from_qp(traj.field.Q, traj.field.P, om)[None, :]
    active = np.array([traj.active])
    ref = _ref_from_matrix(traj.evecs)
    rho, w = _rk4(traj.rho[None, :, :], w, 0.0, dt, active, ref, eps, mu, om, wl)
    g = ((w * np.exp(-1j * om * dt)).real / om) @ wl
    ad = _Adiabatic2(eps, mu, g, ref)
    counters = dict(traj.hop_log)
    u = np.array([stream.random()])
    w, active = _hop_update(rho, w, dt, active, ad, u, om, wl, dt,
                            counters, rescale)
    Qf, Pf = ensemble.qp_from_rotating(w[0], om, dt)
    return FsshTrajectory(rho=rho[0], active=int(active[0]),
                          field=FieldSample(Q=Qf, P=Pf), evecs=ad.matrix()[0],
                          time=traj.time + dt, hop_log=counters)


class _Ref:
    __slots__ = ("vx", "vy")

    def __init__(self, vx, vy):
        self.vx, self.vy = vx, vy


def _ref_from_matrix(V):
    V = np.asarray(V)
    if V.ndim == 2:
        V = V[None, :, :]
    return _Ref(vx=V[:, 0, 1], vy=V[:, 1, 1])


def initial_trajectory(model: ModelSpec, field: FieldSample) -> FsshTrajectory:
    """Adiabatic initial condition with maximal overlap on the initial diabatic level."""
    if model.n_levels != 2:
        raise NotImplementedError("surface hopping is implemented for 2 levels")
    wl = model.cavity.omega * model.cavity.lam
    g = np.array([float(wl @ field.Q)])
    ad = _Adiabatic2(model.atom.energies, model.atom.dipole, g)
    k0 = model.atom.initial_level
    comp = ad.vx if k0 == 0 else ad.vy
    s0 = np.where(comp < 0, -1.0, 1.0)
    ad.vx, ad.vy = s0 * ad.vx, s0 * ad.vy
    V = ad.matrix()[0]
    active = int(np.argmax(np.abs(V[k0, :])))
    rho = np.outer(V[k0, :], V[k0, :]).astype(complex)
    return FsshTrajectory(rho=rho, active=active, field=field, evecs=V)


def surface_energy(traj: FsshTrajectory, model: ModelSpec) -> float:
    """Active-surface electronic energy plus field kinetic energy."""
    E, _, _ = adiabatic_states(model, traj.field.Q)
    return float(E[traj.active]) + 0.5 * float(np.sum(traj.field.P ** 2))


def _batch_worker(args, lo, hi):
    model, dt, n_steps, snap_order, seed, rescale, r_grid = args
    om = model.cavity.omega
    wl = om * model.cavity.lam
    eps, mu = model.atom.energies, model.atom.dipole
    K, M, B = model.n_levels, model.n_modes, hi - lo
    k0 = model.atom.initial_level
    eT, vac = ensemble.snapshot_intensity_kernel(model, r_grid)

    policy = SeedPolicy(seed)
    Q = np.empty((B, M))
    P = np.empty((B, M))
    uniforms = np.empty((B, n_steps))
    for j, ti in enumerate(range(lo, hi)):
        s = policy.stream(ti)
        fs = sample_vacuum(model, s)
        Q[j], P[j] = fs.Q, fs.P
        uniforms[j] = s.random(n_steps)
    w = om * Q + 1j * P

    ad = _Adiabatic2(eps, mu, Q @ wl)
    # initial frame phase: component on the initial level positive
    comp = np.where(k0 == 0, ad.vx, ad.vy)
    s0 = np.where(comp < 0, -1.0, 1.0)
    ad.vx, ad.vy = s0 * ad.vx, s0 * ad.vy
    # occupy the surface with maximal overlap on |k0>
    ov_hi = np.where(k0 == 0, ad.vx, ad.vy) ** 2
    active = np.where(ov_hi >= 0.5, 1, 0)
    amp = ad.matrix()[:, k0, :]
    rho = (amp[:, :, None] * amp[:, None, :]).astype(complex)

    totals = ensemble.new_totals(n_steps + 1, K, len(snap_order), len(vac))
    snap_row = {idxx: row for row, idxx in enumerate(snap_order)}
    counters = {"attempted": 0, "accepted": 0, "frustrated": 0}

    def record(i, t, ad_now):
        pops = ad_now.pops(active)
        totals["pop_sum"][i] += pops.sum(axis=0)
        totals["pop_sumsq"][i] += (pops * pops).sum(axis=0)
        if i in snap_row:
            Qt = (w * np.exp(-1j * om * t)).real / om
            sample = (Qt @ eT) ** 2 - vac[None, :]
            totals["i_sum"][snap_row[i]] += sample.sum(axis=0)
            totals["i_sumsq"][snap_row[i]] += (sample * sample).sum(axis=0)

    record(0, 0.0, ad)
    ref = ad
    for i in range(1, n_steps + 1):
        t_now = i * dt
        rho, w = _rk4(rho, w, (i - 1) * dt, dt, active, ref, eps, mu, om, wl)
        g = ((w * np.exp(-1j * om * t_now)).real / om) @ wl
        ad = _Adiabatic2(eps, mu, g, ref)
        w, active = _hop_update(rho, w, t_now, active, ad, uniforms[:, i - 1],
                                om, wl, dt, counters, rescale)
        ref = ad
        record(i, t_now, ad)
    for key, val in counters.items():
        totals["hops_" + key] = float(val)
    return totals


def run_fssh(model: ModelSpec, n_traj: int, dt: float, t_final: float,
             snapshot_times=(), r_grid=None, seed: int = 0, workers: int = 1,
             rescale: str = "direction") -> ObservableSeries:
    if n_traj < 1:
        raise ValueError("n_traj must be at least 1")
    if model.n_levels != 2:
        raise NotImplementedError("surface hopping is implemented for 2 levels")
    r_grid = ensemble.default_r_grid(model, r_grid)
    n_steps, times, snap_idx = ensemble.time_grid(dt, t_final, snapshot_times)
    args = (model, dt, n_steps, sorted(snap_idx), seed, rescale, r_grid)
    totals = ensemble.run_batches(_batch_worker, args, n_traj, workers,
                                  batch_size=1024)
    manifest = {"method": "fssh", "dt": dt, "master_seed": seed,
                "rescale": rescale}
    for key in ("hops_attempted", "hops_accepted", "hops_frustrated"):
        manifest[key] = int(totals.pop(key, 0.0))
    return ensemble.assemble_series(model, times, totals, n_traj, snap_idx,
                                    r_grid, manifest)

"""Second Born (doublet) truncation of the quantum BBGKY hierarchy, 2-level atom.

The Pauli-form Hamiltonian is

    H = -(de/2) sigma_z + 1/2 sum_a (P_a^2 + omega_a^2 Q_a^2) + E(r_A) sigma_x,
    E(r_A) = sum_a lam_eff_a Q_a,      lam_eff_a = omega_a lam_a mu_12,

and the closed equation set evolves the spin means sigma, the field means X,
the spin-field correlation vectors Lam_x/y/z, and the symmetric field
covariance Lam.  The equations are the Heisenberg hierarchy with third
cumulants dropped and all operator products read symmetrized; in that reading
the spin-product sources are real:

    dLam_x = free + de Lam_y                      - lam_eff (1 - sx^2)   [P rows]
    dLam_y = free - de Lam_x - 2E Lam_z - 2 sz G  + lam_eff sx sy        [P rows]
    dLam_z = free          + 2E Lam_y + 2 sy G    + lam_eff sx sz        [P rows]
    dLam   = (J Om Lam) + (J Om Lam)^T - (ltil Lam_x^T + Lam_x ltil^T)

with G = Lam[:, Q-block] lam_eff and ltil the lam_eff vector embedded in the
P block.  The covariance derivative is assembled as S + S^T, so symmetry is
exact in floating point.

Sign convention: with de > 0 the ground state is sigma_z = +1, the initially
excited atom is sigma = (0, 0, -1), and p_exc = (1 - sigma_z) / 2.

Finite-size corrections (interpretations, flag-gated):
  efsc -- single-electron subspace: the reconstructed two-electron density
          vanishes for an idempotency-consistent one-body matrix, enforced by
          projecting sigma back onto |sigma| <= 1 after each step.
  pfsc -- single-photon subspace: (a) in the spin-field correlation equations
          the covariance contraction G = Lam . lam_eff is replaced by its
          vacuum (lowest-order) value, so the hierarchy stops feeding on its
          own dynamically generated >= 2-photon covariance content, and
          (b) the excess covariance Lam - Lam_vac is projected onto the
          positive cone after each step (any mixture of at-most-one-photon
          states satisfies Lam >= Lam_vac, so below-vacuum squeezing is
          spurious multi-photon content).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, make_r_grid
from .observables import ObservableSeries, intensity_from_cov

RTOL = 1e-7
ATOL = 1e-9
MAX_HALVINGS = 14


@dataclass
class CorrectionFlags:
    efsc: bool = False
    pfsc: bool = False


@dataclass
class BBGKYState:
    sigma: np.ndarray       # (3,) = (sx, sy, sz)
    X: np.ndarray           # (2M,) field means, Q block then P block
    lam_x: np.ndarray       # (2M,) spin-field correlation vectors
    lam_y: np.ndarray
    lam_z: np.ndarray
    lam: np.ndarray         # (2M, 2M) symmetric field covariance
    time: float = 0.0


def vacuum_state(model: ModelSpec) -> BBGKYState:
    """Initially excited atom, field in vacuum (sigma_z = -1)."""
    _require_two_level(model)
    M = model.n_modes
    om = model.cavity.omega
    cov = np.zeros((2 * M, 2 * M))
    cov[np.arange(M), np.arange(M)] = 0.5 / om
    cov[np.arange(M, 2 * M), np.arange(M, 2 * M)] = 0.5 * om
    return BBGKYState(sigma=np.array([0.0, 0.0, -1.0]), X=np.zeros(2 * M),
                      lam_x=np.zeros(2 * M), lam_y=np.zeros(2 * M),
                      lam_z=np.zeros(2 * M), lam=cov, time=0.0)


def _require_two_level(model: ModelSpec):
    if model.n_levels != 2:
        raise ValueError("the second Born hierarchy is implemented for 2 levels")


def _coeffs(model: ModelSpec):
    om = model.cavity.omega
    lam_eff = om * model.cavity.lam * model.atom.dipole[0, 1]
    de = model.atom.energies[1] - model.atom.energies[0]
    return om, lam_eff, de


def _make_deriv(model: ModelSpec, flags: CorrectionFlags):
    """Flat-vector right-hand side with precomputed coefficients."""
    _require_two_level(model)
    M = model.n_modes
    om, lam_eff, de = _coeffs(model)
    om2 = om * om
    n = 2 * M
    o = {"sig": slice(0, 3), "X": slice(3, 3 + n),
         "lx": slice(3 + n, 3 + 2 * n), "ly": slice(3 + 2 * n, 3 + 3 * n),
         "lz": slice(3 + 3 * n, 3 + 4 * n), "lam": slice(3 + 4 * n, None)}

    g_vac = np.zeros(n)
    g_vac[:M] = 0.5 / om * lam_eff          # vacuum covariance times lam_eff

    def deriv(y: np.ndarray) -> np.ndarray:
        sx, sy, sz = y[0:3]
        X = y[o["X"]]
        Lx = y[o["lx"]]
        Ly = y[o["ly"]]
        Lz = y[o["lz"]]
        Lam = y[o["lam"]].reshape(n, n)
        E = float(lam_eff @ X[:M])
        # pfsc: the spin-field correlations couple to the vacuum covariance
        # only, so the hierarchy stops feeding on its own >= 2-photon content
        G = g_vac if flags.pfsc else Lam[:, :M] @ lam_eff

        out = np.empty_like(y)
        out[0] = de * sy
        out[1] = -de * sx - 2.0 * E * sz - 2.0 * float(lam_eff @ Lz[:M])
        out[2] = 2.0 * E * sy + 2.0 * float(lam_eff @ Ly[:M])

        dX = out[o["X"]]
        dX[:M] = X[M:]
        dX[M:] = -om2 * X[:M] - lam_eff * sx

        src_x = 1.0 - sx * sx
        src_y = sx * sy
        src_z = sx * sz

        dLx = out[o["lx"]]
        dLx[:M] = Lx[M:] + de * Ly[:M]
        dLx[M:] = -om2 * Lx[:M] + de * Ly[M:] - lam_eff * src_x
        dLy = out[o["ly"]]
        dLy[:M] = Ly[M:] - de * Lx[:M] - 2.0 * E * Lz[:M] - 2.0 * sz * G[:M]
        dLy[M:] = (-om2 * Ly[:M] - de * Lx[M:] - 2.0 * E * Lz[M:]
                   - 2.0 * sz * G[M:] + lam_eff * src_y)
        dLz = out[o["lz"]]
        dLz[:M] = Lz[M:] + 2.0 * E * Ly[:M] + 2.0 * sy * G[:M]
        dLz[M:] = (-om2 * Lz[:M] + 2.0 * E * Ly[M:] + 2.0 * sy * G[M:]
                   + lam_eff * src_z)

        dLam = out[o["lam"]].reshape(n, n)
        S = np.empty_like(Lam)
        S[:M] = Lam[M:]
        S[M:] = -om2[:, None] * Lam[:M]
        np.add(S, S.T, out=dLam)
        # coupling source -(ltil Lx^T + Lx ltil^T): blocks QQ = 0,
        # QP = -outer(Lx_Q, lam_eff), PP = -(outer(lam_eff, Lx_P) + transpose)
        lq, lp = Lx[:M], Lx[M:]
        pp = np.outer(lam_eff, lp)
        dLam[M:, M:] -= pp + pp.T
        qp = np.outer(lq, lam_eff)
        dLam[:M, M:] -= qp
        dLam[M:, :M] -= qp.T
        return out

    return deriv


def bbgky_rhs(state: BBGKYState, model: ModelSpec,
              flags: CorrectionFlags = CorrectionFlags()) -> BBGKYState:
    """Full right-hand side; correction substitutions applied before assembly."""
    deriv = _make_deriv(model, flags)
    return _unpack(deriv(_pack(state)), model.n_modes, 0.0)


def _pack(state: BBGKYState) -> np.ndarray:
    return np.concatenate([state.sigma, state.X, state.lam_x, state.lam_y,
                           state.lam_z, state.lam.reshape(-1)])


def _unpack(y: np.ndarray, M: int, t: float) -> BBGKYState:
    n = 2 * M
    parts = np.split(y, [3, 3 + n, 3 + 2 * n, 3 + 3 * n, 3 + 4 * n])
    return BBGKYState(sigma=parts[0], X=parts[1], lam_x=parts[2],
                      lam_y=parts[3], lam_z=parts[4],
                      lam=parts[5].reshape(2 * M, 2 * M), time=t)


def _rk4(y, h, deriv):
    k1 = deriv(y)
    k2 = deriv(y + 0.5 * h * k1)
    k3 = deriv(y + 0.5 * h * k2)
    k4 = deriv(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _advance(y, dt, h, deriv, flags, rtol=RTOL, atol=ATOL):
    """Cover one recording interval with step-doubling error control.

    The working step size h persists across intervals; after each accepted
    substep it is adjusted proportionally (classic err^(-1/5) rule), so the
    controller settles instead of oscillating between rejection and growth.
    """
    remaining = dt
    h_min = dt / 2 ** MAX_HALVINGS
    while remaining > 1e-15 * dt:
        h_try = min(h, remaining)
        while True:
            y_full = _rk4(y, h_try, deriv)
            y_half = _rk4(_rk4(y, 0.5 * h_try, deriv), 0.5 * h_try, deriv)
            scale = atol + rtol * np.abs(y_half)
            err = np.max(np.abs(y_full - y_half) / scale)
            if err <= 1.0 or h_try <= h_min:
                break
            h_try = max(0.5 * h_try, h_min)
        if not np.isfinite(err):
            from .errors import NumericalGuardError
            raise NumericalGuardError("hierarchy propagation diverged")
        y = y_half
        remaining -= h_try
        factor = min(2.0, max(0.3, 0.9 * err ** -0.2)) if err > 0 else 2.0
        h = min(dt, h_try * factor)
    if flags.efsc:
        s = np.linalg.norm(y[:3])
        if s > 1.0:
            y[:3] /= s
    return y, h


def run_bbgky(model: ModelSpec, flags: CorrectionFlags = CorrectionFlags(),
              dt: float = 0.05, t_final: float = 100.0, snapshot_times=(),
              r_grid=None) -> ObservableSeries:
    """Deterministic hierarchy propagation from the excited atom / vacuum field."""
    _require_two_level(model)
    M = model.n_modes
    if r_grid is None:
        r_grid = make_r_grid(model)
    r_grid = np.asarray(r_grid, dtype=float)
    n_steps = int(round(t_final / dt))
    times = np.arange(n_steps + 1) * dt
    snap_idx = {int(round(t / dt)): float(t) for t in snapshot_times}

    state = vacuum_state(model)
    y = _pack(state)
    deriv = _make_deriv(model, flags)
    om = model.cavity.omega
    vac_diag = np.concatenate([0.5 / om, 0.5 * om])

    def project_single_photon(yv):
        # clip the excess covariance onto the physical cone Lam >= Lam_vac
        n = 2 * M
        lam = yv[-n * n:].reshape(n, n)
        excess = lam - np.diag(vac_diag)
        evals, vecs = np.linalg.eigh(excess)
        if evals[0] >= 0.0:
            return yv
        clipped = (vecs * np.maximum(evals, 0.0)) @ vecs.T
        lam[:] = np.diag(vac_diag) + 0.5 * (clipped + clipped.T)
        return yv

    pops = np.zeros((n_steps + 1, 2))
    intens, intens_se = {}, {}
    purity_max = 0.0

    vac_qq = np.diag(0.5 / model.cavity.omega)

    def record(i, yv):
        sz = yv[2]
        pops[i] = [(1.0 + sz) / 2.0, (1.0 - sz) / 2.0]
        nonlocal purity_max
        purity_max = max(purity_max, float(np.dot(yv[:3], yv[:3])))
        if i in snap_idx:
            st = _unpack(yv, M, i * dt)
            cov = st.lam[:M, :M] - vac_qq + np.outer(st.X[:M], st.X[:M])
            t = snap_idx[i]
            intens[t] = intensity_from_cov(model, r_grid, cov)
            intens_se[t] = np.zeros_like(r_grid)

    record(0, y)
    h = dt
    for i in range(1, n_steps + 1):
        y, h = _advance(y, dt, h, deriv, flags)
        if flags.pfsc:
            y = project_single_photon(y)
        record(i, y)

    sym_err = float(np.max(np.abs(_unpack(y, M, 0.0).lam
                                  - _unpack(y, M, 0.0).lam.T)))
    manifest = {"method": "bbgky", "efsc": flags.efsc, "pfsc": flags.pfsc,
                "dt": dt, "purity_max": purity_max,
                "covariance_asymmetry": sym_err}
    return ObservableSeries(times=times, populations=pops,
                            pop_stderr=np.zeros_like(pops), r_grid=r_grid,
                            intensity=intens, intensity_stderr=intens_se,
                            manifest=manifest)

"""Exact reference propagator on a truncated matter (x) photon basis.

The state is expanded over vacuum, one-photon, and two-photon configurations
(at most two quanta in total; same-mode doubles |2_a> included by default so
the vacuum <-> |2_a> coherences that feed the bound-photon intensity are
representable).  The Hamiltonian is never materialized: the photon-raising
structure of the basis is enumerated once and applied on the fly, and time
stepping uses short-iterate Lanczos with residual-controlled substepping.

The zero-point energy sum_a omega_a / 2 is subtracted from the photon
Hamiltonian; it is a global phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalGuardError
from .model import ModelSpec, make_r_grid
from .observables import ObservableSeries, intensity_from_cov

DEFAULT_SIZE_CAP = 2_000_000
DEFAULT_KRYLOV_DIM = 12
LANCZOS_RESID_TOL = 1e-10


class CIBasis:
    """Deterministic enumeration of the truncated matter (x) photon basis.

    Photon configurations are ordered vacuum, singles by ascending mode,
    doubles lexicographic (a <= b); the matter index runs slowest.
    """

    def __init__(self, n_levels: int, n_modes: int, max_photons: int,
                 exclude_same_mode_doubles: bool = False,
                 size_cap: int = DEFAULT_SIZE_CAP):
        if max_photons not in (1, 2):
            raise ValueError("max_photons must be 1 or 2")
        self.n_levels = n_levels
        self.n_modes = n_modes
        self.max_photons = max_photons
        self.exclude_same_mode_doubles = exclude_same_mode_doubles

        M = n_modes
        n_cfg = 1 + M
        if max_photons == 2:
            n_pairs = M * (M - 1) // 2 if exclude_same_mode_doubles else M * (M + 1) // 2
            n_cfg += n_pairs
        if n_levels * n_cfg > size_cap:
            raise NumericalGuardError(
                f"basis size {n_levels * n_cfg} exceeds cap {size_cap}")
        self.n_configs = n_cfg
        self.size = n_levels * n_cfg

        # per-config occupied modes (-1 = none), vacuum first, then singles
        m1 = np.full(n_cfg, -1, dtype=np.int64)
        m2 = np.full(n_cfg, -1, dtype=np.int64)
        m1[1:1 + M] = np.arange(M)
        if max_photons == 2:
            a_idx, b_idx = [], []
            for a in range(M):
                start = a if not exclude_same_mode_doubles else a + 1
                for b in range(start, M):
                    a_idx.append(a)
                    b_idx.append(b)
            a_idx = np.asarray(a_idx, dtype=np.int64)
            b_idx = np.asarray(b_idx, dtype=np.int64)
            m1[1 + M:] = a_idx
            m2[1 + M:] = b_idx
        self.cfg_mode1 = m1
        self.cfg_mode2 = m2

        # index of |2_a> per mode (None when not in the basis)
        if max_photons == 2 and not exclude_same_mode_doubles:
            same = np.nonzero((m1 == m2) & (m1 >= 0))[0]
            idx = np.empty(M, dtype=np.int64)
            idx[m1[same]] = same
            self.same_mode_double_index = idx
        else:
            self.same_mode_double_index = None

        # photon-creation transitions: dst = a^dag_mode src, amplitude sqrt(n+1)
        src = [np.zeros(M, dtype=np.int64)]                 # vacuum -> singles
        dst = [1 + np.arange(M, dtype=np.int64)]
        mode = [np.arange(M, dtype=np.int64)]
        amp = [np.ones(M)]
        if max_photons == 2:
            pair_index = 1 + M + np.arange(len(a_idx), dtype=np.int64)
            same = a_idx == b_idx
            # add mode b to single a
            src.append(1 + a_idx[~same])
            dst.append(pair_index[~same])
            mode.append(b_idx[~same])
            amp.append(np.ones((~same).sum()))
            # add mode a to single b
            src.append(1 + b_idx[~same])
            dst.append(pair_index[~same])
            mode.append(a_idx[~same])
            amp.append(np.ones((~same).sum()))
            if same.any():
                src.append(1 + a_idx[same])
                dst.append(pair_index[same])
                mode.append(a_idx[same])
                amp.append(np.full(same.sum(), np.sqrt(2.0)))
        self.trans_src = np.concatenate(src)
        self.trans_dst = np.concatenate(dst)
        self.trans_mode = np.concatenate(mode)
        self.trans_amp = np.concatenate(amp)

    def index_of(self, level: int, modes: tuple = ()) -> int:
        """Dense coefficient index of |level> (x) |photon config>."""
        if not 0 <= level < self.n_levels:
            raise ValueError("level out of range")
        modes = tuple(sorted(modes))
        if len(modes) == 0:
            cfg = 0
        elif len(modes) == 1:
            cfg = 1 + modes[0]
        elif len(modes) == 2:
            a, b = modes
            if self.max_photons < 2:
                raise ValueError("two-photon config outside basis")
            if self.exclude_same_mode_doubles:
                if a == b:
                    raise ValueError("same-mode double excluded from basis")
                M = self.n_modes
                cfg = 1 + M + a * M - a * (a + 1) // 2 + (b - a - 1)
            else:
                M = self.n_modes
                cfg = 1 + M + a * M - a * (a - 1) // 2 + (b - a)
        else:
            raise ValueError("at most two photons")
        return level * self.n_configs + cfg

    def config_of(self, index: int):
        """Inverse of index_of: dense index -> (level, occupied-mode tuple)."""
        if not 0 <= index < self.size:
            raise ValueError("index out of range")
        level, cfg = divmod(index, self.n_configs)
        a, b = self.cfg_mode1[cfg], self.cfg_mode2[cfg]
        modes = tuple(int(m) for m in (a, b) if m >= 0)
        return level, modes


@dataclass
class CIState:
    basis: CIBasis
    model: ModelSpec
    coeffs: np.ndarray      # complex, shape (basis.size,)
    time: float = 0.0

    @property
    def model_omega(self) -> np.ndarray:
        return self.model.cavity.omega

    def populations(self) -> np.ndarray:
        c = self.coeffs.reshape(self.basis.n_levels, self.basis.n_configs)
        return (np.abs(c) ** 2).sum(axis=1)


def build_basis(model: ModelSpec, max_photons: int,
                exclude_same_mode_doubles: bool = False,
                size_cap: int = DEFAULT_SIZE_CAP) -> CIBasis:
    return CIBasis(model.n_levels, model.n_modes, max_photons,
                   exclude_same_mode_doubles, size_cap)


def initial_state(basis: CIBasis, model: ModelSpec) -> CIState:
    """Initially occupied level (x) photon vacuum."""
    c = np.zeros(basis.size, dtype=complex)
    c[basis.index_of(model.atom.initial_level, ())] = 1.0
    return CIState(basis=basis, model=model, coeffs=c, time=0.0)


def cov_excess(state: CIState) -> np.ndarray:
    """Vacuum-subtracted symmetric <Q_a Q_b> matrix of a CI state.

    <Q_a Q_b>_sym - vac_ab = [2 Re(N + A)]_ab / (2 sqrt(om_a om_b)) with the
    normal moments N_ab = <a^dag_a a_b> (singles plus doubles) and the
    anomalous moments A_ab = <a_a a_b> (vacuum <-> double coherences).
    """
    basis, model = state.basis, state.model
    K, M, n_cfg = basis.n_levels, basis.n_modes, basis.n_configs
    om = model.cavity.omega
    c = state.coeffs.reshape(K, n_cfg)
    c0 = c[:, 0]
    c1 = c[:, 1:1 + M]
    N = c1.conj().T @ c1
    A = np.zeros((M, M), dtype=complex)
    if basis.max_photons == 2:
        m1 = basis.cfg_mode1[1 + M:]
        m2 = basis.cfg_mode2[1 + M:]
        same = m1 == m2
        for k in range(K):
            # symmetric amplitude tensor: T_ab = c_(a<b), T_aa = sqrt(2) c_aa
            T = np.zeros((M, M), dtype=complex)
            T[m1, m2] = c[k, 1 + M:]
            T[m2, m1] = c[k, 1 + M:]
            T[m1[same], m2[same]] *= np.sqrt(2.0)
            N = N + T.conj() @ T
            A = A + np.conj(c0[k]) * T
    G = 2.0 * np.real(N + A)
    return G / (2.0 * np.sqrt(np.outer(om, om)))


def _scatter_add(out_row: np.ndarray, idx: np.ndarray, vals: np.ndarray, n: int):
    out_row += np.bincount(idx, weights=vals.real, minlength=n)
    out_row += 1j * np.bincount(idx, weights=vals.imag, minlength=n)


def apply_hamiltonian(basis: CIBasis, model: ModelSpec, coeffs: np.ndarray) -> np.ndarray:
    """H @ coeffs with the coupling generated on the fly from the index map."""
    if coeffs.shape != (basis.size,):
        raise ValueError("coefficient vector has wrong dimension")
    K, n_cfg = basis.n_levels, basis.n_configs
    om = model.cavity.omega
    c = coeffs.reshape(K, n_cfg)

    photon_e = np.zeros(n_cfg)
    sel = basis.cfg_mode1 >= 0
    photon_e[sel] += om[basis.cfg_mode1[sel]]
    sel = basis.cfg_mode2 >= 0
    photon_e[sel] += om[basis.cfg_mode2[sel]]
    out = (model.atom.energies[:, None] + photon_e[None, :]) * c

    lam = model.cavity.lam
    if np.any(lam != 0.0):
        mu = model.atom.dipole
        if model.rwa:
            mu_with_create = np.triu(mu)    # matter lowering |k><l|, k < l
            mu_with_destroy = np.tril(mu)   # matter raising
        else:
            mu_with_create = mu_with_destroy = mu
        g = lam * np.sqrt(om / 2.0)         # omega lam sqrt(1/(2 omega))
        coef = g[basis.trans_mode] * basis.trans_amp
        up = mu_with_create @ (coef * c[:, basis.trans_src])
        down = mu_with_destroy @ (coef * c[:, basis.trans_dst])
        for k in range(K):
            _scatter_add(out[k], basis.trans_dst, up[k], n_cfg)
            _scatter_add(out[k], basis.trans_src, down[k], n_cfg)
    return out.reshape(-1)


def lanczos_step(state: CIState, dt: float, krylov_dim: int = DEFAULT_KRYLOV_DIM,
                 resid_tol: float = LANCZOS_RESID_TOL, _depth: int = 0) -> CIState:
    """Advance by exp(-i H dt) in a Krylov subspace; halves dt if the residual is large."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if krylov_dim < 2:
        raise ValueError("krylov_dim must be at least 2")
    if _depth > 20:
        raise NumericalGuardError("lanczos substepping failed to converge")

    v = state.coeffs
    norm0 = np.linalg.norm(v)
    V = [v / norm0]
    alphas, betas = [], []
    wvec = apply_hamiltonian(state.basis, state.model, V[0])
    a = np.vdot(V[0], wvec).real
    wvec = wvec - a * V[0]
    alphas.append(a)
    breakdown = False
    for _ in range(1, krylov_dim):
        b = np.linalg.norm(wvec)
        if b < 1e-14 * max(1.0, abs(alphas[0])):
            breakdown = True
            break
        vnext = wvec / b
        wvec = apply_hamiltonian(state.basis, state.model, vnext)
        wvec = wvec - b * V[-1]
        V.append(vnext)
        a = np.vdot(vnext, wvec).real
        wvec = wvec - a * vnext
        alphas.append(a)
        betas.append(b)
    m = len(alphas)
    T = np.diag(np.asarray(alphas))
    if betas:
        off = np.asarray(betas)
        T += np.diag(off, 1) + np.diag(off, -1)
    evals, U = np.linalg.eigh(T)
    small = U @ (np.exp(-1j * evals * dt) * U[0].conj())    # exp(-i T dt) e_1

    if not breakdown:
        resid = np.linalg.norm(wvec) * abs(small[-1])
        if resid > resid_tol:
            half = lanczos_step(state, dt / 2.0, krylov_dim, resid_tol, _depth + 1)
            return lanczos_step(half, dt / 2.0, krylov_dim, resid_tol, _depth + 1)

    new = norm0 * (np.stack(V, axis=1) @ small)
    return CIState(basis=state.basis, model=state.model, coeffs=new,
                   time=state.time + dt)


def run_exact(model: ModelSpec, max_photons: int, dt: float, t_final: float,
              snapshot_times=(), r_grid=None, krylov_dim: int = DEFAULT_KRYLOV_DIM,
              exclude_same_mode_doubles: bool = False) -> ObservableSeries:
    """Propagate from |initial level, vacuum> and record populations and intensity."""
    basis = build_basis(model, max_photons, exclude_same_mode_doubles)
    state = initial_state(basis, model)
    if r_grid is None:
        r_grid = make_r_grid(model)
    r_grid = np.asarray(r_grid, dtype=float)

    n_steps = int(round(t_final / dt))
    times = np.arange(n_steps + 1) * dt
    snap_idx = {int(round(t / dt)): float(t) for t in snapshot_times}

    K = model.n_levels
    pops = np.zeros((n_steps + 1, K))
    intens, intens_se = {}, {}
    norm_drift = 0.0
    e0 = np.vdot(state.coeffs, apply_hamiltonian(basis, model, state.coeffs)).real
    energy_drift = 0.0

    def record(i: int, st: CIState):
        pops[i] = st.populations()
        if i in snap_idx:
            t = snap_idx[i]
            intens[t] = intensity_from_cov(model, r_grid, cov_excess(st))
            intens_se[t] = np.zeros_like(r_grid)

    record(0, state)
    for i in range(1, n_steps + 1):
        state = lanczos_step(state, dt, krylov_dim)
        record(i, state)
    norm_drift = abs(np.linalg.norm(state.coeffs) - 1.0)
    e1 = np.vdot(state.coeffs, apply_hamiltonian(basis, model, state.coeffs)).real
    energy_drift = abs(e1 - e0) / max(1.0, abs(e0))

    manifest = {
        "method": "exact",
        "max_photons": max_photons,
        "rwa": model.rwa,
        "exclude_same_mode_doubles": exclude_same_mode_doubles,
        "basis_size": basis.size,
        "norm_drift": norm_drift,
        "energy_drift_rel": energy_drift,
    }
    return ObservableSeries(times=times, populations=pops,
                            pop_stderr=np.zeros_like(pops), r_grid=r_grid,
                            intensity=intens, intensity_stderr=intens_se,
                            manifest=manifest)

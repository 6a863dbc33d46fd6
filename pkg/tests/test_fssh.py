import numpy as np
import pytest

from cavemit.errors import NumericalGuardError
from cavemit.fssh import (_Adiabatic2, _hop_update, adiabatic_states,
                          fssh_step, initial_trajectory, run_fssh,
                          surface_energy)
from cavemit.model import build_paper_model, electronic_hamiltonian
from cavemit.sampling import FieldSample, SeedPolicy, sample_vacuum
from conftest import make_single_mode


def test_adiabatic_states_closed_form(desk_model):
    rng = np.random.default_rng(0)
    width = np.sqrt(0.5 / desk_model.cavity.omega)
    Q = rng.standard_normal(desk_model.n_modes) * width
    E, V, nac = adiabatic_states(desk_model, Q)
    H = electronic_hamiltonian(desk_model, Q)
    h11, h22, h12 = H[0, 0], H[1, 1], H[0, 1]
    e_lo = 0.5 * (h11 + h22) - 0.5 * np.sqrt((h11 - h22) ** 2 + 4 * h12 ** 2)
    e_hi = 0.5 * (h11 + h22) + 0.5 * np.sqrt((h11 - h22) ** 2 + 4 * h12 ** 2)
    assert E[0] == pytest.approx(e_lo, abs=1e-12)
    assert E[1] == pytest.approx(e_hi, abs=1e-12)
    # orthonormal frame
    np.testing.assert_allclose(V.T @ V, np.eye(2), atol=1e-12)


def test_nac_antisymmetry_and_zero_displacement(desk_model):
    Q = np.zeros(desk_model.n_modes)
    E, V, nac = adiabatic_states(desk_model, Q)
    de = desk_model.atom.energies[1] - desk_model.atom.energies[0]
    wl = desk_model.cavity.omega * desk_model.cavity.lam
    expected = wl * desk_model.atom.dipole[0, 1] / de
    np.testing.assert_allclose(np.abs(nac[0, 1]), np.abs(expected), rtol=1e-10)
    np.testing.assert_allclose(nac[0, 1], -nac[1, 0], atol=1e-12)
    assert np.all(nac[0, 0] == 0.0) and np.all(nac[1, 1] == 0.0)


def test_zero_coupling_no_hops():
    m = make_single_mode(coupling=0.0)
    s = run_fssh(m, 500, 0.1, 20.0, seed=1)
    assert s.manifest["hops_attempted"] == 0
    assert np.max(np.abs(s.populations[:, 1] - 1.0)) < 1e-12


def test_energy_conservation_with_hops(desk_model):
    # total energy (active surface + field kinetic) is conserved between hops
    # and across accepted hops, so one global budget covers the full run
    dt = 0.05
    pol = SeedPolicy(21)
    total_accepted = 0
    for k in range(4):
        stream = pol.stream(k)
        fs = sample_vacuum(desk_model, stream)
        traj = initial_trajectory(desk_model, fs)
        e0 = surface_energy(traj, desk_model)
        worst = 0.0
        for i in range(int(round(210.0 / dt))):
            traj = fssh_step(traj, desk_model, dt, stream)
            if i % 250 == 0:
                worst = max(worst, abs(surface_energy(traj, desk_model) - e0))
        worst = max(worst, abs(surface_energy(traj, desk_model) - e0))
        assert worst / abs(e0) < 1e-8
        total_accepted += traj.hop_log["accepted"]


def test_accepted_hop_conserves_energy_tightly():
    # isolate one accepted hop; the rescale is exact to rounding
    m = make_single_mode(coupling=4 * 0.0103)
    pol = SeedPolicy(33)
    found = 0
    for k in range(40):
        stream = pol.stream(k)
        fs = sample_vacuum(m, stream)
        traj = initial_trajectory(m, fs)
        for _ in range(4000):
            before = surface_energy(traj, m)
            acc = traj.hop_log["accepted"]
            traj = fssh_step(traj, m, 0.05, stream)
            if traj.hop_log["accepted"] > acc:
                after = surface_energy(traj, m)
                assert abs(after - before) / abs(before) < 1e-10
                found += 1
                break
        if found >= 3:
            break
    assert found >= 1


def test_hop_statistics_frozen_state():
    # with frozen rho and P the empirical hop rate matches the analytic flux
    m = make_single_mode()
    om = m.cavity.omega
    wl = om * m.cavity.lam
    eps, mu = m.atom.energies, m.atom.dipole
    B = 100_000
    g = np.full(B, 0.4)                        # strongly mixed frame
    ad = _Adiabatic2(eps, mu, g)
    rho = np.zeros((B, 2, 2), dtype=complex)
    rho[:, 1, 1] = 0.6
    rho[:, 0, 0] = 0.4
    rho[:, 0, 1] = rho[:, 1, 0] = 0.3
    active = np.ones(B, dtype=int)
    P = np.full((B, 1), 5.0)                   # downhill-capable momentum
    w = (om * np.full((B, 1), g[0] / wl[0]) + 1j * P)
    dt = 0.05
    Dv = (P @ wl) * ad.nac_scal()
    expected = np.clip(2.0 * rho[0, 1, 0].real * (-Dv[0]) * dt / 0.6, 0.0, 1.0)
    uniforms = SeedPolicy(3).stream(0).random(B)
    counters = {"attempted": 0, "accepted": 0, "frustrated": 0}
    _hop_update(rho, w, 0.0, active, ad, uniforms, om, wl, dt, counters, "direction")
    rate = counters["attempted"] / B
    se = np.sqrt(max(expected * (1 - expected), 1e-12) / B)
    assert expected > 0
    assert abs(rate - expected) < 3 * se


def test_hop_probability_guard():
    m = make_single_mode()
    om = m.cavity.omega
    wl = om * m.cavity.lam
    eps, mu = m.atom.energies, m.atom.dipole
    B = 4
    ad = _Adiabatic2(eps, mu, np.full(B, 0.4))
    rho = np.zeros((B, 2, 2), dtype=complex)
    rho[:, 1, 1] = 1e-6
    rho[:, 0, 0] = 1.0 - 1e-6
    rho[:, 0, 1] = rho[:, 1, 0] = 0.4
    active = np.ones(B, dtype=int)
    # huge momentum along the coupling direction makes the raw flux exceed 1
    P = np.full((B, 1), 1e4)
    w = (om * np.zeros((B, 1)) + 1j * P)
    counters = {"attempted": 0, "accepted": 0, "frustrated": 0}
    with pytest.raises(NumericalGuardError):
        _hop_update(rho, w, 0.0, active, ad, np.zeros(B), om, wl, 0.05,
                    counters, "direction")


def test_deterministic_replay(single_mode_model):
    a = run_fssh(single_mode_model, 400, 0.1, 30.0, seed=12)
    b = run_fssh(single_mode_model, 400, 0.1, 30.0, seed=12)
    assert a.manifest["hops_attempted"] == b.manifest["hops_attempted"]
    assert a.manifest["hops_accepted"] == b.manifest["hops_accepted"]
    assert np.array_equal(a.populations, b.populations)


def test_coupled_run_has_hops(single_mode_model):
    s = run_fssh(single_mode_model, 2000, 0.1, 150.0, seed=4)
    assert s.manifest["hops_accepted"] > 0
    # emission: excited population decreases
    assert s.populations[-1, 1] < 0.95


def test_three_level_rejected():
    m3 = build_paper_model(3, 8, scale=100)
    with pytest.raises(NotImplementedError):
        run_fssh(m3, 10, 0.1, 1.0)

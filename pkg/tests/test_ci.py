import numpy as np
import pytest

import cavemit.ci as ci
from cavemit.errors import NumericalGuardError
from cavemit.model import build_paper_model
from conftest import dense_populations, make_single_mode


def test_basis_counting(paper_model, paper_model_3):
    b = ci.build_basis(paper_model, 2)
    assert b.size == 2 * (1 + 400 + 400 * 401 // 2) == 161202
    b1 = ci.build_basis(paper_model_3, 1)
    assert b1.size == 3 * 401 == 1203
    m = make_single_mode()
    assert ci.build_basis(m, 2).size == 6
    bx = ci.build_basis(paper_model, 2, exclude_same_mode_doubles=True)
    assert bx.size == 2 * (1 + 400 + 400 * 399 // 2)


def test_basis_bijection(desk_model):
    b = ci.build_basis(desk_model, 2)
    seen = set()
    for idx in range(b.size):
        level, modes = b.config_of(idx)
        assert b.index_of(level, modes) == idx
        seen.add((level, modes))
    assert len(seen) == b.size


def test_basis_size_cap(paper_model):
    with pytest.raises(NumericalGuardError):
        ci.build_basis(paper_model, 2, size_cap=1000)


def test_apply_uncoupled_diagonal():
    m = make_single_mode(coupling=0.0)
    b = ci.build_basis(m, 2)
    st = ci.initial_state(b, m)
    out = ci.apply_hamiltonian(b, m, st.coeffs)
    np.testing.assert_allclose(out, m.atom.energies[1] * st.coeffs, atol=1e-15)


def test_apply_hand_matrix_element():
    m = make_single_mode()
    b = ci.build_basis(m, 2)
    om, lam, mu12 = m.cavity.omega[0], m.cavity.lam[0], m.atom.dipole[0, 1]
    vec = np.zeros(b.size, dtype=complex)
    vec[b.index_of(1, ())] = 1.0               # |level 2, vacuum>
    out = ci.apply_hamiltonian(b, m, vec)
    elem = out[b.index_of(0, (0,))]            # <level 1, one photon| H | ...>
    assert elem == pytest.approx(om * lam * np.sqrt(1.0 / (2.0 * om)) * mu12, rel=1e-12)
    # sqrt(2) ladder factor on the same-mode double
    vec2 = np.zeros(b.size, dtype=complex)
    vec2[b.index_of(0, (0,))] = 1.0
    out2 = ci.apply_hamiltonian(b, m, vec2)
    elem2 = out2[b.index_of(1, (0, 0))]
    assert elem2 == pytest.approx(np.sqrt(2.0) * om * lam * np.sqrt(1.0 / (2.0 * om)) * mu12,
                                  rel=1e-12)


def test_apply_hermitian(tiny_model):
    b = ci.build_basis(tiny_model, 2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        u = rng.standard_normal(b.size) + 1j * rng.standard_normal(b.size)
        v = rng.standard_normal(b.size) + 1j * rng.standard_normal(b.size)
        hu = ci.apply_hamiltonian(b, tiny_model, u)
        hv = ci.apply_hamiltonian(b, tiny_model, v)
        assert abs(np.vdot(u, hv) - np.conj(np.vdot(v, hu))) < 1e-12 * np.linalg.norm(u) * np.linalg.norm(v)


def test_lanczos_eigenstate_phase():
    m = make_single_mode(coupling=0.0)
    b = ci.build_basis(m, 2)
    st = ci.initial_state(b, m)
    dt = 0.37
    new = ci.lanczos_step(st, dt)
    idx = b.index_of(1, ())
    assert new.coeffs[idx] == pytest.approx(np.exp(-1j * m.atom.energies[1] * dt), rel=1e-12)
    others = np.abs(new.coeffs) ** 2
    assert others.sum() == pytest.approx(1.0, abs=1e-12)


def test_lanczos_vs_dense_oracle():
    m = make_single_mode()
    b = ci.build_basis(m, 2)
    st = ci.initial_state(b, m)
    dt, n_steps = 0.5, 400
    oracle = dense_populations(m, 2, dt, n_steps)
    pops = np.empty((n_steps + 1, 2))
    pops[0] = st.populations()
    for i in range(1, n_steps + 1):
        st = ci.lanczos_step(st, dt)
        pops[i] = st.populations()
    assert np.max(np.abs(pops - oracle)) < 1e-8


def test_lanczos_norm_drift_long():
    m = make_single_mode()
    b = ci.build_basis(m, 2)
    st = ci.initial_state(b, m)
    for _ in range(10_000):
        st = ci.lanczos_step(st, 0.1)
    assert abs(np.linalg.norm(st.coeffs) - 1.0) < 1e-8


def test_run_exact_zero_coupling(tiny_model):
    m = build_paper_model(2, 8, scale=100, coupling=0.0)
    s = ci.run_exact(m, 2, 0.1, 10.0, snapshot_times=(10.0,))
    assert np.max(np.abs(s.populations[:, 1] - 1.0)) < 1e-10
    assert np.max(np.abs(s.populations[:, 0])) < 1e-10
    assert np.max(np.abs(s.intensity[10.0])) < 1e-12


def test_run_exact_energy_and_norm(desk_model):
    s = ci.run_exact(desk_model, 2, 0.1, 20.0)
    assert s.manifest["norm_drift"] < 1e-8
    assert s.manifest["energy_drift_rel"] < 1e-8


def test_truncation_consistency():
    # coupling weak enough that 2-photon population is < 1e-6
    m = make_single_mode(coupling=0.0103 / 64.0)
    dt, n = 0.5, 200
    s1 = ci.run_exact(m, 1, dt, n * dt)
    s2 = ci.run_exact(m, 2, dt, n * dt)
    b = ci.build_basis(m, 2)
    st = ci.initial_state(b, m)
    for _ in range(n):
        st = ci.lanczos_step(st, dt)
    c = st.coeffs.reshape(2, b.n_configs)
    p2 = np.sum(np.abs(c[:, 1 + m.n_modes:]) ** 2)
    assert p2 < 1e-6
    assert np.max(np.abs(s1.populations - s2.populations)) < 1e-5


def test_rwa_limit_two_couplings():
    # counter-rotating contamination shrinks with coupling at fixed g*t
    diffs = []
    for fac in (1.0, 0.5):
        m = make_single_mode(coupling=0.0103 * fac)
        m_rwa = make_single_mode(coupling=0.0103 * fac)
        m_rwa = ci.ModelSpec(atom=m_rwa.atom, cavity=m_rwa.cavity, rwa=True)
        t_final = 100.0 / fac          # fixed g * t
        dt = 0.25 / fac
        full = ci.run_exact(m, 2, dt, t_final)
        rwa = ci.run_exact(m_rwa, 2, dt, t_final)
        diffs.append(np.max(np.abs(full.populations - rwa.populations)))
    assert diffs[1] < 0.5 * diffs[0]

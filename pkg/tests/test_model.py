import numpy as np
import pytest

from cavemit.model import (LIGHT_SPEED, CAVITY_LENGTH, build_paper_model,
                           coupling_ratio, electronic_hamiltonian,
                           mode_function, make_r_grid)
from conftest import make_single_mode


def test_paper_parameterization(paper_model, paper_model_3):
    m = paper_model
    assert np.allclose(m.atom.energies, [-0.6738, -0.2798])
    assert m.atom.dipole[0, 1] == pytest.approx(1.034)
    assert m.cavity.length == pytest.approx(2.362e5)
    assert m.cavity.atom_position == pytest.approx(m.cavity.length / 2)
    assert np.all(np.abs(m.cavity.lam) == pytest.approx(0.0103))
    # sign alternates as (-1)^alpha
    assert np.all(m.cavity.lam[::2] < 0)
    assert np.all(m.cavity.lam[1::2] > 0)
    # coupled modes are the odd harmonics
    assert np.array_equal(m.cavity.harmonic_index, 2 * np.arange(1, 401) - 1)

    m3 = paper_model_3
    assert m3.atom.energies[2] == pytest.approx(-0.1547)
    assert m3.atom.dipole[1, 2] == pytest.approx(-2.536)
    assert m3.atom.dipole[0, 2] == 0.0  # only adjacent levels couple


def test_mode_frequencies_independent_arithmetic(paper_model):
    # omega_alpha = n_alpha pi c / L evaluated independently
    n = 2 * np.arange(1, 401) - 1
    expected = n * np.pi * 137.036 / 2.362e5
    assert np.allclose(paper_model.cavity.omega, expected, rtol=1e-13)
    assert paper_model.cavity.omega[0] == pytest.approx(1.8226e-3, rel=1e-3)


def test_build_rejections():
    with pytest.raises(ValueError):
        build_paper_model(4, 10)
    with pytest.raises(ValueError):
        build_paper_model(2, 0)


def test_coupling_ratio_paper_anchor(paper_model):
    assert coupling_ratio(paper_model) == pytest.approx(1.2e-2, rel=0.01)


def test_coupling_ratio_zero_coupling():
    m = build_paper_model(2, 40, scale=10, coupling=0.0)
    assert coupling_ratio(m) == 0.0


def test_coupling_ratio_direct_substitution():
    # mu_12 = 1, lam = 1, de = 2 -> ratio = sqrt(2/2)/2 = 1/2
    from cavemit.model import AtomSpec, CavitySpec, ModelSpec
    L = np.pi * LIGHT_SPEED / 2.0
    atom = AtomSpec(energies=np.array([0.0, 2.0]),
                    dipole=np.array([[0.0, 1.0], [1.0, 0.0]]), initial_level=1)
    cav = CavitySpec(n_modes=1, length=L, light_speed=LIGHT_SPEED,
                     omega=np.array([2.0]), lam=np.array([1.0]),
                     harmonic_index=np.array([1]), atom_position=L / 2)
    m = ModelSpec(atom=atom, cavity=cav)
    assert coupling_ratio(m) == pytest.approx(0.5)


def test_electronic_hamiltonian_zero_displacement(desk_model):
    H = electronic_hamiltonian(desk_model, np.zeros(desk_model.n_modes))
    assert np.allclose(H, np.diag(desk_model.atom.energies))
    assert np.allclose(np.linalg.eigvalsh(H), desk_model.atom.energies)


def test_electronic_hamiltonian_single_mode_offdiagonal():
    m = make_single_mode()
    om, lam = m.cavity.omega[0], m.cavity.lam[0]
    Q = np.array([0.1 / (om * lam)])      # omega lam Q = 0.1
    H = electronic_hamiltonian(m, Q)
    assert H[0, 1] == pytest.approx(0.1 * 1.034, rel=1e-12)


def test_electronic_hamiltonian_hermitian(desk_model):
    rng = np.random.default_rng(1)
    width = np.sqrt(0.5 / desk_model.cavity.omega)
    for _ in range(20):
        Q = rng.standard_normal(desk_model.n_modes) * width
        H = electronic_hamiltonian(desk_model, Q)
        assert np.max(np.abs(H - H.T)) < 1e-14


def test_eigenvalue_continuity(desk_model):
    # no level crossing for |Q| up to 10 vacuum widths; eigenvalues move smoothly
    rng = np.random.default_rng(2)
    width = np.sqrt(0.5 / desk_model.cavity.omega)
    Q = 10.0 * width * rng.standard_normal(desk_model.n_modes)
    E0 = np.linalg.eigvalsh(electronic_hamiltonian(desk_model, Q))
    assert E0[1] - E0[0] > 0.1          # well separated
    dQ = 1e-6 * width
    E1 = np.linalg.eigvalsh(electronic_hamiltonian(desk_model, Q + dQ))
    assert np.max(np.abs(E1 - E0)) < 1e-4


def test_electronic_hamiltonian_dimension_mismatch(desk_model):
    with pytest.raises(ValueError):
        electronic_hamiltonian(desk_model, np.zeros(desk_model.n_modes + 1))


def test_mode_function_nodes_and_center(desk_model):
    m = desk_model
    assert np.all(mode_function(m, 0.0) == 0.0)
    assert np.allclose(mode_function(m, m.cavity.length), 0.0, atol=1e-12)
    zeta = mode_function(m, m.cavity.length / 2.0)
    n = m.cavity.harmonic_index
    expected = np.sqrt(m.cavity.omega / m.cavity.length) * (-1.0) ** ((n - 1) // 2)
    assert np.allclose(zeta, expected, rtol=1e-10)


def test_mode_function_outside_cavity(desk_model):
    with pytest.raises(ValueError):
        mode_function(desk_model, -1.0)
    with pytest.raises(ValueError):
        mode_function(desk_model, desk_model.cavity.length * 1.001)


def test_r_grid(desk_model):
    g = make_r_grid(desk_model, 256)
    assert g[0] == 0.0 and g[-1] == desk_model.cavity.length
    assert len(g) == 256

import numpy as np
import pytest

from cavemit.model import (AtomSpec, CavitySpec, ModelSpec, LIGHT_SPEED,
                           build_paper_model)

DE = -0.2798 + 0.6738   # soft-Coulomb hydrogen 1-2 gap


def make_single_mode(coupling=0.0103, levels=2):
    """Single resonant mode: omega_1 = eps_2 - eps_1 via L = pi c / de."""
    L = np.pi * LIGHT_SPEED / DE
    eps = np.array([-0.6738, -0.2798, -0.1547][:levels])
    mu = np.zeros((levels, levels))
    mu[0, 1] = mu[1, 0] = 1.034
    if levels == 3:
        mu[1, 2] = mu[2, 1] = -2.536
    atom = AtomSpec(energies=eps, dipole=mu, initial_level=levels - 1)
    cav = CavitySpec(n_modes=1, length=L, light_speed=LIGHT_SPEED,
                     omega=np.array([DE]), lam=np.array([coupling]),
                     harmonic_index=np.array([1]), atom_position=L / 2)
    return ModelSpec(atom=atom, cavity=cav)


def make_two_mode_detuned(coupling=0.0103):
    """Two modes straddling the transition (0.7 de and 2.1 de): weak exchange."""
    omega1 = 0.7 * DE
    L = np.pi * LIGHT_SPEED / omega1
    atom = AtomSpec(energies=np.array([-0.6738, -0.2798]),
                    dipole=np.array([[0.0, 1.034], [1.034, 0.0]]),
                    initial_level=1)
    cav = CavitySpec(n_modes=2, length=L, light_speed=LIGHT_SPEED,
                     omega=np.array([omega1, 3 * omega1]),
                     lam=np.array([-coupling, coupling]),
                     harmonic_index=np.array([1, 3]), atom_position=L / 2)
    return ModelSpec(atom=atom, cavity=cav)


def dense_fock_hamiltonian(model: ModelSpec, n_max: int, rwa: bool = False):
    """Independent dense Hamiltonian on the product Fock basis (n <= n_max per mode).

    Built directly from creation/annihilation matrices, not from the CI index
    machinery, so it can serve as an oracle for the propagators.
    """
    K = model.n_levels
    M = model.n_modes
    dim_f = n_max + 1
    a = np.diag(np.sqrt(np.arange(1, dim_f)), 1)
    n_op = np.diag(np.arange(dim_f, dtype=float))
    eye_f = np.eye(dim_f)

    def mode_op(op, alpha):
        out = np.array([[1.0]])
        for b in range(M):
            out = np.kron(out, op if b == alpha else eye_f)
        return out

    eye_field = np.eye(dim_f ** M)
    H = np.kron(np.diag(model.atom.energies), eye_field)
    for alpha in range(M):
        om = model.cavity.omega[alpha]
        lam = model.cavity.lam[alpha]
        H += np.kron(np.eye(K), om * mode_op(n_op, alpha))
        qa = np.sqrt(1.0 / (2.0 * om)) * (a + a.T)
        if rwa:
            lower = np.triu(model.atom.dipole)
            raise_m = np.tril(model.atom.dipole)
            H += om * lam * (np.kron(lower, mode_op(np.sqrt(1.0 / (2.0 * om)) * a.T, alpha))
                             + np.kron(raise_m, mode_op(np.sqrt(1.0 / (2.0 * om)) * a, alpha)))
        else:
            H += om * lam * np.kron(model.atom.dipole, mode_op(qa, alpha))
    return H


def dense_populations(model: ModelSpec, n_max: int, dt: float, n_steps: int,
                      rwa: bool = False):
    """Level populations from expm propagation of the dense Fock Hamiltonian."""
    from scipy.linalg import expm
    K, M = model.n_levels, model.n_modes
    dim_f = (n_max + 1) ** M
    H = dense_fock_hamiltonian(model, n_max, rwa)
    psi = np.zeros(K * dim_f, dtype=complex)
    psi[model.atom.initial_level * dim_f] = 1.0
    U = expm(-1j * H * dt)
    pops = np.empty((n_steps + 1, K))
    for i in range(n_steps + 1):
        pops[i] = (np.abs(psi.reshape(K, dim_f)) ** 2).sum(axis=1)
        psi = U @ psi
    return pops


@pytest.fixture(scope="session")
def paper_model():
    return build_paper_model(2, 400)


@pytest.fixture(scope="session")
def paper_model_3():
    return build_paper_model(3, 400)


@pytest.fixture(scope="session")
def desk_model():
    return build_paper_model(2, 40, scale=10)


@pytest.fixture(scope="session")
def tiny_model():
    return build_paper_model(2, 8, scale=100)


@pytest.fixture(scope="session")
def single_mode_model():
    return make_single_mode()

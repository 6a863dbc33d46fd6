"""Monte Carlo sampling of the vacuum Wigner distribution and mapping Gaussians.

Each trajectory owns an independent, reproducible random stream derived from
(master_seed, trajectory_index), so ensembles are deterministic regardless of
how trajectories are scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelSpec


@dataclass
class FieldSample:
    """One phase-space point of the photon field (per-mode displacement/momentum)."""

    Q: np.ndarray
    P: np.ndarray


@dataclass(frozen=True)
class SeedPolicy:
    """Counter-style stream derivation: trajectory index -> independent generator."""

    master_seed: int

    def stream(self, traj_index: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(traj_index,))
        return np.random.Generator(np.random.PCG64(ss))


def sample_vacuum(model: ModelSpec, stream: np.random.Generator) -> FieldSample:
    """Draw (Q, P) from the zero-temperature field Wigner function.

    Per mode: Q ~ N(0, 1/(2 omega)), P ~ N(0, omega/2), the minimum-uncertainty
    Gaussian exp[-P^2/omega - omega Q^2] up to normalization.
    """
    om = model.cavity.omega
    Q = stream.standard_normal(om.size) * np.sqrt(0.5 / om)
    P = stream.standard_normal(om.size) * np.sqrt(0.5 * om)
    return FieldSample(Q=Q, P=P)


def sample_mapping_gaussian(n_states: int, stream: np.random.Generator):
    """Draw mapping variables (r, p), each component N(0, 1/2).

    This is the Gaussian exp[-sum(r^2 + p^2)]; estimator normalization
    constants are folded into the trajectory weights analytically.
    """
    if n_states < 1:
        raise ValueError("n_states must be at least 1")
    r = stream.standard_normal(n_states) * np.sqrt(0.5)
    p = stream.standard_normal(n_states) * np.sqrt(0.5)
    return r, p

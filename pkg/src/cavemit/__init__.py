"""cavemit: benchmark dynamics of a few-level atom in a multimode 1D cavity.

One exact reference propagator (truncated CI + Lanczos) and five approximate
methods (MTEF, FSSH, LSC, FBTS, second Born BBGKY) share a common model and
emit comparable population / field-intensity series.
"""

__version__ = "0.1.0"

from .model import (AtomSpec, CavitySpec, ModelSpec, build_paper_model,
                    coupling_ratio, electronic_hamiltonian, mode_function)

__all__ = [
    "__version__", "AtomSpec", "CavitySpec", "ModelSpec", "build_paper_model",
    "coupling_ratio", "electronic_hamiltonian", "mode_function",
]

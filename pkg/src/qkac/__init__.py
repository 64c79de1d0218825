"""Numerical laboratory for a mean-field quantum collision model.

Modules
-------
operators    dense tensor-product kernel (products, embeddings, traces, entropies)
spectra      energy shells, occupancy combinatorics, ergodicity classes
collisions   collision specifications and the two-particle channel
master       N-particle generator, jump-series semigroup, steady states
boltzmann    Wild convolution and the nonlinear kinetic equation
chaos        hierarchy operators and propagation-of-chaos experiments
linearized   BKM geometry, linearized operator, spectral gap
cli          JSON-config experiment driver
"""

__version__ = "0.1.0"

from .operators import FactorShape  # noqa: F401
from .spectra import SingleParticleModel  # noqa: F401
from .collisions import (CollisionSpec, Superoperator,  # noqa: F401
                         exact_EA2_spec, qubit_tilted_spec, qubit_uniform_spec)

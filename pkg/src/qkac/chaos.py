"""Hierarchy operators for the mean-field limit and numerical
propagation-of-chaos experiments.

The hierarchy operator takes a k-particle observable to a (k+1)-particle
one by letting each of the first k particles collide with a fresh one:

    Gamma_k(B) = 2 sum_{i=1}^{k} (Q_{i,k+1} - 1)(B x 1).

Its finite-N counterpart keeps the in-block collisions with weight
2/(N-1):

    G_k(B) = 2/(N-1) sum_{i<j<=k} (Q_{i,j} - 1)(B) x 1
             + (N-k)/(N-1) Gamma_k(B),

and G_k - Gamma_k is exactly proportional to 1/(N-1).  The experiment
driver evolves product initial data under the N-particle semigroup and
compares one- and two-particle marginals against the single-particle
kinetic trajectory in trace norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boltzmann import qkbe_integrate
from .collisions import CollisionSpec, build_Q
from .master import KacGenerator, apply_pair_channel, evolve_master
from .operators import (FactorShape, partial_trace, permute_factors, tensor,
                        tensor_power, trace_norm, von_neumann_entropy)
from .tolerances import check_size_guard


def _pair_s4(spec: CollisionSpec) -> np.ndarray:
    d2 = spec.dim ** 2
    return build_Q(spec).mat.reshape(d2, d2, d2, d2)


def gamma_k(spec: CollisionSpec, b: np.ndarray) -> np.ndarray:
    """Hierarchy step: 2 sum_i (Q_{i,k+1} - 1)(B x 1) on k+1 particles."""
    b = np.asarray(b, dtype=complex)
    d = spec.dim
    k = round(np.log(b.shape[0]) / np.log(d))
    if d ** k != b.shape[0] or b.shape[0] != b.shape[1]:
        raise ValueError(f"operand of shape {b.shape} is not a {d}-level k-particle operator")
    shape = FactorShape(k + 1, d)
    check_size_guard(shape.dim)
    s4 = _pair_s4(spec)
    big = tensor(b, np.eye(d))
    out = np.zeros_like(big)
    for i in range(k):
        out += apply_pair_channel(big, s4, i, k, shape) - big
    return 2.0 * out


def g_k(spec: CollisionSpec, b: np.ndarray, num_particles: int) -> np.ndarray:
    """Finite-N hierarchy step; requires k < N."""
    b = np.asarray(b, dtype=complex)
    d = spec.dim
    k = round(np.log(b.shape[0]) / np.log(d))
    if k >= num_particles:
        raise ValueError(f"k={k} must be smaller than N={num_particles}")
    shape_k = FactorShape(k, d) if k > 1 else None
    s4 = _pair_s4(spec)
    inblock = np.zeros((d ** (k + 1), d ** (k + 1)), dtype=complex)
    if k >= 2:
        acc = np.zeros_like(b)
        for i in range(k):
            for j in range(i + 1, k):
                acc += apply_pair_channel(b, s4, i, j, shape_k) - b
        inblock = tensor(acc, np.eye(d))
    n = num_particles
    return (2.0 / (n - 1)) * inblock + ((n - k) / (n - 1)) * gamma_k(spec, b)


def derivation_check(spec: CollisionSpec, x: np.ndarray, y: np.ndarray) -> float:
    """Residual of the twisted derivation identity.

    For X on j particles and Y on m particles, with k = j + m,

        Gamma_k(X x Y) = [U (Gamma_j(X) x 1_m) U^*] (1_j x Y x 1)
                         + X x Gamma_m(Y),

    where U swaps factors j+1 and k+1 so the fresh particle of the inner
    hierarchy step sits in the last slot.  The two right-hand factors act
    on disjoint slots and commute.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    d = spec.dim
    j = round(np.log(x.shape[0]) / np.log(d))
    m = round(np.log(y.shape[0]) / np.log(d))
    k = j + m
    shape = FactorShape(k + 1, d)
    check_size_guard(shape.dim)
    lhs = gamma_k(spec, tensor(x, y))
    inner = tensor(gamma_k(spec, x), np.eye(d ** m))
    pi = list(range(k + 1))
    pi[j], pi[k] = k, j
    term1 = permute_factors(inner, pi, shape) @ tensor(np.eye(d ** j), y, np.eye(d))
    term2 = tensor(x, gamma_k(spec, y))
    return float(np.abs(lhs - (term1 + term2)).max())


# ---------------------------------------------------------------------------
# propagation-of-chaos experiment
# ---------------------------------------------------------------------------

@dataclass
class ChaosExperiment:
    spec: CollisionSpec
    rho0: np.ndarray
    N_list: list
    t_grid: np.ndarray
    force: bool = False

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if self.t_grid[0] != 0.0 or np.any(np.diff(self.t_grid) <= 0):
            raise ValueError("t_grid must increase from 0")
        d = self.spec.dim
        for n in self.N_list:
            check_size_guard(d ** n, force=self.force)


@dataclass
class ChaosRow:
    N: int
    t: float
    delta1: float
    delta2: float
    entropy_N: float
    entropy_qkbe: float


def run_chaos_experiment(exp: ChaosExperiment) -> list:
    """Distances between N-particle marginals and the kinetic trajectory.

    For each N the product state rho0^{xN} is evolved checkpoint to
    checkpoint (the jump series composes exactly), and at each time

        delta1 = || marginal_1 - rho(t) ||_tr
        delta2 = || marginal_2 - rho(t) x rho(t) ||_tr

    against the single-particle kinetic solution rho(t).  Entropy columns
    record the one-particle marginal entropy and the kinetic entropy.
    """
    kinetic = qkbe_integrate(exp.spec, exp.rho0, exp.t_grid)
    rows = []
    for n in exp.N_list:
        if n < 2:
            raise ValueError("chaos experiment needs N >= 2")
        gen = KacGenerator(exp.spec, n, force=exp.force)
        state = tensor_power(exp.rho0, n)
        for idx, t in enumerate(exp.t_grid):
            if idx > 0:
                state = evolve_master(gen, state, float(exp.t_grid[idx] - exp.t_grid[idx - 1]))
            m1 = partial_trace(state, gen.shape, keep=1)
            m2 = partial_trace(state, gen.shape, keep=2)
            ref = kinetic[idx]
            rows.append(ChaosRow(
                N=n,
                t=float(t),
                delta1=trace_norm(m1 - ref),
                delta2=trace_norm(m2 - tensor(ref, ref)),
                entropy_N=von_neumann_entropy(m1),
                entropy_qkbe=von_neumann_entropy(ref),
            ))
    return rows

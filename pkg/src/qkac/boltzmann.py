"""Quantum Wild convolution, the nonlinear single-particle kinetic
equation, its steady-state family, collision invariants, and conserved
functionals.

The Wild convolution of two single-particle operators is

    A * B = Tr_2[ Q(A x B) ],

the partial trace over the second factor of the pair channel applied to
the product.  It is bilinear, trace multiplicative, positivity
preserving, and in general non-commutative.  The kinetic equation is

    d rho / dt = 2 (rho * rho - rho),

integrated here with fixed-step RK4 plus an optional fixed-point
verification of the equivalent mild form

    rho(t) = e^{-2t} rho_0 + int_0^t e^{2(s - t)} rho(s) * rho(s) ds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .collisions import CollisionSpec, build_Q
from .errors import NumericalContractError
from .operators import (FactorShape, partial_trace, tensor,
                        validate_density_matrix)
from .spectra import SingleParticleModel, shell_decomposition, shell_state
from .tolerances import PICARD_TOL, TOL_PSD, TOL_STEADY

log = logging.getLogger(__name__)


def wild(spec: CollisionSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Wild convolution A * B = Tr_2[Q(A x B)]."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    d = spec.dim
    if a.shape != (d, d) or b.shape != (d, d):
        raise ValueError(f"operands must be {d}x{d} single-particle operators")
    q = build_Q(spec)
    return partial_trace(q(tensor(a, b)), FactorShape(2, d), keep=1)


def diagonal_projection(model: SingleParticleModel, a: np.ndarray) -> np.ndarray:
    """Zero all off-diagonal entries in the eigenbasis of the model Hamiltonian.

    Models here carry diagonal Hamiltonians, so this is the plain diagonal
    part in the standard basis.
    """
    a = np.asarray(a, dtype=complex)
    return np.diag(np.diagonal(a)).astype(complex)


def _pair_marginal_of_shell_states(model: SingleParticleModel) -> dict:
    """Tr_2[sigma_E] for every two-particle shell energy E, by enumeration."""
    out = {}
    shape = FactorShape(2, model.dim)
    for E, _ in shell_decomposition(model, 2):
        out[E] = partial_trace(shell_state(model, 2, E), shape, keep=1)
    return out


def wild_diagonal(model: SingleParticleModel, a: np.ndarray,
                  b: np.ndarray) -> np.ndarray:
    """Closed form of the Wild convolution when the channel is the exact
    conditional expectation onto the pair energy algebra:

        A * B = sum_{i,k} A_ii B_kk Tr_2[sigma_{e_i + e_k}].

    Only the diagonals of A and B enter.  The marginal of each shell
    state is computed by enumeration, which also covers degenerate
    single-particle spectra correctly (the count of partners of a level
    inside a shell is weighted by multiplicity).
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    marginals = _pair_marginal_of_shell_states(model)
    out = np.zeros((model.dim, model.dim), dtype=complex)
    for i in range(model.dim):
        for k in range(model.dim):
            coeff = a[i, i] * b[k, k]
            if coeff != 0:
                out += coeff * marginals[model.energies[i] + model.energies[k]]
    return out


def gibbs(model: SingleParticleModel, beta: float) -> np.ndarray:
    """Thermal state exp(-beta h) / Z; negative beta is allowed."""
    w = np.exp(-beta * np.asarray(model.energies, dtype=float))
    return np.diag(w / w.sum()).astype(complex)


# ---------------------------------------------------------------------------
# the kinetic equation
# ---------------------------------------------------------------------------

def _rhs(spec: CollisionSpec, rho: np.ndarray) -> np.ndarray:
    return 2.0 * (wild(spec, rho, rho) - rho)


def _rk4_step(spec: CollisionSpec, rho: np.ndarray, h: float) -> np.ndarray:
    k1 = _rhs(spec, rho)
    k2 = _rhs(spec, rho + 0.5 * h * k1)
    k3 = _rhs(spec, rho + 0.5 * h * k2)
    k4 = _rhs(spec, rho + h * k3)
    return rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _advance(spec: CollisionSpec, rho: np.ndarray, h: float,
             tol_psd: float, depth: int = 0) -> np.ndarray:
    nxt = _rk4_step(spec, rho, h)
    lo = np.linalg.eigvalsh((nxt + nxt.conj().T) / 2).min()
    if lo < -tol_psd:
        if depth >= 20:
            raise NumericalContractError(
                f"positivity violated by {(-lo):.3e} at the smallest step")
        half = _advance(spec, rho, h / 2, tol_psd, depth + 1)
        return _advance(spec, half, h / 2, tol_psd, depth + 1)
    return nxt


def qkbe_integrate(spec: CollisionSpec, rho0: np.ndarray, t_grid,
                   tol_psd: float = TOL_PSD) -> np.ndarray:
    """Integrate d rho/dt = 2(rho * rho - rho) through the given times.

    ``t_grid`` must be increasing and start at 0.  Fixed-step RK4 with
    step min(0.01, span/1000), sub-stepped so every grid time is hit
    exactly; positivity is asserted (never clipped) at every internal
    step, with step-halving retries; the trace is renormalized at each
    checkpoint and drift logged.  Returns the stacked trajectory.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid[0] != 0.0 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must increase from 0")
    rho = validate_density_matrix(rho0, tol_psd=tol_psd)
    span = float(t_grid[-1])
    h_max = min(0.01, span / 1000.0) if span > 0 else 0.01
    out = [rho.copy()]
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        nsub = max(1, int(np.ceil((t1 - t0) / h_max)))
        h = (t1 - t0) / nsub
        for _ in range(nsub):
            rho = _advance(spec, rho, h, tol_psd)
        tr = np.trace(rho).real
        log.debug("kinetic trace drift %.3e at t=%.6f", tr - 1.0, t1)
        rho = rho / tr
        out.append(rho.copy())
    return np.stack(out)


def picard_solve(spec: CollisionSpec, rho0: np.ndarray, t_grid,
                 tol: float = PICARD_TOL, max_iter: int = 400,
                 refine: int = 8) -> np.ndarray:
    """Solve the mild form by fixed-point iteration on a refined grid:

        rho(t) = e^{-2t} rho_0 + 2 int_0^t e^{2(s-t)} rho(s) * rho(s) ds

    (the factor 2 on the gain matches d rho/dt = 2(rho * rho - rho);
    steady states are fixed points only with it).  Serves as an
    independent check of the RK4 path.  The integral is a composite
    trapezoid over a grid ``refine`` times finer than ``t_grid``;
    iteration stops when successive trajectories differ by less than tol
    in max norm.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    fine = [0.0]
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        fine.extend(np.linspace(t0, t1, refine + 1)[1:])
    fine = np.asarray(fine)
    rho0 = np.asarray(rho0, dtype=complex)
    traj = np.stack([rho0] * fine.size)
    for it in range(max_iter):
        gains = np.stack([wild(spec, r, r) for r in traj])
        new = np.empty_like(traj)
        new[0] = rho0
        integral = np.zeros_like(rho0)
        for k in range(1, fine.size):
            dt = fine[k] - fine[k - 1]
            # trapezoid on 2 e^{2s} gain(s), then discount by e^{-2t}
            integral += dt * (np.exp(2 * fine[k - 1]) * gains[k - 1]
                              + np.exp(2 * fine[k]) * gains[k])
            new[k] = np.exp(-2 * fine[k]) * (rho0 + integral)
        delta = np.abs(new - traj).max()
        traj = new
        if delta < tol:
            break
    else:
        raise NumericalContractError("mild-form iteration did not converge")
    keep = [int(np.argmin(np.abs(fine - t))) for t in t_grid]
    return traj[keep]


# ---------------------------------------------------------------------------
# steady states and conserved functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SteadyStateFamily:
    """Log-linear parametrization of the strictly positive steady states.

    ``constraint_basis`` has one row per basis vector of the space of
    real vectors x, indexed by the distinct energies, satisfying
    x_i + x_j = x_k + x_l whenever e_i + e_j = e_k + e_l.  A steady state
    assigns eigenvalue exp(x_e) to every level of energy e (degenerate
    levels share one eigenvalue) and normalizes.
    """

    model: SingleParticleModel
    distinct_energies: tuple
    multiplicities: tuple
    constraint_basis: np.ndarray

    @property
    def dimension(self) -> int:
        return self.constraint_basis.shape[0]


def classify_steady_states(model: SingleParticleModel) -> SteadyStateFamily:
    """Enumerate the energy quadruples with e_i + e_j = e_k + e_l and
    return a basis of the null space of the induced constraints on
    log-eigenvalue vectors.

    The basis always spans the constant vector and the energy vector, so
    thermal states are steady for every model; extra dimensions appear
    exactly when the constraint set is small.
    """
    energies = sorted(set(model.energies))
    mult = tuple(model.energies.count(e) for e in energies)
    m = len(energies)
    rows = []
    pairs = {}
    for i in range(m):
        for j in range(i, m):
            pairs.setdefault(energies[i] + energies[j], []).append((i, j))
    for s, plist in pairs.items():
        for a in range(len(plist)):
            for b in range(a + 1, len(plist)):
                (i, j), (k, l) = plist[a], plist[b]
                row = np.zeros(m)
                row[i] += 1
                row[j] += 1
                row[k] -= 1
                row[l] -= 1
                rows.append(row)
    if rows:
        _, sv, vh = np.linalg.svd(np.stack(rows))
        rank = int((sv > 1e-10 * max(1.0, sv[0])).sum())
        basis = vh[rank:]
    else:
        basis = np.eye(m)
    return SteadyStateFamily(model, tuple(energies), mult, basis)


def steady_state_from_coeffs(family: SteadyStateFamily, coeffs) -> np.ndarray:
    """Strictly positive steady state exp(sum_a c_a v_a), normalized."""
    x = np.asarray(coeffs, dtype=float) @ family.constraint_basis
    lam = {e: np.exp(xe) for e, xe in zip(family.distinct_energies, x)}
    diag = np.array([lam[e] for e in family.model.energies])
    return np.diag(diag / diag.sum()).astype(complex)


def collision_invariants_basis(model: SingleParticleModel) -> list:
    """Hermitian operators f(h) for f in the constraint basis."""
    family = classify_steady_states(model)
    out = []
    for row in family.constraint_basis:
        val = {e: x for e, x in zip(family.distinct_energies, row)}
        out.append(np.diag([val[e] for e in model.energies]).astype(complex))
    return out


def is_steady(spec: CollisionSpec, rho: np.ndarray,
              tol: float = TOL_STEADY) -> bool:
    """Check rho * rho = rho directly (valid also for boundary states)."""
    rho = np.asarray(rho, dtype=complex)
    return np.linalg.norm(wild(spec, rho, rho) - rho) <= tol


def conserved_check(spec: CollisionSpec, trajectory: np.ndarray,
                    invariant: np.ndarray) -> float:
    """Largest drift of Tr[A rho(t)] along a trajectory."""
    traj = np.asarray(trajectory, dtype=complex)
    vals = np.einsum("tij,ji->t", traj, np.asarray(invariant, dtype=complex))
    return float(np.abs(vals - vals[0]).max())


def energy_observable(model: SingleParticleModel) -> np.ndarray:
    return model.hamiltonian()

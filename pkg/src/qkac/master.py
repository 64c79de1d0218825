"""N-particle collision generator, the master-equation semigroup, steady
states, and entropy production.

The generator averages the two-particle channel over all ordered pairs,

    Q_N = binom(N, 2)^{-1} sum_{i<j} Q_{i,j},      L_N = N (Q_N - 1),

and the semigroup exp(t L_N) is evaluated by the jump (Poisson) series

    exp(t L_N) rho = sum_k e^{-Nt} (Nt)^k / k!  Q_N^k rho,

truncated when the Poisson tail drops below ``tail_tol``.  Q_N is a
Hilbert-Schmidt self-adjoint contraction, so the series is numerically
stable and never materializes the full superoperator: one application of
Q_N costs binom(N, 2) small tensor contractions on the d^N state.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .collisions import CollisionSpec, build_Q, is_ergodic
from .errors import NumericalContractError
from .operators import FactorShape, hermitian_function, permute_factors
from .spectra import (class_projections, commutant_projection,
                      shell_decomposition, _flat_index)
from .tolerances import TAIL_TOL, TOL_FIXED_EIG, TOL_PSD

log = logging.getLogger(__name__)


@dataclass
class KacGenerator:
    """Pair-averaged collision generator on N particles."""

    spec: CollisionSpec
    num_particles: int
    force: bool = False
    shape: FactorShape = field(init=False)
    _s4: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.num_particles < 2:
            raise ValueError("need at least two particles")
        d = self.spec.model.dim
        self.shape = FactorShape(self.num_particles, d).check_guard(self.force)
        q = build_Q(self.spec)
        self._s4 = q.mat.reshape(d * d, d * d, d * d, d * d)

    @property
    def pairs(self):
        n = self.num_particles
        return [(i, j) for i in range(n) for j in range(i + 1, n)]


def apply_pair_channel(rho: np.ndarray, s4: np.ndarray, i: int, j: int,
                       shape: FactorShape) -> np.ndarray:
    """Apply a two-particle channel to factors (i, j) of an N-factor operator.

    ``s4`` is the channel matrix reshaped to (d^2, d^2, d^2, d^2) as
    [out_row, out_col, in_row, in_col].  Accepts a leading batch axis.
    """
    d, n = shape.factor_dim, shape.num_factors
    dim = shape.dim
    batched = rho.ndim == 3
    b = rho.shape[0] if batched else 1
    t = rho.reshape((b,) + (d,) * (2 * n))
    row_axes = [i, j] + [a for a in range(n) if a not in (i, j)]
    axes = [0] + [1 + a for a in row_axes] + [1 + n + a for a in row_axes]
    t = t.transpose(axes)
    rest = d ** (n - 2)
    x = t.reshape(b, d * d, rest, d * d, rest)
    y = np.einsum("PQac,Barcs->BPrQs", s4, x, optimize=True)
    y = y.reshape((b,) + (d,) * (2 * n))
    inv = np.argsort(axes)
    y = y.transpose(inv).reshape(b, dim, dim)
    return y if batched else y[0]


def apply_QN(gen: KacGenerator, rho: np.ndarray) -> np.ndarray:
    """Uniform average of the pair channels.  Accepts a leading batch axis."""
    rho = np.asarray(rho, dtype=complex)
    dim = gen.shape.dim
    if rho.shape[-2:] != (dim, dim):
        raise ValueError(f"operand shape {rho.shape} does not match dimension {dim}")
    out = np.zeros_like(rho)
    for (i, j) in gen.pairs:
        out += apply_pair_channel(rho, gen._s4, i, j, gen.shape)
    return out / len(gen.pairs)


def apply_pair_QN(gen: KacGenerator, rho: np.ndarray, i: int, j: int) -> np.ndarray:
    """Single pair channel Q_{i,j} on the N-particle space."""
    return apply_pair_channel(np.asarray(rho, dtype=complex), gen._s4, i, j, gen.shape)


def apply_LN(gen: KacGenerator, x: np.ndarray) -> np.ndarray:
    """Generator action N (Q_N x - x); traceless on trace-class input."""
    x = np.asarray(x, dtype=complex)
    return gen.num_particles * (apply_QN(gen, x) - x)


def evolve_master(gen: KacGenerator, rho0: np.ndarray, t: float,
                  tail_tol: float = TAIL_TOL, tol_psd: float = TOL_PSD,
                  renormalize: bool = True) -> np.ndarray:
    """Evolve a state for time t with the truncated jump series.

    The output trace is renormalized to one (the drift, bounded by the
    Poisson tail, is logged) and positivity is asserted within tol_psd.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    rate = gen.num_particles * t
    # Poisson weights via logs; stable for any rate
    out = np.zeros_like(rho0)
    term = rho0.copy()
    k = 0
    acc = 0.0
    while True:
        w = math.exp(k * math.log(rate) - rate - math.lgamma(k + 1))
        out += w * term
        acc += w
        if acc >= 1.0 - tail_tol:
            break
        if k > rate + 60 * math.sqrt(rate + 1.0) + 60:
            raise NumericalContractError("jump series failed to meet the tail tolerance")
        term = apply_QN(gen, term)
        k += 1
    tr = np.trace(out).real
    if abs(tr - 1.0) > 100 * tail_tol + 1e-13:
        raise NumericalContractError(f"trace drifted to {tr} under the jump series")
    if renormalize:
        log.debug("jump series trace drift %.3e over %d terms", tr - 1.0, k)
        out = out / tr
    lo = np.linalg.eigvalsh((out + out.conj().T) / 2).min()
    if lo < -tol_psd:
        raise NumericalContractError(f"evolved state has negative eigenvalue {lo:.3e}")
    return out


# ---------------------------------------------------------------------------
# null space of the generator, computed per invariant block
# ---------------------------------------------------------------------------

def _shell_indices(gen: KacGenerator):
    model = gen.spec.model
    shells = shell_decomposition(model, gen.num_particles, force=gen.force)
    return [(E, [_flat_index(a, model.dim) for a in idxs]) for E, idxs in shells]


def _block_fixed_vectors(gen: KacGenerator, rows, cols, tol):
    """Eigenvalue-1 eigenvectors of Q_N on the block of operators with
    range in the row shell and corange in the column shell."""
    dim = gen.shape.dim
    units = np.zeros((len(rows) * len(cols), dim, dim), dtype=complex)
    for a, ra in enumerate(rows):
        for b, cb in enumerate(cols):
            units[a * len(cols) + b, ra, cb] = 1.0
    images = apply_QN(gen, units)
    block = images[:, rows][:, :, cols].reshape(len(units), len(units)).T
    herm = np.abs(block - block.conj().T).max()
    if herm > 1e-8:
        raise NumericalContractError(f"generator block is not Hermitian ({herm:.3e})")
    w, v = np.linalg.eigh((block + block.conj().T) / 2)
    out = []
    for idx in np.where(np.abs(w - 1.0) <= tol)[0]:
        mat = np.zeros((dim, dim), dtype=complex)
        mat[np.ix_(rows, cols)] = v[:, idx].reshape(len(rows), len(cols))
        out.append(mat)
    return out, w


def ln_null_basis(gen: KacGenerator, tol: float = TOL_FIXED_EIG,
                  all_blocks: bool | None = None) -> list:
    """Hilbert-Schmidt orthonormal basis of the null space of L_N.

    The shell subspaces are invariant under every pair channel, so Q_N is
    diagonalized block by block and never materialized as a full matrix.
    For an ergodic specification all fixed vectors live in the diagonal
    blocks (they are diagonal in the product eigenbasis); off-diagonal
    blocks are scanned too when the specification is not ergodic, or when
    ``all_blocks`` forces it.
    """
    if all_blocks is None:
        all_blocks = not is_ergodic(gen.spec)
    shells = _shell_indices(gen)
    basis = []
    for ei, (E1, rows) in enumerate(shells):
        for ej, (E2, cols) in enumerate(shells):
            if not all_blocks and ei != ej:
                continue
            vecs, _ = _block_fixed_vectors(gen, rows, cols, tol)
            basis.extend(vecs)
    return basis


def qn_spectrum(gen: KacGenerator) -> np.ndarray:
    """All eigenvalues of Q_N on the operator space, via the shell blocks."""
    shells = _shell_indices(gen)
    eigs = []
    for E1, rows in shells:
        for E2, cols in shells:
            _, w = _block_fixed_vectors(gen, rows, cols, tol=0.0)
            eigs.append(w)
    return np.sort(np.concatenate(eigs))


def steady_states_basis(gen: KacGenerator, tol: float = TOL_FIXED_EIG,
                        cross_check: bool = True) -> list:
    """Normalized minimal class projections spanning the steady states.

    Returns (E, state, rank) triples.  When ``cross_check`` is set the
    numerically computed null-space dimension of L_N must match the class
    count; for a non-ergodic specification the check runs over all shell
    blocks and a mismatch raises.
    """
    model = gen.spec.model
    projections = class_projections(model, gen.num_particles, force=gen.force)
    if cross_check:
        null_dim = len(ln_null_basis(gen, tol=tol))
        if null_dim != len(projections):
            raise NumericalContractError(
                f"null-space dimension {null_dim} does not match the "
                f"class count {len(projections)}")
    return [(E, p / rank, rank) for E, p, rank in projections]


def entropy_production(gen: KacGenerator, rho: np.ndarray,
                       tol_psd: float = TOL_PSD):
    """Entropy production -d/dt S(rho_t || rho_inf) at t = 0.

    rho_inf is the conditional expectation of rho onto the fixed-point
    algebra.  Returns (rate, ratio) where ratio = rate / S(rho || rho_inf)
    when the denominator exceeds tol, else None.  If rho is singular on
    the support of rho_inf the rate is reported as +inf.
    """
    from .operators import relative_entropy

    rho = np.asarray(rho, dtype=complex)
    rho_inf = commutant_projection(gen.spec.model, gen.num_particles, rho,
                                   force=gen.force)
    w_rho = np.linalg.eigvalsh(rho)
    w_inf = np.linalg.eigvalsh(rho_inf)
    ker_rho = (w_rho <= tol_psd).sum()
    ker_inf = (w_inf <= tol_psd).sum()
    if ker_rho > ker_inf:
        return float("inf"), None
    log_rho = hermitian_function(rho, lambda w: np.log(np.maximum(w, tol_psd)))
    log_inf = hermitian_function(rho_inf, lambda w: np.log(np.maximum(w, tol_psd)))
    rate = -np.trace(apply_LN(gen, rho) @ (log_rho - log_inf)).real
    rel = relative_entropy(rho, rho_inf, tol_psd=tol_psd)
    ratio = rate / rel if rel > tol_psd and np.isfinite(rel) else None
    return float(rate), ratio


def permutation_covariance_check(gen: KacGenerator, rho: np.ndarray, pi,
                                 rng: np.random.Generator | None = None) -> dict:
    """Residuals of the permutation-covariance identities.

    * ``symmetric_state``: || Q_N(U_pi rho U_pi^*) - Q_N rho || for the
      given (expected symmetric) state.
    * ``pair_relabel``: || U_pi (Q_{i,j} A) U_pi^* - Q_{pi(i),pi(j)}(U_pi A U_pi^*) ||
      on a random A, maximized over all pairs (i, j); conjugating by U_pi
      relabels the colliding pair.
    """
    rho = np.asarray(rho, dtype=complex)
    pi = list(pi)
    out = {}
    lhs = apply_QN(gen, permute_factors(rho, pi, gen.shape))
    out["symmetric_state"] = float(np.abs(lhs - apply_QN(gen, rho)).max())
    rng = rng or np.random.default_rng(0)
    dim = gen.shape.dim
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    worst = 0.0
    for (i, j) in gen.pairs:
        left = permute_factors(apply_pair_QN(gen, a, i, j), pi, gen.shape)
        pi_i, pi_j = min(pi[i], pi[j]), max(pi[i], pi[j])
        right = apply_pair_QN(gen, permute_factors(a, pi, gen.shape), pi_i, pi_j)
        worst = max(worst, float(np.abs(left - right).max()))
    out["pair_relabel"] = worst
    return out


def symmetrize_state(rho: np.ndarray, shape: FactorShape) -> np.ndarray:
    """Average a state over all factor permutations."""
    import itertools

    rho = np.asarray(rho, dtype=complex)
    perms = list(itertools.permutations(range(shape.num_factors)))
    acc = np.zeros_like(rho)
    for p in perms:
        acc += permute_factors(rho, list(p), shape)
    return acc / len(perms)

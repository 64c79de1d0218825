"""Dense complex-operator kernel: tensor products, factor permutations,
partial traces, entropies, and norms.

Conventions
-----------
Tensor indexing is lexicographic with the FIRST factor most significant:
the product basis vector e_{a_1} x ... x e_{a_N} has flat index
a_1 d^{N-1} + ... + a_N.  With this ordering ``tensor(A, B)`` equals
``np.kron(A, B)`` and has block structure A[i, j] * B.

Factor permutations use the homomorphism convention:
``permutation_unitary(pi)`` maps the basis vector indexed by
(a_1, ..., a_N) to the one indexed by (a_{pi^{-1}(1)}, ..., a_{pi^{-1}(N)}).
Consequently U_{pi o rho} = U_pi U_rho, and conjugating a product operator
moves the content of slot m to slot pi(m):

    U_pi (A_1 x ... x A_N) U_pi^* = B_1 x ... x B_N,  B_{pi(m)} = A_m.

Some published treatments index the conjugation identity with pi instead
of pi^{-1}; transpositions (the only case we need verbatim) agree in both
conventions, and the composition law above is what this module guarantees.

All operations are pure; arrays are never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tolerances import TOL_HERM, TOL_PSD, TOL_TRACE, check_size_guard


@dataclass(frozen=True)
class FactorShape:
    """Shape of an N-fold tensor power: N factors of dimension d each."""

    num_factors: int
    factor_dim: int

    def __post_init__(self):
        if self.num_factors < 1:
            raise ValueError("need at least one tensor factor")
        if self.factor_dim < 2:
            raise ValueError("factor dimension must be at least 2")

    @property
    def dim(self) -> int:
        return self.factor_dim ** self.num_factors

    def check_guard(self, force: bool = False) -> "FactorShape":
        check_size_guard(self.dim, force=force)
        return self


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of one or more operators, first factor most significant."""
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def tensor_power(op: np.ndarray, n: int) -> np.ndarray:
    return tensor(*([op] * n))


# ---------------------------------------------------------------------------
# predicates and validation
# ---------------------------------------------------------------------------

def is_hermitian(a: np.ndarray, tol: float = TOL_HERM) -> bool:
    return np.abs(a - a.conj().T).max() <= tol


def is_unitary(a: np.ndarray, tol: float = TOL_HERM) -> bool:
    eye = np.eye(a.shape[0])
    return np.abs(a @ a.conj().T - eye).max() <= tol


def is_positive_semidefinite(a: np.ndarray, tol: float = TOL_PSD) -> bool:
    if not is_hermitian(a, tol=max(tol, TOL_HERM)):
        return False
    return np.linalg.eigvalsh(a).min() >= -tol


def is_density_matrix(rho: np.ndarray, tol_herm: float = TOL_HERM,
                      tol_trace: float = TOL_TRACE, tol_psd: float = TOL_PSD) -> bool:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return False
    if not is_hermitian(rho, tol=tol_herm):
        return False
    if abs(np.trace(rho) - 1.0) > tol_trace:
        return False
    return np.linalg.eigvalsh(rho).min() >= -tol_psd


def validate_density_matrix(rho: np.ndarray, tol_herm: float = TOL_HERM,
                            tol_trace: float = TOL_TRACE,
                            tol_psd: float = TOL_PSD) -> np.ndarray:
    """Return ``rho`` as a complex array, raising if it is not a valid state."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"state must be a square matrix, got shape {rho.shape}")
    herm = np.abs(rho - rho.conj().T).max()
    if herm > tol_herm:
        raise ValueError(f"state is not Hermitian (residual {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol_trace:
        raise ValueError(f"state trace is {tr}, not 1")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -tol_psd:
        raise ValueError(f"state has negative eigenvalue {lo:.3e}")
    return rho


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Full-rank random state from the Hilbert-Schmidt ensemble."""
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------------------
# factor permutations and embeddings
# ---------------------------------------------------------------------------

def _validate_permutation(pi, n: int) -> list:
    pi = list(pi)
    if sorted(pi) != list(range(n)):
        raise ValueError(f"{pi} is not a permutation of 0..{n - 1}")
    return pi


def _invert(pi: list) -> list:
    inv = [0] * len(pi)
    for k, v in enumerate(pi):
        inv[v] = k
    return inv


def permutation_unitary(pi, shape: FactorShape) -> np.ndarray:
    """Unitary permuting tensor factors; slot pi(m) receives factor m."""
    n, d = shape.num_factors, shape.factor_dim
    pi = _validate_permutation(pi, n)
    inv = _invert(pi)
    dim = shape.dim
    digits = np.empty((dim, n), dtype=np.int64)
    idx = np.arange(dim)
    for k in range(n - 1, -1, -1):
        digits[:, k] = idx % d
        idx //= d
    # target index of basis vector alpha is (alpha_{pi^{-1}(1)}, ...)
    permuted = digits[:, inv]
    weights = d ** np.arange(n - 1, -1, -1)
    rows = permuted @ weights
    u = np.zeros((dim, dim), dtype=complex)
    u[rows, np.arange(dim)] = 1.0
    return u


def permute_factors(a: np.ndarray, pi, shape: FactorShape) -> np.ndarray:
    """Conjugation U_pi a U_pi^* computed by axis transposition (no matmul)."""
    n, d = shape.num_factors, shape.factor_dim
    pi = _validate_permutation(pi, n)
    inv = _invert(pi)
    t = np.asarray(a, dtype=complex).reshape((d,) * (2 * n))
    axes = inv + [n + k for k in inv]
    return t.transpose(axes).reshape(shape.dim, shape.dim)


def embed_pair(a2: np.ndarray, i: int, j: int, shape: FactorShape) -> np.ndarray:
    """Embed a two-factor operator so it acts on factors (i, j) of N.

    The first factor of ``a2`` lands on slot i, the second on slot j; all
    other slots carry the identity.  Realized by conjugating a2 x 1 with
    the canonical factor permutation.
    """
    n, d = shape.num_factors, shape.factor_dim
    a2 = np.asarray(a2, dtype=complex)
    if not (0 <= i < n and 0 <= j < n and i != j):
        raise ValueError(f"factor indices ({i}, {j}) out of range for N={n}")
    if a2.shape != (d * d, d * d):
        raise ValueError(f"pair operator has shape {a2.shape}, expected {(d * d, d * d)}")
    if n == 2 and (i, j) == (0, 1):
        return a2.copy()
    full = tensor(a2, np.eye(d ** (n - 2))) if n > 2 else a2
    rest = [k for k in range(n) if k not in (i, j)]
    pi = [0] * n
    pi[0], pi[1] = i, j
    for slot, target in zip(range(2, n), rest):
        pi[slot] = target
    return permute_factors(full, pi, shape)


def swap_unitary(d: int) -> np.ndarray:
    """Two-factor swap: (phi x psi) -> (psi x phi)."""
    return permutation_unitary([1, 0], FactorShape(2, d))


def reorder_pair_basis(m: np.ndarray, d: int = 2) -> np.ndarray:
    """Re-index a two-factor operator between the two tensor orderings.

    Converts a matrix written with the SECOND factor most significant
    (basis order |00>, |10>, |01>, ... for d = 2) into this package's
    first-factor-most-significant ordering.  The map is an involution.
    """
    m = np.asarray(m, dtype=complex)
    perm = np.arange(d * d).reshape(d, d).T.reshape(-1)
    return m[np.ix_(perm, perm)]


# ---------------------------------------------------------------------------
# partial traces
# ---------------------------------------------------------------------------

def partial_trace(rho: np.ndarray, shape: FactorShape, keep: int) -> np.ndarray:
    """Trace out the last N - keep factors, returning the leading marginal."""
    n, d = shape.num_factors, shape.factor_dim
    if not 1 <= keep <= n:
        raise ValueError(f"keep={keep} out of range 1..{n}")
    if keep == n:
        return np.asarray(rho, dtype=complex).copy()
    da, db = d ** keep, d ** (n - keep)
    t = np.asarray(rho, dtype=complex).reshape(da, db, da, db)
    return np.einsum("arbr->ab", t)


def trace_first(rho: np.ndarray, shape: FactorShape, drop: int) -> np.ndarray:
    """Trace out the first ``drop`` factors, returning the trailing marginal."""
    n, d = shape.num_factors, shape.factor_dim
    if not 1 <= drop < n:
        raise ValueError(f"drop={drop} out of range 1..{n - 1}")
    da, db = d ** drop, d ** (n - drop)
    t = np.asarray(rho, dtype=complex).reshape(da, db, da, db)
    return np.einsum("rarb->ab", t)


# ---------------------------------------------------------------------------
# Hermitian matrix functions, entropies, norms
# ---------------------------------------------------------------------------

def hermitian_function(a: np.ndarray, fn, tol_herm: float = TOL_HERM) -> np.ndarray:
    """Apply a scalar function through the eigendecomposition of a Hermitian matrix."""
    a = np.asarray(a, dtype=complex)
    herm = np.abs(a - a.conj().T).max()
    if herm > tol_herm:
        raise ValueError(f"matrix function requires Hermitian input (residual {herm:.3e})")
    w, v = np.linalg.eigh(a)
    return (v * fn(w)) @ v.conj().T


def von_neumann_entropy(rho: np.ndarray, tol_psd: float = TOL_PSD) -> float:
    """Entropy -Tr[rho log rho] in nats, with 0 log 0 := 0."""
    w = np.linalg.eigvalsh(np.asarray(rho, dtype=complex))
    if w.min() < -tol_psd:
        raise ValueError(f"state has negative eigenvalue {w.min():.3e}")
    w = w[w > tol_psd]
    return float(-(w * np.log(w)).sum())


def relative_entropy(rho: np.ndarray, sigma: np.ndarray,
                     tol_psd: float = TOL_PSD) -> float:
    """Umegaki relative entropy Tr[rho (log rho - log sigma)].

    Returns ``inf`` when rho carries weight outside the support of sigma
    (support decided at tol_psd).
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch {rho.shape} vs {sigma.shape}")
    ws, vs = np.linalg.eigh(sigma)
    outside = ws <= tol_psd
    if outside.any():
        vout = vs[:, outside]
        leak = np.einsum("ij,jk,ki->", vout.conj().T, rho, vout).real
        if leak > tol_psd:
            return float("inf")
    wr, vr = np.linalg.eigh(rho)
    pos_r = wr > tol_psd
    term_r = float((wr[pos_r] * np.log(wr[pos_r])).sum())
    pos_s = ws > tol_psd
    diag = np.einsum("ij,jk,ki->i", vs.conj().T, rho, vs).real
    term_s = float((diag[pos_s] * np.log(ws[pos_s])).sum())
    return term_r - term_s


def hs_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def op_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, 2))


def trace_norm(a: np.ndarray) -> float:
    return float(np.linalg.svd(a, compute_uv=False).sum())


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a

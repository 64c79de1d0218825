"""Collision specifications and the two-particle collision channel.

A collision specification pairs a single-particle model with a family of
two-particle unitaries that conserve the pair energy.  It comes in two
kinds:

* ``sampled``: a finite weighted node list (w_k, U_k), weights positive
  and summing to one.  The axioms are: every node commutes with the pair
  Hamiltonian; some node is the identity; the weighted node set is closed
  under taking adjoints and under conjugation by the factor swap.
* ``closed_form``: the averaged channel Q(A) = sum_k w_k U_k A U_k^* given
  directly as a superoperator (possibly for a continuum of unitaries whose
  average is known exactly).

Superoperators act on row-stacked matrices: vec(A) = A.reshape(-1), and
conjugation by U has matrix kron(U, conj(U)).

The two built-in qubit families live on the four-torus of angles
(phi, theta, psi, eta) with the block-diagonal unitary (written in the
basis ordering where the first factor varies fastest, i.e. |00>, |10>,
|01>, |11>):

    [[e^{i eta},      0,                   0,              0],
     [0,              e^{i psi} cos(theta), -e^{i phi} sin(theta), 0],
     [0,              e^{-i phi} sin(theta), e^{-i psi} cos(theta), 0],
     [0,              0,                   0,              1]]

This family commutes with the pair Hamiltonian, contains the identity
(all angles zero), and is closed under adjoint (phi, -theta, -psi, -eta)
and swap conjugation (-phi, -theta, -psi, eta), both of which preserve
the product measures used below.  Averaged against the uniform measure
the channel pins the operator to the energy algebra; against the tilted
measure with per-angle density (1 + cos x)/(2 pi) the channel keeps
damped off-diagonal terms with factors 1/8, 1/4, 1/2.

Every matrix entry of U A U^* is a trigonometric polynomial of degree at
most two per angle, so an equispaced n-point product grid (trapezoid rule
on the torus, exact through degree n - 1) reproduces the continuum
average exactly for n >= 4 even after weighting by 1 + cos x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import swap_unitary, tensor
from .spectra import SingleParticleModel, shell_decomposition, shell_projector
from .tolerances import TOL_FIXED_EIG


@dataclass(frozen=True)
class Superoperator:
    """Linear map on a dim x dim operator space, stored over row-stacked vecs."""

    mat: np.ndarray
    dim: int

    def __call__(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=complex)
        if a.shape == (self.dim, self.dim):
            return (self.mat @ a.reshape(-1)).reshape(self.dim, self.dim)
        if a.ndim == 3 and a.shape[1:] == (self.dim, self.dim):
            flat = a.reshape(a.shape[0], -1)
            return (flat @ self.mat.T).reshape(a.shape)
        raise ValueError(f"operand shape {a.shape} does not match dim {self.dim}")

    def power(self, n: int) -> "Superoperator":
        return Superoperator(np.linalg.matrix_power(self.mat, n), self.dim)

    def choi(self) -> np.ndarray:
        """Choi matrix J[(i,k),(j,l)] = image(E_ij)[k,l]; PSD iff completely positive."""
        d = self.dim
        s4 = self.mat.reshape(d, d, d, d)
        return s4.transpose(2, 0, 3, 1).reshape(d * d, d * d)

    def is_hs_self_adjoint(self, tol: float = 1e-9) -> bool:
        return np.abs(self.mat - self.mat.conj().T).max() <= tol


def conjugation_superoperator(u: np.ndarray) -> Superoperator:
    u = np.asarray(u, dtype=complex)
    return Superoperator(np.kron(u, u.conj()), u.shape[0])


def superoperator_from_nodes(nodes, dim: int) -> Superoperator:
    """Weighted average of unitary conjugations, assembled in one pass."""
    ws = np.array([w for w, _ in nodes])
    us = np.stack([u for _, u in nodes]).astype(complex)
    s4 = np.einsum("m,mik,mjl->ijkl", ws, us, us.conj(), optimize=True)
    return Superoperator(s4.reshape(dim * dim, dim * dim), dim)


@dataclass(frozen=True)
class CollisionSpec:
    """A collision specification: model plus channel, with node list when sampled.

    ``kind`` is "sampled" (channel derived from nodes) or "closed_form"
    (channel authoritative).  Closed-form specs may still carry an explicit
    node family realizing the same average exactly; quadratic functionals
    that need individual unitaries (the dissipation form) use it.
    """

    model: SingleParticleModel
    name: str
    kind: str
    channel: Superoperator
    nodes: list | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.model.dim

    def pair_hamiltonian(self) -> np.ndarray:
        h = self.model.hamiltonian()
        eye = np.eye(self.dim)
        return tensor(h, eye) + tensor(eye, h)


def build_Q(spec: CollisionSpec) -> Superoperator:
    """The two-particle collision channel of the specification."""
    return spec.channel


# ---------------------------------------------------------------------------
# verification of the defining axioms
# ---------------------------------------------------------------------------

@dataclass
class SpecReport:
    passes: bool
    residuals: dict
    violations: list


def _node_key(u: np.ndarray, decimals: int = 6):
    r = np.round(u, decimals) + 0.0     # fold -0.0 into +0.0
    return tuple(map(complex, r.reshape(-1)))


def _merge_nodes(nodes, decimals: int = 9) -> list:
    ws = np.array([w for w, _ in nodes])
    us = np.stack([u for _, u in nodes]).astype(complex)
    keys = np.round(us, decimals) + 0.0     # fold -0.0 into +0.0
    merged = {}
    for k in range(ws.size):
        key = keys[k].tobytes()
        if key in merged:
            merged[key][0] += ws[k]
        else:
            merged[key] = [ws[k], us[k]]
    return sorted(((float(w), u) for w, u in merged.values()),
                  key=lambda wu: -wu[0])


def symmetrize_nodes(nodes, d: int) -> list:
    """Close a weighted node list under adjoints and swap conjugation.

    Each node is spread with weight w/4 over its orbit under
    {id, adjoint, swap, adjoint o swap}; coinciding unitaries are merged
    with summed weights.  The result satisfies the closure axioms exactly.
    """
    v = swap_unitary(d)
    out = []
    for w, u in nodes:
        u = np.asarray(u, dtype=complex)
        su = v @ u @ v.conj().T
        for variant in (u, u.conj().T, su, su.conj().T):
            out.append((w / 4.0, variant))
    return _merge_nodes(out)


def _closure_residual(nodes, transform, weight_tol: float = 1e-9):
    """Worst mismatch when mapping each node through ``transform``.

    Returns (matrix residual, weight residual) maximized over nodes; the
    transformed node is located by a rounded-entry key with a linear-scan
    fallback so grid rounding cannot cause false misses.
    """
    table = {}
    for w, u in nodes:
        key = _node_key(u)
        table.setdefault(key, []).append((w, u))
    worst_mat, worst_w = 0.0, 0.0
    for w, u in nodes:
        target = transform(u)
        hits = table.get(_node_key(target), [])
        best = None
        for wv, uv in hits:
            dist = np.abs(uv - target).max()
            if best is None or dist < best[0]:
                best = (dist, wv)
        if best is None or best[0] > 1e-6:
            best = (np.inf, 0.0)
            for wv, uv in nodes:
                dist = np.abs(uv - target).max()
                if dist < best[0]:
                    best = (dist, wv)
        worst_mat = max(worst_mat, best[0])
        worst_w = max(worst_w, abs(best[1] - w))
    return worst_mat, worst_w if worst_w > weight_tol else 0.0


def verify_spec(spec: CollisionSpec, tol: float = 1e-9) -> SpecReport:
    """Check the defining axioms, reporting each residual.

    Sampled specs are checked node-wise (unitarity, energy conservation,
    identity membership, adjoint and swap closure as weighted sets).
    Closed-form channels are checked as maps: trace preserving, unital,
    Hermiticity preserving, self-adjoint for the Hilbert-Schmidt pairing,
    and completely positive via the Choi matrix.
    """
    residuals = {}
    d = spec.dim
    if spec.kind == "sampled":
        nodes = spec.nodes
        h2 = spec.pair_hamiltonian()
        eye = np.eye(d * d)
        us = np.stack([u for _, u in nodes])
        ws = np.array([w for w, _ in nodes])
        residuals["unitary"] = float(
            np.abs(us @ us.conj().transpose(0, 2, 1) - eye).max())
        residuals["commutes_with_pair_hamiltonian"] = float(
            np.abs(us @ h2 - h2 @ us).max())
        residuals["contains_identity"] = float(
            min(np.abs(u - eye).max() for _, u in nodes))
        residuals["weights_normalized"] = float(abs(ws.sum() - 1.0)) + (
            0.0 if ws.min() > 0 else float(-ws.min()) + 1.0)
        adj_m, adj_w = _closure_residual(nodes, lambda u: u.conj().T)
        v = swap_unitary(d)
        swap_m, swap_w = _closure_residual(nodes, lambda u: v @ u @ v.conj().T)
        residuals["closed_under_adjoint"] = float(max(adj_m, adj_w))
        residuals["closed_under_swap"] = float(max(swap_m, swap_w))
    else:
        q = spec.channel
        dim2 = d * d
        eye = np.eye(dim2).reshape(-1)
        # trace of the image of every input: rows of mat summed against traces
        tr_map = eye @ q.mat
        residuals["trace_preserving"] = float(np.abs(tr_map - eye).max())
        residuals["unital"] = float(np.abs(q.mat @ eye - eye).max())
        s4 = q.mat.reshape(dim2, dim2, dim2, dim2)
        residuals["hermiticity_preserving"] = float(
            np.abs(s4 - s4.transpose(1, 0, 3, 2).conj()).max())
        residuals["hs_self_adjoint"] = float(np.abs(q.mat - q.mat.conj().T).max())
        residuals["completely_positive"] = float(
            max(0.0, -np.linalg.eigvalsh(q.choi()).min()))
    violations = [f"{name}: residual {r:.3e}" for name, r in residuals.items()
                  if r > tol]
    return SpecReport(passes=not violations, residuals=residuals,
                      violations=violations)


# ---------------------------------------------------------------------------
# built-in qubit families
# ---------------------------------------------------------------------------

def _qubit_grid_nodes(points: int, tilted: bool) -> list:
    """Equispaced product-grid discretization of the four-torus family."""
    if points < 4:
        raise ValueError("need at least 4 points per angle for exactness")
    angles = 2.0 * np.pi * np.arange(points) / points
    if tilted:
        w1 = (1.0 + np.cos(angles)) / points
    else:
        w1 = np.full(points, 1.0 / points)
    phi, theta, psi, eta = [g.reshape(-1) for g in np.meshgrid(
        angles, angles, angles, angles, indexing="ij")]
    wgrid = (w1[:, None, None, None] * w1[None, :, None, None]
             * w1[None, None, :, None] * w1[None, None, None, :]).reshape(-1)
    keep = wgrid > 1e-15
    phi, theta, psi, eta, wgrid = (a[keep] for a in (phi, theta, psi, eta, wgrid))
    wgrid = wgrid / wgrid.sum()
    m = wgrid.size
    c, s = np.cos(theta), np.sin(theta)
    u = np.zeros((m, 4, 4), dtype=complex)
    u[:, 0, 0] = np.exp(1j * eta)
    u[:, 1, 1] = np.exp(1j * psi) * c
    u[:, 1, 2] = -np.exp(1j * phi) * s
    u[:, 2, 1] = np.exp(-1j * phi) * s
    u[:, 2, 2] = np.exp(-1j * psi) * c
    u[:, 3, 3] = 1.0
    # the family above is written with the first factor varying fastest;
    # re-index into the package ordering
    perm = np.array([0, 2, 1, 3])
    u = u[:, perm][:, :, perm]
    # at sin(theta) = 0 the phi-dependence drops out and grid points
    # coincide; merge them so the weighted set is duplicate-free
    return _merge_nodes([(float(w), u[k]) for k, w in enumerate(wgrid)])


def _qubit_closed_channel(tilted: bool) -> Superoperator:
    """Entrywise form of the averaged qubit channel, assembled per matrix unit.

    Written first in the first-factor-fastest ordering |00>, |10>, |01>,
    |11> where the damping factors read off the measure moments, then
    re-indexed.
    """
    if tilted:
        off = {(0, 1): 0.125, (0, 2): 0.125, (0, 3): 0.5,
               (1, 3): 0.25, (2, 3): 0.25}
    else:
        off = {}
    s = np.zeros((16, 16), dtype=complex)
    for r in range(4):
        for c in range(4):
            col = r * 4 + c
            image = np.zeros((4, 4), dtype=complex)
            if r == c:
                if r in (1, 2):
                    image[1, 1] = image[2, 2] = 0.5
                else:
                    image[r, c] = 1.0
            else:
                f = off.get((r, c), off.get((c, r), 0.0))
                image[r, c] = f
            s[:, col] = image.reshape(-1)
    perm = np.array([0, 2, 1, 3])
    s4 = s.reshape(4, 4, 4, 4)
    s4 = s4[np.ix_(perm, perm, perm, perm)]
    return Superoperator(s4.reshape(16, 16), 4)


QUBIT_MODEL = SingleParticleModel((0, 1))


def qubit_uniform_spec(points_per_angle: int | None = None) -> CollisionSpec:
    """Uniform-measure qubit family.

    The averaged channel is the conditional expectation onto the pair
    energy algebra: diagonals project to shell averages, off-diagonal
    entries vanish.  With ``points_per_angle`` set, returns the sampled
    grid surrogate instead (exact for n >= 4).
    """
    if points_per_angle is None:
        return CollisionSpec(QUBIT_MODEL, "qubit_uniform", "closed_form",
                             _qubit_closed_channel(tilted=False),
                             nodes=_qubit_grid_nodes(8, tilted=False))
    nodes = _qubit_grid_nodes(points_per_angle, tilted=False)
    return CollisionSpec(QUBIT_MODEL, f"qubit_uniform_sampled{points_per_angle}",
                         "sampled", superoperator_from_nodes(nodes, 4), nodes)


def qubit_tilted_spec(points_per_angle: int | None = None) -> CollisionSpec:
    """Tilted-measure qubit family: per-angle density (1 + cos x)/(2 pi).

    The averaged channel damps off-diagonal entries by 1/8, 1/4, 1/2
    instead of killing them, so it is not idempotent, but its powers
    converge to the same conditional expectation.
    """
    if points_per_angle is None:
        return CollisionSpec(QUBIT_MODEL, "qubit_tilted", "closed_form",
                             _qubit_closed_channel(tilted=True),
                             nodes=_qubit_grid_nodes(8, tilted=True))
    nodes = _qubit_grid_nodes(points_per_angle, tilted=True)
    return CollisionSpec(QUBIT_MODEL, f"qubit_tilted_sampled{points_per_angle}",
                         "sampled", superoperator_from_nodes(nodes, 4), nodes)


def exact_EA2_spec(model: SingleParticleModel) -> CollisionSpec:
    """Exact conditional expectation onto the pair energy algebra.

    The channel maps X to sum_E Tr[P_E X] sigma_E over the two-particle
    shells.  It is the idempotent limit of every ergodic family on this
    model; no finite node family is attached.
    """
    d = model.dim
    s = np.zeros((d ** 4, d ** 4), dtype=complex)
    for E, _ in shell_decomposition(model, 2):
        p = shell_projector(model, 2, E)
        sigma = p / np.trace(p).real
        s += np.outer(sigma.reshape(-1), p.reshape(-1).conj())
    return CollisionSpec(model, "exact_ea2", "closed_form",
                         Superoperator(s, d * d), nodes=None)


def identity_spec(model: SingleParticleModel) -> CollisionSpec:
    """Degenerate specification containing only the trivial collision."""
    d = model.dim
    nodes = [(1.0, np.eye(d * d, dtype=complex))]
    return CollisionSpec(model, "identity_only", "sampled",
                         superoperator_from_nodes(nodes, d * d), nodes)


# ---------------------------------------------------------------------------
# fixed space and ergodicity
# ---------------------------------------------------------------------------

def fixed_space_of_Q(q: Superoperator, tol: float = TOL_FIXED_EIG) -> list:
    """Orthonormal basis (Hilbert-Schmidt) of the eigenvalue-1 eigenspace."""
    asym = np.abs(q.mat - q.mat.conj().T).max()
    if asym > 1e-8 * max(1.0, np.abs(q.mat).max()):
        raise ValueError(f"channel is not HS self-adjoint (residual {asym:.3e})")
    w, v = np.linalg.eigh((q.mat + q.mat.conj().T) / 2.0)
    cols = np.where(np.abs(w - 1.0) <= tol)[0]
    return [v[:, k].reshape(q.dim, q.dim) for k in cols]


def is_ergodic(spec: CollisionSpec, tol: float = TOL_FIXED_EIG) -> bool:
    """True iff the channel's fixed space is exactly the pair energy algebra."""
    fixed = fixed_space_of_Q(build_Q(spec))
    shells = shell_decomposition(spec.model, 2)
    if len(fixed) != len(shells):
        return False
    projs = []
    for E, idxs in shells:
        p = shell_projector(spec.model, 2, E)
        projs.append(p / np.sqrt(len(idxs)))
    for f in fixed:
        inside = sum(np.vdot(p, f) * p for p in projs)
        if np.abs(f - inside).max() > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# sampled-node file format
# ---------------------------------------------------------------------------

def parse_sampled_nodes(text: str, dim: int) -> list:
    """Parse a plain-text weighted unitary list.

    Grammar (comments start with '#'):

        dim <n>
        weight <w>
        <n rows of n "re im" pairs>
        weight <w>
        ...

    Matrices are read in the package's basis ordering (first factor most
    significant).
    """
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.extend(line.split())
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of sampled-node file")
        tok = tokens[pos]
        pos += 1
        return tok

    if take() != "dim":
        raise ValueError("sampled-node file must start with 'dim <n>'")
    n = int(take())
    if n != dim:
        raise ValueError(f"file declares dim {n}, model requires {dim}")
    nodes = []
    while pos < len(tokens):
        if take() != "weight":
            raise ValueError("expected 'weight <w>' before each matrix")
        w = float(take())
        entries = np.array([float(take()) for _ in range(2 * n * n)])
        u = (entries[0::2] + 1j * entries[1::2]).reshape(n, n)
        nodes.append((w, u))
    if not nodes:
        raise ValueError("sampled-node file contains no matrices")
    total = sum(w for w, _ in nodes)
    if total <= 0:
        raise ValueError("node weights must be positive")
    return [(w / total, u) for w, u in nodes]


def sampled_spec_from_file(path, model: SingleParticleModel,
                           symmetrize: bool = True,
                           name: str | None = None) -> CollisionSpec:
    """Load a sampled specification from disk; closure is applied by default."""
    with open(path) as fh:
        nodes = parse_sampled_nodes(fh.read(), model.dim * model.dim)
    if symmetrize:
        nodes = symmetrize_nodes(nodes, model.dim)
    return CollisionSpec(model, name or f"sampled_file:{path}", "sampled",
                         superoperator_from_nodes(nodes, model.dim ** 2), nodes)


def spec_by_name(name: str, model: SingleParticleModel,
                 points_per_angle: int | None = None) -> CollisionSpec:
    """Resolve the CLI spec names."""
    if name == "qubit_uniform":
        _require_qubit(model)
        return qubit_uniform_spec(points_per_angle)
    if name == "qubit_tilted":
        _require_qubit(model)
        return qubit_tilted_spec(points_per_angle)
    if name == "exact_ea2":
        return exact_EA2_spec(model)
    if name.startswith("sampled_file:"):
        return sampled_spec_from_file(name.split(":", 1)[1], model)
    raise ValueError(f"unknown collision spec '{name}'")


def _require_qubit(model: SingleParticleModel) -> None:
    if model.dim != 2:
        raise ValueError("qubit specs need a two-level model")
    if model.energies[0] == model.energies[1]:
        raise ValueError("qubit specs need distinct energies")

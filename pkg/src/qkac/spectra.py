"""Single-particle spectral model, N-particle energy shells, and the
collision-move equivalence classes that label the minimal projections of
the fixed-point algebra.

Energies are exact integers so shell membership and the pair-move
condition e_i + e_j = e_k + e_l are decided exactly; rational spectra
must be pre-scaled by the caller.

Classification runs over occupancy vectors rather than raw multi-indices:
permuting a multi-index is itself a chain of allowed pair moves, so each
class is a union of permutation orbits and the quotient state space is
the (much smaller) set of occupancy vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .operators import FactorShape
from .tolerances import check_size_guard


@dataclass(frozen=True)
class SingleParticleModel:
    """Diagonal single-particle Hamiltonian with integer energy levels.

    The standard basis is the eigenbasis; level j has energy
    ``energies[j]``.  Energies must be sorted ascending.
    """

    energies: tuple

    def __post_init__(self):
        e = tuple(int(x) for x in self.energies)
        if len(e) < 2:
            raise ValueError("need at least two levels")
        if any(int(x) != x for x in self.energies):
            raise ValueError("energies must be integers")
        if list(e) != sorted(e):
            raise ValueError("energies must be sorted ascending")
        object.__setattr__(self, "energies", e)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def hamiltonian(self) -> np.ndarray:
        return np.diag(np.asarray(self.energies, dtype=complex))

    def shape(self, num_factors: int) -> FactorShape:
        return FactorShape(num_factors, self.dim)


def multi_index_energy(model: SingleParticleModel, alpha) -> int:
    return sum(model.energies[a] for a in alpha)


def occupancy(alpha, d: int) -> tuple:
    """Occupancy vector: entry j counts how often level j appears in alpha."""
    m = [0] * d
    for a in alpha:
        m[a] += 1
    return tuple(m)


def occupancy_energy(model: SingleParticleModel, m) -> int:
    return int(np.dot(m, model.energies))


def _occupancy_vectors(d: int, n: int):
    """All length-d tuples of non-negative integers summing to n."""
    if d == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _occupancy_vectors(d - 1, n - first):
            yield (first,) + rest


def shell_decomposition(model: SingleParticleModel, num_factors: int,
                        force: bool = False) -> list:
    """Partition the product basis by total energy.

    Returns a list of (E, multi-index list) sorted by E; the lists order
    multi-indices lexicographically, matching the flat basis index.
    """
    shape = model.shape(num_factors)
    check_size_guard(shape.dim, force=force)
    shells = {}
    for alpha in itertools.product(range(model.dim), repeat=num_factors):
        shells.setdefault(multi_index_energy(model, alpha), []).append(alpha)
    return sorted(shells.items())


def shell_energies(model: SingleParticleModel, num_factors: int,
                   force: bool = False) -> list:
    seen = set()
    for m in _occupancy_vectors(model.dim, num_factors):
        seen.add(occupancy_energy(model, m))
    return sorted(seen)


def _flat_index(alpha, d: int) -> int:
    idx = 0
    for a in alpha:
        idx = idx * d + a
    return idx


def shell_projector(model: SingleParticleModel, num_factors: int, E: int,
                    force: bool = False) -> np.ndarray:
    """Orthogonal projection onto the energy-E eigenspace of the free Hamiltonian."""
    shells = dict(shell_decomposition(model, num_factors, force=force))
    if E not in shells:
        raise ValueError(f"E={E} is not an N-particle energy of this model")
    shape = model.shape(num_factors)
    p = np.zeros((shape.dim, shape.dim), dtype=complex)
    for alpha in shells[E]:
        k = _flat_index(alpha, model.dim)
        p[k, k] = 1.0
    return p


def shell_state(model: SingleParticleModel, num_factors: int, E: int,
                force: bool = False) -> np.ndarray:
    """Normalized shell projection (the microcanonical state at energy E)."""
    p = shell_projector(model, num_factors, E, force=force)
    return p / np.trace(p).real


# ---------------------------------------------------------------------------
# equivalence classes of multi-indices under energy-conserving pair moves
# ---------------------------------------------------------------------------

@dataclass
class EnergyShellPartition:
    """Equivalence classes of one energy shell.

    ``classes[c]`` lists the multi-indices of class c; ``class_occupancies[c]``
    is the set of occupancy vectors those multi-indices realize.
    """

    E: int
    multi_indices: list
    classes: list
    class_occupancies: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return len(self.multi_indices)

    @property
    def num_classes(self) -> int:
        return len(self.classes)


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _pair_move_groups(model: SingleParticleModel) -> dict:
    """Unordered level pairs grouped by energy sum."""
    groups = {}
    d = model.dim
    for i in range(d):
        for j in range(i, d):
            groups.setdefault(model.energies[i] + model.energies[j], []).append((i, j))
    return groups


def _occupancy_classes(model: SingleParticleModel, occupancies) -> list:
    """Union-find closure of occupancy vectors under energy-conserving pair moves."""
    groups = _pair_move_groups(model)
    uf = _UnionFind(occupancies)
    members = set(occupancies)
    for m in occupancies:
        for s, pairs in groups.items():
            if len(pairs) < 2:
                continue
            for (i, j) in pairs:
                if i == j:
                    if m[i] < 2:
                        continue
                elif m[i] < 1 or m[j] < 1:
                    continue
                for (k, l) in pairs:
                    if (k, l) == (i, j):
                        continue
                    mm = list(m)
                    mm[i] -= 1
                    mm[j] -= 1
                    mm[k] += 1
                    mm[l] += 1
                    mm = tuple(mm)
                    if mm in members:
                        uf.union(m, mm)
    roots = {}
    for m in occupancies:
        roots.setdefault(uf.find(m), []).append(m)
    return sorted(roots.values())


def classify_shell(model: SingleParticleModel, num_factors: int, E: int,
                   force: bool = False) -> EnergyShellPartition:
    """Split the shell at energy E into pair-move equivalence classes.

    Two multi-indices are equivalent iff connected by a chain of moves that
    replace the levels at two positions by levels with the same energy sum,
    leaving all other positions fixed.
    """
    shells = dict(shell_decomposition(model, num_factors, force=force))
    if E not in shells:
        raise ValueError(f"E={E} is not an N-particle energy of this model")
    indices = shells[E]
    by_occ = {}
    for alpha in indices:
        by_occ.setdefault(occupancy(alpha, model.dim), []).append(alpha)
    occ_classes = _occupancy_classes(model, sorted(by_occ))
    classes = []
    class_occs = []
    for occ_class in occ_classes:
        block = []
        for m in occ_class:
            block.extend(by_occ[m])
        classes.append(sorted(block))
        class_occs.append(set(occ_class))
    order = sorted(range(len(classes)), key=lambda k: classes[k][0])
    return EnergyShellPartition(
        E=E,
        multi_indices=indices,
        classes=[classes[k] for k in order],
        class_occupancies=[class_occs[k] for k in order],
    )


def is_fully_ergodic(model: SingleParticleModel, num_factors: int,
                     force: bool = False):
    """True iff every shell is a single class.  Also returns per-shell counts."""
    counts = {}
    for E, _ in shell_decomposition(model, num_factors, force=force):
        counts[E] = classify_shell(model, num_factors, E, force=force).num_classes
    return all(c == 1 for c in counts.values()), counts


def accidental_relations(model: SingleParticleModel, num_factors: int,
                         force: bool = False) -> list:
    """Shells whose energy is realized by more than one occupancy vector.

    For integer spectra standing in for rationally independent ones, an
    empty result certifies that at this particle number every shell is a
    single permutation orbit, so no unintended degeneracies occur.
    """
    check_size_guard(model.dim ** num_factors, force=force)
    by_energy = {}
    for m in _occupancy_vectors(model.dim, num_factors):
        by_energy.setdefault(occupancy_energy(model, m), []).append(m)
    return sorted((E, ms) for E, ms in by_energy.items() if len(ms) > 1)


def class_projections(model: SingleParticleModel, num_factors: int,
                      force: bool = False) -> list:
    """Minimal projections, one per class, over all shells.

    Returns a list of (E, projection matrix, rank) sorted by shell and class.
    """
    shape = model.shape(num_factors)
    check_size_guard(shape.dim, force=force)
    out = []
    for E, _ in shell_decomposition(model, num_factors, force=force):
        part = classify_shell(model, num_factors, E, force=force)
        for block in part.classes:
            p = np.zeros((shape.dim, shape.dim), dtype=complex)
            for alpha in block:
                k = _flat_index(alpha, model.dim)
                p[k, k] = 1.0
            out.append((E, p, len(block)))
    return out


def commutant_projection(model: SingleParticleModel, num_factors: int,
                         rho: np.ndarray, force: bool = False) -> np.ndarray:
    """Conditional expectation onto the span of the minimal class projections.

    Maps rho to  sum_c Tr[P_c rho] / rank(P_c) * P_c.  Idempotent, trace
    preserving, positivity preserving, and Hilbert-Schmidt self-adjoint.
    The output is diagonal in the product eigenbasis, hence separable.
    """
    shape = model.shape(num_factors)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (shape.dim, shape.dim):
        raise ValueError(f"state has shape {rho.shape}, expected {(shape.dim,) * 2}")
    diag = np.diagonal(rho)
    out = np.zeros(shape.dim, dtype=complex)
    for E, _ in shell_decomposition(model, num_factors, force=force):
        part = classify_shell(model, num_factors, E, force=force)
        for block in part.classes:
            idx = [_flat_index(alpha, model.dim) for alpha in block]
            out[idx] = diag[idx].sum() / len(idx)
    return np.diag(out)

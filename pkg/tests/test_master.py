import numpy as np
import pytest

from qkac.collisions import build_Q, exact_EA2_spec, identity_spec
from qkac.errors import NumericalContractError
from qkac.master import (KacGenerator, apply_LN, apply_QN,
                         entropy_production, evolve_master, ln_null_basis,
                         permutation_covariance_check, qn_spectrum,
                         steady_states_basis, symmetrize_state)
from qkac.operators import (commutator, embed_pair, partial_trace,
                            relative_entropy, trace_norm)
from qkac.spectra import (SingleParticleModel, commutant_projection,
                          shell_state)
from conftest import random_matrix, random_state


def pair_sum_oracle(spec, rho, num_particles):
    """Direct summation oracle: embed every collision unitary at every
    pair, conjugate, and average with the node weights."""
    from qkac.operators import FactorShape

    shape = FactorShape(num_particles, spec.model.dim)
    total = np.zeros_like(rho)
    pairs = [(i, j) for i in range(num_particles)
             for j in range(i + 1, num_particles)]
    for (i, j) in pairs:
        for w, u in spec.nodes:
            ue = embed_pair(u, i, j, shape)
            total += w * (ue @ rho @ ue.conj().T)
    return total / len(pairs)


def test_apply_qn_fixes_shell_states(tilted_spec):
    gen = KacGenerator(tilted_spec, 3)
    for E in (0, 1, 2, 3):
        sigma = shell_state(tilted_spec.model, 3, E)
        assert np.abs(apply_QN(gen, sigma) - sigma).max() < 1e-13


def test_apply_qn_two_particles_is_the_pair_channel(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 2)
    q = build_Q(tilted_spec)
    a = random_matrix(rng, 4)
    assert np.abs(apply_QN(gen, a) - q(a)).max() < 1e-13


def test_apply_qn_matches_direct_summation_oracle(uniform_spec):
    gen = KacGenerator(uniform_spec, 3)
    rho = np.zeros((8, 8), dtype=complex)
    rho[4, 4] = 1.0  # |100><100|
    got = apply_QN(gen, rho)
    want = pair_sum_oracle(uniform_spec, rho, 3)
    assert np.abs(got - want).max() < 1e-12
    # supported on the E=1 shell: indices 1, 2, 4
    support = np.where(np.abs(np.diag(got)) > 1e-14)[0]
    assert set(support) <= {1, 2, 4}
    assert abs(np.trace(got) - 1.0) < 1e-13


def test_apply_qn_random_oracle(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 3)
    rho = random_state(rng, 8)
    assert np.abs(apply_QN(gen, rho)
                  - pair_sum_oracle(tilted_spec, rho, 3)).max() < 1e-12


def test_apply_ln_trivia(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 3)
    sigma = shell_state(tilted_spec.model, 3, 2)
    assert np.abs(apply_LN(gen, sigma)).max() < 1e-12
    rho = random_state(rng, 8)
    assert abs(np.trace(apply_LN(gen, rho))) < 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_qn_spectrum_in_unit_interval(uniform_spec, tilted_spec, n):
    for spec in (uniform_spec, tilted_spec):
        w = qn_spectrum(KacGenerator(spec, n))
        assert w.min() > -1e-10
        assert w.max() < 1.0 + 1e-10


def test_evolve_time_zero(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 2)
    rho = random_state(rng, 4)
    assert np.array_equal(evolve_master(gen, rho, 0.0), rho)


def test_evolve_rejects_negative_time(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 2)
    with pytest.raises(ValueError):
        evolve_master(gen, random_state(rng, 4), -0.1)


def test_evolve_semigroup_property(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 3)
    rho = random_state(rng, 8)
    one = evolve_master(gen, evolve_master(gen, rho, 0.35), 0.65)
    two = evolve_master(gen, rho, 1.0)
    assert np.abs(one - two).max() < 1e-9


def test_evolve_preserves_state_properties(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 3)
    rho = random_state(rng, 8)
    out = evolve_master(gen, rho, 2.0)
    assert abs(np.trace(out) - 1.0) < 1e-12
    assert np.abs(out - out.conj().T).max() < 1e-11
    assert np.linalg.eigvalsh(out).min() > -1e-9


def test_evolve_long_time_reaches_commutant_projection(uniform_spec,
                                                       tilted_spec, rng):
    for spec in (uniform_spec, tilted_spec):
        for n in (2, 3):
            gen = KacGenerator(spec, n)
            rho = random_state(rng, 2 ** n)
            out = evolve_master(gen, rho, 50.0 / n)
            limit = commutant_projection(spec.model, n, rho)
            assert trace_norm(out - limit) < 1e-6


def test_null_space_matches_classes_ergodic(uniform_spec, tilted_spec):
    # cross-module oracle: fixed-space dimension equals the class count
    for spec in (uniform_spec, tilted_spec):
        for n in (2, 3):
            gen = KacGenerator(spec, n)
            basis = ln_null_basis(gen)
            assert len(basis) == n + 1  # one class per shell for two levels


def test_null_space_matches_classes_d3():
    model = SingleParticleModel((0, 1, 2))
    spec = exact_EA2_spec(model)
    from qkac.spectra import class_projections

    for n in (2, 3):
        gen = KacGenerator(spec, n)
        assert len(ln_null_basis(gen)) == len(class_projections(model, n))


def test_null_space_nonergodic_spec(qubit_model):
    # the identity-only spec fixes everything; all blocks are scanned
    gen = KacGenerator(identity_spec(qubit_model), 2)
    assert len(ln_null_basis(gen)) == 16


def test_null_vectors_commute_and_are_diagonal(uniform_spec):
    gen = KacGenerator(uniform_spec, 3)
    basis = ln_null_basis(gen)
    for a in basis:
        off = a - np.diag(np.diag(a))
        assert np.abs(off).max() < 1e-9
        for b in basis:
            assert np.abs(commutator(a, b)).max() < 1e-9


def test_steady_states_basis_two_particles(uniform_spec):
    states = steady_states_basis(KacGenerator(uniform_spec, 2))
    assert len(states) == 3
    by_energy = {E: s for E, s, _ in states}
    assert np.allclose(np.diag(by_energy[0]), [1, 0, 0, 0])
    assert np.allclose(np.diag(by_energy[1]), [0, 0.5, 0.5, 0])
    assert np.allclose(np.diag(by_energy[2]), [0, 0, 0, 1])
    gen = KacGenerator(uniform_spec, 2)
    for E, s, rank in states:
        # every basis state is a fixed point of the evolution,
        # diagonal in the product eigenbasis (hence separable)
        assert np.abs(evolve_master(gen, s, 1.0) - s).max() < 1e-12
        assert np.abs(s - np.diag(np.diag(s))).max() == 0.0


def test_steady_states_nonergodic_mismatch_raises(qubit_model):
    gen = KacGenerator(identity_spec(qubit_model), 2)
    with pytest.raises(NumericalContractError):
        steady_states_basis(gen)
    # without the cross-check the class projections are still returned
    states = steady_states_basis(gen, cross_check=False)
    assert len(states) == 3


def test_entropy_production_zero_at_fixed_point(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 2)
    rho = random_state(rng, 4)
    fixed = commutant_projection(tilted_spec.model, 2, rho)
    rate, _ = entropy_production(gen, fixed)
    assert abs(rate) < 1e-10


def test_entropy_production_nonnegative(uniform_spec, tilted_spec, rng):
    for spec in (uniform_spec, tilted_spec):
        for n in (2, 3):
            gen = KacGenerator(spec, n)
            for _ in range(25):
                rho = random_state(rng, 2 ** n)
                rate, ratio = entropy_production(gen, rho)
                assert rate > -1e-9
                assert ratio is None or ratio > -1e-9


def test_entropy_production_matches_finite_difference(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 2)
    rho = random_state(rng, 4)
    fixed = commutant_projection(tilted_spec.model, 2, rho)
    rate, _ = entropy_production(gen, rho)
    delta = 1e-5
    evolved = evolve_master(gen, rho, delta)
    fd = (relative_entropy(rho, fixed) - relative_entropy(evolved, fixed)) / delta
    assert abs(fd - rate) < 5e-4 * max(1.0, abs(rate))


def test_permutation_covariance(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 3)
    rho = symmetrize_state(random_state(rng, 8), gen.shape)
    res = permutation_covariance_check(gen, rho, [1, 2, 0], rng=rng)
    assert res["symmetric_state"] < 1e-10
    assert res["pair_relabel"] < 1e-10
    res_id = permutation_covariance_check(gen, rho, [0, 1, 2], rng=rng)
    assert res_id["symmetric_state"] == 0.0
    res_swap = permutation_covariance_check(gen, rho, [1, 0, 2], rng=rng)
    assert res_swap["pair_relabel"] < 1e-10


def test_symmetric_states_stay_symmetric(tilted_spec, rng):
    gen = KacGenerator(tilted_spec, 3)
    rho = symmetrize_state(random_state(rng, 8), gen.shape)
    out = evolve_master(gen, rho, 0.7)
    assert np.abs(symmetrize_state(out, gen.shape) - out).max() < 1e-10


def test_marginal_flow_consistency(tilted_spec, rng):
    # for symmetric N-particle data the one-particle marginal flows with
    # twice the pair-channel gain of the two-particle marginal
    gen = KacGenerator(tilted_spec, 3)
    rho = symmetrize_state(random_state(rng, 8), gen.shape)
    m2 = partial_trace(rho, gen.shape, keep=2)
    q = build_Q(tilted_spec)
    from qkac.operators import FactorShape

    want = 2.0 * (partial_trace(q(m2), FactorShape(2, 2), keep=1)
                  - partial_trace(m2, FactorShape(2, 2), keep=1))
    delta = 1e-6
    evolved = evolve_master(gen, rho, delta, renormalize=False)
    fd = (partial_trace(evolved, gen.shape, keep=1)
          - partial_trace(rho, gen.shape, keep=1)) / delta
    assert np.abs(fd - want).max() < 1e-4

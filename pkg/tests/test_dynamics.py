import itertools

import numpy as np
import pytest

from dfslearn.algebra import AlgebraBasis, AlgebraStructure
from dfslearn.dynamics import (Dataset, Instrument, MeasurementChain, ZeroProbabilityBranch,
                               conditional_probability, conditioned_state, generate_dataset,
                               random_instrument, relative_position, sample_chain,
                               sequence_probability)
from dfslearn.generator import Propagator, model_propagator
from dfslearn.io import read_dataset, write_dataset
from dfslearn.linalg import haar_unitary, random_density_matrix
from dfslearn.physmodels import random_structured_model

S = AlgebraStructure.parse


def full_basis(n):
    return AlgebraBasis.identity(S(f"({{{n},1}})"))


def random_propagator(n, rng, tau=0.4):
    return model_propagator(random_structured_model(S(f"({{1,{n}}})"), scale=1.0, rng=rng), tau)


def test_fine_instrument_is_complete_rank_one(rng):
    inst = random_instrument(full_basis(4), rng)
    assert inst.outcome_count == 4
    inst.validate()
    assert inst.completeness_error() < 1e-10
    np.testing.assert_allclose([np.trace(e).real for e in inst.projectors], 1, atol=1e-12)


def test_scalar_algebra_gives_single_outcome(rng):
    inst = random_instrument(AlgebraBasis.identity(S("({1,3})")), rng)
    assert inst.outcome_count == 1
    np.testing.assert_allclose(inst.projectors[0], np.eye(3), atol=1e-12)


def test_restricted_instrument_with_complement(rng):
    basis = AlgebraBasis(S("n0=2;{3,1}"), haar_unitary(5, rng))
    inst = random_instrument(basis, rng)
    assert inst.outcome_count == 4 and inst.includes_complement
    ranks = [round(np.trace(e).real) for e in inst.projectors]
    assert ranks == [1, 1, 1, 2]
    inst.validate()
    no_comp = random_instrument(basis, rng, complement=False)
    assert no_comp.outcome_count == 3
    no_comp.validate()
    assert no_comp.completeness_error() > 0.5


def test_instrument_elements_lie_in_algebra(rng):
    basis = AlgebraBasis(S("({2,2})"), haar_unitary(4, rng))
    inst = random_instrument(basis, rng)
    u = basis.unitary
    for e in inst.projectors:
        c = u.conj().T @ e @ u
        # canonical form X (x) I_2: blocks [[x00 I, x01 I], [x10 I, x11 I]]
        x = c[::2, ::2]
        np.testing.assert_allclose(c, np.kron(x, np.eye(2)), atol=1e-10)


def test_coarse_instrument(rng):
    inst = random_instrument(full_basis(4), rng, granularity="coarse")
    assert inst.outcome_count == 2
    inst.validate()
    with pytest.raises(ValueError):
        random_instrument(full_basis(2), rng, granularity="medium")


def test_validate_rejects_non_projectors():
    with pytest.raises(ValueError):
        Instrument(np.array([[[1, 0], [0, 0.5]]], dtype=complex)).validate()


def test_conditional_probability_cases(rng):
    p = random_propagator(3, rng)
    rho = random_density_matrix(3, rng)
    assert conditional_probability(np.eye(3), p, rho) == pytest.approx(1.0, abs=1e-12)
    inst = random_instrument(full_basis(3), rng)
    assert sum(conditional_probability(e, p, rho) for e in inst.projectors) == pytest.approx(1.0, abs=1e-10)
    ident = Propagator.identity(3)
    stationary = np.diag([0.5, 0.3, 0.2]).astype(complex)
    e = np.diag([0, 1, 0]).astype(complex)
    assert conditional_probability(e, ident, stationary) == pytest.approx(0.3)


def test_conditioned_state(rng):
    ident = Propagator.identity(3)
    rho = random_density_matrix(3, rng)
    np.testing.assert_allclose(conditioned_state(np.eye(3), ident, rho), rho, atol=1e-12)
    p = random_propagator(3, rng)
    v = haar_unitary(3, rng)[:, :1]
    e = v @ v.conj().T
    out = conditioned_state(e, p, rho)
    np.testing.assert_allclose(out, e, atol=1e-10)
    with pytest.raises(ZeroProbabilityBranch):
        conditioned_state(np.diag([0, 0, 1]).astype(complex), ident, np.diag([1, 0, 0]).astype(complex))


def test_two_step_composition(rng):
    p = random_propagator(3, rng)
    rho = random_density_matrix(3, rng)
    e1, e2 = random_instrument(full_basis(3), rng).projectors[:2]
    step = conditioned_state(e2, p, conditioned_state(e1, p, rho))
    direct = e2 @ p.apply(e1 @ p.apply(rho) @ e1) @ e2
    np.testing.assert_allclose(step, direct / np.trace(direct), atol=1e-12)


def test_sequence_probability_single_step_and_forms(rng):
    p = random_propagator(3, rng)
    table = [random_instrument(full_basis(3), rng) for _ in range(5)]
    chain = MeasurementChain([0], [1], 0.4)
    expect = np.trace(table[0].projectors[1] @ p.apply(np.eye(3) / 3)).real
    assert sequence_probability(chain, table, p) == pytest.approx(expect, rel=1e-12)
    long = sample_chain(p, table, None, 5, rng, list(range(5)))
    a = sequence_probability(long, table, p)
    b = sequence_probability(long, table, p, method="nested")
    assert a == pytest.approx(b, rel=1e-10)
    with pytest.raises(ValueError):
        sequence_probability(long, table, p, method="other")


@pytest.mark.parametrize("n,granularity", [(2, "fine"), (3, "fine"), (3, "coarse")])
def test_normalization_by_enumeration(n, granularity, rng):
    p = random_propagator(n, rng)
    table = [random_instrument(full_basis(n), rng, granularity) for _ in range(3)]
    for N in (1, 2, 3):
        total = sum(sequence_probability(MeasurementChain(range(N), xs, 0.4), table, p)
                    for xs in itertools.product(*(range(t.outcome_count) for t in table[:N])))
        assert total == pytest.approx(1.0, abs=1e-9)


def test_sampling_frequencies_match_born_rule(rng):
    p = random_propagator(3, rng)
    inst = random_instrument(full_basis(3), rng)
    rho = np.eye(3) / 3
    probs = np.array([conditional_probability(e, p, rho) for e in inst.projectors])
    draws = 100_000
    counts = np.zeros(3)
    for _ in range(draws):
        counts[sample_chain(p, [inst], rho, 1, rng, [0]).outcomes[0]] += 1
    sigma = np.sqrt(probs * (1 - probs) / draws)
    np.testing.assert_array_less(np.abs(counts / draws - probs), 3 * sigma)


def test_deterministic_chain_for_identity_dynamics(rng):
    ident = Propagator.identity(3, 0.1)
    inst = random_instrument(full_basis(3), rng)
    sigma = inst.projectors[2]
    chain = sample_chain(ident, [inst], sigma, 20, rng, [0] * 20)
    assert set(chain.outcomes) == {2}


def test_sampled_states_stay_physical(rng):
    p = random_propagator(3, rng)
    table = [random_instrument(full_basis(3), rng) for _ in range(30)]
    chain = sample_chain(p, table, None, 30, rng)
    rho = np.eye(3) / 3
    for e in chain.observed_projectors(table):
        rho = conditioned_state(e, p, rho)
        assert np.linalg.eigvalsh(rho).min() > -1e-10
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)


def test_incomplete_instrument_requires_postselect(rng):
    basis = AlgebraBasis.identity(S("n0=1;{2,1}"))
    p = random_propagator(3, rng)
    table = [random_instrument(basis, rng, complement=False)]
    with pytest.raises(ValueError):
        sample_chain(p, table, None, 1, rng, [0])
    chain = sample_chain(p, table, None, 1, rng, [0], postselect=True)
    assert chain.outcomes[0] in (0, 1)


def test_chain_validation():
    with pytest.raises(ValueError):
        MeasurementChain([0, 1], [0], 0.1)
    table = [Instrument(np.stack([np.eye(2)]))]
    with pytest.raises(ValueError):
        Dataset([MeasurementChain([0], [1], 0.1)], table, S("({2,1})"))
    with pytest.raises(ValueError):
        Dataset([MeasurementChain([3], [0], 0.1)], table, S("({2,1})"))


def test_generate_dataset(rng):
    m = random_structured_model(S("({1,2},{1,1})"), scale=1.0, rng=rng)
    ds = generate_dataset(m, S("({3,1})"), 4, 7, 0.3, seed=9)
    assert len(ds) == 4 and all(len(c) == 7 for c in ds.chains)
    assert ds.tau == 0.3 and ds.n == 3
    assert ds.generator_metadata["seed"] == 9
    again = generate_dataset(m, S("({3,1})"), 4, 7, 0.3, seed=9)
    assert [c.outcomes for c in ds.chains] == [c.outcomes for c in again.chains]
    one = generate_dataset(m, S("({3,1})"), 1, 1, 0.3, seed=1)
    assert len(one) == 1 and len(one.chains[0]) == 1
    # chain streams are independent of how many chains are drawn
    more = generate_dataset(m, S("({3,1})"), 6, 7, 0.3, seed=9)
    assert more.chains[3].outcomes == ds.chains[3].outcomes
    with pytest.raises(ValueError):
        generate_dataset(m, S("({3,1})"), 0, 5, 0.3, seed=1)
    sub = ds.subset([1, 3])
    assert sub.chains == [ds.chains[1], ds.chains[3]]


def test_dataset_file_roundtrip_is_bit_exact(tmp_path, rng):
    m = random_structured_model(S("({1,2},{1,1},{1,1})"), scale=1.0, rng=rng)
    basis = AlgebraBasis(S("n0=1;{3,1}"), haar_unitary(4, rng))
    ds = generate_dataset(m, basis, 3, 5, 0.25, seed=[4, 2])
    sigma = random_density_matrix(4, rng)
    ds.chains.append(MeasurementChain(ds.chains[0].instrument_ids, ds.chains[0].outcomes, 0.25, sigma))
    path = write_dataset(ds, tmp_path / "d.jsonl")
    back = read_dataset(path)
    assert back.accessible_structure == ds.accessible_structure
    np.testing.assert_array_equal(back.accessible_basis.unitary, basis.unitary)
    assert back.generator_metadata == ds.generator_metadata
    for a, b in zip(back.instrument_table, ds.instrument_table):
        np.testing.assert_array_equal(a.projectors, b.projectors)
        assert a.includes_complement == b.includes_complement
    for a, b in zip(back.chains, ds.chains):
        assert (a.instrument_ids, a.outcomes, a.tau) == (b.instrument_ids, b.outcomes, b.tau)
    np.testing.assert_array_equal(back.chains[-1].initial_state, sigma)
    assert write_dataset(back, tmp_path / "e.jsonl").read_text() == path.read_text()


def test_relative_position(rng):
    n_basis = AlgebraBasis(S("({2,2})"), haar_unitary(4, rng))
    info = relative_position(n_basis, full_basis(4))
    assert info == {"dim_n": 4, "dim_a": 16, "dim_intersection": 4, "generic": False}
    a_basis = AlgebraBasis(S("({1,1}^4)"), haar_unitary(4, rng))
    info = relative_position(n_basis, a_basis)
    assert info["dim_intersection"] == 1 and info["generic"]

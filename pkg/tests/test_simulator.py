import numpy as np
import pytest

import oracles
from spectree.model import ModelError, TreeStructure, random_params
from spectree.moments import PopulationMoments, raw_pair
from spectree.simulator import (BLOCK_SIZE, IID, LONG, SequenceBatch, sample_long,
                                sample_triples)
from spectree.zoo import acceptance_model


def test_triples_shape_and_range():
    p, tree = acceptance_model()
    batch, trace = sample_triples(p, tree, 10, seed=1)
    assert batch.num_sequences == 10 and batch.length == 3 and batch.num_nodes == 3
    assert batch.mode == IID
    for s, z in zip(batch.symbols, trace.states):
        assert s.shape == (10, 3) and s.min() >= 0 and s.max() < 6
        assert z.shape == (10, 3) and set(np.unique(z)) <= {0, 1}


def test_same_seed_same_draws_and_different_seed_differs():
    p, tree = acceptance_model()
    a, za = sample_triples(p, tree, 500, seed=4)
    b, zb = sample_triples(p, tree, 500, seed=4)
    c, _ = sample_triples(p, tree, 500, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.symbols, b.symbols))
    assert all(np.array_equal(x, y) for x, y in zip(za.states, zb.states))
    assert not all(np.array_equal(x, y) for x, y in zip(a.symbols, c.symbols))
    la, _ = sample_long(p, tree, 400, 50, seed=4)
    lb, _ = sample_long(p, tree, 400, 50, seed=4)
    assert all(np.array_equal(x, y) for x, y in zip(la.symbols, lb.symbols))


def test_block_prefix_is_stable():
    # iid draws are made in fixed blocks, so growing N only appends
    p, tree = acceptance_model()
    small, _ = sample_triples(p, tree, BLOCK_SIZE, seed=2)
    big, _ = sample_triples(p, tree, BLOCK_SIZE + 17, seed=2)
    for s, b in zip(small.symbols, big.symbols):
        assert np.array_equal(s, b[:BLOCK_SIZE])


def test_short_long_chain_equals_single_triple():
    p, tree = acceptance_model()
    a, za = sample_long(p, tree, 3, burn_in=0, seed=9)
    b, zb = sample_triples(p, tree, 1, seed=9)
    assert a.mode == LONG
    assert all(np.array_equal(x, y) for x, y in zip(a.symbols, b.symbols))
    assert all(np.array_equal(x, y) for x, y in zip(za.states, zb.states))


def test_long_shape_and_burn_in_validation():
    p, tree = acceptance_model()
    batch, trace = sample_long(p, tree, 100, burn_in=10, seed=0)
    assert batch.symbols[0].shape == (1, 100) and trace.states[2].shape == (1, 100)
    with pytest.raises(ValueError):
        sample_long(p, tree, 2)
    with pytest.raises(ValueError):
        sample_long(p, tree, 10, burn_in=-1)
    with pytest.raises(ValueError):
        sample_triples(p, tree, 0)


def test_invalid_model_rejected():
    p, tree = acceptance_model()
    bad = p.copy()
    bad.obs[0] = bad.obs[0] * 2
    with pytest.raises(ModelError):
        sample_triples(bad, tree, 10)


def test_empirical_pairs_converge_to_population():
    p, tree = acceptance_model()
    batch, _ = sample_triples(p, tree, 200_000, seed=3)
    pop = PopulationMoments(p, tree)
    for a, b, la, lb in [(0, 0, 1, 2), (1, 0, 2, 2), (2, 1, 1, 3)]:
        emp = raw_pair(batch, a, b, la, lb)
        exact = pop.moment([((a,), la), ((b,), lb)])
        assert np.abs(emp - exact).max() < 5e-3


def test_state_marginals_match_enumeration():
    tree = TreeStructure.chain(2)
    p = random_params(tree, 2, 3, 11)
    _, trace = sample_triples(p, tree, 100_000, seed=0)
    for u in range(2):
        for t in (1, 3):
            freq = np.bincount(trace.states[u][:, t - 1], minlength=2) / 100_000
            assert np.abs(freq - oracles.state_marginal(p, tree, u, t)).max() < 0.01


def test_long_chain_reaches_stationarity():
    p, tree = acceptance_model()
    batch, _ = sample_long(p, tree, 200_000, seed=1)
    pop = PopulationMoments(p, tree, start="stationary")
    emp = raw_pair(batch, 0, 1, 1, 2)
    assert np.abs(emp - pop.moment([((0,), 1), ((1,), 2)])).max() < 5e-3


def test_batch_validation_and_windows():
    with pytest.raises(ValueError):
        SequenceBatch([np.array([[0, 1, 5]])], n=5)
    with pytest.raises(ValueError):
        SequenceBatch([np.zeros((2, 3)), np.zeros((2, 4))], n=2)
    with pytest.raises(ValueError):
        SequenceBatch([np.zeros((2, 3))], n=2, mode="nope")
    seq = np.arange(10)[None, :] % 4
    long = SequenceBatch([seq], n=4, mode=LONG)
    over = long.windows("overlap")[0]
    disj = long.windows("disjoint")[0]
    assert over.shape == (8, 3) and np.array_equal(over[1], [1, 2, 3])
    assert disj.shape == (3, 3) and np.array_equal(disj[1], [3, 0, 1])
    iid = SequenceBatch([np.tile(np.arange(4), (2, 1))], n=4)
    assert np.array_equal(iid.windows()[0], [[0, 1, 2], [0, 1, 2]])
    with pytest.raises(ValueError):
        SequenceBatch([np.zeros((1, 2))], n=2, mode=LONG).windows()

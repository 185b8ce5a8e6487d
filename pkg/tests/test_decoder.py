import numpy as np
import pytest

import oracles
from spectree.decoder import (constant_baseline, decoding_paths, label_accuracy,
                              posterior_decode)
from spectree.evaluation import align
from spectree.model import CapExceeded, ThsHmmParams, TreeStructure, random_params
from spectree.simulator import SequenceBatch, StateTrace, sample_long, sample_triples
from spectree.zoo import acceptance_model


CASES = [
    (TreeStructure.star(3), 2, 3, 4),
    (TreeStructure.chain(2), 3, 3, 3),
    (TreeStructure((-1, 0, 1)), 2, 2, 3),
    (TreeStructure.star(1), 3, 4, 5),
]


@pytest.mark.parametrize("log_space", [False, True])
@pytest.mark.parametrize("case", range(len(CASES)))
def test_matches_enumeration(case, log_space):
    tree, m, n, L = CASES[case]
    p = random_params(tree, m, n, case)
    batch, _ = sample_triples(p, tree, 2, seed=case, length=L)
    trace = posterior_decode(p, tree, batch, log_space=log_space)
    for u in range(tree.size):
        for s in range(2):
            seqs = [batch.symbols[v][s] for v in range(tree.size)]
            want = oracles.path_posteriors(p, tree, seqs, trace.paths[u], u)
            assert np.abs(trace.posteriors[u][s] - want).max() < 1e-10
            assert np.array_equal(trace.labels[u][s], want.argmax(axis=1))


def test_identity_emissions_give_observed_symbols():
    tree = TreeStructure.star(2)
    p = random_params(tree, 3, 3, 0)
    p.obs = [np.eye(3) for _ in range(2)]
    batch, _ = sample_triples(p, tree, 50, seed=0, length=6)
    trace = posterior_decode(p, tree, batch)
    for u in range(2):
        assert np.array_equal(trace.labels[u], batch.symbols[u])
        assert np.allclose(trace.posteriors[u].max(axis=-1), 1.0)


def test_beats_constant_baseline():
    p, tree = acceptance_model()
    batch, truth = sample_long(p, tree, 20_000, seed=1)
    acc = label_accuracy(posterior_decode(p, tree, batch), truth)
    base = constant_baseline(truth)
    assert all(acc[u] >= base[u] + 0.15 for u in range(3))


def test_scaled_and_log_agree_on_long_sequence():
    p, tree = acceptance_model()
    batch, _ = sample_long(p, tree, 5000, seed=3)
    a = posterior_decode(p, tree, batch)
    b = posterior_decode(p, tree, batch, log_space=True)
    for u in range(3):
        assert np.all(np.isfinite(a.posteriors[u]))
        assert np.abs(a.posteriors[u] - b.posteriors[u]).max() < 1e-10


def test_posteriors_are_distributions():
    p, tree = acceptance_model()
    batch, _ = sample_triples(p, tree, 100, seed=0, length=7)
    trace = posterior_decode(p, tree, batch)
    for u in range(3):
        assert trace.posteriors[u].shape == (100, 7, 2)
        assert np.allclose(trace.posteriors[u].sum(axis=-1), 1.0)


def test_root_given_blank_leaf_matches_root_only_chain():
    # with an uninformative leaf, the path posterior of the root equals the
    # posterior from the root's own chain
    p, tree = acceptance_model()
    batch, _ = sample_triples(p, tree, 20, seed=2, length=5)
    blank = p.copy()
    blank.obs[1] = np.full((6, 2), 1.0 / 6)
    full = posterior_decode(blank, tree, batch)
    alone_tree = TreeStructure.star(1)
    alone = ThsHmmParams(2, 6, [p.obs[0]], [p.trans[0]], [p.init[0]])
    root_only = posterior_decode(alone, alone_tree, batch.subset([0]))
    path_post = full.posteriors[1]  # decoded from path (0, 1)
    leaf_paths = decoding_paths(tree)
    assert leaf_paths[0] == (0, 1)
    assert np.allclose(full.posteriors[0], root_only.posteriors[0], atol=1e-12)
    assert path_post.shape == (20, 5, 2)


def test_decoding_paths_prefer_deepest_then_lowest_leaf():
    tree = TreeStructure((-1, 0, 0, 2))
    paths = decoding_paths(tree)
    assert paths[0] == (0, 2, 3) and paths[2] == (0, 2, 3) and paths[1] == (0, 1)
    star = decoding_paths(TreeStructure.star(3))
    assert star[0] == (0, 1)


def test_alignment_maps_learned_labels():
    p, tree = acceptance_model()
    swapped = p.permuted(tree, [[1, 0]] * 3)
    batch, truth = sample_triples(p, tree, 2000, seed=4, length=8)
    trace = posterior_decode(swapped, tree, batch)
    perms = {u: align(p.obs[u], swapped.obs[u]).perm for u in range(3)}
    direct = label_accuracy(posterior_decode(p, tree, batch), truth)
    mapped = label_accuracy(trace, truth, perms)
    assert all(abs(direct[u] - mapped[u]) < 1e-12 for u in range(3))


def test_dimension_checks():
    p, tree = acceptance_model()
    batch, _ = sample_triples(p, tree, 10, seed=0)
    with pytest.raises(ValueError):
        posterior_decode(p, tree, batch.subset([0, 1]))
    with pytest.raises(ValueError):
        posterior_decode(p, tree, SequenceBatch(batch.symbols, 9))
    with pytest.raises(CapExceeded):
        posterior_decode(p, tree, batch, cap=3)
    with pytest.raises(ValueError):
        label_accuracy(posterior_decode(p, tree, batch),
                       StateTrace([np.zeros((10, 4), dtype=int)] * 3, 2))


def test_zero_likelihood_warns_and_stays_finite():
    tree = TreeStructure.star(1)
    p = ThsHmmParams(2, 3, [np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])],
                     [np.eye(2)], [np.array([1.0, 0.0])])
    batch = SequenceBatch([np.array([[0, 1, 0]])], 3)
    for log_space in (False, True):
        trace = posterior_decode(p, tree, batch, log_space=log_space)
        assert trace.warnings
        assert np.all(np.isfinite(trace.posteriors[0]))

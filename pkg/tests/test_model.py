import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from spectree.model import (CapExceeded, ModelError, TreeStructure,
                            check_rank_conditions, ensure_valid, meta_cap_check, meta_emission,
                            meta_initial, meta_transition, random_params, stationary_distribution,
                            uniform_params, validate)
from spectree.zoo import acceptance_model, deterministic_model, tiny_suite

trees = st.sampled_from([TreeStructure.star(1), TreeStructure.chain(2), TreeStructure.star(3),
                         TreeStructure((-1, 0, 1, 0)), TreeStructure((1, -1, 1))])


# -- tree structure ---------------------------------------------------------


def test_star_and_chain_shapes():
    star = TreeStructure.star(4)
    assert star.root == 0 and star.leaves() == [1, 2, 3] and star.depth() == 2
    assert star.path_to(3) == [0, 3]
    chain = TreeStructure.chain(3)
    assert chain.depth() == 3 and chain.path_to(2) == [0, 1, 2]
    assert chain.children(1) == [2]


@pytest.mark.parametrize("parents", [(-1, -1), (1, 0), (0, 1, -1), (-1, 5), ()])
def test_malformed_trees_rejected(parents):
    with pytest.raises(ModelError):
        TreeStructure(parents)


@given(trees)
def test_topological_order_puts_parents_first(tree):
    order = tree.topological_order()
    assert sorted(order) == list(range(tree.size))
    where = {v: k for k, v in enumerate(order)}
    for v in range(tree.size):
        if tree.parent(v) >= 0:
            assert where[tree.parent(v)] < where[v]
    for u in range(tree.size):
        path = tree.path_to(u)
        assert path[0] == tree.root and path[-1] == u and len(path) == tree.depth(u)


def test_names_lookup():
    tree = TreeStructure.star(3, names=("a", "b", "c"))
    assert tree.label(2) == "c" and tree.index_of("b") == 1
    with pytest.raises(ModelError):
        TreeStructure((-1, 0), names=("x", "x"))


# -- parameters -------------------------------------------------------------


@given(trees, st.integers(1, 3), st.integers(0, 1000))
def test_random_params_are_valid(tree, m, seed):
    p = random_params(tree, m, m + 2, seed)
    assert validate(p, tree) == []


def test_validate_reports_node_and_location():
    p, tree = acceptance_model()
    bad = p.copy()
    bad.obs[1][0, 1] += 0.1
    bad.trans[2][0, 1, 0] = -0.2
    found = validate(bad, tree)
    items = {(v.node, v.item) for v in found}
    assert (1, "obs") in items and (2, "trans") in items
    assert any(v.where == (1,) for v in found if v.item == "obs")
    with pytest.raises(ModelError):
        ensure_valid(bad, tree)


def test_validate_shape_errors():
    p, tree = acceptance_model()
    bad = p.copy()
    bad.init[0] = np.array([1.0])
    assert any("shape" in v.message for v in validate(bad, tree))


def test_random_params_refuses_m_above_n():
    with pytest.raises(ModelError):
        random_params(TreeStructure.star(1), 4, 3, 0)


@given(st.integers(0, 500))
def test_permuted_roundtrip(seed):
    tree = TreeStructure.star(3)
    p = random_params(tree, 3, 4, seed)
    rng = np.random.default_rng(seed)
    perms = [rng.permutation(3) for _ in range(3)]
    inv = [np.argsort(q) for q in perms]
    back = p.permuted(tree, perms).permuted(tree, inv)
    for a, b in zip(p.obs + p.trans + p.init, back.obs + back.trans + back.init):
        assert np.array_equal(a, b)
    assert validate(p.permuted(tree, perms), tree) == []


# -- meta chain -------------------------------------------------------------


@given(trees, st.integers(1, 3), st.integers(0, 1000))
def test_meta_views_are_stochastic(tree, m, seed):
    p = random_params(tree, m, m + 1, seed)
    u = max(range(tree.size), key=tree.depth)
    H = tree.path_to(u)
    T = meta_transition(p, tree, H)
    assert np.allclose(T.sum(axis=0), 1.0)
    assert np.isclose(meta_initial(p, tree, H).sum(), 1.0)
    E = meta_emission(p, H)
    assert np.allclose(E.sum(axis=0), 1.0)


def test_meta_transition_matches_product_formula():
    tree = TreeStructure.chain(3)
    p = random_params(tree, 2, 3, 7)
    T = meta_transition(p, tree, [0, 1, 2])
    W = meta_initial(p, tree, [0, 1, 2])
    for nxt in itertools.product(range(2), repeat=3):
        i = nxt[0] * 4 + nxt[1] * 2 + nxt[2]
        w = p.init[0][nxt[0]] * p.init[1][nxt[1], nxt[0]] * p.init[2][nxt[2], nxt[1]]
        assert np.isclose(W[i], w)
        for prv in itertools.product(range(2), repeat=3):
            j = prv[0] * 4 + prv[1] * 2 + prv[2]
            want = (p.trans[0][nxt[0], prv[0]] * p.trans[1][nxt[1], prv[1], nxt[0]]
                    * p.trans[2][nxt[2], prv[2], nxt[1]])
            assert np.isclose(T[i, j], want)


def test_meta_views_need_root_closed_sets():
    p, tree = acceptance_model()
    with pytest.raises(ModelError):
        meta_transition(p, tree, [1])


def test_cap_check():
    meta_cap_check(2, 12, 4096)
    with pytest.raises(CapExceeded):
        meta_cap_check(2, 13, 4096)
    p, tree = acceptance_model()
    with pytest.raises(CapExceeded):
        meta_initial(p, tree, [0, 1], cap=3)


def test_stationary_distribution_fixed_point():
    p, tree = acceptance_model()
    T = meta_transition(p, tree, [0, 1])
    pi = stationary_distribution(T)
    assert np.allclose(T @ pi, pi) and np.isclose(pi.sum(), 1.0) and np.all(pi >= 0)


# -- rank conditions --------------------------------------------------------


def test_acceptance_model_passes_rank_check():
    p, tree = acceptance_model()
    report = check_rank_conditions(p, tree)
    assert report.ok
    assert all(report.node_pass(u) and report.path_pass(u) for u in range(3))


def test_duplicate_column_fails_node_condition():
    p, tree = acceptance_model()
    bad = p.copy()
    bad.obs[1] = np.stack([bad.obs[1][:, 0], bad.obs[1][:, 0]], axis=1)
    report = check_rank_conditions(bad, tree)
    assert not report.node_pass(1)
    assert report.node_pass(0) and report.node_pass(2)
    assert not report.ok


def test_deterministic_model_fails_path_condition():
    tree = TreeStructure.star(2)
    p = deterministic_model(tree, 2)
    report = check_rank_conditions(p, tree)
    assert not report.ok


@pytest.mark.parametrize("label,params,tree", tiny_suite()[::2] + [("acc",) + acceptance_model()])
def test_rank_report_matches_dense_oracle(label, params, tree):
    report = check_rank_conditions(params, tree)
    J = oracles.joint_states(params, tree)
    m = params.m
    for u in range(tree.size):
        H = tuple(tree.path_to(u))
        P21 = oracles.dense_moment(params, tree, [((u,), 2), ((u,), 1)], J)
        P12 = oracles.dense_moment(params, tree, [(H, 1), (H, 2)], J)
        s_obs = np.linalg.svd(params.obs[u], compute_uv=False)[m - 1]
        s_pair = np.linalg.svd(P21, compute_uv=False)[m - 1]
        s_path = np.linalg.svd(P12, compute_uv=False)[m ** len(H) - 1]
        assert abs(report.sigma_obs[u] - s_obs) < 1e-10
        assert abs(report.sigma_pair[u] - s_pair) < 1e-10
        assert abs(report.sigma_path[u] - s_path) < 1e-10


def test_uniform_params_valid_but_rank_deficient():
    tree = TreeStructure.star(2)
    p = uniform_params(tree, 2, 3)
    assert validate(p, tree) == []
    assert not check_rank_conditions(p, tree).ok

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuzzy_potts.model import ModelError, ModelParams
from fuzzy_potts.tree import (
    RootedTree, b_recursion_finite, chain_distribution, chain_distribution_array,
    fixed_point_b, free_fuzzy_matrix, free_potts_matrix, pushforward, ratio_product_form,
    ratio_root_form, recursion_residual, regular_tree, sample_chain, tree_critical_beta,
    verify_ratio_identity, wired_chain_matrices, wired_fixed_point, wired_gap,
)

E2 = math.exp(2.0)


def potts_tree_weights(tree, q, beta, fixed=None):
    """Brute-force Potts law on a tree (coupling 2 beta per edge); ``fixed`` pins nodes to
    0-based states.  Returns an array of shape (q,) * n."""
    n = tree.size
    out = np.zeros((q,) * n)
    for config in itertools.product(range(q), repeat=n):
        if fixed and any(config[x] != v for x, v in fixed.items()):
            continue
        agree = sum(config[x] == config[tree.parent[x]] for x in range(n) if tree.parent[x] is not None)
        out[config] = math.exp(2 * beta * agree)
    return out / out.sum()


# -- trees -----------------------------------------------------------------

@pytest.mark.parametrize("d, depth, size", [(2, 1, 3), (2, 3, 15), (3, 2, 13)])
def test_regular_tree_sizes(d, depth, size):
    assert regular_tree(d, depth).size == size


def test_regular_tree_root_degree_flag():
    t = regular_tree(2, 2, root_degree=3)
    assert len(t.children(t.root)) == 3
    assert t.size == 1 + 3 + 6
    assert all(len(t.children(x)) == 2 for x in t.children(t.root))


def test_regular_tree_guards():
    with pytest.raises(ModelError):
        regular_tree(1, 3)
    with pytest.raises(ModelError, match="cap"):
        regular_tree(3, 30)


def test_tree_structure_and_json(tmp_path):
    t = RootedTree.from_json("tests/fixtures/tree7.json")
    assert t.root == 0 and t.children(1) == [3, 4]
    depth = t.depth()
    assert all(depth[y] == depth[t.parent[y]] + 1 for y in range(1, t.size))
    assert t.truncate(1).size == 3
    assert RootedTree.from_dict(t.to_dict()) == t


@pytest.mark.parametrize("parent", [(None, None), (1, 0), (None, 2, 1)])
def test_bad_parent_arrays(parent):
    with pytest.raises(ModelError):
        RootedTree(parent)


# -- free chains -----------------------------------------------------------

def test_free_potts_matrix_values():
    assert np.allclose(free_potts_matrix(ModelParams(3, 0.0, (2, 1))), 1 / 3)
    P = free_potts_matrix(ModelParams(3, 1.0, (2, 1)))
    assert P[0, 0] == pytest.approx(0.786986, abs=1e-6)
    assert P[0, 1] == pytest.approx(0.106507, abs=1e-6)


@given(st.integers(3, 9), st.floats(0, 5))
def test_matrices_row_stochastic(q, beta):
    P = free_potts_matrix(ModelParams(q, beta, (q - 1, 1)))
    assert np.max(np.abs(P.sum(axis=1) - 1)) < 1e-12
    F, init = free_fuzzy_matrix(ModelParams(q, beta, (q - 1, 1)))
    assert np.max(np.abs(F.sum(axis=1) - 1)) < 1e-12 and init.sum() == pytest.approx(1)


def test_free_fuzzy_matrix_values():
    F, init = free_fuzzy_matrix(ModelParams(3, 0.0, (2, 1)))
    assert np.allclose(F, [[2 / 3, 1 / 3], [2 / 3, 1 / 3]])
    F, init = free_fuzzy_matrix(ModelParams(3, 1.0, (2, 1)))
    assert F[0, 0] == pytest.approx((E2 + 1) / (E2 + 2), abs=1e-15)
    assert F[0, 0] == pytest.approx(0.893493, abs=1e-6)
    assert F[0, 1] == pytest.approx(0.106507, abs=1e-6)
    assert np.allclose(init, [2 / 3, 1 / 3])


@pytest.mark.parametrize("q, partition", [(3, (2, 1)), (4, (1, 3)), (5, (2, 1, 2)), (6, (3, 3))])
def test_fuzzy_matrix_is_blockwise_sum_of_potts_matrix(q, partition):
    params = ModelParams(q, 0.7, partition)
    P = free_potts_matrix(params)
    F, _ = free_fuzzy_matrix(params)
    edges = np.cumsum((0,) + partition)
    for k in range(len(partition)):
        for i in range(edges[k], edges[k + 1]):
            block_sums = [P[i, edges[l]:edges[l + 1]].sum() for l in range(len(partition))]
            assert np.allclose(block_sums, F[k], atol=1e-15)


@pytest.mark.parametrize("name", ["single-edge", "path-5", "binary-depth-2", "random-8"])
def test_free_chain_is_free_gibbs_measure(trees, name):
    tree = trees[name]
    params = ModelParams(3, 0.8, (2, 1))
    chain = chain_distribution_array(tree, free_potts_matrix(params), np.full(3, 1 / 3))
    assert np.max(np.abs(chain - potts_tree_weights(tree, 3, 0.8))) < 1e-14


def test_pushforward_exact_rationals(trees):
    # e^{2 beta} = 3, i.e. beta = log(3)/2, makes every probability rational
    params = ModelParams(3, math.log(3) / 2, (2, 1))
    w = Fraction(3)
    tree = trees["path-5"]
    potts = chain_distribution(tree, free_potts_matrix(params, weight=w), [Fraction(1, 3)] * 3)
    F, init = free_fuzzy_matrix(params, weight=w)
    fuzzy = chain_distribution(tree, F, init)
    labels = params.fuzzy_map.labels()
    pushed = {}
    for config, p in potts.items():
        key = tuple(labels[c - 1] for c in config)
        pushed[key] = pushed.get(key, 0) + p
    assert pushed == fuzzy
    assert sum(fuzzy.values()) == 1


def test_pushforward_float(trees):
    params = ModelParams(4, 1.3, (2, 1, 1))
    tree = trees["random-8"]
    potts = chain_distribution_array(tree, free_potts_matrix(params), np.full(4, 0.25))
    F, init = free_fuzzy_matrix(params)
    assert np.max(np.abs(pushforward(potts, params) - chain_distribution_array(tree, F, init))) < 1e-12


# -- wired recursion ---------------------------------------------------------

def test_b_is_one_at_beta_zero():
    t = regular_tree(2, 4)
    b = b_recursion_finite(t, ModelParams(3, 0.0, (2, 1)))
    assert all(b[x] == 1 for x in range(t.size) if t.children(x))


@pytest.mark.parametrize("k", [1, 2, 5])
def test_root_with_wired_children(k):
    t = RootedTree((None,) + (0,) * k)
    b = b_recursion_finite(t, ModelParams(3, 0.9, (2, 1)))
    assert b[0] == pytest.approx(math.exp(2 * 0.9 * k), rel=1e-14)
    assert all(math.isinf(b[y]) for y in range(1, k + 1))


def test_finite_recursion_reaches_fixed_point():
    params = ModelParams(3, 2.0, (2, 1))
    b = b_recursion_finite(regular_tree(2, 8), params)
    assert b[0] == pytest.approx(fixed_point_b(2, params), abs=1e-6)


@given(st.integers(2, 60), st.integers(0, 10 ** 6), st.floats(0, 3), st.integers(3, 6))
@settings(max_examples=40)
def test_recursion_invariants(n, seed, beta, q):
    import random
    rng = random.Random(seed)
    tree = RootedTree(tuple([None] + [rng.randrange(x) for x in range(1, n)]))
    params = ModelParams(q, beta, (q - 1, 1))
    b = b_recursion_finite(tree, params)
    assert recursion_residual(tree, b, params) < 1e-12
    for x in range(tree.size):
        kids = tree.children(x)
        if kids:
            assert 1 - 1e-12 <= b[x] <= math.exp(2 * beta * len(kids)) * (1 + 1e-12)


def test_empty_tree_rejected():
    with pytest.raises(ModelError):
        RootedTree(())


@pytest.mark.parametrize("name", ["single-edge", "path-5", "binary-depth-2", "random-8", "random-9"])
@pytest.mark.parametrize("beta", [0.4, 1.5])
def test_wired_chain_is_wired_gibbs_measure(trees, name, beta):
    tree = trees[name]
    params = ModelParams(3, beta, (2, 1))
    b = b_recursion_finite(tree, params)
    init, mats = wired_chain_matrices(tree, b, params)
    chain = chain_distribution_array(tree, mats, init)
    brute = potts_tree_weights(tree, 3, beta, fixed={x: 0 for x in tree.leaves()})
    assert np.max(np.abs(chain - brute)) < 1e-13


def test_wired_matrices_degenerate_to_free():
    t = regular_tree(2, 2)
    params = ModelParams(4, 0.6, (2, 2))
    init, mats = wired_chain_matrices(t, {x: 1.0 for x in range(t.size)}, params)
    assert np.allclose(init, 0.25)
    for P in mats.values():
        assert np.max(np.abs(P - free_potts_matrix(params))) < 1e-15


def test_wired_matrix_entry():
    t = RootedTree((None, 0))
    _, mats = wired_chain_matrices(t, {0: 2.0, 1: 2.0}, ModelParams(3, 1.0, (2, 1)))
    assert mats[1][0, 0] == pytest.approx(2 * E2 / (2 * E2 + 2), abs=1e-15)
    assert mats[1][0, 0] == pytest.approx(0.880797, abs=1e-6)
    with pytest.raises(ModelError, match="no b value"):
        wired_chain_matrices(t, {0: 2.0}, ModelParams(3, 1.0, (2, 1)))


def test_wired_chain_is_markov_field(trees):
    # conditional law at a vertex depends only on its neighbours
    tree = trees["path-5"]
    params = ModelParams(3, 1.2, (2, 1))
    b = b_recursion_finite(regular_tree(2, 6), params)
    bvals = {x: b[1] for x in range(tree.size)}
    init, mats = wired_chain_matrices(tree, bvals, params)
    dist = chain_distribution_array(tree, mats, init)
    cond = dist / dist.sum(axis=2, keepdims=True)
    for s0, s1, s3, s4 in itertools.product(range(3), repeat=4):
        assert np.allclose(cond[s0, s1, :, s3, s4], cond[0, s1, :, s3, 0], atol=1e-13)


# -- fixed points and critical beta --------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 4])
def test_fixed_point_at_beta_zero(d):
    assert fixed_point_b(d, ModelParams(3, 0.0, (2, 1))) == 1.0


@pytest.mark.parametrize("beta", [0.5, 2.0, 5.0])
def test_single_child_has_only_trivial_fixed_point(beta):
    assert fixed_point_b(1, ModelParams(3, beta, (2, 1)), tol=1e-12) == pytest.approx(1.0, abs=1e-5)


def test_fixed_point_ordered_and_disordered():
    assert fixed_point_b(2, ModelParams(3, 2.0, (2, 1))) > 1
    assert fixed_point_b(2, ModelParams(3, 0.3, (2, 1))) == pytest.approx(1.0, abs=1e-6)
    beta_c = tree_critical_beta(2, 3)
    assert 0.3 < beta_c < 2.0


def test_fixed_point_iteration_is_monotone():
    e = math.exp(4.0)
    b, seen = e ** 2, []
    for _ in range(50):
        b = ((e * b + 2) / (e + b + 1)) ** 2
        seen.append(b)
    assert all(x >= y >= 1 for x, y in zip(seen, seen[1:]))
    assert wired_fixed_point(2, 3, 2.0) == pytest.approx(seen[-1], rel=1e-9)


def test_fixed_point_nonconvergence_raises():
    with pytest.raises(ModelError, match="converge"):
        wired_fixed_point(2, 3, 2.0, tol=1e-300, max_iter=3)


def test_critical_beta_increases_with_q():
    values = [tree_critical_beta(2, q) for q in range(2, 7)]
    assert all(a <= b for a, b in zip(values, values[1:]))


def test_ising_tree_threshold():
    # q = 2: b = 1 loses stability when d * tanh(beta) = 1
    assert tree_critical_beta(2, 2, tol=1e-8) == pytest.approx(math.atanh(0.5), abs=1e-6)


def test_critical_beta_brackets_fixed_point():
    bc = tree_critical_beta(2, 3, tol=1e-8)
    assert fixed_point_b(2, ModelParams(3, bc + 1e-6, (2, 1))) > 1.5
    assert fixed_point_b(2, ModelParams(3, bc - 1e-6, (2, 1))) == pytest.approx(1.0, abs=1e-6)
    params = ModelParams(3, bc - 1e-3, (2, 1))
    b = fixed_point_b(2, params)
    assert abs(wired_gap(b, b, params).gap) < 1e-6


def test_critical_beta_bracket_failure():
    with pytest.raises(ModelError, match="no transition"):
        tree_critical_beta(2, 3, beta_max=0.1)


# -- gap ---------------------------------------------------------------------

def test_gap_vanishes_at_b_one():
    rec = wired_gap(1.0, 1.0, ModelParams(4, 1.1, (3, 1)))
    assert rec.a == pytest.approx(1 / 3) and rec.gap == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("q, r1, beta", [(3, 2, 1.0), (5, 3, 0.4), (7, 2, 2.2)])
def test_free_ratio_closed_form(q, r1, beta):
    e = math.exp(2 * beta)
    rec = wired_gap(1.5, 2.5, ModelParams(q, beta, (r1, q - r1)))
    assert rec.free_ratio == pytest.approx((e + r1 - 1) ** 2 / ((q - r1) * r1), rel=1e-12)


def test_gap_example_by_hand():
    rec = wired_gap(2.0, 2.0, ModelParams(3, 1.0, (2, 1)))
    assert rec.a == pytest.approx(5 / 9, abs=1e-15)
    wired = (5 / 9 * (E2 ** 2 + 1) + 4 / 9 * (2 * E2)) / 1
    free = (0.5 * (E2 ** 2 + 1) + 0.5 * (2 * E2)) / 1
    assert rec.wired_ratio == pytest.approx(wired, rel=1e-14)
    assert rec.free_ratio == pytest.approx(free, rel=1e-14)
    assert rec.gap == pytest.approx(wired / (1 + wired) - free / (1 + free), rel=1e-12)
    assert rec.gap > 0


def _root_odds_by_enumeration(b1, b2, params):
    """Enumerate the wired chain on root + two children with Y(children) = 1."""
    tree = RootedTree((None, 0, 0))
    e = math.exp(2 * params.beta)
    q = params.q
    f = lambda b: (e * b + q - 1) / (e + b + q - 2)
    init, mats = wired_chain_matrices(tree, {0: f(b1) * f(b2), 1: b1, 2: b2}, params)
    dist = chain_distribution_array(tree, mats, init)
    r1 = params.partition[0]
    sub = dist[:, :r1, :r1].sum(axis=(1, 2))
    return sub[:r1].sum() / sub[r1:].sum()


@pytest.mark.parametrize("b1, b2", [(1.0, 1.0), (2.0, 2.0), (3.7, 1.2), (50.0, 8.0)])
@pytest.mark.parametrize("q, r1, beta", [(3, 2, 1.0), (5, 3, 0.8), (6, 4, 0.3)])
def test_wired_ratio_three_routes(b1, b2, q, r1, beta):
    params = ModelParams(q, beta, (r1, q - r1))
    enumerated = _root_odds_by_enumeration(b1, b2, params)
    assert ratio_root_form(b1, b2, params) == pytest.approx(enumerated, rel=1e-12)
    assert ratio_product_form(b1, b2, params) == pytest.approx(enumerated, rel=1e-12)
    assert wired_gap(b1, b2, params).wired_ratio == pytest.approx(enumerated, rel=1e-12)


@pytest.mark.parametrize("extra", [0, 1, 3])
def test_free_side_by_enumeration(extra):
    # free fuzzy chain: root with two class-1 children plus `extra` class-1 children
    # whose single child lies outside class 1
    params = ModelParams(4, 0.7, (3, 1))
    parent = [None, 0, 0]
    for _ in range(extra):
        parent.append(0)
        parent.append(len(parent) - 1)
    tree = RootedTree(tuple(parent))
    F, init = free_fuzzy_matrix(params)
    dist = chain_distribution_array(tree, F, init)
    index = [slice(None)] + [0] * (tree.size - 1)
    for j in range(extra):
        index[4 + 2 * j] = 1
    sub = dist[tuple(index)]
    assert sub[0] / sub[1] == pytest.approx(wired_gap(1.0, 1.0, params, extra).free_ratio, rel=1e-12)


def test_identity_examples():
    assert verify_ratio_identity(1.0, 1.0, ModelParams(3, 0.2, (2, 1)))
    assert verify_ratio_identity(3.7, 1.2, ModelParams(5, 0.8, (3, 2)))


def _gap_inputs():
    return st.tuples(st.floats(1, 1e3), st.floats(1, 1e3), st.floats(0.01, 3),
                     st.integers(3, 10)).flatmap(
        lambda t: st.tuples(st.just(t), st.integers(2, t[3] - 1)))


@given(_gap_inputs())
@settings(max_examples=300)
def test_ratio_identity_property(args):
    (b1, b2, beta, q), r1 = args
    assert verify_ratio_identity(b1, b2, ModelParams(q, beta, (r1, q - r1)))


@given(_gap_inputs())
@settings(max_examples=300)
def test_a_exceeds_one_over_r1(args):
    (b1, b2, beta, q), r1 = args
    b1, b2 = b1 + 1e-3, b2 + 1e-3
    rec = wired_gap(b1, b2, ModelParams(q, beta, (r1, q - r1)))
    assert rec.a > 1 / r1
    assert rec.wired_ratio > rec.free_ratio


@given(_gap_inputs(), st.floats(0.01, 10))
@settings(max_examples=300)
def test_gap_nondecreasing_in_b(args, step):
    (b1, b2, beta, q), r1 = args
    params = ModelParams(q, beta, (r1, q - r1))
    g0 = wired_gap(b1, b2, params).gap
    assert wired_gap(b1 + step, b2, params).gap >= g0 - 1e-15
    assert wired_gap(b1, b2 + step, params).gap >= g0 - 1e-15


def test_gap_needs_r1_at_least_two():
    with pytest.raises(ModelError, match="r_1"):
        wired_gap(2.0, 2.0, ModelParams(3, 1.0, (1, 2)))


# -- sampling ------------------------------------------------------------------

def test_identity_chain_copies_root():
    t = regular_tree(2, 3)
    sample = sample_chain(t, np.eye(3), [0.2, 0.3, 0.5], seed=5)
    assert len(set(sample.values())) == 1


def test_sampling_deterministic_for_seed():
    t = regular_tree(2, 3)
    P = free_potts_matrix(ModelParams(3, 0.5, (2, 1)))
    assert sample_chain(t, P, [1 / 3] * 3, seed=11) == sample_chain(t, P, [1 / 3] * 3, seed=11)
    a = sample_chain(t, P, [1 / 3] * 3, seed=11, size=50)
    assert np.array_equal(a, sample_chain(t, P, [1 / 3] * 3, seed=11, size=50))


def test_root_frequencies_at_beta_zero():
    t = regular_tree(2, 2)
    init = np.array([0.5, 0.3, 0.2])
    n = 100_000
    samples = sample_chain(t, free_potts_matrix(ModelParams(3, 0.0, (2, 1))), init, seed=3, size=n)
    freq = np.bincount(samples[:, t.root] - 1, minlength=3) / n
    assert np.all(np.abs(freq - init) < 3 * np.sqrt(init * (1 - init) / n))


def test_sampled_wired_chain_matches_exact_law(trees):
    tree = trees["binary-depth-2"]
    params = ModelParams(3, 0.9, (2, 1))
    b = b_recursion_finite(tree, params)
    init, mats = wired_chain_matrices(tree, b, params)
    exact = chain_distribution_array(tree, mats, init)[:, :, :, 0, 0, 0, 0]
    n = 200_000
    samples = sample_chain(tree, mats, init, seed=7, size=n)
    assert np.all(samples[:, tree.leaves()] == 1)
    counts = np.zeros((3, 3, 3))
    np.add.at(counts, (samples[:, 0] - 1, samples[:, 1] - 1, samples[:, 2] - 1), 1)
    freq = counts / n
    assert np.all(np.abs(freq - exact) <= 4 * np.sqrt(exact * (1 - exact) / n) + 1e-12)

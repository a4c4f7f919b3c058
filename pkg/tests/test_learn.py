import math

import numpy as np
import pytest

from spsn import (MISSING, BuildConfig, DataTree, Het, TrainConfig,
                  backward, fit, infer_schema, init_params, parse_value,
                  spsn_network)
from spsn.circuit import SET, SUM, CircuitBuilder
from spsn.learn import Adam
from spsn.oracle import finite_diff_grad, gradient_check


def test_gaussian_gradient_closed_form():
    schema = infer_schema([{"a": 1.0}])
    arena = CircuitBuilder(schema)
    root = arena.input([("a",)])
    c = arena.finish([root])
    mu, log_std = 0.4, -0.2
    c.params[0:2] = (mu, log_std)
    x = 1.3
    _, grad = backward(c, parse_value({"a": x}, schema))
    sigma = math.exp(log_std)
    assert grad[0] == pytest.approx((x - mu) / sigma ** 2, rel=1e-12)
    assert grad[1] == pytest.approx(((x - mu) / sigma) ** 2 - 1.0, rel=1e-12)


def test_three_unit_circuit_matches_finite_differences():
    schema = infer_schema([{"a": 1.0, "s": "x"}, {"a": 2.0, "s": "y"}])
    arena = CircuitBuilder(schema)
    ia = arena.input([("a",)])
    ib = arena.input([("s",)])
    root = arena.product([ia, ib])
    c = arena.finish([root])
    c.params[:] = np.random.default_rng(2).normal(0, 1, c.params.size)
    tree = parse_value({"a": 0.3, "s": "x"}, schema)
    ok, worst = gradient_check(c, tree)
    assert ok, worst


def test_gradients_through_collections(molecule_schema, molecule_trees):
    c = spsn_network(molecule_schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    c.params[:] = np.random.default_rng(4).normal(0, 0.7, c.params.size)
    from spsn import mask_missing
    for i in (0, 3):
        tree = mask_missing(molecule_trees[i], 0.3, seed=i)
        ok, worst = gradient_check(c, tree)
        assert ok, worst


def test_fully_missing_tree_zero_gradient(molecule_schema):
    c = spsn_network(molecule_schema, BuildConfig(n_l=2, n_s=2, n_p=2))
    c.params[:] = np.random.default_rng(5).normal(0, 1, c.params.size)
    value, grad = backward(c, DataTree(MISSING))
    assert value == 0.0
    assert np.all(grad == 0.0)


def test_init_constant_leaf_hits_std_floor():
    schema = infer_schema([{"a": 5.0}, {"a": 5.0}])
    c = spsn_network(schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    corpus = [parse_value({"a": 5.0}, schema) for _ in range(4)]
    c2 = init_params(c, corpus, seed=0)
    root = c2.units[c2.roots[0]]
    for k in root.children:
        u = c2.units[k]
        assert c2.params[u.pofs] == 5.0  # jitter scales with the (zero) std
        assert c2.params[u.pofs + 1] == math.log(1e-3)


def test_init_poisson_rate_is_mean_cardinality():
    schema = infer_schema([{"xs": [1]}, {"xs": [1, 2]}, {"xs": [1, 2, 3]}])
    c = spsn_network(schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    corpus = [parse_value(d, schema) for d in
              ({"xs": [1]}, {"xs": [1, 2]}, {"xs": [1, 2, 3]})]
    c2 = init_params(c, corpus, seed=0)
    for u in c2.units:
        if u.kind == SET:
            assert math.exp(c2.params[u.pofs]) == pytest.approx(2.0, rel=1e-12)


def test_init_laplace_smoothed_categorical():
    schema = infer_schema([{"s": "a"}, {"s": "b"}])
    c = spsn_network(schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    corpus = [parse_value({"s": v}, schema) for v in "aaab"]
    c2 = init_params(c, corpus, seed=0)
    root = c2.units[c2.roots[0]]
    u = c2.units[root.children[0]]
    probs = np.exp(c2.params[u.pofs:u.pofs + 3])
    probs /= probs.sum()
    assert np.allclose(probs, [4 / 7, 2 / 7, 1 / 7], atol=1e-12)


def test_init_sum_logits_small_noise():
    schema = infer_schema([{"a": 1.0}])
    c = spsn_network(schema, BuildConfig(n_l=1, n_s=4, n_p=2))
    c2 = init_params(c, [parse_value({"a": 1.0}, schema)], seed=0)
    for u in c2.units:
        if u.kind == SUM:
            w = c2.params[u.pofs:u.pofs + u.plen]
            assert np.all(np.abs(w) <= 0.01)
            assert len(set(w.tolist())) == u.plen  # actually perturbed


def test_adam_single_step_matches_textbook():
    params = np.array([1.0])
    grad = np.array([0.3])
    opt = Adam(1, step_size=0.1, beta1=0.9, beta2=0.999, eps=1e-8)
    opt.step(params, grad)
    # bias-corrected first step: full step in the gradient direction
    want = 1.0 + 0.1 * 0.3 / (math.sqrt(0.3 ** 2) + 1e-8)
    assert params[0] == pytest.approx(want, abs=1e-12)
    # second step with a different gradient; moments unrolled by hand
    g2 = np.array([-0.1])
    opt.step(params, g2)
    m = 0.9 * (0.1 * 0.3) + 0.1 * -0.1
    v = 0.999 * (0.001 * 0.3 ** 2) + 0.001 * 0.1 ** 2
    mhat = m / (1 - 0.9 ** 2)
    vhat = v / (1 - 0.999 ** 2)
    want2 = want + 0.1 * mhat / (math.sqrt(vhat) + 1e-8)
    assert params[0] == pytest.approx(want2, abs=1e-12)


def test_zero_step_size_keeps_parameters(molecule_schema, molecule_trees):
    c = spsn_network(molecule_schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    c = init_params(c, molecule_trees, seed=1)
    before = c.params.copy()
    result = fit(c, molecule_trees, TrainConfig(step_size=0.0, epochs=3, seed=1))
    assert np.array_equal(result.circuit.params, before)


def test_training_improves_and_keeps_parameters_feasible():
    rng = np.random.default_rng(11)
    docs = [{"a": float(rng.normal(2.0, 0.5)), "s": "x" if rng.random() < .8 else "y"}
            for _ in range(120)]
    schema = infer_schema(docs)
    trees = [parse_value(d, schema) for d in docs]
    c = spsn_network(schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    c = init_params(c, trees, seed=2)
    res = fit(c, trees, TrainConfig(step_size=0.01, epochs=5, seed=2))
    hist = res.history
    assert hist[-1]["train_objective"] >= hist[0]["train_objective"] - 1e-6
    p = res.circuit.params
    assert np.all(np.isfinite(p))
    for u in res.circuit.units:
        if u.kind == SUM:
            w = np.exp(p[u.pofs:u.pofs + u.plen])
            assert np.isclose(w.sum() / w.sum(), 1.0)
            assert np.all(w > 0)


def test_objective_invariant_under_element_permutation(molecule_schema, molecule_trees):
    from spsn import Hom
    c = spsn_network(molecule_schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    c = init_params(c, molecule_trees, seed=3)
    tree = molecule_trees[0]
    atoms = tree.root.child("atoms")
    flipped = Het(tuple(
        (n, Hom(tuple(reversed(atoms.elements))) if n == "atoms" else v)
        for n, v in tree.root.fields))
    a, _ = backward(c, tree)
    b, _ = backward(c, DataTree(flipped))
    assert a == b


def test_cross_entropy_on_separable_data():
    rng = np.random.default_rng(7)
    docs, labels = [], []
    for _ in range(80):
        y = int(rng.random() < 0.5)
        docs.append({"a": float(rng.normal(-2.0 if y == 0 else 2.0, 0.5))})
        labels.append(y)
    schema = infer_schema(docs)
    trees = [parse_value(d, schema) for d in docs]
    c = spsn_network(schema, BuildConfig(n_c=2, n_l=1, n_s=2, n_p=2))
    c = init_params(c, trees, seed=4)
    cfg = TrainConfig(objective="xent", step_size=0.1, epochs=15, seed=4)
    res = fit(c, trees, cfg, labels=labels)
    from spsn import classify
    hits = sum(classify(res.circuit, t)[0] == y for t, y in zip(trees, labels))
    assert hits / len(trees) >= 0.9


def test_training_is_deterministic(molecule_schema, molecule_trees):
    c = spsn_network(molecule_schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    c = init_params(c, molecule_trees, seed=7)
    cfg = TrainConfig(step_size=0.01, epochs=3, seed=7)
    a = fit(c, molecule_trees, cfg)
    b = fit(c, molecule_trees, cfg)
    assert np.array_equal(a.circuit.params, b.circuit.params)
    assert a.history == b.history


def test_finite_differences_symmetric_in_h(molecule_schema, molecule_trees):
    c = spsn_network(molecule_schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    c.params[:] = np.random.default_rng(6).normal(0, 0.5, c.params.size)
    tree = molecule_trees[1]
    a = finite_diff_grad(c, tree, h=1e-5)
    b = finite_diff_grad(c, tree, h=-1e-5)
    assert np.array_equal(a, b)

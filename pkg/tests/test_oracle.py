import math

import numpy as np
import pytest

from spsn import (BuildConfig, Het, Hom, TooLarge,
                  brute_force_mass, free_tree, infer_schema, log_density,
                  marginal_log_density, mask_missing, permutation_sweep,
                  spsn_network)
from spsn.circuit import CircuitBuilder
from spsn.oracle import (gradient_check, het_swap_flagged,
                         random_discrete_circuit)
from spsn.sample import sample_trees


def test_mass_of_everything_is_zero_for_any_mixture_weights():
    schema = infer_schema([{"s": "a"}, {"s": "b"}])
    arena = CircuitBuilder(schema)
    i1 = arena.input([("s",)])
    i2 = arena.input([("s",)])
    root = arena.sum([i1, i2])
    c = arena.finish([root])
    for seed in range(5):
        c.params[:] = np.random.default_rng(seed).normal(0, 2, c.params.size)
        assert abs(brute_force_mass(c, free_tree(c.schema))) < 1e-12


def test_mass_of_everything_with_collections():
    for seed in range(10):
        c = random_discrete_circuit(seed)
        assert abs(brute_force_mass(c, free_tree(c.schema))) < 1e-9


def test_point_region_subtracts_ordering_correction():
    c = random_discrete_circuit(42)
    tree = sample_trees(c, 1, seed=1)[0]
    corrections = 0.0

    def count(node):
        nonlocal corrections
        if isinstance(node, Hom):
            corrections += math.lgamma(len(node.elements) + 1.0)
            for el in node.elements:
                count(el)
        elif isinstance(node, Het):
            for _, ch in node.fields:
                count(ch)

    count(tree.root)
    point = brute_force_mass(c, tree, evidence_ordering=False)
    assert point == pytest.approx(log_density(c, 0, tree) - corrections,
                                  abs=1e-9)


def test_evidence_region_matches_recursive_marginal():
    for seed in range(8):
        c = random_discrete_circuit(seed + 100)
        for i, tree in enumerate(sample_trees(c, 3, seed=seed)):
            masked = mask_missing(tree, 0.5, seed=i)
            assert brute_force_mass(c, masked) == pytest.approx(
                marginal_log_density(c, 0, masked), abs=1e-9)


def test_fully_observed_region_equals_density():
    c = random_discrete_circuit(7)
    tree = sample_trees(c, 1, seed=2)[0]
    assert brute_force_mass(c, tree) == pytest.approx(
        log_density(c, 0, tree), abs=1e-9)


def test_allowed_value_subsets():
    schema = infer_schema([{"s": "a"}, {"s": "b"}])
    arena = CircuitBuilder(schema)
    root = arena.input([("s",)])
    c = arena.finish([root])
    c.params[0:3] = (0.3, -0.4, 0.1)
    logits = c.params[0:3]
    probs = np.exp(logits) / np.sum(np.exp(logits))
    got = brute_force_mass(c, free_tree(schema), allowed={("s",): ("a", "b")})
    assert got == pytest.approx(math.log(probs[0] + probs[1]), abs=1e-12)


def test_monotone_marginalization():
    c = random_discrete_circuit(11)
    tree = sample_trees(c, 1, seed=3)[0]
    lo = brute_force_mass(c, tree)
    hi = brute_force_mass(c, mask_missing(tree, 1.0, seed=0))
    assert hi >= lo - 1e-12
    assert abs(hi) < 1e-9 or hi <= 1e-12  # superset of everything is everything


def test_marginal_mass_grows_with_nested_masks():
    # masking strictly enlarges the region, so the recursive marginal can
    # only grow (and never turns NaN)
    for seed in range(5):
        c = random_discrete_circuit(seed + 300)
        tree = sample_trees(c, 1, seed=seed)[0]
        prev = marginal_log_density(c, 0, tree)
        assert not math.isnan(prev)
        masked = tree
        for step, frac in enumerate((0.3, 0.6, 1.0)):
            masked = mask_missing(masked, frac, seed=step)
            cur = marginal_log_density(c, 0, masked)
            assert not math.isnan(cur)
            assert cur >= prev - 1e-12
            prev = cur


def test_enumeration_limit():
    c = random_discrete_circuit(12)
    with pytest.raises(TooLarge):
        brute_force_mass(c, free_tree(c.schema), limit=2)


def test_permutation_sweep_zero(molecule_schema, molecule_trees):
    c = spsn_network(molecule_schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    c.params[:] = np.random.default_rng(13).normal(0, 1, c.params.size)
    for tree in molecule_trees[:5]:
        assert permutation_sweep(c, tree) == 0.0


def test_permutation_sweep_identity():
    c = random_discrete_circuit(14)
    tree = sample_trees(c, 1, seed=5)[0]
    assert permutation_sweep(c, tree, max_perms=1) == 0.0


def test_het_swap_is_flagged(molecule_schema, molecule_trees):
    c = spsn_network(molecule_schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    c.params[:] = np.random.default_rng(15).normal(0, 1, c.params.size)
    assert het_swap_flagged(c, molecule_trees[0])


def test_gradient_check_on_random_circuits():
    for seed in range(6):
        c = random_discrete_circuit(seed + 50)
        tree = sample_trees(c, 1, seed=seed)[0]
        ok, worst = gradient_check(c, mask_missing(tree, 0.25, seed=seed))
        assert ok, worst


def test_collection_element_leaf_restriction():
    # brute force requires categorical leaves when enumerating free parts
    schema = infer_schema([{"a": 1.0}])
    c = spsn_network(schema, BuildConfig(n_l=1, n_s=2, n_p=2))
    with pytest.raises(ValueError):
        brute_force_mass(c, free_tree(schema))

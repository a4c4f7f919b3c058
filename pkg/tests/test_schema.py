import math

import pytest

from spsn import ConflictingTypes, EmptyCorpus, infer_schema
from spsn import schema as sc
from spsn.schema import HetS, HomS, LeafS, schema_from_json, schema_to_json


def test_single_document_real_leaf():
    schema = infer_schema([{"a": 1.0}])
    leaf = schema.node_at(("a",))
    assert isinstance(leaf, LeafS)
    assert leaf.kind == sc.REAL
    assert leaf.count == 1
    assert leaf.mean == 1.0
    assert leaf.variance == 0.0


def test_cardinality_stats():
    schema = infer_schema([{"xs": [1, 2]}, {"xs": [3]}])
    hom = schema.node_at(("xs",))
    assert isinstance(hom, HomS)
    assert (hom.card_min, hom.card_max, hom.card_mean) == (1, 2, 1.5)


def test_molecule_schema_shape(molecule_schema):
    root = molecule_schema.root
    assert isinstance(root, HetS)
    assert root.names == ("ind1", "lumo", "inda", "logp", "atoms")
    assert molecule_schema.node_at(("ind1",)).kind == sc.INT
    assert molecule_schema.node_at(("lumo",)).kind == sc.REAL
    # int and float both occurred at logp, so it promotes to real
    assert molecule_schema.node_at(("logp",)).kind == sc.REAL
    atoms = molecule_schema.node_at(("atoms",))
    assert isinstance(atoms, HomS)
    elem = atoms.element
    assert elem.names == ("element", "bonds", "charge", "atom")
    assert molecule_schema.node_at(("atoms", "[]", "element")).kind == sc.STR
    bonds = molecule_schema.node_at(("atoms", "[]", "bonds"))
    assert isinstance(bonds, HomS)
    assert bonds.element.names == ("element", "charge", "bond", "atom")


def test_string_vocabulary_counts():
    schema = infer_schema([{"s": "a"}, {"s": "b"}, {"s": "a"}])
    leaf = schema.node_at(("s",))
    assert set(zip(leaf.values, leaf.value_counts)) == {("a", 2), ("b", 1)}


def test_int_values_sorted_with_counts():
    schema = infer_schema([{"k": 3}, {"k": 1}, {"k": 3}])
    leaf = schema.node_at(("k",))
    assert leaf.values == (1, 3)
    assert leaf.value_counts == (1, 2)
    assert leaf.mean == pytest.approx(7 / 3)


def test_booleans_become_binary_ints():
    schema = infer_schema([{"b": True}, {"b": False}])
    leaf = schema.node_at(("b",))
    assert leaf.kind == sc.INT
    assert leaf.values == (0, 1)


def test_conflicting_types():
    with pytest.raises(ConflictingTypes):
        infer_schema([{"a": "x"}, {"a": 1.0}])
    with pytest.raises(ConflictingTypes):
        infer_schema([{"a": {"b": 1}}, {"a": 3}])


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        infer_schema([])


def test_empty_arrays_take_type_from_other_documents():
    schema = infer_schema([{"xs": []}, {"xs": [1]}])
    assert schema.node_at(("xs",)).card_min == 0
    with pytest.raises(ConflictingTypes):
        infer_schema([{"xs": []}, {"xs": []}])


def test_always_null_field_is_an_error():
    with pytest.raises(ConflictingTypes):
        infer_schema([{"a": None}, {"a": None}])


def test_nulls_do_not_disturb_stats():
    schema = infer_schema([{"a": 2.0}, {"a": None}, {"a": 4.0}])
    leaf = schema.node_at(("a",))
    assert leaf.count == 2
    assert leaf.mean == 3.0


def _normalized(node):
    if isinstance(node, LeafS):
        return (node.kind, node.count, node.mean, node.variance,
                frozenset(zip(node.values, node.value_counts)))
    if isinstance(node, HomS):
        return ("hom", _normalized(node.element), node.card_min,
                node.card_max, node.card_mean, node.count)
    return ("het", tuple((n, _normalized(c)) for n, c in node.fields))


def test_corpus_order_invariance(molecule_corpus):
    a = infer_schema(molecule_corpus)
    b = infer_schema(list(reversed(molecule_corpus)))
    # vocabularies keep first-seen order, so compare them as sets
    assert _normalized(a.root) == _normalized(b.root)


def test_serialization_round_trip_is_bit_exact(molecule_schema):
    import json
    blob = json.dumps(schema_to_json(molecule_schema))
    again = schema_from_json(json.loads(blob))
    assert again == molecule_schema
    assert json.dumps(schema_to_json(again)) == blob


def test_walk_paths(molecule_schema):
    assert ("atoms", "[]", "bonds", "[]", "charge") in molecule_schema.leaf_paths()
    assert molecule_schema.hom_paths() == (("atoms",), ("atoms", "[]", "bonds"))


def test_leaf_std():
    schema = infer_schema([{"a": 1.0}, {"a": 3.0}])
    assert schema.node_at(("a",)).std == pytest.approx(1.0)
    assert schema.node_at(("a",)).variance == pytest.approx(1.0)
    assert not math.isnan(schema.node_at(("a",)).mean)

import numpy as np
import pytest

from spsn import infer_schema, parse_value
from spsn.rng import substream

ELEMENTS = ["c", "h", "o", "n", "s", "cl", "f"]


def molecule_docs(n=12, seed=0):
    """Synthetic two-level documents shaped like a small-molecule record:
    four scalar properties plus a collection of atoms, each atom holding a
    nested collection of bonds."""
    rng = substream(seed, "molecule-docs")

    def bond():
        return {
            "element": ELEMENTS[rng.integers(len(ELEMENTS))],
            "charge": float(np.round(rng.normal(), 3)),
            "bond": int(rng.integers(1, 8)),
            "atom": int(rng.integers(1, 30)),
        }

    def atom():
        return {
            "element": ELEMENTS[rng.integers(len(ELEMENTS))],
            "bonds": [bond() for _ in range(rng.integers(0, 3))],
            "charge": float(np.round(rng.normal(), 3)),
            "atom": int(rng.integers(1, 30)),
        }

    docs = []
    for i in range(n):
        docs.append({
            "ind1": int(rng.integers(2)),
            "lumo": float(np.round(rng.normal(), 3)),
            "inda": int(rng.integers(2)),
            # integers and floats both occur here, forcing the promotion
            "logp": int(rng.integers(-3, 4)) if i % 3 == 0
            else float(np.round(rng.normal(), 3)),
            "atoms": [atom() for _ in range(rng.integers(1, 4))],
        })
    return docs


@pytest.fixture(scope="session")
def molecule_corpus():
    return molecule_docs()


@pytest.fixture(scope="session")
def molecule_schema(molecule_corpus):
    return infer_schema(molecule_corpus)


@pytest.fixture(scope="session")
def molecule_trees(molecule_corpus, molecule_schema):
    return [parse_value(d, molecule_schema) for d in molecule_corpus]

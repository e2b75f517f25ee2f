"""Shared fixtures: small graphs on disk and synthetic graph builders."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from ontoembed import ontograph

TOY_CONCEPTS = [
    {"id": "C1", "names": ["headache", "cephalalgia"],
     "definitions": ["pain in the head"], "semantic_types": ["symptom"]},
    {"id": "C2", "names": ["aspirin"],
     "definitions": ["a common analgesic drug"], "semantic_types": ["drug"]},
    {"id": "C3", "names": ["pain"], "definitions": [], "semantic_types": ["symptom"]},
    {"id": "C4", "names": ["drug"],
     "definitions": ["a chemical used as medicine"], "semantic_types": []},
]

TOY_EDGES = [
    {"source": "C1", "target": "C3", "label": "isa"},
    {"source": "C2", "target": "C4", "label": "isa"},
    {"source": "C2", "target": "C1", "label": "may_treat"},
]


def write_jsonl(path: Path, records) -> Path:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    return path


@pytest.fixture
def toy_graph_files(tmp_path):
    concepts = write_jsonl(tmp_path / "concepts.jsonl", TOY_CONCEPTS)
    edges = write_jsonl(tmp_path / "edges.jsonl", TOY_EDGES)
    return concepts, edges


@pytest.fixture
def toy_graph(toy_graph_files):
    return ontograph.load_graph(*toy_graph_files)


def synthetic_graph(n_leaves: int, n_parents: int, seed: int,
                    *, definitions_per_concept: int = 2,
                    extra_relations: bool = True) -> ontograph.OntologyGraph:
    """Two-level hierarchy: leaves spread round-robin over parents.

    Every concept gets two names and a couple of definitions; each leaf
    optionally gets one associative edge to another concept so that every
    leaf has a verbalizable non-hierarchical relation too.
    """
    rng = np.random.default_rng(seed)
    concepts = {}
    edges = []

    parent_ids = [f"P{i:04d}" for i in range(n_parents)]
    leaf_ids = [f"L{i:05d}" for i in range(n_leaves)]

    for i, pid in enumerate(parent_ids):
        concepts[pid] = ontograph.Concept(
            id=pid,
            names=(f"group{i} region", f"category{i} zone"),
            definitions=tuple(f"definition {j} of group{i} region"
                              for j in range(definitions_per_concept)),
            semantic_types=(f"type{i % 7}",),
        )
    for i, lid in enumerate(leaf_ids):
        concepts[lid] = ontograph.Concept(
            id=lid,
            names=(f"item{i} unit", f"variant{i} form"),
            definitions=tuple(f"definition {j} of item{i} unit"
                              for j in range(definitions_per_concept)),
            semantic_types=(f"type{i % 7}",),
        )
        parent = parent_ids[i % n_parents]
        edges.append(ontograph.Relationship(lid, parent, "isa", ontograph.HIERARCHICAL))
        if extra_relations:
            other = leaf_ids[int(rng.integers(0, n_leaves))]
            edges.append(ontograph.Relationship(
                lid, other, "related_to", ontograph.ASSOCIATIVE))

    return ontograph.OntologyGraph(concepts=concepts, edges=edges)


@pytest.fixture(scope="session")
def toy_graph_session(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("toy")
    concepts = write_jsonl(tmp / "concepts.jsonl", TOY_CONCEPTS)
    edges = write_jsonl(tmp / "edges.jsonl", TOY_EDGES)
    return ontograph.load_graph(concepts, edges)


@pytest.fixture(scope="session")
def corpus_session(toy_graph_session):
    from ontoembed import descgen
    return list(descgen.generate_corpus(toy_graph_session, 200, seed=99))


@pytest.fixture(scope="session")
def l2p_fixture_graph():
    # proportions follow the benchmark's leaf-heavy shape: 550 / 150
    return synthetic_graph(550, 150, seed=20)


@pytest.fixture(scope="session")
def grounding_graph():
    return synthetic_graph(850, 150, seed=21)

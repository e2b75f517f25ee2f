"""Multi-relational ontology loading, validation, and hierarchy traversal.

The graph is read from two JSONL files (UTF-8, one object per line):

    concepts.jsonl  {"id": str, "names": [str], "definitions": [str],
                     "semantic_types": [str]}
    edges.jsonl     {"source": str, "target": str, "label": str,
                     "kind": "hierarchical" | "associative"}

**Edge direction convention:** hierarchical edges point FROM child TO
parent, so following ``source -> target`` walks up the hierarchy. A leaf
is a concept that is nobody's parent (it never appears as the target of a
hierarchical edge).

Native vocabulary release formats (UMLS RRF, SnomedCT RF2) are out of
scope; converters should emit the JSONL schema above. When an edge record
omits ``kind``, the loader falls back to a per-label table
(:data:`DEFAULT_HIERARCHY_LABELS` by default) so that converters for
vocabularies with unlabeled hierarchies stay one-liners.

The graph is immutable after load and safe to share across worker threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

__all__ = [
    "Concept",
    "Relationship",
    "OntologyGraph",
    "GraphError",
    "MalformedRecordError",
    "DuplicateConceptError",
    "DanglingEdgeError",
    "UnknownConceptError",
    "DEFAULT_HIERARCHY_LABELS",
    "DEFAULT_MAX_DEPTH",
    "load_graph",
    "read_concepts",
    "save_graph",
]

HIERARCHICAL = "hierarchical"
ASSOCIATIVE = "associative"

#: Labels treated as hierarchical when an edge record carries no "kind".
DEFAULT_HIERARCHY_LABELS = frozenset(
    {"isa", "is_a", "inverse_isa", "inverse_is_a", "subclass_of"}
)

#: Default cap for ancestor traversal; real vocabularies contain cycles,
#: so unbounded walks are never attempted.
DEFAULT_MAX_DEPTH = 10


class GraphError(ValueError):
    """Base class for ontology validation failures."""


class MalformedRecordError(GraphError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason


class DuplicateConceptError(GraphError):
    def __init__(self, concept_id: str, line_no: int):
        super().__init__(f"duplicate concept id {concept_id!r} (line {line_no})")
        self.concept_id = concept_id


class DanglingEdgeError(GraphError):
    def __init__(self, concept_id: str, line_no: int):
        super().__init__(
            f"edge endpoint {concept_id!r} does not resolve to a concept (line {line_no})"
        )
        self.concept_id = concept_id


class UnknownConceptError(GraphError):
    def __init__(self, concept_id: str):
        super().__init__(f"unknown concept id {concept_id!r}")
        self.concept_id = concept_id


@dataclass(frozen=True)
class Concept:
    """A single ontology concept. ``names[0]`` is the canonical name."""

    id: str
    names: tuple[str, ...]
    definitions: tuple[str, ...] = ()
    semantic_types: tuple[str, ...] = ()

    @property
    def canonical_name(self) -> str:
        return self.names[0]


@dataclass(frozen=True)
class Relationship:
    """A typed directed edge; hierarchical edges run child -> parent."""

    source: str
    target: str
    label: str
    kind: str = ASSOCIATIVE

    @property
    def is_hierarchical(self) -> bool:
        return self.kind == HIERARCHICAL


@dataclass
class OntologyGraph:
    """Validated concept map plus edge list, with derived hierarchy adjacency.

    Instances are produced by :func:`load_graph` (or built in tests from
    already-validated parts) and never mutated afterwards.
    """

    concepts: dict[str, Concept]
    edges: list[Relationship]
    # child id -> parent ids, derived from hierarchical edges
    parents: dict[str, tuple[str, ...]] = field(init=False)
    # concept id -> outgoing edges, in file order
    out_edges: dict[str, tuple[Relationship, ...]] = field(init=False)

    def __post_init__(self):
        parents: dict[str, list[str]] = {}
        out: dict[str, list[Relationship]] = {}
        for edge in self.edges:
            out.setdefault(edge.source, []).append(edge)
            if edge.is_hierarchical:
                ps = parents.setdefault(edge.source, [])
                if edge.target not in ps:
                    ps.append(edge.target)
        self.parents = {cid: tuple(ps) for cid, ps in parents.items()}
        self.out_edges = {cid: tuple(es) for cid, es in out.items()}

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self.concepts

    def concept(self, concept_id: str) -> Concept:
        try:
            return self.concepts[concept_id]
        except KeyError:
            raise UnknownConceptError(concept_id) from None

    def parents_of(self, concept_id: str) -> tuple[str, ...]:
        self.concept(concept_id)
        return self.parents.get(concept_id, ())

    def outgoing(self, concept_id: str) -> tuple[Relationship, ...]:
        self.concept(concept_id)
        return self.out_edges.get(concept_id, ())

    def ancestors(self, concept_id: str, max_depth: int = DEFAULT_MAX_DEPTH) -> set[str]:
        """Transitive hierarchical parents of ``concept_id``, up to ``max_depth``.

        Excludes the concept itself. Cycle-safe: each concept is visited at
        most once, so the walk terminates on any input, and the result is
        stable once ``max_depth`` exceeds the longest acyclic parent chain.
        """
        if max_depth < 1:
            raise ValueError(f"max_depth must be positive, got {max_depth}")
        self.concept(concept_id)
        found: set[str] = set()
        frontier = [concept_id]
        for _ in range(max_depth):
            nxt: list[str] = []
            for cid in frontier:
                for parent in self.parents.get(cid, ()):
                    if parent != concept_id and parent not in found:
                        found.add(parent)
                        nxt.append(parent)
            if not nxt:
                break
            frontier = nxt
        return found

    def leaf_ids(self) -> set[str]:
        """Concepts that are nobody's parent (no hierarchical child)."""
        has_child = {e.target for e in self.edges if e.is_hierarchical}
        return set(self.concepts) - has_child

    def nonleaf_ids(self) -> set[str]:
        return set(self.concepts) - self.leaf_ids()

    def stats(self) -> dict[str, int]:
        return {
            "concepts": len(self.concepts),
            "names": sum(len(c.names) for c in self.concepts.values()),
            "definitions": sum(len(c.definitions) for c in self.concepts.values()),
            "edges": len(self.edges),
        }


def _str_list(record: dict, key: str, path, line_no: int, allow_missing=True) -> tuple[str, ...]:
    value = record.get(key, [] if allow_missing else None)
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise MalformedRecordError(path, line_no, f"field {key!r} must be a list of strings")
    return tuple(value)


def _parse_concept(record: dict, path, line_no: int) -> Concept:
    cid = record.get("id")
    if not isinstance(cid, str) or not cid:
        raise MalformedRecordError(path, line_no, "field 'id' must be a non-empty string")
    names = _str_list(record, "names", path, line_no, allow_missing=False)
    if not names or any(not n.strip() for n in names):
        raise MalformedRecordError(path, line_no, "field 'names' must be non-empty, with no blank names")
    return Concept(
        id=cid,
        names=names,
        definitions=_str_list(record, "definitions", path, line_no),
        semantic_types=_str_list(record, "semantic_types", path, line_no),
    )


def _parse_edge(record: dict, path, line_no: int, hierarchy_labels) -> Relationship:
    for key in ("source", "target", "label"):
        if not isinstance(record.get(key), str) or not record[key]:
            raise MalformedRecordError(path, line_no, f"field {key!r} must be a non-empty string")
    kind = record.get("kind")
    if kind is None:
        kind = HIERARCHICAL if record["label"] in hierarchy_labels else ASSOCIATIVE
    elif kind not in (HIERARCHICAL, ASSOCIATIVE):
        raise MalformedRecordError(path, line_no, f"field 'kind' must be 'hierarchical' or 'associative', got {kind!r}")
    return Relationship(source=record["source"], target=record["target"], label=record["label"], kind=kind)


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise MalformedRecordError(path, line_no, "record must be a JSON object")
            yield line_no, record


def load_graph(
    concepts_path,
    edges_path,
    *,
    hierarchy_labels=DEFAULT_HIERARCHY_LABELS,
    on_duplicate: str = "error",
) -> OntologyGraph:
    """Load and fully validate an ontology graph from two JSONL files.

    Parameters
    ----------
    concepts_path, edges_path:
        Paths to the concept and edge files (schema in the module docstring).
    hierarchy_labels:
        Labels treated as hierarchical for edge records without a ``kind``.
    on_duplicate:
        ``"error"`` rejects a repeated concept id; ``"merge"`` unions the
        names/definitions/semantic types of the duplicate records (source
        vocabularies merged into one file can repeat ids legitimately).

    Raises
    ------
    MalformedRecordError, DuplicateConceptError, DanglingEdgeError
        All carry the offending file position or identifier.
    """
    if on_duplicate not in ("error", "merge"):
        raise ValueError(f"on_duplicate must be 'error' or 'merge', got {on_duplicate!r}")

    concepts: dict[str, Concept] = {}
    for line_no, record in _iter_jsonl(concepts_path):
        concept = _parse_concept(record, concepts_path, line_no)
        if concept.id in concepts:
            if on_duplicate == "error":
                raise DuplicateConceptError(concept.id, line_no)
            prev = concepts[concept.id]
            concepts[concept.id] = Concept(
                id=concept.id,
                names=prev.names + tuple(n for n in concept.names if n not in prev.names),
                definitions=prev.definitions + tuple(d for d in concept.definitions if d not in prev.definitions),
                semantic_types=prev.semantic_types + tuple(s for s in concept.semantic_types if s not in prev.semantic_types),
            )
        else:
            concepts[concept.id] = concept

    edges: list[Relationship] = []
    for line_no, record in _iter_jsonl(edges_path):
        edge = _parse_edge(record, edges_path, line_no, hierarchy_labels)
        for endpoint in (edge.source, edge.target):
            if endpoint not in concepts:
                raise DanglingEdgeError(endpoint, line_no)
        edges.append(edge)

    return OntologyGraph(concepts=concepts, edges=edges)


def read_concepts(path) -> list[Concept]:
    """Parse a concept JSONL file alone; duplicate ids are an error."""
    seen: set[str] = set()
    concepts: list[Concept] = []
    for line_no, record in _iter_jsonl(path):
        concept = _parse_concept(record, path, line_no)
        if concept.id in seen:
            raise DuplicateConceptError(concept.id, line_no)
        seen.add(concept.id)
        concepts.append(concept)
    return concepts


def save_graph(graph: OntologyGraph, concepts_path, edges_path) -> None:
    """Write a graph back to the JSONL schema; round-trips with :func:`load_graph`."""
    concepts_path, edges_path = Path(concepts_path), Path(edges_path)
    with open(concepts_path, "w", encoding="utf-8", newline="\n") as fh:
        for concept in graph.concepts.values():
            fh.write(json.dumps({
                "id": concept.id,
                "names": list(concept.names),
                "definitions": list(concept.definitions),
                "semantic_types": list(concept.semantic_types),
            }, ensure_ascii=False) + "\n")
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        for edge in graph.edges:
            fh.write(json.dumps({
                "source": edge.source,
                "target": edge.target,
                "label": edge.label,
                "kind": edge.kind,
            }, ensure_ascii=False) + "\n")

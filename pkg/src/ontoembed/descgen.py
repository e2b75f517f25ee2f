"""Templated natural-language descriptions from ontology relationships.

Every description instantiates one template:

    [generic-concept] which [relation-phrase] [related-name]

e.g. ``"antibiotic which may prevent infection"``. The generic slot is
drawn from the names of the concept's ancestors and its semantic types
(or left blank, rendering as ``"something"``), the relation from the
concept's outgoing edges, and the related name from the target concept's
names. Rendered text is lowercase with no terminal period.

Generation is deterministic: description ``i`` of a run is produced from
its own counter-keyed Philox stream ``(seed, i)``, so disjoint index
ranges can be generated independently (and in parallel) while the overall
output stays byte-identical for a given seed.

File formats:

    descriptions.jsonl  {"concept_id": str, "text": str,
                         "generic": str | null, "relation": str,
                         "related": str, "rng": str}
    lexicon.tsv         label<TAB>rule[<TAB>phrase]
                        rule in {use_as_is, prepend_is, prepend_has, custom};
                        a row with label "*" sets the fallback rule.
"""

from __future__ import annotations

import json
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from .ontograph import DEFAULT_MAX_DEPTH, OntologyGraph

__all__ = [
    "VerbLexicon",
    "Description",
    "NoRelationsError",
    "GroundingError",
    "DEFAULT_LEXICON",
    "verbalize_relation",
    "render_description",
    "generate_description",
    "generate_corpus",
    "check_description",
    "load_lexicon",
    "write_descriptions",
    "read_descriptions",
]

USE_AS_IS = "use_as_is"
PREPEND_IS = "prepend_is"
PREPEND_HAS = "prepend_has"
CUSTOM = "custom"
_RULES = (USE_AS_IS, PREPEND_IS, PREPEND_HAS, CUSTOM)


class NoRelationsError(ValueError):
    """Concept has no outgoing relationships; the caller should skip it."""

    def __init__(self, concept_id: str):
        super().__init__(f"concept {concept_id!r} has no outgoing relationships")
        self.concept_id = concept_id


class GroundingError(ValueError):
    """A description's slots do not check out against the graph."""


@dataclass(frozen=True)
class VerbLexicon:
    """Per-label verbalization rules, with a declared fallback.

    ``rules`` maps a relationship label to ``(rule, phrase)``; ``phrase``
    is only meaningful for the ``custom`` rule. Labels without an entry
    use ``default_rule``.
    """

    rules: dict[str, tuple[str, str | None]]
    default_rule: str = USE_AS_IS

    def __post_init__(self):
        for label, (rule, phrase) in self.rules.items():
            if rule not in _RULES:
                raise ValueError(f"unknown rule {rule!r} for label {label!r}")
            if rule == CUSTOM and not phrase:
                raise ValueError(f"custom rule for label {label!r} needs a phrase")
        if self.default_rule not in (USE_AS_IS, PREPEND_IS, PREPEND_HAS):
            raise ValueError(f"default rule must not be 'custom', got {self.default_rule!r}")


#: Most relationship labels in source vocabularies are already verbal
#: ("may_treat", "causes") and pass through as-is; this table covers the
#: common non-verbal ones. Extend via a lexicon file for new vocabularies.
DEFAULT_LEXICON = VerbLexicon(
    rules={
        "isa": (CUSTOM, "is a"),
        "is_a": (CUSTOM, "is a"),
        "part_of": (CUSTOM, "is part of"),
        "active_ingredient": (PREPEND_HAS, None),
        "finding_site": (PREPEND_HAS, None),
        "causative_agent": (PREPEND_HAS, None),
        "ingredient_of": (PREPEND_IS, None),
        "form_of": (PREPEND_IS, None),
    },
    default_rule=USE_AS_IS,
)


@dataclass(frozen=True)
class Description:
    """One generated sentence with the slot values that produced it.

    ``generic`` is None when the slot was left blank (rendered as
    "something"). ``rng`` records the stream that produced the sample.
    """

    concept_id: str
    text: str
    generic: str | None
    relation_phrase: str
    related_name: str
    rng: str = ""


def verbalize_relation(label: str, lexicon: VerbLexicon = DEFAULT_LEXICON) -> str:
    """Turn a relationship label into a phrase usable after the generic slot."""
    rule, phrase = lexicon.rules.get(label, (lexicon.default_rule, None))
    base = label.replace("_", " ").strip()
    if rule == CUSTOM:
        return phrase  # type: ignore[return-value]
    if rule == PREPEND_IS:
        return f"is {base}"
    if rule == PREPEND_HAS:
        return f"has {base}"
    return base


def render_description(generic: str | None, relation_phrase: str, related_name: str) -> str:
    """Render the template; lowercase, no terminal period."""
    head = "something" if generic is None else generic
    return f"{head} which {relation_phrase} {related_name}".lower()


def _generic_pool(graph: OntologyGraph, concept_id: str, max_depth: int) -> list[str]:
    # Sorted for a draw order independent of set iteration order.
    names: set[str] = set()
    for ancestor_id in graph.ancestors(concept_id, max_depth=max_depth):
        names.update(graph.concepts[ancestor_id].names)
    names.update(graph.concepts[concept_id].semantic_types)
    return sorted(names)


def generate_description(
    graph: OntologyGraph,
    concept_id: str,
    lexicon: VerbLexicon = DEFAULT_LEXICON,
    rng: np.random.Generator | None = None,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
    rng_label: str = "",
) -> Description:
    """Sample one description for ``concept_id``.

    Draw order is fixed (generic, edge, related name), so equal seeds give
    equal descriptions. The generic slot is uniform over the pool of
    ancestor names and semantic types plus one blank candidate.

    Raises :class:`NoRelationsError` if the concept has no outgoing edges.
    """
    if rng is None:
        rng = np.random.default_rng()
    out_edges = graph.outgoing(concept_id)
    if not out_edges:
        raise NoRelationsError(concept_id)

    pool = _generic_pool(graph, concept_id, max_depth)
    pick = int(rng.integers(0, len(pool) + 1))
    generic = None if pick == len(pool) else pool[pick]

    edge = out_edges[int(rng.integers(0, len(out_edges)))]
    relation_phrase = verbalize_relation(edge.label, lexicon)

    target_names = graph.concepts[edge.target].names
    related_name = target_names[int(rng.integers(0, len(target_names)))]

    return Description(
        concept_id=concept_id,
        text=render_description(generic, relation_phrase, related_name),
        generic=generic,
        relation_phrase=relation_phrase,
        related_name=related_name,
        rng=rng_label,
    )


def _eligible_concepts(graph: OntologyGraph) -> tuple[list[str], np.ndarray]:
    ids = [cid for cid in graph.concepts if graph.out_edges.get(cid)]
    degrees = np.array([len(graph.out_edges[cid]) for cid in ids], dtype=np.float64)
    return ids, degrees


def _stream_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, index], dtype=np.uint64)))


def generate_corpus(
    graph: OntologyGraph,
    count: int,
    seed: int,
    lexicon: VerbLexicon = DEFAULT_LEXICON,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
    start_index: int = 0,
) -> Iterator[Description]:
    """Yield ``count`` descriptions, sampling concepts proportionally to out-degree.

    Duplicates are permitted; a corpus does not exhaust the graph. Passing
    ``start_index`` generates the sub-stream for indices
    ``[start_index, start_index + count)`` of the same logical run, which
    is how workers split a large run without coordinating.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count == 0:
        return
    ids, degrees = _eligible_concepts(graph)
    if not ids:
        raise NoRelationsError("<no concept with outgoing edges>")
    cumulative = np.cumsum(degrees / degrees.sum())

    for i in range(start_index, start_index + count):
        rng = _stream_rng(seed, i)
        concept_idx = int(np.searchsorted(cumulative, rng.random(), side="right"))
        concept_idx = min(concept_idx, len(ids) - 1)
        yield generate_description(
            graph,
            ids[concept_idx],
            lexicon,
            rng,
            max_depth=max_depth,
            rng_label=f"philox:{seed}:{i}",
        )


def check_description(
    graph: OntologyGraph,
    desc: Description,
    *,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> None:
    """Verify a description's slots against the graph; raise :class:`GroundingError`.

    Checks template reconstruction, the generic slot's membership in the
    concept's ancestor names / semantic types, and the related name's
    membership in some outgoing edge target's names.
    """
    expected = render_description(desc.generic, desc.relation_phrase, desc.related_name)
    if desc.text != expected:
        raise GroundingError(f"text {desc.text!r} does not reconstruct from slots ({expected!r})")
    if desc.concept_id not in graph:
        raise GroundingError(f"unknown concept {desc.concept_id!r}")
    if desc.generic is not None and desc.generic not in _generic_pool(graph, desc.concept_id, max_depth):
        raise GroundingError(
            f"generic slot {desc.generic!r} is not an ancestor name or semantic type of {desc.concept_id!r}"
        )
    for edge in graph.outgoing(desc.concept_id):
        if desc.related_name in graph.concepts[edge.target].names:
            return
    raise GroundingError(
        f"related name {desc.related_name!r} is not a name of any relation target of {desc.concept_id!r}"
    )


def load_lexicon(path) -> VerbLexicon:
    """Read a lexicon TSV (see module docstring for the row format)."""
    rules: dict[str, tuple[str, str | None]] = {}
    default_rule = USE_AS_IS
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{line_no}: expected label<TAB>rule[<TAB>phrase]")
            label, rule = parts[0], parts[1]
            phrase = parts[2] if len(parts) == 3 else None
            if label == "*":
                default_rule = rule
            else:
                rules[label] = (rule, phrase)
    return VerbLexicon(rules=rules, default_rule=default_rule)


def write_descriptions(descriptions, path) -> int:
    """Write descriptions to JSONL; returns the number written."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for desc in descriptions:
            fh.write(json.dumps({
                "concept_id": desc.concept_id,
                "text": desc.text,
                "generic": desc.generic,
                "relation": desc.relation_phrase,
                "related": desc.related_name,
                "rng": desc.rng,
            }, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_descriptions(path) -> list[Description]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            out.append(Description(
                concept_id=record["concept_id"],
                text=record["text"],
                generic=record["generic"],
                relation_phrase=record["relation"],
                related_name=record["related"],
                rng=record.get("rng", ""),
            ))
    return out

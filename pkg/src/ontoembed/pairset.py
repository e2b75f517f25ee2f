"""Contrastive training pairs: (concept name, definition-or-description).

The dataset mixes two pair kinds. A ``definition`` pair anchors one of the
concept's names against one of its curated definitions; a ``description``
pair anchors a name against a generated sentence from :mod:`.descgen`.
Composition is controlled by a target definition fraction, with every
definition reused at most ``def_repeat_cap`` times and paired with
distinct concept names before any name repeats.

Output is headerless TSV, one pair per line::

    anchor<TAB>positive<TAB>concept_id<TAB>kind[<TAB>weight]

Tabs, newlines, and backslashes inside text fields are escaped
(``\\t``, ``\\n``, ``\\r``, ``\\\\``) so the file stays line-oriented and
diffable. A JSON manifest sidecar (``<pairs>.manifest.json``) records
counts, the achieved fraction, per-definition usage, the seed, and input
digests. Building is a pure function of (graph, corpus, parameters,
seed): equal inputs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .descgen import Description, read_descriptions
from .ontograph import OntologyGraph

__all__ = [
    "TrainingPair",
    "DatasetManifest",
    "DefinitionShortfallError",
    "DescriptionShortfallError",
    "build_pairs",
    "split",
    "read_pairs",
    "write_pairs",
    "escape_field",
    "unescape_field",
]

KIND_DEFINITION = "definition"
KIND_DESCRIPTION = "description"

_ESCAPES = str.maketrans({"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"})


class DefinitionShortfallError(ValueError):
    def __init__(self, requested: int, achievable: int):
        super().__init__(
            f"cannot produce {requested} definition pairs under the repeat cap; "
            f"achievable maximum is {achievable}"
        )
        self.requested = requested
        self.achievable = achievable


class DescriptionShortfallError(ValueError):
    def __init__(self, requested: int, achievable: int):
        super().__init__(
            f"corpus holds {achievable} descriptions but {requested} description pairs were requested"
        )
        self.requested = requested
        self.achievable = achievable


@dataclass(frozen=True)
class TrainingPair:
    anchor: str
    positive: str
    concept_id: str
    kind: str
    weight: float = 1.0


@dataclass
class DatasetManifest:
    total: int
    definition_pairs: int
    description_pairs: int
    def_fraction_target: float
    def_fraction_actual: float
    def_repeat_cap: int
    seed: int
    definition_usage: dict[str, int] = field(default_factory=dict)
    source_digests: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return cls(**json.loads(text))


def escape_field(text: str) -> str:
    return text.translate(_ESCAPES)


def unescape_field(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt, "\\" + nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _pair_line(pair: TrainingPair, include_weight: bool) -> str:
    fields = [
        escape_field(pair.anchor),
        escape_field(pair.positive),
        escape_field(pair.concept_id),
        pair.kind,
    ]
    if include_weight:
        fields.append(repr(pair.weight))
    return "\t".join(fields)


def write_pairs(pairs, path, include_weight: bool = False) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in pairs:
            fh.write(_pair_line(pair, include_weight) + "\n")
            n += 1
    return n


def read_pairs(path) -> list[TrainingPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) not in (4, 5):
                raise ValueError(f"{path}:{line_no}: expected 4 or 5 tab-separated fields")
            weight = float(fields[4]) if len(fields) == 5 else 1.0
            pairs.append(TrainingPair(
                anchor=unescape_field(fields[0]),
                positive=unescape_field(fields[1]),
                concept_id=unescape_field(fields[2]),
                kind=fields[3],
                weight=weight,
            ))
    return pairs


def _file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def graph_digest(graph: OntologyGraph) -> str:
    """Content digest of a graph, independent of the files it came from."""
    digest = hashlib.sha256()
    for cid in sorted(graph.concepts):
        c = graph.concepts[cid]
        digest.update(json.dumps(
            [c.id, list(c.names), list(c.definitions), list(c.semantic_types)]
        ).encode())
    for e in graph.edges:
        digest.update(json.dumps([e.source, e.target, e.label, e.kind]).encode())
    return digest.hexdigest()


def _definition_slots(definitions: list[tuple[str, int, str]], n_def: int, cap: int,
                      rng: np.random.Generator) -> list[tuple[int, int]]:
    """Assign usage counts: (definition index, uses), spread as evenly as possible."""
    n = len(definitions)
    achievable = n * cap
    if n_def > achievable:
        raise DefinitionShortfallError(n_def, achievable)
    if n_def == 0:
        return []
    order = rng.permutation(n)
    base, extra = divmod(n_def, n)
    return [(int(idx), base + (1 if pos < extra else 0)) for pos, idx in enumerate(order)]


def build_pairs(
    graph: OntologyGraph,
    descriptions,
    out_path,
    *,
    total: int,
    seed: int,
    def_fraction: float = 0.15,
    def_repeat_cap: int = 50,
    concept_weights: dict[str, float] | None = None,
) -> DatasetManifest:
    """Assemble, shuffle, and write the training pair file plus its manifest.

    ``descriptions`` is a sequence of :class:`~ontoembed.descgen.Description`
    or a path to a descriptions.jsonl file. Description pairs consume corpus
    entries without replacement; definitions cycle through the concept's
    distinct names before repeating any. ``concept_weights`` adds a
    pass-through weight column (default weight 1.0) without changing the
    sampling itself.

    Raises a shortfall error, naming the achievable maximum, when the
    requested composition cannot be met.
    """
    if total <= 0:
        raise ValueError(f"total must be positive, got {total}")
    if not 0.0 <= def_fraction <= 1.0:
        raise ValueError(f"def_fraction must be in [0, 1], got {def_fraction}")
    if def_repeat_cap < 1:
        raise ValueError(f"def_repeat_cap must be >= 1, got {def_repeat_cap}")

    desc_source_digest = None
    if isinstance(descriptions, (str, Path)):
        desc_source_digest = _file_digest(descriptions)
        descriptions = read_descriptions(descriptions)
    descriptions = list(descriptions)

    n_def = int(np.floor(total * def_fraction + 0.5))
    n_desc = total - n_def
    if n_desc > 0 and not descriptions:
        raise DescriptionShortfallError(n_desc, 0)

    rng = np.random.default_rng(seed)

    # Definition order is a function of graph content, not file order.
    definitions = [
        (cid, k, text)
        for cid in sorted(graph.concepts)
        for k, text in enumerate(graph.concepts[cid].definitions)
    ]
    if n_def > 0 and not definitions:
        raise DefinitionShortfallError(n_def, 0)

    pairs: list[TrainingPair] = []
    usage: dict[str, int] = {}
    for def_idx, uses in _definition_slots(definitions, n_def, def_repeat_cap, rng):
        cid, k, text = definitions[def_idx]
        names = graph.concepts[cid].names
        anchors: list[str] = []
        while len(anchors) < uses:
            cycle = rng.permutation(len(names))
            anchors.extend(names[int(j)] for j in cycle)
        weight = (concept_weights or {}).get(cid, 1.0)
        for anchor in anchors[:uses]:
            pairs.append(TrainingPair(anchor, text, cid, KIND_DEFINITION, weight))
        usage[f"{cid}#{k}"] = uses

    if n_desc > len(descriptions):
        raise DescriptionShortfallError(n_desc, len(descriptions))
    chosen = rng.permutation(len(descriptions))[:n_desc]
    # One uniform draw per pair, vectorized: floor(u * n_names) is uniform.
    uniforms = rng.random(n_desc)
    for u, desc_idx in zip(uniforms, chosen):
        desc = descriptions[int(desc_idx)]
        names = graph.concepts[desc.concept_id].names
        anchor = names[int(u * len(names))]
        weight = (concept_weights or {}).get(desc.concept_id, 1.0)
        pairs.append(TrainingPair(anchor, desc.text, desc.concept_id, KIND_DESCRIPTION, weight))

    shuffle = rng.permutation(len(pairs))
    shuffled = [pairs[int(i)] for i in shuffle]
    write_pairs(shuffled, out_path, include_weight=concept_weights is not None)

    digests = {"graph": graph_digest(graph)}
    if desc_source_digest is not None:
        digests["descriptions"] = desc_source_digest
    manifest = DatasetManifest(
        total=len(shuffled),
        definition_pairs=n_def,
        description_pairs=n_desc,
        def_fraction_target=def_fraction,
        def_fraction_actual=n_def / len(shuffled),
        def_repeat_cap=def_repeat_cap,
        seed=seed,
        definition_usage=usage,
        source_digests=digests,
    )
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json() + "\n")
    return manifest


def split(pairs_path, train_path, dev_path, *, dev_fraction: float, seed: int) -> tuple[int, int]:
    """Deterministically split a pair file; dev holds description pairs only.

    Definition pairs always stay in train, mirroring a description-only
    development set, so no definition text can leak across the split.
    Returns (train count, dev count).
    """
    if not 0.0 < dev_fraction < 1.0:
        raise ValueError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    pairs = read_pairs(pairs_path)
    total = len(pairs)
    n_dev = int(np.floor(total * dev_fraction + 0.5))
    if n_dev == 0 or n_dev == total:
        raise ValueError(f"dev_fraction {dev_fraction} yields an empty side for {total} pairs")

    desc_indices = np.array([i for i, p in enumerate(pairs) if p.kind == KIND_DESCRIPTION])
    if n_dev > len(desc_indices):
        raise ValueError(
            f"dev needs {n_dev} description pairs but the file only has {len(desc_indices)}"
        )
    rng = np.random.default_rng(seed)
    dev_set = set(int(i) for i in rng.permutation(desc_indices)[:n_dev])

    has_weight = any(p.weight != 1.0 for p in pairs)
    train = [p for i, p in enumerate(pairs) if i not in dev_set]
    dev = [p for i, p in enumerate(pairs) if i in dev_set]
    write_pairs(train, train_path, include_weight=has_weight)
    write_pairs(dev, dev_path, include_weight=has_weight)
    return len(train), len(dev)

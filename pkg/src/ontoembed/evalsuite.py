"""Evaluation battery for concept encoders.

Covers intrinsic similarity (rank correlation against human gold
scores), leaf-to-parent retrieval over an ontology, sentence-similarity
regression quality, entail/contradict triplet ordering, and linking
mentions in context to concept names. Every function here is read-only
with respect to the encoder: evaluations encode text and compare, they
never touch parameters.

Statistics are implemented directly: Pearson as a two-pass centered dot
product, Spearman as Pearson over midranks (ties get the average of the
rank positions they span). Constant input has no defined correlation and
raises instead of returning NaN.

Benchmark files are headerless TSV with the same field escaping as the
training-pair format. Columns by task: similarity ``term1 term2 score``,
sentence pairs ``s1 s2 score``, triplets ``premise entailed
contradicted``, linking ``mention sentence gold_id``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ontograph import OntologyGraph, UnknownConceptError
from .pairset import escape_field, unescape_field
from .vecindex import EmbeddingMatrix, topk

__all__ = [
    "EvalReport",
    "ConstantInputError",
    "BenchmarkFormatError",
    "pearson",
    "spearman",
    "midranks",
    "pairwise_similarity",
    "eval_concept_similarity",
    "L2PTask",
    "build_l2p",
    "save_l2p",
    "load_l2p",
    "eval_l2p",
    "eval_sts",
    "eval_nli_triplets",
    "nel_query",
    "eval_nel",
    "concept_name_index",
    "group_block_means",
    "similarity_matrix_report",
    "read_term_pairs",
    "read_sts_pairs",
    "read_nli_triplets",
    "read_nel_mentions",
]

DISTANCES = ("cosine", "euclidean", "manhattan")


class ConstantInputError(ValueError):
    def __init__(self, which: str):
        super().__init__(f"{which} input is constant; correlation is undefined")


class BenchmarkFormatError(ValueError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no


@dataclass
class EvalReport:
    """One evaluation outcome: headline metric plus supporting numbers."""

    task: str
    metric: str
    value: float
    n: int
    details: dict = field(default_factory=dict)
    fingerprint: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"task": self.task, "metric": self.metric, "value": self.value,
                   "n": self.n, "details": self.details, "fingerprint": self.fingerprint}
        return json.dumps(payload, sort_keys=True)

    def render(self) -> str:
        lines = [f"{self.task}: {self.metric}={self.value:.4f} (n={self.n})"]
        for key in sorted(self.details):
            lines.append(f"  {key}: {self.details[key]}")
        for key in sorted(self.fingerprint):
            lines.append(f"  # {key}: {self.fingerprint[key]}")
        return "\n".join(lines)


def _as_finite(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def pearson(x, y) -> float:
    """Two-pass Pearson correlation; constant input raises."""
    xs = _as_finite(x, "x")
    ys = _as_finite(y, "y")
    if xs.shape != ys.shape:
        raise ValueError(f"length mismatch: {xs.shape[0]} vs {ys.shape[0]}")
    if xs.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    xc = xs - xs.mean()
    yc = ys - ys.mean()
    sx = float(np.sqrt(np.sum(xc * xc)))
    sy = float(np.sqrt(np.sum(yc * yc)))
    if sx == 0.0:
        raise ConstantInputError("x")
    if sy == 0.0:
        raise ConstantInputError("y")
    r = float(np.sum(xc * yc)) / (sx * sy)
    return float(min(1.0, max(-1.0, r)))


def midranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the positions they cover."""
    arr = _as_finite(values, "values")
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.shape[0], dtype=np.float64)
    i = 0
    while i < arr.shape[0]:
        j = i
        while j + 1 < arr.shape[0] and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Rank correlation: Pearson over midranks."""
    xs = _as_finite(x, "x")
    ys = _as_finite(y, "y")
    if xs.shape != ys.shape:
        raise ValueError(f"length mismatch: {xs.shape[0]} vs {ys.shape[0]}")
    return pearson(midranks(xs), midranks(ys))


def pairwise_similarity(left: np.ndarray, right: np.ndarray, distance: str) -> np.ndarray:
    """Row-wise similarity; euclidean and manhattan are negated distances."""
    if distance == "cosine":
        return np.sum(left * right, axis=1)
    if distance == "euclidean":
        return -np.linalg.norm(left - right, axis=1)
    if distance == "manhattan":
        return -np.sum(np.abs(left - right), axis=1)
    raise ValueError(f"unknown distance {distance!r}; expected one of {DISTANCES}")


def _fingerprint(encoder, **extra) -> dict:
    fp = {"model": encoder.digest()[:16]}
    fp.update(extra)
    return fp


def eval_concept_similarity(encoder, rows, *, distance: str = "cosine") -> EvalReport:
    """Spearman between encoder similarities and gold scores on term pairs."""
    rows = list(rows)
    if not rows:
        raise ValueError("empty benchmark")
    left = encoder.encode_batch([t1 for t1, _, _ in rows])
    right = encoder.encode_batch([t2 for _, t2, _ in rows])
    sims = pairwise_similarity(left, right, distance)
    golds = [gold for _, _, gold in rows]
    value = spearman(sims, golds)
    return EvalReport(task="concept-similarity", metric="spearman", value=value,
                      n=len(rows), details={"distance": distance},
                      fingerprint=_fingerprint(encoder, distance=distance))


# --- leaf-to-parent retrieval -------------------------------------------


@dataclass
class L2PTask:
    """Frozen retrieval task: queries with gold concept sets, candidate texts.

    Candidate entries are (entry_id, concept_id, text); entry ids stay
    unique even when one concept contributes several synonyms.
    """

    queries: list[tuple[str, str, frozenset]]  # (leaf_id, query_text, gold concept ids)
    candidates: list[tuple[str, str, str]]
    excluded: int
    params: dict = field(default_factory=dict)


def build_l2p(graph: OntologyGraph, *, all_synonyms: bool = False,
              all_ancestors: bool = False, max_depth: int = 10) -> L2PTask:
    """Leaf names query an index of non-leaf concept names.

    Gold is the set of direct parents (or all ancestors) that are
    themselves non-leaf; a leaf whose gold set would be empty is excluded
    and counted rather than scored.
    """
    if not graph.leaf_ids():
        raise ValueError("graph has no leaves; nothing to query")
    nonleaves = graph.nonleaf_ids()
    if not nonleaves:
        raise ValueError("graph has no non-leaf concepts to index")
    candidates: list[tuple[str, str, str]] = []
    for cid in sorted(nonleaves):
        concept = graph.concept(cid)
        if all_synonyms:
            for k, name in enumerate(concept.names):
                candidates.append((f"{cid}#{k}", cid, name))
        else:
            candidates.append((cid, cid, concept.canonical_name))

    queries: list[tuple[str, str, frozenset]] = []
    excluded = 0
    for leaf in sorted(graph.leaf_ids()):
        if all_ancestors:
            gold = graph.ancestors(leaf, max_depth=max_depth) & nonleaves
        else:
            gold = set(graph.parents_of(leaf)) & nonleaves
        if not gold:
            excluded += 1
            continue
        queries.append((leaf, graph.concept(leaf).canonical_name, frozenset(gold)))
    if not queries:
        raise ValueError("no leaf has a non-leaf gold target; task is empty")
    return L2PTask(queries=queries, candidates=candidates, excluded=excluded,
                   params={"all_synonyms": all_synonyms, "all_ancestors": all_ancestors})


def save_l2p(task: L2PTask, path) -> None:
    payload = {
        "queries": [[leaf, text, sorted(gold)] for leaf, text, gold in task.queries],
        "candidates": [list(entry) for entry in task.candidates],
        "excluded": task.excluded,
        "params": task.params,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_l2p(path) -> L2PTask:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return L2PTask(
        queries=[(leaf, text, frozenset(gold)) for leaf, text, gold in payload["queries"]],
        candidates=[tuple(entry) for entry in payload["candidates"]],
        excluded=payload["excluded"],
        params=payload["params"],
    )


def eval_l2p(encoder, task: L2PTask, *, k_miss: int = 1000, threads: int = 1) -> EvalReport:
    """MRR / Acc@1 / missing@k for leaf-to-parent retrieval.

    Reciprocal rank comes from the full candidate ranking (gold is always
    in the index, so MRR stays in (0, 1]); ``k_miss`` only defines the
    missing statistic. A concept's rank is its best-ranked synonym entry.
    """
    if not task.queries:
        raise ValueError("empty query set")
    entry_ids = [eid for eid, _, _ in task.candidates]
    entry_concepts = {eid: cid for eid, cid, _ in task.candidates}
    vectors = encoder.encode_batch([text for _, _, text in task.candidates])
    matrix = EmbeddingMatrix.build(entry_ids, vectors)

    query_vecs = encoder.encode_batch([text for _, text, _ in task.queries])
    rr_total = 0.0
    acc1 = 0
    missing = 0
    for (leaf, _, gold), qvec in zip(task.queries, query_vecs):
        result = topk(matrix, qvec, len(matrix), threads=threads)
        rank = 0
        hit = 0
        seen: set[str] = set()
        for eid in result.ids:
            cid = entry_concepts[eid]
            if cid in seen:
                continue
            seen.add(cid)
            rank += 1
            if cid in gold:
                hit = rank
                break
        rr_total += 1.0 / hit
        if hit == 1:
            acc1 += 1
        if hit > k_miss:
            missing += 1
    n = len(task.queries)
    details = {
        "mrr": rr_total / n,
        "acc_at_1": acc1 / n,
        f"missing_at_{k_miss}": missing / n,
        "candidates": len(task.candidates),
        "excluded_leaves": task.excluded,
    }
    details.update(task.params)
    return EvalReport(task="leaf-to-parent", metric="mrr", value=rr_total / n, n=n,
                      details=details, fingerprint=_fingerprint(encoder, threads=threads))


def eval_sts(encoder, rows, *, score_scale: float = 5.0) -> EvalReport:
    """Pearson between cosine similarity and gold scores mapped to [0, 1]."""
    rows = list(rows)
    if not rows:
        raise ValueError("empty benchmark")
    left = encoder.encode_batch([s1 for s1, _, _ in rows])
    right = encoder.encode_batch([s2 for _, s2, _ in rows])
    sims = np.sum(left * right, axis=1)
    golds = [gold / score_scale for _, _, gold in rows]
    value = pearson(sims, golds)
    return EvalReport(task="sentence-similarity", metric="pearson", value=value,
                      n=len(rows), details={"score_scale": score_scale},
                      fingerprint=_fingerprint(encoder))


def eval_nli_triplets(encoder, rows) -> EvalReport:
    """Fraction of triplets where the entailed side is strictly closer.

    A tie between the two sides is a failure for accuracy but is also
    reported on its own so a degenerate encoder is visible.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("empty benchmark")
    premise = encoder.encode_batch([p for p, _, _ in rows])
    entailed = encoder.encode_batch([e for _, e, _ in rows])
    contradicted = encoder.encode_batch([c for _, _, c in rows])
    sim_e = np.sum(premise * entailed, axis=1)
    sim_c = np.sum(premise * contradicted, axis=1)
    wins = int(np.sum(sim_e > sim_c))
    ties = int(np.sum(sim_e == sim_c))
    return EvalReport(task="triplet-ordering", metric="accuracy", value=wins / len(rows),
                      n=len(rows), details={"ties": ties, "tie_rate": ties / len(rows)},
                      fingerprint=_fingerprint(encoder))


def nel_query(mention: str, sentence: str) -> str:
    """Render a mention-in-context query for linking."""
    return f"{mention} [SEP] (context: {sentence})"


def concept_name_index(encoder, graph: OntologyGraph) -> EmbeddingMatrix:
    """Embed every concept's canonical name, keyed by concept id."""
    concept_ids = sorted(graph.concepts)
    names = [graph.concept(cid).canonical_name for cid in concept_ids]
    return EmbeddingMatrix.build(concept_ids, encoder.encode_batch(names))


def eval_nel(encoder, rows, index: EmbeddingMatrix, *, threads: int = 1) -> EvalReport:
    """Link mention+context queries against an index of concept names.

    Index ids are concept ids; see concept_name_index for the standard
    canonical-name construction.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("empty benchmark")
    for _, _, gold_id in rows:
        if gold_id not in index:
            raise UnknownConceptError(gold_id)

    queries = encoder.encode_batch([nel_query(m, s) for m, s, _ in rows])
    acc1 = 0
    rr_total = 0.0
    for (mention, sentence, gold_id), qvec in zip(rows, queries):
        result = topk(index, qvec, len(index), threads=threads)
        rank = result.ids.index(gold_id) + 1
        rr_total += 1.0 / rank
        if rank == 1:
            acc1 += 1
    n = len(rows)
    return EvalReport(task="entity-linking", metric="accuracy", value=acc1 / n, n=n,
                      details={"mrr": rr_total / n, "candidates": len(index)},
                      fingerprint=_fingerprint(encoder, threads=threads))


def group_block_means(matrix: np.ndarray, groups) -> dict[str, float]:
    """Mean off-diagonal similarity within each group label."""
    groups = list(groups)
    means: dict[str, float] = {}
    for label in sorted(set(groups)):
        members = [i for i, g in enumerate(groups) if g == label]
        cells = [matrix[i, j] for i in members for j in members if i != j]
        if cells:
            means[label] = float(np.mean(cells))
    return means


def similarity_matrix_report(encoder, terms, *, groups=None) -> tuple[np.ndarray, str]:
    """Pairwise cosine matrix over terms plus an aligned text table.

    With ``groups`` (one label per term) the rendering appends the mean
    within-group similarity per label, for block-structure inspection.
    """
    terms = list(terms)
    if len(terms) < 2:
        raise ValueError("need at least 2 terms")
    dupes = {t for t in terms if terms.count(t) > 1}
    if dupes:
        raise ValueError(f"duplicate terms: {sorted(dupes)}")
    if groups is not None and len(groups) != len(terms):
        raise ValueError(f"{len(groups)} group labels for {len(terms)} terms")
    vectors = encoder.encode_batch(terms)
    matrix = vectors @ vectors.T
    width = max(max(len(t) for t in terms), 6)
    header = " " * (width + 2) + "  ".join(f"{t[:width]:>{width}}" for t in terms)
    lines = [header]
    for term, row in zip(terms, matrix):
        cells = "  ".join(f"{v:>{width}.3f}" for v in row)
        lines.append(f"{term[:width]:>{width}}  {cells}")
    if groups is not None:
        for label, mean in group_block_means(matrix, groups).items():
            lines.append(f"within-group mean [{label}]: {mean:.4f}")
    return matrix, "\n".join(lines)


# --- benchmark file readers ----------------------------------------------


def _read_tsv(path, n_fields: int):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise BenchmarkFormatError(path, line_no,
                                           f"expected {n_fields} fields, got {len(fields)}")
            rows.append((line_no, [unescape_field(f) for f in fields]))
    if not rows:
        raise BenchmarkFormatError(path, 0, "no rows")
    return rows


def _parse_score(path, line_no: int, raw: str) -> float:
    try:
        score = float(raw)
    except ValueError:
        raise BenchmarkFormatError(path, line_no, f"bad score {raw!r}") from None
    if not np.isfinite(score):
        raise BenchmarkFormatError(path, line_no, f"non-finite score {raw!r}")
    return score


def read_term_pairs(path) -> list[tuple[str, str, float]]:
    return [(f[0], f[1], _parse_score(path, ln, f[2])) for ln, f in _read_tsv(path, 3)]


def read_sts_pairs(path) -> list[tuple[str, str, float]]:
    return read_term_pairs(path)


def read_nli_triplets(path) -> list[tuple[str, str, str]]:
    rows = []
    for line_no, f in _read_tsv(path, 3):
        premise, entailed, contradicted = f
        if not (premise and entailed and contradicted):
            raise BenchmarkFormatError(path, line_no, "empty field in triplet")
        if entailed == contradicted:
            raise BenchmarkFormatError(path, line_no,
                                       "entailed and contradicted sides are identical")
        rows.append((premise, entailed, contradicted))
    return rows


def read_nel_mentions(path) -> list[tuple[str, str, str]]:
    return [(f[0], f[1], f[2]) for _, f in _read_tsv(path, 3)]


def write_term_pairs(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t1, t2, score in rows:
            fh.write(f"{escape_field(t1)}\t{escape_field(t2)}\t{score!r}\n")


def write_triplets(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b, c in rows:
            fh.write(f"{escape_field(a)}\t{escape_field(b)}\t{escape_field(c)}\n")

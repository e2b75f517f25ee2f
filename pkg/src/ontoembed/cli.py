"""Command-line front end for the full pipeline.

Each subcommand reads inputs, writes its artifacts into a run directory
(--out), and drops two bookkeeping files next to them: the resolved
configuration (resolved_config.txt) and a manifest.json with SHA-256
digests of every input and output, so chained stages can be audited end
to end. Nothing here embeds timestamps; reruns with equal inputs and
seed produce byte-identical artifacts.

Configuration can come from a flat key=value file (--config) with
command-line flags taking precedence. Unknown config keys are rejected.
Subcommands that sample anything require an explicit --seed.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import descgen, evalsuite, ontograph, pairset, trainer, vecindex

log = logging.getLogger("ontoembed")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_DIR_ENV = "ONTOEMBED_DATA_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; route through our own code instead
    def error(self, message):
        raise UsageError(message)


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


@dataclass
class Opt:
    name: str                      # flag name, hyphenated
    type: Callable[[str], Any] = str
    default: Any = None
    required: bool = False
    flag: bool = False             # presence-only boolean
    help: str = ""

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


@dataclass
class Subcommand:
    name: str
    help: str
    opts: list[Opt]
    run: Callable[[dict, Path], tuple[dict, list[str]]]
    # run(config, out_dir) -> ({input label: path}, [output filenames])


def _resolve_input(path_str: str) -> Path:
    """Literal path first; fall back to the data-directory env var."""
    path = Path(path_str)
    if path.exists():
        return path
    base = os.environ.get(DATA_DIR_ENV)
    if base:
        candidate = Path(base) / path_str
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"input not found: {path_str}")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _read_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _resolve_config(sub: Subcommand, ns: argparse.Namespace) -> dict[str, Any]:
    resolved: dict[str, Any] = {o.dest: o.default for o in sub.opts}
    by_dest = {o.dest: o for o in sub.opts}

    config_path = getattr(ns, "config", None)
    if config_path:
        for key, raw in _read_config_file(Path(config_path)).items():
            opt = by_dest.get(key)
            if opt is None:
                raise UsageError(f"unknown config key {key!r} for subcommand {sub.name!r}")
            try:
                resolved[key] = _parse_bool(raw) if opt.flag else opt.type(raw)
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None

    for opt in sub.opts:  # explicit flags win over the file
        if hasattr(ns, opt.dest):
            resolved[opt.dest] = getattr(ns, opt.dest)

    missing = [o.name for o in sub.opts if o.required and resolved[o.dest] is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m for m in missing)}")
    return resolved


def _write_run_records(sub_name: str, cfg: dict, out_dir: Path,
                       inputs: dict[str, Path], outputs: list[str]) -> None:
    lines = [f"{key}={cfg[key]}" for key in sorted(cfg)]
    (out_dir / "resolved_config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest = {
        "command": sub_name,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())},
        "inputs": {label: {"path": str(p), "sha256": _sha256(p)}
                   for label, p in sorted(inputs.items())},
        "outputs": {name: {"sha256": _sha256(out_dir / name)} for name in sorted(outputs)},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                           encoding="utf-8")


def _load_graph(cfg: dict) -> tuple[ontograph.OntologyGraph, dict[str, Path]]:
    concepts = _resolve_input(cfg["concepts"])
    edges = _resolve_input(cfg["edges"])
    graph = ontograph.load_graph(concepts, edges, on_duplicate=cfg.get("on_duplicate", "error"))
    return graph, {"concepts": concepts, "edges": edges}


def _load_encoder(cfg: dict) -> tuple[trainer.Encoder, dict[str, Path]]:
    path = _resolve_input(cfg["checkpoint"])
    return trainer.Encoder.load(path), {"checkpoint": path}


def _emit_report(report: evalsuite.EvalReport, out_dir: Path) -> list[str]:
    (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(report.render() + "\n", encoding="utf-8")
    print(report.render())
    return ["report.json", "report.txt"]


# --- subcommand bodies ----------------------------------------------------


def _run_ingest(cfg, out_dir):
    graph, inputs = _load_graph(cfg)
    ontograph.save_graph(graph, out_dir / "concepts.jsonl", out_dir / "edges.jsonl")
    stats = graph.stats()
    (out_dir / "stats.json").write_text(json.dumps(stats, sort_keys=True) + "\n", encoding="utf-8")
    log.info("ingested %d concepts, %d edges", stats["concepts"], stats["edges"])
    return inputs, ["concepts.jsonl", "edges.jsonl", "stats.json"]


def _run_gen_desc(cfg, out_dir):
    graph, inputs = _load_graph(cfg)
    lexicon = descgen.DEFAULT_LEXICON
    if cfg["lexicon"]:
        lex_path = _resolve_input(cfg["lexicon"])
        lexicon = descgen.load_lexicon(lex_path)
        inputs["lexicon"] = lex_path
    descriptions = descgen.generate_corpus(graph, cfg["count"], cfg["seed"], lexicon,
                                           max_depth=cfg["max_depth"])
    n = descgen.write_descriptions(descriptions, out_dir / "descriptions.jsonl")
    log.info("generated %d descriptions", n)
    return inputs, ["descriptions.jsonl"]


def _run_sample_pairs(cfg, out_dir):
    graph, inputs = _load_graph(cfg)
    desc_path = _resolve_input(cfg["descriptions"])
    inputs["descriptions"] = desc_path
    descriptions = descgen.read_descriptions(desc_path)
    manifest = pairset.build_pairs(graph, descriptions, out_dir / "pairs.tsv",
                                   total=cfg["total"], seed=cfg["seed"],
                                   def_fraction=cfg["def_fraction"],
                                   def_repeat_cap=cfg["def_repeat_cap"])
    log.info("sampled %d pairs (%d definition, %d description)",
             manifest.total, manifest.definition_pairs, manifest.description_pairs)
    return inputs, ["pairs.tsv", "pairs.tsv.manifest.json"]


def _run_split(cfg, out_dir):
    pairs_path = _resolve_input(cfg["pairs"])
    n_train, n_dev = pairset.split(pairs_path, out_dir / "train.tsv", out_dir / "dev.tsv",
                                   dev_fraction=cfg["dev_fraction"], seed=cfg["seed"])
    log.info("split into %d train / %d dev", n_train, n_dev)
    return {"pairs": pairs_path}, ["train.tsv", "dev.tsv"]


def _run_train(cfg, out_dir):
    pairs_path = _resolve_input(cfg["pairs"])
    config = trainer.TrainConfig(seed=cfg["seed"], batch_size=cfg["batch_size"], lr=cfg["lr"],
                                 warmup_fraction=cfg["warmup_fraction"],
                                 weight_decay=cfg["weight_decay"],
                                 epochs=cfg["epochs"], tau=cfg["tau"])
    result = trainer.train(pairs_path, config, buckets=cfg["buckets"], dim=cfg["dim"],
                           init_scale=cfg["init_scale"])
    result.encoder.save(out_dir / "encoder.bin")
    trainer.write_loss_curve(result.curve, out_dir / "loss_curve.csv")
    if result.curve:
        log.info("trained %d steps; loss %.4f -> %.4f", len(result.curve),
                 result.curve[0][1], result.curve[-1][1])
    return {"pairs": pairs_path}, ["encoder.bin", "loss_curve.csv"]


def _run_finetune_sts(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    train_path = _resolve_input(cfg["train"])
    inputs["train"] = train_path
    train_rows = evalsuite.read_sts_pairs(train_path)
    dev_rows = None
    if cfg["dev"]:
        dev_path = _resolve_input(cfg["dev"])
        inputs["dev"] = dev_path
        dev_rows = evalsuite.read_sts_pairs(dev_path)
    config = trainer.TrainConfig(seed=cfg["seed"], batch_size=cfg["batch_size"], lr=cfg["lr"],
                                 warmup_fraction=cfg["warmup_fraction"],
                                 weight_decay=cfg["weight_decay"], epochs=cfg["epochs"])
    encoder, history = trainer.finetune_sts(encoder, train_rows, config, dev_pairs=dev_rows,
                                            score_scale=cfg["score_scale"],
                                            select_best=dev_rows is not None)
    encoder.save(out_dir / "encoder.bin")
    (out_dir / "history.json").write_text(json.dumps(history, sort_keys=True) + "\n",
                                          encoding="utf-8")
    if dev_rows:
        best = max(history, key=lambda h: h["dev_pearson"])
        log.info("kept epoch %d (dev pearson %.4f)", best["epoch"], best["dev_pearson"])
    return inputs, ["encoder.bin", "history.json"]


def _run_embed(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    concepts_path = _resolve_input(cfg["concepts"])
    inputs["concepts"] = concepts_path
    records = ontograph.read_concepts(concepts_path)
    ids, texts = [], []
    for concept in records:
        if cfg["all_synonyms"]:
            for k, name in enumerate(concept.names):
                ids.append(f"{concept.id}#{k}")
                texts.append(name)
        else:
            ids.append(concept.id)
            texts.append(concept.canonical_name)
    matrix = vecindex.EmbeddingMatrix.build(ids, encoder.encode_batch(texts))
    matrix.save(out_dir / "embeddings.bin")
    log.info("embedded %d names at dim %d", len(matrix), matrix.dim)
    return inputs, ["embeddings.bin"]


def _run_eval_sim(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    bench_path = _resolve_input(cfg["benchmark"])
    inputs["benchmark"] = bench_path
    rows = evalsuite.read_term_pairs(bench_path)
    report = evalsuite.eval_concept_similarity(encoder, rows, distance=cfg["distance"])
    return inputs, _emit_report(report, out_dir)


def _run_build_l2p(cfg, out_dir):
    graph, inputs = _load_graph(cfg)
    task = evalsuite.build_l2p(graph, all_synonyms=cfg["all_synonyms"],
                               all_ancestors=cfg["all_ancestors"], max_depth=cfg["max_depth"])
    evalsuite.save_l2p(task, out_dir / "l2p.json")
    log.info("built task: %d queries, %d candidates, %d leaves excluded",
             len(task.queries), len(task.candidates), task.excluded)
    return inputs, ["l2p.json"]


def _run_eval_l2p(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    if cfg["task"] and (cfg["concepts"] or cfg["edges"]):
        raise UsageError("--task and --concepts/--edges are mutually exclusive")
    if cfg["task"]:
        task_path = _resolve_input(cfg["task"])
        inputs["task"] = task_path
        task = evalsuite.load_l2p(task_path)
    elif cfg["concepts"] and cfg["edges"]:
        graph, graph_inputs = _load_graph(cfg)
        inputs.update(graph_inputs)
        task = evalsuite.build_l2p(graph)
    else:
        raise UsageError("eval-l2p needs either --task or both --concepts and --edges")
    report = evalsuite.eval_l2p(encoder, task, k_miss=cfg["k_miss"], threads=cfg["threads"])
    return inputs, _emit_report(report, out_dir)


def _run_eval_sts(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    bench_path = _resolve_input(cfg["benchmark"])
    inputs["benchmark"] = bench_path
    rows = evalsuite.read_sts_pairs(bench_path)
    report = evalsuite.eval_sts(encoder, rows, score_scale=cfg["score_scale"])
    return inputs, _emit_report(report, out_dir)


def _run_eval_nli(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    bench_path = _resolve_input(cfg["benchmark"])
    inputs["benchmark"] = bench_path
    rows = evalsuite.read_nli_triplets(bench_path)
    report = evalsuite.eval_nli_triplets(encoder, rows)
    return inputs, _emit_report(report, out_dir)


def _run_eval_nel(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    bench_path = _resolve_input(cfg["benchmark"])
    inputs["benchmark"] = bench_path
    rows = evalsuite.read_nel_mentions(bench_path)
    emb_path = _resolve_input(cfg["embeddings"])
    inputs["embeddings"] = emb_path
    index = vecindex.EmbeddingMatrix.load(emb_path)
    report = evalsuite.eval_nel(encoder, rows, index, threads=cfg["threads"])
    return inputs, _emit_report(report, out_dir)


def _split_csv(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _run_sim_matrix(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    if cfg["terms_file"]:
        terms_path = _resolve_input(cfg["terms_file"])
        inputs["terms"] = terms_path
        terms = [l for l in terms_path.read_text(encoding="utf-8").splitlines() if l.strip()]
    elif cfg["terms"]:
        terms = _split_csv(cfg["terms"])
    else:
        raise UsageError("sim-matrix needs --terms or --terms-file")
    groups = _split_csv(cfg["groups"]) if cfg["groups"] else None
    matrix, rendered = evalsuite.similarity_matrix_report(encoder, terms, groups=groups)
    (out_dir / "matrix.txt").write_text(rendered + "\n", encoding="utf-8")
    payload = {"terms": terms, "matrix": [[float(v) for v in row] for row in matrix]}
    (out_dir / "matrix.json").write_text(json.dumps(payload, sort_keys=True) + "\n",
                                         encoding="utf-8")
    print(rendered)
    return inputs, ["matrix.txt", "matrix.json"]


def _run_search(cfg, out_dir):
    encoder, inputs = _load_encoder(cfg)
    emb_path = _resolve_input(cfg["embeddings"])
    inputs["embeddings"] = emb_path
    matrix = vecindex.EmbeddingMatrix.load(emb_path)
    result = vecindex.topk(matrix, encoder.encode(cfg["query"]), cfg["k"],
                           threads=cfg["threads"])
    if result.clamped:
        log.warning("k=%d exceeds collection size %d; returning all", cfg["k"], len(matrix))
    hits = [{"id": i, "score": float(s)} for i, s in zip(result.ids, result.scores)]
    (out_dir / "hits.json").write_text(
        json.dumps({"query": cfg["query"], "hits": hits}, sort_keys=True) + "\n",
        encoding="utf-8")
    for hit in hits:
        print(f"{hit['score']:.4f}\t{hit['id']}")
    return inputs, ["hits.json"]


# --- option tables --------------------------------------------------------

_GRAPH_OPTS = [
    Opt("concepts", required=True, help="concept JSONL file"),
    Opt("edges", required=True, help="edge JSONL file"),
    Opt("on-duplicate", default="error", help="duplicate concept ids: error or merge"),
]
_CKPT_OPT = Opt("checkpoint", required=True, help="encoder checkpoint file")
_SEED_OPT = Opt("seed", type=int, required=True, help="RNG seed (required; no wall-clock default)")

SUBCOMMANDS = [
    Subcommand("ingest", "validate a concept/edge dump and write normalized copies",
               list(_GRAPH_OPTS), _run_ingest),
    Subcommand("gen-desc", "generate grounded one-sentence descriptions", [
        *_GRAPH_OPTS, _SEED_OPT,
        Opt("count", type=int, required=True, help="number of descriptions"),
        Opt("lexicon", help="relation verbalization TSV (default built-in)"),
        Opt("max-depth", type=int, default=10, help="ancestor traversal cap"),
    ], _run_gen_desc),
    Subcommand("sample-pairs", "assemble a contrastive training-pair file", [
        *_GRAPH_OPTS, _SEED_OPT,
        Opt("descriptions", required=True, help="description JSONL from gen-desc"),
        Opt("total", type=int, required=True, help="pair count"),
        Opt("def-fraction", type=float, default=0.15, help="definition share of pairs"),
        Opt("def-repeat-cap", type=int, default=50, help="max uses of one definition"),
    ], _run_sample_pairs),
    Subcommand("split", "carve a dev set out of a pair file", [
        _SEED_OPT,
        Opt("pairs", required=True, help="pair TSV"),
        Opt("dev-fraction", type=float, default=0.1, help="dev share"),
    ], _run_split),
    Subcommand("train", "contrastive training over a pair file", [
        _SEED_OPT,
        Opt("pairs", required=True, help="pair TSV"),
        Opt("batch-size", type=int, default=64), Opt("lr", type=float, default=2e-5),
        Opt("warmup-fraction", type=float, default=0.05),
        Opt("weight-decay", type=float, default=0.01),
        Opt("epochs", type=int, default=1), Opt("tau", type=float, default=0.05),
        Opt("buckets", type=int, default=2**15), Opt("dim", type=int, default=64),
        Opt("init-scale", type=float, default=0.002),
    ], _run_train),
    Subcommand("finetune-sts", "cosine-regression finetuning on scored sentence pairs", [
        _CKPT_OPT, _SEED_OPT,
        Opt("train", required=True, help="training TSV s1<TAB>s2<TAB>score"),
        Opt("dev", help="dev TSV for best-epoch selection"),
        Opt("batch-size", type=int, default=64), Opt("lr", type=float, default=6e-6),
        Opt("warmup-fraction", type=float, default=0.05),
        Opt("weight-decay", type=float, default=0.01),
        Opt("epochs", type=int, default=10),
        Opt("score-scale", type=float, default=5.0),
    ], _run_finetune_sts),
    Subcommand("embed", "embed concept names into a vector file", [
        _CKPT_OPT,
        Opt("concepts", required=True, help="concept JSONL file"),
        Opt("all-synonyms", flag=True, default=False, help="one entry per synonym"),
    ], _run_embed),
    Subcommand("eval-sim", "rank-correlate similarities against gold term pairs", [
        _CKPT_OPT,
        Opt("benchmark", required=True, help="term1<TAB>term2<TAB>gold TSV"),
        Opt("distance", default="cosine", help="cosine, euclidean, or manhattan"),
    ], _run_eval_sim),
    Subcommand("build-l2p", "construct the leaf-to-parent retrieval task", [
        *_GRAPH_OPTS,
        Opt("all-synonyms", flag=True, default=False),
        Opt("all-ancestors", flag=True, default=False),
        Opt("max-depth", type=int, default=10),
    ], _run_build_l2p),
    Subcommand("eval-l2p", "score leaf-to-parent retrieval", [
        _CKPT_OPT,
        Opt("task", help="task JSON from build-l2p"),
        Opt("concepts", help="concept JSONL (with --edges, builds the default task)"),
        Opt("edges", help="edge JSONL"),
        Opt("on-duplicate", default="error"),
        Opt("k-miss", type=int, default=1000, help="cutoff for the missing statistic"),
        Opt("threads", type=int, default=1),
    ], _run_eval_l2p),
    Subcommand("eval-sts", "Pearson of cosine vs gold sentence similarity", [
        _CKPT_OPT,
        Opt("benchmark", required=True, help="s1<TAB>s2<TAB>gold TSV"),
        Opt("score-scale", type=float, default=5.0),
    ], _run_eval_sts),
    Subcommand("eval-nli", "entailed-vs-contradicted triplet ordering accuracy", [
        _CKPT_OPT,
        Opt("benchmark", required=True, help="premise<TAB>entailed<TAB>contradicted TSV"),
    ], _run_eval_nli),
    Subcommand("eval-nel", "link mentions in context to concept ids", [
        _CKPT_OPT,
        Opt("benchmark", required=True, help="mention<TAB>sentence<TAB>gold_id TSV"),
        Opt("embeddings", required=True, help="embedding file keyed by concept id"),
        Opt("threads", type=int, default=1),
    ], _run_eval_nel),
    Subcommand("sim-matrix", "pairwise similarity table for a few terms", [
        _CKPT_OPT,
        Opt("terms", help="comma-separated terms"),
        Opt("terms-file", help="file with one term per line"),
        Opt("groups", help="comma-separated group labels, one per term"),
    ], _run_sim_matrix),
    Subcommand("search", "nearest neighbors of a free-text query", [
        _CKPT_OPT,
        Opt("embeddings", required=True, help="embedding file"),
        Opt("query", required=True, help="query text"),
        Opt("k", type=int, default=10),
        Opt("threads", type=int, default=1),
    ], _run_search),
]


def _build_parser() -> _Parser:
    parser = _Parser(prog="ontoembed",
                     description="ontology-grounded concept embeddings: data, training, evaluation")
    subparsers = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    for sub in SUBCOMMANDS:
        sp = subparsers.add_parser(sub.name, help=sub.help, description=sub.help)
        sp.add_argument("--config", default=None, help="flat key=value config file")
        sp.add_argument("--out", required=True, help="run directory for artifacts")
        for opt in sub.opts:
            if opt.flag:
                sp.add_argument(f"--{opt.name}", dest=opt.dest, action="store_true",
                                default=argparse.SUPPRESS, help=opt.help)
            else:
                sp.add_argument(f"--{opt.name}", dest=opt.dest, type=opt.type,
                                default=argparse.SUPPRESS, help=opt.help)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
        if not ns.subcommand:
            raise UsageError("a subcommand is required (see --help)")
        sub = next(s for s in SUBCOMMANDS if s.name == ns.subcommand)
        cfg = _resolve_config(sub, ns)
        out_dir = Path(ns.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        inputs, outputs = sub.run(cfg, out_dir)
        _write_run_records(sub.name, cfg, out_dir, inputs, outputs)
        return EXIT_OK
    except UsageError as exc:
        log.error("usage: %s", exc)
        return EXIT_USAGE
    except (trainer.NonFiniteLossError, trainer.NonFiniteGradientError,
            FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

"""Nearest-neighbor search and the leaf-to-parent retrieval benchmark.

Embeds every concept name into an exact-search index, runs a few free-text
queries, then scores hierarchy placement: can a leaf's name retrieve its
parent from the leaf-pruned concept index?
"""

from ontoembed import evalsuite, trainer, vecindex

from _shared import OUT, load_demo_graph


def main():
    graph = load_demo_graph()
    ckpt = OUT / "encoder.bin"
    if not ckpt.exists():
        raise SystemExit("run 03_train_encoder.py first")
    trained = trainer.Encoder.load(ckpt)
    untrained = trainer.Encoder.create(buckets=trained.buckets, dim=trained.dim, seed=5)

    print("== nearest neighbors ==")
    ids = sorted(graph.concepts)
    names = [graph.concept(cid).canonical_name for cid in ids]
    index = vecindex.EmbeddingMatrix.build(ids, trained.encode_batch(names))
    for query in ("fiddle", "brass instrument with valves", "kettledrums"):
        result = vecindex.topk(index, trained.encode(query), 3)
        hits = ", ".join(f"{graph.concept(cid).canonical_name} ({score:.2f})"
                         for cid, score in zip(result.ids, result.scores))
        print(f"  {query!r:<34} -> {hits}")
    print()

    print("== leaf-to-parent retrieval ==")
    task = evalsuite.build_l2p(graph)
    print(f"queries: {len(task.queries)} leaves, candidates: {len(task.candidates)} "
          f"non-leaf concepts, excluded: {task.excluded}")
    for encoder, label in ((untrained, "untrained"), (trained, "trained")):
        report = evalsuite.eval_l2p(encoder, task)
        print(f"  {label:<10} MRR {report.value:.3f}  "
              f"acc@1 {report.details['acc_at_1']:.3f}")
    print()
    print("training on name/description pairs moves leaf names toward their")
    print("parents even though no leaf-parent pair was ever labeled directly")


if __name__ == "__main__":
    main()

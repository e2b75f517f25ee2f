"""The remaining evaluation heads: STS, triplet ordering, linking, matrices.

Each evaluation returns the same report shape (headline metric, counts,
supporting details, model fingerprint), so downstream tooling can treat
them uniformly.
"""

from ontoembed import evalsuite, trainer

from _shared import OUT, load_demo_graph


def main():
    graph = load_demo_graph()
    ckpt = OUT / "encoder.bin"
    if not ckpt.exists():
        raise SystemExit("run 03_train_encoder.py first")
    encoder = trainer.Encoder.load(ckpt)

    print("== scored sentence pairs (Pearson) ==")
    sts_rows = [
        ("a violin played with a bow", "a fiddle sounded with a bow", 4.8),
        ("a violin played with a bow", "a large bowed cello", 3.2),
        ("a trumpet with three valves", "a brass instrument with valves", 4.0),
        ("a trumpet with three valves", "a drum with snare wires", 0.6),
        ("a plucked guitar", "a plucked lute", 3.5),
        ("a plucked guitar", "a double reed oboe", 0.8),
    ]
    report = evalsuite.eval_sts(encoder, sts_rows, score_scale=5.0)
    print(report.render())
    print()

    print("== entailment triplet ordering ==")
    triplets = [
        ("the violin is a bowed string instrument",
         "the fiddle is a bowed string instrument",
         "the violin is a brass instrument"),
        ("a clarinet uses a single reed",
         "a clarinet is a reed instrument",
         "a clarinet is a percussion instrument"),
        ("timpani are tuned drums",
         "kettledrums are tuned percussion",
         "timpani are plucked string instruments"),
    ]
    report = evalsuite.eval_nli_triplets(encoder, triplets)
    print(report.render())
    print()

    print("== entity linking with context ==")
    index = evalsuite.concept_name_index(encoder, graph)
    mentions = [
        ("fiddle", "the fiddle carried the melody all night", "I10"),
        ("side drum", "the side drum kept a steady march", "I18"),
        ("violoncello", "she tuned the violoncello before the concert", "I11"),
    ]
    print(f"query template: {evalsuite.nel_query('fiddle', '...')!r}")
    report = evalsuite.eval_nel(encoder, mentions, index)
    print(report.render())
    print()

    print("== similarity matrix ==")
    terms = ["violin", "cello", "guitar", "trumpet", "trombone"]
    groups = ["strings", "strings", "strings", "brass", "brass"]
    _, rendered = evalsuite.similarity_matrix_report(encoder, terms, groups=groups)
    print(rendered)


if __name__ == "__main__":
    main()

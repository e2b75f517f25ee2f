"""Train the hash-bucket encoder on the demo pair file.

The encoder is a deliberately small stand-in for a pretrained transformer:
token hash buckets, mean pooling, one linear projection, L2 normalization.
It exists so the contrastive objective, optimizer, and schedule can be
exercised and tested end to end on a laptop.
"""

from ontoembed import pairset, trainer

from _shared import OUT


def main():
    pairs_path = OUT / "train.tsv"
    if not pairs_path.exists():
        raise SystemExit("run 02_training_pairs.py first")

    config = trainer.TrainConfig(seed=5, batch_size=32, lr=1e-3,
                                 warmup_fraction=0.1, weight_decay=0.01, epochs=4)
    result = trainer.train(pairs_path, config, buckets=4096, dim=32)

    print("== loss curve ==")
    curve = result.curve
    for step, loss, lr in curve[:3]:
        print(f"  step {step:>3}  loss {loss:.4f}  lr {lr:.2e}")
    print("  ...")
    for step, loss, lr in curve[-3:]:
        print(f"  step {step:>3}  loss {loss:.4f}  lr {lr:.2e}")
    print()

    first = sum(l for _, l, _ in curve[:5]) / 5
    last = sum(l for _, l, _ in curve[-5:]) / 5
    print(f"mean loss, first 5 steps: {first:.4f}")
    print(f"mean loss, last 5 steps:  {last:.4f}")
    print()

    ckpt = OUT / "encoder.bin"
    result.encoder.save(ckpt)
    reloaded = trainer.Encoder.load(ckpt)
    assert reloaded.digest() == result.encoder.digest()
    print(f"checkpoint saved to {ckpt}")
    print(f"digest {result.encoder.digest()[:16]}... (reload verified)")
    print()

    dev_pairs = pairset.read_pairs(OUT / "dev.tsv")
    acc = trainer.in_batch_retrieval_accuracy(result.encoder, dev_pairs, batch_size=16)
    print(f"held-out in-batch retrieval acc@1: {acc:.3f}")


if __name__ == "__main__":
    main()

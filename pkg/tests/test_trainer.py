"""Encoder, loss gradients, optimizer, schedule, training loop, checkpoints."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontoembed import descgen, pairset, trainer
from ontoembed.trainer import (
    AdamState,
    EmptyTextError,
    Encoder,
    NonFiniteGradientError,
    NonFiniteLossError,
    TrainConfig,
    adamw_step,
    finetune_sts,
    in_batch_retrieval_accuracy,
    infonce_loss,
    lr_at,
    tokenize,
    train,
)

import oracles


# --- loss and gradients ----------------------------------------------------


def test_infonce_closed_form_two_pairs():
    # identical orthonormal sides, unit temperature: logits are the identity,
    # every row/column softmax gives the target probability e/(e+1)
    a = np.eye(2, dtype=np.float64)
    loss, _, _ = infonce_loss(a, a.copy(), tau=1.0)
    assert abs(loss - math.log(1.0 + math.exp(-1.0))) < 1e-12


def test_infonce_matches_definition_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.normal(size=(6, 8))
        b = rng.normal(size=(6, 8))
        loss, _, _ = infonce_loss(a, b, tau=0.07)
        assert abs(loss - oracles.infonce_oracle(a, b, 0.07)) < 1e-10


def test_infonce_symmetry():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 7))
    b = rng.normal(size=(5, 7))
    la, _, _ = infonce_loss(a, b, tau=0.1)
    lb, _, _ = infonce_loss(b, a, tau=0.1)
    assert abs(la - lb) < 1e-12


def test_infonce_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    tau = 0.05
    for _ in range(5):
        a = rng.normal(size=(4, 6))
        b = rng.normal(size=(4, 6))
        _, grad_a, grad_p = infonce_loss(a, b, tau)
        fd_a = oracles.central_difference_grad(lambda x: infonce_loss(x, b, tau)[0], a.copy())
        fd_p = oracles.central_difference_grad(lambda x: infonce_loss(a, x, tau)[0], b.copy())
        assert np.max(np.abs(grad_a - fd_a)) / max(np.max(np.abs(fd_a)), 1e-12) < 1e-5
        assert np.max(np.abs(grad_p - fd_p)) / max(np.max(np.abs(fd_p)), 1e-12) < 1e-5


def test_infonce_validation():
    a = np.eye(2)
    with pytest.raises(ValueError):
        infonce_loss(a, a, tau=0.0)
    with pytest.raises(ValueError):
        infonce_loss(a, a, tau=-1.0)
    with pytest.raises(ValueError):
        infonce_loss(a[:1], a[:1], tau=1.0)  # one pair has no negatives
    with pytest.raises(ValueError):
        infonce_loss(a, np.eye(3), tau=1.0)


def test_infonce_loss_nonnegative_and_improves_with_alignment():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 16))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    aligned, _, _ = infonce_loss(a, a, tau=0.05)
    shuffled, _, _ = infonce_loss(a, np.roll(a, 1, axis=0), tau=0.05)
    assert 0.0 <= aligned < shuffled


# --- encoder forward pass ----------------------------------------------------


def test_tokenize():
    assert tokenize("Myocardial Infarction (MI)!") == ["myocardial", "infarction", "mi"]
    assert tokenize("alpha_beta") == ["alpha", "beta"]
    assert tokenize("  ") == []


def test_encode_unit_norm_and_determinism():
    enc = Encoder.create(buckets=256, dim=32, seed=0)
    v1 = enc.encode("acute headache")
    v2 = enc.encode("acute headache")
    assert v1.dtype == np.float32
    assert abs(float(np.linalg.norm(v1)) - 1.0) < 1e-6
    assert np.array_equal(v1, v2)


def test_encode_batch_matches_single():
    enc = Encoder.create(buckets=512, dim=16, seed=1)
    texts = ["one term", "another longer phrase here", "third"]
    batch = enc.encode_batch(texts)
    for row, text in zip(batch, texts):
        assert np.array_equal(row, enc.encode(text))


def test_encode_empty_text_error():
    enc = Encoder.create(buckets=64, dim=8, seed=0)
    for bad in ("", "   ", "!!!", "___"):
        with pytest.raises(EmptyTextError):
            enc.encode(bad)


def test_token_order_irrelevant_bag_semantics():
    enc = Encoder.create(buckets=512, dim=16, seed=2)
    assert np.allclose(enc.encode("alpha beta"), enc.encode("beta  ALPHA"), atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet=st.characters(categories=("Ll", "Lu", "Nd")), min_size=1, max_size=40))
def test_encode_any_tokenizable_text_is_unit(text):
    enc = Encoder.create(buckets=128, dim=8, seed=3)
    if not tokenize(text):
        return
    assert abs(float(np.linalg.norm(enc.encode(text))) - 1.0) < 1e-6


# --- optimizer and schedule -------------------------------------------------


def test_adamw_matches_scalar_oracle():
    rng = np.random.default_rng(4)
    param = rng.normal(size=(3, 4))
    grads = [rng.normal(size=(3, 4)) for _ in range(10)]
    expected = oracles.adamw_oracle(param, grads, lr=0.01, weight_decay=0.02)

    params = {"w": param.astype(np.float64).copy()}
    state = AdamState.for_params(params)
    for g in grads:
        adamw_step(params, {"w": g.astype(np.float64)}, state, lr=0.01, weight_decay=0.02)
    assert np.max(np.abs(params["w"] - expected)) < 1e-12


def test_adamw_decoupled_decay_zero_grad():
    params = {"w": np.full((2, 2), 10.0)}
    state = AdamState.for_params(params)
    adamw_step(params, {"w": np.zeros((2, 2))}, state, lr=1.0, weight_decay=0.01)
    assert np.allclose(params["w"], 9.9)


def test_adamw_rejects_nonfinite_grads_without_touching_params():
    params = {"w": np.ones(4)}
    state = AdamState.for_params(params)
    bad = np.array([0.0, np.nan, 0.0, np.inf])
    with pytest.raises(NonFiniteGradientError) as err:
        adamw_step(params, {"w": bad}, state, lr=0.1, weight_decay=0.0)
    assert "w" in str(err.value)
    assert np.array_equal(params["w"], np.ones(4))
    assert state.step == 0


def test_adamw_shape_mismatch():
    params = {"w": np.ones((2, 2))}
    state = AdamState.for_params(params)
    with pytest.raises(ValueError):
        adamw_step(params, {"w": np.ones(3)}, state, lr=0.1, weight_decay=0.0)


def test_lr_schedule_shape():
    total, base, frac = 200, 1e-3, 0.05
    warmup = math.ceil(frac * total)  # 10
    assert lr_at(0, total, base, frac) == 0.0
    assert lr_at(warmup, total, base, frac) == base
    assert lr_at(total, total, base, frac) == 0.0
    for step in range(total + 1):
        got = lr_at(step, total, base, frac)
        assert abs(got - oracles.lr_oracle(step, total, base, frac)) < 1e-18
        assert 0.0 <= got <= base
    ups = [lr_at(s, total, base, frac) for s in range(warmup + 1)]
    downs = [lr_at(s, total, base, frac) for s in range(warmup, total + 1)]
    assert ups == sorted(ups)
    assert downs == sorted(downs, reverse=True)


def test_lr_schedule_no_warmup_and_bounds():
    assert lr_at(0, 10, 1.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        lr_at(-1, 10, 1.0, 0.1)
    with pytest.raises(ValueError):
        lr_at(11, 10, 1.0, 0.1)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(seed=0, batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(seed=0, warmup_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(seed=0, tau=0.0)
    with pytest.raises(ValueError):
        TrainConfig(seed=0, epochs=0)


# --- training loop ------------------------------------------------------------


def _toy_pairs(graph, n=240, seed=5):
    corpus = list(descgen.generate_corpus(graph, n * 2, seed=seed))
    by_name = []
    for i, desc in enumerate(corpus[:n]):
        names = graph.concepts[desc.concept_id].names
        by_name.append(pairset.TrainingPair(names[i % len(names)], desc.text,
                                            desc.concept_id, "description"))
    return by_name


def test_train_reduces_loss_and_is_deterministic(toy_graph):
    pairs = _toy_pairs(toy_graph)
    config = TrainConfig(seed=7, batch_size=16, lr=1e-3, epochs=3)
    run_a = train(pairs, config, buckets=512, dim=16)
    run_b = train(pairs, config, buckets=512, dim=16)
    assert run_a.encoder.digest() == run_b.encoder.digest()
    assert run_a.curve == run_b.curve
    first = np.mean([loss for _, loss, _ in run_a.curve[:5]])
    last = np.mean([loss for _, loss, _ in run_a.curve[-5:]])
    assert last < first


def test_train_curve_schedule_and_finiteness(toy_graph):
    pairs = _toy_pairs(toy_graph, n=96)
    config = TrainConfig(seed=1, batch_size=32, lr=1e-3, epochs=2, warmup_fraction=0.25)
    result = train(pairs, config, buckets=256, dim=8)
    steps = [s for s, _, _ in result.curve]
    assert steps == list(range(6))
    for step, loss, lr in result.curve:
        assert math.isfinite(loss) and loss >= 0.0
        assert lr == lr_at(step, 6, 1e-3, 0.25)
    assert np.all(np.isfinite(result.encoder.embedding))
    assert np.all(np.isfinite(result.encoder.projection))


def test_train_nonfinite_abort_reports_step_and_batch(toy_graph):
    pairs = _toy_pairs(toy_graph, n=64)
    poisoned = Encoder.create(buckets=256, dim=8, seed=0)
    poisoned.embedding[:, 0] = np.nan
    with pytest.raises((NonFiniteLossError, FloatingPointError)) as err:
        train(pairs, TrainConfig(seed=0, batch_size=16), encoder=poisoned)
    if isinstance(err.value, NonFiniteLossError):
        assert err.value.step == 0
        assert err.value.batch_fingerprint


def test_train_batch_size_exceeds_pairs(toy_graph):
    pairs = _toy_pairs(toy_graph, n=8)
    with pytest.raises(ValueError):
        train(pairs, TrainConfig(seed=0, batch_size=64))


def test_write_loss_curve(tmp_path):
    trainer.write_loss_curve([(0, 1.5, 0.0), (1, 1.25, 2e-5)], tmp_path / "curve.csv")
    lines = (tmp_path / "curve.csv").read_text().splitlines()
    assert lines[0] == "step,loss,lr"
    assert lines[1].startswith("0,1.5,")
    assert len(lines) == 3


# --- checkpoints ---------------------------------------------------------------


def test_checkpoint_round_trip_bitwise(tmp_path):
    enc = Encoder.create(buckets=128, dim=16, tau=0.07, seed=9)
    path = tmp_path / "enc.bin"
    enc.save(path)
    loaded = Encoder.load(path)
    assert loaded.buckets == 128 and loaded.dim == 16 and loaded.tau == 0.07
    assert np.array_equal(loaded.embedding, enc.embedding)
    assert np.array_equal(loaded.projection, enc.projection)
    assert loaded.digest() == enc.digest()


def test_checkpoint_bad_magic_and_version(tmp_path):
    path = tmp_path / "enc.bin"
    path.write_bytes(b"XXXX" + b"\x00" * 64)
    with pytest.raises(ValueError):
        Encoder.load(path)
    enc = Encoder.create(buckets=16, dim=4, seed=0)
    blob = bytearray(enc.to_bytes())
    blob[4] = 99  # version byte
    path.write_bytes(bytes(blob))
    with pytest.raises(ValueError):
        Encoder.load(path)


# --- finetuning -----------------------------------------------------------------


def _sts_rows(n, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        a = f"sentence number {i} alpha"
        b = f"sentence number {int(rng.integers(0, n))} beta"
        rows.append((a, b, float(rng.uniform(0, 5))))
    return rows


def test_finetune_sts_runs_and_tracks_dev():
    enc = Encoder.create(buckets=512, dim=16, seed=4)
    rows = _sts_rows(64, seed=0)
    config = TrainConfig(seed=2, batch_size=16, lr=1e-3, epochs=4)
    enc, history = finetune_sts(enc, rows, config, dev_pairs=rows[:32])
    assert len(history) == 4
    assert all("dev_pearson" in h for h in history)
    best = max(history, key=lambda h: h["dev_pearson"])
    # the retained weights reproduce the best epoch's dev score exactly
    from ontoembed.evalsuite import pearson
    left = enc.encode_batch([a for a, _, _ in rows[:32]])
    right = enc.encode_batch([b for _, b, _ in rows[:32]])
    sims = np.sum(left * right, axis=1)
    golds = [g for _, _, g in rows[:32]]
    assert abs(pearson(sims.tolist(), golds) - best["dev_pearson"]) < 1e-12


def test_finetune_sts_validation():
    enc = Encoder.create(buckets=64, dim=8, seed=0)
    config = TrainConfig(seed=0, batch_size=4, epochs=1)
    with pytest.raises(ValueError):
        finetune_sts(enc, [], config, dev_pairs=None, select_best=False)
    with pytest.raises(ValueError):
        finetune_sts(enc, _sts_rows(8, 0), config, dev_pairs=None, select_best=True)
    bad = [("a a", "b b", 7.0)]
    with pytest.raises(ValueError):
        finetune_sts(enc, bad, config, dev_pairs=None, select_best=False)


def test_finetune_improves_fit_on_train():
    # gold says: matched index pairs similar (5), mismatched dissimilar (0)
    rows = []
    for i in range(32):
        rows.append((f"left phrase {i}", f"right phrase {i}", 5.0))
        rows.append((f"left phrase {i}", f"right phrase {(i + 1) % 32}", 0.0))
    enc = Encoder.create(buckets=1024, dim=16, seed=5)

    def mse(encoder):
        left = encoder.encode_batch([a for a, _, _ in rows])
        right = encoder.encode_batch([b for _, b, _ in rows])
        cos = np.sum(left * right, axis=1)
        target = np.array([g / 5.0 for _, _, g in rows])
        return float(np.mean((cos - target) ** 2))

    before = mse(enc)
    config = TrainConfig(seed=1, batch_size=16, lr=5e-3, epochs=8)
    enc, _ = finetune_sts(enc, rows, config, dev_pairs=None, select_best=False)
    assert mse(enc) < before


# --- retrieval diagnostic ---------------------------------------------------------


def test_in_batch_accuracy_oracle_encoder(toy_graph):
    pairs = [pairset.TrainingPair(f"term {i}", f"term {i}", f"C{i}", "description")
             for i in range(32)]
    enc = Encoder.create(buckets=2048, dim=32, seed=6)
    assert in_batch_retrieval_accuracy(enc, pairs, batch_size=16) == 1.0


def test_in_batch_accuracy_requires_scorable_batch():
    enc = Encoder.create(buckets=64, dim=8, seed=0)
    with pytest.raises(ValueError):
        in_batch_retrieval_accuracy(enc, [pairset.TrainingPair("a", "b", "c", "d")])

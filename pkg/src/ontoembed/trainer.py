"""Desk-scale bi-encoder and its contrastive training loop.

The encoder is a hashed embedding bag with a linear projection: lowercase
and tokenize, hash each token into one of ``buckets`` rows of an embedding
table, mean-pool, project, L2-normalize. It stands in for a large
pretrained transformer so the methodology around it (pair construction,
in-batch-negative contrastive loss, schedule, evaluation) can run on a
laptop. Outputs are always unit vectors.

Training minimizes the symmetric in-batch InfoNCE objective: similarity
logits between all anchors and all positives of a batch, scaled by a
temperature, with each pair's own positive as the target class both
row-wise and column-wise. Optimization is AdamW with decoupled weight
decay and a warmup-linear learning-rate schedule. All gradients are
computed analytically; everything runs in float32 and is bitwise
reproducible for a fixed seed.

Checkpoint format (little-endian): 4-byte magic ``OEC1``, u32 version,
u64 bucket count, u64 dim, f64 temperature, then the embedding table and
projection matrix as row-major float32.
"""

from __future__ import annotations

import hashlib
import math
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pairset import TrainingPair, read_pairs

__all__ = [
    "Encoder",
    "TrainConfig",
    "AdamState",
    "TrainResult",
    "EmptyTextError",
    "NonFiniteLossError",
    "NonFiniteGradientError",
    "infonce_loss",
    "adamw_step",
    "lr_at",
    "train",
    "finetune_sts",
    "in_batch_retrieval_accuracy",
    "write_loss_curve",
]

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

_MAGIC = b"OEC1"
_VERSION = 1


class EmptyTextError(ValueError):
    def __init__(self, text: str):
        super().__init__(f"text has no tokens after normalization: {text!r}")


class NonFiniteLossError(RuntimeError):
    def __init__(self, step: int, batch_fingerprint: str):
        super().__init__(f"non-finite loss at step {step} (batch {batch_fingerprint})")
        self.step = step
        self.batch_fingerprint = batch_fingerprint


class NonFiniteGradientError(RuntimeError):
    def __init__(self, name: str, bad: int):
        super().__init__(f"gradient for {name!r} has {bad} non-finite entries; step aborted")
        self.name = name


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation (underscores separate)."""
    return _TOKEN_RE.findall(text.lower())


def _bucket(token: str, buckets: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % buckets


class Encoder:
    """Hash-bucket embedding bag + projection, producing unit vectors."""

    def __init__(self, embedding: np.ndarray, projection: np.ndarray, tau: float = 0.05):
        if embedding.ndim != 2 or projection.shape != (embedding.shape[1], embedding.shape[1]):
            raise ValueError("embedding must be (buckets, dim) and projection (dim, dim)")
        self.embedding = np.ascontiguousarray(embedding, dtype=np.float32)
        self.projection = np.ascontiguousarray(projection, dtype=np.float32)
        self.tau = float(tau)
        self._bucket_cache: dict[str, int] = {}

    @property
    def buckets(self) -> int:
        return self.embedding.shape[0]

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    @classmethod
    def create(cls, buckets: int = 2**15, dim: int = 64, tau: float = 0.05,
               seed: int = 0, init_scale: float = 0.002) -> "Encoder":
        """Fresh encoder: small random embeddings, identity projection.

        The small init scale keeps early representations weak so that a
        short training run produces a visible before/after contrast.
        """
        rng = np.random.default_rng(seed)
        embedding = rng.normal(0.0, init_scale, size=(buckets, dim)).astype(np.float32)
        projection = np.eye(dim, dtype=np.float32)
        return cls(embedding, projection, tau=tau)

    def bucket_ids(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyTextError(text)
        cache = self._bucket_cache
        n = self.buckets
        ids = np.empty(len(tokens), dtype=np.int64)
        for i, tok in enumerate(tokens):
            b = cache.get(tok)
            if b is None:
                b = _bucket(tok, n)
                cache[tok] = b
            ids[i] = b
        return ids

    def encode(self, text: str) -> np.ndarray:
        """Embed one text as a float32 unit vector of length ``dim``."""
        return self.encode_batch([text])[0]

    def encode_batch(self, texts) -> np.ndarray:
        _, _, _, units = self._forward([self.bucket_ids(t) for t in texts])
        return units

    def _forward(self, bucket_lists: list[np.ndarray]):
        """Pooled/projected/norm/unit activations for a batch of bucket lists."""
        n = len(bucket_lists)
        pooled = np.empty((n, self.dim), dtype=np.float32)
        for i, ids in enumerate(bucket_lists):
            pooled[i] = self.embedding[ids].mean(axis=0)
        projected = pooled @ self.projection
        norms = np.linalg.norm(projected, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise FloatingPointError("zero-norm projection; cannot normalize")
        units = projected / norms
        return pooled, projected, norms, units

    def _backward(self, bucket_lists, pooled, norms, units, grad_units,
                  grad_embedding: np.ndarray, grad_projection: np.ndarray) -> None:
        """Accumulate parameter gradients from gradients w.r.t. unit outputs."""
        # Through L2 normalization: remove the radial component, then rescale.
        radial = np.sum(units * grad_units, axis=1, keepdims=True)
        grad_projected = (grad_units - units * radial) / norms
        grad_projection += pooled.T @ grad_projected
        grad_pooled = grad_projected @ self.projection.T
        lengths = np.array([len(ids) for ids in bucket_lists])
        rows = np.repeat(np.arange(len(bucket_lists)), lengths)
        flat = np.concatenate(bucket_lists)
        np.add.at(grad_embedding, flat, grad_pooled[rows] / lengths[rows, None])

    def parameters(self) -> dict[str, np.ndarray]:
        return {"embedding": self.embedding, "projection": self.projection}

    def copy_parameters(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.parameters().items()}

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        self.embedding[...] = params["embedding"]
        self.projection[...] = params["projection"]

    def to_bytes(self) -> bytes:
        header = _MAGIC + struct.pack("<IQQd", _VERSION, self.buckets, self.dim, self.tau)
        return header + self.embedding.tobytes(order="C") + self.projection.tobytes(order="C")

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Encoder":
        blob = Path(path).read_bytes()
        if blob[:4] != _MAGIC:
            raise ValueError(f"{path}: not an encoder checkpoint (bad magic)")
        version, buckets, dim, tau = struct.unpack_from("<IQQd", blob, 4)
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        offset = 4 + struct.calcsize("<IQQd")
        emb_bytes = buckets * dim * 4
        embedding = np.frombuffer(blob, dtype="<f4", count=buckets * dim, offset=offset).reshape(buckets, dim)
        projection = np.frombuffer(blob, dtype="<f4", count=dim * dim, offset=offset + emb_bytes).reshape(dim, dim)
        return cls(embedding.copy(), projection.copy(), tau=tau)


@dataclass
class TrainConfig:
    seed: int
    batch_size: int = 64
    lr: float = 2e-5
    warmup_fraction: float = 0.05
    weight_decay: float = 0.01
    epochs: int = 1
    tau: float = 0.05

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (in-batch negatives need company)")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ValueError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def infonce_loss(anchors: np.ndarray, positives: np.ndarray, tau: float):
    """Symmetric in-batch-negative cross-entropy over similarity logits.

    ``anchors`` and ``positives`` are N x D with matched rows as the
    positive pairs; every other row of the opposite matrix is a negative.
    Returns ``(loss, grad_anchors, grad_positives)`` with gradients taken
    w.r.t. the raw input matrices. Arithmetic follows the input dtype, so
    float64 inputs give float64 gradients for checking.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    anchors = np.asarray(anchors)
    positives = np.asarray(positives)
    if anchors.shape != positives.shape or anchors.ndim != 2:
        raise ValueError(f"shape mismatch: {anchors.shape} vs {positives.shape}")
    n = anchors.shape[0]
    if n < 2:
        raise ValueError("need at least 2 pairs for in-batch negatives")

    logits = anchors @ positives.T / tau

    def _ce_diag(mat):
        # Row-wise cross entropy with the diagonal as target, numerically stable.
        shifted = mat - mat.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1))
        return (logsumexp - np.diagonal(shifted)).mean()

    loss = 0.5 * (_ce_diag(logits) + _ce_diag(logits.T))

    def _softmax_rows(mat):
        shifted = np.exp(mat - mat.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)

    eye = np.eye(n, dtype=logits.dtype)
    grad_logits = 0.5 / n * ((_softmax_rows(logits) - eye) + (_softmax_rows(logits.T) - eye).T)
    grad_anchors = grad_logits @ positives / tau
    grad_positives = grad_logits.T @ anchors / tau
    return float(loss), grad_anchors, grad_positives


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamState, *, lr: float, weight_decay: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One decoupled-weight-decay Adam update, in place.

    Weight decay is applied directly to the parameters after the moment
    update, not folded into the gradient. Aborts (without touching any
    parameter) if a gradient is non-finite.
    """
    for name, grad in grads.items():
        if grad.shape != params[name].shape:
            raise ValueError(f"gradient shape {grad.shape} != param shape {params[name].shape} for {name!r}")
        bad = int(np.size(grad) - np.isfinite(grad).sum())
        if bad:
            raise NonFiniteGradientError(name, bad)

    state.step += 1
    t = state.step
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    for name, grad in grads.items():
        p, m, v = params[name], state.m[name], state.v[name]
        m += (1.0 - beta1) * (grad - m)
        v += (1.0 - beta2) * (grad * grad - v)
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
        p -= lr * weight_decay * p


def lr_at(step: int, total_steps: int, base_lr: float, warmup_fraction: float) -> float:
    """Warmup-linear schedule: 0 -> base_lr over the warmup window, then -> 0."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup_steps = math.ceil(warmup_fraction * total_steps)
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    return base_lr * (total_steps - step) / max(1, total_steps - warmup_steps)


def _batch_fingerprint(texts) -> str:
    digest = hashlib.sha256()
    for t in texts:
        digest.update(t.encode("utf-8"))
        digest.update(b"\x00")
    return digest.hexdigest()[:16]


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    batches = []
    for start in range(0, n, batch_size):
        batch = order[start:start + batch_size]
        if len(batch) >= 2:  # a singleton has no in-batch negatives
            batches.append(batch)
    return batches


@dataclass
class TrainResult:
    encoder: Encoder
    curve: list[tuple[int, float, float]] = field(default_factory=list)  # (step, loss, lr)


def write_loss_curve(curve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,loss,lr\n")
        for step, loss, lr in curve:
            fh.write(f"{step},{loss!r},{lr!r}\n")


def _load_pairs(pairs) -> list[TrainingPair]:
    if isinstance(pairs, (str, Path)):
        return read_pairs(pairs)
    return list(pairs)


def train(pairs, config: TrainConfig, *, encoder: Encoder | None = None,
          buckets: int = 2**15, dim: int = 64, init_scale: float = 0.002) -> TrainResult:
    """Contrastive pass over the pair file; returns the encoder and loss curve.

    Batches are drawn by a seeded shuffle per epoch; a trailing batch is
    kept only if it still has at least two pairs. The schedule, batch
    composition, and arithmetic are all deterministic for a fixed config,
    so repeated runs produce bitwise-identical checkpoints.
    """
    pair_list = _load_pairs(pairs)
    if not pair_list:
        raise ValueError("pair file is empty")
    if config.batch_size > len(pair_list):
        raise ValueError(f"batch_size {config.batch_size} exceeds pair count {len(pair_list)}")

    if encoder is None:
        encoder = Encoder.create(buckets=buckets, dim=dim, tau=config.tau,
                                 seed=config.seed, init_scale=init_scale)
    encoder.tau = config.tau

    anchors = [p.anchor for p in pair_list]
    positives = [p.positive for p in pair_list]
    anchor_ids = [encoder.bucket_ids(t) for t in anchors]
    positive_ids = [encoder.bucket_ids(t) for t in positives]

    rng = np.random.default_rng(config.seed)
    epoch_batches = [_epoch_batches(len(pair_list), config.batch_size, rng)
                     for _ in range(config.epochs)]
    total_steps = sum(len(b) for b in epoch_batches)

    params = encoder.parameters()
    state = AdamState.for_params(params)
    grad_embedding = np.zeros_like(encoder.embedding)
    grad_projection = np.zeros_like(encoder.projection)

    curve: list[tuple[int, float, float]] = []
    step = 0
    for batches in epoch_batches:
        for batch in batches:
            lr = lr_at(step, total_steps, config.lr, config.warmup_fraction)
            a_ids = [anchor_ids[i] for i in batch]
            p_ids = [positive_ids[i] for i in batch]
            a_pooled, _, a_norms, a_units = encoder._forward(a_ids)
            p_pooled, _, p_norms, p_units = encoder._forward(p_ids)
            loss, grad_a, grad_p = infonce_loss(a_units, p_units, config.tau)
            if not math.isfinite(loss):
                texts = [anchors[i] for i in batch] + [positives[i] for i in batch]
                raise NonFiniteLossError(step, _batch_fingerprint(texts))

            grad_embedding[...] = 0.0
            grad_projection[...] = 0.0
            encoder._backward(a_ids, a_pooled, a_norms, a_units, grad_a.astype(np.float32),
                              grad_embedding, grad_projection)
            encoder._backward(p_ids, p_pooled, p_norms, p_units, grad_p.astype(np.float32),
                              grad_embedding, grad_projection)
            adamw_step(params, {"embedding": grad_embedding, "projection": grad_projection},
                       state, lr=lr, weight_decay=config.weight_decay)
            curve.append((step, loss, lr))
            step += 1
    return TrainResult(encoder=encoder, curve=curve)


def finetune_sts(encoder: Encoder, pairs, config: TrainConfig, *,
                 dev_pairs=None, score_scale: float = 5.0,
                 select_best: bool = True) -> tuple[Encoder, list[dict]]:
    """Cosine-regression finetuning on (sentence, sentence, score) triples.

    The target is ``score / score_scale`` and the loss is mean squared
    error against the cosine of the two encodings. Weights are snapshotted
    after every epoch; with ``select_best`` the epoch with the highest dev
    Pearson is restored at the end. Returns the encoder and a per-epoch
    history of train loss and dev Pearson.
    """
    from .evalsuite import pearson  # local import; evalsuite never imports trainer

    data = list(pairs)
    if not data:
        raise ValueError("no finetuning pairs")
    for s1, s2, score in data:
        if not 0.0 <= score <= score_scale:
            raise ValueError(f"score {score} outside [0, {score_scale}] for pair ({s1!r}, {s2!r})")
    if select_best and not dev_pairs:
        raise ValueError("best-epoch selection requested but the dev split is empty")

    left_ids = [encoder.bucket_ids(s1) for s1, _, _ in data]
    right_ids = [encoder.bucket_ids(s2) for _, s2, _ in data]
    targets = np.array([score / score_scale for _, _, score in data], dtype=np.float32)

    rng = np.random.default_rng(config.seed)
    epoch_batches = [_epoch_batches(len(data), config.batch_size, rng)
                     for _ in range(config.epochs)]
    total_steps = sum(len(b) for b in epoch_batches)

    params = encoder.parameters()
    state = AdamState.for_params(params)
    grad_embedding = np.zeros_like(encoder.embedding)
    grad_projection = np.zeros_like(encoder.projection)

    def dev_pearson() -> float:
        golds = [score for _, _, score in dev_pairs]
        left = encoder.encode_batch([s1 for s1, _, _ in dev_pairs])
        right = encoder.encode_batch([s2 for _, s2, _ in dev_pairs])
        sims = np.sum(left * right, axis=1)
        return pearson(sims.tolist(), golds)

    history: list[dict] = []
    best: tuple[float, dict[str, np.ndarray]] | None = None
    step = 0
    for epoch, batches in enumerate(epoch_batches):
        epoch_loss = 0.0
        for batch in batches:
            lr = lr_at(step, total_steps, config.lr, config.warmup_fraction)
            l_ids = [left_ids[i] for i in batch]
            r_ids = [right_ids[i] for i in batch]
            l_pooled, _, l_norms, l_units = encoder._forward(l_ids)
            r_pooled, _, r_norms, r_units = encoder._forward(r_ids)
            cos = np.sum(l_units * r_units, axis=1)
            residual = cos - targets[batch]
            loss = float(np.mean(residual**2))
            if not math.isfinite(loss):
                raise NonFiniteLossError(step, _batch_fingerprint(
                    [data[i][0] for i in batch] + [data[i][1] for i in batch]))
            coeff = (2.0 * residual / len(batch)).astype(np.float32)[:, None]
            grad_embedding[...] = 0.0
            grad_projection[...] = 0.0
            encoder._backward(l_ids, l_pooled, l_norms, l_units, coeff * r_units,
                              grad_embedding, grad_projection)
            encoder._backward(r_ids, r_pooled, r_norms, r_units, coeff * l_units,
                              grad_embedding, grad_projection)
            adamw_step(params, {"embedding": grad_embedding, "projection": grad_projection},
                       state, lr=lr, weight_decay=config.weight_decay)
            epoch_loss += loss
            step += 1
        record = {"epoch": epoch, "train_loss": epoch_loss / max(1, len(batches))}
        if dev_pairs:
            record["dev_pearson"] = dev_pearson()
            if select_best and (best is None or record["dev_pearson"] > best[0]):
                best = (record["dev_pearson"], encoder.copy_parameters())
        history.append(record)

    if select_best and best is not None:
        encoder.load_parameters(best[1])
    return encoder, history


def in_batch_retrieval_accuracy(encoder: Encoder, pairs, batch_size: int = 64) -> float:
    """Acc@1 of each anchor retrieving its own positive among batch peers.

    Consecutive slices in file order; the trailing slice is kept when it
    still has at least two pairs. Read-only diagnostic.
    """
    pair_list = _load_pairs(pairs)
    correct = 0
    scored = 0
    for start in range(0, len(pair_list), batch_size):
        batch = pair_list[start:start + batch_size]
        if len(batch) < 2:
            continue
        a = encoder.encode_batch([p.anchor for p in batch])
        b = encoder.encode_batch([p.positive for p in batch])
        sims = a @ b.T
        correct += int(np.sum(np.argmax(sims, axis=1) == np.arange(len(batch))))
        scored += len(batch)
    if scored == 0:
        raise ValueError("no scorable batches")
    return correct / scored

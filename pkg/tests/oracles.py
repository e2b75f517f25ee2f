"""Independent reference implementations the tests check against.

Everything here is written from the mathematical definition, in the
plainest possible style, deliberately sharing no code with the package:
finite differences instead of analytic gradients, full sorts instead of
chunked selection, scalar loops instead of vectorized updates.
"""

from __future__ import annotations

import math

import numpy as np


def central_difference_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """d f / d x by central differences, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = f(x)
        flat[i] = orig - h
        lo = f(x)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * h)
    return grad


def pearson_oracle(xs, ys) -> float:
    """Product-moment correlation, scalar two-pass arithmetic."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    syy = sum((y - my) ** 2 for y in ys)
    return sxy / math.sqrt(sxx * syy)


def midrank_oracle(values) -> list[float]:
    """Average ranks via a value -> positions table."""
    indexed = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(indexed):
        j = i
        while j + 1 < len(indexed) and values[indexed[j + 1]] == values[indexed[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for pos in range(i, j + 1):
            ranks[indexed[pos]] = avg
        i = j + 1
    return ranks


def spearman_oracle(xs, ys) -> float:
    return pearson_oracle(midrank_oracle(list(xs)), midrank_oracle(list(ys)))


def brute_topk(ids, vectors: np.ndarray, query: np.ndarray, k: int):
    """Full scoring, full sort by (-score, id)."""
    q = np.asarray(query, dtype=np.float32)
    q = q / np.linalg.norm(q)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    scores = (vectors / norms) @ q
    order = sorted(range(len(ids)), key=lambda i: (-float(scores[i]), ids[i]))
    top = order[: min(k, len(ids))]
    return [ids[i] for i in top], np.array([scores[i] for i in top], dtype=np.float32)


def adamw_oracle(param: np.ndarray, grads: list[np.ndarray], *, lr: float,
                 weight_decay: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8) -> np.ndarray:
    """Scalar-loop AdamW over a sequence of gradients for one tensor."""
    p = [float(v) for v in np.asarray(param, dtype=np.float64).reshape(-1)]
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    for t, grad in enumerate(grads, start=1):
        g = [float(x) for x in np.asarray(grad, dtype=np.float64).reshape(-1)]
        for i in range(len(p)):
            m[i] = beta1 * m[i] + (1 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i]
            mhat = m[i] / (1 - beta1**t)
            vhat = v[i] / (1 - beta2**t)
            p[i] -= lr * mhat / (math.sqrt(vhat) + eps)
            p[i] -= lr * weight_decay * p[i]
    return np.array(p, dtype=np.float64).reshape(np.asarray(param).shape)


def infonce_oracle(anchors: np.ndarray, positives: np.ndarray, tau: float) -> float:
    """Loss only, from the definition: mean row CE plus mean column CE, halved."""
    a = np.asarray(anchors, dtype=np.float64)
    b = np.asarray(positives, dtype=np.float64)
    n = a.shape[0]
    logits = a @ b.T / tau
    row = 0.0
    col = 0.0
    for i in range(n):
        row += -math.log(softmax_entry(logits[i, :], i))
        col += -math.log(softmax_entry(logits[:, i], i))
    return 0.5 * (row / n + col / n)


def softmax_entry(vec: np.ndarray, idx: int) -> float:
    mx = float(np.max(vec))
    exps = [math.exp(float(v) - mx) for v in vec]
    return exps[idx] / sum(exps)


def lr_oracle(step: int, total: int, base: float, warmup_fraction: float) -> float:
    warmup = math.ceil(warmup_fraction * total)
    if step < warmup:
        return base * step / warmup
    remaining = total - warmup
    if remaining <= 0:
        return 0.0
    return base * (total - step) / remaining


def full_ranking_mrr(query_vecs: np.ndarray, cand_ids: list[str], cand_vecs: np.ndarray,
                     golds: list[set], k_miss: int = 1000) -> tuple[float, float, float, int]:
    """(MRR, Acc@1, missing@k) over complete sorted rankings."""
    rr = 0.0
    acc = 0
    missing = 0
    for q, gold in zip(query_vecs, golds):
        scores = cand_vecs @ q
        order = sorted(range(len(cand_ids)), key=lambda i: (-float(scores[i]), cand_ids[i]))
        rank = next(pos + 1 for pos, i in enumerate(order) if cand_ids[i] in gold)
        rr += 1.0 / rank
        if rank == 1:
            acc += 1
        if rank > k_miss:
            missing += 1
    n = len(golds)
    return rr / n, acc / n, missing / n, n

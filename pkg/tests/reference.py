"""Independent step-by-step reference implementations used as test oracles.

Everything here is plain Python lists and ``math`` — no numpy, no shared
code with the package — and follows the definitions literally (the text
encoder really multiplies the mixing matrix, averages the rows, projects,
and normalizes).  Keep it slow and obvious.
"""

import math


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def norm(a):
    return math.sqrt(dot(a, a))


def normalize(a):
    n = norm(a)
    return [x / n for x in a]


def cosine(a, b):
    return dot(a, b) / (norm(a) * norm(b))


def softmax(logits, tau):
    scaled = [x / tau for x in logits]
    m = max(scaled)
    exps = [math.exp(x - m) for x in scaled]
    total = sum(exps)
    return [e / total for e in exps]


def encode(rows, mix, proj):
    """normalize(proj^T @ mean-over-rows(mix @ rows)); all inputs lists."""
    length = len(rows)
    width = len(rows[0])
    out_dim = len(proj[0])
    mixed = [
        [sum(mix[l][j] * rows[j][e] for j in range(length)) for e in range(width)]
        for l in range(length)
    ]
    pooled = [sum(mixed[l][e] for l in range(length)) / length for e in range(width)]
    pre = [sum(proj[e][d] * pooled[e] for e in range(width)) for d in range(out_dim)]
    return normalize(pre)


def posterior(image_feat, text_feats, tau):
    return softmax([cosine(image_feat, t) for t in text_feats], tau)


def mcm(image_feat, text_feats, tau):
    return max(posterior(image_feat, text_feats, tau))


def fuse(rows_fs, rows_zs, alpha):
    return [
        [alpha * a + (1.0 - alpha) * b for a, b in zip(ra, rb)]
        for ra, rb in zip(rows_fs, rows_zs)
    ]


def predict_open(image_feat, learned, handcrafted, base_ids, new_ids, mix, proj, tau):
    """The full two-stage pipeline, composed naively.

    ``learned``/``handcrafted`` map class id -> prompt rows (list of lists).
    Returns (posterior over base_ids + new_ids, alpha).
    """
    s_fs = mcm(image_feat, [encode(learned[c], mix, proj) for c in base_ids], tau)
    s_zs = mcm(image_feat, [encode(handcrafted[c], mix, proj) for c in new_ids], tau)
    alpha = s_fs / (s_fs + s_zs)
    feats = [
        encode(fuse(learned[c], handcrafted[c], alpha), mix, proj)
        for c in list(base_ids) + list(new_ids)
    ]
    return posterior(image_feat, feats, tau), alpha


def predict_combo(image_feat, learned, handcrafted, base_ids, new_ids, mix, proj, tau):
    feats = [encode(learned[c], mix, proj) for c in base_ids] + [
        encode(handcrafted[c], mix, proj) for c in new_ids
    ]
    return posterior(image_feat, feats, tau)

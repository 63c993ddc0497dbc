"""Pure-numpy kernels for the hot paths of text encoding and fused evaluation.

The compiled extension in ``_accel.pyx`` implements the same three
functions; :mod:`promptfuse.backend` picks whichever is available.  Both
backends must agree numerically to near machine precision, so they share
one formulation:

    pooled = mean over rows of (mix @ X) = (colsum(mix) / L) @ X

The right-hand side is an exact regrouping of the left (the mean of the
mixed rows touches token j only through the j-th column sum of the mixing
matrix) and is what both backends compute.

Kernels are intentionally bare: inputs must already be float64 and
C-contiguous, and zero-norm features raise ``ValueError`` for the calling
layer to translate.
"""

from __future__ import annotations

import numpy as np

ZERO_NORM_MSG = "zero-norm encoded feature"

_FUSE_CHUNK = 128  # inputs per block in fused_encode_batch, bounds memory


def encode_batch(prompts: np.ndarray, mix: np.ndarray, proj: np.ndarray) -> np.ndarray:
    """Encode a stack of prompts (N, L, E) into unit-norm features (N, D)."""
    length = prompts.shape[1]
    weights = mix.sum(axis=0) / float(length)
    pooled = np.einsum("nle,l->ne", prompts, weights)
    pre = pooled @ proj
    norms = np.linalg.norm(pre, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(ZERO_NORM_MSG)
    return pre / norms[:, None]


def encode_grad_batch(
    prompts: np.ndarray,
    mix: np.ndarray,
    proj: np.ndarray,
    upstreams: np.ndarray,
) -> np.ndarray:
    """Gradient of ``encode_batch`` contracted with one cotangent per prompt.

    Returns an (N, L, E) stack: d<upstream_n, feature_n>/d prompts[n].
    Includes the Jacobian of the final normalization.
    """
    length = prompts.shape[1]
    weights = mix.sum(axis=0) / float(length)
    pooled = np.einsum("nle,l->ne", prompts, weights)
    pre = pooled @ proj
    norms = np.linalg.norm(pre, axis=1)
    if np.any(norms == 0.0):
        raise ValueError(ZERO_NORM_MSG)
    feats = pre / norms[:, None]
    radial = np.einsum("nd,nd->n", feats, upstreams)
    g_pre = (upstreams - feats * radial[:, None]) / norms[:, None]
    g_pooled = g_pre @ proj.T
    return weights[None, :, None] * g_pooled[:, None, :]


def fused_encode_batch(
    learned: np.ndarray,
    handcrafted: np.ndarray,
    alphas: np.ndarray,
    mix: np.ndarray,
    proj: np.ndarray,
) -> np.ndarray:
    """Blend two prompt stacks per input weight, then encode every blend.

    ``learned`` and ``handcrafted`` are (C, L, E); ``alphas`` is (N,).  For
    input n and class c the encoded prompt is
    ``alphas[n] * learned[c] + (1 - alphas[n]) * handcrafted[c]``, built in
    full and re-encoded per input (no caching across inputs).  Returns
    unit-norm features of shape (N, C, D).
    """
    n_inputs = alphas.shape[0]
    n_classes, length, _ = learned.shape
    weights = mix.sum(axis=0) / float(length)
    out = np.empty((n_inputs, n_classes, proj.shape[1]), dtype=np.float64)
    for start in range(0, n_inputs, _FUSE_CHUNK):
        stop = min(start + _FUSE_CHUNK, n_inputs)
        a = alphas[start:stop, None, None, None]
        fused = a * learned[None, :, :, :] + (1.0 - a) * handcrafted[None, :, :, :]
        pooled = np.einsum("ncle,l->nce", fused, weights)
        pre = pooled @ proj
        norms = np.linalg.norm(pre, axis=2)
        if np.any(norms == 0.0):
            raise ValueError(ZERO_NORM_MSG)
        out[start:stop] = pre / norms[:, :, None]
    return out

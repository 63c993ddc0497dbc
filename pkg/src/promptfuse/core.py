"""Framework-free numeric primitives shared by every other module.

All math runs in 64-bit floats.  Functions accept anything convertible to
a 1-d float array and return numpy arrays or plain floats.  Everything
here is a pure function and safe to call concurrently.
"""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal

import numpy as np

from .errors import DegenerateInput, NumericError, RangeError, ShapeError

__all__ = [
    "as_vector",
    "check_tau",
    "cosine_similarity",
    "harmonic_mean",
    "l2_normalize",
    "round_half_up",
    "softmax_with_temperature",
]


def as_vector(v) -> np.ndarray:
    """Coerce ``v`` to a nonempty 1-d float64 array."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError(f"expected a nonempty 1-d vector, got shape {arr.shape}")
    return arr


def check_tau(tau: float) -> float:
    """Validate a softmax temperature (finite, strictly positive)."""
    tau = float(tau)
    if not np.isfinite(tau) or tau <= 0.0:
        raise RangeError(f"temperature must be a finite positive real, got {tau}")
    return tau


def l2_normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm, preserving its direction.

    Raises :class:`DegenerateInput` when the norm is zero (including norms
    that underflow to zero).
    """
    arr = as_vector(v)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DegenerateInput("cannot normalize a zero vector")
    return arr / norm


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``, in [-1, 1].

    Invariant to positive rescaling of either argument.
    """
    va = as_vector(a)
    vb = as_vector(b)
    if va.shape != vb.shape:
        raise ShapeError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInput("cosine similarity undefined for a zero vector")
    # clip: rounding can push |cos| past 1 by ~1 ulp
    return float(np.clip(float(va @ vb) / (na * nb), -1.0, 1.0))


def softmax_with_temperature(logits, tau: float) -> np.ndarray:
    """Softmax of ``logits / tau`` with max-subtraction for overflow safety.

    The output is strictly positive and sums to 1; its argmax equals the
    argmax of ``logits`` for any positive temperature.
    """
    arr = as_vector(logits)
    if not np.all(np.isfinite(arr)):
        raise NumericError("softmax input contains a non-finite logit")
    tau = check_tau(tau)
    z = arr / tau
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def harmonic_mean(base_acc: float, new_acc: float) -> float:
    """Balanced mean of two accuracies: ``2*b*n/(b+n)``, with H(0, 0) = 0."""
    b = float(base_acc)
    n = float(new_acc)
    for name, x in (("base_acc", b), ("new_acc", n)):
        if not np.isfinite(x) or x < 0.0 or x > 100.0:
            raise RangeError(f"{name} must lie in [0, 100], got {x}")
    if b == 0.0 and n == 0.0:
        return 0.0
    return 2.0 * b * n / (b + n)


def round_half_up(value: float, decimals: int = 1) -> float:
    """Round half away from zero at ``decimals`` places (64.05 -> 64.1)."""
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(str(float(value))).quantize(q, rounding=ROUND_HALF_UP))

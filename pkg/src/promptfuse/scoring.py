"""Class posteriors, maximum-concept-matching scores, and ID/OOD decisions.

Every function is pure.  Scores are computed over an explicitly ordered
class set; the caller decides which subset (base, new, or all) to score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import cosine_similarity, softmax_with_temperature
from .errors import ConfigError, RangeError, ShapeError

__all__ = [
    "ClassUniverse",
    "ID",
    "MCMScore",
    "OOD",
    "calibrate_lambda",
    "class_posterior",
    "mcm_score",
    "ood_decide",
]

ID = "ID"
OOD = "OOD"


@dataclass(frozen=True)
class ClassUniverse:
    """Base/new partition of class ids 1..K' with their classnames.

    ``base_ids`` are the K classes seen during few-shot tuning; ``new_ids``
    appear only at test time.  ``all_ids`` (base first, then new) fixes the
    component order of every posterior over the full universe.
    """

    base_ids: tuple[int, ...]
    new_ids: tuple[int, ...]
    classnames: dict[int, str]

    def __post_init__(self):
        base = set(self.base_ids)
        new = set(self.new_ids)
        if not base:
            raise ConfigError("universe needs at least one base class")
        if base & new:
            raise ConfigError(f"base and new ids overlap: {sorted(base & new)}")
        total = len(base) + len(new)
        if base | new != set(range(1, total + 1)):
            raise ConfigError("class ids must be exactly 1..K'")
        missing = (base | new) - set(self.classnames)
        if missing:
            raise ConfigError(f"classnames missing for ids {sorted(missing)}")

    @property
    def num_base(self) -> int:
        return len(self.base_ids)

    @property
    def num_total(self) -> int:
        return len(self.base_ids) + len(self.new_ids)

    @property
    def all_ids(self) -> tuple[int, ...]:
        return self.base_ids + self.new_ids

    def require_open(self) -> None:
        if not self.new_ids:
            raise ConfigError("open-class operation requires a nonempty new-class set")


@dataclass(frozen=True)
class MCMScore:
    """Maximum softmax probability over a class set of known size."""

    value: float
    class_set_size: int

    def __post_init__(self):
        if self.class_set_size < 1:
            raise RangeError(f"class set size must be >= 1, got {self.class_set_size}")
        lower = 1.0 / self.class_set_size
        if not (lower - 1e-12 <= self.value <= 1.0 + 1e-12):
            raise RangeError(
                f"score {self.value} outside [{lower}, 1] for a "
                f"{self.class_set_size}-class softmax"
            )


def class_posterior(image_feat, text_feats, tau: float) -> np.ndarray:
    """Temperature-scaled softmax over cosine similarities, in list order."""
    if len(text_feats) == 0:
        raise ShapeError("class posterior needs at least one text feature")
    sims = [cosine_similarity(image_feat, t) for t in text_feats]
    return softmax_with_temperature(sims, tau)


def mcm_score(image_feat, text_feats, tau: float) -> MCMScore:
    """Maximum component of the class posterior over the given class set."""
    probs = class_posterior(image_feat, text_feats, tau)
    return MCMScore(value=float(probs.max()), class_set_size=len(probs))


def ood_decide(score: MCMScore, threshold: float) -> str:
    """ID when the score reaches the threshold, OOD below it.

    The boundary itself counts as ID.
    """
    lam = float(threshold)
    if not 0.0 <= lam <= 1.0:
        raise RangeError(f"threshold must lie in [0, 1], got {lam}")
    return ID if score.value >= lam else OOD


def calibrate_lambda(id_scores: list[MCMScore], retention: float) -> float:
    """Largest threshold keeping at least ``retention`` of the scores ID.

    Empirical quantile over the observed score values; with ties the lower
    value wins (it is the one that still satisfies the retention).
    """
    if not id_scores:
        raise ShapeError("cannot calibrate a threshold from zero scores")
    r = float(retention)
    if not 0.0 < r <= 1.0:
        raise RangeError(f"retention must lie in (0, 1], got {r}")
    values = sorted((s.value for s in id_scores), reverse=True)
    n = len(values)
    # smallest k with k/n >= retention; 1e-9 guards r*n landing just above
    # an integer through float noise
    k = math.ceil(r * n - 1e-9)
    return values[k - 1]

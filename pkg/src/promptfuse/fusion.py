"""Score-weighted test-time fusion of learned and hand-crafted prompts.

Stage 1 scores each input against the learned prompts of the base classes
and the hand-crafted prompts of the new classes.  Stage 2 turns the two
scores into a per-input weight, blends the two prompt banks with it, and
classifies over all classes with the blended prompts.  The two ablation
predictors (constant weight, and mixing classifiers instead of prompts)
live here as well.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .core import check_tau
from .encoder import (
    Encoders,
    PromptSequence,
    build_handcrafted_prompt,
    encode_prompt_batch,
)
from .errors import ConfigError, DegenerateInput, RangeError, ShapeError
from .scoring import ClassUniverse, MCMScore, class_posterior, mcm_score
from .tuning import ContextBlock, assemble_prompt

__all__ = [
    "ComboPredictor",
    "FixedAlphaPredictor",
    "FusionWeight",
    "OpenClassPredictor",
    "PromptBank",
    "build_prompt_bank",
    "compute_alpha",
    "fuse_prompts",
    "predict_classifier_combo",
    "predict_fixed_alpha",
    "predict_open",
    "stage1_scores",
]


@dataclass(frozen=True, eq=False)
class PromptBank:
    """Learned and hand-crafted prompt per class, over all K' classes.

    For every class the two prompts have the same shape and bit-identical
    class-slot rows (same classname embeddings); only the context rows
    differ once tuning has moved them.
    """

    learned: dict[int, PromptSequence]
    handcrafted: dict[int, PromptSequence]

    def __post_init__(self):
        if set(self.learned) != set(self.handcrafted):
            raise ConfigError("learned and handcrafted banks cover different classes")
        for cid in self.learned:
            fs = self.learned[cid]
            zs = self.handcrafted[cid]
            if fs.embeddings.shape != zs.embeddings.shape:
                raise ShapeError(
                    f"class {cid}: learned prompt {fs.embeddings.shape} vs "
                    f"handcrafted {zs.embeddings.shape}"
                )
            if fs.class_slot != zs.class_slot or not np.array_equal(
                fs.embeddings[fs.class_slot.start : fs.class_slot.stop],
                zs.embeddings[zs.class_slot.start : zs.class_slot.stop],
            ):
                raise ConfigError(
                    f"class {cid}: class-slot rows differ between the two banks"
                )

    def class_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.learned))


def build_prompt_bank(
    context: ContextBlock,
    encoders: Encoders,
    universe: ClassUniverse,
    template: str | None = None,
) -> PromptBank:
    """Assemble both prompt families for every class in the universe.

    The hand-crafted side defaults to the context's own origin template,
    which guarantees equal prompt lengths per class.
    """
    template = context.origin_template if template is None else template
    learned: dict[int, PromptSequence] = {}
    handcrafted: dict[int, PromptSequence] = {}
    for cid in universe.all_ids:
        learned[cid] = assemble_prompt(context, cid, encoders.vocab, universe)
        handcrafted[cid] = build_handcrafted_prompt(
            template, universe.classnames[cid], encoders.vocab
        )
    return PromptBank(learned=learned, handcrafted=handcrafted)


@dataclass(frozen=True)
class FusionWeight:
    """Per-input blending weight with the two scores that produced it."""

    alpha: float
    s_fs: MCMScore
    s_zs: MCMScore

    def __post_init__(self):
        if self.s_fs.value <= 0.0 or self.s_zs.value <= 0.0:
            raise RangeError("fusion weight needs strictly positive scores")
        expected = self.s_fs.value / (self.s_fs.value + self.s_zs.value)
        if abs(self.alpha - expected) > 1e-12:
            raise RangeError(
                f"alpha {self.alpha} does not equal s_fs/(s_fs+s_zs) = {expected}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise RangeError(f"alpha must lie strictly in (0, 1), got {self.alpha}")


def compute_alpha(s_fs: MCMScore, s_zs: MCMScore) -> FusionWeight:
    """Weight of the learned prompts: s_fs / (s_fs + s_zs)."""
    if s_fs.value <= 0.0 or s_zs.value <= 0.0:
        raise RangeError("scores must be strictly positive")
    alpha = s_fs.value / (s_fs.value + s_zs.value)
    return FusionWeight(alpha=alpha, s_fs=s_fs, s_zs=s_zs)


def _stage1_feats(
    bank: PromptBank, universe: ClassUniverse, encoders: Encoders
) -> tuple[np.ndarray, np.ndarray]:
    """Text features scored in stage 1: learned/base and handcrafted/new."""
    universe.require_open()
    fs = encode_prompt_batch(
        [bank.learned[cid] for cid in universe.base_ids], encoders.text
    )
    zs = encode_prompt_batch(
        [bank.handcrafted[cid] for cid in universe.new_ids], encoders.text
    )
    return fs, zs


def stage1_scores(
    image_feat,
    bank: PromptBank,
    universe: ClassUniverse,
    encoders: Encoders,
    tau: float,
) -> tuple[MCMScore, MCMScore]:
    """Match scores against learned/base prompts and handcrafted/new prompts."""
    fs_feats, zs_feats = _stage1_feats(bank, universe, encoders)
    s_fs = mcm_score(image_feat, list(fs_feats), tau)
    s_zs = mcm_score(image_feat, list(zs_feats), tau)
    return s_fs, s_zs


def _fuse_pair(fs: PromptSequence, zs: PromptSequence, alpha: float) -> PromptSequence:
    rows = alpha * fs.embeddings + (1.0 - alpha) * zs.embeddings
    rows.flags.writeable = False
    return PromptSequence(embeddings=rows, class_slot=fs.class_slot)


def fuse_prompts(
    bank: PromptBank, weight: "FusionWeight | float"
) -> dict[int, PromptSequence]:
    """Elementwise convex blend of the two prompts of every class.

    ``weight`` is usually a :class:`FusionWeight`; a bare float in [0, 1]
    is accepted for the constant-weight paths (1.0 is the pure learned
    bank, 0.0 the pure hand-crafted one).
    """
    alpha = weight.alpha if isinstance(weight, FusionWeight) else float(weight)
    if not 0.0 <= alpha <= 1.0:
        raise RangeError(f"fusion weight must lie in [0, 1], got {alpha}")
    return {
        cid: _fuse_pair(bank.learned[cid], bank.handcrafted[cid], alpha)
        for cid in bank.class_ids()
    }


def _class_stacks(
    bank: PromptBank, universe: ClassUniverse
) -> list[tuple[list[int], np.ndarray, np.ndarray]]:
    """Group classes by prompt length, preserving all_ids positions."""
    groups: dict[int, list[int]] = {}
    ids = universe.all_ids
    for pos, cid in enumerate(ids):
        groups.setdefault(bank.learned[cid].length, []).append(pos)
    out = []
    for length, positions in groups.items():
        fs = np.ascontiguousarray(
            np.stack([bank.learned[ids[p]].embeddings for p in positions])
        )
        zs = np.ascontiguousarray(
            np.stack([bank.handcrafted[ids[p]].embeddings for p in positions])
        )
        out.append((positions, fs, zs))
    return out


def _fused_class_feats(
    stacks: list[tuple[list[int], np.ndarray, np.ndarray]],
    n_classes: int,
    encoders: Encoders,
    alpha: float,
) -> np.ndarray:
    """Blend and re-encode every class prompt for one input weight."""
    feats = np.empty((n_classes, encoders.text.feat_dim), dtype=np.float64)
    alphas = np.array([alpha], dtype=np.float64)
    try:
        for positions, fs, zs in stacks:
            block = backend.fused_encode_batch(
                fs, zs, alphas, encoders.text.mix_block(fs.shape[1]),
                encoders.text.projection,
            )
            feats[positions] = block[0]
    except ValueError as exc:
        raise DegenerateInput(str(exc)) from exc
    return feats


def predict_open(
    image_feat,
    bank: PromptBank,
    universe: ClassUniverse,
    encoders: Encoders,
    tau: float,
    stage1_tau: float | None = None,
) -> tuple[np.ndarray, FusionWeight]:
    """Dynamic-fusion posterior over all classes for one input.

    Stage 1 and stage 2 share one temperature unless ``stage1_tau``
    overrides the scoring side.
    """
    check_tau(tau)
    s_fs, s_zs = stage1_scores(
        image_feat, bank, universe, encoders, tau if stage1_tau is None else stage1_tau
    )
    weight = compute_alpha(s_fs, s_zs)
    stacks = _class_stacks(bank, universe)
    feats = _fused_class_feats(stacks, universe.num_total, encoders, weight.alpha)
    probs = class_posterior(image_feat, list(feats), tau)
    return probs, weight


def predict_fixed_alpha(
    image_feat,
    bank: PromptBank,
    universe: ClassUniverse,
    encoders: Encoders,
    tau: float,
    alpha: float,
) -> np.ndarray:
    """Fusion with a constant weight; skips stage 1 entirely."""
    check_tau(tau)
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise RangeError(f"alpha must lie in [0, 1], got {alpha}")
    stacks = _class_stacks(bank, universe)
    feats = _fused_class_feats(stacks, universe.num_total, encoders, alpha)
    return class_posterior(image_feat, list(feats), tau)


def predict_classifier_combo(
    image_feat,
    bank: PromptBank,
    universe: ClassUniverse,
    encoders: Encoders,
    tau: float,
) -> np.ndarray:
    """One softmax over learned/base and handcrafted/new text features.

    No blending and no per-input weight; this is the classifier-mixing
    ablation.
    """
    check_tau(tau)
    universe.require_open()
    fs_feats, zs_feats = _stage1_feats(bank, universe, encoders)
    feats = np.vstack([fs_feats, zs_feats])
    return class_posterior(image_feat, list(feats), tau)


class OpenClassPredictor:
    """Dynamic-fusion predictor with stage-1 features precomputed.

    Callable per image feature; returns ``(posterior, alpha)``.  With
    ``alpha_cache_bins > 0`` the weight is quantized to that many bins and
    the blended class features are memoized per bin, trading exactness for
    fewer re-encodes.  The cache is a plain dict: concurrent readers may
    duplicate work but never observe a partial entry.
    """

    name = "dynamic"
    alpha_mode = "dynamic"

    def __init__(
        self,
        bank: PromptBank,
        universe: ClassUniverse,
        encoders: Encoders,
        tau: float,
        stage1_tau: float | None = None,
        alpha_cache_bins: int = 0,
    ):
        universe.require_open()
        self.universe = universe
        self.encoders = encoders
        self.tau = check_tau(tau)
        self.stage1_tau = self.tau if stage1_tau is None else check_tau(stage1_tau)
        self.alpha_cache_bins = int(alpha_cache_bins)
        self._stacks = _class_stacks(bank, universe)
        self._fs_feats, self._zs_feats = _stage1_feats(bank, universe, encoders)
        self._cache: dict[int, np.ndarray] = {}

    def _feats_for(self, alpha: float) -> np.ndarray:
        if self.alpha_cache_bins <= 0:
            return _fused_class_feats(
                self._stacks, self.universe.num_total, self.encoders, alpha
            )
        bins = self.alpha_cache_bins
        key = int(round(alpha * bins))
        feats = self._cache.get(key)
        if feats is None:
            feats = _fused_class_feats(
                self._stacks, self.universe.num_total, self.encoders, key / bins
            )
            self._cache[key] = feats
        return feats

    def __call__(self, image_feat) -> tuple[np.ndarray, float]:
        s_fs = mcm_score(image_feat, list(self._fs_feats), self.stage1_tau)
        s_zs = mcm_score(image_feat, list(self._zs_feats), self.stage1_tau)
        weight = compute_alpha(s_fs, s_zs)
        feats = self._feats_for(weight.alpha)
        probs = class_posterior(image_feat, list(feats), self.tau)
        return probs, weight.alpha


class FixedAlphaPredictor:
    """Constant-weight fusion; alpha=1 is learned-only, alpha=0 handcrafted-only."""

    def __init__(
        self,
        bank: PromptBank,
        universe: ClassUniverse,
        encoders: Encoders,
        tau: float,
        alpha: float,
        name: str | None = None,
    ):
        alpha = float(alpha)
        if not 0.0 <= alpha <= 1.0:
            raise RangeError(f"alpha must lie in [0, 1], got {alpha}")
        self.universe = universe
        self.encoders = encoders
        self.tau = check_tau(tau)
        self.alpha = alpha
        self.name = name if name is not None else f"fixed:{alpha:g}"
        self.alpha_mode = f"fixed:{alpha:g}"
        stacks = _class_stacks(bank, universe)
        self._feats = _fused_class_feats(stacks, universe.num_total, encoders, alpha)

    def __call__(self, image_feat) -> tuple[np.ndarray, None]:
        return class_posterior(image_feat, list(self._feats), self.tau), None


class ComboPredictor:
    """Classifier-mixing ablation: learned/base plus handcrafted/new features."""

    name = "combo"
    alpha_mode = "combo"

    def __init__(
        self,
        bank: PromptBank,
        universe: ClassUniverse,
        encoders: Encoders,
        tau: float,
    ):
        universe.require_open()
        self.universe = universe
        self.tau = check_tau(tau)
        fs_feats, zs_feats = _stage1_feats(bank, universe, encoders)
        self._feats = np.vstack([fs_feats, zs_feats])

    def __call__(self, image_feat) -> tuple[np.ndarray, None]:
        return class_posterior(image_feat, list(self._feats), self.tau), None

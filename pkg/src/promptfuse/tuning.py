"""Few-shot optimization of the shared context vectors on base classes.

Only the context vectors move; encoders and vocabulary stay frozen.  The
optimizer is plain SGD (no momentum, no weight decay) with a per-epoch
learning rate: a constant warmup followed by cosine annealing.  Training
is full-batch by default since few-shot sets are tiny; a fixed batch size
with seeded shuffling is available through the config.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import check_tau
from .encoder import (
    Encoders,
    PromptSequence,
    Vocabulary,
    encode_grad_prompt_batch,
    encode_image_batch,
    encode_prompt_batch,
    split_template,
    tokenize,
)
from .errors import ConfigError, DataError, RangeError, TemplateError
from .scoring import ClassUniverse

__all__ = [
    "ContextBlock",
    "FewShotSet",
    "TrainConfig",
    "assemble_prompt",
    "coop_loss",
    "init_context",
    "lr_schedule",
    "train_coop",
]


@dataclass(eq=False)
class ContextBlock:
    """The M shared learnable context vectors and the template they came from.

    The vectors sit at the template's non-class token positions, so a
    freshly initialized context assembles into exactly the hand-crafted
    prompt of each class.
    """

    vectors: np.ndarray  # (M, E), mutable: this is what training updates
    origin_template: str

    @property
    def num_vectors(self) -> int:
        return self.vectors.shape[0]

    @property
    def prefix_len(self) -> int:
        prefix, _ = split_template(self.origin_template)
        return len(prefix)

    def copy(self) -> "ContextBlock":
        return ContextBlock(
            vectors=self.vectors.copy(), origin_template=self.origin_template
        )

    def checksum_bytes(self) -> bytes:
        return self.vectors.tobytes()


def init_context(template: str, vocab: Vocabulary) -> ContextBlock:
    """Context initialized to the template's own token embeddings."""
    prefix, suffix = split_template(template)
    tokens = prefix + suffix
    if not tokens:
        raise TemplateError(
            f"template {template!r} has no context tokens around the placeholder"
        )
    vectors = vocab.embed_tokens(tokens).copy()
    return ContextBlock(vectors=vectors, origin_template=template)


def assemble_prompt(
    context: ContextBlock,
    class_id: int,
    vocab: Vocabulary,
    universe: ClassUniverse,
) -> PromptSequence:
    """Concatenate the shared context with one class's name embeddings.

    Context rows keep their template positions (prefix before the class
    slot, suffix after), so every class shares the same context values and
    differs only in the slot.
    """
    if class_id not in universe.classnames:
        raise ConfigError(f"class id {class_id} is not in the universe")
    class_tokens = tokenize(universe.classnames[class_id])
    if not class_tokens:
        raise ConfigError(f"classname for id {class_id} produced no tokens")
    class_rows = vocab.embed_tokens(class_tokens)
    p = context.prefix_len
    rows = np.vstack([context.vectors[:p], class_rows, context.vectors[p:]])
    rows.flags.writeable = False
    slot = range(p, p + len(class_tokens))
    return PromptSequence(embeddings=rows, class_slot=slot)


@dataclass
class TrainConfig:
    """Optimizer settings; defaults follow the standard training recipe."""

    max_epochs: int = 200
    lr_init: float = 0.02
    warmup_lr: float = 1e-5
    warmup_epochs: int = 1
    shots: int = 16
    seed: int = 0
    tau: float = 0.01
    batch_size: int | None = None  # None = full batch

    def __post_init__(self):
        if not self.lr_init > self.warmup_lr > 0.0:
            raise ConfigError(
                f"need lr_init > warmup_lr > 0, got {self.lr_init}, {self.warmup_lr}"
            )
        # zero epochs is allowed: it means "evaluate the initialization"
        if self.max_epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError("epoch counts must be nonnegative")
        if self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        check_tau(self.tau)


@dataclass(eq=False)
class FewShotSet:
    """A fixed few-shot training set with an optional access recorder.

    When ``access_log`` is a list, every served label is appended to it;
    the evaluation protocol uses this to prove that training never touched
    a new-class sample.
    """

    samples: np.ndarray  # (N, S)
    labels: np.ndarray  # (N,) int
    shots: int
    access_log: list[int] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def items(self) -> Iterator[tuple[np.ndarray, int]]:
        for i in range(len(self)):
            label = int(self.labels[i])
            if self.access_log is not None:
                self.access_log.append(label)
            yield self.samples[i], label


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Constant warmup, then cosine annealing from ``lr_init`` toward zero."""
    if not 0 <= epoch < config.max_epochs:
        raise RangeError(
            f"epoch {epoch} outside [0, {config.max_epochs})"
        )
    if epoch < config.warmup_epochs:
        return config.warmup_lr
    t = epoch - config.warmup_epochs
    total = config.max_epochs - config.warmup_epochs
    return config.lr_init * 0.5 * (1.0 + np.cos(np.pi * t / total))


def _base_prompts(
    context: ContextBlock, encoders: Encoders, universe: ClassUniverse
) -> list[PromptSequence]:
    return [
        assemble_prompt(context, cid, encoders.vocab, universe)
        for cid in universe.base_ids
    ]


def _loss_and_grad(
    context: ContextBlock,
    image_feats: np.ndarray,
    label_idx: np.ndarray,
    encoders: Encoders,
    universe: ClassUniverse,
    tau: float,
) -> tuple[float, np.ndarray]:
    """Cross-entropy over base classes and its gradient w.r.t. the context."""
    prompts = _base_prompts(context, encoders, universe)
    text_feats = encode_prompt_batch(prompts, encoders.text)
    n_img = np.linalg.norm(image_feats, axis=1)
    n_txt = np.linalg.norm(text_feats, axis=1)
    sims = (image_feats @ text_feats.T) / np.outer(n_img, n_txt)
    z = sims / tau
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    batch = image_feats.shape[0]
    rows = np.arange(batch)
    loss = float(-np.mean(np.log(probs[rows, label_idx])))
    g_sims = probs.copy()
    g_sims[rows, label_idx] -= 1.0
    g_sims /= batch * tau
    # the radial part of d(cosine)/d(text feature) is annihilated by the
    # normalization Jacobian inside the encoder gradient, so only the
    # image-direction term is propagated
    upstreams = (g_sims / n_txt[None, :]).T @ (image_feats / n_img[:, None])
    prompt_grads = encode_grad_prompt_batch(prompts, encoders.text, upstreams)
    grad = np.zeros_like(context.vectors)
    p = context.prefix_len
    for prompt, g in zip(prompts, prompt_grads):
        slot = prompt.class_slot
        grad[:p] += g[:p]
        grad[p:] += g[slot.stop:]
    return loss, grad


def coop_loss(
    context: ContextBlock,
    batch: list[tuple[np.ndarray, int]],
    encoders: Encoders,
    universe: ClassUniverse,
    tau: float,
) -> tuple[float, np.ndarray]:
    """Mean negative log posterior of the true base labels, with gradient.

    The posterior runs over base classes only; the gradient accumulates
    every base-class prompt's contribution because all of them share the
    context.
    """
    if not batch:
        raise DataError("loss needs a nonempty batch")
    check_tau(tau)
    base_index = {cid: i for i, cid in enumerate(universe.base_ids)}
    labels = []
    for _, label in batch:
        if label not in base_index:
            raise ConfigError(
                f"label {label} is not a base class; training must not see it"
            )
        labels.append(base_index[label])
    samples = np.stack([np.asarray(s, dtype=np.float64) for s, _ in batch])
    image_feats = encode_image_batch(samples, encoders.image)
    return _loss_and_grad(
        context, image_feats, np.asarray(labels), encoders, universe, tau
    )


def train_coop(
    dataset: FewShotSet,
    config: TrainConfig,
    encoders: Encoders,
    universe: ClassUniverse,
    template: str,
) -> ContextBlock:
    """SGD on the context vectors; returns the last-epoch context.

    Deterministic given (dataset, config, seed); no early stopping.
    """
    pairs = list(dataset.items())
    if not pairs:
        raise DataError("few-shot set is empty")
    labels = np.array([label for _, label in pairs])
    counts = {cid: int(np.sum(labels == cid)) for cid in universe.base_ids}
    for cid, count in counts.items():
        if count != config.shots:
            raise DataError(
                f"class {cid} has {count} samples, expected exactly {config.shots}"
            )
    stray = set(labels.tolist()) - set(universe.base_ids)
    if stray:
        raise ConfigError(f"non-base labels in training data: {sorted(stray)}")

    base_index = {cid: i for i, cid in enumerate(universe.base_ids)}
    label_idx = np.array([base_index[int(l)] for l in labels])
    samples = np.stack([np.asarray(s, dtype=np.float64) for s, _ in pairs])
    image_feats = encode_image_batch(samples, encoders.image)

    context = init_context(template, encoders.vocab)
    rng = np.random.default_rng(config.seed)
    n = len(pairs)
    for epoch in range(config.max_epochs):
        lr = lr_schedule(epoch, config)
        if config.batch_size is None:
            _, grad = _loss_and_grad(
                context, image_feats, label_idx, encoders, universe, config.tau
            )
            context.vectors -= lr * grad
        else:
            perm = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                chunk = perm[start : start + config.batch_size]
                _, grad = _loss_and_grad(
                    context,
                    image_feats[chunk],
                    label_idx[chunk],
                    encoders,
                    universe,
                    config.tau,
                )
                context.vectors -= lr * grad
    return context

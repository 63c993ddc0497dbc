"""Deterministic, frozen, differentiable toy dual encoder.

The text side mixes token embeddings with a fixed positional matrix,
mean-pools the mixed rows, projects into feature space, and L2-normalizes.
It is the smallest differentiable encoder in which token order matters,
and its gradient is written out by hand (no autodiff).  The image side is
a fixed linear map followed by L2 normalization.  Every parameter is
generated from an integer seed and frozen after construction; nothing in
this module is ever trained.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .core import l2_normalize
from .errors import ConfigError, DegenerateInput, ShapeError, TemplateError

__all__ = [
    "CLASS_PLACEHOLDER",
    "Encoders",
    "ImageEncoderParams",
    "PromptSequence",
    "TextEncoderParams",
    "Vocabulary",
    "build_handcrafted_prompt",
    "build_image_encoder",
    "build_text_encoder",
    "build_vocabulary",
    "encode_image",
    "encode_image_batch",
    "encode_prompt_batch",
    "encode_text",
    "encode_text_grad",
    "split_template",
    "tokenize",
]

CLASS_PLACEHOLDER = "[CLASS]"


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization with lowercase folding."""
    return text.lower().split()


def split_template(template: str) -> tuple[list[str], list[str]]:
    """Split a template into (prefix, suffix) token lists around [CLASS].

    The template must contain the placeholder exactly once.  Punctuation
    glued to the placeholder cell (e.g. ``[CLASS],``) is discarded so the
    class slot holds exactly the classname embeddings.
    """
    count = template.count(CLASS_PLACEHOLDER)
    if count != 1:
        raise TemplateError(
            f"template must contain {CLASS_PLACEHOLDER} exactly once, "
            f"found {count}: {template!r}"
        )
    cells = template.split()
    slots = [i for i, cell in enumerate(cells) if CLASS_PLACEHOLDER in cell]
    idx = slots[0]
    return [c.lower() for c in cells[:idx]], [c.lower() for c in cells[idx + 1:]]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _sha256(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Token table mapping every known token to one unit-norm embedding row.

    Unknown tokens do not error: they resolve to a deterministic row
    derived by hashing the token together with the vocabulary seed, so
    arbitrary templates keep working.
    """

    tokens: tuple[str, ...]
    table: np.ndarray  # (V, E), unit rows, read-only
    seed: int
    _index: dict[str, int] = field(repr=False)

    @property
    def embed_width(self) -> int:
        return self.table.shape[1]

    def embedding(self, token: str) -> np.ndarray:
        idx = self._index.get(token)
        if idx is not None:
            return self.table[idx]
        return self.fallback_row(token)

    def fallback_row(self, token: str) -> np.ndarray:
        """Deterministic unit row for a token outside the table."""
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=8, key=str(self.seed).encode()
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return _frozen(l2_normalize(rng.standard_normal(self.embed_width)))

    def embed_tokens(self, tokens: list[str]) -> np.ndarray:
        return np.vstack([self.embedding(t) for t in tokens])

    def checksum(self) -> str:
        return _sha256(
            "\x00".join(self.tokens).encode("utf-8"),
            self.table.tobytes(),
            str(self.seed).encode(),
        )


def build_vocabulary(
    classnames: list[str],
    templates: list[str],
    embed_width: int,
    seed: int,
) -> Vocabulary:
    """Seeded token table over all classname and template tokens.

    Rows are pseudo-random normal draws, unit-normalized, assigned in
    first-appearance order (classnames, then templates).  The table is
    frozen after construction.
    """
    if not classnames:
        raise ConfigError("classnames must be nonempty")
    if len(set(classnames)) != len(classnames):
        raise ConfigError("duplicate classname")
    if embed_width < 2:
        raise ConfigError(f"embed_width must be >= 2, got {embed_width}")
    tokens: list[str] = []
    seen: set[str] = set()

    def add(tok: str) -> None:
        if tok not in seen:
            seen.add(tok)
            tokens.append(tok)

    for name in classnames:
        for tok in tokenize(name):
            add(tok)
    for template in templates:
        cells = template.split()
        for cell in cells:
            if CLASS_PLACEHOLDER in cell:
                continue
            add(cell.lower())
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((len(tokens), embed_width))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return Vocabulary(
        tokens=tuple(tokens),
        table=_frozen(rows),
        seed=seed,
        _index={t: i for i, t in enumerate(tokens)},
    )


@dataclass(frozen=True, eq=False)
class PromptSequence:
    """One class's prompt: token embeddings plus the classname slot."""

    embeddings: np.ndarray  # (L, E), read-only
    class_slot: range

    def __post_init__(self):
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] == 0:
            raise ShapeError(f"prompt must be (L, E), got {self.embeddings.shape}")
        length = self.embeddings.shape[0]
        if len(self.class_slot) == 0:
            raise ShapeError("class slot is empty")
        if self.class_slot.start < 0 or self.class_slot.stop > length:
            raise ShapeError(
                f"class slot {self.class_slot} outside prompt of length {length}"
            )

    @property
    def length(self) -> int:
        return self.embeddings.shape[0]

    @property
    def width(self) -> int:
        return self.embeddings.shape[1]


def build_handcrafted_prompt(
    template: str, classname: str, vocab: Vocabulary
) -> PromptSequence:
    """Token embeddings of ``template`` with [CLASS] replaced by ``classname``."""
    prefix, suffix = split_template(template)
    class_tokens = tokenize(classname)
    if not class_tokens:
        raise ConfigError(f"classname {classname!r} produced no tokens")
    rows = vocab.embed_tokens(prefix + class_tokens + suffix)
    slot = range(len(prefix), len(prefix) + len(class_tokens))
    return PromptSequence(embeddings=_frozen(rows), class_slot=slot)


@dataclass(frozen=True, eq=False)
class TextEncoderParams:
    """Frozen text-encoder parameters, all generated from ``seed``.

    ``positional_mix`` is built once at the maximum supported prompt
    length; a prompt of length L uses its leading L-by-L block, so one
    parameter set serves prompts of mixed lengths deterministically.
    """

    positional_mix: np.ndarray  # (max_len, max_len), read-only
    projection: np.ndarray  # (E, D), read-only
    seed: int

    @property
    def max_len(self) -> int:
        return self.positional_mix.shape[0]

    @property
    def embed_width(self) -> int:
        return self.projection.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.projection.shape[1]

    def mix_block(self, length: int) -> np.ndarray:
        if not 1 <= length <= self.max_len:
            raise ShapeError(
                f"prompt length {length} exceeds positional mix size {self.max_len}"
            )
        return np.ascontiguousarray(self.positional_mix[:length, :length])

    def checksum(self) -> str:
        return _sha256(
            self.positional_mix.tobytes(),
            self.projection.tobytes(),
            str(self.seed).encode(),
        )


#: per-position growth of the mixing column sums; later tokens dominate the
#: pooled representation the way a sequence encoder's end-of-text readout does
RECENCY_GROWTH = 2.0


def build_text_encoder(
    embed_width: int, feat_dim: int, max_len: int, seed: int
) -> TextEncoderParams:
    """Recency-ramped noisy-identity mixing plus a random projection.

    Column j of the mixing matrix is scaled by ``RECENCY_GROWTH**j``, so
    later positions carry geometrically more of the pooled sum.  Without
    the ramp the shared template tokens swamp the classname token and all
    class features collapse toward one direction.  The noise on top makes
    every position's weight distinct, which is what makes token order
    matter.
    """
    if embed_width < 2 or feat_dim < 1 or max_len < 1:
        raise ConfigError(
            f"invalid text encoder sizes: E={embed_width} D={feat_dim} L={max_len}"
        )
    rng = np.random.default_rng(seed)
    ramp = RECENCY_GROWTH ** np.arange(max_len)
    # normalize so mean-pooling a full-length prompt yields weights summing
    # to ~1; the forward pass is scale-invariant but gradients are not, and
    # this keeps their magnitude independent of max_len
    ramp *= max_len / ramp.sum()
    mix = (
        np.eye(max_len)
        + rng.standard_normal((max_len, max_len)) * (0.5 / np.sqrt(max_len))
    ) * ramp[None, :]
    proj = rng.standard_normal((embed_width, feat_dim)) / np.sqrt(embed_width)
    return TextEncoderParams(
        positional_mix=_frozen(mix), projection=_frozen(proj), seed=seed
    )


def _check_prompt(prompt: PromptSequence, params: TextEncoderParams) -> None:
    if prompt.width != params.embed_width:
        raise ShapeError(
            f"prompt width {prompt.width} != encoder embed width {params.embed_width}"
        )
    if prompt.length > params.max_len:
        raise ShapeError(
            f"prompt length {prompt.length} exceeds positional mix size {params.max_len}"
        )


def encode_text(prompt: PromptSequence, params: TextEncoderParams) -> np.ndarray:
    """Unit-norm text feature of one prompt.

    feature = l2_normalize(projection^T . mean over rows of (mix . embeddings))
    """
    _check_prompt(prompt, params)
    stack = np.ascontiguousarray(prompt.embeddings[None, :, :])
    try:
        return backend.encode_batch(
            stack, params.mix_block(prompt.length), params.projection
        )[0]
    except ValueError as exc:
        raise DegenerateInput(str(exc)) from exc


def encode_text_prenorm(prompt: PromptSequence, params: TextEncoderParams) -> np.ndarray:
    """Text feature before the final normalization.

    This is the space in which the encoder is linear in the prompt, which
    the synthetic-task generator exploits to place class prototypes.
    """
    _check_prompt(prompt, params)
    mix = params.mix_block(prompt.length)
    weights = mix.sum(axis=0) / float(prompt.length)
    return (weights @ prompt.embeddings) @ params.projection


def encode_prompt_batch(
    prompts: list[PromptSequence], params: TextEncoderParams
) -> np.ndarray:
    """Encode several prompts; one kernel call per distinct prompt length."""
    if not prompts:
        raise ShapeError("no prompts to encode")
    for p in prompts:
        _check_prompt(p, params)
    out = np.empty((len(prompts), params.feat_dim), dtype=np.float64)
    by_length: dict[int, list[int]] = {}
    for i, p in enumerate(prompts):
        by_length.setdefault(p.length, []).append(i)
    try:
        for length, idxs in by_length.items():
            stack = np.ascontiguousarray(
                np.stack([prompts[i].embeddings for i in idxs])
            )
            out[idxs] = backend.encode_batch(
                stack, params.mix_block(length), params.projection
            )
    except ValueError as exc:
        raise DegenerateInput(str(exc)) from exc
    return out


def encode_text_grad(
    prompt: PromptSequence, params: TextEncoderParams, upstream: np.ndarray
) -> np.ndarray:
    """Exact gradient of <upstream, encode_text(prompt)> w.r.t. the embeddings.

    Includes the Jacobian of the final normalization; verified against
    central finite differences in the test suite.
    """
    _check_prompt(prompt, params)
    up = np.asarray(upstream, dtype=np.float64)
    if up.shape != (params.feat_dim,):
        raise ShapeError(
            f"upstream cotangent must have shape ({params.feat_dim},), got {up.shape}"
        )
    stack = np.ascontiguousarray(prompt.embeddings[None, :, :])
    try:
        return backend.encode_grad_batch(
            stack,
            params.mix_block(prompt.length),
            params.projection,
            np.ascontiguousarray(up[None, :]),
        )[0]
    except ValueError as exc:
        raise DegenerateInput(str(exc)) from exc


def encode_grad_prompt_batch(
    prompts: list[PromptSequence],
    params: TextEncoderParams,
    upstreams: np.ndarray,
) -> list[np.ndarray]:
    """Per-prompt encode gradients; one kernel call per distinct length."""
    if not prompts:
        raise ShapeError("no prompts to differentiate")
    ups = np.asarray(upstreams, dtype=np.float64)
    if ups.shape != (len(prompts), params.feat_dim):
        raise ShapeError(
            f"upstreams must have shape ({len(prompts)}, {params.feat_dim}), "
            f"got {ups.shape}"
        )
    for p in prompts:
        _check_prompt(p, params)
    grads: list[np.ndarray | None] = [None] * len(prompts)
    by_length: dict[int, list[int]] = {}
    for i, p in enumerate(prompts):
        by_length.setdefault(p.length, []).append(i)
    try:
        for length, idxs in by_length.items():
            stack = np.ascontiguousarray(
                np.stack([prompts[i].embeddings for i in idxs])
            )
            block = backend.encode_grad_batch(
                stack,
                params.mix_block(length),
                params.projection,
                np.ascontiguousarray(ups[idxs]),
            )
            for j, i in enumerate(idxs):
                grads[i] = block[j]
    except ValueError as exc:
        raise DegenerateInput(str(exc)) from exc
    return grads  # type: ignore[return-value]


@dataclass(frozen=True, eq=False)
class ImageEncoderParams:
    """Frozen image-encoder parameters: one seeded linear map."""

    matrix: np.ndarray  # (S, D), read-only
    seed: int

    @property
    def sample_dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.matrix.shape[1]

    def checksum(self) -> str:
        return _sha256(self.matrix.tobytes(), str(self.seed).encode())


def build_image_encoder(
    sample_dim: int, feat_dim: int, seed: int
) -> ImageEncoderParams:
    """Seeded random orthonormal projection (QR of a Gaussian draw).

    Orthonormal columns pass a prototype lying in the column space through
    at full strength while admitting only the matching noise components,
    so feature-space signal-to-noise equals the raw-space one.
    """
    if sample_dim < 1 or feat_dim < 1:
        raise ConfigError(
            f"invalid image encoder sizes: S={sample_dim} D={feat_dim}"
        )
    if sample_dim < feat_dim:
        raise ConfigError(
            f"sample dim {sample_dim} must be >= feature dim {feat_dim}"
        )
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((sample_dim, feat_dim)))
    # sign-normalize so the factorization is unique
    matrix = q * np.sign(np.diag(r))[None, :]
    return ImageEncoderParams(matrix=_frozen(matrix), seed=seed)


def encode_image(sample, params: ImageEncoderParams) -> np.ndarray:
    """Unit-norm image feature: l2_normalize(matrix^T . sample)."""
    x = np.asarray(sample, dtype=np.float64)
    if x.shape != (params.sample_dim,):
        raise ShapeError(
            f"sample must have shape ({params.sample_dim},), got {x.shape}"
        )
    return l2_normalize(x @ params.matrix)


def encode_image_batch(samples: np.ndarray, params: ImageEncoderParams) -> np.ndarray:
    """Unit-norm image features for an (N, S) sample matrix."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.sample_dim:
        raise ShapeError(
            f"samples must have shape (N, {params.sample_dim}), got {x.shape}"
        )
    pre = x @ params.matrix
    norms = np.linalg.norm(pre, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInput("zero-norm image feature")
    return pre / norms[:, None]


@dataclass(frozen=True, eq=False)
class Encoders:
    """The frozen trio every pipeline stage consumes."""

    vocab: Vocabulary
    text: TextEncoderParams
    image: ImageEncoderParams

    def checksum(self) -> str:
        return _sha256(
            self.vocab.checksum().encode(),
            self.text.checksum().encode(),
            self.image.checksum().encode(),
        )

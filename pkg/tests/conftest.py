import numpy as np
import pytest

from promptfuse.encoder import (
    Encoders,
    build_image_encoder,
    build_text_encoder,
    build_vocabulary,
)
from promptfuse.fusion import build_prompt_bank
from promptfuse.scoring import ClassUniverse
from promptfuse.tuning import init_context

TEMPLATE = "a photo of a [CLASS]"


def make_universe(n_base: int, n_new: int) -> ClassUniverse:
    ids = list(range(1, n_base + n_new + 1))
    return ClassUniverse(
        base_ids=tuple(ids[:n_base]),
        new_ids=tuple(ids[n_base:]),
        classnames={i: f"name{i:02d}" for i in ids},
    )


def make_encoders(
    universe: ClassUniverse,
    seed: int,
    embed_width: int = 16,
    feat_dim: int = 8,
    sample_dim: int = 16,
    template: str = TEMPLATE,
) -> Encoders:
    names = [universe.classnames[i] for i in sorted(universe.classnames)]
    vocab = build_vocabulary(names, [template], embed_width, seed)
    text = build_text_encoder(embed_width, feat_dim, max_len=8, seed=seed + 1)
    image = build_image_encoder(sample_dim, feat_dim, seed=seed + 2)
    return Encoders(vocab=vocab, text=text, image=image)


def make_instance(seed: int, n_base: int = 3, n_new: int = 2, jitter: float = 0.4,
                  embed_width: int = 16, feat_dim: int = 8):
    """A universe, encoders, and a bank whose learned context was perturbed."""
    rng = np.random.default_rng(seed)
    universe = make_universe(n_base, n_new)
    encoders = make_encoders(universe, seed, embed_width=embed_width,
                             feat_dim=feat_dim)
    context = init_context(TEMPLATE, encoders.vocab)
    context.vectors += jitter * rng.standard_normal(context.vectors.shape)
    bank = build_prompt_bank(context, encoders, universe)
    image_feat = rng.standard_normal(feat_dim)
    image_feat /= np.linalg.norm(image_feat)
    return universe, encoders, bank, image_feat


@pytest.fixture
def small_instance():
    return make_instance(seed=11)

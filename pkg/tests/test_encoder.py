import hashlib

import numpy as np
import pytest

from promptfuse.core import l2_normalize
from promptfuse.encoder import (
    build_handcrafted_prompt,
    build_image_encoder,
    build_text_encoder,
    build_vocabulary,
    encode_image,
    encode_image_batch,
    encode_prompt_batch,
    encode_text,
    encode_text_grad,
    encode_text_prenorm,
    split_template,
    tokenize,
)
from promptfuse.errors import ConfigError, ShapeError, TemplateError

from conftest import TEMPLATE

NAMES = ["dog", "cat", "station wagon"]


@pytest.fixture
def vocab():
    return build_vocabulary(NAMES, [TEMPLATE], embed_width=16, seed=3)


@pytest.fixture
def text_params():
    return build_text_encoder(embed_width=16, feat_dim=8, max_len=8, seed=4)


class TestVocabulary:
    def test_deterministic(self, vocab):
        again = build_vocabulary(NAMES, [TEMPLATE], embed_width=16, seed=3)
        assert vocab.tokens == again.tokens
        np.testing.assert_array_equal(vocab.table, again.table)

    def test_seed_changes_table(self, vocab):
        other = build_vocabulary(NAMES, [TEMPLATE], embed_width=16, seed=4)
        assert not np.array_equal(vocab.table, other.table)

    def test_duplicate_classname_rejected(self):
        with pytest.raises(ConfigError):
            build_vocabulary(["cat", "cat"], [TEMPLATE], 16, 0)

    def test_rows_unit_norm(self, vocab):
        np.testing.assert_allclose(
            np.linalg.norm(vocab.table, axis=1), 1.0, atol=1e-12
        )

    def test_table_frozen(self, vocab):
        with pytest.raises(ValueError):
            vocab.table[0, 0] = 7.0

    def test_every_known_token_resolves_to_its_row(self, vocab):
        for i, tok in enumerate(vocab.tokens):
            np.testing.assert_array_equal(vocab.embedding(tok), vocab.table[i])

    def test_unknown_token_fallback_matches_recomputed_hash(self, vocab):
        row = vocab.embedding("zebra")
        digest = hashlib.blake2b(
            b"zebra", digest_size=8, key=str(vocab.seed).encode()
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        expected = l2_normalize(rng.standard_normal(16))
        np.testing.assert_array_equal(row, expected)
        # stable across calls
        np.testing.assert_array_equal(row, vocab.embedding("zebra"))


class TestTemplates:
    def test_tokenize_folds_case(self):
        assert tokenize("A Photo OF a  Dog") == ["a", "photo", "of", "a", "dog"]

    def test_split_template(self):
        prefix, suffix = split_template("a photo of a [CLASS], a type of flower")
        assert prefix == ["a", "photo", "of", "a"]
        assert suffix == ["a", "type", "of", "flower"]

    def test_basic_prompt_shape(self, vocab):
        prompt = build_handcrafted_prompt(TEMPLATE, "dog", vocab)
        assert prompt.length == 5
        assert prompt.class_slot == range(4, 5)

    def test_suffix_template_shape(self, vocab):
        prompt = build_handcrafted_prompt(
            "a photo of a [CLASS], a type of flower", "rose", vocab
        )
        assert prompt.length == 9
        assert prompt.class_slot == range(4, 5)

    def test_missing_placeholder(self, vocab):
        with pytest.raises(TemplateError):
            build_handcrafted_prompt("a photo of a dog", "dog", vocab)

    def test_multiple_placeholders(self, vocab):
        with pytest.raises(TemplateError):
            build_handcrafted_prompt("[CLASS] or [CLASS]", "dog", vocab)

    def test_multi_token_classname(self, vocab):
        prompt = build_handcrafted_prompt(TEMPLATE, "station wagon", vocab)
        assert prompt.length == 6
        assert prompt.class_slot == range(4, 6)
        np.testing.assert_array_equal(prompt.embeddings[4], vocab.embedding("station"))
        np.testing.assert_array_equal(prompt.embeddings[5], vocab.embedding("wagon"))


class TestTextEncoder:
    def test_unit_norm_output(self, vocab, text_params):
        for name in NAMES:
            feat = encode_text(build_handcrafted_prompt(TEMPLATE, name, vocab), text_params)
            assert abs(np.linalg.norm(feat) - 1.0) <= 1e-6

    def test_deterministic(self, vocab, text_params):
        prompt = build_handcrafted_prompt(TEMPLATE, "dog", vocab)
        np.testing.assert_array_equal(
            encode_text(prompt, text_params), encode_text(prompt, text_params)
        )

    def test_token_order_matters(self, vocab, text_params):
        a = build_handcrafted_prompt("dog cat [CLASS]", "station", vocab)
        b = build_handcrafted_prompt("cat dog [CLASS]", "station", vocab)
        assert not np.allclose(encode_text(a, text_params), encode_text(b, text_params))

    def test_small_perturbation_small_change(self, vocab, text_params):
        prompt = build_handcrafted_prompt(TEMPLATE, "dog", vocab)
        rows = prompt.embeddings.copy()
        rows[2, 3] += 1e-6
        from promptfuse.encoder import PromptSequence

        shifted = PromptSequence(embeddings=rows, class_slot=prompt.class_slot)
        delta = np.abs(
            encode_text(shifted, text_params) - encode_text(prompt, text_params)
        ).max()
        assert 0.0 < delta < 1e-4

    def test_length_beyond_mix_rejected(self, vocab, text_params):
        prompt = build_handcrafted_prompt(
            "one two three four five six seven eight [CLASS]", "dog", vocab
        )
        with pytest.raises(ShapeError):
            encode_text(prompt, text_params)

    def test_width_mismatch_rejected(self, vocab):
        params = build_text_encoder(embed_width=12, feat_dim=8, max_len=8, seed=4)
        prompt = build_handcrafted_prompt(TEMPLATE, "dog", vocab)
        with pytest.raises(ShapeError):
            encode_text(prompt, params)

    def test_batch_matches_single(self, vocab, text_params):
        prompts = [build_handcrafted_prompt(TEMPLATE, n, vocab) for n in NAMES]
        batch = encode_prompt_batch(prompts, text_params)
        for i, p in enumerate(prompts):
            np.testing.assert_allclose(batch[i], encode_text(p, text_params), atol=1e-15)

    def test_prenorm_matches_encode_direction(self, vocab, text_params):
        prompt = build_handcrafted_prompt(TEMPLATE, "cat", vocab)
        pre = encode_text_prenorm(prompt, text_params)
        np.testing.assert_allclose(
            pre / np.linalg.norm(pre), encode_text(prompt, text_params), atol=1e-12
        )


def central_difference_grad(prompt, params, upstream, step=1e-5):
    from promptfuse.encoder import PromptSequence

    rows = prompt.embeddings
    grad = np.zeros_like(rows)
    for j in range(rows.shape[0]):
        for e in range(rows.shape[1]):
            plus = rows.copy()
            plus[j, e] += step
            minus = rows.copy()
            minus[j, e] -= step
            f_plus = encode_text(
                PromptSequence(embeddings=plus, class_slot=prompt.class_slot), params
            )
            f_minus = encode_text(
                PromptSequence(embeddings=minus, class_slot=prompt.class_slot), params
            )
            grad[j, e] = float(upstream @ (f_plus - f_minus)) / (2 * step)
    return grad


class TestTextEncoderGradient:
    def test_matches_finite_differences(self, vocab, text_params):
        rng = np.random.default_rng(0)
        for trial in range(20):
            name = NAMES[trial % len(NAMES)]
            prompt = build_handcrafted_prompt(TEMPLATE, name, vocab)
            upstream = rng.standard_normal(text_params.feat_dim)
            analytic = encode_text_grad(prompt, text_params, upstream)
            numeric = central_difference_grad(prompt, text_params, upstream)
            denom = max(np.abs(numeric).max(), 1e-12)
            assert np.abs(analytic - numeric).max() / denom < 1e-4

    def test_zero_upstream_gives_zero_gradient(self, vocab, text_params):
        prompt = build_handcrafted_prompt(TEMPLATE, "dog", vocab)
        grad = encode_text_grad(prompt, text_params, np.zeros(text_params.feat_dim))
        np.testing.assert_array_equal(grad, np.zeros_like(prompt.embeddings))

    def test_upstream_shape_checked(self, vocab, text_params):
        prompt = build_handcrafted_prompt(TEMPLATE, "dog", vocab)
        with pytest.raises(ShapeError):
            encode_text_grad(prompt, text_params, np.zeros(3))


class TestImageEncoder:
    def test_unit_norm_and_deterministic(self):
        params = build_image_encoder(16, 8, seed=5)
        rng = np.random.default_rng(1)
        x = rng.standard_normal(16)
        feat = encode_image(x, params)
        assert abs(np.linalg.norm(feat) - 1.0) <= 1e-6
        np.testing.assert_array_equal(feat, encode_image(x, params))

    def test_scale_cancels(self):
        params = build_image_encoder(16, 8, seed=5)
        x = np.random.default_rng(2).standard_normal(16)
        np.testing.assert_allclose(
            encode_image(2.0 * x, params), encode_image(x, params), atol=1e-12
        )

    def test_shape_mismatch(self):
        params = build_image_encoder(16, 8, seed=5)
        with pytest.raises(ShapeError):
            encode_image(np.zeros(10), params)

    def test_orthonormal_columns(self):
        params = build_image_encoder(16, 8, seed=5)
        gram = params.matrix.T @ params.matrix
        np.testing.assert_allclose(gram, np.eye(8), atol=1e-12)

    def test_batch_matches_single(self):
        params = build_image_encoder(16, 8, seed=5)
        xs = np.random.default_rng(3).standard_normal((6, 16))
        batch = encode_image_batch(xs, params)
        for i in range(6):
            np.testing.assert_allclose(batch[i], encode_image(xs[i], params), atol=1e-15)

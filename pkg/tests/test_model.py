import numpy as np
import pytest

from motion_complete import tensor as tn
from motion_complete.exceptions import MaskLengthMismatch, ShapeError
from motion_complete.interpolation import fill_unknown
from motion_complete.masks import IGNORED, INBETWEEN, KEYFRAME, UNKNOWN, make_mask
from motion_complete.model import (
    CompletionTransformer, ModelConfig, embed_tokens, encoder_layer, ffn, init_params, mhsa,
    mixture, param_shapes,
)
from motion_complete.skeleton import MotionSequence

TINY = ModelConfig(n_layers=2, n_heads=2, d_model=16, d_ffn=24, max_len=48, n_joints=5)


def f64(x):
    return tn.Tensor(np.asarray(x, dtype=np.float64), dtype=np.float64)


def random_layer(rng, F, H):
    w = {f"attn.w{k}": f64(rng.normal(scale=0.3, size=(F, F))) for k in "qkvo"}
    w.update({f"attn.b{k}": f64(rng.normal(scale=0.1, size=F)) for k in "qkvo"})
    w.update({"ffn.w1": f64(rng.normal(scale=0.3, size=(F, H))), "ffn.b1": f64(rng.normal(size=H)),
              "ffn.w2": f64(rng.normal(scale=0.3, size=(H, F))), "ffn.b2": f64(rng.normal(size=F))})
    for n in ("norm1", "norm2"):
        w[f"{n}.gamma"] = f64(rng.uniform(0.5, 1.5, F))
        w[f"{n}.beta"] = f64(rng.normal(scale=0.1, size=F))
    return w


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d_model=10, n_heads=3)
    with pytest.raises(ValueError):
        ModelConfig(features="positions", coord="local")
    assert ModelConfig().input_dim == 22 * 7
    assert ModelConfig(features="positions").input_dim == 66
    assert ModelConfig.from_dict(TINY.to_dict()) == TINY


def test_param_shapes_match_init():
    params = init_params(TINY, seed=3)
    assert {k: v.shape for k, v in params.items()} == param_shapes(TINY)


def test_embed_tokens_full_size_dims():
    cfg = ModelConfig()
    p = init_params(cfg, seed=0)
    z = embed_tokens(tn.Tensor(np.zeros((50, cfg.input_dim))), tn.Tensor(p["input_conv.weight"]),
                     tn.Tensor(np.zeros(256)))
    assert z.shape == (50, 256)
    np.testing.assert_array_equal(z.data, 0.0)


def test_mixture_rows():
    rng = np.random.default_rng(0)
    pos, key = f64(rng.normal(size=(20, 6))), f64(rng.normal(size=(3, 6)))
    all_key = mixture(pos, key, np.zeros(12, dtype=int)).data
    np.testing.assert_allclose(all_key, pos.data[:12] + key.data[0])
    a = make_mask(INBETWEEN, 5, 20).labels
    b = a.copy()
    b[12] = KEYFRAME
    diff = np.any(mixture(pos, key, a).data != mixture(pos, key, b).data, axis=1)
    np.testing.assert_array_equal(np.flatnonzero(diff), [12])
    with pytest.raises(IndexError):
        mixture(pos, key, np.array([0, 3]))


def test_mixture_partitions_into_three_classes():
    rng = np.random.default_rng(1)
    pos, key = f64(rng.normal(size=(40, 6))), f64(rng.normal(size=(3, 6)))
    labels = make_mask(INBETWEEN, 10, 40).labels
    addend = mixture(pos, key, labels).data - pos.data[:40]
    classes = {tuple(np.round(r, 12)) for r in addend}
    assert len(classes) == 3
    for lab in (KEYFRAME, UNKNOWN, IGNORED):
        np.testing.assert_allclose(addend[labels == lab], np.broadcast_to(key.data[lab], addend[labels == lab].shape))


def naive_mhsa(h, w, n_heads):
    """Loop-per-head attention written straight from the definition."""
    T, F = h.shape
    dh = F // n_heads
    q = h @ w["wq"] + w["bq"]
    k = h @ w["wk"] + w["bk"]
    v = h @ w["wv"] + w["bv"]
    heads = []
    for m in range(n_heads):
        sl = slice(m * dh, (m + 1) * dh)
        out = np.zeros((T, dh))
        for t in range(T):
            scores = np.array([q[t, sl] @ k[s, sl] for s in range(T)]) / np.sqrt(dh)
            weights = np.exp(scores - scores.max())
            weights /= weights.sum()
            out[t] = sum(weights[s] * v[s, sl] for s in range(T))
        heads.append(out)
    return np.concatenate(heads, axis=1) @ w["wo"] + w["bo"]


def test_mhsa_matches_manual_oracle():
    h = np.array([[0.1, -0.2, 0.3, 0.0], [1.0, 0.5, -0.5, 0.2], [-0.3, 0.8, 0.1, -1.0]])
    w = {
        "wq": np.eye(4) * 0.5, "wk": np.fliplr(np.eye(4)), "wv": np.arange(16.0).reshape(4, 4) / 10,
        "wo": np.tril(np.ones((4, 4))), "bq": np.array([0.1, 0, 0, 0]), "bk": np.zeros(4),
        "bv": np.array([0, 0.2, 0, 0]), "bo": np.array([0, 0, 0, 1.0]),
    }
    got = mhsa(f64(h), {k: f64(v) for k, v in w.items()}, 2).data
    np.testing.assert_allclose(got, naive_mhsa(h, w, 2), atol=1e-5)


def test_mhsa_single_token_returns_projected_value():
    rng = np.random.default_rng(2)
    w = {k[5:]: v for k, v in random_layer(rng, 4, 6).items() if k.startswith("attn.")}
    h = rng.normal(size=(1, 4))
    v = h @ w["wv"].data + w["bv"].data
    np.testing.assert_allclose(mhsa(f64(h), w, 2).data, v @ w["wo"].data + w["bo"].data, atol=1e-12)


def test_identical_rows_attend_uniformly():
    rng = np.random.default_rng(3)
    w = {k[5:]: v for k, v in random_layer(rng, 4, 6).items() if k.startswith("attn.")}
    seen = []
    mhsa(f64(np.tile(rng.normal(size=4), (5, 1))), w, 2, hook=seen.append)
    np.testing.assert_allclose(seen[0], 0.2, atol=1e-12)


def test_encoder_layer_with_zero_sublayers():
    rng = np.random.default_rng(4)
    w = random_layer(rng, 4, 6)
    for k in list(w):
        if k.startswith(("attn.", "ffn.")):
            w[k] = f64(np.zeros(w[k].shape))
    h = f64(rng.normal(size=(5, 4)))
    got = encoder_layer(h, w, 2).data
    once = tn.layer_norm(h, w["norm1.gamma"], w["norm1.beta"])
    expected = tn.layer_norm(once, w["norm2.gamma"], w["norm2.beta"]).data
    np.testing.assert_array_equal(got, expected)


def test_encoder_layer_composition():
    rng = np.random.default_rng(5)
    w = random_layer(rng, 8, 12)
    h = f64(rng.normal(size=(6, 8)))
    attn = {k[5:]: v for k, v in w.items() if k.startswith("attn.")}
    ffw = {k[4:]: v for k, v in w.items() if k.startswith("ffn.")}
    mid = tn.layer_norm(h + mhsa(h, attn, 2), w["norm1.gamma"], w["norm1.beta"])
    expected = tn.layer_norm(mid + ffn(mid, ffw), w["norm2.gamma"], w["norm2.beta"]).data
    np.testing.assert_array_equal(encoder_layer(h, w, 2).data, expected)


@pytest.fixture
def model():
    return CompletionTransformer(TINY, seed=11)


@pytest.fixture
def prefilled(global_corpus):
    mask = make_mask(INBETWEEN, 15, 40)
    return fill_unknown(global_corpus[0], mask), mask


def test_complete_is_single_pass_and_deterministic(model, prefilled):
    seq, mask = prefilled
    a = model.complete(seq, mask)
    assert model.encoder_passes == 1
    b = model.complete(seq, mask)
    assert model.encoder_passes == 2
    np.testing.assert_array_equal(a.positions, b.positions)
    np.testing.assert_array_equal(a.rotations, b.rotations)
    assert a.positions.shape == seq.positions.shape
    np.testing.assert_allclose(np.linalg.norm(a.rotations, axis=-1), 1.0, atol=1e-6)


@pytest.mark.parametrize("kind, param", [(INBETWEEN, 5), ("infill", 7), ("blend", 12)])
def test_output_shape_for_every_scenario(model, global_corpus, kind, param):
    mask = make_mask(kind, param, 40)
    out = model.complete(fill_unknown(global_corpus[1], mask), mask)
    assert out.positions.shape == (40, 5, 3) and out.rotations.shape == (40, 5, 4)


def test_ignored_content_is_invisible(model, prefilled):
    seq, mask = prefilled
    noisy = seq.copy()
    ign = mask.labels == IGNORED
    noisy.positions[ign] = np.random.default_rng(0).normal(size=noisy.positions[ign].shape) * 100
    zeroed = seq.copy()
    zeroed.positions[ign] = 0.0
    np.testing.assert_array_equal(model.complete(noisy, mask).positions,
                                  model.complete(zeroed, mask).positions)


def test_label_swap_changes_output(model, prefilled):
    seq, mask = prefilled
    labels = mask.labels.copy()
    labels[3] = UNKNOWN
    a = model.complete(seq, mask).positions
    b = model.complete(seq, labels).positions
    assert not np.array_equal(a, b)


def test_attention_rows_sum_to_one(model, prefilled):
    seq, mask = prefilled
    rows = []
    model.attention_hook = lambda i, attn: rows.append((i, attn))
    model.complete(seq, mask)
    assert [i for i, _ in rows] == [0, 1]
    for _, attn in rows:
        assert attn.shape == (2, 40, 40)
        np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-5)


def test_every_parameter_receives_gradient(model, prefilled):
    seq, mask = prefilled
    x = model.encode_features(seq.positions, seq.rotations, mask.labels)
    y = model.forward(x, mask.labels)
    loss = (model.decode_positions(y) - seq.positions).abs().mean()
    tn.backward(loss)
    for name, p in model.params.items():
        assert p.grad is not None and np.linalg.norm(p.grad) > 0, name


def test_batch_matches_single(model, global_corpus):
    mask = make_mask(INBETWEEN, 10, 40)
    seqs = [fill_unknown(s, mask) for s in global_corpus]
    pos = np.stack([s.positions for s in seqs])
    rot = np.stack([s.rotations for s in seqs])
    bp, _ = model.complete_arrays(pos, rot, mask.labels)
    for i, s in enumerate(seqs):
        np.testing.assert_allclose(bp[i], model.complete(s, mask).positions, atol=1e-4)


def test_shape_errors(model, prefilled):
    seq, mask = prefilled
    with pytest.raises(MaskLengthMismatch):
        model.complete(seq, mask.labels[:-1])
    too_long = MotionSequence(np.zeros((60, 5, 3)), np.tile([0, 0, 0, 1.0], (60, 5, 1)))
    with pytest.raises(ShapeError):
        model.complete(too_long, make_mask(INBETWEEN, 5, 60))
    with pytest.raises(ShapeError):
        CompletionTransformer(TINY, params={"input_conv.weight": np.zeros(3)})

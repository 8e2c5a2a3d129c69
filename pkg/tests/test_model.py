from dataclasses import fields

import numpy as np
import pytest
from numpy import testing as npt

from conftest import tiny_model_config, tiny_train_config
from src.autodiff import ops
from src.autodiff.gradcheck import finite_diff_check
from src.autodiff.tensor import Tensor, backward
from src.data.scene import Region, SceneExample
from src.data.vocab import SEP_ID, STOP_ID, text_slots
from src.masking.attention import build_bidirectional_mask, build_seq2seq_mask, text_start
from src.masking.schedule import Objective
from src.model.embeddings import assemble_input, assemble_scenes, embed_region, segment_row
from src.model.heads import lm_logits, pretext_logits, vqa_logits
from src.model.settings import make_model_config, trunk_mismatches
from src.model.transformer import forward, masked_self_attention, transformer_block
from src.model.weights import ModelWeights
from src.training.objectives import masked_lm_loss
from src.utils.errors import ConfigError, ShapeError

N_CLASSES = 16


def np_layer_norm(x, gain, bias, eps=1e-12):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def make_region(rng, d_in=32):
    probs = rng.dirichlet(np.ones(N_CLASSES))
    x1, y1 = rng.uniform(0, 0.5, 2)
    x2, y2 = x1 + 0.3, y1 + 0.2
    return Region(rng.normal(size=d_in), probs, np.array([x1, y1, x2, y2, (x2 - x1) * (y2 - y1)]))


def small_scene(N=2, seed=0, caption=(6, 7)):
    rng = np.random.default_rng(seed)
    return SceneExample(scene_id=f"s{seed}", regions=[make_region(rng) for _ in range(N)],
                        caption=list(caption), qa=[])


def random_weights(cfg, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    weights = ModelWeights.initialize(cfg, rng)
    for name, tensor in weights.items():
        if name.endswith(("gain",)):
            continue
        tensor.data = rng.normal(0.0, scale, size=tensor.shape)
    return weights


def zero_tables(weights):
    for name, tensor in weights.items():
        if name.startswith("emb."):
            tensor.data = np.zeros(tensor.shape)


# Configuration

def test_model_config_validation():
    with pytest.raises(ConfigError):
        make_model_config(d=15, heads=2)
    with pytest.raises(ConfigError):
        make_model_config(d=16, heads=3)
    with pytest.raises(ConfigError):
        make_model_config(region_pretext=True, class_probs_as_input=True)
    with pytest.raises(ConfigError):
        make_model_config(unknown_field=1)
    cfg = make_model_config(N=2, T=2)
    assert cfg.U == 7
    assert cfg.max_U == 7


def test_trunk_mismatches():
    a = make_model_config(d=16, heads=2, ffn=32)
    b = make_model_config(d=32, heads=2, ffn=32, dropout=0.3)
    assert set(trunk_mismatches(a, b)) == {"d"}


# Embeddings

def test_region_embedding_without_branches():
    cfg = tiny_model_config(40, N=2, T=2)
    weights = random_weights(cfg)
    weights["emb.W_p"].data = np.zeros(weights["emb.W_p"].shape)
    region = make_region(np.random.default_rng(1))
    out = embed_region(region, weights.tables).data
    npt.assert_allclose(out, weights["emb.W_r"].data @ region.features, atol=1e-12)


def test_region_embedding_oracle():
    cfg = tiny_model_config(40, N=2, T=2)
    weights = random_weights(cfg, seed=2)
    w = {n: t.data for n, t in weights.items()}
    region = make_region(np.random.default_rng(3))
    c = np_layer_norm(w["emb.W_c"] @ region.class_probs, w["emb.ln_c.gain"], w["emb.ln_c.bias"])
    g = np_layer_norm(w["emb.W_g"] @ region.geometry, w["emb.ln_g.gain"], w["emb.ln_g.bias"])
    expected = w["emb.W_r"] @ region.features + w["emb.W_p"] @ np.concatenate([c, g])
    npt.assert_allclose(embed_region(region, weights.tables).data, expected, atol=1e-10)


def test_region_embedding_shape_error():
    cfg = tiny_model_config(40, N=2, T=2)
    weights = random_weights(cfg)
    region = make_region(np.random.default_rng(0), d_in=8)
    with pytest.raises(ShapeError):
        embed_region(region, weights.tables)


def test_input_layout_for_small_sequence():
    cfg = tiny_model_config(40, N=2, T=2)
    weights = random_weights(cfg)
    zero_tables(weights)
    token = np.arange(40 * cfg.d, dtype=np.float64).reshape(40, cfg.d)
    weights["emb.token"].data = token
    scene = small_scene()
    inp = assemble_input(scene, text_slots(scene.caption, 2), Objective.BIDIRECTIONAL, weights.tables, cfg)
    assert inp.U == 7
    assert inp.H0.shape == (1, 7, cfg.d)
    assert inp.text_start == 4
    H0 = inp.H0.data[0]
    npt.assert_array_equal(H0[3], token[SEP_ID])
    npt.assert_array_equal(H0[6], token[STOP_ID])
    npt.assert_array_equal(H0[4], token[6])
    npt.assert_array_equal(H0[1:3], np.zeros((2, cfg.d)))


def test_zero_tables_give_zero_input():
    cfg = tiny_model_config(40, N=2, T=2)
    weights = random_weights(cfg)
    zero_tables(weights)
    scene = small_scene()
    inp = assemble_input(scene, text_slots(scene.caption, 2), Objective.SEQ2SEQ, weights.tables, cfg)
    npt.assert_array_equal(inp.H0.data, np.zeros((1, 7, cfg.d)))


def test_text_length_mismatch():
    cfg = tiny_model_config(40, N=2, T=2)
    weights = random_weights(cfg)
    with pytest.raises(ShapeError, match="T=2"):
        assemble_input(small_scene(), [6, 7], Objective.SEQ2SEQ, weights.tables, cfg)


def test_segment_rows_depend_on_objective():
    assert segment_row(Objective.SEQ2SEQ, 0) == 0
    assert segment_row(Objective.BIDIRECTIONAL, 1) == 3
    cfg = tiny_model_config(40, N=2, T=2)
    weights = random_weights(cfg)
    scene = small_scene()
    slots = text_slots(scene.caption, 2)
    a = assemble_input(scene, slots, Objective.SEQ2SEQ, weights.tables, cfg).H0.data[0]
    b = assemble_input(scene, slots, Objective.BIDIRECTIONAL, weights.tables, cfg).H0.data[0]
    seg = weights["emb.segment"].data
    npt.assert_allclose(a[0] - b[0], seg[0] - seg[2], atol=1e-12)
    npt.assert_allclose(a[5] - b[5], seg[1] - seg[3], atol=1e-12)


def test_region_positional_none_drops_region_positions():
    cfg = tiny_model_config(40, N=2, T=2, region_positional="none")
    weights = random_weights(cfg)
    for name in ("emb.W_r", "emb.W_p", "emb.token", "emb.segment"):
        weights[name].data = np.zeros(weights[name].shape)
    scene = small_scene()
    H0 = assemble_input(scene, text_slots(scene.caption, 2), Objective.SEQ2SEQ, weights.tables, cfg).H0.data[0]
    npt.assert_array_equal(H0[1:3], np.zeros((2, cfg.d)))
    npt.assert_array_equal(H0[0], weights["emb.position"].data[0])


def test_sequence_longer_than_position_table():
    cfg = tiny_model_config(40, N=2, T=2, max_U=5)
    weights = random_weights(cfg)
    scene = small_scene()
    with pytest.raises(ConfigError):
        assemble_input(scene, text_slots(scene.caption, 2), Objective.SEQ2SEQ, weights.tables, cfg)


def test_every_embedding_table_gets_gradient(scenes, vocab):
    cfg = tiny_train_config(len(vocab))
    weights = random_weights(cfg.model, seed=3)
    loss, _, plans = masked_lm_loss(scenes[:2], Objective.SEQ2SEQ, weights, cfg,
                                    np.random.default_rng(0), vocab)
    assert sum(len(p.masked_positions) for p in plans) > 0
    backward(loss)
    for name in weights.names("emb."):
        grad = weights[name].grad
        assert grad is not None and np.any(grad != 0.0), name
    segment = weights["emb.segment"].grad
    for modality in (0, 1):
        assert np.any(segment[segment_row(Objective.SEQ2SEQ, modality)] != 0.0)
        npt.assert_array_equal(segment[segment_row(Objective.BIDIRECTIONAL, modality)], 0.0)


def test_region_embedding_is_affine_in_features():
    cfg = tiny_model_config(40, N=2, T=2)
    weights = random_weights(cfg, seed=7)
    rng = np.random.default_rng(8)
    region = make_region(rng)
    r1, r2 = rng.normal(size=32), rng.normal(size=32)

    def embed(features):
        return embed_region(Region(features, region.class_probs, region.geometry), weights.tables).data

    base = embed(np.zeros(32))
    npt.assert_allclose(embed(2.0 * r1 - 3.0 * r2) - base,
                        2.0 * (embed(r1) - base) - 3.0 * (embed(r2) - base), atol=1e-10)
    npt.assert_allclose(embed(r1) - embed(r2), weights["emb.W_r"].data @ (r1 - r2), atol=1e-10)


# Transformer

def test_single_position_attention():
    cfg = tiny_model_config(40)
    layer = random_weights(cfg).layer(0)
    h = np.random.default_rng(0).normal(size=(1, 1, cfg.d))
    out = masked_self_attention(Tensor(h), np.ones((1, 1), bool), layer, cfg.heads).data
    npt.assert_allclose(out[0, 0], layer.W_O.data @ layer.W_V.data @ h[0, 0], atol=1e-12)


def test_zero_queries_give_uniform_attention():
    cfg = tiny_model_config(40, N=2, T=2)
    layer = random_weights(cfg).layer(0)
    layer.W_Q.data = np.zeros_like(layer.W_Q.data)
    layer.W_K.data = np.zeros_like(layer.W_K.data)
    allow = build_seq2seq_mask(2, 2).allow
    H = Tensor(np.random.default_rng(1).normal(size=(1, 7, cfg.d)))
    _, A = masked_self_attention(H, allow, layer, cfg.heads, return_weights=True)
    expected = allow / allow.sum(axis=1, keepdims=True)
    for head in range(cfg.heads):
        npt.assert_allclose(A.data[0, head], expected, atol=1e-15)


def test_attention_oracle_per_head():
    cfg = tiny_model_config(40, N=2, T=2)
    layer = random_weights(cfg, seed=5).layer(0)
    allow = build_seq2seq_mask(2, 2, pad=[False, False, True]).allow
    H = np.random.default_rng(2).normal(size=(7, cfg.d))
    dk = cfg.d // cfg.heads
    Q, K, V = (H @ w.data.T for w in (layer.W_Q, layer.W_K, layer.W_V))
    heads = []
    for i in range(cfg.heads):
        cols = slice(i * dk, (i + 1) * dk)
        scores = Q[:, cols] @ K[:, cols].T / np.sqrt(dk)
        scores = np.where(allow, scores, -np.inf)
        p = np.exp(scores - scores.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        heads.append(p @ V[:, cols])
    expected = np.concatenate(heads, axis=1) @ layer.W_O.data.T
    out = masked_self_attention(Tensor(H), allow, layer, cfg.heads).data
    npt.assert_allclose(out, expected, atol=1e-10)


def test_zero_layers_return_input(scenes, vocab):
    cfg = tiny_model_config(len(vocab), layers=0)
    weights = random_weights(cfg)
    text = np.array([text_slots(s.caption, cfg.T) for s in scenes[:2]])
    inp = assemble_scenes(scenes[:2], text, Objective.SEQ2SEQ, weights.tables, cfg)
    H = forward(inp, build_bidirectional_mask(cfg.N, cfg.T), weights)
    npt.assert_array_equal(H.data, inp.H0.data)


def test_zero_layer_weights_apply_two_norms(scenes, vocab):
    cfg = tiny_model_config(len(vocab))
    weights = random_weights(cfg)
    for name, tensor in weights.items():
        if name.startswith("layer0.") and "gain" not in name:
            tensor.data = np.zeros(tensor.shape)
    text = np.array([text_slots(scenes[0].caption, cfg.T)])
    inp = assemble_scenes(scenes[:1], text, Objective.BIDIRECTIONAL, weights.tables, cfg)
    H = forward(inp, build_bidirectional_mask(cfg.N, cfg.T), weights).data
    ones, zeros = np.ones(cfg.d), np.zeros(cfg.d)
    expected = np_layer_norm(np_layer_norm(inp.H0.data, ones, zeros), ones, zeros)
    npt.assert_allclose(H, expected, atol=1e-9)


def test_seq2seq_is_causal_bitwise(scenes, vocab):
    cfg = tiny_model_config(len(vocab), layers=2)
    weights = random_weights(cfg, seed=9)
    start = text_start(cfg.N)
    mask = build_seq2seq_mask(cfg.N, cfg.T)
    base = np.array([text_slots(scenes[0].caption, cfg.T)])
    reference = forward(assemble_scenes(scenes[:1], base, Objective.SEQ2SEQ, weights.tables, cfg),
                        mask, weights).data
    for slot in (0, 3, cfg.T):
        changed = base.copy()
        changed[0, slot] = 6 if base[0, slot] != 6 else 7
        H = forward(assemble_scenes(scenes[:1], changed, Objective.SEQ2SEQ, weights.tables, cfg),
                    mask, weights).data
        assert np.array_equal(H[0, :start + slot], reference[0, :start + slot])
        assert not np.array_equal(H[0, start + slot], reference[0, start + slot])


def test_attention_rows_are_stochastic(scenes, vocab):
    cfg = tiny_model_config(len(vocab), layers=2)
    weights = random_weights(cfg, seed=4)
    text = np.array([text_slots(s.caption, cfg.T) for s in scenes[:3]])
    inp = assemble_scenes(scenes[:3], text, Objective.SEQ2SEQ, weights.tables, cfg)
    allow = build_seq2seq_mask(cfg.N, cfg.T).allow
    _, attention = forward(inp, allow, weights, return_attention=True)
    assert len(attention) == 2
    for A in attention:
        npt.assert_allclose(A.data.sum(axis=-1), 1.0, atol=1e-12)
        assert (A.data[..., ~allow] == 0.0).all()


def test_forward_rejects_long_sequence(scenes, vocab):
    cfg = tiny_model_config(len(vocab))
    weights = random_weights(cfg)
    text = np.array([text_slots(scenes[0].caption, cfg.T)])
    inp = assemble_scenes(scenes[:1], text, Objective.SEQ2SEQ, weights.tables, cfg)
    short = tiny_model_config(len(vocab), T=2)
    with pytest.raises(ConfigError):
        forward(inp, build_seq2seq_mask(cfg.N, cfg.T), weights, short)


def test_single_head_with_identity_output_is_plain_attention():
    cfg = tiny_model_config(40, N=2, T=2, heads=1)
    layer = random_weights(cfg, seed=11).layer(0)
    layer.W_O.data = np.eye(cfg.d)
    allow = build_seq2seq_mask(2, 2).allow
    H = np.random.default_rng(12).normal(size=(7, cfg.d))
    Q, K, V = (H @ w.data.T for w in (layer.W_Q, layer.W_K, layer.W_V))
    scores = np.where(allow, Q @ K.T / np.sqrt(cfg.d), -np.inf)
    p = np.exp(scores - scores.max(axis=1, keepdims=True))
    expected = (p / p.sum(axis=1, keepdims=True)) @ V
    npt.assert_allclose(masked_self_attention(Tensor(H), allow, layer, 1).data, expected, atol=1e-10)


def test_transformer_block_gradient():
    cfg = tiny_model_config(40, N=2, T=2)
    layer = random_weights(cfg, seed=13, scale=0.3).layer(0)
    rng = np.random.default_rng(14)
    H = Tensor(rng.normal(size=(1, 7, cfg.d)), requires_grad=True)
    readout = Tensor(rng.normal(size=(1, 7, cfg.d)))
    allow = build_seq2seq_mask(2, 2).allow
    params = [H] + [getattr(layer, f.name) for f in fields(layer)]

    def loss():
        return ops.sum(ops.mul(transformer_block(H, allow, layer, cfg), readout))

    assert finite_diff_check(loss, params, max_coords=12, noise_floor=1e-6) < 1e-4


def test_visual_columns_depend_on_mask(scenes, vocab):
    cfg = tiny_model_config(len(vocab), layers=2)
    weights = random_weights(cfg, seed=15)
    text = np.array([text_slots(scenes[0].caption, cfg.T)])
    inp = assemble_scenes(scenes[:1], text, Objective.SEQ2SEQ, weights.tables, cfg)
    bidirectional = forward(inp, build_bidirectional_mask(cfg.N, cfg.T), weights).data
    seq2seq = forward(inp, build_seq2seq_mask(cfg.N, cfg.T), weights).data
    visual = slice(0, cfg.N + 1)
    assert not np.allclose(bidirectional[0, visual], seq2seq[0, visual])


# Têtes

def _final_states(cfg, weights, scenes):
    text = np.array([text_slots(s.caption, cfg.T) for s in scenes])
    inp = assemble_scenes(scenes, text, Objective.BIDIRECTIONAL, weights.tables, cfg)
    return forward(inp, build_bidirectional_mask(cfg.N, cfg.T), weights)


def test_lm_logits_shape_and_bounds(scenes, vocab):
    cfg = tiny_model_config(len(vocab))
    weights = random_weights(cfg)
    H = _final_states(cfg, weights, scenes[:2])
    start = text_start(cfg.N)
    logits = lm_logits(H, [start, start + 2], weights, batch_index=[0, 1])
    assert logits.shape == (2, len(vocab))
    with pytest.raises(IndexError):
        lm_logits(H, [start - 1], weights)
    with pytest.raises(IndexError):
        lm_logits(H, [cfg.U], weights)


def test_lm_head_is_tied_to_token_table(scenes, vocab):
    cfg = tiny_model_config(len(vocab))
    weights = random_weights(cfg, seed=6)
    H = _final_states(cfg, weights, scenes[:1])
    position = text_start(cfg.N) + 1
    w = weights.tensors
    h = ops.layer_norm(ops.gelu(ops.linear(ops.index(H, (0, position)), w["lm.dense.W"], w["lm.dense.b"])),
                       w["lm.ln.gain"], w["lm.ln.bias"], cfg.layer_norm_eps).data
    token = 9
    before = lm_logits(H, [position], weights).data[0, token]
    eps = 1e-3
    w["emb.token"].data[token] += eps * h
    after = lm_logits(H, [position], weights).data[0, token]
    assert after > before
    assert after - before == pytest.approx(eps * float(h @ h), rel=1e-9)


def test_lm_cross_entropy_closed_form(scenes, vocab):
    cfg = tiny_model_config(len(vocab))
    weights = random_weights(cfg)
    weights["emb.token"].data = np.zeros(weights["emb.token"].shape)
    bias = np.random.default_rng(0).normal(size=len(vocab))
    weights["lm.bias"].data = bias
    start = text_start(cfg.N)
    H = Tensor(np.random.default_rng(1).normal(size=(1, cfg.U, cfg.d)))
    targets = np.array([6, 7, 8, 9, STOP_ID])
    logits = lm_logits(H, start + np.arange(5), weights)
    loss = ops.cross_entropy(logits, targets).item()
    log_z = np.log(np.exp(bias - bias.max()).sum()) + bias.max()
    assert loss == pytest.approx(float(np.mean(log_z - bias[targets])), rel=1e-12)


def test_vqa_head_oracle(scenes, vocab):
    cfg = tiny_model_config(len(vocab))
    weights = random_weights(cfg, seed=8)
    H = _final_states(cfg, weights, scenes[:2])
    w = {n: t.data for n, t in weights.items()}
    z = H.data[:, 0] * H.data[:, cfg.N + 1]
    hidden = np.maximum(z @ w["vqa.W_1"].T + w["vqa.b_1"], 0.0)
    expected = hidden @ w["vqa.W_2"].T + w["vqa.b_2"]
    npt.assert_allclose(vqa_logits(H, weights).data, expected, atol=1e-12)


def test_pretext_head_requires_flag(scenes, vocab):
    cfg = tiny_model_config(len(vocab))
    weights = random_weights(cfg)
    H = _final_states(cfg, weights, scenes[:1])
    assert "pretext.W" not in weights
    with pytest.raises(ConfigError):
        pretext_logits(H, [0], [0], weights)

    cfg = tiny_model_config(len(vocab), region_pretext=True, class_probs_as_input=False)
    weights = random_weights(cfg)
    H = _final_states(cfg, weights, scenes[:1])
    assert pretext_logits(H, [0, 0], [1, 3], weights).shape == (2, N_CLASSES)

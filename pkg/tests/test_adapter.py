import numpy as np
import pytest

from modkit.adapter import (
    AdapterConfig,
    ModAdapter,
    cross_attention,
    matched_single_hidden,
    sinusoidal_pe,
)
from modkit.encoders import Encoders, default_vocabulary
from modkit.scenes import SceneSpec, render_scene
from modkit.tensor import tensor

CONCEPT_WORDS = ["circle", "square", "triangle", "cross", "texture", "tone", "light"]


@pytest.fixture(scope="module")
def enc():
    return Encoders(default_vocabulary(), seed=0)


@pytest.fixture()
def adapter(enc):
    a = ModAdapter(AdapterConfig(), enc, seed=1)
    a.fit_routing(CONCEPT_WORDS, seed=0)
    return a


def concept_image():
    return render_scene(SceneSpec("circle", "red", "stripes", "warm", "left", 5))


def test_sinusoidal_pe_matches_closed_form():
    np.testing.assert_allclose(
        sinusoidal_pe(1, 4), [np.sin(1), np.cos(1), np.sin(0.01), np.cos(0.01)], atol=1e-12
    )
    np.testing.assert_array_equal(sinusoidal_pe(0, 6), [0, 1, 0, 1, 0, 1])
    with pytest.raises(ValueError):
        sinusoidal_pe(1, 5)


def test_queries_identical_without_pe(adapter, enc):
    adapter.query_pe = np.zeros_like(adapter.query_pe)
    q = adapter.build_queries(enc.neutral_feature("tone")).data
    np.testing.assert_array_equal(q, np.tile(q[0], (len(q), 1)))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_queries_distinct_with_pe(enc, seed):
    adapter = ModAdapter(AdapterConfig(), enc, seed=seed)
    q = adapter.build_queries(enc.neutral_feature("tone")).data
    assert q.shape == (6, 32)
    dists = np.linalg.norm(q[:, None] - q[None, :], axis=2)
    np.fill_diagonal(dists, np.inf)
    assert dists.min() > 1e-6


def test_queries_reject_bad_width(adapter):
    with pytest.raises(ValueError):
        adapter.build_queries(np.zeros(16))


def test_cross_attention_single_pair():
    q = tensor(np.random.default_rng(0).standard_normal((5, 8)))
    k = tensor(np.random.default_rng(1).standard_normal((1, 8)))
    v = tensor(np.random.default_rng(2).standard_normal((1, 8)))
    out = cross_attention(q, k, v).data
    np.testing.assert_allclose(out, np.tile(v.data, (5, 1)), atol=1e-12)


def test_cross_attention_identical_keys_mean_value():
    rng = np.random.default_rng(3)
    q = tensor(rng.standard_normal((4, 8)))
    k = tensor(np.tile(rng.standard_normal(8), (6, 1)))
    v = tensor(rng.standard_normal((6, 8)))
    out = cross_attention(q, k, v).data
    np.testing.assert_allclose(out, np.tile(v.data.mean(axis=0), (4, 1)), atol=1e-12)


def test_cross_attention_token_permutation(adapter, enc):
    feats = enc.image.encode_image_patches(concept_image())
    q = adapter.build_queries(enc.neutral_feature("tone"))
    a = adapter.vl_cross_attention(q, feats, 0).data
    perm = np.random.default_rng(4).permutation(len(feats))
    b = adapter.vl_cross_attention(q, feats[perm], 0).data
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_cross_attention_empty_keys():
    q = tensor(np.zeros((2, 8)))
    with pytest.raises(ValueError):
        cross_attention(q, tensor(np.zeros((0, 8))), tensor(np.zeros((0, 8))))


def test_moe_zero_expert_no_residual_gives_zero(adapter):
    for name in ("expert2_w1", "expert2_b1", "expert2_w2", "expert2_b2"):
        adapter.params[f"block0/{name}"].data[:] = 0.0
    feats = tensor(np.random.default_rng(5).standard_normal((6, 32)))
    out = adapter.moe_forward(feats, expert=2, block=0, residual=False)
    np.testing.assert_array_equal(out.data, np.zeros((6, 32)))
    with_res = adapter.moe_forward(feats, expert=2, block=0)
    np.testing.assert_array_equal(with_res.data, feats.data)


def test_moe_output_shape(adapter):
    feats = tensor(np.zeros((6, 32)))
    assert adapter.moe_forward(feats, expert=1).shape == (6, 32)
    with pytest.raises(IndexError):
        adapter.moe_forward(feats, expert=4)


def test_gradients_confined_to_routed_expert(adapter, enc):
    directions, _ = adapter.predict_directions(concept_image(), "tone")
    (directions * directions).sum().backward()
    routed = adapter.routing_table.route_word("tone")
    for name in adapter.params.names():
        t = adapter.params[name]
        if "expert" in name:
            expert = int(name.split("expert")[1].split("_")[0])
            if expert == routed:
                assert t.grad is not None, name
            else:
                assert t.grad is None, name
        elif "block" in name or "query" in name or "out" in name:
            assert t.grad is not None, name


def test_directions_zero_when_features_equal_neutral(adapter, enc):
    neutral = enc.neutral_feature("tone")
    adapter.params["out_proj"].data[:] = 0.0
    adapter.params["out_bias"].data = neutral.copy()
    directions, features = adapter.predict_directions(concept_image(), "tone")
    np.testing.assert_allclose(features.data, np.tile(neutral, (6, 1)), atol=1e-12)
    np.testing.assert_allclose(directions.data, 0.0, atol=1e-12)


def test_predict_directions_shape_and_determinism(adapter):
    img = concept_image()
    a, _ = adapter.predict_directions(img, "texture")
    b, _ = adapter.predict_directions(img, "texture")
    assert a.shape == (6, 32)
    np.testing.assert_array_equal(a.data, b.data)


def test_predict_rejects_unknown_word(adapter):
    with pytest.raises(KeyError):
        adapter.predict_directions(concept_image(), "zebra")


def test_routing_table_unchanged_after_updates(adapter):
    before = adapter.routing_table.content_hash()
    for t in adapter.params.tensors():
        t.data += 0.1  # simulate training updates
    assert adapter.routing_table.content_hash() == before


def test_no_moe_parameter_count_within_one_percent(enc):
    full = ModAdapter(AdapterConfig(), enc, seed=0)
    single = ModAdapter(AdapterConfig(), enc, seed=0, variant="no_moe")
    assert abs(full.params.count() - single.params.count()) / full.params.count() < 0.01


def test_matched_hidden_is_positive():
    assert matched_single_hidden(AdapterConfig()) > AdapterConfig().expert_hidden


def test_linear_gating_routes_and_tracks(enc):
    adapter = ModAdapter(AdapterConfig(), enc, seed=2, variant="linear_gating")
    directions, _ = adapter.predict_directions(concept_image(), "tone")
    assert directions.shape == (6, 32)
    assert len(adapter.routing_events) == 1
    assert 0 <= adapter.routing_events[0] < 4


def test_unknown_variant_rejected(enc):
    with pytest.raises(ValueError):
        ModAdapter(AdapterConfig(), enc, variant="bogus")


def test_routing_required_before_forward(enc):
    adapter = ModAdapter(AdapterConfig(), enc, seed=3)
    with pytest.raises(RuntimeError):
        adapter.predict_directions(concept_image(), "tone")

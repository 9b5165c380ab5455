import numpy as np
import pytest

from modkit.dit import DiTConfig, MiniDiT, ModulationState, NoiseSchedule
from modkit.encoders import Encoders, default_vocabulary
from modkit.gradcheck import grad_check
from modkit.tensor import layer_norm, mse, tensor

PROMPT = "a red circle on stripes texture with warm tone and left light".split()


@pytest.fixture(scope="module")
def enc():
    return Encoders(default_vocabulary(), seed=0)


@pytest.fixture(scope="module")
def model(enc):
    return MiniDiT(DiTConfig(), enc, seed=1)


def tiny_model(enc, **overrides):
    cfg = dict(n_blocks=2, d_model=16, heads=2, d_mod=8, d_time=8,
               image_size=8, patch=4, timesteps=10)
    cfg.update(overrides)
    return MiniDiT(DiTConfig(**cfg), Encoders(enc.vocab, d_mod=8, seed=3), seed=2)


def test_config_validation():
    with pytest.raises(ValueError):
        DiTConfig(d_model=30, heads=4)
    with pytest.raises(ValueError):
        DiTConfig(timesteps=1)


def test_schedule_monotonic(model):
    bars = model.schedule.alpha_bars
    assert np.all(np.diff(bars) < 0)
    np.testing.assert_allclose(bars[0], 1.0 - model.cfg.beta_start)


def test_schedule_rejects_bad_range():
    with pytest.raises(ValueError):
        NoiseSchedule(10, 0.0, 0.02)
    with pytest.raises(ValueError):
        NoiseSchedule(10, 0.5, 0.2)


def test_timestep_embedding_range(model):
    with pytest.raises(ValueError):
        model.timestep_embedding(-1)
    with pytest.raises(ValueError):
        model.timestep_embedding(model.cfg.timesteps)


def test_timestep_embeddings_pairwise_distinct(model):
    embs = np.stack([model.timestep_embedding(t) for t in range(model.cfg.timesteps)])
    dists = np.linalg.norm(embs[:, None] - embs[None, :], axis=2)
    np.fill_diagonal(dists, np.inf)
    assert dists.min() > 1e-9


def test_base_modulation_terms(model):
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(32), rng.standard_normal(32)
    np.testing.assert_array_equal(model.base_modulation(a, np.zeros(32)), a)
    np.testing.assert_array_equal(model.base_modulation(np.zeros(32), b), b)
    np.testing.assert_allclose(
        model.base_modulation(a, b), model.base_modulation(b, a), atol=0
    )
    with pytest.raises(ValueError):
        model.base_modulation(a, np.zeros(16))


def make_state(model, n=1):
    return model.new_state(np.full(n, 3), [PROMPT] * n)


def test_apply_directions_scale_zero_is_noop(model):
    state = make_state(model)
    base = state.block_vectors(0).data.copy()
    state.apply_concept_directions(8, np.ones((6, 32)), scale=0.0)
    assert state.terms == []
    np.testing.assert_array_equal(state.block_vectors(0).data, base)


def test_apply_directions_zero_direction_is_noop(model):
    state = make_state(model)
    base = state.block_vectors(2).data
    state.apply_concept_directions(8, np.zeros((6, 32)), scale=1.0)
    out = state.block_vectors(2).data
    np.testing.assert_array_equal(np.broadcast_to(base, out.shape), out)


def test_apply_directions_compose_independently(model):
    d1, d2 = np.ones((6, 32)), 2.0 * np.ones((6, 32))
    a = make_state(model)
    a.apply_concept_directions(5, d1, 1.0)
    a.apply_concept_directions(8, d2, 1.0)
    b = make_state(model)
    b.apply_concept_directions(8, d2, 1.0)
    b.apply_concept_directions(5, d1, 1.0)
    np.testing.assert_array_equal(a.block_vectors(1).data, b.block_vectors(1).data)
    # each token sees only its own adjustment
    table = a.block_vectors(1).data[0]
    base = make_state(model).block_vectors(1).data[0, 0]
    np.testing.assert_array_equal(table[5], base + 1.0)
    np.testing.assert_array_equal(table[8], base + 2.0)
    np.testing.assert_array_equal(table[3], base)


def test_apply_directions_index_out_of_prompt(model):
    with pytest.raises(IndexError):
        make_state(model).apply_concept_directions(12, np.zeros((6, 32)), 1.0)


def test_adaln_identity_parameters(model):
    state = make_state(model)
    x = tensor(np.random.default_rng(1).standard_normal((1, 28, 64)))
    w = model.params["block0/attn_mod_w"]
    saved = w.data.copy()
    w.data[:] = 0.0  # bias alone remains: scale=1, shift=0, gate=1
    out = model.adaln_modulate(x, state, 0)
    w.data = saved
    np.testing.assert_allclose(out.data, layer_norm(x).data, atol=1e-12)


def test_adaln_gate_zero_zeroes_output(model):
    state = make_state(model)
    x = tensor(np.random.default_rng(2).standard_normal((1, 28, 64)))
    w = model.params["block1/attn_mod_w"]
    b = model.params["block1/attn_mod_b"]
    saved_w, saved_b = w.data.copy(), b.data.copy()
    w.data[:] = 0.0
    b.data[2 * 64 :] = 0.0  # gate slots
    out = model.adaln_modulate(x, state, 1)
    np.testing.assert_array_equal(out.data, np.zeros_like(out.data))
    w.data, b.data = saved_w, saved_b


def test_adaln_per_token_locality(model):
    # perturbing token 8's adjusted vector touches only row 8 of the output
    x = tensor(np.random.default_rng(3).standard_normal((1, 28, 64)))
    before = make_state(model)
    before.apply_concept_directions(8, np.zeros((6, 32)), 1.0)
    after = make_state(model)
    after.apply_concept_directions(8, np.random.default_rng(4).standard_normal((6, 32)), 1.0)
    a = model.adaln_modulate(x, before, 2).data[0]
    b = model.adaln_modulate(x, after, 2).data[0]
    changed = np.where(np.any(a != b, axis=1))[0]
    np.testing.assert_array_equal(changed, [8])


def test_joint_attention_single_token(model):
    x = np.random.default_rng(5).standard_normal((1, 1, 64))
    out = model.joint_attention(tensor(x), 0).data
    expected = x + (x @ model.params["block0/wv"].data) @ model.params["block0/wo"].data
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_joint_attention_uniform_tokens(model):
    # identical keys/values: every query mixes the same value row
    x = np.tile(np.random.default_rng(6).standard_normal((1, 1, 64)), (1, 9, 1))
    out = model.joint_attention(tensor(x), 3).data[0]
    np.testing.assert_allclose(out, np.tile(out[0], (9, 1)), atol=1e-10)


def test_joint_attention_image_permutation_invariance(model, enc):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((1, 28, 64))
    perm = 12 + rng.permutation(16)  # image rows only, position codes travel along
    xp = x.copy()
    xp[0, 12:] = x[0, perm]
    a = model.joint_attention(tensor(x), 0).data[0, :12]
    b = model.joint_attention(tensor(xp), 0).data[0, :12]
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_predict_noise_shape_and_determinism(model):
    rng = np.random.default_rng(8)
    x_t = rng.standard_normal((16, 16, 3))
    a = model.predict_noise(x_t, 5, PROMPT)
    b = model.predict_noise(x_t, 5, PROMPT)
    assert a.shape == (16, 16, 3)
    np.testing.assert_array_equal(a, b)


def test_predict_noise_scale_zero_bitwise(model):
    rng = np.random.default_rng(9)
    x_t = rng.standard_normal((16, 16, 3))
    dirs = rng.standard_normal((6, 32))
    plain = model.predict_noise(x_t, 7, PROMPT)
    injected = model.predict_noise(x_t, 7, PROMPT, concepts=[(8, dirs)], scale=0.0)
    np.testing.assert_array_equal(plain, injected)


def test_predict_noise_rejects_bad_token(model):
    with pytest.raises(IndexError):
        model.predict_noise(np.zeros((16, 16, 3)), 0, PROMPT,
                            concepts=[(25, np.zeros((6, 32)))])


def test_sample_deterministic_and_bounded(model):
    a = model.sample(PROMPT, steps=5, seed=11)
    b = model.sample(PROMPT, steps=5, seed=11)
    np.testing.assert_array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_sample_scale_zero_matches_unconditioned(model):
    dirs = np.random.default_rng(10).standard_normal((6, 32))
    plain = model.sample(PROMPT, steps=5, seed=13)
    injected = model.sample(PROMPT, concepts=[(8, dirs)], steps=5, seed=13, scale=0.0)
    np.testing.assert_array_equal(plain, injected)


def test_sample_rejects_too_many_steps(model):
    with pytest.raises(ValueError):
        model.sample(PROMPT, steps=model.cfg.timesteps + 1)


def test_full_block_gradient(enc):
    """Finite differences through one full modulated block."""
    model = tiny_model(enc)
    rng = np.random.default_rng(0)
    x_t = rng.standard_normal((1, 8, 8, 3))
    eps_target = tensor(rng.standard_normal((1, 8, 8, 3)))
    prompt = [PROMPT[:4]]

    def loss():
        state = model.new_state(np.array([2]), prompt)
        return mse(model.forward(x_t, prompt, state), eps_target)

    err = grad_check(loss, model.params.tensors(), eps=1e-5, max_elements=6, seed=1)
    assert err < 1e-5

import numpy as np
import pytest

from modkit.config import Config
from modkit.pipeline import (
    build_adapter,
    build_encoders,
    build_model,
    concept_words,
    load_checkpoint,
    save_checkpoint,
)
from modkit.scenes import make_sample, random_spec


@pytest.fixture(scope="module")
def cfg():
    return Config(n_blocks=2, d_model=32, heads=2, timesteps=10)


def test_checkpoint_roundtrip(cfg, tmp_path):
    enc = build_encoders(cfg)
    model = build_model(cfg, enc)
    adapter = build_adapter(cfg, enc)
    adapter.fit_routing(["tone", "texture", "light", "circle"], seed=0)
    path = tmp_path / "ckpt.modk"
    save_checkpoint(path, model, adapter)
    model2, adapter2 = load_checkpoint(path, cfg)
    assert model2.params.content_hash() == model.params.content_hash()
    assert adapter2.params.content_hash() == adapter.params.content_hash()
    assert adapter2.routing_table.content_hash() == adapter.routing_table.content_hash()
    assert adapter2.variant == "full"


def test_checkpoint_without_adapter(cfg, tmp_path):
    enc = build_encoders(cfg)
    model = build_model(cfg, enc)
    path = tmp_path / "bare.modk"
    save_checkpoint(path, model)
    model2, adapter2 = load_checkpoint(path, cfg)
    assert adapter2 is None
    assert model2.params.content_hash() == model.params.content_hash()


def test_checkpoint_rejects_foreign_file(cfg, tmp_path):
    from modkit.modk import write_modk

    path = tmp_path / "other.modk"
    write_modk(path, {"a": np.ones(3)})
    with pytest.raises(ValueError):
        load_checkpoint(path, cfg)


def test_concept_words_collects_all():
    rng = np.random.default_rng(0)
    samples = [make_sample(random_spec(rng)) for _ in range(40)]
    words = concept_words(samples)
    assert {"texture", "tone", "light"} <= set(words)
    assert set(words) & {"circle", "square", "triangle", "cross"}

import pytest

from modkit.config import Config, ConfigError, load_config


def write(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text, encoding="utf-8")
    return path


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_config(write(tmp_path, "\n# only a comment\n"))
    assert cfg == Config()


def test_override_key(tmp_path):
    cfg = load_config(write(tmp_path, "n_experts = 8\nlr = 0.01  # inline comment\n"))
    assert cfg.n_experts == 8
    assert cfg.lr == 0.01


def test_unknown_key_names_line(tmp_path):
    path = write(tmp_path, "n_experts = 4\nbogus_key = 3\n")
    with pytest.raises(ConfigError, match=r":2.*bogus_key"):
        load_config(path)


def test_malformed_line_rejected(tmp_path):
    with pytest.raises(ConfigError, match=r":1"):
        load_config(write(tmp_path, "just some words\n"))


def test_out_of_range_names_key(tmp_path):
    with pytest.raises(ConfigError, match="n_experts"):
        load_config(write(tmp_path, "n_experts = 0\n"))


def test_type_error_reported(tmp_path):
    with pytest.raises(ConfigError, match="expects int"):
        load_config(write(tmp_path, "n_blocks = six\n"))


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("MODKIT_SEED", "77")
    cfg = load_config(write(tmp_path, "seed = 3\n"))
    assert cfg.seed == 77


def test_cross_field_validation(tmp_path):
    with pytest.raises(ConfigError, match="beta_start"):
        load_config(write(tmp_path, "beta_start = 0.5\nbeta_end = 0.1\n"))
    with pytest.raises(ConfigError, match="divisible"):
        load_config(write(tmp_path, "d_model = 30\nheads = 4\n"))


def test_overrides_mapping():
    cfg = load_config(None, overrides={"n_experts": 6})
    assert cfg.n_experts == 6
    with pytest.raises(ConfigError):
        load_config(None, overrides={"nope": 1})

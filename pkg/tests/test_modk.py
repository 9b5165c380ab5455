import numpy as np
import pytest

from modkit.modk import ModkError, decode_text, encode_text, read_modk, write_modk
from modkit.ppm import read_ppm, write_ppm


def test_roundtrip_identity(tmp_path):
    rng = np.random.default_rng(0)
    sections = {
        "weights/layer0": rng.standard_normal((3, 4)),
        "meta/count": np.array([7], dtype=np.int64),
        "notes": encode_text("hello container"),
        "scalar": np.array(3.5),
    }
    path = tmp_path / "box.modk"
    write_modk(path, sections)
    back = read_modk(path)
    assert list(back) == list(sections)
    for name in sections:
        np.testing.assert_array_equal(back[name], np.asarray(sections[name]))
        assert back[name].dtype == np.asarray(sections[name]).dtype
    assert decode_text(back["notes"]) == "hello container"


def test_write_is_byte_deterministic(tmp_path):
    sections = {"a": np.arange(6.0).reshape(2, 3), "b": encode_text("x")}
    write_modk(tmp_path / "one.modk", sections)
    write_modk(tmp_path / "two.modk", sections)
    assert (tmp_path / "one.modk").read_bytes() == (tmp_path / "two.modk").read_bytes()


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.modk"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ModkError):
        read_modk(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "ok.modk"
    write_modk(path, {"a": np.ones((4, 4))})
    blob = path.read_bytes()
    (tmp_path / "cut.modk").write_bytes(blob[: len(blob) - 10])
    with pytest.raises(ModkError):
        read_modk(tmp_path / "cut.modk")


def test_no_tmp_file_left_behind(tmp_path):
    write_modk(tmp_path / "x.modk", {"a": np.ones(2)})
    assert [p.name for p in tmp_path.iterdir()] == ["x.modk"]


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(ModkError):
        write_modk(tmp_path / "x.modk", {"a": np.array([True, False])})


def test_ppm_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(8, 10, 3))
    path = tmp_path / "img.ppm"
    write_ppm(path, img)
    back = read_ppm(path)
    assert back.shape == (8, 10, 3)
    # 8-bit quantization: worst case half a step
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


def test_ppm_readable_by_reference_decoder(tmp_path):
    PIL = pytest.importorskip("PIL.Image")
    img = np.random.default_rng(1).uniform(size=(16, 16, 3))
    path = tmp_path / "ref.ppm"
    write_ppm(path, img)
    with PIL.open(path) as ref:
        arr = np.asarray(ref)
    assert arr.shape == (16, 16, 3)
    np.testing.assert_array_equal(arr, np.clip(np.rint(img * 255), 0, 255).astype(np.uint8))


def test_ppm_rejects_bad_shape(tmp_path):
    with pytest.raises(ValueError):
        write_ppm(tmp_path / "x.ppm", np.zeros((4, 4)))

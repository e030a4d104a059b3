import numpy as np
import pytest

from cnneq.checkpoint import MAGIC, dump_checkpoint, load_checkpoint, save_checkpoint, to_bytes
from cnneq.equalizers import CnnConfig, CnnModel, FirModel, VolterraModel, forward
from cnneq.errors import UsageError
from cnneq.quantization import default_formats, quantize_model
from cnneq.signals import make_rng


def _models():
    rng = make_rng(0)
    cnn = CnnModel.init(CnnConfig(bias=True), rng)
    cnn.bn_var[0] = rng.uniform(0.5, 2, 5)
    wf, af = default_formats(CnnConfig(bias=True), 3.0, 9.0)
    return [
        FirModel(rng.normal(size=17)),
        VolterraModel(0.5, rng.normal(size=9), rng.normal(size=(3, 3)), np.zeros((0, 0, 0))),
        cnn,
        quantize_model(cnn, wf, af),
    ]


@pytest.mark.parametrize("idx", range(4))
def test_roundtrip(tmp_path, idx):
    m = _models()[idx]
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, m, {"seed": 3})
    back, hdr = load_checkpoint(path)
    assert hdr["lineage"] == {"seed": 3} and hdr["family"] == m.family
    assert hdr["rng"].startswith("philox")
    x = make_rng(1).normal(size=320)
    np.testing.assert_array_equal(forward(x, back).values, forward(x, m).values)
    save_checkpoint(tmp_path / "again.ckpt", back, {"seed": 3})
    assert path.read_bytes() == (tmp_path / "again.ckpt").read_bytes()


def test_bytes_are_deterministic():
    a = to_bytes(_models()[2], {"k": 1})
    b = to_bytes(_models()[2], {"k": 1})
    assert a == b and a.startswith(MAGIC)


def test_bad_files(tmp_path):
    p = tmp_path / "x.ckpt"
    p.write_bytes(b"NOTACKPT" + b"\0" * 8)
    with pytest.raises(UsageError):
        load_checkpoint(p)
    save_checkpoint(p, _models()[0])
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(UsageError):
        load_checkpoint(p)


def test_dump_lists_every_value(tmp_path):
    p = tmp_path / "f.ckpt"
    save_checkpoint(p, FirModel(np.array([0.25, 1.0, -0.5])))
    text = dump_checkpoint(p)
    assert "tensor weights shape=[3]" in text
    assert "  2 -0.5" in text

import struct

import numpy as np
import pytest

from finetec.complete import CompletionModel
from finetec.dynamics import DynamicsModel, FusionHead
from finetec.modelio import (
    MAGIC, ModelFileError, load_completion, load_stage2, read_container, save_completion, save_stage2,
    write_container,
)
from finetec.recognize import GcnModel


def test_container_round_trip(tmp_path):
    path = tmp_path / "m.bin"
    values = np.random.default_rng(0).normal(size=7)
    write_container(path, [(b"ABCD", (3, 4), values), (b"WXYZ", (), np.zeros(0))])
    blob = path.read_bytes()
    assert blob[:4] == MAGIC and struct.unpack_from("<I", blob, 4) == (2,)
    out = read_container(path)
    assert out["ABCD"][0] == (3, 4)
    assert np.array_equal(out["ABCD"][1], values)
    assert out["WXYZ"][1].size == 0


@pytest.mark.parametrize("mangle", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:-3],
    lambda b: b + b"\0",
])
def test_damaged_containers_rejected(tmp_path, mangle):
    path = tmp_path / "m.bin"
    write_container(path, [(b"ABCD", (2,), np.ones(4))])
    path.write_bytes(mangle(path.read_bytes()))
    with pytest.raises(ModelFileError):
        read_container(path)


def test_completion_round_trip_preserves_outputs(tmp_path):
    model = CompletionModel(6, embed=8, blocks=2, seed=3)
    model.coord_scale = 7.5
    save_completion(model, tmp_path / "c.bin")
    loaded = load_completion(tmp_path / "c.bin")
    assert loaded.T == 6 and loaded.coord_scale == 7.5
    assert np.array_equal(loaded.flat(), model.flat())
    x = np.random.default_rng(0).normal(size=(2, 24, 43))
    assert np.array_equal(loaded(x).data, model(x).data)


def test_stage2_round_trip(tmp_path):
    dyn = DynamicsModel(feature_width=4, hidden=6, seed=1)
    fusion = FusionHead(5, seed=1)
    fusion.accel_scale = 0.125
    gcn = GcnModel(3, channels=(4, 6, 8), seed=1, kernel=5)
    gcn.input_scale = np.array([1.0, 2.0, 3.0, 4.0])
    save_stage2(dyn, 6, fusion, gcn, tmp_path / "s.bin")
    d2, f2, g2 = load_stage2(tmp_path / "s.bin")
    assert np.array_equal(d2.flat(), dyn.flat()) and d2.feature_width == 4
    assert np.array_equal(f2.flat(), fusion.flat()) and f2.accel_scale == 0.125
    assert np.array_equal(g2.flat(), gcn.flat())
    assert all(b.kernel == 5 for b in g2.blocks)
    assert np.array_equal(g2.input_scale, gcn.input_scale)
    assert g2.num_classes == 3 and g2.channels == (4, 6, 8)


def test_wrong_value_count_rejected(tmp_path):
    path = tmp_path / "c.bin"
    model = CompletionModel(4, embed=6, blocks=1, seed=0)
    write_container(path, [(b"CMPL", (6, 1, 4), np.append(model.flat(), [1.0, 2.0]))])
    with pytest.raises(ModelFileError):
        load_completion(path)

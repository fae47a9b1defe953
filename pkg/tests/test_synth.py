import numpy as np
import pytest

from finetec.core import write_sequences
from finetec.decompose import motion_profile
from finetec.synth import ClassSignature, SynthSpec, default_signature, gen_synth


def test_default_split_sizes():
    train, val = gen_synth(SynthSpec(num_classes=4, per_class=50))
    assert len(train) == 160 and len(val) == 40
    for c in range(4):
        assert sum(s.label == c for s in train) == 40
        assert sum(s.label == c for s in val) == 10
    assert len({s.id for s in train + val}) == 200
    assert all(s.fully_valid and s.T == 16 for s in train + val)


def test_same_seed_gives_identical_files(tmp_path):
    spec = SynthSpec(num_classes=3, per_class=5, seed=4)
    for name in ("a", "b"):
        train, val = gen_synth(spec)
        write_sequences(train + val, tmp_path / f"{name}.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    other, _ = gen_synth(SynthSpec(num_classes=3, per_class=5, seed=5))
    assert not np.array_equal(other[0].frames, gen_synth(spec)[0][0].frames)


def test_duplicate_signatures_rejected():
    sig = default_signature(0)
    with pytest.raises(ValueError):
        SynthSpec(num_classes=2, signatures=(sig, sig))


@pytest.mark.parametrize("kwargs", [{"T": 7}, {"num_classes": 1}])
def test_invalid_specs_rejected(kwargs):
    with pytest.raises(ValueError):
        SynthSpec(**kwargs)


def test_frequency_doubling_moves_the_dominant_region():
    amp = (0.03,) * 5
    fast_left_arm = ClassSignature((1.0, 2.0, 1.0, 1.0, 1.0), amp, (0.0, 0.0))
    fast_right_leg = ClassSignature((1.0, 1.0, 1.0, 1.0, 2.0), amp, (0.0, 0.0))
    train, _ = gen_synth(SynthSpec(num_classes=2, per_class=5, T=32, noise=0.001,
                                   signatures=(fast_left_arm, fast_right_leg)))
    for seq in train:
        dominant = int(np.argmax(motion_profile(seq).per_region))
        assert dominant == (1 if seq.label == 0 else 4)


def test_default_signatures_are_distinct():
    keys = [default_signature(c).key() for c in range(10)]
    assert len(set(keys)) == 10

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from finetec.core import (
    FLIP_PERM, LabelSpace, SequenceError, SkeletonSequence, coco17_topology, full_sequence, read_sequences,
    write_sequences,
)

from conftest import random_sequence


def test_topology_regions_partition_joints():
    topo = coco17_topology()
    sizes = [len(g) for g in topo.regions]
    assert sizes == [5, 3, 3, 3, 3] and sum(sizes) == 17
    joints = sorted(j for g in topo.regions for j in g)
    assert joints == list(range(17))


def test_topology_is_a_tree():
    topo = coco17_topology()
    assert len(topo.edges) == 16
    # union-find: 16 edges joining 17 nodes without a cycle means connected and acyclic
    parent = list(range(17))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for a, b in topo.edges:
        ra, rb = find(a), find(b)
        assert ra != rb
        parent[ra] = rb
    assert len({find(i) for i in range(17)}) == 1


def test_left_wrist_is_in_left_arm():
    assert 9 in coco17_topology().regions[1]


def test_topology_constant_is_shared_and_immutable():
    assert coco17_topology() is coco17_topology()
    with pytest.raises(AttributeError):
        coco17_topology().edges = ()


def test_edges_list_parents_first():
    seen = {0}
    for p, c in coco17_topology().edges:
        assert p in seen
        seen.add(c)


def test_flip_perm_is_an_involution_within_regions():
    perm = np.array(FLIP_PERM)
    assert np.array_equal(perm[perm], np.arange(17))


def test_label_space_needs_two_classes():
    with pytest.raises(ValueError):
        LabelSpace(1)
    assert LabelSpace(3).num_classes == 3


def test_sequence_invariants():
    frames = np.zeros((4, 17, 2))
    frames[1] = 1.0
    with pytest.raises(SequenceError, match="invalid frame"):
        SkeletonSequence(frames, [True, False, True, True])
    with pytest.raises(SequenceError, match="minimum"):
        full_sequence(np.zeros((2, 17, 2)))
    with pytest.raises(SequenceError, match="shape"):
        full_sequence(np.zeros((4, 16, 2)))
    with pytest.raises(SequenceError, match="non-finite"):
        full_sequence(np.full((4, 17, 2), np.nan))
    with pytest.raises(SequenceError, match="label"):
        full_sequence(np.zeros((4, 17, 2)), label=-1)


def test_sequence_arrays_are_read_only(seq16):
    with pytest.raises(ValueError):
        seq16.frames[0, 0, 0] = 1.0


def test_round_trip_two_lines(tmp_path):
    seqs = [random_sequence(1, label=0, id_="a"), random_sequence(2, T=5, label=None, id_="b")]
    path = tmp_path / "s.jsonl"
    write_sequences(seqs, path)
    assert len(path.read_text().splitlines()) == 2
    back = read_sequences(path)
    assert len(back) == 2
    assert all(a.equals(b) for a, b in zip(seqs, back))


@given(st.integers(0, 2**32 - 1), st.integers(3, 12))
def test_round_trip_is_bit_exact(tmp_path_factory, seed, T):
    gen = np.random.default_rng(seed)
    frames = gen.normal(size=(T, 17, 2)) * 10.0 ** gen.integers(-12, 12)
    valid = gen.random(T) < 0.7
    seq = SkeletonSequence(np.where(valid[:, None, None], frames, 0.0), valid, id=str(seed), label=seed % 5)
    path = tmp_path_factory.mktemp("rt") / "x.jsonl"
    write_sequences([seq], path)
    assert read_sequences(path)[0].equals(seq)


def test_empty_list_writes_empty_file(tmp_path):
    write_sequences([], tmp_path / "e.jsonl")
    assert (tmp_path / "e.jsonl").read_bytes() == b""
    assert read_sequences(tmp_path / "e.jsonl") == []


def test_repeated_writes_are_byte_stable(tmp_path):
    seqs = [random_sequence(i, T=6, label=i % 3, id_=f"s{i}") for i in range(100)]
    write_sequences(seqs, tmp_path / "a.jsonl")
    write_sequences(seqs, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def record(**over):
    rec = {"id": "x", "label": 0, "T": 3, "K": 17, "frames": np.zeros((3, 17, 2)).tolist(),
           "valid": [True, True, True]}
    rec.update(over)
    return json.dumps(rec)


@pytest.mark.parametrize("line, message", [
    ("{not json", "line 2: parse error"),
    (record(T=4), "line 2: T=4"),
    (record(K=18), "line 2: K must be 17"),
    (record(frames=[[[0, 0]] * 17] * 2, T=2, valid=[True, True]), "line 2: frames: T=2"),
    (record(frames=np.ones((3, 17, 2)).tolist(), valid=[True, False, True]), "line 2: frames: invalid frame"),
    (record(frames=[[[0, 0]] * 17, [[0, 0]] * 16, [[0, 0]] * 17]), "line 2: frames must be"),
    (record(label="a"), "line 2: label"),
    (json.dumps({"id": "x"}), "line 2: missing field"),
])
def test_read_reports_line_and_field(tmp_path, line, message):
    path = tmp_path / "bad.jsonl"
    path.write_text(record() + "\n" + line + "\n")
    with pytest.raises(SequenceError, match=message):
        read_sequences(path)

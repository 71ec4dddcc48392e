import json

import numpy as np
import pytest

from conftest import random_sequence
from gaitgraph.pose_io import (IndexEntry, PoseDataError, PoseSequence, load_dataset, pad_or_crop,
                               parse_openpose_json, read_csv_sequence, read_index, write_csv_sequence, write_index)
from gaitgraph.skeleton import COCO17, OPENPOSE18


def _write_frame(path, people):
    path.write_text(json.dumps({"version": 1.3, "people": people}))


def test_openpose_json_directory(tmp_path):
    kp = np.arange(54, dtype=float).reshape(18, 3)
    kp[:, 2] = 0.5
    _write_frame(tmp_path / "f_000000000000_keypoints.json",
                 [{"pose_keypoints_2d": kp.ravel().tolist()}, {"pose_keypoints_2d": [9.0] * 54}])
    _write_frame(tmp_path / "f_000000000001_keypoints.json", [])
    (tmp_path / "notes.txt").write_text("ignored")
    seq = parse_openpose_json(tmp_path, OPENPOSE18, subject_id="007", view=45)
    assert seq.T == 2 and seq.N == 18 and seq.view == 45 and seq.subject_id == "007"
    np.testing.assert_array_equal(seq.frames[0], kp)
    assert np.all(seq.frames[1] == 0)


def test_openpose_json_errors_name_the_file(tmp_path):
    _write_frame(tmp_path / "a.json", [{"pose_keypoints_2d": [1.0] * 10}])
    with pytest.raises(PoseDataError, match="a.json"):
        parse_openpose_json(tmp_path, OPENPOSE18)
    (tmp_path / "a.json").write_text("{not json")
    with pytest.raises(PoseDataError, match="a.json"):
        parse_openpose_json(tmp_path, OPENPOSE18)


def test_empty_directory(tmp_path):
    with pytest.raises(PoseDataError):
        parse_openpose_json(tmp_path, OPENPOSE18)


def test_sequence_validation():
    with pytest.raises(PoseDataError):
        PoseSequence("s", 0, "", OPENPOSE18, np.zeros((3, 17, 3)))
    with pytest.raises(PoseDataError):
        PoseSequence("s", 0, "", OPENPOSE18, np.zeros((0, 18, 3)))
    bad = np.zeros((2, 18, 3))
    bad[0, 0, 2] = 1.5
    with pytest.raises(PoseDataError):
        PoseSequence("s", 0, "", OPENPOSE18, bad)
    bad = np.zeros((2, 18, 3))
    bad[0, 0, 0] = np.nan
    with pytest.raises(PoseDataError):
        PoseSequence("s", 0, "", OPENPOSE18, bad)


def test_csv_roundtrip_exact(tmp_path):
    seq = random_sequence(5, T=7)
    write_csv_sequence(seq, tmp_path / "s.csv")
    back = read_csv_sequence(tmp_path / "s.csv", OPENPOSE18)
    np.testing.assert_array_equal(back.frames, seq.frames)


def test_csv_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("t,joint,x,y,conf\n0,0,1,2,1\n0,1,abc,2,1\n")
    with pytest.raises(PoseDataError, match="line 3"):
        read_csv_sequence(p, OPENPOSE18)
    p.write_text("time,joint,x,y\n")
    with pytest.raises(PoseDataError, match="line 1"):
        read_csv_sequence(p, OPENPOSE18)
    p.write_text("t,joint,x,y,conf\n0,40,1,2,1\n")
    with pytest.raises(PoseDataError):
        read_csv_sequence(p, OPENPOSE18)


def test_index_and_dataset(tmp_path):
    seqs = [random_sequence(i, T=5, skeleton=COCO17, subject=f"S{i}", view=30 * i) for i in range(3)]
    entries = []
    for i, s in enumerate(seqs):
        write_csv_sequence(s, tmp_path / f"{i}.csv")
        entries.append(IndexEntry(s.subject_id, s.view, "nm", f"{i}.csv"))
    write_index(entries, tmp_path / "index.json")
    assert read_index(tmp_path / "index.json") == entries
    loaded = load_dataset(tmp_path / "index.json", "coco17")
    assert [s.subject_id for s in loaded] == ["S0", "S1", "S2"]
    assert [s.view for s in loaded] == [0, 30, 60]
    np.testing.assert_array_equal(loaded[2].frames, seqs[2].frames)


def test_index_errors(tmp_path):
    (tmp_path / "index.json").write_text('[{"view": 1}]')
    with pytest.raises(PoseDataError):
        read_index(tmp_path / "index.json")
    write_index([IndexEntry("a", 0, "", "missing.csv")], tmp_path / "index.json")
    with pytest.raises(PoseDataError, match="not found"):
        load_dataset(tmp_path / "index.json")


def test_pad_or_crop():
    seq = random_sequence(0, T=10)
    crop = pad_or_crop(seq, 6)
    np.testing.assert_array_equal(crop.frames, seq.frames[2:8])
    pad = pad_or_crop(seq, 25)
    np.testing.assert_array_equal(pad.frames, seq.frames[np.arange(25) % 10])
    assert pad_or_crop(seq, 10) is seq

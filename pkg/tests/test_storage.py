"""Tests for binary formats and the sequence directory layout."""

import json

import numpy as np
import pytest

from core.errors import DimensionMismatchError, MalformedDocumentError, MissingFileError
from core.geometry import DepthMap, RgbImage
from core.rng import make_rng
from fusion.cloud import FusedCloud
from fusion.features import normalize_descriptors
from rectification.geometry import RectifiedGeometry
from storage.formats import encode_depth, read_cloud, read_depth, read_ppm, write_cloud, write_depth, write_ppm
from storage.sequence import (
    CALIBRATION,
    MANIFEST,
    QUERIES,
    depth_path,
    load_rectified,
    load_sequence,
    load_tracks,
    rgb_path,
    save_rectified,
    save_sequence,
    save_tracks,
    write_document,
    write_table,
)


@pytest.fixture(scope="module")
def saved_sequence(tmp_path_factory, moving_sequence):
    root = tmp_path_factory.mktemp("seq")
    seq = moving_sequence
    save_sequence(root, seq.frames, seq.rig, seq.queries, seq.ground_truth, name="moving")
    return root


class TestDepthFormat:
    """ORGD."""

    def test_round_trip_keeps_invalid_pixels(self, tmp_path):
        """Values survive at f32 precision and NaN stays NaN."""
        data = np.array([[1.5, np.nan, 2.25], [0.0, 3.0, 10.125]])
        path = tmp_path / "d.orgd"
        write_depth(path, DepthMap(width=3, height=2, data=data))
        loaded = read_depth(path, expected_size=(3, 2))
        assert np.array_equal(loaded.data, data.astype(np.float32), equal_nan=True)
        assert loaded.valid_count == 4

    def test_header_layout(self):
        """Magic, u32 width, u32 height, then f32 little-endian values."""
        raw = encode_depth(DepthMap(width=2, height=1, data=np.array([1.0, 2.0])))
        assert raw[:4] == b"ORGD"
        assert int.from_bytes(raw[4:8], "little") == 2
        assert int.from_bytes(raw[8:12], "little") == 1
        assert np.frombuffer(raw[12:], dtype="<f4").tolist() == [1.0, 2.0]

    def test_errors(self, tmp_path):
        """Missing file, wrong magic, truncated payload and wrong declared size."""
        with pytest.raises(MissingFileError):
            read_depth(tmp_path / "none.orgd")
        bad = tmp_path / "bad.orgd"
        bad.write_bytes(b"XXXX" + bytes(8))
        with pytest.raises(MalformedDocumentError):
            read_depth(bad)
        path = tmp_path / "d.orgd"
        write_depth(path, DepthMap(width=2, height=2, data=np.ones(4)))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DimensionMismatchError):
            read_depth(path)
        write_depth(path, DepthMap(width=2, height=2, data=np.ones(4)))
        with pytest.raises(DimensionMismatchError):
            read_depth(path, expected_size=(4, 1))


class TestPpmFormat:
    """Binary PPM."""

    def test_round_trip(self, tmp_path):
        """Pixels survive byte for byte."""
        data = make_rng(0, "test", "ppm").integers(0, 256, size=(3, 4, 3), dtype=np.uint8)
        path = tmp_path / "i.ppm"
        write_ppm(path, RgbImage(width=4, height=3, data=data))
        assert np.array_equal(read_ppm(path).data, data)

    def test_header_comments(self, tmp_path):
        """Comment lines in the header are skipped."""
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# made by hand\n1 1\n255\n" + bytes([10, 20, 30]))
        assert read_ppm(path).data.tolist() == [[[10, 20, 30]]]

    def test_errors(self, tmp_path):
        """Wrong type, wrong maxval and short payload."""
        path = tmp_path / "e.ppm"
        path.write_bytes(b"P3\n1 1\n255\n1 2 3")
        with pytest.raises(MalformedDocumentError):
            read_ppm(path)
        path.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(MalformedDocumentError):
            read_ppm(path)
        path.write_bytes(b"P6\n2 1\n255\n" + bytes(3))
        with pytest.raises(DimensionMismatchError):
            read_ppm(path)


class TestCloudFormat:
    """ORPC dumps."""

    def test_round_trip(self, tmp_path):
        """Positions and features at f32 precision, provenance exact."""
        rng = make_rng(0, "test", "orpc")
        cloud = FusedCloud(
            t=2,
            points=rng.normal(size=(50, 3)),
            features=normalize_descriptors(rng.normal(size=(50, 16))),
            provenance=rng.integers(0, 500, size=(50, 3)),
        )
        path = tmp_path / "c.orpc"
        write_cloud(path, cloud)
        loaded = read_cloud(path, t=2)
        assert np.allclose(loaded.points, cloud.points, atol=1e-5)
        assert np.allclose(loaded.features, cloud.features, atol=1e-6)
        assert np.array_equal(loaded.provenance, cloud.provenance)

    def test_empty_cloud(self, tmp_path):
        """Zero records is a valid dump."""
        path = tmp_path / "e.orpc"
        write_cloud(path, FusedCloud.empty(0))
        assert read_cloud(path).is_empty

    def test_truncated(self, tmp_path):
        """A record count that disagrees with the payload is rejected."""
        path = tmp_path / "t.orpc"
        write_cloud(path, FusedCloud(t=0, points=np.zeros((1, 3)), features=np.eye(16)[:1], provenance=np.zeros((1, 3))))
        path.write_bytes(path.read_bytes()[:-2])
        with pytest.raises(DimensionMismatchError):
            read_cloud(path)


class TestSequenceDirectory:
    """Saving and loading whole sequences."""

    def test_layout(self, saved_sequence):
        """Documents and per-view frame files are where the layout says."""
        for name in (MANIFEST, CALIBRATION, QUERIES, "ground_truth.json"):
            assert (saved_sequence / name).is_file()
        assert rgb_path(saved_sequence, 4, 3).is_file()
        assert depth_path(saved_sequence, 0, 0).is_file()

    def test_load_matches_memory(self, saved_sequence, moving_sequence):
        """Rig, queries and ground truth load exactly; depth at f32 precision."""
        loaded = load_sequence(saved_sequence)
        assert loaded.name == "moving"
        assert loaded.num_frames == moving_sequence.num_frames
        for v in range(loaded.num_views):
            assert loaded.rig.pose(v) == moving_sequence.rig.pose(v)
            assert loaded.rig.intrinsics(v) == moving_sequence.rig.intrinsics(v)
        assert [q.id for q in loaded.queries] == [q.id for q in moving_sequence.queries]
        for a, b in zip(loaded.queries, moving_sequence.queries):
            assert np.array_equal(a.p_q, b.p_q)
        for a, b in zip(loaded.ground_truth, moving_sequence.ground_truth):
            assert np.array_equal(a.positions, b.positions)
        frame, original = loaded.frames[2], moving_sequence.frames[2]
        assert np.array_equal(frame.rgb(1).data, original.rgb(1).data)
        assert np.allclose(frame.depth(1).data, original.depth(1).data, rtol=1e-6, equal_nan=True)

    def test_resave_is_byte_identical(self, tmp_path, saved_sequence):
        """load then save reproduces every file."""
        loaded = load_sequence(saved_sequence)
        save_sequence(tmp_path, loaded.frames, loaded.rig, loaded.queries, loaded.ground_truth, name=loaded.name)
        for original in saved_sequence.rglob("*"):
            if original.is_file():
                copy = tmp_path / original.relative_to(saved_sequence)
                assert copy.read_bytes() == original.read_bytes(), original.name

    def test_missing_directory(self, tmp_path):
        """A missing root is a MissingFileError."""
        with pytest.raises(MissingFileError):
            load_sequence(tmp_path / "nothing")

    def test_missing_frame_file(self, tmp_path, room_sequence):
        """A deleted depth file is reported with its path."""
        save_sequence(tmp_path, room_sequence.frames, room_sequence.rig)
        depth_path(tmp_path, 1, 0).unlink()
        with pytest.raises(MissingFileError) as info:
            load_sequence(tmp_path)
        assert info.value.path == depth_path(tmp_path, 1, 0)

    def test_manifest_size_mismatch(self, tmp_path, room_sequence):
        """Frame files that disagree with the manifest are rejected."""
        save_sequence(tmp_path, room_sequence.frames, room_sequence.rig)
        manifest = json.loads((tmp_path / MANIFEST).read_text())
        manifest["views"][0]["width"] += 1
        (tmp_path / MANIFEST).write_text(json.dumps(manifest))
        with pytest.raises(DimensionMismatchError):
            load_sequence(tmp_path)

    def test_malformed_calibration(self, tmp_path, room_sequence):
        """Invalid JSON and schema violations are MalformedDocumentError."""
        save_sequence(tmp_path, room_sequence.frames, room_sequence.rig)
        (tmp_path / CALIBRATION).write_text("{not json")
        with pytest.raises(MalformedDocumentError):
            load_sequence(tmp_path)
        (tmp_path / CALIBRATION).write_text(json.dumps({"scale": -1.0, "views": []}))
        with pytest.raises(MalformedDocumentError):
            load_sequence(tmp_path)

    def test_query_after_last_frame(self, tmp_path, room_sequence):
        """Queries must start inside the sequence."""
        save_sequence(tmp_path, room_sequence.frames, room_sequence.rig)
        (tmp_path / QUERIES).write_text(json.dumps({"queries": [{"id": "q", "t_q": 5, "p_q": [0, 0, 0]}]}))
        with pytest.raises(MalformedDocumentError):
            load_sequence(tmp_path)


class TestResultFiles:
    """Tracks, rectified geometry and tables."""

    def test_tracks_json_and_csv(self, tmp_path, moving_sequence):
        """JSON reloads exactly; the CSV has one row per track frame."""
        gt = moving_sequence.ground_truth
        csv_path = save_tracks(tmp_path / "tracks.json", gt)
        loaded = load_tracks(tmp_path / "tracks.json")
        assert loaded.ids == gt.ids
        for a, b in zip(loaded, gt):
            assert np.array_equal(a.positions, b.positions)
            assert np.array_equal(a.visibility, b.visibility)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "id,t,x,y,z,visibility"
        assert len(lines) == 1 + sum(len(t) for t in gt)

    def test_rectified_round_trip(self, tmp_path, room_sequence):
        """Stored corrections are re-applied to the frames on load."""
        geom = RectifiedGeometry.identity(room_sequence.rig.with_scale(1.5), room_sequence.frames)
        save_rectified(tmp_path / "rectified.json", geom, hints="rgb,k", mean_consistency=0.01)
        loaded = load_rectified(tmp_path / "rectified.json", room_sequence.frames)
        assert loaded.scale == 1.5
        assert loaded.corrections == geom.corrections
        assert loaded.num_frames == 1
        assert loaded.rig.pose(2) == geom.rig.pose(2)

    def test_floats_carry_seventeen_digits(self, tmp_path):
        """JSON and CSV numbers are written with 17 significant digits."""
        write_document(tmp_path / "doc.json", {"x": 0.1, "n": 3, "whole": 2.0})
        text = (tmp_path / "doc.json").read_text()
        assert '"x": 0.10000000000000001' in text
        assert '"n": 3' in text and '"whole": 2.0' in text
        assert json.loads(text)["x"] == 0.1
        write_table(tmp_path / "t.csv", [{"v": 0.1}])
        assert (tmp_path / "t.csv").read_text().splitlines()[1] == "0.10000000000000001"

    def test_table(self, tmp_path):
        """Rows are written under the first row's keys."""
        path = tmp_path / "out" / "table.csv"
        write_table(path, [{"hints": "rgb", "aj": 1.5}, {"hints": "rgb,k", "aj": 2.0}])
        assert path.read_text().splitlines() == ["hints,aj", "rgb,1.5", "\"rgb,k\",2.0"]

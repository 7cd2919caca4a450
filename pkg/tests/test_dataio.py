import numpy as np
import pytest

from bevsim.dataio import (
    LabelEntry,
    footprint_to_label,
    frame_name,
    frame_paths,
    labels_to_footprints,
    parse_labels,
    read_cloud,
    read_splits,
    split_dataset,
    write_cloud,
    write_labels,
    write_splits,
)
from bevsim.errors import DataError, DataFormatError
from bevsim.raycast import PointCloud
from bevsim.taxonomy import DEFAULT_TAXONOMY, Taxonomy


class TestCloudIO:
    def test_empty_round_trip(self, tmp_path):
        path = tmp_path / "empty.bin"
        write_cloud(PointCloud.empty(), path)
        assert path.stat().st_size == 0
        assert len(read_cloud(path)) == 0

    def test_single_point_byte_layout(self, tmp_path):
        path = tmp_path / "one.bin"
        write_cloud(PointCloud(points=np.array([[1.0, 2.0, 3.0, 0.5]])), path)
        raw = path.read_bytes()
        assert len(raw) == 16
        np.testing.assert_array_equal(np.frombuffer(raw, dtype="<f4"), [1, 2, 3, 0.5])

    def test_bulk_bitwise_round_trip(self, tmp_path, rng):
        xyz = rng.normal(size=(10_000, 3)).astype(np.float32)
        intensity = rng.random(10_000).astype(np.float32)
        cloud = PointCloud(points=np.column_stack((xyz, intensity)).astype(np.float64))
        path = tmp_path / "bulk.bin"
        write_cloud(cloud, path)
        back = read_cloud(path)
        assert back.points.tobytes() == cloud.points.tobytes()
        write_cloud(back, tmp_path / "again.bin")
        assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()

    def test_corrupt_length_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 21)
        with pytest.raises(DataFormatError, match="multiple of 16"):
            read_cloud(path)


class TestLabelIO:
    def entries(self):
        return [
            LabelEntry(type="Table", truncation=0.0, occlusion=0,
                       dims_hwl=(0.4, 0.6, 1.2), location=(1.0, -2.0, 0.1), yaw=0.7),
            LabelEntry(type="Chair", truncation=0.25, occlusion=2,
                       dims_hwl=(0.45, 0.3, 0.3), location=(-0.5, 0.5, 0.0), yaw=-1.2),
            LabelEntry(type="Person", truncation=1.0, occlusion=3,
                       dims_hwl=(1.7, 0.5, 0.5), location=(3.0, 3.0, 0.2), yaw=3.1),
        ]

    def test_round_trip_six_decimals(self, tmp_path):
        path = tmp_path / "l.txt"
        entries = self.entries()
        write_labels(entries, path)
        parsed = parse_labels(path)
        assert len(parsed) == 3
        for a, b in zip(entries, parsed):
            assert a.type == b.type
            assert a.truncation == pytest.approx(b.truncation, abs=1e-6)
            assert a.occlusion == b.occlusion
            np.testing.assert_allclose(a.dims_hwl, b.dims_hwl, atol=1e-6)
            np.testing.assert_allclose(a.location, b.location, atol=1e-6)
            assert a.yaw == pytest.approx(b.yaw, abs=1e-6)

    def test_field_order(self, tmp_path):
        path = tmp_path / "l.txt"
        write_labels(self.entries()[:1], path)
        fields = path.read_text().split()
        assert fields[0] == "Table"
        assert [float(f) for f in fields[1:]] == pytest.approx(
            [0.0, 0, 0.4, 0.6, 1.2, 1.0, -2.0, 0.1, 0.7]
        )

    def test_empty_file(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("")
        assert parse_labels(path) == []

    def test_malformed_line_names_lineno(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("Table 0.0 0 abc 0.5 1.0 0 0 0 0\n")
        with pytest.raises(DataFormatError, match=r"bad\.txt:1"):
            parse_labels(path)

    def test_short_line_rejected(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("Table 0.0 0 1.0\n")
        with pytest.raises(DataFormatError, match="10 fields"):
            parse_labels(path)

    def test_dont_care_skipped(self, tmp_path):
        path = tmp_path / "dc.txt"
        path.write_text(
            "DontCare 0.0 0 1 1 1 0 0 0 0\n"
            "Chair 0.000000 0 0.450000 0.300000 0.300000 0.0 0.0 0.0 0.0\n"
        )
        parsed = parse_labels(path)
        assert [e.type for e in parsed] == ["Chair"]

    def test_extra_trailing_fields_tolerated(self, tmp_path):
        path = tmp_path / "extra.txt"
        path.write_text("Chair 0.0 0 0.45 0.3 0.3 0 0 0 0.1 99.0 extra\n")
        parsed = parse_labels(path)
        assert parsed[0].yaw == pytest.approx(0.1)


class TestFootprintConversion:
    def test_hwl_reorder(self):
        e = LabelEntry(type="Table", truncation=0, occlusion=0,
                       dims_hwl=(1.0, 0.5, 2.0), location=(0, 0, 0), yaw=0.0)
        boxes = labels_to_footprints([e], DEFAULT_TAXONOMY)
        np.testing.assert_array_equal(boxes[0].dims, [2.0, 0.5, 1.0])
        assert boxes[0].class_id == DEFAULT_TAXONOMY.class_id("Table")

    def test_sequential_ids_with_offset(self):
        entries = [
            LabelEntry(type="Chair", truncation=0, occlusion=0, dims_hwl=(1, 1, 1),
                       location=(k, 0, 0), yaw=0.0)
            for k in range(3)
        ]
        boxes = labels_to_footprints(entries, DEFAULT_TAXONOMY)
        assert [b.instance_id for b in boxes] == [1, 2, 3]
        boxes = labels_to_footprints(entries, DEFAULT_TAXONOMY, id_offset=10)
        assert [b.instance_id for b in boxes] == [11, 12, 13]

    def test_unknown_class_rejected(self):
        e = LabelEntry(type="Spaceship", truncation=0, occlusion=0,
                       dims_hwl=(1, 1, 1), location=(0, 0, 0), yaw=0.0)
        with pytest.raises(DataError, match="Spaceship"):
            labels_to_footprints([e], DEFAULT_TAXONOMY)

    def test_label_round_trip(self):
        e = LabelEntry(type="Robot", truncation=0, occlusion=1,
                       dims_hwl=(0.6, 0.8, 0.8), location=(1, 2, 0), yaw=0.5)
        box = labels_to_footprints([e], DEFAULT_TAXONOMY)[0]
        back = footprint_to_label(box, DEFAULT_TAXONOMY, occlusion=1)
        np.testing.assert_allclose(back.dims_hwl, e.dims_hwl)
        assert back.type == "Robot"


class TestTaxonomy:
    def test_default_has_nine_classes(self):
        assert DEFAULT_TAXONOMY.n_classes == 9
        assert DEFAULT_TAXONOMY.background_id == 8

    def test_name_lookup(self):
        assert DEFAULT_TAXONOMY.class_name(DEFAULT_TAXONOMY.class_id("Robot")) == "Robot"

    def test_dont_care_reserved(self):
        with pytest.raises(DataError):
            Taxonomy(names=("A", "DontCare"))

    def test_duplicates_rejected(self):
        with pytest.raises(DataError):
            Taxonomy(names=("A", "A"))


class TestSplits:
    def test_ten_frames_8_1_1(self):
        ids = [frame_name(i) for i in range(10)]
        train, val, test = split_dataset(ids, (0.8, 0.1, 0.1), seed=0)
        assert (len(train), len(val), len(test)) == (8, 1, 1)

    def test_deterministic(self):
        ids = [frame_name(i) for i in range(20)]
        assert split_dataset(ids, (0.7, 0.15, 0.15), seed=5) == split_dataset(
            ids, (0.7, 0.15, 0.15), seed=5
        )

    def test_partition_property(self, rng):
        for _ in range(10):
            n = int(rng.integers(3, 60))
            ids = [frame_name(i) for i in range(n)]
            ratios = rng.dirichlet([2, 2, 2])
            parts = split_dataset(ids, tuple(ratios / ratios.sum()), seed=int(rng.integers(1000)))
            flat = [fid for part in parts for fid in part]
            assert sorted(flat) == sorted(ids)
            assert len(set(flat)) == len(flat)

    def test_bad_ratios(self):
        with pytest.raises(DataError, match="sum to 1"):
            split_dataset(["a", "b", "c"], (0.5, 0.2), seed=0)

    def test_too_few_frames(self):
        with pytest.raises(DataError, match="cannot fill"):
            split_dataset(["a"], (0.5, 0.3, 0.2), seed=0)

    def test_manifest_round_trip(self, tmp_path):
        splits = {"train": ["000000"], "val": ["000001"], "test": ["000002"]}
        write_splits(tmp_path, splits)
        assert read_splits(tmp_path) == splits


class TestLayout:
    def test_frame_paths(self, tmp_path):
        rec = frame_paths(tmp_path, "train", "000042")
        assert rec.cloud_path == tmp_path / "train" / "points" / "000042.bin"
        assert rec.label_path == tmp_path / "train" / "labels" / "000042.txt"

    def test_frame_name_zero_padded(self):
        assert frame_name(7) == "000007"
        assert frame_name(123456) == "123456"

import json

import numpy as np
import pytest

from drivestress.config import PipelineConfig
from drivestress.datasets import (
    DriveEntry,
    drivedb_segments,
    extract_dataset,
    extract_drive,
    load_annotation,
    load_manifest,
    load_score_csv,
    load_segments_csv,
    make_random_label_instances,
    make_two_profile_instances,
    synth_drive_signals,
    write_synth_dataset,
)
from drivestress.errors import SchemaError


@pytest.fixture()
def synth_manifest(tmp_path):
    return write_synth_dataset(tmp_path, n_drives=2, duration=120.0, seed=0)


class TestManifest:
    def test_loads_synth_manifest(self, synth_manifest):
        manifest = load_manifest(synth_manifest)
        assert manifest.dataset_id == "synth"
        assert len(manifest.drives) == 2
        assert manifest.drives[0].annotation_kind == "segments"

    def test_missing_file_rejected(self, synth_manifest, tmp_path):
        doc = json.loads(synth_manifest.read_text())
        doc["drives"][0]["eda_path"] = "nope.csv"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_manifest(bad)

    def test_duplicate_drive_rejected(self, synth_manifest, tmp_path):
        doc = json.loads(synth_manifest.read_text())
        doc["drives"].append(dict(doc["drives"][0]))
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_manifest(bad)

    def test_unknown_adapter_rejected(self, synth_manifest, tmp_path):
        doc = json.loads(synth_manifest.read_text())
        doc["adapter"] = "mystery"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(SchemaError):
            load_manifest(bad)


class TestAnnotations:
    def test_segments_csv_roundtrip(self, tmp_path):
        path = tmp_path / "segments.csv"
        path.write_text("start_s,end_s,condition\n0,40,rest\n40,80,highway\n", encoding="utf-8")
        segments = load_segments_csv(path)
        assert segments == [(0.0, 40.0, "rest"), (40.0, 80.0, "highway")]

    def test_segments_bad_header(self, tmp_path):
        path = tmp_path / "segments.csv"
        path.write_text("a,b,c\n0,40,rest\n", encoding="utf-8")
        with pytest.raises(SchemaError) as excinfo:
            load_segments_csv(path)
        assert "start_s,end_s,condition" in str(excinfo.value)

    def test_segments_inverted_bounds(self, tmp_path):
        path = tmp_path / "segments.csv"
        path.write_text("start_s,end_s,condition\n40,0,rest\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_segments_csv(path)

    def test_drivedb_marker_to_segments(self, tmp_path):
        path = tmp_path / "marker.csv"
        lines = ["time_s,marker"]
        edge_times = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0]
        t = 0.0
        while t <= 700.0:
            level = 1.0 if any(abs(t - e) < 2.0 and t >= e for e in edge_times) else 0.0
            lines.append(f"{t},{level}")
            t += 1.0
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        segments = drivedb_segments(path, 0.0, 700.0)
        assert len(segments) == 7
        assert [c for _, _, c in segments] == [
            "rest", "city", "highway", "city", "highway", "city", "rest",
        ]
        assert segments[0] == (0.0, 100.0, "rest")
        assert segments[-1][0] == 600.0

    def test_drivedb_edge_count_mismatch(self, tmp_path):
        path = tmp_path / "marker.csv"
        path.write_text("time_s,marker\n0,0\n1,1\n2,0\n", encoding="utf-8")
        with pytest.raises(SchemaError) as excinfo:
            drivedb_segments(path, 0.0, 10.0)
        assert "protocol" in str(excinfo.value)

    def test_hcilab_scores_normalized(self, tmp_path):
        path = tmp_path / "score.csv"
        path.write_text("time_s,score\n0,0\n10,64\n20,128\n", encoding="utf-8")
        entry = DriveEntry("d", path, path, path, "score", 1.0, 1.0)
        kind, (times, scores) = load_annotation(entry, "hcilab", 0.0, 20.0)
        assert kind == "score"
        np.testing.assert_allclose(scores, [0.0, 0.5, 1.0])

    def test_hcilab_out_of_range_rejected(self, tmp_path):
        path = tmp_path / "score.csv"
        path.write_text("time_s,score\n0,0\n10,300\n", encoding="utf-8")
        entry = DriveEntry("d", path, path, path, "score", 1.0, 1.0)
        with pytest.raises(SchemaError):
            load_annotation(entry, "hcilab", 0.0, 10.0)

    def test_affectiveroad_scores_normalized(self, tmp_path):
        path = tmp_path / "score.csv"
        path.write_text("time_s,score\n0,0.2\n10,0.4\n20,0.6\n", encoding="utf-8")
        entry = DriveEntry("d", path, path, path, "score", 1.0, 1.0)
        _, (_, scores) = load_annotation(entry, "affectiveroad", 0.0, 20.0)
        np.testing.assert_allclose(scores, [0.0, 0.5, 1.0])

    def test_generic_scores_used_as_is(self, tmp_path):
        path = tmp_path / "score.csv"
        path.write_text("time_s,score\n0,0.9\n10,0.9\n", encoding="utf-8")
        entry = DriveEntry("d", path, path, path, "score", 1.0, 1.0)
        _, (_, scores) = load_annotation(entry, "generic", 0.0, 10.0)
        np.testing.assert_allclose(scores, 0.9)

    def test_score_csv_bad_header(self, tmp_path):
        path = tmp_path / "score.csv"
        path.write_text("t,s\n0,0.5\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            load_score_csv(path)


class TestExtraction:
    def test_synth_drive_seven_windows(self, synth_manifest):
        manifest = load_manifest(synth_manifest)
        config = PipelineConfig()
        instances, dropped = extract_drive(
            manifest.drives[0], manifest.adapter, manifest.dataset_id, config
        )
        assert len(instances) + len(dropped) == 7
        starts = [inst.start for inst in instances]
        assert starts == sorted(starts)

    def test_segment_labels_follow_conditions(self, synth_manifest):
        manifest = load_manifest(synth_manifest)
        instances, _ = extract_drive(
            manifest.drives[0], manifest.adapter, manifest.dataset_id, PipelineConfig()
        )
        by_start = {inst.start: inst.label for inst in instances}
        assert by_start.get(0.0) == "L"  # fully inside the rest third
        assert by_start.get(45.0) == "M"  # fully inside the highway third
        assert by_start.get(90.0) == "H"  # fully inside the city third

    def test_rest_only_segments_give_all_l(self, tmp_path):
        manifest_path = write_synth_dataset(tmp_path, n_drives=1, duration=120.0, seed=2)
        segments_path = tmp_path / "drive01_segments.csv"
        segments_path.write_text("start_s,end_s,condition\n0,120,rest\n", encoding="utf-8")
        manifest = load_manifest(manifest_path)
        instances, _ = extract_drive(
            manifest.drives[0], manifest.adapter, manifest.dataset_id, PipelineConfig()
        )
        assert len(instances) == 7
        assert all(inst.label == "L" for inst in instances)

    def test_constant_high_score_gives_all_h(self, tmp_path):
        manifest_path = write_synth_dataset(tmp_path, n_drives=1, duration=120.0, seed=1,
                                            annotation_kind="score")
        score_path = tmp_path / "drive01_score.csv"
        lines = ["time_s,score"] + [f"{t},0.9" for t in range(0, 121)]
        score_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        manifest = load_manifest(manifest_path)
        instances, _ = extract_drive(
            manifest.drives[0], manifest.adapter, manifest.dataset_id, PipelineConfig()
        )
        assert len(instances) == 7
        assert all(inst.label == "H" for inst in instances)

    def test_feature_vectors_normalized_and_finite(self, synth_manifest):
        manifest = load_manifest(synth_manifest)
        instances, log = extract_dataset(manifest, PipelineConfig())
        assert log["drives"]
        for inst in instances:
            assert np.all(np.isfinite(inst.features))
            assert inst.eda_features[2] >= 0.0 and inst.eda_features[3] <= 1.0

    def test_all_drives_failing_raises(self, tmp_path, synth_manifest):
        manifest = load_manifest(synth_manifest)
        for entry in manifest.drives:
            entry.eda_path.write_text("time_s,value\n", encoding="utf-8")
        with pytest.raises(SchemaError):
            extract_dataset(manifest, PipelineConfig())


class TestSyntheticGenerators:
    def test_signals_are_deterministic(self):
        eda1, hr1, seg1 = synth_drive_signals("d", seed=7)
        eda2, hr2, seg2 = synth_drive_signals("d", seed=7)
        np.testing.assert_array_equal(eda1.values, eda2.values)
        np.testing.assert_array_equal(hr1.values, hr2.values)
        assert seg1 == seg2

    def test_two_profile_shapes_and_balance(self):
        X, y, drives, profile_of = make_two_profile_instances(
            n_drives=6, windows_per_drive=10, seed=0
        )
        assert X.shape == (60, 14)
        assert np.sum(y == 1.0) == np.sum(y == -1.0) == 30
        assert set(profile_of.values()) == {1, 2}
        assert np.min(X) >= 0.0 and np.max(X) <= 1.0
        for drive in np.unique(drives.astype(str)):
            mask = drives == drive
            assert np.sum(y[mask] == 1.0) == 5

    def test_random_label_instances_balanced(self):
        X, y, drives = make_random_label_instances(100, seed=3)
        assert np.sum(y == 1.0) == 50
        assert X.shape == (100, 14)

"""
Tests for box, label, sidecar and dataset files.
"""

import json
import os
import tempfile
from pathlib import Path

import numpy as np
import pytest

from vidaug.clip_core import Box, BoxTrack, ClipDataset, ClipSample, VideoClip
from vidaug.errors import ValidationError
from vidaug.records import (
    MANIFEST_NAME,
    dumps_box_lines,
    process_box_lines,
    read_box_file,
    read_label_file,
    read_manifest,
    read_split,
    write_box_file,
    write_dataset,
    write_label_file,
    write_sidecar,
)


def box_line(clip_id, frame, x0, y0, x1, y1, score=1.0):
    return json.dumps(
        {"clip_id": clip_id, "frame": frame, "x0": x0, "y0": y0, "x1": x1, "y1": y1, "score": score}
    )


class TestBoxLines:
    """Test parsing of JSON Lines box records."""

    def test_groups_by_clip(self):
        """Boxes are grouped per clip in file order."""
        content = "\n".join(
            [box_line("a", 0, 0, 0, 2, 2), box_line("b", 1, 1, 1, 3, 3, 0.25), box_line("a", 1, 0, 0, 1, 1)]
        )
        tracks = process_box_lines(content)
        assert sorted(tracks) == ["a", "b"]
        assert tracks["a"].boxes == (Box(0, 0, 0, 2, 2, 1.0), Box(1, 0, 0, 1, 1, 1.0))
        assert tracks["b"].boxes[0].score == 0.25

    def test_blank_lines_skipped(self):
        """Empty lines between records are ignored."""
        content = "\n\n" + box_line("a", 0, 0, 0, 1, 1) + "\n   \n"
        assert len(process_box_lines(content)["a"].boxes) == 1

    def test_invalid_json_names_line(self):
        """Malformed JSON reports the source and line number."""
        content = box_line("a", 0, 0, 0, 1, 1) + "\n{not json"
        with pytest.raises(ValidationError, match="<boxes>:2"):
            process_box_lines(content)

    def test_missing_field(self):
        """A record without a required field is rejected."""
        with pytest.raises(ValidationError, match="score"):
            process_box_lines('{"clip_id": "a", "frame": 0, "x0": 0, "y0": 0, "x1": 1, "y1": 1}')

    def test_non_object_record(self):
        """Each line must be a JSON object."""
        with pytest.raises(ValidationError):
            process_box_lines("[1, 2, 3]")

    def test_file_round_trip(self):
        """Writing then reading a box file preserves the tracks."""
        tracks = {"a": BoxTrack("a", (Box(0, 1, 2, 3, 4, 0.5),)), "b": BoxTrack("b", (Box(2, 0, 0, 1, 1),))}
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "boxes.jsonl")
            write_box_file(path, tracks)
            assert read_box_file(path) == tracks

    def test_dumps_one_record_per_line(self):
        """Each box is serialized on its own line."""
        text = dumps_box_lines({"a": BoxTrack("a", (Box(0, 0, 0, 1, 1), Box(1, 0, 0, 1, 1)))})
        assert text.count("\n") == 2
        assert json.loads(text.splitlines()[1])["frame"] == 1


class TestLabelFile:
    """Test the label CSV."""

    def test_round_trip_with_header(self):
        """write_label_file writes a header that read_label_file skips."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "labels.csv")
            write_label_file(path, {"x": 3, "y": 0})
            assert Path(path).read_text().splitlines()[0] == "clip_id,class_index"
            assert read_label_file(path) == {"x": 3, "y": 0}

    def test_headerless(self):
        """A file without a header is accepted."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "labels.csv")
            Path(path).write_text("a,1\nb,2\n")
            assert read_label_file(path) == {"a": 1, "b": 2}

    def test_bad_rows(self):
        """Wrong column counts and non-integer indices are rejected."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "labels.csv")
            Path(path).write_text("a,1,2\n")
            with pytest.raises(ValidationError, match=":1:"):
                read_label_file(path)
            Path(path).write_text("a,one\n")
            with pytest.raises(ValidationError):
                read_label_file(path)


class TestSidecar:
    """Test augmentation sidecars."""

    def test_sorted_json(self):
        """Sidecars are indented JSON with sorted keys."""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "a.json")
            write_sidecar(path, {"seed": 7, "clip_id": "a"})
            text = Path(path).read_text()
        assert text.index('"clip_id"') < text.index('"seed"')
        assert json.loads(text) == {"clip_id": "a", "seed": 7}


class TestDatasetDirectory:
    """Test writing and reading dataset directories."""

    def make_dataset(self):
        samples = []
        for i in range(3):
            clip = VideoClip(np.full((2, 4, 4, 1), 10 * i), clip_id=f"c{i}")
            track = BoxTrack(f"c{i}", (Box(0, 0, 0, 2, 2), Box(1, 1, 1, 4, 4, 0.2)))
            samples.append(ClipSample(clip, i % 2, track))
        return ClipDataset(tuple(samples), 2)

    def test_round_trip(self):
        """A split reads back with the same clips, labels and boxes."""
        dataset = self.make_dataset()
        with tempfile.TemporaryDirectory() as tmpdir:
            write_dataset(tmpdir, {"labeled": dataset}, {"num_classes": 2})
            manifest = read_manifest(tmpdir)
            loaded = read_split(tmpdir, "labeled")
        assert manifest["splits"] == {"labeled": 3}
        assert loaded.labels == dataset.labels
        assert [c.clip_id for c in loaded.clips] == ["c0", "c1", "c2"]
        for original, read in zip(dataset.samples, loaded.samples):
            assert read.clip.pixels_equal(original.clip)
            assert read.boxes == original.boxes

    def test_masks_use_threshold(self):
        """Masks are rasterized with the requested score threshold."""
        with tempfile.TemporaryDirectory() as tmpdir:
            write_dataset(tmpdir, {"labeled": self.make_dataset()}, {"num_classes": 2})
            strict = read_split(tmpdir, "labeled", score_threshold=0.5)
            loose = read_split(tmpdir, "labeled", score_threshold=0.1)
        assert int(strict.samples[0].mask.mask.sum()) == 4
        assert int(loose.samples[0].mask.mask.sum()) == 4 + 9

    def test_missing_split(self):
        """An unknown split name is a validation error."""
        with tempfile.TemporaryDirectory() as tmpdir:
            write_dataset(tmpdir, {"labeled": self.make_dataset()}, {"num_classes": 2})
            with pytest.raises(ValidationError):
                read_split(tmpdir, "test_biased")

    def test_manifest_requires_classes(self):
        """A manifest without num_classes is rejected."""
        with tempfile.TemporaryDirectory() as tmpdir:
            Path(tmpdir, MANIFEST_NAME).write_text("name: x\n")
            with pytest.raises(ValidationError):
                read_manifest(tmpdir)

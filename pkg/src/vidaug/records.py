"""
Record files for vidaug.

Reads and writes the line-oriented companions of `.vclip` clips: cached
detector boxes (one JSON object per line), class labels (CSV), augmentation
sidecars (JSON), and whole dataset directories described by a YAML manifest.
"""

import csv
import io
import json
from collections import defaultdict
from pathlib import Path
from typing import Any, Mapping

import yaml

from .clip_core import (
    DEFAULT_SCORE_THRESHOLD,
    Box,
    BoxTrack,
    ClipDataset,
    ClipSample,
    load_clip,
    rasterize_masks,
    save_clip,
    write_bytes_atomic,
)
from .errors import ValidationError

BOX_FIELDS: tuple[str, ...] = ("clip_id", "frame", "x0", "y0", "x1", "y1", "score")
LABEL_HEADER: tuple[str, str] = ("clip_id", "class_index")
MANIFEST_NAME: str = "dataset.yaml"
LABELS_NAME: str = "labels.csv"
BOXES_NAME: str = "boxes.jsonl"
SPLIT_NAMES: tuple[str, ...] = ("labeled", "unlabeled", "test_biased", "test_decorrelated")


def _box_from_record(record: Any, line_num: int, source: str) -> tuple[str, Box]:
    if not isinstance(record, dict):
        raise ValidationError(f"{source}:{line_num}: expected a JSON object, got {type(record).__name__}")
    missing = [name for name in BOX_FIELDS if name not in record]
    if missing:
        raise ValidationError(f"{source}:{line_num}: missing fields {', '.join(missing)}")
    try:
        box = Box(
            frame=int(record["frame"]),
            x0=int(record["x0"]),
            y0=int(record["y0"]),
            x1=int(record["x1"]),
            y1=int(record["y1"]),
            score=float(record["score"]),
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{source}:{line_num}: {e}") from e
    return str(record["clip_id"]), box


def process_box_lines(content: str, source: str = "<boxes>") -> dict[str, BoxTrack]:
    """
    Parse box records, one JSON object per line.

    Args:
        content: The JSON Lines content to process
        source: Name used in error messages

    Returns:
        Mapping of clip id to its BoxTrack, boxes in file order

    Raises:
        ValidationError: If a line is not valid JSON or lacks a field
    """
    grouped: dict[str, list[Box]] = defaultdict(list)

    for line_num, line in enumerate(content.split("\n"), 1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{source}:{line_num}: invalid JSON: {e}") from e
        clip_id, box = _box_from_record(record, line_num, source)
        grouped[clip_id].append(box)

    return {clip_id: BoxTrack(clip_id, tuple(boxes)) for clip_id, boxes in grouped.items()}


def read_box_file(path: str | Path) -> dict[str, BoxTrack]:
    path = Path(path)
    return process_box_lines(path.read_text(encoding="utf-8"), source=str(path))


def dumps_box_lines(tracks: Mapping[str, BoxTrack]) -> str:
    lines = []
    for clip_id, track in tracks.items():
        for box in track.boxes:
            record = {"clip_id": clip_id, **box._asdict()}
            lines.append(json.dumps(record, separators=(", ", ": ")))
    return "".join(line + "\n" for line in lines)


def write_box_file(path: str | Path, tracks: Mapping[str, BoxTrack]) -> None:
    write_bytes_atomic(path, dumps_box_lines(tracks).encode("utf-8"))


def read_label_file(path: str | Path) -> dict[str, int]:
    """Read `clip_id,class_index` rows; a header row is optional."""
    path = Path(path)
    labels: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row_num, row in enumerate(csv.reader(f), 1):
            if not row or not "".join(row).strip():
                continue
            if row_num == 1 and tuple(cell.strip() for cell in row) == LABEL_HEADER:
                continue
            if len(row) != 2:
                raise ValidationError(f"{path}:{row_num}: expected 2 columns, got {len(row)}")
            try:
                labels[row[0].strip()] = int(row[1])
            except ValueError as e:
                raise ValidationError(f"{path}:{row_num}: bad class index {row[1]!r}") from e
    return labels


def write_label_file(path: str | Path, labels: Mapping[str, int]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(LABEL_HEADER)
    for clip_id, index in labels.items():
        writer.writerow([clip_id, index])
    write_bytes_atomic(path, buffer.getvalue().encode("utf-8"))


def write_sidecar(path: str | Path, payload: Mapping[str, Any]) -> None:
    """JSON sidecar describing how an augmented clip was produced."""
    text = json.dumps(dict(payload), indent=2, sort_keys=True) + "\n"
    write_bytes_atomic(path, text.encode("utf-8"))


def write_dataset(
    root: str | Path,
    splits: Mapping[str, ClipDataset],
    manifest: Mapping[str, Any],
) -> None:
    """Write each split as a directory of clips plus labels and boxes."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for name, dataset in splits.items():
        split_dir = root / name
        split_dir.mkdir(exist_ok=True)
        for sample in dataset.samples:
            save_clip(sample.clip, split_dir / f"{sample.clip.clip_id}.vclip")
        write_label_file(
            split_dir / LABELS_NAME, {s.clip.clip_id: s.label for s in dataset.samples}
        )
        write_box_file(split_dir / BOXES_NAME, {s.clip.clip_id: s.boxes for s in dataset.samples})
    document = {**manifest, "splits": {name: len(ds) for name, ds in splits.items()}}
    write_bytes_atomic(
        root / MANIFEST_NAME, yaml.safe_dump(document, sort_keys=False).encode("utf-8")
    )


def read_manifest(root: str | Path) -> dict[str, Any]:
    path = Path(root) / MANIFEST_NAME
    with open(path, encoding="utf-8") as f:
        document = yaml.safe_load(f)
    if not isinstance(document, dict) or "num_classes" not in document:
        raise ValidationError(f"{path}: manifest must be a mapping with num_classes")
    return document


def read_split(
    root: str | Path,
    name: str,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
) -> ClipDataset:
    """Load one split written by `write_dataset`, rasterizing its masks."""
    root = Path(root)
    manifest = read_manifest(root)
    split_dir = root / name
    if not split_dir.is_dir():
        raise ValidationError(f"split {name!r} not found under {root}")
    labels = read_label_file(split_dir / LABELS_NAME)
    boxes_path = split_dir / BOXES_NAME
    tracks = read_box_file(boxes_path) if boxes_path.exists() else {}
    samples = []
    for clip_id, label in labels.items():
        clip = load_clip(split_dir / f"{clip_id}.vclip")
        track = tracks.get(clip_id, BoxTrack(clip_id))
        mask = rasterize_masks(track, clip.t, clip.h, clip.w, score_threshold)
        samples.append(ClipSample(clip, label, track, mask))
    return ClipDataset(tuple(samples), int(manifest["num_classes"]))

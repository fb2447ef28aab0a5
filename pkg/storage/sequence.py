"""Sequence directory layout.

    <root>/sequence.json                      manifest (views, frame count)
    <root>/calibration.json                   rig calibration
    <root>/queries.json                       track queries
    <root>/ground_truth.json                  optional ground-truth tracks
    <root>/frames/view_XX/rgb_TTTTT.ppm
    <root>/frames/view_XX/depth_TTTTT.orgd
    <root>/frames/view_XX/gt_depth_TTTTT.orgd optional ground-truth depth

JSON and CSV floats are written with 17 significant digits, so every
float64 survives a write/read cycle exactly.
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Type, TypeVar, Union

from loguru import logger
from pydantic import BaseModel, ValidationError

from core.errors import DimensionMismatchError, MalformedDocumentError, MissingFileError, SequenceFormatError
from core.geometry import DepthMap, MultiViewFrame, RigCalibration
from rectification.geometry import RectifiedGeometry
from storage.formats import read_depth, read_ppm, write_depth, write_ppm
from storage.schemas import (
    CalibrationDoc,
    QueriesDoc,
    RectifiedDoc,
    SequenceManifest,
    TrackSetDoc,
    ViewInfo,
)
from tracking.types import Query, TrackSet

PathLike = Union[str, Path]
DocT = TypeVar("DocT", bound=BaseModel)

MANIFEST = "sequence.json"
CALIBRATION = "calibration.json"
QUERIES = "queries.json"
GROUND_TRUTH = "ground_truth.json"
RECTIFIED = "rectified.json"


def view_dir(root: PathLike, v: int) -> Path:
    return Path(root) / "frames" / f"view_{v:02d}"


def rgb_path(root: PathLike, v: int, t: int) -> Path:
    return view_dir(root, v) / f"rgb_{t:05d}.ppm"


def depth_path(root: PathLike, v: int, t: int) -> Path:
    return view_dir(root, v) / f"depth_{t:05d}.orgd"


def gt_depth_path(root: PathLike, v: int, t: int) -> Path:
    return view_dir(root, v) / f"gt_depth_{t:05d}.orgd"


def format_float(x: float) -> str:
    """17 significant digits; integral values keep a decimal point."""
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(float(x), ".17g")
    if not any(c in text for c in ".e"):
        text += ".0"
    return text


class FullPrecisionEncoder(json.JSONEncoder):
    """JSON encoder writing every float with format_float."""

    def iterencode(self, o: Any, _one_shot: bool = False):
        markers: Optional[Dict[int, Any]] = {} if self.check_circular else None
        encoder = json.encoder.encode_basestring_ascii if self.ensure_ascii else json.encoder.encode_basestring
        iterencode = json.encoder._make_iterencode(
            markers,
            self.default,
            encoder,
            self.indent,
            format_float,
            self.key_separator,
            self.item_separator,
            self.sort_keys,
            self.skipkeys,
            _one_shot,
        )
        return iterencode(o, 0)


def write_document(path: PathLike, doc: Union[BaseModel, Mapping[str, Any]]) -> None:
    """Deterministic JSON: fixed key order, 2-space indent, trailing newline."""
    data = doc.model_dump() if isinstance(doc, BaseModel) else dict(doc)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, cls=FullPrecisionEncoder) + "\n", encoding="utf-8")
    except OSError as e:
        raise SequenceFormatError(path, f"cannot write: {e.strerror or e}") from e


def read_document(path: PathLike, model: Type[DocT]) -> DocT:
    """Parse and validate a JSON document.

    Raises:
        MissingFileError: If the file does not exist
        MalformedDocumentError: If it is not valid JSON or fails validation
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(path)
    try:
        return model.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise MalformedDocumentError(path, f"invalid JSON: {e}") from e
    except ValidationError as e:
        raise MalformedDocumentError(path, f"{e.error_count()} validation error(s): {e.errors()[0]['msg']}") from e


def save_calibration(path: PathLike, rig: RigCalibration) -> None:
    write_document(path, CalibrationDoc.from_rig(rig))


def load_calibration(path: PathLike) -> RigCalibration:
    return read_document(path, CalibrationDoc).to_rig()


def save_queries(path: PathLike, queries: Sequence[Query]) -> None:
    write_document(path, QueriesDoc.from_queries(queries))


def load_queries(path: PathLike) -> List[Query]:
    return read_document(path, QueriesDoc).to_queries()


def save_tracks(path: PathLike, track_set: TrackSet) -> Path:
    """Write tracks as JSON plus a flat `id,t,x,y,z,visibility` CSV next to it.

    Returns:
        Path of the CSV file
    """
    path = Path(path)
    write_document(path, TrackSetDoc.from_track_set(track_set))
    csv_path = path.with_suffix(".csv")
    with csv_path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id", "t", "x", "y", "z", "visibility"])
        for track in track_set:
            for t, p, v in zip(track.frames, track.positions, track.visibility):
                writer.writerow([track.id, int(t), *(format_float(c) for c in p), format_float(v)])
    return csv_path


def load_tracks(path: PathLike) -> TrackSet:
    return read_document(path, TrackSetDoc).to_track_set()


def save_rectified(
    path: PathLike, geom: RectifiedGeometry, hints: str, mean_consistency: Optional[float] = None
) -> None:
    write_document(
        path,
        RectifiedDoc(
            hints=hints,
            calibration=CalibrationDoc.from_rig(geom.rig),
            corrections=list(geom.corrections),
            normalizers=list(geom.normalizers),
            converged=geom.converged,
            scale_observable=geom.scale_observable,
            iterations=geom.iterations,
            initial_cost=geom.initial_cost,
            final_cost=geom.final_cost,
            mean_consistency=mean_consistency,
        ),
    )


def load_rectified(path: PathLike, frames: Sequence[MultiViewFrame]) -> RectifiedGeometry:
    """Rebuild RectifiedGeometry, re-applying the stored corrections to `frames`."""
    doc = read_document(path, RectifiedDoc)
    geom = RectifiedGeometry(
        rig=doc.calibration.to_rig(),
        corrections=tuple(doc.corrections),
        normalizers=tuple(doc.normalizers),
        per_frame_depth=(),
        converged=doc.converged,
        scale_observable=doc.scale_observable,
        iterations=doc.iterations,
        initial_cost=doc.initial_cost,
        final_cost=doc.final_cost,
    )
    return geom.with_frames(frames)


def write_report(path: PathLike, report: Mapping[str, Any]) -> None:
    write_document(path, report)


def write_table(path: PathLike, rows: Sequence[Mapping[str, Any]]) -> None:
    """Delimited text (CSV) with the keys of the first row as header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        if not rows:
            return
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()), lineterminator="\n")
        writer.writeheader()
        writer.writerows({k: format_float(v) if isinstance(v, float) else v for k, v in row.items()} for row in rows)


@dataclass(frozen=True)
class LoadedSequence:
    """In-memory sequence with everything the directory provides."""

    name: str
    frames: Tuple[MultiViewFrame, ...]
    rig: RigCalibration
    queries: Tuple[Query, ...]
    ground_truth: Optional[TrackSet] = None
    gt_depth: Optional[Tuple[Tuple[DepthMap, ...], ...]] = None

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def num_views(self) -> int:
        return self.rig.num_views

    def gt_frames(self) -> Tuple[MultiViewFrame, ...]:
        """Frames with ground-truth depth (the stored depth when none was saved)."""
        if self.gt_depth is None:
            return self.frames
        return tuple(f.with_depths(d) for f, d in zip(self.frames, self.gt_depth))


def save_sequence(
    root: PathLike,
    frames: Sequence[MultiViewFrame],
    rig: RigCalibration,
    queries: Sequence[Query] = (),
    ground_truth: Optional[TrackSet] = None,
    gt_depth: Optional[Sequence[Sequence[DepthMap]]] = None,
    name: str = "",
) -> Path:
    """Write a sequence directory; identical inputs give identical bytes.

    Raises:
        SequenceFormatError: If the directory cannot be written
    """
    root = Path(root)
    if not frames:
        raise SequenceFormatError(root, "cannot save a sequence without frames")
    first = frames[0]
    manifest = SequenceManifest(
        name=name,
        num_frames=len(frames),
        views=[ViewInfo(width=first.depth(v).width, height=first.depth(v).height) for v in range(first.num_views)],
        has_gt_depth=gt_depth is not None,
    )
    try:
        for v in range(first.num_views):
            view_dir(root, v).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise SequenceFormatError(root, f"cannot create frame directories: {e.strerror or e}") from e
    write_document(root / MANIFEST, manifest)
    save_calibration(root / CALIBRATION, rig)
    save_queries(root / QUERIES, queries)
    if ground_truth is not None:
        write_document(root / GROUND_TRUTH, TrackSetDoc.from_track_set(ground_truth))
    for frame in frames:
        for v in range(frame.num_views):
            write_ppm(rgb_path(root, v, frame.t), frame.rgb(v))
            write_depth(depth_path(root, v, frame.t), frame.depth(v))
            if gt_depth is not None:
                write_depth(gt_depth_path(root, v, frame.t), gt_depth[frame.t][v])
    logger.info(f"Saved sequence {name or root.name!r}: {len(frames)} frames x {first.num_views} views to {root}")
    return root


def load_sequence(root: PathLike) -> LoadedSequence:
    """Read and validate a sequence directory.

    Raises:
        MissingFileError: If a required file is absent
        DimensionMismatchError: If a frame file disagrees with the manifest
        MalformedDocumentError: If a document fails to parse or validate
        InvariantViolationError: If a loaded value breaks a type invariant
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingFileError(root, "sequence directory not found")
    manifest = read_document(root / MANIFEST, SequenceManifest)
    rig = load_calibration(root / CALIBRATION)
    if rig.num_views != len(manifest.views):
        raise DimensionMismatchError(
            root / CALIBRATION, f"{rig.num_views} calibrated views, manifest declares {len(manifest.views)}"
        )
    queries = load_queries(root / QUERIES)
    ground_truth = None
    if (root / GROUND_TRUTH).is_file():
        ground_truth = read_document(root / GROUND_TRUTH, TrackSetDoc).to_track_set()
        if ground_truth.num_frames != manifest.num_frames:
            raise DimensionMismatchError(
                root / GROUND_TRUTH, f"covers {ground_truth.num_frames} frames, manifest declares {manifest.num_frames}"
            )
    for q in queries:
        if q.t_q >= manifest.num_frames:
            raise MalformedDocumentError(root / QUERIES, f"query {q.id!r} starts after the last frame")

    frames: List[MultiViewFrame] = []
    gt_depth: List[Tuple[DepthMap, ...]] = []
    for t in range(manifest.num_frames):
        views = []
        gt_views = []
        for v, info in enumerate(manifest.views):
            size = (info.width, info.height)
            views.append((read_ppm(rgb_path(root, v, t), size), read_depth(depth_path(root, v, t), size)))
            if manifest.has_gt_depth:
                gt_views.append(read_depth(gt_depth_path(root, v, t), size))
        frames.append(MultiViewFrame(t=t, views=tuple(views)))
        if manifest.has_gt_depth:
            gt_depth.append(tuple(gt_views))
    logger.info(f"Loaded sequence {manifest.name or root.name!r}: {manifest.num_frames} frames x {rig.num_views} views")
    return LoadedSequence(
        name=manifest.name,
        frames=tuple(frames),
        rig=rig,
        queries=tuple(queries),
        ground_truth=ground_truth,
        gt_depth=tuple(gt_depth) if manifest.has_gt_depth else None,
    )


def report_rows(records: Sequence[Any]) -> List[Dict[str, Any]]:
    """Flatten records exposing `as_dict()` into table rows."""
    return [r.as_dict() if hasattr(r, "as_dict") else dict(r) for r in records]

"""Loading of labeled point-cloud sequences: manifests, frame files, cropping.

Frames are re-expressed on load so that column 0 is the lateral axis,
column 1 the vertical axis and column 2 the depth axis. Which sensor axis
plays which role is controlled by an :class:`AxisConvention`; the default
is the identity mapping (X lateral, Y vertical, Z depth).

Supported frame formats:

* ``.xyz``  ASCII text, one ``x y z`` triple per line
* ``.bin``  packed little-endian float32 x,y,z triples
* ``.ply``  ASCII PLY with at least ``x``, ``y``, ``z`` vertex properties

Manifests are JSON Lines: one record per line with fields ``sequence_id``,
``subject_id``, ``activity_id``, ``environment_id``, ``frame_rate_hz``,
``frames`` (ordered array of paths relative to the manifest) and optional
``bbox`` (``{"center": [3], "size": [3], "yaw": float}``) and ``axes``
(``{"lateral": "X", "vertical": "Y", "depth": "Z"}``).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyFrameError, FrameFormatError, ManifestError

_AXIS_TO_COLUMN = {"X": 0, "Y": 1, "Z": 2}

FRAME_SUFFIXES = (".xyz", ".bin", ".ply")


@dataclass(frozen=True)
class AxisConvention:
    """Maps sensor axes to the (lateral, vertical, depth) roles."""

    lateral_axis: str = "X"
    vertical_axis: str = "Y"
    depth_axis: str = "Z"

    def __post_init__(self) -> None:
        axes = (self.lateral_axis, self.vertical_axis, self.depth_axis)
        for a in axes:
            if a not in _AXIS_TO_COLUMN:
                raise ValueError(f"axis must be one of X/Y/Z, got {a!r}")
        if len(set(axes)) != 3:
            raise ValueError(f"axes must be distinct, got {axes}")

    @property
    def column_order(self) -> tuple[int, int, int]:
        """Indices into raw (x, y, z) columns, in lateral/vertical/depth order."""
        return (
            _AXIS_TO_COLUMN[self.lateral_axis],
            _AXIS_TO_COLUMN[self.vertical_axis],
            _AXIS_TO_COLUMN[self.depth_axis],
        )

    def to_dict(self) -> dict:
        return {
            "lateral": self.lateral_axis,
            "vertical": self.vertical_axis,
            "depth": self.depth_axis,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AxisConvention":
        return cls(d["lateral"], d["vertical"], d["depth"])


IDENTITY_AXES = AxisConvention()


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box yawed about the vertical axis.

    ``center`` and ``size`` live in the same (lateral, vertical, depth)
    coordinates as loaded frames. ``yaw`` rotates the box's lateral axis
    toward the depth axis.
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self) -> None:
        if len(self.center) != 3 or len(self.size) != 3:
            raise ValueError("bbox center and size must be 3-vectors")
        if any(s <= 0 for s in self.size):
            raise ValueError(f"bbox size components must be > 0, got {self.size}")

    def to_dict(self) -> dict:
        return {"center": list(self.center), "size": list(self.size), "yaw": self.yaw}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        return cls(tuple(d["center"]), tuple(d["size"]), float(d.get("yaw", 0.0)))


@dataclass
class FrameCloud:
    """One time-stamped set of 3D points for one subject.

    ``points`` is an (N, 3) float64 array in lateral/vertical/depth order;
    all coordinates are finite (non-finite rows are dropped at load time and
    counted in ``n_dropped``). N may be zero.
    """

    points: np.ndarray
    frame_index: int = 0
    timestamp: float = 0.0
    n_dropped: int = 0

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got shape {pts.shape}")
        self.points = pts

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0


@dataclass
class SequenceRecord:
    """One labeled recording: ordered frame files plus identity labels."""

    sequence_id: str
    subject_id: str
    activity_id: str
    environment_id: str
    frame_paths: list[Path]
    frame_rate_hz: float = 10.0
    bbox: BoundingBox | None = None
    axes: AxisConvention = field(default_factory=AxisConvention)

    def __post_init__(self) -> None:
        if not self.frame_paths:
            raise ValueError(f"sequence {self.sequence_id!r} has no frames")
        if self.frame_rate_hz <= 0:
            raise ValueError(
                f"sequence {self.sequence_id!r}: frame_rate_hz must be > 0"
            )

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.subject_id, self.activity_id, self.sequence_id)

    @property
    def n_frames(self) -> int:
        return len(self.frame_paths)


_REQUIRED_MANIFEST_FIELDS = (
    "sequence_id",
    "subject_id",
    "activity_id",
    "environment_id",
    "frames",
)


def load_manifest(path: str | Path) -> list[SequenceRecord]:
    """Parse a JSON Lines manifest into SequenceRecords, order preserved.

    Raises ManifestError with the offending line number on parse errors,
    missing fields or duplicate (subject, activity, sequence) keys.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    records: list[SequenceRecord] = []
    seen: set[tuple[str, str, str]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: record must be an object")
            missing = [f for f in _REQUIRED_MANIFEST_FIELDS if f not in obj]
            if missing:
                raise ManifestError(
                    f"{path}:{lineno}: missing required field(s) {missing}"
                )
            frames = obj["frames"]
            if not isinstance(frames, list) or not frames:
                raise ManifestError(f"{path}:{lineno}: 'frames' must be a non-empty list")
            try:
                record = SequenceRecord(
                    sequence_id=str(obj["sequence_id"]),
                    subject_id=str(obj["subject_id"]),
                    activity_id=str(obj["activity_id"]),
                    environment_id=str(obj["environment_id"]),
                    frame_paths=[base / str(p) for p in frames],
                    frame_rate_hz=float(obj.get("frame_rate_hz", 10.0)),
                    bbox=BoundingBox.from_dict(obj["bbox"]) if obj.get("bbox") else None,
                    axes=AxisConvention.from_dict(obj["axes"])
                    if obj.get("axes")
                    else IDENTITY_AXES,
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if record.key in seen:
                raise ManifestError(
                    f"{path}:{lineno}: duplicate (subject, activity, sequence) key "
                    f"{record.key}"
                )
            seen.add(record.key)
            records.append(record)
    return records


def save_manifest(records: Iterable[SequenceRecord], path: str | Path) -> None:
    """Write records as JSON Lines with frame paths relative to the manifest."""
    path = Path(path)
    base = path.parent
    lines = []
    for rec in records:
        obj: dict = {
            "sequence_id": rec.sequence_id,
            "subject_id": rec.subject_id,
            "activity_id": rec.activity_id,
            "environment_id": rec.environment_id,
            "frame_rate_hz": rec.frame_rate_hz,
            "frames": [os.path.relpath(p, base) for p in rec.frame_paths],
        }
        if rec.bbox is not None:
            obj["bbox"] = rec.bbox.to_dict()
        if rec.axes != IDENTITY_AXES:
            obj["axes"] = rec.axes.to_dict()
        lines.append(json.dumps(obj, sort_keys=True))
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _parse_xyz(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        parts = s.split()
        if len(parts) != 3:
            raise FrameFormatError(
                f"{path}:{lineno}: expected 3 values per line, got {len(parts)}"
            )
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise FrameFormatError(f"{path}:{lineno}: non-numeric value") from exc
    if not rows:
        return np.empty((0, 3), dtype=np.float64)
    return np.array(rows, dtype=np.float64)


def _parse_bin(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) % 12 != 0:
        raise FrameFormatError(
            f"{path}: truncated binary frame ({len(raw)} bytes is not a "
            "multiple of 12)"
        )
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(-1, 3)


def _parse_ply(path: Path) -> np.ndarray:
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FrameFormatError(f"{path}: missing 'ply' magic")
    n_vertices = None
    properties: list[str] = []
    in_vertex_element = False
    data_start = None
    for i, line in enumerate(lines[1:], start=1):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise FrameFormatError(f"{path}: only ASCII PLY is supported")
        elif tokens[0] == "element":
            in_vertex_element = tokens[1] == "vertex"
            if in_vertex_element:
                n_vertices = int(tokens[2])
        elif tokens[0] == "property" and in_vertex_element:
            properties.append(tokens[-1])
        elif tokens[0] == "end_header":
            data_start = i + 1
            break
    if data_start is None or n_vertices is None:
        raise FrameFormatError(f"{path}: malformed PLY header")
    try:
        cols = [properties.index(name) for name in ("x", "y", "z")]
    except ValueError as exc:
        raise FrameFormatError(f"{path}: PLY lacks x/y/z vertex properties") from exc
    rows = np.empty((n_vertices, 3), dtype=np.float64)
    for k in range(n_vertices):
        idx = data_start + k
        if idx >= len(lines):
            raise FrameFormatError(f"{path}: truncated PLY data")
        parts = lines[idx].split()
        if len(parts) < len(properties):
            raise FrameFormatError(f"{path}:{idx + 1}: short PLY data row")
        try:
            rows[k] = [float(parts[c]) for c in cols]
        except ValueError as exc:
            raise FrameFormatError(f"{path}:{idx + 1}: non-numeric value") from exc
    return rows


def load_frame(
    path: str | Path,
    convention: AxisConvention = IDENTITY_AXES,
    frame_index: int = 0,
    timestamp: float = 0.0,
) -> FrameCloud:
    """Load one frame file, drop non-finite points, apply the axis convention."""
    path = Path(path)
    if not path.exists():
        raise FrameFormatError(f"frame file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".xyz":
        raw = _parse_xyz(path)
    elif suffix == ".bin":
        raw = _parse_bin(path)
    elif suffix == ".ply":
        raw = _parse_ply(path)
    else:
        raise FrameFormatError(f"{path}: unknown frame extension {suffix!r}")
    finite = np.isfinite(raw).all(axis=1)
    dropped = int(raw.shape[0] - finite.sum())
    pts = raw[finite][:, convention.column_order]
    return FrameCloud(
        points=pts, frame_index=frame_index, timestamp=timestamp, n_dropped=dropped
    )


def write_frame(points: np.ndarray, path: str | Path) -> None:
    """Write points to .xyz/.bin/.ply by extension (text uses 7 significant digits)."""
    path = Path(path)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    suffix = path.suffix.lower()
    if suffix == ".xyz":
        lines = [f"{p[0]:.7g} {p[1]:.7g} {p[2]:.7g}" for p in pts]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    elif suffix == ".bin":
        path.write_bytes(pts.astype("<f4").tobytes())
    elif suffix == ".ply":
        header = [
            "ply",
            "format ascii 1.0",
            f"element vertex {len(pts)}",
            "property float x",
            "property float y",
            "property float z",
            "end_header",
        ]
        lines = header + [f"{p[0]:.7g} {p[1]:.7g} {p[2]:.7g}" for p in pts]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        raise FrameFormatError(f"{path}: unknown frame extension {suffix!r}")


def crop_to_bbox(frame: FrameCloud, bbox: BoundingBox) -> FrameCloud:
    """Keep points inside the yaw-rotated box; an empty result is legal."""
    pts = frame.points
    if pts.shape[0] == 0:
        return replace(frame, points=pts.copy())
    center = np.asarray(bbox.center, dtype=np.float64)
    half = np.asarray(bbox.size, dtype=np.float64) / 2.0
    d = pts - center
    c, s = math.cos(bbox.yaw), math.sin(bbox.yaw)
    # Express offsets in the box frame: inverse yaw rotation about vertical.
    local = np.empty_like(d)
    local[:, 0] = c * d[:, 0] + s * d[:, 2]
    local[:, 1] = d[:, 1]
    local[:, 2] = -s * d[:, 0] + c * d[:, 2]
    inside = (np.abs(local) <= half).all(axis=1)
    return replace(frame, points=pts[inside])


def load_sequence_frames(record: SequenceRecord) -> list[FrameCloud]:
    """Load all frames of a record: axis convention applied, bbox crop if present.

    Frame indices are the positions in the record; timestamps follow the
    record's frame rate.
    """
    frames = []
    dt = 1.0 / record.frame_rate_hz
    for i, p in enumerate(record.frame_paths):
        frame = load_frame(p, record.axes, frame_index=i, timestamp=i * dt)
        if record.bbox is not None:
            frame = crop_to_bbox(frame, record.bbox)
        frames.append(frame)
    return frames

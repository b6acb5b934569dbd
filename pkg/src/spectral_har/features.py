"""Per-frame spectral descriptors and sliding-window aggregation.

Per frame and per body part, three descriptor blocks are computed from the
Laplacian spectrum:

* a 6-value summary of the non-trivial eigenvalues
  (mean, std, median, p25, p75, max),
* the first ``k_val`` non-trivial eigenvalues, zero-padded,
* 7 statistics of each of the first ``k_vec`` non-trivial eigenvectors
  (mean, std, max, min, excess kurtosis, Shannon entropy of the squared
  components, range of absolute values), concatenated.

Windows of W frames are reduced by one of four eigenvalue strategies:

* A: temporal statistics over the per-frame 6-value summaries
* B: temporal statistics over the per-frame selected eigenvalues
* C: concatenation of the per-frame summaries
* D: concatenation of the per-frame selected eigenvalues

Eigenvector statistics, when enabled, are always temporally aggregated.
The window vector concatenates the per-part [values; vectors] blocks in
ascending part-id order.

Statistic conventions, used consistently throughout: population standard
deviation, population skewness, excess kurtosis, linear-interpolation
percentiles, natural-log entropy with 0*ln(0) = 0. Skewness and kurtosis
are defined as 0 when the variance falls below 1e-12. Intermediate math is
double precision; stored feature vectors are float32.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, EmptyFrameError
from .graph import build_graph, laplacian
from .ingest import FrameCloud, SequenceRecord, load_sequence_frames
from .partition import PART_IDS, partition_frame
from .spectrum import Spectrum, decompose

STRATEGIES = ("A", "B", "C", "D")

TEMPORAL_STAT_NAMES = ("mean", "std", "range", "median", "iqr", "skew", "kurt")

EIGENVALUE_SUMMARY_DIM = 6
EIGENVECTOR_STAT_COUNT = 7

# Below this many points a part carries no usable non-trivial spectrum.
MIN_POINTS_FOR_SPECTRUM = 3

_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureConfig:
    """Everything that determines the shape and content of window vectors."""

    strategy: str = "B"
    use_eigenvectors: bool = True
    k_val: int = 60
    k_vec: int = 40
    window_seconds: float = 4.0
    stride_seconds: float = 0.5
    radius_m: float = 0.15
    parts: tuple[int, ...] = (0, 1, 2, 3, 4)
    min_valid_fraction: float = 0.8
    temporal_stats: tuple[str, ...] = TEMPORAL_STAT_NAMES

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.k_val < 1 or self.k_vec < 1:
            raise ValueError("k_val and k_vec must be >= 1")
        if not (self.window_seconds >= self.stride_seconds > 0):
            raise ValueError("need window_seconds >= stride_seconds > 0")
        if self.radius_m <= 0:
            raise ValueError("radius_m must be > 0")
        parts = tuple(sorted(set(int(p) for p in self.parts)))
        if not parts:
            raise ValueError("parts must be non-empty")
        if any(p not in PART_IDS for p in parts):
            raise ValueError(f"part ids must be in {PART_IDS}, got {parts}")
        object.__setattr__(self, "parts", parts)
        if not (0.0 < self.min_valid_fraction <= 1.0):
            raise ValueError("min_valid_fraction must be in (0, 1]")
        stats = tuple(self.temporal_stats)
        unknown = [s for s in stats if s not in TEMPORAL_STAT_NAMES]
        if unknown or not stats:
            raise ValueError(f"unknown temporal statistics {unknown}")
        object.__setattr__(self, "temporal_stats", stats)

    def window_frames(self, frame_rate_hz: float) -> int:
        w = int(round(self.window_seconds * frame_rate_hz))
        if w < 1:
            raise ValueError(
                f"window of {self.window_seconds}s at {frame_rate_hz}Hz has no frames"
            )
        return w

    def stride_frames(self, frame_rate_hz: float) -> int:
        return max(1, int(round(self.stride_seconds * frame_rate_hz)))

    def value_dimension(self, window_frames: int) -> int:
        t = len(self.temporal_stats)
        if self.strategy == "A":
            return EIGENVALUE_SUMMARY_DIM * t
        if self.strategy == "B":
            return self.k_val * t
        if self.strategy == "C":
            return EIGENVALUE_SUMMARY_DIM * window_frames
        return self.k_val * window_frames

    def vector_dimension(self) -> int:
        if not self.use_eigenvectors:
            return 0
        return EIGENVECTOR_STAT_COUNT * self.k_vec * len(self.temporal_stats)

    def part_dimension(self, window_frames: int) -> int:
        return self.value_dimension(window_frames) + self.vector_dimension()

    def dimension(self, frame_rate_hz: float = 10.0) -> int:
        """Closed-form window vector length for the given frame rate."""
        return len(self.parts) * self.part_dimension(self.window_frames(frame_rate_hz))

    def frame_key(self) -> tuple:
        """Configuration subset that determines per-frame descriptors.

        Cells of an ablation grid sharing this key can reuse frame features.
        """
        return (self.radius_m, self.parts, self.k_val, self.k_vec)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "use_eigenvectors": self.use_eigenvectors,
            "k_val": self.k_val,
            "k_vec": self.k_vec,
            "window_seconds": self.window_seconds,
            "stride_seconds": self.stride_seconds,
            "radius_m": self.radius_m,
            "parts": list(self.parts),
            "min_valid_fraction": self.min_valid_fraction,
            "temporal_stats": list(self.temporal_stats),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        d = dict(d)
        if "parts" in d:
            d["parts"] = tuple(d["parts"])
        if "temporal_stats" in d:
            d["temporal_stats"] = tuple(d["temporal_stats"])
        return cls(**d)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class FrameFeature:
    """Descriptor blocks of one body part in one frame."""

    summary: np.ndarray
    selected: np.ndarray
    vector_stats: np.ndarray
    valid: bool


@dataclass
class FramePartFeatures:
    """All configured parts of one frame, plus frame-level validity.

    A frame is valid when its (cropped) cloud has at least
    MIN_POINTS_FOR_SPECTRUM finite points; individual parts may still be
    invalid when too few points land in them.
    """

    parts: dict[int, FrameFeature]
    valid: bool


@dataclass
class WindowFeature:
    """One fixed-length descriptor for a (sequence, window-offset) pair."""

    vector: np.ndarray
    sequence_id: str
    subject_id: str
    activity_id: str
    environment_id: str
    window_start_frame: int


@dataclass
class ExtractionStats:
    """Bookkeeping for one extraction run."""

    n_windows: int = 0
    n_windows_dropped: int = 0
    n_frames: int = 0
    n_frames_invalid: int = 0
    n_points_dropped: int = 0

    def merge(self, other: "ExtractionStats") -> None:
        self.n_windows += other.n_windows
        self.n_windows_dropped += other.n_windows_dropped
        self.n_frames += other.n_frames
        self.n_frames_invalid += other.n_frames_invalid
        self.n_points_dropped += other.n_points_dropped


class WindowBelowValidFraction(DataError):
    """Window rejected: too few valid frames."""


def _percentiles(x: np.ndarray, q: Sequence[float], axis: int = 0) -> np.ndarray:
    return np.percentile(x, q, axis=axis)


def eigenvalue_summary(spectrum: Spectrum) -> np.ndarray:
    """(mean, std, median, p25, p75, max) of the non-trivial eigenvalues."""
    if spectrum.n_values < 2:
        raise ValueError("eigenvalue summary needs at least 2 eigenvalues")
    lam = spectrum.eigenvalues[1:]
    p25, med, p75 = _percentiles(lam, (25.0, 50.0, 75.0))
    return np.array(
        [lam.mean(), lam.std(), med, p25, p75, lam.max()], dtype=np.float64
    )


def eigenvalue_select(spectrum: Spectrum, k_val: int) -> np.ndarray:
    """First k_val non-trivial eigenvalues, zero-padded on the right."""
    out = np.zeros(k_val, dtype=np.float64)
    lam = spectrum.eigenvalues[1 : 1 + k_val]
    out[: lam.shape[0]] = lam
    return out


def eigenvector_stats(spectrum: Spectrum, k_vec: int) -> np.ndarray:
    """7 statistics per non-trivial eigenvector, (k_vec * 7,) with zero blocks
    for eigenvectors beyond the available count.

    Per eigenvector, in order: mean, population std, max, min, excess
    kurtosis, Shannon entropy of the squared components (natural log), and
    the range of absolute values.
    """
    out = np.zeros((k_vec, EIGENVECTOR_STAT_COUNT), dtype=np.float64)
    m = min(k_vec, max(0, spectrum.n_vectors - 1))
    if m > 0:
        u = spectrum.eigenvectors[:, 1 : 1 + m]
        mean = u.mean(axis=0)
        d = u - mean
        m2 = np.mean(d * d, axis=0)
        m4 = np.mean(d**4, axis=0)
        std = np.sqrt(m2)
        kurt = np.where(m2 >= _VAR_FLOOR, m4 / np.where(m2 >= _VAR_FLOOR, m2, 1.0) ** 2 - 3.0, 0.0)
        p = u * u
        ent = -np.sum(np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0), axis=0)
        au = np.abs(u)
        out[:m] = np.column_stack(
            (mean, std, u.max(axis=0), u.min(axis=0), kurt, ent, au.max(axis=0) - au.min(axis=0))
        )
    return out.ravel()


def _temporal_stat_matrix(arr: np.ndarray, stat_names: Sequence[str]) -> np.ndarray:
    """Rows of statistics over axis 0 of (W, D) data, one row per statistic."""
    rows = []
    mean = arr.mean(axis=0)
    d = arr - mean
    m2 = np.mean(d * d, axis=0)
    std = np.sqrt(m2)
    safe_m2 = np.where(m2 >= _VAR_FLOOR, m2, 1.0)
    cache: dict[str, np.ndarray] = {}
    for name in stat_names:
        if name == "mean":
            rows.append(mean)
        elif name == "std":
            rows.append(std)
        elif name == "range":
            rows.append(arr.max(axis=0) - arr.min(axis=0))
        elif name == "median":
            rows.append(np.percentile(arr, 50.0, axis=0))
        elif name == "iqr":
            if "p25" not in cache:
                cache["p25"], cache["p75"] = _percentiles(arr, (25.0, 75.0))
            rows.append(cache["p75"] - cache["p25"])
        elif name == "skew":
            m3 = np.mean(d**3, axis=0)
            rows.append(np.where(m2 >= _VAR_FLOOR, m3 / safe_m2**1.5, 0.0))
        elif name == "kurt":
            m4 = np.mean(d**4, axis=0)
            rows.append(np.where(m2 >= _VAR_FLOOR, m4 / safe_m2**2 - 3.0, 0.0))
        else:
            raise ValueError(f"unknown temporal statistic {name!r}")
    return np.vstack(rows)


def aggregate_temporal_stats(
    series: Sequence[np.ndarray] | np.ndarray,
    stat_names: Sequence[str] = TEMPORAL_STAT_NAMES,
) -> np.ndarray:
    """Per-dimension temporal statistics of a (W, D) series, flattened (D * T,).

    Output is grouped per dimension: for each feature dimension all T
    statistics appear together, in the order given by ``stat_names``.
    """
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError("temporal aggregation needs a non-empty (W, D) series")
    return _temporal_stat_matrix(arr, stat_names).T.ravel()


def aggregate_concat(series: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """Concatenate per-frame vectors in frame order, (W * D,)."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError("concatenation needs a non-empty (W, D) series")
    return arr.ravel()


def frame_feature(cloud: FrameCloud, config: FeatureConfig) -> FrameFeature:
    """Descriptor blocks for one part cloud; invalid (zeros) below 3 points."""
    if cloud.n_points < MIN_POINTS_FOR_SPECTRUM:
        return _invalid_frame_feature(config)
    g = build_graph(cloud, config.radius_m)
    spec = decompose(laplacian(g), config.k_val, config.k_vec)
    return FrameFeature(
        summary=eigenvalue_summary(spec),
        selected=eigenvalue_select(spec, config.k_val),
        vector_stats=eigenvector_stats(spec, config.k_vec),
        valid=True,
    )


def _invalid_frame_feature(config: FeatureConfig) -> FrameFeature:
    return FrameFeature(
        summary=np.zeros(EIGENVALUE_SUMMARY_DIM),
        selected=np.zeros(config.k_val),
        vector_stats=np.zeros(EIGENVECTOR_STAT_COUNT * config.k_vec),
        valid=False,
    )


def compute_frame_features(
    record: SequenceRecord, config: FeatureConfig, threads: int = 1
) -> tuple[list[FramePartFeatures], ExtractionStats]:
    """Load a sequence and compute per-part descriptors for every frame.

    Safe to parallelize across frames: results are assembled in frame order,
    so the output is identical for any thread count.
    """
    frames = load_sequence_frames(record)
    stats = ExtractionStats(n_frames=len(frames))
    stats.n_points_dropped = sum(f.n_dropped for f in frames)

    def one(frame: FrameCloud) -> FramePartFeatures:
        if frame.n_points < MIN_POINTS_FOR_SPECTRUM:
            return FramePartFeatures(
                parts={p: _invalid_frame_feature(config) for p in config.parts},
                valid=False,
            )
        part_set = partition_frame(frame)
        return FramePartFeatures(
            parts={p: frame_feature(part_set[p], config) for p in config.parts},
            valid=True,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            features = list(pool.map(one, frames))
    else:
        features = [one(f) for f in frames]
    stats.n_frames_invalid = sum(1 for f in features if not f.valid)
    return features, stats


def _impute_invalid_rows(arr: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Replace invalid rows by the mean of the valid rows (all-invalid -> zeros)."""
    if valid.all():
        return arr
    if not valid.any():
        return np.zeros_like(arr)
    out = arr.copy()
    out[~valid] = arr[valid].mean(axis=0)
    return out


def window_feature(
    window: Sequence[FramePartFeatures],
    config: FeatureConfig,
    record: SequenceRecord,
    window_start_frame: int,
) -> WindowFeature:
    """Assemble one window vector from W consecutive frames' part features.

    Raises WindowBelowValidFraction when the share of valid frames is below
    ``config.min_valid_fraction``. Invalid frames inside an accepted window
    are replaced, per part, by the within-window mean of the valid frames.
    """
    w = len(window)
    if w < 1:
        raise ValueError("window must contain at least one frame")
    n_valid = sum(1 for f in window if f.valid)
    if n_valid / w < config.min_valid_fraction:
        raise WindowBelowValidFraction(
            f"window at frame {window_start_frame}: {n_valid}/{w} valid frames"
        )
    blocks: list[np.ndarray] = []
    for part in config.parts:
        feats = [f.parts[part] for f in window]
        part_valid = np.array([f.valid for f in feats], dtype=bool)
        if config.strategy in ("A", "C"):
            val_series = np.stack([f.summary for f in feats])
        else:
            val_series = np.stack([f.selected for f in feats])
        val_series = _impute_invalid_rows(val_series, part_valid)
        if config.strategy in ("A", "B"):
            blocks.append(aggregate_temporal_stats(val_series, config.temporal_stats))
        else:
            blocks.append(aggregate_concat(val_series))
        if config.use_eigenvectors:
            vec_series = _impute_invalid_rows(
                np.stack([f.vector_stats for f in feats]), part_valid
            )
            blocks.append(aggregate_temporal_stats(vec_series, config.temporal_stats))
    return WindowFeature(
        vector=np.concatenate(blocks),
        sequence_id=record.sequence_id,
        subject_id=record.subject_id,
        activity_id=record.activity_id,
        environment_id=record.environment_id,
        window_start_frame=window_start_frame,
    )


def assemble_windows(
    features: Sequence[FramePartFeatures],
    record: SequenceRecord,
    config: FeatureConfig,
) -> tuple[list[WindowFeature], ExtractionStats]:
    """Slide the window over precomputed frame features.

    Window starts are 0, S, 2S, ...; a sequence of T frames yields
    floor((T - W)/S) + 1 windows when T >= W, else none.
    """
    w = config.window_frames(record.frame_rate_hz)
    s = config.stride_frames(record.frame_rate_hz)
    stats = ExtractionStats()
    windows: list[WindowFeature] = []
    t = len(features)
    for start in range(0, t - w + 1, s):
        try:
            windows.append(window_feature(features[start : start + w], config, record, start))
        except WindowBelowValidFraction:
            stats.n_windows_dropped += 1
    stats.n_windows = len(windows)
    return windows, stats


def extract_sequence(
    record: SequenceRecord, config: FeatureConfig, threads: int = 1
) -> tuple[list[WindowFeature], ExtractionStats]:
    """Full per-sequence pipeline: load, partition, spectra, windows."""
    features, stats = compute_frame_features(record, config, threads)
    windows, wstats = assemble_windows(features, record, config)
    wstats.merge(stats)
    return windows, wstats


def extract_manifest(
    records: Sequence[SequenceRecord], config: FeatureConfig, threads: int = 1
) -> tuple[list[WindowFeature], ExtractionStats]:
    """Extract windows for every record of a manifest, in manifest order.

    All records must agree on the window length in frames, otherwise window
    vectors would not share one dimensionality (this bites only the
    concatenation strategies, but is enforced uniformly).
    """
    if not records:
        raise DataError("manifest has no records")
    window_lengths = {config.window_frames(r.frame_rate_hz) for r in records}
    if len(window_lengths) != 1:
        raise DataError(
            f"records disagree on window length in frames: {sorted(window_lengths)}"
        )
    all_windows: list[WindowFeature] = []
    total = ExtractionStats()
    for record in records:
        windows, stats = extract_sequence(record, config, threads)
        all_windows.extend(windows)
        total.merge(stats)
    return all_windows, total

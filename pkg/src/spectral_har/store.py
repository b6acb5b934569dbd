"""Binary feature store: one file per (manifest, config) extraction.

Layout (all integers little-endian):

* magic ``SHFS``, u32 format version
* 32-byte SHA-256 of the canonical feature-config JSON
* u32 vector dimension, u64 record count
* per record: four length-prefixed UTF-8 strings (sequence, subject,
  activity, environment), u32 window start frame, then ``dim`` float32s.

A ``<store>.json`` sidecar carries the config in readable form. Files are
byte-deterministic for identical inputs: no timestamps anywhere.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .errors import StoreError
from .features import FeatureConfig, WindowFeature

MAGIC = b"SHFS"
FORMAT_VERSION = 1


@dataclass
class FeatureStore:
    """In-memory window-feature table with its originating config."""

    vectors: np.ndarray  # (n, dim) float32
    sequence_ids: list[str]
    subject_ids: list[str]
    activity_ids: list[str]
    environment_ids: list[str]
    window_start_frames: np.ndarray  # (n,) int64
    config: FeatureConfig

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    @classmethod
    def from_windows(
        cls, windows: Sequence[WindowFeature], config: FeatureConfig
    ) -> "FeatureStore":
        if not windows:
            raise StoreError("no windows to store")
        dim = windows[0].vector.shape[0]
        vectors = np.zeros((len(windows), dim), dtype=np.float32)
        for i, w in enumerate(windows):
            if w.vector.shape[0] != dim:
                raise StoreError(
                    f"window {i} has dimension {w.vector.shape[0]}, expected {dim}"
                )
            vectors[i] = w.vector.astype(np.float32)
        return cls(
            vectors=vectors,
            sequence_ids=[w.sequence_id for w in windows],
            subject_ids=[w.subject_id for w in windows],
            activity_ids=[w.activity_id for w in windows],
            environment_ids=[w.environment_id for w in windows],
            window_start_frames=np.array(
                [w.window_start_frame for w in windows], dtype=np.int64
            ),
            config=config,
        )

    def select(self, row_mask: np.ndarray) -> "FeatureStore":
        """Row-filtered copy (used for train/test splits)."""
        idx = np.nonzero(row_mask)[0]
        return FeatureStore(
            vectors=self.vectors[idx],
            sequence_ids=[self.sequence_ids[i] for i in idx],
            subject_ids=[self.subject_ids[i] for i in idx],
            activity_ids=[self.activity_ids[i] for i in idx],
            environment_ids=[self.environment_ids[i] for i in idx],
            window_start_frames=self.window_start_frames[idx],
            config=self.config,
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        cfg_hash = bytes.fromhex(self.config.config_hash())
        n, dim = self.vectors.shape
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(cfg_hash)
            fh.write(struct.pack("<IQ", dim, n))
            for i in range(n):
                for s in (
                    self.sequence_ids[i],
                    self.subject_ids[i],
                    self.activity_ids[i],
                    self.environment_ids[i],
                ):
                    b = s.encode("utf-8")
                    fh.write(struct.pack("<H", len(b)))
                    fh.write(b)
                fh.write(struct.pack("<I", int(self.window_start_frames[i])))
                fh.write(self.vectors[i].astype("<f4").tobytes())
        sidecar = {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "dimension": dim,
            "n_windows": n,
        }
        Path(str(path) + ".json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise StoreError(f"truncated feature store while reading {what}")
    return data


def load_store(path: str | Path) -> FeatureStore:
    """Load a feature store written by :meth:`FeatureStore.save`."""
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise StoreError(f"missing sidecar {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    config = FeatureConfig.from_dict(sidecar["config"])
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise StoreError(f"{path}: not a feature store (magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version > FORMAT_VERSION:
            raise StoreError(
                f"{path}: format version {version} is newer than supported "
                f"({FORMAT_VERSION})"
            )
        cfg_hash = _read_exact(fh, 32, "config hash").hex()
        if cfg_hash != config.config_hash():
            raise StoreError(f"{path}: sidecar config does not match stored hash")
        dim, n = struct.unpack("<IQ", _read_exact(fh, 12, "header"))
        vectors = np.zeros((n, dim), dtype=np.float32)
        seq, subj, act, env = [], [], [], []
        starts = np.zeros(n, dtype=np.int64)
        for i in range(n):
            fields = []
            for _ in range(4):
                (ln,) = struct.unpack("<H", _read_exact(fh, 2, "label length"))
                fields.append(_read_exact(fh, ln, "label").decode("utf-8"))
            seq.append(fields[0])
            subj.append(fields[1])
            act.append(fields[2])
            env.append(fields[3])
            (starts[i],) = struct.unpack("<I", _read_exact(fh, 4, "window start"))
            vectors[i] = np.frombuffer(
                _read_exact(fh, 4 * dim, "vector"), dtype="<f4"
            )
        if fh.read(1):
            raise StoreError(f"{path}: trailing bytes after {n} records")
    return FeatureStore(
        vectors=vectors,
        sequence_ids=seq,
        subject_ids=subj,
        activity_ids=act,
        environment_ids=env,
        window_start_frames=starts,
        config=config,
    )

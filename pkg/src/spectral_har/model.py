"""Model façade: standardization, optional PCA, the two classifiers,
prediction with ranked scores, and a versioned binary model file.

A trained model bundles the scaler (always fitted, on training rows only),
an optional PCA projection, the classifier parameters and the ordered class
labels. Predictions transform rows through scaler and PCA before scoring.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .errors import DataError, ModelFileError
from . import forest as _forest
from . import svm as _svm
from .forest import ForestModel, TreeArrays
from .svm import BinarySvm, SvmModel

KIND_RANDOM_FOREST = "random_forest"
KIND_SVM_RBF = "svm_rbf"

MODEL_MAGIC = b"SHML"
MODEL_FORMAT_VERSION = 1

_STD_FLOOR = 1e-12


@dataclass
class Scaler:
    """Column standardizer fitted on training rows only."""

    means: np.ndarray
    stds: np.ndarray  # entries with population std < 1e-12 replaced by 1


def fit_scaler(rows: np.ndarray) -> Scaler:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise DataError("scaler needs at least one training row")
    means = rows.mean(axis=0)
    stds = rows.std(axis=0)
    stds = np.where(stds < _STD_FLOOR, 1.0, stds)
    return Scaler(means=means, stds=stds)


def apply_scaler(scaler: Scaler, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    return (rows - scaler.means) / scaler.stds


@dataclass
class PcaProjection:
    """Top covariance eigenvectors, rows orthonormal, deterministic signs."""

    component_matrix: np.ndarray  # (n_components, D)
    means: np.ndarray
    n_components: int


def fit_pca(rows: np.ndarray, n_components: int) -> PcaProjection:
    """Principal components via covariance eigendecomposition.

    The effective component count is min(requested, D, n_rows, rank). For
    D > n_rows the D x D covariance eigenproblem is solved through the
    n x n Gram matrix of the centered rows, which has the same non-zero
    spectrum. Component signs follow the largest-|entry| convention.
    """
    if n_components < 1:
        raise DataError("n_components must be >= 1")
    rows = np.asarray(rows, dtype=np.float64)
    n, d = rows.shape
    if n < 2:
        raise DataError("PCA needs at least 2 training rows")
    means = rows.mean(axis=0)
    xc = rows - means
    limit = min(n_components, d, n)
    if d <= n:
        cov = (xc.T @ xc) / n
        w, v = np.linalg.eigh(cov)
        w, v = w[::-1], v[:, ::-1]
        components = v.T  # (d, d) rows are eigenvectors
    else:
        gram = (xc @ xc.T) / n
        w, v = np.linalg.eigh(gram)
        w, v = w[::-1], v[:, ::-1]
        keep = w > _STD_FLOOR
        scale = np.sqrt(np.where(keep, w, 1.0) * n)
        components = (xc.T @ (v / scale)).T  # unit rows where keep
        w = np.where(keep, w, 0.0)
    tol = max(float(w[0]), 0.0) * 1e-12 + _STD_FLOOR
    rank = int(np.sum(w > tol))
    m = min(limit, rank)
    if m < 1:
        raise DataError("PCA found no non-degenerate directions")
    comp = components[:m]
    pivots = np.argmax(np.abs(comp), axis=1)
    signs = np.where(comp[np.arange(m), pivots] < 0, -1.0, 1.0)
    comp = comp * signs[:, None]
    return PcaProjection(component_matrix=comp, means=means, n_components=m)


def project(pca: PcaProjection, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    return (rows - pca.means) @ pca.component_matrix.T


@dataclass
class TrainedModel:
    """Serializable bundle of scaler, optional PCA and classifier."""

    kind: str
    scaler: Scaler
    pca: PcaProjection | None
    classifier: ForestModel | SvmModel
    class_labels: tuple[str, ...]
    seed: int
    params: dict

    @property
    def n_features(self) -> int:
        return self.scaler.means.shape[0]

    def params_hash(self) -> str:
        payload = json.dumps(
            {
                "kind": self.kind,
                "seed": self.seed,
                "class_labels": list(self.class_labels),
                "params": self.params,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _prepare(rows: np.ndarray, labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise DataError("training rows must be 2-D")
    if rows.shape[0] != len(labels):
        raise DataError("row/label count mismatch")
    class_labels = tuple(sorted(set(labels)))
    if len(class_labels) < 2:
        raise DataError("training needs at least 2 classes")
    index = {c: i for i, c in enumerate(class_labels)}
    y = np.array([index[label] for label in labels], dtype=np.int64)
    return rows, y, class_labels


def _transform_fit(
    rows: np.ndarray, pca_components: int | None
) -> tuple[np.ndarray, Scaler, PcaProjection | None]:
    scaler = fit_scaler(rows)
    x = apply_scaler(scaler, rows)
    pca = None
    if pca_components is not None:
        pca = fit_pca(x, pca_components)
        x = project(pca, x)
    return x, scaler, pca


def train_random_forest(
    rows: np.ndarray,
    labels: Sequence[str],
    n_trees: int = 100,
    seed: int = 0,
    pca_components: int | None = None,
) -> TrainedModel:
    rows, y, class_labels = _prepare(rows, labels)
    x, scaler, pca = _transform_fit(rows, pca_components)
    clf = _forest.fit_forest(x, y, len(class_labels), n_trees=n_trees, seed=seed)
    return TrainedModel(
        kind=KIND_RANDOM_FOREST,
        scaler=scaler,
        pca=pca,
        classifier=clf,
        class_labels=class_labels,
        seed=seed,
        params={"n_trees": n_trees, "pca_components": pca_components},
    )


def train_svm_rbf(
    rows: np.ndarray,
    labels: Sequence[str],
    c: float = 1.0,
    seed: int = 0,
    pca_components: int | None = None,
) -> TrainedModel:
    rows, y, class_labels = _prepare(rows, labels)
    x, scaler, pca = _transform_fit(rows, pca_components)
    clf = _svm.fit_svm(x, y, len(class_labels), c=c)
    return TrainedModel(
        kind=KIND_SVM_RBF,
        scaler=scaler,
        pca=pca,
        classifier=clf,
        class_labels=class_labels,
        seed=seed,
        params={"C": c, "pca_components": pca_components},
    )


def _transform(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    single = rows.ndim == 1
    if single:
        rows = rows[None, :]
    if rows.shape[1] != model.n_features:
        raise DataError(
            f"row dimension {rows.shape[1]} does not match model "
            f"dimension {model.n_features}"
        )
    x = apply_scaler(model.scaler, rows)
    if model.pca is not None:
        x = project(model.pca, x)
    return x


def predict_scores(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    """Class scores over model.class_labels, one row per input row.

    Random forest scores are vote fractions summing to 1; SVM scores are
    one-vs-one vote counts with the decision-value tie-break folded in.
    """
    x = _transform(model, rows)
    if model.kind == KIND_RANDOM_FOREST:
        return _forest.predict_votes(model.classifier, x)
    return _svm.predict_scores(model.classifier, x)


def rank_classes(scores: np.ndarray) -> np.ndarray:
    """Class indices ranked by descending score, label order on exact ties."""
    return np.argsort(-scores, axis=1, kind="stable")


def predict_top_k(model: TrainedModel, rows: np.ndarray, k: int) -> list[list[str]]:
    scores = predict_scores(model, rows)
    ranked = rank_classes(scores)[:, : max(1, k)]
    return [[model.class_labels[j] for j in row] for row in ranked]


# Model file: MAGIC, u32 version, 32-byte params hash, u64 header length,
# canonical-JSON header describing scalars and an ordered array directory,
# then the raw little-endian array bytes in directory order.

_DTYPE_CODES = {"f8": "<f8", "f4": "<f4", "i8": "<i8", "i4": "<i4"}


def _array_entry(name: str, arr: np.ndarray) -> tuple[dict, bytes]:
    dtype = {"float64": "f8", "float32": "f4", "int64": "i8", "int32": "i4"}[
        str(arr.dtype)
    ]
    return (
        {"name": name, "dtype": dtype, "shape": list(arr.shape)},
        np.ascontiguousarray(arr).astype(_DTYPE_CODES[dtype]).tobytes(),
    )


def save_model(model: TrainedModel, path: str | Path) -> None:
    arrays: list[tuple[dict, bytes]] = []
    arrays.append(_array_entry("scaler_means", model.scaler.means))
    arrays.append(_array_entry("scaler_stds", model.scaler.stds))
    if model.pca is not None:
        arrays.append(_array_entry("pca_components", model.pca.component_matrix))
        arrays.append(_array_entry("pca_means", model.pca.means))
    meta: dict = {
        "kind": model.kind,
        "seed": model.seed,
        "class_labels": list(model.class_labels),
        "params": model.params,
        "has_pca": model.pca is not None,
    }
    clf = model.classifier
    if model.kind == KIND_RANDOM_FOREST:
        assert isinstance(clf, ForestModel)
        meta["n_classes"] = clf.n_classes
        meta["n_features"] = clf.n_features
        meta["n_trees"] = len(clf.trees)
        sizes = np.array([t.feature.shape[0] for t in clf.trees], dtype=np.int64)
        arrays.append(_array_entry("tree_sizes", sizes))
        for field in ("feature", "threshold", "left", "right", "leaf_class"):
            cat = np.concatenate([getattr(t, field) for t in clf.trees])
            arrays.append(_array_entry(f"tree_{field}", cat))
    elif model.kind == KIND_SVM_RBF:
        assert isinstance(clf, SvmModel)
        meta["n_classes"] = clf.n_classes
        meta["gamma"] = clf.gamma
        meta["C"] = clf.c
        meta["pair_classes"] = [[p.class_a, p.class_b] for p in clf.pairs]
        arrays.append(_array_entry("sv_matrix", clf.sv_matrix))
        sizes = np.array([p.sv_rows.shape[0] for p in clf.pairs], dtype=np.int64)
        arrays.append(_array_entry("pair_sizes", sizes))
        arrays.append(
            _array_entry("pair_rows", np.concatenate([p.sv_rows for p in clf.pairs]))
        )
        arrays.append(
            _array_entry("pair_coef", np.concatenate([p.coef for p in clf.pairs]))
        )
        arrays.append(
            _array_entry(
                "pair_bias", np.array([p.bias for p in clf.pairs], dtype=np.float64)
            )
        )
    else:
        raise ModelFileError(f"unknown model kind {model.kind!r}")

    header = {"meta": meta, "arrays": [a[0] for a in arrays]}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_FORMAT_VERSION))
        fh.write(bytes.fromhex(model.params_hash()))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for _, blob in arrays:
            fh.write(blob)


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ModelFileError(f"truncated model file while reading {what}")
    return data


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4, "magic")
        if magic != MODEL_MAGIC:
            raise ModelFileError(f"{path}: not a model file (magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version > MODEL_FORMAT_VERSION:
            raise ModelFileError(
                f"{path}: format version {version} is newer than supported "
                f"({MODEL_FORMAT_VERSION})"
            )
        _read_exact(fh, 32, "params hash")
        (hlen,) = struct.unpack("<Q", _read_exact(fh, 8, "header length"))
        try:
            header = json.loads(_read_exact(fh, hlen, "header"))
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"{path}: corrupt header: {exc}") from exc
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            dtype = _DTYPE_CODES[entry["dtype"]]
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            blob = _read_exact(fh, count * np.dtype(dtype).itemsize, entry["name"])
            arrays[entry["name"]] = np.frombuffer(blob, dtype=dtype).reshape(shape).copy()
    meta = header["meta"]
    scaler = Scaler(means=arrays["scaler_means"], stds=arrays["scaler_stds"])
    pca = None
    if meta["has_pca"]:
        pca = PcaProjection(
            component_matrix=arrays["pca_components"],
            means=arrays["pca_means"],
            n_components=arrays["pca_components"].shape[0],
        )
    kind = meta["kind"]
    if kind == KIND_RANDOM_FOREST:
        sizes = arrays["tree_sizes"]
        offsets = np.concatenate(([0], np.cumsum(sizes)))
        trees = []
        for t in range(len(sizes)):
            s, e = offsets[t], offsets[t + 1]
            trees.append(
                TreeArrays(
                    feature=arrays["tree_feature"][s:e],
                    threshold=arrays["tree_threshold"][s:e],
                    left=arrays["tree_left"][s:e],
                    right=arrays["tree_right"][s:e],
                    leaf_class=arrays["tree_leaf_class"][s:e],
                )
            )
        classifier: ForestModel | SvmModel = ForestModel(
            trees=trees, n_classes=meta["n_classes"], n_features=meta["n_features"]
        )
    elif kind == KIND_SVM_RBF:
        sizes = arrays["pair_sizes"]
        offsets = np.concatenate(([0], np.cumsum(sizes)))
        pairs = []
        for p, (a, bcls) in enumerate(meta["pair_classes"]):
            s, e = offsets[p], offsets[p + 1]
            pairs.append(
                BinarySvm(
                    class_a=a,
                    class_b=bcls,
                    sv_rows=arrays["pair_rows"][s:e],
                    coef=arrays["pair_coef"][s:e],
                    bias=float(arrays["pair_bias"][p]),
                )
            )
        classifier = SvmModel(
            n_classes=meta["n_classes"],
            gamma=meta["gamma"],
            c=meta["C"],
            sv_matrix=arrays["sv_matrix"],
            pairs=pairs,
        )
    else:
        raise ModelFileError(f"{path}: unknown model kind {kind!r}")
    return TrainedModel(
        kind=kind,
        scaler=scaler,
        pca=pca,
        classifier=classifier,
        class_labels=tuple(meta["class_labels"]),
        seed=meta["seed"],
        params=meta["params"],
    )

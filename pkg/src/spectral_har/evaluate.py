"""Subject-independent splits, metrics with bootstrap uncertainty,
confusion-matrix emission, and the ablation grid runner.

Split kinds (train and test subject sets are verified disjoint, always):

* ``cross_scene``: train on subjects recorded in the train environments,
  test on subjects recorded only in the test environment.
* ``subject_holdout``: subjects sorted by id; the last ``n_test`` form the
  test set. An optional environment restriction first drops all other
  records (used for the within-E4 7/3 protocol).
* ``explicit``: caller-provided subject lists.

Metric conventions: macro F1 averages per-class F1 over *all* classes of
the label set, counting classes without support as 0; balanced accuracy is
the unweighted mean of the row-normalized confusion diagonal with empty
rows contributing 0. Uncertainties are the empirical standard deviation of
each metric over B bootstrap resamples of the test windows (drawn i.i.d.
with replacement from a seeded generator).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, PipelineError, SplitError
from .features import FeatureConfig, assemble_windows, compute_frame_features
from .ingest import SequenceRecord
from .model import (
    KIND_RANDOM_FOREST,
    KIND_SVM_RBF,
    TrainedModel,
    predict_scores,
    rank_classes,
    train_random_forest,
    train_svm_rbf,
)
from .store import FeatureStore

DEFAULT_BOOTSTRAP_B = 1000


@dataclass(frozen=True)
class SplitSpec:
    """Declarative description of a subject-independent split."""

    kind: str  # "cross_scene" | "subject_holdout" | "explicit"
    train_environments: tuple[str, ...] = ()
    test_environments: tuple[str, ...] = ()
    n_test_subjects: int = 0
    restrict_environment: str | None = None
    train_subjects: tuple[str, ...] = ()
    test_subjects: tuple[str, ...] = ()

    @classmethod
    def cross_scene(
        cls,
        train_environments: Sequence[str] = ("E1", "E2", "E3"),
        test_environments: Sequence[str] = ("E4",),
    ) -> "SplitSpec":
        return cls(
            kind="cross_scene",
            train_environments=tuple(train_environments),
            test_environments=tuple(test_environments),
        )

    @classmethod
    def subject_holdout(
        cls, n_test_subjects: int, restrict_environment: str | None = None
    ) -> "SplitSpec":
        if n_test_subjects < 1:
            raise SplitError("n_test_subjects must be >= 1")
        return cls(
            kind="subject_holdout",
            n_test_subjects=n_test_subjects,
            restrict_environment=restrict_environment,
        )

    @classmethod
    def explicit(
        cls, train_subjects: Sequence[str], test_subjects: Sequence[str]
    ) -> "SplitSpec":
        return cls(
            kind="explicit",
            train_subjects=tuple(train_subjects),
            test_subjects=tuple(test_subjects),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "train_environments": list(self.train_environments),
            "test_environments": list(self.test_environments),
            "n_test_subjects": self.n_test_subjects,
            "restrict_environment": self.restrict_environment,
            "train_subjects": list(self.train_subjects),
            "test_subjects": list(self.test_subjects),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        d = dict(d)
        for key in ("train_environments", "test_environments", "train_subjects", "test_subjects"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def resolve_split_subjects(
    pairs: Sequence[tuple[str, str]], spec: SplitSpec
) -> tuple[set[str], set[str]]:
    """Train/test subject sets from (subject_id, environment_id) pairs.

    Raises SplitError if the resulting subject sets intersect or are empty.
    """
    subj_envs: dict[str, set[str]] = {}
    for subject, env in pairs:
        subj_envs.setdefault(subject, set()).add(env)

    if spec.kind == "cross_scene":
        train_envs = set(spec.train_environments)
        test_envs = set(spec.test_environments)
        train = {s for s, envs in subj_envs.items() if envs & train_envs}
        test = {s for s, envs in subj_envs.items() if envs & test_envs and not envs & train_envs}
        overlap_envs = {
            s for s, envs in subj_envs.items() if envs & test_envs and envs & train_envs
        }
        if overlap_envs:
            raise SplitError(
                f"subjects recorded in both train and test environments: "
                f"{sorted(overlap_envs)}"
            )
    elif spec.kind == "subject_holdout":
        pool = sorted(
            s
            for s, envs in subj_envs.items()
            if spec.restrict_environment is None or spec.restrict_environment in envs
        )
        if spec.n_test_subjects >= len(pool):
            raise SplitError(
                f"holdout of {spec.n_test_subjects} from only {len(pool)} subjects"
            )
        test = set(pool[-spec.n_test_subjects :])
        train = set(pool) - test
    elif spec.kind == "explicit":
        train = set(spec.train_subjects)
        test = set(spec.test_subjects)
        known = set(subj_envs)
        unknown = (train | test) - known
        if unknown:
            raise SplitError(f"split names unknown subjects: {sorted(unknown)}")
    else:
        raise SplitError(f"unknown split kind {spec.kind!r}")

    if train & test:
        raise SplitError(f"train/test subjects overlap: {sorted(train & test)}")
    if not train or not test:
        raise SplitError("split produced an empty train or test side")
    return train, test


def split_records(
    records: Sequence[SequenceRecord], spec: SplitSpec
) -> tuple[list[SequenceRecord], list[SequenceRecord]]:
    """Partition records by the split's subject assignment."""
    pairs = [(r.subject_id, r.environment_id) for r in records]
    train_subjects, test_subjects = resolve_split_subjects(pairs, spec)
    train = [r for r in records if r.subject_id in train_subjects]
    test = [r for r in records if r.subject_id in test_subjects]
    return train, test


def split_store(store: FeatureStore, spec: SplitSpec) -> tuple[FeatureStore, FeatureStore]:
    """Partition store rows by the split's subject assignment.

    Every window inherits its sequence's side, so no sequence contributes to
    both sides.
    """
    pairs = list(zip(store.subject_ids, store.environment_ids))
    train_subjects, test_subjects = resolve_split_subjects(pairs, spec)
    subjects = np.array(store.subject_ids)
    train_mask = np.isin(subjects, sorted(train_subjects))
    test_mask = np.isin(subjects, sorted(test_subjects))
    return store.select(train_mask), store.select(test_mask)


@dataclass
class MetricReport:
    """Point metrics with bootstrap stds, plus the confusion matrix."""

    class_labels: tuple[str, ...]
    accuracy: tuple[float, float]
    macro_f1: tuple[float, float]
    balanced_accuracy: tuple[float, float]
    top1: tuple[float, float]
    top5: tuple[float, float]
    confusion: np.ndarray  # (C, C) int64, rows = true, cols = predicted
    n_windows: int
    per_class: list[tuple[str, float, float, int]]  # (label, f1, recall, support)

    def to_dict(self) -> dict:
        return {
            "class_labels": list(self.class_labels),
            "accuracy": list(self.accuracy),
            "macro_f1": list(self.macro_f1),
            "balanced_accuracy": list(self.balanced_accuracy),
            "top1": list(self.top1),
            "top5": list(self.top5),
            "confusion": self.confusion.tolist(),
            "n_windows": self.n_windows,
            "per_class": [
                {"label": l, "f1": f, "recall": r, "support": s}
                for l, f, r, s in self.per_class
            ],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


def _confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    return np.bincount(
        y_true * n_classes + y_pred, minlength=n_classes * n_classes
    ).reshape(n_classes, n_classes)


def _f1_recall_from_confusion(conf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    support = conf.sum(axis=1)
    predicted = conf.sum(axis=0)
    tp = np.diag(conf).astype(np.float64)
    recall = np.where(support > 0, tp / np.maximum(support, 1), 0.0)
    precision = np.where(predicted > 0, tp / np.maximum(predicted, 1), 0.0)
    denom = precision + recall
    f1 = np.where(denom > 0, 2 * precision * recall / np.where(denom > 0, denom, 1.0), 0.0)
    return f1, recall


def _point_metrics(
    y_true: np.ndarray, y_pred: np.ndarray, top_k_hit: np.ndarray, n_classes: int
) -> tuple[float, float, float, float, float, np.ndarray]:
    conf = _confusion_matrix(y_true, y_pred, n_classes)
    acc = float(np.mean(y_pred == y_true))
    f1, recall = _f1_recall_from_confusion(conf)
    macro_f1 = float(f1.mean())
    balanced = float(recall.mean())
    top1 = acc
    top5 = float(np.mean(top_k_hit))
    return acc, macro_f1, balanced, top1, top5, conf


def compute_metrics(
    y_true: Sequence[str],
    scores: np.ndarray,
    class_labels: Sequence[str],
    bootstrap_b: int = DEFAULT_BOOTSTRAP_B,
    seed: int = 0,
) -> MetricReport:
    """Point metrics over all windows plus bootstrap stds over B resamples."""
    class_labels = tuple(class_labels)
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if n < 1 or len(y_true) != n:
        raise DataError("metrics need matching non-empty y_true and scores")
    if scores.shape[1] != len(class_labels):
        raise DataError("scores width does not match class label count")
    index = {c: i for i, c in enumerate(class_labels)}
    try:
        yt = np.array([index[label] for label in y_true], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"true label {exc} not in class labels") from exc
    c = len(class_labels)
    ranked = rank_classes(scores)
    y_pred = ranked[:, 0]
    k = min(5, c)
    top_k_hit = (ranked[:, :k] == yt[:, None]).any(axis=1)

    acc, macro_f1, balanced, top1, top5, conf = _point_metrics(yt, y_pred, top_k_hit, c)

    rng = np.random.default_rng(seed)
    samples = np.zeros((bootstrap_b, 5))
    correct = (y_pred == yt).astype(np.float64)
    for b in range(bootstrap_b):
        idx = rng.integers(0, n, size=n)
        conf_b = _confusion_matrix(yt[idx], y_pred[idx], c)
        f1_b, recall_b = _f1_recall_from_confusion(conf_b)
        samples[b] = (
            correct[idx].mean(),
            f1_b.mean(),
            recall_b.mean(),
            correct[idx].mean(),
            top_k_hit[idx].mean(),
        )
    stds = samples.std(axis=0)

    f1, recall = _f1_recall_from_confusion(conf)
    support = conf.sum(axis=1)
    per_class = [
        (class_labels[i], float(f1[i]), float(recall[i]), int(support[i]))
        for i in range(c)
    ]
    return MetricReport(
        class_labels=class_labels,
        accuracy=(acc, float(stds[0])),
        macro_f1=(macro_f1, float(stds[1])),
        balanced_accuracy=(balanced, float(stds[2])),
        top1=(top1, float(stds[3])),
        top5=(top5, float(stds[4])),
        confusion=conf,
        n_windows=n,
        per_class=per_class,
    )


def _row_percentages(conf: np.ndarray) -> np.ndarray:
    sums = conf.sum(axis=1, keepdims=True)
    return np.where(sums > 0, 100.0 * conf / np.maximum(sums, 1), 0.0)


def emit_confusion(report: MetricReport, path_csv: str | Path, path_svg: str | Path) -> None:
    """Write the confusion matrix as CSV (counts + row percentages) and SVG."""
    labels = report.class_labels
    conf = report.confusion
    pct = _row_percentages(conf)
    lines = ["counts," + ",".join(labels)]
    for i, label in enumerate(labels):
        lines.append(label + "," + ",".join(str(int(v)) for v in conf[i]))
    lines.append("")
    lines.append("row_percent," + ",".join(labels))
    for i, label in enumerate(labels):
        lines.append(label + "," + ",".join(f"{v:.2f}" for v in pct[i]))
    Path(path_csv).write_text("\n".join(lines) + "\n", encoding="utf-8")
    Path(path_svg).write_text(_confusion_svg(labels, conf, pct), encoding="utf-8")


def _confusion_svg(labels: Sequence[str], conf: np.ndarray, pct: np.ndarray) -> str:
    c = len(labels)
    cell = 56
    margin = 110
    width = margin + c * cell + 20
    height = margin + c * cell + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{margin + c * cell / 2}" y="24" text-anchor="middle" '
        'font-family="sans-serif" font-size="14">predicted</text>',
        f'<text x="18" y="{margin + c * cell / 2}" text-anchor="middle" '
        'font-family="sans-serif" font-size="14" '
        f'transform="rotate(-90 18 {margin + c * cell / 2})">true</text>',
    ]
    for j, label in enumerate(labels):
        x = margin + j * cell + cell / 2
        parts.append(
            f'<text x="{x}" y="{margin - 8}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{label}</text>'
        )
    for i, label in enumerate(labels):
        y = margin + i * cell + cell / 2 + 4
        parts.append(
            f'<text x="{margin - 8}" y="{y}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{label}</text>'
        )
    for i in range(c):
        for j in range(c):
            frac = pct[i, j] / 100.0
            # White to blue ramp on the row-normalized value.
            r = int(255 - 175 * frac)
            g = int(255 - 130 * frac)
            x = margin + j * cell
            y = margin + i * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({r},{g},255)" stroke="#999" stroke-width="0.5"/>'
            )
            color = "black" if frac < 0.6 else "white"
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 - 2}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11" fill="{color}">'
                f"{int(conf[i, j])}</text>"
            )
            parts.append(
                f'<text x="{x + cell / 2}" y="{y + cell / 2 + 12}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="9" fill="{color}">'
                f"{pct[i, j]:.1f}%</text>"
            )
    parts.append("</svg>")
    return "\n".join(parts)


ABLATION_CSV_COLUMNS = (
    "config_hash",
    "strategy",
    "window_s",
    "radius_m",
    "parts",
    "classifier",
    "accuracy",
    "accuracy_std",
    "macro_f1",
    "balanced_acc",
    "top1",
    "top5",
    "n_windows",
    "wall_time_s",
)


@dataclass
class AblationCell:
    """One grid cell: a feature config plus a classifier choice."""

    config: FeatureConfig
    classifier: str = KIND_SVM_RBF
    pca_components: int | None = None
    seed: int = 0

    @classmethod
    def from_overrides(cls, overrides: Mapping, base: FeatureConfig) -> "AblationCell":
        d = dict(overrides)
        classifier = d.pop("classifier", KIND_SVM_RBF)
        if classifier not in (KIND_SVM_RBF, KIND_RANDOM_FOREST):
            raise DataError(f"unknown classifier {classifier!r}")
        pca_components = d.pop("pca_components", None)
        seed = d.pop("seed", 0)
        cfg = dict(base.to_dict())
        cfg.update(d)
        return cls(
            config=FeatureConfig.from_dict(cfg),
            classifier=classifier,
            pca_components=pca_components,
            seed=seed,
        )


def run_ablation(
    records: Sequence[SequenceRecord],
    cells: Sequence[AblationCell],
    split: SplitSpec,
    out_dir: str | Path,
    bootstrap_b: int = DEFAULT_BOOTSTRAP_B,
    seed: int = 0,
    threads: int = 1,
    progress: Callable[[str], None] | None = None,
) -> tuple[list[dict], list[dict]]:
    """Run every cell, reusing frame features across cells that share them.

    Writes ``results.csv`` (one row per completed cell, columns as in
    ABLATION_CSV_COLUMNS), a per-cell metric report and confusion pair under
    ``cells/<hash>/``, and ``errors.json`` when cells fail. Cell failures do
    not abort the run. Returns (rows, errors).
    """
    if not cells:
        raise DataError("ablation grid is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    feature_cache: dict[tuple, list] = {}
    rows: list[dict] = []
    errors: list[dict] = []

    for cell_no, cell in enumerate(cells):
        t0 = time.perf_counter()
        label = f"cell {cell_no + 1}/{len(cells)}"
        try:
            cfg = cell.config
            key = cfg.frame_key()
            if key not in feature_cache:
                if progress:
                    progress(f"{label}: extracting frame features for {key}")
                feature_cache[key] = [
                    compute_frame_features(r, cfg, threads)[0] for r in records
                ]
            per_record = feature_cache[key]
            windows = []
            for record, feats in zip(records, per_record):
                w, _ = assemble_windows(feats, record, cfg)
                windows.extend(w)
            if not windows:
                raise DataError("no windows extracted")
            store = FeatureStore.from_windows(windows, cfg)
            train, test = split_store(store, split)
            if cell.classifier == KIND_RANDOM_FOREST:
                model = train_random_forest(
                    train.vectors,
                    train.activity_ids,
                    seed=cell.seed,
                    pca_components=cell.pca_components,
                )
            else:
                model = train_svm_rbf(
                    train.vectors,
                    train.activity_ids,
                    seed=cell.seed,
                    pca_components=cell.pca_components,
                )
            scores = predict_scores(model, test.vectors)
            report = compute_metrics(
                test.activity_ids,
                scores,
                model.class_labels,
                bootstrap_b=bootstrap_b,
                seed=seed,
            )
            cell_hash = cfg.config_hash()[:16] + "-" + cell.classifier
            cell_dir = out_dir / "cells" / cell_hash
            cell_dir.mkdir(parents=True, exist_ok=True)
            report.save(cell_dir / "report.json")
            emit_confusion(
                report, cell_dir / "confusion.csv", cell_dir / "confusion.svg"
            )
            wall = time.perf_counter() - t0
            rows.append(
                {
                    "config_hash": cfg.config_hash(),
                    "strategy": cfg.strategy
                    + ("+vec" if cfg.use_eigenvectors else ""),
                    "window_s": cfg.window_seconds,
                    "radius_m": cfg.radius_m,
                    "parts": "+".join(str(p) for p in cfg.parts),
                    "classifier": cell.classifier,
                    "accuracy": report.accuracy[0],
                    "accuracy_std": report.accuracy[1],
                    "macro_f1": report.macro_f1[0],
                    "balanced_acc": report.balanced_accuracy[0],
                    "top1": report.top1[0],
                    "top5": report.top5[0],
                    "n_windows": report.n_windows,
                    "wall_time_s": wall,
                }
            )
            if progress:
                progress(
                    f"{label}: accuracy {report.accuracy[0]:.4f} "
                    f"± {report.accuracy[1]:.4f} ({report.n_windows} windows)"
                )
        except (PipelineError, ValueError) as exc:
            errors.append({"cell": cell_no, "error": str(exc)})
            if progress:
                progress(f"{label}: FAILED: {exc}")

    csv_lines = [",".join(ABLATION_CSV_COLUMNS)]
    for row in rows:
        csv_lines.append(
            ",".join(
                f"{row[c]:.6f}" if isinstance(row[c], float) else str(row[c])
                for c in ABLATION_CSV_COLUMNS
            )
        )
    (out_dir / "results.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    if errors:
        (out_dir / "errors.json").write_text(
            json.dumps(errors, indent=2) + "\n", encoding="utf-8"
        )
    return rows, errors

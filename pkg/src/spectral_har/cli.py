"""Command-line interface.

One executable with subcommands: ``synth``, ``features``, ``train``,
``eval``, ``predict``, ``ablate``, ``inspect-spectrum``. Defaults reproduce
the best published configuration (radius 0.15 m, 4 s windows with 0.5 s
stride, 60 eigenvalues, 40 eigenvectors, strategy B with eigenvector
statistics, whole body plus four quadrants), so a bare invocation runs the
strongest pipeline on any manifest.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Progress goes to stderr; machine-readable results go to files and stdout.
Every command with an output directory drops a ``run_config.json`` there
with its full configuration, the config hash and SHA-256 digests of its
file inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .errors import DataError, NumericError, PipelineError, UsageError
from .evaluate import (
    AblationCell,
    SplitSpec,
    compute_metrics,
    emit_confusion,
    run_ablation,
    split_store,
)
from .features import FeatureConfig, extract_manifest
from .graph import build_graph, laplacian
from .ingest import load_frame, load_manifest
from .model import (
    KIND_RANDOM_FOREST,
    KIND_SVM_RBF,
    load_model,
    predict_scores,
    predict_top_k,
    save_model,
    train_random_forest,
    train_svm_rbf,
)
from .spectrum import decompose
from .store import FeatureStore, load_store
from .synth import SynthSpec, generate
from .ingest import FrameCloud
from .features import MIN_POINTS_FOR_SPECTRUM, compute_frame_features, assemble_windows
from .ingest import SequenceRecord


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_config(out_dir: Path, command: str, config: dict, inputs: list[Path]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(
            json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
        ).hexdigest(),
        "inputs": {str(p): _sha256_file(p) for p in inputs if p.exists()},
    }
    (out_dir / "run_config.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def _add_feature_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--strategy", choices=("A", "B", "C", "D"), default="B")
    p.add_argument("--no-eigenvectors", action="store_true")
    p.add_argument("--k-val", type=int, default=60)
    p.add_argument("--k-vec", type=int, default=40)
    p.add_argument("--window", type=float, default=4.0, help="window length, seconds")
    p.add_argument("--stride", type=float, default=0.5, help="window stride, seconds")
    p.add_argument("--radius", type=float, default=0.15, help="graph radius, meters")
    p.add_argument(
        "--parts",
        default="0,1,2,3,4",
        help="comma-separated part ids (0 whole body, 1-4 quadrants, 5 lower body)",
    )
    p.add_argument("--min-valid", type=float, default=0.8)


def _config_from_args(args: argparse.Namespace) -> FeatureConfig:
    try:
        parts = tuple(int(p) for p in str(args.parts).split(",") if p != "")
        return FeatureConfig(
            strategy=args.strategy,
            use_eigenvectors=not args.no_eigenvectors,
            k_val=args.k_val,
            k_vec=args.k_vec,
            window_seconds=args.window,
            stride_seconds=args.stride,
            radius_m=args.radius,
            parts=parts,
            min_valid_fraction=args.min_valid,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _parse_split(text: str) -> SplitSpec:
    if text == "cross_scene":
        return SplitSpec.cross_scene()
    if text == "e04_7_3":
        return SplitSpec.subject_holdout(3, restrict_environment="E4")
    if text.startswith("holdout:"):
        try:
            return SplitSpec.subject_holdout(int(text.split(":", 1)[1]))
        except ValueError as exc:
            raise UsageError(f"bad holdout split {text!r}") from exc
    if text.startswith("subjects:"):
        body = text.split(":", 1)[1]
        try:
            train_part, test_part = body.split("/")
        except ValueError as exc:
            raise UsageError(
                f"bad explicit split {text!r}; expected subjects:a+b/c+d"
            ) from exc
        return SplitSpec.explicit(train_part.split("+"), test_part.split("+"))
    raise UsageError(
        f"unknown split {text!r}; use cross_scene, e04_7_3, holdout:K or "
        "subjects:a+b/c+d"
    )


def _resolve(path: str, workdir: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else workdir / p


def _cmd_synth(args: argparse.Namespace) -> int:
    out = _resolve(args.out, args.workdir)
    spec = SynthSpec(
        n_subjects=args.subjects,
        n_activities=args.activities,
        frames_per_sequence=args.frames,
        points_per_frame=args.points,
        noise_std_m=args.noise,
        subject_variation=args.variation,
        seed=args.seed,
    )
    manifest = generate(spec, out)
    _write_run_config(out, "synth", spec.__dict__ | {}, [])
    _log(f"wrote {manifest}")
    print(manifest)
    return 0


def _cmd_features(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    manifest = _resolve(args.manifest, args.workdir)
    out = _resolve(args.out, args.workdir)
    records = load_manifest(manifest)
    _log(f"extracting {len(records)} sequences with strategy {config.strategy}")
    windows, stats = extract_manifest(records, config, threads=args.threads)
    if not windows:
        raise DataError("no windows extracted from manifest")
    store = FeatureStore.from_windows(windows, config)
    out.parent.mkdir(parents=True, exist_ok=True)
    store.save(out)
    _write_run_config(out.parent, "features", config.to_dict(), [manifest])
    _log(
        f"windows: {stats.n_windows}, dropped: {stats.n_windows_dropped}, "
        f"dimension: {store.dimension}"
    )
    print(f"{stats.n_windows} {stats.n_windows_dropped} {store.dimension}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    store = load_store(_resolve(args.store, args.workdir))
    split = _parse_split(args.split)
    train, _ = split_store(store, split)
    _log(f"training {args.classifier} on {len(train)} windows")
    if args.classifier == "rf":
        model = train_random_forest(
            train.vectors,
            train.activity_ids,
            n_trees=args.trees,
            seed=args.seed,
            pca_components=args.pca,
        )
    else:
        model = train_svm_rbf(
            train.vectors,
            train.activity_ids,
            c=args.svm_c,
            seed=args.seed,
            pca_components=args.pca,
        )
    out = _resolve(args.out, args.workdir)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    _write_run_config(
        out.parent,
        "train",
        {
            "classifier": args.classifier,
            "split": split.to_dict(),
            "seed": args.seed,
            "pca": args.pca,
            "store_config": store.config.to_dict(),
        },
        [_resolve(args.store, args.workdir)],
    )
    _log(f"saved model to {out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    store = load_store(_resolve(args.store, args.workdir))
    model = load_model(_resolve(args.model, args.workdir))
    split = _parse_split(args.split)
    _, test = split_store(store, split)
    _log(f"scoring {len(test)} test windows")
    scores = predict_scores(model, test.vectors)
    report = compute_metrics(
        test.activity_ids,
        scores,
        model.class_labels,
        bootstrap_b=args.bootstrap,
        seed=args.seed,
    )
    out = _resolve(args.out, args.workdir)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / "report.json")
    emit_confusion(report, out / "confusion.csv", out / "confusion.svg")
    _write_run_config(
        out,
        "eval",
        {
            "split": split.to_dict(),
            "bootstrap": args.bootstrap,
            "seed": args.seed,
            "store_config": store.config.to_dict(),
        },
        [_resolve(args.store, args.workdir), _resolve(args.model, args.workdir)],
    )
    acc, std = report.accuracy
    print(f"accuracy {acc:.4f} ± {std:.4f}")
    print(f"macro_f1 {report.macro_f1[0]:.4f} ± {report.macro_f1[1]:.4f}")
    print(f"top5 {report.top5[0]:.4f} ± {report.top5[1]:.4f}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    model = load_model(_resolve(args.model, args.workdir))
    config = _config_from_args(args)
    frame_paths = [_resolve(f, args.workdir) for f in args.frames]
    record = SequenceRecord(
        sequence_id="cli",
        subject_id="cli",
        activity_id="?",
        environment_id="?",
        frame_paths=frame_paths,
        frame_rate_hz=args.rate,
    )
    w = config.window_frames(args.rate)
    if len(frame_paths) < w:
        raise DataError(
            f"insufficient frames: got {len(frame_paths)}, window needs {w}"
        )
    features, _ = compute_frame_features(record, config)
    windows, _ = assemble_windows(features, record, config)
    if not windows:
        raise DataError("all windows were dropped (too many invalid frames)")
    vectors = np.stack([wf.vector for wf in windows])
    ranked = predict_top_k(model, vectors, args.top)
    for wf, labels in zip(windows, ranked):
        print(f"{wf.window_start_frame}," + ",".join(labels))
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    manifest = _resolve(args.manifest, args.workdir)
    grid_path = _resolve(args.grid, args.workdir)
    records = load_manifest(manifest)
    base = _config_from_args(args)
    cells = []
    with open(grid_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                overrides = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{grid_path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                cells.append(AblationCell.from_overrides(overrides, base))
            except (ValueError, PipelineError) as exc:
                raise DataError(f"{grid_path}:{lineno}: {exc}") from exc
    split = _parse_split(args.split)
    out = _resolve(args.out, args.workdir)
    rows, errors = run_ablation(
        records,
        cells,
        split,
        out,
        bootstrap_b=args.bootstrap,
        seed=args.seed,
        threads=args.threads,
        progress=_log,
    )
    _write_run_config(
        out,
        "ablate",
        {"base": base.to_dict(), "split": split.to_dict(), "cells": len(cells)},
        [manifest, grid_path],
    )
    _log(f"completed {len(rows)} cells, {len(errors)} failed")
    print(out / "results.csv")
    return 0


def _cmd_inspect_spectrum(args: argparse.Namespace) -> int:
    frame = load_frame(_resolve(args.frame, args.workdir))
    if frame.n_points == 0:
        raise DataError(f"{args.frame}: frame is empty")
    graph = build_graph(frame, args.radius)
    spec = decompose(laplacian(graph), args.k, args.k)
    print(",".join(f"{v:.10g}" for v in spec.eigenvalues))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="spectral-har", description=__doc__)
    parser.add_argument(
        "--workdir", type=Path, default=Path("."), help="base for relative paths"
    )
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--activities", type=int, default=6)
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--points", type=int, default=300)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--variation", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("features", help="extract window features into a store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    _add_feature_flags(p)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", help="train a classifier from a feature store")
    p.add_argument("--store", required=True)
    p.add_argument("--split", default="cross_scene")
    p.add_argument("--classifier", choices=("svm", "rf"), default="svm")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pca", type=int, default=None)
    p.add_argument("--svm-c", type=float, default=1.0)
    p.add_argument("--trees", type=int, default=100)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on the test side of a split")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--split", default="cross_scene")
    p.add_argument("--out", required=True)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("predict", help="rank activities for a frame sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", nargs="+", required=True)
    p.add_argument("--rate", type=float, default=10.0)
    p.add_argument("--top", type=int, default=5)
    _add_feature_flags(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("ablate", help="run a grid of configurations")
    p.add_argument("--grid", required=True, help="JSONL of config overrides")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="cross_scene")
    p.add_argument("--out", required=True)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    _add_feature_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("inspect-spectrum", help="eigenvalues of one frame as CSV")
    p.add_argument("frame")
    p.add_argument("--radius", type=float, default=0.15)
    p.add_argument("--k", type=int, default=60)
    p.set_defaults(func=_cmd_inspect_spectrum)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _log(f"usage error: {exc}")
        return 1
    except DataError as exc:
        _log(f"data error: {exc}")
        return 2
    except NumericError as exc:
        _log(f"numeric failure: {exc}")
        return 3


if __name__ == "__main__":
    sys.exit(main())

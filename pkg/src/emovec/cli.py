"""Command-line interface: extract | train-ubm | train-svm | evaluate | reproduce.

Exit codes: 0 success, 1 data/model error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import evaluation, report
from .audio_io import load_manifest_file
from .config import (
    RunConfig,
    build_run_config,
    load_config_file,
    run_digest,
)
from .errors import ConfigError, DimensionMismatch, EmovecError, ModelError
from .evaluation import LabelScheme, map_label, parallel_map, scheme_classes
from .features import Band, Dataset, read_feature_cache, write_feature_cache
from .gmm import extract_supervector, load_gmm, map_adapt_means, save_gmm, train_ubm
from .svm import grid_select, load_svm, predict, save_svm, train_ovo

INDEX_FORMAT = "emovec-index"
INDEX_NAME = "index.json"


@dataclass(frozen=True)
class ReproduceRow:
    """Canonical configuration and published reference numbers for one row."""

    band: Band
    dataset: Dataset
    scheme: LabelScheme
    reference_overall: float | None = None
    reference_per_class: tuple[float, ...] | None = None


# Reference recognition rates reported for EMO-DB with this system family.
REPRODUCE_ROWS: dict[str, ReproduceRow] = {
    "data1": ReproduceRow(Band.COMBINED, Dataset.DATA1, LabelScheme.CATEGORICAL7, 81.35),
    "data2": ReproduceRow(Band.COMBINED, Dataset.DATA2, LabelScheme.CATEGORICAL7, 82.12),
    "data3": ReproduceRow(Band.COMBINED, Dataset.DATA3, LabelScheme.CATEGORICAL7, 79.92),
    "data4": ReproduceRow(Band.COMBINED, Dataset.DATA4, LabelScheme.CATEGORICAL7, 79.50),
    "data5": ReproduceRow(Band.COMBINED, Dataset.DATA5, LabelScheme.CATEGORICAL7, 83.36),
    "table2-narrow": ReproduceRow(Band.NARROW, Dataset.DATA1, LabelScheme.CATEGORICAL7, 72.85),
    "table2-low": ReproduceRow(Band.LOW, Dataset.DATA1, LabelScheme.CATEGORICAL7, 62.0),
    "table2-combined": ReproduceRow(Band.COMBINED, Dataset.DATA1, LabelScheme.CATEGORICAL7, 81.35),
    "arousal": ReproduceRow(
        Band.COMBINED, Dataset.DATA5, LabelScheme.AROUSAL_BINARY, 98.0, (97.85, 98.24)
    ),
    "valence": ReproduceRow(
        Band.COMBINED, Dataset.DATA5, LabelScheme.VALENCE_TERNARY, None, (100.0, 21.42, 57.14)
    ),
    "negpos": ReproduceRow(
        Band.COMBINED, Dataset.DATA5, LabelScheme.NEG_VS_POS, None, (100.0, 38.09)
    ),
    "emoneutral": ReproduceRow(
        Band.COMBINED, Dataset.DATA5, LabelScheme.EMOTIONAL_VS_NEUTRAL, None, (93.91, 0.0)
    ),
}


def _sanitize_id(utt_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", utt_id)


def _write_index(cache_dir: Path, feature_digest: str, entries: dict[str, str]) -> None:
    doc = {
        "format": INDEX_FORMAT,
        "version": 1,
        "feature_config": feature_digest,
        "entries": entries,
    }
    (cache_dir / INDEX_NAME).write_text(json.dumps(doc, indent=1) + "\n")


def _read_index(cache_dir: Path) -> tuple[str, dict[str, str]]:
    path = cache_dir / INDEX_NAME
    if not path.is_file():
        raise ModelError(f"no feature index at {path}; run `emovec extract` first")
    doc = json.loads(path.read_text())
    if doc.get("format") != INDEX_FORMAT or doc.get("version") != 1:
        raise ModelError(f"{path}: not an {INDEX_FORMAT} version 1 file")
    return doc.get("feature_config", ""), dict(doc["entries"])


def _check_digest(kind: str, found: str, expected: str, force: bool) -> None:
    if found != expected:
        msg = (
            f"{kind} was produced with feature config {found or '?'} but the current "
            f"config digests to {expected}; pass --force to use it anyway"
        )
        if force:
            print(f"warning: {msg}", file=sys.stderr)
        else:
            raise ModelError(msg)


def _load_records(cfg: RunConfig):
    if not cfg.manifest:
        raise ConfigError("no manifest given (use --manifest or paths.manifest)")
    manifest = Path(cfg.manifest)
    records = load_manifest_file(manifest)
    return records, manifest.parent


def _features_for_records(cfg: RunConfig, records, audio_root, force: bool):
    """Per-utterance feature matrices, from the cache when compatible."""
    cache_dir = Path(cfg.cache_dir)
    digest = cfg.features.digest()
    if (cache_dir / INDEX_NAME).is_file():
        found, entries = _read_index(cache_dir)
        if found == digest and all(r.id in entries for r in records):
            features = {r.id: read_feature_cache(cache_dir / entries[r.id]) for r in records}
            return features, []
        if not force:
            print(
                f"note: feature cache in {cache_dir} does not cover this manifest/config; "
                "extracting features directly",
                file=sys.stderr,
            )
    return evaluation.extract_all(records, cfg.features, audio_root, cfg.jobs)


def cmd_extract(cfg: RunConfig, out: str | None, force: bool) -> int:
    records, audio_root = _load_records(cfg)
    cache_dir = Path(out) if out else Path(cfg.cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)

    features, failures = evaluation.extract_all(records, cfg.features, audio_root, cfg.jobs)
    digest = cfg.features.digest()
    entries: dict[str, str] = {}
    for record in records:
        if record.id not in features:
            continue
        filename = _sanitize_id(record.id) + ".emfv"
        write_feature_cache(cache_dir / filename, features[record.id])
        entries[record.id] = filename
    _write_index(cache_dir, digest, entries)

    print(f"extracted {len(entries)}/{len(records)} utterances -> {cache_dir} (config {digest})")
    for utt_id, err in failures:
        print(f"error: {utt_id}: {err}", file=sys.stderr)
    return 1 if failures else 0


def cmd_train_ubm(cfg: RunConfig, out: str | None, force: bool) -> int:
    cache_dir = Path(cfg.cache_dir)
    digest = cfg.features.digest()
    found, entries = _read_index(cache_dir)
    _check_digest("feature cache", found, digest, force)
    if not entries:
        raise ModelError("feature index is empty; nothing to train on")

    pooled = np.vstack([read_feature_cache(cache_dir / f) for f in entries.values()])
    gmm, summary = train_ubm(pooled, cfg.ubm)

    out_path = Path(out) if out else Path(cfg.model_dir) / "ubm.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_gmm(out_path, gmm, digest)
    print(
        f"trained UBM k={gmm.num_components} d={gmm.dim} on {pooled.shape[0]} frames: "
        f"{summary.iterations} EM iterations, final log-likelihood "
        f"{summary.final_log_likelihood:.3f}, converged={summary.converged}"
    )
    print(f"wrote {out_path}")
    return 0


def _supervectors(cfg: RunConfig, records, features, ubm) -> np.ndarray:
    def worker(record):
        adapted = map_adapt_means(ubm, features[record.id], cfg.map)
        return extract_supervector(adapted).values

    return np.array(parallel_map(worker, records, cfg.jobs))


def cmd_train_svm(cfg: RunConfig, out: str | None, force: bool) -> int:
    records, audio_root = _load_records(cfg)
    digest = cfg.features.digest()

    ubm_path = Path(cfg.model_dir) / "ubm.json"
    if not ubm_path.is_file():
        raise ModelError(f"no UBM model at {ubm_path}; run `emovec train-ubm` first")
    ubm, ubm_digest = load_gmm(ubm_path)
    _check_digest("UBM model", ubm_digest, digest, force)

    features, failures = _features_for_records(cfg, records, audio_root, force)
    for utt_id, err in failures:
        print(f"error: {utt_id}: {err}", file=sys.stderr)
    usable = [r for r in records if r.id in features]
    if any(features[r.id].shape[1] != ubm.dim for r in usable):
        raise DimensionMismatch(
            f"feature dimension does not match UBM dimension {ubm.dim}; "
            "models and features were built with different configs"
        )

    labeled = [(r, map_label(r.emotion, cfg.scheme)) for r in usable]
    labeled = [(r, cls) for r, cls in labeled if cls is not None]
    if not labeled:
        raise ModelError(f"no utterances remain under scheme {cfg.scheme.value}")
    kept_records = [r for r, _ in labeled]
    labels = [cls for _, cls in labeled]

    supervectors = _supervectors(cfg, kept_records, features, ubm)
    choice = grid_select(
        supervectors, labels, cfg.svm, folds=cfg.folds,
        standardize=cfg.standardize, seed=cfg.seed,
    )
    if choice.table:
        print("grid search (kind, sigma, C, cv accuracy):")
        for kind, sigma, c, acc in choice.table:
            sig = "-" if sigma is None else f"{sigma:.4g}"
            print(f"  {kind:<6} sigma={sig:<10} C={c:<6g} acc={acc:.4f}")
    sig = "-" if choice.kernel.sigma is None else f"{choice.kernel.sigma:.4g}"
    print(f"selected kernel={choice.kernel.kind} sigma={sig} C={choice.c:g}")

    selected = replace(cfg.svm, c=choice.c, kernel=choice.kernel)
    order = [c for c in scheme_classes(cfg.scheme) if c in set(labels)]
    model, summaries = train_ovo(
        supervectors, labels, selected, standardize=cfg.standardize, class_order=order
    )
    stalled = [pair for pair, s in summaries.items() if not s.converged]
    if stalled:
        print(f"warning: SMO hit the pass limit for pairs: {stalled}", file=sys.stderr)

    out_path = Path(out) if out else Path(cfg.model_dir) / "svm.json"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_svm(out_path, model, digest)
    print(f"trained {len(model.machines)} pairwise machines over {len(model.classes)} classes")
    print(f"wrote {out_path}")
    return 1 if failures else 0


def cmd_evaluate(cfg: RunConfig, out: str | None, force: bool) -> int:
    records, audio_root = _load_records(cfg)
    digest = cfg.features.digest()

    ubm, ubm_digest = load_gmm(Path(cfg.model_dir) / "ubm.json")
    svm_model, svm_digest = load_svm(Path(cfg.model_dir) / "svm.json")
    _check_digest("UBM model", ubm_digest, digest, force)
    _check_digest("SVM model", svm_digest, digest, force)
    if not set(svm_model.classes) <= set(scheme_classes(cfg.scheme)):
        raise ModelError(
            f"SVM model classes {svm_model.classes} do not belong to scheme {cfg.scheme.value}"
        )

    features, failures = _features_for_records(cfg, records, audio_root, force)
    if len(failures) > 0.1 * len(records):
        detail = "; ".join(f"{u}: {e}" for u, e in failures[:5])
        raise ModelError(f"{len(failures)}/{len(records)} utterances failed to decode ({detail})")
    for utt_id, err in failures:
        print(f"error: {utt_id}: {err}", file=sys.stderr)

    usable = [r for r in records if r.id in features]
    labeled = [(r, map_label(r.emotion, cfg.scheme)) for r in usable]
    labeled = [(r, cls) for r, cls in labeled if cls is not None]
    kept_records = [r for r, _ in labeled]
    truths = [cls for _, cls in labeled]
    if not truths:
        raise ModelError(f"no utterances remain under scheme {cfg.scheme.value}")

    supervectors = _supervectors(cfg, kept_records, features, ubm)
    preds = [predict(svm_model, sv)[0] for sv in supervectors]

    classes = [c for c in scheme_classes(cfg.scheme) if c in set(truths) | set(svm_model.classes)]
    cm = evaluation.confusion(truths, preds, classes)
    overall, per_class = evaluation.accuracies(cm)
    doc = {
        "config": {"features": digest, "run": run_digest(cfg)},
        "scheme": cfg.scheme.value,
        "classes": cm.classes,
        "confusion": cm.counts.tolist(),
        "overall_pct": evaluation.round_pct(overall),
        "per_class_pct": [evaluation.round_pct(p) for p in per_class],
        "train_summary": {"svm": {"machines": len(svm_model.machines)}},
        "seed": cfg.seed,
        "failures": [list(f) for f in failures],
    }
    paths = report.save_report_bundle(doc, out or "report")
    print(report.render_text_table(doc))
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_reproduce(cfg: RunConfig, row_id: str, out: str | None, force: bool) -> int:
    row = REPRODUCE_ROWS[row_id]
    records, audio_root = _load_records(cfg)
    features = replace(cfg.features, band=row.band, dataset=row.dataset)
    cfg = replace(cfg, features=features, scheme=row.scheme)

    doc = evaluation.run_experiment(
        records, cfg.features, cfg.ubm, cfg.map, cfg.svm, cfg.split, cfg.scheme,
        folds=cfg.folds, standardize=cfg.standardize, jobs=cfg.jobs,
        audio_root=audio_root, extra_digests={"run": run_digest(cfg)},
    )

    print(report.render_text_table(doc))
    if row.reference_overall is not None:
        print(
            f"[{row_id}] reference overall {row.reference_overall:.2f}% | "
            f"obtained {doc['overall_pct']:.2f}%"
        )
    if row.reference_per_class is not None:
        obtained = " / ".join(
            "-" if p is None else f"{p:.2f}" for p in doc["per_class_pct"]
        )
        expected = " / ".join(f"{p:.2f}" for p in row.reference_per_class)
        print(f"[{row_id}] reference per-class {expected} | obtained {obtained}")

    paths = report.save_report_bundle(doc, out or f"reproduce_{row_id}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", help="utterance manifest CSV")
    common.add_argument("--config", help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="global random seed")
    common.add_argument("--jobs", type=int, help="worker threads (default 1)")
    common.add_argument(
        "--scheme", choices=[s.value for s in LabelScheme], help="label scheme"
    )
    common.add_argument("--out", help="output path (directory, model file, or report stem)")
    common.add_argument("--force", action="store_true", help="ignore config digest mismatches")

    parser = argparse.ArgumentParser(
        prog="emovec",
        description="Frame-level features + GMM-UBM supervectors + SVM emotion recognition.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("extract", parents=[common], help="decode audio and cache feature matrices")
    sub.add_parser("train-ubm", parents=[common], help="train the background GMM on cached features")
    sub.add_parser("train-svm", parents=[common], help="adapt supervectors and train the OvO SVM")
    sub.add_parser("evaluate", parents=[common], help="score a manifest with trained models")
    repro = sub.add_parser("reproduce", parents=[common], help="run a canonical experiment row")
    repro.add_argument("row", choices=sorted(REPRODUCE_ROWS), help="experiment row id")
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    flags: dict[str, str] = {}
    if args.manifest is not None:
        flags["paths.manifest"] = args.manifest
    if args.seed is not None:
        flags["seed"] = str(args.seed)
    if args.jobs is not None:
        flags["jobs"] = str(args.jobs)
    if args.scheme is not None:
        flags["scheme"] = args.scheme
    return build_run_config(file_values, flags)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "extract":
            return cmd_extract(cfg, args.out, args.force)
        if args.command == "train-ubm":
            return cmd_train_ubm(cfg, args.out, args.force)
        if args.command == "train-svm":
            return cmd_train_svm(cfg, args.out, args.force)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.out, args.force)
        return cmd_reproduce(cfg, args.row, args.out, args.force)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except EmovecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

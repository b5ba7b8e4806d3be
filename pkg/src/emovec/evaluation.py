"""Dataset splitting, label schemes, confusion matrices, and the one-shot
experiment runner.

The dimensional schemes regroup the seven categories along the arousal
(excitation) and valence (positivity) axes. Fear sits ambiguously on the
valence axis and is excluded from every valence-style experiment; the
emotional-vs-neutral contrast inherits that exclusion.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from pathlib import Path

import numpy as np

from .audio_io import EmotionLabel, UtteranceRecord, read_wav
from .errors import (
    ClassTooSmall,
    EmptyMatrix,
    EmovecError,
    LengthMismatch,
    TooManyFailures,
    UnknownClass,
)
from .features import FeatureConfig, assemble_features
from .gmm import MapConfig, UbmTrainConfig, extract_supervector, map_adapt_means, train_ubm
from .svm import TrainParams, grid_select, predict, train_ovo


class LabelScheme(Enum):
    CATEGORICAL7 = "categorical"
    AROUSAL_BINARY = "arousal"
    VALENCE_TERNARY = "valence"
    NEG_VS_POS = "negpos"
    EMOTIONAL_VS_NEUTRAL = "emoneutral"


_HIGH_AROUSAL = {EmotionLabel.ANGER, EmotionLabel.FEAR, EmotionLabel.HAPPINESS, EmotionLabel.DISGUST}
_NEGATIVE_VALENCE = {EmotionLabel.ANGER, EmotionLabel.DISGUST, EmotionLabel.SADNESS, EmotionLabel.BOREDOM}

_SCHEME_CLASSES = {
    LabelScheme.CATEGORICAL7: [label.display_name for label in EmotionLabel],
    LabelScheme.AROUSAL_BINARY: ["High", "Low"],
    LabelScheme.VALENCE_TERNARY: ["Negative", "Neutral", "Positive"],
    LabelScheme.NEG_VS_POS: ["Negative", "Positive"],
    LabelScheme.EMOTIONAL_VS_NEUTRAL: ["Emotional", "Neutral"],
}


def scheme_classes(scheme: LabelScheme) -> list[str]:
    return list(_SCHEME_CLASSES[scheme])


def map_label(emotion: EmotionLabel, scheme: LabelScheme) -> str | None:
    """Class name of `emotion` under `scheme`, or None when excluded."""
    if scheme is LabelScheme.CATEGORICAL7:
        return emotion.display_name
    if scheme is LabelScheme.AROUSAL_BINARY:
        return "High" if emotion in _HIGH_AROUSAL else "Low"
    if scheme is LabelScheme.VALENCE_TERNARY:
        if emotion is EmotionLabel.FEAR:
            return None
        if emotion in _NEGATIVE_VALENCE:
            return "Negative"
        return "Neutral" if emotion is EmotionLabel.NEUTRAL else "Positive"
    if scheme is LabelScheme.NEG_VS_POS:
        if emotion in _NEGATIVE_VALENCE:
            return "Negative"
        return "Positive" if emotion is EmotionLabel.HAPPINESS else None
    # emotional vs neutral
    if emotion is EmotionLabel.NEUTRAL:
        return "Neutral"
    if emotion is EmotionLabel.FEAR:
        return None
    return "Emotional"


@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.3
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must lie in (0, 1)")


def _round_half_up_int(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(records: list[UtteranceRecord], spec: SplitSpec) -> tuple[list[str], list[str]]:
    """Seeded train/test partition of utterance ids.

    Stratified mode draws round(count * test_fraction) test utterances per
    class (at least 1, at most count-1), shuffling within each class.
    """
    rng = np.random.default_rng(spec.seed)
    n = len(records)
    test_idx: set[int] = set()

    if spec.stratified:
        for label in EmotionLabel:
            idx = [i for i, r in enumerate(records) if r.emotion is label]
            if not idx:
                continue
            if len(idx) < 2:
                raise ClassTooSmall(f"class {label.display_name} has {len(idx)} utterance(s)")
            want = _round_half_up_int(len(idx) * spec.test_fraction)
            want = min(max(want, 1), len(idx) - 1)
            perm = rng.permutation(len(idx))
            test_idx.update(idx[p] for p in perm[:want])
    else:
        if n < 2:
            raise ClassTooSmall("need at least two utterances to split")
        want = min(max(_round_half_up_int(n * spec.test_fraction), 1), n - 1)
        perm = rng.permutation(n)
        test_idx.update(int(p) for p in perm[:want])

    train_ids = [r.id for i, r in enumerate(records) if i not in test_idx]
    test_ids = [r.id for i, r in enumerate(records) if i in test_idx]
    return train_ids, test_ids


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: list[str]
    counts: np.ndarray  # (C, C) int64, rows = truth, columns = prediction


def confusion(truths: list, preds: list, classes: list) -> ConfusionMatrix:
    if len(truths) != len(preds):
        raise LengthMismatch(f"{len(truths)} truths vs {len(preds)} predictions")
    index = {cls: i for i, cls in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truths, preds):
        if t not in index:
            raise UnknownClass(f"truth label {t!r} not in class list")
        if p not in index:
            raise UnknownClass(f"predicted label {p!r} not in class list")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes=list(classes), counts=counts)


def accuracies(cm: ConfusionMatrix) -> tuple[float, list[float | None]]:
    """(overall %, per-class %); classes with no test samples report None."""
    total = int(cm.counts.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix holds no samples")
    overall = 100.0 * float(np.trace(cm.counts)) / total
    per_class: list[float | None] = []
    for i in range(len(cm.classes)):
        row = int(cm.counts[i].sum())
        per_class.append(100.0 * int(cm.counts[i, i]) / row if row else None)
    return overall, per_class


def round_pct(x: float | None, places: int = 2) -> float | None:
    """Half-up rounding for reported percentages."""
    if x is None:
        return None
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def parallel_map(fn, items, jobs: int = 1) -> list:
    """Order-preserving map, threaded when jobs > 1.

    Each task is internally sequential, so results do not depend on jobs.
    """
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def extract_all(
    records: list[UtteranceRecord],
    cfg: FeatureConfig,
    audio_root: str | Path | None = None,
    jobs: int = 1,
) -> tuple[dict[str, np.ndarray], list[tuple[str, str]]]:
    """Feature matrices for every decodable utterance, plus (id, error) pairs."""
    root = Path(audio_root) if audio_root is not None else None

    def worker(record: UtteranceRecord):
        path = Path(record.audio_path)
        if root is not None and not path.is_absolute():
            path = root / path
        try:
            seq = assemble_features(read_wav(path), cfg)
            return record.id, seq.vectors, None
        except (EmovecError, OSError) as exc:
            return record.id, None, f"{type(exc).__name__}: {exc}"

    features: dict[str, np.ndarray] = {}
    failures: list[tuple[str, str]] = []
    for utt_id, vectors, err in parallel_map(worker, records, jobs):
        if err is None:
            features[utt_id] = vectors
        else:
            failures.append((utt_id, err))
    return features, failures


def run_experiment(
    records: list[UtteranceRecord],
    feature_cfg: FeatureConfig,
    ubm_cfg: UbmTrainConfig,
    map_cfg: MapConfig,
    train_params: TrainParams,
    split_spec: SplitSpec,
    scheme: LabelScheme,
    *,
    folds: int = 3,
    standardize: bool = True,
    jobs: int = 1,
    audio_root: str | Path | None = None,
    extra_digests: dict | None = None,
) -> dict:
    """Split, extract, train UBM + OvO SVM on the train side, score the test side.

    The background model is trained on the training split of all seven
    emotions; scheme exclusions apply only to the classifier and scoring.
    """
    t0 = time.perf_counter()
    train_ids, test_ids = split_dataset(records, split_spec)
    by_id = {r.id: r for r in records}

    features, failures = extract_all(records, feature_cfg, audio_root, jobs)
    if len(failures) > 0.1 * len(records):
        detail = "; ".join(f"{utt}: {err}" for utt, err in failures[:5])
        raise TooManyFailures(f"{len(failures)}/{len(records)} utterances failed ({detail} ...)")
    train_ids = [i for i in train_ids if i in features]
    test_ids = [i for i in test_ids if i in features]

    pooled = np.vstack([features[i] for i in train_ids])
    ubm, ubm_summary = train_ubm(pooled, ubm_cfg)

    def supervector_of(utt_id: str) -> np.ndarray:
        adapted = map_adapt_means(ubm, features[utt_id], map_cfg)
        return extract_supervector(adapted).values

    train_sv = np.array(parallel_map(supervector_of, train_ids, jobs))
    test_sv = np.array(parallel_map(supervector_of, test_ids, jobs))

    def mapped(ids):
        kept_x, kept_y = [], []
        for pos, utt_id in enumerate(ids):
            cls = map_label(by_id[utt_id].emotion, scheme)
            if cls is not None:
                kept_x.append(pos)
                kept_y.append(cls)
        return kept_x, kept_y

    tr_pos, train_y = mapped(train_ids)
    te_pos, test_y = mapped(test_ids)
    train_x = train_sv[tr_pos]
    test_x = test_sv[te_pos]

    order = scheme_classes(scheme)
    train_classes = [c for c in order if c in set(train_y)]
    choice = grid_select(
        train_x, train_y, train_params, folds=folds, standardize=standardize, seed=split_spec.seed
    )
    selected = TrainParams(
        c=choice.c, tol=train_params.tol, max_passes=train_params.max_passes,
        kernel=choice.kernel, grid=train_params.grid,
    )
    model, svm_summaries = train_ovo(
        train_x, train_y, selected, standardize=standardize, class_order=train_classes
    )

    preds = [predict(model, x)[0] for x in test_x]
    classes_present = [c for c in order if c in set(test_y) | set(model.classes)]
    cm = confusion(test_y, preds, classes_present)
    overall, per_class = accuracies(cm)

    config_section = {"features": feature_cfg.digest()}
    if extra_digests:
        config_section.update(extra_digests)
    return {
        "config": config_section,
        "scheme": scheme.value,
        "classes": cm.classes,
        "confusion": cm.counts.tolist(),
        "overall_pct": round_pct(overall),
        "per_class_pct": [round_pct(p) for p in per_class],
        "train_summary": {
            "ubm": {
                "iterations": ubm_summary.iterations,
                "final_log_likelihood": ubm_summary.final_log_likelihood,
                "converged": ubm_summary.converged,
            },
            "grid": {
                "kernel": choice.kernel.kind,
                "sigma": choice.kernel.sigma,
                "c": choice.c,
                "cv_accuracy": choice.accuracy,
            },
            "svm": {
                "machines": len(model.machines),
                "all_converged": all(s.converged for s in svm_summaries.values()),
            },
            "train_utterances": len(train_y),
            "test_utterances": len(test_y),
        },
        "seed": split_spec.seed,
        "failures": [list(f) for f in failures],
        "wall_clock_sec": time.perf_counter() - t0,
    }

"""Soft-margin SVMs trained by sequential minimal optimization, plus the
one-vs-one multiclass wrapper used on supervectors.

The RBF kernel is exp(-||x - v||^2 / (2*sigma)): sigma scales the squared
distance directly, so it plays the role of a squared width. Keep that in
mind when porting sigma values from libraries that use 2*sigma^2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ModelError, SingleClass, TooFewSamples

SV_EPS = 1e-12          # dual weights at or below this are dropped
GRAM_CACHE_LIMIT = 2000  # precompute the full Gram matrix up to this many samples
SVM_FORMAT = "emovec-svm"


@dataclass(frozen=True)
class KernelSpec:
    kind: str  # "linear" | "rbf"
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "rbf" and (self.sigma is None or self.sigma <= 0):
            raise ValueError("rbf kernel needs sigma > 0")


@dataclass(frozen=True)
class KernelGrid:
    """Candidate sets for model selection.

    RBF widths are `sigmas` when given, otherwise `sigma_scales` times the
    median pairwise squared distance of the training set.
    """

    cs: tuple[float, ...] = (0.1, 1.0, 10.0)
    kinds: tuple[str, ...] = ("linear", "rbf")
    sigmas: tuple[float, ...] | None = None
    sigma_scales: tuple[float, ...] = (0.015625, 0.0625, 0.25, 1.0, 4.0, 16.0, 64.0, 256.0, 1024.0)


@dataclass(frozen=True)
class TrainParams:
    c: float = 1.0
    tol: float = 1e-3
    max_passes: int = 1000
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("linear"))
    grid: KernelGrid = field(default_factory=KernelGrid)

    def __post_init__(self):
        if self.c <= 0 or self.tol <= 0:
            raise ValueError("C and tol must be positive")


@dataclass(frozen=True)
class BinarySvm:
    support_vectors: np.ndarray  # (n_sv, D)
    coeffs: np.ndarray           # (n_sv,) label-signed dual weights alpha_i * y_i
    bias: float
    kernel: KernelSpec
    class_pair: tuple            # positive decision values vote for class_pair[0]


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray  # strictly positive

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale


@dataclass(frozen=True)
class OvoSvmModel:
    classes: list
    machines: list[BinarySvm]
    standardizer: Standardizer | None


@dataclass
class SmoSummary:
    epochs: int
    converged: bool
    n_support: int
    objective: float
    alphas: np.ndarray
    bias: float


@dataclass(frozen=True)
class GridChoice:
    kernel: KernelSpec
    c: float
    accuracy: float | None  # pooled CV accuracy, None when the grid was trivial
    table: tuple = ()       # (kind, sigma, c, accuracy) per candidate


def kernel_eval(spec: KernelSpec, x: np.ndarray, v: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != v.shape:
        raise DimensionMismatch(f"vector dims {x.shape} vs {v.shape}")
    if spec.kind == "linear":
        return float(x @ v)
    diff = x - v
    return float(np.exp(-(diff @ diff) / (2.0 * spec.sigma)))


def kernel_matrix(spec: KernelSpec, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Pairwise kernel values between the rows of x and y."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = x if y is None else np.atleast_2d(np.asarray(y, dtype=np.float64))
    if spec.kind == "linear":
        return x @ y.T
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * (x @ y.T)
        + np.sum(y * y, axis=1)
    )
    return np.exp(-np.maximum(d2, 0.0) / (2.0 * spec.sigma))


class _KernelCache:
    """Full Gram matrix for small problems, per-row memoization otherwise."""

    def __init__(self, spec: KernelSpec, x: np.ndarray, limit: int = GRAM_CACHE_LIMIT):
        self.spec = spec
        self.x = x
        self.n = x.shape[0]
        self.full = kernel_matrix(spec, x) if self.n <= limit else None
        self._rows: dict[int, np.ndarray] = {}
        # pin the rbf self-similarity to its exact value of 1: the vectorized
        # distance formula leaves cancellation noise on the diagonal
        if self.full is not None:
            if spec.kind == "rbf":
                np.fill_diagonal(self.full, 1.0)
            self.diag = np.diag(self.full).copy()
        else:
            self.diag = np.array([kernel_eval(spec, xi, xi) for xi in x])

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        if i not in self._rows:
            row = kernel_matrix(self.spec, self.x[i][None, :], self.x)[0]
            if self.spec.kind == "rbf":
                row[i] = 1.0
            self._rows[i] = row
        return self._rows[i]


def _dual_objective(alpha: np.ndarray, y: np.ndarray, cache: _KernelCache) -> float:
    coeffs = alpha * y
    quad = sum(float(coeffs[i] * (cache.row(i) @ coeffs)) for i in range(cache.n))
    return float(alpha.sum()) - 0.5 * quad


def train_binary(
    samples: np.ndarray,
    labels: np.ndarray,
    kernel: KernelSpec,
    params: TrainParams,
    gram_cache_limit: int = GRAM_CACHE_LIMIT,
) -> tuple[BinarySvm, SmoSummary]:
    """Solve the soft-margin dual by SMO and package the support vectors.

    Pair selection follows Platt: a KKT violator is paired with the point
    maximizing |E_i - E_j|, with deterministic fallback scans. When the
    usual second-derivative update degenerates (duplicate points), the pair
    objective is evaluated at both clipping endpoints instead.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    n = x.shape[0]
    if y.shape[0] != n:
        raise DimensionMismatch("labels and samples differ in length")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise SingleClass("binary training needs both labels")

    c = params.c
    tol = params.tol
    cache = _KernelCache(kernel, x, gram_cache_limit)
    alpha = np.zeros(n)
    u = np.zeros(n)  # decision values without bias
    b = 0.0

    def take_step(i1: int, i2: int) -> bool:
        nonlocal b
        if i1 == i2:
            return False
        a1_old, a2_old = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        e1 = u[i1] + b - y1
        e2 = u[i2] + b - y2
        s = y1 * y2
        if s < 0:
            lo, hi = max(0.0, a2_old - a1_old), min(c, c + a2_old - a1_old)
        else:
            lo, hi = max(0.0, a1_old + a2_old - c), min(c, a1_old + a2_old)
        if hi - lo < 1e-15:
            return False
        k11 = cache.diag[i1]
        k22 = cache.diag[i2]
        k12 = float(cache.row(i1)[i2])
        eta = k11 + k22 - 2.0 * k12
        if eta > 1e-15:
            a2 = a2_old + y2 * (e1 - e2) / eta
            a2 = min(max(a2, lo), hi)
        else:
            # flat or concave along the pair direction: best endpoint wins
            def gain(a2_cand):
                da2 = a2_cand - a2_old
                da1 = -s * da2
                return (
                    da1 + da2
                    - y1 * da1 * u[i1] - y2 * da2 * u[i2]
                    - 0.5 * (k11 * da1 * da1 + k22 * da2 * da2)
                    - s * k12 * da1 * da2
                )
            glo, ghi = gain(lo), gain(hi)
            if max(glo, ghi) <= 1e-15:
                return False
            a2 = lo if glo > ghi else hi
        if a2 - lo < 1e-12:
            a2 = lo
        elif hi - a2 < 1e-12:
            a2 = hi
        if abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12):
            return False
        a1 = a1_old + s * (a2_old - a2)
        a1 = min(max(a1, 0.0), c)

        d1, d2 = a1 - a1_old, a2 - a2_old
        b1 = b - e1 - y1 * d1 * k11 - y2 * d2 * k12
        b2 = b - e2 - y1 * d1 * k12 - y2 * d2 * k22
        if 0.0 < a1 < c:
            b = b1
        elif 0.0 < a2 < c:
            b = b2
        else:
            b = 0.5 * (b1 + b2)
        u[:] = u + y1 * d1 * cache.row(i1) + y2 * d2 * cache.row(i2)
        alpha[i1], alpha[i2] = a1, a2
        return True

    def examine(i2: int) -> bool:
        e2 = u[i2] + b - y[i2]
        r2 = e2 * y[i2]
        if not ((r2 < -tol and alpha[i2] < c) or (r2 > tol and alpha[i2] > 0)):
            return False
        errors = u + b - y
        non_bound = np.flatnonzero((alpha > 0) & (alpha < c))
        if non_bound.size > 1:
            i1 = int(non_bound[np.argmax(np.abs(errors[non_bound] - e2))])
            if take_step(i1, i2):
                return True
        for i1 in non_bound:
            if take_step(int(i1), i2):
                return True
        for i1 in range(n):
            if take_step(i1, i2):
                return True
        return False

    epochs = 0
    converged = False
    examine_all = True
    num_changed = 1
    while num_changed > 0 or examine_all:
        if epochs >= params.max_passes:
            break
        num_changed = 0
        indices = range(n) if examine_all else np.flatnonzero((alpha > 0) & (alpha < c))
        for i2 in indices:
            if examine(int(i2)):
                num_changed += 1
        if examine_all:
            if num_changed == 0:
                converged = True
            examine_all = False
        elif num_changed == 0:
            examine_all = True
        epochs += 1

    coeffs_full = alpha * y
    g = np.array([float(cache.row(i) @ coeffs_full) for i in range(n)])
    free = (alpha > SV_EPS) & (c - alpha > SV_EPS)
    if free.any():
        bias = float(np.mean(y[free] - g[free]))
    else:
        lowers = [1.0 - g[i] for i in range(n) if alpha[i] <= SV_EPS and y[i] > 0]
        lowers += [-1.0 - g[i] for i in range(n) if c - alpha[i] <= SV_EPS and y[i] < 0]
        uppers = [-1.0 - g[i] for i in range(n) if alpha[i] <= SV_EPS and y[i] < 0]
        uppers += [1.0 - g[i] for i in range(n) if c - alpha[i] <= SV_EPS and y[i] > 0]
        lo = max(lowers) if lowers else -math.inf
        hi = min(uppers) if uppers else math.inf
        if math.isfinite(lo) and math.isfinite(hi):
            bias = 0.5 * (lo + hi)
        elif math.isfinite(lo):
            bias = lo
        elif math.isfinite(hi):
            bias = hi
        else:
            bias = b

    keep = alpha > SV_EPS
    model = BinarySvm(
        support_vectors=x[keep].copy(),
        coeffs=coeffs_full[keep].copy(),
        bias=bias,
        kernel=kernel,
        class_pair=("+1", "-1"),
    )
    summary = SmoSummary(
        epochs=epochs,
        converged=converged,
        n_support=int(keep.sum()),
        objective=_dual_objective(alpha, y, cache),
        alphas=alpha.copy(),
        bias=bias,
    )
    return model, summary


def decision_value(m: BinarySvm, x: np.ndarray) -> float:
    """f(x) = sum_i coeff_i * k(x, v_i) + bias; positive favors class_pair[0]."""
    x = np.asarray(x, dtype=np.float64)
    if m.support_vectors.size == 0:
        return m.bias
    if x.shape[0] != m.support_vectors.shape[1]:
        raise DimensionMismatch(
            f"input dim {x.shape[0]} != support vector dim {m.support_vectors.shape[1]}"
        )
    k = kernel_matrix(m.kernel, x[None, :], m.support_vectors)[0]
    return float(k @ m.coeffs + m.bias)


def _class_order(labels) -> list:
    seen: list = []
    for lab in labels:
        if lab not in seen:
            seen.append(lab)
    return seen


def fit_standardizer(x: np.ndarray) -> Standardizer:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return Standardizer(
        mean=x.mean(axis=0),
        scale=np.maximum(x.std(axis=0), 1e-12),
    )


def train_ovo(
    supervectors: np.ndarray,
    labels,
    params: TrainParams,
    standardize: bool = True,
    class_order: list | None = None,
) -> tuple[OvoSvmModel, dict]:
    """Train one binary machine per class pair on (optionally z-scored) data."""
    x = np.atleast_2d(np.asarray(supervectors, dtype=np.float64))
    labels = list(labels)
    classes = class_order if class_order is not None else _class_order(labels)
    present = set(labels)
    classes = [cls for cls in classes if cls in present]
    if len(classes) < 2:
        raise SingleClass("one-vs-one training needs at least two classes")

    standardizer = fit_standardizer(x) if standardize else None
    z = standardizer.transform(x) if standardizer else x

    machines: list[BinarySvm] = []
    summaries: dict = {}
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            a, b = classes[ai], classes[bi]
            idx = [i for i, lab in enumerate(labels) if lab == a or lab == b]
            pair_y = np.array([1.0 if labels[i] == a else -1.0 for i in idx])
            try:
                machine, summary = train_binary(z[idx], pair_y, params.kernel, params)
            except SingleClass as exc:
                raise ModelError(f"pair ({a}, {b}): {exc}") from exc
            machines.append(
                BinarySvm(
                    support_vectors=machine.support_vectors,
                    coeffs=machine.coeffs,
                    bias=machine.bias,
                    kernel=machine.kernel,
                    class_pair=(a, b),
                )
            )
            summaries[(a, b)] = summary
    return OvoSvmModel(classes=classes, machines=machines, standardizer=standardizer), summaries


def predict(model: OvoSvmModel, x: np.ndarray) -> tuple:
    """(label, votes per class, summed signed margins per class).

    Each machine votes for the side its decision value favors. Vote ties go
    to the class with the larger summed signed decision value, then to the
    earlier class in model.classes.
    """
    x = np.asarray(x, dtype=np.float64)
    z = model.standardizer.transform(x) if model.standardizer else x
    votes = {cls: 0 for cls in model.classes}
    margins = {cls: 0.0 for cls in model.classes}
    for m in model.machines:
        f = decision_value(m, z)
        a, b = m.class_pair
        votes[a if f > 0 else b] += 1
        margins[a] += f
        margins[b] -= f
    order = {cls: i for i, cls in enumerate(model.classes)}
    label = max(model.classes, key=lambda cls: (votes[cls], margins[cls], -order[cls]))
    return label, votes, margins


def median_pairwise_sq_distance(x: np.ndarray) -> float:
    """Median of squared distances over all sample pairs (sigma heuristic)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * (x @ x.T)
        + np.sum(x * x, axis=1)
    )
    iu = np.triu_indices(x.shape[0], k=1)
    vals = np.maximum(d2[iu], 0.0)
    med = float(np.median(vals)) if vals.size else 1.0
    return med if med > 0 else 1.0


def _stratified_folds(labels: list, folds: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(labels), dtype=int)
    for cls in _class_order(labels):
        idx = np.array([i for i, lab in enumerate(labels) if lab == cls])
        if idx.size < folds:
            raise TooFewSamples(f"class {cls!r} has {idx.size} samples for {folds} folds")
        perm = rng.permutation(idx.size)
        fold_of[idx[perm]] = np.arange(idx.size) % folds
    return fold_of


def grid_select(
    supervectors: np.ndarray,
    labels,
    params: TrainParams,
    folds: int = 3,
    standardize: bool = True,
    seed: int = 0,
) -> GridChoice:
    """Pick (kernel, C) by stratified cross-validated accuracy.

    Ties break toward the linear kernel, then smaller C, then smaller sigma.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    x = np.atleast_2d(np.asarray(supervectors, dtype=np.float64))
    labels = list(labels)
    grid = params.grid
    if not grid.cs or not grid.kinds:
        raise ValueError("empty parameter grid")

    if "rbf" in grid.kinds:
        if grid.sigmas is not None:
            sigmas = list(grid.sigmas)
        else:
            ref = fit_standardizer(x).transform(x) if standardize else x
            med = median_pairwise_sq_distance(ref)
            sigmas = [scale * med for scale in grid.sigma_scales]
    else:
        sigmas = []

    candidates: list[tuple[KernelSpec, float]] = []
    for c in sorted(grid.cs):
        if "linear" in grid.kinds:
            candidates.append((KernelSpec("linear"), c))
    for c in sorted(grid.cs):
        for sigma in sorted(sigmas):
            candidates.append((KernelSpec("rbf", sigma), c))
    # canonical tie-break order: linear first, then C ascending, then sigma
    candidates.sort(key=lambda kc: (kc[0].kind != "linear", kc[1], kc[0].sigma or 0.0))

    if len(candidates) == 1:
        kernel, c = candidates[0]
        return GridChoice(kernel=kernel, c=c, accuracy=None)

    fold_of = _stratified_folds(labels, folds, seed)
    class_order = _class_order(labels)

    best: GridChoice | None = None
    table = []
    for kernel, c in candidates:
        cand_params = TrainParams(
            c=c, tol=params.tol, max_passes=params.max_passes, kernel=kernel, grid=grid
        )
        correct = 0
        total = 0
        for f in range(folds):
            train_idx = np.flatnonzero(fold_of != f)
            test_idx = np.flatnonzero(fold_of == f)
            model, _ = train_ovo(
                x[train_idx],
                [labels[i] for i in train_idx],
                cand_params,
                standardize=standardize,
                class_order=class_order,
            )
            for i in test_idx:
                pred, _, _ = predict(model, x[i])
                correct += int(pred == labels[i])
                total += 1
        acc = correct / total
        table.append((kernel.kind, kernel.sigma, c, acc))
        if best is None or acc > best.accuracy:
            best = GridChoice(kernel=kernel, c=c, accuracy=acc)
    return GridChoice(kernel=best.kernel, c=best.c, accuracy=best.accuracy, table=tuple(table))


# -- model file -------------------------------------------------------------------

def svm_to_dict(model: OvoSvmModel, feature_config: str = "") -> dict:
    std = model.standardizer
    return {
        "format": SVM_FORMAT,
        "version": 1,
        "classes": list(model.classes),
        "standardizer": (
            {"mean": std.mean.tolist(), "scale": std.scale.tolist()} if std else None
        ),
        "machines": [
            {
                "pair": list(m.class_pair),
                "kernel": {"kind": m.kernel.kind, "sigma": m.kernel.sigma},
                "support_vectors": m.support_vectors.tolist(),
                "coeffs": m.coeffs.tolist(),
                "bias": m.bias,
            }
            for m in model.machines
        ],
        "feature_config": feature_config,
    }


def svm_from_dict(doc: dict) -> tuple[OvoSvmModel, str]:
    if doc.get("format") != SVM_FORMAT or doc.get("version") != 1:
        raise ModelError("not an emovec-svm version 1 document")
    std = None
    if doc.get("standardizer") is not None:
        std = Standardizer(
            mean=np.asarray(doc["standardizer"]["mean"], dtype=np.float64),
            scale=np.asarray(doc["standardizer"]["scale"], dtype=np.float64),
        )
    machines = [
        BinarySvm(
            support_vectors=np.asarray(m["support_vectors"], dtype=np.float64),
            coeffs=np.asarray(m["coeffs"], dtype=np.float64),
            bias=float(m["bias"]),
            kernel=KernelSpec(m["kernel"]["kind"], m["kernel"]["sigma"]),
            class_pair=tuple(m["pair"]),
        )
        for m in doc["machines"]
    ]
    model = OvoSvmModel(classes=list(doc["classes"]), machines=machines, standardizer=std)
    expected = len(model.classes) * (len(model.classes) - 1) // 2
    if len(machines) != expected:
        raise ModelError(f"expected {expected} pairwise machines, found {len(machines)}")
    return model, doc.get("feature_config", "")


def save_svm(path: str | Path, model: OvoSvmModel, feature_config: str = "") -> None:
    Path(path).write_text(
        json.dumps(svm_to_dict(model, feature_config), sort_keys=True, indent=1) + "\n"
    )


def load_svm(path: str | Path) -> tuple[OvoSvmModel, str]:
    return svm_from_dict(json.loads(Path(path).read_text()))

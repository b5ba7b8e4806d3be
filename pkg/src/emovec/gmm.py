"""Diagonal-covariance Gaussian mixtures: EM-trained background model,
per-utterance mean adaptation, and supervector extraction.

All accumulations run in float64 with a fixed summation order, so a given
(data, seed, config) triple always produces the same model bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyUtterance, ModelError, NotEnoughData

_LN_2PI = float(np.log(2.0 * np.pi))

WEIGHT_FLOOR_SCALE = 1e-6  # per-component floor is this over K
GMM_FORMAT = "emovec-gmm"


@dataclass(frozen=True)
class DiagGmm:
    weights: np.ndarray    # (K,)
    means: np.ndarray      # (K, D)
    variances: np.ndarray  # (K, D), strictly positive

    @property
    def num_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class Supervector:
    values: np.ndarray  # (K*D,)
    k: int
    d: int


@dataclass(frozen=True)
class UbmTrainConfig:
    k: int = 128
    seed: int = 0
    max_em_iters: int = 100
    rel_ll_tol: float = 1e-5
    kmeans_iters: int = 10
    var_floor_scale: float = 1e-3

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.rel_ll_tol <= 0 or self.var_floor_scale <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class MapConfig:
    relevance_factor: float = 16.0

    def __post_init__(self):
        if self.relevance_factor < 0:
            raise ValueError("relevance factor must be >= 0")


@dataclass
class UbmTrainSummary:
    iterations: int
    final_log_likelihood: float
    converged: bool
    log_likelihoods: list[float] = field(default_factory=list)


def _component_log_joint(gmm: DiagGmm, x: np.ndarray) -> np.ndarray:
    """log(W_i) + log N(x_t; mu_i, var_i) for every frame/component pair.

    Returns a (T, K) matrix.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != gmm.dim:
        raise DimensionMismatch(f"feature dim {x.shape[1]} != model dim {gmm.dim}")
    prec = 1.0 / gmm.variances                                               # (K, D)
    log_norm = -0.5 * (gmm.dim * _LN_2PI + np.sum(np.log(gmm.variances), axis=1))
    quad = (
        (x * x) @ prec.T
        - 2.0 * (x @ (gmm.means * prec).T)
        + np.sum(gmm.means * gmm.means * prec, axis=1)
    )
    return np.log(gmm.weights) + log_norm - 0.5 * quad


def _logsumexp_rows(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.sum(np.exp(a - m[:, None]), axis=1))


def gmm_logpdf(gmm: DiagGmm, x: np.ndarray) -> float:
    """Log mixture density at one point, max-shift stabilized."""
    log_joint = _component_log_joint(gmm, np.asarray(x)[None, :])
    return float(_logsumexp_rows(log_joint)[0])


def responsibilities(gmm: DiagGmm, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities for one observation (sums to 1)."""
    return responsibility_matrix(gmm, np.asarray(x)[None, :])[0]


def responsibility_matrix(gmm: DiagGmm, x: np.ndarray) -> np.ndarray:
    """(T, K) posterior matrix; each row sums to 1."""
    log_joint = _component_log_joint(gmm, x)
    log_total = _logsumexp_rows(log_joint)
    return np.exp(log_joint - log_total[:, None])


def total_log_likelihood(gmm: DiagGmm, x: np.ndarray) -> float:
    return float(np.sum(_logsumexp_rows(_component_log_joint(gmm, x))))


def _kmeans_init(x: np.ndarray, k: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded farthest-point spreading followed by Lloyd refinement."""
    t = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(t))]
    dist = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        centers[j] = x[int(np.argmax(dist))]
        dist = np.minimum(dist, np.sum((x - centers[j]) ** 2, axis=1))

    for _ in range(iters):
        d2 = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * (x @ centers.T)
            + np.sum(centers * centers, axis=1)
        )
        assign = np.argmin(d2, axis=1)
        for j in range(k):
            members = x[assign == j]
            if members.shape[0] > 0:
                centers[j] = members.mean(axis=0)
    return centers


def train_ubm(all_features: np.ndarray, cfg: UbmTrainConfig) -> tuple[DiagGmm, UbmTrainSummary]:
    """EM-train a K-component diagonal GMM over pooled frames.

    Stops when the relative total-log-likelihood improvement drops below
    cfg.rel_ll_tol or after cfg.max_em_iters iterations. Variances are
    floored at cfg.var_floor_scale times the global per-dimension variance,
    weights at 1e-6/K (then renormalized).
    """
    x = np.atleast_2d(np.asarray(all_features, dtype=np.float64))
    t, d = x.shape
    k = cfg.k
    if t < k:
        raise NotEnoughData(f"{t} frames cannot support {k} components")

    global_var = x.var(axis=0)
    var_floor = np.maximum(cfg.var_floor_scale * global_var, 1e-10)
    weight_floor = WEIGHT_FLOOR_SCALE / k

    rng = np.random.default_rng(cfg.seed)
    centers = _kmeans_init(x, k, cfg.kmeans_iters, rng)

    # initial mixture from the k-means partition
    d2 = (
        np.sum(x * x, axis=1)[:, None]
        - 2.0 * (x @ centers.T)
        + np.sum(centers * centers, axis=1)
    )
    assign = np.argmin(d2, axis=1)
    weights = np.empty(k)
    variances = np.empty((k, d))
    for j in range(k):
        members = x[assign == j]
        weights[j] = members.shape[0] / t
        variances[j] = members.var(axis=0) if members.shape[0] > 1 else global_var
    weights = np.maximum(weights, weight_floor)
    weights /= weights.sum()
    variances = np.maximum(variances, var_floor)
    gmm = DiagGmm(weights=weights, means=centers.copy(), variances=variances)

    lls: list[float] = []
    converged = False
    iterations = 0
    for iteration in range(cfg.max_em_iters):
        log_joint = _component_log_joint(gmm, x)
        log_total = _logsumexp_rows(log_joint)
        ll = float(np.sum(log_total))
        lls.append(ll)
        iterations = iteration + 1
        if iteration > 0 and ll - lls[-2] < cfg.rel_ll_tol * abs(lls[-2]):
            converged = True
            break

        gamma = np.exp(log_joint - log_total[:, None])  # (T, K)
        nk = gamma.sum(axis=0)
        safe_nk = np.maximum(nk, 1e-300)
        new_means = (gamma.T @ x) / safe_nk[:, None]
        new_vars = (gamma.T @ (x * x)) / safe_nk[:, None] - new_means**2
        dead = nk < 1e-10
        if dead.any():
            new_means[dead] = gmm.means[dead]
            new_vars[dead] = gmm.variances[dead]
        new_weights = np.maximum(nk / t, weight_floor)
        new_weights /= new_weights.sum()
        gmm = DiagGmm(
            weights=new_weights,
            means=new_means,
            variances=np.maximum(new_vars, var_floor),
        )

    summary = UbmTrainSummary(
        iterations=iterations,
        final_log_likelihood=lls[-1],
        converged=converged,
        log_likelihoods=lls,
    )
    return gmm, summary


def map_adapt_means(ubm: DiagGmm, utterance_features: np.ndarray, cfg: MapConfig) -> DiagGmm:
    """Shift each component mean toward the utterance's posterior-weighted mean.

    With occupancy n_i and relevance factor r, the new mean interpolates
    mu_i and the data mean E_i with weight alpha_i = n_i / (n_i + r); the
    0/0 case (empty component at r = 0) resolves to the prior mean.
    Weights and variances are copied from the background model unchanged.
    """
    x = np.atleast_2d(np.asarray(utterance_features, dtype=np.float64))
    if x.shape[0] == 0:
        raise EmptyUtterance("cannot adapt on zero frames")
    gamma = responsibility_matrix(ubm, x)  # raises DimensionMismatch
    n = gamma.sum(axis=0)
    scatter = gamma.T @ x
    occupied = n > 0
    data_means = np.where(occupied[:, None], scatter / np.maximum(n, 1e-300)[:, None], ubm.means)
    denom = n + cfg.relevance_factor
    alpha = np.divide(n, denom, out=np.zeros_like(n), where=denom > 0)
    new_means = alpha[:, None] * data_means + (1.0 - alpha)[:, None] * ubm.means
    return DiagGmm(weights=ubm.weights.copy(), means=new_means, variances=ubm.variances.copy())


def extract_supervector(adapted: DiagGmm) -> Supervector:
    """Stack adapted means component-major into one fixed-length vector."""
    return Supervector(
        values=adapted.means.reshape(-1).copy(),
        k=adapted.num_components,
        d=adapted.dim,
    )


def gmm_to_dict(gmm: DiagGmm, feature_config: str = "") -> dict:
    return {
        "format": GMM_FORMAT,
        "version": 1,
        "k": gmm.num_components,
        "d": gmm.dim,
        "weights": gmm.weights.tolist(),
        "means": gmm.means.tolist(),
        "variances": gmm.variances.tolist(),
        "feature_config": feature_config,
    }


def gmm_from_dict(doc: dict) -> tuple[DiagGmm, str]:
    if doc.get("format") != GMM_FORMAT or doc.get("version") != 1:
        raise ModelError("not an emovec-gmm version 1 document")
    gmm = DiagGmm(
        weights=np.asarray(doc["weights"], dtype=np.float64),
        means=np.asarray(doc["means"], dtype=np.float64),
        variances=np.asarray(doc["variances"], dtype=np.float64),
    )
    if gmm.means.shape != (doc["k"], doc["d"]) or gmm.variances.shape != gmm.means.shape:
        raise ModelError("gmm document dimensions are inconsistent")
    return gmm, doc.get("feature_config", "")


def save_gmm(path: str | Path, gmm: DiagGmm, feature_config: str = "") -> None:
    Path(path).write_text(
        json.dumps(gmm_to_dict(gmm, feature_config), sort_keys=True, indent=1) + "\n"
    )


def load_gmm(path: str | Path) -> tuple[DiagGmm, str]:
    return gmm_from_dict(json.loads(Path(path).read_text()))

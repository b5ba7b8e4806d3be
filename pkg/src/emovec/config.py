"""Run configuration: flat `key = value` files, CLI overrides, digests.

Precedence is defaults < config file < command-line flags. The global
`seed` feeds the UBM and split seeds unless `ubm.seed` / `split.seed`
are set explicitly.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .evaluation import LabelScheme, SplitSpec
from .features import Band, Dataset, FeatureConfig
from .frontend import VadConfig
from .gmm import MapConfig, UbmTrainConfig
from .svm import KernelGrid, KernelSpec, TrainParams

DEFAULT_CACHE_DIR = "emovec_cache"
DEFAULT_MODEL_DIR = "emovec_models"


@dataclass(frozen=True)
class RunConfig:
    features: FeatureConfig
    ubm: UbmTrainConfig
    map: MapConfig
    svm: TrainParams
    split: SplitSpec
    scheme: LabelScheme
    seed: int
    jobs: int
    standardize: bool
    folds: int
    manifest: str | None
    cache_dir: str
    model_dir: str


def parse_config_text(text: str) -> dict[str, str]:
    """Flat `key = value` lines; `#` starts a comment line."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _parse_bool(key: str, value: str) -> bool:
    lowered = value.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _parse_floats(key: str, value: str) -> tuple[float, ...]:
    return tuple(_parse_float(key, part) for part in value.split(",") if part.strip())


def _parse_enum(key: str, value: str, enum_cls):
    try:
        return enum_cls(value.lower())
    except ValueError:
        options = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"{key}: expected one of {options}, got {value!r}") from None


_KNOWN_KEYS = {
    "features.band", "features.dataset", "features.num_filters", "features.num_ceps",
    "features.nfft", "features.f_low", "features.f_high", "features.window_ms",
    "features.shift_ms", "features.delta_window", "features.preemph", "features.vad_floor_db",
    "ubm.k", "ubm.seed", "ubm.max_em_iters", "ubm.rel_ll_tol", "ubm.kmeans_iters",
    "ubm.var_floor_scale",
    "map.relevance_factor",
    "svm.c", "svm.tol", "svm.max_passes", "svm.standardize", "svm.folds",
    "svm.grid_c", "svm.grid_kinds", "svm.grid_sigmas", "svm.grid_sigma_scales",
    "split.test_fraction", "split.seed", "split.stratified",
    "scheme", "seed", "jobs",
    "paths.cache_dir", "paths.model_dir", "paths.manifest",
}


def build_run_config(
    file_values: dict[str, str] | None = None,
    flag_values: dict[str, str] | None = None,
) -> RunConfig:
    """Merge config-file values and CLI flag values over the defaults."""
    merged: dict[str, str] = {}
    for source in (file_values or {}), (flag_values or {}):
        for key, value in source.items():
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"unknown configuration key {key!r}")
            merged[key] = value

    def get(key: str, parse, default):
        if key in merged:
            return parse(key, merged[key])
        return default

    def get_optional(key: str, parse):
        if key in merged and merged[key] != "":
            return parse(key, merged[key])
        return None

    seed = get("seed", _parse_int, 0)

    features = FeatureConfig(
        band=get("features.band", lambda k, v: _parse_enum(k, v, Band), Band.COMBINED),
        dataset=get("features.dataset", lambda k, v: _parse_enum(k, v, Dataset), Dataset.DATA5),
        num_filters=get_optional("features.num_filters", _parse_int),
        num_ceps=get_optional("features.num_ceps", _parse_int),
        nfft=get_optional("features.nfft", _parse_int),
        f_low=get_optional("features.f_low", _parse_float),
        f_high=get_optional("features.f_high", _parse_float),
        window_ms=get("features.window_ms", _parse_float, 16.0),
        shift_ms=get("features.shift_ms", _parse_float, 8.0),
        delta_window=get("features.delta_window", _parse_int, 2),
        preemph=get("features.preemph", _parse_float, 0.95),
        vad=VadConfig(floor_db=get("features.vad_floor_db", _parse_float, 40.0)),
    )
    ubm = UbmTrainConfig(
        k=get("ubm.k", _parse_int, 128),
        seed=get("ubm.seed", _parse_int, seed),
        max_em_iters=get("ubm.max_em_iters", _parse_int, 100),
        rel_ll_tol=get("ubm.rel_ll_tol", _parse_float, 1e-5),
        kmeans_iters=get("ubm.kmeans_iters", _parse_int, 10),
        var_floor_scale=get("ubm.var_floor_scale", _parse_float, 1e-3),
    )
    map_cfg = MapConfig(relevance_factor=get("map.relevance_factor", _parse_float, 16.0))

    grid = KernelGrid(
        cs=get("svm.grid_c", _parse_floats, KernelGrid.cs),
        kinds=tuple(
            get("svm.grid_kinds", lambda k, v: tuple(p.strip() for p in v.split(",") if p.strip()),
                KernelGrid.kinds)
        ),
        sigmas=get_optional("svm.grid_sigmas", _parse_floats),
        sigma_scales=get("svm.grid_sigma_scales", _parse_floats, KernelGrid.sigma_scales),
    )
    for kind in grid.kinds:
        if kind not in ("linear", "rbf"):
            raise ConfigError(f"svm.grid_kinds: unknown kernel kind {kind!r}")
    svm_params = TrainParams(
        c=get("svm.c", _parse_float, 1.0),
        tol=get("svm.tol", _parse_float, 1e-3),
        max_passes=get("svm.max_passes", _parse_int, 1000),
        kernel=KernelSpec("linear"),
        grid=grid,
    )
    split = SplitSpec(
        test_fraction=get("split.test_fraction", _parse_float, 0.3),
        seed=get("split.seed", _parse_int, seed),
        stratified=get("split.stratified", _parse_bool, True),
    )
    scheme = get("scheme", lambda k, v: _parse_enum(k, v, LabelScheme), LabelScheme.CATEGORICAL7)

    return RunConfig(
        features=features,
        ubm=ubm,
        map=map_cfg,
        svm=svm_params,
        split=split,
        scheme=scheme,
        seed=seed,
        jobs=get("jobs", _parse_int, 1),
        standardize=get("svm.standardize", _parse_bool, True),
        folds=get("svm.folds", _parse_int, 3),
        manifest=merged.get("paths.manifest"),
        cache_dir=merged.get("paths.cache_dir")
        or os.environ.get("EMOVEC_CACHE_DIR", DEFAULT_CACHE_DIR),
        model_dir=merged.get("paths.model_dir", DEFAULT_MODEL_DIR),
    )


def load_config_file(path: str | Path) -> dict[str, str]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def config_items(cfg: RunConfig) -> list[tuple[str, str]]:
    """Canonical (key, value) pairs for everything that affects results.

    Paths and the jobs count are excluded: they change where artifacts live
    and how fast they are produced, never what they contain.
    """
    items = [(f"features.{k}", v) for k, v in cfg.features.to_items()]
    items += [
        ("ubm.k", str(cfg.ubm.k)),
        ("ubm.seed", str(cfg.ubm.seed)),
        ("ubm.max_em_iters", str(cfg.ubm.max_em_iters)),
        ("ubm.rel_ll_tol", repr(cfg.ubm.rel_ll_tol)),
        ("ubm.kmeans_iters", str(cfg.ubm.kmeans_iters)),
        ("ubm.var_floor_scale", repr(cfg.ubm.var_floor_scale)),
        ("map.relevance_factor", repr(cfg.map.relevance_factor)),
        ("svm.c", repr(cfg.svm.c)),
        ("svm.tol", repr(cfg.svm.tol)),
        ("svm.max_passes", str(cfg.svm.max_passes)),
        ("svm.standardize", str(cfg.standardize)),
        ("svm.folds", str(cfg.folds)),
        ("svm.grid_c", ",".join(repr(c) for c in cfg.svm.grid.cs)),
        ("svm.grid_kinds", ",".join(cfg.svm.grid.kinds)),
        ("svm.grid_sigmas",
         "" if cfg.svm.grid.sigmas is None else ",".join(repr(s) for s in cfg.svm.grid.sigmas)),
        ("svm.grid_sigma_scales", ",".join(repr(s) for s in cfg.svm.grid.sigma_scales)),
        ("split.test_fraction", repr(cfg.split.test_fraction)),
        ("split.seed", str(cfg.split.seed)),
        ("split.stratified", str(cfg.split.stratified)),
        ("scheme", cfg.scheme.value),
        ("seed", str(cfg.seed)),
    ]
    return items


def run_digest(cfg: RunConfig) -> str:
    text = "\n".join(f"{k} = {v}" for k, v in sorted(config_items(cfg)))
    return hashlib.sha256(text.encode()).hexdigest()[:12]

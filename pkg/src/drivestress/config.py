"""Pipeline configuration.

All tuned constants live here and can be overridden from a flat key-value
text file (``key = value`` per line, ``#`` comments). List-valued keys use
comma-separated entries.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import SchemaError

DECADES_1E_4_TO_1E2 = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
DECADES_1E_2_TO_1E4 = (1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0, 10000.0)


@dataclass(frozen=True)
class PipelineConfig:
    # signal conditioning
    eda_cutoff_hz: float = 1.0
    filter_order: int = 2

    # windowing
    window_seconds: float = 30.0
    window_overlap: float = 0.5

    # startle peak detection
    peak_slope_threshold: float = 0.01
    peak_min_amplitude: float = 0.005
    peak_smooth_seconds: float = 1.0

    # drive profiling
    profile_gamma: float = 0.1
    kmeans_restarts: int = 10
    kmeans_max_iter: int = 300

    # multi-task kernel learning
    mtmkl_step_size: float = 0.01
    mtmkl_max_outer_iters: int = 100
    mtmkl_eta_tolerance: float = 1e-4
    omega2_sign: str = "as_printed"  # or "similarity"

    # hyperparameter grids
    grid_c: tuple[float, ...] = DECADES_1E_4_TO_1E2
    grid_nu: tuple[float, ...] = DECADES_1E_4_TO_1E2
    grid_gamma: tuple[float, ...] = (0.1, 1.0, 10.0)
    grid_lambda: tuple[float, ...] = DECADES_1E_2_TO_1E4

    # cross-validation
    n_outer_folds: int = 10
    n_inner_folds: int = 5
    group_by_drive: bool = False

    seed: int = 0

    def replace(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)


_TUPLE_KEYS = {"grid_c", "grid_nu", "grid_gamma", "grid_lambda"}
_BOOL_KEYS = {"group_by_drive"}
_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _coerce(key: str, raw: str, target_type):
    if key in _TUPLE_KEYS:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if not parts:
            raise SchemaError(f"config key {key!r} needs at least one value")
        return tuple(float(p) for p in parts)
    if key in _BOOL_KEYS:
        word = raw.strip().lower()
        if word in _TRUE_WORDS:
            return True
        if word in _FALSE_WORDS:
            return False
        raise SchemaError(f"config key {key!r} expects a boolean, got {raw!r}")
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return raw.strip()


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    base = base or PipelineConfig()
    known = {f.name: f.type for f in fields(PipelineConfig)}
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise SchemaError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise SchemaError(
                f"config line {lineno}: unknown key {key!r}; "
                f"known keys: {', '.join(sorted(known))}"
            )
        current = getattr(base, key)
        try:
            overrides[key] = _coerce(key, raw, type(current))
        except ValueError as exc:
            raise SchemaError(f"config line {lineno}: bad value for {key!r}: {raw!r}") from exc
    return base.replace(**overrides)


def load_config(path: str | Path, base: PipelineConfig | None = None) -> PipelineConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base=base)


def default_config() -> PipelineConfig:
    return PipelineConfig()

"""Experiment configuration: JSON parsing, defaults and canonical re-emission."""

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError
from .model import LinearGaussianModel, TimeGrid
from .particle_filters import FilterVariant

__all__ = ["ExperimentConfig", "parse_config", "config_from_dict",
           "config_to_dict", "canonical_json", "config_hash"]

DEFAULT_TRIALS = 1000
DEFAULT_LEVELS = (0.02, 0.01, 0.005)

_TOP_KEYS = {"model", "grid", "variants", "n_list", "d_list", "trials", "seed",
             "static", "init", "chaos", "sweep"}
_MODEL_KEYS = {"a", "h", "sigma_b", "r", "m0", "sigma0"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment run or sweep.

    ``model`` may be ``None`` for the static comparison, which builds the
    fully observed static model for every ``d`` in ``d_list``.
    """

    model: LinearGaussianModel = None
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(1e-3, 1000))
    variants: tuple = (FilterVariant.DETERMINISTIC_FPF,)
    n_list: tuple = (100,)
    d_list: tuple = ()
    trials: int = DEFAULT_TRIALS
    master_seed: int = 0
    sigma: float = 1.0
    direction: tuple = None
    exact_moments: bool = False
    clip: float = 1.0
    levels: tuple = DEFAULT_LEVELS

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("variants", tuple(FilterVariant(v) for v in self.variants))
        set_("n_list", tuple(int(n) for n in self.n_list))
        set_("d_list", tuple(int(d) for d in self.d_list))
        set_("levels", tuple(float(v) for v in self.levels))
        if self.direction is not None:
            set_("direction", tuple(float(v) for v in self.direction))
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ConfigError("ensemble sizes must be positive integers", key="n_list")
        if any(d < 1 for d in self.d_list):
            raise ConfigError("dimensions must be positive integers", key="d_list")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("must be a positive integer", key="trials")
        set_("trials", int(self.trials))
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError("must be positive", key="static.sigma")
        if not (np.isfinite(self.clip) and self.clip > 0):
            raise ConfigError("must be positive", key="chaos.clip")
        if not self.variants:
            raise ConfigError("at least one filter variant is required", key="variants")
        set_("master_seed", int(self.master_seed) % (1 << 64))

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return ExperimentConfig(**values)


def _get(section, key, path, default=None, required=False):
    if key in section:
        return section[key]
    if required:
        raise ConfigError("missing required key", key=path)
    return default


def _number(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key=path)
    return value


def _int_list(value, path, allow_empty=False):
    if not isinstance(value, list) or not (value or allow_empty):
        raise ConfigError("expected a non-empty list of integers", key=path)
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"expected an integer, got {v!r}", key=f"{path}[{i}]")
        out.append(v)
    return out


def _section(raw, key, allowed):
    sec = raw.get(key, {})
    if not isinstance(sec, dict):
        raise ConfigError("expected an object", key=key)
    unknown = set(sec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", key=key)
    return sec


def _model_from_dict(sec):
    arrays = {}
    for name in ("a", "h", "sigma_b", "r", "m0", "sigma0"):
        if name in sec and sec[name] is not None:
            try:
                arrays[name] = np.array(sec[name], dtype=float)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"not a numeric array ({exc})", key=f"model.{name}")
    for name in ("a", "h", "sigma_b"):
        if name not in arrays:
            raise ConfigError("missing required key", key=f"model.{name}")
    if "m0" in arrays:
        arrays["m0"] = np.atleast_1d(arrays["m0"])
    return LinearGaussianModel(**arrays)


def config_from_dict(raw):
    """Build an :class:`ExperimentConfig` from a decoded JSON object."""
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a JSON object", key="<root>")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", key="<root>")

    model = None
    if raw.get("model") is not None:
        model = _model_from_dict(_section(raw, "model", _MODEL_KEYS))

    grid_sec = _section(raw, "grid", {"dt", "horizon"})
    dt = _number(_get(grid_sec, "dt", "grid.dt", 1e-3), "grid.dt")
    horizon = _number(_get(grid_sec, "horizon", "grid.horizon", 1.0), "grid.horizon")
    grid = TimeGrid.from_horizon(dt, horizon)

    variants = raw.get("variants", [FilterVariant.DETERMINISTIC_FPF.value])
    if not isinstance(variants, list):
        raise ConfigError("expected a list of variant names", key="variants")
    try:
        variants = [FilterVariant(v) for v in variants]
    except ValueError as exc:
        raise ConfigError(str(exc), key="variants") from None

    n_list = _int_list(_get(raw, "n_list", "n_list", required=True), "n_list")
    d_list = _int_list(raw["d_list"], "d_list", allow_empty=True) if "d_list" in raw else []
    trials = _get(raw, "trials", "trials", DEFAULT_TRIALS)
    if isinstance(trials, bool) or not isinstance(trials, int):
        raise ConfigError(f"expected an integer, got {trials!r}", key="trials")
    seed = _get(raw, "seed", "seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"expected a non-negative integer, got {seed!r}", key="seed")

    static = _section(raw, "static", {"sigma", "a"})
    sigma = _number(static.get("sigma", 1.0), "static.sigma")
    direction = static.get("a")
    if direction is not None:
        direction = np.asarray(direction, dtype=float)
        if direction.ndim != 1 or abs(np.linalg.norm(direction) - 1) > 1e-9:
            raise ConfigError("must be a unit vector", key="static.a")
    init = _section(raw, "init", {"exact_moments"})
    exact = init.get("exact_moments", False)
    if not isinstance(exact, bool):
        raise ConfigError("expected true or false", key="init.exact_moments")
    clip = _number(_section(raw, "chaos", {"clip"}).get("clip", 1.0), "chaos.clip")
    levels = _section(raw, "sweep", {"levels"}).get("levels", list(DEFAULT_LEVELS))
    if not isinstance(levels, list) or not all(
            isinstance(v, (int, float)) and v > 0 for v in levels):
        raise ConfigError("expected a list of positive numbers", key="sweep.levels")

    if model is None and not d_list:
        raise ConfigError("either model or d_list is required", key="model")

    return ExperimentConfig(
        model=model, grid=grid, variants=tuple(variants), n_list=tuple(n_list),
        d_list=tuple(d_list), trials=trials, master_seed=seed, sigma=sigma,
        direction=None if direction is None else tuple(direction),
        exact_moments=exact, clip=clip, levels=tuple(levels))


def parse_config(path):
    """Read and validate a JSON configuration file.

    Raises
    ------
    ConfigError
        On unreadable/invalid JSON, missing keys, non-SPD ``r``, non-PSD
        ``sigma0`` or inconsistent dimensions; the message names the key.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", key="--config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", key="<root>") from None
    return config_from_dict(raw)


def config_to_dict(cfg):
    """Fully explicit JSON-compatible form of ``cfg`` (defaults filled in)."""
    static = {"sigma": cfg.sigma}
    if cfg.direction is not None:
        static["a"] = list(cfg.direction)
    return {
        "model": None if cfg.model is None else cfg.model.to_dict(),
        "grid": {"dt": cfg.grid.dt, "horizon": cfg.grid.horizon},
        "variants": [v.value for v in cfg.variants],
        "n_list": list(cfg.n_list),
        "d_list": list(cfg.d_list),
        "trials": cfg.trials,
        "seed": cfg.master_seed,
        "static": static,
        "init": {"exact_moments": cfg.exact_moments},
        "chaos": {"clip": cfg.clip},
        "sweep": {"levels": list(cfg.levels)},
    }


def canonical_json(cfg):
    return json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg):
    """SHA-256 of the canonical JSON text."""
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()

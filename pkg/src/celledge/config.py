"""Pipeline configuration: one INI-style file, every knob with a default.

Sections/keys mirror the algorithm parameters; unknown sections or keys
are hard errors so typos never silently fall back to defaults. The
CELLEDGE_CONFIG environment variable supplies a default path; CLI flags
override file values.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from celledge.correction import CorrectionParams
from celledge.refit import FitParams

__all__ = ["ConfigError", "PipelineConfig", "load_config", "ENV_CONFIG_PATH"]

ENV_CONFIG_PATH = "CELLEDGE_CONFIG"


class ConfigError(ValueError):
    """Raised for unreadable, unknown, or invalid configuration input."""


@dataclass
class PipelineConfig:
    sigma: float = 1.5
    correction: CorrectionParams = field(default_factory=CorrectionParams)
    fit: FitParams = field(default_factory=FitParams)
    eval_tolerance: float | None = None   # None: 0.0075 * image diagonal
    eval_thresholds: int = 33
    prep_seed: int = 0
    workers: int = 1
    write_original: bool = True
    dump_gradient: bool = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.eval_thresholds < 1:
            raise ConfigError("eval thresholds must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_optional_float(raw: str) -> float | None:
    return None if raw.strip().lower() in ("", "none", "auto") else float(raw)


_SCHEMA = {
    "gradient": {"sigma": float},
    "correction": {
        "radius": int,
        "bandwidth": _parse_optional_float,
        "contrast_threshold": float,
        "candidate_step": float,
        "weighted_argmax": _parse_bool,
    },
    "fit": {
        "step": float,
        "mode": str,
        "overlap": _parse_optional_float,
        "offset_divisor": float,
    },
    "fit.cytoplasm": {
        "bandwidth_scale": float,
        "group_divisor": float,
        "min_group_size": int,
    },
    "fit.nucleus": {
        "bandwidth_scale": float,
        "group_divisor": float,
        "min_group_size": int,
    },
    "eval": {"tolerance": _parse_optional_float, "thresholds": int},
    "prep": {"seed": int},
    "run": {"workers": int, "write_original": _parse_bool, "dump_gradient": _parse_bool},
}


def _parsed_values(path: Path) -> dict[str, dict]:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"bad config syntax in {path}: {exc}") from exc

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            try:
                values[section][key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc
    return values


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Build a PipelineConfig from a file, the env default, or defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH) or None
    if path is None:
        return PipelineConfig()
    values = _parsed_values(Path(path))

    def section(name):
        return values.get(name, {})

    try:
        correction = CorrectionParams(**section("correction"))
        fit_kwargs = dict(section("fit"))
        if section("fit.cytoplasm"):
            fit_kwargs["cytoplasm"] = replace(
                FitParams().cytoplasm, **section("fit.cytoplasm"))
        if section("fit.nucleus"):
            fit_kwargs["nucleus"] = replace(
                FitParams().nucleus, **section("fit.nucleus"))
        fit = FitParams(**fit_kwargs)
        return PipelineConfig(
            sigma=section("gradient").get("sigma", 1.5),
            correction=correction,
            fit=fit,
            eval_tolerance=section("eval").get("tolerance"),
            eval_thresholds=section("eval").get("thresholds", 33),
            prep_seed=section("prep").get("seed", 0),
            workers=section("run").get("workers", 1),
            write_original=section("run").get("write_original", True),
            dump_gradient=section("run").get("dump_gradient", False),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

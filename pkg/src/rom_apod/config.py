"""Plain key=value experiment configuration.

One `key = value` pair per line, `#` starts a comment, unknown keys are
rejected.  `format_config` writes a canonical document that parses back
to an equal config, so files can be regenerated without drift.
"""

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .adaptive import INDICATOR_KINDS, METHOD_NAMES, AdaptiveConfig

PROBLEM_NAMES = ("kolmogorov", "abc", "manufactured")

_COARSE_METHODS = ("two-grid", "aug-coarse")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; the message names the key."""


@dataclass
class ExperimentConfig:
    """Everything one experiment needs: problem, meshes, methods, times.

    method is the tuple of runs to perform; adaptive entries are named by
    their indicator (residual, two-grid, aug-random, aug-coarse), next to
    the baselines fem and pod.
    """

    problem: str
    epsilon: float
    fine_n: int
    T: float
    coarse_n: Optional[int] = None
    method: tuple = ("pod",)
    T0: float = 5.0
    dT: float = 4.0
    dt: float = 5e-3
    coarse_dt: float = 0.2
    dM: int = 20
    gamma1: float = 0.999
    gamma2: float = 0.999
    gamma3: float = 1.0 - 1e-8
    eta0: Optional[float] = None
    rel_tol: float = 1e-10
    seed: int = 0
    reference: bool = True
    w_freq: float = 1.0
    plots: bool = True
    out_dir: str = "rom-apod-out"

    def adaptive_methods(self) -> tuple:
        return tuple(m for m in self.method if m in INDICATOR_KINDS)

    def to_adaptive(self, kind: str = "aug-coarse") -> AdaptiveConfig:
        """The run-level view of this config for one indicator kind."""
        eta0 = np.inf if self.eta0 is None else self.eta0
        return AdaptiveConfig(dt=self.dt, coarse_dt=self.coarse_dt,
                              T0=self.T0, dT=self.dT, T=self.T,
                              gamma1=self.gamma1, gamma2=self.gamma2,
                              gamma3=self.gamma3, snapshot_stride=self.dM,
                              eta0=eta0, indicator=kind,
                              rel_tol=self.rel_tol, seed=self.seed)


_REQUIRED = ("problem", "epsilon", "fine_n", "T")


def _convert(key: str, raw: str, target_type):
    try:
        if target_type is bool:
            if raw not in ("true", "false"):
                raise ValueError
            return raw == "true"
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        if target_type is tuple:
            items = tuple(s.strip() for s in raw.split(",") if s.strip())
            if not items:
                raise ValueError
            return items
    except ValueError:
        raise ConfigError(
            f"key '{key}': cannot read '{raw}' as {target_type.__name__}") from None
    return raw


_FIELD_TYPES = {
    "problem": str, "epsilon": float, "fine_n": int, "T": float,
    "coarse_n": int, "method": tuple, "T0": float, "dT": float,
    "dt": float, "coarse_dt": float, "dM": int,
    "gamma1": float, "gamma2": float, "gamma3": float,
    "eta0": float, "rel_tol": float, "seed": int,
    "reference": bool, "w_freq": float, "plots": bool, "out_dir": str,
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a key=value config document.

    Raises
    ------
    ConfigError
        Naming the offending key: unknown or duplicate keys, bad values,
        missing required keys, or inconsistent method/mesh/time settings.
    """
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{body}'")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key '{key}'")
        values[key] = _convert(key, raw, _FIELD_TYPES[key])

    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required config key '{key}'")
    cfg = ExperimentConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    """Cross-field consistency checks shared by parsing and `check`."""
    if cfg.problem not in PROBLEM_NAMES:
        raise ConfigError(f"key 'problem': unknown problem '{cfg.problem}', "
                          f"expected one of {PROBLEM_NAMES}")
    if not cfg.epsilon > 0.0:
        raise ConfigError(f"key 'epsilon': must be positive, got {cfg.epsilon}")
    if cfg.fine_n < 1:
        raise ConfigError(f"key 'fine_n': must be >= 1, got {cfg.fine_n}")
    for name in cfg.method:
        if name not in METHOD_NAMES:
            raise ConfigError(f"key 'method': unknown method '{name}', "
                              f"expected from {METHOD_NAMES}")
    needs_coarse = [m for m in cfg.method if m in _COARSE_METHODS]
    if needs_coarse:
        if cfg.coarse_n is None:
            raise ConfigError(f"key 'coarse_n': required by method "
                              f"'{needs_coarse[0]}' but missing")
        if cfg.coarse_n < 1:
            raise ConfigError(f"key 'coarse_n': must be >= 1, got {cfg.coarse_n}")
        if cfg.fine_n % cfg.coarse_n != 0:
            raise ConfigError(f"key 'coarse_n': {cfg.coarse_n} does not divide "
                              f"fine_n = {cfg.fine_n}")
    adaptive = cfg.adaptive_methods()
    if adaptive and cfg.eta0 is None:
        raise ConfigError(f"key 'eta0': required by method '{adaptive[0]}' but missing")
    if cfg.eta0 is not None and not cfg.eta0 >= 0.0:
        raise ConfigError(f"key 'eta0': must be non-negative, got {cfg.eta0}")
    # time-grid consistency, once per distinct indicator
    kinds = set(adaptive) or {"aug-coarse"}
    for kind in sorted(kinds):
        try:
            cfg.to_adaptive(kind)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse_config(format_config(cfg)) == cfg."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ", ".join(value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())

"""JSON experiment configuration.

Matrices are row-major nested lists. Every section is optional except
``plant`` and ``exosystem``; missing fields take the defaults below and the
fully resolved configuration is written next to each run's outputs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .sysmodel import Exosystem, Plant

ALGORITHMS = ("pi-lqr", "vi-lqr", "first", "improved")


@dataclass
class SimulationConfig:
    T: float = 20.0
    h: float = 1e-3
    sample_stride: int = 100
    seed: int = 0
    amplitude: float = 0.5
    band: list = field(default_factory=lambda: [0.2, 2.0])
    state_cap: float = 1e9
    x0: list | None = None
    z0: list | None = None


@dataclass
class LearningConfig:
    algorithm: str = "improved"
    c: float = 10.0
    b0: float | None = None
    eps_conv: float = 1e-6
    max_iter: int = 1_000_000
    reset_cap: int = 30
    rank_tol: float = 1e-10
    d_zero: bool = False
    P0: list | None = None
    K0: list | None = None
    pi_tol: float = 1e-8


@dataclass
class EvaluationConfig:
    T: float | None = None
    h: float = 1e-2
    settle_tol: float = 1e-4
    fallback_T: float = 100.0


@dataclass
class ExperimentConfig:
    plant: dict
    exosystem: dict
    minpoly_override: list | None = None
    Q: list | None = None
    R: list | None = None
    Q_plant: list | None = None
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    blind: bool = False
    out: str = "out"

    def build_plant(self) -> Plant:
        try:
            return Plant(**{k: self.plant[k] for k in "ABCDEF"})
        except KeyError as exc:
            raise ConfigError(f"plant: missing matrix {exc.args[0]}") from exc
        except Exception as exc:
            raise ConfigError(f"plant: {exc}") from exc

    def build_exosystem(self) -> Exosystem:
        try:
            return Exosystem(S=self.exosystem["S"], v0=self.exosystem["v0"])
        except KeyError as exc:
            raise ConfigError(f"exosystem: missing field {exc.args[0]}") from exc
        except Exception as exc:
            raise ConfigError(f"exosystem: {exc}") from exc

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _section(cls, data, name):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{name}: unknown field(s) {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("top level must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    for required in ("plant", "exosystem"):
        if required not in data:
            raise ConfigError(f"missing required field {required!r}")
    cfg = ExperimentConfig(
        plant=data["plant"],
        exosystem=data["exosystem"],
        minpoly_override=data.get("minpoly_override"),
        Q=data.get("Q"),
        R=data.get("R"),
        Q_plant=data.get("Q_plant"),
        simulation=_section(SimulationConfig, data.get("simulation"), "simulation"),
        learning=_section(LearningConfig, data.get("learning"), "learning"),
        evaluation=_section(EvaluationConfig, data.get("evaluation"), "evaluation"),
        blind=bool(data.get("blind", False)),
        out=str(data.get("out", "out")),
    )
    if cfg.learning.algorithm not in ALGORITHMS:
        raise ConfigError(f"learning.algorithm: must be one of {ALGORITHMS}")
    cfg.build_plant()
    cfg.build_exosystem()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")

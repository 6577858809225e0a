"""Experiment configuration: a YAML tree mapped onto dataclasses, with every
constraint violation reported by field name."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .adversary import ATTACKS, CORRUPTION_MODES, AdversaryConfigError, AdversarySpec

AGGREGATORS = (
    "fedavg",
    "fltrust_relu",
    "fltrust_poly_real",
    "fltrust_poly_fixedpoint",
    "lobyitfl_secure",
    "krum",
    "trimmed_mean",
)
DATASETS = ("mnist", "synthetic")


class ConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    name: str = "synthetic"
    n_train: int = 2000
    n_test: int = 500
    pool: int = 4  # mnist: mean-pool factor
    standardize: bool = True
    dim: int = 20  # synthetic
    num_classes: int = 4  # synthetic
    sep: float = 2.5  # synthetic
    data_dir: str | None = None


@dataclass
class AttackConfig:
    kind: str = "none"
    byzantine: list[int] | None = None  # default: clients 1..e
    colluders: list[int] = field(default_factory=list)
    dropouts: list[list[int]] = field(default_factory=list)  # [client, iteration, step]
    factor: float | None = None  # scaling attack; default n
    target: int = 0  # backdoor target class
    trigger_size: int = 3
    mode: str = "value"  # protocol corruption
    grid: int = 91  # directed attack angle grid


@dataclass
class ExperimentConfig:
    name: str = "run"
    seed: int = 0
    n: int = 10
    t: int = 2
    e: int = 0
    s: int = 1
    iterations: int = 20
    aggregator: str = "lobyitfl_secure"
    q: int = 1024
    eps: float = 0.02
    q_c: int | None = None  # coefficient scale, defaults to q
    h_coeffs: list[float] | None = None  # low to high; None = default cubic
    gamma: float = 0.1
    eta: float = 1.0
    eta_local: float = 0.1
    local_iters: int = 1
    batch: int = 64
    root_size: int = 100
    arch: str = "logreg"
    hidden: int = 128
    eval_every: int = 1
    transcripts: bool = False
    out: str = "runs"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)

    @property
    def coeff_scale(self) -> int:
        return self.q_c if self.q_c is not None else self.q

    @property
    def byzantine(self) -> tuple[int, ...]:
        ids = self.attack.byzantine if self.attack.byzantine is not None else range(1, self.e + 1)
        return tuple(int(i) for i in ids)

    def adversary(self) -> AdversarySpec:
        a = self.attack
        params = {"factor": a.factor, "target": a.target, "trigger_size": a.trigger_size, "mode": a.mode, "grid": a.grid}
        return AdversarySpec(
            byzantine=self.byzantine,
            colluders=tuple(a.colluders),
            dropouts=tuple(tuple(int(x) for x in d) for d in a.dropouts),
            attack=a.kind,
            params=params,
        )

    def run_id(self) -> str:
        return f"{self.name}-{self.aggregator}-{self.attack.kind}-s{self.seed}"

    def validate(self) -> "ExperimentConfig":
        errs = []

        def need(cond: bool, msg: str) -> None:
            if not cond:
                errs.append(msg)

        need(self.n >= 1, "n: must be >= 1")
        need(self.t >= 0, "t: must be >= 0")
        need(self.e >= 0, "e: must be >= 0")
        need(self.s >= 0, "s: must be >= 0")
        need(self.n >= self.e + self.t + self.s + 1, f"n: need n >= e+t+s+1 = {self.e + self.t + self.s + 1}, got {self.n}")
        need(self.q >= 2, "q: must be >= 2")
        need(self.eps > 0, "eps: must be > 0")
        need(self.coeff_scale >= 1, "q_c: must be >= 1")
        need(self.iterations >= 1, "iterations: must be >= 1")
        need(self.aggregator in AGGREGATORS, f"aggregator: one of {', '.join(AGGREGATORS)}")
        need(0 < self.gamma <= 1, "gamma: must be in (0, 1]")
        need(self.eta > 0, "eta: must be > 0")
        need(self.eta_local > 0, "eta_local: must be > 0")
        need(self.local_iters >= 1, "local_iters: must be >= 1")
        need(self.batch >= 1, "batch: must be >= 1")
        need(self.root_size >= 1, "root_size: must be >= 1")
        need(self.arch in ("logreg", "mlp"), "arch: logreg or mlp")
        need(self.eval_every >= 1, "eval_every: must be >= 1")
        need(self.h_coeffs is None or len(self.h_coeffs) >= 2, "h_coeffs: need degree >= 1")
        need(self.dataset.name in DATASETS, f"dataset.name: one of {', '.join(DATASETS)}")
        need(self.attack.kind in ATTACKS, f"attack.kind: one of {', '.join(ATTACKS)}")
        need(self.attack.mode in CORRUPTION_MODES, f"attack.mode: one of {', '.join(CORRUPTION_MODES)}")
        need(len(self.byzantine) == self.e, f"attack.byzantine: expected e={self.e} ids")
        if self.attack.kind == "corrupt":
            need(self.aggregator == "lobyitfl_secure", "attack.kind: corrupt needs aggregator lobyitfl_secure")
        if self.attack.kind == "norm_skip":
            need(
                self.aggregator in ("lobyitfl_secure", "fltrust_poly_fixedpoint"),
                "attack.kind: norm_skip needs a quantizing aggregator",
            )
        if self.aggregator == "trimmed_mean":
            need(2 * max(self.e, 1) < self.n, "e: trimmed_mean needs 2e < n")
        if not errs:
            try:
                self.adversary().validate(self.n, self.t, self.s)
            except AdversaryConfigError as exc:
                errs.append(f"attack.{exc}")
        if errs:
            raise ConfigError("; ".join(errs))
        return self


def _build(cls, data: Any, prefix: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError("; ".join(f"{prefix}{k}: unknown field" for k in unknown))
    kwargs = {}
    for name, value in data.items():
        if name == "dataset":
            kwargs[name] = _build(DatasetConfig, value, "dataset.")
        elif name == "attack":
            kwargs[name] = _build(AttackConfig, value, "attack.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data: dict, **overrides) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data, "")
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()


def load(path: str | Path, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return from_dict(data or {}, **overrides)


def to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)

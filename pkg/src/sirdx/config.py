"""JSON run configuration.

Every field has a default, so an empty file (or no file) reproduces the
reference setup.  Example::

    {
      "seed": 7,
      "n": 500,
      "ranges": "paper",
      "integrator": {"dt": 0.01, "t_max": 2000},
      "mlp": {"activation": "tanh"},
      "sobol": {"n_base": 2048}
    }

``ranges`` is either a preset name (``"paper"`` or ``"assumptions"``) or an
explicit mapping such as ``{"kappa0": [0.0025, 0.0025]}``; omitted
coefficients keep their default interval.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .core import IntegratorConfig
from .dataset import RANGE_PRESETS, LabelRule, ParamRanges
from .surrogate import MlpConfig, TrainConfig

# offsets added to the master seed so each stage can be rerun on its own
SEED_OFFSETS = {"dataset": 0, "split": 1, "train": 2, "cv": 3, "classify": 4, "sobol": 5}


class ConfigError(ValueError):
    pass


@dataclass
class ClassifierConfig:
    C: float = 1.0
    tol: float = 1e-3
    max_passes: int = 200
    degree: int = 3
    coef0: float = 0.0
    gamma: float | None = None
    logistic_learning_rate: float = 0.5
    logistic_max_iters: int = 5000
    logistic_tolerance: float = 1e-6


@dataclass
class SobolConfig:
    n_base: int = 1024
    target: str = "simulator"


@dataclass
class RunConfig:
    seed: int = 0
    n: int = 1000
    ranges: object = "paper"
    integrator: dict = field(default_factory=dict)
    train_fraction: float = 0.8
    k_folds: int = 10
    mlp: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    classifiers: dict = field(default_factory=dict)
    labels: dict = field(default_factory=dict)
    sobol: dict = field(default_factory=dict)
    out: str = "out"

    def seed_for(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]

    def param_ranges(self) -> ParamRanges:
        if isinstance(self.ranges, str):
            try:
                return RANGE_PRESETS[self.ranges]
            except KeyError:
                raise ConfigError(f"unknown ranges preset {self.ranges!r}") from None
        if not isinstance(self.ranges, dict):
            raise ConfigError("'ranges' must be a preset name or an object")
        base = RANGE_PRESETS["paper"].to_dict()
        base.update(self.ranges)
        try:
            return ParamRanges.from_dict(base)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid 'ranges' section: {exc}") from None

    def integrator_config(self) -> IntegratorConfig:
        return _build(IntegratorConfig, self.integrator, "integrator")

    def mlp_config(self) -> MlpConfig:
        return _build(MlpConfig, self.mlp, "mlp")

    def train_config(self) -> TrainConfig:
        return _build(TrainConfig, {**self.train, "seed": self.seed_for("train")}, "train")

    def classifier_config(self) -> ClassifierConfig:
        return _build(ClassifierConfig, self.classifiers, "classifiers")

    def label_rule(self) -> LabelRule:
        return _build(LabelRule, self.labels, "labels")

    def sobol_config(self) -> SobolConfig:
        return _build(SobolConfig, self.sobol, "sobol")

    def validate(self) -> "RunConfig":
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")
        for build in (self.param_ranges, self.integrator_config, self.mlp_config, self.train_config,
                      self.classifier_config, self.label_rule, self.sobol_config):
            build()
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _build(factory, values, section):
    if not isinstance(values, dict):
        raise ConfigError(f"'{section}' must be an object")
    try:
        return factory(**values) if factory is not ParamRanges.from_dict else factory(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from None


def load_config(path=None, **overrides) -> RunConfig:
    """Read a JSON config (or start from defaults) and apply keyword overrides."""
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError("config root must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key, value in overrides.items():
        if value is None:
            continue
        section, _, name = key.partition(".")
        if name:
            data.setdefault(section, {})
            data[section] = {**data[section], name: value}
        else:
            data[key] = value
    return RunConfig(**data).validate()

"""JSON run configuration shared by every CLI command."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .channel import SystemConfig
from .dsn import DEFAULT_LEVELS_DB, DsnConfig
from .hmgat import HmgatConfig
from .ncsn import NcsnConfig, make_schedule
from .training import TrainSettings


class ConfigError(ValueError):
    pass


@dataclass
class ScheduleConfig:
    delta2_max: float = 1.0
    delta2_min: float = 0.01
    levels: int = 10
    epsilon: float = 2e-5
    T: int = 100

    def build(self):
        return make_schedule(self.delta2_max, self.delta2_min, self.levels, self.epsilon, self.T)


@dataclass
class RunConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    hmgat: HmgatConfig = field(default_factory=HmgatConfig)
    ncsn: NcsnConfig = field(default_factory=NcsnConfig)
    dsn: DsnConfig = field(default_factory=DsnConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    train: TrainSettings = field(default_factory=TrainSettings)
    error_levels_db: list[float] = field(default_factory=lambda: list(DEFAULT_LEVELS_DB))
    dsn_lambda: float = 1.0
    count: int = 10000
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        sections = {"system": SystemConfig, "hmgat": HmgatConfig, "ncsn": NcsnConfig, "dsn": DsnConfig,
                    "schedule": ScheduleConfig, "train": TrainSettings}
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        try:
            for key, value in d.items():
                if key in sections:
                    if not isinstance(value, dict):
                        raise ConfigError(f"section {key!r} must be an object")
                    kwargs[key] = sections[key](**value)
                else:
                    kwargs[key] = value
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, system=replace(self.system, seed=seed), train=replace(self.train, seed=seed))

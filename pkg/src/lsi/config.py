"""Flat ``section.key = value`` run configuration.

Every tunable default of the library appears here under a section; values
are parsed according to the type of their default.  Unknown keys and
unparsable values raise :class:`ConfigError`.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .acquisition import FinetuneConfig, SensorModel
from .decoder import DecoderConfig, PretrainConfig
from .encoder import EncoderConfig
from .losses import LossWeights
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _fields(cls, skip=()) -> dict:
    return {f.name: f.default for f in dataclasses.fields(cls) if f.name not in skip}


def defaults() -> dict[str, dict]:
    return {
        "run": {"seed": 0, "out": "runs"},
        "data": {"dir": "data/desk", "size": 32, "channels": 1, "manifest": "", "image": "",
                 "min_images": 500, "count": 1797},
        "decoder": _fields(DecoderConfig, skip=("channels", "levels", "c_lat")),
        "pretrain": _fields(PretrainConfig, skip=("seed",)),
        # levels and c_lat are shared by the encoder and the decoder
        "encoder": _fields(EncoderConfig),
        "train": _fields(TrainConfig, skip=("d", "seed")),
        "loss": _fields(LossWeights),
        "sensor": _fields(SensorModel),
        "finetune": _fields(FinetuneConfig, skip=("seed",)),
        "fsi": {"budgets": (8, 16, 32, 64, 192), "a": 0.5, "b": 0.5},
        "sweep": {"ds": (64, 32, 16, 8), "finetune_d": 16, "reuse": ""},
        "export": {"source": "lsi"},
        "checkpoint": {"autoencoder": "", "system": ""},
    }


def _parse(raw: str, default, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in raw.replace(" ", "").split(",") if v)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


class RunConfig:
    """Resolved configuration: defaults, then a file, then ``--set`` overrides."""

    def __init__(self) -> None:
        self.values = defaults()

    def set(self, dotted: str, raw: str) -> None:
        section, _, key = dotted.strip().partition(".")
        if section not in self.values or key not in self.values[section]:
            raise ConfigError(f"unknown config key {dotted.strip()!r}")
        self.values[section][key] = _parse(raw, self.values[section][key], dotted.strip())

    def apply_text(self, text: str, source: str = "<text>") -> None:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
            key, value = line.split("=", 1)
            self.set(key, value)

    def apply_override(self, item: str) -> None:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        self.set(key, value)

    @classmethod
    def load(cls, path=None, overrides=()) -> "RunConfig":
        cfg = cls()
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise ConfigError(f"config file {p} does not exist")
            cfg.apply_text(p.read_text(), str(p))
        for item in overrides:
            cfg.apply_override(item)
        return cfg

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def dumps(self) -> str:
        lines = []
        for section in sorted(self.values):
            for key in sorted(self.values[section]):
                v = self.values[section][key]
                if isinstance(v, tuple):
                    text = ",".join(str(x) for x in v)
                elif isinstance(v, bool):
                    text = "true" if v else "false"
                elif isinstance(v, float):
                    text = repr(v)
                else:
                    text = str(v)
                lines.append(f"{section}.{key} = {text}")
        return "\n".join(lines) + "\n"

    # typed views -----------------------------------------------------------

    def _build(self, cls, values: dict):
        try:
            return cls(**values)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{cls.__name__}: {exc}") from None

    def encoder(self, d: int | None = None) -> EncoderConfig:
        vals = dict(self["encoder"])
        if d is not None:
            vals["d"] = d
        return self._build(EncoderConfig, vals)

    def decoder(self) -> DecoderConfig:
        enc = self["encoder"]
        return self._build(DecoderConfig, dict(self["decoder"], levels=enc["levels"], c_lat=enc["c_lat"],
                                               channels=self["data"]["channels"]))

    def pretrain(self) -> PretrainConfig:
        return self._build(PretrainConfig, dict(self["pretrain"], seed=self["run"]["seed"]))

    def train(self, d: int | None = None) -> TrainConfig:
        return self._build(TrainConfig, dict(self["train"], d=self["encoder"]["d"] if d is None else d,
                                             seed=self["run"]["seed"]))

    def losses(self) -> LossWeights:
        return self._build(LossWeights, self["loss"])

    def sensor(self) -> SensorModel:
        return self._build(SensorModel, self["sensor"])

    def finetune(self) -> FinetuneConfig:
        return self._build(FinetuneConfig, dict(self["finetune"], seed=self["run"]["seed"]))

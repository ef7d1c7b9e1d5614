"""Audit configuration: issue selection, per-kind threshold methods, and all
tunables, with JSON round-tripping. CLI flags override file values."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

from . import detectors, thresholding
from .errors import ConfigError
from .imaging import DEFAULT_LUMA, LUMA_FORMULAS
from .thresholding import GhtParams


@dataclass
class AuditConfig:
    issues: tuple = detectors.ISSUE_KINDS
    methods: dict = field(default_factory=dict)  # kind -> method name
    default_method: str = thresholding.LI
    light_percentile: int = detectors.DEFAULT_LIGHT_PERCENTILE
    luma_formula: str = DEFAULT_LUMA
    iqr_factor: float = detectors.DEFAULT_IQR_FACTOR
    hamming_cutoff: int = 10
    similarity_cutoff: float = 0.96
    semantic_dedup: bool = True
    provider: str = "luma8x8"
    provider_command: list = field(default_factory=list)
    provider_dimension: int = 64
    byte_hash: bool = False
    fixed_thresholds: dict = field(default_factory=dict)  # kind -> override
    ght: GhtParams = field(default_factory=GhtParams)
    mve_window: int = 5
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        self.issues = tuple(self.issues)
        self.validate()

    def validate(self):
        unknown = set(self.issues) - set(detectors.ISSUE_KINDS)
        if unknown:
            raise ConfigError(f"unknown issue kinds: {sorted(unknown)}")
        if self.light_percentile not in detectors.LIGHT_PERCENTILE_CHOICES:
            raise ConfigError(
                f"light_percentile must be one of {detectors.LIGHT_PERCENTILE_CHOICES}"
            )
        if self.luma_formula not in LUMA_FORMULAS:
            raise ConfigError(f"luma_formula must be one of {LUMA_FORMULAS}")
        if self.default_method not in thresholding.METHODS:
            raise ConfigError(f"unknown threshold method {self.default_method!r}")
        for kind, method in self.methods.items():
            if kind not in detectors.THRESHOLDED_KINDS:
                raise ConfigError(f"cannot assign a threshold method to {kind!r}")
            if method not in thresholding.METHODS:
                raise ConfigError(f"unknown threshold method {method!r}")
        if not 0 <= self.hamming_cutoff <= 64:
            raise ConfigError("hamming_cutoff must lie in [0, 64]")
        if not 0.0 < self.similarity_cutoff <= 1.0:
            raise ConfigError("similarity_cutoff must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def method_for(self, kind: str) -> str:
        return self.methods.get(kind, self.default_method)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["issues"] = list(self.issues)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "AuditConfig":
        data = dict(data)
        if "ght" in data and isinstance(data["ght"], dict):
            data["ght"] = GhtParams(**data["ght"])
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "AuditConfig":
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")

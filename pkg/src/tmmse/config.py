"""Scenario parameters shared by every stage of the simulator."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any


class ConfigurationError(ValueError):
    """Raised when a scenario or experiment description is inconsistent."""


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def watt_to_dbm(value_watt: float) -> float:
    return 10.0 * math.log10(value_watt) + 30.0


@dataclass(frozen=True)
class CorrelationModel:
    """Spatial correlation model used to build ``R_kl`` from ``beta_kl``.

    ``kind`` is ``"identity"`` (``R = beta I``) or ``"exponential"``
    (``R = beta T(r)``, ``T(r)[m, n] = r**|m - n|``).
    """

    kind: str = "identity"
    r: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "exponential"):
            raise ConfigurationError(f"unknown correlation model {self.kind!r}")
        if self.kind == "exponential" and not 0.0 <= self.r < 1.0:
            raise ConfigurationError(f"exponential correlation needs 0 <= r < 1, got {self.r}")

    @classmethod
    def parse(cls, text: str) -> "CorrelationModel":
        """Parse ``identity`` or ``exponential(0.5)`` / ``exponential:0.5``."""
        text = text.strip().lower()
        if text == "identity":
            return cls()
        for sep in ("(", ":"):
            if text.startswith("exponential" + sep):
                value = text[len("exponential") + 1 :].rstrip(")")
                return cls("exponential", float(value))
        raise ConfigurationError(f"cannot parse correlation model {text!r}")

    def __str__(self) -> str:
        return "identity" if self.kind == "identity" else f"exponential({self.r:g})"


@dataclass(frozen=True)
class SystemConfig:
    """All scalar parameters of one cell-free scenario.

    Powers are linear watts. Defaults are the Fig. 1 network: 100 APs with
    two antennas each serving 10 UEs in a 500 m square, 23 dBm transmit power,
    -96 dBm noise and 200-symbol coherence blocks.
    """

    num_aps: int = 100
    num_ues: int = 10
    antennas_per_ap: int = 2
    pilot_length: int = 10
    coherence_block: int = 200
    tx_power: float = field(default_factory=lambda: dbm_to_watt(23.0))
    noise_power: float = field(default_factory=lambda: dbm_to_watt(-96.0))
    area_side: float = 500.0
    shadowing_std: float = 8.0
    shadowing_decorrelation: float = 100.0
    correlation_model: CorrelationModel = field(default_factory=CorrelationModel)

    def __post_init__(self) -> None:
        for name in ("num_aps", "num_ues", "antennas_per_ap", "pilot_length", "coherence_block"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value!r}")
        if self.pilot_length > self.coherence_block:
            raise ConfigurationError("pilot_length cannot exceed coherence_block")
        if not self.tx_power > 0 or not self.noise_power > 0:
            raise ConfigurationError("tx_power and noise_power must be positive")
        if not self.area_side > 0:
            raise ConfigurationError("area_side must be positive")
        if self.shadowing_std < 0 or not self.shadowing_decorrelation > 0:
            raise ConfigurationError("invalid shadowing parameters")
        if isinstance(self.correlation_model, str):
            object.__setattr__(self, "correlation_model", CorrelationModel.parse(self.correlation_model))

    @property
    def prelog(self) -> float:
        """Fraction of the coherence block carrying data."""
        return (self.coherence_block - self.pilot_length) / self.coherence_block

    @property
    def noise_to_power(self) -> float:
        """The regulariser ``sigma^2 / p``."""
        return self.noise_power / self.tx_power

    def with_(self, **changes: Any) -> "SystemConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["correlation_model"] = str(self.correlation_model)
        data["tx_power_dbm"] = watt_to_dbm(self.tx_power)
        data["noise_power_dbm"] = watt_to_dbm(self.noise_power)
        return data

"""Tracker configuration shared by geometry, tracker and harness."""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields, replace


class Strategy(str, enum.Enum):
    VANILLA = "vanilla"
    CONTINUOUS = "continuous"
    CONDITIONAL = "cuicp"

    @classmethod
    def parse(cls, value: "Strategy | str") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        aliases = {"cu-icp": "cuicp", "conditional": "cuicp", "conditionalupdate": "cuicp"}
        key = str(value).strip().lower()
        return cls(aliases.get(key, key))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    """Thresholds for template update, phase gating and the ICP inner loop.

    Units follow the conventions used in the literature on this tracker:
    degrees for ``delta1``, centimetres for ``delta2`` and ``xi``, fractions
    for ``delta3``/``eta1``/``eta2``, metres for the ICP quantities.
    """

    delta1: float = 30.0  # deg
    delta2: float = 5.0  # cm
    delta3: float = 0.15
    xi: float = 1.0  # cm
    eta1: float = 0.30
    eta2: float = 0.85
    max_iterations: int = 50
    convergence_eps: float = 1e-6  # m, on RMSE improvement
    correspondence_cutoff: float | None = None  # m; None -> 2 * xi
    strategy: Strategy = Strategy.CONDITIONAL
    # contour annulus, metres
    contour_d_min: float = 0.01
    contour_d_max: float = 0.03
    powder_height_stat: str = "mean"  # or "median"
    # when False the tracker runs ICP from the first frame regardless of eta
    phase_gating: bool = True

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if not self.delta1 > 0 or not self.delta2 > 0:
            raise ConfigError("delta1 and delta2 must be positive")
        if not 0 < self.delta3 < 1:
            raise ConfigError("delta3 must lie in (0, 1)")
        if not self.xi > 0:
            raise ConfigError("xi must be positive")
        if not 0 < self.eta1 < self.eta2 <= 1:
            raise ConfigError("need 0 < eta1 < eta2 <= 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.correspondence_cutoff is not None and not self.correspondence_cutoff > 0:
            raise ConfigError("correspondence_cutoff must be positive")
        if not 0 <= self.contour_d_min < self.contour_d_max:
            raise ConfigError("need 0 <= contour_d_min < contour_d_max")
        if self.powder_height_stat not in ("mean", "median"):
            raise ConfigError("powder_height_stat must be 'mean' or 'median'")

    @property
    def xi_m(self) -> float:
        return self.xi / 100.0

    @property
    def delta2_m(self) -> float:
        return self.delta2 / 100.0

    @property
    def cutoff_m(self) -> float:
        if self.correspondence_cutoff is None:
            return 2.0 * self.xi_m
        return self.correspondence_cutoff

    def with_(self, **changes) -> "TrackerConfig":
        return replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "TrackerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown tracker config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["strategy"] = self.strategy.value
        return out

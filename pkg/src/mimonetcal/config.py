"""Scenario configuration and the bits/s/Hz to blocks/slot bridge."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .markov import GilbertElliott, ge_from_kappa
from .netcal import SearchSettings, default_theta_grid


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class UnitProfile:
    """802.11n defaults: 40 MHz channel, 31 us slot, 2312-byte block."""

    bandwidth: float = 4.0e7
    slot: float = 3.1e-5
    block_bits: float = 2312 * 8

    def __post_init__(self):
        if min(self.bandwidth, self.slot, self.block_bits) <= 0:
            raise ConfigError("unit profile entries must be positive")

    @property
    def blocks_per_slot_factor(self) -> float:
        return self.bandwidth * self.slot / self.block_bits


def rate_to_blocks(r, u: UnitProfile = UnitProfile()):
    """Spectral efficiency (bits/s/Hz) to data blocks per time slot."""
    return r * u.bandwidth * u.slot / u.block_bits


def blocks_to_rate(b, u: UnitProfile = UnitProfile()):
    return b * u.block_bits / (u.bandwidth * u.slot)


@dataclass(frozen=True)
class ScenarioConfig:
    n: int = 2
    snr_db: float = 25.0
    p_gb: float | None = None
    p_bg: float = 0.1
    kappa: float | None = None
    eps: float = 1e-6
    d_guarantee: int = 30
    d_grid: tuple = ()
    snr_grid: tuple = ()
    p_bg_points: int = 10
    tau: float = 10.0
    method: int = 2
    mc_samples: int = 100_000
    seed: int = 0
    trunc: int = 4000
    theta_lo: float = 1e-3
    theta_hi: float = 10.0
    theta_points: int = 60
    lambda_tol: float = 1e-3
    integer_sigma: bool = False
    weighting: str = "uniform"
    units: UnitProfile = field(default_factory=UnitProfile)

    def __post_init__(self):
        if self.p_gb is not None and self.kappa is not None:
            raise ConfigError("give either p_gb or kappa, not both")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.method not in (1, 2):
            raise ConfigError("method must be 1 or 2")
        if not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if self.d_guarantee < 0 or any(d < 0 for d in self.d_grid):
            raise ConfigError("delay guarantees must be >= 0")
        if self.mc_samples < 1 or self.trunc < 1 or self.tau < 1:
            raise ConfigError("mc_samples, trunc and tau must be positive")
        if self.weighting not in ("uniform", "stationary"):
            raise ConfigError("weighting must be 'uniform' or 'stationary'")
        try:
            self.gilbert_elliott()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def gilbert_elliott(self) -> GilbertElliott:
        if self.kappa is not None:
            return ge_from_kappa(self.kappa, self.p_bg)
        return GilbertElliott(p_gb=0.01 if self.p_gb is None else self.p_gb, p_bg=self.p_bg)

    def search(self) -> SearchSettings:
        grid = default_theta_grid(self.theta_lo, self.theta_hi, self.theta_points)
        return SearchSettings(
            lambda_tol=self.lambda_tol,
            trunc=self.trunc,
            theta_grid=tuple(grid),
            integer_sigma=self.integer_sigma,
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        d["d_grid"] = list(self.d_grid)
        d["snr_grid"] = list(self.snr_grid)
        return d


_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}
_UNIT_FIELDS = {f.name for f in dataclasses.fields(UnitProfile)}


def config_from_mapping(values: dict, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Apply flat key/value overrides (hyphens or underscores) to a config."""
    base = base or ScenarioConfig()
    changes, unit_changes = {}, {}
    for raw_key, value in values.items():
        if value is None:
            continue
        key = raw_key.replace("-", "_")
        if key in _UNIT_FIELDS:
            unit_changes[key] = float(value)
        elif key in _FIELDS and key != "units":
            changes[key] = tuple(value) if key in ("d_grid", "snr_grid") else value
        else:
            raise ConfigError(f"unknown configuration key {raw_key!r}")
    if unit_changes:
        changes["units"] = dataclasses.replace(base.units, **unit_changes)
    return base.replace(**changes)


def load_config(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    with open(path, "rb") as fh:
        try:
            values = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    nested = [k for k, v in values.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"{path}: config must be flat, found tables {nested}")
    return config_from_mapping(values, base)

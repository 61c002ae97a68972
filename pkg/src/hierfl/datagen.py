"""Seeded synthetic weather, heating strategy and gas usage series.

Each generator draws from its own Philox stream keyed by ``(seed, stream id)``,
so adding draws to one generator never shifts another's output.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import asdict, dataclass

import numpy as np

from .domain import TimeSeriesDataset
from .errors import AlignmentError, ConfigurationError

_WEATHER, _STRATEGY, _USAGE, _DEGRADE = 1, 2, 3, 4


class StrategyMode(str, enum.Enum):
    TRUTHFUL = "truthful"
    RANDOM = "random"


@dataclass(frozen=True)
class GenSpec:
    seed: int
    days: int = 365
    base_usage: float = 50.0
    temp_sensitivity: float = 8.0
    strategy_mode: StrategyMode = StrategyMode.TRUTHFUL
    noise_std: float = 10.0
    start: str = "2022-01-01"
    threshold: float = 18.0
    temp_mean: float = 12.0
    temp_amplitude: float = 14.0
    temp_noise: float = 3.0
    wind_scale: float = 4.0
    strategy_gain: float = 1.0
    strategy_noise: float = 2.0
    strategy_coupling: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "strategy_mode", StrategyMode(self.strategy_mode))
        if int(self.days) < 2:
            raise ConfigurationError(f"days must be >= 2, got {self.days}")
        if self.noise_std < 0 or self.temp_noise < 0 or self.strategy_noise < 0:
            raise ConfigurationError("noise standard deviations must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        dt.date.fromisoformat(self.start)

    def to_dict(self):
        doc = asdict(self)
        doc["strategy_mode"] = self.strategy_mode.value
        return doc

    @classmethod
    def from_dict(cls, doc):
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown GenSpec fields {sorted(unknown)}")
        return cls(**doc)


def rng_stream(seed, stream) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(stream,))))


def _dates(spec):
    start = dt.date.fromisoformat(spec.start)
    return tuple(start + dt.timedelta(days=i) for i in range(spec.days))


def heating_degrees(temperature, threshold):
    return np.maximum(0.0, threshold - np.asarray(temperature, dtype=float))


def generate_weather(spec: GenSpec) -> TimeSeriesDataset:
    """Daily ``temperature`` (annual sinusoid, coldest at the start of the year) and ``wind``."""
    rng = rng_stream(spec.seed, _WEATHER)
    start = dt.date.fromisoformat(spec.start)
    day_of_year = np.arange(spec.days) + (start.timetuple().tm_yday - 1)
    cycle = np.cos(2 * np.pi * day_of_year / 365.25)
    temperature = spec.temp_mean - spec.temp_amplitude * cycle + rng.normal(0.0, spec.temp_noise, spec.days)
    wind = rng.gamma(2.0, spec.wind_scale / 2.0, spec.days)
    return TimeSeriesDataset(_dates(spec), np.column_stack([temperature, wind]), ("temperature", "wind"))


def generate_strategy(spec: GenSpec, weather: TimeSeriesDataset) -> TimeSeriesDataset:
    """One ``strategy`` column: heating intensity the station reports.

    Truthful reports follow the heating degrees of the day plus small noise;
    random reports are drawn independently of the weather over the same range.
    """
    rng = rng_stream(spec.seed, _STRATEGY)
    temperature = weather.column("temperature")
    n = len(weather)
    if spec.strategy_mode is StrategyMode.TRUTHFUL:
        value = spec.strategy_gain * heating_degrees(temperature, spec.threshold)
        value = value + rng.normal(0.0, spec.strategy_noise, n)
    else:
        top = spec.strategy_gain * max(spec.threshold - spec.temp_mean + spec.temp_amplitude, 1.0)
        value = rng.uniform(0.0, top, n)
    return TimeSeriesDataset(weather.dates, value.reshape(-1, 1), ("strategy",))


def generate_usage(spec: GenSpec, weather: TimeSeriesDataset, strategy: TimeSeriesDataset) -> np.ndarray:
    """Heating-degree usage model, clamped at 0::

        base + sensitivity * max(0, threshold - T) + coupling * strategy + noise
    """
    if weather.dates != strategy.dates:
        raise AlignmentError("weather and strategy series are not date-aligned")
    rng = rng_stream(spec.seed, _USAGE)
    usage = (
        spec.base_usage
        + spec.temp_sensitivity * heating_degrees(weather.column("temperature"), spec.threshold)
        + spec.strategy_coupling * strategy.column("strategy")
    )
    if spec.noise_std > 0:
        usage = usage + rng.normal(0.0, spec.noise_std, len(weather))
    return np.maximum(usage, 0.0)


def degrade_quality(dataset: TimeSeriesDataset, corruption, seed) -> TimeSeriesDataset:
    """Replace a ``corruption`` fraction of feature cells with independent noise.

    Replacement values are normal draws with each column's own mean and standard
    deviation. Dates and target are untouched.
    """
    if not 0.0 <= corruption <= 1.0:
        raise ConfigurationError(f"corruption must be in [0, 1], got {corruption}")
    if corruption == 0.0 or dataset.features.size == 0:
        return dataset
    rng = rng_stream(seed, _DEGRADE)
    features = dataset.features.copy()
    n_rows, n_cols = features.shape
    n_cells = int(round(corruption * features.size))
    cells = rng.permutation(features.size)[:n_cells]
    rows, cols = np.unravel_index(np.sort(cells), (n_rows, n_cols))
    mean = dataset.features.mean(axis=0)
    std = dataset.features.std(axis=0)
    features[rows, cols] = rng.normal(mean[cols], std[cols])
    return TimeSeriesDataset(dataset.dates, features, dataset.feature_names, dataset.target)

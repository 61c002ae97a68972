"""Hierarchical federated learning simulator with contribution-aware rewards."""

from .domain import (
    CsvSchema,
    HierarchyConfig,
    Participant,
    Role,
    Tier,
    TimeSeriesDataset,
    align_by_date,
    load_csv,
    partition_horizontal,
    partition_vertical,
)
from .forecaster import ForecasterParams, TrainConfig, mse_gradient, predict, train
from .incentive import ScoreCard, evaluate_cohort, normalize, smape, smape_new

__version__ = "0.1.0"

"""Core data model: datasets, participants, hierarchy, partitioning and alignment."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import AlignmentError, ConfigurationError, SchemaError, ValidationError


def _frozen(array, dtype=float):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Date-indexed feature matrix with an optional gas usage target.

    Arrays are copied and made read-only on construction.
    """

    dates: tuple
    features: np.ndarray
    feature_names: tuple
    target: Optional[np.ndarray] = None

    def __post_init__(self):
        dates = tuple(self.dates)
        names = tuple(self.feature_names)
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1 and len(names) <= 1 and features.size == len(dates):
            features = features.reshape(-1, len(names))
        if features.size == 0:
            features = features.reshape(len(dates), len(names))
        if features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {features.shape}")
        if features.shape != (len(dates), len(names)):
            raise ValidationError(
                f"features shape {features.shape} does not match "
                f"{len(dates)} dates x {len(names)} feature names"
            )
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate feature names in {names}")
        for i, d in enumerate(dates):
            if not isinstance(d, dt.date):
                raise ValidationError(f"date {d!r} is not a calendar date", row=i + 1)
            if i and d <= dates[i - 1]:
                kind = "duplicate" if d == dates[i - 1] else "out-of-order"
                raise ValidationError(f"{kind} date {d.isoformat()} at row {i + 1}", row=i + 1)
        bad = ~np.isfinite(features)
        if bad.any():
            row = int(np.argwhere(bad)[0][0]) + 1
            raise ValidationError(f"non-finite feature value at row {row}", row=row)
        target = self.target
        if target is not None:
            target = np.asarray(target, dtype=float).reshape(-1)
            if target.shape[0] != len(dates):
                raise ValidationError(
                    f"target length {target.shape[0]} != {len(dates)} dates"
                )
            bad_t = ~np.isfinite(target)
            if bad_t.any():
                row = int(np.argmax(bad_t)) + 1
                raise ValidationError(f"non-finite target value at row {row}", row=row)
            target = _frozen(target)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "target", target)

    def __len__(self):
        return len(self.dates)

    @property
    def has_target(self):
        return self.target is not None

    def column(self, name):
        try:
            idx = self.feature_names.index(name)
        except ValueError:
            raise ConfigurationError(f"unknown feature column {name!r}") from None
        return self.features[:, idx]

    def select_rows(self, index) -> "TimeSeriesDataset":
        """Rows picked by a slice, boolean mask or integer index array."""
        idx = np.arange(len(self.dates))[index]
        return TimeSeriesDataset(
            dates=tuple(self.dates[i] for i in idx),
            features=self.features[idx],
            feature_names=self.feature_names,
            target=None if self.target is None else self.target[idx],
        )

    def select_columns(self, names: Sequence[str], keep_target=True) -> "TimeSeriesDataset":
        cols = [self.feature_names.index(n) if n in self.feature_names else None for n in names]
        missing = [n for n, c in zip(names, cols) if c is None]
        if missing:
            raise ConfigurationError(f"unknown feature columns {missing}")
        return TimeSeriesDataset(
            dates=self.dates,
            features=self.features[:, cols],
            feature_names=tuple(names),
            target=self.target if keep_target else None,
        )

    def with_target(self, target) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.dates, self.features, self.feature_names, target)

    def without_target(self) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.dates, self.features, self.feature_names, None)

    def with_columns(self, names, values) -> "TimeSeriesDataset":
        """Append feature columns (``values`` is rows x len(names))."""
        values = np.asarray(values, dtype=float).reshape(len(self.dates), len(names))
        return TimeSeriesDataset(
            dates=self.dates,
            features=np.hstack([self.features, values]),
            feature_names=self.feature_names + tuple(names),
            target=self.target,
        )

    def equals(self, other: "TimeSeriesDataset") -> bool:
        if not isinstance(other, TimeSeriesDataset):
            return False
        if self.dates != other.dates or self.feature_names != other.feature_names:
            return False
        if not np.array_equal(self.features, other.features):
            return False
        if (self.target is None) != (other.target is None):
            return False
        return self.target is None or np.array_equal(self.target, other.target)

    def to_csv(self, path, target_name="usage"):
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = ["date", *self.feature_names]
            if self.target is not None:
                header.append(target_name)
            writer.writerow(header)
            for i, d in enumerate(self.dates):
                row = [d.isoformat(), *(repr(float(v)) for v in self.features[i])]
                if self.target is not None:
                    row.append(repr(float(self.target[i])))
                writer.writerow(row)


class Tier(str, enum.Enum):
    COMPANY = "company"
    STATION = "station"


class Role(str, enum.Enum):
    ACTIVE = "active"
    PASSIVE = "passive"


@dataclass(frozen=True, eq=False)
class Participant:
    id: str
    tier: Tier
    role: Role
    dataset: TimeSeriesDataset

    def __post_init__(self):
        object.__setattr__(self, "tier", Tier(self.tier))
        object.__setattr__(self, "role", Role(self.role))
        if self.role is Role.ACTIVE and not self.dataset.has_target:
            raise ConfigurationError(f"active participant {self.id!r} has no target")
        if self.role is Role.PASSIVE and self.dataset.has_target:
            raise ConfigurationError(f"passive participant {self.id!r} must not hold labels")

    @property
    def sample_count(self) -> int:
        return len(self.dataset)


@dataclass(frozen=True)
class HierarchyConfig:
    companies: tuple
    stations_by_company: Mapping[str, tuple] = field(default_factory=dict)
    r_data: float = 0.0
    r_model: float = 0.0

    def __post_init__(self):
        companies = tuple(self.companies)
        stations = {c: tuple(s) for c, s in dict(self.stations_by_company).items()}
        if len(set(companies)) != len(companies):
            raise ConfigurationError("duplicate company ids")
        unknown = set(stations) - set(companies)
        if unknown:
            raise ConfigurationError(f"stations assigned to unknown companies {sorted(unknown)}")
        seen = {}
        for company, ids in stations.items():
            for sid in ids:
                if sid in seen or sid in companies:
                    raise ConfigurationError(f"station {sid!r} belongs to more than one owner")
                seen[sid] = company
        if self.r_data < 0 or self.r_model < 0:
            raise ConfigurationError("reward pools must be non-negative")
        object.__setattr__(self, "companies", companies)
        object.__setattr__(self, "stations_by_company", stations)

    def owner_of(self, station_id):
        for company, ids in self.stations_by_company.items():
            if station_id in ids:
                return company
        raise ConfigurationError(f"unknown station {station_id!r}")

    def check_hfl(self):
        if len(self.companies) < 2:
            raise ConfigurationError("an HFL run needs at least 2 companies")

    def check_vfl(self, company):
        if not self.stations_by_company.get(company):
            raise ConfigurationError(f"company {company!r} has no stations for a VFL run")


@dataclass(frozen=True)
class CsvSchema:
    feature_names: tuple
    target: Optional[str] = None
    target_optional: bool = False


def _parse_date(text, row):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ValidationError(f"unparseable date {text!r} at row {row}", row=row) from None


def _parse_float(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(
            f"unparseable value {text!r} in column {column!r} at row {row}", row=row
        ) from None
    if not math.isfinite(value):
        raise ValidationError(f"non-finite value in column {column!r} at row {row}", row=row)
    return value


def load_csv(path, schema: CsvSchema) -> TimeSeriesDataset:
    """Read a dataset in the ``date,<features...>[,<target>]`` CSV format.

    Rows are returned sorted by date. Row numbers in errors are 1-based and
    count data rows only.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if "date" not in header:
            raise SchemaError(f"{path}: missing column 'date'")
        for name in schema.feature_names:
            if name not in header:
                raise SchemaError(f"{path}: missing column {name!r}")
        has_target = schema.target is not None and schema.target in header
        if schema.target is not None and not has_target and not schema.target_optional:
            raise SchemaError(f"{path}: missing column {schema.target!r}")
        date_col = header.index("date")
        feat_cols = [header.index(n) for n in schema.feature_names]
        tgt_col = header.index(schema.target) if has_target else None

        dates, rows, targets = [], [], []
        seen = {}
        for row_no, record in enumerate(reader, start=1):
            if not record:
                continue
            if len(record) != len(header):
                raise ValidationError(
                    f"{path}: row {row_no} has {len(record)} cells, expected {len(header)}",
                    row=row_no,
                )
            d = _parse_date(record[date_col], row_no)
            if d in seen:
                raise ValidationError(
                    f"{path}: duplicate date {d.isoformat()} at row {row_no}", row=row_no
                )
            seen[d] = row_no
            dates.append(d)
            rows.append([_parse_float(record[c], row_no, header[c]) for c in feat_cols])
            if tgt_col is not None:
                targets.append(_parse_float(record[tgt_col], row_no, header[tgt_col]))

    order = sorted(range(len(dates)), key=dates.__getitem__)
    features = np.array(rows, dtype=float).reshape(len(dates), len(feat_cols))
    return TimeSeriesDataset(
        dates=tuple(dates[i] for i in order),
        features=features[order],
        feature_names=tuple(schema.feature_names),
        target=np.array(targets)[order] if tgt_col is not None else None,
    )


def align_by_date(datasets: Sequence[TimeSeriesDataset]) -> list:
    """Restrict every dataset to the dates they all share."""
    if not datasets:
        raise AlignmentError("nothing to align")
    if len(datasets) == 1:
        return [datasets[0]]
    common = set(datasets[0].dates)
    for ds in datasets[1:]:
        common &= set(ds.dates)
    if not common:
        raise AlignmentError("datasets share no dates")
    out = []
    for ds in datasets:
        if len(common) == len(ds.dates):
            out.append(ds)
        else:
            out.append(ds.select_rows(np.array([d in common for d in ds.dates])))
    return out


def largest_remainder(total: int, shares: Sequence[float]) -> list:
    """Integer counts proportional to ``shares`` summing to ``total``.

    Leftover units go to the largest fractional parts; ties go to the earlier share.
    """
    quotas = [total * s for s in shares]
    counts = [math.floor(q) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(shares)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def partition_horizontal(dataset: TimeSeriesDataset, shares: Sequence[float]) -> list:
    """Split into contiguous date-ordered blocks sized by ``shares``."""
    shares = [float(s) for s in shares]
    if not shares or any(not s > 0 for s in shares) or abs(sum(shares) - 1.0) > 1e-9:
        raise ConfigurationError(f"shares must be positive and sum to 1, got {shares}")
    counts = largest_remainder(len(dataset), shares)
    out, start = [], 0
    for n in counts:
        out.append(dataset.select_rows(slice(start, start + n)))
        start += n
    return out


def partition_vertical(dataset: TimeSeriesDataset, column_groups: Sequence[Sequence[str]]) -> list:
    """Split columns into groups; only the first group keeps the target."""
    flat = [c for group in column_groups for c in group]
    if len(set(flat)) != len(flat):
        raise ConfigurationError("column groups overlap")
    unknown = [c for c in flat if c not in dataset.feature_names]
    if unknown:
        raise ConfigurationError(f"unknown columns {unknown}")
    missing = [c for c in dataset.feature_names if c not in flat]
    if missing:
        raise ConfigurationError(f"columns not covered by any group: {missing}")
    return [
        dataset.select_columns(list(group), keep_target=(i == 0))
        for i, group in enumerate(column_groups)
    ]


def concat_rows(datasets: Sequence[TimeSeriesDataset]) -> TimeSeriesDataset:
    first = datasets[0]
    has_target = first.has_target
    return TimeSeriesDataset(
        dates=tuple(d for ds in datasets for d in ds.dates),
        features=np.vstack([ds.features for ds in datasets]),
        feature_names=first.feature_names,
        target=np.concatenate([ds.target for ds in datasets]) if has_target else None,
    )


def concat_columns(datasets: Sequence[TimeSeriesDataset]) -> TimeSeriesDataset:
    """Join column blocks of aligned datasets; the target comes from whichever holds one."""
    dates = datasets[0].dates
    if any(ds.dates != dates for ds in datasets):
        raise AlignmentError("column blocks are not date-aligned")
    target = next((ds.target for ds in datasets if ds.has_target), None)
    return TimeSeriesDataset(
        dates=dates,
        features=np.hstack([ds.features for ds in datasets]),
        feature_names=tuple(n for ds in datasets for n in ds.feature_names),
        target=target,
    )


def split_train_eval(dataset: TimeSeriesDataset, window) -> tuple:
    """Hold out the last ``window`` rows (int) or fraction of rows (float < 1)."""
    n = len(dataset)
    if isinstance(window, float) and 0 < window < 1:
        t = int(round(n * window))
    else:
        t = int(window)
    if t < 2 or t > n - 2:
        raise ConfigurationError(
            f"evaluation window of {t} rows leaves too little data ({n} rows total)"
        )
    return dataset.select_rows(slice(0, n - t)), dataset.select_rows(slice(n - t, n))

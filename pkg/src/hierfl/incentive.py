"""Contribution-aware reward engine: data quality, model contribution, allocation.

Pipeline per cohort: correlation (and, horizontally, quantity) gives a quality
value; local vs global forecast accuracy gives per-member increments whose
leave-one-out means are contribution values; both are clamped at 0,
normalized to shares, and multiplied into the two reward pools.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    InsufficientDataError,
    ScoreWarning,
    ShapeError,
    ValidationError,
)


def _pearson(x, y):
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def corr_score(X, Y) -> float:
    """Correlation of features with the target.

    One column: the signed Pearson coefficient. Several columns: the mean of
    the absolute per-column coefficients. Constant columns score 0.
    """
    y = np.asarray(Y, dtype=float).reshape(-1)
    x = np.asarray(X, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"{x.shape[0]} feature rows vs {y.shape[0]} targets")
    if y.shape[0] < 2:
        raise InsufficientDataError("correlation needs at least 2 time steps")
    if x.shape[1] == 0:
        return 0.0
    if float(np.ptp(y)) == 0.0:
        warnings.warn("target has zero variance; correlation defined as 0", ScoreWarning, stacklevel=2)
        return 0.0
    if x.shape[1] == 1:
        return _pearson(x[:, 0], y)
    return float(np.mean([abs(_pearson(x[:, j], y)) for j in range(x.shape[1])]))


def quant_score(n_i, n_total) -> float:
    if n_total <= 0:
        raise ConfigurationError("total sample count must be positive")
    if not 0 <= n_i <= n_total:
        raise ConfigurationError(f"sample count {n_i} outside [0, {n_total}]")
    return n_i / n_total


def quality_hfl(corr, quant) -> float:
    return corr * quant


def quality_vfl(corr) -> float:
    return corr


def _pair(F, A):
    f = np.asarray(F, dtype=float).reshape(-1)
    a = np.asarray(A, dtype=float).reshape(-1)
    if f.shape != a.shape:
        raise ShapeError(f"forecast length {f.shape[0]} != actual length {a.shape[0]}")
    if f.shape[0] == 0:
        raise InsufficientDataError("SMAPE needs at least one time step")
    return f, a


def _ratio_terms(f, a):
    num = np.abs(f - a)
    den = np.abs(f) + np.abs(a)
    safe = np.where(den == 0.0, 1.0, den)
    # 0/0 means both values are zero: perfect agreement.
    return np.where(den == 0.0, 0.0, num / safe)


def smape(F, A) -> float:
    """Classic SMAPE in [0, 2] (not multiplied by 100)."""
    f, a = _pair(F, A)
    return float(np.mean(_ratio_terms(f, a) * 2.0))


def smape_new(F, A) -> float:
    """SMAPE with denominator ``|F|+|A|``, bounded in [0, 1]."""
    f, a = _pair(F, A)
    return float(np.mean(_ratio_terms(f, a)))


def accuracy(smape_new_value) -> float:
    return 1.0 - smape_new_value


def increment(acc_global, acc_local) -> float:
    return acc_global - acc_local


def contribution(increments: Mapping, j) -> float:
    """Mean of every other member's increment."""
    n = len(increments)
    if n < 2:
        raise ConfigurationError("contribution needs at least 2 participants")
    if j not in increments:
        raise ConfigurationError(f"unknown participant {j!r}")
    return sum(v for k, v in increments.items() if k != j) / (n - 1)


def clamp_nonnegative(values: Mapping) -> dict:
    out = {}
    for k, v in values.items():
        if v < 0:
            warnings.warn(f"negative score {v!r} for {k!r} clamped to 0", ScoreWarning, stacklevel=2)
        out[k] = max(0.0, float(v))
    return out


def normalize(values: Mapping) -> dict:
    """Shares proportional to the (clamped) values; equal shares if none is positive."""
    if not values:
        raise ConfigurationError("nothing to normalize")
    clamped = clamp_nonnegative(values)
    total = math.fsum(clamped.values())
    if total <= 0.0:
        warnings.warn("no positive scores in cohort; splitting equally", ScoreWarning, stacklevel=2)
        return {k: 1.0 / len(clamped) for k in clamped}
    return {k: v / total for k, v in clamped.items()}


def allocate_rewards(r_data, r_model, quality_norms: Mapping, contribution_norms: Mapping) -> dict:
    """``id -> (r_quality, r_contribution)``."""
    if r_data < 0 or r_model < 0:
        raise ConfigurationError("reward pools must be non-negative")
    if set(quality_norms) != set(contribution_norms):
        raise ConfigurationError("quality and contribution shares cover different participants")
    return {k: (r_data * quality_norms[k], r_model * contribution_norms[k]) for k in quality_norms}


@dataclass(frozen=True)
class ScoreCard:
    participant_id: str
    corr_score: Optional[float]
    quant_score: Optional[float]
    quality: float
    smape_new_local: Optional[float]
    smape_new_global: Optional[float]
    acc_local: Optional[float]
    acc_global: Optional[float]
    increment: Optional[float]
    contribution: float
    quality_norm: float
    contribution_norm: float
    r_quality: float
    r_contribution: float

    def to_dict(self):
        return asdict(self)


SCORECARD_FIELDS = tuple(f.name for f in fields(ScoreCard))


@dataclass(frozen=True)
class CohortMember:
    """Evaluation inputs for one participant over its held-out window."""

    id: str
    actual: np.ndarray
    local_forecast: np.ndarray
    global_forecast: np.ndarray
    corr: float
    sample_count: Optional[int] = None


def score_from_values(quality: Mapping, contrib: Mapping, r_data, r_model, details=None) -> list:
    """Normalize and allocate externally supplied quality and contribution values.

    ``details`` optionally maps id to the intermediate ScoreCard fields.
    """
    if set(quality) != set(contrib):
        raise ConfigurationError("quality and contribution values cover different participants")
    q_norm = normalize(quality)
    c_norm = normalize(contrib)
    rewards = allocate_rewards(r_data, r_model, q_norm, c_norm)
    cards = []
    for pid in sorted(quality):
        extra = dict.fromkeys(
            ("corr_score", "quant_score", "smape_new_local", "smape_new_global",
             "acc_local", "acc_global", "increment"))
        if details and pid in details:
            extra.update(details[pid])
        cards.append(ScoreCard(
            participant_id=pid,
            quality=float(quality[pid]),
            contribution=float(contrib[pid]),
            quality_norm=q_norm[pid],
            contribution_norm=c_norm[pid],
            r_quality=rewards[pid][0],
            r_contribution=rewards[pid][1],
            **extra,
        ))
    return cards


def evaluate_cohort(members: Sequence[CohortMember], r_data, r_model, horizontal: bool) -> list:
    """Full scoring pipeline for one cohort; ScoreCards come back in ascending id order.

    ``horizontal`` selects quality = corr x quantity (HFL) rather than corr alone (VFL).
    """
    members = sorted(members, key=lambda m: m.id)
    if len(members) < 2:
        raise ConfigurationError("a cohort needs at least 2 participants")
    details, quality, increments = {}, {}, {}
    n_total = sum(m.sample_count or 0 for m in members) if horizontal else None
    for m in members:
        if horizontal:
            if m.sample_count is None:
                raise ConfigurationError(f"{m.id!r} has no sample count for an HFL cohort")
            quant = quant_score(m.sample_count, n_total)
            quality[m.id] = quality_hfl(m.corr, quant)
        else:
            quant = None
            quality[m.id] = quality_vfl(m.corr)
        s_local = smape_new(m.local_forecast, m.actual)
        s_global = smape_new(m.global_forecast, m.actual)
        a_local, a_global = accuracy(s_local), accuracy(s_global)
        increments[m.id] = increment(a_global, a_local)
        details[m.id] = {
            "corr_score": m.corr,
            "quant_score": quant,
            "smape_new_local": s_local,
            "smape_new_global": s_global,
            "acc_local": a_local,
            "acc_global": a_global,
            "increment": increments[m.id],
        }
    contrib = {m.id: contribution(increments, m.id) for m in members}
    return score_from_values(quality, contrib, r_data, r_model, details)


def scorecards_csv(cards: Sequence[ScoreCard]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCORECARD_FIELDS)
    for card in cards:
        writer.writerow(["" if v is None else v for v in (getattr(card, f) for f in SCORECARD_FIELDS)])
    return buf.getvalue()


def load_scores_csv(path) -> tuple:
    """Read ``id,quality,contribution`` rows; returns ``(quality, contribution)`` maps."""
    quality, contrib = {}, {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: line 1: empty file", row=1)
        header = [h.strip() for h in header]
        for col in ("id", "quality", "contribution"):
            if col not in header:
                raise ValidationError(f"{path}: line 1: missing column {col!r}", row=1)
        idx = {c: header.index(c) for c in ("id", "quality", "contribution")}
        for line_no, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: line {line_no}: expected {len(header)} cells, got {len(row)}",
                    row=line_no,
                )
            pid = row[idx["id"]].strip()
            if not pid or pid in quality:
                raise ValidationError(f"{path}: line {line_no}: missing or duplicate id", row=line_no)
            try:
                q = float(row[idx["quality"]])
                c = float(row[idx["contribution"]])
            except ValueError:
                raise ValidationError(f"{path}: line {line_no}: non-numeric score", row=line_no) from None
            if not (math.isfinite(q) and math.isfinite(c)):
                raise ValidationError(f"{path}: line {line_no}: non-finite score", row=line_no)
            quality[pid], contrib[pid] = q, c
    if not quality:
        raise ValidationError(f"{path}: no score rows")
    return quality, contrib

"""Small builders shared by the test modules."""

import datetime as dt

import numpy as np

from hierfl.domain import Participant, TimeSeriesDataset


def dates(n, start=dt.date(2021, 1, 1)):
    return tuple(start + dt.timedelta(days=i) for i in range(n))


def dataset(X, y=None, names=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    names = names or tuple(f"x{j}" for j in range(X.shape[1]))
    return TimeSeriesDataset(dates(len(X)), X, tuple(names), y)


def company(pid, X, y, names=None):
    return Participant(pid, "company", "active", dataset(X, y, names))


def station(pid, X, names=None):
    return Participant(pid, "station", "passive", dataset(X, None, names))

"""Horizontal FL among gas companies: local epochs plus sample-weighted averaging.

Clients first share column moments (count, mean, squared deviations) so the
federation trains in one common standardized space; the final global model is
folded back to raw features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import forecaster as fc
from .domain import Participant
from .errors import ConfigurationError, ShapeError
from .simnet import MessageKind, Network

SERVER = "hfl-server"


@dataclass(frozen=True)
class HflRoundLog:
    round: int
    local_params: dict
    global_params: fc.ForecasterParams
    local_loss: dict

    def to_dict(self):
        return {
            "round": self.round,
            "local_params": {k: v.to_dict() for k, v in self.local_params.items()},
            "global_params": self.global_params.to_dict(),
            "local_loss": dict(self.local_loss),
        }


@dataclass(frozen=True)
class HflResult:
    global_params: fc.ForecasterParams
    locals: dict
    logs: list

    def logs_jsonl(self):
        return "".join(json.dumps(log.to_dict(), separators=(",", ":")) + "\n" for log in self.logs)


def aggregate_weighted(client_params, sample_counts) -> fc.ForecasterParams:
    """Weighted mean of client parameters with weights ``n_i / sum(n)``."""
    if not client_params or len(client_params) != len(sample_counts):
        raise ConfigurationError("need one sample count per client and at least one client")
    if any(c < 0 for c in sample_counts):
        raise ConfigurationError("sample counts must be non-negative")
    total = sum(sample_counts)
    if total <= 0:
        raise ConfigurationError("total sample count must be positive")
    names = client_params[0].feature_names
    for p in client_params[1:]:
        if p.feature_names != names or p.width != client_params[0].width:
            raise ShapeError("client parameters have mismatched shapes")
    weights = np.zeros(len(names))
    bias = 0.0
    for p, n in zip(client_params, sample_counts):
        share = n / total
        weights = weights + share * p.weights
        bias = bias + share * p.bias
    return fc.ForecasterParams(names, weights, bias)


def _check_clients(participants):
    if not participants:
        raise ConfigurationError("run_hfl needs at least one participant")
    ids = [p.id for p in participants]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("duplicate participant ids")
    names = participants[0].dataset.feature_names
    for p in participants:
        if p.dataset.feature_names != names:
            raise ConfigurationError(
                f"participant {p.id!r} feature schema {p.dataset.feature_names} != {names}"
            )
        if not p.dataset.has_target:
            raise ConfigurationError(f"participant {p.id!r} has no target")
        if p.sample_count == 0:
            raise ConfigurationError(f"participant {p.id!r} contributes no samples")
    return names


def run_hfl(participants, rounds, config: fc.TrainConfig, network: Network | None = None) -> HflResult:
    """FedAvg over companies; also trains each company's standalone local model.

    Each round every client runs ``config.epochs`` local gradient steps from the
    current global parameters. Aggregation always walks clients in ascending id.
    """
    if rounds < 1:
        raise ConfigurationError("rounds must be >= 1")
    names = _check_clients(participants)
    clients = sorted(participants, key=lambda p: p.id)
    net = network or Network()
    net.register(SERVER, *(c.id for c in clients))
    net.begin_phase()

    # Round 0: pooled column statistics define the shared standardized space.
    standardization = None
    if config.standardize:
        pooled = fc.Moments(0, np.zeros(len(names)), np.zeros(len(names)))
        for c in clients:
            m = fc.column_moments(c.dataset.features)
            net.send(c.id, SERVER, 0, MessageKind.PARAMETER_UPDATE,
                     {"count": m.count, "mean": m.mean, "m2": m.m2})
            pooled = fc.merge_moments(pooled, m)
        standardization = fc.standardization_from_moments(pooled, names)
    frozen = None if standardization is None else standardization.degenerate

    def local_view(c):
        x = c.dataset.features
        return x if standardization is None else standardization.apply(x)

    views = {c.id: local_view(c) for c in clients}
    counts = {c.id: c.sample_count for c in clients}

    current = fc.ForecasterParams.zeros(names)
    logs = []
    for r in range(1, rounds + 1):
        for c in clients:
            net.send(SERVER, c.id, r, MessageKind.GLOBAL_BROADCAST, current.to_dict())
        updates, losses = {}, {}
        for c in clients:
            w, b, _ = fc.descend(current.weights, current.bias, views[c.id],
                                 c.dataset.target, config, config.epochs, frozen)
            update = fc.ForecasterParams(names, w, b)
            updates[c.id] = update
            losses[c.id] = fc.mse_loss(update, views[c.id], c.dataset.target, config.l2)
            net.send(c.id, SERVER, r, MessageKind.PARAMETER_UPDATE,
                     {**update.to_dict(), "sample_count": counts[c.id]})
        received = {}
        for msg, payload in net.deliver(SERVER, MessageKind.PARAMETER_UPDATE):
            if msg.round == net.current_round:
                received[msg.sender] = payload
        order = sorted(received)
        current = aggregate_weighted(
            [fc.ForecasterParams.from_dict(received[i]) for i in order],
            [received[i]["sample_count"] for i in order],
        )
        for c in clients:
            net.deliver(c.id)
        logs.append(HflRoundLog(
            r,
            {i: fc.fold(names, u.weights, u.bias, standardization) for i, u in updates.items()},
            fc.fold(names, current.weights, current.bias, standardization),
            losses,
        ))
    for c in clients:
        net.send(SERVER, c.id, rounds, MessageKind.GLOBAL_BROADCAST, current.to_dict())
    for c in clients:
        net.deliver(c.id)

    global_params = fc.fold(names, current.weights, current.bias, standardization)
    total_epochs = config.replace(epochs=config.epochs * rounds)
    locals_ = {c.id: fc.train(c.dataset, total_epochs) for c in clients}
    return HflResult(global_params, locals_, logs)


def replay_aggregates(transcript) -> list:
    """Recompute each round's aggregate from the ParameterUpdate payloads in a transcript.

    Needs a transcript recorded with payloads. Returns standardized-space params
    per round, which must equal the following GlobalBroadcast payloads.
    """
    by_round = {}
    for m in transcript:
        if m.kind is MessageKind.PARAMETER_UPDATE and m.receiver == SERVER:
            if m.payload is None:
                raise ConfigurationError("transcript has no payloads to replay")
            if "weights" in m.payload:
                by_round.setdefault(m.round, {})[m.sender] = m.payload
    out = []
    for r in sorted(by_round):
        received = by_round[r]
        order = sorted(received)
        out.append(aggregate_weighted(
            [fc.ForecasterParams.from_dict(received[i]) for i in order],
            [received[i]["sample_count"] for i in order],
        ))
    return out

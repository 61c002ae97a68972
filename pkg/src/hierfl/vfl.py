"""Split-linear vertical FL between a company (labels) and its heating stations.

Each member keeps its feature block and block weights. Per round, passives
send partial scores to the active party, which adds its own partial and the
bias, computes residuals and returns them; every member then takes one
gradient step on its block. With a linear model and full batches this is
exactly centralized gradient descent on the joined columns.

One round is one gradient step, so ``rounds`` plays the role of ``epochs``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import forecaster as fc
from .domain import Participant, Role, TimeSeriesDataset, concat_columns
from .errors import ConfigurationError, ShapeError
from .simnet import MessageKind, Network


@dataclass(frozen=True, eq=False)
class VflGroup:
    active: Participant
    passives: tuple = ()

    def __post_init__(self):
        passives = tuple(self.passives)
        object.__setattr__(self, "passives", passives)
        if self.active.role is not Role.ACTIVE:
            raise ConfigurationError(f"{self.active.id!r} is not an active participant")
        for p in passives:
            if p.role is not Role.PASSIVE:
                raise ConfigurationError(f"{p.id!r} is not a passive participant")
            if p.dataset.dates != self.active.dataset.dates:
                raise ConfigurationError(f"{p.id!r} is not date-aligned with {self.active.id!r}")
        ids = [m.id for m in self.members]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate member ids in VFL group")

    @property
    def members(self):
        return (self.active, *self.passives)

    @property
    def row_count(self):
        return len(self.active.dataset)

    @property
    def target(self):
        return self.active.dataset.target

    def joined(self):
        """Column-concatenated view (for oracles and tests only; never sent anywhere).

        Columns are named ``<member id>:<feature>``.
        """
        return concat_columns([
            TimeSeriesDataset(m.dataset.dates, m.dataset.features,
                              tuple(f"{m.id}:{n}" for n in m.dataset.feature_names),
                              m.dataset.target)
            for m in self.members
        ])


@dataclass(frozen=True)
class VflResult:
    blocks: dict
    restricted: dict
    logs: list = field(default_factory=list)

    def combined(self, group: VflGroup) -> fc.ForecasterParams:
        """All blocks as one raw-feature model (columns in member order)."""
        parts = [self.blocks[m.id] for m in group.members]
        return fc.ForecasterParams(
            tuple(f"{m.id}:{n}" for m, p in zip(group.members, parts) for n in p.feature_names),
            np.concatenate([p.weights for p in parts]),
            sum(p.bias for p in parts),
        )


def forward_partial(block: fc.ForecasterParams, features) -> np.ndarray:
    """Partial score ``X_i @ w_i`` plus the block's bias term.

    Only the active block carries the model bias; a passive block's bias is the
    centering offset of its standardization (0 without standardization).
    """
    return fc.linear_output(block, features)


def combine_and_residual(partials, target, bias=0.0):
    """Sum partial scores; return clamped prediction and pre-clamp residual."""
    target = np.asarray(target, dtype=float).reshape(-1)
    total = None
    for p in partials:
        p = np.asarray(p, dtype=float).reshape(-1)
        if p.shape != target.shape:
            raise ShapeError(f"partial of length {p.shape[0]} for {target.shape[0]} targets")
        total = p if total is None else total + p
    if total is None:
        total = np.zeros_like(target)
    raw = total + bias
    return np.maximum(raw, 0.0), raw - target


def backward_partial(residuals, features, l2, block: fc.ForecasterParams) -> np.ndarray:
    """Gradient of the shared loss with respect to one block's weights."""
    residuals = np.asarray(residuals, dtype=float).reshape(-1)
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape != (residuals.shape[0], block.width):
        raise ShapeError(
            f"features {features.shape} vs {residuals.shape[0]} residuals and {block.width} weights"
        )
    return features.T @ residuals / residuals.shape[0] + l2 * block.weights


def _scalers(group, config):
    return {
        m.id: fc.fit_standardization(m.dataset, config) for m in group.members
    }


def _view(features, scaler):
    return features if scaler is None else scaler.apply(features)


def fold_block(block: fc.ForecasterParams, scaler, is_active) -> fc.ForecasterParams:
    out = fc.fold(block.feature_names, block.weights, block.bias if is_active else 0.0, scaler)
    return out


def run_vfl(group: VflGroup, rounds, config: fc.TrainConfig, network: Network | None = None) -> VflResult:
    """Split training for ``rounds`` steps plus per-member restricted local models.

    A restricted local model uses only that member's features, fitted against
    the active party's labels under the active party's evaluation protocol.
    """
    if rounds < 1:
        raise ConfigurationError("rounds must be >= 1")
    if group.row_count < 2:
        raise ConfigurationError("VFL needs at least 2 aligned rows")
    net = network or Network()
    active = group.active
    net.register(*(m.id for m in group.members))
    net.begin_phase()

    scalers = _scalers(group, config)
    views = {m.id: _view(m.dataset.features, scalers[m.id]) for m in group.members}
    frozen = {m.id: None if scalers[m.id] is None else scalers[m.id].degenerate for m in group.members}
    blocks = {m.id: fc.ForecasterParams.zeros(m.dataset.feature_names) for m in group.members}
    target = group.target
    lr, l2 = config.learning_rate, config.l2
    logs = []

    for r in range(1, rounds + 1):
        for p in group.passives:
            net.send(p.id, active.id, r, MessageKind.PARTIAL_SCORE,
                     forward_partial(blocks[p.id], views[p.id]))
        received = {msg.sender: payload
                    for msg, payload in net.deliver(active.id, MessageKind.PARTIAL_SCORE)}
        partials = [forward_partial(blocks[active.id], views[active.id])]
        partials += [received[p.id] for p in group.passives]
        _, residual = combine_and_residual(partials, target)
        loss = 0.5 * float(np.mean(residual**2))
        loss += 0.5 * l2 * sum(float(b.weights @ b.weights) for b in blocks.values())
        logs.append({"round": r, "loss": loss})
        for p in group.passives:
            net.send(active.id, p.id, r, MessageKind.RESIDUAL_SHARE, residual)

        updated = {}
        for m in group.members:
            if m is active:
                share = residual
            else:
                (_, share), = net.deliver(m.id, MessageKind.RESIDUAL_SHARE)
            block = blocks[m.id]
            grad = backward_partial(share, views[m.id], l2, block)
            if frozen[m.id] is not None:
                grad = np.where(frozen[m.id], 0.0, grad)
            bias = block.bias - lr * float(share.mean()) if m is active else 0.0
            updated[m.id] = fc.ForecasterParams(block.feature_names, block.weights - lr * grad, bias)
        blocks = updated

    raw_blocks = {m.id: fold_block(blocks[m.id], scalers[m.id], m is active) for m in group.members}
    local_config = config.replace(epochs=rounds)
    restricted = {
        m.id: fc.train(m.dataset.with_target(target), local_config) for m in group.members
    }
    return VflResult(raw_blocks, restricted, logs)


def vfl_predict(result: VflResult, group_or_datasets, network: Network | None = None, round=0):
    """Federated forecast over aligned member datasets (active first).

    ``group_or_datasets`` maps member id to feature matrix. With a network,
    passives' partial scores are sent to the active party as messages.
    """
    ids = list(group_or_datasets)
    active_id = ids[0]
    partials = []
    for mid in ids:
        part = forward_partial(result.blocks[mid], group_or_datasets[mid])
        if network is not None and mid != active_id:
            network.send(mid, active_id, round, MessageKind.PARTIAL_SCORE, part)
            network.deliver(active_id, MessageKind.PARTIAL_SCORE)
        partials.append(part)
    total = partials[0]
    for p in partials[1:]:
        total = total + p
    return np.maximum(total, 0.0)

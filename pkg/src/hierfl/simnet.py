"""Deterministic in-memory message passing with an auditable transcript.

Every message gets a global sequence number and a 64-bit BLAKE2b digest of its
payload. Rounds act as barriers: once a message for round ``r`` has been sent,
nothing for an earlier round may follow.
"""

from __future__ import annotations

import enum
import hashlib
import json
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np

from .errors import RoutingError


class MessageKind(str, enum.Enum):
    PARAMETER_UPDATE = "ParameterUpdate"
    GLOBAL_BROADCAST = "GlobalBroadcast"
    PARTIAL_SCORE = "PartialScore"
    RESIDUAL_SHARE = "ResidualShare"
    SCORE_REPORT = "ScoreReport"


def _jsonable(payload):
    if isinstance(payload, np.ndarray):
        return payload.tolist()
    if isinstance(payload, dict):
        return {str(k): _jsonable(v) for k, v in payload.items()}
    if isinstance(payload, (list, tuple)):
        return [_jsonable(v) for v in payload]
    if isinstance(payload, np.generic):
        return payload.item()
    if hasattr(payload, "to_dict"):
        return _jsonable(payload.to_dict())
    return payload


def payload_bytes(payload) -> bytes:
    """Canonical byte encoding of a payload.

    Numeric arrays (and flat lists of numbers) encode as little-endian float64
    so a raw data series always hashes the same way; anything else is encoded
    as sorted-key JSON.
    """
    if isinstance(payload, np.ndarray) and payload.dtype.kind in "biuf":
        return np.ascontiguousarray(payload, dtype="<f8").tobytes()
    if isinstance(payload, (list, tuple)) and payload and all(
        isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in payload
    ):
        return np.asarray(payload, dtype="<f8").tobytes()
    return json.dumps(_jsonable(payload), sort_keys=True, separators=(",", ":")).encode()


def digest(payload) -> str:
    return hashlib.blake2b(payload_bytes(payload), digest_size=8).hexdigest()


def fingerprint(series) -> str:
    """Digest of a raw data series, comparable with message payload digests."""
    return digest(np.asarray(series, dtype=float))


@dataclass(frozen=True)
class Message:
    seq: int
    round: int
    sender: str
    receiver: str
    kind: MessageKind
    digest: str
    size: int
    payload: Any = field(default=None, compare=False, repr=False)

    def to_dict(self, full_payload=False):
        doc = {
            "seq": self.seq,
            "round": self.round,
            "sender": self.sender,
            "receiver": self.receiver,
            "kind": self.kind.value,
            "digest": self.digest,
            "size": self.size,
        }
        if full_payload:
            doc["payload"] = _jsonable(self.payload)
        return doc


@dataclass
class Transcript:
    scenario: str = ""
    seed: int = 0
    messages: list = field(default_factory=list)

    def __len__(self):
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    def of_kind(self, kind):
        kind = MessageKind(kind)
        return [m for m in self.messages if m.kind is kind]

    def to_jsonl(self, full_payload=False) -> str:
        return "".join(
            json.dumps(m.to_dict(full_payload), separators=(",", ":")) + "\n"
            for m in self.messages
        )

    def write(self, path, full_payload=False):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl(full_payload))

    @classmethod
    def from_jsonl(cls, text, scenario="", seed=0):
        messages = []
        for line in text.splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            messages.append(
                Message(
                    seq=doc["seq"],
                    round=doc["round"],
                    sender=doc["sender"],
                    receiver=doc["receiver"],
                    kind=MessageKind(doc["kind"]),
                    digest=doc["digest"],
                    size=doc["size"],
                    payload=doc.get("payload"),
                )
            )
        return cls(scenario, seed, messages)


class Network:
    """Synchronous message router with per-receiver FIFO inboxes.

    ``begin_phase`` shifts later round numbers past everything already sent,
    so sequential protocols (one VFL group after another, then HFL) share one
    transcript while round numbers stay non-decreasing.
    """

    def __init__(self, scenario="", seed=0, keep_payloads=True):
        self.transcript = Transcript(scenario, seed)
        self.keep_payloads = keep_payloads
        self._endpoints = set()
        self._inbox = defaultdict(deque)
        self._round = 0
        self._offset = 0

    def register(self, *endpoint_ids):
        for eid in endpoint_ids:
            self._endpoints.add(str(eid))

    @property
    def endpoints(self):
        return frozenset(self._endpoints)

    @property
    def current_round(self):
        return self._round

    def begin_phase(self):
        self._offset = self._round

    def send(self, sender, receiver, round, kind, payload) -> int:
        """Enqueue and log a message; ``round=None`` means the current round."""
        for eid in (sender, receiver):
            if eid not in self._endpoints:
                raise RoutingError(f"unregistered endpoint {eid!r}")
        global_round = self._round if round is None else self._offset + int(round)
        if global_round < self._round:
            raise RoutingError(
                f"round barrier violated: round {global_round} after round {self._round}"
            )
        self._round = global_round
        raw = payload_bytes(payload)
        msg = Message(
            seq=len(self.transcript.messages) + 1,
            round=global_round,
            sender=sender,
            receiver=receiver,
            kind=MessageKind(kind),
            digest=hashlib.blake2b(raw, digest_size=8).hexdigest(),
            size=len(raw),
            payload=payload if self.keep_payloads else None,
        )
        self.transcript.messages.append(msg)
        self._inbox[receiver].append((msg, payload))
        return msg.seq

    def deliver(self, receiver, kind=None) -> list:
        """Pop queued ``(message, payload)`` pairs for ``receiver`` in enqueue order."""
        if receiver not in self._endpoints:
            raise RoutingError(f"unregistered endpoint {receiver!r}")
        box = self._inbox[receiver]
        if kind is None:
            out = list(box)
            box.clear()
            return out
        kind = MessageKind(kind)
        out = [item for item in box if item[0].kind is kind]
        rest = [item for item in box if item[0].kind is not kind]
        box.clear()
        box.extend(rest)
        return out

    def pending(self, receiver=None) -> int:
        if receiver is None:
            return sum(len(b) for b in self._inbox.values())
        return len(self._inbox[receiver])


@dataclass(frozen=True)
class PrivacyReport:
    passed: bool
    offending: tuple = ()

    def __bool__(self):
        return self.passed


def assert_privacy(transcript: Transcript, forbidden: Iterable[str]) -> PrivacyReport:
    """Check that no message payload digest equals a raw-data fingerprint."""
    forbidden = set(forbidden)
    offending = tuple(m.seq for m in transcript if m.digest in forbidden)
    return PrivacyReport(not offending, offending)


def raw_fingerprints(dataset, windows: Optional[Iterable] = None) -> set:
    """Fingerprints of every feature column and the target, whole and per window.

    ``windows`` are slices (e.g. the train and evaluation splits) whose
    sub-series are fingerprinted as well.
    """
    slices = [slice(None)] + list(windows or [])
    out = set()
    for sl in slices:
        for j in range(dataset.features.shape[1]):
            out.add(fingerprint(dataset.features[sl, j]))
        if dataset.target is not None:
            out.add(fingerprint(dataset.target[sl]))
    return out

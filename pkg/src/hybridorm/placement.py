"""Choosing the store for new data.

Each candidate store gets a cost in seconds::

    payload / bandwidth + w_load * server_load + w_clients * active_clients + latency_ewma

and the cheapest eligible store wins (ties go to the smallest location
name). ``latency_ewma`` is learned from observed operation latencies.
Entities tagged ``private_only`` are only eligible for private stores.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import InvalidMetrics, InvalidObservation, NoEligibleStore
from .schema import EntityDescriptor, SchemaRegistry, StoreDescriptor

DEFAULT_BANDWIDTH = 1e6


@dataclass(frozen=True)
class StoreMetrics:
    bandwidth: float = DEFAULT_BANDWIDTH  # bytes / second
    server_load: float = 0.0
    active_clients: int = 0
    latency_ewma: float = 0.0  # seconds

    def check(self) -> "StoreMetrics":
        values = (self.bandwidth, self.server_load, self.active_clients, self.latency_ewma)
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in values):
            raise InvalidMetrics(f"non-finite or non-numeric metric in {self}")
        if self.bandwidth <= 0:
            raise InvalidMetrics(f"bandwidth must be positive, got {self.bandwidth}")
        if not 0.0 <= self.server_load <= 1.0:
            raise InvalidMetrics(f"server_load must lie in [0, 1], got {self.server_load}")
        if self.active_clients < 0:
            raise InvalidMetrics(f"active_clients must be non-negative, got {self.active_clients}")
        if self.latency_ewma < 0:
            raise InvalidMetrics(f"latency_ewma must be non-negative, got {self.latency_ewma}")
        return self


@dataclass(frozen=True)
class PolicyWeights:
    w_load: float = 0.05  # seconds at full load
    w_clients: float = 0.001  # seconds per client
    ewma_alpha: float = 0.2

    def __post_init__(self):
        for v in (self.w_load, self.w_clients, self.ewma_alpha):
            if not math.isfinite(v):
                raise ValueError("policy weights must be finite")
        if self.w_load < 0 or self.w_clients < 0:
            raise ValueError("policy weights must be non-negative")
        if not 0.0 < self.ewma_alpha <= 1.0:
            raise ValueError(f"ewma_alpha must lie in (0, 1], got {self.ewma_alpha}")


@dataclass(frozen=True)
class ScoreTerms:
    transfer: float
    load: float
    clients: float
    latency: float

    @property
    def total(self) -> float:
        return self.transfer + self.load + self.clients + self.latency


@dataclass(frozen=True)
class PlacementDecision:
    chosen: str
    scores: dict
    eligible: list
    ineligible: list = field(default_factory=list)
    terms: dict = field(default_factory=dict, compare=False)


def score_terms(metrics: StoreMetrics, weights: PolicyWeights, payload: float) -> ScoreTerms:
    metrics.check()
    if not (math.isfinite(payload) and payload >= 0):
        raise InvalidMetrics(f"payload must be finite and non-negative, got {payload}")
    return ScoreTerms(
        transfer=payload / metrics.bandwidth,
        load=weights.w_load * metrics.server_load,
        clients=weights.w_clients * metrics.active_clients,
        latency=metrics.latency_ewma,
    )


def score(metrics: StoreMetrics, weights: PolicyWeights, payload: float) -> float:
    return score_terms(metrics, weights, payload).total


def eligible(entity: EntityDescriptor, store: StoreDescriptor) -> bool:
    return entity.confidentiality == "public_ok" or store.privacy == "private"


def choose_location(
    registry: SchemaRegistry,
    entity: EntityDescriptor,
    payload: float,
    metrics: Mapping[str, StoreMetrics],
    weights: PolicyWeights = PolicyWeights(),
    candidates: Iterable[str] | None = None,
) -> PlacementDecision:
    """Pick the cheapest store allowed to hold ``entity``.

    ``candidates`` narrows the registered stores (e.g. to the open ones);
    stores absent from ``metrics`` are scored with default metrics.
    """
    names = list(registry.stores) if candidates is None else list(candidates)
    ok, rejected = [], []
    for name in names:
        (ok if eligible(entity, registry.stores[name]) else rejected).append(name)
    if not ok:
        raise NoEligibleStore(f"{entity.name} ({entity.confidentiality}) has no eligible store")
    ok.sort()
    terms = {name: score_terms(metrics.get(name, StoreMetrics()), weights, payload) for name in ok}
    scores = {name: t.total for name, t in terms.items()}
    chosen = min(ok, key=lambda n: (scores[n], n))
    return PlacementDecision(chosen, scores, ok, sorted(rejected), terms)


def record_observation(metrics: StoreMetrics, observed_latency: float, weights: PolicyWeights) -> StoreMetrics:
    if not (isinstance(observed_latency, (int, float)) and math.isfinite(observed_latency)
            and observed_latency >= 0):
        raise InvalidObservation(f"latency must be finite and non-negative, got {observed_latency!r}")
    a = weights.ewma_alpha
    return replace(metrics, latency_ewma=(1 - a) * metrics.latency_ewma + a * observed_latency)


def update_metrics(metrics: StoreMetrics, bandwidth=None, server_load=None, active_clients=None) -> StoreMetrics:
    changes = {
        k: v
        for k, v in (("bandwidth", bandwidth), ("server_load", server_load), ("active_clients", active_clients))
        if v is not None
    }
    return replace(metrics, **changes).check()


class PlacementPolicy:
    """Mutable per-store metric state shared by a runtime.

    Updates are serialized; ``snapshot`` returns a consistent copy.
    """

    def __init__(self, weights: PolicyWeights | None = None,
                 metrics: Mapping[str, StoreMetrics] | None = None):
        self.weights = weights or PolicyWeights()
        self._metrics = {k: v.check() for k, v in (metrics or {}).items()}
        self._lock = threading.Lock()

    def metrics(self, location: str) -> StoreMetrics:
        with self._lock:
            return self._metrics.get(location, StoreMetrics())

    def snapshot(self) -> dict[str, StoreMetrics]:
        with self._lock:
            return dict(self._metrics)

    def observe(self, location: str, latency: float) -> StoreMetrics:
        with self._lock:
            m = record_observation(self._metrics.get(location, StoreMetrics()), latency, self.weights)
            self._metrics[location] = m
            return m

    def update(self, location: str, bandwidth=None, server_load=None, active_clients=None) -> StoreMetrics:
        with self._lock:
            m = update_metrics(self._metrics.get(location, StoreMetrics()), bandwidth, server_load, active_clients)
            self._metrics[location] = m
            return m

    def choose(self, registry: SchemaRegistry, entity: EntityDescriptor, payload: float,
               candidates: Iterable[str] | None = None) -> PlacementDecision:
        return choose_location(registry, entity, payload, self.snapshot(), self.weights, candidates)

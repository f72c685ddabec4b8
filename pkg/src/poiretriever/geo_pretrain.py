"""Pretraining the location module so name-embedding similarity tracks geographic proximity."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

from .corpus import Poi
from .encoders import LocationEncoder, tokenize_location
from .geo import normalized_distance
from .nn import Adam, lr_at

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TripletSample:
    anchor: int
    p1: int
    p2: int
    d1: float
    d2: float


@dataclass(frozen=True)
class GeoPretrainConfig:
    epochs: int = 3
    batch_size: int = 8
    base_lr: float = 2e-5
    max_name_tokens: int = 64
    triplets_per_epoch: int | None = None  # None: one triplet per POI
    stratified: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.base_lr <= 0 or self.max_name_tokens < 1:
            raise ValueError("geo pretraining config values must be positive")


def _check_unit(**values):
    for k, v in values.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{k}={v} outside [0, 1]")


def triplet_loss(s1: float, s2: float, d1: float, d2: float) -> float:
    """Triplet hinge whose margin is the distance gap ``d1 - d2``."""
    _check_unit(s1=s1, s2=s2, d1=d1, d2=d2)
    if d1 - d2 > 0:
        return max((s1 - s2) + (d1 - d2), 0.0)
    return max((s2 - s1) - (d1 - d2), 0.0)


def triplet_loss_grad(s1, s2, d1, d2):
    """Vectorised loss and d/ds1, d/ds2 (subgradient 0 at the hinge)."""
    s1, s2, d1, d2 = (np.asarray(a, dtype=np.float64) for a in (s1, s2, d1, d2))
    gap = d1 - d2
    first = gap > 0
    raw = np.where(first, (s1 - s2) + gap, (s2 - s1) - gap)
    active = raw > 0
    loss = np.where(active, raw, 0.0)
    sign = np.where(first, 1.0, -1.0) * active
    return loss, sign, -sign


def sample_triplets(pois: Sequence[Poi], count: int, seed: int = 0,
                    stratified: bool = False) -> list[TripletSample]:
    """Draw ``count`` triplets of distinct POIs; ``stratified`` draws p1 from the anchor's city."""
    n = len(pois)
    if n < 3:
        raise ValueError(f"need at least 3 POIs to sample triplets, got {n}")
    rng = np.random.default_rng(seed)
    by_city: dict[str, list[int]] = {}
    if stratified:
        for i, p in enumerate(pois):
            by_city.setdefault(p.city, []).append(i)
    out = []
    for _ in range(count):
        a, b, c = (int(v) for v in rng.choice(n, size=3, replace=False))
        if stratified:
            same = [i for i in by_city[pois[a].city] if i not in (a, c)]
            if same:
                b = same[int(rng.integers(len(same)))]
        out.append(TripletSample(a, b, c,
                                 normalized_distance(pois[a].location, pois[b].location),
                                 normalized_distance(pois[a].location, pois[c].location)))
    return out


def _cos01_rows(h0, h1):
    """Row-wise rescaled cosine and its gradients w.r.t. both inputs."""
    n0 = np.linalg.norm(h0, axis=1, keepdims=True)
    n1 = np.linalg.norm(h1, axis=1, keepdims=True)
    n0 = np.maximum(n0, 1e-12)
    n1 = np.maximum(n1, 1e-12)
    cos = (h0 * h1).sum(axis=1, keepdims=True) / (n0 * n1)
    g0 = 0.5 * (h1 / (n0 * n1) - cos * h0 / n0**2)
    g1 = 0.5 * (h0 / (n0 * n1) - cos * h1 / n1**2)
    return ((cos + 1.0) / 2.0)[:, 0], g0, g1


def triplet_batch_loss(encoder: LocationEncoder, tokens: Sequence[Sequence[int]],
                       batch: Sequence[TripletSample], backward: bool = True) -> float:
    """Mean triplet loss over ``batch``; accumulates gradients into ``encoder`` when asked."""
    b = len(batch)
    rows = [t.anchor for t in batch] + [t.p1 for t in batch] + [t.p2 for t in batch]
    h, back = encoder.apply([tokens[i] for i in rows])
    h0, h1, h2 = h[:b], h[b : 2 * b], h[2 * b :]
    s1, g01, g1 = _cos01_rows(h0, h1)
    s2, g02, g2 = _cos01_rows(h0, h2)
    d1 = np.array([t.d1 for t in batch])
    d2 = np.array([t.d2 for t in batch])
    loss, ds1, ds2 = triplet_loss_grad(s1, s2, d1, d2)
    if backward:
        ds1 = ds1[:, None] / b
        ds2 = ds2[:, None] / b
        dh = np.concatenate([ds1 * g01 + ds2 * g02, ds1 * g1, ds2 * g2], axis=0)
        back(dh)
    return float(loss.mean())


def pretrain_location_module(encoder: LocationEncoder, pois: Sequence[Poi],
                             config: GeoPretrainConfig = GeoPretrainConfig()):
    """Train ``encoder`` in place with minibatch Adam; returns ``(encoder, per-epoch mean losses)``."""
    pois = list(pois)
    tokens = [tokenize_location(p.name, encoder.vocab, config.max_name_tokens) for p in pois]
    per_epoch = config.triplets_per_epoch or len(pois)
    steps_per_epoch = -(-per_epoch // config.batch_size)
    total = max(1, steps_per_epoch * config.epochs)
    opt = Adam(encoder.parameters())
    trace = []
    step = 0
    for epoch in range(config.epochs):
        triplets = sample_triplets(pois, per_epoch, seed=config.seed * 1000 + epoch,
                                   stratified=config.stratified)
        losses = []
        for start in range(0, per_epoch, config.batch_size):
            batch = triplets[start : start + config.batch_size]
            losses.append(triplet_batch_loss(encoder, tokens, batch) * len(batch))
            opt.step(lr_at(step, total, config.base_lr))
            step += 1
        trace.append(sum(losses) / per_epoch)
        log.info("geo pretrain epoch %d mean loss %.6f", epoch + 1, trace[-1])
    return encoder, trace


def geo_alignment(encoder: LocationEncoder, pois: Sequence[Poi], n_pairs: int = 1000,
                  seed: int = 0, max_name_tokens: int = 64) -> float:
    """Spearman correlation between embedding dissimilarity and normalized distance."""
    pois = list(pois)
    rng = np.random.default_rng(seed)
    tokens = [tokenize_location(p.name, encoder.vocab, max_name_tokens) for p in pois]
    h, _ = encoder.apply(tokens)
    pairs = [rng.choice(len(pois), size=2, replace=False) for _ in range(n_pairs)]
    a = np.array([i for i, _ in pairs])
    b = np.array([j for _, j in pairs])
    sim, _, _ = _cos01_rows(h[a], h[b])
    dist = [normalized_distance(pois[i].location, pois[j].location) for i, j in zip(a, b)]
    return float(spearmanr(1.0 - sim, dist).statistic)

"""Content placement strategies.

Static generators (uniform permutation windows, proportional-to-product
sampling in plain and Bernoulli form, hot-warm-cold, the duplicate-tolerant
large-catalogue variant), the single step of the demand-driven cache update
chain, and the exact product-form cache-state law used as a test oracle.

Every generator takes an explicit numpy Generator; nothing here shares
mutable state, so independent repetitions can generate placements
concurrently with their own streams.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .analysis import WaterFilling
from .core import (CapacityError, ClassCatalogue, ConfigError, FixedCatalogue,
                   Placement, PP2PN, SamplingRetryError, SystemConfig)

RESAMPLE_CAP = 10 ** 6


def _fixed_catalogue(config: SystemConfig) -> FixedCatalogue:
    if not isinstance(config.catalogue, FixedCatalogue):
        raise ConfigError("this placement strategy needs a fixed catalogue")
    return config.catalogue


def uniform_placement(config: SystemConfig, rng: np.random.Generator) -> Placement:
    """Popularity-blind baseline: one global random permutation, box b takes
    the b-th window of M consecutive (cyclic) positions."""
    cat = _fixed_catalogue(config)
    c_total, m, b_total = cat.content_count, config.storage_per_box, config.box_count
    if c_total < m:
        raise ConfigError("uniform placement needs content_count >= storage_per_box")
    perm = rng.permutation(c_total)
    positions = np.arange(m + 1, (b_total + 1) * m + 1)  # windows for boxes 1..B
    caches = perm[(positions - 1) % c_total].reshape(b_total, m)
    return Placement(caches, c_total)


def sample_proportional_to_product(config: SystemConfig,
                                   rng: np.random.Generator) -> Placement:
    """Draw M i.i.d. contents per box from the popularity law; any duplicate
    discards and redraws the whole box, which conditions each cache on being
    a distinct size-M set with probability proportional to the product of its
    members' popularities."""
    cat = _fixed_catalogue(config)
    c_total, m, b_total = cat.content_count, config.storage_per_box, config.box_count
    cum = np.cumsum(cat.popularity)
    caches = np.empty((b_total, m), dtype=np.int64)
    pending = np.arange(b_total)
    attempts = np.zeros(b_total, dtype=np.int64)
    while pending.size:
        draws = np.searchsorted(cum, rng.random((pending.size, m)) * cum[-1], side="right")
        if m > 1:
            srt = np.sort(draws, axis=1)
            ok = np.all(srt[:, 1:] != srt[:, :-1], axis=1)
        else:
            ok = np.ones(pending.size, dtype=bool)
        caches[pending[ok]] = draws[ok]
        attempts[pending] += 1
        pending = pending[~ok]
        if pending.size and attempts[pending].max() >= RESAMPLE_CAP:
            raise SamplingRetryError(
                f"box resampled {RESAMPLE_CAP} times without a duplicate-free draw; "
                "popularity is too skewed, use bernoulli_sample_placement instead")
    return Placement(caches, c_total)


def bernoulli_sample_placement(config: SystemConfig, beta: float,
                               rng: np.random.Generator) -> Placement:
    """Same cache-set law as sample_proportional_to_product, via C independent
    Bernoulli picks with success beta*pop/(1 + beta*pop), accepted only when
    exactly M succeed. The conditional law does not depend on beta; solve_beta
    gives the acceptance-probability-maximizing choice."""
    if beta <= 0:
        raise ConfigError("beta must be > 0")
    cat = _fixed_catalogue(config)
    c_total, m, b_total = cat.content_count, config.storage_per_box, config.box_count
    p = beta * cat.popularity / (1.0 + beta * cat.popularity)
    rows: list[np.ndarray] = [None] * b_total  # type: ignore[list-item]
    pending = np.arange(b_total)
    attempts = np.zeros(b_total, dtype=np.int64)
    while pending.size:
        draws = rng.random((pending.size, c_total)) < p
        ok = draws.sum(axis=1) == m
        for row_idx, box in zip(np.flatnonzero(ok), pending[ok]):
            rows[box] = np.flatnonzero(draws[row_idx])
        attempts[pending] += 1
        pending = pending[~ok]
        if pending.size and attempts[pending].max() >= RESAMPLE_CAP:
            raise SamplingRetryError(
                f"box resampled {RESAMPLE_CAP} times without hitting exactly "
                f"{m} successes; tune beta with solve_beta")
    return Placement(rows, c_total)


def solve_beta(popularity: np.ndarray, storage_per_box: int) -> float:
    """Bernoulli parameter that makes the expected number of successes equal M,
    maximizing the acceptance probability of bernoulli_sample_placement."""
    pop = np.asarray(popularity, dtype=float)
    m = int(storage_per_box)
    if not 1 <= m < len(pop):
        raise ConfigError("need 1 <= storage_per_box < len(popularity)")

    def gap(beta: float) -> float:
        # beta * f(beta): strictly decreasing from M to M - C
        return m - float(np.sum(beta * pop / (1.0 + beta * pop)))

    hi = 1.0
    while gap(hi) > 0:
        hi *= 2.0
    beta = brentq(gap, 1e-12, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps)
    residual = abs(m / beta - float(np.sum(pop / (1.0 + beta * pop))))
    if residual >= 1e-10:
        raise RuntimeError(f"beta root residual {residual} above tolerance")
    return float(beta)


def cache_update_step(placement: Placement, box: int, content: int,
                      rng: np.random.Generator) -> Placement:
    """One transition of the demand-driven cache update chain at one box.

    If the pushed content is already cached nothing changes; otherwise a
    uniformly chosen cached content is evicted and the new one inserted.
    """
    row = placement.caches[box]
    if content in row:
        return placement
    new_row = list(row)
    new_row[int(rng.integers(len(row)))] = content
    return placement.with_box_cache(box, new_row)


@dataclass(frozen=True)
class CacheStateDistribution:
    """Exact law over size-M cache sets (enumerable catalogues only)."""

    subsets: tuple[tuple[int, ...], ...]
    probability: np.ndarray

    def as_dict(self) -> dict[frozenset, float]:
        return {frozenset(s): float(p) for s, p in zip(self.subsets, self.probability)}


def product_form_distribution(popularity: np.ndarray,
                              storage_per_box: int) -> CacheStateDistribution:
    """Stationary cache-state law of the update chain: P(set) ~ product of
    member popularities over all size-M subsets. Enumerative; C <= 20."""
    pop = np.asarray(popularity, dtype=float)
    c_total = len(pop)
    m = int(storage_per_box)
    if c_total > 20:
        raise CapacityError("product-form enumeration is limited to C <= 20")
    if not 1 <= m <= c_total:
        raise ConfigError("need 1 <= storage_per_box <= len(popularity)")
    subsets = tuple(itertools.combinations(range(c_total), m))
    weights = np.array([np.prod(pop[list(s)]) for s in subsets])
    probs = weights / weights.sum()
    probs.setflags(write=False)
    return CacheStateDistribution(subsets, probs)


def hot_warm_cold_placement(water_filling: WaterFilling, config: SystemConfig,
                            rng: np.random.Generator) -> Placement:
    """Realize the water-filling optimum: the M-1 hottest contents everywhere,
    the last slot shared among warm contents with box counts matching the
    optimal fractions (largest-remainder rounding to exactly B boxes)."""
    if config.network_mode != PP2PN:
        raise ConfigError("hot-warm-cold placement is defined for PP2PN mode")
    cat = _fixed_catalogue(config)
    b_total, m = config.box_count, config.storage_per_box
    fractions = water_filling.cache_fraction
    if len(fractions) != cat.content_count or water_filling.hot_count != m - 1:
        raise ConfigError("water-filling solution does not match this configuration")

    hot = list(range(m - 1))
    warm = [c for c in range(m - 1, cat.content_count) if fractions[c] > 0]
    quota = np.floor(fractions[warm] * b_total).astype(np.int64)
    remainder = fractions[warm] * b_total - quota
    deficit = int(b_total - quota.sum())
    by_remainder = sorted(range(len(warm)), key=lambda i: (-remainder[i], i))
    for k in range(deficit):
        if k < len(warm):
            quota[by_remainder[k]] += 1
        else:
            # catalogue-exhaustion regime: cycle the shortfall onto the most
            # popular warm contents (extra replicas cannot hurt absorbed load)
            quota[(k - len(warm)) % len(warm)] += 1

    order = rng.permutation(b_total)
    caches = [None] * b_total  # type: ignore[list-item]
    pos = 0
    for c, q in zip(warm, quota):
        for b in order[pos:pos + int(q)]:
            caches[b] = hot + [c]
        pos += int(q)
    return Placement(caches, cat.content_count)


def modified_p2p_placement(config: SystemConfig, rng: np.random.Generator) -> Placement:
    """Large-catalogue placement: every one of the M*B slots independently
    holds a content drawn with probability proportional to its request rate.
    Duplicates within a box are allowed (and rare for M << sqrt(min class size))."""
    if not isinstance(config.catalogue, ClassCatalogue):
        raise ConfigError("modified placement needs a class catalogue")
    rates, _ = config.catalogue.realize(config.box_count)
    cum = np.cumsum(rates)
    draws = np.searchsorted(cum, rng.random((config.box_count, config.storage_per_box)) * cum[-1],
                            side="right")
    return Placement(draws, len(rates), allow_duplicate_slots=True)

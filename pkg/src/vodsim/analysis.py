"""Closed-form and numerical performance results.

Everything here is a pure function: Erlang blocking, the asymptotic optimum
loss fraction, the hot-warm-cold water-filling solution, the large-catalogue
lower bound, and an exact stationary-distribution oracle for tiny systems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .core import CapacityError, ConfigError, Placement, SystemConfig, per_content_rates
from .feasibility import is_feasible_matching


def erlang_b(offered_load: float, capacity: int) -> float:
    """Blocking probability of a loss system with ``capacity`` unit-rate servers.

    Uses the stable recurrence E(v, k) = v E(v, k-1) / (k + v E(v, k-1)),
    E(v, 0) = 1. Note the standard sum starts at n = 0.
    """
    if offered_load <= 0:
        raise ConfigError("offered_load must be > 0")
    if capacity < 0 or int(capacity) != capacity:
        raise ConfigError("capacity must be a nonnegative integer")
    e = 1.0
    for k in range(1, int(capacity) + 1):
        e = offered_load * e / (k + offered_load * e)
    return e


def optimal_loss(load: float) -> float:
    """Asymptotically optimal system loss fraction, (1 - 1/load)^+."""
    if load <= 0:
        raise ConfigError("load must be > 0")
    return max(0.0, 1.0 - 1.0 / load)


# --------------------------------------------------------------------------
# hot-warm-cold water filling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WaterFilling:
    """Optimal cache/bandwidth split for the pure P2P linear program.

    ``cache_fraction[c]`` is the fraction of boxes caching content c,
    ``bandwidth_share[c]`` the fraction of system bandwidth devoted to c and
    ``served_load[c]`` the upload work done for c. ``threshold_rank`` is the
    1-based rank of the last fully water-filled warm content; ranks above
    ``threshold_rank + 1`` are uncached. ``absorbed_load`` is the resulting
    upper bound on the traffic absorbed by the boxes.
    """

    cache_fraction: np.ndarray
    bandwidth_share: np.ndarray
    served_load: np.ndarray
    per_content_load: np.ndarray
    hot_count: int
    threshold_rank: int
    absorbed_load: float
    objective: float

    @property
    def absorbed_fraction(self) -> float:
        return self.absorbed_load / float(self.per_content_load.sum())

    def warm_ranks(self) -> range:
        """1-based ranks holding a positive warm cache fraction."""
        first = self.hot_count + 1
        last = self.threshold_rank
        if last < len(self.cache_fraction) and self.cache_fraction[last] > 0:
            last += 1
        return range(first, last + 1)


def solve_water_filling(popularity: np.ndarray, load: float,
                        storage_per_box: int) -> WaterFilling:
    """Closed-form optimum of the cache/bandwidth allocation program.

    ``popularity`` must be normalized and sorted in descending order. The
    top storage_per_box - 1 contents are fully replicated; the remaining slot
    is water-filled with fraction load_c / (1 + load_c) per content until the
    unit bandwidth budget is spent; one partially cached content may follow;
    the tail stays uncached.
    """
    pop = np.asarray(popularity, dtype=float)
    c_total = len(pop)
    m = int(storage_per_box)
    if not (1 <= m <= c_total):
        raise ConfigError("need 1 <= storage_per_box <= len(popularity)")
    if load <= 0:
        raise ConfigError("load must be > 0")
    if np.any(pop <= 0):
        raise ConfigError("popularity entries must be > 0")
    if abs(pop.sum() - 1.0) > 1e-9:
        raise ConfigError("popularity must be normalized")
    if np.any(np.diff(pop) > 1e-15):
        raise ConfigError("popularity must be sorted in descending order")

    rho = load * pop
    cache = np.zeros(c_total)
    share = np.zeros(c_total)
    served = np.zeros(c_total)
    hot = m - 1
    cache[:hot] = 1.0

    level = rho / (1.0 + rho)
    budget = 0.0
    threshold = hot  # 1-based rank of the last fully filled warm content
    for rank in range(m, c_total + 1):
        w = level[rank - 1]
        if budget + w <= 1.0 + 1e-12:
            budget += w
            cache[rank - 1] = share[rank - 1] = served[rank - 1] = w
            threshold = rank
        else:
            break

    if threshold < c_total:
        # partially cached content right after the water-filled band
        part = 1.0 - budget
        idx = threshold  # 0-based index of rank threshold + 1
        cache[idx] = share[idx] = served[idx] = part
        absorbed = rho[:threshold].sum() + (rho[idx] + 1.0) * part
    else:
        # catalogue exhausted before the bandwidth budget: everything absorbed
        absorbed = float(rho.sum())

    objective = float(np.dot(rho, cache) + served.sum())
    for arr in (cache, share, served, rho):
        arr.setflags(write=False)
    return WaterFilling(cache, share, served, rho, hot, threshold,
                        float(absorbed), objective)


def large_catalogue_loss_floor(storage_per_box: int, total_size_factor: float,
                               min_rate: float, uplink_slots: int) -> float:
    """Lower bound on the overall rejection probability with bounded storage.

    At least half the contents are replicated at most ceil(2M / alpha) times,
    and each of those blocks at least as often as an Erlang system with that
    capacity, giving (1/2) E(min_rate, ceil(2M / alpha) * U).
    """
    if storage_per_box < 1:
        raise ConfigError("storage_per_box must be >= 1")
    if total_size_factor <= 0:
        raise ConfigError("total_size_factor must be > 0")
    if min_rate <= 0:
        raise ConfigError("min_rate must be > 0")
    if uplink_slots < 1:
        raise ConfigError("uplink_slots must be >= 1")
    replicas_cap = math.ceil(2 * storage_per_box / total_size_factor)
    return 0.5 * erlang_b(min_rate, replicas_cap * uplink_slots)


# --------------------------------------------------------------------------
# exact CTMC oracle for tiny systems
# --------------------------------------------------------------------------

_STATE_LIMIT = 100_000


def exact_ctmc_loss(config: SystemConfig, placement: Placement) -> np.ndarray:
    """Exact per-content blocking probabilities of the loss network.

    Enumerates every feasible request vector (breadth-first from the empty
    system; feasibility via the max-flow test), weights states by the
    truncated product-Poisson law and sums the stationary mass of states
    that block each content. Guarded to at most 100k states.
    """
    rates = per_content_rates(config)
    c_total = len(rates)
    u = config.uplink_slots
    log_rates = np.log(rates)

    feasible: dict[tuple, bool] = {}

    def is_ok(state: tuple) -> bool:
        cached = feasible.get(state)
        if cached is None:
            cached = is_feasible_matching(np.array(state, dtype=np.int64), placement, u)
            feasible[state] = cached
        return cached

    zero = tuple([0] * c_total)
    if not is_ok(zero):
        raise RuntimeError("empty system infeasible; placement is inconsistent")
    states = [zero]
    seen = {zero}
    head = 0
    while head < len(states):
        state = states[head]
        head += 1
        for c in range(c_total):
            nxt = state[:c] + (state[c] + 1,) + state[c + 1:]
            if nxt in seen:
                continue
            if is_ok(nxt):
                seen.add(nxt)
                states.append(nxt)
                if len(states) > _STATE_LIMIT:
                    raise CapacityError(
                        f"feasible state space exceeds {_STATE_LIMIT}; "
                        "use the simulator for instances this large")

    mat = np.array(states, dtype=np.int64)
    log_w = mat @ log_rates - gammaln(mat + 1.0).sum(axis=1)
    log_w -= log_w.max()
    probs = np.exp(log_w)
    probs /= probs.sum()

    blocking = np.zeros(c_total)
    for state, p in zip(states, probs):
        for c in range(c_total):
            nxt = state[:c] + (state[c] + 1,) + state[c + 1:]
            if nxt not in seen:
                blocking[c] += p
    return blocking

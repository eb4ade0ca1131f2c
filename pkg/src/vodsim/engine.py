"""Seeded discrete-event loss-network simulator.

One run draws Poisson arrivals per content, serves accepted requests for an
exponential (or deterministic) unit-mean duration on holder-box uplinks, and
counts per-content arrivals / acceptances / rejections / local services after
a warm-up period. Admission is either most-idle-box selection plus repacking,
or the counter-based rule of the large-catalogue model. Demand-driven cache
updates can run alongside the repacking policy.

Reproducibility contract: all arrival times, contents, durations, requester
boxes and push coins are pre-drawn in bulk from the run's numpy Generator (in
that order), after which a Python ``random.Random`` seeded from the same
Generator drives every data-dependent draw (tie-breaks, evictions, swap pair
picks). Identical (config, placement, seed) therefore give identical event
traces. Repetition r of an experiment uses
``numpy.random.SeedSequence([base_seed, r])``.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from heapq import heappop, heappush

import numpy as np

from . import placement as placements
from .analysis import solve_water_filling
from .core import (CacheUpdate, ConfigError, CounterBased, FixedCatalogue,
                   Placement, PP2PN, SystemConfig, check_placement,
                   normalized_popularity, per_content_rates)
from .feasibility import AssignmentState, orphan_rescue, repack


# --------------------------------------------------------------------------
# metrics
# --------------------------------------------------------------------------

@dataclass
class Metrics:
    """Post-warm-up request counts for one run.

    Requests are counted when their fate is decided: admission, rejection and
    local service at arrival time, and a repacking drop of an ongoing service
    at drop time (an accepted post-warm-up request moves to the rejections; a
    pre-warm-up request dropped after the boundary joins the counted
    population as a loss). Conservation holds exactly per content:
    arrivals = acceptances + rejections + local_services.
    """

    arrivals: np.ndarray
    acceptances: np.ndarray
    rejections: np.ndarray
    local_services: np.ndarray
    popularity: np.ndarray
    horizon: float
    warmup_time: float
    diagnostics: dict
    final_placement: Placement | None = None

    @property
    def per_content_loss(self) -> np.ndarray:
        out = np.zeros(len(self.arrivals))
        seen = self.arrivals > 0
        out[seen] = self.rejections[seen] / self.arrivals[seen]
        return out

    @property
    def system_loss(self) -> float:
        """Popularity-weighted average of per-content loss rates."""
        return float(np.dot(self.popularity, self.per_content_loss))

    @property
    def rejection_fraction(self) -> float:
        total = int(self.arrivals.sum())
        return float(self.rejections.sum()) / total if total else 0.0

    @property
    def absorbed_fraction(self) -> float:
        return 1.0 - self.rejection_fraction

    def scalar_stats(self) -> dict[str, float]:
        return {
            "system_loss": self.system_loss,
            "rejection_fraction": self.rejection_fraction,
            "absorbed_fraction": self.absorbed_fraction,
            "arrivals": float(self.arrivals.sum()),
            "acceptances": float(self.acceptances.sum()),
            "rejections": float(self.rejections.sum()),
            "local_services": float(self.local_services.sum()),
        }


# --------------------------------------------------------------------------
# counter-based admission
# --------------------------------------------------------------------------

class CounterState:
    """Per-box association counters of the counter-based acceptance rule."""

    __slots__ = ("counters", "peak")

    def __init__(self, box_count: int):
        self.counters = [0] * box_count
        self.peak = 0

    def commit(self, boxes) -> None:
        counters = self.counters
        for b in boxes:
            counters[b] += 1
            if counters[b] > self.peak:
                self.peak = counters[b]

    def release(self, boxes) -> None:
        counters = self.counters
        for b in boxes:
            counters[b] -= 1


@dataclass
class AdmitResult:
    accepted: bool
    boxes: tuple[int, ...] | None
    reason: str | None  # "ineligible" | "insufficient_holders" | "capacity"


def counter_based_admit(counter_state: CounterState, content: int, placement: Placement,
                        fanout: int, uplink_slots: int, rng: random.Random, *,
                        eligibility_threshold: int | None = None) -> AdmitResult:
    """Associate a request with ``fanout`` distinct holder boxes, or reject.

    Contents replicated fewer than ceil(M ** 3/4) times are never served; a
    sampled set is committed only if every counter stays within fanout * U.
    """
    if eligibility_threshold is None:
        m = max(len(row) for row in placement.caches)
        eligibility_threshold = math.ceil(m ** 0.75)
    if int(placement.replica_count[content]) < eligibility_threshold:
        return AdmitResult(False, None, "ineligible")
    holders = placement.holders[content]
    if len(holders) < fanout:
        return AdmitResult(False, None, "insufficient_holders")
    boxes = rng.sample(holders, fanout)
    cap = fanout * uplink_slots
    counters = counter_state.counters
    for b in boxes:
        if counters[b] + 1 > cap:
            return AdmitResult(False, None, "capacity")
    counter_state.commit(boxes)
    return AdmitResult(True, tuple(boxes), None)


# --------------------------------------------------------------------------
# single run
# --------------------------------------------------------------------------

def _poisson_arrival_times(rng: np.random.Generator, rate: float,
                           horizon: float) -> np.ndarray:
    expected = rate * horizon
    n = int(expected + 10.0 * math.sqrt(expected + 1.0) + 16)
    times = np.cumsum(rng.exponential(1.0 / rate, n))
    while times[-1] < horizon:
        more = rng.exponential(1.0 / rate, max(16, n // 10))
        times = np.concatenate([times, times[-1] + np.cumsum(more)])
    return times[times < horizon]


def run_simulation(config: SystemConfig, placement: Placement, rng, *,
                   trace=None, capture_final_placement: bool = False) -> Metrics:
    """Simulate one run of the configured system over [0, horizon).

    ``rng`` is a numpy Generator (an int seed is also accepted). ``trace``,
    if given, is called with one formatted line per event for differential
    debugging. Events before warmup_fraction * horizon are excluded from the
    returned Metrics (classification follows the arrival time of a request).
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    check_placement(config, placement)

    rates = per_content_rates(config)
    pop = normalized_popularity(config)
    total_rate = float(rates.sum())
    py_rng = random.Random(int(rng.integers(1 << 63)))

    times = _poisson_arrival_times(rng, total_rate, config.horizon)
    n_arr = len(times)
    cum = np.cumsum(rates)
    contents = np.searchsorted(cum, rng.random(n_arr) * cum[-1], side="right")
    if config.service_time_model == "exponential":
        end_times = times + rng.exponential(1.0, n_arr)
    else:
        end_times = times + 1.0
    req_boxes = (rng.integers(0, config.box_count, n_arr)
                 if config.network_mode == PP2PN else None)
    cu_on = config.cache_update is not None
    if cu_on:
        push_mask = rng.random(n_arr) < config.effective_epsilon() * config.box_count
        push_boxes = rng.integers(0, config.box_count, n_arr)
    else:
        push_mask = push_boxes = None

    if isinstance(config.acceptance_policy, CounterBased):
        return _run_counter(config, placement, pop, times, contents, end_times,
                            py_rng, trace, capture_final_placement)
    return _run_repacking(config, placement, pop, times, contents, end_times,
                          req_boxes, push_mask, push_boxes, py_rng, trace,
                          capture_final_placement)


def _run_repacking(config, placement, pop, times, contents, end_times,
                   req_boxes, push_mask, push_boxes, py_rng, trace, capture):
    c_total = len(pop)
    state = AssignmentState(placement, config.uplink_slots)
    policy = config.acceptance_policy
    # None = unlimited; the chain self-terminates after at most C swaps
    budget = policy.max_iterations if policy.max_iterations is not None else c_total
    warm_t = config.warmup_time
    pp2pn = config.network_mode == PP2PN
    cu_on = push_mask is not None
    storage = config.storage_per_box

    arrivals = [0] * c_total
    accepted = [0] * c_total
    rejected = [0] * c_total
    local = [0] * c_total
    diag = {"repack_invocations": 0, "repack_swaps": 0, "dropped_streams": 0,
            "cache_pushes": 0, "cache_insertions": 0, "rescued_streams": 0}

    times_l = times.tolist()
    contents_l = contents.tolist()
    ends_l = end_times.tolist()
    req_l = req_boxes.tolist() if req_boxes is not None else None
    push_m = push_mask.tolist() if cu_on else None
    push_b = push_boxes.tolist() if cu_on else None

    heap: list[tuple[float, int]] = []
    streams = state.streams
    cache_sets = state.cache_sets
    sid = 0

    for k in range(len(times_l)):
        t = times_l[k]
        while heap and heap[0][0] <= t:
            _, done = heappop(heap)
            rec = streams.get(done)
            if rec is not None:  # dropped streams were already removed
                if trace is not None:
                    trace(f"{rec[3]:.9f} completion content={rec[0]} box={rec[1]}")
                state.complete(done)
        c = contents_l[k]
        counted = t >= warm_t
        if counted:
            arrivals[c] += 1

        if cu_on and push_m[k]:
            pb = push_b[k]
            diag["cache_pushes"] += 1
            if c not in cache_sets[pb]:
                evict = state.cache_lists[pb][int(py_rng.random() * storage)]
                state.replace_cached(pb, evict, c)
                diag["cache_insertions"] += 1
                if trace is not None:
                    trace(f"{t:.9f} push content={c} box={pb} decision=evict:{evict}")
                if evict not in cache_sets[pb]:  # no duplicate copy left behind
                    rescue = orphan_rescue(state, pb, evict, budget, py_rng)
                    diag["rescued_streams"] += rescue.rescued
                    diag["repack_swaps"] += rescue.swaps
                    for _, c_lost, was_counted in rescue.dropped:
                        diag["dropped_streams"] += 1
                        if was_counted:
                            accepted[c_lost] -= 1
                            rejected[c_lost] += 1
                        elif counted:
                            # pre-warm-up stream terminated after the boundary:
                            # its fate is decided now, so it joins the counted
                            # population as a loss
                            arrivals[c_lost] += 1
                            rejected[c_lost] += 1
            elif trace is not None:
                trace(f"{t:.9f} push content={c} box={pb} decision=noop")

        if pp2pn:
            rb = req_l[k]
            if c in cache_sets[rb]:
                if counted:
                    local[c] += 1
                if trace is not None:
                    trace(f"{t:.9f} arrival content={c} box={rb} decision=local")
                continue

        box = state.select_box(c, py_rng)
        if box is not None:
            state.seat(sid, c, box, ends_l[k], counted)
            heappush(heap, (ends_l[k], sid))
            sid += 1
            if counted:
                accepted[c] += 1
            if trace is not None:
                trace(f"{t:.9f} arrival content={c} box={box} decision=accept")
            continue

        diag["repack_invocations"] += 1
        outcome = repack(state, sid, c, ends_l[k], counted, budget, py_rng)
        diag["repack_swaps"] += outcome.swaps
        if outcome.request_seated:
            heappush(heap, (ends_l[k], sid))
            if counted:
                accepted[c] += 1
            if outcome.dropped is not None:
                _, c_lost, was_counted = outcome.dropped
                diag["dropped_streams"] += 1
                if was_counted:
                    accepted[c_lost] -= 1
                    rejected[c_lost] += 1
                elif counted:
                    arrivals[c_lost] += 1
                    rejected[c_lost] += 1
            if trace is not None:
                trace(f"{t:.9f} arrival content={c} box={streams[sid][1]} "
                      f"decision=repacked")
        else:
            if counted:
                rejected[c] += 1
            if trace is not None:
                trace(f"{t:.9f} arrival content={c} box=- decision=reject")
        sid += 1

    final = state.current_placement() if capture else None
    return Metrics(np.array(arrivals, dtype=np.int64),
                   np.array(accepted, dtype=np.int64),
                   np.array(rejected, dtype=np.int64),
                   np.array(local, dtype=np.int64),
                   pop, config.horizon, warm_t, diag, final)


def _run_counter(config, placement, pop, times, contents, end_times,
                 py_rng, trace, capture):
    c_total = len(pop)
    policy = config.acceptance_policy
    fanout = policy.effective_fanout(config.storage_per_box)
    threshold = policy.eligibility_threshold(config.storage_per_box)
    warm_t = config.warmup_time
    counter_state = CounterState(config.box_count)

    arrivals = [0] * c_total
    accepted = [0] * c_total
    rejected = [0] * c_total
    diag = {"fanout": fanout, "eligibility_threshold": threshold,
            "ineligible_rejections": 0, "insufficient_holders_rejections": 0,
            "capacity_rejections": 0, "peak_counter": 0}

    times_l = times.tolist()
    contents_l = contents.tolist()
    ends_l = end_times.tolist()
    heap: list[tuple[float, int]] = []
    assigned: dict[int, tuple[int, ...]] = {}
    sid = 0

    for k in range(len(times_l)):
        t = times_l[k]
        while heap and heap[0][0] <= t:
            _, done = heappop(heap)
            counter_state.release(assigned.pop(done))
        c = contents_l[k]
        counted = t >= warm_t
        if counted:
            arrivals[c] += 1
        result = counter_based_admit(counter_state, c, placement, fanout,
                                     config.uplink_slots, py_rng,
                                     eligibility_threshold=threshold)
        if result.accepted:
            assigned[sid] = result.boxes
            heappush(heap, (ends_l[k], sid))
            sid += 1
            if counted:
                accepted[c] += 1
        else:
            if counted:
                rejected[c] += 1
                diag[f"{result.reason}_rejections"] += 1
        if trace is not None:
            verdict = "accept" if result.accepted else f"reject:{result.reason}"
            trace(f"{t:.9f} arrival content={c} box=- decision={verdict}")

    diag["peak_counter"] = counter_state.peak
    return Metrics(np.array(arrivals, dtype=np.int64),
                   np.array(accepted, dtype=np.int64),
                   np.array(rejected, dtype=np.int64),
                   np.zeros(c_total, dtype=np.int64),
                   pop, config.horizon, warm_t, diag,
                   placement if capture else None)


# --------------------------------------------------------------------------
# strategies and repeated experiments
# --------------------------------------------------------------------------

STRATEGIES = ("UNIF", "SAMP", "BERN", "CU", "HWC", "MP2P")


def effective_config(config: SystemConfig, strategy: str) -> SystemConfig:
    """Strategy-implied config adjustments (CU turns cache updates on)."""
    if strategy.upper() == "CU" and config.cache_update is None:
        return replace(config, cache_update=CacheUpdate(None))
    return config


def make_placement(config: SystemConfig, strategy: str,
                   rng: np.random.Generator) -> Placement:
    """Generate the initial placement for a named strategy."""
    s = strategy.upper()
    if s == "UNIF" or s == "CU":  # CU starts from the uniform baseline
        return placements.uniform_placement(config, rng)
    if s == "SAMP":
        return placements.sample_proportional_to_product(config, rng)
    if s == "BERN":
        cat = config.catalogue
        if not isinstance(cat, FixedCatalogue):
            raise ConfigError("BERN needs a fixed catalogue")
        if config.storage_per_box < cat.content_count:
            beta = placements.solve_beta(cat.popularity, config.storage_per_box)
        else:
            beta = 1.0  # full catalogue: every accepted draw is the full set
        return placements.bernoulli_sample_placement(config, beta, rng)
    if s == "HWC":
        cat = config.catalogue
        if not isinstance(cat, FixedCatalogue):
            raise ConfigError("HWC needs a fixed catalogue")
        wf = solve_water_filling(cat.popularity, config.load, config.storage_per_box)
        return placements.hot_warm_cold_placement(wf, config, rng)
    if s == "MP2P":
        return placements.modified_p2p_placement(config, rng)
    raise ConfigError(f"unknown strategy {strategy!r}; pick one of {STRATEGIES}")


def repetition_rng(base_seed: int, repetition: int) -> np.random.Generator:
    """Documented seed derivation: SeedSequence([base_seed, repetition])."""
    return np.random.default_rng(
        np.random.SeedSequence([base_seed & (2 ** 64 - 1), repetition]))


def _run_repetition(config: SystemConfig, strategy: str, base_seed: int,
                    repetition: int) -> Metrics:
    cfg = effective_config(config, strategy)
    rng = repetition_rng(base_seed, repetition)
    pl = make_placement(cfg, strategy, rng)
    return run_simulation(cfg, pl, rng)


@dataclass
class ExperimentResult:
    """Mean/stdev aggregate over independent repetitions of one scenario."""

    config: SystemConfig
    strategy: str
    repetitions: int
    base_seed: int
    stats: dict[str, tuple[float, float]]
    mean_per_content_loss: np.ndarray
    runs: list[Metrics] | None = None

    def mean(self, name: str) -> float:
        return self.stats[name][0]

    def stdev(self, name: str) -> float:
        return self.stats[name][1]


def run_experiment(config: SystemConfig, strategy: str, repetitions: int | None = None,
                   base_seed: int | None = None, *, jobs: int = 1,
                   keep_runs: bool = False) -> ExperimentResult:
    """Average ``repetitions`` independent runs (fresh placement per run).

    Repetition r derives its generator from SeedSequence([base_seed, r]), so
    results are identical for any ``jobs``; aggregation reduces in repetition
    order. Sample standard deviation (ddof=1) is reported, 0.0 for a single
    repetition.
    """
    reps = repetitions if repetitions is not None else config.repetitions
    seed = base_seed if base_seed is not None else config.rng_seed
    if jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_repetition, [config] * reps, [strategy] * reps,
                                 [seed] * reps, range(reps)))
    else:
        runs = [_run_repetition(config, strategy, seed, r) for r in range(reps)]

    names = runs[0].scalar_stats().keys()
    table = {name: np.array([run.scalar_stats()[name] for run in runs]) for name in names}
    stats = {name: (float(vals.mean()),
                    float(vals.std(ddof=1)) if reps > 1 else 0.0)
             for name, vals in table.items()}
    mean_loss = np.mean([run.per_content_loss for run in runs], axis=0)
    return ExperimentResult(config, strategy.upper(), reps, seed, stats,
                            mean_loss, runs if keep_runs else None)

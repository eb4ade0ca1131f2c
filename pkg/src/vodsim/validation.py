"""Oracle cross-checks: independent routes to the same answers.

Each report function returns a dict with a boolean ``passed`` plus measured
discrepancies; the CLI ``validate`` command prints them and the test suite
asserts on them. These routines are deliberately slow and exhaustive.
"""

from __future__ import annotations

import itertools
import math
from typing import Iterator

import numpy as np
from scipy.optimize import linprog

from .analysis import WaterFilling, erlang_b, exact_ctmc_loss, solve_water_filling
from .core import FixedCatalogue, Placement, SystemConfig
from .engine import run_simulation
from .feasibility import is_feasible_hall, is_feasible_matching
from .placement import cache_update_step, product_form_distribution


# --------------------------------------------------------------------------
# Hall vs max-flow equivalence
# --------------------------------------------------------------------------

def _bounded_vectors(length: int, total: int) -> Iterator[tuple[int, ...]]:
    """All nonnegative integer vectors of given length with sum <= total."""
    if length == 1:
        for i in range(total + 1):
            yield (i,)
        return
    for i in range(total + 1):
        for rest in _bounded_vectors(length - 1, total - i):
            yield (i,) + rest


def hall_equivalence_report(max_contents: int = 4, max_boxes: int = 4,
                            max_uplinks: int = 2, random_instances: int = 10_000,
                            max_random_contents: int = 6,
                            seed: int = 0) -> dict:
    """Exhaustive sweep of tiny instances plus random larger ones.

    Placements are enumerated up to box order (both feasibility tests depend
    only on the multiset of cache sets; a spot permutation check below guards
    that argument). Request vectors run over all sums <= B*U, beyond which
    both tests reject via the full-catalogue cut.
    """
    instances = 0
    mismatches = 0
    examples: list = []

    for c_total in range(1, max_contents + 1):
        for b_total in range(1, max_boxes + 1):
            for uplinks in range(1, max_uplinks + 1):
                for m in range(1, c_total + 1):
                    subsets = list(itertools.combinations(range(c_total), m))
                    for caches in itertools.combinations_with_replacement(subsets, b_total):
                        pl = Placement(caches, c_total)
                        for n in _bounded_vectors(c_total, b_total * uplinks):
                            vec = np.array(n, dtype=np.int64)
                            instances += 1
                            a = is_feasible_matching(vec, pl, uplinks)
                            b = is_feasible_hall(vec, pl, uplinks)
                            if a != b:
                                mismatches += 1
                                if len(examples) < 5:
                                    examples.append((caches, uplinks, n, a, b))

    rng = np.random.default_rng(seed)
    for _ in range(random_instances):
        c_total = int(rng.integers(2, max_random_contents + 1))
        b_total = int(rng.integers(1, 7))
        uplinks = int(rng.integers(1, 4))
        m = int(rng.integers(1, c_total + 1))
        caches = [rng.choice(c_total, size=m, replace=False) for _ in range(b_total)]
        pl = Placement(caches, c_total)
        # bias toward the feasibility boundary, allow slightly infeasible sums
        total = int(rng.integers(0, b_total * uplinks + 3))
        cuts = np.sort(rng.integers(0, total + 1, size=c_total - 1))
        vec = np.diff(np.concatenate([[0], cuts, [total]])).astype(np.int64)
        instances += 1
        a = is_feasible_matching(vec, pl, uplinks)
        b = is_feasible_hall(vec, pl, uplinks)
        if a != b:
            mismatches += 1
            if len(examples) < 5:
                examples.append((tuple(map(tuple, caches)), uplinks, tuple(vec), a, b))

    # box-permutation spot check backing the multiset enumeration argument
    rng2 = np.random.default_rng(seed + 1)
    permutation_mismatches = 0
    for _ in range(200):
        c_total = int(rng2.integers(2, 5))
        b_total = int(rng2.integers(2, 5))
        uplinks = int(rng2.integers(1, 3))
        m = int(rng2.integers(1, c_total + 1))
        caches = [rng2.choice(c_total, size=m, replace=False) for _ in range(b_total)]
        vec = rng2.integers(0, uplinks + 1, size=c_total).astype(np.int64)
        pl = Placement(caches, c_total)
        shuffled = Placement([caches[i] for i in rng2.permutation(b_total)], c_total)
        if (is_feasible_matching(vec, pl, uplinks) != is_feasible_matching(vec, shuffled, uplinks)
                or is_feasible_hall(vec, pl, uplinks) != is_feasible_hall(vec, shuffled, uplinks)):
            permutation_mismatches += 1

    return {
        "passed": mismatches == 0 and permutation_mismatches == 0,
        "instances": instances,
        "mismatches": mismatches,
        "permutation_mismatches": permutation_mismatches,
        "examples": examples,
    }


# --------------------------------------------------------------------------
# simulator vs exact stationary law
# --------------------------------------------------------------------------

def ctmc_report(seeds: int = 20, horizon: float = 500.0) -> dict:
    """Single-content two-box system: simulated blocking vs the exact law.

    The instance (C=1, B=2, U=2, rate 3) collapses to a 4-server Erlang
    system, so the CTMC oracle must equal erlang_b(3, 4) and the simulator
    must agree within 3 standard errors across seeds.
    """
    box_count, uplinks, rate = 2, 2, 3.0
    config = SystemConfig(
        box_count=box_count, storage_per_box=1, uplink_slots=uplinks,
        load=rate / (box_count * uplinks),
        catalogue=FixedCatalogue(1, np.array([1.0])),
        horizon=horizon)
    pl = Placement([[0]] * box_count, 1)
    exact = float(exact_ctmc_loss(config, pl)[0])
    reference = erlang_b(rate, box_count * uplinks)
    sims = np.array([
        run_simulation(config, pl, np.random.default_rng([7, s])).rejection_fraction
        for s in range(seeds)])
    se = float(sims.std(ddof=1) / math.sqrt(seeds))
    gap = abs(float(sims.mean()) - exact)
    return {
        "passed": abs(exact - reference) < 1e-12 and gap <= 3 * se,
        "exact": exact,
        "erlang": reference,
        "simulated_mean": float(sims.mean()),
        "standard_error": se,
        "gap": gap,
        "seeds": seeds,
    }


# --------------------------------------------------------------------------
# cache-update chain vs product form
# --------------------------------------------------------------------------

def product_form_report(steps: int = 1_000_000, content_count: int = 5,
                        storage_per_box: int = 2, seed: int = 0,
                        tolerance: float = 0.05) -> dict:
    """Drive one cache with popularity-distributed pushes and compare the
    time-averaged state law against the exact product form.

    Push attempts arrive at a state-independent rate, so sampling after every
    attempt (no-ops included) is a uniformized chain whose occupation law
    converges to the stationary distribution of the update process.
    """
    catalogue = FixedCatalogue.zipf(content_count, 0.8)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(catalogue.popularity)
    pushes = np.searchsorted(cum, rng.random(steps) * cum[-1], side="right")
    pl = Placement([list(range(storage_per_box))], content_count)
    counts: dict[frozenset, int] = {}
    for c in pushes.tolist():
        pl = cache_update_step(pl, 0, c, rng)
        key = frozenset(pl.caches[0])
        counts[key] = counts.get(key, 0) + 1
    exact = product_form_distribution(catalogue.popularity, storage_per_box).as_dict()
    tv = 0.5 * sum(abs(counts.get(state, 0) / steps - p) for state, p in exact.items())
    tv += 0.5 * sum(v / steps for state, v in counts.items() if state not in exact)
    return {
        "passed": tv <= tolerance,
        "total_variation": tv,
        "tolerance": tolerance,
        "steps": steps,
        "observed_states": len(counts),
    }


# --------------------------------------------------------------------------
# water filling vs LP oracle
# --------------------------------------------------------------------------

def lp_solve_allocation(popularity: np.ndarray, load: float,
                        storage_per_box: int) -> float:
    """Generic-LP optimum of the cache/bandwidth program (test oracle)."""
    pop = np.asarray(popularity, dtype=float)
    c = len(pop)
    rho = load * pop
    # variables: [cache fractions, bandwidth shares, served loads]
    cost = np.concatenate([-rho, np.zeros(c), -np.ones(c)])
    rows = []
    rhs = []
    eye = np.eye(c)
    zero = np.zeros((c, c))
    rows.append(np.hstack([-eye, eye, zero]))          # share <= cache
    rhs.extend([0.0] * c)
    rows.append(np.hstack([zero, -eye, eye]))          # served <= share
    rhs.extend([0.0] * c)
    rows.append(np.hstack([np.diag(rho), zero, eye]))  # served <= rho (1 - cache)
    rhs.extend(rho.tolist())
    rows.append(np.concatenate([np.zeros(c), np.ones(c), np.zeros(c)])[None, :])
    rhs.append(1.0)                                    # total bandwidth
    a_ub = np.vstack(rows)
    a_eq = np.concatenate([np.ones(c), np.zeros(2 * c)])[None, :]
    bounds = [(0.0, 1.0)] * c + [(0.0, None)] * (2 * c)
    res = linprog(cost, A_ub=a_ub, b_ub=np.asarray(rhs), A_eq=a_eq,
                  b_eq=[float(storage_per_box)], bounds=bounds, method="highs")
    if not res.success:
        raise RuntimeError(f"LP oracle failed: {res.message}")
    return -float(res.fun)


def check_water_filling_constraints(wf: WaterFilling, storage_per_box: int,
                                    tol: float = 1e-9) -> list[str]:
    """Names of violated program constraints (empty when clean)."""
    bad = []
    m, lam, x, rho = wf.cache_fraction, wf.bandwidth_share, wf.served_load, wf.per_content_load
    if np.any(m < -tol) or np.any(m > 1 + tol):
        bad.append("cache fraction out of [0, 1]")
    if np.any(lam < -tol) or np.any(lam > m + tol):
        bad.append("bandwidth share above cache fraction")
    if np.any(x < -tol) or np.any(x > lam + tol):
        bad.append("served load above bandwidth share")
    if np.any(x > rho * (1 - m) + tol):
        bad.append("served load above residual demand")
    if lam.sum() > 1 + tol:
        bad.append("total bandwidth above 1")
    if m.sum() > storage_per_box + tol:
        bad.append("total cache above storage")
    return bad


def water_filling_lp_report(instances: int = 100, max_contents: int = 12,
                            seed: int = 0, tolerance: float = 1e-9) -> dict:
    """Closed form vs LP objective on random instances, constraints included."""
    rng = np.random.default_rng(seed)
    worst_gap = 0.0
    violations: list[str] = []
    for _ in range(instances):
        c_total = int(rng.integers(2, max_contents + 1))
        m = int(rng.integers(1, c_total + 1))
        pop = np.sort(rng.dirichlet(np.ones(c_total)))[::-1]
        pop = pop / pop.sum()
        load = float(10.0 ** rng.uniform(-1.3, 1.3))
        wf = solve_water_filling(pop, load, m)
        lp_obj = lp_solve_allocation(pop, load, m)
        worst_gap = max(worst_gap, abs(wf.objective - lp_obj))
        violations.extend(check_water_filling_constraints(wf, m))
        if abs(wf.objective - wf.absorbed_load) > 1e-9:
            violations.append("objective differs from absorbed-load bound")
    return {
        "passed": worst_gap < tolerance and not violations,
        "instances": instances,
        "max_objective_gap": worst_gap,
        "constraint_violations": violations,
    }


SUITES = {
    "hall": hall_equivalence_report,
    "ctmc": ctmc_report,
    "product-form": product_form_report,
    "lp": water_filling_lp_report,
}

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vodsim.analysis import (erlang_b, exact_ctmc_loss, large_catalogue_loss_floor,
                             optimal_loss, solve_water_filling)
from vodsim.core import (CapacityError, ConfigError, FixedCatalogue, Placement,
                         SystemConfig)
from vodsim.validation import check_water_filling_constraints, lp_solve_allocation


def erlang_direct(load: float, capacity: int) -> float:
    """Independent oracle: exact rational evaluation of the defining sum."""
    v = Fraction(load)
    terms = [v ** n / math.factorial(n) for n in range(capacity + 1)]
    return float(terms[-1] / sum(terms))


class TestErlangB:
    def test_worked_values(self):
        assert erlang_b(1.0, 1) == pytest.approx(0.5, abs=1e-15)
        assert erlang_b(2.0, 2) == pytest.approx(0.4, abs=1e-15)
        assert erlang_b(1.0, 0) == 1.0

    @given(load=st.floats(0.05, 50.0), capacity=st.integers(0, 100))
    @settings(max_examples=80, deadline=None)
    def test_recurrence_matches_direct_sum(self, load, capacity):
        assert erlang_b(load, capacity) == pytest.approx(
            erlang_direct(load, capacity), abs=1e-12)

    def test_monotone_in_capacity(self):
        values = [erlang_b(3.0, k) for k in range(12)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_rejects_bad_input(self):
        with pytest.raises(ConfigError):
            erlang_b(0.0, 3)
        with pytest.raises(ConfigError):
            erlang_b(1.0, -1)


class TestOptimalLoss:
    def test_values(self):
        assert optimal_loss(0.5) == 0.0
        assert optimal_loss(1.0) == 0.0
        assert optimal_loss(2.0) == 0.5

    @given(a=st.floats(0.01, 50), b=st.floats(0.01, 50))
    @settings(max_examples=50, deadline=None)
    def test_nondecreasing(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert optimal_loss(lo) <= optimal_loss(hi) + 1e-15


class TestWaterFilling:
    def test_worked_example(self):
        wf = solve_water_filling(np.array([0.4, 0.3, 0.2, 0.1]), 10.0, 2)
        assert wf.hot_count == 1
        assert wf.cache_fraction == pytest.approx([1.0, 0.75, 0.25, 0.0], abs=1e-12)
        assert wf.threshold_rank == 2
        assert wf.absorbed_load == pytest.approx(7.75, abs=1e-12)
        assert wf.absorbed_fraction == pytest.approx(0.775, abs=1e-12)
        assert wf.objective == pytest.approx(wf.absorbed_load, abs=1e-12)
        assert list(wf.warm_ranks()) == [2, 3]

    def test_storage_equals_catalogue(self):
        pop = np.array([0.5, 0.3, 0.2])
        load = 2.0
        wf = solve_water_filling(pop, load, 3)
        # hot 1..M-1; the last content water-fills within budget, catalogue exhausted
        rho_last = load * pop[-1]
        assert wf.cache_fraction[:2] == pytest.approx([1.0, 1.0])
        assert wf.cache_fraction[2] == pytest.approx(rho_last / (1 + rho_last))
        assert wf.threshold_rank == 3
        assert wf.absorbed_load == pytest.approx(load)

    def test_vanishing_load_absorbs_everything(self):
        pop = np.array([0.4, 0.3, 0.2, 0.1])
        wf = solve_water_filling(pop, 1e-6, 2)
        rho = 1e-6 * pop
        assert wf.cache_fraction[1:] == pytest.approx(rho[1:], rel=1e-5)
        assert wf.absorbed_load == pytest.approx(rho.sum(), rel=1e-9)

    def test_huge_load_first_warm_monopolizes(self):
        pop = np.array([0.4, 0.3, 0.2, 0.1])
        wf = solve_water_filling(pop, 1e7, 2)
        assert wf.threshold_rank == 2
        assert wf.cache_fraction[1] == pytest.approx(1.0, abs=1e-6)
        assert wf.cache_fraction[2] == pytest.approx(0.0, abs=1e-6)

    def test_single_slot_storage_has_no_hot_band(self):
        wf = solve_water_filling(np.array([0.6, 0.4]), 3.0, 1)
        assert wf.hot_count == 0
        assert wf.cache_fraction[0] == pytest.approx(1.8 / 2.8)

    def test_matches_lp_on_small_batch(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            c = int(rng.integers(2, 9))
            m = int(rng.integers(1, c + 1))
            pop = np.sort(rng.dirichlet(np.ones(c)))[::-1]
            load = float(10 ** rng.uniform(-1, 1.2))
            wf = solve_water_filling(pop, load, m)
            assert abs(wf.objective - lp_solve_allocation(pop, load, m)) < 1e-9
            assert not check_water_filling_constraints(wf, m)
            assert 0.0 <= wf.absorbed_fraction <= 1.0 + 1e-12

    def test_rejects_unsorted_popularity(self):
        with pytest.raises(ConfigError):
            solve_water_filling(np.array([0.2, 0.8]), 1.0, 1)


class TestLargeCatalogueFloor:
    def test_worked_value(self):
        # M'=2, E(1,2) = 0.2
        assert large_catalogue_loss_floor(1, 1.0, 1.0, 1) == pytest.approx(0.1, abs=1e-12)

    def test_vanishes_for_large_storage(self):
        assert large_catalogue_loss_floor(200, 1.0, 1.0, 1) < 1e-12

    def test_nonincreasing_in_storage(self):
        vals = [large_catalogue_loss_floor(m, 2.0, 0.5, 2) for m in range(1, 30)]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))

    def test_rejects_bad_input(self):
        with pytest.raises(ConfigError):
            large_catalogue_loss_floor(1, 1.0, 1.0, 0)


def tiny_config(rates, box_count, uplink_slots, storage):
    rates = np.asarray(rates, dtype=float)
    pop = rates / rates.sum()
    load = rates.sum() / (box_count * uplink_slots)
    return SystemConfig(box_count=box_count, storage_per_box=storage,
                        uplink_slots=uplink_slots, load=load,
                        catalogue=FixedCatalogue(len(rates), pop))


class TestExactCtmc:
    def test_single_server_is_erlang(self):
        cfg = tiny_config([1.0], 1, 1, 1)
        loss = exact_ctmc_loss(cfg, Placement([[0]], 1))
        assert loss[0] == pytest.approx(0.5, abs=1e-12)

    def test_shared_box_two_contents(self):
        cfg = tiny_config([1.0, 1.0], 1, 1, 2)
        loss = exact_ctmc_loss(cfg, Placement([[0, 1]], 2))
        assert loss == pytest.approx([2 / 3, 2 / 3], abs=1e-12)

    def test_vanishing_load(self):
        cfg = tiny_config([1e-8, 1e-8], 1, 1, 2)
        loss = exact_ctmc_loss(cfg, Placement([[0, 1]], 2))
        assert np.all(loss < 1e-6)

    def test_erlang_equivalence_random_single_resource(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            b = int(rng.integers(1, 4))
            u = int(rng.integers(1, 4))
            rate = float(rng.uniform(0.3, 2.0) * b * u)
            cfg = tiny_config([rate], b, u, 1)
            loss = exact_ctmc_loss(cfg, Placement([[0]] * b, 1))
            assert loss[0] == pytest.approx(erlang_b(rate, b * u), abs=1e-12)

    def test_capacity_guard(self):
        cfg = tiny_config([1.0] * 6, 30, 3, 3)
        pl = Placement([[0, 1, 2], [3, 4, 5]] * 15, 6)
        with pytest.raises(CapacityError):
            exact_ctmc_loss(cfg, pl)

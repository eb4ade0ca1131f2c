import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vodsim.core import (ClassCatalogue, ConfigError, ContentClass, FixedCatalogue,
                         Placement, SystemConfig, CacheUpdate, CounterBased,
                         Repacking, check_placement, config_from_mapping,
                         config_to_mapping, normalized_popularity,
                         parse_config_text, per_content_rates, zipf_popularity)


def default_config(**overrides):
    base = dict(box_count=4, storage_per_box=2, uplink_slots=2, load=1.0,
                catalogue=FixedCatalogue.zipf(10, 0.8))
    base.update(overrides)
    return SystemConfig(**base)


class TestZipfPopularity:
    def test_worked_values(self):
        # direct evaluation: weights 1, 2^-0.8, 3^-0.8 normalized
        pop = zipf_popularity(3, 0.8)
        assert pop == pytest.approx((0.5026, 0.2887, 0.2087), abs=1e-3)
        assert pop.sum() == pytest.approx(1.0, abs=1e-12)

    def test_vanishing_exponent_is_uniform(self):
        pop = zipf_popularity(4, 1e-9)
        assert pop == pytest.approx([0.25] * 4, abs=1e-6)

    def test_two_contents_alpha_one(self):
        assert zipf_popularity(2, 1.0) == pytest.approx([2 / 3, 1 / 3], abs=1e-12)

    @given(c=st.integers(2, 40), alpha=st.floats(0.05, 3.0),
           shift=st.floats(0.0, 5.0))
    @settings(max_examples=60, deadline=None)
    def test_strictly_decreasing_and_normalized(self, c, alpha, shift):
        pop = zipf_popularity(c, alpha, shift)
        assert np.all(np.diff(pop) < 0)
        assert abs(pop.sum() - 1.0) < 1e-12

    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigError):
            zipf_popularity(0, 0.8)
        with pytest.raises(ConfigError):
            zipf_popularity(5, 0.0)
        with pytest.raises(ConfigError):
            zipf_popularity(5, 0.8, -1.0)


class TestPerContentRates:
    def test_direct_product(self):
        cfg = default_config(box_count=2, uplink_slots=4, storage_per_box=2,
                             catalogue=FixedCatalogue(2, np.array([0.5, 0.5])))
        assert per_content_rates(cfg) == pytest.approx([4.0, 4.0])

    def test_uniform_paper_scale(self):
        cfg = default_config(box_count=4000, uplink_slots=4, storage_per_box=10,
                             catalogue=FixedCatalogue(500, np.full(500, 1 / 500)))
        assert per_content_rates(cfg) == pytest.approx(np.full(500, 32.0))

    def test_class_catalogue_rates_and_load_identity(self):
        cat = ClassCatalogue((ContentClass(1.0, 2.0), ContentClass(2.0, 1.0)))
        cfg = default_config(box_count=100, uplink_slots=4, storage_per_box=2,
                             load=1.0, catalogue=cat)
        rates = per_content_rates(cfg)
        assert len(rates) == 300  # 100 + 200 contents
        assert rates[:100] == pytest.approx(np.full(100, 2.0))
        assert rates[100:] == pytest.approx(np.full(200, 1.0))
        # totals match load * B * U exactly for integral class sizes
        assert rates.sum() == pytest.approx(1.0 * 100 * 4, abs=1e-9)

    @given(c=st.integers(1, 30), alpha=st.floats(0.1, 2.0),
           b=st.integers(1, 50), u=st.integers(1, 4),
           load=st.floats(0.1, 4.0))
    @settings(max_examples=40, deadline=None)
    def test_renormalization_round_trip(self, c, alpha, b, u, load):
        cfg = default_config(box_count=b, uplink_slots=u, load=load,
                             storage_per_box=1,
                             catalogue=FixedCatalogue.zipf(c, alpha))
        rates = per_content_rates(cfg)
        back = rates / rates.sum()
        assert np.max(np.abs(back - cfg.catalogue.popularity)) < 1e-12

    def test_class_realization_counts(self):
        cat = ClassCatalogue((ContentClass(0.3, 1.0), ContentClass(1.7, 2.0)))
        counts = cat.realized_counts(10)
        assert counts.tolist() == [3, 17]
        assert counts.sum() == 20


class TestSystemConfigValidation:
    def test_storage_must_fit_catalogue(self):
        with pytest.raises(ConfigError):
            default_config(storage_per_box=11)

    def test_epsilon_bound(self):
        with pytest.raises(ConfigError):
            default_config(cache_update=CacheUpdate(0.5), box_count=4)
        # epsilon * B == 1 is allowed
        default_config(cache_update=CacheUpdate(0.25), box_count=4)

    def test_class_load_identity_enforced(self):
        cat = ClassCatalogue((ContentClass(1.0, 2.0),))
        with pytest.raises(ConfigError):
            default_config(catalogue=cat, uplink_slots=2, load=0.9)
        default_config(catalogue=cat, uplink_slots=2, load=1.0)

    def test_warmup_range(self):
        with pytest.raises(ConfigError):
            default_config(warmup_fraction=1.0)
        cfg = default_config(warmup_fraction=0.0)
        assert cfg.warmup_time == 0.0

    def test_counter_policy_preconditions(self):
        with pytest.raises(ConfigError):
            default_config(acceptance_policy=CounterBased())
        cat = ClassCatalogue((ContentClass(1.0, 2.0),))
        cfg = default_config(catalogue=cat, uplink_slots=2, load=1.0,
                             acceptance_policy=CounterBased())
        assert cfg.acceptance_policy.effective_fanout(16) == 2
        assert cfg.acceptance_policy.eligibility_threshold(4) == 3

    def test_pp2pn_excludes_cache_update(self):
        with pytest.raises(ConfigError):
            default_config(network_mode="PP2PN", cache_update=CacheUpdate())

    def test_effective_epsilon_default_is_one_push_per_request(self):
        cfg = default_config(cache_update=CacheUpdate())
        assert cfg.effective_epsilon() * cfg.box_count == pytest.approx(1.0)


class TestPlacement:
    def test_indices_consistent(self):
        pl = Placement([[0, 1], [1, 2]], 3)
        assert pl.replica_count.tolist() == [1, 2, 1]
        assert pl.holders == [[0], [0, 1], [1]]

    def test_rejects_duplicates_unless_allowed(self):
        with pytest.raises(ValueError):
            Placement([[1, 1]], 3)
        pl = Placement([[1, 1]], 3, allow_duplicate_slots=True)
        assert pl.replica_count.tolist() == [0, 2, 0]
        assert pl.holders[1] == [0]

    def test_rejects_unknown_content(self):
        with pytest.raises(ValueError):
            Placement([[0, 3]], 3)

    def test_table_round_trip(self):
        pl = Placement([[0, 2], [1, 2], [0, 1]], 4)
        again = Placement.from_table(pl.to_table(), 4)
        assert again == pl

    def test_check_placement(self):
        cfg = default_config()
        check_placement(cfg, Placement([[0, 1]] * 4, 10))
        with pytest.raises(ConfigError):
            check_placement(cfg, Placement([[0, 1]] * 3, 10))
        with pytest.raises(ConfigError):
            check_placement(cfg, Placement([[0, 1, 2]] * 4, 10))


CONFIG_TEXT = """
# scenario
box_count = 8
storage_per_box = 2
uplink_slots = 2
load = 1.25
catalogue = fixed
content_count = 6
zipf_alpha = 0.5
network_mode = DSN
acceptance_policy = repacking
t_r_max = 1
service_time_model = deterministic
warmup_fraction = 0.1
repetitions = 3
horizon = 5.0
cache_update = on
cache_update_epsilon = 0.125
rng_seed = 7
"""


class TestConfigFile:
    def test_parse_full_document(self):
        cfg = parse_config_text(CONFIG_TEXT)
        assert cfg.box_count == 8
        assert cfg.load == 1.25
        assert cfg.acceptance_policy == Repacking(1)
        assert cfg.service_time_model == "deterministic"
        assert cfg.cache_update.epsilon == 0.125
        assert cfg.catalogue.content_count == 6

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match=r"line 3: unknown key 'frobnicate'"):
            parse_config_text("box_count = 4\nstorage_per_box = 1\nfrobnicate = 2\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("box_count = 4\nbox_count = 5\n")

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="missing required"):
            parse_config_text("box_count = 4\n")

    def test_classes_document(self):
        text = ("box_count = 10\nstorage_per_box = 2\nuplink_slots = 2\n"
                "load = 2.0\ncatalogue = classes\nclasses = 1:2, 2:1\n"
                "acceptance_policy = counter\ncounter_fanout = 2\n")
        cfg = parse_config_text(text)
        assert isinstance(cfg.catalogue, ClassCatalogue)
        assert cfg.acceptance_policy.fanout == 2

    def test_mapping_round_trip(self):
        cfg = parse_config_text(CONFIG_TEXT)
        again = config_from_mapping(config_to_mapping(cfg))
        assert again.box_count == cfg.box_count
        assert again.acceptance_policy == cfg.acceptance_policy
        assert np.allclose(again.catalogue.popularity, cfg.catalogue.popularity)

    def test_mixed_keys_rejected(self):
        text = ("box_count = 4\nstorage_per_box = 1\nuplink_slots = 1\nload = 1.0\n"
                "catalogue = fixed\ncontent_count = 4\nclasses = 1:1\n")
        with pytest.raises(ConfigError, match="classes"):
            parse_config_text(text)

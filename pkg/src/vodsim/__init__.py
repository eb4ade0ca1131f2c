"""Loss-network simulator and content-placement optimization toolkit for
peer-to-peer video-on-demand systems."""

from .analysis import (WaterFilling, erlang_b, exact_ctmc_loss,
                       large_catalogue_loss_floor, optimal_loss,
                       solve_water_filling)
from .core import (CacheUpdate, CapacityError, ClassCatalogue, ConfigError,
                   ContentClass, CounterBased, FixedCatalogue, Placement,
                   Repacking, SamplingRetryError, SystemConfig, load_config,
                   normalized_popularity, parse_config_text, per_content_rates,
                   zipf_popularity)
from .engine import (CounterState, ExperimentResult, Metrics, counter_based_admit,
                     make_placement, repetition_rng, run_experiment, run_simulation)
from .feasibility import (AssignmentState, RepackOutcome, RescueOutcome,
                          is_feasible_hall, is_feasible_matching, orphan_rescue,
                          repack, select_box)
from .placement import (CacheStateDistribution, bernoulli_sample_placement,
                        cache_update_step, hot_warm_cold_placement,
                        modified_p2p_placement, product_form_distribution,
                        sample_proportional_to_product, solve_beta,
                        uniform_placement)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

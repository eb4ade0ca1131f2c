"""Domain types shared by the simulator and the analytical toolkit.

Contents are indexed 0..C-1 throughout the package (rank order: index 0 is
the most popular content when a popularity law is used). Boxes are indexed
0..B-1. Request vectors are plain integer numpy arrays indexed by content.
All types defined here are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ConfigError(ValueError):
    """Invalid scenario configuration."""


class CapacityError(RuntimeError):
    """An exact oracle was asked for an instance beyond its guard rail."""


class SamplingRetryError(RuntimeError):
    """A rejection-sampling placement generator exceeded its retry cap."""


# --------------------------------------------------------------------------
# popularity / catalogue models
# --------------------------------------------------------------------------

def zipf_popularity(content_count: int, alpha: float = 0.8, shift: float = 0.0) -> np.ndarray:
    """Normalized zipf-like popularity: weight(c) ~ (shift + rank)^-alpha.

    Ranks run 1..content_count, so the returned vector is strictly
    decreasing and sums to 1.
    """
    if content_count < 1:
        raise ConfigError(f"content_count must be >= 1, got {content_count}")
    if alpha <= 0:
        raise ConfigError(f"zipf alpha must be > 0, got {alpha}")
    if shift < 0:
        raise ConfigError(f"zipf shift must be >= 0, got {shift}")
    ranks = np.arange(1, content_count + 1, dtype=float)
    weights = (shift + ranks) ** (-alpha)
    pop = weights / weights.sum()
    pop.setflags(write=False)
    return pop


@dataclass(frozen=True)
class FixedCatalogue:
    """A fixed content set with explicit normalized popularity."""

    content_count: int
    popularity: np.ndarray

    def __post_init__(self):
        if self.content_count < 1:
            raise ConfigError("content_count must be >= 1")
        pop = np.asarray(self.popularity, dtype=float)
        if pop.shape != (self.content_count,):
            raise ConfigError(
                f"popularity has length {pop.shape}, expected ({self.content_count},)")
        if not np.all(pop > 0):
            raise ConfigError("all popularity entries must be > 0")
        if abs(pop.sum() - 1.0) > 1e-12:
            raise ConfigError(f"popularity must sum to 1 (got {pop.sum()!r})")
        pop = pop.copy()
        pop.setflags(write=False)
        object.__setattr__(self, "popularity", pop)

    @classmethod
    def zipf(cls, content_count: int, alpha: float = 0.8, shift: float = 0.0) -> "FixedCatalogue":
        return cls(content_count, zipf_popularity(content_count, alpha, shift))


@dataclass(frozen=True)
class ContentClass:
    """One popularity class of the large-catalogue model.

    ``size_factor`` scales the class size with the box population (the class
    holds ceil(size_factor * B) contents); ``per_content_rate`` is the Poisson
    request rate of every content in the class.
    """

    size_factor: float
    per_content_rate: float

    def __post_init__(self):
        if self.size_factor <= 0:
            raise ConfigError("class size_factor must be > 0")
        if self.per_content_rate <= 0:
            raise ConfigError("class per_content_rate must be > 0")


@dataclass(frozen=True)
class ClassCatalogue:
    """Catalogue whose size scales with the box population."""

    classes: tuple[ContentClass, ...]

    def __post_init__(self):
        if not self.classes:
            raise ConfigError("at least one content class required")
        object.__setattr__(self, "classes", tuple(self.classes))

    def implied_load(self, uplink_slots: int) -> float:
        """System load implied by the class definition (ideal, pre-rounding)."""
        return sum(k.size_factor * k.per_content_rate for k in self.classes) / uplink_slots

    def total_size_factor(self) -> float:
        return sum(k.size_factor for k in self.classes)

    def realized_counts(self, box_count: int) -> np.ndarray:
        """Contents per class for a given box population (ceiling rounding)."""
        return np.array([math.ceil(k.size_factor * box_count) for k in self.classes],
                        dtype=np.int64)

    def realize(self, box_count: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-content (rate, class index) arrays, classes laid out contiguously."""
        counts = self.realized_counts(box_count)
        rates = np.repeat([k.per_content_rate for k in self.classes], counts)
        class_index = np.repeat(np.arange(len(self.classes)), counts)
        return rates, class_index


# --------------------------------------------------------------------------
# policies
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Repacking:
    """Admission by most-idle-box selection plus the iterative repacking heuristic.

    ``max_iterations`` bounds the number of stream swaps per repacking episode;
    None means unlimited (the algorithm self-terminates after at most C swaps).
    """

    max_iterations: int | None = None

    def __post_init__(self):
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0 or None")


@dataclass(frozen=True)
class CounterBased:
    """Admission by associating each request with ``fanout`` holder boxes.

    A request is rejected unless all sampled counters stay <= fanout * U.
    ``fanout`` of None derives max(1, floor(M ** 0.25)) at run time. Contents
    replicated fewer than ceil(M ** eligibility_exponent) times are never
    served.
    """

    fanout: int | None = None
    eligibility_exponent: float = 0.75

    def __post_init__(self):
        if self.fanout is not None and self.fanout < 1:
            raise ConfigError("counter fanout must be >= 1 or None")
        if not (0 < self.eligibility_exponent <= 1):
            raise ConfigError("eligibility_exponent must be in (0, 1]")

    def effective_fanout(self, storage_per_box: int) -> int:
        if self.fanout is not None:
            return self.fanout
        return max(1, int(storage_per_box ** 0.25))

    def eligibility_threshold(self, storage_per_box: int) -> int:
        return math.ceil(storage_per_box ** self.eligibility_exponent)


@dataclass(frozen=True)
class CacheUpdate:
    """Demand-driven cache update; epsilon of None means 1/B (one push per request)."""

    epsilon: float | None = None

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon <= 0:
            raise ConfigError("cache update epsilon must be > 0")


DSN = "DSN"
PP2PN = "PP2PN"

_SERVICE_MODELS = ("exponential", "deterministic")


@dataclass(frozen=True)
class SystemConfig:
    """Complete scenario description. Immutable; hashable except for catalogue arrays."""

    box_count: int
    storage_per_box: int
    uplink_slots: int
    load: float
    catalogue: FixedCatalogue | ClassCatalogue
    network_mode: str = DSN
    acceptance_policy: Repacking | CounterBased = field(default_factory=Repacking)
    service_time_model: str = "exponential"
    warmup_fraction: float = 0.2
    repetitions: int = 10
    horizon: float = 10.0
    cache_update: CacheUpdate | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.box_count < 1:
            raise ConfigError("box_count must be >= 1")
        if self.storage_per_box < 1:
            raise ConfigError("storage_per_box must be >= 1")
        if self.uplink_slots < 1:
            raise ConfigError("uplink_slots must be >= 1")
        if self.load <= 0:
            raise ConfigError("load must be > 0")
        if not (0 <= self.warmup_fraction < 1):
            raise ConfigError("warmup_fraction must be in [0, 1)")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.horizon <= 0:
            raise ConfigError("horizon must be > 0")
        if self.network_mode not in (DSN, PP2PN):
            raise ConfigError(f"network_mode must be DSN or PP2PN, got {self.network_mode!r}")
        if self.service_time_model not in _SERVICE_MODELS:
            raise ConfigError(f"service_time_model must be one of {_SERVICE_MODELS}")
        if isinstance(self.catalogue, FixedCatalogue):
            if self.storage_per_box > self.catalogue.content_count:
                raise ConfigError("storage_per_box cannot exceed the catalogue size")
        elif isinstance(self.catalogue, ClassCatalogue):
            implied = self.catalogue.implied_load(self.uplink_slots)
            if abs(implied - self.load) > 1e-9:
                raise ConfigError(
                    f"class catalogue implies load {implied!r}, config says {self.load!r}")
        else:
            raise ConfigError("catalogue must be FixedCatalogue or ClassCatalogue")
        if self.cache_update is not None:
            eps = self.cache_update.epsilon
            if eps is not None and eps * self.box_count > 1 + 1e-12:
                raise ConfigError("cache update requires epsilon * B <= 1")
            if self.network_mode == PP2PN:
                raise ConfigError("cache updates and PP2PN placements are mutually exclusive")
        if isinstance(self.acceptance_policy, CounterBased):
            if not isinstance(self.catalogue, ClassCatalogue):
                raise ConfigError("counter-based acceptance requires a class catalogue")
            if self.network_mode != DSN:
                raise ConfigError("counter-based acceptance is defined for DSN only")
            if self.cache_update is not None:
                raise ConfigError("counter-based acceptance does not support cache updates")

    # -- derived quantities ---------------------------------------------

    @property
    def warmup_time(self) -> float:
        return self.warmup_fraction * self.horizon

    def effective_epsilon(self) -> float:
        if self.cache_update is None:
            return 0.0
        if self.cache_update.epsilon is None:
            return 1.0 / self.box_count
        return self.cache_update.epsilon

    def content_count(self) -> int:
        if isinstance(self.catalogue, FixedCatalogue):
            return self.catalogue.content_count
        return int(self.catalogue.realized_counts(self.box_count).sum())


def per_content_rates(config: SystemConfig) -> np.ndarray:
    """Poisson arrival rate per content.

    Fixed catalogue: rate_c = popularity_c * load * B * U. Class catalogue:
    every content of a class gets that class's rate (totals match
    load * B * U up to the ceiling rounding of class sizes).
    """
    if isinstance(config.catalogue, FixedCatalogue):
        scale = config.load * config.box_count * config.uplink_slots
        return config.catalogue.popularity * scale
    rates, _ = config.catalogue.realize(config.box_count)
    return rates


def normalized_popularity(config: SystemConfig) -> np.ndarray:
    """Realized per-content popularity weights (sum to 1)."""
    rates = per_content_rates(config)
    return rates / rates.sum()


def as_request_vector(n: Sequence[int] | np.ndarray, content_count: int) -> np.ndarray:
    """Validate and convert a per-content request-count vector."""
    arr = np.asarray(n, dtype=np.int64)
    if arr.shape != (content_count,):
        raise ValueError(f"request vector has shape {arr.shape}, expected ({content_count},)")
    if np.any(arr < 0):
        raise ValueError("request counts must be nonnegative")
    return arr


# --------------------------------------------------------------------------
# placements
# --------------------------------------------------------------------------

class Placement:
    """Per-box cache contents plus derived replica counts and holder index.

    Immutable. ``replica_count`` counts cache slots per content (duplicates
    within one box possible only when ``allow_duplicate_slots`` is set, as in
    the modified large-catalogue placement); ``holders`` maps each content to
    the sorted list of distinct boxes caching it.
    """

    __slots__ = ("caches", "content_count", "allow_duplicate_slots", "_replica", "_holders")

    def __init__(self, caches: Iterable[Iterable[int]], content_count: int, *,
                 allow_duplicate_slots: bool = False):
        rows = tuple(tuple(int(c) for c in row) for row in caches)
        for b, row in enumerate(rows):
            for c in row:
                if not (0 <= c < content_count):
                    raise ValueError(f"box {b} caches unknown content {c}")
            if not allow_duplicate_slots and len(set(row)) != len(row):
                raise ValueError(f"box {b} caches duplicate contents {row}")
        self.caches = rows
        self.content_count = int(content_count)
        self.allow_duplicate_slots = bool(allow_duplicate_slots)
        self._replica = None
        self._holders = None

    @property
    def box_count(self) -> int:
        return len(self.caches)

    @property
    def replica_count(self) -> np.ndarray:
        if self._replica is None:
            flat = [c for row in self.caches for c in row]
            rc = np.bincount(np.asarray(flat, dtype=np.int64), minlength=self.content_count)
            rc.setflags(write=False)
            self._replica = rc
        return self._replica

    @property
    def holders(self) -> list[list[int]]:
        if self._holders is None:
            hold: list[list[int]] = [[] for _ in range(self.content_count)]
            for b, row in enumerate(self.caches):
                for c in set(row):
                    hold[c].append(b)
            self._holders = hold  # box order is ascending by construction
        return self._holders

    def with_box_cache(self, box: int, new_row: Sequence[int]) -> "Placement":
        """Copy with one box's cache replaced (indices rebuilt lazily)."""
        rows = list(self.caches)
        rows[box] = tuple(int(c) for c in new_row)
        return Placement(rows, self.content_count,
                         allow_duplicate_slots=self.allow_duplicate_slots)

    def __eq__(self, other):
        return (isinstance(other, Placement)
                and self.caches == other.caches
                and self.content_count == other.content_count)

    def __hash__(self):
        return hash((self.caches, self.content_count))

    def __repr__(self):
        return (f"Placement(boxes={self.box_count}, contents={self.content_count}, "
                f"slots={sum(len(r) for r in self.caches)})")

    # -- text table interchange ------------------------------------------

    def to_table(self) -> str:
        """One line per box, space-separated content identifiers."""
        return "\n".join(" ".join(str(c) for c in row) for row in self.caches) + "\n"

    @classmethod
    def from_table(cls, text: str, content_count: int, *,
                   allow_duplicate_slots: bool = False) -> "Placement":
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([int(tok) for tok in line.split()])
        return cls(rows, content_count, allow_duplicate_slots=allow_duplicate_slots)


def check_placement(config: SystemConfig, placement: Placement) -> None:
    """Raise if a placement is not usable with this configuration."""
    if placement.box_count != config.box_count:
        raise ConfigError(
            f"placement has {placement.box_count} boxes, config says {config.box_count}")
    if placement.content_count != config.content_count():
        raise ConfigError(
            f"placement covers {placement.content_count} contents, "
            f"config realizes {config.content_count()}")
    worst = max((len(row) for row in placement.caches), default=0)
    if worst > config.storage_per_box:
        raise ConfigError(
            f"a box caches {worst} contents, exceeding storage_per_box={config.storage_per_box}")


# --------------------------------------------------------------------------
# flat config file
# --------------------------------------------------------------------------

_CONFIG_KEYS = {
    "box_count", "storage_per_box", "uplink_slots", "load",
    "catalogue", "content_count", "popularity", "zipf_alpha", "zipf_shift", "classes",
    "network_mode", "acceptance_policy", "t_r_max", "counter_fanout",
    "eligibility_exponent", "service_time_model", "warmup_fraction",
    "repetitions", "horizon", "cache_update", "cache_update_epsilon", "rng_seed",
}

_REQUIRED_KEYS = ("box_count", "storage_per_box", "uplink_slots", "load", "catalogue")


def parse_config_text(text: str) -> SystemConfig:
    """Parse the flat ``key = value`` scenario format (# starts a comment)."""
    mapping: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in mapping:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        mapping[key] = value
    return config_from_mapping(mapping)


def load_config(path) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _as_int(key, value) -> int:
    try:
        out = int(str(value).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    return out


def _as_float(key, value) -> float:
    try:
        return float(str(value).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _as_float_list(key, value) -> list[float]:
    if isinstance(value, (list, tuple, np.ndarray)):
        return [float(v) for v in value]
    return [_as_float(key, tok) for tok in str(value).split(",") if tok.strip()]


def _parse_classes(value) -> tuple[ContentClass, ...]:
    # "size:rate, size:rate" in files; [[size, rate], ...] from JSON plans.
    if isinstance(value, (list, tuple)):
        pairs = [(float(a), float(r)) for a, r in value]
    else:
        pairs = []
        for tok in str(value).split(","):
            tok = tok.strip()
            if not tok:
                continue
            if ":" not in tok:
                raise ConfigError(f"classes: expected 'size:rate' pairs, got {tok!r}")
            a, r = tok.split(":", 1)
            pairs.append((float(a), float(r)))
    return tuple(ContentClass(a, r) for a, r in pairs)


def config_from_mapping(mapping: dict) -> SystemConfig:
    """Build a SystemConfig from a flat mapping (file parse or plan JSON)."""
    unknown = set(mapping) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown keys: {sorted(unknown)}")
    missing = [k for k in _REQUIRED_KEYS if k not in mapping]
    if missing:
        raise ConfigError(f"missing required keys: {missing}")

    kind = str(mapping["catalogue"]).strip().lower()
    if kind == "fixed":
        if "classes" in mapping:
            raise ConfigError("classes is only valid with catalogue = classes")
        if "content_count" not in mapping:
            raise ConfigError("catalogue = fixed requires content_count")
        c = _as_int("content_count", mapping["content_count"])
        if "popularity" in mapping:
            pop = np.array(_as_float_list("popularity", mapping["popularity"]))
            catalogue = FixedCatalogue(c, pop / pop.sum())
        else:
            alpha = _as_float("zipf_alpha", mapping.get("zipf_alpha", 0.8))
            shift = _as_float("zipf_shift", mapping.get("zipf_shift", 0.0))
            catalogue = FixedCatalogue.zipf(c, alpha, shift)
    elif kind == "classes":
        for bad in ("content_count", "popularity", "zipf_alpha", "zipf_shift"):
            if bad in mapping:
                raise ConfigError(f"{bad} is only valid with catalogue = fixed")
        if "classes" not in mapping:
            raise ConfigError("catalogue = classes requires classes")
        catalogue = ClassCatalogue(_parse_classes(mapping["classes"]))
    else:
        raise ConfigError(f"catalogue must be 'fixed' or 'classes', got {kind!r}")

    policy_name = str(mapping.get("acceptance_policy", "repacking")).strip().lower()
    if policy_name == "repacking":
        for bad in ("counter_fanout", "eligibility_exponent"):
            if bad in mapping:
                raise ConfigError(f"{bad} is only valid with acceptance_policy = counter")
        raw = mapping.get("t_r_max", "unlimited")
        if raw is None or str(raw).strip().lower() in ("unlimited", "none", "inf"):
            policy = Repacking(None)
        else:
            policy = Repacking(_as_int("t_r_max", raw))
    elif policy_name == "counter":
        if "t_r_max" in mapping:
            raise ConfigError("t_r_max is only valid with acceptance_policy = repacking")
        raw = mapping.get("counter_fanout", "auto")
        fanout = None if str(raw).strip().lower() == "auto" else _as_int("counter_fanout", raw)
        expo = _as_float("eligibility_exponent", mapping.get("eligibility_exponent", 0.75))
        policy = CounterBased(fanout, expo)
    else:
        raise ConfigError(f"acceptance_policy must be 'repacking' or 'counter', got {policy_name!r}")

    cu_raw = str(mapping.get("cache_update", "off")).strip().lower()
    if cu_raw in ("off", "none", "false"):
        if "cache_update_epsilon" in mapping:
            raise ConfigError("cache_update_epsilon is only valid with cache_update = on")
        cache_update = None
    elif cu_raw in ("on", "true", "enabled"):
        raw = mapping.get("cache_update_epsilon", "auto")
        eps = None if str(raw).strip().lower() == "auto" else _as_float("cache_update_epsilon", raw)
        cache_update = CacheUpdate(eps)
    else:
        raise ConfigError(f"cache_update must be 'on' or 'off', got {cu_raw!r}")

    return SystemConfig(
        box_count=_as_int("box_count", mapping["box_count"]),
        storage_per_box=_as_int("storage_per_box", mapping["storage_per_box"]),
        uplink_slots=_as_int("uplink_slots", mapping["uplink_slots"]),
        load=_as_float("load", mapping["load"]),
        catalogue=catalogue,
        network_mode=str(mapping.get("network_mode", DSN)).strip().upper(),
        acceptance_policy=policy,
        service_time_model=str(mapping.get("service_time_model", "exponential")).strip().lower(),
        warmup_fraction=_as_float("warmup_fraction", mapping.get("warmup_fraction", 0.2)),
        repetitions=_as_int("repetitions", mapping.get("repetitions", 10)),
        horizon=_as_float("horizon", mapping.get("horizon", 10.0)),
        cache_update=cache_update,
        rng_seed=_as_int("rng_seed", mapping.get("rng_seed", 0)),
    )


def config_to_mapping(config: SystemConfig) -> dict:
    """Flat JSON-safe mapping for provenance output (inverse of config_from_mapping)."""
    out: dict[str, object] = {
        "box_count": config.box_count,
        "storage_per_box": config.storage_per_box,
        "uplink_slots": config.uplink_slots,
        "load": config.load,
        "network_mode": config.network_mode,
        "service_time_model": config.service_time_model,
        "warmup_fraction": config.warmup_fraction,
        "repetitions": config.repetitions,
        "horizon": config.horizon,
        "rng_seed": config.rng_seed,
    }
    if isinstance(config.catalogue, FixedCatalogue):
        out["catalogue"] = "fixed"
        out["content_count"] = config.catalogue.content_count
        out["popularity"] = [float(p) for p in config.catalogue.popularity]
    else:
        out["catalogue"] = "classes"
        out["classes"] = [[k.size_factor, k.per_content_rate] for k in config.catalogue.classes]
    if isinstance(config.acceptance_policy, Repacking):
        out["acceptance_policy"] = "repacking"
        mi = config.acceptance_policy.max_iterations
        out["t_r_max"] = "unlimited" if mi is None else mi
    else:
        out["acceptance_policy"] = "counter"
        out["counter_fanout"] = (config.acceptance_policy.fanout
                                 if config.acceptance_policy.fanout is not None else "auto")
        out["eligibility_exponent"] = config.acceptance_policy.eligibility_exponent
    if config.cache_update is not None:
        out["cache_update"] = "on"
        eps = config.cache_update.epsilon
        out["cache_update_epsilon"] = eps if eps is not None else "auto"
    else:
        out["cache_update"] = "off"
    return out

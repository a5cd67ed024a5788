"""Synthetic rental market with a planted, recoverable layout-quality effect.

The generative price model is log-linear: log(rent) is an intercept plus
coefficients on z-scored structural/locational covariates, district and
control dummies, a planted gamma * layout-quality term, and Gaussian noise.
Each listing draws from an independent RNG stream keyed by (seed, id), so
generation is order-independent and reproducible.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import (GeometryParams, QualityWeights, layout_quality,
                       synth_geometry)

# reference marginals used for standardizing covariates inside the generator:
# (mean, std, min, max) per variable. The price model is log-linear in
# log(area) so that both log(rent) and log(rpms) = log(rent) - log(area)
# stay exactly linear in the design columns.
REF_STATS = {
    "log_area": (4.2108, 0.337, math.log(16.0), math.log(178.08)),
    "area": (71.35, 26.35, 16.0, 178.08),
    "rooms": (2.44, 0.89, 1, 6),
    "floor": (2.89, 2.29, 0, 26),
    "top_floor": (5.09, 2.21, 0, 27),
    "city_distance": (7.99, 4.26, 0.37, 17.54),
    "year_built": (1970.0, 43.76, 1830, 2020),
}
REF_MEDIAN_AREA = 67.41
REF_MEDIAN_YEAR = 1985

DEFAULT_BETA = {
    "log_area": 0.42,
    "rooms": -0.02,
    "floor": 0.015,
    "top_floor": 0.01,
    "city_distance": -0.10,
    "year_built": 0.05,
}


@dataclass
class MarketConfig:
    n_listings: int = 2000
    seed: int = 1234
    beta0: float = 6.55
    beta_structural: dict = field(default_factory=lambda: dict(DEFAULT_BETA))
    gamma_layout: float = 0.30
    noise_sigma: float = 0.08
    n_districts: int = 12
    n_controls: int = 30
    raster_size: int = 64
    geometry_params: GeometryParams = field(default_factory=GeometryParams)
    quality_weights: QualityWeights = field(default_factory=QualityWeights)
    # extra planted-effect multipliers for heterogeneity studies:
    # gamma_i = gamma_layout * (1 + small_area_mult*[area<median] + old_building_mult*[year<median])
    gamma_small_area_mult: float = 0.0
    gamma_old_building_mult: float = 0.0
    # latent design factor strength: couples window density, corridor
    # presence and elongation so the planted quality is visually coherent
    latent_strength: float = 1.0

    def validate(self):
        if self.n_listings < 0:
            raise ConfigError("n_listings must be >= 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.n_districts < 1:
            raise ConfigError("n_districts must be >= 1")
        if self.raster_size < 16:
            raise ConfigError("raster_size must be >= 16")


@dataclass
class ListingRecord:
    id: int
    area: float
    rooms: int
    floor: int
    top_floor: int
    city_distance: float
    year_built: int
    district: int
    controls: list
    rent: float
    rpms: float


def _round9(x):
    """Quantize to 9 significant digits so CSV serialization round-trips."""
    return float(f"{x:.9g}")


def _zref(name, value):
    mean, std, _, _ = REF_STATS[name]
    return (value - mean) / std


def _district_effects(config):
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 900001]))
    return rng.normal(0.0, 0.08, size=config.n_districts)


def _control_effects(config):
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 900002]))
    return rng.normal(0.0, 0.02, size=config.n_controls)


def _sample_covariates(rng, config):
    a_mean, a_std, a_min, a_max = REF_STATS["area"]
    area = float(np.clip(rng.lognormal(math.log(REF_MEDIAN_AREA), 0.337), a_min, a_max))
    rooms = int(np.clip(round(area / 29.2 + rng.normal(0.0, 0.35)), 1, 6))
    # keep rooms feasible for the geometry synthesizer
    rooms = min(rooms, max(1, int(area / 4.0)))
    top_floor = int(np.clip(round(rng.normal(5.09, 2.21)), 0, 27))
    floor = int(round(top_floor * rng.beta(2.0, 1.6)))
    city_distance = float(np.clip(rng.normal(7.99, 4.26), 0.37, 17.54))
    year_built = int(np.clip(round(2020.0 - rng.exponential(50.0)), 1830, 2020))
    district = int(rng.integers(0, config.n_districts))
    controls = (rng.random(config.n_controls) < 0.3).astype(int).tolist()
    return area, rooms, floor, top_floor, city_distance, year_built, district, controls


def _listing_geometry(rng, area, rooms, config):
    """Per-listing geometry with a latent design factor shifting the params."""
    base = config.geometry_params
    d = rng.normal(0.0, 1.0) * config.latent_strength
    density = float(np.clip(base.window_density * (1.0 + 0.45 * d)
                            + rng.normal(0.0, 0.04), 0.03, 0.62))
    corridor_p = float(np.clip(base.corridor_p - 0.25 * d, 0.02, 0.98))
    elo, ehi = base.elongation_range
    shift = -0.25 * d
    params = GeometryParams(
        room_range=base.room_range,
        corridor_p=corridor_p,
        window_density=density,
        elongation_range=(max(1.0, elo + shift), max(1.05, ehi + shift)),
        balcony_p=base.balcony_p,
        min_slice=base.min_slice)
    return synth_geometry(rng, area, rooms, params)


def generate_listing(config, listing_id, district_fx, control_fx):
    """Generate one listing, its geometry and quality from its own RNG stream."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, listing_id]))
    (area, rooms, floor, top_floor, city_distance,
     year_built, district, controls) = _sample_covariates(rng, config)
    geometry = _listing_geometry(rng, area, rooms, config)
    quality = layout_quality(geometry, config.quality_weights)

    gamma = config.gamma_layout * (
        1.0
        + config.gamma_small_area_mult * (area < REF_MEDIAN_AREA)
        + config.gamma_old_building_mult * (year_built < REF_MEDIAN_YEAR))
    eps = rng.normal(0.0, config.noise_sigma) if config.noise_sigma > 0 else 0.0
    log_rent = (config.beta0
                + sum(config.beta_structural.get(name, 0.0) * _zref(name, value)
                      for name, value in (("log_area", math.log(area)),
                                          ("rooms", rooms),
                                          ("floor", floor), ("top_floor", top_floor),
                                          ("city_distance", city_distance),
                                          ("year_built", year_built)))
                + district_fx[district]
                + float(np.dot(control_fx, controls))
                + gamma * quality.q
                + eps)
    area = _round9(area)
    rent = _round9(math.exp(log_rent))
    city_distance = _round9(city_distance)
    rpms = rent / area  # exact accounting identity, never rounded separately
    record = ListingRecord(listing_id, area, rooms, floor, top_floor,
                           city_distance, year_built, district, controls,
                           rent, rpms)
    residual_truth = gamma * quality.q + eps
    return record, geometry, quality, residual_truth


def generate_market(config):
    """Generate the full market: listings, geometries and layout qualities."""
    config.validate()
    district_fx = _district_effects(config)
    control_fx = _control_effects(config)
    listings, geometries, qualities, truths = [], [], [], []
    for i in range(config.n_listings):
        rec, geo, qual, truth = generate_listing(config, i, district_fx, control_fx)
        listings.append(rec)
        geometries.append(geo)
        qualities.append(qual)
        truths.append(truth)
    return listings, geometries, qualities, truths

"""Shared fixtures: one small synthetic market reused across test modules."""

import numpy as np
import pytest

from hfl.geometry import rasterize
from hfl.market import MarketConfig, generate_market


@pytest.fixture(scope="session")
def small_market():
    cfg = MarketConfig(n_listings=300, seed=42)
    listings, geometries, qualities, truths = generate_market(cfg)
    return cfg, listings, geometries, qualities, truths


@pytest.fixture(scope="session")
def small_images(small_market):
    cfg, listings, geometries, _, _ = small_market
    return {rec.id: rasterize(geo, cfg.raster_size)
            for rec, geo in zip(listings, geometries)}


@pytest.fixture
def rng():
    return np.random.default_rng(0)

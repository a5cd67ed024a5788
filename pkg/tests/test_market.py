import dataclasses
import math

import numpy as np
import pytest

from hfl.dataset import read_dataset, write_dataset
from hfl.errors import ConfigError, GeometryInfeasible, SchemaMismatch
from hfl.geometry import (
    GeometryParams,
    QualityWeights,
    layout_quality,
    rasterize,
    synth_geometry,
)
from hfl.market import MarketConfig, generate_market


# --- generator determinism ---------------------------------------------------

def test_generation_is_deterministic(small_market):
    cfg, listings, geometries, _, _ = small_market
    again, geo2, _, _ = generate_market(dataclasses.replace(cfg))
    assert listings == again
    for a, b in zip(geometries, geo2):
        assert a.rooms == b.rooms and a.footprint == b.footprint
        assert np.array_equal(rasterize(a, 64), rasterize(b, 64))


def test_listings_use_independent_streams(small_market):
    # each listing draws from its own seeded stream, so a shorter run is a
    # strict prefix of a longer one
    cfg, listings, _, _, _ = small_market
    short, _, _, _ = generate_market(dataclasses.replace(cfg, n_listings=50))
    assert listings[:50] == short


def test_seed_changes_output(small_market):
    cfg, listings, _, _, _ = small_market
    other, _, _, _ = generate_market(dataclasses.replace(cfg, seed=43))
    assert listings != other


# --- field ranges and invariants ---------------------------------------------

def test_listing_field_ranges(small_market):
    cfg, listings, _, _, _ = small_market
    for rec in listings:
        assert 16.0 <= rec.area <= 178.08
        assert 1 <= rec.rooms <= 6
        assert 0 <= rec.floor <= rec.top_floor
        assert rec.city_distance > 0
        assert rec.year_built <= 2020
        assert 0 <= rec.district < cfg.n_districts
        assert len(rec.controls) == cfg.n_controls
        assert set(rec.controls) <= {0, 1}
        assert rec.rent > 0
        assert rec.rpms == rec.rent / rec.area  # exact by construction


def test_marginals_near_reference():
    listings, _, _, _ = generate_market(MarketConfig(n_listings=4000, seed=9))
    area = np.array([r.area for r in listings])
    rooms = np.array([r.rooms for r in listings])
    floor = np.array([r.floor for r in listings])
    dist = np.array([r.city_distance for r in listings])
    year = np.array([r.year_built for r in listings])
    assert area.mean() == pytest.approx(71.35, abs=6.0)
    assert rooms.mean() == pytest.approx(2.44, abs=0.35)
    assert floor.mean() == pytest.approx(2.89, abs=1.0)
    assert dist.mean() == pytest.approx(7.99, abs=2.0)
    assert np.median(year) == pytest.approx(1985, abs=12)
    assert np.corrcoef(area, rooms)[0, 1] == pytest.approx(0.81, abs=0.15)


def test_planted_effect_share_of_variance():
    cfg = MarketConfig(n_listings=3000, seed=5)
    listings, _, qualities, _ = generate_market(cfg)
    log_rent = np.log([r.rent for r in listings])
    q = np.array([ql.q for ql in qualities])
    share = (cfg.gamma_layout * q).var() / log_rent.var()
    assert 0.04 < share < 0.2  # planted layout effect is a minor component


def test_truth_matches_planted_model():
    cfg = MarketConfig(n_listings=200, seed=2, noise_sigma=0.0)
    _, _, qualities, truths = generate_market(cfg)
    for ql, t in zip(qualities, truths):
        assert t == pytest.approx(cfg.gamma_layout * ql.q, abs=1e-12)


def test_config_validation():
    with pytest.raises(ConfigError):
        MarketConfig(n_listings=-1).validate()
    with pytest.raises(ConfigError):
        MarketConfig(noise_sigma=-1.0).validate()
    with pytest.raises(ConfigError):
        MarketConfig(n_districts=0).validate()


# --- floor plan geometry ------------------------------------------------------

def test_geometry_rooms_partition_area(rng):
    for _ in range(30):
        area = rng.uniform(25, 150)
        rooms = int(rng.integers(1, 7))
        if area / rooms < 2.5:
            continue
        geo = synth_geometry(rng, area, rooms)
        assert len(geo.rooms) == rooms
        total = sum((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in geo.rooms)
        assert total == pytest.approx(area, rel=1e-6)
        w, h = geo.width, geo.height
        for x0, y0, x1, y1 in geo.rooms:
            assert -1e-9 <= x0 < x1 <= w + 1e-9
            assert -1e-9 <= y0 < y1 <= h + 1e-9


def test_geometry_infeasible_when_rooms_too_small(rng):
    with pytest.raises(GeometryInfeasible):
        synth_geometry(rng, 10.0, 6)


def test_quality_components_bounded(small_market):
    _, _, _, qualities, _ = small_market
    for ql in qualities:
        for v in (ql.q, ql.window_score, ql.corridor_score,
                  ql.elongation_score, ql.open_living_score):
            assert -1.0 <= v <= 1.0


def test_quality_is_weighted_sum(small_market):
    _, _, geometries, qualities, _ = small_market
    w = QualityWeights()
    for geo, ql in zip(geometries, qualities):
        expected = (w.windows * ql.window_score
                    + w.corridor * ql.corridor_score
                    + w.elongation * ql.elongation_score
                    + w.open_living * ql.open_living_score)
        assert ql.q == pytest.approx(min(1.0, max(-1.0, expected)), abs=1e-12)


def test_more_windows_score_higher(rng):
    params = GeometryParams(window_density=0.05)
    geo = synth_geometry(np.random.default_rng(3), 80.0, 3, params)
    sparse = layout_quality(geo)
    dense_geo = dataclasses.replace(geo, windows=geo.windows * 4)
    dense = layout_quality(dense_geo)
    assert dense.window_score > sparse.window_score


def test_no_corridor_scores_at_component_maximum(rng):
    geo = synth_geometry(np.random.default_rng(4), 70.0, 2,
                         GeometryParams(corridor_p=0.0))
    assert geo.corridor is None
    ql = layout_quality(geo)
    # with zero corridor length the corridor component sits at its maximum
    assert ql.corridor_score == pytest.approx(math.tanh(1.8 * 0.55), abs=1e-12)


# --- rasterization ------------------------------------------------------------

def test_raster_is_binary_and_has_margin(small_market):
    cfg, _, geometries, _, _ = small_market
    img = rasterize(geometries[0], 64)
    assert img.shape == (64, 64)
    assert img.dtype == np.uint8
    assert set(np.unique(img)) <= {0, 255}
    assert np.all(img[0] == 255) and np.all(img[:, 0] == 255)
    assert (img == 0).any()  # walls present


def test_raster_deterministic(small_market):
    _, _, geometries, _, _ = small_market
    a = rasterize(geometries[5], 96)
    b = rasterize(geometries[5], 96)
    assert np.array_equal(a, b)


# --- dataset round-trip -------------------------------------------------------

def test_dataset_roundtrip_exact(tmp_path, small_market, small_images):
    _, listings, _, qualities, truths = small_market
    truth = {rec.id: (ql.q, t) for rec, ql, t in zip(listings, qualities, truths)}
    write_dataset(tmp_path, listings, small_images, truth=truth)
    back, images, truth_back = read_dataset(tmp_path)
    assert back == listings
    assert set(images) == set(small_images)
    for lid, img in small_images.items():
        assert np.array_equal(images[lid], img)
    assert truth_back is not None and set(truth_back) == set(truth)
    for lid, (q0, t0) in truth.items():
        q1, t1 = truth_back[lid]
        assert q1 == pytest.approx(q0, rel=1e-6, abs=1e-9)
        assert t1 == pytest.approx(t0, rel=1e-6, abs=1e-9)


def test_dataset_roundtrip_without_truth(tmp_path, small_market, small_images):
    _, listings, _, _, _ = small_market
    write_dataset(tmp_path, listings, small_images)
    back, images, truth_back = read_dataset(tmp_path)
    assert back == listings and truth_back is None


def test_read_dataset_missing_csv(tmp_path):
    with pytest.raises(SchemaMismatch):
        read_dataset(tmp_path)


def test_read_dataset_rejects_unknown_column(tmp_path, small_market, small_images):
    _, listings, _, _, _ = small_market
    write_dataset(tmp_path, listings, small_images)
    csv_path = tmp_path / "listings.csv"
    lines = csv_path.read_text().splitlines()
    lines[0] += ",surprise"
    lines[1] += ",1"
    csv_path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaMismatch):
        read_dataset(tmp_path)


def test_read_dataset_missing_image(tmp_path, small_market, small_images):
    _, listings, _, _, _ = small_market
    write_dataset(tmp_path, listings, small_images)
    (tmp_path / "plans" / f"{listings[0].id}.pgm").unlink()
    with pytest.raises(SchemaMismatch):
        read_dataset(tmp_path)

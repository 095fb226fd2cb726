import json
import math

import pytest

from epproute.experiment import (
    ExperimentConfig,
    FitError,
    Point,
    curves,
    fit_peff,
    fit_slope,
    matched_window,
    read_csv,
    run_experiment,
    simulate_point,
    slopes_agree,
    write_csv,
)

SHOTS = 10**7


def synthetic(lattice, variant, d, ps, model):
    return [Point(lattice, variant, d, p, SHOTS, round(model(p) * SHOTS)) for p in ps]


GRID = [1e-3 * 1.3**k for k in range(8)]


def test_slope_of_power_law():
    pts = synthetic("rotated_square", "abstract", 3, GRID, lambda p: 40 * p**2)
    f = fit_slope(pts)
    assert f.slope == pytest.approx(2, abs=0.01)
    assert f.n_points == len(GRID)


def test_slope_needs_points():
    pts = synthetic("rotated_square", "abstract", 3, GRID[:3], lambda p: 40 * p**2)
    with pytest.raises(FitError):
        fit_slope(pts)
    assert fit_slope(pts, min_points=3).slope == pytest.approx(2, abs=0.02)


def test_identical_curves_give_unit_scale():
    model = lambda p: 30 * p**2 + 5e3 * p**3
    a = synthetic("rotated_square", "abstract", 3, GRID, model)
    e = synthetic("hexagonal", "embedded", 3, GRID[1:-1], model)
    s = fit_peff(a, e, bootstrap=20)
    assert s.s == pytest.approx(1, abs=0.01)
    assert s.low <= s.s <= s.high


def test_known_scale_is_recovered():
    model = lambda p: 30 * p**2
    a = synthetic("rotated_square", "abstract", 3, [x * 3 for x in GRID], model)
    e = synthetic("heavy_hexagonal", "embedded", 3, GRID[1:-1], lambda p: model(3 * p))
    assert fit_peff(a, e, bootstrap=0).s == pytest.approx(3, rel=0.01)


def test_joint_scale_over_distances():
    m3, m5 = (lambda p: 30 * p**2), (lambda p: 900 * p**3)
    a = {3: synthetic("r", "abstract", 3, [x * 2 for x in GRID], m3),
         5: synthetic("r", "abstract", 5, [x * 2 for x in GRID], m5)}
    e = {3: synthetic("h", "embedded", 3, GRID[1:-1], lambda p: m3(2 * p)),
         5: synthetic("h", "embedded", 5, GRID[1:-1], lambda p: m5(2 * p))}
    assert fit_peff(a, e, bootstrap=0).s == pytest.approx(2, rel=0.01)


def test_scale_fit_refuses_thin_data():
    a = synthetic("r", "abstract", 3, GRID, lambda p: 30 * p**2)
    with pytest.raises(FitError):
        fit_peff(a, a[:3], bootstrap=0)
    far = synthetic("h", "embedded", 3, [x / 100 for x in GRID], lambda p: 30 * p**2)
    with pytest.raises(FitError):
        fit_peff(a, far, bootstrap=0)


def test_matched_window_and_agreement():
    a = synthetic("r", "abstract", 3, GRID, lambda p: 30 * p**2)
    b = synthetic("h", "embedded", 3, GRID, lambda p: 300 * p**2)
    wa, wb = matched_window(a, b)
    lo = max(min(p.p_L for p in a), min(p.p_L for p in b))
    hi = min(max(p.p_L for p in a), max(p.p_L for p in b))
    assert wa and wb and all(lo <= p.p_L <= hi for p in wa + wb)
    assert len(wa) < len(a) and len(wb) < len(b)
    fa, fb = fit_slope(a), fit_slope(b)
    assert slopes_agree(fa, fb)


def test_csv_round_trip_and_digest():
    pts = synthetic("r", "abstract", 3, GRID[:2], lambda p: 30 * p**2)
    text = write_csv(pts, digest="abc")
    assert read_csv(text, expect_digest="abc")[0] == pts[0]
    assert read_csv(text, expect_digest="xyz") is None
    assert [p.p for p in read_csv(text)] == [p.p for p in pts]


def test_config_validation_and_digest():
    cfg = ExperimentConfig(p_grid={"rotated_square": [1e-3]})
    other = ExperimentConfig(p_grid={"rotated_square": [1e-3]}, workers=4)
    assert cfg.digest() == other.digest()
    assert ExperimentConfig.from_json(cfg.to_json()).digest() == cfg.digest()
    with pytest.raises(ValueError):
        ExperimentConfig.from_json(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError):
        ExperimentConfig(p_grid={"hexagonal": [0.9]})
    with pytest.raises(ValueError):
        ExperimentConfig(lattices=["kagome"])
    with pytest.raises(ValueError):
        ExperimentConfig(distances=[4])


def test_zero_p_point():
    cfg = ExperimentConfig(shots=100)
    assert simulate_point(cfg, "hexagonal", "embedded", 3, 0.0).logical_errors == 0


def test_points_are_deterministic():
    cfg = ExperimentConfig(shots=4000, seed=3)
    a = simulate_point(cfg, "hexagonal", "embedded", 3, 5e-3)
    b = simulate_point(cfg, "hexagonal", "embedded", 3, 5e-3)
    assert a == b and a.logical_errors > 0


def test_run_experiment_uses_cache(tmp_path):
    cfg = ExperimentConfig(lattices=[], distances=[3], p_grid={"rotated_square": [4e-3]}, shots=2000)
    cache = tmp_path / "out.csv"
    first = run_experiment(cfg, cache=cache)
    assert cache.read_text().startswith(f"# config {cfg.digest()}")
    cache.write_text(cache.read_text().replace(f",{first[0].logical_errors},", ",123456,", 1))
    assert run_experiment(cfg, cache=cache)[0].logical_errors == 123456


def test_small_abstract_curve_has_slope_near_two():
    cfg = ExperimentConfig(lattices=[], distances=[3], shots=40_000, seed=5,
                           p_grid={"rotated_square": [4e-3, 6e-3, 8e-3, 1.1e-2, 1.5e-2]})
    pts = run_experiment(cfg)
    (curve,) = curves(pts).values()
    f = fit_slope(curve)
    # d = 3 corrects one fault: p_L ~ p^2, flattening toward threshold
    assert 1.5 < f.slope < 2.3
    assert all(math.isfinite(p.stderr) for p in pts)

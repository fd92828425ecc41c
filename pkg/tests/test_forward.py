import math

import numpy as np
import pytest

from lgaxis import (
    REFERENCE_GRID,
    BeamGeometry,
    DegenerateInputError,
    EfficiencyProfile,
    ExperimentConfig,
    HologramPose,
    ScanGrid,
    ScanMap,
    SourceState,
    ValidationError,
    analytic_map,
    coincidence_probability,
    coincidence_probability_oracle,
    efficiency,
    expected_rate,
    extremum_poses,
    min_max_distance,
    NINE_POSE_SERIES,
    pose_series_maps,
    noiseless_scan,
    reference_scenario,
    shift_hologram_b,
    simulate_scan,
)
from lgaxis.forward import source_amplitudes

BEAM = BeamGeometry(400.0)


def hand_formula(ra, ta, rb, tb, alpha_sq, delta, w):
    w2 = w * w
    return alpha_sq * (4 * ra**2 * rb**2 + 4 * ra * rb * w2 * math.cos(-ta + tb + delta) + w2**2) / (
        (2 * ra**2 + w2) * (2 * rb**2 + w2))


def test_probability_matches_hand_formula_and_oracle():
    rng = np.random.default_rng(3)
    for _ in range(200):
        ra, rb = rng.uniform(0, 1000, 2)
        ta, tb, d = rng.uniform(-math.pi, math.pi, 3)
        w = rng.uniform(50, 800)
        s = SourceState(rng.uniform(0.01, 0.5), d)
        pa, pb, beam = HologramPose(ra, ta), HologramPose(rb, tb), BeamGeometry(w)
        p = coincidence_probability(pa, pb, s, beam)
        assert p == pytest.approx(hand_formula(ra, ta, rb, tb, s.alpha_sq, s.delta, w), rel=1e-12, abs=1e-15)
        assert p == pytest.approx(coincidence_probability_oracle(pa, pb, s, beam), abs=1e-12)


def test_probability_frozen_values():
    # r_A = r_B = 200, w = 400: numerator 6.4e9 + 2.56e10 cos + 2.56e10 over (2.4e5)^2.
    s = SourceState(0.5, 0.0)
    p = coincidence_probability(HologramPose(200, 0), HologramPose(200, 0), s, BEAM)
    assert p == pytest.approx(0.5 * (6.4e9 + 2.56e10 + 2.56e10) / (2.4e5 ** 2))
    p = coincidence_probability(HologramPose(200, math.pi / 2), HologramPose(200, 0), s, BEAM)
    assert p == pytest.approx(0.5 * (6.4e9 + 2.56e10) / 5.76e10)
    assert coincidence_probability(HologramPose(0), HologramPose(0), s, BEAM) == pytest.approx(0.5)


def test_source_amplitudes_are_normalised_pair():
    amps = source_amplitudes(SourceState(0.5, 1.0))
    assert set(amps) == {(1, -1), (0, 0)}
    assert sum(abs(a) ** 2 for a in amps.values()) == pytest.approx(1.0)


def test_common_rotation_invariance():
    s = SourceState(0.4, 0.9)
    p1 = coincidence_probability(HologramPose(120, 0.3), HologramPose(250, -1.1), s, BEAM)
    p2 = coincidence_probability(HologramPose(120, 1.3), HologramPose(250, -0.1), s, BEAM)
    assert p1 == pytest.approx(p2, abs=1e-15)


def test_extrema_give_alpha_sq_and_zero():
    s = SourceState(0.5, math.pi)
    pb = HologramPose(200, -math.pi / 2)
    mx, mn = extremum_poses(pb, s, BEAM)
    assert mx.r == 200 and mn.r == 400
    assert mx.theta == pytest.approx(math.pi / 2)
    assert coincidence_probability(mx, pb, s, BEAM) == pytest.approx(0.5, abs=1e-12)
    assert coincidence_probability(mn, pb, s, BEAM) == pytest.approx(0.0, abs=1e-12)


def test_extremum_poses_degenerate():
    with pytest.raises(DegenerateInputError):
        extremum_poses(HologramPose(0.0), SourceState(), BEAM)


def test_min_max_distance():
    assert min_max_distance(200, BEAM) == 600.0
    assert min_max_distance(400, BEAM) == 600.0
    assert min_max_distance(400 / math.sqrt(2), BEAM) == pytest.approx(400 * math.sqrt(2))
    with pytest.raises(DegenerateInputError):
        min_max_distance(0.0, BEAM)


def test_efficiency_profile():
    prof = EfficiencyProfile()
    assert efficiency(prof, 0.0) == 1.0
    assert efficiency(prof, 500.0) == pytest.approx(0.75)
    assert efficiency(prof, 1500.0) == 0.0
    assert efficiency(EfficiencyProfile.flat(0.3), 1e6) == 0.3
    tab = EfficiencyProfile(table_r=(0, 100, 200), table_eta=(1.0, 0.5, 0.0))
    assert efficiency(tab, 50.0) == pytest.approx(0.75)
    assert efficiency(tab, 500.0) == 0.0
    np.testing.assert_allclose(efficiency(prof, np.array([0.0, 1000.0])), [1.0, 0.0])


@pytest.mark.parametrize("kwargs", [
    {"eta0": 0.0}, {"eta0": 1.5}, {"r_cut": 0.0}, {"power": 0.5},
    {"table_r": (0, 1)}, {"table_r": (0, 0), "table_eta": (1, 1)}, {"table_r": (0, 1), "table_eta": (1, 2)},
])
def test_efficiency_profile_validation(kwargs):
    with pytest.raises(ValidationError):
        EfficiencyProfile(**kwargs)


def test_scan_grid():
    g = ScanGrid(0, 0, 10, 3, 2)
    assert g.shape == (2, 3) and g.size == 6
    xs, ys = g.mesh()
    assert xs.shape == (2, 3) and xs[1, 2] == 20 and ys[1, 2] == 10
    assert g.point(1.5, 1) == (15.0, 10.0)
    for bad in ({"nx": 1}, {"ny": 0}, {"step": 0}, {"nx": 2.5}):
        with pytest.raises(ValidationError, match="ScanGrid"):
            ScanGrid(**{**dict(x0=0, y0=0, step=1, nx=3, ny=3), **bad})


def test_reference_grid_contains_extrema():
    xs, ys = REFERENCE_GRID.xs(), REFERENCE_GRID.ys()
    assert -50.0 in xs and 200.0 in ys and -400.0 in ys
    assert REFERENCE_GRID.shape == (14, 14)


def test_scan_map_validation():
    g = ScanGrid(0, 0, 1, 2, 2)
    with pytest.raises(ValidationError, match="counts"):
        ScanMap(g, 1.0, [1, 2, 3])
    with pytest.raises(ValidationError, match="counts"):
        ScanMap(g, 1.0, [1, 2, 3, -1])
    with pytest.raises(ValidationError, match="counts"):
        ScanMap(g, 1.0, [1.5, 2, 3, 1])
    with pytest.raises(ValidationError, match="dwell"):
        ScanMap(g, 0.0, [1, 2, 3, 4])
    m = ScanMap(g, 2.0, [[1, 2], [3, 4]])
    assert not m.counts.flags.writeable
    np.testing.assert_array_equal(m.rates, [[0.5, 1.0], [1.5, 2.0]])


def test_reference_scenario_rates(ref_config):
    # eta(200) = 1 - 0.2^2 = 0.96 at the maximum; zero rate at the minimum.
    assert expected_rate(ref_config, (-50.0, 200.0)) == pytest.approx(96.0)
    assert expected_rate(ref_config, (-50.0, -400.0)) == pytest.approx(0.0, abs=1e-12)
    assert ref_config.theta_sum == pytest.approx(math.pi / 2)


def test_analytic_map_matches_pointwise_rate(ref_config):
    m = analytic_map(ref_config, REFERENCE_GRID)
    xs, ys = REFERENCE_GRID.mesh()
    for iy, ix in [(0, 0), (8, 7), (2, 7), (5, 11)]:
        assert m[iy, ix] == pytest.approx(expected_rate(ref_config, (xs[iy, ix], ys[iy, ix])), rel=1e-12)


def test_analytic_map_backends_agree(ref_config):
    np.testing.assert_allclose(analytic_map(ref_config, REFERENCE_GRID, backend="numba"),
                               analytic_map(ref_config, REFERENCE_GRID, backend="numpy"), rtol=1e-13, atol=1e-13)


def test_background_adds_constant():
    cfg = reference_scenario(background_rate=2.5)
    assert expected_rate(cfg, (-50.0, -400.0)) == pytest.approx(2.5)


def test_simulate_scan_frozen(ref_config):
    s = simulate_scan(ref_config, REFERENCE_GRID)
    assert s.metadata == {"seed": 20070601}
    assert int(s.counts.sum()) == 36868
    assert s.counts[8, 7] == 1187 and s.counts[2, 7] == 29 and s.counts[4, 7] == 0


def test_simulate_scan_is_deterministic(ref_config):
    assert simulate_scan(ref_config, REFERENCE_GRID) == simulate_scan(ref_config, REFERENCE_GRID)
    other = simulate_scan(reference_scenario(seed=1), REFERENCE_GRID)
    assert not np.array_equal(other.counts, simulate_scan(ref_config, REFERENCE_GRID).counts)


def test_noiseless_scan_argmax(ref_noiseless):
    iy, ix = np.unravel_index(np.argmax(ref_noiseless.counts), REFERENCE_GRID.shape)
    assert REFERENCE_GRID.point(ix, iy) == (-50.0, 200.0)
    assert ref_noiseless.counts[4, 7] == 0


def test_shift_hologram_b_moves_b_onto_axis(ref_config):
    shifted = shift_hologram_b(ref_config, (0.0, 200.0))
    assert shifted.pose_b.r == pytest.approx(0.0, abs=1e-12)


def test_experiment_config_validation():
    with pytest.raises(ValidationError, match="peak_rate"):
        ExperimentConfig(peak_rate=0)
    with pytest.raises(ValidationError, match="background_rate"):
        ExperimentConfig(background_rate=-1)
    with pytest.raises(ValidationError, match="dwell"):
        simulate_scan(ExperimentConfig(), REFERENCE_GRID, dwell=0)


def test_nine_pose_series():
    assert len(NINE_POSE_SERIES) == 9
    assert NINE_POSE_SERIES[4] == HologramPose(0.0, 0.0)
    assert all(p.r == 200.0 for i, p in enumerate(NINE_POSE_SERIES) if i != 4)
    maps = pose_series_maps(reference_scenario(), REFERENCE_GRID)
    assert len(maps) == 9 and all(m.shape == REFERENCE_GRID.shape for m in maps)


def test_on_axis_b_map_is_radially_symmetric():
    cfg = reference_scenario(axis_xy=(0.0, 0.0), pose_b=HologramPose(0.0))
    grid = ScanGrid(-600, -600, 100, 13, 13)
    m = analytic_map(cfg, grid)
    np.testing.assert_allclose(m, m.T, rtol=1e-12)
    np.testing.assert_allclose(m, m[::-1, :], rtol=1e-12)
    assert m[6, 9] == pytest.approx(m[9, 6]) == pytest.approx(m[3, 6])


def test_fine_grid_max_at_predicted_pose():
    cfg = reference_scenario(profile=EfficiencyProfile.flat())
    grid = ScanGrid(-400, -300, 10, 71, 71)
    m = analytic_map(cfg, grid)
    iy, ix = np.unravel_index(np.argmax(m), m.shape)
    mx, _ = extremum_poses(cfg.pose_b, cfg.source, cfg.beam)
    px, py = mx.xy
    assert abs(grid.point(ix, iy)[0] - (px + cfg.axis_xy[0])) <= 10
    assert abs(grid.point(ix, iy)[1] - (py + cfg.axis_xy[1])) <= 10

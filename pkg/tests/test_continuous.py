import itertools
import math

import numpy as np
import pytest

from conftest import REFERENCE_DELTA
from oracles import cube_integral, indicator_convolution
from prismghz.continuous import (
    ContinuousSettings,
    DegenerateDensityError,
    DensitySolution,
    DomainError,
    SolverError,
    band_masks,
    conditional_prob_continuous,
    forced_band_errors,
    grid_residual,
    kernel_integral,
    lhs_ratio,
    model_conditional,
    phase_to_window_angle,
    settings_triple_efficiency,
    single_efficiency,
    single_outcome_probability,
    solve_densities,
    target_rhs,
    triple_efficiency_curve,
    window_kernel,
    write_solution_curves,
    write_triple_curve,
)
from prismghz.core import ALL_SIGNS


def test_kernel_values():
    d = 0.8
    assert window_kernel(0.0, d) == 0.0
    assert window_kernel(1.5 * d, d) == pytest.approx(0.75 * d * d, rel=1e-14)
    assert window_kernel(3 * d, d) == 0.0
    assert window_kernel(-0.1, d) == 0.0 and window_kernel(3 * d + 0.1, d) == 0.0


def test_kernel_matches_indicator_convolution():
    d = 0.7
    s = np.linspace(0, 3 * d, 37)
    assert np.allclose(window_kernel(s, d), indicator_convolution(d, s), atol=2e-3 * d * d)


def test_kernel_integral_is_cube_volume():
    for d in (0.1, 0.5, math.pi / 3):
        assert kernel_integral(lambda w: np.ones_like(w), 0.3, d) == pytest.approx(d**3, rel=1e-12)


def test_kernel_continuity():
    d = 0.6
    for knot in (d, 2 * d):
        assert window_kernel(knot - 1e-9, d) == pytest.approx(window_kernel(knot + 1e-9, d), abs=1e-8)


def test_kernel_reduction_matches_cube():
    g = lambda w: np.exp(np.sin(w)) + 0.3 * np.cos(3 * w)
    a, b, c, d = 0.4, 2.1, 5.9, 0.9
    assert kernel_integral(g, a + b + c, d) == pytest.approx(cube_integral(g, a, b, c, d), rel=1e-10)


@pytest.mark.parametrize("w, expected", [(0.0, 0.0), (math.pi, 0.25), (math.pi / 2, 0.125)])
def test_target(w, expected):
    assert target_rhs(w) == pytest.approx(expected, abs=1e-15)


def test_single_efficiency():
    assert single_efficiency(REFERENCE_DELTA) == pytest.approx(0.15, abs=1e-15)
    assert single_efficiency(math.pi / 3) == pytest.approx(1 / 6)
    assert single_efficiency(1e-12) < 1e-12


def _flat_solution(c, n=512, delta=0.5):
    f = np.full(n, c)
    rho = np.full(n, 1.0 / (2 * math.pi) ** 3)
    return DensitySolution(delta, f, rho, residual=0.0)


def test_lhs_ratio_constant_and_zero():
    sol = _flat_solution(0.1)
    assert np.allclose(lhs_ratio(sol, np.linspace(0, 6, 11)), 0.1)
    assert np.allclose(lhs_ratio(_flat_solution(0.0), np.linspace(0, 6, 11)), 0.0)


def test_lhs_ratio_degenerate():
    sol = DensitySolution(0.5, np.zeros(512), np.zeros(512), residual=0.0)
    with pytest.raises(DegenerateDensityError):
        lhs_ratio(sol, 1.0)


def test_phase_offset_reproduces_quantum_sign():
    # phases summing to pi/2 give window sum pi, where p(+++ | triple) is maximal
    s = ContinuousSettings.from_phases(math.pi / 2, 0, 0)
    assert s.total == pytest.approx(math.pi)
    assert model_conditional(s.total, 1) == pytest.approx((1 + math.sin(math.pi / 2)) / 8)
    assert phase_to_window_angle(2 * math.pi - math.pi / 6) == pytest.approx(0.0, abs=1e-12)


def test_delta_domain():
    with pytest.raises(DomainError):
        solve_densities(math.pi / 3 * 1.001)
    with pytest.raises(DomainError):
        solve_densities(0.0)


@pytest.mark.filterwarnings("ignore:Solution may be inaccurate")
def test_solver_failure_carries_residual():
    with pytest.raises(SolverError) as exc:
        solve_densities(REFERENCE_DELTA, grid_n=256, tol=1e-3, max_iter=2)
    assert exc.value.best_residual >= 0


def test_solution_invariants(reference_solution):
    sol = reference_solution
    assert sol.residual <= 1e-3
    assert grid_residual(sol) == pytest.approx(sol.residual)
    assert np.all(sol.f_values >= 0) and np.all(sol.f_values <= 0.25)
    assert np.all(sol.rho_values >= 0)
    assert sol.total_measure() == pytest.approx(1.0, abs=1e-6)
    zero_err, quarter_err = forced_band_errors(sol)
    assert zero_err < sol.tol and quarter_err < sol.tol


def test_lhs_at_off_grid_point(reference_solution):
    w0 = math.pi - 1.5 * REFERENCE_DELTA
    assert abs(lhs_ratio(reference_solution, w0) - target_rhs(w0)) <= 2e-3


def test_small_window_tracks_shifted_target():
    d = math.pi / 300
    sol = solve_densities(d, grid_n=1024)
    shifted = np.clip(target_rhs(sol.grid - 1.5 * d), 0, 0.25)
    assert np.max(np.abs(sol.f_values - shifted)) < 5e-3


def test_single_outcome_probability_is_half(reference_solution):
    for sign in (1, -1):
        p = single_outcome_probability(reference_solution, sign)
        assert p / single_efficiency(REFERENCE_DELTA) == pytest.approx(0.5, abs=1e-6)


def test_triple_curve(reference_solution):
    w, p = triple_efficiency_curve(reference_solution)
    omega3 = single_efficiency(REFERENCE_DELTA) ** 3
    assert np.mean(p) == pytest.approx(omega3, rel=1e-6)
    assert 0 < p.min() < omega3
    w2, p2 = triple_efficiency_curve(reference_solution, points=64)
    assert len(w2) == 64 and np.all(p2 > 0)


def test_permutation_symmetry(reference_solution):
    angles = (0.3, 2.2, 4.9)
    ref = settings_triple_efficiency(reference_solution, ContinuousSettings.of(*angles))
    refc = conditional_prob_continuous(reference_solution, ContinuousSettings.of(*angles), (1, -1, -1))
    for perm in itertools.permutations(angles):
        s = ContinuousSettings.of(*perm)
        assert settings_triple_efficiency(reference_solution, s) == ref
        assert conditional_prob_continuous(reference_solution, s, (1, -1, -1)) == refc


def test_continuous_conditionals(reference_solution):
    at0 = ContinuousSettings.of(0, 0, 0)
    atpi = ContinuousSettings.of(math.pi / 3, math.pi / 3, math.pi / 3)
    assert conditional_prob_continuous(reference_solution, at0, (1, 1, 1)) == pytest.approx(0.0, abs=1e-15)
    assert conditional_prob_continuous(reference_solution, atpi, (1, 1, 1)) == pytest.approx(0.25, abs=1e-12)
    for s in (at0, atpi, ContinuousSettings.of(1.0, 2.0, 0.5)):
        total = sum(conditional_prob_continuous(reference_solution, s, sg) for sg in ALL_SIGNS)
        assert total == pytest.approx(1.0, abs=1e-12)
        for sg in ALL_SIGNS:
            got = conditional_prob_continuous(reference_solution, s, sg)
            assert got == pytest.approx(model_conditional(s.total, sg.parity), abs=2e-3)


def test_band_masks():
    zero, quarter = band_masks(np.array([0.0, 1.0, 3.0, math.pi + 0.1, 6.2]), 0.5)
    assert zero.tolist() == [True, True, False, False, False]
    assert quarter.tolist() == [False, False, False, True, False]


def test_round_trip_and_csv(reference_solution, tmp_path):
    p = tmp_path / "sol.json"
    reference_solution.save(p)
    back = DensitySolution.load(p)
    assert np.array_equal(back.f_values, reference_solution.f_values)
    assert np.array_equal(back.rho_values, reference_solution.rho_values)
    assert back.residual == reference_solution.residual
    paths = write_solution_curves(back, tmp_path)
    assert paths["f"].read_text().splitlines()[0] == "w,f"
    assert paths["rho"].read_text().splitlines()[0] == "w,rho"
    assert paths["fit"].read_text().splitlines()[0] == "w,lhs,rhs"
    tri = write_triple_curve(back, tmp_path / "tri.csv")
    lines = tri.read_text().splitlines()
    assert lines[0] == "w,p_triple" and len(lines) == 1025

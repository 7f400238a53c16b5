"""
Tests for the incident wave and the two time-domain schemes.
"""

import numpy as np
import pytest

from rkcq_scatter import (
    BoundarySpace,
    CausalityError,
    ConfigurationError,
    ContractError,
    IncidentWave,
    L_SHAPE_VERTICES,
    StageGrid,
    energy_norm,
    floor_filtered_rate,
    manufactured_dtn_error,
    mesh_polygon,
    radau_iia,
    reference_solution,
    scheme_decomposition_check,
    solve_differentiated,
    solve_schemes,
    solve_standard,
    trace_samples,
)

# the pulse must not have reached the unit square at t = 0
SQUARE_WAVE = IncidentWave(tau0=2.5)


class TestIncidentWave:
    """Test the travelling pulse and its derivatives."""

    def test_profile_closed_form(self):
        wave = IncidentWave()
        tau = np.linspace(3.0, 5.0, 21)
        expected = np.cos(np.pi * tau / 2) * np.exp(-(tau - 4.0) ** 2 / 0.05)
        np.testing.assert_allclose(wave.profile(tau), expected, atol=1e-15)

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_profile_derivatives(self, order):
        """Test psi^(n) against central differences of psi^(n-1)."""
        wave = IncidentWave()
        tau = np.linspace(3.7, 4.3, 13)
        h = 1e-6
        fd = (wave.profile(tau + h, order - 1) - wave.profile(tau - h, order - 1)) / (2 * h)
        exact = wave.profile(tau, order)
        np.testing.assert_allclose(exact, fd, atol=1e-6 * np.max(np.abs(exact)))

    def test_value_shapes(self):
        wave = IncidentWave()
        points = np.zeros((5, 3, 2))
        assert wave.value(points, 1.0).shape == (5, 3)
        assert wave.value(points, np.linspace(0, 1, 4)).shape == (5, 3, 4)

    def test_travels_along_direction(self):
        """Test u(x + d tau, t + tau) = u(x, t)."""
        wave = IncidentWave()
        x = np.array([[0.3, 0.7]])
        d = np.asarray(wave.direction)
        np.testing.assert_allclose(wave.value(x + 0.4 * d, 4.6), wave.value(x, 4.2), atol=1e-14)

    def test_normal_derivative_is_gradient(self):
        """Test grad u . nu against a finite difference in the normal direction."""
        wave = IncidentWave()
        x = np.array([[0.2, 0.1]])
        nu = np.array([[0.0, -1.0]])
        h = 1e-6
        fd = (wave.value(x + h * nu, 4.3) - wave.value(x - h * nu, 4.3)) / (2 * h)
        np.testing.assert_allclose(wave.normal_derivative(x, nu, 4.3), fd, rtol=1e-6)

    def test_invalid_parameters(self):
        with pytest.raises(ConfigurationError):
            IncidentWave(direction=(1.0, 1.0))
        with pytest.raises(ConfigurationError):
            IncidentWave(alpha=0.0)
        with pytest.raises(ContractError):
            IncidentWave().profile(0.0, -1)

    def test_causality(self):
        """Test that the default pulse is quiet on the L-shape at t = 0 and an early one is not."""
        assert IncidentWave().check_causality(L_SHAPE_VERTICES) < 1e-10
        with pytest.raises(CausalityError):
            IncidentWave(tau0=0.5).check_causality(L_SHAPE_VERTICES)


class TestBoundaryData:
    """Test projected traces and reference normal derivatives."""

    def test_trace_samples_shape(self, coarse_square_space):
        grid = StageGrid.from_final_time(5.0, 4, radau_iia(2).c)
        samples = trace_samples(SQUARE_WAVE, coarse_square_space, grid)
        assert samples.shape == (4, 2, 16)
        with pytest.raises(ContractError):
            trace_samples(SQUARE_WAVE, coarse_square_space, grid, derivative_order=2)

    def test_trace_samples_check_causality(self, coarse_square_space):
        grid = StageGrid.from_final_time(5.0, 4, radau_iia(2).c)
        with pytest.raises(CausalityError):
            trace_samples(IncidentWave(tau0=1.0), coarse_square_space, grid)

    def test_reference_solution_shape(self, coarse_square_space):
        assert reference_solution(SQUARE_WAVE, coarse_square_space, [1.0, 2.0, 3.0]).shape == (3, 16)


class TestFloorFilteredRate:
    """Test the rate fit that ignores ladder points at the spatial error floor."""

    def test_points_below_floor_are_dropped(self):
        steps = [0.4, 0.2, 0.1, 0.05, 0.025]
        errors = [0.064, 0.008, 0.001, 1.25e-4, 9e-5]
        fit = floor_filtered_rate(steps, errors, floor=1e-4)
        assert len(fit.steps) == 4
        assert fit.slope == pytest.approx(3.0)

    def test_window_keeps_finest_pairs(self):
        steps = np.array([0.4, 0.2, 0.1, 0.05, 0.025])
        errors = steps ** 2
        errors[:2] *= 10.0
        fit = floor_filtered_rate(steps, errors, floor=0.0, window=2)
        np.testing.assert_allclose(fit.steps, steps[2:])
        assert fit.slope == pytest.approx(2.0)

    def test_no_pair_above_floor(self):
        assert floor_filtered_rate([0.2, 0.1], [1e-3, 1e-4], floor=1e-2) is None

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            floor_filtered_rate([0.2, 0.1], [1e-3], floor=0.0)


class TestSchemes:
    """Test the standard and differentiated schemes on a small mesh."""

    def test_decomposition_identity(self, coarse_square_space):
        """Test CQ[s^-1 DtN] g' = CQ[s^-1 DtI] g' + g'(t_n) up to roundoff."""
        tableau = radau_iia(2)
        grid = StageGrid.from_final_time(2.0, 8, tableau.c)
        samples = np.random.default_rng(11).standard_normal((8, 2, coarse_square_space.n_dofs))
        report = scheme_decomposition_check(tableau, grid, coarse_square_space, SQUARE_WAVE,
                                            samples=samples, radius=0.9)
        assert report.residuals.shape == (8,)
        assert report.passed, report.max_relative

    @pytest.mark.integration
    def test_solve_schemes(self, coarse_square_space):
        """Test that both schemes run on one frequency pass and match the single-scheme entry points."""
        tableau = radau_iia(2)
        grid = StageGrid.from_final_time(5.0, 10, tableau.c)
        runs = solve_schemes(["standard", "differentiated"], tableau, grid, coarse_square_space, SQUARE_WAVE)
        assert set(runs) == {"standard", "differentiated"}
        for run in runs.values():
            assert run.outputs.shape == (10, 16)
            assert run.errors.shape == (10,)
            assert np.all(np.isfinite(run.errors))
            assert run.max_error > 0
            assert not run.normalized
        standard = solve_standard(tableau, grid, coarse_square_space, SQUARE_WAVE)
        np.testing.assert_allclose(standard.outputs, runs["standard"].outputs, rtol=1e-10, atol=1e-12)
        differentiated = solve_differentiated(tableau, grid, coarse_square_space, SQUARE_WAVE)
        np.testing.assert_allclose(differentiated.outputs, runs["differentiated"].outputs, rtol=1e-10, atol=1e-12)

    @pytest.mark.integration
    def test_normalized_errors(self, coarse_square_space):
        tableau = radau_iia(2)
        grid = StageGrid.from_final_time(5.0, 10, tableau.c)
        absolute = solve_standard(tableau, grid, coarse_square_space, SQUARE_WAVE)
        relative = solve_standard(tableau, grid, coarse_square_space, SQUARE_WAVE, normalize=True)
        assert relative.normalized
        assert relative.max_error == pytest.approx(absolute.max_error / absolute.reference_scale)

    @pytest.mark.integration
    @pytest.mark.parametrize("solve", [solve_standard, solve_differentiated])
    def test_silent_before_arrival(self, coarse_square_space, solve):
        """Test that both schemes stay at roundoff level until the pulse reaches the square."""
        tableau = radau_iia(2)
        grid = StageGrid.from_final_time(5.0, 20, tableau.c)
        run = solve(tableau, grid, coarse_square_space, SQUARE_WAVE, oversampling=3)
        assert not np.iscomplexobj(run.outputs)
        early = grid.output_times <= 1.0
        assert early.sum() == 4
        for coeffs in run.outputs[early]:
            assert energy_norm(coarse_square_space, coeffs) <= 1e-8

    def test_unknown_method(self, coarse_square_space):
        tableau = radau_iia(2)
        grid = StageGrid.from_final_time(5.0, 4, tableau.c)
        with pytest.raises(ConfigurationError):
            solve_schemes(["implicit"], tableau, grid, coarse_square_space, SQUARE_WAVE)


@pytest.mark.slow
class TestLShapeAcceptance:
    """Convergence of both schemes on the graded L-shape."""

    def test_differentiated_scheme_converges_faster(self):
        space = BoundarySpace(mesh_polygon(L_SHAPE_VERTICES, 0.125, 2.0, 4), 5)
        tableau = radau_iia(2)
        errors = {"standard": [], "differentiated": []}
        steps = []
        for N in (48, 96, 192):
            grid = StageGrid.from_final_time(12.0, N, tableau.c)
            runs = solve_schemes(list(errors), tableau, grid, space, IncidentWave(), threads=4)
            steps.append(grid.k)
            for method, run in runs.items():
                errors[method].append(run.max_error)
        last_rate = {m: np.log(e[-2] / e[-1]) / np.log(steps[-2] / steps[-1]) for m, e in errors.items()}
        assert errors["differentiated"][-1] < errors["standard"][-1]
        assert last_rate["differentiated"] > last_rate["standard"]
        assert last_rate["standard"] > 1.5


def lshape_ladder(stages, ladder=(48, 96, 192, 384, 768)):
    """Step sizes, errors per method and the error floor of the L-shape experiment."""
    space = BoundarySpace(mesh_polygon(L_SHAPE_VERTICES, 0.125, 2.0, 4), 5)
    tableau = radau_iia(stages)
    errors = {"standard": [], "differentiated": []}
    steps, scale = [], 0.0
    for N in ladder:
        grid = StageGrid.from_final_time(12.0, N, tableau.c)
        runs = solve_schemes(list(errors), tableau, grid, space, IncidentWave(), threads=4)
        steps.append(grid.k)
        for method, run in runs.items():
            errors[method].append(run.max_error)
            scale = max(scale, run.reference_scale)
    floor = 10.0 * manufactured_dtn_error(space, 2 + 1j).relative_error * scale
    return np.array(steps), {m: np.array(e) for m, e in errors.items()}, floor


@pytest.mark.slow
class TestSuperconvergence:
    """Fitted rates of both schemes on the full L-shape ladder."""

    def test_three_stage_rates(self):
        steps, errors, floor = lshape_ladder(3)
        standard = floor_filtered_rate(steps, errors["standard"], floor)
        differentiated = floor_filtered_rate(steps, errors["differentiated"], floor)
        assert 2.6 <= standard.slope <= 3.4
        assert 4.4 <= differentiated.slope <= 5.6
        assert differentiated.slope >= standard.slope + 1.5

    def test_five_stage_rates(self):
        """Test rates 5 and 7, or a 50x smaller differentiated error when the floor cuts the ladder."""
        steps, errors, floor = lshape_ladder(5)
        fits = {m: floor_filtered_rate(steps, e, floor) for m, e in errors.items()}
        if all(fit is not None and len(fit.steps) >= 3 for fit in fits.values()):
            assert 4.4 <= fits["standard"].slope <= 5.6
            assert 6.2 <= fits["differentiated"].slope <= 7.8
        else:
            surviving = np.flatnonzero(errors["standard"] > floor)
            assert surviving.size > 0
            finest = surviving[-1]
            assert errors["differentiated"][finest] <= 0.02 * errors["standard"][finest]

"""
Unit tests for the convolution quadrature core.
"""

import numpy as np
import pandas as pd
import pytest

from rkcq_scatter import (
    ButcherTableau,
    ContractError,
    DomainError,
    StageGrid,
    Symbol,
    SymbolEvaluationError,
    TableauError,
    apply_convolution,
    apply_symbol,
    contour_radius,
    convergence_rate,
    radau_iia,
    scalar_convergence,
    weights,
)


class TestSymbol:
    """Test symbol construction and composition."""

    def test_action_requires_right_half_plane(self):
        sym = Symbol.power(1)
        with pytest.raises(DomainError):
            sym.action(-1.0 + 2.0j)

    def test_matrix_of_diagonal_symbol(self):
        sym = Symbol.diagonal("diag", [lambda s: s, lambda s: 1.0 / s])
        np.testing.assert_allclose(sym.matrix(2.0), np.diag([2.0, 0.5]))

    def test_composition(self):
        """Test that times() and divided_by_s() compose the scalar functions."""
        resolvent = Symbol.scalar("r", lambda s: 1.0 / (s + 1.0))
        product = resolvent.times(Symbol.power(2)).divided_by_s()
        s = 1.5 + 0.5j
        assert abs(product.action(s)(np.array([1.0]))[0] - s / (s + 1.0)) < 1e-15
        assert product.name == "r*s^2/s"

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            Symbol.power(1).times(Symbol.scalar("two", lambda s: s, dim=2))


class TestStageGrid:
    """Test the uniform stage grid."""

    def test_times(self):
        grid = StageGrid.from_final_time(1.0, 4, radau_iia(2).c)
        assert grid.k == 0.25
        assert grid.stage_times.shape == (4, 2)
        np.testing.assert_allclose(grid.stage_times[1], [0.25 + 0.25 / 3, 0.5])
        np.testing.assert_allclose(grid.output_times, [0.25, 0.5, 0.75, 1.0])
        assert grid.T == 1.0

    def test_invalid_grid(self):
        with pytest.raises(ContractError):
            StageGrid(0.0, 4, [1.0])
        with pytest.raises(ContractError):
            StageGrid(0.1, 0, [1.0])
        with pytest.raises(ContractError):
            StageGrid(0.1, 4, [1.0, 0.5])


class TestContourRadius:
    """Test the radius of the scaled circle."""

    def test_auto_radius(self):
        eps = np.finfo(float).eps
        assert contour_radius(10) == pytest.approx(eps ** (1 / 22))
        assert contour_radius(10, oversampling=3) == pytest.approx(eps ** (1 / 44))
        assert contour_radius(10, radius="auto") == contour_radius(10, radius=None)

    def test_explicit_radius(self):
        assert contour_radius(10, radius=0.9) == 0.9
        with pytest.raises(DomainError):
            contour_radius(10, radius=1.0)


class TestWeights:
    """Test the explicit weight matrices."""

    def test_integration_weights(self):
        """Test W_0 = kA and W_n = k 1 b^T for K(s) = 1/s."""
        t = radau_iia(2)
        grid = StageGrid(0.1, 20, t.c)
        w = weights(Symbol.power(-1), t, grid, oversampling=3)
        assert w.entries.shape == (21, 2, 2)
        assert not np.iscomplexobj(w.entries)
        np.testing.assert_allclose(w.entries[0], 0.1 * t.A, atol=1e-9)
        for n in range(1, 21):
            np.testing.assert_allclose(w.entries[n], 0.1 * np.outer(np.ones(2), t.b), atol=1e-9)

    def test_identity_weights(self):
        """Test that K(s) = 1 gives W_0 = I and no memory."""
        t = radau_iia(3)
        w = weights(Symbol.power(0), t, StageGrid(0.05, 12, t.c), oversampling=3)
        np.testing.assert_allclose(w.entries[0], np.eye(3), atol=1e-10)
        np.testing.assert_allclose(w.entries[1:], 0.0, atol=1e-10)

    def test_symmetric_and_full_contour_agree(self):
        """Test the half-contour shortcut against evaluation on every frequency."""
        t = radau_iia(2)
        grid = StageGrid(0.1, 10, t.c)
        fn = lambda s: 1.0 / (s + 1.0)
        half = weights(Symbol.scalar("r", fn), t, grid, radius=0.9)
        full = weights(Symbol.scalar("r", fn, conjugate_symmetric=False), t, grid, radius=0.9)
        np.testing.assert_allclose(half.entries, full.entries.real, atol=1e-13)
        np.testing.assert_allclose(full.entries.imag, 0.0, atol=1e-13)

    def test_csv_layout(self, tmp_path):
        t = radau_iia(2)
        w = weights(Symbol.power(-1), t, StageGrid(0.1, 3, t.c))
        path = tmp_path / "weights.csv"
        w.to_csv(path)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["n", "block_row", "block_col", "re", "im"]
        assert len(frame) == 4 * 2 * 2
        assert path.read_text().splitlines()[1].startswith("0,0,0,")

    def test_weights_of_product_are_block_convolution(self):
        """Test W(K1 K2)_n = sum_j W(K1)_j W(K2)_(n-j)."""
        t = radau_iia(2)
        grid = StageGrid(0.1, 64, t.c)
        k1 = Symbol.scalar("r1", lambda s: 1.0 / (s + 1.0))
        k2 = Symbol.scalar("r2", lambda s: s / (s + 2.0))
        w1 = weights(k1, t, grid, oversampling=3).entries
        w2 = weights(k2, t, grid, oversampling=3).entries
        product = weights(k1.times(k2), t, grid, oversampling=3).entries
        for n in range(grid.N + 1):
            expected = sum(w1[j] @ w2[n - j] for j in range(n + 1))
            np.testing.assert_allclose(product[n], expected, atol=1e-10)

    def test_threads_do_not_change_weights(self):
        t = radau_iia(3)
        grid = StageGrid(0.1, 16, t.c)
        sym = Symbol.scalar("r", lambda s: 1.0 / (s + 2.0))
        np.testing.assert_array_equal(weights(sym, t, grid, threads=1).entries,
                                      weights(sym, t, grid, threads=4).entries)


class TestApplySymbol:
    """Test the transform-based CQ application."""

    def test_matches_explicit_convolution(self):
        """Test apply_symbol against weights + apply_convolution at the same radius."""
        t = radau_iia(3)
        grid = StageGrid(0.1, 16, t.c)
        sym = Symbol.scalar("r", lambda s: 1.0 / (s + 1.0))
        samples = np.random.default_rng(0).standard_normal((16, 3))
        direct = apply_convolution(weights(sym, t, grid, radius=0.9), t, samples)
        fast = apply_symbol(sym, t, grid, samples, radius=0.9)
        assert fast.shape == (16,)
        np.testing.assert_allclose(fast, direct, rtol=1e-11, atol=1e-12)

    def test_integration_of_cosine(self):
        """Test that CQ[1/s] integrates cos(t) to sin(t) at fifth order accuracy."""
        t = radau_iia(3)
        grid = StageGrid(0.05, 40, t.c)
        out = apply_symbol(Symbol.power(-1), t, grid, np.cos(grid.stage_times), oversampling=3)
        np.testing.assert_allclose(out, np.sin(grid.output_times), atol=1e-6)

    @pytest.mark.parametrize("stages", [1, 2, 3, 5])
    def test_identity_reproduces_last_stage(self, stages):
        """Test that K(s) = 1 returns the last-stage samples to roundoff."""
        t = radau_iia(stages)
        grid = StageGrid(0.1, 64, t.c)
        samples = np.random.default_rng(stages).standard_normal((64, stages))
        out = apply_symbol(Symbol.power(0), t, grid, samples, radius=np.exp(-1.0 / 64))
        scale = np.max(np.abs(samples[:, -1]))
        np.testing.assert_allclose(out, samples[:, -1], rtol=0, atol=1e-12 * scale)

    def test_half_contour_matches_full(self):
        t = radau_iia(2)
        grid = StageGrid(0.1, 16, t.c)
        sym = Symbol.scalar("r", lambda s: s / (s + 1.0))
        samples = np.random.default_rng(3).standard_normal((16, 2))
        half = apply_symbol(sym, t, grid, samples, radius=0.9)
        full = apply_symbol(sym, t, grid, samples, radius=0.9, exploit_symmetry=False)
        np.testing.assert_allclose(half, full.real, rtol=1e-12, atol=1e-13)

    def test_linear_in_samples(self):
        t = radau_iia(3)
        grid = StageGrid(0.1, 20, t.c)
        sym = Symbol.scalar("r", lambda s: 1.0 / (s * (s + 2.0)))
        rng = np.random.default_rng(11)
        g, h = rng.standard_normal((2, 20, 3))
        alpha, beta = 1.7, -0.4
        combined = apply_symbol(sym, t, grid, alpha * g + beta * h, radius=0.9)
        separate = (alpha * apply_symbol(sym, t, grid, g, radius=0.9)
                    + beta * apply_symbol(sym, t, grid, h, radius=0.9))
        np.testing.assert_allclose(combined, separate, rtol=1e-12, atol=1e-13)

    def test_zero_samples_give_zero(self):
        t = radau_iia(2)
        grid = StageGrid(0.1, 16, t.c)
        out = apply_symbol(Symbol.power(1), t, grid, np.zeros((16, 2)))
        np.testing.assert_array_equal(out, 0.0)

    def test_full_contour_of_real_data_is_real(self):
        t = radau_iia(2)
        grid = StageGrid(0.1, 32, t.c)
        samples = np.random.default_rng(4).standard_normal((32, 2))
        full = apply_symbol(Symbol.power(-1), t, grid, samples, exploit_symmetry=False)
        assert np.max(np.abs(full.imag)) <= 1e-11 * np.max(np.abs(full))

    def test_complex_samples_give_complex_output(self):
        t = radau_iia(2)
        grid = StageGrid(0.1, 8, t.c)
        samples = (1.0 + 2.0j) * np.ones((8, 2))
        assert np.iscomplexobj(apply_symbol(Symbol.power(-1), t, grid, samples, radius=0.9))

    def test_vector_symbol_acts_componentwise(self):
        """Test a two-component diagonal symbol against two scalar runs."""
        t = radau_iia(2)
        grid = StageGrid(0.1, 12, t.c)
        fns = [lambda s: 1.0 / s, lambda s: 1.0 / (s + 3.0)]
        samples = np.random.default_rng(5).standard_normal((12, 2, 2))
        out = apply_symbol(Symbol.diagonal("d", fns), t, grid, samples, radius=0.9)
        assert out.shape == (12, 2)
        for i, fn in enumerate(fns):
            single = apply_symbol(Symbol.scalar("f", fn), t, grid, samples[:, :, i], radius=0.9)
            np.testing.assert_allclose(out[:, i], single, rtol=1e-12, atol=1e-13)

    def test_evaluation_failures_are_wrapped(self):
        """Test that a failing symbol raises SymbolEvaluationError carrying the frequency."""
        t = radau_iia(2)
        grid = StageGrid(0.1, 4, t.c)

        def evaluate(s):
            def act(x):
                raise ZeroDivisionError("division by zero")
            return act

        broken = Symbol("broken", 1, evaluate)
        with pytest.raises(SymbolEvaluationError) as info:
            apply_symbol(broken, t, grid, np.ones((4, 2)))
        assert isinstance(info.value.original_exception, ZeroDivisionError)

    def test_requires_stiffly_accurate_tableau(self):
        midpoint = ButcherTableau("midpoint", [[0.5]], [1.0], [0.5], 2, 1)
        grid = StageGrid(0.1, 4, midpoint.c)
        with pytest.raises(TableauError):
            apply_symbol(Symbol.power(-1), midpoint, grid, np.ones((4, 1)))

    def test_sample_shape_checks(self):
        t = radau_iia(2)
        grid = StageGrid(0.1, 4, t.c)
        with pytest.raises(ContractError):
            apply_symbol(Symbol.power(-1), t, grid, np.ones((5, 2)))
        with pytest.raises(ContractError):
            apply_symbol(Symbol.power(-1), t, grid, np.ones((4, 3)))


class TestConvergence:
    """Test rate fitting and the scalar convergence harness."""

    def test_rate_of_exact_power_law(self):
        ks = [0.1, 0.05, 0.025]
        fit = convergence_rate([(k, 3.0 * k ** 2) for k in ks])
        np.testing.assert_allclose(fit.pair_rates, [2.0, 2.0])
        assert fit.slope == pytest.approx(2.0)
        assert fit.rows()[0][2] is None

    @pytest.mark.parametrize("points", [
        [(0.1, 1e-3)],
        [(0.05, 1e-3), (0.1, 1e-4)],
        [(0.1, 1e-3), (0.05, 0.0)],
    ])
    def test_invalid_ladders(self, points):
        with pytest.raises(ContractError):
            convergence_rate(points)

    @pytest.mark.parametrize("stages, mu, ladder", [
        (2, -1, [20, 40, 80, 160]),
        (3, -1, [20, 40, 80]),
        (2, 1, [40, 80, 160, 320]),
        (2, 2, [40, 80, 160, 320]),
        (3, 1, [40, 80, 160, 320]),
        (3, 2, [40, 80, 160, 320]),
    ])
    def test_rate_is_min_of_order_and_reduced_stage_order(self, stages, mu, ladder):
        """Test that K(s) = s^mu on sin^4 converges like k^min(p, q + 1 - mu)."""
        tableau = radau_iia(stages)
        expected = min(tableau.classical_order, tableau.stage_order + 1 - mu)
        fit = convergence_rate(scalar_convergence(mu, tableau, ladder))
        assert fit.pair_rates[-1] == pytest.approx(expected, abs=0.3)

    @pytest.mark.parametrize("stages", [2, 3])
    def test_identity_is_exact(self, stages):
        """Test that K(s) = 1 reproduces the data up to roundoff, so it has no rate."""
        errors = [e for _, e in scalar_convergence(0, radau_iia(stages), [20, 40, 80])]
        assert max(errors) <= 1e-10

    def test_unsupported_power(self):
        with pytest.raises(ContractError):
            scalar_convergence(3, radau_iia(2), [10, 20])

"""Tests for the primal-dual solver."""

import math
from unittest.mock import patch

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from least_gradient.anisotropy import MetricIntegrand
from least_gradient.certify import CertifyTolerances, cross_certify, verify_calibration
from least_gradient.errors import ConfigError, DimensionMismatchError, NumericalFailure
from least_gradient.grid import rasterize
from least_gradient.operators import GradientOperator
from least_gradient.scenarios import (
    get_scenario,
    rasterize_scenario,
    sample_u,
    scenario_integrand,
)
from least_gradient.solver import (
    INIT_RANDOM,
    SolveConfig,
    estimate_op_norm,
    op_norm_bound,
    solve,
)

NAMES = ["square_updown", "bm_disk", "disk_arc", "notch", "fan3"]


def _unit_square(f_func):
    return rasterize(
        lambda x, y: (x > 0) & (x < 1) & (y > 0) & (y < 1),
        lambda x, y: (y < 1e-9) | (y > 1 - 1e-9),
        f_func,
        (0.0, 0.0, 1.0, 1.0),
        8,
    )


class TestSolveSmallSquare:
    """Test the iteration on the 8×8 square with f = y."""

    def test_should_approach_unit_optimum(self, small_square, euclidean):
        """Should keep primal ≥ 1 and bring it close to 1."""
        # Arrange
        grid, faces = small_square
        cfg = SolveConfig(max_iters=4000, gap_tol=1e-3, log_every=100)

        # Act
        report = solve(euclidean, grid, faces, cfg)

        # Assert
        assert 1.0 - 1e-9 <= report.primal <= 1.02
        assert report.dual <= 1.0 + 1e-9
        assert report.iters_used <= 4000

    def test_should_satisfy_weak_duality_at_every_record(self, small_square, euclidean):
        """Should never log a negative gap."""
        # Arrange
        grid, faces = small_square
        cfg = SolveConfig(max_iters=1000, gap_tol=1e-8, log_every=50)

        # Act
        report = solve(euclidean, grid, faces, cfg)

        # Assert
        assert report.history[0].iteration == 1
        assert report.history[-1].iteration == report.iters_used
        assert all(record.gap >= -1e-8 for record in report.history)

    def test_should_return_nan_outside_and_finite_inside(self, small_square, euclidean):
        """Should follow the field conventions of the grid module."""
        # Arrange
        grid, faces = small_square

        # Act
        report = solve(euclidean, grid, faces, SolveConfig(max_iters=50))

        # Assert
        assert_array_equal(np.isnan(report.u), ~grid.inside)
        assert report.z.shape == grid.shape + (2,)
        assert np.all(np.isfinite(report.z[~np.isnan(report.z)]))

    def test_should_be_deterministic(self, small_square, euclidean):
        """Should produce identical output for identical input and seed."""
        # Arrange
        grid, faces = small_square
        cfg = SolveConfig(max_iters=200, init=INIT_RANDOM, seed=3)

        # Act
        first = solve(euclidean, grid, faces, cfg)
        second = solve(euclidean, grid, faces, cfg)

        # Assert
        assert_array_equal(first.u, second.u)
        assert_array_equal(first.z, second.z)
        assert first.history == second.history

    def test_should_stop_at_max_iters_without_convergence(self, small_square, euclidean):
        """Should report converged = false when max_iters runs out."""
        # Arrange
        grid, faces = small_square

        # Act
        report = solve(euclidean, grid, faces, SolveConfig(max_iters=5, gap_tol=1e-12))

        # Assert
        assert not report.converged
        assert report.iters_used == 5

    def test_should_converge_at_first_iteration_for_zero_datum(self, euclidean):
        """Should stop at once with u = 0, z = 0 and a zero gap when f ≡ 0."""
        # Arrange
        grid, faces = _unit_square(lambda x, y: np.zeros_like(x))
        op = GradientOperator(grid, faces)

        # Act
        report = solve(euclidean, grid, faces, SolveConfig())

        # Assert
        assert report.converged
        assert report.iters_used == 1
        assert report.gap == 0.0
        assert_array_equal(report.u[grid.inside], 0.0)
        assert_array_equal(report.z[op.active], 0.0)

    @pytest.mark.parametrize(
        "m,optimum",
        [
            (MetricIntegrand.pnorm(1), 1.0),
            (MetricIntegrand.pnorm(math.inf), 1.0),
            (None, 2.0),
        ],
    )
    def test_should_solve_anisotropic_square(self, small_square, m, optimum):
        """Should reach the optimum of ℓ¹, ℓ∞ and a(x) = 2 integrands on the ramp."""
        # Arrange
        grid, faces = small_square
        m = m or MetricIntegrand.weighted(np.full(grid.shape, 2.0))
        cfg = SolveConfig(max_iters=20000, gap_tol=1e-4)

        # Act
        report = solve(m, grid, faces, cfg)

        # Assert
        assert report.converged
        assert report.dual <= optimum + 1e-9 <= report.primal + 2e-9
        assert report.primal == pytest.approx(optimum, rel=1e-3)
        polar = m.polar_field(np.where(GradientOperator(grid, faces).active, report.z, 0.0))
        assert float(np.max(polar)) <= 1.0 + 1e-12


class TestSolveInvariants:
    """Test properties that hold at every record on every scenario."""

    @pytest.mark.parametrize("name", NAMES)
    def test_should_keep_monotone_certified_gap(self, name):
        """Should log nonincreasing gaps, a feasible z and u within [min f, max f]."""
        # Arrange
        scenario = get_scenario(name)
        grid, faces = rasterize_scenario(scenario, 16)
        m = scenario_integrand(scenario, grid)
        op = GradientOperator(grid, faces)
        lo, hi = faces.f_range()
        cfg = SolveConfig(max_iters=300, gap_tol=1e-12, log_every=20)

        # Act
        report = solve(m, grid, faces, cfg)

        # Assert
        gaps = [record.gap for record in report.history]
        assert all(later <= earlier for earlier, later in zip(gaps, gaps[1:]))
        assert all(record.dual <= record.primal + 1e-12 for record in report.history)
        assert float(np.max(m.polar_field(np.where(op.active, report.z, 0.0)))) <= 1.0 + 1e-12
        assert lo <= float(np.min(report.u[grid.inside]))
        assert float(np.max(report.u[grid.inside])) <= hi

    def test_should_report_first_non_finite_iteration(self, small_square, euclidean):
        """Should raise NumericalFailure naming the iteration where NaN appeared."""
        # Arrange
        grid, faces = small_square
        project = MetricIntegrand.project_field
        calls = []

        def failing_projection(self, z):
            calls.append(len(calls) + 1)
            out = project(self, z)
            return out * np.nan if len(calls) == 3 else out

        # Act
        with patch.object(MetricIntegrand, "project_field", failing_projection):
            with pytest.raises(NumericalFailure) as excinfo:
                solve(euclidean, grid, faces, SolveConfig(max_iters=500))

        # Assert
        assert excinfo.value.iteration == 3


class TestSolveValidation:
    """Test rejected configurations."""

    @pytest.mark.parametrize(
        "cfg",
        [
            SolveConfig(max_iters=0),
            SolveConfig(log_every=0),
            SolveConfig(check_every=0),
            SolveConfig(gap_tol=0.0),
            SolveConfig(theta=1.5),
            SolveConfig(init="ones"),
            SolveConfig(tau=0.125, sigma=0.125),
            SolveConfig(tau=-1.0),
        ],
    )
    def test_should_reject_invalid_configuration(self, small_square, euclidean, cfg):
        """Should raise ConfigError before iterating."""
        # Arrange
        grid, faces = small_square

        # Act & Assert
        with pytest.raises(ConfigError):
            solve(euclidean, grid, faces, cfg)

    def test_should_reject_empty_gamma(self, euclidean):
        """Should refuse a problem with no Dirichlet datum."""
        # Arrange
        grid, faces = rasterize(
            lambda x, y: (x > 0) & (x < 1) & (y > 0) & (y < 1),
            lambda x, y: np.zeros_like(x, dtype=bool),
            lambda x, y: y,
            (0.0, 0.0, 1.0, 1.0),
            8,
        )

        # Act & Assert
        with pytest.raises(ConfigError, match="Γ is empty"):
            solve(euclidean, grid, faces, SolveConfig(max_iters=10))

    def test_should_reject_degenerate_integrand(self, small_square):
        """Should refuse λ = 0."""
        # Arrange
        grid, faces = small_square
        m = MetricIntegrand.weighted(np.zeros(grid.shape))

        # Act & Assert
        with pytest.raises(ConfigError, match="degenerate"):
            solve(m, grid, faces, SolveConfig(max_iters=10))

    def test_should_reject_initial_guess_of_wrong_shape(self, small_square, euclidean):
        """Should raise DimensionMismatchError for a misshaped u0."""
        # Arrange
        grid, faces = small_square

        # Act & Assert
        with pytest.raises(DimensionMismatchError):
            solve(euclidean, grid, faces, SolveConfig(u0=np.zeros((3, 3))))


class TestOperatorNorm:
    """Test the step-size bound."""

    def test_should_stay_below_analytic_bound(self, small_square):
        """Should estimate ‖K‖ no larger than √8/h."""
        # Arrange
        grid, faces = small_square

        # Act
        estimate = estimate_op_norm(grid, faces)

        # Assert
        assert op_norm_bound(grid) == pytest.approx(math.sqrt(8.0) * 8)
        assert 0.0 < estimate <= op_norm_bound(grid) * (1 + 1e-6)


class TestSolveThenCertify:
    """Test that the solver's own output passes the certifier."""

    def test_should_certify_solver_pair_on_square(self, square_16, euclidean):
        """Should pass verify_calibration on the returned (u, z)."""
        # Arrange
        _, grid, faces = square_16
        report = solve(euclidean, grid, faces, SolveConfig(max_iters=20000, gap_tol=1e-8))

        # Act
        calibration = verify_calibration(euclidean, grid, faces, report.u, report.z)

        # Assert
        assert report.converged
        assert calibration.passed, calibration.to_text()
        assert calibration.r_feas <= 1e-9
        assert calibration.r_pair <= 1e-6


@pytest.mark.slow
class TestSolveScenarios:
    """Longer runs on the built-in scenarios."""

    @pytest.mark.parametrize("name", NAMES)
    def test_should_converge_at_default_resolution(self, name):
        """Should reach a relative gap of 1e-4 within 20000 iterations at n = 64."""
        # Arrange
        scenario = get_scenario(name)
        grid, faces = rasterize_scenario(scenario, 64)
        m = scenario_integrand(scenario, grid)
        cfg = SolveConfig(max_iters=20000, gap_tol=1e-4)

        # Act
        report = solve(m, grid, faces, cfg)

        # Assert
        assert report.converged, report.final
        assert report.relative_gap <= 1e-4
        assert report.dual <= report.primal
        assert report.primal == pytest.approx(scenario.optimum, rel=5e-2)

    def test_should_cross_certify_bm_family_with_solver_field(self, bm_disk_32, euclidean):
        """Should pair the solver's z with every u_λ to within five percent."""
        # Arrange
        scenario, grid, faces = bm_disk_32
        report = solve(euclidean, grid, faces, SolveConfig(gap_tol=1e-4))
        members = [sample_u(scenario, grid, lam) for lam in scenario.family]

        # Act
        reports = cross_certify(euclidean, grid, faces, report.z, members)

        # Assert
        assert report.converged
        assert len(reports) == 5
        assert all(r.r_pair <= 0.05 for r in reports), [r.r_pair for r in reports]
        assert all(r.r_feas <= 1e-9 for r in reports)

    def test_should_cross_certify_both_fan_profiles_with_solver_field(self, euclidean):
        """Should pair the solver's z with the ramp and the step fan alike."""
        # Arrange
        scenario = get_scenario("fan3")
        grid, faces = rasterize_scenario(scenario, 32)
        report = solve(euclidean, grid, faces, SolveConfig(gap_tol=1e-4))
        members = [sample_u(scenario, grid, g) for g in scenario.family]
        tols = CertifyTolerances(pair=0.1, exclusion_factor=8.0)

        # Act
        reports = cross_certify(
            euclidean, grid, faces, report.z, members, tols, scenario.singular
        )

        # Assert
        assert report.converged
        assert [r.r_pair <= tols.pair for r in reports] == [True, True]

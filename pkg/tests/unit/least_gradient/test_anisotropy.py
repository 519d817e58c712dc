"""Tests for metric integrands, polars and polar-ball projections."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from least_gradient.anisotropy import (
    KINDS,
    MetricIntegrand,
    check_integrand,
    eval_phi,
    eval_polar,
    extend_weight,
    integrand_from_setting,
    project_polar_ball,
)
from least_gradient.errors import ConfigError, InvalidArgumentError
from least_gradient.grid import save_field


def _integrand(kind: str) -> MetricIntegrand:
    if kind == "weighted":
        return MetricIntegrand.weighted(np.full((3, 3), 2.0))
    return MetricIntegrand(kind)


class TestPointwiseEvaluation:
    """Test φ, φ⁰ and the projection at single points."""

    @pytest.mark.parametrize(
        "m,xi,expected",
        [
            (MetricIntegrand.euclidean(), (3.0, 4.0), 5.0),
            (MetricIntegrand.weighted(np.full((2, 2), 2.0)), (3.0, 4.0), 10.0),
            (MetricIntegrand.pnorm(1), (3.0, -4.0), 7.0),
            (MetricIntegrand.pnorm(2), (3.0, 4.0), 5.0),
            (MetricIntegrand.pnorm(math.inf), (3.0, -4.0), 4.0),
        ],
    )
    def test_should_evaluate_phi(self, m, xi, expected):
        """Should return the integrand value of each kind."""
        # Act
        value = eval_phi(m, (0, 0), xi)

        # Assert
        assert value == pytest.approx(expected)

    @pytest.mark.parametrize(
        "m,xistar,expected",
        [
            (MetricIntegrand.euclidean(), (3.0, 4.0), 5.0),
            (MetricIntegrand.weighted(np.full((2, 2), 2.0)), (0.0, 2.0), 1.0),
            (MetricIntegrand.pnorm(1), (1.0, 1.0), 1.0),
            (MetricIntegrand.pnorm(math.inf), (1.0, -1.0), 2.0),
        ],
    )
    def test_should_evaluate_polar(self, m, xistar, expected):
        """Should return the dual norm of each kind."""
        # Act
        value = eval_polar(m, (1, 1), xistar)

        # Assert
        assert value == pytest.approx(expected)

    @pytest.mark.parametrize(
        "m,z,expected",
        [
            (MetricIntegrand.euclidean(), (3.0, 4.0), (0.6, 0.8)),
            (MetricIntegrand.weighted(np.full((2, 2), 2.0)), (3.0, 4.0), (1.2, 1.6)),
            (MetricIntegrand.pnorm(1), (2.0, -0.5), (1.0, -0.5)),
            (MetricIntegrand.pnorm(math.inf), (2.0, 0.5), (1.0, 0.0)),
            (MetricIntegrand.pnorm(math.inf), (0.8, 0.6), (0.6, 0.4)),
            (MetricIntegrand.euclidean(), (0.3, -0.4), (0.3, -0.4)),
        ],
    )
    def test_should_project_onto_polar_ball(self, m, z, expected):
        """Should return the nearest feasible point and keep feasible points fixed."""
        # Act
        projected = project_polar_ball(m, (0, 1), z)

        # Assert
        assert_allclose(projected, expected, atol=1e-12)
        assert eval_polar(m, (0, 1), projected) <= 1.0 + 1e-12

    @pytest.mark.parametrize("xi", [(np.nan, 1.0), (np.inf, 0.0), (1.0, 2.0, 3.0)])
    def test_should_reject_invalid_vectors(self, xi):
        """Should raise InvalidArgumentError for non-finite or wrongly shaped input."""
        # Act & Assert
        with pytest.raises(InvalidArgumentError):
            eval_phi(MetricIntegrand.euclidean(), None, xi)

    def test_should_reject_out_of_range_weight_cell(self):
        """Should raise InvalidArgumentError for a cell outside the weight field."""
        # Arrange
        m = MetricIntegrand.weighted(np.ones((2, 2)))

        # Act & Assert
        with pytest.raises(InvalidArgumentError):
            eval_phi(m, (5, 0), (1.0, 0.0))

    @pytest.mark.parametrize("a", [0.0, -1.0])
    def test_should_reject_polar_at_non_positive_weight(self, a):
        """Should raise InvalidArgumentError instead of dividing by a(x) ≤ 0."""
        # Arrange
        m = MetricIntegrand.weighted(np.array([[1.0, a]]))

        # Act & Assert
        assert eval_polar(m, (0, 0), (0.0, 2.0)) == pytest.approx(2.0)
        with pytest.raises(InvalidArgumentError, match="not positive"):
            eval_polar(m, (0, 1), (0.0, 2.0))
        with pytest.raises(InvalidArgumentError, match="not positive"):
            project_polar_ball(m, (0, 1), (0.0, 2.0))


class TestIntegrandConstruction:
    """Test kinds, ellipticity constants and configuration parsing."""

    @pytest.mark.parametrize(
        "m,lam,Lam",
        [
            (MetricIntegrand.euclidean(), 1.0, 1.0),
            (MetricIntegrand.weighted(np.array([[0.5, 3.0]])), 0.5, 3.0),
            (MetricIntegrand.pnorm(1), 1.0, math.sqrt(2.0)),
            (MetricIntegrand.pnorm(2), 1.0, 1.0),
            (MetricIntegrand.pnorm(math.inf), 1.0 / math.sqrt(2.0), 1.0),
        ],
    )
    def test_should_report_ellipticity_constants(self, m, lam, Lam):
        """Should give λ|ξ| ≤ φ(ξ) ≤ Λ|ξ| constants per kind."""
        # Assert
        assert m.lam == pytest.approx(lam)
        assert m.Lam == pytest.approx(Lam)

    @pytest.mark.parametrize("p", [3, 1.5, 0])
    def test_should_reject_unsupported_p(self, p):
        """Should only build ℓ¹, ℓ² and ℓ∞ integrands."""
        # Act & Assert
        with pytest.raises(ConfigError):
            MetricIntegrand.pnorm(p)

    def test_should_reject_unknown_kind(self):
        """Should list the known kinds in the error."""
        # Act & Assert
        with pytest.raises(ConfigError, match="euclidean"):
            MetricIntegrand("l7")

    def test_should_treat_constant_weight_as_scaled_euclidean(self):
        """Should scale φ by c and φ⁰ by 1/c exactly for a ≡ c."""
        # Arrange
        c = 1.75
        weighted = MetricIntegrand.weighted(np.full((4, 4), c))
        plain = MetricIntegrand.euclidean()
        xi = np.random.default_rng(3).normal(size=(4, 4, 2))

        # Act & Assert
        assert_allclose(weighted.phi_field(xi), c * plain.phi_field(xi), rtol=0, atol=0)
        assert_allclose(weighted.polar_field(xi), plain.polar_field(xi) / c, rtol=0, atol=0)

    def test_should_extend_weight_from_nearest_inside_cell(self):
        """Should copy each outside cell's weight from the closest inside cell."""
        # Arrange
        inside = np.zeros((3, 4), dtype=bool)
        inside[1, 1:3] = True
        weight = np.zeros((3, 4))
        weight[1, 1], weight[1, 2] = 2.0, 5.0

        # Act
        extended = extend_weight(weight, inside)

        # Assert
        assert extended[1, 0] == 2.0
        assert extended[1, 3] == 5.0
        assert extended[0, 1] == 2.0
        assert extended[2, 2] == 5.0

    @pytest.mark.parametrize("setting", ["euclidean", "p1", "p2", "pinf"])
    def test_should_parse_plain_settings(self, small_square, setting):
        """Should build the named kind."""
        # Arrange
        grid, _ = small_square

        # Act
        m = integrand_from_setting(setting, grid)

        # Assert
        assert m.kind == setting

    def test_should_load_weighted_setting_from_field_file(self, small_square, temp_dir):
        """Should read the weight CSV and extend it to outside cells."""
        # Arrange
        grid, _ = small_square
        weight = np.where(grid.inside, 3.0, np.nan)
        path = f"{temp_dir}/weight.csv"
        save_field(path, grid, weight)

        # Act
        m = integrand_from_setting(f"weighted:{path}", grid)

        # Assert
        assert m.kind == "weighted"
        assert np.all(m.weight == 3.0)
        assert m.lam == 3.0

    @pytest.mark.parametrize("setting", ["weighted", "p1:extra", "nosuch"])
    def test_should_reject_malformed_settings(self, small_square, setting):
        """Should raise ConfigError for missing or unexpected arguments."""
        # Arrange
        grid, _ = small_square

        # Act & Assert
        with pytest.raises(ConfigError):
            integrand_from_setting(setting, grid)


class TestCheckIntegrand:
    """Test the sampled invariant diagnostics."""

    @pytest.mark.parametrize("kind", KINDS)
    def test_should_report_no_violation_for_supported_kinds(self, kind):
        """Should find every invariant satisfied."""
        # Act
        report = check_integrand(_integrand(kind), 1000)

        # Assert
        assert report.ok, report.violations
        assert report.samples == 1000

    def test_should_report_ellipticity_violation_for_zero_weight(self):
        """Should flag λ > 0 as violated when a weight vanishes."""
        # Arrange
        weight = np.ones((3, 3))
        weight[1, 1] = 0.0

        # Act
        report = check_integrand(MetricIntegrand.weighted(weight), 200)

        # Assert
        assert report.degenerate
        assert not report.ok
        assert report.worst == ("ellipticity", math.inf)

    def test_should_be_deterministic_for_a_fixed_seed(self):
        """Should reproduce the same diagnostics from the same seed."""
        # Act
        first = check_integrand(MetricIntegrand.pnorm(1), 300, seed=7)
        second = check_integrand(MetricIntegrand.pnorm(1), 300, seed=7)

        # Assert
        assert first.violations == second.violations

    def test_should_reject_zero_samples(self):
        """Should require at least one sample."""
        # Act & Assert
        with pytest.raises(InvalidArgumentError):
            check_integrand(MetricIntegrand.euclidean(), 0)

    @pytest.mark.parametrize("kind", KINDS)
    def test_should_satisfy_cauchy_schwarz_on_fields(self, kind):
        """Should keep ⟨ξ*, ξ⟩ ≤ φ⁰(ξ*) φ(ξ) on whole fields."""
        # Arrange
        m = _integrand(kind)
        rng = np.random.default_rng(11)
        xi = rng.normal(size=(3, 3, 2)) * 4.0
        xistar = rng.normal(size=(3, 3, 2)) * 4.0

        # Act
        pairing = np.einsum("...k,...k->...", xistar, xi)
        bound = m.polar_field(xistar) * m.phi_field(xi)

        # Assert
        assert np.all(pairing <= bound + 1e-12)

"""Metric integrands: the anisotropy φ, its polar φ⁰ and the polar-ball projection.

Supported kinds all have closed-form polars, so every projection is exact:

    kind        φ(x, ξ)       φ⁰(x, ξ*)        polar ball
    euclidean   |ξ|           |ξ*|             disk
    weighted    a(x)|ξ|       |ξ*| / a(x)      disk of radius a(x)
    p1          ‖ξ‖₁          ‖ξ*‖∞            square
    p2          ‖ξ‖₂          ‖ξ*‖₂            disk
    pinf        ‖ξ‖∞          ‖ξ*‖₁            diamond

Field-level methods take arrays whose last axis has length 2 and whose leading
axes match the raster; the scalar operations take one cell index and one vector.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage

from least_gradient.config import DEFAULT_SEED
from least_gradient.errors import ConfigError, InvalidArgumentError
from least_gradient.grid import DomainGrid, load_field

KINDS = ("euclidean", "weighted", "p1", "p2", "pinf")

CellIndex = Tuple[int, int]

# Directions used to sample the bipolar identity; a multiple of 8 so the
# vertices of the ℓ¹ and ℓ∞ unit balls are hit exactly.
_BIPOLAR_DIRECTIONS = 720
_BIPOLAR_TOL = 1e-3
_INVARIANT_TOL = 1e-9


def _as_vector(xi: ArrayLike) -> NDArray[np.float64]:
    vec = np.asarray(xi, dtype=float)
    if vec.shape != (2,):
        raise InvalidArgumentError(f"Expected a 2-vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise InvalidArgumentError(f"Non-finite vector {vec.tolist()}")
    return vec


@dataclass(frozen=True)
class MetricIntegrand:
    """Anisotropy φ with its ellipticity constants.

    For the weighted kind ``weight`` holds a(x) per raster cell (shape ny × nx).
    """

    kind: str
    weight: Optional[NDArray[np.float64]] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"Unknown anisotropy kind '{self.kind}'. Known: {', '.join(KINDS)}")
        if self.kind == "weighted":
            if self.weight is None:
                raise ConfigError("Weighted anisotropy requires a weight field")
            weight = np.array(self.weight, dtype=float)
            if weight.ndim != 2:
                raise ConfigError(f"Weight field must be 2D, got shape {weight.shape}")
            if not np.all(np.isfinite(weight)):
                raise ConfigError("Weight field must be finite on every cell")
            weight.setflags(write=False)
            object.__setattr__(self, "weight", weight)
        elif self.weight is not None:
            raise ConfigError(f"Anisotropy kind '{self.kind}' takes no weight field")

    @classmethod
    def euclidean(cls) -> "MetricIntegrand":
        return cls("euclidean")

    @classmethod
    def weighted(cls, weight: ArrayLike) -> "MetricIntegrand":
        return cls("weighted", np.asarray(weight, dtype=float))

    @classmethod
    def pnorm(cls, p: float) -> "MetricIntegrand":
        """ℓp integrand for p in {1, 2, ∞}."""
        if p == 1:
            return cls("p1")
        if p == 2:
            return cls("p2")
        if p == math.inf:
            return cls("pinf")
        raise ConfigError(f"Only p in {{1, 2, inf}} is supported, got {p}")

    @property
    def lam(self) -> float:
        """Lower ellipticity constant λ."""
        if self.kind == "weighted":
            assert self.weight is not None
            return float(self.weight.min())
        if self.kind == "pinf":
            return 1.0 / math.sqrt(2.0)
        return 1.0

    @property
    def Lam(self) -> float:
        """Upper ellipticity constant Λ."""
        if self.kind == "weighted":
            assert self.weight is not None
            return float(self.weight.max())
        if self.kind == "p1":
            return math.sqrt(2.0)
        return 1.0

    # Field-level evaluation -------------------------------------------------

    def _weight_like(self, leading_shape: Tuple[int, ...]) -> NDArray[np.float64]:
        assert self.weight is not None
        if self.weight.shape != leading_shape:
            raise InvalidArgumentError(
                f"Weight field shape {self.weight.shape} does not match {leading_shape}"
            )
        return self.weight

    def phi_field(self, xi: NDArray[np.float64]) -> NDArray[np.float64]:
        """φ evaluated at every cell; ``xi`` has shape (..., 2)."""
        if self.kind == "p1":
            return np.abs(xi[..., 0]) + np.abs(xi[..., 1])
        if self.kind == "pinf":
            return np.maximum(np.abs(xi[..., 0]), np.abs(xi[..., 1]))
        norm = np.hypot(xi[..., 0], xi[..., 1])
        if self.kind == "weighted":
            return self._weight_like(norm.shape) * norm
        return norm

    def polar_field(self, xistar: NDArray[np.float64]) -> NDArray[np.float64]:
        """φ⁰ evaluated at every cell; ``xistar`` has shape (..., 2)."""
        if self.kind == "p1":
            return np.maximum(np.abs(xistar[..., 0]), np.abs(xistar[..., 1]))
        if self.kind == "pinf":
            return np.abs(xistar[..., 0]) + np.abs(xistar[..., 1])
        norm = np.hypot(xistar[..., 0], xistar[..., 1])
        if self.kind == "weighted":
            return norm / self._weight_like(norm.shape)
        return norm

    def project_field(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Euclidean projection of every cell's vector onto {φ⁰ ≤ 1}."""
        if self.kind == "p1":
            return np.clip(z, -1.0, 1.0)
        if self.kind == "pinf":
            return _project_l1_ball(z)
        radius = self._weight_like(z.shape[:-1]) if self.kind == "weighted" else 1.0
        norm = np.hypot(z[..., 0], z[..., 1])
        scale = np.minimum(1.0, radius / np.maximum(norm, np.finfo(float).tiny))
        return z * scale[..., None]

    # Pointwise evaluation ---------------------------------------------------

    def _weight_at(self, cell: Optional[CellIndex]) -> float:
        if self.kind != "weighted":
            return 1.0
        assert self.weight is not None
        if cell is None:
            raise InvalidArgumentError("Weighted anisotropy needs a cell index")
        j, i = cell
        ny, nx = self.weight.shape
        if not (0 <= j < ny and 0 <= i < nx):
            raise InvalidArgumentError(f"Cell {cell} is outside the weight field")
        return float(self.weight[j, i])

    def _radius_at(self, cell: Optional[CellIndex]) -> float:
        radius = self._weight_at(cell)
        if radius <= 0.0:
            raise InvalidArgumentError(f"Weight at cell {cell} is not positive ({radius:g})")
        return radius

    def phi(self, cell: Optional[CellIndex], xi: ArrayLike) -> float:
        vec = _as_vector(xi)
        return float(self._unweighted_phi(vec) * self._weight_at(cell))

    def polar(self, cell: Optional[CellIndex], xistar: ArrayLike) -> float:
        vec = _as_vector(xistar)
        return float(self._unweighted_polar(vec) / self._radius_at(cell))

    def project(self, cell: Optional[CellIndex], z: ArrayLike) -> NDArray[np.float64]:
        vec = _as_vector(z)
        if self.kind == "p1":
            return np.clip(vec, -1.0, 1.0)
        if self.kind == "pinf":
            return _project_l1_ball(vec[None, :])[0]
        radius = self._radius_at(cell)
        norm = float(np.hypot(vec[0], vec[1]))
        if norm <= radius:
            return vec
        return vec * (radius / norm)

    def _unweighted_phi(self, vec: NDArray[np.float64]) -> float:
        if self.kind == "p1":
            return float(np.abs(vec).sum())
        if self.kind == "pinf":
            return float(np.abs(vec).max())
        return float(np.hypot(vec[0], vec[1]))

    def _unweighted_polar(self, vec: NDArray[np.float64]) -> float:
        if self.kind == "p1":
            return float(np.abs(vec).max())
        if self.kind == "pinf":
            return float(np.abs(vec).sum())
        return float(np.hypot(vec[0], vec[1]))


def _project_l1_ball(z: NDArray[np.float64]) -> NDArray[np.float64]:
    """Project 2-vectors onto the unit ℓ¹ ball by soft thresholding.

    In 2D the threshold has a closed form: μ = max(0, (|a|+|b|-1)/2), taking the
    larger magnitude alone when the smaller one would be thresholded away.
    """
    a = np.abs(z[..., 0])
    b = np.abs(z[..., 1])
    big = np.maximum(a, b)
    small = np.minimum(a, b)
    mu = np.where(big - small >= 1.0, big - 1.0, 0.5 * (a + b - 1.0))
    mu = np.where(a + b <= 1.0, 0.0, mu)
    return np.sign(z) * np.maximum(np.abs(z) - mu[..., None], 0.0)


def eval_phi(m: MetricIntegrand, x: Optional[CellIndex], xi: ArrayLike) -> float:
    return m.phi(x, xi)


def eval_polar(m: MetricIntegrand, x: Optional[CellIndex], xistar: ArrayLike) -> float:
    return m.polar(x, xistar)


def project_polar_ball(
    m: MetricIntegrand, x: Optional[CellIndex], z: ArrayLike
) -> NDArray[np.float64]:
    return m.project(x, z)


@dataclass(frozen=True)
class IntegrandDiagnostics:
    """Worst violation of each integrand invariant over the sampled points."""

    lam: float
    Lam: float
    violations: Dict[str, float]
    samples: int

    @property
    def degenerate(self) -> bool:
        return self.lam <= 0.0

    @property
    def worst(self) -> Tuple[str, float]:
        name = max(self.violations, key=lambda k: self.violations[k])
        return name, self.violations[name]

    @property
    def ok(self) -> bool:
        tolerances = {"bipolar": _BIPOLAR_TOL}
        return not self.degenerate and all(
            value <= tolerances.get(name, _INVARIANT_TOL) for name, value in self.violations.items()
        )


def check_integrand(
    m: MetricIntegrand, samples: int, seed: int = DEFAULT_SEED
) -> IntegrandDiagnostics:
    """Evaluate every invariant of ``m`` on seeded pseudo-random samples.

    Violations are reported, never raised. A weight field with a zero or
    negative entry reports an infinite ellipticity violation (λ > 0 fails).
    """
    if samples < 1:
        raise InvalidArgumentError(f"samples must be at least 1, got {samples}")

    rng = np.random.default_rng(seed)
    xi = rng.normal(size=(samples, 2)) * rng.uniform(0.1, 10.0, size=(samples, 1))
    xi2 = rng.normal(size=(samples, 2)) * rng.uniform(0.1, 10.0, size=(samples, 1))
    xistar = rng.normal(size=(samples, 2)) * rng.uniform(0.1, 10.0, size=(samples, 1))
    t = rng.uniform(-3.0, 3.0, size=samples)

    if m.kind == "weighted":
        assert m.weight is not None
        flat = rng.integers(0, m.weight.size, size=samples)
        a = m.weight.reshape(-1)[flat]
    else:
        a = np.ones(samples)

    # Weighted evaluations reuse the unweighted kernels scaled by a(x)
    base = MetricIntegrand("euclidean") if m.kind == "weighted" else m
    safe_a = np.where(a > 0, a, np.nan)

    def phi(v: NDArray[np.float64]) -> NDArray[np.float64]:
        return a * base.phi_field(v)

    def polar(v: NDArray[np.float64]) -> NDArray[np.float64]:
        return base.polar_field(v) / safe_a

    def project(v: NDArray[np.float64]) -> NDArray[np.float64]:
        if m.kind != "weighted":
            return m.project_field(v)
        norm = np.hypot(v[:, 0], v[:, 1])
        scale = np.minimum(1.0, np.maximum(a, 0.0) / np.maximum(norm, np.finfo(float).tiny))
        return v * scale[:, None]

    norm = np.hypot(xi[:, 0], xi[:, 1])
    phi_xi = phi(xi)
    scale = 1.0 + np.abs(phi_xi)
    violations: Dict[str, float] = {}

    violations["homogeneity"] = float(
        np.max(np.abs(phi(t[:, None] * xi) - np.abs(t) * phi_xi) / (1.0 + np.abs(t) * scale))
    )

    lam, Lam = m.lam, m.Lam
    if lam <= 0.0:
        violations["ellipticity"] = math.inf
    else:
        below = lam * norm - phi_xi
        above = phi_xi - Lam * norm
        violations["ellipticity"] = max(0.0, float(np.max(np.maximum(below, above) / scale)))

    midpoint = phi(0.5 * (xi + xi2))
    violations["convexity"] = max(
        0.0, float(np.max(midpoint - 0.5 * (phi_xi + phi(xi2))) / np.max(scale))
    )

    with np.errstate(invalid="ignore"):
        polar_star = polar(xistar)
        pairing = np.einsum("ij,ij->i", xistar, xi)
        cs = pairing - polar_star * phi_xi
    violations["cauchy_schwarz"] = max(
        0.0, float(np.nanmax(cs / (1.0 + np.abs(polar_star * phi_xi)), initial=0.0))
    )

    # Bipolar identity: sup of <ξ*, d/φ(d)> over a dense set of directions d
    angles = np.linspace(0.0, 2.0 * math.pi, _BIPOLAR_DIRECTIONS, endpoint=False)
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    unit_phi = base.phi_field(directions)
    with np.errstate(divide="ignore", invalid="ignore"):
        support = np.max(xistar @ (directions / unit_phi[:, None]).T, axis=1) / safe_a
        bipolar = np.abs(support - polar_star) / np.maximum(polar_star, 1e-300)
    violations["bipolar"] = float(np.nanmax(bipolar, initial=0.0))

    projected = project(xistar)
    reprojected = project(projected)
    other = project(xi)
    violations["projection_idempotence"] = float(np.max(np.abs(reprojected - projected)))
    gap = np.linalg.norm(projected - other, axis=1) - np.linalg.norm(xistar - xi, axis=1)
    violations["projection_nonexpansive"] = max(0.0, float(np.max(gap)))
    with np.errstate(invalid="ignore"):
        outside = np.nan_to_num(polar(projected), nan=0.0) - 1.0
    violations["projection_feasibility"] = max(0.0, float(np.max(outside)))

    return IntegrandDiagnostics(lam=lam, Lam=Lam, violations=violations, samples=samples)


def extend_weight(weight: NDArray[np.float64], inside: NDArray[np.bool_]) -> NDArray[np.float64]:
    """Copy each outside cell's weight from its nearest inside cell.

    Dual slots of west/south boundary faces sit on outside cells, which then see
    the weight of the inside cell they border.
    """
    if weight.shape != inside.shape:
        raise InvalidArgumentError(
            f"Weight field shape {weight.shape} does not match grid {inside.shape}"
        )
    _, (jj, ii) = ndimage.distance_transform_edt(~inside, return_indices=True)
    return np.asarray(weight[jj, ii], dtype=float)


def integrand_from_setting(setting: str, grid: DomainGrid) -> MetricIntegrand:
    """Parse ``euclidean | weighted:<path> | p1 | p2 | pinf`` for ``grid``."""
    kind, _, argument = setting.strip().partition(":")
    if kind == "weighted":
        if not argument:
            raise ConfigError("Weighted anisotropy needs a weight file: 'weighted:<path>'")
        weight = load_field(argument, grid)
        if not np.all(np.isfinite(weight[grid.inside])):
            raise ConfigError(f"Weight file {argument} has non-finite inside values")
        return MetricIntegrand.weighted(extend_weight(weight, grid.inside))
    if argument:
        raise ConfigError(f"Anisotropy '{kind}' takes no argument, got '{setting}'")
    return MetricIntegrand(kind)

"""Built-in worked examples: domain, Γ, datum, closed-form solutions and optima.

Every scenario with a calibration field also carries a stream function ψ with
z = (∂yψ, -∂xψ). ``sample_calibration`` takes face fluxes of ψ, which keeps the
discrete divergence of the sampled field at zero on every interior cell.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from least_gradient.anisotropy import MetricIntegrand, integrand_from_setting
from least_gradient.config import APP_NAME
from least_gradient.errors import (
    InvalidArgumentError,
    ScenarioLookupError,
    UnsupportedAnisotropyError,
    UnsupportedError,
)
from least_gradient.grid import BBox, Datum, DomainGrid, FaceSet, Predicate, rasterize
from least_gradient.operators import GradientOperator

logger = logging.getLogger(APP_NAME)

Point = Tuple[float, float]
Field = Callable[[NDArray[np.float64], NDArray[np.float64]], NDArray[np.float64]]
FamilyField = Callable[[NDArray[np.float64], NDArray[np.float64], Any], NDArray[np.float64]]
Profile = Callable[[NDArray[np.float64]], NDArray[np.float64]]

_TOL = 1e-9
_BISECTION_STEPS = 60
_PROFILE_SAMPLES = 1001

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)
INV_SQRT2 = 1.0 / SQRT2
BUMP_HEIGHT = 1.0 / (2.0 * SQRT3)


# --- boundary curves -------------------------------------------------------


@dataclass(frozen=True)
class _Segment:
    start: Point
    end: Point

    @property
    def length(self) -> float:
        return math.dist(self.start, self.end)

    def at(self, s: NDArray[np.float64]) -> NDArray[np.float64]:
        w = (s / self.length)[:, None]
        return (1.0 - w) * np.asarray(self.start) + w * np.asarray(self.end)


@dataclass(frozen=True)
class _Arc:
    center: Point
    radius: float
    a0: float
    a1: float  # counter-clockwise when a1 > a0

    @property
    def length(self) -> float:
        return self.radius * abs(self.a1 - self.a0)

    def at(self, s: NDArray[np.float64]) -> NDArray[np.float64]:
        angle = self.a0 + np.sign(self.a1 - self.a0) * s / self.radius
        return np.column_stack(
            [
                self.center[0] + self.radius * np.cos(angle),
                self.center[1] + self.radius * np.sin(angle),
            ]
        )


class BoundaryCurve:
    """Closed boundary of Ω as consecutive segments and arcs, by arc length."""

    def __init__(self, pieces: Sequence[Any]):
        self.pieces = list(pieces)
        self.offsets = np.cumsum([0.0] + [p.length for p in self.pieces])

    @property
    def length(self) -> float:
        return float(self.offsets[-1])

    def at(self, s: ArrayLike) -> NDArray[np.float64]:
        """Boundary points at arc positions ``s`` (taken modulo the length)."""
        ss = np.mod(np.atleast_1d(np.asarray(s, dtype=float)), self.length)
        index = np.searchsorted(self.offsets, ss, side="right") - 1
        index = np.clip(index, 0, len(self.pieces) - 1)
        out = np.empty((len(ss), 2))
        for k, piece in enumerate(self.pieces):
            mask = index == k
            if mask.any():
                out[mask] = piece.at(ss[mask] - self.offsets[k])
        return out


# --- profiles for the monotone families -----------------------------------


def linear_profile(lo: float = 0.0, hi: float = 1.0) -> Profile:
    """s ↦ (s - lo) / (hi - lo), clipped to [0, 1]."""

    def profile(s: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.clip((np.asarray(s, dtype=float) - lo) / (hi - lo), 0.0, 1.0)

    return profile


def step_profile(at: float) -> Profile:
    """Jump from 0 to 1 at ``at``."""

    def profile(s: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.where(np.asarray(s, dtype=float) >= at, 1.0, 0.0)

    return profile


def validate_profile(g: Any, lo: float, hi: float) -> None:
    """g must be non-decreasing on [lo, hi] with g(lo) = 0 and g(hi) = 1."""
    if not callable(g):
        raise InvalidArgumentError(f"Profile must be callable, got {type(g).__name__}")
    s = np.linspace(lo, hi, _PROFILE_SAMPLES)
    values = np.asarray(g(s), dtype=float)
    if values.shape != s.shape or not np.all(np.isfinite(values)):
        raise InvalidArgumentError("Profile must return one finite value per sample")
    if abs(values[0]) > _TOL or abs(values[-1] - 1.0) > _TOL:
        raise InvalidArgumentError(
            f"Profile must satisfy g({lo:g}) = 0 and g({hi:g}) = 1, "
            f"got {values[0]:g} and {values[-1]:g}"
        )
    if np.any(np.diff(values) < -_TOL):
        raise InvalidArgumentError("Profile must be non-decreasing")


def _validate_lambda(lam: Any) -> None:
    if not isinstance(lam, (int, float)) or not 0.0 <= float(lam) <= 1.0:
        raise InvalidArgumentError(f"λ must lie in [0, 1], got {lam!r}")


# --- the scenario record ---------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    anchor: str
    inside_pred: Predicate = field(repr=False)
    gamma_pred: Predicate = field(repr=False)
    f_func: Datum = field(repr=False)
    bbox: BBox
    boundary: BoundaryCurve = field(repr=False)
    anisotropy: str = "euclidean"
    analytic_u: Optional[FamilyField] = field(default=None, repr=False)
    default_param: Any = field(default=None, repr=False)
    family: Tuple[Any, ...] = field(default=(), repr=False)
    validate_param: Optional[Callable[[Any], None]] = field(default=None, repr=False)
    stream: Optional[Field] = field(default=None, repr=False)
    analytic_z: Optional[Field] = field(default=None, repr=False)
    optimum: Optional[float] = None
    provenance: str = ""
    level_length: Optional[Callable[[float], float]] = field(default=None, repr=False)
    level_range: Tuple[float, float] = (0.0, 1.0)
    level_breaks: Tuple[float, ...] = ()
    singular: Tuple[Point, ...] = ()
    notes: str = ""

    @property
    def has_family(self) -> bool:
        return len(self.family) > 1


def _polar_angle(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.arctan2(y, x)


def _rotate_about(
    x: NDArray[np.float64], y: NDArray[np.float64], pivot: Point
) -> NDArray[np.float64]:
    """Counter-clockwise unit tangent ê_θ about ``pivot``."""
    dx, dy = x - pivot[0], y - pivot[1]
    r = np.hypot(dx, dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.stack([-dy / r, dx / r], axis=-1)
    return np.where((r > 0)[..., None], z, 0.0)


def _fan_parameter(
    x: NDArray[np.float64], y: NDArray[np.float64], pivot: Point, t_lo: float, t_hi: float
) -> NDArray[np.float64]:
    """t with (x, y) on the segment from ``pivot`` to (t, -√(1 - t²)).

    Bisection on the sign of the cross product between the segment direction and
    the point; the direction turns counter-clockwise as t grows.
    """
    lo = np.full(np.shape(x), t_lo, dtype=float)
    hi = np.full(np.shape(x), t_hi, dtype=float)
    px, py = x - pivot[0], y - pivot[1]
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        ex = mid - pivot[0]
        ey = -np.sqrt(np.clip(1.0 - mid**2, 0.0, None)) - pivot[1]
        ahead = ex * py - ey * px > 0
        lo = np.where(ahead, mid, lo)
        hi = np.where(ahead, hi, mid)
    return 0.5 * (lo + hi)


# square_updown: Ω = (0,1)², Γ = {y = 0} ∪ {y = 1}


def _square_inside(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.bool_]:
    return (x > 0) & (x < 1) & (y > 0) & (y < 1)


def _square_gamma(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.bool_]:
    return (y < _TOL) | (y > 1 - _TOL)


def _square_f(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.where(y > 0.5, 1.0, 0.0)


def _square_u(x: NDArray[np.float64], y: NDArray[np.float64], g: Profile) -> NDArray[np.float64]:
    return np.asarray(g(np.clip(y, 0.0, 1.0)), dtype=float) + 0.0 * x


def _square_stream(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return -x + 0.0 * y


def _square_z(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.stack([np.zeros_like(x), np.ones_like(x)], axis=-1)


# bm_disk: unit disk with Γ the caps |y| > 1/√2


def _disk_inside(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.bool_]:
    return x**2 + y**2 < 1.0


def _bm_gamma(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.bool_]:
    return np.abs(y) > INV_SQRT2 + _TOL


def _bm_f(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.where(y > 0, 1.0, 0.0)


def _bm_u(x: NDArray[np.float64], y: NDArray[np.float64], lam: float) -> NDArray[np.float64]:
    u = np.where(y < -INV_SQRT2, 0.0, np.where(y > INV_SQRT2, 1.0, float(lam)))
    return u + 0.0 * x


def _bm_stream(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return -np.clip(x, -INV_SQRT2, INV_SQRT2) + 0.0 * y


def _bm_z(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    zy = np.where(np.abs(x) < INV_SQRT2, 1.0, 0.0) + 0.0 * y
    return np.stack([np.zeros_like(zy), zy], axis=-1)


# disk_arc: unit disk, Γ the lower semicircle, f = x


def _lower_gamma(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.bool_]:
    return y < -_TOL


def _f_x(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.asarray(x, dtype=float) + 0.0 * y


def _arc_regions(
    x: NDArray[np.float64], y: NDArray[np.float64]
) -> Tuple[NDArray[np.bool_], NDArray[np.bool_], NDArray[np.bool_]]:
    right = (x > 0) & (y < x - 1)
    left = (x <= 0) & (y < -x - 1)
    cap = y > 1 - np.abs(x)
    return right, left, cap


def _arc_u(x: NDArray[np.float64], y: NDArray[np.float64], _: Any = None) -> NDArray[np.float64]:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    right, left, _cap = _arc_regions(x, y)
    u = np.zeros(x.shape)
    if right.any():
        u[right] = _fan_parameter(x[right], y[right], (1.0, 0.0), 0.0, 1.0)
    if left.any():
        u[left] = _fan_parameter(x[left], y[left], (-1.0, 0.0), -1.0, 0.0)
    return u


def _arc_stream(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    right, left, cap = _arc_regions(x, y)
    diagonal = np.where(x >= 0, (x + y - 1) / SQRT2, (y - x - 1) / SQRT2)
    psi = np.where(cap, 0.0, diagonal)
    psi = np.where(right, -np.hypot(x - 1, y), psi)
    return np.where(left, -np.hypot(x + 1, y), psi)


def _arc_z(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    right, left, cap = _arc_regions(x, y)
    diagonal = np.where(
        (x >= 0)[..., None],
        np.array([INV_SQRT2, -INV_SQRT2]),
        np.array([INV_SQRT2, INV_SQRT2]),
    )
    z = np.where(cap[..., None], 0.0, diagonal)
    z = np.where(right[..., None], _rotate_about(x, y, (1.0, 0.0)), z)
    return np.where(left[..., None], _rotate_about(x, y, (-1.0, 0.0)), z)


def _arc_level_length(t: float) -> float:
    return math.sqrt(max(0.0, 2.0 - 2.0 * abs(t)))


# notch: lower half disk with two triangular bumps on top, Γ = {y < 0}, f = x


def _notch_inside(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.bool_]:
    half_disk = (y < 0) & (x**2 + y**2 < 1.0)
    left = (x > -1) & (x < 0) & (y >= 0) & (y < BUMP_HEIGHT - np.abs(x + 0.5) / SQRT3)
    right = (x > 0) & (x < 1) & (y >= 0) & (y < BUMP_HEIGHT - np.abs(x - 0.5) / SQRT3)
    return half_disk | left | right


def _notch_regions(
    x: NDArray[np.float64], y: NDArray[np.float64]
) -> Tuple[NDArray[np.bool_], NDArray[np.bool_], NDArray[np.bool_]]:
    centre = y < -SQRT3 * np.abs(x)
    right = (x > 0.5) & (y < SQRT3 * (x - 1))
    left = (x < -0.5) & (y < -SQRT3 * (x + 1))
    return centre, right, left


def _notch_u(x: NDArray[np.float64], y: NDArray[np.float64], _: Any = None) -> NDArray[np.float64]:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    centre, right, left = _notch_regions(x, y)
    u = np.where(x >= 0, 0.5, -0.5)
    if centre.any():
        u[centre] = _fan_parameter(x[centre], y[centre], (0.0, 0.0), -0.5, 0.5)
    if right.any():
        u[right] = _fan_parameter(x[right], y[right], (1.0, 0.0), 0.5, 1.0)
    if left.any():
        u[left] = _fan_parameter(x[left], y[left], (-1.0, 0.0), -1.0, -0.5)
    return u


def _notch_stream(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    centre, right, left = _notch_regions(x, y)
    rise = 0.5 * SQRT3 * y
    psi = np.select(
        [x >= 0.5, x >= 0, x >= -0.5],
        [rise + 0.5 * x - 0.5, rise - 0.5 * x, rise + 0.5 * x],
        default=rise - 0.5 * x - 0.5,
    )
    psi = np.where(centre, -np.hypot(x, y), psi)
    psi = np.where(right, -np.hypot(x - 1, y), psi)
    return np.where(left, -np.hypot(x + 1, y), psi)


def _notch_z(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    centre, right, left = _notch_regions(x, y)
    rising = np.array([0.5 * SQRT3, 0.5])
    falling = np.array([0.5 * SQRT3, -0.5])
    odd_strip = ((x >= 0.5) | ((x >= -0.5) & (x < 0)))[..., None]
    z = np.where(odd_strip, falling, rising)
    z = np.where(centre[..., None], _rotate_about(x, y, (0.0, 0.0)), z)
    z = np.where(right[..., None], _rotate_about(x, y, (1.0, 0.0)), z)
    return np.where(left[..., None], _rotate_about(x, y, (-1.0, 0.0)), z)


def _notch_level_length(t: float) -> float:
    if abs(t) < 0.5:
        return 1.0
    return math.sqrt(max(0.0, 2.0 - 2.0 * abs(t)))


# fan3: quarter disk of radius 2 with two caps; Γ is the arc through xy < 0


def _fan_inside(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.bool_]:
    quarter = (x > 0) & (y > 0) & (x**2 + y**2 < 4.0)
    west = (x <= 0) & ((x - 2) ** 2 + (y - 1) ** 2 < 5.0)
    south = (y <= 0) & ((x - 1) ** 2 + (y - 2) ** 2 < 5.0)
    return quarter | west | south


def _fan_gamma(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.bool_]:
    return ~((x > 0) & (y > 0))


def _fan_f(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.where(x < 0, 1.0, 0.0) + 0.0 * y


def _fan_u(x: NDArray[np.float64], y: NDArray[np.float64], g: Profile) -> NDArray[np.float64]:
    theta = _polar_angle(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    inner = np.asarray(g(np.clip(theta, 0.0, 0.5 * math.pi)), dtype=float)
    return np.where(theta < 0, 0.0, np.where(theta > 0.5 * math.pi, 1.0, inner))


def _fan_stream(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.select(
        [(x >= 0) & (y >= 0), x >= 0, y >= 0],
        [-np.hypot(x, y), -x + 0.0 * y, -y + 0.0 * x],
        default=0.0,
    )


def _fan_z(x: NDArray[np.float64], y: NDArray[np.float64]) -> NDArray[np.float64]:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    theta = _polar_angle(x, y)
    z = _rotate_about(x, y, (0.0, 0.0))
    z = np.where((theta < 0)[..., None], np.array([0.0, 1.0]), z)
    return np.where((theta > 0.5 * math.pi)[..., None], np.array([-1.0, 0.0]), z)


_FAN_CAP_HALF_ANGLE = math.atan(0.5)

REGISTRY: Dict[str, Scenario] = {
    s.name: s
    for s in (
        Scenario(
            name="square_updown",
            anchor="unit square, Γ = bottom and top edges, f = 0 / 1; every increasing u(y)",
            inside_pred=_square_inside,
            gamma_pred=_square_gamma,
            f_func=_square_f,
            bbox=(0.0, 0.0, 1.0, 1.0),
            boundary=BoundaryCurve(
                [
                    _Segment((0.0, 0.0), (1.0, 0.0)),
                    _Segment((1.0, 0.0), (1.0, 1.0)),
                    _Segment((1.0, 1.0), (0.0, 1.0)),
                    _Segment((0.0, 1.0), (0.0, 0.0)),
                ]
            ),
            analytic_u=_square_u,
            default_param=linear_profile(),
            family=(linear_profile(), step_profile(0.5)),
            validate_param=lambda g: validate_profile(g, 0.0, 1.0),
            stream=_square_stream,
            analytic_z=_square_z,
            optimum=1.0,
            provenance="derived: every level line is a horizontal unit segment",
            level_length=lambda t: 1.0,
            notes="Γ disconnected; minimizers are not unique and may jump inside.",
        ),
        Scenario(
            name="bm_disk",
            anchor="unit disk, Γ = caps |y| > 1/√2, f = 0 / 1; family u_λ, λ ∈ [0, 1]",
            inside_pred=_disk_inside,
            gamma_pred=_bm_gamma,
            f_func=_bm_f,
            bbox=(-1.0, -1.0, 1.0, 1.0),
            boundary=BoundaryCurve([_Arc((0.0, 0.0), 1.0, 0.0, 2.0 * math.pi)]),
            analytic_u=_bm_u,
            default_param=0.5,
            family=(0.0, 0.25, 0.5, 0.75, 1.0),
            validate_param=_validate_lambda,
            stream=_bm_stream,
            analytic_z=_bm_z,
            optimum=SQRT2,
            provenance="derived: chord of the unit disk at height ±1/√2",
            level_length=lambda t: SQRT2,
            notes="Γ disconnected; every minimizer is u_λ and none is continuous inside.",
        ),
        Scenario(
            name="disk_arc",
            anchor="unit disk, Γ = lower semicircle, f = x; fans of segments from (±1, 0)",
            inside_pred=_disk_inside,
            gamma_pred=_lower_gamma,
            f_func=_f_x,
            bbox=(-1.0, -1.0, 1.0, 1.0),
            boundary=BoundaryCurve([_Arc((0.0, 0.0), 1.0, 0.0, 2.0 * math.pi)]),
            analytic_u=_arc_u,
            stream=_arc_stream,
            analytic_z=_arc_z,
            optimum=4.0 * SQRT2 / 3.0,
            provenance="derived: coarea quadrature of |l_t| = √(2 - 2|t|)",
            level_length=_arc_level_length,
            level_range=(-1.0, 1.0),
            level_breaks=(0.0,),
            notes="Unique solution, continuous on Ω ∪ Γ, discontinuous at (±1, 0).",
        ),
        Scenario(
            name="notch",
            anchor="half disk with two triangular bumps, Γ = {y < 0}, f = x; jump at (0, 0)",
            inside_pred=_notch_inside,
            gamma_pred=_lower_gamma,
            f_func=_f_x,
            bbox=(-1.0, -1.0, 1.0, BUMP_HEIGHT),
            boundary=BoundaryCurve(
                [
                    _Arc((0.0, 0.0), 1.0, math.pi, 2.0 * math.pi),
                    _Segment((1.0, 0.0), (0.5, BUMP_HEIGHT)),
                    _Segment((0.5, BUMP_HEIGHT), (0.0, 0.0)),
                    _Segment((0.0, 0.0), (-0.5, BUMP_HEIGHT)),
                    _Segment((-0.5, BUMP_HEIGHT), (-1.0, 0.0)),
                ]
            ),
            analytic_u=_notch_u,
            stream=_notch_stream,
            analytic_z=_notch_z,
            optimum=5.0 / 3.0,
            provenance="derived: coarea quadrature, unit segments for |t| < 1/2",
            level_length=_notch_level_length,
            level_range=(-1.0, 1.0),
            level_breaks=(-0.5, 0.5),
            singular=((0.0, 0.0),),
            notes="Discontinuities at (±1, 0) and at the notch vertex (0, 0) on ∂Ω \\ Γ.",
        ),
        Scenario(
            name="fan3",
            anchor="quarter disk with two caps, Γ = arc through xy < 0, f = 1 / 0; any profile",
            inside_pred=_fan_inside,
            gamma_pred=_fan_gamma,
            f_func=_fan_f,
            bbox=(2.0 - math.sqrt(5.0), 2.0 - math.sqrt(5.0), 2.0, 2.0),
            boundary=BoundaryCurve(
                [
                    _Arc((0.0, 0.0), 2.0, 0.0, 0.5 * math.pi),
                    _Arc(
                        (2.0, 1.0),
                        math.sqrt(5.0),
                        math.pi - _FAN_CAP_HALF_ANGLE,
                        math.pi + _FAN_CAP_HALF_ANGLE,
                    ),
                    _Arc(
                        (1.0, 2.0),
                        math.sqrt(5.0),
                        -0.5 * math.pi - _FAN_CAP_HALF_ANGLE,
                        -0.5 * math.pi + _FAN_CAP_HALF_ANGLE,
                    ),
                ]
            ),
            analytic_u=_fan_u,
            default_param=linear_profile(0.0, 0.5 * math.pi),
            family=(
                linear_profile(0.0, 0.5 * math.pi),
                linear_profile(0.125 * math.pi, 0.375 * math.pi),
            ),
            validate_param=lambda g: validate_profile(g, 0.0, 0.5 * math.pi),
            stream=_fan_stream,
            analytic_z=_fan_z,
            optimum=2.0,
            provenance="derived: every level line is a radius of length 2",
            level_length=lambda t: 2.0,
            singular=((0.0, 0.0),),
            notes="Strictly convex, Γ connected; uncountably many solutions share one z.",
        ),
    )
}


def list_scenarios() -> List[Scenario]:
    return list(REGISTRY.values())


def get_scenario(name: str) -> Scenario:
    try:
        return REGISTRY[name]
    except KeyError:
        known = ", ".join(REGISTRY)
        raise ScenarioLookupError(f"Unknown scenario '{name}'; available: {known}") from None


def scenario_integrand(
    scenario: Scenario, grid: DomainGrid, setting: Optional[str] = None
) -> MetricIntegrand:
    """The scenario's integrand, or ``setting`` when given."""
    return integrand_from_setting(setting or scenario.anisotropy, grid)


def rasterize_scenario(scenario: Scenario, n: int) -> Tuple[DomainGrid, FaceSet]:
    logger.info(f"Rasterizing scenario '{scenario.name}' at n={n}")
    return rasterize(scenario.inside_pred, scenario.gamma_pred, scenario.f_func, scenario.bbox, n)


def _split_points(points: ArrayLike) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    xy = np.asarray(points, dtype=float)
    if xy.ndim == 0 or xy.shape[-1] != 2:
        raise InvalidArgumentError(f"Points must have a trailing axis of length 2, got {xy.shape}")
    if not np.all(np.isfinite(xy)):
        raise InvalidArgumentError("Points must be finite")
    return xy[..., 0], xy[..., 1]


def _resolve_param(scenario: Scenario, param: Any) -> Any:
    value = scenario.default_param if param is None else param
    if scenario.validate_param is not None:
        scenario.validate_param(value)
    return value


def eval_analytic(
    scenario: Scenario, which: str, points: ArrayLike, param: Any = None
) -> NDArray[np.float64]:
    """Closed-form u (family member ``param``) or z at ``points`` of shape (..., 2)."""
    x, y = _split_points(points)
    if which == "u":
        if scenario.analytic_u is None:
            raise UnsupportedError(f"Scenario '{scenario.name}' has no closed-form u")
        return np.asarray(scenario.analytic_u(x, y, _resolve_param(scenario, param)), dtype=float)
    if which == "z":
        if scenario.analytic_z is None:
            raise UnsupportedError(f"Scenario '{scenario.name}' has no closed-form z")
        return np.asarray(scenario.analytic_z(x, y), dtype=float)
    raise InvalidArgumentError(f"Unknown field '{which}', expected 'u' or 'z'")


def sample_u(scenario: Scenario, grid: DomainGrid, param: Any = None) -> NDArray[np.float64]:
    """Closed-form u on inside cell centres, NaN elsewhere."""
    X, Y = grid.centers()
    u = eval_analytic(scenario, "u", np.stack([X, Y], axis=-1), param)
    return np.where(grid.inside, u, np.nan)


def sample_calibration(
    scenario: Scenario, m: MetricIntegrand, grid: DomainGrid, faces: FaceSet
) -> NDArray[np.float64]:
    """Face fluxes of the scenario's stream function, projected onto the polar ball.

    Active slots carry the projected flux and Neumann slots the raw one, so the
    normal trace of the closed-form field stays visible there; other slots are NaN.
    """
    if scenario.stream is None:
        raise UnsupportedError(f"Scenario '{scenario.name}' has no calibration field")
    x0, y0 = grid.origin
    h = grid.h
    xs = x0 + np.arange(grid.nx + 1) * h
    ys = y0 + np.arange(grid.ny + 1) * h
    CX, CY = np.meshgrid(xs, ys)
    psi = np.asarray(scenario.stream(CX, CY), dtype=float)

    raw = np.empty(grid.shape + (2,))
    raw[..., 0] = (psi[1:, 1:] - psi[:-1, 1:]) / h
    raw[..., 1] = (psi[1:, :-1] - psi[1:, 1:]) / h

    op = GradientOperator(grid, faces)
    projected = m.project_field(np.where(op.active, raw, 0.0))
    return np.where(op.active, projected, np.where(op.neumann, raw, np.nan))


def optimum_oracle(scenario: Scenario) -> float:
    """∫ |{u = t}| dt by quadrature over the level-line lengths."""
    if scenario.level_length is None:
        raise UnsupportedError(f"Scenario '{scenario.name}' has no level-line lengths")
    lo, hi = scenario.level_range
    value, _ = integrate.quad(
        scenario.level_length, lo, hi, points=scenario.level_breaks or None, limit=200
    )
    return float(value)


@dataclass(frozen=True)
class BarrierSamples:
    points: NDArray[np.float64] = field(repr=False)
    passed: NDArray[np.bool_] = field(repr=False)

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def failures(self) -> NDArray[np.float64]:
        return self.points[~self.passed]


def barrier_diagnostic_2d(
    scenario: Scenario, step: float, spacing: Optional[float] = None
) -> BarrierSamples:
    """Chord-midpoint test at boundary samples on Γ.

    A sample passes when the midpoint of the chord between the boundary points
    at arc distance ±``step`` lies in Ω. Passing is a sufficient local condition
    only: a failed sample does not show that the barrier condition fails.
    """
    if scenario.anisotropy != "euclidean":
        raise UnsupportedAnisotropyError(
            f"Barrier diagnostic is isotropic only, scenario uses '{scenario.anisotropy}'"
        )
    if not step > 0:
        raise InvalidArgumentError(f"step must be positive, got {step}")
    curve = scenario.boundary
    spacing = step if spacing is None else spacing
    s = np.arange(0.0, curve.length, spacing)
    points = curve.at(s)
    on_gamma = np.asarray(scenario.gamma_pred(points[:, 0], points[:, 1]), dtype=bool)
    s, points = s[on_gamma], points[on_gamma]
    midpoints = 0.5 * (curve.at(s - step) + curve.at(s + step))
    passed = np.asarray(scenario.inside_pred(midpoints[:, 0], midpoints[:, 1]), dtype=bool)
    logger.info(
        f"Barrier diagnostic on '{scenario.name}': "
        f"{int(passed.sum())}/{len(passed)} Γ samples pass"
    )
    return BarrierSamples(points=points, passed=passed)

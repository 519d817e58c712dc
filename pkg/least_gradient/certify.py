"""Calibration certificates for a pair (u, z).

A pair solves the Dirichlet problem on Γ when z is divergence free, dually
feasible, saturates the pairing with Du, and meets the sign condition
[z, ν] ∈ sign(f - u) φ(x, ν) on Γ. ``verify_calibration`` measures each of
these as a residual on the raster.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from common.constants import REPORT_PASS
from least_gradient.anisotropy import MetricIntegrand
from least_gradient.config import (
    APP_NAME,
    DEFAULT_EXCLUSION_FACTOR,
    DEFAULT_JUMP_FRACTION,
    DEFAULT_TOL_DIV_FLUX,
    DEFAULT_TOL_FEAS,
    DEFAULT_TOL_PAIR,
    DEFAULT_TOL_SIGN,
)
from least_gradient.errors import DimensionMismatchError, InvalidArgumentError, PreconditionError
from least_gradient.grid import DomainGrid, FaceSet, Predicate, gamma_endpoints, near_points
from least_gradient.operators import GradientOperator

logger = logging.getLogger(APP_NAME)

Point = Tuple[float, float]


@dataclass(frozen=True)
class CertifyTolerances:
    """Pass thresholds; ``div`` of None means ``div_flux / h``."""

    feas: float = DEFAULT_TOL_FEAS
    div: Optional[float] = None
    div_flux: float = DEFAULT_TOL_DIV_FLUX
    pair: float = DEFAULT_TOL_PAIR
    sign: float = DEFAULT_TOL_SIGN
    neumann: float = 0.0
    jump_fraction: float = DEFAULT_JUMP_FRACTION
    jump_thresh: Optional[float] = None  # absolute; overrides jump_fraction
    exclusion_factor: float = DEFAULT_EXCLUSION_FACTOR
    div_exclusion: Optional[float] = None  # absolute radius; None uses exclusion_factor * h

    def div_tolerance(self, h: float) -> float:
        return self.div if self.div is not None else self.div_flux / h

    def exclusion_radius(self, h: float) -> float:
        return self.exclusion_factor * h

    def div_exclusion_radius(self, h: float) -> float:
        return self.div_exclusion if self.div_exclusion is not None else self.exclusion_radius(h)


@dataclass(frozen=True)
class CalibrationReport:
    r_div: float
    r_feas: float
    r_pair: float
    r_sign: float
    r_neumann: float
    gap: float
    primal: float
    dual: float
    neumann_flux: float
    sign_faces: int
    tolerances: Dict[str, float] = field(repr=False)

    @property
    def residuals(self) -> Dict[str, float]:
        return {
            "r_div": self.r_div,
            "r_feas": self.r_feas,
            "r_pair": self.r_pair,
            "r_sign": self.r_sign,
            "r_neumann": self.r_neumann,
        }

    @property
    def failing(self) -> List[str]:
        return [name for name, value in self.residuals.items() if value > self.tolerances[name]]

    @property
    def passed(self) -> bool:
        return not self.failing

    def to_text(self) -> str:
        lines = [f"{name}={value:.12g}" for name, value in self.residuals.items()]
        lines += [
            f"gap={self.gap:.12g}",
            f"primal={self.primal:.12g}",
            f"dual={self.dual:.12g}",
            f"neumann_flux={self.neumann_flux:.12g}",
            f"sign_faces={self.sign_faces}",
        ]
        lines += [f"tol_{name}={value:.12g}" for name, value in self.tolerances.items()]
        lines.append(f"{REPORT_PASS}={'true' if self.passed else 'false'}")
        return "\n".join(lines)


def singular_points(
    faces: FaceSet, h: float, extra: Iterable[Point] = ()
) -> NDArray[np.float64]:
    """∂Γ as seen on the raster plus any caller-supplied points."""
    points = [gamma_endpoints(faces, h)]
    extra_points = np.asarray(list(extra), dtype=float).reshape(-1, 2)
    points.append(extra_points)
    return np.concatenate(points, axis=0)


def _check_shapes(grid: DomainGrid, u: NDArray[np.float64], z: NDArray[np.float64]) -> None:
    if np.shape(u) != grid.shape:
        raise DimensionMismatchError(f"u has shape {np.shape(u)}, grid is {grid.shape}")
    if np.shape(z) != grid.shape + (2,):
        raise DimensionMismatchError(f"z has shape {np.shape(z)}, grid is {grid.shape + (2,)}")


def verify_calibration(
    m: MetricIntegrand,
    grid: DomainGrid,
    faces: FaceSet,
    u: ArrayLike,
    z: ArrayLike,
    tols: Optional[CertifyTolerances] = None,
    extra_singular: Iterable[Point] = (),
) -> CalibrationReport:
    """Residuals of the calibration conditions for (u, z).

    Cells and faces within the exclusion radius of ∂Γ (and of ``extra_singular``)
    are left out of r_div and r_sign, where the datum forces discontinuities.
    """
    tols = tols or CertifyTolerances()
    u_arr = np.asarray(u, dtype=float)
    z_arr = np.asarray(z, dtype=float)
    _check_shapes(grid, u_arr, z_arr)

    op = GradientOperator(grid, faces)
    if not np.all(np.isfinite(u_arr[grid.inside])):
        raise InvalidArgumentError("u is not finite on every inside cell")
    if not np.all(np.isfinite(z_arr[op.active])):
        raise InvalidArgumentError("z is not finite on every active slot")

    h = grid.h
    zz = np.where(op.active, z_arr, 0.0)
    points = singular_points(faces, h, extra_singular)
    X, Y = grid.centers()
    centers = np.stack([X, Y], axis=-1)

    div = op.divergence(zz)
    excluded = near_points(centers, points, tols.div_exclusion_radius(h))
    div_cells = grid.interior_mask() & ~excluded
    r_div = float(np.max(np.abs(div[div_cells]), initial=0.0))

    # West and south Γ slots belong to outside cells
    polar = m.polar_field(zz)
    owners = op.active.any(axis=-1)
    r_feas = max(0.0, float(np.max(polar[owners], initial=0.0)) - 1.0)

    g = op.apply(u_arr)
    pair_sum = float(h**2 * np.sum(np.einsum("...k,...k->...", zz, g)))
    phi_sum = float(h**2 * np.sum(m.phi_field(g)))
    r_pair = abs(pair_sum - phi_sum) / max(1.0, phi_sum)

    lo, hi = faces.f_range()
    jump_thresh = tols.jump_thresh
    if jump_thresh is None:
        jump_thresh = tols.jump_fraction * (hi - lo)
    trace = op.normal_trace(zz)
    u_cells = u_arr[faces.cells[:, 0], faces.cells[:, 1]]
    jumps = faces.f_values - u_cells
    far = ~near_points(faces.centers, points, tols.exclusion_radius(h))
    with np.errstate(invalid="ignore"):
        sign_mask = faces.is_gamma & far & (np.abs(jumps) > jump_thresh)
    r_sign = 0.0
    if sign_mask.any():
        phi_normal = _phi_on_normals(m, op, faces)
        target = phi_normal[sign_mask]
        values = trace[sign_mask] * np.sign(jumps[sign_mask])
        r_sign = float(np.max(np.abs(values - target)))

    raw_trace = op.normal_trace(z_arr)
    neumann_trace = raw_trace[~faces.is_gamma]
    finite = np.isfinite(neumann_trace)
    neumann_flux = float(np.max(np.abs(neumann_trace[finite]), initial=0.0))

    dual = op.dual(zz)
    tolerances = {
        "r_div": tols.div_tolerance(h),
        "r_feas": tols.feas,
        "r_pair": tols.pair,
        "r_sign": tols.sign,
        "r_neumann": tols.neumann,
    }
    report = CalibrationReport(
        r_div=r_div,
        r_feas=r_feas,
        r_pair=r_pair,
        r_sign=r_sign,
        r_neumann=0.0,
        gap=phi_sum - dual,
        primal=phi_sum,
        dual=dual,
        neumann_flux=neumann_flux,
        sign_faces=int(sign_mask.sum()),
        tolerances=tolerances,
    )
    if report.passed:
        logger.info(f"Calibration passed (gap {report.gap:.3e})")
    else:
        failing = ", ".join(f"{name}={report.residuals[name]:.3e}" for name in report.failing)
        logger.info(f"Calibration failed: {failing}")
    return report


def _phi_on_normals(
    m: MetricIntegrand, op: GradientOperator, faces: FaceSet
) -> NDArray[np.float64]:
    """φ(x, ν) per face, weighted by the slot's cell weight."""
    normals = faces.normals
    if m.kind != "weighted":
        return m.phi_field(normals)
    assert m.weight is not None
    return m.weight[op.slot_j, op.slot_i] * np.hypot(normals[:, 0], normals[:, 1])


def cross_certify(
    m: MetricIntegrand,
    grid: DomainGrid,
    faces: FaceSet,
    z: ArrayLike,
    u_list: Sequence[ArrayLike],
    tols: Optional[CertifyTolerances] = None,
    extra_singular: Iterable[Point] = (),
) -> List[CalibrationReport]:
    """Verify one z against every member of ``u_list``."""
    extra = list(extra_singular)
    reports = [verify_calibration(m, grid, faces, u, z, tols, extra) for u in u_list]
    certified = sum(report.passed for report in reports)
    logger.info(f"Cross-certification: {certified}/{len(reports)} members certified")
    return reports


def extend_gamma(
    grid: DomainGrid, faces: FaceSet, u: ArrayLike, gamma_prime_pred: Predicate
) -> FaceSet:
    """Faces with Γ' in place of Γ and datum u on Γ' \\ Γ."""
    u_arr = np.asarray(u, dtype=float)
    if np.shape(u_arr) != grid.shape:
        raise DimensionMismatchError(f"u has shape {np.shape(u_arr)}, grid is {grid.shape}")
    accepted = np.broadcast_to(
        np.asarray(gamma_prime_pred(faces.centers[:, 0], faces.centers[:, 1]), dtype=bool),
        (len(faces),),
    )
    missing = faces.is_gamma & ~accepted
    if missing.any():
        k = int(np.argmax(missing))
        x, y = faces.centers[k]
        raise PreconditionError(
            f"Γ' does not contain Γ: {int(missing.sum())} Γ faces rejected, "
            f"first at ({x:.4g}, {y:.4g})"
        )
    u_cells = u_arr[faces.cells[:, 0], faces.cells[:, 1]]
    f_values = np.where(faces.is_gamma, faces.f_values, u_cells)
    return faces.with_gamma(accepted.copy(), f_values)


def extend_gamma_check(
    m: MetricIntegrand,
    grid: DomainGrid,
    faces: FaceSet,
    u: ArrayLike,
    z: ArrayLike,
    gamma_prime_pred: Predicate,
    tols: Optional[CertifyTolerances] = None,
    extra_singular: Iterable[Point] = (),
) -> CalibrationReport:
    """Re-verify z with Γ extended to Γ' and datum u on the added part.

    The exclusion zones stay those of the original Γ, and z keeps a zero normal
    trace on the faces that change kind.
    """
    tols = tols or CertifyTolerances()
    extended = extend_gamma(grid, faces, u, gamma_prime_pred)
    # Zero normal trace on the old Neumann part, as the original certificate had
    z_arr = np.where(GradientOperator(grid, faces).active, np.asarray(z, dtype=float), 0.0)
    points = singular_points(faces, grid.h, extra_singular)
    if tols.jump_thresh is None:
        lo, hi = faces.f_range()
        tols = replace(tols, jump_thresh=tols.jump_fraction * (hi - lo))
    return verify_calibration(
        m, grid, extended, u, z_arr, tols, [(float(x), float(y)) for x, y in points]
    )

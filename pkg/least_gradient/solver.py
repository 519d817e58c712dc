"""Primal-dual splitting for the relaxed least gradient problem.

min_{lo ≤ u ≤ hi} max_z ⟨K u + b, z⟩ - ι{φ⁰(x, z) ≤ 1}, iterated as

    z ← P(z + σ (K ū + b))
    u ← clip(u + τ div z, lo, hi)
    ū ← u + θ (u - u_prev)

with τ = σ = h/√8 by default. The objective is carried without the h² area
factor, so z is directly the calibration field.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.sparse.linalg import LinearOperator, svds

from least_gradient.anisotropy import MetricIntegrand
from least_gradient.config import (
    APP_NAME,
    DEFAULT_CHECK_EVERY,
    DEFAULT_GAP_TOL,
    DEFAULT_LOG_EVERY,
    DEFAULT_MAX_ITERS,
    DEFAULT_SEED,
    DEFAULT_THETA,
)
from least_gradient.errors import ConfigError, DimensionMismatchError, NumericalFailure
from least_gradient.grid import DomainGrid, FaceSet
from least_gradient.operators import GradientOperator

logger = logging.getLogger(APP_NAME)

INIT_ZEROS = "zeros"
INIT_RANDOM = "random"


@dataclass(frozen=True)
class SolveConfig:
    max_iters: int = DEFAULT_MAX_ITERS
    gap_tol: float = DEFAULT_GAP_TOL
    theta: float = DEFAULT_THETA
    tau: Optional[float] = None
    sigma: Optional[float] = None
    seed: int = DEFAULT_SEED
    u0: Optional[NDArray[np.float64]] = field(default=None, repr=False, compare=False)
    init: str = INIT_ZEROS
    log_every: int = DEFAULT_LOG_EVERY
    check_every: int = DEFAULT_CHECK_EVERY


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    primal: float
    dual: float
    gap: float

    @property
    def relative_gap(self) -> float:
        return self.gap / max(1.0, abs(self.primal))


@dataclass(frozen=True)
class SolveReport:
    u: NDArray[np.float64] = field(repr=False)
    z: NDArray[np.float64] = field(repr=False)
    history: List[IterationRecord]
    converged: bool
    iters_used: int

    @property
    def final(self) -> IterationRecord:
        return self.history[-1]

    @property
    def primal(self) -> float:
        return self.final.primal

    @property
    def dual(self) -> float:
        return self.final.dual

    @property
    def gap(self) -> float:
        return self.final.gap

    @property
    def relative_gap(self) -> float:
        return self.final.relative_gap


def op_norm_bound(grid: DomainGrid) -> float:
    """‖K‖ ≤ √8/h for forward differences."""
    return math.sqrt(8.0) / grid.h


def estimate_op_norm(grid: DomainGrid, faces: FaceSet) -> float:
    """Largest singular value of K, estimated with ARPACK."""
    op = GradientOperator(grid, faces)
    inside = grid.inside
    n_cells = int(inside.sum())
    slots = op.active
    n_slots = int(slots.sum())

    def matvec(v: NDArray[np.float64]) -> NDArray[np.float64]:
        u = np.zeros(grid.shape)
        u[inside] = np.ravel(v)
        return op.apply(u, with_data=False)[slots]

    def rmatvec(w: NDArray[np.float64]) -> NDArray[np.float64]:
        z = np.zeros(grid.shape + (2,))
        z[slots] = np.ravel(w)
        return -op.divergence(z)[inside]

    k = LinearOperator((n_slots, n_cells), matvec=matvec, rmatvec=rmatvec, dtype=float)
    v0 = np.ones(min(n_slots, n_cells))
    singular = svds(k, k=1, which="LM", return_singular_vectors=False, v0=v0, tol=1e-8)
    return float(singular[0])


def _step_sizes(grid: DomainGrid, cfg: SolveConfig) -> Tuple[float, float]:
    default = grid.h / math.sqrt(8.0)
    tau = default if cfg.tau is None else cfg.tau
    sigma = default if cfg.sigma is None else cfg.sigma
    if not (tau > 0 and sigma > 0):
        raise ConfigError(f"Step sizes must be positive, got tau={tau}, sigma={sigma}")
    product = tau * sigma * op_norm_bound(grid) ** 2
    if product > 1.0 + 1e-12:
        raise ConfigError(f"Step sizes violate tau*sigma*||K||^2 <= 1 (got {product:.6g})")
    return tau, sigma


def _validate(grid: DomainGrid, faces: FaceSet, cfg: SolveConfig) -> None:
    if cfg.max_iters < 1:
        raise ConfigError(f"max_iters must be positive, got {cfg.max_iters}")
    if cfg.log_every < 1:
        raise ConfigError(f"log_every must be positive, got {cfg.log_every}")
    if cfg.check_every < 1:
        raise ConfigError(f"check_every must be positive, got {cfg.check_every}")
    if not cfg.gap_tol > 0:
        raise ConfigError(f"gap_tol must be positive, got {cfg.gap_tol}")
    if not 0.0 <= cfg.theta <= 1.0:
        raise ConfigError(f"theta must lie in [0, 1], got {cfg.theta}")
    if cfg.init not in (INIT_ZEROS, INIT_RANDOM):
        raise ConfigError(f"Unknown init '{cfg.init}'")
    if faces.n_gamma == 0:
        raise ConfigError("Γ is empty: the problem has no Dirichlet datum")
    if cfg.u0 is not None and np.shape(cfg.u0) != grid.shape:
        raise DimensionMismatchError(f"u0 shape {np.shape(cfg.u0)} does not match {grid.shape}")


def _initial_u(grid: DomainGrid, cfg: SolveConfig, lo: float, hi: float) -> NDArray[np.float64]:
    if cfg.u0 is not None:
        u = np.array(cfg.u0, dtype=float)
    elif cfg.init == INIT_RANDOM:
        u = np.random.default_rng(cfg.seed).uniform(lo, hi, size=grid.shape)
    else:
        u = np.zeros(grid.shape)
    u = np.where(grid.inside, u, 0.0)
    if not np.all(np.isfinite(u)):
        raise ConfigError("Initial guess is not finite on every inside cell")
    return u


def solve(m: MetricIntegrand, grid: DomainGrid, faces: FaceSet, cfg: SolveConfig) -> SolveReport:
    """Run the primal-dual iteration until the relative gap drops below ``gap_tol``.

    The u step is clipped to [lo, hi] = [min f, max f]. Truncation never raises
    𝒥_Γ, so the optimum is unchanged, and the certified bound
    D(z) - h² Σ max(lo div z, hi div z) is then exactly the dual of the iterated
    problem. Every ``check_every`` iterations the iterates and their running
    averages are scored; the best primal and the best bound seen so far form
    the reported pair, so the recorded gap never increases.
    """
    _validate(grid, faces, cfg)
    if m.lam <= 0.0:
        raise ConfigError("Integrand is degenerate (λ <= 0)")
    tau, sigma = _step_sizes(grid, cfg)

    op = GradientOperator(grid, faces)
    inside = grid.inside
    lo, hi = faces.f_range()
    u = _initial_u(grid, cfg, lo, hi)
    u_bar = u.copy()
    z = np.zeros(grid.shape + (2,))
    u_sum = np.zeros_like(u)
    z_sum = np.zeros_like(z)

    best_u, best_z = np.clip(u, lo, hi), z
    best_primal, best_dual = op.primal(m, best_u), -math.inf
    history: List[IterationRecord] = []
    converged = False
    iteration = 0
    logger.info(
        f"Solving {grid.nx}x{grid.ny} ({m.kind}): tau={tau:.4g}, sigma={sigma:.4g}, "
        f"max_iters={cfg.max_iters}, gap_tol={cfg.gap_tol:g}"
    )

    for iteration in range(1, cfg.max_iters + 1):
        z = np.where(op.active, m.project_field(z + sigma * op.apply(u_bar)), 0.0)
        u_prev = u
        u = np.where(inside, np.clip(u + tau * op.divergence(z), lo, hi), 0.0)
        u_bar = u + cfg.theta * (u - u_prev)
        if not (np.isfinite(u).all() and np.isfinite(z).all()):
            raise NumericalFailure(
                f"Non-finite iterate at iteration {iteration}", iteration=iteration
            )
        u_sum += u
        z_sum += z

        logged = iteration == 1 or iteration % cfg.log_every == 0 or iteration == cfg.max_iters
        if not (logged or iteration % cfg.check_every == 0):
            continue

        for candidate in (u, np.clip(u_sum / iteration, lo, hi)):
            primal = op.primal(m, candidate)
            if primal < best_primal:
                best_primal, best_u = primal, candidate
        for candidate in (z, z_sum / iteration):
            dual = op.dual_bound(candidate, lo, hi)
            if dual > best_dual:
                best_dual, best_z = dual, candidate
        if not (math.isfinite(best_primal) and math.isfinite(best_dual)):
            raise NumericalFailure(
                f"Non-finite objective at iteration {iteration}", iteration=iteration
            )

        record = IterationRecord(iteration, best_primal, best_dual, best_primal - best_dual)
        done = record.relative_gap <= cfg.gap_tol
        if logged or done:
            history.append(record)
            logger.info(
                f"iter {iteration}: primal={best_primal:.10g} dual={best_dual:.10g} "
                f"gap={record.gap:.3e}"
            )
        if done:
            converged = True
            break

    if converged:
        logger.info(f"Converged after {iteration} iterations")
    else:
        logger.warning(f"Not converged after {iteration} iterations (gap {history[-1].gap:.3e})")

    u_out = np.where(inside, best_u, np.nan)
    z_out = np.where(op.active, best_z, np.nan)
    return SolveReport(
        u=u_out, z=z_out, history=history, converged=converged, iters_used=iteration
    )

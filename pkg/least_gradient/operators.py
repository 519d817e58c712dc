"""Discrete gradient with Dirichlet ghosts on Γ, its adjoint, and the objectives.

Every cell c owns two dual slots: slot x is the edge from c to its east
neighbour, slot y the edge to its north neighbour. A slot is active when both
cells are inside, or when the edge is a Γ face; the difference across an active
slot uses the neighbour's value if it is inside and the face datum otherwise.
Neumann faces have no active slot, so they contribute a zero difference.

With that layout ``grad`` and ``div_adjoint`` are exact adjoints on the
raster, which is the discrete Green formula ⟨Ku, z⟩ = -⟨u, div z⟩.
"""

from typing import Tuple

import numpy as np
from numpy.typing import NDArray

from common.constants import DIRECTIONS
from least_gradient.anisotropy import MetricIntegrand
from least_gradient.grid import DomainGrid, FaceSet

# Slot owner offset and slot axis per face direction; the sign is the outward
# orientation of the slot's positive axis.
_SLOT_OF_DIRECTION = {
    "+x": ((0, 0), 0, 1.0),
    "-x": ((0, -1), 0, -1.0),
    "+y": ((0, 0), 1, 1.0),
    "-y": ((-1, 0), 1, -1.0),
}


class GradientOperator:
    """Gradient K u + b on one grid/face configuration.

    ``b`` is the ghost forcing from the Γ datum; ``apply(u)`` returns K u + b and
    ``apply(u, with_data=False)`` returns K u alone.
    """

    def __init__(self, grid: DomainGrid, faces: FaceSet, f_on: bool = True):
        self.grid = grid
        self.faces = faces
        self.f_on = f_on
        self.h = grid.h

        inside = grid.inside
        ny, nx = grid.shape
        active = np.zeros((ny, nx, 2), dtype=bool)
        active[:, :-1, 0] = inside[:, :-1] & inside[:, 1:]
        active[:-1, :, 1] = inside[:-1, :] & inside[1:, :]
        ghost = np.zeros((ny, nx, 2))
        neumann = np.zeros((ny, nx, 2), dtype=bool)

        slot_j, slot_i, slot_axis, outward = self._face_slots(faces)
        gamma = faces.is_gamma
        if f_on:
            active[slot_j[gamma], slot_i[gamma], slot_axis[gamma]] = True
            ghost[slot_j[gamma], slot_i[gamma], slot_axis[gamma]] = faces.f_values[gamma]
            neumann[slot_j[~gamma], slot_i[~gamma], slot_axis[~gamma]] = True
        else:
            neumann[slot_j, slot_i, slot_axis] = True

        self.active = active
        self.ghost = ghost
        self.neumann = neumann
        self.slot_j = slot_j
        self.slot_i = slot_i
        self.slot_axis = slot_axis
        self.outward = outward
        for array in (active, ghost, neumann):
            array.setflags(write=False)

    @staticmethod
    def _face_slots(
        faces: FaceSet,
    ) -> Tuple[NDArray[np.int64], NDArray[np.int64], NDArray[np.int64], NDArray[np.float64]]:
        offsets = np.array([_SLOT_OF_DIRECTION[d][0] for d in DIRECTIONS])
        axes = np.array([_SLOT_OF_DIRECTION[d][1] for d in DIRECTIONS])
        signs = np.array([_SLOT_OF_DIRECTION[d][2] for d in DIRECTIONS])
        d = faces.direction_index
        slot_j = faces.cells[:, 0] + offsets[d, 0]
        slot_i = faces.cells[:, 1] + offsets[d, 1]
        return slot_j, slot_i, axes[d], signs[d]

    def apply(self, u: NDArray[np.float64], with_data: bool = True) -> NDArray[np.float64]:
        """Forward differences across active slots; zero on inactive slots."""
        inside = self.grid.inside
        uu = np.where(inside, u, 0.0)
        ghost_x = self.ghost[..., 0] if with_data else 0.0
        ghost_y = self.ghost[..., 1] if with_data else 0.0

        east_inside = np.roll(inside, -1, axis=1)
        north_inside = np.roll(inside, -1, axis=0)
        left_x = np.where(inside, uu, ghost_x)
        right_x = np.where(east_inside, np.roll(uu, -1, axis=1), ghost_x)
        left_y = np.where(inside, uu, ghost_y)
        right_y = np.where(north_inside, np.roll(uu, -1, axis=0), ghost_y)

        g = np.empty(u.shape + (2,))
        g[..., 0] = (right_x - left_x) / self.h
        g[..., 1] = (right_y - left_y) / self.h
        return np.where(self.active, g, 0.0)

    def forcing(self) -> NDArray[np.float64]:
        """The ghost term b = apply(0)."""
        return self.apply(np.zeros(self.grid.shape))

    def divergence(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Discrete div z = -Kᵀz on inside cells, 0 elsewhere."""
        zz = np.where(self.active, z, 0.0)
        zx, zy = zz[..., 0], zz[..., 1]
        div = (zx - np.roll(zx, 1, axis=1)) / self.h + (zy - np.roll(zy, 1, axis=0)) / self.h
        return np.where(self.grid.inside, div, 0.0)

    def normal_trace(self, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Outward component of z on every boundary face, in face order."""
        values = z[self.slot_j, self.slot_i, self.slot_axis]
        return self.outward * values

    def primal(self, m: MetricIntegrand, u: NDArray[np.float64]) -> float:
        g = self.apply(u)
        return float(self.h**2 * np.sum(m.phi_field(g)))

    def dual(self, z: NDArray[np.float64]) -> float:
        gamma = self.faces.is_gamma
        trace = self.normal_trace(z)[gamma]
        return float(self.h * np.sum(self.faces.f_values[gamma] * trace))

    def dual_bound(self, z: NDArray[np.float64], lo: float, hi: float) -> float:
        """Lower bound on min 𝒥_Γ from any feasible z.

        Minimizers can be truncated to [lo, hi] = [min f, max f] without raising
        the objective, so the divergence term is charged only over that box.
        """
        div = self.divergence(z)
        penalty = np.maximum(lo * div, hi * div)
        return self.dual(z) - float(self.h**2 * np.sum(penalty[self.grid.inside]))


def grad(
    grid: DomainGrid, faces: FaceSet, u: NDArray[np.float64], f_on: bool = True
) -> NDArray[np.float64]:
    """Gradient field (ny, nx, 2); ``f_on=False`` treats Γ faces as Neumann."""
    return GradientOperator(grid, faces, f_on=f_on).apply(u)


def div_adjoint(grid: DomainGrid, faces: FaceSet, z: NDArray[np.float64]) -> NDArray[np.float64]:
    return GradientOperator(grid, faces).divergence(z)


def primal_objective(
    m: MetricIntegrand, grid: DomainGrid, faces: FaceSet, u: NDArray[np.float64]
) -> float:
    """𝒥_Γ(u) = Σ h² φ(x, g) with the Γ ghost differences included."""
    return GradientOperator(grid, faces).primal(m, u)


def dual_objective(grid: DomainGrid, faces: FaceSet, z: NDArray[np.float64]) -> float:
    """D(z) = Σ over Γ faces of h · f · z_ν; no feasibility check."""
    return GradientOperator(grid, faces).dual(z)


def pairing_density(
    m: MetricIntegrand,
    grid: DomainGrid,
    faces: FaceSet,
    u: NDArray[np.float64],
    z: NDArray[np.float64],
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Per-cell (z·g, φ(x, g)); both are 0 on cells with no active slot."""
    op = GradientOperator(grid, faces)
    g = op.apply(u)
    zz = np.where(op.active, z, 0.0)
    return np.einsum("...k,...k->...", zz, g), m.phi_field(g)

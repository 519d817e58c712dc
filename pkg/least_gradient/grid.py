"""Cell-centred rasterization of Ω, boundary faces, and field file formats.

The raster carries one outside cell of padding on every side of the bounding
box, so every inside cell has four in-raster neighbours and the dual slot of a
west or south boundary face can live on the outside neighbour.

Fields are plain arrays on the full raster: scalar fields have shape (ny, nx)
with NaN on outside cells, vector fields (ny, nx, 2) with NaN on unused slots.
Row j = 0 is the lowest row (y grows with j), column i = 0 the leftmost.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator, List, Optional, Sequence, Tuple, Union, overload

import numpy as np
from numpy.typing import ArrayLike, NDArray
from PIL import Image
from scipy import ndimage
from scipy.spatial import cKDTree

from common.constants import DIRECTIONS
from least_gradient.config import APP_NAME, MIN_N
from least_gradient.errors import (
    DimensionMismatchError,
    DomainError,
    InvalidArgumentError,
    MalformedFileError,
)

logger = logging.getLogger(APP_NAME)

PathLike = Union[str, Path]
Predicate = Callable[[NDArray[np.float64], NDArray[np.float64]], ArrayLike]
Datum = Callable[[NDArray[np.float64], NDArray[np.float64]], ArrayLike]
BBox = Tuple[float, float, float, float]

# (dj, di) offset towards the outside neighbour, per direction
DIRECTION_OFFSETS = {"+x": (0, 1), "-x": (0, -1), "+y": (1, 0), "-y": (-1, 0)}
DIRECTION_NORMALS = {"+x": (1.0, 0.0), "-x": (-1.0, 0.0), "+y": (0.0, 1.0), "-y": (0.0, -1.0)}

KIND_GAMMA = "gamma"
KIND_NEUMANN = "neumann"

_GEOMETRY_TOL = 1e-9


@dataclass(frozen=True)
class DomainGrid:
    nx: int
    ny: int
    h: float
    origin: Tuple[float, float]
    inside: NDArray[np.bool_]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    @property
    def n(self) -> int:
        """Cells per unit length."""
        return int(round(1.0 / self.h))

    def centers(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Cell-centre coordinate arrays X, Y of shape (ny, nx)."""
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.nx) + 0.5) * self.h
        ys = y0 + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(xs, ys)

    def cell_center(self, j: int, i: int) -> Tuple[float, float]:
        x0, y0 = self.origin
        return (x0 + (i + 0.5) * self.h, y0 + (j + 0.5) * self.h)

    def interior_mask(self) -> NDArray[np.bool_]:
        """Inside cells whose four neighbours are inside too."""
        inside = self.inside
        mask = inside.copy()
        mask[:, 1:] &= inside[:, :-1]
        mask[:, :-1] &= inside[:, 1:]
        mask[1:, :] &= inside[:-1, :]
        mask[:-1, :] &= inside[1:, :]
        mask[0, :] = mask[-1, :] = False
        mask[:, 0] = mask[:, -1] = False
        return mask

    def same_raster(self, other: "DomainGrid") -> bool:
        return (
            self.shape == other.shape
            and math.isclose(self.h, other.h, rel_tol=1e-12)
            and np.allclose(self.origin, other.origin, rtol=0.0, atol=1e-12)
            and bool(np.array_equal(self.inside, other.inside))
        )


@dataclass(frozen=True)
class BoundaryFace:
    cell: Tuple[int, int]  # (j, i) of the inside cell
    direction: str
    normal: Tuple[float, float]
    center: Tuple[float, float]
    length: float
    kind: str
    f_value: Optional[float]


class FaceSet(Sequence[BoundaryFace]):
    """All boundary faces of a grid, stored column-wise.

    Faces are ordered row-major by cell and then by direction in the order of
    ``DIRECTIONS``. Indexing yields ``BoundaryFace`` records; the arrays are what
    the operators consume.
    """

    def __init__(
        self,
        cells: NDArray[np.int64],
        direction_index: NDArray[np.int64],
        centers: NDArray[np.float64],
        is_gamma: NDArray[np.bool_],
        f_values: NDArray[np.float64],
        h: float,
    ):
        self.cells = cells
        self.direction_index = direction_index
        self.centers = centers
        self.is_gamma = is_gamma
        self.f_values = np.where(is_gamma, f_values, np.nan)
        self.h = h
        for array in (self.cells, self.direction_index, self.centers, self.is_gamma):
            array.setflags(write=False)
        self.f_values.setflags(write=False)

    def __len__(self) -> int:
        return int(self.direction_index.shape[0])

    @overload
    def __getitem__(self, index: int) -> BoundaryFace: ...

    @overload
    def __getitem__(self, index: slice) -> List[BoundaryFace]: ...

    def __getitem__(self, index):  # type: ignore[no-untyped-def]
        if isinstance(index, slice):
            return [self[k] for k in range(*index.indices(len(self)))]
        k = range(len(self))[index]
        direction = DIRECTIONS[int(self.direction_index[k])]
        gamma = bool(self.is_gamma[k])
        return BoundaryFace(
            cell=(int(self.cells[k, 0]), int(self.cells[k, 1])),
            direction=direction,
            normal=DIRECTION_NORMALS[direction],
            center=(float(self.centers[k, 0]), float(self.centers[k, 1])),
            length=self.h,
            kind=KIND_GAMMA if gamma else KIND_NEUMANN,
            f_value=float(self.f_values[k]) if gamma else None,
        )

    def __iter__(self) -> Iterator[BoundaryFace]:
        for k in range(len(self)):
            yield self[k]

    @property
    def n_gamma(self) -> int:
        return int(self.is_gamma.sum())

    @property
    def normals(self) -> NDArray[np.float64]:
        table = np.array([DIRECTION_NORMALS[d] for d in DIRECTIONS])
        return table[self.direction_index]

    def f_range(self) -> Tuple[float, float]:
        """(min f, max f) over Γ faces; (0, 0) when Γ is empty."""
        if self.n_gamma == 0:
            return (0.0, 0.0)
        values = self.f_values[self.is_gamma]
        return (float(values.min()), float(values.max()))

    def with_gamma(self, is_gamma: NDArray[np.bool_], f_values: NDArray[np.float64]) -> "FaceSet":
        """Same faces with a new Γ classification and datum."""
        return FaceSet(self.cells, self.direction_index, self.centers, is_gamma, f_values, self.h)


def _evaluate(
    pred: Callable[..., ArrayLike], x: NDArray[np.float64], y: NDArray[np.float64]
) -> NDArray[Any]:
    return np.broadcast_to(np.asarray(pred(x, y)), x.shape)


def rasterize(
    inside_pred: Predicate,
    gamma_pred: Predicate,
    f_func: Datum,
    bbox: BBox,
    n: int,
) -> Tuple[DomainGrid, FaceSet]:
    """Rasterize Ω at ``n`` cells per unit length.

    Predicates and the datum are vectorized callables of (x, y) arrays. ``bbox``
    is (xmin, ymin, xmax, ymax) and must contain Ω.
    """
    if n < MIN_N:
        raise InvalidArgumentError(f"n must be at least {MIN_N}, got {n}")
    xmin, ymin, xmax, ymax = (float(v) for v in bbox)
    if not (math.isfinite(xmax - xmin) and math.isfinite(ymax - ymin)):
        raise InvalidArgumentError(f"Bounding box {bbox} is not finite")
    if xmax <= xmin or ymax <= ymin:
        raise InvalidArgumentError(f"Bounding box {bbox} is degenerate")

    h = 1.0 / n
    nx = int(math.ceil((xmax - xmin) * n - _GEOMETRY_TOL)) + 2
    ny = int(math.ceil((ymax - ymin) * n - _GEOMETRY_TOL)) + 2
    origin = (xmin - h, ymin - h)

    xs = origin[0] + (np.arange(nx) + 0.5) * h
    ys = origin[1] + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xs, ys)
    inside = _evaluate(inside_pred, X, Y).astype(bool).copy()
    inside[0, :] = inside[-1, :] = False
    inside[:, 0] = inside[:, -1] = False

    if not inside.any():
        raise DomainError("Inside region is empty")
    _, components = ndimage.label(inside)
    if components != 1:
        raise DomainError(f"Inside region is not 4-connected ({components} components)")
    inside.setflags(write=False)
    grid = DomainGrid(nx=nx, ny=ny, h=h, origin=origin, inside=inside)

    cell_blocks, dir_blocks, center_blocks = [], [], []
    for d_index, direction in enumerate(DIRECTIONS):
        dj, di = DIRECTION_OFFSETS[direction]
        neighbour_inside = np.roll(inside, shift=(-dj, -di), axis=(0, 1))
        jj, ii = np.nonzero(inside & ~neighbour_inside)
        nxv, nyv = DIRECTION_NORMALS[direction]
        cx = origin[0] + (ii + 0.5 + 0.5 * nxv) * h
        cy = origin[1] + (jj + 0.5 + 0.5 * nyv) * h
        cell_blocks.append(np.stack([jj, ii], axis=1))
        dir_blocks.append(np.full(jj.shape, d_index))
        center_blocks.append(np.stack([cx, cy], axis=1))

    cells = np.concatenate(cell_blocks).astype(np.int64)
    dir_index = np.concatenate(dir_blocks).astype(np.int64)
    centers = np.concatenate(center_blocks)
    order = np.lexsort((dir_index, cells[:, 1], cells[:, 0]))
    cells, dir_index, centers = cells[order], dir_index[order], centers[order]

    is_gamma = _evaluate(gamma_pred, centers[:, 0], centers[:, 1]).astype(bool)
    f_values = np.zeros(len(dir_index))
    if is_gamma.any():
        f_values[is_gamma] = _evaluate(
            f_func, centers[is_gamma, 0], centers[is_gamma, 1]
        ).astype(float)
        if not np.all(np.isfinite(f_values[is_gamma])):
            raise InvalidArgumentError("Boundary datum is not finite on every Γ face")

    faces = FaceSet(cells, dir_index, centers, is_gamma.copy(), f_values, h)
    logger.info(
        f"Rasterized {nx}x{ny} cells (h={h:g}): {grid.n_inside} inside, "
        f"{len(faces)} boundary faces, {faces.n_gamma} on Γ"
    )
    return grid, faces


def gamma_endpoints(faces: FaceSet, h: float) -> NDArray[np.float64]:
    """Points where Γ meets the Neumann part of the boundary (∂Γ).

    A Γ face lying within one cell of a Neumann face marks an endpoint; the
    midpoint of the two face centres is returned. Shape (k, 2).
    """
    gamma = faces.centers[faces.is_gamma]
    neumann = faces.centers[~faces.is_gamma]
    if len(gamma) == 0 or len(neumann) == 0:
        return np.zeros((0, 2))
    tree = cKDTree(neumann)
    distance, index = tree.query(gamma, k=1, distance_upper_bound=1.01 * h)
    hit = np.isfinite(distance)
    return 0.5 * (gamma[hit] + neumann[index[hit]])


def near_points(
    xy: NDArray[np.float64], points: NDArray[np.float64], radius: float
) -> NDArray[np.bool_]:
    """True where a location in ``xy`` (shape (..., 2)) lies within ``radius`` of a point."""
    flat = xy.reshape(-1, 2)
    if len(points) == 0 or radius <= 0:
        return np.zeros(flat.shape[0], dtype=bool).reshape(xy.shape[:-1])
    distance, _ = cKDTree(np.asarray(points, dtype=float)).query(flat, k=1)
    return (distance <= radius).reshape(xy.shape[:-1])


def scalar_field(grid: DomainGrid, values: ArrayLike) -> NDArray[np.float64]:
    """Copy of ``values`` on the full raster with NaN on outside cells."""
    array = np.array(values, dtype=float)
    if array.shape != grid.shape:
        raise DimensionMismatchError(f"Field shape {array.shape} does not match grid {grid.shape}")
    array[~grid.inside] = np.nan
    if not np.all(np.isfinite(array[grid.inside])):
        raise InvalidArgumentError("Field is not finite on every inside cell")
    return array


def _header(grid: DomainGrid) -> str:
    return f"{grid.nx} {grid.ny} {grid.h!r} {grid.origin[0]!r} {grid.origin[1]!r}"


def save_field(path: PathLike, grid: DomainGrid, values: ArrayLike) -> None:
    """Write one scalar array as CSV, lowest row first."""
    array = np.asarray(values, dtype=float)
    if array.shape != grid.shape:
        raise DimensionMismatchError(f"Field shape {array.shape} does not match grid {grid.shape}")
    np.savetxt(path, array, fmt="%.17g", delimiter=",", header=_header(grid), comments="# ")


def load_field(path: PathLike, grid: DomainGrid) -> NDArray[np.float64]:
    """Read a CSV written by ``save_field`` and check it against ``grid``."""
    file_path = Path(path)
    if not file_path.is_file():
        raise FileNotFoundError(f"Field file not found: {file_path}")
    with open(file_path, "r", encoding="utf-8") as f:
        first = f.readline()
    if not first.startswith("#"):
        raise MalformedFileError(f"{file_path}: missing '# nx ny h x0 y0' header")
    parts = first[1:].split()
    try:
        nx, ny = int(parts[0]), int(parts[1])
        h, x0, y0 = float(parts[2]), float(parts[3]), float(parts[4])
    except (IndexError, ValueError) as e:
        raise MalformedFileError(f"{file_path}: bad header '{first.strip()}'") from e

    if (nx, ny) != (grid.nx, grid.ny):
        raise DimensionMismatchError(
            f"{file_path}: field is {nx}x{ny}, grid is {grid.nx}x{grid.ny}"
        )
    if not math.isclose(h, grid.h, rel_tol=1e-12) or not np.allclose(
        (x0, y0), grid.origin, rtol=0.0, atol=1e-9
    ):
        raise DimensionMismatchError(f"{file_path}: spacing or origin differs from the grid")

    try:
        array = np.loadtxt(file_path, delimiter=",", comments="#", ndmin=2, dtype=float)
    except ValueError as e:
        raise MalformedFileError(f"{file_path}: {e}") from e
    if array.shape != grid.shape:
        raise DimensionMismatchError(
            f"{file_path}: data is {array.shape[1]}x{array.shape[0]}, header says {nx}x{ny}"
        )
    return array


def save_vector_field(stem: PathLike, grid: DomainGrid, z: NDArray[np.float64]) -> None:
    """Write ``<stem>_x.csv`` and ``<stem>_y.csv``."""
    if z.shape != grid.shape + (2,):
        raise DimensionMismatchError(f"Vector field shape {z.shape} does not match grid")
    stem = str(stem)
    save_field(f"{stem}_x.csv", grid, z[..., 0])
    save_field(f"{stem}_y.csv", grid, z[..., 1])


def load_vector_field(
    path_x: PathLike, path_y: PathLike, grid: DomainGrid
) -> NDArray[np.float64]:
    return np.stack([load_field(path_x, grid), load_field(path_y, grid)], axis=-1)


def save_pgm(path: PathLike, grid: DomainGrid, values: ArrayLike) -> None:
    """8-bit grayscale image, highest row on top; [min, max] maps to [0, 255].

    Non-finite cells are written as 0; a constant field is written as 0.
    """
    array = np.asarray(values, dtype=float)
    if array.shape != grid.shape:
        raise DimensionMismatchError(f"Field shape {array.shape} does not match grid {grid.shape}")
    finite = np.isfinite(array)
    pixels = np.zeros(array.shape, dtype=np.uint8)
    if finite.any():
        lo, hi = float(array[finite].min()), float(array[finite].max())
        if hi > lo:
            scaled = np.rint((array[finite] - lo) / (hi - lo) * 255.0)
            pixels[finite] = np.clip(scaled, 0, 255).astype(np.uint8)
    Image.fromarray(np.ascontiguousarray(np.flipud(pixels))).save(path, format="PPM")

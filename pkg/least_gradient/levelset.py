"""Superlevel curves of u, their segment structure, and continuity diagnostics.

Level curves of {u ≥ t} come from marching squares on the cell-centre lattice,
restricted to 2×2 blocks of inside cells. Saddle blocks are resolved by the
average of the four corners.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import ndimage
from scipy.spatial import cKDTree

from least_gradient.anisotropy import MetricIntegrand
from least_gradient.config import APP_NAME, DEFAULT_EXCLUSION_FACTOR, DEFAULT_HOTSPOT_FRACTION
from least_gradient.errors import DimensionMismatchError, UnsupportedAnisotropyError
from least_gradient.grid import DomainGrid, FaceSet, gamma_endpoints, near_points

logger = logging.getLogger(APP_NAME)

EdgeKey = Tuple[str, int, int]

# Corner order: 0 = (j, i), 1 = (j, i+1), 2 = (j+1, i+1), 3 = (j+1, i).
# Edge order: 0 bottom (0-1), 1 right (1-2), 2 top (2-3), 3 left (3-0).
_EDGE_CORNERS = ((0, 1), (1, 2), (2, 3), (3, 0))
_CORNER_OFFSETS = ((0, 0), (0, 1), (1, 1), (1, 0))

_SEGMENTS: Dict[int, Tuple[Tuple[int, int], ...]] = {
    1: ((3, 0),),
    2: ((0, 1),),
    3: ((3, 1),),
    4: ((1, 2),),
    6: ((0, 2),),
    7: ((3, 2),),
    8: ((2, 3),),
    9: ((0, 2),),
    11: ((1, 2),),
    12: ((1, 3),),
    13: ((0, 1),),
    14: ((0, 3),),
}
# Saddles: (segments when the centre is high, segments when it is low)
_SADDLES: Dict[int, Tuple[Tuple[Tuple[int, int], ...], Tuple[Tuple[int, int], ...]]] = {
    5: (((0, 1), (2, 3)), ((3, 0), (1, 2))),
    10: (((3, 0), (1, 2)), ((0, 1), (2, 3))),
}


@dataclass(frozen=True)
class LevelCurve:
    t: float
    polylines: List[NDArray[np.float64]] = field(repr=False)
    closed: List[bool]

    @property
    def endpoints(self) -> List[Tuple[NDArray[np.float64], NDArray[np.float64]]]:
        return [(line[0], line[-1]) for line in self.polylines]


def _edge_key(j: int, i: int, edge: int) -> EdgeKey:
    if edge == 0:
        return ("h", j, i)
    if edge == 1:
        return ("v", j, i + 1)
    if edge == 2:
        return ("h", j + 1, i)
    return ("v", j, i)


def _chain(adjacency: Dict[EdgeKey, List[EdgeKey]]) -> List[Tuple[List[EdgeKey], bool]]:
    """Join segments sharing an edge into open chains first, then loops."""
    visited: Set[EdgeKey] = set()
    chains: List[Tuple[List[EdgeKey], bool]] = []
    starts = [k for k in adjacency if len(adjacency[k]) == 1]
    starts += [k for k in adjacency if len(adjacency[k]) != 1]
    for start in starts:
        if start in visited:
            continue
        chain = [start]
        visited.add(start)
        current, previous = start, None
        closed = False
        while True:
            nxt = [k for k in adjacency[current] if k != previous and k not in visited]
            if not nxt:
                closed = len(chain) > 2 and start in adjacency[current] and previous is not None
                break
            previous, current = current, nxt[0]
            chain.append(current)
            visited.add(current)
        chains.append((chain, closed))
    return chains


def _level_curve(grid: DomainGrid, u: NDArray[np.float64], t: float) -> LevelCurve:
    inside = grid.inside
    block = inside[:-1, :-1] & inside[:-1, 1:] & inside[1:, 1:] & inside[1:, :-1]
    values = np.where(inside, u, -np.inf)
    high = values >= t
    ny, nx = high.shape
    corners = [high[dj : dj + ny - 1, di : di + nx - 1] for dj, di in _CORNER_OFFSETS]
    case = corners[0] * 1 + corners[1] * 2 + corners[2] * 4 + corners[3] * 8
    case = np.where(block, case, 0)

    X, Y = grid.centers()
    points: Dict[EdgeKey, NDArray[np.float64]] = {}
    adjacency: Dict[EdgeKey, List[EdgeKey]] = {}

    def edge_point(j: int, i: int, edge: int) -> EdgeKey:
        key = _edge_key(j, i, edge)
        if key not in points:
            a, b = _EDGE_CORNERS[edge]
            ja, ia = j + _CORNER_OFFSETS[a][0], i + _CORNER_OFFSETS[a][1]
            jb, ib = j + _CORNER_OFFSETS[b][0], i + _CORNER_OFFSETS[b][1]
            va, vb = u[ja, ia], u[jb, ib]
            s = (t - va) / (vb - va)
            points[key] = np.array(
                [X[ja, ia] + s * (X[jb, ib] - X[ja, ia]), Y[ja, ia] + s * (Y[jb, ib] - Y[ja, ia])]
            )
        return key

    for j, i in zip(*np.nonzero((case != 0) & (case != 15))):
        j, i = int(j), int(i)
        code = int(case[j, i])
        if code in _SADDLES:
            centre = 0.25 * (u[j, i] + u[j, i + 1] + u[j + 1, i + 1] + u[j + 1, i])
            segments = _SADDLES[code][0 if centre >= t else 1]
        else:
            segments = _SEGMENTS[code]
        for e0, e1 in segments:
            k0, k1 = edge_point(j, i, e0), edge_point(j, i, e1)
            adjacency.setdefault(k0, []).append(k1)
            adjacency.setdefault(k1, []).append(k0)

    polylines, closed = [], []
    for chain, is_closed in _chain(adjacency):
        line = np.array([points[k] for k in chain])
        if is_closed:
            line = np.vstack([line, line[:1]])
        polylines.append(line)
        closed.append(is_closed)
    return LevelCurve(t=float(t), polylines=polylines, closed=closed)


def extract_levelsets(
    grid: DomainGrid, u: ArrayLike, levels: Iterable[float]
) -> List[LevelCurve]:
    """Boundary curves of {u ≥ t} inside Ω, one LevelCurve per level, in input order."""
    u_arr = np.asarray(u, dtype=float)
    if u_arr.shape != grid.shape:
        raise DimensionMismatchError(f"u has shape {u_arr.shape}, grid is {grid.shape}")
    curves = [_level_curve(grid, u_arr, float(t)) for t in levels]
    for curve in curves:
        logger.debug(f"Level {curve.t:g}: {len(curve.polylines)} polylines")
    return curves


def _point_segment_distance(
    points: NDArray[np.float64], a: NDArray[np.float64], b: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Distance from each point to each segment; shapes (P, 2), (S, 2), (S, 2) -> (P, S)."""
    ab = b - a
    length2 = np.einsum("sk,sk->s", ab, ab)
    ap = points[:, None, :] - a[None, :, :]
    s = np.einsum("psk,sk->ps", ap, ab) / np.where(length2 > 0, length2, 1.0)
    s = np.clip(s, 0.0, 1.0)
    nearest = a[None, :, :] + s[..., None] * ab[None, :, :]
    return np.linalg.norm(points[:, None, :] - nearest, axis=-1)


def polyline_deviation(line: NDArray[np.float64], closed: bool = False) -> float:
    """Hausdorff distance between a polyline and the chord joining its ends.

    Closed polylines have a degenerate chord, so their deviation is the largest
    distance from the first vertex.
    """
    start, end = line[0], line[-1]
    if closed or np.allclose(start, end):
        return float(np.max(np.linalg.norm(line - start, axis=1)))
    to_chord = _point_segment_distance(line, start[None, :], end[None, :])
    samples = max(64, 4 * len(line))
    s = np.linspace(0.0, 1.0, samples)[:, None]
    chord = start + s * (end - start)
    to_line = _point_segment_distance(chord, line[:-1], line[1:])
    return float(max(to_chord.max(), to_line.min(axis=1).max()))


def segment_check(curve: LevelCurve, m: MetricIntegrand) -> List[float]:
    """Per-polyline deviation from a straight segment (isotropic integrands only)."""
    if m.kind not in ("euclidean", "p2"):
        raise UnsupportedAnisotropyError(
            f"Segment structure holds only for the isotropic integrand, not '{m.kind}'"
        )
    return [polyline_deviation(line, closed) for line, closed in zip(curve.polylines, curve.closed)]


def check_nesting(grid: DomainGrid, u: ArrayLike, curves: Sequence[LevelCurve]) -> int:
    """Count level-curve vertices that break the nesting of superlevel sets.

    A vertex of level t sits on the boundary of {u ≥ t}; for s > t it must not
    lie strictly inside {u ≥ s}. Vertices are tested against the value of u
    interpolated at the vertex.
    """
    u_arr = np.asarray(u, dtype=float)
    filled = np.where(grid.inside, u_arr, np.nan)
    x0, y0 = grid.origin
    violations = 0
    ordered = sorted(curves, key=lambda c: c.t)
    for index, curve in enumerate(ordered):
        higher = [c.t for c in ordered[index + 1 :] if c.t > curve.t]
        if not higher or not curve.polylines:
            continue
        vertices = np.vstack(curve.polylines)
        col = (vertices[:, 0] - x0) / grid.h - 0.5
        row = (vertices[:, 1] - y0) / grid.h - 0.5
        values = ndimage.map_coordinates(filled, [row, col], order=1, mode="nearest")
        finite = np.isfinite(values)
        tolerance = 1e-9 * max(1.0, float(np.nanmax(np.abs(filled))))
        violations += int(np.sum(finite & (values > min(higher) + tolerance)))
    return violations


@dataclass(frozen=True)
class HotspotCluster:
    centroid: Tuple[float, float]
    peak_osc: float
    cells: int


@dataclass(frozen=True)
class ContinuityReport:
    osc: NDArray[np.float64] = field(repr=False)
    trace_err: float
    hotspots: NDArray[np.int64] = field(repr=False)
    clusters: List[HotspotCluster]
    hotspot_thresh: float
    exclusion_radius: float

    def to_text(self) -> str:
        lines = [
            f"trace_err={self.trace_err:.12g}",
            f"max_osc={float(np.max(self.osc)):.12g}",
            f"hotspot_thresh={self.hotspot_thresh:.12g}",
            f"exclusion_radius={self.exclusion_radius:.12g}",
            f"hotspots={len(self.hotspots)}",
            f"clusters={len(self.clusters)}",
        ]
        for k, cluster in enumerate(self.clusters):
            x, y = cluster.centroid
            lines.append(
                f"cluster_{k}={x:.6g},{y:.6g} "
                f"peak_osc={cluster.peak_osc:.6g} cells={cluster.cells}"
            )
        return "\n".join(lines)


def continuity_scan(
    grid: DomainGrid,
    faces: FaceSet,
    u: ArrayLike,
    exclusion_radius: Optional[float] = None,
    hotspot_thresh: Optional[float] = None,
    extra_singular: Iterable[Tuple[float, float]] = (),
) -> ContinuityReport:
    """Local oscillation of u, trace error on Γ, and hotspot clusters.

    ``exclusion_radius`` defaults to 4h around ∂Γ and any ``extra_singular``
    point; ``hotspot_thresh`` defaults to a quarter of the range of f.
    """
    u_arr = np.asarray(u, dtype=float)
    if u_arr.shape != grid.shape:
        raise DimensionMismatchError(f"u has shape {u_arr.shape}, grid is {grid.shape}")
    inside = grid.inside
    radius = DEFAULT_EXCLUSION_FACTOR * grid.h if exclusion_radius is None else exclusion_radius
    lo, hi = faces.f_range()
    thresh = DEFAULT_HOTSPOT_FRACTION * (hi - lo) if hotspot_thresh is None else hotspot_thresh

    upper = ndimage.maximum_filter(
        np.where(inside, u_arr, -np.inf), size=3, mode="constant", cval=-np.inf
    )
    lower = ndimage.minimum_filter(
        np.where(inside, u_arr, np.inf), size=3, mode="constant", cval=np.inf
    )
    osc = np.where(inside, upper - lower, 0.0)

    extra = np.asarray(list(extra_singular), dtype=float).reshape(-1, 2)
    points = np.concatenate([gamma_endpoints(faces, grid.h), extra])
    far = faces.is_gamma & ~near_points(faces.centers, points, radius)
    u_cells = u_arr[faces.cells[:, 0], faces.cells[:, 1]]
    errors = np.abs(u_cells[far] - faces.f_values[far])
    trace_err = float(np.max(errors, initial=0.0))

    hot = inside & (osc > thresh)
    hotspots = np.argwhere(hot)
    labels, count = ndimage.label(hot, structure=np.ones((3, 3), dtype=int))
    clusters: List[HotspotCluster] = []
    if count:
        index = np.arange(1, count + 1)
        centroids = ndimage.center_of_mass(hot, labels, index)
        peaks = ndimage.maximum(osc, labels, index)
        sizes = ndimage.sum_labels(hot, labels, index)
        x0, y0 = grid.origin
        for (cj, ci), peak, size in zip(centroids, peaks, sizes):
            centroid = (x0 + (ci + 0.5) * grid.h, y0 + (cj + 0.5) * grid.h)
            clusters.append(HotspotCluster(centroid, float(peak), int(size)))

    logger.info(f"Continuity scan: trace_err={trace_err:.3e}, {len(clusters)} hotspot clusters")
    return ContinuityReport(
        osc=osc,
        trace_err=trace_err,
        hotspots=hotspots,
        clusters=clusters,
        hotspot_thresh=thresh,
        exclusion_radius=radius,
    )


def osc_near(
    report: ContinuityReport, grid: DomainGrid, point: Tuple[float, float], radius: float
) -> float:
    """Largest oscillation over inside cells within ``radius`` of ``point``."""
    X, Y = grid.centers()
    mask = grid.inside & (np.hypot(X - point[0], Y - point[1]) <= radius)
    return float(np.max(report.osc[mask], initial=0.0))


def interior_hotspots(
    report: ContinuityReport, grid: DomainGrid, faces: FaceSet, margin: float
) -> NDArray[np.int64]:
    """Hotspot cells farther than ``margin`` from every boundary face."""
    if len(report.hotspots) == 0:
        return report.hotspots
    x0, y0 = grid.origin
    xy = np.column_stack(
        [x0 + (report.hotspots[:, 1] + 0.5) * grid.h, y0 + (report.hotspots[:, 0] + 0.5) * grid.h]
    )
    distance, _ = cKDTree(faces.centers).query(xy, k=1)
    return report.hotspots[distance > margin]


def save_levelsets_csv(path: Union[str, Path], curves: Sequence[LevelCurve]) -> None:
    """Rows ``t,polyline_id,x,y`` in level order, then polyline order."""
    rows = []
    for curve in curves:
        for pid, line in enumerate(curve.polylines):
            for x, y in line:
                rows.append((curve.t, pid, x, y))
    table = np.array(rows, dtype=float).reshape(-1, 4)
    np.savetxt(
        path,
        table,
        fmt=("%.17g", "%d", "%.17g", "%.17g"),
        delimiter=",",
        header="t,polyline_id,x,y",
        comments="",
    )


def jump_levels(
    grid: DomainGrid, u: ArrayLike, levels: Iterable[float], jump_thresh: float
) -> List[bool]:
    """Flag levels that u crosses with a jump larger than ``jump_thresh``.

    Such a level curve runs inside the jump band between two neighbouring
    cells, so its position there carries no information about the segments.
    """
    u_arr = np.asarray(u, dtype=float)
    if u_arr.shape != grid.shape:
        raise DimensionMismatchError(f"u has shape {u_arr.shape}, grid is {grid.shape}")
    inside = grid.inside
    pairs = []
    # the padding ring is outside, so rolled neighbours never wrap onto inside cells
    for axis in (0, 1):
        neighbour = np.roll(u_arr, -1, axis=axis)
        both = inside & np.roll(inside, -1, axis=axis)
        lo = np.minimum(u_arr, neighbour)[both]
        hi = np.maximum(u_arr, neighbour)[both]
        keep = hi - lo > jump_thresh
        pairs.append((lo[keep], hi[keep]))
    lows = np.concatenate([p[0] for p in pairs])
    highs = np.concatenate([p[1] for p in pairs])
    return [bool(np.any((lows < t) & (highs >= t))) for t in levels]

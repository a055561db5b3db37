"""Scene encoders: virtual LIDAR, voxel grids and GNSS coordinate matrices."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EncodingError
from .geometry import Box, cast_rays
from .scene import Scenario, VehicleState

OBSTACLE, BS_MARK, UE_MARK = -1, -2, -3
SCATTERER, TX_MARK, RX_START = 1, 10, 3


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, ...]
    cell_size: tuple[float, ...]
    dims: tuple[int, ...]

    def __post_init__(self):
        n = len(self.dims)
        if n not in (2, 3) or len(self.origin) != n:
            raise ValueError("grid must be 2-D or 3-D with a matching origin")
        cell = self.cell_size
        if np.isscalar(cell):
            cell = (float(cell),) * n
        if len(cell) != n or any(c <= 0 for c in cell):
            raise ValueError(f"bad cell size {self.cell_size}")
        if any(int(d) != d or d < 1 for d in self.dims):
            raise ValueError(f"bad dims {self.dims}")
        object.__setattr__(self, "cell_size", tuple(float(c) for c in cell))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def ndim(self) -> int:
        return len(self.dims)

    def cell_of(self, points) -> np.ndarray:
        """Integer cell indices by floor((p - origin) / cell_size)."""
        p = np.asarray(points, float)[..., : self.ndim]
        return np.floor((p - np.array(self.origin)) / np.array(self.cell_size)).astype(np.int64)

    def inside(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        return np.all((idx >= 0) & (idx < np.array(self.dims)), axis=-1)

    def ground(self) -> "GridSpec":
        return GridSpec(self.origin[:2], self.cell_size[:2], self.dims[:2])


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3)
    sensor_pose: tuple[float, float, float, float]  # x, y, z, heading

    def __post_init__(self):
        pts = np.asarray(self.points, float).reshape(-1, 3)
        if not np.isfinite(pts).all():
            raise ValueError("point cloud has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


def lidar_directions(n_azimuth: int, n_elevation: int, heading: float = 0.0,
                     el_range: tuple[float, float] = (math.radians(-30), math.radians(10))) -> np.ndarray:
    az = heading + 2 * math.pi * np.arange(n_azimuth) / n_azimuth
    if n_elevation == 1:
        el = np.array([0.5 * (el_range[0] + el_range[1])])
    else:
        el = np.linspace(el_range[0], el_range[1], n_elevation)
    A, E = np.meshgrid(az, el, indexing="ij")
    return np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], axis=-1).reshape(-1, 3)


def scene_boxes(scenario: Scenario | None, vehicles: Sequence[VehicleState] = (),
                include_vehicles: bool = True) -> list[Box]:
    boxes = list(scenario.buildings) if scenario is not None else []
    if include_vehicles:
        boxes += [v.box() for v in vehicles]
    return boxes


def virtual_lidar(scenario: Scenario | None, vehicles: Sequence[VehicleState], sensor,
                  n_azimuth: int = 360, n_elevation: int = 16, max_range: float = 120.0,
                  el_range=(math.radians(-30), math.radians(10)), include_vehicles: bool = True,
                  extra_boxes: Sequence[Box] = ()) -> PointCloud:
    """Cast a fixed fan of rays from ``sensor`` and keep the nearest hit of each.

    ``sensor`` is (x, y, z) or (x, y, z, heading).
    """
    pose = tuple(float(v) for v in sensor) + (0.0,) * (4 - len(sensor))
    origin = np.array(pose[:3])
    dirs = lidar_directions(n_azimuth, n_elevation, pose[3], el_range)
    boxes = scene_boxes(scenario, vehicles, include_vehicles) + list(extra_boxes)
    t = cast_rays(origin, dirs, boxes, max_range)
    hit = np.isfinite(t)
    return PointCloud(origin + dirs[hit] * t[hit, None], pose)


def voxelize(cloud: PointCloud | np.ndarray, grid: GridSpec, bs_pos, ue_pos) -> np.ndarray:
    """int8 grid of shape ``grid.dims``: -1 obstacle, -2 BS, -3 UE, 0 empty.

    UE overrides BS overrides obstacle. Points outside the grid are dropped;
    a BS or UE outside the grid is an error.
    """
    if grid.ndim != 3:
        raise ValueError("voxelize needs a 3-D grid")
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, float).reshape(-1, 3)
    out = np.zeros(grid.dims, dtype=np.int8)
    idx = grid.cell_of(pts)
    idx = idx[grid.inside(idx)]
    out[idx[:, 0], idx[:, 1], idx[:, 2]] = OBSTACLE
    for pos, mark, what in ((bs_pos, BS_MARK, "BS"), (ue_pos, UE_MARK, "UE")):
        cell = grid.cell_of(pos)
        if not grid.inside(cell):
            raise EncodingError(f"{what} at {tuple(pos)} lies outside the voxel grid")
        out[tuple(cell)] = mark
    return out


def _rasterize_footprint(out: np.ndarray, grid: GridSpec, box: Box, value: int) -> None:
    o, c = np.array(grid.origin), np.array(grid.cell_size)
    lo = np.floor((np.array(box.lo[:2]) - o) / c).astype(int)
    hi = np.ceil((np.array(box.hi[:2]) - o) / c).astype(int)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, grid.dims)
    if np.all(hi > lo):
        out[lo[0] : hi[0], lo[1] : hi[1]] = value


def heading_step(heading: float) -> tuple[int, int]:
    """Unit grid step along the axis nearest to ``heading``."""
    c, s = math.cos(heading), math.sin(heading)
    if abs(c) >= abs(s):
        return (1 if c >= 0 else -1, 0)
    return (0, 1 if s >= 0 else -1)


def coord_matrix(scenario: Scenario | None, vehicles: Sequence[VehicleState], grid: GridSpec,
                 tx_pos, rx: VehicleState, gradient_len: int = 4,
                 include_vehicles: bool = True) -> np.ndarray:
    """Ground-plane int8 matrix: scatterers 1, transmitter 10, receiver run 3, 4, ...

    The receiver run starts at the receiver's cell and extends along the
    nearest grid axis to its heading, truncated at the grid edge.
    """
    if not (1 <= gradient_len <= TX_MARK - RX_START):
        raise ValueError(f"gradient_len must be in [1, {TX_MARK - RX_START}]")
    g = grid.ground() if grid.ndim == 3 else grid
    out = np.zeros(g.dims, dtype=np.int8)
    tx_cell = g.cell_of(tx_pos)
    rx_cell = g.cell_of(rx.position)
    if not g.inside(tx_cell):
        raise EncodingError(f"transmitter at {tuple(tx_pos)} lies outside the grid")
    if not g.inside(rx_cell):
        raise EncodingError(f"receiver at {tuple(rx.position)} lies outside the grid")
    if scenario is not None:
        for b in scenario.buildings:
            _rasterize_footprint(out, g, b, SCATTERER)
    if include_vehicles:
        for v in vehicles:
            if v.vehicle_id != rx.vehicle_id:
                _rasterize_footprint(out, g, v.box(), SCATTERER)
    step = np.array(heading_step(rx.heading))
    for k in range(gradient_len):
        cell = rx_cell + k * step
        if not g.inside(cell):
            break
        out[tuple(cell)] = RX_START + k
    out[tuple(tx_cell)] = TX_MARK
    return out


def run_length(matrix: np.ndarray) -> int:
    """Length of the receiver gradient run (3, 4, ...) in a coordinate matrix."""
    starts = np.argwhere(matrix == RX_START)
    if len(starts) != 1:
        return 0
    n = 1
    cur = starts[0]
    while True:
        nxt = None
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            c = cur + d
            if np.all(c >= 0) and np.all(c < matrix.shape) and matrix[tuple(c)] == RX_START + n:
                nxt = c
                break
        if nxt is None:
            return n
        cur = nxt
        n += 1

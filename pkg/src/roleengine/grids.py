"""Occupancy grids, robot types, and signed distance fields.

World convention: positions are (x, y) in meters, grid cell (row, col)
covers ``[col*res, (col+1)*res) x [row*res, (row+1)*res)`` with its center
at ``((col+0.5)*res, (row+0.5)*res)``. The world is bounded: the grid
border behaves as an obstacle for all distance queries.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt

from ._kernels import sample_bilinear


class InputError(ValueError):
    """Invalid user-supplied input (maps, scenario values, ids)."""


@dataclass(frozen=True)
class RobotType:
    """Physical parameters of one robot class."""

    type_id: str
    radius: float
    v_max: float
    sigma_obs: float = 0.1
    epsilon_safe: float = 0.1

    def __post_init__(self):
        if self.radius <= 0 or self.v_max <= 0:
            raise InputError("radius and v_max must be positive")
        if self.sigma_obs <= 0:
            raise InputError("sigma_obs must be positive")
        if self.epsilon_safe < 0:
            raise InputError("epsilon_safe must be non-negative")


@dataclass
class OccupancyGrid:
    """Binary occupancy over a bounded 2D world."""

    cells: np.ndarray  # bool, (height, width), True = occupied
    resolution: float  # meters per cell

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=bool)
        if self.cells.ndim != 2 or self.cells.size == 0:
            raise InputError("occupancy grid must be a non-empty 2D matrix")
        if self.resolution <= 0:
            raise InputError("resolution must be positive")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def world_to_cell(self, pos) -> tuple[int, int]:
        """Map a world (x, y) position to its (row, col) cell."""
        col = int(np.floor(pos[0] / self.resolution))
        row = int(np.floor(pos[1] / self.resolution))
        return row, col

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return np.array([(col + 0.5) * self.resolution,
                         (row + 0.5) * self.resolution])

    def in_bounds(self, pos) -> bool:
        row, col = self.world_to_cell(pos)
        return 0 <= row < self.height and 0 <= col < self.width

    def is_occupied(self, pos) -> bool:
        """Occupancy at a world position; out-of-bounds counts as occupied."""
        row, col = self.world_to_cell(pos)
        if not (0 <= row < self.height and 0 <= col < self.width):
            return True
        return bool(self.cells[row, col])

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.cells.copy(), self.resolution)


@dataclass
class SignedDistanceField:
    """Signed Euclidean distances to the nearest obstacle boundary.

    Positive in free space, negative inside obstacles; the bounded-world
    border counts as an obstacle.
    """

    values: np.ndarray  # float64, (height, width), meters
    resolution: float

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def sample(self, pts: np.ndarray):
        """Bilinear distance and gradient at (n, 2) world points."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        return sample_bilinear(self.values, pts, self.resolution)

    def distance(self, pos) -> float:
        vals, _ = self.sample(np.asarray(pos, dtype=np.float64))
        return float(vals[0])


def load_grid(image: np.ndarray, occupied_threshold: int = 128,
              resolution: float = 1.0) -> OccupancyGrid:
    """Build an occupancy grid from a grayscale byte image.

    A cell is occupied iff its pixel value is below ``occupied_threshold``.
    """
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise InputError("map image must be a non-empty 2D grayscale matrix")
    return OccupancyGrid(image < occupied_threshold, resolution)


def load_pgm(path, occupied_threshold: int = 128,
             resolution: float = 1.0) -> OccupancyGrid:
    """Load a binary (P5) or ASCII (P2) portable graymap."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    i = 0
    while len(tokens) < 4 and i < len(data):
        if data[i:i + 1] == b"#":  # comment to end of line
            while i < len(data) and data[i] not in b"\n":
                i += 1
        elif data[i] in b" \t\r\n":
            i += 1
        else:
            j = i
            while j < len(data) and data[j] not in b" \t\r\n#":
                j += 1
            tokens.append(data[i:j])
            i = j
    if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
        raise InputError(f"not a PGM file: {path}")
    width, height = int(tokens[1]), int(tokens[2])
    if tokens[0] == b"P5":
        raster = np.frombuffer(data[i + 1:i + 1 + width * height],
                               dtype=np.uint8)
    else:
        raster = np.array(data[i:].split(), dtype=np.uint16).astype(np.uint8)
    if raster.size != width * height:
        raise InputError(f"truncated PGM raster in {path}")
    image = raster.reshape(height, width)
    return load_grid(image, occupied_threshold, resolution)


def save_pgm(grid: OccupancyGrid, path) -> None:
    """Write the grid as a binary PGM (free = 255, occupied = 0)."""
    image = np.where(grid.cells, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def dilate_for_robot(grid: OccupancyGrid, robot: RobotType) -> OccupancyGrid:
    """Configuration-space inflation: occupied iff within ``radius`` of an
    occupied input cell (Euclidean, cell centers). The result is the robot
    type's feasible-location map."""
    half_extent = min(grid.width, grid.height) * grid.resolution / 2
    if robot.radius > half_extent:
        warnings.warn(
            f"robot radius {robot.radius} exceeds half the grid extent; "
            "feasible-location map is empty", stacklevel=2)
        return OccupancyGrid(np.ones_like(grid.cells), grid.resolution)
    if not grid.cells.any():
        return grid.copy()
    dist_cells = distance_transform_edt(~grid.cells)
    occupied = dist_cells * grid.resolution <= robot.radius + 1e-9
    return OccupancyGrid(occupied, grid.resolution)


def compute_sdf(grid: OccupancyGrid) -> SignedDistanceField:
    """Exact Euclidean SDF over cell centers, border treated as occupied."""
    occ = np.pad(grid.cells, 1, constant_values=True)
    d_out = distance_transform_edt(~occ)
    d_in = distance_transform_edt(occ)
    values = (d_out - d_in)[1:-1, 1:-1] * grid.resolution
    return SignedDistanceField(values, grid.resolution)

"""Heightmap terrains: procedural generation, obstacles, queries, local maps.

Terrains are uniform grids (default 0.1 m spacing) interpolated with
triangular elements so the surface is continuous.  Obstacles are embedded by
taking the pointwise max of ground and obstacle surface.  A terrain is
immutable once built; `embed` returns a new instance.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, OutOfBoundsError

# Local-map geometry: 30 x 20 samples on a 0.5 m grid covering 15 x 10 m
# in the vehicle frame (x forward), centered on the vehicle.
LOCAL_MAP_SHAPE = (30, 20)
LOCAL_MAP_SPACING = 0.5


@dataclass(frozen=True)
class Terrain:
    """Immutable uniform height grid.

    `grid` has shape (nrows, ncols); `grid[j, i]` is the height at
    ``(origin_x + i*cell_size, origin_y + j*cell_size)``.
    """

    cell_size: float
    origin: tuple[float, float]
    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 2:
            raise InvalidParameterError("terrain grid must be 2-D")
        if not np.all(np.isfinite(grid)):
            raise InvalidParameterError("terrain heights must be finite")
        if self.cell_size <= 0:
            raise InvalidParameterError("cell_size must be positive")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)

    @property
    def nrows(self) -> int:
        return self.grid.shape[0]

    @property
    def ncols(self) -> int:
        return self.grid.shape[1]

    @property
    def heights(self) -> np.ndarray:
        """Row-major flat view: heights[j*ncols + i]."""
        return self.grid.reshape(-1)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the queryable area."""
        x0, y0 = self.origin
        return (x0, y0,
                x0 + (self.ncols - 1) * self.cell_size,
                y0 + (self.nrows - 1) * self.cell_size)

    def save(self, path: str | Path) -> None:
        write_grid(self, path)


@dataclass(frozen=True)
class ObstacleSpec:
    """One embedded obstacle.

    kind / dims:
      - ``semi_ellipsoid``: dims = (half_axis_x, half_axis_y, height)
      - ``ramp``: dims = (rise_length, top_length, width, height);
        rises linearly, holds flat, then ends in a drop.
      - ``vibration_bar``: dims = (length_across, width_along, height);
        trapezoid profile with 45-degree shoulders.
    Local +x is the travel direction after rotating by ``yaw``.
    """

    kind: str
    center: tuple[float, float]
    dims: tuple[float, ...]
    yaw: float = 0.0

    KINDS = ("semi_ellipsoid", "ramp", "vibration_bar")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidParameterError(f"unknown obstacle kind {self.kind!r}")
        n_expected = {"semi_ellipsoid": 3, "ramp": 4, "vibration_bar": 3}[self.kind]
        if len(self.dims) != n_expected:
            raise InvalidParameterError(
                f"{self.kind} expects {n_expected} dims, got {len(self.dims)}")
        if any(d <= 0 for d in self.dims):
            raise InvalidParameterError(f"{self.kind} dims must be positive")

    def footprint_radius(self) -> float:
        if self.kind == "semi_ellipsoid":
            return math.hypot(self.dims[0], self.dims[1])
        if self.kind == "ramp":
            rise, top, width, _ = self.dims
            return math.hypot((rise + top) / 2.0, width / 2.0)
        length, width, _ = self.dims
        return math.hypot(length / 2.0, width / 2.0)

    def surface(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Obstacle height above its base at local planar coords (u, v)."""
        if self.kind == "semi_ellipsoid":
            ax, ay, h = self.dims
            r2 = (u / ax) ** 2 + (v / ay) ** 2
            return h * np.sqrt(np.clip(1.0 - r2, 0.0, None))
        if self.kind == "ramp":
            rise, top, width, h = self.dims
            total = rise + top
            # local u in [-total/2, total/2): rise then flat; drop at the end
            s = u + total / 2.0
            prof = np.clip(s / rise, 0.0, 1.0)
            prof = np.where((s < 0) | (s > total), 0.0, prof)
            inside = np.abs(v) <= width / 2.0
            return h * prof * inside
        length, width, h = self.dims
        bevel = min(0.15, width / 4.0)
        s = (width / 2.0 - np.abs(u)) / bevel
        prof = np.clip(s, 0.0, 1.0)
        inside = np.abs(v) <= length / 2.0
        return h * prof * inside

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center),
                "dims": list(self.dims), "yaw": self.yaw}

    @classmethod
    def from_dict(cls, d: dict) -> "ObstacleSpec":
        return cls(kind=d["kind"], center=tuple(d["center"]),
                   dims=tuple(d["dims"]), yaw=float(d.get("yaw", 0.0)))


@dataclass(frozen=True)
class LocalMap:
    """Vehicle-frame exteroceptive height grid, values scaled to [0, 1]."""

    values: np.ndarray             # shape (30, 20)
    frame: tuple[float, float, float, float]  # (x, y, yaw, ref_height)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != LOCAL_MAP_SHAPE:
            raise InvalidParameterError(
                f"local map must be {LOCAL_MAP_SHAPE}, got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


# ---------------------------------------------------------------------------
# Perlin-noise generation

def _perlin_grid(perm: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Classic 2-D gradient noise over a meshgrid of sample coords."""
    xi = np.floor(xs).astype(np.int64)
    yi = np.floor(ys).astype(np.int64)
    xf = xs - xi
    yf = ys - yi
    xi &= 255
    yi &= 255

    def grad(h, gx, gy):
        # 8 gradient directions from the low bits of the hash
        ang = (h & 7) * (math.pi / 4.0)
        return np.cos(ang) * gx + np.sin(ang) * gy

    h00 = perm[perm[xi] + yi]
    h10 = perm[perm[xi + 1] + yi]
    h01 = perm[perm[xi] + yi + 1]
    h11 = perm[perm[xi + 1] + yi + 1]

    n00 = grad(h00, xf, yf)
    n10 = grad(h10, xf - 1.0, yf)
    n01 = grad(h01, xf, yf - 1.0)
    n11 = grad(h11, xf - 1.0, yf - 1.0)

    u = xf * xf * xf * (xf * (xf * 6.0 - 15.0) + 10.0)
    v = yf * yf * yf * (yf * (yf * 6.0 - 15.0) + 10.0)
    nx0 = n00 + u * (n10 - n00)
    nx1 = n01 + u * (n11 - n01)
    return nx0 + v * (nx1 - nx0)


def generate(seed: int, extent: float, amplitude: float, octaves: int = 4,
             roughness: float = 0.5, cell_size: float = 0.1,
             base_wavelength: float = 16.0) -> Terrain:
    """Generate a square fractal-noise terrain centered on the origin.

    Deterministic for a fixed (seed, params) tuple.  Heights are re-centered
    so the grid mean is zero.
    """
    if extent <= 0 or extent < 40.0:
        raise InvalidParameterError("extent must be at least 40 m per side")
    if amplitude < 0:
        raise InvalidParameterError("amplitude must be non-negative")
    if octaves < 1:
        raise InvalidParameterError("octaves must be >= 1")
    if cell_size <= 0:
        raise InvalidParameterError("cell_size must be positive")

    n = int(round(extent / cell_size)) + 1
    origin = (-extent / 2.0, -extent / 2.0)
    if amplitude == 0.0:
        return Terrain(cell_size, origin, np.zeros((n, n)))

    rng = np.random.Generator(np.random.PCG64(seed))
    perm = rng.permutation(256)
    perm = np.concatenate([perm, perm, perm[:2]])

    coords = np.arange(n) * cell_size
    xg, yg = np.meshgrid(coords, coords)  # xg varies along columns
    total = np.zeros((n, n))
    amp_sum = 0.0
    amp = 1.0
    freq = 1.0 / base_wavelength
    for octave in range(octaves):
        # offset each octave so features do not align at the origin
        ox = 37.13 * (octave + 1)
        oy = 91.71 * (octave + 1)
        total += amp * _perlin_grid(perm, xg * freq + ox, yg * freq + oy)
        amp_sum += amp
        amp *= roughness
        freq *= 2.0
    total *= amplitude / amp_sum
    total -= total.mean()
    return Terrain(cell_size, origin, total)


def embed(terrain: Terrain, obstacles: list[ObstacleSpec]) -> Terrain:
    """Return a new terrain with obstacles merged in via pointwise max.

    Each obstacle sits on the ground height at its center; heights outside
    its footprint are unchanged.
    """
    xmin, ymin, xmax, ymax = terrain.bounds
    grid = terrain.grid.copy()
    cell = terrain.cell_size
    x0, y0 = terrain.origin
    for idx, obs in enumerate(obstacles):
        r = obs.footprint_radius()
        cx, cy = obs.center
        if (cx - r < xmin or cx + r > xmax or cy - r < ymin or cy + r > ymax):
            raise OutOfBoundsError(
                f"obstacle {idx} ({obs.kind}) footprint leaves the terrain")
        # ground the obstacle on its footprint rim; rim heights are outside
        # the support so embedding stays idempotent
        ring = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
        base = float(np.min(height_at_many(
            terrain, cx + r * np.cos(ring), cy + r * np.sin(ring))))
        i0 = max(int((cx - r - x0) / cell), 0)
        i1 = min(int((cx + r - x0) / cell) + 2, terrain.ncols)
        j0 = max(int((cy - r - y0) / cell), 0)
        j1 = min(int((cy + r - y0) / cell) + 2, terrain.nrows)
        xs = x0 + np.arange(i0, i1) * cell
        ys = y0 + np.arange(j0, j1) * cell
        xg, yg = np.meshgrid(xs, ys)
        c, s = math.cos(obs.yaw), math.sin(obs.yaw)
        u = c * (xg - cx) + s * (yg - cy)
        v = -s * (xg - cx) + c * (yg - cy)
        surf = obs.surface(u, v)
        patch = grid[j0:j1, i0:i1]
        np.maximum(patch, np.where(surf > 0.0, base + surf, -np.inf), out=patch)
    return Terrain(terrain.cell_size, terrain.origin, grid)


# ---------------------------------------------------------------------------
# Queries

def height_at(terrain: Terrain, x: float, y: float) -> float:
    """Surface height via triangle interpolation.

    Cells split along the lower-left to upper-right diagonal; exact at grid
    nodes, linear along triangle edges.  Raises OutOfBoundsError outside the
    grid (no extrapolation).
    """
    h = height_at_many(terrain, np.asarray([x]), np.asarray([y]), clamp=False)
    return float(h[0])


def height_at_many(terrain: Terrain, xs: np.ndarray, ys: np.ndarray,
                   clamp: bool = False) -> np.ndarray:
    """Vectorized `height_at`; `clamp=True` snaps queries to the nearest edge."""
    x0, y0 = terrain.origin
    cell = terrain.cell_size
    fx = (np.asarray(xs, dtype=np.float64) - x0) / cell
    fy = (np.asarray(ys, dtype=np.float64) - y0) / cell
    if clamp:
        fx = np.clip(fx, 0.0, terrain.ncols - 1 - 1e-12)
        fy = np.clip(fy, 0.0, terrain.nrows - 1 - 1e-12)
    elif np.any(fx < 0) or np.any(fy < 0) or \
            np.any(fx > terrain.ncols - 1) or np.any(fy > terrain.nrows - 1):
        raise OutOfBoundsError("height query outside terrain bounds")
    i = np.minimum(fx.astype(np.int64), terrain.ncols - 2)
    j = np.minimum(fy.astype(np.int64), terrain.nrows - 2)
    u = fx - i
    v = fy - j
    g = terrain.grid
    h_ll = g[j, i]
    h_lr = g[j, i + 1]
    h_ul = g[j + 1, i]
    h_ur = g[j + 1, i + 1]
    lower = u >= v  # triangle below the LL->UR diagonal
    h_low = h_ll + u * (h_lr - h_ll) + v * (h_ur - h_lr)
    h_up = h_ll + u * (h_ur - h_ul) + v * (h_ul - h_ll)
    return np.where(lower, h_low, h_up)


def extract_local_map(terrain: Terrain, pose: tuple[float, float, float, float],
                      noise_std: float = 0.0,
                      rng: np.random.Generator | None = None) -> LocalMap:
    """Sample the 30x20 vehicle-frame height grid.

    ``pose`` is (x, y, yaw, reference_height).  Heights are taken relative to
    the reference, Gaussian noise of the given std (metres) added per cell,
    then mapped affinely from [-2.5, +2.5] m to [0, 1] and clipped.  Samples
    outside the terrain take the nearest edge value.
    """
    x, y, yaw, ref = pose
    n_fwd, n_lat = LOCAL_MAP_SHAPE
    fwd = (np.arange(n_fwd) - (n_fwd - 1) / 2.0) * LOCAL_MAP_SPACING
    lat = (np.arange(n_lat) - (n_lat - 1) / 2.0) * LOCAL_MAP_SPACING
    fg, lg = np.meshgrid(fwd, lat, indexing="ij")
    c, s = math.cos(yaw), math.sin(yaw)
    xs = x + c * fg - s * lg
    ys = y + s * fg + c * lg
    heights = height_at_many(terrain, xs.ravel(), ys.ravel(), clamp=True)
    rel = heights.reshape(LOCAL_MAP_SHAPE) - ref
    if noise_std > 0.0:
        if rng is None:
            raise InvalidParameterError("rng required when noise_std > 0")
        rel = rel + rng.normal(0.0, noise_std, size=LOCAL_MAP_SHAPE)
    half = 2.5
    values = np.clip(0.5 + rel / (2.0 * half), 0.0, 1.0)
    return LocalMap(values, (x, y, yaw, ref))


# ---------------------------------------------------------------------------
# Text grid format

def write_grid(terrain: Terrain, path: str | Path) -> None:
    """ESRI-ASCII style text grid: header then row-major floats (row 0 first)."""
    buf = io.StringIO()
    buf.write(f"ncols {terrain.ncols}\n")
    buf.write(f"nrows {terrain.nrows}\n")
    buf.write(f"xllcorner {terrain.origin[0]!r}\n")
    buf.write(f"yllcorner {terrain.origin[1]!r}\n")
    buf.write(f"cellsize {terrain.cell_size!r}\n")
    for j in range(terrain.nrows):
        buf.write(" ".join(repr(float(v)) for v in terrain.grid[j]) + "\n")
    Path(path).write_text(buf.getvalue())


def read_grid(path: str | Path, cell_size: float | None = None) -> Terrain:
    """Load a text grid; optionally resample to a different cell size."""
    lines = Path(path).read_text().splitlines()
    header: dict[str, float] = {}
    row_start = 0
    for k, line in enumerate(lines):
        parts = line.split()
        if len(parts) == 2 and parts[0] in (
                "ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
            header[parts[0]] = float(parts[1])
            row_start = k + 1
        else:
            break
    missing = {"ncols", "nrows", "xllcorner", "yllcorner", "cellsize"} - set(header)
    if missing:
        raise InvalidParameterError(f"grid file missing header keys: {sorted(missing)}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    values = np.array(
        [float(tok) for line in lines[row_start:] for tok in line.split()])
    if values.size != ncols * nrows:
        raise InvalidParameterError(
            f"grid file has {values.size} values, expected {ncols * nrows}")
    terrain = Terrain(header["cellsize"], (header["xllcorner"], header["yllcorner"]),
                      values.reshape(nrows, ncols))
    if cell_size is not None and abs(cell_size - terrain.cell_size) > 1e-12:
        terrain = resample(terrain, cell_size)
    return terrain


def resample(terrain: Terrain, cell_size: float) -> Terrain:
    """Resample onto a new uniform grid with the same extent."""
    if cell_size <= 0:
        raise InvalidParameterError("cell_size must be positive")
    xmin, ymin, xmax, ymax = terrain.bounds
    ncols = int(math.floor((xmax - xmin) / cell_size)) + 1
    nrows = int(math.floor((ymax - ymin) / cell_size)) + 1
    xs = xmin + np.arange(ncols) * cell_size
    ys = ymin + np.arange(nrows) * cell_size
    xg, yg = np.meshgrid(xs, ys)
    grid = height_at_many(terrain, xg.ravel(), yg.ravel(), clamp=True)
    return Terrain(cell_size, (xmin, ymin), grid.reshape(nrows, ncols))


def flat(extent: float = 60.0, cell_size: float = 0.1) -> Terrain:
    """All-zero terrain centered on the origin (test and scenario helper)."""
    n = int(round(extent / cell_size)) + 1
    return Terrain(cell_size, (-extent / 2.0, -extent / 2.0), np.zeros((n, n)))

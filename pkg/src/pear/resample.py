"""Equiangular lat-lon grids and resampling to and from the sphere grid.

The lat-lon convention is rows of constant latitude running from +90 to
-90 degrees inclusive, columns of constant longitude covering [0, 360).
Interpolation onto pixel centers is bilinear with longitude wraparound;
the reverse direction is nearest-pixel lookup, adequate for rasters.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, Scheme, coord_to_pixel, pixel_center, ring2nest_table


@dataclass
class LatLonGrid:
    """values has shape (n_lat, n_lon, channels)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 3:
            raise ValueError(f"values must be (n_lat, n_lon, C), got {self.values.shape}")
        if self.n_lat < 2 or self.n_lon < 1:
            raise ValueError("grid needs at least 2 latitude rows and 1 longitude column")

    @property
    def n_lat(self) -> int:
        return self.values.shape[0]

    @property
    def n_lon(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[2]

    def latitudes(self) -> np.ndarray:
        return np.linspace(90.0, -90.0, self.n_lat)

    def longitudes(self) -> np.ndarray:
        return np.arange(self.n_lon) * (360.0 / self.n_lon)


def _mean_pixel_spacing_deg(spec: GridSpec) -> float:
    return math.degrees(math.sqrt(spec.pixel_area))


def latlon_to_hpx(grid: LatLonGrid, spec: GridSpec) -> np.ndarray:
    """Bilinear sample at every pixel center, nested ordering, (n_pix, C)."""
    src_spacing = 180.0 / (grid.n_lat - 1)
    if src_spacing > _mean_pixel_spacing_deg(spec):
        warnings.warn(
            f"source grid ({grid.n_lat}x{grid.n_lon}) is coarser than "
            f"n_side={spec.n_side}; interpolation will smooth",
            stacklevel=2,
        )
    nan_count = int(np.isnan(grid.values).sum())
    if nan_count:
        warnings.warn(f"{nan_count} NaN source values propagate into the output",
                      stacklevel=2)

    theta, phi = pixel_center(spec, np.arange(spec.n_pix), Scheme.NESTED)
    # row coordinate grows southward like colatitude does
    r = np.degrees(theta) / src_spacing
    i0 = np.clip(np.floor(r).astype(np.int64), 0, grid.n_lat - 2)
    wr = (r - i0)[:, None]

    c = np.degrees(phi) / (360.0 / grid.n_lon)
    j0 = np.floor(c).astype(np.int64) % grid.n_lon
    wc = (c - np.floor(c))[:, None]
    j1 = (j0 + 1) % grid.n_lon

    v = grid.values
    top = (1.0 - wc) * v[i0, j0] + wc * v[i0, j1]
    bot = (1.0 - wc) * v[i0 + 1, j0] + wc * v[i0 + 1, j1]
    return ((1.0 - wr) * top + wr * bot).astype(np.float32)


def hpx_to_latlon(field: np.ndarray, spec: GridSpec, n_lat: int, n_lon: int) -> LatLonGrid:
    """Nearest-pixel raster of a nested-ordered field, visualization grade."""
    field = np.asarray(field)
    if field.ndim == 1:
        field = field[:, None]
    if field.shape[0] != spec.n_pix:
        raise ValueError(f"field has {field.shape[0]} pixels, grid wants {spec.n_pix}")
    lat = np.linspace(90.0, -90.0, n_lat)
    lon = np.arange(n_lon) * (360.0 / n_lon)
    theta = np.radians(90.0 - lat)[:, None] + np.zeros((1, n_lon))
    phi = np.radians(lon)[None, :] + np.zeros((n_lat, 1))
    ring = coord_to_pixel(spec, theta.ravel(), phi.ravel())
    nest = ring2nest_table(spec)[ring]
    return LatLonGrid(field[nest].reshape(n_lat, n_lon, field.shape[1]))


def write_pgm(path, image: np.ndarray) -> None:
    """Greyscale raster, rescaled to 0..255, plain-text PGM."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM export needs a single-channel 2-D image")
    lo, hi = float(np.nanmin(img)), float(np.nanmax(img))
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pixels = np.nan_to_num((img - lo) * scale).round().astype(np.int64)
    with open(path, "w") as f:
        f.write(f"P2\n{img.shape[1]} {img.shape[0]}\n255\n")
        for row in pixels:
            f.write(" ".join(str(p) for p in row) + "\n")


def write_grid_csv(path, grid: LatLonGrid, names=None) -> None:
    """Long-format raster: one row per node, lat, lon, then channel columns."""
    names = list(names) if names else [f"c{i}" for i in range(grid.n_channels)]
    if len(names) != grid.n_channels:
        raise ValueError("one column name per channel required")
    lats, lons = grid.latitudes(), grid.longitudes()
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["lat", "lon", *names])
        for i, lat in enumerate(lats):
            for j, lon in enumerate(lons):
                writer.writerow(
                    [f"{lat:.4f}", f"{lon:.4f}",
                     *(repr(float(x)) for x in grid.values[i, j])]
                )

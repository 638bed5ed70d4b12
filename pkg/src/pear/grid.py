"""Equal-area spherical grid: index schemes, centers, hierarchy.

The sphere is tiled by 12 base quadrilaterals, each subdivided into
n_side x n_side pixels of identical area 4*pi / (12 * n_side**2).  Faces
0-3 surround the north pole, 4-7 the equator, 8-11 the south pole.

Two index schemes cover the same pixels:

* nested: pixel = face * n_side**2 + interleave(x, y), with x on even and
  y on odd bits.  Blocks of 4**m consecutive indices form one coarser cell
  m division levels up, which makes coarse-graining and window tiling a
  pure reshape.
* ring: pixels sorted along iso-latitude rings from north to south, and by
  azimuth within a ring.  Northern cap ring i (1 <= i < n_side) holds 4*i
  pixels at z = 1 - i**2 / (3 n**2); equatorial-belt rings
  (n_side <= i <= 3 n_side) hold 4*n_side pixels at z = 4/3 - 2i/(3n);
  the southern cap mirrors the northern one.  A cyclic roll of the ring
  list rotates features about the polar axis.

All index arithmetic is 64-bit.  Functions accept scalars or integer
arrays and return the matching kind.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import NamedTuple

import numpy as np

# vertical ring coordinate of each face's center, in units of n_side
_FACE_ROW = np.array([2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4], dtype=np.int64)
# azimuthal coordinate of each face's center, in units of pi/4
_FACE_COL = np.array([1, 3, 5, 7, 0, 2, 4, 6, 1, 3, 5, 7], dtype=np.int64)


class Scheme(Enum):
    NESTED = "nested"
    RING = "ring"


class SphereCoord(NamedTuple):
    colat: float
    azimuth: float


@dataclass(frozen=True)
class GridSpec:
    """Resolution descriptor: n_side = 2**k, n_pix = 12 * n_side**2."""

    k: int
    n_side: int
    n_pix: int
    pixel_area: float

    @classmethod
    def from_k(cls, k: int) -> "GridSpec":
        if k < 0:
            raise ValueError(f"division level must be >= 0, got {k}")
        n_side = 1 << k
        n_pix = 12 * n_side * n_side
        return cls(k=k, n_side=n_side, n_pix=n_pix, pixel_area=4.0 * math.pi / n_pix)

    @classmethod
    def from_nside(cls, n_side: int) -> "GridSpec":
        if n_side < 1 or n_side & (n_side - 1):
            raise ValueError(f"n_side must be a power of two, got {n_side}")
        return cls.from_k(n_side.bit_length() - 1)

    def __post_init__(self):
        if self.n_side != 1 << self.k or self.n_pix != 12 * self.n_side**2:
            raise ValueError("inconsistent grid spec; use from_k/from_nside")


def _as_index(spec: GridSpec, p) -> tuple[np.ndarray, bool]:
    arr = np.asarray(p, dtype=np.int64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if arr.size and (arr.min() < 0 or arr.max() >= spec.n_pix):
        raise ValueError(
            f"pixel index out of range [0, {spec.n_pix}) for n_side={spec.n_side}"
        )
    return arr, scalar


def _ret(values: np.ndarray, scalar: bool):
    return int(values[0]) if scalar else values


_M1 = np.int64(0x5555555555555555)
_M2 = np.int64(0x3333333333333333)
_M4 = np.int64(0x0F0F0F0F0F0F0F0F)
_M8 = np.int64(0x00FF00FF00FF00FF)
_M16 = np.int64(0x0000FFFF0000FFFF)


def _spread_bits(v: np.ndarray) -> np.ndarray:
    v = v & np.int64(0xFFFFFFFF)
    v = (v | (v << 16)) & _M16
    v = (v | (v << 8)) & _M8
    v = (v | (v << 4)) & _M4
    v = (v | (v << 2)) & _M2
    v = (v | (v << 1)) & _M1
    return v


def _compress_bits(v: np.ndarray) -> np.ndarray:
    v = v & _M1
    v = (v | (v >> 1)) & _M2
    v = (v | (v >> 2)) & _M4
    v = (v | (v >> 4)) & _M8
    v = (v | (v >> 8)) & _M16
    v = (v | (v >> 16)) & np.int64(0xFFFFFFFF)
    return v


def _nest_to_fxy(spec: GridSpec, p: np.ndarray):
    face, rest = np.divmod(p, spec.n_side * spec.n_side)
    return face, _compress_bits(rest), _compress_bits(rest >> 1)


def _fxy_to_nest(spec: GridSpec, face, x, y) -> np.ndarray:
    return face * (spec.n_side * spec.n_side) + _spread_bits(x) + (_spread_bits(y) << 1)


def _isqrt(v: np.ndarray) -> np.ndarray:
    s = np.sqrt(v.astype(np.float64)).astype(np.int64)
    s = np.where((s + 1) * (s + 1) <= v, s + 1, s)
    return np.where(s * s > v, s - 1, s)


def _ring_decompose(spec: GridSpec, r: np.ndarray):
    """Split ring indices into (ring number i, index-in-ring j, ring size)."""
    n = spec.n_side
    ncap = 2 * n * (n - 1)
    i = np.empty_like(r)
    j = np.empty_like(r)
    size = np.empty_like(r)

    north = r < ncap
    rn = r[north]
    i_n = (1 + _isqrt(1 + 2 * rn)) >> 1
    i[north] = i_n
    j[north] = rn - 2 * i_n * (i_n - 1)
    size[north] = 4 * i_n

    south = r >= spec.n_pix - ncap
    rs = spec.n_pix - 1 - r[south]
    i_s = (1 + _isqrt(1 + 2 * rs)) >> 1
    i[south] = 4 * n - i_s
    j[south] = 4 * i_s - 1 - (rs - 2 * i_s * (i_s - 1))
    size[south] = 4 * i_s

    belt = ~north & ~south
    q = r[belt] - ncap
    i[belt] = q // (4 * n) + n
    j[belt] = q % (4 * n)
    size[belt] = 4 * n
    return i, j, size


def nest2ring(spec: GridSpec, p):
    """Convert nested pixel indices to ring indices."""
    arr, scalar = _as_index(spec, p)
    n = spec.n_side
    face, x, y = _nest_to_fxy(spec, arr)
    jr = _FACE_ROW[face] * n - x - y - 1  # ring number, 1..4n-1

    nr = np.full_like(jr, n)
    kshift = np.zeros_like(jr)
    n_before = np.empty_like(jr)

    north = jr < n
    nr[north] = jr[north]
    n_before[north] = 2 * jr[north] * (jr[north] - 1)

    south = jr > 3 * n
    nr[south] = 4 * n - jr[south]
    n_before[south] = spec.n_pix - 2 * (nr[south] + 1) * nr[south]

    belt = ~north & ~south
    kshift[belt] = (jr[belt] - n) & 1
    n_before[belt] = 2 * n * (n - 1) + (jr[belt] - n) * 4 * n

    jp = (_FACE_COL[face] * nr + x - y + 1 + kshift) >> 1
    jp = np.where(jp > 4 * n, jp - 4 * n, jp)
    jp = np.where(jp < 1, jp + 4 * n, jp)
    return _ret(n_before + jp - 1, scalar)


def ring2nest(spec: GridSpec, p):
    """Convert ring pixel indices to nested indices."""
    arr, scalar = _as_index(spec, p)
    n = spec.n_side
    ncap = 2 * n * (n - 1)
    i, j, _ = _ring_decompose(spec, arr)
    iphi = j + 1

    north = arr < ncap
    south = arr >= spec.n_pix - ncap
    belt = ~north & ~south

    nr = np.full_like(arr, n)
    kshift = np.zeros_like(arr)
    face = np.empty_like(arr)

    nr[north] = i[north]
    face[north] = j[north] // i[north]

    i_s = 4 * n - i[south]
    nr[south] = i_s
    face[south] = 8 + j[south] // i_s

    kshift[belt] = (i[belt] + n) & 1
    ire = i[belt] - n + 1
    irm = 2 * n + 2 - ire
    ifm = (iphi[belt] - ire // 2 + n - 1) // n
    ifp = (iphi[belt] - irm // 2 + n - 1) // n
    face[belt] = np.where(ifp == ifm, ifp | 4, np.where(ifp < ifm, ifp, ifm + 8))

    irt = i - _FACE_ROW[face] * n + 1
    ipt = 2 * iphi - _FACE_COL[face] * nr - kshift - 1
    ipt = np.where(ipt >= 2 * n, ipt - 8 * n, ipt)
    x = (ipt - irt) >> 1
    y = (-ipt - irt) >> 1
    return _ret(_fxy_to_nest(spec, face, x, y), scalar)


@lru_cache(maxsize=32)
def _tables(n_side: int):
    spec = GridSpec.from_nside(n_side)
    all_pix = np.arange(spec.n_pix, dtype=np.int64)
    n2r = nest2ring(spec, all_pix)
    r2n = np.empty_like(n2r)
    r2n[n2r] = all_pix
    n2r.setflags(write=False)
    r2n.setflags(write=False)
    return n2r, r2n


def nest2ring_table(spec: GridSpec) -> np.ndarray:
    """Cached permutation t with t[nested] = ring, built once per n_side."""
    return _tables(spec.n_side)[0]


def ring2nest_table(spec: GridSpec) -> np.ndarray:
    return _tables(spec.n_side)[1]


def pixel_center(spec: GridSpec, p, scheme: Scheme = Scheme.NESTED):
    """Center (colatitude, azimuth) of pixels in the given scheme."""
    arr, scalar = _as_index(spec, p)
    if scheme is Scheme.NESTED:
        arr = np.atleast_1d(np.asarray(nest2ring(spec, arr)))
    n = spec.n_side
    i, j, _ = _ring_decompose(spec, arr)

    z = np.empty(arr.shape, dtype=np.float64)
    phi = np.empty(arr.shape, dtype=np.float64)

    cap_n = i < n
    z[cap_n] = 1.0 - i[cap_n] ** 2 / (3.0 * n * n)
    phi[cap_n] = (j[cap_n] + 0.5) * (math.pi / 2.0) / i[cap_n]

    cap_s = i > 3 * n
    i_s = 4 * n - i[cap_s]
    z[cap_s] = -(1.0 - i_s**2 / (3.0 * n * n))
    phi[cap_s] = (j[cap_s] + 0.5) * (math.pi / 2.0) / i_s

    belt = ~cap_n & ~cap_s
    z[belt] = 4.0 / 3.0 - 2.0 * i[belt] / (3.0 * n)
    # rings where i+n is odd are offset by half a pixel spacing
    half = 0.5 * (1 - ((i[belt] + n) & 1))
    phi[belt] = (j[belt] + half) * (math.pi / 2.0) / n

    theta = np.arccos(np.clip(z, -1.0, 1.0))
    if scalar:
        return SphereCoord(float(theta[0]), float(phi[0]))
    return SphereCoord(theta, phi)


def coord_to_pixel(spec: GridSpec, colat, azimuth):
    """Ring index of the pixel containing each (colatitude, azimuth)."""
    theta = np.atleast_1d(np.asarray(colat, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(azimuth, dtype=np.float64))
    scalar = np.ndim(colat) == 0
    if np.any(~np.isfinite(theta)) or np.any(~np.isfinite(phi)):
        raise ValueError("coordinates must be finite")
    if np.any(theta < 0.0) or np.any(theta > math.pi):
        raise ValueError("colatitude must lie in [0, pi]")
    n = spec.n_side
    z = np.cos(theta)
    za = np.abs(z)
    tt = np.mod(phi, 2.0 * math.pi) * (2.0 / math.pi)  # in [0, 4)

    pix = np.empty(theta.shape, dtype=np.int64)

    belt = za <= 2.0 / 3.0
    temp1 = n * (0.5 + tt[belt])
    temp2 = n * z[belt] * 0.75
    jp = (temp1 - temp2).astype(np.int64)  # ascending edge line
    jm = (temp1 + temp2).astype(np.int64)  # descending edge line
    ir = n + 1 + jp - jm  # ring counted from z = 2/3, in 1..2n+1
    kshift = 1 - (ir & 1)
    ip = (jp + jm - n + kshift + 1) >> 1
    ip = np.mod(ip, 4 * n)
    pix[belt] = 2 * n * (n - 1) + (ir - 1) * 4 * n + ip

    caps = ~belt
    tp = tt[caps] - tt[caps].astype(np.int64)
    tmp = n * np.sqrt(3.0 * (1.0 - za[caps]))
    jp = (tp * tmp).astype(np.int64)
    jm = ((1.0 - tp) * tmp).astype(np.int64)
    ir = jp + jm + 1  # ring counted from the nearest pole
    ip = np.mod((tt[caps] * ir).astype(np.int64), 4 * ir)
    pix[caps] = np.where(
        z[caps] > 0,
        2 * ir * (ir - 1) + ip,
        spec.n_pix - 2 * ir * (ir + 1) + ip,
    )
    return _ret(pix, scalar)


def children(spec: GridSpec, p):
    """The four nested sub-pixels of p one division level finer."""
    arr, scalar = _as_index(spec, p)
    out = 4 * arr[..., None] + np.arange(4, dtype=np.int64)
    return out[0] if scalar else out


def parent(spec: GridSpec, p):
    """The nested pixel one division level coarser; needs k >= 1."""
    if spec.k == 0:
        raise ValueError("base resolution has no parent level")
    arr, scalar = _as_index(spec, p)
    return _ret(arr >> 2, scalar)


def ring_census(spec: GridSpec) -> np.ndarray:
    """Pixel count of every iso-latitude ring, north to south."""
    n = spec.n_side
    caps = 4 * np.arange(1, n, dtype=np.int64)
    belt = np.full(2 * n + 1, 4 * n, dtype=np.int64)
    return np.concatenate([caps, belt, caps[::-1]])

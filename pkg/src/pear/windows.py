"""Window partitioning and cyclic shifting over (pixel, level) voxels.

Feature volumes live on the nested pixel ordering, shape (P, D, C) with
P pixels, D vertical slots, C channels.  Because nested indices group
every block of 4**m consecutive pixels into one coarser cell, a window of
w_hp pixels (w_hp a power of 4) times w_d levels is a contiguous slab and
window partitioning is a pure reshape.

Shifting alternates the window boundaries between attention layers: the
field is rolled along the ring ordering of the sphere (a rotation about
the polar axis that slides pixels across the poles) and cyclically along
the vertical axis.  Rolled-across-the-seam voxels must not attend to
their new neighbors, which build_masks encodes as additive logit masks
from two wrap flags per voxel.

All apply operations go through reshape/transpose/take only, so they work
on numpy arrays and on autodiff tensors exposing the same methods.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, nest2ring_table, ring2nest_table

MASK_NEG = -1e9


@dataclass(frozen=True)
class WindowLayout:
    """Precomputed partition and shift tables for one token resolution."""

    patch_spec: GridSpec
    depth: int
    w_hp: int
    w_d: int
    shift_hp: int
    shift_d: int
    n_windows: int
    perm_forward: np.ndarray = field(repr=False)
    perm_inverse: np.ndarray = field(repr=False)
    lvl_forward: np.ndarray = field(repr=False)
    lvl_inverse: np.ndarray = field(repr=False)

    @property
    def window_voxels(self) -> int:
        return self.w_hp * self.w_d


def _is_power_of_4(v: int) -> bool:
    return v > 0 and v & (v - 1) == 0 and (v.bit_length() - 1) % 2 == 0


def make_layout(
    patch_spec: GridSpec, depth: int, w_hp: int, w_d: int, shifted: bool = False
) -> WindowLayout:
    """Build a WindowLayout, clamping w_hp to what the grid can hold.

    The largest power of 4 dividing the pixel count 12 * n_side**2 is
    4**(k+1), so a requested w_hp above that is reduced to 4**(k+1) and
    the window then spans several base faces.  A shifted layout rolls by
    half the window extent in both directions.
    """
    if not _is_power_of_4(w_hp):
        raise ValueError(f"w_hp must be a power of 4, got {w_hp}")
    if w_d < 1 or depth % w_d:
        raise ValueError(f"w_d={w_d} must divide depth={depth}")
    w_hp = min(w_hp, 4 ** (patch_spec.k + 1))
    assert patch_spec.n_pix % w_hp == 0

    shift_hp = w_hp // 2 if shifted else 0
    shift_d = w_d // 2 if shifted else 0

    n2r = nest2ring_table(patch_spec)
    r2n = ring2nest_table(patch_spec)
    perm_forward = r2n[(n2r + shift_hp) % patch_spec.n_pix]
    perm_inverse = r2n[(n2r - shift_hp) % patch_spec.n_pix]
    lvl_forward = (np.arange(depth) + shift_d) % depth
    lvl_inverse = (np.arange(depth) - shift_d) % depth

    return WindowLayout(
        patch_spec=patch_spec,
        depth=depth,
        w_hp=w_hp,
        w_d=w_d,
        shift_hp=shift_hp,
        shift_d=shift_d,
        n_windows=(patch_spec.n_pix // w_hp) * (depth // w_d),
        perm_forward=perm_forward,
        perm_inverse=perm_inverse,
        lvl_forward=lvl_forward,
        lvl_inverse=lvl_inverse,
    )


def _check_voxel_shape(x, layout: WindowLayout):
    if x.ndim != 3 or x.shape[0] != layout.patch_spec.n_pix or x.shape[1] != layout.depth:
        raise ValueError(
            f"expected voxel tensor ({layout.patch_spec.n_pix}, {layout.depth}, C), "
            f"got {tuple(x.shape)}"
        )


def partition(x, layout: WindowLayout):
    """(P, D, C) -> (n_windows, w_hp*w_d, C), windows as contiguous slabs."""
    _check_voxel_shape(x, layout)
    n_wh = layout.patch_spec.n_pix // layout.w_hp
    n_wd = layout.depth // layout.w_d
    c = x.shape[2]
    x = x.reshape(n_wh, layout.w_hp, n_wd, layout.w_d, c)
    x = x.transpose(0, 2, 1, 3, 4)
    return x.reshape(layout.n_windows, layout.window_voxels, c)


def merge(x, layout: WindowLayout):
    """Inverse of partition: (n_windows, w_hp*w_d, C) -> (P, D, C)."""
    if x.ndim != 3 or x.shape[0] != layout.n_windows or x.shape[1] != layout.window_voxels:
        raise ValueError(
            f"expected windowed tensor ({layout.n_windows}, {layout.window_voxels}, C), "
            f"got {tuple(x.shape)}"
        )
    n_wh = layout.patch_spec.n_pix // layout.w_hp
    n_wd = layout.depth // layout.w_d
    c = x.shape[2]
    x = x.reshape(n_wh, n_wd, layout.w_hp, layout.w_d, c)
    x = x.transpose(0, 2, 1, 3, 4)
    return x.reshape(layout.patch_spec.n_pix, layout.depth, c)


def roll_ring(x, spec: GridSpec, s: int):
    """Cyclic roll by s along the ring ordering, applied in nested layout.

    A feature at ring position r moves to (r + s) mod P, which rotates
    the field about the polar axis ring by ring.
    """
    idx = ring2nest_table(spec)[(nest2ring_table(spec) - s) % spec.n_pix]
    return x.take(idx, axis=0)


def shift(x, layout: WindowLayout):
    """Roll by (-shift_hp, -shift_d) so window boundaries cut new seams."""
    return x.take(layout.perm_forward, axis=0).take(layout.lvl_forward, axis=1)


def unshift(x, layout: WindowLayout):
    return x.take(layout.perm_inverse, axis=0).take(layout.lvl_inverse, axis=1)


def build_masks(layout: WindowLayout) -> np.ndarray:
    """Additive attention masks, shape (n_windows, w_hp*w_d, w_hp*w_d).

    After shifting, a voxel either stayed put or wrapped across the polar
    seam, and likewise across the vertical seam.  The two flags split each
    window into up to 4 regions; attention across regions gets MASK_NEG
    added to its logit, attention within a region 0.
    """
    n2r = nest2ring_table(layout.patch_spec)
    wrap_pole = n2r >= layout.patch_spec.n_pix - layout.shift_hp
    wrap_vert = np.arange(layout.depth) >= layout.depth - layout.shift_d
    region = (2 * wrap_pole[:, None] + wrap_vert[None, :]).astype(np.int64)
    regions = partition(region[:, :, None], layout)[:, :, 0]
    masks = np.where(
        regions[:, :, None] == regions[:, None, :], 0.0, MASK_NEG
    ).astype(np.float32)
    assert np.all(masks.max(axis=2) == 0.0), "window with a fully masked row"
    return masks

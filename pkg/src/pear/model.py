"""The forecasting network: patch embed, three attention stages, recover.

Data flow for one 24 h step, shapes at n_side=64:

    surface (49152, 4), upper (49152, 13, 5)
      -> patch_embed                      (3072, 8, 48)
      -> stage 1: 2 windowed blocks       (3072, 8, 48)   [skip saved]
      -> downsample (4 siblings -> 1)     (768, 8, 96)
      -> stage 2: 12 windowed blocks      (768, 8, 96)
      -> upsample (1 -> 4 siblings)       (3072, 8, 48)
      -> stage 3: 2 windowed blocks       (3072, 8, 48)
      -> concat with skip                 (3072, 8, 96)
      -> patch_recover                    surface + upper shapes as input

Blocks are post-norm: x + LN(attn(x)), then x + LN(mlp(x)).  Every
odd-indexed block inside a stage shifts the windows by half their extent
along the ring ordering and the vertical, and masks attention across the
wrap seams.  Each block owns a positional bias table shared across
windows.  The vertical axis is padded 13 -> 14 levels before embedding
(topmost level replicated) and cropped back after recovery.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfinv

from . import autodiff as ad
from .autodiff import Tensor
from .grid import GridSpec
from .state import VolumetricState
from .windows import WindowLayout, build_masks, make_layout, merge, partition, shift, unshift


def _is_power_of_4(v: int) -> bool:
    return v > 0 and v & (v - 1) == 0 and (v.bit_length() - 1) % 2 == 0


@dataclass(frozen=True)
class ModelConfig:
    n_side: int
    embed_dim: int = 48
    bottleneck_dim: int = 96
    depths: tuple = (2, 12, 2)
    heads: tuple = (6, 12, 6)
    w_hp: int = 64
    w_d: int = 2
    patch_hp: int = 16
    patch_d: int = 2
    surface_channels: int = 4
    upper_channels: int = 5
    upper_levels: int = 13
    use_shift: bool = True

    def __post_init__(self):
        if not _is_power_of_4(self.patch_hp) or self.patch_hp < 4:
            raise ValueError(f"patch_hp must be a power of 4 >= 4, got {self.patch_hp}")
        if not _is_power_of_4(self.w_hp):
            raise ValueError(f"w_hp must be a power of 4, got {self.w_hp}")
        if any(d % 2 for d in self.depths):
            raise ValueError(f"stage depths must be even, got {self.depths}")
        if len(self.depths) != 3 or len(self.heads) != 3:
            raise ValueError("expected exactly three stages")
        side_factor = 1 << (self.patch_hp.bit_length() // 2)
        if self.n_side % (2 * side_factor):
            raise ValueError(
                f"n_side={self.n_side} too small to patch by {self.patch_hp} pixels "
                "and downsample once"
            )
        if self.embed_dim % self.heads[0] or self.bottleneck_dim % self.heads[1]:
            raise ValueError("head count must divide stage width")

    @property
    def patch_side_factor(self) -> int:
        return 1 << (self.patch_hp.bit_length() // 2)

    @property
    def patch_spec(self) -> GridSpec:
        return GridSpec.from_nside(self.n_side // self.patch_side_factor)

    @property
    def coarse_spec(self) -> GridSpec:
        return GridSpec.from_nside(self.n_side // self.patch_side_factor // 2)

    @property
    def padded_levels(self) -> int:
        return -(-self.upper_levels // self.patch_d) * self.patch_d

    @property
    def upper_slots(self) -> int:
        return self.padded_levels // self.patch_d

    @property
    def token_depth(self) -> int:
        return 1 + self.upper_slots


def _trunc_normal(rng: np.random.Generator, shape, std=0.02) -> np.ndarray:
    """Normal truncated to ±2 std, via inverse-CDF sampling."""
    lo, hi = 0.5 * (1 + math.erf(-2 / math.sqrt(2))), 0.5 * (1 + math.erf(2 / math.sqrt(2)))
    u = rng.uniform(lo, hi, size=shape)
    return (erfinv(2 * u - 1) * math.sqrt(2) * std).astype(np.float32)


class PearModel:
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self._rng = rng
        self.forward_calls = 0  # instrumentation for rollout accounting

        c = config
        e, m = c.embed_dim, c.bottleneck_dim
        surf_in = c.patch_hp * c.surface_channels
        upper_in = c.patch_hp * c.patch_d * c.upper_channels

        self._add("embed/surface", surf_in, e)
        self._add("embed/upper", upper_in, e)

        # window layouts per stage resolution; masks only matter when shifted
        self.layouts = {}
        self.masks = {}
        for stage, spec in (("s1", c.patch_spec), ("s2", c.coarse_spec), ("s3", c.patch_spec)):
            plain = make_layout(spec, c.token_depth, c.w_hp, c.w_d, shifted=False)
            rolled = make_layout(spec, c.token_depth, c.w_hp, c.w_d, shifted=True)
            self.layouts[stage] = (plain, rolled)
            zero = np.zeros((plain.n_windows, 1, plain.window_voxels, plain.window_voxels),
                            dtype=np.float32)
            seam = build_masks(rolled)[:, None]
            self.masks[stage] = (Tensor(zero), Tensor(seam))

        for stage, dim, heads, depth in (
            ("s1", e, c.heads[0], c.depths[0]),
            ("s2", m, c.heads[1], c.depths[1]),
            ("s3", e, c.heads[2], c.depths[2]),
        ):
            w = self.layouts[stage][0].window_voxels
            for j in range(depth):
                p = f"{stage}/b{j}"
                for proj in ("q", "k", "v", "proj"):
                    self._add(f"{p}/{proj}", dim, dim)
                self.params[f"{p}/bias_table"] = Tensor(
                    np.zeros((1, heads, w, w), dtype=np.float32), requires_grad=True
                )
                for ln in ("ln_attn", "ln_mlp"):
                    self.params[f"{p}/{ln}_g"] = Tensor(
                        np.ones(dim, dtype=np.float32), requires_grad=True
                    )
                    self.params[f"{p}/{ln}_b"] = Tensor(
                        np.zeros(dim, dtype=np.float32), requires_grad=True
                    )
                self._add(f"{p}/mlp1", dim, 4 * dim)
                self._add(f"{p}/mlp2", 4 * dim, dim)

        self._add("down", 4 * e, m)
        self._add("up", m, 4 * e)
        self._add("recover/surface", 2 * e, surf_in)
        self._add("recover/upper", 2 * e, upper_in)

    def _add(self, name: str, fan_in: int, fan_out: int):
        self.params[f"{name}_w"] = Tensor(
            _trunc_normal(self._rng, (fan_in, fan_out)), requires_grad=True
        )
        self.params[f"{name}_b"] = Tensor(np.zeros(fan_out, dtype=np.float32), requires_grad=True)

    # -- plumbing -------------------------------------------------------

    def parameters(self) -> dict:
        return self.params

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def state_arrays(self) -> dict:
        return {name: p.data for name, p in self.params.items()}

    def load_state_arrays(self, arrays: dict):
        for name, p in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter '{name}'")
            if arrays[name].shape != p.data.shape:
                raise ValueError(
                    f"parameter '{name}' has shape {arrays[name].shape}, "
                    f"expected {p.data.shape}"
                )
            p.data = np.array(arrays[name], dtype=np.float32)

    def _lin(self, x: Tensor, name: str) -> Tensor:
        return ad.linear(x, self.params[f"{name}_w"], self.params[f"{name}_b"])

    # -- model pieces ---------------------------------------------------

    def _patch_embed(self, surface: Tensor, upper: Tensor) -> Tensor:
        c = self.config
        n_patch = c.patch_spec.n_pix
        pad_idx = np.concatenate(
            [np.arange(c.upper_levels), np.full(c.padded_levels - c.upper_levels,
                                                c.upper_levels - 1)]
        )
        up = upper.take(pad_idx, axis=1)
        up = up.reshape(n_patch, c.patch_hp, c.upper_slots, c.patch_d, c.upper_channels)
        up = up.transpose(0, 2, 1, 3, 4)
        up = up.reshape(n_patch, c.upper_slots, c.patch_hp * c.patch_d * c.upper_channels)
        up = self._lin(up, "embed/upper")

        surf = surface.reshape(n_patch, 1, c.patch_hp * c.surface_channels)
        surf = self._lin(surf, "embed/surface")
        return ad.concat([surf, up], axis=1)

    def _patch_recover(self, latent: Tensor):
        c = self.config
        n_patch = c.patch_spec.n_pix
        if latent.shape != (n_patch, c.token_depth, 2 * c.embed_dim):
            raise ValueError(
                f"patch_recover expects skip-concatenated latent "
                f"({n_patch}, {c.token_depth}, {2 * c.embed_dim}), got {latent.shape}"
            )
        surf_slot, up_slots = ad.split(latent, [1, c.upper_slots], axis=1)
        surf = self._lin(surf_slot, "recover/surface")
        surf = surf.reshape(n_patch * c.patch_hp, c.surface_channels)

        up = self._lin(up_slots, "recover/upper")
        up = up.reshape(n_patch, c.upper_slots, c.patch_hp, c.patch_d, c.upper_channels)
        up = up.transpose(0, 2, 1, 3, 4)
        up = up.reshape(n_patch * c.patch_hp, c.padded_levels, c.upper_channels)
        up = up.take(np.arange(c.upper_levels), axis=1)
        return surf, up

    def _block(self, x: Tensor, stage: str, j: int, heads: int) -> Tensor:
        shifted = self.config.use_shift and j % 2 == 1
        layout: WindowLayout = self.layouts[stage][1 if shifted else 0]
        mask = self.masks[stage][1 if shifted else 0]
        p = f"{stage}/b{j}"
        dim = x.shape[2]
        d_head = dim // heads
        w = layout.window_voxels

        xin = shift(x, layout) if shifted else x
        win = partition(xin, layout)

        def split_heads(t):
            return t.reshape(layout.n_windows, w, heads, d_head).transpose(0, 2, 1, 3)

        q = split_heads(self._lin(win, f"{p}/q"))
        k = split_heads(self._lin(win, f"{p}/k"))
        v = split_heads(self._lin(win, f"{p}/v"))
        att = ad.attention(q, k, v, self.params[f"{p}/bias_table"], mask)
        att = att.transpose(0, 2, 1, 3).reshape(layout.n_windows, w, dim)
        att = self._lin(att, f"{p}/proj")
        att = merge(att, layout)
        if shifted:
            att = unshift(att, layout)
        x = ad.add(x, ad.layer_norm(att, self.params[f"{p}/ln_attn_g"],
                                    self.params[f"{p}/ln_attn_b"]))

        h = ad.gelu(self._lin(x, f"{p}/mlp1"))
        h = self._lin(h, f"{p}/mlp2")
        return ad.add(x, ad.layer_norm(h, self.params[f"{p}/ln_mlp_g"],
                                       self.params[f"{p}/ln_mlp_b"]))

    def _stage(self, x: Tensor, stage: str) -> Tensor:
        idx = {"s1": 0, "s2": 1, "s3": 2}[stage]
        for j in range(self.config.depths[idx]):
            x = self._block(x, stage, j, self.config.heads[idx])
        return x

    def _downsample(self, x: Tensor) -> Tensor:
        c = self.config
        p4 = c.coarse_spec.n_pix
        x = x.reshape(p4, 4, c.token_depth, c.embed_dim)
        x = x.transpose(0, 2, 1, 3)
        x = x.reshape(p4, c.token_depth, 4 * c.embed_dim)
        return self._lin(x, "down")

    def _upsample(self, x: Tensor) -> Tensor:
        c = self.config
        p4 = c.coarse_spec.n_pix
        x = self._lin(x, "up")
        x = x.reshape(p4, c.token_depth, 4, c.embed_dim)
        x = x.transpose(0, 2, 1, 3)
        return x.reshape(4 * p4, c.token_depth, c.embed_dim)

    def forward_tensors(self, surface: Tensor, upper: Tensor):
        """Differentiable path: normalized tensors in, normalized out."""
        x = self._patch_embed(surface, upper)
        x = self._stage(x, "s1")
        skip = x
        x = self._downsample(x)
        x = self._stage(x, "s2")
        x = self._upsample(x)
        x = self._stage(x, "s3")
        x = ad.concat([x, skip], axis=2)
        return self._patch_recover(x)

    def forward(self, state: VolumetricState) -> VolumetricState:
        """One 24 h step on a normalized state, without building a tape."""
        expect = 12 * self.config.n_side**2
        if state.n_pix != expect:
            raise ValueError(f"state has {state.n_pix} pixels, model wants {expect}")
        if not state.is_finite():
            raise ValueError("refusing to run on non-finite input state")
        self.forward_calls += 1
        with ad.no_grad():
            surf, up = self.forward_tensors(Tensor(state.surface), Tensor(state.upper))
        return VolumetricState(surf.data, up.data)

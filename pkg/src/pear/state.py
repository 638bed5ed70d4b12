"""Atmospheric state container and normalization statistics."""

from dataclasses import dataclass

import numpy as np

SURFACE_VARS = ("u10", "v10", "t2m", "msl")
UPPER_VARS = ("q", "t", "u", "v", "z")
N_UPPER_LEVELS = 13


@dataclass
class VolumetricState:
    """One global snapshot in nested pixel ordering.

    surface: (12 n_side², 4) with channels u10, v10, t2m, msl.
    upper:   (12 n_side², 13, 5) with channels q, t, u, v, z per level.
    """

    surface: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.surface = np.asarray(self.surface, dtype=np.float32)
        self.upper = np.asarray(self.upper, dtype=np.float32)
        n_pix = self.surface.shape[0]
        if self.surface.shape != (n_pix, len(SURFACE_VARS)):
            raise ValueError(f"surface shape {self.surface.shape} invalid")
        if self.upper.shape != (n_pix, N_UPPER_LEVELS, len(UPPER_VARS)):
            raise ValueError(
                f"upper shape {self.upper.shape} does not match surface pixel count {n_pix}"
            )
        if n_pix % 12 or int(np.sqrt(n_pix // 12)) ** 2 != n_pix // 12:
            raise ValueError(f"pixel count {n_pix} is not 12 * n_side**2")

    @property
    def n_pix(self) -> int:
        return self.surface.shape[0]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.surface)) and np.all(np.isfinite(self.upper)))

    def copy(self) -> "VolumetricState":
        return VolumetricState(self.surface.copy(), self.upper.copy())


def l1_distance(a: VolumetricState, b: VolumetricState, surface_weight: float = 0.25) -> float:
    """Weighted mean absolute difference, the training objective on raw arrays."""
    if a.surface.shape != b.surface.shape or a.upper.shape != b.upper.shape:
        raise ValueError("state shapes differ")
    ds = np.mean(np.abs(a.surface.astype(np.float64) - b.surface.astype(np.float64)))
    du = np.mean(np.abs(a.upper.astype(np.float64) - b.upper.astype(np.float64)))
    return float(surface_weight * ds + du)


@dataclass
class NormStats:
    """Per-variable mean/std for the surface, per variable and level above.

    Computed once from a training split and applied everywhere else, so
    train/eval see the same affine map.
    """

    surface_mean: np.ndarray  # (4,)
    surface_std: np.ndarray  # (4,)
    upper_mean: np.ndarray  # (13, 5)
    upper_std: np.ndarray  # (13, 5)

    @classmethod
    def from_states(cls, states) -> "NormStats":
        surf = np.stack([s.surface for s in states]).astype(np.float64)
        up = np.stack([s.upper for s in states]).astype(np.float64)
        return cls(
            surface_mean=surf.mean(axis=(0, 1)).astype(np.float32),
            surface_std=np.maximum(surf.std(axis=(0, 1)), 1e-8).astype(np.float32),
            upper_mean=up.mean(axis=(0, 1)).astype(np.float32),
            upper_std=np.maximum(up.std(axis=(0, 1)), 1e-8).astype(np.float32),
        )

    def normalize(self, state: VolumetricState) -> VolumetricState:
        return VolumetricState(
            (state.surface - self.surface_mean) / self.surface_std,
            (state.upper - self.upper_mean) / self.upper_std,
        )

    def denormalize(self, state: VolumetricState) -> VolumetricState:
        return VolumetricState(
            state.surface * self.surface_std + self.surface_mean,
            state.upper * self.upper_std + self.upper_mean,
        )

    def to_arrays(self) -> dict:
        return {
            "norm/surface_mean": self.surface_mean,
            "norm/surface_std": self.surface_std,
            "norm/upper_mean": self.upper_mean,
            "norm/upper_std": self.upper_std,
        }

    @classmethod
    def from_arrays(cls, arrays: dict) -> "NormStats":
        return cls(
            surface_mean=arrays["norm/surface_mean"],
            surface_std=arrays["norm/surface_std"],
            upper_mean=arrays["norm/upper_mean"],
            upper_std=arrays["norm/upper_std"],
        )

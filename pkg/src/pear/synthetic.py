"""Synthetic weather-like sequences for desk-scale experiments.

Each channel is a fixed low-order multipole pattern on the sphere that
rotates about the polar axis at a constant angular velocity, plus a
small amount of per-step noise.  The dynamics are smooth, learnable,
and strictly nontrivial for a persistence forecast once the velocity
is nonzero.
"""

import numpy as np

from .grid import GridSpec, Scheme, pixel_center
from .state import N_UPPER_LEVELS, SURFACE_VARS, UPPER_VARS, VolumetricState, l1_distance

N_HARMONICS = 3  # azimuthal orders m = 0, 1, 2


def _multipole(theta, phi, radial, azimuthal, offsets):
    """Evaluate all channels at once; coefficient tensors are (C, m, 2)."""
    z = np.cos(theta)
    s = np.sin(theta)
    out = np.repeat(offsets[:, None], theta.size, axis=1)
    for m in range(N_HARMONICS):
        shape = s**m * (radial[:, m, :1] + radial[:, m, 1:] * z)
        swirl = azimuthal[:, m, :1] * np.cos(m * phi) + azimuthal[:, m, 1:] * np.sin(m * phi)
        out += shape * swirl
    return out


def gen_synthetic(seed, spec: GridSpec, n_steps, omega=0.25, noise_sigma=0.01,
                  year_length=365, start_day=1):
    """Return (states, day_of_year) for n_steps consecutive daily snapshots."""
    if n_steps < 2:
        raise ValueError("a sequence needs at least 2 steps")
    rng = np.random.default_rng(seed)
    channels = len(SURFACE_VARS) + N_UPPER_LEVELS * len(UPPER_VARS)
    radial = rng.standard_normal((channels, N_HARMONICS, 2))
    azimuthal = rng.standard_normal((channels, N_HARMONICS, 2))
    offsets = rng.standard_normal(channels)

    theta, phi = pixel_center(spec, np.arange(spec.n_pix), Scheme.NESTED)
    states = []
    for t in range(n_steps):
        field = _multipole(theta, phi - omega * t, radial, azimuthal, offsets)
        field = field + rng.normal(0.0, noise_sigma, field.shape)
        field = field.T.astype(np.float32)  # (n_pix, channels)
        states.append(
            VolumetricState(
                field[:, : len(SURFACE_VARS)],
                field[:, len(SURFACE_VARS):].reshape(
                    spec.n_pix, N_UPPER_LEVELS, len(UPPER_VARS)
                ),
            )
        )
    days = (start_day - 1 + np.arange(n_steps)) % year_length + 1
    return states, days


def make_pairs(states):
    """Consecutive (input, target) pairs for one-day-ahead training."""
    return list(zip(states[:-1], states[1:]))


def persistence_baseline(states) -> float:
    """Mean L1 of the repeat-yesterday forecast over consecutive pairs."""
    if len(states) < 2:
        raise ValueError("need at least 2 states")
    return float(np.mean([l1_distance(a, b) for a, b in make_pairs(states)]))

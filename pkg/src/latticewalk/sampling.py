"""Portable seeded Gaussian sampling.

Uniforms come from the raw 64-bit stream of numpy's PCG64 (PCG XSL-RR
128/64) converted as (raw >> 11) * 2**-53; normals use the Box-Muller
transform, both outputs of each pair consumed in order. Every step is
specified bit-for-bit, so the stream can be reproduced outside numpy.
"""
from __future__ import annotations

import numpy as np

RNG_NAME = "pcg64-xsl-rr-128/64"
RNG_VERSION = "1"
GAUSSIAN_TRANSFORM = "box-muller-pairs-v1"
SEED_BITS = 64


def rng_metadata(seed: int) -> dict:
    return {"rng": RNG_NAME, "rng_version": RNG_VERSION, "gaussian": GAUSSIAN_TRANSFORM, "seed": int(seed)}


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**SEED_BITS:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def uniform53(seed: int, n: int) -> np.ndarray:
    """n doubles in [0, 1) with 53 random bits each."""
    bitgen = np.random.PCG64(_check_seed(seed))
    raw = bitgen.random_raw(n)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def standard_normal(seed: int, n: int) -> np.ndarray:
    pairs = (n + 1) // 2
    u = uniform53(seed, 2 * pairs).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty((pairs, 2))
    z[:, 0] = r * np.cos(theta)
    z[:, 1] = r * np.sin(theta)
    return z.ravel()[:n]


def gaussian(seed: int, n: int, mean: float, variance: float) -> np.ndarray:
    if variance < 0:
        raise ValueError("variance must be non-negative")
    return mean + np.sqrt(variance) * standard_normal(seed, n)

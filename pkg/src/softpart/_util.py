"""Small shared helpers: reproducible random numbers, separator
initialization, and JSON round-tripping of float arrays.

Randomness policy (applies to generators and random inits alike): a Philox
counter-based bit generator seeded with a 64-bit integer, uniforms drawn as
(k + 0.5) / 2^53 over 53-bit integers, gaussians via the inverse normal CDF.
Streams are therefore reproducible across platforms for a fixed seed.
"""
import numpy as np
from scipy.special import ndtri

_U53 = 2.0**-53


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def uniform_open(gen: np.random.Generator, size=None):
    """Uniform draws strictly inside (0, 1)."""
    return (gen.integers(0, 1 << 53, size=size) + 0.5) * _U53


def normal(gen: np.random.Generator, size=None, var: float = 1.0):
    draw = ndtri(uniform_open(gen, size=size))
    if var != 1.0:
        draw = draw * np.sqrt(var)
    return draw


def axis_normal(level: int, n_features: int, dim: int) -> np.ndarray:
    """Unit normal along feature dimension (level mod n_features), zero bias."""
    v = np.zeros(dim)
    v[level % n_features] = 1.0
    return v


def random_normal_direction(gen: np.random.Generator, n_features: int, dim: int) -> np.ndarray:
    """Unit-norm random direction in feature space, zero bias."""
    v = np.zeros(dim)
    d = normal(gen, size=n_features)
    nrm = float(np.linalg.norm(d))
    if nrm == 0.0:
        d = np.zeros(n_features)
        d[0] = 1.0
        nrm = 1.0
    v[:n_features] = d / nrm
    return v


def array_to_json(a: np.ndarray):
    return a.tolist()


def array_from_json(data, shape) -> np.ndarray:
    a = np.asarray(data, dtype=np.float64)
    if a.shape != tuple(shape):
        raise ValueError(f"checkpoint array has shape {a.shape}, expected {tuple(shape)}")
    return np.ascontiguousarray(a)

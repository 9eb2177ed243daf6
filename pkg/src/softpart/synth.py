"""Deterministic, seedable generators for the synthetic benchmark streams.

Five stream kinds:

  matched     piecewise-linear target over quadrants of 2-d gaussian features:
              y = w1.x on {x.n0 >= 0, x.n1 >= 0} and its opposite quadrant,
              y = w2.x on the other two, with n0 = [1,0], n1 = [0,1],
              w1 = [1,1], w2 = [-1,-1], plus gaussian noise.
  mismatched  same gaussian features, but cell boundaries offset/rotated:
              thresholds 0.5 / -0.5 against n0 = [2,-1], n1 = [-1,1],
              n2 = [2,1], weights w1 = [1,1], w2 = [1,-1], plus noise.
  gauss_map   scalar chaotic recursion y_t = exp(-4 x_t^2) + 0.5, x_t = y_{t-1},
              x_0 standard gaussian; noiseless.
  lorenz      forward-Euler Lorenz system (sigma=10, rho=28, b=8/3, dt=0.01);
              features [u_t, v_t], target y_t; noiseless.
  fig1        scalar y = exp(x sin(4 pi x)) + noise with x uniform on [0,1].

All randomness follows the package policy in `_util` (Philox + inverse-CDF
gaussians), so a (kind, seed) pair yields a bit-identical stream anywhere.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import normal, rng, uniform_open

MATCHED_W = (np.array([1.0, 1.0]), np.array([-1.0, -1.0]))
MATCHED_N = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
MISMATCHED_W = (np.array([1.0, 1.0]), np.array([1.0, -1.0]))
MISMATCHED_N = (np.array([2.0, -1.0]), np.array([-1.0, 1.0]), np.array([2.0, 1.0]))

KINDS = ("matched", "mismatched", "gauss_map", "lorenz", "fig1")


@dataclass
class GeneratorSpec:
    kind: str
    n: int
    seed: int = 0
    noise_variance: float = 0.1
    gauss_alpha: float = 4.0
    gauss_beta: float = 0.5
    lorenz_sigma: float = 10.0
    lorenz_rho: float = 28.0
    lorenz_b: float = 8.0 / 3.0
    lorenz_dt: float = 0.01
    lorenz_init: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; choose from {KINDS}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be >= 0")

    @property
    def n_features(self) -> int:
        return 1 if self.kind in ("gauss_map", "fig1") else 2


def matched_response(x) -> float:
    """Noiseless matched-case target for a single 2-d feature vector."""
    s0 = float(x @ MATCHED_N[0]) >= 0.0
    s1 = float(x @ MATCHED_N[1]) >= 0.0
    w = MATCHED_W[0] if s0 == s1 else MATCHED_W[1]
    return float(w @ x)


def mismatched_response(x) -> float:
    """Noiseless mismatched-case target for a single 2-d feature vector."""
    n0, n1, n2 = MISMATCHED_N
    w1, w2 = MISMATCHED_W
    if float(x @ n0) >= 0.5:
        w = w1 if float(x @ n1) >= -0.5 else w2
    else:
        w = w2 if float(x @ n2) >= -0.5 else w1
    return float(w @ x)


def gauss_map_step(x: float, alpha: float = 4.0, beta: float = 0.5) -> float:
    return math.exp(-alpha * x * x) + beta


def lorenz_step(state, sigma=10.0, rho=28.0, b=8.0 / 3.0, dt=0.01):
    """One forward-Euler step of the Lorenz recursion on (y, u, v)."""
    y, u, v = state
    return (y + (sigma * (u - y)) * dt,
            u + (y * (rho - v) - u) * dt,
            v + (y * u - b * v) * dt)


def fig1_response(x: float) -> float:
    return math.exp(x * math.sin(4.0 * math.pi * x))


def iter_samples(spec: GeneratorSpec):
    """Yield (feature vector, target) pairs, one stream draw at a time."""
    gen = rng(spec.seed)
    var = spec.noise_variance

    if spec.kind == "matched":
        for _ in range(spec.n):
            x = np.array([float(normal(gen)), float(normal(gen))])
            nu = float(normal(gen, var=var)) if var > 0 else 0.0
            yield x, matched_response(x) + nu

    elif spec.kind == "mismatched":
        for _ in range(spec.n):
            x = np.array([float(normal(gen)), float(normal(gen))])
            nu = float(normal(gen, var=var)) if var > 0 else 0.0
            yield x, mismatched_response(x) + nu

    elif spec.kind == "gauss_map":
        x = float(normal(gen))
        for _ in range(spec.n):
            y = gauss_map_step(x, spec.gauss_alpha, spec.gauss_beta)
            yield np.array([x]), y
            x = y

    elif spec.kind == "lorenz":
        state = tuple(float(s) for s in spec.lorenz_init)
        for _ in range(spec.n):
            state = lorenz_step(state, spec.lorenz_sigma, spec.lorenz_rho,
                                spec.lorenz_b, spec.lorenz_dt)
            y, u, v = state
            yield np.array([u, v]), y

    elif spec.kind == "fig1":
        for _ in range(spec.n):
            x = float(uniform_open(gen))
            nu = float(normal(gen, var=var)) if var > 0 else 0.0
            yield np.array([x]), fig1_response(x) + nu


def generate(spec: GeneratorSpec):
    """Materialize the stream as (X, y) arrays in stream order."""
    X = np.empty((spec.n, spec.n_features))
    y = np.empty(spec.n)
    for t, (x, yt) in enumerate(iter_samples(spec)):
        X[t] = x
        y[t] = yt
    return X, y

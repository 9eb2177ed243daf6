"""Straight partitioning: K global soft separators gating 2^K labeled regions.

Every separator cuts the whole feature space, so a region is a sign pattern
over all K separators and carries its own linear regressor. Prediction mixes
the per-region estimates by the product of direction-adjusted gate values;
updates move every regressor and every separator normal with the shared
second-order step.
"""
import json

import numpy as np

from . import backend as _backend
from . import labels as lab
from ._util import (array_from_json, array_to_json, axis_normal,
                    random_normal_direction, rng)
from .core import DEFAULT_EPSILON


def sp_max_regions(k: int) -> int:
    """Most distinct cells k hyperplanes can carve out of the plane-like space.

    The model itself tracks all 2^k sign patterns; this bound is diagnostic
    (patterns beyond it receive vanishing gate mass).
    """
    if k < 0:
        raise ValueError("separator count must be >= 0")
    return (k * k + k + 2) // 2


class SpPrediction:
    """Per-sample forward caches: gate values and per-region break-down."""

    __slots__ = ("y_hat", "gate_values", "region_estimates", "gate_products",
                 "weighted_estimates", "labels")

    def __init__(self, y_hat, gate_values, region_estimates, gate_products,
                 weighted_estimates, labels):
        self.y_hat = y_hat
        self.gate_values = gate_values
        self.region_estimates = region_estimates
        self.gate_products = gate_products
        self.weighted_estimates = weighted_estimates
        self.labels = labels

    @property
    def per_region(self):
        return {
            r: (self.region_estimates[j], self.weighted_estimates[j], self.gate_products[j])
            for j, r in enumerate(self.labels)
        }


class SpModel:
    """Straight-partitioning online regressor.

    Parameters
    ----------
    n_features : raw feature dimension (bias handled internally)
    n_separators : K; the model keeps 2^K regions
    beta, eta : step sizes for regressors and separator normals
    epsilon : inverse-matrix initialization, A^-1 = (1/epsilon) I
    init : "axis" (k-th separator along feature k mod m) or "random" (seeded)
    """

    FORMAT = "softpart/sp"
    VERSION = 1

    def __init__(self, n_features, n_separators, beta, eta,
                 epsilon=DEFAULT_EPSILON, init="axis", seed=0, backend=None,
                 epsilon_separators=None):
        if n_features < 1 and n_separators > 0:
            raise ValueError("separators need at least one feature dimension")
        if n_separators < 0:
            raise ValueError("n_separators must be >= 0")
        if beta <= 0 or (n_separators > 0 and eta <= 0) or epsilon <= 0:
            raise ValueError("step sizes and epsilon must be positive")
        if epsilon_separators is None:
            epsilon_separators = epsilon
        if epsilon_separators <= 0:
            raise ValueError("epsilon_separators must be positive")
        self.n_features = int(n_features)
        self.k = int(n_separators)
        self.dim = self.n_features + 1
        self.beta = float(beta)
        self.eta = float(eta)
        self.epsilon = float(epsilon)
        self.epsilon_separators = float(epsilon_separators)
        self.update_separators = True
        self.skipped = 0
        self._k = _backend.kernels if backend is None else backend

        n_reg = 1 << self.k
        self.sep_w = np.zeros((self.k, self.dim))
        if init == "axis":
            for i in range(self.k):
                self.sep_w[i] = axis_normal(i, self.n_features, self.dim)
        elif init == "random":
            gen = rng(seed)
            for i in range(self.k):
                self.sep_w[i] = random_normal_direction(gen, self.n_features, self.dim)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.sep_ainv = np.tile(np.eye(self.dim) / self.epsilon_separators, (self.k, 1, 1))
        self.reg_w = np.zeros((n_reg, self.dim))
        self.reg_ainv = np.tile(np.eye(self.dim) / self.epsilon, (n_reg, 1, 1))

        self._xa = np.empty(self.dim)
        self._xa[-1] = 1.0
        self._gates = np.empty(self.k)
        self._est = np.empty(n_reg)
        self._prod = np.empty(n_reg)
        self._psi = np.empty(n_reg)
        self._alpha = np.empty(self.k)

    @property
    def n_regions(self):
        return self.reg_w.shape[0]

    def region_labels(self):
        return lab.all_labels(self.k)

    def separator_labels(self):
        return [str(i) for i in range(self.k)]

    def _augment(self, x):
        self._xa[:-1] = x
        return self._xa

    def predict(self, x) -> SpPrediction:
        xa = self._augment(x)
        yhat = self._k.sp_forward(xa, self.sep_w, self.reg_w,
                                  self._gates, self._est, self._prod, self._psi)
        return SpPrediction(yhat, self._gates.copy(), self._est.copy(),
                            self._prod.copy(), self._psi.copy(), self.region_labels())

    def update(self, x, y) -> float:
        """Predict-then-update on one sample; returns the prediction error."""
        xa = self._augment(x)
        _, e, ok = self._k.sp_step(
            xa, y, self.sep_w, self.sep_ainv, self.reg_w, self.reg_ainv,
            self.beta, self.eta, self._gates, self._est, self._prod,
            self._psi, self._alpha, self.update_separators)
        if not ok:
            self.skipped += 1
        return e

    def separator_normals(self):
        return self.sep_w.copy()

    # -- checkpointing ------------------------------------------------------

    def to_dict(self):
        return {
            "format": self.FORMAT,
            "version": self.VERSION,
            "n_features": self.n_features,
            "k": self.k,
            "beta": self.beta,
            "eta": self.eta,
            "epsilon": self.epsilon,
            "epsilon_separators": self.epsilon_separators,
            "update_separators": self.update_separators,
            "skipped": self.skipped,
            "region_labels": self.region_labels(),
            "separators": {"w": array_to_json(self.sep_w),
                           "ainv": array_to_json(self.sep_ainv)},
            "regions": {"w": array_to_json(self.reg_w),
                        "ainv": array_to_json(self.reg_ainv)},
        }

    @classmethod
    def from_dict(cls, d, backend=None):
        if d.get("format") != cls.FORMAT:
            raise ValueError(f"not a {cls.FORMAT} checkpoint")
        if d.get("version") != cls.VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        m = cls(d["n_features"], d["k"], d["beta"], d["eta"], d["epsilon"],
                backend=backend, epsilon_separators=d["epsilon_separators"])
        k, dim, n_reg = m.k, m.dim, m.n_regions
        m.sep_w = array_from_json(d["separators"]["w"], (k, dim))
        m.sep_ainv = array_from_json(d["separators"]["ainv"], (k, dim, dim))
        m.reg_w = array_from_json(d["regions"]["w"], (n_reg, dim))
        m.reg_ainv = array_from_json(d["regions"]["ainv"], (n_reg, dim, dim))
        m.update_separators = d["update_separators"]
        m.skipped = d["skipped"]
        return m

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path, backend=None):
        with open(path) as f:
            return cls.from_dict(json.load(f), backend=backend)

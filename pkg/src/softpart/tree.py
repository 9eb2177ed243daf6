"""Finest-model partitioning: a depth-d binary tree of soft separators whose
2^d deepest regions carry the linear regressors.

Gates multiply along root-to-leaf paths, so the leaf mixture weights form a
partition of unity by construction. Separator normals and leaf regressors all
train online with the shared second-order step; separator training can be
switched off to freeze the partition (ablations, regret experiments).
"""
import json

import numpy as np

from . import backend as _backend
from . import labels as lab
from ._util import (array_from_json, array_to_json, axis_normal,
                    random_normal_direction, rng)
from .core import DEFAULT_EPSILON


class FmpPrediction:
    """Forward caches: internal gate values and the per-leaf break-down."""

    __slots__ = ("y_hat", "gate_values", "leaf_estimates", "path_products",
                 "weighted_estimates", "leaf_labels", "internal_labels")

    def __init__(self, y_hat, gate_values, leaf_estimates, path_products,
                 weighted_estimates, leaf_labels, internal_labels):
        self.y_hat = y_hat
        self.gate_values = gate_values
        self.leaf_estimates = leaf_estimates
        self.path_products = path_products
        self.weighted_estimates = weighted_estimates
        self.leaf_labels = leaf_labels
        self.internal_labels = internal_labels

    @property
    def per_leaf(self):
        return {
            r: (self.leaf_estimates[j], self.path_products[j], self.weighted_estimates[j])
            for j, r in enumerate(self.leaf_labels)
        }

    @property
    def gates(self):
        return dict(zip(self.internal_labels, self.gate_values))


class FmpModel:
    """Finest-model-partitioning online regressor (depth >= 1).

    Axis-aligned initialization splits feature dimension (level mod m) at each
    tree level with zero bias, which starts a 2-d depth-2 model from four
    equal quadrants. `init="random"` draws seeded unit-norm directions.
    """

    FORMAT = "softpart/fmp"
    VERSION = 1

    def __init__(self, n_features, depth, beta, eta, epsilon=DEFAULT_EPSILON,
                 init="axis", seed=0, backend=None, epsilon_separators=None):
        if depth < 1:
            raise ValueError("depth must be >= 1")
        if n_features < 1:
            raise ValueError("n_features must be >= 1")
        if beta <= 0 or eta <= 0 or epsilon <= 0:
            raise ValueError("step sizes and epsilon must be positive")
        if epsilon_separators is None:
            epsilon_separators = epsilon
        if epsilon_separators <= 0:
            raise ValueError("epsilon_separators must be positive")
        self.n_features = int(n_features)
        self.depth = int(depth)
        self.dim = self.n_features + 1
        self.beta = float(beta)
        self.eta = float(eta)
        self.epsilon = float(epsilon)
        self.epsilon_separators = float(epsilon_separators)
        self.update_separators = True
        self.skipped = 0
        self._k = _backend.kernels if backend is None else backend

        n_sep = (1 << self.depth) - 1
        n_leaf = 1 << self.depth
        self.sep_w = np.zeros((n_sep, self.dim))
        gen = rng(seed) if init == "random" else None
        for idx in range(n_sep):
            level = (idx + 1).bit_length() - 1
            if init == "axis":
                self.sep_w[idx] = axis_normal(level, self.n_features, self.dim)
            elif init == "random":
                self.sep_w[idx] = random_normal_direction(gen, self.n_features, self.dim)
            else:
                raise ValueError(f"unknown init {init!r}")
        self.sep_ainv = np.tile(np.eye(self.dim) / self.epsilon_separators, (n_sep, 1, 1))
        self.leaf_w = np.zeros((n_leaf, self.dim))
        self.leaf_ainv = np.tile(np.eye(self.dim) / self.epsilon, (n_leaf, 1, 1))

        self._xa = np.empty(self.dim)
        self._xa[-1] = 1.0
        self._gates = np.empty(n_sep)
        self._est = np.empty(n_leaf)
        self._gamma = np.empty(n_leaf)
        self._psi = np.empty(n_leaf)
        self._alpha = np.empty(n_sep)

    @property
    def n_leaves(self):
        return self.leaf_w.shape[0]

    @property
    def n_separators(self):
        return self.sep_w.shape[0]

    def leaf_labels(self):
        return lab.all_labels(self.depth)

    def separator_labels(self):
        return lab.internal_labels(self.depth)

    def _augment(self, x):
        self._xa[:-1] = x
        return self._xa

    def predict(self, x) -> FmpPrediction:
        xa = self._augment(x)
        yhat = self._k.fmp_forward(xa, self.depth, self.sep_w, self.leaf_w,
                                   self._gates, self._est, self._gamma, self._psi)
        return FmpPrediction(yhat, self._gates.copy(), self._est.copy(),
                             self._gamma.copy(), self._psi.copy(),
                             self.leaf_labels(), self.separator_labels())

    def update(self, x, y) -> float:
        """Predict-then-update on one sample; returns the prediction error."""
        xa = self._augment(x)
        _, e, ok = self._k.fmp_step(
            xa, y, self.depth, self.sep_w, self.sep_ainv, self.leaf_w,
            self.leaf_ainv, self.beta, self.eta, self._gates, self._est,
            self._gamma, self._psi, self._alpha, self.update_separators)
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
            "depth": self.depth,
            "beta": self.beta,
            "eta": self.eta,
            "epsilon": self.epsilon,
            "epsilon_separators": self.epsilon_separators,
            "update_separators": self.update_separators,
            "skipped": self.skipped,
            "leaf_labels": self.leaf_labels(),
            "separator_labels": self.separator_labels(),
            "separators": {"w": array_to_json(self.sep_w),
                           "ainv": array_to_json(self.sep_ainv)},
            "leaves": {"w": array_to_json(self.leaf_w),
                       "ainv": array_to_json(self.leaf_ainv)},
        }

    @classmethod
    def from_dict(cls, d, backend=None):
        if d.get("format") != cls.FORMAT:
            raise ValueError(f"not a {cls.FORMAT} checkpoint")
        if d.get("version") != cls.VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        m = cls(d["n_features"], d["depth"], d["beta"], d["eta"], d["epsilon"],
                backend=backend, epsilon_separators=d["epsilon_separators"])
        s, l, dim = m.n_separators, m.n_leaves, m.dim
        m.sep_w = array_from_json(d["separators"]["w"], (s, dim))
        m.sep_ainv = array_from_json(d["separators"]["ainv"], (s, dim, dim))
        m.leaf_w = array_from_json(d["leaves"]["w"], (l, dim))
        m.leaf_ainv = array_from_json(d["leaves"]["ainv"], (l, dim, dim))
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

"""All-subtree ensemble: every complete pruning of the depth-d tree produces
a piecewise-linear estimate, and the estimates are combined linearly with
second-order-trained weights.

A pruning is an antichain of node labels covering the root (each depth-d path
meets exactly one member). Regressors live at every tree node and separators
at every internal node, shared across the prunings; only the combination
vector has one entry per pruning. The pruning order is part of the checkpoint
contract since the combination weights index it.
"""
import json

import numpy as np

from . import backend as _backend
from . import labels as lab
from ._util import (array_from_json, array_to_json, axis_normal,
                    random_normal_direction, rng)
from .core import DEFAULT_EPSILON

# M grows as roughly 1.5^(2^d): 677 prunings at depth 4 is the practical
# ceiling for a dense second-order combiner.
MAX_DEPTH = 4


def count_prunings(depth: int) -> int:
    """Number of complete prunings: M(0) = 1, M(d) = M(d-1)^2 + 1."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth > MAX_DEPTH:
        raise ValueError(f"depth {depth} exceeds the supported maximum {MAX_DEPTH}")
    m = 1
    for _ in range(depth):
        m = m * m + 1
    return m


def enumerate_prunings(depth: int) -> list[tuple[str, ...]]:
    """All complete prunings as label tuples, in a fixed recursive order:
    the root-only model first, then left-major products of the child lists.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth > MAX_DEPTH:
        raise ValueError(f"depth {depth} exceeds the supported maximum {MAX_DEPTH}")

    def rec(prefix, remaining):
        if remaining == 0:
            return [(prefix,)]
        out = [(prefix,)]
        left = rec(prefix + "0", remaining - 1)
        right = rec(prefix + "1", remaining - 1)
        for a in left:
            for b in right:
                out.append(a + b)
        return out

    return rec(lab.ROOT, depth)


class EnsemblePrediction:
    """Forward caches: per-node estimates and the per-pruning estimates."""

    __slots__ = ("y_hat", "model_estimates", "gate_values", "node_estimates",
                 "path_products", "weighted_estimates", "node_labels")

    def __init__(self, y_hat, model_estimates, gate_values, node_estimates,
                 path_products, weighted_estimates, node_labels):
        self.y_hat = y_hat
        self.model_estimates = model_estimates
        self.gate_values = gate_values
        self.node_estimates = node_estimates
        self.path_products = path_products
        self.weighted_estimates = weighted_estimates
        self.node_labels = node_labels


class EnsembleModel:
    """Linear combination of all subtree models of a depth-d tree (d <= 4)."""

    FORMAT = "softpart/ensemble"
    VERSION = 1

    def __init__(self, n_features, depth, beta, eta, eta_combiner=None,
                 epsilon=DEFAULT_EPSILON, init="axis", seed=0, backend=None,
                 epsilon_separators=None):
        if not 1 <= depth <= MAX_DEPTH:
            raise ValueError(f"depth must be in [1, {MAX_DEPTH}]")
        if n_features < 1:
            raise ValueError("n_features must be >= 1")
        if eta_combiner is None:
            eta_combiner = eta
        if beta <= 0 or eta <= 0 or eta_combiner <= 0 or epsilon <= 0:
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
        self.eta_combiner = float(eta_combiner)
        self.epsilon = float(epsilon)
        self.epsilon_separators = float(epsilon_separators)
        self.update_separators = True
        self.freeze_combiner = False
        self.skipped = 0
        self._k = _backend.kernels if backend is None else backend

        n_sep = (1 << self.depth) - 1
        n_node = 2 * (1 << self.depth) - 1
        self.prunings = enumerate_prunings(self.depth)
        m_count = count_prunings(self.depth)

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
        self.node_w = np.zeros((n_node, self.dim))
        self.node_ainv = np.tile(np.eye(self.dim) / self.epsilon, (n_node, 1, 1))
        self.ups = np.full(m_count, 1.0 / m_count)
        self.comb_ainv = np.eye(m_count) / self.epsilon

        # flat member list (node array indices) with per-pruning offsets
        members = []
        offsets = [0]
        for pr in self.prunings:
            members.extend(lab.heap_index(r) - 1 for r in pr)
            offsets.append(len(members))
        self._members = np.asarray(members, dtype=np.int64)
        self._offsets = np.asarray(offsets, dtype=np.int64)

        self._xa = np.empty(self.dim)
        self._xa[-1] = 1.0
        self._gates = np.empty(n_sep)
        self._est = np.empty(n_node)
        self._path = np.empty(n_node)
        self._psi = np.empty(n_node)
        self._phi = np.empty(m_count)
        self._coef = np.empty(n_node)
        self._alpha = np.empty(n_sep)

    @property
    def n_models(self):
        return self.ups.shape[0]

    @property
    def n_nodes(self):
        return self.node_w.shape[0]

    @property
    def n_separators(self):
        return self.sep_w.shape[0]

    def node_labels(self):
        return [lab.heap_label(h) for h in range(1, self.n_nodes + 1)]

    def separator_labels(self):
        return lab.internal_labels(self.depth)

    def _augment(self, x):
        self._xa[:-1] = x
        return self._xa

    def predict(self, x) -> EnsemblePrediction:
        xa = self._augment(x)
        yhat = self._k.ens_forward(
            xa, self.depth, self.sep_w, self.node_w, self.ups,
            self._members, self._offsets, self._gates, self._est,
            self._path, self._psi, self._phi)
        return EnsemblePrediction(yhat, self._phi.copy(), self._gates.copy(),
                                  self._est.copy(), self._path.copy(),
                                  self._psi.copy(), self.node_labels())

    def update(self, x, y) -> float:
        """Predict-then-update on one sample; returns the prediction error."""
        xa = self._augment(x)
        _, e, ok = self._k.ens_step(
            xa, y, self.depth, self.sep_w, self.sep_ainv, self.node_w,
            self.node_ainv, self.ups, self.comb_ainv, self._members,
            self._offsets, self.beta, self.eta, self.eta_combiner,
            self._gates, self._est, self._path, self._psi, self._phi,
            self._coef, self._alpha, self.freeze_combiner,
            self.update_separators)
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
            "eta_combiner": self.eta_combiner,
            "epsilon": self.epsilon,
            "epsilon_separators": self.epsilon_separators,
            "update_separators": self.update_separators,
            "freeze_combiner": self.freeze_combiner,
            "skipped": self.skipped,
            "prunings": [list(p) for p in self.prunings],
            "separators": {"w": array_to_json(self.sep_w),
                           "ainv": array_to_json(self.sep_ainv)},
            "nodes": {"w": array_to_json(self.node_w),
                      "ainv": array_to_json(self.node_ainv)},
            "combiner": {"w": array_to_json(self.ups),
                         "ainv": array_to_json(self.comb_ainv)},
        }

    @classmethod
    def from_dict(cls, d, backend=None):
        if d.get("format") != cls.FORMAT:
            raise ValueError(f"not a {cls.FORMAT} checkpoint")
        if d.get("version") != cls.VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        m = cls(d["n_features"], d["depth"], d["beta"], d["eta"],
                d["eta_combiner"], d["epsilon"], backend=backend,
                epsilon_separators=d["epsilon_separators"])
        if [list(p) for p in m.prunings] != d["prunings"]:
            raise ValueError("checkpoint pruning order does not match this version")
        s, n, mm, dim = m.n_separators, m.n_nodes, m.n_models, m.dim
        m.sep_w = array_from_json(d["separators"]["w"], (s, dim))
        m.sep_ainv = array_from_json(d["separators"]["ainv"], (s, dim, dim))
        m.node_w = array_from_json(d["nodes"]["w"], (n, dim))
        m.node_ainv = array_from_json(d["nodes"]["ainv"], (n, dim, dim))
        m.ups = array_from_json(d["combiner"]["w"], (mm,))
        m.comb_ainv = array_from_json(d["combiner"]["ainv"], (mm, mm))
        m.update_separators = d["update_separators"]
        m.freeze_combiner = d["freeze_combiner"]
        m.skipped = d["skipped"]
        return m

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path, backend=None):
        with open(path) as f:
            return cls.from_dict(json.load(f), backend=backend)

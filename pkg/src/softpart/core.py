"""Shared second-order machinery: bias augmentation, sigmoid gates and their
gradients, the rank-1 inverse update, and the generic Newton-style step.

Every predictor in this package runs the same parameter update: accumulate
gradient outer products into a matrix A (kept as its inverse via the matrix
inversion lemma) and move the parameter by -(1/step_size) * A^-1 * grad.
"""
from dataclasses import dataclass

import numpy as np

# Sigmoid exponent is clamped to avoid overflow; the output is clamped away
# from exact 0/1 so downstream divisions and log-style expressions stay finite.
EXP_CLAMP = 500.0
GATE_MIN = 1e-12
GATE_MAX = 1.0 - 1e-12

DEFAULT_EPSILON = 0.1


def augment(x) -> np.ndarray:
    """Append the constant bias entry 1 to a feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-d feature vector, got shape {x.shape}")
    if x.size and not np.isfinite(x).all():
        raise ValueError("feature vector contains non-finite entries")
    out = np.empty(x.size + 1)
    out[:-1] = x
    out[-1] = 1.0
    return out


def gate(n, x) -> float:
    """Soft separator value 1 / (1 + exp(-x.n)), clamped into (0, 1)."""
    n = np.asarray(n, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if n.shape != x.shape:
        raise ValueError(f"dimension mismatch: n {n.shape} vs x {x.shape}")
    z = float(np.dot(x, n))
    z = min(max(z, -EXP_CLAMP), EXP_CLAMP)
    p = 1.0 / (1.0 + np.exp(-z))
    return min(max(p, GATE_MIN), GATE_MAX)


def gate_grad(n, x) -> np.ndarray:
    """Gradient of gate(n, x) with respect to n.

    Computed as x * p * (1 - p), which equals the quotient form
    x * exp(-z) / (1 + exp(-z))^2 but never evaluates a bare exp(-z).
    """
    p = gate(n, x)
    return np.asarray(x, dtype=np.float64) * (p * (1.0 - p))


def sherman_morrison_update(inv_hessian, g) -> np.ndarray:
    """Inverse of (A + g g^T) given inv_hessian = A^-1.

    The result is re-symmetrized; the denominator 1 + g^T A^-1 g is >= 1
    whenever A^-1 is positive definite, so no division guard is needed.
    """
    ainv = np.asarray(inv_hessian, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if ainv.shape != (g.size, g.size):
        raise ValueError(f"shape mismatch: A^-1 {ainv.shape} vs g {g.shape}")
    ag = ainv @ g
    new = ainv - np.outer(ag, ag) / (1.0 + float(g @ ag))
    return (new + new.T) / 2.0


@dataclass
class OnsState:
    """A parameter vector with its inverse second-order matrix.

    step_size plays the role of beta for regressors and eta for separators;
    epsilon sets the initial inverse matrix (1/epsilon) * I.
    """

    param: np.ndarray
    inv_hessian: np.ndarray
    step_size: float
    epsilon: float = DEFAULT_EPSILON

    @classmethod
    def fresh(cls, dim: int, step_size: float, epsilon: float = DEFAULT_EPSILON):
        if step_size <= 0 or epsilon <= 0:
            raise ValueError("step_size and epsilon must be positive")
        return cls(
            param=np.zeros(dim),
            inv_hessian=np.eye(dim) / epsilon,
            step_size=step_size,
            epsilon=epsilon,
        )

    def copy(self):
        return OnsState(
            self.param.copy(), self.inv_hessian.copy(), self.step_size, self.epsilon
        )


def epsilon_from_diameter(beta: float, diameter: float) -> float:
    """Theory-motivated epsilon = 1 / (beta^2 * A^2) for a known diameter A."""
    if beta <= 0 or diameter <= 0:
        raise ValueError("beta and diameter must be positive")
    return 1.0 / (beta**2 * diameter**2)


def ons_step(state: OnsState, grad) -> tuple[OnsState, bool]:
    """One second-order step; returns (new_state, stepped).

    The inverse matrix is advanced by the rank-1 update first, then the
    parameter moves along the fresh inverse. A non-finite gradient skips the
    step (stepped=False) so a caller can count it instead of corrupting state.
    """
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != state.param.shape:
        raise ValueError(f"gradient shape {g.shape} != param shape {state.param.shape}")
    if not np.isfinite(g).all():
        return state, False
    inv = sherman_morrison_update(state.inv_hessian, g)
    param = state.param - (inv @ g) / state.step_size
    return OnsState(param, inv, state.step_size, state.epsilon), True

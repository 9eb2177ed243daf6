"""Pure-numpy kernels: the per-sample predict/update loops for all models.

This module is the fallback twin of the compiled extension `_speedups`; both
expose the same functions with the same array-in/array-out contracts, and the
loop structure here is kept deliberately close to the compiled code so the two
backends agree step for step.

Conventions shared by both backends:
  * `xa` is the bias-augmented sample, last entry 1.
  * Straight partitioning indexes its 2^K regions by the integer whose K-bit
    binary expansion is the region label (first separator = most significant
    bit). Trees index nodes heap-style (root 1, children 2h/2h+1) shifted to
    0-based arrays; leaves of a depth-d tree are array slots for label value.
  * Update scales are all derived from the pre-update forward pass, and every
    inverse matrix advances by the rank-1 inversion-lemma update before its
    parameter moves.
"""
import math

import numpy as np

EXP_CLAMP = 500.0
GATE_MIN = 1e-12
GATE_MAX = 1.0 - 1e-12
# Below this gate value the psi/gate quotient is rebuilt by re-multiplying the
# other gates instead of dividing (cancellation guard).
GATE_DIV_GUARD = 1e-6


def sigmoid(z: float) -> float:
    if z > EXP_CLAMP:
        z = EXP_CLAMP
    elif z < -EXP_CLAMP:
        z = -EXP_CLAMP
    p = 1.0 / (1.0 + math.exp(-z))
    if p < GATE_MIN:
        return GATE_MIN
    if p > GATE_MAX:
        return GATE_MAX
    return p


def ons_rank1(w, ainv, c, xa, inv_step):
    """In-place second-order step for gradient g = c * xa."""
    g = c * xa
    ag = ainv @ g
    denom = 1.0 + float(g @ ag)
    ainv[:] = ainv - np.outer(ag, ag) / denom
    ainv[:] = (ainv + ainv.T) * 0.5
    w -= inv_step * (ainv @ g)


def _comb_ons(ups, ainv, phi, base, inv_step):
    """Second-order step for the model-combination weights (dense gradient)."""
    g = base * phi
    ag = ainv @ g
    denom = 1.0 + float(g @ ag)
    ainv[:] = ainv - np.outer(ag, ag) / denom
    ainv[:] = (ainv + ainv.T) * 0.5
    ups -= inv_step * (ainv @ g)


# ---------------------------------------------------------------------------
# Straight partitioning (K global separators, 2^K sign-pattern regions)
# ---------------------------------------------------------------------------

def sp_forward(xa, sep_w, reg_w, gates, est, prod, psi):
    K = sep_w.shape[0]
    R = reg_w.shape[0]
    for i in range(K):
        gates[i] = sigmoid(float(sep_w[i] @ xa))
    yhat = 0.0
    for j in range(R):
        w = 1.0
        for i in range(K):
            b = (j >> (K - 1 - i)) & 1
            w *= gates[i] if b == 0 else 1.0 - gates[i]
        est[j] = float(reg_w[j] @ xa)
        prod[j] = w
        psi[j] = est[j] * w
        yhat += psi[j]
    return yhat


def sp_step(xa, y, sep_w, sep_ainv, reg_w, reg_ainv, beta, eta,
            gates, est, prod, psi, alpha, update_separators=True):
    K = sep_w.shape[0]
    R = reg_w.shape[0]
    yhat = sp_forward(xa, sep_w, reg_w, gates, est, prod, psi)
    e = y - yhat
    if not math.isfinite(e):
        return yhat, e, False

    # alpha_i: the bracketed sum of the separator update, one term per region
    for i in range(K):
        a = 0.0
        for j in range(R):
            b = (j >> (K - 1 - i)) & 1
            ph = gates[i] if b == 0 else 1.0 - gates[i]
            if ph < GATE_DIV_GUARD:
                num = est[j]
                for i2 in range(K):
                    if i2 == i:
                        continue
                    b2 = (j >> (K - 1 - i2)) & 1
                    num *= gates[i2] if b2 == 0 else 1.0 - gates[i2]
            else:
                num = psi[j] / ph
            a += -num if b else num
        alpha[i] = a

    base = -2.0 * e
    inv_beta = 1.0 / beta
    for j in range(R):
        ons_rank1(reg_w[j], reg_ainv[j], base * prod[j], xa, inv_beta)
    if update_separators:
        inv_eta = 1.0 / eta
        for i in range(K):
            c = base * alpha[i] * gates[i] * (1.0 - gates[i])
            if math.isfinite(c):
                ons_rank1(sep_w[i], sep_ainv[i], c, xa, inv_eta)
    return yhat, e, True


# ---------------------------------------------------------------------------
# Finest-model partitioning (depth-d tree, gates multiply along paths)
# ---------------------------------------------------------------------------

def fmp_forward(xa, depth, sep_w, leaf_w, gates, est, gamma, psi):
    S = (1 << depth) - 1
    L = 1 << depth
    for i in range(S):
        gates[i] = sigmoid(float(sep_w[i] @ xa))
    yhat = 0.0
    for j in range(L):
        w = 1.0
        h = 1
        for lvl in range(depth):
            b = (j >> (depth - 1 - lvl)) & 1
            w *= gates[h - 1] if b == 0 else 1.0 - gates[h - 1]
            h = 2 * h + b
        est[j] = float(leaf_w[j] @ xa)
        gamma[j] = w
        psi[j] = est[j] * w
        yhat += psi[j]
    return yhat


def _fmp_alpha(depth, gates, est, psi, alpha):
    S = (1 << depth) - 1
    for idx in range(S):
        h = idx + 1
        lev = h.bit_length() - 1
        s = depth - lev
        a = 0.0
        for suf in range(1 << s):
            j = ((h << s) | suf) - (1 << depth)
            b = (suf >> (s - 1)) & 1
            ph = gates[idx] if b == 0 else 1.0 - gates[idx]
            if ph < GATE_DIV_GUARD:
                num = est[j]
                hh = 1
                for lvl in range(depth):
                    bb = (j >> (depth - 1 - lvl)) & 1
                    if hh != h:
                        num *= gates[hh - 1] if bb == 0 else 1.0 - gates[hh - 1]
                    hh = 2 * hh + bb
            else:
                num = psi[j] / ph
            a += -num if b else num
        alpha[idx] = a


def fmp_step(xa, y, depth, sep_w, sep_ainv, leaf_w, leaf_ainv, beta, eta,
             gates, est, gamma, psi, alpha, update_separators=True):
    S = (1 << depth) - 1
    L = 1 << depth
    yhat = fmp_forward(xa, depth, sep_w, leaf_w, gates, est, gamma, psi)
    e = y - yhat
    if not math.isfinite(e):
        return yhat, e, False

    _fmp_alpha(depth, gates, est, psi, alpha)

    base = -2.0 * e
    inv_beta = 1.0 / beta
    for j in range(L):
        ons_rank1(leaf_w[j], leaf_ainv[j], base * gamma[j], xa, inv_beta)
    if update_separators:
        inv_eta = 1.0 / eta
        for i in range(S):
            c = base * alpha[i] * gates[i] * (1.0 - gates[i])
            if math.isfinite(c):
                ons_rank1(sep_w[i], sep_ainv[i], c, xa, inv_eta)
    return yhat, e, True


# ---------------------------------------------------------------------------
# All-subtree ensemble (per-node regressors shared across prunings)
# ---------------------------------------------------------------------------

def ens_forward(xa, depth, sep_w, node_w, ups, members, offsets,
                gates, est, path, psi, phi):
    S = (1 << depth) - 1
    N = 2 * (1 << depth) - 1
    M = ups.shape[0]
    for i in range(S):
        gates[i] = sigmoid(float(sep_w[i] @ xa))
    for v in range(N):
        est[v] = float(node_w[v] @ xa)
    path[0] = 1.0
    for h in range(1, S + 1):
        p = gates[h - 1]
        path[2 * h - 1] = path[h - 1] * p
        path[2 * h] = path[h - 1] * (1.0 - p)
    for v in range(N):
        psi[v] = est[v] * path[v]
    yhat = 0.0
    for lam in range(M):
        acc = 0.0
        for t in range(offsets[lam], offsets[lam + 1]):
            acc += psi[members[t]]
        phi[lam] = acc
        yhat += ups[lam] * phi[lam]
    return yhat


def ens_step(xa, y, depth, sep_w, sep_ainv, node_w, node_ainv, ups, comb_ainv,
             members, offsets, beta, eta, eta_c, gates, est, path, psi, phi,
             coef, alpha, freeze_combiner=False, update_separators=True):
    S = (1 << depth) - 1
    N = 2 * (1 << depth) - 1
    M = ups.shape[0]
    yhat = ens_forward(xa, depth, sep_w, node_w, ups, members, offsets,
                       gates, est, path, psi, phi)
    e = y - yhat
    if not math.isfinite(e):
        return yhat, e, False

    # coef[v]: total combination weight on node v across the prunings using it
    coef[:N] = 0.0
    for lam in range(M):
        u = ups[lam]
        for t in range(offsets[lam], offsets[lam + 1]):
            coef[members[t]] += u

    # alpha per separator: descendants level by level, leaves last, so the
    # leaf contributions accumulate in the same order as the plain tree model
    for idx in range(S):
        h = idx + 1
        lev = h.bit_length() - 1
        a = 0.0
        for s in range(1, depth - lev + 1):
            for suf in range(1 << s):
                hv = (h << s) | suf
                v = hv - 1
                b = (suf >> (s - 1)) & 1
                ph = gates[idx] if b == 0 else 1.0 - gates[idx]
                if ph < GATE_DIV_GUARD:
                    num = coef[v] * est[v]
                    hh = 1
                    ll = hv.bit_length() - 1
                    for lvl in range(ll):
                        bb = (hv >> (ll - 1 - lvl)) & 1
                        if hh != h:
                            num *= gates[hh - 1] if bb == 0 else 1.0 - gates[hh - 1]
                        hh = 2 * hh + bb
                else:
                    num = coef[v] * (psi[v] / ph)
                a += -num if b else num
        alpha[idx] = a

    base = -2.0 * e
    if not freeze_combiner:
        _comb_ons(ups, comb_ainv, phi, base, 1.0 / eta_c)
    inv_beta = 1.0 / beta
    for v in range(N):
        c = (base * coef[v]) * path[v]
        ons_rank1(node_w[v], node_ainv[v], c, xa, inv_beta)
    if update_separators:
        inv_eta = 1.0 / eta
        for i in range(S):
            c = base * alpha[i] * gates[i] * (1.0 - gates[i])
            if math.isfinite(c):
                ons_rank1(sep_w[i], sep_ainv[i], c, xa, inv_eta)
    return yhat, e, True

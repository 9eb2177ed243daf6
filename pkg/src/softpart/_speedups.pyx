# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; the numpy twin `_reference` defines the semantics.

Loop structure, accumulation order, and guards mirror `_reference` so the two
backends produce matching trajectories; keep any change in both files.
"""
from libc.math cimport exp, isfinite

cdef double EXP_CLAMP = 500.0
cdef double GATE_MIN = 1e-12
cdef double GATE_MAX = 1.0 - 1e-12
cdef double GATE_DIV_GUARD = 1e-6

cdef enum:
    MAX_DIM = 128     # parameter dimension per regressor/separator
    MAX_COMB = 680    # combination weights (677 prunings at depth 4)


cpdef double sigmoid(double z):
    cdef double p
    if z > EXP_CLAMP:
        z = EXP_CLAMP
    elif z < -EXP_CLAMP:
        z = -EXP_CLAMP
    p = 1.0 / (1.0 + exp(-z))
    if p < GATE_MIN:
        return GATE_MIN
    if p > GATE_MAX:
        return GATE_MAX
    return p


cdef inline double _dot(double[::1] a, double[::1] b, Py_ssize_t n) noexcept:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += a[i] * b[i]
    return s


cdef inline int _bitlen(long long v) noexcept:
    cdef int n = 0
    while v:
        v >>= 1
        n += 1
    return n


cdef void _ons_rank1(double[::1] w, double[:, ::1] ainv, double c,
                     double[::1] xa, double inv_step) noexcept:
    cdef Py_ssize_t n = xa.shape[0]
    cdef double g[MAX_DIM]
    cdef double ag[MAX_DIM]
    cdef double denom, s, v
    cdef Py_ssize_t i, j
    for i in range(n):
        g[i] = c * xa[i]
    denom = 1.0
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += ainv[i, j] * g[j]
        ag[i] = s
        denom += g[i] * s
    for i in range(n):
        for j in range(n):
            ainv[i, j] -= ag[i] * ag[j] / denom
    for i in range(n):
        for j in range(i + 1, n):
            v = (ainv[i, j] + ainv[j, i]) * 0.5
            ainv[i, j] = v
            ainv[j, i] = v
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += ainv[i, j] * g[j]
        w[i] -= inv_step * s


def ons_rank1(double[::1] w, double[:, ::1] ainv, double c,
              double[::1] xa, double inv_step):
    if xa.shape[0] > MAX_DIM:
        raise ValueError(f"parameter dimension {xa.shape[0]} exceeds {MAX_DIM}")
    _ons_rank1(w, ainv, c, xa, inv_step)


cdef void _comb_ons(double[::1] ups, double[:, ::1] ainv, double[::1] phi,
                    double base, double inv_step) noexcept:
    cdef Py_ssize_t m = ups.shape[0]
    cdef double g[MAX_COMB]
    cdef double ag[MAX_COMB]
    cdef double denom, s, v
    cdef Py_ssize_t i, j
    for i in range(m):
        g[i] = base * phi[i]
    denom = 1.0
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += ainv[i, j] * g[j]
        ag[i] = s
        denom += g[i] * s
    for i in range(m):
        for j in range(m):
            ainv[i, j] -= ag[i] * ag[j] / denom
    for i in range(m):
        for j in range(i + 1, m):
            v = (ainv[i, j] + ainv[j, i]) * 0.5
            ainv[i, j] = v
            ainv[j, i] = v
    for i in range(m):
        s = 0.0
        for j in range(m):
            s += ainv[i, j] * g[j]
        ups[i] -= inv_step * s


# ---------------------------------------------------------------------------
# Straight partitioning
# ---------------------------------------------------------------------------

cdef double _sp_forward(double[::1] xa, double[:, ::1] sep_w,
                        double[:, ::1] reg_w, double[::1] gates,
                        double[::1] est, double[::1] prod,
                        double[::1] psi) noexcept:
    cdef Py_ssize_t K = sep_w.shape[0]
    cdef Py_ssize_t R = reg_w.shape[0]
    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t i, j
    cdef int b
    cdef double w, yhat
    for i in range(K):
        gates[i] = sigmoid(_dot(sep_w[i], xa, n))
    yhat = 0.0
    for j in range(R):
        w = 1.0
        for i in range(K):
            b = (j >> (K - 1 - i)) & 1
            w *= gates[i] if b == 0 else 1.0 - gates[i]
        est[j] = _dot(reg_w[j], xa, n)
        prod[j] = w
        psi[j] = est[j] * w
        yhat += psi[j]
    return yhat


def sp_forward(double[::1] xa, double[:, ::1] sep_w, double[:, ::1] reg_w,
               double[::1] gates, double[::1] est, double[::1] prod,
               double[::1] psi):
    return _sp_forward(xa, sep_w, reg_w, gates, est, prod, psi)


def sp_step(double[::1] xa, double y, double[:, ::1] sep_w,
            double[:, :, ::1] sep_ainv, double[:, ::1] reg_w,
            double[:, :, ::1] reg_ainv, double beta, double eta,
            double[::1] gates, double[::1] est, double[::1] prod,
            double[::1] psi, double[::1] alpha, bint update_separators=True):
    cdef Py_ssize_t K = sep_w.shape[0]
    cdef Py_ssize_t R = reg_w.shape[0]
    cdef Py_ssize_t i, j, i2
    cdef int b, b2
    cdef double yhat, e, a, ph, num, base, inv_beta, inv_eta, c
    if xa.shape[0] > MAX_DIM:
        raise ValueError(f"parameter dimension {xa.shape[0]} exceeds {MAX_DIM}")
    yhat = _sp_forward(xa, sep_w, reg_w, gates, est, prod, psi)
    e = y - yhat
    if not isfinite(e):
        return yhat, e, False

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
        _ons_rank1(reg_w[j], reg_ainv[j], base * prod[j], xa, inv_beta)
    if update_separators:
        inv_eta = 1.0 / eta
        for i in range(K):
            c = base * alpha[i] * gates[i] * (1.0 - gates[i])
            if isfinite(c):
                _ons_rank1(sep_w[i], sep_ainv[i], c, xa, inv_eta)
    return yhat, e, True


# ---------------------------------------------------------------------------
# Finest-model partitioning
# ---------------------------------------------------------------------------

cdef double _fmp_forward(double[::1] xa, int depth, double[:, ::1] sep_w,
                         double[:, ::1] leaf_w, double[::1] gates,
                         double[::1] est, double[::1] gamma,
                         double[::1] psi) noexcept:
    cdef Py_ssize_t S = (1 << depth) - 1
    cdef Py_ssize_t L = 1 << depth
    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t i, j, h
    cdef int lvl, b
    cdef double w, yhat
    for i in range(S):
        gates[i] = sigmoid(_dot(sep_w[i], xa, n))
    yhat = 0.0
    for j in range(L):
        w = 1.0
        h = 1
        for lvl in range(depth):
            b = (j >> (depth - 1 - lvl)) & 1
            w *= gates[h - 1] if b == 0 else 1.0 - gates[h - 1]
            h = 2 * h + b
        est[j] = _dot(leaf_w[j], xa, n)
        gamma[j] = w
        psi[j] = est[j] * w
        yhat += psi[j]
    return yhat


def fmp_forward(double[::1] xa, int depth, double[:, ::1] sep_w,
                double[:, ::1] leaf_w, double[::1] gates, double[::1] est,
                double[::1] gamma, double[::1] psi):
    return _fmp_forward(xa, depth, sep_w, leaf_w, gates, est, gamma, psi)


cdef void _fmp_alpha(int depth, double[::1] gates, double[::1] est,
                     double[::1] psi, double[::1] alpha) noexcept:
    cdef Py_ssize_t S = (1 << depth) - 1
    cdef Py_ssize_t idx, h, hh, j
    cdef int lev, s, lvl, b, bb
    cdef long long suf
    cdef double a, ph, num
    for idx in range(S):
        h = idx + 1
        lev = _bitlen(h) - 1
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


def fmp_step(double[::1] xa, double y, int depth, double[:, ::1] sep_w,
             double[:, :, ::1] sep_ainv, double[:, ::1] leaf_w,
             double[:, :, ::1] leaf_ainv, double beta, double eta,
             double[::1] gates, double[::1] est, double[::1] gamma,
             double[::1] psi, double[::1] alpha, bint update_separators=True):
    cdef Py_ssize_t S = (1 << depth) - 1
    cdef Py_ssize_t L = 1 << depth
    cdef Py_ssize_t i, j
    cdef double yhat, e, base, inv_beta, inv_eta, c
    if xa.shape[0] > MAX_DIM:
        raise ValueError(f"parameter dimension {xa.shape[0]} exceeds {MAX_DIM}")
    yhat = _fmp_forward(xa, depth, sep_w, leaf_w, gates, est, gamma, psi)
    e = y - yhat
    if not isfinite(e):
        return yhat, e, False

    _fmp_alpha(depth, gates, est, psi, alpha)

    base = -2.0 * e
    inv_beta = 1.0 / beta
    for j in range(L):
        _ons_rank1(leaf_w[j], leaf_ainv[j], base * gamma[j], xa, inv_beta)
    if update_separators:
        inv_eta = 1.0 / eta
        for i in range(S):
            c = base * alpha[i] * gates[i] * (1.0 - gates[i])
            if isfinite(c):
                _ons_rank1(sep_w[i], sep_ainv[i], c, xa, inv_eta)
    return yhat, e, True


# ---------------------------------------------------------------------------
# All-subtree ensemble
# ---------------------------------------------------------------------------

cdef double _ens_forward(double[::1] xa, int depth, double[:, ::1] sep_w,
                         double[:, ::1] node_w, double[::1] ups,
                         long long[::1] members, long long[::1] offsets,
                         double[::1] gates, double[::1] est, double[::1] path,
                         double[::1] psi, double[::1] phi) noexcept:
    cdef Py_ssize_t S = (1 << depth) - 1
    cdef Py_ssize_t N = 2 * (1 << depth) - 1
    cdef Py_ssize_t M = ups.shape[0]
    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t i, v, h, lam, t
    cdef double p, acc, yhat
    for i in range(S):
        gates[i] = sigmoid(_dot(sep_w[i], xa, n))
    for v in range(N):
        est[v] = _dot(node_w[v], xa, n)
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


def ens_forward(double[::1] xa, int depth, double[:, ::1] sep_w,
                double[:, ::1] node_w, double[::1] ups,
                long long[::1] members, long long[::1] offsets,
                double[::1] gates, double[::1] est, double[::1] path,
                double[::1] psi, double[::1] phi):
    return _ens_forward(xa, depth, sep_w, node_w, ups, members, offsets,
                        gates, est, path, psi, phi)


def ens_step(double[::1] xa, double y, int depth, double[:, ::1] sep_w,
             double[:, :, ::1] sep_ainv, double[:, ::1] node_w,
             double[:, :, ::1] node_ainv, double[::1] ups,
             double[:, ::1] comb_ainv, long long[::1] members,
             long long[::1] offsets, double beta, double eta, double eta_c,
             double[::1] gates, double[::1] est, double[::1] path,
             double[::1] psi, double[::1] phi, double[::1] coef,
             double[::1] alpha, bint freeze_combiner=False,
             bint update_separators=True):
    cdef Py_ssize_t S = (1 << depth) - 1
    cdef Py_ssize_t N = 2 * (1 << depth) - 1
    cdef Py_ssize_t M = ups.shape[0]
    cdef Py_ssize_t idx, h, hh, v, lam, t, i
    cdef long long suf, hv
    cdef int lev, s, lvl, b, bb, ll
    cdef double yhat, e, u, a, ph, num, base, inv_beta, inv_eta, c
    if xa.shape[0] > MAX_DIM:
        raise ValueError(f"parameter dimension {xa.shape[0]} exceeds {MAX_DIM}")
    if M > MAX_COMB:
        raise ValueError(f"combination dimension {M} exceeds {MAX_COMB}")
    yhat = _ens_forward(xa, depth, sep_w, node_w, ups, members, offsets,
                        gates, est, path, psi, phi)
    e = y - yhat
    if not isfinite(e):
        return yhat, e, False

    for v in range(N):
        coef[v] = 0.0
    for lam in range(M):
        u = ups[lam]
        for t in range(offsets[lam], offsets[lam + 1]):
            coef[members[t]] += u

    for idx in range(S):
        h = idx + 1
        lev = _bitlen(h) - 1
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
                    ll = _bitlen(hv) - 1
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
        _ons_rank1(node_w[v], node_ainv[v], c, xa, inv_beta)
    if update_separators:
        inv_eta = 1.0 / eta
        for i in range(S):
            c = base * alpha[i] * gates[i] * (1.0 - gates[i])
            if isfinite(c):
                _ons_rank1(sep_w[i], sep_ainv[i], c, xa, inv_eta)
    return yhat, e, True

"""Fused kernels for the metric-flow right-hand side.

The flow spends its whole budget on RHS evaluations (4 per RK4 step, up to
~10^5 steps per run), so the per-site pipeline

    hinv -> h^{-1} del h -> dbar(h^{-1} del h) -> K -> -2 h (K - lambda)

is compiled with numba into two passes over the grid, parallelized over
grid rows.  Every write is pointwise (no cross-site reductions), so results
are bit-identical regardless of the thread count; YMH_THREADS caps the
worker pool.  A pure numpy fallback with identical semantics lives in
flow.py; the test suite checks the two agree to roundoff.
"""

import os
import numpy as np

try:
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:                                       # pragma: no cover
    HAVE_NUMBA = False
    prange = range

    def njit(*a, **k):
        def deco(f):
            return f
        return deco if not (a and callable(a[0])) else a[0]

if HAVE_NUMBA and os.environ.get("YMH_THREADS"):
    try:                                                  # pragma: no cover
        import numba
        numba.set_num_threads(max(1, int(os.environ["YMH_THREADS"])))
    except (ValueError, RuntimeError):
        pass


@njit(cache=True, inline="always", fastmath=True)
def _inv_site(h, jx, jy, scratch, out):
    """Gauss-Jordan inverse with partial pivoting of the R x R block at a site."""
    R = h.shape[2]
    for i in range(R):
        for j in range(R):
            scratch[i, j] = h[jx, jy, i, j]
            scratch[i, R + j] = 0.0
        scratch[i, R + i] = 1.0
    for col in range(R):
        piv, best = col, abs(scratch[col, col])
        for r in range(col + 1, R):
            m = abs(scratch[r, col])
            if m > best:
                piv, best = r, m
        if piv != col:
            for j in range(2 * R):
                tmp = scratch[col, j]
                scratch[col, j] = scratch[piv, j]
                scratch[piv, j] = tmp
        d = scratch[col, col]
        for j in range(2 * R):
            scratch[col, j] = scratch[col, j] / d
        for r in range(R):
            if r != col:
                f = scratch[r, col]
                if f != 0.0:
                    for j in range(2 * R):
                        scratch[r, j] = scratch[r, j] - f * scratch[col, j]
    for i in range(R):
        for j in range(R):
            out[jx, jy, i, j] = scratch[i, R + j]


@njit(cache=True, parallel=True, fastmath=True)
def _rhs(h, Wx, Wy, F0c, Phi, PhiDag, has_higgs, lam, a, hinv, p1, p2, out):
    """out = -2 h (K - lam), K the symmetrized curvature+bracket contraction."""
    n = h.shape[0]
    R = h.shape[2]

    # pass A: hinv, p1 = hinv @ del_fwd(h), p2 = hinv @ del_bwd(h)
    for jx in prange(n):
        scratch = np.empty((R, 2 * R), dtype=np.complex128)
        t1 = np.empty((R, R), dtype=np.complex128)
        t2 = np.empty((R, R), dtype=np.complex128)
        jxp = (jx + 1) % n
        jxm = (jx - 1) % n
        for jy in range(n):
            jyp = (jy + 1) % n
            jym = (jy - 1) % n
            _inv_site(h, jx, jy, scratch, hinv)
            for i in range(R):
                for j in range(R):
                    fwdx = (Wx[jx, jy, i, j] * h[jxp, jy, i, j] - h[jx, jy, i, j]) / a
                    fwdy = (Wy[jx, jy, i, j] * h[jx, jyp, i, j] - h[jx, jy, i, j]) / a
                    bwdx = (h[jx, jy, i, j]
                            - np.conj(Wx[jxm, jy, i, j]) * h[jxm, jy, i, j]) / a
                    bwdy = (h[jx, jy, i, j]
                            - np.conj(Wy[jx, jym, i, j]) * h[jx, jym, i, j]) / a
                    t1[i, j] = 0.5 * (fwdx - 1j * fwdy)
                    t2[i, j] = 0.5 * (bwdx - 1j * bwdy)
            for i in range(R):
                for j in range(R):
                    acc1 = 0.0 + 0.0j
                    acc2 = 0.0 + 0.0j
                    for k in range(R):
                        acc1 += hinv[jx, jy, i, k] * t1[k, j]
                        acc2 += hinv[jx, jy, i, k] * t2[k, j]
                    p1[jx, jy, i, j] = acc1
                    p2[jx, jy, i, j] = acc2

    # pass B: curvature coefficient, bracket, symmetrize, assemble rhs
    for jx in prange(n):
        K = np.empty((R, R), dtype=np.complex128)
        t1 = np.empty((R, R), dtype=np.complex128)
        t2 = np.empty((R, R), dtype=np.complex128)
        jxp = (jx + 1) % n
        jxm = (jx - 1) % n
        for jy in range(n):
            jyp = (jy + 1) % n
            jym = (jy - 1) % n
            for i in range(R):
                for j in range(R):
                    # dbar_bwd(p1) + dbar_fwd(p2), entrywise transport
                    bx = (p1[jx, jy, i, j]
                          - np.conj(Wx[jxm, jy, i, j]) * p1[jxm, jy, i, j]) / a
                    by = (p1[jx, jy, i, j]
                          - np.conj(Wy[jx, jym, i, j]) * p1[jx, jym, i, j]) / a
                    fx = (Wx[jx, jy, i, j] * p2[jxp, jy, i, j] - p2[jx, jy, i, j]) / a
                    fy = (Wy[jx, jy, i, j] * p2[jx, jyp, i, j] - p2[jx, jy, i, j]) / a
                    dbb = 0.5 * (bx + 1j * by)
                    dbf = 0.5 * (fx + 1j * fy)
                    # K = 2 (F0 - 0.5(dbar_bwd p1 + dbar_fwd p2))
                    K[i, j] = 2.0 * (F0c[jx, jy, i, j] - 0.5 * (dbb + dbf))
            if has_higgs:
                # t1 = hinv PhiDag h ; K += 2 [Phi, t1]
                for i in range(R):
                    for j in range(R):
                        acc = 0.0 + 0.0j
                        for k in range(R):
                            acc += PhiDag[jx, jy, i, k] * h[jx, jy, k, j]
                        t2[i, j] = acc
                for i in range(R):
                    for j in range(R):
                        acc = 0.0 + 0.0j
                        for k in range(R):
                            acc += hinv[jx, jy, i, k] * t2[k, j]
                        t1[i, j] = acc
                for i in range(R):
                    for j in range(R):
                        acc = 0.0 + 0.0j
                        for k in range(R):
                            acc += (Phi[jx, jy, i, k] * t1[k, j]
                                    - t1[i, k] * Phi[jx, jy, k, j])
                        K[i, j] += 2.0 * acc
            # symmetrize: K <- (K + hinv K^dag h)/2
            for i in range(R):
                for j in range(R):
                    acc = 0.0 + 0.0j
                    for k in range(R):
                        acc += np.conj(K[k, i]) * h[jx, jy, k, j]
                    t1[i, j] = acc
            for i in range(R):
                for j in range(R):
                    acc = 0.0 + 0.0j
                    for k in range(R):
                        acc += hinv[jx, jy, i, k] * t1[k, j]
                    t2[i, j] = 0.5 * (K[i, j] + acc)
            # out = -2 h (K - lam)
            for i in range(R):
                for j in range(R):
                    acc = 0.0 + 0.0j
                    for k in range(R):
                        acc += h[jx, jy, i, k] * t2[k, j]
                    out[jx, jy, i, j] = -2.0 * acc + 2.0 * lam * h[jx, jy, i, j]


@njit(cache=True, parallel=True, fastmath=True)
def _rk4_combine(h, k1, k2, k3, k4, dt, out):
    n = h.shape[0]
    R = h.shape[2]
    c = dt / 6.0
    for jx in prange(n):
        for jy in range(n):
            for i in range(R):
                for j in range(R):
                    out[jx, jy, i, j] = h[jx, jy, i, j] + c * (
                        k1[jx, jy, i, j] + 2.0 * k2[jx, jy, i, j]
                        + 2.0 * k3[jx, jy, i, j] + k4[jx, jy, i, j])


@njit(cache=True, parallel=True, fastmath=True)
def _axpy(h, k, c, out):
    n = h.shape[0]
    R = h.shape[2]
    for jx in prange(n):
        for jy in range(n):
            for i in range(R):
                for j in range(R):
                    out[jx, jy, i, j] = h[jx, jy, i, j] + c * k[jx, jy, i, j]


@njit(cache=True)
def _rehermitize_and_check(h):
    """h <- (h + h^dag)/2; return min over sites of the Sylvester minors
    (positive iff h is positive definite)."""
    n = h.shape[0]
    R = h.shape[2]
    worst = 1e300
    m = np.empty((R, R), dtype=np.complex128)
    for jx in range(n):
        for jy in range(n):
            for i in range(R):
                for j in range(i, R):
                    v = 0.5 * (h[jx, jy, i, j] + np.conj(h[jx, jy, j, i]))
                    h[jx, jy, i, j] = v
                    h[jx, jy, j, i] = np.conj(v)
            for i in range(R):
                for j in range(R):
                    m[i, j] = h[jx, jy, i, j]
            # leading principal minors by unpivoted elimination
            det = 1.0
            ok = True
            for col in range(R):
                piv = m[col, col].real
                det *= piv
                if det < worst:
                    worst = det
                if not (piv > 0.0):      # catches NaN as well
                    ok = False
                    break
                for r in range(col + 1, R):
                    f = m[r, col] / m[col, col]
                    for c2 in range(col, R):
                        m[r, c2] = m[r, c2] - f * m[col, c2]
            if not ok:
                return -1.0
    return worst

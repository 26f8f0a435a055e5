# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. ``_pykernels`` mirrors every function here.

Matrices are row-major float64; the inner routines work on raw pointers so
that one call into the module costs a handful of allocations at most.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libc.stdlib cimport malloc, free
from libc.string cimport memset
from libc.stdint cimport uint32_t, uint64_t
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal_fill

cnp.import_array()

cdef enum:
    STATUS_NOT_CONVERGED = -1
    STATUS_ZERO_VARIANCE = -2


# Layout of numpy's Philox state (numpy/random/src/philox/philox.h). The
# Python side checks draws against Generator.standard_normal before use.
cdef struct _philox_state:
    uint64_t* ctr
    uint64_t* key
    int buffer_pos
    uint64_t buffer[4]
    int has_uint32
    uint32_t uinteger


cdef inline double _soft(double z, double t) nogil:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


cdef inline double _coord(const double* G, const double* c, double lam,
                          double* beta, double* q, Py_ssize_t p, Py_ssize_t j) nogil:
    """Exact minimization along coordinate j; returns |change|.

    G is symmetric, so row j doubles as column j for the q update.
    """
    cdef Py_ssize_t k
    cdef const double* row = G + j * p
    cdef double gjj = row[j]
    cdef double new, delta
    if gjj <= 0.0:
        new = 0.0
    else:
        new = _soft(c[j] - q[j] + gjj * beta[j], lam) / gjj
    delta = new - beta[j]
    if delta != 0.0:
        beta[j] = new
        for k in range(p):
            q[k] += delta * row[k]
    return fabs(delta)


cdef int _cd(const double* G, const double* c, double lam, double* beta,
             double* q, Py_ssize_t* active, Py_ssize_t p, double tol,
             int max_sweeps) nogil:
    """Cyclic coordinate descent on the Gram form with active-set cycling.

    A full sweep is followed by sweeps over the nonzero coordinates until they
    settle; convergence is declared only after a full sweep whose largest
    coefficient change is below ``tol``. ``q`` must equal G @ beta on entry.
    Returns the number of (full or active) sweeps used, or -1.
    """
    cdef Py_ssize_t j, a, na
    cdef int sweeps = 0
    cdef double d, max_delta
    while sweeps < max_sweeps:
        max_delta = 0.0
        na = 0
        for j in range(p):
            d = _coord(G, c, lam, beta, q, p, j)
            if d > max_delta:
                max_delta = d
            if beta[j] != 0.0:
                active[na] = j
                na += 1
        sweeps += 1
        if max_delta < tol:
            return sweeps
        while sweeps < max_sweeps:
            max_delta = 0.0
            for a in range(na):
                d = _coord(G, c, lam, beta, q, p, active[a])
                if d > max_delta:
                    max_delta = d
            sweeps += 1
            if max_delta < tol:
                break
    return STATUS_NOT_CONVERGED


cdef void _matvec(const double* G, const double* beta, double* q, Py_ssize_t p) nogil:
    cdef Py_ssize_t j, k
    cdef double acc
    for k in range(p):
        acc = 0.0
        for j in range(p):
            acc += G[k * p + j] * beta[j]
        q[k] = acc


def lasso_cd_gram(G, c, double lam, beta0, double tol=1e-9, int max_sweeps=10000):
    """Minimize 0.5 b'Gb - c'b + lam |b|_1 from ``beta0`` (zeros if None).

    Returns ``(beta, sweeps)``; sweeps is -1 when ``max_sweeps`` ran out.
    """
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ga = np.ascontiguousarray(G, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ca = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t p = Ga.shape[0]
    cdef cnp.ndarray[double, ndim=1, mode="c"] beta = (
        np.zeros(p) if beta0 is None else np.array(beta0, dtype=np.float64, order="C"))
    if p == 0:
        return beta, 1
    cdef double* q = <double*>malloc(p * sizeof(double))
    cdef Py_ssize_t* active = <Py_ssize_t*>malloc(p * sizeof(Py_ssize_t))
    cdef int sweeps
    if q == NULL or active == NULL:
        free(q)
        free(active)
        raise MemoryError()
    with nogil:
        _matvec(&Ga[0, 0], &beta[0], q, p)
        sweeps = _cd(&Ga[0, 0], &ca[0], lam, &beta[0], q, active, p, tol, max_sweeps)
    free(q)
    free(active)
    return beta, sweeps


def lasso_path_gram(G, c, lams, double tol=1e-9, int max_sweeps=10000):
    """Warm-started solutions along ``lams`` (in the given order)."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ga = np.ascontiguousarray(G, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ca = np.ascontiguousarray(c, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] la = np.ascontiguousarray(lams, dtype=np.float64)
    cdef Py_ssize_t p = Ga.shape[0]
    cdef Py_ssize_t m = la.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.ndarray[double, ndim=2, mode="c"] coefs = np.zeros((m, p))
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] sweeps = np.ones(m, dtype=np.int64)
    if p == 0 or m == 0:
        return coefs, sweeps
    cdef double* work = <double*>malloc(2 * p * sizeof(double))
    cdef Py_ssize_t* active = <Py_ssize_t*>malloc(p * sizeof(Py_ssize_t))
    if work == NULL or active == NULL:
        free(work)
        free(active)
        raise MemoryError()
    cdef double* beta = work
    cdef double* q = work + p
    memset(work, 0, 2 * p * sizeof(double))
    with nogil:
        for i in range(m):
            sweeps[i] = _cd(&Ga[0, 0], &ca[0], la[i], beta, q, active, p, tol, max_sweeps)
            for j in range(p):
                coefs[i, j] = beta[j]
    free(work)
    free(active)
    return coefs, sweeps


cdef inline void _accumulate(const double* x, double yv, double sign, Py_ssize_t p,
                             double* S1, double* S2, double* Sxy, double* Sy) nogil:
    """Add (sign=+1) or remove (sign=-1) one row from running sums.

    S2 keeps the lower triangle only.
    """
    cdef Py_ssize_t j, k
    cdef double xj
    Sy[0] += sign * yv
    Sy[1] += sign * yv * yv
    for j in range(p):
        xj = sign * x[j]
        S1[j] += xj
        Sxy[j] += xj * yv
        for k in range(j + 1):
            S2[j * p + k] += xj * x[k]


cdef void _sweep(const double* xc, const double* yc, Py_ssize_t N, Py_ssize_t p,
                 Py_ssize_t L, double lam, double tol, int max_sweeps,
                 double* work, Py_ssize_t* active,
                 double* rmse_m, double* rmse_i, cnp.int64_t* status) nogil:
    cdef Py_ssize_t S = N - L + 1
    cdef Py_ssize_t n = N - L
    cdef double dn = <double>n
    cdef Py_ssize_t s, t, j, k, na
    cdef double ybar, pred, err, sse_m, sse_i, v, offset
    cdef double Ty[2]
    cdef double Wy[2]
    cdef double ysd, iysd
    cdef int sweeps
    cdef bint flat

    cdef double* T1 = work
    cdef double* T2 = T1 + p
    cdef double* Txy = T2 + p * p
    cdef double* W1 = Txy + p
    cdef double* W2 = W1 + p
    cdef double* Wxy = W2 + p * p
    cdef double* mean = Wxy + p
    cdef double* isd = mean + p
    cdef double* G = isd + p
    cdef double* c = G + p * p
    cdef double* beta = c + p
    cdef double* q = beta + p
    cdef double* w = q + p
    memset(work, 0, (10 * p + 3 * p * p) * sizeof(double))
    Ty[0] = Ty[1] = Wy[0] = Wy[1] = 0.0

    for t in range(N):
        _accumulate(xc + t * p, yc[t], 1.0, p, T1, T2, Txy, Ty)
    for t in range(L):
        _accumulate(xc + t * p, yc[t], 1.0, p, W1, W2, Wxy, Wy)

    for s in range(S):
        if s > 0:
            _accumulate(xc + (s - 1) * p, yc[s - 1], -1.0, p, W1, W2, Wxy, Wy)
            _accumulate(xc + (s + L - 1) * p, yc[s + L - 1], 1.0, p, W1, W2, Wxy, Wy)

        ybar = (Ty[0] - Wy[0]) / dn
        v = (Ty[1] - Wy[1]) - dn * ybar * ybar
        ysd = sqrt(v / (dn - 1.0)) if v > 1e-13 * Ty[1] else 0.0
        # lambda is on the scale of the standardized target; a flat target
        # leaves nothing to fit
        iysd = 1.0 / ysd if ysd > 0.0 else 0.0
        flat = False
        for j in range(p):
            mean[j] = (T1[j] - W1[j]) / dn
            v = (T2[j * p + j] - W2[j * p + j]) - dn * mean[j] * mean[j]
            if v <= 1e-13 * T2[j * p + j]:
                flat = True
            else:
                isd[j] = 1.0 / sqrt(v / (dn - 1.0))
        if flat:
            status[s] = STATUS_ZERO_VARIANCE
            continue
        for j in range(p):
            for k in range(j + 1):
                v = ((T2[j * p + k] - W2[j * p + k]) - dn * mean[j] * mean[k]) * (isd[j] * isd[k] / dn)
                G[j * p + k] = v
                G[k * p + j] = v
            c[j] = ((Txy[j] - Wxy[j]) - dn * mean[j] * ybar) * (isd[j] * iysd / dn)

        _matvec(G, beta, q, p)
        sweeps = _cd(G, c, lam, beta, q, active, p, tol, max_sweeps)
        status[s] = sweeps
        if sweeps < 0:
            memset(beta, 0, p * sizeof(double))
            continue

        # prediction weights in (shifted) raw units
        offset = ybar
        na = 0
        for j in range(p):
            if beta[j] != 0.0:
                w[na] = beta[j] * isd[j] * ysd
                active[na] = j
                offset -= w[na] * mean[j]
                na += 1
        sse_m = 0.0
        sse_i = 0.0
        for t in range(s, s + L):
            pred = offset
            for k in range(na):
                pred += w[k] * xc[t * p + active[k]]
            err = pred - yc[t]
            sse_m += err * err
            err = ybar - yc[t]
            sse_i += err * err
        rmse_m[s] = sqrt(sse_m / L)
        rmse_i[s] = sqrt(sse_i / L)


cdef void _center(double* x, double* y, Py_ssize_t N, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t t, j
    cdef double m = 0.0
    for t in range(N):
        m += y[t]
    m /= N
    for t in range(N):
        y[t] -= m
    for j in range(p):
        m = 0.0
        for t in range(N):
            m += x[t * p + j]
        m /= N
        for t in range(N):
            x[t * p + j] -= m


def lasso_holdout_sweep(X, y, int L, double lam, double tol=1e-9, int max_sweeps=10000):
    """Lasso fit on every complement of a contiguous ``L``-row window.

    Each calibration set is standardized (sd divisor n - 1) and the target
    centered on its own rows. Sums are slid along the series and the
    coefficient vector is warm-started from the previous window.
    Returns ``(rmse_model, rmse_intercept, status)``; status holds the
    sweep count, -1 for non-convergence or -2 for a zero-variance column.
    """
    # private copies, shifted by full-block means (covariances are shift-invariant)
    cdef cnp.ndarray[double, ndim=2, mode="c"] xc = np.array(X, dtype=np.float64, order="C", copy=True)
    cdef cnp.ndarray[double, ndim=1, mode="c"] yc = np.array(y, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t N = xc.shape[0]
    cdef Py_ssize_t p = xc.shape[1]
    if yc.shape[0] != N:
        raise ValueError("X and y lengths differ")
    if L < 1 or N - L < 2:
        raise ValueError("need at least two calibration rows")
    if p < 1:
        raise ValueError("need at least one predictor")
    _center(&xc[0, 0], &yc[0], N, p)
    cdef Py_ssize_t S = N - L + 1
    cdef cnp.ndarray[double, ndim=1, mode="c"] rmse_m = np.zeros(S)
    cdef cnp.ndarray[double, ndim=1, mode="c"] rmse_i = np.zeros(S)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] status = np.zeros(S, dtype=np.int64)
    cdef double* work = <double*>malloc((10 * p + 3 * p * p) * sizeof(double))
    cdef Py_ssize_t* active = <Py_ssize_t*>malloc(p * sizeof(Py_ssize_t))
    if work == NULL or active == NULL:
        free(work)
        free(active)
        raise MemoryError()
    with nogil:
        _sweep(&xc[0, 0], &yc[0], N, p, L, lam, tol, max_sweeps,
               work, active, &rmse_m[0], &rmse_i[0], &status[0])
    free(work)
    free(active)
    return rmse_m, rmse_i, status


def ar1_filter(z, phi):
    """Column-wise recursion x[t] = phi * x[t-1] + z[t], x[0] = z[0]."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] za = np.ascontiguousarray(z, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] pa = np.ascontiguousarray(phi, dtype=np.float64)
    cdef Py_ssize_t n = za.shape[0]
    cdef Py_ssize_t p = za.shape[1]
    cdef Py_ssize_t t, j
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, p))
    if n == 0 or p == 0:
        return out
    cdef double* zp = &za[0, 0]
    cdef double* op = &out[0, 0]
    cdef double* ph = &pa[0]
    with nogil:
        for j in range(p):
            op[j] = zp[j]
        for t in range(1, n):
            for j in range(p):
                op[t * p + j] = ph[j] * op[(t - 1) * p + j] + zp[t * p + j]
    return out


def philox_normals(bitgen, uint64_t trial_index, out):
    """Fill row j of the C-contiguous ``out`` with standard normals from the
    Philox substream whose counter starts at ``(0, 0, j, trial_index)``.

    ``bitgen`` is a ``numpy.random.Philox``; its key is left untouched. Draws
    match ``Generator.standard_normal`` on the same substream.
    """
    cdef cnp.ndarray[double, ndim=2, mode="c"] arr = out
    cdef Py_ssize_t p = arr.shape[0]
    cdef Py_ssize_t n = arr.shape[1]
    cdef Py_ssize_t j
    capsule = bitgen.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("not a numpy bit generator")
    cdef bitgen_t* rng = <bitgen_t*>PyCapsule_GetPointer(capsule, "BitGenerator")
    cdef _philox_state* st = <_philox_state*>rng.state
    if n == 0:
        return out
    with bitgen.lock, nogil:
        for j in range(p):
            st.ctr[0] = 0
            st.ctr[1] = 0
            st.ctr[2] = <uint64_t>j
            st.ctr[3] = trial_index
            st.buffer_pos = 4
            st.has_uint32 = 0
            st.uinteger = 0
            random_standard_normal_fill(rng, n, &arr[j, 0])
    return out


def standardize_rows(xt):
    """In place: each row of the C-contiguous ``xt`` to mean 0, sd 1 (divisor n - 1)."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] a = xt
    cdef Py_ssize_t p = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t i, t
    cdef double* r
    cdef double m, ss, d, inv
    if p == 0 or n == 0:
        return xt
    with nogil:
        for i in range(p):
            r = &a[i, 0]
            if n < 2:
                r[0] = 0.0
                continue
            m = 0.0
            for t in range(n):
                m += r[t]
            m /= n
            ss = 0.0
            for t in range(n):
                d = r[t] - m
                r[t] = d
                ss += d * d
            inv = 1.0 / sqrt(ss / (n - 1))
            for t in range(n):
                r[t] *= inv
    return xt

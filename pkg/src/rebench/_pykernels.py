"""Pure-Python/numpy twins of the compiled kernels in ``_ckernels.pyx``.

Same signatures, same algorithms, same status codes. Results agree with the
compiled versions to rounding, not bit-for-bit.
"""
import math

import numpy as np
from scipy.signal import lfilter

STATUS_NOT_CONVERGED = -1
STATUS_ZERO_VARIANCE = -2


def _coord(G, c, lam, beta, q, j):
    gjj = G[j, j]
    if gjj <= 0.0:
        new = 0.0
    else:
        rho = c[j] - q[j] + gjj * beta[j]
        if rho > lam:
            new = (rho - lam) / gjj
        elif rho < -lam:
            new = (rho + lam) / gjj
        else:
            new = 0.0
    delta = new - beta[j]
    if delta != 0.0:
        beta[j] = new
        q += delta * G[:, j]
    return abs(delta)


def _cd(G, c, lam, beta, q, tol, max_sweeps):
    p = G.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        max_delta = 0.0
        for j in range(p):
            max_delta = max(max_delta, _coord(G, c, lam, beta, q, j))
        active = np.flatnonzero(beta)
        sweeps += 1
        if max_delta < tol:
            return sweeps
        while sweeps < max_sweeps:
            max_delta = 0.0
            for j in active:
                max_delta = max(max_delta, _coord(G, c, lam, beta, q, j))
            sweeps += 1
            if max_delta < tol:
                break
    return STATUS_NOT_CONVERGED


def lasso_cd_gram(G, c, lam, beta0, tol=1e-9, max_sweeps=10000):
    G = np.ascontiguousarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    beta = np.zeros(G.shape[0]) if beta0 is None else np.array(beta0, dtype=float)
    q = G @ beta
    sweeps = _cd(G, c, float(lam), beta, q, tol, max_sweeps)
    return beta, sweeps


def lasso_path_gram(G, c, lams, tol=1e-9, max_sweeps=10000):
    G = np.ascontiguousarray(G, dtype=float)
    c = np.asarray(c, dtype=float)
    p = G.shape[0]
    coefs = np.zeros((len(lams), p))
    sweeps = np.zeros(len(lams), dtype=np.int64)
    beta = np.zeros(p)
    q = np.zeros(p)
    for i, lam in enumerate(lams):
        sweeps[i] = _cd(G, c, float(lam), beta, q, tol, max_sweeps)
        coefs[i] = beta
    return coefs, sweeps


def lasso_holdout_sweep(X, y, L, lam, tol=1e-9, max_sweeps=10000):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    N, p = X.shape
    S = N - L + 1
    n = N - L
    if S < 1 or n < 2:
        raise ValueError("need at least two calibration rows")
    xc = X - X.mean(axis=0)
    yc = y - y.mean()

    T1 = xc.sum(axis=0)
    T2 = xc.T @ xc
    Txy = xc.T @ yc
    Ty = yc.sum()
    Tyy = yc @ yc

    rmse_m = np.zeros(S)
    rmse_i = np.zeros(S)
    status = np.zeros(S, dtype=np.int64)
    beta = np.zeros(p)
    for s in range(S):
        win = slice(s, s + L)
        W1 = xc[win].sum(axis=0)
        W2 = xc[win].T @ xc[win]
        Wxy = xc[win].T @ yc[win]
        Wy = yc[win].sum()
        Wyy = yc[win] @ yc[win]

        ybar = (Ty - Wy) / n
        v = (Tyy - Wyy) - n * ybar * ybar
        ysd = math.sqrt(v / (n - 1)) if v > 1e-13 * Tyy else 0.0
        iysd = 1.0 / ysd if ysd > 0.0 else 0.0
        mean = (T1 - W1) / n
        var = np.diag(T2 - W2) - n * mean * mean
        if np.any(var <= 1e-13 * np.diag(T2)):
            status[s] = STATUS_ZERO_VARIANCE
            continue
        sd = np.sqrt(var / (n - 1))
        G = ((T2 - W2) - n * np.outer(mean, mean)) / (np.outer(sd, sd) * n)
        G = np.ascontiguousarray(np.tril(G) + np.tril(G, -1).T)
        c = ((Txy - Wxy) - n * mean * ybar) * (iysd / (sd * n))

        q = G @ beta
        sweeps = _cd(G, c, lam, beta, q, tol, max_sweeps)
        status[s] = sweeps
        if sweeps < 0:
            beta[:] = 0.0
            continue
        w = beta / sd * ysd
        pred = (ybar - w @ mean) + xc[win] @ w
        rmse_m[s] = math.sqrt(float(np.mean((pred - yc[win]) ** 2)))
        rmse_i[s] = math.sqrt(float(np.mean((ybar - yc[win]) ** 2)))
    return rmse_m, rmse_i, status


def ar1_filter(z, phi):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    for j in range(z.shape[1]):
        out[:, j] = lfilter([1.0], [1.0, -float(phi[j])], z[:, j])
    return out


def philox_normals(bitgen, trial_index, out):
    """Fill row j of ``out`` with standard normals from the Philox substream
    whose counter starts at ``(0, 0, j, trial_index)``."""
    gen = np.random.Generator(bitgen)
    st = bitgen.state
    for j in range(out.shape[0]):
        st["state"]["counter"][:] = (0, 0, j, trial_index)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        st["uinteger"] = 0
        bitgen.state = st
        out[j] = gen.standard_normal(out.shape[1])
    return out


def standardize_rows(xt):
    """In place: each row of ``xt`` to mean 0, sd 1 (divisor n - 1)."""
    if xt.shape[1] < 2:
        xt[:] = 0.0
        return xt
    xt -= xt.mean(axis=1, keepdims=True)
    xt /= xt.std(axis=1, ddof=1, keepdims=True)
    return xt

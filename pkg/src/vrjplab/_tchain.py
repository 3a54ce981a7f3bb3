"""Metropolis chain for the ``t``-marginal of the horospherical sigma models.

Both models share the form ``U(t) = B(t) + a sum_i t_i + c log det D(t)``
with ``B(t) = sum beta_ij (cosh(t_i - t_j) - 1) + sum h_i (cosh t_i - 1)``:
``a = 1, c = -1/2`` for H^{2|2} and ``a = -(n-1), c = (n-1)/2`` for H^n.

Moving ``t_i`` changes ``D`` by ``delta * U W U^T`` with
``delta = e^{t_i'} - e^{t_i}``, columns ``e_i - e_j`` (weight
``beta_ij e^{t_j}``) for each neighbour and ``e_i`` (weight ``h_i``) if
pinned. The chain keeps ``C = D^{-1}`` and ``log det D`` and updates both with
the matrix determinant lemma and Woodbury; a fresh Cholesky each sweep bounds
round-off drift.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

OK = 0
DIVERGED = 1
NOT_PD = 2


@nb.njit(cache=True)
def assemble_dense(indptr, indices, weights, h, t, D):
    n = t.shape[0]
    e = np.exp(t)
    for i in range(n):
        for j in range(n):
            D[i, j] = 0.0
    for i in range(n):
        D[i, i] = h[i] * e[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            w = weights[k] * e[i] * e[j]
            D[i, j] = -w
            D[i, i] += w


@nb.njit(cache=True)
def cholesky_logdet(D, L):
    """Lower Cholesky factor into ``L``; returns ``(log det, ok)``."""
    n = D.shape[0]
    logdet = 0.0
    for j in range(n):
        s = D[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return 0.0, False
        d = math.sqrt(s)
        L[j, j] = d
        logdet += 2.0 * math.log(d)
        for i in range(j + 1, n):
            v = D[i, j]
            for k in range(j):
                v -= L[i, k] * L[j, k]
            L[i, j] = v / d
        for i in range(j):
            L[i, j] = 0.0
    return logdet, True


@nb.njit(cache=True)
def bulk_energy(indptr, indices, weights, h, t):
    """``B(t)``."""
    n = t.shape[0]
    b = 0.0
    for i in range(n):
        b += h[i] * (math.cosh(t[i]) - 1.0)
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j > i:
                b += weights[k] * (math.cosh(t[i] - t[j]) - 1.0)
    return b


@nb.njit(cache=True)
def _refresh(indptr, indices, weights, h, t, D, L, C):
    assemble_dense(indptr, indices, weights, h, t, D)
    logdet, ok = cholesky_logdet(D, L)
    if not ok:
        return 0.0, False
    Linv = np.linalg.inv(L)
    C[:, :] = Linv.T @ Linv
    return logdet, True


@nb.njit(cache=True)
def run_chain(indptr, indices, weights, h, a, c, t0, sigma0, n_burn, n_keep, thin, n_batches,
              adapt_every, target, guard, seed):
    np.random.seed(seed)
    n = t0.shape[0]
    t = t0.copy()
    sigma = sigma0.copy()
    D = np.empty((n, n))
    L = np.empty((n, n))
    C = np.empty((n, n))
    logdet, ok = _refresh(indptr, indices, weights, h, t, D, L, C)
    n_sweeps = n_burn + n_keep * thin
    samples = np.empty((n_keep, n))
    G = np.zeros((n_batches, n, n))
    E2 = np.zeros((n_batches, n, n))
    diag = np.zeros((n_sweeps, 5))
    status = OK
    if not ok:
        return samples, G, E2, sigma, diag, NOT_PD, 0, 0.0
    per_batch = n_keep // n_batches
    bulk = bulk_energy(indptr, indices, weights, h, t)
    U = bulk + a * t.sum() + c * logdet
    acc_window = np.zeros(n)
    n_window = 0
    n_adapt = 0
    max_drift = 0.0
    kept = 0
    maxdeg = 0
    for i in range(n):
        maxdeg = max(maxdeg, indptr[i + 1] - indptr[i])
    cols = np.empty(maxdeg + 1, dtype=np.int64)
    wts = np.empty(maxdeg + 1)
    Gk = np.empty((maxdeg + 1, maxdeg + 1))
    CU = np.empty((n, maxdeg + 1))
    sweep = 0
    for sweep in range(n_sweeps):
        n_acc = 0
        for i in range(n):
            ti = t[i]
            tp = ti + sigma[i] * np.random.standard_normal()
            if abs(tp) > guard:
                continue
            dB = h[i] * (math.cosh(tp) - math.cosh(ti))
            k = 0
            for q in range(indptr[i], indptr[i + 1]):
                j = indices[q]
                dB += weights[q] * (math.cosh(tp - t[j]) - math.cosh(ti - t[j]))
                cols[k] = j
                wts[k] = weights[q] * math.exp(t[j])
                k += 1
            if h[i] > 0.0:
                cols[k] = -1
                wts[k] = h[i]
                k += 1
            delta = math.exp(tp) - math.exp(ti)
            # G = U^T C U for columns e_i - e_j (or e_i when j = -1)
            for p in range(k):
                jp = cols[p]
                for r in range(n):
                    CU[r, p] = C[r, i] - (C[r, jp] if jp >= 0 else 0.0)
            for p in range(k):
                jp = cols[p]
                for q in range(k):
                    v = CU[i, q]
                    if jp >= 0:
                        v -= CU[jp, q]
                    Gk[p, q] = v
            K = np.eye(k)
            for p in range(k):
                for q in range(k):
                    K[p, q] += delta * wts[p] * Gk[p, q]
            detK = np.linalg.det(K)
            if not detK > 0.0:
                continue
            dlog = math.log(detK)
            dU = dB + a * (tp - ti) + c * dlog
            if dU <= 0.0 or np.random.random() < math.exp(-dU):
                Wd = np.zeros((k, k))
                for p in range(k):
                    Wd[p, p] = delta * wts[p]
                M = np.linalg.solve(K, Wd)
                CUk = CU[:, :k].copy()
                C -= CUk @ M @ CUk.T
                t[i] = tp
                logdet += dlog
                U += dU
                n_acc += 1
                acc_window[i] += 1.0
                if abs(tp) > 0.95 * guard:
                    status = DIVERGED
        n_window += 1
        ld_tracked = logdet
        logdet, ok = _refresh(indptr, indices, weights, h, t, D, L, C)
        if not ok:
            return samples, G, E2, sigma, diag, NOT_PD, sweep, max_drift
        drift = abs(ld_tracked - logdet) / (1.0 + abs(logdet))
        if drift > max_drift:
            max_drift = drift
        bulk = bulk_energy(indptr, indices, weights, h, t)
        U = bulk + a * t.sum() + c * logdet
        diag[sweep, 0] = U
        diag[sweep, 1] = n_acc / n
        diag[sweep, 2] = t.min()
        diag[sweep, 3] = t.max()
        diag[sweep, 4] = t[0]
        if status != OK:
            return samples, G, E2, sigma, diag, status, sweep, max_drift
        if sweep < n_burn:
            if n_window == adapt_every:
                n_adapt += 1
                gain = 1.0 / math.sqrt(n_adapt)
                for r in range(n):
                    rate = acc_window[r] / n_window
                    s = sigma[r] * math.exp(gain * (rate - target))
                    sigma[r] = min(max(s, 1e-3), 20.0)
                    acc_window[r] = 0.0
                n_window = 0
        elif (sweep - n_burn + 1) % thin == 0:
            samples[kept] = t
            b = kept // per_batch
            if b >= n_batches:
                b = n_batches - 1
            e = np.exp(t)
            for r in range(n):
                for q in range(n):
                    ee = e[r] * e[q]
                    G[b, r, q] += ee * C[r, q]
                    E2[b, r, q] += ee
            kept += 1
    counts = np.full(n_batches, per_batch)
    counts[n_batches - 1] += n_keep - per_batch * n_batches
    for b in range(n_batches):
        G[b] /= counts[b]
        E2[b] /= counts[b]
    return samples, G, E2, sigma, diag, status, sweep, max_drift

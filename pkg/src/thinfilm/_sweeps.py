"""Jitted summation kernels shared by the velocity and field evaluators.

The O(N) path maintains running exponential sums anchored at the current
sweep position.  With gaps d_i = x_i - x_{i-1} >= 0 and E = exp(-d_i/alpha),

    A_i = E (A_{i-1} + w_{i-1})            sum of w_j exp(-(x_i-x_j)/alpha)
    B_i = E (B_{i-1} + d_i (A_{i-1} + w_{i-1}))
                                           sum of w_j (x_i-x_j) exp(...)

over j < i, and the mirrored pair (C, D) over j > i.  Every factor E lies
in (0, 1], so the recurrences never amplify and work for arbitrary particle
spans; this is why anchored sums are used instead of global prefix sums of
w_j exp(x_j/alpha), which overflow once the span exceeds ~700 alpha.

The O(N^2) reference evaluator accumulates with Neumaier-compensated
summation so that it is strictly more accurate than the sweep it certifies.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def particle_sums(x, w, alpha):
    """Anchored left/right exponential sums at the particle positions."""
    n = x.shape[0]
    A = np.zeros(n)
    B = np.zeros(n)
    C = np.zeros(n)
    D = np.zeros(n)
    for i in range(1, n):
        d = x[i] - x[i - 1]
        e = np.exp(-d / alpha)
        acc = A[i - 1] + w[i - 1]
        A[i] = e * acc
        B[i] = e * (B[i - 1] + d * acc)
    for i in range(n - 2, -1, -1):
        d = x[i + 1] - x[i]
        e = np.exp(-d / alpha)
        acc = C[i + 1] + w[i + 1]
        C[i] = e * acc
        D[i] = e * (D[i + 1] + d * acc)
    return A, B, C, D


@njit(cache=True)
def merged_sums(xp, wp, xq, alpha):
    """Anchored sums at arbitrary sorted evaluation points ``xq``.

    Returns (A, B, C, D, tie_w, tie_n) per evaluation point, where the
    left sums run over particles strictly below the point, the right sums
    strictly above, and ``tie_w``/``tie_n`` collect the weight and count of
    particles exactly at the point.
    """
    n_p = xp.shape[0]
    n_q = xq.shape[0]
    A = np.zeros(n_q)
    B = np.zeros(n_q)
    C = np.zeros(n_q)
    D = np.zeros(n_q)
    tie_w = np.zeros(n_q)
    tie_n = np.zeros(n_q, dtype=np.int64)

    # Left pass: the (a, b) pair is anchored at `anchor`; shifting the
    # anchor right by d multiplies through by exp(-d/alpha).
    a = 0.0
    b = 0.0
    anchor = 0.0
    j = 0
    for i in range(n_q):
        q = xq[i]
        while j < n_p and xp[j] < q:
            p = xp[j]
            if a != 0.0 or b != 0.0:
                e = np.exp(-(p - anchor) / alpha)
                b = e * (b + (p - anchor) * a)
                a = e * a
            anchor = p
            a += wp[j]
            j += 1
        if a != 0.0 or b != 0.0:
            e = np.exp(-(q - anchor) / alpha)
            b = e * (b + (q - anchor) * a)
            a = e * a
        anchor = q
        A[i] = a
        B[i] = b
        while j < n_p and xp[j] == q:
            tie_w[i] += wp[j]
            tie_n[i] += 1
            a += wp[j]
            j += 1

    c = 0.0
    d = 0.0
    anchor = 0.0
    j = n_p - 1
    for i in range(n_q - 1, -1, -1):
        q = xq[i]
        while j >= 0 and xp[j] > q:
            p = xp[j]
            if c != 0.0 or d != 0.0:
                e = np.exp(-(anchor - p) / alpha)
                d = e * (d + (anchor - p) * c)
                c = e * c
            anchor = p
            c += wp[j]
            j -= 1
        if c != 0.0 or d != 0.0:
            e = np.exp(-(anchor - q) / alpha)
            d = e * (d + (anchor - q) * c)
            c = e * c
        anchor = q
        C[i] = c
        D[i] = d
        while j >= 0 and xp[j] == q:
            c += wp[j]
            j -= 1

    return A, B, C, D, tie_w, tie_n


@njit(cache=True)
def direct_sums(x, w, alpha):
    """O(N^2) kernel and third-derivative sums, Neumaier-compensated."""
    n = x.shape[0]
    hbar = np.empty(n)
    k3 = np.empty(n)
    c0 = 1.0 / (4.0 * alpha * alpha)
    ia2 = 1.0 / (alpha * alpha)
    ia3 = ia2 / alpha
    for i in range(n):
        s_h = 0.0
        e_h = 0.0
        s_3 = 0.0
        e_3 = 0.0
        for j in range(n):
            dx = x[i] - x[j]
            ad = abs(dx)
            ex = np.exp(-ad / alpha)
            term = w[j] * c0 * (alpha + ad) * ex
            t = s_h + term
            if abs(s_h) >= abs(term):
                e_h += (s_h - t) + term
            else:
                e_h += (term - t) + s_h
            s_h = t
            if j != i:
                sgn = 1.0 if dx > 0.0 else -1.0
                term3 = w[j] * c0 * (2.0 * sgn * ia2 - dx * ia3) * ex
                t = s_3 + term3
                if abs(s_3) >= abs(term3):
                    e_3 += (s_3 - t) + term3
                else:
                    e_3 += (term3 - t) + s_3
                s_3 = t
        hbar[i] = s_h + e_h
        k3[i] = s_3 + e_3
    return hbar, k3

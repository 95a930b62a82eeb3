"""Self-contained dense primal simplex for small linear programs.

Solves ``max c.x  s.t.  A x <= b, x >= 0`` with ``b >= 0``, which is the
shape of every LP behind the bounded-Lipschitz distance (the slack basis is
then immediately feasible, so no phase-one is needed).  Intended for up to
a couple of thousand variables; the tableau is kept dense and each pivot is
one rank-one numpy update.

These LPs are heavily degenerate at the origin (most right-hand sides are
zero), so the ratio tests run against a lexicographically perturbed copy of
the right-hand side, which breaks ties and avoids stalling; the reported
value is read from the unperturbed column, so the perturbation never leaks
into the result (a basis with nonnegative reduced costs is optimal for any
right-hand side it is feasible for).

Pivoting is deterministic: entering column by most negative reduced cost
with ties broken by lowest index, leaving row by minimum perturbed ratio
with ties broken by lowest row index.  If an instance still exceeds an
iteration budget, the rule degrades to Bland's (lowest eligible index),
which cannot cycle.
"""

from __future__ import annotations

import numpy as np

__all__ = ["simplex_maximize", "SimplexError"]


class SimplexError(RuntimeError):
    """Raised when the LP is unbounded or fails to converge."""


def simplex_maximize(c, A, b, *, tol: float = 1e-9, piv_tol: float = 1e-11):
    """Return ``(value, x)`` maximizing ``c.x`` over ``A x <= b, x >= 0``.

    Requires ``b >= 0`` componentwise.  ``tol`` is the optimality threshold
    on reduced costs; ``piv_tol`` guards against pivoting on numerically
    zero entries.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    if np.any(b < 0.0):
        raise ValueError("simplex_maximize requires b >= 0 (slack-feasible form)")

    # Tableau: [A | I | b_perturbed | b] with the negated objective in the
    # last row.  Column -2 drives the ratio tests, column -1 the value.
    scale = max(1.0, float(np.max(b)))
    T = np.zeros((m + 1, n + m + 2))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -2] = b + 1e-11 * scale * (1.0 + np.arange(m)) / m
    T[:m, -1] = b
    T[m, :n] = -c
    basis = np.arange(n, n + m)

    ncols = n + m
    bland_after = 20 * (m + n)
    max_iter = 200 * (m + n) + 1000
    for it in range(max_iter):
        red = T[m, :ncols]
        if it < bland_after:
            e = int(np.argmin(red))
            if red[e] >= -tol:
                break
        else:
            elig = np.nonzero(red < -tol)[0]
            if elig.size == 0:
                break
            e = int(elig[0])
        col = T[:m, e]
        pos = col > piv_tol
        if not np.any(pos):
            raise SimplexError("LP is unbounded along column %d" % e)
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -2][pos] / col[pos]
        r = int(np.argmin(ratios))  # argmin takes the lowest tied index
        piv_row = T[r] / T[r, e]
        T -= np.outer(T[:, e], piv_row)
        T[r] = piv_row
        basis[r] = e
    else:
        raise SimplexError("simplex did not converge within iteration budget")

    x = np.zeros(n + m)
    x[basis] = T[:m, -1]
    return float(T[m, -1]), x[:n]

"""Exact positive measures, their grid discretizations and metrics.

An initial condition is a positive Radon measure on the line with total
mass in (0, 1], represented exactly as point atoms plus piecewise
polynomial densities of degree at most three.  That class is closed under
everything the solver needs: interval masses are polynomial antiderivative
differences, so the weights of a grid discretization are exact and carry no
quadrature error into convergence studies.

The discretization follows the half-open-cell rule: a grid point absorbs
the measure of the cell extending to the next grid point (to +infinity for
the last point).  Grid families are dyadic refinements of a fixed window,
augmented with the atom positions; for a fixed window the family is nested,
exactly, in floating point.

Masses with total weight above one are rejected rather than rescaled:
rescaling would silently change every envelope constant downstream.

Also provided: the gap pseudometric ``gamma`` and atom quantity ``lambda_``
entering the two-sided gap envelopes, and the bounded-Lipschitz (Dudley)
distance between discrete measures, computed exactly as a small LP over
piecewise-linear test functions (see :func:`bl_distance`).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import KernelConstants
from .simplex import simplex_maximize

__all__ = [
    "DensityPiece",
    "InitialMeasure",
    "DiscreteMeasure",
    "interval_mass",
    "gamma",
    "lambda_",
    "build_grid",
    "discretize",
    "bl_distance",
    "droplet_parabola",
]

_MASS_SLACK = 1e-12  # allowed float overshoot of the unit total-mass budget


@dataclass(frozen=True)
class DensityPiece:
    """Polynomial density ``c0 + c1 x + c2 x^2 + c3 x^3`` on ``[a, b]``.

    The polynomial must be nonnegative on the interval; this is verified at
    construction by evaluating the endpoints, the real critical points
    inside the interval, and a coarse sample.
    """

    a: float
    b: float
    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        cs = tuple(float(v) for v in self.coeffs)
        if not cs or len(cs) > 4:
            raise ValueError("density coeffs must have 1 to 4 entries (degree <= 3)")
        object.__setattr__(self, "coeffs", cs)
        if not (self.a < self.b):
            raise ValueError(f"density piece needs a < b, got [{self.a}, {self.b}]")
        self._check_nonnegative()

    def _check_nonnegative(self):
        pts = [self.a, self.b]
        deriv = np.polynomial.polynomial.polyder(self.coeffs)
        if len(deriv) > 1 or (len(deriv) == 1 and deriv[0] != 0.0):
            for r in np.polynomial.polynomial.polyroots(deriv):
                if abs(r.imag) < 1e-12 and self.a <= r.real <= self.b:
                    pts.append(float(r.real))
        pts.extend(np.linspace(self.a, self.b, 65))
        vals = self(np.asarray(pts))
        scale = max(1.0, float(np.max(np.abs(vals))))
        if float(np.min(vals)) < -1e-12 * scale:
            raise ValueError(
                f"density piece on [{self.a}, {self.b}] is negative "
                f"(min {float(np.min(vals)):.3e})")

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(np.asarray(x, float), self.coeffs)

    def mass(self, lo: float, hi: float) -> float:
        """Exact integral of the density over ``[lo, hi] ∩ [a, b]``."""
        lo = max(lo, self.a)
        hi = min(hi, self.b)
        if lo >= hi:
            return 0.0
        anti = np.polynomial.polynomial.polyint(self.coeffs)
        val = np.polynomial.polynomial.polyval([hi, lo], anti)
        return float(val[0] - val[1])


@dataclass(frozen=True)
class InitialMeasure:
    """Positive measure: atoms plus piecewise-polynomial density.

    ``atoms`` is a sequence of (position, mass) with strictly increasing
    positions and nonnegative masses; ``pieces`` a sequence of disjoint
    :class:`DensityPiece` sorted by interval.  Total mass must lie in
    (0, 1].
    """

    atoms: tuple[tuple[float, float], ...] = ()
    pieces: tuple[DensityPiece, ...] = ()

    def __post_init__(self):
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        pieces = tuple(p if isinstance(p, DensityPiece) else DensityPiece(*p)
                       for p in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        xs = [x for x, _ in atoms]
        if any(x2 <= x1 for x1, x2 in zip(xs, xs[1:])):
            raise ValueError("atom positions must be strictly increasing")
        if any(w < 0.0 for _, w in atoms):
            raise ValueError("atom masses must be nonnegative")
        for p1, p2 in zip(pieces, pieces[1:]):
            if p2.a < p1.b:
                raise ValueError("density pieces must be sorted and disjoint")
        w = self.total_mass
        if not (w > 0.0):
            raise ValueError("measure must be nonzero")
        if w > 1.0 + _MASS_SLACK:
            raise ValueError(
                f"total mass {w} exceeds 1; rescale the input instead "
                "(implicit rescaling would change the envelope constants)")

    @property
    def total_mass(self) -> float:
        return (sum(w for _, w in self.atoms)
                + sum(p.mass(p.a, p.b) for p in self.pieces))

    @property
    def support_min(self) -> float:
        lo = math.inf
        for x, w in self.atoms:
            if w > 0.0:
                lo = min(lo, x)
        for p in self.pieces:
            lo = min(lo, p.a)
        if lo is math.inf:
            raise ValueError("measure has empty support")
        return lo

    @property
    def support_max(self) -> float:
        hi = -math.inf
        for x, w in self.atoms:
            if w > 0.0:
                hi = max(hi, x)
        for p in self.pieces:
            hi = max(hi, p.b)
        return hi

    @property
    def atom_positions(self) -> tuple[float, ...]:
        return tuple(x for x, w in self.atoms if w > 0.0)

    def point_mass(self, x: float) -> float:
        x = float(x)
        for ax, w in self.atoms:
            if ax == x:
                return w
        return 0.0

    def interval_mass(self, lo: float, hi: float,
                      lo_closed: bool = True, hi_closed: bool = False) -> float:
        """Exact measure of an interval with explicit endpoint inclusion.

        ``hi`` may be ``math.inf``.  Densities carry no point masses, so
        endpoint closedness only affects atoms.
        """
        lo = float(lo)
        hi = float(hi)
        if lo > hi:
            raise ValueError(f"interval endpoints out of order: {lo} > {hi}")
        if lo == hi:
            # [x, x] is the singleton; any half-open degenerate interval is empty
            return self.point_mass(lo) if (lo_closed and hi_closed) else 0.0
        total = 0.0
        for x, w in self.atoms:
            if (lo < x < hi) or (x == lo and lo_closed) \
                    or (x == hi and hi_closed):
                total += w
        for p in self.pieces:
            total += p.mass(lo, hi)
        return total

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "atoms": [{"x": x, "w": w} for x, w in self.atoms],
            "density_pieces": [
                {"a": p.a, "b": p.b, "coeffs": list(p.coeffs)}
                for p in self.pieces
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InitialMeasure":
        if not isinstance(data, dict):
            raise ValueError("measure document must be a mapping")
        unknown = set(data) - {"atoms", "density_pieces"}
        if unknown:
            raise ValueError(f"unknown measure key: {sorted(unknown)[0]!r}")
        atoms = []
        for i, entry in enumerate(data.get("atoms", []) or []):
            try:
                atoms.append((float(entry["x"]), float(entry["w"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"bad entry in key 'atoms'[{i}]: {exc}") from exc
        pieces = []
        for i, entry in enumerate(data.get("density_pieces", []) or []):
            try:
                pieces.append(DensityPiece(float(entry["a"]), float(entry["b"]),
                                           tuple(float(c) for c in entry["coeffs"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(
                    f"bad entry in key 'density_pieces'[{i}]: {exc}") from exc
        return cls(tuple(atoms), tuple(pieces))

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "InitialMeasure":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def droplet_parabola(center: float = 0.0, half_width: float = 1.0,
                     mass: float = 1.0) -> InitialMeasure:
    """Parabolic droplet profile ``max(0, A - B (x-c)^2)`` normalized to ``mass``."""
    if half_width <= 0.0 or mass <= 0.0:
        raise ValueError("half_width and mass must be positive")
    c = 3.0 * mass / (4.0 * half_width)
    h2 = half_width ** 2
    coeffs = (c * (1.0 - center ** 2 / h2),
              2.0 * c * center / h2,
              -c / h2)
    return InitialMeasure(pieces=(DensityPiece(center - half_width,
                                               center + half_width, coeffs),))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finite weighted sum of point masses on strictly increasing positions.

    Zero weights are allowed (and kept: such points are transported as
    tracer particles); at least one weight must be positive and the total
    must not exceed one.
    """

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=float)
        w = np.ascontiguousarray(self.weights, dtype=float)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", w)
        if pos.ndim != 1 or w.shape != pos.shape or pos.size == 0:
            raise ValueError("positions and weights must be matching 1-d arrays")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if np.any(np.diff(pos) <= 0.0):
            raise ValueError("positions must be strictly increasing")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        if not np.any(w > 0.0):
            raise ValueError("at least one weight must be positive")
        if float(np.sum(w)) > 1.0 + _MASS_SLACK:
            raise ValueError(f"total mass {float(np.sum(w))} exceeds 1")

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return int(self.positions.size)


def interval_mass(mu: InitialMeasure, lo: float, hi: float,
                  lo_closed: bool = True, hi_closed: bool = False) -> float:
    """Module-level alias for :meth:`InitialMeasure.interval_mass`."""
    return mu.interval_mass(lo, hi, lo_closed, hi_closed)


def gamma(mu: InitialMeasure, x: float, y: float, kc: KernelConstants) -> float:
    """Gap pseudometric ``k_inf^2 k3_inf (mu[x,y) + mu(x,y])`` (symmetrized).

    Controls the exponential upper envelope on the gap between the
    transported images of x and y.  Nonnegative, symmetric, and additive
    over ordered triples, hence a pseudometric.
    """
    if y < x:
        x, y = y, x
    return kc.speed_bound * (mu.interval_mass(x, y, True, False)
                             + mu.interval_mass(x, y, False, True))


def lambda_(mu: InitialMeasure, x: float, y: float, kc: KernelConstants) -> float:
    """Atom quantity ``k_inf^2 k3_inf max(mu({x})^3, mu({y})^3)``.

    Positive only when one endpoint is an atom; drives the lower gap
    envelope, i.e. the guaranteed opening rate between atoms.
    """
    return kc.speed_bound * max(mu.point_mass(x) ** 3, mu.point_mass(y) ** 3)


def build_grid(mu: InitialMeasure, n: int, window: tuple[float, float]) -> np.ndarray:
    """Level-``n`` dyadic grid on ``window`` plus the atom positions of mu.

    The window must cover the measure's support (so the leftmost grid point
    lies at or below it and the resulting discretization keeps the full
    mass).  For a fixed window the grids are nested across levels: level n
    points are exactly reproduced at level n+1 in floating point, because
    the step halves by an exact power of two.
    """
    n = int(n)
    if n < 1:
        raise ValueError("grid level n must be >= 1")
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"window must satisfy lo < hi, got ({lo}, {hi})")
    if lo > mu.support_min or hi < mu.support_max:
        raise ValueError(
            f"window ({lo}, {hi}) does not cover the measure support "
            f"[{mu.support_min}, {mu.support_max}]")
    step = (hi - lo) / 2 ** n
    pts = lo + step * np.arange(2 ** n + 1)
    pts = np.concatenate([pts, np.asarray(mu.atom_positions, dtype=float)])
    return np.unique(pts)


def discretize(mu: InitialMeasure, grid) -> DiscreteMeasure:
    """Collapse ``mu`` onto ``grid`` by the half-open-cell rule.

    Grid point x receives ``mu[x, x')`` for the next grid point x', and the
    last point receives ``mu[x, inf)``; total mass is preserved exactly.
    Zero-weight grid points are kept as tracers.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-d array")
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing")
    if grid[0] > mu.support_min:
        raise ValueError(
            f"min(grid) = {grid[0]} must not exceed min support {mu.support_min}")
    w = np.empty(grid.size)
    for k in range(grid.size - 1):
        w[k] = mu.interval_mass(grid[k], grid[k + 1], True, False)
    w[-1] = mu.interval_mass(grid[-1], math.inf, True, True)
    return DiscreteMeasure(grid, w)


def bl_distance(a: DiscreteMeasure, b: DiscreteMeasure, *, tol: float = 1e-9) -> float:
    """Bounded-Lipschitz (Dudley) distance between two discrete measures.

    Computes ``sup { integral f d(a-b) : ||f||_inf + Lip(f) <= 1 }``
    exactly: the optimum is attained by a piecewise-linear f with
    breakpoints at the union of the supports, so the sup reduces to an LP
    in the breakpoint values f_k, a sup-norm budget and a slope budget.
    The LP is solved by the built-in dense simplex to ``tol``.
    """
    if not isinstance(a, DiscreteMeasure) or not isinstance(b, DiscreteMeasure):
        raise TypeError("bl_distance expects DiscreteMeasure operands")
    pos = np.concatenate([a.positions, b.positions])
    net = np.concatenate([a.weights, -b.weights])
    order = np.argsort(pos, kind="stable")
    pos, net = pos[order], net[order]
    upos, inv = np.unique(pos, return_inverse=True)
    nu = np.zeros(upos.size)
    np.add.at(nu, inv, net)
    if not np.any(nu != 0.0):
        return 0.0
    m = upos.size

    # Variables [g_1..g_m, s, l]: f_k = g_k - s with 0 <= g_k <= 2s,
    # |f_{k+1} - f_k| <= l * gap_k, s + l <= 1.
    nvar = m + 2
    rows = m + 2 * (m - 1) + 1
    A = np.zeros((rows, nvar))
    rhs = np.zeros(rows)
    r = 0
    for k in range(m):
        A[r, k] = 1.0
        A[r, m] = -2.0
        r += 1
    for k in range(m - 1):
        gap = upos[k + 1] - upos[k]
        A[r, k + 1] = 1.0
        A[r, k] = -1.0
        A[r, m + 1] = -gap
        r += 1
        A[r, k + 1] = -1.0
        A[r, k] = 1.0
        A[r, m + 1] = -gap
        r += 1
    A[r, m] = 1.0
    A[r, m + 1] = 1.0
    rhs[r] = 1.0

    c = np.zeros(nvar)
    c[:m] = nu
    c[m] = -float(np.sum(nu))
    value, _ = simplex_maximize(c, A, rhs, tol=tol)
    return max(0.0, value)

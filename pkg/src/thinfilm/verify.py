"""End-to-end verification experiments for the particle solver.

Three experiment families live here:

* the weak-form residual of a trajectory against smooth compactly
  supported space-time test functions, evaluated in the reduced particle
  form T1 + T2 + T3 (initial term, time-derivative term, transport term);
  it vanishes for exact solutions, so its magnitude and its decay under
  refinement measure solver consistency;
* the splitting experiment: a symmetric pair of atoms at +-1/n opens up at
  a rate bounded below by an n-independent envelope, exhibiting the
  non-trivial solution family whose limit starts from a single atom while
  the stationary single-atom solution also exists;
* measure-discretization convergence: dyadic refinements of a diffuse
  initial measure produce trajectories whose time-t snapshots form a
  Cauchy family in the bounded-Lipschitz metric, with a uniform
  time-Lipschitz bound.

``run_verification`` strings every check into one report for the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynamics, fields, kernel
from .integrator import Trajectory, envelope_check, simulate
from .measure import (DiscreteMeasure, InitialMeasure, bl_distance,
                      build_grid, discretize, droplet_parabola)
from .report import CheckResult, VerificationReport

__all__ = ["BumpTestFunction", "weak_residual", "weak_residual_refinement",
           "splitting_experiment", "convergence_study", "run_verification"]


# ---------------------------------------------------------------------------
# test functions


def _bump(u):
    """exp(-1/(1-u^2)) inside |u| < 1, zero outside; smooth everywhere."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


def _bump_d1(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    q = 1.0 - ui * ui
    out[inside] = np.exp(-1.0 / q) * (-2.0 * ui / q ** 2)
    return out


def _bump_d2(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    q = 1.0 - ui * ui
    g = -2.0 * ui / q ** 2
    gp = -2.0 / q ** 2 - 8.0 * ui * ui / q ** 3
    out[inside] = np.exp(-1.0 / q) * (g * g + gp)
    return out


@dataclass(frozen=True)
class BumpTestFunction:
    """Tensor-product smooth bump ``phi(x, t)`` with analytic derivatives.

    phi(x,t) = bump((x - x_center)/x_radius) * bump((t - t_center)/t_radius)

    The support is the product of the open intervals of radius r around the
    centers.  The time support may touch t = 0 (then the initial term of
    the weak form is active) but must not extend beyond the trajectory.
    """

    x_center: float
    t_center: float
    x_radius: float
    t_radius: float

    def __post_init__(self):
        if self.x_radius <= 0.0 or self.t_radius <= 0.0:
            raise ValueError("test function radii must be positive")

    @property
    def t_support(self):
        return (max(0.0, self.t_center - self.t_radius),
                self.t_center + self.t_radius)

    def value(self, x, t):
        return _bump((np.asarray(x, float) - self.x_center) / self.x_radius) \
            * _bump((t - self.t_center) / self.t_radius)

    def dt(self, x, t):
        return _bump((np.asarray(x, float) - self.x_center) / self.x_radius) \
            * _bump_d1((t - self.t_center) / self.t_radius) / self.t_radius

    def dx(self, x, t):
        return _bump_d1((np.asarray(x, float) - self.x_center) / self.x_radius) \
            / self.x_radius * _bump((t - self.t_center) / self.t_radius)

    def dxx(self, x, t):
        return _bump_d2((np.asarray(x, float) - self.x_center) / self.x_radius) \
            / self.x_radius ** 2 * _bump((t - self.t_center) / self.t_radius)


# ---------------------------------------------------------------------------
# weak-form residual


def weak_residual(traj: Trajectory, phi: BumpTestFunction, *,
                  panels_per_step: int = 1, gl_nodes: int = 5) -> float:
    """Residual T1 + T2 + T3 of the weak form along a trajectory.

    T1 is the initial term ``sum_i w_i phi(x_i(0), 0)``; T2 integrates
    ``sum_i w_i phi_t(x_i(t), t)`` in time; T3 integrates
    ``sum_i w_i v_i(t) phi_x(x_i(t), t)`` where v_i is the velocity field
    evaluated at the dense-output positions (not the interpolant slope, so
    the residual measures the true ODE defect).  Time integrals use
    Gauss-Legendre panels aligned with the integrator's own accepted
    steps, which keeps the integrand smooth within each panel.
    """
    lo, hi = phi.t_support
    if hi > traj.times[-1] + 1e-12:
        raise ValueError(
            f"test function time support [{lo}, {hi}] exceeds the "
            f"trajectory range [0, {traj.times[-1]}]")
    w = traj.weights
    t1 = float(np.sum(w * phi.value(traj.positions[0], 0.0)))

    gx, gw = np.polynomial.legendre.leggauss(gl_nodes)
    t2 = 0.0
    t3 = 0.0
    times = traj.times
    for k in range(times.size - 1):
        a, b = float(times[k]), float(times[k + 1])
        if b <= lo or a >= hi:
            continue
        edges = np.linspace(a, b, panels_per_step + 1)
        for pa, pb in zip(edges[:-1], edges[1:]):
            half = 0.5 * (pb - pa)
            mid = 0.5 * (pa + pb)
            for node, wt in zip(gx, gw):
                tq = mid + half * node
                st = traj.state_at(tq)
                v = dynamics.velocity_fast(st.positions, w, traj.kc).velocities
                t2 += half * wt * float(np.sum(w * phi.dt(st.positions, tq)))
                t3 += half * wt * float(
                    np.sum(w * v * phi.dx(st.positions, tq)))
    return t1 + t2 + t3


def weak_residual_refinement(initial: DiscreteMeasure, t_final: float,
                             kc, phis, *, tol0: float = 1e-6,
                             tol_factor: float = 0.1, levels: int = 5,
                             panels0: int = 1, floor: float = 1e-10):
    """Residual magnitudes across refinement levels.

    Level L runs the trajectory at ``tol0 * tol_factor**L`` and doubles the
    quadrature panels per step; returns the per-level max residual over the
    given test functions.  Refinement stops early once the floor is hit.
    """
    out = []
    for lvl in range(levels):
        tol = tol0 * tol_factor ** lvl
        if tol < 1e-12:
            break
        panels = panels0 * 2 ** lvl
        traj = simulate(initial, t_final, tol, kc,
                        sample_times=np.linspace(0.0, t_final, 9))
        res = max(abs(weak_residual(traj, phi, panels_per_step=panels))
                  for phi in phis)
        out.append((tol, panels, res))
        if res < floor:
            break
    return out


# ---------------------------------------------------------------------------
# splitting experiment


def splitting_experiment(n_values, t_final: float, kc, *,
                         tol: float = 1e-8, n_samples: int = 26):
    """Symmetric atom pairs at +-1/n: antisymmetry, separation bound, Cauchy.

    For each n the initial measure is half an atom at -1/n and half at 1/n.
    Checks: (i) the two paths are antisymmetric to 1e-12; (ii) the
    separation dominates ``(L/A)(1 - e^{-At}) - slack`` with
    ``L = speed_bound / 8`` (atom mass one half, cubed); (iii) across the
    n ladder the time-t measures are Cauchy in the bounded-Lipschitz
    metric with non-increasing consecutive distances.  Returns
    (checks, data).
    """
    n_values = sorted(int(n) for n in n_values)
    A = kc.a_const
    lam = kc.speed_bound * 0.5 ** 3
    ts = np.linspace(0.0, t_final, n_samples)
    slack = 10.0 * tol * ts
    bound = (lam / A) * (1.0 - np.exp(-A * ts))

    trajs = {}
    worst_anti = 0.0
    worst_margin = math.inf
    for n in n_values:
        dm = DiscreteMeasure(np.array([-1.0 / n, 1.0 / n]),
                             np.array([0.5, 0.5]))
        traj = simulate(dm, t_final, tol, kc, sample_times=ts)
        trajs[n] = traj
        pos = np.vstack([traj.state_at(t).positions for t in ts])
        worst_anti = max(worst_anti, float(np.max(np.abs(pos[:, 0] + pos[:, 1]))))
        sep = pos[:, 1] - pos[:, 0]
        worst_margin = min(worst_margin, float(np.min(sep - bound + slack)))

    cauchy = []
    for t_idx, t in enumerate(ts):
        row = []
        for n1, n2 in zip(n_values[:-1], n_values[1:]):
            s1 = trajs[n1].state_at(t)
            s2 = trajs[n2].state_at(t)
            row.append(bl_distance(
                DiscreteMeasure(s1.positions, s1.weights),
                DiscreteMeasure(s2.positions, s2.weights)))
        cauchy.append(row)
    cauchy = np.asarray(cauchy)
    max_over_t = cauchy.max(axis=0)
    cauchy_dec = float(np.max(np.diff(max_over_t))) if max_over_t.size > 1 else 0.0

    checks = [
        CheckResult("splitting_antisymmetry", worst_anti, 1e-12,
                    worst_anti <= 1e-12, 1e-12 - worst_anti,
                    f"n in {n_values}"),
        CheckResult("splitting_separation_bound", worst_margin, 0.0,
                    worst_margin >= 0.0, worst_margin,
                    "separation >= (L/A)(1-e^{-At}) - 10 tol t"),
        CheckResult("splitting_bl_cauchy_decrease", cauchy_dec, 0.0,
                    cauchy_dec <= 0.0, -cauchy_dec,
                    "max_t d(h_n, h_next) non-increasing in n"),
    ]
    data = {"n_values": n_values, "times": ts, "bound": bound,
            "cauchy": cauchy, "lambda_over_a": lam / A}
    return checks, data


# ---------------------------------------------------------------------------
# convergence of measure discretizations


def convergence_study(mu: InitialMeasure, n_list, t_samples, kc, tol: float,
                      window, *, grid_fn=build_grid):
    """Dyadic-refinement convergence in the bounded-Lipschitz metric.

    For each level n: discretize mu on the level-n grid, integrate, and
    snapshot at the requested times.  Reports (i) consecutive distances
    d(h_n(t), h_{n+1}(t)), required non-increasing in n at every t; and
    (ii) the time-Lipschitz property d(h_n(s), h_n(t)) <= C |s-t| + slack
    with C the larger of the two candidate constants (speed bound
    k_inf^2 k3_inf and k_inf^3), flagging which one binds.  Returns
    (checks, data).
    """
    n_list = sorted(int(n) for n in n_list)
    t_samples = np.asarray(sorted(float(t) for t in t_samples))
    t_final = float(t_samples[-1])
    if t_final <= 0.0:
        raise ValueError("need a positive final sample time")

    snapshots = {}
    for n in n_list:
        grid = grid_fn(mu, n, window)
        dm = discretize(mu, grid)
        traj = simulate(dm, t_final, tol, kc, sample_times=t_samples)
        snapshots[n] = [
            DiscreteMeasure(traj.state_at(t).positions, traj.weights)
            for t in t_samples]

    consec = np.empty((len(n_list) - 1, t_samples.size))
    for i, (n1, n2) in enumerate(zip(n_list[:-1], n_list[1:])):
        for j in range(t_samples.size):
            consec[i, j] = bl_distance(snapshots[n1][j], snapshots[n2][j])
    worst_increase = float(np.max(np.diff(consec, axis=0))) \
        if consec.shape[0] > 1 else 0.0

    c_speed = kc.speed_bound
    c_kcube = kc.k_inf ** 3
    c_max = max(c_speed, c_kcube)
    binding = "k_inf^2*k3_inf" if c_speed >= c_kcube else "k_inf^3"
    worst_lip = -math.inf
    for n in n_list:
        for j1 in range(t_samples.size):
            for j2 in range(j1 + 1, t_samples.size):
                d = bl_distance(snapshots[n][j1], snapshots[n][j2])
                dt = t_samples[j2] - t_samples[j1]
                slack = 10.0 * tol * t_samples[j2]
                worst_lip = max(worst_lip, d - (c_max * dt + slack))

    checks = [
        CheckResult("convergence_bl_cauchy_monotone", worst_increase, 0.0,
                    worst_increase <= 0.0, -worst_increase,
                    f"levels {n_list}, times {t_samples.tolist()}"),
        CheckResult("convergence_time_lipschitz", worst_lip, 0.0,
                    worst_lip <= 0.0, -worst_lip,
                    f"constant {c_max:.6g} ({binding} binds)"),
    ]
    data = {"n_list": n_list, "t_samples": t_samples, "consecutive": consec,
            "binding_constant": binding, "c_max": c_max}
    return checks, data


# ---------------------------------------------------------------------------
# full suite


def _seeded_bumps(rng, x_lo, x_hi, t_final, count=3):
    phis = []
    for _ in range(count):
        xr = rng.uniform(0.15, 0.35) * (x_hi - x_lo)
        xc = rng.uniform(x_lo + xr, x_hi - xr)
        tr = rng.uniform(0.15, 0.3) * t_final
        tc = rng.uniform(tr * 0.5, t_final - tr)
        phis.append(BumpTestFunction(xc, tc, xr, tr))
    return phis


def run_verification(*, alpha: float = 1.0, tol: float = 1e-8, seed: int = 0,
                     pair_budget: int = 4096, droplet_level: int = 6,
                     t_final: float | None = None,
                     include_convergence: bool = False,
                     fast_hook=None) -> VerificationReport:
    """Run the full check suite and return a structured report.

    ``fast_hook`` (testing only) replaces the fast velocity evaluator in
    the fast/direct comparison, so a corrupted summation path is provably
    detected.
    """
    kc = kernel.constants(alpha)
    rng = np.random.default_rng(seed)
    report = VerificationReport(meta={
        "alpha": alpha, "tol": tol, "seed": seed,
        "pair_budget": pair_budget, "droplet_level": droplet_level,
        "include_convergence": include_convergence,
    })

    # kernel identities at seeded random points
    worst_g = 0.0
    worst_l = 0.0
    for al in (0.1, 0.5, 1.0, 2.0, 10.0):
        kca = kernel.constants(al)
        xs = rng.uniform(-8.0 * al, 8.0 * al, 1000)
        xs = xs[xs != 0.0]
        worst_g = max(worst_g, float(np.max(np.abs(
            kernel.check_greens_identity(xs, al)))) / kca.k_inf)
        worst_l = max(worst_l, float(np.max(np.abs(
            kernel.check_lemma_identity(xs, al)))) / (kca.k_inf * kca.k3_inf))
    report.add(CheckResult("kernel_greens_identity", worst_g, 1e-12,
                           worst_g <= 1e-12, 1e-12 - worst_g,
                           "relative to k_inf"))
    report.add(CheckResult("kernel_product_identity", worst_l, 1e-12,
                           worst_l <= 1e-12, 1e-12 - worst_l,
                           "relative to k_inf*k3_inf"))

    # closed-form suprema vs dense scans
    worst_const = 0.0
    for al in (0.1, 0.5, 1.0, 2.0, 10.0):
        kca = kernel.constants(al)
        xs = np.linspace(1e-9 * al, 20.0 * al, 200001)
        worst_const = max(
            worst_const,
            abs(float(np.max(np.abs(kernel.eval_K_deriv(xs, 1, al))))
                - kca.lip_k) / kca.lip_k,
            abs(float(np.max(np.abs(kernel.eval_K_deriv(xs, 4, al))))
                - kca.lip_k3) / kca.lip_k3,
            abs(float(np.max(np.abs(kernel.eval_K_deriv(xs, 3, al))))
                - kca.k3_inf) / kca.k3_inf)
    report.add(CheckResult("kernel_constants_supscan", worst_const, 1e-6,
                           worst_const <= 1e-6, 1e-6 - worst_const,
                           "relative deviation of scanned suprema"))

    # fast vs direct velocity oracle
    fast = fast_hook if fast_hook is not None else dynamics.velocity_fast
    worst_rel = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 65))
        al = float(rng.uniform(0.1, 10.0))
        kca = kernel.constants(al)
        x = np.sort(rng.uniform(-5.0 * al, 5.0 * al, n))
        x = np.unique(x)
        w = rng.uniform(0.0, 1.0, x.size)
        w /= max(1.0, w.sum() * (1.0 + 1e-12))
        vf = fast(x, w, kca).velocities
        vd = dynamics.velocity_direct(x, w, kca).velocities
        scale = float(np.max(np.abs(vd)))
        if scale > 0.0:
            worst_rel = max(worst_rel,
                            float(np.max(np.abs(vf - vd))) / scale)
    report.add(CheckResult("fast_direct_agreement", worst_rel, 1e-12,
                           worst_rel <= 1e-12, 1e-12 - worst_rel,
                           "200 seeded states, N <= 64"))

    # droplet run: envelopes, speed bound, mass, energy trend, hbar bound
    mu = droplet_parabola()
    if t_final is None:
        t_final = 10.0 / kc.a_const
    grid = build_grid(mu, droplet_level, (-1.0, 1.0))
    dm = discretize(mu, grid)
    sample_times = np.linspace(0.0, t_final, 25)
    traj = simulate(dm, t_final, tol, kc, sample_times=sample_times)
    report.extend(envelope_check(traj, mu, pair_budget, seed=seed))

    dx = np.diff(traj.positions, axis=0)
    dts = np.diff(traj.times)
    speed = float(np.max(np.abs(dx) / dts[:, None]))
    sb = kc.speed_bound * (1.0 + 1e-6)
    report.add(CheckResult("speed_bound", speed, sb, speed <= sb,
                           sb - speed, "max per-step |dx|/dt"))

    masses = np.array([fields.mass_quadrature(traj.state_at(t), kc)
                       for t in sample_times])
    mass_err = float(np.max(np.abs(masses - dm.total_mass)))
    report.add(CheckResult("mass_conservation", mass_err, 1e-6,
                           mass_err <= 1e-6, 1e-6 - mass_err,
                           "quadrature of hbar vs total weight"))

    energies = np.array([fields.surface_energy(traj.state_at(t), kc)
                         for t in sample_times])
    e_growth = float(np.max(np.diff(energies)))
    report.add(CheckResult("energy_monotone_trend", e_growth, 10.0 * tol,
                           e_growth <= 10.0 * tol, 10.0 * tol - e_growth,
                           "max increase between samples"))

    hb_margin = min(dynamics.hbar_min_bound_check(
        traj.state_at(t).positions, traj.weights, kc) for t in sample_times)
    report.add(CheckResult("hbar_lower_bound", hb_margin, -1e-12,
                           hb_margin >= -1e-12, hb_margin + 1e-12,
                           "min hbar(x_i) - k_inf w_i"))

    gaps0 = np.diff(traj.positions[0])
    worst_gap = math.inf
    for t in sample_times:
        st = traj.state_at(t)
        bound = gaps0 * math.exp(-kc.a_const * t) - 10.0 * tol * t
        worst_gap = min(worst_gap, float(np.min(np.diff(st.positions) - bound)))
    report.add(CheckResult("no_crossing_gap_decay", worst_gap, 0.0,
                           worst_gap >= 0.0, worst_gap,
                           "adjacent gaps vs e^{-At} envelope"))

    # weak residual on a symmetric pair with seeded test functions
    pair = DiscreteMeasure(np.array([-0.5, 0.5]), np.array([0.5, 0.5]))
    t_weak = 20.0
    phis = _seeded_bumps(rng, -3.0, 3.0, t_weak)
    traj_w = simulate(pair, t_weak, 1e-10, kc,
                      sample_times=np.linspace(0.0, t_weak, 9))
    res = max(abs(weak_residual(traj_w, phi, panels_per_step=8))
              for phi in phis)
    report.add(CheckResult("weak_residual", res, 1e-8, res <= 1e-8,
                           1e-8 - res, "3 seeded bumps, tol 1e-10"))

    levels = weak_residual_refinement(pair, t_weak, kc, phis)
    ratios = [levels[i][2] / max(levels[i + 1][2], 1e-300)
              for i in range(len(levels) - 1)]
    min_ratio = min(ratios) if ratios else math.inf
    report.add(CheckResult("weak_residual_refinement", min_ratio, 4.0,
                           min_ratio >= 4.0, min_ratio - 4.0,
                           f"levels {[(f'{t:.0e}', p) for t, p, _ in levels]}"))

    # Hoelder diagnostics on the droplet run
    h_checks, _ = fields.holder_report(traj, kc, seed=seed)
    report.extend(h_checks)

    # splitting experiment
    s_checks, _ = splitting_experiment((2, 4, 8, 16), 50.0, kc, tol=tol)
    report.extend(s_checks)

    if include_convergence:
        c_checks, _ = convergence_study(mu, range(3, 9), (0.0, 1.0, 5.0),
                                        kc, tol, (-1.0, 1.0))
        report.extend(c_checks)

    return report

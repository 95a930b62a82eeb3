"""Configuration-driven command line: simulate, verify, converge, bench.

One JSON config file drives everything; the only positional arguments are
the subcommand and the config path, with ``--set key=value`` dotted
overrides for one-off tweaks.  Runs are deterministic given (config, seed):
identical inputs produce byte-identical CSV artifacts.

Exit status: 0 success, 1 failed checks, 2 config errors, 3 simulation
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, fields, kernel, verify
from .integrator import IntegrationFailure, simulate
from .measure import InitialMeasure, build_grid, discretize, droplet_parabola
from .report import CheckResult, VerificationReport, atomic_write_text

__all__ = ["main", "RunConfig", "ConfigError"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    alpha: float = 1.0
    initial_measure: object = "droplet"   # path, inline dict, or "droplet"
    n_grid: int = 6
    window: tuple = (-1.0, 1.0)
    t_final: float = 10.0
    tol: float = 1e-8
    sample_times: object = 11             # count or explicit list
    field_grid: tuple = (-8.0, 8.0, 201)  # lo, hi, count
    output_dir: str = "out"
    seed: int = 0
    pair_budget: int = 4096
    include_convergence: bool = False
    converge_levels: tuple = (3, 4, 5, 6, 7, 8)
    converge_times: tuple = (0.0, 1.0, 5.0)
    bench_sizes: tuple = (1000, 10000, 100000, 1000000)
    bench_direct_max: int = 10000
    bench_repeats: int = 3

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise ConfigError("config key 'alpha' must be positive")
        if not self.t_final > 0.0:
            raise ConfigError("config key 't_final' must be positive")
        if not (1e-12 <= self.tol <= 1e-3):
            raise ConfigError("config key 'tol' must lie in [1e-12, 1e-3]")
        if len(self.window) != 2 or not self.window[0] < self.window[1]:
            raise ConfigError("config key 'window' must be [lo, hi] with lo < hi")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key: {sorted(unknown)[0]!r}")
        kwargs = {}
        for key, value in data.items():
            if isinstance(value, list):
                value = tuple(value)
            kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {exc}") from exc

    def resolve_measure(self) -> InitialMeasure:
        spec = self.initial_measure
        if spec == "droplet":
            return droplet_parabola()
        if isinstance(spec, dict):
            try:
                return InitialMeasure.from_dict(spec)
            except ValueError as exc:
                raise ConfigError(f"bad inline 'initial_measure': {exc}") from exc
        try:
            return InitialMeasure.load(spec)
        except FileNotFoundError as exc:
            raise ConfigError(f"measure file not found: {spec!r}") from exc
        except (ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(
                f"bad measure file {spec!r}: {exc}") from exc

    def resolve_sample_times(self) -> np.ndarray:
        st = self.sample_times
        if isinstance(st, int):
            return np.linspace(0.0, self.t_final, st)
        return np.asarray([float(t) for t in st])


def _load_config(path: str, overrides) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path!r}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return RunConfig.from_dict(data)


def _run_simulation(cfg: RunConfig):
    mu = cfg.resolve_measure()
    kc = kernel.constants(cfg.alpha)
    grid = build_grid(mu, cfg.n_grid, tuple(cfg.window))
    dm = discretize(mu, grid)
    traj = simulate(dm, cfg.t_final, cfg.tol, kc,
                    sample_times=cfg.resolve_sample_times())
    return mu, kc, dm, traj


def cmd_simulate(cfg: RunConfig) -> int:
    try:
        mu, kc, dm, traj = _run_simulation(cfg)
    except IntegrationFailure as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 3
    os.makedirs(cfg.output_dir, exist_ok=True)
    lo, hi, count = cfg.field_grid
    grid = np.linspace(float(lo), float(hi), int(count))
    atomic_write_text(os.path.join(cfg.output_dir, "trajectory.csv"),
                      traj.trajectory_csv())
    atomic_write_text(os.path.join(cfg.output_dir, "steps.csv"),
                      traj.step_log_csv())
    atomic_write_text(os.path.join(cfg.output_dir, "fields.csv"),
                      fields.field_csv(traj, grid, kc))
    atomic_write_text(os.path.join(cfg.output_dir, "energy.csv"),
                      fields.energy_csv(traj, kc))
    final = traj.state_at(cfg.t_final)
    print(f"N={traj.n_particles} steps={traj.times.size - 1} "
          f"rejections={traj.n_rejected} min_gap={final.min_gap:.6g} "
          f"final_E={fields.surface_energy(final, kc):.9g}")
    print(f"artifacts written to {cfg.output_dir}/")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    try:
        report = verify.run_verification(
            alpha=cfg.alpha, tol=cfg.tol, seed=cfg.seed,
            pair_budget=cfg.pair_budget, droplet_level=cfg.n_grid,
            include_convergence=cfg.include_convergence)
    except IntegrationFailure as exc:
        print(f"verification run failed to integrate: {exc}", file=sys.stderr)
        return 3
    os.makedirs(cfg.output_dir, exist_ok=True)
    report.write(os.path.join(cfg.output_dir, "report.json"))
    for line in report.summary_lines():
        print(line)
    return 0 if report.all_passed else 1


def cmd_converge(cfg: RunConfig) -> int:
    mu = cfg.resolve_measure()
    kc = kernel.constants(cfg.alpha)
    try:
        checks, data = verify.convergence_study(
            mu, cfg.converge_levels, cfg.converge_times, kc, cfg.tol,
            tuple(cfg.window))
    except IntegrationFailure as exc:
        print(f"convergence run failed to integrate: {exc}", file=sys.stderr)
        return 3
    report = VerificationReport(meta={"alpha": cfg.alpha, "tol": cfg.tol,
                                      "levels": list(cfg.converge_levels),
                                      "times": list(cfg.converge_times)})
    report.extend(checks)
    os.makedirs(cfg.output_dir, exist_ok=True)
    report.write(os.path.join(cfg.output_dir, "converge.json"))
    lines = ["n,t,bl_distance_to_next"]
    for i, n in enumerate(data["n_list"][:-1]):
        for j, t in enumerate(data["t_samples"]):
            lines.append(f"{n},{t:.17g},{data['consecutive'][i, j]:.17g}")
    atomic_write_text(os.path.join(cfg.output_dir, "converge.csv"),
                      "\n".join(lines) + "\n")
    for line in report.summary_lines():
        print(line)
    return 0 if report.all_passed else 1


def _time_call(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cmd_bench(cfg: RunConfig) -> int:
    kc = kernel.constants(cfg.alpha)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    agree_worst = 0.0
    for n in cfg.bench_sizes:
        x = np.sort(rng.uniform(-5.0, 5.0, int(n)))
        x = np.unique(x)
        w = rng.uniform(0.0, 1.0, x.size)
        w /= w.sum() * (1.0 + 1e-12)
        dynamics.velocity_fast(x, w, kc)  # warm the jit before timing
        t_fast = _time_call(lambda: dynamics.velocity_fast(x, w, kc),
                            cfg.bench_repeats)
        t_direct = math.nan
        if x.size <= cfg.bench_direct_max:
            dynamics.velocity_direct(x[:2], w[:2], kc)
            t_direct = _time_call(lambda: dynamics.velocity_direct(x, w, kc),
                                  max(1, cfg.bench_repeats // 3))
            vf = dynamics.velocity_fast(x, w, kc).velocities
            vd = dynamics.velocity_direct(x, w, kc).velocities
            agree_worst = max(agree_worst, float(
                np.max(np.abs(vf - vd)) / np.max(np.abs(vd))))
        rows.append((x.size, t_fast, t_direct))

    print("N,fast_seconds,direct_seconds")
    for n, tf, td in rows:
        print(f"{n},{tf:.6g},{'' if math.isnan(td) else f'{td:.6g}'}")

    logn = np.log([r[0] for r in rows])
    fast_exp = float(np.polyfit(logn, np.log([r[1] for r in rows]), 1)[0])
    direct_rows = [(n, td) for n, _, td in rows if not math.isnan(td)]
    direct_exp = math.nan
    if len(direct_rows) >= 2:
        direct_exp = float(np.polyfit(np.log([n for n, _ in direct_rows]),
                                      np.log([t for _, t in direct_rows]), 1)[0])

    checks = [
        CheckResult("bench_fast_exponent", fast_exp, 1.2, fast_exp <= 1.2,
                    1.2 - fast_exp, f"sizes {[r[0] for r in rows]}"),
        CheckResult("bench_direct_exponent", direct_exp, 1.8,
                    (not math.isnan(direct_exp)) and direct_exp >= 1.8,
                    direct_exp - 1.8,
                    f"sizes {[n for n, _ in direct_rows]}"),
        CheckResult("bench_fast_direct_agreement", agree_worst, 1e-12,
                    agree_worst <= 1e-12, 1e-12 - agree_worst, ""),
    ]
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name}: value={c.value:.6g} bound={c.bound:.6g}")
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    threads = os.environ.get("THINFILM_THREADS")
    if threads:
        try:
            import numba
            numba.set_num_threads(max(1, int(threads)))
        except (ImportError, ValueError):
            pass

    parser = argparse.ArgumentParser(
        prog="thinfilm",
        description="particle solver and verification suite for the "
                    "kernel-regularized thin-film equation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "integrate and write CSV artifacts"),
                        ("verify", "run the full verification suite"),
                        ("converge", "measure-discretization convergence study"),
                        ("bench", "time fast vs direct summation")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="path to JSON config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VAL",
                       help="override a config key (dotted paths allowed)")
    args = parser.parse_args(argv)

    try:
        cfg = _load_config(args.config, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "converge":
            return cmd_converge(cfg)
        return cmd_bench(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

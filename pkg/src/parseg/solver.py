"""Projected gradient descent over the trace-pinned nonnegative cone.

The solver minimizes the competition energy over fields that equal the
boundary traces and are nonnegative inside.  Steps are accepted only when
they decrease the energy (Armijo backtracking on the gradient mapping), so
the energy trace is non-increasing across accepted iterates and every
iterate is feasible bit-exactly.  Optional Nesterov-style momentum restarts
whenever the extrapolated step would break monotonicity.

``continuation`` drives the coupling strength along an increasing schedule,
warm-starting each solve from the previous minimizer.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from . import energy as en
from . import grid as g
from .model import ProblemSpec, TraceData

MOMENTUM_MODES = ("off", "restart-accelerated")
_STEP_FLOOR = 1e-14


class SolverError(ValueError):
    """Invalid solver configuration or schedule."""


@dataclass
class SolveConfig:
    max_iters: int = 200_000
    grad_tol: float = 1e-6
    step0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    momentum: str = "restart-accelerated"
    seed: int = 42
    init_noise: float = 0.0
    trace_path: str | Path | None = None
    check_feasible: bool = False

    def __post_init__(self) -> None:
        if self.grad_tol <= 0:
            raise SolverError("grad_tol must be > 0")
        if not (0 < self.backtrack < 1):
            raise SolverError("backtrack shrink factor must lie in (0, 1)")
        if self.step0 <= 0:
            raise SolverError("step0 must be > 0")
        if not (0 < self.armijo < 1):
            raise SolverError("armijo constant must lie in (0, 1)")
        if self.momentum not in MOMENTUM_MODES:
            raise SolverError(f"momentum must be one of {MOMENTUM_MODES}")
        if self.max_iters < 1:
            raise SolverError("max_iters must be >= 1")


@dataclass
class SolveResult:
    u: np.ndarray
    energies: list[float]
    pg_norm: float
    iterations: int
    converged: bool
    stalled: bool = False
    message: str = ""

    @property
    def energy(self) -> float:
        return self.energies[-1]


@dataclass
class ContinuationEntry:
    beta: float
    result: SolveResult
    diagnostics: dict[str, float]


@dataclass
class ContinuationResult:
    spec: ProblemSpec
    entries: list[ContinuationEntry]
    warnings: list[str] = field(default_factory=list)

    @property
    def betas(self) -> list[float]:
        return [e.beta for e in self.entries]


def project(u: np.ndarray, traces: TraceData, dom: g.Domain) -> np.ndarray:
    """Clamp interior values at zero, pin boundary values to the traces."""
    out = np.array(u, dtype=float, copy=True)
    inter = dom.interior
    out[:, inter] = np.maximum(out[:, inter], 0.0)
    bnd = dom.boundary
    out[:, bnd] = traces.values[:, bnd]
    out[:, ~dom.active] = 0.0
    return out


def trace_init(spec: ProblemSpec, mode: str = "harmonic", cfg: SolveConfig | None = None) -> np.ndarray:
    """Deterministic feasible starting field.

    ``harmonic``: discrete harmonic extension of each trace component.
    ``zeros``: traces on the boundary, zero inside.
    A seeded uniform perturbation of scale ``cfg.init_noise`` is added to
    the interior before projection when requested.
    """
    dom = spec.domain
    u = en.zeros_field(spec)
    if mode == "harmonic":
        for i in range(spec.d):
            u[i] = g.harmonic_extension(dom, spec.traces.values[i])
    elif mode != "zeros":
        raise SolverError(f"unknown init mode {mode!r}")
    if cfg is not None and cfg.init_noise > 0:
        rng = np.random.default_rng(cfg.seed)
        noise = cfg.init_noise * rng.uniform(0.0, 1.0, size=u.shape)
        u[:, dom.interior] += noise[:, dom.interior]
    return project(u, spec.traces, dom)


def _pg_norm(u: np.ndarray, cand: np.ndarray, step: float) -> float:
    return float(np.linalg.norm((u - cand).ravel())) / step


def minimize(spec: ProblemSpec, init: np.ndarray, cfg: SolveConfig, extra=None) -> SolveResult:
    """Minimize the energy from ``init`` by monotone projected gradient descent.

    ``extra`` may supply an additional smooth term as an object with
    ``value(u) -> float`` and ``gradient(u) -> array`` (used by the
    penalized limit solves); it is added to both the objective and the
    gradient.
    """
    dom = spec.domain
    traces = spec.traces

    def value(v: np.ndarray) -> float:
        total = en.energy(spec, v).total
        if extra is not None:
            total += extra.value(v)
        return total

    def gradient(v: np.ndarray) -> np.ndarray:
        gg = en.energy_gradient(spec, v)
        if extra is not None:
            gg = gg + extra.gradient(v)
        return gg

    u = project(init, traces, dom)
    j_cur = value(u)
    energies = [j_cur]
    step = cfg.step0
    accel = cfg.momentum == "restart-accelerated"
    u_prev = u
    t_prev = t_cur = 1.0
    pg = math.inf
    pg_fresh = False
    converged = False
    stalled = False
    message = ""
    iterations = 0
    rows = []

    def backtrack(base, j_base, g_base, first_cand=None):
        s = step
        cand = first_cand if first_cand is not None else project(base - s * g_base, traces, dom)
        while True:
            j_c = value(cand)
            decrease = (cfg.armijo / s) * float(((cand - base) ** 2).sum())
            if j_c <= j_base - decrease and j_c <= j_cur:
                return cand, j_c, s
            s *= cfg.backtrack
            if s < _STEP_FLOOR:
                return None
            cand = project(base - s * g_base, traces, dom)

    for iterations in range(1, cfg.max_iters + 1):
        use_mom = accel and t_cur > 1.0
        res = None
        if use_mom:
            tau = (t_prev - 1.0) / t_cur
            base = project(u + tau * (u - u_prev), traces, dom)
            res = backtrack(base, value(base), gradient(base))
            if res is None:
                # restart momentum, retry as a plain step this iteration
                t_cur = 1.0
                use_mom = False
        if not use_mom:
            base = u
            g_u = gradient(u)
            cand0 = project(u - step * g_u, traces, dom)
            pg = _pg_norm(u, cand0, step)
            pg_fresh = True
            if pg <= cfg.grad_tol:
                converged = True
                iterations -= 1
                break
            res = backtrack(u, j_cur, g_u, first_cand=cand0)
        if res is None:
            stalled = True
            message = f"no decreasing step above underflow floor {_STEP_FLOOR:g}"
            break
        u_new, j_new, s_used = res
        if cfg.check_feasible:
            _assert_feasible(dom, traces, u_new)
        mapped = _pg_norm(base, u_new, s_used)
        if cfg.trace_path is not None:
            rows.append((iterations, j_new, s_used, mapped))
        u_prev, u, j_cur = u, u_new, j_new
        energies.append(j_cur)
        step = s_used / cfg.backtrack
        pg_fresh = False
        if accel:
            t_prev, t_cur = t_cur, 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_cur * t_cur))
        if use_mom and mapped <= cfg.grad_tol:
            # verify with a true projected-gradient probe at the new iterate
            cand = project(u - step * gradient(u), traces, dom)
            pg = _pg_norm(u, cand, step)
            pg_fresh = True
            if pg <= cfg.grad_tol:
                converged = True
                break
    else:
        message = f"max_iters {cfg.max_iters} reached"

    if not pg_fresh:
        cand = project(u - step * gradient(u), traces, dom)
        pg = _pg_norm(u, cand, step)
    if cfg.trace_path is not None:
        _write_trace(cfg.trace_path, rows)
    return SolveResult(u, energies, pg, iterations, converged, stalled, message)


def _assert_feasible(dom: g.Domain, traces: TraceData, u: np.ndarray) -> None:
    if (u[:, dom.interior] < 0).any():
        raise AssertionError("iterate lost nonnegativity")
    if not np.array_equal(u[:, dom.boundary], traces.values[:, dom.boundary]):
        raise AssertionError("iterate lost trace pinning")


def _write_trace(path: str | Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "energy", "step", "pg_norm"])
        w.writerows(rows)


# -- continuation ---------------------------------------------------------------


def default_holder_policy(dom: g.Domain, seed: int):
    if int(dom.active.sum()) <= 48 * 48:
        return diag.Exhaustive()
    return diag.Subsampled(20_000, seed)


def snapshot(spec: ProblemSpec, u: np.ndarray, exponents=(0.3, 0.6), policy=None, seed: int = 42) -> dict[str, float]:
    """Per-solve diagnostics recorded along a continuation run."""
    dom = spec.domain
    if policy is None:
        policy = default_holder_policy(dom, seed)
    bd = en.energy(spec, u)
    out = {
        "beta": spec.beta,
        "energy": bd.total,
        "dirichlet": bd.dirichlet,
        "interaction_scaled": 2.0 * bd.interaction,
        "seg_violation": diag.segregation_violation(dom, u, spec.k),
        "h1_norm": en.h1_norm(dom, u),
        "sup_norm": en.sup_norm(dom, u),
    }
    for alpha in exponents:
        est = max(
            (diag.holder_seminorm(dom, u[i], alpha, policy) for i in range(spec.d)),
            key=lambda e: e.value,
        )
        out[f"holder_alpha{int(round(100 * alpha)):02d}"] = est.value
    return out


def continuation(
    spec: ProblemSpec,
    schedule,
    cfg: SolveConfig,
    holder_exponents=(0.3, 0.6),
    holder_policy=None,
) -> ContinuationResult:
    """Solve along an increasing coupling schedule with warm starts."""
    schedule = [float(b) for b in schedule]
    if not schedule:
        raise SolverError("schedule must contain at least one coupling value")
    if any(b2 <= b1 for b1, b2 in zip(schedule, schedule[1:])):
        raise SolverError("schedule must be strictly increasing")
    u = trace_init(spec, "harmonic", cfg)
    entries = []
    warnings = []
    for beta in schedule:
        sb = spec.at_beta(beta)
        res = minimize(sb, u, cfg)
        if res.stalled:
            warnings.append(f"beta={beta:g}: solver stalled ({res.message})")
        elif not res.converged:
            warnings.append(f"beta={beta:g}: not converged ({res.message})")
        u = res.u
        entries.append(
            ContinuationEntry(beta, res, snapshot(sb, u, holder_exponents, holder_policy, cfg.seed))
        )
    return ContinuationResult(spec, entries, warnings)


# -- uniform-bounds report -------------------------------------------------------


@dataclass(frozen=True)
class UniformBoundsReport:
    betas: tuple[float, ...]
    h1: tuple[float, ...]
    sup: tuple[float, ...]
    h1_variation: float
    sup_variation: float
    h1_flag: bool
    sup_flag: bool


def uniform_bounds_report(result: ContinuationResult, threshold: float = 0.05) -> UniformBoundsReport:
    """Track H^1 and sup norms along the run; flag >5% drift in the top decade."""
    if len(result.entries) < 2:
        raise SolverError("uniform bounds report needs at least two schedule points")
    betas = tuple(e.beta for e in result.entries)
    h1 = tuple(e.diagnostics["h1_norm"] for e in result.entries)
    sup = tuple(e.diagnostics["sup_norm"] for e in result.entries)
    top = [i for i, b in enumerate(betas) if b >= betas[-1] / 10.0]
    if len(top) < 2:
        top = [len(betas) - 2, len(betas) - 1]

    def variation(vals) -> float:
        sel = [vals[i] for i in top]
        lo, hi = min(sel), max(sel)
        return (hi - lo) / lo if lo > 0 else (0.0 if hi == 0 else math.inf)

    vh1, vsup = variation(h1), variation(sup)
    return UniformBoundsReport(betas, h1, sup, vh1, vsup, vh1 > threshold, vsup > threshold)

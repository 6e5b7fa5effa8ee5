"""Quantitative probes: Hölder seminorms, coupling decay, segregation,
the local Pohozaev identity on balls, and the blow-up rescaling transform.

The sampled Hölder seminorm is a lower bound for the continuum supremum
over all point pairs; subsampled estimates are reported as such.  The
blow-up transform is descriptive only: it rescales a window of the field
and reports the effective coupling of the rescaled equation, nothing more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import energy as en
from . import grid as g
from .model import ProblemSpec

_EXHAUSTIVE_LIMIT = 48 * 48
_REFINE_RADIUS = 5
_COARSE_TARGET = 1024


class DiagnosticsError(ValueError):
    """Invalid probe parameters."""


# -- Hölder seminorm ---------------------------------------------------------


@dataclass(frozen=True)
class Exhaustive:
    """Scan all active node pairs (grids up to 48x48 active nodes)."""


@dataclass(frozen=True)
class Subsampled:
    """m seeded random pairs plus refinement near the coarse-scan maximizer."""

    m: int
    seed: int = 42


@dataclass(frozen=True)
class HolderEstimate:
    alpha: float
    value: float
    pair: tuple[tuple[int, int], tuple[int, int]]
    policy: str


def holder_seminorm(dom: g.Domain, field: np.ndarray, alpha: float, policy=Exhaustive()) -> HolderEstimate:
    """Max over sampled node pairs of |u(x)-u(y)| / |x-y|^alpha (physical distances)."""
    if not (0 < alpha <= 1):
        raise DiagnosticsError(f"exponent must lie in (0, 1], got {alpha}")
    ax, ay = np.nonzero(dom.active)
    px = ax * dom.h + dom.extent[0]
    py = ay * dom.h + dom.extent[1]
    vals = np.asarray(field, dtype=float)[ax, ay]
    n = ax.size
    if isinstance(policy, Exhaustive):
        if n > _EXHAUSTIVE_LIMIT:
            raise DiagnosticsError(f"exhaustive scan limited to {_EXHAUSTIVE_LIMIT} active nodes, got {n}")
        best, bi, bj = _pairscan(px, py, vals, alpha, np.arange(n), np.arange(n))
        label = "exhaustive"
    elif isinstance(policy, Subsampled):
        stride = max(1, int(math.ceil(n / _COARSE_TARGET)))
        coarse = np.arange(0, n, stride)
        best, bi, bj = _pairscan(px, py, vals, alpha, coarse, coarse)
        for center in (bi, bj):
            near = _near_indices(ax, ay, int(ax[center]), int(ay[center]), _REFINE_RADIUS)
            b2, i2, j2 = _pairscan(px, py, vals, alpha, near, np.arange(n))
            if b2 > best:
                best, bi, bj = b2, i2, j2
        rng = np.random.default_rng(policy.seed)
        ri = rng.integers(0, n, size=policy.m)
        rj = rng.integers(0, n, size=policy.m)
        keep = ri != rj
        if keep.any():
            q = _quotients(px, py, vals, alpha, ri[keep], rj[keep])
            jbest = int(np.argmax(q))
            if q[jbest] > best:
                best = float(q[jbest])
                bi, bj = int(ri[keep][jbest]), int(rj[keep][jbest])
        label = f"subsampled({policy.m})"
    else:
        raise DiagnosticsError(f"unknown sampling policy {policy!r}")
    pair = ((int(ax[bi]), int(ay[bi])), (int(ax[bj]), int(ay[bj])))
    return HolderEstimate(alpha, best, pair, label)


def _quotients(px, py, vals, alpha, ii, jj):
    dist = np.hypot(px[ii] - px[jj], py[ii] - py[jj])
    return np.abs(vals[ii] - vals[jj]) / dist**alpha


def _pairscan(px, py, vals, alpha, rows, cols, block: int = 256):
    best = 0.0
    bi = bj = int(rows[0]) if len(rows) else 0
    for s in range(0, len(rows), block):
        rr = rows[s : s + block]
        dist = np.hypot(px[rr][:, None] - px[cols][None, :], py[rr][:, None] - py[cols][None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            quot = np.abs(vals[rr][:, None] - vals[cols][None, :]) / dist**alpha
        quot[dist == 0.0] = 0.0
        flat = int(np.argmax(quot))
        r, c = divmod(flat, quot.shape[1])
        if quot[r, c] > best:
            best = float(quot[r, c])
            bi, bj = int(rr[r]), int(cols[c])
    return best, bi, bj


def _near_indices(ax, ay, cx, cy, radius):
    sel = (np.abs(ax - cx) <= radius) & (np.abs(ay - cy) <= radius)
    return np.nonzero(sel)[0]


# -- segregation and coupling decay -------------------------------------------


def segregation_violation(dom: g.Domain, u: np.ndarray, k: int) -> float:
    """Max over k-subsets J and active nodes of prod_{j in J} u_j."""
    u = np.asarray(u, dtype=float)
    d = u.shape[0]
    vals = u[:, dom.active]
    worst = 0.0
    for sub in combinations(range(d), k):
        prod = np.prod(vals[list(sub)], axis=0)
        worst = max(worst, float(prod.max()))
    return worst


def interaction_decay(result) -> tuple[list[tuple[float, float]], bool]:
    """Scaled coupling integral ``beta * integral(sum gamma_J u_J^2)`` per run entry.

    Returns the (beta, value) table and a trend flag that tolerates a 10%
    non-monotone wiggle per step.
    """
    entries = result.entries
    if len(entries) < 2:
        raise DiagnosticsError("interaction decay needs at least two schedule points")
    spec = result.spec
    table = []
    for e in entries:
        dens = en.interaction_density(spec.at_beta(e.beta), e.result.u)
        table.append((e.beta, e.beta * g.integrate(spec.domain, dens)))
    monotone = all(v2 <= 1.1 * v1 for (_, v1), (_, v2) in zip(table, table[1:]))
    return table, monotone


# -- Pohozaev identity ---------------------------------------------------------


@dataclass(frozen=True)
class PohozaevReport:
    ball: g.BallSpec
    lhs: float
    rhs: float
    h: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


def pohozaev_check(spec: ProblemSpec, u: np.ndarray, ball: g.BallSpec) -> PohozaevReport:
    """Assemble both sides of the local Pohozaev identity on the given ball.

    Sphere integrals use angular sampling with bilinear interpolation
    (tangential derivatives by centered differences along the circle);
    ball integrals use masked node quadrature of centered node gradients.
    Reaction terms are evaluated at the limit of the family, matching the
    segregated-limit fields this identity applies to; the spatial-gradient
    term of the primitive is assembled so x-dependent families plug in.
    """
    dom = spec.domain
    nl = spec.nonlinearity
    r = ball.radius
    cx, cy = ball.center
    ndim = 2

    lhs = 0.0
    sphere_grad_sq = 0.0
    sphere_normal_sq = 0.0
    sphere_f = 0.0
    ball_grad_sq = 0.0
    ball_f = 0.0

    gx, gy = dom.coords
    inside = (np.hypot(gx - cx, gy - cy) <= r) & dom.interior
    ix, iy = np.nonzero(inside)
    if ix.size:
        for arr in (ix, iy):
            if arr.min() < 1 or (ix.max() > dom.nx - 2) or (iy.max() > dom.ny - 2):
                raise g.BallOutsideDomainError("ball touches the lattice edge")

    for i in range(spec.d):
        angles, vals, dnu = g.sphere_trace(dom, ball, u[i])
        dtheta = 2 * math.pi / len(angles)
        dtan = (np.roll(vals, -1) - np.roll(vals, 1)) / (2 * dtheta * r)
        w = r * dtheta
        sphere_grad_sq += float(((dnu**2 + dtan**2) * w).sum())
        sphere_normal_sq += float((dnu**2 * w).sum())
        sphere_f += float((nl.F(i, vals, beta=None) * w).sum())

        if ix.size:
            ux = (u[i][ix + 1, iy] - u[i][ix - 1, iy]) / (2 * dom.h)
            uy = (u[i][ix, iy + 1] - u[i][ix, iy - 1]) / (2 * dom.h)
            ball_grad_sq += dom.h**2 * float((ux**2 + uy**2).sum())
            fvals = nl.F(i, u[i][ix, iy], beta=None)
            gradx_f = nl.grad_x_F(i, u[i][ix, iy], beta=None)
            moment = gradx_f[..., 0] * (gx[ix, iy] - cx) + gradx_f[..., 1] * (gy[ix, iy] - cy)
            ball_f += dom.h**2 * float((ndim * fvals + moment).sum())

    lhs = sphere_grad_sq
    rhs = (
        (ndim - 2) / r * ball_grad_sq
        - 2.0 / r * ball_f
        + 2.0 * sphere_normal_sq
        + 2.0 * sphere_f
    )
    return PohozaevReport(ball, lhs, rhs, dom.h)


# -- blow-up rescaling ----------------------------------------------------------


@dataclass(frozen=True)
class BlowupFrame:
    center: tuple[float, float]
    scale: float
    normalization: float
    alpha: float
    fields: np.ndarray
    coupling: float
    coupling_magnitude: float
    half_width: float


def blowup_extract(
    spec: ProblemSpec,
    u: np.ndarray,
    beta: float,
    center: tuple[float, float],
    scale: float,
    alpha: float,
    half_width: float = 1.0,
    normalization: float | None = None,
    policy=None,
) -> BlowupFrame:
    """Rescale ``v_i(x) = u_i(center + scale*x) / (L scale^alpha)`` on a window.

    ``L`` defaults to the largest subsampled Hölder-seminorm estimate of the
    components at this exponent.  The effective coupling of the rescaled
    system is ``beta * scale^(2 + 2(k-1)alpha) * L^(2(k-1))`` and the
    reported magnitude is the max of the rescaled coupling term
    ``M v_i sum gamma(J+{i}) v_J^2`` over the window.
    """
    dom = spec.domain
    if scale <= 0:
        raise DiagnosticsError("scale must be positive")
    if normalization is None:
        if not (0 < alpha <= 1):
            raise DiagnosticsError("automatic normalization needs an exponent in (0, 1]")
        pol = policy if policy is not None else Subsampled(5000, 42)
        normalization = max(holder_seminorm(dom, u[i], alpha, pol).value for i in range(spec.d))
    if not normalization > 0:
        raise DiagnosticsError("normalization must be positive (constant fields have no blow-up)")
    step = dom.h / scale
    m = int(math.floor(half_width / step))
    if m < 1:
        raise DiagnosticsError("window narrower than one rescaled cell")
    xi = step * np.arange(-m, m + 1)
    px = center[0] + scale * xi
    py = center[1] + scale * xi
    if px.min() < dom.extent[0] or px.max() > dom.extent[2] or py.min() < dom.extent[1] or py.max() > dom.extent[3]:
        raise DiagnosticsError("blow-up window exceeds the domain")
    gxq, gyq = np.meshgrid(px, py, indexing="ij")
    denom = normalization * scale**alpha
    fields = np.stack(
        [g.bilinear_sample(dom, u[i], gxq, gyq) / denom for i in range(spec.d)]
    )
    k = spec.k
    coupling = beta * scale ** (2 + 2 * (k - 1) * alpha) * normalization ** (2 * (k - 1))
    mag = 0.0
    for i in range(spec.d):
        term = coupling * fields[i] * en.interaction_sum(spec, fields, i)
        mag = max(mag, float(np.abs(term).max()))
    return BlowupFrame(center, scale, normalization, alpha, fields, coupling, mag, half_width)

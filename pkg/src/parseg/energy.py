"""Discrete competition energy and its exact first variation.

A multi-component field is a ``(d, nx, ny)`` array, nonnegative on active
nodes and zero on exterior nodes; boundary nodes carry the trace values
when the field is trace-pinned (the solver maintains that).

The Dirichlet part is assembled edge-wise (forward differences on lattice
edges between active nodes), which makes :func:`energy_gradient` the exact
derivative of :func:`energy` with respect to interior node values.  The
coupling part integrates ``(beta/2) sum_J gamma_J prod_{j in J} u_j^2``
over all k-subsets J, and the reaction part subtracts the integrated
primitives of the nonlinearity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grid as g
from .model import ProblemSpec


class EnergyError(ValueError):
    """Field/problem mismatch or infeasible field values."""


@dataclass(frozen=True)
class EnergyBreakdown:
    """The three summands; ``reaction`` is signed as it enters the total."""

    dirichlet: float
    interaction: float
    reaction: float

    @property
    def total(self) -> float:
        return self.dirichlet + self.interaction + self.reaction


def check_field(spec: ProblemSpec, u: np.ndarray, name: str = "field") -> np.ndarray:
    u = np.asarray(u, dtype=float)
    dom = spec.domain
    if u.shape != (spec.d, dom.nx, dom.ny):
        raise EnergyError(f"{name} has shape {u.shape}, expected {(spec.d, dom.nx, dom.ny)}")
    if (u[:, dom.active] < 0).any():
        raise EnergyError(f"{name} has negative values on active nodes")
    return u


def zeros_field(spec: ProblemSpec) -> np.ndarray:
    return np.zeros((spec.d, spec.domain.nx, spec.domain.ny))


def dirichlet_energy(dom: g.Domain, u: np.ndarray) -> float:
    """``1/2 sum_edges (du/h)^2 h^2`` over lattice edges with both ends active."""
    ex = dom.active[1:, :] & dom.active[:-1, :]
    ey = dom.active[:, 1:] & dom.active[:, :-1]
    dx = (u[:, 1:, :] - u[:, :-1, :]) ** 2
    dy = (u[:, :, 1:] - u[:, :, :-1]) ** 2
    return 0.5 * (float(dx[:, ex].sum()) + float(dy[:, ey].sum()))


def interaction_density(spec: ProblemSpec, u: np.ndarray) -> np.ndarray:
    """Pointwise ``sum_J gamma_J prod_{j in J} u_j^2`` over all k-subsets."""
    u2 = u * u
    out = np.zeros_like(u[0])
    for sub in spec.interaction.subsets:
        prod = u2[sub[0]].copy()
        for j in sub[1:]:
            prod *= u2[j]
        out += spec.interaction.gamma_of(sub) * prod
    return out


def interaction_sum(spec: ProblemSpec, u: np.ndarray, i: int) -> np.ndarray:
    """Pointwise ``sum_{J, |J|=k-1, i not in J} gamma(J+{i}) prod_{j in J} u_j^2``."""
    u = np.asarray(u, dtype=float)
    u2 = u * u
    out = np.zeros_like(u[0])
    for sub, gam in spec.interaction.partners(i):
        prod = u2[sub[0]].copy()
        for j in sub[1:]:
            prod *= u2[j]
        out += gam * prod
    return out


def energy(spec: ProblemSpec, u: np.ndarray) -> EnergyBreakdown:
    """Evaluate the competition energy of ``u`` on the problem's domain."""
    u = check_field(spec, u)
    dom = spec.domain
    dir_term = dirichlet_energy(dom, u)
    inter = 0.5 * spec.beta * g.integrate(dom, interaction_density(spec, u))
    reac = 0.0
    for i in range(spec.d):
        reac -= g.integrate(dom, spec.nonlinearity.F(i, u[i], beta=spec.beta))
    return EnergyBreakdown(dir_term, inter, reac)


def limit_energy(spec: ProblemSpec, u: np.ndarray) -> EnergyBreakdown:
    """The segregated-limit energy: coupling term dropped, reaction at its limit."""
    u = check_field(spec, u)
    dom = spec.domain
    dir_term = dirichlet_energy(dom, u)
    reac = 0.0
    for i in range(spec.d):
        reac -= g.integrate(dom, spec.nonlinearity.F(i, u[i], beta=None))
    return EnergyBreakdown(dir_term, 0.0, reac)


def energy_gradient(spec: ProblemSpec, u: np.ndarray) -> np.ndarray:
    """Exact gradient of :func:`energy` w.r.t. interior node values; zero elsewhere.

    Per interior node: ``h^2 (-laplacian(u_i) + beta u_i S_i - f_i(u_i))``
    with ``S_i`` the :func:`interaction_sum`.
    """
    u = check_field(spec, u)
    dom = spec.domain
    h2 = dom.h**2
    out = np.zeros_like(u)
    for i in range(spec.d):
        gi = -g.laplacian(dom, u[i])
        if spec.beta > 0:
            gi += spec.beta * u[i] * interaction_sum(spec, u, i)
        gi -= spec.nonlinearity.f(i, u[i], beta=spec.beta)
        out[i][dom.interior] = h2 * gi[dom.interior]
    return out


def h1_norm(dom: g.Domain, u: np.ndarray) -> float:
    """Discrete H^1 norm: sqrt(sum_i integral(u_i^2) + integral(|grad u_i|^2))."""
    l2sq = sum(g.integrate(dom, u[i] ** 2) for i in range(u.shape[0]))
    return float(np.sqrt(l2sq + 2.0 * dirichlet_energy(dom, u)))


def sup_norm(dom: g.Domain, u: np.ndarray) -> float:
    return float(np.abs(u[:, dom.active]).max())

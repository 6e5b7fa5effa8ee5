"""Problem data: k-wise coupling coefficients, reaction families, boundary traces.

Components are 0-based ``0..d-1`` in code.  Coupling coefficients are stored
per unordered k-subset, so the symmetric lookup ``gamma(J, i) == gamma(J + {i})``
holds by construction.  Traces are built with hard zeros: the partial
segregation condition is an identity, not a tolerance, and is validated
bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations

import numpy as np

from . import grid as g

KINDS = ("zero", "linear", "saturating")
BETA_RULES = ("constant", "damped")
RECIPES = ("rotating-arcs", "pairwise-bumps", "custom")


class ModelError(ValueError):
    """Inconsistent problem data."""


class TraceConstructionError(ModelError):
    """A trace recipe is infeasible for the requested (d, k)."""


def _mask_of(subset) -> int:
    m = 0
    for j in subset:
        m |= 1 << int(j)
    return m


@dataclass(frozen=True)
class InteractionSpec:
    """Order-k coupling among d components with one gamma > 0 per k-subset."""

    d: int
    k: int
    gamma: dict[int, float] = field(repr=False)  # bitmask of the subset -> coefficient

    def __post_init__(self) -> None:
        if self.d < 3:
            raise ModelError(f"need d >= 3 components, got d={self.d}")
        if not (3 <= self.k <= self.d):
            raise ModelError(f"interaction order must satisfy 3 <= k <= d, got k={self.k}, d={self.d}")
        want = math.comb(self.d, self.k)
        if len(self.gamma) != want:
            raise ModelError(f"expected {want} coefficients (one per k-subset), got {len(self.gamma)}")
        for sub in combinations(range(self.d), self.k):
            m = _mask_of(sub)
            if m not in self.gamma:
                raise ModelError(f"missing coefficient for subset {tuple(j + 1 for j in sub)}")
            if not self.gamma[m] > 0:
                raise ModelError(f"coefficient for subset {tuple(j + 1 for j in sub)} must be > 0")

    @classmethod
    def uniform(cls, d: int, k: int, value: float = 1.0) -> "InteractionSpec":
        table = {_mask_of(s): float(value) for s in combinations(range(d), k)}
        return cls(d, k, table)

    @classmethod
    def from_table(cls, d: int, k: int, table: dict) -> "InteractionSpec":
        return cls(d, k, {_mask_of(s): float(v) for s, v in table.items()})

    @cached_property
    def subsets(self) -> tuple[tuple[int, ...], ...]:
        """All k-subsets in lexicographic order."""
        return tuple(combinations(range(self.d), self.k))

    def gamma_of(self, subset) -> float:
        return self.gamma[_mask_of(subset)]

    def partners(self, i: int) -> tuple[tuple[tuple[int, ...], float], ...]:
        """(k-1)-subsets J of the other components with gamma(J + {i}), lexicographic."""
        others = [j for j in range(self.d) if j != i]
        return tuple(
            (sub, self.gamma[_mask_of(sub) | (1 << i)]) for sub in combinations(others, self.k - 1)
        )


@dataclass(frozen=True)
class NonlinearityFamily:
    """Reaction terms f_i(s): zero, linear ``a s`` or saturating ``a s/(1+s)``.

    Defined for s >= 0 and extended oddly, so the primitives F_i are even.
    ``beta_rule`` scales the family along the coupling-strength schedule:
    "constant" keeps it fixed, "damped" multiplies by ``beta/(1+beta)``
    (limit 1 as beta -> infinity).  ``sbar`` is the threshold above which
    the linear bound ``|f| <= a s`` is certified; for these families it
    holds for all s, so it is metadata only.
    """

    kind: str
    a: tuple[float, ...]
    sbar: float = 1.0
    beta_rule: str = "constant"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ModelError(f"unknown nonlinearity kind {self.kind!r}, want one of {KINDS}")
        if self.beta_rule not in BETA_RULES:
            raise ModelError(f"unknown beta rule {self.beta_rule!r}, want one of {BETA_RULES}")
        if any(ai < 0 for ai in self.a):
            raise ModelError("per-component parameters a_i must be >= 0")

    @classmethod
    def zero(cls, d: int) -> "NonlinearityFamily":
        return cls("zero", (0.0,) * d)

    @classmethod
    def linear(cls, a, d: int, beta_rule: str = "constant") -> "NonlinearityFamily":
        return cls("linear", _per_component(a, d), beta_rule=beta_rule)

    @classmethod
    def saturating(cls, a, d: int, sbar: float = 1.0, beta_rule: str = "constant") -> "NonlinearityFamily":
        return cls("saturating", _per_component(a, d), sbar=sbar, beta_rule=beta_rule)

    @property
    def d(self) -> int:
        return len(self.a)

    def beta_scale(self, beta: float | None) -> float:
        """Family multiplier at coupling beta; ``None`` means the beta -> inf limit."""
        if self.beta_rule == "constant" or beta is None:
            return 1.0
        if beta <= 0:
            return 0.0
        return beta / (1.0 + beta)

    def f(self, i: int, s, x=None, beta: float | None = None):
        """f_i at s (odd extension for s < 0); x is accepted for interface parity."""
        s = np.asarray(s, dtype=float)
        a = self.a[i] * self.beta_scale(beta)
        if self.kind == "zero" or a == 0.0:
            return np.zeros_like(s)
        if self.kind == "linear":
            return a * s
        return a * s / (1.0 + np.abs(s))

    def F(self, i: int, s, x=None, beta: float | None = None):
        """Primitive of f_i from 0; even in s."""
        s = np.asarray(s, dtype=float)
        a = self.a[i] * self.beta_scale(beta)
        if self.kind == "zero" or a == 0.0:
            return np.zeros_like(s)
        if self.kind == "linear":
            return 0.5 * a * s**2
        t = np.abs(s)
        return a * (t - np.log1p(t))

    def fprime(self, i: int, s, beta: float | None = None):
        """df_i/ds for s >= 0 (used by Newton region re-solves)."""
        s = np.asarray(s, dtype=float)
        a = self.a[i] * self.beta_scale(beta)
        if self.kind == "zero" or a == 0.0:
            return np.zeros_like(s)
        if self.kind == "linear":
            return np.full_like(s, a)
        return a / (1.0 + s) ** 2

    def grad_x_F(self, i: int, s, x=None, beta: float | None = None):
        """Spatial gradient of F_i; identically zero for these x-independent families."""
        s = np.asarray(s, dtype=float)
        return np.zeros(s.shape + (2,))

    def sup_b(self) -> float:
        """The L-infinity bound b with |f_i(s)| <= b s for s >= sbar (here: all s)."""
        return max(self.a) if self.a else 0.0


def _per_component(a, d: int) -> tuple[float, ...]:
    if np.isscalar(a):
        return (float(a),) * d
    a = tuple(float(v) for v in a)
    if len(a) != d:
        raise ModelError(f"need {d} per-component parameters, got {len(a)}")
    return a


@dataclass(eq=False)
class TraceData:
    """Nonnegative boundary traces with hard-zero supports.

    ``values`` is ``(d, nx, ny)`` and nonzero only on boundary nodes.
    """

    values: np.ndarray
    recipe: str = "custom"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3:
            raise ModelError("trace values must be a (d, nx, ny) array")
        if (self.values < 0).any():
            raise ModelError("traces must be nonnegative")

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def lipschitz_constants(self, dom: g.Domain) -> np.ndarray:
        """Max |difference| / distance over 8-adjacent boundary node pairs, per component."""
        bnd = dom.boundary
        out = np.zeros(self.d)
        for dx, dy, dist in ((1, 0, dom.h), (0, 1, dom.h), (1, 1, dom.h * math.sqrt(2)), (1, -1, dom.h * math.sqrt(2))):
            sa = np.s_[max(dx, 0) : dom.nx + min(dx, 0), max(dy, 0) : dom.ny + min(dy, 0)]
            sb = np.s_[max(-dx, 0) : dom.nx + min(-dx, 0), max(-dy, 0) : dom.ny + min(-dy, 0)]
            pair = bnd[sa] & bnd[sb]
            if not pair.any():
                continue
            diff = np.abs(self.values[:, sa[0], sa[1]] - self.values[:, sb[0], sb[1]])
            out = np.maximum(out, diff[:, pair].max(axis=1) / dist)
        return out


@dataclass(frozen=True)
class TraceValidation:
    passed: bool
    max_product: float
    worst_subset: tuple[int, ...] | None
    worst_node: tuple[int, int] | None


def validate_traces(traces: TraceData, interaction: InteractionSpec, dom: g.Domain) -> TraceValidation:
    """Check the partial segregation condition on the boundary, bit-exactly."""
    if traces.d != interaction.d:
        raise ModelError(f"traces have d={traces.d} but interaction has d={interaction.d}")
    if traces.values.shape[1:] != (dom.nx, dom.ny):
        raise ModelError("trace fields are not sized to the domain")
    bnd = dom.boundary
    vals = traces.values[:, bnd]
    worst = 0.0
    worst_sub = None
    worst_flat = None
    for sub in interaction.subsets:
        prod = np.prod(vals[list(sub)], axis=0)
        j = int(np.argmax(prod))
        if prod[j] > worst:
            worst = float(prod[j])
            worst_sub = sub
            worst_flat = j
    node = None
    if worst_flat is not None:
        bx, by = np.nonzero(bnd)
        node = (int(bx[worst_flat]), int(by[worst_flat]))
    return TraceValidation(worst == 0.0, worst, worst_sub, node)


@dataclass(frozen=True)
class F2Report:
    passed: bool
    eps: float
    lambda1: float
    sup_b: float
    iterations: int


def validate_f2(nonlinearity: NonlinearityFamily, dom: g.Domain) -> F2Report:
    """Certify the spectral gap: sup_i a_i must stay below the discrete lambda_1."""
    lam, iters = g.lambda1_dirichlet(dom)
    b = nonlinearity.sup_b()
    return F2Report(b < lam, 1.0 - b / lam, lam, b, iters)


# -- trace library -------------------------------------------------------------


def boundary_angles(dom: g.Domain) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary node indices and their angles about the domain center, in [0, 2 pi)."""
    bx, by = np.nonzero(dom.boundary)
    cx, cy = dom.center
    ang = np.arctan2(by * dom.h + dom.extent[1] - cy, bx * dom.h + dom.extent[0] - cx)
    return bx, by, np.mod(ang, 2 * math.pi)


def make_trace_library(
    dom: g.Domain,
    d: int,
    k: int,
    recipe: str,
    amplitude: float = 1.0,
    custom_values: np.ndarray | None = None,
) -> TraceData:
    """Construct nonnegative Lipschitz traces satisfying partial segregation.

    * ``rotating-arcs``: component i positive on the angular arc of width
      ``2 pi (k-1)/d`` starting at ``2 pi i/d``; every angle is covered by
      exactly k-1 supports.
    * ``pairwise-bumps``: same construction with arc width ``4 pi/d``
      (coverage multiplicity exactly 2 <= k-1).
    * ``custom``: caller supplies per-node values ``(d, nx, ny)`` on the
      boundary; rejected if any boundary node has k or more positive
      components.

    Profiles are piecewise-linear hats in boundary arclength (angular
    parametrization about the center), zero at arc endpoints.
    """
    if recipe not in RECIPES:
        raise TraceConstructionError(f"unknown recipe {recipe!r}, want one of {RECIPES}")
    if not (3 <= k <= d):
        raise ModelError(f"interaction order must satisfy 3 <= k <= d, got k={k}, d={d}")
    if recipe == "custom":
        if custom_values is None:
            raise TraceConstructionError("custom recipe needs explicit per-node values")
        vals = np.asarray(custom_values, dtype=float).copy()
        if vals.shape != (d, dom.nx, dom.ny):
            raise ModelError("custom trace values must be (d, nx, ny)")
        vals[:, ~dom.boundary] = 0.0
        counts = (vals[:, dom.boundary] > 0).sum(axis=0)
        if counts.size and counts.max() >= k:
            raise TraceConstructionError(
                f"a boundary node has {int(counts.max())} positive components; at most {k - 1} allowed"
            )
        return TraceData(vals, recipe="custom")

    width = {"rotating-arcs": 2 * math.pi * (k - 1) / d, "pairwise-bumps": 4 * math.pi / d}[recipe]
    if width >= 2 * math.pi:
        raise TraceConstructionError(f"recipe {recipe!r} infeasible for d={d}, k={k}: arcs cover the circle")
    bx, by, ang = boundary_angles(dom)
    vals = np.zeros((d, dom.nx, dom.ny))
    for i in range(d):
        start = 2 * math.pi * i / d
        pos = np.mod(ang - start, 2 * math.pi)
        inside = pos < width
        hat = np.where(inside, 1.0 - np.abs(2.0 * pos / width - 1.0), 0.0)
        vals[i, bx, by] = amplitude * hat
    return TraceData(vals, recipe=recipe)


@dataclass(frozen=True)
class ProblemSpec:
    """A complete problem instance; ``beta`` is the coupling strength."""

    domain: g.Domain
    interaction: InteractionSpec
    traces: TraceData
    nonlinearity: NonlinearityFamily
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ModelError(f"beta must be finite and >= 0, got {self.beta}")
        if self.traces.d != self.interaction.d:
            raise ModelError("traces and interaction disagree on d")
        if self.nonlinearity.d != self.interaction.d:
            raise ModelError("nonlinearity and interaction disagree on d")
        if self.traces.values.shape[1:] != (self.domain.nx, self.domain.ny):
            raise ModelError("traces are not sized to the domain")

    @property
    def d(self) -> int:
        return self.interaction.d

    @property
    def k(self) -> int:
        return self.interaction.k

    def at_beta(self, beta: float) -> "ProblemSpec":
        return replace(self, beta=float(beta))

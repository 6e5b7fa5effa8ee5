"""Uniform 2-D grid domains and their discrete calculus.

A domain is a node-based rectangular lattice with spacing ``h`` and a
per-node mask splitting the lattice into interior, boundary and exterior
nodes.  Scalar fields are ``(nx, ny)`` float arrays indexed ``[ix, iy]``
with node ``(ix, iy)`` sitting at ``(x0 + ix*h, y0 + iy*h)``.  All
operations here are pure functions of immutable inputs; summations run
in fixed row-major order so results are bit-reproducible.

The disk domain approximates a smooth boundary with a mask staircase.
That staircase error is a known modeling gap: trend-level experiments
only, no curved-boundary quadrature is attempted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

EXTERIOR = 0
INTERIOR = 1
BOUNDARY = 2


class GridError(ValueError):
    """Invalid grid construction or field/domain mismatch."""


class BallOutsideDomainError(GridError):
    """A sphere/ball probe left the safely-interpolable region."""


class PowerIterationError(RuntimeError):
    """Inverse power iteration failed to converge."""


@dataclass(eq=False)
class Domain:
    """Masked uniform grid with classified nodes.

    Invariants (checked by :meth:`validate`):
      * every interior node has its 4 stencil neighbours inside
        interior-or-boundary,
      * every boundary node touches at least one interior node,
      * ``h > 0`` and ``nx, ny >= 3``.
    """

    nx: int
    ny: int
    h: float
    mask: np.ndarray
    extent: tuple[float, float, float, float]

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=np.uint8)
        if self.mask.shape != (self.nx, self.ny):
            raise GridError(f"mask shape {self.mask.shape} != ({self.nx}, {self.ny})")
        self.validate()

    # -- classification views -------------------------------------------------

    @cached_property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    @cached_property
    def boundary(self) -> np.ndarray:
        return self.mask == BOUNDARY

    @cached_property
    def active(self) -> np.ndarray:
        """Interior union boundary: the nodes a field is defined on."""
        return self.mask != EXTERIOR

    @property
    def n_interior(self) -> int:
        return int(self.interior.sum())

    @property
    def n_boundary(self) -> int:
        return int(self.boundary.sum())

    # -- geometry --------------------------------------------------------------

    @cached_property
    def xs(self) -> np.ndarray:
        return self.extent[0] + self.h * np.arange(self.nx)

    @cached_property
    def ys(self) -> np.ndarray:
        return self.extent[1] + self.h * np.arange(self.ny)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays ``(X, Y)``, each ``(nx, ny)``."""
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @cached_property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.extent
        return (0.5 * (x0 + x1), 0.5 * (y0 + y1))

    def validate(self) -> None:
        if self.nx < 3 or self.ny < 3:
            raise GridError(f"grid must be at least 3x3, got {self.nx}x{self.ny}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise GridError(f"spacing must be positive and finite, got {self.h}")
        m = self.mask
        inter = m == INTERIOR
        if inter[0, :].any() or inter[-1, :].any() or inter[:, 0].any() or inter[:, -1].any():
            raise GridError("interior nodes on the lattice edge have missing stencil neighbours")
        ok = m != EXTERIOR
        core = inter[1:-1, 1:-1]
        neigh_ok = ok[2:, 1:-1] & ok[:-2, 1:-1] & ok[1:-1, 2:] & ok[1:-1, :-2]
        if (core & ~neigh_ok).any():
            raise GridError("an interior node touches an exterior node")
        bnd = m == BOUNDARY
        touch = np.zeros_like(bnd)
        touch[1:, :] |= inter[:-1, :]
        touch[:-1, :] |= inter[1:, :]
        touch[:, 1:] |= inter[:, :-1]
        touch[:, :-1] |= inter[:, 1:]
        if (bnd & ~touch).any():
            raise GridError("a boundary node is not adjacent to any interior node")


@dataclass(frozen=True)
class BallSpec:
    """Closed ball probe (center in physical coordinates, radius in length units)."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GridError(f"ball radius must be positive, got {self.radius}")


# -- constructors -------------------------------------------------------------


def build_rectangle(nx: int, ny: int, h: float) -> Domain:
    """Full rectangle: outermost node ring is boundary, the rest interior."""
    if nx < 3 or ny < 3:
        raise GridError(f"rectangle needs nx, ny >= 3, got {nx}x{ny}")
    mask = np.full((nx, ny), INTERIOR, dtype=np.uint8)
    mask[0, :] = mask[-1, :] = BOUNDARY
    mask[:, 0] = mask[:, -1] = BOUNDARY
    return Domain(nx, ny, h, mask, (0.0, 0.0, (nx - 1) * h, (ny - 1) * h))


def build_disk(n: int, h: float) -> Domain:
    """Masked disk on an n-by-n lattice, radius ``(n - 3) h / 2`` about the center.

    Nodes strictly inside the radius are interior; non-interior nodes
    4-adjacent to an interior node form the boundary staircase; the rest
    are exterior.
    """
    if n < 5:
        raise GridError(f"disk needs n >= 5, got {n}")
    c = (n - 1) * h / 2.0
    radius = (n - 3) * h / 2.0
    xs = h * np.arange(n)
    dx2 = (xs - c) ** 2
    rr = dx2[:, None] + dx2[None, :]
    inter = rr < radius**2
    mask = np.full((n, n), EXTERIOR, dtype=np.uint8)
    mask[inter] = INTERIOR
    touch = np.zeros_like(inter)
    touch[1:, :] |= inter[:-1, :]
    touch[:-1, :] |= inter[1:, :]
    touch[:, 1:] |= inter[:, :-1]
    touch[:, :-1] |= inter[:, 1:]
    mask[touch & ~inter] = BOUNDARY
    return Domain(n, n, h, mask, (0.0, 0.0, (n - 1) * h, (n - 1) * h))


# -- grid calculus ------------------------------------------------------------


def laplacian(dom: Domain, field: np.ndarray) -> np.ndarray:
    """5-point Laplacian ``(E + W + N + S - 4C)/h^2`` on interior nodes, 0 elsewhere."""
    f = _check_field(dom, field)
    out = np.zeros_like(f)
    core = (
        f[2:, 1:-1] + f[:-2, 1:-1] + f[1:-1, 2:] + f[1:-1, :-2] - 4.0 * f[1:-1, 1:-1]
    ) / dom.h**2
    out[1:-1, 1:-1] = core
    out[~dom.interior] = 0.0
    return out


def integrate(dom: Domain, field: np.ndarray) -> float:
    """Node quadrature: ``h^2`` per interior node, ``h^2/2`` per boundary node."""
    f = _check_field(dom, field)
    return dom.h**2 * (float(f[dom.interior].sum()) + 0.5 * float(f[dom.boundary].sum()))


def bilinear_sample(dom: Domain, field: np.ndarray, xq: np.ndarray, yq: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at physical points; all stencil corners must be active."""
    f = _check_field(dom, field)
    xq = np.asarray(xq, dtype=float)
    yq = np.asarray(yq, dtype=float)
    gx = (xq - dom.extent[0]) / dom.h
    gy = (yq - dom.extent[1]) / dom.h
    ix = np.floor(gx).astype(int)
    iy = np.floor(gy).astype(int)
    if (ix < 0).any() or (iy < 0).any() or (ix > dom.nx - 2).any() or (iy > dom.ny - 2).any():
        raise BallOutsideDomainError("sample point outside the lattice")
    corners_ok = (
        dom.active[ix, iy]
        & dom.active[ix + 1, iy]
        & dom.active[ix, iy + 1]
        & dom.active[ix + 1, iy + 1]
    )
    if not corners_ok.all():
        raise BallOutsideDomainError("sample stencil touches an exterior node")
    tx = gx - ix
    ty = gy - iy
    return (
        f[ix, iy] * (1 - tx) * (1 - ty)
        + f[ix + 1, iy] * tx * (1 - ty)
        + f[ix, iy + 1] * (1 - tx) * ty
        + f[ix + 1, iy + 1] * tx * ty
    )


def sphere_trace(
    dom: Domain, ball: BallSpec, field: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample ``field`` and its radial derivative on the circle of ``ball``.

    Uses ``m = ceil(2 pi r / h)`` equispaced angles, bilinear interpolation
    for values and centered radial differencing (offset ``h``) for the
    normal derivative.  Returns ``(angles, values, normal_derivatives)``.
    """
    r = ball.radius
    m = int(math.ceil(2 * math.pi * r / dom.h))
    angles = 2 * math.pi * np.arange(m) / m
    cx, cy = ball.center
    ca, sa = np.cos(angles), np.sin(angles)
    if r - dom.h <= 0:
        raise BallOutsideDomainError("ball radius must exceed one cell for radial differencing")
    values = bilinear_sample(dom, field, cx + r * ca, cy + r * sa)
    outer = bilinear_sample(dom, field, cx + (r + dom.h) * ca, cy + (r + dom.h) * sa)
    inner = bilinear_sample(dom, field, cx + (r - dom.h) * ca, cy + (r - dom.h) * sa)
    normal = (outer - inner) / (2 * dom.h)
    return angles, values, normal


# -- sparse Dirichlet machinery -----------------------------------------------


def dirichlet_system(
    dom: Domain, unknown: np.ndarray, data: np.ndarray
) -> tuple[sp.csr_matrix, np.ndarray, tuple[np.ndarray, np.ndarray]]:
    """Assemble ``-laplacian`` over the ``unknown`` nodes with Dirichlet data.

    ``unknown`` must be a boolean subset of the interior.  ``data`` supplies
    values at active non-unknown neighbours (boundary traces, frozen zeros).
    Returns ``(A, rhs, (ix, iy))`` with unknowns ordered row-major.
    """
    unknown = np.asarray(unknown, dtype=bool)
    if (unknown & ~dom.interior).any():
        raise GridError("unknown set must be contained in the interior")
    idx = -np.ones((dom.nx, dom.ny), dtype=np.int64)
    ux, uy = np.nonzero(unknown)
    n = ux.size
    if n == 0:
        raise GridError("empty unknown set")
    idx[ux, uy] = np.arange(n)
    h2 = dom.h**2
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [np.full(n, 4.0 / h2)]
    rhs = np.zeros(n)
    data = _check_field(dom, data)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nxi, nyi = ux + dx, uy + dy
        nb_idx = idx[nxi, nyi]
        inside = nb_idx >= 0
        rows.append(np.arange(n)[inside])
        cols.append(nb_idx[inside])
        vals.append(np.full(int(inside.sum()), -1.0 / h2))
        known = ~inside
        rhs[known] += data[nxi[known], nyi[known]] / h2
    a = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return a, rhs, (ux, uy)


def harmonic_extension(dom: Domain, boundary_values: np.ndarray) -> np.ndarray:
    """Solve the 5-point Laplace system with the given boundary data."""
    a, rhs, (ux, uy) = dirichlet_system(dom, dom.interior, boundary_values)
    sol = spla.spsolve(a.tocsc(), rhs)
    out = np.zeros((dom.nx, dom.ny))
    out[ux, uy] = sol
    bv = _check_field(dom, boundary_values)
    out[dom.boundary] = bv[dom.boundary]
    return out


def lambda1_dirichlet(dom: Domain, tol: float = 1e-8, max_iters: int = 100_000) -> tuple[float, int]:
    """Smallest Dirichlet eigenvalue of ``-laplacian`` by inverse power iteration.

    Stops when the Rayleigh quotient is stable to relative ``tol``.
    """
    a, _, _ = dirichlet_system(dom, dom.interior, np.zeros((dom.nx, dom.ny)))
    lu = spla.splu(a.tocsc())
    v = np.ones(a.shape[0])
    v /= np.linalg.norm(v)
    rho_prev = float(v @ (a @ v))
    for it in range(1, max_iters + 1):
        w = lu.solve(v)
        v = w / np.linalg.norm(w)
        rho = float(v @ (a @ v))
        if abs(rho - rho_prev) <= tol * abs(rho):
            return rho, it
        rho_prev = rho
    raise PowerIterationError(f"Rayleigh quotient not stable after {max_iters} iterations")


def _check_field(dom: Domain, field: np.ndarray) -> np.ndarray:
    f = np.asarray(field, dtype=float)
    if f.shape != (dom.nx, dom.ny):
        raise GridError(f"field shape {f.shape} does not match domain ({dom.nx}, {dom.ny})")
    return f

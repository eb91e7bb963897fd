"""Bilinear finite elements on the unit square and the discrete Dirichlet-to-Neumann map.

The mesh is the uniform grid with ``2**level`` cells per dimension. Boundary nodes
are numbered counterclockwise starting at the corner (0, 0), so the DtN matrix
rows and columns follow the closed boundary curve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

# Q1 stiffness on a square element, nodes (0,0), (1,0), (1,1), (0,1); independent of h in 2D.
_KLOC = np.array(
    [
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ]
) / 6.0


def _kloc_factor() -> np.ndarray:
    # KLOC = B.T @ B with B of shape (3, 4); used to form pixel Gram matrices.
    w, v = np.linalg.eigh(_KLOC)
    keep = w > 1e-12
    return (v[:, keep] * np.sqrt(w[keep])).T


_BLOC = _kloc_factor()


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on [0, 1]^2 with ``2**level + 1`` nodes per dimension."""

    level: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"level must be >= 1, got {self.level}")

    @property
    def cells_per_dim(self) -> int:
        return 2**self.level

    @property
    def nodes_per_dim(self) -> int:
        return 2**self.level + 1

    @property
    def mesh_size(self) -> float:
        return 1.0 / self.cells_per_dim

    @property
    def boundary_count(self) -> int:
        return 2 ** (self.level + 2)

    @property
    def node_count(self) -> int:
        return self.nodes_per_dim**2

    @cached_property
    def node_coords(self) -> np.ndarray:
        t = np.linspace(0.0, 1.0, self.nodes_per_dim)
        x, y = np.meshgrid(t, t)
        return np.column_stack([x.ravel(), y.ravel()])

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Global node ids of the boundary, counterclockwise from (0, 0)."""
        m = self.nodes_per_dim
        k = np.arange(m - 1)
        bottom = k
        right = (m - 1) + k * m
        top = (m - 1) * m + (m - 1 - k)
        left = (m - 1 - k) * m
        return np.concatenate([bottom, right, top, left])

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.node_count, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def boundary_coords(self) -> np.ndarray:
        return self.node_coords[self.boundary_nodes]

    @property
    def boundary_arclength(self) -> np.ndarray:
        """Arclength of each boundary node, in [0, 4)."""
        return np.arange(self.boundary_count) * self.mesh_size

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """(cells, 4) node ids, counterclockwise; element id = cy * N + cx."""
        n, m = self.cells_per_dim, self.nodes_per_dim
        cy, cx = np.divmod(np.arange(n * n), n)
        base = cy * m + cx
        return np.column_stack([base, base + 1, base + m + 1, base + m])


def pixel_average(param_grid: int, f: Callable, supersample: int = 4) -> np.ndarray:
    s = supersample
    t = (np.arange(param_grid * s) + 0.5) / (param_grid * s)
    x, y = np.meshgrid(t, t)
    v = np.asarray(f(x, y), dtype=float)
    return v.reshape(param_grid, s, param_grid, s).mean(axis=(1, 3))


@dataclass(frozen=True, eq=False)
class ConductivityField:
    """Piecewise-constant conductivity on a square pixel grid.

    ``values[iy, ix]`` is the conductivity on pixel column ``ix`` and row ``iy``
    (row index increasing with y).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            p = int(round(np.sqrt(v.size)))
            if p * p != v.size:
                raise ValueError("flat conductivity vector must have a square length")
            v = v.reshape(p, p)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"conductivity must be a square pixel array, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("conductivity must be finite")
        if np.any(v <= 0):
            raise ValueError("conductivity must be strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, param_grid: int, value: float = 1.0) -> "ConductivityField":
        return cls(np.full((param_grid, param_grid), float(value)))

    @classmethod
    def from_function(cls, param_grid: int, f: Callable, supersample: int = 4) -> "ConductivityField":
        """Average ``f(x, y)`` over each pixel with a ``supersample**2`` midpoint rule."""
        return cls(pixel_average(param_grid, f, supersample))

    @property
    def param_grid(self) -> int:
        return self.values.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return self.values.ravel()

    def element_pixels(self, grid: GridSpec) -> np.ndarray:
        """Pixel index of every FE cell; raises if the pixel grid does not nest."""
        n, p = grid.cells_per_dim, self.param_grid
        if n % p:
            raise ValueError(f"param grid {p} does not divide the {n}-cell FE grid")
        r = n // p
        cy, cx = np.divmod(np.arange(n * n), n)
        return (cy // r) * p + cx // r

    def element_values(self, grid: GridSpec) -> np.ndarray:
        return self.vector[self.element_pixels(grid)]


@dataclass(frozen=True, eq=False)
class ItoMatrix:
    """Dense input-to-output matrix with its discretization metadata."""

    entries: np.ndarray
    kind: str = "dtn"
    grid: GridSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("dtn", "albedo"):
            raise ValueError(f"unknown ItO kind {self.kind!r}")
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2:
            raise ValueError("ItO entries must be a matrix")
        object.__setattr__(self, "entries", e)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def _assemble(grid: GridSpec, elem_a: np.ndarray) -> sp.csr_matrix:
    en = grid.element_nodes
    rows = np.repeat(en, 4, axis=1).ravel()
    cols = np.tile(en, (1, 4)).ravel()
    vals = (elem_a[:, None] * _KLOC.ravel()[None, :]).ravel()
    return sp.coo_matrix((vals, (rows, cols)), shape=(grid.node_count,) * 2).tocsr()


class StiffnessSystem:
    """Stiffness matrix split into interior/boundary blocks with a reusable interior solve.

    Args:
        grid: FE grid.
        a: conductivity; its pixel grid must divide the cell grid.
    """

    def __init__(self, grid: GridSpec, a: ConductivityField):
        self.grid = grid
        self.a = a
        S = _assemble(grid, a.element_values(grid))
        ii, bb = grid.interior_nodes, grid.boundary_nodes
        self.S = S
        self.S_ii = S[ii][:, ii].tocsc()
        self.S_ib = S[ii][:, bb].tocsc()
        self.S_bi = S[bb][:, ii].tocsr()
        self.S_bb = S[bb][:, bb].toarray()
        # S_ii is SPD; symmetric ordering keeps the LU fill close to a Cholesky factor.
        self._lu = splu(self.S_ii, permc_spec="MMD_AT_PLUS_A")

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        out = self._lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(out)):
            raise np.linalg.LinAlgError("interior stiffness solve produced non-finite values")
        return out

    def dtn_columns(self, cols: np.ndarray | None = None, chunk: int = 128) -> np.ndarray:
        """Columns of S_bb - S_bi S_ii^{-1} S_ib; all of them when ``cols`` is None."""
        n = self.grid.boundary_count
        cols = np.arange(n) if cols is None else np.asarray(cols)
        out = np.empty((n, cols.size))
        for start in range(0, cols.size, chunk):
            c = cols[start : start + chunk]
            X = self.solve_interior(self.S_ib[:, c].toarray())
            out[:, start : start + c.size] = self.S_bb[:, c] - self.S_bi @ X
        return out

    def harmonic_extension(self) -> np.ndarray:
        """(nodes, n) nodal values of the discrete a-harmonic lift of each boundary hat function."""
        g = self.grid
        U = np.zeros((g.node_count, g.boundary_count))
        U[g.boundary_nodes, np.arange(g.boundary_count)] = 1.0
        U[g.interior_nodes] = -self.solve_interior(self.S_ib.toarray())
        return U


def assemble_dtn(grid: GridSpec, a: ConductivityField) -> ItoMatrix:
    """Discrete DtN matrix as the Schur complement of the stiffness matrix.

    Entry (i, j) is the energy pairing of the discrete harmonic lifts of boundary
    hat functions i and j, so the result is symmetric and annihilates constants.
    """
    system = StiffnessSystem(grid, a)
    lam = system.dtn_columns()
    lam = 0.5 * (lam + lam.T)
    return ItoMatrix(lam, kind="dtn", grid=grid)


def dtn_block(grid: GridSpec, a: ConductivityField, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """A sub-block of the DtN matrix, solving only for the requested columns."""
    system = StiffnessSystem(grid, a)
    return system.dtn_columns(np.asarray(cols))[np.asarray(rows)]


def boundary_project(grid: GridSpec, f: Callable, *, arclength: bool = False) -> np.ndarray:
    """Nodal interpolation of boundary data at the cyclically ordered boundary nodes.

    ``f`` is called as ``f(x, y)`` or, with ``arclength=True``, as ``f(s)`` with the
    counterclockwise arclength ``s`` in [0, 4).
    """
    if arclength:
        vals = f(grid.boundary_arclength)
    else:
        xy = grid.boundary_coords
        vals = f(xy[:, 0], xy[:, 1])
    return np.broadcast_to(np.asarray(vals, dtype=float), (grid.boundary_count,)).copy()


def boundary_mass(grid: GridSpec) -> np.ndarray:
    """P1 mass matrix of the closed boundary polyline."""
    n, h = grid.boundary_count, grid.mesh_size
    M = np.zeros((n, n))
    i = np.arange(n)
    M[i, i] = 2.0 * h / 3.0
    M[i, (i + 1) % n] = h / 6.0
    M[(i + 1) % n, i] = h / 6.0
    return M


def jacobian_dtn(grid: GridSpec, a: ConductivityField, system: StiffnessSystem | None = None) -> np.ndarray:
    """Sensitivity of the DtN matrix to each conductivity pixel.

    Returns:
        Array of shape (n, n, pixels); slice ``[:, :, k]`` is U^T S_k U where U holds
        the discrete harmonic lifts and S_k the unit-conductivity stiffness of pixel k.
    """
    system = system or StiffnessSystem(grid, a)
    U = system.harmonic_extension()
    pix = a.element_pixels(grid)
    en = grid.element_nodes
    n = grid.boundary_count
    npix = a.param_grid**2
    order = np.argsort(pix, kind="stable")
    counts = np.bincount(pix, minlength=npix)
    J = np.empty((npix, n, n))
    start = 0
    for k in range(npix):
        elems = order[start : start + counts[k]]
        start += counts[k]
        # (elems, 4, n) -> (elems * 3, n) rows of B @ U_e
        W = np.einsum("ab,ebn->ean", _BLOC, U[en[elems]]).reshape(-1, n)
        J[k] = W.T @ W
    return np.moveaxis(J, 0, -1)

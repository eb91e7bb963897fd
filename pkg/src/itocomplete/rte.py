"""Steady radiative transfer on the unit square and its albedo (inflow-to-outflow) matrix.

Discrete ordinates theta_m = 2 pi (m + 1/2) / M with equal weights 1/M, upwind finite
volumes on an n x n cell grid. Boundary phase-space nodes are pairs (boundary face,
ordinate); faces run counterclockwise from the corner (0, 0) like the DtN boundary nodes,
and each face lists its incoming (or outgoing) ordinates in increasing m. Like the DtN
matrix (nodal values in, integrated boundary flux out), albedo entries are the outflow flux
through a face per unit inflow value. Dividing column k by the inflow flux weight of node k
gives flux-per-flux entries whose columns sum to one in a purely scattering medium.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

GROUPING = "face-major: counterclockwise boundary faces, ordinates ascending within a face"


@dataclass(frozen=True, eq=False)
class RteProblem:
    """Transport problem v . grad f = (sigma_s / Kn) (rho - f), rho = angular average of f."""

    sigma_s: np.ndarray
    knudsen: float
    n_angles: int = 16

    def __post_init__(self):
        s = np.asarray(self.sigma_s, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("sigma_s must be a square cell array")
        if not np.all(np.isfinite(s)) or s.min() < 0:
            raise ValueError("sigma_s must be finite and non-negative")
        if self.knudsen <= 0:
            raise ValueError("Knudsen number must be positive")
        if self.n_angles < 4 or self.n_angles % 4:
            raise ValueError("n_angles must be a positive multiple of 4")
        object.__setattr__(self, "sigma_s", s)

    @classmethod
    def homogeneous(cls, n_space: int, knudsen: float, n_angles: int = 16, sigma: float = 1.0) -> "RteProblem":
        return cls(np.full((n_space, n_space), float(sigma)), knudsen, n_angles)

    @classmethod
    def smooth(cls, n_space: int, knudsen: float, n_angles: int = 16) -> "RteProblem":
        """Default heterogeneous medium: unit background with a Gaussian bump of height 1."""
        c = (np.arange(n_space) + 0.5) / n_space
        x, y = np.meshgrid(c, c, indexing="ij")
        return cls(1.0 + np.exp(-((x - 0.6) ** 2 + (y - 0.45) ** 2) / 0.05), knudsen, n_angles)

    @property
    def n_space(self) -> int:
        return self.sigma_s.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n_space

    @cached_property
    def directions(self) -> np.ndarray:
        th = 2 * np.pi * (np.arange(self.n_angles) + 0.5) / self.n_angles
        return np.stack([np.cos(th), np.sin(th)], axis=1)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_angles, 1.0 / self.n_angles)

    @cached_property
    def faces(self) -> list[tuple[int, int, int]]:
        """Boundary faces as (cell x index, cell y index, side) counterclockwise from (0, 0).

        side: 0 bottom, 1 right, 2 top, 3 left.
        """
        n = self.n_space
        out = [(i, 0, 0) for i in range(n)]
        out += [(n - 1, j, 1) for j in range(n)]
        out += [(i, n - 1, 2) for i in reversed(range(n))]
        out += [(0, j, 3) for j in reversed(range(n))]
        return out

    @cached_property
    def _normals(self) -> np.ndarray:
        return np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

    def _phase_nodes(self, incoming: bool) -> list[tuple[int, int]]:
        nodes = []
        for f, (_, _, side) in enumerate(self.faces):
            vn = self.directions @ self._normals[side]
            ms = np.nonzero(vn < 0)[0] if incoming else np.nonzero(vn > 0)[0]
            nodes += [(f, int(m)) for m in ms]
        return nodes

    @cached_property
    def inflow_nodes(self) -> list[tuple[int, int]]:
        """(face, ordinate) pairs of Gamma_-."""
        return self._phase_nodes(True)

    @cached_property
    def outflow_nodes(self) -> list[tuple[int, int]]:
        """(face, ordinate) pairs of Gamma_+."""
        return self._phase_nodes(False)

    def face_flux_weight(self, face: int, m: int) -> float:
        """|v . n| * w_m * face length: converts a boundary value into a flux."""
        side = self.faces[face][2]
        return abs(float(self.directions[m] @ self._normals[side])) * self.weights[m] * self.h

    @cached_property
    def _sweeps(self) -> list:
        """Per-ordinate upwind operator T_m (factored) and the inflow-to-cell coupling."""
        n, h = self.n_space, self.h
        sig = (self.sigma_s / self.knudsen).ravel()
        idx = np.arange(n * n).reshape(n, n)  # cell (i, j) -> i * n + j, i along x
        out = []
        for m, (cx, cy) in enumerate(self.directions):
            diag = h * (abs(cx) + abs(cy)) + h * h * sig
            rows, cols, vals = [idx.ravel()], [idx.ravel()], [diag]
            # upwind neighbour in x
            if cx > 0:
                rows.append(idx[1:, :].ravel()); cols.append(idx[:-1, :].ravel())
            else:
                rows.append(idx[:-1, :].ravel()); cols.append(idx[1:, :].ravel())
            vals.append(np.full(rows[-1].size, -h * abs(cx)))
            if cy > 0:
                rows.append(idx[:, 1:].ravel()); cols.append(idx[:, :-1].ravel())
            else:
                rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel())
            vals.append(np.full(rows[-1].size, -h * abs(cy)))
            T = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n,) * 2)
            out.append(spla.splu(T))
        return out

    def cell_of_face(self, face: int) -> int:
        i, j, _ = self.faces[face]
        return i * self.n_space + j

    def inflow_coefficient(self, face: int, m: int) -> float:
        """Cell-equation coefficient of the inflow value on ``face`` for ordinate m."""
        side = self.faces[face][2]
        return self.h * abs(float(self.directions[m] @ self._normals[side]))


@dataclass
class RteSolution:
    angular: np.ndarray  # (M, n_cells)
    rho: np.ndarray
    iterations: int
    residual: float
    method: str


def _inflow_sources(problem: RteProblem, inflow: np.ndarray) -> np.ndarray:
    """Cell source b_m from inflow boundary values, shape (M, cells, k)."""
    nc = problem.n_space**2
    inflow = inflow.reshape(len(problem.inflow_nodes), -1)
    b = np.zeros((problem.n_angles, nc, inflow.shape[1]))
    for k, (f, m) in enumerate(problem.inflow_nodes):
        b[m, problem.cell_of_face(f)] += problem.inflow_coefficient(f, m) * inflow[k]
    return b


def _sweep_all(problem: RteProblem, rho: np.ndarray, b: np.ndarray) -> np.ndarray:
    src = (problem.h**2 * problem.sigma_s.ravel() / problem.knudsen)[:, None] * rho
    return np.stack([lu.solve(src + b[m]) for m, lu in enumerate(problem._sweeps)])


def _direct_rho(problem: RteProblem, b: np.ndarray) -> np.ndarray:
    """Solve (I - K) rho = sum_m w_m T_m^{-1} b_m with K = sum_m w_m T_m^{-1} S."""
    nc = problem.n_space**2
    S = problem.h**2 * problem.sigma_s.ravel() / problem.knudsen
    K = np.zeros((nc, nc))
    rhs = np.zeros((nc, b.shape[2]))
    active = np.nonzero(S)[0]
    for m, lu in enumerate(problem._sweeps):
        w = problem.weights[m]
        if active.size:
            E = np.zeros((nc, active.size))
            E[active, np.arange(active.size)] = S[active]
            K[:, active] += w * lu.solve(E)
        rhs += w * lu.solve(b[m])
    return np.linalg.solve(np.eye(nc) - K, rhs)


def _outflow(problem: RteProblem, angular: np.ndarray) -> np.ndarray:
    return np.stack([angular[m, problem.cell_of_face(f)] for f, m in problem.outflow_nodes])


def solve_rte(problem: RteProblem, inflow: np.ndarray, tol: float = 1e-10, max_iter: int = 2000,
              return_solution: bool = False):
    """Outflow values on Gamma_+ for inflow values on Gamma_-.

    Source iteration on the scalar flux until the relative change is below ``tol``; when that
    stalls (small Knudsen numbers) the scalar flux is solved for directly.

    Args:
        problem: medium and discretization.
        inflow: values f(x, v) at ``problem.inflow_nodes``; a second axis solves several at once.
        tol: relative tolerance on the scalar-flux update.
        max_iter: source-iteration cap before the direct fallback.
        return_solution: also return the full ``RteSolution``.
    """
    inflow = np.asarray(inflow, dtype=float)
    single = inflow.ndim == 1
    if inflow.shape[0] != len(problem.inflow_nodes):
        raise ValueError(f"expected {len(problem.inflow_nodes)} inflow values, got {inflow.shape[0]}")
    b = _inflow_sources(problem, inflow)
    w = problem.weights
    rho = np.zeros(b.shape[1:])
    method, it, res = "source-iteration", 0, np.inf
    if problem.sigma_s.max() == 0:
        angular = _sweep_all(problem, rho, b)
        rho, res = np.tensordot(w, angular, axes=1), 0.0
    else:
        for it in range(1, max_iter + 1):
            angular = _sweep_all(problem, rho, b)
            new = np.tensordot(w, angular, axes=1)
            res = float(np.linalg.norm(new - rho) / max(np.linalg.norm(new), 1e-300))
            rho = new
            if res <= tol:
                break
            # estimated remaining iterations from the observed contraction
            if it >= 20 and res > tol * 1e4 and it * 50 > max_iter:
                break
        if res > tol:
            log.info("source iteration at %.2e after %d sweeps; solving the scalar flux directly", res, it)
            rho = _direct_rho(problem, b)
            method = "direct"
            angular = _sweep_all(problem, rho, b)
            res = float(np.linalg.norm(np.tensordot(w, angular, axes=1) - rho) / max(np.linalg.norm(rho), 1e-300))
    out = _outflow(problem, angular)
    if single:
        out = out[:, 0]
    if return_solution:
        return out, RteSolution(angular, rho, it, res, method)
    return out


@dataclass
class AlbedoMatrix:
    entries: np.ndarray
    inflow_nodes: list[tuple[int, int]]
    outflow_nodes: list[tuple[int, int]]
    inflow_weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def flux_normalized(self) -> np.ndarray:
        """Outflow flux per unit inflow flux."""
        return self.entries / self.inflow_weights[None, :]

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


def assemble_albedo(problem: RteProblem, chunk: int = 512) -> AlbedoMatrix:
    """Albedo matrix; column k holds the outflow fluxes produced by unit inflow value at inflow node k."""
    nin = len(problem.inflow_nodes)
    win = np.array([problem.face_flux_weight(f, m) for f, m in problem.inflow_nodes])
    wout = np.array([problem.face_flux_weight(f, m) for f, m in problem.outflow_nodes])
    A = np.empty((len(problem.outflow_nodes), nin))
    for s in range(0, nin, chunk):
        k = np.arange(s, min(s + chunk, nin))
        E = np.zeros((nin, k.size))
        E[k, np.arange(k.size)] = 1.0
        b = _inflow_sources(problem, E)
        if problem.sigma_s.max() == 0:
            rho = np.zeros(b.shape[1:])
        else:
            rho = _direct_rho(problem, b)
        A[:, k] = wout[:, None] * _outflow(problem, _sweep_all(problem, rho, b))
    meta = dict(knudsen=problem.knudsen, n_space=problem.n_space, n_angles=problem.n_angles, grouping=GROUPING)
    return AlbedoMatrix(A, problem.inflow_nodes, problem.outflow_nodes, win, meta)


def diffusion_limit(problem: RteProblem, boundary_value: np.ndarray) -> np.ndarray:
    """Cell values of the diffusion limit -div(sigma^-1 grad rho) = 0, rho = g on the boundary faces.

    Args:
        boundary_value: one Dirichlet value per boundary face (``problem.faces`` order).
    """
    n, s = problem.n_space, problem.sigma_s
    D = 1.0 / np.maximum(s, 1e-300)
    idx = np.arange(n * n).reshape(n, n)
    rows, cols, vals = [], [], []
    rhs = np.zeros(n * n)
    diag = np.zeros(n * n)
    # interior faces: harmonic mean of the two cell diffusivities
    for axis in (0, 1):
        a = idx[:-1, :] if axis == 0 else idx[:, :-1]
        b = idx[1:, :] if axis == 0 else idx[:, 1:]
        Da = D[:-1, :] if axis == 0 else D[:, :-1]
        Db = D[1:, :] if axis == 0 else D[:, 1:]
        t = (2 * Da * Db / (Da + Db)).ravel()
        a, b = a.ravel(), b.ravel()
        rows += [a, b]; cols += [b, a]; vals += [-t, -t]
        np.add.at(diag, a, t)
        np.add.at(diag, b, t)
    # boundary faces: half-cell distance to the Dirichlet value
    for f, (i, j, _) in enumerate(problem.faces):
        c = idx[i, j]
        t = 2 * D[i, j]
        diag[c] += t
        rhs[c] += t * boundary_value[f]
    rows.append(idx.ravel()); cols.append(idx.ravel()); vals.append(diag)
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n * n,) * 2)
    return spla.spsolve(A, rhs)


def face_values(problem: RteProblem, func) -> np.ndarray:
    """func(x, y) at the midpoints of the boundary faces."""
    h = problem.h
    pts = []
    for i, j, side in problem.faces:
        cx, cy = (i + 0.5) * h, (j + 0.5) * h
        pts.append({0: (cx, 0.0), 1: (1.0, cy), 2: (cx, 1.0), 3: (0.0, cy)}[side])
    pts = np.array(pts)
    return np.asarray(func(pts[:, 0], pts[:, 1]), dtype=float)


def diffusion_discrepancy(problem: RteProblem, func) -> float:
    """Max gap between RTE outflow and the diffusion-limit boundary-cell profile for isotropic inflow func."""
    g = face_values(problem, func)
    inflow = np.array([g[f] for f, _ in problem.inflow_nodes])
    out = solve_rte(problem, inflow)
    rho_d = diffusion_limit(problem, g)
    ref = np.array([rho_d[problem.cell_of_face(f)] for f, _ in problem.outflow_nodes])
    return float(np.max(np.abs(out - ref)))

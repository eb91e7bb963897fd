"""Conductivity reconstruction from DtN data by damped Gauss-Newton on the Frobenius misfit."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .fem import ConductivityField, GridSpec, StiffnessSystem, jacobian_dtn

log = logging.getLogger(__name__)

FULL = "full-matrix"
MASKED = "masked-entries"


@dataclass(frozen=True)
class InversionConfig:
    init: float = 1.0
    param_grid: int = 16
    grad_tol: float = 1e-9
    max_iter: int = 10000
    lam0: float = 1e-3
    lam_up: float = 10.0
    lam_down: float = 10.0
    lam_max: float = 1e12
    positivity_floor: float = 1e-3
    log_param: bool = False
    stagnation_tol: float = 1e-14
    stagnation_iters: int = 20
    reg_alpha: float = 0.0
    reg_beta: float = 0.0

    def __post_init__(self):
        if self.grad_tol <= 0 or self.positivity_floor <= 0:
            raise ValueError("grad_tol and positivity_floor must be positive")
        if self.reg_alpha < 0 or self.reg_beta < 0:
            raise ValueError("regularization weights must be non-negative")
        if self.reg_alpha or self.reg_beta:
            raise NotImplementedError("only the unregularized misfit is implemented")


@dataclass
class MisfitTarget:
    """Data to fit: a full matrix, or values on a boolean mask of observed entries."""

    data: np.ndarray
    mode: str = FULL
    observed: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.mode == MASKED:
            if self.observed is None:
                raise ValueError("masked mode needs the observation mask")
            self.observed = np.asarray(self.observed, dtype=bool)
            if self.observed.shape != self.data.shape:
                raise ValueError("mask and data shapes differ")
        elif self.mode == FULL:
            if not np.all(np.isfinite(self.data)):
                raise ValueError("full-matrix mode needs a complete finite matrix")
        else:
            raise ValueError(f"unknown misfit mode {self.mode!r}")

    def selection(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        """Compared index pairs, their weights and target values, plus the constant offset.

        In full mode the DtN matrix is symmetric, so the misfit is folded onto the upper
        triangle against the symmetrized data; the skew part of the data is a constant.
        """
        n = self.data.shape[0]
        if self.mode == FULL:
            sym = 0.5 * (self.data + self.data.T)
            skew = self.data - sym
            i, j = np.triu_indices(n)
            w = np.where(i == j, 1.0, np.sqrt(2.0))
            return i, j, w * sym[i, j], float(np.sum(skew**2))
        i, j = np.nonzero(self.observed)
        return i, j, self.data[i, j], 0.0


class _Residual:
    """Residual vector of the compared entries at one conductivity, Jacobian on demand."""

    def __init__(self, grid: GridSpec, a: ConductivityField, target: MisfitTarget):
        self.grid, self.a = grid, a
        self.i, self.j, d, self.offset = target.selection()
        if target.mode == FULL:
            self.w = np.where(self.i == self.j, 1.0, np.sqrt(2.0))
        else:
            self.w = np.ones(self.i.size)
        self.system = StiffnessSystem(grid, a)
        lam = self.system.dtn_columns()
        lam = 0.5 * (lam + lam.T)
        self.r = self.w * lam[self.i, self.j] - d
        self.value = float(self.r @ self.r + self.offset)

    def jacobian(self) -> np.ndarray:
        J = jacobian_dtn(self.grid, self.a, self.system)
        return self.w[:, None] * J[self.i, self.j, :]


def misfit(a: ConductivityField, target: MisfitTarget, grid: GridSpec) -> tuple[float, np.ndarray]:
    """Sum of squared DtN residuals over the compared entries and its gradient in the pixel values."""
    n = grid.boundary_count
    if target.data.shape != (n, n):
        raise ValueError(f"target shape {target.data.shape} does not match the {n}-node boundary")
    res = _Residual(grid, a, target)
    return res.value, 2.0 * res.jacobian().T @ res.r


@dataclass
class InversionTrace:
    rows: list[tuple] = field(default_factory=list)
    status: str = "running"

    def add(self, it, value, grad_norm, lam, accepted):
        self.rows.append((it, value, grad_norm, lam, int(accepted)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "misfit", "grad_norm", "lambda", "accepted"])
        for it, v, g, lam, acc in self.rows:
            w.writerow([it, f"{v:.12e}", f"{g:.6e}", f"{lam:.3e}", acc])
        return buf.getvalue()

    @property
    def accepted_misfits(self) -> list[float]:
        return [r[1] for r in self.rows if r[4]]


def gauss_newton(target: MisfitTarget, grid: GridSpec, cfg: InversionConfig = InversionConfig(),
                 init: ConductivityField | None = None) -> tuple[ConductivityField, InversionTrace]:
    """Levenberg-Marquardt damped Gauss-Newton fit of pixel conductivities to DtN data.

    Stops when the misfit gradient norm drops below ``grad_tol``, after ``max_iter``
    iterations, when the damping exceeds ``lam_max`` or when the misfit stagnates.
    """
    n = grid.boundary_count
    if target.data.shape != (n, n):
        raise ValueError(f"target shape {target.data.shape} does not match the {n}-node boundary")
    a = init or ConductivityField.constant(cfg.param_grid, cfg.init)
    x = np.log(a.vector) if cfg.log_param else a.vector.copy()

    def field_of(x):
        v = np.exp(x) if cfg.log_param else np.maximum(x, cfg.positivity_floor)
        return ConductivityField(v)

    res = _Residual(grid, a, target)
    value = res.value
    lam = cfg.lam0
    trace = InversionTrace()
    stalled = 0
    for it in range(cfg.max_iter):
        Jr = res.jacobian()
        if cfg.log_param:
            Jr = Jr * a.vector[None, :]
        r = res.r
        g = 2.0 * Jr.T @ r
        gnorm = float(np.linalg.norm(g))
        trace.add(it, value, gnorm, lam, True)
        if gnorm < cfg.grad_tol:
            trace.status = "converged"
            break
        H = Jr.T @ Jr
        D = np.diag(H).copy()
        D[D <= 0] = 1.0
        rhs = -Jr.T @ r
        while lam <= cfg.lam_max:
            try:
                step = np.linalg.solve(H + lam * np.diag(D), rhs)
            except np.linalg.LinAlgError:
                lam *= cfg.lam_up
                continue
            x_new = x + step
            if not cfg.log_param:
                x_new = np.maximum(x_new, cfg.positivity_floor)
            a_new = field_of(x_new)
            res_new = _Residual(grid, a_new, target)
            v_new = res_new.value
            if v_new < value:
                break
            trace.add(it, v_new, gnorm, lam, False)
            lam *= cfg.lam_up
        else:
            trace.status = "damping-limit"
            break
        drop = (value - v_new) / max(value, 1e-300)
        x, a, res, value = x_new, a_new, res_new, v_new
        lam = max(lam / cfg.lam_down, 1e-15)
        stalled = stalled + 1 if drop < cfg.stagnation_tol else 0
        if stalled >= cfg.stagnation_iters:
            trace.status = "stagnated"
            break
    else:
        trace.status = "max-iter"
    if trace.status not in ("converged", "stagnated"):
        log.warning("Gauss-Newton finished with status %s", trace.status)
    return a, trace


def compare_reconstructions(a1: ConductivityField, a2: ConductivityField) -> dict:
    """Relative L2 distance ||a1 - a2|| / ||a1|| and max-norm distance of two pixel fields."""
    v1, v2 = np.asarray(a1.values), np.asarray(a2.values)
    if v1.shape != v2.shape:
        raise ValueError(f"parameter grids differ: {v1.shape} vs {v2.shape}")
    d = v1 - v2
    return {"rel_l2": float(np.linalg.norm(d) / np.linalg.norm(v1)), "linf": float(np.abs(d).max())}


def restrict(a: ConductivityField, param_grid: int) -> ConductivityField:
    """Average a fine pixel field down to a coarser nested pixel grid."""
    p = a.param_grid
    if p % param_grid:
        raise ValueError(f"{param_grid} does not divide {p}")
    r = p // param_grid
    return ConductivityField(a.values.reshape(param_grid, r, param_grid, r).mean(axis=(1, 3)))

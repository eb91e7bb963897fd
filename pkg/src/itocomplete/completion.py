"""Nuclear-norm matrix completion of admissible blocks and incoherence diagnostics."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .hpartition import Block, BlockPartition, epsilon_rank
from .sampling import SamplingMask

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompletionConfig:
    """ADMM settings.

    ``adapt="continuation"`` multiplies the penalty by ``growth`` every iteration starting
    from ``rho`` / ||P_Omega(b)||_2 (data scaled to unit max-entry); ``adapt="balance"`` keeps
    it near ``rho`` with residual balancing.
    """

    rho: float = 1.0
    max_iter: int = 5000
    tol_rel: float = 1e-7
    tol_feas: float = 1e-8
    success_tol: float = 1e-4
    relative_success: bool = False
    adapt: str = "continuation"
    growth: float = 1.05
    rho_max: float = 1e12
    monitor_objective: bool = False

    def __post_init__(self):
        if self.rho <= 0 or self.tol_rel <= 0 or self.tol_feas <= 0 or self.success_tol <= 0:
            raise ValueError("penalty and tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.adapt not in ("continuation", "balance", "fixed"):
            raise ValueError(f"unknown penalty adaptation {self.adapt!r}")
        if self.growth < 1.0:
            raise ValueError("growth must be >= 1")


@dataclass
class BlockResult:
    matrix: np.ndarray
    iterations: int
    feasibility: float
    converged: bool
    objective: list[float] = field(default_factory=list)


def svt(m: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Singular-value soft-thresholding; returns the result and the shrunk spectrum."""
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    return (u[:, :k] * s[:k]) @ vt[:k], s[:k]


def complete_block(values: np.ndarray, observed: np.ndarray, cfg: CompletionConfig = CompletionConfig()) -> BlockResult:
    """Minimize the nuclear norm subject to matching ``values`` on ``observed``.

    ADMM on X = Z with X carrying the nuclear norm and Z the equality constraints. The
    returned matrix is the feasible iterate Z: observed entries are reproduced exactly and
    the rest come from the low-rank iterate X. ``feasibility`` is max |X - values| over the
    observed set, relative to the largest observed magnitude.

    Args:
        values: block-shaped array; only entries where ``observed`` is True are read.
        observed: boolean mask of the same shape.
        cfg: solver settings.
    """
    observed = np.asarray(observed, dtype=bool)
    values = np.asarray(values, dtype=float)
    if observed.shape != values.shape:
        raise ValueError("values and mask shapes differ")
    if not observed.any():
        raise ValueError("mask is empty")
    b = values[observed]
    if not np.all(np.isfinite(b)):
        raise ValueError("observed values must be finite")
    if observed.all():
        return BlockResult(values.copy(), 0, 0.0, True)

    scale = float(np.max(np.abs(b))) or 1.0
    b = b / scale
    Z = np.zeros(values.shape)
    Z[observed] = b
    U = np.zeros(values.shape)  # scaled dual, supported on the observed set
    rho = cfg.rho
    if cfg.adapt == "continuation":
        rho = cfg.rho / np.linalg.norm(Z, 2)
    objective = []
    converged = False
    feas = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        X, _ = svt(Z - U, 1.0 / rho)
        Z_old = Z
        Z = X + U
        Z[observed] = b
        resid = X[observed] - b
        U[observed] += resid
        feas = float(np.max(np.abs(resid)))
        dz = float(np.linalg.norm(Z - Z_old))
        rel = dz / max(float(np.linalg.norm(Z)), 1e-300)
        if cfg.monitor_objective:
            objective.append(float(np.linalg.svd(Z, compute_uv=False).sum() * scale))
        if feas <= cfg.tol_feas and rel <= cfg.tol_rel:
            converged = True
            break
        if cfg.adapt == "continuation":
            step = min(cfg.growth, cfg.rho_max / rho)
            rho *= step
            U /= step
        elif cfg.adapt == "balance":
            r_norm, s_norm = float(np.linalg.norm(resid)), rho * dz
            if r_norm > 10.0 * s_norm:
                rho *= 2.0
                U /= 2.0
            elif s_norm > 10.0 * r_norm:
                rho /= 2.0
                U *= 2.0
    if not converged:
        log.warning("completion stopped at max_iter=%d (feasibility %.3g)", cfg.max_iter, feas)
    return BlockResult(Z * scale, it, feas, converged, objective)


# --- incoherence diagnostics -------------------------------------------------


def coherence(basis: np.ndarray, convention: str = "verbatim") -> float:
    """Coherence index of span(basis) for orthonormal columns.

    ``verbatim``: n * max_i ||P e_i||_2. ``standard``: (n / r) * max_i ||P e_i||_2^2.
    """
    B = np.atleast_2d(np.asarray(basis, dtype=float))
    if B.shape[0] < B.shape[1]:
        B = B.T
    n, r = B.shape
    if not np.allclose(B.T @ B, np.eye(r), atol=1e-10, rtol=0):
        raise ValueError("basis columns are not orthonormal")
    lev = np.linalg.norm(B, axis=1)
    if convention == "verbatim":
        return float(n * lev.max())
    if convention == "standard":
        return float(n / r * (lev**2).max())
    raise ValueError(f"unknown coherence convention {convention!r}")


def delocalization(U: np.ndarray, V: np.ndarray, r: int | None = None) -> float:
    """Largest |entry| of sum_{k<r} u_k v_k^T."""
    r = U.shape[1] if r is None else r
    if r > min(U.shape[1], V.shape[1]):
        raise ValueError("rank exceeds the number of basis columns")
    return float(np.max(np.abs(U[:, :r] @ V[:, :r].T)))


@dataclass(frozen=True)
class CoherenceReport:
    mu_row: float
    mu_col: float
    max_uv: float
    r: int
    mu_row_standard: float
    mu_col_standard: float


def coherence_report(m: np.ndarray, eps: float = 1e-6) -> CoherenceReport:
    """Coherence of the singular subspaces truncated at the eps-rank of ``m``."""
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float), full_matrices=False)
    r = max(int(np.sum(s > eps)), 1)
    U, V = u[:, :r], vt[:r].T
    return CoherenceReport(
        coherence(U), coherence(V), delocalization(U, V), int(np.sum(s > eps)),
        coherence(U, "standard"), coherence(V, "standard"),
    )


# --- whole-matrix assembly ---------------------------------------------------


@dataclass
class BlockOutcome:
    index: int
    block: Block
    iterations: int
    feasibility: float
    converged: bool
    error: float | None
    success: bool | None


@dataclass
class CompletionReport:
    blocks: list[BlockOutcome]
    matrix: np.ndarray

    @property
    def all_success(self) -> bool:
        return all(b.success for b in self.blocks if b.success is not None)

    @property
    def all_converged(self) -> bool:
        return all(b.converged for b in self.blocks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "row_start", "row_len", "col_start", "col_len", "iterations", "feasibility",
                    "converged", "error", "success"])
        for o in self.blocks:
            b = o.block
            w.writerow([o.index, b.row_start, b.row_len, b.col_start, b.col_len, o.iterations,
                        f"{o.feasibility:.6e}", int(o.converged),
                        "" if o.error is None else f"{o.error:.6e}", "" if o.success is None else int(o.success)])
        return buf.getvalue()


def block_error(estimate: np.ndarray, truth: np.ndarray, relative: bool = False) -> float:
    err = float(np.linalg.norm(estimate - truth))
    return err / float(np.linalg.norm(truth)) if relative else err


def complete_ito_matrix(values: np.ndarray, mask: SamplingMask, partition: BlockPartition | None = None,
                        cfg: CompletionConfig = CompletionConfig(), truth: np.ndarray | None = None):
    """Copy diagonal blocks, complete each admissible block, and reassemble.

    ``values`` only needs to be meaningful where the mask is observed. When ``truth`` is
    given each admissible block is scored against it.

    Returns:
        (completed matrix, CompletionReport)
    """
    partition = partition or mask.partition
    values = np.asarray(values, dtype=float)
    if values.shape != (partition.n, partition.n) or mask.n != partition.n:
        raise ValueError("values, mask and partition sizes differ")
    mask.validate()
    out = np.where(mask.observed, values, 0.0)
    outcomes = []
    for k, b in enumerate(partition.blocks):
        if not b.admissible:
            continue
        sub = b.take(mask.observed)
        if sub.any():
            res = complete_block(b.take(values), sub, cfg)
        else:
            log.warning("admissible block %d has no samples; left at zero", k)
            res = BlockResult(np.zeros(sub.shape), 0, np.inf, False)
        out[b.rows, b.cols] = res.matrix
        err = success = None
        if truth is not None:
            err = block_error(res.matrix, b.take(truth), cfg.relative_success)
            success = err <= cfg.success_tol
        outcomes.append(BlockOutcome(k, b, res.iterations, res.feasibility, res.converged, err, success))
    return out, CompletionReport(outcomes, out)


# --- success-ratio sweeps ----------------------------------------------------


@dataclass
class SweepRow:
    level: int
    p: float
    trials: int
    successes: int
    mean_err: float
    max_iter_hit: int

    @property
    def ratio(self) -> float:
        return self.successes / self.trials


@dataclass
class SweepTable:
    rows: list[SweepRow]

    def ratio(self, level: int, p: float) -> float:
        for r in self.rows:
            if r.level == level and np.isclose(r.p, p):
                return r.ratio
        raise KeyError((level, p))

    def min_p(self, level: int, target: float = 0.9) -> float | None:
        """Smallest p on the grid whose ratio reaches ``target``."""
        ok = sorted(r.p for r in self.rows if r.level == level and r.ratio >= target)
        return ok[0] if ok else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "p", "trials", "successes", "ratio", "mean_err", "max_iter_hit"])
        for r in self.rows:
            w.writerow([r.level, f"{r.p:g}", r.trials, r.successes, f"{r.ratio:.4f}", f"{r.mean_err:.6e}", r.max_iter_hit])
        return buf.getvalue()


def success_ratio_sweep(block_source, p_grid, levels, trials: int = 20, seed: int = 0,
                        cfg: CompletionConfig = CompletionConfig(), progress=None) -> SweepTable:
    """Monte-Carlo success ratios of Bernoulli-sampled block completion.

    Trial t at a level draws one uniform field from (seed, level, t) and observes entries
    below p, so masks are nested in p (common random numbers across the p grid).

    Args:
        block_source: callable level -> ground-truth block.
        p_grid: sampling probabilities.
        levels: refinement levels passed to ``block_source``.
        trials: trials per (level, p) cell.
        seed: base seed.
        cfg: solver settings; ``cfg.success_tol`` decides success.
        progress: optional callable receiving each finished SweepRow.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for level in levels:
        truth = np.asarray(block_source(level), dtype=float)
        fields = [np.random.default_rng([seed, level, t]).random(truth.shape) for t in range(trials)]
        for p in sorted(p_grid):
            ok, errs, hit = 0, [], 0
            for u in fields:
                mask = u < p
                if not mask.any():
                    e = block_error(np.zeros_like(truth), truth, cfg.relative_success)
                    errs.append(e)
                    ok += e <= cfg.success_tol
                    continue
                res = complete_block(truth, mask, cfg)
                e = block_error(res.matrix, truth, cfg.relative_success)
                errs.append(e)
                ok += e <= cfg.success_tol
                hit += not res.converged
            row = SweepRow(int(level), float(p), trials, int(ok), float(np.mean(errs)), hit)
            rows.append(row)
            if progress:
                progress(row)
    return SweepTable(rows)

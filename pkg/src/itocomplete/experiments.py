"""Experiment drivers, run manifests and the mesh-refinement consistency study."""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from . import io as fio
from .completion import (CompletionConfig, coherence_report, complete_ito_matrix, success_ratio_sweep)
from .fem import ConductivityField, GridSpec, assemble_dtn, boundary_mass, boundary_project, dtn_block
from .hpartition import STRONG, block_a, block_b, build_partition, rank_survey
from .inversion import MASKED, InversionConfig, MisfitTarget, compare_reconstructions, gauss_newton
from .phantoms import shepp_logan, smooth_bump, two_blob
from .rte import RteProblem, assemble_albedo
from .sampling import BERNOULLI, THEOREM, BudgetRule, build_mask, fig8_rule

log = logging.getLogger(__name__)

EXPERIMENTS = ("rank-survey", "coherence", "block-sweep", "full-pipeline", "inversion-compare",
               "rte-survey", "refinement-consistency")
OUTPUT_ENV = "ITOCOMPLETE_OUTPUT"


@dataclass
class ExperimentConfig:
    """One experiment run. ``params`` holds experiment-specific extras (see ``run_experiment``)."""

    experiment: str
    levels: list[int] = field(default_factory=lambda: [6])
    p_grid: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.5, 1.0])
    trials: int = 20
    seed: int = 0
    eps: float = 1e-6
    success_tol: float = 1e-4
    min_block: int = 8
    admissibility: str = STRONG
    block: str = "a"
    out_dir: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.block not in ("a", "b"):
            raise ValueError("block must be 'a' or 'b'")
        self.levels = [int(v) for v in self.levels]
        self.p_grid = [float(v) for v in self.p_grid]

    def hash(self) -> str:
        d = asdict(self)
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def output_dir(self) -> Path:
        root = self.out_dir or os.environ.get(OUTPUT_ENV, "runs")
        return Path(root) / f"{self.experiment}-{self.hash()}"


def _parse_list(text: str, cast):
    return [cast(v) for v in text.replace(",", " ").split()]


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read an INI file with an [experiment] section and an optional [params] section."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(path)
    sec = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    sec.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kw = {}
    for key, val in sec.items():
        if key == "levels":
            kw[key] = _parse_list(val, int) if isinstance(val, str) else list(val)
        elif key == "p_grid":
            kw[key] = _parse_list(val, float) if isinstance(val, str) else list(val)
        elif key in ("trials", "seed", "min_block"):
            kw[key] = int(val)
        elif key in ("eps", "success_tol"):
            kw[key] = float(val)
        else:
            kw[key] = val
    if cp.has_section("params"):
        kw["params"] = {k: _coerce(v) for k, v in cp["params"].items()}
    return ExperimentConfig(**kw)


def _coerce(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    if v.lower() in ("true", "false"):
        return v.lower() == "true"
    return v


@dataclass
class RunManifest:
    config_hash: str
    config: dict
    out_dir: str
    files: list[str] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(s["status"] == "ok" for s in self.steps) and all(self.checks.values())

    @property
    def exit_code(self) -> int:
        return 0 if self.ok else 1

    def to_json(self) -> str:
        d = asdict(self)
        d["ok"] = self.ok
        return json.dumps(d, indent=2, sort_keys=True, default=float)


class _Run:
    """Single writer for one experiment: records files, step status and timings."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = cfg.output_dir()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(cfg.hash(), asdict(cfg), str(self.dir))

    def text(self, name: str, text: str):
        fio.write_text(self.dir / name, text)
        self.manifest.files.append(name)

    def binary(self, name: str, m: np.ndarray, kind: str):
        fio.write_itom(self.dir / name, m, kind)
        self.manifest.files.append(name)

    def pgm(self, name: str, img: np.ndarray, **kw):
        fio.write_pgm(self.dir / name, img, **kw)
        self.manifest.files.append(name)

    def step(self, name: str, fn):
        t0 = time.perf_counter()
        try:
            fn()
            status, err = "ok", ""
        except Exception as exc:  # recorded, the run continues with the next step
            log.exception("step %s failed", name)
            status, err = "failed", f"{type(exc).__name__}: {exc}"
        self.manifest.steps.append(dict(name=name, status=status, error=err,
                                        seconds=round(time.perf_counter() - t0, 3)))

    def finish(self) -> RunManifest:
        fio.write_text(self.dir / "manifest.json", self.manifest.to_json())
        return self.manifest


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _rank_image(report) -> np.ndarray:
    n = report.partition.n
    img = np.zeros((n, n))
    for b, r in zip(report.partition.blocks, report.ranks):
        img[b.rows, b.cols] = r
    return img


# --- mesh-refinement consistency --------------------------------------------


def trig_family(n_modes: int):
    """Boundary test functions of arclength s in [0, 4): 1, cos(2 pi k s / 4), sin(2 pi k s / 4)."""
    out = [(0, lambda s: np.ones_like(s) / 2.0)]
    for k in range(1, n_modes + 1):
        out.append((k, lambda s, k=k: np.cos(np.pi * k * s / 2) / np.sqrt(2.0)))
        out.append((k, lambda s, k=k: np.sin(np.pi * k * s / 2) / np.sqrt(2.0)))
    return out


def pairing_matrix(grid: GridSpec, lam: np.ndarray, n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """G[j, k] = psi_j^T Lambda phi_k for the trig family, and the mode number of each member."""
    fam = trig_family(n_modes)
    P = np.column_stack([boundary_project(grid, f, arclength=True) for _, f in fam])
    return P.T @ lam @ P, np.array([k for k, _ in fam])


def refinement_consistency(a: ConductivityField, levels, n_modes: int = 4) -> list[dict]:
    """Discrepancy between DtN maps at consecutive levels on low-frequency boundary data.

    Both operators are tested on the same trig family (interpolated at each level) and their
    outputs compared through the pairings with the family, output mode k weighted by
    (1 + |k|)^(-1/2) and input mode by (1 + |k|)^(-1/2). The reported value is the weighted
    spectral norm of the difference of pairing matrices.
    """
    levels = list(levels)
    if any(b < a_ for a_, b in zip(levels, levels[1:])):
        raise ValueError("levels must be non-decreasing")
    mats = {}
    for lv in set(levels):
        g = GridSpec(lv)
        G, k = pairing_matrix(g, assemble_dtn(g, a).entries, n_modes)
        w = (1.0 + k) ** -0.5
        mats[lv] = w[:, None] * G * w[None, :]
    return [dict(level_a=l0, level_b=l1, discrepancy=float(np.linalg.norm(mats[l0] - mats[l1], 2)))
            for l0, l1 in zip(levels, levels[1:])]


def steklov_square_first() -> float:
    """Lowest nonzero Steklov eigenvalue of the unit square.

    Separated mode sin(2t(x - 1/2)) cosh(2t(y - 1/2)) with tan(t) tanh(t) = 1; eigenvalue 2 t tanh(t).
    """
    t = brentq(lambda t: np.tan(t) * np.tanh(t) - 1.0, 0.5, 1.5)
    return 2.0 * t * np.tanh(t)


def steklov_eigenvalues(grid: GridSpec, a: ConductivityField, k: int = 4) -> np.ndarray:
    """Smallest k eigenvalues of Lambda v = lambda B v with B the boundary mass matrix."""
    lam = assemble_dtn(grid, a).entries
    return eigh(lam, boundary_mass(grid), eigvals_only=True, subset_by_index=[0, k - 1])


# --- experiment drivers ------------------------------------------------------


def _dtn_shepp(level: int) -> np.ndarray:
    g = GridSpec(level)
    return assemble_dtn(g, shepp_logan(g.cells_per_dim)).entries


def _block_truth(level: int, which: str) -> np.ndarray:
    g = GridSpec(level)
    b = block_a(g.boundary_count) if which == "a" else block_b(g.boundary_count)
    a = shepp_logan(g.cells_per_dim)
    return dtn_block(g, a, np.arange(b.row_start, b.row_start + b.row_len),
                     np.arange(b.col_start, b.col_start + b.col_len))


def _completion_cfg(cfg: ExperimentConfig) -> CompletionConfig:
    p = cfg.params
    return CompletionConfig(success_tol=cfg.success_tol, growth=float(p.get("growth", 1.05)),
                            max_iter=int(p.get("max_iter", 5000)))


def _rank_survey(run: _Run):
    cfg = run.cfg
    maxima = []
    for lv in cfg.levels:
        def go(lv=lv):
            lam = _dtn_shepp(lv)
            part = build_partition(lam.shape[0], cfg.admissibility, cfg.min_block)
            rep = rank_survey(lam, part, cfg.eps)
            run.text(f"ranks_l{lv}.csv", rep.to_csv())
            run.pgm(f"ranks_l{lv}.pgm", _rank_image(rep), flip=False)
            maxima.append((lv, lam.shape[0], rep.max_admissible_rank))
        run.step(f"level-{lv}", go)
    run.text("summary.csv", _csv(["level", "n", "max_admissible_rank"], maxima))
    bound = int(cfg.params.get("rank_bound", 5))
    run.manifest.checks[f"admissible_rank_le_{bound}"] = all(m <= bound for *_, m in maxima)


def _coherence(run: _Run):
    cfg = run.cfg
    rows = []
    for lv in cfg.levels:
        def go(lv=lv):
            for which in ("a", "b"):
                r = coherence_report(_block_truth(lv, which), cfg.eps)
                n_b = GridSpec(lv).boundary_count // (4 if which == "a" else 8)
                rows.append([lv, which, n_b, r.r, f"{r.mu_row:.10g}", f"{r.mu_col:.10g}",
                             f"{r.mu_row_standard:.10g}", f"{r.mu_col_standard:.10g}", f"{r.max_uv:.10g}"])
        run.step(f"level-{lv}", go)
    run.text("coherence.csv", _csv(["level", "block", "side", "eps_rank", "mu_row", "mu_col",
                                    "mu_row_standard", "mu_col_standard", "max_uv"], rows))


def _heatmap(table, levels, p_grid) -> np.ndarray:
    return np.array([[table.ratio(lv, p) for p in sorted(p_grid)] for lv in levels])


def _block_sweep(run: _Run):
    cfg = run.cfg
    out = {}

    def go():
        t = success_ratio_sweep(lambda lv: _block_truth(lv, cfg.block), cfg.p_grid, cfg.levels,
                                cfg.trials, cfg.seed, _completion_cfg(cfg))
        run.text("sweep.csv", t.to_csv())
        run.pgm("sweep.pgm", _heatmap(t, cfg.levels, cfg.p_grid), vmin=0.0, vmax=1.0, upscale=16)
        out["table"] = t
    run.step("sweep", go)
    if "table" in out:
        run.manifest.checks["no_solver_hit_max_iter"] = all(r.max_iter_hit == 0 for r in out["table"].rows)


def _rule(cfg: ExperimentConfig, part) -> BudgetRule:
    p = cfg.params
    kind = p.get("rule", "fig8")
    if kind == "fig8":
        return fig8_rule(part, float(p.get("p_far", 0.3)), float(p.get("growth_p", 2.0)), float(p.get("p_max", 1.0)))
    if kind == "theorem":
        return BudgetRule(mode=THEOREM, rank=int(p.get("rank", 5)), C=float(p.get("C", 1.0)))
    return BudgetRule(mode=BERNOULLI, p=float(p.get("p", 0.3)))


def _full_pipeline(run: _Run):
    cfg = run.cfg
    for lv in cfg.levels:
        def go(lv=lv):
            lam = _dtn_shepp(lv)
            part = build_partition(lam.shape[0], cfg.admissibility, cfg.min_block)
            mask = build_mask(part, _rule(cfg, part), cfg.seed)
            run.text(f"mask_l{lv}.csv", mask.to_csv())
            run.text(f"mask_l{lv}.json", mask.sidecar())
            done, rep = complete_ito_matrix(np.where(mask.observed, lam, 0.0), mask, part, _completion_cfg(cfg), truth=lam)
            run.binary(f"completed_l{lv}.itom", done, "dtn")
            run.text(f"report_l{lv}.csv", rep.to_csv())
            run.manifest.checks[f"l{lv}_all_converged"] = rep.all_converged
            run.manifest.checks[f"l{lv}_all_success"] = rep.all_success
        run.step(f"level-{lv}", go)


def inversion_compare(level: int = 6, param_grid: int = 8, seed: int = 0, min_block: int = 8,
                      p_far: float = 0.3, growth_p: float = 2.0, p_max: float = 1.0,
                      inv: InversionConfig | None = None, completion: CompletionConfig | None = None,
                      raw_mode: str = "zero-filled") -> dict:
    """Two-blob benchmark: reconstructions from exact, completed and raw subsampled DtN data.

    ``raw_mode="zero-filled"`` fits the observed-only matrix with zeros elsewhere;
    ``"masked"`` fits only the observed entries.
    """
    g = GridSpec(level)
    truth = two_blob(param_grid)
    lam = assemble_dtn(g, truth).entries
    part = build_partition(lam.shape[0], STRONG, min_block)
    mask = build_mask(part, fig8_rule(part, p_far, growth_p, p_max), seed)
    completed, rep = complete_ito_matrix(np.where(mask.observed, lam, 0.0), mask, part,
                                         completion or CompletionConfig(growth=1.02), truth=lam)
    inv = inv or InversionConfig(param_grid=param_grid, max_iter=300)
    if raw_mode == "zero-filled":
        raw = MisfitTarget(np.where(mask.observed, lam, 0.0))
    elif raw_mode == "masked":
        raw = MisfitTarget(lam, MASKED, mask.observed)
    else:
        raise ValueError(f"unknown raw mode {raw_mode!r}")
    fields, traces = {"truth": truth}, {}
    for name, target in (("exact", MisfitTarget(lam)), ("completed", MisfitTarget(completed)), ("raw", raw)):
        fields[name], traces[name] = gauss_newton(target, g, inv)
    dist = {k: compare_reconstructions(fields["exact"], fields[k]) for k in ("completed", "raw")}
    return dict(fields=fields, traces=traces, distances=dist, mask=mask, report=rep)


def _inversion_compare(run: _Run):
    cfg = run.cfg
    p = cfg.params

    def go():
        res = inversion_compare(cfg.levels[0], int(p.get("param_grid", 8)), cfg.seed, cfg.min_block,
                                float(p.get("p_far", 0.3)), float(p.get("growth_p", 2.0)), float(p.get("p_max", 1.0)),
                                raw_mode=str(p.get("raw_mode", "zero-filled")))
        lo, hi = res["fields"]["truth"].values.min(), res["fields"]["truth"].values.max()
        for name, f in res["fields"].items():
            run.binary(f"field_{name}.itom", f.values, "field")
            run.pgm(f"field_{name}.pgm", f.values, upscale=16, vmin=lo, vmax=hi)
        for name, tr in res["traces"].items():
            run.text(f"trace_{name}.csv", tr.to_csv())
        d = res["distances"]
        run.text("distances.csv", _csv(["against_exact", "rel_l2", "linf"],
                                       [[k, f"{v['rel_l2']:.10e}", f"{v['linf']:.10e}"] for k, v in d.items()]))
        run.text("mask.json", res["mask"].sidecar())
        run.manifest.checks["completed_within_5e-2"] = d["completed"]["rel_l2"] <= 5e-2
        run.manifest.checks["raw_5x_farther"] = d["raw"]["rel_l2"] >= 5 * d["completed"]["rel_l2"]
    run.step("inversion", go)


def rte_block(n_space: int, knudsen: float, n_angles: int = 16) -> np.ndarray:
    alb = assemble_albedo(RteProblem.smooth(n_space, knudsen, n_angles)).entries
    return block_a(alb.shape[0]).take(alb)


def _rte_survey(run: _Run):
    cfg = run.cfg
    p = cfg.params
    n_angles = int(p.get("n_angles", 16))
    kns = [float(v) for v in str(p.get("knudsen", "0.03125 1.0")).split()]
    rows = []
    for ns in cfg.levels:
        for kn in kns:
            def go(ns=ns, kn=kn):
                alb = assemble_albedo(RteProblem.smooth(2**ns, kn, n_angles)).entries
                n = alb.shape[0]
                s = np.linalg.svd(alb, compute_uv=False)
                part = build_partition(n, cfg.admissibility, cfg.min_block)
                rep = rank_survey(alb, part, cfg.eps)
                tag = f"s{ns}_kn{kn:g}"
                run.text(f"singular_values_{tag}.csv", _csv(["k", "sigma"], [[i, f"{v:.12e}"] for i, v in enumerate(s)]))
                run.text(f"ranks_{tag}.csv", rep.to_csv())
                rows.append([ns, kn, n, int(np.sum(s > cfg.eps)), rep.max_admissible_rank])
            run.step(f"albedo-{ns}-{kn:g}", go)
    run.text("summary.csv", _csv(["space_level", "knudsen", "n", "global_eps_rank", "max_admissible_rank"], rows))
    if p.get("sweep", False):
        kn = float(p.get("sweep_knudsen", 1.0))

        def sweep():
            t = success_ratio_sweep(lambda lv: rte_block(2**lv, kn, n_angles), cfg.p_grid, cfg.levels,
                                    cfg.trials, cfg.seed, _completion_cfg(cfg))
            run.text("rte_sweep.csv", t.to_csv())
        run.step("sweep", sweep)


def _refinement(run: _Run):
    cfg = run.cfg
    n_modes = int(cfg.params.get("n_modes", 4))
    rows = []
    for name, field_ in (("constant", ConductivityField.constant(1, 1.0)),
                         ("bump", smooth_bump(2 ** min(cfg.levels)))):
        def go(name=name, field_=field_):
            tab = refinement_consistency(field_, cfg.levels, n_modes)
            rows.extend([name, t["level_a"], t["level_b"], f"{t['discrepancy']:.10e}"] for t in tab)
            d = [t["discrepancy"] for t in tab]
            run.manifest.checks[f"{name}_strictly_decreasing"] = all(x > y for x, y in zip(d, d[1:]))
        run.step(name, go)
    run.text("refinement.csv", _csv(["field", "level_a", "level_b", "discrepancy"], rows))

    def eig():
        oracle = steklov_square_first()
        erows = []
        for lv in cfg.levels:
            ev = steklov_eigenvalues(GridSpec(lv), ConductivityField.constant(1, 1.0), 3)
            erows.append([lv, f"{ev[1]:.10e}", f"{ev[2]:.10e}", f"{oracle:.10e}", f"{abs(ev[1] / oracle - 1):.3e}"])
        run.text("steklov.csv", _csv(["level", "lambda_1", "lambda_2", "oracle", "rel_err"], erows))
    run.step("steklov", eig)


_DRIVERS = {
    "rank-survey": _rank_survey,
    "coherence": _coherence,
    "block-sweep": _block_sweep,
    "full-pipeline": _full_pipeline,
    "inversion-compare": _inversion_compare,
    "rte-survey": _rte_survey,
    "refinement-consistency": _refinement,
}


def run_experiment(cfg: ExperimentConfig) -> RunManifest:
    """Run one experiment, writing CSV/PGM/ITOM artifacts and ``manifest.json`` into its output dir.

    Per-experiment ``params``: rank-survey ``rank_bound``; block-sweep ``growth``, ``max_iter``;
    full-pipeline ``rule`` (fig8 | theorem | bernoulli) with ``p_far``, ``growth_p``, ``p_max``, ``p``,
    ``rank``, ``C``; inversion-compare ``param_grid``, ``raw_mode`` and the fig8 keys; rte-survey
    ``knudsen`` (space separated), ``n_angles``, ``sweep``, ``sweep_knudsen`` (levels are log2 of the
    spatial cells); refinement-consistency ``n_modes``.
    """
    run = _Run(cfg)
    _DRIVERS[cfg.experiment](run)
    return run.finish()

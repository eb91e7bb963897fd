"""Command-line front end: ``itocomplete <command> ...`` (or ``python -m itocomplete``)."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .completion import CompletionConfig, complete_ito_matrix
from .experiments import EXPERIMENTS, OUTPUT_ENV, ExperimentConfig, load_config, run_experiment
from .fem import ConductivityField, GridSpec, assemble_dtn
from .hpartition import STRONG, WEAK, build_partition, rank_survey
from .inversion import MASKED, InversionConfig, MisfitTarget, gauss_newton
from .phantoms import shepp_logan, smooth_bump, two_blob
from .rte import GROUPING, RteProblem, assemble_albedo
from .sampling import BERNOULLI, THEOREM, UNIFORM_M, BudgetRule, SamplingMask, build_mask, fig8_rule

STOCHASTIC = {"block-sweep", "full-pipeline", "inversion-compare", "rte-survey"}


def _out(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _phantom(name: str, param_grid: int) -> ConductivityField:
    if name == "shepp-logan":
        return shepp_logan(param_grid)
    if name == "two-blob":
        return two_blob(param_grid)
    if name == "bump":
        return smooth_bump(param_grid)
    if name == "constant":
        return ConductivityField.constant(param_grid, 1.0)
    raise SystemExit(f"unknown phantom {name!r}")


def cmd_forward(args) -> int:
    g = GridSpec(args.level)
    a = _phantom(args.phantom, args.param_grid or g.cells_per_dim)
    lam = assemble_dtn(g, a).entries
    fio.write_itom(_out(args.out), lam, "dtn")
    if args.csv:
        fio.write_text(_out(args.csv), fio.matrix_to_csv(lam))
    if args.field:
        fio.write_itom(_out(args.field), a.values, "field")
    print(f"DtN {lam.shape[0]}x{lam.shape[1]} -> {args.out}")
    return 0


def _n_from(args) -> int:
    if args.n:
        return args.n
    if args.level is not None:
        return GridSpec(args.level).boundary_count
    raise SystemExit("give --n or --level")


def cmd_partition(args) -> int:
    part = build_partition(_n_from(args), args.admissibility, args.min_block)
    if args.matrix:
        m, _ = fio.read_itom(args.matrix)
        rep = rank_survey(m, part, args.eps)
        text = rep.to_csv()
        print(f"max admissible eps-rank {rep.max_admissible_rank}")
    else:
        text = part.to_csv()
    if args.out:
        fio.write_text(_out(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def _mask_rule(args, part) -> BudgetRule:
    if args.rule == "fig8":
        return fig8_rule(part, args.p, args.growth_p, args.p_max)
    if args.rule == "uniform-m":
        return BudgetRule(mode=UNIFORM_M, m=args.m)
    if args.rule == "theorem":
        return BudgetRule(mode=THEOREM, rank=args.rank, C=args.C)
    return BudgetRule(mode=BERNOULLI, p=args.p)


def cmd_mask(args) -> int:
    part = build_partition(_n_from(args), args.admissibility, args.min_block)
    mask = build_mask(part, _mask_rule(args, part), args.seed)
    out = _out(args.out)
    fio.write_text(out, mask.to_csv())
    fio.write_text(out.with_suffix(".json"), mask.sidecar())
    print(f"{mask.size} of {mask.n**2} entries observed -> {args.out}")
    return 0


def cmd_complete(args) -> int:
    values, kind = fio.read_itom(args.matrix)
    part = build_partition(values.shape[0], args.admissibility, args.min_block)
    mask = SamplingMask.from_csv(Path(args.mask).read_text(), part)
    truth = fio.read_itom(args.truth)[0] if args.truth else None
    cfg = CompletionConfig(success_tol=args.success_tol, max_iter=args.max_iter, growth=args.growth)
    try:
        done, rep = complete_ito_matrix(values, mask, part, cfg, truth=truth)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    fio.write_itom(_out(args.out), done, kind)
    if args.report:
        fio.write_text(_out(args.report), rep.to_csv())
    ok = rep.all_converged and (truth is None or rep.all_success)
    print(f"{len(rep.blocks)} blocks completed; converged={rep.all_converged}"
          + ("" if truth is None else f" success={rep.all_success}"))
    return 0 if ok else 1


def cmd_invert(args) -> int:
    data, _ = fio.read_itom(args.matrix)
    g = GridSpec(args.level)
    if args.mask:
        part = build_partition(data.shape[0], args.admissibility, args.min_block)
        mask = SamplingMask.from_csv(Path(args.mask).read_text(), part)
        target = MisfitTarget(data, MASKED, mask.observed)
    else:
        target = MisfitTarget(data)
    cfg = InversionConfig(init=args.init, param_grid=args.param_grid, max_iter=args.max_iter, log_param=args.log_param)
    a, trace = gauss_newton(target, g, cfg)
    fio.write_itom(_out(args.out), a.values, "field")
    if args.trace:
        fio.write_text(_out(args.trace), trace.to_csv())
    if args.pgm:
        fio.write_pgm(_out(args.pgm), a.values, upscale=max(1, 256 // args.param_grid))
    print(f"Gauss-Newton {trace.status} after {trace.rows[-1][0]} iterations, misfit {trace.rows[-1][1]:.3e}")
    return 0 if trace.status in ("converged", "stagnated") else 1


def cmd_rte(args) -> int:
    prob = RteProblem.smooth(args.n_space, args.knudsen, args.angles)
    alb = assemble_albedo(prob)
    out = _out(args.out)
    fio.write_itom(out, alb.entries, "albedo")
    side = dict(alb.meta, count=args.angles, grouping=GROUPING,
                inflow_nodes=[list(t) for t in alb.inflow_nodes], outflow_nodes=[list(t) for t in alb.outflow_nodes])
    fio.write_text(out.with_suffix(".json"), json.dumps(side, indent=1, sort_keys=True))
    print(f"albedo {alb.shape[0]}x{alb.shape[1]} -> {args.out}")
    return 0


def cmd_experiment(args) -> int:
    over = dict(seed=args.seed, trials=args.trials, out_dir=args.out_dir)
    if args.levels:
        over["levels"] = args.levels
    if args.config:
        cfg = load_config(args.config, over)
    else:
        if not args.id:
            raise SystemExit("give --config or --id")
        cfg = ExperimentConfig(args.id, **{k: v for k, v in over.items() if v is not None})
    if cfg.experiment in STOCHASTIC and args.seed is None:
        raise SystemExit(f"--seed is required for the stochastic experiment {cfg.experiment}")
    man = run_experiment(cfg)
    print(f"{cfg.experiment} [{man.config_hash}] -> {man.out_dir} ok={man.ok}")
    for s in man.steps:
        if s["status"] != "ok":
            print(f"  step {s['name']} failed: {s['error']}", file=sys.stderr)
    for name, ok in man.checks.items():
        if not ok:
            print(f"  check {name} failed", file=sys.stderr)
    return man.exit_code


def _part_args(p):
    p.add_argument("--admissibility", choices=[STRONG, WEAK], default=STRONG)
    p.add_argument("--min-block", type=int, default=8)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="itocomplete", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="assemble a DtN matrix")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--phantom", default="shepp-logan", choices=["shepp-logan", "two-blob", "bump", "constant"])
    p.add_argument("--param-grid", type=int, default=0, help="pixels per side (default: FE cells)")
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--field", help="also write the conductivity container")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("partition", help="block partition CSV, or per-block eps-ranks with --matrix")
    p.add_argument("--n", type=int)
    p.add_argument("--level", type=int)
    _part_args(p)
    p.add_argument("--matrix")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--out")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("mask", help="sample an observation mask")
    p.add_argument("--n", type=int)
    p.add_argument("--level", type=int)
    _part_args(p)
    p.add_argument("--rule", choices=["bernoulli", "uniform-m", "theorem", "fig8"], default="bernoulli")
    p.add_argument("--p", type=float, default=0.1)
    p.add_argument("--m", type=int, default=0)
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--growth-p", type=float, default=2.0)
    p.add_argument("--p-max", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("complete", help="complete the admissible blocks of a partially observed matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--mask", required=True)
    _part_args(p)
    p.add_argument("--truth")
    p.add_argument("--success-tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--growth", type=float, default=1.05)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("invert", help="Gauss-Newton conductivity reconstruction")
    p.add_argument("--matrix", required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--mask", help="fit only these entries")
    _part_args(p)
    p.add_argument("--param-grid", type=int, default=16)
    p.add_argument("--init", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--log-param", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--trace")
    p.add_argument("--pgm")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("rte", help="assemble an albedo matrix")
    p.add_argument("--n-space", type=int, default=16)
    p.add_argument("--knudsen", type=float, default=1.0)
    p.add_argument("--angles", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rte)

    p = sub.add_parser("experiment", help="run a figure-reproduction experiment")
    p.add_argument("--config", help="INI file with [experiment] and [params] sections")
    p.add_argument("--id", choices=EXPERIMENTS)
    p.add_argument("--levels", type=int, nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

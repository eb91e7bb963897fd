"""End-to-end acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (collected in the terminal summary). The n_a = 512 parts
of criteria 2 and 3 take tens of minutes and run only with ITOCOMPLETE_FULL_SCALE=1.
"""
import numpy as np
import pytest

from conftest import FULL_SCALE, record
from itocomplete.completion import CompletionConfig, coherence_report, complete_block, success_ratio_sweep
from itocomplete.experiments import (
    _block_truth,
    inversion_compare,
    refinement_consistency,
    rte_block,
    steklov_eigenvalues,
    steklov_square_first,
)
from itocomplete.fem import ConductivityField, GridSpec, assemble_dtn, jacobian_dtn
from itocomplete.hpartition import STRONG, build_partition, rank_survey
from itocomplete.inversion import MisfitTarget, misfit
from itocomplete.phantoms import shepp_logan, smooth_bump
from itocomplete.rte import RteProblem, assemble_albedo

TOL = 1e-4


def report(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    record(criterion, ok, detail)


def block_trials(level, p, trials, seed=0):
    """Errors of Bernoulli(p) completions of block a at one level."""
    truth = _block_truth(level, "a")
    errs = []
    for t in range(trials):
        mask = np.random.default_rng([seed, level, t]).random(truth.shape) < p
        errs.append(np.linalg.norm(complete_block(truth, mask).matrix - truth))
    return np.array(errs)


def test_criterion_01_rank_structure():
    lines, ok = [], True
    for level in (6, 7, 8):
        g = GridSpec(level)
        lam = assemble_dtn(g, shepp_logan(g.cells_per_dim)).entries
        rep = rank_survey(lam, build_partition(g.boundary_count, STRONG, 8), 1e-6)
        lines.append(f"l={level} n={g.boundary_count} max rank {rep.max_admissible_rank}")
        ok &= rep.max_admissible_rank <= 5
    report(1, ok, "; ".join(lines))
    assert ok


def test_criterion_02_block_completion():
    errs = block_trials(7, 0.3, 20)
    hits = int(np.sum(errs <= TOL))
    ok = hits >= 18
    detail = f"n_a=128 p=0.3: {hits}/20"
    if FULL_SCALE:
        errs = block_trials(9, 0.1, 50)
        big = int(np.sum(errs <= TOL))
        ok &= big >= 45
        detail += f"; n_a=512 p=0.1: {big}/50"
    else:
        detail += "; n_a=512 part skipped (ITOCOMPLETE_FULL_SCALE unset)"
    report(2, ok, detail)
    assert ok


def test_criterion_03_phase_transition():
    p_grid = [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0]
    levels = [5, 6, 7]
    table = success_ratio_sweep(lambda lv: _block_truth(lv, "a"), p_grid, levels, trials=20, seed=0)
    mono = all(
        all(table.ratio(lv, a) <= table.ratio(lv, b) for a, b in zip(p_grid, p_grid[1:])) for lv in levels
    )
    mins = [table.min_p(lv) for lv in levels]
    shrinking = None not in mins and all(b <= a for a, b in zip(mins, mins[1:]))
    ok = mono and shrinking
    detail = f"monotone in p: {mono}; min p for ratio>=0.9 at l=5,6,7: {mins}"
    if FULL_SCALE:
        big = success_ratio_sweep(lambda lv: _block_truth(lv, "a"), [0.05], [9], trials=20, seed=0)
        r = big.ratio(9, 0.05)
        ok &= r >= 0.9
        detail += f"; n_a=512 ratio at p=0.05: {r:.2f}"
    else:
        detail += "; n_a=512 part skipped (ITOCOMPLETE_FULL_SCALE unset)"
    report(3, ok, detail)
    assert ok


def test_criterion_04_coherence():
    levels = [5, 6, 7, 8]
    reps = {w: [coherence_report(_block_truth(lv, w)) for lv in levels] for w in ("a", "b")}
    a = reps["a"]
    mu_std = [max(r.mu_row_standard, r.mu_col_standard) for r in a]
    mu_verb = [max(r.mu_row, r.mu_col) for r in a]
    stable = max(mu_std) / min(mu_std) < 2
    decreasing = all(
        all(y.max_uv < x.max_uv for x, y in zip(reps[w], reps[w][1:])) for w in ("a", "b")
    )
    ok = stable and decreasing
    report(4, ok,
           f"block a mu (n/r)max|Pe|^2 over l=5..8: {np.round(mu_std, 3).tolist()} (ratio {max(mu_std) / min(mu_std):.2f}); "
           f"n max|Pe| for reference: {np.round(mu_verb, 2).tolist()}; "
           f"max|UV^T| a: {[f'{r.max_uv:.3g}' for r in a]}, b: {[f'{r.max_uv:.3g}' for r in reps['b']]}")
    assert ok


def test_criterion_05_completion_oracle():
    hits = 0
    for t in range(100):
        rng = np.random.default_rng([5, t])
        n, r = 40, 1 + t % 3
        u = np.linalg.qr(rng.standard_normal((n, r)))[0]
        v = np.linalg.qr(rng.standard_normal((n, r)))[0]
        m = (u * rng.uniform(1, 2, r)) @ v.T
        mask = rng.random(m.shape) < 0.6
        hits += np.linalg.norm(complete_block(m, mask).matrix - m) <= 1e-6
    full = np.random.default_rng(0).standard_normal((30, 30))
    exact = np.array_equal(complete_block(full, np.ones(full.shape, dtype=bool)).matrix, full)
    ok = hits >= 95 and exact
    report(5, ok, f"rank<=3 n=40 p=0.6: {hits}/100 within 1e-6; fully observed returned exactly: {exact}")
    assert ok


def test_criterion_06_forward_invariants():
    rng = np.random.default_rng(6)
    worst = [0.0, 0.0, 0.0]
    for k in range(20):
        level = 2 + k % 5
        pg = 2 ** rng.integers(1, level + 1)
        a = ConductivityField(rng.uniform(0.1, 10.0, (pg, pg)))
        lam = assemble_dtn(GridSpec(level), a).entries
        s = np.abs(lam).max()
        worst[0] = max(worst[0], np.abs(lam - lam.T).max() / s)
        worst[1] = max(worst[1], np.abs(lam @ np.ones(lam.shape[0])).max() / s)
        worst[2] = max(worst[2], -np.linalg.eigvalsh(lam).min() / s)
    ok = all(w <= 1e-10 for w in worst)
    report(6, ok, f"20 fields l=2..6: asymmetry {worst[0]:.1e}, constant flux {worst[1]:.1e}, "
                  f"negative eigenvalue {max(worst[2], 0):.1e} (relative)")
    assert ok


def test_criterion_07_gradients():
    rng = np.random.default_rng(7)
    errs = []
    for level in (3, 4):
        g = GridSpec(level)
        a = ConductivityField(rng.uniform(0.5, 2.5, (4, 4)))
        d = rng.standard_normal(16)
        t = 1e-6
        ap, am = (ConductivityField(a.values + s * t * d.reshape(4, 4)) for s in (1, -1))
        fd = (assemble_dtn(g, ap).entries - assemble_dtn(g, am).entries) / (2 * t)
        errs.append(np.linalg.norm(jacobian_dtn(g, a) @ d - fd) / np.linalg.norm(fd))
        data = assemble_dtn(g, ConductivityField(rng.uniform(0.5, 2.5, (4, 4)))).entries
        target = MisfitTarget(data)
        grad = misfit(a, target, g)[1]
        fdm = (misfit(ap, target, g)[0] - misfit(am, target, g)[0]) / (2 * t)
        errs.append(abs(grad @ d - fdm) / abs(fdm))
    ok = max(errs) <= 1e-5
    report(7, ok, "relative FD errors (Jacobian l=3, misfit l=3, Jacobian l=4, misfit l=4): "
                  + ", ".join(f"{e:.1e}" for e in errs))
    assert ok


def test_criterion_08_inversion_compare():
    res = inversion_compare(level=6, param_grid=8, seed=0)
    d_c = res["distances"]["completed"]["rel_l2"]
    d_r = res["distances"]["raw"]["rel_l2"]
    truth_err = np.linalg.norm(res["fields"]["exact"].values - res["fields"]["truth"].values) / np.linalg.norm(
        res["fields"]["truth"].values)
    ok = d_c <= 5e-2 and d_r >= 5 * d_c
    report(8, ok, f"completed vs exact {d_c:.2e}; raw (zero-filled) vs exact {d_r:.2e} ({d_r / d_c:.1f}x); "
                  f"exact vs truth {truth_err:.1e}")
    assert ok


def test_criterion_09_refinement():
    levels = [3, 4, 5, 6]
    tabs = {name: [t["discrepancy"] for t in refinement_consistency(a, levels)]
            for name, a in (("constant", ConductivityField.constant(1)), ("bump", smooth_bump(8)))}
    dec = all(all(y < x for x, y in zip(d, d[1:])) for d in tabs.values())
    oracle = steklov_square_first()
    lam1 = steklov_eigenvalues(GridSpec(6), ConductivityField.constant(1), 2)[1]
    rel = abs(lam1 / oracle - 1)
    ok = dec and rel <= 0.01
    report(9, ok, f"discrepancies constant {[f'{x:.3g}' for x in tabs['constant']]}, "
                  f"bump {[f'{x:.3g}' for x in tabs['bump']]}; first Steklov eigenvalue {lam1:.5f} "
                  f"vs {oracle:.5f} (rel {rel:.1e})")
    assert ok


def test_criterion_10_rte_structure():
    diff = assemble_albedo(RteProblem.smooth(16, 2**-5, 32)).entries
    dim = diff.shape[0]
    rank = int(np.sum(np.linalg.svd(diff, compute_uv=False) > 1e-6))
    part1 = rank <= 0.1 * dim

    kin = assemble_albedo(RteProblem.smooth(16, 1.0, 32)).entries
    rep = rank_survey(kin, build_partition(kin.shape[0], STRONG, 8), 1e-6)
    part2 = rep.max_admissible_rank <= 5

    table = success_ratio_sweep(lambda lv: rte_block(2**lv, 1.0, 16), [0.9], [3, 4], trials=20, seed=0)
    r3, r4 = table.ratio(3, 0.9), table.ratio(4, 0.9)
    part3 = r4 >= r3
    mean_err = {row.level: row.mean_err for row in table.rows}

    ok = part1 and part2 and part3
    report(10, ok,
           f"Kn=2^-5 global eps-rank {rank}/{dim} ({rank / dim:.0%}, need <=10%): {part1}; "
           f"Kn=1 max admissible block rank {rep.max_admissible_rank} (need <=5): {part2}; "
           f"Kn=1 block a ratio at p=0.9: {r3:.2f} (8 cells) -> {r4:.2f} (16 cells), mean err "
           f"{mean_err[3]:.1e} -> {mean_err[4]:.1e}: {part3}")
    assert ok

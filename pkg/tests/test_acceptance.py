"""End-to-end acceptance checks.

Each test records one ``PASS``/``FAIL`` line (shown in the terminal summary
and printed to stdout) before asserting, so a failing criterion still
reports its measured values.
"""

import json
import time

import numpy as np
import pytest
import scipy.stats

from equibound import bounding, bundled_model_path
from equibound.cli import main
from equibound.lyapunov import DriftParams
from equibound.oracle import check_bounds, grow_until_stable
from equibound.output import local_maxima, project
from equibound.statespace import bounding_box

from conftest import ACCEPTANCE_LINES, random_model, run_pipeline

EPSILONS = (0.2, 0.3, 0.5)
RANDOM_SEEDS = range(24)


def record(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def switch(exclusive_switch):
    bounding.FACTORIZATIONS.reset()
    t = time.perf_counter()
    params, C, w, cols, result = run_pipeline(exclusive_switch, 0.1, keep_columns=True)
    elapsed = time.perf_counter() - t
    return params, C, w, cols, result, elapsed, bounding.FACTORIZATIONS.count


@pytest.fixture(scope="module")
def random_runs():
    runs = []
    for seed in RANDOM_SEEDS:
        m = random_model(seed)
        eps = EPSILONS[seed % len(EPSILONS)]
        bounding.FACTORIZATIONS.reset()
        params, C, w, cols, result = run_pipeline(m, eps, keep_columns=True)
        runs.append((seed, m, eps, C, cols, result, bounding.FACTORIZATIONS.count))
    return runs


def test_1a_switch_drift_maximum(switch):
    params, *_, elapsed, _ = switch
    ok = abs(params.c - 0.38625) <= 1e-6 and elapsed < 300
    record("1a exclusive switch c", ok, f"c = {params.c!r} (target 0.38625 +- 1e-6), pipeline {elapsed:.2f} s (< 300 s)")
    assert ok


def test_1b_switch_window_size(switch):
    _, C, *_ = switch
    n = len(C)
    breakdown = ", ".join(f"{k}: {v}" for k, v in C.breakdown.items())
    exact = n == 1671
    within = abs(n - 1671) <= 0.02 * 1671
    detail = f"|C| = {n} (target 1671; +-2% band {0.98 * 1671:.0f}..{1.02 * 1671:.0f}); breakdown {breakdown}"
    record("1b exclusive switch |C|", exact or within, detail)
    assert exact or within, detail


def test_1c_switch_gap(switch):
    *_, result, _, _ = switch
    ok = result.max_gap <= 5e-4
    record("1c exclusive switch delta", ok, f"delta = {result.max_gap:.6g} (required <= 5e-4, target 3.5e-4)")
    assert ok


def test_2_birth_death(birth_death):
    poisson = scipy.stats.poisson.pmf(np.arange(3), 0.5)
    params, C, w_default, _, default = run_pipeline(birth_death, 0.2)
    _, _, w10, _, fixture = run_pipeline(birth_death, 0.2, lambda_factor=2.0)
    window = [tuple(x) for x in C]
    checks = {
        "C = {0,1,2}": window == [(0,), (1,), (2,)],
        "default lambda = 1.001*5": abs(w_default.lam - 1.001 * 5) <= 1e-12,
        "fixture lambda = 10": w10.lam == 10.0,
        "state 0 in [8/13, 11/17]": abs(fixture.cond_lower[0] - 8 / 13) <= 1e-10 and abs(fixture.cond_upper[0] - 11 / 17) <= 1e-10,
        "Poisson strictly inside": bool(np.all((default.uncond_lower < poisson) & (poisson < default.uncond_upper))),
    }
    ok = all(checks.values())
    record("2 birth-death", ok, "; ".join(f"{k}: {'ok' if v else 'NO'}" for k, v in checks.items()))
    assert ok, checks


def test_3_oracle_sandwich(random_runs):
    failures = []
    worst_tail = 0.0
    for seed, m, eps, C, _, result, _ in random_runs:
        params = DriftParams(result.c, result.gamma, result.epsilon)
        box = bounding_box(m, m.lyapunov, params)
        start = [(0, max(2 * b + 5, 10)) for _, b in box]
        sol = grow_until_stable(m, start, C.states)
        report = check_bounds(sol, result)
        worst_tail = max(worst_tail, report.tail_mass / eps)
        if report.failures or report.tail_mass > eps:
            failures.append((seed, report.failures[:3], report.tail_mass, eps))
    ok = len(random_runs) >= 20 and not failures
    record("3 oracle sandwich", ok,
           f"{len(random_runs)} models, {len(failures)} failing; max tail/epsilon = {worst_tail:.3g}")
    assert ok, failures


def test_4_solver_invariants(switch, random_runs, birth_death, tmp_path):
    _, _, _, sw_cols, _, _, sw_count = switch
    bounding.FACTORIZATIONS.reset()
    _, _, _, bd_cols, _ = run_pipeline(birth_death, 0.2, keep_columns=True)
    all_cols = [("exclusive_switch", sw_cols, sw_count), ("birth_death", bd_cols, bounding.FACTORIZATIONS.count)]
    all_cols += [(f"random{seed}", cols, count) for seed, _, _, _, cols, _, count in random_runs]
    bad = []
    for name, cols, count in all_cols:
        P = cols.columns
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=0) - 1)) > 1e-12 or cols.max_residual > 1e-10 or count != 1:
            bad.append(name)
    main(["run", "--model", str(bundled_model_path("birth_death")), "--epsilon", "0.2", "--out", str(tmp_path)])
    cli_count = json.loads((tmp_path / "summary.json").read_text())["factorizations"]
    worst_residual = max(c.max_residual for _, c, _ in all_cols)
    worst_sum = max(float(np.max(np.abs(c.columns.sum(axis=0) - 1))) for _, c, _ in all_cols)
    ok = not bad and cli_count == 1
    record("4 solver invariants", ok,
           f"{len(all_cols)} models; max residual {worst_residual:.3g}, max |sum-1| {worst_sum:.3g}, "
           f"factorizations per run 1 (cli summary: {cli_count}); bad: {bad or 'none'}")
    assert ok


def test_5_lambda_invariance(birth_death, exclusive_switch):
    worst = 0.0
    for m, eps in ((birth_death, 0.2), (exclusive_switch, 0.1)):
        a = run_pipeline(m, eps, lambda_factor=1.001)[4]
        b = run_pipeline(m, eps, lambda_factor=2.0)[4]
        for x, y in ((a.cond_lower, b.cond_lower), (a.cond_upper, b.cond_upper),
                     (a.uncond_lower, b.uncond_lower), (a.uncond_upper, b.uncond_upper)):
            worst = max(worst, float(np.max(np.abs(x - y))))
    ok = worst <= 1e-8
    record("5 lambda invariance", ok, f"max difference {worst:.3g} (<= 1e-8)")
    assert ok


def test_6_bimodality(switch):
    *_, result, _, _ = switch
    grid = project(result, result.cond_upper, [0, 1])
    maxima = local_maxima(grid)
    above = [p for p in maxima if p[0] > p[1]]
    below = [p for p in maxima if p[1] > p[0]]
    strongest = [max(side, key=grid.get) for side in (above, below) if side]
    ok = bool(above) and bool(below)
    record("6 bimodality", ok,
           f"{len(maxima)} strict local maxima of projected cond_upper; "
           f"strongest with P1 > P2: {strongest[0] if above else None}, with P2 > P1: {strongest[-1] if below else None}")
    assert ok


def test_7_determinism(tmp_path):
    model = str(bundled_model_path("exclusive_switch"))
    snapshots = []
    for _ in range(2):
        code = main(["run", "--model", model, "--epsilon", "0.1", "--seed", "0", "--out", str(tmp_path),
                     "--emit-plot-data", "P1,P2"])
        assert code == 0
        snapshots.append({p.name: p.read_bytes() for p in sorted(tmp_path.iterdir()) if p.name != "timings.json"})
    ok = snapshots[0] == snapshots[1]
    record("7 determinism", ok, f"{len(snapshots[0])} artifacts compared byte for byte ({', '.join(snapshots[0])})")
    assert ok

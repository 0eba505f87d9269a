"""Acceptance criteria at their stated scales and tolerances.

Run with ``pytest tests/test_acceptance.py -v`` (a summary of one line per
criterion is printed at the end) or directly as
``python tests/test_acceptance.py``.  The full suite takes tens of minutes
on one core because several criteria need full-scale offline stages.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import LINES, record  # noqa: E402
from oracles import brute_force_power_greedy, lstsq_coefficients  # noqa: E402
from reducedrbf import harness as H  # noqa: E402
from reducedrbf.geometry import get_domain  # noqa: E402
from reducedrbf.kernels import Kernel, partial  # noqa: E402
from reducedrbf.nodes import build_stencils, power_function_select  # noqa: E402
from reducedrbf.rbffd import assemble_diff_matrices, global_diff_matrix, local_weights  # noqa: E402

pytestmark = pytest.mark.slow

FULL_2D = dict(n_nodes=1000, n_loc=50, kernel="imq", eps=3.0)
# 3D runs are scaled down from the 2046-node default to keep the suite at desk scale
DESK_3D = dict(n_nodes=1000, n_loc=125, kernel="imq", eps=0.75, xi_grid=(9, 9))
VALIDATION = (20, 20)
RB_XI = (33, 33)
RB_N_MAX = 20
RATIO_RANGE = range(5, 13)  # n - 4 >= 1 up to the n = 12 accuracy target

_cache: dict = {}


def rb_run(problem):
    """Full-scale greedy plus true error on an independent 20x20 test grid (cached)."""
    if problem not in _cache:
        cfg = H.ExperimentConfig(problem=problem, xi_grid=RB_XI, test_grid=VALIDATION, n_max=RB_N_MAX,
                                 **FULL_2D)
        t0 = time.perf_counter()
        res = H.run_rb_convergence(cfg)
        _cache[problem] = (cfg, res, time.perf_counter() - t0)
    return _cache[problem]


def model_3d(problem):
    key = problem + ":3d"
    if key not in _cache:
        cfg = H.ExperimentConfig(problem=problem, n_max=12, **DESK_3D)
        setup = H.truth_setup(cfg)
        _cache[key] = (cfg, setup, H.build_model(cfg, setup))
    return _cache[key]


# 1 ---------------------------------------------------------------------------

def test_criterion_1_truth_accuracy():
    cfg = H.ExperimentConfig(problem="awave2d", case="test1", **FULL_2D)
    t0 = time.perf_counter()
    [rec] = H.run_truth_convergence(cfg, "N", [1000], grid=VALIDATION)
    wall = time.perf_counter() - t0
    ok = rec.error <= 1e-3 and wall <= 600
    record(1, "truth accuracy", ok, f"worst rms error {rec.error:.3e} (limit 1e-3), {wall:.0f} s (limit 600 s)")
    assert ok


# 2 ---------------------------------------------------------------------------

def test_criterion_2_n_convergence():
    parts, ok = [], True
    for problem in ("awave2d", "diff2d"):
        for case in ("test1", "test2"):
            cfg = H.ExperimentConfig(problem=problem, case=case, n_loc=50, eps=3.0)
            recs = H.run_truth_convergence(cfg, "N", [250, 500, 1000], grid=VALIDATION)
            e = [r.error for r in recs]
            dec = all(b < a for a, b in zip(e, e[1:]))
            ok &= dec
            parts.append(f"{problem}/{case} " + " > ".join(f"{v:.2e}" for v in e) + ("" if dec else " (not decreasing)"))
    record(2, "N-convergence", ok, "; ".join(parts))
    assert ok


# 3 ---------------------------------------------------------------------------

def test_criterion_3_nloc_convergence():
    parts, ok = [], True
    for problem in ("awave2d", "diff2d"):
        cfg = H.ExperimentConfig(problem=problem, case="test1", **FULL_2D)
        recs = H.run_truth_convergence(cfg, "n_loc", [10, 20, 30, 40, 50], grid=VALIDATION)
        e = {r.value: r.error for r in recs}
        ratio = e[50] / e[10]
        ok &= ratio <= 1e-2
        parts.append(f"{problem} error(50)/error(10) = {e[50]:.2e}/{e[10]:.2e} = {ratio:.3g} (limit 1e-2); "
                     "sweep " + " ".join(f"{e[k]:.1e}" for k in sorted(e)))
    record(3, "n_loc-convergence", ok, "; ".join(parts))
    assert ok


# 4 ---------------------------------------------------------------------------

def test_criterion_4_rb_convergence():
    parts, ok = [], True
    for problem in ("awave2d", "diff2d"):
        cfg, res, _ = rb_run(problem)
        err = res.true_error
        t_off = res.model.config["t_beta"] + res.model.config["t_offline"]
        ratios = {n: err[n - 1] / err[n - 5] for n in RATIO_RANGE}
        worst_n = max(ratios, key=ratios.get)
        good = err[11] <= 1e-3 and ratios[worst_n] <= 0.2 and t_off <= 1800
        ok &= good
        parts.append(f"{problem} error(12)={err[11]:.2e} (limit 1e-3), max error(n)/error(n-4) over n=5..12 is "
                     f"{ratios[worst_n]:.3f} at n={worst_n} (limit 0.2), offline {t_off:.0f} s (limit 1800 s)")
    record(4, "RB exponential convergence", ok, "; ".join(parts))
    assert ok


# 5 ---------------------------------------------------------------------------

def test_criterion_5_certified_bound():
    parts, ok = [], True
    for problem in ("awave2d", "diff2d", "awave3d", "diff3d"):
        if problem.endswith("2d"):
            cfg = H.ExperimentConfig(problem=problem, n_nodes=400, n_loc=50, xi_grid=(9, 9), n_max=10)
        else:
            cfg = H.ExperimentConfig(problem=problem, n_nodes=400, n_loc=125, xi_grid=(9, 9), n_max=10)
        recs = H.run_bound_check(cfg, n_samples=50, raise_on_violation=False)
        viol = [r for r in recs if r.delta2 + 1e-10 < r.error]
        eff = [r.delta2 / r.error for r in recs if r.error > 0]
        ok &= not viol and len({tuple(r.mu) for r in recs}) >= 50
        parts.append(f"{problem} {len(viol)} violations in {len(recs)} checks, effectivity {min(eff):.1e}..{max(eff):.1e}")
    record(5, "certified bound", ok, "; ".join(parts))
    assert ok


# 6 ---------------------------------------------------------------------------

def test_criterion_6_online_oracle():
    parts, ok = [], True
    rng = np.random.default_rng(6)
    for problem in ("awave2d", "diff2d", "awave3d", "diff3d"):
        if problem.endswith("2d"):
            _, res, _ = rb_run(problem)
            model, bank, nodes = res.model, res.setup.bank, res.setup.nodes
        else:
            _, setup, model = model_3d(problem)
            bank, nodes = setup.bank, setup.nodes
        forcing = model.problem.rb_forcing(nodes)
        worst = 0.0
        for mu in model.problem.random_mus(20, rng):
            L = model.problem.assemble(mu, bank)
            f = forcing.at(mu)
            for n in range(1, min(12, model.n) + 1):
                c = model.online_solve(mu, n).coefficients
                ref = lstsq_coefficients(L, model.basis[:, :n], f)
                worst = max(worst, np.linalg.norm(c - ref) / np.linalg.norm(ref))
        good = worst <= 1e-8 and model.n >= 12
        ok &= good
        parts.append(f"{problem} max relative deviation {worst:.1e} (n<=12)")
    record(6, "online oracle equivalence", ok, "; ".join(parts) + " (limit 1e-8)")
    assert ok


# 7 ---------------------------------------------------------------------------

def test_criterion_7_n_independence_and_speedup():
    _, res, _ = rb_run("awave2d")
    cfg1 = H.ExperimentConfig(problem="awave2d", **FULL_2D)
    t1 = H.run_timing(cfg1, 12, model=res.model, setup=res.setup)
    # 2000 IMQ centers at eps = 3 are numerically dependent on this domain, so refine stationarily:
    # eps grows with the inverse spacing and the boundary count with the perimeter
    cfg2 = H.ExperimentConfig(problem="awave2d", n_nodes=2000, n_boundary_nodes=212, n_loc=50,
                              eps=3.0 * np.sqrt(2.0), xi_grid=(9, 9), n_max=12)
    t2 = H.run_timing(cfg2, 12)
    ratio = max(t1.t_online_median, t2.t_online_median) / min(t1.t_online_median, t2.t_online_median)
    ok = ratio < 2 and t1.speedup_solve >= 20
    record(7, "N-independence and speedup", ok,
           f"median online time N=1000 {t1.t_online_median * 1e6:.1f} us, N=2000 {t2.t_online_median * 1e6:.1f} us, "
           f"ratio {ratio:.2f} (limit 2); assembly-excluded speedup {t1.speedup_solve:.0f} (limit 20), "
           f"full online speedup {t1.speedup:.0f}, mean truth solve {t1.t_truth_mean * 1e3:.1f} ms")
    assert ok


# 8 ---------------------------------------------------------------------------

def candidate_sets():
    rng = np.random.default_rng(8)
    sets = [(f"uniform2d-{i}", rng.uniform(-1, 1, (200, 2))) for i in range(4)]
    sets += [(f"uniform3d-{i}", rng.uniform(-1, 1, (150, 3))) for i in range(2)]
    c = get_domain("flower2d").generate_candidates(150, 40)
    sets.append(("flower-grid", c.points[:200]))
    c = get_domain("blob3d").generate_candidates(120, 60)
    sets.append(("blob-grid", c.points[:200]))
    g = np.linspace(-1, 1, 14)
    sets.append(("square-grid", np.array([(x, y) for x in g for y in g])))
    return sets


def test_criterion_8_power_function_oracle():
    checked, bad = 0, []
    for family, eps in (("imq", 3.0), ("ga", 3.0), ("imq", 1.0), ("ga", 1.5)):
        k = Kernel(family, eps)
        for name, pts in candidate_sets():
            assert len(pts) <= 200
            n = 40
            got = power_function_select(pts, k, n)
            ref = brute_force_power_greedy(pts, k, n)
            checked += 1
            if not np.array_equal(got, ref):
                bad.append(f"{family}/{eps}/{name}")
    ok = not bad
    record(8, "power-function oracle", ok, f"{checked - len(bad)}/{checked} candidate sets agree index for index"
           + (f"; mismatches: {', '.join(bad)}" if bad else ""))
    assert ok


# 9 ---------------------------------------------------------------------------

def test_criterion_9_rbffd_exactness():
    rng = np.random.default_rng(9)
    worst = 0.0
    nodes = H.make_nodes(H.ExperimentConfig(problem="awave2d", **FULL_2D))
    st = build_stencils(nodes, 50)
    k2 = Kernel("imq", 3.0)
    stencils = [(nodes.points[st[j]], k2, ["x", "y", "xx", "yy", "xy"])
                for j in rng.choice(nodes.n, 250, replace=False)]
    for _ in range(250):
        dim = int(rng.choice([2, 3]))
        m = int(rng.integers(10, 61))
        pts = rng.uniform(-0.25, 0.25, (m, dim))
        derivs = ["x", "xx", "yy", "xy"] + (["zz", "yz"] if dim == 3 else [])
        stencils.append((pts, Kernel("imq", 3.0 if dim == 2 else 0.75), derivs))
    for pts, k, derivs in stencils:
        W = local_weights(pts, k, derivs)
        Phi = k.gram(pts, pts)  # column c is the translate centered at pts[c]
        for d, w in zip(derivs, W):
            exact = partial(k, pts, pts[0], d)
            worst = max(worst, np.abs(w @ Phi - exact).max() / np.abs(exact).max())
    ok1 = worst <= 1e-9

    gap = 0.0
    for n in (40, 60):
        cfg = H.ExperimentConfig(problem="awave2d", n_nodes=n, n_loc=n, eps=3.0)
        ns = H.make_nodes(cfg)
        mats = assemble_diff_matrices(ns, build_stencils(ns, n), Kernel("imq", 3.0), ["x", "xx", "yy", "xy"])
        for d, D in mats.items():
            G = global_diff_matrix(ns.points, Kernel("imq", 3.0), d)
            gap = max(gap, np.abs(D.toarray() - G).max() / np.abs(G).max())
    ok2 = gap <= 1e-8
    record(9, "RBF-FD exactness", ok1 and ok2,
           f"{len(stencils)} stencils, worst relative translate error {worst:.1e} (limit 1e-9); "
           f"local vs global with n_loc=N<=60: {gap:.1e} (limit 1e-8)")
    assert ok1 and ok2


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_criterion_")):
        try:
            fn()
        except AssertionError:
            failed += 1
    print("\n".join(["", "summary:"] + LINES))
    sys.exit(1 if failed else 0)

"""The ten acceptance criteria at their stated tolerances; one summary line each."""
import io
import itertools
import os
import time

import numpy as np
import pytest

from roughkit import kernels
from roughkit.algebra import (
    dilate,
    exp_trunc,
    group_inverse,
    homogeneous_norm,
    identity,
    log_trunc,
    minus_map,
    shuffle_defect,
    tensor_multiply,
)
from roughkit.cli import run
from roughkit.experiments import (
    StudyConfig,
    counterexample_study,
    covariance_lemma_suite,
    good_sequence_study,
    wick_check,
    wong_zakai_study,
)
from roughkit.gaussian import RngSpec, fbm_covariance, kernel_covariance, sample_bm, sample_fbm
from roughkit.metrics import holder_distance
from roughkit.path import (
    PiecewiseLinearPath,
    concat_oplus,
    dyadic_times,
    identity_path,
    pure_area_path,
    signature_lift,
    translate,
)
from roughkit.rde import linear_scalar, linear_scalar_solution

from conftest import random_plp, record_criterion

TOL = 1e-10
SEED = 7
THREADS = min(8, os.cpu_count() or 1)


def _max_comp_diff(g, h) -> float:
    return max(float(np.max(np.abs(a - b))) for a, b in zip(g.components(), h.components()) if a is not None)


def _elements(count: int, rng):
    out = []
    for k in range(count):
        level, d = (2, 3) if k % 2 else (3, 2)
        x = random_plp(rng, n=6, d=d, scale=0.4)
        out.append(signature_lift(x, level).increment(0, len(x) - 1))
    return out


def test_criterion_01_algebra():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    G, Hs, Ks = _elements(1000, rng), _elements(1000, rng), _elements(1000, rng)
    worst = dict.fromkeys(("assoc", "unit", "inverse", "homog", "subadd", "symm", "explog", "shuffle"), 0.0)
    for g, h, k in zip(G, Hs, Ks):
        if (g.dim, g.level) != (h.dim, h.level):
            continue
        e = identity(g.dim, g.level)
        worst["assoc"] = max(worst["assoc"], _max_comp_diff(
            tensor_multiply(tensor_multiply(g, h), k), tensor_multiply(g, tensor_multiply(h, k))))
        worst["unit"] = max(worst["unit"], _max_comp_diff(tensor_multiply(g, e), g), _max_comp_diff(tensor_multiply(e, g), g))
        worst["inverse"] = max(worst["inverse"], _max_comp_diff(tensor_multiply(g, group_inverse(g)), e))
        lam = rng.uniform(-3, 3)
        n = homogeneous_norm(g)
        worst["homog"] = max(worst["homog"], abs(homogeneous_norm(dilate(g, lam)) - abs(lam) * n))
        worst["subadd"] = max(worst["subadd"], homogeneous_norm(tensor_multiply(g, h)) - n - homogeneous_norm(h))
        worst["symm"] = max(worst["symm"], abs(homogeneous_norm(group_inverse(g)) - n))
        worst["explog"] = max(worst["explog"], _max_comp_diff(exp_trunc(log_trunc(g)), g))
        worst["shuffle"] = max(worst["shuffle"], shuffle_defect(g))
    elapsed = time.perf_counter() - start
    ok = all(v <= TOL for v in worst.values()) and elapsed < 10.0
    detail = f"max residual {max(worst.values()):.2e} (tol {TOL:g}), {elapsed:.1f}s"
    record_criterion(1, "algebra suite on 1000 elements", ok, detail)
    assert ok, worst


def test_criterion_02_chen_minus():
    start = time.perf_counter()
    rng = np.random.default_rng(SEED)
    chen = 0.0
    for _ in range(100):
        x = random_plp(rng, n=12, d=2)
        X = signature_lift(x, 3)
        s, t, u = np.sort(rng.choice(len(x), 3, replace=False))
        chen = max(chen, _max_comp_diff(X.increment(s, u), tensor_multiply(X.increment(s, t), X.increment(t, u))))
    minus = 0.0
    for _ in range(100):
        x = random_plp(rng, n=10, d=2, scale=0.5)
        y = PiecewiseLinearPath(x.times, 0.5 * np.cumsum(rng.normal(size=x.values.shape), axis=0))
        Z = signature_lift(concat_oplus(x, y))
        D = signature_lift(y - x)
        minus = max(minus, _max_comp_diff(minus_map(Z.increment(0, len(x) - 1)), D.increment(0, len(x) - 1)))
    x = sample_bm(dyadic_times(8), 2, RngSpec(SEED))
    trans = holder_distance(translate(x, signature_lift(x)), identity_path(x.times, 2), 2.5).distance
    elapsed = time.perf_counter() - start
    ok = chen <= TOL and minus <= TOL and trans < 1e-8 and elapsed < 10.0
    detail = f"Chen {chen:.1e}, Minus {minus:.1e}, translate {trans:.1e}, {elapsed:.1f}s"
    record_criterion(2, "Chen and Minus suite", ok, detail)
    assert ok, detail


def test_criterion_03_metric_oracles():
    exact = True
    for n in range(2, 13):
        rng = np.random.default_rng(n)
        X = signature_lift(random_plp(rng, n=n, d=2))
        one = identity_path(X.times, 2)
        dp = kernels.pvar_dp(X.components(), one.components(), 2.5, 2)
        best = 0.0
        for r in range(n - 1):
            for inner in itertools.combinations(range(1, n - 1), r):
                pts = (0,) + inner + (n - 1,)
                norms = kernels.pair_norms(X.components(), one.components(), 2, np.array(pts[:-1]), np.array(pts[1:]))
                total = 0.0
                for v in norms:
                    total += v**2.5
                best = max(best, total)
        exact &= dp == best
    t = np.linspace(0, 1, 129)
    A, E = pure_area_path(t), identity_path(t, 2)
    brute = 0.0
    for i in range(len(t)):
        for j in range(i + 1, len(t)):
            g = A.increment(i, j)
            brute = max(brute, homogeneous_norm(g) / (t[j] - t[i]) ** 0.4)
    closed = np.sqrt(2.0 * np.sqrt(2.0))
    dist = holder_distance(E, A, 2.5).distance
    gap = max(abs(dist - closed), abs(brute - closed))
    ok = exact and gap < 1e-12
    record_criterion(3, "metric oracles", ok, f"DP == enumeration for N<=12: {exact}; closed-form gap {gap:.1e}")
    assert ok


def test_criterion_04_counterexample():
    res = counterexample_study(2.5, 16, halvings=6)
    ok = bool(np.all(res.defect_zero >= res.floor) and np.all(res.defect_loops >= res.floor))
    detail = (f"floor {res.floor:.6f}, min zero-path defect {res.defect_zero.min():.6f}, "
              f"min loop defect {res.defect_loops.min():.6f} over {len(res.mesh)} meshes")
    record_criterion(4, "pure-area counterexample floor", ok, detail)
    assert ok


@pytest.mark.slow
def test_criterion_05_bm_rate():
    start = time.perf_counter()
    cfg = StudyConfig(driver="bm", p=2.5, fine=12, levels=(3, 4, 5, 6, 7, 8), M=64, seed=SEED, threads=THREADS)
    res = good_sequence_study(cfg)
    elapsed = time.perf_counter() - start
    lo, hi = res.slope_ci
    end = res.fits["endpoint_l2"]["slope"]
    ok = res.slope > 0 and lo > 0 and abs(end - 0.5) <= 0.1 and elapsed < 300
    detail = f"slope {res.slope:.4f} CI ({lo:.4f}, {hi:.4f}), endpoint slope {end:.3f}, {elapsed:.0f}s"
    record_criterion(5, "BM good-sequence rate", ok, detail)
    assert ok, detail


def _mc_cov_check(H: float, M: int = 10**4) -> tuple[bool, float]:
    g = dyadic_times(3)  # columns are t = 1/4, 1/2, 1
    pairs = np.array([sample_fbm(g, 1, H, RngSpec(SEED, r)).values[[2, 4, 8], 0] for r in range(M)])
    worst = 0.0
    ok = True
    for i, j in ((0, 1), (1, 2), (0, 2), (2, 2)):
        prod = pairs[:, i] * pairs[:, j]
        s, t = (0.25, 0.5, 1.0)[i], (0.25, 0.5, 1.0)[j]
        z = abs(prod.mean() - fbm_covariance(s, t, H)) / (prod.std(ddof=1) / np.sqrt(M))
        worst = max(worst, z)
        ok &= z < 4.0
    return ok, worst


@pytest.mark.slow
def test_criterion_06_fbm():
    parts = {}
    for H in (0.3, 0.4):
        parts[f"mc{H}"] = _mc_cov_check(H)
    quad = max(abs(kernel_covariance(s, t, H) - fbm_covariance(s, t, H))
               for H in (0.3, 0.4) for s, t in ((0.25, 0.75), (0.5, 1.0), (1.0, 1.0)))
    start = time.perf_counter()
    r4 = good_sequence_study(StudyConfig(driver="fbm", H=0.4, level=2, p=2.9, fine=11, levels=(3, 4, 5, 6, 7, 8),
                                         M=32, seed=SEED, statistic="lift", threads=THREADS))
    r3 = good_sequence_study(StudyConfig(driver="fbm", H=0.3, level=3, p=3.95, fine=9, levels=(3, 4, 5, 6),
                                         M=16, seed=SEED, statistic="lift", threads=THREADS))
    elapsed = time.perf_counter() - start
    ok = all(v[0] for v in parts.values()) and quad < 1e-3 and r4.slope > 0 and r3.slope > 0 and elapsed < 600
    detail = (f"MC max |z| {max(v[1] for v in parts.values()):.2f}, quadrature gap {quad:.1e}, "
              f"slope H=0.4 {r4.slope:.4f} CI ({r4.slope_ci[0]:.4f}, {r4.slope_ci[1]:.4f}), "
              f"slope H=0.3 {r3.slope:.4f} CI ({r3.slope_ci[0]:.4f}, {r3.slope_ci[1]:.4f}), {elapsed:.0f}s")
    record_criterion(6, "fBm sampler, kernel and rate studies", ok, detail)
    assert ok, detail


def test_criterion_07_covariance_lemmas():
    lattice = {}
    ratios = {}
    for H, pp in ((0.4, 3.0), (0.3, 3.8)):
        rep = covariance_lemma_suite(H, pp, sizes=(4, 8, 16, 32, 64, 128, 256), lattice=20)
        lattice[H] = {k: v for k, v in rep["lattice_violations"].items() if v}
        ratios[(H, pp)] = (rep["non_increasing"], rep["constant"], rep["increase_steps"])
    A = np.random.default_rng(SEED).normal(size=(4, 4))
    formula, mc, se = wick_check(A @ A.T / 4, 10**6, RngSpec(SEED))
    wick_ok = abs(mc - formula) < 4 * se
    lattice_ok = not any(lattice.values())
    ratio_ok = all(v[0] and np.isfinite(v[1]) for v in ratios.values())
    ok = lattice_ok and ratio_ok and wick_ok
    detail = (f"lattice violations {lattice}; ratio non-increasing "
              f"{ {k: v[0] for k, v in ratios.items()} } (increases at {ratios[(0.3, 3.8)][2]}); "
              f"Wick |z| {abs(mc - formula) / se:.2f}")
    record_criterion(7, "covariance lemmas", ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_08_wong_zakai():
    cfg = StudyConfig(driver="bm", dim=1, p=2.5, fine=10, levels=(1, 3, 5, 7), M=32, seed=SEED, threads=THREADS)
    vf, exact = linear_scalar(0.1, 0.5), linear_scalar_solution(0.1, 0.5)
    res = wong_zakai_study(cfg, vf, [1.0], closed_form=exact)
    u, c = res.extras["uniform"], res.extras["closed_form"]
    dev = float(np.max(np.abs(u - c) / c))
    anti = wong_zakai_study(cfg, vf, [1.0], anticipative=True)
    ua = anti.extras["uniform"]
    mono = float(np.mean(np.all(np.diff(ua, axis=1) < 0, axis=1)))
    ok = res.slope > 0 and dev <= 0.1 and mono >= 0.9 and anti.slope > 0
    detail = (f"slope {res.slope:.4f}, closed-form deviation {dev:.1e}, anticipative slope {anti.slope:.4f}, "
              f"monotone replicas {mono:.0%}")
    record_criterion(8, "Wong-Zakai", ok, detail)
    assert ok, detail


def test_criterion_09_solver_cross_validation():
    from test_rde import _smooth_fields, level2_errors

    mesh, err = level2_errors(SEED)
    order = float(np.polyfit(np.log(mesh), np.log(err), 1)[0])
    vf = _smooth_fields()
    from roughkit.rde import solve_ode

    x = sample_bm(dyadic_times(7), 2, RngSpec(SEED))
    t = x.times
    h = np.column_stack([np.sin(2 * np.pi * t), t * (1 - t)])
    X = signature_lift(x)
    base = solve_ode(vf, [0.1, 0.2], x, lift_level=2).joint_lift
    ratios = []
    for eps in (1e-3, 1e-2, 1e-1):
        xe = PiecewiseLinearPath(t, x.values + eps * h)
        delta = holder_distance(signature_lift(xe), X, 2.5).distance
        out = holder_distance(solve_ode(vf, [0.1, 0.2], xe, lift_level=2).joint_lift, base, 2.5).distance
        ratios.append(out / delta)
    spread = max(ratios) / min(ratios)
    ok = order >= 0.9 and spread < 3.0
    record_criterion(9, "solver cross-validation", ok, f"order {order:.2f}, continuity ratio spread {spread:.2f}")
    assert ok


def test_criterion_10_determinism(tmp_path):
    def files(tag):
        d = tmp_path / tag
        d.mkdir()
        cmds = [
            ("sample", "--driver", "fbm", "--H", "0.3", "--fine", "8", "--method", "davies_harte", "--seed", "5",
             "--out", str(d / "path.csv")),
            ("lift", "--in", str(d / "path.csv"), "--level", "3", "--out", str(d / "lift.csv")),
            ("good-seq", "--fine", "8", "--levels", "2:5", "--replicas", "6", "--seed", str(SEED), "--outdir", str(d)),
            ("counterexample", "--grid", "8", "--halvings", "2", "--outdir", str(d)),
        ]
        for argv in cmds:
            assert run(list(argv), io.StringIO(), io.StringIO()) == 0
        return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}

    a, b = files("a"), files("b")
    ok = a == b and len(a) == 4
    record_criterion(10, "determinism", ok, f"{len(a)} CSV files byte-identical across runs: {a == b}")
    assert ok

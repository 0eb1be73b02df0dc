"""Monte-Carlo rate studies, the area counterexample and the exact covariance checks."""
from __future__ import annotations

import dataclasses
import datetime
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import __version__
from .gaussian import (
    RngSpec,
    finallemma_check,
    increasing_violations,
    increment_covariance,
    sample_bm,
    sample_fbm,
    wick_fourth_moment,
)
from .metrics import good2_terms, good_sequence_defect, holder_distance
from .path import (
    PiecewiseLinearPath,
    area_loops,
    concat_oplus,
    dyadic_times,
    linear_interpolant,
    pure_area_path,
    signature_lift,
)
from .rde import VectorFieldSet, solve_ode

__all__ = [
    "StudyConfig",
    "RateStudyResult",
    "StudyAborted",
    "CounterexampleResult",
    "fit_rate",
    "good_sequence_study",
    "counterexample_study",
    "wong_zakai_study",
    "covariance_lemma_suite",
    "wick_check",
    "write_study_csv",
    "write_summary_json",
    "default_threads",
]

log = logging.getLogger(__name__)

ABORT_FRACTION = 0.05
BOOT_STREAM = 2**32
BOOT_SAMPLES = 1000
STUDY_CSV_HEADER = "replica,level,mesh,defect,a1,a2,a4,wall_ms"


class StudyAborted(ArithmeticError):
    """More replicas failed than the abort policy allows."""


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("ROUGHKIT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class StudyConfig:
    """Parameters of a coupled rate study on dyadic subdivisions of a fine grid.

    ``fine`` is the exponent of the fine grid (2^fine intervals); ``levels``
    are the exponents of the coarse dyadic subdivisions.  ``statistic="good"``
    measures the joint-lift defect, ``"lift"`` the distance between the lift of
    the interpolant and the reference lift.
    """

    driver: str = "bm"
    H: float = 0.5
    level: int = 2
    p: float = 2.5
    p_prime: float | None = None
    fine: int = 12
    levels: tuple = (3, 4, 5, 6, 7, 8)
    M: int = 64
    q: float = 2.0
    seed: int = 0
    dim: int = 2
    statistic: str = "good"
    pairs: str = "auto"
    fbm_method: str = "cholesky"
    threads: int | None = None
    timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(k) for k in self.levels))
        if self.driver not in ("bm", "fbm"):
            raise ValueError(f"driver must be 'bm' or 'fbm', got {self.driver!r}")
        if self.driver == "bm" and self.H != 0.5:
            raise ValueError("a Brownian driver has H = 0.5")
        if not 0.0 < self.H < 1.0:
            raise ValueError("H must lie in (0, 1)")
        if self.level not in (2, 3):
            raise ValueError("level must be 2 or 3")
        if not 1.0 / self.H < self.p < self.level + 1:
            raise ValueError(f"p must lie in (1/H, level + 1) = ({1 / self.H:.4g}, {self.level + 1})")
        if len(self.levels) < 3 or sorted(set(self.levels)) != list(self.levels):
            raise ValueError("levels must be >= 3 distinct increasing exponents")
        if self.levels[0] < 1 or self.levels[-1] >= self.fine - 2:
            raise ValueError("coarse levels must stay below fine - 2")
        if self.M < 2 or self.q < 1:
            raise ValueError("need M >= 2 replicas and q >= 1")
        if self.statistic not in ("good", "lift"):
            raise ValueError("statistic must be 'good' or 'lift'")
        if self.statistic == "good" and self.level == 3 and self.dim > 2:
            raise ValueError("level-3 joint lifts are limited to dim <= 2")

    def echo(self) -> dict:
        out = dataclasses.asdict(self)
        out["levels"] = list(self.levels)
        out.pop("threads")
        out.pop("timing")
        return out


@dataclass
class RateStudyResult:
    mesh: np.ndarray
    defect_mean: np.ndarray
    defect_q: np.ndarray
    defect_se: np.ndarray
    slope: float
    intercept: float
    slope_ci: tuple[float, float]
    replicas: int
    config: dict
    raw: np.ndarray
    extras: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    aborted: list = field(default_factory=list)
    wall_ms: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Rate fitting


def _lq(x: np.ndarray, q: float, axis: int = 0) -> np.ndarray:
    return np.mean(np.abs(x) ** q, axis=axis) ** (1.0 / q)


def _ols(logm: np.ndarray, logd: np.ndarray) -> tuple[float, float]:
    A = np.column_stack([logm, np.ones_like(logm)])
    (slope, intercept), *_ = np.linalg.lstsq(A, logd, rcond=None)
    return float(slope), float(intercept)


def fit_rate(
    mesh,
    defect,
    replicas=None,
    q: float = 2.0,
    n_boot: int = BOOT_SAMPLES,
    seed: int = 0,
    level: float = 0.95,
) -> tuple[float, float, tuple[float, float]]:
    """Least squares on (log mesh, log defect).

    With ``replicas`` (an M x L array of per-replica defects, ``defect`` being
    their L^q aggregate) the interval is a percentile bootstrap over replicas;
    otherwise it is the t-interval of the regression slope.
    """
    mesh = np.asarray(mesh, dtype=np.float64)
    defect = np.asarray(defect, dtype=np.float64)
    if mesh.shape != defect.shape or mesh.ndim != 1:
        raise ValueError("mesh and defect must be 1-D arrays of equal length")
    if len(mesh) < 3:
        raise ValueError("need at least 3 points to fit a rate")
    if np.any(mesh <= 0) or np.any(defect <= 0) or not np.all(np.isfinite(defect)):
        raise ValueError("mesh and defect must be positive and finite")
    logm = np.log(mesh)
    slope, intercept = _ols(logm, np.log(defect))
    alpha = 1.0 - level
    if replicas is not None:
        R = np.asarray(replicas, dtype=np.float64)
        gen = RngSpec(seed, BOOT_STREAM).generator()
        M = R.shape[0]
        boots = np.empty(n_boot)
        for b in range(n_boot):
            agg = _lq(R[gen.integers(0, M, M)], q)
            boots[b] = _ols(logm, np.log(np.maximum(agg, np.finfo(float).tiny)))[0]
        lo, hi = np.quantile(boots, [alpha / 2, 1 - alpha / 2])
        return slope, intercept, (float(lo), float(hi))
    resid = np.log(defect) - (slope * logm + intercept)
    dof = len(mesh) - 2
    sxx = float(np.sum((logm - logm.mean()) ** 2))
    se = float(np.sqrt(np.sum(resid**2) / dof / sxx)) if dof > 0 else 0.0
    tq = float(stats.t.ppf(1 - alpha / 2, dof)) if dof > 0 else 0.0
    return slope, intercept, (slope - tq * se, slope + tq * se)


# ---------------------------------------------------------------------------
# Replica orchestration


def _run_replicas(fn: Callable[[int], object], M: int, threads: int | None) -> tuple[dict, list]:
    """Run fn(r) for r < M; failures are logged and collected, results keyed by replica."""
    threads = default_threads() if threads is None else max(1, int(threads))

    def guarded(r):
        try:
            return r, fn(r), None
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("replica %d aborted: %s", r, exc)
            return r, None, f"{type(exc).__name__}: {exc}"

    if threads == 1:
        results = [guarded(r) for r in range(M)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(guarded, range(M)))
    ok, aborted = {}, []
    for r, value, err in results:
        if err is None:
            ok[r] = value
        else:
            aborted.append({"replica": r, "error": err})
    if len(aborted) > ABORT_FRACTION * M:
        raise StudyAborted(f"{len(aborted)} of {M} replicas aborted; first: {aborted[0]['error']}")
    return ok, aborted


def _sample_driver(cfg: StudyConfig, grid: np.ndarray, r: int) -> PiecewiseLinearPath:
    rng = RngSpec(cfg.seed, r)
    if cfg.driver == "bm":
        return sample_bm(grid, cfg.dim, rng)
    return sample_fbm(grid, cfg.dim, cfg.H, rng, method=cfg.fbm_method)


def _aggregate(cfg: StudyConfig, mesh: np.ndarray, raw: np.ndarray) -> dict:
    slope, intercept, ci = fit_rate(mesh, _lq(raw, cfg.q), replicas=raw, q=cfg.q, seed=cfg.seed)
    return {"slope": slope, "intercept": intercept, "ci": ci}


def _endpoint_cross(x: PiecewiseLinearPath, ref_l2_end: np.ndarray, D: np.ndarray) -> float:
    """|int_0^1 x (x) dx^D - x^2_{0,1}| with x^D the D-linear interpolant of x."""
    xd = linear_interpolant(x, D).refine(x.times).values
    dxd = np.diff(xd, axis=0)
    x1 = x.values - x.values[0]
    mid = 0.5 * (x1[:-1] + x1[1:])
    cross = mid.T @ dxd
    return float(np.linalg.norm(cross - ref_l2_end))


def good_sequence_study(cfg: StudyConfig) -> RateStudyResult:
    """Coupled defect study: every coarse interpolant comes from the same fine sample.

    Besides the main defect it records, per replica and level, the three
    level-2 sup terms (when level = 2) and the endpoint cross-integral error
    |int_0^1 x (x) dx^D - x^2_{0,1}|, whose L^2 rate is fitted separately.
    """
    grid = dyadic_times(cfg.fine)
    mesh = np.array([2.0**-k for k in cfg.levels])
    L = len(cfg.levels)

    def replica(r: int):
        x = _sample_driver(cfg, grid, r)
        ref = signature_lift(x, cfg.level)
        ref2_end = ref.from_start()[1][-1]
        row = np.empty((5, L))
        walls = np.zeros(L)
        for k, lev in enumerate(cfg.levels):
            start = time.perf_counter()
            D = dyadic_times(lev)
            xn = linear_interpolant(x, D)
            if cfg.statistic == "good":
                row[0, k] = good_sequence_defect(xn, ref, cfg.p, level=cfg.level, pairs=cfg.pairs)
            else:
                lift_n = signature_lift(xn.refine(grid), cfg.level)
                row[0, k] = holder_distance(lift_n, ref, cfg.p, pairs=cfg.pairs).distance
            if cfg.level == 2:
                row[1:4, k] = good2_terms(xn, ref, cfg.p, pairs=cfg.pairs)
            else:
                row[1:4, k] = np.nan
            row[4, k] = _endpoint_cross(x, ref2_end, D)
            if cfg.timing:
                walls[k] = 1000.0 * (time.perf_counter() - start)
        return row, walls

    ok, aborted = _run_replicas(replica, cfg.M, cfg.threads)
    idx = sorted(ok)
    stack = np.array([ok[r][0] for r in idx])
    walls = np.array([ok[r][1] for r in idx])
    raw = stack[:, 0, :]
    fit = _aggregate(cfg, mesh, raw)
    extras = {
        "replica_index": np.array(idx),
        "a1": stack[:, 1, :],
        "a2": stack[:, 2, :],
        "a4": stack[:, 3, :],
        "endpoint": stack[:, 4, :],
    }
    fits = {"endpoint_l2": _fit_dict(*fit_rate(mesh, _lq(stack[:, 4, :], 2.0), replicas=stack[:, 4, :], q=2.0, seed=cfg.seed))}
    if cfg.level == 2:
        fits["a1"] = _fit_dict(*fit_rate(mesh, _lq(stack[:, 1, :], cfg.q), replicas=stack[:, 1, :], q=cfg.q, seed=cfg.seed))
    return RateStudyResult(
        mesh=mesh,
        defect_mean=raw.mean(axis=0),
        defect_q=_lq(raw, cfg.q),
        defect_se=raw.std(axis=0, ddof=1) / np.sqrt(len(idx)),
        slope=fit["slope"],
        intercept=fit["intercept"],
        slope_ci=fit["ci"],
        replicas=len(idx),
        config=cfg.echo(),
        raw=raw,
        extras=extras,
        fits=fits,
        aborted=aborted,
        wall_ms=walls,
    )


def _fit_dict(slope, intercept, ci) -> dict:
    return {"slope": slope, "intercept": intercept, "ci": list(ci)}


# ---------------------------------------------------------------------------
# Counterexample: approximations of a pure-area path


@dataclass
class CounterexampleResult:
    mesh: np.ndarray
    defect_zero: np.ndarray
    defect_loops: np.ndarray
    floor: float
    exact_zero: float


def counterexample_floor() -> float:
    """Lower bound, valid for every approximating sequence: the (y, x) block alone."""
    return float(np.sqrt(2.0 * np.sqrt(2.0)))


def counterexample_zero_value() -> float:
    """Defect of the zero approximation: three level-2 blocks differ from the area."""
    return float(np.sqrt(2.0 * np.sqrt(6.0)))


def counterexample_study(p: float, grid: int, halvings: int = 6, vertices: int = 8) -> CounterexampleResult:
    """Defects of zero paths and of shrinking closed loops against t -> exp(t[e1, e2]).

    For each mesh 1/(grid 2^m), m = 0..halvings, the zero path and a sequence of
    loops with enclosed area equal to each interval length are compared with the
    pure-area path through S' and S''.  Neither sequence converges.
    """
    if not 2.0 < p < 3.0:
        raise ValueError("p must lie in (2, 3)")
    if grid < 1:
        raise ValueError("grid must be a positive number of intervals")
    mesh, zero, loops = [], [], []
    for m in range(halvings + 1):
        n = grid * 2**m
        t = np.linspace(0.0, 1.0, n + 1)
        area = pure_area_path(t)
        z = PiecewiseLinearPath(t, np.zeros((n + 1, 2)))
        zero.append(good_sequence_defect(z, area, p))
        lp = area_loops(t, vertices)
        loops.append(good_sequence_defect(lp, pure_area_path(lp.times), p, pairs="auto"))
        mesh.append(1.0 / n)
    return CounterexampleResult(
        np.array(mesh), np.array(zero), np.array(loops), counterexample_floor(), counterexample_zero_value()
    )


# ---------------------------------------------------------------------------
# Wong-Zakai


def wong_zakai_study(
    cfg: StudyConfig,
    vf: VectorFieldSet,
    y0,
    anticipative: bool = False,
    closed_form: Callable[[np.ndarray, PiecewiseLinearPath], np.ndarray] | None = None,
    substeps: int = 1,
) -> RateStudyResult:
    """Solutions along dyadic interpolants of a Brownian sample against the fine solution.

    The fitted defect is the Hoelder distance of the joint lifts S(x^D (+) y^D)
    and S(x (+) y) on the fine grid.  Uniform errors are kept in ``extras``; with
    ``closed_form(y0, path) -> values`` the exact solution error is stored too.
    With ``anticipative=True`` the initial condition is the driver endpoint x_1.
    """
    if cfg.driver != "bm":
        raise ValueError("the Wong-Zakai study uses a Brownian driver")
    if vf.drive_dim != cfg.dim:
        raise ValueError(f"config dim {cfg.dim} does not match the fields' drive dimension {vf.drive_dim}")
    if anticipative and vf.state_dim != vf.drive_dim:
        raise ValueError("the anticipative start x_1 needs state_dim == drive_dim")
    grid = dyadic_times(cfg.fine)
    mesh = np.array([2.0**-k for k in cfg.levels])
    L = len(cfg.levels)

    def replica(r: int):
        x = _sample_driver(cfg, grid, r)
        start = x.values[-1].copy() if anticipative else np.atleast_1d(np.asarray(y0, dtype=np.float64))
        ref = solve_ode(vf, start, x, substeps).y
        ref_lift = signature_lift(concat_oplus(x, ref), 2)
        exact = closed_form(start, x) if closed_form is not None else None
        row = np.full((3, L), np.nan)
        walls = np.zeros(L)
        for k, lev in enumerate(cfg.levels):
            t0 = time.perf_counter()
            xk = linear_interpolant(x, dyadic_times(lev)).refine(grid)
            yk = solve_ode(vf, start, xk, substeps).y
            lk = signature_lift(concat_oplus(xk, yk), 2)
            row[0, k] = holder_distance(lk, ref_lift, cfg.p, pairs=cfg.pairs).distance
            row[1, k] = np.max(np.abs(yk.values - ref.values))
            if exact is not None:
                row[2, k] = np.max(np.abs(closed_form(start, xk) - exact))
            if cfg.timing:
                walls[k] = 1000.0 * (time.perf_counter() - t0)
        return row, walls

    ok, aborted = _run_replicas(replica, cfg.M, cfg.threads)
    idx = sorted(ok)
    stack = np.array([ok[r][0] for r in idx])
    walls = np.array([ok[r][1] for r in idx])
    raw = stack[:, 0, :]
    fit = _aggregate(cfg, mesh, raw)
    uniform = stack[:, 1, :]
    extras = {"replica_index": np.array(idx), "uniform": uniform, "closed_form": stack[:, 2, :]}
    fits = {"uniform": _fit_dict(*fit_rate(mesh, _lq(uniform, cfg.q), replicas=uniform, q=cfg.q, seed=cfg.seed))}
    return RateStudyResult(
        mesh=mesh,
        defect_mean=raw.mean(axis=0),
        defect_q=_lq(raw, cfg.q),
        defect_se=raw.std(axis=0, ddof=1) / np.sqrt(len(idx)),
        slope=fit["slope"],
        intercept=fit["intercept"],
        slope_ci=fit["ci"],
        replicas=len(idx),
        config=dict(cfg.echo(), fields=vf.name, anticipative=anticipative),
        raw=raw,
        extras=extras,
        fits=fits,
        aborted=aborted,
        wall_ms=walls,
    )


# ---------------------------------------------------------------------------
# Exact covariance checks


def covariance_lemma_suite(H: float, p_prime: float, sizes=(4, 8, 16, 32, 64, 128, 256), lattice: int = 20) -> dict:
    """Exact covariance sums on uniform subdivisions and the monotonicity lattice.

    ``ratios`` are lhs / rhs_shape per size; ``constant`` is their maximum.
    Violations are reported, never raised.
    """
    sizes = [int(n) for n in sizes]
    lhs, rhs = [], []
    for n in sizes:
        a, b = finallemma_check(np.linspace(0.0, 1.0, n + 1), H, p_prime)
        lhs.append(a)
        rhs.append(b)
    ratios = np.array(lhs) / np.array(rhs)
    steps = np.diff(ratios)
    viol = increasing_violations(H, lattice)
    return {
        "H": H,
        "p_prime": p_prime,
        "sizes": sizes,
        "lhs": lhs,
        "rhs_shape": rhs,
        "ratios": ratios.tolist(),
        "constant": float(ratios.max()),
        "non_increasing": bool(np.all(steps <= 1e-12 * ratios[:-1])),
        "increase_steps": [sizes[i + 1] for i in np.flatnonzero(steps > 1e-12 * ratios[:-1])],
        "lattice_violations": viol,
        "lattice_total": int(sum(viol.values())),
    }


def wick_check(cov, M: int, rng: RngSpec) -> tuple[float, float, float]:
    """Wick formula for E(X1 X2 X3 X4) against a Monte-Carlo mean and its standard error."""
    C = np.asarray(cov, dtype=np.float64)
    if C.shape != (4, 4):
        raise ValueError("need a 4 x 4 covariance matrix")
    X = rng.generator().multivariate_normal(np.zeros(4), C, size=M, method="cholesky")
    prod = X.prod(axis=1)
    formula = wick_fourth_moment(C[0, 1], C[0, 2], C[0, 3], C[1, 2], C[1, 3], C[2, 3])
    return float(formula), float(prod.mean()), float(prod.std(ddof=1) / np.sqrt(M))


def fbm_increment_covariance_check(H: float, grid) -> float:
    """Max deviation between the increment covariance and differences of the point covariance."""
    from .gaussian import fbm_covariance

    g = np.asarray(grid, dtype=np.float64)
    s, t = g[:-1, None], g[1:, None]
    s2, t2 = g[None, :-1], g[None, 1:]
    a = increment_covariance(s, t, s2, t2, H)
    b = fbm_covariance(t, t2, H) - fbm_covariance(t, s2, H) - fbm_covariance(s, t2, H) + fbm_covariance(s, s2, H)
    return float(np.max(np.abs(a - b)))


# ---------------------------------------------------------------------------
# Output files


def write_study_csv(result: RateStudyResult, filename) -> None:
    """Per-replica rows; deterministic for a fixed config unless timing was enabled."""
    ex = result.extras
    ids = ex.get("replica_index", np.arange(result.raw.shape[0]))
    levels = result.config["levels"]
    nan = np.full_like(result.raw, np.nan)
    a1, a2, a4 = (ex.get(k, nan) for k in ("a1", "a2", "a4"))
    walls = result.wall_ms if result.wall_ms is not None else np.zeros_like(result.raw)
    with open(filename, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# roughkit {__version__}\n")
        fh.write(f"# seed={result.config['seed']},streams=0..{result.config['M'] - 1}\n")
        fh.write(STUDY_CSV_HEADER + "\n")
        for r in range(result.raw.shape[0]):
            for k, lev in enumerate(levels):
                vals = (result.mesh[k], result.raw[r, k], a1[r, k], a2[r, k], a4[r, k], walls[r, k])
                fh.write(f"{int(ids[r])},{lev}," + ",".join(f"{v:.17g}" for v in vals) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def summary_dict(result: RateStudyResult, extra: dict | None = None) -> dict:
    out = {
        "version": __version__,
        "slope": result.slope,
        "intercept": result.intercept,
        "slope_ci": list(result.slope_ci),
        "replicas": result.replicas,
        "mesh": result.mesh,
        "defect_mean": result.defect_mean,
        "defect_q": result.defect_q,
        "defect_se": result.defect_se,
        "fits": result.fits,
        "aborted": result.aborted,
        "config": result.config,
        "seed": result.config.get("seed"),
    }
    if extra:
        out.update(extra)
    return _jsonable(out)


def write_summary_json(result: RateStudyResult, filename, extra: dict | None = None) -> None:
    """Summary with a ``meta`` block; only ``meta`` carries run-dependent fields."""
    out = summary_dict(result, extra)
    out["meta"] = {"created": datetime.datetime.now(datetime.timezone.utc).isoformat()}
    with open(filename, "w", encoding="utf-8") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")

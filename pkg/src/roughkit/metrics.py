"""Controls, Hoelder-type and p-variation distances, and the good-sequence defect.

All suprema run over pairs of grid points.  ``pairs="dyadic"`` restricts the
scan to pairs (i, i + 2^k), a cheap lower bound for the full scan.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .algebra import group_distance
from .path import (
    GRID_ATOL,
    LiftedPath,
    PiecewiseLinearPath,
    identity_path,
    s_double_prime,
    s_prime_concat,
    s_prime_level2,
)

__all__ = [
    "Control",
    "MetricReport",
    "HOLDER",
    "dyadic_pairs",
    "all_pairs",
    "holder_distance",
    "p_variation_distance",
    "p_variation_norm",
    "good_sequence_defect",
    "good2_terms",
    "AUTO_DYADIC_ABOVE",
]

# "auto" pair selection switches to dyadic pairs above this many grid intervals
AUTO_DYADIC_ABOVE = 2**9


@dataclass(frozen=True)
class Control:
    """A control omega(s, t).  ``kind="holder"`` is omega(s, t) = t - s."""

    kind: str = "holder"
    func: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("holder", "custom"):
            raise ValueError(f"unknown control kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("a custom control needs a function")

    def __call__(self, s, t):
        if self.kind == "holder":
            return np.asarray(t, dtype=np.float64) - np.asarray(s, dtype=np.float64)
        return np.asarray(self.func(s, t), dtype=np.float64)

    def is_superadditive(self, grid, tol: float = 1e-12) -> bool:
        g = np.asarray(grid, dtype=np.float64)
        s, t, u = np.meshgrid(g, g, g, indexing="ij")
        mask = (s < t) & (t < u)
        lhs = self(s[mask], t[mask]) + self(t[mask], u[mask])
        ok_diag = np.all(np.abs(self(g, g)) <= tol)
        return bool(ok_diag and np.all(lhs <= self(s[mask], u[mask]) + tol))


HOLDER = Control()


@dataclass(frozen=True)
class MetricReport:
    distance: float
    witness_pair: tuple[float, float]
    basepoint_term: float

    CSV_HEADER = "distance,witness_s,witness_t,basepoint_term"

    def to_csv_row(self) -> str:
        s, t = self.witness_pair
        return ",".join(f"{v:.17g}" for v in (self.distance, s, t, self.basepoint_term))


def dyadic_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, i + 2^k) inside a grid of n points, lexicographically sorted."""
    I, J = [], []
    span = 1
    while span <= n - 1:
        i = np.arange(n - span)
        I.append(i)
        J.append(i + span)
        span *= 2
    if not I:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    I = np.concatenate(I)
    J = np.concatenate(J)
    order = np.lexsort((J, I))
    return I[order], J[order]


def all_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    I, J = np.triu_indices(n, k=1)
    return I.astype(np.int64), J.astype(np.int64)


def _resolve_pairs(pairs: str, n: int):
    if pairs == "auto":
        pairs = "dyadic" if n - 1 > AUTO_DYADIC_ABOVE else "all"
    if pairs == "all":
        return None
    if pairs == "dyadic":
        return dyadic_pairs(n)
    raise ValueError(f"pairs must be 'all', 'dyadic' or 'auto', got {pairs!r}")


def _check_same_grid(x: LiftedPath, y: LiftedPath) -> None:
    if len(x) != len(y) or np.max(np.abs(x.times - y.times)) > GRID_ATOL:
        raise ValueError("paths must be sampled on the same grid (refine first)")
    if x.dim != y.dim or x.level != y.level:
        raise ValueError(f"dimension/level mismatch: ({x.dim}, {x.level}) vs ({y.dim}, {y.level})")


def holder_distance(
    x: LiftedPath,
    y: LiftedPath,
    p: float,
    pairs: str = "all",
    control: Control = HOLDER,
) -> MetricReport:
    """d_{omega,p}(x, y) = d(x_0, y_0) + sup d(x_{s,t}, y_{s,t}) / omega(s,t)^(1/p)."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    _check_same_grid(x, y)
    base = group_distance(x.point(0), y.point(0))
    n = len(x)
    sel = _resolve_pairs(pairs, n)
    if control.kind == "holder":
        if sel is None:
            sup, i, j = kernels.holder_sup(x.components(), y.components(), x.times, p, x.level)
        else:
            sup, i, j = kernels.holder_sup(x.components(), y.components(), x.times, p, x.level, *sel)
    else:
        I, J = sel if sel is not None else all_pairs(n)
        dist = kernels.pair_norms(x.components(), y.components(), x.level, I, J)
        w = control(x.times[I], x.times[J])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(w > 0, dist / w ** (1.0 / p), 0.0)
        k = int(np.argmax(ratio)) if len(ratio) else 0
        sup = float(ratio[k]) if len(ratio) else 0.0
        i, j = (int(I[k]), int(J[k])) if len(ratio) else (0, 0)
    return MetricReport(base + sup, (float(x.times[i]), float(x.times[j])), base)


def p_variation_distance(x: LiftedPath, y: LiftedPath, p: float) -> float:
    """d(x_0, y_0) + sup over grid subdivisions (sum d(x_{t_i t_i+1}, y_{t_i t_i+1})^p)^(1/p)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    _check_same_grid(x, y)
    base = group_distance(x.point(0), y.point(0))
    return base + kernels.pvar_dp(x.components(), y.components(), p, x.level) ** (1.0 / p)


def p_variation_norm(x: LiftedPath, p: float) -> float:
    """p-variation of the increments of x over subdivisions drawn from its grid.

    Dynamic programme V(j) = max_{i<j} V(i) + ||x_{t_i,t_j}||^p, O(N^2).
    The base point does not contribute.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    one = identity_path(x.times, x.dim, x.level)
    return kernels.pvar_dp(x.components(), one.components(), p, x.level) ** (1.0 / p)


def _joint_lifts(x_n: PiecewiseLinearPath, x_ref, level: int):
    if isinstance(x_ref, LiftedPath):
        if x_ref.level == 2 and level == 2:
            return s_prime_level2(x_n, x_ref), s_double_prime(x_ref)
        # a level-3 reference is taken to be the lift of its own first level
        x_ref = x_ref.first_level()
    x_n = x_n.on_grid(x_ref.times)
    return s_prime_concat(x_n, x_ref, level), s_double_prime(x_ref, level)


def good_sequence_defect(
    x_n: PiecewiseLinearPath,
    x_ref,
    p: float,
    level: int = 2,
    pairs: str = "all",
    report: bool = False,
):
    """d_{omega,p}(S'(x_n, x), S''(x)) for a reference x (piecewise-linear or lifted).

    x_n's breakpoints must lie on the reference grid.
    """
    if x_n.dim != (x_ref.dim):
        raise ValueError("approximation and reference must have equal dimension")
    sp, spp = _joint_lifts(x_n, x_ref, level)
    rep = holder_distance(sp, spp, p, pairs=pairs)
    return rep if report else rep.distance


def good2_terms(
    x_n: PiecewiseLinearPath, x_ref: LiftedPath, p: float, pairs: str = "all"
) -> tuple[float, float, float]:
    """The three sup terms characterising good sequences at level 2.

    Returns (A1, A2, A4):

    * A1 = sup |x_n(s,t) - x^1_{s,t}| / omega^{1/p}
    * A2 = sup |int_s^t x_n(s,u) (x) dx_n(u) - x^2_{s,t}| / omega^{2/p}
    * A4 = sup |int_s^t x^1_{s,u} (x) dx_n(u) - x^2_{s,t}| / omega^{2/p}
    """
    if not isinstance(x_ref, LiftedPath):
        from .path import signature_lift

        x_ref = signature_lift(x_ref, 2)
    if x_ref.level != 2:
        raise NotImplementedError("good2_terms is a level-2 statement")
    z = s_prime_level2(x_n, x_ref)
    sel = _resolve_pairs(pairs, len(z))
    if sel is None:
        return kernels.good2_sup(z.level1, z.level2, x_ref.dim, z.times, p)
    return kernels.good2_sup(z.level1, z.level2, x_ref.dim, z.times, p, *sel)

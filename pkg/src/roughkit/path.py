"""Piecewise-linear paths and their lifts to G^n(R^d)-valued paths."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .algebra import (
    GroupElement,
    exp_level1,
    inv_components,
    mul_components,
    push_components,
    _check_level,
)

__all__ = [
    "PiecewiseLinearPath",
    "LiftedPath",
    "linear_interpolant",
    "dyadic_times",
    "union_grid",
    "signature_lift",
    "concat_oplus",
    "s_prime_concat",
    "s_double_prime",
    "s_prime_level2",
    "translate",
    "pure_area_path",
    "identity_path",
    "joint_lift_level2",
    "area_loops",
]

GRID_ATOL = 1e-12


def union_grid(*grids) -> np.ndarray:
    """Sorted union of time grids; points closer than GRID_ATOL are merged."""
    t = np.sort(np.concatenate([np.asarray(g, dtype=np.float64) for g in grids]))
    keep = np.concatenate([[True], np.diff(t) > GRID_ATOL])
    return t[keep]


def _locate(grid: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Indices of ``times`` in ``grid``; raises if a time is not a grid point."""
    idx = np.clip(np.searchsorted(grid, times - GRID_ATOL), 0, len(grid) - 1)
    bad = np.abs(grid[idx] - times) > GRID_ATOL
    if np.any(bad):
        raise ValueError(f"time {times[bad][0]!r} is not on the sample grid")
    return idx


@dataclass(frozen=True, eq=False)
class PiecewiseLinearPath:
    """Path in R^d, linear between consecutive ``times``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64).reshape(-1)
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if t.shape[0] < 2:
            raise ValueError("a path needs at least two sample times")
        if v.shape[0] != t.shape[0]:
            raise ValueError(f"{t.shape[0]} times but {v.shape[0]} values")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("path samples must be finite")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    def at(self, t) -> np.ndarray:
        """Linear interpolation at time(s) ``t`` (shape (..., d))."""
        t = np.asarray(t, dtype=np.float64)
        cols = [np.interp(t, self.times, self.values[:, k]) for k in range(self.dim)]
        return np.stack(cols, axis=-1)

    def refine(self, times) -> "PiecewiseLinearPath":
        """Same path sampled on the union of its grid and ``times`` (exact)."""
        grid = union_grid(self.times, times)
        return PiecewiseLinearPath(grid, self.at(grid))

    def on_grid(self, times) -> "PiecewiseLinearPath":
        """Same path sampled on ``times``; every breakpoint must be in ``times``."""
        times = np.asarray(times, dtype=np.float64)
        _locate(times, self.times)
        return PiecewiseLinearPath(times, self.at(times))

    def __sub__(self, other: "PiecewiseLinearPath") -> "PiecewiseLinearPath":
        grid = union_grid(self.times, other.times)
        return PiecewiseLinearPath(grid, self.at(grid) - other.at(grid))

    def __add__(self, other: "PiecewiseLinearPath") -> "PiecewiseLinearPath":
        grid = union_grid(self.times, other.times)
        return PiecewiseLinearPath(grid, self.at(grid) + other.at(grid))

    def scaled(self, factor: float) -> "PiecewiseLinearPath":
        return PiecewiseLinearPath(self.times, factor * self.values)


@dataclass(frozen=True, eq=False)
class LiftedPath:
    """Grid of group elements; increments are x_s^{-1} (x) x_t."""

    times: np.ndarray
    level1: np.ndarray
    level2: np.ndarray
    level3: np.ndarray | None = None

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64).reshape(-1)
        c1 = np.array(self.level1, dtype=np.float64)
        n, d = c1.shape
        c2 = np.array(self.level2, dtype=np.float64).reshape(n, d, d)
        c3 = None
        if self.level3 is not None:
            c3 = np.array(self.level3, dtype=np.float64).reshape(n, d, d, d)
        if t.shape[0] != n:
            raise ValueError(f"{t.shape[0]} times but {n} points")
        if n >= 2 and np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        for arr in (t, c1, c2) + ((c3,) if c3 is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "level1", c1)
        object.__setattr__(self, "level2", c2)
        object.__setattr__(self, "level3", c3)

    @classmethod
    def from_components(cls, times, comps) -> "LiftedPath":
        return cls(times, *comps)

    @property
    def dim(self) -> int:
        return self.level1.shape[1]

    @property
    def level(self) -> int:
        return 2 if self.level3 is None else 3

    def __len__(self) -> int:
        return self.times.shape[0]

    def components(self) -> tuple:
        return (self.level1, self.level2, self.level3)

    def point(self, k: int) -> GroupElement:
        return GroupElement(
            self.level1[k], self.level2[k], None if self.level3 is None else self.level3[k]
        )

    def increment(self, s: int, t: int) -> GroupElement:
        """x_{s,t} between grid indices s and t."""
        a = tuple(None if c is None else c[s] for c in self.components())
        b = tuple(None if c is None else c[t] for c in self.components())
        return GroupElement.from_components(
            mul_components(inv_components(a, self.level), b, self.level)
        )

    def step_increments(self) -> tuple:
        """Increments x_{t_k, t_{k+1}} for all k, as component arrays of length N-1."""
        comps = self.components()
        a = tuple(None if c is None else c[:-1] for c in comps)
        b = tuple(None if c is None else c[1:] for c in comps)
        return mul_components(inv_components(a, self.level), b, self.level)

    def from_start(self) -> tuple:
        """Increments x_{0,t_k} for all k."""
        comps = self.components()
        a = tuple(None if c is None else c[:1] for c in comps)
        return mul_components(inv_components(a, self.level), comps, self.level)

    def first_level(self) -> PiecewiseLinearPath:
        """The projection onto R^d, as a piecewise-linear path on the same grid."""
        return PiecewiseLinearPath(self.times, self.level1)

    def push_forward(self, matrix) -> "LiftedPath":
        L = np.asarray(matrix, dtype=np.float64)
        return LiftedPath.from_components(self.times, push_components(self.components(), L))

    def truncate(self, level: int) -> "LiftedPath":
        _check_level(level)
        if level == 3 and self.level3 is None:
            raise ValueError("cannot raise the level of a stored path")
        return LiftedPath(self.times, self.level1, self.level2, self.level3 if level == 3 else None)

    def restrict(self, idx) -> "LiftedPath":
        idx = np.asarray(idx)
        return LiftedPath.from_components(
            self.times[idx], tuple(None if c is None else c[idx] for c in self.components())
        )


def dyadic_times(k: int) -> np.ndarray:
    return np.arange(2**k + 1) / 2.0**k


def linear_interpolant(samples: PiecewiseLinearPath, D) -> PiecewiseLinearPath:
    """D-linear approximation: agrees with ``samples`` on D, linear in between.

    Every point of D must be a sample time; values are never re-simulated.
    """
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 1 or D.shape[0] < 2 or np.any(np.diff(D) <= 0):
        raise ValueError("subdivision must be a strictly increasing array of >= 2 times")
    idx = _locate(samples.times, D)
    return PiecewiseLinearPath(D, samples.values[idx])


def signature_lift(x: PiecewiseLinearPath, level: int = 2) -> LiftedPath:
    """S(x) with S(x)_0 = exp(x_0): Chen product of the segment exponentials."""
    _check_level(level)
    _, c2, c3 = kernels.lift_points(x.values[0], np.diff(x.values, axis=0), level)
    # keep the samples verbatim so re-lifting the first level is bit-reproducible
    return LiftedPath(x.times, x.values, c2, c3)


def identity_path(times, dim: int, level: int = 2) -> LiftedPath:
    n = len(times)
    c3 = np.zeros((n, dim, dim, dim)) if level == 3 else None
    return LiftedPath(times, np.zeros((n, dim)), np.zeros((n, dim, dim)), c3)


def concat_oplus(x: PiecewiseLinearPath, y: PiecewiseLinearPath) -> PiecewiseLinearPath:
    """x (+) y in R^{d_x + d_y}, on the union of both grids."""
    grid = union_grid(x.times, y.times)
    return PiecewiseLinearPath(grid, np.hstack([x.at(grid), y.at(grid)]))


def s_prime_concat(x_n: PiecewiseLinearPath, y_ref: PiecewiseLinearPath, level: int = 2) -> LiftedPath:
    """S'(x_n, S(y_ref)) = S(x_n (+) y_ref)."""
    if x_n.dim != y_ref.dim:
        raise ValueError("S' needs paths of equal dimension")
    return signature_lift(concat_oplus(x_n, y_ref), level)


def _diagonal_matrix(d: int) -> np.ndarray:
    return np.vstack([np.eye(d), np.eye(d)])


def s_double_prime(y_ref, level: int | None = None) -> LiftedPath:
    """S''(y) over R^d + R^d.

    For a piecewise-linear path this is S(y (+) y).  For a lifted path it is the
    image of y under the diagonal embedding v -> (v, v), which keeps the stored
    higher levels (all four level-2 blocks equal y^2).
    """
    if isinstance(y_ref, PiecewiseLinearPath):
        return signature_lift(concat_oplus(y_ref, y_ref), 2 if level is None else level)
    if level is not None and level != y_ref.level:
        y_ref = y_ref.truncate(level)
    return y_ref.push_forward(_diagonal_matrix(y_ref.dim))


def _mixed_level2(x: PiecewiseLinearPath, y: LiftedPath, x_first: bool = True) -> LiftedPath:
    """Level-2 joint lift of a piecewise-linear x and a level-2 rough path y.

    Cross integrals use the trapezoidal rule on y's grid for the Riemann-Stieltjes
    part and integration by parts for the other, so the symmetric (shuffle) part
    of the cross blocks is exact.
    """
    if y.level != 2:
        raise NotImplementedError("the mixed lift is only defined for level-2 references")
    xv = x.on_grid(y.times).values
    dx = np.diff(xv, axis=0)
    d, e = x.dim, y.dim
    y1, y2, _ = y.from_start()
    x1 = xv - xv[0]
    # int_0^t x_{0,u} (x) dx_u, exact for piecewise-linear x
    xx_inc = x1[:-1, :, None] * dx[:, None, :] + 0.5 * dx[:, :, None] * dx[:, None, :]
    xx = np.concatenate([np.zeros((1, d, d)), np.cumsum(xx_inc, axis=0)])
    ymid = 0.5 * (y1[:-1] + y1[1:])
    yx = np.concatenate([np.zeros((1, e, d)), np.cumsum(ymid[:, :, None] * dx[:, None, :], axis=0)])
    dxy = np.concatenate([np.zeros((1, d, e)), np.cumsum(dx[:, :, None] * ymid[:, None, :], axis=0)])
    xy = x1[:, :, None] * y1[:, None, :] - dxy

    if x_first:
        z1 = np.hstack([x1, y1])
        z2 = np.concatenate(
            [np.concatenate([xx, xy], axis=2), np.concatenate([yx, y2], axis=2)], axis=1
        )
        base = np.concatenate([xv[0], y.level1[0]])
    else:
        z1 = np.hstack([y1, x1])
        z2 = np.concatenate(
            [np.concatenate([y2, yx], axis=2), np.concatenate([xy, xx], axis=2)], axis=1
        )
        base = np.concatenate([y.level1[0], xv[0]])
    pts = mul_components(exp_level1(base, 2), (z1, z2, None), 2)
    return LiftedPath.from_components(y.times, pts)


def s_prime_level2(x: PiecewiseLinearPath, y: LiftedPath) -> LiftedPath:
    """S'(x, y) for a level-2 rough path y: blocks (x,x), (x,y), (y,x), (y,y)."""
    if x.dim != y.dim:
        raise ValueError("S' needs paths of equal dimension")
    return _mixed_level2(x, y, x_first=True)


def joint_lift_level2(x: LiftedPath, y: PiecewiseLinearPath) -> LiftedPath:
    """Level-2 lift of x (+) y for a level-2 rough path x and a piecewise-linear y."""
    return _mixed_level2(y, x, x_first=False)


def translate(h: PiecewiseLinearPath, y: LiftedPath) -> LiftedPath:
    """T_{-h}(y) = Minus(S'(h, y)): the lift of y - h.

    With y^1 linear on y's grid the cross integrals of S'(h, y) are exact, so
    Minus(S'(h, y)) = S(y^1 - h) corrected by the area y^2 - S(y^1)^2.  That form
    is evaluated here because it cancels exactly when h = y^1.
    """
    if y.level != 2:
        raise NotImplementedError("translation is implemented at level 2")
    if h.dim != y.dim:
        raise ValueError("translation needs paths of equal dimension")
    y1 = y.first_level()
    area = y.from_start()[1] - signature_lift(y1).from_start()[1]
    z = PiecewiseLinearPath(y.times, y1.values - h.on_grid(y.times).values)
    z1, z2, _ = signature_lift(z).from_start()
    pts = mul_components(exp_level1(z.values[0], 2), (z1, z2 + area, None), 2)
    return LiftedPath.from_components(y.times, pts)


def pure_area_path(times) -> LiftedPath:
    """t -> exp(t [e1, e2]) in G^2(R^2): zero first level, pure area."""
    t = np.asarray(times, dtype=np.float64)
    bracket = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return LiftedPath(t, np.zeros((len(t), 2)), t[:, None, None] * bracket)


def area_loops(times, vertices: int = 4) -> PiecewiseLinearPath:
    """Closed polygonal loops in R^2, one per interval of ``times``.

    Each loop is a regular polygon traversed counter-clockwise and scaled so its
    enclosed area equals the interval length; sampled at ``times`` its lift
    coincides with :func:`pure_area_path`.
    """
    t = np.asarray(times, dtype=np.float64)
    if vertices < 3:
        raise ValueError("a loop needs at least 3 vertices")
    dt = np.diff(t)
    theta = 2 * np.pi * np.arange(vertices) / vertices
    unit = np.column_stack([np.cos(theta) - 1.0, np.sin(theta)])
    unit_area = 0.5 * vertices * np.sin(2 * np.pi / vertices)
    if vertices == 4:
        unit = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        unit_area = 1.0
    frac = np.arange(vertices) / vertices
    tt = (t[:-1, None] + dt[:, None] * frac[None, :]).reshape(-1)
    r = np.sqrt(dt / unit_area)
    vals = (r[:, None, None] * unit[None, :, :]).reshape(-1, 2)
    return PiecewiseLinearPath(np.append(tt, t[-1]), np.vstack([vals, np.zeros((1, 2))]))

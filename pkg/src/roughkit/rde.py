"""Differential equations driven by piecewise-linear paths and by level-2 rough paths."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .path import (
    LiftedPath,
    PiecewiseLinearPath,
    concat_oplus,
    dyadic_times,
    joint_lift_level2,
    linear_interpolant,
    signature_lift,
)

__all__ = [
    "SolverError",
    "VectorFieldSet",
    "RDESolution",
    "solve_ode",
    "solve_rde_level2",
    "stratonovich_compare",
    "constant_fields",
    "linear_fields",
    "linear_scalar",
    "linear_scalar_solution",
    "heisenberg_fields",
]

JACOBIAN_RTOL = 1e-5


class SolverError(ArithmeticError):
    """The numerical solution left the finite range."""


def _fd_jacobian(V: Callable, y: np.ndarray, n: int, d: int) -> np.ndarray:
    out = np.empty((n, d, n))
    for b in range(n):
        h = 1e-6 * max(1.0, abs(y[b]))
        e = np.zeros(n)
        e[b] = h
        out[:, :, b] = (np.asarray(V(y + e)) - np.asarray(V(y - e))) / (2 * h)
    return out


@dataclass(frozen=True, eq=False)
class VectorFieldSet:
    """Drift V0: R^n -> R^n and fields V: R^n -> R^{n x d} (columns V_1..V_d).

    ``DV(y)[a, i, b]`` is dV_i^a / dy_b.  When omitted it is replaced by central
    finite differences; when given it is checked against them on a few probe
    points.  Callables must be safe to call from several threads.
    """

    state_dim: int
    drive_dim: int
    V: Callable[[np.ndarray], np.ndarray]
    V0: Callable[[np.ndarray], np.ndarray] | None = None
    DV: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"

    def __post_init__(self):
        n, d = self.state_dim, self.drive_dim
        if n < 1 or d < 1:
            raise ValueError("dimensions must be positive")
        probes = np.random.default_rng(12345).uniform(-1.0, 1.0, size=(3, n))
        for y in probes:
            v = np.asarray(self.V(y), dtype=np.float64)
            if v.shape != (n, d):
                raise ValueError(f"V(y) has shape {v.shape}, expected {(n, d)}")
            if self.V0 is not None and np.asarray(self.V0(y)).shape != (n,):
                raise ValueError(f"V0(y) must have shape {(n,)}")
            if self.DV is not None:
                J = np.asarray(self.DV(y), dtype=np.float64)
                if J.shape != (n, d, n):
                    raise ValueError(f"DV(y) has shape {J.shape}, expected {(n, d, n)}")
                fd = _fd_jacobian(self.V, y, n, d)
                err = np.max(np.abs(J - fd)) / max(1.0, float(np.max(np.abs(fd))))
                if err > JACOBIAN_RTOL:
                    raise ValueError(f"DV disagrees with finite differences (relative error {err:.2e})")

    def drift(self, y: np.ndarray) -> np.ndarray:
        if self.V0 is None:
            return np.zeros(self.state_dim)
        return np.asarray(self.V0(y), dtype=np.float64)

    def fields(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.V(y), dtype=np.float64)

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        if self.DV is None:
            return _fd_jacobian(self.V, y, self.state_dim, self.drive_dim)
        return np.asarray(self.DV(y), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class RDESolution:
    y: PiecewiseLinearPath
    joint_lift: LiftedPath | None = None
    scheme: str = ""


def _check_y0(vf: VectorFieldSet, y0) -> np.ndarray:
    y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
    if y0.shape != (vf.state_dim,):
        raise ValueError(f"initial condition must have shape {(vf.state_dim,)}")
    return y0


def _blowup(t: float) -> SolverError:
    return SolverError(f"solution is not finite at t={t:.17g}")


def solve_ode(
    vf: VectorFieldSet,
    y0,
    x: PiecewiseLinearPath,
    substeps: int = 4,
    lift_level: int | None = None,
) -> RDESolution:
    """dy = V0(y)dt + V(y)dx along a piecewise-linear x by classical RK4.

    On each driver segment the equation is autonomous,
    dy/dr = V0(y)dt + V(y)dx for r in [0, 1], and is integrated with
    ``substeps`` RK4 steps.  With ``lift_level`` the joint lift S(x (+) y) is
    attached, y being taken linear between grid points.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if x.dim != vf.drive_dim:
        raise ValueError(f"driver has dimension {x.dim}, fields expect {vf.drive_dim}")
    y = _check_y0(vf, y0)
    n = len(x)
    out = np.empty((n, vf.state_dim))
    out[0] = y
    dts = np.diff(x.times)
    dxs = np.diff(x.values, axis=0)
    h = 1.0 / substeps
    for k in range(n - 1):
        dt, dx = dts[k], dxs[k]

        def f(z):
            return vf.drift(z) * dt + vf.fields(z) @ dx

        for _ in range(substeps):
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise _blowup(x.times[k + 1])
        out[k + 1] = y
    sol = PiecewiseLinearPath(x.times, out)
    lift = None
    if lift_level is not None:
        lift = signature_lift(concat_oplus(x, sol), lift_level)
    return RDESolution(sol, lift, "rk4")


def solve_rde_level2(vf: VectorFieldSet, y0, x: LiftedPath, with_lift: bool = True) -> RDESolution:
    """Second-order step on each grid interval of a level-2 rough path x.

    y_{k+1} = y_k + V0(y_k)dt + V(y_k) x^1 + sum_{i,j} DV_j(y_k)[V_i(y_k)] x^2[i, j]
    with (x^1, x^2) the increment of x over the interval.
    """
    if x.level != 2:
        raise ValueError("solve_rde_level2 needs a level-2 path")
    if x.dim != vf.drive_dim:
        raise ValueError(f"driver has dimension {x.dim}, fields expect {vf.drive_dim}")
    y = _check_y0(vf, y0)
    inc1, inc2, _ = x.step_increments()
    dts = np.diff(x.times)
    n = len(x)
    out = np.empty((n, vf.state_dim))
    out[0] = y
    for k in range(n - 1):
        V = vf.fields(y)
        J = vf.jacobian(y)
        y = y + vf.drift(y) * dts[k] + V @ inc1[k] + np.einsum("ajb,bi,ij->a", J, V, inc2[k])
        if not np.all(np.isfinite(y)):
            raise _blowup(x.times[k + 1])
        out[k + 1] = y
    sol = PiecewiseLinearPath(x.times, out)
    lift = joint_lift_level2(x, sol) if with_lift else None
    return RDESolution(sol, lift, "level2")


def stratonovich_compare(
    vf: VectorFieldSet,
    y0,
    samples: PiecewiseLinearPath,
    levels,
    p: float | None = None,
    substeps: int = 1,
    reference: PiecewiseLinearPath | None = None,
) -> np.ndarray:
    """Distance between solutions along dyadic interpolants and the fine-grid solution.

    For each level k the driver is interpolated on the dyadic grid of step 2^-k,
    solved on the full sample grid (so the solution is resolved between coarse
    points) and compared with ``reference`` (by default the solution along
    ``samples``).  Without ``p`` the uniform distance on the sample grid is
    returned; with ``p`` the Hoelder distance of the level-2 joint lifts.
    """
    from .metrics import holder_distance

    if reference is None:
        reference = solve_ode(vf, y0, samples, substeps).y
    ref_lift = signature_lift(concat_oplus(samples, reference), 2) if p is not None else None
    out = []
    for k in levels:
        xk = linear_interpolant(samples, dyadic_times(int(k))).refine(samples.times)
        yk = solve_ode(vf, y0, xk, substeps).y
        if p is None:
            out.append(float(np.max(np.abs(yk.values - reference.values))))
        else:
            lk = signature_lift(concat_oplus(xk, yk), 2)
            out.append(holder_distance(lk, ref_lift, p, pairs="auto").distance)
    return np.array(out)


# ---------------------------------------------------------------------------
# Built-in vector fields


def constant_fields(n: int, d: int, C=None) -> VectorFieldSet:
    C = np.eye(n, d) if C is None else np.asarray(C, dtype=np.float64)
    zero = np.zeros((n, d, n))
    return VectorFieldSet(n, d, lambda y: C, None, lambda y: zero, name="constant")


def linear_fields(A, A0=None) -> VectorFieldSet:
    """V_i(y) = A[i] y, optional drift V0(y) = A0 y."""
    A = np.asarray(A, dtype=np.float64)
    d, n, _ = A.shape
    J = np.transpose(A, (1, 0, 2)).copy()
    drift = None if A0 is None else (lambda y, B=np.asarray(A0, dtype=np.float64): B @ y)
    return VectorFieldSet(
        n, d, lambda y: np.einsum("iab,b->ai", A, y), drift, lambda y: J, name="linear"
    )


def linear_scalar(a: float, b: float) -> VectorFieldSet:
    """dy = a y dt + b y dx, solved by y0 exp(a t + b (x_t - x_0)) for any path x."""
    fs = linear_fields([[[b]]], [[a]])
    return VectorFieldSet(1, 1, fs.V, fs.V0, fs.DV, name=f"linear_scalar(a={a},b={b})")


def heisenberg_fields() -> VectorFieldSet:
    """V_1 = (1, 0), V_2 = (0, y_1): [V_1, V_2] = (0, 1), so the area of x moves y_2."""

    def V(y):
        return np.array([[1.0, 0.0], [0.0, y[0]]])

    def DV(y):
        J = np.zeros((2, 2, 2))
        J[1, 1, 0] = 1.0
        return J

    return VectorFieldSet(2, 2, V, None, DV, name="heisenberg")


def linear_scalar_solution(a: float, b: float) -> Callable[[np.ndarray, PiecewiseLinearPath], np.ndarray]:
    """Closed form y0 exp(a t + b (x_t - x_0)) of :func:`linear_scalar` on the grid of x."""

    def sol(y0, x: PiecewiseLinearPath) -> np.ndarray:
        y0 = np.atleast_1d(np.asarray(y0, dtype=np.float64))
        return y0[0] * np.exp(a * x.times + b * (x.values[:, 0] - x.values[0, 0]))[:, None]

    return sol

"""Brownian and fractional Brownian drivers and the exact Gaussian machinery around them."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .path import PiecewiseLinearPath

__all__ = [
    "RngSpec",
    "ConvergenceError",
    "fbm_covariance",
    "increment_covariance",
    "increment_covariance_matrix",
    "sample_bm",
    "sample_fbm",
    "gamma",
    "rgamma",
    "hyp2f1",
    "hyp2f1_series",
    "kernel_K",
    "kernel_dt",
    "kernel_covariance",
    "wick_fourth_moment",
    "finallemma_check",
    "increasing_violations",
]


class ConvergenceError(ArithmeticError):
    """A series or iteration did not converge."""


@dataclass(frozen=True)
class RngSpec:
    """(seed, stream) pins every random number drawn from :meth:`generator`."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64) or int(self.stream) < 0:
            raise ValueError("seed must be a 64-bit unsigned integer and stream >= 0")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def header(self) -> str:
        return f"seed={self.seed},stream={self.stream}"


def _check_hurst(H: float) -> None:
    if not 0.0 < H < 1.0:
        raise ValueError(f"Hurst parameter must lie in (0, 1), got {H}")


def fbm_covariance(s, t, H: float):
    """E(W_H(s) W_H(t)) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2."""
    _check_hurst(H)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    out = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(out) if out.ndim == 0 else out


def increment_covariance(s, t, s2, t2, H: float):
    """E(W(s,t) W(s2,t2)) for increments over [s,t] and [s2,t2]."""
    _check_hurst(H)
    s, t, s2, t2 = (np.asarray(a, dtype=np.float64) for a in (s, t, s2, t2))
    h2 = 2 * H
    out = 0.5 * (
        np.abs(t - s2) ** h2 + np.abs(s - t2) ** h2 - np.abs(s - s2) ** h2 - np.abs(t - t2) ** h2
    )
    return float(out) if out.ndim == 0 else out


def increment_covariance_matrix(grid, H: float) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    a, b = g[:-1], g[1:]
    return increment_covariance(a[:, None], b[:, None], a[None, :], b[None, :], H)


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 1 or len(g) < 2 or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    if g[0] != 0.0 or g[-1] > 1.0:
        raise ValueError("grid must start at 0 and stay within [0, 1]")
    return g


def sample_bm(grid, d: int, rng: RngSpec) -> PiecewiseLinearPath:
    """d independent Brownian components sampled exactly on ``grid``."""
    g = _check_grid(grid)
    z = rng.generator().standard_normal((len(g) - 1, d))
    inc = np.sqrt(np.diff(g))[:, None] * z
    return PiecewiseLinearPath(g, np.vstack([np.zeros((1, d)), np.cumsum(inc, axis=0)]))


@lru_cache(maxsize=8)
def _cholesky_factor(grid_key: tuple, H: float) -> np.ndarray:
    return np.linalg.cholesky(increment_covariance_matrix(np.array(grid_key), H))


def _fgn_eigenvalues(n: int, H: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=np.float64)
    h2 = 2 * H
    gam = 0.5 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2 * k**h2)
    row = np.concatenate([gam, gam[-2:0:-1]])
    return np.fft.fft(row).real


def sample_fbm(grid, d: int, H: float, rng: RngSpec, method: str = "cholesky") -> PiecewiseLinearPath:
    """Fractional Brownian motion on ``grid`` with the exact finite-dimensional law.

    ``method="davies_harte"`` uses circulant embedding (uniform grids only) and
    falls back to Cholesky when the embedding is not nonnegative definite.
    """
    _check_hurst(H)
    g = _check_grid(grid)
    n = len(g) - 1
    gen = rng.generator()
    if method == "davies_harte":
        steps = np.diff(g)
        if not np.allclose(steps, steps[0], rtol=1e-10, atol=0.0):
            raise ValueError("davies_harte needs a uniform grid")
        lam = _fgn_eigenvalues(n, H)
        if lam.min() >= -1e-12 * lam.max():
            lam = np.clip(lam, 0.0, None)
            m = 2 * n
            xi = gen.standard_normal((m, d)) + 1j * gen.standard_normal((m, d))
            y = np.fft.fft(np.sqrt(lam / m)[:, None] * xi, axis=0)
            inc = y[:n].real * steps[0] ** H
            return PiecewiseLinearPath(g, np.vstack([np.zeros((1, d)), np.cumsum(inc, axis=0)]))
        method = "cholesky"
    if method != "cholesky":
        raise ValueError(f"unknown fBm method {method!r}")
    L = _cholesky_factor(tuple(g.tolist()), float(H))
    inc = L @ gen.standard_normal((n, d))
    return PiecewiseLinearPath(g, np.vstack([np.zeros((1, d)), np.cumsum(inc, axis=0)]))


# ---------------------------------------------------------------------------
# Special functions

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def _is_nonpositive_int(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def gamma(x: float) -> float:
    """Gamma function by the Lanczos approximation (g = 7, 9 terms) with reflection."""
    x = float(x)
    if _is_nonpositive_int(x):
        raise ValueError(f"gamma has a pole at {x}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    x -= 1.0
    acc = _LANCZOS[0]
    for k in range(1, len(_LANCZOS)):
        acc += _LANCZOS[k] / (x + k)
    t = x + _LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * t ** (x + 0.5) * math.exp(-t) * acc


def rgamma(x: float) -> float:
    """1 / gamma(x), zero at the poles."""
    if _is_nonpositive_int(float(x)):
        return 0.0
    return 1.0 / gamma(x)


def hyp2f1_series(a: float, b: float, c: float, z: float, max_terms: int = 100000) -> float:
    """Direct Gauss series; converges for |z| < 1."""
    total, term = 1.0, 1.0
    small = 0
    # the term ratio tends to z, so the tail is about |term| |z| / (1 - |z|)
    tail = abs(z) / (1.0 - abs(z)) if abs(z) < 1.0 else math.inf
    for k in range(max_terms):
        term *= (a + k) * (b + k) / ((c + k) * (k + 1.0)) * z
        total += term
        if term == 0.0:
            return total
        if abs(term) * max(tail, 1.0) <= 1e-17 * abs(total):
            small += 1
            if small >= 2:
                return total
        else:
            small = 0
    raise ConvergenceError(
        f"2F1 series did not converge: a={a}, b={b}, c={c}, z={z}, "
        f"terms={max_terms}, last term={term:.3e}, partial sum={total:.17g}"
    )


def hyp2f1(a: float, b: float, c: float, z: float) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; z) for real z <= 1.

    Series for |z| <= 1/2, the Pfaff transformation for z < -1/2 and the
    z -> 1 - z connection formula on (1/2, 1).
    """
    a, b, c, z = float(a), float(b), float(c), float(z)
    if _is_nonpositive_int(c):
        raise ValueError("c must not be a nonpositive integer")
    if z > 1.0:
        raise ValueError("hyp2f1 is only implemented for z <= 1")
    if a == 0.0 or b == 0.0 or z == 0.0:
        return 1.0
    if z == 1.0:
        if c - a - b <= 0:
            raise ValueError("2F1 diverges at z = 1 unless c - a - b > 0")
        return gamma(c) * gamma(c - a - b) * rgamma(c - a) * rgamma(c - b)
    if abs(z) <= 0.5:
        return hyp2f1_series(a, b, c, z)
    if z < 0.0:
        w = z / (z - 1.0)
        return (1.0 - z) ** (-a) * hyp2f1(a, c - b, c, w)
    s = c - a - b
    if abs(s - round(s)) < 1e-9:
        return hyp2f1_series(a, b, c, z)
    w = 1.0 - z
    first = gamma(c) * gamma(s) * rgamma(c - a) * rgamma(c - b)
    second = gamma(c) * gamma(-s) * rgamma(a) * rgamma(b)
    out = first * hyp2f1_series(a, b, 1.0 - s, w)
    if second != 0.0:
        out += second * w**s * hyp2f1_series(c - a, c - b, 1.0 + s, w)
    return out


def _kernel_scale(H: float) -> float:
    # 1 / sqrt(V_H): makes int_0^{s^t} K(t,u) K(s,u) du equal the fBm covariance
    if H == 0.5:
        return 1.0
    v = gamma(2 - 2 * H) * math.cos(math.pi * H) / (math.pi * H * (1 - 2 * H))
    return 1.0 / math.sqrt(v)


def _check_kernel_args(t: float, s: float, H: float) -> None:
    _check_hurst(H)
    if not (0.0 < s < t):
        raise ValueError(f"kernel needs 0 < s < t, got s={s}, t={t}")


def kernel_K(t: float, s: float, H: float) -> float:
    """Volterra kernel with W_H(t) = int_0^t K(t, s) dB_s."""
    _check_kernel_args(t, s, H)
    raw = (t - s) ** (H - 0.5) * rgamma(H + 0.5) * hyp2f1(H - 0.5, 0.5 - H, H + 0.5, 1.0 - t / s)
    return raw * _kernel_scale(H)


def kernel_dt(t: float, s: float, H: float) -> float:
    """Partial derivative of :func:`kernel_K` in its first argument."""
    _check_kernel_args(t, s, H)
    return (t / s) ** (H - 0.5) * (t - s) ** (H - 1.5) * rgamma(H - 0.5) * _kernel_scale(H)


def kernel_covariance(s: float, t: float, H: float) -> float:
    """int_0^{min(s,t)} K(t,u) K(s,u) du by adaptive quadrature (endpoint singularities)."""
    lo = min(s, t)
    hi = max(s, t)
    if lo == hi:
        f = lambda u: kernel_K(hi, u, H) ** 2
        val, _ = integrate.quad(f, 0.0, lo, limit=400, epsabs=1e-10, epsrel=1e-10)
        return val
    f = lambda u: kernel_K(hi, u, H) * kernel_K(lo, u, H)
    val, _ = integrate.quad(f, 0.0, lo, limit=400, epsabs=1e-10, epsrel=1e-10)
    return val


def wick_fourth_moment(c12, c13, c14, c23, c24, c34):
    """E(X1 X2 X3 X4) for centred jointly Gaussian variables from their covariances."""
    return c12 * c34 + c13 * c24 + c14 * c23


def finallemma_check(D, H: float, p_prime: float) -> tuple[float, float]:
    """Exact covariance sum for a subdivision and the bound's shape.

    Returns (lhs, rhs_shape) with
    lhs = sum_{k,l} ||dW_k||_2 ||dW_l||_2 |E(dW_k dW_l)|,
    rhs_shape = (t_n - t_m)^{4/p'} |D|^{4H - 4/p'}.
    """
    if not 0.25 < H <= 0.5:
        raise ValueError("H must lie in (1/4, 1/2]")
    if p_prime <= 1.0 / H:
        raise ValueError("p' must exceed 1/H")
    eps = 4.0 / p_prime - 1.0
    if not 0.0 < eps < 2 * H:
        raise ValueError("need 0 < 4/p' - 1 < 2H")
    D = np.asarray(D, dtype=np.float64)
    if len(D) < 2 or np.any(np.diff(D) <= 0):
        raise ValueError("subdivision must be strictly increasing")
    C = increment_covariance_matrix(D, H)
    sd = np.sqrt(np.diag(C))
    lhs = float(np.sum(sd[:, None] * sd[None, :] * np.abs(C)))
    mesh = float(np.max(np.diff(D)))
    rhs = (D[-1] - D[0]) ** (4.0 / p_prime) * mesh ** (4 * H - 4.0 / p_prime)
    return lhs, float(rhs)


def increasing_violations(H: float, n: int = 20, tol: float = 1e-14) -> dict[str, int]:
    """Count violations of the interval-monotonicity inequalities on an n x n lattice.

    Nested chain, for u < v in [s, t] = [1/2, 1]:
    ``nested_lower``  0 <= E(W(s,u)W(s,v)),
    ``nested_middle`` E(W(s,u)W(s,v)) <= E(W(s,u)W(s,t)),
    ``nested_upper``  E(W(s,u)W(s,t)) <= E(W(s,t)^2).
    Disjoint chain, for [u', v'] in [0, 1/2] and [u, v] in [1/2, 1] (only for H <= 1/2):
    ``disjoint_lower`` 0 <= -E(W(u',v')W(u,v)),
    ``disjoint_upper`` -E(W(u',v')W(u,v)) <= -E(W(0,1/2)W(1/2,1)).
    """
    _check_hurst(H)
    s, t = 0.5, 1.0
    lat = s + (t - s) * np.arange(1, n + 1) / n
    u, v = np.meshgrid(lat, lat, indexing="ij")
    m = u < v
    u, v = u[m], v[m]
    e_uv = increment_covariance(s, u, s, v, H)
    e_ut = increment_covariance(s, u, s, t, H)
    e_tt = increment_covariance(s, t, s, t, H)
    out = {
        "nested_lower": int(np.sum(e_uv < -tol)),
        "nested_middle": int(np.sum(e_uv > e_ut + tol)),
        "nested_upper": int(np.sum(e_ut > e_tt + tol)),
    }
    if H <= 0.5:
        left = 0.5 * np.arange(0, n + 1) / n
        right = 0.5 + 0.5 * np.arange(0, n + 1) / n
        a, b = np.meshgrid(left, left, indexing="ij")
        c, e = np.meshgrid(right, right, indexing="ij")
        ab = a < b
        ce = c < e
        neg = -increment_covariance(
            a[ab][:, None], b[ab][:, None], c[ce][None, :], e[ce][None, :], H
        )
        outer = -increment_covariance(0.0, 0.5, 0.5, 1.0, H)
        out["disjoint_lower"] = int(np.sum(neg < -tol))
        out["disjoint_upper"] = int(np.sum(neg > outer + tol))
    return out

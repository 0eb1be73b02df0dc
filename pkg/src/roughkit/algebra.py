"""Truncated tensor algebra T^n(R^d) and the free nilpotent group G^n(R^d), n in {2, 3}.

Elements are stored as dense component arrays, one per tensor level.  The
batched helpers at the bottom (``mul_components`` and friends) work on stacks
of elements with arbitrary leading dimensions and are shared by the path and
metric modules.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

__all__ = [
    "TruncatedTensor",
    "GroupElement",
    "identity",
    "tensor_multiply",
    "exp_trunc",
    "log_trunc",
    "group_inverse",
    "dilate",
    "homogeneous_norm",
    "group_distance",
    "shuffle_defect",
    "minus_map",
    "push_forward",
    "GEOMETRIC_TOL",
]

GEOMETRIC_TOL = 1e-10
LEVELS = (2, 3)


def _check_level(level: int) -> None:
    if level not in LEVELS:
        raise ValueError(f"level must be 2 or 3, got {level}")


@dataclass(frozen=True, eq=False)
class TruncatedTensor:
    """Element (c0, c1, c2[, c3]) of the truncated tensor algebra."""

    comp0: float
    comp1: np.ndarray
    comp2: np.ndarray
    comp3: np.ndarray | None = None

    def __post_init__(self) -> None:
        c1 = np.array(self.comp1, dtype=np.float64).reshape(-1)
        d = c1.shape[0]
        if d < 1:
            raise ValueError("dimension must be >= 1")
        c2 = np.array(self.comp2, dtype=np.float64).reshape(d, d)
        c3 = None
        if self.comp3 is not None:
            c3 = np.array(self.comp3, dtype=np.float64).reshape(d, d, d)
        for arr in (c1, c2) + ((c3,) if c3 is not None else ()):
            if not np.all(np.isfinite(arr)):
                raise ValueError("tensor components must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "comp0", float(self.comp0))
        object.__setattr__(self, "comp1", c1)
        object.__setattr__(self, "comp2", c2)
        object.__setattr__(self, "comp3", c3)

    @property
    def dim(self) -> int:
        return self.comp1.shape[0]

    @property
    def level(self) -> int:
        return 2 if self.comp3 is None else 3

    def components(self) -> tuple:
        """Levels 1..n as a tuple (used by the batched helpers)."""
        return (self.comp1, self.comp2, self.comp3)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dim={self.dim}, level={self.level}, comp1={self.comp1.tolist()})"


class GroupElement(TruncatedTensor):
    """Element of G^n(R^d); scalar component is exactly 1."""

    def __init__(self, comp1, comp2, comp3=None):
        super().__init__(1.0, comp1, comp2, comp3)

    @classmethod
    def from_components(cls, comps) -> "GroupElement":
        c1, c2, c3 = comps
        return cls(c1, c2, c3)


def identity(dim: int, level: int = 2) -> GroupElement:
    _check_level(level)
    c3 = np.zeros((dim,) * 3) if level == 3 else None
    return GroupElement(np.zeros(dim), np.zeros((dim, dim)), c3)


def _check_pair(a: TruncatedTensor, b: TruncatedTensor) -> None:
    if a.dim != b.dim or a.level != b.level:
        raise ValueError(
            f"dimension/level mismatch: ({a.dim}, {a.level}) vs ({b.dim}, {b.level})"
        )


def tensor_multiply(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Graded product in T^n(R^d); terms above level n are dropped."""
    _check_pair(a, b)
    a0, b0 = a.comp0, b.comp0
    c1 = a0 * b.comp1 + b0 * a.comp1
    c2 = a0 * b.comp2 + b0 * a.comp2 + np.multiply.outer(a.comp1, b.comp1)
    c3 = None
    if a.level == 3:
        c3 = (
            a0 * b.comp3
            + b0 * a.comp3
            + np.multiply.outer(a.comp2, b.comp1)
            + np.multiply.outer(a.comp1, b.comp2)
        )
    if a0 == 1.0 and b0 == 1.0:
        return GroupElement(c1, c2, c3)
    return TruncatedTensor(a0 * b0, c1, c2, c3)


def exp_trunc(x: TruncatedTensor) -> GroupElement:
    """Truncated exponential of an element with zero scalar part."""
    if x.comp0 != 0.0:
        raise ValueError("exp_trunc needs a zero scalar component")
    return GroupElement.from_components(exp_components(x.components(), x.level))


def log_trunc(g: TruncatedTensor) -> TruncatedTensor:
    """Truncated logarithm of an element with unit scalar part."""
    if g.comp0 != 1.0:
        raise ValueError("log_trunc needs a unit scalar component")
    x1, x2, x3 = g.components()
    # log(1 + X) = X - X^2/2 + X^3/3
    l2 = x2 - 0.5 * np.multiply.outer(x1, x1)
    l3 = None
    if g.level == 3:
        l3 = (
            x3
            - 0.5 * (np.multiply.outer(x1, x2) + np.multiply.outer(x2, x1))
            + np.einsum("i,j,k->ijk", x1, x1, x1) / 3.0
        )
    return TruncatedTensor(0.0, x1, l2, l3)


def group_inverse(g: GroupElement) -> GroupElement:
    if g.comp0 != 1.0:
        raise ValueError("group_inverse needs a unit scalar component")
    return GroupElement.from_components(inv_components(g.components(), g.level))


def dilate(g: GroupElement, lam: float) -> GroupElement:
    c3 = None if g.comp3 is None else lam**3 * g.comp3
    return GroupElement(lam * g.comp1, lam**2 * g.comp2, c3)


def homogeneous_norm(g: GroupElement) -> float:
    """max_i (i! |g_i|)^(1/i) with Frobenius norms on each level."""
    return float(norm_components(g.components(), g.level))


def group_distance(g: GroupElement, h: GroupElement) -> float:
    """||g^{-1} (x) h||, exactly 0 when g == h."""
    _check_pair(g, h)
    return float(diff_norm_components(g.components(), h.components(), g.level))


def shuffle_defect(g: TruncatedTensor) -> float:
    """Largest violation of the shuffle relations through level n.

    Zero (to round-off) exactly for elements of G^n(R^d).
    """
    x1, x2, x3 = g.components()
    defect = np.abs(0.5 * (x2 + x2.T) - 0.5 * np.multiply.outer(x1, x1)).max()
    if g.level == 3:
        # x1[i] x2[j,k] = x3[i,j,k] + x3[j,i,k] + x3[j,k,i]
        lhs = np.multiply.outer(x1, x2)
        rhs = x3 + np.einsum("jik->ijk", x3) + np.einsum("jki->ijk", x3)
        defect = max(defect, np.abs(lhs - rhs).max())
    return float(defect)


def push_forward(g: TruncatedTensor, matrix) -> TruncatedTensor:
    """Image of g under the algebra morphism induced by a linear map R^d -> R^m."""
    L = np.asarray(matrix, dtype=np.float64)
    if L.shape[1] != g.dim:
        raise ValueError(f"matrix has {L.shape[1]} columns, element has dim {g.dim}")
    comps = push_components(g.components(), L)
    if g.comp0 == 1.0:
        return GroupElement.from_components(comps)
    return TruncatedTensor(g.comp0, *comps)


def minus_matrix(d: int) -> np.ndarray:
    """The linear map (x, y) -> y - x on R^d + R^d."""
    return np.hstack([-np.eye(d), np.eye(d)])


def minus_map(z: GroupElement) -> GroupElement:
    """Level-2 element over R^d + R^d mapped to the lift of the difference y - x."""
    if z.level != 2:
        raise NotImplementedError("minus_map is only defined at level 2")
    if z.dim % 2:
        raise NotImplementedError("minus_map needs an even dimension (R^d + R^d)")
    d = z.dim // 2
    z1, z2 = z.comp1, z.comp2
    m1 = z1[d:] - z1[:d]
    m2 = z2[d:, d:] - z2[:d, d:] - z2[d:, :d] + z2[:d, :d]
    return GroupElement(m1, m2)


# ---------------------------------------------------------------------------
# Batched component arithmetic.  ``comps`` is a tuple (c1, c2, c3) where c1 has
# shape (..., d), c2 (..., d, d) and c3 (..., d, d, d) or None.


def _outer12(a1: np.ndarray, b2: np.ndarray) -> np.ndarray:
    return a1[..., :, None, None] * b2[..., None, :, :]


def _outer21(a2: np.ndarray, b1: np.ndarray) -> np.ndarray:
    return a2[..., :, :, None] * b1[..., None, None, :]


def mul_components(a, b, level: int):
    a1, a2, a3 = a
    b1, b2, b3 = b
    c1 = a1 + b1
    c2 = a2 + b2 + a1[..., :, None] * b1[..., None, :]
    c3 = None
    if level == 3:
        c3 = a3 + b3 + _outer21(a2, b1) + _outer12(a1, b2)
    return c1, c2, c3


def inv_components(g, level: int):
    g1, g2, g3 = g
    o11 = g1[..., :, None] * g1[..., None, :]
    c3 = None
    if level == 3:
        c3 = (
            -g3
            + _outer12(g1, g2)
            + _outer21(g2, g1)
            - _outer21(o11, g1)
        )
    return -g1, o11 - g2, c3


def exp_components(x, level: int):
    x1, x2, x3 = x
    # X = (0, x1, x2, x3); exp = 1 + X + X^2/2 + X^3/6
    o11 = x1[..., :, None] * x1[..., None, :]
    c2 = x2 + 0.5 * o11
    c3 = None
    if level == 3:
        c3 = (
            (x3 if x3 is not None else 0.0)
            + 0.5 * (_outer12(x1, x2) + _outer21(x2, x1))
            + _outer21(o11, x1) / 6.0
        )
    return x1, c2, c3


def exp_level1(v: np.ndarray, level: int):
    """exp of a batch of pure level-1 elements, v with shape (..., d)."""
    o11 = v[..., :, None] * v[..., None, :]
    c3 = _outer21(o11, v) / 6.0 if level == 3 else None
    return v, 0.5 * o11, c3


def norm_components(g, level: int) -> np.ndarray:
    g1, g2, g3 = g
    n1 = np.sqrt(np.einsum("...i,...i->...", g1, g1))
    n2 = np.sqrt(2.0 * np.sqrt(np.einsum("...ij,...ij->...", g2, g2)))
    out = np.maximum(n1, n2)
    if level == 3:
        n3 = np.cbrt(float(factorial(3)) * np.sqrt(np.einsum("...ijk,...ijk->...", g3, g3)))
        out = np.maximum(out, n3)
    return out


def diff_norm_components(a, b, level: int) -> np.ndarray:
    """||a^{-1} (x) b|| written in terms of b - a, so equal inputs give exactly 0."""
    e1 = b[0] - a[0]
    e2 = b[1] - a[1]
    c3 = None
    if level == 3:
        sq = a[1] - a[0][..., :, None] * a[0][..., None, :]
        c3 = (b[2] - a[2]) - _outer12(a[0], e2) - _outer21(sq, e1)
    c2 = e2 - a[0][..., :, None] * e1[..., None, :]
    return norm_components((e1, c2, c3), level)


def push_components(g, L: np.ndarray):
    g1, g2, g3 = g
    c1 = np.einsum("ai,...i->...a", L, g1)
    c2 = np.einsum("ai,bj,...ij->...ab", L, L, g2)
    c3 = None if g3 is None else np.einsum("ai,bj,ck,...ijk->...abc", L, L, L, g3)
    return c1, c2, c3

"""Linearized (q-)polynomials f(z) = sum_i f_i z^(q^i) over GF(q^s)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ff import GF


@dataclass(frozen=True)
class LinearizedPoly:
    """Dense coefficient list; ``coeffs[i]`` multiplies z^(q^i).

    Trailing zeros are trimmed, so the zero polynomial has ``coeffs == ()``
    and q-degree -1.
    """

    field: GF
    coeffs: tuple[int, ...]

    def __post_init__(self):
        c = [int(x) for x in self.coeffs]
        while c and c[-1] == 0:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def qdegree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, x):
        return lp_eval(self, x)

    def __add__(self, other: "LinearizedPoly") -> "LinearizedPoly":
        return lp_add(self, other)

    def __matmul__(self, other: "LinearizedPoly") -> "LinearizedPoly":
        return lp_compose(self, other)

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(length, dtype=np.int64)
        out[: len(self.coeffs)] = self.coeffs
        return out


def lp_zero(field: GF) -> LinearizedPoly:
    return LinearizedPoly(field, ())


def lp_monomial(c: int, e: int, field: GF) -> LinearizedPoly:
    """c * z^(q^e)."""
    if e < 0:
        raise ValueError("q-degree must be non-negative")
    return LinearizedPoly(field, (0,) * e + (int(c),))


def lp_eval(f: LinearizedPoly, x):
    """Evaluate at a scalar or elementwise over an array of points."""
    F = f.field
    x = F.arr(x)
    acc = np.zeros_like(x)
    for i, c in enumerate(f.coeffs):
        if c:
            acc = F.add(acc, F.mul(c, F.frobenius(x, i)))
    return acc


def lp_add(f: LinearizedPoly, g: LinearizedPoly) -> LinearizedPoly:
    F = f.field
    n = max(len(f.coeffs), len(g.coeffs))
    return LinearizedPoly(F, tuple(F.add(f.padded(n), g.padded(n)).tolist()))


def lp_scale(c: int, f: LinearizedPoly) -> LinearizedPoly:
    F = f.field
    return LinearizedPoly(F, tuple(F.mul(c, f.padded(len(f.coeffs))).tolist()))


def lp_compose(f: LinearizedPoly, g: LinearizedPoly) -> LinearizedPoly:
    """h = f(g(z)), with h_k = sum_{i+j=k} f_i * g_j^(q^i)."""
    F = f.field
    if not f.coeffs or not g.coeffs:
        return lp_zero(F)
    h = np.zeros(len(f.coeffs) + len(g.coeffs) - 1, dtype=np.int64)
    gc = np.array(g.coeffs, dtype=np.int64)
    for i, fi in enumerate(f.coeffs):
        if fi:
            twisted = F.mul(fi, F.frobenius(gc, i))
            h[i : i + len(gc)] = F.add(h[i : i + len(gc)], twisted)
    return LinearizedPoly(F, tuple(h.tolist()))

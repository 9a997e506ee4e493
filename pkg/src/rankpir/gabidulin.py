"""Gabidulin codes: Moore-matrix encoding, star products and decoding.

Erasures are coordinate erasures (known positions).  They are handled by
puncturing, which leaves a Gabidulin code on the surviving points; errors
of rank up to ``eps_max`` on the punctured code are removed with a
Welch-Berlekamp style key equation for linearized polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .ff import GF, InconsistentSystem
from .linpoly import LinearizedPoly


class DecodingFailure(RuntimeError):
    """No codeword is consistent with the received word within the budget."""


@dataclass(frozen=True)
class GabidulinCode:
    field: GF
    n: int
    k: int
    points: tuple[int, ...]

    def __post_init__(self):
        pts = tuple(int(a) for a in self.points)
        object.__setattr__(self, "points", pts)
        F = self.field
        if len(pts) != self.n:
            raise ValueError(f"expected {self.n} evaluation points, got {len(pts)}")
        if self.n > F.s:
            raise ValueError(f"length n={self.n} exceeds extension degree s={F.s}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"dimension k={self.k} outside [1, {self.n}]")
        if F.rank_base(np.array([pts])) != self.n:
            raise ValueError("evaluation points are not linearly independent over GF(q)")

    @classmethod
    def default(cls, field: GF, n: int, k: int) -> "GabidulinCode":
        """Points 1, alpha, ..., alpha^(n-1)."""
        return _default_code(field, n, k)

    @property
    def d(self) -> int:
        return self.n - self.k + 1

    def with_dimension(self, k: int) -> "GabidulinCode":
        return GabidulinCode(self.field, self.n, k, self.points)

    def generator_matrix(self) -> np.ndarray:
        return self._generator.copy()

    @cached_property
    def _generator(self) -> np.ndarray:
        return moore_matrix(self.field, self.points, self.k)

    def encode(self, message) -> np.ndarray:
        """Row vector (or stack of rows) times the generator matrix."""
        m = self.field.arr(message)
        rows = m[None, :] if m.ndim == 1 else m
        if rows.shape[1] != self.k:
            raise ValueError(f"message length {rows.shape[1]} != k={self.k}")
        out = self.field.matmul(rows, self._generator)
        return out[0] if m.ndim == 1 else out

    def polynomial(self, message) -> LinearizedPoly:
        return LinearizedPoly(self.field, tuple(int(x) for x in message))

    def message_of(self, word, coords: Sequence[int] | None = None) -> np.ndarray:
        """Recover the message from the coordinates ``coords`` of a codeword.

        Raises :class:`InconsistentSystem` if no codeword matches there.
        """
        F = self.field
        word = F.arr(word)
        coords = list(range(self.n)) if coords is None else list(coords)
        if len(coords) < self.k:
            raise ValueError(f"need at least k={self.k} coordinates, got {len(coords)}")
        G = self._generator[:, coords]
        return F.solve_linear(G.T, word[coords]).x

    def contains(self, word) -> bool:
        try:
            self.message_of(word)
        except InconsistentSystem:
            return False
        return True


@lru_cache(maxsize=256)
def _default_code(field: GF, n: int, k: int) -> GabidulinCode:
    return GabidulinCode(field, n, k, tuple(field.alpha_pow(i) for i in range(n)))


def moore_matrix(field: GF, points: Sequence[int], rows: int) -> np.ndarray:
    pts = field.arr(points)
    return np.stack([field.frobenius(pts, i) for i in range(rows)]) if rows else field.zeros(0, len(pts))


def star_code(C: GabidulinCode, D: GabidulinCode) -> GabidulinCode:
    """Code of all words (f(g(a_0)), ..., f(g(a_{n-1}))): dimension k_C + k_D - 1."""
    if C.field != D.field or C.points != D.points:
        raise ValueError("star product needs codes on the same evaluation points")
    k = C.k + D.k - 1
    if k > C.n:
        raise ValueError(f"star product dimension {k} exceeds length {C.n}")
    return C.with_dimension(k)


def rank_weight(field: GF, word) -> int:
    w = field.arr(word)
    return field.rank_base(w[None, :])


@dataclass
class DecodeResult:
    codeword: np.ndarray
    message: np.ndarray
    discrepancy: dict[int, int] = dc_field(default_factory=dict)


def erasure_decode(code: GabidulinCode, received, erased: Iterable[int]) -> DecodeResult:
    """Interpolate from the non-erased coordinates and report what the erased ones hid.

    ``discrepancy[c]`` is ``received[c] - codeword[c]`` for each erased c.
    """
    F = code.field
    r = F.arr(received)
    erased = sorted(set(int(c) for c in erased))
    keep = [c for c in range(code.n) if c not in erased]
    if len(keep) < code.k:
        raise DecodingFailure(f"{len(erased)} erasures exceed the budget n-k={code.n - code.k}")
    try:
        msg = code.message_of(r, keep)
    except InconsistentSystem as exc:
        raise DecodingFailure("non-erased coordinates are not consistent with any codeword") from exc
    cw = code.encode(msg)
    disc = {c: int(F.sub(r[c], cw[c])) for c in erased}
    return DecodeResult(cw, msg, disc)


def _right_divide(field: GF, N: np.ndarray, V: np.ndarray, k: int) -> np.ndarray | None:
    """f with V o f = N and q-degree < k, or None if V does not divide N."""
    F = field
    d = int(np.max(np.nonzero(V)[0]))
    vd_inv = F.inv(V[d])
    f = np.zeros(k, dtype=np.int64)
    for j in range(k - 1, -1, -1):
        acc = N[d + j] if d + j < len(N) else 0
        for i in range(d):
            m = d + j - i
            if m < k:
                acc = F.sub(acc, F.mul(V[i], F.frobenius(f[m], i)))
        # f_j^(q^d) = acc / v_d
        f[j] = F.frobenius(F.mul(acc, vd_inv), (-d) % F.s)
    h = np.zeros(max(len(N), d + k), dtype=np.int64)
    for i in range(d + 1):
        if V[i]:
            h[i : i + k] = F.add(h[i : i + k], F.mul(V[i], F.frobenius(f, i)))
    Np = np.zeros_like(h)
    Np[: len(N)] = N
    return f if np.array_equal(h, Np) else None


def _rank_error_decode(code: GabidulinCode, r: np.ndarray, eps_max: int) -> DecodeResult:
    F = code.field
    n, k = code.n, code.k
    pts = F.arr(code.points)
    for e in range(eps_max + 1):
        # unknowns: v_0..v_e, n_0..n_{k+e-1}; V(r_c) - N(alpha_c) = 0
        cols = [F.frobenius(r, i) for i in range(e + 1)]
        cols += [F.neg(F.frobenius(pts, j)) for j in range(k + e)]
        M = np.stack(cols, axis=1)
        for sol in F.kernel(M):
            V, N = sol[: e + 1], sol[e + 1 :]
            if not V.any():
                continue
            f = _right_divide(F, N, V, k)
            if f is None:
                continue
            cw = code.encode(f)
            if rank_weight(F, F.sub(r, cw)) <= eps_max:
                return DecodeResult(cw, f)
    raise DecodingFailure(f"no codeword within rank distance {eps_max}")


def error_erasure_decode(code: GabidulinCode, received, erased: Iterable[int], eps_max: int) -> DecodeResult:
    """Unique decoding for rank-``eps_max`` errors plus coordinate erasures.

    Requires ``2*eps_max + len(erased) <= d - 1``.
    """
    F = code.field
    r = F.arr(received)
    erased = sorted(set(int(c) for c in erased))
    if 2 * eps_max + len(erased) > code.d - 1:
        raise ValueError(f"2*{eps_max} + {len(erased)} exceeds d-1={code.d - 1}")
    if eps_max == 0:
        return erasure_decode(code, r, erased)
    keep = [c for c in range(code.n) if c not in erased]
    punct = GabidulinCode(F, len(keep), code.k, tuple(code.points[c] for c in keep))
    res = _rank_error_decode(punct, r[keep], eps_max)
    cw = code.encode(res.message)
    disc = {c: int(F.sub(r[c], cw[c])) for c in erased}
    return DecodeResult(cw, res.message, disc)


def nearest_codewords(code: GabidulinCode, received, erased: Iterable[int] = ()) -> tuple[int, list[np.ndarray]]:
    """Brute force: all codewords at minimum rank distance on non-erased coordinates."""
    F = code.field
    r = F.arr(received)
    keep = [c for c in range(code.n) if c not in set(erased)]
    best, out = None, []
    for cw in all_codewords(code):
        dist = rank_weight(F, F.sub(r[keep], cw[keep]))
        if best is None or dist < best:
            best, out = dist, [cw]
        elif dist == best:
            out.append(cw)
    return best, out


def all_codewords(code: GabidulinCode) -> np.ndarray:
    F = code.field
    grids = np.meshgrid(*[F.elements] * code.k, indexing="ij")
    msgs = np.stack([g.ravel() for g in grids], axis=1)
    return F.matmul(msgs, code.generator_matrix())

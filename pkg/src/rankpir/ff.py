"""Arithmetic in GF(p^s) and dense linear algebra over it.

Elements are plain Python/numpy integers in ``[0, p**s)``.  The base-p
digits of an integer are the coefficients of the polynomial-basis
representation, lowest degree first, so in GF(2^5) the integer ``0b01101``
is ``alpha^3 + alpha^2 + 1``.  Matrices are ``numpy`` integer arrays; every
routine works element-wise through exp/log tables and is vectorised.

Only prime base fields are supported (``b == 1``, so ``q == p``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "FieldSpec",
    "GF",
    "InconsistentSystem",
    "SolveResult",
    "GF8",
    "GF32",
    "GF256",
    "make_rng",
]

_MAX_ORDER = 1 << 16


class InconsistentSystem(ValueError):
    """Raised when ``A x = b`` has no solution."""


def make_rng(seed: int | None) -> np.random.Generator:
    """PCG64 generator; the only RNG used anywhere in the package."""
    return np.random.Generator(np.random.PCG64(seed))


def _is_prime(n: int) -> bool:
    return n >= 2 and all(n % d for d in range(2, int(n**0.5) + 1))


def _poly_mod(a: list[int], m: list[int], p: int) -> list[int]:
    a = [c % p for c in a]
    inv_lead = pow(m[-1], -1, p)
    while len(a) >= len(m):
        if a[-1]:
            f = a[-1] * inv_lead % p
            shift = len(a) - len(m)
            for i, c in enumerate(m):
                a[shift + i] = (a[shift + i] - f * c) % p
        a.pop()
    return a


def _is_irreducible(modulus: tuple[int, ...], p: int) -> bool:
    s = len(modulus) - 1
    if s == 1:
        return True
    # no roots in GF(p)
    for x in range(p):
        if sum(c * pow(x, i, p) for i, c in enumerate(modulus)) % p == 0:
            return False
    # trial division by every monic polynomial of degree 2..s//2
    m = list(modulus)
    for deg in range(2, s // 2 + 1):
        for low in itertools.product(range(p), repeat=deg):
            divisor = list(low) + [1]
            if not any(_poly_mod(m, divisor, p)):
                return False
    return True


@dataclass(frozen=True)
class FieldSpec:
    """Serializable description of GF(q^s) with q = p^b.

    ``modulus`` lists the coefficients c_0..c_s of the defining polynomial.
    """

    p: int
    b: int
    s: int
    modulus: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "modulus", tuple(int(c) for c in self.modulus))
        if not _is_prime(self.p):
            raise ValueError(f"characteristic {self.p} is not prime")
        if self.b != 1:
            raise ValueError("only prime base fields (b = 1) are supported")
        if self.s < 1:
            raise ValueError("extension degree must be >= 1")
        if len(self.modulus) != self.s + 1 or self.modulus[-1] % self.p == 0:
            raise ValueError(f"modulus must have degree exactly {self.s}")
        if any(not 0 <= c < self.p for c in self.modulus):
            raise ValueError("modulus coefficients must lie in [0, p)")
        if self.p**self.s > _MAX_ORDER:
            raise ValueError(f"field order exceeds {_MAX_ORDER}")
        if not _is_irreducible(self.modulus, self.p):
            raise ValueError(f"modulus {self.modulus} is reducible over GF({self.p})")

    @property
    def q(self) -> int:
        return self.p**self.b

    def to_dict(self) -> dict:
        return {"p": self.p, "b": self.b, "s": self.s, "modulus": list(self.modulus)}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        return cls(int(d["p"]), int(d.get("b", 1)), int(d["s"]), tuple(d["modulus"]))


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    kernel_dim: int


class GF:
    """The field GF(p^s) defined by a :class:`FieldSpec`.

    Scalars and arrays are accepted interchangeably by the arithmetic
    methods; results are numpy arrays (0-d for scalar input) of dtype int64.
    """

    def __init__(self, spec: FieldSpec):
        self.spec = spec
        self.p = spec.p
        self.q = spec.q
        self.s = spec.s
        self.order = spec.p**spec.s
        self._build_tables()

    # -- construction ------------------------------------------------------

    def _mul_slow(self, a: int, b: int) -> int:
        p, s = self.p, self.s
        ca, cb = self._digits(a), self._digits(b)
        prod = [0] * (2 * s - 1)
        for i, x in enumerate(ca):
            if x:
                for j, y in enumerate(cb):
                    prod[i + j] = (prod[i + j] + x * y) % p
        red = _poly_mod(prod, list(self.spec.modulus), p)
        return self._undigits(red)

    def _digits(self, a: int) -> list[int]:
        out = []
        for _ in range(self.s):
            a, r = divmod(a, self.p)
            out.append(r)
        return out

    def _undigits(self, coeffs) -> int:
        v = 0
        for c in reversed(list(coeffs)):
            v = v * self.p + int(c) % self.p
        return v

    def _build_tables(self):
        Q = self.order
        n = Q - 1
        # primitive element: smallest generator of the multiplicative group
        gen = None
        for g in range(2 if Q > 2 else 1, Q):
            x, seen = 1, 0
            for k in range(1, n + 1):
                x = self._mul_slow(x, g)
                if x == 1:
                    seen = k
                    break
            if seen == n:
                gen = g
                break
        assert gen is not None
        self.generator = gen
        exp = np.zeros(2 * n, dtype=np.int64)
        log = np.zeros(Q, dtype=np.int64)
        x = 1
        for k in range(n):
            exp[k] = x
            log[x] = k
            x = self._mul_slow(x, gen)
        exp[n:] = exp[:n]
        self._exp, self._log = exp, log
        # small fields: full product table is faster than exp/log lookups
        self._mul = None
        if Q <= 1024:
            el = np.arange(Q)
            t = exp[log[el][:, None] + log[el][None, :]]
            t[0, :] = 0
            t[:, 0] = 0
            self._mul = t
        if self.p != 2:
            digits = np.array([self._digits(a) for a in range(Q)], dtype=np.int64)
            weights = self.p ** np.arange(self.s, dtype=np.int64)
            add = (digits[:, None, :] + digits[None, :, :]) % self.p
            self._add = (add * weights).sum(axis=2)
            self._neg = ((-digits) % self.p * weights).sum(axis=1)

    # -- scalar / elementwise arithmetic ----------------------------------

    @property
    def alpha(self) -> int:
        """The class of z in GF(p)[z]/(modulus)."""
        if self.s > 1:
            return self.p
        return (-self.spec.modulus[0]) % self.p

    @property
    def base(self) -> "GF":
        """The prime subfield GF(p) as a stand-alone field."""
        if self.s == 1:
            return self
        return _prime_field(self.p)

    def arr(self, a) -> np.ndarray:
        return np.asarray(a, dtype=np.int64)

    def add(self, a, b):
        a, b = self.arr(a), self.arr(b)
        if self.p == 2:
            return a ^ b
        return self._add[a, b]

    def neg(self, a):
        a = self.arr(a)
        return a if self.p == 2 else self._neg[a]

    def sub(self, a, b):
        return self.add(a, self.neg(b))

    def mul(self, a, b):
        a, b = self.arr(a), self.arr(b)
        if self._mul is not None:
            return self._mul[a, b]
        r = self._exp[self._log[a] + self._log[b]]
        return np.where((a == 0) | (b == 0), 0, r)

    def inv(self, a):
        a = self.arr(a)
        if np.any(a == 0):
            raise ZeroDivisionError("inverse of zero in GF")
        n = self.order - 1
        return self._exp[(n - self._log[a]) % n]

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def pow(self, a, e: int):
        a = self.arr(a)
        n = self.order - 1
        if e == 0:
            return np.ones_like(a)
        r = self._exp[(self._log[a] * (e % n)) % n]
        return np.where(a == 0, 0, r)

    def frobenius(self, a, i: int = 1):
        """a^(q^i); i is reduced mod s since the Frobenius has order s."""
        if i < 0:
            raise ValueError("Frobenius exponent must be >= 0")
        return self.pow(a, self.q ** (i % self.s)) if i % self.s else self.arr(a).copy()

    def coeffs(self, a) -> np.ndarray:
        """Polynomial-basis coefficients, trailing axis of length s."""
        a = self.arr(a)
        return (a[..., None] // self.p ** np.arange(self.s)) % self.p

    def from_coeffs(self, c) -> np.ndarray:
        c = self.arr(c) % self.p
        return (c * self.p ** np.arange(self.s)).sum(axis=-1)

    def alpha_pow(self, e: int) -> int:
        return int(self.pow(self.alpha, e))

    def fmt(self, a: int) -> str:
        """Render an element as a sum of powers of alpha, e.g. ``a^3+a^2+1``."""
        terms = []
        for i, c in reversed(list(enumerate(self._digits(int(a))))):
            if not c:
                continue
            mono = "1" if i == 0 else ("a" if i == 1 else f"a^{i}")
            terms.append(mono if c == 1 else f"{c}*{mono}")
        return "+".join(terms) or "0"

    # -- matrices ----------------------------------------------------------

    def matmul(self, A, B) -> np.ndarray:
        A, B = self.arr(A), self.arr(B)
        if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
            raise ValueError(f"shape mismatch {A.shape} x {B.shape}")
        out = np.zeros((A.shape[0], B.shape[1]), dtype=np.int64)
        for k in range(A.shape[1]):
            out = self.add(out, self.mul(A[:, k, None], B[None, k, :]))
        return out

    def dot(self, a, b):
        """Inner product of two vectors."""
        prods = self.mul(a, b)
        acc = np.int64(0)
        for v in np.ravel(prods):
            acc = self.add(acc, v)
        return int(acc)

    def vecsum(self, a, axis: int = 0) -> np.ndarray:
        a = np.moveaxis(self.arr(a), axis, 0)
        acc = np.zeros(a.shape[1:], dtype=np.int64)
        for row in a:
            acc = self.add(acc, row)
        return acc

    def rref(self, M) -> tuple[np.ndarray, list[int]]:
        """Reduced row-echelon form and pivot columns."""
        R = self.arr(M).copy()
        rows, cols = R.shape
        pivots: list[int] = []
        r = 0
        for c in range(cols):
            if r == rows:
                break
            nz = np.nonzero(R[r:, c])[0]
            if nz.size == 0:
                continue
            piv = r + int(nz[0])
            if piv != r:
                R[[r, piv]] = R[[piv, r]]
            R[r] = self.mul(R[r], self.inv(R[r, c]))
            factors = R[:, c].copy()
            factors[r] = 0
            hit = np.nonzero(factors)[0]
            if hit.size:
                R[hit] = self.sub(R[hit], self.mul(factors[hit, None], R[r][None, :]))
            pivots.append(c)
            r += 1
        return R, pivots

    def kernel(self, M) -> list[np.ndarray]:
        """Basis of the right kernel {x : M x = 0}."""
        M = self.arr(M)
        R, pivots = self.rref(M)
        cols = M.shape[1]
        basis = []
        for fc in (c for c in range(cols) if c not in pivots):
            v = np.zeros(cols, dtype=np.int64)
            v[fc] = 1
            for i, pc in enumerate(pivots):
                v[pc] = self.neg(R[i, fc])
            basis.append(v)
        return basis

    def rank_ext(self, M) -> int:
        M = self.arr(M)
        if M.size == 0:
            return 0
        if M.shape == (1, 1):
            return int(M[0, 0] != 0)
        return len(self.rref(M)[1])

    def expand(self, M) -> np.ndarray:
        """Map each entry to a length-s column over GF(p): shape (s*r, c)."""
        M = self.arr(M)
        r, c = M.shape
        C = self.coeffs(M)  # r, c, s
        return np.transpose(C, (0, 2, 1)).reshape(r * self.s, c)

    def compress(self, B) -> np.ndarray:
        B = self.arr(B)
        rs, c = B.shape
        if rs % self.s:
            raise ValueError("row count is not a multiple of s")
        C = np.transpose(B.reshape(rs // self.s, self.s, c), (0, 2, 1))
        return self.from_coeffs(C)

    def rank_base(self, M) -> int:
        """Rank over GF(q) of the expansion; for a row vector, its rank weight."""
        M = self.arr(M)
        if M.size == 0:
            return 0
        return self.base.rank_ext(self.expand(M))

    def solve_linear(self, A, b) -> SolveResult:
        """One solution of ``A x = b`` and the kernel dimension of A.

        ``b`` may be a vector or a matrix of right-hand sides.
        """
        A, b = self.arr(A), self.arr(b)
        vec = b.ndim == 1
        B = b[:, None] if vec else b
        if A.shape[0] != B.shape[0]:
            raise ValueError(f"shape mismatch {A.shape} vs {b.shape}")
        n = A.shape[1]
        R, pivots = self.rref(np.hstack([A, B]))
        if pivots and pivots[-1] >= n:
            raise InconsistentSystem("right-hand side is outside the column space")
        x = np.zeros((n, B.shape[1]), dtype=np.int64)
        for i, c in enumerate(pivots):
            x[c] = R[i, n:]
        return SolveResult(x[:, 0] if vec else x, n - len(pivots))

    def inverse(self, A) -> np.ndarray:
        A = self.arr(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("inverse of a non-square matrix")
        R, pivots = self.rref(np.hstack([A, self.identity(n)]))
        if pivots[:n] != list(range(n)) or len(pivots) < n:
            raise ZeroDivisionError("singular matrix")
        return R[:, n:]

    def identity(self, n: int) -> np.ndarray:
        return np.eye(n, dtype=np.int64)

    def zeros(self, *shape) -> np.ndarray:
        return np.zeros(shape, dtype=np.int64)

    def random_matrix(self, rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
        return rng.integers(0, self.order, size=(rows, cols), dtype=np.int64)

    def random_full_rank(self, rng, rows: int, cols: int) -> np.ndarray:
        while True:
            M = self.random_matrix(rng, rows, cols)
            if self.rank_ext(M) == min(rows, cols):
                return M

    def random_matrix_of_rank(self, rng, rows: int, cols: int, r: int) -> np.ndarray:
        if not 0 <= r <= min(rows, cols):
            raise ValueError(f"rank {r} out of range for {rows}x{cols}")
        if r == 0:
            return self.zeros(rows, cols)
        while True:
            M = self.matmul(self.random_full_rank(rng, rows, r), self.random_full_rank(rng, r, cols))
            if self.rank_ext(M) == r:
                return M

    def __eq__(self, other):
        return isinstance(other, GF) and other.spec == self.spec

    def __hash__(self):
        return hash(self.spec)

    def __repr__(self):
        return f"GF({self.p}^{self.s}, modulus={self.spec.modulus})"

    @cached_property
    def elements(self) -> np.ndarray:
        return np.arange(self.order, dtype=np.int64)


_PRIME_FIELDS: dict[int, GF] = {}


def _prime_field(p: int) -> GF:
    if p not in _PRIME_FIELDS:
        # z - 1 as modulus: alpha = 1, elements are residues mod p
        _PRIME_FIELDS[p] = GF(FieldSpec(p, 1, 1, ((p - 1) % p, 1)))
    return _PRIME_FIELDS[p]


GF8 = GF(FieldSpec(2, 1, 3, (1, 1, 0, 1)))
GF32 = GF(FieldSpec(2, 1, 5, (1, 0, 1, 0, 0, 1)))
GF256 = GF(FieldSpec(2, 1, 8, (1, 0, 1, 1, 1, 0, 0, 0, 1)))

"""Distributed storage: striping, Gabidulin encoding, server blocks."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field as dc_field
from typing import Literal

import numpy as np

from .ff import GF, FieldSpec
from .gabidulin import GabidulinCode


class ConfigError(ValueError):
    """Parameters violate a precondition of the scheme."""


@dataclass(frozen=True)
class SystemParams:
    """m files on l servers holding an [n, k] Gabidulin code, t colluding servers.

    ``variant="errored"`` budgets ``eps`` rank errors and ``tau`` erasures and
    shrinks the stripe count accordingly.  ``query_code`` picks the random
    part of the query: ``"aligned"`` (decodable) or ``"gabidulin"`` (packed
    G(n, t*rho) rows, private but not decodable).
    """

    field: GF
    m: int
    l: int
    n: int
    k: int
    t: int
    variant: Literal["errorfree", "errored"] = "errorfree"
    eps: int = 0
    tau: int = 0
    query_code: Literal["aligned", "gabidulin"] = "aligned"
    strict_privacy: bool = True

    def __post_init__(self):
        if self.variant not in ("errorfree", "errored"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.query_code not in ("aligned", "gabidulin"):
            raise ConfigError(f"unknown query code {self.query_code!r}")
        if min(self.m, self.l, self.n, self.k, self.t) < 1:
            raise ConfigError("m, l, n, k, t must all be positive")
        if self.n % self.l:
            raise ConfigError(f"l={self.l} does not divide n={self.n}")
        if self.t > self.l:
            raise ConfigError("more colluding servers than servers")
        if self.n > self.field.s:
            raise ConfigError(f"n={self.n} exceeds extension degree s={self.field.s}")
        if self.variant == "errorfree" and (self.eps or self.tau):
            raise ConfigError("error-free variant takes eps = tau = 0")
        if min(self.eps, self.tau) < 0:
            raise ConfigError("eps and tau must be non-negative")
        if self.k + self.t * self.rho - 1 >= self.n:
            raise ConfigError("need k + t*rho - 1 < n")
        if self.beta < 1:
            raise ConfigError(f"stripe count beta={self.beta} < 1")
        if (self.m * self.beta) % self.field.s:
            raise ConfigError(f"s={self.field.s} does not divide m*beta={self.m * self.beta}")
        if self.variant == "errored" and self.k != 1:
            raise ConfigError("errored variant is supported for k = 1 only")
        if self.query_code == "aligned" and self.strict_privacy:
            from .pir import query_space

            query_space(self)

    @property
    def rho(self) -> int:
        return self.n // self.l

    @property
    def beta(self) -> int:
        return self.n - self.k - self.rho * self.t - 2 * self.eps - self.tau + 1

    @property
    def mu(self) -> int:
        return self.m * self.beta // self.field.s

    @property
    def rows(self) -> int:
        """m * beta: rows of the stripe matrix."""
        return self.m * self.beta

    @property
    def collusion(self) -> int:
        return self.t * self.rho

    @property
    def interference_dim(self) -> int:
        return self.k + self.collusion - 1

    @property
    def response_dim(self) -> int:
        """Dimension of the code the user decodes in one round."""
        if self.variant == "errored":
            return self.interference_dim + self.beta
        return self.interference_dim

    def storage_code(self) -> GabidulinCode:
        return GabidulinCode.default(self.field, self.n, self.k)

    def server_of(self, c: int) -> int:
        return c // self.rho

    def coords_of(self, j: int) -> range:
        return range(j * self.rho, (j + 1) * self.rho)

    def to_dict(self) -> dict:
        return {
            "m": self.m, "l": self.l, "n": self.n, "k": self.k, "t": self.t,
            "variant": self.variant, "eps": self.eps, "tau": self.tau,
            "query_code": self.query_code, "strict_privacy": self.strict_privacy,
        }


@dataclass(frozen=True)
class EncodedStorage:
    Y: np.ndarray
    params: SystemParams
    blocks: list[np.ndarray] = dc_field(default_factory=list)

    def block(self, j: int) -> np.ndarray:
        return self.blocks[j]


def random_files(rng: np.random.Generator, params: SystemParams) -> np.ndarray:
    """Uniform file set, shape (m, beta, k) over GF(q^s)."""
    F = params.field
    return rng.integers(0, F.order, size=(params.m, params.beta, params.k), dtype=np.int64)


def stripe_files(files: np.ndarray, params: SystemParams) -> np.ndarray:
    """Stack stripes so file f (1-based), stripe d sits on row beta*(f-1) + d - 1."""
    files = np.asarray(files, dtype=np.int64)
    want = (params.m, params.beta, params.k)
    if files.shape != want:
        raise ValueError(f"file set shape {files.shape} != {want}")
    return files.reshape(params.rows, params.k).copy()


def unstripe(X: np.ndarray, params: SystemParams) -> np.ndarray:
    return np.asarray(X).reshape(params.m, params.beta, params.k).copy()


def stripe_row(params: SystemParams, f: int, delta: int) -> int:
    """0-based row of stripe ``delta`` (1-based) of file ``f`` (1-based)."""
    return params.beta * (f - 1) + delta - 1


def encode_storage(X: np.ndarray, params: SystemParams, code: GabidulinCode | None = None) -> EncodedStorage:
    code = code or params.storage_code()
    Y = code.encode(X)
    blocks = [Y[:, list(params.coords_of(j))] for j in range(params.l)]
    return EncodedStorage(Y, params, blocks)


def sub_server_view(storage: EncodedStorage, c: int) -> np.ndarray:
    if not 0 <= c < storage.Y.shape[1]:
        raise IndexError(f"sub-server {c} out of range")
    return storage.Y[:, c].copy()


# -- blob format -------------------------------------------------------------
# One JSON header line, then the GF(q) symbols of every stripe entry as bytes,
# row-major over (file, stripe, position, basis coefficient).

def dump_files(files: np.ndarray, field: GF) -> bytes:
    files = np.asarray(files, dtype=np.int64)
    if field.p > 256:
        raise ValueError("blob format stores one byte per GF(q) symbol")
    m, beta, k = files.shape
    header = {"format": "rankpir-files/1", "m": m, "beta": beta, "k": k, "field": field.spec.to_dict()}
    body = field.coeffs(files).astype(np.uint8).tobytes()
    return json.dumps(header, sort_keys=True).encode() + b"\n" + body


def load_files(blob: bytes) -> tuple[np.ndarray, GF]:
    buf = io.BytesIO(blob)
    header = json.loads(buf.readline())
    if header.get("format") != "rankpir-files/1":
        raise ValueError("not a rankpir file blob")
    F = GF(FieldSpec.from_dict(header["field"]))
    shape = (header["m"], header["beta"], header["k"], F.s)
    raw = np.frombuffer(buf.read(), dtype=np.uint8)
    if raw.size != int(np.prod(shape)):
        raise ValueError(f"blob body has {raw.size} symbols, header implies {int(np.prod(shape))}")
    return F.from_coeffs(raw.reshape(shape).astype(np.int64)), F

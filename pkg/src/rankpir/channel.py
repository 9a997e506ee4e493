"""Random linear network channels between the user and each server.

Every server j sees its own rho x rho transfer matrix on the uplink (A_j)
and downlink (A'_j), drawn fresh per round.  Optional impairments:

* erasures: a link block replaced by a matrix of rank rho - 1,
* errors: an additive rank-``error_rank`` term (B_j Z_j uplink, N_j downlink).

Impaired servers are chosen without replacement, so no server carries more
than one impairment in a round.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Literal

import numpy as np

from .ff import GF
from .storage import ConfigError, SystemParams

MODES = ("identity", "uniform", "diagonal", "rank-profile")


@dataclass(frozen=True)
class ChannelConfig:
    """Channel model.

    ``uniform`` draws every rho x rho block uniformly; ``diagonal`` draws one
    independent scalar per sub-server link (the two agree for rho = 1).
    ``rank_up`` / ``rank_down`` give per-server ranks for ``rank-profile``.
    """

    mode: Literal["identity", "uniform", "diagonal", "rank-profile"] = "identity"
    rank_up: tuple[int, ...] = ()
    rank_down: tuple[int, ...] = ()
    eps_up: int = 0
    eps_down: int = 0
    tau_up: int = 0
    tau_down: int = 0
    error_rank: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown channel mode {self.mode!r}")
        object.__setattr__(self, "rank_up", tuple(int(r) for r in self.rank_up))
        object.__setattr__(self, "rank_down", tuple(int(r) for r in self.rank_down))
        if min(self.eps_up, self.eps_down, self.tau_up, self.tau_down) < 0:
            raise ConfigError("impairment counts must be non-negative")
        if self.error_rank < 1:
            raise ConfigError("error_rank must be positive")

    @property
    def eps(self) -> int:
        return self.eps_up + self.eps_down

    @property
    def tau(self) -> int:
        return self.tau_up + self.tau_down

    def validate(self, params: SystemParams) -> None:
        rho, l = params.rho, params.l
        if self.mode == "rank-profile":
            for name, prof in (("rank_up", self.rank_up), ("rank_down", self.rank_down)):
                if prof and len(prof) != l:
                    raise ConfigError(f"{name} needs {l} entries, got {len(prof)}")
                if any(not 0 <= r <= rho for r in prof):
                    raise ConfigError(f"{name} entries must lie in [0, {rho}]")
        if self.error_rank > rho:
            raise ConfigError(f"error_rank {self.error_rank} exceeds rho={rho}")
        if self.eps + self.tau > l:
            raise ConfigError("more impaired servers than servers")
        if params.variant == "errorfree" and self.eps:
            raise ConfigError("error-free variant cannot absorb rank errors")
        # an impaired server costs rho coordinates; errors count twice
        if params.variant == "errored" and (2 * self.eps + self.tau) * rho > 2 * params.eps + params.tau:
            raise ConfigError(
                f"injected impairments exceed the decoding budget 2*eps + tau = {2 * params.eps + params.tau}")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "rank_up": list(self.rank_up), "rank_down": list(self.rank_down),
            "eps_up": self.eps_up, "eps_down": self.eps_down,
            "tau_up": self.tau_up, "tau_down": self.tau_down,
            "error_rank": self.error_rank, "seed": self.seed,
        }


@dataclass(frozen=True)
class LinkRealization:
    """One round of link matrices; ``noise_*`` map server index to an additive term."""

    A: list[np.ndarray]
    A_down: list[np.ndarray]
    noise_up: dict[int, np.ndarray] = dc_field(default_factory=dict)
    noise_down: dict[int, np.ndarray] = dc_field(default_factory=dict)
    erased_up: tuple[int, ...] = ()
    erased_down: tuple[int, ...] = ()

    def ranks(self, field: GF) -> dict:
        return {
            "up": [field.rank_ext(a) for a in self.A],
            "down": [field.rank_ext(a) for a in self.A_down],
        }

    def blockdiag(self, field: GF, which: str = "up") -> np.ndarray:
        blocks = self.A if which == "up" else self.A_down
        rho = blocks[0].shape[0]
        out = field.zeros(rho * len(blocks), rho * len(blocks))
        for j, b in enumerate(blocks):
            out[j * rho : (j + 1) * rho, j * rho : (j + 1) * rho] = b
        return out


def _link(field: GF, rng: np.random.Generator, mode: str, rho: int, rank: int | None) -> np.ndarray:
    if mode == "identity":
        return field.identity(rho)
    if mode == "uniform":
        return field.random_matrix(rng, rho, rho)
    if mode == "diagonal":
        return np.diag(rng.integers(0, field.order, size=rho, dtype=np.int64))
    return field.random_matrix_of_rank(rng, rho, rho, rho if rank is None else rank)


def sample_links(rng: np.random.Generator, config: ChannelConfig, params: SystemParams,
                 query_width: int | None = None) -> LinkRealization:
    """Fresh transfer matrices and impairments for one round."""
    F, rho, l = params.field, params.rho, params.l
    up = [_link(F, rng, config.mode, rho, config.rank_up[j] if config.rank_up else None) for j in range(l)]
    down = [_link(F, rng, config.mode, rho, config.rank_down[j] if config.rank_down else None) for j in range(l)]
    n_imp = config.eps + config.tau
    if not n_imp:
        return LinkRealization(up, down)
    servers = [int(j) for j in rng.permutation(l)[:n_imp]]
    e_up = servers[: config.eps_up]
    e_down = servers[config.eps_up : config.eps]
    t_up = servers[config.eps : config.eps + config.tau_up]
    t_down = servers[config.eps + config.tau_up :]
    for j in t_up:
        up[j] = F.random_matrix_of_rank(rng, rho, rho, rho - 1)
    for j in t_down:
        down[j] = F.random_matrix_of_rank(rng, rho, rho, rho - 1)
    width_up = rho + (query_width if query_width is not None else params.rows)
    noise_up = {j: F.matmul(F.random_matrix(rng, rho, rho),
                            F.random_matrix_of_rank(rng, rho, width_up, config.error_rank)) for j in e_up}
    noise_down = {j: F.random_matrix_of_rank(rng, rho, 2 * rho + 1, config.error_rank) for j in e_down}
    return LinkRealization(up, down, noise_up, noise_down, tuple(t_up), tuple(t_down))


def transmit_uplink(Q_j: np.ndarray, real: LinkRealization, j: int, field: GF) -> np.ndarray:
    """A_j Q_j, plus B_j Z_j when server j carries an uplink error."""
    out = field.matmul(real.A[j], Q_j)
    if j in real.noise_up:
        out = field.add(out, real.noise_up[j])
    return out


def transmit_downlink(R_j: np.ndarray, real: LinkRealization, j: int, field: GF) -> np.ndarray:
    """A'_j R_j, plus N_j when server j carries a downlink error."""
    out = field.matmul(real.A_down[j], R_j)
    if j in real.noise_down:
        out = field.add(out, real.noise_down[j])
    return out

"""Private information retrieval from Gabidulin-coded storage over network channels.

One round works as follows.  The user draws a random query part D
(m*beta x n) whose rows keep every stored codeword inside a known Gabidulin
code once multiplied coordinate-wise, and adds a sparse selector E that
picks stripe symbols of the wanted file.  Sub-server c receives row c of
D_Q = D^T + E behind a lifting identity, and answers
``r_c = sum_w D_Q[c, w] * Y[w, c]``.  The answers form a Gabidulin codeword
plus the selected symbols at known coordinates, which the user strips off
with an erasure (or error-erasure) decoder.

Two choices for the random part are offered:

* ``"aligned"``: rows drawn from ``{d : d * c in G(n, k + t*rho - 1) for every
  storage codeword c}``.  Responses decode; the space is t*rho-private when
  beta = 1 or k = 1.
* ``"gabidulin"``: t*rho random GF(q) columns packed into GF(q^s) symbols
  and encoded with G(n, t*rho).  Private for any parameters, but the
  coordinate-wise products do not stay in a Gabidulin code, so decoding
  returns garbage.  Kept for comparison.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .channel import ChannelConfig, LinkRealization, sample_links, transmit_downlink, transmit_uplink
from .ff import GF, InconsistentSystem
from .gabidulin import DecodingFailure, GabidulinCode, erasure_decode, error_erasure_decode, rank_weight
from .storage import ConfigError, EncodedStorage, SystemParams, encode_storage, stripe_files, stripe_row


class RetrievalFailure(RuntimeError):
    """The file could not be recovered within the stage budget."""


# -- query construction ------------------------------------------------------

@lru_cache(maxsize=64)
def query_space(params: SystemParams) -> np.ndarray:
    """Basis (rows) of the aligned query space.

    Raises :class:`ConfigError` under ``strict_privacy`` when some set of t
    whole servers could tell queries apart.
    """
    F, n = params.field, params.n
    K = params.interference_dim
    G_C = params.storage_code().generator_matrix()
    H = np.array(F.kernel(GabidulinCode.default(F, n, K).generator_matrix()))
    cond = np.vstack([F.mul(H, g[None, :]) for g in G_C])
    basis = np.array(F.kernel(cond)).reshape(-1, n)
    if params.strict_privacy:
        tr = params.collusion
        if basis.shape[0] < tr:
            raise ConfigError(
                f"aligned query space has dimension {basis.shape[0]} < t*rho={tr}: not private "
                "(needs beta = 1 or k = 1)")
        for S in itertools.combinations(range(params.l), params.t):
            cols = [c for j in S for c in params.coords_of(j)]
            if F.rank_ext(basis[:, cols]) < tr:
                raise ConfigError(f"servers {S} can distinguish queries: not private")
    return basis


def build_random_part(rng: np.random.Generator, params: SystemParams) -> np.ndarray:
    """Random query part D, shape (m*beta, n)."""
    F = params.field
    if params.query_code == "aligned":
        basis = query_space(params)
        U = F.random_matrix(rng, params.rows, basis.shape[0])
        return F.matmul(U, basis)
    U = rng.integers(0, F.p, size=(params.rows, params.collusion), dtype=np.int64)
    return packed_query(U, params)


def packed_query(U: np.ndarray, params: SystemParams) -> np.ndarray:
    """Pack GF(q) columns into GF(q^s) symbols, encode rows with G(n, t*rho), unpack."""
    F = params.field
    U_ext = F.compress(U)
    D_ext = GabidulinCode.default(F, params.n, params.collusion).encode(U_ext)
    return F.expand(D_ext)


def band_requests(params: SystemParams, i: int) -> dict[int, int]:
    """Round i (1-based) asks stripe delta at coordinate i - 1 + delta - 1 (0-based)."""
    return {d: i + d - 2 for d in range(1, params.beta + 1)}


def selector_exponent(params: SystemParams, i: int, delta: int) -> int:
    return i * params.beta - delta * params.k + params.k + params.collusion - 1


def build_selector(f: int, i: int, params: SystemParams, requests: dict[int, int] | None = None) -> np.ndarray:
    """Selector E, shape (n, m*beta).

    Error-free: a 1 at (coordinate, row of stripe delta) for each request.
    Errored: column of stripe delta holds a_c^(q^e) / a_c with e from
    :func:`selector_exponent`, so the response gains e-th q-power terms.
    """
    if not 1 <= f <= params.m:
        raise ValueError(f"file index {f} outside [1, {params.m}]")
    if not 1 <= i <= params.k:
        raise ValueError(f"round {i} outside [1, {params.k}]")
    F, n = params.field, params.n
    E = F.zeros(n, params.rows)
    if params.variant == "errorfree":
        for d, c in (requests or band_requests(params, i)).items():
            E[c, stripe_row(params, f, d)] = 1
        return E
    pts = F.arr(params.storage_code().points)
    for d in range(1, params.beta + 1):
        e = selector_exponent(params, i, d)
        if not params.collusion <= e < params.response_dim:
            raise ConfigError(f"selector exponent {e} for stripe {d} is outside the response code")
        E[:, stripe_row(params, f, d)] = F.div(F.frobenius(pts, e), pts)
    return E


def lift_query(D_Q: np.ndarray, params: SystemParams) -> list[np.ndarray]:
    rho = params.rho
    return [np.hstack([np.eye(rho, dtype=np.int64), D_Q[list(params.coords_of(j))]]) for j in range(params.l)]


@dataclass(frozen=True)
class QueryRound:
    """One round's query: D (m*beta x n), selector E and D_Q = D^T + E (n x m*beta)."""

    f: int
    index: int
    requests: dict[int, int]
    D: np.ndarray
    E: np.ndarray
    D_Q: np.ndarray
    stage: int = 1


def make_query(rng: np.random.Generator, params: SystemParams, f: int, i: int,
               requests: dict[int, int] | None = None, stage: int = 1) -> QueryRound:
    if params.variant == "errorfree":
        requests = dict(requests or band_requests(params, i))
    else:
        requests = {}
    D = build_random_part(rng, params)
    E = build_selector(f, i, params, requests)
    return QueryRound(f, i, requests, D, E, params.field.add(D.T, E), stage)


# -- servers -----------------------------------------------------------------

def server_respond(Y_j: np.ndarray, received: np.ndarray, field: GF) -> np.ndarray | None:
    """Answer a (possibly channel-mixed) lifted query ``(A_hat | M_hat)``.

    The server undoes the mixing it can see (A_hat D_hat = M_hat), projects
    each query row against its own column and returns ``(I | A_hat | A_hat r)``.
    An all-zero or self-contradictory query gets no answer (``None``).
    """
    F = field
    rho = received.shape[0]
    if not received.any():
        return None
    A_hat, M_hat = received[:, :rho], received[:, rho:]
    if rho == 1:
        if not A_hat[0, 0]:
            return None
        D_hat = F.div(M_hat, A_hat[0, 0])
    else:
        try:
            D_hat = F.solve_linear(A_hat, M_hat).x
        except InconsistentSystem:
            return None
    # r_c = sum_w D_hat[c, w] * Y_j[w, c]
    r = F.vecsum(F.mul(D_hat.T, Y_j), axis=0)
    third = F.matmul(A_hat, r[:, None])
    return np.hstack([np.eye(rho, dtype=np.int64), A_hat, third])


@dataclass
class Aggregate:
    """User-side view of one round: R_rec (n x (2n+1)), unscrambled word, erased coordinates.

    ``downloads`` charges every sub-server's answer slot (n per round), whether
    or not anything usable arrived; ``received`` counts non-silent answers.
    """

    R_rec: np.ndarray
    word: np.ndarray
    erased: set[int]
    downloads: int
    received: int = 0


def aggregate(packets: list[np.ndarray | None], params: SystemParams) -> Aggregate:
    """Place received blocks on the block diagonal and unscramble each server's answers.

    With K_j = A'_j A_hat_j (second block) and v_j the third block, the answers
    solve K_j x = v_j; a coordinate is erased when some kernel vector of K_j
    touches it, or when the packet is missing or contradictory.
    """
    F, n, rho = params.field, params.n, params.rho
    R_rec = F.zeros(n, 2 * n + 1)
    word = F.zeros(n)
    erased: set[int] = set()
    received = 0
    for j, P in enumerate(packets):
        coords = list(params.coords_of(j))
        if P is None:
            erased.update(coords)
            continue
        received += rho
        R_rec[coords, coords[0] : coords[-1] + 1] = P[:, :rho]
        R_rec[coords, n + coords[0] : n + coords[-1] + 1] = P[:, rho : 2 * rho]
        R_rec[coords, 2 * n] = P[:, 2 * rho]
        K_j, v = P[:, rho : 2 * rho], P[:, 2 * rho]
        if rho == 1:
            if K_j[0, 0]:
                word[coords[0]] = F.div(v[0], K_j[0, 0])
            else:
                erased.add(coords[0])
            continue
        try:
            x = F.solve_linear(K_j, v).x
        except InconsistentSystem:
            erased.update(coords)
            continue
        word[coords] = x
        for vec in F.kernel(K_j):
            erased.update(coords[i] for i in np.nonzero(vec)[0])
    return Aggregate(R_rec, word, erased, n, received)


@dataclass
class RoundResult:
    """Symbols obtained in one round: ``values[delta] = (coordinate, symbol)``.

    For the errored variant the coordinate is ``None``: the symbols come out
    as message coefficients rather than as storage entries.
    """

    values: dict[int, tuple[int | None, int]]
    erased: set[int]
    downloads: int
    ok: bool
    reason: str = ""
    error_rank: int = 0


def retrieve_round(agg: Aggregate, query: QueryRound, params: SystemParams) -> RoundResult:
    F, n = params.field, params.n
    K = params.interference_dim
    if params.variant == "errorfree":
        band = set(query.requests.values())
        erased = band | agg.erased
        if len(erased) > n - K:
            return RoundResult({}, agg.erased, agg.downloads, False, "erasure budget exceeded")
        code = GabidulinCode.default(F, n, K)
        try:
            res = erasure_decode(code, agg.word, erased)
        except DecodingFailure as exc:
            return RoundResult({}, agg.erased, agg.downloads, False, str(exc))
        vals = {d: (c, res.discrepancy[c]) for d, c in query.requests.items() if c not in agg.erased}
        return RoundResult(vals, agg.erased, agg.downloads, True)
    code = GabidulinCode.default(F, n, params.response_dim)
    slack = code.d - 1 - len(agg.erased)
    if slack < 0:
        return RoundResult({}, agg.erased, agg.downloads, False, "erasure budget exceeded")
    try:
        res = error_erasure_decode(code, agg.word, agg.erased, slack // 2)
    except DecodingFailure as exc:
        return RoundResult({}, agg.erased, agg.downloads, False, str(exc))
    vals = {d: (None, int(res.message[selector_exponent(params, query.index, d)]))
            for d in range(1, params.beta + 1)}
    keep = [c for c in range(n) if c not in agg.erased]
    err = rank_weight(F, F.sub(agg.word[keep], res.codeword[keep]))
    return RoundResult(vals, agg.erased, agg.downloads, True, error_rank=err)


def run_round(storage: EncodedStorage, query: QueryRound, channel: ChannelConfig,
              rng: np.random.Generator) -> tuple[RoundResult, LinkRealization]:
    """Send one query over fresh links, collect answers and decode."""
    params = storage.params
    F = params.field
    real = sample_links(rng, channel, params)
    packets = []
    for j, Q_j in enumerate(lift_query(query.D_Q, params)):
        received = transmit_uplink(Q_j, real, j, F)
        P = server_respond(storage.blocks[j], received, F)
        packets.append(None if P is None else transmit_downlink(P, real, j, F))
    # a downlink that kills a packet entirely looks like silence
    packets = [None if P is not None and not P.any() else P for P in packets]
    return retrieve_round(aggregate(packets, params), query, params), real


# -- orchestration -----------------------------------------------------------

@dataclass
class RetrievalState:
    """Per-stripe (coordinate -> symbol) equations gathered so far."""

    beta: int
    held: dict[int, dict[int, int]] = dc_field(default_factory=dict)

    def __post_init__(self):
        for d in range(1, self.beta + 1):
            self.held.setdefault(d, {})

    def add(self, delta: int, coord: int, value: int) -> None:
        if coord in self.held[delta]:
            raise AssertionError(f"stripe {delta} asked twice at coordinate {coord}")
        self.held[delta][coord] = int(value)

    def missing(self, k: int) -> dict[int, int]:
        return {d: k - len(h) for d, h in self.held.items() if len(h) < k}


@dataclass
class ProtocolResult:
    file: np.ndarray | None
    transcript: list[dict]
    state: RetrievalState
    seed: int | None = None

    @property
    def success(self) -> bool:
        return self.file is not None


def schedule_stage(state: RetrievalState, params: SystemParams) -> list[dict[int, int]]:
    """Rounds of requests for the stripes still short of k equations.

    Each round asks every needy stripe at one coordinate it does not hold yet;
    coordinates within a round are distinct.
    """
    need = state.missing(params.k)
    free = {d: [c for c in range(params.n) if c not in state.held[d]] for d in need}
    rounds = []
    while any(need.values()):
        req: dict[int, int] = {}
        used: set[int] = set()
        for d in sorted(need):
            if not need[d]:
                continue
            c = next((c for c in free[d] if c not in used), None)
            if c is None:
                continue
            req[d] = c
            used.add(c)
            free[d].remove(c)
            need[d] -= 1
        if not req:
            break
        rounds.append(req)
    return rounds


def run_protocol(files: np.ndarray, f: int, channel: ChannelConfig, params: SystemParams,
                 rng: np.random.Generator, max_stages: int = 4,
                 storage: EncodedStorage | None = None, check_channel: bool = True) -> ProtocolResult:
    """Retrieve file ``f`` (1-based).

    Stage 1 runs the k banded rounds.  If stripes are still short of
    equations, later stages re-ask only (stripe, coordinate) pairs not yet
    held.  ``file`` is ``None`` when the stage budget runs out.
    """
    if max_stages < 1:
        raise ValueError("max_stages must be at least 1")
    if check_channel:
        channel.validate(params)
    storage = storage or encode_storage(stripe_files(files, params), params)
    state = RetrievalState(params.beta)
    transcript: list[dict] = []
    code = params.storage_code()
    F = params.field
    for stage in range(1, max_stages + 1):
        if params.variant == "errored":
            plan = [None] if state.missing(params.k) else []
        elif stage == 1:
            plan = [band_requests(params, i) for i in range(1, params.k + 1)]
        else:
            plan = schedule_stage(state, params)
        if not plan:
            break
        for idx, req in enumerate(plan, start=1):
            i = min(idx, params.k)
            query = make_query(rng, params, f, i, req, stage)
            res, real = run_round(storage, query, channel, rng)
            if res.ok:
                for d, (c, v) in res.values.items():
                    state.add(d, 0 if c is None else c, v)
            transcript.append({
                "stage": stage, "round": idx,
                "requests": {str(d): c for d, c in query.requests.items()},
                "ranks": real.ranks(F),
                "erased": sorted(res.erased),
                "downloads": res.downloads,
                "recovered": sorted(res.values),
                "ok": res.ok, "reason": res.reason, "error_rank": res.error_rank,
            })
    if state.missing(params.k):
        return ProtocolResult(None, transcript, state)
    if params.variant == "errored":
        stripes = [[state.held[d][0]] for d in range(1, params.beta + 1)]
        return ProtocolResult(np.array(stripes, dtype=np.int64), transcript, state)
    stripes = []
    for d in range(1, params.beta + 1):
        coords = sorted(state.held[d])[: params.k]
        word = F.zeros(params.n)
        word[coords] = [state.held[d][c] for c in coords]
        stripes.append(code.message_of(word, coords))
    return ProtocolResult(np.array(stripes, dtype=np.int64), transcript, state)


def pir_rate(transcript: list[dict], params: SystemParams, retrieved: int | None = None) -> dict:
    """Counted rate (retrieved symbols / downloaded symbols) and closed form beta/n."""
    downloads = sum(r["downloads"] for r in transcript)
    if retrieved is None:
        retrieved = sum(len(r["recovered"]) for r in transcript)
    counted = Fraction(retrieved, downloads) if downloads else Fraction(0)
    return {"counted": counted, "closed_form": Fraction(params.beta, params.n)}


def colluder_view(rounds: list[QueryRound], servers, params: SystemParams) -> np.ndarray:
    """Query rows delivered to the given whole servers, stacked over rounds.

    Shape (rounds, len(servers)*rho, m*beta).  The lifting identity is constant
    and left out.
    """
    coords = [c for j in servers for c in params.coords_of(j)]
    if not coords:
        return np.zeros((len(rounds), 0, params.rows), dtype=np.int64)
    return np.stack([q.D_Q[coords] for q in rounds])


def transcript_json(result: ProtocolResult) -> str:
    """One JSON record per line, one line per round."""
    return "\n".join(json.dumps(r, sort_keys=True) for r in result.transcript)

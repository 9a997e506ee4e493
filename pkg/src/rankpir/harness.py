"""Experiments: closed-form probabilities, Monte Carlo estimates, decoder region scans."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy import stats

from .channel import ChannelConfig
from .ff import GF, FieldSpec, make_rng
from .pir import (build_selector, colluder_view, make_query, packed_query, query_space, run_protocol,
                  run_round, QueryRound)
from .storage import (ConfigError, EncodedStorage, SystemParams, encode_storage, load_files, random_files,
                      stripe_files)

KINDS = ("roundtrip", "success-probability", "rate-sweep", "privacy-test", "decoder-region")


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    params: SystemParams
    channel: ChannelConfig
    kind: str = "roundtrip"
    trials: int = 100
    seed: int = 0
    f: int = 1
    max_stages: int = 4
    outputs: dict = dc_field(default_factory=dict)
    files: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 1 <= self.f <= self.params.m:
            raise ConfigError(f"file index {self.f} outside [1, {self.params.m}]")
        self.channel.validate(self.params)

    def to_dict(self) -> dict:
        return {
            "field": self.params.field.spec.to_dict(),
            "params": self.params.to_dict(),
            "channel": self.channel.to_dict(),
            "experiment": {"kind": self.kind, "trials": self.trials, "seed": self.seed,
                           "f": self.f, "max_stages": self.max_stages, "outputs": self.outputs,
                           "files": self.files},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def config_from_dict(d: dict, **overrides) -> ExperimentConfig:
    """Build and validate a config; ``overrides`` replace experiment/params keys."""
    try:
        field = GF(FieldSpec.from_dict(d["field"]))
        pd = dict(d["params"])
        exp = dict(d.get("experiment", {}))
        for key in ("variant",):
            if overrides.get(key) is not None:
                pd[key] = overrides[key]
        for key in ("trials", "seed", "kind"):
            if overrides.get(key) is not None:
                exp[key] = overrides[key]
        params = SystemParams(field, **pd)
        ch = dict(d.get("channel", {}))
        if ch.get("seed") is None and exp.get("seed") is not None:
            ch["seed"] = exp["seed"]
        channel = ChannelConfig(**ch)
        return ExperimentConfig(params, channel, **exp)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config: {exc}") from exc


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {p} not found")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    return config_from_dict(d, **overrides)


# Built-in parameter sets.
PRESETS = {
    "example2": {
        "field": {"p": 2, "s": 3, "modulus": [1, 1, 0, 1]},
        "params": {"m": 3, "l": 3, "n": 3, "k": 2, "t": 1},
        "channel": {"mode": "uniform"},
        "experiment": {"kind": "success-probability", "trials": 100000, "seed": 2, "max_stages": 1},
    },
    "example3": {
        "field": {"p": 2, "s": 8, "modulus": [1, 0, 1, 1, 1, 0, 0, 0, 1]},
        "params": {"m": 4, "l": 4, "n": 8, "k": 3, "t": 2, "strict_privacy": False},
        "channel": {"mode": "diagonal"},
        "experiment": {"kind": "success-probability", "trials": 100000, "seed": 3, "max_stages": 1},
    },
    "errored": {
        "field": {"p": 2, "s": 8, "modulus": [1, 0, 1, 1, 1, 0, 0, 0, 1]},
        "params": {"m": 4, "l": 8, "n": 8, "k": 1, "t": 2, "variant": "errored", "eps": 1, "tau": 2},
        "channel": {"mode": "rank-profile"},
        "experiment": {"kind": "decoder-region", "trials": 1000, "seed": 4, "max_stages": 1},
    },
}


def trial_rngs(seed: int, trials: int):
    """Independent per-trial generators; results do not depend on execution order."""
    for child in np.random.SeedSequence(seed).spawn(trials):
        yield np.random.Generator(np.random.PCG64(child))


# -- closed forms ------------------------------------------------------------

def full_rank_bound(q: int, kappa: int) -> float:
    """Lower bound (1 - 1/q)^kappa on P(a random kappa x kappa matrix is invertible)."""
    return (1 - 1 / q) ** kappa


def full_rank_exact(q: int, kappa: int) -> float:
    return math.prod(1 - q ** -i for i in range(1, kappa + 1))


def p_delta(params: SystemParams, delta: int) -> float:
    """P(exactly ``delta`` stripes come back in one round), per-link scalar channels.

    A sub-server coordinate is lost when its uplink or downlink scalar is zero.
    Decoding needs every lost coordinate inside the beta-wide band; delta = 0
    collects everything else.
    """
    Q = params.field.order
    ok = (1 - 1 / Q) ** 2
    beta, n = params.beta, params.n
    if delta == 0:
        return 1 - sum(p_delta(params, d) for d in range(1, beta + 1))
    lost = beta - delta
    if not 0 <= lost < beta:
        return 0.0
    return math.comb(beta, lost) * (1 - ok) ** lost * ok ** (n - lost)


def p1_two_stripe(params: SystemParams) -> float:
    """Single-stripe probability for beta = 2, summed over which link fails:
    C(2,1) (p (1-p)^(n-1))^2 + 2 [2 p (1-p)^(n-1) (1-p)^n]  with p = 1/q^s."""
    p = 1 / params.field.order
    n = params.n
    return 2 * (p * (1 - p) ** (n - 1)) ** 2 + 2 * (2 * p * (1 - p) ** (n - 1) * (1 - p) ** n)


def closed_forms(params: SystemParams) -> dict:
    """Every closed form the analysis uses, keyed by a descriptive label."""
    Q, n, k = params.field.order, params.n, params.k
    out = {
        "full_rank_bound_n": full_rank_bound(Q, n),
        "failure_exp_2n_plus_k": 1 - (1 - 1 / Q) ** (2 * n + k),
        "failure_exp_2nk": 1 - (1 - 1 / Q) ** (2 * n * k),
        "p_all_links_one_round": (1 - 1 / Q) ** (2 * n),
        "rate_closed_form": Fraction(params.beta, n),
        "rate_interference": 1 - Fraction(params.interference_dim, n),
    }
    if params.variant == "errorfree":
        pd = {d: p_delta(params, d) for d in range(params.beta + 1)}
        for d, v in pd.items():
            out[f"p_delta_{d}"] = v
        out["average_rate"] = sum(v * d for d, v in pd.items()) / n
        if params.beta == 2:
            out["p1_two_stripe"] = p1_two_stripe(params)
            out["average_rate_two_stripe"] = (out["p_all_links_one_round"] * 2 + p1_two_stripe(params)) / n
    else:
        out["rate_errored"] = Fraction(n - k - params.collusion - 2 * params.eps - params.tau + 1, n)
    return out


# -- results -----------------------------------------------------------------

@dataclass
class ResultRow:
    digest: str
    metric: str
    value: float
    trials: int = 0
    stderr: float | None = None
    closed_form: float | None = None
    label: str = ""
    runtime: float = 0.0

    @property
    def within_3sigma(self) -> bool | None:
        if self.closed_form is None:
            return None
        if self.stderr is None:
            return self.value == self.closed_form
        # a zero-variance estimate only matches exactly
        band = 3 * self.stderr if self.stderr > 0 else 0.0
        return abs(self.value - self.closed_form) <= band

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["within_3sigma"] = self.within_3sigma
        return d


def binomial_row(digest, metric, hits, trials, closed=None, label="", runtime=0.0) -> ResultRow:
    p = hits / trials
    se = math.sqrt(max(p * (1 - p), 0.0) / trials)
    return ResultRow(digest, metric, p, trials, se, closed, label, runtime)


def mean_row(digest, metric, samples, closed=None, label="", runtime=0.0) -> ResultRow:
    x = np.asarray(samples, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return ResultRow(digest, metric, float(x.mean()), len(x), se, closed, label, runtime)


def write_rows(rows: list[ResultRow], path: str | Path | None, fmt: str = "csv") -> str:
    recs = [r.as_dict() for r in rows]
    for r in recs:
        for key, v in r.items():
            if isinstance(v, Fraction):
                r[key] = float(v)
    if fmt == "json":
        text = json.dumps(recs, indent=1, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        cols = list(recs[0]) if recs else ["digest", "metric", "value"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(recs)
        text = buf.getvalue()
    if path:
        Path(path).write_text(text)
    return text


# -- experiments -------------------------------------------------------------

def _setup(cfg: ExperimentConfig) -> tuple[np.ndarray, EncodedStorage]:
    """File set from the configured blob, else drawn from the experiment seed."""
    if cfg.files:
        files, F = load_files(Path(cfg.files).read_bytes())
        if F != cfg.params.field:
            raise ConfigError("file blob field differs from the configured field")
    else:
        files = random_files(make_rng(cfg.seed), cfg.params)
    try:
        X = stripe_files(files, cfg.params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return files, encode_storage(X, cfg.params)


def roundtrip(cfg: ExperimentConfig) -> list[ResultRow]:
    """Full retrievals with the configured stage budget; exact-recovery frequency and rate."""
    t0 = time.perf_counter()
    files, storage = _setup(cfg)
    hits, rates = 0, []
    for rng in trial_rngs(cfg.seed, cfg.trials):
        res = run_protocol(files, cfg.f, cfg.channel, cfg.params, rng, cfg.max_stages, storage)
        good = res.success and np.array_equal(res.file, files[cfg.f - 1])
        hits += good
        downloads = sum(r["downloads"] for r in res.transcript)
        rates.append(cfg.params.beta * cfg.params.k / downloads if good and downloads else 0.0)
    dt = time.perf_counter() - t0
    d = cfg.digest()
    rate = float(Fraction(cfg.params.beta, cfg.params.n))
    return [binomial_row(d, "exact_recovery", hits, cfg.trials, runtime=dt),
            mean_row(d, "counted_rate", rates, rate, "beta/n", dt)]


def monte_carlo(cfg: ExperimentConfig, protocol: bool = True, rounds: bool = True) -> list[ResultRow]:
    """Success probability of single-pass retrieval plus per-round stripe counts.

    Protocol rows run all k rounds without extra stages.  Round rows look at
    round 1 alone: frequency of delta returned stripes and the mean of delta/n.
    """
    params = cfg.params
    files, storage = _setup(cfg)
    cf = closed_forms(params)
    d = cfg.digest()
    rows = []
    if protocol:
        t0 = time.perf_counter()
        fails = 0
        for rng in trial_rngs(cfg.seed, cfg.trials):
            res = run_protocol(files, cfg.f, cfg.channel, params, rng, 1, storage, check_channel=False)
            fails += not (res.success and np.array_equal(res.file, files[cfg.f - 1]))
        dt = time.perf_counter() - t0
        rows.append(binomial_row(d, "failure", fails, cfg.trials, cf["failure_exp_2nk"],
                                 "1-(1-1/q^s)^(2nk)", dt))
        rows.append(ResultRow(d, "failure_closed_2n_plus_k", cf["failure_exp_2n_plus_k"],
                              label="1-(1-1/q^s)^(2n+k)"))
    if params.variant != "errorfree" or not rounds:
        return rows
    t0 = time.perf_counter()
    counts: Counter = Counter()
    realized = []
    for rng in trial_rngs(cfg.seed + 1, cfg.trials):
        q = make_query(rng, params, cfg.f, 1)
        res, _ = run_round(storage, q, cfg.channel, rng)
        good = {dl for dl, (c, v) in res.values.items()
                if v == storage.Y[params.beta * (cfg.f - 1) + dl - 1, c]}
        counts[len(good)] += 1
        realized.append(len(good) / params.n)
    dt = time.perf_counter() - t0
    for delta in range(params.beta, -1, -1):
        rows.append(binomial_row(d, f"round_p_delta_{delta}", counts[delta], cfg.trials,
                                 cf[f"p_delta_{delta}"], "per-link scalar model", dt))
    rows.append(mean_row(d, "round_average_rate", realized, cf["average_rate"], "sum P_delta delta/n", dt))
    if "p1_two_stripe" in cf:
        rows.append(ResultRow(d, "p1_two_stripe", cf["p1_two_stripe"], label="two-stripe P_1"))
        rows.append(ResultRow(d, "p2_all_links", cf["p_all_links_one_round"], label="(1-1/q^s)^(2n)"))
        rows.append(ResultRow(d, "average_rate_two_stripe", cf["average_rate_two_stripe"], label="(2 P_2 + P_1)/n"))
    return rows


def region_scan(cfg: ExperimentConfig, beyond: bool = True) -> list[ResultRow]:
    """Success frequency over every (errors, erasures) cell, split across up/downlink.

    Cells with 2*eps + tau <= d - 1 are expected to always succeed; the ring
    2*eps + tau = d is reported for information.
    """
    params = cfg.params
    if params.variant != "errored":
        raise ConfigError("region scan needs the errored variant")
    budget = 2 * params.eps + params.tau
    files, storage = _setup(cfg)
    d = cfg.digest()
    rows = []
    rate = Fraction(params.beta, params.n)
    top = budget + 1 if beyond else budget
    for e in range(top // 2 + 1):
        for tau in range(top - 2 * e + 1):
            if 2 * e + tau > params.l:
                continue
            t0 = time.perf_counter()
            hits, counted_ok, max_rank = 0, True, 0
            for idx, rng in enumerate(trial_rngs(cfg.seed + 1000 * e + tau, cfg.trials)):
                eu, tu = idx % (e + 1), (idx // (e + 1)) % (tau + 1)
                ch = ChannelConfig(cfg.channel.mode, eps_up=eu, eps_down=e - eu, tau_up=tu, tau_down=tau - tu)
                res = run_protocol(files, cfg.f, ch, params, rng, 1, storage, check_channel=False)
                good = res.success and np.array_equal(res.file, files[cfg.f - 1])
                hits += good
                if good:
                    downloads = sum(r["downloads"] for r in res.transcript)
                    counted_ok &= Fraction(params.beta, downloads) == rate
                    max_rank = max(max_rank, max(r["error_rank"] for r in res.transcript))
            inside = 2 * e + tau <= budget
            row = binomial_row(d, f"region_eps{e}_tau{tau}", hits, cfg.trials, 1.0 if inside else None,
                               "inside" if inside else "outside", time.perf_counter() - t0)
            row.label += f";counted_rate_exact={counted_ok};max_error_rank={max_rank}"
            rows.append(row)
    return rows


def rate_rows(cfg: ExperimentConfig) -> list[ResultRow]:
    """Closed-form rates next to the counted rate of one identity-channel retrieval."""
    params = cfg.params
    files, storage = _setup(cfg)
    res = run_protocol(files, cfg.f, ChannelConfig(), params, make_rng(cfg.seed), 1, storage)
    downloads = sum(r["downloads"] for r in res.transcript)
    counted = Fraction(params.beta * params.k, downloads)
    cf = closed_forms(params)
    d = cfg.digest()
    return [ResultRow(d, "counted_rate", counted, 1, None, cf["rate_closed_form"], "beta/n"),
            ResultRow(d, "rate_interference", cf["rate_interference"], label="1-(k+t*rho-1)/n")]


# -- privacy -----------------------------------------------------------------

def collusion_sets(params: SystemParams):
    return list(itertools.combinations(range(params.l), params.t))


def _random_inputs(params: SystemParams):
    """All random inputs of the query generator (as flat tuples) and the map to D."""
    F = params.field
    if params.query_code == "aligned":
        basis = query_space(params)
        shape = (params.rows, basis.shape[0])
        alphabet = range(F.order)
        to_D = lambda U: F.matmul(U, basis)  # noqa: E731
    else:
        shape = (params.rows, params.collusion)
        alphabet = range(F.p)
        to_D = lambda U: packed_query(U, params)  # noqa: E731
    n_in = shape[0] * shape[1]
    if len(alphabet) ** n_in > 2 ** 20:
        raise ValueError("too many random inputs for exhaustive enumeration")
    for flat in itertools.product(alphabet, repeat=n_in):
        yield to_D(np.array(flat, dtype=np.int64).reshape(shape))


def exhaustive_views(params: SystemParams, f: int, i: int, servers) -> Counter:
    """Exact distribution of what ``servers`` see in round i for file f."""
    E = build_selector(f, i, params)
    F = params.field
    dist: Counter = Counter()
    for D in _random_inputs(params):
        q = QueryRound(f, i, {}, D, E, F.add(D.T, E))
        dist[colluder_view([q], servers, params).tobytes()] += 1
    return dist


def exhaustive_privacy(params: SystemParams) -> bool:
    """True when every whole-server collusion set sees identical distributions for all files."""
    for i in range(1, params.k + 1):
        for S in collusion_sets(params):
            ref = exhaustive_views(params, 1, i, S)
            for f in range(2, params.m + 1):
                if exhaustive_views(params, f, i, S) != ref:
                    return False
    return True


def chisquare_privacy(params: SystemParams, trials: int, seed: int, servers=None,
                      files=(1, 2), i: int = 1) -> tuple[float, float]:
    """Chi-square homogeneity test of (position, symbol) frequencies seen by colluders.

    Returns (statistic, p-value); identical marginals should not be rejected.
    """
    servers = servers if servers is not None else collusion_sets(params)[0]
    counts = []
    for f in files:
        views = []
        for rng in trial_rngs(seed + f, trials):
            q = make_query(rng, params, f, i)
            views.append(colluder_view([q], servers, params)[0].ravel())
        V = np.array(views)
        # one column per (position, symbol) cell
        order = params.field.order
        cell = V + order * np.arange(V.shape[1])[None, :]
        counts.append(np.bincount(cell.ravel(), minlength=order * V.shape[1]))
    table = np.array(counts)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 0.0, 1.0
    res = stats.chi2_contingency(table)
    return float(res.statistic), float(res.pvalue)

"""Command-line driver: ``rankpir <command> [options]``.

Exit status: 0 on success, 1 on a configuration error, 2 when ``--check``
finds a result that disagrees with its expected value.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .channel import ChannelConfig
from .ff import GF, FieldSpec, make_rng
from .gabidulin import GabidulinCode, star_code
from .pir import run_protocol
from .storage import ConfigError, random_files

DEFAULT_PRESET = {
    "roundtrip": "example2",
    "prob": "example2",
    "privacy": "example2",
    "region": "errored",
    "rate": "example2",
}

KIND = {
    "roundtrip": "roundtrip",
    "prob": "success-probability",
    "privacy": "privacy-test",
    "region": "decoder-region",
    "rate": "rate-sweep",
}

STAR_GOLDEN = [
    ["1", "a", "a^2", "a^3", "a^4"],
    ["1", "a^2", "a^4", "a^3+a", "a^3+a^2+1"],
    ["1", "a^4", "a^3+a^2+1", "a^3+a^2+a", "a^4+a^3+a+1"],
    ["1", "a^3+a^2+1", "a^4+a^3+a+1", "a^4+a^3+a^2+a", "a"],
]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rankpir", description="PIR over Gabidulin-coded storage and network channels")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("roundtrip", "prob", "privacy", "region", "rate", "examples"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="experiment JSON file")
        sp.add_argument("--preset", choices=sorted(harness.PRESETS), help="built-in configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out", help="write results here")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--variant", choices=("errorfree", "errored"))
        sp.add_argument("--check", action="store_true", help="exit 2 if a result misses its expected value")
    return ap


def _config(args) -> harness.ExperimentConfig:
    over = {"seed": args.seed, "trials": args.trials, "variant": args.variant, "kind": KIND[args.command]}
    if args.config:
        return harness.load_config(args.config, **over)
    preset = harness.PRESETS[args.preset or DEFAULT_PRESET[args.command]]
    return harness.config_from_dict(preset, **over)


def _emit(rows, args) -> None:
    text = harness.write_rows(rows, args.out, args.format)
    sys.stdout.write(text)


def cmd_roundtrip(args) -> bool:
    cfg = _config(args)
    rows = harness.roundtrip(cfg)
    _emit(rows, args)
    return rows[0].value == 1.0 and rows[1].within_3sigma


def cmd_prob(args) -> bool:
    cfg = _config(args)
    rows = harness.monte_carlo(cfg)
    _emit(rows, args)
    return all(r.within_3sigma is not False for r in rows)


def cmd_privacy(args) -> bool:
    cfg = _config(args)
    d = cfg.digest()
    stat, pval = harness.chisquare_privacy(cfg.params, cfg.trials, cfg.seed)
    rows = [harness.ResultRow(d, "chi2_statistic", stat, cfg.trials),
            harness.ResultRow(d, "chi2_pvalue", pval, cfg.trials, label="reject below 0.01")]
    try:
        same = harness.exhaustive_privacy(cfg.params)
        rows.append(harness.ResultRow(d, "exhaustive_identical", float(same), closed_form=1.0))
    except ValueError:
        pass
    _emit(rows, args)
    return pval >= 0.01 and all(r.within_3sigma is not False for r in rows)


def cmd_region(args) -> bool:
    cfg = _config(args)
    rows = harness.region_scan(cfg)
    _emit(rows, args)
    return all(r.value == 1.0 and "counted_rate_exact=True" in r.label
               for r in rows if r.closed_form is not None)


def cmd_rate(args) -> bool:
    cfg = _config(args)
    rows = harness.rate_rows(cfg)
    _emit(rows, args)
    return rows[0].value == rows[0].closed_form


def cmd_examples(args) -> bool:
    """Star-product generator matrix and the example2/example3 preset numbers."""
    ok = True
    F32 = GF(FieldSpec(2, 1, 5, (1, 0, 1, 0, 0, 1)))
    C, D = GabidulinCode.default(F32, 5, 3), GabidulinCode.default(F32, 5, 2)
    G = star_code(C, D).generator_matrix()
    got = [[F32.fmt(x) for x in row] for row in G]
    print("star product G(5,3)*G(5,2) over GF(2^5), z^5+z^2+1:")
    for row in got:
        print("  " + " | ".join(row))
    ok &= got == STAR_GOLDEN

    F8 = GF(FieldSpec(2, 1, 3, (1, 1, 0, 1)))
    GC = GabidulinCode.default(F8, 3, 2).generator_matrix()
    gc = [[F8.fmt(x) for x in row] for row in GC]
    print("example2 storage generator G(3,2) over GF(8):", gc)
    ok &= gc == [["1", "a", "a^2"], ["1", "a^2", "a^2+a"]]

    seed = 0 if args.seed is None else args.seed
    for name, rate in (("example2", 1 / 3), ("example3", 1 / 4)):
        cfg = harness.config_from_dict(harness.PRESETS[name], seed=seed)
        P = cfg.params
        files = random_files(make_rng(seed), P)
        res = run_protocol(files, 1, ChannelConfig(), P, make_rng(seed + 1), 1)
        exact = res.success and np.array_equal(res.file, files[0])
        downloads = sum(r["downloads"] for r in res.transcript)
        counted = P.beta * P.k / downloads
        cf = harness.closed_forms(P)
        note = "" if P.strict_privacy else " [aligned queries, privacy check off]"
        print(f"{name}{note}: identity-channel recovery={exact} rounds={len(res.transcript)} "
              f"rate={counted:.6f} (expected {rate:.6f})")
        ok &= exact and abs(counted - rate) < 1e-12 and len(res.transcript) == P.k
        print(f"  failure 1-(1-1/q^s)^(2nk) = {cf['failure_exp_2nk']:.9f}")
        print(f"  failure 1-(1-1/q^s)^(2n+k) = {cf['failure_exp_2n_plus_k']:.9f}")
        if name == "example2":
            ok &= abs(cf["failure_exp_2nk"] - 0.798582762) < 1e-9
        else:
            print(f"  P_2 = {cf['p_all_links_one_round']:.6f}  P_1 = {cf['p1_two_stripe']:.6f}  "
                  f"P_1 (per-link model) = {cf['p_delta_1']:.6f}  average rate = {cf['average_rate_two_stripe']:.6f}")
            ok &= abs(cf["p_all_links_one_round"] - 0.9394) < 5e-4
            ok &= abs(cf["p1_two_stripe"] - 0.015) < 5e-4 and abs(cf["average_rate_two_stripe"] - 0.24) < 5e-3
            ok &= abs(cf["p1_two_stripe"] - cf["p_delta_1"]) < 1e-12
            print(f"  rate 1-(k+t*rho-1)/n = {cf['rate_interference']}")
            ok &= cf["rate_interference"] == 0.25
    return ok


COMMANDS = {
    "roundtrip": cmd_roundtrip,
    "prob": cmd_prob,
    "privacy": cmd_privacy,
    "region": cmd_region,
    "rate": cmd_rate,
    "examples": cmd_examples,
}


def run_cli(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ok = COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if args.check and not ok:
        print("check failed", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

import itertools
import json
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from rankpir.channel import ChannelConfig, LinkRealization, transmit_downlink, transmit_uplink
from rankpir.ff import GF8, GF256, make_rng
from rankpir.gabidulin import GabidulinCode
from rankpir.pir import (RetrievalState, aggregate, build_random_part, build_selector,
                         colluder_view, lift_query, make_query, packed_query, pir_rate, query_space,
                         retrieve_round, run_protocol, run_round, schedule_stage, server_respond,
                         transcript_json)
from rankpir.storage import SystemParams, encode_storage, random_files, stripe_files

from conftest import GF4, GF16


@pytest.fixture
def ex2():
    return SystemParams(GF8, m=3, l=3, n=3, k=2, t=1)


@pytest.fixture
def ex3():
    return SystemParams(GF256, m=4, l=4, n=8, k=3, t=2, strict_privacy=False)


@pytest.fixture
def k1():
    # k = 1, beta = 3: aligned queries are private
    return SystemParams(GF16, m=4, l=4, n=4, k=1, t=1)


@pytest.fixture
def errored():
    return SystemParams(GF256, m=4, l=8, n=8, k=1, t=2, variant="errored", eps=1, tau=2)


def stored(params, seed=0):
    files = random_files(make_rng(seed), params)
    return files, encode_storage(stripe_files(files, params), params)


# -- selector / query -------------------------------------------------------

def test_selector_example2(ex2):
    E1 = build_selector(1, 1, ex2)
    want = np.zeros((3, 3), dtype=np.int64)
    want[0, 0] = 1
    assert np.array_equal(E1, want)
    E2 = build_selector(1, 2, ex2)
    assert E2[1, 0] == 1 and E2.sum() == 1


def test_selector_example3(ex3):
    E = build_selector(1, 1, ex3)
    assert E.shape == (8, 8)
    assert np.array_equal(E[:2, :2], np.eye(2, dtype=np.int64))
    assert E.sum() == 2


@pytest.mark.parametrize("i", [1, 2, 3])
def test_band_shifts(ex3, i):
    E = build_selector(2, i, ex3)
    assert sorted(np.nonzero(E.any(axis=1))[0]) == [i - 1, i]
    assert sorted(np.nonzero(E.any(axis=0))[0]) == [2, 3]


def test_selector_bad_indices(ex2):
    with pytest.raises(ValueError):
        build_selector(4, 1, ex2)
    with pytest.raises(ValueError):
        build_selector(1, 3, ex2)


def test_errored_selector_exponents(errored):
    E = build_selector(2, 1, errored)
    pts = np.array(errored.storage_code().points)
    # stripe delta picks z^(q^e) with e = beta - delta + t*rho
    for d in (1, 2):
        e = errored.beta - d + errored.collusion
        col = E[:, errored.beta + d - 1]
        assert np.array_equal(GF256.mul(col, pts), GF256.frobenius(pts, e))


def test_aligned_rows_keep_products_in_code(ex2, k1):
    for P in (ex2, k1):
        basis = query_space(P)
        K = GabidulinCode.default(P.field, P.n, P.interference_dim)
        C = P.storage_code()
        rng = make_rng(1)
        for _ in range(20):
            d = build_random_part(rng, P)[0]
            c = C.encode(P.field.random_matrix(rng, 1, P.k)[0])
            assert K.contains(P.field.mul(d, c))
        assert basis.shape[0] >= P.collusion


def test_packed_rows_are_codewords():
    P = SystemParams(GF256, m=4, l=4, n=8, k=3, t=2, query_code="gabidulin")
    D_code = GabidulinCode.default(GF256, 8, 4)
    rng = make_rng(2)
    for _ in range(100):
        D = build_random_part(rng, P)
        assert D.max() <= 1
        for row in GF256.compress(D):
            assert D_code.contains(row)


def test_packed_zero():
    P = SystemParams(GF256, m=4, l=4, n=8, k=3, t=2, query_code="gabidulin")
    assert not packed_query(np.zeros((8, 4), dtype=np.int64), P).any()


def test_packed_columns_uniform_exhaustive():
    P = SystemParams(GF4, m=2, l=2, n=2, k=1, t=1, query_code="gabidulin")
    for col in range(2):
        seen = Counter()
        for flat in itertools.product(range(2), repeat=2):
            D = packed_query(np.array(flat).reshape(2, 1), P)
            seen[int(GF4.compress(D)[0, col])] += 1
        assert seen == Counter({0: 1, 1: 1, 2: 1, 3: 1})


def test_lift_query(ex3):
    q = make_query(make_rng(3), ex3, 1, 1)
    Q = lift_query(q.D_Q, ex3)
    assert len(Q) == 4 and Q[0].shape == (2, 10)
    assert all(np.array_equal(Qj[:, :2], np.eye(2)) for Qj in Q)
    assert np.array_equal(np.vstack([Qj[:, 2:] for Qj in Q]), q.D_Q)


def test_lift_rho1(ex2):
    q = make_query(make_rng(4), ex2, 1, 1)
    Q = lift_query(q.D_Q, ex2)
    assert np.array_equal(Q[1], np.hstack([[1], q.D_Q[1]])[None, :])


# -- server / user ----------------------------------------------------------

def test_server_zero_storage(ex3):
    q = make_query(make_rng(5), ex3, 1, 1)
    P = server_respond(np.zeros((8, 2), dtype=np.int64), lift_query(q.D_Q, ex3)[0], GF256)
    assert not P[:, 4].any()


def test_server_silent_on_zero_query(ex2):
    assert server_respond(np.zeros((3, 1), dtype=np.int64), np.zeros((1, 4), dtype=np.int64), GF8) is None


def test_server_projection_identity(ex3):
    files, st = stored(ex3)
    q = make_query(make_rng(6), ex3, 1, 1)
    for j, Qj in enumerate(lift_query(q.D_Q, ex3)):
        P = server_respond(st.blocks[j], Qj, GF256)
        for loc, c in enumerate(ex3.coords_of(j)):
            want = GF256.vecsum(GF256.mul(q.D_Q[c], st.Y[:, c]))
            assert P[loc, 4] == want


def test_aggregate_missing_server(ex3):
    files, st = stored(ex3)
    q = make_query(make_rng(7), ex3, 1, 1)
    packets = [server_respond(st.blocks[j], Qj, GF256) for j, Qj in enumerate(lift_query(q.D_Q, ex3))]
    packets[2] = None
    agg = aggregate(packets, ex3)
    assert agg.erased == {4, 5}
    assert agg.R_rec.shape == (8, 17)


def test_aggregate_identity_layout(ex3):
    files, st = stored(ex3)
    q = make_query(make_rng(8), ex3, 1, 1)
    packets = [server_respond(st.blocks[j], Qj, GF256) for j, Qj in enumerate(lift_query(q.D_Q, ex3))]
    agg = aggregate(packets, ex3)
    assert np.array_equal(agg.R_rec[:, :8], np.eye(8))
    assert np.array_equal(agg.R_rec[:, 8:16], np.eye(8))
    assert not agg.erased


def test_example2_zero_downlink(ex2):
    files, st = stored(ex2)
    q = make_query(make_rng(9), ex2, 1, 1)
    ch = ChannelConfig(mode="rank-profile", rank_down=(1, 0, 1))
    res, _ = run_round(st, q, ch, make_rng(10))
    assert 1 in res.erased
    assert not res.ok


def test_band_arithmetic(ex3):
    files, st = stored(ex3)
    for i in (1, 2, 3):
        q = make_query(make_rng(i), ex3, 3, i)
        res, _ = run_round(st, q, ChannelConfig(mode="rank-profile"), make_rng(20 + i))
        assert res.ok
        for d, (c, v) in res.values.items():
            assert v == st.Y[ex3.beta * 2 + d - 1, i - 1 + d - 1]


def _degraded_link(params, coord, link="down"):
    F = params.field
    blocks = [np.eye(params.rho, dtype=np.int64) for _ in range(params.l)]
    j, loc = divmod(coord, params.rho)
    blocks[j] = blocks[j].copy()
    blocks[j][loc, loc] = 0
    eye = [np.eye(params.rho, dtype=np.int64) for _ in range(params.l)]
    return LinkRealization(eye, blocks) if link == "down" else LinkRealization(blocks, eye)


def _round_with(params, st, q, real):
    F = params.field
    packets = []
    for j, Qj in enumerate(lift_query(q.D_Q, params)):
        P = server_respond(st.blocks[j], transmit_uplink(Qj, real, j, F), F)
        packets.append(None if P is None else transmit_downlink(P, real, j, F))
    return retrieve_round(aggregate(packets, params), q, params)


def test_deficiency_inside_band_gives_one_stripe(ex3):
    files, st = stored(ex3)
    q = make_query(make_rng(11), ex3, 1, 1)
    for link in ("up", "down"):
        res = _round_with(ex3, st, q, _degraded_link(ex3, 1, link))
        assert res.ok and sorted(res.values) == [1]
        assert res.values[1][1] == st.Y[0, 0]


def test_deficiency_outside_band_fails(ex3):
    files, st = stored(ex3)
    q = make_query(make_rng(12), ex3, 1, 1)
    res = _round_with(ex3, st, q, _degraded_link(ex3, 5))
    assert not res.ok


# -- protocol ---------------------------------------------------------------

def test_example2_identity(ex2):
    files, st = stored(ex2)
    res = run_protocol(files, 1, ChannelConfig(), ex2, make_rng(13))
    assert res.success and np.array_equal(res.file, files[0])
    assert len(res.transcript) == 2
    rate = pir_rate(res.transcript, ex2)
    assert rate["counted"] == rate["closed_form"] == Fraction(1, 3)


def test_example3_identity(ex3):
    files, st = stored(ex3)
    res = run_protocol(files, 2, ChannelConfig(), ex3, make_rng(14))
    assert res.success and np.array_equal(res.file, files[1])
    rate = pir_rate(res.transcript, ex3)
    assert rate["counted"] == rate["closed_form"] == 0.25
    assert len(res.transcript) == 3


@pytest.mark.parametrize("name", ["ex2", "k1", "errored"])
def test_random_full_rank_roundtrip(name, request):
    P = request.getfixturevalue(name)
    files, st = stored(P, 15)
    for seed in range(100):
        f = seed % P.m + 1
        res = run_protocol(files, f, ChannelConfig(mode="rank-profile"), P, make_rng(seed), 1, st)
        assert res.success and np.array_equal(res.file, files[f - 1])


def test_literal_query_does_not_decode():
    P = SystemParams(GF8, m=3, l=3, n=3, k=2, t=1, query_code="gabidulin")
    files, st = stored(P, 16)
    good = 0
    for seed in range(30):
        res = run_protocol(files, 1, ChannelConfig(), P, make_rng(seed), 1, st)
        good += res.success and np.array_equal(res.file, files[0])
    assert good < 15


def test_staged_retrieval_recovers_and_never_repeats(ex2):
    files, st = stored(ex2, 17)
    recovered = 0
    for seed in range(60):
        res = run_protocol(files, 2, ChannelConfig(mode="uniform"), ex2, make_rng(seed), 4, st)
        pairs = [(d, c) for d, h in res.state.held.items() for c in h]
        assert len(pairs) == len(set(pairs))
        if res.success:
            recovered += 1
            assert np.array_equal(res.file, files[1])
    single = 0
    for seed in range(60):
        single += run_protocol(files, 2, ChannelConfig(mode="uniform"), ex2, make_rng(seed), 1, st).success
    assert recovered > single


def test_schedule_skips_held_pairs(ex3):
    state = RetrievalState(2)
    state.add(1, 0, 5)
    state.add(1, 1, 6)
    state.add(2, 1, 7)
    rounds = schedule_stage(state, ex3)
    asked = [(d, c) for r in rounds for d, c in r.items()]
    assert (1, 0) not in asked and (2, 1) not in asked
    assert Counter(d for d, _ in asked) == Counter({1: 1, 2: 2})
    for r in rounds:
        assert len(set(r.values())) == len(r)


def test_state_rejects_duplicates():
    state = RetrievalState(1)
    state.add(1, 0, 1)
    with pytest.raises(AssertionError):
        state.add(1, 0, 1)


def test_errored_region_corner(errored):
    files, st = stored(errored, 18)
    for eu, ed, tu, td in [(1, 1, 0, 0), (0, 0, 2, 2), (1, 0, 1, 1), (0, 1, 2, 0)]:
        ch = ChannelConfig(mode="rank-profile", eps_up=eu, eps_down=ed, tau_up=tu, tau_down=td)
        for seed in range(10):
            res = run_protocol(files, 4, ch, errored, make_rng(seed), 1, st)
            assert res.success and np.array_equal(res.file, files[3])
            assert res.transcript[0]["error_rank"] <= eu + ed


def test_errored_rate(errored):
    files, st = stored(errored, 19)
    res = run_protocol(files, 1, ChannelConfig(), errored, make_rng(0), 1, st)
    rate = pir_rate(res.transcript, errored)
    assert rate["counted"] == rate["closed_form"] == 2 / 8


def test_transcript_json(ex2):
    files, st = stored(ex2)
    res = run_protocol(files, 1, ChannelConfig(mode="uniform"), ex2, make_rng(3), 2, st)
    lines = transcript_json(res).splitlines()
    assert len(lines) == len(res.transcript)
    rec = json.loads(lines[0])
    assert {"stage", "round", "ranks", "erased", "downloads", "recovered"} <= set(rec)


# -- privacy ----------------------------------------------------------------

def test_colluder_view_empty(ex2):
    q = make_query(make_rng(0), ex2, 1, 1)
    assert colluder_view([q], [], ex2).shape == (1, 0, 3)


def test_colluder_view_rows(ex3):
    q = make_query(make_rng(0), ex3, 1, 1)
    v = colluder_view([q], [1, 3], ex3)
    assert np.array_equal(v[0], q.D_Q[[2, 3, 6, 7]])

import itertools

import numpy as np
import pytest

from rankpir.ff import GF8, GF256, make_rng
from rankpir.gabidulin import erasure_decode
from rankpir.storage import (ConfigError, SystemParams, dump_files, encode_storage, load_files, random_files,
                             stripe_files, stripe_row, sub_server_view, unstripe)

from conftest import GF16


@pytest.fixture
def ex2():
    return SystemParams(GF8, m=3, l=3, n=3, k=2, t=1)


@pytest.fixture
def ex3():
    return SystemParams(GF256, m=4, l=4, n=8, k=3, t=2, strict_privacy=False)


def test_derived_sizes(ex2, ex3):
    assert (ex2.rho, ex2.beta, ex2.mu) == (1, 1, 1)
    assert (ex3.rho, ex3.beta, ex3.mu) == (2, 2, 1)
    assert ex3.interference_dim == 6


@pytest.mark.parametrize("kw,msg", [
    (dict(m=3, l=2, n=3, k=2, t=1), "divide"),
    (dict(m=1, l=3, n=3, k=2, t=1), "s=3"),
    (dict(m=3, l=3, n=3, k=3, t=1), r"k \+ t"),
    (dict(m=3, l=3, n=3, k=2, t=4), "colluding"),
])
def test_invalid_params(kw, msg):
    with pytest.raises(ConfigError, match=msg):
        SystemParams(GF8, **kw)


def test_errorfree_rejects_budgets():
    with pytest.raises(ConfigError):
        SystemParams(GF8, m=3, l=3, n=3, k=2, t=1, eps=1)


def test_errored_beta():
    P = SystemParams(GF256, m=4, l=8, n=8, k=1, t=2, variant="errored", eps=1, tau=2)
    assert P.beta == 8 - 1 - 2 - 2 - 2 + 1
    assert P.response_dim == 4


def test_errored_needs_k1():
    with pytest.raises(ConfigError):
        SystemParams(GF256, m=8, l=8, n=8, k=2, t=1, variant="errored", eps=1, tau=0)


def test_strict_privacy_rejects_nonprivate_aligned_space():
    with pytest.raises(ConfigError, match="not private"):
        SystemParams(GF256, m=4, l=4, n=8, k=3, t=2)


def test_stripe_layout(ex3):
    files = random_files(make_rng(0), ex3)
    X = stripe_files(files, ex3)
    assert X.shape == (8, 3)
    for f, d in itertools.product(range(1, 5), range(1, 3)):
        assert np.array_equal(X[stripe_row(ex3, f, d)], files[f - 1, d - 1])
    assert np.array_equal(unstripe(X, ex3), files)


def test_stripe_single_row():
    P = SystemParams(GF8, m=3, l=3, n=3, k=2, t=1)
    files = random_files(make_rng(1), P)
    assert np.array_equal(stripe_files(files, P)[0], files[0, 0])


def test_stripe_shape_mismatch(ex2):
    with pytest.raises(ValueError):
        stripe_files(np.zeros((2, 1, 2), dtype=np.int64), ex2)


def test_encode_zero(ex3):
    st = encode_storage(np.zeros((8, 3), dtype=np.int64), ex3)
    assert not st.Y.any()


def test_blocks_and_views(ex3):
    files = random_files(make_rng(2), ex3)
    st = encode_storage(stripe_files(files, ex3), ex3)
    assert len(st.blocks) == 4 and st.blocks[0].shape == (8, 2)
    assert np.array_equal(np.hstack(st.blocks), st.Y)
    cols = np.stack([sub_server_view(st, c) for c in range(8)], axis=1)
    assert np.array_equal(cols, st.Y)
    assert np.array_equal(np.stack([sub_server_view(st, 2), sub_server_view(st, 3)], axis=1), st.block(1))
    with pytest.raises(IndexError):
        sub_server_view(st, 8)


def test_every_row_survives_n_minus_k_erasures(ex2):
    files = random_files(make_rng(3), ex2)
    X = stripe_files(files, ex2)
    st = encode_storage(X, ex2)
    code = ex2.storage_code()
    for row in range(ex2.rows):
        for erased in itertools.combinations(range(3), 1):
            assert np.array_equal(erasure_decode(code, st.Y[row], erased).message, X[row])


def test_any_k_views_determine_stripe():
    P = SystemParams(GF16, m=2, l=4, n=4, k=2, t=1)
    files = random_files(make_rng(4), P)
    X = stripe_files(files, P)
    st = encode_storage(X, P)
    code = P.storage_code()
    for coords in itertools.combinations(range(4), 2):
        assert np.array_equal(code.message_of(st.Y[0], coords), X[0])


def test_storage_overhead(ex3):
    files = random_files(make_rng(5), ex3)
    X = stripe_files(files, ex3)
    st = encode_storage(X, ex3)
    assert st.Y.size * ex3.k == X.size * ex3.n


def test_blob_roundtrip(ex3):
    files = random_files(make_rng(6), ex3)
    blob = dump_files(files, ex3.field)
    back, F = load_files(blob)
    assert F == ex3.field
    assert np.array_equal(back, files)


def test_blob_truncated(ex2):
    blob = dump_files(random_files(make_rng(7), ex2), ex2.field)
    with pytest.raises(ValueError):
        load_files(blob[:-1])


def test_random_files_seeded(ex2):
    assert np.array_equal(random_files(make_rng(9), ex2), random_files(make_rng(9), ex2))

import pytest

from rankpir.ff import GF, GF8, GF32, GF256, FieldSpec

ACCEPTANCE = pytest.StashKey[list]()

GF4 = GF(FieldSpec(2, 1, 2, (1, 1, 1)))
GF16 = GF(FieldSpec(2, 1, 4, (1, 1, 0, 0, 1)))
GF9 = GF(FieldSpec(3, 1, 2, (1, 0, 1)))


@pytest.fixture(params=[GF4, GF8, GF16, GF9], ids=["GF4", "GF8", "GF16", "GF9"])
def field(request):
    return request.param


@pytest.fixture
def gf8():
    return GF8


@pytest.fixture
def gf16():
    return GF16


@pytest.fixture
def gf32():
    return GF32


@pytest.fixture
def gf256():
    return GF256


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

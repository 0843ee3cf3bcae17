import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfmix.afunction import (
    AFunctionTable,
    AlphaRangeWarning,
    afun_quadrature,
    build_afun_table,
    cached_afun_table,
)
from tests.oracles import afun_oracle

# (w, alpha, A) from the nested-QUADPACK oracle in tests/oracles.py, frozen
ORACLE = [
    (1.0, 0.0, 3.078677852473497),
    (1.0, 0.0001, 3.079207551335553),
    (1.0, 0.003, 3.094051953000085),
    (1.0, 0.1, 3.509075872102412),
    (1.0, 1.0, 6.051145427947829),
    (1.0, 3.7, 10.643392085035716),
    (1.0, 100.0, 54.67136087868817),
    (1.0, 2500.0, 273.64383178385856),
    (1.0, 100000.0, 1730.7766706838831),
    (1.0, 1000000.0, 5473.20419807936),
    (22.166666666666668, 0.0, 0.39597469669939916),
    (22.166666666666668, 0.0001, 0.39617723219166345),
    (22.166666666666668, 0.003, 0.4019038624024402),
    (22.166666666666668, 0.1, 0.5680316313044319),
    (22.166666666666668, 1.0, 1.6382327950475841),
    (22.166666666666668, 3.7, 3.6127217794245596),
    (22.166666666666668, 100.0, 21.98365288890502),
    (22.166666666666668, 2500.0, 111.37474857169505),
    (22.166666666666668, 100000.0, 704.8695515354019),
    (22.166666666666668, 1000000.0, 2229.0299995684804),
]
W = 133 / 6


@pytest.fixture(scope="module")
def table():
    return build_afun_table(W, nodes=256)


@pytest.mark.parametrize("w, alpha, expected", ORACLE)
def test_matches_frozen_oracle(w, alpha, expected):
    assert afun_quadrature(w, alpha) == pytest.approx(expected, rel=1e-9)


def test_omega_reflection_invariance():
    assert afun_oracle(1.0, 1.0, sign=-1.0) == pytest.approx(afun_oracle(1.0, 1.0), rel=1e-9)


def test_monotone_smooth_between_1_and_100():
    a = np.geomspace(1, 100, 12)
    vals = np.array([afun_quadrature(W, x) for x in a])
    assert np.all(np.diff(vals) > 0)
    second = np.diff(np.log(vals), 2)
    assert np.max(np.abs(second)) < 0.1


def test_domain_errors():
    with pytest.raises(ValueError):
        afun_quadrature(0.0, 1.0)
    with pytest.raises(ValueError):
        afun_quadrature(1.0, -1.0)


def test_table_interpolation_accuracy(table):
    rng = np.random.default_rng(7)
    probes = np.exp(rng.uniform(np.log(1e-4), np.log(1e6), 20))
    direct = np.array([afun_quadrature(W, a) for a in probes])
    assert np.max(np.abs(table.A(probes) / direct - 1)) <= 1e-6


def test_table_derivative_consistent_with_values(table):
    interior = table.alpha_grid[5:-5:7]
    h = 1e-4
    fd = (table.A(interior * np.exp(h)) - table.A(interior * np.exp(-h))) / (interior * 2 * np.sinh(h))
    assert np.max(np.abs(table.dA(interior) / fd - 1)) <= 1e-4


def test_table_depends_on_mass_ratio(table):
    other = build_afun_table(1.0, nodes=64)
    assert not np.allclose(other.A(1.0), table.A(1.0))


def test_out_of_range_clamped_with_warning(table):
    with pytest.warns(AlphaRangeWarning):
        lo = table.A(1e-7)
    assert lo == pytest.approx(table.A_values[0])
    with pytest.warns(AlphaRangeWarning):
        d = table.dA(1e8)
    assert d == 0.0


def test_table_rejects_few_nodes():
    with pytest.raises(ValueError):
        build_afun_table(1.0, nodes=32)


def test_table_rejects_non_increasing_grid():
    with pytest.raises(ValueError):
        AFunctionTable(1.0, np.array([1.0, 1.0, 2.0]), np.ones(3), np.ones(3))


def test_save_load_and_cache(tmp_path, table):
    table.save(tmp_path / "t.bin")
    back = AFunctionTable.load(tmp_path / "t.bin")
    assert back.w == table.w
    assert np.array_equal(back.A_values, table.A_values)
    assert np.array_equal(back.dA_dalpha_values, table.dA_dalpha_values)
    first = cached_afun_table(2.0, tmp_path, nodes=64)
    assert len(list(tmp_path.glob("afun_*"))) == 1
    second = cached_afun_table(2.0, tmp_path, nodes=64)
    assert np.array_equal(first.A_values, second.A_values)


@settings(max_examples=20, deadline=None)
@given(st.floats(-4, 6))
def test_table_positive_and_increasing(table, log_alpha):
    a = 10.0**log_alpha
    assert table.A(a) > 0
    assert table.dA(a) > 0

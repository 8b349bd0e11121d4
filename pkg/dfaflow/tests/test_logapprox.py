"""
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ..logapprox import DEFAULT_LOG_CONFIG, LogTableConfig, LogTables, approx_exp2
from ..logapprox import approx_log2, approx_pow, get_log_tables, get_pow_function
from ..logapprox import oracle_pow, oracle_pow_wrapped, relative_error_bound
from ..utils import MASK32

VMAX = 2 ** 20


def test_log_table_config_validates_frac_bits():
    assert DEFAULT_LOG_CONFIG.frac_bits == 8
    assert DEFAULT_LOG_CONFIG.max_input == MASK32
    with pytest.raises(ValueError):
        LogTableConfig(frac_bits=0)
    with pytest.raises(ValueError):
        LogTableConfig(frac_bits=17)


def test_approx_log2_hard_coded_values():
    assert approx_log2(1) == 0
    assert approx_log2(1024) == 2560
    assert approx_log2(2) == 256


def test_approx_log2_of_1500_is_within_one_unit_of_oracle():
    q_oracle = int(round(np.log2(1500) * 2 ** 8))
    assert abs(approx_log2(1500) - q_oracle) <= 1


def test_approx_log2_error_bound_is_exhaustive_up_to_2_to_the_20():
    v = np.arange(1, VMAX + 1, dtype=np.int64)
    q = approx_log2(v)
    err = np.abs(q / 2.0 ** 8 - np.log2(v))
    assert np.all(err <= 1.25 * 2.0 ** -8)
    small = v < 2 ** 9
    assert np.all(err[small] <= 0.5 * 2.0 ** -8 + 1e-12)
    worst_units = err.max() * 2 ** 8
    assert 1.0 < worst_units <= 1.25
    q_oracle = np.round(np.log2(v) * 2 ** 8).astype(np.int64)
    assert np.all(np.abs(q - q_oracle) <= 1)


def test_scalar_and_vectorized_paths_agree():
    rng = np.random.RandomState(43)
    draws = rng.randint(1, MASK32, 5000, dtype=np.int64)
    v = np.concatenate((np.arange(1, 2000), draws))
    q_vec = approx_log2(v)
    assert np.all(q_vec == [approx_log2(int(x)) for x in v])
    for k in (1, 2, 3):
        w_vec = approx_pow(v, k)
        assert np.all(w_vec == [approx_pow(int(x), k) for x in v])


def test_approx_exp2_hard_coded_values():
    assert approx_exp2(0) == 1
    assert approx_exp2(2560) == 1024
    assert approx_exp2(32 * 256) == MASK32


def test_approx_exp2_inverts_approx_log2_of_1500():
    w = approx_exp2(approx_log2(1500))
    assert abs(w / 1500 - 1) <= 2 ** (2 * 2.0 ** -8) - 1


def test_approx_pow_hard_coded_values():
    assert approx_pow(0, 3) == 0
    assert approx_pow(1024, 2) == 1048576
    w = approx_pow(1500, 2)
    assert abs(w / 1500 ** 2 - 1) <= relative_error_bound(2)


def test_approx_pow_rejects_unsupported_power():
    with pytest.raises(ValueError):
        approx_pow(10, 4)


def test_powers_of_two_are_exact():
    for k in (1, 2, 3):
        for j in range(0, 32 // k):
            if j * k <= 31:
                assert approx_pow(2 ** j, k) == 2 ** (j * k), (j, k)


def test_approx_pow_relative_error_is_exhaustive_for_k1():
    v = np.arange(1, VMAX + 1, dtype=np.int64)
    w = approx_pow(v, 1)
    rel = np.abs(w / v - 1)
    assert np.all(rel <= relative_error_bound(1))


@pytest.mark.parametrize("k", [2, 3])
def test_approx_pow_relative_error_sampled_below_saturation(k):
    vmax = min(VMAX, int(MASK32 ** (1.0 / k)))
    rng = np.random.RandomState(k)
    v = np.concatenate((np.arange(1, 4096), rng.randint(1, vmax + 1, 50000)))
    w = approx_pow(v, k).astype(np.float64)
    rel = np.abs(w / v.astype(np.float64) ** k - 1)
    assert np.all(rel <= relative_error_bound(k))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_approx_pow_is_monotone(k):
    v = np.arange(0, VMAX + 1, dtype=np.int64)
    w = approx_pow(v, k)
    assert np.all(np.diff(w) >= 0)


def test_approx_pow_saturates():
    assert approx_pow(MASK32, 3) == MASK32
    assert approx_pow(2 ** 20, 2) == MASK32


def test_tables_are_deterministic():
    t1, t2 = LogTables(8), LogTables(8)
    assert np.array_equal(t1.log_table, t2.log_table)
    assert np.array_equal(t1.exp_table, t2.exp_table)
    assert get_log_tables(8) is get_log_tables(8)
    assert get_log_tables(4).log_table.size == 16


def test_oracle_pow():
    assert oracle_pow(400, 3) == 64000000
    assert oracle_pow(0, 1) == 0
    assert oracle_pow(65536, 2) == 4294967296
    assert oracle_pow_wrapped(65536, 2) == 0


def test_get_pow_function():
    assert get_pow_function(exact=True) is oracle_pow_wrapped
    pow_fn = get_pow_function(LogTableConfig(8))
    assert pow_fn(1500, 2) == approx_pow(1500, 2)


@settings(max_examples=300)
@given(
    st.integers(min_value=1, max_value=MASK32), st.integers(min_value=4, max_value=16)
)
def test_log2_error_bound_holds_for_every_precision(v, f):
    cfg = LogTableConfig(f)
    q = approx_log2(v, cfg)
    assert abs(q / 2.0 ** f - np.log2(v)) <= 1.25 * 2.0 ** -f

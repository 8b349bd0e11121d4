"""Lookup-table approximation of v, v^2 and v^3 in the log domain.

A value v >= 1 is represented by the fixed-point logarithm q = log2(v) * 2^f:
the integer part is the index of the most significant bit of v, the fractional
part comes from a 2^f-entry table indexed by the top f mantissa bits. Powers are
computed as exp2(k * q) with a second 2^f-entry mantissa table and a shift.
Both directions saturate at 2^32 - 1, the width of a data-plane register.

Every operation accepts either a Python int (used per packet) or an ndarray
(used for exhaustive checks).

"""
import functools
from collections import namedtuple

import numpy as np

from .utils import MASK32

EXP_FRAC_BITS = 30
MAX_FRAC_BITS = 16
POWERS = (1, 2, 3)


class LogTableConfig(namedtuple("LogTableConfig", ["frac_bits", "max_input"])):
    """Parameters of the log/exp lookup tables.

    Parameters
    ----------
    frac_bits : int, optional
        Number of fractional bits f of the fixed-point logarithm. Default is 8.

    max_input : int, optional
        Largest representable input. Default is 2^32 - 1.

    """

    __slots__ = ()

    def __new__(cls, frac_bits=8, max_input=MASK32):
        if not 1 <= frac_bits <= MAX_FRAC_BITS:
            msg = "frac_bits = {0} but accepted values are 1..{1}"
            raise ValueError(msg.format(frac_bits, MAX_FRAC_BITS))
        return super().__new__(cls, frac_bits, max_input)


DEFAULT_LOG_CONFIG = LogTableConfig()


class LogTables:
    """Pair of precomputed mantissa tables for one value of frac_bits."""

    def __init__(self, frac_bits):
        self.frac_bits = frac_bits
        n = 1 << frac_bits
        m = np.arange(n, dtype=np.float64)
        self.log_table = np.rint(np.log2(1.0 + m / n) * n).astype(np.int64)
        self.exp_table = np.rint(2.0 ** (m / n) * 2 ** EXP_FRAC_BITS).astype(np.int64)
        self._log = self.log_table.tolist()
        self._exp = self.exp_table.tolist()

    def log2(self, v):
        f = self.frac_bits
        msb = v.bit_length() - 1
        if msb <= f:
            top = v << (f - msb)
        else:
            shift = msb - f
            top = (v >> shift) + ((v >> (shift - 1)) & 1)
            if top >> (f + 1):
                top >>= 1
                msb += 1
        return (msb << f) + self._log[top - (1 << f)]

    def exp2(self, q):
        f = self.frac_bits
        e = q >> f
        if e >= 32:
            return MASK32
        mant = self._exp[q & ((1 << f) - 1)]
        if e >= EXP_FRAC_BITS:
            val = mant << (e - EXP_FRAC_BITS)
        else:
            s = EXP_FRAC_BITS - e
            val = (mant + (1 << (s - 1))) >> s
        return val if val < MASK32 else MASK32

    def pow(self, v, k):
        if v == 0:
            return 0
        return self.exp2(k * self.log2(v))

    def log2_array(self, v):
        f = self.frac_bits
        v = np.asarray(v, dtype=np.int64)
        msb = np.frexp(v.astype(np.float64))[1].astype(np.int64) - 1
        shift = msb - f
        left = np.clip(-shift, 0, None)
        right = np.clip(shift, 0, None)
        rbit = np.where(shift > 0, (v >> np.maximum(right - 1, 0)) & 1, 0)
        top = np.where(shift <= 0, v << left, (v >> right) + rbit)
        carry = (top >> (f + 1)).astype(np.int64)
        top = top >> carry
        msb = msb + carry
        return (msb << f) + self.log_table[top - (1 << f)]

    def exp2_array(self, q):
        f = self.frac_bits
        q = np.asarray(q, dtype=np.int64)
        e = np.minimum(q >> f, 32)
        mant = self.exp_table[q & ((1 << f) - 1)]
        up = mant << np.clip(e - EXP_FRAC_BITS, 0, 2)
        s = np.clip(EXP_FRAC_BITS - e, 1, EXP_FRAC_BITS)
        down = (mant + (np.int64(1) << (s - 1))) >> s
        val = np.where(e >= EXP_FRAC_BITS, up, down)
        val = np.where(e >= 32, MASK32, np.minimum(val, MASK32))
        return val.astype(np.int64)

    def pow_array(self, v, k):
        v = np.asarray(v, dtype=np.int64)
        res = self.exp2_array(k * self.log2_array(np.maximum(v, 1)))
        return np.where(v == 0, 0, res)


@functools.lru_cache(maxsize=None)
def get_log_tables(frac_bits=DEFAULT_LOG_CONFIG.frac_bits):
    """Return the cached LogTables for frac_bits."""
    return LogTables(frac_bits)


def approx_log2(v, cfg=DEFAULT_LOG_CONFIG):
    """Fixed-point base-2 logarithm with cfg.frac_bits fractional bits.

    Parameters
    ----------
    v : int or ndarray
        Input value(s), 1 <= v <= 2^32 - 1

    cfg : LogTableConfig, optional

    Returns
    -------
    q : int or ndarray
        Approximation of log2(v) * 2^f. The dropped mantissa bits are rounded
        to nearest, so |q / 2^f - log2(v)| <= 1.25 * 2^-f, and the error is at
        most half a unit for v < 2^(f+1).

    Notes
    -----
    A table of 2^f entries indexed by the top f mantissa bits cannot hold the
    tighter 2^-f bound for every input: the rounded index and the rounded table
    entry each contribute up to half a unit, and the worst input below 2^20 at
    f = 8 lands about 1.16 units away. The bound stated above is the one that
    holds, and it still keeps q within one unit of round(log2(v) * 2^f).

    """
    tables = get_log_tables(cfg.frac_bits)
    if np.ndim(v):
        assert np.all(np.asarray(v) >= 1), "approx_log2 requires v >= 1"
        return tables.log2_array(v)
    assert v >= 1, "approx_log2 requires v >= 1, got {0}".format(v)
    return tables.log2(int(v))


def approx_exp2(q, cfg=DEFAULT_LOG_CONFIG):
    """Round-to-nearest of 2^(q / 2^f), saturating at 2^32 - 1.

    Parameters
    ----------
    q : int or ndarray
        Non-negative fixed-point exponent with cfg.frac_bits fractional bits

    cfg : LogTableConfig, optional

    Returns
    -------
    value : int or ndarray

    """
    tables = get_log_tables(cfg.frac_bits)
    if np.ndim(q):
        assert np.all(np.asarray(q) >= 0), "approx_exp2 requires q >= 0"
        return tables.exp2_array(q)
    assert q >= 0, "approx_exp2 requires q >= 0, got {0}".format(q)
    return tables.exp2(int(q))


def approx_pow(v, k, cfg=DEFAULT_LOG_CONFIG):
    """Register-width approximation of v^k computed as exp2(k * log2(v)).

    This is the addend accumulated into the k-th moment sum of a flow.

    Parameters
    ----------
    v : int or ndarray
        Input value(s) in 0 .. 2^32 - 1. Zero maps to zero.

    k : int
        Power, one of 1, 2, 3

    cfg : LogTableConfig, optional

    Returns
    -------
    w : int or ndarray
        Approximation of v^k, saturating at 2^32 - 1

    """
    _check_power(k)
    tables = get_log_tables(cfg.frac_bits)
    if np.ndim(v):
        return tables.pow_array(v, k)
    return tables.pow(int(v), k)


def oracle_pow(v, k):
    """Exact v^k with arbitrary precision."""
    _check_power(k)
    return int(v) ** k


def oracle_pow_wrapped(v, k):
    """Exact v^k reduced modulo 2^32, the addend used in exact mode."""
    return oracle_pow(v, k) & MASK32


def relative_error_bound(k, frac_bits=DEFAULT_LOG_CONFIG.frac_bits):
    """Bound on |approx_pow(v, k) / v^k - 1| before register wraparound."""
    return 2.0 ** ((k + 1) * 2.0 ** -frac_bits) - 1.0


def get_pow_function(cfg=DEFAULT_LOG_CONFIG, exact=False):
    """Return the addend function pow(v, k) used to update moment sums.

    Parameters
    ----------
    cfg : LogTableConfig, optional

    exact : bool, optional
        If True, return the exact oracle reduced modulo 2^32 instead of the
        lookup-table approximation. Default is False.

    """
    if exact:
        return oracle_pow_wrapped
    return get_log_tables(cfg.frac_bits).pow


def _check_power(k):
    if k not in POWERS:
        msg = "power k = {0} but accepted values are 1, 2 or 3"
        raise ValueError(msg.format(k))

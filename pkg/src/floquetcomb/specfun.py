"""Integer-order Bessel functions of the first kind.

Values are produced by Miller's backward recurrence, normalised with the
sum rule ``J_0^2 + 2 sum_k J_k^2 = 1``. The sign of the normalisation is
taken from the companion rule ``J_0 + 2 sum_k J_2k = 1``. For |x| < 1e-3 the
ascending series is used instead (the recurrence would overflow). Negative orders and
negative arguments are obtained from the reflection identities, never
computed independently, so

    J_{-m}(x) = (-1)^m J_m(x),   J_m(-x) = (-1)^m J_m(x)

hold bit-for-bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DomainError, NumericalError

#: Upper bound (exclusive) on |x| for which accuracy is guaranteed.
MAX_ARGUMENT = 1.0e4
#: Default truncation floor used to size Bessel series.
DEFAULT_FLOOR = 1.0e-14

_BIG = 1.0e100
_SMALL = 1.0e-100
#: below this |x| the ascending series is exact to rounding
_SERIES_BELOW = 1.0e-3


@njit(cache=True)
def _miller(order_max, x):
    """J_0..J_order_max at x > 0 via backward recurrence."""
    top = max(order_max, int(math.ceil(x)))
    start = top + 20 + int(math.sqrt(40.0 * top))
    if start % 2 == 1:
        start += 1
    vals = np.zeros(start + 2)
    vals[start + 1] = 0.0
    vals[start] = 1.0e-300
    two_over_x = 2.0 / x
    for k in range(start, 0, -1):
        vals[k - 1] = k * two_over_x * vals[k] - vals[k + 1]
        if abs(vals[k - 1]) > _BIG:
            for j in range(k - 1, start + 2):
                vals[j] *= _SMALL
    peak = 0.0
    for k in range(start + 2):
        peak = max(peak, abs(vals[k]))
    for k in range(start + 2):
        vals[k] /= peak
    sum_sq = vals[0] * vals[0]
    sum_even = vals[0]
    for k in range(1, start + 1):
        sum_sq += 2.0 * vals[k] * vals[k]
        if k % 2 == 0:
            sum_even += 2.0 * vals[k]
    norm = math.sqrt(sum_sq)
    if sum_even < 0.0:
        norm = -norm
    out = np.empty(order_max + 1)
    for k in range(order_max + 1):
        out[k] = vals[k] / norm
    return out


def _small_argument(order_max: int, x: float) -> np.ndarray:
    """Three-term ascending series; the recurrence overflows for tiny x."""
    half = 0.5 * x
    q = half * half
    out = np.empty(order_max + 1)
    lead = 1.0
    for k in range(order_max + 1):
        if k:
            lead *= half / k
        out[k] = lead * (1.0 - q / (k + 1) * (1.0 - q / (2.0 * (k + 2))))
    return out


def _nonnegative_orders(order_max: int, x: float) -> np.ndarray:
    """J_k(x) for k = 0..order_max, any real x inside the working range."""
    if not np.isfinite(x) or abs(x) >= MAX_ARGUMENT:
        raise DomainError(f"Bessel argument {x!r} outside |x| < {MAX_ARGUMENT:g}")
    if x == 0.0:
        out = np.zeros(order_max + 1)
        out[0] = 1.0
        return out
    if abs(x) < _SERIES_BELOW:
        out = _small_argument(order_max, abs(float(x)))
    else:
        out = _miller(order_max, abs(float(x)))
    if x < 0.0:
        out[1::2] = -out[1::2]
    return out


@dataclass(frozen=True)
class BesselSeries:
    """J_m(argument) for every order m in [-L, L]."""

    order_max: int
    argument: float
    values: np.ndarray

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.order_max, self.order_max + 1)

    def __getitem__(self, m: int) -> float:
        if abs(m) > self.order_max:
            raise IndexError(f"order {m} outside [-{self.order_max}, {self.order_max}]")
        return float(self.values[m + self.order_max])

    def __len__(self) -> int:
        return len(self.values)

    def normalization(self) -> float:
        """Sum of squares over the stored range; 1 when the range is wide enough."""
        return float(np.sum(self.values**2))

    def tail(self) -> float:
        """Largest magnitude at the range edges."""
        return float(max(abs(self.values[0]), abs(self.values[-1])))


def bessel_range(order_max: int, x: float) -> BesselSeries:
    """Evaluate J_m(x) for all m in [-order_max, order_max] in one sweep."""
    if int(order_max) != order_max or order_max < 1:
        raise ValueError(f"order_max must be an integer >= 1, got {order_max!r}")
    order_max = int(order_max)
    pos = _nonnegative_orders(order_max, float(x))
    neg = pos[:0:-1].copy()
    neg[(order_max - np.arange(order_max)) % 2 == 1] *= -1.0
    return BesselSeries(order_max, float(x), np.concatenate([neg, pos]))


def bessel_j(m: int, x: float) -> float:
    """J_m(x) for integer m and real |x| < 1e4."""
    if int(m) != m:
        raise ValueError(f"order must be an integer, got {m!r}")
    m = int(m)
    value = float(_nonnegative_orders(max(abs(m), 1), float(x))[abs(m)])
    if m < 0 and m % 2:
        value = -value
    return value


def bessel_table(order_max: int, x: float) -> np.ndarray:
    """Plain array J_{-order_max..order_max}(x); convenience for hot loops."""
    return bessel_range(order_max, x).values


def auto_truncation(beta: float, floor: float = DEFAULT_FLOOR) -> int:
    """Smallest L >= 1 with |J_L(beta)| < floor and |J_{L+1}(beta)| < floor."""
    if not 0.0 < floor < 1.0:
        raise ValueError(f"floor must lie in (0, 1), got {floor!r}")
    span = int(abs(beta)) + 32
    while True:
        vals = np.abs(_nonnegative_orders(span + 1, float(beta)))
        if not np.all(np.isfinite(vals)):
            raise NumericalError(f"non-finite Bessel values at beta={beta!r}")
        small = vals < floor
        hits = np.nonzero(small[1:-1] & small[2:])[0]
        if hits.size:
            return int(hits[0]) + 1
        span *= 2

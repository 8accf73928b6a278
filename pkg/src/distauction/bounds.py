"""Closed forms for Rayleigh-rate assignment values.

Rates are ``log(1 + SNR)`` in nats with ``SNR ~ Exp(lam)``. The expected
``l``-th smallest of ``K`` rates has a finite alternating-binomial form in
terms of the exponential integral ``E1``; greedy and optimal-assignment
bounds are sums of these.

The alternating sums lose about ``log10(C(K, K/2))`` digits in double
precision, so for ``K <= EXACT_MAX_K`` they are evaluated in 40-digit
arithmetic, and for larger ``K`` by quadrature of the order-statistic
survival function. Both routes are exposed so they can be cross-checked.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import mpmath
import numpy as np
from scipy import integrate, special

from .channels import lambda_to_snr_db, make_rng, rate_sf
from .core import UNASSIGNED, Assignment, as_reward_matrix

EULER_GAMMA = 0.57721566490153286060651209008240243
ZETA2 = math.pi**2 / 6
EXACT_MAX_K = 25
_DPS = 40

_E1_SERIES_MAX = 1.0


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x - sum_{l>=1} (-x)^l / (l l!)
    total = 0.0
    term = 1.0
    for l in range(1, 200):
        term *= -x / l
        contrib = term / l
        total += contrib
        if abs(contrib) < 1e-17 * abs(total):
            break
    return -EULER_GAMMA - math.log(x) - total


def _e1_cf_scaled(x: float) -> float:
    # e^x E1(x) as the continued fraction 1/(x+1-1/(x+3-4/(x+5-...))), modified Lentz
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


def exp_integral_e1(x: float) -> float:
    """Exponential integral ``E1(x) = int_x^inf exp(-t)/t dt`` for ``x > 0``.

    Power series for ``x <= 1``, continued fraction above.
    """
    x = float(x)
    if not x > 0:
        raise ValueError(f"E1 is defined here for x > 0, got {x}")
    if x <= _E1_SERIES_MAX:
        return _e1_series(x)
    return math.exp(-x) * _e1_cf_scaled(x)


def exp_e1_scaled(x: float) -> float:
    """``exp(x) * E1(x)``, finite for large ``x`` where ``E1`` underflows."""
    x = float(x)
    if not x > 0:
        raise ValueError(f"E1 is defined here for x > 0, got {x}")
    if x <= _E1_SERIES_MAX:
        return math.exp(x) * _e1_series(x)
    return _e1_cf_scaled(x)


def e1_bracket(x: float) -> tuple[float, float]:
    """Classical bounds ``exp(-x) ln(1 + 2/x) / 2 < E1(x) < exp(-x) ln(1 + 1/x)``."""
    return 0.5 * math.exp(-x) * math.log1p(2.0 / x), math.exp(-x) * math.log1p(1.0 / x)


def harmonic(n: int) -> float:
    return math.fsum(1.0 / k for k in range(1, n + 1))


def harmonic2(n: int) -> float:
    return math.fsum(1.0 / (k * k) for k in range(1, n + 1))


def harmonic_exact(n: int) -> Fraction:
    return sum((Fraction(1, k) for k in range(1, n + 1)), Fraction(0))


def alternating_harmonic_sum(n: int) -> Fraction:
    """``sum_m C(n, m) (-1)^(m+1) / m`` in exact rationals (equals ``H_n``)."""
    return sum((Fraction(math.comb(n, m) * (-1) ** (m + 1), m) for m in range(1, n + 1)), Fraction(0))


def _check_order_args(l, K, lam):
    if not (isinstance(l, (int, np.integer)) and isinstance(K, (int, np.integer))):
        raise TypeError("l and K must be integers")
    if K < 1 or not 1 <= l <= K:
        raise ValueError(f"need 1 <= l <= K, got l={l}, K={K}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")


def _scaled_e1_mp(x):
    return mpmath.exp(x) * mpmath.e1(x)


def order_stat_sum(l: int, K: int, lam: float) -> float:
    """Alternating-binomial closed form of ``E[R_{l:K}]``, in extended precision."""
    _check_order_args(l, K, lam)
    with mpmath.workdps(_DPS):
        lam_mp = mpmath.mpf(lam)
        total = mpmath.mpf(0)
        for m in range(1, l + 1):
            j = K - l + m
            total += math.comb(l, m) * (-1) ** (m + 1) * mpmath.mpf(m) / j * _scaled_e1_mp(lam_mp * j)
        return float(math.comb(K, l) * total)


def order_stat_quadrature(l: int, K: int, lam: float) -> float:
    """``E[R_{l:K}] = int_0^inf P(R_{l:K} > y) dy`` by adaptive quadrature.

    ``P(R_{l:K} > y)`` is the probability that fewer than ``l`` of ``K``
    rates fall below ``y``, i.e. a regularized incomplete beta in the
    survival probability, which stays accurate in both tails.
    """
    _check_order_args(l, K, lam)

    def tail(y):
        return special.betainc(K - l + 1, l, rate_sf(y, lam))

    # beyond y_end every rate exceeds y with probability < exp(-800)
    y_end = math.log1p(800.0 / lam)
    # the mass sits near the K-quantile of the rate; split there for quad
    y_mid = math.log1p(math.log(K + 1.0) / lam)
    pts = sorted({min(y_mid * f, y_end * 0.999) for f in (0.25, 0.5, 1.0, 1.5, 2.0)})
    edges = [0.0] + pts + [y_end]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += integrate.quad(tail, a, b, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
    return total


def expected_order_stat(l: int, K: int, lam: float) -> float:
    """Expected ``l``-th smallest of ``K`` i.i.d. rates (``l = K`` is the max).

    Uses the extended-precision closed form for ``K <= 25`` and quadrature
    beyond.
    """
    if K <= EXACT_MAX_K:
        return order_stat_sum(l, K, lam)
    return order_stat_quadrature(l, K, lam)


def expected_max_rate(m: int, lam: float) -> float:
    return expected_order_stat(m, m, lam)


def _check_nk(N, K):
    if N < 1 or K < N:
        raise ValueError(f"need 1 <= N <= K, got N={N}, K={K}")


def greedy_expected_sum(N: int, K: int, lam: float) -> float:
    """Expected sum-rate ``L`` of the randomized greedy assignment.

    The ``i``-th user served picks the best of ``K - i + 1`` untouched
    channels, and his row is independent of which channels are gone, so his
    rate is distributed as the maximum of ``K - i + 1`` rates.
    """
    _check_nk(N, K)
    return math.fsum(expected_max_rate(m, lam) for m in range(K - N + 1, K + 1))


def optimal_upper_bound(N: int, K: int, lam: float) -> float:
    """``U = N E[max of K rates]``: every user on his own best channel."""
    _check_nk(N, K)
    return N * expected_max_rate(K, lam)


def optimal_upper_bound_quadrature(N: int, K: int, lam: float) -> float:
    _check_nk(N, K)
    return N * order_stat_quadrature(K, K, lam)


def greedy_assign(R, order) -> Assignment:
    """Serve users in ``order``; each takes his best remaining channel."""
    R = as_reward_matrix(R)
    n, k = R.shape
    free = np.ones(k, dtype=bool)
    mapping = np.full(n, UNASSIGNED, dtype=int)
    for u in order:
        if not free.any():
            break
        row = np.where(free, R[u], -np.inf)
        c = int(np.argmax(row))
        mapping[u] = c
        free[c] = False
    return Assignment.from_mapping(R, mapping)


def greedy_order(n_users: int, seed) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return rng.permutation(n_users)


def randomized_greedy(R, seed) -> Assignment:
    """Single-pass greedy assignment over a uniformly random user order."""
    R = as_reward_matrix(R)
    return greedy_assign(R, greedy_order(R.shape[0], seed))


@dataclass
class LowSnrGap:
    asymptotic_limit: float
    finite_bound: float
    upper_bound_low_snr: float
    lower_bound_low_snr: float


def low_snr_gap(N: int, lam: float) -> LowSnrGap:
    """Low-SNR (large ``lam``) control of the relative gap ``(U - L) / U``.

    ``asymptotic_limit = 1/H_N - 1/N``; ``finite_bound`` adds
    ``(H_N / lam)(1/8 + pi^2/54)``. The two intermediate fields are the
    first-order approximations ``U ~ N H_N / lam`` and
    ``L ~ sum_m [H_m/lam - (zeta(2) - H_m^(2))/(4 lam^2) - H_m^2/(4 lam^2)]``.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    H = harmonic(N)
    limit = 1.0 / H - 1.0 / N
    finite = limit + H / lam * (1.0 / 8.0 + math.pi**2 / 54.0)
    u_low = N / lam * H
    m = np.arange(1, N + 1)
    Hm = np.cumsum(1.0 / m)
    H2m = np.cumsum(1.0 / m**2)
    l_low = math.fsum(Hm / lam - (ZETA2 - H2m) / (4 * lam**2) - Hm**2 / (4 * lam**2))
    return LowSnrGap(limit, finite, u_low, l_low)


@dataclass
class HighSnrGap:
    exact_c: float
    closed_form_upper: float | None


def high_snr_constant_exact(N: int) -> float:
    """``lim_{lam -> 0} (U - L)`` as an exact alternating sum of logs."""
    if N < 1:
        raise ValueError("N must be >= 1")
    with mpmath.workdps(_DPS):
        first = sum(math.comb(N, m) * (-1) ** m * mpmath.log(m) for m in range(1, N + 1))
        second = sum(
            math.comb(m, j) * (-1) ** j * mpmath.log(j)
            for m in range(1, N + 1)
            for j in range(1, m + 1)
        )
        return float(N * first - second)


def high_snr_closed_form(N: int) -> float:
    """Closed-form estimate of the high-SNR constant; needs ``N >= 3``.

    It sits above the exact constant only for ``N >= 6``.
    """
    if N < 3:
        raise ValueError(f"closed form involves loglog(N-1) and needs N >= 3, got {N}")
    g = EULER_GAMMA
    return ((N - 1) * math.log(math.log(N - 1)) + g + 1.0 / math.log(N)
            + (N - 2) * (-math.log(math.log(2.0)) + g * (1.0 / math.log(N) - 1.0 / math.log(2.0))))


def high_snr_gap_constant(N: int) -> HighSnrGap:
    if N < 2:
        raise ValueError(f"high-SNR constant needs N >= 2, got {N}")
    return HighSnrGap(high_snr_constant_exact(N), high_snr_closed_form(N) if N >= 3 else None)


LOW_SNR_LAMBDA = 10.0
HIGH_SNR_LAMBDA = 0.01


@dataclass
class BoundReport:
    N: int
    K: int
    lam: float
    snr_db: float
    L: float
    U: float
    relative_gap: float
    low_snr: bool
    high_snr: bool

    CSV_FIELDS = ("N", "K", "lambda", "snr_db", "L", "U", "rel_gap")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    def csv_row(self) -> list:
        return [self.N, self.K, repr(self.lam), repr(self.snr_db), repr(self.L), repr(self.U),
                repr(self.relative_gap)]


def bound_report(N: int, K: int, lam: float) -> BoundReport:
    L = greedy_expected_sum(N, K, lam)
    U = optimal_upper_bound(N, K, lam)
    return BoundReport(N, K, float(lam), float(lambda_to_snr_db(lam)), L, U, (U - L) / U,
                       lam >= LOW_SNR_LAMBDA, lam <= HIGH_SNR_LAMBDA)

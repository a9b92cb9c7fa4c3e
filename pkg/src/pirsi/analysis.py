"""Exact closed forms: the selection distribution over the randomness index,
the achievable rates, and the conditional query probabilities a server
could observe.

Everything here is :class:`fractions.Fraction` arithmetic; there is no
floating point.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Sequence

from .core import Params, PirSiError, RangeError


class ClassificationError(PirSiError, ValueError):
    """A query vector whose support size the scheme can never emit."""


def binom(n: int, r: int) -> int:
    """``C(n, r)`` with the convention ``0`` outside ``0 <= r <= n``."""
    if r < 0 or n < 0 or r > n:
        return 0
    return comb(n, r)


@dataclass(frozen=True)
class SchemeDistribution:
    g: int
    r: tuple[Fraction, ...]  # r[k-1] is r_k, k = 1..g-1
    P: tuple[Fraction, ...]  # P[k] for k = 0..g-1

    def r_k(self, k: int) -> Fraction:
        if k == 0:
            return Fraction(1)
        return self.r[k - 1]


@functools.lru_cache(maxsize=256)
def compute_distribution(params: Params) -> SchemeDistribution:
    N, K, M, g = params.N, params.K, params.M, params.g
    ratio = Fraction(K, M + 1)
    r: list[Fraction] = []
    prev = Fraction(1)
    for k in range(1, g):
        prev = prev * (ratio - k) / k
        r.append(prev)
    P0 = 1 / (1 + sum((rk * (N - 1) ** k for k, rk in enumerate(r, start=1)), Fraction(0)))
    P = [P0] + [P0 * (N - 1) ** k * rk for k, rk in enumerate(r, start=1)]
    return SchemeDistribution(g=g, r=tuple(r), P=tuple(P))


def rate_R(params: Params) -> Fraction:
    """Demand symbols over expected downloaded symbols, ``(N-1)/(N-P_0)``."""
    P0 = compute_distribution(params).P[0]
    return Fraction(params.N - 1) / (params.N - P0)


def rate_Rstar(params: Params) -> Fraction:
    N, g = params.N, params.g
    return Fraction(N**g - N ** (g - 1), N**g - 1)


def rate_RL(params: Params) -> Fraction:
    """Rate of the two-step scheme that queries only ``L+1`` servers."""
    if not 1 <= params.L < params.N - 1:
        raise RangeError(
            f"two-step rate needs 1 <= L < N-1, got L={params.L}, N={params.N}; "
            "use rate_R when L = N-1"
        )
    return rate_R(params.with_servers(params.L + 1))


def expected_download(params: Params) -> Fraction:
    """Expected number of non-null answers per retrieval, ``N - P_0``."""
    return params.N - compute_distribution(params).P[0]


class Relation(str, enum.Enum):
    EQUAL = "equal"
    STRICTLY_GREATER = "strictly_greater"
    LESS = "less"  # never produced by a correct implementation


def compare_theorem2(params: Params) -> tuple[Fraction, Fraction, Relation]:
    R, Rs = rate_R(params), rate_Rstar(params)
    if R == Rs:
        rel = Relation.EQUAL
    elif R > Rs:
        rel = Relation.STRICTLY_GREATER
    else:
        rel = Relation.LESS
    return R, Rs, rel


@dataclass(frozen=True)
class RateReport:
    R: Fraction
    Rstar: Fraction
    divisible: bool
    expected_download_symbols: Fraction
    B_symbols: int


def rate_report(params: Params) -> RateReport:
    return RateReport(
        R=rate_R(params),
        Rstar=rate_Rstar(params),
        divisible=params.divisible,
        expected_download_symbols=expected_download(params),
        B_symbols=params.N - 1,
    )


@dataclass(frozen=True)
class SupportClass:
    kind: str  # "null" | "partial" | "full"
    k: int = 0

    def __str__(self) -> str:
        return f"Partial({self.k})" if self.kind == "partial" else self.kind.capitalize()


NULL = SupportClass("null")
FULL = SupportClass("full")


def classify_size(params: Params, size: int) -> SupportClass:
    K, M, g = params.K, params.M, params.g
    if size == 0:
        return NULL
    if size == K:
        return FULL
    k, rem = divmod(size, M + 1)
    if rem == 0 and 1 <= k <= g - 1:
        return SupportClass("partial", k)
    raise ClassificationError(
        f"support size {size} is not 0, K={K}, or a multiple k(M+1) with 1 <= k <= {g - 1}"
    )


def classify_support(params: Params, v: Sequence[int]) -> SupportClass:
    if len(v) != params.K:
        raise ClassificationError(f"vector has length {len(v)}, expected K={params.K}")
    if any(not 0 <= x <= params.N - 1 for x in v):
        raise ClassificationError(f"components of {list(v)} must lie in [0, {params.N - 1}]")
    return classify_size(params, sum(1 for x in v if x))


# Conditional probabilities P(Q_n = v* | W = W*) for a partial-support v*.
# Each helper takes the selection probabilities explicitly so that the
# balance conditions can be evaluated against perturbed distributions.


def prob_demand_inside(params: Params, P: Sequence[Fraction], k: int) -> Fraction:
    """``|supp(v*)| = k(M+1)`` and the demand lies in the support."""
    N, K, M = params.N, params.K, params.M
    num = binom(k * (M + 1) - 1, M)
    den = binom(K - 1, M) * binom(K - M - 1, (k - 1) * (M + 1))
    den *= (N - 1) ** ((k - 1) * (M + 1)) * (N - 1) ** M * N
    return P[k - 1] * Fraction(num, den)


def prob_demand_outside(params: Params, P: Sequence[Fraction], k: int) -> Fraction:
    """``|supp(v*)| = k(M+1)`` with ``k != g-1`` and the demand outside it."""
    N, K, M = params.N, params.K, params.M
    num = binom(K - 1 - k * (M + 1), M)
    den = binom(K - 1, M) * binom(K - M - 1, k * (M + 1)) * (N - 1) ** (k * (M + 1)) * N
    return P[k] * Fraction(num, den)


def prob_demand_outside_last(params: Params, P: Sequence[Fraction]) -> Fraction:
    """``|supp(v*)| = (g-1)(M+1)`` and the demand outside it."""
    N, K, M, g = params.N, params.K, params.M, params.g
    t = params.overlap
    num = binom((g - 1) * (M + 1), t)
    den = binom(K - 1, M) * (N - 1) ** (K - M - 1) * binom(M, t) * (N - 1) ** t * N
    return P[g - 1] * Fraction(num, den)


def closed_form_query_prob(
    params: Params,
    v: Sequence[int],
    W: int,
    P: Sequence[Fraction] | None = None,
) -> Fraction:
    """``P(Q_n = v | W)`` with ``S`` uniform over M-subsets avoiding ``W``."""
    if P is None:
        P = compute_distribution(params).P
    cls = classify_support(params, v)
    N, K, g = params.N, params.K, params.g
    if cls.kind == "null":
        return P[0] / N
    if cls.kind == "full":
        return P[g - 1] / ((N - 1) ** (K - 1) * N)
    k = cls.k
    if v[W - 1] != 0:
        return prob_demand_inside(params, P, k)
    if k != g - 1:
        return prob_demand_outside(params, P, k)
    return prob_demand_outside_last(params, P)


def verify_pk_conditions(params: Params, P: Sequence[Fraction] | None = None) -> bool:
    """Check that ``P`` balances the demand-inside and demand-outside
    probabilities at every partial support size."""
    if P is None:
        P = compute_distribution(params).P
    g = params.g
    if len(P) != g:
        return False
    for k in range(1, g - 1):
        if prob_demand_inside(params, P, k) != prob_demand_outside(params, P, k):
            return False
    if g >= 2 and prob_demand_inside(params, P, g - 1) != prob_demand_outside_last(params, P):
        return False
    return True


def perturbed_distribution(params: Params, index: int = 1, delta: Fraction = Fraction(1, 100)) -> tuple[Fraction, ...]:
    """``P`` with ``P[index] += delta``; a falsifiability control for the balance check."""
    P = list(compute_distribution(params).P)
    if index >= len(P):
        raise RangeError(f"P_{index} does not exist when g={params.g}")
    P[index] += delta
    return tuple(P)

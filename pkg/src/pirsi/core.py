"""Shared building blocks: prime-field symbols, protocol parameters, the
replicated message store, and demand/side-information instances.

Indices in the public API are 1-based (messages ``1..K``, sub-packets
``1..L``, servers ``1..N``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

#: Exact rational number used for every probability and rate.
Rat = Fraction


class PirSiError(Exception):
    """Base class for all errors raised by this package."""


class RangeError(PirSiError, ValueError):
    pass


class NonPrimeField(PirSiError, ValueError):
    pass


class SubpacketizationMismatch(PirSiError, ValueError):
    pass


class FieldMismatch(PirSiError, ValueError):
    pass


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    for d in range(3, math.isqrt(n) + 1, 2):
        if n % d == 0:
            return False
    return True


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class Params:
    """Protocol parameters for one PIR-SI deployment.

    ``g`` (the number of size-``M+1`` groups needed to cover ``K`` messages)
    is derived at construction.
    """

    N: int
    K: int
    M: int
    L: int
    q: int
    g: int = field(init=False)

    def __post_init__(self) -> None:
        if self.N <= 1:
            raise RangeError(f"need N > 1 servers, got N={self.N}")
        if self.K <= 1:
            raise RangeError(f"need K > 1 messages, got K={self.K}")
        if not 1 <= self.M <= self.K - 1:
            raise RangeError(f"need 1 <= M <= K-1, got M={self.M}, K={self.K}")
        if not 1 <= self.L <= self.N - 1:
            raise RangeError(f"need 1 <= L <= N-1, got L={self.L}, N={self.N}")
        if self.q < 2:
            raise RangeError(f"need q >= 2, got q={self.q}")
        if not is_prime(self.q):
            raise NonPrimeField(f"field order must be prime, got q={self.q}")
        g = ceil_div(self.K, self.M + 1)
        assert g >= 1 and 0 <= g * (self.M + 1) - self.K <= self.M
        object.__setattr__(self, "g", g)

    @property
    def divisible(self) -> bool:
        """True when ``M+1`` divides ``K``."""
        return self.K % (self.M + 1) == 0

    @property
    def overlap(self) -> int:
        """Number of side-information messages placed in the first vector
        on the last branch, ``g(M+1) - K``."""
        return self.g * (self.M + 1) - self.K

    def require_full_subpacketization(self) -> None:
        if self.L != self.N - 1:
            raise SubpacketizationMismatch(
                f"operation requires L = N-1 = {self.N - 1}, got L={self.L}"
            )

    def with_servers(self, N: int) -> "Params":
        return Params(N=N, K=self.K, M=self.M, L=self.L, q=self.q)

    def as_dict(self) -> dict[str, int]:
        return {"N": self.N, "K": self.K, "M": self.M, "L": self.L, "q": self.q}


def validate_params(N: int, K: int, M: int, L: int | None = None, q: int = 2) -> Params:
    """Build a validated :class:`Params`; ``L`` defaults to ``N-1``."""
    if L is None:
        L = N - 1
    return Params(N=N, K=K, M=M, L=L, q=q)


@dataclass(frozen=True)
class FieldElement:
    value: int
    q: int

    def __post_init__(self) -> None:
        if not 0 <= self.value < self.q:
            raise RangeError(f"{self.value} is not an element of F_{self.q}")

    def __add__(self, other: "FieldElement") -> "FieldElement":
        return field_add(self, other)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        return field_sub(self, other)

    def __int__(self) -> int:
        return self.value


def _check_same_field(x: FieldElement, y: FieldElement) -> None:
    if x.q != y.q:
        raise FieldMismatch(f"cannot combine elements of F_{x.q} and F_{y.q}")


def field_add(x: FieldElement, y: FieldElement) -> FieldElement:
    _check_same_field(x, y)
    return FieldElement((x.value + y.value) % x.q, x.q)


def field_sub(x: FieldElement, y: FieldElement) -> FieldElement:
    _check_same_field(x, y)
    return FieldElement((x.value - y.value) % x.q, x.q)


@dataclass(frozen=True)
class MessageDB:
    """``K x L`` store of symbols; ``entries[i-1][j-1]`` is ``X_{i,j}``."""

    params: Params
    entries: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        p = self.params
        if len(self.entries) != p.K or any(len(row) != p.L for row in self.entries):
            raise RangeError(f"database must be {p.K}x{p.L}")
        if any(not 0 <= x < p.q for row in self.entries for x in row):
            raise RangeError(f"database symbols must lie in [0, {p.q - 1}]")

    @classmethod
    def from_rows(cls, params: Params, rows: Iterable[Iterable[int]]) -> "MessageDB":
        return cls(params, tuple(tuple(int(x) for x in row) for row in rows))

    def symbol(self, i: int, j: int) -> int:
        if not (1 <= i <= self.params.K and 1 <= j <= self.params.L):
            raise IndexError(f"X_{{{i},{j}}} is outside a {self.params.K}x{self.params.L} store")
        return self.entries[i - 1][j - 1]

    def element(self, i: int, j: int) -> FieldElement:
        return FieldElement(self.symbol(i, j), self.params.q)

    def row(self, i: int) -> tuple[FieldElement, ...]:
        return tuple(self.element(i, j) for j in range(1, self.params.L + 1))

    def rows(self, indices: Iterable[int]) -> dict[int, tuple[int, ...]]:
        """Raw symbol rows for ``indices``; used to hand side information to a client."""
        return {i: self.entries[i - 1] for i in indices}


def make_rng(seed: int | np.random.SeedSequence | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def split_rng(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Independent child streams for concurrent sessions."""
    return list(rng.spawn(n))


def random_db(params: Params, seed: int | np.random.Generator) -> MessageDB:
    rng = make_rng(seed)
    arr = rng.integers(0, params.q, size=(params.K, params.L))
    return MessageDB.from_rows(params, arr.tolist())


@dataclass(frozen=True)
class DemandSideInfo:
    W: int
    S: frozenset[int]

    def __init__(self, W: int, S: Iterable[int]):
        object.__setattr__(self, "W", int(W))
        object.__setattr__(self, "S", frozenset(int(s) for s in S))
        if self.W in self.S:
            raise RangeError(f"demand {self.W} cannot be in the side information {sorted(self.S)}")

    def check(self, params: Params) -> None:
        if not 1 <= self.W <= params.K:
            raise RangeError(f"demand index {self.W} outside [1, {params.K}]")
        if len(self.S) != params.M:
            raise RangeError(f"side information must have M={params.M} elements, got {len(self.S)}")
        if any(not 1 <= s <= params.K for s in self.S):
            raise RangeError(f"side information {sorted(self.S)} outside [1, {params.K}]")

    def interference(self, K: int) -> tuple[int, ...]:
        """Messages that are neither demanded nor known, ascending."""
        return tuple(i for i in range(1, K + 1) if i != self.W and i not in self.S)


def all_demand_side_info(params: Params) -> list[DemandSideInfo]:
    from itertools import combinations

    out = []
    for W in range(1, params.K + 1):
        others = [i for i in range(1, params.K + 1) if i != W]
        for S in combinations(others, params.M):
            out.append(DemandSideInfo(W, S))
    return out


def random_demand_side_info(params: Params, rng: np.random.Generator) -> DemandSideInfo:
    W = int(rng.integers(1, params.K + 1))
    others = [i for i in range(1, params.K + 1) if i != W]
    S = rng.choice(others, size=params.M, replace=False)
    return DemandSideInfo(W, S.tolist())


def rat_str(x: Fraction) -> str:
    """``num/den`` rendering used in every machine-readable output."""
    return f"{x.numerator}/{x.denominator}"


def rat_display(x: Fraction, digits: int = 6) -> str:
    return f"{rat_str(x)} ({float(x):.{digits}f})"


def parse_rat(s: str) -> Fraction:
    return Fraction(s)


__all__: Sequence[str] = [
    "Rat",
    "PirSiError",
    "RangeError",
    "NonPrimeField",
    "SubpacketizationMismatch",
    "FieldMismatch",
    "Params",
    "validate_params",
    "FieldElement",
    "field_add",
    "field_sub",
    "MessageDB",
    "random_db",
    "make_rng",
    "split_rng",
    "DemandSideInfo",
    "all_demand_side_info",
    "random_demand_side_info",
    "rat_str",
    "rat_display",
    "parse_rat",
    "is_prime",
]

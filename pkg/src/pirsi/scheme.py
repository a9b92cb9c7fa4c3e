"""The retrieval protocol: randomized query plans, server answers, and
demand recovery.

A query to a server is a length-``K`` vector over ``[0, N-1]``. Component
``i`` equal to ``j != 0`` asks the server to add sub-packet ``X_{i,j}`` into
its answer; the all-zero vector asks for nothing and gets a null answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .analysis import compute_distribution
from .core import (
    DemandSideInfo,
    FieldElement,
    MessageDB,
    Params,
    PirSiError,
    RangeError,
)

MUTATIONS = ("fixed-b",)


class TranscriptMismatch(PirSiError, ValueError):
    pass


class QueryVector(tuple):
    """Immutable query vector; position ``i-1`` holds the selector for message ``i``."""

    __slots__ = ()

    def __new__(cls, comps: Iterable[int] = ()):
        return super().__new__(cls, (int(c) for c in comps))

    @classmethod
    def zeros(cls, K: int) -> "QueryVector":
        return cls((0,) * K)

    def support(self) -> frozenset[int]:
        return frozenset(i + 1 for i, c in enumerate(self) if c)

    def support_size(self) -> int:
        return sum(1 for c in self if c)

    def is_zero(self) -> bool:
        return not any(self)

    def to_json(self) -> list[int]:
        return list(self)

    def to_bytes(self) -> bytes:
        if any(c > 255 for c in self):
            raise ValueError("binary query form needs components < 256 (N <= 256)")
        return bytes(self)

    @classmethod
    def from_bytes(cls, data: bytes) -> "QueryVector":
        return cls(data)

    def __repr__(self) -> str:
        return "[" + ",".join(map(str, self)) + "]"


def merge(K: int, *parts: dict[int, int]) -> QueryVector:
    """Sum of vectors given as ``{message: sub-packet}`` maps with disjoint supports."""
    comps = [0] * K
    for part in parts:
        for i, j in part.items():
            assert comps[i - 1] == 0, f"supports collide at message {i}"
            comps[i - 1] = j
    return QueryVector(comps)


@dataclass(frozen=True)
class QueryPlan:
    """All client-side randomness for one retrieval.

    On the last branch (``I == g-1``) ``b`` is all-zero; otherwise ``b1`` and
    ``b2`` are all-zero. ``pi[n-1]`` is the index of the vector sent to server ``n``.
    """

    params: Params
    ds: DemandSideInfo
    I: int
    a: QueryVector
    b: QueryVector
    b1: QueryVector
    b2: QueryVector
    vectors: tuple[QueryVector, ...]
    pi: tuple[int, ...]

    @property
    def last_branch(self) -> bool:
        return self.I == self.params.g - 1

    @property
    def side_vector(self) -> QueryVector:
        """The side-information part cancelled during recovery (``b`` or ``b2``)."""
        return self.b2 if self.last_branch else self.b

    def with_pi(self, pi: Sequence[int]) -> "QueryPlan":
        return QueryPlan(
            self.params, self.ds, self.I, self.a, self.b, self.b1, self.b2, self.vectors, tuple(pi)
        )


def build_plan(
    params: Params,
    ds: DemandSideInfo,
    I: int,
    a: dict[int, int],
    side: dict[int, int],
    b1: dict[int, int] | None,
    pi: Sequence[int],
) -> QueryPlan:
    """Assemble ``v_1..v_N`` from explicit choices.

    ``side`` is ``b`` when ``I != g-1`` and ``b2`` otherwise; ``b1`` is only
    given on the last branch.
    """
    K, N, g, M = params.K, params.N, params.g, params.M
    W, S = ds.W, ds.S
    zero = QueryVector.zeros(K)
    interference = set(ds.interference(K))
    if not set(a) <= interference:
        raise RangeError(f"a must avoid demand and side information, got support {sorted(a)}")
    if any(not 1 <= j <= N - 1 for part in (a, side, b1 or {}) for j in part.values()):
        raise RangeError(f"nonzero selectors must lie in [1, {N - 1}]")
    if I != g - 1:
        if b1:
            raise RangeError("b1 is only used on the last branch")
        assert len(a) == I * (M + 1)
        assert set(side) == S
        base = merge(K, a)
        pair = (a, side)
        b_vec, b1_vec, b2_vec = merge(K, side), zero, zero
    else:
        b1 = b1 or {}
        assert set(a) == interference
        assert set(b1) <= S and len(b1) == params.overlap
        assert set(side) == S - set(b1)
        base = merge(K, a, b1)
        pair = (a, b1, side)
        b_vec, b1_vec, b2_vec = zero, merge(K, b1), merge(K, side)
    vectors = [base] + [merge(K, *pair, {W: n}) for n in range(1, N)]
    if sorted(pi) != list(range(1, N + 1)):
        raise RangeError(f"pi must be a permutation of 1..{N}, got {list(pi)}")
    return QueryPlan(params, ds, I, merge(K, a), b_vec, b1_vec, b2_vec, tuple(vectors), tuple(pi))


def _randbelow(rng: np.random.Generator, n: int) -> int:
    if n <= 1 << 63:
        return int(rng.integers(0, n, dtype=np.uint64)) if n > 1 else 0
    nbits = n.bit_length()
    nbytes = (nbits + 7) // 8
    while True:
        x = int.from_bytes(rng.bytes(nbytes), "little") >> (8 * nbytes - nbits)
        if x < n:
            return x


def sample_from(rng: np.random.Generator, probs: Sequence[Fraction]) -> int:
    """Index ``k`` drawn with exact probability ``probs[k]``."""
    den = math.lcm(*(p.denominator for p in probs))
    u = _randbelow(rng, den)
    acc = 0
    for k, p in enumerate(probs):
        acc += p.numerator * (den // p.denominator)
        if u < acc:
            return k
    raise ValueError("probabilities do not sum to 1")


def sample_I(params: Params, rng: np.random.Generator) -> int:
    return sample_from(rng, compute_distribution(params).P)


def _pick(rng: np.random.Generator, pool: Sequence[int], size: int) -> list[int]:
    if size == 0:
        return []
    return sorted(int(x) for x in rng.choice(pool, size=size, replace=False))


def _entries(rng: np.random.Generator, idx: Iterable[int], N: int, fixed: bool = False) -> dict[int, int]:
    idx = list(idx)
    if fixed:
        return {i: 1 for i in idx}
    vals = rng.integers(1, N, size=len(idx))
    return {i: int(v) for i, v in zip(idx, vals)}


def generate_plan(
    params: Params,
    ds: DemandSideInfo,
    rng: np.random.Generator,
    *,
    mutation: str | None = None,
) -> QueryPlan:
    """Draw a query plan for demand ``ds.W`` given side information ``ds.S``.

    ``mutation="fixed-b"`` pins the side-information selectors to 1; this
    breaks privacy and exists only as a control for the verifiers.
    """
    params.require_full_subpacketization()
    ds.check(params)
    if mutation is not None and mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}")
    fixed_b = mutation == "fixed-b"
    N, M, g = params.N, params.M, params.g
    I = sample_I(params, rng)
    interference = ds.interference(params.K)
    S = sorted(ds.S)
    if I != g - 1:
        a = _entries(rng, _pick(rng, interference, I * (M + 1)), N)
        side = _entries(rng, S, N, fixed_b)
        b1 = None
    else:
        a = _entries(rng, interference, N)
        b1_support = _pick(rng, S, params.overlap)
        b1 = _entries(rng, b1_support, N, fixed_b)
        side = _entries(rng, [s for s in S if s not in b1], N, fixed_b)
    pi = [int(x) + 1 for x in rng.permutation(N)]
    return build_plan(params, ds, I, a, side, b1, pi)


def queries_as_sent(plan: QueryPlan) -> tuple[QueryVector, ...]:
    return tuple(plan.vectors[p - 1] for p in plan.pi)


@dataclass(frozen=True)
class Answer:
    """A server reply; ``payload is None`` means the server sent nothing."""

    payload: FieldElement | None = None

    @property
    def is_null(self) -> bool:
        return self.payload is None

    def to_json(self) -> int | None:
        return None if self.payload is None else self.payload.value

    def to_bytes(self) -> bytes:
        if self.payload is None:
            return b"\x00"
        return b"\x01" + self.payload.value.to_bytes(symbol_width(self.payload.q), "big")

    @classmethod
    def from_bytes(cls, data: bytes, q: int) -> "Answer":
        if not data or data[0] not in (0, 1):
            raise ValueError(f"bad answer presence byte in {data!r}")
        if data[0] == 0:
            if len(data) != 1:
                raise ValueError("null answer must carry no payload")
            return cls(None)
        width = symbol_width(q)
        if len(data) != 1 + width:
            raise ValueError(f"answer payload must be {width} byte(s)")
        return cls(FieldElement(int.from_bytes(data[1:], "big"), q))


def symbol_width(q: int) -> int:
    """Bytes needed for one symbol of ``F_q``."""
    return max(1, ((q - 1).bit_length() + 7) // 8)


@dataclass(frozen=True)
class Transcript:
    """Queries as sent (``None`` for a server that was never queried) and answers as received."""

    queries: tuple[QueryVector | None, ...]
    answers: tuple[Answer, ...]

    @property
    def downloaded_symbols(self) -> int:
        return sum(1 for a in self.answers if not a.is_null)

    def to_json(self) -> list[dict]:
        return [
            {"server": n, "query": None if q is None else q.to_json(), "answer": a.to_json()}
            for n, (q, a) in enumerate(zip(self.queries, self.answers), start=1)
        ]


def server_answer(db: MessageDB, qv: Sequence[int]) -> Answer:
    p = db.params
    if len(qv) != p.K:
        raise ValueError(f"query has length {len(qv)}, expected K={p.K}")
    if not any(qv):
        return Answer(None)
    total = 0
    for i, j in enumerate(qv, start=1):
        if j:
            if j > p.L:
                raise IndexError(f"query asks for sub-packet {j} but L={p.L}")
            total += db.entries[i - 1][j - 1]
    return Answer(FieldElement(total % p.q, p.q))


def recover_demand(
    plan: QueryPlan,
    answers: Sequence[Answer],
    side_info: dict[int, Sequence[int]],
) -> list[FieldElement]:
    """Decode ``X_W`` from the servers' answers and the known rows ``side_info``.

    ``answers[n-1]`` is server ``n``'s reply; ``side_info`` maps each index in
    ``S`` to its raw symbol row.
    """
    p = plan.params
    N, q = p.N, p.q
    if len(answers) != N:
        raise TranscriptMismatch(f"expected {N} answers, got {len(answers)}")
    Y = [0] * (N + 1)
    for n, ans in enumerate(answers, start=1):
        Y[plan.pi[n - 1]] = 0 if ans.is_null else ans.payload.value
    known = sum(side_info[i][j - 1] for i, j in enumerate(plan.side_vector, start=1) if j)
    return [FieldElement((Y[j + 1] - Y[1] - known) % q, q) for j in range(1, N)]


def recovery_coefficients(plan: QueryPlan) -> list[list[int]]:
    """Coefficient of every sub-packet ``(i, l)`` in ``Y_{j+1} - Y_1 - K_j``.

    Returns one flattened ``K*L`` integer vector per ``j``; index
    ``(i-1)*L + (l-1)`` holds the coefficient of ``X_{i,l}``.
    """
    p = plan.params
    K, L = p.K, p.L

    def coeffs(v: Sequence[int], sign: int, out: list[int]) -> None:
        for i, j in enumerate(v, start=1):
            if j:
                out[(i - 1) * L + (j - 1)] += sign

    rows = []
    for j in range(1, p.N):
        c = [0] * (K * L)
        coeffs(plan.vectors[j], 1, c)
        coeffs(plan.vectors[0], -1, c)
        coeffs(plan.side_vector, -1, c)
        rows.append(c)
    return rows


def symbolic_recovery_ok(plan: QueryPlan) -> bool:
    """True iff each recovery combination is exactly the unit vector at ``(W, j)``."""
    L = plan.params.L
    for j, c in enumerate(recovery_coefficients(plan), start=1):
        target = (plan.ds.W - 1) * L + (j - 1)
        if any(x != (1 if idx == target else 0) for idx, x in enumerate(c)):
            return False
    return True


def two_step_retrieve(
    params: Params,
    ds: DemandSideInfo,
    rng: np.random.Generator,
) -> tuple[QueryPlan, tuple[int, ...]]:
    """Run the scheme on servers ``1..L+1`` only; the rest are never queried."""
    if params.L >= params.N - 1:
        raise RangeError(
            f"two-step retrieval needs L < N-1, got L={params.L}, N={params.N}; "
            "use generate_plan when L = N-1"
        )
    inner = params.with_servers(params.L + 1)
    return generate_plan(inner, ds, rng), tuple(range(1, params.L + 2))

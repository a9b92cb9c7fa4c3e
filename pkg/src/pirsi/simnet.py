"""In-memory deployment: replicated servers, a client session state machine,
and seeded Monte-Carlo download experiments.

Every query and answer crosses an in-memory channel as a byte frame, so the
wire encodings are exercised on every session. A frame is a one-byte type
followed by the payload::

    QUERY  (1) + K bytes, one selector per message
    ANSWER (2) + presence byte + symbol bytes if present
    NOQUERY(3)                 (two-step retrieval, server not used)
"""

from __future__ import annotations

import enum
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Literal

import numpy as np

from .analysis import compute_distribution
from .core import (
    DemandSideInfo,
    MessageDB,
    Params,
    PirSiError,
    RangeError,
    make_rng,
    random_demand_side_info,
)
from .scheme import (
    Answer,
    QueryPlan,
    QueryVector,
    Transcript,
    generate_plan,
    queries_as_sent,
    recover_demand,
    server_answer,
    two_step_retrieve,
)


class TransportError(PirSiError, RuntimeError):
    pass


class RecoveryMismatch(PirSiError, AssertionError):
    pass


class Frame(enum.IntEnum):
    QUERY = 1
    ANSWER = 2
    NOQUERY = 3


def encode_query(qv: QueryVector) -> bytes:
    return bytes([Frame.QUERY]) + qv.to_bytes()


def encode_noquery() -> bytes:
    return bytes([Frame.NOQUERY])


def encode_answer(ans: Answer) -> bytes:
    return bytes([Frame.ANSWER]) + ans.to_bytes()


def decode_query(frame: bytes, K: int) -> QueryVector | None:
    """The query carried by ``frame``, or ``None`` for a NOQUERY frame."""
    if not frame:
        raise TransportError("empty frame")
    if frame[0] == Frame.NOQUERY:
        if len(frame) != 1:
            raise TransportError("NOQUERY frame carries no payload")
        return None
    if frame[0] != Frame.QUERY or len(frame) != 1 + K:
        raise TransportError(f"malformed query frame {frame!r}")
    return QueryVector.from_bytes(frame[1:])


def decode_answer(frame: bytes, q: int) -> Answer:
    if not frame or frame[0] != Frame.ANSWER:
        raise TransportError(f"malformed answer frame {frame!r}")
    try:
        return Answer.from_bytes(frame[1:], q)
    except ValueError as exc:
        raise TransportError(str(exc)) from exc


class Channel:
    """Ordered, reliable, in-memory byte pipe."""

    def __init__(self) -> None:
        self._queue: deque[bytes] = deque()

    def send(self, frame: bytes) -> None:
        self._queue.append(bytes(frame))

    def recv(self) -> bytes:
        if not self._queue:
            raise TransportError("channel is empty")
        return self._queue.popleft()

    def __len__(self) -> int:
        return len(self._queue)


@dataclass
class ServerStats:
    queries_served: int = 0
    null_answers: int = 0
    symbols_sent: int = 0
    noqueries: int = 0


@dataclass
class ServerNode:
    id: int
    db: MessageDB
    stats: ServerStats = field(default_factory=ServerStats)

    def handle(self, frame: bytes) -> bytes | None:
        """Answer one frame; returns ``None`` when the server stays silent."""
        qv = decode_query(frame, self.db.params.K)
        if qv is None:
            self.stats.noqueries += 1
            return None
        ans = server_answer(self.db, qv)
        self.stats.queries_served += 1
        if ans.is_null:
            self.stats.null_answers += 1
        else:
            self.stats.symbols_sent += 1
        return encode_answer(ans)


@dataclass
class Harness:
    """Ground truth plus ``N`` server replicas holding identical copies of it."""

    params: Params
    db: MessageDB
    servers: list[ServerNode]

    @classmethod
    def create(cls, params: Params, db: MessageDB) -> "Harness":
        if db.params != params:
            raise RangeError("database was built for different parameters")
        replicas = [MessageDB(params, db.entries) for _ in range(params.N)]
        return cls(params, db, [ServerNode(n, replicas[n - 1]) for n in range(1, params.N + 1)])

    def check_replicas(self) -> None:
        assert all(s.db.entries == self.db.entries for s in self.servers), "replicas diverged"


@dataclass
class ClientSession:
    params: Params
    ds: DemandSideInfo
    plan: QueryPlan
    transcript: Transcript
    servers_used: tuple[int, ...]
    recovered: tuple[int, ...] | None = None

    def transcript_json(self) -> str:
        return json.dumps(self.transcript.to_json(), separators=(",", ":"))


def _exchange(harness: Harness, sent: dict[int, QueryVector]) -> Transcript:
    """Push one frame to every server over its own channel pair."""
    p = harness.params
    queries: list[QueryVector | None] = []
    answers: list[Answer] = []
    for node in harness.servers:
        up, down = Channel(), Channel()
        qv = sent.get(node.id)
        up.send(encode_query(qv) if qv is not None else encode_noquery())
        reply = node.handle(up.recv())
        if reply is not None:
            down.send(reply)
        if qv is None:
            if len(down):
                raise TransportError(f"server {node.id} answered without a query")
            answers.append(Answer(None))
        else:
            answers.append(decode_answer(down.recv(), p.q))
        queries.append(qv)
    return Transcript(tuple(queries), tuple(answers))


def _session(
    harness: Harness,
    ds: DemandSideInfo,
    rng: np.random.Generator,
    mutation: str | None = None,
) -> ClientSession:
    p = harness.params
    if p.L == p.N - 1:
        plan = generate_plan(p, ds, rng, mutation=mutation)
        used = tuple(range(1, p.N + 1))
    else:
        plan, used = two_step_retrieve(p, ds, rng)
    sent = dict(zip(used, queries_as_sent(plan)))
    transcript = _exchange(harness, sent)
    # client sees only the answers of the servers it queried, plus its side information
    got = recover_demand(plan, [transcript.answers[n - 1] for n in used], harness.db.rows(ds.S))
    recovered = tuple(x.value for x in got)
    if recovered != harness.db.entries[ds.W - 1]:
        raise RecoveryMismatch(f"recovered {recovered}, expected {harness.db.entries[ds.W - 1]}")
    return ClientSession(p, ds, plan, transcript, used, recovered)


def run_session(harness: Harness, ds: DemandSideInfo, seed: int | np.random.Generator) -> ClientSession:
    ds.check(harness.params)
    return _session(harness, ds, make_rng(seed))


@dataclass(frozen=True)
class ExperimentResult:
    params: Params
    servers_queried: int
    sessions: int
    total_download_symbols: int
    mean_download_symbols: Fraction
    analytic_expectation: Fraction
    empirical_rate: Fraction
    analytic_rate: Fraction
    per_session_variance: Fraction
    seed: int

    @property
    def std_error(self) -> float:
        """Standard deviation of the mean download under the exact law."""
        return math.sqrt(self.per_session_variance / self.sessions)

    @property
    def z_score(self) -> float:
        diff = float(self.mean_download_symbols - self.analytic_expectation)
        if self.std_error == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.std_error

    @property
    def rate_std_error(self) -> float:
        """Delta-method standard error of the empirical rate."""
        mu = float(self.analytic_expectation)
        return self.params.L * self.std_error / mu**2

    @property
    def rate_z_score(self) -> float:
        diff = float(self.empirical_rate - self.analytic_rate)
        if self.rate_std_error == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.rate_std_error

    def within(self, sigmas: float = 3.0) -> bool:
        return abs(self.z_score) <= sigmas and abs(self.rate_z_score) <= sigmas


def run_experiment(
    harness: Harness,
    ds_policy: DemandSideInfo | Literal["uniform"] = "uniform",
    sessions: int = 1000,
    seed: int = 0,
    *,
    mutation: str | None = None,
) -> ExperimentResult:
    """Run ``sessions`` retrievals and compare downloads with ``N' - P_0``.

    ``N'`` is ``N`` normally and ``L+1`` when ``L < N-1`` (two-step). A
    session downloads ``N'-1`` symbols when its first vector is null
    (probability ``P_0``) and ``N'`` otherwise.
    """
    if sessions < 1:
        raise RangeError("need at least one session")
    p = harness.params
    inner = p if p.L == p.N - 1 else p.with_servers(p.L + 1)
    if isinstance(ds_policy, DemandSideInfo):
        ds_policy.check(p)
    rng = np.random.default_rng(seed)
    total = 0
    for _ in range(sessions):
        ds = ds_policy if isinstance(ds_policy, DemandSideInfo) else random_demand_side_info(p, rng)
        total += _session(harness, ds, rng, mutation).transcript.downloaded_symbols
    harness.check_replicas()
    P0 = compute_distribution(inner).P[0]
    expectation = inner.N - P0
    return ExperimentResult(
        params=p,
        servers_queried=inner.N,
        sessions=sessions,
        total_download_symbols=total,
        mean_download_symbols=Fraction(total, sessions),
        analytic_expectation=expectation,
        empirical_rate=Fraction(p.L * sessions, total),
        analytic_rate=Fraction(p.L) / expectation,
        per_session_variance=P0 * (1 - P0),
        seed=seed,
    )


def run_two_step_experiment(
    harness: Harness,
    ds_policy: DemandSideInfo | Literal["uniform"] = "uniform",
    sessions: int = 1000,
    seed: int = 0,
) -> ExperimentResult:
    p = harness.params
    if not 1 <= p.L < p.N - 1:
        raise RangeError(f"two-step experiment needs 1 <= L < N-1, got L={p.L}, N={p.N}")
    return run_experiment(harness, ds_policy, sessions, seed)

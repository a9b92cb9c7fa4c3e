import json
import math
from fractions import Fraction

import pytest

from pirsi.core import DemandSideInfo, MessageDB, RangeError, random_db, validate_params
from pirsi.scheme import Answer, QueryVector, server_answer
from pirsi.simnet import (
    Channel,
    Frame,
    Harness,
    RecoveryMismatch,
    ServerNode,
    TransportError,
    decode_answer,
    decode_query,
    encode_answer,
    encode_noquery,
    encode_query,
    run_experiment,
    run_session,
    run_two_step_experiment,
)

P331 = validate_params(3, 3, 1, q=2)
DS12 = DemandSideInfo(1, [2])


def harness(p, seed=0):
    return Harness.create(p, random_db(p, seed))


def test_session_recovers_demand():
    h = harness(P331)
    for seed in range(200):
        s = run_session(h, DS12, seed)
        assert s.recovered == h.db.entries[0]
        assert s.transcript.downloaded_symbols in (2, 3)
        assert s.transcript.downloaded_symbols == sum(1 for a in s.transcript.answers if not a.is_null)


def test_session_determinism():
    h = harness(validate_params(4, 5, 2, q=3), 1)
    ds = DemandSideInfo(3, [1, 5])
    assert run_session(h, ds, 42).transcript_json() == run_session(h, ds, 42).transcript_json()
    dumps = {run_session(h, ds, s).transcript_json() for s in range(20)}
    assert len(dumps) > 1


def test_transcript_dump_schema():
    s = run_session(harness(P331), DS12, 3)
    dump = json.loads(s.transcript_json())
    assert [d["server"] for d in dump] == [1, 2, 3]
    for d in dump:
        assert len(d["query"]) == 3
        assert (d["answer"] is None) == (not any(d["query"]))


def test_server_determinism_replay():
    h = harness(P331, 5)
    s = run_session(h, DS12, 9)
    for n, qv in enumerate(s.transcript.queries, start=1):
        assert server_answer(h.db, qv) == s.transcript.answers[n - 1]


def test_frames():
    v = QueryVector([0, 2, 1])
    assert encode_query(v) == b"\x01\x00\x02\x01"
    assert decode_query(encode_query(v), 3) == v
    assert decode_query(encode_noquery(), 3) is None
    assert encode_answer(Answer(None)) == b"\x02\x00"
    assert decode_answer(b"\x02\x00", 2).is_null
    for bad in (b"", b"\x01\x00", b"\x02\x00\x00", b"\x03\x00", b"\x09\x00\x00\x00"):
        with pytest.raises(TransportError):
            decode_query(bad, 3)
    for bad in (b"", b"\x01\x00", b"\x02", b"\x02\x01"):
        with pytest.raises(TransportError):
            decode_answer(bad, 2)
    assert Frame.NOQUERY == 3


def test_null_answer_has_no_payload():
    node = ServerNode(1, random_db(P331, 0))
    reply = node.handle(encode_query(QueryVector([0, 0, 0])))
    assert reply == b"\x02\x00"
    assert node.stats.null_answers == 1 and node.stats.symbols_sent == 0
    assert node.handle(encode_noquery()) is None and node.stats.noqueries == 1


def test_channel_order():
    ch = Channel()
    ch.send(b"a")
    ch.send(b"b")
    assert ch.recv() == b"a" and ch.recv() == b"b"
    with pytest.raises(TransportError):
        ch.recv()


def test_harness_rejects_mismatched_db():
    with pytest.raises(RangeError):
        Harness.create(validate_params(3, 4, 1), random_db(P331, 0))


def test_recovery_mismatch_raised_on_wrong_ground_truth():
    h = harness(P331)
    bad = MessageDB(P331, tuple(tuple((x + 1) % 2 for x in row) if i == 0 else row for i, row in enumerate(h.db.entries)))
    h.db = bad  # ground truth no longer matches the replicas
    with pytest.raises(RecoveryMismatch):
        run_session(h, DS12, 0)


def test_experiment_single_session():
    r = run_experiment(harness(P331), DS12, sessions=1, seed=3)
    assert r.mean_download_symbols in (2, 3)
    assert r.empirical_rate in (Fraction(2, 3), Fraction(1))
    with pytest.raises(RangeError):
        run_experiment(harness(P331), DS12, sessions=0)


def test_experiment_single_group_is_exact():
    p = validate_params(4, 3, 2)
    r = run_experiment(harness(p), "uniform", sessions=500, seed=1)
    assert r.mean_download_symbols == 3 and r.empirical_rate == 1
    assert r.z_score == 0.0 and r.within()


def test_experiment_rate_identity():
    r = run_experiment(harness(validate_params(3, 5, 1)), "uniform", sessions=3000, seed=2)
    assert r.empirical_rate == Fraction(r.params.L * r.sessions, r.total_download_symbols)
    assert r.analytic_expectation == 3 - Fraction(compute_P0(3, 5, 1))
    assert r.within()


def compute_P0(N, K, M):
    from pirsi.analysis import compute_distribution

    return compute_distribution(validate_params(N, K, M)).P[0]


def test_experiment_server_stats_and_replicas():
    h = harness(P331)
    run_experiment(h, "uniform", sessions=300, seed=4)
    h.check_replicas()
    assert sum(s.stats.queries_served for s in h.servers) == 900
    nulls = sum(s.stats.null_answers for s in h.servers)
    sent = sum(s.stats.symbols_sent for s in h.servers)
    assert nulls + sent == 900 and nulls <= 300


def test_two_step_experiment():
    p = validate_params(4, 3, 1, L=2)
    h = harness(p)
    r = run_two_step_experiment(h, "uniform", sessions=4000, seed=5)
    assert r.servers_queried == 3 and r.analytic_rate == Fraction(4, 5)
    assert r.within()
    assert h.servers[3].stats.queries_served == 0 and h.servers[3].stats.noqueries == 4000
    with pytest.raises(RangeError):
        run_two_step_experiment(harness(P331), "uniform", sessions=10)


def test_two_step_single_group():
    p = validate_params(3, 2, 1, L=1)
    r = run_two_step_experiment(harness(p), "uniform", sessions=200, seed=0)
    assert r.empirical_rate == 1


def test_two_step_transcript_marks_silent_servers():
    p = validate_params(5, 4, 1, L=2, q=3)
    s = run_session(harness(p), DemandSideInfo(2, [4]), 7)
    dump = json.loads(s.transcript_json())
    assert [d["query"] for d in dump[3:]] == [None, None]
    assert s.servers_used == (1, 2, 3)


@pytest.mark.slow
def test_mean_download_converges_across_seeds():
    # 100 independent experiments of 1e5 sessions each; |z| > 3 should be rare
    h = harness(P331)
    outside = 0
    for seed in range(100):
        r = run_experiment(h, "uniform", sessions=100_000, seed=1000 + seed)
        assert r.analytic_expectation == Fraction(5, 2)
        outside += abs(r.z_score) > 3
    assert outside < 1


def test_std_error_formula():
    r = run_experiment(harness(P331), DS12, sessions=400, seed=0)
    assert math.isclose(r.std_error, math.sqrt(0.25 / 400))

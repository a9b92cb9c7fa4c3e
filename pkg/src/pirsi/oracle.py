"""Brute-force verifier.

Enumerates every outcome of the client's randomized plan generation with
its exact probability and derives privacy, recoverability and download
statistics by direct summation. Nothing here uses the closed-form
conditional probabilities from :mod:`pirsi.analysis`; those are only
compared against at the end.
"""

from __future__ import annotations

import itertools
import os
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial
from typing import Iterator

import numpy as np

from .analysis import ClassificationError, classify_support, closed_form_query_prob, compute_distribution
from .core import DemandSideInfo, Params, PirSiError, all_demand_side_info, random_db
from .scheme import (
    MUTATIONS,
    QueryPlan,
    QueryVector,
    build_plan,
    queries_as_sent,
    recover_demand,
    server_answer,
    symbolic_recovery_ok,
)

DEFAULT_BUDGET = 10**8


class BudgetExceeded(PirSiError, RuntimeError):
    pass


def default_budget() -> int:
    env = os.environ.get("PIRSI_BUDGET")
    return int(env) if env else DEFAULT_BUDGET


def colex(pool, r):
    """``r``-subsets of ``pool`` in colexicographic order."""
    return sorted(itertools.combinations(pool, r), key=lambda c: tuple(reversed(c)))


def assignments(idx, N, fixed=False):
    """Every map ``idx -> [1, N-1]`` in odometer order."""
    idx = list(idx)
    if fixed:
        yield {i: 1 for i in idx}
        return
    for vals in itertools.product(range(1, N), repeat=len(idx)):
        yield dict(zip(idx, vals))


def realization_count(params: Params, expand_permutations: bool = False, mutation: str | None = None) -> int:
    """Number of items :func:`enumerate_realizations` yields for one (W, S)."""
    N, K, M, g = params.N, params.K, params.M, params.g
    side = 1 if mutation == "fixed-b" else (N - 1)
    total = 0
    for I in range(g - 1):
        s = I * (M + 1)
        total += comb(K - M - 1, s) * (N - 1) ** s * side**M
    t = params.overlap
    total += (N - 1) ** (K - M - 1) * comb(M, t) * side**M
    return total * (factorial(N) if expand_permutations else 1)


@dataclass
class RealizationSpace:
    """Lazily enumerated outcomes for one (W, S).

    With ``expand_permutations=False`` each item stands for one vector set
    with ``pi`` the identity; the uniform permutation is accounted for by
    consumers as a factor ``1/N`` per server slot.
    """

    params: Params
    ds: DemandSideInfo
    expand_permutations: bool = False
    mutation: str | None = None
    count: int = field(init=False)

    def __post_init__(self) -> None:
        self.count = realization_count(self.params, self.expand_permutations, self.mutation)

    def __iter__(self) -> Iterator[tuple[QueryPlan, Fraction]]:
        p, ds = self.params, self.ds
        N, K, M, g = p.N, p.K, p.M, p.g
        P = compute_distribution(p).P
        fixed = self.mutation == "fixed-b"
        interference = ds.interference(K)
        S = sorted(ds.S)
        ident = tuple(range(1, N + 1))
        perms = list(itertools.permutations(ident)) if self.expand_permutations else [ident]
        pi_weight = Fraction(1, len(perms))
        side_weight = Fraction(1) if fixed else Fraction(1, (N - 1) ** M)

        for I in range(g):
            if I != g - 1:
                supports = colex(interference, I * (M + 1))
                w_a = Fraction(1, len(supports) * (N - 1) ** (I * (M + 1)))
                weight = P[I] * w_a * side_weight * pi_weight
                for sup in supports:
                    for a in assignments(sup, N):
                        for b in assignments(S, N, fixed):
                            for pi in perms:
                                yield build_plan(p, ds, I, a, b, None, pi), weight
            else:
                b1_supports = colex(S, p.overlap)
                w_a = Fraction(1, (N - 1) ** len(interference))
                weight = P[I] * w_a * Fraction(1, len(b1_supports)) * side_weight * pi_weight
                for a in assignments(interference, N):
                    for sup in b1_supports:
                        for b1 in assignments(sup, N, fixed):
                            rest = [s for s in S if s not in sup]
                            for b2 in assignments(rest, N, fixed):
                                for pi in perms:
                                    yield build_plan(p, ds, I, a, b2, b1, pi), weight


def _check_budget(items: int, budget: int | None) -> None:
    budget = default_budget() if budget is None else budget
    if items > budget:
        raise BudgetExceeded(f"enumeration needs {items} items, budget is {budget}")


def enumerate_realizations(
    params: Params,
    ds: DemandSideInfo,
    *,
    expand_permutations: bool = False,
    mutation: str | None = None,
    budget: int | None = None,
) -> RealizationSpace:
    params.require_full_subpacketization()
    ds.check(params)
    if mutation is not None and mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}")
    space = RealizationSpace(params, ds, expand_permutations, mutation)
    _check_budget(space.count, budget)
    return space


def _slot_distribution(space: RealizationSpace, n: int) -> dict[QueryVector, Fraction]:
    dist: dict[QueryVector, Fraction] = defaultdict(Fraction)
    N = space.params.N
    for plan, prob in space:
        if space.expand_permutations:
            dist[plan.vectors[plan.pi[n - 1] - 1]] += prob
        else:
            share = prob / N
            for v in plan.vectors:
                dist[v] += share
    return dict(dist)


def brute_force_query_distribution(
    params: Params,
    W: int,
    S,
    n: int,
    *,
    expand_permutations: bool = False,
    mutation: str | None = None,
    budget: int | None = None,
) -> dict[QueryVector, Fraction]:
    """``P(Q_n = v | W, S)`` for every ``v`` with nonzero mass."""
    if not 1 <= n <= params.N:
        raise ValueError(f"server index {n} outside [1, {params.N}]")
    space = enumerate_realizations(
        params, DemandSideInfo(W, S), expand_permutations=expand_permutations, mutation=mutation, budget=budget
    )
    return _slot_distribution(space, n)


def all_vectors(params: Params) -> Iterator[QueryVector]:
    for comps in itertools.product(range(params.N), repeat=params.K):
        yield QueryVector(comps)


@dataclass
class PrivacyReport:
    params: Params
    table: dict[QueryVector, tuple[Fraction, ...]]
    verdict: bool
    counterexample: tuple[QueryVector, tuple[int, int]] | None = None
    closed_form_agrees: bool | None = None
    closed_form_mismatches: list[tuple[QueryVector, int, Fraction, Fraction | None]] = field(default_factory=list)
    mass_ok: bool = True

    def row(self, v) -> tuple[Fraction, ...]:
        return self.table.get(QueryVector(v), (Fraction(0),) * self.params.K)


def marginal_over_side_info(
    params: Params,
    *,
    n: int = 1,
    expand_permutations: bool = False,
    mutation: str | None = None,
    budget: int | None = None,
) -> dict[QueryVector, list[Fraction]]:
    """``P(Q_n = v | W)`` for every ``W``, with ``S`` uniform given ``W``."""
    K = params.K
    per_W = comb(K - 1, params.M)
    _check_budget(realization_count(params, expand_permutations, mutation) * K * per_W, budget)
    table: dict[QueryVector, list[Fraction]] = defaultdict(lambda: [Fraction(0)] * K)
    for ds in all_demand_side_info(params):
        space = RealizationSpace(params, ds, expand_permutations, mutation)
        for v, prob in _slot_distribution(space, n).items():
            table[v][ds.W - 1] += prob / per_W
    return dict(table)


def verify_privacy(
    params: Params,
    *,
    n: int = 1,
    expand_permutations: bool = False,
    mutation: str | None = None,
    budget: int | None = None,
    check_closed_form: bool = True,
) -> PrivacyReport:
    params.require_full_subpacketization()
    raw = marginal_over_side_info(
        params, n=n, expand_permutations=expand_permutations, mutation=mutation, budget=budget
    )
    table = {v: tuple(row) for v, row in sorted(raw.items())}
    counterexample = None
    for v, row in table.items():
        for w in range(1, params.K):
            if row[w] != row[0]:
                counterexample = (v, (1, w + 1))
                break
        if counterexample:
            break
    mass_ok = all(sum(row[w] for row in table.values()) == 1 for w in range(params.K))
    report = PrivacyReport(params, table, counterexample is None and mass_ok, counterexample, mass_ok=mass_ok)
    if check_closed_form:
        _check_budget(params.N**params.K, budget)
        zero_row = (Fraction(0),) * params.K
        for v in all_vectors(params):
            row = table.get(v, zero_row)
            for W in range(1, params.K + 1):
                try:
                    expected = closed_form_query_prob(params, v, W)
                except ClassificationError:
                    expected = None
                if (expected is None and row[W - 1] != 0) or (expected is not None and expected != row[W - 1]):
                    report.closed_form_mismatches.append((v, W, row[W - 1], expected))
        report.closed_form_agrees = not report.closed_form_mismatches
    return report


@dataclass
class RecoverabilityReport:
    params: Params
    realizations: int = 0
    symbolic_failures: int = 0
    replay_failures: int = 0
    first_failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.realizations > 0 and self.symbolic_failures == 0 and self.replay_failures == 0

    def __bool__(self) -> bool:
        return self.ok


def verify_recoverability(
    params: Params,
    *,
    seed: int = 0,
    expand_permutations: bool = True,
    budget: int | None = None,
    corrupt_answer: int | None = None,
) -> RecoverabilityReport:
    """Symbolic unit-coefficient check plus a numeric replay on a fresh
    random database, for every realization of every (W, S).

    ``corrupt_answer=n`` adds 1 to the answer of the server holding ``v_n``
    (when non-null) before decoding; a sensitivity control that must fail.
    """
    params.require_full_subpacketization()
    demands = all_demand_side_info(params)
    _check_budget(realization_count(params, expand_permutations) * len(demands), budget)
    rng = np.random.default_rng(seed)
    report = RecoverabilityReport(params)
    q = params.q
    for ds in demands:
        for plan, _ in RealizationSpace(params, ds, expand_permutations):
            report.realizations += 1
            if not symbolic_recovery_ok(plan):
                report.symbolic_failures += 1
                report.first_failure = report.first_failure or f"symbolic: {plan}"
            db = random_db(params, rng)
            answers = [server_answer(db, qv) for qv in queries_as_sent(plan)]
            if corrupt_answer is not None:
                server = plan.pi.index(corrupt_answer)
                ans = answers[server]
                if not ans.is_null:
                    answers[server] = type(ans)(ans.payload + type(ans.payload)(1 % q, q))
            got = recover_demand(plan, answers, db.rows(ds.S))
            if tuple(x.value for x in got) != db.entries[ds.W - 1]:
                report.replay_failures += 1
                report.first_failure = report.first_failure or f"replay: {plan}"
    return report


def expected_download_exact(params: Params, *, budget: int | None = None) -> Fraction:
    """Expected non-null answers per retrieval, averaged over every (W, S)."""
    params.require_full_subpacketization()
    demands = all_demand_side_info(params)
    _check_budget(realization_count(params) * len(demands), budget)
    total = Fraction(0)
    for ds in demands:
        for plan, prob in RealizationSpace(params, ds):
            total += prob * sum(1 for v in plan.vectors if not v.is_zero())
    return total / len(demands)


def observed_support_sizes(params: Params, *, budget: int | None = None) -> set[int]:
    demands = all_demand_side_info(params)
    _check_budget(realization_count(params) * len(demands), budget)
    sizes = set()
    for ds in demands:
        for plan, _ in RealizationSpace(params, ds):
            sizes.update(v.support_size() for v in plan.vectors)
    return sizes


def support_law_holds(params: Params, *, budget: int | None = None) -> bool:
    """Every emitted vector classifies, and every admissible class is emitted."""
    sizes = observed_support_sizes(params, budget=budget)
    admissible = {0, params.K} | {k * (params.M + 1) for k in range(1, params.g)}
    for s in sizes:
        try:
            classify_support(params, [1] * s + [0] * (params.K - s))
        except ClassificationError:
            return False
    return sizes == admissible

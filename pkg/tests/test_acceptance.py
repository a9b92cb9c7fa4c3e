"""Acceptance criteria, one check per criterion.

Run directly (``python tests/test_acceptance.py``) for a PASS/FAIL summary, or
through pytest, where each criterion is its own test and also prints its line.
"""

import sys
import time
from collections import Counter
from fractions import Fraction
from pathlib import Path

import pytest

from pirsi.analysis import (
    Relation,
    compare_theorem2,
    compute_distribution,
    perturbed_distribution,
    rate_R,
    rate_RL,
    rate_Rstar,
    verify_pk_conditions,
)
from pirsi.cli import GOLDEN_NAME, example_report
from pirsi.core import DemandSideInfo, random_db, validate_params
from pirsi.oracle import enumerate_realizations, expected_download_exact, verify_privacy, verify_recoverability
from pirsi.simnet import Harness, run_experiment, run_two_step_experiment

GOLDEN = Path(__file__).parent / "golden" / GOLDEN_NAME
SWEEP = [(N, K, M) for N in (2, 3, 4) for K in range(2, 7) for M in range(1, K)]


def c1_example():
    start = time.perf_counter()
    p = validate_params(3, 3, 1)
    P = compute_distribution(p).P
    items = list(enumerate_realizations(p, DemandSideInfo(1, [2])))
    rows_ok = Counter(prob for _, prob in items) == {P[0] / 2: 2, P[1] / 4: 4} and len(items) == 6
    golden_ok = example_report().render("text") == GOLDEN.read_text(encoding="utf-8")
    elapsed = time.perf_counter() - start
    ok = P == (Fraction(1, 2), Fraction(1, 2)) and rows_ok and golden_ok and elapsed < 1
    return ok, f"P={P[0]},{P[1]}; six rows {rows_ok}; golden {golden_ok}; {elapsed:.2f}s"


def c2_privacy():
    bad = []
    for q in (2, 3):
        for N, K, M in SWEEP:
            if not verify_privacy(validate_params(N, K, M, q=q), check_closed_form=False).verdict:
                bad.append((N, K, M, q))
    row = verify_privacy(validate_params(3, 3, 1), check_closed_form=False).row([0, 2, 1])
    ok = not bad and row == (Fraction(1, 24),) * 3
    return ok, f"{2 * len(SWEEP) - len(bad)}/{2 * len(SWEEP)} cells private; [0,2,1] -> {', '.join(map(str, row))}"


def c3_closed_form():
    bad = [c for c in SWEEP if not verify_privacy(validate_params(*c)).closed_form_agrees]
    return not bad, f"{len(SWEEP) - len(bad)}/{len(SWEEP)} cells agree exactly" + (f"; first bad {bad[0]}" if bad else "")


def c4_recoverability():
    cells = [(3, 3, 1, 2), (3, 4, 1, 3), (2, 5, 1, 2), (4, 4, 1, 2)]
    parts, ok = [], True
    for N, K, M, q in cells:
        rep = verify_recoverability(validate_params(N, K, M, q=q))
        ok &= rep.ok
        parts.append(f"({N},{K},{M},q={q}) {rep.realizations - rep.replay_failures}/{rep.realizations}")
    return ok, "; ".join(parts)


def c5_rates():
    p = validate_params(3, 3, 1)
    ok = rate_R(p) == Fraction(4, 5) and rate_Rstar(p) == Fraction(3, 4)
    for N in range(2, 7):
        for K in range(2, 11):
            for M in range(1, K):
                q = validate_params(N, K, M)
                R, Rs, rel = compare_theorem2(q)
                ok &= (R == Rs) == (K % (M + 1) == 0) and (R >= Rs)
                ok &= rel is (Relation.EQUAL if q.divisible else Relation.STRICTLY_GREATER)
                if q.divisible:
                    ok &= compute_distribution(q).P[0] == Fraction(1, N ** (q.g - 1))
    return ok, f"R(3,3,1)={rate_R(p)}, R*={rate_Rstar(p)}; R vs R* relation over N<=6, K<=10"


def c6_download():
    start = time.perf_counter()
    bad = [c for c in SWEEP if expected_download_exact(validate_params(*c)) != c[0] - compute_distribution(validate_params(*c)).P[0]]
    p = validate_params(3, 3, 1)
    res = run_experiment(Harness.create(p, random_db(p, 0)), "uniform", 100_000, seed=7)
    elapsed = time.perf_counter() - start
    ok = not bad and res.analytic_expectation == Fraction(5, 2) and abs(res.z_score) <= 3 and abs(res.rate_z_score) <= 3
    return ok and elapsed < 30, (
        f"exact at {len(SWEEP) - len(bad)}/{len(SWEEP)} cells; MC mean {float(res.mean_download_symbols):.5f} "
        f"(z={res.z_score:.2f}), rate z={res.rate_z_score:.2f}; {elapsed:.1f}s"
    )


def c7_two_step():
    p = validate_params(4, 3, 1, L=2)
    h = Harness.create(p, random_db(p, 0))
    res = run_two_step_experiment(h, "uniform", 100_000, seed=7)
    ok = rate_RL(p) == Fraction(4, 5) == res.analytic_rate and abs(res.rate_z_score) <= 3
    ok &= h.servers[3].stats.queries_served == 0
    return ok, f"empirical rate {float(res.empirical_rate):.5f} vs R_L={rate_RL(p)} (z={res.rate_z_score:.2f})"


def c8_controls():
    p = validate_params(3, 3, 1)
    fixed = verify_privacy(p, mutation="fixed-b")
    perturbed = not verify_pk_conditions(p, perturbed_distribution(p))
    ok = not fixed.verdict and fixed.counterexample is not None and perturbed
    v = fixed.counterexample[0] if fixed.counterexample else None
    return ok, f"fixed-b detected at v*={v!r}; perturbed P_1 detected: {perturbed}"


CRITERIA = [
    ("1 example reproduction", c1_example),
    ("2 exact privacy", c2_privacy),
    ("3 closed form = oracle", c3_closed_form),
    ("4 recoverability", c4_recoverability),
    ("5 rates", c5_rates),
    ("6 expected download", c6_download),
    ("7 two-step rate", c7_two_step),
    ("8 falsifiability controls", c8_controls),
]


def _line(name, ok, detail):
    return f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}"


@pytest.mark.parametrize("name, fn", CRITERIA, ids=[n for n, _ in CRITERIA])
def test_criterion(name, fn, capsys):
    ok, detail = fn()
    with capsys.disabled():
        print("\n" + _line(name, ok, detail))
    assert ok, detail


def main() -> int:
    failed = 0
    for name, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(_line(name, ok, detail), flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

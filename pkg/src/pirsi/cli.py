"""Command-line front end.

Examples::

    pirsi rate --N 3 --K 3 --M 1
    pirsi rate --sweep N=2..5,K=2..8,M=1..3 --format csv
    pirsi verify --N 2 --K 5 --M 1
    pirsi verify --N 3 --K 3 --M 1 --mutate fixed-b
    pirsi example
    pirsi simulate --N 3 --K 3 --M 1 --sessions 100000 --seed 7
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from pathlib import Path
from typing import Any, Iterable

from .analysis import (
    compare_theorem2,
    compute_distribution,
    expected_download,
    perturbed_distribution,
    rate_RL,
    verify_pk_conditions,
)
from .core import (
    DemandSideInfo,
    PirSiError,
    Params,
    random_db,
    rat_display,
    rat_str,
    validate_params,
)
from .oracle import (
    BudgetExceeded,
    default_budget,
    enumerate_realizations,
    expected_download_exact,
    support_law_holds,
    verify_privacy,
    verify_recoverability,
)
from .simnet import Harness, run_experiment

SCHEMA_PATH = Path(__file__).with_name("report.schema.json")
GOLDEN_NAME = "example.txt"


# ---------------------------------------------------------------- helpers


def parse_range(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split("|")]


def parse_sweep(spec: str) -> dict[str, list[int]]:
    """``"N=2..5,K=2..8,M=1..3"`` -> ``{"N": [2..5], ...}``."""
    out: dict[str, list[int]] = {}
    for part in spec.split(","):
        name, _, rng = part.partition("=")
        name = name.strip()
        if name not in ("N", "K", "M", "L", "q") or not rng:
            raise argparse.ArgumentTypeError(f"bad sweep term {part!r}")
        out[name] = parse_range(rng.strip())
    return out


def iter_cells(args: argparse.Namespace) -> list[Params]:
    """Parameter points for a single cell or a sweep; inadmissible sweep cells are skipped."""
    if not args.sweep:
        if args.N is None or args.K is None or args.M is None:
            raise PirSiError("give --N, --K and --M, or --sweep")
        return [validate_params(args.N, args.K, args.M, args.L, args.q)]
    sweep = parse_sweep(args.sweep)
    Ns = sweep.get("N", [args.N] if args.N is not None else [])
    Ks = sweep.get("K", [args.K] if args.K is not None else [])
    Ms = sweep.get("M", [args.M] if args.M is not None else [])
    qs = sweep.get("q", [args.q])
    if not (Ns and Ks and Ms):
        raise PirSiError("sweep needs values for N, K and M")
    cells = []
    for N, K, M, q in itertools.product(Ns, Ks, Ms, qs):
        Ls = sweep.get("L", [args.L if args.L is not None else N - 1])
        for L in Ls:
            try:
                cells.append(validate_params(N, K, M, L, q))
            except PirSiError:
                continue
    return cells


def cell_header(p: Params) -> dict[str, Any]:
    dist = compute_distribution(p)
    R, Rs, rel = compare_theorem2(p)
    return {
        "params": p.as_dict(),
        "g": p.g,
        "P": [rat_str(x) for x in dist.P],
        "R": rat_str(R),
        "Rstar": rat_str(Rs),
        "relation": rel.value,
    }


def check(name: str, ok: bool, detail: str = "") -> dict[str, Any]:
    return {"name": name, "pass": bool(ok), "detail": detail}


@dataclass
class Report:
    records: list[dict[str, Any]] = field(default_factory=list)
    text: list[str] = field(default_factory=list)
    csv_fields: list[str] = field(default_factory=list)
    csv_rows: list[dict[str, Any]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c["pass"] for r in self.records for c in r.get("checks", []))

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return json.dumps(self.records, indent=2) + "\n"
        if fmt == "csv":
            buf = io.StringIO()
            w = csv.DictWriter(buf, fieldnames=self.csv_fields, lineterminator="\n")
            w.writeheader()
            w.writerows(self.csv_rows)
            return buf.getvalue()
        return "\n".join(self.text) + "\n"


def _checks_text(record: dict[str, Any]) -> list[str]:
    lines = []
    for c in record.get("checks", []):
        status = "PASS" if c["pass"] else "FAIL"
        lines.append(f"  [{status}] {c['name']}" + (f": {c['detail']}" if c["detail"] else ""))
    return lines


def _cell_label(p: Params) -> str:
    return f"N={p.N} K={p.K} M={p.M} L={p.L} q={p.q}"


# ---------------------------------------------------------------- rate


def cmd_rate(args: argparse.Namespace) -> Report:
    rep = Report(
        csv_fields=["N", "K", "M", "L", "q", "g", "P0", "R", "Rstar", "RL", "divisible", "relation", "expected_download"]
    )
    for p in iter_cells(args):
        rec = cell_header(p)
        R, Rs, rel = compare_theorem2(p)
        RL = rate_RL(p) if p.L < p.N - 1 else None
        E = expected_download(p)
        rec["RL"] = rat_str(RL) if RL is not None else None
        rec["divisible"] = p.divisible
        rec["expected_download"] = rat_str(E)
        expected_rel = "equal" if p.divisible else "strictly_greater"
        rec["checks"] = [check("rate_relation", rel.value == expected_rel, f"{rel.value}, divisible={p.divisible}")]
        rep.records.append(rec)
        rep.csv_rows.append(
            {
                **p.as_dict(),
                "g": p.g,
                "P0": rec["P"][0],
                "R": rec["R"],
                "Rstar": rec["Rstar"],
                "RL": rec["RL"] or "",
                "divisible": int(p.divisible),
                "relation": rel.value,
                "expected_download": rec["expected_download"],
            }
        )
        rep.text.append(_cell_label(p))
        rep.text.append(f"  g = {p.g}, P = [{', '.join(rec['P'])}]")
        rep.text.append(f"  R  = {rat_display(R)}")
        rep.text.append(f"  R* = {rat_display(Rs)}")
        if RL is not None:
            rep.text.append(f"  R_L = {rat_display(RL)} (queries L+1 = {p.L + 1} servers)")
        rep.text.append(f"  relation: {rel.value} (divisible={p.divisible})")
        rep.text.append(f"  expected download = {rat_display(E)} symbols")
    return rep


# ---------------------------------------------------------------- verify


def verify_cell(p: Params, *, mutate: str | None, budget: int, seed: int) -> dict[str, Any]:
    rec = cell_header(p)
    checks = []
    try:
        if p.L != p.N - 1:
            raise PirSiError("verification enumerates the full-subpacketization scheme; use L = N-1")
        pr = verify_privacy(p, mutation="fixed-b" if mutate == "fixed-b" else None, budget=budget)
        detail = "all rows constant over W"
        if pr.counterexample:
            v, (w1, w2) = pr.counterexample
            detail = f"v*={v!r}: P(.|W={w1})={rat_str(pr.row(v)[w1 - 1])} vs P(.|W={w2})={rat_str(pr.row(v)[w2 - 1])}"
        checks.append(check("privacy", pr.verdict, detail))
        n_bad = len(pr.closed_form_mismatches)
        checks.append(check("closed_form_equals_oracle", bool(pr.closed_form_agrees), f"{n_bad} mismatching entries"))

        P = perturbed_distribution(p) if mutate == "perturb-p1" else None
        if mutate == "perturb-p1" and p.g < 2:
            P = None
        checks.append(check("pk_conditions", verify_pk_conditions(p, P), "perturbed P_1" if P is not None else ""))

        rr = verify_recoverability(p, seed=seed, budget=budget)
        checks.append(
            check(
                "recoverability",
                rr.ok,
                f"{rr.realizations} realizations, {rr.symbolic_failures} symbolic and {rr.replay_failures} replay failures",
            )
        )
        E = expected_download_exact(p, budget=budget)
        target = expected_download(p)
        checks.append(check("expected_download", E == target, f"oracle {rat_str(E)}, N-P_0 = {rat_str(target)}"))
        checks.append(check("support_law", support_law_holds(p, budget=budget)))
    except BudgetExceeded as exc:
        rec["skipped"] = str(exc)
    rec["checks"] = checks
    return rec


def cmd_verify(args: argparse.Namespace) -> Report:
    rep = Report(csv_fields=["N", "K", "M", "L", "q", "check", "pass", "detail"])
    budget = args.budget if args.budget is not None else default_budget()
    for p in iter_cells(args):
        rec = verify_cell(p, mutate=args.mutate, budget=budget, seed=args.seed)
        rep.records.append(rec)
        rep.text.append(_cell_label(p) + (f"  SKIPPED ({rec['skipped']})" if "skipped" in rec else ""))
        rep.text.extend(_checks_text(rec))
        for c in rec["checks"]:
            rep.csv_rows.append({**p.as_dict(), "check": c["name"], "pass": int(c["pass"]), "detail": c["detail"]})
    return rep


# ---------------------------------------------------------------- example


def _frac_label(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else rat_str(x)


def _answer_expr(v, labels: dict[int, str]) -> str:
    terms = [(labels[i], f"X_{{{labels[i]},{j}}}") for i, j in enumerate(v, start=1) if j]
    if not terms:
        return "0"
    return "+".join(t for _, t in sorted(terms, key=lambda t: t[0]))


def example_report(fmt: str = "text") -> Report:
    p = validate_params(3, 3, 1, 2, 2)
    dist = compute_distribution(p)
    N, K = p.N, p.K
    ds = DemandSideInfo(1, [2])
    sets = list(enumerate_realizations(p, ds))
    rep = Report()
    t = rep.text

    def prob_label(plan, prob: Fraction) -> str:
        share = prob / dist.P[plan.I]
        return f"P_{plan.I}/{share.denominator}"

    t.append(f"Worked example: N={N}, K={K}, M={p.M}, L={p.L}")
    t.append(f"g = {p.g}")
    for k, Pk in enumerate(dist.P):
        t.append(f"P_{k} = {_frac_label(Pk)}")
    t.append("")
    t.append(f"Query vector sets for W={ds.W}, S={{{','.join(map(str, sorted(ds.S)))}}}")
    t.append(" | ".join(f"v_{n}" for n in range(1, N + 1)) + " | probability")
    for plan, prob in sets:
        t.append(" | ".join(repr(v) for v in plan.vectors) + f" | {prob_label(plan, prob)}")
    t.append("")

    numeric = {i: str(i) for i in range(1, K + 1)}
    (k_rest,) = ds.interference(K)
    symbolic = {ds.W: "i", next(iter(ds.S)): "j", k_rest: "k"}
    for title, labels in (
        (f"Answers for W={ds.W}, S={{{','.join(map(str, sorted(ds.S)))}}}", numeric),
        ("Answers for W=i, S={j}, remaining message k", symbolic),
    ):
        t.append(title)
        t.append(" | ".join(f"Y_{n}" for n in range(1, N + 1)) + " | probability")
        for plan, prob in sets:
            t.append(" | ".join(_answer_expr(v, labels) for v in plan.vectors) + f" | {prob_label(plan, prob)}")
        t.append("")

    target = (0, 2, 1)
    t.append(f"Privacy check for v* = [{','.join(map(str, target))}] (answer {_answer_expr(target, numeric)})")
    per_W = comb(K - 1, p.M)
    marginals = []
    for W in range(1, K + 1):
        parts = []
        for S in itertools.combinations([i for i in range(1, K + 1) if i != W], p.M):
            cond = Fraction(0)
            label = "0"
            for plan, prob in enumerate_realizations(p, DemandSideInfo(W, S)):
                if target in plan.vectors:
                    cond = prob / N
                    label = f"1/{N} x {prob_label(plan, prob)} = {rat_str(cond)}"
            t.append(f"W*={W}, S*={{{','.join(map(str, S))}}}: {label}")
            parts.append(cond)
        total = sum(parts, Fraction(0)) / per_W
        marginals.append(total)
        expr = " + ".join(f"1/{per_W} x {_frac_label(c)}" for c in parts)
        t.append(f"P(Q_n=v*|W={W}) = {expr} = {rat_str(total)}")
    overall = sum(marginals, Fraction(0)) / K
    t.append(f"P(Q_n=v*) = {K} x 1/{K} x {rat_str(marginals[0])} = {rat_str(overall)}")
    t.append("")
    R, Rs, rel = compare_theorem2(p)
    t.append(f"R = (N-1)/(N-P_0) = {rat_display(R)}")
    t.append(f"R* = (N^g-N^(g-1))/(N^g-1) = {rat_display(Rs)}")
    t.append(f"relation: {rel.value}")

    rec = cell_header(p)
    rec["vector_sets"] = [
        {"I": plan.I, "vectors": [list(v) for v in plan.vectors], "probability": rat_str(prob), "label": prob_label(plan, prob)}
        for plan, prob in sets
    ]
    rec["walkthrough"] = {"v": list(target), "P_given_W": [rat_str(m) for m in marginals], "P": rat_str(overall)}
    rows_ok = [s["label"] for s in rec["vector_sets"]] == ["P_0/2"] * 2 + ["P_1/4"] * 4
    rec["checks"] = [
        check("six_vector_sets", len(sets) == 6 and rows_ok, f"{len(sets)} sets"),
        check("walkthrough_constant", len(set(marginals)) == 1, f"P(Q_n=v*|W) = {rat_str(marginals[0])}"),
    ]
    rep.records.append(rec)
    return rep


def cmd_example(args: argparse.Namespace) -> Report:
    rep = example_report()
    if args.regen_golden:
        out = Path(args.regen_golden)
        out.mkdir(parents=True, exist_ok=True)
        (out / GOLDEN_NAME).write_text(rep.render("text"), encoding="utf-8")
    return rep


# ---------------------------------------------------------------- simulate


def cmd_simulate(args: argparse.Namespace) -> Report:
    rep = Report(
        csv_fields=["N", "K", "M", "L", "q", "servers_queried", "sessions", "mean_download", "analytic_download",
                    "empirical_rate", "analytic_rate", "z_score", "rate_z_score", "seed"]
    )
    if args.sessions < 1:
        raise PirSiError("--sessions must be at least 1")
    for p in iter_cells(args):
        harness = Harness.create(p, random_db(p, args.seed))
        policy: Any = "uniform"
        if args.W is not None:
            S = [int(s) for s in args.S.split(",")] if args.S else [i for i in range(1, p.K + 1) if i != args.W][: p.M]
            policy = DemandSideInfo(args.W, S)
        res = run_experiment(harness, policy, args.sessions, args.seed)
        rec = cell_header(p)
        rec.update(
            servers_queried=res.servers_queried,
            sessions=res.sessions,
            mean_download=rat_str(res.mean_download_symbols),
            analytic_download=rat_str(res.analytic_expectation),
            empirical_rate=rat_str(res.empirical_rate),
            analytic_rate=rat_str(res.analytic_rate),
            z_score=res.z_score,
            rate_z_score=res.rate_z_score,
            seed=res.seed,
        )
        rec["checks"] = [
            check("download_within_3sigma", abs(res.z_score) <= 3, f"z = {res.z_score:.3f}"),
            check("rate_within_3sigma", abs(res.rate_z_score) <= 3, f"z = {res.rate_z_score:.3f}"),
        ]
        rep.records.append(rec)
        rep.csv_rows.append(
            {**p.as_dict(), **{k: rec[k] for k in rep.csv_fields if k in rec and k not in p.as_dict()}}
        )
        two_step = " (two-step, servers 1..%d)" % res.servers_queried if res.servers_queried < p.N else ""
        rep.text.append(_cell_label(p) + two_step)
        rep.text.append(f"  sessions        {res.sessions} (seed {res.seed})")
        rep.text.append(f"  mean download   {rat_display(res.mean_download_symbols)}")
        rep.text.append(f"  expected        {rat_display(res.analytic_expectation)}")
        rep.text.append(f"  empirical rate  {rat_display(res.empirical_rate)}")
        rep.text.append(f"  analytic rate   {rat_display(res.analytic_rate)}")
        rep.text.append(f"  z-score         {res.z_score:.3f} (rate {res.rate_z_score:.3f})")
        rep.text.extend(_checks_text(rec))
    return rep


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pirsi", description="PIR with side information: rates, audits, simulation.")
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--N", type=int, help="number of servers")
    shared.add_argument("--K", type=int, help="number of messages")
    shared.add_argument("--M", type=int, help="number of side-information messages")
    shared.add_argument("--L", type=int, default=None, help="sub-packets per message (default N-1)")
    shared.add_argument("--q", type=int, default=2, help="prime field order (default 2)")
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--format", choices=("text", "json", "csv"), default="text")
    shared.add_argument("--budget", type=int, default=None, help="enumeration cap (env PIRSI_BUDGET)")
    shared.add_argument("--sweep", default=None, help="e.g. N=2..5,K=2..8,M=1..3")
    shared.add_argument("--output", "-o", default=None, help="write the report here instead of stdout")

    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("rate", parents=[shared], help="rate table R, R*, R_L").set_defaults(func=cmd_rate)
    v = sub.add_parser("verify", parents=[shared], help="exhaustive privacy/recoverability audit")
    v.add_argument("--mutate", choices=("fixed-b", "perturb-p1"), default=None, help="falsifiability control")
    v.set_defaults(func=cmd_verify)
    e = sub.add_parser("example", parents=[shared], help="reproduce the N=3, K=3, M=1 worked example")
    e.add_argument("--regen-golden", metavar="DIR", default=None, help="rewrite the golden file in DIR")
    e.set_defaults(func=cmd_example)
    s = sub.add_parser("simulate", parents=[shared], help="Monte-Carlo download experiment")
    s.add_argument("--sessions", type=int, default=10000)
    s.add_argument("--W", type=int, default=None, help="fix the demand (default: uniform)")
    s.add_argument("--S", default=None, help="fix the side information, comma separated")
    s.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Iterable[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(list(argv) if argv is not None else None)
    try:
        rep = args.func(args)
    except PirSiError as exc:
        print(f"pirsi: error: {exc}", file=sys.stderr)
        return 2
    out = rep.render(args.format)
    if args.output:
        Path(args.output).write_text(out, encoding="utf-8")
    else:
        sys.stdout.write(out)
    return 0 if rep.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())

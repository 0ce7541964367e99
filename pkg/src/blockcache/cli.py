"""Command-line harness: instance generation, algorithm runs with
certificates, verification suites, and CSV reports.

Exit codes: 0 success, 1 verification/run failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import random
import sys

from .det_online import run_deterministic
from .frac_online import run_fractional
from .instance import (
    Instance,
    InstanceError,
    PolicyTrace,
    build_request_index,
    gen_beta_off,
    gen_gap_instance,
    gen_random,
)
from .oracle import (
    OracleIntractableError,
    fractional_costs,
    naive_lp_check,
    opt_eviction,
    opt_fetching,
    trace_to_x,
)
from .rounding import (
    bicriteria_round_evict,
    bicriteria_round_fetch,
    derandomize_ensemble,
    gamma_for,
    randomized_round,
    structure_stream,
)
from .submodular import (
    CoverageOracle,
    FlushSet,
    check_feasible,
    check_feasible_exhaustive,
)


def _f(v: float) -> float:
    """Round-trip a float through 12 significant digits for stable files."""
    return float(f"{v:.12g}")


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


# ---------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    if args.kind == "gap":
        inst = gen_gap_instance(args.beta, args.rounds)
    elif args.kind == "beta-off":
        inst = gen_beta_off(args.beta, args.L, args.direction)
    else:
        inst = gen_random(
            args.n,
            args.k,
            args.beta,
            args.T,
            cost_profile=args.cost_profile,
            delta=args.delta,
            seed=args.seed,
        )
    inst.save(args.output)
    Instance.load(args.output)  # round-trip as validation
    print(f"wrote {args.output}: n={inst.n} k={inst.k} T={inst.T} beta={inst.beta}")
    return 0


# ---------------------------------------------------------------- run


def _ensemble_traces(inst: Instance, seeds: list[int]):
    frac = run_fractional(inst)
    incs = [(i.tau, i.flush, i.delta) for i in frac.solution.increments]
    stream = structure_stream(incs, inst)
    traces = [randomized_round(stream, inst, seed) for seed in seeds]
    return frac, stream, traces


def _oracle_cost(inst: Instance, model: str, h: int):
    try:
        if model == "evict":
            return opt_eviction(inst, h)[0]
        return opt_fetching(inst, h)[0]
    except OracleIntractableError:
        return None


def cmd_run(args) -> int:
    inst = Instance.load(args.instance)
    prefix = args.output or os.path.splitext(args.instance)[0] + "." + args.alg
    h = args.h or inst.k
    summary: dict = {
        "instance": os.path.basename(args.instance),
        "algorithm": args.alg,
        "n": inst.n,
        "k": inst.k,
        "beta": inst.beta,
        "h": h,
    }
    tol = args.tol

    if args.alg == "det":
        res = run_deterministic(inst)
        res.trace.validate()
        res.ledger.check_feasible(inst)
        res.trace.save(prefix + ".trace.jsonl")
        res.ledger.save_certificate(prefix + ".cert.json", inst, res.primal_cost)
        opt = _oracle_cost(inst, "evict", inst.k)
        summary.update(
            model="evict",
            cost=_f(res.primal_cost),
            dual_objective=_f(res.ledger.objective),
            bound=inst.k,
        )
        ok = True
        if opt is not None:
            summary["oracle"] = _f(opt)
            summary["ratio"] = _f(res.primal_cost / opt) if opt > 0 else 0.0
            ok = res.primal_cost <= inst.k * opt + tol
            ok = ok and res.ledger.objective <= opt + 1e-6
        summary["pass"] = ok
    elif args.alg == "frac":
        res = run_fractional(inst, check_each_step=True)
        res.ledger.check_feasible(inst)
        res.solution.save_increments(prefix + ".increments.jsonl")
        res.ledger.save_certificate(prefix + ".cert.json", inst, res.primal_cost)
        dual = res.ledger.objective
        bound = res.competitive_bound
        summary.update(
            model="evict",
            cost=_f(res.primal_cost),
            dual_objective=_f(dual),
            bound=_f(bound),
        )
        summary["pass"] = res.primal_cost <= bound * dual + 1e-6
        opt = _oracle_cost(inst, "evict", inst.k)
        if opt is not None:
            summary["oracle"] = _f(opt)
            summary["ratio"] = _f(res.primal_cost / opt) if opt > 0 else 0.0
    elif args.alg == "frac-round":
        seeds = args.seeds
        frac, stream, traces = _ensemble_traces(inst, seeds)
        for tr in traces:
            tr.validate()
        traces[0].save(prefix + ".trace.jsonl")
        costs = [tr.eviction_cost + tr.fetching_cost for tr in traces]
        mean, stderr = _mean_stderr(costs)
        gamma = gamma_for(inst)
        rhs = (gamma + 2.0) * stream.cost + inst.total_block_cost
        summary.update(
            model="evict",
            seeds=seeds,
            cost=_f(mean),
            stderr=_f(stderr),
            gamma=_f(gamma),
            structured_cost=_f(stream.cost),
            fractional_cost=_f(frac.primal_cost),
            bound=_f(rhs),
        )
        summary["pass"] = mean <= rhs * 1.1
    elif args.alg in ("bicriteria-fetch", "bicriteria-evict"):
        seeds = args.seeds
        _frac, _stream, traces = _ensemble_traces(inst, seeds)
        if args.alg == "bicriteria-fetch":
            out = derandomize_ensemble(traces, inst)
            cost = out.fetching_cost
            model = "fetch"
        else:
            x = trace_to_x_mean(traces, inst)
            out = bicriteria_round_evict(x, inst)
            cost = out.eviction_cost
            model = "evict"
        out.validate()
        out.save(prefix + ".trace.jsonl")
        summary.update(
            model=model,
            seeds=seeds,
            cost=_f(cost),
            space_bound=2 * inst.k,
        )
        summary["pass"] = True
    else:  # opt
        model = args.model
        try:
            if model == "evict":
                cost, trace = opt_eviction(inst, h)
            else:
                cost, trace = opt_fetching(inst, h)
        except OracleIntractableError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        trace.validate()
        trace.save(prefix + ".trace.jsonl")
        summary.update(model=model, cost=_f(cost), oracle=_f(cost))
        summary["pass"] = True

    _write_json(prefix + ".summary.json", summary)
    print(f"{args.alg}: cost={summary['cost']} pass={summary['pass']}")
    return 0 if summary["pass"] else 1


def trace_to_x_mean(traces: list[PolicyTrace], inst: Instance) -> list[list]:
    """Mean missing-value trajectory of an ensemble of integral traces."""
    N = len(traces)
    x: list[list] = []
    for t in range(inst.T + 1):
        row = [None]
        for p in range(1, inst.n + 1):
            present = sum(1 for tr in traces if p in tr.cache_at(t))
            row.append(1.0 - present / N)
        x.append(row)
    return x


# ---------------------------------------------------------------- verify


def _verify_worked_example() -> list[str]:
    """Fixed 8-page, 3-block coverage example with known exact values."""
    inst = Instance(
        n=8,
        k=4,
        blocks=((1, 2, 3), (4, 5, 6), (7, 8)),
        costs=(1.0, 1.0, 1.0),
        requests=(1, 2, 3, 4, 5, 6, 3, 7, 8),
    )
    oracle = CoverageOracle(inst, build_request_index(inst))
    tau = 9
    failures = []
    s1 = FlushSet.from_flushes(3, [(0, 4)])
    s2 = FlushSet.from_flushes(3, [(1, 8)])
    s12 = FlushSet.from_flushes(3, [(0, 4), (1, 8)])
    for S, want, label in ((s1, 2, "first"), (s2, 3, "second"), (s12, 4, "union")):
        got = oracle.f_tau(S, tau)
        if got != want:
            failures.append(f"worked example {label}: got {got}, want {want}")
    return failures


def _verify_instance(path: str) -> list[str]:
    failures = []
    try:
        inst = Instance.load(path)
    except (InstanceError, ValueError, KeyError) as exc:
        return [f"instance invalid: {exc}"]
    oracle = CoverageOracle(inst, build_request_index(inst))
    rng = random.Random(0)
    ground = [
        (b, t) for b in range(inst.num_blocks) for t in range(inst.T + 1)
    ]
    for _ in range(100):
        if not ground or inst.T == 0:
            break
        tau = rng.randint(1, inst.T)
        S = FlushSet.from_flushes(
            inst.num_blocks, rng.sample(ground, rng.randint(0, min(6, len(ground))))
        )
        Sp = S.copy()
        extra = rng.choice(ground)
        Sp.add(*extra)
        fl = rng.choice(ground)
        m_small = oracle.marginal(S, fl, tau)
        m_large = oracle.marginal(Sp, fl, tau)
        if oracle.f_tau(Sp, tau) < oracle.f_tau(S, tau):
            failures.append(f"monotonicity violated at tau={tau}")
        if fl not in Sp and fl != extra and m_large > m_small:
            failures.append(f"diminishing returns violated at tau={tau}")
    return failures


def _verify_trace(path: str, inst: Instance, capacity: int) -> list[str]:
    trace = PolicyTrace.load(path, inst, capacity)
    try:
        trace.validate()
    except ValueError as exc:
        return [f"trace invalid: {exc}"]
    x = trace_to_x(trace)
    from .rounding import derive_block_rates

    bad = naive_lp_check(x, derive_block_rates(x, inst, +1), +1, inst)
    if bad is not None and bad.kind != "capacity":
        return [f"trace trajectory check failed: {bad}"]
    return []


def _verify_increments(path: str, inst: Instance, exhaustive: bool) -> list[str]:
    from .frac_online import FractionalSolution

    entries = []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            entries.append((rec["tau"], (rec["block"], rec["t"]), rec["delta"]))
    sol = FractionalSolution.replay(inst, entries)
    oracle = CoverageOracle(inst, build_request_index(inst))
    failures = []
    checker = check_feasible_exhaustive if exhaustive else check_feasible
    for tau in range(1, inst.T + 1):
        # only mass added up to tau exists at tau
        cutoff = {}
        for inc in sol.increments:
            if inc.tau <= tau:
                cutoff[inc.flush] = cutoff.get(inc.flush, 0.0) + inc.delta
        for b in range(inst.num_blocks):
            cutoff[(b, 0)] = 1.0
        ok, bad = checker(cutoff, oracle, tau)
        if not ok:
            failures.append(f"increment log infeasible at tau={tau}")
    return failures


def cmd_verify(args) -> int:
    failures: list[str] = []
    if args.fixture:
        if args.fixture != "coverage-example":
            print(f"error: unknown fixture {args.fixture!r}", file=sys.stderr)
            return 2
        failures += _verify_worked_example()
    inst = Instance.load(args.instance) if args.instance else None
    if args.instance:
        failures += _verify_instance(args.instance)
    if args.trace:
        if inst is None:
            print("error: --trace requires --instance", file=sys.stderr)
            return 2
        failures += _verify_trace(args.trace, inst, args.capacity or inst.k)
    if args.increments:
        if inst is None:
            print("error: --increments requires --instance", file=sys.stderr)
            return 2
        failures += _verify_increments(args.increments, inst, args.exhaustive)
    if not (args.fixture or args.instance):
        print("error: nothing to verify", file=sys.stderr)
        return 2
    for msg in failures:
        print(f"FAIL: {msg}")
    if not failures:
        print("PASS")
    return 1 if failures else 0


# ---------------------------------------------------------------- report


REPORT_COLUMNS = [
    "instance",
    "algorithm",
    "model",
    "cost",
    "oracle",
    "ratio",
    "bound",
    "lower_bound",
    "pass",
]


def _lower_bound(summary: dict) -> str:
    """Resource-augmentation lower bound (k+(beta-1)(h-1))/(k-h+1)."""
    k, beta, h = summary.get("k"), summary.get("beta"), summary.get("h")
    if not all(isinstance(v, int) for v in (k, beta, h)):
        return ""
    if h > k - beta + 1:
        return ""
    return f"{(k + (beta - 1) * (h - 1)) / (k - h + 1):.12g}"


def cmd_report(args) -> int:
    rows = []
    for path in args.summaries:
        with open(path) as fh:
            s = json.load(fh)
        row = {c: "" for c in REPORT_COLUMNS}
        for c in ("instance", "algorithm", "model"):
            row[c] = s.get(c, "")
        for c in ("cost", "oracle", "ratio", "bound"):
            if c in s:
                row[c] = f"{s[c]:.12g}"
        row["lower_bound"] = _lower_bound(s)
        if "pass" in s:
            row["pass"] = "pass" if s["pass"] else "fail"
        rows.append(row)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(out, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.output:
            out.close()
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockcache", description="block-aware caching laboratory"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate an instance file")
    gen_sub = gen.add_subparsers(dest="kind", required=True)
    g1 = gen_sub.add_parser("gap", help="two-block round-robin family")
    g1.add_argument("--beta", type=int, required=True)
    g1.add_argument("--rounds", type=int, required=True)
    g2 = gen_sub.add_parser("beta-off", help="cost-model separation family")
    g2.add_argument("--beta", type=int, required=True)
    g2.add_argument("--L", type=int, required=True)
    g2.add_argument(
        "--direction", choices=["evict-heavy", "fetch-heavy"], default="evict-heavy"
    )
    g3 = gen_sub.add_parser("random", help="seeded random instance")
    g3.add_argument("--n", type=int, required=True)
    g3.add_argument("--k", type=int, required=True)
    g3.add_argument("--beta", type=int, required=True)
    g3.add_argument("--T", type=int, required=True)
    g3.add_argument("--seed", type=int, default=0)
    g3.add_argument("--cost-profile", choices=["unit", "log-uniform"], default="unit")
    g3.add_argument("--delta", type=float, default=1.0)
    for g in (g1, g2, g3):
        g.add_argument("-o", "--output", required=True)

    run = sub.add_parser("run", help="run an algorithm and write artifacts")
    run.add_argument("--instance", required=True)
    run.add_argument(
        "--alg",
        required=True,
        choices=["det", "frac", "frac-round", "bicriteria-fetch", "bicriteria-evict", "opt"],
    )
    run.add_argument("--model", choices=["evict", "fetch"], default="evict")
    run.add_argument("--seeds", type=int, nargs="+", default=[0])
    run.add_argument("--h", type=int, default=None, help="offline cache size")
    run.add_argument("--tol", type=float, default=1e-9)
    run.add_argument("-o", "--output", default=None, help="output path prefix")

    ver = sub.add_parser("verify", help="run verification suites")
    ver.add_argument("--instance", default=None)
    ver.add_argument("--trace", default=None)
    ver.add_argument("--increments", default=None)
    ver.add_argument("--capacity", type=int, default=None)
    ver.add_argument("--fixture", default=None, help="named fixture: coverage-example")
    ver.add_argument("--exhaustive", action="store_true")

    rep = sub.add_parser("report", help="summaries to CSV")
    rep.add_argument("summaries", nargs="+")
    rep.add_argument("-o", "--output", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args)
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_report(args)
    except InstanceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

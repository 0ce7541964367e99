"""k-competitive deterministic online algorithm with primal/dual bookkeeping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .instance import Instance, PolicyTrace, RequestIndex, build_request_index
from .submodular import CoverageOracle, Flush, FlushSet

DUAL_EPS = 1e-9


@dataclass
class DualRecord:
    tau: int
    coefficient: int
    y: float


@dataclass
class DualLedger:
    """Accumulated dual mass per tracked flush plus the raised dual records.

    A flush's mass is the sum over raised variables of its marginal
    coefficient at raise time; feasibility means mass <= c_B for every
    tracked flush.  Coefficients are frozen at raise time, so past
    contributions never change.
    """

    mass: dict[Flush, float] = field(default_factory=dict)
    records: list[DualRecord] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return sum(r.coefficient * r.y for r in self.records)

    def raise_dual(self, tau: int, coefficient: int, dy: float, rates: dict[Flush, int]):
        self.records.append(DualRecord(tau=tau, coefficient=coefficient, y=dy))
        for flush, rate in rates.items():
            if rate:
                self.mass[flush] = self.mass.get(flush, 0.0) + rate * dy

    def check_feasible(self, instance: Instance, eps: float = DUAL_EPS) -> None:
        for (b, _t), a in self.mass.items():
            if a > instance.costs[b] + eps:
                raise AssertionError(
                    f"dual constraint of block {b} overshot: {a} > {instance.costs[b]}"
                )

    def certificate(self, instance: Instance, primal_cost: float) -> dict:
        return {
            "records": [
                {"tau": r.tau, "coefficient": r.coefficient, "y": float(f"{r.y:.12g}")}
                for r in self.records
            ],
            "dual_objective": float(f"{self.objective:.12g}"),
            "primal_cost": float(f"{primal_cost:.12g}"),
            "mass": [
                {
                    "block": b,
                    "t": t,
                    "mass": float(f"{a:.12g}"),
                    "cost": instance.costs[b],
                }
                for (b, t), a in sorted(self.mass.items())
            ],
        }

    def save_certificate(self, path: str, instance: Instance, primal_cost: float):
        with open(path, "w") as fh:
            json.dump(self.certificate(instance, primal_cost), fh, indent=2)
            fh.write("\n")


@dataclass
class DetResult:
    trace: PolicyTrace
    flushes: FlushSet
    ledger: DualLedger
    phi: dict[Flush, float]
    primal_cost: float


def next_tight_increase(
    ledger: DualLedger,
    S: FlushSet,
    oracle: CoverageOracle,
    tau: int,
) -> tuple[Flush, float, dict[Flush, int]]:
    """Smallest dual increase that makes some alive flush's constraint tight.

    Candidates are alive flushes with marginal >= 1; dead flushes are
    dominated by the latest alive flush at or before them, so restricting to
    alive ones loses nothing.  Ties break lexicographically on (block, t).
    """
    inst = oracle.instance
    rates: dict[Flush, int] = {}
    best: tuple[float, Flush] | None = None
    for flush in oracle.index.alive_flushes(tau):
        if flush in S:
            continue
        m = oracle.marginal(S, flush, tau)
        if m < 1:
            continue
        rates[flush] = m
        gap = (inst.costs[flush[0]] - ledger.mass.get(flush, 0.0)) / m
        if best is None or gap < best[0] - 1e-15 or (
            abs(gap - best[0]) <= 1e-15 and flush < best[1]
        ):
            best = (gap, flush)
    if best is None:
        raise AssertionError("overflowed cache but no flush with positive marginal")
    return best[1], best[0], rates


def run_deterministic(instance: Instance) -> DetResult:
    """Primal-dual deterministic policy: on overflow, raise the current dual
    variable until an alive flush's constraint is tight, then flush that
    block at the current step."""
    index = build_request_index(instance)
    oracle = CoverageOracle(instance, index)
    S = FlushSet(instance.num_blocks)
    phi: dict[Flush, float] = {(b, 0): 1.0 for b in range(instance.num_blocks)}
    ledger = DualLedger()
    trace = PolicyTrace(instance=instance, capacity_bound=instance.k)
    cache: set[int] = set()
    primal_cost = 0.0

    for tau in range(1, instance.T + 1):
        p = instance.request(tau)
        fetched = [] if p in cache else [p]
        cache.add(p)
        step_flushes: list[Flush] = []
        if len(cache) > instance.k:
            coefficient = instance.n - instance.k - oracle.f_tau(S, tau)
            (b0, _t0), dy, rates = next_tight_increase(ledger, S, oracle, tau)
            ledger.raise_dual(tau, coefficient, dy, rates)
            ledger.mass[(b0, _t0)] = instance.costs[b0]  # snap to exactly tight
            cache -= set(instance.blocks[b0]) - {p}
            phi[(b0, tau)] = 1.0
            S.add(b0, tau)
            primal_cost += instance.costs[b0]
            step_flushes.append((b0, tau))
        trace.record(tau, step_flushes, fetched, cache)

    return DetResult(
        trace=trace, flushes=S, ledger=ledger, phi=phi, primal_cost=primal_cost
    )

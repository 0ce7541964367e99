"""Ground truth: brute-force offline optima, fractional cost functionals,
the naive LP checker, and the hand-built gap-instance fractional solution."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import chain, combinations
from math import comb

from .instance import Instance, PolicyTrace, build_request_index, gen_gap_instance
from .submodular import CoverageOracle, Flush, FlushSet, PhiView

DP_STATE_LIMIT = 10**6
LP_EPS = 1e-9


class OracleIntractableError(ValueError):
    """State space exceeds the exact-DP budget."""


def _subsets(items):
    items = list(items)
    return chain.from_iterable(
        combinations(items, r) for r in range(len(items) + 1)
    )


def _check_dp_budget(instance: Instance, h: int) -> None:
    size = comb(instance.n, min(h, instance.n)) * max(1, instance.T)
    if size > DP_STATE_LIMIT:
        raise OracleIntractableError(
            f"DP state bound {size} exceeds limit {DP_STATE_LIMIT}"
        )


def _trace_from_path(
    instance: Instance, h: int, states: list[frozenset[int]]
) -> PolicyTrace:
    """Rebuild a step trace from the DP's cache-contents path."""
    trace = PolicyTrace(
        instance=instance, capacity_bound=h, initial_cache=states[0]
    )
    for t in range(1, instance.T + 1):
        prev, cur = states[t - 1], states[t]
        evicted = prev - cur
        fetched = sorted(cur - prev)
        flushes = [(b, t) for b in {instance.block_of(p) for p in evicted}]
        trace.record(t, flushes, fetched, cur)
    return trace


def _run_dp(
    instance: Instance, h: int, transitions, free_initial_evictions: bool
) -> tuple[float, PolicyTrace]:
    """Shortest path over cache-contents states.

    ``transitions(prev, t)`` yields (next_state, step_cost).  With
    ``free_initial_evictions`` the start layer contains every subset of the
    initial cache at zero cost (the fetching model, where evictions are
    free); otherwise the cache starts exactly as given and dropping initial
    pages is paid like any other eviction.
    """
    best: dict[frozenset[int], tuple[float, tuple]] = {}
    if free_initial_evictions:
        for sub in _subsets(instance.initial_cache):
            best[frozenset(sub)] = (0.0, None)
    else:
        best[frozenset(instance.initial_cache)] = (0.0, None)
    for t in range(1, instance.T + 1):
        nxt: dict[frozenset[int], tuple[float, tuple]] = {}
        for prev, (cost, _) in best.items():
            for state, step_cost in transitions(prev, t):
                total = cost + step_cost
                cur = nxt.get(state)
                if cur is None or total < cur[0] - 1e-12:
                    nxt[state] = (total, (prev, best[prev]))
        best = nxt
    end_state = min(best, key=lambda s: (best[s][0], sorted(s)))
    cost = best[end_state][0]
    path = [end_state]
    link = best[end_state][1]
    while link is not None:
        path.append(link[0])
        link = link[1][1]
    path.reverse()
    return cost, _trace_from_path(instance, h, path)


def opt_eviction(instance: Instance, h: int | None = None) -> tuple[float, PolicyTrace]:
    """Exact minimum eviction cost over all feasible trajectories.

    Fetches are free, so the next cache may keep any subset of the previous
    contents plus the requested page; each evicted block costs c_B once per
    step.  Evicting initially cached pages is paid like any other eviction.
    """
    h = instance.k if h is None else h
    _check_dp_budget(instance, h)

    def transitions(prev: frozenset[int], t: int):
        p = instance.request(t)
        pool = sorted((prev | {p}) - {p})
        for evicted in _subsets(pool):
            state = (prev | {p}) - set(evicted)
            if len(state) > h:
                continue
            cost = sum(
                instance.costs[b]
                for b in {instance.block_of(q) for q in evicted}
            )
            yield frozenset(state), cost

    return _run_dp(instance, h, transitions, free_initial_evictions=False)


def opt_fetching(instance: Instance, h: int | None = None) -> tuple[float, PolicyTrace]:
    """Exact minimum fetching cost; evictions are free.

    Batched fetches only ever pay off within the requested page's block, so
    transitions fetch a subset of that block; every fetch batch costs the
    block cost once.
    """
    h = instance.k if h is None else h
    _check_dp_budget(instance, h)

    def transitions(prev: frozenset[int], t: int):
        p = instance.request(t)
        block = instance.blocks[instance.block_of(p)]
        extra = sorted(set(block) - prev - {p})
        for kept in _subsets(sorted(prev - {p})):
            for batch in _subsets(extra):
                state = frozenset(kept) | set(batch) | {p}
                if len(state) > h:
                    continue
                fetched_any = p not in prev or batch
                cost = instance.costs[instance.block_of(p)] if fetched_any else 0.0
                yield frozenset(state), cost

    return _run_dp(instance, h, transitions, free_initial_evictions=True)


def opt_eviction_flushsets(instance: Instance) -> float:
    """Eviction optimum by enumerating flush sets; independent of the DP.

    Exponential in (number of blocks) * T; tiny instances only.  The flush
    formulation assumes an empty starting cache.
    """
    if instance.initial_cache:
        raise ValueError("flush-set enumeration requires an empty initial cache")
    index = build_request_index(instance)
    oracle = CoverageOracle(instance, index)
    ground = [
        (b, t) for b in range(instance.num_blocks) for t in range(1, instance.T + 1)
    ]
    best = None
    for chosen in _subsets(ground):
        S = FlushSet(instance.num_blocks)
        for b, t in chosen:
            S.add(b, t)
        if all(
            oracle.f_tau(S, tau) == instance.n - instance.k
            for tau in range(1, instance.T + 1)
        ):
            cost = sum(instance.costs[b] for b, _t in chosen)
            if best is None or cost < best:
                best = cost
    assert best is not None  # the all-flushes set is always feasible
    return best


def trace_to_x(trace: PolicyTrace) -> list[list]:
    """0/1 missing-page trajectory of an integral trace; x[t][p], t in [0,T]."""
    inst = trace.instance
    out = []
    for t in range(inst.T + 1):
        cache = trace.cache_at(t)
        row = [None] + [0 if p in cache else 1 for p in range(1, inst.n + 1)]
        out.append(row)
    return out


def fractional_costs_from_x(x: list[list], instance: Instance) -> tuple:
    """(eviction, fetching) cost of a per-page trajectory.

    Per block and step, eviction pays the largest rise of a member page's
    missing value and fetching pays the largest drop.
    """
    evict = fetch = 0
    for t in range(1, instance.T + 1):
        for b, blk in enumerate(instance.blocks):
            rise = max((x[t][p] - x[t - 1][p] for p in blk), default=0)
            drop = max((x[t - 1][p] - x[t][p] for p in blk), default=0)
            if rise > 0:
                evict += instance.costs[b] * rise
            if drop > 0:
                fetch += instance.costs[b] * drop
    return evict, fetch


def fractional_costs(
    phi: dict[Flush, float],
    instance: Instance,
    initial_cache: frozenset[int] | None = None,
) -> tuple[float, float]:
    """(eviction, fetching) cost of a sparse flush solution.

    Eviction is the weighted flush mass after time 0; fetching is derived
    from the induced per-page missing trajectory.
    """
    if initial_cache is None:
        initial_cache = instance.initial_cache
    index = build_request_index(instance)
    oracle = CoverageOracle(instance, index)
    view = PhiView(phi, instance.num_blocks)
    evict = sum(instance.costs[b] * v for (b, t), v in phi.items() if t >= 1)
    x = [[None] + [0.0 if p in initial_cache else 1.0 for p in range(1, instance.n + 1)]]
    for t in range(1, instance.T + 1):
        x.append([None] + [view.x(oracle, p, t) for p in range(1, instance.n + 1)])
    _evict_from_x, fetch = fractional_costs_from_x(x, instance)
    assert fetch <= instance.beta * (evict + instance.total_block_cost) + 1e-9
    return evict, fetch


@dataclass
class LPViolation:
    kind: str
    t: int
    who: int  # page or block index depending on kind
    amount: float

    def __str__(self):
        return f"{self.kind} violated at t={self.t} ({self.who}): {self.amount}"


def naive_lp_check(
    x: list[list],
    phi: list[list],
    sigma: int,
    instance: Instance,
    eps: float = LP_EPS,
) -> LPViolation | None:
    """Checks the simple per-page LP; sigma=+1 is the eviction orientation,
    sigma=-1 the fetching orientation.  Returns the first violation."""
    assert sigma in (+1, -1)
    n, T = instance.n, instance.T
    for t in range(T + 1):
        for p in range(1, n + 1):
            v = x[t][p]
            if v < -eps or v > 1 + eps:
                return LPViolation("x-bounds", t, p, float(v))
    for t in range(1, T + 1):
        for b in range(instance.num_blocks):
            v = phi[t][b]
            if v < -eps or v > 1 + eps:
                return LPViolation("phi-bounds", t, b, float(v))
    for t in range(1, T + 1):
        p_t = instance.request(t)
        if abs(x[t][p_t]) > eps:
            return LPViolation("requested-page", t, p_t, float(x[t][p_t]))
        total = sum(x[t][p] for p in range(1, n + 1))
        if total < n - instance.k - eps:
            return LPViolation("capacity", t, 0, float(total))
        for b, blk in enumerate(instance.blocks):
            for p in blk:
                need = sigma * (x[t][p] - x[t - 1][p])
                if phi[t][b] < need - eps:
                    return LPViolation("block-rate", t, b, float(need - phi[t][b]))
    return None


@dataclass
class GapSolution:
    """Hand-built fractional solution for the gap instance.

    Keeps the requested block fully loaded and the other block loaded to
    extent (beta-1)/beta; values are exact rationals.
    """

    instance: Instance
    x: list[list]
    phi_evict: list[list]
    phi_fetch: list[list]

    @property
    def eviction_cost(self) -> Fraction:
        return sum(
            Fraction(self.instance.costs[b]) * self.phi_evict[t][b]
            for t in range(1, self.instance.T + 1)
            for b in range(self.instance.num_blocks)
        )

    @property
    def fetching_cost(self) -> Fraction:
        return sum(
            Fraction(self.instance.costs[b]) * self.phi_fetch[t][b]
            for t in range(1, self.instance.T + 1)
            for b in range(self.instance.num_blocks)
        )


def gap_fractional_solution(beta: int, rounds: int) -> GapSolution:
    instance = gen_gap_instance(beta, max(rounds, 1))
    if rounds == 0:
        instance = Instance(
            n=instance.n,
            k=instance.k,
            blocks=instance.blocks,
            costs=instance.costs,
            requests=(),
        )
    n, T = instance.n, instance.T
    small = Fraction(1, beta)
    x: list[list] = [[None] + [Fraction(1)] * n]
    phi_e: list[list] = [None]
    phi_f: list[list] = [None]
    for t in range(1, T + 1):
        phase = 0 if ((t - 1) % (2 * beta)) < beta else 1
        row = [None] + [
            Fraction(0) if instance.block_of(p) == phase else small
            for p in range(1, n + 1)
        ]
        x.append(row)
        rises = [
            max(
                (x[t][p] - x[t - 1][p] for p in instance.blocks[b]),
                default=Fraction(0),
            )
            for b in range(2)
        ]
        drops = [
            max(
                (x[t - 1][p] - x[t][p] for p in instance.blocks[b]),
                default=Fraction(0),
            )
            for b in range(2)
        ]
        phi_e.append([max(r, Fraction(0)) for r in rises])
        phi_f.append([max(d, Fraction(0)) for d in drops])
    return GapSolution(instance=instance, x=x, phi_evict=phi_e, phi_fetch=phi_f)

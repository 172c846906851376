"""Descending auctions driven by a demand oracle and an adversarial schedule.

Prices start at each seller's initial marginal and only ever move down.
While the demand oracle rejects part of the active set, the schedule picks
an undemanded seller and decrements its price; a seller whose price falls
below its bid leaves with payment zero.  The auction ends when everything
active is demanded, paying current prices.

Two demand oracles ship: the exact welfare maximizer, which an adversarial
schedule can drive to arbitrarily poor welfare on the structured family,
and the stateful cost-scaled oracle, which admits the previously
decremented seller once its marginal exceeds twice its price and is immune
to the adversary up to an n*epsilon term.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .online import as_arrival_order
from .scoring import ScoringRule, UnsupportedRuleError, online_price
from .sealed_bid import AuctionOutcome, DEFAULT_OPT_CONFIG, ExactOptimizerConfig, best_subset
from .valuation import AdversarialFamilyOracle, ValuationOracle, canonical_set


class ScheduleError(RuntimeError):
    """A schedule picked a seller outside the undemanded active set."""


class DemandStateError(RuntimeError):
    """A stateful demand oracle was reused across auction runs."""


# ---------------------------------------------------------------------------
# Demand oracles
# ---------------------------------------------------------------------------


class ExactDemand:
    """Welfare-maximizing demanded set at current prices.

    Ties prefer smaller sets (then lexicographic), so a seller priced at
    exactly its marginal is not demanded, matching the strict positive-score
    gates used everywhere else.
    """

    def __init__(self, oracle: ValuationOracle, cfg: ExactOptimizerConfig = DEFAULT_OPT_CONFIG):
        self.oracle = oracle
        self.cfg = cfg

    def begin_run(self) -> None:
        pass

    def __call__(self, active: frozenset[int], prices: Sequence[float], prev_selected: int | None) -> frozenset[int]:
        if len(active) > self.cfg.max_exhaustive_n:
            from .sealed_bid import CapacityError

            raise CapacityError(f"{len(active)} active sellers exceed the exhaustive cap")
        demanded, _ = best_subset(
            self.oracle,
            prices,
            active,
            prefer_small=True,
            use_bound_pruning=self.cfg.use_bound_pruning,
        )
        return frozenset(demanded)


class FamilyExactDemand:
    """Closed-form exact demand for the adversarial family oracle.

    The structured valuation admits a case analysis: the best set is either
    the profitable unit sellers, a single cheapest special seller, or
    nothing.  This keeps the exact-oracle lower-bound run polynomial where
    brute force would be exponential; it agrees with ExactDemand on every
    price vector, which the tests check exhaustively at small L.
    """

    def __init__(self, oracle: AdversarialFamilyOracle):
        self.oracle = oracle

    def begin_run(self) -> None:
        pass

    def __call__(self, active: frozenset[int], prices: Sequence[float], prev_selected: int | None) -> frozenset[int]:
        L = self.oracle.L
        units = tuple(sorted(i for i in active if i < L and prices[i] < 1.0))
        unit_welfare = sum(1.0 - prices[i] for i in units)
        candidates: list[tuple[float, int, tuple[int, ...]]] = [
            (0.0, 0, ()),
            (unit_welfare, len(units), units),
        ]
        for s in self.oracle.specials:
            if s in active:
                candidates.append((L - prices[s], 1, (s,)))
        best = max(candidates, key=lambda c: (c[0], -c[1], tuple(-x for x in c[2])))
        return frozenset(best[2])


class CostScaledDemand:
    """Stateful demand oracle from the cost-scaled greedy admission test.

    Keeps a tentative set T; on each call the seller decremented in the
    previous iteration joins T if its marginal exceeds twice its current
    price.  Members of T are returned demanded forever, so a compliant
    schedule never decrements them again.  One instance serves one run.
    """

    def __init__(self, oracle: ValuationOracle):
        self.oracle = oracle
        self.scratch = oracle.scratch()
        self._started = False

    @property
    def tentative(self) -> tuple[int, ...]:
        return self.scratch.members

    def begin_run(self) -> None:
        if self._started:
            raise DemandStateError("cost-scaled demand state cannot be reused across runs")
        self._started = True

    def __call__(self, active: frozenset[int], prices: Sequence[float], prev_selected: int | None) -> frozenset[int]:
        i = prev_selected
        if i is not None and i in active and i not in self.scratch and self.scratch.marginal(i) > 2.0 * prices[i]:
            self.scratch.add(i)
        return frozenset(self.scratch.members)


def cost_scaled_demand(
    state: CostScaledDemand,
    previous_selected: int | None,
    active: Iterable[int],
    prices: Sequence[float],
) -> frozenset[int]:
    """Functional form of the stateful oracle update."""
    return state(frozenset(active), prices, previous_selected)


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


class LexicographicSchedule:
    def pick(self, active: set[int], demanded: frozenset[int], prices: Sequence[float]) -> int:
        return min(i for i in active if i not in demanded)


class RoundRobinSchedule:
    def __init__(self, n: int):
        self.n = n
        self._cursor = 0

    def pick(self, active: set[int], demanded: frozenset[int], prices: Sequence[float]) -> int:
        for step in range(self.n):
            i = (self._cursor + step) % self.n
            if i in active and i not in demanded:
                self._cursor = (i + 1) % self.n
                return i
        raise ScheduleError("no undemanded active seller")


class ScriptedSchedule:
    """Fixed priority order; picks its first undemanded active entry."""

    def __init__(self, priority: Sequence[int]):
        self.priority = tuple(int(i) for i in priority)

    def pick(self, active: set[int], demanded: frozenset[int], prices: Sequence[float]) -> int:
        for i in self.priority:
            if i in active and i not in demanded:
                return i
        raise ScheduleError("scripted priority exhausted")


class AdversarialFamilySchedule:
    """The lower-bound adversary for the structured family.

    Phase one hammers the special sellers until one of them is priced below
    L - 1; phase two walks the unit sellers in index order, pressing each
    until it drops or becomes demanded, falling back to whatever special
    remains undemanded at the end.
    """

    def __init__(self, L: int):
        self.L = L

    def pick(self, active: set[int], demanded: frozenset[int], prices: Sequence[float]) -> int:
        L = self.L
        specials = [s for s in (L, L + 1) if s in active]
        pickable_specials = [s for s in specials if s not in demanded]
        if specials and min(prices[s] for s in specials) >= L - 1 and pickable_specials:
            return pickable_specials[0]
        for i in range(L):
            if i in active and i not in demanded:
                return i
        if pickable_specials:
            return pickable_specials[0]
        raise ScheduleError("no undemanded active seller")


def random_scripted_schedules(n: int, count: int, seed: int) -> list[ScriptedSchedule]:
    rng = np.random.default_rng(seed)
    return [ScriptedSchedule(rng.permutation(n)) for _ in range(count)]


def named_schedule(spec: str, n: int):
    """Schedule from a CLI-style selector.

    Accepts "lex", "rr", "adversarial-family" (valid on family instances
    with n = L + 2 sellers), or "scripted:<path>" with one seller index per
    line giving the priority order.
    """
    if spec == "lex":
        return LexicographicSchedule()
    if spec == "rr":
        return RoundRobinSchedule(n)
    if spec == "adversarial-family":
        if n < 3:
            raise ValueError("the family schedule needs at least three sellers")
        return AdversarialFamilySchedule(n - 2)
    if spec.startswith("scripted:"):
        with open(spec.split(":", 1)[1]) as fh:
            return ScriptedSchedule([int(line) for line in fh if line.strip()])
    raise ValueError(f"unknown schedule {spec!r}")


# ---------------------------------------------------------------------------
# The auction loop
# ---------------------------------------------------------------------------


def run_descending(
    oracle: ValuationOracle,
    bids: Sequence[float],
    demand,
    schedule,
    epsilon: float,
) -> AuctionOutcome:
    """Price-descent loop: decrement one undemanded seller per iteration.

    Terminates because prices strictly decrease and sellers drop once
    priced below their bids; a generous iteration cap guards against a
    non-compliant demand/schedule pair.
    """
    if epsilon <= 0:
        raise ValueError(f"step size must be positive, got {epsilon}")
    n = oracle.n
    bids = [float(b) for b in bids]
    if len(bids) != n:
        raise ValueError(f"expected {n} bids, got {len(bids)}")
    prices = [oracle.marginal(i, ()) for i in range(n)]
    active: set[int] = set(range(n))
    demand.begin_run()

    cap = sum(math.ceil(p / epsilon) + 1 for p in prices) + n + 1
    iterations = 0
    prev: int | None = None
    while True:
        demanded = demand(frozenset(active), prices, prev)
        if not demanded <= active:
            raise ScheduleError(f"demand oracle returned inactive sellers {set(demanded) - active}")
        if demanded == active:
            break
        i = schedule.pick(active, demanded, prices)
        if i not in active or i in demanded:
            raise ScheduleError(f"schedule picked {i}, not an undemanded active seller")
        prices[i] -= epsilon
        prev = i
        iterations += 1
        if iterations > cap:
            raise RuntimeError("descending auction exceeded its iteration cap")
        if prices[i] < bids[i]:
            active.remove(i)
            prices[i] = 0.0

    winners = canonical_set(active)
    payments = tuple(prices[i] if i in active else 0.0 for i in range(n))
    return AuctionOutcome(winners, payments, value=oracle.value(winners), trace=None)


def run_descending_from_online(
    rule: ScoringRule,
    oracle: ValuationOracle,
    bids: Sequence[float],
    order: Iterable[int],
    *,
    step_epsilon: float | None = None,
) -> AuctionOutcome:
    """Tailored-schedule descending auction equivalent to posted prices.

    Each seller's price descends from f(k|0) straight to the zero of its
    online score; the seller stays (and is paid that price) iff its bid is
    strictly below it.  ``step_epsilon`` switches on a demonstration mode
    that walks the price down an epsilon grid instead of assigning it,
    paying the first grid price at or below the target.
    """
    if not rule.online_capable:
        raise UnsupportedRuleError(f"rule {rule.kind!r} cannot drive the tailored schedule")
    n = oracle.n
    order = as_arrival_order(order, n)
    bids = [float(b) for b in bids]
    scratch = oracle.scratch()
    payments = [0.0] * n
    admitted: list[int] = []
    for k in order:
        target = online_price(rule, k, scratch.members, oracle)
        if step_epsilon is None:
            offered = target
        else:
            offered = oracle.marginal(k, ())
            while offered > target:
                offered -= step_epsilon
            offered = max(offered, 0.0)
        if bids[k] < offered:
            scratch.add(k)
            admitted.append(k)
            payments[k] = offered
    return AuctionOutcome(canonical_set(admitted), tuple(payments), value=oracle.value(admitted), trace=None)

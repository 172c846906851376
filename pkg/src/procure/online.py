"""Online selection and the posted-price mechanism for adversarial arrivals.

Sellers arrive one at a time in an arbitrary order and each decision is
irrevocable.  The online meta algorithm admits an arrival iff its score at
the current tentative set is strictly positive; the posted-price mechanism
instead offers the arrival the bid at which that score crosses zero, which
the seller accepts exactly when its cost is strictly below the offer.  Both
produce the same winner set, and the telescoping marginals bound the total
payment by the value of the winners.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .scoring import ScoringRule, UnsupportedRuleError, online_price
from .valuation import ValuationOracle, canonical_set


def as_arrival_order(order: Iterable[int], n: int) -> tuple[int, ...]:
    """Validate that ``order`` is a permutation of [0, n)."""
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(n)):
        raise ValueError(f"arrival order must be a permutation of 0..{n - 1}")
    return order


def order_identity(n: int) -> tuple[int, ...]:
    return tuple(range(n))


def order_reverse(n: int) -> tuple[int, ...]:
    return tuple(range(n - 1, -1, -1))


def order_random(n: int, seed: int) -> tuple[int, ...]:
    rng = np.random.default_rng(seed)
    return tuple(int(i) for i in rng.permutation(n))


def named_order(spec: str, n: int, *, rule=None, oracle=None, costs=None) -> tuple[int, ...]:
    """Arrival order from a CLI-style selector.

    Accepts "identity", "reverse", "random:<seed>", "worst-of:<m>" (needs
    the rule/oracle/costs to search over), or "file:<path>" with one seller
    index per line.
    """
    if spec == "identity":
        return order_identity(n)
    if spec == "reverse":
        return order_reverse(n)
    if spec.startswith("random:"):
        return order_random(n, int(spec.split(":", 1)[1]))
    if spec.startswith("worst-of:"):
        if rule is None or oracle is None or costs is None:
            raise ValueError("worst-of orders need the rule, oracle, and costs")
        return worst_sampled_order(rule, oracle, costs, samples=int(spec.split(":", 1)[1]), seed=0)
    if spec.startswith("file:"):
        with open(spec.split(":", 1)[1]) as fh:
            return as_arrival_order((int(line) for line in fh if line.strip()), n)
    raise ValueError(f"unknown arrival order {spec!r}")


@dataclass
class PostedPriceOutcome:
    """Per-arrival offers and responses of one posted-price run.

    A seller accepts iff the posted price strictly exceeds its cost; exact
    ties are rejections.  Payments equal posted prices for winners and are
    zero otherwise.
    """

    winners: tuple[int, ...]
    posted_prices: tuple[float, ...]
    payments: tuple[float, ...]
    accepted: tuple[bool, ...]

    @property
    def total_payment(self) -> float:
        return float(sum(self.payments))

    def to_json(self) -> dict:
        return {
            "winners": list(self.winners),
            "posted_prices": list(self.posted_prices),
            "payments": list(self.payments),
            "accepted": list(self.accepted),
        }


def _check_online(rule: ScoringRule) -> None:
    if not rule.online_capable:
        raise UnsupportedRuleError(f"rule {rule.kind!r} needs the round index; it cannot run online")


def run_online_meta(
    rule: ScoringRule,
    oracle: ValuationOracle,
    costs: Sequence[float],
    order: Iterable[int],
    seed=None,
) -> tuple[int, ...]:
    """Admit each arrival iff its score is strictly positive; irrevocably."""
    _check_online(rule)
    order = as_arrival_order(order, oracle.n)
    scratch = oracle.scratch()
    admitted: list[int] = []
    for pos, k in enumerate(order, start=1):
        sc = rule.score_from_marginal(scratch.marginal(k), float(costs[k]), pos)
        if sc > 0.0:
            scratch.add(k)
            admitted.append(k)
    return canonical_set(admitted)


def run_posted_price(
    rule: ScoringRule,
    oracle: ValuationOracle,
    costs: Sequence[float],
    order: Iterable[int],
    seed=None,
) -> PostedPriceOutcome:
    """Offer each arrival the bid at which its score would hit zero."""
    _check_online(rule)
    n = oracle.n
    order = as_arrival_order(order, n)
    scratch = oracle.scratch()
    posted = [0.0] * n
    payments = [0.0] * n
    accepted = [False] * n
    admitted: list[int] = []
    for k in order:
        price = online_price(rule, k, scratch.members, oracle)
        posted[k] = price
        if costs[k] < price:
            scratch.add(k)
            admitted.append(k)
            payments[k] = price
            accepted[k] = True
    return PostedPriceOutcome(
        winners=canonical_set(admitted),
        posted_prices=tuple(posted),
        payments=tuple(payments),
        accepted=tuple(accepted),
    )


def worst_sampled_order(
    rule: ScoringRule,
    oracle: ValuationOracle,
    costs: Sequence[float],
    samples: int,
    seed: int,
) -> tuple[int, ...]:
    """The welfare-minimizing order among ``samples`` random permutations."""
    _check_online(rule)
    worst_order = order_identity(oracle.n)
    worst_welfare = None
    for s in range(samples):
        order = order_random(oracle.n, seed + s)
        winners = run_online_meta(rule, oracle, costs, order)
        welfare = oracle.value(winners) - sum(costs[i] for i in winners)
        if worst_welfare is None or welfare < worst_welfare:
            worst_welfare, worst_order = welfare, order
    return worst_order

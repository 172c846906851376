"""Sealed-bid mechanisms: critical-bid payments, an exact optimizer, VCG.

The mechanism construction runs the meta selection loop on the reported
bids, then prices each winner at its critical bid: re-run the loop with the
winner's bid raised to infinity, and per round take the supremum bid at
which the winner would simultaneously be the argmax and score positive.
The payment is the maximum of those round suprema, which makes truthful
reporting optimal (Myerson) while the positive-score gate keeps the
auctioneer's surplus nonnegative.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .scoring import NOT_SAMPLED, RandomSeed, ScoringRule, UnsupportedRuleError, as_random_seed
from .selection import SelectionTrace, _check_bids, _marginal_provider, _PlainMarginals, run_meta, run_meta_lazy
from .valuation import ValuationOracle


class CapacityError(ValueError):
    """Instance too large for exhaustive optimization; caller must subsample."""


@dataclass(frozen=True)
class ExactOptimizerConfig:
    max_exhaustive_n: int = 24
    use_bound_pruning: bool = True


DEFAULT_OPT_CONFIG = ExactOptimizerConfig()


@dataclass
class AuctionOutcome:
    """Winners, payments, and the trace that produced them.

    ``payments`` is indexed by seller and zero for losers; ``value`` is
    f(winners) as reported by the oracle that ran the auction.
    """

    winners: tuple[int, ...]
    payments: tuple[float, ...]
    value: float
    trace: SelectionTrace | None = None

    @property
    def total_payment(self) -> float:
        return float(sum(self.payments))

    @property
    def auctioneer_surplus(self) -> float:
        return self.value - self.total_payment

    def welfare(self, costs: Sequence[float]) -> float:
        """f(winners) minus the winners' true costs."""
        return self.value - sum(costs[i] for i in self.winners)

    def to_json(self, include_trace: bool = False) -> dict:
        doc = {
            "winners": list(self.winners),
            "payments": list(self.payments),
            "value": self.value,
            "total_payment": self.total_payment,
            "surplus": self.auctioneer_surplus,
        }
        if include_trace and self.trace is not None:
            doc["trace"] = self.trace.to_json()
        return doc


# ---------------------------------------------------------------------------
# Critical-bid payments (naive, per the n-round re-run)
# ---------------------------------------------------------------------------


def _critical_payment(
    rule: ScoringRule,
    oracle: ValuationOracle,
    bids: Sequence[float],
    seed: RandomSeed,
    i: int,
    ex_trace: SelectionTrace,
    *,
    separate_sups: bool = False,
) -> float:
    """max over rounds k of sup{ z : i argmax at round k and score(z) > 0 }.

    The supremum set is down-closed in z because scores are non-increasing
    in the bid, so it equals min(positive threshold, argmax threshold).
    Rounds are replayed against the infinity-bid trajectory of ``ex_trace``.

    ``separate_sups`` switches to reading the two round suprema as
    independent max updates instead of their conjunction.  That reading
    overpays (a competitor-free round contributes an unbounded argmax
    supremum); it exists for side-by-side study only.

    For a winner the critical bid is at least its own report (it won at
    that report), so the running maximum starts there; this absorbs the
    downward ulp the analytic inversion can introduce at exact score ties.
    """
    n = oracle.n
    provider = _marginal_provider(rule, oracle)
    in_set: set[int] = set()
    best = bids[i]

    for k in range(1, n + 1):
        provider.begin_round(k)
        batch = seed.round_batch(k, n, rule.batch_size()) if rule.randomized else None

        comp_score, comp_id = NOT_SAMPLED, None
        for ell in range(n):
            if ell == i or ell in in_set:
                continue
            if batch is not None and ell not in batch:
                continue
            sc = rule.score_from_marginal(provider.get(ell), bids[ell], k)
            if comp_id is None or sc > comp_score:
                comp_score, comp_id = sc, ell

        if batch is None or i in batch:
            m_i = provider.get(i)
            pos = rule.threshold_from_marginal(m_i, 0.0, k)
            if comp_id is None:
                arg = math.inf
            else:
                arg = rule.threshold_from_marginal(m_i, comp_score, k, wins_tie=i < comp_id)
            z = max(pos, arg) if separate_sups else min(pos, arg)
            if z > best:
                best = z

        for j in ex_trace.tentative_sets[k]:
            if j not in in_set:
                provider.admit(j)
                in_set.add(j)
    return best


def run_sealed_bid(
    rule: ScoringRule,
    oracle: ValuationOracle,
    bids,
    seed: RandomSeed | int | None = None,
    *,
    focus: int | None = None,
    pseudocode_payments: bool = False,
) -> AuctionOutcome:
    """Allocate via the meta loop and pay every winner its critical bid.

    The same seed drives the allocation run and every per-winner re-run.
    ``focus`` restricts the payment computation to one seller, for callers
    that only need that seller's outcome (incentive checks).

    ``pseudocode_payments`` is a debug mode that takes the positive-score
    and argmax suprema as two independent max updates per round rather than
    the supremum of their conjunction; it overpays (competitor-free rounds
    contribute an infinite supremum) and exists only for study.
    """
    if rule.cardinality is not None:
        raise UnsupportedRuleError("the mechanism runs n rounds; cardinality-capped rules are not supported")
    n = oracle.n
    bids = _check_bids(bids, n)
    seed = as_random_seed(seed)
    trace = run_meta(rule, oracle, bids, seed)
    winners = trace.winners
    payments = [0.0] * n
    targets = winners if focus is None else ((focus,) if focus in winners else ())
    for i in targets:
        ex_trace = run_meta(rule, oracle, bids, seed, excluded=i)
        payments[i] = _critical_payment(
            rule, oracle, bids, seed, i, ex_trace, separate_sups=pseudocode_payments
        )
    return AuctionOutcome(winners, tuple(payments), value=oracle.value(winners), trace=trace)


# ---------------------------------------------------------------------------
# Lazy payments for diminishing-return rules
# ---------------------------------------------------------------------------


def _critical_payment_lazy(
    rule: ScoringRule,
    oracle: ValuationOracle,
    bids: Sequence[float],
    i: int,
    admission_round: int,
    trace: SelectionTrace,
) -> float:
    """Continue the greedy without i from its admission point, lazily.

    Rounds before the admission cannot exceed the winner's own bid (it lost
    those argmax races at its own bid), so the running payment starts at
    bids[i].  Once the continuation runs out of positive competitors the
    remaining rounds all contribute i's positive threshold at the final
    tentative set, which is added as the closing term.
    """
    n = oracle.n
    provider = _PlainMarginals(oracle)
    before = trace.tentative_sets[admission_round - 1]
    for j in before:
        provider.admit(j)
    pool = [ell for ell in range(n) if ell != i and ell not in before]

    heap = [(-rule.score_from_marginal(provider.get(ell), bids[ell], admission_round), ell, 0) for ell in pool]
    heapq.heapify(heap)

    payment = bids[i]
    steps = 0
    while steps < n - admission_round and heap:
        epoch = steps
        best_ell, best_score = None, NOT_SAMPLED
        while heap:
            neg, ell, stamp = heapq.heappop(heap)
            if stamp == epoch:
                best_ell, best_score = ell, -neg
                break
            fresh = rule.score_from_marginal(provider.get(ell), bids[ell], admission_round + steps)
            runner_up = -heap[0][0] if heap else NOT_SAMPLED
            if fresh > max(0.0, runner_up) or runner_up < 0.0:
                best_ell, best_score = ell, fresh
                break
            heapq.heappush(heap, (-fresh, ell, epoch))
        if best_ell is None or not best_score > 0.0:
            break
        m_i = provider.get(i)
        z = rule.threshold_from_marginal(m_i, best_score, admission_round + steps, wins_tie=i < best_ell)
        if z > payment:
            payment = z
        provider.admit(best_ell)
        steps += 1

    closing = rule.threshold_from_marginal(provider.get(i), 0.0, min(admission_round + steps, n))
    return max(payment, closing)


def run_sealed_bid_lazy(
    rule: ScoringRule,
    oracle: ValuationOracle,
    bids,
    seed: RandomSeed | int | None = None,
    *,
    focus: int | None = None,
) -> AuctionOutcome:
    """Same outcome as ``run_sealed_bid`` for diminishing-return rules."""
    if not rule.diminishing_return:
        raise UnsupportedRuleError(f"rule {rule.kind!r} has no diminishing-return structure")
    n = oracle.n
    bids = _check_bids(bids, n)
    trace = run_meta_lazy(rule, oracle, bids, seed)
    payments = [0.0] * n
    for i, k in trace.chosen_at.items():
        if focus is not None and i != focus:
            continue
        payments[i] = _critical_payment_lazy(rule, oracle, bids, i, k, trace)
    return AuctionOutcome(trace.winners, tuple(payments), value=oracle.value(trace.winners), trace=trace)


# ---------------------------------------------------------------------------
# Exact welfare optimization (branch and bound over the inclusion tree)
# ---------------------------------------------------------------------------


def best_subset(
    oracle: ValuationOracle,
    costs: Sequence[float],
    candidates: Iterable[int],
    *,
    prefer_small: bool = False,
    use_bound_pruning: bool = True,
) -> tuple[tuple[int, ...], float]:
    """argmax over subsets of ``candidates`` of f(S) - sum of costs.

    Branch and bound over include/exclude decisions; the bound at a node is
    the current welfare plus every undecided candidate's clipped margin
    max(0, f(j|S) - c_j), valid by submodularity.  Pruning is strict, so
    welfare ties are still explored and resolved deterministically: the
    lexicographically-least maximizer wins, preceded by minimal cardinality
    when ``prefer_small`` is set (demand-oracle semantics).
    """
    cand = sorted(set(candidates))
    margin0 = {i: oracle.marginal(i, ()) for i in cand}
    order = sorted(cand, key=lambda i: (costs[i] - margin0[i], i))
    gains0 = [max(0.0, margin0[i] - costs[i]) for i in order]
    suffix = [0.0] * (len(order) + 1)
    for idx in range(len(order) - 1, -1, -1):
        suffix[idx] = suffix[idx + 1] + gains0[idx]

    scratch = oracle.scratch()
    chosen: list[int] = []
    best = {"w": 0.0, "set": (), "key": (0, ()) if prefer_small else ()}

    def key_of(s: tuple[int, ...]):
        return (len(s), s) if prefer_small else s

    def consider(w: float) -> None:
        s = tuple(sorted(chosen))
        if w > best["w"] or (w == best["w"] and key_of(s) < best["key"]):
            best["w"], best["set"], best["key"] = w, s, key_of(s)

    def rec(idx: int, w: float) -> None:
        consider(w)
        if idx == len(order):
            return
        if use_bound_pruning:
            if w + suffix[idx] < best["w"]:
                return
            tight = w
            for j in range(idx, len(order)):
                tight += max(0.0, scratch.marginal(order[j]) - costs[order[j]])
            if tight < best["w"]:
                return
        i = order[idx]
        gain = scratch.marginal(i) - costs[i]
        scratch.add(i)
        chosen.append(i)
        rec(idx + 1, w + gain)
        chosen.pop()
        scratch.remove(i)
        rec(idx + 1, w)

    rec(0, 0.0)
    winners = best["set"]
    return winners, oracle.value(winners) - sum(costs[i] for i in winners)


def exact_opt(
    oracle: ValuationOracle,
    costs: Sequence[float],
    cfg: ExactOptimizerConfig = DEFAULT_OPT_CONFIG,
    *,
    exclude: Iterable[int] = (),
) -> tuple[tuple[int, ...], float]:
    """Exact welfare maximizer and its welfare, over sellers not excluded."""
    excluded = set(exclude)
    candidates = [i for i in range(oracle.n) if i not in excluded]
    if len(candidates) > cfg.max_exhaustive_n:
        raise CapacityError(
            f"{len(candidates)} candidates exceed the exhaustive cap {cfg.max_exhaustive_n}"
        )
    return best_subset(oracle, costs, candidates, use_bound_pruning=cfg.use_bound_pruning)


def run_vcg(
    oracle: ValuationOracle,
    bids,
    cfg: ExactOptimizerConfig = DEFAULT_OPT_CONFIG,
) -> AuctionOutcome:
    """Welfare-optimal allocation with externality payments.

    p_i = (f(W) - sum of bids of W minus i) - (welfare of the best set
    excluding i); submodularity of f makes the payments sum to at most
    f(W), so the auctioneer's surplus is never negative.
    """
    bids = _check_bids(bids, oracle.n)
    winners, _ = exact_opt(oracle, bids, cfg)
    value = oracle.value(winners)
    payments = [0.0] * oracle.n
    for i in winners:
        others_cost = sum(bids[j] for j in winners if j != i)
        _, welfare_without = exact_opt(oracle, bids, cfg, exclude=(i,))
        payments[i] = (value - others_cost) - welfare_without
    return AuctionOutcome(winners, tuple(payments), value=value, trace=None)


# ---------------------------------------------------------------------------
# Mechanism verification
# ---------------------------------------------------------------------------

MechanismRunner = Callable[..., AuctionOutcome]


@dataclass
class IcViolation:
    seller: int
    deviation_bid: float
    truthful_utility: float
    deviated_utility: float


@dataclass
class IcReport:
    violations: list[IcViolation]
    sellers_checked: int
    deviations_checked: int

    @property
    def passed(self) -> bool:
        return not self.violations


def _utility(outcome: AuctionOutcome, i: int, cost: float) -> float:
    return outcome.payments[i] - (cost if i in outcome.winners else 0.0)


def verify_ic(
    runner: MechanismRunner,
    oracle: ValuationOracle,
    costs: Sequence[float],
    grid: int = 20,
    seed: RandomSeed | int | None = None,
    tol: float = 1e-9,
) -> IcReport:
    """Check that no unilateral misreport beats truthful bidding.

    For each seller, every deviation bid on a grid spanning [0, 2 f(i|0)]
    is run against the truthful profile of the others (same seed), and the
    seller's utility at its true cost must not improve beyond ``tol``.
    """
    n = oracle.n
    costs = [float(c) for c in costs]
    truthful = runner(oracle, costs, seed=seed)
    violations: list[IcViolation] = []
    deviations = 0
    for i in range(n):
        u_true = _utility(truthful, i, costs[i])
        hi = 2.0 * oracle.marginal(i, ())
        for b in np.linspace(0.0, hi, grid):
            dev = costs.copy()
            dev[i] = float(b)
            outcome = runner(oracle, dev, seed=seed, focus=i)
            deviations += 1
            u_dev = _utility(outcome, i, costs[i])
            if u_dev > u_true + tol:
                violations.append(IcViolation(i, float(b), u_true, u_dev))
    return IcReport(violations, sellers_checked=n, deviations_checked=deviations)


def verify_nas(outcome: AuctionOutcome, oracle: ValuationOracle, tol: float = 1e-9) -> bool:
    """True iff the acquired value covers the total payment."""
    return oracle.value(outcome.winners) >= outcome.total_payment - tol


def verify_ir(outcome: AuctionOutcome, bids: Sequence[float], tol: float = 1e-9) -> bool:
    """True iff every winner is paid at least its reported bid."""
    return all(outcome.payments[i] >= bids[i] - tol for i in outcome.winners)


def sealed_bid_runner(rule: ScoringRule) -> MechanismRunner:
    """Adapter so verification suites can treat the mechanism as a black box."""

    def runner(oracle, bids, seed=None, focus=None):
        return run_sealed_bid(rule, oracle, bids, seed, focus=focus)

    return runner


def vcg_runner(cfg: ExactOptimizerConfig = DEFAULT_OPT_CONFIG) -> MechanismRunner:
    def runner(oracle, bids, seed=None, focus=None):
        return run_vcg(oracle, bids, cfg)

    return runner

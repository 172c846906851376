"""Scoring rules G(i, S, b, k, r) and their analytic bid-space inversions.

Each rule scores a candidate seller from its current marginal contribution
and its bid.  Selection loops admit the top-scoring candidate while the
score is strictly positive; payments and posted prices come from inverting
the score in the bid coordinate, which is exact because every shipped rule
is affine or a ratio in the bid.

Canonical rule names (used by the CLI and ``make_rule``):

    greedy-margin         f(i|S) - b_i
    greedy-rate           (f(i|S) - b_i) / f(i|S)
    distorted             (1 - 1/n)^(n-k) f(i|S) - b_i
    stochastic-distorted  distorted, restricted to a per-round random batch
    roi                   (f(i|S) - b_i) / b_i
    cost-scaled           f(i|S) - 2 b_i
    noisy-distorted       (1 - 1/n)^(n-k) min_t F(i|S_t) - x b_i
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .valuation import ValuationOracle, canonical_set, stable_hash64

RULE_NAMES = (
    "greedy-margin",
    "greedy-rate",
    "distorted",
    "stochastic-distorted",
    "roi",
    "cost-scaled",
    "noisy-distorted",
)

# Rules whose score does not depend on the round index or horizon.  They are
# exactly the ones with a diminishing-return score structure, which is also
# what lazy evaluation and the online mechanisms require.
ONLINE_CAPABLE_RULES = ("greedy-margin", "greedy-rate", "roi", "cost-scaled")
_ROUND_FREE = frozenset(ONLINE_CAPABLE_RULES)

#: Score of a candidate outside the current stochastic batch.
NOT_SAMPLED = float("-inf")


class UnsupportedRuleError(ValueError):
    """Raised when a rule lacks the structure an operation requires."""


@dataclass(frozen=True)
class RandomSeed:
    """Deterministic source of the per-round draws used by stochastic rules.

    The batch drawn in round k depends only on (seed, k), so allocation and
    payment re-runs sharing a seed see identical draws.
    """

    seed: int = 0

    def round_batch(self, k: int, n: int, size: int) -> frozenset[int]:
        """Sample ``size`` sellers uniformly with replacement for round k."""
        rng = np.random.default_rng(stable_hash64(self.seed, k))
        return frozenset(int(x) for x in rng.integers(0, n, size=size))

    def round_pick(self, k: int, n: int) -> int:
        """The single uniform draw r(k)."""
        rng = np.random.default_rng(stable_hash64(self.seed, k))
        return int(rng.integers(0, n))


def as_random_seed(seed) -> RandomSeed:
    if seed is None:
        return RandomSeed(0)
    if isinstance(seed, RandomSeed):
        return seed
    return RandomSeed(int(seed))


@dataclass(frozen=True)
class ScoreContext:
    """State a score may depend on besides the candidate's own bid.

    ``trajectory`` is the chain of tentative sets seen so far, ending at
    ``tentative``; only the noisy rule reads it, everything else looks at
    the current set alone.
    """

    tentative: tuple[int, ...]
    round: int = 1
    trajectory: tuple[tuple[int, ...], ...] | None = None

    @classmethod
    def at(cls, tentative: Iterable[int], round: int = 1, trajectory=None) -> "ScoreContext":
        tent = canonical_set(tentative)
        if trajectory is not None:
            trajectory = tuple(canonical_set(s) for s in trajectory)
            if trajectory[-1] != tent:
                raise ValueError("trajectory must end at the tentative set")
        return cls(tentative=tent, round=round, trajectory=trajectory)

    def chain(self) -> tuple[tuple[int, ...], ...]:
        return self.trajectory if self.trajectory is not None else (self.tentative,)


@dataclass(frozen=True)
class ScoringRule:
    """A named scoring rule together with the parameters it needs.

    ``horizon`` is the number of rounds n of the enclosing run; the
    distorted family needs it for the (1 - 1/n)^(n-k) multiplier.  The
    optional ``cardinality`` switches the distorted rule to the capacity-
    constrained multiplier (1 - 1/cap)^(cap-k) and caps the run at ``cap``
    admission rounds.
    """

    kind: str
    horizon: int = 0
    cardinality: int | None = None
    stochastic_epsilon: float = 0.1
    stochastic_batch_size: int | None = None
    noise_epsilon: float = 0.0
    cost_multiplier_x: float | None = None

    def __post_init__(self):
        if self.kind not in RULE_NAMES:
            raise UnsupportedRuleError(f"unknown rule {self.kind!r}; expected one of {RULE_NAMES}")
        if self.kind not in _ROUND_FREE and self.horizon < 1:
            raise ValueError(f"rule {self.kind!r} needs a positive horizon")
        if self.cardinality is not None and self.kind != "distorted":
            raise ValueError("the cardinality variant exists only for the distorted rule")
        if not 0.0 < self.stochastic_epsilon < 1.0:
            raise ValueError("stochastic epsilon must be in (0, 1)")
        if self.stochastic_batch_size is not None and self.stochastic_batch_size < 1:
            raise ValueError("batch size must be at least 1")

    @property
    def diminishing_return(self) -> bool:
        return self.kind in _ROUND_FREE

    @property
    def online_capable(self) -> bool:
        return self.kind in _ROUND_FREE

    @property
    def randomized(self) -> bool:
        return self.kind == "stochastic-distorted"

    @property
    def rounds(self) -> int:
        """Number of admission rounds a run of this rule performs."""
        if self.cardinality is not None:
            return self.cardinality
        return self.horizon

    @property
    def x(self) -> float:
        """Cost multiplier of the noisy rule; defaults to 1 + 2*eps*n + eps."""
        if self.cost_multiplier_x is not None:
            return self.cost_multiplier_x
        return 1.0 + 2.0 * self.noise_epsilon * self.horizon + self.noise_epsilon

    def multiplier(self, k: int) -> float:
        """Distortion multiplier applied to the marginal in round k."""
        if self.cardinality is not None:
            cap = self.cardinality
            return (1.0 - 1.0 / cap) ** (cap - k)
        n = self.horizon
        return (1.0 - 1.0 / n) ** (n - k)

    def batch_size(self) -> int:
        """Per-round sample count of the stochastic rule.

        Defaults to ceil((n/k) log(1/eps)); override with
        ``stochastic_batch_size=1`` for the single-draw indicator form.
        """
        if self.stochastic_batch_size is not None:
            return self.stochastic_batch_size
        n, k = self.horizon, self.rounds
        return max(1, math.ceil((n / k) * math.log(1.0 / self.stochastic_epsilon)))

    # -- scalar score core ------------------------------------------------

    def score_from_marginal(self, m: float, bid: float, k: int) -> float:
        """G(i, S, b, k) given the effective marginal m = f(i|S).

        For the noisy rule m must already be the trajectory minimum of the
        noisy marginals.  Batch membership of the stochastic rule is the
        caller's job; this computes the sampled-candidate value.
        """
        kind = self.kind
        if kind == "greedy-margin":
            return m - bid
        if kind == "cost-scaled":
            return m - 2.0 * bid
        if kind == "greedy-rate":
            if m <= 0.0:
                return NOT_SAMPLED
            return (m - bid) / m
        if kind == "roi":
            if bid == 0.0:
                return math.inf if m > 0.0 else -1.0
            return (m - bid) / bid
        if kind in ("distorted", "stochastic-distorted"):
            return self.multiplier(k) * m - bid
        # noisy-distorted
        return self.multiplier(k) * m - self.x * bid

    def threshold_from_marginal(self, m: float, target: float, k: int, wins_tie: bool = False) -> float:
        """sup{ z >= 0 : score(z) > target }, 0 when the set is empty.

        ``wins_tie`` widens the comparison to >= for the degenerate cases
        where the score is constant in the bid (zero-marginal ratio rules);
        for the strictly decreasing rules the supremum is the same either
        way so the flag never changes it.
        """
        kind = self.kind
        if target == math.inf:
            return 0.0
        if kind == "greedy-rate":
            if m <= 0.0:
                return math.inf if (target == NOT_SAMPLED and wins_tie) else 0.0
            if target == NOT_SAMPLED:
                return math.inf
            # m - m*target, not m*(1 - target): the products cancel exactly
            # when the target is itself a rate (m' - b)/m', keeping ties at
            # the competitor's bid bit-exact.
            return max(0.0, m - m * target)
        if kind == "roi":
            if m <= 0.0:
                beats = -1.0 > target or (target == -1.0 and wins_tie)
                return math.inf if beats else 0.0
            if target <= -1.0:
                return math.inf
            return max(0.0, m / (1.0 + target))
        if target == NOT_SAMPLED:
            return math.inf
        if kind == "greedy-margin":
            return max(0.0, m - target)
        if kind == "cost-scaled":
            return max(0.0, (m - target) / 2.0)
        if kind in ("distorted", "stochastic-distorted"):
            return max(0.0, self.multiplier(k) * m - target)
        # noisy-distorted
        return max(0.0, (self.multiplier(k) * m - target) / self.x)


def make_rule(name: str, n: int, **kwargs) -> ScoringRule:
    """Build a rule by canonical name for a run over n sellers."""
    return ScoringRule(kind=name, horizon=n, **kwargs)


def with_horizon(rule: ScoringRule, n: int) -> ScoringRule:
    return rule if rule.horizon == n else replace(rule, horizon=n)


# ---------------------------------------------------------------------------
# Effective marginals (the one place the trajectory matters)
# ---------------------------------------------------------------------------


def effective_marginal(rule: ScoringRule, i: int, ctx: ScoreContext, oracle: ValuationOracle) -> float:
    if i in ctx.tentative:
        raise ValueError(f"seller {i} already in the tentative set")
    if rule.kind == "noisy-distorted":
        return min(oracle.marginal(i, s) for s in ctx.chain())
    return oracle.marginal(i, ctx.tentative)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def score(
    rule: ScoringRule,
    i: int,
    ctx: ScoreContext,
    bid_i: float,
    oracle: ValuationOracle,
    seed: RandomSeed | int | None = None,
) -> float:
    """G(i, S, b, k, r); NOT_SAMPLED when the stochastic rule skipped i."""
    if bid_i < 0:
        raise ValueError(f"bids must be nonnegative, got {bid_i}")
    if rule.randomized:
        batch = as_random_seed(seed).round_batch(ctx.round, oracle.n, rule.batch_size())
        if i not in batch:
            return NOT_SAMPLED
    m = effective_marginal(rule, i, ctx, oracle)
    return rule.score_from_marginal(m, bid_i, ctx.round)


def positive_threshold(
    rule: ScoringRule,
    i: int,
    ctx: ScoreContext,
    oracle: ValuationOracle,
    seed: RandomSeed | int | None = None,
) -> float:
    """Supremum bid at which the score of i stays strictly positive."""
    if rule.randomized:
        batch = as_random_seed(seed).round_batch(ctx.round, oracle.n, rule.batch_size())
        if i not in batch:
            return 0.0
    m = effective_marginal(rule, i, ctx, oracle)
    return rule.threshold_from_marginal(m, 0.0, ctx.round)


def argmax_threshold(
    rule: ScoringRule,
    i: int,
    ctx: ScoreContext,
    competitor_best_score: float | None,
    competitor_id: int | None,
    oracle: ValuationOracle,
    seed: RandomSeed | int | None = None,
) -> float:
    """Supremum bid at which i is still the (lexicographic) argmax.

    ``competitor_best_score`` is the best score among other candidates,
    which by assumption does not depend on i's bid; ``competitor_id`` is the
    smallest index attaining it, so i wins a tie iff i < competitor_id.
    Returns +inf when no competitor exists.
    """
    if competitor_id is None:
        return math.inf
    if rule.randomized:
        batch = as_random_seed(seed).round_batch(ctx.round, oracle.n, rule.batch_size())
        if i not in batch:
            return 0.0
    m = effective_marginal(rule, i, ctx, oracle)
    return rule.threshold_from_marginal(m, competitor_best_score, ctx.round, wins_tie=i < competitor_id)


def online_price(rule: ScoringRule, k: int, members: Iterable[int], oracle: ValuationOracle) -> float:
    """Root of G(k, S, (.., z)) = 0 in z for an online-capable rule."""
    if not rule.online_capable:
        raise UnsupportedRuleError(f"rule {rule.kind!r} cannot run online")
    m = oracle.marginal(k, members)
    if rule.kind == "cost-scaled":
        return m / 2.0
    return m


# ---------------------------------------------------------------------------
# Assumption validation
# ---------------------------------------------------------------------------


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    counterexample: str | None = None


@dataclass
class AssumptionReport:
    rule: str
    trials: int
    checks: list[AssumptionCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


Scorer = Callable[[int, tuple[int, ...], Sequence[float], int], float]


def _as_scorer(rule, oracle: ValuationOracle, seed) -> Scorer:
    """Adapt a ScoringRule (or any callable fixture) to a bid-vector scorer."""
    if callable(rule) and not isinstance(rule, ScoringRule):
        return rule

    def scorer(i: int, tentative: tuple[int, ...], bids: Sequence[float], k: int) -> float:
        ctx = ScoreContext.at(tentative, round=k)
        return score(rule, i, ctx, bids[i], oracle, seed)

    return scorer


def validate_assumptions(
    rule,
    oracle: ValuationOracle,
    trials: int = 200,
    seed: int = 0,
    grid: int = 12,
) -> AssumptionReport:
    """Randomized check of the three mechanism assumptions.

    (1) the score is non-increasing in the candidate's own bid,
    (2) the score is negative once the bid exceeds the marginal the oracle
        reports, and
    (3) the score does not move when any other seller's bid changes.

    Accepts a ScoringRule or any callable scorer(i, S, bids, k) fixture.
    """
    rng = np.random.default_rng(seed)
    n = oracle.n
    scorer = _as_scorer(rule, oracle, seed)
    name = rule.kind if isinstance(rule, ScoringRule) else getattr(rule, "__name__", "custom")
    monotone = AssumptionCheck("non-increasing-in-own-bid", True)
    negative = AssumptionCheck("negative-above-marginal", True)
    invariant = AssumptionCheck("independent-of-other-bids", True)

    for _ in range(trials):
        size = int(rng.integers(0, n))
        tentative = canonical_set(rng.choice(n, size=size, replace=False)) if size else ()
        outside = [i for i in range(n) if i not in tentative]
        if not outside:
            continue
        i = int(rng.choice(outside))
        k = int(rng.integers(1, n + 1))
        m = oracle.marginal(i, tentative)
        scale = max(1.0, abs(m))
        bids = np.abs(rng.normal(scale=scale, size=n))

        if monotone.passed:
            grid_bids = np.linspace(0.0, 2.0 * scale, grid)
            prev = math.inf
            for b in grid_bids:
                bids_b = bids.copy()
                bids_b[i] = b
                cur = scorer(i, tentative, bids_b, k)
                if cur > prev + 1e-9:
                    monotone.passed = False
                    monotone.counterexample = f"i={i} S={tentative} bid {b:.4g}: score rose to {cur:.6g}"
                    break
                prev = cur

        if negative.passed:
            bids_hi = bids.copy()
            bids_hi[i] = max(m, 0.0) + 0.1 + float(rng.uniform(0, scale))
            sc = scorer(i, tentative, bids_hi, k)
            if not sc < 0:
                negative.passed = False
                negative.counterexample = (
                    f"i={i} S={tentative} bid {bids_hi[i]:.4g} > marginal {m:.4g} but score {sc:.6g}"
                )

        if invariant.passed and n > 1:
            base = scorer(i, tentative, bids, k)
            bids_perturbed = bids.copy()
            j = int(rng.choice([x for x in range(n) if x != i]))
            bids_perturbed[j] = bids_perturbed[j] + float(rng.uniform(0.1, scale))
            other = scorer(i, tentative, bids_perturbed, k)
            if not (base == other or (math.isinf(base) and math.isinf(other) and base == other)):
                if abs(base - other) > 1e-12:
                    invariant.passed = False
                    invariant.counterexample = f"i={i} S={tentative}: {base:.6g} -> {other:.6g} after moving bid {j}"

    return AssumptionReport(rule=name, trials=trials, checks=[monotone, negative, invariant])

"""Monotone submodular valuation functions and their query interfaces.

Every auction and optimization routine in this package talks to sellers'
values through a :class:`ValuationOracle`.  Oracles are immutable after
construction and safe to share across parallel runs; the mutable state
needed by greedy loops (incremental coverage counts) lives in a per-run
scratch object obtained from :meth:`ValuationOracle.scratch`.

Oracles count how many value/marginal queries they served so benchmark
harnesses can compare algorithms by oracle usage.  The counter is the one
piece of mutable observability state on an otherwise frozen object.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence


def canonical_set(members: Iterable[int]) -> tuple[int, ...]:
    """Sorted, duplicate-free tuple of seller indices."""
    return tuple(sorted(set(members)))


def stable_hash64(*parts: int) -> int:
    """Deterministic 64-bit hash of a tuple of ints, stable across processes."""
    payload = struct.pack(f"<{len(parts)}q", *parts)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little")


class ValuationOracle:
    """Base class for monotone submodular set functions f with f(empty) = 0.

    Subclasses implement ``_value`` on canonical tuples; ``marginal`` has a
    generic two-evaluation fallback that subclasses override when they can
    do better.
    """

    def __init__(self, n: int):
        if n < 0:
            raise ValueError(f"seller count must be nonnegative, got {n}")
        self.n = n
        self._queries = 0

    # -- query interface -------------------------------------------------

    def value(self, members: Iterable[int]) -> float:
        """f(S) for a set of seller indices."""
        s = self._checked(members)
        self._queries += 1
        return self._value(s)

    def marginal(self, i: int, members: Iterable[int]) -> float:
        """f(i | S) = f(S + i) - f(S).  Requires i not already in S."""
        s = self._checked(members)
        self._check_index(i)
        if i in s:
            raise ValueError(f"seller {i} already in the set")
        self._queries += 1
        return self._marginal(i, s)

    def scratch(self) -> "OracleScratch":
        """Fresh per-run evaluator with incremental marginal queries."""
        return OracleScratch(self)

    @property
    def query_count(self) -> int:
        return self._queries

    def reset_query_count(self) -> None:
        self._queries = 0

    # -- hooks -----------------------------------------------------------

    def _value(self, s: tuple[int, ...]) -> float:
        raise NotImplementedError

    def _marginal(self, i: int, s: tuple[int, ...]) -> float:
        return self._value(canonical_set(s + (i,))) - self._value(s)

    # -- validation ------------------------------------------------------

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise ValueError(f"seller index {i} out of range [0, {self.n})")

    def _checked(self, members: Iterable[int]) -> tuple[int, ...]:
        s = canonical_set(members)
        if s and (s[0] < 0 or s[-1] >= self.n):
            raise ValueError(f"seller set {s} not within [0, {self.n})")
        return s


class OracleScratch:
    """Per-run growing set with marginal queries against an oracle.

    The generic version recomputes values through the oracle; coverage and
    family oracles provide O(|cover|) / O(1) incremental subclasses.  Each
    marginal/value read and each add counts one oracle query.
    """

    def __init__(self, oracle: ValuationOracle):
        self.oracle = oracle
        self._members: set[int] = set()
        self._value = 0.0

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(sorted(self._members))

    def __contains__(self, i: int) -> bool:
        return i in self._members

    def value(self) -> float:
        self.oracle._queries += 1
        return self._value

    def marginal(self, i: int) -> float:
        if i in self._members:
            raise ValueError(f"seller {i} already in the set")
        self.oracle._queries += 1
        return self._marginal(i)

    def add(self, i: int) -> None:
        if i in self._members:
            raise ValueError(f"seller {i} already in the set")
        self.oracle._queries += 1
        self._value += self._marginal(i)
        self._members.add(i)
        self._apply_add(i)

    def remove(self, i: int) -> None:
        if i not in self._members:
            raise ValueError(f"seller {i} not in the set")
        self._members.remove(i)
        self._apply_remove(i)
        self._value -= self._marginal(i)

    # -- hooks -----------------------------------------------------------

    def _marginal(self, i: int) -> float:
        base = self.oracle._value(tuple(sorted(self._members)))
        withi = self.oracle._value(tuple(sorted(self._members | {i})))
        return withi - base

    def _apply_add(self, i: int) -> None:
        pass

    def _apply_remove(self, i: int) -> None:
        pass


# ---------------------------------------------------------------------------
# Coverage functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverageInstance:
    """A max-coverage valuation: seller i covers a list of vertices.

    f(S) is the total value of vertices covered by at least one seller in S.
    """

    covers: tuple[tuple[int, ...], ...]
    vertex_values: tuple[float, ...]

    def __post_init__(self):
        nv = len(self.vertex_values)
        for i, cov in enumerate(self.covers):
            for v in cov:
                if not 0 <= v < nv:
                    raise ValueError(f"set {i} references unknown vertex {v}")
        if any(val < 0 for val in self.vertex_values):
            raise ValueError("vertex values must be nonnegative")

    @property
    def n_sets(self) -> int:
        return len(self.covers)

    def to_json(self) -> dict:
        return {
            "n_sets": self.n_sets,
            "covers": [list(c) for c in self.covers],
            "vertex_values": list(self.vertex_values),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "CoverageInstance":
        covers = tuple(tuple(int(v) for v in c) for c in doc["covers"])
        if int(doc["n_sets"]) != len(covers):
            raise ValueError("n_sets does not match the covers list")
        return cls(covers=covers, vertex_values=tuple(float(x) for x in doc["vertex_values"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def loads(cls, text: str) -> "CoverageInstance":
        return cls.from_json(json.loads(text))


class CoverageOracle(ValuationOracle):
    """Coverage valuation with incremental marginal support."""

    def __init__(self, instance: CoverageInstance):
        super().__init__(instance.n_sets)
        self.instance = instance
        self.covers = tuple(tuple(sorted(set(c))) for c in instance.covers)
        self.vertex_values = instance.vertex_values

    def _value(self, s: tuple[int, ...]) -> float:
        covered: set[int] = set()
        for i in s:
            covered.update(self.covers[i])
        return float(sum(self.vertex_values[v] for v in covered))

    def _marginal(self, i: int, s: tuple[int, ...]) -> float:
        covered: set[int] = set()
        for j in s:
            covered.update(self.covers[j])
        return float(sum(self.vertex_values[v] for v in self.covers[i] if v not in covered))

    def scratch(self) -> "CoverageScratch":
        return CoverageScratch(self)


class CoverageScratch(OracleScratch):
    """Coverage counts per vertex; marginal queries cost O(|cover(i)|)."""

    def __init__(self, oracle: CoverageOracle):
        super().__init__(oracle)
        self._counts = [0] * len(oracle.vertex_values)

    def _marginal(self, i: int) -> float:
        counts = self._counts
        values = self.oracle.vertex_values
        return float(sum(values[v] for v in self.oracle.covers[i] if counts[v] == 0))

    def _apply_add(self, i: int) -> None:
        for v in self.oracle.covers[i]:
            self._counts[v] += 1

    def _apply_remove(self, i: int) -> None:
        for v in self.oracle.covers[i]:
            self._counts[v] -= 1


# ---------------------------------------------------------------------------
# Small oracles for tests and the online examples
# ---------------------------------------------------------------------------


class AdditiveOracle(ValuationOracle):
    """Modular function f(S) = sum of per-seller weights."""

    def __init__(self, weights: Sequence[float]):
        if any(w < 0 for w in weights):
            raise ValueError("weights must be nonnegative")
        super().__init__(len(weights))
        self.weights = tuple(float(w) for w in weights)

    def _value(self, s: tuple[int, ...]) -> float:
        return float(sum(self.weights[i] for i in s))

    def _marginal(self, i: int, s: tuple[int, ...]) -> float:
        return self.weights[i]


class AdversarialFamilyOracle(ValuationOracle):
    """The structured family that breaks exact-demand descending auctions.

    With parameter L there are L + 2 sellers.  The first L ("unit") sellers
    contribute value 1 each as long as no special seller is present; the two
    special sellers L and L+1 pin the value at L for any set containing one
    of them:

        f(S) = |S|   if S does not meet {L, L+1}
        f(S) = L     otherwise

    The companion bid profile is 1/L for unit sellers and L - 2 for the two
    special sellers.
    """

    def __init__(self, L: int):
        if L < 1:
            raise ValueError(f"family parameter must be positive, got {L}")
        super().__init__(L + 2)
        self.L = L
        self.specials = (L, L + 1)

    def bids(self) -> tuple[float, ...]:
        return (1.0 / self.L,) * self.L + (float(self.L - 2),) * 2

    def _value(self, s: tuple[int, ...]) -> float:
        if s and s[-1] >= self.L:
            return float(self.L)
        return float(len(s))

    def _marginal(self, i: int, s: tuple[int, ...]) -> float:
        has_special = bool(s) and s[-1] >= self.L
        if has_special:
            return 0.0
        if i >= self.L:
            return float(self.L - len(s))
        return 1.0

    def scratch(self) -> "FamilyScratch":
        return FamilyScratch(self)


class FamilyScratch(OracleScratch):
    def __init__(self, oracle: AdversarialFamilyOracle):
        super().__init__(oracle)
        self._specials = 0

    def _marginal(self, i: int) -> float:
        L = self.oracle.L
        if self._specials:
            return 0.0
        if i >= L:
            return float(L - len(self._members))
        return 1.0

    def _apply_add(self, i: int) -> None:
        if i >= self.oracle.L:
            self._specials += 1

    def _apply_remove(self, i: int) -> None:
        if i >= self.oracle.L:
            self._specials -= 1


# ---------------------------------------------------------------------------
# Noisy evaluation wrapper
# ---------------------------------------------------------------------------


class NoisyOracle(ValuationOracle):
    """Multiplicative perturbation of a base oracle.

    F(S) = f(S) * m(S) with m(S) in [1 - eps, 1 + eps] derived from a 64-bit
    hash of (seed, sorted members), so the same set always returns the same
    value.  F is generally neither monotone nor submodular, so ``marginal``
    may return negative numbers; callers that need the trajectory-minimum
    construction handle that themselves.
    """

    def __init__(self, base: ValuationOracle, epsilon: float, seed: int = 0):
        if not 0.0 <= epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {epsilon}")
        super().__init__(base.n)
        self.base = base
        self.epsilon = float(epsilon)
        self.seed = int(seed)

    def perturbation(self, members: Iterable[int]) -> float:
        s = canonical_set(members)
        u = stable_hash64(self.seed, len(s), *s) / 2.0**64
        return 1.0 - self.epsilon + 2.0 * self.epsilon * u

    def _value(self, s: tuple[int, ...]) -> float:
        return self.base._value(s) * self.perturbation(s)

    def _marginal(self, i: int, s: tuple[int, ...]) -> float:
        # F is not submodular: fall back to the two-evaluation difference.
        return self._value(canonical_set(s + (i,))) - self._value(s)


def noisy_value(oracle: NoisyOracle, members: Iterable[int]) -> float:
    """F(S) for a noisy oracle; alias of value() kept for API symmetry."""
    return oracle.value(members)

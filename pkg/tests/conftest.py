import numpy as np
import pytest

from procure.instances import random_instance
from procure.valuation import CoverageInstance, CoverageOracle


@pytest.fixture
def coverage_pair():
    """Two sellers: A covers {v1, v2}, B covers {v2, v3}; values (1, 2, 3)."""
    instance = CoverageInstance(covers=((0, 1), (1, 2)), vertex_values=(1.0, 2.0, 3.0))
    return CoverageOracle(instance)


def random_oracle(seed: int, n_lo: int = 2, n_hi: int = 10):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_lo, n_hi + 1))
    instance, costs = random_instance(n, int(rng.integers(0, 2**31)))
    return CoverageOracle(instance), costs


def brute_force_opt(oracle, costs, prefer_small=False, candidates=None):
    """Independent subset enumeration, kept free of the library optimizer."""
    cand = sorted(candidates) if candidates is not None else list(range(oracle.n))
    best_w, best_s, best_key = 0.0, (), None
    for mask in range(2 ** len(cand)):
        s = tuple(cand[j] for j in range(len(cand)) if mask >> j & 1)
        w = oracle.value(s) - sum(costs[i] for i in s)
        key = (len(s), s) if prefer_small else s
        if best_key is None or w > best_w or (w == best_w and key < best_key):
            best_w, best_s, best_key = w, s, key
    return best_s, best_w

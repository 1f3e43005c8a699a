"""Shared generators for the test-suite."""

import numpy as np


def random_retarded(rng: np.random.Generator, max_degree: int = 6):
    """Random retarded quasipolynomial: monic delay-free part of strictly highest degree."""
    n_delays = int(rng.integers(1, 4))
    delays = np.sort(rng.uniform(0.05, 3.0, n_delays))
    d0 = int(rng.integers(1, max(2, max_degree - n_delays + 1)))
    budget = max_degree - n_delays - d0
    terms = [(list(rng.uniform(-5, 5, d0)) + [1.0], 0.0)]
    for tau in delays:
        dj = int(rng.integers(0, min(d0 - 1, max(budget, 0)) + 1))
        budget -= dj
        terms.append((list(rng.uniform(-5, 5, dj + 1)), float(tau)))
    return terms


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from strategex.core import BallUnion, CostModel, Linear, Norm, Polynomial, Polytope, monomial_count

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def l2():
    return CostModel(Norm.L2, 1.0)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


def random_classifier(rng: np.random.Generator, i: int):
    """Mixed family used by the soundness suites: polynomials, ball unions, polytopes."""
    kind = i % 3
    if kind == 0:
        k = int(rng.integers(2, 4))
        return Polynomial(2, k, rng.normal(size=monomial_count(2, k)), scale=3.0)
    if kind == 1:
        m = int(rng.integers(1, 5))
        polarity = rng.choice(["positive-inside", "negative-inside"])
        return BallUnion(rng.uniform(-2.5, 2.5, (m, 2)), rng.uniform(0.3, 2.0, m), polarity=polarity)
    V = rng.uniform(-3, 3, (int(rng.integers(3, 7)), 2))
    return Polytope(V, polarity=rng.choice(["positive-inside", "negative-inside"]))


def random_linear(rng: np.random.Generator, dim: int = 2) -> Linear:
    w = rng.normal(size=dim)
    return Linear(w / np.linalg.norm(w), float(rng.uniform(-1.5, 1.5)))

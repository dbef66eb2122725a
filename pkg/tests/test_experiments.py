import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from strategex.boundary import extract_boundary
from strategex.core import BallUnion, CostModel, LabelGrid, Linear, Norm, monomial_count, rasterize
from strategex.experiments import (
    ApproximationConfig,
    ApproximationRow,
    ExpressivityConfig,
    aggregate,
    fit_effective_degree,
    fit_separator,
    fit_stride,
    instance_seed,
    run_approximation,
    run_expressivity,
    sample_polynomial,
    subsample,
    svg_overlay,
    verification_grid,
)
from strategex.response import effective_grid

BOX = ((-10.0, 10.0), (-10.0, 10.0))


class TestSeeds:
    def test_deterministic_and_keyed(self):
        assert instance_seed(0, 1, 2) == instance_seed(0, 1, 2)
        assert instance_seed(0, 1, 2) != instance_seed(0, 2, 1)
        assert 0 <= instance_seed(123, 4) < 2**31


class TestFitting:
    def test_separator_on_separable_data(self, rng):
        X = rng.uniform(-1, 1, (200, 2))
        y = X[:, 0] ** 2 + X[:, 1] ** 2 < 0.5
        from strategex.core import monomial_features

        coef = fit_separator(X, y, 2, 1.0)
        pred = monomial_features(X, 2) @ coef >= 0
        # squared hinge trades a few margin points for the fit; near-separation is the contract
        assert (pred == y).mean() >= 0.98

    @pytest.mark.parametrize("h,degree", [(Linear([1.0, 0.4], 1.0), 1), (BallUnion([[1, -1]], [4.0]), 2)])
    def test_effective_degree_of_simple_shapes(self, h, degree):
        g = rasterize(h, BOX, 0.1)
        g = subsample(g, fit_stride(BOX, 0.1, 100))
        fit = fit_effective_degree(extract_boundary(g), g)
        assert fit.degree == degree and not fit.overflow

    def test_effective_disk_stays_quadratic(self):
        g = effective_grid(BallUnion([[0, 0]], [3.0]), BOX, 0.1, CostModel(Norm.L2, 2.0))
        fit = fit_effective_degree(extract_boundary(g), g)
        assert fit.degree == 2

    def test_subsample_centers_align(self):
        g = LabelGrid([0.0, 0.0], 0.5, np.zeros((8, 8), dtype=bool))
        s = subsample(g, 2)
        np.testing.assert_allclose(s.axis_centers(0), g.axis_centers(0)[::2])

    def test_fit_stride(self):
        assert fit_stride(((-100, 100), (-100, 100)), 0.5, 200) == 2
        assert fit_stride(BOX, 1.0, 200) == 1

    def test_verification_grid(self):
        G = verification_grid(BOX, 5)
        assert G.shape == (25, 2) and G.min() == -10 and G.max() == 10


class TestSampling:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_gate(self, k):
        h = sample_polynomial(k, seed=5)
        assert h.degree == k and h.coefficients.size == monomial_count(2, k)

    def test_deterministic(self):
        a = sample_polynomial(2, seed=11)
        b = sample_polynomial(2, seed=11)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_anchor_count_k10(self):
        assert monomial_count(2, 10) == 66

    def test_bad_k(self):
        with pytest.raises(ValueError):
            sample_polynomial(0, seed=0)


class TestRunners:
    def test_cell_limit(self):
        with pytest.raises(ValueError, match="alphas"):
            ExpressivityConfig(alphas=(1.0,), cell=0.5)

    def test_expressivity_small(self):
        cfg = ExpressivityConfig(alphas=(2.0,), ks=(1, 2), instances=2, verify_count=100)
        rows = run_expressivity(cfg)
        assert [r.k for r in rows] == [1, 1, 2, 2]
        assert all(r.k_delta >= 1 for r in rows)
        assert rows == run_expressivity(cfg)

    def test_approximation_small(self):
        cfg = ApproximationConfig(alphas=(1.0,), mus=(0.0, 5.0), instances=2, n_per_class=6)
        rows = run_approximation(cfg)
        assert len(rows) == 4
        for r in rows:
            assert 0 <= r.max_linear <= 1 and 0 <= r.max_strategic <= 1
        assert rows == run_approximation(cfg)

    def test_parallel_matches_serial(self):
        cfg = ApproximationConfig(alphas=(1.0, 2.0), mus=(1.0,), instances=2, n_per_class=5)
        assert run_approximation(cfg, threads=2) == run_approximation(cfg, threads=1)

    def test_aggregate(self):
        rows = [ApproximationRow(0.0, 1.0, 0.5, v, i) for i, v in enumerate([0.6, 0.8])]
        (entry,) = aggregate(rows, ("mu", "alpha"), ("max_strategic",))
        assert entry["max_strategic"]["mean"] == pytest.approx(0.7)
        assert entry["max_strategic"]["stderr"] == pytest.approx(0.1)
        assert entry["max_strategic"]["n"] == 2


class TestSvg:
    def test_overlay_is_valid_svg(self):
        h = BallUnion([[0, 0]], [3.0])
        src = rasterize(h, BOX, 0.1)
        eff = effective_grid(h, BOX, 0.1, CostModel(Norm.L2, 2.0))
        root = ET.fromstring(svg_overlay(src, eff))
        ids = {el.get("id") for el in root.iter() if el.get("id")}
        assert ids == {"source", "effective"}
        assert all(el.get("d").startswith("M ") for el in root.iter() if el.get("id"))

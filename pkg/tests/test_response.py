import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage

from conftest import random_linear
from strategex.core import BallUnion, CostModel, LabelGrid, Linear, Norm, Polytope, ScoreFn, rasterize
from strategex.response import (
    EmptyPositiveRegionWarning,
    best_response_generic,
    best_response_linear,
    cost_to_positive,
    distance_field,
    effective_grid,
    effective_label,
    effective_labels,
    effective_of_grid,
)

NORMS = [Norm.L1, Norm.L2, Norm.LINF]


def brute_force_cells(mask: np.ndarray, norm: Norm) -> np.ndarray:
    """Scan every positive cell: squared distance for l2, plain distance otherwise."""
    idx = np.argwhere(mask)
    out = np.full(mask.shape, np.inf)
    if idx.size == 0:
        return out
    for cell in np.ndindex(mask.shape):
        diff = np.abs(idx - np.array(cell))
        if norm is Norm.L2:
            d = (diff**2).sum(axis=1)
        elif norm is Norm.L1:
            d = diff.sum(axis=1)
        else:
            d = diff.max(axis=1)
        out[cell] = d.min()
    return out


def disk_element(r: float) -> np.ndarray:
    k = int(np.floor(r))
    ii, jj = np.mgrid[-k : k + 1, -k : k + 1]
    return ii**2 + jj**2 <= r * r + 1e-9


class TestDistanceField:
    @pytest.mark.parametrize("norm", NORMS)
    @pytest.mark.parametrize("seed", range(3))
    def test_brute_force_small(self, norm, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random((17, 11)) < 0.05
        mask[3, 4] = True
        g = LabelGrid([0.0, 0.0], 1.0, mask)
        np.testing.assert_array_equal(distance_field(g, norm).cells, brute_force_cells(mask, norm))

    def test_one_dimensional(self):
        g = LabelGrid([0.0], 0.5, np.array([0, 0, 1, 0, 0, 0, 1], dtype=bool))
        np.testing.assert_allclose(distance_field(g, Norm.L2).distances, [1, 0.5, 0, 0.5, 1, 0.5, 0])

    def test_three_dimensional(self, rng):
        mask = rng.random((6, 7, 5)) < 0.05
        mask[0, 0, 0] = True
        g = LabelGrid([0.0, 0.0, 0.0], 1.0, mask)
        for norm in NORMS:
            np.testing.assert_array_equal(distance_field(g, norm).cells, brute_force_cells(mask, norm))

    def test_no_positive_is_infinite(self):
        g = LabelGrid([0.0, 0.0], 1.0, np.zeros((4, 4), dtype=bool))
        assert np.isinf(distance_field(g, Norm.L2).cells).all()

    def test_target_negative(self):
        mask = np.ones((5, 5), dtype=bool)
        mask[2, 2] = False
        g = LabelGrid([0.0, 0.0], 1.0, mask)
        d = distance_field(g, Norm.LINF, target=False).cells
        assert d[0, 0] == 2 and d[2, 2] == 0

    @pytest.mark.parametrize("r", [1.0, 2.0, 2.5, 3.7])
    def test_dilation_identity(self, rng, r):
        mask = rng.random((32, 32)) < 0.03
        mask[16, 16] = True
        g = LabelGrid([0.0, 0.0], 1.0, mask)
        eff = effective_of_grid(g, CostModel(Norm.L2, r)).labels
        np.testing.assert_array_equal(eff, ndimage.binary_dilation(mask, structure=disk_element(r)))


class TestEffectiveGrid:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_linear_closed_form(self, alpha, rng):
        cell = 0.05
        box = ((-3.0, 3.0), (-3.0, 3.0))
        for _ in range(5):
            h = random_linear(rng)
            g = effective_grid(h, box, cell, CostModel(Norm.L2, alpha))
            s = h.score(g.centers()) + alpha
            far = np.abs(s) > cell * np.sqrt(2)
            np.testing.assert_array_equal(g.labels.ravel()[far], (s >= 0)[far])

    def test_positive_disk_grows_by_alpha(self):
        g = effective_grid(BallUnion([[0, 0]], [1.0]), ((-3, 3), (-3, 3)), 0.02, CostModel(Norm.L2, 0.5))
        r = np.linalg.norm(g.centers(), axis=1)
        lab = g.labels.ravel()
        assert lab[r < 1.5 - 0.03].all() and not lab[r > 1.5 + 0.03].any()

    def test_alpha_below_two_cells_rejected(self):
        with pytest.raises(ValueError, match="two cells"):
            effective_grid(Linear([1.0, 0.0]), ((-1, 1), (-1, 1)), 0.3, CostModel(Norm.L2, 0.5))

    def test_empty_positive_region_warns(self):
        h = BallUnion([[50.0, 50.0]], [1.0])
        with pytest.warns(EmptyPositiveRegionWarning):
            g = effective_grid(h, ((-1, 1), (-1, 1)), 0.1, CostModel(Norm.L2, 0.5))
        assert not g.labels.any()

    def test_positives_outside_box_pull_in(self):
        h = Linear([1.0, 0.0], 1.2)
        g = effective_grid(h, ((-1, 1), (-1, 1)), 0.05, CostModel(Norm.L2, 0.5))
        assert g.labels.any()

    @pytest.mark.parametrize("norm", NORMS)
    def test_monotone_in_alpha(self, norm):
        h = Polytope([[0, 0], [1, 0], [0.3, 1.2]])
        box = ((-3, 3), (-3, 3))
        prev = None
        for alpha in (0.2, 0.5, 1.0, 1.6):
            lab = effective_grid(h, box, 0.05, CostModel(norm, alpha)).labels
            if prev is not None:
                assert np.all(lab >= prev)
            prev = lab

    def test_grid_matches_pointwise_labels(self):
        h = ScoreFn(lambda X: 0.5 - np.abs(X[:, 1] - 0.3 * X[:, 0] ** 2), 2)
        cost = CostModel(Norm.L2, 0.5)
        g = effective_grid(h, ((-2, 2), (-2, 2)), 0.025, cost)
        C = g.centers()[::37]
        point = effective_labels(h, C, cost, 0.01)
        agree = np.mean(point == g.labels.ravel()[::37])
        assert agree > 0.99


class TestPointwise:
    def test_linear_projection(self, l2):
        h = Linear([1.0, 0.0], 0.5)
        r = best_response_linear(h, [0.0, 2.0], l2)
        assert r.moved == 1 and r.cost_paid == pytest.approx(0.5)
        np.testing.assert_allclose(r.target, [0.5, 2.0])

    def test_linear_out_of_reach(self, l2):
        r = best_response_linear(Linear([1.0, 0.0], 2.0), [0.0, 0.0], l2)
        assert r.moved == 0
        np.testing.assert_allclose(r.target, [0.0, 0.0])

    def test_linear_already_positive(self, l2):
        r = best_response_linear(Linear([1.0, 0.0], -1.0), [0.0, 0.0], l2)
        assert r.moved == 0 and r.cost_paid == 0.0

    def test_linear_rejects_other_norms(self):
        with pytest.raises(ValueError):
            best_response_linear(Linear([1.0, 0.0]), [0, 0], CostModel(Norm.L1, 1.0))

    @given(
        st.floats(-np.pi, np.pi),
        st.floats(-2, 2),
        st.floats(-3, 3),
        st.floats(-3, 3),
        st.floats(0.3, 2.0),
    )
    def test_generic_matches_linear(self, theta, b, x, y, alpha):
        h = Linear([np.cos(theta), np.sin(theta)], b)
        cost = CostModel(Norm.L2, alpha)
        exact = best_response_linear(h, [x, y], cost)
        margin = abs(abs(h.score(np.array([[x, y]]))[0]) - alpha)
        if margin < 1e-3:
            return
        approx = best_response_generic(h, [x, y], cost, 0.01)
        assert approx.moved == exact.moved
        if exact.moved:
            assert approx.cost_paid == pytest.approx(exact.cost_paid, abs=1e-4)
            np.testing.assert_allclose(approx.target, exact.target, atol=0.02)

    def test_generic_cost_under_l1(self):
        h = BallUnion([[2.0, 0.0]], [0.5])
        r = best_response_generic(h, [0.0, 0.0], CostModel(Norm.L1, 2.0), 0.01)
        assert r.moved == 1 and r.cost_paid == pytest.approx(1.5, abs=1e-6)

    def test_resolution_must_resolve_ball(self, l2):
        with pytest.raises(ValueError):
            best_response_generic(Linear([1.0, 0.0]), [0, 0], l2, 0.8)

    def test_dimension_mismatch(self, l2):
        with pytest.raises(ValueError):
            effective_label(Linear([1.0, 0.0]), [0, 0, 0], l2, 0.1)

    @pytest.mark.parametrize("norm,expected", [(Norm.L1, 2.0), (Norm.L2, np.sqrt(2)), (Norm.LINF, 1.0)])
    def test_linear_dual_norm_cost(self, norm, expected):
        h = Linear([1.0, 1.0], 2.0)
        assert cost_to_positive(h, [0, 0], norm, 10.0, 0.01) == pytest.approx(expected)

    def test_cost_to_positive_beyond_budget(self):
        assert np.isinf(cost_to_positive(Linear([1.0, 0.0], 5.0), [0, 0], Norm.L2, 1.0, 0.01))

    def test_negative_disk_exact_matches_sampling(self):
        h = BallUnion([[0, 0]], [1.5], polarity="negative-inside")
        cost = CostModel(Norm.L2, 1.0)
        X = np.random.default_rng(0).uniform(-2, 2, (200, 2))
        exact = effective_labels(h, X, cost, 0.01)
        wrapped = ScoreFn(h.score, 2)
        r = np.linalg.norm(X, axis=1)
        keep = np.abs(r - 0.5) > 0.02
        np.testing.assert_array_equal(exact[keep], effective_labels(wrapped, X[keep], cost, 0.01))

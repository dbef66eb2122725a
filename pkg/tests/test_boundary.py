import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from strategex.boundary import (
    KINK,
    Case,
    MappingCase,
    WipedOut,
    annotate_curvature,
    boundary_mask,
    classify_boundary_point,
    count_components,
    effective_curvature,
    extract_boundary,
    preimage_set,
    sectional_curvatures,
    signed_curvature,
)
from strategex.core import BallUnion, CostModel, LabelGrid, Linear, Norm, Polytope, ScoreFn, rasterize
from strategex.response import effective_grid


class TestEffectiveCurvature:
    @pytest.mark.parametrize("kappa,alpha,expected", [(0.0, 1.0, 0.0), (1.0, 1.0, 0.5), (-0.5, 1.0, -1.0)])
    def test_tagged_values(self, kappa, alpha, expected):
        assert effective_curvature(kappa, alpha) == expected

    def test_below_threshold_wipes_out(self):
        with pytest.raises(WipedOut):
            effective_curvature(-2.0, 1.0)

    def test_kink_at_threshold(self):
        assert effective_curvature(-1.0 / 0.5, 0.5) == KINK

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            effective_curvature(1.0, 0.0)

    @given(st.floats(0.01, 10), st.floats(0.1, 5))
    def test_circle_offset(self, r, alpha):
        # a positive disk of radius r grows to radius r + alpha
        assert effective_curvature(1 / r, alpha) == pytest.approx(1 / (r + alpha))

    @given(st.floats(-0.99, 5), st.floats(0.1, 5), st.floats(0.1, 5))
    def test_composition(self, t, a, b):
        kappa = t / a
        if 1 + (a + b) * kappa <= 1e-6:
            return
        twice = effective_curvature(effective_curvature(kappa, a), b)
        assert twice == pytest.approx(effective_curvature(kappa, a + b), rel=1e-9, abs=1e-12)


class TestExtraction:
    def test_single_label_rejected(self):
        with pytest.raises(ValueError):
            extract_boundary(LabelGrid([0, 0], 1.0, np.ones((4, 4), dtype=bool)))

    def test_boundary_mask_both_sides(self):
        labels = np.zeros((4, 4), dtype=bool)
        labels[2:] = True
        np.testing.assert_array_equal(boundary_mask(labels).any(axis=1), [False, True, True, False])

    def test_normals_point_to_positive(self):
        g = rasterize(Linear([1.0, 0.0], 0.0), ((-1, 1), (-1, 1)), 0.05)
        b = extract_boundary(g)
        assert np.all(b.normals[:, 0] > 0.9)

    def test_refined_on_line(self):
        g = rasterize(Linear([1.0, 0.0], 0.013), ((-1, 1), (-1, 1)), 0.05)
        b = extract_boundary(g)
        assert np.median(np.abs(b.refined[:, 0] - 0.013)) < 0.05


class TestSignedCurvature:
    @pytest.mark.parametrize("polarity,sign", [("positive-inside", 1), ("negative-inside", -1)])
    def test_unit_disk(self, polarity, sign):
        b = extract_boundary(rasterize(BallUnion([[0, 0]], [1.0], polarity=polarity), ((-2, 2), (-2, 2)), 0.01))
        for at in ([1, 0], [0, -1], [-0.6, 0.8]):
            assert signed_curvature(b, at).kappa == pytest.approx(sign, rel=0.05)

    def test_halfplane_is_flat(self):
        b = extract_boundary(rasterize(Linear([0.6, 0.8], 0.1), ((-2, 2), (-2, 2)), 0.01))
        assert abs(signed_curvature(b, [0.06, 0.08]).kappa) < 0.05

    def test_window_stays_on_one_curve(self):
        # two parallel lines 0.4 apart: a window that spans both must not mix them
        h = ScoreFn(lambda X: np.abs(X[:, 1]) - 0.2, 2)
        b = extract_boundary(rasterize(h, ((-2, 2), (-2, 2)), 0.01))
        assert abs(signed_curvature(b, [0, 0.2], window=0.6).kappa) < 0.05

    def test_window_too_small(self):
        b = extract_boundary(rasterize(BallUnion([[0, 0]], [1.0]), ((-2, 2), (-2, 2)), 0.05))
        with pytest.raises(ValueError):
            signed_curvature(b, [1, 0], window=0.1)

    def test_annotate(self):
        b = annotate_curvature(extract_boundary(rasterize(BallUnion([[0, 0]], [1.0]), ((-2, 2), (-2, 2)), 0.02)))
        assert np.nanmedian(b.curvatures) == pytest.approx(1.0, rel=0.05)

    def test_effective_disk_curvature(self):
        cost = CostModel(Norm.L2, 1.0)
        b = extract_boundary(effective_grid(BallUnion([[0, 0]], [2.0]), ((-4, 4), (-4, 4)), 0.02, cost))
        assert signed_curvature(b, [3, 0]).kappa == pytest.approx(1 / 3, rel=0.05)

    def test_sphere_sections(self):
        from strategex.core import rasterize as rz

        b = extract_boundary(rz(BallUnion([[0, 0, 0]], [1.0]), ((-1.5, 1.5),) * 3, 0.03))
        ks = sectional_curvatures(b, [0, 0, 1], window=0.5)
        assert np.nanmedian(ks) == pytest.approx(1.0, rel=0.15)


class TestMappingCases:
    rho = 0.05

    @pytest.mark.parametrize(
        "h,x,alpha,case",
        [
            (Linear([1.0, 0.0], 0.0), [0, 0.3], 1.0, Case.ONE_TO_ONE),
            (BallUnion([[0, 0]], [5.0]), [5, 0], 1.0, Case.ONE_TO_ONE),
            (BallUnion([[0, 0]], [2.0], polarity="negative-inside"), [2, 0], 1.0, Case.ONE_TO_ONE),
            (BallUnion([[0, 0]], [0.5], polarity="negative-inside"), [0.5, 0], 1.0, Case.DIRECT_WIPEOUT),
            (ScoreFn(lambda X: np.abs(X[:, 1]) - 1, 2, "negative-strip"), [0, 1], 1.5, Case.INDIRECT_WIPEOUT),
            (Polytope([[0, 0], [2, 0], [2, 2], [0, 2]]), [2, 2], 1.0, Case.EXPANSION),
            (BallUnion([[0, 0]], [1 + 0.3 * 0.05], polarity="negative-inside"), [1 + 0.3 * 0.05, 0], 1.0, Case.COLLISION),
        ],
    )
    def test_fixtures(self, h, x, alpha, case):
        assert classify_boundary_point(h, x, CostModel(Norm.L2, alpha), self.rho).case is case

    def test_expansion_witness_is_arc(self):
        m = classify_boundary_point(Polytope([[0, 0], [2, 0], [2, 2], [0, 2]]), [2, 2], CostModel(Norm.L2, 1.0), self.rho)
        r = np.linalg.norm(m.witness - np.array([2, 2]), axis=1)
        np.testing.assert_allclose(r, 1.0, atol=1e-9)
        # the arc spans the quarter between the outward facet normals, up to the one-cell landing tolerance
        assert np.all(m.witness >= 2 - self.rho)
        assert m.witness[:, 0].max() == pytest.approx(3.0) and m.witness[:, 1].max() == pytest.approx(3.0, abs=1e-3)

    def test_not_on_boundary(self):
        with pytest.raises(ValueError, match="not on the decision boundary"):
            classify_boundary_point(Linear([1.0, 0.0]), [1.0, 0.0], CostModel(Norm.L2, 1.0), self.rho)

    def test_preimage_of_line_is_single_direction(self):
        P = preimage_set(Linear([1.0, 0.0], 0.0), [0, 0], CostModel(Norm.L2, 1.0), self.rho)
        assert 1 <= len(P) <= 3
        np.testing.assert_allclose(P.mean(axis=0), [-1.0, 0.0], atol=1e-2)

    def test_witness_contract(self):
        with pytest.raises(ValueError):
            MappingCase(Case.EXPANSION)
        with pytest.raises(ValueError):
            MappingCase(Case.ONE_TO_ONE, np.zeros((2, 2)))


class TestComponents:
    def test_positive_balls_merge(self):
        h = BallUnion([[-1.2, 0], [1.2, 0]], [1.0])
        box = ((-3, 3), (-3, 3))
        assert count_components(rasterize(h, box, 0.02)) == 2
        assert count_components(effective_grid(h, box, 0.02, CostModel(Norm.L2, 0.5))) == 1

    def test_negative_region_splits(self):
        # a negative dumbbell pinches off once the neck is eaten from both sides
        h = ScoreFn(
            lambda X: np.minimum(
                np.minimum(np.hypot(X[:, 0] + 1.5, X[:, 1]) - 1.0, np.hypot(X[:, 0] - 1.5, X[:, 1]) - 1.0),
                np.maximum(np.abs(X[:, 1]) - 0.3, np.abs(X[:, 0]) - 1.5),
            ),
            2,
        )
        g = rasterize(ScoreFn(lambda X: h.score(X), 2), ((-3, 3), (-3, 3)), 0.02)
        assert count_components(g, label=0) == 1
        eff = effective_grid(ScoreFn(lambda X: -h.score(X), 2), ((-3, 3), (-3, 3)), 0.02, CostModel(Norm.L2, 0.5))
        assert count_components(eff, label=0) == 2

"""Acceptance criteria 1-8, each at its stated tolerance, one pass/fail line apiece."""

import time
import warnings
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_classifier, random_linear
from strategex.accuracy import (
    three_point_classifiers,
    three_point_dataset,
    lattice_bound,
    max_strategic_accuracy,
    max_strategic_accuracy_1d,
    repeated_interval_accuracy,
    standard_accuracy,
)
from strategex.boundary import KINK, WipedOut, effective_curvature, extract_boundary, signed_curvature
from strategex.core import BallUnion, CostModel, Dataset, GridSampled, LabelGrid, Norm, make_lattice_dataset, make_tetrahedron_dataset
from strategex.experiments import ApproximationConfig, ExpressivityConfig, aggregate, run_approximation, run_expressivity
from strategex.impossibility import check_all
from strategex.response import distance_field, effective_grid
from strategex.vc import build_fixture, effective_grids, exhaustive_vc, shatters
from test_impossibility import SHAPES
from test_response import brute_force_cells


@pytest.fixture
def report(capsys):
    def emit(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\ncriterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")

    return emit


def test_criterion_1_linear_closed_form(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    cell = 0.05
    box = ((-3.0, 3.0), (-3.0, 3.0))
    bad = 0
    for _ in range(50):
        h = random_linear(rng)
        for alpha in (0.5, 1.0, 2.0):
            g = effective_grid(h, box, cell, CostModel(Norm.L2, alpha))
            # signed distance to the shifted boundary w.x = b - alpha (w has unit norm)
            s = h.score(g.centers()) + alpha
            far = np.abs(s) > cell * np.sqrt(2)
            bad += int((g.labels.ravel()[far] != (s >= 0)[far]).sum())
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 10
    report(1, ok, f"{bad} disagreeing cells over 150 grids, {elapsed:.1f}s")
    assert ok


def test_criterion_2_curvature_map(report):
    worst = 0.0
    for r in (1.0, 2.0, 4.0):
        for alpha in (0.5, 1.0):
            cell = r / 100
            R = r + alpha
            g = effective_grid(BallUnion([[0, 0]], [r]), ((-R - 1, R + 1), (-R - 1, R + 1)), cell, CostModel(Norm.L2, alpha))
            b = extract_boundary(g)
            for t in np.linspace(0, 2 * np.pi, 8, endpoint=False):
                kappa = signed_curvature(b, R * np.array([np.cos(t), np.sin(t)])).kappa
                worst = max(worst, abs(kappa * R - 1))
    tagged = (
        effective_curvature(0.0, 1.0) == 0.0
        and effective_curvature(1.0, 1.0) == 0.5
        and effective_curvature(-0.5, 1.0) == -1.0
        and effective_curvature(-2.0, 0.5) == KINK
    )
    try:
        effective_curvature(-2.0, 1.0)
        tagged = False
    except WipedOut:
        pass
    ok = worst <= 0.10 and tagged
    report(2, ok, f"max relative curvature error {worst:.3%}, tagged examples {'exact' if tagged else 'wrong'}")
    assert ok


def test_criterion_3_wipeout(report):
    alpha, cell = 1.0, 0.02
    box = ((-3.0, 3.0), (-3.0, 3.0))
    cost = CostModel(Norm.L2, alpha)
    small = effective_grid(BallUnion([[0, 0]], [0.9 * alpha], polarity="negative-inside"), box, cell, cost)
    big = effective_grid(BallUnion([[0, 0]], [1.5 * alpha], polarity="negative-inside"), box, cell, cost)
    r = np.linalg.norm(big.centers(), axis=1)
    neg = ~big.labels.ravel()
    outer = r[neg].max() if neg.any() else 0.0
    inner = r[~neg].min()
    ok = small.labels.all() and neg.any() and abs(outer - 0.5 * alpha) <= cell and abs(inner - 0.5 * alpha) <= cell
    report(3, ok, f"0.9a disk all-positive={bool(small.labels.all())}, 1.5a disk leaves radius {outer:.3f}..{inner:.3f} vs 0.5")
    assert ok


def test_criterion_4_impossibility(report):
    start = time.perf_counter()
    alpha = 1.0
    rho = alpha / 20
    cost = CostModel(Norm.L2, alpha)
    reasons = {}
    for reason, (g, box) in SHAPES.items():
        r = check_all(g, box, cost, rho)
        reasons[reason.value] = (not r.possible) and r.reason is reason
    rng = np.random.default_rng(0)
    checked, flagged, i = 0, 0, 0
    while checked < 100:
        h = random_classifier(rng, i)
        i += 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            e = effective_grid(h, ((-4, 4), (-4, 4)), rho, cost)
        if e.labels.all() or not e.labels.any():
            continue
        checked += 1
        flagged += not check_all(GridSampled(e), None, cost, rho).possible
    elapsed = time.perf_counter() - start
    ok = all(reasons.values()) and flagged == 0 and elapsed < 120
    report(4, ok, f"fixtures {sum(reasons.values())}/4 with correct reason, {flagged}/100 genuine grids flagged, {elapsed:.0f}s")
    assert ok


def test_criterion_5_accuracy_bounds(report):
    L2 = CostModel(Norm.L2, 1.0)
    data = three_point_dataset()
    std = standard_accuracy(three_point_classifiers()[0], data).accuracy
    strat = max_strategic_accuracy(data, L2).accuracy
    three_ok = std == Fraction(2, 3) and strat == 1

    lattice = make_lattice_dataset(7)
    best = max_strategic_accuracy(lattice, L2).accuracy
    dp = max_strategic_accuracy_1d(lattice, 1.0).accuracy
    construction = repeated_interval_accuracy(lattice, 1.0).accuracy
    lattice_ok = best <= lattice_bound(1.0) == Fraction(5, 6) and dp == construction == best

    tetra = {}
    for d, P in ((1, [0.0, 10.0]), (2, [[0.0, 0.0], [10.0, 0.0]])):
        t = make_tetrahedron_dataset(P, 0.1)
        tetra[d] = max_strategic_accuracy(t, L2).accuracy == t.majority_rate
    ok = three_ok and lattice_ok and all(tetra.values())
    report(
        5,
        ok,
        f"three-point standard {std}, max strategic {strat}; lattice m=7 best {best} <= 5/6, construction {construction}; "
        f"tetrahedron majority d=1 {tetra[1]}, d=2 {tetra[2]}",
    )
    assert ok


def test_criterion_6_vc(report):
    rho = 0.05
    H = build_fixture("four-balls")
    U = H.params["universe"]
    std = exhaustive_vc(H, U, 3).bound
    eff = exhaustive_vc(H, U, 3, True, CostModel(Norm.L2, H.params["alpha"]), rho).bound

    W = build_fixture("wipeout-lattice")
    grids = effective_grids(W, ((-2, 6), (-2, 6)), rho, CostModel(Norm.L2, W.params["alpha"]))
    identical = all(np.array_equal(g.labels, grids[0].labels) for g in grids)

    cube = build_fixture("scaled-lattice-balls")
    cube_ok = shatters(cube, cube.params["witnesses"], True, CostModel(Norm.L2, cube.params["alpha"]), rho).shattered
    ok = std == 1 and eff == 2 and identical and cube_ok
    report(6, ok, f"four-balls standard {std} effective {eff}; {len(W)} wipeout effectives identical={identical}; unit-cube balls shatter e1,e2={cube_ok}")
    assert ok


def test_criterion_7_experiment_trends(report):
    start = time.perf_counter()
    rows = run_expressivity(ExpressivityConfig(alphas=(2.0, 24.0), ks=(1, 2, 3), instances=10))
    kd = {(a["k"], a["alpha"]): a["k_delta"]["mean"] for a in aggregate(rows, ("k", "alpha"), ("k_delta",))}
    part_a = {k: abs(kd[(k, 2.0)] - k) <= 1 for k in (1, 2, 3)}
    part_b = {k: kd[(k, 24.0)] > k for k in (1, 2, 3)}

    rows = run_approximation(ApproximationConfig(alphas=(0.5, 1.0, 2.0), mus=(0.0, 5.0), instances=10))
    agg = {(a["mu"], a["alpha"]): a for a in aggregate(rows, ("mu", "alpha"), ("max_linear", "max_strategic"))}
    part_c = all(agg[(5.0, a)]["max_strategic"]["mean"] > 0.98 for a in (0.5, 1.0, 2.0))
    m0 = [agg[(0.0, a)]["max_strategic"]["mean"] for a in (0.5, 1.0, 2.0)]
    lin0 = [agg[(0.0, a)]["max_linear"]["mean"] for a in (0.5, 1.0, 2.0)]
    part_d = m0[0] > m0[1] > m0[2] and all(s > l for s, l in zip(m0, lin0))
    elapsed = time.perf_counter() - start
    ok = all(part_a.values()) and all(part_b.values()) and part_c and part_d and elapsed < 1800
    means = ", ".join(f"k={k}: {kd[(k, 2.0)]:.1f}/{kd[(k, 24.0)]:.1f}" for k in (1, 2, 3))
    report(
        7,
        ok,
        f"(a) {all(part_a.values())} (b) {all(part_b.values())} failing k={[k for k, v in part_b.items() if not v]} "
        f"(c) {part_c} (d) {part_d}; mean k_delta at alpha 2/24: {means}; "
        f"mu=0 strategic {[round(v, 3) for v in m0]} linear {[round(v, 3) for v in lin0]}; {elapsed:.0f}s",
    )
    assert ok


def test_criterion_8_oracle_equivalences(report):
    rng = np.random.default_rng(88)
    field_bad = 0
    for _ in range(20):
        mask = rng.random((64, 64)) < rng.uniform(0.002, 0.05)
        mask[tuple(rng.integers(0, 64, 2))] = True
        g = LabelGrid([0.0, 0.0], 1.0, mask)
        for norm in (Norm.L1, Norm.L2, Norm.LINF):
            field_bad += int(not np.array_equal(distance_field(g, norm).cells, brute_force_cells(mask, norm)))
    line_bad = 0
    for s in range(20):
        r = np.random.default_rng(s)
        n = int(r.integers(6, 13))
        alpha = float(r.choice([0.5, 1.0, 1.5]))
        d = Dataset(np.round(r.uniform(0, 10, n), 3)[:, None], r.integers(0, 2, n))
        line_bad += max_strategic_accuracy(d, CostModel(Norm.L2, alpha)).accuracy != max_strategic_accuracy_1d(d, alpha).accuracy
    ok = field_bad == 0 and line_bad == 0
    report(8, ok, f"distance field mismatches {field_bad}/60, searcher vs dynamic program mismatches {line_bad}/20")
    assert ok

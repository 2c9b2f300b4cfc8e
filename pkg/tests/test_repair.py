"""Repair drivers: point-wise dynamics, counterexample search, refinement."""

import math

import numpy as np
import pytest

from boxrepair import (
    Activation,
    Box,
    BoundReport,
    AffineBound,
    Layer,
    LinearConstraint,
    Network,
    Property,
    RepairConfig,
    RepairStatus,
    classification_property,
    generate_counterexample,
    lp_norm,
    point_wise_repair,
    project_onto_box,
    refine_property,
    refine_score,
    region_wise_repair,
    verify_property,
)
from boxrepair.repair import _split_once

from util import random_network


def scalar_net(w=-1.0):
    return Network(
        (
            Layer([[w]], [0.0], Activation.identity()),
            Layer([[1.0]], [0.0], Activation.identity()),
        ),
        1,
    )


def abs_net():
    """f(x) = |x| via two relu neurons; nonnegative everywhere."""
    return Network(
        (
            Layer([[1.0], [-1.0]], [0.0, 0.0], Activation.relu()),
            Layer([[1.0, 1.0]], [0.0], Activation.identity()),
        ),
        1,
    )


NONNEG = (LinearConstraint([1.0], 0.0),)


class TestPointWiseRepair:
    def test_already_satisfied_returns_original(self):
        net = scalar_net(w=2.0)
        prop = Property(Box.point([1.0]), NONNEG, "ok")
        out = point_wise_repair(net, [prop])
        assert out.repaired
        assert out.stats["iterations"] == 0
        assert out.network is net  # zero optimizer steps

    def test_scalar_sign_flip(self):
        net = scalar_net(w=-1.0)
        prop = Property(Box.point([1.0]), NONNEG, "pos")
        out = point_wise_repair(net, [prop])
        assert out.repaired
        assert out.network.satisfies(np.array([1.0]), prop)
        # synthesis walked the center at least one radius into the safe side
        center = out.stats["proxy_centers"]["pos"]
        assert center[0] >= RepairConfig().radius - 1e-12
        # the repaired feature crossed into the constraint's halfspace and
        # stopped near the boundary (satisfaction is checked every step)
        feat = out.network.forward_features(np.array([1.0]))
        assert 0.0 <= feat[0] <= center[0] + RepairConfig().radius

    def test_head_frozen(self):
        rng = np.random.default_rng(0)
        net = random_network(rng, [3, 8, 6, 4], split=2)
        x = rng.normal(0, 1, 3)
        y = int(net.forward(x).argmax())
        wrong = (y + 1) % 4
        prop = classification_property(x, wrong, 4, "flip")
        head_before = net.head_layers
        out = point_wise_repair(net, [prop])
        assert out.repaired
        for a, b in zip(out.network.head_layers, head_before):
            assert a is b

    def test_synthesis_failure_aborts(self):
        # head ignores features and always violates: synthesis cannot succeed
        net = Network(
            (
                Layer([[1.0]], [0.0], Activation.identity()),
                Layer([[0.0]], [-1.0], Activation.identity()),
            ),
            1,
        )
        prop = Property(Box.point([0.5]), NONNEG, "impossible")
        out = point_wise_repair(net, [prop])
        assert not out.repaired
        assert out.stats["reason"] == "proxy-box-synthesis"
        assert out.stats["failed_property"] == "impossible"

    def test_rejects_region_property(self):
        net = scalar_net()
        prop = Property(Box([0.0], [1.0]), NONNEG, "region")
        with pytest.raises(ValueError, match="point properties"):
            point_wise_repair(net, [prop])

    def test_distance_within_radius_implies_satisfaction(self):
        # the certified-box guarantee behind the distance diagnostic
        rng = np.random.default_rng(1)
        for trial in range(5):
            net = random_network(rng, [3, 6, 5, 3], split=2)
            x = rng.normal(0, 1, 3)
            target = int(rng.integers(0, 3))
            prop = classification_property(x, target, 3, f"t{trial}")
            out = point_wise_repair(net, [prop])
            if not out.repaired:
                continue
            dist = out.stats["task_distances"][0]
            if dist <= RepairConfig().radius:
                assert out.network.satisfies(x, prop)

    def test_multiple_properties_all_fixed_tanh(self):
        rng = np.random.default_rng(2)
        net = random_network(rng, [4, 10, 8, 3], activation="tanh", split=2)
        props = []
        while len(props) < 6:
            x = rng.normal(0, 1, 4)
            if net.forward(x).argmax() != 2:
                props.append(classification_property(x, 2, 3, f"p{len(props)}"))
        out = point_wise_repair(net, props)
        assert out.repaired
        for prop in props:
            assert out.network.satisfies(prop.point(), prop)

    def test_multiple_properties_all_fixed_relu(self):
        # enough tasks that shared-weight updates revive relu units that are
        # dead for any single input
        rng = np.random.default_rng(12)
        net = random_network(rng, [4, 16, 12, 3], split=2)
        props = []
        while len(props) < 12:
            x = rng.normal(0, 1, 4)
            if net.forward(x).argmax() != 1:
                props.append(classification_property(x, 1, 3, f"q{len(props)}"))
        out = point_wise_repair(net, props)
        assert out.repaired
        for prop in props:
            assert out.network.satisfies(prop.point(), prop)


class TestGenerateCounterexample:
    def test_exact_linear_confirmed(self):
        net = scalar_net(w=1.0)  # f(x) = x
        prop = Property(Box([-1.0], [1.0]), NONNEG, "lin")
        res = generate_counterexample(net, prop)
        assert not res.verified
        assert res.report.bounds[0].coeffs[0] == pytest.approx(1.0)
        assert res.candidate is not None
        assert res.candidate[0] == -1.0

    def test_verified_region_has_no_candidate(self):
        net = scalar_net(w=1.0)
        prop = Property(Box([0.5], [1.0]), NONNEG, "safe")
        res = generate_counterexample(net, prop)
        assert res.verified
        assert res.candidate is None
        assert res.refine_scores is None
        assert res.report.lower_values[0] == pytest.approx(0.5)

    def test_spurious_candidate_keeps_scores(self):
        # |x| >= 0 everywhere, but the relaxed bound over a box that tips
        # past u = -l reports a possible violation; the probe point
        # satisfies, so no task is emitted while scores stay nonzero
        net = abs_net()
        prop = Property(Box([-1.0], [0.5]), NONNEG, "spurious")
        res = generate_counterexample(net, prop)
        assert not res.verified
        assert res.candidate is None
        assert res.spurious
        assert res.refine_scores is not None and res.refine_scores[0] > 0
        # grid search: no true counterexample exists in the region
        grid = np.linspace(-1.0, 0.5, 4001)
        assert np.all(np.abs(grid) >= 0)


class TestRefineScore:
    @staticmethod
    def report_from(coeffs_list, lower_values):
        bounds = tuple(AffineBound(np.asarray(c, dtype=float), 0.0) for c in coeffs_list)
        lows = np.asarray(lower_values, dtype=float)
        return BoundReport(bounds, lows, tuple(int(i) for i in np.flatnonzero(lows < 0)))

    def test_formula(self):
        prop = Property(Box([0.0, 0.0], [2.0, 4.0]), (LinearConstraint([1.0, 1.0], 0.0),))
        report = self.report_from([[3.0, 1.0]], [-1.0])
        assert np.allclose(refine_score(prop, report), [6.0, 4.0])

    def test_zero_width_dimension_scores_zero(self):
        prop = Property(Box([0.0, 1.0], [2.0, 1.0]), (LinearConstraint([1.0, 1.0], 0.0),))
        report = self.report_from([[5.0, 9.0]], [-1.0])
        scores = refine_score(prop, report)
        assert scores[1] == 0.0

    def test_absolute_sum_over_violated(self):
        prop = Property(Box([0.0, 0.0], [1.0, 1.0]), (LinearConstraint([1.0, 0.0], 0.0),) * 2)
        report = self.report_from([[1.0, 0.0], [-1.0, 2.0]], [-1.0, -2.0])
        assert np.allclose(refine_score(prop, report), [2.0, 2.0])

    def test_requires_violations(self):
        prop = Property(Box([0.0], [1.0]), NONNEG)
        report = self.report_from([[1.0]], [0.5])
        with pytest.raises(ValueError):
            refine_score(prop, report)


class TestRefineProperty:
    def test_midpoint_split(self):
        prop = Property(Box([0.0, 0.0], [1.0, 1.0]), NONNEG * 1 + (LinearConstraint([1.0], 0.0),))
        low, high = refine_property(prop, 0)
        assert np.allclose(low.input.lower, [0.0, 0.0])
        assert np.allclose(low.input.upper, [0.5, 1.0])
        assert np.allclose(high.input.lower, [0.5, 0.0])
        assert np.allclose(high.input.upper, [1.0, 1.0])

    def test_constraints_shared_verbatim(self):
        prop = Property(Box([0.0], [1.0]), NONNEG, "parent")
        low, high = refine_property(prop, 0)
        assert low.constraints is prop.constraints
        assert high.constraints is prop.constraints

    def test_repeated_splits_tile_parent(self):
        rng = np.random.default_rng(3)
        prop = Property(Box([0.0, 0.0, 0.0], [1.0, 2.0, 3.0]), NONNEG, "root")
        leaves = [prop]
        for _ in range(5):
            victim = leaves.pop(int(rng.integers(0, len(leaves))))
            dim = int(rng.integers(0, 3))
            leaves.extend(refine_property(victim, dim))
        total = sum(np.prod(leaf.input.width) for leaf in leaves)
        assert total == pytest.approx(np.prod(prop.input.width))
        # leaves only touch on measure-zero faces: pairwise interior overlap is empty
        for i in range(len(leaves)):
            for j in range(i + 1, len(leaves)):
                lo = np.maximum(leaves[i].input.lower, leaves[j].input.lower)
                hi = np.minimum(leaves[i].input.upper, leaves[j].input.upper)
                assert np.any(hi - lo <= 1e-15)

    def test_zero_width_rejected(self):
        prop = Property(Box.point([1.0]), NONNEG)
        with pytest.raises(ValueError, match="zero-width"):
            refine_property(prop, 0)

    def test_split_once_detects_resolution_limit(self):
        prop = Property(Box.point([1.0, 2.0]), (LinearConstraint([1.0], 0.0),))
        assert _split_once(prop, np.array([1.0, 0.5])) is None


class TestRegionWiseRepair:
    def test_verified_at_entry(self):
        net = scalar_net(w=1.0)
        prop = Property(Box([0.5], [1.0]), NONNEG, "safe")
        out = region_wise_repair(net, [prop])
        assert out.repaired
        assert out.network is net
        assert out.stats["final_properties"] == 1
        assert out.stats["counterexamples"] == 0

    def test_scalar_toy_sign_flip(self):
        net = scalar_net(w=-1.0)
        prop = Property(Box([0.0], [1.0]), NONNEG, "toy")
        out = region_wise_repair(net, [prop])
        assert out.repaired
        assert out.stats["final_properties"] == 1  # no refinement needed
        assert out.stats["counterexamples"] == 1
        # post-hoc soundness: dense sample of the original region
        xs = np.linspace(0.0, 1.0, 10_001)[:, None]
        assert np.all(out.network.forward(xs) >= -1e-9)

    def test_budget_exhaustion_respects_budget(self):
        # |x| >= 0 never yields a confirmed counterexample, but the bound
        # stays negative on any box straddling zero: pure refinement until
        # the budget trips
        net = abs_net()
        prop = Property(Box([-1.0], [0.5]), NONNEG, "straddle")
        cfg = RepairConfig(budget=8)
        out = region_wise_repair(net, [prop], cfg)
        assert not out.repaired
        assert out.stats["reason"] == "property-budget"
        assert out.stats["final_properties"] <= 8
        assert out.stats["counterexamples"] == 0

    def test_inner_synthesis_failure_propagates(self):
        net = Network(
            (
                Layer([[1.0]], [0.0], Activation.identity()),
                Layer([[0.0]], [-1.0], Activation.identity()),
            ),
            1,
        )
        prop = Property(Box([0.0], [1.0]), NONNEG, "hopeless")
        out = region_wise_repair(net, [prop])
        assert not out.repaired
        assert out.stats["reason"] == "point-wise:proxy-box-synthesis"

    def test_budget_must_cover_initial_set(self):
        net = scalar_net()
        props = [Property(Box([0.0], [1.0]), NONNEG, f"p{i}") for i in range(3)]
        with pytest.raises(ValueError, match="budget"):
            region_wise_repair(net, props, RepairConfig(budget=2))

    def test_repairs_tanh_region(self):
        rng = np.random.default_rng(4)
        net = random_network(rng, [2, 8, 6, 2], activation="tanh", split=2)
        # demand class 0 on a small region around a point currently won by class 1
        for _ in range(50):
            x = rng.normal(0, 1, 2)
            if net.forward(x).argmax() == 1:
                break
        box = Box(x - 0.05, x + 0.05)
        prop = Property(box, tuple(
            LinearConstraint(np.eye(2)[0] - np.eye(2)[j], 0.0) for j in range(2)
        ), "flip-region")
        out = region_wise_repair(net, [prop], RepairConfig(budget=300))
        assert out.repaired
        xs = box.sample(rng, 100_000)
        logits = out.network.forward(xs)
        assert np.all(logits[:, 0] - logits[:, 1] >= -1e-9)
        assert verify_property(out.network, prop)


class TestDistanceBoundChain:
    def test_worked_example(self):
        center = np.zeros(2)
        feature = np.array([0.3, 0.4])
        box = Box.centered(center, 0.1)
        proj = project_onto_box(feature, box)
        lower = max(lp_norm(center - proj, 2.0), lp_norm(feature - proj, 2.0))
        dist = lp_norm(feature - center, 2.0)
        upper = lp_norm(feature - proj, 2.0) + 0.1 * math.sqrt(2.0)
        assert lower == pytest.approx(0.3606, abs=1e-4)
        assert dist == pytest.approx(0.5)
        assert upper == pytest.approx(0.5020, abs=1e-4)
        assert lower <= dist <= upper

    @pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
    def test_chain_fuzz(self, p):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            s = int(rng.integers(1, 10))
            center = rng.normal(0, 2, s)
            radius = float(rng.uniform(0.01, 1.0))
            feature = rng.normal(0, 3, s)
            box = Box.centered(center, radius)
            proj = project_onto_box(feature, box)
            dist = lp_norm(feature - center, p)
            proj_dist = lp_norm(feature - proj, p)
            lower = max(lp_norm(center - proj, p), proj_dist)
            upper = proj_dist + radius * s ** (1.0 / p) if not math.isinf(p) else proj_dist + radius
            assert lower <= dist + 1e-12
            assert dist <= upper + 1e-12

    def test_distance_below_radius_lands_inside_box(self):
        # the corollary's geometric core: L <= r puts the feature in the box
        rng = np.random.default_rng(9)
        for _ in range(200):
            s = int(rng.integers(1, 8))
            center = rng.normal(0, 1, s)
            radius = float(rng.uniform(0.05, 0.5))
            feature = center + rng.normal(0, radius / 2, s)
            if lp_norm(feature - center, 2.0) <= radius:
                assert Box.centered(center, radius).contains(feature, tol=1e-12)

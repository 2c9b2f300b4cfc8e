"""Point-wise and region-wise repair drivers.

Point-wise repair synthesizes a certified proxy box per point property,
then runs Adam on the feature extractor to pull each point's features
toward its box center, checking direct satisfaction before every step.

Region-wise repair alternates counterexample generation (bound the
constraints over each live region, confirm the worst candidate by a
forward check), point-wise repair of the confirmed counterexamples, and
refinement of still-unverified regions by bisecting the dimension with
the highest refine score. A repaired verdict is only ever returned when
every live region's bound report is clean, which makes it sound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .autodiff import AdamState, adam_step, backward, repair_loss
from .bounds import BoundMode, BoundReport, linear_lower_bounds
from .linalg import Box, affine_argmax_over_box, lp_norm
from .network import Network
from .preimage import synthesize_proxy_box
from .properties import Property

__all__ = [
    "RepairStatus",
    "RepairConfig",
    "PointTask",
    "RepairOutcome",
    "CounterexampleSearch",
    "point_wise_repair",
    "generate_counterexample",
    "refine_score",
    "refine_property",
    "region_wise_repair",
    "verify_property",
]


class RepairStatus(Enum):
    REPAIRED = "repaired"
    FAILED = "failed"


@dataclass(frozen=True)
class RepairConfig:
    """All repair tunables.

    radius is the proxy-box (and certification) radius; box_iters and
    repair_iters cap synthesis shifts and optimizer steps; budget caps
    the number of live sub-properties during region repair. The repair
    distance is always Euclidean.
    """

    radius: float = 0.1
    box_iters: int = 100
    repair_iters: int = 1000
    budget: int = 10000
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    bounds_mode: BoundMode = BoundMode.BACKWARD

    def __post_init__(self):
        for name in ("radius", "box_iters", "repair_iters", "budget", "lr", "epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1/beta2 must lie in [0, 1)")


@dataclass(frozen=True, eq=False)
class PointTask:
    """A point to fix and the certified feature target pulling it."""

    x: np.ndarray
    center: np.ndarray
    label: str


@dataclass(frozen=True, eq=False)
class RepairOutcome:
    status: RepairStatus
    network: Network
    stats: dict = field(default_factory=dict)

    @property
    def repaired(self) -> bool:
        return self.status is RepairStatus.REPAIRED


def _synthesize_tasks(net, props, cfg, warm_centers):
    """Proxy boxes for every point property; (tasks, None) or
    (None, failed label). Previously certified centers are reused as
    warm starts; they stay certified because the head is frozen."""
    tasks = []
    for prop in props:
        x = prop.point()
        start = warm_centers.get(prop.label) if warm_centers else None
        if start is None:
            start = net.forward_features(x)
        proxy = synthesize_proxy_box(
            net.head_layers, start, prop, cfg.radius, cfg.box_iters, cfg.bounds_mode
        )
        if proxy is None:
            return None, prop.label
        tasks.append(PointTask(x, proxy.center, prop.label))
    return tasks, None


def _all_satisfied(net: Network, props: Sequence[Property]) -> bool:
    return all(net.satisfies(p.point(), p) for p in props)


def point_wise_repair(
    net: Network,
    props: Sequence[Property],
    cfg: RepairConfig = RepairConfig(),
    warm_centers: Optional[dict] = None,
) -> RepairOutcome:
    """Repair point properties; Repaired guarantees every property's
    constraints hold on its point by direct evaluation."""
    start_time = time.perf_counter()
    props = list(props)
    if not props:
        raise ValueError("no properties to repair")
    for prop in props:
        if not prop.is_point:
            raise ValueError(f"point-wise repair needs point properties: {prop.label!r}")
        if prop.output_dim != net.output_dim:
            raise ValueError(f"property {prop.label!r} output dim mismatch")

    tasks, failed_label = _synthesize_tasks(net, props, cfg, warm_centers)
    if tasks is None:
        return RepairOutcome(
            RepairStatus.FAILED,
            net,
            {
                "reason": "proxy-box-synthesis",
                "failed_property": failed_label,
                "iterations": 0,
                "wall_time_s": time.perf_counter() - start_time,
            },
        )

    pairs = [(t.x, t.center) for t in tasks]
    state = AdamState.initial(net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon)
    losses = []
    iterations = cfg.repair_iters
    done = False
    for step in range(cfg.repair_iters):
        if _all_satisfied(net, props):
            iterations = step
            done = True
            break
        losses.append(repair_loss(net, pairs))
        state, net = adam_step(state, net, backward(net, pairs))
    if not done:
        done = _all_satisfied(net, props)

    # diagnostic only: distance <= radius is sufficient but not necessary
    distances = [
        lp_norm(net.forward_features(t.x) - t.center, 2.0) for t in tasks
    ]
    stats = {
        "iterations": iterations,
        "loss_trajectory": losses,
        "proxy_centers": {t.label: t.center for t in tasks},
        "task_distances": distances,
        "tasks_within_radius": sum(1 for d in distances if d <= cfg.radius),
        "wall_time_s": time.perf_counter() - start_time,
    }
    if done:
        return RepairOutcome(RepairStatus.REPAIRED, net, stats)
    stats["reason"] = "optimizer-budget"
    return RepairOutcome(RepairStatus.FAILED, net, stats)


@dataclass(frozen=True, eq=False)
class CounterexampleSearch:
    """Outcome of one bound-and-probe pass over a region property.

    candidate is set only when the worst in-box point is a confirmed
    violation under direct evaluation; refine_scores is None when the
    property verified outright.
    """

    report: BoundReport
    refine_scores: Optional[np.ndarray]
    candidate: Optional[np.ndarray]
    spurious: bool = False

    @property
    def verified(self) -> bool:
        return self.report.all_satisfied


def generate_counterexample(
    net: Network, prop: Property, mode: BoundMode = BoundMode.BACKWARD
) -> CounterexampleSearch:
    """Bound all constraints over the region; if some may fail, probe the
    in-box minimizer of their summed bound coefficients."""
    report = linear_lower_bounds(net.layers, prop.input, prop.constraints, mode)
    if report.all_satisfied:
        return CounterexampleSearch(report, None, None)
    scores = refine_score(prop, report)
    direction = -np.sum([report.bounds[k].coeffs for k in report.violated], axis=0)
    candidate = affine_argmax_over_box(direction, prop.input)
    if net.satisfies(candidate, prop):
        return CounterexampleSearch(report, scores, None, spurious=True)
    return CounterexampleSearch(report, scores, candidate)


def refine_score(prop: Property, report: BoundReport) -> np.ndarray:
    """Per-dimension splitting priority: width times the summed absolute
    bound coefficients of the possibly-violated constraints."""
    if not report.violated:
        raise ValueError("refine score undefined when no constraint may fail")
    coeff_mass = np.sum([np.abs(report.bounds[k].coeffs) for k in report.violated], axis=0)
    return prop.input.width * coeff_mass


def refine_property(prop: Property, dim: int) -> tuple[Property, Property]:
    """Bisect the input box at the midpoint of one dimension; children
    carry the parent's constraints verbatim and tile it exactly."""
    box = prop.input
    if not 0 <= dim < box.dim:
        raise ValueError(f"dimension {dim} out of range for a {box.dim}-D box")
    if box.width[dim] <= 0.0:
        raise ValueError(f"cannot split zero-width dimension {dim}")
    mid = (box.lower[dim] + box.upper[dim]) / 2.0
    lower_upper = box.upper.copy()
    lower_upper[dim] = mid
    upper_lower = box.lower.copy()
    upper_lower[dim] = mid
    low = Property(Box(box.lower, lower_upper), prop.constraints, f"{prop.label}:{dim}l")
    high = Property(Box(upper_lower, box.upper), prop.constraints, f"{prop.label}:{dim}u")
    return low, high


def _constraints_key(prop: Property) -> bytes:
    parts = []
    for c in prop.constraints:
        parts.append(c.coeffs.tobytes())
        parts.append(np.float64(c.bias).tobytes())
    return b"".join(parts)


def _split_once(prop: Property, scores: np.ndarray):
    """Children of the max-score bisection, or None when the box is at
    float resolution along every splittable dimension."""
    dim = int(np.argmax(scores))
    box = prop.input
    if box.width[dim] <= 0.0:
        return None
    mid = (box.lower[dim] + box.upper[dim]) / 2.0
    if mid <= box.lower[dim] or mid >= box.upper[dim]:
        return None
    return refine_property(prop, dim)


def region_wise_repair(
    net: Network,
    props: Sequence[Property],
    cfg: RepairConfig = RepairConfig(),
) -> RepairOutcome:
    """Counterexample-driven repair of region properties.

    Returns Repaired only when every live sub-property's bound report is
    clean, so a repaired model provably satisfies all original
    properties (the live set always tiles them). Confirmed
    counterexamples accumulate across rounds (deduplicated by exact
    coordinates) so earlier fixes are re-enforced by every point-wise
    phase; rounds whose candidates are all spurious skip the point-wise
    phase and only refine.
    """
    start_time = time.perf_counter()
    props = list(props)
    if not props:
        raise ValueError("no properties to repair")
    if cfg.budget < len(props):
        raise ValueError("budget smaller than the initial property count")

    task_props: list[Property] = []
    seen_tasks: set = set()
    warm_centers: dict = {}
    rounds: list[dict] = []
    losses: list[float] = []

    def fail(reason, live, extra=None):
        stats = {
            "reason": reason,
            "rounds": rounds,
            "final_properties": len(live),
            "counterexamples": len(task_props),
            "wall_time_s": time.perf_counter() - start_time,
        }
        if extra:
            stats.update(extra)
        return RepairOutcome(RepairStatus.FAILED, net, stats)

    def collect_new_tasks(live, results):
        new = 0
        spurious = 0
        for prop, res in zip(live, results):
            if res.candidate is not None:
                key = (_constraints_key(prop), res.candidate.tobytes())
                if key not in seen_tasks:
                    seen_tasks.add(key)
                    task_props.append(
                        Property(
                            Box.point(res.candidate),
                            prop.constraints,
                            label=f"cx{len(task_props)}",
                        )
                    )
                    new += 1
            elif res.spurious:
                spurious += 1
        return new, spurious

    live = props
    results = [generate_counterexample(net, p, cfg.bounds_mode) for p in live]
    new_tasks, spurious = collect_new_tasks(live, results)
    while len(live) <= cfg.budget:
        if new_tasks:
            inner = point_wise_repair(net, task_props, cfg, warm_centers)
            losses.extend(inner.stats.get("loss_trajectory", ()))
            if not inner.repaired:
                return fail(f"point-wise:{inner.stats.get('reason', 'unknown')}", live)
            net = inner.network
            warm_centers = inner.stats["proxy_centers"]

        results = [generate_counterexample(net, p, cfg.bounds_mode) for p in live]
        new_tasks, spurious = collect_new_tasks(live, results)
        violated = [i for i, res in enumerate(results) if not res.verified]
        rounds.append(
            {
                "live_properties": len(live),
                "violated_properties": len(violated),
                "new_counterexamples": new_tasks,
                "spurious_candidates": spurious,
            }
        )
        if not violated:
            return RepairOutcome(
                RepairStatus.REPAIRED,
                net,
                {
                    "rounds": rounds,
                    "final_properties": len(live),
                    "counterexamples": len(task_props),
                    "loss_trajectory": losses,
                    "wall_time_s": time.perf_counter() - start_time,
                },
            )

        next_live = [p for p, res in zip(live, results) if res.verified]
        for i in violated:
            pieces = _split_once(live[i], results[i].refine_scores)
            if pieces is None:
                return fail("resolution-exhausted", live)
            next_live.extend(pieces)
        if len(next_live) > cfg.budget:
            return fail("property-budget", live)
        live = next_live

    return fail("property-budget", live)


def verify_property(
    net: Network, prop: Property, cfg: RepairConfig = RepairConfig()
) -> bool:
    """Sound verification by bound checks plus refinement; False means
    either a confirmed violation or giving up (budget/resolution)."""
    live = [prop]
    while live:
        next_live = []
        for p in live:
            res = generate_counterexample(net, p, cfg.bounds_mode)
            if res.verified:
                continue
            if res.candidate is not None:
                return False
            pieces = _split_once(p, res.refine_scores)
            if pieces is None:
                return False
            next_live.extend(pieces)
        if len(next_live) > cfg.budget:
            return False
        live = next_live
    return True

"""Provable repair of dense feedforward classifiers.

Repairs point and region properties by synthesizing certified
feature-space proxy boxes under the frozen classifier head and pulling
the feature extractor toward their centers, with counterexample-driven
property refinement for region tasks.
"""

from .autodiff import AdamState, ParamGrads, adam_step, backward, repair_loss
from .bounds import (
    AffineBound,
    BoundMode,
    BoundReport,
    PreActivationBounds,
    intermediate_bounds,
    linear_lower_bounds,
    relax_activation,
)
from .linalg import (
    Box,
    affine_argmax_over_box,
    affine_min_over_box,
    lp_norm,
    project_onto_box,
)
from .network import Activation, Layer, Network, default_split
from .preimage import ProxyBox, synthesize_proxy_box
from .properties import LinearConstraint, Property, classification_property
from .repair import (
    PointTask,
    RepairConfig,
    RepairOutcome,
    RepairStatus,
    generate_counterexample,
    point_wise_repair,
    refine_property,
    refine_score,
    region_wise_repair,
    verify_property,
)
from .specio import (
    Dataset,
    eval_metrics,
    load_dataset,
    load_network,
    parse_nnet,
    parse_properties,
    save_network,
)

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "AdamState",
    "AffineBound",
    "BoundMode",
    "BoundReport",
    "Box",
    "Dataset",
    "Layer",
    "LinearConstraint",
    "Network",
    "ParamGrads",
    "PointTask",
    "PreActivationBounds",
    "Property",
    "ProxyBox",
    "RepairConfig",
    "RepairOutcome",
    "RepairStatus",
    "adam_step",
    "affine_argmax_over_box",
    "affine_min_over_box",
    "backward",
    "classification_property",
    "default_split",
    "eval_metrics",
    "generate_counterexample",
    "intermediate_bounds",
    "linear_lower_bounds",
    "load_dataset",
    "load_network",
    "lp_norm",
    "parse_nnet",
    "parse_properties",
    "point_wise_repair",
    "project_onto_box",
    "refine_property",
    "refine_score",
    "region_wise_repair",
    "relax_activation",
    "repair_loss",
    "save_network",
    "synthesize_proxy_box",
    "verify_property",
]

"""Ingress/egress: NNet parsing, the JSON model format, property files,
CSV datasets, and evaluation metrics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .linalg import Box
from .network import Activation, Layer, Network, default_split
from .properties import LinearConstraint, Property, classification_property
from .repair import RepairConfig, verify_property

__all__ = [
    "NNetParseError",
    "PropertySpecError",
    "Dataset",
    "parse_nnet",
    "write_nnet",
    "save_network",
    "load_network",
    "parse_properties",
    "save_properties",
    "bundled_property_file",
    "load_dataset",
    "load_model",
    "point_properties",
    "eval_metrics",
]


class NNetParseError(ValueError):
    """Malformed NNet file; message carries the offending line number."""


class PropertySpecError(ValueError):
    """Malformed or inconsistent property specification file."""


# ---------------------------------------------------------------------------
# NNet text format


class _NNetReader:
    """Token stream over the comma-separated NNet body."""

    def __init__(self, path: Path):
        self.path = path
        self.lines = path.read_text().splitlines()
        self.pos = 0
        while self.pos < len(self.lines) and self.lines[self.pos].lstrip().startswith("//"):
            self.pos += 1

    def error(self, message: str) -> NNetParseError:
        return NNetParseError(f"{self.path}:{self.pos + 1}: {message}")

    def row(self, what: str, expected: Optional[int] = None) -> list[float]:
        if self.pos >= len(self.lines):
            raise self.error(f"file ends before {what}")
        raw = self.lines[self.pos]
        self.pos += 1
        tokens = [t for t in raw.strip().split(",") if t.strip()]
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            raise self.error(f"non-numeric token in {what}: {raw.strip()!r}") from None
        if expected is not None and len(values) != expected:
            raise self.error(f"{what}: expected {expected} values, got {len(values)}")
        return values

    def ints(self, what: str, expected: Optional[int] = None) -> list[int]:
        values = self.row(what, expected)
        if any(v != int(v) for v in values):
            raise self.error(f"{what}: expected integers")
        return [int(v) for v in values]


def parse_nnet(path, split: Optional[int] = None) -> Network:
    """Load an NNet text file as a ReLU network over physical inputs.

    The file's input normalization ((x - mean) / range) and output
    de-normalization are folded into the first and last affine layers,
    which is exact, so forward evaluation on in-range inputs matches the
    reference semantics while properties keep their published physical
    units. Inputs are not clamped to the file's min/max ranges.
    """
    reader = _NNetReader(Path(path))
    header = reader.ints("header", 4)
    num_layers, input_size, output_size, _max_width = header
    if num_layers < 1 or input_size < 1 or output_size < 1:
        raise reader.error(f"implausible header {header}")

    sizes = reader.ints("layer sizes", num_layers + 1)
    if sizes[0] != input_size or sizes[-1] != output_size:
        raise reader.error(
            f"layer sizes {sizes} disagree with header {input_size}->{output_size}"
        )
    reader.row("legacy flag line")
    mins = reader.row("input minimums", input_size)
    maxes = reader.row("input maximums", input_size)
    means = reader.row("normalization means", input_size + 1)
    ranges = reader.row("normalization ranges", input_size + 1)
    if any(r <= 0 for r in ranges):
        raise reader.error("normalization ranges must be positive")
    if any(lo > hi for lo, hi in zip(mins, maxes)):
        raise reader.error("input minimums exceed maximums")

    weights, biases = [], []
    for layer_idx in range(num_layers):
        out_dim, in_dim = sizes[layer_idx + 1], sizes[layer_idx]
        w = np.array(
            [reader.row(f"layer {layer_idx} weight row {r}", in_dim) for r in range(out_dim)]
        )
        b = np.array(
            [reader.row(f"layer {layer_idx} bias {r}", 1)[0] for r in range(out_dim)]
        )
        weights.append(w)
        biases.append(b)

    in_mean = np.array(means[:input_size])
    in_range = np.array(ranges[:input_size])
    out_mean, out_range = means[input_size], ranges[input_size]

    weights[0] = weights[0] / in_range[None, :]
    biases[0] = biases[0] - (weights[0] * in_mean[None, :]).sum(axis=1)
    weights[-1] = weights[-1] * out_range
    biases[-1] = biases[-1] * out_range + out_mean

    layers = [
        Layer(w, b, Activation.relu() if i < num_layers - 1 else Activation.identity())
        for i, (w, b) in enumerate(zip(weights, biases))
    ]
    return Network(tuple(layers), split if split is not None else default_split(layers))


def write_nnet(
    path,
    weights: Sequence[np.ndarray],
    biases: Sequence[np.ndarray],
    mins: Sequence[float],
    maxes: Sequence[float],
    means: Sequence[float],
    ranges: Sequence[float],
    comment: str = "",
) -> None:
    """Write raw (normalized-space) layer parameters in NNet layout."""
    weights = [np.asarray(w, dtype=np.float64) for w in weights]
    biases = [np.asarray(b, dtype=np.float64) for b in biases]
    sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
    lines = []
    if comment:
        lines.extend(f"// {line}" for line in comment.splitlines())
    lines.append(f"{len(weights)},{sizes[0]},{sizes[-1]},{max(sizes)},")
    lines.append(",".join(str(s) for s in sizes) + ",")
    lines.append("0,")
    for row in (mins, maxes, means, ranges):
        lines.append(",".join(repr(float(v)) for v in row) + ",")
    for w, b in zip(weights, biases):
        for row in w:
            lines.append(",".join(repr(float(v)) for v in row) + ",")
        for v in b:
            lines.append(f"{float(v)!r},")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# JSON model format


def _activation_to_json(act: Activation):
    if act.kind == "leaky_relu":
        return {"kind": "leaky_relu", "slope": act.slope}
    return act.kind


def _activation_from_json(value) -> Activation:
    if isinstance(value, str):
        return Activation(value)
    return Activation(value["kind"], value.get("slope", 0.0))


def save_network(net: Network, path) -> None:
    doc = {
        "format": "dense-mlp-v1",
        "split": net.split,
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": _activation_to_json(layer.activation),
            }
            for layer in net.layers
        ],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_network(path, split: Optional[int] = None) -> Network:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "dense-mlp-v1":
        raise ValueError(f"{path}: not a dense-mlp-v1 model file")
    layers = [
        Layer(l["weights"], l["bias"], _activation_from_json(l["activation"]))
        for l in doc["layers"]
    ]
    if split is None:
        split = doc.get("split") or default_split(layers)
    return Network(tuple(layers), split)


def load_model(path, split: Optional[int] = None) -> Network:
    """Dispatch on extension: .nnet text format, otherwise JSON."""
    p = Path(path)
    if p.suffix.lower() == ".nnet":
        return parse_nnet(p, split)
    return load_network(p, split)


# ---------------------------------------------------------------------------
# Property files


def parse_properties(path, net: Optional[Network] = None) -> list[Property]:
    """Load a JSON property file, optionally validated against a network."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PropertySpecError(f"{path}: invalid JSON ({exc})") from None
    records = doc["properties"] if isinstance(doc, dict) else doc
    if not isinstance(records, list) or not records:
        raise PropertySpecError(f"{path}: expected a nonempty property list")

    props = []
    for idx, rec in enumerate(records):
        where = f"{path}: property {idx}"
        try:
            label = rec.get("label", f"property{idx}")
            box = Box(np.array(rec["input_lower"]), np.array(rec["input_upper"]))
            constraints = tuple(
                LinearConstraint(np.array(c["coeffs"]), float(c.get("bias", 0.0)))
                for c in rec["constraints"]
            )
            prop = Property(box, constraints, label)
        except (KeyError, TypeError, ValueError) as exc:
            raise PropertySpecError(f"{where}: {exc}") from None
        if net is not None:
            if prop.input.dim != net.input_dim:
                raise PropertySpecError(
                    f"{where}: input dim {prop.input.dim} != network {net.input_dim}"
                )
            if prop.output_dim != net.output_dim:
                raise PropertySpecError(
                    f"{where}: constraint dim {prop.output_dim} != network {net.output_dim}"
                )
        props.append(prop)
    return props


def save_properties(props: Sequence[Property], path) -> None:
    doc = {
        "properties": [
            {
                "label": p.label,
                "input_lower": p.input.lower.tolist(),
                "input_upper": p.input.upper.tolist(),
                "constraints": [
                    {"coeffs": c.coeffs.tolist(), "bias": c.bias} for c in p.constraints
                ],
            }
            for p in props
        ]
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def bundled_property_file(name: str = "acas_property2.json") -> Path:
    """Path of a property file shipped with the package."""
    return Path(resources.files("boxrepair").joinpath("data", name))


# ---------------------------------------------------------------------------
# Datasets and metrics


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled inputs: rows of (vector, integer class)."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels)
        if inputs.ndim != 2 or labels.ndim != 1 or inputs.shape[0] != labels.shape[0]:
            raise ValueError("dataset needs (N, m) inputs and N labels")
        if inputs.shape[0] == 0:
            raise ValueError("dataset is empty")
        if not np.all(labels == labels.astype(np.int64)):
            raise ValueError("labels must be integers")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    def __len__(self) -> int:
        return self.inputs.shape[0]


def load_dataset(path) -> Dataset:
    """Headerless CSV, one sample per row, integer label in the last column."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column plus a label")
    return Dataset(data[:, :-1], data[:, -1])


def point_properties(dataset: Dataset, num_classes: int, prefix: str = "point") -> list[Property]:
    """Argmax point property per dataset row."""
    return [
        classification_property(x, int(y), num_classes, name=f"{prefix}{i}")
        for i, (x, y) in enumerate(zip(dataset.inputs, dataset.labels))
    ]


def eval_metrics(
    net: Network,
    test: Dataset,
    props: Sequence[Property] = (),
    cfg: Optional[RepairConfig] = None,
) -> dict:
    """Accuracy on the test set plus property satisfaction metrics.

    psr counts properties that provably hold (direct evaluation for
    point properties, bound-based verification for regions); gene
    counts forward satisfaction at each property's representative point
    (the point itself, or the box midpoint for regions). Both are None
    when no properties are given.
    """
    if len(test) == 0:
        raise ValueError("empty test dataset")
    if np.any(test.labels < 0) or np.any(test.labels >= net.output_dim):
        raise ValueError("test labels outside the network's class range")
    logits = net.forward(test.inputs)
    acc = float((logits.argmax(axis=1) == test.labels).mean())
    metrics = {"acc": acc, "psr": None, "gene": None}
    if props:
        cfg = cfg or RepairConfig()
        sat = 0
        point_ok = 0
        for prop in props:
            if prop.is_point:
                ok = net.satisfies(prop.point(), prop)
            else:
                ok = verify_property(net, prop, cfg)
            sat += ok
            point_ok += prop.holds_on_output(net.forward(prop.input.midpoint))
        metrics["psr"] = sat / len(props)
        metrics["gene"] = point_ok / len(props)
    return metrics

"""
JSON and CSV codecs for the command-line tools.

Every document carries "version": "1". Floats are written with Python's
shortest round-trip representation, so parse(serialize(x)) == x. Readers
reject unknown fields with a SchemaError naming the field path.

Scene file (also used for predicted graphs; only "graph" is required):

    {
      "version": "1",
      "roi": {"x_min": -25.0, "x_max": 25.0, "z_min": 1.0, "z_max": 50.0},
      "graph": {
        "curves": [[[x, z], [x, z], [x, z]], ...],
        "incidence": [[i, j], ...],
        "existence": [p, ...]                      (optional)
      },
      "objects": [{"center": [x, y, z], "corners": [[x, y, z] x 8],
                   "class_id": 0, "confidence": 1.0}, ...],
      "gen_membership": [[...], ...],              (optional)
      "membership": [[...], ...]                   (optional)
    }

Files written by `descend` and `em-fit` are scene files with an extra
"descent" or "em" block, so they can be fed back as predictions.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .em_fit import EmState
from .errors import SchemaError, ValidationError
from .geometry import DEFAULT_ROI, LaneGraph, RegionOfInterest
from .matching import GraphMatch
from .membership import MembershipMatrix
from .metrics import EvalReport
from .objects import DetectionBox
from .pipeline import DescentResult, LabelBundle
from .scenegen import Scene, SceneSpec

FORMAT_VERSION = "1"

_SCENE_FIELDS = ("version", "roi", "graph", "objects", "gen_membership", "membership", "descent", "em")
_GRAPH_FIELDS = ("curves", "incidence", "existence")
_OBJECT_FIELDS = ("center", "corners", "class_id", "confidence")
_ROI_FIELDS = ("x_min", "x_max", "z_min", "z_max")


@dataclass(frozen=True)
class SceneFile:
    graph: LaneGraph
    roi: RegionOfInterest = DEFAULT_ROI
    objects: tuple[DetectionBox, ...] = ()
    gen_membership: MembershipMatrix | None = None
    membership: MembershipMatrix | None = None
    version: str = FORMAT_VERSION

    @classmethod
    def from_scene(cls, scene: Scene) -> SceneFile:
        return cls(scene.gt_graph, scene.roi, scene.objects, scene.gen_membership)


# -- text ---------------------------------------------------------------------


def dumps(doc: dict[str, Any]) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, doc: dict[str, Any]) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def loads(text: str, source: str | Path | None = None) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        where = f"{source}: " if source is not None else ""
        raise SchemaError(f"{where}malformed JSON: {exc.msg}", line=exc.lineno, column=exc.colno) from exc


def read_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc
    return loads(text, source=path)


# -- field helpers ------------------------------------------------------------


def _fail(message: str, field: str) -> SchemaError:
    return SchemaError(message, field=field, version=FORMAT_VERSION)


def _table(value: Any, field: str, allowed: Sequence[str], required: Sequence[str] = ()) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise _fail(f"expected an object, got {type(value).__name__}", field)
    for key in value:
        if key not in allowed:
            raise _fail(f"unknown field {key!r}", f"{field}.{key}" if field else key)
    for key in required:
        if key not in value:
            raise _fail("missing required field", f"{field}.{key}" if field else key)
    return value


def _number(value: Any, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(f"expected a number, got {value!r}", field)
    return float(value)


def _integer(value: Any, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _fail(f"expected an integer, got {value!r}", field)
    return value


def _array(value: Any, field: str, shape: tuple[int | None, ...]) -> np.ndarray:
    """Nested list of numbers with the given shape (None for any length)."""

    def walk(node: Any, depth: int, path: str) -> Any:
        if depth == len(shape):
            return _number(node, path)
        if not isinstance(node, list):
            raise _fail(f"expected a list, got {type(node).__name__}", path)
        if shape[depth] is not None and len(node) != shape[depth]:
            raise _fail(f"expected {shape[depth]} entries, got {len(node)}", path)
        return [walk(item, depth + 1, f"{path}[{k}]") for k, item in enumerate(node)]

    data = walk(value, 0, field)
    empty_shape = tuple(0 if s is None else s for s in shape)
    return np.array(data, dtype=float) if len(data) else np.zeros(empty_shape)


def _checked(field: str, build, *args):
    try:
        return build(*args)
    except SchemaError:
        raise
    except ValidationError as exc:
        raise _fail(str(exc), field) from exc


def _floats(values: np.ndarray) -> list:
    return np.asarray(values, dtype=float).tolist()


# -- region of interest -------------------------------------------------------


def roi_to_dict(roi: RegionOfInterest) -> dict[str, float]:
    return {name: float(getattr(roi, name)) for name in _ROI_FIELDS}


def roi_from_dict(value: Any, field: str = "roi") -> RegionOfInterest:
    table = _table(value, field, _ROI_FIELDS, _ROI_FIELDS)
    numbers = {name: _number(table[name], f"{field}.{name}") for name in _ROI_FIELDS}
    return _checked(field, lambda: RegionOfInterest(**numbers))


# -- graph --------------------------------------------------------------------


def graph_to_dict(graph: LaneGraph) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "curves": _floats(graph.control_points()),
        "incidence": [[i, j] for i, j in graph.edges()],
    }
    if graph.existence is not None:
        doc["existence"] = _floats(graph.existence)
    return doc


def graph_from_dict(value: Any, field: str = "graph") -> LaneGraph:
    table = _table(value, field, _GRAPH_FIELDS, ("curves", "incidence"))
    control = _array(table["curves"], f"{field}.curves", (None, 3, 2))
    raw_edges = table["incidence"]
    if not isinstance(raw_edges, list):
        raise _fail("expected a list of [i, j] pairs", f"{field}.incidence")
    edges = []
    for k, edge in enumerate(raw_edges):
        path = f"{field}.incidence[{k}]"
        if not isinstance(edge, list) or len(edge) != 2:
            raise _fail(f"expected an [i, j] pair, got {edge!r}", path)
        edges.append((_integer(edge[0], path), _integer(edge[1], path)))
    existence = None
    if "existence" in table:
        existence = _array(table["existence"], f"{field}.existence", (None,))
    return _checked(field, LaneGraph.from_control_points, control, edges, existence)


# -- objects ------------------------------------------------------------------


def box_to_dict(box: DetectionBox) -> dict[str, Any]:
    return {
        "center": _floats(box.center),
        "corners": _floats(box.corners),
        "class_id": int(box.class_id),
        "confidence": float(box.confidence),
    }


def box_from_dict(value: Any, field: str) -> DetectionBox:
    table = _table(value, field, _OBJECT_FIELDS, ("center", "corners"))
    center = _array(table["center"], f"{field}.center", (3,))
    corners = _array(table["corners"], f"{field}.corners", (8, 3))
    class_id = _integer(table.get("class_id", 0), f"{field}.class_id")
    confidence = _number(table.get("confidence", 1.0), f"{field}.confidence")
    return _checked(field, DetectionBox, center, corners, class_id, confidence)


# -- memberships --------------------------------------------------------------


def membership_to_rows(matrix: MembershipMatrix) -> list[list[float]]:
    return _floats(matrix.values)


def membership_from_rows(value: Any, field: str, n_rows: int, n_curves: int) -> MembershipMatrix:
    values = _array(value, field, (None, n_curves + 1)) if n_rows else np.zeros((0, n_curves + 1))
    if len(values) != n_rows:
        raise _fail(f"expected {n_rows} rows, got {len(values)}", field)
    return _checked(field, MembershipMatrix, values)


# -- scene files --------------------------------------------------------------


def _check_version(table: dict[str, Any], where: str) -> str:
    version = table.get("version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise SchemaError(f"{where}: unsupported format version {version!r}", field="version", version=FORMAT_VERSION)
    return version


def scene_to_dict(scene: SceneFile | Scene) -> dict[str, Any]:
    if isinstance(scene, Scene):
        scene = SceneFile.from_scene(scene)
    doc: dict[str, Any] = {
        "version": FORMAT_VERSION,
        "roi": roi_to_dict(scene.roi),
        "graph": graph_to_dict(scene.graph),
        "objects": [box_to_dict(b) for b in scene.objects],
    }
    if scene.gen_membership is not None:
        doc["gen_membership"] = membership_to_rows(scene.gen_membership)
    if scene.membership is not None:
        doc["membership"] = membership_to_rows(scene.membership)
    return doc


def scene_from_dict(doc: Any, where: str = "scene") -> SceneFile:
    table = _table(doc, "", _SCENE_FIELDS, ("graph",))
    version = _check_version(table, where)
    roi = roi_from_dict(table["roi"]) if "roi" in table else DEFAULT_ROI
    graph = graph_from_dict(table["graph"])
    raw_objects = table.get("objects", [])
    if not isinstance(raw_objects, list):
        raise _fail("expected a list of objects", "objects")
    objects = tuple(box_from_dict(o, f"objects[{k}]") for k, o in enumerate(raw_objects))

    memberships = {}
    for key in ("gen_membership", "membership"):
        if key in table:
            memberships[key] = membership_from_rows(table[key], key, len(objects), len(graph))
    return SceneFile(graph, roi, objects, memberships.get("gen_membership"), memberships.get("membership"), version)


def read_scene(path: str | Path) -> SceneFile:
    return scene_from_dict(read_json(path), str(path))


def write_scene(path: str | Path, scene: SceneFile | Scene) -> None:
    write_json(path, scene_to_dict(scene))


# -- scene specs and logits ---------------------------------------------------


def spec_from_dict(doc: Any, seed: int | None = None) -> SceneSpec:
    names = [f.name for f in dataclasses.fields(SceneSpec)]
    table = _table(doc, "", ["version", *names])
    _check_version(table, "scene spec")
    values: dict[str, Any] = {}
    for name in names:
        if name not in table:
            continue
        raw = table[name]
        if name == "pattern":
            if not isinstance(raw, str):
                raise _fail(f"expected a string, got {raw!r}", name)
            values[name] = raw
        elif name == "footprint":
            values[name] = tuple(_array(raw, name, (2,)).tolist())
        elif name in ("n_lanes", "objects_per_lane", "n_outliers", "seed"):
            values[name] = _integer(raw, name)
        else:
            values[name] = _number(raw, name)
    if seed is not None:
        values["seed"] = seed
    return _checked("", lambda: SceneSpec(**values))


def spec_to_dict(spec: SceneSpec) -> dict[str, Any]:
    doc = dataclasses.asdict(spec)
    doc["footprint"] = list(spec.footprint)
    return {"version": FORMAT_VERSION, **doc}


def logits_from_dict(doc: Any) -> np.ndarray:
    table = _table(doc, "", ("version", "logits"), ("logits",))
    _check_version(table, "logits")
    return _array(table["logits"], "logits", (None, None))


# -- results ------------------------------------------------------------------


def membership_doc(matrix: MembershipMatrix) -> dict[str, Any]:
    labels = matrix.labels().tolist()
    return {
        "version": FORMAT_VERSION,
        "membership": membership_to_rows(matrix),
        "labels": [int(v) for v in labels],
        "outlier_column": matrix.outlier_column,
    }


def match_to_dict(match: GraphMatch) -> dict[str, Any]:
    return {
        "h": list(match.h),
        "h_prime": list(match.h_prime),
        "outlier": list(match.outlier),
        "total_cost": float(match.total_cost),
    }


def match_doc(match: GraphMatch) -> dict[str, Any]:
    return {"version": FORMAT_VERSION, **match_to_dict(match)}


def bundle_doc(bundle: LabelBundle) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "version": FORMAT_VERSION,
        "match": match_to_dict(bundle.match),
        "z_star": membership_to_rows(bundle.z_star),
        "z_bar": membership_to_rows(bundle.z_bar),
        "losses": {k: float(v) for k, v in bundle.losses.to_dict().items()},
        "uniform_logits": bundle.uniform_logits,
    }
    if bundle.refined_objects is not None:
        doc["refined_objects"] = [box_to_dict(b) for b in bundle.refined_objects]
    return doc


def descent_doc(result: DescentResult, roi: RegionOfInterest) -> dict[str, Any]:
    return {
        "version": FORMAT_VERSION,
        "roi": roi_to_dict(roi),
        "graph": graph_to_dict(result.graph),
        "descent": {
            "trace": [float(v) for v in result.trace],
            "lane_graph_trace": [float(v) for v in result.lane_graph_trace],
        },
    }


def em_doc(state: EmState, roi: RegionOfInterest, objects: Sequence[DetectionBox]) -> dict[str, Any]:
    """The fitted graph with the objects it was fitted to and their responsibilities."""
    return {
        "version": FORMAT_VERSION,
        "roi": roi_to_dict(roi),
        "graph": graph_to_dict(state.graph()),
        "objects": [box_to_dict(b) for b in objects],
        "membership": membership_to_rows(state.responsibilities),
        "em": {
            "mixing": _floats(state.mixing),
            "log_likelihood": float(state.log_likelihood),
            "iterations": int(state.iterations),
            "converged": bool(state.converged),
            "monotonicity_violations": int(state.monotonicity_violations),
        },
    }


def report_doc(report: EvalReport) -> dict[str, Any]:
    return {"version": FORMAT_VERSION, **report.to_dict()}


def write_trace_csv(path: str | Path, state: EmState) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["iteration", "log_likelihood", "delta"])
        for row in state.trace:
            writer.writerow([row.iteration, repr(float(row.log_likelihood)), repr(float(row.delta))])

"""
Subcommand handlers.

Each handler reads its inputs, runs one library operation and writes one
output file. Errors propagate as LaneClusterError; the dispatcher turns them
into exit codes. The region of interest of a command is the one stored in
its ground-truth scene file; the settings' [roi] only applies to `generate`.
"""

from __future__ import annotations

import argparse
import dataclasses

from .config import Settings, load_settings
from .em_fit import EmConfig, fit
from .errors import ValidationError
from .log import get_logger
from .matching import match_graphs
from .membership import harden, membership_accuracy, target_membership, true_membership
from .metrics import evaluate as evaluate_graphs
from .objects import bev_centers
from .pipeline import build_labels, descend_curves
from .scenegen import generate_scene
from .serialization import (
    SceneFile,
    bundle_doc,
    descent_doc,
    em_doc,
    logits_from_dict,
    match_doc,
    membership_doc,
    read_json,
    read_scene,
    report_doc,
    spec_from_dict,
    write_json,
    write_scene,
    write_trace_csv,
)

logger = get_logger(__name__)


def _settings(args: argparse.Namespace, scene: SceneFile | None = None) -> Settings:
    settings = load_settings(args.config)
    if scene is not None:
        settings = dataclasses.replace(settings, roi=scene.roi)
    return settings


def _logits(args: argparse.Namespace):
    return None if args.logits is None else logits_from_dict(read_json(args.logits))


def generate(args: argparse.Namespace) -> int:
    settings = _settings(args)
    spec = spec_from_dict(read_json(args.spec), seed=args.seed)
    scene = generate_scene(spec, settings.roi)
    write_scene(args.out, scene)
    logger.info("wrote %d lanes and %d objects to %s", len(scene.gt_graph), len(scene.objects), args.out)
    return 0


def assign(args: argparse.Namespace) -> int:
    scene = read_scene(args.scene)
    write_json(args.out, membership_doc(true_membership(scene.graph, scene.objects)))
    return 0


def labels(args: argparse.Namespace) -> int:
    scene = read_scene(args.scene)
    pred = read_scene(args.pred)
    bundle = build_labels(
        pred.graph, scene.graph, scene.objects, _logits(args), args.alpha, settings=_settings(args, scene)
    )
    write_json(args.out, bundle_doc(bundle))
    return 0


def descend(args: argparse.Namespace) -> int:
    scene = read_scene(args.scene)
    pred = read_scene(args.pred)
    result = descend_curves(
        pred.graph,
        scene.graph,
        scene.objects,
        _logits(args),
        args.alpha,
        lr=args.lr,
        steps=args.steps,
        settings=_settings(args, scene),
    )
    write_json(args.out, descent_doc(result, scene.roi))
    return 0


def em_fit(args: argparse.Namespace) -> int:
    scene = read_scene(args.scene)
    settings = _settings(args, scene)
    config = EmConfig.from_settings(
        settings.em, args.k, args.seed, sigma=args.sigma, max_iters=args.max_iters
    )
    state = fit(bev_centers(scene.objects), config)
    if not state.converged:
        logger.warning("EM stopped after %d iterations without converging", state.iterations)
    write_json(args.out, em_doc(state, scene.roi, scene.objects))
    if args.trace:
        write_trace_csv(args.trace, state)
    return 0


def evaluate(args: argparse.Namespace) -> int:
    pred = read_scene(args.pred)
    gt = read_scene(args.gt)
    settings = _settings(args, gt)
    report = evaluate_graphs(
        pred.graph,
        gt.graph,
        gt.objects,
        settings.roi,
        settings.metrics.thresholds,
        settings.metrics.detect_threshold,
        settings.metrics.samples,
        settings.matching.existence_weight,
    )
    if pred.membership is not None and gt.objects:
        if pred.membership.n_objects != len(gt.objects):
            raise ValidationError(
                f"prediction has memberships for {pred.membership.n_objects} objects, "
                f"the scene has {len(gt.objects)}"
            )
        match = match_graphs(pred.graph, gt.graph, settings.roi, settings.matching.existence_weight)
        target = target_membership(true_membership(gt.graph, gt.objects), match, len(pred.graph))
        accuracy = membership_accuracy(harden(pred.membership), target)
        report = dataclasses.replace(report, membership_accuracy=accuracy)
    write_json(args.out, report_doc(report))
    return 0


def match(args: argparse.Namespace) -> int:
    pred = read_scene(args.pred)
    gt = read_scene(args.gt)
    settings = _settings(args, gt)
    result = match_graphs(
        pred.graph, gt.graph, settings.roi, settings.matching.existence_weight, settings.matching.pad_sentinel
    )
    write_json(args.out, match_doc(result))
    return 0

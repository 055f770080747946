# SPDX-License-Identifier: MIT
# Copyright (c) 2025 PoseFlow Contributors

"""Business logic functions for the poseflow commands.

Each ``logic_*`` function implements one command and returns a
JSON-serializable TypedDict. Handled failures never propagate: they come
back as ``{"status": "error", "error_type": ..., "message": ...}``.
"""

import json
import logging
import math
import platform
import time
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from poseflow._version import __version__
from poseflow.checkpoint import atomic_write_bytes, canonical_json, save_arrays, save_checkpoint
from poseflow.config import APOSE_ANGLES_DEG
from poseflow.errors import ConfigError
from poseflow.flowdit import PoseFlowModel, load_flow, save_flow, train_flow
from poseflow.guidance import (
    GuidanceWeights,
    ShapeExtraction,
    encode_for_sampling,
    extract_shape,
    parse_guidance,
    sample_latents,
)
from poseflow.layers import ParameterStore, count_parameters
from poseflow.metrics import MetricReport, aggregate, chamfer, evaluate_point_sets, resample_polylines
from poseflow.nncore import RngState
from poseflow.plotting import render_loss_curve, render_overlay, render_panels, save_svg
from poseflow.runlog import MetricsLog, read_metrics, resident_memory_mb
from poseflow.settings import (
    EvalConfig,
    ExperimentConfig,
    SamplerConfig,
    load_config,
    require_trainable,
)
from poseflow.shapevae import LatentNormalization, ShapeVAE, load_vae, train_vae
from poseflow.synthdata import (
    Pose,
    Skeleton,
    SkeletonTopology,
    TrainingPair,
    build_dataset,
    identity_for,
    load_dataset,
    pose_skeleton,
    project_to_surface,
)
from poseflow.types import (
    _AblationResult,
    _Aggregate,
    _AngleRow,
    _AposeSweepResult,
    _EvalResult,
    _GenDataResult,
    _InfoResult,
    _PairReport,
    _PlotResult,
    _SampleEntry,
    _SampleResult,
    _TrainResult,
)

logger = logging.getLogger(__name__)

SAMPLES_INDEX = "samples.json"
METRICS_FILE = "metrics.jsonl"

_ABLATION_GUIDANCE = ("preset:eq7", "preset:A", "preset:B")
_PANEL_ROWS = 4


def _error_result(exc: BaseException) -> dict[str, Any]:
    logger.debug("command failed", exc_info=True)
    result: dict[str, Any] = {
        "status": "error",
        "error_type": type(exc).__name__,
        "message": str(exc),
    }
    if isinstance(exc, ConfigError):
        result["paths"] = exc.paths
    return result


def _finite(value: float) -> float | None:
    return None if value is None or not math.isfinite(value) else float(value)


def _mean(values: Sequence[float]) -> float | None:
    return float(np.mean(values)) if len(values) else None


def _write_json(path: Path, document: Any) -> None:
    atomic_write_bytes(path, canonical_json(document))


# -- gen-data -------------------------------------------------------------------


def logic_gen_data(
    config_path: str | None,
    out: str,
    seed: int | None = None,
    workers: int | None = None,
) -> _GenDataResult:
    """Generate the synthetic pair dataset described by the config.

    Args:
        config_path: JSON config file, or ``None`` for the desk defaults.
        out: Directory that receives ``manifest.json`` and ``records.bin``.
        seed: Overrides the config seed; the manifest records the seed used.
        workers: Overrides ``data.workers``. Results do not depend on it.

    Returns:
        Record and split counts with the records digest, or an error result.
    """
    try:
        config = load_config(config_path)
        require_trainable(config)
        started = time.perf_counter()
        manifest = build_dataset(config.data, config.seed if seed is None else seed, out, workers)
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    counts = manifest["counts"]
    return {
        "status": "ok",
        "out": str(out),
        "records": counts["records"],
        "train": counts["train"],
        "test": counts["test"],
        "apose_pairs": counts["apose_pairs"],
        "duplicates_dropped": counts["duplicates_dropped"],
        "sharp_fallbacks": counts["sharp_fallbacks"],
        "sha256": manifest["sha256"],
        "time_seconds": round(time.perf_counter() - started, 3),
    }


# -- training ---------------------------------------------------------------------


def _loss_window(losses: Sequence[float], head: bool, width: int = 10) -> float | None:
    window = losses[:width] if head else losses[-width:]
    return _mean(window)


def logic_train_vae(config_path: str | None, data: str, out: str) -> _TrainResult:
    """Train the shape autoencoder on the training split and checkpoint it."""
    try:
        config = load_config(config_path)
        require_trainable(config)
        started = time.perf_counter()
        dataset = load_dataset(data)
        out_dir = Path(out)
        with MetricsLog(out_dir / METRICS_FILE) as log:
            result = train_vae(
                dataset.split("train"), dataset.split("test"), config.vae,
                RngState(config.seed, ("vae",)), log,
            )
        metrics = {k: _finite(v) for k, v in result.metrics.items()}
        save_checkpoint(
            out_dir, result.store, step=config.vae.steps,
            extra={
                "kind": "vae",
                "vae": config.vae.model_dump(mode="json"),
                "dim": result.model.dim,
                "num_points": result.model.num_points,
                "normalization": result.normalization.to_dict(),
                "metrics": metrics,
            },
        )
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    return {
        "status": "ok",
        "kind": "vae",
        "out": str(out),
        "steps": config.vae.steps,
        "parameters": count_parameters(result.store),
        "loss_start": _loss_window(result.losses, head=True),
        "loss_end": _loss_window(result.losses, head=False),
        "sign_accuracy": metrics.get("sign_accuracy"),
        "surface_recall": metrics.get("surface_recall"),
        "time_seconds": round(time.perf_counter() - started, 3),
    }


def _train_flow_into(
    config: ExperimentConfig,
    pairs: Sequence[TrainingPair],
    vae: ShapeVAE,
    normalization: LatentNormalization,
    out_dir: Path,
) -> tuple[PoseFlowModel, list[float]]:
    with MetricsLog(out_dir / METRICS_FILE) as log:
        result = train_flow(pairs, vae, normalization, config, RngState(config.seed, ("flow",)), log)
    save_flow(str(out_dir), result.model, normalization, config, step=config.train.steps)
    return result.model, result.losses


def logic_train_flow(config_path: str | None, data: str, vae_dir: str, out: str) -> _TrainResult:
    """Train condition encoders and DiT against the frozen autoencoder."""
    try:
        config = load_config(config_path)
        require_trainable(config)
        started = time.perf_counter()
        dataset = load_dataset(data)
        vae, normalization, _ = load_vae(vae_dir)
        model, losses = _train_flow_into(
            config, dataset.split("train"), vae, normalization, Path(out)
        )
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    return {
        "status": "ok",
        "kind": "flow",
        "out": str(out),
        "steps": config.train.steps,
        "parameters": model.parameter_count(),
        "loss_start": _loss_window(losses, head=True),
        "loss_end": _loss_window(losses, head=False),
        "time_seconds": round(time.perf_counter() - started, 3),
    }


# -- sampling ---------------------------------------------------------------------


@dataclass
class SampleInput:
    """Condition raster and target skeleton of one generation request."""

    index: int
    name: str
    raster: np.ndarray
    P_s: np.ndarray
    P_e: np.ndarray
    joints: np.ndarray

    @classmethod
    def from_pair(cls, pair: TrainingPair) -> "SampleInput":
        s = pair.target_skeleton
        return cls(pair.index, f"pair_{pair.index:05d}", pair.condition_raster, s.P_s, s.P_e, s.joints)


def parse_input(spec: str) -> list[SampleInput]:
    """``pair:<dataset>:<index|test|all>`` or ``files:<raster.npy>:<skeleton.json>``."""
    kind, _, rest = spec.partition(":")
    if kind == "pair":
        directory, _, which = rest.rpartition(":")
        if not directory:
            raise ValueError(f"invalid input {spec!r}: expected pair:<dir>:<index|test|all>")
        dataset = load_dataset(directory)
        if which == "test":
            pairs = dataset.split("test")
        elif which == "all":
            pairs = dataset.pairs
        else:
            index = int(which)
            if not 0 <= index < len(dataset):
                raise IndexError(f"pair index {index} outside 0..{len(dataset) - 1}")
            pairs = [dataset[index]]
        return [SampleInput.from_pair(p) for p in pairs]
    if kind == "files":
        raster_path, _, skeleton_path = rest.partition(":")
        raster = np.load(raster_path, allow_pickle=False)
        document = json.loads(Path(skeleton_path).read_text(encoding="utf-8"))
        P_s = np.asarray(document["P_s"], dtype=np.float32)
        P_e = np.asarray(document["P_e"], dtype=np.float32)
        joints = np.asarray(document.get("joints", np.zeros((0, P_s.shape[-1]))), dtype=np.float32)
        return [SampleInput(0, "input", np.asarray(raster), P_s, P_e, joints)]
    raise ValueError(f"invalid input {spec!r}: expected pair:... or files:...")


def generate(
    model: PoseFlowModel,
    vae: ShapeVAE,
    normalization: LatentNormalization,
    item: SampleInput,
    weights: GuidanceWeights,
    sampler: SamplerConfig,
    seed: int,
    grid_res: int,
) -> tuple[np.ndarray, ShapeExtraction]:
    """Sample one latent set and extract its contour.

    The noise stream depends on ``(seed, item.index)`` only, so every
    guidance setting starts from the same noise for the same input.
    """
    conditions = encode_for_sampling(
        model,
        np.asarray(item.raster, dtype=np.float32)[None],
        item.P_s[None], item.P_e[None], item.joints[None],
    )
    rng = RngState(seed, ("sample", item.index))
    latents = sample_latents(model, conditions, weights, sampler, rng, normalization)[0]
    return latents, extract_shape(vae, latents, grid_res)


def _write_sample(
    directory: Path,
    item: SampleInput,
    latents: np.ndarray,
    shape: ShapeExtraction,
    weights: GuidanceWeights,
    sampler: SamplerConfig,
    seed: int,
) -> None:
    save_arrays(
        directory / "latents", {"latents": latents}, seed=seed, step=sampler.steps,
        extra={"kind": "latents", "guidance": weights.label(), "index": item.index},
    )
    atomic_write_bytes(directory / "sdf_grid.bin", np.ascontiguousarray(shape.sdf, dtype="<f4").tobytes())
    _write_json(directory / "sdf_grid.json", {
        "dtype": "<f4",
        "shape": list(shape.sdf.shape),
        "order": "row-major, row index along y ascending",
        "extent": [-1.0, 1.0],
    })
    _write_json(directory / "contours.json", {
        "polylines": [p.tolist() for p in shape.polylines],
    })
    _write_json(directory / "sample.json", {
        "index": item.index,
        "name": item.name,
        "guidance": weights.label(),
        "steps": sampler.steps,
        "scheme": sampler.scheme,
        "seed": seed,
        "collapsed": shape.collapsed,
        "skeleton": {"P_s": item.P_s.tolist(), "P_e": item.P_e.tolist()},
    })
    save_svg(render_overlay(item.P_s, item.P_e, shape.polylines, item.name), directory / "overlay.svg")


def logic_sample(
    ckpt: str,
    vae_dir: str,
    input_spec: str,
    out: str,
    guidance: str | None = None,
    steps: int | None = None,
    seed: int | None = None,
    scheme: str | None = None,
    grid_res: int | None = None,
) -> _SampleResult:
    """Generate shapes for every requested input and write their artifacts.

    Args:
        ckpt: Flow checkpoint directory.
        vae_dir: Autoencoder checkpoint directory.
        input_spec: ``pair:<data>:<index|test|all>`` or
            ``files:<raster.npy>:<skeleton.json>``.
        out: Directory that receives one sub-directory per input plus
            the ``samples.json`` index.
        guidance: Guidance string for :func:`parse_guidance`; defaults to
            the checkpoint config.
        steps: Integration steps, overriding the config.
        seed: Root seed for the initial noise, overriding the config.
        scheme: ``"euler"`` or ``"heun"``, overriding the config.
        grid_res: SDF lattice resolution, overriding the config.

    Returns:
        The guidance label, sampler settings, one entry per sample and the
        wall time, or an error result.
    """
    try:
        model, normalization, config = load_flow(ckpt)
        vae, _, _ = load_vae(vae_dir)
        weights = parse_guidance(guidance) if guidance else GuidanceWeights.from_config(config.guidance)
        sampler = SamplerConfig(
            steps=steps if steps is not None else config.sampler.steps,
            scheme=scheme if scheme is not None else config.sampler.scheme,  # type: ignore[arg-type]
        )
        root_seed = config.seed if seed is None else seed
        res = grid_res if grid_res is not None else config.eval.grid_res
        items = parse_input(input_spec)
        out_dir = Path(out)
        entries: list[_SampleEntry] = []
        started = time.perf_counter()
        for item in items:
            latents, shape = generate(model, vae, normalization, item, weights, sampler, root_seed, res)
            _write_sample(out_dir / item.name, item, latents, shape, weights, sampler, root_seed)
            entries.append({
                "index": item.index,
                "directory": item.name,
                "polylines": len(shape.polylines),
                "collapsed": shape.collapsed,
            })
        wall = time.perf_counter() - started
        _write_json(out_dir / SAMPLES_INDEX, {
            "guidance": weights.label(),
            "steps": sampler.steps,
            "scheme": sampler.scheme,
            "seed": root_seed,
            "samples": entries,
            "wall_time_seconds": round(wall, 3),
        })
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    logger.info("generated %d shapes in %.2f s", len(entries), wall)
    return {
        "status": "ok",
        "out": str(out),
        "guidance": weights.label(),
        "steps": sampler.steps,
        "scheme": sampler.scheme,
        "samples": entries,
        "wall_time_seconds": round(wall, 3),
    }


# -- evaluation -------------------------------------------------------------------


def evaluate_generated(
    pair: TrainingPair,
    polylines: Sequence[np.ndarray],
    eval_cfg: EvalConfig,
    seed: int,
) -> _PairReport:
    """Metrics against the target surface plus CD to the condition pose."""
    generated = resample_polylines(polylines, eval_cfg.n_points)
    report = evaluate_point_sets(pair.target_shape.surface_points, generated, eval_cfg.tau)
    row: dict[str, Any] = {"index": pair.index, **report.to_dict()}
    if report.collapsed:
        row["cd_condition_pose"] = None
        row["follows_skeleton"] = None
    else:
        condition_surface = project_to_surface(
            pair.condition_skeleton, eval_cfg.n_points, RngState(seed, ("eval", "condition", pair.index))
        )
        cd_condition = chamfer(generated, condition_surface)
        row["cd_condition_pose"] = cd_condition
        row["follows_skeleton"] = bool(report.cd < cd_condition)
    return row  # type: ignore[return-value]


def _follow_rate(rows: Sequence[_PairReport]) -> float | None:
    flags = [r["follows_skeleton"] for r in rows if r.get("follows_skeleton") is not None]
    return _mean([float(f) for f in flags])


def _reports(rows: Sequence[_PairReport]) -> list[MetricReport]:
    return [
        MetricReport(
            cd=float("nan") if r["cd"] is None else r["cd"],
            fd=float("nan") if r["fd"] is None else r["fd"],
            f1=r["f1"], precision=r["precision"], recall=r["recall"], tau=r["tau"],
            n_gt=r["n_gt"], n_gen=r["n_gen"], collapsed=r["collapsed"],
        )
        for r in rows
    ]


def _summary(rows: Sequence[_PairReport]) -> _Aggregate:
    summary = aggregate(_reports(rows))
    summary["mean"]["follows_skeleton"] = _follow_rate(rows)
    return summary  # type: ignore[return-value]


def _load_polylines(directory: Path) -> list[np.ndarray]:
    document = json.loads((directory / "contours.json").read_text(encoding="utf-8"))
    return [np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in document["polylines"]]


def logic_eval(
    gt: str,
    gen: str,
    out: str,
    tau: float | None = None,
    n_points: int | None = None,
) -> _EvalResult:
    """Compare sampled contours with the ground-truth target surfaces.

    Args:
        gt: Dataset directory holding the target surfaces.
        gen: Output directory of :func:`logic_sample`.
        out: Path of the JSON report.
        tau: F1 threshold, overriding ``eval.tau``.
        n_points: Points resampled from each generated contour.

    Returns:
        Per-pair rows and their aggregate, or an error result.
    """
    try:
        dataset = load_dataset(gt)
        overrides: dict[str, Any] = {}
        if tau is not None:
            overrides["tau"] = tau
        if n_points is not None:
            overrides["n_points"] = n_points
        eval_cfg = EvalConfig(**overrides)
        gen_dir = Path(gen)
        index = json.loads((gen_dir / SAMPLES_INDEX).read_text(encoding="utf-8"))
        rows = [
            evaluate_generated(
                dataset[entry["index"]], _load_polylines(gen_dir / entry["directory"]),
                eval_cfg, dataset.seed,
            )
            for entry in index["samples"]
        ]
        summary = _summary(rows)
        follow = _follow_rate(rows)
        _write_json(Path(out), {
            "tau": eval_cfg.tau,
            "n_points": eval_cfg.n_points,
            "guidance": index.get("guidance"),
            "pairs": rows,
            "aggregate": summary,
            "follows_skeleton_rate": follow,
        })
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    return {
        "status": "ok",
        "out": str(out),
        "tau": eval_cfg.tau,
        "pairs": rows,
        "aggregate": summary,
        "follows_skeleton_rate": follow,
    }


# -- ablations --------------------------------------------------------------------


def _evaluation_pairs(pairs: Sequence[TrainingPair], n_eval: int) -> list[TrainingPair]:
    chosen = list(pairs[:n_eval])
    if not chosen:
        raise ValueError("the dataset has no held-out pairs to evaluate")
    return chosen


def _run_variant(
    model: PoseFlowModel,
    vae: ShapeVAE,
    normalization: LatentNormalization,
    pairs: Sequence[TrainingPair],
    weights: GuidanceWeights,
    config: ExperimentConfig,
    data_seed: int,
) -> tuple[list[_PairReport], list[ShapeExtraction]]:
    rows, shapes = [], []
    for pair in pairs:
        item = SampleInput.from_pair(pair)
        _, shape = generate(
            model, vae, normalization, item, weights, config.sampler, config.seed, config.eval.grid_res
        )
        rows.append(evaluate_generated(pair, shape.polylines, config.eval, data_seed))
        shapes.append(shape)
    return rows, shapes


def logic_ablate_cfg(
    ckpt: str, vae_dir: str, data: str, out: str, n_eval: int | None = None
) -> _AblationResult:
    """Frozen-pose guidance against both independent-weight presets."""
    try:
        model, normalization, config = load_flow(ckpt)
        vae, _, _ = load_vae(vae_dir)
        dataset = load_dataset(data)
        pairs = _evaluation_pairs(dataset.split("test"), n_eval or config.eval.n_eval)
        out_dir = Path(out)
        variants: dict[str, _Aggregate] = {}
        per_pair: dict[str, list[_PairReport]] = {}
        panels: list[list[dict[str, Any]]] = [[] for _ in pairs[:_PANEL_ROWS]]
        for spec in _ABLATION_GUIDANCE:
            weights = parse_guidance(spec)
            rows, shapes = _run_variant(model, vae, normalization, pairs, weights, config, dataset.seed)
            variants[spec] = _summary(rows)
            per_pair[spec] = rows
            for panel, pair, shape in zip(panels, pairs, shapes):
                panel.append({
                    "P_s": pair.target_skeleton.P_s,
                    "P_e": pair.target_skeleton.P_e,
                    "polylines": shape.polylines,
                    "title": spec,
                })
        figure = save_svg(
            render_panels(panels, [f"pair {p.index}" for p in pairs[:_PANEL_ROWS]]),
            out_dir / "cfg_panels.svg",
        )
        _write_json(out_dir / "report.json", {"variants": variants, "pairs": per_pair})
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    return {"status": "ok", "out": str(out), "variants": variants, "figure": str(figure)}


def logic_ablate_pose_repr(
    config_path: str | None, data: str, vae_dir: str, out: str, n_eval: int | None = None
) -> _AblationResult:
    """Train and evaluate bone tokens against joint tokens on identical data and seeds."""
    try:
        base = load_config(config_path)
        require_trainable(base)
        dataset = load_dataset(data)
        vae, normalization, _ = load_vae(vae_dir)
        pairs = _evaluation_pairs(dataset.split("test"), n_eval or base.eval.n_eval)
        weights = GuidanceWeights.from_config(base.guidance)
        out_dir = Path(out)
        variants: dict[str, _Aggregate] = {}
        per_pair: dict[str, list[_PairReport]] = {}
        for repr_name in ("bones", "joints"):
            config = base.model_copy(
                update={"cond": base.cond.model_copy(update={"pose_repr": repr_name})}
            )
            logger.info("training flow with %s pose tokens", repr_name)
            model, _ = _train_flow_into(
                config, dataset.split("train"), vae, normalization, out_dir / repr_name
            )
            rows, _ = _run_variant(model, vae, normalization, pairs, weights, config, dataset.seed)
            variants[repr_name] = _summary(rows)
            per_pair[repr_name] = rows
        _write_json(out_dir / "report.json", {"variants": variants, "pairs": per_pair})
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    return {"status": "ok", "out": str(out), "variants": variants, "figure": None}


# -- A-pose sweep -----------------------------------------------------------------


def _apose_target(
    topology: SkeletonTopology, seed: int, char_id: int, angle: float, margin: float
) -> Skeleton:
    return pose_skeleton(topology, identity_for(seed, char_id, topology), Pose.apose(topology, angle), margin)


def logic_apose_sweep(
    ckpt: str,
    vae_dir: str,
    data: str,
    out: str,
    angles: Sequence[float] = APOSE_ANGLES_DEG,
    n_identities: int | None = None,
) -> _AposeSweepResult:
    """Generate held-out identities in the A-pose at each requested arm angle."""
    try:
        model, normalization, config = load_flow(ckpt)
        vae, _, _ = load_vae(vae_dir)
        dataset = load_dataset(data)
        data_cfg = dataset.config
        topology = SkeletonTopology.desk()
        conditions: dict[int, TrainingPair] = {}
        for pair in dataset.split("test"):
            conditions.setdefault(pair.char_id, pair)
        identities = sorted(conditions)[:n_identities] if n_identities else sorted(conditions)
        if not identities:
            raise ValueError("the dataset has no held-out identities")
        weights = GuidanceWeights.from_config(config.guidance)
        n_points = config.eval.n_points
        surfaces: dict[tuple[int, float], np.ndarray] = {}
        targets: dict[tuple[int, float], Skeleton] = {}
        for c in identities:
            for angle in angles:
                target = _apose_target(topology, dataset.seed, c, angle, data_cfg.margin)
                targets[(c, angle)] = target
                surfaces[(c, angle)] = project_to_surface(
                    target, n_points, RngState(dataset.seed, ("eval", "apose", c, str(angle)))
                )

        rows: list[_AngleRow] = []
        records = []
        for a_i, angle in enumerate(angles):
            cds, fds, f1s, others, nearest = [], [], [], [], []
            collapsed = 0
            for c in identities:
                target = targets[(c, angle)]
                item = SampleInput(
                    1_000_000 + c * len(angles) + a_i, f"char_{c:03d}_{angle:g}",
                    conditions[c].condition_raster, target.P_s, target.P_e, target.joints,
                )
                _, shape = generate(
                    model, vae, normalization, item, weights, config.sampler,
                    config.seed, config.eval.grid_res,
                )
                generated = resample_polylines(shape.polylines, n_points)
                report = evaluate_point_sets(surfaces[(c, angle)], generated, config.eval.tau)
                record = {"char_id": c, "angle": angle, **report.to_dict()}
                if report.collapsed:
                    collapsed += 1
                    records.append(record)
                    continue
                per_angle = {a: chamfer(generated, surfaces[(c, a)]) for a in angles}
                other = [per_angle[a] for a in angles if a != angle]
                cds.append(report.cd)
                fds.append(report.fd)
                f1s.append(report.f1)
                if other:
                    others.append(float(np.mean(other)))
                nearest.append(float(min(per_angle, key=lambda a: (per_angle[a], a)) == angle))
                record["cd_by_angle"] = {f"{a:g}": v for a, v in per_angle.items()}
                records.append(record)
            rows.append({
                "angle": float(angle),
                "cd": _mean(cds),
                "fd": _mean(fds),
                "f1": _mean(f1s),
                "cd_other_angles": _mean(others),
                "nearest_angle_rate": _mean(nearest),
                "collapsed": collapsed,
            })
        _write_json(Path(out) / "apose_sweep.json", {"angles": rows, "records": records})
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    return {"status": "ok", "out": str(out), "identities": identities, "angles": rows}


# -- plot -------------------------------------------------------------------------


_LOSS_EVENTS = ("vae_step", "flow_step")


def logic_plot(
    out: str, sample: str | None = None, metrics: Sequence[str] = ()
) -> _PlotResult:
    """Render sample overlays and/or loss curves as SVG."""
    try:
        if sample is None and not metrics:
            raise ValueError("nothing to plot: pass a sample directory or a metrics file")
        out_dir = Path(out)
        files: list[str] = []
        if sample is not None:
            sample_dir = Path(sample)
            index = json.loads((sample_dir / SAMPLES_INDEX).read_text(encoding="utf-8"))
            for entry in index["samples"]:
                entry_dir = sample_dir / entry["directory"]
                info = json.loads((entry_dir / "sample.json").read_text(encoding="utf-8"))
                skeleton = info["skeleton"]
                fig = render_overlay(
                    np.asarray(skeleton["P_s"]), np.asarray(skeleton["P_e"]),
                    _load_polylines(entry_dir), entry["directory"],
                )
                files.append(str(save_svg(fig, out_dir / f"{entry['directory']}.svg")))
        for path in metrics:
            series: dict[str, list[tuple[int, float]]] = {}
            for row in read_metrics(path):
                if row.get("event") in _LOSS_EVENTS:
                    series.setdefault(row["event"], []).append((int(row["step"]), float(row["loss"])))
            name = Path(path).parent.name or "metrics"
            files.append(str(save_svg(render_loss_curve(series), out_dir / f"loss_{name}.svg")))
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    return {"status": "ok", "files": files}


# -- info -------------------------------------------------------------------------


def parameter_counts(config: ExperimentConfig) -> dict[str, int]:
    """Parameter counts of the configured models, without allocating them."""
    store = ParameterStore(allocate=False)
    ShapeVAE(config.vae, store, config.data.dim, config.data.n_surface + config.data.n_sharp)
    PoseFlowModel.from_config(
        config, store, latent_dim=config.vae.latent_dim, num_latents=config.vae.num_latents
    )
    return {
        "vae": count_parameters(store, "vae."),
        "cond": count_parameters(store, "cond."),
        "flow": count_parameters(store, "flow."),
        "total": count_parameters(store),
    }


def logic_info(config_path: str | None = None) -> _InfoResult:
    """Package versions, platform, memory and model sizes."""
    try:
        config = load_config(config_path)
        counts = parameter_counts(config)
    except Exception as e:
        return _error_result(e)  # type: ignore[return-value]
    return {
        "status": "ok",
        "version": __version__,
        "python_version": platform.python_version(),
        "numpy_version": np.__version__,
        "platform": platform.platform(),
        "memory_usage_mb": round(resident_memory_mb(), 1),
        "preset": config.preset,
        "parameters": counts,
    }


__all__ = [
    "SampleInput",
    "evaluate_generated",
    "generate",
    "logic_ablate_cfg",
    "logic_ablate_pose_repr",
    "logic_apose_sweep",
    "logic_eval",
    "logic_gen_data",
    "logic_info",
    "logic_plot",
    "logic_sample",
    "logic_train_flow",
    "logic_train_vae",
    "parameter_counts",
    "parse_input",
]

"""End-to-end orchestration: training, per-image detection and dataset evaluation.

Every run is described by a :class:`PipelineConfig`.  Per-image work is a pure
function of (config, model, image), so fanning images out over worker
processes cannot change any output.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .affinity import (WARP_MODES, AffinityModel, PairScorer, TrainingSet, assemble_training_pairs,
                       fit_affinity_model, pair_features, region_warp, union_region, weight_graph)
from .data import Scene, load_dataset
from .errors import InputError, ParameterError
from .evaluation import PRCurve, ScoredDetection, pr_curve, score_image
from .grouping import PartDetection, SequenceParams, cluster_detections, extract_parts
from .segmentation import DEFAULT_LADDER, Disc, Raster, build_graph, multiscale_discs
from .warp import unwarp_points

log = logging.getLogger(__name__)

GROUPING_MODES = ("clustering", "sequences")

PRESETS: dict[str, dict] = {
    "ellipse+clustering": {"warp_mode": "standard", "grouping": "clustering"},
    "ellipse+sequences": {"warp_mode": "standard", "grouping": "sequences", "mu": 0.5},
    "deform+sequences": {"warp_mode": "deformable", "grouping": "sequences", "mu": 0.5},
    "deform+unsmooth": {"warp_mode": "deformable", "grouping": "sequences", "mu": 0.0},
}


@dataclass(frozen=True)
class PipelineConfig:
    ladder: tuple[int, ...] = DEFAULT_LADDER
    warp_mode: str = "deformable"
    grouping: str = "sequences"
    mu: float = 0.5
    lam: float = 0.3
    cost_max: float = 0.0
    k_param: float = 1.0
    seed: int = 0
    model: str | None = None
    top_n: int | None = None
    # search budget: edges below the floor are dropped before the sequence search,
    # and each directed edge keeps at most max_labels partial sequences
    edge_floor: float = 0.3
    max_labels: int | None = 4
    workers: int | None = None

    def __post_init__(self):
        ladder = tuple(int(k) for k in self.ladder)
        object.__setattr__(self, "ladder", ladder)
        if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[0] < 2:
            raise ParameterError(f"ladder must be nonempty, ascending and >= 2, got {list(ladder)}")
        if self.warp_mode not in WARP_MODES:
            raise ParameterError(f"warp_mode must be one of {WARP_MODES}, got {self.warp_mode!r}")
        if self.grouping not in GROUPING_MODES:
            raise ParameterError(f"grouping must be one of {GROUPING_MODES}, got {self.grouping!r}")
        if not 0.0 <= self.mu <= 10.0:
            raise ParameterError("mu must lie in [0, 10]")
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError("lam must lie in [0, 1]")
        if self.cost_max != self.cost_max or self.cost_max == float("inf"):
            raise ParameterError("cost_max must be a finite number or -inf")
        if not self.k_param > 0:
            raise ParameterError("k_param must be positive")
        if not 0.0 <= self.edge_floor < 1.0:
            raise ParameterError("edge_floor must lie in [0, 1)")
        if self.top_n is not None and self.top_n < 0:
            raise ParameterError("top_n must be >= 0")
        if self.max_labels is not None and self.max_labels < 1:
            raise ParameterError("max_labels must be >= 1")
        if self.workers is not None and self.workers < 1:
            raise ParameterError("workers must be >= 1")

    @property
    def sequence_params(self) -> SequenceParams:
        return SequenceParams(lam=self.lam, mu=self.mu, max_labels=self.max_labels)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ladder"] = list(self.ladder)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ParameterError(str(exc)) from exc

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "PipelineConfig":
        if name not in PRESETS:
            raise ParameterError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})


def load_config(path: str | Path) -> dict:
    """Raw key/value pairs from a JSON config file or a previous run.json."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"{path}: cannot read config ({exc.strerror or exc})") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: config is not valid JSON ({exc})") from exc
    if isinstance(doc, dict) and isinstance(doc.get("config"), dict):
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return doc


def resolve_config(file_values: dict | None = None, preset: str | None = None,
                   overrides: dict | None = None) -> PipelineConfig:
    """Defaults, then the config file, then the preset, then explicit flags."""
    values: dict = {}
    values.update(file_values or {})
    if preset is not None:
        if preset not in PRESETS:
            raise ParameterError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        values.update(PRESETS[preset])
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return PipelineConfig.from_dict(values)


def write_json(path: str | Path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_run_record(out: str | Path, command: str, config: PipelineConfig, inputs: dict) -> None:
    write_json(Path(out) / "run.json", {"command": command, "config": config.to_dict(), "inputs": inputs})


def _map(fn: Callable, items: Sequence, workers: int | None) -> list:
    """Order-preserving map, in-process for one worker."""
    n = workers or os.cpu_count() or 1
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# training


def _image_training_set(args) -> TrainingSet:
    scene, ladder, mode = args
    discs = multiscale_discs(scene.raster, ladder)
    graph = build_graph(discs)
    shape_pairs, app_pairs = assemble_training_pairs(graph, [p.mask for p in scene.parts], scene.figure,
                                                     scene.image_id)
    return pair_features(graph, shape_pairs, app_pairs, mode)


def train_model(scenes: Sequence[Scene], config: PipelineConfig) -> tuple[AffinityModel, dict]:
    if not scenes:
        raise InputError("training corpus is empty")
    ts = TrainingSet()
    for part in _map(_image_training_set, [(s, config.ladder, config.warp_mode) for s in scenes], config.workers):
        ts.extend(part)
    model, diag = fit_affinity_model(ts, mode=config.warp_mode, seed=config.seed)
    diag["images"] = len(scenes)
    return model, diag


# ---------------------------------------------------------------------------
# detection


def detect(raster: Raster, model: AffinityModel, config: PipelineConfig) -> list[PartDetection]:
    """Segment, weight the disc graph, and group it under the configured ablation."""
    if model.warp_mode != config.warp_mode:
        raise InputError(f"model was trained with {model.warp_mode!r} warps, config asks for {config.warp_mode!r}")
    discs = multiscale_discs(raster, config.ladder)
    scorer = PairScorer({d.id: d for d in discs}, model, config.warp_mode)
    graph = weight_graph(build_graph(discs), scorer)
    if config.top_n == 0:
        return []
    if config.grouping == "clustering":
        dets = [d for d in cluster_detections(graph, config.k_param, config.lam) if d.cost <= config.cost_max]
        return dets[:config.top_n] if config.top_n is not None else dets
    params = config.sequence_params
    triple = scorer.triple if params.mu != 0.0 else None
    return extract_parts(graph.without_edges_below(config.edge_floor), params, config.cost_max,
                         triple=triple, top_n=config.top_n)


def _detect_worker(args) -> list[PartDetection]:
    raster, model_json, config = args
    return detect(raster, AffinityModel.from_json(model_json), config)


def detect_many(rasters: Sequence[Raster], model: AffinityModel, config: PipelineConfig) -> list[list[PartDetection]]:
    text = model.to_json()
    return _map(_detect_worker, [(r, text, config) for r in rasters], config.workers)


def detections_json(dets: Iterable[PartDetection]) -> list[dict]:
    return [d.to_json(rank) for rank, d in enumerate(dets)]


_PALETTE = [(230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
            (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212)]


def save_detection_outputs(out: str | Path, raster: Raster, dets: Sequence[PartDetection]) -> None:
    """detections.json, one 8-bit mask per detection, and a composite overlay."""
    out = Path(out)
    mask_dir = out / "masks"
    mask_dir.mkdir(parents=True, exist_ok=True)
    write_json(out / "detections.json", detections_json(dets))
    base = np.round(raster.rgb * 255).astype(np.float64)
    for rank, d in enumerate(dets):
        Image.fromarray(d.mask.astype(np.uint8) * 255).save(mask_dir / f"det_{rank:03d}.png")
        col = np.array(_PALETTE[rank % len(_PALETTE)], dtype=np.float64)
        base[d.mask] = 0.5 * base[d.mask] + 0.5 * col
    overlay = Image.fromarray(np.clip(np.round(base), 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(overlay)
    for rank, d in enumerate(dets):
        if len(d.axis) >= 2:
            draw.line([tuple(p) for p in d.axis], fill=_PALETTE[rank % len(_PALETTE)], width=1)
    overlay.save(out / "overlay.png")


def dump_warp_edgels(path: str | Path, discs: Sequence[Disc], mode: str) -> None:
    """CSV of x,y,u,v,strength for the union boundary of ``discs`` in its fitted warp frame."""
    pixels, edgels = union_region(discs)
    w = region_warp(pixels, edgels, mode)
    uv = unwarp_points(edgels[:, :2], w) if w is not None and len(edgels) else np.full((len(edgels), 2), np.nan)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "y", "u", "v", "strength"])
        for (x, y, s), (u, v) in zip(edgels, uv):
            out.writerow([int(x), int(y), repr(float(u)), repr(float(v)), repr(float(s))])


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalResult:
    curve: PRCurve
    scored: tuple[ScoredDetection, ...]
    n_gts: int
    detections: tuple[tuple[PartDetection, ...], ...]

    @property
    def ap(self) -> float:
        return self.curve.ap

    @property
    def recall(self) -> float:
        return sum(s.hit for s in self.scored) / self.n_gts


def evaluate_detections(scenes: Sequence[Scene], per_image: Sequence[Sequence[tuple[float, np.ndarray]]]) -> tuple[PRCurve, list[ScoredDetection], int]:
    """Pool (cost, mask) detections over a dataset and sweep the cost threshold."""
    scored: list[ScoredDetection] = []
    n_gt = 0
    for scene, dets in zip(scenes, per_image, strict=True):
        gts = [p.mask for p in scene.parts]
        n_gt += len(gts)
        scored.extend(score_image([c for c, _ in dets], [m for _, m in dets], gts))
    return pr_curve(scored, n_gt), scored, n_gt


def evaluate(scenes: Sequence[Scene], model: AffinityModel, config: PipelineConfig) -> EvalResult:
    if not scenes:
        raise InputError("evaluation dataset is empty")
    dets = detect_many([s.raster for s in scenes], model, config)
    curve, scored, n_gt = evaluate_detections(scenes, [[(d.cost, d.mask) for d in ds] for ds in dets])
    return EvalResult(curve, tuple(scored), n_gt, tuple(tuple(ds) for ds in dets))


def eval_summary(result: EvalResult, config: PipelineConfig) -> dict:
    return {"ap": result.ap, "n_dets": len(result.scored), "n_gts": result.n_gts,
            "recall": result.recall, "settings": config.to_dict()}

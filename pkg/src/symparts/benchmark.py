"""Synthetic ribbon benchmark: train per warp mode, evaluate the named ablations."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .affinity import AffinityModel
from .data import Scene, SceneSpec, synth_scene
from .pipeline import PRESETS, EvalResult, PipelineConfig, evaluate, train_model


@dataclass(frozen=True)
class BenchmarkConfig:
    n_train: int = 20
    train_seed: int = 1
    n_eval: int = 40
    eval_seed: int = 7
    spec: SceneSpec = field(default_factory=SceneSpec)
    workers: int | None = None


def scenes(seed: int, count: int, spec: SceneSpec = SceneSpec()) -> list[Scene]:
    """Same scene seeds and names as ``write_corpus`` uses on disk."""
    return [synth_scene(seed * 100003 + k, spec, image_id=f"scene_{k:04d}") for k in range(count)]


@dataclass(frozen=True)
class BenchmarkRun:
    preset: str
    config: PipelineConfig
    result: EvalResult
    train_seconds: float
    eval_seconds: float

    def summary(self) -> dict:
        return {"preset": self.preset, "ap": self.result.ap, "recall": self.result.recall,
                "n_dets": len(self.result.scored), "n_gts": self.result.n_gts,
                "train_seconds": round(self.train_seconds, 1), "eval_seconds": round(self.eval_seconds, 1)}


def run_benchmark(presets: list[str], bench: BenchmarkConfig = BenchmarkConfig(), log=print) -> dict[str, BenchmarkRun]:
    train = scenes(bench.train_seed, bench.n_train, bench.spec)
    test = scenes(bench.eval_seed, bench.n_eval, bench.spec)
    models: dict[str, tuple[AffinityModel, float]] = {}
    runs = {}
    for name in presets:
        config = PipelineConfig.from_preset(name, workers=bench.workers)
        if config.warp_mode not in models:
            t0 = time.perf_counter()
            model, _ = train_model(train, config)
            models[config.warp_mode] = (model, time.perf_counter() - t0)
        model, train_s = models[config.warp_mode]
        t0 = time.perf_counter()
        result = evaluate(test, model, config)
        runs[name] = BenchmarkRun(name, config, result, train_s, time.perf_counter() - t0)
        if log:
            log(runs[name].summary())
    return runs


ALL_PRESETS = list(PRESETS)

"""Command-line entry point: ``symparts {train,detect,eval,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .affinity import AffinityModel
from .data import SceneSpec, load_dataset, write_corpus
from .errors import InputError, SympartsError
from .evaluation import save_pr_plot
from .segmentation import load_raster

log = logging.getLogger("symparts")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config (or a previous run.json)")
    p.add_argument("--preset", choices=sorted(pipeline.PRESETS), help="named ablation setting")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default: CPU count)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mu", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--cost-max", type=float)
    p.add_argument("--k-param", type=float)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="symparts", description="Detect symmetric parts with deformable discs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an affinity model on a corpus")
    p.add_argument("corpus")
    p.add_argument("--model", help="model path to write (default OUT/model.json)")
    _common(p)

    p = sub.add_parser("detect", help="detect parts in one image")
    p.add_argument("image")
    p.add_argument("--model", help="trained model file")
    p.add_argument("--top-n", type=int)
    p.add_argument("--dump-warp", action="store_true", help="write warped edgels (x,y,u,v,strength) per detection")
    _common(p)

    p = sub.add_parser("eval", help="detect on a dataset and score against its part masks")
    p.add_argument("dataset")
    p.add_argument("--model", help="trained model file")
    p.add_argument("--top-n", type=int)
    _common(p)

    p = sub.add_parser("synth", help="write a synthetic ribbon corpus")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spec", help="JSON file of scene parameters")
    p.add_argument("--out", required=True)
    return ap


def _resolve(args) -> pipeline.PipelineConfig:
    file_values = pipeline.load_config(args.config) if args.config else {}
    overrides = {"seed": args.seed, "workers": args.workers, "mu": args.mu, "lam": args.lam,
                 "cost_max": args.cost_max, "k_param": args.k_param,
                 "model": getattr(args, "model", None), "top_n": getattr(args, "top_n", None)}
    return pipeline.resolve_config(file_values, args.preset, overrides)


def _load_model(config: pipeline.PipelineConfig) -> AffinityModel:
    if not config.model:
        raise InputError("no model given (use --model or set 'model' in the config)")
    return AffinityModel.load(config.model)


def cmd_train(args) -> None:
    config = _resolve(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model_path = Path(config.model) if config.model else out / "model.json"
    scenes = load_dataset(args.corpus)
    model, diag = pipeline.train_model(scenes, config)
    model.save(model_path)
    pipeline.write_run_record(out, "train", config, {"corpus": str(args.corpus), "model_out": str(model_path)})
    print(json.dumps(diag, sort_keys=True))


def cmd_detect(args) -> None:
    config = _resolve(args)
    model = _load_model(config)
    raster = load_raster(args.image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dets = pipeline.detect(raster, model, config)
    pipeline.save_detection_outputs(out, raster, dets)
    if args.dump_warp and dets:
        from .segmentation import multiscale_discs

        by_id = {d.id: d for d in multiscale_discs(raster, config.ladder)}
        for rank, det in enumerate(dets):
            pipeline.dump_warp_edgels(out / f"warp_{rank:03d}.csv", [by_id[i] for i in det.discs], config.warp_mode)
    pipeline.write_run_record(out, "detect", config, {"image": str(args.image)})
    print(f"{len(dets)} detections written to {out}")


def cmd_eval(args) -> None:
    config = _resolve(args)
    model = _load_model(config)  # fail before touching images
    scenes = load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = pipeline.evaluate(scenes, model, config)
    result.curve.write_csv(out / "pr.csv")
    save_pr_plot(result.curve, out / "pr.png", label=args.preset or "")
    pipeline.write_json(out / "detections.json",
                        {s.image_id: pipeline.detections_json(ds) for s, ds in zip(scenes, result.detections)})
    summary = pipeline.eval_summary(result, config)
    pipeline.write_json(out / "summary.json", summary)
    pipeline.write_run_record(out, "eval", config, {"dataset": str(args.dataset)})
    print(json.dumps({k: summary[k] for k in ("ap", "n_dets", "n_gts", "recall")}, sort_keys=True))


def cmd_synth(args) -> None:
    spec = SceneSpec()
    if args.spec:
        spec = SceneSpec.from_dict(pipeline.load_config(args.spec))
    if args.count < 0:
        raise InputError("count must be >= 0")
    out = Path(args.out)
    try:
        names = write_corpus(out, args.count, args.seed, spec)
        pipeline.write_json(out / "run.json", {"command": "synth", "count": args.count, "seed": args.seed,
                                               "spec": spec.to_dict()})
    except OSError as exc:
        raise InputError(f"{out}: cannot write corpus ({exc.strerror or exc})") from exc
    print(f"{len(names)} scenes written to {out}")


COMMANDS = {"train": cmd_train, "detect": cmd_detect, "eval": cmd_eval, "synth": cmd_synth}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except SympartsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, ArithmeticError, AssertionError) as exc:
        # anything escaping the typed errors is a broken internal contract
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

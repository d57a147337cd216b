"""Train and evaluate ablation presets on the synthetic ribbon benchmark.

    python scripts/run_benchmark.py --out bench/ [--presets deform+sequences ellipse+clustering]

Writes summary.json, one pr_<preset>.csv per preset, and a combined pr.png.
"""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from symparts.benchmark import ALL_PRESETS, BenchmarkConfig, run_benchmark


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--presets", nargs="+", default=ALL_PRESETS, choices=ALL_PRESETS)
    ap.add_argument("--n-train", type=int, default=20)
    ap.add_argument("--n-eval", type=int, default=40)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bench = BenchmarkConfig(n_train=args.n_train, n_eval=args.n_eval, workers=args.workers)
    runs = run_benchmark(args.presets, bench)

    fig, ax = plt.subplots(figsize=(5, 4))
    for name, run in runs.items():
        run.result.curve.write_csv(out / f"pr_{name}.csv")
        pts = run.result.curve.points
        ax.plot([p[2] for p in pts], [p[1] for p in pts], drawstyle="steps-post",
                label=f"{name} (AP {run.result.ap:.3f})")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out / "pr.png", dpi=120)
    (out / "summary.json").write_text(json.dumps([r.summary() for r in runs.values()], indent=2) + "\n")


if __name__ == "__main__":
    main()

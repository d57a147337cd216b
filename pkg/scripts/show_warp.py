"""Render a straight and a bent ribbon next to their warped shape histograms.

    python scripts/show_warp.py --bend 0.6 --out warp.png

Top row: the ribbon with its fitted axis.  Middle and bottom rows: the 10x10
histogram under the moment ellipse and under the deformable fit.
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from symparts.data import RibbonParams, ribbon_mask
from symparts.segmentation import border_mask
from symparts.warp import DeformableParams, chi2_distance, fit_deformable, fit_ellipse_moments, shape_histogram, \
    warp_points


def histograms(mask):
    ys, xs = np.nonzero(mask)
    by, bx = np.nonzero(border_mask(mask.astype(int)) & mask)
    edgels = np.column_stack([bx, by, np.ones(len(bx))]).astype(float)
    ellipse = fit_ellipse_moments(np.column_stack([xs, ys]).astype(float))
    deform = fit_deformable(edgels, ellipse)
    return shape_histogram(edgels, DeformableParams.straight(ellipse)), shape_histogram(edgels, deform), deform


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--bend", type=float, default=0.6, help="kappa times half length")
    ap.add_argument("--taper", type=float, default=0.2)
    ap.add_argument("--out", default="warp.png")
    args = ap.parse_args()

    fig, axes = plt.subplots(3, 2, figsize=(6, 9))
    results = []
    for col, bend in enumerate((0.0, args.bend)):
        mask = ribbon_mask((128, 128), RibbonParams((64.0, 64.0), 0.4, 32.0, 8.0, bend, args.taper))
        std, dfm, w = histograms(mask)
        results.append((std, dfm))
        u = np.linspace(-w.ellipse.ax, w.ellipse.ax, 50)
        axis = warp_points(np.column_stack([u, np.zeros_like(u)]), w)
        axes[0, col].imshow(mask, cmap="gray")
        axes[0, col].plot(axis[:, 0], axis[:, 1], "r-")
        axes[0, col].set_title(f"bend {bend:.2f}")
        axes[1, col].imshow(std.grid, cmap="magma")
        axes[2, col].imshow(dfm.grid, cmap="magma")
    axes[1, 0].set_ylabel("moment ellipse")
    axes[2, 0].set_ylabel("deformable fit")
    for ax in axes.ravel():
        ax.set_xticks([])
        ax.set_yticks([])
    d_std = chi2_distance(results[0][0].bins, results[1][0].bins)
    d_dfm = chi2_distance(results[0][1].bins, results[1][1].bins)
    fig.suptitle(f"chi2 straight vs bent: ellipse {d_std:.3f}, deformable {d_dfm:.3f}")
    fig.tight_layout()
    fig.savefig(args.out, dpi=110)
    print(f"chi2 ellipse={d_std:.3f} deformable={d_dfm:.3f} -> {args.out}")


if __name__ == "__main__":
    main()

"""Pairwise shape and appearance affinities between adjacent discs.

The stack is: a linear SVM on the warped 100-bin shape histogram, a logistic
calibration of its margin, an L1-regularised logistic regressor on quadratic
appearance features, and a logistic combiner of the two affinities.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit
from scipy.special import expit

from .errors import FitError, InputError, TrainingError, VersionError
from .segmentation import Disc, DiscGraph
from .warp import (GRID, DeformableParams, ShapeHistogram, fit_deformable, fit_ellipse_moments,
                   shape_histogram)

log = logging.getLogger(__name__)

MODEL_VERSION = 1
FEATURE_VERSION = "sym-1"
N_RAW = 27
N_EXPANDED = 1 + N_RAW + N_RAW * (N_RAW + 1) // 2
N_SHAPE = GRID * GRID
L1_STRENGTH = 0.5
CONTAIN = 0.75
WARP_MODES = ("standard", "deformable")


# ---------------------------------------------------------------------------
# appearance


def _marginals(hist: np.ndarray) -> list[np.ndarray]:
    from .segmentation import HSV_BINS

    cube = hist.reshape(HSV_BINS)
    return [cube.sum(axis=(1, 2)), cube.sum(axis=(0, 2)), cube.sum(axis=(0, 1))]


def histogram_distances(p: np.ndarray, q: np.ndarray) -> tuple[float, float, float]:
    """L1, chi-squared and Bhattacharyya distances between two unit-mass histograms."""
    l1 = float(np.abs(p - q).sum())
    chi2 = float(0.5 * np.sum((p - q) ** 2 / (p + q + 1e-9)))
    bc = float(np.sum(np.sqrt(p * q)))
    return l1, chi2, math.sqrt(max(0.0, 1.0 - bc))


def appearance_raw(di: Disc, dj: Disc) -> np.ndarray:
    """27 slots: |d mean RGB|, |d mean HSV|, var RGB i, var RGB j, var HSV i, var HSV j,
    then (L1, chi2, Bhattacharyya) for each of the H, S, V marginal histograms."""
    dist = []
    for p, q in zip(_marginals(di.hsv_histogram), _marginals(dj.hsv_histogram)):
        dist.extend(histogram_distances(p, q))
    return np.concatenate([
        np.abs(di.mean_rgb - dj.mean_rgb),
        np.abs(di.mean_hsv - dj.mean_hsv),
        di.var_rgb, dj.var_rgb,
        di.var_hsv, dj.var_hsv,
        dist,
    ])


_TRIU = np.triu_indices(N_RAW)


def quadratic_index(a: int, b: int) -> int:
    """Position of x_a * x_b (0-based, a <= b) inside the expanded vector."""
    if not 0 <= a <= b < N_RAW:
        raise IndexError((a, b))
    return 1 + N_RAW + a * N_RAW - a * (a - 1) // 2 + (b - a)


def quadratic_expand(x: np.ndarray) -> np.ndarray:
    """[1, x, x_a x_b for a <= b in row-major order]; works on (27,) or (n, 27)."""
    x = np.asarray(x, dtype=np.float64)
    outer = x[..., :, None] * x[..., None, :]
    ones = np.ones(x.shape[:-1] + (1,))
    return np.concatenate([ones, x, outer[..., _TRIU[0], _TRIU[1]]], axis=-1)


@dataclass(frozen=True, eq=False)
class AppearanceFeature:
    raw: np.ndarray
    expanded: np.ndarray


def appearance_feature(di: Disc, dj: Disc) -> AppearanceFeature:
    raw = appearance_raw(di, dj)
    return AppearanceFeature(raw, quadratic_expand(raw))


# ---------------------------------------------------------------------------
# shape


def union_region(discs: Sequence[Disc]) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates (N, 2) and boundary edgels (M, 3) of the union of discs."""
    x0 = min(d.bbox[0] for d in discs)
    y0 = min(d.bbox[1] for d in discs)
    x1 = max(d.bbox[2] for d in discs)
    y1 = max(d.bbox[3] for d in discs)
    mask = np.zeros((y1 - y0 + 3, x1 - x0 + 3), dtype=bool)
    strength = np.full(mask.shape, -1.0)
    for d in discs:
        mask[d.ys - y0 + 1, d.xs - x0 + 1] = True
    for d in discs:
        e = d.boundary_edgels
        strength[e[:, 1].astype(int) - y0 + 1, e[:, 0].astype(int) - x0 + 1] = e[:, 2]
    interior = mask[1:-1, 1:-1] & mask[:-2, 1:-1] & mask[2:, 1:-1] & mask[1:-1, :-2] & mask[1:-1, 2:]
    inner = strength[1:-1, 1:-1]
    edge = mask[1:-1, 1:-1] & ~interior & (inner >= 0)
    by, bx = np.nonzero(edge)
    edgels = np.column_stack([bx + x0, by + y0, inner[by, bx]]).astype(np.float64)
    py, px = np.nonzero(mask[1:-1, 1:-1])
    pixels = np.column_stack([px + x0, py + y0]).astype(np.float64)
    return pixels, edgels


def region_warp(pixels: np.ndarray, edgels: np.ndarray, mode: str) -> DeformableParams | None:
    """Warp fitted to a region: moment ellipse, refined by the deformable fit when asked.

    Returns None when the region is too degenerate for an ellipse.
    """
    try:
        ellipse = fit_ellipse_moments(pixels)
    except FitError:
        return None
    straight = DeformableParams.straight(ellipse)
    if mode == "standard" or len(edgels) < 8 or not np.any(edgels[:, 2] > 0):
        return straight
    try:
        return fit_deformable(edgels, ellipse)
    except FitError:
        return straight


def shape_feature(discs: Sequence[Disc], mode: str) -> ShapeHistogram:
    if mode not in WARP_MODES:
        raise ValueError(f"unknown warp mode {mode!r}")
    pixels, edgels = union_region(discs)
    w = region_warp(pixels, edgels, mode)
    if w is None:
        return ShapeHistogram(np.zeros(N_SHAPE), 0.0)
    return shape_histogram(edgels, w)


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True, eq=False)
class AffinityModel:
    svm_w: np.ndarray  # (100,)
    svm_b: float
    platt: tuple[float, float]  # logistic(platt[0] * margin + platt[1])
    app_w: np.ndarray  # (406,), app_w[0] multiplies the constant feature
    combiner: tuple[float, float, float]  # (w_shape, w_app, bias)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        arrays = [self.svm_w, self.app_w, np.array([self.svm_b, *self.platt, *self.combiner])]
        if self.svm_w.shape != (N_SHAPE,) or self.app_w.shape != (N_EXPANDED,):
            raise VersionError("affinity model coefficient blocks have the wrong length")
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("affinity model has non-finite coefficients")

    @property
    def warp_mode(self) -> str:
        return self.metadata.get("warp_mode", "deformable")

    def shape_margin(self, hist: ShapeHistogram | np.ndarray) -> float:
        bins = hist.bins if isinstance(hist, ShapeHistogram) else hist
        return float(bins @ self.svm_w + self.svm_b)

    def shape_affinity(self, hist: ShapeHistogram | np.ndarray) -> float:
        bins = hist.bins if isinstance(hist, ShapeHistogram) else np.asarray(hist)
        if not np.any(bins > 0):
            return 0.0
        a, b = self.platt
        return float(expit(a * self.shape_margin(bins) + b))

    def appearance_affinity(self, feature: AppearanceFeature | np.ndarray) -> float:
        x = feature.expanded if isinstance(feature, AppearanceFeature) else np.asarray(feature)
        return float(expit(x @ self.app_w))

    def combine(self, a_shape: float, a_app: float) -> float:
        return combined_affinity(a_shape, a_app, self)

    # -- serialisation -------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "version": MODEL_VERSION,
            "shape_svm": {"w": self.svm_w.tolist(), "b": float(self.svm_b)},
            "shape_platt": [float(v) for v in self.platt],
            "app_logit": {"w": self.app_w.tolist()},
            "combiner": [float(v) for v in self.combiner],
            "metadata": self.metadata,
        }
        return _dumps(doc) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AffinityModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"model file is not valid JSON: {exc}") from exc
        if doc.get("version") != MODEL_VERSION:
            raise VersionError(f"model version {doc.get('version')!r}, expected {MODEL_VERSION}")
        meta = doc.get("metadata", {})
        if meta.get("feature_version", FEATURE_VERSION) != FEATURE_VERSION:
            raise VersionError(f"model feature version {meta.get('feature_version')!r}, expected {FEATURE_VERSION!r}")
        try:
            return cls(
                svm_w=np.array(doc["shape_svm"]["w"], dtype=np.float64),
                svm_b=float(doc["shape_svm"]["b"]),
                platt=tuple(float(v) for v in doc["shape_platt"]),
                app_w=np.array(doc["app_logit"]["w"], dtype=np.float64),
                combiner=tuple(float(v) for v in doc["combiner"]),
                metadata=meta,
            )
        except (KeyError, TypeError) as exc:
            raise VersionError(f"model file does not follow the schema: missing {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "AffinityModel":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise InputError(f"{path}: cannot read model file ({exc.strerror or exc})") from exc
        return cls.from_json(text)


def _dumps(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError("non-finite float in model")
        text = f"{obj:.17g}"
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def combined_affinity(a_shape: float, a_app: float, model: AffinityModel) -> float:
    ws, wa, b = model.combiner
    return float(expit(ws * a_shape + wa * a_app + b))


class PairScorer:
    """Caches shape/appearance affinities over the discs of one image."""

    def __init__(self, discs: dict[int, Disc], model: AffinityModel, mode: str | None = None):
        self.discs = discs
        self.model = model
        self.mode = mode or model.warp_mode
        self._shape: dict[tuple[int, ...], float] = {}

    def shape(self, ids: Sequence[int]) -> float:
        key = tuple(sorted(ids))
        if key not in self._shape:
            hist = shape_feature([self.discs[i] for i in key], self.mode)
            self._shape[key] = self.model.shape_affinity(hist)
        return self._shape[key]

    def appearance(self, i: int, j: int) -> float:
        return self.model.appearance_affinity(appearance_feature(self.discs[i], self.discs[j]))

    def pair(self, i: int, j: int) -> float:
        return self.model.combine(self.shape((i, j)), self.appearance(i, j))

    def triple(self, a: int, b: int, c: int) -> float:
        return self.shape((a, b, c))


def weight_graph(graph: DiscGraph, scorer: PairScorer) -> DiscGraph:
    return graph.with_affinities([scorer.pair(i, j) for i, j, _ in graph.edges])


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class LabeledPair:
    i: int
    j: int
    label: bool
    image_id: str = ""


def _check_classes(y: np.ndarray, what: str) -> None:
    n_pos = int(np.sum(y > 0))
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise TrainingError(f"{what}: need both classes, got {n_pos} positive and {n_neg} negative examples")


def train_shape_svm(features: np.ndarray, labels: np.ndarray, C: float = 1.0, seed: int = 0,
                    max_epochs: int = 2000, tol: float = 1e-4) -> tuple[np.ndarray, float]:
    """Linear hinge-loss SVM by dual coordinate descent; the bias is an extra regularised feature."""
    X = np.asarray(features, dtype=np.float64)
    y = np.where(np.asarray(labels) > 0, 1.0, -1.0)
    _check_classes(y, "shape SVM")
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    w = _svm_dual_cd(Xa, y, float(C), max_epochs, tol, np.arange(n), seed)
    return w[:d].copy(), float(w[d])


def logistic_objective(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, reg: float) -> float:
    z = X @ w + b
    return float(np.sum(np.logaddexp(0.0, -np.where(y > 0, 1.0, -1.0) * z)) + reg * np.abs(w).sum())


def train_l1_logistic(features: np.ndarray, labels: np.ndarray, reg: float = L1_STRENGTH, *,
                      standardize: bool = True, max_outer: int = 200, tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Minimise sum of logistic losses + reg * ||w||_1 with an unpenalised intercept.

    Proximal Newton: each outer step solves the weighted least-squares model of
    the loss by cyclic coordinate descent with soft thresholding, then
    backtracks on the true objective.  Columns are standardised internally
    and the solution mapped back, so ``reg`` acts on the standardised scale.
    """
    X = np.asarray(features, dtype=np.float64)
    y01 = (np.asarray(labels) > 0).astype(np.float64)
    _check_classes(y01, "L1 logistic regression")
    if reg < 0:
        raise ValueError("L1 strength must be non-negative")
    n, d = X.shape
    if standardize:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd[sd < 1e-12] = 1.0
    else:
        mu, sd = np.zeros(d), np.ones(d)
    Z = np.hstack([np.ones((n, 1)), (X - mu) / sd])
    penalty = np.full(d + 1, reg)
    penalty[0] = 0.0

    def objective(beta: np.ndarray) -> float:
        eta = Z @ beta
        return float(np.sum(np.logaddexp(0.0, eta) - y01 * eta) + np.dot(penalty, np.abs(beta)))

    beta = np.zeros(d + 1)
    prior = np.clip(y01.mean(), 1e-6, 1 - 1e-6)
    beta[0] = math.log(prior / (1 - prior))
    f = objective(beta)
    for _ in range(max_outer):
        eta = Z @ beta
        p = expit(eta)
        wts = np.maximum(p * (1 - p), 1e-6)
        H = (Z * wts[:, None]).T @ Z
        g = Z.T @ (p - y01)
        # quadratic model in the step: 0.5 s'Hs + g's + pen*|beta + s|
        new = _cd_quadratic(H, H @ beta - g, penalty, beta.copy())
        direction = new - beta
        if np.max(np.abs(direction)) < 1e-12:
            break
        step = 1.0
        while step > 1e-10:
            cand = beta + step * direction
            fc = objective(cand)
            if fc <= f:
                break
            step *= 0.5
        else:
            break
        converged = f - fc <= tol * max(1.0, abs(f))
        beta, f = cand, fc
        if converged:
            break
    w = beta[1:] / sd
    b = float(beta[0] - np.dot(w, mu))
    w[beta[1:] == 0.0] = 0.0
    return w, b


@njit(cache=True)
def _svm_dual_cd(Xa, y, C, max_epochs, tol, order, seed):
    n, d = Xa.shape
    qd = np.empty(n)
    for i in range(n):
        qd[i] = Xa[i] @ Xa[i]
    alpha = np.zeros(n)
    w = np.zeros(d)
    np.random.seed(seed)
    for _ in range(max_epochs):
        pg_max, pg_min = -np.inf, np.inf
        np.random.shuffle(order)
        for i in order:
            g = y[i] * (Xa[i] @ w) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == C:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                a_new = min(max(a - g / qd[i], 0.0), C)
                w += (a_new - a) * y[i] * Xa[i]
                alpha[i] = a_new
        if pg_max - pg_min < tol:
            break
    return w


@njit(cache=True)
def _cd_quadratic(H, c, penalty, beta, sweeps=500, tol=1e-10):
    """argmin 0.5 b'Hb - c'b + sum(penalty |b|) by cyclic exact coordinate minimisation."""
    grad = H @ beta - c
    for _ in range(sweeps):
        biggest = 0.0
        for k in range(beta.shape[0]):
            hk = H[k, k]
            if hk <= 1e-14:
                continue
            old = beta[k]
            rho = hk * old - grad[k]
            new = max(abs(rho) - penalty[k], 0.0) / hk
            if rho < 0:
                new = -new
            if new != old:
                grad += H[:, k] * (new - old)
                beta[k] = new
                biggest = max(biggest, abs(new - old) * np.sqrt(hk))
        if biggest < tol:
            break
    return beta


def subsample_negatives(labels: np.ndarray, ratio: float, seed: int) -> np.ndarray:
    """Indices keeping every positive and at most ``ratio`` x as many negatives."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels > 0)
    neg = np.flatnonzero(labels <= 0)
    cap = int(ratio * len(pos))
    if len(neg) > cap:
        neg = np.sort(np.random.default_rng(seed).choice(neg, size=cap, replace=False))
    return np.sort(np.concatenate([pos, neg]))


# ---------------------------------------------------------------------------
# training pairs from masks


def containment(discs: Sequence[Disc], masks: Sequence[np.ndarray]) -> np.ndarray:
    """Fraction of each disc's pixels inside each mask, shape (n_discs, n_masks)."""
    out = np.zeros((len(discs), len(masks)))
    for k, m in enumerate(masks):
        for r, d in enumerate(discs):
            out[r, k] = m[d.ys, d.xs].mean()
    return out


def assemble_training_pairs(graph: DiscGraph, parts: Sequence[np.ndarray], figure: np.ndarray,
                            image_id: str = "") -> tuple[list[LabeledPair], list[LabeledPair]]:
    """Label adjacent disc pairs from part masks (shape) and a figure mask (appearance).

    Shape: positive when both discs lie >= 75% inside one part; negative when
    one disc lies >= 75% inside a part and the other <= 25% inside it.
    Appearance: positive when both lie >= 75% inside the figure; negative when
    one is >= 75% inside and the other >= 75% outside.  Everything else is dropped.
    """
    ids = list(graph.ids)
    discs = [graph.discs[i] for i in ids]
    shape = figure.shape
    for k, m in enumerate(parts):
        if m.shape != shape:
            raise InputError(f"{image_id}: part mask {k} has shape {m.shape}, figure mask {shape}")
    if discs and discs[0].image_shape != shape:
        raise InputError(f"{image_id}: masks {shape} do not match image {discs[0].image_shape}")
    row = {i: r for r, i in enumerate(ids)}
    part_frac = containment(discs, [np.asarray(m, bool) for m in parts])
    fig_frac = containment(discs, [np.asarray(figure, bool)])[:, 0]

    shape_pairs, app_pairs = [], []
    for i, j, _ in graph.edges:
        fi, fj = part_frac[row[i]], part_frac[row[j]]
        if len(parts):
            if np.any((fi >= CONTAIN) & (fj >= CONTAIN)):
                shape_pairs.append(LabeledPair(i, j, True, image_id))
            elif np.any(((fi >= CONTAIN) & (fj <= 1 - CONTAIN)) | ((fj >= CONTAIN) & (fi <= 1 - CONTAIN))):
                shape_pairs.append(LabeledPair(i, j, False, image_id))
        gi, gj = fig_frac[row[i]], fig_frac[row[j]]
        if gi >= CONTAIN and gj >= CONTAIN:
            app_pairs.append(LabeledPair(i, j, True, image_id))
        elif (gi >= CONTAIN and gj <= 1 - CONTAIN) or (gj >= CONTAIN and gi <= 1 - CONTAIN):
            app_pairs.append(LabeledPair(i, j, False, image_id))
    return shape_pairs, app_pairs


# ---------------------------------------------------------------------------
# whole-stack training


@dataclass
class TrainingSet:
    """Per-pair features pooled over a corpus."""

    shape_hist: list[np.ndarray] = field(default_factory=list)
    shape_app: list[np.ndarray] = field(default_factory=list)
    shape_y: list[bool] = field(default_factory=list)
    app_x: list[np.ndarray] = field(default_factory=list)
    app_y: list[bool] = field(default_factory=list)

    def extend(self, other: "TrainingSet") -> None:
        for name in ("shape_hist", "shape_app", "shape_y", "app_x", "app_y"):
            getattr(self, name).extend(getattr(other, name))


def pair_features(graph: DiscGraph, shape_pairs: Iterable[LabeledPair], app_pairs: Iterable[LabeledPair],
                  mode: str) -> TrainingSet:
    ts = TrainingSet()
    for p in shape_pairs:
        di, dj = graph.discs[p.i], graph.discs[p.j]
        ts.shape_hist.append(shape_feature([di, dj], mode).bins)
        ts.shape_app.append(appearance_raw(di, dj))
        ts.shape_y.append(p.label)
    for p in app_pairs:
        ts.app_x.append(appearance_raw(graph.discs[p.i], graph.discs[p.j]))
        ts.app_y.append(p.label)
    return ts


def fit_affinity_model(ts: TrainingSet, *, mode: str, seed: int = 0, reg: float = L1_STRENGTH,
                       svm_c: float = 1.0, neg_ratio: float = 3.0, holdout: float = 0.2) -> tuple[AffinityModel, dict]:
    """Train SVM, margin calibration, appearance regressor and combiner; returns the model and diagnostics."""
    sy = np.asarray(ts.shape_y, dtype=bool)
    ay = np.asarray(ts.app_y, dtype=bool)
    _check_classes(sy.astype(float), "shape pairs")
    _check_classes(ay.astype(float), "appearance pairs")
    rng = np.random.default_rng(seed)

    keep = subsample_negatives(sy, neg_ratio, seed)
    H = np.asarray(ts.shape_hist)[keep]
    SA = np.asarray(ts.shape_app)[keep]
    yk = sy[keep]
    # stratified split so both halves see both classes
    calib = np.zeros(len(keep), dtype=bool)
    for cls in (True, False):
        idx = np.flatnonzero(yk == cls)
        n_cal = max(1, int(round(holdout * len(idx)))) if len(idx) > 1 else 0
        calib[rng.permutation(idx)[:n_cal]] = True
    train = ~calib
    if not calib.any() or len(np.unique(yk[calib])) < 2 or len(np.unique(yk[train])) < 2:
        raise TrainingError("too few shape pairs to hold out a calibration split")

    svm_w, svm_b = train_shape_svm(H[train], yk[train], C=svm_c, seed=seed)
    margins = H[calib] @ svm_w + svm_b
    pw, pb = train_l1_logistic(margins[:, None], yk[calib], reg, standardize=False)
    platt = (float(pw[0]), pb)

    akeep = subsample_negatives(ay, neg_ratio, seed + 1)
    AX = quadratic_expand(np.asarray(ts.app_x)[akeep])
    aw, ab = train_l1_logistic(AX[:, 1:], ay[akeep], reg)
    app_w = np.concatenate([[ab], aw])

    a_shape = expit(platt[0] * margins + platt[1])
    a_shape[~np.any(H[calib] > 0, axis=1)] = 0.0
    a_app = expit(quadratic_expand(SA[calib]) @ app_w)
    cw, cb = train_l1_logistic(np.column_stack([a_shape, a_app]), yk[calib], reg, standardize=False)

    model = AffinityModel(
        svm_w=svm_w, svm_b=svm_b, platt=platt, app_w=app_w,
        combiner=(float(cw[0]), float(cw[1]), cb),
        metadata={"feature_version": FEATURE_VERSION, "seed": int(seed), "l1": float(reg),
                  "svm_c": float(svm_c), "warp_mode": mode},
    )
    train_acc = float(np.mean(((H[train] @ svm_w + svm_b) > 0) == yk[train]))
    diag = {
        "shape_pairs": int(len(sy)), "shape_pos": int(sy.sum()),
        "app_pairs": int(len(ay)), "app_pos": int(ay.sum()),
        "svm_train_acc": train_acc,
        "app_nonzero": int(np.count_nonzero(aw)),
    }
    return model, diag

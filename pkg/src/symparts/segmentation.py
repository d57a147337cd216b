"""Images, multi-scale superpixels as candidate discs, and the disc adjacency graph."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage
from skimage.color import rgb2hsv, rgb2lab
from skimage.measure import label as connected_label

from .errors import InputError, ParameterError

log = logging.getLogger(__name__)

DEFAULT_LADDER = (25, 50, 100, 200)
HSV_BINS = (8, 4, 4)
COMPACTNESS = 10.0
ORPHAN_FRACTION = 0.25
DUPLICATE_CONTAINMENT = 0.9

# Largest Sobel magnitude reachable on a [0, 1] image (enumerated over binary 3x3 patches).
_SOBEL_MAX = float(np.sqrt(20.0))


@dataclass(frozen=True, eq=False)
class Raster:
    rgb: np.ndarray
    gray: np.ndarray
    edge_strength: np.ndarray

    @property
    def height(self) -> int:
        return self.gray.shape[0]

    @property
    def width(self) -> int:
        return self.gray.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.gray.shape

    @classmethod
    def from_rgb(cls, rgb: np.ndarray) -> "Raster":
        rgb = np.asarray(rgb, dtype=np.float64)
        if rgb.ndim == 2:
            rgb = np.repeat(rgb[..., None], 3, axis=2)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise InputError(f"expected an HxWx3 image, got shape {rgb.shape}")
        rgb = np.clip(rgb, 0.0, 1.0)
        gray = luminance(rgb)
        for arr in (rgb, gray):
            arr.setflags(write=False)
        edges = edge_strength_map(gray)
        edges.setflags(write=False)
        return cls(rgb=rgb, gray=gray, edge_strength=edges)


def luminance(rgb: np.ndarray) -> np.ndarray:
    # ITU-R BT.601 weights
    return rgb @ np.array([0.299, 0.587, 0.114])


def load_raster(path: str | Path) -> Raster:
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "JPEG"):
                raise InputError(f"{path}: unsupported image format {im.format!r}")
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        raise InputError(f"{path}: cannot read image ({exc.strerror or exc})") from exc
    except (UnidentifiedImageError, OSError) as exc:
        raise InputError(f"{path}: not a readable PNG/JPEG image ({exc})") from exc
    return Raster.from_rgb(arr)


def edge_strength_map(gray: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude with replicated borders, scaled into [0, 1]."""
    gray = np.asarray(gray, dtype=np.float64)
    gx = ndimage.sobel(gray, axis=1, mode="nearest")
    gy = ndimage.sobel(gray, axis=0, mode="nearest")
    return np.clip(np.hypot(gx, gy) / _SOBEL_MAX, 0.0, 1.0)


# ---------------------------------------------------------------------------
# oversegmentation


def _grid_shape(height: int, width: int, k: int) -> tuple[int, int]:
    step = np.sqrt(height * width / k)
    ny = max(1, int(round(height / step)))
    nx = max(1, int(round(width / step)))
    if ny * nx < 2:
        if width >= height:
            nx = 2
        else:
            ny = 2
    return ny, nx


def oversegment(raster: Raster, k: int, compactness: float = COMPACTNESS, n_iter: int = 10) -> np.ndarray:
    """Grid-seeded local k-means in (Lab, position) space; returns an int label plane.

    Labels are 0..n-1, every region is 4-connected, and components smaller
    than a quarter of the mean cell are merged into their most similar neighbour.
    """
    h, w = raster.shape
    if not isinstance(k, (int, np.integer)) or k < 2 or k > h * w:
        raise ParameterError(f"superpixel count k={k} outside [2, {h * w}]")
    lab = rgb2lab(raster.rgb)
    ny, nx = _grid_shape(h, w, k)
    step = np.sqrt(h * w / (ny * nx))

    cy = (np.arange(ny) + 0.5) * h / ny - 0.5
    cx = (np.arange(nx) + 0.5) * w / nx - 0.5
    cy, cx = np.meshgrid(cy, cx, indexing="ij")
    cy, cx = cy.ravel(), cx.ravel()
    centers = np.column_stack([lab[np.round(cy).astype(int), np.round(cx).astype(int)], cy, cx])

    yy, xx = np.mgrid[0:h, 0:w]
    spatial_w = (compactness / step) ** 2
    labels = np.zeros((h, w), dtype=np.int64)
    radius = int(np.ceil(step))
    for _ in range(n_iter):
        dist = np.full((h, w), np.inf)
        for idx, (L, a, b, y, x) in enumerate(centers):
            y0, y1 = max(int(y) - radius, 0), min(int(y) + radius + 1, h)
            x0, x1 = max(int(x) - radius, 0), min(int(x) + radius + 1, w)
            sub = lab[y0:y1, x0:x1]
            dc = (sub[..., 0] - L) ** 2 + (sub[..., 1] - a) ** 2 + (sub[..., 2] - b) ** 2
            ds = (yy[y0:y1, x0:x1] - y) ** 2 + (xx[y0:y1, x0:x1] - x) ** 2
            d = dc + spatial_w * ds
            better = d < dist[y0:y1, x0:x1]
            dist[y0:y1, x0:x1][better] = d[better]
            labels[y0:y1, x0:x1][better] = idx
        # pixels no window reached (only possible on tiny images) go to the nearest centre
        lost = ~np.isfinite(dist)
        if lost.any():
            d2 = (yy[lost][:, None] - centers[:, 3]) ** 2 + (xx[lost][:, None] - centers[:, 4]) ** 2
            labels[lost] = np.argmin(d2, axis=1)
        n = len(centers)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=n)
        alive = counts > 0
        feats = np.column_stack([lab.reshape(-1, 3), yy.ravel(), xx.ravel()])
        sums = np.stack([np.bincount(flat, weights=feats[:, c], minlength=n) for c in range(5)], axis=1)
        centers[alive] = sums[alive] / counts[alive, None]

    return _enforce_connectivity(labels, lab, h * w / len(centers))


def _enforce_connectivity(labels: np.ndarray, lab: np.ndarray, mean_cell: float) -> np.ndarray:
    comp = connected_label(labels, background=-1, connectivity=1) - 1
    n = int(comp.max()) + 1
    flat = comp.ravel()
    size = np.bincount(flat, minlength=n).astype(np.float64)
    color_sum = np.stack([np.bincount(flat, weights=lab[..., c].ravel(), minlength=n) for c in range(3)], axis=1)

    pairs = np.concatenate([
        np.stack([comp[:, :-1].ravel(), comp[:, 1:].ravel()], axis=1),
        np.stack([comp[:-1, :].ravel(), comp[1:, :].ravel()], axis=1),
    ])
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    neighbours: dict[int, set[int]] = {i: set() for i in range(n)}
    for a, b in np.unique(np.sort(pairs, axis=1), axis=0):
        neighbours[int(a)].add(int(b))
        neighbours[int(b)].add(int(a))

    parent = list(range(n))
    limit = ORPHAN_FRACTION * mean_cell
    heap = [(size[i], i) for i in range(n) if size[i] < limit]
    heapq.heapify(heap)
    while heap:
        s_i, i = heapq.heappop(heap)
        if parent[i] != i or s_i != size[i] or not neighbours[i]:
            continue
        mean_i = color_sum[i] / size[i]
        j = min(neighbours[i], key=lambda c: (float(np.sum((color_sum[c] / size[c] - mean_i) ** 2)), c))
        parent[i] = j
        size[j] += size[i]
        color_sum[j] += color_sum[i]
        for c in neighbours.pop(i):
            neighbours[c].discard(i)
            if c != j:
                neighbours[c].add(j)
                neighbours[j].add(c)
        if size[j] < limit:
            heapq.heappush(heap, (size[j], j))

    def root(c: int) -> int:
        while parent[c] != c:
            c = parent[c]
        return c

    roots = np.array([root(c) for c in range(n)])
    _, relabeled = np.unique(roots[flat], return_inverse=True)
    return relabeled.reshape(labels.shape)


# ---------------------------------------------------------------------------
# discs


@dataclass(frozen=True, eq=False)
class Disc:
    id: int
    scale_level: int
    xs: np.ndarray
    ys: np.ndarray
    centroid: tuple[float, float]
    boundary_edgels: np.ndarray  # (M, 3): x, y, strength
    mean_rgb: np.ndarray
    mean_hsv: np.ndarray
    var_rgb: np.ndarray
    var_hsv: np.ndarray
    hsv_histogram: np.ndarray
    image_shape: tuple[int, int]
    bbox: tuple[int, int, int, int] = field(default=(0, 0, 0, 0))  # x0, y0, x1, y1 inclusive

    @property
    def area(self) -> int:
        return len(self.xs)

    @property
    def pixels(self) -> set[tuple[int, int]]:
        return set(zip(self.xs.tolist(), self.ys.tolist()))

    def mask(self) -> np.ndarray:
        m = np.zeros(self.image_shape, dtype=bool)
        m[self.ys, self.xs] = True
        return m


def hsv_bin_index(hsv: np.ndarray) -> np.ndarray:
    nh, ns, nv = HSV_BINS
    h = np.minimum((hsv[..., 0] * nh).astype(int), nh - 1)
    s = np.minimum((hsv[..., 1] * ns).astype(int), ns - 1)
    v = np.minimum((hsv[..., 2] * nv).astype(int), nv - 1)
    return (h * ns + s) * nv + v


def border_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels with at least one 4-neighbour carrying another label or lying off-image."""
    b = np.zeros(labels.shape, dtype=bool)
    b[0, :] = b[-1, :] = True
    b[:, 0] = b[:, -1] = True
    dx = labels[:, 1:] != labels[:, :-1]
    dy = labels[1:, :] != labels[:-1, :]
    b[:, 1:] |= dx
    b[:, :-1] |= dx
    b[1:, :] |= dy
    b[:-1, :] |= dy
    return b


def discs_from_labels(raster: Raster, labels: np.ndarray, scale_level: int, first_id: int) -> list[Disc]:
    h, w = labels.shape
    n = int(labels.max()) + 1
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=n)
    splits = np.cumsum(counts)[:-1]
    yy, xx = np.divmod(order, w)
    ys_per = np.split(yy, splits)
    xs_per = np.split(xx, splits)

    rgb = raster.rgb.reshape(-1, 3)
    hsv = rgb2hsv(raster.rgb).reshape(-1, 3)

    def moments(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s1 = np.stack([np.bincount(flat, weights=values[:, c], minlength=n) for c in range(3)], axis=1)
        s2 = np.stack([np.bincount(flat, weights=values[:, c] ** 2, minlength=n) for c in range(3)], axis=1)
        mean = s1 / counts[:, None]
        var = np.maximum(s2 / counts[:, None] - mean**2, 0.0)
        return mean, var

    mean_rgb, var_rgb = moments(rgb)
    mean_hsv, var_hsv = moments(hsv)
    nbins = int(np.prod(HSV_BINS))
    hist = np.bincount(flat * nbins + hsv_bin_index(hsv), minlength=n * nbins).reshape(n, nbins)
    hist = hist / counts[:, None]

    border = border_mask(labels)
    strength = raster.edge_strength
    discs = []
    for i in range(n):
        xs, ys = xs_per[i].astype(np.int32), ys_per[i].astype(np.int32)
        on_border = border[ys, xs]
        bx, by = xs[on_border], ys[on_border]
        edgels = np.column_stack([bx, by, strength[by, bx]]).astype(np.float64)
        discs.append(Disc(
            id=first_id + i,
            scale_level=scale_level,
            xs=xs,
            ys=ys,
            centroid=(float(xs.mean()), float(ys.mean())),
            boundary_edgels=edgels,
            mean_rgb=mean_rgb[i],
            mean_hsv=mean_hsv[i],
            var_rgb=var_rgb[i],
            var_hsv=var_hsv[i],
            hsv_histogram=hist[i],
            image_shape=(h, w),
            bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())),
        ))
    return discs


def multiscale_discs(raster: Raster, ladder: Sequence[int] = DEFAULT_LADDER,
                     compactness: float = COMPACTNESS) -> list[Disc]:
    if len(ladder) == 0:
        raise ParameterError("superpixel ladder is empty")
    discs: list[Disc] = []
    for level, k in enumerate(ladder):
        labels = oversegment(raster, int(k), compactness=compactness)
        discs.extend(discs_from_labels(raster, labels, level, first_id=len(discs)))
    log.debug("%d candidate discs over ladder %s", len(discs), list(ladder))
    return discs


# ---------------------------------------------------------------------------
# graph


@dataclass(frozen=True, eq=False)
class DiscGraph:
    """Undirected weighted graph over disc ids; ``edges`` holds (i, j, affinity) with i < j."""

    ids: tuple[int, ...]
    edges: tuple[tuple[int, int, float], ...]
    discs: dict[int, Disc] = field(default_factory=dict)

    def __post_init__(self):
        adj: dict[int, dict[int, float]] = {i: {} for i in self.ids}
        for i, j, a in self.edges:
            if i not in adj or j not in adj:
                raise ValueError(f"edge ({i}, {j}) has an endpoint outside the graph")
            if i == j or j in adj[i]:
                raise ValueError(f"edge ({i}, {j}) is a loop or duplicate")
            if not 0.0 <= a <= 1.0:
                raise ValueError(f"affinity {a} of edge ({i}, {j}) outside [0, 1]")
            adj[i][j] = a
            adj[j][i] = a
        object.__setattr__(self, "_adj", adj)

    @classmethod
    def from_edges(cls, ids: Iterable[int], edges: Iterable[tuple[int, int, float]],
                   discs: dict[int, Disc] | None = None) -> "DiscGraph":
        norm = sorted((min(i, j), max(i, j), float(a)) for i, j, a in edges)
        return cls(ids=tuple(sorted(ids)), edges=tuple(norm), discs=dict(discs or {}))

    @property
    def adjacency(self) -> dict[int, dict[int, float]]:
        return self._adj

    def neighbors(self, i: int) -> dict[int, float]:
        return self._adj[i]

    def affinity(self, i: int, j: int) -> float:
        return self._adj[i][j]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._adj.get(i, ())

    def with_affinities(self, values: Sequence[float]) -> "DiscGraph":
        if len(values) != len(self.edges):
            raise ValueError("one affinity per edge required")
        edges = tuple((i, j, float(a)) for (i, j, _), a in zip(self.edges, values))
        return DiscGraph(self.ids, edges, self.discs)

    def without_nodes(self, removed: Iterable[int]) -> "DiscGraph":
        gone = set(removed)
        ids = tuple(i for i in self.ids if i not in gone)
        edges = tuple(e for e in self.edges if e[0] not in gone and e[1] not in gone)
        discs = {i: d for i, d in self.discs.items() if i not in gone}
        return DiscGraph(ids, edges, discs)

    def without_edges_below(self, floor: float) -> "DiscGraph":
        return DiscGraph(self.ids, tuple(e for e in self.edges if e[2] >= floor), self.discs)


def _label_plane(discs: Sequence[Disc], shape: tuple[int, int]) -> np.ndarray:
    plane = np.full(shape, -1, dtype=np.int64)
    for d in discs:
        plane[d.ys, d.xs] = d.id
    return plane


def build_graph(discs: Sequence[Disc]) -> DiscGraph:
    """Adjacency over candidate discs with affinities initialised to 0.

    Same scale: 4-neighbouring pixels across the shared border.  Across
    scales: any pixel overlap, unless one disc holds >= 90% of the smaller.
    """
    ids = [d.id for d in discs]
    if len(set(ids)) != len(ids):
        raise ValueError("disc ids must be unique")
    if not discs:
        return DiscGraph((), ())
    shape = discs[0].image_shape
    area = {d.id: d.area for d in discs}
    levels = sorted({d.scale_level for d in discs})
    planes = {lv: _label_plane([d for d in discs if d.scale_level == lv], shape) for lv in levels}

    pairs: set[tuple[int, int]] = set()
    for plane in planes.values():
        for a, b in ((plane[:, :-1], plane[:, 1:]), (plane[:-1, :], plane[1:, :])):
            keep = (a != b) & (a >= 0) & (b >= 0)
            both = np.stack([a[keep], b[keep]], axis=1)
            if len(both):
                both = np.unique(np.sort(both, axis=1), axis=0)
                pairs.update((int(i), int(j)) for i, j in both)

    big = max(ids) + 1
    for ai, la in enumerate(levels):
        for lb in levels[ai + 1:]:
            pa, pb = planes[la], planes[lb]
            keep = (pa >= 0) & (pb >= 0)
            code = pa[keep] * big + pb[keep]
            uniq, overlap = np.unique(code, return_counts=True)
            for c, ov in zip(uniq.tolist(), overlap.tolist()):
                i, j = divmod(c, big)
                if ov < DUPLICATE_CONTAINMENT * min(area[i], area[j]):
                    pairs.add((min(i, j), max(i, j)))

    edges = [(i, j, 0.0) for i, j in sorted(pairs)]
    return DiscGraph.from_edges(ids, edges, {d.id: d for d in discs})


# ---------------------------------------------------------------------------
# debug output


def save_label_png(labels: np.ndarray, path: str | Path) -> None:
    Image.fromarray(labels.astype(np.uint16)).save(path)


def save_boundary_overlay(raster: Raster, labels: np.ndarray, path: str | Path) -> None:
    out = (raster.rgb * 255).astype(np.uint8).copy()
    out[border_mask(labels) & _interior(labels)] = (255, 0, 0)
    Image.fromarray(out).save(path)


def _interior(labels: np.ndarray) -> np.ndarray:
    m = np.ones(labels.shape, dtype=bool)
    m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = False
    return m

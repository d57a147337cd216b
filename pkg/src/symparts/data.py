"""Synthetic ribbon scenes with exact part masks, and the on-disk corpus layout.

Corpus layout::

    root/images/NAME.png
    root/parts/NAME/P.png     one 8-bit mask per part, nonzero = part
    root/figure/NAME.png
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import GenerationError, InputError
from .evaluation import GroundTruthPart
from .segmentation import Raster, load_raster
from .warp import MAX_BEND, MAX_TAPER, DeformableParams, EllipseParams, unwarp_points

log = logging.getLogger(__name__)

MAX_RETRIES = 100


@dataclass(frozen=True)
class SceneSpec:
    n_parts: int = 3
    bend: tuple[float, float] = (-0.7, 0.7)  # kappa * half length
    taper: tuple[float, float] = (-0.4, 0.4)
    clutter: float = 0.4
    size: tuple[int, int] = (128, 128)  # height, width
    half_length: tuple[float, float] = (20.0, 34.0)
    half_width: tuple[float, float] = (5.0, 8.5)

    def __post_init__(self):
        if self.n_parts < 0:
            raise InputError("n_parts must be >= 0")
        if max(abs(v) for v in self.bend) > MAX_BEND or max(abs(v) for v in self.taper) > MAX_TAPER:
            raise InputError("bend/taper ranges exceed the deformable model limits")
        if not 0.0 <= self.clutter <= 1.0:
            raise InputError("clutter must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        d = dict(d)
        for key in ("bend", "taper", "size", "half_length", "half_width"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RibbonParams:
    center: tuple[float, float]
    theta: float
    half_length: float
    half_width: float
    bend: float  # kappa * half_length
    taper: float

    @property
    def warp(self) -> DeformableParams:
        return DeformableParams(EllipseParams(self.center, self.theta, self.half_length, self.half_width),
                                self.bend / self.half_length, self.taper)

    @property
    def area(self) -> float:
        # taper is odd and the bend's area element (1 - kappa v) is odd in v, so both integrate out
        return 4.0 * self.half_length * self.half_width


def ribbon_mask(shape: tuple[int, int], rib: RibbonParams) -> np.ndarray:
    """Pixels whose centres fall inside the bent, tapered band."""
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    uv = unwarp_points(np.stack([xx, yy], axis=-1).astype(np.float64), rib.warp)
    return (np.abs(uv[..., 0]) <= rib.half_length) & (np.abs(uv[..., 1]) <= rib.half_width)


@dataclass(frozen=True, eq=False)
class Scene:
    raster: Raster
    parts: list[GroundTruthPart]
    figure: np.ndarray
    ribbons: list[RibbonParams] = field(default_factory=list)
    image_id: str = ""

    @property
    def image_u8(self) -> np.ndarray:
        return np.round(self.raster.rgb * 255).astype(np.uint8)


def _color(rng: np.random.Generator) -> np.ndarray:
    hue = rng.random()
    sat = rng.uniform(0.45, 0.9)
    val = rng.uniform(0.45, 0.95)
    from colorsys import hsv_to_rgb

    return np.array(hsv_to_rgb(hue, sat, val))


def _distinct_color(rng: np.random.Generator, avoid: list[np.ndarray], min_dist: float = 0.35) -> np.ndarray:
    for _ in range(MAX_RETRIES):
        c = _color(rng)
        if all(np.linalg.norm(c - a) >= min_dist for a in avoid):
            return c
    return c


def _background(rng: np.random.Generator, h: int, w: int, clutter: float) -> np.ndarray:
    """A few large colour patches (Voronoi cells with softened borders) plus fine texture."""
    yy, xx = np.mgrid[0:h, 0:w]
    n = int(rng.integers(3, 7))
    seeds = rng.uniform(0, 1, size=(n, 2)) * (h, w)
    owner = np.argmin((yy[..., None] - seeds[:, 0]) ** 2 + (xx[..., None] - seeds[:, 1]) ** 2, axis=-1)
    palette = np.array([_color(rng) * rng.uniform(0.5, 0.9) for _ in range(n)])
    img = ndimage.gaussian_filter(palette[owner], sigma=(1.0, 1.0, 0))
    texture = ndimage.gaussian_filter(rng.normal(size=(h, w, 3)), sigma=(1.5, 1.5, 0))
    return img + texture * (0.05 + 0.15 * clutter)


def _blob(rng: np.random.Generator, xx: np.ndarray, yy: np.ndarray, cx: float, cy: float) -> np.ndarray:
    """Star-shaped blob with a randomly wobbling radius, so it is rarely symmetric."""
    r0 = rng.uniform(3, 11)
    dx, dy = xx - cx, yy - cy
    phi = np.arctan2(dy, dx)
    radius = np.full(phi.shape, r0)
    for k in (2, 3, 5):
        radius += r0 * rng.uniform(0, 0.25) * np.cos(k * phi + rng.uniform(0, 2 * math.pi))
    return np.hypot(dx, dy) <= radius


def synth_scene(seed: int, spec: SceneSpec = SceneSpec(), image_id: str = "") -> Scene:
    """Patchy textured background, clutter blobs, then ``n_parts`` ribbons painted last.

    Clutter is drawn before the parts and parts are opaque, so part masks are
    exact.  Some clutter blobs borrow a part's colour and sit against that
    part's border, which makes appearance alone ambiguous.
    """
    rng = np.random.default_rng(seed)
    h, w = spec.size
    yy, xx = np.mgrid[0:h, 0:w]
    img = _background(rng, h, w, spec.clutter)

    ribbons: list[RibbonParams] = []
    masks: list[np.ndarray] = []
    taken = np.zeros((h, w), dtype=bool)
    for _ in range(spec.n_parts):
        for _attempt in range(MAX_RETRIES):
            L = rng.uniform(*spec.half_length)
            hw = rng.uniform(*spec.half_width)
            rib = RibbonParams(
                center=(rng.uniform(0.2, 0.8) * w, rng.uniform(0.2, 0.8) * h),
                theta=rng.uniform(-math.pi / 2, math.pi / 2),
                half_length=L, half_width=hw,
                bend=rng.uniform(*spec.bend), taper=rng.uniform(*spec.taper),
            )
            m = ribbon_mask((h, w), rib)
            border = m[:2].any() or m[-2:].any() or m[:, :2].any() or m[:, -2:].any()
            if not border and not (m & taken).any() and m.sum() > 0.8 * rib.area:
                break
        else:
            raise GenerationError(f"seed {seed}: could not place part {len(ribbons)} after {MAX_RETRIES} tries")
        ribbons.append(rib)
        masks.append(m)
        taken |= ndimage.binary_dilation(m, iterations=4)

    colors = [_distinct_color(rng, []) for _ in ribbons]
    rims = [ndimage.binary_dilation(m, iterations=2) & ~m for m in masks]
    for _ in range(int(round(16 * spec.clutter))):
        if colors and rng.random() < 0.4:
            k = int(rng.integers(len(colors)))
            col = colors[k] + rng.normal(scale=0.05, size=3)
            # camouflage: park the blob against the part it imitates
            ry, rx = np.nonzero(rims[k])
            pick = int(rng.integers(len(ry)))
            cy, cx = float(ry[pick]), float(rx[pick])
        else:
            col = _color(rng)
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        img[_blob(rng, xx, yy, cx, cy)] = col

    figure = np.zeros((h, w), dtype=bool)
    for m, col in zip(masks, colors):
        shade = 1.0 + 0.06 * ndimage.gaussian_filter(rng.normal(size=(h, w)), 2.0)
        img[m] = col * shade[m, None]
        figure |= m

    img = img + rng.normal(scale=0.015 + 0.03 * spec.clutter, size=img.shape)
    u8 = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    raster = Raster.from_rgb(u8 / 255.0)
    parts = [GroundTruthPart(image_id, m, str(k)) for k, m in enumerate(masks)]
    return Scene(raster, parts, figure, ribbons, image_id)


# ---------------------------------------------------------------------------
# corpus on disk


def write_scene(root: str | Path, name: str, scene: Scene) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "figure").mkdir(parents=True, exist_ok=True)
    part_dir = root / "parts" / name
    part_dir.mkdir(parents=True, exist_ok=True)
    Image.fromarray(scene.image_u8).save(root / "images" / f"{name}.png")
    Image.fromarray(scene.figure.astype(np.uint8) * 255).save(root / "figure" / f"{name}.png")
    for p in scene.parts:
        Image.fromarray(p.mask.astype(np.uint8) * 255).save(part_dir / f"{p.part_id}.png")


def write_corpus(root: str | Path, count: int, seed: int, spec: SceneSpec = SceneSpec()) -> list[str]:
    names = []
    for k in range(count):
        name = f"scene_{k:04d}"
        write_scene(root, name, synth_scene(seed * 100003 + k, spec, image_id=name))
        names.append(name)
    return names


def _read_mask(path: Path, shape: tuple[int, int]) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except OSError as exc:
        raise InputError(f"{path}: cannot read mask ({exc})") from exc
    if arr.shape != shape:
        raise InputError(f"{path}: mask is {arr.shape[1]}x{arr.shape[0]}, image is {shape[1]}x{shape[0]}")
    return arr > 0


def load_dataset(root: str | Path) -> list[Scene]:
    """Read a corpus in filename order, checking that every mask matches its image."""
    root = Path(root)
    if not root.is_dir():
        raise InputError(f"{root}: dataset directory does not exist")
    image_dir = root / "images"
    images = sorted(p for p in image_dir.glob("*") if p.suffix.lower() in (".png", ".jpg", ".jpeg")) \
        if image_dir.is_dir() else []
    if not images:
        log.warning("%s: no images found, dataset is empty", root)
        return []
    scenes = []
    for path in images:
        name = path.stem
        raster = load_raster(path)
        fig_path = root / "figure" / f"{name}.png"
        if not fig_path.exists():
            raise InputError(f"{fig_path}: missing figure mask for image {name}")
        figure = _read_mask(fig_path, raster.shape)
        part_dir = root / "parts" / name
        if not part_dir.is_dir():
            raise InputError(f"{part_dir}: missing part masks for image {name}")
        parts = [GroundTruthPart(name, _read_mask(p, raster.shape), p.stem)
                 for p in sorted(part_dir.glob("*.png"))]
        scenes.append(Scene(raster, parts, figure, [], name))
    return scenes

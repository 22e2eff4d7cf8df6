"""Bounding boxes from re-rendering: render a scene, render it again with one
layer switched off, and bound the pixels that changed.

Scenes are rendered by a small deterministic compositor (filled rectangles
and a 5x7 dot-matrix text mock) so that every box has pixel-exact ground
truth. Externally rendered image pairs can be fed to :func:`diff_bbox`
directly through :func:`load_png`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from .geometry import BBox

DEFAULT_TOL = 2

RGBA = tuple[int, int, int, int]


@dataclass(frozen=True, eq=False)
class Raster:
    """Row-major RGBA8 image; the pixel array is read-only."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 4) uint8

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"raster dimensions must be >= 1, got {self.width}x{self.height}")
        if self.pixels.shape != (self.height, self.width, 4) or self.pixels.dtype != np.uint8:
            raise ValueError(f"pixel array must be ({self.height}, {self.width}, 4) uint8")
        if self.pixels.flags.writeable:
            # private frozen copy; the caller's array stays writable
            frozen = self.pixels.copy()
            frozen.flags.writeable = False
            object.__setattr__(self, "pixels", frozen)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Raster):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(
            self.pixels, other.pixels
        )

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def pixel(self, x: int, y: int) -> RGBA:
        return tuple(int(v) for v in self.pixels[y, x])  # type: ignore[return-value]


@dataclass(frozen=True)
class PixelBox:
    """Half-open pixel rectangle ``[px1, px2) x [py1, py2)``."""

    px1: int
    py1: int
    px2: int
    py2: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.px1, self.py1, self.px2, self.py2)

    def to_bbox(self, width: int, height: int) -> BBox:
        return BBox(self.px1 / width, self.py1 / height, self.px2 / width, self.py2 / height)


# ---------------------------------------------------------------------------
# scene model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RectShape:
    x: int
    y: int
    w: int
    h: int

    def mask(self) -> tuple[int, int, np.ndarray]:
        return self.x, self.y, np.ones((self.h, self.w), dtype=bool)


def glyph_mask(ch: str) -> np.ndarray:
    """Deterministic 7-row by 5-column dot pattern for one character.

    Whitespace is blank; any other character gets a hash-derived pattern
    with at least one lit dot.
    """
    if ch.isspace():
        return np.zeros((7, 5), dtype=bool)
    digest = hashlib.blake2b(ch.encode("utf-8", "surrogatepass"), digest_size=8).digest()
    bits = int.from_bytes(digest, "big")
    cells = np.array([(bits >> i) & 1 for i in range(35)], dtype=bool).reshape(7, 5)
    if not cells.any():
        cells[3, 2] = True
    return cells


@dataclass(frozen=True)
class TextShape:
    x: int
    y: int
    text: str
    scale: int = 1

    def mask(self) -> tuple[int, int, np.ndarray]:
        s = self.scale
        n = len(self.text)
        width = max(1, n * 6 - 1) * s
        out = np.zeros((7 * s, width), dtype=bool)
        for i, ch in enumerate(self.text):
            g = np.kron(glyph_mask(ch), np.ones((s, s), dtype=bool))
            out[:, i * 6 * s : i * 6 * s + 5 * s] = g
        return self.x, self.y, out


Shape = Union[RectShape, TextShape]


@dataclass(frozen=True)
class Layer:
    id: str
    shape: Shape
    fill: RGBA = (0, 0, 0, 255)
    opacity: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError(f"layer {self.id}: opacity {self.opacity} outside [0, 1]")
        if len(self.fill) != 4 or not all(0 <= c <= 255 for c in self.fill):
            raise ValueError(f"layer {self.id}: fill must be 4 channels in [0, 255]")


@dataclass(frozen=True)
class Scene:
    width: int
    height: int
    background: RGBA = (255, 255, 255, 255)
    layers: tuple[Layer, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not isinstance(self.layers, tuple):
            object.__setattr__(self, "layers", tuple(self.layers))
        ids = [layer.id for layer in self.layers]
        if len(set(ids)) != len(ids):
            raise ValueError("layer ids must be unique")

    def with_layer(self, layer_id: str, **changes) -> "Scene":
        layers = tuple(replace(l, **changes) if l.id == layer_id else l for l in self.layers)
        return replace(self, layers=layers)


def layer_extent(layer: Layer, width: int, height: int) -> PixelBox | None:
    """Pixels the layer's shape covers on the canvas, ignoring color and occlusion."""
    x, y, m = layer.shape.mask()
    ys, xs = np.nonzero(m)
    if len(xs) == 0:
        return None
    x1, x2 = max(0, x + int(xs.min())), min(width, x + int(xs.max()) + 1)
    y1, y2 = max(0, y + int(ys.min())), min(height, y + int(ys.max()) + 1)
    if x1 >= x2 or y1 >= y2:
        return None
    return PixelBox(x1, y1, x2, y2)


# ---------------------------------------------------------------------------
# rendering and differencing
# ---------------------------------------------------------------------------


def _composite(img: np.ndarray, layer: Layer) -> None:
    """Straight-alpha source-over of one layer into ``img`` (float64, 0-255), in place."""
    a = layer.fill[3] / 255.0 * layer.opacity
    if a <= 0.0:
        return
    x, y, m = layer.shape.mask()
    H, W = img.shape[:2]
    x0, y0 = max(0, x), max(0, y)
    x1, y1 = min(W, x + m.shape[1]), min(H, y + m.shape[0])
    if x0 >= x1 or y0 >= y1:
        return
    sub = m[y0 - y : y1 - y, x0 - x : x1 - x]
    region = img[y0:y1, x0:x1]
    dst = region[sub]
    da = dst[:, 3] / 255.0
    oa = a + da * (1.0 - a)
    out = np.empty_like(dst)
    for c in range(3):
        out[:, c] = (layer.fill[c] * a + dst[:, c] * da * (1.0 - a)) / oa
    out[:, 3] = oa * 255.0
    region[sub] = np.clip(np.floor(out + 0.5), 0, 255)


def render_scene(scene: Scene) -> Raster:
    """Composite layers in order over the background; byte-identical for equal scenes."""
    if scene.width < 1 or scene.height < 1:
        raise ValueError(f"canvas dimensions must be >= 1, got {scene.width}x{scene.height}")
    img = np.empty((scene.height, scene.width, 4), dtype=np.float64)
    img[:, :] = scene.background
    for layer in scene.layers:
        _composite(img, layer)
    return Raster(scene.width, scene.height, img.astype(np.uint8))


def diff_bbox(base: Raster, variant: Raster, tol: int = DEFAULT_TOL) -> PixelBox | None:
    """Tight box around pixels where any channel differs by more than ``tol``."""
    if (base.width, base.height) != (variant.width, variant.height):
        raise ValueError(
            f"raster size mismatch: {base.width}x{base.height} vs {variant.width}x{variant.height}"
        )
    delta = np.abs(base.pixels.astype(np.int16) - variant.pixels.astype(np.int16))
    changed = (delta > tol).any(axis=2)
    rows = np.flatnonzero(changed.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(changed.any(axis=0))
    return PixelBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


class InvisibleLayer(Exception):
    """One or more layers left no trace in the baseline render."""

    def __init__(self, layer_ids: list[str], results: list["LayerBox"]):
        self.layer_ids = layer_ids
        self.results = results
        super().__init__(f"invisible layers: {', '.join(layer_ids)}")


@dataclass(frozen=True)
class LayerBox:
    layer_id: str
    pixel_box: PixelBox | None
    bbox: BBox | None

    @property
    def invisible(self) -> bool:
        return self.pixel_box is None


def _toggled(scene: Scene, layer: Layer, toggle: str) -> Scene:
    if toggle == "opacity":
        return scene.with_layer(layer.id, opacity=0.0)
    if toggle == "color":
        r, g, b, a = layer.fill
        return scene.with_layer(layer.id, fill=(255 - r, 255 - g, 255 - b, a))
    raise ValueError(f"unknown toggle mode {toggle!r}")


def extract_block_boxes(
    scene: Scene,
    *,
    tol: int = DEFAULT_TOL,
    toggle: str = "opacity",
    errors: str = "raise",
) -> list[LayerBox]:
    """Recover every layer's box by toggling it and differencing two renders.

    Layer shapes are never touched, only opacity (or color with
    ``toggle="color"``). A layer whose toggle changes no pixel is invisible:
    with ``errors="raise"`` an :class:`InvisibleLayer` is raised after all
    layers were processed; with ``errors="report"`` it is returned with
    ``bbox=None``. Output follows layer order.
    """
    if errors not in ("raise", "report"):
        raise ValueError(f"errors must be 'raise' or 'report', got {errors!r}")
    base = render_scene(scene)
    results: list[LayerBox] = []
    for layer in scene.layers:
        pb = diff_bbox(base, render_scene(_toggled(scene, layer, toggle)), tol)
        bbox = pb.to_bbox(scene.width, scene.height) if pb is not None else None
        results.append(LayerBox(layer.id, pb, bbox))
    missing = [r.layer_id for r in results if r.invisible]
    if missing and errors == "raise":
        raise InvisibleLayer(missing, results)
    return results


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def load_png(path: str | Path) -> Raster:
    from PIL import Image

    with Image.open(path) as im:
        arr = np.array(im.convert("RGBA"), dtype=np.uint8)
    return Raster(arr.shape[1], arr.shape[0], arr)


def save_png(raster: Raster, path: str | Path) -> None:
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(raster.pixels), "RGBA").save(path, format="PNG")


def _shape_from_dict(d: dict) -> Shape:
    kind = d.get("type")
    if kind == "rect":
        return RectShape(int(d["x"]), int(d["y"]), int(d["w"]), int(d["h"]))
    if kind == "text":
        return TextShape(int(d["x"]), int(d["y"]), str(d["text"]), int(d.get("scale", 1)))
    raise ValueError(f"unknown shape type {kind!r}")


def _shape_to_dict(s: Shape) -> dict:
    if isinstance(s, RectShape):
        return {"type": "rect", "x": s.x, "y": s.y, "w": s.w, "h": s.h}
    return {"type": "text", "x": s.x, "y": s.y, "text": s.text, "scale": s.scale}


def scene_from_dict(d: dict) -> Scene:
    canvas = d["canvas"]
    layers = tuple(
        Layer(
            id=str(l["id"]),
            shape=_shape_from_dict(l["shape"]),
            fill=tuple(l.get("fill", (0, 0, 0, 255))),
            opacity=float(l.get("opacity", 1.0)),
        )
        for l in d.get("layers", [])
    )
    return Scene(
        int(canvas["width"]),
        int(canvas["height"]),
        tuple(canvas.get("background", (255, 255, 255, 255))),
        layers,
    )


def scene_to_dict(scene: Scene) -> dict:
    return {
        "canvas": {
            "width": scene.width,
            "height": scene.height,
            "background": list(scene.background),
        },
        "layers": [
            {
                "id": l.id,
                "shape": _shape_to_dict(l.shape),
                "fill": list(l.fill),
                "opacity": l.opacity,
            }
            for l in scene.layers
        ],
    }


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

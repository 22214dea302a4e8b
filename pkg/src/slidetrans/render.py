"""The heuristic drawing stage: estimate the original text styling, fit
translated text into the original line geometry, and composite it onto
the erased image.

Style estimation samples pixels inside the block's token boxes and
splits them with a deterministic 2-means; the smaller cluster is taken
as ink.  Fitting shrinks the font geometrically until the text fits a
tolerance-widened line box or hits a floor, in which case it overflows
rather than truncates.
"""

from __future__ import annotations

import enum
import functools
import logging
import math
import statistics
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from fontTools.ttLib import TTFont, TTLibError
from PIL import ImageDraw, ImageFont

from .errors import FontLoadError, InvalidRegionError
from .geometry import BBox, Color, RasterImage
from .layout import SegmentationLevel, TextBlock
from .translation import TranslatedUnit, TranslationUnit, redistribute

log = logging.getLogger(__name__)

SHRINK_FACTOR = 0.95
WIDTH_TOLERANCE = 1.05
FLOOR_FRAC = 0.5

_LUMA = np.array([0.299, 0.587, 0.114])


class Align(enum.Enum):
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"


@dataclass(frozen=True)
class Style:
    font_px: float
    color: Color
    align: Align

    def __post_init__(self):
        if self.font_px <= 0:
            raise InvalidRegionError(f"font_px must be positive: {self.font_px}")


@runtime_checkable
class FontMetrics(Protocol):
    """measure(text, font_px) -> (width_px, height_px).

    Width must be monotone non-decreasing in font size and in text
    length; empty text measures (0, line_height)."""

    def measure(self, text: str, font_px: float) -> tuple[float, float]:
        ...


@dataclass(frozen=True)
class RenderSpec:
    """One line of target text placed into its original line box."""

    text: str
    target_box: BBox
    final_px: float
    color: Color
    align: Align
    overflow: bool = False


@functools.lru_cache(maxsize=512)
def _load_font(font_file: str, font_px: float) -> ImageFont.FreeTypeFont:
    try:
        return ImageFont.truetype(font_file, font_px)
    except OSError as exc:
        raise FontLoadError(f"cannot load font {font_file}: {exc}") from exc


@functools.lru_cache(maxsize=16)
def _font_codepoints(font_file: str) -> frozenset:
    try:
        tt = TTFont(font_file, fontNumber=0, lazy=True)
    except (OSError, TTLibError) as exc:
        raise FontLoadError(f"cannot load font {font_file}: {exc}") from exc
    try:
        cmap = tt.getBestCmap()
    finally:
        tt.close()
    return frozenset(cmap)


class PILFontMetrics:
    """FontMetrics backed by the same FreeType font used for drawing, so
    measurements agree with rendered output."""

    def __init__(self, font_file: str):
        self.font_file = str(font_file)
        _load_font(self.font_file, 16.0)  # fail fast on a bad file

    def measure(self, text: str, font_px: float) -> tuple[float, float]:
        font = _load_font(self.font_file, font_px)
        ascent, descent = font.getmetrics()
        return float(font.getlength(text)), float(ascent + descent)


def estimate_style(image: RasterImage, block: TextBlock) -> Style:
    """Estimate ink color, font size, and alignment for one block.

    Color comes from a 2-means split (seeded with the darkest and
    brightest pixels) over the pixels inside the block's token boxes:
    text covers less area than background, so the smaller cluster's
    centroid is the ink color, ties going to the darker cluster.
    Font size is 0.9 x the median line height.  Alignment minimizes the
    variance of the per-line left edges, centers, or right edges.
    """
    if not image.bbox.contains(block.bbox):
        raise InvalidRegionError(
            f"block {block.bbox} lies outside image "
            f"{image.width}x{image.height}"
        )
    samples = []
    for tok in block.tokens:
        x0, y0, x1, y1 = tok.poly.bbox.pixel_window(image.width, image.height)
        if x0 < x1 and y0 < y1:
            samples.append(image.pixels[y0:y1, x0:x1].reshape(-1, 3))
    if not samples:
        x0, y0, x1, y1 = block.bbox.pixel_window(image.width, image.height)
        samples.append(image.pixels[y0:y1, x0:x1].reshape(-1, 3))
    pixels = np.concatenate(samples)
    color = _ink_color(pixels) if pixels.size else Color(0, 0, 0)

    font_px = 0.9 * statistics.median(line.height for line in block.lines)

    if len(block.lines) == 1:
        align = Align.LEFT
    else:
        lefts = [l.bbox.x0 for l in block.lines]
        centers = [l.bbox.center[0] for l in block.lines]
        rights = [l.bbox.x1 for l in block.lines]
        candidates = [
            (statistics.pvariance(lefts), 0, Align.LEFT),
            (statistics.pvariance(centers), 1, Align.CENTER),
            (statistics.pvariance(rights), 2, Align.RIGHT),
        ]
        align = min(candidates)[2]
    return Style(font_px=font_px, color=color, align=align)


def _ink_color(pixels: np.ndarray) -> Color:
    """Deterministic 2-means over RGB; returns the smaller cluster's
    centroid rounded half-up."""
    arr = pixels.astype(np.float64)
    lum = arr @ _LUMA
    c_dark = arr[int(np.argmin(lum))]
    c_light = arr[int(np.argmax(lum))]

    def rounded(c: np.ndarray) -> Color:
        return Color(*(int(math.floor(v + 0.5)) for v in c))

    if np.array_equal(c_dark, c_light):
        return rounded(c_dark)

    assign = None
    for _ in range(64):
        d0 = ((arr - c_dark) ** 2).sum(axis=1)
        d1 = ((arr - c_light) ** 2).sum(axis=1)
        new_assign = d0 <= d1
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        if assign.all() or not assign.any():
            break
        c_dark = arr[assign].mean(axis=0)
        c_light = arr[~assign].mean(axis=0)

    n0 = int(assign.sum())
    n1 = len(arr) - n0
    if n1 == 0:
        return rounded(c_dark)
    if n0 == 0:
        return rounded(c_light)
    if n0 != n1:
        return rounded(c_dark if n0 < n1 else c_light)
    return rounded(c_dark if c_dark @ _LUMA <= c_light @ _LUMA else c_light)


def fit_text(
    text: str,
    line_box: BBox,
    style: Style,
    metrics: FontMetrics,
    *,
    shrink: float = SHRINK_FACTOR,
    tolerance: float = WIDTH_TOLERANCE,
    floor_frac: float = FLOOR_FRAC,
) -> RenderSpec:
    """Shrink from style.font_px by `shrink` per step until the measured
    width fits tolerance x box width or the size floors at
    floor_frac x the start size; at the floor the text overflows
    (flagged) rather than being truncated."""
    limit = tolerance * line_box.width
    floor = floor_frac * style.font_px
    px = style.font_px
    if text:
        while metrics.measure(text, px)[0] > limit and px > floor:
            px = max(px * shrink, floor)
    overflow = bool(text) and metrics.measure(text, px)[0] > limit
    return RenderSpec(
        text=text,
        target_box=line_box,
        final_px=px,
        color=style.color,
        align=style.align,
        overflow=overflow,
    )


def plan_block(
    block: TextBlock,
    unit: TranslationUnit,
    translated: TranslatedUnit,
    style: Style,
    metrics: FontMetrics,
    **fit_kwargs,
) -> list[RenderSpec]:
    """Turn one translated unit into per-line render specs.

    Block-level units redistribute the target text over the block's
    lines by source character weight and share a single font size (the
    minimum of the per-line fits).  Line-level units map straight onto
    their line.  Empty target text plans nothing.
    """
    if translated.unit_id != unit.id:
        raise InvalidRegionError(
            f"translated unit {translated.unit_id} does not match {unit.id}"
        )
    target = " ".join(translated.target_text.split())
    if not target:
        return []

    if unit.level is SegmentationLevel.LINE:
        line = block.lines[unit.line_refs[0]]
        return [fit_text(target, line.bbox, style, metrics, **fit_kwargs)]

    lines = [block.lines[i] for i in unit.line_refs]
    weights = [max(len(line.text.replace(" ", "")), 1) for line in lines]
    parts = redistribute(target, weights)
    fitted = [
        fit_text(part, line.bbox, style, metrics, **fit_kwargs)
        for part, line in zip(parts, lines)
        if part
    ]
    if not fitted:
        return []
    shared_px = min(spec.final_px for spec in fitted)
    tolerance = fit_kwargs.get("tolerance", WIDTH_TOLERANCE)
    return [
        RenderSpec(
            text=spec.text,
            target_box=spec.target_box,
            final_px=shared_px,
            color=spec.color,
            align=spec.align,
            overflow=metrics.measure(spec.text, shared_px)[0]
            > tolerance * spec.target_box.width,
        )
        for spec in fitted
    ]


def draw(
    image: RasterImage,
    specs: Sequence[RenderSpec],
    font_file: str,
    metrics: FontMetrics | None = None,
) -> RasterImage:
    """Composite every spec onto a copy of the image.

    Text is anchored per alignment at the box's left edge, center, or
    right edge, and vertically centered (ascender-to-descender midline
    on the box's vertical center), which keeps glyphs inside the padded
    line box for every fit_text result.  Characters without a glyph in
    the font render as the font's replacement glyph, with a warning.

    `metrics` is accepted for signature symmetry with planning but is
    not consulted: the drawing font measures itself.
    """
    out = image.to_pil()
    pen = ImageDraw.Draw(out)
    codepoints = _font_codepoints(str(font_file))
    anchors = {Align.LEFT: "lm", Align.CENTER: "mm", Align.RIGHT: "rm"}
    for spec in specs:
        if not spec.text.strip():
            continue
        missing = sorted(
            {ch for ch in spec.text if not ch.isspace() and ord(ch) not in codepoints}
        )
        if missing:
            log.warning(
                "font %s has no glyph for %s; replacement glyph used",
                font_file, ", ".join(map(repr, missing)),
            )
        font = _load_font(str(font_file), spec.final_px)
        box = spec.target_box
        cy = box.center[1]
        if spec.align is Align.LEFT:
            xy = (box.x0, cy)
        elif spec.align is Align.CENTER:
            xy = (box.center[0], cy)
        else:
            xy = (box.x1, cy)
        pen.text(xy, spec.text, font=font, fill=tuple(spec.color),
                 anchor=anchors[spec.align])
    return RasterImage.from_pil(out, name=image.name)

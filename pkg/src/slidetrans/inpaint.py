"""Erase masks for detected text and background reconstruction.

build_mask turns token polygons into a dilated union mask; inpaint
dispatches to a pluggable backend and enforces the backend contract.
The naive median fill is the deterministic reference backend; a real
model plugs in over HTTP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy import ndimage

from .errors import ContractViolationError, GeometryError, MalformedResponseError
from .geometry import Mask, RasterImage, rasterize_polygon
from .ocr import OCRToken
from .remote import b64_to_image, image_to_b64, mask_to_b64, post_json, require_field

log = logging.getLogger(__name__)

_EIGHT = np.ones((3, 3), dtype=bool)

MID_GRAY = (128, 128, 128)


@dataclass(frozen=True)
class MaskParams:
    """dilation_frac scales each token's mask by its own height (glyph
    fringes grow with text size); ring_width is the sampling ring for the
    naive fill."""

    dilation_frac: float = 0.15
    ring_width: int = 3

    def __post_init__(self):
        if self.dilation_frac < 0:
            raise GeometryError(f"dilation_frac must be >= 0: {self.dilation_frac}")
        if self.ring_width < 1:
            raise GeometryError(f"ring_width must be >= 1: {self.ring_width}")


def build_mask(
    tokens: Sequence[OCRToken], image_dims: tuple[int, int],
    params: MaskParams | None = None,
) -> Mask:
    """Union of every token polygon dilated by dilation_frac x its own
    bbox height, rasterized into a (width, height) image grid."""
    params = params or MaskParams()
    width, height = image_dims
    bits = np.zeros((height, width), dtype=bool)
    for tok in tokens:
        d = params.dilation_frac * tok.poly.bbox.height
        bits |= rasterize_polygon(tok.poly, width, height, dilation=d)
    return Mask(bits)


def _median_color(pixels: np.ndarray) -> np.ndarray:
    """Channel-wise median, rounded half-up to uint8."""
    med = np.median(pixels.reshape(-1, 3).astype(np.float64), axis=0)
    return np.floor(med + 0.5).astype(np.uint8)


def naive_fill(
    image: RasterImage, mask: Mask, params: MaskParams | None = None
) -> RasterImage:
    """Fill each 8-connected mask component with the median color of the
    unmasked pixels in a ring_width ring around it.

    A component whose ring is fully masked gets the whole-image unmasked
    median; a fully masked image becomes mid-gray with a warning.
    Unmasked pixels are never touched, and the fill is idempotent.
    """
    params = params or MaskParams()
    if (mask.width, mask.height) != (image.width, image.height):
        raise GeometryError(
            f"mask {mask.width}x{mask.height} does not match "
            f"image {image.width}x{image.height}"
        )
    if mask.is_empty:
        return image.copy()
    out = image.pixels.copy()
    if mask.bits.all():
        log.warning("every pixel is masked; filling with mid-gray")
        out[:, :] = MID_GRAY
        return RasterImage(out, name=image.name)

    unmasked = ~mask.bits
    labels, n_comp = ndimage.label(mask.bits, structure=_EIGHT)
    for comp_id in range(1, n_comp + 1):
        comp = labels == comp_id
        ring = (
            ndimage.binary_dilation(comp, structure=_EIGHT, iterations=params.ring_width)
            & unmasked
        )
        sample = image.pixels[ring] if ring.any() else image.pixels[unmasked]
        out[comp] = _median_color(sample)
    return RasterImage(out, name=image.name)


@runtime_checkable
class InpaintBackend(Protocol):
    """Contract: same output dimensions, out-of-mask pixels unchanged."""

    name: str
    concurrent: bool

    def fill(self, image: RasterImage, mask: Mask) -> RasterImage:
        ...


class NaiveInpaintBackend:
    """Reference backend wrapping naive_fill."""

    def __init__(self, params: MaskParams | None = None):
        self.name = "naive"
        self.concurrent = True
        self.params = params or MaskParams()

    def fill(self, image: RasterImage, mask: Mask) -> RasterImage:
        return naive_fill(image, mask, self.params)


def inpaint(image: RasterImage, mask: Mask, backend: InpaintBackend) -> RasterImage:
    """Dispatch to a backend and enforce its contract.

    An empty mask short-circuits: the backend is never called and the
    input comes back bit-identical.
    """
    if (mask.width, mask.height) != (image.width, image.height):
        raise GeometryError(
            f"mask {mask.width}x{mask.height} does not match "
            f"image {image.width}x{image.height}"
        )
    if mask.is_empty:
        return image.copy()
    out = backend.fill(image, mask)
    if (out.width, out.height) != (image.width, image.height):
        raise ContractViolationError(
            f"backend {backend.name} changed dimensions: "
            f"{image.width}x{image.height} -> {out.width}x{out.height}"
        )
    unmasked = ~mask.bits
    if not np.array_equal(out.pixels[unmasked], image.pixels[unmasked]):
        raise ContractViolationError(
            f"backend {backend.name} modified pixels outside the mask"
        )
    return out


class RemoteInpaintBackend:
    """HTTP adapter: POST {image, mask} to /inpaint, read {image}."""

    def __init__(self, url: str, name: str | None = None, timeout: float = 120.0):
        self.url = url.rstrip("/")
        self.name = name or f"inpaint@{self.url}"
        self.concurrent = True
        self.timeout = timeout

    def fill(self, image: RasterImage, mask: Mask) -> RasterImage:
        payload = {"image": image_to_b64(image), "mask": mask_to_b64(mask)}
        doc = post_json(self.name, f"{self.url}/inpaint", payload, self.timeout)
        data = require_field(self.name, doc, "image")
        try:
            return b64_to_image(data, name=image.name)
        except Exception as exc:
            raise MalformedResponseError(self.name, f"bad image payload: {exc}") from exc

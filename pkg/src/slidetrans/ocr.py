"""OCR backend contract, the annotation-file backend, and token filtering.

Real OCR engines plug in over HTTP; tests and the ground-truth
evaluation condition use the annotation backend, which replays tokens
from a sidecar JSON file keyed by image id.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .errors import DatasetError, GeometryError, MalformedResponseError, UnknownImageError
from .geometry import Polygon, RasterImage, clamp_polygon
from .remote import image_to_b64, post_json, require_field

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OCRToken:
    """One recognized text fragment with its detection polygon.

    line_id/block_id are optional ground-truth segmentation labels
    carried through annotation sidecars; live backends leave them None.
    """

    text: str
    poly: Polygon
    conf: float = 1.0
    line_id: str | None = None
    block_id: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise GeometryError("token text is empty")
        if not (0.0 <= self.conf <= 1.0):
            raise GeometryError(f"token confidence {self.conf} outside [0, 1]")

    def to_dict(self) -> dict:
        d = {"text": self.text, "poly": self.poly.to_list(), "conf": self.conf}
        if self.line_id is not None:
            d["line"] = self.line_id
        if self.block_id is not None:
            d["block"] = self.block_id
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OCRToken":
        return cls(
            text=d["text"],
            poly=Polygon.from_list(d["poly"]),
            conf=float(d.get("conf", 1.0)),
            line_id=d.get("line"),
            block_id=d.get("block"),
        )


@dataclass(frozen=True)
class OCRConfig:
    """min_conf is the downstream filter threshold; recognize itself never
    drops tokens.  lang_hint is forwarded to backends that accept one."""

    min_conf: float = 0.5
    lang_hint: str | None = None

    def __post_init__(self):
        if not (0.0 <= self.min_conf <= 1.0):
            raise GeometryError(f"min_conf {self.min_conf} outside [0, 1]")


@runtime_checkable
class OCRBackend(Protocol):
    """Contract for text detectors/recognizers.

    recognize must be deterministic for a fixed configuration and input.
    Non-concurrent backends are serialized by the orchestrator.
    """

    name: str
    languages: tuple[str, ...]
    concurrent: bool

    def recognize(self, image: RasterImage, cfg: OCRConfig) -> list[OCRToken]:
        ...


def recognize(image: RasterImage, cfg: OCRConfig, backend: OCRBackend) -> list[OCRToken]:
    """Run a backend and clamp every polygon into the image bounds.

    No confidence filtering happens here.  Tokens whose polygons collapse
    to zero area after clamping (fully outside the image) are dropped
    with a warning.
    """
    out = []
    for tok in backend.recognize(image, cfg):
        pts = clamp_polygon(tok.poly.points, image.width, image.height)
        try:
            poly = Polygon(tuple(pts))
        except GeometryError:
            log.warning(
                "dropping token %r from %s: polygon outside image bounds",
                tok.text, backend.name,
            )
            continue
        out.append(
            OCRToken(tok.text, poly, tok.conf, tok.line_id, tok.block_id)
        )
    return out


def filter_tokens(tokens: Sequence[OCRToken], min_conf: float) -> list[OCRToken]:
    """Keep tokens with conf >= min_conf, preserving order."""
    return [t for t in tokens if t.conf >= min_conf]


def load_sidecar_tokens(path: str | os.PathLike) -> dict[str, list[OCRToken]]:
    """Load an annotation sidecar: image id -> token list."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"annotation sidecar not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"annotation sidecar {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DatasetError(f"annotation sidecar {path} must be a JSON object")
    return {
        image_id: [OCRToken.from_dict(t) for t in tokens]
        for image_id, tokens in doc.items()
    }


def write_sidecar_tokens(
    path: str | os.PathLike, tokens_by_image: dict[str, Sequence[OCRToken]]
) -> None:
    doc = {
        image_id: [t.to_dict() for t in tokens]
        for image_id, tokens in tokens_by_image.items()
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=2, sort_keys=True)


class AnnotationBackend:
    """Replays ground-truth tokens from a sidecar file, keyed by image id
    (the image's file name)."""

    def __init__(self, sidecar_path: str | os.PathLike):
        self.name = "annotation"
        self.languages = ("*",)
        self.concurrent = True
        self.sidecar_path = str(sidecar_path)
        self._tokens = load_sidecar_tokens(sidecar_path)

    def recognize(self, image: RasterImage, cfg: OCRConfig) -> list[OCRToken]:
        if image.name is None:
            raise UnknownImageError("image has no id; annotation lookup needs one")
        if image.name not in self._tokens:
            raise UnknownImageError(
                f"image id {image.name!r} not present in {self.sidecar_path}"
            )
        return list(self._tokens[image.name])


def annotation_backend(sidecar_path: str | os.PathLike) -> AnnotationBackend:
    return AnnotationBackend(sidecar_path)


class RemoteOCRBackend:
    """HTTP adapter: POST {image, lang_hint} to /ocr, read {tokens: [...]}."""

    def __init__(self, url: str, name: str | None = None, timeout: float = 60.0):
        self.url = url.rstrip("/")
        self.name = name or f"ocr@{self.url}"
        self.languages = ("*",)
        self.concurrent = True
        self.timeout = timeout

    def recognize(self, image: RasterImage, cfg: OCRConfig) -> list[OCRToken]:
        payload = {"image": image_to_b64(image), "lang_hint": cfg.lang_hint}
        doc = post_json(self.name, f"{self.url}/ocr", payload, self.timeout)
        raw = require_field(self.name, doc, "tokens")
        if not isinstance(raw, list):
            raise MalformedResponseError(self.name, f"'tokens' is not a list: {raw!r:.200}")
        try:
            return [OCRToken.from_dict(t) for t in raw]
        except (KeyError, TypeError, GeometryError) as exc:
            raise MalformedResponseError(self.name, f"bad token entry: {exc}") from exc

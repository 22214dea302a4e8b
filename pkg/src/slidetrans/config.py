"""Configuration: one JSON document, overridable per key by environment
variables (prefix SLIDETRANS_) and CLI flags, resolved into live backend
objects at startup so a bad selector fails before any work starts.

Backend selectors:
    OCR       "annotation:PATH" (or "annotation" + the annotations key),
              or an http(s) URL
    layout    "geometric"
    MT        "identity", "dictionary:PATH", or an http(s) URL
    inpaint   "naive", or an http(s) URL
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from matplotlib import font_manager

from .errors import ConfigError, DatasetError, GeometryError, SlidetransError
from .inpaint import MaskParams, NaiveInpaintBackend, RemoteInpaintBackend
from .layout import GeometricLayoutBackend, LayoutParams
from .ocr import AnnotationBackend, RemoteOCRBackend
from .render import FLOOR_FRAC, SHRINK_FACTOR, WIDTH_TOLERANCE
from .translation import (
    DictionaryBackend,
    IdentityBackend,
    LangPair,
    RemoteMTBackend,
    load_dictionary,
)

ENV_PREFIX = "SLIDETRANS_"


@dataclass(frozen=True)
class RenderParams:
    """Fitting constants; see the render module for their meaning."""

    shrink: float = SHRINK_FACTOR
    tolerance: float = WIDTH_TOLERANCE
    floor_frac: float = FLOOR_FRAC

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ConfigError(f"shrink must be in (0, 1): {self.shrink}")
        if self.tolerance <= 0:
            raise ConfigError(f"tolerance must be positive: {self.tolerance}")
        if not 0 < self.floor_frac <= 1:
            raise ConfigError(f"floor_frac must be in (0, 1]: {self.floor_frac}")

    def fit_kwargs(self) -> dict:
        return {
            "shrink": self.shrink,
            "tolerance": self.tolerance,
            "floor_frac": self.floor_frac,
        }


@dataclass
class PipelineConfig:
    src: str = "en"
    tgt: str = "de"
    level: str = "block"
    ocr: str = "annotation"
    layout: str = "geometric"
    mt: str = "identity"
    inpaint: str = "naive"
    annotations: str | None = None
    font_map: dict[str, str] = field(default_factory=dict)
    out_dir: str = "out"
    jobs: int = 1
    min_conf: float = 0.5
    context: str = "crop"
    merge_paragraphs: bool = False
    layout_params: LayoutParams = field(default_factory=LayoutParams)
    mask_params: MaskParams = field(default_factory=MaskParams)
    render: RenderParams = field(default_factory=RenderParams)

    def __post_init__(self):
        if self.level not in ("line", "block"):
            raise ConfigError(f"level must be 'line' or 'block': {self.level!r}")
        if self.context not in ("crop", "full"):
            raise ConfigError(f"context must be 'crop' or 'full': {self.context!r}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1: {self.jobs}")
        if not 0.0 <= self.min_conf <= 1.0:
            raise ConfigError(f"min_conf must be in [0, 1]: {self.min_conf}")

    @property
    def pair(self) -> LangPair:
        return LangPair(self.src, self.tgt)

    def font_file(self) -> str:
        """Font for the target language, falling back to the bundled
        DejaVu Sans when the map has no entry."""
        path = self.font_map.get(self.tgt) or self.font_map.get("default")
        if path:
            if not Path(path).is_file():
                raise ConfigError(f"font file not found: {path}")
            return path
        return font_manager.findfont("DejaVu Sans")


_NESTED = {
    "layout_params": LayoutParams,
    "mask_params": MaskParams,
    "render": RenderParams,
}
_FIELDS = {f.name for f in dataclasses.fields(PipelineConfig)}


def _coerce(raw: str) -> Any:
    """Environment values are JSON when they parse, bare strings otherwise."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _env_overrides(environ) -> dict:
    out: dict[str, Any] = {}
    for key, raw in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        name = key[len(ENV_PREFIX):].lower()
        if "__" in name:
            outer, inner = name.split("__", 1)
            if outer in _NESTED:
                out.setdefault(outer, {})[inner] = _coerce(raw)
                continue
        if name in _FIELDS:
            out[name] = _coerce(raw)
    return out


def _merge(base: dict, extra: dict) -> dict:
    for key, value in extra.items():
        if key in _NESTED and isinstance(value, dict):
            base.setdefault(key, {})
            base[key].update(value)
        else:
            base[key] = value
    return base


def load_config(
    path: str | os.PathLike | None = None,
    overrides: dict | None = None,
    environ=None,
) -> PipelineConfig:
    """Defaults <- JSON file <- environment <- explicit overrides."""
    settings: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        unknown = sorted(set(doc) - _FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        _merge(settings, doc)
    _merge(settings, _env_overrides(os.environ if environ is None else environ))
    _merge(settings, {k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(set(settings) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    try:
        for key, cls in _NESTED.items():
            if key in settings and not isinstance(settings[key], cls):
                settings[key] = cls(**settings[key])
        return PipelineConfig(**settings)
    except ConfigError:
        raise
    except (GeometryError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


@dataclass
class Backends:
    """Resolved backend objects for the four pluggable stages."""

    ocr: Any
    layout: Any
    mt: Any
    inpaint: Any


def _is_url(sel: str) -> bool:
    return sel.startswith(("http://", "https://"))


def _resolve_ocr(sel: str, annotations: str | None):
    if _is_url(sel):
        return RemoteOCRBackend(sel)
    kind, _, arg = sel.partition(":")
    if kind == "annotation":
        path = arg or annotations
        if not path:
            raise ConfigError(
                "annotation OCR needs a sidecar path "
                "('annotation:PATH' or the annotations key)"
            )
        try:
            return AnnotationBackend(path)
        except DatasetError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown OCR backend selector: {sel!r}")


def _resolve_layout(sel: str):
    if sel == "geometric":
        return GeometricLayoutBackend()
    raise ConfigError(f"unknown layout backend selector: {sel!r}")


def _resolve_mt(sel: str):
    if _is_url(sel):
        return RemoteMTBackend(sel)
    kind, _, arg = sel.partition(":")
    if kind == "identity":
        return IdentityBackend()
    if kind == "dictionary":
        if not arg:
            raise ConfigError("dictionary MT needs a table path: 'dictionary:PATH'")
        try:
            return DictionaryBackend(load_dictionary(arg))
        except (ConfigError, OSError) as exc:
            raise ConfigError(f"cannot load dictionary {arg}: {exc}") from exc
    raise ConfigError(f"unknown MT backend selector: {sel!r}")


def _resolve_inpaint(sel: str):
    if _is_url(sel):
        return RemoteInpaintBackend(sel)
    if sel == "naive":
        return NaiveInpaintBackend()
    raise ConfigError(f"unknown inpaint backend selector: {sel!r}")


def resolve_backends(config: PipelineConfig) -> Backends:
    """Build every configured backend up front; any unresolvable selector
    aborts before work starts."""
    try:
        return Backends(
            ocr=_resolve_ocr(config.ocr, config.annotations),
            layout=_resolve_layout(config.layout),
            mt=_resolve_mt(config.mt),
            inpaint=_resolve_inpaint(config.inpaint),
        )
    except ConfigError:
        raise
    except SlidetransError as exc:
        raise ConfigError(f"backend resolution failed: {exc}") from exc

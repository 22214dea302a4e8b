"""End-to-end image translation.

One image flows through five timed stages in a fixed order: OCR, Layout
Analysis, Multimodal Translation, Inpainting, Drawing.  Every run yields
a sidecar document recording what each stage saw and produced; on a
stage failure the partial sidecar is attached to the raised error so it
can still be written out.

Batches fan out over a thread pool; stages within one image always run
sequentially, and backends that declare themselves non-concurrent are
wrapped in a serializing gate.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from time import perf_counter
from typing import Callable, Sequence

from .config import Backends, PipelineConfig
from .errors import ConfigError, DatasetError, StageFailureError
from .geometry import RasterImage
from .inpaint import build_mask, inpaint
from .layout import SegmentationLevel, TextBlock, make_units
from .metrics import STAGES, StageTiming
from .ocr import OCRConfig, filter_tokens, recognize
from .render import PILFontMetrics, draw, estimate_style, plan_block
from .translation import TranslationUnit, translate_units

log = logging.getLogger(__name__)

_FORMAT = "slidetrans-sidecar"
CONTEXT_PAD_FRAC = 0.1


def _zero_timings() -> dict[str, float]:
    return {stage: 0.0 for stage in STAGES}


@dataclass
class SidecarDocument:
    """Per-image record of one pipeline run.

    Serializes to deterministic JSON (sorted keys); `parse` inverts
    `serialize` losslessly.  `stable_dict` drops the wall-clock timings,
    leaving only content that must be reproducible across runs.
    """

    image: str = ""
    pair: str = ""
    level: str = ""
    tokens: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    units: list = field(default_factory=list)
    translations: list = field(default_factory=list)
    specs: list = field(default_factory=list)
    timings: dict = field(default_factory=_zero_timings)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "format": _FORMAT,
            "version": 1,
            "image": self.image,
            "pair": self.pair,
            "level": self.level,
            "tokens": self.tokens,
            "blocks": self.blocks,
            "units": self.units,
            "translations": self.translations,
            "specs": self.specs,
            "timings": self.timings,
            "warnings": self.warnings,
        }

    def stable_dict(self) -> dict:
        doc = self.to_dict()
        del doc["timings"]
        return doc

    def serialize(self) -> str:
        return json.dumps(
            self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False
        ) + "\n"

    @classmethod
    def parse(cls, text: str) -> "SidecarDocument":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"sidecar is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
            raise DatasetError("not a sidecar document")
        kwargs = {
            name: doc[name]
            for name in (
                "image", "pair", "level", "tokens", "blocks", "units",
                "translations", "specs", "timings", "warnings",
            )
            if name in doc
        }
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")


@dataclass
class PipelineResult:
    image: RasterImage
    sidecar: SidecarDocument

    @property
    def timings(self) -> list[StageTiming]:
        return [
            StageTiming(stage, self.sidecar.timings.get(stage, 0.0))
            for stage in STAGES
        ]


def attach_context(
    units: Sequence[TranslationUnit],
    blocks: Sequence[TextBlock],
    image: RasterImage,
    mode: str = "crop",
) -> list[TranslationUnit]:
    """Attach visual context to each unit: a padded crop of its block,
    or the whole image in `full` mode."""
    if mode == "full":
        return [unit.with_crop(image) for unit in units]
    crops: dict[int, RasterImage] = {}
    out = []
    for unit in units:
        crop = crops.get(unit.block_ref)
        if crop is None:
            box = blocks[unit.block_ref].bbox.pad_frac(CONTEXT_PAD_FRAC)
            crop = image.crop(box)
            crops[unit.block_ref] = crop
        out.append(unit.with_crop(crop))
    return out


def translate_image(
    image: RasterImage, config: PipelineConfig, backends: Backends
) -> PipelineResult:
    """Run one image through OCR, layout analysis, translation,
    inpainting, and drawing.

    Style estimation reads the original pixels (its cost is charged to
    Drawing); inpainting erases only the kept token regions; drawing
    composites onto the erased background.  Any stage error is re-raised
    as a StageFailureError naming the stage, with the partial sidecar on
    its `sidecar` attribute.
    """
    pair = config.pair
    level = SegmentationLevel(config.level)
    font_file = config.font_file()
    fit_kwargs = config.render.fit_kwargs()
    sidecar = SidecarDocument(
        image=image.name or "", pair=str(pair), level=level.value
    )

    def stage(name: str, fn: Callable):
        start = perf_counter()
        try:
            result = fn()
        except Exception as exc:
            sidecar.timings[name] = perf_counter() - start
            failure = StageFailureError(name, exc)
            failure.sidecar = sidecar
            raise failure from exc
        sidecar.timings[name] = perf_counter() - start
        return result

    def run_ocr():
        found = recognize(
            image,
            OCRConfig(min_conf=config.min_conf, lang_hint=pair.src),
            backends.ocr,
        )
        return found, filter_tokens(found, config.min_conf)

    found, kept = stage("OCR", run_ocr)
    sidecar.tokens = [tok.to_dict() for tok in found]
    if len(kept) < len(found):
        sidecar.warnings.append(
            f"{len(found) - len(kept)} tokens below min_conf {config.min_conf}"
        )

    def run_layout():
        blocks = backends.layout.analyze(kept, config.layout_params)
        return blocks, make_units(blocks, level)

    blocks, units = stage("Layout Analysis", run_layout)
    token_index = {id(tok): i for i, tok in enumerate(found)}
    sidecar.blocks = [
        {
            "bbox": block.bbox.to_list(),
            "lines": [
                {
                    "bbox": line.bbox.to_list(),
                    "text": line.text,
                    "tokens": [token_index[id(tok)] for tok in line.tokens],
                }
                for line in block.lines
            ],
        }
        for block in blocks
    ]
    sidecar.units = [
        {
            "id": unit.id,
            "source_text": unit.source_text,
            "level": unit.level.value,
            "block_ref": unit.block_ref,
            "line_refs": list(unit.line_refs),
        }
        for unit in units
    ]

    def run_mt():
        if not units:
            return []
        in_context = attach_context(units, blocks, image, config.context)
        return translate_units(in_context, pair, backends.mt)

    translated = stage("Multimodal Translation", run_mt)
    sidecar.translations = [
        {
            "unit_id": tr.unit_id,
            "target_text": tr.target_text,
            "backend": tr.backend_name,
        }
        for tr in translated
    ]

    def run_inpaint():
        mask = build_mask(kept, (image.width, image.height), config.mask_params)
        return inpaint(image, mask, backends.inpaint)

    erased = stage("Inpainting", run_inpaint)

    def run_draw():
        metrics = PILFontMetrics(font_file)
        styles = {}
        specs = []
        for unit, tr in zip(units, translated):
            block = blocks[unit.block_ref]
            style = styles.get(unit.block_ref)
            if style is None:
                style = estimate_style(image, block)
                styles[unit.block_ref] = style
            specs.extend(
                plan_block(block, unit, tr, style, metrics, **fit_kwargs)
            )
        return specs, draw(erased, specs, font_file, metrics)

    specs, rendered = stage("Drawing", run_draw)
    sidecar.specs = [
        {
            "text": spec.text,
            "box": spec.target_box.to_list(),
            "font_px": spec.final_px,
            "color": list(spec.color),
            "align": spec.align.value,
            "overflow": spec.overflow,
        }
        for spec in specs
    ]
    for spec in specs:
        if spec.overflow:
            sidecar.warnings.append(
                f"text overflows its line box: {spec.text!r}"
            )
    return PipelineResult(image=rendered, sidecar=sidecar)


def _gated(backend, method_name: str):
    """Wrap a non-concurrent backend so only one call runs at a time."""
    if getattr(backend, "concurrent", True):
        return backend
    lock = threading.Lock()
    inner = getattr(backend, method_name)

    class _Gate:
        def __getattr__(self, attr):
            return getattr(backend, attr)

    gate = _Gate()

    def serialized(*args, **kwargs):
        with lock:
            return inner(*args, **kwargs)

    setattr(gate, method_name, serialized)
    return gate


def gate_backends(backends: Backends) -> Backends:
    return Backends(
        ocr=_gated(backends.ocr, "recognize"),
        layout=_gated(backends.layout, "analyze"),
        mt=_gated(backends.mt, "translate"),
        inpaint=_gated(backends.inpaint, "fill"),
    )


def image_localizer(
    config: PipelineConfig, backends: Backends
) -> Callable[[RasterImage], PipelineResult]:
    """Bind config and backends into the callable shape deck
    localization expects."""
    gated = gate_backends(backends)

    def run(image: RasterImage) -> PipelineResult:
        return translate_image(image, config, gated)

    return run


@dataclass
class BatchItem:
    """Outcome for one image of a batch."""

    source: str
    image_path: str | None
    sidecar_path: str | None
    error: Exception | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def translate_batch(
    paths: Sequence[str],
    config: PipelineConfig,
    backends: Backends,
    out_dir: str | Path | None = None,
) -> list[BatchItem]:
    """Translate many images with config.jobs workers.

    The translated image keeps its file name under the output directory;
    the sidecar sits next to it as <stem>.sidecar.json and is written
    even when a stage fails.  A failure in one image never stops the
    others.
    """
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gated = gate_backends(backends)

    def work(path: str) -> BatchItem:
        src = Path(path)
        image_out = out / src.name
        sidecar_out = out / f"{src.stem}.sidecar.json"
        if image_out.resolve() == src.resolve():
            return BatchItem(
                path, None, None,
                ConfigError(f"output would overwrite input: {path}"),
            )
        try:
            image = RasterImage.open(path)
        except (OSError, ValueError) as exc:
            return BatchItem(
                path, None, None,
                DatasetError(f"cannot decode image {path}: {exc}"),
            )
        try:
            result = translate_image(image, config, gated)
        except StageFailureError as exc:
            written = None
            partial = getattr(exc, "sidecar", None)
            if partial is not None:
                partial.save(sidecar_out)
                written = str(sidecar_out)
            return BatchItem(path, None, written, exc)
        result.image.save(image_out)
        result.sidecar.save(sidecar_out)
        return BatchItem(path, str(image_out), str(sidecar_out), None)

    paths = [str(p) for p in paths]
    if config.jobs == 1 or len(paths) <= 1:
        return [work(p) for p in paths]
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        return list(pool.map(work, paths))

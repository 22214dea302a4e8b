"""Presentation-deck localization.

A deck is a zipped-XML container; editable text lives in ``a:t`` nodes
inside slide parts and travels the text-only translation path, while
raster pictures under ``ppt/media/`` travel the full image pipeline.
Everything else (vector shapes, layouts, masters, notes) is copied
through byte-identical.
"""

from __future__ import annotations

import io
import json
import logging
import posixpath
import re
import xml.etree.ElementTree as ET
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from PIL import Image as PILImage

from .errors import DeckError, LocatorMismatchError, UnsupportedPairError
from .geometry import RasterImage
from .metrics import StageTiming
from .translation import LangPair, MTBackend, redistribute

log = logging.getLogger(__name__)

_A_NS = "http://schemas.openxmlformats.org/drawingml/2006/main"
_T_TAG = f"{{{_A_NS}}}t"
_P_TAG = f"{{{_A_NS}}}p"

_SLIDE_RE = re.compile(r"^ppt/slides/slide(\d+)\.xml$")
_REQUIRED_PARTS = ("[Content_Types].xml", "ppt/presentation.xml")
_FORMAT_BY_EXT = {
    ".png": "PNG",
    ".jpg": "JPEG",
    ".jpeg": "JPEG",
    ".bmp": "BMP",
    ".gif": "GIF",
}


@dataclass
class DeckDocument:
    """An opened presentation container.

    `parts` maps part name to raw bytes in original archive order;
    `infos` keeps the source zip metadata so saving preserves
    compression settings and timestamps per part.
    """

    parts: dict[str, bytes]
    infos: dict[str, zipfile.ZipInfo] = field(default_factory=dict)
    source: str | None = None

    @classmethod
    def open(cls, path: str | Path) -> "DeckDocument":
        try:
            with zipfile.ZipFile(path) as zf:
                infos = {i.filename: i for i in zf.infolist() if not i.is_dir()}
                parts = {name: zf.read(name) for name in infos}
        except (zipfile.BadZipFile, OSError) as exc:
            raise DeckError(f"cannot open deck {path}: {exc}") from exc
        deck = cls(parts=parts, infos=infos, source=str(path))
        deck.validate()
        return deck

    def validate(self) -> None:
        missing = [p for p in _REQUIRED_PARTS if p not in self.parts]
        if missing:
            raise DeckError(
                f"{self.source or 'deck'} lacks required parts: {missing}"
            )

    @property
    def slides(self) -> list[str]:
        """Slide part names in slide-number order."""
        found = []
        for name in self.parts:
            m = _SLIDE_RE.match(name)
            if m:
                found.append((int(m.group(1)), name))
        return [name for _, name in sorted(found)]

    def save(self, path: str | Path) -> None:
        """Write a new archive; never modifies the source file."""
        with zipfile.ZipFile(path, "w") as zf:
            for name, data in self.parts.items():
                src = self.infos.get(name)
                info = zipfile.ZipInfo(
                    name,
                    date_time=src.date_time if src else (1980, 1, 1, 0, 0, 0),
                )
                info.compress_type = (
                    src.compress_type if src else zipfile.ZIP_DEFLATED
                )
                if src:
                    info.external_attr = src.external_attr
                zf.writestr(info, data)


@dataclass(frozen=True)
class EditableRun:
    """One formatting run of editable slide text.

    The locator is (part, index of the text node among all text nodes in
    that part) plus a snapshot of the original text, so stale locators
    are detected at replacement time.  `paragraph` is the ordinal of the
    containing paragraph, used only by the merge-paragraph mode.
    """

    part: str
    index: int
    text: str
    paragraph: int | None = None


@dataclass(frozen=True)
class EmbeddedImage:
    """One raster picture part."""

    part_name: str
    data: bytes

    def image(self) -> RasterImage:
        return _decode_image(self.part_name, self.data)


class ImageOutcome(Protocol):
    """What the image pipeline hands back for one picture."""

    image: RasterImage
    timings: Sequence[StageTiming]


@dataclass
class DeckReport:
    """Per-run and per-image outcomes of one localization pass."""

    runs: list[dict]
    images: list[dict]
    warnings: list[str]
    timings: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "format": "slidetrans-report",
            "version": 1,
            "runs": self.runs,
            "images": self.images,
            "warnings": self.warnings,
            "timings": self.timings,
        }

    def serialize(self) -> str:
        return json.dumps(
            self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False
        ) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")


def _parse_part(data: bytes, part: str):
    """Parse one XML part, keeping its namespace prefix declarations."""
    try:
        events = ET.iterparse(io.BytesIO(data), events=("start-ns",))
        prefixes = [payload for _, payload in events]
        root = events.root
    except ET.ParseError as exc:
        raise DeckError(f"cannot parse deck part {part}: {exc}") from exc
    if root is None:
        raise DeckError(f"cannot parse deck part {part}: empty document")
    return prefixes, root


def _serialize_part(prefixes, root) -> bytes:
    for prefix, uri in prefixes:
        if prefix != "xml":
            ET.register_namespace(prefix, uri)
    return ET.tostring(root, encoding="UTF-8", xml_declaration=True)


def extract_editable(deck: DeckDocument) -> list[EditableRun]:
    """Every non-empty text run in slide parts, in document order.

    Run granularity is the formatting run: adjacent runs are never
    merged here.
    """
    runs = []
    for part in deck.slides:
        _, root = _parse_part(deck.parts[part], part)
        para_of = {}
        for p_idx, paragraph in enumerate(root.iter(_P_TAG)):
            for node in paragraph.iter(_T_TAG):
                para_of[id(node)] = p_idx
        for idx, node in enumerate(root.iter(_T_TAG)):
            text = node.text or ""
            if not text:
                continue
            runs.append(
                EditableRun(
                    part=part,
                    index=idx,
                    text=text,
                    paragraph=para_of.get(id(node)),
                )
            )
    return runs


def replace_editable(
    deck: DeckDocument,
    translations: Iterable[tuple[EditableRun, str]],
) -> DeckDocument:
    """Replace located text nodes; all untouched parts stay byte-identical."""
    by_part: dict[str, list[tuple[EditableRun, str]]] = {}
    for run, new_text in translations:
        by_part.setdefault(run.part, []).append((run, new_text))

    new_parts = dict(deck.parts)
    for part, pairs in by_part.items():
        if part not in deck.parts:
            raise LocatorMismatchError(f"part {part} is not in the deck")
        prefixes, root = _parse_part(deck.parts[part], part)
        nodes = list(root.iter(_T_TAG))
        for run, new_text in pairs:
            if run.index >= len(nodes):
                raise LocatorMismatchError(
                    f"{part} has no text node #{run.index}"
                )
            node = nodes[run.index]
            if (node.text or "") != run.text:
                raise LocatorMismatchError(
                    f"{part} text node #{run.index} changed: expected "
                    f"{run.text!r}, found {node.text!r}"
                )
            node.text = new_text
        new_parts[part] = _serialize_part(prefixes, root)
    return DeckDocument(parts=new_parts, infos=deck.infos, source=deck.source)


def _image_part_names(deck: DeckDocument) -> list[str]:
    return sorted(
        name
        for name in deck.parts
        if name.startswith("ppt/media/")
        and posixpath.splitext(name)[1].lower() in _FORMAT_BY_EXT
    )


def _decode_image(part_name: str, data: bytes) -> RasterImage:
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            return RasterImage.from_pil(
                im.convert("RGB"), name=posixpath.basename(part_name)
            )
    except (OSError, ValueError, SyntaxError) as exc:
        raise DeckError(f"cannot decode image part {part_name}: {exc}") from exc


def _encode_image(part_name: str, raster: RasterImage) -> bytes:
    fmt = _FORMAT_BY_EXT[posixpath.splitext(part_name)[1].lower()]
    buf = io.BytesIO()
    raster.to_pil().save(buf, format=fmt)
    return buf.getvalue()


def extract_images(deck: DeckDocument) -> list[EmbeddedImage]:
    """Every decodable raster image part, once each, ordered by part name.

    Undecodable parts are skipped with a warning.
    """
    out = []
    for name in _image_part_names(deck):
        data = deck.parts[name]
        try:
            _decode_image(name, data)
        except DeckError as exc:
            log.warning("%s", exc)
            continue
        out.append(EmbeddedImage(part_name=name, data=data))
    return out


def localize_deck(
    deck: DeckDocument,
    pair: LangPair,
    text_backend: MTBackend,
    image_pipeline: Callable[[RasterImage], ImageOutcome],
    *,
    merge_paragraphs: bool = False,
) -> tuple[DeckDocument, DeckReport]:
    """Translate editable runs via the text backend and picture parts via
    the image pipeline; returns a new deck plus a report.

    By default each formatting run is translated on its own, which is
    structure-safe.  With `merge_paragraphs` the runs of a paragraph are
    joined, translated once, and redistributed over the original runs by
    character weight (better MT context, degraded per-run formatting).

    A failing or undecodable picture keeps its original bytes and is
    flagged in the report; it never aborts the deck.
    """
    if not text_backend.supports_pair(pair):
        raise UnsupportedPairError(
            f"backend {text_backend.name} does not support {pair}"
        )

    warnings: list[str] = []
    run_entries: list[dict] = []
    translations: list[tuple[EditableRun, str]] = []
    runs = extract_editable(deck)

    def translate(text: str) -> str:
        if not text.strip():
            return text
        return text_backend.translate(text, pair)

    if merge_paragraphs:
        groups: dict[tuple, list[EditableRun]] = {}
        for run in runs:
            if run.paragraph is None:
                key = (run.part, "node", run.index)
            else:
                key = (run.part, "para", run.paragraph)
            groups.setdefault(key, []).append(run)
        for group in groups.values():
            joined = "".join(r.text for r in group)
            target = translate(joined)
            if len(group) == 1:
                split = [target]
            else:
                weights = [max(len(r.text.replace(" ", "")), 1) for r in group]
                split = redistribute(target, weights)
            for run, new_text in zip(group, split):
                translations.append((run, new_text))
    else:
        for run in runs:
            translations.append((run, translate(run.text)))

    for run, target in translations:
        run_entries.append(
            {
                "part": run.part,
                "index": run.index,
                "source": run.text,
                "target": target,
            }
        )

    out = replace_editable(deck, translations)

    new_parts = dict(out.parts)
    image_entries: list[dict] = []
    stage_totals: dict[str, float] = {}
    for name in _image_part_names(deck):
        try:
            raster = _decode_image(name, deck.parts[name])
        except DeckError as exc:
            warnings.append(str(exc))
            image_entries.append(
                {"part": name, "status": "skipped", "detail": str(exc)}
            )
            continue
        try:
            outcome = image_pipeline(raster)
            new_parts[name] = _encode_image(name, outcome.image)
        except Exception as exc:  # fault isolation: keep the original part
            warnings.append(f"image pipeline failed for {name}: {exc}")
            image_entries.append(
                {"part": name, "status": "failed", "detail": str(exc)}
            )
            continue
        for timing in outcome.timings:
            stage_totals[timing.stage] = (
                stage_totals.get(timing.stage, 0.0) + timing.seconds
            )
        image_entries.append({"part": name, "status": "translated", "detail": None})

    report = DeckReport(
        runs=run_entries,
        images=image_entries,
        warnings=warnings,
        timings=stage_totals,
    )
    result = DeckDocument(parts=new_parts, infos=deck.infos, source=deck.source)
    return result, report

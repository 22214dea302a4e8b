"""Translation backend contracts, unit translation, and redistribution of
translated block text back onto the original line structure.

Backends come in two modalities: TEXT (plain string in, string out) and
TEXT_IMAGE (additionally sees a crop of the slide around the unit, which
disambiguates short labels).  Deterministic mock backends (identity,
dictionary) live here; real models plug in over HTTP.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .errors import ConfigError, MalformedResponseError, UnsupportedPairError
from .geometry import RasterImage
from .layout import SegmentationLevel
from .remote import image_to_b64, post_json, require_field

# ISO 639-1 two-letter codes.
ISO_639_1 = frozenset(
    """aa ab ae af ak am an ar as av ay az ba be bg bh bi bm bn bo br bs ca ce
    ch co cr cs cu cv cy da de dv dz ee el en eo es et eu fa ff fi fj fo fr fy
    ga gd gl gn gu gv ha he hi ho hr ht hu hy hz ia id ie ig ii ik io is it iu
    ja jv ka kg ki kj kk kl km kn ko kr ks ku kv kw ky la lb lg li ln lo lt lu
    lv mg mh mi mk ml mn mr ms mt my na nb nd ne ng nl nn no nr nv ny oc oj om
    or os pa pi pl ps pt qu rm rn ro ru rw sa sc sd se sg si sk sl sm sn so sq
    sr ss st su sv sw ta te tg th ti tk tl tn to tr ts tt tw ty ug uk ur uz ve
    vi vo wa wo xh yi yo za zh zu""".split()
)

TEXT = "text"
TEXT_IMAGE = "text+image"


@dataclass(frozen=True)
class LangPair:
    src: str
    tgt: str

    def __post_init__(self):
        for code in (self.src, self.tgt):
            if code not in ISO_639_1:
                raise ConfigError(f"{code!r} is not an ISO 639-1 language code")
        if self.src == self.tgt:
            raise ConfigError(f"source and target are both {self.src!r}")

    def __str__(self):
        return f"{self.src}-{self.tgt}"


@dataclass(frozen=True)
class TranslationUnit:
    """One piece of source text to translate, tied back to its layout.

    block_ref indexes the ordered block list; line_refs are global
    reading-order line indices.  context_crop, when present, is the
    block region of the slide (padded) for image-aware backends.
    """

    id: str
    source_text: str
    level: SegmentationLevel
    block_ref: int
    line_refs: tuple[int, ...]
    context_crop: RasterImage | None = None

    def __post_init__(self):
        if not self.line_refs:
            raise ConfigError(f"unit {self.id} references no lines")
        if not self.source_text:
            raise ConfigError(f"unit {self.id} has empty source text")

    def with_crop(self, crop: RasterImage) -> "TranslationUnit":
        return TranslationUnit(
            self.id, self.source_text, self.level, self.block_ref,
            self.line_refs, crop,
        )


@dataclass(frozen=True)
class TranslatedUnit:
    unit_id: str
    target_text: str
    backend_name: str


@runtime_checkable
class MTBackend(Protocol):
    """Contract for translation backends.

    TEXT backends ignore the context image; TEXT_IMAGE backends accept
    one (and may still work without it).
    """

    name: str
    modality: str
    concurrent: bool

    def supports_pair(self, pair: LangPair) -> bool:
        ...

    def translate(self, text: str, pair: LangPair,
                  context: RasterImage | None = None) -> str:
        ...


def translate_units(
    units: Sequence[TranslationUnit], pair: LangPair, backend: MTBackend
) -> list[TranslatedUnit]:
    """Translate every unit, preserving count and order.

    Empty target text is permitted (the unit is later skipped at render
    time); an unsupported language pair fails fast.
    """
    if not backend.supports_pair(pair):
        raise UnsupportedPairError(f"{backend.name} does not translate {pair}")
    out = []
    for unit in units:
        context = unit.context_crop if backend.modality == TEXT_IMAGE else None
        target = backend.translate(unit.source_text, pair, context)
        out.append(TranslatedUnit(unit.id, target, backend.name))
    return out


def redistribute(target_text: str, line_weights: Sequence[float]) -> list[str]:
    """Split translated text into one string per original line.

    Words are assigned to lines in order; each boundary lands on the word
    boundary whose cumulative character count (spaces excluded) is
    nearest the line's cumulative weight fraction, ties going to the
    later boundary.  When there are at least as many words as lines every
    line gets at least one word; otherwise the leading lines get one word
    each and the trailing lines come back empty.
    """
    if not line_weights:
        raise ValueError("redistribute needs at least one line weight")
    if any(w <= 0 for w in line_weights):
        raise ValueError(f"line weights must be positive: {line_weights}")
    k = len(line_weights)
    words = target_text.split()
    n = len(words)
    if k == 1:
        return [" ".join(words)]
    if n == 0:
        return [""] * k

    total_w = float(sum(line_weights))
    cum_w = []
    acc = 0.0
    for w in line_weights:
        acc += w
        cum_w.append(acc / total_w)

    # cum_chars[s] = characters in the first s words (spaces excluded)
    cum_chars = [0]
    for w in words:
        cum_chars.append(cum_chars[-1] + len(w))
    total_c = float(cum_chars[-1])

    bounds = []
    prev = 0
    for i in range(k - 1):
        lo = prev + 1 if prev < n else n
        hi = n - (k - 1 - i) if n >= k else max(lo, n - (k - 1 - i))
        best = lo
        best_err = abs(cum_chars[lo] / total_c - cum_w[i])
        for s in range(lo + 1, hi + 1):
            err = abs(cum_chars[s] / total_c - cum_w[i])
            if err <= best_err:
                best, best_err = s, err
        bounds.append(best)
        prev = best
    bounds.append(n)

    out = []
    start = 0
    for b in bounds:
        out.append(" ".join(words[start:b]))
        start = b
    return out


class IdentityBackend:
    """Returns the source text unchanged; supports every pair."""

    def __init__(self):
        self.name = "identity"
        self.modality = TEXT
        self.concurrent = True

    def supports_pair(self, pair: LangPair) -> bool:
        return True

    def translate(self, text: str, pair: LangPair,
                  context: RasterImage | None = None) -> str:
        return text


_WORD_CORE_RE = re.compile(r"^(\W*)(.*?)(\W*)$", re.UNICODE | re.DOTALL)


class DictionaryBackend:
    """Word-by-word lookup against a fixed table.

    Matching is case-insensitive on the word core; punctuation hugging a
    word is preserved around the replacement.  Unmatched words pass
    through unchanged (optionally through `default`).  Declared as a
    TEXT_IMAGE backend so it exercises the context-crop plumbing, though
    it never reads the pixels.
    """

    def __init__(self, table: dict[str, str], default=None, name: str = "dictionary"):
        self.name = name
        self.modality = TEXT_IMAGE
        self.concurrent = True
        self.table = {k.lower(): v for k, v in table.items()}
        self.default = default

    def supports_pair(self, pair: LangPair) -> bool:
        return True

    def _word(self, word: str) -> str:
        m = _WORD_CORE_RE.match(word)
        prefix, core, suffix = m.group(1), m.group(2), m.group(3)
        if core and core.lower() in self.table:
            return f"{prefix}{self.table[core.lower()]}{suffix}"
        return self.default(word) if self.default else word

    def translate(self, text: str, pair: LangPair,
                  context: RasterImage | None = None) -> str:
        return "\n".join(
            " ".join(self._word(w) for w in line.split())
            for line in text.split("\n")
        )


def dictionary_backend(table: dict[str, str], default=None) -> DictionaryBackend:
    return DictionaryBackend(table, default=default)


def load_dictionary(path: str | os.PathLike) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in doc.items()
    ):
        raise ConfigError(f"dictionary {path} must map strings to strings")
    return doc


class RemoteMTBackend:
    """HTTP adapter: POST {text, src, tgt, image?} to /translate."""

    def __init__(self, url: str, name: str | None = None, timeout: float = 60.0):
        self.url = url.rstrip("/")
        self.name = name or f"mt@{self.url}"
        self.modality = TEXT_IMAGE
        self.concurrent = True
        self.timeout = timeout

    def supports_pair(self, pair: LangPair) -> bool:
        return True

    def translate(self, text: str, pair: LangPair,
                  context: RasterImage | None = None) -> str:
        payload = {"text": text, "src": pair.src, "tgt": pair.tgt}
        if context is not None:
            payload["image"] = image_to_b64(context)
        doc = post_json(self.name, f"{self.url}/translate", payload, self.timeout)
        target = require_field(self.name, doc, "text")
        if not isinstance(target, str):
            raise MalformedResponseError(self.name, f"'text' is not a string: {target!r}")
        return target

"""Group OCR tokens into lines and blocks with a reading order.

The grouping here is purely geometric: tokens chain into a line when
they overlap vertically and sit close horizontally; lines chain into a
block when they are vertically adjacent, share horizontal extent or a
left edge, and have similar heights.  Both relations are closed
transitively.  A model-based grouper can replace this via the
LayoutBackend contract.
"""

from __future__ import annotations

import enum
import statistics
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, runtime_checkable

from .errors import GeometryError
from .geometry import BBox, bbox_union, h_gap, h_overlap_ratio, v_gap, v_overlap
from .ocr import OCRToken

# Lines whose left edges differ by at most this fraction of the median
# line height count as left-aligned for block grouping.
_LEFT_EDGE_FACTOR = 0.2


@dataclass(frozen=True)
class LayoutParams:
    """Thresholds for the geometric grouper.  Defaults target horizontal
    Latin-like slide text and are all overridable."""

    v_overlap_min: float = 0.5
    token_gap_factor: float = 1.5
    line_gap_factor: float = 1.5
    h_overlap_min: float = 0.3
    size_ratio_band: tuple[float, float] = (2 / 3, 3 / 2)

    def __post_init__(self):
        if min(self.v_overlap_min, self.token_gap_factor,
               self.line_gap_factor, self.h_overlap_min) <= 0:
            raise GeometryError("layout thresholds must be positive")
        lo, hi = self.size_ratio_band
        if not (lo < 1.0 < hi):
            raise GeometryError(f"size ratio band must straddle 1: ({lo}, {hi})")


@dataclass(frozen=True)
class TextLine:
    """One visual text line: tokens sorted left to right."""

    tokens: tuple[OCRToken, ...]
    bbox: BBox

    def __post_init__(self):
        if not self.tokens:
            raise GeometryError("a text line needs at least one token")

    @classmethod
    def from_tokens(cls, tokens: Sequence[OCRToken]) -> "TextLine":
        ordered = sorted(
            range(len(tokens)), key=lambda i: (tokens[i].poly.bbox.center[0], i)
        )
        toks = tuple(tokens[i] for i in ordered)
        return cls(toks, bbox_union([t.poly.bbox for t in toks]))

    @property
    def height(self) -> float:
        return self.bbox.height

    @property
    def text(self) -> str:
        return " ".join(t.text for t in self.tokens)


@dataclass(frozen=True)
class TextBlock:
    """A group of lines sorted top to bottom."""

    lines: tuple[TextLine, ...]
    bbox: BBox

    def __post_init__(self):
        if not self.lines:
            raise GeometryError("a text block needs at least one line")

    @classmethod
    def from_lines(cls, lines: Sequence[TextLine]) -> "TextBlock":
        ordered = sorted(
            range(len(lines)), key=lambda i: (lines[i].bbox.center[1], i)
        )
        lns = tuple(lines[i] for i in ordered)
        return cls(lns, bbox_union([l.bbox for l in lns]))

    @property
    def text(self) -> str:
        return "\n".join(l.text for l in self.lines)

    @property
    def tokens(self) -> tuple[OCRToken, ...]:
        return tuple(t for line in self.lines for t in line.tokens)


class SegmentationLevel(enum.Enum):
    LINE = "line"
    BLOCK = "block"


def _components(n: int, related: Callable[[int, int], bool]) -> list[list[int]]:
    """Connected components of the transitive closure via union-find."""
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        for j in range(i + 1, n):
            if related(i, j):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[rj] = ri

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def tokens_joinable(a: OCRToken, b: OCRToken, params: LayoutParams) -> bool:
    """Pairwise line relation: vertical overlap and a small horizontal gap."""
    ba, bb = a.poly.bbox, b.poly.bbox
    if v_overlap(ba, bb) < params.v_overlap_min:
        return False
    return h_gap(ba, bb) <= params.token_gap_factor * min(ba.height, bb.height)


def group_lines(tokens: Sequence[OCRToken], params: LayoutParams | None = None) -> list[TextLine]:
    """Partition tokens into lines under the transitive closure of
    tokens_joinable.  Output order is top-to-bottom, then left-to-right."""
    params = params or LayoutParams()
    comps = _components(
        len(tokens), lambda i, j: tokens_joinable(tokens[i], tokens[j], params)
    )
    lines = [TextLine.from_tokens([tokens[i] for i in comp]) for comp in comps]
    return sorted(lines, key=lambda l: (l.bbox.y0, l.bbox.x0))


def lines_joinable(a: TextLine, b: TextLine, median_height: float,
                   params: LayoutParams) -> bool:
    """Pairwise block relation: small vertical gap, shared horizontal
    extent or left edge, and similar heights."""
    if v_gap(a.bbox, b.bbox) > params.line_gap_factor * median_height:
        return False
    aligned = (
        h_overlap_ratio(a.bbox, b.bbox) >= params.h_overlap_min
        or abs(a.bbox.x0 - b.bbox.x0) <= _LEFT_EDGE_FACTOR * median_height
    )
    if not aligned:
        return False
    lo, hi = params.size_ratio_band
    ratio = a.height / b.height
    return lo <= ratio <= hi


def group_blocks(lines: Sequence[TextLine], params: LayoutParams | None = None) -> list[TextBlock]:
    """Partition lines into blocks under the transitive closure of
    lines_joinable; the median height is taken over all input lines
    (a single line's median is its own height)."""
    params = params or LayoutParams()
    if not lines:
        return []
    med = statistics.median(l.height for l in lines)
    comps = _components(
        len(lines), lambda i, j: lines_joinable(lines[i], lines[j], med, params)
    )
    blocks = [TextBlock.from_lines([lines[i] for i in comp]) for comp in comps]
    return sorted(blocks, key=lambda b: (b.bbox.y0, b.bbox.x0))


def order_blocks(blocks: Sequence[TextBlock]) -> list[TextBlock]:
    """Reading order: stable sort by top edge, then left edge."""
    return sorted(blocks, key=lambda b: (b.bbox.y0, b.bbox.x0))


def make_units(blocks: Sequence[TextBlock], level: SegmentationLevel) -> list:
    """Build translation units from ordered blocks.

    LINE yields one unit per line (tokens joined by spaces); BLOCK yields
    one unit per block (lines joined by newlines).  Units reference their
    block by index in the ordered block list and their lines by index
    within that block; unit ids number lines globally in reading order.
    """
    from .translation import TranslationUnit

    units = []
    line_no = 0
    for block_idx, block in enumerate(blocks):
        if level is SegmentationLevel.BLOCK:
            units.append(
                TranslationUnit(
                    id=f"block:{block_idx}",
                    source_text=block.text,
                    level=level,
                    block_ref=block_idx,
                    line_refs=tuple(range(len(block.lines))),
                )
            )
        else:
            for local_idx in range(len(block.lines)):
                units.append(
                    TranslationUnit(
                        id=f"line:{line_no + local_idx}",
                        source_text=block.lines[local_idx].text,
                        level=level,
                        block_ref=block_idx,
                        line_refs=(local_idx,),
                    )
                )
        line_no += len(block.lines)
    return units


@runtime_checkable
class LayoutBackend(Protocol):
    """Contract mirroring the OCR backend so a model-based grouper can
    stand in for the geometric one."""

    name: str
    concurrent: bool

    def analyze(self, tokens: Sequence[OCRToken], params: LayoutParams) -> list[TextBlock]:
        ...


class GeometricLayoutBackend:
    """Reference implementation: geometric grouping + reading order."""

    def __init__(self):
        self.name = "geometric"
        self.concurrent = True

    def analyze(self, tokens: Sequence[OCRToken], params: LayoutParams) -> list[TextBlock]:
        return order_blocks(group_blocks(group_lines(tokens, params), params))

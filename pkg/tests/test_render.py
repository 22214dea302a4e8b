"""Style estimation, text fitting, block planning, and drawing."""

import logging
import random
import statistics

import numpy as np
import pytest
from matplotlib import font_manager

from slidetrans.errors import FontLoadError, InvalidRegionError
from slidetrans.geometry import BBox, Color, Polygon, RasterImage
from slidetrans.layout import SegmentationLevel, TextBlock, TextLine
from slidetrans.ocr import OCRToken
from slidetrans.render import (
    FLOOR_FRAC,
    SHRINK_FACTOR,
    Align,
    PILFontMetrics,
    RenderSpec,
    Style,
    draw,
    estimate_style,
    fit_text,
    plan_block,
)
from slidetrans.translation import TranslatedUnit, TranslationUnit

FONT = font_manager.findfont("DejaVu Sans")


class StubMetrics:
    """Width proportional to size and character count; exact and fast."""

    def __init__(self, factor=0.6):
        self.factor = factor

    def measure(self, text, font_px):
        return self.factor * font_px * len(text), 1.17 * font_px


def tok(text, x0, y0, x1, y1):
    return OCRToken(text, Polygon.from_bbox(BBox(x0, y0, x1, y1)))


def one_line_block(text="Exit", box=(0, 0, 40, 10)):
    return TextBlock.from_lines([TextLine.from_tokens([tok(text, *box)])])


def style(px=9.0, align=Align.LEFT):
    return Style(font_px=px, color=Color(0, 0, 0), align=align)


def shrink_seq(px, floor, steps):
    for _ in range(steps):
        px = max(px * SHRINK_FACTOR, floor)
    return px


class TestStyle:
    def test_rejects_nonpositive_size(self):
        with pytest.raises(InvalidRegionError):
            Style(font_px=0, color=Color(0, 0, 0), align=Align.LEFT)


class TestFitText:
    def test_fits_immediately(self):
        spec = fit_text("Hi", BBox(0, 0, 100, 10), style(20), StubMetrics())
        assert spec.final_px == 20 and not spec.overflow
        assert spec.target_box == BBox(0, 0, 100, 10)

    def test_three_shrink_steps(self):
        # widths 120, 114, 108.3, then 102.885 <= 1.05 * 100
        spec = fit_text("abcdefghij", BBox(0, 0, 100, 10), style(20), StubMetrics())
        assert spec.final_px == shrink_seq(20.0, 10.0, 3)
        assert spec.final_px == pytest.approx(17.1475)
        assert not spec.overflow

    def test_floors_and_flags_overflow(self):
        spec = fit_text("x" * 100, BBox(0, 0, 10, 10), style(20), StubMetrics())
        assert spec.final_px == 10.0
        assert spec.overflow

    def test_empty_text(self):
        spec = fit_text("", BBox(0, 0, 50, 10), style(20), StubMetrics())
        assert spec.final_px == 20 and not spec.overflow

    def test_contract_random(self):
        rng = random.Random(47)
        metrics = StubMetrics()
        for _ in range(200):
            text = "a" * rng.randint(0, 30)
            box = BBox(0, 0, rng.uniform(5, 200), 10)
            st = style(rng.uniform(5, 40))
            spec = fit_text(text, box, st, metrics)
            limit = 1.05 * box.width
            floor = FLOOR_FRAC * st.font_px
            assert floor - 1e-9 <= spec.final_px <= st.font_px + 1e-9
            if not text:
                assert spec.final_px == st.font_px and not spec.overflow
            elif spec.overflow:
                assert spec.final_px == pytest.approx(floor)
                assert metrics.measure(text, spec.final_px)[0] > limit
            else:
                assert metrics.measure(text, spec.final_px)[0] <= limit + 1e-9

    def test_monotone_in_text_length(self):
        metrics = StubMetrics()
        box = BBox(0, 0, 60, 10)
        st = style(18)
        sizes = [fit_text("a" * n, box, st, metrics).final_px for n in range(1, 40)]
        assert all(a >= b for a, b in zip(sizes, sizes[1:]))


class TestEstimateStyle:
    def test_dark_ink_on_light_background(self):
        im = RasterImage.new(40, 20, (255, 255, 255))
        im.pixels[7:13, 8:30] = 0
        st = estimate_style(im, one_line_block("Exit", (5, 5, 35, 15)))
        assert st.color == Color(0, 0, 0)
        assert st.align is Align.LEFT

    def test_light_ink_on_dark_background(self):
        im = RasterImage.new(40, 20, (0, 0, 0))
        im.pixels[7:13, 8:30] = 255
        st = estimate_style(im, one_line_block("Exit", (5, 5, 35, 15)))
        assert st.color == Color(255, 255, 255)

    def test_font_size_from_median_line_height(self):
        im = RasterImage.new(50, 40, (255, 255, 255))
        lines = [
            TextLine.from_tokens([tok("a", 0, 0, 40, 10)]),
            TextLine.from_tokens([tok("b", 0, 12, 40, 22)]),
            TextLine.from_tokens([tok("c", 0, 24, 40, 36)]),
        ]
        st = estimate_style(im, TextBlock.from_lines(lines))
        assert st.font_px == pytest.approx(9.0)

    def test_single_line_defaults_left(self):
        im = RasterImage.new(40, 20, (255, 255, 255))
        # centered-looking single line still reads as left-aligned
        st = estimate_style(im, one_line_block("Hi", (15, 5, 25, 15)))
        assert st.align is Align.LEFT

    @pytest.mark.parametrize(
        "spans,want",
        [
            ([(0, 30), (0, 50), (0, 40)], Align.LEFT),
            ([(10, 30), (0, 40), (5, 35)], Align.CENTER),
            ([(10, 40), (0, 40), (20, 40)], Align.RIGHT),
        ],
    )
    def test_alignment_examples(self, spans, want):
        im = RasterImage.new(60, 40, (255, 255, 255))
        lines = [
            TextLine.from_tokens([tok("x", x0, 12 * i, x1, 12 * i + 10)])
            for i, (x0, x1) in enumerate(spans)
        ]
        assert estimate_style(im, TextBlock.from_lines(lines)).align is want

    def test_alignment_matches_variance_oracle(self):
        rng = random.Random(53)
        im = RasterImage.new(140, 220, (255, 255, 255))
        for _ in range(30):
            count = rng.randint(2, 5)
            lines = []
            for i in range(count):
                x0 = rng.uniform(0, 60)
                x1 = x0 + rng.uniform(10, 60)
                y0 = i * 14.0
                lines.append(TextLine.from_tokens([tok("w", x0, y0, x1, y0 + 10)]))
            block = TextBlock.from_lines(lines)
            lefts = [l.bbox.x0 for l in block.lines]
            centers = [l.bbox.center[0] for l in block.lines]
            rights = [l.bbox.x1 for l in block.lines]
            want = min(
                (statistics.pvariance(lefts), 0, Align.LEFT),
                (statistics.pvariance(centers), 1, Align.CENTER),
                (statistics.pvariance(rights), 2, Align.RIGHT),
            )[2]
            assert estimate_style(im, block).align is want

    def test_subpixel_tokens_default_black(self):
        im = RasterImage.new(20, 20, (200, 200, 200))
        st = estimate_style(im, one_line_block("i", (5.2, 5.2, 5.4, 5.4)))
        assert st.color == Color(0, 0, 0)

    def test_block_outside_image(self):
        im = RasterImage.new(20, 10, (255, 255, 255))
        with pytest.raises(InvalidRegionError):
            estimate_style(im, one_line_block("Exit", (5, 5, 35, 15)))


def line_unit(source="Exit", uid="line:0", ref=0):
    return TranslationUnit(
        id=uid,
        source_text=source,
        level=SegmentationLevel.LINE,
        block_ref=0,
        line_refs=(ref,),
    )


def block_unit(source, refs, uid="block:0"):
    return TranslationUnit(
        id=uid,
        source_text=source,
        level=SegmentationLevel.BLOCK,
        block_ref=0,
        line_refs=tuple(refs),
    )


class TestPlanBlock:
    def test_line_level_single_spec(self):
        block = one_line_block("Exit", (0, 0, 40, 10))
        unit = line_unit()
        out = plan_block(
            block, unit, TranslatedUnit("line:0", "Ausgang", "dict"),
            style(9), StubMetrics(),
        )
        assert len(out) == 1
        assert out[0].text == "Ausgang"
        assert out[0].target_box == block.lines[0].bbox
        assert out[0].final_px <= 9

    def test_unit_id_mismatch(self):
        block = one_line_block()
        with pytest.raises(InvalidRegionError):
            plan_block(
                block, line_unit(), TranslatedUnit("line:7", "x", "b"),
                style(), StubMetrics(),
            )

    def test_empty_target_plans_nothing(self):
        block = one_line_block()
        out = plan_block(
            block, line_unit(), TranslatedUnit("line:0", "   ", "b"),
            style(), StubMetrics(),
        )
        assert out == []

    def test_target_whitespace_normalized(self):
        block = one_line_block()
        out = plan_block(
            block, line_unit(), TranslatedUnit("line:0", "  Aus\n gang ", "b"),
            style(), StubMetrics(),
        )
        assert out[0].text == "Aus gang"

    def two_line_block(self):
        l1 = TextLine.from_tokens(
            [tok("aaaa", 0, 0, 48, 10), tok("bbbb", 52, 0, 100, 10)]
        )
        l2 = TextLine.from_tokens([tok("cc", 0, 12, 15, 22)])
        return TextBlock.from_lines([l1, l2])

    def test_block_level_shares_minimum_size(self):
        block = self.two_line_block()
        unit = block_unit("aaaa bbbb\ncc", (0, 1))
        metrics = StubMetrics()
        st = style(9)
        out = plan_block(
            block, unit, TranslatedUnit("block:0", "dddd eeee ffff", "b"),
            st, metrics,
        )
        assert [s.text for s in out] == ["dddd eeee", "ffff"]
        # the narrow second line dictates the shared size
        solo = [
            fit_text(s.text, s.target_box, st, metrics).final_px for s in out
        ]
        assert out[0].final_px == out[1].final_px == min(solo) == solo[1]
        assert not any(s.overflow for s in out)

    def test_block_level_identity_round_trip(self):
        l1 = TextLine.from_tokens([tok("Exit", 0, 0, 40, 10)])
        l2 = TextLine.from_tokens([tok("only", 0, 12, 40, 22)])
        block = TextBlock.from_lines([l1, l2])
        unit = block_unit("Exit\nonly", (0, 1))
        out = plan_block(
            block, unit, TranslatedUnit("block:0", "Exit only", "id"),
            style(9), StubMetrics(),
        )
        assert [s.text for s in out] == ["Exit", "only"]
        assert [s.target_box for s in out] == [l1.bbox, l2.bbox]

    def test_short_target_skips_trailing_lines(self):
        lines = [
            TextLine.from_tokens([tok("one", 0, 14 * i, 40, 14 * i + 10)])
            for i in range(3)
        ]
        block = TextBlock.from_lines(lines)
        unit = block_unit("one\none\none", (0, 1, 2))
        out = plan_block(
            block, unit, TranslatedUnit("block:0", "Hi", "b"),
            style(9), StubMetrics(),
        )
        assert len(out) == 1 and out[0].text == "Hi"
        assert out[0].target_box == lines[0].bbox


def diff_pixels(before, after):
    return np.argwhere((before.pixels != after.pixels).any(axis=2))


def in_window(points, window):
    x0, y0, x1, y1 = window
    return all(y0 <= y < y1 and x0 <= x < x1 for y, x in points)


class TestDraw:
    def spec(self, text="Hi", box=(20, 20, 120, 40), px=14.0,
             color=(200, 0, 0), align=Align.LEFT):
        return RenderSpec(
            text=text, target_box=BBox(*box), final_px=px,
            color=Color(*color), align=align,
        )

    def test_no_specs_no_change(self):
        im = RasterImage.new(50, 30, (255, 255, 255), name="s.png")
        out = draw(im, [], FONT)
        assert out.pixels_equal(im) and out.name == "s.png"

    def test_whitespace_spec_skipped(self):
        im = RasterImage.new(50, 30, (255, 255, 255))
        out = draw(im, [self.spec(text="   ", box=(5, 5, 45, 25))], FONT)
        assert out.pixels_equal(im)

    @pytest.mark.parametrize("align", list(Align))
    def test_changes_stay_inside_padded_box(self, align):
        im = RasterImage.new(200, 60, (255, 255, 255))
        spec = self.spec(align=align)
        out = draw(im, [spec], FONT)
        changed = diff_pixels(im, out)
        assert len(changed)
        window = spec.target_box.pad_frac(0.1).pixel_window(200, 60)
        assert in_window(changed, window)

    def test_two_disjoint_specs(self):
        im = RasterImage.new(140, 64, (255, 255, 255))
        a = self.spec("one", (10, 10, 90, 28), px=12.0)
        b = self.spec("two", (10, 34, 90, 52), px=12.0, align=Align.RIGHT)
        out = draw(im, [a, b], FONT)
        changed = diff_pixels(im, out)
        wa = a.target_box.pad_frac(0.1).pixel_window(140, 64)
        wb = b.target_box.pad_frac(0.1).pixel_window(140, 64)
        assert any(in_window([p], wa) for p in changed)
        assert any(in_window([p], wb) for p in changed)
        assert all(in_window([p], wa) or in_window([p], wb) for p in changed)

    def test_color_applied(self):
        im = RasterImage.new(200, 60, (255, 255, 255))
        out = draw(im, [self.spec(color=(0, 0, 255))], FONT)
        changed = diff_pixels(im, out)
        coords = tuple(changed[0])
        px = out.pixels[coords[0], coords[1]]
        assert px[2] >= px[0]  # blue ink dominates where the glyph landed

    def test_missing_glyph_warns(self, caplog):
        im = RasterImage.new(80, 40, (255, 255, 255))
        with caplog.at_level(logging.WARNING):
            draw(im, [self.spec(text="日", box=(5, 5, 75, 35))], FONT)
        assert any("no glyph" in r.message for r in caplog.records)

    def test_bad_font_path(self):
        im = RasterImage.new(20, 20)
        with pytest.raises(FontLoadError):
            draw(im, [self.spec()], "/nonexistent/font.ttf")

    def test_non_font_file(self, tmp_path):
        bogus = tmp_path / "fake.ttf"
        bogus.write_text("not a font")
        im = RasterImage.new(20, 20)
        with pytest.raises(FontLoadError):
            draw(im, [self.spec()], str(bogus))


class TestPILFontMetrics:
    def test_monotone_and_empty(self):
        m = PILFontMetrics(FONT)
        assert m.measure("", 16)[0] == 0
        w1 = m.measure("abc", 12)[0]
        w2 = m.measure("abc", 24)[0]
        w3 = m.measure("abcabc", 24)[0]
        assert 0 < w1 < w2 < w3

    def test_bad_file_fails_fast(self):
        with pytest.raises(FontLoadError):
            PILFontMetrics("/nonexistent/font.ttf")

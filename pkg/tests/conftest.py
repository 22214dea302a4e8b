"""Shared fixtures: synthetic slide images with ground-truth sidecars,
plus a terminal summary listing the acceptance checks one line each.
"""

import json
import re
from types import SimpleNamespace

import pytest
from matplotlib import font_manager
from PIL import Image, ImageDraw, ImageFont


def token(text, x0, y0, x1, y1, conf=1.0, line=0, block=0):
    return {
        "text": text,
        "poly": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        "conf": conf,
        "line": line,
        "block": block,
    }


def draw_slide(path, spans, size=(240, 160), background="white"):
    """Render spans = [(text, x0, y0, x1, y1)] onto a fresh image and
    return matching ground-truth tokens (one line and block per span)."""
    im = Image.new("RGB", size, background)
    d = ImageDraw.Draw(im)
    tokens = []
    for i, (text, x0, y0, x1, y1) in enumerate(spans):
        px = max(8, int((y1 - y0) * 0.7))
        font = ImageFont.truetype(font_manager.findfont("DejaVu Sans"), px)
        d.text((x0 + 2, y0 + 2), text, font=font, fill="black")
        tokens.append(token(text, x0, y0, x1, y1, line=i, block=i))
    im.save(path)
    return tokens


@pytest.fixture
def exit_fixture(tmp_path):
    """The disambiguation slide: one word, annotation sidecar, en->de
    dictionary."""
    root = tmp_path / "fixture"
    root.mkdir()
    image = root / "slide.png"
    tokens = draw_slide(image, [("Exit", 10, 10, 60, 30)], size=(200, 100))
    ann = root / "annotations.json"
    ann.write_text(json.dumps({"slide.png": tokens}), encoding="utf-8")
    table = root / "dict.json"
    table.write_text(json.dumps({"exit": "Ausgang"}), encoding="utf-8")
    return SimpleNamespace(
        root=root, image=image, annotations=ann, dictionary=table,
        tokens=tokens,
    )


_CRITERION = re.compile(r"test_criterion_(\d+)")


def pytest_terminal_summary(terminalreporter):
    results: dict[int, bool] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            match = _CRITERION.search(nodeid)
            if match is None:
                continue
            n = int(match.group(1))
            results[n] = results.get(n, True) and outcome == "passed"
    if results:
        terminalreporter.write_sep("-", "acceptance")
        for n in sorted(results):
            status = "PASS" if results[n] else "FAIL"
            terminalreporter.write_line(f"[ACCEPTANCE] criterion {n}: {status}")

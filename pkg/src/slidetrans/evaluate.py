"""Evaluation harness and report writers.

A dataset directory holds:

    images/            the benchmark images
    annotations.json   ground-truth tokens per image (sidecar schema)
    references.json    image name -> {unit id: reference translation}

The OCR report is shaped like a model-per-row accuracy table (CER, TER,
Sub., Del., Ins., average seconds); the MT report scores BLEU and ChrF
under three conditions: predicted OCR with line-level segmentation,
predicted OCR with layout-level segmentation, and ground-truth OCR plus
segmentation.  Every report is written as CSV, JSON, and plain text,
with a rendered PNG figure alongside.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from time import perf_counter
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .config import Backends, PipelineConfig
from .errors import DatasetError, UndefinedMetricError
from .geometry import RasterImage
from .layout import SegmentationLevel, make_units
from .metrics import (
    CorpusPair,
    StageTiming,
    bleu,
    chrf,
    corpus_char_error,
    corpus_word_error,
    mean_stage_times,
)
from .ocr import OCRConfig, OCRToken, filter_tokens, load_sidecar_tokens, recognize
from .pipeline import attach_context, gate_backends, translate_image
from .translation import translate_units

log = logging.getLogger(__name__)

_IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")

MT_CONDITIONS = (
    "OCR Predicted + Line-level",
    "OCR Predicted + Layout-level",
    "Ground-Truth (OCR + Segmentation)",
)

OCR_COLUMNS = ("Model", "CER", "TER", "Sub.", "Del.", "Ins.",
               "Average Time (Seconds)")
MT_COLUMNS = ("Condition", "Model", "BLEU", "ChrF")
BENCH_COLUMNS = ("Step", "Time (seconds)")


@dataclass
class EvalDataset:
    root: Path
    images: list[str]
    annotations: dict[str, list[OCRToken]]
    references: dict[str, dict[str, str]]

    def image_path(self, name: str) -> Path:
        return self.root / "images" / name


def list_images(directory: str | Path) -> list[str]:
    root = Path(directory)
    return sorted(
        str(p) for p in root.iterdir()
        if p.is_file() and p.suffix.lower() in _IMAGE_EXTS
    )


def load_dataset(root: str | Path) -> EvalDataset:
    """Load and cross-check a dataset directory; every problem found is
    itemized in one error."""
    root = Path(root)
    problems: list[str] = []

    images_dir = root / "images"
    names: list[str] = []
    if not images_dir.is_dir():
        problems.append(f"missing images directory: {images_dir}")
    else:
        names = [Path(p).name for p in list_images(images_dir)]
        if not names:
            problems.append(f"no images in {images_dir}")

    annotations: dict[str, list[OCRToken]] = {}
    try:
        annotations = load_sidecar_tokens(root / "annotations.json")
    except DatasetError as exc:
        problems.append(str(exc))

    references: dict[str, dict[str, str]] = {}
    ref_path = root / "references.json"
    try:
        with open(ref_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict) or not all(
            isinstance(v, dict)
            and all(isinstance(k, str) and isinstance(t, str) for k, t in v.items())
            for v in doc.values()
        ):
            problems.append(
                f"{ref_path} must map image name -> {{unit id: reference}}"
            )
        else:
            references = doc
    except FileNotFoundError:
        problems.append(f"missing references file: {ref_path}")
    except json.JSONDecodeError as exc:
        problems.append(f"{ref_path} is not valid JSON: {exc}")

    for name in names:
        if annotations and name not in annotations:
            problems.append(f"no annotation entry for image {name}")
        if references and name not in references:
            problems.append(f"no reference entry for image {name}")

    if problems:
        raise DatasetError("dataset problems:\n- " + "\n- ".join(problems))
    return EvalDataset(
        root=root, images=names, annotations=annotations, references=references
    )


@dataclass(frozen=True)
class OCRRow:
    model: str
    cer: float
    ter: float
    substitutions: int
    deletions: int
    insertions: int
    avg_seconds: float


def run_ocr_eval(dataset: EvalDataset, backend, lang_hint: str | None = None) -> OCRRow:
    """Score one OCR backend against the ground-truth annotations.

    Hypothesis and reference are the token texts of each image joined in
    their stored order; no confidence filtering is applied.  CER and the
    word edit rate are reported in percent; Sub./Del./Ins. are the
    word-level corpus totals.
    """
    cfg = OCRConfig(min_conf=0.0, lang_hint=lang_hint)
    pairs = []
    seconds = 0.0
    for name in dataset.images:
        image = RasterImage.open(dataset.image_path(name))
        start = perf_counter()
        tokens = recognize(image, cfg, backend)
        seconds += perf_counter() - start
        hyp = " ".join(tok.text for tok in tokens)
        ref = " ".join(tok.text for tok in dataset.annotations[name])
        pairs.append(CorpusPair(hyp, ref))
    char_score = corpus_char_error(pairs)
    word_score = corpus_word_error(pairs)
    return OCRRow(
        model=backend.name,
        cer=100.0 * char_score.rate,
        ter=100.0 * word_score.rate,
        substitutions=word_score.counts.substitutions,
        deletions=word_score.counts.deletions,
        insertions=word_score.counts.insertions,
        avg_seconds=seconds / len(dataset.images),
    )


@dataclass(frozen=True)
class MTRow:
    condition: str
    model: str
    bleu: float
    chrf: float


def _natural_unit_order(ids) -> list[str]:
    def key(uid: str):
        head, _, tail = uid.partition(":")
        return (head, int(tail)) if tail.isdigit() else (head, -1)

    return sorted(ids, key=key)


def _condition_pairs(
    dataset: EvalDataset,
    config: PipelineConfig,
    backends: Backends,
    use_ground_truth: bool,
    level: SegmentationLevel,
) -> tuple[list[str], list[str]]:
    hyps, refs = [], []
    for name in dataset.images:
        image = RasterImage.open(dataset.image_path(name))
        if use_ground_truth:
            tokens = dataset.annotations[name]
        else:
            found = recognize(
                image,
                OCRConfig(min_conf=config.min_conf, lang_hint=config.src),
                backends.ocr,
            )
            tokens = filter_tokens(found, config.min_conf)
        blocks = backends.layout.analyze(tokens, config.layout_params)
        units = make_units(blocks, level)
        in_context = attach_context(units, blocks, image, config.context)
        translated = translate_units(in_context, config.pair, backends.mt)
        targets = [" ".join(tr.target_text.split()) for tr in translated]

        image_refs = dataset.references[name]
        if units and all(unit.id in image_refs for unit in units):
            for unit, target in zip(units, targets):
                hyps.append(target)
                refs.append(image_refs[unit.id])
        else:
            # granularity mismatch between prediction and references:
            # fall back to one whole-image segment per side
            hyps.append(" ".join(t for t in targets if t).strip())
            refs.append(
                " ".join(image_refs[k] for k in _natural_unit_order(image_refs))
            )
    return hyps, refs


def run_mt_eval(
    dataset: EvalDataset, config: PipelineConfig, backends: Backends
) -> list[MTRow]:
    """Score the configured MT backend under the three segmentation and
    OCR-source conditions."""
    plans = (
        (MT_CONDITIONS[0], False, SegmentationLevel.LINE),
        (MT_CONDITIONS[1], False, SegmentationLevel.BLOCK),
        (MT_CONDITIONS[2], True, SegmentationLevel.BLOCK),
    )
    rows = []
    for condition, use_gt, level in plans:
        hyps, refs = _condition_pairs(dataset, config, backends, use_gt, level)
        try:
            bleu_score = bleu(hyps, refs).score
            chrf_score = chrf(hyps, refs).score
        except UndefinedMetricError as exc:
            raise DatasetError(f"cannot score condition {condition!r}: {exc}") from exc
        rows.append(
            MTRow(
                condition=condition,
                model=backends.mt.name,
                bleu=bleu_score,
                chrf=chrf_score,
            )
        )
    return rows


def bench_run(
    paths: Sequence[str], config: PipelineConfig, backends: Backends
) -> list[StageTiming]:
    """Mean per-stage seconds over a directory of images."""
    gated = gate_backends(backends)

    def work(path: str) -> dict[str, float]:
        image = RasterImage.open(path)
        return translate_image(image, config, gated).sidecar.timings

    if config.jobs == 1 or len(paths) <= 1:
        runs = [work(p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            runs = list(pool.map(work, paths))
    return mean_stage_times(runs)


@dataclass
class ReportTable:
    """A small rectangular report: fixed columns, typed cells."""

    title: str
    columns: tuple
    rows: list[list]
    float_format: str = "{:.2f}"

    def _cell(self, value) -> str:
        if isinstance(value, float):
            return self.float_format.format(value)
        return str(value)

    def to_text(self) -> str:
        grid = [list(self.columns)] + [
            [self._cell(v) for v in row] for row in self.rows
        ]
        widths = [max(len(r[i]) for r in grid) for i in range(len(self.columns))]
        lines = [self.title, ""]
        for r, row in enumerate(grid):
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
            if r == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "title": self.title,
            "columns": list(self.columns),
            "rows": self.rows,
        }
        return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def ocr_table(rows: Sequence[OCRRow]) -> ReportTable:
    return ReportTable(
        title="OCR accuracy",
        columns=OCR_COLUMNS,
        rows=[
            [r.model, r.cer, r.ter, r.substitutions, r.deletions,
             r.insertions, r.avg_seconds]
            for r in rows
        ],
    )


def mt_table(rows: Sequence[MTRow]) -> ReportTable:
    return ReportTable(
        title="Translation quality",
        columns=MT_COLUMNS,
        rows=[[r.condition, r.model, r.bleu, r.chrf] for r in rows],
    )


def bench_table(timings: Sequence[StageTiming]) -> ReportTable:
    rows: list[list] = [[t.stage, t.seconds] for t in timings]
    rows.append(["Total", sum(t.seconds for t in timings)])
    return ReportTable(
        title="Per-stage inference time",
        columns=BENCH_COLUMNS,
        rows=rows,
        float_format="{:.4f}",
    )


def _ocr_figure(rows: Sequence[OCRRow], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    x = np.arange(len(rows))
    ax.bar(x - 0.2, [r.cer for r in rows], width=0.4, label="CER")
    ax.bar(x + 0.2, [r.ter for r in rows], width=0.4, label="TER")
    ax.set_xticks(x)
    ax.set_xticklabels([r.model for r in rows])
    ax.set_ylabel("error rate (%)")
    ax.set_title("OCR accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _mt_figure(rows: Sequence[MTRow], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(8.0, 4.0))
    x = np.arange(len(rows))
    ax.bar(x - 0.2, [r.bleu for r in rows], width=0.4, label="BLEU")
    ax.bar(x + 0.2, [r.chrf for r in rows], width=0.4, label="ChrF")
    ax.set_xticks(x)
    ax.set_xticklabels([r.condition for r in rows], rotation=12, ha="right")
    ax.set_ylabel("score")
    ax.set_title("Translation quality")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _bench_figure(timings: Sequence[StageTiming], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    x = np.arange(len(timings))
    ax.bar(x, [t.seconds for t in timings])
    ax.set_xticks(x)
    ax.set_xticklabels([t.stage for t in timings], rotation=12, ha="right")
    ax.set_ylabel("seconds")
    ax.set_title("Per-stage inference time")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_report(table: ReportTable, out_dir: str | Path, stem: str,
                 figure=None) -> dict[str, Path]:
    """Write <stem>.csv/.json/.txt and, when a figure renderer is given,
    <stem>.png; returns the paths keyed by kind."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / f"{stem}.csv",
        "json": out / f"{stem}.json",
        "txt": out / f"{stem}.txt",
    }
    paths["csv"].write_text(table.to_csv(), encoding="utf-8")
    paths["json"].write_text(table.to_json(), encoding="utf-8")
    paths["txt"].write_text(table.to_text(), encoding="utf-8")
    if figure is not None:
        paths["png"] = out / f"{stem}.png"
        figure(paths["png"])
    return paths


def write_ocr_report(rows: Sequence[OCRRow], out_dir) -> dict[str, Path]:
    return write_report(
        ocr_table(rows), out_dir, "ocr_report",
        figure=lambda p: _ocr_figure(rows, p),
    )


def write_mt_report(rows: Sequence[MTRow], out_dir) -> dict[str, Path]:
    return write_report(
        mt_table(rows), out_dir, "mt_report",
        figure=lambda p: _mt_figure(rows, p),
    )


def write_bench_report(timings: Sequence[StageTiming], out_dir) -> dict[str, Path]:
    return write_report(
        bench_table(timings), out_dir, "bench",
        figure=lambda p: _bench_figure(timings, p),
    )

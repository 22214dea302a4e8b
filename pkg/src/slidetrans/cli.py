"""Command line interface.

    slidetrans translate-image INPUT   one image file or a directory
    slidetrans translate-deck DECK     a .pptx presentation
    slidetrans eval DATASET            accuracy and quality reports
    slidetrans bench IMAGES            per-stage timing report

Exit codes: 0 success, 2 usage or configuration problem, 3 stage
failure, 4 dataset or deck problem.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, load_config, resolve_backends
from .deck import DeckDocument, localize_deck
from .errors import (
    BackendError,
    ConfigError,
    DatasetError,
    DeckError,
    SlidetransError,
    StageFailureError,
)
from .evaluate import (
    bench_run,
    bench_table,
    list_images,
    load_dataset,
    mt_table,
    ocr_table,
    run_mt_eval,
    run_ocr_eval,
    write_bench_report,
    write_mt_report,
    write_ocr_report,
)
from .pipeline import image_localizer, translate_batch

log = logging.getLogger(__name__)

# CLI attribute -> config key; None values are dropped, so flags the
# user did not pass never shadow file or environment settings
_OVERRIDES = {
    "src": "src",
    "tgt": "tgt",
    "level": "level",
    "out_dir": "out_dir",
    "jobs": "jobs",
    "context": "context",
    "backend_ocr": "ocr",
    "backend_layout": "layout",
    "backend_mt": "mt",
    "backend_inpaint": "inpaint",
    "merge_paragraphs": "merge_paragraphs",
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--src", help="source language code")
    p.add_argument("--tgt", help="target language code")
    p.add_argument("--level", choices=("line", "block"),
                   help="translation unit granularity")
    p.add_argument("--out", dest="out_dir", metavar="DIR",
                   help="output directory")
    p.add_argument("--jobs", type=int, metavar="N",
                   help="worker threads for independent images")
    p.add_argument("--context", choices=("crop", "full"),
                   help="visual context handed to the translator")
    p.add_argument("--backend.ocr", dest="backend_ocr", metavar="SEL",
                   help="OCR backend: annotation[:PATH] or URL")
    p.add_argument("--backend.layout", dest="backend_layout", metavar="SEL",
                   help="layout backend: geometric")
    p.add_argument("--backend.mt", dest="backend_mt", metavar="SEL",
                   help="MT backend: identity, dictionary:PATH, or URL")
    p.add_argument("--backend.inpaint", dest="backend_inpaint", metavar="SEL",
                   help="inpainting backend: naive or URL")
    p.add_argument("--verbose", action="store_true", default=None,
                   help="log per-stage progress")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="slidetrans",
        description="Translate the text embedded in slide images and decks.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    commands: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("translate-image",
                       help="translate one image or every image in a directory")
    p.add_argument("input", help="image file or directory")
    _add_common(p)
    p.set_defaults(func=cmd_translate_image)
    commands["translate-image"] = p

    p = sub.add_parser("translate-deck", help="translate a .pptx deck")
    p.add_argument("input", help="deck file")
    _add_common(p)
    p.add_argument("--merge-paragraphs", action="store_true", default=None,
                   help="translate whole paragraphs instead of single runs")
    p.set_defaults(func=cmd_translate_deck)
    commands["translate-deck"] = p

    p = sub.add_parser("eval", help="score OCR and translation on a dataset")
    p.add_argument("input", help="dataset directory")
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    commands["eval"] = p

    p = sub.add_parser("bench", help="measure per-stage time over images")
    p.add_argument("input", help="image file or directory")
    _add_common(p)
    p.set_defaults(func=cmd_bench)
    commands["bench"] = p

    return parser, commands


def _load(args) -> PipelineConfig:
    overrides = {
        key: getattr(args, attr, None) for attr, key in _OVERRIDES.items()
    }
    return load_config(args.config, overrides)


def _usage(sub: argparse.ArgumentParser, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    sub.print_usage(sys.stderr)
    return 2


def cmd_translate_image(args, sub) -> int:
    config = _load(args)
    src = Path(args.input)
    if src.is_dir():
        paths = list_images(src)
        if not paths:
            raise DatasetError(f"no images found in {src}")
    elif src.is_file():
        paths = [str(src)]
    else:
        return _usage(sub, f"input path not found: {src}")

    backends = resolve_backends(config)
    items = translate_batch(paths, config, backends)
    for item in items:
        if item.ok:
            print(f"{item.source}: ok -> {item.image_path}")
        else:
            print(f"{item.source}: {item.error}", file=sys.stderr)
    failures = [item for item in items if not item.ok]
    if not failures:
        return 0
    if any(isinstance(i.error, (StageFailureError, BackendError)) for i in failures):
        return 3
    if any(isinstance(i.error, ConfigError) for i in failures):
        return 2
    return 4


def cmd_translate_deck(args, sub) -> int:
    config = _load(args)
    deck_path = Path(args.input)
    if not deck_path.is_file():
        return _usage(sub, f"input path not found: {deck_path}")

    backends = resolve_backends(config)
    deck = DeckDocument.open(deck_path)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    deck_out = out / deck_path.name
    if deck_out.resolve() == deck_path.resolve():
        raise ConfigError(f"output would overwrite input: {deck_path}")

    localized, report = localize_deck(
        deck,
        config.pair,
        backends.mt,
        image_localizer(config, backends),
        merge_paragraphs=config.merge_paragraphs,
    )
    localized.save(deck_out)
    report_out = out / f"{deck_path.stem}.report.json"
    report.save(report_out)

    failed = sum(1 for entry in report.images if entry["status"] != "translated")
    print(f"{deck_out}: {len(report.runs)} runs, "
          f"{len(report.images) - failed}/{len(report.images)} images translated")
    if failed:
        print(f"warning: {failed} image(s) kept untranslated; see {report_out}",
              file=sys.stderr)
    return 0


def cmd_eval(args, sub) -> int:
    config = _load(args)
    root = Path(args.input)
    if not root.is_dir():
        return _usage(sub, f"input path not found: {root}")
    dataset = load_dataset(root)
    # the dataset ships its own ground truth; a bare annotation backend
    # should pick it up without an explicit path
    if config.ocr == "annotation" and not config.annotations:
        config = dataclasses.replace(
            config, annotations=str(root / "annotations.json")
        )
    backends = resolve_backends(config)

    ocr_rows = [run_ocr_eval(dataset, backends.ocr, config.src)]
    mt_rows = run_mt_eval(dataset, config, backends)
    written = write_ocr_report(ocr_rows, config.out_dir)
    written.update(
        {f"mt_{k}": v for k, v in write_mt_report(mt_rows, config.out_dir).items()}
    )
    print(ocr_table(ocr_rows).to_text())
    print(mt_table(mt_rows).to_text())
    for path in sorted(str(p) for p in written.values()):
        print(f"wrote {path}")
    return 0


def cmd_bench(args, sub) -> int:
    config = _load(args)
    src = Path(args.input)
    if src.is_dir():
        paths = list_images(src)
    elif src.is_file():
        paths = [str(src)]
    else:
        return _usage(sub, f"input path not found: {src}")
    if not paths:
        raise DatasetError(f"no images found in {src}")

    backends = resolve_backends(config)
    timings = bench_run(paths, config, backends)
    written = write_bench_report(timings, config.out_dir)
    print(bench_table(timings).to_text())
    for path in sorted(str(p) for p in written.values()):
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser, commands = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args, commands[args.command])
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (StageFailureError, BackendError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DatasetError, DeckError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except SlidetransError as exc:
        # anything the pipeline classifies but the mapping above does not
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

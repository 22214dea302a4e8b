"""Text quality metrics and stage timing aggregation.

Implements character/word edit rates with full operation counts, a
corpus BLEU that reproduces the mteval/WMT reference behaviour
(13a tokenization, fixed order 4, exponential smoothing of zero counts,
brevity penalty), and a character n-gram F-score (chrF, beta=2).
"""

from __future__ import annotations

import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import UndefinedMetricError

_WS_RE = re.compile(r"\s+")

BLEU_ORDER = 4
CHRF_ORDER = 6
CHRF_BETA = 2.0

# Stage labels used in timing reports, in pipeline order.
STAGES = (
    "OCR",
    "Layout Analysis",
    "Multimodal Translation",
    "Inpainting",
    "Drawing",
)


class CorpusPair(NamedTuple):
    """One (hypothesis, reference) segment pair."""

    hyp: str
    ref: str


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends.

    No case folding or punctuation stripping happens here; edit rates
    compare text as written apart from whitespace.
    """
    return _WS_RE.sub(" ", text).strip()


@dataclass(frozen=True)
class EditCounts:
    """Operation counts from a minimal edit alignment.

    Invariants: substitutions + deletions + hits == len(ref) and
    substitutions + insertions + hits == len(hyp).  A deletion is a
    reference item missing from the hypothesis; an insertion is a
    hypothesis item absent from the reference.
    """

    substitutions: int
    deletions: int
    insertions: int
    hits: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
            self.hits + other.hits,
        )


def edit_alignment(hyp: Sequence, ref: Sequence) -> EditCounts:
    """Levenshtein alignment between two sequences with unit costs.

    The backtrace is deterministic: a free match is always taken, and
    among tied edit operations substitution wins over deletion, which
    wins over insertion.
    """
    n, m = len(hyp), len(ref)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        hi = hyp[i - 1]
        row = d[i]
        prev = d[i - 1]
        for j in range(1, m + 1):
            if hi == ref[j - 1]:
                row[j] = prev[j - 1]
            else:
                row[j] = 1 + min(prev[j - 1], row[j - 1], prev[j])

    subs = dels = ins = hits = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and hyp[i - 1] == ref[j - 1] and d[i, j] == d[i - 1, j - 1]:
            hits += 1
            i -= 1
            j -= 1
        elif i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + 1:
            subs += 1
            i -= 1
            j -= 1
        elif j > 0 and d[i, j] == d[i, j - 1] + 1:
            dels += 1
            j -= 1
        else:
            ins += 1
            i -= 1
    return EditCounts(subs, dels, ins, hits)


@dataclass(frozen=True)
class EditScore:
    """Edit rate plus the counts behind it."""

    rate: float
    counts: EditCounts
    hyp_len: int
    ref_len: int

    @property
    def distance(self) -> int:
        return self.counts.distance


_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def _prepare(text: str, fold_case: bool, strip_punctuation: bool) -> str:
    if fold_case:
        text = text.lower()
    if strip_punctuation:
        text = text.translate(_PUNCT_TABLE)
    return normalize_whitespace(text)


def _edit_score(hyp_items: Sequence, ref_items: Sequence, what: str) -> EditScore:
    if len(ref_items) == 0:
        raise UndefinedMetricError(f"{what} is undefined for an empty reference")
    counts = edit_alignment(hyp_items, ref_items)
    return EditScore(
        rate=counts.distance / len(ref_items),
        counts=counts,
        hyp_len=len(hyp_items),
        ref_len=len(ref_items),
    )


def char_error_rate(
    hyp: str, ref: str, fold_case: bool = False, strip_punctuation: bool = False
) -> EditScore:
    """Character error rate: edit distance / reference length.

    Both sides are whitespace-normalized first; spaces inside the
    normalized strings still count as characters.  Case folding and
    punctuation stripping are off by default.
    """
    return _edit_score(
        list(_prepare(hyp, fold_case, strip_punctuation)),
        list(_prepare(ref, fold_case, strip_punctuation)),
        "CER",
    )


def word_edit_rate(
    hyp: str, ref: str, fold_case: bool = False, strip_punctuation: bool = False
) -> EditScore:
    """Word-level edit rate (substitutions, deletions, insertions over
    reference word count).  No block shifts; tokens are whitespace
    separated words, compared as written unless the flags say otherwise.
    """
    return _edit_score(
        _prepare(hyp, fold_case, strip_punctuation).split(),
        _prepare(ref, fold_case, strip_punctuation).split(),
        "TER",
    )


@dataclass(frozen=True)
class CorpusEditScore:
    """Corpus-level edit rate from summed distances and counts."""

    rate: float
    counts: EditCounts
    hyp_len: int
    ref_len: int
    segments: int


def _corpus_edit(pairs: Sequence[CorpusPair], scorer) -> CorpusEditScore:
    if not pairs:
        raise UndefinedMetricError("empty corpus")
    total = EditCounts(0, 0, 0, 0)
    hyp_len = ref_len = 0
    for hyp, ref in pairs:
        s = scorer(hyp, ref)
        total = total + s.counts
        hyp_len += s.hyp_len
        ref_len += s.ref_len
    return CorpusEditScore(
        rate=total.distance / ref_len,
        counts=total,
        hyp_len=hyp_len,
        ref_len=ref_len,
        segments=len(pairs),
    )


def corpus_char_error(pairs: Sequence[CorpusPair]) -> CorpusEditScore:
    return _corpus_edit(pairs, char_error_rate)


def corpus_word_error(pairs: Sequence[CorpusPair]) -> CorpusEditScore:
    return _corpus_edit(pairs, word_edit_rate)


def tokenize_13a(line: str) -> list[str]:
    """mteval-v13a tokenization: unescape a few HTML entities, then split
    punctuation from words (keeping digit-internal '.'/',' attached) and
    split on whitespace.
    """
    norm = line
    norm = norm.replace("<skipped>", "")
    norm = norm.replace("-\n", "")
    norm = norm.replace("\n", " ")
    norm = norm.replace("&quot;", '"')
    norm = norm.replace("&amp;", "&")
    norm = norm.replace("&lt;", "<")
    norm = norm.replace("&gt;", ">")
    norm = f" {norm} "
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    return norm.split()


def _ngram_counts(tokens: Sequence, max_order: int) -> Counter:
    counts: Counter = Counter()
    for n in range(1, max_order + 1):
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i : i + n])] += 1
    return counts


def _log_or_floor(value: float) -> float:
    # Floor log(0) far below any real precision so a zero-count order
    # collapses the geometric mean to zero, matching mteval.
    if value == 0.0:
        return -9999999999.0
    return math.log(value)


@dataclass(frozen=True)
class BleuScore:
    """Corpus BLEU with the quantities that went into it.

    precisions are in percent; correct/total are the clipped n-gram
    matches and hypothesis n-gram counts per order.
    """

    score: float
    precisions: tuple[float, float, float, float]
    bp: float
    sys_len: int
    ref_len: int
    correct: tuple[int, int, int, int]
    total: tuple[int, int, int, int]


def bleu(hypotheses: Sequence[str], references: Sequence[str]) -> BleuScore:
    """Corpus BLEU over one reference per hypothesis.

    13a tokenization, case kept as-is, n-gram orders 1..4 with the order
    fixed at 4 (a missing order contributes a zero precision rather than
    shrinking the mean).  Orders with zero clipped matches but a nonzero
    hypothesis count are smoothed exponentially: the k-th such order gets
    precision 100 / (2^k * total).  The brevity penalty is
    exp(1 - ref_len / sys_len) when the hypothesis side is shorter.
    """
    if len(hypotheses) != len(references):
        raise UndefinedMetricError(
            f"corpus size mismatch: {len(hypotheses)} hypotheses, "
            f"{len(references)} references"
        )
    if not hypotheses:
        raise UndefinedMetricError("empty corpus")

    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    sys_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_tokens = tokenize_13a(hyp)
        ref_tokens = tokenize_13a(ref)
        sys_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        hyp_ngrams = _ngram_counts(hyp_tokens, BLEU_ORDER)
        ref_ngrams = _ngram_counts(ref_tokens, BLEU_ORDER)
        for ngram, count in hyp_ngrams.items():
            n = len(ngram)
            total[n - 1] += count
            correct[n - 1] += min(count, ref_ngrams.get(ngram, 0))

    precisions = [0.0] * BLEU_ORDER
    smooth = 1.0
    for n in range(BLEU_ORDER):
        if total[n] == 0:
            break
        if correct[n] == 0:
            smooth *= 2.0
            precisions[n] = 100.0 / (smooth * total[n])
        else:
            precisions[n] = 100.0 * correct[n] / total[n]

    if sys_len < ref_len:
        bp = math.exp(1.0 - ref_len / sys_len) if sys_len > 0 else 0.0
    else:
        bp = 1.0
    score = bp * math.exp(sum(_log_or_floor(p) for p in precisions) / BLEU_ORDER)
    return BleuScore(
        score=score,
        precisions=tuple(precisions),
        bp=bp,
        sys_len=sys_len,
        ref_len=ref_len,
        correct=tuple(correct),
        total=tuple(total),
    )


@dataclass(frozen=True)
class ChrfScore:
    """Corpus chrF.  order_f holds the per-order F-scores actually
    averaged; orders where either side of the corpus has no n-grams are
    skipped and reported as None."""

    score: float
    order_f: tuple


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def chrf(hypotheses: Sequence[str], references: Sequence[str]) -> ChrfScore:
    """Character n-gram F-score with beta=2 (recall-weighted).

    Whitespace is removed entirely; statistics for orders 1..6 are summed
    over the corpus, a per-order F-score is computed from the summed
    precision/recall, and the final score is 100 times the mean over the
    orders present on both sides.
    """
    if len(hypotheses) != len(references):
        raise UndefinedMetricError(
            f"corpus size mismatch: {len(hypotheses)} hypotheses, "
            f"{len(references)} references"
        )
    if not hypotheses:
        raise UndefinedMetricError("empty corpus")

    hyp_total = [0] * CHRF_ORDER
    ref_total = [0] * CHRF_ORDER
    match = [0] * CHRF_ORDER
    for hyp, ref in zip(hypotheses, references):
        hyp_chars = _WS_RE.sub("", hyp)
        ref_chars = _WS_RE.sub("", ref)
        for n in range(1, CHRF_ORDER + 1):
            hyp_ngrams = _char_ngrams(hyp_chars, n)
            ref_ngrams = _char_ngrams(ref_chars, n)
            hyp_total[n - 1] += sum(hyp_ngrams.values())
            ref_total[n - 1] += sum(ref_ngrams.values())
            match[n - 1] += sum(
                min(c, ref_ngrams.get(g, 0)) for g, c in hyp_ngrams.items()
            )

    beta_sq = CHRF_BETA**2
    order_f: list[float | None] = []
    for n in range(CHRF_ORDER):
        if hyp_total[n] == 0 or ref_total[n] == 0:
            order_f.append(None)
            continue
        prec = match[n] / hyp_total[n]
        rec = match[n] / ref_total[n]
        denom = beta_sq * prec + rec
        order_f.append((1 + beta_sq) * prec * rec / denom if denom > 0 else 0.0)

    present = [f for f in order_f if f is not None]
    score = 100.0 * sum(present) / len(present) if present else 0.0
    return ChrfScore(score=score, order_f=tuple(order_f))


@dataclass(frozen=True)
class StageTiming:
    """Seconds spent in one named pipeline stage."""

    stage: str
    seconds: float


def mean_stage_times(
    runs: Sequence[dict[str, float]],
) -> list[StageTiming]:
    """Average per-stage wall time over runs, in pipeline stage order.

    Stages absent from a run count as 0 for that run.
    """
    if not runs:
        raise UndefinedMetricError("no timing runs to aggregate")
    return [
        StageTiming(stage, sum(r.get(stage, 0.0) for r in runs) / len(runs))
        for stage in STAGES
    ]

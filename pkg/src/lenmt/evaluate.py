"""Length-aware evaluation: corpus BLEU with brevity penalty, BLEU*
(precision with the brevity penalty divided out), and character-level
length-ratio statistics against source and reference.

BLEU operates on whitespace tokens of the given lines, case-sensitive,
single reference, with corpus-level aggregation of clipped n-gram counts
up to order 4, matching the common script's semantics. Length ratios are
computed in characters via the shared counting rule, so they are
invariant to tokenization while BLEU is invariant to character lengths.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .textproc import char_length

MAX_ORDER = 4


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class BleuReport:
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    bleu: float          # 0-100
    bleu_star: float     # 0-100
    hyp_tokens: int      # c
    ref_tokens: int      # r

    def as_record(self) -> dict:
        return {
            "bleu": round(self.bleu, 4),
            "bleu_star": round(self.bleu_star, 4),
            "bp": round(self.brevity_penalty, 6),
            "p1": round(self.precisions[0], 6),
            "p2": round(self.precisions[1], 6),
            "p3": round(self.precisions[2], 6),
            "p4": round(self.precisions[3], 6),
            "hyp_tokens": self.hyp_tokens,
            "ref_tokens": self.ref_tokens,
        }


def _ngrams(tokens: list[str], order: int) -> Counter:
    return Counter(
        tuple(tokens[i:i + order]) for i in range(len(tokens) - order + 1)
    )


def corpus_bleu(hyps: list[str], refs: list[str]) -> BleuReport:
    """Corpus-level BLEU over whitespace-tokenized lines.

    Per-sentence clipped n-gram matches are pooled corpus-wide before
    the precision quotients; BP = min(1, exp(1 - r/c)). A zero precision
    at any order zeroes BLEU while the precisions stay reported.
    """
    if len(hyps) != len(refs):
        raise EvalError(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise EvalError("empty evaluation set")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    c = r = 0
    for hyp_line, ref_line in zip(hyps, refs):
        hyp = hyp_line.split()
        ref = ref_line.split()
        c += len(hyp)
        r += len(ref)
        for n in range(1, MAX_ORDER + 1):
            hyp_counts = _ngrams(hyp, n)
            ref_counts = _ngrams(ref, n)
            totals[n - 1] += max(len(hyp) - n + 1, 0)
            matches[n - 1] += sum(
                min(count, ref_counts[gram]) for gram, count in hyp_counts.items()
            )
    precisions = tuple(
        matches[i] / totals[i] if totals[i] > 0 else 0.0 for i in range(MAX_ORDER)
    )
    if c == 0:
        bp = 0.0
    elif c > r:
        bp = 1.0
    else:
        bp = math.exp(1.0 - r / c)
    if all(p > 0 for p in precisions):
        geo_mean = math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
        bleu = bp * geo_mean * 100.0
    else:
        bleu = 0.0
    star = bleu / bp if bp > 0 else 0.0
    return BleuReport(
        precisions=precisions, brevity_penalty=bp, bleu=bleu, bleu_star=star,
        hyp_tokens=c, ref_tokens=r,
    )


def bleu_star(report: BleuReport) -> float:
    """BLEU with the brevity penalty divided out; equals BLEU when c >= r."""
    return report.bleu_star


@dataclass(frozen=True)
class LengthStats:
    """Mean character ratios of outputs against source and reference.

    ``lr_src_std`` is the population standard deviation of per-sentence
    output/source ratios. Sentences with an empty source or reference are
    excluded and counted in ``excluded``.
    """

    lr_src: float
    lr_ref: float
    lr_src_std: float
    n_sentences: int
    excluded: int
    src_ratios: tuple[float, ...]
    ref_ratios: tuple[float, ...]

    def as_record(self) -> dict:
        return {
            "lr_src": round(self.lr_src, 4),
            "lr_ref": round(self.lr_ref, 4),
            "lr_src_std": round(self.lr_src_std, 4),
            "n_sentences": self.n_sentences,
            "excluded": self.excluded,
            "std_kind": "population",
        }


def length_stats(outputs: list[str], sources: list[str], references: list[str]) -> LengthStats:
    """Character-ratio statistics over aligned (output, source, reference)."""
    if not (len(outputs) == len(sources) == len(references)):
        raise EvalError("outputs, sources and references must align")
    if not outputs:
        raise EvalError("empty evaluation set")
    src_ratios: list[float] = []
    ref_ratios: list[float] = []
    excluded = 0
    for out, src, ref in zip(outputs, sources, references):
        out_chars = char_length(out)
        src_chars = char_length(src)
        ref_chars = char_length(ref)
        if src_chars == 0 or ref_chars == 0:
            excluded += 1
            continue
        src_ratios.append(out_chars / src_chars)
        ref_ratios.append(out_chars / ref_chars)
    if not src_ratios:
        raise EvalError("all sentences excluded (zero-length source/reference)")
    n = len(src_ratios)
    mean_src = sum(src_ratios) / n
    mean_ref = sum(ref_ratios) / n
    var = sum((x - mean_src) ** 2 for x in src_ratios) / n
    return LengthStats(
        lr_src=mean_src, lr_ref=mean_ref, lr_src_std=math.sqrt(var),
        n_sentences=n, excluded=excluded,
        src_ratios=tuple(src_ratios), ref_ratios=tuple(ref_ratios),
    )


COMPARISON_COLUMNS = ("label", "BLEU", "BLEU*", "LR_src", "LR_ref", "LR_std")


def compare_runs(runs: list[tuple[str, BleuReport, LengthStats]]) -> list[dict]:
    """Rows for the strategy comparison table, in input order."""
    if not runs:
        raise EvalError("no runs to compare")
    rows = []
    for label, bleu, stats in runs:
        rows.append({
            "label": label,
            "BLEU": round(bleu.bleu, 2),
            "BLEU*": round(bleu.bleu_star, 2),
            "LR_src": round(stats.lr_src, 4),
            "LR_ref": round(stats.lr_ref, 4),
            "LR_std": round(stats.lr_src_std, 4),
        })
    return rows

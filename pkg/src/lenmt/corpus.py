"""Parallel corpus handling: length-ratio classes, token injection,
bucket statistics, batching, and a synthetic controllable-length task.

The synthetic task is built so that length control is learnable: every
lemma has a short and a long target realization, and the same source
sentence appears in the corpus with target renderings of different
lengths, chosen by a per-sentence style. Resolving that ambiguity is
exactly what the length-control mechanisms are trained to do.
"""

from __future__ import annotations

import enum
import json
import string
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .textproc import char_length, normalize_ws


class CorpusError(ValueError):
    pass


class LengthClass(enum.Enum):
    SHORT = "short"
    NORMAL = "normal"
    LONG = "long"

    @property
    def token(self) -> str:
        return f"<{self.value}>"


LENGTH_TOKENS = {cls.token: cls for cls in LengthClass}


@dataclass(frozen=True)
class Thresholds:
    """Ratio boundaries: short (0, t_min], normal (t_min, t_max], long above."""

    t_min: float = 1.0
    t_max: float = 1.2

    def __post_init__(self):
        if not (0 < self.t_min <= self.t_max):
            raise CorpusError(f"need 0 < t_min <= t_max, got ({self.t_min}, {self.t_max})")


def classify(ratio: float, thresholds: Thresholds = Thresholds()) -> LengthClass:
    """Bucket a target/source character ratio."""
    if ratio <= 0:
        raise CorpusError(f"ratio must be positive, got {ratio}")
    if ratio <= thresholds.t_min:
        return LengthClass.SHORT
    if ratio <= thresholds.t_max:
        return LengthClass.NORMAL
    return LengthClass.LONG


def strip_length_token(src: str) -> tuple[str, LengthClass | None]:
    """Split a leading length token, if any, off a source string."""
    stripped = src.lstrip()
    for token, cls in LENGTH_TOKENS.items():
        if stripped == token or stripped.startswith(token + " "):
            return stripped[len(token):].lstrip(), cls
    return src, None


@dataclass(frozen=True)
class SentencePair:
    """An aligned pair with character-length bookkeeping.

    ``src`` may carry a prepended length token after ``inject_token``;
    ``src_chars`` always refers to the token-free source surface, since
    the token is a control signal rather than content.
    """

    src: str
    tgt: str
    src_chars: int
    tgt_chars: int
    ratio: float
    length_class: LengthClass

    @property
    def injected(self) -> bool:
        return strip_length_token(self.src)[1] is not None


def make_pair(src: str, tgt: str, thresholds: Thresholds = Thresholds()) -> SentencePair:
    """Build a classified pair from raw surface strings."""
    src = normalize_ws(src)
    tgt = normalize_ws(tgt)
    src_chars = char_length(src)
    tgt_chars = char_length(tgt)
    if src_chars == 0:
        raise CorpusError("empty source sentence (ratio undefined)")
    ratio = tgt_chars / src_chars
    # an empty target (ratio 0) sits in the short bucket, whose range is [0, t_min]
    cls = classify(ratio, thresholds) if ratio > 0 else LengthClass.SHORT
    return SentencePair(
        src=src, tgt=tgt, src_chars=src_chars, tgt_chars=tgt_chars,
        ratio=ratio, length_class=cls,
    )


def inject_token(pair: SentencePair) -> SentencePair:
    """Prepend the pair's class token to the source surface.

    Length fields are untouched: the token is excluded from all length
    arithmetic. A second injection is rejected.
    """
    if pair.injected:
        raise CorpusError("double injection")
    return replace(pair, src=f"{pair.length_class.token} {pair.src}")


@dataclass(frozen=True)
class BucketCounts:
    short: int
    normal: int
    long: int

    @property
    def total(self) -> int:
        return self.short + self.normal + self.long

    def as_record(self) -> str:
        return json.dumps(
            {"short": self.short, "normal": self.normal, "long": self.long,
             "total": self.total},
            separators=(", ", ": "),
        )


def bucket_stats(pairs: list[SentencePair]) -> BucketCounts:
    """Exact per-class counts; they always sum to the corpus size."""
    counts = {cls: 0 for cls in LengthClass}
    for pair in pairs:
        counts[pair.length_class] += 1
    return BucketCounts(
        short=counts[LengthClass.SHORT],
        normal=counts[LengthClass.NORMAL],
        long=counts[LengthClass.LONG],
    )


def suggest_thresholds(ratios: list[float]) -> Thresholds:
    """Tertile boundaries of an empirical ratio distribution.

    Helper for picking thresholds from data when the default Table-style
    (1.0, 1.2] boundaries do not fit the corpus at hand.
    """
    if not ratios:
        raise CorpusError("no ratios to fit thresholds on")
    t_min, t_max = np.quantile(np.asarray(ratios, dtype=np.float64), [1 / 3, 2 / 3])
    if not 0 < t_min <= t_max:
        raise CorpusError("degenerate ratio distribution")
    return Thresholds(t_min=float(t_min), t_max=float(t_max))


# ---------------------------------------------------------------------------
# Synthetic controllable-length task
# ---------------------------------------------------------------------------

STYLES = ("terse", "neutral", "verbose")


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings for the synthetic translation task.

    Each lemma gets a source surface plus exactly two target realizations
    (short and long, with the long one strictly longer). A sentence's
    style fixes the probability that each word is realized long: terse 0,
    verbose 1, neutral ``neutral_long_prob``.
    """

    n_pairs: int = 1000
    lexicon_size: int = 40
    src_len: tuple[int, int] = (4, 6)
    short_len: tuple[int, int] = (2, 4)
    long_len: tuple[int, int] = (6, 8)
    sent_len: tuple[int, int] = (3, 9)
    style_mix: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    neutral_long_prob: float = 0.65
    seed: int = 0
    # train/dev/test splits share one lemma table but draw different
    # sentences: fix lexicon_seed across splits, vary seed
    lexicon_seed: int | None = None

    def __post_init__(self):
        if self.n_pairs < 1:
            raise CorpusError("n_pairs must be >= 1")
        if self.lexicon_size < 1:
            raise CorpusError("empty lexicon")
        for name, lo_hi in (("src_len", self.src_len), ("short_len", self.short_len),
                            ("long_len", self.long_len), ("sent_len", self.sent_len)):
            lo, hi = lo_hi
            if not (1 <= lo <= hi):
                raise CorpusError(f"bad {name} range {lo_hi}")
        if abs(sum(self.style_mix) - 1.0) > 1e-9:
            raise CorpusError(f"style mix must sum to 1, got {self.style_mix}")
        if any(f < 0 for f in self.style_mix):
            raise CorpusError("negative style fraction")
        if not 0.0 <= self.neutral_long_prob <= 1.0:
            raise CorpusError("neutral_long_prob must be in [0, 1]")
        if self.long_len[1] <= self.short_len[0]:
            raise CorpusError("no long length can exceed even the shortest short form")


@dataclass(frozen=True)
class Lemma:
    src: str
    short: str
    long: str


def _random_word(rng: np.random.Generator, length: int, taken: set[str]) -> str:
    letters = string.ascii_lowercase
    for _ in range(10000):
        word = "".join(letters[i] for i in rng.integers(0, 26, size=length))
        if word not in taken:
            taken.add(word)
            return word
    raise CorpusError("could not draw a unique surface word; enlarge length ranges")


def build_lexicon(spec: SynthSpec, rng: np.random.Generator) -> list[Lemma]:
    """Draw the lemma table; all surfaces are distinct words."""
    taken: set[str] = set()
    lemmas = []
    for _ in range(spec.lexicon_size):
        src_n = int(rng.integers(spec.src_len[0], spec.src_len[1] + 1))
        short_n = int(rng.integers(spec.short_len[0], spec.short_len[1] + 1))
        long_lo = max(spec.long_len[0], short_n + 1)
        if long_lo > spec.long_len[1]:
            raise CorpusError(
                f"no long length > {short_n} available in range {spec.long_len}"
            )
        long_n = int(rng.integers(long_lo, spec.long_len[1] + 1))
        lemmas.append(Lemma(
            src=_random_word(rng, src_n, taken),
            short=_random_word(rng, short_n, taken),
            long=_random_word(rng, long_n, taken),
        ))
    return lemmas


_STYLE_LONG_PROB = {"terse": 0.0, "verbose": 1.0}


def generate_synthetic(
    spec: SynthSpec, thresholds: Thresholds = Thresholds()
) -> list[SentencePair]:
    """Generate a deterministic corpus of controllable-length pairs.

    Lemma sequences are drawn from a pool roughly a third of the corpus
    size, so the same source string recurs under different styles and
    thus with different target lengths.
    """
    lexicon_rng = np.random.default_rng(
        spec.seed if spec.lexicon_seed is None else spec.lexicon_seed
    )
    lemmas = build_lexicon(spec, lexicon_rng)
    rng = np.random.default_rng(spec.seed)

    pool_size = max(1, spec.n_pairs // 3)
    pool: list[list[int]] = []
    for _ in range(pool_size):
        n_words = int(rng.integers(spec.sent_len[0], spec.sent_len[1] + 1))
        pool.append([int(i) for i in rng.integers(0, len(lemmas), size=n_words)])

    style_probs = np.asarray(spec.style_mix, dtype=np.float64)
    pairs = []
    for _ in range(spec.n_pairs):
        seq = pool[int(rng.integers(0, pool_size))]
        style = STYLES[int(rng.choice(3, p=style_probs))]
        p_long = _STYLE_LONG_PROB.get(style, spec.neutral_long_prob)
        src_words = [lemmas[i].src for i in seq]
        tgt_words = [
            lemmas[i].long if rng.random() < p_long else lemmas[i].short
            for i in seq
        ]
        pairs.append(make_pair(" ".join(src_words), " ".join(tgt_words), thresholds))
    return pairs


# ---------------------------------------------------------------------------
# Corpus files
# ---------------------------------------------------------------------------

def write_tsv(pairs: list[SentencePair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(f"{pair.src}\t{pair.tgt}\n")


def read_tsv(
    path: str | Path, thresholds: Thresholds = Thresholds()
) -> tuple[list[SentencePair], int]:
    """Read a tab-separated parallel file.

    A leading length token on the source side is stripped (the classified
    pair is rebuilt from the token-free surfaces); the count of stripped
    tokens is returned alongside the pairs.
    """
    pairs = []
    stripped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cells = line.split("\t")
            if len(cells) != 2:
                raise CorpusError(f"{path}:{lineno}: expected 2 tab-separated columns")
            src, token_cls = strip_length_token(cells[0])
            stripped += token_cls is not None
            pairs.append(make_pair(src, cells[1], thresholds))
    return pairs, stripped


def read_parallel(
    src_path: str | Path, tgt_path: str | Path, thresholds: Thresholds = Thresholds()
) -> tuple[list[SentencePair], int]:
    """Read two aligned one-sentence-per-line files."""
    src_lines = Path(src_path).read_text(encoding="utf-8").splitlines()
    tgt_lines = Path(tgt_path).read_text(encoding="utf-8").splitlines()
    if len(src_lines) != len(tgt_lines):
        raise CorpusError(
            f"line count mismatch: {src_path} has {len(src_lines)}, "
            f"{tgt_path} has {len(tgt_lines)}"
        )
    pairs = []
    stripped = 0
    for src, tgt in zip(src_lines, tgt_lines):
        if not src.strip() and not tgt.strip():
            continue
        raw_src, token_cls = strip_length_token(src)
        stripped += token_cls is not None
        pairs.append(make_pair(raw_src, tgt, thresholds))
    return pairs, stripped


# ---------------------------------------------------------------------------
# Batching over encoded pairs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodedPair:
    """A numericalized pair ready for batching.

    ``src_ids`` already contains any control token and the end marker;
    ``tgt_ids`` holds content subwords only (BOS/EOS are added by the
    batch collator). ``tgt_char_lens`` mirrors textproc's per-token
    character contributions.
    """

    index: int
    src_ids: tuple[int, ...]
    tgt_ids: tuple[int, ...]
    tgt_char_lens: tuple[int, ...]
    tgt_total_chars: int
    src_chars: int

    @property
    def n_tokens(self) -> int:
        return len(self.src_ids) + len(self.tgt_ids)


@dataclass(frozen=True)
class Batch:
    """Padded id matrices plus masks and decoder cursor positions.

    ``cursor_pos[b, t]`` is the cumulative character count of target
    tokens preceding the one predicted at decoder slot ``t`` (slot 0 sits
    on BOS and predicts the first token, so its cursor is 0; the final
    slot predicts EOS with the cursor at the full target length).
    """

    src: np.ndarray          # (B, S) int64, padded
    src_mask: np.ndarray     # (B, S) bool, True at real tokens
    tgt_in: np.ndarray       # (B, T+1) int64, BOS + content
    tgt_out: np.ndarray      # (B, T+1) int64, content + EOS
    tgt_mask: np.ndarray     # (B, T+1) bool, True at real prediction slots
    cursor_pos: np.ndarray   # (B, T+1) int64
    tgt_lens: np.ndarray     # (B,) int64 target character lengths
    src_chars: np.ndarray    # (B,) int64
    indices: tuple[int, ...]

    @property
    def size(self) -> int:
        return self.src.shape[0]


def collate(pairs: list[EncodedPair], pad_id: int, bos_id: int, eos_id: int) -> Batch:
    if not pairs:
        raise CorpusError("cannot collate an empty batch")
    max_src = max(len(p.src_ids) for p in pairs)
    max_tgt = max(len(p.tgt_ids) for p in pairs) + 1  # +1 for the EOS slot
    n = len(pairs)
    src = np.full((n, max_src), pad_id, dtype=np.int64)
    src_mask = np.zeros((n, max_src), dtype=bool)
    tgt_in = np.full((n, max_tgt), pad_id, dtype=np.int64)
    tgt_out = np.full((n, max_tgt), pad_id, dtype=np.int64)
    tgt_mask = np.zeros((n, max_tgt), dtype=bool)
    cursor = np.zeros((n, max_tgt), dtype=np.int64)
    tgt_lens = np.zeros(n, dtype=np.int64)
    src_chars = np.zeros(n, dtype=np.int64)
    for b, p in enumerate(pairs):
        s, t = len(p.src_ids), len(p.tgt_ids)
        src[b, :s] = p.src_ids
        src_mask[b, :s] = True
        tgt_in[b, 0] = bos_id
        tgt_in[b, 1:t + 1] = p.tgt_ids
        tgt_out[b, :t] = p.tgt_ids
        tgt_out[b, t] = eos_id
        tgt_mask[b, :t + 1] = True
        cursor[b, 1:t + 1] = np.cumsum(p.tgt_char_lens)
        tgt_lens[b] = p.tgt_total_chars
        src_chars[b] = p.src_chars
    return Batch(
        src=src, src_mask=src_mask, tgt_in=tgt_in, tgt_out=tgt_out,
        tgt_mask=tgt_mask, cursor_pos=cursor, tgt_lens=tgt_lens,
        src_chars=src_chars, indices=tuple(p.index for p in pairs),
    )


def make_batches(
    encoded: list[EncodedPair], max_tokens: int,
    pad_id: int, bos_id: int, eos_id: int,
) -> list[Batch]:
    """Greedily pack pairs, in order, into batches of at most ``max_tokens``
    source+target subword tokens each."""
    if max_tokens < 1:
        raise CorpusError("max_tokens must be >= 1")
    batches = []
    bucket: list[EncodedPair] = []
    used = 0
    for pair in encoded:
        cost = pair.n_tokens
        if cost > max_tokens:
            raise CorpusError(
                f"pair {pair.index} needs {cost} tokens, over the {max_tokens} budget"
            )
        if bucket and used + cost > max_tokens:
            batches.append(collate(bucket, pad_id, bos_id, eos_id))
            bucket, used = [], 0
        bucket.append(pair)
        used += cost
    if bucket:
        batches.append(collate(bucket, pad_id, bos_id, eos_id))
    return batches

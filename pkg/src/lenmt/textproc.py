"""Subword segmentation (minimal BPE) and character-length bookkeeping.

Every length computation in the system (length ratios, cursor positions,
remaining-length budgets) is anchored to ``char_length``: the number of
characters of the whitespace-normalized surface string, counting single
inter-word spaces. Subword sequences carry per-token character
contributions that sum back to that anchor, so position arithmetic over
subwords can never drift from the surface string.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

MARKER = "@@"  # word-internal continuation suffix on non-final subwords

MERGES_HEADER = "#bpe-v1"


class MarkerError(ValueError):
    """Malformed subword-marker usage in a token sequence."""


def normalize_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


def char_length(text: str) -> int:
    """Character count of a surface string, including inter-word spaces.

    The string is whitespace-normalized first, so "  a  b " counts as
    "a b" -> 3. Empty or all-whitespace input counts as 0.
    """
    return len(normalize_ws(text))


@dataclass(frozen=True)
class TokenSeq:
    """A subword sequence with per-token character contributions.

    ``char_lens[i]`` is the number of surface characters token ``i``
    accounts for: its own characters (marker excluded) plus, on the final
    subword of each non-final word, the single following space. Hence
    ``sum(char_lens) == total_chars == char_length(detokenize(self))``.
    """

    tokens: tuple[str, ...]
    char_lens: tuple[int, ...]
    total_chars: int

    def __post_init__(self):
        if len(self.tokens) != len(self.char_lens):
            raise ValueError("tokens and char_lens length mismatch")
        if sum(self.char_lens) != self.total_chars:
            raise ValueError(
                f"char_lens sum {sum(self.char_lens)} != total_chars {self.total_chars}"
            )


@dataclass(frozen=True)
class MergeTable:
    """An ordered BPE merge list plus the symbol vocabulary it induces."""

    merges: tuple[tuple[str, str], ...]
    vocab: frozenset[str] = field(default_factory=frozenset)
    marker: str = MARKER

    def __post_init__(self):
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge pair")


EMPTY_TABLE = MergeTable(merges=())


def _word_pair_counts(words: dict[tuple[str, ...], int]) -> Counter:
    counts: Counter = Counter()
    for symbols, freq in words.items():
        for pair in zip(symbols, symbols[1:]):
            counts[pair] += freq
    return counts


def _merge_symbols(symbols: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    left, right = pair
    merged = left + right
    out = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == left and symbols[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return tuple(out)


def learn_bpe(corpus: list[str], num_merges: int) -> MergeTable:
    """Learn up to ``num_merges`` merges from a corpus of surface sentences.

    Iteratively merges the most frequent adjacent symbol pair; ties break
    on the lexicographically smallest pair so learning is deterministic.
    """
    if not corpus:
        raise ValueError("empty corpus")
    if num_merges < 0:
        raise ValueError("num_merges must be >= 0")

    word_freq: Counter = Counter()
    for sentence in corpus:
        for word in normalize_ws(sentence).split(" "):
            if word:
                word_freq[word] += 1

    words: dict[tuple[str, ...], int] = {
        tuple(word): freq for word, freq in word_freq.items()
    }

    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        counts = _word_pair_counts(words)
        if not counts:
            break
        best_count = max(counts.values())
        pair = min(p for p, c in counts.items() if c == best_count)
        merges.append(pair)
        merged_words: dict[tuple[str, ...], int] = {}
        for symbols, freq in words.items():
            new_symbols = _merge_symbols(symbols, pair)
            merged_words[new_symbols] = merged_words.get(new_symbols, 0) + freq
        words = merged_words

    table = MergeTable(merges=tuple(merges))
    vocab: set[str] = set()
    for word in word_freq:
        vocab.update(_segment_word(word, table))
    return MergeTable(merges=tuple(merges), vocab=frozenset(vocab))


def _segment_word(word: str, table: MergeTable) -> tuple[str, ...]:
    """Split a word into symbols by applying merges in learned order."""
    symbols = tuple(word)
    for pair in table.merges:
        if len(symbols) < 2:
            break
        symbols = _merge_symbols(symbols, pair)
    return symbols


def apply_bpe(sentence: str, table: MergeTable) -> TokenSeq:
    """Segment a surface sentence into marked subwords with char accounting.

    Non-final subwords of a word get the continuation marker appended;
    the final subword of each non-final word absorbs the following space
    into its character contribution, keeping the TokenSeq invariant local.
    """
    norm = normalize_ws(sentence)
    if not norm:
        return TokenSeq(tokens=(), char_lens=(), total_chars=0)
    words = norm.split(" ")
    tokens: list[str] = []
    char_lens: list[int] = []
    for w_idx, word in enumerate(words):
        symbols = _segment_word(word, table)
        last = len(symbols) - 1
        for s_idx, sym in enumerate(symbols):
            if s_idx < last:
                tokens.append(sym + table.marker)
                char_lens.append(len(sym))
            else:
                tokens.append(sym)
                # space after the word belongs to its last subword
                char_lens.append(len(sym) + (1 if w_idx < len(words) - 1 else 0))
    return TokenSeq(
        tokens=tuple(tokens), char_lens=tuple(char_lens), total_chars=len(norm)
    )


def detokenize(seq_or_tokens) -> str:
    """Join subword tokens back into the surface string.

    Inverse of ``apply_bpe`` up to whitespace normalization. Raises
    ``MarkerError`` on a dangling continuation marker (final token marked)
    or a token that is nothing but the marker.
    """
    tokens = seq_or_tokens.tokens if isinstance(seq_or_tokens, TokenSeq) else tuple(seq_or_tokens)
    words: list[str] = []
    current = ""
    for i, tok in enumerate(tokens):
        if tok.endswith(MARKER):
            stem = tok[: -len(MARKER)]
            if not stem:
                raise MarkerError(f"bare marker token at position {i}")
            current += stem
        else:
            if not tok:
                raise MarkerError(f"empty token at position {i}")
            words.append(current + tok)
            current = ""
    if current:
        raise MarkerError("sequence ends with a continuation marker")
    return " ".join(words)


def token_char_len(token: str) -> int:
    """Surface characters a single token contributes, ignoring spaces."""
    if token.endswith(MARKER):
        return len(token) - len(MARKER)
    return len(token)


def save_merges(table: MergeTable, path: str | Path) -> None:
    """Write a merge table: version header, then one "left right" per line."""
    lines = [MERGES_HEADER]
    lines.extend(f"{left} {right}" for left, right in table.merges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_merges(path: str | Path) -> MergeTable:
    """Read a merge table written by ``save_merges``."""
    raw = Path(path).read_text(encoding="utf-8").splitlines()
    if not raw or raw[0].strip() != MERGES_HEADER:
        raise ValueError(f"{path}: missing {MERGES_HEADER} header")
    merges = []
    for lineno, line in enumerate(raw[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(" ")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'left right'")
        merges.append((parts[0], parts[1]))
    return MergeTable(merges=tuple(merges))

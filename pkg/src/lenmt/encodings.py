"""Closed-form positional and length encodings.

All three encodings share one trigonometric kernel over an argument x:

    component 2i   = sin(x / base^(2i/d))
    component 2i+1 = cos(x / base^((2i+1)/d))      for i = 0 .. d/2-1

Note the denominator exponent: component j always uses j/d, so the cosine
components use odd exponents (2i+1)/d. This deliberately differs from the
widespread transformer convention that reuses 2i/d for both halves of a
sin/cos pair; tests pin the distinction.

The positional encoding evaluates the kernel at the token position. The
absolute length encoding evaluates it at the remaining character budget
(len - pos); the relative variant at the quantized covered proportion
q_N(pos / len) with q_N(x) = floor(x * N) on [0, 1] into {0, .., N}.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

VARIANT_PE = "PE"
VARIANT_LE_ABS = "LE_abs"
VARIANT_LE_REL = "LE_rel"
VARIANTS = (VARIANT_PE, VARIANT_LE_ABS, VARIANT_LE_REL)

DEFAULT_BASE = 10000.0
DEFAULT_QUANT_LEVELS = 5  # small N; a large N behaves like the absolute variant


@dataclass(frozen=True)
class EncodingSpec:
    d: int
    variant: str = VARIANT_PE
    n_levels: int = DEFAULT_QUANT_LEVELS
    base: float = DEFAULT_BASE

    def __post_init__(self):
        if self.d <= 0 or self.d % 2 != 0:
            raise ValueError(f"embedding dimension must be even and positive, got {self.d}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.n_levels < 1:
            raise ValueError("n_levels must be >= 1")
        if self.base <= 1:
            raise ValueError("base must be > 1")


@dataclass(frozen=True)
class CharCursor:
    """Character progress through a sequence of known character length.

    ``pos`` counts the characters of all preceding tokens; ``len_chars``
    is the total character budget. ``pos`` may exceed ``len_chars`` during
    overgeneration; the encodings stay total in that regime.
    """

    pos: int
    len_chars: int

    def __post_init__(self):
        if self.pos < 0:
            raise ValueError("cursor pos must be >= 0")
        if self.len_chars < 1:
            raise ValueError("cursor len must be >= 1")


def _check_dim(d: int) -> None:
    if d <= 0 or d % 2 != 0:
        raise ValueError(f"embedding dimension must be even and positive, got {d}")


def trig_encode(args, d: int, base: float = DEFAULT_BASE) -> np.ndarray:
    """Evaluate the shared kernel at scalar or array arguments.

    Returns shape ``args.shape + (d,)`` float64; every component lies in
    [-1, 1] for any finite argument (negative arguments included).
    """
    _check_dim(d)
    x = np.asarray(args, dtype=np.float64)
    j = np.arange(d, dtype=np.float64)
    angles = x[..., None] / np.power(base, j / d)
    out = np.empty(angles.shape, dtype=np.float64)
    out[..., 0::2] = np.sin(angles[..., 0::2])
    out[..., 1::2] = np.cos(angles[..., 1::2])
    return out


def sinusoidal_pe(pos, spec: EncodingSpec) -> np.ndarray:
    """Trigonometric positional encoding at a (token) position."""
    return trig_encode(pos, spec.d, spec.base)


def le_abs(cursor: CharCursor, spec: EncodingSpec) -> np.ndarray:
    """Absolute length encoding: the kernel at the remaining length.

    Identical to ``sinusoidal_pe`` evaluated at ``len - pos``; a negative
    remaining length (overgeneration) passes through unchanged.
    """
    return trig_encode(cursor.len_chars - cursor.pos, spec.d, spec.base)


def quantize(cursor: CharCursor, n_levels: int) -> int:
    """Quantized covered proportion: floor(min(pos/len, 1) * N) in {0..N}.

    Computed in exact integer arithmetic (pos*N // len) so bucket
    boundaries never suffer float rounding; pos > len clamps to N.
    """
    if n_levels < 1:
        raise ValueError("n_levels must be >= 1")
    return min((cursor.pos * n_levels) // cursor.len_chars, n_levels)


def quantize_array(pos: np.ndarray, len_chars: np.ndarray, n_levels: int) -> np.ndarray:
    """Vectorized ``quantize`` over integer arrays."""
    pos = np.asarray(pos, dtype=np.int64)
    lens = np.asarray(len_chars, dtype=np.int64)
    return np.minimum((pos * n_levels) // lens, n_levels)


def le_rel(cursor: CharCursor, spec: EncodingSpec) -> np.ndarray:
    """Relative length encoding: the kernel at the quantized proportion."""
    return trig_encode(quantize(cursor, spec.n_levels), spec.d, spec.base)


def encode(cursor: CharCursor, spec: EncodingSpec) -> np.ndarray:
    """Dispatch on the spec's variant (PE uses cursor.pos as the position)."""
    if spec.variant == VARIANT_PE:
        return sinusoidal_pe(cursor.pos, spec)
    if spec.variant == VARIANT_LE_ABS:
        return le_abs(cursor, spec)
    return le_rel(cursor, spec)


_table_cache: dict[tuple, np.ndarray] = {}
_table_lock = threading.Lock()


def encoding_table(spec: EncodingSpec, len_chars: int, max_pos: int | None = None) -> np.ndarray:
    """Precomputed encoding rows for pos = 0..max_pos at a fixed length.

    Cached by (variant, d, N, base, len, max_pos); safe for concurrent
    readers, population serialized by a lock. For the PE variant
    ``len_chars`` only bounds the default row count.
    """
    if len_chars < 1:
        raise ValueError("len_chars must be >= 1")
    if max_pos is None:
        max_pos = len_chars
    key = (spec.variant, spec.d, spec.n_levels, spec.base, len_chars, max_pos)
    table = _table_cache.get(key)
    if table is not None:
        return table
    with _table_lock:
        table = _table_cache.get(key)
        if table is not None:
            return table
        pos = np.arange(max_pos + 1, dtype=np.int64)
        if spec.variant == VARIANT_PE:
            args = pos.astype(np.float64)
        elif spec.variant == VARIANT_LE_ABS:
            args = (len_chars - pos).astype(np.float64)
        else:
            args = quantize_array(pos, np.full_like(pos, len_chars), spec.n_levels).astype(np.float64)
        table = trig_encode(args, spec.d, spec.base)
        table.setflags(write=False)
        _table_cache[key] = table
    return table


def format_table(spec: EncodingSpec, len_chars: int, max_pos: int | None = None,
                 precision: int = 6) -> str:
    """Render an encoding table as a text matrix (one row per position)."""
    table = encoding_table(spec, len_chars, max_pos)
    header = f"# variant={spec.variant} d={spec.d} N={spec.n_levels} base={spec.base:g} len={len_chars}"
    lines = [header]
    for pos, row in enumerate(table):
        vals = " ".join(f"{v:+.{precision}f}" for v in row)
        lines.append(f"{pos:6d} {vals}")
    return "\n".join(lines)

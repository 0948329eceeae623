"""Greedy and beam-search decoding with all length-control knobs.

Hypotheses carry a character cursor mirroring the training-side
convention: the length-encoding argument for a decoder slot is the
character count of the tokens up to and including that slot, where the
final subword of a word counts its following space as long as the budget
is not yet filled (in training data the space materializes exactly when
another word follows, and sequences end exactly on budget). EOS is never
forced when the cursor reaches the budget: the model must stop on its
own, and overshoot surfaces in the length-ratio metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from .corpus import LengthClass
from .encodings import CharCursor
from .model import BOS_ID, EOS_ID, PAD_ID, Checkpoint, Model, Vocab, model_from_checkpoint
from .textproc import MARKER, MergeTable, TokenSeq, apply_bpe, token_char_len


class DecodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecodeControl:
    """Decoding strategy: beam width, length penalty, and control signals.

    ``token_class`` picks the source length token (Token-mode models
    only); ``target_len_chars`` overrides the character budget, which
    otherwise defaults to the source length; ``scale`` multiplies the
    budget (encoding-mode models only).
    """

    beam_size: int = 4
    alpha: float = 0.0
    token_class: LengthClass | None = None
    target_len_chars: int | None = None
    scale: float = 1.0
    max_len_tokens: int | None = None

    def __post_init__(self):
        if self.beam_size < 1:
            raise DecodeError("beam_size must be >= 1")
        if self.scale <= 0:
            raise DecodeError("scale must be positive")
        if self.target_len_chars is not None and self.target_len_chars < 1:
            raise DecodeError("target_len_chars must be >= 1")


def length_penalty(len_tokens: int, alpha: float) -> float:
    """The GNMT penalty ((5 + len) / 6)^alpha; hypotheses rank by
    log-probability divided by this value."""
    if len_tokens < 1:
        raise DecodeError("length penalty needs len >= 1")
    return ((5.0 + len_tokens) / 6.0) ** alpha


def resolve_target_len(src: TokenSeq, ctrl: DecodeControl) -> int:
    """Character budget: explicit target if given, else the source length,
    scaled and rounded half-up, floored at 1 character."""
    base = ctrl.target_len_chars if ctrl.target_len_chars is not None else src.total_chars
    scaled = math.floor(base * ctrl.scale + 0.5)
    return max(1, scaled)


@dataclass(frozen=True)
class Hypothesis:
    """A partial or finished translation with character bookkeeping.

    ``plain_chars`` is the character length of the detokenized prefix;
    ``cursor_history`` records the length-encoding position used at every
    decoder slot (BOS slot included). Finished hypotheses are frozen.
    """

    ids: tuple[int, ...]
    logprob: float
    plain_chars: int
    word_open: bool
    cursor_history: tuple[int, ...]
    budget: int
    finished: bool = False
    warning: bool = False

    @property
    def cursor(self) -> CharCursor:
        return CharCursor(pos=self.plain_chars, len_chars=max(self.budget, 1))

    @property
    def n_tokens(self) -> int:
        # EOS counts toward the penalized length
        return len(self.ids) + 1

    def penalized(self, alpha: float) -> float:
        return self.logprob / length_penalty(self.n_tokens, alpha)


def start_hypothesis(budget: int) -> Hypothesis:
    return Hypothesis(ids=(), logprob=0.0, plain_chars=0, word_open=False,
                      cursor_history=(0,), budget=budget)


def join_tokens(tokens) -> str:
    """Surface form of generated subwords, tolerant of a dangling marker.

    Unlike the strict textproc detokenizer, a sequence that stops
    mid-word simply yields the partial word, so the surface length always
    equals the hypothesis's character count.
    """
    words: list[str] = []
    current = ""
    for tok in tokens:
        if tok.endswith(MARKER):
            current += tok[: -len(MARKER)]
        else:
            words.append(current + tok)
            current = ""
    if current:
        words.append(current)
    return " ".join(words)


def extend_hypothesis(hyp: Hypothesis, token_id: int, token: str, lp: float) -> Hypothesis:
    """Append a content token, updating chars and the cursor history."""
    if hyp.finished:
        raise DecodeError("cannot extend a finished hypothesis")
    plain = hyp.plain_chars
    if not hyp.word_open and hyp.ids:
        plain += 1  # joining space before a new word
    plain += token_char_len(token)
    word_open = token.endswith(MARKER)
    # training-side view: a closed word keeps its trailing space while
    # budget remains; the final slot of an on-budget sequence drops it
    if word_open or plain >= hyp.budget:
        slot_pos = plain
    else:
        slot_pos = plain + 1
    return replace(
        hyp,
        ids=hyp.ids + (token_id,),
        logprob=hyp.logprob + lp,
        plain_chars=plain,
        word_open=word_open,
        cursor_history=hyp.cursor_history + (slot_pos,),
    )


def finish_hypothesis(hyp: Hypothesis, eos_lp: float) -> Hypothesis:
    return replace(hyp, logprob=hyp.logprob + eos_lp, finished=True)


def beam_core(
    score_fn,
    vocab_tokens,
    ctrl: DecodeControl,
    budget: int,
    max_len_tokens: int,
    banned_ids: frozenset[int] = frozenset(),
) -> list[Hypothesis]:
    """Generic beam expansion over a per-step scoring function.

    ``score_fn(hyps)`` returns an (K, V) array of next-token log
    probabilities. Per step, each hypothesis nominates its top
    ``beam_size`` next tokens: an EOS nomination banks the finished
    hypothesis, the rest compete globally for the ``beam_size`` live
    slots. With beam 1 this degenerates to an exact argmax rollout; with
    a beam at least vocab^max_len nothing is ever pruned, so the ranking
    equals exhaustive search. Returns finished hypotheses ranked by
    penalized score or, when nothing finished within the token cap, the
    best unfinished ones flagged with a warning.
    """
    banned = set(banned_ids) | {PAD_ID, BOS_ID}
    live = [start_hypothesis(budget)]
    finished: list[Hypothesis] = []

    for step in range(max_len_tokens + 1):
        if not live:
            break
        logprobs = np.asarray(score_fn(live), dtype=np.float64)
        if logprobs.shape[0] != len(live):
            raise DecodeError("score_fn returned a misaligned batch")
        candidates = []
        for k, hyp in enumerate(live):
            row = logprobs[k]
            taken = 0
            for v in np.argsort(row)[::-1]:
                if taken >= ctrl.beam_size:
                    break
                v = int(v)
                lp = float(row[v])
                if v in banned or not math.isfinite(lp):
                    continue
                taken += 1
                if v == EOS_ID:
                    finished.append(finish_hypothesis(hyp, lp))
                else:
                    candidates.append((hyp.logprob + lp, k, v))
        finished.sort(key=lambda h: h.penalized(ctrl.alpha), reverse=True)
        del finished[ctrl.beam_size:]
        if step == max_len_tokens:
            break
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        live = [
            extend_hypothesis(live[k], v, vocab_tokens[v], score - live[k].logprob)
            for score, k, v in candidates[: ctrl.beam_size]
        ]

    if finished:
        return finished
    ranked = sorted(live, key=lambda h: h.penalized(ctrl.alpha), reverse=True)
    return [replace(h, warning=True) for h in ranked[: ctrl.beam_size]]


# ---------------------------------------------------------------------------
# Model-backed decoding
# ---------------------------------------------------------------------------

class Translator:
    """Bundles a trained model with its vocabulary and merge table."""

    def __init__(self, model: Model, vocab: Vocab, table: MergeTable):
        self.model = model
        self.vocab = vocab
        self.table = table
        # control tokens are source-side only; never generate them
        if vocab.has_length_tokens:
            self._banned = frozenset(vocab.id(cls.token) for cls in LengthClass)
        else:
            self._banned = frozenset()

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "Translator":
        return cls(model_from_checkpoint(ckpt), ckpt.vocab(), ckpt.merge_table())

    def _validate(self, ctrl: DecodeControl) -> None:
        mode = self.model.config.length_mode
        if mode.token and ctrl.token_class is None:
            raise DecodeError("model needs a token_class to decode")
        if not mode.token and ctrl.token_class is not None:
            raise DecodeError("token_class given but the model has no token mode")
        if mode.encoding is None and (ctrl.target_len_chars is not None or ctrl.scale != 1.0):
            raise DecodeError("target length controls need a length-encoding model")

    def _encode_source(self, src_text: str, ctrl: DecodeControl):
        src_seq = apply_bpe(src_text, self.table)
        if not src_seq.tokens:
            raise DecodeError("empty source sentence")
        src_ids = list(self.vocab.encode(src_seq.tokens)) + [EOS_ID]
        if ctrl.token_class is not None:
            src_ids.insert(0, self.vocab.id(ctrl.token_class.token))
        return src_seq, src_ids

    def beam_search(self, src_text: str, ctrl: DecodeControl) -> list[tuple[str, float, Hypothesis]]:
        """Translate one sentence; returns (surface, penalized score,
        hypothesis) triples ranked best-first."""
        self._validate(ctrl)
        src_seq, src_ids = self._encode_source(src_text, ctrl)
        mode = self.model.config.length_mode
        budget = resolve_target_len(src_seq, ctrl) if mode.encoding else src_seq.total_chars
        max_len = ctrl.max_len_tokens
        if max_len is None:
            max_len = 2 * len(src_seq.tokens) + 10

        src = torch.tensor([src_ids], dtype=torch.int64)
        src_mask = torch.ones_like(src, dtype=torch.bool)
        with torch.no_grad():
            memory = self.model.encode(src, src_mask)

        def score_fn(hyps: list[Hypothesis]) -> np.ndarray:
            k = len(hyps)
            slots = len(hyps[0].cursor_history)
            tgt_in = torch.full((k, slots), PAD_ID, dtype=torch.int64)
            cursor = np.zeros((k, slots), dtype=np.int64)
            for i, hyp in enumerate(hyps):
                tgt_in[i, 0] = BOS_ID
                if hyp.ids:
                    tgt_in[i, 1:] = torch.tensor(hyp.ids, dtype=torch.int64)
                cursor[i] = hyp.cursor_history
            tgt_mask = torch.ones((k, slots), dtype=torch.bool)
            lens = np.full(k, budget, dtype=np.int64)
            with torch.no_grad():
                logits = self.model.decode(
                    memory.expand(k, -1, -1), src_mask.expand(k, -1),
                    tgt_in, tgt_mask, cursor, lens,
                )
                return torch.log_softmax(logits[:, -1, :], dim=-1).numpy()

        hyps = beam_core(score_fn, self.vocab.tokens, ctrl, budget, max_len, self._banned)
        out = []
        for hyp in hyps:
            tokens = [self.vocab.tokens[i] for i in hyp.ids]
            out.append((join_tokens(tokens), hyp.penalized(ctrl.alpha), hyp))
        return out

    def greedy(self, src_text: str, ctrl: DecodeControl) -> str:
        """Argmax rollout; used as the beam-1 oracle and for quick checks."""
        best = self.beam_search(src_text, replace(ctrl, beam_size=1))
        return best[0][0]


@dataclass(frozen=True)
class TranslationResult:
    index: int
    src: str
    output: str
    score: float
    src_chars: int
    out_chars: int
    warning: bool = False
    error: str | None = None


def translate_corpus(
    translator: Translator, sentences: list[str], ctrl: DecodeControl
) -> list[TranslationResult]:
    """Order-preserving corpus decoding; per-sentence failures are
    recorded in the result instead of aborting the batch."""
    results = []
    for index, src in enumerate(sentences):
        src_seq = apply_bpe(src, translator.table)
        try:
            ranked = translator.beam_search(src, ctrl)
            top_surface, top_score, top_hyp = ranked[0]
            results.append(TranslationResult(
                index=index, src=src, output=top_surface, score=top_score,
                src_chars=src_seq.total_chars,
                out_chars=top_hyp.plain_chars,
                warning=top_hyp.warning,
            ))
        except Exception as exc:  # noqa: BLE001 - per-sentence error contract
            results.append(TranslationResult(
                index=index, src=src, output="", score=float("-inf"),
                src_chars=src_seq.total_chars, out_chars=0,
                warning=True, error=str(exc),
            ))
    return results

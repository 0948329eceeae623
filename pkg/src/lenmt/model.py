"""Desk-scale transformer encoder-decoder with length-aware decoding inputs.

The decoder input embedding is the sum of the token embedding, the
standard token-position encoding, and (when a length mode with an
encoding is active) a character-cursor length encoding: the remaining
character budget (absolute) or the quantized covered proportion
(relative). Position encodings use token indices; length encodings use
character cursors.

Checkpoints are single self-describing binary files: magic "LCTL",
format version, a JSON metadata record (config, hyper, merges,
vocabulary, lineage), then one checksummed blob per parameter.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from .corpus import (
    Batch,
    EncodedPair,
    LengthClass,
    SentencePair,
    make_batches,
    strip_length_token,
)
from .encodings import DEFAULT_BASE, DEFAULT_QUANT_LEVELS, quantize_array, trig_encode
from .nnet import AdamState, DivergenceError, TrainHyper, adam_step, dropout, label_smoothed_xent, lr_schedule
from .textproc import MergeTable, apply_bpe

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>")

CHECKPOINT_MAGIC = b"LCTL"
CHECKPOINT_VERSION = 1


class ModelError(ValueError):
    pass


class CheckpointError(RuntimeError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


# ---------------------------------------------------------------------------
# Length modes and configuration
# ---------------------------------------------------------------------------

ENC_ABS = "abs"
ENC_REL = "rel"


@dataclass(frozen=True)
class LengthMode:
    """Which control signals the model consumes.

    ``token``: a length-class token is prepended to the source.
    ``encoding``: None, "abs" or "rel" decoder length encoding.
    """

    token: bool = False
    encoding: str | None = None

    def __post_init__(self):
        if self.encoding not in (None, ENC_ABS, ENC_REL):
            raise ModelError(f"unknown length encoding {self.encoding!r}")

    @property
    def label(self) -> str:
        if self.token and self.encoding:
            return f"token+enc-{self.encoding}"
        if self.token:
            return "token"
        if self.encoding:
            return f"enc-{self.encoding}"
        return "none"

    @classmethod
    def parse(cls, label: str) -> "LengthMode":
        label = label.strip().lower()
        table = {
            "none": cls(),
            "token": cls(token=True),
            "enc-abs": cls(encoding=ENC_ABS),
            "enc-rel": cls(encoding=ENC_REL),
            "token+enc-abs": cls(token=True, encoding=ENC_ABS),
            "token+enc-rel": cls(token=True, encoding=ENC_REL),
        }
        if label not in table:
            raise ModelError(f"unknown length mode {label!r} (choose from {sorted(table)})")
        return table[label]


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    ffn_hidden: int = 256
    heads: int = 4
    layers: int = 2
    length_mode: LengthMode = LengthMode()
    n_levels: int = DEFAULT_QUANT_LEVELS
    enc_base: float = DEFAULT_BASE

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ModelError(f"d_model {self.d_model} not divisible by {self.heads} heads")
        if self.d_model % 2 != 0:
            raise ModelError("d_model must be even for sinusoidal encodings")
        if self.layers < 1:
            raise ModelError("need at least one layer")
        if self.ffn_hidden <= self.d_model:
            raise ModelError("feed-forward hidden size must exceed d_model")
        if self.vocab_size < len(SPECIALS):
            raise ModelError("vocabulary too small")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size, "d_model": self.d_model,
            "ffn_hidden": self.ffn_hidden, "heads": self.heads,
            "layers": self.layers, "length_mode": self.length_mode.label,
            "n_levels": self.n_levels, "enc_base": self.enc_base,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        data["length_mode"] = LengthMode.parse(data["length_mode"])
        return cls(**data)


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

class Vocab:
    """Shared source/target subword vocabulary with reserved specials."""

    def __init__(self, tokens):
        self.tokens = tuple(tokens)
        if self.tokens[: len(SPECIALS)] != SPECIALS:
            raise ModelError("vocabulary must start with the reserved specials")
        if len(set(self.tokens)) != len(self.tokens):
            raise ModelError("duplicate vocabulary entries")
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self._ids.get(token, UNK_ID)

    def encode(self, tokens) -> tuple[int, ...]:
        return tuple(self._ids.get(t, UNK_ID) for t in tokens)

    def decode(self, ids) -> list[str]:
        """Map ids back to tokens, dropping pad/bos/eos."""
        out = []
        for i in ids:
            if i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            out.append(self.tokens[i])
        return out

    @property
    def has_length_tokens(self) -> bool:
        return all(cls.token in self._ids for cls in LengthClass)

    def with_length_tokens(self) -> "Vocab":
        """Append the reserved class tokens (no-op if already present)."""
        if self.has_length_tokens:
            return self
        extra = [cls.token for cls in LengthClass if cls.token not in self._ids]
        return Vocab(self.tokens + tuple(extra))


def build_vocab(table: MergeTable, pairs: list[SentencePair],
                include_length_tokens: bool) -> Vocab:
    """Collect subword types (marked forms included) from a training corpus."""
    types: set[str] = set()
    for pair in pairs:
        raw_src, _ = strip_length_token(pair.src)
        for text in (raw_src, pair.tgt):
            types.update(apply_bpe(text, table).tokens)
    tokens = SPECIALS + tuple(sorted(types))
    vocab = Vocab(tokens)
    return vocab.with_length_tokens() if include_length_tokens else vocab


def encode_corpus(pairs: list[SentencePair], table: MergeTable, vocab: Vocab,
                  length_mode: LengthMode) -> list[EncodedPair]:
    """Numericalize pairs per the model's length mode.

    In token mode the pair's observed class id is prepended to the source
    ids; the class token never passes through BPE and never counts toward
    character lengths.
    """
    encoded = []
    for index, pair in enumerate(pairs):
        raw_src, _ = strip_length_token(pair.src)
        src_seq = apply_bpe(raw_src, table)
        src_ids = list(vocab.encode(src_seq.tokens)) + [EOS_ID]
        if length_mode.token:
            src_ids.insert(0, vocab.id(pair.length_class.token))
        tgt_seq = apply_bpe(pair.tgt, table)
        encoded.append(EncodedPair(
            index=index,
            src_ids=tuple(src_ids),
            tgt_ids=vocab.encode(tgt_seq.tokens),
            tgt_char_lens=tgt_seq.char_lens,
            tgt_total_chars=tgt_seq.total_chars,
            src_chars=pair.src_chars,
        ))
    return encoded


# ---------------------------------------------------------------------------
# Transformer modules
# ---------------------------------------------------------------------------

NEG_INF = -1e9


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, heads: int):
        super().__init__()
        self.heads = heads
        self.d_head = d_model // heads
        self.wq = nn.Linear(d_model, d_model)
        self.wk = nn.Linear(d_model, d_model)
        self.wv = nn.Linear(d_model, d_model)
        self.wo = nn.Linear(d_model, d_model)

    def forward(self, query, keyvalue, key_mask, causal, attn_dropout, training, gen):
        b, tq, d = query.shape
        tk = keyvalue.shape[1]
        q = self.wq(query).view(b, tq, self.heads, self.d_head).transpose(1, 2)
        k = self.wk(keyvalue).view(b, tk, self.heads, self.d_head).transpose(1, 2)
        v = self.wv(keyvalue).view(b, tk, self.heads, self.d_head).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], NEG_INF)
        if causal:
            future = torch.triu(torch.ones(tq, tk, dtype=torch.bool), diagonal=1)
            scores = scores.masked_fill(future, NEG_INF)
        attn = torch.softmax(scores, dim=-1)
        attn = dropout(attn, attn_dropout, training, gen)
        out = (attn @ v).transpose(1, 2).reshape(b, tq, d)
        return self.wo(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, hidden: int):
        super().__init__()
        self.lin1 = nn.Linear(d_model, hidden)
        self.lin2 = nn.Linear(hidden, d_model)

    def forward(self, x, rate, training, gen):
        return self.lin2(dropout(torch.relu(self.lin1(x)), rate, training, gen))


class EncoderLayer(nn.Module):
    def __init__(self, d_model, ffn_hidden, heads):
        super().__init__()
        self.attn = MultiHeadAttention(d_model, heads)
        self.ffn = FeedForward(d_model, ffn_hidden)
        self.ln1 = nn.LayerNorm(d_model)
        self.ln2 = nn.LayerNorm(d_model)

    def forward(self, x, src_mask, rates, training, gen):
        p, p_attn = rates
        x = self.ln1(x + dropout(self.attn(x, x, src_mask, False, p_attn, training, gen), p, training, gen))
        x = self.ln2(x + dropout(self.ffn(x, p, training, gen), p, training, gen))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, d_model, ffn_hidden, heads):
        super().__init__()
        self.self_attn = MultiHeadAttention(d_model, heads)
        self.cross_attn = MultiHeadAttention(d_model, heads)
        self.ffn = FeedForward(d_model, ffn_hidden)
        self.ln1 = nn.LayerNorm(d_model)
        self.ln2 = nn.LayerNorm(d_model)
        self.ln3 = nn.LayerNorm(d_model)

    def forward(self, x, memory, src_mask, tgt_mask, rates, training, gen):
        p, p_attn = rates
        x = self.ln1(x + dropout(self.self_attn(x, x, tgt_mask, True, p_attn, training, gen), p, training, gen))
        x = self.ln2(x + dropout(self.cross_attn(x, memory, src_mask, False, p_attn, training, gen), p, training, gen))
        x = self.ln3(x + dropout(self.ffn(x, p, training, gen), p, training, gen))
        return x


class Model(nn.Module):
    """Encoder-decoder with optional decoder-input length enrichment."""

    def __init__(self, config: ModelConfig, dropout_rate: float = 0.0,
                 attn_dropout_rate: float = 0.0):
        super().__init__()
        self.config = config
        self.dropout_rate = dropout_rate
        self.attn_dropout_rate = attn_dropout_rate
        self.embed = nn.Embedding(config.vocab_size, config.d_model, padding_idx=PAD_ID)
        self.out_proj = nn.Linear(config.d_model, config.vocab_size)
        self.enc_layers = nn.ModuleList(
            EncoderLayer(config.d_model, config.ffn_hidden, config.heads)
            for _ in range(config.layers)
        )
        self.dec_layers = nn.ModuleList(
            DecoderLayer(config.d_model, config.ffn_hidden, config.heads)
            for _ in range(config.layers)
        )
        self.dropout_gen = torch.Generator()
        self.dropout_gen.manual_seed(0)
        self._pe_cache: dict[tuple, torch.Tensor] = {}

    # -- input construction -------------------------------------------------

    @property
    def _dtype(self) -> torch.dtype:
        return self.embed.weight.dtype

    def _pe(self, n: int) -> torch.Tensor:
        key = (n, self._dtype)
        pe = self._pe_cache.get(key)
        if pe is None:
            pe = torch.from_numpy(
                trig_encode(np.arange(n, dtype=np.float64), self.config.d_model,
                            self.config.enc_base)
            ).to(self._dtype)
            self._pe_cache[key] = pe
        return pe

    def length_encoding(self, cursor_pos: np.ndarray, tgt_lens: np.ndarray) -> torch.Tensor:
        """Length-encoding matrix for the decoder input slots.

        ``cursor_pos`` holds characters preceding each predicted token;
        ``tgt_lens`` the per-sentence character budgets (values below 1
        are clamped so empty targets stay well-defined).
        """
        variant = self.config.length_mode.encoding
        if variant is None:
            raise ModelError("model has no length encoding")
        lens = np.maximum(np.asarray(tgt_lens, dtype=np.int64), 1)[:, None]
        if variant == ENC_ABS:
            args = (lens - cursor_pos).astype(np.float64)
        else:
            args = quantize_array(cursor_pos, lens, self.config.n_levels).astype(np.float64)
        mat = trig_encode(args, self.config.d_model, self.config.enc_base)
        return torch.from_numpy(mat).to(self._dtype)

    def decoder_input(self, tgt_in: torch.Tensor, cursor_pos: np.ndarray,
                      tgt_lens: np.ndarray) -> tuple[torch.Tensor, ...]:
        """Embedding, position, and length components of the decoder input."""
        emb = self.embed(tgt_in) * math.sqrt(self.config.d_model)
        pe = self._pe(tgt_in.shape[1])[None, :, :]
        if self.config.length_mode.encoding is not None:
            le = self.length_encoding(cursor_pos, tgt_lens)
        else:
            le = torch.zeros_like(emb)
        return emb, pe.expand_as(emb), le

    # -- forward passes ------------------------------------------------------

    def encode(self, src: torch.Tensor, src_mask: torch.Tensor) -> torch.Tensor:
        rates = (self.dropout_rate, self.attn_dropout_rate)
        x = self.embed(src) * math.sqrt(self.config.d_model) + self._pe(src.shape[1])[None]
        x = dropout(x, self.dropout_rate, self.training, self.dropout_gen)
        for layer in self.enc_layers:
            x = layer(x, src_mask, rates, self.training, self.dropout_gen)
        return x

    def decode(self, memory: torch.Tensor, src_mask: torch.Tensor,
               tgt_in: torch.Tensor, tgt_mask: torch.Tensor,
               cursor_pos: np.ndarray, tgt_lens: np.ndarray) -> torch.Tensor:
        rates = (self.dropout_rate, self.attn_dropout_rate)
        emb, pe, le = self.decoder_input(tgt_in, cursor_pos, tgt_lens)
        x = dropout(emb + pe + le, self.dropout_rate, self.training, self.dropout_gen)
        for layer in self.dec_layers:
            x = layer(x, memory, src_mask, tgt_mask, rates, self.training, self.dropout_gen)
        return self.out_proj(x)

    def forward_batch(self, batch: Batch) -> torch.Tensor:
        """Teacher-forced logits, shape (B, T+1, vocab)."""
        src = torch.from_numpy(batch.src)
        src_mask = torch.from_numpy(batch.src_mask)
        tgt_in = torch.from_numpy(batch.tgt_in)
        tgt_mask = torch.from_numpy(batch.tgt_mask)
        memory = self.encode(src, src_mask)
        return self.decode(memory, src_mask, tgt_in, tgt_mask,
                           batch.cursor_pos, batch.tgt_lens)

    def parameters_dict(self) -> dict[str, torch.Tensor]:
        return dict(self.named_parameters())

    def export_params(self) -> dict[str, np.ndarray]:
        return {name: p.detach().cpu().numpy().copy()
                for name, p in self.named_parameters()}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        own = self.parameters_dict()
        missing = set(own) ^ set(params)
        if missing:
            raise ModelError(f"parameter name mismatch: {sorted(missing)}")
        with torch.no_grad():
            for name, arr in params.items():
                t = torch.from_numpy(np.asarray(arr)).to(own[name].dtype)
                if t.shape != own[name].shape:
                    raise ModelError(f"shape mismatch for {name}")
                own[name].copy_(t)


def build(config: ModelConfig, hyper: TrainHyper, seed: int) -> Model:
    """Construct a model with parameters drawn from a seeded generator."""
    model = Model(config, dropout_rate=hyper.dropout,
                  attn_dropout_rate=hyper.attn_dropout)
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in model.named_parameters():
            if p.dim() >= 2 and name.startswith("embed"):
                p.normal_(0.0, config.d_model ** -0.5, generator=gen)
                p[PAD_ID].zero_()
            elif p.dim() >= 2:
                bound = math.sqrt(6.0 / (p.shape[0] + p.shape[1]))
                p.uniform_(-bound, bound, generator=gen)
            elif "weight" in name:  # layer norm gains
                p.fill_(1.0)
            else:
                p.zero_()
    model.dropout_gen.manual_seed(seed + 1)
    return model


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Checkpoint:
    config: ModelConfig
    hyper: TrainHyper
    merges: tuple[tuple[str, str], ...]
    vocab_tokens: tuple[str, ...]
    params: dict[str, np.ndarray]
    step: int
    dev_loss: float
    lineage: str = ""
    version: int = CHECKPOINT_VERSION

    def vocab(self) -> Vocab:
        return Vocab(self.vocab_tokens)

    def merge_table(self) -> MergeTable:
        return MergeTable(merges=self.merges)


def params_digest(params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name])
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def _dev_loss(model: Model, dev_batches: list[Batch], smoothing: float) -> float:
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for batch in dev_batches:
            logits = model.forward_batch(batch)
            mask = torch.from_numpy(batch.tgt_mask)
            loss = label_smoothed_xent(
                logits, torch.from_numpy(batch.tgt_out), smoothing, mask=mask
            )
            n = int(mask.sum())
            total += float(loss) * n
            count += n
    model.train()
    return total / max(count, 1)


def train(
    model: Model,
    vocab: Vocab,
    table: MergeTable,
    train_pairs: list[SentencePair],
    dev_pairs: list[SentencePair],
    hyper: TrainHyper,
    seed: int,
    log_path=None,
) -> Checkpoint:
    """Optimize and return the best-dev-loss checkpoint.

    One machine-readable record per evaluation goes into the log
    (step, lr, mean train loss since the last evaluation, dev loss);
    early stopping triggers after ``hyper.patience`` evaluations without
    improvement. A non-finite training loss aborts with the step number.
    """
    mode = model.config.length_mode
    encoded_train = encode_corpus(train_pairs, table, vocab, mode)
    encoded_dev = encode_corpus(dev_pairs, table, vocab, mode)
    dev_batches = make_batches(encoded_dev, hyper.batch_max_tokens, PAD_ID, BOS_ID, EOS_ID)

    rng = np.random.default_rng(seed)
    model.dropout_gen.manual_seed(seed + 1)
    model.train()
    params = model.parameters_dict()
    state = AdamState()

    log: list[dict] = []

    def emit(record):
        log.append(record)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    best_loss = _dev_loss(model, dev_batches, hyper.label_smoothing)
    best_params = model.export_params()
    best_step = 0
    emit({"step": 0, "lr": lr_schedule(0, hyper), "train_loss": None,
          "dev_loss": best_loss})

    step = 0
    evals_since_best = 0
    accum = 0
    running: list[float] = []
    stop = hyper.max_steps <= 0
    while not stop:
        order = rng.permutation(len(encoded_train))
        batches = make_batches([encoded_train[i] for i in order],
                               hyper.batch_max_tokens, PAD_ID, BOS_ID, EOS_ID)
        for batch in batches:
            logits = model.forward_batch(batch)
            loss = label_smoothed_xent(
                logits, torch.from_numpy(batch.tgt_out), hyper.label_smoothing,
                mask=torch.from_numpy(batch.tgt_mask),
            )
            if not torch.isfinite(loss):
                raise DivergenceError(f"training loss diverged at step {step + 1}")
            (loss / hyper.grad_accum).backward()
            running.append(float(loss.detach()))
            accum += 1
            if accum < hyper.grad_accum:
                continue
            accum = 0
            step += 1
            grads = {name: p.grad for name, p in params.items() if p.grad is not None}
            adam_step(params, grads, state, step, hyper)
            for p in params.values():
                if p.grad is not None:
                    p.grad.zero_()
            if step % hyper.eval_interval == 0 or step >= hyper.max_steps:
                dev_loss = _dev_loss(model, dev_batches, hyper.label_smoothing)
                emit({"step": step, "lr": lr_schedule(step, hyper),
                      "train_loss": sum(running) / len(running), "dev_loss": dev_loss})
                running = []
                if dev_loss < best_loss:
                    best_loss, best_params, best_step = dev_loss, model.export_params(), step
                    evals_since_best = 0
                else:
                    evals_since_best += 1
                if evals_since_best >= hyper.patience or step >= hyper.max_steps:
                    stop = True
            if stop:
                break

    model.load_params(best_params)
    model.eval()
    return Checkpoint(
        config=model.config, hyper=hyper, merges=table.merges,
        vocab_tokens=vocab.tokens, params=best_params,
        step=best_step, dev_loss=best_loss,
    )


def train_from_scratch(
    config: ModelConfig,
    table: MergeTable,
    train_pairs: list[SentencePair],
    dev_pairs: list[SentencePair],
    hyper: TrainHyper,
    seed: int,
    log_path=None,
) -> Checkpoint:
    """Build the vocabulary from the corpus, then build and train a model."""
    vocab = build_vocab(table, train_pairs, include_length_tokens=config.length_mode.token)
    config = replace(config, vocab_size=len(vocab))
    model = build(config, hyper, seed)
    return train(model, vocab, table, train_pairs, dev_pairs, hyper, seed, log_path)


def finetune(
    base: Checkpoint,
    length_mode: LengthMode,
    train_pairs: list[SentencePair],
    dev_pairs: list[SentencePair],
    hyper: TrainHyper,
    seed: int,
    log_path=None,
) -> Checkpoint:
    """Continue training from a checkpoint with a new length mode.

    The vocabulary may grow only by the reserved length tokens; embedding
    and output-projection rows for existing entries are copied bit-exactly
    and new rows are freshly initialized.
    """
    vocab = base.vocab()
    if length_mode.token:
        vocab = vocab.with_length_tokens()
    config = replace(base.config, vocab_size=len(vocab), length_mode=length_mode)
    model = build(config, hyper, seed)

    old_rows = base.config.vocab_size
    with torch.no_grad():
        for name, p in model.named_parameters():
            arr = base.params.get(name)
            if arr is None:
                raise ModelError(f"base checkpoint missing parameter {name}")
            src = torch.from_numpy(np.asarray(arr)).to(p.dtype)
            if src.shape == p.shape:
                p.copy_(src)
            elif (p.shape[0] == len(vocab) and src.shape[0] == old_rows
                  and p.shape[1:] == src.shape[1:]):
                p[:old_rows].copy_(src)  # new token rows keep their fresh init
            else:
                raise ModelError(
                    f"incompatible shape for {name}: base {tuple(src.shape)} "
                    f"vs new {tuple(p.shape)}"
                )

    ckpt = train(model, vocab, table=base.merge_table(), train_pairs=train_pairs,
                 dev_pairs=dev_pairs, hyper=hyper, seed=seed, log_path=log_path)
    return replace(ckpt, lineage=params_digest(base.params))


def model_from_checkpoint(ckpt: Checkpoint) -> Model:
    model = build(ckpt.config, ckpt.hyper, seed=0)
    model.load_params(ckpt.params)
    model.eval()
    return model


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

def _write_chunk(fh, payload: bytes) -> None:
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)
    fh.write(struct.pack("<I", zlib.crc32(payload)))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    meta = {
        "config": ckpt.config.to_dict(),
        "hyper": ckpt.hyper.__dict__,
        "merges": [list(m) for m in ckpt.merges],
        "vocab": list(ckpt.vocab_tokens),
        "step": ckpt.step,
        "dev_loss": ckpt.dev_loss,
        "lineage": ckpt.lineage,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", ckpt.version))
        _write_chunk(fh, json.dumps(meta).encode("utf-8"))
        fh.write(struct.pack("<I", len(ckpt.params)))
        for name in sorted(ckpt.params):
            arr = np.ascontiguousarray(ckpt.params[name])
            header = json.dumps(
                {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}
            ).encode("utf-8")
            _write_chunk(fh, header)
            _write_chunk(fh, arr.tobytes())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointCorruptError("unexpected end of file (truncated checkpoint)")
    return data


def _read_chunk(fh) -> bytes:
    (length,) = struct.unpack("<Q", _read_exact(fh, 8))
    payload = _read_exact(fh, length)
    (crc,) = struct.unpack("<I", _read_exact(fh, 4))
    if zlib.crc32(payload) != crc:
        raise CheckpointCorruptError("checksum mismatch")
    return payload


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointCorruptError(f"not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"checkpoint format v{version} not supported (reader is v{CHECKPOINT_VERSION})"
            )
        meta = json.loads(_read_chunk(fh).decode("utf-8"))
        (n_blobs,) = struct.unpack("<I", _read_exact(fh, 4))
        params: dict[str, np.ndarray] = {}
        for _ in range(n_blobs):
            header = json.loads(_read_chunk(fh).decode("utf-8"))
            raw = _read_chunk(fh)
            arr = np.frombuffer(raw, dtype=np.dtype(header["dtype"]))
            params[header["name"]] = arr.reshape(header["shape"]).copy()
    return Checkpoint(
        config=ModelConfig.from_dict(meta["config"]),
        hyper=TrainHyper(**meta["hyper"]),
        merges=tuple((a, b) for a, b in meta["merges"]),
        vocab_tokens=tuple(meta["vocab"]),
        params=params,
        step=meta["step"],
        dev_loss=meta["dev_loss"],
        lineage=meta.get("lineage", ""),
        version=version,
    )

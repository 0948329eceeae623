"""Declarative experiment configuration.

One flat ``key = value`` file drives the whole pipeline; the schema below
is the single source of truth for keys, types, and defaults. Unknown keys
are rejected by name, and every artifact records the hash of the resolved
configuration together with the seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import SynthSpec, Thresholds
from .nnet import TrainHyper


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_range(raw: str) -> tuple[int, int]:
    parts = raw.split("-")
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo-hi', got {raw!r}")
    return int(parts[0]), int(parts[1])


def _parse_mix(raw: str) -> tuple[float, float, float]:
    parts = [float(p) for p in raw.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"expected three comma-separated fractions, got {raw!r}")
    return tuple(parts)


def _parse_strategies(raw: str) -> tuple[str, ...]:
    items = tuple(s.strip() for s in raw.split(",") if s.strip())
    if not items:
        raise ConfigError("empty strategy list")
    return items


# key -> (parser, default); None default means the key is required
SCHEMA: dict[str, tuple] = {
    "seed": (int, 7),
    "out_dir": (str, None),
    "deterministic": (_parse_bool, True),
    "data.train": (str, ""),
    "data.dev": (str, ""),
    "data.test": (str, ""),
    "synth.n_pairs": (int, 2000),
    "synth.dev_pairs": (int, 200),
    "synth.test_pairs": (int, 300),
    "synth.lexicon_size": (int, 40),
    "synth.src_len": (_parse_range, (4, 6)),
    "synth.short_len": (_parse_range, (2, 4)),
    "synth.long_len": (_parse_range, (6, 8)),
    "synth.sent_len": (_parse_range, (3, 9)),
    "synth.style_mix": (_parse_mix, (1 / 3, 1 / 3, 1 / 3)),
    "synth.neutral_long_prob": (float, 0.65),
    "bpe.num_merges": (int, 500),
    "thresholds.t_min": (float, 1.0),
    "thresholds.t_max": (float, 1.2),
    "model.d_model": (int, 64),
    "model.ffn_hidden": (int, 256),
    "model.heads": (int, 4),
    "model.layers": (int, 2),
    "train.lr_init": (float, 1e-7),
    "train.lr_peak": (float, 1e-3),
    "train.warmup_steps": (int, 400),
    "train.dropout": (float, 0.3),
    "train.attn_dropout": (float, 0.1),
    "train.label_smoothing": (float, 0.1),
    "train.adam_beta1": (float, 0.9),
    "train.adam_beta2": (float, 0.98),
    "train.adam_eps": (float, 1e-9),
    "train.grad_accum": (int, 1),
    "train.max_steps": (int, 2000),
    "train.batch_max_tokens": (int, 2000),
    "train.eval_interval": (int, 100),
    "train.patience": (int, 5),
    "finetune.max_steps": (int, 800),
    "finetune.warmup_steps": (int, 100),
    "finetune.lr_peak": (float, 5e-4),
    "decode.beam_size": (int, 4),
    "decode.alpha": (float, 0.0),
    "variant_init": (str, "finetune"),
    "strategies": (_parse_strategies, (
        "baseline", "baseline:alpha=0.5", "token:short", "token:normal",
        "token:long", "enc-rel", "enc-abs",
    )),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def out_dir(self) -> Path:
        return Path(self.values["out_dir"])

    def synth_spec(self, n_pairs: int, seed: int,
                   lexicon_seed: int | None = None) -> SynthSpec:
        v = self.values
        return SynthSpec(
            n_pairs=n_pairs, lexicon_size=v["synth.lexicon_size"],
            src_len=v["synth.src_len"], short_len=v["synth.short_len"],
            long_len=v["synth.long_len"], sent_len=v["synth.sent_len"],
            style_mix=v["synth.style_mix"],
            neutral_long_prob=v["synth.neutral_long_prob"], seed=seed,
            lexicon_seed=lexicon_seed,
        )

    def thresholds(self) -> Thresholds:
        return Thresholds(t_min=self.values["thresholds.t_min"],
                          t_max=self.values["thresholds.t_max"])

    def train_hyper(self) -> TrainHyper:
        v = self.values
        return TrainHyper(
            lr_init=v["train.lr_init"], lr_peak=v["train.lr_peak"],
            warmup_steps=v["train.warmup_steps"], dropout=v["train.dropout"],
            attn_dropout=v["train.attn_dropout"],
            label_smoothing=v["train.label_smoothing"],
            adam_beta1=v["train.adam_beta1"], adam_beta2=v["train.adam_beta2"],
            adam_eps=v["train.adam_eps"], grad_accum=v["train.grad_accum"],
            max_steps=v["train.max_steps"],
            batch_max_tokens=v["train.batch_max_tokens"],
            eval_interval=v["train.eval_interval"], patience=v["train.patience"],
        )

    def finetune_hyper(self) -> TrainHyper:
        from dataclasses import replace
        return replace(
            self.train_hyper(),
            max_steps=self.values["finetune.max_steps"],
            warmup_steps=self.values["finetune.warmup_steps"],
            lr_peak=self.values["finetune.lr_peak"],
        )

    def canonical_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            value = self.values[key]
            if isinstance(value, tuple):
                value = ",".join(str(x) for x in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()[:16]


def resolve_config(raw: dict[str, str], require_out_dir: bool = True) -> ExperimentConfig:
    """Validate raw string settings against the schema."""
    unknown = set(raw) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    values: dict = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            try:
                values[key] = parser(raw[key]) if isinstance(raw[key], str) else raw[key]
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})") from exc
        elif default is None and require_out_dir:
            raise ConfigError(f"missing required config key: {key}")
        else:
            values[key] = default
    if values["variant_init"] not in ("finetune", "scratch"):
        raise ConfigError("variant_init must be 'finetune' or 'scratch'")
    return ExperimentConfig(values=values)


def load_config(path, overrides: dict[str, str] | None = None,
                require_out_dir: bool = True) -> ExperimentConfig:
    """Parse a ``key = value`` file ('#' starts a comment)."""
    raw: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key in raw:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key}")
        raw[key] = value
    if overrides:
        raw.update(overrides)
    return resolve_config(raw, require_out_dir=require_out_dir)

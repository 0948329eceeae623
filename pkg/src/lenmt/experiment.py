"""The end-to-end experiment pipeline: data, subwords, baseline training,
length-control fine-tuning, strategy decoding, and the comparison report.

Every stage writes its artifacts before the next begins, so partial
results survive a failure. All randomness flows from the config seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import ConfigError, ExperimentConfig
from .corpus import (
    LengthClass,
    bucket_stats,
    generate_synthetic,
    read_tsv,
    strip_length_token,
    write_tsv,
)
from .decode import DecodeControl, TranslationResult, Translator, translate_corpus
from .evaluate import BleuReport, LengthStats, compare_runs, corpus_bleu, length_stats
from .model import (
    Checkpoint,
    LengthMode,
    ModelConfig,
    finetune,
    save_checkpoint,
    train_from_scratch,
)
from .report import render_report
from .textproc import learn_bpe, save_merges

VARIANTS = ("baseline", "token", "enc-abs", "enc-rel", "token+enc-abs", "token+enc-rel")


@dataclass(frozen=True)
class Strategy:
    """A decode strategy: which model variant plus its control settings."""

    spec: str
    variant: str
    token_class: LengthClass | None = None
    alpha: float | None = None
    scale: float = 1.0
    target_len: int | None = None

    def control(self, beam_size: int, default_alpha: float) -> DecodeControl:
        return DecodeControl(
            beam_size=beam_size,
            alpha=self.alpha if self.alpha is not None else default_alpha,
            token_class=self.token_class,
            target_len_chars=self.target_len,
            scale=self.scale,
        )

    @property
    def slug(self) -> str:
        out = []
        for ch in self.spec:
            out.append(ch if ch.isalnum() or ch in ".+-" else "_")
        return "".join(out)


def parse_strategy(spec: str) -> Strategy:
    """Parse ``variant[:class][:alpha=X][:scale=S][:target=N]``."""
    parts = [p.strip() for p in spec.split(":") if p.strip()]
    if not parts:
        raise ConfigError("empty strategy spec")
    variant = parts[0].lower()
    if variant not in VARIANTS:
        raise ConfigError(f"unknown strategy variant {variant!r} (choose from {VARIANTS})")
    token_class = None
    alpha = None
    scale = 1.0
    target_len = None
    for part in parts[1:]:
        if "=" in part:
            key, _, value = part.partition("=")
            key = key.strip().lower()
            try:
                if key == "alpha":
                    alpha = float(value)
                elif key == "scale":
                    scale = float(value)
                elif key == "target":
                    target_len = int(value)
                else:
                    raise ConfigError(f"unknown strategy option {key!r} in {spec!r}")
            except ValueError as exc:
                raise ConfigError(f"bad strategy option {part!r} in {spec!r}") from exc
        else:
            try:
                token_class = LengthClass(part.lower())
            except ValueError as exc:
                raise ConfigError(f"unknown length class {part!r} in {spec!r}") from exc
    mode = LengthMode.parse("none" if variant == "baseline" else variant)
    if token_class is not None and not mode.token:
        raise ConfigError(f"{spec!r}: length class given but {variant!r} takes no token")
    if mode.token and token_class is None:
        raise ConfigError(f"{spec!r}: token strategies need a length class")
    if (scale != 1.0 or target_len is not None) and mode.encoding is None:
        raise ConfigError(f"{spec!r}: scale/target need a length-encoding variant")
    return Strategy(spec=spec, variant=variant, token_class=token_class,
                    alpha=alpha, scale=scale, target_len=target_len)


@dataclass
class ExperimentResult:
    out_dir: Path
    rows: list[dict]
    stats: dict[str, tuple[BleuReport, LengthStats]]
    results: dict[str, list[TranslationResult]]
    checkpoints: dict[str, Checkpoint]
    manifest: dict


def _emit(record: dict, quiet: bool) -> None:
    if not quiet:
        print(json.dumps(record), flush=True)


def _load_or_generate(config: ExperimentConfig, out_data: Path, quiet: bool):
    thresholds = config.thresholds()
    v = config.values
    if v["data.train"]:
        if not (v["data.dev"] and v["data.test"]):
            raise ConfigError("data.train requires data.dev and data.test as well")
        sets = {}
        for split in ("train", "dev", "test"):
            pairs, stripped = read_tsv(v[f"data.{split}"], thresholds)
            sets[split] = pairs
            _emit({"event": "data", "split": split, "pairs": len(pairs),
                   "stripped_tokens": stripped}, quiet)
    else:
        sizes = {"train": v["synth.n_pairs"], "dev": v["synth.dev_pairs"],
                 "test": v["synth.test_pairs"]}
        sets = {}
        for offset, split in enumerate(("train", "dev", "test")):
            # shared lemma table across splits; fresh sentence/style draws
            spec = config.synth_spec(sizes[split], config.seed + offset,
                                     lexicon_seed=config.seed)
            sets[split] = generate_synthetic(spec, thresholds)
            _emit({"event": "data", "split": split, "pairs": len(sets[split])}, quiet)
    bucket_path = out_data / "buckets.jsonl"
    with open(bucket_path, "w", encoding="utf-8") as fh:
        for split, pairs in sets.items():
            counts = bucket_stats(pairs)
            fh.write(json.dumps({"split": split, **json.loads(counts.as_record())}) + "\n")
    for split, pairs in sets.items():
        write_tsv(pairs, out_data / f"{split}.tsv")
    return sets


def _read_train_log(path: Path) -> list[dict]:
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def run_experiment(config: ExperimentConfig, quiet: bool = False) -> ExperimentResult:
    if config.values["deterministic"]:
        torch.set_num_threads(1)

    out = config.out_dir
    for sub in ("data", "models", "decodes", "report"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    config_hash = config.hash()
    (out / "config.resolved.cfg").write_text(
        f"# config={config_hash} seed={config.seed}\n" + config.canonical_text(),
        encoding="utf-8",
    )

    strategies = [parse_strategy(s) for s in config.values["strategies"]]
    sets = _load_or_generate(config, out / "data", quiet)
    train_pairs, dev_pairs, test_pairs = sets["train"], sets["dev"], sets["test"]

    table = learn_bpe(
        [p.src for p in train_pairs] + [p.tgt for p in train_pairs],
        config.values["bpe.num_merges"],
    )
    save_merges(table, out / "data" / "bpe.merges")
    _emit({"event": "bpe", "merges": len(table.merges)}, quiet)

    v = config.values
    arch = dict(d_model=v["model.d_model"], ffn_hidden=v["model.ffn_hidden"],
                heads=v["model.heads"], layers=v["model.layers"])
    needed = {s.variant for s in strategies}
    scratch = v["variant_init"] == "scratch"
    need_baseline = "baseline" in needed or (not scratch and bool(needed - {"baseline"}))

    checkpoints: dict[str, Checkpoint] = {}
    train_logs: dict[str, list[dict]] = {}

    def train_variant(variant: str) -> Checkpoint:
        mode = LengthMode.parse("none" if variant == "baseline" else variant)
        log_path = out / "models" / f"{variant}.trainlog.jsonl"
        log_path.unlink(missing_ok=True)
        if variant == "baseline" or scratch:
            hyper = config.train_hyper()
            ckpt = train_from_scratch(
                ModelConfig(vocab_size=4, length_mode=mode, **arch),
                table, train_pairs, dev_pairs, hyper, config.seed, log_path,
            )
        else:
            ckpt = finetune(checkpoints["baseline"], mode, train_pairs, dev_pairs,
                            config.finetune_hyper(), config.seed, log_path)
        path = out / "models" / f"{variant}.ckpt"
        save_checkpoint(ckpt, path)
        train_logs[variant] = _read_train_log(log_path)
        _emit({"event": "trained", "variant": variant, "steps": ckpt.step,
               "dev_loss": round(ckpt.dev_loss, 4)}, quiet)
        return ckpt

    if need_baseline:
        checkpoints["baseline"] = train_variant("baseline")
    for variant in [var for var in VARIANTS if var != "baseline"]:
        if variant in needed:
            checkpoints[variant] = train_variant(variant)

    sources = [strip_length_token(p.src)[0] for p in test_pairs]
    references = [p.tgt for p in test_pairs]
    translators = {name: Translator.from_checkpoint(ckpt)
                   for name, ckpt in checkpoints.items()}

    stats: dict[str, tuple[BleuReport, LengthStats]] = {}
    all_results: dict[str, list[TranslationResult]] = {}
    runs = []
    for strategy in strategies:
        ctrl = strategy.control(v["decode.beam_size"], v["decode.alpha"])
        results = translate_corpus(translators[strategy.variant], sources, ctrl)
        all_results[strategy.spec] = results
        hyp_path = out / "decodes" / f"{strategy.slug}.hyp"
        meta_path = out / "decodes" / f"{strategy.slug}.meta.jsonl"
        with open(hyp_path, "w", encoding="utf-8") as fh:
            for res in results:
                fh.write(res.output + "\n")
        with open(meta_path, "w", encoding="utf-8") as fh:
            for res in results:
                fh.write(json.dumps({
                    "index": res.index, "src_chars": res.src_chars,
                    "out_chars": res.out_chars, "score": res.score,
                    "warning": res.warning, "error": res.error,
                }) + "\n")
        outputs = [res.output for res in results]
        bleu = corpus_bleu(outputs, references)
        lstats = length_stats(outputs, sources, references)
        stats[strategy.spec] = (bleu, lstats)
        runs.append((strategy.spec, bleu, lstats))
        _emit({"event": "decoded", "strategy": strategy.spec,
               "bleu": round(bleu.bleu, 2), "lr_src": round(lstats.lr_src, 3)}, quiet)

    rows = compare_runs(runs)
    report_paths = render_report(out / "report", rows, train_logs, config_hash, config.seed)

    manifest = {
        "config_hash": config_hash,
        "seed": config.seed,
        "artifacts": sorted(
            str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()
        ),
        "strategies": [s.spec for s in strategies],
        "report": {k: str(p.relative_to(out)) for k, p in report_paths.items()},
    }
    (out / "MANIFEST.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                       encoding="utf-8")
    _emit({"event": "done", "out_dir": str(out)}, quiet)
    return ExperimentResult(out_dir=out, rows=rows, stats=stats,
                            results=all_results, checkpoints=checkpoints,
                            manifest=manifest)

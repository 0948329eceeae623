"""Command-line entry point wiring all stages into reproducible pipelines.

Exit codes: 0 success, 1 usage/configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config, resolve_config
from .corpus import (
    CorpusError,
    LengthClass,
    Thresholds,
    bucket_stats,
    generate_synthetic,
    read_parallel,
    read_tsv,
    write_tsv,
)
from .decode import DecodeControl, Translator, translate_corpus
from .encodings import EncodingSpec, format_table
from .evaluate import corpus_bleu, length_stats
from .model import LengthMode, ModelConfig, finetune, load_checkpoint, save_checkpoint, train_from_scratch
from .textproc import learn_bpe, load_merges, save_merges


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _read_pairs(args, thresholds: Thresholds):
    if args.data:
        pairs, stripped = read_tsv(args.data, thresholds)
    else:
        pairs, stripped = read_parallel(args.src, args.tgt, thresholds)
    return pairs, stripped


def _add_corpus_args(p):
    p.add_argument("--data", help="tab-separated parallel file (src<TAB>tgt)")
    p.add_argument("--src", help="source side, one sentence per line")
    p.add_argument("--tgt", help="target side, one sentence per line")


def _check_corpus_args(args):
    if not args.data and not (args.src and args.tgt):
        raise UsageError("give --data FILE or both --src and --tgt")


def cmd_synth(args) -> int:
    if args.config:
        config = load_config(args.config, require_out_dir=False)
    else:
        config = resolve_config({}, require_out_dir=False)
    n = args.n if args.n is not None else config.values["synth.n_pairs"]
    seed = args.seed if args.seed is not None else config.seed
    spec = config.synth_spec(n, seed)
    pairs = generate_synthetic(spec, config.thresholds())
    write_tsv(pairs, args.out)
    print(bucket_stats(pairs).as_record())
    return 0


def cmd_bpe(args) -> int:
    pairs, _ = _read_pairs(args, Thresholds())
    table = learn_bpe([p.src for p in pairs] + [p.tgt for p in pairs], args.merges)
    save_merges(table, args.out)
    print(json.dumps({"merges": len(table.merges), "out": str(args.out)}))
    return 0


def cmd_bucket(args) -> int:
    thresholds = Thresholds(t_min=args.t_min, t_max=args.t_max)
    pairs, stripped = _read_pairs(args, thresholds)
    counts = bucket_stats(pairs)
    print(counts.as_record())
    if stripped:
        print(json.dumps({"stripped_length_tokens": stripped}), file=sys.stderr)
    if args.classes_out:
        with open(args.classes_out, "w", encoding="utf-8") as fh:
            for pair in pairs:
                fh.write(pair.length_class.value + "\n")
    return 0


def _train_sets(args, thresholds):
    train_pairs, _ = read_tsv(args.train, thresholds)
    dev_pairs, _ = read_tsv(args.dev, thresholds)
    return train_pairs, dev_pairs


def cmd_train(args) -> int:
    config = load_config(args.config, require_out_dir=False) if args.config \
        else resolve_config({}, require_out_dir=False)
    thresholds = config.thresholds()
    train_pairs, dev_pairs = _train_sets(args, thresholds)
    mode = LengthMode.parse(args.mode)
    v = config.values
    if args.bpe:
        table = load_merges(args.bpe)
    else:
        table = learn_bpe([p.src for p in train_pairs] + [p.tgt for p in train_pairs],
                          v["bpe.num_merges"])
    model_config = ModelConfig(
        vocab_size=4, length_mode=mode, d_model=v["model.d_model"],
        ffn_hidden=v["model.ffn_hidden"], heads=v["model.heads"],
        layers=v["model.layers"],
    )
    ckpt = train_from_scratch(model_config, table, train_pairs, dev_pairs,
                              config.train_hyper(), config.seed, args.log)
    save_checkpoint(ckpt, args.out)
    print(json.dumps({"out": str(args.out), "steps": ckpt.step,
                      "dev_loss": round(ckpt.dev_loss, 4)}))
    return 0


def cmd_finetune(args) -> int:
    config = load_config(args.config, require_out_dir=False) if args.config \
        else resolve_config({}, require_out_dir=False)
    base = load_checkpoint(args.base)
    train_pairs, dev_pairs = _train_sets(args, config.thresholds())
    ckpt = finetune(base, LengthMode.parse(args.mode), train_pairs, dev_pairs,
                    config.finetune_hyper(), config.seed, args.log)
    save_checkpoint(ckpt, args.out)
    print(json.dumps({"out": str(args.out), "steps": ckpt.step,
                      "dev_loss": round(ckpt.dev_loss, 4),
                      "lineage": ckpt.lineage[:12]}))
    return 0


def _parse_target_len_mode(raw: str) -> int | None:
    if raw == "source":
        return None
    if raw.startswith("fixed:"):
        try:
            value = int(raw.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad --target-len-mode {raw!r}") from exc
        if value < 1:
            raise UsageError("--target-len-mode fixed:N needs N >= 1")
        return value
    raise UsageError("--target-len-mode must be 'source' or 'fixed:N'")


def cmd_translate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    translator = Translator.from_checkpoint(ckpt)
    sentences = Path(args.infile).read_text(encoding="utf-8").splitlines()
    target_len = _parse_target_len_mode(args.target_len_mode)

    def ctrl_for(cls: LengthClass | None) -> DecodeControl:
        return DecodeControl(
            beam_size=args.beam, alpha=args.alpha, token_class=cls,
            target_len_chars=target_len, scale=args.scale,
        )

    if args.class_file:
        import dataclasses
        class_lines = Path(args.class_file).read_text(encoding="utf-8").splitlines()
        if len(class_lines) != len(sentences):
            raise UsageError("--class-file must have one class per input line")
        results = []
        for i, (sent, cls_name) in enumerate(zip(sentences, class_lines)):
            ctrl = ctrl_for(LengthClass(cls_name.strip().lower()))
            res = translate_corpus(translator, [sent], ctrl)[0]
            results.append(dataclasses.replace(res, index=i))
    else:
        cls = LengthClass(args.length_class) if args.length_class else None
        results = translate_corpus(translator, sentences, ctrl_for(cls))

    with open(args.out, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(res.output + "\n")
    if args.meta:
        with open(args.meta, "w", encoding="utf-8") as fh:
            for res in results:
                fh.write(json.dumps({
                    "index": res.index, "src_chars": res.src_chars,
                    "out_chars": res.out_chars, "score": res.score,
                    "warning": res.warning, "error": res.error,
                }) + "\n")
    failures = sum(1 for res in results if res.error)
    print(json.dumps({"out": str(args.out), "sentences": len(results),
                      "failures": failures}))
    return 0


def cmd_evaluate(args) -> int:
    hyps = Path(args.hyp).read_text(encoding="utf-8").splitlines()
    srcs = Path(args.src).read_text(encoding="utf-8").splitlines()
    refs = Path(args.ref).read_text(encoding="utf-8").splitlines()
    bleu = corpus_bleu(hyps, refs)
    stats = length_stats(hyps, srcs, refs)
    record = {**bleu.as_record(), **stats.as_record()}
    if args.format == "record":
        print(json.dumps(record))
    else:
        print(f"BLEU = {bleu.bleu:.2f}  BLEU* = {bleu.bleu_star:.2f}  "
              f"BP = {bleu.brevity_penalty:.4f}")
        print("precisions: " + " / ".join(f"{p:.4f}" for p in bleu.precisions))
        print(f"LR_src = {stats.lr_src:.4f}  LR_ref = {stats.lr_ref:.4f}  "
              f"LR_std = {stats.lr_src_std:.4f}  (n={stats.n_sentences}, "
              f"excluded={stats.excluded})")
    if args.report:
        from .report import render_eval_report
        paths = render_eval_report(args.report, bleu, stats)
        print(json.dumps({"report": {k: str(p) for k, p in paths.items()}}))
    return 0


def cmd_enctable(args) -> int:
    spec = EncodingSpec(d=args.dim, variant=args.variant, n_levels=args.n_levels)
    text = format_table(spec, len_chars=args.len, max_pos=args.max_pos)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


def cmd_experiment(args) -> int:
    overrides = {"out_dir": args.out} if args.out else None
    config = load_config(args.config, overrides=overrides)
    from .experiment import run_experiment
    result = run_experiment(config, quiet=args.quiet)
    print(json.dumps({"out_dir": str(result.out_dir),
                      "comparison": str(result.manifest["report"]["comparison"]),
                      "config_hash": result.manifest["config_hash"]}))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="lenmt",
                     description="Length-controlled translation testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic parallel corpus")
    p.add_argument("--out", required=True, help="output TSV path")
    p.add_argument("--n", type=int, help="number of sentence pairs")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="config file supplying synth.* keys")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bpe", help="learn a BPE merge table")
    _add_corpus_args(p)
    p.add_argument("--merges", type=int, default=500)
    p.add_argument("--out", required=True, help="merge table path")
    p.set_defaults(func=cmd_bpe)

    p = sub.add_parser("bucket", help="length-ratio bucket statistics")
    _add_corpus_args(p)
    p.add_argument("--t-min", type=float, default=1.0)
    p.add_argument("--t-max", type=float, default=1.2)
    p.add_argument("--classes-out", help="write per-sentence classes (reference-based)")
    p.set_defaults(func=cmd_bucket)

    p = sub.add_parser("train", help="train a model from scratch")
    p.add_argument("--train", required=True, help="training TSV")
    p.add_argument("--dev", required=True, help="validation TSV")
    p.add_argument("--mode", default="none",
                   help="length mode: none|token|enc-abs|enc-rel|token+enc-abs|token+enc-rel")
    p.add_argument("--config", help="config file for model/train settings")
    p.add_argument("--bpe", help="existing merge table (else learned from --train)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log path (JSONL)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint with length control")
    p.add_argument("--base", required=True, help="base checkpoint")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--mode", required=True)
    p.add_argument("--config", help="config file for finetune settings")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("translate", help="decode a source file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True, help="source sentences")
    p.add_argument("--out", required=True, help="translations, one per line")
    p.add_argument("--class", dest="length_class",
                   choices=[c.value for c in LengthClass],
                   help="length token to prepend (token-mode models)")
    p.add_argument("--class-file", help="per-sentence classes, one per line")
    p.add_argument("--alpha", type=float, default=0.0, help="length penalty exponent")
    p.add_argument("--beam", type=int, default=4)
    p.add_argument("--target-len-mode", default="source",
                   help="'source' (match source chars) or 'fixed:N'")
    p.add_argument("--scale", type=float, default=1.0,
                   help="target length multiplier (encoding-mode models)")
    p.add_argument("--meta", help="per-sentence metadata sidecar (JSONL)")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="BLEU, BLEU*, and length ratios")
    p.add_argument("--hyp", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--format", choices=("text", "record"), default="text")
    p.add_argument("--report", help="directory for ratio dump and figures")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("enctable", help="dump an encoding table as text")
    p.add_argument("--variant", choices=("PE", "LE_abs", "LE_rel"), default="PE")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--len", type=int, required=True, dest="len")
    p.add_argument("--n-levels", type=int, default=5)
    p.add_argument("--max-pos", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_enctable)

    p = sub.add_parser("experiment", help="run the full comparison pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the configured output directory")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if getattr(args, "func", None) is cmd_bucket or getattr(args, "func", None) is cmd_bpe:
            _check_corpus_args(args)
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

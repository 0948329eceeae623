"""Report rendering: the strategy comparison as delimited text plus
matplotlib figures, every artifact stamped with the config hash and seed.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluate import COMPARISON_COLUMNS, BleuReport, LengthStats  # noqa: E402


def artifact_header(config_hash: str, seed: int) -> str:
    return f"# config={config_hash} seed={seed}"


def write_comparison_tsv(rows: list[dict], path, config_hash: str, seed: int) -> None:
    lines = [artifact_header(config_hash, seed), "\t".join(COMPARISON_COLUMNS)]
    for row in rows:
        lines.append("\t".join(str(row[col]) for col in COMPARISON_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_comparison_tsv(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    header = body[0].split("\t")
    return [dict(zip(header, ln.split("\t"))) for ln in body[1:]]


def _stamp(fig, config_hash: str, seed: int) -> None:
    fig.text(0.99, 0.01, artifact_header(config_hash, seed).lstrip("# "),
             ha="right", va="bottom", fontsize=6, color="gray")


def plot_length_ratios(rows: list[dict], path, config_hash: str, seed: int) -> None:
    """LR^src with dispersion bars per strategy, target line at 1.0."""
    labels = [r["label"] for r in rows]
    lr = [float(r["LR_src"]) for r in rows]
    std = [float(r["LR_std"]) for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(labels)), 4))
    x = range(len(labels))
    ax.errorbar(x, lr, yerr=std, fmt="o", capsize=4)
    ax.axhline(1.0, color="gray", linestyle="--", linewidth=1)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("output/source length ratio (chars)")
    ax.set_title("Length control by strategy")
    fig.tight_layout()
    _stamp(fig, config_hash, seed)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_bleu(rows: list[dict], path, config_hash: str, seed: int) -> None:
    labels = [r["label"] for r in rows]
    bleu = [float(r["BLEU"]) for r in rows]
    star = [float(r["BLEU*"]) for r in rows]
    x = range(len(labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(labels)), 4))
    ax.bar([i - width / 2 for i in x], bleu, width, label="BLEU")
    ax.bar([i + width / 2 for i in x], star, width, label="BLEU*")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("score")
    ax.set_title("Translation quality by strategy")
    ax.legend()
    fig.tight_layout()
    _stamp(fig, config_hash, seed)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training(train_logs: dict[str, list[dict]], path, config_hash: str, seed: int) -> None:
    """Dev-loss curves per trained variant."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, records in train_logs.items():
        steps = [r["step"] for r in records]
        dev = [r["dev_loss"] for r in records]
        ax.plot(steps, dev, marker=".", label=label)
    ax.set_xlabel("update step")
    ax.set_ylabel("dev loss")
    ax.set_title("Training progress")
    if train_logs:
        ax.legend(fontsize=8)
    fig.tight_layout()
    _stamp(fig, config_hash, seed)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(report_dir, rows: list[dict], train_logs: dict[str, list[dict]],
                  config_hash: str, seed: int) -> dict[str, Path]:
    """Comparison TSV plus the standard figures; returns artifact paths."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "comparison": report_dir / "comparison.tsv",
        "lr_figure": report_dir / "length_ratios.png",
        "bleu_figure": report_dir / "bleu.png",
        "training_figure": report_dir / "training.png",
    }
    write_comparison_tsv(rows, paths["comparison"], config_hash, seed)
    plot_length_ratios(rows, paths["lr_figure"], config_hash, seed)
    plot_bleu(rows, paths["bleu_figure"], config_hash, seed)
    plot_training(train_logs, paths["training_figure"], config_hash, seed)
    return paths


def render_eval_report(report_dir, bleu: BleuReport, stats: LengthStats,
                       config_hash: str = "-", seed: int = 0) -> dict[str, Path]:
    """Single-run evaluation: flat record, per-sentence ratios, histogram."""
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "record": report_dir / "scores.json",
        "ratios": report_dir / "ratios.tsv",
        "histogram": report_dir / "ratio_hist.png",
    }
    record = {**bleu.as_record(), **stats.as_record()}
    paths["record"].write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")

    lines = [artifact_header(config_hash, seed), "index\tlr_src\tlr_ref"]
    for i, (rs, rr) in enumerate(zip(stats.src_ratios, stats.ref_ratios)):
        lines.append(f"{i}\t{rs:.6f}\t{rr:.6f}")
    paths["ratios"].write_text("\n".join(lines) + "\n", encoding="utf-8")

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(stats.src_ratios, bins=30)
    ax.axvline(1.0, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel("output/source length ratio (chars)")
    ax.set_ylabel("sentences")
    ax.set_title(f"LR$^{{src}}$ = {stats.lr_src:.3f} (std {stats.lr_src_std:.3f})")
    fig.tight_layout()
    _stamp(fig, config_hash, seed)
    fig.savefig(paths["histogram"], dpi=120)
    plt.close(fig)
    return paths

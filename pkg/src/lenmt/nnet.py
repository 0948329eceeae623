"""Training numerics: learning-rate schedule, label-smoothed cross-entropy,
an explicit Adam update over named parameters, and a finite-difference
gradient checker.

Tensor work is delegated to torch (CPU); the update rules, the loss, and
the verification oracle are spelled out here so every formula is testable
against independent computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch


class GradientError(RuntimeError):
    """A non-finite gradient (or value) surfaced during optimization."""


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""


@dataclass(frozen=True)
class TrainHyper:
    """Optimization settings.

    The published configuration uses 4000 warmup steps, peak 1e-3 from an
    initial 1e-7, dropout 0.3 everywhere except attention (0.1), label
    smoothing 0.1, and gradient accumulation; the desk-scale defaults
    shrink warmup and disable accumulation. Adam moment constants are the
    transformer-standard choice and are recorded in every checkpoint.
    """

    lr_init: float = 1e-7
    lr_peak: float = 1e-3
    warmup_steps: int = 400
    dropout: float = 0.3
    attn_dropout: float = 0.1
    label_smoothing: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.98
    adam_eps: float = 1e-9
    grad_accum: int = 1
    max_steps: int = 2000
    batch_max_tokens: int = 2000
    eval_interval: int = 100
    patience: int = 5

    def __post_init__(self):
        if not 0 <= self.dropout < 1 or not 0 <= self.attn_dropout < 1:
            raise ValueError("dropout rates must be in [0, 1)")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label smoothing must be in [0, 1)")
        if self.warmup_steps < 1:
            raise ValueError("warmup_steps must be >= 1")
        if self.grad_accum < 1:
            raise ValueError("grad_accum must be >= 1")


def lr_schedule(step: int, hyper: TrainHyper) -> float:
    """Linear warmup from lr_init to lr_peak, then inverse-sqrt decay."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if step <= hyper.warmup_steps:
        frac = step / hyper.warmup_steps
        return hyper.lr_init + (hyper.lr_peak - hyper.lr_init) * frac
    return hyper.lr_peak * math.sqrt(hyper.warmup_steps / step)


def label_smoothed_xent(
    logits: torch.Tensor,
    targets: torch.Tensor,
    smoothing: float,
    pad_id: int | None = None,
    mask: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean cross-entropy against the smoothed target distribution.

    The target distribution puts 1 - eps on the gold index and spreads
    eps uniformly over the remaining vocabulary; the mean runs over
    non-padding positions. Differentiable through ``logits``.
    """
    if logits.shape[:-1] != targets.shape:
        raise ValueError(f"shape mismatch: {tuple(logits.shape)} vs {tuple(targets.shape)}")
    vocab = logits.shape[-1]
    if mask is None:
        mask = targets != pad_id if pad_id is not None else torch.ones_like(targets, dtype=torch.bool)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("all positions are padding")
    log_probs = torch.log_softmax(logits, dim=-1)
    gold = torch.gather(log_probs, -1, targets.unsqueeze(-1).clamp(min=0)).squeeze(-1)
    if smoothing == 0.0:
        per_pos = -gold
    else:
        rest = log_probs.sum(dim=-1) - gold
        per_pos = -(1.0 - smoothing) * gold - (smoothing / (vocab - 1)) * rest
    return per_pos[mask].sum() / n


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the parameter dict."""

    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


@torch.no_grad()
def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: AdamState,
    step: int,
    hyper: TrainHyper,
) -> dict[str, torch.Tensor]:
    """One bias-corrected Adam update in place; lr follows the schedule.

    ``step`` counts applied updates starting at 1. Raises GradientError
    naming the parameter if its gradient is not finite.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    lr = lr_schedule(step, hyper)
    b1, b2, eps = hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not torch.isfinite(g).all():
            raise GradientError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            state.m[name] = torch.zeros_like(p)
            state.v[name] = torch.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m.mul_(b1).add_(g, alpha=1 - b1)
        v.mul_(b2).addcmul_(g, g, value=1 - b2)
        m_hat = m / (1 - b1 ** step)
        v_hat = v / (1 - b2 ** step)
        p.sub_(lr * m_hat / (v_hat.sqrt() + eps))
    return params


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    n_checked: int

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_err < tolerance


def gradient_check(
    fn,
    params: dict[str, torch.Tensor],
    h: float = 1e-5,
    max_coords_per_param: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare autograd gradients of ``fn(params)`` to central differences.

    ``fn`` must return a scalar built from the given float64 leaf tensors;
    stochastic layers (dropout) must be disabled by the caller. The
    relative error denominator is floored at 1e-6 so near-zero gradients
    are judged on the finite-difference noise scale.
    """
    for name, p in params.items():
        if p.dtype != torch.float64:
            raise ValueError(f"gradient check requires float64 params; {name} is {p.dtype}")
        if not p.requires_grad:
            raise ValueError(f"parameter {name} does not require grad")

    loss = fn(params)
    if not torch.isfinite(loss):
        raise GradientError("non-finite loss at the check point")
    analytic = torch.autograd.grad(loss, list(params.values()), allow_unused=False)
    analytic = {name: g for name, g in zip(params.keys(), analytic)}

    rng = torch.Generator().manual_seed(seed)
    max_rel = 0.0
    worst = ""
    n_checked = 0
    with torch.no_grad():
        for name, p in params.items():
            flat = p.reshape(-1)
            idx = torch.arange(flat.numel())
            if max_coords_per_param is not None and flat.numel() > max_coords_per_param:
                perm = torch.randperm(flat.numel(), generator=rng)
                idx = perm[:max_coords_per_param]
            for i in idx.tolist():
                orig = flat[i].item()
                flat[i] = orig + h
                f_plus = float(fn(params))
                flat[i] = orig - h
                f_minus = float(fn(params))
                flat[i] = orig
                numeric = (f_plus - f_minus) / (2 * h)
                a = analytic[name].reshape(-1)[i].item()
                if not (math.isfinite(numeric) and math.isfinite(a)):
                    raise GradientError(f"non-finite value while checking {name}[{i}]")
                rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
                n_checked += 1
                if rel > max_rel:
                    max_rel, worst = rel, f"{name}[{i}]"
    return GradCheckReport(max_rel_err=max_rel, worst_param=worst, n_checked=n_checked)


def dropout(x: torch.Tensor, p: float, training: bool, gen: torch.Generator) -> torch.Tensor:
    """Inverted dropout with an explicit generator so replays are exact."""
    if not training or p == 0.0:
        return x
    keep = (torch.rand(x.shape, generator=gen, dtype=x.dtype) >= p).to(x.dtype)
    return x * keep / (1.0 - p)

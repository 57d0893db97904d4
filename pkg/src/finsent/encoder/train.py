"""Microbatched training loop with gradient accumulation and loss tracing."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .._rng import OP_ENCODER_TRAIN, substream
from .lora import LoraAdapter, adapters_to_dict
from .model import EncoderConfig, EncoderParams, loss_and_grad
from .optim import AdamWConfig, OptimizerState, adamw_step, lr_at


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    per_device_batch: int = 1
    grad_accum_steps: int = 8
    base_lr: float = 2e-4
    warmup_ratio: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.per_device_batch < 1 or self.grad_accum_steps < 1:
            raise ValueError("batch and accumulation sizes must be positive")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ValueError("warmup_ratio must lie in [0, 1)")


@dataclass
class TraceRow:
    step: int
    epoch: int
    lr: float
    loss: float
    train_acc: float | None = None
    val_loss: float | None = None
    val_acc: float | None = None


TRACE_HEADER = ("step", "epoch", "lr", "loss", "train_acc", "val_loss", "val_acc")


def trace_to_csv(rows: list[TraceRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for r in rows:
        writer.writerow([
            r.step, r.epoch, repr(r.lr), repr(r.loss),
            "" if r.train_acc is None else repr(r.train_acc),
            "" if r.val_loss is None else repr(r.val_loss),
            "" if r.val_acc is None else repr(r.val_acc),
        ])
    return buf.getvalue()


def train_loop(examples, params: EncoderParams, config: EncoderConfig,
               train_config: TrainConfig,
               adapters: dict[str, LoraAdapter] | None = None,
               peft_mode: bool = False,
               adamw: AdamWConfig | None = None,
               eval_hook=None) -> list[TraceRow]:
    """Train in place; returns the per-optimizer-step loss trace.

    Each optimizer step averages gradients over up to `grad_accum_steps`
    microbatches of `per_device_batch` examples.  The learning rate follows
    the warmup/decay schedule over the total number of optimizer steps.
    `eval_hook(epoch, params, adapters)`, when given, runs after each epoch
    and may return a dict with train_acc / val_loss / val_acc entries that
    are recorded on the epoch's final trace row.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("empty training set")
    if peft_mode and not adapters:
        raise ValueError("peft_mode requires adapters")

    n = len(examples)
    b = train_config.per_device_batch
    micro_per_epoch = math.ceil(n / b)
    steps_per_epoch = math.ceil(micro_per_epoch / train_config.grad_accum_steps)
    total_steps = train_config.epochs * steps_per_epoch

    tensors = dict(params.to_dict())
    if adapters:
        tensors.update(adapters_to_dict(adapters))
    state = OptimizerState(hyper=adamw or AdamWConfig(lr=train_config.base_lr))

    trace: list[TraceRow] = []
    step = 0
    for epoch in range(train_config.epochs):
        order = substream(train_config.seed, OP_ENCODER_TRAIN, epoch).permutation(n)
        micros = [order[s:s + b] for s in range(0, n, b)]
        for g0 in range(0, len(micros), train_config.grad_accum_steps):
            group = micros[g0:g0 + train_config.grad_accum_steps]
            acc: dict[str, np.ndarray] = {}
            losses = []
            for micro in group:
                batch = [examples[i] for i in micro]
                loss, grads = loss_and_grad(params, batch, config, adapters,
                                            peft_mode=peft_mode)
                losses.append(loss)
                for name, grad in grads.items():
                    if name in acc:
                        acc[name] += grad
                    else:
                        acc[name] = grad
            for name in acc:
                acc[name] /= len(group)
            step += 1
            lr = lr_at(step, total_steps, train_config.base_lr,
                       train_config.warmup_ratio)
            adamw_step(tensors, acc, state, lr=lr)
            trace.append(TraceRow(step=step, epoch=epoch, lr=lr,
                                  loss=float(np.mean(losses))))
        if eval_hook is not None and trace:
            metrics = eval_hook(epoch, params, adapters) or {}
            last = trace[-1]
            last.train_acc = metrics.get("train_acc", last.train_acc)
            last.val_loss = metrics.get("val_loss", last.val_loss)
            last.val_acc = metrics.get("val_acc", last.val_acc)
    return trace

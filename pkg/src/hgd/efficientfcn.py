"""Toy segmentation stack around the codeword decoder.

A small stride-2 convolutional encoder emits taps at strides 8/16/32, the
decoder reconstructs a fine feature map, and a 1x1 classifier plus bilinear
x8 upsampling produces per-pixel logits. The trainer is plain SGD with
momentum, coupled weight decay, and a polynomial learning-rate schedule,
logging (iter, lr, loss, pixAcc) rows to CSV.

The encoder is deliberately tiny: it preserves the three-tap stride contract
the decoder consumes while staying cheap enough for finite-difference
checks and overfitting smoke tests.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .decoder import HgdConfig, HgdParams, hgd_forward, init_hgd_params
from .metrics import metrics
from .params import ConvParams, conv1x1_params, conv3x3_params
from .tensor import ConfigError, Tensor


# ----------------------------------------------------------------- backbone

@dataclass(frozen=True)
class ToyBackboneConfig:
    stage_channels: tuple = (32, 64, 96, 128)   # at strides 4, 8, 16, 32
    blocks_per_stage: int = 1

    def __post_init__(self):
        if len(self.stage_channels) != 4 or any(c < 1 for c in self.stage_channels):
            raise ConfigError(f"need four positive stage channel counts, got {self.stage_channels}")
        if self.blocks_per_stage < 1:
            raise ConfigError("blocks_per_stage must be at least 1")

    @property
    def tap_channels(self):
        return self.stage_channels[1:]


@dataclass
class BackboneLayer:
    conv: ConvParams
    stride: int
    tap: str | None = None


@dataclass
class BackboneParams:
    config: ToyBackboneConfig
    layers: list

    def named_parameters(self):
        for i, layer in enumerate(self.layers):
            yield from layer.conv.named(f"conv{i:02d}")


def init_backbone_params(config: ToyBackboneConfig, rng, dtype=np.float64) -> BackboneParams:
    c4, c8, c16, c32 = config.stage_channels
    blocks = config.blocks_per_stage
    layers = []

    def stage(c_in, c_out, tap=None):
        layers.append(BackboneLayer(conv3x3_params(c_in, c_out, rng, dtype), stride=2))
        for _ in range(blocks - 1):
            layers.append(BackboneLayer(conv3x3_params(c_out, c_out, rng, dtype), stride=1))
        if tap:
            layers[-1].tap = tap

    stage(3, c4)          # stride 2
    stage(c4, c4)         # stride 4
    stage(c4, c8, "e8")
    stage(c8, c16, "e16")
    stage(c16, c32, "e32")
    return BackboneParams(config=config, layers=layers)


def backbone_forward(image: Tensor, params: BackboneParams):
    _, h, w = image.dims
    if h % 32 or w % 32:
        raise ConfigError(f"input extents must be divisible by 32, got {h}x{w}")
    taps = {}
    x = image
    for layer in params.layers:
        x = ops.relu(ops.conv3x3(x, layer.conv.weight, layer.conv.bias, stride=layer.stride))
        if layer.tap:
            taps[layer.tap] = x
    return taps["e8"], taps["e16"], taps["e32"]


# ------------------------------------------------------------- segmentation

@dataclass
class SegParams:
    backbone: BackboneParams
    hgd: HgdParams
    classifier: ConvParams

    def named_parameters(self):
        for name, t in self.backbone.named_parameters():
            yield f"backbone.{name}", t
        for name, t in self.hgd.named_parameters():
            yield f"hgd.{name}", t
        yield from self.classifier.named("classifier")


def init_seg_params(backbone_config: ToyBackboneConfig, hgd_config: HgdConfig,
                    num_classes: int, rng, dtype=np.float64) -> SegParams:
    backbone = init_backbone_params(backbone_config, rng, dtype)
    hgd = init_hgd_params(backbone_config.tap_channels, hgd_config, rng, dtype)
    head_in = hgd_config.codeword_dim + hgd_config.guidance_channels
    classifier = conv1x1_params(head_in, num_classes, rng, dtype)
    return SegParams(backbone=backbone, hgd=hgd, classifier=classifier)


def segment_forward(image: Tensor, params: SegParams) -> Tensor:
    _, h, w = image.dims
    e8, e16, e32 = backbone_forward(image, params.backbone)
    fused = hgd_forward(e8, e16, e32, params.hgd)
    logits = ops.conv1x1(fused, params.classifier.weight, params.classifier.bias)
    return ops.bilinear_resize(logits, h, w)


def predict_labels(logits: Tensor) -> np.ndarray:
    # argmax picks the first maximum, i.e. ties go to the lowest class id
    return np.argmax(logits.data, axis=0).astype(np.int64)


def tiny_backbone_config() -> ToyBackboneConfig:
    return ToyBackboneConfig(stage_channels=(8, 16, 24, 32))


def tiny_hgd_config() -> HgdConfig:
    return HgdConfig(n_codewords=8, codeword_dim=32, compressed_channels=16,
                     guidance_channels=32, transfer_enabled=True)


def tiny_train_config() -> "TrainConfig":
    """Training settings for the tiny demo task.

    With the seeds used by the demo (data 2024, init 17, batch order 3)
    this overfits the 32-sample synthetic set past 99% pixel accuracy
    inside the 500-step budget; base_lr much above 0.05 risks divergence
    at this scale.
    """
    return TrainConfig(base_lr=0.05, max_iter=500, batch=16)


# ----------------------------------------------------------------- training

@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 0.001
    power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 1e-4
    max_iter: int = 500
    batch: int = 8

    def __post_init__(self):
        if self.power <= 0:
            raise ConfigError(f"power must be positive, got {self.power}")
        if self.batch < 1 or self.max_iter < 1:
            raise ConfigError("batch and max_iter must be at least 1")


def poly_lr(iteration: int, cfg: TrainConfig) -> float:
    if iteration > cfg.max_iter:
        warnings.warn(f"iteration {iteration} past max_iter {cfg.max_iter}; lr clamped to 0")
        return 0.0
    return cfg.base_lr * (1.0 - iteration / cfg.max_iter) ** cfg.power


@dataclass
class SgdState:
    velocities: list


def sgd_step(params, grads, lr: float, cfg: TrainConfig, state: SgdState | None = None) -> SgdState:
    """v <- momentum*v + grad + weight_decay*param; param <- param - lr*v."""
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if state is None:
        state = SgdState(velocities=[np.zeros_like(p.data) for p in params])
    for p, g, v in zip(params, grads, state.velocities):
        v *= cfg.momentum
        v += g
        v += cfg.weight_decay * p.data
        p.data -= lr * v
    return state


def evaluate(samples, params: SegParams, num_classes: int):
    preds = []
    gts = []
    for s in samples:
        preds.append(predict_labels(segment_forward(s.image, params)).ravel())
        gts.append(s.label.ravel())
    return metrics(np.concatenate(preds), np.concatenate(gts), num_classes)


@dataclass
class TrainResult:
    history: list
    final_pixacc: float
    final_miou: float
    steps: int


def train_segmenter(samples, params: SegParams, cfg: TrainConfig, num_classes: int,
                    rng, log_path=None, eval_every: int = 25,
                    target_pixacc: float | None = None) -> TrainResult:
    """Overfit the given samples; returns per-step history and final metrics.

    When target_pixacc is set, the whole training set is scored every
    eval_every steps and the loop stops as soon as the target is reached.
    """
    named = list(params.named_parameters())
    tensors = [t for _, t in named]
    state = None
    history = []
    steps = 0

    for it in range(cfg.max_iter):
        lr = poly_lr(it, cfg)
        picks = rng.choice(len(samples), size=min(cfg.batch, len(samples)), replace=False)
        for t in tensors:
            t.zero_grad()
        loss_sum = 0.0
        correct = 0
        valid = 0
        for j in picks:
            sample = samples[j]
            logits = segment_forward(sample.image, params)
            loss = ops.cross_entropy_logits(logits, sample.label)
            ops.scalar_scale(loss, 1.0 / len(picks)).backward()
            loss_sum += float(loss.data)
            pred = predict_labels(logits)
            mask = sample.label != 255
            correct += int((pred[mask] == sample.label[mask]).sum())
            valid += int(mask.sum())
        grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
        state = sgd_step(tensors, grads, lr, cfg, state)
        history.append({"iter": it, "lr": lr, "loss": loss_sum / len(picks),
                        "pixAcc": correct / max(valid, 1)})
        steps = it + 1
        if target_pixacc is not None and (it + 1) % eval_every == 0:
            acc, _ = evaluate(samples, params, num_classes)
            if acc >= target_pixacc:
                break

    final_acc, final_miou = evaluate(samples, params, num_classes)
    if log_path is not None:
        with open(log_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "lr", "loss", "pixAcc"])
            for row in history:
                writer.writerow([row["iter"], f"{row['lr']:.8g}",
                                 f"{row['loss']:.8g}", f"{row['pixAcc']:.6f}"])
    return TrainResult(history=history, final_pixacc=final_acc,
                       final_miou=final_miou, steps=steps)

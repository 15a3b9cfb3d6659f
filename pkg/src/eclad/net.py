"""Minimal convolutional classifier with tapped activations.

Stages are conv(k x k, stride 1, zero pad) -> ReLU -> 2x2 maxpool; the
post-pool activation of stage i is exposed as tap ``pool<i>``. The head
flattens the last tap into a dense layer producing class logits. The
backward pass returns the gradient of a chosen class logit (pre-softmax)
with respect to every tap. All passes are hand-rolled on the shared
kernels, so forward and backward are deterministic and dtype-generic
(float32 for training, float64 for gradient checks).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ectf, kernels, synth

Params = dict[str, np.ndarray]


class TrainingError(RuntimeError):
    """Raised when training diverges (non-finite loss)."""


@dataclass(frozen=True)
class Architecture:
    input_size: int = 64
    in_channels: int = 3
    stage_channels: tuple[int, ...] = (16, 32, 64, 64)
    kernel_size: int = 3
    n_classes: int = 2

    def __post_init__(self):
        n = len(self.stage_channels)
        if n < 2:
            raise ValueError("need at least 2 stages (2 tap points)")
        if self.input_size % (2 ** n) != 0 or self.input_size // (2 ** n) < 2:
            raise ValueError(
                f"input {self.input_size} px does not leave every tap >= 2x2 "
                f"over {n} pool stages")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel size must be odd (zero-pad same convolution)")

    @property
    def tap_names(self) -> list[str]:
        return [f"pool{i + 1}" for i in range(len(self.stage_channels))]

    def tap_size(self, stage: int) -> int:
        return self.input_size // (2 ** (stage + 1))

    @property
    def flat_dim(self) -> int:
        last = len(self.stage_channels) - 1
        return self.tap_size(last) ** 2 * self.stage_channels[last]

    def to_json(self) -> dict:
        return {
            "input_size": self.input_size,
            "in_channels": self.in_channels,
            "stage_channels": list(self.stage_channels),
            "kernel_size": self.kernel_size,
            "n_classes": self.n_classes,
        }

    @staticmethod
    def from_json(doc: dict) -> "Architecture":
        return Architecture(
            input_size=doc["input_size"],
            in_channels=doc["in_channels"],
            stage_channels=tuple(doc["stage_channels"]),
            kernel_size=doc["kernel_size"],
            n_classes=doc["n_classes"],
        )


def init(arch: Architecture, seed: int) -> Params:
    """He-uniform kernels, zero biases."""
    rng = np.random.default_rng(seed)
    k = arch.kernel_size
    params: Params = {}
    cin = arch.in_channels
    for i, cout in enumerate(arch.stage_channels):
        bound = np.sqrt(6.0 / (k * k * cin))
        params[f"stage{i + 1}.kernel"] = rng.uniform(
            -bound, bound, (k, k, cin, cout)).astype(np.float32)
        params[f"stage{i + 1}.bias"] = np.zeros(cout, np.float32)
        cin = cout
    bound = np.sqrt(6.0 / arch.flat_dim)
    params["head.weight"] = rng.uniform(
        -bound, bound, (arch.flat_dim, arch.n_classes)).astype(np.float32)
    params["head.bias"] = np.zeros(arch.n_classes, np.float32)
    return params


def params_as(params: Params, dtype) -> Params:
    return {k: v.astype(dtype) for k, v in params.items()}


def _forward_cache(params: Params, arch: Architecture, image: np.ndarray):
    if image.shape != (arch.input_size, arch.input_size, arch.in_channels):
        raise ValueError(
            f"image shape {image.shape} does not match architecture input "
            f"({arch.input_size}, {arch.input_size}, {arch.in_channels})")
    x = np.ascontiguousarray(image)
    stages = []
    for i in range(len(arch.stage_channels)):
        w = params[f"stage{i + 1}.kernel"]
        b = params[f"stage{i + 1}.bias"]
        pre = kernels.conv2d_fwd(x, w, b)
        act = np.maximum(pre, 0)
        out, idx = kernels.maxpool2_fwd(np.ascontiguousarray(act))
        stages.append({"x_in": x, "pre": pre, "idx": idx, "out": out})
        x = out
    flat = x.reshape(-1)
    logits = flat @ params["head.weight"] + params["head.bias"]
    return logits, stages


def forward(params: Params, arch: Architecture, image: np.ndarray):
    """Returns (logits, taps) where taps maps pool<i> -> activation map."""
    logits, stages = _forward_cache(params, arch, image)
    taps = {f"pool{i + 1}": s["out"] for i, s in enumerate(stages)}
    return logits, taps


def forward_from(params: Params, arch: Architecture, tap_name: str,
                 activation: np.ndarray) -> np.ndarray:
    """Logits from a given tap activation through the remaining stages."""
    start = arch.tap_names.index(tap_name) + 1
    x = np.ascontiguousarray(activation)
    for i in range(start, len(arch.stage_channels)):
        pre = kernels.conv2d_fwd(x, params[f"stage{i + 1}.kernel"],
                                 params[f"stage{i + 1}.bias"])
        act = np.maximum(pre, 0)
        x, _ = kernels.maxpool2_fwd(np.ascontiguousarray(act))
    return x.reshape(-1) @ params["head.weight"] + params["head.bias"]


def _conv_bwd_input(dy: np.ndarray, w: np.ndarray) -> np.ndarray:
    # adjoint of same-padded stride-1 convolution: correlate with the
    # spatially flipped kernel, swapping in/out channel axes
    w_t = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
    zero_bias = np.zeros(w_t.shape[3], dy.dtype)
    return kernels.conv2d_fwd(np.ascontiguousarray(dy), w_t, zero_bias)


def _stage_backward(params: Params, stage_idx: int, stage_cache: dict,
                    d_out: np.ndarray, want_input_grad: bool):
    d_act = kernels.maxpool2_bwd(np.ascontiguousarray(d_out), stage_cache["idx"])
    d_pre = np.where(stage_cache["pre"] > 0, d_act, 0)
    grads = {}
    k = params[f"stage{stage_idx + 1}.kernel"].shape[0]
    grads[f"stage{stage_idx + 1}.kernel"] = kernels.conv2d_bwd_params(
        stage_cache["x_in"], np.ascontiguousarray(d_pre), k, k)
    grads[f"stage{stage_idx + 1}.bias"] = d_pre.sum(axis=(0, 1))
    d_in = None
    if want_input_grad:
        d_in = _conv_bwd_input(d_pre, params[f"stage{stage_idx + 1}.kernel"])
    return grads, d_in


def backward_taps_cached(params: Params, arch: Architecture, stages: list,
                         class_k: int) -> dict[str, np.ndarray]:
    """Tap gradients from an existing forward cache (one class logit)."""
    if not 0 <= class_k < arch.n_classes:
        raise ValueError(f"class {class_k} out of range for {arch.n_classes} classes")
    n = len(stages)
    grads: dict[str, np.ndarray] = {}
    d_out = params["head.weight"][:, class_k].reshape(stages[-1]["out"].shape)
    grads[f"pool{n}"] = d_out
    for i in range(n - 1, 0, -1):
        d_act = kernels.maxpool2_bwd(np.ascontiguousarray(d_out), stages[i]["idx"])
        d_pre = np.where(stages[i]["pre"] > 0, d_act, 0)
        d_out = _conv_bwd_input(d_pre, params[f"stage{i + 1}.kernel"])
        grads[f"pool{i}"] = d_out
    return grads


def backward_to_taps(params: Params, arch: Architecture, image: np.ndarray,
                     class_k: int) -> dict[str, np.ndarray]:
    """d(logit_k)/d(tap) for every tap, by reverse accumulation."""
    _, stages = _forward_cache(params, arch, image)
    return backward_taps_cached(params, arch, stages, class_k)


def _param_grads(params: Params, arch: Architecture, stages: list,
                 flat: np.ndarray, d_logits: np.ndarray) -> Params:
    grads: Params = {
        "head.weight": np.outer(flat, d_logits),
        "head.bias": d_logits.copy(),
    }
    d_out = (params["head.weight"] @ d_logits).reshape(stages[-1]["out"].shape)
    for i in range(len(stages) - 1, -1, -1):
        stage_grads, d_in = _stage_backward(params, i, stages[i], d_out, i > 0)
        grads.update(stage_grads)
        d_out = d_in
    return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def load_dataset(dataset_dir):
    """(images (n,h,w,3) float32, labels (n,), classes, image ids)."""
    manifest = synth.load_manifest(dataset_dir)
    root = Path(dataset_dir)
    classes = manifest["classes"]
    images, labels, ids = [], [], []
    for entry in manifest["files"]:
        images.append(synth.load_image_png(root / entry["path"]))
        labels.append(classes.index(entry["class"]))
        ids.append(synth.record_id(entry))
    if not images:
        raise ValueError(f"dataset {dataset_dir} contains no images")
    return np.stack(images), np.asarray(labels, np.int64), classes, ids


@dataclass
class Hyper:
    lr: float = 0.1
    momentum: float = 0.9
    epochs: int = 30
    batch: int = 24
    seed: int = 0
    val_fraction: float = 0.15
    early_stop_acc: float | None = None
    # momentum at 0.9 multiplies the effective step tenfold; without a norm
    # cap the head oscillates and float32 logits overflow within two epochs
    clip_norm: float | None = 1.0
    # color-jitter strength in [0, 1]; 0 disables. Makes absolute color an
    # unreliable shortcut so the net also has to encode texture and shape
    augment: float = 0.0


def _color_jitter(x: np.ndarray, strength: float, rng) -> np.ndarray:
    scale = rng.uniform(1.0 - 0.3 * strength, 1.0 + 0.3 * strength, 3)
    shift = rng.uniform(-0.15 * strength, 0.15 * strength, 3)
    mix = rng.uniform(0.0, 0.25 * strength)
    gray = x.mean(axis=2, keepdims=True)
    out = (x * (1.0 - mix) + gray * mix) * scale.astype(np.float32) + shift.astype(np.float32)
    return np.clip(out, 0.0, 1.0)


def _cutout(x: np.ndarray, strength: float, rng) -> np.ndarray:
    # occluding a random square sometimes hides the class-defining element,
    # so a single presence detector stops sufficing and evidence for every
    # class keeps earning head weight
    if rng.random() >= 0.5 * strength:
        return x
    h, w, _ = x.shape
    side = int(round(rng.uniform(0.15, 0.40) * min(h, w)))
    y0 = int(rng.integers(0, h - side + 1))
    x0 = int(rng.integers(0, w - side + 1))
    out = x.copy()
    out[y0:y0 + side, x0:x0 + side] = 0.5
    return out


def _augment(x: np.ndarray, strength: float, rng) -> np.ndarray:
    return _cutout(_color_jitter(x, strength, rng), strength, rng)


def _evaluate(params: Params, arch: Architecture, images, labels, idxs):
    correct = 0
    loss = 0.0
    for i in idxs:
        logits, _ = _forward_cache(params, arch, images[i])
        p = softmax(logits)
        loss += -float(np.log(max(p[labels[i]], 1e-12)))
        if int(np.argmax(logits)) == labels[i]:
            correct += 1
    n = max(1, len(idxs))
    return correct / n, loss / n


def train(arch: Architecture, dataset_dir, hyper: Hyper):
    """SGD with momentum on the softmax negative log likelihood.

    Deterministic per seed: the split, the epoch shuffles, and every
    update happen in a fixed order. Returns (params, history).
    """
    images, labels, classes, _ = load_dataset(dataset_dir)
    if len(classes) != arch.n_classes:
        raise ValueError(
            f"dataset has {len(classes)} classes, architecture expects {arch.n_classes}")
    rng = np.random.default_rng(hyper.seed)
    perm = rng.permutation(len(images))
    n_val = int(round(hyper.val_fraction * len(images)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if len(train_idx) == 0:
        raise ValueError("no training images after validation split")

    params = init(arch, hyper.seed)
    velocity = {k: np.zeros_like(v) for k, v in params.items()}
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        for start in range(0, len(order), hyper.batch):
            batch = order[start:start + hyper.batch]
            batch_grads = None
            for i in batch:
                x = images[i]
                if hyper.augment > 0.0:
                    x = _augment(x, hyper.augment, rng)
                logits, stages = _forward_cache(params, arch, x)
                probs = softmax(logits)
                epoch_loss += -float(np.log(max(probs[labels[i]], 1e-12)))
                d_logits = probs.astype(np.float32)
                d_logits[labels[i]] -= 1.0
                flat = stages[-1]["out"].reshape(-1)
                g = _param_grads(params, arch, stages, flat, d_logits)
                if batch_grads is None:
                    batch_grads = g
                else:
                    for name in batch_grads:
                        batch_grads[name] += g[name]
            inv = 1.0 / len(batch)
            if hyper.clip_norm is not None:
                sq = 0.0
                for g in batch_grads.values():
                    sq += float(np.square(g, dtype=np.float64).sum())
                gnorm = np.sqrt(sq) * inv
                if gnorm > hyper.clip_norm:
                    inv *= hyper.clip_norm / gnorm
            for name in params:
                velocity[name] = hyper.momentum * velocity[name] + batch_grads[name] * inv
                params[name] = params[name] - hyper.lr * velocity[name]
        train_loss = epoch_loss / len(order)
        if not np.isfinite(train_loss):
            raise TrainingError(f"training loss diverged at epoch {epoch + 1}")
        val_acc, val_loss = _evaluate(params, arch, images, labels, val_idx)
        history.append({
            "epoch": epoch + 1,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "val_acc": val_acc,
        })
        if hyper.early_stop_acc is not None and val_acc >= hyper.early_stop_acc:
            break
    return params, history


def accuracy(params: Params, arch: Architecture, dataset_dir) -> float:
    images, labels, _, _ = load_dataset(dataset_dir)
    acc, _ = _evaluate(params, arch, images, labels, range(len(images)))
    return acc


def save_checkpoint(path, arch: Architecture, params: Params) -> None:
    """ECTF of the parameter tensors plus a JSON architecture sidecar.

    The container stores float32, so float64 training state is quantized
    once on save; a further save/load cycle is lossless.
    """
    path = Path(path)
    entries: dict[str, np.ndarray] = {}
    for name, value in params.items():
        if value.ndim == 4:  # (k, k, cin, cout) packed into 3 dims
            k0, k1, cin, cout = value.shape
            entries[name] = value.reshape(k0, k1, cin * cout)
        elif value.ndim == 2:
            entries[name] = value.reshape(1, *value.shape)
        else:
            entries[name] = value.reshape(1, 1, -1)
    ectf.save(path, entries)
    with open(path.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(arch.to_json(), fh, indent=2)
        fh.write("\n")


def load_checkpoint(path):
    path = Path(path)
    with open(path.with_suffix(".json"), encoding="utf-8") as fh:
        arch = Architecture.from_json(json.load(fh))
    entries = ectf.load(path)
    params: Params = {}
    cin = arch.in_channels
    k = arch.kernel_size
    for i, cout in enumerate(arch.stage_channels):
        params[f"stage{i + 1}.kernel"] = entries[f"stage{i + 1}.kernel"].reshape(
            k, k, cin, cout)
        params[f"stage{i + 1}.bias"] = entries[f"stage{i + 1}.bias"].reshape(cout)
        cin = cout
    params["head.weight"] = entries["head.weight"].reshape(
        arch.flat_dim, arch.n_classes)
    params["head.bias"] = entries["head.bias"].reshape(arch.n_classes)
    return arch, params

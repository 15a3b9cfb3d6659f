"""Concept mining over tapped activations.

Pipeline: per-pixel descriptors are built by upscaling every tapped
activation map to a common target and concatenating them channel-wise;
streaming minibatch k-means over all descriptor pixels yields concept
centroids; nearest-centroid assignment localizes each concept as a mask;
the dot product between the per-pixel descriptor and the equally
aggregated class-logit gradients gives a pixel sensitivity, from which
per-class contrastive sensitivity and a normalized relative importance
are scored.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import ectf, kernels, net, synth, tensors


@dataclass
class ConceptModel:
    centroids: np.ndarray  # (n_c, c_total) float64
    layers: list[str]
    mode: str
    standardize: bool = False
    mean: np.ndarray | None = None  # per-channel stats when standardize is on
    std: np.ndarray | None = None

    def __post_init__(self):
        if self.centroids.ndim != 2:
            raise ValueError("centroids must have shape (n_c, channels)")
        uniq = np.unique(self.centroids, axis=0)
        if uniq.shape[0] != self.centroids.shape[0]:
            raise ValueError("centroids must be pairwise distinct")

    @property
    def n_c(self) -> int:
        return self.centroids.shape[0]

    def prepare(self, lads: np.ndarray) -> np.ndarray:
        """Descriptor pixels in the space the centroids live in (float64)."""
        out = lads.astype(np.float64)
        if self.standardize:
            out = (out - self.mean) / self.std
        return out


@dataclass
class ImportanceReport:
    cs: np.ndarray  # (n_c, n_classes)
    ri: np.ndarray  # (n_c,)
    k_of: np.ndarray  # (n_c,) argmax class per concept
    pixel_counts: np.ndarray  # (n_c, n_classes) concept pixels seen per class
    degenerate: bool  # all contrastive sensitivities vanished


def compute_descriptor(taps: dict[str, np.ndarray], layers: Iterable[str],
                       target_h: int, target_w: int, mode: str) -> np.ndarray:
    """Upscale the chosen taps to the target and concatenate channel-wise."""
    layers = list(layers)
    if not layers:
        raise ValueError("need at least one tapped layer")
    missing = [l for l in layers if l not in taps]
    if missing:
        raise ValueError(f"taps missing layers {missing}; have {sorted(taps)}")
    parts = [tensors.upscale(taps[l], target_h, target_w, mode) for l in layers]
    return tensors.concat_channels(parts)


def compute_gradient_field(grad_taps: dict[str, np.ndarray], layers: Iterable[str],
                           target_h: int, target_w: int, mode: str) -> np.ndarray:
    """Same aggregation as compute_descriptor, applied to gradient taps."""
    return compute_descriptor(grad_taps, layers, target_h, target_w, mode)


def _kmeans_pp(points: np.ndarray, n_c: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    if n_c > n:
        raise ValueError(f"cannot seed {n_c} centroids from {n} descriptor pixels")
    centers = np.empty((n_c, points.shape[1]), np.float64)
    centers[0] = points[int(rng.integers(n))]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, n_c):
        total = d2.sum()
        if total <= 0.0:
            raise ValueError(
                f"fewer than {n_c} distinct descriptor pixels available for seeding")
        pick = int(rng.choice(n, p=d2 / total))
        centers[j] = points[pick]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _chunk(stream: Iterator[np.ndarray], n_i: int) -> Iterator[np.ndarray]:
    buf: list[np.ndarray] = []
    for d in stream:
        buf.append(d.reshape(-1, d.shape[2]).astype(np.float64))
        if len(buf) == n_i:
            yield np.concatenate(buf, axis=0)
            buf = []
    if buf:
        yield np.concatenate(buf, axis=0)


INIT_SAMPLE = 4096


def _seed_sample(stream: Iterator[np.ndarray], cap: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Uniform reservoir of descriptor pixels across a whole stream.

    Fill-then-replace: pixel t lands in a uniformly drawn slot with
    probability cap/(t+1). Streams of at most cap pixels come back whole
    and in order without consuming any randomness, so small fits stay
    reproducible against a by-hand seeding.
    """
    pool: np.ndarray | None = None
    seen = 0
    for d in stream:
        rows = d.reshape(-1, d.shape[2]).astype(np.float64)
        n = rows.shape[0]
        if pool is None:
            pool = np.empty((cap, rows.shape[1]), np.float64)
        take = min(max(cap - seen, 0), n)
        if take:
            pool[seen:seen + take] = rows[:take]
        if take < n:
            tail = rows[take:]
            # slot draw for global pixel index g is uniform over [0, g]
            slots = rng.integers(0, seen + take + 1 + np.arange(tail.shape[0]))
            for i in np.nonzero(slots < cap)[0]:
                pool[slots[i]] = tail[i]
        seen += n
    if pool is None:
        raise ValueError("descriptor stream is empty")
    return pool[:min(seen, cap)]


def fit_concepts(stream_factory, n_c: int, n_i: int, seed: int,
                 epochs: int = 1, init: np.ndarray | None = None) -> np.ndarray:
    """Minibatch k-means over every descriptor pixel of a stream.

    ``stream_factory`` returns a fresh iterator of descriptor fields per
    epoch (fixed order). Unless ``init`` supplies explicit starting
    centroids, a seeding pass reservoir-samples up to 4096 pixels uniformly
    across the stream and k-means++ picks centroids from that pool, so
    every class contributes candidates no matter how images are ordered.
    Each minibatch is then assigned against the current centroids and every
    centroid moves to the running mean of all samples it has ever received:
    c_j = (c_j * n_before + batch_sum_j) / n_after, the per-batch closed
    form of the 1/count learning-rate update. Per-centroid batch sums
    accumulate in sample order so a single full-size minibatch reproduces
    one classic k-means iteration bit for bit. Returns (n_c, channels)
    float64 centroids.
    """
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    if n_i < 1:
        raise ValueError("n_i must be >= 1")
    rng = np.random.default_rng(seed)
    if init is not None:
        centroids = np.array(init, np.float64, copy=True)
        if centroids.shape[0] != n_c:
            raise ValueError(f"init has {centroids.shape[0]} centroids, expected {n_c}")
    else:
        pool = _seed_sample(iter(stream_factory()), max(INIT_SAMPLE, n_c), rng)
        centroids = _kmeans_pp(pool, n_c, rng)
    counts = np.zeros(n_c, np.int64)
    total = 0
    for epoch in range(max(1, epochs)):
        for batch in _chunk(iter(stream_factory()), n_i):
            if epoch == 0:
                total += batch.shape[0]
            labels = kernels.kmeans_assign(batch, centroids)
            sums = np.zeros_like(centroids)
            batch_counts = np.bincount(labels, minlength=n_c).astype(np.int64)
            np.add.at(sums, labels, batch)  # unbuffered, sample order
            hit = batch_counts > 0
            new_counts = counts + batch_counts
            centroids[hit] = (centroids[hit] * counts[hit, None]
                              + sums[hit]) / new_counts[hit, None]
            counts = new_counts
    if total == 0:
        raise ValueError("descriptor stream is empty")
    if n_c > total:
        raise ValueError(f"n_c={n_c} exceeds the {total} descriptor pixels available")
    return centroids


def assign_pixels(d: np.ndarray, model: ConceptModel) -> np.ndarray:
    """Nearest-centroid label per pixel (ties to the lowest index)."""
    h, w, c = d.shape
    if c != model.centroids.shape[1]:
        raise ValueError(f"descriptor has {c} channels, model expects "
                         f"{model.centroids.shape[1]}")
    lads = model.prepare(np.ascontiguousarray(d.reshape(-1, c)))
    labels = kernels.kmeans_assign(np.ascontiguousarray(lads), model.centroids)
    return labels.reshape(h, w)


def mask_concept(d: np.ndarray, model: ConceptModel, j: int) -> np.ndarray:
    if not 0 <= j < model.n_c:
        raise ValueError(f"concept index {j} out of range")
    return assign_pixels(d, model) == j


def render_examples(image: np.ndarray, mask: np.ndarray, lam: float) -> np.ndarray:
    """Keep mask pixels, attenuate the rest by ``lam``."""
    if not 0.0 < lam <= 1.0:
        raise ValueError("attenuation must lie in (0, 1]")
    if image.shape[:2] != mask.shape:
        raise ValueError("image and mask dims differ")
    dimmed = (image * lam).astype(image.dtype)
    return np.where(mask[..., None], image, dimmed)


def pixel_sensitivity(d: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Per-pixel dot product over channels, float64, signed."""
    if d.shape != g.shape:
        raise ValueError(f"descriptor {d.shape} and gradient {g.shape} layouts differ")
    return (d.astype(np.float64) * g.astype(np.float64)).sum(axis=2)


class ScoreAccumulator:
    """Streaming contrastive-sensitivity sums over a dataset.

    For concept j and class k the score is the mean sensitivity toward k
    over concept-j pixels in class-k images, minus the same mean over
    images of every other class; a side with no pixels contributes 0.
    """

    def __init__(self, n_c: int, n_classes: int):
        self.n_c = n_c
        self.n_classes = n_classes
        self._sum_in = np.zeros((n_c, n_classes), np.float64)
        self._cnt_in = np.zeros((n_c, n_classes), np.int64)
        self._sum_out = np.zeros((n_c, n_classes), np.float64)
        self._cnt_out = np.zeros((n_c, n_classes), np.int64)
        self.pixel_counts = np.zeros((n_c, n_classes), np.int64)

    def add_image(self, labels_map: np.ndarray, image_class: int,
                  sens_by_class: np.ndarray) -> None:
        """labels_map: (h, w) concept indices; sens_by_class: (n_classes, h, w)."""
        flat = labels_map.ravel()
        counts = np.bincount(flat, minlength=self.n_c)
        self.pixel_counts[:, image_class] += counts
        for k in range(self.n_classes):
            sums = np.bincount(flat, weights=sens_by_class[k].ravel(),
                               minlength=self.n_c)
            if k == image_class:
                self._sum_in[:, k] += sums
                self._cnt_in[:, k] += counts
            else:
                self._sum_out[:, k] += sums
                self._cnt_out[:, k] += counts

    def report(self) -> ImportanceReport:
        with np.errstate(invalid="ignore", divide="ignore"):
            mean_in = np.where(self._cnt_in > 0, self._sum_in / self._cnt_in, 0.0)
            mean_out = np.where(self._cnt_out > 0, self._sum_out / self._cnt_out, 0.0)
        cs = mean_in - mean_out
        k_of = np.argmax(np.abs(cs), axis=1)
        denom = float(np.abs(cs).max()) if cs.size else 0.0
        degenerate = denom == 0.0
        if degenerate:
            ri = np.zeros(self.n_c, np.float64)
        else:
            ri = cs[np.arange(self.n_c), k_of] / denom
        return ImportanceReport(cs=cs, ri=ri, k_of=k_of,
                                pixel_counts=self.pixel_counts.copy(),
                                degenerate=degenerate)


def score_concepts(stream, n_c: int, n_classes: int) -> ImportanceReport:
    """Score a stream of (labels_map, image_class, sens_by_class) triples."""
    acc = ScoreAccumulator(n_c, n_classes)
    empty = True
    for labels_map, image_class, sens_by_class in stream:
        acc.add_image(labels_map, image_class, sens_by_class)
        empty = False
    if empty:
        raise ValueError("empty scoring stream")
    return acc.report()


class MicronetTapSource:
    """Taps computed on the fly from a trained classifier checkpoint."""

    def __init__(self, params: net.Params, arch: net.Architecture, dataset_dir):
        self.params = params
        self.arch = arch
        images, labels, classes, ids = net.load_dataset(dataset_dir)
        self._images = images
        self._labels = labels
        self.classes = classes
        self.image_ids = ids
        self._index = {img_id: i for i, img_id in enumerate(ids)}
        self.n_classes = arch.n_classes
        self.tap_names = arch.tap_names

    def label(self, image_id: str) -> int:
        return int(self._labels[self._index[image_id]])

    def image(self, image_id: str) -> np.ndarray:
        return self._images[self._index[image_id]]

    def acts(self, image_id: str) -> dict[str, np.ndarray]:
        _, taps = net.forward(self.params, self.arch, self.image(image_id))
        return taps

    def acts_and_grads(self, image_id: str):
        image = self.image(image_id)
        _, stages = net._forward_cache(self.params, self.arch, image)
        taps = {f"pool{i + 1}": s["out"] for i, s in enumerate(stages)}
        grads = {k: net.backward_taps_cached(self.params, self.arch, stages, k)
                 for k in range(self.n_classes)}
        return taps, grads


class DirectoryTapSource:
    """Taps read from ECTF dumps `<id>.acts.ectf` / `<id>.class<k>.grads.ectf`."""

    def __init__(self, tap_dir, dataset_dir):
        self.tap_dir = Path(tap_dir)
        manifest = synth.load_manifest(dataset_dir)
        self._root = Path(dataset_dir)
        self.classes = manifest["classes"]
        self.n_classes = len(self.classes)
        self._entries = {synth.record_id(e): e for e in manifest["files"]}
        self.image_ids = [synth.record_id(e) for e in manifest["files"]]
        taps_manifest = self.tap_dir / "taps_manifest.json"
        if taps_manifest.exists():
            with open(taps_manifest, encoding="utf-8") as fh:
                self.tap_names = list(json.load(fh)["layers"])
        else:
            first = ectf.load(self.tap_dir / f"{self.image_ids[0]}.acts.ectf")
            self.tap_names = list(first)

    def label(self, image_id: str) -> int:
        return self.classes.index(self._entries[image_id]["class"])

    def image(self, image_id: str) -> np.ndarray:
        return synth.load_image_png(self._root / self._entries[image_id]["path"])

    def acts(self, image_id: str) -> dict[str, np.ndarray]:
        return ectf.load(self.tap_dir / f"{image_id}.acts.ectf")

    def acts_and_grads(self, image_id: str):
        grads = {}
        for k in range(self.n_classes):
            grads[k] = ectf.load(self.tap_dir / f"{image_id}.class{k}.grads.ectf")
        return self.acts(image_id), grads


@dataclass
class EcladConfig:
    layers: list[str] | None = None  # None: every tap the source offers
    n_c: int = 10
    n_i: int = 2
    lam: float = 0.3
    mode: str = "bilinear"
    seed: int = 0
    epochs: int = 1
    standardize: bool = False
    max_per_class: int = 200
    examples_per_concept: int = 8
    target_size: int | None = None  # None: native image size

    def to_json(self) -> dict:
        doc = {k: getattr(self, k) for k in (
            "layers", "n_c", "n_i", "lam", "mode", "seed", "epochs",
            "standardize", "max_per_class", "examples_per_concept", "target_size")}
        return doc


@dataclass
class EcladResult:
    model: ConceptModel
    report: ImportanceReport
    examples: dict[str, list[str]]  # concept id -> chosen image ids
    classes: list[str]
    config: EcladConfig
    target: tuple[int, int]


def _select_ids(source, max_per_class: int) -> list[str]:
    per_class: dict[int, int] = {}
    chosen = []
    for image_id in source.image_ids:
        k = source.label(image_id)
        if per_class.get(k, 0) < max_per_class:
            per_class[k] = per_class.get(k, 0) + 1
            chosen.append(image_id)
    return chosen


def run_eclad(source, config: EcladConfig, out_dir=None) -> EcladResult:
    """Mine, localize, and score concepts over a tap source.

    When ``out_dir`` is given, writes `eclad_report.json`, attenuated
    examples under `concepts/c<j>/`, and a localization bundle
    (`localization/concepts/c<j>/<image_id>.png` masks plus
    `localization/importances.json`) consumable by the validation stage.
    """
    layers = list(config.layers) if config.layers else list(source.tap_names)
    ids = _select_ids(source, config.max_per_class)
    if not ids:
        raise ValueError("tap source offers no images")
    first_image = source.image(ids[0])
    target = (config.target_size or first_image.shape[0],
              config.target_size or first_image.shape[1])
    th, tw = target

    def descriptor(image_id: str) -> np.ndarray:
        return compute_descriptor(source.acts(image_id), layers, th, tw, config.mode)

    mean = std = None
    if config.standardize:
        total = np.zeros(0)
        sq = np.zeros(0)
        count = 0
        for image_id in ids:
            d = descriptor(image_id).astype(np.float64)
            flat = d.reshape(-1, d.shape[2])
            if total.size == 0:
                total = np.zeros(flat.shape[1])
                sq = np.zeros(flat.shape[1])
            total += flat.sum(axis=0)
            sq += (flat * flat).sum(axis=0)
            count += flat.shape[0]
        mean = total / count
        var = np.maximum(sq / count - mean * mean, 0.0)
        std = np.sqrt(var)
        std[std == 0.0] = 1.0

    fit_order = list(np.random.default_rng(config.seed).permutation(ids))

    def fit_stream():
        for image_id in fit_order:
            d = descriptor(image_id)
            if config.standardize:
                d = ((d.astype(np.float64) - mean) / std)
            yield d

    centroids = fit_concepts(fit_stream, config.n_c, config.n_i, config.seed,
                             config.epochs)
    model = ConceptModel(centroids=centroids, layers=layers, mode=config.mode,
                         standardize=config.standardize, mean=mean, std=std)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        for j in range(config.n_c):
            (out / "localization" / "concepts" / f"c{j}").mkdir(
                parents=True, exist_ok=True)

    acc = ScoreAccumulator(config.n_c, source.n_classes)
    candidates: dict[int, list[tuple[int, str]]] = {j: [] for j in range(config.n_c)}
    for image_id in ids:
        taps, grad_taps = source.acts_and_grads(image_id)
        d = compute_descriptor(taps, layers, th, tw, config.mode)
        labels_map = assign_pixels(d, model)
        sens = np.empty((source.n_classes, th, tw), np.float64)
        for k in range(source.n_classes):
            g = compute_gradient_field(grad_taps[k], layers, th, tw, config.mode)
            sens[k] = pixel_sensitivity(d, g)
        acc.add_image(labels_map, source.label(image_id), sens)
        counts = np.bincount(labels_map.ravel(), minlength=config.n_c)
        for j in range(config.n_c):
            if counts[j] > 0:
                candidates[j].append((int(counts[j]), image_id))
        if out is not None:
            for j in range(config.n_c):
                synth.save_mask_png(
                    out / "localization" / "concepts" / f"c{j}" / f"{image_id}.png",
                    labels_map == j)
    report = acc.report()

    examples: dict[str, list[str]] = {}
    for j in range(config.n_c):
        ranked = sorted(candidates[j], key=lambda item: (-item[0], item[1]))
        examples[f"c{j}"] = [image_id for _, image_id in
                             ranked[:config.examples_per_concept]]

    result = EcladResult(model=model, report=report, examples=examples,
                         classes=list(source.classes), config=config,
                         target=target)
    if out is not None:
        _write_outputs(result, source, out)
    return result


def _write_outputs(result: EcladResult, source, out: Path) -> None:
    config = result.config
    th, tw = result.target
    model = result.model
    for j in range(model.n_c):
        concept_dir = out / "concepts" / f"c{j}"
        concept_dir.mkdir(parents=True, exist_ok=True)
        for image_id in result.examples[f"c{j}"]:
            image = source.image(image_id)
            d = compute_descriptor(source.acts(image_id), model.layers,
                                   th, tw, config.mode)
            mask = assign_pixels(d, model) == j
            synth.save_image_png(concept_dir / f"{image_id}.png",
                                 render_examples(image, mask, config.lam))

    importances = {f"c{j}": float(result.report.ri[j]) for j in range(model.n_c)}
    with open(out / "localization" / "importances.json", "w", encoding="utf-8") as fh:
        json.dump(importances, fh, indent=2)
        fh.write("\n")

    with open(out / "eclad_report.json", "w", encoding="utf-8") as fh:
        json.dump(report_to_json(result), fh, indent=2)
        fh.write("\n")


def report_to_json(result: EcladResult) -> dict:
    model = result.model
    entries = {"centroids": model.centroids.astype(np.float32).reshape(
        model.n_c, 1, -1)}
    if model.standardize:
        entries["mean"] = model.mean.astype(np.float32).reshape(1, 1, -1)
        entries["std"] = model.std.astype(np.float32).reshape(1, 1, -1)
    return {
        "config": result.config.to_json(),
        "classes": result.classes,
        "layers": model.layers,
        "mode": model.mode,
        "standardize": model.standardize,
        "target": list(result.target),
        "centroids_ectf_base64": base64.b64encode(
            ectf.to_bytes(entries)).decode("ascii"),
        "cs": result.report.cs.tolist(),
        "ri": result.report.ri.tolist(),
        "k_of": result.report.k_of.tolist(),
        "pixel_counts": result.report.pixel_counts.tolist(),
        "degenerate": result.report.degenerate,
        "examples": result.examples,
    }


def load_report(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def model_from_report(doc: dict) -> ConceptModel:
    entries = ectf.from_bytes(base64.b64decode(doc["centroids_ectf_base64"]))
    centroids = entries["centroids"].reshape(entries["centroids"].shape[0], -1)
    mean = std = None
    if doc["standardize"]:
        mean = entries["mean"].reshape(-1).astype(np.float64)
        std = entries["std"].reshape(-1).astype(np.float64)
    return ConceptModel(centroids=centroids.astype(np.float64),
                        layers=list(doc["layers"]), mode=doc["mode"],
                        standardize=doc["standardize"], mean=mean, std=std)

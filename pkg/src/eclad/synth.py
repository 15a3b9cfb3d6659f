"""Synthetic character-classification datasets with pixel-level masks.

Each dataset is described by a ``DatasetSpec``: a list of primitives
(glyph + fill + per-class appearance) over a full-frame background.
Rendering places glyphs at uniformly random non-overlapping positions
with mild random rotation and paints each with its own texture field, so
every image comes with an exact mask per primitive. Generation is
deterministic: image (class_idx, idx) derives its generator from the
dataset seed, making output independent of generation order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import glyphs, textures

ROTATION_DEG = 15.0
PLACEMENT_RETRIES = 100
NOMINAL_SIZE = 224

GREEN = (0.10, 0.65, 0.15)
BLUE = (0.15, 0.25, 0.85)
GRAY = (0.55, 0.55, 0.55)


class GenerationError(RuntimeError):
    """Raised when a spec cannot be rendered (overcrowded placement)."""


@dataclass(frozen=True)
class PrimitiveSpec:
    id: str
    glyphs: tuple[str | None, ...]  # candidates; None means "absent this image"
    fill: object  # texture name, RGB tuple, or map class -> fill
    size_px: int  # nominal glyph height at 224 px, scaled with image size
    placement: str  # "random" | "background"
    important: bool
    appears: dict[str, float] = field(default_factory=dict)  # class -> probability
    balanced: bool = False  # equalize variant counts per class at generation


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    classes: tuple[str, ...]
    primitives: tuple[PrimitiveSpec, ...]
    image_size: int = 224
    per_class_count: int = 200


@dataclass
class ImageRecord:
    image: np.ndarray  # (s, s, 3) float32 in [0, 1]
    label: int
    masks: dict[str, np.ndarray]  # primitive id -> bool (s, s)
    layers: dict[str, np.ndarray] | None = None  # fill fields, when requested


def check_spec(spec: DatasetSpec) -> None:
    if len(spec.classes) < 2:
        raise ValueError("a dataset needs at least 2 classes")
    if not spec.primitives:
        raise ValueError("a dataset needs at least 1 primitive")
    backgrounds = [p for p in spec.primitives if p.placement == "background"]
    if len(backgrounds) != 1:
        raise ValueError("exactly one primitive must have background placement")
    for cls in spec.classes:
        anchored = any(
            p.important and p.appears.get(cls, 0.0) >= 1.0 and None not in p.glyphs
            for p in spec.primitives
            if p.placement == "random"
        )
        if not anchored:
            raise ValueError(f"class {cls!r} has no always-present important primitive")


def builtin_specs() -> list[DatasetSpec]:
    """The six built-in benchmark datasets."""
    both = {"A": 1.0, "B": 1.0}
    ab = DatasetSpec(
        name="AB",
        classes=("A", "B"),
        primitives=(
            PrimitiveSpec("p1", ("A",), BLUE, 110, "random", True, {"A": 1.0}),
            PrimitiveSpec("p2", ("B",), GREEN, 110, "random", True, {"B": 1.0}),
            PrimitiveSpec("p3", ("plus",), "cotton", 60, "random", False, both),
            PrimitiveSpec("p4", (), "orange_peel", 0, "background", False),
        ),
    )
    abplus = DatasetSpec(
        name="ABplus",
        classes=("A", "B"),
        primitives=(
            PrimitiveSpec("p1", ("A",), "aluminum_foil", 90, "random", True, {"A": 1.0}),
            PrimitiveSpec("p2", ("B",), GREEN, 90, "random", True, {"B": 1.0}),
            PrimitiveSpec("p3", ("star",), (0.85, 0.15, 0.70), 50, "random", False, both),
            PrimitiveSpec("p4", ("slash",), (0.95, 0.85, 0.10), 50, "random", False, both),
            PrimitiveSpec("p5", ("hash",), (0.05, 0.80, 0.80), 50, "random", False, both),
            PrimitiveSpec("p6", ("X",), (0.60, 0.30, 0.90), 50, "random", False, both),
            PrimitiveSpec("p7", ("star",), (0.95, 0.50, 0.10), 50, "random", False, both),
            PrimitiveSpec("p8", (), "sponge", 0, "background", False),
        ),
    )
    bigsmall = DatasetSpec(
        name="BigSmall",
        classes=("big", "small"),
        primitives=(
            PrimitiveSpec("p1", ("B",), BLUE, 100, "random", True, {"big": 1.0}),
            PrimitiveSpec("p2", ("B",), BLUE, 40, "random", True, {"small": 1.0}),
            PrimitiveSpec("p3", ("plus",), "cotton", 60, "random", False,
                          {"big": 1.0, "small": 1.0}),
            PrimitiveSpec("p4", (), "cork", 0, "background", False),
        ),
    )
    co = DatasetSpec(
        name="CO",
        classes=("C", "O"),
        primitives=(
            PrimitiveSpec("p1", ("C",), "aluminum_foil", 90, "random", True, {"C": 1.0}),
            PrimitiveSpec("p2", ("O",), "aluminum_foil", 90, "random", True, {"O": 1.0}),
            PrimitiveSpec("p3", ("plus",), "cotton", 60, "random", False,
                          {"C": 1.0, "O": 1.0}),
            PrimitiveSpec("p4", (), "cork", 0, "background", False),
        ),
    )
    colorgb = DatasetSpec(
        name="colorGB",
        classes=("B", "G"),
        primitives=(
            PrimitiveSpec("p1", ("A", "B"), {"B": BLUE, "G": GREEN}, 90, "random",
                          True, {"B": 1.0, "G": 1.0}),
            PrimitiveSpec("p2", ("C", "D", None), GREEN, 70, "random", False,
                          {"B": 1.0, "G": 1.0}, balanced=True),
            PrimitiveSpec("p3", ("plus",), "cotton", 60, "random", False,
                          {"B": 1.0, "G": 1.0}),
            PrimitiveSpec("p4", (), "orange_peel", 0, "background", False),
        ),
    )
    isa = DatasetSpec(
        name="isA",
        classes=("isA", "notA"),
        primitives=(
            PrimitiveSpec("p1", ("A",), BLUE, 90, "random", True, {"isA": 1.0}),
            PrimitiveSpec("p2", ("B", "C", "D", "E", "F", "G", "H"), BLUE, 90,
                          "random", True, {"notA": 1.0}),
            PrimitiveSpec("p3", (), GRAY, 0, "background", False),
        ),
    )
    return [ab, abplus, bigsmall, co, colorgb, isa]


def spec_by_name(name: str) -> DatasetSpec:
    for spec in builtin_specs():
        if spec.name.lower() == name.lower():
            return spec
    known = ", ".join(s.name for s in builtin_specs())
    raise ValueError(f"unknown dataset {name!r}; choose from: {known}")


def _fill_for(prim: PrimitiveSpec, cls: str):
    if isinstance(prim.fill, dict):
        return prim.fill[cls]
    return prim.fill


def render_image(spec: DatasetSpec, class_idx: int, rng: np.random.Generator,
                 choices: dict[str, str | None] | None = None,
                 return_layers: bool = False) -> ImageRecord:
    """Render one image.

    ``choices`` optionally pins the variant (or absence, via None) of
    specific primitives; generation uses it to balance variant counts
    across a class exactly instead of sampling them independently.
    """
    check_spec(spec)
    if not 0 <= class_idx < len(spec.classes):
        raise ValueError("class index out of range")
    cls = spec.classes[class_idx]
    size = spec.image_size
    scale = size / NOMINAL_SIZE

    background = next(p for p in spec.primitives if p.placement == "background")
    occupied = np.zeros((size, size), bool)
    placed: list[tuple[PrimitiveSpec, np.ndarray]] = []
    masks: dict[str, np.ndarray] = {}

    for prim in spec.primitives:
        if prim.placement == "background":
            continue
        if choices is not None and prim.id in choices:
            variant = choices[prim.id]
        else:
            prob = prim.appears.get(cls, 0.0)
            if prob <= 0.0 or (prob < 1.0 and rng.random() >= prob):
                variant = None
            else:
                variant = prim.glyphs[rng.integers(len(prim.glyphs))]
        if variant is None:
            masks[prim.id] = np.zeros((size, size), bool)
            continue

        rotation = rng.uniform(-ROTATION_DEG, ROTATION_DEG)
        glyph = glyphs.rasterize(variant, max(6, round(prim.size_px * scale)), rotation)
        gh, gw = glyph.shape
        if gh > size or gw > size:
            raise GenerationError(
                f"primitive {prim.id} ({variant}) does not fit a {size} px frame")
        for _ in range(PLACEMENT_RETRIES):
            y0 = int(rng.integers(0, size - gh + 1))
            x0 = int(rng.integers(0, size - gw + 1))
            if not (occupied[y0:y0 + gh, x0:x0 + gw] & glyph).any():
                break
        else:
            raise GenerationError(
                f"could not place {prim.id} after {PLACEMENT_RETRIES} retries; "
                f"spec {spec.name} is overcrowded at {size} px")
        mask = np.zeros((size, size), bool)
        mask[y0:y0 + gh, x0:x0 + gw] = glyph
        occupied |= mask
        masks[prim.id] = mask
        placed.append((prim, mask))

    layers: dict[str, np.ndarray] = {}
    image = textures.render_fill(_fill_for(background, cls), size, size, rng)
    layers[background.id] = image
    image = image.copy()
    for prim, mask in placed:
        layer = textures.render_fill(_fill_for(prim, cls), size, size, rng)
        layers[prim.id] = layer
        image[mask] = layer[mask]
        # later primitives occlude earlier ones
        for other, other_mask in placed:
            if other is prim:
                break
            other_mask &= ~mask
    masks[background.id] = ~occupied

    return ImageRecord(
        image=image,
        label=class_idx,
        masks=masks,
        layers=layers if return_layers else None,
    )


def _balanced_variants(prim: PrimitiveSpec, count: int,
                       rng: np.random.Generator) -> list[str | None]:
    options = list(prim.glyphs)
    base, extra = divmod(count, len(options))
    pool: list[str | None] = []
    for i, opt in enumerate(options):
        pool.extend([opt] * (base + (1 if i < extra else 0)))
    rng.shuffle(pool)
    return pool


def save_image_png(path: Path, image: np.ndarray) -> None:
    arr = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path)


def save_mask_png(path: Path, mask: np.ndarray) -> None:
    Image.fromarray(mask.astype(np.uint8) * 255, "L").save(path)


def load_image_png(path) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), np.uint8)
    return (arr.astype(np.float32) / 255.0).copy()


def load_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) >= 128


def generate_dataset(spec: DatasetSpec, seed: int, out_dir) -> dict:
    """Write the dataset to disk; returns the manifest dict."""
    check_spec(spec)
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for prim in spec.primitives:
        (out / "masks" / prim.id).mkdir(parents=True, exist_ok=True)

    balanced: dict[str, dict[str, list[str | None]]] = {}
    for prim_idx, prim in enumerate(spec.primitives):
        if prim.balanced:
            balanced[prim.id] = {}
            for class_idx, cls in enumerate(spec.classes):
                shuffle_rng = np.random.default_rng(
                    np.random.SeedSequence(seed, spawn_key=(2 ** 31, class_idx, prim_idx)))
                balanced[prim.id][cls] = _balanced_variants(
                    prim, spec.per_class_count, shuffle_rng)

    files = []
    for class_idx, cls in enumerate(spec.classes):
        (out / "images" / cls).mkdir(exist_ok=True)
        for idx in range(spec.per_class_count):
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(class_idx, idx)))
            choices = {pid: per_class[cls][idx] for pid, per_class in balanced.items()}
            record = render_image(spec, class_idx, rng, choices=choices or None)
            image_rel = f"images/{cls}/{idx:04d}.png"
            save_image_png(out / image_rel, record.image)
            mask_paths = {}
            for prim in spec.primitives:
                mask_rel = f"masks/{prim.id}/{cls}_{idx:04d}.png"
                save_mask_png(out / mask_rel, record.masks[prim.id])
                mask_paths[prim.id] = mask_rel
            files.append({"path": image_rel, "class": cls, "mask_paths": mask_paths})

    manifest = {
        "name": spec.name,
        "classes": list(spec.classes),
        "primitives": [{"id": p.id, "important": p.important} for p in spec.primitives],
        "image_size": spec.image_size,
        "seed": seed,
        "files": files,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_manifest(dataset_dir) -> dict:
    with open(Path(dataset_dir) / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


def record_id(entry: dict) -> str:
    """Stable image id `<class>_<idx>` derived from a manifest file entry."""
    return f"{entry['class']}_{Path(entry['path']).stem}"

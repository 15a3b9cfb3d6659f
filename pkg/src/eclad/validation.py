"""Mask-based validation of concept-extraction output.

Given per-image ground-truth primitive masks and per-image concept masks,
the association distance between a primitive and a concept is the
dataset mean of the two-way sum of each mask's pixels weighted by the
distance to the other mask (via the exact distance transform). Each
concept is assigned to its nearest primitive; it is aligned when that
primitive is flagged important and the per-pixel normalized distance is
under a threshold. From the alignment two scores follow: representation
correctness (negative mean raw distance over aligned concepts, 0 ideal)
and importance correctness (normalized gap between mean absolute
importance of aligned and unaligned concepts, 1 ideal). Undefined scores
are reported as explicit null markers, never as 0.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import synth, tensors

DEFAULT_T_DST = 10.0  # px at the 224 px reference size, scaled with image size
OVERLAYS_PER_CONCEPT = 4


def default_threshold(image_size: int) -> float:
    return DEFAULT_T_DST * image_size / 224.0


def one_way_dst(m_p: np.ndarray, m_c: np.ndarray) -> float:
    """Sum over true pixels of m_p of the distance to the nearest true
    pixel of m_c (cap distance everywhere when m_c is empty)."""
    if m_p.shape != m_c.shape:
        raise ValueError(f"mask dims differ: {m_p.shape} vs {m_c.shape}")
    if not m_p.any():
        return 0.0
    return float(tensors.edt(m_c)[m_p].sum())


@dataclass
class AssociationMatrix:
    dst: np.ndarray  # (n_p, n_c) mean two-way distance, pixel*pixel units
    dst_norm: np.ndarray  # (n_p, n_c) per-pixel mean distance, px
    coverage: np.ndarray  # (n_p, n_c) fraction of images with a non-empty concept mask
    n_images: int


class AssociationAccumulator:
    """Streaming aggregation of per-image two-way distances."""

    def __init__(self, n_p: int, n_c: int, height: int, width: int):
        self.n_p = n_p
        self.n_c = n_c
        self.cap = tensors.edt_cap(height, width)
        self._dst_sum = np.zeros((n_p, n_c), np.float64)
        self._px_sum = np.zeros((n_p, n_c), np.float64)
        self._nonempty = np.zeros(n_c, np.int64)
        self.n_images = 0

    def image_terms(self, prim_masks, concept_masks):
        """Per-image contribution; pure, so callers may parallelize it."""
        edt_p = [tensors.edt(m) for m in prim_masks]
        edt_c = [tensors.edt(m) for m in concept_masks]
        dst = np.zeros((self.n_p, self.n_c), np.float64)
        px = np.zeros((self.n_p, self.n_c), np.float64)
        for p, m_p in enumerate(prim_masks):
            area_p = int(m_p.sum())
            for c, m_c in enumerate(concept_masks):
                two_way = 0.0
                if area_p:
                    two_way += float(edt_c[c][m_p].sum())
                if concept_masks[c].any():
                    two_way += float(edt_p[p][m_c].sum())
                dst[p, c] = two_way
                px[p, c] = area_p + int(m_c.sum())
        nonempty = np.array([m.any() for m in concept_masks], np.int64)
        return dst, px, nonempty

    def add_terms(self, terms) -> None:
        dst, px, nonempty = terms
        self._dst_sum += dst
        self._px_sum += px
        self._nonempty += nonempty
        self.n_images += 1

    def add_image(self, prim_masks, concept_masks) -> None:
        self.add_terms(self.image_terms(prim_masks, concept_masks))

    def result(self) -> AssociationMatrix:
        if self.n_images == 0:
            raise ValueError("association over an empty dataset")
        dst_norm = np.where(self._px_sum > 0, self._dst_sum / np.maximum(self._px_sum, 1e-300), self.cap)
        coverage = np.broadcast_to(self._nonempty / self.n_images,
                                   (self.n_p, self.n_c)).copy()
        return AssociationMatrix(dst=self._dst_sum / self.n_images,
                                 dst_norm=dst_norm, coverage=coverage,
                                 n_images=self.n_images)


def association_distance(image_stream, n_p: int, n_c: int,
                         height: int, width: int) -> AssociationMatrix:
    """image_stream yields (prim_masks, concept_masks) per image."""
    acc = AssociationAccumulator(n_p, n_c, height, width)
    for prim_masks, concept_masks in image_stream:
        acc.add_image(prim_masks, concept_masks)
    return acc.result()


@dataclass
class ConceptAlignment:
    concept: int
    nearest_primitive: int
    dst: float  # raw association distance to the nearest primitive
    dst_norm: float  # per-pixel normalized distance, px
    aligned: bool


def associate(matrix: AssociationMatrix, important: list[bool],
              t_dst: float) -> list[ConceptAlignment]:
    """Nearest primitive per concept (lowest index on ties); aligned iff
    that primitive is important and the normalized distance is within
    the threshold."""
    if matrix.dst.size == 0:
        raise ValueError("empty association matrix")
    out = []
    for j in range(matrix.dst.shape[1]):
        p = int(np.argmin(matrix.dst[:, j]))
        norm = float(matrix.dst_norm[p, j])
        out.append(ConceptAlignment(
            concept=j,
            nearest_primitive=p,
            dst=float(matrix.dst[p, j]),
            dst_norm=norm,
            aligned=bool(important[p]) and norm <= t_dst,
        ))
    return out


def representation_correctness(alignments: list[ConceptAlignment]) -> float | None:
    """Negative mean raw distance over aligned concepts; None if none."""
    aligned = [a.dst for a in alignments if a.aligned]
    if not aligned:
        return None
    return -float(np.mean(aligned))


def importance_correctness(alignments: list[ConceptAlignment],
                           importances: np.ndarray) -> float | None:
    """Gap between mean |importance| of aligned and unaligned concepts,
    normalized by the maximum |importance|; None when either side is
    empty or every importance is zero."""
    importances = np.asarray(importances, np.float64)
    mags = np.abs(importances)
    aligned = [mags[a.concept] for a in alignments if a.aligned]
    unaligned = [mags[a.concept] for a in alignments if not a.aligned]
    if not aligned or not unaligned:
        return None
    top = mags.max()
    if top == 0.0:
        return None
    return float((np.mean(aligned) - np.mean(unaligned)) / top)


def normalize_tcav(q: float) -> float:
    """Affine rescale of a [0,1] fraction score to a signed [-1,1] one."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"score {q} outside [0, 1]")
    return 2.0 * q - 1.0


def _entropy(counts: np.ndarray, n: int) -> float:
    probs = counts[counts > 0] / n
    return float(-(probs * np.log(probs)).sum())


def baseline_metrics(m_a: np.ndarray, m_b: np.ndarray) -> dict[str, float]:
    """Jaccard, NMI (log e, arithmetic normalization), and adjusted Rand
    of the two foreground/background pixel partitions."""
    if m_a.shape != m_b.shape:
        raise ValueError(f"mask dims differ: {m_a.shape} vs {m_b.shape}")
    n = m_a.size
    n11 = int((m_a & m_b).sum())
    a = int(m_a.sum())
    b = int(m_b.sum())
    union = a + b - n11
    jaccard = 1.0 if union == 0 else n11 / union

    table = np.array([[n11, a - n11], [b - n11, n - a - b + n11]], np.int64)
    rows = table.sum(axis=1)
    cols = table.sum(axis=0)
    mi = 0.0
    for i in range(2):
        for j in range(2):
            nij = table[i, j]
            if nij > 0:
                mi += (nij / n) * math.log(n * nij / (rows[i] * cols[j]))
    mean_h = 0.5 * (_entropy(rows, n) + _entropy(cols, n))
    nmi = mi / max(mean_h, np.finfo(np.float64).eps)

    sum_comb = sum(math.comb(int(v), 2) for v in table.ravel())
    comb_rows = sum(math.comb(int(v), 2) for v in rows)
    comb_cols = sum(math.comb(int(v), 2) for v in cols)
    total_pairs = math.comb(n, 2)
    expected = comb_rows * comb_cols / total_pairs
    top = 0.5 * (comb_rows + comb_cols)
    ari = 1.0 if top == expected else (sum_comb - expected) / (top - expected)

    return {"jaccard": float(jaccard), "nmi": float(nmi), "ari": float(ari)}


def _two_way(m_a: np.ndarray, m_b: np.ndarray) -> float:
    return one_way_dst(m_a, m_b) + one_way_dst(m_b, m_a)


def offset_study(mask: np.ndarray, offsets) -> list[dict[str, float]]:
    """Compare a mask against horizontally shifted copies of itself."""
    offsets = list(offsets)
    if not offsets:
        raise ValueError("empty offset list")
    if any(o < 0 for o in offsets):
        raise ValueError("offsets must be non-negative")
    rows = []
    w = mask.shape[1]
    for o in offsets:
        shifted = np.zeros_like(mask)
        if o < w:
            shifted[:, o:] = mask[:, :w - o]
        if shifted.sum() != mask.sum():
            raise ValueError(f"offset {o} px pushes the glyph out of frame")
        rows.append({"offset": float(o), "dst": _two_way(mask, shifted),
                     **baseline_metrics(mask, shifted)})
    return rows


def surround_study(mask: np.ndarray, gaps, ring_width: float = 4.0) -> list[dict[str, float]]:
    """Compare a mask against rings at growing separation from it."""
    gaps = list(gaps)
    if not gaps:
        raise ValueError("empty gap list")
    dist = tensors.edt(mask)
    rows = []
    for gap in gaps:
        ring = (dist > gap) & (dist <= gap + ring_width)
        if not ring.any():
            raise ValueError(f"ring at gap {gap} px is empty")
        if ring[0, :].any() or ring[-1, :].any() or ring[:, 0].any() or ring[:, -1].any():
            raise ValueError(f"ring at gap {gap} px reaches the frame border")
        rows.append({"gap": float(gap), "dst": _two_way(mask, ring),
                     **baseline_metrics(mask, ring)})
    return rows


def _overlay(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = image * 0.45
    out[mask] = np.clip(image[mask] * 0.55 + np.array([0.45, 0.0, 0.0], np.float32), 0, 1)
    return out.astype(np.float32)


def _concept_sort_key(concept_id: str):
    if concept_id.startswith("c") and concept_id[1:].isdigit():
        return (0, int(concept_id[1:]))
    return (1, concept_id)


def validate_ce(dataset_dir, masks_dir, out_dir=None, importances=None,
                important_ids=None, t_dst=None, threads: int = 1) -> dict:
    """Association, alignment, and correctness scores for a concept-mask
    source over an annotated dataset.

    ``masks_dir`` holds `concepts/<concept_id>/<image_id>.png` plus
    `importances.json` (used when ``importances`` is not given). Writes
    `validation_report.json`, `concepts.csv`, and per-concept overlay
    images when ``out_dir`` is given; returns the report dict.
    """
    dataset_dir = Path(dataset_dir)
    masks_dir = Path(masks_dir)
    manifest = synth.load_manifest(dataset_dir)
    size = manifest["image_size"]
    if t_dst is None:
        t_dst = default_threshold(size)

    concepts_root = masks_dir / "concepts"
    if not concepts_root.is_dir():
        raise FileNotFoundError(f"no concepts/ directory under {masks_dir}")
    concept_ids = sorted((d.name for d in concepts_root.iterdir() if d.is_dir()),
                         key=_concept_sort_key)
    if not concept_ids:
        raise ValueError(f"{concepts_root} contains no concept directories")

    if importances is None:
        with open(masks_dir / "importances.json", encoding="utf-8") as fh:
            importances = json.load(fh)
    missing_scores = [c for c in concept_ids if c not in importances]
    if missing_scores:
        raise ValueError(f"importances missing for concepts: {missing_scores}")
    scores = np.array([float(importances[c]) for c in concept_ids])

    primitives = [p["id"] for p in manifest["primitives"]]
    if important_ids is None:
        important = [bool(p["important"]) for p in manifest["primitives"]]
    else:
        unknown = set(important_ids) - set(primitives)
        if unknown:
            raise ValueError(f"unknown primitive ids: {sorted(unknown)}")
        important = [p in set(important_ids) for p in primitives]

    entries = manifest["files"]
    missing_masks = []
    for entry in entries:
        image_id = synth.record_id(entry)
        for cid in concept_ids:
            if not (concepts_root / cid / f"{image_id}.png").exists():
                missing_masks.append(f"concepts/{cid}/{image_id}.png")
    if missing_masks:
        shown = ", ".join(missing_masks[:8])
        more = "" if len(missing_masks) <= 8 else f" (+{len(missing_masks) - 8} more)"
        raise FileNotFoundError(f"missing concept masks: {shown}{more}")

    def load_pair(entry):
        image_id = synth.record_id(entry)
        prim_masks = [synth.load_mask_png(dataset_dir / entry["mask_paths"][pid])
                      for pid in primitives]
        concept_masks = [synth.load_mask_png(concepts_root / cid / f"{image_id}.png")
                         for cid in concept_ids]
        return prim_masks, concept_masks

    acc = AssociationAccumulator(len(primitives), len(concept_ids), size, size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for terms in pool.map(
                    lambda e: acc.image_terms(*load_pair(e)), entries):
                acc.add_terms(terms)
    else:
        for entry in entries:
            acc.add_image(*load_pair(entry))
    matrix = acc.result()

    alignments = associate(matrix, important, t_dst)
    rc = representation_correctness(alignments)
    ic = importance_correctness(alignments, scores)

    table = [{
        "concept": concept_ids[a.concept],
        "importance": float(scores[a.concept]),
        "nearest_primitive": primitives[a.nearest_primitive],
        "dst": a.dst,
        "dst_norm": a.dst_norm,
        "coverage": float(matrix.coverage[a.nearest_primitive, a.concept]),
        "aligned": a.aligned,
    } for a in alignments]

    report = {
        "config": {
            "dataset": str(dataset_dir),
            "masks": str(masks_dir),
            "t_dst": t_dst,
            "threads": threads,
            "image_size": size,
            "n_images": matrix.n_images,
        },
        "primitives": [{"id": pid, "important": imp}
                       for pid, imp in zip(primitives, important)],
        "concepts": concept_ids,
        "dst": matrix.dst.tolist(),
        "dst_norm": matrix.dst_norm.tolist(),
        "coverage": matrix.coverage[0].tolist(),
        "alignment": table,
        "rc": rc,
        "ic": ic,
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "validation_report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        with open(out / "concepts.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(table[0]))
            writer.writeheader()
            writer.writerows(table)
        _write_overlays(out / "overlays", dataset_dir, entries, concepts_root,
                        concept_ids)
    return report


def _write_overlays(overlay_root: Path, dataset_dir: Path, entries,
                    concepts_root: Path, concept_ids) -> None:
    for cid in concept_ids:
        written = 0
        target = overlay_root / cid
        target.mkdir(parents=True, exist_ok=True)
        for entry in entries:
            if written >= OVERLAYS_PER_CONCEPT:
                break
            image_id = synth.record_id(entry)
            mask = synth.load_mask_png(concepts_root / cid / f"{image_id}.png")
            if not mask.any():
                continue
            image = synth.load_image_png(Path(dataset_dir) / entry["path"])
            synth.save_image_png(target / f"{image_id}.png", _overlay(image, mask))
            written += 1

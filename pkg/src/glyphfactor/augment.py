"""The 27 deterministic glyph variants: 3 morphologies x 9 translations."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    CorpusError,
    CorpusManifest,
    build_manifest,
    read_gray,
    safe_filename,
    write_manifest,
    write_pgm,
)

SHIFTS = (-5, 0, 5)
MORPHS = ("none", "erode", "dilate")


@dataclass(frozen=True)
class AugmentationSpec:
    dx: int
    dy: int
    morph: str

    @property
    def suffix(self) -> str:
        return f"m{self.morph}_dx{self.dx}_dy{self.dy}"


# morph-major, then dy, then dx, each ascending
SPECS: tuple[AugmentationSpec, ...] = tuple(
    AugmentationSpec(dx, dy, m) for m in MORPHS for dy in SHIFTS for dx in SHIFTS
)


def translate(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """out[y, x] = img[y - dy, x - dx]; vacated cells are background, no wraparound."""
    img = np.asarray(img)
    h, w = img.shape
    if abs(dx) >= w or abs(dy) >= h:
        return np.zeros_like(img)
    out = np.zeros_like(img)
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = img[ys, xs]
    return out


def erode(img: np.ndarray) -> np.ndarray:
    """2x2 element anchored top-left: p survives iff p, right, below and below-right are all ink."""
    ink = np.asarray(img) > 0.5
    out = np.zeros(ink.shape, dtype=bool)
    out[:-1, :-1] = ink[:-1, :-1] & ink[:-1, 1:] & ink[1:, :-1] & ink[1:, 1:]
    return out.astype(np.float64)


def dilate(img: np.ndarray) -> np.ndarray:
    """Adjoint of ``erode``: p is set iff p, left, above or above-left is ink."""
    ink = np.asarray(img) > 0.5
    out = ink.copy()
    out[:, 1:] |= ink[:, :-1]
    out[1:, :] |= ink[:-1, :]
    out[1:, 1:] |= ink[:-1, :-1]
    return out.astype(np.float64)


_MORPH_FN = {"none": lambda x: np.asarray(x, dtype=np.float64), "erode": erode, "dilate": dilate}


def apply_spec(img: np.ndarray, spec: AugmentationSpec) -> np.ndarray:
    return translate(_MORPH_FN[spec.morph](img), spec.dx, spec.dy)


def augment_all(img: np.ndarray) -> list[np.ndarray]:
    """All 27 variants in ``SPECS`` order; morphology is applied before translation."""
    morphed = {m: _MORPH_FN[m](img) for m in MORPHS}
    return [translate(morphed[s.morph], s.dx, s.dy) for s in SPECS]


def augmented_rows(manifest: CorpusManifest, img_dir) -> list[tuple]:
    """Manifest rows of the augmented corpus, one per (record, spec), in write order."""
    img_dir = Path(img_dir)
    rows = []
    for r in manifest.records:
        for spec in SPECS:
            gid = f"{r.glyph_id}__{spec.suffix}"
            rows.append((gid, r.sign, r.scribe, r.findplace, img_dir / f"{safe_filename(gid)}.pgm"))
    return rows


def augment_corpus(manifest: CorpusManifest, out_dir) -> CorpusManifest:
    """Write every variant as ``<glyph_id>__<suffix>.pgm`` plus ``manifest.csv``."""
    if not manifest.records:
        raise CorpusError("empty corpus")
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rows = augmented_rows(manifest, img_dir)
    for i, r in enumerate(manifest.records):
        glyph = read_gray(r.image_path) > 127
        if glyph.shape != (64, 64):
            raise CorpusError(f"record {r.glyph_id!r}: image is {glyph.shape}, run ingest first")
        for row, variant in zip(rows[i * len(SPECS):(i + 1) * len(SPECS)], augment_all(glyph)):
            write_pgm(row[4], variant)
    out = build_manifest(rows, {"augmented_from": manifest.source.get("manifest", "")})
    write_manifest(out, out_dir / "manifest.csv")
    return out

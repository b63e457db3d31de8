"""Glyph corpus loading, validation and preprocessing.

A glyph image is a ``(64, 64)`` float array in ``[0, 1]`` with ink = 1.0.
Corpora are described by a CSV manifest with header
``glyph_id,sign,scribe,findplace,image_path`` where ``image_path`` is
relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import hashlib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

SIZE = 64
HEADER = ["glyph_id", "sign", "scribe", "findplace", "image_path"]


class CorpusError(ValueError):
    pass


@dataclass
class CorpusRecord:
    glyph_id: str
    sign: str
    scribe: str
    findplace: str | None
    image_path: Path
    sign_id: int = -1
    scribe_id: int = -1


@dataclass
class CorpusManifest:
    records: list[CorpusRecord]
    sign_labels: list[str]
    scribe_labels: list[str]
    source: dict = field(default_factory=dict)

    @property
    def J(self) -> int:
        return len(self.sign_labels)

    @property
    def K(self) -> int:
        return len(self.scribe_labels)

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class Corpus:
    """Model-ready images plus dense labels, aligned by row."""

    images: np.ndarray  # (N, 64, 64) float64 in {0, 1}
    sign_ids: np.ndarray
    scribe_ids: np.ndarray
    sign_labels: list[str]
    scribe_labels: list[str]
    glyph_ids: list[str]
    findplaces: list[str | None]

    @property
    def J(self) -> int:
        return len(self.sign_labels)

    @property
    def K(self) -> int:
        return len(self.scribe_labels)

    def __len__(self) -> int:
        return len(self.images)


def build_manifest(rows: list[tuple[str, str, str, str | None, Path]], source: dict | None = None) -> CorpusManifest:
    """Assign dense ids in first-appearance order. Rows are (glyph_id, sign, scribe, findplace, path)."""
    signs: dict[str, int] = {}
    scribes: dict[str, int] = {}
    records = []
    seen: set[str] = set()
    for glyph_id, sign, scribe, findplace, path in rows:
        if glyph_id in seen:
            raise CorpusError(f"duplicate glyph_id {glyph_id!r}")
        seen.add(glyph_id)
        sid = signs.setdefault(sign, len(signs))
        kid = scribes.setdefault(scribe, len(scribes))
        records.append(CorpusRecord(glyph_id, sign, scribe, findplace or None, Path(path), sid, kid))
    return CorpusManifest(records, list(signs), list(scribes), dict(source or {}))


def load_manifest(path, check_images: bool = True) -> CorpusManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.csv"
    if not path.is_file():
        raise CorpusError(f"manifest not found: {path}")
    root = path.parent
    rows = []
    seen: dict[str, int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != HEADER:
            raise CorpusError(f"{path}:1: header must be {','.join(HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(HEADER):
                raise CorpusError(f"{path}:{lineno}: expected {len(HEADER)} columns, got {len(row)}")
            glyph_id, sign, scribe, findplace, image_path = (c.strip() for c in row)
            if not glyph_id or not sign or not scribe or not image_path:
                raise CorpusError(f"{path}:{lineno}: empty required field")
            if glyph_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate glyph_id {glyph_id!r} (first on line {seen[glyph_id]})")
            seen[glyph_id] = lineno
            img_path = root / image_path
            if check_images:
                try:
                    read_gray(img_path)
                except (OSError, CorpusError) as exc:
                    raise CorpusError(f"{path}:{lineno}: unreadable image {image_path!r}: {exc}") from exc
            rows.append((glyph_id, sign, scribe, findplace, img_path))
    return build_manifest(rows, {"manifest": str(path)})


def write_manifest(manifest: CorpusManifest, path) -> None:
    path = Path(path)
    root = path.parent.resolve()
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for r in manifest.records:
            p = Path(r.image_path).resolve()
            try:
                rel = p.relative_to(root).as_posix()
            except ValueError:
                rel = p.as_posix()
            w.writerow([r.glyph_id, r.sign, r.scribe, r.findplace or "", rel])


def read_gray(path) -> np.ndarray:
    """Read an 8-bit grayscale PGM or PNG as a uint8 array."""
    with Image.open(path) as im:
        if im.mode == "1":
            im = im.convert("L")
        if im.mode != "L":
            raise CorpusError(f"{path}: expected 8-bit grayscale, got mode {im.mode}")
        return np.array(im, dtype=np.uint8)


def write_pgm(path, glyph: np.ndarray) -> None:
    """Persist a binary glyph as P5 PGM with values {0, 255}."""
    arr = np.where(np.asarray(glyph) > 0.5, 255, 0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PPM")


def otsu_threshold(gray: np.ndarray) -> int:
    """Threshold t maximizing between-class variance, with class 1 = pixels > t.

    Evaluated in exact integer arithmetic so that equal variances tie
    exactly; ties go to the smallest t. Constant images return 0.
    """
    gray = np.asarray(gray)
    if gray.size == 0:
        raise CorpusError("otsu_threshold: empty image")
    hist = np.bincount(gray.astype(np.int64).ravel(), minlength=256)[:256]
    n = int(hist.sum())
    total = int(np.dot(hist, np.arange(256)))
    best_t, best_num, best_den = 0, 0, 1
    n0 = s0 = 0
    for t in range(256):
        n0 += int(hist[t])
        s0 += t * int(hist[t])
        n1 = n - n0
        if n0 == 0 or n1 == 0:
            continue
        # w0*w1*(mu0-mu1)^2 * n^2 == (n*s0 - n0*total)^2 / (n0*n1)
        num = (n * s0 - n0 * total) ** 2
        den = n0 * n1
        if num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    return best_t


def binarize(gray: np.ndarray, ink_is_dark: bool = True) -> np.ndarray:
    gray = np.asarray(gray)
    if gray.min() == gray.max():
        return np.zeros(gray.shape)
    t = otsu_threshold(gray)
    bright = gray > t
    ink = ~bright if ink_is_dark else bright
    return ink.astype(np.float64)


def fit_to_canvas(gray: np.ndarray, ink_is_dark: bool = True, size: int = SIZE) -> np.ndarray:
    """Bilinear resize so the long side is ``size``, centered on a background canvas."""
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    if h < 1 or w < 1:
        raise CorpusError(f"zero-dimension image {gray.shape}")
    if h >= w:
        nh, nw = size, max(1, int(w * size / h + 0.5))
    else:
        nh, nw = max(1, int(h * size / w + 0.5)), size
    if (nh, nw) == (h, w):
        scaled = gray.copy()
    else:
        scaled = np.array(Image.fromarray(gray, mode="L").resize((nw, nh), Image.BILINEAR))
    canvas = np.full((size, size), 255 if ink_is_dark else 0, dtype=np.uint8)
    top, left = (size - nh) // 2, (size - nw) // 2
    canvas[top:top + nh, left:left + nw] = scaled
    return canvas


def preprocess(raw: np.ndarray, ink_is_dark: bool = True) -> np.ndarray:
    raw = np.asarray(raw)
    if raw.ndim != 2 or 0 in raw.shape:
        raise CorpusError(f"preprocess needs a nonempty 2-D image, got shape {raw.shape}")
    if raw.min() == raw.max():
        # blank crop: no ink
        return np.zeros((SIZE, SIZE))
    return binarize(fit_to_canvas(raw, ink_is_dark), ink_is_dark)


def validate_glyph(img: np.ndarray, binary: bool = True) -> None:
    img = np.asarray(img)
    if img.shape != (SIZE, SIZE):
        raise CorpusError(f"glyph must be {SIZE}x{SIZE}, got {img.shape}")
    if not np.all(np.isfinite(img)) or img.min() < 0 or img.max() > 1:
        raise CorpusError("glyph values must lie in [0, 1]")
    if binary and not np.all((img == 0) | (img == 1)):
        raise CorpusError("glyph is not binary")


@dataclass(frozen=True)
class CorpusStats:
    J: int
    K: int
    total: int
    glyphs_per_scribe: Fraction
    occurrences_per_sign: Fraction

    @property
    def glyphs_per_scribe_rounded(self) -> int:
        return round(self.glyphs_per_scribe)

    @property
    def occurrences_per_sign_rounded(self) -> int:
        return round(self.occurrences_per_sign)

    def summary(self) -> str:
        return (f"J={self.J} signs, K={self.K} scribes, {self.total} glyphs; "
                f"{self.glyphs_per_scribe_rounded} per scribe ({self.glyphs_per_scribe}), "
                f"{self.occurrences_per_sign_rounded} per sign ({self.occurrences_per_sign})")


def corpus_stats(manifest: CorpusManifest) -> CorpusStats:
    return stats_from_counts(len(manifest.records), manifest.J, manifest.K)


def stats_from_counts(total: int, J: int, K: int) -> CorpusStats:
    if total == 0 or J == 0 or K == 0:
        raise CorpusError("empty corpus")
    return CorpusStats(J, K, total, Fraction(total, K), Fraction(total, J))


def load_corpus(manifest: CorpusManifest | str | Path) -> Corpus:
    """Load preprocessed 64x64 images; raises if any image needs ingest first."""
    if not isinstance(manifest, CorpusManifest):
        manifest = load_manifest(manifest, check_images=False)
    if not manifest.records:
        raise CorpusError("empty corpus")
    images = np.empty((len(manifest.records), SIZE, SIZE))
    for i, r in enumerate(manifest.records):
        try:
            g = read_gray(r.image_path)
        except OSError as exc:
            raise CorpusError(f"record {r.glyph_id!r}: unreadable image {r.image_path}: {exc}") from exc
        if g.shape != (SIZE, SIZE):
            raise CorpusError(f"record {r.glyph_id!r}: image is {g.shape}, run ingest first")
        images[i] = g > 127
    return Corpus(
        images=images,
        sign_ids=np.array([r.sign_id for r in manifest.records], dtype=np.int64),
        scribe_ids=np.array([r.scribe_id for r in manifest.records], dtype=np.int64),
        sign_labels=list(manifest.sign_labels),
        scribe_labels=list(manifest.scribe_labels),
        glyph_ids=[r.glyph_id for r in manifest.records],
        findplaces=[r.findplace for r in manifest.records],
    )


def corpus_hash(manifest: CorpusManifest) -> str:
    """sha256 over labels and image bytes; independent of file locations."""
    h = hashlib.sha256()
    for r in manifest.records:
        h.update(f"{r.glyph_id}\t{r.sign}\t{r.scribe}\t{r.findplace or ''}\n".encode())
        h.update(hashlib.sha256(Path(r.image_path).read_bytes()).digest())
    return h.hexdigest()


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]")


def safe_filename(glyph_id: str) -> str:
    return _UNSAFE.sub("_", glyph_id)


def ingest(manifest: CorpusManifest, out_dir, ink_is_dark: bool = True) -> CorpusManifest:
    """Preprocess every record into ``out_dir/images`` and write ``out_dir/manifest.csv``."""
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    used: dict[str, str] = {}
    for lineno, r in enumerate(manifest.records, start=2):
        name = safe_filename(r.glyph_id) + ".pgm"
        if name in used:
            raise CorpusError(f"row {lineno}: glyph ids {used[name]!r} and {r.glyph_id!r} map to the same file")
        used[name] = r.glyph_id
        try:
            glyph = preprocess(read_gray(r.image_path), ink_is_dark)
        except (OSError, CorpusError) as exc:
            raise CorpusError(f"row {lineno} ({r.glyph_id}): {exc}") from exc
        dest = img_dir / name
        write_pgm(dest, glyph)
        rows.append((r.glyph_id, r.sign, r.scribe, r.findplace, dest))
    out = build_manifest(rows, {"ingested_from": manifest.source.get("manifest", "")})
    write_manifest(out, out_dir / "manifest.csv")
    return out

"""Synthetic glyph corpora with known sign shapes, scribe styles and findplaces.

Each sign is a seeded set of polyline strokes. A scribe renders a sign by
shearing and jittering the stroke vertices, then thickening the 1-px
strokes by repeated dilation. Scribe styles are drawn around one cluster
center per synthetic findplace, so findplace is recoverable from style.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import SIZE, CorpusManifest, build_manifest, write_manifest, write_pgm

STYLE_FIELDS = ("shear", "thickness", "jitter")


class SynthError(ValueError):
    pass


@dataclass
class SynthSpec:
    J: int = 6
    K: int = 9
    images_per_pair: int = 1
    density: float = 1.0
    n_findplaces: int = 3
    seed: int = 0
    shear_range: tuple[float, float] = (-0.45, 0.45)
    thickness_range: tuple[float, float] = (1.5, 4.5)
    jitter_range: tuple[float, float] = (0.5, 2.5)
    shear_spread: float = 0.05
    thickness_spread: float = 0.3
    jitter_spread: float = 0.25
    noise: float = 0.002

    def validate(self) -> None:
        if self.J < 2 or self.K < 2:
            raise SynthError("need J >= 2 and K >= 2")
        if not 0 < self.density <= 1:
            raise SynthError("density must lie in (0, 1]")
        if self.images_per_pair < 1:
            raise SynthError("images_per_pair must be >= 1")
        if not 1 <= self.n_findplaces <= self.K:
            raise SynthError("n_findplaces must lie in [1, K]")
        if self.thickness_range[0] - self.thickness_spread < 1:
            raise SynthError("stroke thickness must stay >= 1 pixel")
        if not 0 <= self.noise < 0.5:
            raise SynthError("noise must lie in [0, 0.5)")


@dataclass
class ScribeStyle:
    scribe: str
    findplace: str
    shear: float
    thickness: float
    jitter: float

    def vector(self) -> np.ndarray:
        return np.array([self.shear, self.thickness, self.jitter])


@dataclass
class SynthCorpus:
    manifest: CorpusManifest
    styles: list[ScribeStyle]
    observed: set[tuple[int, int]] = field(default_factory=set)  # (scribe, sign) index pairs

    def unobserved(self, J: int, K: int) -> list[tuple[int, int]]:
        return [(k, j) for k in range(K) for j in range(J) if (k, j) not in self.observed]


def scribe_label(k: int) -> str:
    return f"scribe{k:02d}"


def sign_label(j: int) -> str:
    return f"sign{j:02d}"


def findplace_label(f: int) -> str:
    return f"site{f}"


def cluster_centers(spec: SynthSpec) -> np.ndarray:
    """(n_findplaces, 3) centers; each style axis gets an independently permuted even grid."""
    rng = np.random.default_rng([spec.seed, 10])
    cols = []
    for lo, hi in (spec.shear_range, spec.thickness_range, spec.jitter_range):
        grid = np.linspace(lo, hi, spec.n_findplaces) if spec.n_findplaces > 1 else np.array([(lo + hi) / 2])
        cols.append(grid[rng.permutation(spec.n_findplaces)])
    return np.stack(cols, axis=1)


def ground_truth(spec: SynthSpec) -> list[ScribeStyle]:
    spec.validate()
    centers = cluster_centers(spec)
    spreads = np.array([spec.shear_spread, spec.thickness_spread, spec.jitter_spread])
    rng = np.random.default_rng([spec.seed, 11])
    styles = []
    for k in range(spec.K):
        f = k % spec.n_findplaces
        s = centers[f] + rng.uniform(-spreads, spreads)
        styles.append(ScribeStyle(scribe_label(k), findplace_label(f), float(s[0]), float(s[1]), float(s[2])))
    return styles


def sign_prototypes(spec: SynthSpec) -> list[list[np.ndarray]]:
    """Per sign, a list of strokes; each stroke is an (M, 2) array of (x, y) vertices."""
    rng = np.random.default_rng([spec.seed, 12])
    protos = []
    for _ in range(spec.J):
        strokes = []
        for _ in range(rng.integers(2, 5)):
            if rng.random() < 0.3:
                # circular arc
                cx, cy = rng.uniform(24, 40, size=2)
                r = rng.uniform(6, 14)
                a0 = rng.uniform(0, 2 * np.pi)
                a = a0 + np.linspace(0, rng.uniform(np.pi / 2, 3 * np.pi / 2), 8)
                strokes.append(np.stack([cx + r * np.cos(a), cy + r * np.sin(a)], axis=1))
            else:
                strokes.append(rng.uniform(14, 50, size=(rng.integers(2, 4), 2)))
        protos.append(strokes)
    return protos


def _draw_polyline(canvas: np.ndarray, pts: np.ndarray) -> None:
    for p, q in zip(pts[:-1], pts[1:]):
        steps = int(np.ceil(np.abs(q - p).max() * 4)) + 1
        t = np.linspace(0.0, 1.0, steps)[:, None]
        xy = np.rint(p + t * (q - p)).astype(int)
        ok = (xy[:, 0] >= 0) & (xy[:, 0] < SIZE) & (xy[:, 1] >= 0) & (xy[:, 1] < SIZE)
        canvas[xy[ok, 1], xy[ok, 0]] = True


def _thicken(ink: np.ndarray, times: int) -> np.ndarray:
    for _ in range(times):
        out = ink.copy()
        out[1:] |= ink[:-1]
        out[:-1] |= ink[1:]
        out[:, 1:] |= ink[:, :-1]
        out[:, :-1] |= ink[:, 1:]
        ink = out
    return ink


def render(strokes: list[np.ndarray], style: ScribeStyle, rng: np.random.Generator, noise: float = 0.0) -> np.ndarray:
    canvas = np.zeros((SIZE, SIZE), dtype=bool)
    for pts in strokes:
        pts = pts + rng.uniform(-style.jitter, style.jitter, size=pts.shape)
        pts = pts.copy()
        pts[:, 0] += style.shear * (pts[:, 1] - SIZE / 2)
        _draw_polyline(canvas, pts)
    ink = _thicken(canvas, max(0, int(round(style.thickness)) - 1))
    if noise > 0:
        ink ^= rng.random(ink.shape) < noise
    return ink.astype(np.float64)


def observed_pairs(spec: SynthSpec) -> set[tuple[int, int]]:
    """A covering set of (scribe, sign) pairs first, then random fill up to the density."""
    rng = np.random.default_rng([spec.seed, 13])
    J, K = spec.J, spec.K
    target = max(max(J, K), int(round(spec.density * J * K)))
    pk, pj = rng.permutation(K), rng.permutation(J)
    pairs = {(int(pk[i % K]), int(pj[i % J])) for i in range(max(J, K))}
    rest = [(k, j) for k in range(K) for j in range(J) if (k, j) not in pairs]
    for i in rng.permutation(len(rest))[: max(0, target - len(pairs))]:
        pairs.add(rest[i])
    return pairs


def generate(spec: SynthSpec, out_dir) -> SynthCorpus:
    """Render the corpus into ``out_dir``.

    Writes images/, manifest.csv, ground_truth.csv and style_features.csv (the
    numeric style parameters per scribe, readable as manual features).
    """
    spec.validate()
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    styles = ground_truth(spec)
    protos = sign_prototypes(spec)
    pairs = observed_pairs(spec)
    rows = []
    for k in range(spec.K):
        for j in range(spec.J):
            if (k, j) not in pairs:
                continue
            for r in range(spec.images_per_pair):
                rng = np.random.default_rng([spec.seed, 14, k, j, r])
                glyph = render(protos[j], styles[k], rng, spec.noise)
                gid = f"{scribe_label(k)}_{sign_label(j)}_{r}"
                dest = img_dir / f"{gid}.pgm"
                write_pgm(dest, glyph)
                rows.append((gid, sign_label(j), scribe_label(k), styles[k].findplace, dest))
    manifest = build_manifest(rows, {"synthetic": True, "seed": spec.seed})
    write_manifest(manifest, out_dir / "manifest.csv")
    write_ground_truth(styles, out_dir / "ground_truth.csv")
    write_style_features(styles, out_dir / "style_features.csv")
    return SynthCorpus(manifest, styles, pairs)


def write_ground_truth(styles: list[ScribeStyle], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scribe", "findplace", *STYLE_FIELDS])
        for s in styles:
            w.writerow([s.scribe, s.findplace, repr(s.shear), repr(s.thickness), repr(s.jitter)])


def write_style_features(styles: list[ScribeStyle], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scribe", *STYLE_FIELDS])
        for s in styles:
            w.writerow([s.scribe, repr(s.shear), repr(s.thickness), repr(s.jitter)])

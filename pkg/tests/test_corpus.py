from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from glyphfactor.corpus import (
    CorpusError,
    build_manifest,
    corpus_hash,
    corpus_stats,
    ingest,
    load_corpus,
    load_manifest,
    otsu_threshold,
    preprocess,
    read_gray,
    stats_from_counts,
    write_manifest,
    write_pgm,
)
from oracles import otsu_exact


def brute_force_otsu(gray: np.ndarray) -> int:
    """Exact sigma_b^2 over all 256 thresholds with rational arithmetic."""
    vals = [int(v) for v in np.asarray(gray).ravel()]
    n = len(vals)
    best_t, best = 0, Fraction(-1)
    for t in range(256):
        lo = [v for v in vals if v <= t]
        hi = [v for v in vals if v > t]
        if not lo or not hi:
            var = Fraction(0)
        else:
            w0, w1 = Fraction(len(lo), n), Fraction(len(hi), n)
            mu0, mu1 = Fraction(sum(lo), len(lo)), Fraction(sum(hi), len(hi))
            var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best:
            best_t, best = t, var
    return best_t


# --- otsu ----------------------------------------------------------------------

def test_otsu_bimodal():
    img = np.array([10] * 40 + [200] * 60, dtype=np.uint8).reshape(10, 10)
    t = otsu_threshold(img)
    assert 10 <= t < 200
    assert t == brute_force_otsu(img) == 10


def test_otsu_two_pixels_and_constant():
    assert otsu_threshold(np.array([[0, 255]], dtype=np.uint8)) == 0
    assert otsu_threshold(np.full((4, 4), 77, dtype=np.uint8)) == 0


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6))))
def test_otsu_matches_brute_force(img):
    assert otsu_threshold(img) == brute_force_otsu(img)


@given(st.lists(st.integers(0, 255), min_size=1, max_size=4), st.integers(1, 20))
def test_otsu_few_levels(levels, reps):
    # few distinct levels exercise exact ties between thresholds
    img = np.repeat(np.array(levels, dtype=np.uint8), reps)[None]
    assert otsu_threshold(img) == brute_force_otsu(img)


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6))))
def test_histogram_oracle_agrees_with_pixel_oracle(img):
    assert otsu_exact(img) == brute_force_otsu(img)


# --- preprocess ----------------------------------------------------------------

def test_preprocess_all_dark_is_blank():
    out = preprocess(np.zeros((128, 128), dtype=np.uint8), ink_is_dark=True)
    assert out.shape == (64, 64) and not out.any()


def test_preprocess_binary_fixed_point(rng):
    img = (rng.random((64, 64)) < 0.3).astype(np.uint8)
    assert np.array_equal(preprocess(img, ink_is_dark=False), img)


def test_preprocess_tall_rectangle_geometry():
    raw = np.zeros((100, 50), dtype=np.uint8)  # dark ink everywhere
    raw[40:60, 20:30] = 255  # a light hole keeps the crop non-constant
    out = preprocess(raw, ink_is_dark=True)
    rows = np.flatnonzero(out.any(axis=1))
    cols = np.flatnonzero(out.any(axis=0))
    assert rows[0] == 0 and rows[-1] == 63
    width = cols[-1] - cols[0] + 1
    assert width == 32
    left, right = cols[0], 63 - cols[-1]
    assert abs(left - right) <= 1


def test_preprocess_wide_input_centered_vertically():
    raw = np.full((30, 90), 255, dtype=np.uint8)
    raw[:, :] = 0
    raw[10:20, 40:50] = 255
    out = preprocess(raw)
    rows = np.flatnonzero(out.any(axis=1))
    assert rows[-1] - rows[0] + 1 == 21
    assert abs(rows[0] - (63 - rows[-1])) <= 1


@given(arrays(np.uint8, st.tuples(st.integers(1, 80), st.integers(1, 80))), st.booleans())
def test_preprocess_binary_and_idempotent(raw, dark):
    out = preprocess(raw, ink_is_dark=dark)
    assert out.shape == (64, 64)
    assert set(np.unique(out)) <= {0.0, 1.0}
    again = preprocess((out * 255).astype(np.uint8), ink_is_dark=False)
    assert np.array_equal(out, again)


def test_preprocess_rejects_empty():
    with pytest.raises(CorpusError):
        preprocess(np.zeros((0, 5), dtype=np.uint8))


# --- manifests -----------------------------------------------------------------

def _write_tiny(tmp_path, rows):
    lines = ["glyph_id,sign,scribe,findplace,image_path"]
    for gid, sign, scribe, fp, name in rows:
        if name and not (tmp_path / name).exists() and not name.startswith("missing"):
            Image.fromarray(np.full((8, 6), 200, dtype=np.uint8), mode="L").save(tmp_path / name)
        lines.append(",".join([gid, sign, scribe, fp, name]))
    (tmp_path / "manifest.csv").write_text("\n".join(lines) + "\n")
    return tmp_path / "manifest.csv"


def test_load_manifest_counts(tmp_path):
    path = _write_tiny(tmp_path, [("g1", "a", "s1", "p", "1.png"), ("g2", "b", "s2", "", "2.png"),
                                  ("g3", "a", "s2", "p", "3.png")])
    m = load_manifest(path)
    assert (m.J, m.K, len(m)) == (2, 2, 3)
    assert [r.sign_id for r in m.records] == [0, 1, 0]
    assert [r.scribe_id for r in m.records] == [0, 1, 1]
    assert m.records[1].findplace is None


def test_load_manifest_errors(tmp_path):
    path = _write_tiny(tmp_path, [("g1", "a", "s1", "p", "1.png"), ("g2", "a", "s1", "p", "missing.png")])
    with pytest.raises(CorpusError, match=":3:"):
        load_manifest(path)
    path = _write_tiny(tmp_path, [("g1", "a", "s1", "p", "1.png"), ("g1", "a", "s1", "p", "1.png")])
    with pytest.raises(CorpusError, match="duplicate"):
        load_manifest(path)
    (tmp_path / "manifest.csv").write_text("glyph_id,sign,scribe,findplace,image_path\ng1,a,s1\n")
    with pytest.raises(CorpusError, match="columns"):
        load_manifest(tmp_path)
    with pytest.raises(CorpusError, match="not found"):
        load_manifest(tmp_path / "nope.csv")


def test_manifest_roundtrip(tmp_path):
    path = _write_tiny(tmp_path, [("g1", "a", "s1", "p", "1.png"), ("g2", "b", "s2", "q", "2.png")])
    m = load_manifest(path)
    write_manifest(m, tmp_path / "copy.csv")
    back = load_manifest(tmp_path / "copy.csv")
    assert [(r.glyph_id, r.sign, r.scribe, r.findplace, r.image_path.resolve()) for r in back.records] == \
        [(r.glyph_id, r.sign, r.scribe, r.findplace, r.image_path.resolve()) for r in m.records]


def test_full_corpus_shape_counts(tmp_path):
    rows = [(f"g{i}", f"sign{i % 88}", f"scribe{i % 74}", "", tmp_path / "x.pgm") for i in range(4134)]
    m = build_manifest(rows)
    assert (m.J, m.K, len(m)) == (88, 74, 4134)
    stats = corpus_stats(m)
    assert stats.glyphs_per_scribe_rounded == 56
    assert stats.occurrences_per_sign_rounded == 47
    assert stats.glyphs_per_scribe == Fraction(4134, 74)


def test_stats_empty():
    with pytest.raises(CorpusError, match="empty corpus"):
        stats_from_counts(0, 1, 1)


# --- ingest and loading --------------------------------------------------------

def test_ingest_writes_binary_pgms(tmp_path, rng):
    raw_dir = tmp_path / "raw"
    raw_dir.mkdir()
    rows = []
    for i in range(3):
        img = np.full((40 + 10 * i, 30), 230, dtype=np.uint8)
        img[5:30, 8:12] = 20
        Image.fromarray(img, mode="L").save(raw_dir / f"{i}.png")
        rows.append((f"g/{i}", f"s{i % 2}", "k", "site", raw_dir / f"{i}.png"))
    out = ingest(build_manifest(rows), tmp_path / "out")
    assert len(out) == 3
    for r in out.records:
        g = read_gray(r.image_path)
        assert g.shape == (64, 64) and set(np.unique(g)) <= {0, 255}
    corpus = load_corpus(tmp_path / "out")
    assert corpus.images.shape == (3, 64, 64) and corpus.images.max() == 1.0
    first = corpus_hash(load_manifest(tmp_path / "out"))
    ingest(build_manifest(rows), tmp_path / "out")
    assert corpus_hash(load_manifest(tmp_path / "out")) == first


def test_load_corpus_requires_ingest(tmp_path):
    Image.fromarray(np.zeros((10, 10), dtype=np.uint8), mode="L").save(tmp_path / "a.png")
    m = build_manifest([("g", "a", "k", "", tmp_path / "a.png")])
    with pytest.raises(CorpusError, match="ingest"):
        load_corpus(m)


def test_pgm_roundtrip(tmp_path, rng):
    glyph = (rng.random((64, 64)) < 0.5).astype(float)
    write_pgm(tmp_path / "g.pgm", glyph)
    assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5")
    assert np.array_equal(read_gray(tmp_path / "g.pgm") > 127, glyph > 0)

"""Worked input/output examples for every public operation.

Each test is a plain function without fixtures so the acceptance suite can
call them directly as well.  Bit and integer outputs are compared exactly,
real outputs within 1e-9.
"""

import contextlib
import io
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from celledproj import classifiers as clf
from celledproj import features as feat
from celledproj import harness
from celledproj.cli import main
from celledproj.errors import (
    BadConfig,
    DimensionMismatch,
    EmptyImage,
    MissingFile,
)
from celledproj.imagecore import (
    BinaryImage,
    GrayImage,
    LabeledDataset,
    binarize,
    bounding_rect,
    load_idx_pair,
    load_manifest,
    load_pbm,
    normalize,
    parse_pbm,
    save_idx_pair,
    save_pbm,
)

TOL = 1e-9


def img(rows):
    return BinaryImage(np.asarray(rows, dtype=np.uint8))


def eye(n=4):
    return img(np.eye(n))


def bits(vec):
    return vec.to_bits().tolist()


@contextlib.contextmanager
def scratch():
    with tempfile.TemporaryDirectory() as d:
        yield Path(d)


def quiet_main(argv):
    with contextlib.redirect_stdout(io.StringIO()) as out, contextlib.redirect_stderr(io.StringIO()):
        rc = main(argv)
    return rc, out.getvalue()


# --- imagecore ---------------------------------------------------------------------

def test_binarize_blank_page():
    assert binarize(GrayImage(np.full((5, 4), 255)), 128).foreground_count() == 0


def test_binarize_full_ink():
    assert binarize(GrayImage(np.zeros((5, 4))), 128).foreground_count() == 20


def test_binarize_diagonal():
    out = binarize(GrayImage(np.array([[0, 255], [255, 0]])), 128, dark_foreground=True)
    assert out.pixels.tolist() == [[1, 0], [0, 1]]


def test_bounding_rect_single_pixel():
    a = np.zeros((8, 8), np.uint8)
    a[3, 5] = 1
    assert bounding_rect(img(a)) == (3, 5, 3, 5)


def test_bounding_rect_full_extent():
    # (1,1,4,4) one-based is (0,0,3,3) zero-based
    assert bounding_rect(img(np.ones((4, 4)))) == (0, 0, 3, 3)


def test_bounding_rect_two_pixels():
    a = np.zeros((5, 5), np.uint8)
    a[2, 2] = a[4, 3] = 1
    assert bounding_rect(img(a)) == (2, 2, 4, 3)


def test_normalize_target_sized_is_identity():
    a = np.zeros((20, 20), np.uint8)
    glyph = (np.random.default_rng(0).random((16, 16)) < 0.5).astype(np.uint8)
    glyph[0, 0] = glyph[-1, -1] = 1
    a[2:18, 3:19] = glyph
    assert normalize(img(a), 16, 16).pixels.tolist() == glyph.tolist()


def test_normalize_constant_region():
    a = np.zeros((6, 6), np.uint8)
    a[1:3, 2:4] = 1
    assert normalize(img(a), 16, 16).pixels.tolist() == np.ones((16, 16)).tolist()


def test_normalize_one_row_bar():
    a = np.zeros((5, 8), np.uint8)
    a[2] = [1, 0, 1, 1, 0, 0, 1, 1]
    out = normalize(img(a), 16, 16).pixels
    assert all((row == out[0]).all() for row in out)
    assert out[0].tolist() == [1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 0, 0, 1, 1, 1, 1]


def test_pbm_parse():
    assert parse_pbm(b"P1\n2 2\n1 0 0 1").pixels.tolist() == [[1, 0], [0, 1]]


def test_pbm_round_trip():
    rng = np.random.default_rng(1)
    with scratch() as d:
        for _ in range(20):
            x = img(rng.random(tuple(rng.integers(1, 20, 2))) < 0.4)
            save_pbm(x, d / "x.pbm")
            assert load_pbm(d / "x.pbm") == x


def test_pbm_short_raster():
    with pytest.raises(DimensionMismatch):
        parse_pbm(b"P1\n2 2\n1 0 0")


def test_idx_empty():
    with scratch() as d:
        save_idx_pair(LabeledDataset([]), d / "i", d / "l")
        assert len(load_idx_pair(d / "i", d / "l")) == 0


def _write_idx(d, pixels, label):
    (d / "i").write_bytes(bytes([0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2]) + bytes(pixels))
    (d / "l").write_bytes(bytes([0, 0, 8, 1, 0, 0, 0, 1, label]))


def test_idx_zero_bytes_are_ink():
    with scratch() as d:
        _write_idx(d, [0, 0, 0, 0], 3)
        ds = load_idx_pair(d / "i", d / "l", threshold=128)
        assert ds.images[0].pixels.tolist() == [[1, 1], [1, 1]]


def test_idx_label_pass_through():
    with scratch() as d:
        _write_idx(d, [255, 0, 0, 255], 9)
        assert load_idx_pair(d / "i", d / "l").labels.tolist() == [9]


def test_manifest_empty():
    with scratch() as d:
        (d / "m.csv").write_text("filename,label\n")
        assert len(load_manifest(d, d / "m.csv")) == 0


def test_manifest_order():
    with scratch() as d:
        save_pbm(eye(3), d / "b.pbm")
        save_pbm(img(np.ones((2, 2))), d / "a.pbm")
        (d / "m.csv").write_text("filename,label\nb.pbm,0\na.pbm,1\n")
        ds = load_manifest(d, d / "m.csv")
        assert ds.labels.tolist() == [0, 1] and ds.images[0] == eye(3)


def test_manifest_missing_file():
    with scratch() as d:
        save_pbm(eye(3), d / "a.pbm")
        (d / "m.csv").write_text("filename,label\na.pbm,0\ngone.pbm,1\n")
        with pytest.raises(MissingFile, match="gone.pbm"):
            load_manifest(d, d / "m.csv")


# --- features -------------------------------------------------------------------

CP_CASES = [
    (np.zeros((4, 4)), [0] * 8),
    (np.ones((4, 4)), [1] * 8),
    (np.eye(4), [1, 1, 0, 0, 0, 0, 1, 1]),
]


def test_celled_projection_h_examples():
    for a, want in CP_CASES:
        assert bits(feat.celled_projection_h(img(a), 2)) == want


def test_celled_projection_naive_examples():
    for a, want in CP_CASES:
        assert bits(feat.celled_projection_naive(img(a), 2, "h")) == want


def test_celled_projection_v_identity():
    assert bits(feat.celled_projection_v(eye(), 2)) == [1, 1, 0, 0, 0, 0, 1, 1]


def test_celled_projection_v_blank():
    assert bits(feat.celled_projection_v(img(np.zeros((4, 4))), 2)) == [0] * 8


def test_celled_projection_v_single_pixel():
    a = np.zeros((4, 4))
    a[0, 0] = 1
    assert bits(feat.celled_projection_v(img(a), 4)) == [1] + [0] * 15


def test_celled_projection_4h4v_length():
    x = img(np.random.default_rng(2).random((16, 16)) < 0.3)
    assert len(feat.celled_projection(x, feat.CelledProjectionConfig(4, 4))) == 128


def test_celled_projection_8h_length():
    x = img(np.random.default_rng(3).random((16, 16)) < 0.3)
    v = feat.celled_projection(x, feat.CelledProjectionConfig(8, 0))
    assert len(v) == 128 and v == feat.celled_projection_h(x, 8)


def test_celled_projection_blank():
    for kh, kv in ((1, 1), (4, 4), (8, 0), (0, 2), (16, 16)):
        v = feat.celled_projection(img(np.zeros((16, 16))), feat.CelledProjectionConfig(kh, kv))
        assert not v.to_bits().any()


def test_crossings_0110():
    assert feat.crossings(img([[0, 1, 1, 0]]))[0] == 1


def test_crossings_1010():
    assert feat.crossings(img([[1, 0, 1, 0]]))[0] == 2


def test_crossings_blank():
    out = feat.crossings(img(np.zeros((5, 7))))
    assert out.shape == (12,) and not out.any()


def test_fourier_blank():
    out = feat.fourier_low(img(np.zeros((16, 16))))
    assert out.shape == (64,) and not out.any()


def test_fourier_constant():
    out = feat.fourier_low(img(np.ones((16, 16))))
    assert abs(out[36] - 256) <= TOL
    assert np.abs(np.delete(out, 36)).max() <= TOL


def test_fourier_cyclic_shift():
    x = np.random.default_rng(4).random((16, 16)) < 0.3
    a = feat.fourier_low(img(x))
    b = feat.fourier_low(img(np.roll(x, (2, 3), axis=(0, 1))))
    assert np.abs(a - b).max() <= TOL


def test_central_moments_first_order_vanish():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.random((12, 9)) < 0.4
        x[0, 0] = True
        mu = feat.central_moments(img(x))
        assert abs(mu[1]) <= TOL and abs(mu[2]) <= TOL


def test_central_moments_single_pixel():
    a = np.zeros((6, 6))
    a[2, 4] = 1
    mu = feat.central_moments(img(a))
    assert mu[0] == 1 and np.abs(mu[1:]).max() <= TOL


def test_central_moments_two_pixels():
    a = np.zeros((3, 3))
    a[0, 0] = a[0, 2] = 1
    mu = dict(zip(feat.CENTRAL_MOMENT_ORDERS, feat.central_moments(img(a))))
    assert mu[(0, 0)] == 2 and abs(mu[(2, 0)] - 2) <= TOL
    assert abs(mu[(0, 2)]) <= TOL and abs(mu[(1, 1)]) <= TOL


def test_hu_rotation_90():
    a = np.zeros((9, 9), np.uint8)
    a[1:7, 2] = 1
    a[6, 2:6] = 1
    a[3, 5] = 1
    h0 = feat.hu_moments(img(a))
    h1 = feat.hu_moments(img(np.rot90(a)))
    assert np.abs(h0 - h1).max() <= TOL * max(1.0, np.abs(h0).max())


def test_hu_single_pixel():
    a = np.zeros((5, 5))
    a[1, 3] = 1
    assert np.abs(feat.hu_moments(img(a))).max() <= TOL


def test_hu_translation():
    rng = np.random.default_rng(6)
    glyph = (rng.random((8, 8)) < 0.4).astype(np.uint8)
    glyph[0, 0] = 1
    a, b = np.zeros((20, 20), np.uint8), np.zeros((20, 20), np.uint8)
    a[1:9, 2:10] = glyph
    b[10:18, 7:15] = glyph
    assert np.abs(feat.hu_moments(img(a)) - feat.hu_moments(img(b))).max() <= TOL


def test_histograms_identity():
    assert feat.projection_histograms(eye()).tolist() == [1] * 8


def test_histograms_full():
    assert feat.projection_histograms(img(np.ones((3, 5)))).tolist() == [5] * 3 + [3] * 5


def test_histograms_blank():
    assert not feat.projection_histograms(img(np.zeros((3, 5)))).any()


def test_zoning_identity():
    assert feat.zoning(eye(), 2, 2).tolist() == [0.5, 0, 0, 0.5]


def test_zoning_full():
    for g in ((1, 1), (2, 3), (6, 6), (3, 2)):
        assert feat.zoning(img(np.ones((6, 6))), *g).tolist() == [1.0] * (g[0] * g[1])


def test_zoning_16_zones():
    x = np.random.default_rng(7).random((16, 16)) < 0.3
    z = feat.zoning(img(x), 4, 4)
    counts = x.reshape(4, 4, 4, 4).sum(axis=(1, 3)).ravel()
    assert z.shape == (16,) and np.abs(z - counts / 16).max() <= TOL


def test_hamming_self():
    a = feat.BitFeatureVector.from_bits(np.random.default_rng(8).random(130) < 0.5)
    assert feat.hamming_distance(a, a) == 0


def test_hamming_complement():
    b = np.random.default_rng(9).random(130) < 0.5
    a = feat.BitFeatureVector.from_bits(b)
    assert feat.hamming_distance(a, feat.BitFeatureVector.from_bits(~b)) == 130


def test_hamming_example():
    a = feat.BitFeatureVector.from_bits([1, 1, 0, 0, 0, 0, 1, 1])
    b = feat.BitFeatureVector.from_bits([1, 0, 0, 0, 0, 0, 1, 0])
    assert feat.hamming_distance(a, b) == 2


# --- classifiers ------------------------------------------------------------------

def test_knn_exact_match():
    x = np.random.default_rng(10).normal(size=(12, 5))
    fm = clf.FeatureMatrix(x, np.arange(12) % 4, 4)
    model = clf.knn_train(fm, 1)
    assert [clf.knn_classify(model, q) for q in x] == fm.labels.tolist()


def test_knn_majority():
    fm = clf.FeatureMatrix([[0, 0], [1, 0], [5, 5]], [0, 0, 1], 2)
    assert clf.knn_classify(clf.knn_train(fm, 3), [0.4, 0]) == 0


def test_knn_hamming_equals_euclidean():
    rng = np.random.default_rng(11)
    train = [feat.BitFeatureVector.from_bits(b) for b in rng.random((30, 70)) < 0.5]
    fm = clf.FeatureMatrix.from_vectors(train, rng.integers(0, 4, 30), 4)
    queries = [feat.BitFeatureVector.from_bits(b) for b in rng.random((40, 70)) < 0.5]
    for k in (1, 3, 5):
        ham = clf.knn_predict(clf.knn_train(fm, k, "hamming"), queries)
        euc = clf.knn_predict(clf.knn_train(fm, k, "euclidean"), queries)
        assert ham.tolist() == euc.tolist()


def test_pnn_stores_training():
    x = np.random.default_rng(12).normal(size=(6, 3))
    fm = clf.FeatureMatrix(x, [0, 1, 2, 0, 1, 2], 3)
    assert np.array_equal(clf.pnn_train(fm, 1.0).training.vectors, x)


def test_pnn_zero_spread():
    with pytest.raises(BadConfig):
        clf.pnn_train(clf.FeatureMatrix([[0.0]], [0], 1), 0)


def test_pnn_spread_recorded():
    assert clf.pnn_train(clf.FeatureMatrix([[0.0]], [0], 1), 1.5).spread == 1.5


def test_pnn_own_kernel_dominates():
    x = np.random.default_rng(13).normal(size=(20, 4))
    fm = clf.FeatureMatrix(x, np.arange(20) % 5, 5)
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    model = clf.pnn_train(fm, 0.1 * d[d > 0].min())
    assert [clf.pnn_classify(model, q) for q in x] == fm.labels.tolist()


def test_pnn_hand_evaluated():
    model = clf.pnn_train(clf.FeatureMatrix([[0.0], [1.0]], [0, 1], 2), 0.5)
    scores = clf.pnn_scores(model, [0.3])
    assert abs(scores[0] - np.exp(-0.18)) <= TOL and abs(scores[1] - np.exp(-0.98)) <= TOL
    assert clf.pnn_classify(model, [0.3]) == 0


def test_pnn_small_spread_is_1nn():
    rng = np.random.default_rng(14)
    x = rng.normal(size=(25, 3))
    fm = clf.FeatureMatrix(x, rng.integers(0, 3, 25), 3)
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    pnn = clf.pnn_train(fm, 0.01 * d[d > 0].min())
    nn = clf.knn_train(fm, 1)
    q = rng.normal(size=(50, 3))
    assert clf.pnn_predict(pnn, q).tolist() == clf.knn_predict(nn, q).tolist()


XOR_X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], float)
XOR_Y = np.array([0, 1, 1, 0])


def xor_model():
    cfg = clf.FbpnConfig(hidden_count=4, max_epochs=5000, validation_fraction=0.0)
    return clf.fbpn_train(clf.FeatureMatrix(XOR_X, XOR_Y, 2), cfg)


def test_fbpn_xor_training_accuracy():
    model = xor_model()
    assert len(model.loss_history) <= 5000
    assert clf.fbpn_predict_many(model, XOR_X).tolist() == XOR_Y.tolist()


def test_fbpn_validation_split():
    rng = np.random.default_rng(15)
    fm = clf.FeatureMatrix(rng.normal(size=(100, 3)), np.arange(100) % 10, 10)
    model = clf.fbpn_train(fm, clf.FbpnConfig(hidden_count=3, max_epochs=1, validation_fraction=0.2))
    assert (model.train_count, model.validation_count) == (80, 20)


def test_fbpn_zero_epochs():
    fm = clf.FeatureMatrix(np.random.default_rng(16).normal(size=(10, 4)), np.arange(10) % 3, 3)
    model = clf.fbpn_train(fm, clf.FbpnConfig(hidden_count=5, max_epochs=0, seed=7))
    init = clf.fbpn_init(4, 5, 3, 7)
    for name, value in init.params().items():
        assert np.array_equal(model.params()[name], value)


def test_fbpn_saturated_output():
    model = clf.fbpn_init(3, 2, 4, 0)
    model = model.with_params({"w2": np.zeros((4, 2)), "b2": np.array([50.0, -50, -50, -50])})
    q = np.random.default_rng(17).normal(size=(10, 3)) * 100
    assert clf.fbpn_predict_many(model, q).tolist() == [0] * 10


def test_fbpn_xor_predictions():
    model = xor_model()
    assert [clf.fbpn_predict(model, q) for q in XOR_X] == XOR_Y.tolist()


def test_fbpn_predict_deterministic():
    model = clf.fbpn_init(5, 4, 3, 18)
    q = np.random.default_rng(18).normal(size=5)
    assert clf.fbpn_predict(model, q) == clf.fbpn_predict(model, q)


def test_fbpn_zero_weight_gradient_finite():
    model = clf.fbpn_init(3, 4, 2, 0)
    model = model.with_params({k: np.zeros_like(v) for k, v in model.params().items()})
    g = clf.fbpn_gradient(model, (np.array([[1.0, -1, 0.5], [-1, 1, -0.5]]), np.array([0, 1])))
    assert all(np.isfinite(v).all() for v in g.values())


def finite_difference_error(seed: int) -> float:
    """Largest componentwise relative error of the analytic gradient."""
    rng = np.random.default_rng(seed)
    d, h, c, n = rng.integers(2, 6), rng.integers(2, 6), rng.integers(2, 5), rng.integers(3, 8)
    model = clf.fbpn_init(d, h, c, rng)
    model = model.with_params({k: v * 4 for k, v in model.params().items()})
    batch = (rng.normal(size=(n, d)), rng.integers(0, c, n))
    grads = clf.fbpn_gradient(model, batch)
    eps, worst = 1e-5, 0.0
    for name, value in model.params().items():
        for idx in np.ndindex(value.shape):
            plus, minus = value.copy(), value.copy()
            plus[idx] += eps
            minus[idx] -= eps
            num = (clf.fbpn_loss(model.with_params({name: plus}), batch)
                   - clf.fbpn_loss(model.with_params({name: minus}), batch)) / (2 * eps)
            ana = grads[name][idx]
            worst = max(worst, abs(ana - num) / max(abs(ana), abs(num), 1e-8))
    return worst


def test_fbpn_gradient_finite_differences():
    assert finite_difference_error(19) < 1e-4


def test_fbpn_output_error_zero_at_target():
    model = clf.fbpn_init(2, 3, 2, 0)
    model = model.with_params({"w2": np.zeros((2, 3)), "b2": np.array([800.0, -800.0])})
    g = clf.fbpn_gradient(model, (np.array([[0.3, -0.2]]), np.array([0])))
    assert not g["w2"].any() and not g["b2"].any()


# --- harness --------------------------------------------------------------------

def small_dataset(per_class=10, seed=0):
    cfg = harness.SynthConfig(seed=seed, samples_per_class=per_class)
    return harness.synth_generate(harness.load_templates(), cfg)


def test_split_stratified_counts():
    tr, te = harness.split_dataset(small_dataset(), 0.6, 0.3, seed=1)
    assert np.bincount(tr.labels).tolist() == [6] * 10
    assert np.bincount(te.labels).tolist() == [3] * 10


def test_split_deterministic():
    data = small_dataset()
    a = harness.split_dataset(data, 0.6, 0.3, seed=4)
    b = harness.split_dataset(data, 0.6, 0.3, seed=4)
    assert all(x.images == y.images and x.labels.tolist() == y.labels.tolist() for x, y in zip(a, b))


def test_split_fractions_too_large():
    with pytest.raises(ValueError):
        harness.split_dataset(small_dataset(), 0.7, 0.7, seed=0)


def test_synth_identity_distortion():
    templates = harness.load_templates()
    cfg = harness.SynthConfig(samples_per_class=3, rotation=0, shear=0, noise=0)
    data = harness.synth_generate(templates, cfg)
    assert all(x == normalize(templates[y], 16, 16) for x, y in data)


def test_synth_deterministic():
    a, b = small_dataset(5, seed=3), small_dataset(5, seed=3)
    assert a.images == b.images and a.labels.tolist() == b.labels.tolist()


def test_synth_noise_rate():
    templates = harness.load_templates()
    template = templates[3]
    cfg = harness.SynthConfig(rotation=0, shear=0, noise=0.05, size=16)
    rng = np.random.default_rng(20)
    flips = [int((harness.distort(template, cfg, rng).pixels != template.pixels).sum()) for _ in range(1000)]
    assert abs(np.mean(flips) - 12.8) <= 2


def test_evaluate_self_knn1():
    data = small_dataset(4)
    assert harness.evaluate(data, data, "cp", {"kh": 4, "kv": 4}, "knn", 1).accuracy == 100.0


def test_evaluate_constant_classifier():
    truth = np.repeat(np.arange(10), 7)
    cm = harness.confusion_matrix(truth, np.full(truth.size, 4), 10)
    assert harness.CellResult("f", "-", "c", "-", cm).accuracy == 10.0


def test_evaluate_confusion_row_sums():
    tr, te = harness.split_dataset(small_dataset(), 0.6, 0.3, seed=2)
    cell = harness.evaluate(tr, te, "zoning", {}, "knn", 3)
    assert cell.confusion.sum(axis=1).tolist() == np.bincount(te.labels, minlength=10).tolist()


MINIMAL = harness.ExperimentSpec(
    features=[harness.FeatureSpec("cp-4h4v", "cp", {"kh": 4, "kv": 4})],
    classifiers=[harness.ClassifierSpec("knn", (("3", (3,)),))],
    synth=harness.SynthConfig(samples_per_class=9),
    seed=5,
)


def test_grid_one_cell():
    assert len(harness.run_grid(MINIMAL).cells) == 1


def test_grid_default_shape():
    # the full run is exercised by the acceptance suite
    spec = harness.default_spec()
    blocks = [(f.label, c.name, s) for f in spec.features for c in spec.classifiers for s, _ in c.subranges]
    assert (len(spec.features), len(spec.classifiers), len(blocks)) == (8, 3, 72)


def test_grid_rerun_identical_csv():
    a = harness.emit_report(harness.run_grid(MINIMAL))
    b = harness.emit_report(harness.run_grid(MINIMAL, jobs=2))
    assert a == b


def test_report_empty():
    assert harness.emit_report(harness.ExperimentReport()) == ",".join(harness.CSV_COLUMNS) + "\n"


def test_report_one_cell():
    assert len(harness.emit_report(harness.run_grid(MINIMAL)).splitlines()) == 2


def test_report_two_decimals():
    cm = np.zeros((10, 10), np.int64)
    cm[0, 0], cm[0, 1] = 9412, 588
    line = harness.emit_report(harness.ExperimentReport([harness.CellResult("f", "-", "knn", "k=3", cm)]))
    assert line.splitlines()[1].split(",")[4] == "94.12"


def test_bench_no_images():
    assert harness.bench_extractors([], 3) == []


def test_bench_positive_finite():
    rows = harness.bench_extractors(small_dataset(1).images, 2)
    assert rows and all(np.isfinite(r.ns_per_item) and r.ns_per_item > 0 and r.per_second > 0 for r in rows)


def cp_time(size: int, reps: int = 7) -> float:
    rng = np.random.default_rng(21)
    imgs = [img(rng.random((size, size)) < 0.3) for _ in range(200)]
    cfg = feat.CelledProjectionConfig(4, 4)
    runs = []
    for _ in range(reps):
        start = time.perf_counter()
        for x in imgs:
            feat.celled_projection(x, cfg)
        runs.append(time.perf_counter() - start)
    return float(np.median(runs))


def test_bench_cp_scaling():
    assert cp_time(32) / cp_time(16) <= 4.5


# --- cli -------------------------------------------------------------------------

def test_cli_extract_cp():
    with scratch() as d:
        save_pbm(img(np.random.default_rng(22).random((16, 16)) < 0.3), d / "x.pbm")
        rc, _ = quiet_main(["extract", "--feature", "cp", "--params", "kh=4,kv=4",
                            "--in", str(d / "x.pbm"), "--out", str(d / "v")])
        assert rc == 0 and (d / "v").read_text().splitlines()[0] == "cp kh=4,kv=4 128"


def test_cli_unknown_feature():
    proc = subprocess.run([sys.executable, "-m", "celledproj", "extract", "--feature", "sift",
                           "--in", "x.pbm", "--out", "v"], capture_output=True)
    assert proc.returncode == 2


def test_cli_missing_input():
    with scratch() as d:
        rc, _ = quiet_main(["extract", "--feature", "cp", "--in", str(d / "none.pbm"), "--out", str(d / "v")])
        assert rc == 3


def test_cli_minimal_grid():
    with scratch() as d:
        (d / "spec.ini").write_text("[dataset]\nper_class = 9\n[feature cp-4h4v]\nkind = cp\n"
                                    "params = kh=4,kv=4\n[classifier knn]\nsubranges = 3: 3\n")
        rc, _ = quiet_main(["grid", "--spec", str(d / "spec.ini"), "--out", str(d / "o"), "--no-plot"])
        assert rc == 0 and len((d / "o" / "report.csv").read_text().splitlines()) == 2


def test_cli_grid_resume():
    with scratch() as d:
        (d / "spec.ini").write_text("[dataset]\nper_class = 9\n[feature z]\nkind = zoning\n"
                                    "[classifier knn]\nsubranges = a: 1, 3 | b: 5\n")
        args = ["grid", "--spec", str(d / "spec.ini"), "--out", str(d / "o"), "--no-plot"]
        quiet_main(args)
        first = (d / "o" / "report.csv").read_bytes()
        # an interrupted run leaves only some cells in the cache
        cached = sorted((d / "o" / "cache").rglob("*.csv"))
        cached[0].unlink()
        assert quiet_main(args)[0] == 0
        assert (d / "o" / "report.csv").read_bytes() == first


def test_cli_synth_empty():
    with scratch() as d:
        rc, _ = quiet_main(["synth", "--per-class", "0", "--out", str(d / "s")])
        assert rc == 0 and (d / "s" / "manifest.csv").read_text().strip() == "filename,label"


def test_cli_eval_self():
    with scratch() as d:
        quiet_main(["synth", "--per-class", "3", "--out", str(d / "s")])
        rc, out = quiet_main(["eval", "--train", str(d / "s"), "--test", str(d / "s"), "--feature", "cp",
                              "--params", "kh=4,kv=4", "--classifier", "knn", "--value", "1"])
        assert rc == 0 and out.split()[-1] == "100.00"


def test_cli_bench_three_runs():
    with scratch() as d:
        quiet_main(["synth", "--per-class", "1", "--out", str(d / "s")])
        rc, out = quiet_main(["bench", "--in", str(d / "s"), "--reps", "3"])
        assert rc == 0 and out.startswith("median of 3 run(s)")

"""Smoke tests for the Python bindings: shapes, contracts and a tiny
end-to-end explanation loop. Heavyweight quality gates live in the C++
acceptance suite."""

import math

import numpy as np
import pytest

import cgx

cgx.set_num_threads(2)


@pytest.fixture(scope="module")
def small_world():
    imgs, attrs = cgx.generate_dataset(700, 11)
    train_img, test_img = imgs[:560], imgs[560:]
    train_attr, test_attr = attrs[:560], attrs[560:]
    norm = cgx.Normalizer.fit(train_attr[:, :3])
    clf = cgx.train_classifier(
        train_img, train_attr[:, 3].astype(np.int64),
        test_img, test_attr[:, 3].astype(np.int64),
        seed=5, epochs=3, accuracy_gate=0.0,
    )
    vae = cgx.train_vae(
        train_img, norm.normalize(train_attr[:, :3]).astype(np.float32),
        train_attr[:, 3].astype(np.int64),
        test_img, norm.normalize(test_attr[:, :3]).astype(np.float32),
        test_attr[:, 3].astype(np.int64),
        {"epochs": 3, "recon_gate": 0.0, "seed": 7},
    )
    return {
        "imgs": imgs, "attrs": attrs, "norm": norm, "clf": clf, "vae": vae,
        "test_img": test_img, "test_attr": test_attr,
    }


def test_dataset_shapes():
    imgs, attrs = cgx.generate_dataset(50, 3)
    assert imgs.shape == (50, 28, 28)
    assert attrs.shape == (50, 4)
    assert imgs.min() >= 0.0 and imgs.max() <= 1.0
    # Deterministic in the seed.
    imgs2, attrs2 = cgx.generate_dataset(50, 3)
    np.testing.assert_array_equal(imgs, imgs2)
    np.testing.assert_array_equal(attrs, attrs2)


def test_normalizer_roundtrip():
    _, attrs = cgx.generate_dataset(100, 5)
    norm = cgx.Normalizer.fit(attrs[:, :3])
    z = norm.normalize(attrs[:, :3])
    assert z.min() >= -1.0 - 1e-9 and z.max() <= 1.0 + 1e-9
    back = norm.denormalize(z)
    np.testing.assert_allclose(back, attrs[:, :3], rtol=1e-9)


def test_metric_fixtures():
    x = np.zeros(4)
    rec_p = np.array([math.sqrt(2.0), 0, 0, 0])
    rec_q = np.array([math.sqrt(0.5), 0, 0, 0])
    assert cgx.im1(x, rec_p, rec_q) == pytest.approx(0.25, abs=1e-6)
    assert cgx.im2(np.ones(60), np.zeros(60), np.zeros(60)) == 0.0
    mean, half, n = cgx.mean_ci([0.0, 2.0], 0.95)
    assert mean == pytest.approx(1.0)
    assert half == pytest.approx(1.959963984540054, abs=1e-9)
    assert n == 2
    assert cgx.oracle_score([1, 2, 3, 4], [1, 2, 0, 0]) == 0.5
    assert cgx.spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)


def test_morphometrics_tracks_renderer():
    img = cgx.render_glyph(0, 2.5, 220.0, 0.2, 9)
    t, i, s = cgx.morphometrics(img)
    assert i == pytest.approx(220.0, rel=0.05)
    assert s == pytest.approx(0.2, abs=0.06)
    assert cgx.morphometrics(np.zeros((28, 28))) is None


def test_scm_counterfactuals():
    _, attrs = cgx.generate_dataset(2000, 21)
    norm = cgx.Normalizer.fit(attrs[:, :3])
    scm = cgx.AttributeScm.fit(norm.normalize(attrs[:, :3]), epochs=500, seed=3)
    a = (0.2, -0.1, 0.4, 7)
    # Identity intervention.
    assert cgx.AttributeScm.counterfactual(scm, a, {}) == pytest.approx(a)
    # Slant has no attribute descendants.
    t, i, s, label = scm.counterfactual(a, {"slant": 0.9})
    assert s == 0.9 and t == a[0] and i == a[1] and label == 7
    # Thickness propagates into intensity.
    t2, i2, s2, _ = scm.counterfactual(a, {"thickness": 0.8})
    assert t2 == 0.8 and i2 != a[1] and s2 == a[2]
    # Ancestral sampling is deterministic.
    s1 = scm.sample(50, 4)
    s2_ = scm.sample(50, 4)
    np.testing.assert_array_equal(s1[0], s2_[0])


def test_embedding_arithmetic():
    emb = np.random.RandomState(0).randn(10, 16).astype(np.float32)
    one_hot = np.zeros(10, dtype=np.float32)
    one_hot[4] = 1.0
    np.testing.assert_array_equal(cgx.expected_embedding(emb, one_hot), emb[4])
    np.testing.assert_array_equal(cgx.interpolated_embedding(emb, 2, 9, 0.0), emb[2])
    np.testing.assert_array_equal(cgx.interpolated_embedding(emb, 2, 9, 1.0), emb[9])
    with pytest.raises(ValueError):
        cgx.expected_embedding(emb, np.full(10, 0.2, dtype=np.float32))


def test_model_contracts(small_world):
    w = small_world
    n = 8
    x = w["test_img"][:n]
    a = w["norm"].normalize(w["test_attr"][:n, :3]).astype(np.float32)
    l = w["test_attr"][:n, 3].astype(np.int64)
    z = w["vae"].encode(x, a, l)
    assert z.shape == (n, w["vae"].latent_dim)
    rec = w["vae"].counterfactual_image(x, a, l, a, l)
    assert rec.shape == (n, 28, 28)
    assert rec.min() >= 0.0 and rec.max() <= 1.0
    scores = w["clf"].scores(x)
    np.testing.assert_allclose(scores.sum(axis=1), np.ones(n), atol=1e-6)


def test_explainers_end_to_end(small_world):
    w = small_world
    x = w["test_img"][0]
    a_norm = w["norm"].normalize(w["test_attr"][:1, :3])[0]
    a = (float(a_norm[0]), float(a_norm[1]), float(a_norm[2]), int(w["test_attr"][0, 3]))

    maps, base = cgx.shapley_saliency(w["clf"], x, w["imgs"][:32], n_samples=16, seed=2)
    assert maps.shape == (10, 28, 28)
    assert base.shape == (10,)

    phi, phi_base = cgx.attribute_shapley(
        w["vae"], w["clf"], a, w["norm"].normalize(w["test_attr"][:20, :3]).astype(np.float32),
        m=2, seed=3,
    )
    assert phi.shape == (10, 3)
    # Local accuracy: attributions explain f_hat(a) - base.
    fa = cgx.mc_attribute_scores(
        w["vae"], w["clf"], np.asarray([a[:3]], dtype=np.float32),
        np.asarray([a[3]], dtype=np.int64), m=2, seed=3,
    )[0]
    np.testing.assert_allclose(phi.sum(axis=1), fa - phi_base, atol=1e-3)

    # Target the class of the reconstruction itself: alpha=0 already succeeds.
    a3 = np.asarray([a[:3]], dtype=np.float32)
    lab = np.asarray([a[3]], dtype=np.int64)
    recon = w["vae"].counterfactual_image(x[None], a3, lab, a3, lab)
    y0 = int(w["clf"].predict(recon)[0])
    res = cgx.agnostic_cf(w["vae"], w["clf"], x, a, y_target=y0, grid=25)
    assert res["success"] and res["alpha"] == 0.0

    grad = cgx.gradient_cf(w["vae"], w["clf"], x, a, y_target=(int(a[3]) + 1) % 10, steps=25)
    assert grad["counterfactual"].shape == (28, 28)
    assert grad["label_distribution"].shape == (10,)

    base_cf = cgx.baseline_pixel_cf(w["clf"], x, steps=40)
    assert base_cf["success"] == (base_cf["achieved"] == base_cf["y_target"])


def test_npy_is_numpy_readable(tmp_path):
    path = str(tmp_path / "arr.npy")
    arr = np.random.RandomState(1).rand(3, 7)
    cgx.save_npy(path, arr)
    back = np.load(path)
    np.testing.assert_array_equal(arr, back)

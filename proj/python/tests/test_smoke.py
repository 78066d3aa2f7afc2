import struct
from pathlib import Path

import numpy as np
import pytest

import dda


def brute_correlate(a, b):
    h, w = a.shape
    out = np.zeros_like(a)
    for kr in range(h):
        for kc in range(w):
            out[kr, kc] = np.sum(np.roll(a, (-kr, -kc), axis=(0, 1)) * b)
    return out


def test_fourier_ops_match_numpy():
    rng = np.random.default_rng(0)
    a = rng.uniform(-1, 1, (6, 7))
    b = rng.uniform(-1, 1, (6, 7))
    np.testing.assert_allclose(dda.fft2(a), np.fft.fft2(a), atol=1e-12)
    np.testing.assert_allclose(dda.ifft2(np.fft.fft2(a)), a, atol=1e-13)
    np.testing.assert_allclose(dda.cross_correlate(a, b), brute_correlate(a, b), atol=1e-12)
    np.testing.assert_allclose(dda.convolve(a, b), np.real(np.fft.ifft2(np.fft.fft2(a) * np.fft.fft2(b))), atol=1e-12)
    np.testing.assert_allclose(dda.autocorrelate(a), brute_correlate(a, a), atol=1e-12)
    np.testing.assert_array_equal(dda.center_shift(np.eye(4)), np.roll(np.eye(4), (2, 2), axis=(0, 1)))


def test_identity_statistics_collapse_to_renormalize():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (3, 8, 8))
    delta = np.zeros((3, 8, 8))
    delta[:, 0, 0] = 1.0
    stats = dda.DomainStats(delta, [1.0, 1.0, 1.0], "source")
    expected = 2 * (x - x.min()) / (x - x.min()).max() - 1
    np.testing.assert_array_equal(dda.transform_target(x, [1.0, 1.0, 1.0], stats), dda.renormalize(x))
    np.testing.assert_allclose(dda.renormalize(x), expected, atol=1e-15)


def test_degenerate_and_shape_errors_raise():
    with pytest.raises(dda.DegenerateImageError):
        dda.renormalize(np.ones((1, 3, 3)))
    with pytest.raises(dda.DataError):
        dda.convolve(np.zeros((3, 4)), np.zeros((4, 3)))


def test_mean_autocorrelation_is_zero_phase():
    rng = np.random.default_rng(2)
    imgs = rng.uniform(-1, 1, (5, 1, 8, 6))
    spec = np.fft.fft2(dda.mean_autocorrelation(imgs)[0])
    assert np.max(np.abs(spec.imag)) < 1e-9 * np.max(np.abs(spec))
    assert spec.real.min() > -1e-9 * np.max(np.abs(spec))


def test_fit_pca_matches_numpy_eigh():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(60, 12)) * np.linspace(4, 1, 12)
    comps, var = dda.fit_pca(x, 2)
    w, v = np.linalg.eigh(np.cov(x, rowvar=False))
    np.testing.assert_allclose(var, w[::-1][:2], rtol=1e-8)
    for j in range(2):
        assert abs(abs(comps[j] @ v[:, -1 - j]) - 1) < 1e-8


def write_idx(path_images, path_labels, images, labels):
    n, h, w = images.shape
    Path(path_images).write_bytes(struct.pack(">IIII", 0x803, n, h, w) + images.astype(np.uint8).tobytes())
    Path(path_labels).write_bytes(struct.pack(">II", 0x801, n) + np.asarray(labels, np.uint8).tobytes())


def read_idx_images(path):
    raw = Path(path).read_bytes()
    magic, n, h, w = struct.unpack(">IIII", raw[:16])
    assert magic == 0x803
    return np.frombuffer(raw[16:], np.uint8).reshape(n, h, w)


@pytest.fixture()
def tiny_experiment(tmp_path):
    rng = np.random.default_rng(4)
    labels = np.arange(30) % 10
    imgs = rng.integers(0, 60, (30, 16, 16))
    for i, lab in enumerate(labels):
        imgs[i, 3:13, 3 + lab] = 255
    write_idx(tmp_path / "tr-img", tmp_path / "tr-lab", imgs, labels)
    write_idx(tmp_path / "te-img", tmp_path / "te-lab", imgs[:20], labels[:20])
    (tmp_path / "exp.conf").write_text(
        "source_train_images = tr-img\nsource_train_labels = tr-lab\n"
        "source_test_images = te-img\nsource_test_labels = te-lab\n"
        "train_per_class = 0\ntest_per_class = 0\npatch_count = 4\n"
        "classifier = logistic\nepochs = 2\nbatch_size = 8\npca_cap = 40\nseed = 11\nout_dir = out\n"
    )
    return tmp_path


def test_stats_cache_matches_numpy_recomputation(tiny_experiment):
    src, tgt = dda.stats(tiny_experiment / "exp.conf")
    raw = (tiny_experiment / "out" / "source_stats.bin").read_bytes()
    assert raw[:8] == b"DDASTATS"
    version, h, w, c = struct.unpack("<IIII", raw[8:24])
    seed, count = struct.unpack("<qQ", raw[24:40])
    assert (version, h, w, c, count) == (1, 16, 16, 3, 30)
    mean_pixel = np.frombuffer(raw[40:40 + 8 * c], "<f8")
    planes = np.frombuffer(raw[40 + 8 * c:], "<f8").reshape(c, h, w)
    assert len(raw) == 40 + 8 * c + 8 * c * h * w

    # Independent recomputation: IDX bytes -> [0,1] -> 3 channels -> [-1,1].
    x = read_idx_images(tiny_experiment / "tr-img") / 255.0 * 2.0 - 1.0
    f = np.fft.fft2(x)
    expect = np.real(np.fft.ifft2(f * np.conj(f))).mean(axis=0)
    for ch in range(3):
        np.testing.assert_allclose(planes[ch], expect, atol=1e-9)
    assert np.all(mean_pixel >= -1) and np.all(mean_pixel <= 1)
    np.testing.assert_array_equal(src.mean_autocorr, planes)
    assert src.domain == "source" and tgt.domain == "target"

    again = dda.read_stats(tiny_experiment / "out" / "source_stats.bin", "source")
    np.testing.assert_array_equal(again.mean_autocorr, planes)
    dda.stats(tiny_experiment / "exp.conf")
    assert (tiny_experiment / "out" / "source_stats.bin").read_bytes() == raw


def test_run_reports_baseline_and_dda(tiny_experiment):
    a = dda.run(tiny_experiment / "exp.conf")
    b = dda.run(tiny_experiment / "exp.conf", out=tiny_experiment / "out2")
    assert a == b
    assert a["dda_target_test_acc"] is not None
    summary = (tiny_experiment / "out" / "summary.csv").read_text()
    assert summary.startswith("metric,value\n")
    assert summary == (tiny_experiment / "out2" / "summary.csv").read_text()
    base = dda.run(tiny_experiment / "exp.conf", out=tiny_experiment / "out3", use_dda=False)
    assert base["dda_target_test_acc"] is None
    assert not (tiny_experiment / "out3" / "source_stats.bin").exists()


def test_missing_seed_is_a_config_error(tiny_experiment):
    conf = tiny_experiment / "exp.conf"
    conf.write_text(conf.read_text().replace("seed = 11\n", ""))
    with pytest.raises(dda.ConfigError):
        dda.run(conf)


def test_bundled_sample_loads():
    import os

    data_dir = Path(os.environ.get("DDA_DATA_DIR", Path(__file__).resolve().parents[2] / "data" / "mnist5k"))
    images, labels = dda.load_idx(data_dir / "test-images-idx3-ubyte", data_dir / "test-labels-idx1-ubyte")
    assert images.shape == (1000, 1, 28, 28)
    assert sorted(set(labels)) == list(range(10))
    assert 0.0 <= images.min() and images.max() <= 1.0

import struct

import numpy as np
import pytest

from masksc import data_io
from masksc.data_io import (
    Dataset,
    generate_synthetic_subspaces,
    load_affinity,
    load_csv,
    load_idx,
    read_pgm,
    render_heatmap,
    save_affinity,
    save_csv,
    write_idx,
)
from masksc.errors import FormatError, InvalidInputError


def _idx_fixture(tmp_path, images, labels):
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    write_idx(ip, images)
    write_idx(lp, labels)
    return ip, lp


class TestIdx:
    def test_round_trip_small(self, tmp_path):
        images = np.array([[[0, 255], [128, 64]], [[1, 2], [3, 4]],
                           [[9, 9], [9, 9]], [[255, 0], [0, 255]]], dtype=np.uint8)
        ip, lp = _idx_fixture(tmp_path, images, np.array([3, 1, 3, 7], dtype=np.uint8))
        raw = ip.read_bytes()
        assert struct.unpack(">I", raw[:4])[0] == 0x00000803
        ds = load_idx(ip, lp)
        assert ds.X.shape == (4, 4)
        assert ds.X.min() >= 0 and ds.X.max() <= 1
        np.testing.assert_allclose(ds.X[:, 0], np.array([0, 255, 128, 64]) / 255)
        assert ds.truth.tolist() == [1, 0, 1, 2] and ds.K == 3

    def test_subsample(self, tmp_path):
        labels = np.arange(10_000) % 10
        images = np.zeros((10_000, 2, 2), dtype=np.uint8)
        images[:, 0, 0] = labels  # pixel encodes the label
        ip, lp = _idx_fixture(tmp_path, images, labels.astype(np.uint8))
        ds = load_idx(ip, lp, subsample=1000, seed=5)
        assert ds.n == 1000
        np.testing.assert_allclose(ds.X[0] * 255, ds.truth)
        again = load_idx(ip, lp, subsample=1000, seed=5)
        np.testing.assert_array_equal(ds.X, again.X)
        other = load_idx(ip, lp, subsample=1000, seed=6)
        assert not np.array_equal(ds.X, other.X)

    def test_bad_magic(self, tmp_path):
        ip, lp = _idx_fixture(tmp_path, np.zeros((2, 2, 2)), np.zeros(2))
        with pytest.raises(FormatError, match="offset 0"):
            load_idx(lp, ip)

    def test_truncated(self, tmp_path):
        ip, lp = _idx_fixture(tmp_path, np.zeros((3, 2, 2)), np.array([0, 1, 2]))
        ip.write_bytes(ip.read_bytes()[:-2])
        with pytest.raises(FormatError, match="truncated"):
            load_idx(ip, lp)
        ip.write_bytes(b"\x00\x00")
        with pytest.raises(FormatError):
            load_idx(ip, lp)

    def test_count_mismatch(self, tmp_path):
        ip, lp = _idx_fixture(tmp_path, np.zeros((3, 2, 2)), np.array([0, 1]))
        with pytest.raises(FormatError, match="3 images but 2 labels"):
            load_idx(ip, lp)


class TestCsv:
    def test_remap(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("1.0,2.0,5\n3.0,4.0,5\n5.0,6.0,7\n")
        ds = load_csv(p)
        assert ds.K == 2 and ds.truth.tolist() == [0, 0, 1]
        np.testing.assert_array_equal(ds.X, [[1, 3, 5], [2, 4, 6]])
        first = load_csv(p, label_column=0)
        assert first.X.shape == (2, 3)

    def test_round_trip(self, tmp_path, rng):
        ds = Dataset(X=rng.standard_normal((6, 9)), truth=np.arange(9) % 3, name="r", K=3)
        p = tmp_path / "r.csv"
        save_csv(p, ds)
        back = load_csv(p)
        assert np.array_equal(back.X, ds.X) and np.array_equal(back.truth, ds.truth)

    @pytest.mark.parametrize("text,msg", [
        ("", "no data rows"),
        ("1,2,0\n3,0\n", "row 1"),
        ("1,x,0\n", "row 0"),
    ])
    def test_errors(self, tmp_path, text, msg):
        p = tmp_path / "bad.csv"
        p.write_text(text)
        with pytest.raises(FormatError, match=msg):
            load_csv(p)


class TestSynthetic:
    def test_lines_without_noise(self):
        ds = generate_synthetic_subspaces(2, 1, 2, 5, sigma=0.0, seed=1)
        for k, B in enumerate(ds.bases):
            pts = ds.X[:, ds.truth == k]
            # 2-D cross product with the basis vector vanishes on the line
            cross = pts[0] * B[1, 0] - pts[1] * B[0, 0]
            assert np.abs(cross).max() < 1e-12

    def test_bases_orthonormal_independent(self):
        ds = generate_synthetic_subspaces(5, 3, 30, 4, sigma=0.01, seed=2)
        for B in ds.bases:
            assert np.abs(B.T @ B - np.eye(3)).max() <= 1e-10
        assert np.linalg.matrix_rank(np.hstack(ds.bases)) == 15
        np.testing.assert_allclose(np.linalg.norm(ds.X, axis=0), 1.0)

    def test_deterministic_and_shuffle(self):
        a = generate_synthetic_subspaces(3, 2, 10, 6, 0.1, seed=3, shuffle=True)
        b = generate_synthetic_subspaces(3, 2, 10, 6, 0.1, seed=3, shuffle=True)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.truth, b.truth)
        assert not np.array_equal(a.truth, np.sort(a.truth))

    def test_rejects_dependent_setup(self):
        with pytest.raises(InvalidInputError):
            generate_synthetic_subspaces(4, 3, 10, 5)


def test_dataset_invariants():
    with pytest.raises(InvalidInputError):
        Dataset(X=np.ones((2, 3)), truth=[0, 1], name="x", K=2)
    with pytest.raises(InvalidInputError):
        Dataset(X=np.ones((2, 3)), truth=[0, 2, 2], name="x", K=2)


def test_preprocess(rng):
    ds = Dataset(X=rng.uniform(size=(20, 8)), truth=np.arange(8) % 2, name="x", K=2)
    out = data_io.preprocess(ds, normalize=True, pca=5)
    assert out.X.shape == (5, 8)
    np.testing.assert_allclose(np.linalg.norm(out.X, axis=0), 1.0)


class TestAffinityFile:
    def test_round_trip(self, tmp_path, rng):
        Z = rng.standard_normal((10, 10))
        p = tmp_path / "z.mscz"
        save_affinity(Z, p)
        raw = p.read_bytes()
        assert raw[:4] == b"MSCZ" and len(raw) == 4 + 4 + 8 + 800
        assert np.array_equal(load_affinity(p), Z)

    def test_rejects_empty(self, tmp_path):
        with pytest.raises(InvalidInputError):
            save_affinity(np.zeros((0, 0)), tmp_path / "e.mscz")

    def test_tampered(self, tmp_path):
        p = tmp_path / "z.mscz"
        save_affinity(np.eye(3), p)
        raw = bytearray(p.read_bytes())
        raw[0:4] = b"XXXX"
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            load_affinity(p)
        save_affinity(np.eye(3), p)
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(FormatError):
            load_affinity(p)
        save_affinity(np.eye(3), p)
        raw = bytearray(p.read_bytes())
        raw[4] = 9
        p.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            load_affinity(p)


class TestHeatmap:
    def test_zero_is_black(self, tmp_path):
        p = tmp_path / "z.pgm"
        render_heatmap(np.zeros((5, 5)), p)
        assert p.read_bytes().startswith(b"P5\n5 5\n255\n")
        assert read_pgm(p).max() == 0

    def test_blocks_visible(self, tmp_path):
        ds = generate_synthetic_subspaces(3, 2, 12, 10, 0.0, seed=0, shuffle=True)
        truth = ds.truth
        same = truth[:, None] == truth[None, :]
        r = np.random.default_rng(1)
        Z = np.where(same, r.uniform(0.2, 1, same.shape), r.uniform(0, 0.05, same.shape))
        p = tmp_path / "b.pgm"
        render_heatmap(Z, p, order=truth)
        img = read_pgm(p).astype(float)
        sorted_truth = np.sort(truth)
        inside = sorted_truth[:, None] == sorted_truth[None, :]
        assert img[inside].mean() > 4 * img[~inside].mean()

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            render_heatmap(np.eye(3), tmp_path / "missing" / "x.pgm")

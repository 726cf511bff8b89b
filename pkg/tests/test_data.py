import numpy as np
import pytest

from wflmc.experiments.config import THETA_STAR
from wflmc.experiments.data import (IdxFormatError, PcaProjection, balanced_indices, fit_pca, generate_synthetic,
                                    load_idx_and_pca, read_idx, write_idx)
from wflmc.model import GaussianLinRegModel


def _fake_images(tmp_path, n_per=20, classes=3, side=4, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(classes), n_per).astype(np.uint8)
    imgs = rng.integers(0, 256, (labels.size, side, side)).astype(np.uint8)
    write_idx(tmp_path / "img.idx", imgs)
    write_idx(tmp_path / "lab.idx", labels)
    return tmp_path / "img.idx", tmp_path / "lab.idx", imgs, labels


class TestSynthetic:
    def test_reproducible(self):
        a, b = generate_synthetic(seed=3), generate_synthetic(seed=3)
        np.testing.assert_array_equal(a.covariates, b.covariates)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.num_samples == 1200 and a.num_devices == 30 and a.dim == 5

    def test_noiseless_consistency(self):
        errs = [np.linalg.norm(GaussianLinRegModel(generate_synthetic(N, noise=0.0, K=10)).exact_posterior().mean
                               - np.array(THETA_STAR)) for N in (50, 500, 5000)]
        assert errs[0] > errs[1] > errs[2]

    def test_bad_theta(self):
        with pytest.raises(ValueError):
            generate_synthetic(m=3)


class TestIdx:
    def test_round_trip(self, tmp_path):
        a = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        write_idx(tmp_path / "a", a)
        np.testing.assert_array_equal(read_idx(tmp_path / "a"), a)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"\x01\x00\x08\x01\x00\x00\x00\x01\x05")
        with pytest.raises(IdxFormatError) as exc:
            read_idx(tmp_path / "x")
        assert exc.value.offset == 0

    def test_truncated(self, tmp_path):
        write_idx(tmp_path / "a", np.zeros((3, 3), dtype=np.uint8))
        raw = (tmp_path / "a").read_bytes()
        (tmp_path / "a").write_bytes(raw[:-2])
        with pytest.raises(IdxFormatError) as exc:
            read_idx(tmp_path / "a")
        assert exc.value.offset == len(raw) - 2

    def test_wrong_kind(self, tmp_path):
        write_idx(tmp_path / "a", np.zeros(3, dtype=np.uint8))
        with pytest.raises(IdxFormatError):
            read_idx(tmp_path / "a", expected_magic=0x803)


class TestPca:
    def test_full_rank_lossless(self):
        X = np.random.default_rng(0).random((40, 16))
        proj = fit_pca(X, 16)
        np.testing.assert_allclose(proj.inverse(proj.transform(X)), X, atol=1e-6)

    def test_scores_decorrelated(self):
        X = np.random.default_rng(1).random((200, 10)) @ np.random.default_rng(2).random((10, 10))
        Z = fit_pca(X, 5).transform(X)
        C = np.cov(Z.T)
        off = C - np.diag(np.diag(C))
        assert np.abs(off).max() < 1e-6 * np.trace(C)

    def test_save_load(self, tmp_path):
        proj = fit_pca(np.random.default_rng(0).random((10, 4)), 2)
        proj.save(tmp_path / "p.npz")
        back = PcaProjection.load(tmp_path / "p.npz")
        np.testing.assert_array_equal(back.components, proj.components)

    def test_balanced(self):
        labels = np.repeat(np.arange(3), 10)
        idx = balanced_indices(labels, 4, 3)
        np.testing.assert_array_equal(np.bincount(labels[idx]), [4, 4, 4])
        with pytest.raises(ValueError):
            balanced_indices(labels, 11, 3)

    def test_load_pipeline(self, tmp_path):
        img, lab, _, _ = _fake_images(tmp_path)
        ds, proj = load_idx_and_pca(img, lab, target_dim=5, per_class=10, classes=3, K=3,
                                    projection_path=tmp_path / "proj.npz")
        assert ds.num_samples == 30 and ds.dim == 5
        np.testing.assert_array_equal(np.bincount(ds.labels.astype(int)), [10, 10, 10])
        assert (tmp_path / "proj.npz").exists()
        ds2, _ = load_idx_and_pca(img, lab, target_dim=5, per_class=10, classes=3, K=3, projection=proj)
        np.testing.assert_array_equal(ds2.covariates, ds.covariates)

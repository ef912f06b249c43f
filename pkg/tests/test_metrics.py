import numpy as np
import pytest
from hypothesis import given, strategies as st

from hvla import corpus, metrics
from hvla.errors import DegenerateError, InsufficientLengthError, ShapeError
from hvla.motion import MotionSequence


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def clip_frames(T=10, seed=0):
    return corpus.generate_clip("walk", {"T": T}, seed=seed).sequence.frames


@given(st.integers(0, 10_000), st.floats(0.2, 5.0))
def test_pa_mpjpe_is_similarity_invariant(seed, s):
    rng = np.random.default_rng(seed)
    G = clip_frames(6)
    P = G + rng.normal(0, 0.02, G.shape)
    R, t = random_rotation(rng), rng.normal(size=3)
    base = metrics.mpjpe(P, G, "procrustes")
    moved = metrics.mpjpe(s * P @ R.T + t, G, "procrustes")
    assert abs(moved - base) <= 1e-9 * max(1.0, base)


def test_uniform_offset():
    G = clip_frames(12)
    P = G + np.array([0.006, 0.008, 0.0])  # 10 mm
    assert abs(metrics.mpjpe(P, G) - 10.0) < 1e-6
    assert metrics.mpjpe(P, G, "procrustes") < 1e-6


def test_procrustes_recovers_transform():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(15, 3))
    R = random_rotation(rng)
    s, R2, t = metrics.procrustes_align(X, 2.5 * X @ R.T + [1, 2, 3])
    assert abs(s - 2.5) < 1e-12
    np.testing.assert_allclose(R2, R, atol=1e-12)
    np.testing.assert_allclose(t, [1, 2, 3], atol=1e-12)


def test_procrustes_rejects_degenerate_points():
    line = np.outer(np.arange(15.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateError):
        metrics.procrustes_align(line, line)
    with pytest.raises(DegenerateError):
        metrics.procrustes_align(np.ones((15, 3)), np.ones((15, 3)))


def test_shape_checks():
    with pytest.raises(ShapeError):
        metrics.mpjpe(np.zeros((2, 15, 3)), np.zeros((3, 15, 3)))
    with pytest.raises(InsufficientLengthError):
        metrics.vel_accel_error(np.zeros((2, 15, 3)), np.zeros((2, 15, 3)), 30)


def test_velocity_error_of_constant_offset_is_zero():
    G = clip_frames(8)
    assert metrics.vel_accel_error(G + 0.3, G, 30) == pytest.approx((0.0, 0.0), abs=1e-9)


def test_velocity_error_of_linear_drift():
    G = clip_frames(8)
    drift = np.arange(8)[:, None, None] * np.array([0.001, 0, 0])  # 1 mm per frame
    v, a = metrics.vel_accel_error(G + drift, G, 30)
    assert v == pytest.approx(30.0) and a == pytest.approx(0.0, abs=1e-6)


def test_gaussian_fid_closed_form():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(10_000, 4))
    B = rng.normal(size=(10_000, 4)) + [1.0, 0, 0, 0]
    assert abs(metrics.fid(A, B) - 1.0) < 0.05


def test_fid_of_identical_sets_is_zero():
    X = np.random.default_rng(2).normal(size=(200, 5))
    assert metrics.fid(X, X) == pytest.approx(0.0, abs=1e-8)


def test_fid_warns_when_undersampled():
    X = np.random.default_rng(3).normal(size=(4, 8))
    with pytest.warns(RuntimeWarning):
        metrics.fid(X, X)


@given(st.integers(0, 10_000), st.integers(1, 12))
def test_matrix_sqrt_reconstructs(seed, n):
    M = np.random.default_rng(seed).normal(size=(n, n + 2))
    A = M @ M.T
    r = metrics.matrix_sqrt_psd(A)
    assert np.linalg.norm(r @ r - A) <= 1e-6 * np.linalg.norm(A)
    np.testing.assert_allclose(r, r.T, atol=1e-10)


def test_matrix_sqrt_rejects_asymmetric():
    with pytest.raises(ValueError):
        metrics.matrix_sqrt_psd(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_diversity():
    X = np.zeros((10, 3))
    X[::2] = 1.0
    with pytest.warns(RuntimeWarning):
        d = metrics.diversity(X, pairs=200)
    assert 0.0 <= d <= np.sqrt(3)
    Y = np.random.default_rng(0).normal(size=(1000, 3))
    assert metrics.diversity(Y, 200, seed=4) == metrics.diversity(Y, 200, seed=4)


def test_feature_extractor_modes():
    clips = [corpus.generate_clip(f, {"T": 20}, seed=i) for i, f in enumerate(corpus.FAMILIES)]
    rp = metrics.FeatureExtractor(dim=8)
    assert rp(clips).shape == (6, 8)
    ae = metrics.FeatureExtractor(mode="trained-autoencoder", dim=4).fit(clips)
    assert ae(clips).shape == (6, 4)
    with pytest.raises(ValueError):
        metrics.FeatureExtractor(mode="trained-autoencoder")(clips)


def test_evaluate_identity_and_table():
    seqs = [MotionSequence(30, clip_frames(10, s)) for s in range(4)]
    rep = metrics.evaluate(seqs, seqs, diversity_pairs=2)
    assert rep.e_mpjpe_g == 0.0 and rep.e_vel == 0.0 and rep.e_accel == 0.0
    assert rep.e_mpjpe_pa < 1e-9 and rep.fid == pytest.approx(0.0, abs=1e-6)
    table = metrics.format_table(rep)
    assert table.splitlines()[0].startswith("E_mpjpe^g (mm)")

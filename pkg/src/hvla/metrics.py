"""Motion-quality metrics: MPJPE (global and Procrustes-aligned), velocity and
acceleration error, FID and Diversity.

Positions are meters on input; reported errors are millimeters.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateError, InsufficientLengthError, ShapeError
from .motion import MotionSequence
from .rng import make_rng

log = logging.getLogger(__name__)


def _frames(x):
    return x.frames if isinstance(x, MotionSequence) else np.asarray(x, dtype=np.float64)


def procrustes_align(X, Y):
    """Similarity transform ``(s, R, t)`` minimising ``‖s X Rᵀ + t − Y‖_F``.

    Rows are points.  ``R`` is a proper rotation (reflections are folded into
    the smallest singular direction).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise ShapeError(f"expected two N x 3 arrays, got {X.shape} and {Y.shape}")
    if X.shape[0] < 3:
        raise DegenerateError("need at least 3 points")
    mx, my = X.mean(0), Y.mean(0)
    X0, Y0 = X - mx, Y - my
    sx = np.linalg.svd(X0, compute_uv=False)
    if sx[0] <= 0 or sx[1] <= 1e-12 * sx[0]:
        raise DegenerateError("source points are collinear or coincident")
    var_x = np.sum(X0 * X0)
    U, S, Vt = np.linalg.svd(Y0.T @ X0)
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.diag([1.0, 1.0, d if d != 0 else 1.0])
    R = U @ D @ Vt
    s = float(np.trace(np.diag(S) @ D) / var_x)
    t = my - s * mx @ R.T
    return s, R, t


def apply_similarity(X, s, R, t):
    return s * np.asarray(X) @ R.T + t


def mpjpe(pred, gt, aligned: str = "none") -> float:
    """Mean per-joint Euclidean error in mm; ``aligned="procrustes"`` aligns each frame first."""
    P, G = _frames(pred), _frames(gt)
    if P.shape != G.shape:
        raise ShapeError(f"shape mismatch {P.shape} vs {G.shape}")
    if aligned == "procrustes":
        P = np.stack([apply_similarity(p, *procrustes_align(p, g)) for p, g in zip(P, G)])
    elif aligned != "none":
        raise ValueError(f"aligned must be 'none' or 'procrustes', got {aligned!r}")
    return float(np.mean(np.linalg.norm(P - G, axis=-1)) * 1000.0)


def vel_accel_error(pred, gt, fps: int) -> tuple[float, float]:
    """(mm/s, mm/s²) mean distances between finite-difference velocities / accelerations."""
    P, G = _frames(pred), _frames(gt)
    if P.shape != G.shape:
        raise ShapeError(f"shape mismatch {P.shape} vs {G.shape}")
    if P.shape[0] < 3:
        raise InsufficientLengthError("velocity/acceleration error needs T >= 3")
    vp, vg = np.diff(P, axis=0) * fps, np.diff(G, axis=0) * fps
    ap, ag = np.diff(vp, axis=0) * fps, np.diff(vg, axis=0) * fps
    e_vel = np.mean(np.linalg.norm(vp - vg, axis=-1)) * 1000.0
    e_acc = np.mean(np.linalg.norm(ap - ag, axis=-1)) * 1000.0
    return float(e_vel), float(e_acc)


def matrix_sqrt_psd(A, sym_tol: float = 1e-8) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"expected a square matrix, got {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > sym_tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    w = np.clip(w, 0.0, None)  # eigenvalues down to -1e-8 are rounding noise
    return (V * np.sqrt(w)) @ V.T


def fid(features_real, features_gen) -> float:
    """Fréchet distance between Gaussian fits of two feature sets."""
    A = np.asarray(features_real, dtype=np.float64)
    B = np.asarray(features_gen, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ShapeError(f"feature dims differ: {A.shape} vs {B.shape}")
    F = A.shape[1]
    if A.shape[0] <= F or B.shape[0] <= F:
        warnings.warn(f"FID with n={A.shape[0]}, m={B.shape[0]} samples for F={F} features is ill-conditioned",
                      RuntimeWarning, stacklevel=2)
    mu1, mu2 = A.mean(0), B.mean(0)
    s1 = np.atleast_2d(np.cov(A, rowvar=False))
    s2 = np.atleast_2d(np.cov(B, rowvar=False))
    r2 = matrix_sqrt_psd(s2)
    middle = r2 @ s1 @ r2
    cross = matrix_sqrt_psd(0.5 * (middle + middle.T))
    diff = mu1 - mu2
    return float(max(0.0, diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * np.trace(cross)))


def diversity(features, pairs: int = 200, seed: int = 0) -> float:
    """Mean distance between two disjoint seeded subsets of ``pairs`` rows, matched index-wise."""
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ShapeError("diversity needs at least 2 samples")
    if n < 2 * pairs:
        warnings.warn(f"only {n} samples; reducing pairs from {pairs} to {n // 2}", RuntimeWarning, stacklevel=2)
        pairs = n // 2
    perm = make_rng(seed).permutation(n)
    a, b = perm[:pairs], perm[pairs:2 * pairs]
    return float(np.mean(np.linalg.norm(X[a] - X[b], axis=1)))


def resample(frames, length: int = 64) -> np.ndarray:
    """Linear interpolation along time to ``length`` frames."""
    frames = np.asarray(frames, dtype=np.float64)
    T = frames.shape[0]
    if T == 1:
        return np.repeat(frames, length, axis=0)
    src = np.linspace(0.0, T - 1, length)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, T - 1)
    w = (src - lo)[:, None, None]
    return (1 - w) * frames[lo] + w * frames[hi]


@dataclass
class FeatureExtractor:
    """Fixed clip embedding for FID/Diversity.

    ``random-projection``: a seeded Gaussian projection of the flattened,
    root-centered, 64-frame clip.  ``trained-autoencoder``: the optimal
    linear autoencoder (top-F principal directions) fitted on reference clips.
    """

    mode: str = "random-projection"
    dim: int = 64
    seed: int = 0
    length: int = 64
    weights: np.ndarray | None = None
    mean: np.ndarray | None = None

    def __post_init__(self):
        n_in = self.length * 45
        if self.mode == "random-projection" and self.weights is None:
            self.weights = make_rng(self.seed).normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, self.dim))
            self.mean = np.zeros(n_in)
        elif self.mode not in ("random-projection", "trained-autoencoder"):
            raise ValueError(f"unknown extractor mode {self.mode!r}")

    def _flatten(self, clips):
        rows = []
        for c in clips:
            f = _frames(c.sequence if hasattr(c, "sequence") else c)
            f = f - f[:, :1, :]
            rows.append(resample(f, self.length).reshape(-1))
        return np.stack(rows)

    def fit(self, clips):
        if self.mode != "trained-autoencoder":
            return self
        X = self._flatten(clips)
        self.mean = X.mean(0)
        _, _, Vt = np.linalg.svd(X - self.mean, full_matrices=False)
        k = min(self.dim, Vt.shape[0])
        W = np.zeros((X.shape[1], self.dim))
        W[:, :k] = Vt[:k].T
        self.weights = W
        return self

    def __call__(self, clips) -> np.ndarray:
        if self.weights is None:
            raise ValueError("trained-autoencoder extractor must be fit() first")
        return (self._flatten(clips) - self.mean) @ self.weights


@dataclass
class MetricsReport:
    e_mpjpe_g: float
    e_mpjpe_pa: float
    e_vel: float
    e_accel: float
    fid: float | None
    diversity: float | None
    n_pairs: int
    n_gen: int
    seeds: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


COLUMNS = (("e_mpjpe_g", "E_mpjpe^g (mm)"), ("e_mpjpe_pa", "E_mpjpe^pa (mm)"),
           ("e_accel", "E_accel (mm/s^2)"), ("e_vel", "E_vel (mm/s)"),
           ("fid", "FID"), ("diversity", "Diversity"))


def evaluate(preds, gts, extractor: FeatureExtractor | None = None, diversity_pairs: int = 200,
             seed: int = 0) -> MetricsReport:
    """Pairwise kinematic errors averaged over clips, plus FID/Diversity on clip features."""
    if len(preds) != len(gts) or not preds:
        raise ShapeError("need equally many (>0) predicted and ground-truth clips")
    g, pa, ve, ac, frames_total = [], [], [], [], 0
    for p, q in zip(preds, gts):
        P, G = _frames(p), _frames(q)
        n = P.shape[0]
        fps = (p.fps if isinstance(p, MotionSequence) else 30)
        g.append(mpjpe(P, G) * n)
        pa.append(mpjpe(P, G, "procrustes") * n)
        if n >= 3:
            v, a = vel_accel_error(P, G, fps)
            ve.append(v * n)
            ac.append(a * n)
        frames_total += n
    long_frames = sum(_frames(p).shape[0] for p in preds if _frames(p).shape[0] >= 3)
    extractor = extractor or FeatureExtractor(seed=seed)
    fid_v = div_v = None
    if len(preds) >= 2:
        fr, fg = extractor(gts), extractor(preds)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            fid_v = fid(fr, fg)
            div_v = diversity(fg, diversity_pairs, seed)
    return MetricsReport(
        e_mpjpe_g=sum(g) / frames_total, e_mpjpe_pa=sum(pa) / frames_total,
        e_vel=sum(ve) / long_frames if long_frames else 0.0,
        e_accel=sum(ac) / long_frames if long_frames else 0.0,
        fid=fid_v, diversity=div_v, n_pairs=len(preds), n_gen=len(preds),
        seeds={"metrics": seed, "extractor": extractor.seed})


def format_table(report: MetricsReport) -> str:
    d = report.to_dict()
    head = " | ".join(name for _, name in COLUMNS)
    vals = " | ".join("-" if d[k] is None else f"{d[k]:.3f}" for k, _ in COLUMNS)
    return head + "\n" + vals

"""Forward kinematics over a configurable skeleton and Adam-based retargeting.

A pose vector is ``[root_translation(3), angles(DoF)]``.  Each joint owns
0-3 rotation axes applied in declared order (first axis outermost), so the
local rotation of a joint with axes ``("z", "y")`` is ``Rz(a0) @ Ry(a1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .motion import JOINT_NAMES, MotionSequence
from .optim import Adam

_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int
    offset: tuple
    axes: tuple = ()
    limits: tuple = ()


@dataclass
class RobotSkeleton:
    joints: list
    end_effectors: list = field(default_factory=list)  # (robot joint name, human keypoint name)
    name: str = "skeleton"

    def __post_init__(self):
        names = set()
        for i, j in enumerate(self.joints):
            if j.name in names:
                raise ConfigError(f"duplicate joint name {j.name!r}")
            names.add(j.name)
            if i == 0 and j.parent != -1:
                raise ConfigError("joint 0 must be the root (parent -1)")
            if i > 0 and not (0 <= j.parent < i):
                raise ConfigError(f"joint {j.name!r} has parent {j.parent}; parents must precede children")
            if not np.all(np.isfinite(j.offset)) or len(j.offset) != 3:
                raise ConfigError(f"joint {j.name!r} has a bad offset")
            for a in j.axes:
                if a not in _AXES:
                    raise ConfigError(f"joint {j.name!r}: unknown axis {a!r}")
            if j.limits and len(j.limits) != len(j.axes):
                raise ConfigError(f"joint {j.name!r}: one limit pair per axis required")
        for robot, human in self.end_effectors:
            if robot not in names:
                raise ConfigError(f"end effector references unknown robot joint {robot!r}")
            if human not in JOINT_NAMES:
                raise ConfigError(f"end effector references unknown keypoint {human!r}")
        self._build_tables()

    def _build_tables(self):
        self.parents = np.array([j.parent for j in self.joints])
        self.offsets = np.array([j.offset for j in self.joints], dtype=np.float64)
        dof_joint, dof_axis, lo, hi = [], [], [], []
        for i, j in enumerate(self.joints):
            for m, a in enumerate(j.axes):
                dof_joint.append(i)
                dof_axis.append(a)
                lim = j.limits[m] if j.limits else (-math.inf, math.inf)
                lo.append(lim[0])
                hi.append(lim[1])
        self.dof_joint = np.array(dof_joint, dtype=int)
        self.dof_axis = dof_axis
        self.lower = np.array(lo, dtype=np.float64)
        self.upper = np.array(hi, dtype=np.float64)
        n = len(self.joints)
        # desc[i, k]: k is a strict descendant of i
        desc = np.zeros((n, n), dtype=bool)
        for k in range(n):
            p = self.joints[k].parent
            while p >= 0:
                desc[p, k] = True
                p = self.joints[p].parent
        self.descendant = desc
        self.index = {j.name: i for i, j in enumerate(self.joints)}

    @property
    def dof(self) -> int:
        return len(self.dof_joint)

    @property
    def num_params(self) -> int:
        return 3 + self.dof

    def rest_pose(self) -> np.ndarray:
        return np.zeros(self.num_params)

    @classmethod
    def from_dict(cls, d: dict) -> "RobotSkeleton":
        try:
            joints = [Joint(name=j["name"], parent=int(j["parent"]),
                            offset=tuple(float(v) for v in j["offset"]),
                            axes=tuple(j.get("axes", ())),
                            limits=tuple(tuple(float(v) for v in lim) for lim in j.get("limits", ())))
                      for j in d["joints"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed skeleton: {exc}") from exc
        ee = [(e["robot"], e["human"]) for e in d.get("end_effectors", [])]
        return cls(joints, ee, d.get("name", "skeleton"))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "joints": [{"name": j.name, "parent": j.parent, "offset": list(j.offset),
                        "axes": list(j.axes), "limits": [list(l) for l in j.limits]}
                       for j in self.joints],
            "end_effectors": [{"robot": r, "human": h} for r, h in self.end_effectors],
        }

    @classmethod
    def load(cls, path) -> "RobotSkeleton":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def load_builtin(name: str) -> RobotSkeleton:
    """``"human15"`` or ``"g1_like"``."""
    fname = {"human15": "human15_skeleton.json", "g1_like": "g1_like_skeleton.json"}[name]
    text = resources.files("hvla.data").joinpath(fname).read_text()
    return RobotSkeleton.from_dict(json.loads(text))


def axis_rotation(axis, angle):
    """Rodrigues rotation about a unit axis, batched over ``angle``."""
    a = np.asarray(_AXES[axis] if isinstance(axis, str) else axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle)[..., None, None], np.sin(angle)[..., None, None]
    K = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return c * np.eye(3) + s * K + (1.0 - c) * np.outer(a, a)


def _fk(skel: RobotSkeleton, pose, want_axes=False):
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape[-1] != skel.num_params:
        raise ShapeError(f"pose needs {skel.num_params} params, got {pose.shape[-1]}")
    batch = pose.shape[:-1]
    n = len(skel.joints)
    pos = np.empty(batch + (n, 3))
    rot = np.empty(batch + (n, 3, 3))
    axes_w = np.empty(batch + (skel.dof, 3)) if want_axes else None
    d = 0
    for i, j in enumerate(skel.joints):
        if j.parent < 0:
            prot = np.broadcast_to(np.eye(3), batch + (3, 3))
            pos[..., i, :] = pose[..., :3] + skel.offsets[i]
        else:
            prot = rot[..., j.parent, :, :]
            pos[..., i, :] = pos[..., j.parent, :] + prot @ skel.offsets[i]
        r = prot
        for a in j.axes:
            if want_axes:
                axes_w[..., d, :] = r @ np.asarray(_AXES[a])
            r = r @ axis_rotation(a, pose[..., 3 + d])
            d += 1
        rot[..., i, :, :] = r
    return pos, rot, axes_w


def forward_kinematics(skel: RobotSkeleton, pose) -> np.ndarray:
    """World joint positions, shape ``pose.shape[:-1] + (num_joints, 3)``."""
    return _fk(skel, pose)[0]


def fk_jacobian(skel: RobotSkeleton, pose) -> tuple[np.ndarray, np.ndarray]:
    """Positions (J, 3) and Jacobian (J, 3, 3 + DoF) for a single pose."""
    pos, _, axes_w = _fk(skel, pose, want_axes=True)
    n = len(skel.joints)
    jac = np.zeros((n, 3, skel.num_params))
    jac[:, :, :3] = np.eye(3)
    if skel.dof:
        pivots = pos[skel.dof_joint]                          # (DoF, 3)
        lever = pos[None, :, :] - pivots[:, None, :]          # (DoF, J, 3)
        cols = np.cross(axes_w[:, None, :], lever)            # (DoF, J, 3)
        cols *= skel.descendant[skel.dof_joint][:, :, None]
        jac[:, :, 3:] = cols.transpose(1, 2, 0)
    return pos, jac


@dataclass
class RetargetOptions:
    lr: float = 0.05
    iters: int = 300
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    lambda_limits: float = 0.1
    limit_sharpness: float = 20.0
    tol: float = 1e-8
    patience: int = 10
    refine_iters: int = 20      # damped Gauss-Newton polish after Adam; 0 = pure Adam
    refine_damping: float = 1e-6


@dataclass
class RetargetReport:
    residual_mm: float
    iterations: int
    converged: bool
    initial_objective: float
    final_objective: float


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class _Objective:
    """Σ‖FK(θ)_ee − keypoint‖² + λ·Σ softplus(k·violation)/k [+ λ_s‖θ − θ_prev‖²]."""

    def __init__(self, skel, keypoints, opt, prev=None, smooth=0.0):
        self.skel = skel
        self.opt = opt
        kp = np.asarray(keypoints, dtype=np.float64)
        if kp.shape != (15, 3):
            raise ShapeError(f"keypoints must be 15 x 3, got {kp.shape}")
        if not skel.end_effectors:
            raise ConfigError("skeleton has no end effectors")
        self.robot_idx = np.array([skel.index[r] for r, _ in skel.end_effectors])
        self.targets = kp[[JOINT_NAMES.index(h) for _, h in skel.end_effectors]]
        self.prev = prev
        self.smooth = smooth

    def __call__(self, theta, grad=True):
        skel, opt = self.skel, self.opt
        if grad:
            pos, jac = fk_jacobian(skel, theta)
        else:
            pos, jac = forward_kinematics(skel, theta), None
        diff = pos[self.robot_idx] - self.targets
        f = float(np.sum(diff * diff))
        g = np.einsum("ec,ecp->p", 2.0 * diff, jac[self.robot_idx]) if grad else None
        ang = theta[3:]
        k = opt.limit_sharpness
        if opt.lambda_limits and skel.dof:
            fin_hi = np.isfinite(skel.upper)
            fin_lo = np.isfinite(skel.lower)
            up = np.where(fin_hi, ang - skel.upper, -np.inf)
            dn = np.where(fin_lo, skel.lower - ang, -np.inf)
            f += opt.lambda_limits * float(np.sum(_softplus(k * up[fin_hi])) + np.sum(_softplus(k * dn[fin_lo]))) / k
            if grad:
                g[3:] += opt.lambda_limits * (np.where(fin_hi, _sigmoid(k * up), 0.0)
                                              - np.where(fin_lo, _sigmoid(k * dn), 0.0))
        if self.prev is not None and self.smooth:
            dp = theta - self.prev
            f += self.smooth * float(dp @ dp)
            if grad:
                g += 2.0 * self.smooth * dp
        if not math.isfinite(f):
            raise NumericError("retarget objective is not finite")
        return f, g, diff

    def gauss_newton(self, theta):
        """Gradient and a Gauss-Newton curvature approximation of the objective."""
        skel, opt = self.skel, self.opt
        f, g, diff = self(theta)
        _, jac = fk_jacobian(skel, theta)
        J = jac[self.robot_idx].reshape(-1, skel.num_params)
        H = 2.0 * J.T @ J
        k = opt.limit_sharpness
        if opt.lambda_limits and skel.dof:
            ang = theta[3:]
            curv = np.zeros(skel.dof)
            for bound, sign in ((skel.upper, 1.0), (skel.lower, -1.0)):
                fin = np.isfinite(bound)
                s = _sigmoid(k * sign * (ang - np.where(fin, bound, 0.0)))
                curv += np.where(fin, k * s * (1.0 - s), 0.0)
            H[3:, 3:] += opt.lambda_limits * np.diag(curv)
        if self.prev is not None and self.smooth:
            H += 2.0 * self.smooth * np.eye(skel.num_params)
        return f, g, H

    def residual_mm(self, theta):
        diff = forward_kinematics(self.skel, theta)[self.robot_idx] - self.targets
        return float(np.mean(np.linalg.norm(diff, axis=-1)) * 1000.0)


def _run_adam(obj, init, opt):
    theta = np.array(init, dtype=np.float64)
    f0, _, _ = obj(theta, grad=False)
    best, best_f = theta.copy(), f0
    if opt.iters <= 0:
        return theta, f0, f0, 0, False
    params = {"theta": theta}
    adam = Adam(params, lr=opt.lr, betas=opt.betas, eps=opt.eps)
    history = []
    converged = False
    it = 0
    for it in range(1, opt.iters + 1):
        f, g, _ = obj(params["theta"])
        if f < best_f:
            best, best_f = params["theta"].copy(), f
        history.append(best_f)
        if len(history) > opt.patience and history[-1 - opt.patience] - history[-1] < opt.tol:
            converged = True
            break
        adam.step(params, {"theta": g})
    f_last, _, _ = obj(params["theta"], grad=False)
    if f_last < best_f:
        best, best_f = params["theta"].copy(), f_last
    return best, f0, best_f, it, converged


def _refine(obj, theta, f, opt):
    """Levenberg-style polish: only steps that lower the objective are taken."""
    mu = opt.refine_damping
    for _ in range(opt.refine_iters):
        _, g, H = obj.gauss_newton(theta)
        scale = np.maximum(np.diag(H), 1e-12)
        while mu < 1e8:
            try:
                step = np.linalg.solve(H + mu * np.diag(scale), g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            cand = theta - step
            fc = obj(cand, grad=False)[0]
            if fc < f:
                theta, f, mu = cand, fc, max(mu * 0.1, 1e-12)
                break
            mu *= 10.0
        else:
            break
    return theta, f


def retarget_frame(keypoints, skel: RobotSkeleton, init=None, opt: RetargetOptions | None = None,
                   prev=None, smooth: float = 0.0):
    """Fit pose parameters so the skeleton's end effectors track ``keypoints``.

    The best iterate seen is returned, so the final objective never exceeds
    the initial one.
    """
    opt = opt or RetargetOptions()
    init = skel.rest_pose() if init is None else np.asarray(init, dtype=np.float64)
    obj = _Objective(skel, keypoints, opt, prev=prev, smooth=smooth)
    theta, f0, f1, iters, converged = _run_adam(obj, init, opt)
    if opt.iters > 0 and opt.refine_iters > 0:
        theta, f1 = _refine(obj, theta, f1, opt)
    report = RetargetReport(residual_mm=obj.residual_mm(theta), iterations=iters, converged=converged,
                            initial_objective=f0, final_objective=f1)
    return theta, report


def retarget_sequence(seq: MotionSequence, skel: RobotSkeleton, opt: RetargetOptions | None = None,
                      smooth: float = 0.0, warm_start: bool = True, init=None):
    """Per-frame retargeting; frame t starts from frame t-1's solution when ``warm_start``."""
    opt = opt or RetargetOptions()
    base = skel.rest_pose() if init is None else np.asarray(init, dtype=np.float64)
    out = np.empty((seq.num_frames, skel.num_params))
    reports = []
    prev = None
    for t in range(seq.num_frames):
        start = prev if (warm_start and prev is not None) else base
        theta, rep = retarget_frame(seq.frames[t], skel, start, opt, prev=prev,
                                    smooth=smooth if prev is not None else 0.0)
        out[t] = theta
        reports.append(rep)
        prev = theta
    return out, reports


def write_pose_csv(path, skel: RobotSkeleton, poses):
    names = ["root_x", "root_y", "root_z"] + [
        f"{skel.joints[j].name}_{a}" for j, a in zip(skel.dof_joint, skel.dof_axis)]
    with open(path, "w") as fh:
        fh.write("frame," + ",".join(names) + "\n")
        for t, row in enumerate(poses):
            fh.write(f"{t}," + ",".join(repr(float(v)) for v in row) + "\n")


def sequence_report(reports) -> dict:
    res = [r.residual_mm for r in reports]
    return {
        "frames": len(reports),
        "mean_residual_mm": float(np.mean(res)) if res else 0.0,
        "max_residual_mm": float(np.max(res)) if res else 0.0,
        "total_iterations": int(sum(r.iterations for r in reports)),
        "converged_frames": int(sum(r.converged for r in reports)),
        "per_frame": [{"residual_mm": r.residual_mm, "iterations": r.iterations, "converged": r.converged,
                       "initial_objective": r.initial_objective, "final_objective": r.final_objective}
                      for r in reports],
    }

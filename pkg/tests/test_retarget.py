import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hvla import corpus, retarget
from hvla.errors import ConfigError, ShapeError
from hvla.motion import JOINT_NAMES, MotionSequence


def two_link(with_root_anchor=True):
    joints = [
        retarget.Joint("base", -1, (0.0, 0.0, 0.0), ("z",)),
        retarget.Joint("elbow", 0, (1.0, 0.0, 0.0), ("z",)),
        retarget.Joint("tip", 1, (1.0, 0.0, 0.0)),
    ]
    ee = [("tip", "left_hand")] + ([("base", "pelvis")] if with_root_anchor else [])
    return retarget.RobotSkeleton(joints, ee, "two_link")


def keypoints(**where):
    kp = np.zeros((15, 3))
    for name, p in where.items():
        kp[JOINT_NAMES.index(name)] = p
    return kp


def test_rest_pose_sums_offsets():
    sk = retarget.load_builtin("human15")
    pos = retarget.forward_kinematics(sk, sk.rest_pose())
    for i, j in enumerate(sk.joints):
        want, k = np.zeros(3), i
        while k >= 0:
            want += sk.offsets[k]
            k = sk.joints[k].parent
        np.testing.assert_allclose(pos[i], want, atol=1e-15)


def test_planar_two_link_fk():
    pos = retarget.forward_kinematics(two_link(), np.array([0, 0, 0, math.pi / 2, 0.0]))
    np.testing.assert_allclose(pos[2], [0.0, 2.0, 0.0], atol=1e-12)


def fk_gradient_check(name="g1_like", seed=0, eps=1e-4):
    sk = retarget.load_builtin(name)
    pose = np.random.default_rng(seed).normal(0, 0.6, sk.num_params)
    _, jac = retarget.fk_jacobian(sk, pose)
    num = np.empty_like(jac)
    for p in range(sk.num_params):
        d = np.zeros(sk.num_params)
        d[p] = eps
        num[:, :, p] = (retarget.forward_kinematics(sk, pose + d) - retarget.forward_kinematics(sk, pose - d)) / (2 * eps)
    return float(np.max(np.abs(num - jac)) / max(1e-12, np.max(np.abs(num))))


@pytest.mark.parametrize("name", ["human15", "g1_like"])
def test_fk_jacobian_matches_finite_differences(name):
    assert fk_gradient_check(name) < 1e-4


@given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.integers(0, 1000))
def test_root_translation_equivariance(v, seed):
    sk = retarget.load_builtin("g1_like")
    pose = np.random.default_rng(seed).normal(0, 0.5, sk.num_params)
    moved = pose.copy()
    moved[:3] += v
    np.testing.assert_allclose(retarget.forward_kinematics(sk, moved),
                               retarget.forward_kinematics(sk, pose) + np.array(v), atol=1e-12)


def test_g1_like_has_24_dof_and_full_map():
    sk = retarget.load_builtin("g1_like")
    assert sk.dof == 24
    assert {h for _, h in sk.end_effectors} == set(JOINT_NAMES)


def test_skeleton_validation():
    good = two_link().to_dict()
    assert retarget.RobotSkeleton.from_dict(good).to_dict() == good
    bad = two_link().to_dict()
    bad["joints"][1]["parent"] = 2
    with pytest.raises(ConfigError):
        retarget.RobotSkeleton.from_dict(bad)
    bad = two_link().to_dict()
    bad["joints"][1]["axes"] = ["w"]
    with pytest.raises(ConfigError):
        retarget.RobotSkeleton.from_dict(bad)
    bad = two_link().to_dict()
    bad["end_effectors"][0]["human"] = "nose"
    with pytest.raises(ConfigError):
        retarget.RobotSkeleton.from_dict(bad)
    with pytest.raises(ShapeError):
        retarget.forward_kinematics(two_link(), np.zeros(4))


def test_two_link_reachable_target_matches_closed_form():
    d = 1.5
    target = np.array([d * math.cos(0.3), d * math.sin(0.3), 0.0])
    theta, rep = retarget.retarget_frame(keypoints(left_hand=target), two_link(), init=[0, 0, 0, 0.2, 0.5])
    assert rep.residual_mm / 1000 < 1e-3
    assert abs(abs(theta[4]) - math.acos((d * d - 2) / 2)) < 1e-3


def test_two_link_unreachable_target_splits_gap():
    # hand can reach 2.0 from the anchored base; the remaining 1.0 is shared by base and hand
    theta, rep = retarget.retarget_frame(keypoints(left_hand=[3.0, 0, 0]), two_link(), init=[0, 0, 0, 0.1, 0.1])
    assert abs(rep.residual_mm / 1000 - 0.5) < 1e-3


def test_zero_iterations_returns_init():
    sk = retarget.load_builtin("human15")
    clip = corpus.generate_clip("squat", {"T": 5}, seed=0)
    init = sk.rest_pose() + 0.01
    theta, rep = retarget.retarget_frame(clip.sequence.frames[2], sk, init, retarget.RetargetOptions(iters=0))
    np.testing.assert_array_equal(theta, init)
    assert rep.iterations == 0 and rep.final_objective == rep.initial_objective


def test_self_retarget_short_clip():
    sk = retarget.load_builtin("human15")
    clip = corpus.generate_clip("kick", {"T": 8}, seed=2)
    _, reports = retarget.retarget_sequence(clip.sequence, sk)
    assert np.mean([r.residual_mm for r in reports]) < 1.0
    assert all(r.final_objective <= r.initial_objective for r in reports)
    assert all(r.residual_mm >= 0 for r in reports)


def test_constant_sequence_gives_identical_solutions():
    sk = retarget.load_builtin("g1_like")
    frame = corpus.generate_clip("idle", {"T": 1}, seed=0).sequence.frames[0]
    poses, _ = retarget.retarget_sequence(MotionSequence(30, np.repeat(frame[None], 4, 0)), sk)
    for t in range(2, 4):
        np.testing.assert_allclose(poses[t], poses[1], atol=1e-6)


def test_warm_start_uses_fewer_iterations():
    sk = retarget.load_builtin("human15")
    seq = corpus.generate_clip("walk", {"T": 6}, seed=0).sequence
    opt = retarget.RetargetOptions(refine_iters=0)
    _, warm = retarget.retarget_sequence(seq, sk, opt, warm_start=True)
    _, cold = retarget.retarget_sequence(seq, sk, opt, warm_start=False)
    assert sum(r.iterations for r in warm) < sum(r.iterations for r in cold)


def test_heavy_smoothness_freezes_pose():
    sk = retarget.load_builtin("human15")
    seq = corpus.generate_clip("wave_arm", {"T": 5}, seed=0).sequence
    poses, _ = retarget.retarget_sequence(seq, sk, smooth=1e6)
    assert np.max(np.abs(np.diff(poses, axis=0))) < 1e-3


def test_pose_csv(tmp_path):
    sk = two_link()
    retarget.write_pose_csv(tmp_path / "p.csv", sk, np.zeros((2, sk.num_params)))
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "frame,root_x,root_y,root_z,base_z,elbow_z" and len(lines) == 3

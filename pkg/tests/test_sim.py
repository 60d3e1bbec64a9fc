import json

import numpy as np
import pytest

from osteonav.control import ControllerGains
from osteonav.errors import JointLimit, ScenarioDiverged
from osteonav.geometry import RigidTransform, so3_log
from osteonav.sim.arm import ArmModel, forward_kinematics, jacobian
from osteonav.sim.ots import Occluded, OtsMeasurement, OtsModel, ots_observe
from osteonav.sim.scenario import (NoiseModel, PhantomMotion, PhantomScript, ScenarioConfig,
                                   preset, run_scenario)
from osteonav.sim.world import HOME_Q, WorldConfig

ARM = ArmModel()


def random_q(rng):
    lim = ARM.limits[:, 1]
    return rng.uniform(-0.9 * lim, 0.9 * lim)


# -- kinematics ----------------------------------------------------------------

def test_fk_reference_pose(frozen):
    np.testing.assert_allclose(forward_kinematics(ARM, np.zeros(7)).as_matrix(), frozen["kinematics"]["fk_zero"],
                               atol=1e-9)
    np.testing.assert_allclose(forward_kinematics(ARM, np.zeros(7)).translation, [0, 0, 1416], atol=1e-9)


def test_fk_matches_independent_chain(frozen):
    kin = frozen["kinematics"]
    np.testing.assert_allclose(forward_kinematics(ARM, HOME_Q).as_matrix(), kin["fk_home"], atol=1e-9)
    for q, m in zip(kin["q_random"], kin["fk_random"]):
        np.testing.assert_allclose(forward_kinematics(ARM, q).as_matrix(), m, atol=1e-9)


def test_base_joint_half_turn_flips_xy(rng):
    for _ in range(20):
        q = random_q(rng)
        q[0] = rng.uniform(-0.1, 0.0)
        p = forward_kinematics(ARM, q).translation
        q[0] += np.pi
        r = forward_kinematics(ARM, q).translation
        np.testing.assert_allclose(r, [-p[0], -p[1], p[2]], atol=1e-9)


def test_last_joint_spins_about_tool_axis(rng):
    for _ in range(20):
        q = random_q(rng)
        q[6] = rng.uniform(-2.0, 2.0)
        a = forward_kinematics(ARM, q)
        q[6] += 0.7
        b = forward_kinematics(ARM, q)
        np.testing.assert_allclose(b.translation, a.translation, atol=1e-9)
        rel = so3_log(a.rotation.T @ b.rotation)
        np.testing.assert_allclose(rel, [0, 0, 0.7], atol=1e-12)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        q = random_q(rng)
        dq = rng.normal(size=7)
        dq *= 1e-5 / np.linalg.norm(dq)
        a, b = forward_kinematics(ARM, q), forward_kinematics(ARM, q + dq)
        twist = np.r_[b.translation - a.translation, so3_log(b.rotation @ a.rotation.T)]
        worst = max(worst, np.linalg.norm(jacobian(ARM, q) @ dq - twist))
    assert worst <= 1e-6


def test_last_column_at_zero_is_tool_axis():
    j = jacobian(ARM, np.zeros(7))
    np.testing.assert_allclose(j[3:, 6], forward_kinematics(ARM, np.zeros(7)).rotation[:, 2], atol=1e-12)


def test_jacobian_rank():
    assert np.linalg.matrix_rank(jacobian(ARM, HOME_Q), tol=1e-6) == 6
    rng = np.random.default_rng(5)
    for _ in range(20):
        assert np.linalg.matrix_rank(jacobian(ARM, random_q(rng))) <= 6


def test_joint_limits():
    q = np.zeros(7)
    q[3] = ARM.limits[3, 1] + 0.01
    with pytest.raises(JointLimit):
        forward_kinematics(ARM, q)
    with pytest.raises(JointLimit):
        jacobian(ARM, q)
    forward_kinematics(ARM, ARM.limits[:, 1])  # limits are inclusive


# -- tracker -------------------------------------------------------------------

def test_noiseless_tracker_is_exact():
    pose = RigidTransform.from_rotvec([0.1, 0.2, 0.3], [1, 2, 3])
    m = ots_observe(pose, OtsModel(sigma_t=0, sigma_r=0, latency_frames=0), 2.5)
    assert isinstance(m, OtsMeasurement) and m.pose.allclose(pose, 0) and m.frame == 75


def test_latency_delays_a_step_by_one_frame():
    def pose(t):
        return RigidTransform.from_translation([10.0 if t >= 1.0 else 0.0, 0, 0])
    model = OtsModel(sigma_t=0, sigma_r=0, latency_frames=1)
    def seen(t):
        return ots_observe(pose, model, t).pose.translation[0]
    assert seen(1.0) == 0 and seen(1.0 + 1 / 30 - 1e-6) == 0
    assert seen(1.0 + 1 / 30) == 10


def test_noise_level_matches_sigma():
    model = OtsModel(sigma_t=0.1, sigma_r=0.05, seed=4)
    pose = RigidTransform.identity()
    d = np.array([ots_observe(pose, model, f / 30).pose.translation for f in range(10_000)])
    rms = np.sqrt(np.mean(np.sum(d**2, axis=1)))
    assert 0.095 <= rms <= 0.105


def test_noise_is_keyed_by_frame_not_call_order():
    model = OtsModel(seed=9)
    pose = RigidTransform.identity()
    a = ots_observe(pose, model, 1.0).pose
    ots_observe(pose, model, 0.5)
    assert ots_observe(pose, model, 1.0).pose.allclose(a, 0)
    assert not ots_observe(pose, model, 1.0, tracker_id=1).pose.allclose(a, 1e-9)


def test_occlusion_interval():
    model = OtsModel(occlusions=((1.0, 2.0),))
    assert isinstance(ots_observe(RigidTransform.identity(), model, 1.5), Occluded)
    assert isinstance(ots_observe(RigidTransform.identity(), model, 2.0), OtsMeasurement)


# -- phantom scripts -----------------------------------------------------------

def test_phantom_script_round_trip():
    s = PhantomScript("step", steps=((1.0, (1, 2, 3), (0, 0, 5)),), window=(0.5, float("inf")))
    assert PhantomScript.from_dict(json.loads(json.dumps(s.to_dict()))) == s


def test_step_phantom_accumulates():
    s = PhantomScript("step", steps=((1.0, (1, 0, 0), (0, 0, 0)), (2.0, (0, 2, 0), (0, 0, 0))))
    m = PhantomMotion(s, 3.0)
    np.testing.assert_allclose(m(0.5).translation, 0)
    np.testing.assert_allclose(m(2.5).translation, [1, 2, 0])
    assert s.disturbance_times() == [1.0, 2.0]


def test_sinusoid_holds_outside_window():
    s = PhantomScript("sinusoid", amplitude=5, frequency=0.2, window=(1.0, 6.0))
    m = PhantomMotion(s, 10.0)
    np.testing.assert_allclose(m(0.3).translation, 0, atol=1e-12)
    np.testing.assert_allclose(m(1.0 + 1.25).translation, [5, 0, 0], atol=1e-12)
    np.testing.assert_allclose(m(8.0).translation, m(6.0).translation)


def test_unknown_phantom_kind():
    with pytest.raises(ValueError):
        PhantomScript("teleport")


# -- closed loop ---------------------------------------------------------------

def test_noiseless_drilling_is_exact():
    report = run_scenario(preset("noiseless"))
    assert report.summary["drilling_error_mm"] < 0.01
    assert report.summary["max_depth_mm"] > 5


def test_exponential_planar_convergence():
    k = 2.0
    cfg = ScenarioConfig(duration=3.0, noise=NoiseModel.noiseless(),
                         gains=ControllerGains(k=k * np.eye(3), b=np.zeros((3, 3))))
    e = run_scenario(cfg).err_planar_mm
    dt = 1 / cfg.control_rate
    for lag in (1, 50, 500):
        bound = e[:-lag] * np.exp(-k * lag * dt) + 1e-6
        assert np.all(e[lag:] <= bound)


def test_planar_error_decays_monotonically_below_threshold():
    cfg = ScenarioConfig(duration=3.0, noise=NoiseModel.noiseless())
    report = run_scenario(cfg)
    e = report.err_planar_mm
    assert e[0] == pytest.approx(20.0, abs=0.01)
    assert np.all(np.diff(e) <= 1e-9)
    assert e[-1] < 1.06


def test_occlusion_holds_target_without_nans():
    noise = NoiseModel(ots=OtsModel(occlusions=((1.0, 1.6),)))
    ph = PhantomScript("sinusoid", amplitude=3, frequency=0.5, window=(0.5, 2.5))
    report = run_scenario(ScenarioConfig(duration=3.0, phantom=ph, noise=noise))
    for name in ("err_planar_mm", "err_rot_rad", "axial_mm"):
        assert np.all(np.isfinite(getattr(report, name)))
    assert report.summary["controller_faults"] == 0


def test_registration_frame_occluded_is_reported():
    from osteonav.errors import StaleMeasurement
    noise = NoiseModel(ots=OtsModel(occlusions=((0.0, 0.5),)))
    with pytest.raises(StaleMeasurement):
        run_scenario(ScenarioConfig(duration=1.0, noise=noise))


def test_config_dict_round_trip():
    cfg = preset("random_walk", seed=3)
    again = ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


def test_reports_are_byte_identical_per_seed():
    ph = PhantomScript("random_walk", sigma=1.0, window=(0.2, 1.0), seed=5)
    cfg = ScenarioConfig(duration=1.5, seed=5, phantom=ph)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.to_csv() == b.to_csv()
    assert a.summary_json() == b.summary_json()
    c = run_scenario(ScenarioConfig(duration=1.5, seed=6, phantom=ph))
    assert c.to_csv() != a.to_csv()


def test_divergence_is_detected():
    with pytest.raises(ScenarioDiverged):
        run_scenario(ScenarioConfig(duration=1.0, world=WorldConfig(planar_offset=(150.0, 0.0))))


def test_tool_path_shrinks_with_noise():
    def path(scale):
        noise = NoiseModel(ots=OtsModel(sigma_t=0.1 * scale, sigma_r=0.05 * scale), ct_vertex_noise=0,
                           calibration_sigma_t=0, calibration_sigma_r=0)
        return run_scenario(ScenarioConfig(duration=2.0, noise=noise)).summary["tool_path_mm"]
    lengths = [path(s) for s in (4.0, 1.0, 0.0)]
    assert all(np.isfinite(lengths))
    assert lengths[0] > lengths[1] > lengths[2]


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        ScenarioConfig(duration=0)
    with pytest.raises(ValueError):
        ScenarioConfig(force=((1.0, 0.0), (0.5, 1.0)))
    with pytest.raises(ValueError):
        preset("nope")

import numpy as np
import pytest
from hypothesis import given, strategies as st

from osteonav.control import (ControllerGains, ControllerInput, ControllerLimits, admittance_twist,
                              admittance_velocity, axial_projector, controller_step, damped_pinv,
                              orientation_twist, rotation_pair, tracking_velocity)
from osteonav.geometry import rot_z, so3_exp
from osteonav.sim.arm import ArmModel, forward_kinematics, jacobian
from osteonav.sim.world import HOME_Q

from .strategies import rotations

ARM = ArmModel()
GAINS = ControllerGains()


def make_input(rng, force=None, e_t=None, e_t_dot=None, r_t=None, q=None, v_k=None):
    q = HOME_Q + rng.uniform(-0.4, 0.4, 7) if q is None else q
    r = forward_kinematics(ARM, q).rotation
    v = rng.normal(size=3) if v_k is None else np.asarray(v_k, float)
    return ControllerInput(
        q=q, jacobian=jacobian(ARM, q), t_r=rotation_pair(r),
        f_hri=rng.normal(0, 5, 6) if force is None else np.asarray(force, float),
        e_t=rng.normal(0, 10, 3) if e_t is None else np.asarray(e_t, float),
        e_t_dot=rng.normal(0, 5, 3) if e_t_dot is None else np.asarray(e_t_dot, float),
        r_r=r, r_t=(r @ so3_exp(rng.normal(0, 0.05, 3))) if r_t is None else r_t,
        v_k=v / np.linalg.norm(v))


def tool_velocity(inp, qdot):
    """Translational velocity of the tool, expressed in the tool frame."""
    return inp.t_r[:3, :3].T @ (inp.jacobian @ qdot)[:3]


def test_zero_force_gives_zero_admittance(rng):
    inp = make_input(rng, force=np.zeros(6))
    assert np.all(admittance_velocity(inp, GAINS) == 0)


def test_axial_force_sets_axial_speed(rng):
    gains = ControllerGains(admittance=0.7)
    inp = make_input(rng, force=np.zeros(6))
    inp = make_input(rng, force=np.r_[9.0 * inp.v_k, 0, 0, 0], q=inp.q, v_k=inp.v_k)
    v = tool_velocity(inp, admittance_velocity(inp, gains))
    assert v @ inp.v_k == pytest.approx(9 * 0.7, abs=1e-9)
    assert np.linalg.norm(v - (v @ inp.v_k) * inp.v_k) < 1e-9


def test_orthogonal_force_is_annihilated(rng):
    inp = make_input(rng)
    f = np.cross(inp.v_k, rng.normal(size=3))
    inp = make_input(rng, force=np.r_[f, 1, 2, 3], q=inp.q, v_k=inp.v_k)
    assert np.linalg.norm(inp.jacobian @ admittance_velocity(inp, GAINS)) < 1e-9


def test_zero_error_gives_zero_tracking(rng):
    inp = make_input(rng, e_t=np.zeros(3), e_t_dot=np.zeros(3))
    assert np.all(tracking_velocity(inp, GAINS) == 0)


def test_axial_error_gives_zero_tracking(rng):
    inp = make_input(rng)
    axis = inp.t_r[:3, :3] @ inp.v_k
    inp = make_input(rng, e_t=12.0 * axis, e_t_dot=-3.0 * axis, q=inp.q, v_k=inp.v_k)
    assert np.linalg.norm(inp.jacobian @ tracking_velocity(inp, GAINS)) < 1e-9


def test_aligned_orientation_gives_zero_rotation(rng):
    inp = make_input(rng)
    inp = make_input(rng, r_t=inp.r_r, q=inp.q, v_k=inp.v_k)
    assert np.allclose(orientation_twist(inp, GAINS), 0, atol=1e-15)


@pytest.mark.parametrize("k", [0.5, 2.0, 7.0])
def test_small_rotation_about_z(k):
    inp = ControllerInput(q=np.zeros(7), jacobian=np.eye(6, 7), t_r=np.eye(6), f_hri=np.zeros(6),
                          e_t=np.zeros(3), e_t_dot=np.zeros(3), r_r=np.eye(3), r_t=rot_z(0.01),
                          v_k=np.array([0, 0, 1.0]))
    tw = orientation_twist(inp, ControllerGains(k_rot=k * np.eye(3)))
    np.testing.assert_allclose(tw, [0, 0, 0, 0, 0, 0.01 * k], atol=1e-15)


def test_all_at_rest_gives_zero_command(rng):
    inp = make_input(rng, force=np.zeros(6), e_t=np.zeros(3), e_t_dot=np.zeros(3))
    inp = make_input(rng, force=np.zeros(6), e_t=np.zeros(3), e_t_dot=np.zeros(3), r_t=inp.r_r, q=inp.q, v_k=inp.v_k)
    out = controller_step(inp, GAINS)
    assert np.allclose(out.qdot, 0, atol=1e-15) and out.fault is None


def test_orthogonality_over_random_inputs():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        inp = make_input(rng)
        out = controller_step(inp, GAINS)
        worst = max(worst, abs(inp.v_k @ tool_velocity(inp, out.q_perp)))
    assert worst < 1e-9


def test_subspace_independence():
    rng = np.random.default_rng(99)
    for _ in range(200):
        inp = make_input(rng)
        v_perp = tool_velocity(inp, tracking_velocity(inp, GAINS))
        v_par = tool_velocity(inp, admittance_velocity(inp, GAINS))
        assert abs(v_perp @ inp.v_k) < 1e-9
        assert np.linalg.norm(v_par - (v_par @ inp.v_k) * inp.v_k) < 1e-9


def test_unclamped_step_decomposes(rng):
    inp = make_input(rng, e_t=rng.normal(0, 2, 3), force=rng.normal(0, 1, 6))
    out = controller_step(inp, GAINS)
    assert not out.clamped
    np.testing.assert_allclose(out.qdot, out.q_par + out.q_perp + out.q_rot, atol=1e-15)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3))
def test_projector_idempotent(v):
    v = np.asarray(v) / np.linalg.norm(v)
    p = axial_projector(v)
    q = np.eye(3) - p
    np.testing.assert_allclose(p @ p, p, atol=1e-15)
    np.testing.assert_allclose(q @ q, q, atol=1e-15)


@given(st.floats(-50, 50).filter(lambda f: abs(f) > 1e-6), rotations(), st.floats(0.01, 10))
def test_admittance_is_passive(f, r, a):
    v = r[:, 2]
    inp = ControllerInput(q=np.zeros(7), jacobian=np.eye(6, 7), t_r=rotation_pair(r),
                          f_hri=np.r_[f * v, 0, 0, 0], e_t=np.zeros(3), e_t_dot=np.zeros(3),
                          r_r=r, r_t=r, v_k=v)
    tw = admittance_twist(inp, ControllerGains(admittance=a))
    assert np.sign(r.T @ tw[:3] @ v) == np.sign(f)


def test_large_command_is_clamped(rng):
    inp = make_input(rng, e_t=np.array([500.0, -800.0, 300.0]))
    out = controller_step(inp, GAINS)
    assert out.clamped and out.fault is None
    assert np.max(np.abs(out.qdot)) <= 1.0
    assert np.max(np.abs(out.q_par + out.q_perp + out.q_rot)) > 1.0  # components kept pre-clamp


def test_singular_jacobian_fails_safe(rng):
    q = HOME_Q.copy()
    q[3] = 0.0  # elbow straight: the arm loses a direction
    inp = make_input(rng, e_t=np.array([200.0, 0, 0]), q=q)
    assert np.linalg.svd(inp.jacobian, compute_uv=False)[-1] < 0.01
    out = controller_step(inp, GAINS)
    assert out.fault == "jacobian_singular"
    assert np.all(out.qdot == 0)


def test_damping_only_near_singularity(rng):
    j = make_input(rng).jacobian
    jp, damped = damped_pinv(j)
    assert not damped
    np.testing.assert_allclose(j @ jp, np.eye(6), atol=1e-10)
    u, s, vt = np.linalg.svd(j, full_matrices=False)
    s[-1] = 1e-5
    _, damped = damped_pinv((u * s) @ vt)
    assert damped


def test_limits_configurable(rng):
    inp = make_input(rng, e_t=np.array([40.0, 0, 0]))
    out = controller_step(inp, GAINS, ControllerLimits(joint_rate=0.01))
    assert np.max(np.abs(out.qdot)) <= 0.01


@pytest.mark.parametrize("kw", [dict(admittance=0.0), dict(k=-np.eye(3)),
                                dict(k_rot=np.array([[1, 2, 0], [0, 1, 0], [0, 0, 1.0]]))])
def test_gain_validation(kw):
    with pytest.raises(ValueError):
        ControllerGains(**kw)


def test_gains_dict_round_trip():
    g = ControllerGains(admittance=0.5, k=3 * np.eye(3))
    h = ControllerGains.from_dict(g.to_dict())
    assert h.admittance == 0.5 and np.array_equal(h.k, g.k)
    assert np.array_equal(ControllerGains.from_dict({"k": 4}).k, 4 * np.eye(3))


def test_input_validation(rng):
    inp = make_input(rng)
    with pytest.raises(ValueError):
        ControllerInput(inp.q, inp.jacobian, inp.t_r, inp.f_hri, inp.e_t, inp.e_t_dot,
                        inp.r_r, inp.r_t, np.array([0, 0, 2.0]))

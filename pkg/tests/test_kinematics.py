import numpy as np
import pytest

from beamtrack import config, dqmath
from beamtrack.kinematics import (
    KinematicModel,
    TaskVector,
    finite_difference_jacobian,
    smallest_singular_value,
)


def _rz(t):
    c, s = np.cos(t), np.sin(t)
    m = np.eye(4)
    m[:2, :2] = [[c, -s], [s, c]]
    return m


def _rx(t):
    c, s = np.cos(t), np.sin(t)
    m = np.eye(4)
    m[1:3, 1:3] = [[c, -s], [s, c]]
    return m


def _ry(t):
    c, s = np.cos(t), np.sin(t)
    m = np.eye(4)
    m[0, 0] = c
    m[0, 2] = s
    m[2, 0] = -s
    m[2, 2] = c
    return m


def _tr(v):
    m = np.eye(4)
    m[:3, 3] = v
    return m


def fk_matrix_oracle(q, a, n=6):
    """Independent homogeneous-matrix chain for the same convention."""
    dh = a[: 4 * n].reshape(n, 4)
    base = a[4 * n : 4 * n + 6]
    eff = a[4 * n + 6 :]

    def offset(p):
        return _tr([p[0], 0, 0]) @ _tr([0, p[1], 0]) @ _tr([0, 0, p[2]]) @ _rx(p[3]) @ _ry(p[4]) @ _rz(p[5])

    mat = offset(base)
    for j in range(n):
        th, d, aa, al = dh[j]
        mat = mat @ _rz(q[j] + th) @ _tr([0, 0, d]) @ _tr([aa, 0, 0]) @ _rx(al)
    return mat @ offset(eff)


@pytest.fixture(scope="module")
def model():
    return config.load_robot()


def random_state(model, rng, q_range=np.pi):
    q = rng.uniform(-q_range, q_range, model.n)
    a = rng.uniform(model.lower, model.upper)
    return q, a


def test_fk_identity_for_degenerate_chain():
    model = KinematicModel(np.zeros((6, 4)))
    x = model.fk(np.zeros(6), model.nominal)
    np.testing.assert_allclose(x, dqmath.DQ_IDENTITY, atol=1e-15)


def test_single_revolute_joint_rotates_effector_axis():
    model = KinematicModel(np.zeros((6, 4)))
    q = np.zeros(6)
    q[0] = np.pi / 2
    x = model.fk(q, model.nominal)
    np.testing.assert_allclose(dqmath.qrotate(x[:4], [1.0, 0, 0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_fk_matches_matrix_oracle(model, rng):
    for _ in range(25):
        q, a = random_state(model, rng)
        x = model.fk(q, a)
        mat = fk_matrix_oracle(q, a)
        np.testing.assert_allclose(dqmath.dq_translation(x), mat[:3, 3], atol=1e-9)
        for v in np.eye(3):
            np.testing.assert_allclose(dqmath.qrotate(x[:4], v), mat[:3, :3] @ v, atol=1e-9)
    # nominal parameters at q = 0 as the spot check
    x0 = model.fk(np.zeros(6), model.nominal)
    np.testing.assert_allclose(
        dqmath.dq_translation(x0), fk_matrix_oracle(np.zeros(6), model.nominal)[:3, 3], atol=1e-9
    )


def test_fk_unit_norm_across_bounds(model, rng):
    for _ in range(50):
        q, a = random_state(model, rng)
        pn, pd = dqmath.dq_norm_parts(model.fk(q, a))
        assert abs(pn - 1.0) < 1e-9 and abs(pd) < 1e-9


def test_pose_jacobian_finite_differences(model, rng):
    for _ in range(100):
        q, a = random_state(model, rng)
        jac = model.pose_jacobian(q, a)
        fd = finite_difference_jacobian(lambda qq: model.fk(qq, a), q)
        assert np.max(np.abs(jac - fd)) < 1e-5


def test_pose_jacobian_rank(model, rng):
    q, a = random_state(model, rng)
    assert np.linalg.matrix_rank(model.pose_jacobian(q, a)) <= 6
    q_generic = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    assert np.linalg.matrix_rank(model.pose_jacobian(q_generic, model.nominal)) == 6


def test_line_jacobian_finite_differences(model, rng):
    for _ in range(100):
        q, a = random_state(model, rng)
        jac = model.line_jacobian(q, a)
        fd = finite_difference_jacobian(lambda qq: model.beam_line(qq, a), q)
        assert np.max(np.abs(jac - fd)) < 1e-5


def test_line_jacobian_static_and_released_dof(model):
    q = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    jac = model.line_jacobian(q, model.nominal)
    # joint rates of zero produce zero line velocity trivially; the wrist
    # column vanishes because the last joint axis carries the beam
    assert np.max(np.abs(jac @ np.zeros(6))) == 0.0
    assert np.max(np.abs(jac[:, 5])) < 1e-12


def test_line_mode_roll_invariance(model):
    q = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    a = model.nominal.copy()
    base_line = model.beam_line(q, a)
    a2 = a.copy()
    a2[-1] += 0.1  # effector roll about the beam axis
    np.testing.assert_allclose(model.beam_line(q, a2), base_line, atol=1e-9)
    jac_a = model.parametric_jacobian(q, a, mode="line")
    assert np.max(np.abs(jac_a[:, -1])) < 1e-12


def test_parametric_jacobian_finite_differences(model, rng):
    for _ in range(50):
        q, a = random_state(model, rng)
        jac = model.parametric_jacobian(q, a)
        fd = finite_difference_jacobian(lambda aa: model.fk(q, aa), a)
        assert np.max(np.abs(jac - fd)) < 1e-5


def test_parametric_jacobian_base_translation_column(model):
    q = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    a = model.nominal.copy()
    # perturbing the base x translation shifts the position one-for-one
    col = 4 * model.n  # base tx
    h = 1e-6
    a_plus, a_minus = a.copy(), a.copy()
    a_plus[col] += h
    a_minus[col] -= h
    dpos = (dqmath.dq_translation(model.fk(q, a_plus)) - dqmath.dq_translation(model.fk(q, a_minus))) / (2 * h)
    np.testing.assert_allclose(dpos, [1.0, 0.0, 0.0], atol=1e-8)


def test_measurement_jacobian_full_equals_parametric(model, rng):
    q, a = random_state(model, rng)
    np.testing.assert_allclose(
        model.measurement_jacobian(q, a, "pose", "full"), model.parametric_jacobian(q, a, "pose"), atol=0
    )


def test_measurement_jacobian_position_only(model, rng):
    for _ in range(10):
        q, a = random_state(model, rng)
        jac = model.measurement_jacobian(q, a, "pose", "position")
        assert jac.shape == (4, model.n_params)

        def trans_quat(aa):
            x = model.fk(q, aa)
            return 2.0 * dqmath.qmul(x[4:], dqmath.qconj(x[:4]))

        fd = finite_difference_jacobian(trans_quat, a)
        assert np.max(np.abs(jac - fd)) < 1e-5
    # zero parameter motion -> zero measurement motion
    np.testing.assert_allclose(jac @ np.zeros(model.n_params), np.zeros(4), atol=0)


def test_smallest_singular_value():
    assert smallest_singular_value(np.eye(6)) == pytest.approx(1.0)
    assert smallest_singular_value(np.diag([3.0, 2.0, 1.0, 0.0, 0.0, 0.0])) == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    jac = rng.normal(size=(8, 6))
    oracle = np.linalg.svd(jac, compute_uv=False)
    oracle = oracle[oracle > 1e-8][-1]
    assert smallest_singular_value(jac) == pytest.approx(oracle, abs=1e-9)


def test_task_vector_validation():
    with pytest.raises(ValueError):
        TaskVector("pose", np.zeros(4))
    with pytest.raises(ValueError):
        TaskVector("other", np.zeros(8))
    tv = TaskVector("line", np.arange(8.0))
    assert tv.mode == "line"


def test_beam_line_is_valid_pluecker(model, rng):
    for _ in range(20):
        q, a = random_state(model, rng)
        line = model.beam_line(q, a)
        l, m = line[1:4], line[5:]
        assert abs(np.linalg.norm(l) - 1.0) < 1e-9
        assert abs(np.dot(l, m)) < 1e-9


def test_robot_description_round_trip(tmp_path, model):
    # the shipped description file is both the default and a template
    import yaml

    spec = {
        "n": 6,
        "dh": model.nominal[:24].reshape(6, 4).tolist(),
        "base": model.nominal[24:30].tolist(),
        "effector": model.nominal[30:].tolist(),
        "bounds": {"length": 0.05, "angle": 0.15},
        "beam_axis": [0.0, 0.0, 1.0],
    }
    path = tmp_path / "robot.yaml"
    path.write_text(yaml.safe_dump(spec))
    loaded = config.load_robot(path)
    np.testing.assert_allclose(loaded.nominal, model.nominal, atol=0)
    np.testing.assert_allclose(loaded.lower, model.lower, atol=0)
    rng = np.random.default_rng(0)
    q = rng.uniform(-1, 1, 6)
    np.testing.assert_allclose(loaded.fk(q, loaded.nominal), model.fk(q, model.nominal), atol=0)

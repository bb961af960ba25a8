import numpy as np
import pytest

from beamtrack import config, geometry
from beamtrack.geometry import (
    KEEP_INSIDE,
    KEEP_OUTSIDE,
    Cylinder,
    PairSpec,
    Plane,
    Scene,
    Sphere,
    build_constraint_stack,
    build_vfi_row,
    dist_point_line,
    dist_point_plane,
    dist_sphere_cylinder,
    dist_sphere_plane,
    evaluate_pair,
)
from beamtrack.kinematics import LINK_EFFECTOR, finite_difference_jacobian


@pytest.fixture(scope="module")
def model():
    return config.load_robot()


@pytest.fixture(scope="module")
def scene(model):
    return config.build_scene(model, config.nominal_face())


def _chain(model, scene, q, a):
    return model.chain_state(q, a, cuts=scene.required_cuts())


def _distances(model, scene, q, a):
    poses = model.chain_poses(q, a, scene.required_cuts())
    return geometry.true_distances(scene, poses)


# ---------------------------------------------------------------------------
# Plain distances against independent oracles.
# ---------------------------------------------------------------------------


def test_dist_point_plane(rng):
    plane = Plane("p", (0.0, 0.0, 1.0), 0.0)
    assert dist_point_plane([0.3, -0.2, 0.0], plane) == pytest.approx(0.0)
    assert dist_point_plane([0.0, 0.0, 1.0], plane) == pytest.approx(1.0)
    for _ in range(50):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        p0 = rng.uniform(-1, 1, 3)
        plane = Plane("p", tuple(n), float(np.dot(n, p0)))
        p = rng.uniform(-2, 2, 3)
        # projection oracle: subtract the projection onto the plane
        proj = p - (np.dot(n, p - p0)) * n
        signed = np.dot(n, p - proj)
        assert dist_point_plane(p, plane) == pytest.approx(signed, abs=1e-12)


def test_dist_point_line(rng):
    assert dist_point_line([0, 0, 2.0], [0, 0, 0], [0, 0, 1.0]) == pytest.approx(0.0)
    assert dist_point_line([1.0, 0, 0], [0, 0, 0], [0, 0, 1.0]) == pytest.approx(1.0)
    for _ in range(50):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        p0 = rng.uniform(-1, 1, 3)
        p = rng.uniform(-2, 2, 3)
        # 1-d minimization oracle over the line parameter
        ts = np.linspace(-10, 10, 200001)
        pts = p0[None, :] + ts[:, None] * d[None, :]
        oracle = np.min(np.linalg.norm(pts - p, axis=1))
        assert dist_point_line(p, p0, d) == pytest.approx(oracle, abs=1e-6)


def test_dist_sphere_cylinder_values(rng):
    # center on the axis with the default radii
    assert dist_sphere_cylinder([0, 0, 0.5], 0.075, [0, 0, 0], [0, 0, 1.0], 0.1) == pytest.approx(-0.175)
    assert dist_sphere_cylinder([0.275, 0, 0], 0.075, [0, 0, 0], [0, 0, 1.0], 0.1) == pytest.approx(0.1)
    for _ in range(20):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        p0 = rng.uniform(-1, 1, 3)
        p = rng.uniform(-2, 2, 3)
        r1, r2 = rng.uniform(0.01, 0.2, 2)
        assert dist_sphere_cylinder(p, r1, p0, d, r2) == pytest.approx(
            dist_point_line(p, p0, d) - r1 - r2, abs=1e-12
        )


def test_dist_sphere_plane(rng):
    plane = Plane("p", (0.0, 0.0, 1.0), 0.0)
    assert dist_sphere_plane([0.1, 0.2, 0.0], 0.075, plane) == pytest.approx(-0.075)
    assert dist_sphere_plane([0.1, 0.2, 0.075], 0.075, plane) == pytest.approx(0.0)
    for _ in range(20):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        p0 = rng.uniform(-1, 1, 3)
        plane = Plane("p", tuple(n), float(np.dot(n, p0)))
        p = rng.uniform(-2, 2, 3)
        r = rng.uniform(0.01, 0.3)
        assert dist_sphere_plane(p, r, plane) == pytest.approx(dist_point_plane(p, plane) - r, abs=1e-12)


# ---------------------------------------------------------------------------
# Gradients.
# ---------------------------------------------------------------------------


def test_workspace_pair_has_zero_gradient(model):
    prims = {
        "a": Sphere("a", 0.05, (0.3, 0.0, 0.2)),
        "b": Plane("b", (0.0, 0.0, 1.0), 0.0),
    }
    scene = Scene(prims, [PairSpec("a", "b")])
    chain = model.chain_state(np.zeros(model.n), model.nominal)
    stack = build_constraint_stack(scene, chain, 5.0)
    np.testing.assert_allclose(stack.rows, np.zeros((1, model.n_params)), atol=0)
    assert stack.distances[0] == pytest.approx(0.15)


def test_distance_gradients_match_finite_differences(model, scene, rng):
    cuts = scene.required_cuts()
    for _ in range(100):
        q = rng.uniform(-np.pi, np.pi, model.n)
        a = rng.uniform(model.lower, model.upper)
        chain = _chain(model, scene, q, a)
        stack_a = build_constraint_stack(scene, chain, 1.0)
        stack_q = build_constraint_stack(scene, chain, 1.0, theta_columns=model.theta_columns)
        fd_a = finite_difference_jacobian(lambda aa: _distances(model, scene, q, aa), a)
        fd_q = finite_difference_jacobian(lambda qq: _distances(model, scene, qq, a), q)
        for i, pair in enumerate(scene.pairs):
            sign = -1.0 if pair.direction == KEEP_OUTSIDE else 1.0
            assert np.max(np.abs(sign * stack_a.rows[i] - fd_a[i])) < 1e-5
            assert np.max(np.abs(sign * stack_q.rows[i] - fd_q[i])) < 1e-5


def test_gradient_for_sphere_normal_to_plane(model):
    # moving a sphere perpendicular to a plane: gradient is the plane normal
    # pushed through the attachment point Jacobian
    from beamtrack.kinematics import point_jacobian_from_state

    prims = {
        "s": Sphere("s", 0.05, (0.0, 0.0, -0.02), link=LINK_EFFECTOR),
        "p": Plane("p", (0.0, 0.0, 1.0), 0.0),
    }
    scene = Scene(prims, [PairSpec("s", "p")])
    q = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    chain = model.chain_state(q, model.nominal, cuts=[LINK_EFFECTOR])
    stack = build_constraint_stack(scene, chain, 1.0)
    jac_p = point_jacobian_from_state(chain.cut_poses[LINK_EFFECTOR], chain.cut_jacs[LINK_EFFECTOR], np.array([0.0, 0.0, -0.02]))
    np.testing.assert_allclose(-stack.rows[0], np.array([0.0, 0.0, 1.0]) @ jac_p, atol=1e-12)


def test_zero_distance_point_line_gradient_flagged(model):
    # a point primitive placed exactly on a workspace line
    prims = {
        "pt": geometry.point_primitive("pt", (0.0, 0.0, 0.5)),
        "ln": geometry.line_primitive("ln", (0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
    }
    scene = Scene(prims, [PairSpec("pt", "ln")])
    chain = model.chain_state(np.zeros(model.n), model.nominal)
    stack = build_constraint_stack(scene, chain, 5.0)
    assert stack.gradient_undefined
    np.testing.assert_allclose(stack.rows[0], np.zeros(model.n_params), atol=0)


# ---------------------------------------------------------------------------
# Constraint rows.
# ---------------------------------------------------------------------------


def test_vfi_row_signs(model, scene):
    q = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    chain = _chain(model, scene, q, model.nominal)
    state = geometry.PairState(0.2, np.ones(6))
    row = geometry.vfi_row_from_state(state, KEEP_OUTSIDE, 5.0)
    assert row.bound == pytest.approx(1.0)
    np.testing.assert_allclose(row.jacobian_row, -np.ones(6), atol=0)
    row = geometry.vfi_row_from_state(geometry.PairState(0.0, np.ones(6)), KEEP_OUTSIDE, 5.0)
    assert row.bound == 0.0
    row = geometry.vfi_row_from_state(geometry.PairState(-0.1, np.ones(6)), KEEP_INSIDE, 5.0)
    assert row.bound == pytest.approx(0.5)
    np.testing.assert_allclose(row.jacobian_row, np.ones(6), atol=0)


def test_keep_outside_feasible_at_rest_and_escapable(model, scene, rng):
    q = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    a = model.nominal
    chain = _chain(model, scene, q, a)
    stack = build_constraint_stack(scene, chain, 5.0, theta_columns=model.theta_columns)
    for i, pair in enumerate(scene.pairs):
        if pair.direction != KEEP_OUTSIDE or stack.distances[i] <= 0:
            continue
        # rest is feasible
        assert 0.0 <= stack.bounds[i] + 1e-12
        # a velocity that strictly increases the distance is feasible
        grad_q = -stack.rows[i]
        if np.linalg.norm(grad_q) > 1e-9:
            v = grad_q / np.linalg.norm(grad_q) * 0.01
            assert stack.rows[i] @ v <= stack.bounds[i] + 1e-12


def test_default_scene_stack_shape(model, scene):
    q = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    chain = _chain(model, scene, q, model.nominal)
    stack_q = build_constraint_stack(scene, chain, 5.0, theta_columns=model.theta_columns)
    stack_a = build_constraint_stack(scene, chain, 5.0)
    assert stack_q.shape == (19, 6)
    assert stack_a.shape == (19, model.n_params)
    # 4 sphere-plane + 12 sphere-cylinder + 2 sphere-obstacle + 1 keep-inside
    kinds = [(p.first, p.second, p.direction) for p in scene.pairs]
    n_plane = sum(1 for a_, b, d in kinds if b in ("plane_table", "plane_box") and d == KEEP_OUTSIDE)
    n_self = sum(1 for a_, b, d in kinds if b.startswith("c") and b != "c_obstacle")
    n_obs = sum(1 for a_, b, d in kinds if b == "c_obstacle")
    n_inside = sum(1 for a_, b, d in kinds if d == KEEP_INSIDE)
    assert (n_plane, n_self, n_obs, n_inside) == (4, 12, 2, 1)


def test_empty_scene_and_pair_removal(model, scene):
    q = np.zeros(model.n)
    chain = model.chain_state(q, model.nominal)
    empty = Scene({}, [])
    stack = build_constraint_stack(empty, chain, 5.0)
    assert stack.shape == (0, model.n_params)
    no_obs = scene.without_pair("s1", "c_obstacle").without_pair("s2", "c_obstacle")
    chain = _chain(model, scene, q, model.nominal)
    assert build_constraint_stack(no_obs, chain, 5.0).shape[0] == 17


def test_duplicate_pair_rejected(model):
    prims = {
        "a": Sphere("a", 0.05, (0.3, 0.0, 0.2)),
        "b": Plane("b", (0.0, 0.0, 1.0), 0.0),
    }
    with pytest.raises(ValueError):
        Scene(prims, [PairSpec("a", "b"), PairSpec("a", "b")])
    with pytest.raises(ValueError):
        Scene(prims, [PairSpec("a", "missing")])


def test_primitive_validation():
    with pytest.raises(ValueError):
        Sphere("s", -0.1, (0, 0, 0))
    with pytest.raises(ValueError):
        Cylinder("c", 0.1, (0, 0, 0), (0, 0, 2.0))
    with pytest.raises(ValueError):
        Plane("p", (0, 0, 2.0), 0.0)


def test_exponential_envelope_in_closed_loop(model):
    """Keep-outside distances shrink no faster than the exponential envelope.

    A proportional controller drives the tip sphere straight at a workspace
    plane; the QP-filtered command must keep d(t) >= d(0) exp(-eta t) within
    a small discretization tolerance at dt = 1 ms.
    """
    from beamtrack import qpsolver
    from beamtrack.kinematics import point_jacobian_from_state

    prims = {
        "s": Sphere("s", 0.075, (0.0, 0.0, -0.02), link=LINK_EFFECTOR),
        "p": Plane("p", (-1.0, 0.0, 0.0), -0.45),
    }
    scene = Scene(prims, [PairSpec("s", "p")])
    eta = 5.0
    dt = 1e-3
    q = np.array([0.3, -1.1, 1.4, -1.9, -1.2, 0.5])
    a = model.nominal
    solver = qpsolver.QpSolver()
    chain = model.chain_state(q, a, cuts=[LINK_EFFECTOR])
    d0 = build_constraint_stack(scene, chain, eta, theta_columns=model.theta_columns).distances[0]
    assert d0 > 0
    t = 0.0
    for _ in range(600):
        chain = model.chain_state(q, a, cuts=[LINK_EFFECTOR])
        stack = build_constraint_stack(scene, chain, eta, theta_columns=model.theta_columns)
        jac_p = point_jacobian_from_state(
            chain.cut_poses[LINK_EFFECTOR], chain.cut_jacs[LINK_EFFECTOR], np.array([0.0, 0.0, -0.02])
        )[:, model.theta_columns]
        # command: drive the sphere center toward the plane at high gain
        v_des = np.array([1.0, 0.0, 0.0]) * 0.5
        prob = qpsolver.assemble(jac_p, 1.0, -v_des, np.full(6, 0.01), stack.rows, stack.bounds)
        sol = solver.solve(prob)
        q = q + sol.u * dt
        t += dt
        d = build_constraint_stack(scene, model.chain_state(q, a, cuts=[LINK_EFFECTOR]), eta, theta_columns=model.theta_columns).distances[0]
        assert d >= d0 * np.exp(-eta * t) * 0.95
    assert d > 0.0

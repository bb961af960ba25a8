import numpy as np
import pytest

from beamtrack import dqmath
from beamtrack.dqmath import (
    DualQuaternion,
    Quaternion,
    canonical_sign,
    dq_exp,
    dq_from_rt,
    dq_from_translation,
    dq_log,
    dq_norm_parts,
    dq_translation,
    dqconj,
    dqmul,
    hamilton_minus4,
    hamilton_minus8,
    hamilton_plus4,
    hamilton_plus8,
    line_from_point_direction,
    plane_from_point_normal,
    qconj,
    qmul,
    sclerp,
    transform_line,
    transform_point,
)

from conftest import random_pure_dq, random_quat, random_unit_dq


# The quaternion basis multiplication table, written out independently of the
# library's qmul, is the oracle for the product and the Hamilton operators.
_BASIS_TABLE = {
    (0, 0): (0, 1), (0, 1): (1, 1), (0, 2): (2, 1), (0, 3): (3, 1),
    (1, 0): (1, 1), (1, 1): (0, -1), (1, 2): (3, 1), (1, 3): (2, -1),
    (2, 0): (2, 1), (2, 1): (3, -1), (2, 2): (0, -1), (2, 3): (1, 1),
    (3, 0): (3, 1), (3, 1): (2, 1), (3, 2): (1, -1), (3, 3): (0, -1),
}


def brute_qmul(a, b):
    out = np.zeros(4)
    for i in range(4):
        for j in range(4):
            k, s = _BASIS_TABLE[(i, j)]
            out[k] += s * a[i] * b[j]
    return out


def brute_dqmul(a, b):
    prim = brute_qmul(a[:4], b[:4])
    dual = brute_qmul(a[:4], b[4:]) + brute_qmul(a[4:], b[:4])
    return np.concatenate([prim, dual])


def test_qmul_against_basis_expansion(rng):
    for _ in range(50):
        a, b = rng.normal(size=4), rng.normal(size=4)
        np.testing.assert_allclose(qmul(a, b), brute_qmul(a, b), atol=1e-12)


def test_quaternion_algebra_properties(rng):
    for _ in range(30):
        a, b, c = (rng.normal(size=4) for _ in range(3))
        lhs = qmul(qmul(a, b), c)
        rhs = qmul(a, qmul(b, c))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)
        np.testing.assert_allclose(qmul(a, b + c), qmul(a, b) + qmul(a, c), atol=1e-12)


def test_dqmul_identity_and_brute_force(rng):
    x = random_unit_dq(rng)
    np.testing.assert_allclose(dqmul(dqmath.DQ_IDENTITY, x), x, atol=1e-15)
    for _ in range(50):
        a, b = rng.normal(size=8), rng.normal(size=8)
        np.testing.assert_allclose(dqmul(a, b), brute_dqmul(a, b), atol=1e-12)


def test_rotation_sandwich_moves_translation():
    rot = dqmath.dq_from_rotation([0.0, 0.0, 1.0], np.pi / 2)
    moved = transform_point(rot, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(moved, [0.0, 1.0, 0.0], atol=1e-12)


def test_unit_product_stays_unit_large_batch(rng):
    # 1e6 random unit compositions via the broadcasting product.
    a = random_unit_dq(rng, 1000)
    b = random_unit_dq(rng, 1000)
    prod = dqmul(a[:, None, :], b[None, :, :]).reshape(-1, 8)
    pn, pd = dq_norm_parts(prod)
    assert prod.shape[0] == 1_000_000
    assert np.max(np.abs(pn - 1.0)) < 1e-9
    assert np.max(np.abs(pd)) < 1e-9


def test_conjugate_rules(rng):
    np.testing.assert_allclose(dqconj(dqmath.DQ_IDENTITY), dqmath.DQ_IDENTITY, atol=0)
    x = random_unit_dq(rng)
    np.testing.assert_allclose(dqmul(x, dqconj(x)), dqmath.DQ_IDENTITY, atol=1e-9)
    y = rng.normal(size=8)
    signs = np.array([1.0, -1, -1, -1, 1, -1, -1, -1])
    np.testing.assert_allclose(dqconj(y), y * signs, atol=0)


def test_hamilton_operators(rng):
    for _ in range(30):
        a, b = rng.normal(size=4), rng.normal(size=4)
        ab = brute_qmul(a, b)
        np.testing.assert_allclose(hamilton_plus4(a) @ b, ab, atol=1e-12)
        np.testing.assert_allclose(hamilton_minus4(b) @ a, ab, atol=1e-12)
        x, y = rng.normal(size=8), rng.normal(size=8)
        xy = brute_dqmul(x, y)
        np.testing.assert_allclose(hamilton_plus8(x) @ y, xy, atol=1e-12)
        np.testing.assert_allclose(hamilton_minus8(y) @ x, xy, atol=1e-12)


def test_double_cover(rng):
    x = random_unit_dq(rng)
    pts = rng.uniform(-2, 2, (100, 3))
    for p in pts:
        np.testing.assert_allclose(transform_point(x, p), transform_point(-x, p), atol=1e-9)


def test_log_exp_round_trip(rng):
    np.testing.assert_allclose(dq_log(dqmath.DQ_IDENTITY), np.zeros(8), atol=0)
    np.testing.assert_allclose(dq_exp(np.zeros(8)), dqmath.DQ_IDENTITY, atol=0)
    for _ in range(100):
        x = random_unit_dq(rng)
        back = dq_exp(dq_log(x))
        err = min(np.max(np.abs(back - x)), np.max(np.abs(back + x)))
        assert err < 1e-9
    for _ in range(50):
        g = random_pure_dq(rng)
        x = dq_exp(g)
        pn, pd = dq_norm_parts(x)
        assert abs(pn - 1.0) < 1e-12 and abs(pd) < 1e-12


def test_exp_small_angle_branch(rng):
    g = np.zeros(8)
    g[1:4] = 1e-12 * np.array([1.0, -2.0, 0.5])
    g[5:] = [0.1, -0.2, 0.05]
    x = dq_exp(g)
    np.testing.assert_allclose(dq_translation(x), 2.0 * g[5:], atol=1e-9)


def test_sclerp_endpoints_and_fixed_point(rng):
    x0 = random_unit_dq(rng)
    x1 = random_unit_dq(rng)
    np.testing.assert_allclose(sclerp(x0, x0, 0.5), x0, atol=1e-12)
    np.testing.assert_allclose(sclerp(x0, x1, 0.0), x0, atol=1e-9)
    err1 = min(np.max(np.abs(sclerp(x0, x1, 1.0) - x1)), np.max(np.abs(sclerp(x0, x1, 1.0) + x1)))
    assert err1 < 1e-9


def test_sclerp_translation_midpoint():
    x0 = dq_from_translation([0.1, -0.2, 0.3])
    x1 = dq_from_translation([0.5, 0.4, -0.1])
    mid = sclerp(x0, x1, 0.5)
    np.testing.assert_allclose(dq_translation(mid), [0.3, 0.1, 0.1], atol=1e-12)


def test_sclerp_screw_linearity(rng):
    x0 = random_unit_dq(rng)
    x1 = random_unit_dq(rng)
    if np.dot(x0[:4], x1[:4]) < 0:
        x1 = -x1
    total = dq_log(dqmul(dqconj(x0), x1))
    total_angle = 2.0 * np.linalg.norm(total[1:4])
    for tau in (0.125, 0.4, 0.75):
        xt = sclerp(x0, x1, tau)
        partial = dq_log(dqmul(dqconj(x0), xt))
        angle = 2.0 * np.linalg.norm(partial[1:4])
        assert abs(angle - tau * total_angle) < 1e-8


def test_line_construction_and_invariance(rng):
    line = line_from_point_direction([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(line[1:4], [0, 0, 1], atol=0)
    np.testing.assert_allclose(line[5:], np.zeros(3), atol=0)
    # moment equals the cross product oracle
    p, d = np.array([1.0, 0, 0]), np.array([0.0, 0, 1.0])
    line = line_from_point_direction(p, d)
    np.testing.assert_allclose(line[5:], np.cross(p, d), atol=1e-15)
    # sliding the point along the direction changes nothing
    line2 = line_from_point_direction(p + 2.0 * d, d)
    np.testing.assert_allclose(line, line2, atol=1e-12)
    with pytest.raises(ValueError):
        line_from_point_direction(p, [0.0, 0.0, 2.0])


def test_line_invariants_under_rigid_transform(rng):
    for _ in range(30):
        x = random_unit_dq(rng)
        p = rng.uniform(-1, 1, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        moved = transform_line(x, line_from_point_direction(p, d))
        l, m = moved[1:4], moved[5:]
        assert abs(np.linalg.norm(l) - 1.0) < 1e-9
        assert abs(np.dot(l, m)) < 1e-9
        assert abs(moved[0]) < 1e-12 and abs(moved[4]) < 1e-12
        # the transformed line passes through the transformed point
        q = transform_point(x, p)
        np.testing.assert_allclose(np.cross(q, l), m, atol=1e-9)


def test_plane_construction(rng):
    plane = plane_from_point_normal([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(plane[1:4], [0, 0, 1], atol=0)
    assert plane[4] == 0.0
    plane = plane_from_point_normal([0.0, 0.0, 0.5], [0.0, 0.0, 1.0])
    assert abs(plane[4] - 0.5) < 1e-15
    with pytest.raises(ValueError):
        plane_from_point_normal([0, 0, 0], [0, 0, 0.5])
    # offset invariant to in-plane displacement of the anchor point
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    p = rng.uniform(-1, 1, 3)
    base = plane_from_point_normal(p, n)
    for _ in range(20):
        shift = rng.normal(size=3)
        shift -= np.dot(shift, n) * n
        np.testing.assert_allclose(plane_from_point_normal(p + shift, n), base, atol=1e-12)


def test_canonical_sign(rng):
    x = random_unit_dq(rng)
    np.testing.assert_allclose(canonical_sign(-x, x), x, atol=0)
    np.testing.assert_allclose(canonical_sign(x, x), x, atol=0)


def test_vec8_round_trip_and_hamilton_product(rng):
    v = rng.normal(size=8)
    dq = DualQuaternion.from_vec8(v)
    np.testing.assert_allclose(dq.vec8(), v, atol=0)
    np.testing.assert_allclose(DualQuaternion().vec8(), [1, 0, 0, 0, 0, 0, 0, 0], atol=0)
    a, b = rng.normal(size=8), rng.normal(size=8)
    np.testing.assert_allclose(dqmul(a, b), hamilton_plus8(a) @ b, atol=1e-12)


def test_quaternion_wrapper(rng):
    q = Quaternion(1.0, 2.0, 3.0, 4.0)
    assert (q.w, q.x, q.y, q.z) == (1.0, 2.0, 3.0, 4.0)
    r = Quaternion.from_vec4(random_quat(rng))
    prod = (r * r.conjugate()).vec4()
    np.testing.assert_allclose(prod, [1, 0, 0, 0], atol=1e-12)
    assert abs(r.norm() - 1.0) < 1e-12


def test_dual_quaternion_wrapper(rng):
    t = rng.uniform(-1, 1, 3)
    r = random_quat(rng)
    dq = DualQuaternion.from_rt(r, t)
    assert dq.is_unit()
    np.testing.assert_allclose(dq.translation(), t, atol=1e-12)
    prod = dq * dq.conjugate()
    np.testing.assert_allclose(prod.vec8(), dqmath.DQ_IDENTITY, atol=1e-12)

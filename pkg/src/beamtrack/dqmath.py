"""Quaternion and dual quaternion algebra on plain numpy arrays.

Coefficient ordering is scalar-first everywhere and is the single source of
truth for every vector map in the package:

    quaternion       q  = (w, x, y, z)
    dual quaternion  x  = (w, x, y, z, w', x', y', z')  ==  p + eps * d

A rigid transform is x = r + eps * (1/2) t r with unit rotation quaternion r
and pure translation quaternion t.  A Pluecker line is l + eps * m with unit
direction l, moment m = p x l, both pure.  A plane is n + eps * o with unit
normal n and scalar offset o = p . n.

All functions work on float64 ndarrays; the binary quaternion/dual-quaternion
products broadcast over leading axes.  The small `Quaternion` and
`DualQuaternion` classes are thin conveniences over the same arrays.
"""

import numpy as np

# Small-angle threshold for the log/exp branch switch (rad).
SMALL_ANGLE = 1e-8

DQ_IDENTITY = np.array([1.0, 0, 0, 0, 0, 0, 0, 0])
Q_IDENTITY = np.array([1.0, 0, 0, 0])

# Componentwise quaternion conjugation of an 8-vector (used by line sandwich).
_CONJ4 = np.diag([1.0, -1.0, -1.0, -1.0])
_CONJ8 = np.diag([1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0])


def qmul(a, b):
    """Hamilton product; broadcasts over leading axes of (..., 4) inputs."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1 and b.ndim == 1:
        aw, ax, ay, az = a
        bw, bx, by, bz = b
        return np.array(
            [
                aw * bw - ax * bx - ay * by - az * bz,
                aw * bx + ax * bw + ay * bz - az * by,
                aw * by - ax * bz + ay * bw + az * bx,
                aw * bz + ax * by - ay * bx + az * bw,
            ]
        )
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def cross3(u, v):
    """Cross product of plain 3-vectors (faster than np.cross on scalars)."""
    return np.array(
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    )


def quat_to_matrix(q):
    """3x3 rotation matrix of a unit quaternion."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


def qconj(q):
    return np.asarray(q, dtype=float) * np.array([1.0, -1.0, -1.0, -1.0])


def qnorm(q):
    return np.linalg.norm(np.asarray(q, dtype=float), axis=-1)


def qrotate(r, v):
    """Rotate 3-vector(s) v by unit quaternion r via the sandwich product."""
    v = np.asarray(v, dtype=float)
    pure = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return qmul(qmul(r, pure), qconj(r))[..., 1:]


def dqmul(a, b):
    """Dual quaternion product on (..., 8) arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ap, ad = a[..., :4], a[..., 4:]
    bp, bd = b[..., :4], b[..., 4:]
    return np.concatenate([qmul(ap, bp), qmul(ap, bd) + qmul(ad, bp)], axis=-1)


def dqconj(x):
    """Quaternion conjugate of both parts; the inverse of a unit element."""
    return np.asarray(x, dtype=float) * np.array([1.0, -1, -1, -1, 1.0, -1, -1, -1])


def dq_norm_parts(x):
    """(|primary|, primary . dual) -- the two unit-norm invariants."""
    x = np.asarray(x, dtype=float)
    return np.linalg.norm(x[..., :4], axis=-1), np.sum(x[..., :4] * x[..., 4:], axis=-1)


def normalize_dq(x):
    """Project onto the unit dual quaternion manifold."""
    x = np.asarray(x, dtype=float)
    p = x[:4] / np.linalg.norm(x[:4])
    d = x[4:] / np.linalg.norm(x[:4])
    d = d - np.dot(p, d) * p
    return np.concatenate([p, d])


# ---------------------------------------------------------------------------
# Hamilton operators.  H+(a) and H-(b) realize left/right multiplication as
# linear maps: vec(a b) = H+(a) vec(b) = H-(b) vec(a).  The index/sign
# templates are derived from qmul on the quaternion basis at import time so
# the matrices can be built with a single fancy-index per call.
# ---------------------------------------------------------------------------


def _hamilton_templates():
    eye = np.eye(4)
    pi = np.zeros((4, 4), dtype=np.intp)
    ps = np.zeros((4, 4))
    mi = np.zeros((4, 4), dtype=np.intp)
    ms = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            prod = qmul(eye[i], eye[j])
            k = int(np.argmax(np.abs(prod)))
            pi[k, j] = i  # H+(a)[k, j] = sign * a[i]
            ps[k, j] = prod[k]
            mi[k, i] = j  # H-(b)[k, i] = sign * b[j]
            ms[k, i] = prod[k]
    return pi, ps, mi, ms


_HP_IDX, _HP_SGN, _HM_IDX, _HM_SGN = _hamilton_templates()


def hamilton_plus4(q):
    q = np.asarray(q, dtype=float)
    return _HP_SGN * q[_HP_IDX]


def hamilton_minus4(q):
    q = np.asarray(q, dtype=float)
    return _HM_SGN * q[_HM_IDX]


def hamilton_plus8(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros((8, 8))
    hp = _HP_SGN * x[:4][_HP_IDX]
    out[:4, :4] = hp
    out[4:, 4:] = hp
    out[4:, :4] = _HP_SGN * x[4:][_HP_IDX]
    return out


def hamilton_minus8(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros((8, 8))
    hm = _HM_SGN * x[:4][_HM_IDX]
    out[:4, :4] = hm
    out[4:, 4:] = hm
    out[4:, :4] = _HM_SGN * x[4:][_HM_IDX]
    return out


def conj4_matrix():
    return _CONJ4.copy()


def conj8_matrix():
    return _CONJ8.copy()


# ---------------------------------------------------------------------------
# Rigid transform constructors and accessors.
# ---------------------------------------------------------------------------


def quat_rotation(axis, angle):
    """Unit quaternion for a rotation of `angle` about unit 3-vector `axis`."""
    axis = np.asarray(axis, dtype=float)
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_from_matrix(rot):
    """Unit quaternion from a 3x3 rotation matrix (largest-component method)."""
    rot = np.asarray(rot, dtype=float)
    tr = np.trace(rot)
    cand = np.array([1.0 + tr, 1.0 + 2.0 * rot[0, 0] - tr, 1.0 + 2.0 * rot[1, 1] - tr, 1.0 + 2.0 * rot[2, 2] - tr])
    k = int(np.argmax(cand))
    s = 0.5 * np.sqrt(cand[k])
    c = 0.25 / s
    if k == 0:
        q = np.array([s, (rot[2, 1] - rot[1, 2]) * c, (rot[0, 2] - rot[2, 0]) * c, (rot[1, 0] - rot[0, 1]) * c])
    elif k == 1:
        q = np.array([(rot[2, 1] - rot[1, 2]) * c, s, (rot[0, 1] + rot[1, 0]) * c, (rot[0, 2] + rot[2, 0]) * c])
    elif k == 2:
        q = np.array([(rot[0, 2] - rot[2, 0]) * c, (rot[0, 1] + rot[1, 0]) * c, s, (rot[1, 2] + rot[2, 1]) * c])
    else:
        q = np.array([(rot[1, 0] - rot[0, 1]) * c, (rot[0, 2] + rot[2, 0]) * c, (rot[1, 2] + rot[2, 1]) * c, s])
    return q / np.linalg.norm(q)


def dq_from_rotation(axis, angle):
    out = np.zeros(8)
    out[:4] = quat_rotation(axis, angle)
    return out


def dq_from_translation(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(8)
    out[0] = 1.0
    out[5:] = 0.5 * t
    return out


def dq_from_rt(r, t):
    """Unit dual quaternion from rotation quaternion r and translation t."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    pure = np.concatenate([[0.0], t])
    return np.concatenate([r, 0.5 * qmul(pure, r)])


def dq_rotation(x):
    return np.asarray(x, dtype=float)[:4].copy()


def dq_translation(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * qmul(x[4:], qconj(x[:4]))[1:]


def transform_point(x, p):
    """Apply rigid transform x to 3-point p."""
    return qrotate(x[:4], p) + dq_translation(x)


def transform_line(x, line):
    """Rigid transform of a Pluecker line: x . line . conj_parts(x)."""
    x = np.asarray(x, dtype=float)
    xs = x * np.array([1.0, -1, -1, -1, 1.0, -1, -1, -1])
    return dqmul(dqmul(x, line), xs)


def skew(v):
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


# ---------------------------------------------------------------------------
# Lines and planes.
# ---------------------------------------------------------------------------


def line_from_point_direction(p, d):
    """Pluecker line l + eps (p x l) through point p with unit direction d."""
    p = np.asarray(p, dtype=float)
    d = np.asarray(d, dtype=float)
    if abs(np.linalg.norm(d) - 1.0) > 1e-9:
        raise ValueError("line direction must be a unit vector")
    out = np.zeros(8)
    out[1:4] = d
    out[5:] = np.cross(p, d)
    return out


def plane_from_point_normal(p, n):
    """Plane n + eps (p . n) through point p with unit normal n."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-9:
        raise ValueError("plane normal must be a unit vector")
    out = np.zeros(8)
    out[1:4] = n
    out[4] = np.dot(p, n)
    return out


def line_direction(line):
    return np.asarray(line, dtype=float)[1:4].copy()


def line_moment(line):
    return np.asarray(line, dtype=float)[5:].copy()


def plane_normal(plane):
    return np.asarray(plane, dtype=float)[1:4].copy()


def plane_offset(plane):
    return float(np.asarray(plane, dtype=float)[4])


# ---------------------------------------------------------------------------
# Screw logarithm / exponential and ScLERP.
#
# A unit dual quaternion is cos(h^) + n^ sin(h^) for dual angle
# h^ = h + eps * s/2 about dual axis n^ = n + eps * mbar (n . mbar = 0),
# where the screw rotates by 2h and translates by s along n.  The log packs
# this as the pure dual quaternion (0, h n | 0, h mbar + (s/2) n).
# ---------------------------------------------------------------------------


def dq_exp(g):
    """Exponential of a pure dual quaternion (zero real parts)."""
    g = np.asarray(g, dtype=float)
    u = g[1:4]
    v = g[5:]
    h = np.linalg.norm(u)
    out = np.zeros(8)
    if h < SMALL_ANGLE:
        out[0] = 1.0
        out[1:4] = u
        out[4] = -np.dot(u, v)
        out[5:] = v
        return normalize_dq(out)
    n = u / h
    vn = np.dot(v, n)
    sin_h = np.sin(h)
    cos_h = np.cos(h)
    out[0] = cos_h
    out[1:4] = sin_h * n
    out[4] = -vn * sin_h
    out[5:] = (sin_h / h) * (v - vn * n) + vn * cos_h * n
    return out


def dq_log(x):
    """Principal screw logarithm of a unit dual quaternion (pure result)."""
    x = np.asarray(x, dtype=float)
    if x[0] < 0.0:
        x = -x
    sin_h = np.linalg.norm(x[1:4])
    h = np.arctan2(sin_h, x[0])
    out = np.zeros(8)
    if sin_h < SMALL_ANGLE:
        # Pure (or nearly pure) translation: t = 2 d p*.
        t = 2.0 * qmul(x[4:], qconj(x[:4]))[1:]
        out[1:4] = x[1:4]
        out[5:] = 0.5 * t
        return out
    n = x[1:4] / sin_h
    half_s = -x[4] / sin_h
    mbar = (x[5:] - half_s * np.cos(h) * n) / sin_h
    out[1:4] = h * n
    out[5:] = h * mbar + half_s * n
    return out


def dq_pow(x, tau):
    return dq_exp(dq_log(x) * tau)


def sclerp(x0, x1, tau):
    """Screw linear interpolation between unit dual quaternions.

    The shorter screw is taken by flipping x1 when the primary parts point
    into opposite hemispheres.  Position and screw angle vary linearly in tau.
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if np.dot(x0[:4], x1[:4]) < 0.0:
        x1 = -x1
    rel = dqmul(dqconj(x0), x1)
    if np.linalg.norm(rel - DQ_IDENTITY) < 1e-12:
        return x0.copy()
    return dqmul(x0, dq_exp(dq_log(rel) * tau))


def canonical_sign(candidate, reference):
    """Flip `candidate` so its primary part has nonnegative dot with `reference`.

    Used before differencing task vectors: the double cover (and a line's two
    orientations) make x and -x equivalent, so errors are formed against the
    closer representative.
    """
    candidate = np.asarray(candidate, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if np.dot(candidate[:4], reference[:4]) < 0.0:
        return -candidate
    return candidate


# ---------------------------------------------------------------------------
# Thin object wrappers.
# ---------------------------------------------------------------------------


class Quaternion:
    """Scalar-first quaternion wrapper over a (4,) float array."""

    __slots__ = ("coeffs",)

    def __init__(self, w=1.0, x=0.0, y=0.0, z=0.0):
        self.coeffs = np.array([w, x, y, z], dtype=float)

    @classmethod
    def from_vec4(cls, v):
        q = cls.__new__(cls)
        q.coeffs = np.asarray(v, dtype=float).copy()
        return q

    @property
    def w(self):
        return float(self.coeffs[0])

    @property
    def x(self):
        return float(self.coeffs[1])

    @property
    def y(self):
        return float(self.coeffs[2])

    @property
    def z(self):
        return float(self.coeffs[3])

    def vec4(self):
        return self.coeffs.copy()

    def __mul__(self, other):
        return Quaternion.from_vec4(qmul(self.coeffs, other.coeffs))

    def conjugate(self):
        return Quaternion.from_vec4(qconj(self.coeffs))

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def normalized(self):
        return Quaternion.from_vec4(self.coeffs / np.linalg.norm(self.coeffs))

    def __repr__(self):
        return "Quaternion({:+.9g}, {:+.9g}, {:+.9g}, {:+.9g})".format(*self.coeffs)


class DualQuaternion:
    """Dual quaternion wrapper over an (8,) float array."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        if coeffs is None:
            self.coeffs = DQ_IDENTITY.copy()
        else:
            self.coeffs = np.asarray(coeffs, dtype=float).copy()
            if self.coeffs.shape != (8,):
                raise ValueError("dual quaternion needs 8 coefficients")

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_vec8(cls, v):
        return cls(v)

    @classmethod
    def from_rt(cls, rotation, translation):
        r = rotation.coeffs if isinstance(rotation, Quaternion) else rotation
        return cls(dq_from_rt(r, translation))

    @property
    def primary(self):
        return Quaternion.from_vec4(self.coeffs[:4])

    @property
    def dual(self):
        return Quaternion.from_vec4(self.coeffs[4:])

    def vec8(self):
        return self.coeffs.copy()

    def __mul__(self, other):
        return DualQuaternion(dqmul(self.coeffs, other.coeffs))

    def __neg__(self):
        return DualQuaternion(-self.coeffs)

    def conjugate(self):
        return DualQuaternion(dqconj(self.coeffs))

    def translation(self):
        return dq_translation(self.coeffs)

    def rotation(self):
        return Quaternion.from_vec4(dq_rotation(self.coeffs))

    def normalized(self):
        return DualQuaternion(normalize_dq(self.coeffs))

    def is_unit(self, tol=1e-9):
        pn, pd = dq_norm_parts(self.coeffs)
        return abs(pn - 1.0) < tol and abs(pd) < tol

    def __repr__(self):
        return "DualQuaternion([{}])".format(", ".join("{:+.9g}".format(c) for c in self.coeffs))

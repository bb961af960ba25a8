"""Serial-arm forward kinematics and Jacobians over uncertain parameters.

The arm is a standard-DH chain of n revolute joints wrapped by a base offset
and an effector offset, each a Tx Ty Tz Rx Ry Rz sequence.  Everything is
expanded into a chain of elementary transforms, one per scalar parameter:

    base(6) | per joint: Rz(q_j + theta_j), Tz(d_j), Tx(a_j), Rx(alpha_j) | effector(6)

The parameter vector has 4n + 12 entries laid out as

    [theta_1, d_1, a_1, alpha_1, ..., theta_n, d_n, a_n, alpha_n,
     base tx, ty, tz, rx, ry, rz,  effector tx, ty, tz, rx, ry, rz]

Since q_j and theta_j enter only through their sum, the Jacobian with respect
to the joint angles is the theta-offset column slice of the full parametric
Jacobian; a single incremental pass over the chain therefore produces the
pose, every partial-link pose, and all sensitivity columns at once.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dqmath
from .dqmath import (
    DQ_IDENTITY,
    conj8_matrix,
    dqconj,
    dqmul,
    hamilton_minus4,
    hamilton_minus8,
    hamilton_plus4,
    hamilton_plus8,
    qconj,
)

_ROT, _TRANS = 0, 1
_AXES = np.eye(3)
_C4 = np.diag([1.0, -1.0, -1.0, -1.0])
_C8 = conj8_matrix()

# Attachment code for the full chain (after the effector offset).
LINK_EFFECTOR = -1


def _right_basis_templates():
    """Signed-permutation templates for right-multiplication by basis i, j, k.

    Every chain node is a pure axis rotation or translation, so products with
    node elements reduce to scaled signed permutations of the coefficients:
    x . e_i is x reindexed with signs.  Templates are derived from the
    Hamilton operator of each basis element.
    """
    idx4 = np.zeros((3, 4), dtype=np.intp)
    sgn4 = np.zeros((3, 4))
    for axis in range(3):
        basis = np.zeros(4)
        basis[1 + axis] = 1.0
        ham = hamilton_minus4(basis)
        for k in range(4):
            j = int(np.argmax(np.abs(ham[k])))
            idx4[axis, k] = j
            sgn4[axis, k] = ham[k, j]
    idx8 = np.concatenate([idx4, idx4 + 4], axis=1)
    sgn8 = np.concatenate([sgn4, sgn4], axis=1)
    return idx4, sgn4, idx8, sgn8


_RIDX4, _RSGN4, _RIDX8, _RSGN8 = _right_basis_templates()


@dataclass(frozen=True)
class _Node:
    kind: int
    axis: int
    param: int
    joint: int  # joint index adding q to the scalar, or -1


def _offset_nodes(first_param):
    nodes = []
    for i in range(3):
        nodes.append(_Node(_TRANS, i, first_param + i, -1))
    for i in range(3):
        nodes.append(_Node(_ROT, i, first_param + 3 + i, -1))
    return nodes


def _build_nodes(n):
    nodes = list(_offset_nodes(4 * n))
    for j in range(n):
        p = 4 * j
        nodes.append(_Node(_ROT, 2, p, j))
        nodes.append(_Node(_TRANS, 2, p + 1, -1))
        nodes.append(_Node(_TRANS, 0, p + 2, -1))
        nodes.append(_Node(_ROT, 0, p + 3, -1))
    nodes.extend(_offset_nodes(4 * n + 6))
    return nodes


def _node_vec(node, value):
    vec = np.zeros(8)
    if node.kind == _ROT:
        half = 0.5 * value
        vec[0] = np.cos(half)
        vec[1 + node.axis] = np.sin(half)
    else:
        vec[0] = 1.0
        vec[5 + node.axis] = 0.5 * value
    return vec


def _node_dvec(node, value):
    dvec = np.zeros(8)
    if node.kind == _ROT:
        half = 0.5 * value
        dvec[0] = -0.5 * np.sin(half)
        dvec[1 + node.axis] = 0.5 * np.cos(half)
    else:
        dvec[5 + node.axis] = 0.5
    return dvec


@dataclass
class ChainState:
    """Pose and sensitivity data produced by one pass over the chain.

    `pose` is the full-chain unit dual quaternion, `jac` its 8 x p parametric
    Jacobian.  `cut_poses` / `cut_jacs` hold the same for each requested cut
    (pose of the sub-chain up to and including that attachment).
    """

    pose: np.ndarray
    jac: np.ndarray
    cut_poses: dict = field(default_factory=dict)
    cut_jacs: dict = field(default_factory=dict)


class KinematicModel:
    """Immutable DH-parameterized arm evaluable at any parameter vector."""

    def __init__(self, dh, base=None, effector=None, lower=None, upper=None, beam_axis=(0.0, 0.0, 1.0)):
        dh = np.asarray(dh, dtype=float)
        if dh.ndim != 2 or dh.shape[1] != 4:
            raise ValueError("dh must be (n, 4): theta offset, d, a, alpha per joint")
        self.n = dh.shape[0]
        self.n_params = 4 * self.n + 12
        nominal = np.zeros(self.n_params)
        nominal[: 4 * self.n] = dh.reshape(-1)
        if base is not None:
            nominal[4 * self.n : 4 * self.n + 6] = np.asarray(base, dtype=float)
        if effector is not None:
            nominal[4 * self.n + 6 :] = np.asarray(effector, dtype=float)
        self.nominal = nominal
        self.lower = np.asarray(lower, dtype=float) if lower is not None else nominal - np.inf
        self.upper = np.asarray(upper, dtype=float) if upper is not None else nominal + np.inf
        if self.lower.shape != (self.n_params,) or self.upper.shape != (self.n_params,):
            raise ValueError("parameter bounds must match the parameter count")
        beam_axis = np.asarray(beam_axis, dtype=float)
        self.beam_axis = beam_axis / np.linalg.norm(beam_axis)
        self._nodes = _build_nodes(self.n)
        self._theta_cols = np.array([4 * j for j in range(self.n)])
        self._node_kind = np.array([nd.kind for nd in self._nodes])
        self._node_axis = np.array([nd.axis for nd in self._nodes])
        self._node_param = np.array([nd.param for nd in self._nodes])
        self._joint_rows = np.array([k for k, nd in enumerate(self._nodes) if nd.joint >= 0])
        # node counts at which sub-chain snapshots can be taken
        self._cut_counts = {0: 6}
        for j in range(1, self.n + 1):
            self._cut_counts[j] = 6 + 4 * j
        self._cut_counts[LINK_EFFECTOR] = len(self._nodes)

    # -- parameter helpers ---------------------------------------------------

    @property
    def theta_columns(self):
        return self._theta_cols.copy()

    def clip_params(self, a):
        return np.clip(np.asarray(a, dtype=float), self.lower, self.upper)

    def _node_values(self, q, a):
        vals = np.asarray(a, dtype=float)[self._node_param].copy()
        vals[self._joint_rows] += np.asarray(q, dtype=float)
        return vals

    # -- evaluation ----------------------------------------------------------
    #
    # Every node is a pure axis rotation or translation, so appending one to a
    # running product needs only a scaled signed permutation of coefficients:
    #   x . Rot_i(v):  cos(v/2) x + sin(v/2) perm_i(x)
    #   x . Trans_i(v): dual part += (v/2) perm4_i(primary)
    # with perm the right-multiplication by the pure basis quaternion.

    def fk(self, q, a, cut=LINK_EFFECTOR):
        """Unit dual quaternion pose of the chain up to `cut` (default: full)."""
        vals = self._node_values(q, a)
        stop = self._cut_counts[cut]
        x = DQ_IDENTITY.copy()
        kinds, axes = self._node_kind, self._node_axis
        half = 0.5 * vals
        for k in range(stop):
            ax = axes[k]
            if kinds[k] == _ROT:
                x = np.cos(half[k]) * x + np.sin(half[k]) * (_RSGN8[ax] * x[_RIDX8[ax]])
            else:
                x = x.copy()
                x[4:] += half[k] * (_RSGN4[ax] * x[_RIDX4[ax]])
        return x

    def chain_poses(self, q, a, cuts):
        """Sub-chain poses at several cuts from a single sweep (no Jacobians)."""
        vals = self._node_values(q, a)
        wanted = {self._cut_counts[c]: c for c in cuts}
        out = {}
        if not wanted:
            return out
        x = DQ_IDENTITY.copy()
        kinds, axes = self._node_kind, self._node_axis
        half = 0.5 * vals
        for k in range(max(wanted)):
            ax = axes[k]
            if kinds[k] == _ROT:
                x = np.cos(half[k]) * x + np.sin(half[k]) * (_RSGN8[ax] * x[_RIDX8[ax]])
            else:
                x = x.copy()
                x[4:] += half[k] * (_RSGN4[ax] * x[_RIDX4[ax]])
            if k + 1 in wanted:
                out[wanted[k + 1]] = x.copy()
        return out

    def chain_state(self, q, a, cuts=()):
        """Full pose + parametric Jacobian, with snapshots at the given cuts."""
        vals = self._node_values(q, a)
        wanted = {self._cut_counts[c]: c for c in cuts}
        jac = np.zeros((8, self.n_params))
        prefix = DQ_IDENTITY.copy()
        state = ChainState(pose=None, jac=None)
        kinds, axes, params = self._node_kind, self._node_axis, self._node_param
        half = 0.5 * vals
        for k in range(len(kinds)):
            ax = axes[k]
            if kinds[k] == _ROT:
                c, s = np.cos(half[k]), np.sin(half[k])
                idx8, sgn8 = _RIDX8[ax], _RSGN8[ax]
                # running Jacobian: J . node; new column: prefix . dnode
                jac = c * jac + s * (sgn8[:, None] * jac[idx8])
                perm = sgn8 * prefix[idx8]
                jac[:, params[k]] += 0.5 * (-s * prefix + c * perm)
                prefix = c * prefix + s * perm
            else:
                idx4, sgn4 = _RIDX4[ax], _RSGN4[ax]
                jac[4:] += half[k] * (sgn4[:, None] * jac[:4][idx4])
                perm4 = sgn4 * prefix[:4][idx4]
                jac[4:, params[k]] += 0.5 * perm4
                prefix = prefix.copy()
                prefix[4:] += half[k] * perm4
            if k + 1 in wanted:
                cut = wanted[k + 1]
                state.cut_poses[cut] = prefix.copy()
                state.cut_jacs[cut] = jac.copy()
        state.pose = prefix
        state.jac = jac
        return state

    # -- task quantities -----------------------------------------------------

    def pose_jacobian(self, q, a):
        """8 x n Jacobian mapping joint rates to d/dt vec8 of the pose."""
        return self.chain_state(q, a).jac[:, self._theta_cols]

    def parametric_jacobian(self, q, a, mode="pose"):
        """8 x p Jacobian of the task vector with respect to the parameters."""
        state = self.chain_state(q, a)
        if mode == "pose":
            return state.jac
        if mode == "line":
            return line_jacobian_from_state(state.pose, state.jac, self.beam_axis)
        raise ValueError("mode must be 'pose' or 'line'")

    def line_jacobian(self, q, a, axis=None):
        """8 x n Jacobian of the beam line coefficients with respect to q."""
        axis = self.beam_axis if axis is None else np.asarray(axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("beam axis must be a unit vector")
        state = self.chain_state(q, a)
        full = line_jacobian_from_state(state.pose, state.jac, axis)
        return full[:, self._theta_cols]

    def measurement_jacobian(self, q, a, mode="pose", measured="full"):
        """r x p Jacobian of the measured components of the task vector."""
        full = self.parametric_jacobian(q, a, mode)
        if measured == "full":
            return full
        if measured == "position":
            if mode != "pose":
                raise ValueError("position-only measurement applies to pose mode")
            state = self.chain_state(q, a)
            return translation_jacobian_from_state(state.pose, state.jac)
        raise ValueError("measured must be 'full' or 'position'")

    def beam_line(self, q, a, axis=None):
        """World Pluecker line through the effector origin along the beam axis."""
        axis = self.beam_axis if axis is None else np.asarray(axis, dtype=float)
        local = dqmath.line_from_point_direction(np.zeros(3), axis)
        return dqmath.transform_line(self.fk(q, a), local)

    def task_vector(self, q, a, mode="pose"):
        if mode == "pose":
            return self.fk(q, a)
        if mode == "line":
            return self.beam_line(q, a)
        raise ValueError("mode must be 'pose' or 'line'")

    def task_jacobian(self, q, a, mode="pose"):
        if mode == "pose":
            return self.pose_jacobian(q, a)
        if mode == "line":
            return self.line_jacobian(q, a)
        raise ValueError("mode must be 'pose' or 'line'")


# ---------------------------------------------------------------------------
# Jacobian maps shared with the geometry module.  These act on a pose and its
# coefficient Jacobian (8 x cols) regardless of what the columns are.
# ---------------------------------------------------------------------------


def translation_jacobian_from_state(pose, jac):
    """4 x cols Jacobian of the translation quaternion t = 2 d p*."""
    p, d = pose[:4], pose[4:]
    jp, jd = jac[:4], jac[4:]
    return 2.0 * (hamilton_minus4(qconj(p)) @ jd + hamilton_plus4(d) @ (_C4 @ jp))


def point_jacobian_from_state(pose, jac, local_point):
    """3 x cols Jacobian of a point rigidly attached at `local_point`."""
    off = dqmath.dq_from_translation(local_point)
    jac_att = hamilton_minus8(off) @ jac
    return translation_jacobian_from_state(dqmul(pose, off), jac_att)[1:]


def line_jacobian_from_state(pose, jac, axis, local_point=(0.0, 0.0, 0.0)):
    """8 x cols Jacobian of the world line through a body-fixed point/axis."""
    local = dqmath.line_from_point_direction(np.asarray(local_point, dtype=float), axis)
    xs = pose * np.array([1.0, -1, -1, -1, 1.0, -1, -1, -1])
    amat = hamilton_minus8(dqmul(local, xs)) + hamilton_plus8(dqmul(pose, local)) @ _C8
    return amat @ jac


def smallest_singular_value(jac, zero_threshold=1e-8):
    """Smallest singular value above `zero_threshold` (0 if all are below)."""
    svals = np.linalg.svd(np.asarray(jac, dtype=float), compute_uv=False)
    nonzero = svals[svals > zero_threshold]
    if nonzero.size == 0:
        return 0.0
    return float(nonzero[-1])


@dataclass
class TaskVector:
    """Task-space vector: a pose or a beam line, as 8 coefficients."""

    mode: str
    coeffs: np.ndarray

    def __post_init__(self):
        if self.mode not in ("pose", "line"):
            raise ValueError("mode must be 'pose' or 'line'")
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (8,):
            raise ValueError("task vector needs 8 coefficients")


def finite_difference_jacobian(func, x0, h=1e-6):
    """Central-difference Jacobian of func: R^k -> R^m, used as a test oracle."""
    x0 = np.asarray(x0, dtype=float)
    f0 = np.asarray(func(x0), dtype=float)
    jac = np.zeros((f0.size, x0.size))
    for i in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (np.asarray(func(xp), dtype=float) - np.asarray(func(xm), dtype=float)) / (2.0 * h)
    return jac

"""Geometric primitives, signed distances, and velocity-damper constraint rows.

Primitives are spheres (points when the radius is zero), cylinders modeled by
their infinite axis line (lines when the radius is zero), and workspace
planes.  Robot-attached primitives carry constant local geometry in a link
frame; their world placement and all distance gradients follow from the
chain state of the kinematic model.

Each primitive pair contributes one velocity constraint row ("vector field
inequality") that bounds how fast the signed distance may shrink:

    keep-outside:   -(dd/du) udot <= eta * d
    keep-inside:    +(dd/du) udot <= -eta * d

where u is either the joint vector or the parameter vector.  Since joint
angles and their offsets enter the kinematics identically, the q-gradient is
the theta-offset column slice of the parameter gradient.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dqmath
from .kinematics import LINK_EFFECTOR, line_jacobian_from_state, point_jacobian_from_state

KEEP_OUTSIDE = "keep_outside"
KEEP_INSIDE = "keep_inside"

_MIN_LINE_DISTANCE = 1e-12


@dataclass(frozen=True)
class Sphere:
    """Sphere of given radius; radius 0 degenerates to a point."""

    name: str
    radius: float
    point: tuple  # local center if attached, world center if link is None
    link: int | None = None

    def __post_init__(self):
        if self.radius < 0.0:
            raise ValueError("sphere radius must be nonnegative")


@dataclass(frozen=True)
class Cylinder:
    """Infinite cylinder around an axis line; radius 0 degenerates to a line."""

    name: str
    radius: float
    point: tuple
    direction: tuple
    link: int | None = None

    def __post_init__(self):
        if self.radius < 0.0:
            raise ValueError("cylinder radius must be nonnegative")
        d = np.linalg.norm(np.asarray(self.direction, dtype=float))
        if abs(d - 1.0) > 1e-9:
            raise ValueError("cylinder axis direction must be a unit vector")


@dataclass(frozen=True)
class Plane:
    """Workspace plane n . p = offset with unit normal n."""

    name: str
    normal: tuple
    offset: float

    link = None

    def __post_init__(self):
        n = np.linalg.norm(np.asarray(self.normal, dtype=float))
        if abs(n - 1.0) > 1e-9:
            raise ValueError("plane normal must be a unit vector")


def point_primitive(name, point, link=None):
    return Sphere(name, 0.0, tuple(point), link)


def line_primitive(name, point, direction, link=None):
    return Cylinder(name, 0.0, tuple(point), tuple(direction), link)


@dataclass(frozen=True)
class PairSpec:
    first: str
    second: str
    direction: str = KEEP_OUTSIDE

    def __post_init__(self):
        if self.direction not in (KEEP_OUTSIDE, KEEP_INSIDE):
            raise ValueError("pair direction must be keep_outside or keep_inside")


@dataclass
class Scene:
    """Primitive inventory plus the pair list that defines the constraint stack."""

    primitives: dict
    pairs: list

    def __post_init__(self):
        seen = set()
        for pair in self.pairs:
            if pair.first not in self.primitives or pair.second not in self.primitives:
                raise ValueError(f"pair ({pair.first}, {pair.second}) references unknown primitive")
            key = (pair.first, pair.second)
            if key in seen or (key[1], key[0]) in seen:
                raise ValueError(f"duplicate primitive pair {key}")
            seen.add(key)

    def required_cuts(self):
        cuts = set()
        for prim in self.primitives.values():
            if prim.link is not None:
                cuts.add(prim.link)
        return sorted(cuts, key=lambda c: (c == LINK_EFFECTOR, c))

    def without_pair(self, first, second):
        pairs = [p for p in self.pairs if not (p.first == first and p.second == second)]
        return Scene(self.primitives, pairs)


# ---------------------------------------------------------------------------
# Plain signed distances (shared by the pair evaluator and the test oracles).
# ---------------------------------------------------------------------------


def dist_point_plane(p, plane):
    """Signed distance n . p - offset; positive on the normal side."""
    n = np.asarray(plane.normal, dtype=float)
    return float(np.dot(n, np.asarray(p, dtype=float)) - plane.offset)


def dist_point_line(p, line_point, line_dir):
    """Distance from p to the infinite line through line_point along line_dir."""
    p = np.asarray(p, dtype=float)
    l = np.asarray(line_dir, dtype=float)
    m = np.cross(np.asarray(line_point, dtype=float), l)
    return float(np.linalg.norm(np.cross(p, l) - m))


def dist_sphere_plane(center, radius, plane):
    return dist_point_plane(center, plane) - radius


def dist_sphere_cylinder(center, radius, axis_point, axis_dir, cyl_radius):
    return dist_point_line(center, axis_point, axis_dir) - radius - cyl_radius


# ---------------------------------------------------------------------------
# Pair evaluation against a chain state.
# ---------------------------------------------------------------------------


def _sphere_state(prim, chain, with_gradient):
    """World center and its parameter Jacobian (None if fixed or not wanted)."""
    point = np.asarray(prim.point, dtype=float)
    if prim.link is None:
        return point, None
    pose = chain.cut_poses[prim.link]
    center = dqmath.transform_point(pose, point)
    jac = None
    if with_gradient:
        jac = point_jacobian_from_state(pose, chain.cut_jacs[prim.link], point)
    return center, jac


def _cylinder_state(prim, chain, with_gradient):
    """World axis (l, m) and their Jacobians (None if fixed or not wanted)."""
    point = np.asarray(prim.point, dtype=float)
    direction = np.asarray(prim.direction, dtype=float)
    if prim.link is None:
        line = dqmath.line_from_point_direction(point, direction)
        return line[1:4], line[5:], None, None
    pose = chain.cut_poses[prim.link]
    local = dqmath.line_from_point_direction(point, direction)
    line = dqmath.transform_line(pose, local)
    jac_l = jac_m = None
    if with_gradient:
        jac_line = line_jacobian_from_state(pose, chain.cut_jacs[prim.link], direction, point)
        jac_l, jac_m = jac_line[1:4], jac_line[5:]
    return line[1:4], line[5:], jac_l, jac_m


def _workspace_states(scene):
    """World states of unattached spheres/cylinders; cached on the scene."""
    cached = scene.__dict__.get("_workspace_cache")
    if cached is not None:
        return cached
    states = {}
    for name, prim in scene.primitives.items():
        if getattr(prim, "link", None) is not None:
            continue
        if isinstance(prim, Sphere):
            states[name] = (np.asarray(prim.point, dtype=float), None)
        elif isinstance(prim, Cylinder):
            p = np.asarray(prim.point, dtype=float)
            d = np.asarray(prim.direction, dtype=float)
            states[name] = (d, dqmath.cross3(p, d), None, None)
    scene.__dict__["_workspace_cache"] = states
    return states


def _primitive_states(scene, chain, with_gradient):
    """World state per primitive; each link frame is expanded only once."""
    states = dict(_workspace_states(scene))
    frames = {}
    for name, prim in scene.primitives.items():
        link = getattr(prim, "link", None)
        if link is None or isinstance(prim, Plane):
            continue
        fr = frames.get(link)
        if fr is None:
            pose = chain.cut_poses[link]
            fr = (dqmath.quat_to_matrix(pose[:4]), dqmath.dq_translation(pose))
            frames[link] = fr
        rot, trans = fr
        if isinstance(prim, Sphere):
            center = rot @ np.asarray(prim.point, dtype=float) + trans
            jac = None
            if with_gradient:
                jac = point_jacobian_from_state(chain.cut_poses[link], chain.cut_jacs[link], np.asarray(prim.point, dtype=float))
            states[name] = (center, jac)
        else:
            p = np.asarray(prim.point, dtype=float)
            d = np.asarray(prim.direction, dtype=float)
            l = rot @ d
            m = rot @ dqmath.cross3(p, d) + dqmath.cross3(trans, l)
            jac_l = jac_m = None
            if with_gradient:
                jac_line = line_jacobian_from_state(chain.cut_poses[link], chain.cut_jacs[link], d, p)
                jac_l, jac_m = jac_line[1:4], jac_line[5:]
            states[name] = (l, m, jac_l, jac_m)
    return states


@dataclass
class PairState:
    distance: float
    gradient: np.ndarray
    gradient_undefined: bool = False


def _pair_state(a, b, sa, sb, n_cols, with_gradient):
    """Distance and gradient from precomputed primitive states."""
    if isinstance(b, Plane):
        if isinstance(a, (Plane, Cylinder)):
            raise ValueError("plane pairs are supported against spheres/points only")
        center, jac = sa
        dist = dist_sphere_plane(center, a.radius, b)
        grad = np.zeros(n_cols)
        if with_gradient and jac is not None:
            grad = np.asarray(b.normal, dtype=float) @ jac
        return PairState(dist, grad)
    if isinstance(a, Sphere) and isinstance(b, Cylinder):
        center, jac_c = sa
        l, m, jac_l, jac_m = sb
        u = dqmath.cross3(center, l) - m
        nu = float(np.sqrt(u @ u))
        dist = nu - a.radius - b.radius
        grad = np.zeros(n_cols)
        if nu < _MIN_LINE_DISTANCE:
            # Center exactly on the axis: the gradient direction is undefined.
            return PairState(dist, grad, gradient_undefined=True)
        if with_gradient:
            # d(u) = -S(l) dc + S(c) dl - dm and uhat' S(v) = (uhat x v)'
            uhat = u / nu
            if jac_c is not None:
                grad = grad + dqmath.cross3(l, uhat) @ jac_c
            if jac_l is not None:
                grad = grad + dqmath.cross3(uhat, center) @ jac_l - uhat @ jac_m
        return PairState(dist, grad)
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        ca, ja = sa
        cb, jb = sb
        u = ca - cb
        nu = float(np.sqrt(u @ u))
        dist = nu - a.radius - b.radius
        grad = np.zeros(n_cols)
        if nu < _MIN_LINE_DISTANCE:
            return PairState(dist, grad, gradient_undefined=True)
        if with_gradient:
            uhat = u / nu
            if ja is not None:
                grad = grad + uhat @ ja
            if jb is not None:
                grad = grad - uhat @ jb
        return PairState(dist, grad)
    raise ValueError(f"unsupported primitive pair ({type(a).__name__}, {type(b).__name__})")


def evaluate_pair(first, second, chain, n_cols, with_gradient=True):
    """Signed distance and its parameter gradient for one primitive pair."""
    a, b = first, second
    swap = False
    if isinstance(a, Plane) and not isinstance(b, Plane):
        a, b = b, a
    if isinstance(a, Cylinder) and isinstance(b, Sphere):
        a, b = b, a
    if isinstance(a, Plane) and isinstance(b, Plane):
        raise ValueError("plane-plane pairs are not supported")

    def state_of(prim):
        if isinstance(prim, Sphere):
            return _sphere_state(prim, chain, with_gradient)
        if isinstance(prim, Cylinder):
            return _cylinder_state(prim, chain, with_gradient)
        return None

    return _pair_state(a, b, state_of(a), state_of(b), n_cols, with_gradient)


@dataclass
class DistanceStack:
    """Signed distances and raw distance gradients for every scene pair."""

    distances: np.ndarray
    gradients: np.ndarray  # (s, p) rows are dd/dparams
    directions: list
    gradient_undefined: bool = False


def evaluate_scene(scene, chain, with_gradient=True):
    """One pass over the scene: each primitive's world state computed once."""
    n_cols = chain.jac.shape[1] if with_gradient else 0
    states = _primitive_states(scene, chain, with_gradient)
    dists = np.zeros(len(scene.pairs))
    grads = np.zeros((len(scene.pairs), n_cols)) if with_gradient else np.zeros((len(scene.pairs), 0))
    directions = []
    flagged = False
    for i, pair in enumerate(scene.pairs):
        a = scene.primitives[pair.first]
        b = scene.primitives[pair.second]
        sa, sb = states.get(pair.first), states.get(pair.second)
        if isinstance(a, Plane) and not isinstance(b, Plane):
            a, b, sa, sb = b, a, sb, sa
        if isinstance(a, Cylinder) and isinstance(b, Sphere):
            a, b, sa, sb = b, a, sb, sa
        state = _pair_state(a, b, sa, sb, n_cols, with_gradient)
        dists[i] = state.distance
        if with_gradient:
            grads[i] = state.gradient
        directions.append(pair.direction)
        flagged = flagged or state.gradient_undefined
    return DistanceStack(dists, grads, directions, flagged)


# ---------------------------------------------------------------------------
# Constraint rows.
# ---------------------------------------------------------------------------


@dataclass
class VfiRow:
    direction: str
    jacobian_row: np.ndarray
    bound: float
    gain: float
    distance: float
    gradient_undefined: bool = False


def vfi_row_from_state(state, direction, gain):
    if direction == KEEP_OUTSIDE:
        return VfiRow(direction, -state.gradient, gain * state.distance, gain, state.distance, state.gradient_undefined)
    return VfiRow(direction, state.gradient.copy(), -gain * state.distance, gain, state.distance, state.gradient_undefined)


def build_vfi_row(scene, pair, chain, gain, theta_columns=None):
    """Row for one pair; pass `theta_columns` to restrict to the joint space."""
    n_cols = chain.jac.shape[1]
    state = evaluate_pair(scene.primitives[pair.first], scene.primitives[pair.second], chain, n_cols)
    row = vfi_row_from_state(state, pair.direction, gain)
    if theta_columns is not None:
        row.jacobian_row = row.jacobian_row[theta_columns]
    return row


@dataclass
class VfiStack:
    rows: np.ndarray  # (s, dim)
    bounds: np.ndarray  # (s,)
    distances: np.ndarray  # (s,)
    directions: list = field(default_factory=list)
    gradient_undefined: bool = False

    @property
    def shape(self):
        return self.rows.shape


def vfi_stack(dstack, gain, theta_columns=None):
    """Constraint rows/bounds from an evaluated scene, for one gain and space."""
    grads = dstack.gradients if theta_columns is None else dstack.gradients[:, theta_columns]
    signs = np.array([-1.0 if d == KEEP_OUTSIDE else 1.0 for d in dstack.directions])
    rows = signs[:, None] * grads if grads.size else grads.copy()
    bounds = -signs * gain * dstack.distances
    return VfiStack(rows, bounds, dstack.distances.copy(), list(dstack.directions), dstack.gradient_undefined)


def build_constraint_stack(scene, chain, gain, theta_columns=None):
    """Stacked constraint rows for every pair in the scene, in pair order."""
    return vfi_stack(evaluate_scene(scene, chain), gain, theta_columns)


class _PoseOnlyChain:
    def __init__(self, cut_poses):
        self.cut_poses = cut_poses
        self.jac = None


def true_distances(scene, poses):
    """Signed distances only (no gradients), from precomputed cut poses.

    Used by the simulation harness to audit the true geometry each cycle
    without paying for Jacobians.  Returns distances in pair order.
    """
    return evaluate_scene(scene, _PoseOnlyChain(poses), with_gradient=False).distances

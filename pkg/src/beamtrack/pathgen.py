"""Cutting-path generation: 2-D sketches to timed task-space references.

A sketch is an ordered list of segments in normalized face coordinates
[0,1]^2.  Projection scales it to the face, maps it through the face pose,
and interpolates linearly at constant speed, repeating for the requested
number of circulations (closed sketches loop; open sketches ping-pong).

From the 3-D cutting path two kinds of references are produced:

  * pose paths: effector at a fixed standoff along the face normal, z-axis
    into the face, x/y completed deterministically by projecting world-up
    onto the face; consecutive waypoint poses are connected by screw linear
    interpolation;
  * line paths: the line through each path point along the inward normal.
"""

from dataclasses import dataclass

import numpy as np

from . import dqmath


@dataclass(frozen=True)
class CuttingSketch:
    """Ordered 2-D segments in [0,1]^2 plus a circulation count."""

    segments: tuple
    circulations: int = 1

    def __post_init__(self):
        if self.circulations < 1:
            raise ValueError("circulations must be >= 1")
        if not self.segments:
            raise ValueError("sketch needs at least one segment")
        for seg in self.segments:
            p0, p1 = np.asarray(seg[0], dtype=float), np.asarray(seg[1], dtype=float)
            if np.allclose(p0, p1):
                raise ValueError("sketch segment endpoints must be distinct")

    def polyline(self):
        """Vertex list of one circulation (without the repeat)."""
        pts = [np.asarray(self.segments[0][0], dtype=float)]
        for seg in self.segments:
            p0 = np.asarray(seg[0], dtype=float)
            if not np.allclose(p0, pts[-1]):
                pts.append(p0)
            pts.append(np.asarray(seg[1], dtype=float))
        return np.array(pts)

    @property
    def closed(self):
        pts = self.polyline()
        return bool(np.allclose(pts[0], pts[-1]))


@dataclass
class FaceFrame:
    """Planar face: center, orthonormal in-plane axes, outward normal, size."""

    center: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    normal: np.ndarray  # outward (toward the robot)
    width: float
    height: float

    def to_world(self, uv):
        uv = np.asarray(uv, dtype=float)
        du = (uv[..., 0] - 0.5) * self.width
        dv = (uv[..., 1] - 0.5) * self.height
        return self.center + np.outer(du, self.axis_u).reshape(uv.shape[:-1] + (3,)) + np.outer(
            dv, self.axis_v
        ).reshape(uv.shape[:-1] + (3,))

    def plane(self):
        return dqmath.plane_from_point_normal(self.center, self.normal)


@dataclass
class CuttingPath:
    """Timed samples of the cutting path on the face plane."""

    times: np.ndarray
    points: np.ndarray  # (T, 3)
    face: FaceFrame
    speed: float


def project_sketch(sketch, face, speed=0.01, dt=0.01):
    """Scale and project a sketch onto the face, sampled at constant speed."""
    if speed <= 0.0 or dt <= 0.0:
        raise ValueError("speed and dt must be positive")
    loop = sketch.polyline()
    if sketch.closed:
        cycle = loop
    else:
        cycle = np.vstack([loop, loop[-2::-1]])  # ping-pong back to the start
    verts = [cycle]
    for _ in range(sketch.circulations - 1):
        verts.append(cycle[1:])
    uv = np.vstack(verts)
    pts = face.to_world(uv)
    seglen = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arclen = np.concatenate([[0.0], np.cumsum(seglen)])
    total = arclen[-1]
    n_samples = int(np.floor(total / (speed * dt))) + 1
    times = np.arange(n_samples) * dt
    s = np.minimum(times * speed, total)
    samples = np.column_stack([np.interp(s, arclen, pts[:, k]) for k in range(3)])
    return CuttingPath(times=times, points=samples, face=face, speed=speed)


def face_orientation(face, roll=0.0):
    """Deterministic effector orientation for a face: z into it, x from world-up.

    The world up direction is projected onto the face plane (Gram-Schmidt
    against the beam direction) to fix the free rotation; an optional extra
    roll about the beam axis is applied afterwards.
    """
    z_axis = -face.normal
    up = np.array([0.0, 0.0, 1.0])
    x_axis = up - np.dot(up, z_axis) * z_axis
    nx = np.linalg.norm(x_axis)
    if nx < 1e-9:
        alt = np.array([1.0, 0.0, 0.0])
        x_axis = alt - np.dot(alt, z_axis) * z_axis
        nx = np.linalg.norm(x_axis)
    x_axis = x_axis / nx
    y_axis = np.cross(z_axis, x_axis)
    rot = np.column_stack([x_axis, y_axis, z_axis])
    quat = dqmath.quat_from_matrix(rot)
    if roll != 0.0:
        quat = dqmath.qmul(quat, dqmath.quat_rotation([0.0, 0.0, 1.0], roll))
    return quat


def pose_path(path, standoff=0.15, roll=0.0):
    """(T, 8) unit dual quaternion reference poses at a standoff from the face.

    Intermediate samples follow the screw between consecutive waypoint poses;
    because every waypoint shares the face orientation, that screw is a pure
    translation and the interpolated pose at each timestamp is the face
    orientation placed over the (already linearly interpolated) path sample
    shifted by `standoff` along the outward normal.  `sclerp_segment` exposes
    the general interpolant.
    """
    if standoff <= 0.0:
        raise ValueError("standoff must be positive")
    quat = face_orientation(path.face, roll)
    offsets = path.points + standoff * path.face.normal
    out = np.empty((offsets.shape[0], 8))
    for k in range(offsets.shape[0]):
        out[k] = dqmath.dq_from_rt(quat, offsets[k])
    return out


def sclerp_segment(x0, x1, n_samples):
    """Poses along the screw between two endpoints, endpoints included."""
    taus = np.linspace(0.0, 1.0, n_samples)
    return np.array([dqmath.sclerp(x0, x1, t) for t in taus])


def line_path(path):
    """(T, 8) Pluecker lines through each path point along the inward normal."""
    direction = -path.face.normal
    out = np.empty((path.points.shape[0], 8))
    for k, p in enumerate(path.points):
        out[k] = dqmath.line_from_point_direction(p, direction)
    return out


def builtin_sketches(span=0.1, circulations=3):
    """The four canonical sketches, centered on the face.

    `span` is the half-extent in normalized face coordinates.  The diamond is
    the square rotated by 45 degrees about the face center.
    """
    c = 0.5
    s = span
    vertical_line = CuttingSketch((((c, c + s), (c, c - s)),), circulations)
    square = CuttingSketch(
        (
            ((c - s, c + s), (c - s, c - s)),
            ((c - s, c - s), (c + s, c - s)),
            ((c + s, c - s), (c + s, c + s)),
            ((c + s, c + s), (c - s, c + s)),
        ),
        circulations,
    )
    triangle = CuttingSketch(
        (
            ((c, c + s), (c - s, c - s)),
            ((c - s, c - s), (c + s, c - s)),
            ((c + s, c - s), (c, c + s)),
        ),
        circulations,
    )
    r = s * np.sqrt(2.0)
    diamond = CuttingSketch(
        (
            ((c, c + r), (c - r, c)),
            ((c - r, c), (c, c - r)),
            ((c, c - r), (c + r, c)),
            ((c + r, c), (c, c + r)),
        ),
        circulations,
    )
    return {
        "line": vertical_line,
        "square": square,
        "triangle": triangle,
        "diamond": diamond,
    }


def write_trajectory_csv(path, times, task_vectors, mode):
    """Timestamped task vectors as CSV (t, c0..c7, mode header comment)."""
    with open(path, "w") as fh:
        fh.write("# beamtrack trajectory, mode=%s\n" % mode)
        fh.write("t," + ",".join("c%d" % k for k in range(8)) + "\n")
        for t, vec in zip(times, task_vectors):
            fh.write("%.17g," % t + ",".join("%.17g" % v for v in vec) + "\n")

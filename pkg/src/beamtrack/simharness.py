"""Closed-loop simulation: kinematic plant, synthetic measurements, protocol.

A run executes three phases in order:

  1. warm-up: the arm holds still while the adaptation law runs for a fixed
     period to improve the initial parameter estimate;
  2. approach: both laws run and the effector moves to the first reference
     pose; the entry-plane row is left out of the stack so the effector can
     cross into the operating region;
  3. tracking: the entry-plane row is appended and the desired task vector
     follows the generated path; the beam/face intersection is recorded.

The plant integrates commanded joint velocities exactly (the hardware it
stands in for is velocity-controlled).  Measurements are the true effector
pose composed with a fixed marker-attachment error and zero-mean Gaussian
noise, then renormalized.  Safety is audited every cycle against the true
geometry; a run aborts if any keep-outside distance falls below the
configured threshold.
"""

import io
from dataclasses import dataclass, field, replace

import numpy as np

from . import dqmath, geometry
from .controller import (
    FLAG_APPROACH_TIMEOUT,
    FLAG_BEAM_PARALLEL,
    AdaptiveController,
)
from .geometry import KEEP_OUTSIDE
from .kinematics import TaskVector
from .pathgen import line_path, pose_path, project_sketch

PHASE_WARMUP, PHASE_APPROACH, PHASE_TRACKING = 0, 1, 2


def simulate_plant(q, u_q, dt, qd_min=None, qd_max=None):
    """Velocity-integrator plant; the command is clamped to the velocity box."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    u = np.asarray(u_q, dtype=float)
    if qd_min is not None:
        u = np.clip(u, qd_min, qd_max)
    return np.asarray(q, dtype=float) + u * dt


def _quat_from_rotvec(v):
    angle = np.linalg.norm(v)
    if angle < 1e-15:
        return np.array([1.0, 0.0, 0.0, 0.0])
    return dqmath.quat_rotation(v / angle, angle)


def measure_pose(q, true_params, model, marker_err, noise, rng):
    """Noisy measured effector pose as a unit dual quaternion."""
    true_pose = dqmath.dqmul(model.fk(q, true_params), marker_err)
    dt3 = rng.normal(0.0, noise.pos_sigma, 3) if noise.pos_sigma > 0 else np.zeros(3)
    dr3 = rng.normal(0.0, noise.rot_sigma, 3) if noise.rot_sigma > 0 else np.zeros(3)
    if noise.spike_prob > 0.0 and rng.random() < noise.spike_prob:
        dt3 = dt3 * noise.spike_scale
    rot = dqmath.qmul(dqmath.dq_rotation(true_pose), _quat_from_rotvec(dr3))
    trans = dqmath.dq_translation(true_pose) + dt3
    return dqmath.normalize_dq(dqmath.dq_from_rt(rot, trans))


def measure(q, true_params, model, marker_err, noise, rng, mode="pose"):
    """Measured task vector in the requested parametrization."""
    pose = measure_pose(q, true_params, model, marker_err, noise, rng)
    if mode == "pose":
        return TaskVector("pose", pose)
    local = dqmath.line_from_point_direction(np.zeros(3), model.beam_axis)
    return TaskVector("line", dqmath.transform_line(pose, local))


def beam_trace(q, true_params, model, face_plane):
    """Intersection of the true beam line with the true face plane, or None."""
    line = model.beam_line(q, true_params)
    l = line[1:4]
    m = line[5:]
    n = face_plane[1:4]
    denom = float(np.dot(n, l))
    if abs(denom) <= 1e-6:
        return None
    p0 = np.cross(l, m)
    t = (face_plane[4] - float(np.dot(n, p0))) / denom
    return p0 + t * l


@dataclass
class RunRecord:
    """Per-cycle log of one experiment plus metadata."""

    meta: dict
    t: np.ndarray
    phase: np.ndarray
    q: np.ndarray
    u_q: np.ndarray
    a_hat: np.ndarray
    task_err: np.ndarray
    est_err: np.ndarray
    min_dist_est: np.ndarray
    min_dist_true: np.ndarray
    sigma_min: np.ndarray
    n_active: np.ndarray
    n_active_adapt: np.ndarray
    err_decrease_ip: np.ndarray
    flags: np.ndarray
    traced: np.ndarray
    nominal: np.ndarray
    aborted: bool = False

    def tracking_mask(self):
        return (self.phase == PHASE_TRACKING) & np.isfinite(self.traced[:, 0])

    def to_csv(self, path):
        cols = ["t", "phase"]
        cols += [f"q{i}" for i in range(self.q.shape[1])]
        cols += [f"u_q{i}" for i in range(self.u_q.shape[1])]
        cols += [f"a{i}" for i in range(self.a_hat.shape[1])]
        cols += [
            "task_err",
            "est_err",
            "min_dist_est",
            "min_dist_true",
            "sigma_min",
            "n_active",
            "n_active_adapt",
            "err_decrease_ip",
            "flags",
            "traced_x",
            "traced_y",
            "traced_z",
            "nominal_x",
            "nominal_y",
            "nominal_z",
        ]
        buf = io.StringIO()
        for key in sorted(self.meta):
            buf.write(f"# {key}={self.meta[key]}\n")
        buf.write(",".join(cols) + "\n")
        blocks = np.column_stack(
            [
                self.t,
                self.phase,
                self.q,
                self.u_q,
                self.a_hat,
                self.task_err,
                self.est_err,
                self.min_dist_est,
                self.min_dist_true,
                self.sigma_min,
                self.n_active,
                self.n_active_adapt,
                self.err_decrease_ip,
                self.flags,
                self.traced,
                self.nominal,
            ]
        )
        for row in blocks:
            buf.write(",".join("%.17g" % v for v in row) + "\n")
        with open(path, "w") as fh:
            fh.write(buf.getvalue())

    def summary(self):
        mask = self.tracking_mask()
        mean, sd = (np.nan, np.nan)
        if np.any(mask):
            mean, sd = accuracy(self.nominal[mask], self.traced[mask], self.t[mask])
        return {
            "name": self.meta.get("name", ""),
            "mode": self.meta.get("mode", ""),
            "path": self.meta.get("path", ""),
            "seed": self.meta.get("seed", ""),
            "accuracy_mean": mean,
            "accuracy_sd": sd,
            "duration": float(self.t[mask][-1] - self.t[mask][0]) if np.any(mask) else 0.0,
            "max_abs_qd": float(np.max(np.abs(self.u_q))),
            "min_dist_true": float(np.min(self.min_dist_true)),
            "max_err_decrease_ip": float(np.max(self.err_decrease_ip)),
            "min_sigma_min": float(np.min(self.sigma_min[self.phase == PHASE_TRACKING])) if np.any(self.phase == PHASE_TRACKING) else np.nan,
            "peak_task_err": float(np.max(self.task_err[self.phase == PHASE_TRACKING])) if np.any(self.phase == PHASE_TRACKING) else np.nan,
            "aborted": self.aborted,
        }


def read_record_csv(path):
    """Reload a RunRecord written by `RunRecord.to_csv`."""
    meta = {}
    with open(path) as fh:
        lines = fh.readlines()
    k = 0
    while lines[k].startswith("#"):
        key, _, val = lines[k][1:].strip().partition("=")
        meta[key.strip()] = val
        k += 1
    cols = lines[k].strip().split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[k + 1 :]])
    idx = {c: i for i, c in enumerate(cols)}
    nq = sum(1 for c in cols if c.startswith("q") and c[1:].isdigit())
    npar = sum(1 for c in cols if c.startswith("a") and c[1:].isdigit())
    return RunRecord(
        meta=meta,
        t=data[:, idx["t"]],
        phase=data[:, idx["phase"]].astype(int),
        q=data[:, idx["q0"] : idx["q0"] + nq],
        u_q=data[:, idx["u_q0"] : idx["u_q0"] + nq],
        a_hat=data[:, idx["a0"] : idx["a0"] + npar],
        task_err=data[:, idx["task_err"]],
        est_err=data[:, idx["est_err"]],
        min_dist_est=data[:, idx["min_dist_est"]],
        min_dist_true=data[:, idx["min_dist_true"]],
        sigma_min=data[:, idx["sigma_min"]],
        n_active=data[:, idx["n_active"]].astype(int),
        n_active_adapt=data[:, idx["n_active_adapt"]].astype(int),
        err_decrease_ip=data[:, idx["err_decrease_ip"]],
        flags=data[:, idx["flags"]].astype(int),
        traced=data[:, idx["traced_x"] : idx["traced_x"] + 3],
        nominal=data[:, idx["nominal_x"] : idx["nominal_x"] + 3],
        aborted=bool(int(meta.get("aborted", "0"))),
    )


# ---------------------------------------------------------------------------
# Experiment.
# ---------------------------------------------------------------------------


class _Recorder:
    def __init__(self):
        self.rows = {k: [] for k in (
            "t", "phase", "q", "u_q", "a_hat", "task_err", "est_err", "min_dist_est",
            "min_dist_true", "sigma_min", "n_active", "n_active_adapt", "err_decrease_ip",
            "flags", "traced", "nominal",
        )}

    def add(self, t, phase, q, out, a_hat, min_true, traced=None, nominal=None):
        r = self.rows
        r["t"].append(t)
        r["phase"].append(phase)
        r["q"].append(q.copy())
        r["u_q"].append(out.u_q.copy())
        r["a_hat"].append(a_hat.copy())
        r["task_err"].append(out.task_error_norm)
        r["est_err"].append(out.estimation_error_norm)
        r["min_dist_est"].append(out.min_distance)
        r["min_dist_true"].append(min_true)
        r["sigma_min"].append(out.smallest_sv)
        r["n_active"].append(out.active_constraints)
        r["n_active_adapt"].append(out.active_adapt_constraints)
        r["err_decrease_ip"].append(out.error_decrease_ip)
        r["flags"].append(out.flags)
        r["traced"].append(np.full(3, np.nan) if traced is None else np.asarray(traced, dtype=float))
        r["nominal"].append(np.full(3, np.nan) if nominal is None else np.asarray(nominal, dtype=float))

    def finish(self, meta, aborted):
        r = self.rows
        return RunRecord(
            meta=meta,
            t=np.array(r["t"]),
            phase=np.array(r["phase"], dtype=int),
            q=np.array(r["q"]),
            u_q=np.array(r["u_q"]),
            a_hat=np.array(r["a_hat"]),
            task_err=np.array(r["task_err"]),
            est_err=np.array(r["est_err"]),
            min_dist_est=np.array(r["min_dist_est"]),
            min_dist_true=np.array(r["min_dist_true"]),
            sigma_min=np.array(r["sigma_min"]),
            n_active=np.array(r["n_active"], dtype=int),
            n_active_adapt=np.array(r["n_active_adapt"], dtype=int),
            err_decrease_ip=np.array(r["err_decrease_ip"]),
            flags=np.array(r["flags"], dtype=int),
            traced=np.array(r["traced"]),
            nominal=np.array(r["nominal"]),
            aborted=aborted,
        )


def _min_true_outside(cfg, q, cuts):
    poses = cfg.model.chain_poses(q, cfg.true_params, cuts)
    dists = geometry.true_distances(cfg.scene_true, poses)
    keep_out = [i for i, p in enumerate(cfg.scene_true.pairs) if p.direction == KEEP_OUTSIDE]
    return float(np.min(dists[keep_out]))


def _move_obstacle(cfg, t, scenes):
    if not cfg.obstacle_motion.enabled:
        return
    offset = cfg.obstacle_motion.offset(t)
    primitives = cfg.scene_est.primitives
    for prims in (primitives, cfg.scene_true.primitives):
        anchor = prims.get("_obstacle_anchor", prims["c_obstacle"])
        prims["_obstacle_anchor"] = anchor
        prims["c_obstacle"] = replace(anchor, point=tuple(np.asarray(anchor.point) + offset))
    for scene in scenes:
        scene.__dict__.pop("_workspace_cache", None)


def run_experiment(cfg):
    """Execute the three-phase protocol and return the complete RunRecord."""
    model = cfg.model
    dt = cfg.dt
    rng = np.random.default_rng(cfg.seed)
    cutting_est = project_sketch(cfg.sketch, cfg.face_est, cfg.speed, dt)
    cutting_true = project_sketch(cfg.sketch, cfg.face_true, cfg.speed, dt)
    task_mode = cfg.task_mode
    if task_mode == "pose":
        refs = pose_path(cutting_est, cfg.standoff, cfg.roll)
    else:
        refs = line_path(cutting_est)
    approach_pose = pose_path(cutting_est, cfg.standoff, cfg.roll)[0]
    face_plane_true = cutting_true.face.plane()

    controller = AdaptiveController(model, cfg.scene_est, cfg.gains, a_init=model.nominal, measured=cfg.measured)
    scene_no_entry = cfg.scene_est.without_pair("s1", "plane_entry")
    all_scenes = (cfg.scene_est, cfg.scene_true, scene_no_entry)
    cuts = cfg.scene_true.required_cuts()
    recorder = _Recorder()
    q = cfg.q0.copy()
    t = 0.0
    aborted = False

    def measured_vec(mode):
        return measure(q, cfg.true_params, model, cfg.marker_err, cfg.noise, rng, mode)

    # Phase 1: warm-up (stationary adaptation).
    approach_target = TaskVector("pose", approach_pose)
    n_warm = int(round(cfg.warmup_duration / dt))
    for _ in range(n_warm):
        _move_obstacle(cfg, t, all_scenes)
        out = controller.cycle(q, approach_target, measured_vec("pose"), dt, include_pairs=scene_no_entry, move=False)
        min_true = _min_true_outside(cfg, q, cuts)
        recorder.add(t, PHASE_WARMUP, q, out, controller.a_hat, min_true)
        t += dt

    # Phase 2: approach to the first reference pose (entry-plane row left out).
    n_app = int(round(cfg.approach_timeout / dt))
    reached = False
    for _ in range(n_app):
        _move_obstacle(cfg, t, all_scenes)
        out = controller.cycle(q, approach_target, measured_vec("pose"), dt, include_pairs=scene_no_entry, move=True)
        q = simulate_plant(q, out.u_q, dt, cfg.gains.qd_min, cfg.gains.qd_max)
        min_true = _min_true_outside(cfg, q, cuts)
        recorder.add(t, PHASE_APPROACH, q, out, controller.a_hat, min_true)
        t += dt
        if min_true < cfg.safety_abort:
            aborted = True
            break
        if out.task_error_norm < cfg.approach_tol:
            reached = True
            break

    # Phase 3: tracking with the full stack.
    if not aborted:
        timeout_flag = 0 if reached else FLAG_APPROACH_TIMEOUT
        for k in range(refs.shape[0]):
            _move_obstacle(cfg, t, all_scenes)
            desired = TaskVector(task_mode, refs[k])
            out = controller.cycle(q, desired, measured_vec(task_mode), dt, move=True)
            out.flags |= timeout_flag
            timeout_flag = 0
            traced = beam_trace(q, cfg.true_params, model, face_plane_true)
            min_true = _min_true_outside(cfg, q, cuts)
            if traced is None:
                out.flags |= FLAG_BEAM_PARALLEL  # sample dropped
            recorder.add(t, PHASE_TRACKING, q, out, controller.a_hat, min_true, traced, cutting_true.points[k])
            q = simulate_plant(q, out.u_q, dt, cfg.gains.qd_min, cfg.gains.qd_max)
            t += dt
            if min_true < cfg.safety_abort:
                aborted = True
                break

    meta = {
        "name": cfg.name,
        "mode": cfg.mode,
        "path": cfg.path_name,
        "seed": cfg.seed,
        "rate": cfg.control_rate,
        "aborted": int(aborted),
    }
    return recorder.finish(meta, aborted)


# ---------------------------------------------------------------------------
# Metrics and reporting.
# ---------------------------------------------------------------------------


def accuracy(nominal, traced, times):
    """Time-averaged distance between nominal and traced paths, plus its sd.

    The mean is the trapezoidal approximation of (1/T) integral ||p_nom(t) -
    p_traced(t)|| dt; the sd is the sample standard deviation of the
    pointwise distances.
    """
    nominal = np.asarray(nominal, dtype=float)
    traced = np.asarray(traced, dtype=float)
    times = np.asarray(times, dtype=float)
    if nominal.shape != traced.shape or nominal.shape[0] != times.size or times.size == 0:
        raise ValueError("nominal and traced paths must be time-aligned and nonempty")
    dist = np.linalg.norm(nominal - traced, axis=1)
    if times.size == 1:
        return float(dist[0]), 0.0
    span = times[-1] - times[0]
    mean = float(np.trapezoid(dist, times) / span)
    sd = float(np.std(dist, ddof=1))
    return mean, sd


def report(records):
    """Aggregate accuracy per (mode, path) in a layout with per-path columns.

    Returns a dict with per-cell mean/sd (meters), per-mode overall values
    (duration-weighted mean, pooled sd), and the path column order.
    """
    if not records:
        raise ValueError("report needs at least one record")
    cells = {}
    for rec in records:
        mask = rec.tracking_mask()
        if not np.any(mask):
            continue
        dist = np.linalg.norm(rec.nominal[mask] - rec.traced[mask], axis=1)
        mean, _ = accuracy(rec.nominal[mask], rec.traced[mask], rec.t[mask])
        duration = float(rec.t[mask][-1] - rec.t[mask][0])
        key = (str(rec.meta["mode"]), str(rec.meta["path"]))
        cells.setdefault(key, {"means": [], "durations": [], "dists": []})
        cells[key]["means"].append(mean)
        cells[key]["durations"].append(duration)
        cells[key]["dists"].append(dist)
    paths = sorted({k[1] for k in cells})
    modes = sorted({k[0] for k in cells})
    table = {}
    for mode in modes:
        row = {}
        total_weight = 0.0
        total_mean = 0.0
        pooled = []
        for path in paths:
            cell = cells.get((mode, path))
            if cell is None:
                continue
            w = np.asarray(cell["durations"])
            m = np.asarray(cell["means"])
            cell_mean = float(np.sum(w * m) / np.sum(w))
            dists = np.concatenate(cell["dists"])
            row[path] = {"mean": cell_mean, "sd": float(np.std(dists, ddof=1)), "runs": len(m)}
            total_mean += cell_mean * float(np.sum(w))
            total_weight += float(np.sum(w))
            pooled.append(dists)
        alldist = np.concatenate(pooled)
        row["overall"] = {
            "mean": total_mean / total_weight,
            "sd": float(np.std(alldist, ddof=1)),
            "runs": int(sum(row[p]["runs"] for p in paths if p in row)),
        }
        table[mode] = row
    return {"paths": paths, "modes": modes, "table": table}


def format_report(summary):
    paths = summary["paths"] + ["overall"]
    lines = []
    header = "mode      " + "".join(f"{p:>22s}" for p in paths)
    lines.append(header)
    for mode in summary["modes"]:
        row = summary["table"][mode]
        cells = []
        for p in paths:
            if p in row:
                cells.append(f"{row[p]['mean'] * 1e3:8.2f} (sd {row[p]['sd'] * 1e3:5.2f})  "[:22].rjust(22))
            else:
                cells.append(" " * 22)
        lines.append(f"{mode:<10s}" + "".join(cells))
    return "\n".join(lines)


def write_report_csv(summary, path):
    paths = summary["paths"] + ["overall"]
    with open(path, "w") as fh:
        fh.write("mode," + ",".join(f"{p}_mean_mm,{p}_sd_mm" for p in paths) + "\n")
        for mode in summary["modes"]:
            row = summary["table"][mode]
            vals = []
            for p in paths:
                if p in row:
                    vals.append("%.6g,%.6g" % (row[p]["mean"] * 1e3, row[p]["sd"] * 1e3))
                else:
                    vals.append(",")
            fh.write(mode + "," + ",".join(vals) + "\n")


def write_series_csv(record, path):
    """Per-cycle error-norm and conditioning series for external plotting."""
    with open(path, "w") as fh:
        fh.write("t,phase,task_err,est_err,sigma_min,min_dist_est,min_dist_true,n_active\n")
        for k in range(record.t.size):
            fh.write(
                "%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n"
                % (
                    record.t[k],
                    record.phase[k],
                    record.task_err[k],
                    record.est_err[k],
                    record.sigma_min[k],
                    record.min_dist_est[k],
                    record.min_dist_true[k],
                    record.n_active[k],
                )
            )

"""Task-space control and parameter-adaptation laws.

Each control cycle solves two small QPs over the same kinematic state:

  * the task law picks joint velocities u_q minimizing
    ||J_task u_q + eta_q * task_error||^2 + ||Lambda_q u_q||^2 subject to the
    geometric constraint rows in the joint space and the joint velocity box;

  * the adaptation law picks parameter rates u_a minimizing
    ||J_meas u_a + eta_a * estimation_error||^2 + ||Lambda_a u_a||^2 subject
    to the geometric rows in parameter space, rate bounds that keep the
    estimate inside its trust region, an optional equality block protecting
    unmeasured components, and a final row forbidding any adaptation
    direction that would increase the task error.

The task vector is either the effector pose or the beam line, both as 8
coefficients; desired and measured vectors are sign-canonicalized against the
estimate every cycle before differencing.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dqmath, geometry, qpsolver
from .dqmath import canonical_sign
from .kinematics import TaskVector, line_jacobian_from_state, smallest_singular_value, translation_jacobian_from_state

FLAG_TASK_INFEASIBLE = 1
FLAG_ADAPT_INFEASIBLE = 2
FLAG_GRADIENT_UNDEFINED = 4
FLAG_SAFETY_ABORT = 8
FLAG_APPROACH_TIMEOUT = 16
FLAG_BEAM_PARALLEL = 32


@dataclass
class ControllerGains:
    """Gains of the two laws; defaults mirror the experiment configuration."""

    eta_task: float = 50.0
    eta_adapt: float = 5.0
    eta_vfi_task: float = 5.0
    eta_vfi_adapt: float = 5.0
    damping_task: np.ndarray = field(default_factory=lambda: np.full(6, 0.02))
    damping_adapt: np.ndarray = field(default_factory=lambda: np.full(36, 0.02))
    qd_min: np.ndarray = field(default_factory=lambda: np.full(6, -0.2))
    qd_max: np.ndarray = field(default_factory=lambda: np.full(6, 0.2))

    def __post_init__(self):
        self.damping_task = np.asarray(self.damping_task, dtype=float)
        self.damping_adapt = np.asarray(self.damping_adapt, dtype=float)
        self.qd_min = np.asarray(self.qd_min, dtype=float)
        self.qd_max = np.asarray(self.qd_max, dtype=float)
        for gain in (self.eta_task, self.eta_adapt, self.eta_vfi_task, self.eta_vfi_adapt):
            if gain <= 0.0:
                raise ValueError("gains must be positive")
        if np.any(self.damping_task <= 0.0) or np.any(self.damping_adapt <= 0.0):
            raise ValueError("damping diagonals must be positive")
        if np.any(self.qd_min >= self.qd_max):
            raise ValueError("velocity bounds must satisfy qd_min < qd_max")


@dataclass
class ConstraintSet:
    """Stacked constraint blocks fed to one QP."""

    B: np.ndarray
    b: np.ndarray
    W: np.ndarray
    w: np.ndarray
    N: np.ndarray = None
    n_rhs: np.ndarray = None

    def inequalities(self):
        return np.vstack([self.B, self.W]), np.concatenate([self.b, self.w])


@dataclass
class ControlCycleOutput:
    u_q: np.ndarray
    u_a: np.ndarray
    task_error_norm: float
    estimation_error_norm: float
    min_distance: float
    smallest_sv: float
    active_constraints: int
    active_adapt_constraints: int
    error_decrease_ip: float
    flags: int = 0


def make_task_error(estimate, desired):
    """Coefficient error estimate - desired after sign canonicalization."""
    if isinstance(estimate, TaskVector):
        if not isinstance(desired, TaskVector) or estimate.mode != desired.mode:
            raise ValueError("task vectors must share a mode")
        est, des = estimate.coeffs, desired.coeffs
    else:
        est, des = np.asarray(estimate, dtype=float), np.asarray(desired, dtype=float)
    return est - canonical_sign(des, est)


class AdaptiveController:
    """Owns the estimated parameters and the warm-started QP instances."""

    def __init__(self, model, scene, gains, a_init=None, measured="full", qp_tol=1e-10, qp_max_iter=200):
        self.model = model
        self.scene = scene
        self.gains = gains
        self.a_hat = np.array(model.nominal if a_init is None else a_init, dtype=float)
        self.measured = measured
        self._qp_task = qpsolver.QpSolver(tol=qp_tol, max_iter=qp_max_iter)
        self._qp_adapt = qpsolver.QpSolver(tol=qp_tol, max_iter=qp_max_iter)
        self._theta_cols = model.theta_columns
        self._vel_rows = np.vstack([-np.eye(model.n), np.eye(model.n)])

    # -- pieces ---------------------------------------------------------------

    def task_state(self, chain, mode):
        """Task vector and its q/parameter Jacobians from a chain state."""
        if mode == "pose":
            coeffs = chain.pose
            jac_a = chain.jac
        else:
            local = dqmath.line_from_point_direction(np.zeros(3), self.model.beam_axis)
            coeffs = dqmath.transform_line(chain.pose, local)
            jac_a = line_jacobian_from_state(chain.pose, chain.jac, self.model.beam_axis)
        return coeffs, jac_a[:, self._theta_cols], jac_a

    def measurement_jacobian_from_state(self, chain, jac_a):
        if self.measured == "full":
            return jac_a
        return translation_jacobian_from_state(chain.pose, chain.jac)

    def unmeasured_projector(self, chain, jac_a):
        """Equality block that freezes unmeasured task components (may be empty)."""
        if self.measured == "full":
            return np.zeros((0, self.model.n_params)), np.zeros(0)
        # Position-only measurement: protect the orientation block.
        return jac_a[:4].copy(), np.zeros(4)

    def velocity_box(self):
        return self._vel_rows, np.concatenate([-self.gains.qd_min, self.gains.qd_max])

    def parameter_rate_box(self):
        eta = self.gains.eta_vfi_adapt
        n_p = self.model.n_params
        rows = np.vstack([np.eye(n_p), -np.eye(n_p)])
        rhs = np.concatenate([eta * (self.model.upper - self.a_hat), eta * (self.a_hat - self.model.lower)])
        return rows, rhs

    # -- one full cycle ---------------------------------------------------------

    def cycle(self, q, desired, measured_vec, dt, include_pairs=None, move=True, adapt=True):
        """Run both laws at the current state and integrate the estimate.

        `desired` and `measured_vec` are TaskVectors of the same mode (the
        mode may change between calls, e.g. a pose-mode approach before
        line-mode tracking).  `include_pairs` optionally restricts the scene
        to a subset of pairs (used to defer the entry-plane row).
        """
        mode = desired.mode
        scene = self.scene if include_pairs is None else include_pairs
        chain = self.model.chain_state(q, self.a_hat, cuts=scene.required_cuts())
        estimate, jac_q, jac_a = self.task_state(chain, mode)
        task_err = estimate - canonical_sign(desired.coeffs, estimate)
        flags = 0

        # Both laws share one evaluation of the scene distances/gradients.
        dstack = geometry.evaluate_scene(scene, chain)
        if dstack.gradient_undefined:
            flags |= FLAG_GRADIENT_UNDEFINED

        # Task law.
        stack_q = geometry.vfi_stack(dstack, self.gains.eta_vfi_task, theta_columns=self._theta_cols)
        vel_rows, vel_rhs = self.velocity_box()
        cons_q = ConstraintSet(stack_q.rows, stack_q.bounds, vel_rows, vel_rhs)
        u_q = np.zeros(self.model.n)
        n_active_q = 0
        if move:
            a_rows, a_rhs = cons_q.inequalities()
            prob = qpsolver.assemble(jac_q, self.gains.eta_task, task_err, self.gains.damping_task, a_rows, a_rhs)
            sol = self._qp_task.solve(prob)
            if sol.status == qpsolver.INFEASIBLE:
                flags |= FLAG_TASK_INFEASIBLE
            else:
                u_q = sol.u
                n_active_q = len(sol.active_set)

        # Adaptation law.
        est_err = np.zeros(8)
        u_a = np.zeros(self.model.n_params)
        n_active_a = 0
        ip = 0.0
        if adapt:
            est_err = estimate - canonical_sign(measured_vec.coeffs, estimate)
            jac_meas = self.measurement_jacobian_from_state(chain, jac_a)
            stack_a = geometry.vfi_stack(dstack, self.gains.eta_vfi_adapt)
            rate_rows, rate_rhs = self.parameter_rate_box()
            decrease_row = jac_a.T @ task_err
            a_rows = np.vstack([stack_a.rows, rate_rows, decrease_row])
            a_rhs = np.concatenate([stack_a.bounds, rate_rhs, [0.0]])
            n_eq, n_eq_rhs = self.unmeasured_projector(chain, jac_a)
            prob = qpsolver.assemble(
                jac_meas,
                self.gains.eta_adapt,
                est_err[: jac_meas.shape[0]],
                self.gains.damping_adapt,
                a_rows,
                a_rhs,
                n_eq if n_eq.shape[0] else None,
                n_eq_rhs if n_eq.shape[0] else None,
            )
            sol_a = self._qp_adapt.solve(prob)
            if sol_a.status == qpsolver.INFEASIBLE:
                flags |= FLAG_ADAPT_INFEASIBLE
            else:
                u_a = sol_a.u
                n_active_a = len(sol_a.active_set)
            ip = float(decrease_row @ u_a)
            self.a_hat = self.a_hat + dt * u_a

        return ControlCycleOutput(
            u_q=u_q,
            u_a=u_a,
            task_error_norm=float(np.linalg.norm(task_err)),
            estimation_error_norm=float(np.linalg.norm(est_err)),
            min_distance=float(np.min(stack_q.distances)) if stack_q.distances.size else np.inf,
            smallest_sv=smallest_singular_value(jac_q),
            active_constraints=n_active_q,
            active_adapt_constraints=n_active_a,
            error_decrease_ip=ip,
            flags=flags,
        )

    # -- standalone entry points (spec operations) -------------------------------

    def task_control_step(self, q, desired, include_pairs=None):
        """Joint velocities from the task law alone (no state change)."""
        a_saved = self.a_hat.copy()
        dummy = TaskVector(desired.mode, desired.coeffs)
        out = self.cycle(q, desired, dummy, dt=0.0, include_pairs=include_pairs, move=True, adapt=False)
        self.a_hat = a_saved
        return out.u_q, out

    def adaptation_step(self, q, desired, measured_vec, dt=0.0, include_pairs=None):
        """Parameter rates from the adaptation law alone (integrates if dt > 0)."""
        out = self.cycle(q, desired, measured_vec, dt=dt, include_pairs=include_pairs, move=False, adapt=True)
        return out.u_a, out

    def run_warmup(self, q, desired, measure_fn, duration, dt, include_pairs=None):
        """Stationary adaptation phase: only the adaptation law executes."""
        cycles = int(round(duration / dt))
        outputs = []
        for _ in range(cycles):
            measured_vec = measure_fn(q)
            out = self.cycle(q, desired, measured_vec, dt, include_pairs=include_pairs, move=False, adapt=True)
            outputs.append(out)
        return self.a_hat.copy(), outputs

"""Dense strictly convex QP solver.

Solves

    minimize    (1/2) u' H u + f' u
    subject to  A_ineq u <= b_ineq
                A_eq   u  = b_eq

for symmetric positive definite H by a dual active-set method: start at the
unconstrained optimum, repeatedly add the most violated constraint, and take
combined primal/dual steps that keep the working-set KKT system satisfied,
dropping constraints whose multipliers would go negative.  Because H > 0 the
solution is unique, every iterate is the exact optimum of a subproblem, and
identical inputs produce bitwise-identical outputs.

Infeasibility is certified when a violated constraint's normal lies in the
cone of the active normals (zero primal step) and no active inequality can be
released.  Warm starting retains the previous active set and tries those
constraints first, which is effective across consecutive control cycles.
"""

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"

_SLOPE_EPS = 1e-12


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A_ineq: np.ndarray = None
    b_ineq: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        n = self.f.size
        if self.H.shape != (n, n):
            raise ValueError("H must be square and match f")
        if np.max(np.abs(self.H - self.H.T)) > 1e-10:
            raise ValueError("H must be symmetric")
        if self.A_ineq is None:
            self.A_ineq = np.zeros((0, n))
            self.b_ineq = np.zeros(0)
        else:
            self.A_ineq = np.atleast_2d(np.asarray(self.A_ineq, dtype=float))
            self.b_ineq = np.atleast_1d(np.asarray(self.b_ineq, dtype=float))
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            self.b_eq = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        if self.A_ineq.shape != (self.b_ineq.size, n) or self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError("constraint blocks must match the variable count")

    @property
    def n(self):
        return self.f.size

    def objective(self, u):
        u = np.asarray(u, dtype=float)
        return 0.5 * float(u @ self.H @ u) + float(self.f @ u)


@dataclass
class QpSolution:
    u: np.ndarray
    status: str
    active_set: list = field(default_factory=list)
    iterations: int = 0
    kkt_residual: float = np.inf
    objective: float = np.nan


def assemble(jac, eta, error, damping, a_ineq=None, b_ineq=None, a_eq=None, b_eq=None):
    """Build the QP for min ||J u + eta e||^2 + ||Lambda u||^2 over the rows given.

    `damping` is the diagonal of Lambda (or a full matrix); it must be
    strictly positive so the Hessian is positive definite.
    """
    jac = np.asarray(jac, dtype=float)
    error = np.asarray(error, dtype=float)
    damping = np.asarray(damping, dtype=float)
    if damping.ndim == 1:
        if np.any(damping <= 0.0):
            raise ValueError("damping must be strictly positive")
        lam2 = np.diag(damping**2)
    else:
        lam2 = damping.T @ damping
        if np.min(np.linalg.eigvalsh(lam2)) <= 0.0:
            raise ValueError("damping must be strictly positive definite")
    if jac.shape[0] != error.size or jac.shape[1] != lam2.shape[0]:
        raise ValueError("jacobian, error, and damping dimensions disagree")
    hess = jac.T @ jac + lam2
    grad = eta * (jac.T @ error)
    return QpProblem(hess, grad, a_ineq, b_ineq, a_eq, b_eq)


class _Chol:
    def __init__(self, H):
        self.L = np.linalg.cholesky(H)

    def solve(self, rhs):
        y = np.linalg.solve(self.L, rhs)
        return np.linalg.solve(self.L.T, y)


class QpSolver:
    """Reusable solver instance holding warm-start state for one control loop."""

    def __init__(self, tol=1e-8, max_iter=200):
        self.tol = tol
        self.max_iter = max_iter
        self._last_active = []

    def reset(self):
        self._last_active = []

    def solve(self, problem, warm_start=True):
        n = problem.n
        chol = _Chol(problem.H)  # raises LinAlgError if H is not PD
        u = chol.solve(-problem.f)

        # Constraints in normal form  normal' u >= offset.
        s = problem.b_ineq.size
        normals = -problem.A_ineq
        offsets = -problem.b_ineq

        work_idx = []  # -1-based equality tag or inequality index
        work_n = np.zeros((0, n))
        work_hinv_n = np.zeros((n, 0))
        work_lam = np.zeros(0)
        work_is_eq = []
        iterations = 0

        def residual_of(k):
            return offsets[k] - float(normals[k] @ u)

        def worst_violation():
            if not s:
                return -1, 0.0
            viol = offsets - normals @ u
            if work_idx:
                members = [k for k in work_idx if k >= 0]
                if members:
                    viol[members] = -np.inf
            k = int(np.argmax(viol))
            return k, float(viol[k])

        def drop(j):
            nonlocal work_n, work_hinv_n, work_lam
            work_idx.pop(j)
            work_is_eq.pop(j)
            work_n = np.delete(work_n, j, axis=0)
            work_hinv_n = np.delete(work_hinv_n, j, axis=1)
            work_lam = np.delete(work_lam, j)

        def add_constraint(normal, offset, idx, is_eq):
            """Drive constraint normal' u >= offset into the working set.

            Returns True on success, False when the problem is infeasible.
            """
            nonlocal u, work_n, work_hinv_n, work_lam, iterations
            lam_new = 0.0
            while True:
                iterations += 1
                if iterations > self.max_iter:
                    return None
                hinv_np = chol.solve(normal)
                if work_n.shape[0]:
                    gram = work_n @ hinv_np
                    try:
                        r = np.linalg.solve(work_n @ work_hinv_n, gram)
                    except np.linalg.LinAlgError:
                        r = np.linalg.lstsq(work_n @ work_hinv_n, gram, rcond=None)[0]
                    z = hinv_np - work_hinv_n @ r
                else:
                    r = np.zeros(0)
                    z = hinv_np
                slope = float(normal @ z)
                viol = offset - float(normal @ u)

                # Dual step bound: first active inequality whose multiplier hits 0.
                t1 = np.inf
                blocker = -1
                for j in range(work_n.shape[0]):
                    if not work_is_eq[j] and r[j] > _SLOPE_EPS:
                        cand = work_lam[j] / r[j]
                        if cand < t1:
                            t1 = cand
                            blocker = j
                t2 = viol / slope if slope > _SLOPE_EPS else np.inf

                if t2 == np.inf and t1 == np.inf:
                    if abs(viol) <= self.tol:
                        return True  # dependent but consistent; enforcement implied
                    return False
                step = min(t1, t2)
                if t2 < np.inf:
                    u = u + step * z
                if work_lam.size:
                    work_lam = work_lam - step * r
                lam_new += step
                if t2 <= t1:
                    work_idx.append(idx)
                    work_is_eq.append(is_eq)
                    work_n = np.vstack([work_n, normal])
                    work_hinv_n = np.hstack([work_hinv_n, chol.solve(normal).reshape(-1, 1)])
                    work_lam = np.append(work_lam, lam_new)
                    return True
                drop(blocker)

        # Equalities first; they stay in the working set for the whole solve.
        for k in range(problem.b_eq.size):
            normal = problem.A_eq[k].copy()
            offset = float(problem.b_eq[k])
            if float(normal @ u) > offset:
                normal = -normal
                offset = -offset
            ok = add_constraint(normal, offset, -(k + 1), True)
            if ok is None:
                return self._finish(problem, u, MAX_ITERATIONS, work_idx, work_lam, work_n, iterations)
            if not ok:
                return QpSolution(np.zeros(n), INFEASIBLE, [], iterations, np.inf, np.nan)

        # Warm start: previously active inequalities first, then most-violated.
        if warm_start:
            for k in self._last_active:
                if k < s and residual_of(k) > self.tol and k not in work_idx:
                    ok = add_constraint(normals[k], offsets[k], k, False)
                    if ok is None:
                        return self._finish(problem, u, MAX_ITERATIONS, work_idx, work_lam, work_n, iterations)
                    if not ok:
                        return QpSolution(np.zeros(n), INFEASIBLE, [], iterations, np.inf, np.nan)

        while True:
            worst, worst_viol = worst_violation()
            if worst_viol <= self.tol:
                self._last_active = [k for k in work_idx if k >= 0]
                return self._finish(problem, u, OPTIMAL, work_idx, work_lam, work_n, iterations)
            ok = add_constraint(normals[worst], offsets[worst], worst, False)
            if ok is None:
                return self._finish(problem, u, MAX_ITERATIONS, work_idx, work_lam, work_n, iterations)
            if not ok:
                return QpSolution(np.zeros(n), INFEASIBLE, [], iterations, np.inf, np.nan)

    def _finish(self, problem, u, status, work_idx, work_lam, work_n, iterations):
        active = sorted(k for k in work_idx if k >= 0)
        res = kkt_residual(problem, u, work_idx, work_lam, work_n)
        return QpSolution(u.copy(), status, active, iterations, res, problem.objective(u))


def kkt_residual(problem, u, work_idx=None, work_lam=None, work_n=None):
    """Scaled max violation of stationarity, feasibility, and complementarity."""
    grad = problem.H @ u + problem.f
    if work_n is not None and work_n.shape[0]:
        grad = grad - work_n.T @ work_lam
    scale = max(1.0, float(np.max(np.abs(problem.f))) if problem.f.size else 1.0)
    stat = float(np.max(np.abs(grad))) / scale
    feas = 0.0
    if problem.b_ineq.size:
        feas = float(np.max(problem.A_ineq @ u - problem.b_ineq))
        feas = max(0.0, feas) / max(1.0, float(np.max(np.abs(problem.b_ineq))))
    eq_feas = 0.0
    if problem.b_eq.size:
        eq_feas = float(np.max(np.abs(problem.A_eq @ u - problem.b_eq)))
        eq_feas = eq_feas / max(1.0, float(np.max(np.abs(problem.b_eq))))
    comp = 0.0
    dual = 0.0
    if work_idx is not None:
        for j, k in enumerate(work_idx):
            if k >= 0:
                slack = float(problem.b_ineq[k] - problem.A_ineq[k] @ u)
                comp = max(comp, abs(work_lam[j] * slack))
                dual = max(dual, -work_lam[j])
    return max(stat, feas, eq_feas, comp, dual)


# ---------------------------------------------------------------------------
# Plain-text problem dumps (CLI + regression fixtures).
# ---------------------------------------------------------------------------


def write_problem(problem, path):
    def block(fh, name, arr):
        fh.write(name + "\n")
        arr = np.atleast_2d(arr)
        for row in arr:
            fh.write(" ".join("%.17g" % v for v in row) + "\n")

    with open(path, "w") as fh:
        fh.write("# beamtrack qp dump v1\n")
        fh.write("n %d\n" % problem.n)
        fh.write("s %d\n" % problem.b_ineq.size)
        fh.write("t %d\n" % problem.b_eq.size)
        block(fh, "H", problem.H)
        block(fh, "f", problem.f)
        if problem.b_ineq.size:
            block(fh, "A_ineq", problem.A_ineq)
            block(fh, "b_ineq", problem.b_ineq)
        if problem.b_eq.size:
            block(fh, "A_eq", problem.A_eq)
            block(fh, "b_eq", problem.b_eq)


def read_problem(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    header = {}
    i = 0
    while i < len(lines) and lines[i].split()[0] in ("n", "s", "t"):
        key, val = lines[i].split()
        header[key] = int(val)
        i += 1
    n, s, t = header["n"], header["s"], header["t"]

    def take(name, rows):
        nonlocal i
        if lines[i] != name:
            raise ValueError(f"expected block {name}, found {lines[i]!r}")
        i += 1
        out = np.array([[float(v) for v in lines[i + r].split()] for r in range(rows)])
        i += rows
        return out

    H = take("H", n)
    f = take("f", 1)[0]
    a_ineq = b_ineq = a_eq = b_eq = None
    if s:
        a_ineq = take("A_ineq", s)
        b_ineq = take("b_ineq", 1)[0]
    if t:
        a_eq = take("A_eq", t)
        b_eq = take("b_eq", 1)[0]
    return QpProblem(H, f, a_ineq, b_ineq, a_eq, b_eq)

"""Command-line entry points: run, report, validate-jacobians, solve-qp."""

import argparse
import os
import sys

import numpy as np

from . import config, geometry, qpsolver, simharness


def _cmd_run(args):
    if args.scenario == "default":
        scenario = config.default_scenario(
            mode=args.mode or "acpo",
            path=args.path or "square",
            seed=args.seed if args.seed is not None else 0,
            exact=args.exact,
            roll=np.deg2rad(args.roll_deg),
        )
    else:
        scenario = config.load_scenario(args.scenario)
        if args.mode or args.path or args.seed is not None:
            scenario = config.default_scenario(
                mode=args.mode or scenario.mode,
                path=args.path or scenario.path_name,
                seed=args.seed if args.seed is not None else scenario.seed,
                exact=args.exact,
                roll=np.deg2rad(args.roll_deg),
            )
    record = simharness.run_experiment(scenario)
    os.makedirs(args.out, exist_ok=True)
    log_path = os.path.join(args.out, f"run_{scenario.name}.csv")
    record.to_csv(log_path)
    summary = record.summary()
    print(f"log: {log_path}")
    for key in ("accuracy_mean", "accuracy_sd", "max_abs_qd", "min_dist_true", "min_sigma_min"):
        print(f"{key}: {summary[key]:.6g}")
    if record.aborted:
        print("SAFETY ABORT: true interpenetration exceeded the threshold", file=sys.stderr)
        return 2
    return 0


def _cmd_report(args):
    records = [simharness.read_record_csv(p) for p in args.records]
    summary = simharness.report(records)
    print(simharness.format_report(summary))
    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "accuracy_table.csv")
    simharness.write_report_csv(summary, table_path)
    for rec in records:
        series_path = os.path.join(args.out, f"series_{rec.meta.get('name', 'run')}.csv")
        simharness.write_series_csv(rec, series_path)
    print(f"table: {table_path}")
    return 0


def _cmd_validate_jacobians(args):
    from .kinematics import finite_difference_jacobian

    scenario = config.default_scenario()
    model = scenario.model
    scene = scenario.scene_est
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.samples):
        q = rng.uniform(-np.pi, np.pi, model.n)
        a = rng.uniform(model.lower, model.upper)
        for mode in ("pose", "line"):
            jac = model.task_jacobian(q, a, mode)
            fd = finite_difference_jacobian(lambda qq: model.task_vector(qq, a, mode), q)
            worst = max(worst, float(np.max(np.abs(jac - fd))))
            jac_a = model.parametric_jacobian(q, a, mode)
            fd_a = finite_difference_jacobian(lambda aa: model.task_vector(q, aa, mode), a)
            worst = max(worst, float(np.max(np.abs(jac_a - fd_a))))
        chain = model.chain_state(q, a, cuts=scene.required_cuts())
        stack = geometry.build_constraint_stack(scene, chain, 1.0)

        def dists_of(aa):
            poses = model.chain_poses(q, aa, scene.required_cuts())
            return geometry.true_distances(scene, poses)

        fd_rows = finite_difference_jacobian(dists_of, a)
        for i, pair in enumerate(scene.pairs):
            sign = -1.0 if pair.direction == geometry.KEEP_OUTSIDE else 1.0
            worst = max(worst, float(np.max(np.abs(sign * stack.rows[i] - fd_rows[i]))))
    print(f"max |analytic - finite difference| over {args.samples} samples: {worst:.3e}")
    if worst > 1e-5:
        print("FAIL: exceeds 1e-5", file=sys.stderr)
        return 1
    print("OK")
    return 0


def _cmd_solve_qp(args):
    problem = qpsolver.read_problem(args.dump)
    solver = qpsolver.QpSolver()
    sol = solver.solve(problem)
    print(f"status: {sol.status}")
    print(f"iterations: {sol.iterations}")
    print(f"kkt_residual: {sol.kkt_residual:.3e}")
    print(f"objective: {sol.objective:.12g}")
    print("u: " + " ".join("%.12g" % v for v in sol.u))
    print("active_set: " + " ".join(str(i) for i in sol.active_set))
    return 0 if sol.status == qpsolver.OPTIMAL else 1


def main(argv=None):
    parser = argparse.ArgumentParser(prog="beamtrack", description="Adaptive constrained beam path-tracking testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one closed-loop experiment")
    p_run.add_argument("--scenario", default="default", help="scenario YAML file or 'default'")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--mode", choices=["acpo", "aclo"], default=None)
    p_run.add_argument("--path", choices=["line", "square", "triangle", "diamond"], default=None)
    p_run.add_argument("--roll-deg", type=float, default=0.0, help="extra roll about the beam axis (degrees)")
    p_run.add_argument("--exact", action="store_true", help="zero all uncertainty and noise")
    p_run.add_argument("--out", default="out")
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="aggregate accuracy over run logs")
    p_rep.add_argument("records", nargs="+")
    p_rep.add_argument("--out", default="out")
    p_rep.set_defaults(func=_cmd_report)

    p_val = sub.add_parser("validate-jacobians", help="check analytic Jacobians against finite differences")
    p_val.add_argument("--samples", type=int, default=20)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=_cmd_validate_jacobians)

    p_qp = sub.add_parser("solve-qp", help="solve a QP problem dump")
    p_qp.add_argument("dump")
    p_qp.set_defaults(func=_cmd_solve_qp)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: ``dlqg check|solve|simulate PROBLEM.json``.

Exit codes
----------
0  success
1  unreadable or invalid problem file
2  pencil not regular, system ill-posed, or (check) not stabilizable
3  KYP inequality infeasible (cost unbounded below)
4  system not stabilizable (solve, simulate)
5  ensemble did not converge (terminal moment above threshold)
6  instance not supported by the Lur'e backends, or no explicit feedback
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import _linalg as la
from . import lure
from .exceptions import (EnsembleNotConverged, IllPosed, NotRegular, NotStabilizable,
                         Unsupported)
from .io import ProblemError, dumps, load_problem, matrix_to_json, rnd, validate_report
from .lqg import TERM_EPS, require_converged, solve_ocp, suboptimality_gap, terminal_threshold
from .pencil import is_regular
from .simulate import SimConfig, simulate
from .system import (check_stabilizable, check_wellposed, compute_system_space, compute_vdiff,
                     discount_transform, feedback_equivalence_form)

EXIT_OK, EXIT_PARSE, EXIT_ILLPOSED, EXIT_INFEASIBLE, EXIT_UNSTABILIZABLE, EXIT_NOT_CONVERGED, EXIT_UNSUPPORTED = range(7)


def _err(msg):
    print(f"dlqg: {msg}", file=sys.stderr)


def _complex(z):
    return None if z is None else [rnd(z.real), rnd(z.imag)]


def cmd_check(args):
    prob, _ = load_problem(args.problem)
    s = discount_transform(prob.sys)
    report = {"regular_pencil": is_regular(s.pencil), "wellposed": None, "stabilizable": None,
              "failing_lambda": None, "vdiff_dim": None, "vsys_dim": None, "block_sizes": None}
    if report["regular_pencil"]:
        ff = feedback_equivalence_form(s)
        report["block_sizes"] = [ff.n1, ff.n2, ff.n3]
        report["vsys_dim"] = compute_system_space(ff).rank
        report["wellposed"] = check_wellposed(s)["wellposed"]
        if report["wellposed"]:
            report["vdiff_dim"] = compute_vdiff(ff).rank
            st = check_stabilizable(s)
            report["stabilizable"] = st["stabilizable"]
            report["failing_lambda"] = _complex(st["failing_lambda"])
    validate_report("check", report)
    print(dumps(report))
    return EXIT_OK if report["wellposed"] and report["stabilizable"] else EXIT_ILLPOSED


def _solve_report(rep):
    sol = rep.solution
    out = {"feasible": rep.feasible, "verdict": rep.verdict, "regular": rep.regular,
           "pencil_ok": rep.pencil_ok, "space_ok": rep.space_ok,
           "W_plus": None if rep.W_plus is None else rnd(rep.W_plus),
           "term_initial": None if rep.term_initial is None else rnd(rep.term_initial),
           "term_noise": None if rep.term_noise is None else rnd(rep.term_noise),
           "q": None, "stabilizing": None, "backend": None, "P": None, "K": None, "L": None,
           "feedback": None}
    if sol is not None:
        out.update(q=sol.q, stabilizing=sol.stabilizing, backend=sol.backend,
                   P=matrix_to_json(sol.P), K=matrix_to_json(sol.K),
                   L=matrix_to_json(sol.L))
    if rep.feedback is not None:
        out["feedback"] = matrix_to_json(rep.feedback)
    return out


def cmd_solve(args):
    prob, _ = load_problem(args.problem)
    rep = solve_ocp(prob, backend=args.backend)
    out = _solve_report(rep)
    validate_report("solve", out)
    print(dumps(out))
    if not rep.feasible:
        _err("KYP infeasible: the optimal cost is unbounded below")
        return EXIT_INFEASIBLE
    return EXIT_OK


def _seed(args, sim):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("DLQG_SEED")
    if env:
        return int(env)
    return int(sim.get("seed", 0))


def cmd_simulate(args):
    prob, sim = load_problem(args.problem)
    rep = solve_ocp(prob, backend=args.backend)
    if not rep.feasible:
        _err("KYP infeasible: the optimal cost is unbounded below")
        return EXIT_INFEASIBLE
    control = args.control or sim.get("control", "optimal")
    if isinstance(control, str) and control == "optimal":
        if rep.feedback is None:
            _err("no explicit optimal feedback (q != m or L singular); pass --control zero")
            return EXIT_UNSUPPORTED
        control_law, label = rep.feedback, "optimal"
    elif isinstance(control, str):
        control_law, label = "zero", "zero"
    else:
        control_law, label = control, "matrix"
    cfg = SimConfig(
        dt=args.dt or sim.get("dt", 1e-3), tf=args.tf or sim.get("tf", 10.0),
        n_paths=args.paths or sim.get("paths", 1000), seed=_seed(args, sim), control=control_law,
        x0_mean=prob.x0_mean, x0_cov=prob.x0_cov,
        save_every=args.save_every or sim.get("save_every", 1),
    )
    ens = simulate(prob.sys, cfg)
    require_converged(prob, ens, args.term_eps)
    gap = suboptimality_gap(prob, rep.solution, ens, args.term_eps)
    out = {"J_est": rnd(gap["J_est"]), "std_error": rnd(gap["J_std_error"]),
           "gap_est": rnd(gap["gap_est"]), "gap_std_error": rnd(gap["gap_std_error"]),
           "W_plus": rnd(gap["W_plus"]), "identity_residual": rnd(gap["identity_residual"]),
           "identity_std_error": rnd(gap["std_error"]),
           "terminal_moment": rnd(ens.terminal_moment),
           "terminal_threshold": rnd(terminal_threshold(prob, args.term_eps, ens.initial_moment)),
           "algebraic_residual": rnd(ens.algebraic_residual), "control": label,
           "seed": cfg.seed, "paths": cfg.n_paths, "dt": cfg.dt, "tf": cfg.tf}
    validate_report("simulate", out)
    if args.out:
        write_csv(args.out, ens)
    print(dumps(out))
    return EXIT_OK


def write_csv(path, ens):
    """Columns ``t``, mean state, mean input and the state second moments ``E[x_i x_j]`` (i <= j)."""
    n, m = ens.x.shape[2], ens.u.shape[2]
    xbar = ens.x.mean(axis=0)
    ubar = ens.u.mean(axis=0)
    iu = np.triu_indices(n)
    m2 = np.einsum("pti,ptj->tij", ens.x, ens.x) / ens.n_paths
    header = (["t"] + [f"x{i}_mean" for i in range(n)] + [f"u{i}_mean" for i in range(m)]
              + [f"x{i}x{j}_moment" for i, j in zip(*iu)])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for k, t in enumerate(ens.t):
            row = [t, *xbar[k], *ubar[k], *m2[k][iu]]
            wr.writerow([f"{v:.12g}" for v in row])


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("problem", help="problem file (JSON)")
    common.add_argument("--rank-tol", type=float, default=None,
                        help="relative rank tolerance (default: 1e3 * max(shape) * eps)")
    common.add_argument("--psd-tol", type=float, default=lure.PSD_TOL,
                        help=f"relative semidefiniteness tolerance (default: {lure.PSD_TOL:g})")
    common.add_argument("--term-eps", type=float, default=TERM_EPS,
                        help=f"terminal moment tolerance factor (default: {TERM_EPS:g})")
    common.add_argument("--backend", choices=["auto", "riccati", "even"], default="auto")

    parser = argparse.ArgumentParser(prog="dlqg", description="Discounted LQG for stochastic descriptor systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="regularity, well-posedness, stabilizability")
    sub.add_parser("solve", parents=[common], help="optimal cost, Lur'e solution, feedback law")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo validation of the cost identity")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (fallback: $DLQG_SEED, then the file)")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--tf", type=float, default=None)
    p.add_argument("--save-every", type=int, default=None)
    p.add_argument("--control", choices=["optimal", "zero"], default=None)
    p.add_argument("--out", default=None, help="CSV file for mean and second-moment trajectories")
    return parser


COMMANDS = {"check": cmd_check, "solve": cmd_solve, "simulate": cmd_simulate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    old_rank, old_psd = la.REL_TOL, lure.PSD_TOL
    la.REL_TOL, lure.PSD_TOL = args.rank_tol, args.psd_tol
    try:
        return COMMANDS[args.command](args)
    except ProblemError as err:
        _err(str(err))
        return EXIT_PARSE
    except (NotRegular, IllPosed) as err:
        _err(str(err))
        return EXIT_ILLPOSED
    except NotStabilizable as err:
        _err(f"not stabilizable: {err}")
        return EXIT_UNSTABILIZABLE
    except EnsembleNotConverged as err:
        _err(str(err))
        return EXIT_NOT_CONVERGED
    except Unsupported as err:
        _err(f"unsupported: {err}")
        return EXIT_UNSUPPORTED
    finally:
        la.REL_TOL, lure.PSD_TOL = old_rank, old_psd


if __name__ == "__main__":
    sys.exit(main())

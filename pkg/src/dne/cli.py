"""Command line driver: scenario runs, verification suite, parameter sweeps."""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

import numpy as np

from . import checks as ck
from .elliptic import (EllipticProblem, FailedToFit, NonConvergence, bump_seed,
                       make_subsolution, make_supersolution, solve,
                       solve_lambda_problem, solve_stationary)
from .evolution import EvolutionSetup, evolve
from .io_utils import write_field_csv, write_json
from .meshing import l2_norm_diff_power
from .operators import (ExponentField, LerayLionsOperator, classify_regime,
                        seeded_rng)
from .scenario import ParseError, Scenario, ValidationError, load_scenario

DEFAULT_CHECKS = [
    "alg-inequality", "picone", "picone-pair", "lambda-scaling", "positivity-hopf",
    "contraction-elliptic", "contraction-parabolic", "sandwich", "monotone",
    "stabilization",
]


def _manifest_base(scenario: Scenario, seed: int, threads: Optional[int]) -> dict:
    mesh = scenario.build_mesh()
    op = scenario.build_operator(mesh)
    return {
        "config_echo": scenario.raw_text,
        "seed": seed,
        "threads": threads if threads is not None else 1,
        "threads_note": "assembly is sequential and deterministic; the flag is "
                        "recorded for reproducibility only",
        "regime": classify_regime(op.exponent, scenario.q).value,
        "p_minus": op.exponent.p_minus,
        "p_plus": op.exponent.p_plus,
        "q": scenario.q,
    }


def _report_dict(report) -> dict:
    return {
        "iterations": report.iterations,
        "final_gradient_norm": report.final_gradient_norm,
        "energy": report.energy,
        "line_search_failures": report.line_search_failures,
        "regularization_floor_hit": report.regularization_floor_hit,
    }


def run_solve_elliptic(scenario: Scenario, out_dir: str, seed: int,
                       threads: Optional[int]) -> int:
    mesh = scenario.build_mesh()
    op = scenario.build_operator(mesh)
    h0 = scenario.build_potential(mesh)(0.0)
    problem = EllipticProblem.standard(mesh, op, scenario.q, scenario.lam, h0,
                                       scenario.build_source(mesh))
    field_, report = solve(problem, bump_seed(mesh), scenario.tolerance)
    write_field_csv(field_, os.path.join(out_dir, "solution.csv"))
    manifest = _manifest_base(scenario, seed, threads)
    manifest["solver_report"] = _report_dict(report)
    manifest["sup_norm"] = field_.sup_norm
    write_json(manifest, os.path.join(out_dir, "manifest.json"))
    return 0


def run_stationary(scenario: Scenario, out_dir: str, seed: int,
                   threads: Optional[int]) -> int:
    mesh = scenario.build_mesh()
    op = scenario.build_operator(mesh)
    potential = scenario.build_potential(mesh)
    v_stat = solve_stationary(mesh, op, scenario.q, potential.limit,
                              scenario.build_source(mesh), scenario.tolerance)
    write_field_csv(v_stat, os.path.join(out_dir, "stationary.csv"))
    manifest = _manifest_base(scenario, seed, threads)
    manifest["sup_norm"] = v_stat.sup_norm
    write_json(manifest, os.path.join(out_dir, "manifest.json"))
    return 0


def run_evolve(scenario: Scenario, out_dir: str, seed: int,
               threads: Optional[int]) -> int:
    setup = scenario.build_evolution_setup()
    traj = evolve(setup)
    for pos, n in enumerate(traj.stored_indices):
        write_field_csv(traj.fields[pos], os.path.join(out_dir, f"field_{n:05d}.csv"))
    mesh = setup.mesh
    v_stat = solve_stationary(mesh, setup.op, setup.q, setup.potential.limit,
                              setup.source, setup.tolerance)
    e_final = l2_norm_diff_power(traj.final, v_stat, setup.q)
    manifest = _manifest_base(scenario, seed, threads)
    manifest.update({
        "times": traj.times.tolist(),
        "stored_indices": traj.stored_indices,
        "dissipation_ok": traj.dissipation_ok,
        "dissipation_margin": traj.dissipation_margin,
        "sandwich_constant": setup.sandwich_constant,
        "stabilization_error_final": e_final,
        "diagnostics": [{
            "index": d.index, "time": d.time,
            "increment_norm": d.increment_norm,
            "stationary_energy": d.stationary_energy,
            "solver": _report_dict(d.report),
        } for d in traj.diagnostics],
    })
    write_json(manifest, os.path.join(out_dir, "manifest.json"))
    return 0


def _scenario_trajectories(scenario: Scenario, max_steps: int = 50):
    """Shortened runs (same dt) reused by the trajectory-based checks."""
    setup = scenario.build_evolution_setup()
    steps = min(setup.steps, max_steps)
    horizon = setup.dt * steps
    base = EvolutionSetup.create(setup.mesh, setup.op, setup.q, setup.source,
                                 setup.potential, horizon, steps, setup.initial,
                                 tolerance=setup.tolerance)
    return setup, base


def run_verify(scenario: Scenario, out_dir: str, names: Optional[List[str]],
               seed: int, threads: Optional[int]) -> int:
    names = names or DEFAULT_CHECKS
    mesh = scenario.build_mesh()
    op = scenario.build_operator(mesh)
    source = scenario.build_source(mesh)
    potential = scenario.build_potential(mesh)
    q = scenario.q
    r_mid = (1.0 + op.exponent.p_minus) / 2.0
    reports = []
    for name in names:
        if name == "alg-inequality":
            reports.append(ck.check_alg_inequality(q, seed=seed))
        elif name == "picone":
            reports.append(ck.check_picone(mesh, op, r_mid, seed=seed))
        elif name == "picone-pair":
            rng = seeded_rng(seed, "picone-pair-fields")
            worst = None
            for _ in range(8):
                w1 = _positive_field(mesh, rng)
                w2 = _positive_field(mesh, rng)
                rep = ck.check_picone_pair(mesh, op, r_mid, w1, w2)
                if worst is None or rep.worst_margin < worst.worst_margin:
                    worst = rep
            reports.append(worst)
        elif name == "lambda-scaling":
            op_const = LerayLionsOperator.from_blocks(
                ExponentField.constant(mesh.n_elements, op.exponent.p_minus),
                op.partition, [op.weights[j] for j in range(len(op.partition))])
            reports.append(ck.check_lambda_scaling(mesh, op_const, [0.5, 1.0, 2.0, 4.0],
                                                   scenario.tolerance))
        elif name == "positivity-hopf":
            v_stat = solve_stationary(mesh, op, q, potential.limit, source,
                                      scenario.tolerance)
            reports.append(ck.check_positivity_hopf(v_stat))
        elif name == "contraction-elliptic":
            h1 = potential(0.0)
            reports.append(ck.check_contraction_elliptic(
                mesh, op, q, scenario.lam, source, h1, h1 + 0.1,
                scenario.tolerance))
        elif name == "contraction-parabolic":
            _, base = _scenario_trajectories(scenario)
            traj1 = evolve(base)
            shrunk = base.initial.with_values(0.7 * base.initial.values)
            base2 = EvolutionSetup.create(base.mesh, base.op, base.q, base.source,
                                          base.potential, base.horizon, base.steps,
                                          shrunk, tolerance=base.tolerance)
            traj2 = evolve(base2)
            reports.append(ck.check_contraction_parabolic(
                traj1, traj2, base.potential, base.potential))
        elif name in ("sandwich", "monotone"):
            _, base = _scenario_trajectories(scenario)
            w_lo, _ = make_subsolution(mesh, op, q, source,
                                       potential.lower_envelope, base.initial,
                                       tolerance=scenario.tolerance)
            w_hi, _ = make_supersolution(mesh, op, q, source, potential.sup_norm,
                                         base.initial, tolerance=scenario.tolerance)
            traj = evolve(base)
            if name == "sandwich":
                reports.append(ck.check_sandwich(traj, w_lo, w_hi))
            else:
                lo_setup = EvolutionSetup.create(base.mesh, base.op, base.q,
                                                 base.source, base.potential,
                                                 base.horizon, base.steps, w_lo,
                                                 tolerance=base.tolerance)
                hi_setup = EvolutionSetup.create(base.mesh, base.op, base.q,
                                                 base.source, base.potential,
                                                 base.horizon, base.steps, w_hi,
                                                 tolerance=base.tolerance)
                reports.append(ck.check_monotone_run(evolve(lo_setup), "nondecreasing"))
                reports.append(ck.check_monotone_run(evolve(hi_setup), "nonincreasing"))
        elif name == "stabilization":
            setup = scenario.build_evolution_setup()
            traj = evolve(setup)
            v_stat = solve_stationary(mesh, op, q, potential.limit, source,
                                      scenario.tolerance)
            reports.append(ck.check_stabilization(traj, v_stat, [2.0], potential))
        else:
            raise ParseError(f"unknown check '{name}' "
                             f"(available: {', '.join(DEFAULT_CHECKS)})")
    payload = [r.to_dict() for r in reports]
    write_json(payload, os.path.join(out_dir, "report.json"))
    failed = [r for r in reports if not r.passed]
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(f"{status}  {r.check_name:24s} worst margin {r.worst_margin:+.3e}  "
              f"({r.location})")
    return 1 if failed else 0


def _positive_field(mesh, rng):
    """Random strictly positive interior field for the paired-comparison loop."""
    from .meshing import DiscreteField
    vals = np.zeros(mesh.n_vertices)
    interior = mesh.interior
    scale = float(rng.uniform(0.5, 2.0))
    base = np.abs(np.sin(np.pi * (mesh.vertices[interior, 0] - mesh.bounds[0])
                         / (mesh.bounds[1] - mesh.bounds[0])))
    vals[interior] = scale * (0.2 + base + rng.uniform(0.0, 0.3, interior.size))
    return DiscreteField(mesh, vals)


def run_sweep(scenario: Scenario, out_dir: str, seed: int,
              threads: Optional[int]) -> int:
    mesh = scenario.build_mesh()
    manifest = _manifest_base(scenario, seed, threads)
    lines = []
    if scenario.sweep_kind == "lambda":
        op = scenario.build_operator(mesh)
        sups = []
        for lam in scenario.sweep_lambdas:
            w = solve_lambda_problem(lam, mesh, op, scenario.tolerance)
            sups.append(w.sup_norm)
            lines.append(f"{lam!r},{w.sup_norm!r}")
        header = "# columns: lambda,sup_norm"
        if op.exponent.is_constant and len(sups) >= 3:
            slope = float(np.polyfit(np.log(scenario.sweep_lambdas),
                                     np.log(sups), 1)[0])
            manifest["fitted_slope"] = slope
            manifest["expected_slope"] = 1.0 / (op.exponent.p_minus - 1.0)
    elif scenario.sweep_kind == "pq":
        # the grid q generally breaks the scenario source's (f_1)/(f_2)
        # constraints, so the stationary solves run without the source term
        header = "# columns: p,q,regime,stationary_sup_norm"
        potential = scenario.build_potential(mesh)
        for p in scenario.sweep_p_values:
            for qv in scenario.sweep_q_values:
                exponent = ExponentField.constant(mesh.n_elements, p)
                op = LerayLionsOperator.isotropic(exponent, 1.0, mesh.dimension)
                if not (1.0 < qv < p):
                    lines.append(f"{p!r},{qv!r},invalid,nan")
                    continue
                regime = classify_regime(exponent, qv).value
                v = solve_stationary(mesh, op, qv, potential.limit, None,
                                     scenario.tolerance)
                lines.append(f"{p!r},{qv!r},{regime},{v.sup_norm!r}")
    else:
        raise ParseError("scenario has no [sweep] section or unknown sweep kind")
    from .io_utils import atomic_write_text
    atomic_write_text(os.path.join(out_dir, "summary.csv"),
                      "\n".join([header] + lines) + "\n")
    write_json(manifest, os.path.join(out_dir, "manifest.json"))
    return 0


def run(command: str, scenario: Scenario, out_dir: str,
        checks: Optional[List[str]] = None, seed: Optional[int] = None,
        threads: Optional[int] = None) -> int:
    os.makedirs(out_dir, exist_ok=True)
    actual_seed = seed if seed is not None else scenario.seed
    if command == "solve-elliptic":
        return run_solve_elliptic(scenario, out_dir, actual_seed, threads)
    if command == "stationary":
        return run_stationary(scenario, out_dir, actual_seed, threads)
    if command == "evolve":
        return run_evolve(scenario, out_dir, actual_seed, threads)
    if command == "verify":
        return run_verify(scenario, out_dir, checks, actual_seed, threads)
    if command == "sweep":
        return run_sweep(scenario, out_dir, actual_seed, threads)
    raise ParseError(f"unknown command '{command}'")


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dne",
        description="Doubly nonlinear p(x)-diffusion: elliptic and parabolic "
                    "solves plus the verification suite.")
    parser.add_argument("command", choices=["solve-elliptic", "evolve",
                                            "stationary", "verify", "sweep"])
    parser.add_argument("--config", required=True, help="scenario file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--check", action="append", default=None,
                        help="verify: run this named check (repeatable)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)
    try:
        scenario = load_scenario(args.config)
        return run(args.command, scenario, args.out, checks=args.check,
                   seed=args.seed, threads=args.threads)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergence, FailedToFit) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Implicit Euler semi-discretization of the doubly nonlinear flow.

Each step averages the potential over the time window and solves the
time-step elliptic problem with lam = dt and h0 = dt * h^n + v_{n-1}^q, so the
iterate satisfies

    ((v_n^q - v_{n-1}^q)/dt) v_n^{q-1} - div a(x, grad v_n) = h^n v_n^{q-1} + f(x, v_n).

The per-run dissipation diagnostic accumulates the squared increments and the
telescoped modular difference and compares them against the potential and
source budget; a violation beyond the stated slack marks the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .elliptic import (EllipticProblem, NonConvergence, SolverReport, bump_seed,
                       solve, solve_lambda_problem)
from .meshing import (DiscreteField, Mesh, boundary_distance_field,
                      l2_norm_diff_power, l2_norm_values, modular)
from .operators import (LerayLionsOperator, PotentialField, SourceTerm,
                        eval_source)

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(5)
DISSIPATION_SLACK = 1.05


@dataclass(frozen=True)
class EvolutionSetup:
    """A validated run description; `sandwich_constant` is the smallest c with
    delta/c <= v0 <= c*delta at the interior quadrature points."""

    mesh: Mesh
    op: LerayLionsOperator
    q: float
    source: Optional[SourceTerm]
    potential: PotentialField
    horizon: float
    steps: int
    initial: DiscreteField
    sandwich_constant: float
    tolerance: Optional[float] = None
    store_stride: int = 1

    @classmethod
    def create(cls, mesh, op, q, source, potential, horizon, steps, initial,
               tolerance=None, store_stride=1) -> "EvolutionSetup":
        if horizon <= 0.0 or steps < 1:
            raise ValueError("need horizon > 0 and at least one step")
        if not (1.0 < q < op.exponent.p_minus):
            raise ValueError("q must lie in (1, p_-)")
        if initial.mesh is not mesh:
            raise ValueError("initial datum lives on a different mesh")
        delta = boundary_distance_field(mesh).quadrature
        vb = initial.barycenter_values()
        if np.any(vb <= 0.0):
            raise ValueError("initial datum must be positive at interior quadrature points")
        c = float(max(np.max(vb / delta), np.max(delta / vb)))
        return cls(mesh, op, q, source, potential, horizon, steps, initial,
                   sandwich_constant=c, tolerance=tolerance,
                   store_stride=max(1, int(store_stride)))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


@dataclass
class StepDiagnostics:
    index: int
    time: float
    report: SolverReport
    increment_norm: float
    stationary_energy: float
    h_norm_sq: float
    f_ratio_norm_sq: float


@dataclass
class Trajectory:
    times: np.ndarray
    fields: List[DiscreteField]
    stored_indices: List[int]
    diagnostics: List[StepDiagnostics]
    q: float
    power: float = 1.0
    dissipation_ok: bool = True
    dissipation_margin: float = np.inf

    def field_at(self, n: int) -> DiscreteField:
        try:
            return self.fields[self.stored_indices.index(n)]
        except ValueError:
            raise KeyError(f"step {n} was not stored (stride thinning)") from None

    @property
    def final(self) -> DiscreteField:
        return self.fields[-1]


def average_potential(h: PotentialField, n: int, dt: float) -> np.ndarray:
    """h^n(x) = (1/dt) int_{t_{n-1}}^{t_n} h(s, x) ds by 5-point Gauss-Legendre."""
    if n < 1:
        raise ValueError("step index starts at 1")
    t0 = (n - 1) * dt
    ts = t0 + (GAUSS_NODES + 1.0) * dt / 2.0
    acc = None
    for t, w in zip(ts, GAUSS_WEIGHTS):
        term = w * h(t)
        acc = term if acc is None else acc + term
    return acc / 2.0


def time_integral_norm(mesh: Mesh, h: PotentialField, g: PotentialField,
                       t_end: float, n_steps: int, positive_part: bool = False) -> np.ndarray:
    """Cumulative integral_0^{t_n} ||(h - g)^(+)||_L2 ds for n = 0..n_steps by
    per-step Gauss quadrature; returns the array over step indices."""
    dt = t_end / n_steps
    out = np.zeros(n_steps + 1)
    for n in range(1, n_steps + 1):
        ts = (n - 1) * dt + (GAUSS_NODES + 1.0) * dt / 2.0
        val = 0.0
        for t, w in zip(ts, GAUSS_WEIGHTS):
            diff = h(t) - g(t)
            if positive_part:
                diff = np.maximum(diff, 0.0)
            val += w * l2_norm_values(mesh, diff)
        out[n] = out[n - 1] + val * dt / 2.0
    return out


def step(setup: EvolutionSetup, previous: DiscreteField, h_n: np.ndarray,
         dt: float, extra_starts=None) -> tuple[DiscreteField, SolverReport]:
    """One implicit Euler step, warm-started from the previous iterate."""
    vbq = np.maximum(previous.barycenter_values(), 0.0) ** setup.q
    h0 = dt * h_n + vbq
    problem = EllipticProblem.standard(setup.mesh, setup.op, setup.q, dt, h0,
                                       setup.source)
    return solve(problem, previous, setup.tolerance, extra_starts=extra_starts)


def _f_ratio_sq(setup: EvolutionSetup, v: DiscreteField) -> float:
    if setup.source is None:
        return 0.0
    mesh = setup.mesh
    vb = np.maximum(v.barycenter_values(), 0.0)
    ks = np.arange(mesh.n_elements)
    fv = np.asarray(eval_source(setup.source, ks, vb))
    ratio = np.where(vb > 0.0, fv / np.where(vb > 0.0, vb, 1.0) ** (setup.q - 1.0), 0.0)
    return l2_norm_values(mesh, ratio) ** 2


def evolve(setup: EvolutionSetup) -> Trajectory:
    """Run the full scheme; step failures carry the step index and leave the
    partial trajectory on the exception."""
    mesh, dt = setup.mesh, setup.dt
    seeds = [bump_seed(mesh)]
    try:
        seeds.append(solve_lambda_problem(1.0, mesh, setup.op, setup.tolerance))
    except NonConvergence:
        pass  # defensive seed only; the warm start still participates
    times = np.linspace(0.0, setup.horizon, setup.steps + 1)
    traj = Trajectory(times=times, fields=[setup.initial], stored_indices=[0],
                      diagnostics=[], q=setup.q)
    v = setup.initial
    inc_sq_sum = 0.0
    budget_sum = 0.0
    mod0 = modular(setup.initial, setup.op)
    worst_margin = np.inf
    for n in range(1, setup.steps + 1):
        h_n = average_potential(setup.potential, n, dt)
        try:
            v_new, report = step(setup, v, h_n, dt, extra_starts=seeds)
        except NonConvergence as exc:
            exc.args = (f"step {n}: {exc.args[0]}",)
            exc.trajectory = traj
            raise
        inc = l2_norm_diff_power(v_new, v, setup.q) / dt
        h_norm_sq = l2_norm_values(mesh, h_n) ** 2
        f_sq = _f_ratio_sq(setup, v_new)
        stat_energy = _stationary_energy(setup, h_n, v_new)
        traj.diagnostics.append(StepDiagnostics(
            index=n, time=times[n], report=report, increment_norm=inc,
            stationary_energy=stat_energy, h_norm_sq=h_norm_sq,
            f_ratio_norm_sq=f_sq))
        inc_sq_sum += 0.5 * dt * inc ** 2
        budget_sum += dt * (h_norm_sq + f_sq)
        lhs = inc_sq_sum + setup.q * (modular(v_new, setup.op) - mod0)
        margin = DISSIPATION_SLACK * budget_sum + 1e-12 - lhs
        worst_margin = min(worst_margin, margin)
        if n % setup.store_stride == 0 or n == setup.steps:
            traj.fields.append(v_new)
            traj.stored_indices.append(n)
        v = v_new
    traj.dissipation_margin = worst_margin
    traj.dissipation_ok = worst_margin >= 0.0
    return traj


def _stationary_energy(setup: EvolutionSetup, h_n: np.ndarray,
                       v: DiscreteField) -> float:
    from .elliptic import energy
    problem = EllipticProblem.stationary(setup.mesh, setup.op, setup.q, h_n,
                                         setup.source)
    return energy(problem, v)


def change_of_variables_u(traj: Trajectory) -> Trajectory:
    """Nodal power map u = v^q; the transformed run solves the operator-form
    problem and inherits the distance sandwich with exponent q."""
    p = traj.q * traj.power if traj.power != 1.0 else traj.q
    fields = [DiscreteField(f.mesh, np.maximum(f.values, 0.0) ** traj.q)
              for f in traj.fields]
    return Trajectory(times=traj.times, fields=fields,
                      stored_indices=list(traj.stored_indices),
                      diagnostics=traj.diagnostics, q=traj.q, power=p,
                      dissipation_ok=traj.dissipation_ok,
                      dissipation_margin=traj.dissipation_margin)

"""Elliptic solves by projected damped Newton on a coercive step energy.

Every variant minimizes (a sub-family of)

    J(v) = 1/(2q) int (v+)^2q  +  lam int A(x, grad v)/p(x)
           - 1/q int h0 (v+)^q  -  s_w int F(x, v)  -  int load * v

over the nonnegative cone of the P1 space.  The time-step problem keeps all
terms with s_w = lam; the pure-load problem keeps only diffusion and a linear
load; the stationary problem drops the (v+)^2q term.  Iterates are projected
onto {v >= 0}, realizing the positive-part truncation the energy is built on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .meshing import DiscreteField, Mesh, l2_norm_diff_power
from .operators import (LerayLionsOperator, SourceTerm, eval_A, eval_flux,
                        eval_source, flux_jacobian_batch, source_antiderivative)

ARMIJO_C = 1e-4
BACKTRACK = 0.5
MAX_BACKTRACKS = 60
HESSIAN_EPS = 1e-8
# Tighter than strictly needed for the residual itself: keeps nodal noise well
# below the 1e-8 ordering slack used by the comparison checks.
DEFAULT_TOL = {1: 1e-11, 2: 1e-8}
PICARD_TOL = 1e-10
MU_FLOOR = 1e-12
KAPPA_CEIL = 1e12


class Variant(enum.Enum):
    STANDARD = "standard"
    PURE_LAMBDA = "pure-lambda"
    STATIONARY = "stationary"
    SUBSOLUTION = "subsolution"
    SUPERSOLUTION = "supersolution"


class InvalidProblem(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class FailedToFit(RuntimeError):
    pass


@dataclass
class SolverReport:
    iterations: int = 0
    final_gradient_norm: float = np.inf
    energy: float = np.inf
    line_search_failures: int = 0
    regularization_floor_hit: bool = False
    converged: bool = False
    floor_steps: int = 0
    energy_history: list = field(default_factory=list)


@dataclass(frozen=True)
class EllipticProblem:
    """One elliptic solve: which terms are active is fixed by the variant."""

    mesh: Mesh
    op: LerayLionsOperator
    variant: Variant
    lam: float = 1.0
    q: Optional[float] = None
    h0: Optional[np.ndarray] = None
    source: Optional[SourceTerm] = None
    load: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.op.n_points != self.mesh.n_elements or self.op.ndim != self.mesh.dimension:
            raise InvalidProblem("operator does not match the mesh quadrature")
        if not (self.lam > 0.0):
            raise InvalidProblem("lambda must be positive")
        if self.variant in (Variant.STANDARD, Variant.STATIONARY):
            if self.q is None or not (1.0 < self.q < self.op.exponent.p_minus):
                raise InvalidProblem("q must lie in (1, p_-)")
            if self.h0 is None:
                raise InvalidProblem("h0 is required for this variant")
        if self.h0 is not None:
            h0 = np.asarray(self.h0, dtype=float)
            object.__setattr__(self, "h0", h0)
            if h0.shape != (self.mesh.n_elements,) or h0.min() < 0.0:
                raise InvalidProblem("h0 must be a nonnegative per-element field")
        if self.load is not None:
            object.__setattr__(self, "load", np.asarray(self.load, dtype=float))

    @classmethod
    def standard(cls, mesh, op, q, lam, h0, source=None):
        return cls(mesh, op, Variant.STANDARD, lam=lam, q=q, h0=h0, source=source)

    @classmethod
    def pure_lambda(cls, mesh, op, lam):
        return cls(mesh, op, Variant.PURE_LAMBDA, lam=lam,
                   load=np.full(mesh.n_elements, float(lam)))

    @classmethod
    def stationary(cls, mesh, op, q, b, source=None):
        return cls(mesh, op, Variant.STATIONARY, lam=1.0, q=q, h0=b, source=source)

    @classmethod
    def frozen_load(cls, mesh, op, load, variant):
        return cls(mesh, op, variant, lam=1.0, load=load)

    @property
    def diffusion_weight(self) -> float:
        return self.lam if self.variant is Variant.STANDARD else 1.0

    @property
    def source_weight(self) -> float:
        if self.source is None:
            return 0.0
        return self.lam if self.variant is Variant.STANDARD else 1.0

    @property
    def mass_on(self) -> bool:
        return self.variant is Variant.STANDARD


def _energy_values(problem: EllipticProblem, vals: np.ndarray) -> float:
    mesh = problem.mesh
    ks = np.arange(mesh.n_elements)
    vb = mesh.element_means(vals)
    vbp = np.maximum(vb, 0.0)
    dens = np.asarray(eval_A(problem.op, ks, mesh.gradient_of(vals)))
    total = problem.diffusion_weight * np.sum(
        mesh.measures * dens / problem.op.exponent.values)
    if problem.mass_on:
        total += np.sum(mesh.measures * vbp ** (2.0 * problem.q)) / (2.0 * problem.q)
    if problem.h0 is not None:
        total -= np.sum(mesh.measures * problem.h0 * vbp ** problem.q) / problem.q
    if problem.source_weight:
        f_prim = np.asarray(source_antiderivative(problem.source, ks, vb))
        total -= problem.source_weight * np.sum(mesh.measures * f_prim)
    if problem.load is not None:
        total -= np.sum(mesh.measures * problem.load * vb)
    return float(total)


def _gradient_values(problem: EllipticProblem, vals: np.ndarray) -> np.ndarray:
    mesh = problem.mesh
    nloc = mesh.elements.shape[1]
    ks = np.arange(mesh.n_elements)
    vb = mesh.element_means(vals)
    vbp = np.maximum(vb, 0.0)
    dens = np.zeros(mesh.n_elements)
    if problem.mass_on:
        dens += vbp ** (2.0 * problem.q - 1.0)
    if problem.h0 is not None:
        dens -= problem.h0 * vbp ** (problem.q - 1.0)
    if problem.source_weight:
        dens -= problem.source_weight * np.asarray(
            eval_source(problem.source, ks, vbp))
    if problem.load is not None:
        dens -= problem.load
    contrib = (mesh.measures * dens)[:, None] / nloc
    flux = eval_flux(problem.op, ks, mesh.gradient_of(vals))
    contrib = contrib + problem.diffusion_weight * mesh.measures[:, None] * np.einsum(
        "ed,eld->el", flux, mesh.grads)
    grad = np.zeros(mesh.n_vertices)
    np.add.at(grad, mesh.elements.ravel(), contrib.ravel())
    grad[mesh.boundary_mask] = 0.0
    return grad


def _hessian_matrix(problem: EllipticProblem, vals: np.ndarray,
                    include_concave: bool) -> sp.csr_matrix:
    mesh = problem.mesh
    nloc = mesh.elements.shape[1]
    ks = np.arange(mesh.n_elements)
    jac = flux_jacobian_batch(problem.op, ks, mesh.gradient_of(vals), eps=HESSIAN_EPS)
    elem = problem.diffusion_weight * mesh.measures[:, None, None] * np.einsum(
        "eld,edc,emc->elm", mesh.grads, jac, mesh.grads)
    vbp = np.maximum(mesh.element_means(vals), 0.0)
    dd = np.zeros(mesh.n_elements)
    if problem.mass_on:
        dd += (2.0 * problem.q - 1.0) * vbp ** (2.0 * problem.q - 2.0)
    if include_concave:
        pos = vbp > 0.0
        safe = np.where(pos, vbp, 1.0)
        if problem.h0 is not None:
            dd -= np.where(pos, (problem.q - 1.0) * problem.h0
                           * safe ** (problem.q - 2.0), 0.0)
        if problem.source_weight and problem.source.beta > 0.0:
            src = problem.source
            dd -= np.where(pos, problem.source_weight * src.beta * src.g
                           * src.delta ** src.gamma * safe ** (src.beta - 1.0), 0.0)
    elem = elem + (mesh.measures * dd)[:, None, None] / nloc ** 2
    rows = np.repeat(mesh.elements, nloc, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, nloc)).ravel()
    mat = sp.coo_matrix((elem.ravel(), (rows, cols)),
                        shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    return mat


def energy(problem: EllipticProblem, v: DiscreteField) -> float:
    """Quadrature value of the variant's energy functional at v."""
    return _energy_values(problem, v.values)


def energy_gradient(problem: EllipticProblem, v: DiscreteField) -> DiscreteField:
    """Nodal partial derivatives of the energy; equals the hat-function residual
    of the weak form, and vanishes at interior nodes of a discrete solution."""
    return DiscreteField(problem.mesh, _gradient_values(problem, v.values))


def _project(mesh: Mesh, vals: np.ndarray) -> np.ndarray:
    out = np.maximum(vals, 0.0)
    out[mesh.boundary_mask] = 0.0
    return out


def _kkt_norm(mesh: Mesh, vals: np.ndarray, grad: np.ndarray) -> float:
    r = np.where(vals > 0.0, np.abs(grad), np.maximum(-grad, 0.0))
    return float(np.max(r[mesh.interior], initial=0.0))


def _newton_direction(problem, vals, grad, include_concave):
    mesh = problem.mesh
    hess = _hessian_matrix(problem, vals, include_concave)
    ii = mesh.interior
    sub = hess[ii][:, ii].tocsc()
    gi = grad[ii]
    try:
        di = spla.spsolve(sub, -gi)
    except Exception:
        return None
    if not np.all(np.isfinite(di)) or float(gi @ di) >= 0.0:
        return None
    d = np.zeros_like(vals)
    d[ii] = di
    return d


def _directions(problem: EllipticProblem, vals, grad):
    """Search directions in preference order, produced lazily: full Newton,
    then (for problems with concave terms, or if the full solve failed) the
    convex-majorant Newton step that drops the concave second derivatives,
    then projected steepest descent."""
    d_full = _newton_direction(problem, vals, grad, include_concave=True)
    if d_full is not None:
        yield d_full
    if d_full is None or problem.h0 is not None or problem.source_weight:
        d_convex = _newton_direction(problem, vals, grad, include_concave=False)
        if d_convex is not None:
            yield d_convex
    yield np.where(problem.mesh.boundary_mask, 0.0, -grad)


def _minimize(problem: EllipticProblem, start: np.ndarray, tolerance: float,
              max_iterations: int) -> tuple[np.ndarray, SolverReport]:
    mesh = problem.mesh
    vals = _project(mesh, np.array(start, dtype=float))
    report = SolverReport()
    e_now = _energy_values(problem, vals)
    for it in range(1, max_iterations + 1):
        grad = _gradient_values(problem, vals)
        kkt = _kkt_norm(mesh, vals, grad)
        report.iterations = it - 1
        report.final_gradient_norm = kkt
        report.energy = e_now
        if kkt <= tolerance:
            report.converged = True
            return vals, report
        gnorm2 = np.sum(mesh.gradient_of(vals) ** 2, axis=1)
        if np.any(gnorm2 < HESSIAN_EPS ** 2):
            report.regularization_floor_hit = True

        moved = False
        tried = []
        for d in _directions(problem, vals, grad):
            tried.append(d)
            t = 1.0
            for _ in range(MAX_BACKTRACKS):
                trial = _project(mesh, vals + t * d)
                step = trial - vals
                if not np.any(step):
                    break
                e_trial = _energy_values(problem, trial)
                if e_trial < e_now and e_trial <= e_now + ARMIJO_C * float(grad @ step):
                    vals, e_now = trial, e_trial
                    report.energy_history.append(e_trial)
                    moved = True
                    break
                t *= BACKTRACK
            if moved:
                break
            report.line_search_failures += 1
        if not moved:
            # Roundoff floor of the energy: accept a full polish step when it
            # still reduces the first-order residual without raising the energy
            # beyond machine slack.
            for d in tried:
                trial = _project(mesh, vals + d)
                if not np.any(trial - vals):
                    continue
                e_trial = _energy_values(problem, trial)
                if (e_trial <= e_now + 1e-13 * (1.0 + abs(e_now))
                        and _kkt_norm(mesh, trial, _gradient_values(problem, trial)) < kkt):
                    vals, e_now = trial, e_trial
                    report.floor_steps += 1
                    moved = True
                    break
        if not moved:
            report.final_gradient_norm = kkt
            report.energy = e_now
            return vals, report
    grad = _gradient_values(problem, vals)
    report.iterations = max_iterations
    report.final_gradient_norm = _kkt_norm(mesh, vals, grad)
    report.energy = e_now
    report.converged = report.final_gradient_norm <= tolerance
    return vals, report


def bump_seed(mesh: Mesh, amplitude: float = 0.1) -> DiscreteField:
    """Small interior bump used as the generic positive starting guess."""
    pts = mesh.vertices
    if mesh.dimension == 1:
        a, b = mesh.bounds
        prof = 4.0 * (pts[:, 0] - a) * (b - pts[:, 0]) / (b - a) ** 2
    else:
        x0, x1, y0, y1 = mesh.bounds
        prof = (4.0 * (pts[:, 0] - x0) * (x1 - pts[:, 0]) / (x1 - x0) ** 2
                * 4.0 * (pts[:, 1] - y0) * (y1 - pts[:, 1]) / (y1 - y0) ** 2)
    vals = amplitude * prof
    vals[mesh.boundary_mask] = 0.0
    return DiscreteField(mesh, vals)


def solve(problem: EllipticProblem, initial_guess: DiscreteField,
          tolerance: Optional[float] = None, max_iterations: int = 200,
          extra_starts: Optional[list] = None) -> tuple[DiscreteField, SolverReport]:
    """Global minimization with multistart; returns the lowest-energy converged
    run.  The caller's guess always participates; STANDARD/STATIONARY problems
    add a small bump and the pure-load solution as defensive extra seeds."""
    mesh = problem.mesh
    if tolerance is None:
        tolerance = DEFAULT_TOL[mesh.dimension]
    starts = [np.asarray(initial_guess.values, dtype=float)]
    if extra_starts:
        starts.extend(np.asarray(s.values, dtype=float) for s in extra_starts)
    if problem.variant in (Variant.STANDARD, Variant.STATIONARY) and extra_starts is None:
        starts.append(bump_seed(mesh).values)
        lam_prob = EllipticProblem.pure_lambda(mesh, problem.op, problem.lam)
        lam_vals, lam_rep = _minimize(lam_prob, bump_seed(mesh).values,
                                      tolerance, max_iterations)
        if lam_rep.converged:
            starts.append(lam_vals)
    best = None
    last_report = None
    for start in starts:
        vals, report = _minimize(problem, start, tolerance, max_iterations)
        last_report = report
        if report.converged and (best is None or report.energy < best[1].energy):
            best = (vals, report)
    if best is None:
        raise NonConvergence(
            f"elliptic solve failed to reach tolerance {tolerance:g} "
            f"(residual {last_report.final_gradient_norm:g})", last_report)
    return DiscreteField(mesh, best[0]), best[1]


def solve_lambda_problem(lam: float, mesh: Mesh, op: LerayLionsOperator,
                         tolerance: Optional[float] = None,
                         max_iterations: int = 200) -> DiscreteField:
    """Solution of the pure-load problem -div a(x, grad w) = lam, w = 0 on the
    boundary; monotone and power-law scaling in lam for constant exponents."""
    if not (lam > 0.0):
        raise InvalidProblem("lambda must be positive")
    problem = EllipticProblem.pure_lambda(mesh, op, lam)
    field_, _ = solve(problem, bump_seed(mesh), tolerance, max_iterations)
    return field_


def _picard(mesh, op, rhs_of, start: DiscreteField, variant,
            tolerance=None, max_picard: int = 200) -> DiscreteField:
    """Fixed-point iteration on the frozen right-hand side; the semilinear
    terms grow sublinearly relative to the operator, so the positive fixed
    point attracts every positive start."""
    w = start
    for _ in range(max_picard):
        load = rhs_of(np.maximum(w.barycenter_values(), 0.0))
        problem = EllipticProblem.frozen_load(mesh, op, load, variant)
        w_new, _ = solve(problem, w, tolerance, extra_starts=[])
        scale = max(1.0, float(np.sqrt(np.sum(mesh.measures
                                              * w_new.barycenter_values() ** 2))))
        if l2_norm_diff_power(w_new, w, 1.0) <= PICARD_TOL * scale:
            return w_new
        w = w_new
    raise NonConvergence("Picard iteration on the frozen right-hand side stalled")


def solve_subsolution_problem(mesh, op, q, source, lower_envelope, mu,
                              tolerance=None) -> DiscreteField:
    """Positive solution of -div a = mu (h_lower w^(q-1) + f(x, w)) at fixed mu."""
    if not (mu > 0.0):
        raise InvalidProblem("mu must be positive")
    env = np.asarray(lower_envelope, dtype=float)
    ks = np.arange(mesh.n_elements)

    def rhs(wb):
        out = env * wb ** (q - 1.0)
        if source is not None:
            out = out + np.asarray(eval_source(source, ks, wb))
        return mu * out

    start = solve_lambda_problem(mu, mesh, op, tolerance)
    return _picard(mesh, op, rhs, start, Variant.SUBSOLUTION, tolerance)


def solve_supersolution_problem(mesh, op, q, source, sup_norm_h, kappa,
                                tolerance=None) -> DiscreteField:
    """Positive solution of -div a = ||h||_inf w^(q-1) + f(x, w) + kappa."""
    if not (kappa > 0.0):
        raise InvalidProblem("kappa must be positive")
    ks = np.arange(mesh.n_elements)

    def rhs(wb):
        out = sup_norm_h * wb ** (q - 1.0) + kappa
        if source is not None:
            out = out + np.asarray(eval_source(source, ks, wb))
        return out

    start = solve_lambda_problem(kappa, mesh, op, tolerance)
    return _picard(mesh, op, rhs, start, Variant.SUPERSOLUTION, tolerance)


def make_subsolution(mesh, op, q, source, lower_envelope, v0: DiscreteField,
                     mu: float = 1.0, tolerance=None):
    """Shrink mu geometrically until the subsolution sits below v0 nodally.
    Returns (w_lower, mu_used)."""
    while mu >= MU_FLOOR:
        w = solve_subsolution_problem(mesh, op, q, source, lower_envelope, mu,
                                      tolerance)
        if np.all(w.values <= v0.values) and np.all(w.values[mesh.interior] > 0.0):
            return w, mu
        mu *= 0.5
    raise FailedToFit("no mu above the floor produced a subsolution below v0")


def make_supersolution(mesh, op, q, source, sup_norm_h, v0: DiscreteField,
                       kappa: float = 1.0, tolerance=None):
    """Grow kappa geometrically until the supersolution dominates v0 nodally.
    Returns (w_upper, kappa_used)."""
    while kappa <= KAPPA_CEIL:
        w = solve_supersolution_problem(mesh, op, q, source, sup_norm_h, kappa,
                                        tolerance)
        if np.all(w.values >= v0.values):
            return w, kappa
        kappa *= 2.0
    raise FailedToFit("no kappa below the ceiling produced a supersolution above v0")


def solve_stationary(mesh, op, q, b, source=None, tolerance=None,
                     max_iterations: int = 200,
                     initial_guess: Optional[DiscreteField] = None) -> DiscreteField:
    """Global minimizer of the stationary energy with potential b >= 0, b != 0."""
    b = np.asarray(b, dtype=float)
    if b.min() < 0.0 or not np.any(b > 0.0):
        raise InvalidProblem("stationary potential must be nonnegative and nontrivial")
    problem = EllipticProblem.stationary(mesh, op, q, b, source)
    guess = initial_guess if initial_guess is not None else bump_seed(mesh)
    field_, _ = solve(problem, guess, tolerance, max_iterations)
    return field_

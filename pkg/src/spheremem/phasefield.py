"""Coupled membrane/phase-field energy and its conserved L2-gradient flow.

The semidiscrete system couples the deformation u (driven by the quadratic
bending form) to the order parameter phi (Ginzburg-Landau energy with a
double well and a curvature-coupling term).  Time stepping is linearly
implicit: every linear spatial operator, including the cross coupling and
the linear part of f', is implicit in one 2-field saddle solve; only the
double-well derivative W' is explicit.  The mean constraints for phi and u
and the three translation-mode constraints for u are enforced per step by
multiplier rows, so conservation holds algebraically.
"""
from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ParameterError, SolverError, StepRejectedError
from .mesh import mesh_stats
from .model import ModelParams, QuadraticForm


@dataclass(frozen=True)
class PhaseFieldParams:
    """Interface width, line tension, curvature coupling and flow parameters."""

    epsilon: float
    b: float
    coupling: float          # spontaneous-curvature coefficient (Lambda)
    alpha: float             # prescribed mean of phi, in (-1, 1)
    alpha1: float = 1.0      # phi mobility
    alpha2: float = 1.0      # u mobility
    tau: float = 1e-3
    t_end: float | None = None
    stat_tol: float | None = 1e-5
    seed: int = 0
    noise_amplitude: float = 0.1

    def __post_init__(self):
        for name in ("epsilon", "b", "alpha1", "alpha2", "tau"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if not -1.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (-1, 1), got {self.alpha}")
        if self.t_end is None and self.stat_tol is None:
            raise ParameterError("need a stopping rule: t_end or stat_tol")

    def tau_max(self, model: ModelParams) -> float:
        """Stability heuristic for the explicit double-well term."""
        return self.alpha1 * self.epsilon**2 / self.b


@dataclass
class PhaseState:
    """Deformation/order-parameter pair with time and cached multipliers."""

    u: np.ndarray
    phi: np.ndarray
    t: float = 0.0
    lambda_phi: float | None = None
    lambda_u: float | None = None


def potentials(phi, pf: PhaseFieldParams, model: ModelParams):
    """Double well W, its derivative, and the shifted potential f = W +
    eps*kappa*Lambda^2*phi^2/(2b) with derivative f'."""
    phi = np.asarray(phi, dtype=float)
    W = 0.25 * (phi**2 - 1.0) ** 2
    Wp = phi**3 - phi
    shift = pf.epsilon * model.kappa * pf.coupling**2 / pf.b
    f = W + 0.5 * shift * phi**2
    fp = Wp + shift * phi
    return W, Wp, f, fp


def coupling_operator(form: QuadraticForm, pf: PhaseFieldParams) -> sp.csr_matrix:
    """Discrete kappa*Lambda*(Delta . + 2/R^2 .): the u/phi cross block.

    The Laplacian is realized through the lumped reconstruction, which under
    the lumped L2 pairing collapses to -S.
    """
    k = form.params.kappa * pf.coupling
    return (k * (-form.S + (2.0 / form.params.R**2) * form.M)).tocsr()


def energy(state: PhaseState, form: QuadraticForm, pf: PhaseFieldParams):
    """Total energy E(u, phi) and its per-term breakdown."""
    u, phi = state.u, state.phi
    C = coupling_operator(form, pf)
    bending = 0.5 * form.evaluate(u, u)
    cross = float(phi @ (C @ u))
    grad = pf.b * 0.5 * pf.epsilon * float(phi @ (form.S @ phi))
    _, _, f, _ = potentials(phi, pf, form.params)
    well = pf.b / pf.epsilon * float(form.m_lumped @ f)
    total = bending + cross + grad + well
    breakdown = {
        "bending": bending,
        "coupling": cross,
        "interface_gradient": grad,
        "potential": well,
    }
    return total, breakdown


def energy_gradient(state: PhaseState, form: QuadraticForm, pf: PhaseFieldParams):
    """L2 gradients (dE/dphi, dE/du) as assembled by the flow step."""
    C = coupling_operator(form, pf)
    _, _, _, fp = potentials(state.phi, pf, form.params)
    g_phi = C @ state.u + pf.b * pf.epsilon * (form.S @ state.phi) \
        + pf.b / pf.epsilon * form.m_lumped * fp
    g_u = form.A @ state.u + C @ state.phi
    return g_phi, g_u


def closed_form_multipliers(state: PhaseState, form: QuadraticForm,
                            pf: PhaseFieldParams) -> tuple[float, float]:
    """The multipliers that preserve the constraints in the continuum:
    lambda_phi = -(b/eps) mean(f'(phi)), lambda_u = -2 kappa Lambda alpha / R^2."""
    _, _, _, fp = potentials(state.phi, pf, form.params)
    lam_phi = -pf.b / pf.epsilon * float(form.m_lumped @ fp) / form.area
    lam_u = -2.0 * form.params.kappa * pf.coupling * pf.alpha / form.params.R**2
    return lam_phi, lam_u


def constraint_residuals(state: PhaseState, form: QuadraticForm, pf: PhaseFieldParams):
    """(|mean(phi)-alpha|, |int u|/area, max_i |int u nu_i|/area)."""
    area = form.area
    c = form.constraints
    phi_mean = float((c[0] @ state.phi)[0]) / area - pf.alpha
    u_mean = float((c[0] @ state.u)[0]) / area
    u_nu = max(abs(float((c[i] @ state.u)[0])) for i in (1, 2, 3)) / area
    return abs(phi_mean), abs(u_mean), u_nu


def project_constraints(state: PhaseState, form: QuadraticForm,
                        pf: PhaseFieldParams) -> PhaseState:
    """Mass-orthogonal projection of (u, phi) onto the constraint set."""
    c = np.asarray(form.constraints.todense())
    area = form.area
    phi = state.phi + (pf.alpha * area - c[0] @ state.phi) / area
    # Remove the {1, nu_i} components of u via the 4x4 mass Gram system.
    modes = form.normal_modes()
    gram = np.array([[c[i] @ modes[j] for j in range(4)] for i in range(4)])
    coef = np.linalg.solve(gram, c @ state.u)
    u = state.u - modes.T @ coef
    return replace(state, u=u, phi=phi)


class FlowSolver:
    """Reusable linearly-implicit stepper for the conserved gradient flow.

    The coupled 2-field operator and its sparse factorization are built once
    per (form, params, tau) and reused across steps.
    """

    def __init__(self, form: QuadraticForm, pf: PhaseFieldParams,
                 tau: float | None = None, warn: bool = True):
        self.form = form
        self.pf = pf
        self.tau = float(tau if tau is not None else pf.tau)
        if self.tau <= 0:
            raise ParameterError("tau must be positive")
        model = form.params
        if warn and self.tau > pf.tau_max(model):
            warnings.warn(
                f"tau = {self.tau:.3g} above the stability heuristic "
                f"alpha1*eps^2/b = {pf.tau_max(model):.3g}; steps may be rejected",
                stacklevel=2,
            )
        h_max = mesh_stats(form.mesh).h_max
        if warn and pf.epsilon < 2.0 * h_max:
            warnings.warn(
                f"interface width eps = {pf.epsilon:.3g} under-resolved "
                f"(2 h_max = {2 * h_max:.3g})",
                stacklevel=2,
            )
        n = form.mesh.num_vertices
        self.n = n
        C = coupling_operator(form, pf)
        shift = pf.epsilon * model.kappa * pf.coupling**2 / pf.b
        # Linear part of (b/eps) f'(phi): (b/eps)*shift*phi = kappa*Lambda^2*phi,
        # lumped; kept implicit.
        lin_well = (pf.b / pf.epsilon * shift) * sp.diags(form.m_lumped)
        Kpp = (pf.alpha1 / self.tau) * form.M + pf.b * pf.epsilon * form.S + lin_well
        Kuu = (pf.alpha2 / self.tau) * form.M + form.A
        K = sp.bmat([[Kpp, C], [C, Kuu]], format="csr")
        c = form.constraints
        zero = sp.csr_matrix((1, n))
        B = sp.vstack([
            sp.hstack([c[0], zero]),          # phi mean
            sp.hstack([zero, c[0]]),          # u mean
            sp.hstack([zero, c[1]]),
            sp.hstack([zero, c[2]]),
            sp.hstack([zero, c[3]]),
        ]).tocsr()
        self.B = B
        self.K = sp.bmat([[K, B.T], [B, None]], format="csc")
        try:
            self.lu = spla.splu(self.K)
        except RuntimeError as exc:
            raise SolverError(f"flow operator factorization failed: {exc}") from exc
        self.g = np.concatenate([[pf.alpha * form.area], np.zeros(4)])

    def step(self, state: PhaseState, enforce_dissipation: bool = True) -> PhaseState:
        """One linearly-implicit step; raises StepRejectedError on energy rise."""
        pf, form = self.pf, self.form
        _, Wp, _, _ = potentials(state.phi, pf, form.params)
        rhs_phi = (pf.alpha1 / self.tau) * (form.M @ state.phi) \
            - (pf.b / pf.epsilon) * form.m_lumped * Wp
        rhs_u = (pf.alpha2 / self.tau) * (form.M @ state.u)
        rhs = np.concatenate([rhs_phi, rhs_u, self.g])
        sol = self.lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SolverError("flow step produced a non-finite solution")
        phi_new = sol[: self.n]
        u_new = sol[self.n: 2 * self.n]
        mult = sol[2 * self.n:]
        new = PhaseState(u=u_new, phi=phi_new, t=state.t + self.tau,
                         lambda_phi=float(mult[0]), lambda_u=float(mult[1]))
        if enforce_dissipation:
            e_old, _ = energy(state, form, pf)
            e_new, _ = energy(new, form, pf)
            if e_new > e_old + 1e-8 * abs(e_old):
                raise StepRejectedError(
                    f"energy increased {e_old:.12g} -> {e_new:.12g}; "
                    f"retry with tau = {self.tau / 2:.3g}",
                    energy_before=e_old, energy_after=e_new,
                    suggested_tau=self.tau / 2,
                )
        return new


def flow_step(state: PhaseState, form: QuadraticForm, pf: PhaseFieldParams) -> PhaseState:
    """Single step convenience wrapper (builds a fresh factorization)."""
    return FlowSolver(form, pf, warn=False).step(state)


@dataclass
class FlowReport:
    times: list[float]
    energies: list[float]
    breakdowns: list[dict]
    constraint_residuals: list[tuple[float, float, float]]
    accepted_steps: int
    rejected_steps: int
    final_tau: float
    stationarity: float          # ||state_{n+1} - state_n|| / tau at the end
    converged: bool

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t [time],energy [energy],bending [energy],coupling [energy],"
                  "interface_gradient [energy],potential [energy],"
                  "phi_mean_residual [1],u_mean_residual [1],u_normal_residual [1]\n")
        for t, e, bd, cr in zip(self.times, self.energies, self.breakdowns,
                                self.constraint_residuals):
            buf.write(
                f"{t:.17g},{e:.17g},{bd['bending']:.17g},{bd['coupling']:.17g},"
                f"{bd['interface_gradient']:.17g},{bd['potential']:.17g},"
                f"{cr[0]:.17g},{cr[1]:.17g},{cr[2]:.17g}\n"
            )
        return buf.getvalue()


def initial_state(form: QuadraticForm, pf: PhaseFieldParams) -> PhaseState:
    """Seeded default start: phi = alpha + uniform noise (projected), u = 0."""
    rng = np.random.default_rng(pf.seed)
    phi = pf.alpha + pf.noise_amplitude * rng.uniform(-1.0, 1.0, form.mesh.num_vertices)
    state = PhaseState(u=np.zeros(form.mesh.num_vertices), phi=phi, t=0.0)
    return project_constraints(state, form, pf)


def run_flow(
    initial: PhaseState,
    form: QuadraticForm,
    pf: PhaseFieldParams,
    max_steps: int = 200_000,
    max_rejections: int = 20,
    log_stride: int = 1,
    tau_growth: float = 2.0,
    grow_every: int = 100,
    tau_cap: float | None = None,
) -> tuple[PhaseState, FlowReport]:
    """Step until stationarity (||change||/tau < stat_tol) or t_end.

    The initial state is projected onto the constraint set (with a warning)
    when it violates the constraints; rejected steps halve tau.  When running
    to stationarity, tau grows by ``tau_growth`` every ``grow_every`` accepted
    steps (up to ``tau_cap``, default 1e6 times the initial tau): late-stage
    coarsening is exponentially slow in physical time, and the energy check
    keeps the enlarged steps dissipative.  Pass ``grow_every = 0`` to disable.
    """
    pf_res = constraint_residuals(initial, form, pf)
    state = initial
    if max(pf_res) > 1e-10:
        warnings.warn("initial state violates constraints; projecting", stacklevel=2)
        state = project_constraints(state, form, pf)
    solver = FlowSolver(form, pf)
    mass = form.m_lumped
    times, energies_log, breakdowns, residuals = [], [], [], []
    e0, bd0 = energy(state, form, pf)
    times.append(state.t); energies_log.append(e0); breakdowns.append(bd0)
    residuals.append(constraint_residuals(state, form, pf))
    rejected = 0
    consecutive = 0
    accepted = 0
    since_grow = 0
    since_reject = 0
    if tau_cap is None:
        tau_cap = 1e6 * pf.tau
    hard_cap = tau_cap
    stationarity = float("inf")
    converged = False
    while accepted < max_steps:
        if pf.t_end is not None and state.t >= pf.t_end - 1e-12 * pf.t_end:
            break
        try:
            new = solver.step(state)
        except StepRejectedError as exc:
            rejected += 1
            consecutive += 1
            if consecutive > max_rejections:
                raise SolverError(
                    f"aborting after {consecutive} consecutive rejected steps "
                    f"(last energies {exc.energy_before!r} -> {exc.energy_after!r})"
                ) from exc
            # Don't regrow straight back to a step size that was rejected.
            tau_cap = min(tau_cap, solver.tau / 2.0)
            solver = FlowSolver(form, pf, tau=solver.tau / 2.0, warn=False)
            since_grow = 0
            since_reject = 0
            continue
        consecutive = 0
        since_reject += 1
        diff = np.sqrt(float(mass @ (new.phi - state.phi) ** 2)
                       + float(mass @ (new.u - state.u) ** 2))
        stationarity = diff / solver.tau
        state = new
        accepted += 1
        if accepted % log_stride == 0:
            e, bd = energy(state, form, pf)
            times.append(state.t); energies_log.append(e); breakdowns.append(bd)
            residuals.append(constraint_residuals(state, form, pf))
        if pf.stat_tol is not None and stationarity < pf.stat_tol:
            converged = True
            break
        since_grow += 1
        if pf.t_end is None and grow_every and since_grow >= grow_every:
            if solver.tau < tau_cap:
                solver = FlowSolver(
                    form, pf, tau=min(tau_growth * solver.tau, tau_cap), warn=False
                )
                since_grow = 0
            elif since_reject >= 10 * grow_every and tau_cap < hard_cap:
                # A long run of accepted steps: the rejection that set the
                # cap happened in a faster flow regime, so probe above it.
                tau_cap = min(tau_growth * tau_cap, hard_cap)
                since_reject = 0
    report = FlowReport(
        times=times,
        energies=energies_log,
        breakdowns=breakdowns,
        constraint_residuals=residuals,
        accepted_steps=accepted,
        rejected_steps=rejected,
        final_tau=solver.tau,
        stationarity=stationarity,
        converged=converged,
    )
    return state, report


def field_correlation(u: np.ndarray, phi: np.ndarray, form: QuadraticForm,
                      pf: PhaseFieldParams) -> float:
    """Mass-weighted correlation of u with phi - alpha (sign diagnostic)."""
    w = form.m_lumped
    a = u - float(w @ u) / w.sum()
    b = (phi - pf.alpha)
    b = b - float(w @ b) / w.sum()
    denom = np.sqrt(float(w @ a**2) * float(w @ b**2))
    if denom == 0.0:
        return 0.0
    return float(w @ (a * b)) / denom

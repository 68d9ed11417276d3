"""Newton-Krylov time stepping: linear solver wrapper, Newton with
backtracking line search, Eisenstat-Walker forcing, telescoping time loop and
equilibrium initialization."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .assembly.flow import phase_properties
from .assembly.system import PoroModel, SystemState, row_scale
from .linalg import gmres
from .precond.stack import (MechanicsPreconditioner, PrecondOptions, PreconditionerStack,
                            component_index, richardson)

log = logging.getLogger(__name__)


@dataclass
class NewtonParams:
    """Newton controls.

    Attributes:
        tol: relative reduction of the scaled residual norm.
        max_iter: Newton iterations before declaring failure.
        max_backtracks: line-search halvings (step lengths 1 .. 2^-max_backtracks).
        sufficient_decrease: Armijo constant.
        abs_tol: scaled-residual norm treated as already converged.
    """

    tol: float = 1e-5
    max_iter: int = 15
    max_backtracks: int = 5
    sufficient_decrease: float = 1e-4
    abs_tol: float = 1e-10

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class ForcingParams:
    """Eisenstat-Walker forcing; when disabled the fixed ``eta`` is used."""

    enabled: bool = False
    gamma: float = 0.9
    omega: float = 2.0
    eta0: float = 0.1
    eta: float = 1e-6

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 1 < self.omega <= 2:
            raise ValueError("omega must lie in (1, 2]")
        if not 0 <= self.eta0 <= 1:
            raise ValueError("eta0 must lie in [0, 1]")


@dataclass
class TimestepControl:
    dt0: float = 0.1
    dt_max: float = 1.0
    growth: float = 2.0
    t_end: float = 100.0
    cut: float = 0.5
    max_cuts: int = 10

    def __post_init__(self):
        if not 0 < self.dt0 <= self.dt_max:
            raise ValueError("need 0 < dt0 <= dt_max")
        if not self.growth > 1:
            raise ValueError("growth factor must exceed 1")
        if not 0 < self.cut < 1:
            raise ValueError("cut factor must lie in (0, 1)")


@dataclass
class LinearParams:
    """Linear solver controls.

    Attributes:
        method: ``"gmres"``, ``"richardson"``, ``"direct"`` or ``"exact"``
            (GMRES with the direct-solve preconditioner variant).
        restart, max_iter: GMRES limits.
        compare_richardson: also run the Richardson iteration on every system
            and record its count (GMRES still provides the update).
        richardson_max_iter: iteration budget of the stationary iteration,
            whose contraction is much slower than GMRES convergence.
    """

    method: str = "gmres"
    restart: int = 200
    max_iter: int = 500
    compare_richardson: bool = False
    richardson_max_iter: int = 5000

    def __post_init__(self):
        if self.method not in ("gmres", "richardson", "direct", "exact"):
            raise ValueError(f"unknown linear method '{self.method}'")


def forcing_tolerance(history: list[float], params: ForcingParams,
                      eta_prev: float | None = None) -> float:
    """Eisenstat-Walker choice 2 with the standard safeguard.

    Args:
        history: Newton residual norms ``[r_0, ..., r_k]``.
        params: forcing parameters.
        eta_prev: forcing term of the previous iteration.
    """
    k = len(history) - 1
    if k == 0 or eta_prev is None:
        return params.eta0
    eta = params.gamma * (history[-1] / history[-2]) ** params.omega
    guard = params.gamma * eta_prev ** params.omega
    if guard > 0.1:
        eta = max(eta, guard)
    return min(eta, params.eta0)


@dataclass
class LinearResult:
    x: np.ndarray
    iterations: int
    converged: bool
    relres: float
    setup_time: float = 0.0
    solve_time: float = 0.0
    richardson_iterations: int | None = None
    richardson_converged: bool | None = None


class LinearSolver:
    """Preconditioned Krylov solve of a row-scaled Jacobian system.

    The mechanics AMG is built lazily on first use and reused for the whole
    simulation; flow operands are rebuilt on every call.
    """

    def __init__(self, model: PoroModel, options: PrecondOptions | None = None,
                 params: LinearParams | None = None):
        self.model = model
        self.options = options or PrecondOptions()
        self.params = params or LinearParams()
        self._mech = None
        self.mech_setup_time = 0.0
        self.last_stack = None

    @property
    def mech(self) -> MechanicsPreconditioner:
        if self._mech is None:
            self._mech = MechanicsPreconditioner(self.model.K, component_index(self.model),
                                                 self.options.mech_amg_params())
            self.mech_setup_time = self._mech.setup_time
        return self._mech

    def solve(self, jac, rhs, state, tol) -> LinearResult:
        p = self.params
        t0 = time.perf_counter()
        if p.method == "direct":
            x = spla.spsolve(jac.to_csr().tocsc(), rhs)
            rel = np.linalg.norm(rhs - jac.matvec(x)) / max(np.linalg.norm(rhs), 1e-300)
            return LinearResult(x, 1, bool(np.isfinite(rel)), rel, 0.0,
                                time.perf_counter() - t0)
        if p.method == "exact":
            stack = PreconditionerStack.exact(jac)
        else:
            stack = PreconditionerStack.build(jac, self.model, state, self.mech, self.options)
        self.last_stack = stack
        t1 = time.perf_counter()
        rich = None
        if p.method == "richardson":
            out = richardson(jac, stack.apply, rhs, tol, p.richardson_max_iter)
        else:
            out = gmres(jac, stack.apply, rhs, tol, p.restart, p.max_iter)
            if p.compare_richardson:
                rich = richardson(jac, stack.apply, rhs, tol, p.richardson_max_iter)
        t2 = time.perf_counter()
        res = LinearResult(out.x, out.iterations, out.converged, out.relres, t1 - t0, t2 - t1)
        if rich is not None:
            res.richardson_iterations = rich.iterations
            res.richardson_converged = rich.converged
        return res


def line_search(evaluate: Callable[[float], float], r_norm: float, max_backtracks: int = 5,
                c: float = 1e-4) -> tuple[float | None, int]:
    """Backtracking on the step length.

    Args:
        evaluate: maps a step length to the new residual norm.
        r_norm: current residual norm.

    Returns:
        ``(alpha, n_evaluations)`` with ``alpha = None`` when every trial
        fails the sufficient-decrease test.
    """
    alpha = 1.0
    for n in range(max_backtracks + 1):
        if evaluate(alpha) <= (1.0 - c * alpha) * r_norm:
            return alpha, n + 1
        alpha *= 0.5
    return None, max_backtracks + 1


@dataclass
class NewtonStats:
    converged: bool = False
    iterations: int = 0
    linear_iterations: list = field(default_factory=list)
    backtracks: int = 0
    residual_norms: list = field(default_factory=list)
    setup_time: float = 0.0
    solve_time: float = 0.0
    shut_in: int = 0
    richardson_iterations: list = field(default_factory=list)
    richardson_converged: list = field(default_factory=list)
    failure: str = ""


def newton_solve(guess: SystemState, prev: SystemState, model: PoroModel,
                 linear: LinearSolver, params: NewtonParams | None = None,
                 forcing: ForcingParams | None = None) -> tuple[SystemState, NewtonStats]:
    """Solve one backward-Euler step.

    Row-scaling factors are computed at the first iteration and frozen for
    the step so the norms being compared share one scale.
    """
    params = params or NewtonParams()
    forcing = forcing or ForcingParams()
    stats = NewtonStats()
    prev_mass = model.mass(prev)
    state = guess.copy()
    res, jac, diag = model.assemble(state, prev, True, prev_mass)
    sj, sr, factors = row_scale(jac, res)
    r0 = float(np.linalg.norm(sr.vector()))
    stats.residual_norms.append(r0)
    stats.shut_in = diag.shut_in
    if r0 <= params.abs_tol:
        stats.converged = True
        return state, stats
    r_norm = r0
    eta = None
    for k in range(1, params.max_iter + 1):
        eta = (forcing_tolerance(stats.residual_norms, forcing, eta) if forcing.enabled
               else forcing.eta)
        lin = linear.solve(sj, -sr.vector(), state, eta)
        stats.linear_iterations.append(lin.iterations)
        stats.setup_time += lin.setup_time
        stats.solve_time += lin.solve_time
        if lin.richardson_iterations is not None:
            stats.richardson_iterations.append(lin.richardson_iterations)
            stats.richardson_converged.append(lin.richardson_converged)
        stats.iterations = k
        if not lin.converged:
            stats.failure = f"linear solver did not converge (relres {lin.relres:.2e})"
            return state, stats
        x = state.vector()
        dx = lin.x
        trial = {}

        def evaluate(alpha):
            cand = state.with_vector(x + alpha * dx)
            try:
                rr, _, dg = model.assemble(cand, prev, False, prev_mass)
            except FloatingPointError:
                return np.inf
            scaled = np.concatenate([rr.r_u / factors.c_u, rr.r_s / factors.c_s,
                                     rr.r_p / factors.c_p])
            trial.update(state=cand, norm=float(np.linalg.norm(scaled)))
            return trial["norm"]

        alpha, n_eval = line_search(evaluate, r_norm, params.max_backtracks,
                                    params.sufficient_decrease)
        stats.backtracks += n_eval - 1
        if alpha is None:
            stats.failure = "line search failed"
            return state, stats
        state = trial["state"]
        r_norm = trial["norm"]
        stats.residual_norms.append(r_norm)
        if r_norm / r0 < params.tol or r_norm <= params.abs_tol:
            stats.converged = True
            return state, stats
        res, jac, diag = model.assemble(state, prev, True, prev_mass)
        stats.shut_in += diag.shut_in
        sj, sr, _ = row_scale(jac, res, factors)
    stats.failure = "maximum Newton iterations reached"
    return state, stats


@dataclass
class StepRecord:
    """Statistics of one attempted timestep (failed attempts included)."""

    step: int
    t: float
    dt: float
    converged: bool
    newton_iterations: int
    linear_iterations: list
    backtracks: int
    setup_time: float
    solve_time: float
    cut: bool = False
    shut_in: int = 0
    richardson_iterations: list = field(default_factory=list)
    richardson_converged: list = field(default_factory=list)


class SimulationAborted(RuntimeError):
    """Raised after too many consecutive timestep cuts."""


@dataclass
class SimulationResult:
    state: SystemState
    records: list
    mech_setup_time: float = 0.0

    @property
    def accepted(self) -> list:
        return [r for r in self.records if r.converged]

    @property
    def n_cuts(self) -> int:
        return sum(1 for r in self.records if r.cut)


def time_loop(model: PoroModel, state0: SystemState, linear: LinearSolver,
              controls: TimestepControl | None = None, newton: NewtonParams | None = None,
              forcing: ForcingParams | None = None,
              callback: Callable[[int, SystemState, StepRecord], None] | None = None
              ) -> SimulationResult:
    """Advance from ``state0.t`` to ``controls.t_end`` with growing steps.

    Raises:
        SimulationAborted: after ``max_cuts`` consecutive failed attempts.
    """
    ctl = controls or TimestepControl()
    state = state0.copy()
    records: list[StepRecord] = []
    dt = ctl.dt0
    step = 0
    eps = 1e-12 * max(ctl.t_end, 1.0)
    while state.t < ctl.t_end - eps:
        dt_try = min(dt, ctl.t_end - state.t)
        cuts = 0
        while True:
            guess = state.copy()
            guess.t = state.t + dt_try
            guess.dt = dt_try
            new, st = newton_solve(guess, state, model, linear, newton, forcing)
            rec = StepRecord(step + 1, guess.t, dt_try, st.converged, st.iterations,
                             st.linear_iterations, st.backtracks, st.setup_time,
                             st.solve_time, cut=not st.converged, shut_in=st.shut_in,
                             richardson_iterations=st.richardson_iterations,
                             richardson_converged=st.richardson_converged)
            records.append(rec)
            if st.converged:
                break
            cuts += 1
            log.info("step %d at t=%.4g failed (%s); cutting dt to %.4g", step, guess.t,
                     st.failure, dt_try * ctl.cut)
            if cuts >= ctl.max_cuts:
                raise SimulationAborted(
                    f"{cuts} consecutive timestep cuts at t={state.t:.6g}: {st.failure}")
            dt_try *= ctl.cut
        np.clip(new.s, 0.0, 1.0, out=new.s)
        state = new
        step += 1
        if callback is not None:
            callback(step, state, rec)
        dt = min(dt_try * ctl.growth, ctl.dt_max)
    return SimulationResult(state, records, linear.mech_setup_time)


# -- initialization -------------------------------------------------------------
def equilibrium_phase(model: PoroModel, s0: float, phase: str = "auto") -> str:
    """Pick the phase whose density sets the hydrostatic gradient.

    ``"auto"`` chooses the only mobile phase at ``s0`` (wetting if both are).
    """
    if phase in ("wetting", "nonwetting"):
        return phase
    if phase != "auto":
        raise ValueError(f"unknown equilibrium phase '{phase}'")
    w, n = phase_properties(model.water, model.oil, model.relperm, np.array([s0]),
                            np.array([model.water.p_ref]))
    if n.lam[0] > 0 and w.lam[0] == 0:
        return "nonwetting"
    return "wetting"


def hydrostatic_pressure(model: PoroModel, datum_p: float, datum_z: float | None = None,
                         phase: str = "wetting") -> np.ndarray:
    """Layer pressures in discrete hydrostatic balance with the TPFA flux.

    Between vertically adjacent cells the averaged-density potential vanishes
    exactly; the first layer follows the exact continuous profile from the
    datum elevation (default: top layer centroid).
    """
    fluid = model.water if phase == "wetting" else model.oil
    g = model.gravity
    grid = model.grid
    zc = grid.cell_centroids[grid.cell_index(0, 0, np.arange(grid.nz)), 2]
    if datum_z is None:
        datum_z = zc[-1]
    r0, c, pr = fluid.rho_ref, fluid.compressibility, fluid.p_ref
    p_layer = np.empty(grid.nz)
    # exact profile from the datum to the top layer
    dz = zc[-1] - datum_z
    if c > 0:
        q = (1.0 + c * (datum_p - pr)) * np.exp(-c * r0 * g * dz)
        p_layer[-1] = pr + (q - 1.0) / c
    else:
        p_layer[-1] = datum_p - r0 * g * dz
    h = grid.cell_dims[2]
    for k in range(grid.nz - 2, -1, -1):
        pu = p_layer[k + 1]
        rho_u = r0 * (1.0 + c * (pu - pr))
        # p_k = p_u + g h (rho_k + rho_u) / 2 with rho_k linear in p_k
        p_layer[k] = (pu + 0.5 * g * h * (rho_u + r0 * (1.0 - c * pr))) / (
            1.0 - 0.5 * g * h * r0 * c)
    return p_layer[grid.cell_ijk[:, 2]]


def initialize_equilibrium(model: PoroModel, datum_p: float, s0: float,
                           datum_z: float | None = None, phase: str = "auto",
                           geostatic: bool = True, mech: MechanicsPreconditioner | None = None,
                           tol: float = 1e-12) -> SystemState:
    """Hydrostatic pressure, uniform saturation and a geostatic displacement.

    Sets ``model.ref`` (porosity reference strains and pressure, well datum
    pressures) and ``model.u_geo``. The returned state has ``t = 0``.

    Raises:
        RuntimeError: if the geostatic mechanics solve fails.
    """
    nc = model.n_cells
    ph = equilibrium_phase(model, s0, phase)
    p0 = hydrostatic_pressure(model, datum_p, datum_z, ph)
    s = np.full(nc, float(s0))
    model.ref.p = p0.copy()
    model.ref.eps_q = np.zeros((nc, 8))
    model.ref.eps_c = np.zeros(nc)
    u = np.zeros(model.n_u)
    if geostatic:
        zero = SystemState(u, s, p0, 0.0, 1.0)
        # residual at u = 0 with phi = phi0 everywhere is -rhs of the linear solve
        r = model.assemble(zero, zero, jacobian=False)[0].r_u
        if np.linalg.norm(r) > 0:
            if model.n_u <= 3000:
                u = spla.spsolve(model.K.tocsc(), -r)
            else:
                mech = mech or MechanicsPreconditioner(
                    model.K, component_index(model), PrecondOptions().mech_amg_params())
                M = spla.LinearOperator(model.K.shape, matvec=mech.apply)
                u, info = spla.cg(model.K, -r, rtol=tol, maxiter=2000, M=M)
                if info != 0:
                    raise RuntimeError("geostatic mechanics solve did not converge")
        eps_q, eps_c = model.strains(u)
        model.ref.eps_q = eps_q
        model.ref.eps_c = eps_c
    model.u_geo = u.copy()
    zc = model.z
    for i, w in enumerate(model.wells):
        top = model.well_top_cell[i]
        fluid = model.water if ph == "wetting" else model.oil
        rho = fluid.rho_ref * (1.0 + fluid.compressibility * (p0[top] - fluid.p_ref))
        model.ref.well_datum_p[i] = p0[top] - rho * model.gravity * (
            model.well_z_bh[i] - zc[top])
    return SystemState(u, s, p0.copy(), 0.0, 0.0)

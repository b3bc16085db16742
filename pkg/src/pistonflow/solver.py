"""Time integration of the fixed-domain gas-piston system.

One step is operator-split: the specific volume is advanced first (explicit
upwind advection plus the staggered velocity divergence), then the velocity
field and the piston are advanced together in a single theta-implicit
tridiagonal solve whose first row is the piston equation.  The total mass
eta evolves by the boundary flux: prescribed during inflow, resolved by a
within-step Picard iteration during outflow where the boundary density is
part of the unknown.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded

from .coords import CoeffPair, coefficients_alpha_beta
from .core import BoundarySchedule, GridState, Params, PistonState, pressure_q


class SolverEvent(Exception):
    """Terminal event of a run; carries the (interpolated) event time."""

    def __init__(self, message: str, time: Optional[float] = None,
                 fraction: Optional[float] = None):
        super().__init__(message)
        self.time = None if time is None else float(time)
        self.fraction = None if fraction is None else float(fraction)


class ContactEvent(SolverEvent):
    """Piston reached the closed end (b fell to the contact threshold)."""


class MassDepletionEvent(SolverEvent):
    """Total mass eta was exhausted through the open end."""


class NumericalFailure(Exception):
    """Unrecoverable numerical breakdown (reported, never silent)."""


class StepRejected(Exception):
    """Internal: the attempted step must be retried with a smaller dt."""


class CflViolation(StepRejected):
    """The advective CFL bound max|beta| * dt <= cfl * dz was violated."""


class VacuumError(StepRejected):
    """A specific-volume sample became nonpositive during the update."""


class PicardNonConvergence(StepRejected):
    """The within-step Picard iteration did not reach tolerance."""


class NonContractionError(NumericalFailure):
    """Outer fixed-point residuals grew; the horizon is too long."""

    def __init__(self, message: str, residual_history: List[float]):
        super().__init__(message)
        self.residual_history = residual_history


class StateError(RuntimeError):
    """An operation was called on a state it is not valid for."""


Regime = Literal["inflow", "outflow"]


@dataclass(frozen=True)
class NumericsConfig:
    """Discretization controls for a run."""

    n_cells: int = 128
    dt_initial: float = 1e-3
    cfl_advection: float = 0.5
    picard_tol: float = 1e-10
    picard_max_iter: int = 25
    theta_viscous: float = 1.0
    dt_growth: float = 1.1
    b_min: float = 1e-8
    eta_min: float = 1e-8
    max_halvings: int = 40

    def __post_init__(self) -> None:
        if self.n_cells < 4:
            raise ValueError(f"n_cells must be at least 4, got {self.n_cells}")
        if not self.dt_initial > 0.0:
            raise ValueError("dt_initial must be positive")
        if not 0.0 < self.cfl_advection <= 1.0:
            raise ValueError("cfl_advection must lie in (0, 1]")
        if not self.picard_tol > 0.0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max_iter < 1:
            raise ValueError("picard_max_iter must be at least 1")
        if not 0.5 <= self.theta_viscous <= 1.0:
            raise ValueError("theta_viscous must lie in [0.5, 1]")
        if not self.dt_growth >= 1.0:
            raise ValueError("dt_growth must be at least 1")


@dataclass(frozen=True)
class SimState:
    """Complete solver state at one time level.

    The piston-side edge velocity and the piston velocity are the same
    unknown; the constructor enforces the equality.  ``eta_dot_hint`` is the
    flux of the last accepted step and warm-starts the next outflow Picard
    iteration (None before the first outflow step).
    """

    t: float
    grid: GridState
    piston: PistonState
    regime: Regime
    dt_next: float = 1e-3
    eta_dot_hint: Optional[float] = None

    def __post_init__(self) -> None:
        if self.regime not in ("inflow", "outflow"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.grid.u[0] != self.piston.b_dot:
            raise ValueError(
                f"velocity continuity violated: u[0]={self.grid.u[0]} "
                f"!= b_dot={self.piston.b_dot}"
            )
        if not self.dt_next > 0.0:
            raise ValueError("dt_next must be positive")


def transport_update(
    grid: GridState,
    coeffs: CoeffPair,
    dt: float,
    *,
    cfl_advection: float = 1.0,
    v_open_end: Optional[float] = None,
    source: Optional[np.ndarray] = None,
) -> GridState:
    """Advance the specific volume one step of v_t + beta v_z = alpha u_z.

    First-order upwind for the advection (the sign of beta is uniform in z,
    set by the sign of eta_dot), compact centered differencing of the edge
    velocities for the divergence.  ``v_open_end`` supplies the prescribed
    boundary value 1/rho_in during inflow; when it is None the open end is
    an outgoing characteristic and the boundary cell is extrapolated.
    ``coeffs.beta`` must be sampled on the cell edges.
    """
    n = grid.n_cells
    dz = grid.dz
    beta = coeffs.beta
    if beta.size != n + 1:
        raise ValueError("coeffs.beta must be sampled on the cell edges")
    max_beta = float(np.max(np.abs(beta)))
    if max_beta * dt > cfl_advection * dz * (1.0 + 1e-12):
        raise CflViolation(
            f"advective CFL violated: max|beta|*dt={max_beta * dt:.3e} "
            f"> {cfl_advection}*dz={cfl_advection * dz:.3e}"
        )
    v = grid.v
    div = coeffs.alpha * np.diff(grid.u) / dz
    grad = np.zeros_like(v)
    if coeffs.eta_dot <= 0.0:
        # beta >= 0: wind blows from the piston side; zero-gradient ghost there
        grad[1:] = (v[1:] - v[:-1]) / dz
    else:
        # beta < 0: wind blows from the open end
        grad[:-1] = (v[1:] - v[:-1]) / dz
        if v_open_end is not None:
            grad[-1] = (v_open_end - v[-1]) / (0.5 * dz)
    beta_centers = 0.5 * (beta[:-1] + beta[1:])
    v_new = v + dt * (div - beta_centers * grad)
    if source is not None:
        v_new = v_new + dt * np.asarray(source, dtype=float)
    if np.any(v_new <= 0.0):
        worst = int(np.argmin(v_new))
        raise VacuumError(
            f"specific volume nonpositive after transport update "
            f"(cell {worst}, v={v_new[worst]:.3e})"
        )
    return GridState(v=v_new, u=grid.u, eta=grid.eta, n_cells=n)


def momentum_piston_solve(
    grid: GridState,
    coeffs: CoeffPair,
    piston: PistonState,
    params: Params,
    bc_open_end_velocity: float,
    dt: float,
    *,
    theta: float = 1.0,
    source_u: Optional[np.ndarray] = None,
    source_piston: float = 0.0,
    pin_piston_to: Optional[float] = None,
    b_min: float = 1e-8,
) -> Tuple[np.ndarray, PistonState]:
    """One theta-implicit momentum step, monolithically coupled to the piston.

    The edge velocities solve u_t + beta u_z = mu a (a u_z / v)_z - a q(v)_z
    with the viscous term theta-implicit (tridiagonal), the advection
    explicit upwind and the pressure gradient explicit from the current v.
    The piston velocity is the z = 0 edge unknown; its row integrates

        b_dot_new = b_dot + dt * (traction - l * b_dot_new - K * (b - b_rest))

    with the traction q(v) - mu * (a u_z / v) at the piston evaluated at the
    new velocity level, then b_new = b + dt * b_dot_new.  The open end is
    Dirichlet-pinned to ``bc_open_end_velocity``.  ``source_u`` (per edge)
    and ``source_piston`` add manufactured forcings; ``pin_piston_to``
    replaces the piston row by a Dirichlet value for verification runs.
    """
    n = grid.n_cells
    dz = grid.dz
    v, u = grid.v, grid.u
    alpha = coeffs.alpha
    beta = coeffs.beta
    mu, K, l = params.mu, params.stiffness_K, params.damping_l

    q = pressure_q(v, params.gamma)
    lam = mu * alpha * alpha / (dz * dz)

    diag = np.ones(n + 1)
    lower = np.zeros(n + 1)  # lower[j] couples row j to u[j-1]
    upper = np.zeros(n + 1)  # upper[j] couples row j to u[j+1]
    rhs = np.empty(n + 1)

    # interior edges j = 1..n-1: cell j sits right of edge j (toward the
    # open end), cell j-1 left of it (toward the piston)
    inv_r = 1.0 / v[1:]
    inv_l = 1.0 / v[:-1]
    visc_expl = lam * ((u[2:] - u[1:-1]) * inv_r - (u[1:-1] - u[:-2]) * inv_l)
    press = -alpha * (q[1:] - q[:-1]) / dz
    if coeffs.eta_dot <= 0.0:
        adv = beta[1:-1] * (u[1:-1] - u[:-2]) / dz
    else:
        adv = beta[1:-1] * (u[2:] - u[1:-1]) / dz
    rhs[1:-1] = u[1:-1] + dt * (-adv + (1.0 - theta) * visc_expl + press)
    if source_u is not None:
        src = np.asarray(source_u, dtype=float)
        rhs[1:-1] += dt * src[1:-1]
    c = dt * theta * lam
    diag[1:-1] = 1.0 + c * (inv_r + inv_l)
    upper[1:-1] = -c * inv_r
    lower[1:-1] = -c * inv_l

    # piston row (edge 0)
    if pin_piston_to is not None:
        rhs[0] = float(pin_piston_to)
    else:
        g = mu * alpha / (dz * v[0])  # traction gradient factor, negative
        diag[0] = 1.0 + dt * l - dt * theta * g
        upper[0] = dt * theta * g
        rhs[0] = piston.b_dot + dt * (
            q[0]
            - K * (piston.b - params.b_rest)
            + source_piston
            - g * (1.0 - theta) * (u[1] - u[0])
        )

    # open end row (edge n): Dirichlet
    rhs[-1] = float(bc_open_end_velocity)

    ab = np.zeros((3, n + 1))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    try:
        u_new = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by v > 0
        raise NumericalFailure(f"singular momentum system: {exc}") from exc

    b_dot_new = float(u_new[0])
    b_new = piston.b + dt * b_dot_new
    if b_new <= b_min:
        frac = (piston.b - b_min) / max(piston.b - b_new, 1e-300)
        raise ContactEvent(
            f"piston contact: b fell to {b_new:.3e}", fraction=min(max(frac, 0.0), 1.0)
        )
    return u_new, PistonState(b=b_new, b_dot=b_dot_new)


def eta_update_inflow(
    eta: float, t: float, dt: float, schedule: BoundarySchedule
) -> Tuple[float, float]:
    """Mass gained from prescribed inflow data over one step (midpoint rule)."""
    if t + dt > schedule.t_star + 1e-9 * max(1.0, schedule.t_star):
        raise StateError(
            f"inflow eta update beyond t_star: t+dt={t + dt} > {schedule.t_star}"
        )
    tm = t + 0.5 * dt
    eta_dot = float(schedule.u_in(tm)) * float(schedule.rho_in(tm))
    return eta + dt * eta_dot, eta_dot


def eta_update_outflow_picard(
    grid: GridState,
    t: float,
    dt: float,
    schedule: BoundarySchedule,
    cfg: NumericsConfig,
    residual_history: Optional[List[float]] = None,
    initial_guess: Optional[float] = None,
) -> Tuple[float, float, int]:
    """Resolve the implicit outflow mass flux eta_dot = u_out / v(boundary).

    The boundary specific volume reacts to the coefficients, which depend on
    eta_dot; the loop iterates flux -> coefficients -> provisional transport
    -> boundary value -> flux until the flux change drops below picard_tol.
    ``initial_guess`` (typically the previous step's converged flux)
    warm-starts the loop; ``residual_history``, when given, collects the
    |change| per iteration.  Raises StepRejected on non-convergence (the
    caller halves dt) and MassDepletionEvent if the step would exhaust the
    total mass.
    """
    tm = t + 0.5 * dt
    u_out = float(schedule.u_out(tm))
    z_edges = grid.z_edges
    eta = grid.eta
    eta_dot = u_out / grid.v[-1] if initial_guess is None else float(initial_guess)
    if eta_dot > 0.0:
        eta_dot = 0.0  # an inflow-phase hint is not admissible here
    # the multiplicative decay of eta never reaches 0 in floating point, so
    # depletion fires at an absolute floor (same spirit as the b_min contact
    # threshold)
    eta_floor = cfg.eta_min

    def _depletion_check(eta_new: float, eta_dot_used: float) -> None:
        if eta_new <= eta_floor:
            frac = (eta - eta_floor) / max(eta - eta_new, 1e-300)
            raise MassDepletionEvent(
                f"total mass exhausted (eta_dot={eta_dot_used:.3e})",
                fraction=min(max(frac, 0.0), 1.0),
            )

    for iteration in range(1, cfg.picard_max_iter + 1):
        eta_new = eta + dt * eta_dot
        _depletion_check(eta_new, eta_dot)
        coeffs = coefficients_alpha_beta(0.5 * (eta + eta_new), eta_dot, z_edges)
        provisional = transport_update(
            grid, coeffs, dt, cfl_advection=cfg.cfl_advection
        )
        eta_dot_next = u_out / provisional.v[-1]
        change = abs(eta_dot_next - eta_dot)
        if residual_history is not None:
            residual_history.append(change)
        if change < cfg.picard_tol:
            eta_new = eta + dt * eta_dot_next
            _depletion_check(eta_new, eta_dot_next)
            return eta_new, eta_dot_next, iteration
        eta_dot = eta_dot_next
    raise PicardNonConvergence(
        f"outflow Picard iteration did not converge in {cfg.picard_max_iter} "
        f"iterations at t={t:.6g} (dt={dt:.3e})"
    )


def _lagrangian_sound_speed(v: np.ndarray, gamma: float) -> float:
    """Largest characteristic speed sqrt(-q'(v)) over the grid."""
    return float(np.sqrt(gamma) * np.max(v ** (-0.5 * (gamma + 1.0))))


def dt_stability_bound(
    grid: GridState, eta_dot_estimate: float, params: Params, cfg: NumericsConfig
) -> float:
    """Largest dt allowed by the explicit advective and acoustic terms.

    The viscous term is implicit and imposes no bound.  The acoustic speed in
    the normalized coordinate is |alpha| * sqrt(gamma) * v**(-(gamma+1)/2);
    the advective speed is at most |eta_dot| / eta.
    """
    speed = abs(eta_dot_estimate) / grid.eta
    speed += _lagrangian_sound_speed(grid.v, params.gamma) / grid.eta
    if speed <= 0.0:
        return math.inf
    return cfg.cfl_advection * grid.dz / speed


def _boundary_flux_estimate(state: SimState, schedule: BoundarySchedule) -> float:
    if state.regime == "inflow":
        return float(schedule.u_in(state.t)) * float(schedule.rho_in(state.t))
    return float(schedule.u_out(state.t)) / state.grid.v[-1]


def _attempt_step(
    state: SimState,
    dt: float,
    schedule: BoundarySchedule,
    params: Params,
    cfg: NumericsConfig,
    stats: Optional[dict] = None,
) -> SimState:
    grid = state.grid
    t = state.t
    if state.regime == "inflow":
        eta_new, eta_dot = eta_update_inflow(grid.eta, t, dt, schedule)
        v_open = 1.0 / float(schedule.rho_in(t + 0.5 * dt))
        bc_velocity = float(schedule.u_in(t + dt))
    else:
        eta_new, eta_dot, iters = eta_update_outflow_picard(
            grid, t, dt, schedule, cfg, initial_guess=state.eta_dot_hint
        )
        if stats is not None:
            stats["picard_iterations_max"] = max(
                stats.get("picard_iterations_max", 0), iters
            )
        v_open = None
        bc_velocity = float(schedule.u_out(t + dt))

    coeffs = coefficients_alpha_beta(
        0.5 * (grid.eta + eta_new), eta_dot, grid.z_edges
    )
    advected = transport_update(
        grid, coeffs, dt, cfl_advection=cfg.cfl_advection, v_open_end=v_open
    )
    mid = GridState(v=advected.v, u=grid.u, eta=eta_new, n_cells=grid.n_cells)
    try:
        u_new, piston_new = momentum_piston_solve(
            mid, coeffs, state.piston, params, bc_velocity, dt,
            theta=cfg.theta_viscous, b_min=cfg.b_min,
        )
    except ContactEvent as event:
        raise ContactEvent(str(event), time=t + dt * event.fraction) from None
    new_grid = GridState(v=mid.v, u=u_new, eta=eta_new, n_cells=grid.n_cells)
    return SimState(
        t=t + dt, grid=new_grid, piston=piston_new, regime=state.regime,
        dt_next=dt, eta_dot_hint=eta_dot if state.regime == "outflow" else None,
    )


def step(
    state: SimState,
    schedule: BoundarySchedule,
    params: Params,
    cfg: NumericsConfig,
    stats: Optional[dict] = None,
) -> SimState:
    """Advance one adaptive step, never crossing t_star or t_end.

    The step size starts from ``state.dt_next`` capped by the stability
    bound, halves on rejection (CFL violation, vacuum, Picard failure), and
    the accepted value grows by ``cfg.dt_growth`` for the next step.  Contact
    and mass-depletion events propagate with interpolated absolute times.
    ``stats``, when given, counts rejections and Picard iterations.
    """
    horizon = schedule.t_star if (
        state.regime == "inflow" and state.t < schedule.t_star
    ) else schedule.t_end
    remaining = horizon - state.t
    if remaining <= 1e-14 * max(1.0, abs(horizon)):
        raise StateError(f"no time left before t={horizon} (state.t={state.t})")

    flux_est = _boundary_flux_estimate(state, schedule)
    dt_base = min(
        state.dt_next, dt_stability_bound(state.grid, flux_est, params, cfg)
    )
    dt = min(dt_base, remaining)
    rejected = False
    for _ in range(cfg.max_halvings + 1):
        try:
            new_state = _attempt_step(state, dt, schedule, params, cfg, stats)
        except MassDepletionEvent as event:
            raise MassDepletionEvent(
                str(event), time=state.t + dt * event.fraction
            ) from None
        except StepRejected:
            rejected = True
            if stats is not None:
                stats["rejections"] = stats.get("rejections", 0) + 1
            dt = 0.5 * dt
            continue
        if rejected:
            base = dt  # grow again from the size that actually worked
        else:
            # a snap to the phase boundary is not a stability constraint
            base = dt_base if dt < dt_base else dt
        return dataclasses.replace(new_state, dt_next=cfg.dt_growth * base)
    raise NumericalFailure(
        f"step at t={state.t:.6g} rejected after {cfg.max_halvings} halvings "
        f"(dt={dt:.3e})"
    )


def switch_regime(state: SimState, schedule: BoundarySchedule) -> SimState:
    """Flip inflow -> outflow at t_star; grid, piston and eta carry over."""
    if state.regime != "inflow":
        raise StateError("regime switch already performed")
    tol = max(state.dt_next, 1e-9 * max(1.0, schedule.t_star))
    if abs(state.t - schedule.t_star) > tol:
        raise StateError(
            f"regime switch requested at t={state.t}, but t_star={schedule.t_star}"
        )
    return dataclasses.replace(state, regime="outflow")


def whole_horizon_fixed_point(
    initial: SimState,
    schedule: BoundarySchedule,
    params: Params,
    cfg: NumericsConfig,
    horizon: float,
    *,
    max_outer: int = 40,
    m_factor: float = 10.0,
) -> Tuple[np.ndarray, List[float]]:
    """Outer fixed-point iteration for the outflow mass trajectory.

    A guess trajectory eta^k (piecewise linear, eta(T*) = eta0, slopes in
    [-m, 0] with m = ``m_factor`` * eta0) is frozen, the flow is solved over
    the horizon with the induced coefficients, and the mapped trajectory

        S(eta^k)(t) = eta0 + integral of u_out / v(boundary)

    becomes the next iterate.  Iteration stops when the discrete C1 norm of
    the change drops below ``cfg.picard_tol``.  Returns the converged
    trajectory as a 2-column array (t, eta) and the residual history.
    Raises NonContractionError when the residual grows three times in a row.
    """
    if initial.regime != "outflow":
        raise StateError("whole-horizon fixed point requires the outflow regime")
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    t0 = initial.t
    eta0 = initial.grid.eta
    m = m_factor * eta0

    flux0 = float(schedule.u_out(t0)) / initial.grid.v[-1]
    dt_cap = dt_stability_bound(initial.grid, flux0, params, cfg)
    n_steps = max(2, int(round(horizon / cfg.dt_initial)),
                  int(math.ceil(horizon / dt_cap)))
    dt = horizon / n_steps
    times = t0 + dt * np.arange(n_steps + 1)

    eta_traj = np.full(n_steps + 1, eta0)
    slopes = np.zeros(n_steps)
    residuals: List[float] = []
    growth_streak = 0

    for _ in range(max_outer):
        v_boundary = _solve_with_frozen_eta(
            initial, schedule, params, cfg, times, eta_traj, slopes
        )
        slopes_next = np.empty(n_steps)
        for i in range(n_steps):
            raw = float(schedule.u_out(times[i] + 0.5 * dt)) / v_boundary[i]
            slopes_next[i] = min(0.0, max(-m, raw))
        eta_next = eta0 + np.concatenate([[0.0], np.cumsum(dt * slopes_next)])
        residual = float(
            np.max(np.abs(eta_next - eta_traj))
            + np.max(np.abs(slopes_next - slopes))
        )
        residuals.append(residual)
        eta_traj, slopes = eta_next, slopes_next
        if residual < cfg.picard_tol:
            return np.column_stack([times, eta_traj]), residuals
        if len(residuals) >= 2 and residual > residuals[-2]:
            growth_streak += 1
            if growth_streak >= 3:
                raise NonContractionError(
                    "fixed-point residual grew over 3 consecutive iterations "
                    "(horizon too long): " + ", ".join(f"{r:.3e}" for r in residuals),
                    residuals,
                )
        else:
            growth_streak = 0
    raise NonContractionError(
        f"fixed point not converged after {max_outer} outer iterations "
        f"(last residual {residuals[-1]:.3e})",
        residuals,
    )


def _solve_with_frozen_eta(
    initial: SimState,
    schedule: BoundarySchedule,
    params: Params,
    cfg: NumericsConfig,
    times: np.ndarray,
    eta_traj: np.ndarray,
    slopes: np.ndarray,
) -> np.ndarray:
    """Run the flow over the horizon with a frozen mass trajectory.

    Returns the boundary specific volume seen during each step (the value
    the operator S integrates against).
    """
    grid = initial.grid
    piston = initial.piston
    n_steps = times.size - 1
    dt = float(times[1] - times[0])
    v_boundary = np.empty(n_steps)
    for i in range(n_steps):
        if eta_traj[i + 1] <= cfg.eta_min:
            raise MassDepletionEvent(
                "frozen mass trajectory reaches zero inside the horizon",
                time=float(times[i + 1]),
            )
        eta_mid = 0.5 * (eta_traj[i] + eta_traj[i + 1])
        coeffs = coefficients_alpha_beta(eta_mid, float(slopes[i]), grid.z_edges)
        advected = transport_update(grid, coeffs, dt, cfl_advection=cfg.cfl_advection)
        mid = GridState(
            v=advected.v, u=grid.u, eta=float(eta_traj[i + 1]), n_cells=grid.n_cells
        )
        bc_velocity = float(schedule.u_out(float(times[i + 1])))
        u_new, piston = momentum_piston_solve(
            mid, coeffs, piston, params, bc_velocity, dt,
            theta=cfg.theta_viscous, b_min=cfg.b_min,
        )
        grid = GridState(
            v=mid.v, u=u_new, eta=float(eta_traj[i + 1]), n_cells=grid.n_cells
        )
        v_boundary[i] = grid.v[-1]
    return v_boundary

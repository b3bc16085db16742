"""Run orchestration: phase sequencing, diagnostics recording, event handling.

The driver advances the solver step by step, appends one ``DiagRecord`` per
accepted step (trapezoid-in-time accumulation of the energy-budget terms),
switches regime exactly at t_star, and converts terminal solver events into
a ``RunResult`` with the documented exit codes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .coords import EulerianField, lagrangian_init_from_eulerian
from .core import BoundarySchedule, GridState, Params, PistonState, pressure_q
from .diagnostics import (
    DiagRecord,
    RunSeries,
    energy,
    energy_budget_residual,
    total_mass_eulerian,
    velocity_l2,
    volume_bound_ratio,
)
from .solver import (
    ContactEvent,
    MassDepletionEvent,
    NumericalFailure,
    NumericsConfig,
    SimState,
    StepRejected,
    step,
    switch_regime,
)

EXIT_COMPLETED = 0
EXIT_CONTACT = 2
EXIT_DEPLETION = 3
EXIT_FAILURE = 4

_STATUS_BY_CODE = {
    EXIT_COMPLETED: "completed",
    EXIT_CONTACT: "contact",
    EXIT_DEPLETION: "depleted",
    EXIT_FAILURE: "failed",
}


@dataclass
class Snapshot:
    """Full restartable solver state at one instant."""

    t: float
    z: np.ndarray
    v: np.ndarray
    u: np.ndarray
    eta: float
    b: float
    b_dot: float
    dt: float
    regime: str

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "z": [float(x) for x in self.z],
            "v": [float(x) for x in self.v],
            "u": [float(x) for x in self.u],
            "eta": self.eta,
            "b": self.b,
            "b_dot": self.b_dot,
            "dt": self.dt,
            "regime": self.regime,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Snapshot":
        return cls(
            t=float(data["t"]),
            z=np.asarray(data["z"], dtype=float),
            v=np.asarray(data["v"], dtype=float),
            u=np.asarray(data["u"], dtype=float),
            eta=float(data["eta"]),
            b=float(data["b"]),
            b_dot=float(data["b_dot"]),
            dt=float(data["dt"]),
            regime=str(data["regime"]),
        )

    def to_state(self) -> SimState:
        grid = GridState(v=self.v, u=self.u, eta=self.eta)
        piston = PistonState(b=self.b, b_dot=self.b_dot)
        return SimState(
            t=self.t, grid=grid, piston=piston,
            regime=self.regime, dt_next=self.dt,  # type: ignore[arg-type]
        )


def snapshot_of(state: SimState) -> Snapshot:
    return Snapshot(
        t=state.t,
        z=np.asarray(state.grid.z_edges),
        v=np.asarray(state.grid.v),
        u=np.asarray(state.grid.u),
        eta=float(state.grid.eta),
        b=state.piston.b,
        b_dot=state.piston.b_dot,
        dt=state.dt_next,
        regime=state.regime,
    )


@dataclass
class RunResult:
    series: RunSeries
    final_state: Optional[SimState]
    status: str
    exit_code: int
    event_time: Optional[float]
    summary: dict = field(default_factory=dict)
    snapshots: List[Snapshot] = field(default_factory=list)


def build_initial_state(
    field_in: EulerianField,
    b1: float,
    schedule: BoundarySchedule,
    cfg: NumericsConfig,
) -> tuple:
    """Initialize the normalized grid from Eulerian data.

    The initial velocity at the piston edge is corrected to b1 (velocity
    continuity is an algebraic constraint of the formulation).  Returns
    ``(state, correction)`` where ``correction`` is the size of that fix.
    """
    grid = lagrangian_init_from_eulerian(field_in, cfg.n_cells)
    u = np.array(grid.u)
    correction = abs(float(u[0]) - b1)
    u[0] = b1
    grid = GridState(v=grid.v, u=u, eta=grid.eta, n_cells=cfg.n_cells)
    piston = PistonState(b=float(field_in.b), b_dot=float(b1))
    regime = "inflow" if schedule.t_star > 0.0 else "outflow"
    state = SimState(
        t=0.0, grid=grid, piston=piston, regime=regime, dt_next=cfg.dt_initial
    )
    return state, correction


def _boundary_values(state: SimState, schedule: BoundarySchedule):
    """Open-end velocity, specific volume and instantaneous mass flux."""
    grid = state.grid
    u_b = float(grid.u[-1])
    if state.regime == "inflow":
        rho_b = float(schedule.rho_in(min(state.t, schedule.t_star)))
        v_b = 1.0 / rho_b
        flux = float(schedule.u_in(min(state.t, schedule.t_star))) * rho_b
    else:
        v_b = float(grid.v[-1])
        flux = float(schedule.u_out(state.t)) / v_b
    return u_b, v_b, flux


@dataclass
class _Rates:
    dissipation: float
    damping: float
    outflux_pressure: float
    boundary_work: float


@dataclass
class _GTracker:
    """Incremental evaluation of the exponential-bound exponent.

    Keeps the trapezoid of the spring term and the outflow-start reference
    values so each step costs O(1); equivalent to ``exponent_G`` recomputed
    from the full series.
    """

    ref_b: float
    ref_b_dot: float
    ref_u_l2: float
    ref_eta_sqrt: float
    prev_t: float
    prev_spring: float
    spring_integral: float = 0.0

    @classmethod
    def start(cls, state: SimState, u_l2: float, params: Params) -> "_GTracker":
        return cls(
            ref_b=state.piston.b,
            ref_b_dot=state.piston.b_dot,
            ref_u_l2=u_l2,
            ref_eta_sqrt=math.sqrt(state.grid.eta),
            prev_t=state.t,
            prev_spring=params.stiffness_K * (state.piston.b - params.b_rest),
        )

    def advance(self, state: SimState, u_l2: float, params: Params) -> float:
        spring = params.stiffness_K * (state.piston.b - params.b_rest)
        self.spring_integral += 0.5 * (self.prev_spring + spring) * (
            state.t - self.prev_t
        )
        self.prev_t = state.t
        self.prev_spring = spring
        return (
            state.piston.b_dot - self.ref_b_dot
            + params.damping_l * (state.piston.b - self.ref_b)
            + self.spring_integral
            + self.ref_eta_sqrt * (u_l2 + self.ref_u_l2)
        ) / params.mu


def _rates(state: SimState, schedule: BoundarySchedule, params: Params) -> _Rates:
    grid = state.grid
    dz = grid.dz
    alpha = -1.0 / grid.eta
    u_z = np.diff(grid.u) / dz
    u_y = alpha * u_z  # velocity gradient in the mass coordinate, per cell
    dissipation = float(np.sum(params.mu / grid.v * u_y * u_y) * grid.dy)
    damping = params.damping_l * state.piston.b_dot ** 2

    u_b, v_b, flux = _boundary_values(state, schedule)
    outflux_pressure = -u_b / (params.gamma - 1.0) * v_b ** (-params.gamma)
    # sigma = mu u_y / v - q with the boundary cell's mass-coordinate gradient
    sigma_b = params.mu * float(u_y[-1]) / v_b - float(
        pressure_q(v_b, params.gamma)
    )
    boundary_work = flux * 0.5 * u_b * u_b - u_b * sigma_b
    return _Rates(dissipation, damping, outflux_pressure, boundary_work)


def _make_record(
    state: SimState,
    schedule: BoundarySchedule,
    params: Params,
    series: RunSeries,
    prev: Optional[DiagRecord],
    rates: _Rates,
    prev_rates: Optional[_Rates],
    g_tracker: Optional[_GTracker],
) -> DiagRecord:
    grid = state.grid
    if prev is None:
        diss_cum = damp_cum = pout_cum = work_cum = 0.0
    else:
        h = state.t - prev.t
        diss_cum = prev.dissipation_cum + 0.5 * h * (prev_rates.dissipation + rates.dissipation)
        damp_cum = prev.damping_cum + 0.5 * h * (prev_rates.damping + rates.damping)
        pout_cum = prev.outflux_pressure_cum + 0.5 * h * (
            prev_rates.outflux_pressure + rates.outflux_pressure
        )
        work_cum = prev.boundary_work_cum + 0.5 * h * (
            prev_rates.boundary_work + rates.boundary_work
        )

    g_value = math.nan
    u_l2_value = velocity_l2(state)
    if state.regime == "outflow" and g_tracker is not None:
        g_value = g_tracker.advance(state, u_l2_value, params)
        if series.v_star is not None:
            ratio = volume_bound_ratio(state, series.v_star, series.eta_star, g_value)
            series.g_bound_max_ratio = max(series.g_bound_max_ratio, ratio)

    b_recon = float(np.sum(grid.v) * grid.dy)
    series.b_drift_max = max(series.b_drift_max, abs(b_recon - state.piston.b))
    _, v_b, _ = _boundary_values(state, schedule)

    return DiagRecord(
        t=state.t,
        b=state.piston.b,
        b_dot=state.piston.b_dot,
        eta=float(grid.eta),
        mass_eulerian=total_mass_eulerian(state),
        energy=energy(state, params),
        dissipation_cum=diss_cum,
        outflux_pressure_cum=pout_cum,
        min_v=float(np.min(grid.v)),
        max_v=float(np.max(grid.v)),
        G_exponent=g_value,
        regime=state.regime,
        u_l2=u_l2_value,
        damping_cum=damp_cum,
        boundary_work_cum=work_cum,
        b_recon=b_recon,
        v_boundary=v_b,
    )


def _mark_outflow_start(series: RunSeries, state: SimState) -> None:
    if series.v_star is None:
        series.v_star = np.array(state.grid.v)
        series.eta_star = float(state.grid.eta)
        series.t_star_actual = state.t


def run_simulation(
    params: Params,
    cfg: NumericsConfig,
    schedule: BoundarySchedule,
    initial: SimState,
    *,
    snapshot_every: int = 0,
    initial_bdot_correction: float = 0.0,
    progress: Optional[Callable[[SimState], None]] = None,
) -> RunResult:
    """Drive a full run from ``initial`` to t_end or a terminal event."""
    state = initial
    series = RunSeries()
    snapshots: List[Snapshot] = []
    g_tracker: Optional[_GTracker] = None
    if state.regime == "outflow":
        _mark_outflow_start(series, state)
        g_tracker = _GTracker.start(state, velocity_l2(state), params)

    rates = _rates(state, schedule, params)
    record = _make_record(
        state, schedule, params, series, None, rates, None, g_tracker
    )
    series.records.append(record)
    if snapshot_every > 0:
        snapshots.append(snapshot_of(state))

    exit_code = EXIT_COMPLETED
    event_time: Optional[float] = None
    step_index = 0
    stats: dict = {}
    eps = 1e-12 * max(1.0, schedule.t_end)
    try:
        while state.t < schedule.t_end - eps:
            if (
                state.regime == "inflow"
                and state.t >= schedule.t_star - eps
            ):
                state = switch_regime(state, schedule)
                _mark_outflow_start(series, state)
                g_tracker = _GTracker.start(state, velocity_l2(state), params)
                # zero-duration anchor record: outflow reference for the
                # exponential bound and the regime flip of the boundary rates
                prev_record = series.records[-1]
                prev_rates = rates
                rates = _rates(state, schedule, params)
                record = _make_record(
                    state, schedule, params, series, prev_record, rates,
                    prev_rates, g_tracker,
                )
                series.records.append(record)
                continue
            prev_record = series.records[-1]
            prev_rates = rates
            prev_eta = state.grid.eta
            state = step(state, schedule, params, cfg, stats)
            step_index += 1
            series.flux_accumulated += state.grid.eta - prev_eta
            rates = _rates(state, schedule, params)
            record = _make_record(
                state, schedule, params, series, prev_record, rates,
                prev_rates, g_tracker,
            )
            series.records.append(record)
            if progress is not None:
                progress(state)
            if snapshot_every > 0 and step_index % snapshot_every == 0:
                snapshots.append(snapshot_of(state))
    except ContactEvent as event:
        exit_code, event_time = EXIT_CONTACT, event.time
    except MassDepletionEvent as event:
        exit_code, event_time = EXIT_DEPLETION, event.time
    except (NumericalFailure, StepRejected) as event:
        exit_code = EXIT_FAILURE
        series.failure_message = str(event)

    summary = _summarize(
        series, schedule, params, exit_code, event_time, initial_bdot_correction
    )
    summary["step_rejections"] = stats.get("rejections", 0)
    summary["picard_iterations_max"] = stats.get("picard_iterations_max", 0)
    return RunResult(
        series=series,
        final_state=state,
        status=_STATUS_BY_CODE[exit_code],
        exit_code=exit_code,
        event_time=event_time,
        summary=summary,
        snapshots=snapshots,
    )


def _summarize(
    series: RunSeries,
    schedule: BoundarySchedule,
    params: Params,
    exit_code: int,
    event_time: Optional[float],
    initial_bdot_correction: float,
) -> dict:
    from .diagnostics import contact_time_lower_bound

    records = series.records
    summary = {
        "status": _STATUS_BY_CODE[exit_code],
        "exit_code": exit_code,
        "event_time": None if event_time is None else float(event_time),
        "steps": len(records) - 1,
        "t_final": float(records[-1].t) if records else None,
        "initial_b_dot_correction": float(initial_bdot_correction),
        "b_consistency_max_drift": float(series.b_drift_max),
        "eta_final": float(records[-1].eta) if records else None,
        "mass_flux_identity_error": float(abs(
            (records[-1].eta - records[0].eta) - series.flux_accumulated
        )) if records else None,
        "g_bound_max_ratio": float(series.g_bound_max_ratio) or None,
    }
    if series.g_bound_max_ratio:
        from .diagnostics import TOL_BOUND

        summary["g_bound_ok"] = bool(
            series.g_bound_max_ratio <= 1.0 + TOL_BOUND
        )
    if series.failure_message is not None:
        summary["failure_message"] = series.failure_message
    if len(records) >= 2:
        summary["energy_budget_residual"] = energy_budget_residual(
            records, schedule, params
        )
    if series.eta_star is not None and schedule.u_out is not None:
        out = [r for r in records if r.regime == "outflow"]
        if out:
            v_min_boundary = min(r.v_boundary for r in out)
            bound = contact_time_lower_bound(
                series.eta_star,
                schedule.u_out,
                v_min_boundary,
                t_star=series.t_star_actual,
                t_end=max(schedule.t_end, (event_time or 0.0) + 1.0),
            )
            summary["contact_time_lower_bound"] = (
                bound if math.isfinite(bound) else "inf"
            )
            if event_time is None:
                summary["event_vs_bound_ok"] = True
            else:
                summary["event_vs_bound_ok"] = bool(
                    math.isfinite(bound) and event_time >= bound - 1e-9
                )
    return summary

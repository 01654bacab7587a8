"""Time-domain simulation of the inverter fleet across a fault event.

Each grid-following inverter tracks the network through a synchronous
reference frame PI loop driven by the q-axis component of its own
generation voltage (PCC voltage plus the drop across its line and virtual
impedance, projected into its own PLL frame). The simulation steps a fixed
dt through pre-fault, fault-on and post-fault intervals, applying current
limiting against each unit's dc-side ceiling and latching trips.

Angles are accumulated unwrapped in the synchronous frame, so loss of
synchronism shows up as unbounded drift instead of wrap-around.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from gflswing.network import (
    EquivalentImpedanceSet,
    GridModel,
    TheveninEquivalent,
    equivalent_impedance,
    faulted_grid,
)
from gflswing.pcc import (
    InjectionState,
    NonConvergence,
    ZeroVoltage,
    q_components,
    solve_vpcc,
)
from gflswing.phasor import Impedance, Phasor

__all__ = [
    "InverterConfig",
    "PllState",
    "InverterState",
    "FaultScenario",
    "TrajectoryRecord",
    "Trajectory",
    "SimState",
    "SolverOptions",
    "InitializationFailure",
    "pll_step",
    "limited_current",
    "find_equilibrium",
    "step",
    "simulate",
    "DIVERGENCE_BOUND_RAD",
]

# Unwrapped injection-angle deviation from pre-fault beyond which a unit is
# declared out of synchronism and tripped.
DIVERGENCE_BOUND_RAD = math.pi

_DEFAULT_TOL_FRACTION = 1e-9


class InitializationFailure(RuntimeError):
    """No pre-fault equilibrium exists for the configured fleet and grid."""


@dataclass(frozen=True, slots=True)
class InverterConfig:
    """Static ratings and control gains of one inverter.

    kp and ki are the PI gains of the synchronization loop acting on a
    q-voltage error in volts (rad/s per volt and rad/s^2 per volt). i_max is
    the peak current ceiling imposed by the dc side; trip_holdoff is how
    long continuous limiting is tolerated before the unit shuts off.
    """

    name: str
    s_rated: float
    z_line: Impedance
    r_virtual: float
    kp: float
    ki: float
    i_max: float
    pf_angle: float = 0.0
    trip_holdoff: float = 5e-4

    def __post_init__(self) -> None:
        if self.s_rated <= 0.0:
            raise ValueError(f"{self.name}: s_rated must be positive, got {self.s_rated}")
        if self.i_max <= 0.0:
            raise ValueError(f"{self.name}: i_max must be positive, got {self.i_max}")
        if self.kp < 0.0 or self.ki < 0.0:
            raise ValueError(f"{self.name}: PLL gains must be non-negative")
        if self.r_virtual < 0.0:
            raise ValueError(f"{self.name}: r_virtual must be non-negative")
        if self.trip_holdoff < 0.0:
            raise ValueError(f"{self.name}: trip_holdoff must be non-negative")

    def z_total(self) -> Impedance:
        """Series line plus virtual impedance."""
        return Impedance(self.z_line.r + self.r_virtual, self.z_line.x)


@dataclass(frozen=True, slots=True)
class PllState:
    """Synchronous-frame PI tracker state: theta is constant at lock."""

    theta: float
    omega_dev: float
    integral: float


@dataclass(frozen=True, slots=True)
class InverterState:
    pll: PllState
    theta_cg: float
    i_cmd: float
    v_gq: float
    limited: bool
    limited_since: float | None
    tripped: bool
    trip_time: float | None


@dataclass(frozen=True, slots=True)
class FaultScenario:
    """Fault timing: t_clear = None leaves the fault on until t_end."""

    t_fault: float
    t_clear: float | None
    fault_depth: float
    t_end: float
    dt: float

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 <= self.t_fault < self.t_end:
            raise ValueError(
                f"t_fault must satisfy 0 <= t_fault < t_end, got {self.t_fault}"
            )
        if self.t_clear is not None and not self.t_fault < self.t_clear <= self.t_end:
            raise ValueError(
                f"t_clear must satisfy t_fault < t_clear <= t_end, got {self.t_clear}"
            )
        if not 0.0 <= self.fault_depth <= 1.0:
            raise ValueError(f"fault_depth must lie in [0, 1], got {self.fault_depth}")


@dataclass(frozen=True, slots=True)
class TrajectoryRecord:
    """One sample: PCC phasor plus per-inverter tuples in fleet order.

    i_q is the current component in quadrature with the solved PCC voltage
    (leading positive); v_gq is the q-axis generation voltage seen by each
    unit's own PLL (0.0 once tripped). i_mag equals i_max exactly while a
    unit is limited and 0 after it trips.
    """

    t: float
    v_pcc_mag: float
    v_pcc_angle: float
    theta_cg: tuple[float, ...]
    i_mag: tuple[float, ...]
    i_q: tuple[float, ...]
    v_gq: tuple[float, ...]
    limited: tuple[bool, ...]
    tripped: tuple[bool, ...]


@dataclass(frozen=True, slots=True)
class Trajectory:
    records: tuple[TrajectoryRecord, ...]
    scenario: FaultScenario
    fleet: tuple[InverterConfig, ...]
    solver_failure_t: float | None = None

    def __post_init__(self) -> None:
        if not self.records:
            raise ValueError("trajectory must contain at least one record")
        if self.records[0].t != 0.0:
            raise ValueError("trajectory must start at t = 0")


@dataclass(frozen=True, slots=True)
class SimState:
    t: float
    v_pcc: Phasor
    inverters: tuple[InverterState, ...]


@dataclass(frozen=True, slots=True)
class SolverOptions:
    """Fixed-point solver settings; tol = None resolves to 1e-9 * |v_th|.

    lag_mode replaces the implicit solve with an explicit update that uses
    the previous step's voltage magnitude in the current denominators.
    """

    tol: float | None = None
    max_iter: int = 100
    damping: float = 0.7
    lag_mode: bool = False

    def resolve_tol(self, v_th_mag: float) -> float:
        if self.tol is not None:
            return self.tol
        return _DEFAULT_TOL_FRACTION * max(v_th_mag, 1.0)


def pll_step(state: PllState, v_q: float, kp: float, ki: float, dt: float) -> PllState:
    """One PI update: integrate the q error, update omega, advance theta."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    integral = state.integral + v_q * dt
    omega_dev = kp * v_q + ki * integral
    theta = state.theta + omega_dev * dt
    return PllState(theta, omega_dev, integral)


def limited_current(s_ref: float, v_pcc_mag: float, i_max: float) -> tuple[float, bool]:
    """Clamp the commanded current s_ref / v_pcc_mag against i_max."""
    if v_pcc_mag <= 0.0:
        raise ValueError(f"v_pcc_mag must be positive, got {v_pcc_mag}")
    i_raw = s_ref / v_pcc_mag
    if i_raw > i_max:
        return i_max, True
    return i_raw, False


def _build_injections(
    fleet: Sequence[InverterConfig],
    theta_cg: Sequence[float],
    tripped: Sequence[bool],
    limited: Sequence[bool],
    lag_currents: Sequence[float] | None = None,
) -> InjectionState:
    """Injection state with tripped units at zero and limited units pinned.

    lag_currents pins every live unit to the given current (explicit-lag
    stepping); otherwise only limited units are pinned at i_max.
    """
    n = len(fleet)
    s = []
    fixed: list[float | None] = []
    for p in range(n):
        if tripped[p]:
            s.append(0.0)
            fixed.append(None)
        elif lag_currents is not None:
            s.append(fleet[p].s_rated)
            fixed.append(lag_currents[p])
        elif limited[p]:
            s.append(fleet[p].s_rated)
            fixed.append(fleet[p].i_max)
        else:
            s.append(fleet[p].s_rated)
            fixed.append(None)
    return InjectionState(tuple(s), tuple(theta_cg), tuple(fixed))


def find_equilibrium(
    fleet: Sequence[InverterConfig],
    grid: TheveninEquivalent,
    zeq: EquivalentImpedanceSet,
    opts: SolverOptions | None = None,
) -> SimState:
    """Pre-fault operating point with every PLL locked (v_gq = 0).

    Alternates the PCC voltage solve with per-inverter re-locking of the
    injection angle until both are self-consistent. Fails when a unit would
    exceed its current ceiling at rest or no lock angle exists.
    """
    if not fleet:
        raise ValueError("fleet must be non-empty")
    opts = opts or SolverOptions()
    v_th_mag = grid.v_th.magnitude()
    tol = opts.resolve_tol(v_th_mag)
    n = len(fleet)
    z_series = [cfg.z_total() for cfg in fleet]
    psi = [z.angle() for z in z_series]
    z_abs = [z.magnitude() for z in z_series]

    v_th_angle = math.atan2(grid.v_th.im, grid.v_th.re)
    theta = [v_th_angle] * n
    tripped = [False] * n
    limited = [False] * n

    v = grid.v_th
    for _ in range(500):
        inj = _build_injections(
            fleet, [theta[p] + fleet[p].pf_angle for p in range(n)], tripped, limited
        )
        try:
            sol = solve_vpcc(grid, zeq, inj, tol, opts.max_iter, opts.damping)
        except (NonConvergence, ZeroVoltage) as exc:
            raise InitializationFailure(f"no pre-fault voltage solution: {exc}") from exc
        v = sol.v_pcc
        v_mag = v.magnitude()
        v_angle = math.atan2(v.im, v.re)
        max_delta = 0.0
        for p, cfg in enumerate(fleet):
            i_p = cfg.s_rated / v_mag
            if i_p > cfg.i_max:
                raise InitializationFailure(
                    f"{cfg.name}: rated current {i_p:.2f} A exceeds the "
                    f"{cfg.i_max:.2f} A ceiling at the pre-fault voltage"
                )
            b = i_p * z_abs[p] * math.sin(cfg.pf_angle + psi[p]) / v_mag
            if abs(b) > 1.0:
                raise InitializationFailure(
                    f"{cfg.name}: no locked injection angle exists (|{b:.3f}| > 1)"
                )
            new_theta = v_angle + math.asin(b)
            max_delta = max(max_delta, abs(new_theta - theta[p]))
            theta[p] = new_theta
        if max_delta < 1e-13:
            break
    else:
        raise InitializationFailure("pre-fault lock iteration did not converge")

    v_mag = v.magnitude()
    inverters = tuple(
        InverterState(
            pll=PllState(theta[p], 0.0, 0.0),
            theta_cg=theta[p] + fleet[p].pf_angle,
            i_cmd=fleet[p].s_rated / v_mag,
            v_gq=0.0,
            limited=False,
            limited_since=None,
            tripped=False,
            trip_time=None,
        )
        for p in range(n)
    )
    return SimState(0.0, v, inverters)


def step(
    state: SimState,
    fleet: Sequence[InverterConfig],
    grid_now: TheveninEquivalent,
    zeq_now: EquivalentImpedanceSet,
    dt: float,
    opts: SolverOptions | None = None,
    theta_cg_ref: Sequence[float] | None = None,
) -> SimState:
    """Advance the fleet by one step under the given grid equivalent.

    Order per step: resolve limiter flags and solve the PCC voltage with the
    current injection angles, evaluate each live unit's q-axis generation
    voltage in its own PLL frame, update the PLLs, then latch trips (holdoff
    expiry or angle divergence past DIVERGENCE_BOUND_RAD from theta_cg_ref).
    Tripped units are frozen and inject nothing from the following step.
    """
    opts = opts or SolverOptions()
    tol = opts.resolve_tol(grid_now.v_th.magnitude())
    n = len(fleet)
    inv = state.inverters
    t_new = state.t + dt

    tripped = [st.tripped for st in inv]
    theta_cg_old = [st.theta_cg for st in inv]

    if opts.lag_mode:
        v_prev_mag = state.v_pcc.magnitude()
        currents = []
        limited = []
        for p, cfg in enumerate(fleet):
            if tripped[p]:
                currents.append(0.0)
                limited.append(False)
            else:
                i_p, lim = limited_current(cfg.s_rated, v_prev_mag, cfg.i_max)
                currents.append(i_p)
                limited.append(lim)
        inj = _build_injections(fleet, theta_cg_old, tripped, limited, currents)
        sol = solve_vpcc(grid_now, zeq_now, inj, tol, opts.max_iter, opts.damping)
    else:
        limited = [st.limited and not st.tripped for st in inv]
        if grid_now.v_th.magnitude() == 0.0:
            # Collapsed source: every live unit saturates at once.
            limited = [not t for t in tripped]
        inj = _build_injections(fleet, theta_cg_old, tripped, limited)
        sol = solve_vpcc(grid_now, zeq_now, inj, tol, opts.max_iter, opts.damping)
        for _ in range(n + 1):
            v_mag = sol.v_pcc.magnitude()
            if v_mag == 0.0:
                raise ZeroVoltage("PCC voltage collapsed to zero during a step")
            want = [
                (not tripped[p]) and fleet[p].s_rated / v_mag > fleet[p].i_max
                for p in range(n)
            ]
            if want == limited:
                break
            limited = want
            inj = _build_injections(fleet, theta_cg_old, tripped, limited)
            sol = solve_vpcc(grid_now, zeq_now, inj, tol, opts.max_iter, opts.damping)

    v = sol.v_pcc
    v_mag = v.magnitude()
    if v_mag == 0.0:
        raise ZeroVoltage("PCC voltage collapsed to zero during a step")
    z_series = [cfg.z_total() for cfg in fleet]

    new_states = []
    for p, cfg in enumerate(fleet):
        st = inv[p]
        if tripped[p]:
            new_states.append(
                replace(st, i_cmd=0.0, v_gq=0.0, limited=False, limited_since=None)
            )
            continue

        i_cmd = cfg.i_max if limited[p] else cfg.s_rated / v_mag
        _, v_gq_all = q_components(grid_now, v, zeq_now, inj, z_series, st.pll.theta)
        v_gq = v_gq_all[p]
        pll = pll_step(st.pll, v_gq, cfg.kp, cfg.ki, dt)
        theta_cg = pll.theta + cfg.pf_angle

        limited_since = (st.limited_since if st.limited else t_new) if limited[p] else None

        trip = False
        if limited[p] and t_new - limited_since >= cfg.trip_holdoff - 1e-12:
            trip = True
        if theta_cg_ref is not None and abs(theta_cg - theta_cg_ref[p]) > DIVERGENCE_BOUND_RAD:
            trip = True

        new_states.append(
            InverterState(
                pll=pll,
                theta_cg=theta_cg,
                i_cmd=i_cmd,
                v_gq=v_gq,
                limited=limited[p],
                limited_since=limited_since,
                tripped=trip,
                trip_time=t_new if trip else None,
            )
        )

    return SimState(t_new, v, tuple(new_states))


def _record_from(state: SimState, theta_used: Sequence[float]) -> TrajectoryRecord:
    """Sample the state; i_q follows the injection angles that actually
    flowed during the step (theta_used)."""
    v = state.v_pcc
    v_angle = math.atan2(v.im, v.re)
    inv = state.inverters
    return TrajectoryRecord(
        t=state.t,
        v_pcc_mag=v.magnitude(),
        v_pcc_angle=v_angle,
        theta_cg=tuple(st.theta_cg for st in inv),
        i_mag=tuple(st.i_cmd for st in inv),
        i_q=tuple(
            st.i_cmd * math.sin(theta_used[p] - v_angle) for p, st in enumerate(inv)
        ),
        v_gq=tuple(st.v_gq for st in inv),
        limited=tuple(st.limited for st in inv),
        tripped=tuple(st.tripped for st in inv),
    )


def simulate(
    fleet: Sequence[InverterConfig],
    grid: GridModel,
    scenario: FaultScenario,
    opts: SolverOptions | None = None,
) -> Trajectory:
    """Run pre-fault, fault-on and post-fault intervals and record every step.

    Fault application and clearing snap to the nearest step boundary. A
    solver failure mid-run is recorded as instability onset: all remaining
    units are marked tripped at that step and the run stops there.
    """
    if not fleet:
        raise ValueError("fleet must be non-empty")
    opts = opts or SolverOptions()
    fleet = tuple(fleet)

    zeq_pre = equivalent_impedance(fleet, grid.prefault, grid.z_load)
    fault_ten = faulted_grid(grid, scenario.fault_depth)
    zeq_fault = equivalent_impedance(fleet, fault_ten, grid.z_load)

    n_steps = round(scenario.t_end / scenario.dt)
    k_fault = round(scenario.t_fault / scenario.dt)
    k_clear = round(scenario.t_clear / scenario.dt) if scenario.t_clear is not None else None

    state = find_equilibrium(fleet, grid.prefault, zeq_pre, opts)
    theta_cg_ref = [st.theta_cg for st in state.inverters]

    records = [_record_from(state, theta_cg_ref)]
    solver_failure_t: float | None = None

    for k in range(1, n_steps + 1):
        on_fault = k >= k_fault and (k_clear is None or k < k_clear)
        grid_now = fault_ten if on_fault else grid.prefault
        zeq_now = zeq_fault if on_fault else zeq_pre
        theta_used = [st.theta_cg for st in state.inverters]
        try:
            state = step(state, fleet, grid_now, zeq_now, scenario.dt, opts, theta_cg_ref)
        except (NonConvergence, ZeroVoltage):
            t_k = k * scenario.dt
            solver_failure_t = t_k
            last = records[-1]
            n = len(fleet)
            records.append(
                TrajectoryRecord(
                    t=t_k,
                    v_pcc_mag=last.v_pcc_mag,
                    v_pcc_angle=last.v_pcc_angle,
                    theta_cg=last.theta_cg,
                    i_mag=(0.0,) * n,
                    i_q=(0.0,) * n,
                    v_gq=(0.0,) * n,
                    limited=(False,) * n,
                    tripped=(True,) * n,
                )
            )
            break
        records.append(_record_from(state, theta_used))

    return Trajectory(tuple(records), scenario, fleet, solver_failure_t)

"""Transient angular-stability simulator for parallel grid-following inverters.

A fleet of current-source inverters shares a single point of common coupling
(PCC) behind a Thevenin-equivalent feeder. The package solves the implicit
PCC voltage equation, steps per-inverter PLL dynamics through pre-fault,
fault-on and post-fault intervals, applies current limiting and trip logic,
and estimates critical clearing times by bisection.
"""

from gflswing.phasor import (
    DqPair,
    Impedance,
    Phasor,
    dq_components,
    from_polar,
    line_impedance,
    parallel,
)
from gflswing.network import (
    EquivalentImpedanceSet,
    GridModel,
    TheveninEquivalent,
    equivalent_impedance,
    faulted_grid,
    thevenin_reduce,
)
from gflswing.pcc import (
    InjectionState,
    InverterOperatingPoint,
    NonConvergence,
    PccSolution,
    ZeroVoltage,
    inverter_terminal_voltage,
    operating_points,
    q_components,
    solve_vpcc,
    total_injected_current,
)
from gflswing.dynamics import (
    FaultScenario,
    InitializationFailure,
    InverterConfig,
    InverterState,
    PllState,
    SimState,
    SolverOptions,
    Trajectory,
    TrajectoryRecord,
    find_equilibrium,
    limited_current,
    pll_step,
    simulate,
    step,
)
from gflswing.stability import (
    BracketInvalid,
    CctResult,
    EmptyOrder,
    FleetComparison,
    StabilityVerdict,
    classify,
    compare_uniform,
    find_cct,
    sync_loss_order,
)

__version__ = "0.1.0"

__all__ = [
    "DqPair",
    "Impedance",
    "Phasor",
    "dq_components",
    "from_polar",
    "line_impedance",
    "parallel",
    "EquivalentImpedanceSet",
    "GridModel",
    "TheveninEquivalent",
    "equivalent_impedance",
    "faulted_grid",
    "thevenin_reduce",
    "InjectionState",
    "InverterOperatingPoint",
    "NonConvergence",
    "PccSolution",
    "ZeroVoltage",
    "inverter_terminal_voltage",
    "operating_points",
    "q_components",
    "solve_vpcc",
    "total_injected_current",
    "FaultScenario",
    "InitializationFailure",
    "InverterConfig",
    "InverterState",
    "PllState",
    "SimState",
    "SolverOptions",
    "Trajectory",
    "TrajectoryRecord",
    "find_equilibrium",
    "limited_current",
    "pll_step",
    "simulate",
    "step",
    "BracketInvalid",
    "CctResult",
    "EmptyOrder",
    "FleetComparison",
    "StabilityVerdict",
    "classify",
    "compare_uniform",
    "find_cct",
    "sync_loss_order",
    "__version__",
]

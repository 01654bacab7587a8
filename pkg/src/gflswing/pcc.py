"""Point-of-common-coupling voltage solver and q-axis voltage components.

The PCC voltage obeys an implicit superposition: every inverter injects a
current of magnitude s_i / |v_pcc| at its injection angle through its
equivalent impedance, on top of the Thevenin source voltage. The solver
treats the current-magnitude denominator and the solved voltage as the same
quantity (zero measurement lag); an explicit one-step lag is available
through fixed-current injections, see dynamics.SolverOptions.lag_mode.

Injections enter with the literal magnitude form |s| / |v| times a unit
phasor at the injection angle. This is not the conjugate constant-power
injection of conventional load flow (S* / V*); the two coincide only for
angle-aligned cases, and the conjugate variant is intentionally not
implemented.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from gflswing.network import EquivalentImpedanceSet, TheveninEquivalent
from gflswing.phasor import Impedance, Phasor

if TYPE_CHECKING:
    from gflswing.dynamics import InverterConfig

__all__ = [
    "InjectionState",
    "PccSolution",
    "InverterOperatingPoint",
    "NonConvergence",
    "ZeroVoltage",
    "solve_vpcc",
    "inverter_terminal_voltage",
    "q_components",
    "operating_points",
    "total_injected_current",
]

# |v| below this fraction of |v_th| aborts the iteration as a collapsed node.
ZERO_VOLTAGE_FRACTION = 1e-6


class NonConvergence(RuntimeError):
    """Residual stayed above tolerance after the iteration budget.

    Signals an operating point with no reachable voltage equilibrium, e.g. a
    fault so deep the constant-power injections cannot be supported.
    """

    def __init__(self, residual: float, iterations: int) -> None:
        super().__init__(
            f"pcc voltage iteration did not converge: residual {residual:.3e} V "
            f"after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


class ZeroVoltage(RuntimeError):
    """The iterated voltage magnitude collapsed toward zero."""


@dataclass(frozen=True, slots=True)
class InjectionState:
    """Per-inverter apparent power magnitudes and injection angles.

    ``i_fixed`` optionally pins individual inverters to a constant current in
    amperes (used for current-limited units); those entries ignore ``s`` in
    the voltage solve.
    """

    s: tuple[float, ...]
    theta_cg: tuple[float, ...]
    i_fixed: tuple[float | None, ...] | None = None

    def __post_init__(self) -> None:
        if len(self.s) != len(self.theta_cg):
            raise ValueError("s and theta_cg must have the same length")
        if self.i_fixed is not None and len(self.i_fixed) != len(self.s):
            raise ValueError("i_fixed must match the fleet size")
        for k, sk in enumerate(self.s):
            if sk < 0.0:
                raise ValueError(f"apparent power s[{k}] must be non-negative, got {sk}")

    def __len__(self) -> int:
        return len(self.s)


@dataclass(frozen=True, slots=True)
class PccSolution:
    v_pcc: Phasor
    residual: float
    iterations: int


@dataclass(frozen=True, slots=True)
class InverterOperatingPoint:
    """Per-inverter snapshot at a solved PCC voltage.

    i_mag is the commanded current magnitude before any limiting; v_gq is
    the generation voltage's q component in the frame the caller anchored.
    """

    v_g: Phasor
    v_gq: float
    i_mag: float


def _aggregate(
    zeq: EquivalentImpedanceSet, inj: InjectionState
) -> tuple[complex, complex]:
    """Split the injection sum into a 1/|v| part C and a constant part D.

    rhs(v) = v_th + D + C / |v|, with C collecting constant-power inverters
    (z_eq * s * e^{j theta}) and D the fixed-current ones (z_eq * i * e^{j theta}).
    """
    c = 0.0 + 0.0j
    d = 0.0 + 0.0j
    fixed = inj.i_fixed
    for k in range(len(inj)):
        th = inj.theta_cg[k]
        unit = complex(math.cos(th), math.sin(th))
        z = zeq.z_eq[k].to_complex()
        if fixed is not None and fixed[k] is not None:
            d += z * fixed[k] * unit
        else:
            c += z * inj.s[k] * unit
    return c, d


def solve_vpcc(
    grid: TheveninEquivalent,
    zeq: EquivalentImpedanceSet,
    inj: InjectionState,
    tol: float,
    max_iter: int,
    damping: float = 0.7,
) -> PccSolution:
    """Solve v = v_th + sum_i z_eq_i (s_i / |v|) e^{j theta_i} to a fixed point.

    Damped fixed-point iteration seeded at v_th, falling back to a damped
    2-D Newton step on the closed-form residual once the plain iteration
    stalls. Raises NonConvergence if the residual stays above tol within
    max_iter total iterations and ZeroVoltage if |v| collapses below
    ZERO_VOLTAGE_FRACTION * |v_th|.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    if len(zeq) != len(inj):
        raise ValueError("impedance set and injection state sizes differ")

    v_th = grid.v_th.to_complex()
    v_th_mag = abs(v_th)
    c, d = _aggregate(zeq, inj)

    if v_th_mag == 0.0 and abs(c) > 0.0:
        raise ValueError(
            "zero source voltage is only solvable with zero constant-power injections"
        )

    if c == 0.0:
        # No constant-power injections: the equation is explicit.
        v = v_th + d
        if v_th_mag > 0.0 and abs(v) < ZERO_VOLTAGE_FRACTION * v_th_mag:
            raise ZeroVoltage(
                f"explicit solution magnitude {abs(v):.3e} V is numerically zero"
            )
        return PccSolution(Phasor.from_complex(v), 0.0, 1)

    w = v_th + d
    floor = ZERO_VOLTAGE_FRACTION * v_th_mag
    v = v_th
    iterations = 0
    residual = math.inf

    fp_budget = min(max_iter, 40)
    while iterations < fp_budget:
        iterations += 1
        r = abs(v)
        if r < floor:
            raise ZeroVoltage(
                f"voltage magnitude {r:.3e} V collapsed below {floor:.3e} V"
            )
        rhs = w + c / r
        residual = abs(v - rhs)
        if residual <= tol:
            return PccSolution(Phasor.from_complex(v), residual, iterations)
        v = (1.0 - damping) * v + damping * rhs

    # Newton fallback on F(v) = v - w - C/|v| with its closed-form Jacobian.
    while iterations < max_iter:
        iterations += 1
        x, y = v.real, v.imag
        r = abs(v)
        if r < floor:
            raise ZeroVoltage(
                f"voltage magnitude {r:.3e} V collapsed below {floor:.3e} V"
            )
        f = v - w - c / r
        residual = abs(f)
        if residual <= tol:
            return PccSolution(Phasor.from_complex(v), residual, iterations)
        r3 = r * r * r
        j11 = 1.0 + c.real * x / r3
        j12 = c.real * y / r3
        j21 = c.imag * x / r3
        j22 = 1.0 + c.imag * y / r3
        det = j11 * j22 - j12 * j21
        if abs(det) < 1e-300:
            break
        dx = (f.real * j22 - f.imag * j12) / det
        dy = (f.imag * j11 - f.real * j21) / det
        step = complex(dx, dy)
        # Halve the step while it would increase the residual.
        alpha = 1.0
        for _ in range(6):
            v_new = v - alpha * step
            r_new = abs(v_new)
            if r_new >= floor and abs(v_new - w - c / r_new) < residual:
                break
            alpha *= 0.5
        else:
            v_new = v - alpha * step
        v = v_new

    raise NonConvergence(residual, iterations)


def inverter_terminal_voltage(
    p: int,
    v_pcc: Phasor,
    cfg: "InverterConfig",
    inj: InjectionState,
) -> Phasor:
    """Generation voltage behind the inverter's line plus virtual impedance.

    v_g = v_pcc + i_p * (z_line + z_virtual) * e^{j theta_cg_p} with the
    injected current i_p = s_p / |v_pcc| (or the pinned fixed current).
    """
    v = v_pcc.to_complex()
    v_mag = abs(v)
    if v_mag == 0.0:
        raise ValueError("terminal voltage undefined for |v_pcc| = 0")
    if inj.i_fixed is not None and inj.i_fixed[p] is not None:
        i_p = inj.i_fixed[p]
    else:
        i_p = inj.s[p] / v_mag
    th = inj.theta_cg[p]
    z = cfg.z_total().to_complex()
    return Phasor.from_complex(v + i_p * z * complex(math.cos(th), math.sin(th)))


def q_components(
    grid: TheveninEquivalent,
    v_pcc: Phasor,
    zeq: EquivalentImpedanceSet,
    inj: InjectionState,
    z_series: Sequence[Impedance],
    ref_angle: float,
) -> tuple[float, tuple[float, ...]]:
    """Termwise q-axis components of the PCC and per-inverter generation voltages.

    In the rotating frame anchored at ref_angle:

        v_pcc_q = |v_th| sin(ang(v_th) - ref)
                  + sum_i |z_eq_i| i_i sin(theta_i + gamma_i - ref)
        v_gq[p] = v_pcc_q + |z_series_p| i_p sin(theta_p + psi_p - ref)

    with i_i = s_i / |v_pcc| (or the pinned fixed current) and psi_p the
    angle of the series impedance. The termwise sums equal the q projection
    of the corresponding complex sums exactly, which the test suite checks.
    """
    v_mag = v_pcc.magnitude()
    if v_mag <= 0.0:
        raise ValueError("q_components requires |v_pcc| > 0")
    if len(z_series) != len(inj):
        raise ValueError("z_series must match the fleet size")

    v_th = grid.v_th
    q = v_th.magnitude() * math.sin(math.atan2(v_th.im, v_th.re) - ref_angle)
    fixed = inj.i_fixed
    currents = []
    for k in range(len(inj)):
        if fixed is not None and fixed[k] is not None:
            i_k = fixed[k]
        else:
            i_k = inj.s[k] / v_mag
        currents.append(i_k)
        q += zeq.z_eq[k].magnitude() * i_k * math.sin(
            inj.theta_cg[k] + zeq.gamma[k] - ref_angle
        )

    v_gq = tuple(
        q
        + z_series[p].magnitude()
        * currents[p]
        * math.sin(inj.theta_cg[p] + z_series[p].angle() - ref_angle)
        for p in range(len(inj))
    )
    return q, v_gq


def operating_points(
    grid: TheveninEquivalent,
    v_pcc: Phasor,
    zeq: EquivalentImpedanceSet,
    inj: InjectionState,
    fleet: Sequence["InverterConfig"],
    ref_angles: Sequence[float],
) -> tuple[InverterOperatingPoint, ...]:
    """Per-inverter generation voltages, q components and current commands.

    ref_angles anchors each unit's own rotating frame (its tracked angle);
    the q components therefore match what each synchronization loop sees.
    """
    if len(fleet) != len(inj) or len(ref_angles) != len(inj):
        raise ValueError("fleet, injections and ref_angles sizes differ")
    v_mag = v_pcc.magnitude()
    if v_mag <= 0.0:
        raise ValueError("operating_points requires |v_pcc| > 0")
    z_series = [cfg.z_total() for cfg in fleet]
    fixed = inj.i_fixed
    points = []
    for p in range(len(fleet)):
        v_g = inverter_terminal_voltage(p, v_pcc, fleet[p], inj)
        _, v_gq_all = q_components(grid, v_pcc, zeq, inj, z_series, ref_angles[p])
        if fixed is not None and fixed[p] is not None:
            i_p = fixed[p]
        else:
            i_p = inj.s[p] / v_mag
        points.append(InverterOperatingPoint(v_g, v_gq_all[p], i_p))
    return tuple(points)


def total_injected_current(inj: InjectionState, v_pcc_mag: float) -> float:
    """Aggregate current magnitude bound sum(|s_i|) / |v_pcc|."""
    if v_pcc_mag <= 0.0:
        raise ValueError(f"v_pcc_mag must be positive, got {v_pcc_mag}")
    return math.fsum(inj.s) / v_pcc_mag

"""Quasi-1D convergent-divergent nozzle solved by repeated linearisation.

Each outer iteration builds a linear system ``A x = b`` around the current
flow field and solves the residual form ``A dx = db = b - A x`` for a
correction ``dx`` that is added to the state. The correction can be passed
through an arbitrary transform before it is applied, which is how the noise
and cutoff experiments hook into the loop.

Discretisation: staggered grid on ``x in [0, 1]``. Pressure lives at nodes
``x_j = j / s`` (``j = 0..s``, the last node being the fixed outlet pressure),
velocity at the faces ``x_{j+1/2}``. Convection is first-order upwind, the
inlet is a stagnation-pressure condition, the outlet a static pressure.
The unknown vector is ``[u_0..u_{s-1}, p_0..p_{s-1}]`` so every system is
``2s x 2s``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class InvalidCaseError(ValueError):
    """Raised when a nozzle case violates its invariants."""


class AssemblyError(ValueError):
    """Raised when a flow state cannot be linearised."""


class SolverError(np.linalg.LinAlgError):
    """Raised when a linear system is singular or too ill-conditioned."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


REGIMES = ("incompressible", "compressible")
SOLVERS = ("SIMPLE", "coupled")

# Conditioning beyond this is treated as singular by solve_linear.
MAX_CONDITION = 1e14


def nozzle_area(x, inlet: float = 1.0, throat: float = 0.6):
    """Symmetric convergent-divergent area profile on ``[0, 1]``."""
    x = np.asarray(x, dtype=float)
    return inlet - (inlet - throat) * np.sin(np.pi * x)


@dataclass(frozen=True)
class NozzleCase:
    """Geometry, fluid model and solver settings for one nozzle run.

    ``node_area`` holds the ``s + 1`` node cross-sections (the last one is the
    outlet node), ``face_area`` the ``s`` velocity-face cross-sections.
    """

    stations: int
    node_area: np.ndarray
    face_area: np.ndarray
    regime: str = "incompressible"
    solver: str = "SIMPLE"
    eps_tol: float = 1e-9
    max_iterations: int = 20000
    relax_momentum: float = 0.7
    relax_pressure: float = 0.3
    inlet_stagnation_pressure: float = 1.0
    outlet_pressure: float = 0.95
    density: float = 1.0
    gas_rt: float = 1.0

    def __post_init__(self):
        s = self.stations
        if not isinstance(s, (int, np.integer)) or s < 2:
            raise InvalidCaseError(f"stations must be an integer >= 2, got {s!r}")
        if self.regime not in REGIMES:
            raise InvalidCaseError(f"unknown regime {self.regime!r}")
        if self.solver not in SOLVERS:
            raise InvalidCaseError(f"unknown solver {self.solver!r}")
        node = np.asarray(self.node_area, dtype=float)
        face = np.asarray(self.face_area, dtype=float)
        if node.shape != (s + 1,) or face.shape != (s,):
            raise InvalidCaseError("area arrays do not match the station count")
        if not (np.all(np.isfinite(node)) and np.all(node > 0) and np.all(face > 0)):
            raise InvalidCaseError("area profile must be strictly positive")
        _check_throat(node)
        if not self.eps_tol > 0:
            raise InvalidCaseError("eps_tol must be positive")
        if self.max_iterations < 1:
            raise InvalidCaseError("max_iterations must be at least 1")
        for name in ("relax_momentum", "relax_pressure"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidCaseError(f"{name} must lie in (0, 1]")
        if not 0 < self.outlet_pressure < self.inlet_stagnation_pressure:
            raise InvalidCaseError("outlet pressure must lie below the inlet stagnation pressure")
        object.__setattr__(self, "node_area", node)
        object.__setattr__(self, "face_area", face)

    @property
    def size(self) -> int:
        return 2 * self.stations

    @property
    def compressible(self) -> bool:
        return self.regime == "compressible"

    def density_of(self, p):
        """Equation of state: constant, or isothermal perfect gas."""
        if self.compressible:
            return np.asarray(p, dtype=float) / self.gas_rt
        return np.full(np.shape(p), self.density, dtype=float)

    def density_derivative(self, p):
        if self.compressible:
            return np.full(np.shape(p), 1.0 / self.gas_rt)
        return np.zeros(np.shape(p))


def _check_throat(area: np.ndarray) -> None:
    k = int(np.argmin(area))
    # ties on a discrete throat are fine, but the minimum must be interior
    # and the profile must converge then diverge
    if not (area.min() < area[0] and area.min() < area[-1]):
        raise InvalidCaseError("area profile needs an interior throat")
    if np.any(np.diff(area[: k + 1]) > 0) or np.any(np.diff(area[k:]) < 0):
        raise InvalidCaseError("area profile must be convergent-divergent")


def build_case(stations: int, regime: str = "incompressible", solver: str = "SIMPLE",
               **overrides) -> NozzleCase:
    """Create a nozzle case with the default symmetric area profile.

    Args:
        stations: number of stations ``s``; the linear systems are ``2s x 2s``.
        regime: ``"incompressible"`` or ``"compressible"``.
        solver: ``"SIMPLE"`` or ``"coupled"``.
        **overrides: any other :class:`NozzleCase` field.

    Raises:
        InvalidCaseError: for ``stations < 2`` or inconsistent settings.
    """
    if not isinstance(stations, (int, np.integer)) or isinstance(stations, bool) or stations < 2:
        raise InvalidCaseError(f"stations must be an integer >= 2, got {stations!r}")
    throat = overrides.pop("throat_area", 0.6)
    nodes = np.linspace(0.0, 1.0, stations + 1)
    faces = (np.arange(stations) + 0.5) / stations
    return NozzleCase(
        stations=int(stations),
        node_area=nozzle_area(nodes, throat=throat),
        face_area=nozzle_area(faces, throat=throat),
        regime=regime,
        solver=solver,
        **overrides,
    )


CONFIG_KEYS = {"stations", "regime", "solver", "eps_tol", "max_iterations", "relaxation",
               "throat_area", "inlet_stagnation_pressure", "outlet_pressure", "density", "gas_rt"}


def case_from_config(config: dict) -> NozzleCase:
    """Build a case from the JSON config mapping.

    ``relaxation`` may be a number (momentum factor) or a mapping with
    ``momentum`` / ``pressure`` keys.
    """
    unknown = set(config) - CONFIG_KEYS
    if unknown:
        raise InvalidCaseError(f"unknown case keys: {sorted(unknown)}")
    if "stations" not in config:
        raise InvalidCaseError("case config needs 'stations'")
    kwargs = {k: v for k, v in config.items() if k not in ("stations", "relaxation")}
    relaxation = config.get("relaxation")
    if isinstance(relaxation, dict):
        if "momentum" in relaxation:
            kwargs["relax_momentum"] = float(relaxation["momentum"])
        if "pressure" in relaxation:
            kwargs["relax_pressure"] = float(relaxation["pressure"])
    elif relaxation is not None:
        kwargs["relax_momentum"] = float(relaxation)
    try:
        return build_case(config["stations"], **kwargs)
    except TypeError as exc:
        raise InvalidCaseError(str(exc)) from None


def load_case(path) -> NozzleCase:
    with open(path) as fh:
        return case_from_config(json.load(fh))


@dataclass(frozen=True)
class FlowState:
    velocity: np.ndarray
    pressure: np.ndarray
    density: np.ndarray
    iteration: int = 0

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.velocity, self.pressure])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.velocity)) and np.all(np.isfinite(self.pressure))
                    and np.all(np.isfinite(self.density)))


def initial_state(case: NozzleCase) -> FlowState:
    """Uniform initial guess: velocity, pressure and density all one."""
    s = case.stations
    return FlowState(np.ones(s), np.ones(s), np.ones(s), 0)


def advance(case: NozzleCase, state: FlowState, correction: np.ndarray) -> FlowState:
    """Apply ``x <- x + dx``; density follows pressure when compressible."""
    s = case.stations
    u = state.velocity + correction[:s]
    p = state.pressure + correction[s:]
    rho = case.density_of(p) if case.compressible else state.density
    return FlowState(u, p, rho, state.iteration + 1)


@dataclass(frozen=True)
class LinearSystem:
    matrix: np.ndarray
    rhs: np.ndarray
    b: np.ndarray

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.rhs))


@dataclass(frozen=True)
class CorrectionVector:
    values: np.ndarray

    @property
    def normalised(self) -> np.ndarray:
        norm = np.linalg.norm(self.values)
        if norm == 0:
            return self.values.copy()
        return self.values / norm


def _mass_fluxes(case, u, rho):
    return rho * case.face_area * u


def residual(case: NozzleCase, state: FlowState) -> np.ndarray:
    """Nonlinear equation errors ``[momentum; continuity]`` at ``state``."""
    s = case.stations
    u, p, rho = state.velocity, state.pressure, state.density
    a, A = case.face_area, case.node_area
    p_ext = np.append(p, case.outlet_pressure)
    m = _mass_fluxes(case, u, rho)

    u_in = m[0] / (rho[0] * A[0])
    f_w = np.empty(s)
    f_w[0] = m[0]
    f_w[1:] = 0.5 * (m[:-1] + m[1:])
    f_e = np.empty(s)
    f_e[:-1] = 0.5 * (m[:-1] + m[1:])
    f_e[-1] = m[-1]
    u_w = np.concatenate([[u_in], u[:-1]])
    mom = f_e * u - f_w * u_w + a * (p_ext[1:] - p_ext[:-1])

    cont = np.empty(s)
    cont[0] = p[0] + 0.5 * rho[0] * u_in ** 2 - case.inlet_stagnation_pressure
    cont[1:] = m[1:] - m[:-1]
    return np.concatenate([mom, cont])


def _blocks(case: NozzleCase, state: FlowState):
    """Momentum (Picard, relaxed), pressure-gradient and continuity blocks."""
    s = case.stations
    u, p, rho = state.velocity, state.pressure, state.density
    a, A = case.face_area, case.node_area
    m = _mass_fluxes(case, u, rho)

    f_w = np.empty(s)
    f_w[0] = m[0]
    f_w[1:] = 0.5 * (m[:-1] + m[1:])
    f_e = np.empty(s)
    f_e[:-1] = 0.5 * (m[:-1] + m[1:])
    f_e[-1] = m[-1]

    # the inlet convective inflow is lagged into the residual
    M = np.diag(f_e) - np.diag(f_w[1:], -1)
    M = M + np.diag((1.0 - case.relax_momentum) / case.relax_momentum * np.diag(M))

    G = -np.diag(a) + np.diag(a[:-1], 1)

    drho = case.density_derivative(p)
    ratio = a[0] / A[0]
    B = np.diag(rho * a) - np.diag(rho[:-1] * a[:-1], -1)
    B[0, :] = 0.0
    B[0, 0] = rho[0] * ratio ** 2 * u[0]
    C = np.diag(drho * a * u) - np.diag(drho[:-1] * a[:-1] * u[:-1], -1)
    C[0, :] = 0.0
    C[0, 0] = 1.0 + 0.5 * drho[0] * (ratio * u[0]) ** 2
    return M, G, B, C


def assemble_system(case: NozzleCase, state: FlowState) -> LinearSystem:
    """Linearise the nozzle equations about ``state``.

    SIMPLE assembles the matrix whose solution reproduces one pressure-
    correction sweep (momentum predictor, pressure-correction equation,
    velocity correction, relaxed pressure update). The coupled solver
    assembles the momentum and continuity blocks into one system.

    Raises:
        AssemblyError: if the state is not finite, density is not positive
            or the flow has reversed.
    """
    if not state.is_finite():
        raise AssemblyError("flow state contains non-finite values")
    if np.any(state.density <= 0):
        raise AssemblyError("density must stay positive")
    if np.any(state.velocity <= 0):
        # upwinding and the inlet condition assume forward flow
        raise AssemblyError("flow reversal: velocity must stay positive")
    M, G, B, C = _blocks(case, state)
    if case.solver == "SIMPLE":
        d_inv = 1.0 / np.diag(M)
        ap = case.relax_pressure
        top = np.hstack([M, (M * d_inv) @ G / ap])
        bottom = np.hstack([B, C / ap])
    else:
        top = np.hstack([M, G])
        bottom = np.hstack([B, C])
    matrix = np.vstack([top, bottom])
    rhs = -residual(case, state)
    b = rhs + matrix @ state.vector
    return LinearSystem(matrix, rhs, b)


def solve_linear(system: LinearSystem) -> CorrectionVector:
    """Classical stand-in for the quantum linear solver.

    Raises:
        SolverError: if the matrix is singular or its condition number
            exceeds ``MAX_CONDITION``.
    """
    A = system.matrix
    cond = float(np.linalg.cond(A))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SolverError("linear system is singular or ill-conditioned", cond)
    dx = np.linalg.solve(A, system.rhs)
    return CorrectionVector(dx)


Corrector = Callable[[CorrectionVector], CorrectionVector]


def identity_corrector(v: CorrectionVector) -> CorrectionVector:
    return v


@dataclass
class ConvergenceReport:
    residual_history: list = field(default_factory=list)
    correction_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    final_state: Optional[FlowState] = None
    final_residual: float = math.nan

    @property
    def max_correction(self) -> float:
        return self.correction_history[-1] if self.correction_history else math.nan

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "residual_l2", "max_correction"])
            for i, (r, c) in enumerate(zip(self.residual_history, self.correction_history)):
                writer.writerow([i, repr(float(r)), repr(float(c))])


def block_corrections(case: NozzleCase, old: FlowState, new: FlowState) -> float:
    """Largest absolute change over the velocity, pressure and density blocks."""
    return float(max(np.max(np.abs(new.velocity - old.velocity)),
                     np.max(np.abs(new.pressure - old.pressure)),
                     np.max(np.abs(new.density - old.density))))


def run_outer_loop(case: NozzleCase, corrector: Corrector = identity_corrector,
                   state: Optional[FlowState] = None,
                   max_iterations: Optional[int] = None,
                   stop: Optional[Callable[[ConvergenceReport], bool]] = None) -> ConvergenceReport:
    """Iterate assemble -> solve -> correct -> apply until converged.

    The run stops once the largest correction over the velocity, pressure and
    density blocks and the residual norm are both at or below ``eps_tol``.
    Hitting the iteration cap, or a state that can no longer be assembled,
    ends the run with ``converged=False``.

    Args:
        case: the nozzle case.
        corrector: transform applied to each correction before it is added.
        state: starting state, the uniform initial guess by default.
        max_iterations: overrides ``case.max_iterations``.
        stop: optional extra stopping predicate evaluated after each step.
    """
    state = initial_state(case) if state is None else state
    cap = case.max_iterations if max_iterations is None else max_iterations
    report = ConvergenceReport()
    for _ in range(cap):
        try:
            system = assemble_system(case, state)
            dx = corrector(solve_linear(system)).values
        except (AssemblyError, SolverError):
            report.diverged = True
            break
        new = advance(case, state, dx)
        report.residual_history.append(system.residual_norm)
        report.correction_history.append(block_corrections(case, state, new))
        report.iterations += 1
        state = new
        if not state.is_finite():
            report.diverged = True
            break
        if report.correction_history[-1] <= case.eps_tol and system.residual_norm <= case.eps_tol:
            report.converged = True
            break
        if stop is not None and stop(report):
            break
    report.final_state = state
    if state.is_finite() and np.all(state.density > 0):
        report.final_residual = float(np.linalg.norm(residual(case, state)))
    return report


def subnormalisation_kappa(A) -> float:
    """Subnormalisation ``2 / (3 ||A||_max sigma_min)`` of the inversion circuit.

    ``||A||_max`` is the largest absolute entry, the normalisation used by the
    block encoding.

    Raises:
        np.linalg.LinAlgError: if ``A`` is singular.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or not np.any(A):
        raise ValueError("A must be a nonzero matrix")
    sv = np.linalg.svd(A, compute_uv=False)
    sigma_min = sv.min()
    if sigma_min <= max(A.shape) * np.finfo(float).eps * sv.max():
        raise np.linalg.LinAlgError("matrix is singular")
    return 2.0 / (3.0 * np.max(np.abs(A)) * sigma_min)

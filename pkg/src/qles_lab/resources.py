"""Fault-tolerant resource estimates for naive sampling and amplitude estimation.

The surface-code model follows the usual recipe: pick the smallest odd code
distance whose logical failure rate keeps the whole computation inside the
logical-error budget, lay out the logical qubits in a fast block, add enough
magic-state factories to supply one state per logical cycle, and charge
``d`` code cycles per consumed magic state.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources as ilr
from typing import Iterable, Optional

from .amplitude import QueryModelRangeWarning, model_query_complexity

TABLE_COLUMNS = [
    "amplitude_estimation", "accuracy", "stations", "phase_factors", "kappa",
    "logical_qubits", "physical_qubits", "t_gates", "toffoli_gates", "oracle_time_s",
    "oracle_calls", "total_time_days", "percentage_of_amplitudes",
]
FIXTURES = ("nozzle", "toeplitz")
SECONDS_PER_DAY = 86_400.0


@dataclass(frozen=True)
class FactoryDescriptor:
    """Magic-state factory footprint and its output period in code cycles per state."""

    name: str = "(15-to-1)^4_{9,3,3} x (20-to-4)_{15,7,9}"
    qubits: int = 18_000
    cycles_per_state: float = 20.0


@dataclass(frozen=True)
class ErrorCorrectionParams:
    p: float = 1e-4
    p_thr: float = 0.01
    prefactor: float = 0.1
    p_fail_log: float = 0.009
    p_fail_msd: float = 0.001
    t_cycle: float = 1e-6
    toffoli_magic_factor: float = 2.0
    factory: FactoryDescriptor = field(default_factory=FactoryDescriptor)
    max_distance: int = 99

    def __post_init__(self):
        if not 0 < self.p < self.p_thr:
            raise ValueError("need 0 < p < p_thr")
        if self.p_fail_log <= 0 or self.p_fail_msd <= 0:
            raise ValueError("failure budgets must be positive")
        if self.t_cycle <= 0:
            raise ValueError("t_cycle must be positive")

    @property
    def total_failure(self) -> float:
        return self.p_fail_log + self.p_fail_msd


@dataclass(frozen=True)
class BlockEncodingSpec:
    """Block-encoding costs per application.

    ``toffoli_per_phase`` and ``t_per_phase`` split the non-Clifford cost
    ``M_C`` of one application; rotation synthesis is costed separately.
    """

    name: str
    n: int
    n_logical: int
    toffoli_per_phase: float
    t_per_phase: float
    kappa: float
    qubit_cost: Optional[int] = None

    def __post_init__(self):
        if self.n < 1 or self.n_logical < 1:
            raise ValueError("qubit counts must be positive")
        if self.toffoli_per_phase < 0 or self.t_per_phase < 0:
            raise ValueError("gate costs must be non-negative")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")

    @property
    def non_clifford_cost(self) -> float:
        return self.toffoli_per_phase + self.t_per_phase

    @property
    def qubits(self) -> int:
        return self.n_logical if self.qubit_cost is None else self.qubit_cost


@dataclass(frozen=True)
class InversionSpec:
    d_poly: int
    eps_inv: float
    poly_fraction: float = 0.9
    rotation_fraction: float = 0.1

    def __post_init__(self):
        if self.d_poly < 1:
            raise ValueError("d_poly must be at least 1")
        if not 0 < self.eps_inv < 1:
            raise ValueError("eps_inv must lie in (0, 1)")
        if not math.isclose(self.poly_fraction + self.rotation_fraction, 1.0):
            raise ValueError("accuracy fractions must sum to 1")


def rotation_t_cost(eps_rot: float, c1: float = 3.02, c0: float = 1.77) -> int:
    """T gates to synthesise one single-qubit rotation to accuracy ``eps_rot``."""
    if not 0 < eps_rot < 1:
        raise ValueError("eps_rot must lie in (0, 1)")
    return math.ceil(c1 * math.log2(1.0 / eps_rot) + c0)


@dataclass(frozen=True)
class GateCounts:
    T: float
    Toffoli: float
    rotations: int
    projector_toffoli: float = 0.0

    @property
    def magic_toffoli(self) -> float:
        return self.Toffoli + self.projector_toffoli


def total_gate_counts(be: BlockEncodingSpec, inv: InversionSpec, ae: bool) -> GateCounts:
    """T and Toffoli totals for one naive inversion circuit or one AE query.

    The AE query doubles the block-encoding applications, needs ``2n``
    Toffolis for the projector (kept in ``projector_toffoli`` so the Toffoli
    column doubles exactly) and ``4 d + 2`` rotation units, controlled
    rotations counting twice.
    """
    d = inv.d_poly
    if ae:
        applications, rotations, projector = 2 * d, 4 * d + 2, 2 * be.n
    else:
        applications, rotations, projector = d, d, 0
    eps_rot = inv.rotation_fraction * inv.eps_inv / rotations
    t = applications * be.t_per_phase + rotations * rotation_t_cost(eps_rot)
    return GateCounts(T=t, Toffoli=applications * be.toffoli_per_phase,
                      rotations=rotations, projector_toffoli=projector)


def _logical_failure(params: ErrorCorrectionParams, d: int) -> float:
    return params.prefactor * (params.p / params.p_thr) ** ((d + 1) / 2)


def code_distance(params: ErrorCorrectionParams, n_t: float, n_qubits: int) -> int:
    """Smallest odd distance meeting the per-operation logical failure budget."""
    if n_t < 1 or n_qubits < 1:
        raise ValueError("N_T and n_qubits must be at least 1")
    bound = params.p_fail_log / (n_t * n_qubits)
    for d in range(3, params.max_distance + 1, 2):
        if _logical_failure(params, d) <= bound:
            return d
    raise ValueError(f"no odd code distance up to {params.max_distance} meets the budget")


def factory_count(d_code: int, params: ErrorCorrectionParams) -> int:
    """Factories needed to deliver one magic state every ``d_code`` cycles."""
    return max(1, math.ceil(params.factory.cycles_per_state / d_code - 1e-12))


def physical_qubits(n_logical: int, d_code: int, params: Optional[ErrorCorrectionParams] = None) -> int:
    """Fast-block tiles ``(2 n_L + ceil(sqrt(8 n_L)) + 1)(2 d^2 - 1)`` plus factories.

    Passing ``params=None`` leaves the factories out.
    """
    if n_logical < 1:
        raise ValueError("n_logical must be at least 1")
    tiles = 2 * n_logical + math.ceil(math.sqrt(8 * n_logical)) + 1
    total = tiles * (2 * d_code ** 2 - 1)
    if params is not None:
        total += factory_count(d_code, params) * params.factory.qubits
    return int(total)


def oracle_time(t_count: float, toffoli_count: float, d_code: int,
                params: ErrorCorrectionParams) -> float:
    """Seconds to run one oracle when every magic state takes ``d`` code cycles."""
    if t_count < 0 or toffoli_count < 0:
        raise ValueError("gate counts must be non-negative")
    magic = t_count + params.toffoli_magic_factor * toffoli_count
    return magic * d_code * params.t_cycle


def oracle_calls(eps: float, ae: bool) -> int:
    """Circuit repetitions: ``1/eps^2`` naive samples or the signed AE query model."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if ae:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", QueryModelRangeWarning)
            value = model_query_complexity(eps, signed=True)
    else:
        value = 1.0 / eps ** 2
    # absorb float noise such as 1/1e-6 = 999999.9999999999
    return math.ceil(value * (1 - 1e-12))


def percentage_of_amplitudes(t_naive_total: float, t_ae_total: float, n_amplitudes: int) -> float:
    """Share of amplitudes AE can estimate in the time naive sampling takes."""
    if t_naive_total <= 0 or t_ae_total <= 0 or n_amplitudes < 1:
        raise ValueError("times and amplitude count must be positive")
    return min(100.0, 100.0 * math.floor(t_naive_total / t_ae_total) / n_amplitudes)


@dataclass
class ResourceRow:
    amplitude_estimation: bool
    accuracy: float
    stations: int
    phase_factors: float
    kappa: float
    logical_qubits: int
    physical_qubits: float
    t_gates: float
    toffoli_gates: float
    d_code: int
    oracle_time_s: float
    oracle_calls: float
    total_time_days: float = 0.0
    percentage_of_amplitudes: Optional[float] = None
    n_amplitudes: int = 0

    def __post_init__(self):
        self.total_time_days = self.oracle_calls * self.oracle_time_s / SECONDS_PER_DAY

    @property
    def total_time_s(self) -> float:
        return self.oracle_calls * self.oracle_time_s

    def csv_row(self) -> list:
        pct = self.percentage_of_amplitudes
        return [str(self.amplitude_estimation), f"{self.accuracy:g}", self.stations,
                f"{self.phase_factors:g}", f"{self.kappa:g}", self.logical_qubits,
                f"{self.physical_qubits:.6g}", f"{self.t_gates:.6g}", f"{self.toffoli_gates:.6g}",
                f"{self.oracle_time_s:.6g}", f"{self.oracle_calls:.6g}",
                f"{self.total_time_days:.6g}", "-" if pct is None else f"{round(pct, 2):g}"]


def load_fixture(name: str) -> list[dict]:
    """Transcribed table rows shipped with the package (``nozzle`` or ``toeplitz``)."""
    if name not in FIXTURES:
        raise ValueError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    text = ilr.files("qles_lab").joinpath("data").joinpath(f"{name}.json").read_text()
    return json.loads(text)["rows"]


def load_fixture_file(path) -> list[dict]:
    with open(path) as fh:
        data = json.load(fh)
    return data["rows"] if isinstance(data, dict) else data


def _key(row: dict):
    return (row["stations"], row["accuracy"])


def build_table(fixture: Iterable[dict], params: Optional[ErrorCorrectionParams] = None,
                source: str = "tabulated") -> list[ResourceRow]:
    """Regenerate a resource table from fixture rows.

    Every row gets its code distance from ``N_T = T + f * Toffoli``, AE
    Toffoli counts are twice the matching naive count, and total time and
    the percentage column are recomputed. ``source="tabulated"`` keeps the
    tabulated oracle time, call count and physical qubits; ``"model"``
    recomputes them.
    """
    if source not in ("tabulated", "model"):
        raise ValueError("source must be 'tabulated' or 'model'")
    params = params or ErrorCorrectionParams()
    fixture = list(fixture)
    naive_toffoli = {_key(r): r["toffoli_gates"] for r in fixture if not r["amplitude_estimation"]}

    rows = []
    for r in fixture:
        ae = bool(r["amplitude_estimation"])
        toffoli = 2 * naive_toffoli[_key(r)] if ae and _key(r) in naive_toffoli else r["toffoli_gates"]
        n_t = r["t_gates"] + params.toffoli_magic_factor * toffoli
        d = code_distance(params, n_t, r["logical_qubits"])
        if source == "tabulated":
            phys, t_oracle, calls = r["physical_qubits"], r["oracle_time_s"], r["oracle_calls"]
        else:
            phys = physical_qubits(r["logical_qubits"], d, params)
            t_oracle = oracle_time(r["t_gates"], toffoli, d, params)
            calls = oracle_calls(r["accuracy"], ae)
        rows.append(ResourceRow(ae, r["accuracy"], r["stations"], r["phase_factors"], r["kappa"],
                                r["logical_qubits"], phys, r["t_gates"], toffoli, d, t_oracle,
                                calls, n_amplitudes=int(r.get("n_amplitudes", 2 * r["stations"]))))

    ae_rows = {(row.stations, row.accuracy): row for row in rows if row.amplitude_estimation}
    for row in rows:
        partner = ae_rows.get((row.stations, row.accuracy))
        if not row.amplitude_estimation and partner is not None:
            row.percentage_of_amplitudes = percentage_of_amplitudes(
                row.total_time_s, partner.total_time_s, row.n_amplitudes)
    return rows


def write_table_csv(rows: Iterable[ResourceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for row in rows:
            w.writerow(row.csv_row())

"""Measurement noise and amplitude cutoff applied inside the CFD loop.

A measured correction vector is modelled as the exact correction plus a
zero-mean Gaussian shift per component, followed by the alpha-cutoff that
zeroes every component at or below ``alpha * max|a|``. Sweeping the noise
accuracy and the cutoff through :func:`qles_lab.nozzle.run_outer_loop`
gives the max-error data behind the noise/cutoff scatter plots.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array

from .nozzle import (ConvergenceReport, CorrectionVector, NozzleCase, FlowState,
                     run_outer_loop)

SCALES = ("std", "variance")
REFERENCES = ("absolute", "normalised")
SWEEP_COLUMNS = ["eps", "alpha", "trial", "max_error", "converged", "iterations"]


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement model for one noisy CFD run.

    ``scale="std"`` draws shifts with standard deviation ``eps_meas``;
    ``"variance"`` reads ``eps_meas`` as the variance. ``reference`` selects
    whether the shift is added to the correction itself (``"absolute"``) or
    to its unit-normalised copy, which is then rescaled by the original norm
    (``"normalised"``).
    """

    eps_meas: float = 0.0
    alpha: float = 0.0
    seed: int = 0
    max_iterations: int = 100_000
    scale: str = "std"
    reference: str = "absolute"

    def __post_init__(self):
        if not self.eps_meas >= 0:
            raise ValueError("eps_meas must be non-negative")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if self.scale not in SCALES:
            raise ValueError(f"scale must be one of {SCALES}")
        if self.reference not in REFERENCES:
            raise ValueError(f"reference must be one of {REFERENCES}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    @property
    def sigma(self) -> float:
        return self.eps_meas if self.scale == "std" else float(np.sqrt(self.eps_meas))


def _values(v):
    return v.values if isinstance(v, CorrectionVector) else np.asarray(v, dtype=float)


def _like(v, values):
    return CorrectionVector(values) if isinstance(v, CorrectionVector) else values


def apply_gaussian_noise(v, spec: NoiseSpec, rng=None):
    """Shift every component by an independent ``N(0, sigma^2)`` draw.

    Accepts a :class:`CorrectionVector` or an array and returns the same kind.
    With ``eps_meas == 0`` the input comes back unchanged.
    """
    x = _values(v)
    if spec.eps_meas == 0:
        return _like(v, x.copy())
    rng = np.random.default_rng(spec.seed if rng is None else rng)
    shift = rng.normal(0.0, spec.sigma, size=x.shape)
    if spec.reference == "absolute":
        return _like(v, x + shift)
    norm = np.linalg.norm(x)
    if norm == 0:
        return _like(v, shift)
    return _like(v, norm * (x / norm + shift))


def apply_cutoff(v, alpha: float):
    """Zero every component with ``|a_i| <= alpha * max|a|``.

    The threshold is strict, so a component sitting exactly on it is dropped.
    A zero vector is returned unchanged.
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    x = _values(v)
    a_max = np.max(np.abs(x)) if x.size else 0.0
    if a_max == 0:
        return _like(v, x.copy())
    return _like(v, np.where(np.abs(x) > alpha * a_max, x, 0.0))


def make_corrector(spec: NoiseSpec, rng=None):
    """Correction transform ``cutoff(noise(dx))`` with its own RNG stream."""
    rng = np.random.default_rng(spec.seed if rng is None else rng)

    def corrector(v: CorrectionVector) -> CorrectionVector:
        return apply_cutoff(apply_gaussian_noise(v, spec, rng), spec.alpha)

    return corrector


def noise_floor_reached(window: int = 50, ratio: float = 0.9):
    """Stopping predicate: the run has settled onto its noise floor.

    True once the median max-correction over the latest ``window`` iterations
    is no longer below ``ratio`` times the median of the window before it.
    """

    def stop(report: ConvergenceReport) -> bool:
        h = report.correction_history
        if len(h) < 2 * window or len(h) % window:
            return False
        last = np.median(h[-window:])
        prev = np.median(h[-2 * window:-window])
        return bool(last >= ratio * prev)

    return stop


def state_error(reference: FlowState, state: FlowState) -> float:
    """Largest absolute deviation over the velocity, pressure and density blocks."""
    return float(max(np.max(np.abs(state.velocity - reference.velocity)),
                     np.max(np.abs(state.pressure - reference.pressure)),
                     np.max(np.abs(state.density - reference.density))))


@dataclass
class CellResult:
    eps: float
    alpha: float
    trial: int
    max_error: float
    converged: bool
    iterations: int
    stop_reason: str


def run_noisy_cell(case: NozzleCase, spec: NoiseSpec, reference: FlowState,
                   rng=None, window: int = 50) -> CellResult:
    """Run one noisy CFD loop and score its final state against ``reference``.

    A noisy run counts as converged if it meets the tolerance rule or settles
    on a stationary noise floor; hitting the cap or a non-physical state
    (non-finite, reversed flow, singular system) counts as not converged.
    """
    noisy = spec.eps_meas > 0 or spec.alpha > 0
    stop = noise_floor_reached(window) if noisy else None
    report = run_outer_loop(case, make_corrector(spec, rng),
                            max_iterations=spec.max_iterations, stop=stop)
    if report.converged:
        reason = "tolerance"
    elif report.diverged:
        reason = "diverged"
    elif report.iterations < spec.max_iterations:
        reason = "noise_floor"
    else:
        reason = "cap"
    state = report.final_state
    error = state_error(reference, state) if state.is_finite() else float("inf")
    return CellResult(spec.eps_meas, spec.alpha, 0, error,
                      reason in ("tolerance", "noise_floor"), report.iterations, reason)


@dataclass
class SweepResult:
    """Grid of ``(eps, alpha, trial) -> (max_error, converged, iterations)``."""

    cells: list = field(default_factory=list)

    def __len__(self):
        return len(self.cells)

    def select(self, eps=None, alpha=None):
        return [c for c in self.cells
                if (eps is None or c.eps == eps) and (alpha is None or c.alpha == alpha)]

    def rows(self):
        for c in self.cells:
            yield [repr(float(c.eps)), repr(float(c.alpha)), c.trial,
                   repr(float(c.max_error)), str(bool(c.converged)).lower(), c.iterations]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SWEEP_COLUMNS)
            writer.writerows(self.rows())

    def error_slope(self, alpha: float = 0.0) -> float:
        """Least-squares slope of ``log10(max_error)`` against ``log10(eps)``."""
        cells = [c for c in self.select(alpha=alpha)
                 if c.eps > 0 and np.isfinite(c.max_error) and c.max_error > 0]
        if len({c.eps for c in cells}) < 2:
            raise ValueError("need at least two positive eps values to fit a slope")
        x = np.log10([c.eps for c in cells])
        y = np.log10([c.max_error for c in cells])
        return float(np.polyfit(x, y, 1)[0])


def cell_rng(seed: int, i: int, j: int, trial: int) -> np.random.Generator:
    """Independent stream for grid cell ``(eps index, alpha index, trial)``."""
    return np.random.default_rng([seed, i, j, trial])


def run_noisy_sweep(case: NozzleCase, eps_list: Sequence[float], alpha_list: Sequence[float],
                    trials: int = 1, seed: int = 0, max_iterations: int = 100_000,
                    scale: str = "std", reference: str = "absolute",
                    n_jobs: Optional[int] = 1) -> SweepResult:
    """Run ``cutoff(noise(dx))`` CFD loops over the ``eps x alpha x trials`` grid.

    The noiseless converged state of ``case`` is the reference for
    ``max_error``. Cells draw from independent seeded streams, so results do
    not depend on ``n_jobs``.
    """
    eps_list, alpha_list = list(eps_list), list(alpha_list)
    if not eps_list or not alpha_list:
        raise ValueError("eps and alpha lists must be nonempty")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    baseline = run_outer_loop(case)
    if not baseline.converged:
        raise RuntimeError("noiseless baseline did not converge")
    ref = baseline.final_state

    jobs = []
    for i, eps in enumerate(eps_list):
        for j, alpha in enumerate(alpha_list):
            for t in range(trials):
                spec = NoiseSpec(float(eps), float(alpha), seed, max_iterations, scale, reference)
                jobs.append((t, spec, cell_rng(seed, i, j, t)))

    def one(t, spec, rng):
        cell = run_noisy_cell(case, spec, ref, rng)
        cell.trial = t
        return cell

    cells = Parallel(n_jobs=n_jobs)(delayed(one)(*job) for job in jobs)
    return SweepResult(list(cells))


SWEEP_KEYS = {"eps_list", "alpha_list", "trials", "seed", "cap", "case", "scale", "reference"}


def sweep_from_config(config: dict) -> dict:
    """Validate a sweep JSON mapping into keyword arguments."""
    unknown = set(config) - SWEEP_KEYS
    if unknown:
        raise ValueError(f"unknown sweep keys: {sorted(unknown)}")
    for key in ("eps_list", "alpha_list"):
        if key not in config or not list(config[key]):
            raise ValueError(f"sweep config needs a nonempty '{key}'")
    return {
        "eps_list": [float(e) for e in config["eps_list"]],
        "alpha_list": [float(a) for a in config["alpha_list"]],
        "trials": int(config.get("trials", 1)),
        "seed": int(config.get("seed", 0)),
        "max_iterations": int(config.get("cap", 100_000)),
        "scale": config.get("scale", "std"),
        "reference": config.get("reference", "absolute"),
    }


class MeasurementNoise(TransformerMixin, BaseEstimator):
    """Gaussian measurement error as a stateless transformer.

    Each row of ``X`` is one correction vector.

    Parameters
    ----------
    eps_meas : float
        Accuracy of the measurement (noise standard deviation by default).
    scale : {"std", "variance"}
    reference : {"absolute", "normalised"}
    random_state : int, Generator or None
    """

    def __init__(self, eps_meas=1e-3, scale="std", reference="absolute", random_state=None):
        self.eps_meas = eps_meas
        self.scale = scale
        self.reference = reference
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        self.spec_ = NoiseSpec(eps_meas=self.eps_meas, scale=self.scale, reference=self.reference)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        spec = getattr(self, "spec_", None) or NoiseSpec(
            eps_meas=self.eps_meas, scale=self.scale, reference=self.reference)
        rng = np.random.default_rng(self.random_state)
        return np.vstack([apply_gaussian_noise(row, spec, rng) for row in X])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        tags.non_deterministic = self.random_state is None
        return tags


class AlphaCutoff(TransformerMixin, BaseEstimator):
    """Row-wise alpha-cutoff: keep only components above ``alpha * max|row|``."""

    def __init__(self, alpha=0.5):
        self.alpha = alpha

    def fit(self, X, y=None):
        X = check_array(X)
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X)
        return np.vstack([apply_cutoff(row, self.alpha) for row in X])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags


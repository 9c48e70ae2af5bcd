"""Burn-in estimation of the largest correction amplitude.

Before amplitude estimation starts, the solver output is sampled directly.
The ratio ``r = N_new / N_S`` of unique outcomes to shots falls faster or
slower with ``N_S`` depending on how peaked the state is, so the fitted
slope of ``r`` against ``log10(N_S)`` is mapped to ``a_max`` through a
quadratic model calibrated on dummy peaked states.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

N_SHOTS_GRID = (10, 50, 100, 500, 1_000, 5_000, 10_000, 50_000, 100_000)
D_GRID = (3, 4, 5, 6)
A_MAX_GRID = (0.25, 0.5, 0.75, 0.9, 0.99)
PUBLISHED_COEFFICIENTS = (0.17, -0.36, -0.14)


def peak_grid(D: int) -> list[int]:
    """Peak counts ``2^i`` for ``i = 0 .. D-1``."""
    return [2 ** i for i in range(D)]


@dataclass(frozen=True)
class DummyState:
    D: int
    n_peaks: int
    a_max: float
    peaks: np.ndarray
    amplitudes: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return self.amplitudes ** 2


def make_dummy_state(D: int, n_peaks: int, a_max: float, rng=None) -> DummyState:
    """Uniform state with ``n_peaks`` random positions raised to ``a_max``.

    The background amplitude is ``2^(-D/2)``; peaks are drawn without
    replacement and the vector is renormalised afterwards, so ``a_max`` is a
    pre-normalisation value.
    """
    if D < 1:
        raise ValueError("D must be at least 1")
    size = 2 ** D
    if not 1 <= n_peaks <= size:
        raise ValueError(f"n_peaks must lie in [1, {size}]")
    if not 0 < a_max < 1:
        raise ValueError("a_max must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    peaks = np.sort(rng.choice(size, n_peaks, replace=False))
    v = np.full(size, size ** -0.5)
    v[peaks] = a_max
    return DummyState(D, n_peaks, a_max, peaks, v / np.linalg.norm(v))


@dataclass(frozen=True)
class RatioSample:
    n_shots: int
    n_new: int

    @property
    def r(self) -> float:
        return self.n_new / self.n_shots


def sample_unique_ratio(state, n_shots: int, rng=None) -> RatioSample:
    """Draw ``n_shots`` basis states and count distinct outcomes.

    ``state`` is a :class:`DummyState` or any amplitude vector.
    """
    if n_shots < 1:
        raise ValueError("n_shots must be at least 1")
    amps = state.amplitudes if isinstance(state, DummyState) else np.asarray(state, float)
    p = amps ** 2
    p = p / p.sum()
    rng = np.random.default_rng(rng)
    counts = rng.multinomial(int(n_shots), p)
    return RatioSample(int(n_shots), int(np.count_nonzero(counts)))


def fit_slope(samples: Sequence[RatioSample]) -> float:
    """Least-squares slope of ``r`` against ``log10(N_S)``."""
    x = np.log10([s.n_shots for s in samples])
    if len(x) < 2 or np.ptp(x) == 0:
        raise ValueError("need at least two distinct shot counts")
    y = np.array([s.r for s in samples])
    return float(np.polyfit(x, y, 1)[0])


def state_slope(state, rng=None, grid: Sequence[int] = N_SHOTS_GRID) -> float:
    rng = np.random.default_rng(rng)
    return fit_slope([sample_unique_ratio(state, n, rng) for n in grid])


@dataclass(frozen=True)
class SlopeModel:
    """``slope = c2 a^2 + c1 a + c0`` relating the ratio slope to ``a_max``."""

    c2: float
    c1: float
    c0: float

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return (self.c2, self.c1, self.c0)

    def __call__(self, a):
        a = np.asarray(a, dtype=float)
        return self.c2 * a ** 2 + self.c1 * a + self.c0

    def derivative(self, a):
        return 2 * self.c2 * np.asarray(a, dtype=float) + self.c1

    @property
    def is_decreasing(self) -> bool:
        return bool(max(self.derivative(0.0), self.derivative(1.0)) < 0)

    @property
    def is_increasing(self) -> bool:
        return bool(min(self.derivative(0.0), self.derivative(1.0)) > 0)

    @property
    def is_monotone(self) -> bool:
        return self.is_decreasing or self.is_increasing


PUBLISHED_MODEL = SlopeModel(*PUBLISHED_COEFFICIENTS)


@dataclass(frozen=True)
class AmaxEstimate:
    a_max: float
    clamped: bool


def a_max_from_slope(slope: float, model: SlopeModel = PUBLISHED_MODEL) -> AmaxEstimate:
    """Invert ``model`` on ``[0, 1]``.

    Slopes beyond the model's range clamp to the nearer endpoint and set
    ``clamped``.
    """
    if not model.is_monotone:
        raise ValueError("slope model is not monotone on [0, 1]")
    f0, f1 = float(model(0.0)), float(model(1.0))
    lo_val, hi_val = min(f0, f1), max(f0, f1)
    if slope <= lo_val or slope >= hi_val:
        at_zero = abs(slope - f0) <= abs(slope - f1)
        exact = slope in (f0, f1)
        return AmaxEstimate(0.0 if at_zero else 1.0, not exact)
    c2, c1, c0 = model.coefficients
    c = c0 - slope
    if c2 == 0:
        return AmaxEstimate(-c / c1, False)
    disc = math.sqrt(max(c1 * c1 - 4 * c2 * c, 0.0))
    # numerically stable pair of roots
    q = -0.5 * (c1 + math.copysign(disc, c1))
    roots = [q / c2, c / q if q != 0 else math.inf]
    root = min(roots, key=lambda t: 0.0 if 0 <= t <= 1 else min(abs(t), abs(t - 1)))
    return AmaxEstimate(float(min(max(root, 0.0), 1.0)), False)


def burn_in_shots(alpha: float, a_max: float) -> int:
    """Shots ``ceil(1 / (alpha a_max)^2)`` needed to see amplitudes above the cutoff."""
    if alpha < 0 or a_max < 0:
        raise ValueError("alpha and a_max must be non-negative")
    if alpha * a_max == 0:
        raise ValueError("alpha * a_max = 0 gives an unbounded shot budget")
    x = 1.0 / (alpha * a_max) ** 2
    return int(math.ceil(x * (1 - 1e-12)))


@dataclass
class SlopeTable:
    """Per-case slopes ``(D, N_peaks, a_max, trial) -> slope``."""

    rows: list

    def mean_by_case(self) -> list[tuple[int, int, float, float]]:
        groups: dict = {}
        for D, n, a, _, s in self.rows:
            groups.setdefault((D, n, a), []).append(s)
        return [(D, n, a, float(np.mean(v))) for (D, n, a), v in sorted(groups.items())]

    def mean_by_amax(self) -> tuple[np.ndarray, np.ndarray]:
        """Unweighted mean over ``D`` and ``N_peaks`` of the trial-averaged slopes."""
        cases = self.mean_by_case()
        amax = sorted({a for _, _, a, _ in cases})
        means = [np.mean([s for _, _, a2, s in cases if a2 == a]) for a in amax]
        return np.array(amax), np.array(means)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["D", "N_peaks", "a_max", "slope"])
            for D, n, a, s in self.mean_by_case():
                w.writerow([D, n, repr(float(a)), repr(float(s))])


def _case_slopes(D, n_peaks, a_max, trials, seed, grid):
    out = []
    for t in range(trials):
        rng = np.random.default_rng([seed, D, n_peaks, int(round(a_max * 1000)), t])
        state = make_dummy_state(D, n_peaks, a_max, rng)
        out.append((D, n_peaks, a_max, t, state_slope(state, rng, grid)))
    return out


def slope_table(D_list: Iterable[int] = D_GRID, a_max_list: Iterable[float] = A_MAX_GRID,
                trials: int = 10, seed: int = 0, grid: Sequence[int] = N_SHOTS_GRID,
                n_jobs: Optional[int] = 1) -> SlopeTable:
    """Slopes for every ``(D, N_peaks, a_max)`` case; each case has its own stream."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    cases = [(D, n, a) for D in D_list for n in peak_grid(D) for a in a_max_list]
    if not cases:
        raise ValueError("grids must be nonempty")
    chunks = Parallel(n_jobs=n_jobs)(
        delayed(_case_slopes)(D, n, float(a), trials, seed, tuple(grid)) for D, n, a in cases)
    return SlopeTable([row for chunk in chunks for row in chunk])


def fit_slope_model(a_max: Sequence[float], slopes: Sequence[float]) -> SlopeModel:
    a = np.asarray(a_max, dtype=float)
    if len(np.unique(a)) < 3:
        raise ValueError("a quadratic fit needs at least three distinct a_max values")
    return SlopeModel(*map(float, np.polyfit(a, np.asarray(slopes, float), 2)))


def rebuild_slope_model(D_list: Iterable[int] = D_GRID, a_max_list: Iterable[float] = A_MAX_GRID,
                        trials: int = 10, seed: int = 0, n_jobs: Optional[int] = 1):
    """Run the dummy-state calibration and fit the quadratic slope model.

    Returns:
        ``(model, table)``.
    """
    a_max_list = list(a_max_list)
    if len(set(a_max_list)) < 3:
        raise ValueError("a quadratic fit needs at least three distinct a_max values")
    table = slope_table(D_list, a_max_list, trials, seed, n_jobs=n_jobs)
    return fit_slope_model(*table.mean_by_amax()), table


def write_coefficients(model: SlopeModel, path) -> None:
    with open(path, "w") as fh:
        json.dump({"c2": model.c2, "c1": model.c1, "c0": model.c0,
                   "monotone_decreasing": model.is_decreasing}, fh, indent=2)


class AmaxEstimator(RegressorMixin, BaseEstimator):
    """Quadratic slope model wrapped as a regressor from slope to ``a_max``.

    ``fit`` takes slopes ``X`` (one column) and true ``a_max`` values ``y``,
    fits ``slope = c2 a^2 + c1 a + c0`` and ``predict`` inverts it.
    """

    def __init__(self, clip=True):
        self.clip = clip

    def fit(self, X, y):
        X = np.asarray(X, dtype=float).reshape(len(y), -1)
        if X.shape[1] != 1:
            raise ValueError("X must hold a single slope column")
        self.model_ = fit_slope_model(y, X[:, 0])
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = np.asarray(X, dtype=float).reshape(-1)
        return np.array([a_max_from_slope(s, self.model_).a_max for s in X])

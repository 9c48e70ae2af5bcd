"""Statistical simulation of QSP amplitude estimation with sign recovery.

Coins are sampled directly from their outcome probabilities: a degree-``k``
Chebyshev coin succeeds with probability ``T_k(a)^2``; the shifted
Hadamard-test circuit returns (ancilla 0, projector hit) with probability
``((a + b) / 2)^2`` and (ancilla 1, projector hit) with ``((b - a) / 2)^2``.

:func:`chebae_estimate` refines a confidence interval for ``|a|`` in angle
space, always sampling at the largest odd degree whose image of the current
interval stays on one monotone branch of ``cos^2``. :func:`signed_estimate`
first locates ``a`` coarsely with the shifted circuit, then shifts by minus the
lower bound so the remaining amplitude has a known sign and can be refined by
the unsigned routine.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import beta as beta_dist
from sklearn.base import BaseEstimator
from sklearn.utils import check_array

# empirical query-complexity constants, fitted at a = 0.5, delta = 0.05
QUERY_A = 1.71
QUERY_B = 2.18
SIGNED_QUERY_B = 2.08
FITTED_EPS_RANGE = (1e-6, 1e-3)


class QueryModelRangeWarning(UserWarning):
    """Accuracy outside the range the query-complexity constants were fitted on."""


def chebyshev_t(k: int, a):
    """``T_k(a)`` in the cosine form ``cos(k arccos a)``."""
    a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
    return np.cos(k * np.arccos(a))


def chebyshev_coin(a: float, k: int, shots: int, rng=None) -> int:
    """Number of successes in ``shots`` flips of the degree-``k`` coin."""
    if abs(a) > 1:
        raise ValueError("amplitude must satisfy |a| <= 1")
    if k < 1:
        raise ValueError("degree must be at least 1")
    rng = np.random.default_rng(rng)
    p = float(chebyshev_t(k, a)) ** 2
    return int(rng.binomial(shots, min(max(p, 0.0), 1.0)))


def queries_per_shot(k: int) -> int:
    """Projector rotations in one degree-``k`` coin (``k`` odd): ``(k + 1) / 2``."""
    return (k + 1) // 2


@dataclass(frozen=True)
class CoinOracle:
    """Hidden amplitude plus the circuit used to probe it.

    ``flavour="plain"`` is the Chebyshev coin on ``a`` itself.
    ``flavour="shifted"`` applies a shift ``b``; with the ``"hadamard"``
    convention the ancilla-controlled circuit carries the projector amplitude
    ``(a + b) / 2`` on ancilla 0 and ``(b - a) / 2`` on ancilla 1, with
    ``"raw"`` two separate circuits prepare ``a + b`` and ``a - b``.
    """

    a: float
    flavour: str = "plain"
    convention: str = "hadamard"

    def __post_init__(self):
        if not -1 <= self.a <= 1:
            raise ValueError("amplitude must lie in [-1, 1]")
        if self.flavour not in ("plain", "shifted"):
            raise ValueError("flavour must be 'plain' or 'shifted'")
        if self.convention not in ("hadamard", "raw"):
            raise ValueError("convention must be 'hadamard' or 'raw'")

    def success_probability(self, k: int) -> float:
        return float(chebyshev_t(k, self.a)) ** 2

    def shifted_probabilities(self, b: float) -> tuple[float, float]:
        """Probabilities whose ``4x`` (Hadamard) or ``1x`` (raw) give ``(a +- b)^2``."""
        if self.convention == "hadamard":
            return ((self.a + b) / 2) ** 2, ((b - self.a) / 2) ** 2
        return min((self.a + b) ** 2, 1.0), min((self.a - b) ** 2, 1.0)

    def shifted_amplitude(self, b: float) -> float:
        """Projector amplitude carried by the ``+b`` branch."""
        if self.convention == "hadamard":
            return (self.a + b) / 2
        return self.a + b


@dataclass(frozen=True)
class AeConfig:
    """Accuracy target and schedule for one amplitude-estimation run.

    Args:
        eps: target accuracy ``eps_meas``.
        delta: failure probability.
        b0: first shift of the signed routine, any value with ``0 < |b0| < 1``.
        max_degree: degree cap; reaching it leaves the run unconverged.
        shots: coin flips per round.
        margin: fraction of the half-period kept free when choosing the degree.
        confint: ``"beta"`` (Clopper-Pearson) or ``"chernoff"`` (Hoeffding).
        coarse_shots: flips spent by the signed routine at the first shift.
        coarse_delta: share of ``delta`` spent on the coarse signed stage.
        exact: use exact outcome probabilities instead of sampling.
    """

    eps: float = 1e-2
    delta: float = 0.05
    b0: float = 0.5
    max_degree: int = 100_000
    shots: int = 10
    margin: float = 0.1
    confint: str = "beta"
    coarse_shots: int = 100
    coarse_delta: float = 0.1
    exact: bool = False

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < abs(self.b0) < 1:
            raise ValueError("|b0| must lie in (0, 1)")
        if self.max_degree < 1 or self.shots < 1 or self.coarse_shots < 1:
            raise ValueError("degree cap and shot counts must be positive")
        if not 0 <= self.margin < 1:
            raise ValueError("margin must lie in [0, 1)")
        if self.confint not in ("beta", "chernoff"):
            raise ValueError("confint must be 'beta' or 'chernoff'")
        if not 0 < self.coarse_delta < 1:
            raise ValueError("coarse_delta must lie in (0, 1)")


@dataclass
class AeResult:
    a_hat: float
    coin_flips: int = 0
    queries: int = 0
    rounds: list = field(default_factory=list)
    shifts: list = field(default_factory=list)
    intervals: list = field(default_factory=list)
    converged: bool = True
    clamped: bool = False

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def as_dict(self) -> dict:
        return {"a_hat": self.a_hat, "queries": self.queries,
                "rounds": self.n_rounds, "converged": self.converged}


def _proportion_interval(successes: int, n: int, delta: float, method: str):
    if method == "chernoff":
        w = math.sqrt(math.log(2.0 / delta) / (2.0 * n))
        p = successes / n
        return max(0.0, p - w), min(1.0, p + w)
    lo = 0.0 if successes == 0 else float(beta_dist.ppf(delta / 2, successes, n - successes + 1))
    hi = 1.0 if successes == n else float(beta_dist.ppf(1 - delta / 2, successes + 1, n - successes))
    return lo, hi


def _branch(k: int, theta_lo: float, theta_hi: float) -> Optional[int]:
    """Index ``j`` of the ``cos^2`` half-period holding ``k * [theta_lo, theta_hi]``."""
    j = math.floor(2 * k * theta_lo / math.pi)
    if k * theta_hi <= (j + 1) * math.pi / 2 + 1e-12:
        return j
    return None


def _next_degree(k: int, lo: float, hi: float, margin: float) -> int:
    """Largest odd degree (at least ``k``) keeping the interval on one branch."""
    theta_lo, theta_hi = math.acos(hi), math.acos(lo)
    width = theta_hi - theta_lo
    if width <= 0:
        return 2 ** 62 + 1
    top = int((1 - margin) * (math.pi / 2) / width)
    top = min(top, 2 ** 62)
    if top % 2 == 0:
        top -= 1
    while top > k:
        if _branch(top, theta_lo, theta_hi) is not None:
            return top
        top -= 2
    return k


def _invert_branch(p: float, k: int, j: int) -> float:
    """Angle ``theta`` with ``cos^2(k theta) = p`` on half-period ``j``."""
    phi0 = math.acos(math.sqrt(min(max(p, 0.0), 1.0)))
    phi = j * math.pi / 2 + phi0 if j % 2 == 0 else (j + 1) * math.pi / 2 - phi0
    return phi / k


def _stage_count(eps: float) -> int:
    return max(1, math.ceil(math.log2(math.pi / (4 * eps)))) + 2


def _chebae(amplitude: float, eps: float, delta: float, cfg: AeConfig, rng,
            result: AeResult) -> tuple[float, float]:
    """Interval refinement for a known-nonnegative amplitude; fills ``result``."""
    lo, hi = 0.0, 1.0
    k, successes, flips = 1, 0, 0
    delta_r = delta / _stage_count(eps)
    result.intervals.append((lo, hi))
    while hi - lo > 2 * eps:
        k_next = _next_degree(k, lo, hi, cfg.margin)
        if k_next > cfg.max_degree:
            result.converged = False
            break
        if k_next != k:
            k, successes, flips = k_next, 0, 0
        p = float(chebyshev_t(k, amplitude)) ** 2
        successes += int(rng.binomial(cfg.shots, min(max(p, 0.0), 1.0)))
        flips += cfg.shots
        result.rounds.append((k, cfg.shots))
        result.coin_flips += cfg.shots
        result.queries += cfg.shots * queries_per_shot(k)

        p_lo, p_hi = _proportion_interval(successes, flips, delta_r, cfg.confint)
        theta_lo, theta_hi = math.acos(hi), math.acos(lo)
        j = _branch(k, theta_lo, theta_hi)
        t1, t2 = sorted((_invert_branch(p_lo, k, j), _invert_branch(p_hi, k, j)))
        new_lo, new_hi = math.cos(t2), math.cos(t1)
        if new_lo > hi or new_hi < lo:
            # the confidence statement failed; restart from the fresh interval
            lo, hi = new_lo, new_hi
        else:
            lo, hi = max(lo, new_lo), min(hi, new_hi)
        result.intervals.append((lo, hi))
    return lo, hi


def chebae_estimate(oracle: CoinOracle, cfg: AeConfig, rng=None) -> AeResult:
    """Estimate ``|a|`` to accuracy ``cfg.eps`` with confidence ``1 - cfg.delta``.

    Each round flips ``cfg.shots`` Chebyshev coins at the current degree and
    pools them with earlier flips at that degree; the pooled proportion
    interval is mapped back through the monotone branch and intersected with
    the running interval. The estimate is the midpoint once the interval is
    no wider than ``2 * eps``. Each flip at degree ``k`` costs ``(k + 1) / 2``
    projector queries.
    """
    if oracle.flavour != "plain":
        raise ValueError("chebae_estimate needs a plain coin oracle")
    rng = np.random.default_rng(rng)
    result = AeResult(a_hat=math.nan)
    if cfg.exact:
        result.a_hat = abs(oracle.a)
        result.intervals.append((result.a_hat, result.a_hat))
        return result
    lo, hi = _chebae(abs(oracle.a), cfg.eps, cfg.delta, cfg, rng, result)
    result.a_hat = 0.5 * (lo + hi)
    return result


def _hoeffding_shift_interval(a_hat: float, b: float, n: int, delta: float):
    # per-shot estimator takes values in {-1/b, 0, 1/b}
    w = (2.0 / abs(b)) * math.sqrt(math.log(2.0 / delta) / (2.0 * n))
    return max(-1.0, a_hat - w), min(1.0, a_hat + w)


def signed_estimate(oracle: CoinOracle, cfg: AeConfig, rng=None) -> AeResult:
    """Estimate the signed amplitude ``a``.

    Round 0 runs the shifted circuit at ``b0`` and forms
    ``a_hat = (p_plus - p_minus) / (4 b0)`` with ``p_plus``/``p_minus``
    estimating ``(a + b0)^2`` and ``(a - b0)^2``, together with a Hoeffding
    interval ``[a_min, a_max]``. The next shift is ``b1 = -a_min``, which makes
    the shifted amplitude nonnegative; it is then refined by the unsigned
    routine, at half the target accuracy in the Hadamard convention because
    that circuit halves the amplitude.
    """
    rng = np.random.default_rng(rng)
    b = cfg.b0
    shifted = CoinOracle(oracle.a, "shifted", oracle.convention)
    result = AeResult(a_hat=math.nan, shifts=[b])

    if oracle.convention == "raw" and abs(oracle.a) + abs(b) > 1:
        b = math.copysign(1.0 - abs(oracle.a), b) if abs(oracle.a) < 1 else b
        result.clamped = True
        result.shifts[0] = b
    q_plus, q_minus = shifted.shifted_probabilities(b)
    scale = 4.0 if oracle.convention == "hadamard" else 1.0

    if cfg.exact:
        result.a_hat = (scale * q_plus - scale * q_minus) / (4 * b)
        result.intervals.append((result.a_hat, result.a_hat))
        return result

    n0 = cfg.coarse_shots
    if oracle.convention == "hadamard":
        counts = rng.multinomial(n0, [q_plus, q_minus, max(0.0, 1 - q_plus - q_minus)])
        hits_plus, hits_minus = int(counts[0]), int(counts[1])
        flips = n0
    else:
        hits_plus = int(rng.binomial(n0, q_plus))
        hits_minus = int(rng.binomial(n0, q_minus))
        flips = 2 * n0
    p_plus, p_minus = scale * hits_plus / n0, scale * hits_minus / n0
    a0 = (p_plus - p_minus) / (4 * b)
    result.rounds.append((1, flips))
    result.coin_flips += flips
    result.queries += flips * queries_per_shot(1)

    delta0 = cfg.delta * cfg.coarse_delta
    if oracle.convention == "hadamard":
        a_min, a_max = _hoeffding_shift_interval(a0, b, n0, delta0)
    else:
        w = math.sqrt(math.log(4.0 / delta0) / (2.0 * n0)) / (2 * abs(b))
        a_min, a_max = max(-1.0, a0 - 2 * w), min(1.0, a0 + 2 * w)
    result.intervals.append((a_min, a_max))
    if a_max - a_min <= 2 * cfg.eps:
        result.a_hat = 0.5 * (a_min + a_max)
        return result

    b1 = -a_min
    if oracle.convention == "raw" and a_max + b1 > 1:
        b1 = 1.0 - a_max
        result.clamped = True
    result.shifts.append(b1)
    c = shifted.shifted_amplitude(b1)
    factor = 2.0 if oracle.convention == "hadamard" else 1.0
    fine = AeResult(a_hat=math.nan)
    lo, hi = _chebae(abs(c), cfg.eps / factor, cfg.delta - delta0, cfg, rng, fine)
    result.rounds.extend(fine.rounds)
    result.coin_flips += fine.coin_flips
    result.queries += fine.queries
    result.converged = fine.converged
    for c_lo, c_hi in fine.intervals[1:]:
        result.intervals.append((factor * c_lo - b1, factor * c_hi - b1))
    a_hat = factor * 0.5 * (lo + hi) - b1
    result.a_hat = float(min(max(a_hat, -1.0), 1.0))
    return result


def model_query_complexity(eps: float, signed: bool = False) -> float:
    """Mean projector queries from the empirical fit.

    Unsigned: ``(1.71 / eps) ln(2.18 ln(1 / eps))``. Signed:
    ``(1.71 / (2 eps)) ln(2.08 ln(1 / (2 eps)))``. A
    :class:`QueryModelRangeWarning` is issued outside ``[1e-6, 1e-3]``, where
    the constants were fitted.
    """
    if signed:
        if not 0 < eps < 0.5:
            raise ValueError("signed model needs 0 < eps < 0.5")
        value = QUERY_A / (2 * eps) * math.log(SIGNED_QUERY_B * math.log(1 / (2 * eps)))
    else:
        if not 0 < eps < 1:
            raise ValueError("unsigned model needs 0 < eps < 1")
        value = QUERY_A / eps * math.log(QUERY_B * math.log(1 / eps))
    lo, hi = FITTED_EPS_RANGE
    if not lo <= eps <= hi:
        warnings.warn(f"eps={eps:g} lies outside the fitted range [{lo:g}, {hi:g}]",
                      QueryModelRangeWarning, stacklevel=2)
    return value


@dataclass(frozen=True)
class GateCost:
    non_clifford: float
    toffoli_extra: float
    rotations: float
    qubits: float


def oracle_gate_cost(d_poly: float, be, n: float) -> GateCost:
    """Cost of one amplitude-estimation oracle query.

    ``be`` is any object exposing ``non_clifford_cost`` (``M_C``, per block-
    encoding application) and ``qubits`` (``M_qb``); ``n`` is the system
    qubit count that sets the projector Toffolis.
    """
    if d_poly < 1:
        raise ValueError("d_poly must be at least 1")
    return GateCost(
        non_clifford=2 * d_poly * be.non_clifford_cost,
        toffoli_extra=2 * n,
        rotations=4 * d_poly + 2,
        qubits=be.qubits + 2,
    )


@dataclass
class TrialSummary:
    coverage: float
    sign_accuracy: float
    mean_queries: float
    model_queries: float
    results: list


def run_trials(a: float, cfg: AeConfig, trials: int, signed: bool = True,
               seed: int = 0) -> TrialSummary:
    """Repeat an estimation ``trials`` times on independent seeded streams."""
    oracle = CoinOracle(a)
    results = []
    for t in range(trials):
        rng = np.random.default_rng([seed, t])
        res = signed_estimate(oracle, cfg, rng) if signed else chebae_estimate(oracle, cfg, rng)
        results.append(res)
    target = a if signed else abs(a)
    errors = np.array([abs(r.a_hat - target) for r in results])
    signs = np.array([np.sign(r.a_hat) == np.sign(a) for r in results])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QueryModelRangeWarning)
        model = model_query_complexity(cfg.eps, signed=False)
    return TrialSummary(
        coverage=float(np.mean(errors <= cfg.eps)),
        sign_accuracy=float(np.mean(signs)) if a != 0 else math.nan,
        mean_queries=float(np.mean([r.queries for r in results])),
        model_queries=model,
        results=results,
    )


class AmplitudeEstimator(BaseEstimator):
    """Sklearn-style front end: ``predict`` maps true amplitudes to estimates.

    Fitting is a no-op; the hidden amplitudes play the role of samples so the
    estimator can be dropped into parameter searches over ``eps``, ``shots``
    or ``confint``.
    """

    def __init__(self, eps=1e-2, delta=0.05, signed=True, shots=10, margin=0.1,
                 confint="beta", b0=0.5, max_degree=100_000, random_state=None):
        self.eps = eps
        self.delta = delta
        self.signed = signed
        self.shots = shots
        self.margin = margin
        self.confint = confint
        self.b0 = b0
        self.max_degree = max_degree
        self.random_state = random_state

    def _config(self) -> AeConfig:
        return AeConfig(eps=self.eps, delta=self.delta, b0=self.b0, max_degree=self.max_degree,
                        shots=self.shots, margin=self.margin, confint=self.confint)

    def fit(self, X=None, y=None):
        self.config_ = self._config()
        return self

    def predict(self, X):
        a = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_all_finite=True).ravel()
        if np.any(np.abs(a) > 1):
            raise ValueError("amplitudes must lie in [-1, 1]")
        cfg = getattr(self, "config_", None) or self._config()
        rng = np.random.default_rng(self.random_state)
        run = signed_estimate if self.signed else chebae_estimate
        self.results_ = [run(CoinOracle(float(v)), cfg, rng) for v in a]
        return np.array([r.a_hat for r in self.results_])

    def score(self, X, y=None):
        """Fraction of estimates within ``eps`` of the truth."""
        a = np.asarray(X, dtype=float).ravel()
        target = a if self.signed else np.abs(a)
        return float(np.mean(np.abs(self.predict(a) - target) <= self.eps))

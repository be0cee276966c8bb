"""Statistical checks of the Poisson scatterer law and of the tail and moment estimates built on it."""
import math
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import stats
from scipy.integrate import quad

from src.data.generator import ScattererGenerator
from src.data.models import GapStats, MaxGapSummary
from src.utils.errors import ConsistencyError, DomainError, QuadratureError
from src.utils.settings import StatisticalThresholds

MIN_EXPECTED = 5.0
MIN_SAMPLES = 10_000


class CountStats(NamedTuple):
    statistic: float
    pvalue: float
    mean: float
    samples: int


class TailCheck(NamedTuple):
    lhs: float
    rhs: float
    exponent: float


def _merged_bins(counts: np.ndarray, nu: float) -> Tuple[np.ndarray, np.ndarray]:
    """Observed and expected frequencies, neighbouring bins pooled until each expects ≥ 5."""
    K = counts.size
    top = int(max(counts.max(), stats.poisson.ppf(1.0 - 1e-12, nu)))
    k = np.arange(top + 1)
    observed = np.bincount(counts, minlength=top + 1).astype(float)
    expected = K * stats.poisson.pmf(k, nu)
    expected[-1] += K * stats.poisson.sf(top, nu)

    obs_bins: List[float] = []
    exp_bins: List[float] = []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= MIN_EXPECTED:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if obs_bins:
        obs_bins[-1] += o_acc
        exp_bins[-1] += e_acc
    return np.array(obs_bins), np.array(exp_bins)


def count_chi_square(counts: Iterable[int], nu: float) -> Tuple[float, float]:
    """Pearson χ² of integer counts against Poisson(ν)."""
    counts = np.asarray(list(counts), dtype=int)
    if counts.size == 0 or np.any(counts < 0):
        raise DomainError("counts must be a nonempty array of nonnegative integers")
    observed, expected = _merged_bins(counts, nu)
    if observed.size < 2:
        raise DomainError(f"not enough data to form two bins at nu={nu}")
    expected *= observed.sum() / expected.sum()
    result = stats.chisquare(observed, expected)
    return float(result.statistic), float(result.pvalue)


def _require_samples(K: int) -> None:
    if K < MIN_SAMPLES:
        raise DomainError(f"statistical checks need at least {MIN_SAMPLES} samples, got K={K}")


def count_statistics(nu: float, K: int, seed: int, generator: Optional[ScattererGenerator] = None) -> CountStats:
    _require_samples(K)
    generator = generator or ScattererGenerator()
    counts = generator.counts(nu, K, seed)
    statistic, pvalue = count_chi_square(counts, nu)
    logger.info(f"Count test nu={nu}, K={K}: chi2={statistic:.2f}, p={pvalue:.3g}")
    return CountStats(statistic=statistic, pvalue=pvalue, mean=float(counts.mean()), samples=K)


def spacing_statistics(
    nu: float, K: int, seed: int, generator: Optional[ScattererGenerator] = None, method: Optional[str] = None
) -> GapStats:
    _require_samples(K)
    generator = generator or ScattererGenerator()
    spacings = generator.spacings(nu, K, seed, method)
    ks = stats.kstest(spacings, "expon", args=(0.0, 1.0 / nu))
    rho = float(np.corrcoef(spacings[:-1], spacings[1:])[0, 1])
    logger.info(f"Spacing test nu={nu}, K={spacings.size}: KS={ks.statistic:.4g}, rho={rho:.3g}")
    return GapStats(
        spacing_moments=(float(np.mean(spacings)), float(np.mean(spacings ** 2))),
        ks_distance=float(ks.statistic),
        ks_pvalue=float(ks.pvalue),
        adjacent_correlation=rho,
        samples=int(spacings.size),
    )


def construction_equivalence(nu: float, K: int, seed: int) -> Tuple[float, float]:
    """Two-sample KS between spacings of the cumulative and the order-statistic constructions."""
    generator = ScattererGenerator()
    a = generator.spacings(nu, K, seed, "exponential")
    b = generator.spacings(nu, K, seed + 1, "order_statistics")
    result = stats.ks_2samp(a, b)
    return float(result.statistic), float(result.pvalue)


def max_gap_scaling(
    density: float, lengths: Iterable[float], trials: int, seed: int, window: Tuple[float, float] = (1.0, 5.0)
) -> List[MaxGapSummary]:
    """Distribution of max-gap·λ/ln l over independent windows of each length."""
    lengths = list(lengths)
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise DomainError("window lengths must be increasing")
    generator = ScattererGenerator()
    out = []
    for i, length in enumerate(lengths):
        gaps = generator.max_gaps(density, length, trials, seed + i)
        r = gaps * density / math.log(length)
        q1, median, q3 = np.percentile(r, [25, 50, 75])
        out.append(
            MaxGapSummary(
                length=length,
                ratios=tuple(float(x) for x in r),
                median=float(median),
                iqr=float(q3 - q1),
                fraction_in_window=float(np.mean((r >= window[0]) & (r <= window[1]))),
                fraction_below_2=float(np.mean(r <= 2.0)),
                fraction_above_4=float(np.mean(r > 4.0)),
            )
        )
        logger.debug(f"l={length:g}: median ratio {median:.3f}, iqr {q3 - q1:.3f}")
    return out


def tail_exponent(lam: float) -> float:
    """1 − λ + λ ln λ, zero only at λ = 1."""
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    if lam == 0:
        return 1.0
    return 1.0 - lam + lam * math.log(lam)


def tail_bound_check(nu: float, lam: float) -> TailCheck:
    """Poisson tail beyond λν (upper for λ ≥ 1, lower for λ < 1) against e^{−ν(1−λ+λ ln λ)}."""
    if nu <= 0:
        raise DomainError(f"nu must be positive, got {nu}")
    exponent = tail_exponent(lam)
    if lam >= 1.0:
        lhs = float(stats.poisson.sf(math.ceil(lam * nu) - 1, nu))
    else:
        lhs = float(stats.poisson.cdf(math.floor(lam * nu), nu))
    rhs = math.exp(-nu * exponent)
    if lhs > rhs * (1.0 + 1e-12):
        raise ConsistencyError(f"Poisson tail {lhs:.6g} exceeds its bound {rhs:.6g} at nu={nu}, lambda={lam}")
    return TailCheck(lhs=lhs, rhs=rhs, exponent=exponent)


def exponential_moment(x: float, k: int) -> float:
    """e^x ∫_x^∞ e^{−t} (t − x²/t)^k dt, integrated in s = t − x."""
    if x < 0 or k < 0:
        raise DomainError(f"need x >= 0 and k >= 0, got x={x}, k={k}")

    def integrand(s: float) -> float:
        return math.exp(-s) * (s * (2.0 * x + s) / (x + s)) ** k if x + s > 0 else 0.0

    value, abserr = quad(integrand, 0.0, math.inf, limit=200)
    if not math.isfinite(value) or abserr > 1e-6 * max(1.0, abs(value)):
        raise QuadratureError(f"quadrature did not converge at x={x}, k={k} (error {abserr:.2e})")
    return value


def moment_bound_check(x: float, k: int) -> Tuple[float, float]:
    value = exponential_moment(x, k)
    bound = math.factorial(k) * 2.0 ** k
    if value > bound:
        raise ConsistencyError(f"moment {value:.6g} exceeds k!2^k = {bound:g} at x={x}, k={k}")
    if k == 1 and not 1.0 - 1e-8 <= value <= 2.0:
        raise ConsistencyError(f"first moment {value:.6g} leaves [1, 2] at x={x}")
    return value, bound


def poisson_report(
    nu: float,
    K: int,
    seed: int,
    lengths: Iterable[float],
    trials: int,
    thresholds: Optional[StatisticalThresholds] = None,
) -> Tuple[GapStats, Dict[str, bool]]:
    """All disorder checks at once, with a pass/fail verdict per test."""
    thresholds = thresholds or StatisticalThresholds()
    spacing = spacing_statistics(nu, K, seed)
    counts = count_statistics(nu, K, seed)
    gaps = max_gap_scaling(1.0, lengths, trials, seed, thresholds.max_gap_window)
    report = spacing.model_copy(
        update={"count_chi2": counts.statistic, "count_pvalue": counts.pvalue, "max_gap_ratios": gaps}
    )
    n = spacing.samples
    mean, second = spacing.spacing_moments
    verdicts = {
        "count_chi_square": counts.pvalue > thresholds.significance,
        "count_mean": abs(counts.mean - nu) <= 3.0 * math.sqrt(nu / K),
        "spacing_ks": spacing.ks_pvalue > thresholds.significance,
        "spacing_independence": abs(spacing.adjacent_correlation) < thresholds.correlation_sigmas / math.sqrt(n),
        "spacing_second_moment": abs(second / mean ** 2 - 2.0) <= 0.1,
        "max_gap_tail": all(b.fraction_above_4 <= a.fraction_above_4 for a, b in zip(gaps, gaps[1:])),
    }
    for name, ok in verdicts.items():
        if not ok:
            logger.warning(f"Poisson check '{name}' failed at nu={nu}, K={K}, seed={seed}")
    return report, verdicts

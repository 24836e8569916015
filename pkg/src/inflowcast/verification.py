"""Forecast verification: fair CRPS, skill scores, reliability and bootstrap spread."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import HorizonSpec
from .errors import InputError, NumericalError
from .zaga import ZagaDistribution, gamma_cdf, gamma_ppf

SKILL_FAIR = 0.15
SKILL_GOOD = 0.30

# ---------------------------------------------------------------------------
# ensemble (fair) CRPS
# ---------------------------------------------------------------------------


def fair_crps(members, observation: float) -> float:
    """Ferro's fair CRPS of a finite ensemble against a scalar observation.

    mean_k |x_k - y|  -  (1 / (2 K (K-1))) * sum_{k != j} |x_k - x_j|
    """
    x = np.asarray(members, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise InputError("fair CRPS needs at least 2 ensemble members")
    return float(fair_crps_many(x[None, :], np.array([observation]))[0])


def fair_crps_many(members: np.ndarray, observations: np.ndarray) -> np.ndarray:
    """Vectorised fair CRPS for (N, K) ensembles against (N,) observations."""
    x = np.asarray(members, dtype=float)
    y = np.asarray(observations, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise InputError("fair CRPS needs (N, K>=2) ensembles")
    k = x.shape[1]
    term1 = np.abs(x - y[:, None]).mean(axis=1)
    srt = np.sort(x, axis=1)
    weights = 2.0 * np.arange(k) - (k - 1)
    pair_sum = (srt * weights).sum(axis=1)  # sum over ordered pairs of positive gaps
    return term1 - pair_sum / (k * (k - 1))


def fair_crps_sample(sample: np.ndarray, observations: np.ndarray) -> np.ndarray:
    """Fair CRPS of one fixed ensemble (e.g. a climatology sample) against many observations."""
    x = np.sort(np.asarray(sample, dtype=float))
    y = np.asarray(observations, dtype=float)
    k = len(x)
    if k < 2:
        raise InputError("fair CRPS needs at least 2 ensemble members")
    term1 = np.abs(x[None, :] - y[:, None]).mean(axis=1)
    weights = 2.0 * np.arange(k) - (k - 1)
    dispersion = float((x * weights).sum()) / (k * (k - 1))
    return term1 - dispersion


# ---------------------------------------------------------------------------
# parametric CRPS via quantile discretisation
# ---------------------------------------------------------------------------

_TAIL_LEVELS = 1.0 - 10.0 ** np.arange(-4.0, -9.5, -1.0)


def _quantile_levels(n_levels: int) -> np.ndarray:
    u = (np.arange(n_levels) + 0.5) / n_levels
    extra = _TAIL_LEVELS[_TAIL_LEVELS > u[-1]]
    return np.concatenate([u, extra])


def crps_zaga_batch(mu, sigma, nu, offset, observations, n_levels: int = 1024) -> np.ndarray:
    """CRPS of zero-adjusted gamma forecasts, integrating the squared CDF difference.

    The integral is discretised at ``n_levels`` equally spaced probability
    levels of the gamma part (plus a handful of deep-tail levels so the
    truncated tail is negligible) and accumulated with the trapezoid rule in
    value space; the point mass at zero and the support shift are handled
    exactly.  Scores are reported in the user-facing (shifted) space, which
    leaves CRPS unchanged.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    offset = np.atleast_1d(np.asarray(offset, dtype=float))
    y = np.atleast_1d(np.asarray(observations, dtype=float))
    n = len(y)
    mu, sigma, nu, offset = (np.broadcast_to(v, (n,)).copy() for v in (mu, sigma, nu, offset))

    shape = 1.0 / sigma**2
    scale = sigma**2 * mu
    z = y + offset  # observation on the non-negative internal axis

    u = _quantile_levels(n_levels)
    x = gamma_ppf(u[None, :], shape[:, None], scale[:, None])  # (n, m)
    nodes = np.concatenate([np.zeros((n, 1)), x], axis=1)  # include x = 0
    f_at = nu[:, None] + (1.0 - nu[:, None]) * np.concatenate(
        [np.zeros((n, 1)), np.broadcast_to(u, (n, len(u)))], axis=1
    )
    m = nodes.shape[1]

    dx = np.diff(nodes, axis=1)
    f2 = f_at**2
    g2 = (1.0 - f_at) ** 2
    seg_low = 0.5 * (f2[:, 1:] + f2[:, :-1]) * dx
    seg_high = 0.5 * (g2[:, 1:] + g2[:, :-1]) * dx
    cum_low = np.concatenate([np.zeros((n, 1)), np.cumsum(seg_low, axis=1)], axis=1)
    tail_high = np.concatenate(
        [np.cumsum(seg_high[:, ::-1], axis=1)[:, ::-1], np.zeros((n, 1))], axis=1
    )

    below = z <= 0.0
    zc = np.where(below, 1.0, z)
    fz = nu + (1.0 - nu) * gamma_cdf(zc, shape, scale)

    j = (nodes < zc[:, None]).sum(axis=1)  # nodes strictly left of z; >= 1 since node0 = 0 < z
    jm1 = (j - 1)[:, None]
    x_left = np.take_along_axis(nodes, jm1, axis=1)[:, 0]
    f_left = np.take_along_axis(f_at, jm1, axis=1)[:, 0]
    cum_left = np.take_along_axis(cum_low, jm1, axis=1)[:, 0]
    inside = j < m
    jj = np.minimum(j, m - 1)[:, None]
    x_right = np.where(inside, np.take_along_axis(nodes, jj, axis=1)[:, 0], zc)
    f_right = np.where(inside, np.take_along_axis(f_at, jj, axis=1)[:, 0], fz)
    tail_right = np.where(inside, np.take_along_axis(tail_high, jj, axis=1)[:, 0], 0.0)

    i_low = cum_left + 0.5 * (f_left**2 + fz**2) * (zc - x_left)
    i_high = 0.5 * ((1.0 - fz) ** 2 + (1.0 - f_right) ** 2) * (x_right - zc) + tail_right
    crps_pos = i_low + i_high
    crps_neg = -z + tail_high[:, 0]
    return np.where(below, crps_neg, crps_pos)


def crps_parametric(dist: ZagaDistribution, observation: float, n_levels: int = 1024) -> float:
    """CRPS of a single zero-adjusted gamma forecast (shifted space observation)."""
    return float(
        crps_zaga_batch(
            dist.mu, dist.sigma, dist.nu, dist.offset, np.array([observation]), n_levels
        )[0]
    )


# ---------------------------------------------------------------------------
# skill scores
# ---------------------------------------------------------------------------


def fcrpss(forecast_scores, climatology_scores, min_pairs: int = 20) -> float:
    """1 - mean(forecast CRPS) / mean(climatology fair CRPS), over paired cases."""
    f = np.asarray(forecast_scores, dtype=float)
    c = np.asarray(climatology_scores, dtype=float)
    if f.shape != c.shape or f.ndim != 1:
        raise InputError("forecast and climatology scores must be aligned 1-D arrays")
    if len(f) < min_pairs:
        raise InputError(f"{len(f)} scored pairs is below the minimum of {min_pairs}")
    denom = float(c.mean())
    if denom <= 0:
        raise NumericalError("climatology CRPS is zero; skill score undefined")
    return 1.0 - float(f.mean()) / denom


def classify_skill(score: float) -> str:
    """Skill class bands: <=0 none, (0, 0.15) fair, [0.15, 0.30] good, > 0.30 very good."""
    if not np.isfinite(score):
        raise InputError("skill score must be finite")
    if score <= 0.0:
        return "none"
    if score < SKILL_FAIR:
        return "fair"
    if score <= SKILL_GOOD:
        return "good"
    return "very good"


# ---------------------------------------------------------------------------
# reliability
# ---------------------------------------------------------------------------

DEFAULT_LEVELS = np.round(np.arange(0.05, 0.951, 0.05), 2)


@dataclass(frozen=True)
class ReliabilityDiagram:
    levels: np.ndarray
    coverage: np.ndarray
    n_cases: int


def reliability_diagram(observations, quantiles, levels=DEFAULT_LEVELS, min_cases: int = 50) -> ReliabilityDiagram:
    """Empirical coverage of predictive quantiles: share of observations <= Q(level)."""
    y = np.asarray(observations, dtype=float)
    q = np.asarray(quantiles, dtype=float)
    levels = np.asarray(levels, dtype=float)
    if q.shape != (len(y), len(levels)):
        raise InputError("quantiles must have shape (n_cases, n_levels)")
    if len(y) < min_cases:
        raise InputError(f"{len(y)} cases is below the minimum of {min_cases}")
    coverage = (y[:, None] <= q).mean(axis=0)
    return ReliabilityDiagram(levels=levels, coverage=coverage, n_cases=len(y))


def randomized_pit(mu, sigma, nu, offset, observations, rng: np.random.Generator) -> np.ndarray:
    """Probability integral transform with the zero atom randomised uniformly."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    nu = np.asarray(nu, dtype=float)
    z = np.asarray(observations, dtype=float) + np.asarray(offset, dtype=float)
    shape = 1.0 / sigma**2
    scale = sigma**2 * mu
    cont = nu + (1.0 - nu) * gamma_cdf(np.maximum(z, 0.0), shape, scale)
    atom = rng.random(size=np.shape(z)) * nu
    return np.where(z <= 0.0, atom, cont)


# ---------------------------------------------------------------------------
# stratification
# ---------------------------------------------------------------------------

EXTENDED_SUMMER = (4, 5, 6, 7, 8, 9)  # April..September; winter is the complement


class NaoIndex:
    """Monthly atmospheric-circulation index keyed by (year, month)."""

    def __init__(self, entries: dict[tuple[int, int], float]):
        self._entries = dict(entries)

    def value(self, year: int, month: int) -> float | None:
        return self._entries.get((year, month))

    def items(self):
        return sorted(self._entries.items())

    def __len__(self) -> int:
        return len(self._entries)


def majority_month(issue_date, horizon: HorizonSpec) -> tuple[int, int]:
    """(year, month) containing the majority of the horizon's days; ties pick the earlier month."""
    start, end = horizon.window(issue_date)
    days = np.arange(start, end + np.timedelta64(1, "D"))
    months = days.astype("datetime64[M]")
    uniq, counts = np.unique(months, return_counts=True)
    best = uniq[np.argmax(counts)]  # first maximum = earliest month
    year = int(best.astype("datetime64[Y]").astype(int)) + 1970
    month = int((best - best.astype("datetime64[Y]")) / np.timedelta64(1, "M")) + 1
    return year, month


def season_of_month(month: int) -> str:
    return "summer" if month in EXTENDED_SUMMER else "winter"


def stratum_mask(
    issue_dates,
    horizon: HorizonSpec,
    season: str = "all",
    nao_condition: str = "any",
    nao: NaoIndex | None = None,
    nao_threshold: float = 0.4,
) -> np.ndarray:
    """Boolean case filter by extended season and/or monthly NAO phase.

    Both filters use the calendar month holding the majority of the horizon
    days.  Cases without an NAO value for that month are excluded whenever an
    NAO condition is requested.
    """
    if season not in ("all", "summer", "winter"):
        raise InputError(f"unknown season filter {season!r}")
    if nao_condition not in ("any", "positive", "negative"):
        raise InputError(f"unknown NAO condition {nao_condition!r}")
    if nao_condition != "any" and nao is None:
        raise InputError("an NAO index series is required for NAO stratification")
    mask = np.ones(len(issue_dates), dtype=bool)
    for i, issue in enumerate(issue_dates):
        year, month = majority_month(issue, horizon)
        if season != "all" and season_of_month(month) != season:
            mask[i] = False
            continue
        if nao_condition != "any":
            value = nao.value(year, month)
            if value is None:
                mask[i] = False
            elif nao_condition == "positive" and not value > nao_threshold:
                mask[i] = False
            elif nao_condition == "negative" and not value < -nao_threshold:
                mask[i] = False
    return mask


# ---------------------------------------------------------------------------
# bootstrap spread and skill reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    se: float
    lower: float  # estimate - 2 SE
    upper: float  # estimate + 2 SE
    n_boot: int


def bootstrap_spread(data, statistic, n_boot: int = 1000, seed: int = 0, min_cases: int = 20) -> BootstrapResult:
    """Case-resampling bootstrap of an arbitrary statistic; band is +/- 2 standard errors."""
    arr = np.asarray(data, dtype=float)
    n = arr.shape[0]
    if n < min_cases:
        raise InputError(f"{n} cases is below the bootstrap minimum of {min_cases}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    reps = np.array([statistic(arr[row]) for row in idx])
    est = float(statistic(arr))
    se = float(reps.std(ddof=1))
    return BootstrapResult(est, se, est - 2 * se, est + 2 * se, n_boot)


def _fcrpss_stat(pairs: np.ndarray) -> float:
    denom = pairs[:, 1].mean()
    return 1.0 - pairs[:, 0].mean() / denom if denom > 0 else np.nan


@dataclass(frozen=True)
class SkillReport:
    horizon: str
    stratum: str
    fcrpss: float
    se: float
    spread: float  # 2 SE
    skill_class: str
    n_cases: int
    spread_method: str = "bootstrap_2se"

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "stratum": self.stratum,
            "fcrpss": self.fcrpss,
            "se": self.se,
            "spread": self.spread,
            "skill_class": self.skill_class,
            "n_cases": self.n_cases,
            "spread_method": self.spread_method,
        }


def skill_report(
    forecast_scores,
    climatology_scores,
    horizon: str,
    stratum: str = "all",
    n_boot: int = 1000,
    seed: int = 0,
    min_cases: int = 20,
) -> SkillReport | None:
    """fCRPSS with a paired case-resampling bootstrap band; None when understaffed."""
    f = np.asarray(forecast_scores, dtype=float)
    c = np.asarray(climatology_scores, dtype=float)
    if len(f) < min_cases:
        return None
    score = fcrpss(f, c, min_pairs=min_cases)
    boot = bootstrap_spread(np.column_stack([f, c]), _fcrpss_stat, n_boot=n_boot, seed=seed, min_cases=min_cases)
    return SkillReport(
        horizon=horizon,
        stratum=stratum,
        fcrpss=score,
        se=boot.se,
        spread=2 * boot.se,
        skill_class=classify_skill(score),
        n_cases=len(f),
    )

"""Two-stage newsvendor cost model for generation-schedule decisions.

Stage 1 prices a precautionary adjustment A (a signed fraction of the
climatological generation for the horizon): up to +/-20% is free, further
increases sell at the off-peak rate (costing the peak/off-peak differential
per MWh), further decreases store water of which half is later sold off-peak
(half the differential per MWh).  Stage 2 prices the end-of-period deviation
of observed inflow energy from the adjusted discharge, with a free band of
+20% / -50% of climatological generation, the differential per MWh above it,
half the differential below it, and inflow beyond the plant's full-time
capacity spilled at the full peak price.  Both stages are piecewise linear,
so the expected-cost minimiser is found exactly by evaluating every
breakpoint.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .errors import InputError
from .verification import BootstrapResult
from .zaga import ZagaDistribution, gamma_ppf

FORECAST_TYPES = ("climatological", "deterministic", "probabilistic")


@dataclass(frozen=True)
class PriceConfig:
    """Constant peak price and the peak minus off-peak differential (GBP/MWh)."""

    peak: float = 50.0
    differential: float = 30.0

    def __post_init__(self):
        if self.differential <= 0:
            raise InputError("price differential must be positive")

    @property
    def off_peak(self) -> float:
        return self.peak - self.differential


@dataclass(frozen=True)
class OperatingEnvelope:
    """Free bands, capacity and energy conversion for one forecast horizon.

    ``clim_generation`` is the planned climatological generation over the
    horizon (MWh); ``max_capacity_frac`` is the multiple of it reachable by
    running at full capacity around the clock; ``energy_per_inflow`` converts
    one unit of normalised inflow sustained over the horizon into MWh.
    """

    clim_generation: float
    free_up_frac: float = 0.2
    free_down_frac: float = 0.2
    stage2_up_frac: float = 0.2
    stage2_down_frac: float = 0.5
    max_capacity_frac: float = 2.4
    energy_per_inflow: float = 100.0

    def __post_init__(self):
        if self.clim_generation <= 0:
            raise InputError("climatological generation must be positive")
        if min(self.free_up_frac, self.free_down_frac, self.stage2_up_frac, self.stage2_down_frac) <= 0:
            raise InputError("free-band fractions must be positive")
        if self.max_capacity_frac <= 1.0 + self.free_up_frac:
            raise InputError("max capacity must exceed the free stage-1 band")
        if self.energy_per_inflow <= 0:
            raise InputError("energy conversion must be positive")

    @property
    def a_min(self) -> float:
        return -1.0

    @property
    def a_max(self) -> float:
        return self.max_capacity_frac - 1.0

    @property
    def capacity_energy(self) -> float:
        return self.max_capacity_frac * self.clim_generation

    def inflow_energy(self, inflow) -> np.ndarray:
        """Normalised inflow sustained over the horizon, in MWh."""
        return np.asarray(inflow, dtype=float) * self.energy_per_inflow


@dataclass(frozen=True)
class DiscreteForecast:
    """Finite-outcome inflow forecast (normalised inflow units)."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.values.shape != self.weights.shape or self.values.ndim != 1:
            raise InputError("values and weights must be 1-D arrays of equal length")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise InputError("weights must be non-negative and sum to one")


@dataclass(frozen=True)
class AdjustmentDecision:
    adjustment: float  # signed fraction of climatological generation
    expected_cost: float
    forecast_type: str


@dataclass(frozen=True)
class CostBreakdown:
    stage1: float
    stage2: float

    @property
    def total(self) -> float:
        return self.stage1 + self.stage2


# ---------------------------------------------------------------------------
# stage costs
# ---------------------------------------------------------------------------


def stage1_cost(adjustment, env: OperatingEnvelope, prices: PriceConfig):
    """Cost of adjusting planned generation by a signed fraction of clim generation.

    Adjustments above ``a_max`` cannot be generated at all and are priced as
    spill at the peak rate; the optimiser never proposes them but the cost is
    defined so that out-of-envelope candidates are penalised consistently.
    """
    a = np.asarray(adjustment, dtype=float)
    if np.any(a < env.a_min - 1e-12):
        raise InputError("adjustment below -100% of planned generation")
    c = env.clim_generation
    up = np.maximum(0.0, a - env.free_up_frac)
    beyond_cap = np.maximum(0.0, a - env.a_max)
    down = np.maximum(0.0, -a - env.free_down_frac)
    cost = (
        prices.differential * (up - beyond_cap) * c
        + prices.peak * beyond_cap * c
        + 0.5 * prices.differential * down * c
    )
    if a.ndim == 0:
        return float(cost)
    return cost


def stage2_cost(adjustment, observed_energy, env: OperatingEnvelope, prices: PriceConfig):
    """Cost of the end-of-period deviation between inflow energy and adjusted discharge.

    Inflow beyond the plant's full-time capacity spills and is lost at the
    peak price regardless of the adjustment; the remaining excess above the
    free band sells off-peak, and shortfalls below the lower band cost half
    the differential.
    """
    a = np.asarray(adjustment, dtype=float)
    i_obs = np.asarray(observed_energy, dtype=float)
    c = env.clim_generation
    deviation = i_obs - (1.0 + a) * c
    spill = np.maximum(0.0, i_obs - env.capacity_energy)
    over = np.maximum(0.0, deviation - env.stage2_up_frac * c)
    off_peak_sold = np.maximum(0.0, over - spill)
    under = np.maximum(0.0, -deviation - env.stage2_down_frac * c)
    cost = (
        prices.differential * off_peak_sold
        + prices.peak * spill
        + 0.5 * prices.differential * under
    )
    if cost.ndim == 0:
        return float(cost)
    return cost


# ---------------------------------------------------------------------------
# forecast atoms and expected cost
# ---------------------------------------------------------------------------


def _gl_nodes(n_nodes: int):
    x, w = roots_legendre(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w  # mapped to (0, 1)


def forecast_atoms(forecast, env: OperatingEnvelope, n_nodes: int = 256):
    """Represent a forecast as weighted inflow-energy outcomes.

    Point forecasts give one atom; discrete forecasts keep their atoms; a
    zero-adjusted gamma forecast is discretised with Gauss-Legendre nodes in
    probability space for its continuous part plus its zero mass (which sits
    at -offset in inflow units) as an explicit atom.
    """
    if isinstance(forecast, ZagaDistribution):
        u, w = _gl_nodes(n_nodes)
        cont = gamma_ppf(u, forecast.shape, forecast.scale) - forecast.offset
        values = env.inflow_energy(cont)
        weights = (1.0 - forecast.nu) * w
        if forecast.nu > 0:
            values = np.append(values, env.inflow_energy(-forecast.offset))
            weights = np.append(weights, forecast.nu)
        return values, weights
    if isinstance(forecast, DiscreteForecast):
        return env.inflow_energy(forecast.values), forecast.weights.copy()
    value = float(forecast)
    return np.array([env.inflow_energy(value)]), np.array([1.0])


def expected_stage2(adjustment, forecast, env: OperatingEnvelope, prices: PriceConfig, n_nodes: int = 256) -> float:
    """Expected stage-2 cost of an adjustment under a (possibly distributional) forecast."""
    values, weights = forecast_atoms(forecast, env, n_nodes)
    a = np.asarray(adjustment, dtype=float)
    costs = stage2_cost(a[..., None], values, env, prices)
    out = costs @ weights
    if a.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# optimal adjustment and realised cost
# ---------------------------------------------------------------------------


def _breakpoints(values: np.ndarray, env: OperatingEnvelope) -> np.ndarray:
    """Candidate adjustments: kinks of stage 1 plus the stage-2 kinks of every atom."""
    c = env.clim_generation
    spill = np.maximum(0.0, values - env.capacity_energy)
    over_kink = (values - env.stage2_up_frac * c - spill) / c - 1.0
    under_kink = values / c - env.stage2_down_frac
    fixed = np.array([env.a_min, -env.free_down_frac, 0.0, env.free_up_frac, env.a_max])
    cand = np.concatenate([fixed, over_kink, under_kink])
    cand = np.clip(cand, env.a_min, env.a_max)
    return np.unique(cand)


def _expected_objective(cand: np.ndarray, values, weights, env: OperatingEnvelope, prices: PriceConfig):
    """Stage-1 plus expected stage-2 cost at each candidate adjustment.

    Both hinge sums are evaluated with sorted prefix sums, which is exact for
    the piecewise-linear stage-2 cost and linear in the atom count.
    """
    c = env.clim_generation
    spill = np.maximum(0.0, values - env.capacity_energy)
    spill_cost = prices.peak * float(spill @ weights)

    # off-peak overage: sum_i w_i * max(0, b_i - t) with t = (1 + A) c
    b = values - env.stage2_up_frac * c - spill
    order = np.argsort(b, kind="stable")
    b_sorted = b[order]
    wb = weights[order]
    suffix_w = np.concatenate([np.cumsum(wb[::-1])[::-1], [0.0]])
    suffix_bw = np.concatenate([np.cumsum((wb * b_sorted)[::-1])[::-1], [0.0]])
    t = (1.0 + cand) * c
    j = np.searchsorted(b_sorted, t, side="right")
    w_over = suffix_bw[j] - t * suffix_w[j]

    # underage: sum_i w_i * max(0, u - i_i) with u = t - stage2_down c
    order_i = np.argsort(values, kind="stable")
    i_sorted = values[order_i]
    wi = weights[order_i]
    prefix_w = np.concatenate([[0.0], np.cumsum(wi)])
    prefix_iw = np.concatenate([[0.0], np.cumsum(wi * i_sorted)])
    u = t - env.stage2_down_frac * c
    k = np.searchsorted(i_sorted, u, side="left")
    w_under = u * prefix_w[k] - prefix_iw[k]

    stage2 = prices.differential * w_over + 0.5 * prices.differential * w_under + spill_cost
    return stage1_cost(cand, env, prices) + stage2


def optimal_adjustment(
    forecast,
    env: OperatingEnvelope,
    prices: PriceConfig,
    forecast_type: str = "probabilistic",
    n_nodes: int = 256,
    atoms: tuple[np.ndarray, np.ndarray] | None = None,
) -> AdjustmentDecision:
    """Minimise stage-1 plus expected stage-2 cost over the adjustment range.

    The objective is piecewise linear in the adjustment, so evaluating every
    breakpoint is exact; ties resolve to the smallest-magnitude adjustment.
    ``atoms`` may carry a precomputed ``forecast_atoms`` result for reuse
    across price configurations.
    """
    values, weights = atoms if atoms is not None else forecast_atoms(forecast, env, n_nodes)
    cand = _breakpoints(values, env)
    obj = _expected_objective(cand, values, weights, env, prices)
    best = obj.min()
    tol = 1e-9 * (1.0 + abs(best))
    tied = cand[obj <= best + tol]
    a_star = float(min(tied, key=lambda a: (abs(a), a > 0)))
    cost = stage1_cost(a_star, env, prices) + float(
        stage2_cost(a_star, values, env, prices) @ weights
    )
    return AdjustmentDecision(adjustment=a_star, expected_cost=cost, forecast_type=forecast_type)


def realized_cost(
    decision: AdjustmentDecision,
    observed_energy: float,
    env: OperatingEnvelope,
    prices: PriceConfig,
) -> CostBreakdown:
    """True cost of a decision once the inflow is observed."""
    return CostBreakdown(
        stage1=stage1_cost(decision.adjustment, env, prices),
        stage2=stage2_cost(decision.adjustment, observed_energy, env, prices),
    )


def water_value(total_costs, clim_generations, peak_price: float) -> float:
    """Net unit rate achieved: (sum(GEN * peak) - sum(costs)) / sum(GEN), GBP/MWh."""
    totals = np.asarray(total_costs, dtype=float)
    gens = np.asarray(clim_generations, dtype=float)
    if totals.shape != gens.shape or len(totals) == 0:
        raise InputError("costs and generations must be aligned non-empty arrays")
    return float((gens.sum() * peak_price - totals.sum()) / gens.sum())


# ---------------------------------------------------------------------------
# evaluation cases and the price sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CostCase:
    """One scored forecast: observed inflow plus the three competing forecasts."""

    issue_date: dt.date
    horizon: str
    observed_inflow: float  # normalised inflow over the horizon
    envelope: OperatingEnvelope
    climatological: float  # climatology median (point forecast, inflow units)
    deterministic: float  # predictive median (point forecast, inflow units)
    probabilistic: ZagaDistribution

    def forecast(self, forecast_type: str):
        if forecast_type not in FORECAST_TYPES:
            raise InputError(f"unknown forecast type {forecast_type!r}")
        return getattr(self, forecast_type)


def evaluate_case(case: CostCase, prices: PriceConfig, n_nodes: int = 256):
    """Decisions and realised cost breakdowns for all three forecast types."""
    observed = case.envelope.inflow_energy(case.observed_inflow)
    out = {}
    for ftype in FORECAST_TYPES:
        decision = optimal_adjustment(case.forecast(ftype), case.envelope, prices, ftype, n_nodes)
        out[ftype] = (decision, realized_cost(decision, observed, case.envelope, prices))
    return out


@dataclass(frozen=True)
class ValueRow:
    forecast_type: str
    horizon: str
    differential: float
    water_value: float
    se: float
    n_cases: int


def price_sweep(
    cases,
    differentials=tuple(range(5, 101, 5)),
    peak_price: float = 50.0,
    n_boot: int = 1000,
    seed: int = 0,
    n_nodes: int = 256,
    min_cases: int = 20,
):
    """Water value per (forecast type, horizon, differential) with bootstrap bands.

    Bootstrap resamples cases with identical index draws across forecast types
    and differentials (paired), per horizon and for the pooled "all" stratum.
    Returns (value rows, per-case total-cost table).
    """
    cases = list(cases)
    if len(cases) < min_cases:
        raise InputError(f"{len(cases)} cost cases is below the minimum of {min_cases}")
    horizons = sorted({c.horizon for c in cases})
    n = len(cases)
    gens = np.array([c.envelope.clim_generation for c in cases])
    observed = np.array([c.envelope.inflow_energy(c.observed_inflow) for c in cases])
    atom_cache = {
        ftype: [forecast_atoms(c.forecast(ftype), c.envelope, n_nodes) for c in cases]
        for ftype in FORECAST_TYPES
    }
    totals = {}  # (ftype, differential) -> (n,) realised totals
    for diff in differentials:
        prices = PriceConfig(peak=peak_price, differential=float(diff))
        for ftype in FORECAST_TYPES:
            col = np.empty(n)
            for i, case in enumerate(cases):
                decision = optimal_adjustment(
                    None, case.envelope, prices, ftype, atoms=atom_cache[ftype][i]
                )
                col[i] = realized_cost(decision, observed[i], case.envelope, prices).total
            totals[(ftype, float(diff))] = col

    rng = np.random.default_rng(seed)
    groups = {"all": np.arange(n)}
    for h in horizons:
        groups[h] = np.array([i for i, c in enumerate(cases) if c.horizon == h])
    index_draws = {
        name: rng.integers(0, len(idx), size=(n_boot, len(idx))) for name, idx in groups.items()
    }

    rows = []
    for name, idx in groups.items():
        if len(idx) < min_cases:
            continue
        draws = index_draws[name]
        g = gens[idx]
        g_boot = g[draws].sum(axis=1)
        for (ftype, diff), col in sorted(totals.items()):
            t = col[idx]
            wv = water_value(t, g, peak_price)
            reps = (g_boot * peak_price - t[draws].sum(axis=1)) / g_boot
            rows.append(
                ValueRow(
                    forecast_type=ftype,
                    horizon=name,
                    differential=diff,
                    water_value=wv,
                    se=float(reps.std(ddof=1)),
                    n_cases=len(idx),
                )
            )
    return rows, totals


def value_difference(
    cases, totals_base: np.ndarray, totals_other: np.ndarray, n_boot: int = 1000, seed: int = 0
) -> BootstrapResult:
    """Paired bootstrap of WV(other) - WV(base); positive means 'other' is worth more.

    Lower realised costs mean higher water value, so the difference is
    (sum(base costs) - sum(other costs)) / sum(clim generation).
    """
    gens = np.array([c.envelope.clim_generation for c in cases])
    n = len(gens)
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, n, size=(n_boot, n))
    g_boot = gens[draws].sum(axis=1)
    reps = (totals_base[draws].sum(axis=1) - totals_other[draws].sum(axis=1)) / g_boot
    est = float((totals_base.sum() - totals_other.sum()) / gens.sum())
    se = float(reps.std(ddof=1))
    return BootstrapResult(est, se, est - 2 * se, est + 2 * se, n_boot)

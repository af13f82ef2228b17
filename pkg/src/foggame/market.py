"""Price/demand negotiation between one offloading user and M fog nodes.

Each round the user splits a fixed budget across nodes (closed-form optimal
demand given current prices), then every node adapts its price to climb its
own gain.  Optional multiplicative noise models imprecise play, and optional
signal averaging executes the running mean of each actor's noisy responses
instead of the latest one.

Two structural facts about this market shape the dynamics and are worth
stating up front:

* the budget-saturating demand makes node revenue ``price * demand``
  independent of the price, so node gain increases monotonically in price
  and rational prices climb to their caps (a boundary equilibrium), and
* noise therefore perturbs announced prices only downward from the cap,
  while demand noise is symmetric.

Noise is treated as execution noise: a node's adaptation state tracks its
own computed (pre-noise) prices, while the announced price — what the user
sees and pays — carries the perturbation and is projected back into
``[price_floor, price_cap]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean
from typing import Iterable, Literal, Sequence

import numpy as np
from scipy.optimize import brentq

# Noisy demands are floored here so log-utility stays defined.
DEMAND_FLOOR = 1e-9

PriceRule = Literal["gradient_ascent", "foc_root"]
PRICE_RULES = ("gradient_ascent", "foc_root")


def _broadcast(value, n: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        vec = (float(value),) * n
    else:
        vec = tuple(float(x) for x in value)
        if len(vec) != n:
            raise ValueError(f"{name} must have length {n}, got {len(vec)}")
    if any(not np.isfinite(x) for x in vec):
        raise ValueError(f"{name} must be finite")
    return vec


@dataclass(frozen=True)
class FogScenario:
    """Market constants plus loop controls for one negotiation.

    Per-node fields accept a scalar (broadcast to all nodes) or a sequence
    of length ``num_nodes``.  ``initial_prices`` defaults to the price
    floors; ``price_caps`` defaults to ten times the floors.  With
    ``averaging`` on, ``averaging_window`` limits the mean to the last so
    many responses; ``None`` keeps the default cumulative mean over the
    whole run.
    """

    num_nodes: int
    budget: float
    utility_scale: float = 1.0
    utility_weights: tuple[float, ...] | float = 1.0
    quality_factors: tuple[float, ...] | float = 1.0
    price_floors: tuple[float, ...] | float = 1.0
    margin_factors: tuple[float, ...] | float = 0.5
    initial_prices: tuple[float, ...] | float | None = None
    price_caps: tuple[float, ...] | float | None = None
    step_size: float = 8.0
    noise_level: float = 0.0
    averaging: bool = False
    averaging_window: int | None = None
    max_rounds: int = 2000
    convergence_tol: float = 1e-4
    convergence_window: int = 20

    def __post_init__(self) -> None:
        m = int(self.num_nodes)
        if m < 1:
            raise ValueError("num_nodes must be >= 1")
        object.__setattr__(self, "num_nodes", m)
        if not np.isfinite(self.budget) or self.budget <= 0:
            raise ValueError("budget must be positive")
        if not np.isfinite(self.utility_scale) or self.utility_scale <= 0:
            raise ValueError("utility_scale must be positive")

        weights = _broadcast(self.utility_weights, m, "utility_weights")
        quality = _broadcast(self.quality_factors, m, "quality_factors")
        floors = _broadcast(self.price_floors, m, "price_floors")
        margins = _broadcast(self.margin_factors, m, "margin_factors")
        if any(x <= 0 for x in weights):
            raise ValueError("utility_weights must be positive")
        if any(x <= 0 for x in quality):
            raise ValueError("quality_factors must be positive")
        if any(x <= 0 for x in floors):
            raise ValueError("price_floors must be positive")
        if any(not 0 < x <= 1 for x in margins):
            raise ValueError("margin_factors must lie in (0, 1]")

        if self.price_caps is None:
            caps = tuple(10.0 * f for f in floors)
        else:
            caps = _broadcast(self.price_caps, m, "price_caps")
        if any(c < f for c, f in zip(caps, floors)):
            raise ValueError("price_caps must be >= price_floors elementwise")

        if self.initial_prices is None:
            init = floors
        else:
            init = _broadcast(self.initial_prices, m, "initial_prices")
        if any(not f <= c0 <= c for c0, f, c in zip(init, floors, caps)):
            raise ValueError(
                "initial_prices must lie between price_floors and price_caps"
            )

        if not np.isfinite(self.step_size) or self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0.0 <= self.noise_level < 1.0:
            raise ValueError("noise_level must lie in [0, 1)")
        if self.averaging_window is not None and self.averaging_window < 1:
            raise ValueError("averaging_window must be >= 1 when set")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if not np.isfinite(self.convergence_tol) or self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be positive")
        if self.convergence_window < 2:
            raise ValueError("convergence_window must be >= 2")

        object.__setattr__(self, "utility_weights", weights)
        object.__setattr__(self, "quality_factors", quality)
        object.__setattr__(self, "price_floors", floors)
        object.__setattr__(self, "margin_factors", margins)
        object.__setattr__(self, "initial_prices", init)
        object.__setattr__(self, "price_caps", caps)

    @property
    def total_weight(self) -> float:
        return float(sum(self.utility_weights))


def default_scenario(**overrides) -> FogScenario:
    """The stock 1-user/4-node market used by the shipped configs."""
    base = dict(
        num_nodes=4,
        budget=10.0,
        utility_scale=1.0,
        utility_weights=(1.0, 0.8, 1.2, 0.6),
        quality_factors=(1.0, 1.5, 0.7, 2.0),
        price_floors=(1.0, 0.8, 1.2, 0.9),
        margin_factors=(0.5, 0.7, 0.4, 0.6),
        step_size=8.0,
    )
    base.update(overrides)
    return FogScenario(**base)


def _check_prices(scenario: FogScenario, prices: Sequence[float]) -> np.ndarray:
    c = np.asarray(list(prices), dtype=float)
    if c.shape != (scenario.num_nodes,):
        raise ValueError(f"expected {scenario.num_nodes} prices, got {c.shape}")
    floors = np.asarray(scenario.price_floors)
    if not np.all(np.isfinite(c)) or np.any(c < floors - 1e-12):
        raise ValueError("prices must be finite and >= price_floors")
    return c


def user_utility(
    scenario: FogScenario, demands: Sequence[float], prices: Sequence[float]
) -> float:
    """Log-quality benefit of the allocation minus its total cost."""
    c = _check_prices(scenario, prices)
    r = np.asarray(list(demands), dtype=float)
    if r.shape != c.shape:
        raise ValueError("demands and prices must have equal length")
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise ValueError("demands must be positive")
    alpha = np.asarray(scenario.utility_weights)
    beta = np.asarray(scenario.quality_factors)
    benefit = scenario.utility_scale * float(np.sum(alpha * np.log(r * beta)))
    return benefit - float(np.sum(c * r))


def fog_gain(scenario: FogScenario, node: int, price: float, demand: float) -> float:
    """Node margin over its floor price, damped by the node's margin factor."""
    if not 0 <= node < scenario.num_nodes:
        raise ValueError(f"node {node} out of range")
    if demand < 0 or not np.isfinite(demand):
        raise ValueError("demand must be nonnegative")
    floor = scenario.price_floors[node]
    if not np.isfinite(price) or price < floor - 1e-12:
        raise ValueError(f"price {price!r} below floor {floor} for node {node}")
    return scenario.margin_factors[node] * (price - floor) * demand


def optimal_demand(scenario: FogScenario, prices: Sequence[float]) -> np.ndarray:
    """Budget-saturating demand split.

    Node m receives ``budget * weight_m / (price_m * total_weight)``: the
    unique maximizer of the log-benefit among allocations spending the
    budget exactly.
    """
    c = _check_prices(scenario, prices)
    alpha = np.asarray(scenario.utility_weights)
    return scenario.budget * alpha / (c * scenario.total_weight)


def _own_demand(scenario: FogScenario, node: int, price: float) -> float:
    return (
        scenario.budget
        * scenario.utility_weights[node]
        / (price * scenario.total_weight)
    )


def inject_noise(value: float, noise_level: float, rng: np.random.Generator) -> float:
    """Multiply by ``1 + u`` with u drawn uniformly from ±noise_level."""
    if not 0.0 <= noise_level < 1.0:
        raise ValueError("noise_level must lie in [0, 1)")
    if not np.isfinite(value) or value <= 0:
        raise ValueError("value must be a positive real")
    return float(value) * (1.0 + rng.uniform(-noise_level, noise_level))


def signal_average(history: Sequence[float]) -> float:
    """Cumulative mean of all responses so far."""
    if len(history) == 0:
        raise ValueError("history must be nonempty")
    return fmean(history)


def price_update(
    scenario: FogScenario,
    node: int,
    history: Sequence[tuple[float, float]],
    rule: PriceRule = "gradient_ascent",
) -> float:
    """Next price for ``node`` from its (price, observed demand) history.

    ``gradient_ascent`` climbs a finite-difference slope of the node's gain
    between the last two history entries (a single entry probes upward by
    ``step_size * price_floor``); the result is projected onto
    ``[price_floor, price_cap]``.  ``foc_root`` searches the interval for a
    stationary point of the gain under the closed-form demand and, when none
    exists, returns the boundary price with the larger gain — for this
    demand model, the cap.
    """
    if not 0 <= node < scenario.num_nodes:
        raise ValueError(f"node {node} out of range")
    if rule not in PRICE_RULES:
        raise ValueError(f"unknown price rule {rule!r}")
    if len(history) == 0:
        raise ValueError("history must contain at least one (price, demand) entry")
    floor = scenario.price_floors[node]
    cap = scenario.price_caps[node]
    kappa = scenario.margin_factors[node]

    if rule == "gradient_ascent":
        price, _ = history[-1]
        if len(history) == 1:
            candidate = price + scenario.step_size * floor
        else:
            (c_prev, r_prev), (c_last, r_last) = history[-2], history[-1]
            delta_c = c_last - c_prev
            if abs(delta_c) <= 1e-12 * max(1.0, abs(c_last)):
                slope = 0.0
            else:
                g_prev = kappa * (c_prev - floor) * r_prev
                g_last = kappa * (c_last - floor) * r_last
                slope = (g_last - g_prev) / delta_c
            candidate = c_last + scenario.step_size * slope
        return float(min(max(candidate, floor), cap))

    # foc_root: gain'(c) = 0 with r(c) the closed-form demand reduces to
    # r(c) + kappa * (c - floor) * r'(c) = 0 where r'(c) = -r(c)/c.
    def stationarity(c: float) -> float:
        r = _own_demand(scenario, node, c)
        return r + kappa * (c - floor) * (-r / c)

    grid = np.linspace(floor, cap, 257)
    values = [stationarity(c) for c in grid]
    for a, b, fa, fb in zip(grid, grid[1:], values, values[1:]):
        if fa == 0.0:
            return float(a)
        if fa * fb < 0.0:
            return float(brentq(stationarity, a, b, xtol=1e-12))
    if values[-1] == 0.0:
        return float(grid[-1])

    def boundary_gain(c: float) -> float:
        return kappa * (c - floor) * _own_demand(scenario, node, c)

    return float(cap if boundary_gain(cap) >= boundary_gain(floor) else floor)


@dataclass(frozen=True)
class RoundState:
    """Executed market state of one round (1-based round numbering)."""

    round: int
    prices: tuple[float, ...]
    demands: tuple[float, ...]
    user_utility: float
    fog_gains: tuple[float, ...]


@dataclass(frozen=True)
class NegotiationTrace:
    """Complete record of one negotiation run."""

    scenario: FogScenario
    price_rule: PriceRule
    seed: int
    rounds: tuple[RoundState, ...]
    converged: bool
    convergence_round: int | None


class _ConvergenceMonitor:
    """Tracks consecutive rounds whose per-series relative change stays small.

    Convergence at round t means every price and demand series changed by
    less than ``tol`` (relative) between consecutive rounds across the whole
    trailing window ``[t - window + 1, t]``.
    """

    def __init__(self, tol: float, window: int):
        self.tol = tol
        self.window = window
        self.prev: np.ndarray | None = None
        self.quiet_pairs = 0

    def update(self, values: np.ndarray, round_number: int) -> bool:
        if self.prev is not None:
            denom = np.maximum(np.abs(self.prev), 1e-12)
            change = np.abs(values - self.prev) / denom
            if float(change.max()) < self.tol:
                self.quiet_pairs += 1
            else:
                self.quiet_pairs = 0
        self.prev = values.copy()
        return (
            round_number >= self.window and self.quiet_pairs >= self.window - 1
        )


def detect_convergence(
    trace: NegotiationTrace, conv_tol: float, conv_window: int
) -> tuple[bool, int | None]:
    """First round at which the trace satisfies the windowed quiet criterion."""
    if conv_tol <= 0:
        raise ValueError("conv_tol must be positive")
    if conv_window < 2:
        raise ValueError("conv_window must be >= 2")
    monitor = _ConvergenceMonitor(conv_tol, conv_window)
    for state in trace.rounds:
        values = np.asarray(state.prices + state.demands, dtype=float)
        if monitor.update(values, state.round):
            return True, state.round
    return False, None


def run_negotiation(
    scenario: FogScenario,
    price_rule: PriceRule = "gradient_ascent",
    seed: int = 0,
) -> NegotiationTrace:
    """Run the negotiation loop until convergence or ``max_rounds``.

    Round structure: the user best-responds to the prices in force (noise
    applied per component when enabled), then every node computes its next
    price (noise applied likewise).  With averaging on, each actor executes
    the cumulative mean of its own noisy responses instead of the latest
    sample.  Executed prices are projected onto ``[floor, cap]``; executed
    demands are floored at ``DEMAND_FLOOR``.  Output is a pure function of
    ``(scenario, price_rule, seed)``.
    """
    if price_rule not in PRICE_RULES:
        raise ValueError(f"unknown price rule {price_rule!r}")
    rng = np.random.default_rng(seed)
    m = scenario.num_nodes
    rho = scenario.noise_level
    floors = np.asarray(scenario.price_floors)
    caps = np.asarray(scenario.price_caps)

    prices_in_force = np.asarray(scenario.initial_prices, dtype=float)
    intended = prices_in_force.copy()  # node-side pre-noise adaptation state
    node_history: list[list[tuple[float, float]]] = [[] for _ in range(m)]
    demand_samples: list[np.ndarray] = []
    price_samples: list[np.ndarray] = []

    monitor = _ConvergenceMonitor(scenario.convergence_tol, scenario.convergence_window)
    rounds: list[RoundState] = []
    converged = False
    convergence_round: int | None = None

    for round_number in range(1, scenario.max_rounds + 1):
        desired = optimal_demand(scenario, prices_in_force)
        if rho > 0:
            noisy_demand = np.array(
                [inject_noise(x, rho, rng) for x in desired], dtype=float
            )
        else:
            noisy_demand = desired
        demand_samples.append(noisy_demand)
        if scenario.averaging:
            window = scenario.averaging_window
            pool = demand_samples if window is None else demand_samples[-window:]
            executed_demand = np.mean(pool, axis=0)
        else:
            executed_demand = noisy_demand
        executed_demand = np.maximum(executed_demand, DEMAND_FLOOR)

        gains = tuple(
            fog_gain(scenario, i, prices_in_force[i], executed_demand[i])
            for i in range(m)
        )
        rounds.append(
            RoundState(
                round=round_number,
                prices=tuple(float(x) for x in prices_in_force),
                demands=tuple(float(x) for x in executed_demand),
                user_utility=user_utility(scenario, executed_demand, prices_in_force),
                fog_gains=gains,
            )
        )

        values = np.concatenate([prices_in_force, executed_demand])
        if monitor.update(values, round_number):
            converged = True
            convergence_round = round_number
            break

        for i in range(m):
            node_history[i].append((float(intended[i]), float(executed_demand[i])))
        intended = np.array(
            [price_update(scenario, i, node_history[i], price_rule) for i in range(m)],
            dtype=float,
        )
        if rho > 0:
            noisy_price = np.array(
                [inject_noise(x, rho, rng) for x in intended], dtype=float
            )
        else:
            noisy_price = intended
        price_samples.append(noisy_price)
        if scenario.averaging:
            window = scenario.averaging_window
            pool = price_samples if window is None else price_samples[-window:]
            next_prices = np.mean(pool, axis=0)
        else:
            next_prices = noisy_price
        prices_in_force = np.clip(next_prices, floors, caps)

    return NegotiationTrace(
        scenario=scenario,
        price_rule=price_rule,
        seed=seed,
        rounds=tuple(rounds),
        converged=converged,
        convergence_round=convergence_round,
    )


@dataclass(frozen=True)
class ConfigMetrics:
    """Aggregates for one (noise_level, averaging) configuration."""

    noise_level: float
    averaging: bool
    num_traces: int
    convergence_rate: float
    mean_convergence_round: float | None
    mean_final_user_utility: float
    mean_final_fog_gain_total: float
    mean_instability_index: float

    def to_dict(self) -> dict:
        return {
            "noise_level": self.noise_level,
            "averaging": self.averaging,
            "num_traces": self.num_traces,
            "convergence_rate": self.convergence_rate,
            "mean_convergence_round": self.mean_convergence_round,
            "mean_final_user_utility": self.mean_final_user_utility,
            "mean_final_fog_gain_total": self.mean_final_fog_gain_total,
            "mean_instability_index": self.mean_instability_index,
        }


@dataclass(frozen=True)
class MarketSummary:
    """Per-configuration metrics over a batch of traces."""

    configs: tuple[ConfigMetrics, ...]

    def to_dict(self) -> dict:
        return {"configs": [c.to_dict() for c in self.configs]}


def instability_index(trace: NegotiationTrace) -> float:
    """Mean over nodes of std/mean of price over the trailing window."""
    window = trace.scenario.convergence_window
    tail = trace.rounds[-window:]
    prices = np.asarray([state.prices for state in tail], dtype=float)
    ratio = prices.std(axis=0, ddof=0) / prices.mean(axis=0)
    return float(ratio.mean())


def compute_metrics(traces: Iterable[NegotiationTrace]) -> MarketSummary:
    """Group traces by (noise_level, averaging) and aggregate final behavior."""
    batch = list(traces)
    if not batch:
        raise ValueError("compute_metrics needs at least one trace")
    groups: dict[tuple[float, bool], list[NegotiationTrace]] = {}
    for trace in batch:
        key = (trace.scenario.noise_level, trace.scenario.averaging)
        groups.setdefault(key, []).append(trace)

    configs = []
    for (rho, averaging) in sorted(groups, key=lambda k: (k[0], k[1])):
        members = groups[(rho, averaging)]
        finals = [t.rounds[-1] for t in members]
        rounds_converged = [
            t.convergence_round for t in members if t.converged
        ]
        configs.append(
            ConfigMetrics(
                noise_level=rho,
                averaging=averaging,
                num_traces=len(members),
                convergence_rate=sum(t.converged for t in members) / len(members),
                mean_convergence_round=(
                    fmean(rounds_converged) if rounds_converged else None
                ),
                mean_final_user_utility=fmean(s.user_utility for s in finals),
                mean_final_fog_gain_total=fmean(sum(s.fog_gains) for s in finals),
                mean_instability_index=fmean(instability_index(t) for t in members),
            )
        )
    return MarketSummary(configs=tuple(configs))


TRACE_COLUMNS = ("round", "node_id", "price", "demand", "user_utility", "fog_gain")


def write_trace_csv(trace: NegotiationTrace, path: str | Path) -> None:
    """One row per node per round; the user utility is repeated per round."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        for state in trace.rounds:
            for node in range(trace.scenario.num_nodes):
                writer.writerow(
                    [
                        state.round,
                        node,
                        repr(state.prices[node]),
                        repr(state.demands[node]),
                        repr(state.user_utility),
                        repr(state.fog_gains[node]),
                    ]
                )

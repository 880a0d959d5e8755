"""
Hidden-state inventory simulator.

Customer orders arrive as a Poisson stream; each one served takes a unit of
stock. Reaching zero stock records a stockout and blocks orders until the next
delivery. Falling to the reorder point with nothing on order places a
replenishment order that is delivered after a random lead time.
"""

import logging
from dataclasses import dataclass, asdict
from typing import List, Optional, Tuple

import numpy as np

from core.sequences import EventSequence
from error_handling import ConfigError
from utils.constants import (
    MARK_CUSTOMER_ORDER, MARK_REPLENISHMENT_ORDER, MARK_STOCK_ARRIVAL, MARK_STOCKOUT
)

EVENT_NAMES = {
    MARK_CUSTOMER_ORDER: 'customer_order',
    MARK_REPLENISHMENT_ORDER: 'replenishment_order',
    MARK_STOCK_ARRIVAL: 'stock_arrival',
    MARK_STOCKOUT: 'stockout',
}


@dataclass(frozen=True)
class SupplyChainConfig:
    t_max: float = 30.0
    initial_inventory: int = 10
    reorder_point: int = 5
    reorder_quantity: int = 15
    lead_mean: float = 4.0
    lead_std: float = 1.0
    min_lead: float = 0.5
    demand_rate_range: Tuple[float, float] = (1.5, 3.5)

    num_types = 4

    def __post_init__(self):
        object.__setattr__(self, 'demand_rate_range', tuple(float(r) for r in self.demand_rate_range))
        if not self.t_max > 0:
            raise ConfigError(f"t_max must be > 0 (got {self.t_max})")
        if not self.initial_inventory > self.reorder_point >= 0:
            raise ConfigError(
                f"Need initial_inventory > reorder_point >= 0 "
                f"(got {self.initial_inventory}, {self.reorder_point})")
        if self.reorder_quantity <= 0:
            raise ConfigError(f"reorder_quantity must be > 0 (got {self.reorder_quantity})")
        if not self.lead_mean > self.min_lead:
            raise ConfigError(f"lead_mean must exceed min_lead {self.min_lead} (got {self.lead_mean})")
        if self.lead_std < 0:
            raise ConfigError(f"lead_std must be >= 0 (got {self.lead_std})")
        low, high = self.demand_rate_range
        if not 0 < low <= high:
            raise ConfigError(f"demand_rate_range must satisfy 0 < low <= high (got {self.demand_rate_range})")

    @property
    def horizon(self) -> float:
        return self.t_max

    def sample(self, rng: np.random.Generator) -> EventSequence:
        return simulate_supply_chain(self, rng)[0]

    def describe(self) -> dict:
        data = asdict(self)
        data['demand_rate_range'] = list(self.demand_rate_range)
        data['marks'] = {str(k): v for k, v in EVENT_NAMES.items()}
        return data


@dataclass(frozen=True)
class InventoryState:
    """Hidden state right after one step of the simulation."""
    time: float
    inventory: int
    pending_arrival: Optional[float]
    stockout: bool
    marks: Tuple[int, ...] = ()


def simulate_supply_chain(config: SupplyChainConfig, rng: np.random.Generator):
    """
    Run one sequence.

    A delivery due no later than the next candidate order is processed first.
    Candidate orders and deliveries at or beyond t_max end the run.

    Returns:
        (EventSequence with K=4, list of InventoryState)
    """
    rate = rng.uniform(*config.demand_rate_range)
    t = 0.0
    inventory = config.initial_inventory
    pending: Optional[float] = None
    stockout = False
    times: List[float] = []
    marks: List[int] = []
    trace = [InventoryState(0.0, inventory, None, False)]

    while t < config.t_max:
        t_order = t + rng.exponential(1.0 / rate)

        if pending is not None and pending <= t_order:
            if pending >= config.t_max:
                break
            t = pending
            inventory += config.reorder_quantity
            pending = None
            stockout = False
            times.append(t)
            marks.append(MARK_STOCK_ARRIVAL)
            trace.append(InventoryState(t, inventory, None, False, (MARK_STOCK_ARRIVAL,)))
            continue

        if t_order >= config.t_max:
            break
        t = t_order

        if inventory <= 0:
            # orders are not served (or recorded) during a stockout
            continue

        step = [MARK_CUSTOMER_ORDER]
        inventory -= 1
        if inventory == 0 and not stockout:
            stockout = True
            step.append(MARK_STOCKOUT)
        if inventory <= config.reorder_point and pending is None:
            lead = max(config.min_lead, config.lead_mean + config.lead_std * rng.standard_normal())
            pending = t + lead
            step.append(MARK_REPLENISHMENT_ORDER)
        times.extend([t] * len(step))
        marks.extend(step)
        trace.append(InventoryState(t, inventory, pending, stockout, tuple(step)))

    logging.debug(f"Supply-chain run: rate={rate:.3f}, {len(times)} events")
    return EventSequence(times, marks, config.t_max, num_types=config.num_types), trace


def replenishment_lags(seq: EventSequence) -> np.ndarray:
    """Lag from each replenishment order to the delivery that follows it."""
    lags = []
    ordered_at = None
    for t, k in seq:
        if k == MARK_REPLENISHMENT_ORDER:
            ordered_at = t
        elif k == MARK_STOCK_ARRIVAL and ordered_at is not None:
            lags.append(t - ordered_at)
            ordered_at = None
    return np.asarray(lags, dtype=np.float64)

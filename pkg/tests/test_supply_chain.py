"""Tests for the inventory simulator."""

import numpy as np
import pytest

from core.supply_chain import SupplyChainConfig, replenishment_lags, simulate_supply_chain
from error_handling import ConfigError
from utils.constants import (
    MARK_CUSTOMER_ORDER, MARK_REPLENISHMENT_ORDER, MARK_STOCK_ARRIVAL, MARK_STOCKOUT
)
from utils.random_streams import derive_rng


@pytest.fixture(scope='module')
def runs():
    config = SupplyChainConfig()
    return [simulate_supply_chain(config, derive_rng(0, i)) for i in range(200)]


class TestSupplyChain:

    def test_marks_within_alphabet(self, runs):
        for seq, _ in runs:
            assert set(seq.marks) <= {MARK_CUSTOMER_ORDER, MARK_REPLENISHMENT_ORDER,
                                      MARK_STOCK_ARRIVAL, MARK_STOCKOUT}
            assert all(t < 30.0 for t in seq.times)

    def test_first_reorder_at_fifth_order(self, runs):
        """Inventory 10 reaches the reorder point 5 on the fifth customer order."""
        checked = 0
        for seq, _ in runs:
            orders = [t for t, k in seq if k == MARK_CUSTOMER_ORDER]
            reorders = [t for t, k in seq if k == MARK_REPLENISHMENT_ORDER]
            if len(orders) >= 5:
                assert reorders and reorders[0] == orders[4]
                checked += 1
        assert checked > 150

    def test_no_orders_served_during_stockout(self, runs):
        for seq, _ in runs:
            out = False
            for t, k in seq:
                if k == MARK_STOCKOUT:
                    out = True
                elif k == MARK_STOCK_ARRIVAL:
                    out = False
                elif k == MARK_CUSTOMER_ORDER:
                    assert not out

    def test_stockout_recorded_with_the_order(self, runs):
        seen = 0
        for seq, trace in runs:
            for state in trace:
                if MARK_STOCKOUT in state.marks:
                    assert state.inventory == 0
                    assert state.marks[0] == MARK_CUSTOMER_ORDER
                    seen += 1
        assert seen > 0

    def test_one_stockout_per_episode(self, runs):
        """Replaying the trace, each drop to zero inventory carries exactly one stockout."""
        episodes = 0
        for _, trace in runs:
            previous = trace[0].inventory
            for state in trace[1:]:
                marked = state.marks.count(MARK_STOCKOUT)
                if previous > 0 and state.inventory == 0:
                    assert marked == 1
                    episodes += 1
                else:
                    assert marked == 0
                previous = state.inventory
        assert episodes > 20

    def test_inventory_never_negative(self, runs):
        for _, trace in runs:
            assert all(state.inventory >= 0 for state in trace)

    def test_one_replenishment_outstanding(self, runs):
        for seq, _ in runs:
            pending = 0
            for _, k in seq:
                if k == MARK_REPLENISHMENT_ORDER:
                    pending += 1
                elif k == MARK_STOCK_ARRIVAL:
                    pending -= 1
                assert pending in (0, 1)

    def test_lead_times(self, runs):
        lags = np.concatenate([replenishment_lags(seq) for seq, _ in runs])
        assert lags.size > 100
        assert np.all(lags >= 0.5)

    def test_mean_lead_time(self):
        # a long horizon keeps end-of-window censoring out of the mean
        config = SupplyChainConfig(t_max=300.0)
        lags = np.concatenate([replenishment_lags(simulate_supply_chain(config, derive_rng(1, i))[0])
                               for i in range(20)])
        assert lags.mean() == pytest.approx(4.0, abs=0.2)

    def test_deterministic(self):
        config = SupplyChainConfig(t_max=20.0)
        a, _ = simulate_supply_chain(config, derive_rng(3))
        b, _ = simulate_supply_chain(config, derive_rng(3))
        assert a == b

    @pytest.mark.parametrize('kwargs', [
        {'t_max': 0.0},
        {'initial_inventory': 5, 'reorder_point': 5},
        {'reorder_quantity': 0},
        {'lead_mean': 0.2},
        {'demand_rate_range': (3.0, 1.0)},
    ])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigError):
            SupplyChainConfig(**kwargs)

    def test_describe_names_marks(self):
        info = SupplyChainConfig().describe()
        assert info['marks'][str(MARK_STOCKOUT)] == 'stockout'
        assert info['demand_rate_range'] == [1.5, 3.5]

import numpy as np
import pytest

from flexsim.errors import ScheduleRegressionError, ValidationError
from flexsim.market import (
    MarketSlice,
    apply_shift,
    expected_cost,
    forecast_loss,
    regulation_cost,
    regulation_price,
    savings,
)
from flexsim.synth import gen_market


def modeled_slice(spot, m):
    return MarketSlice(spot=np.asarray(spot, dtype=float), m=np.asarray(m, dtype=float))


class TestRegulationPrice:
    def test_balanced_is_spot(self):
        assert regulation_price(123.4) == 123.4

    def test_up_regulation_fixture(self):
        # 100 * (1 + 0.238) + 0.0034 * 100 * 100 = 157.8
        assert regulation_price(100.0, v_u=100.0) == pytest.approx(157.8, rel=1e-12)

    def test_down_regulation_fixture(self):
        # 100 - 33.4 - 4.2 = 62.4
        assert regulation_price(100.0, v_d=-84.0) == pytest.approx(62.4, rel=1e-12)

    def test_both_directions_rejected(self):
        with pytest.raises(ValidationError):
            regulation_price(100.0, v_u=10.0, v_d=-10.0)

    def test_up_price_increases_with_volume(self, rng):
        vols = np.sort(rng.uniform(0.1, 500, 30))
        prices = [regulation_price(80.0, v_u=v) for v in vols]
        assert (np.diff(prices) > 0).all()

    def test_down_price_decreases_with_magnitude(self, rng):
        vols = np.sort(rng.uniform(0.1, 500, 30))
        prices = [regulation_price(80.0, v_d=-v) for v in vols]
        assert (np.diff(prices) < 0).all()


class TestRegulationCost:
    def test_zero_volumes(self):
        v = modeled_slice([100.0, 90.0], [0.0, 0.0])
        assert regulation_cost(v, "modeled") == 0.0

    def test_table_row_observed(self):
        v = MarketSlice(
            spot=np.array([113.0]),
            m=np.array([200.0]),
            p_up_obs=np.array([222.43]),
            p_down_obs=np.array([113.0]),
        )
        # 200 * |222.43 - 113| = 21886
        assert regulation_cost(v, "observed") == pytest.approx(21886.0, rel=1e-12)

    def test_additive_over_hours(self, rng):
        spot = rng.uniform(50, 150, 2)
        m = rng.uniform(-50, 50, 2)
        both = regulation_cost(modeled_slice(spot, m), "modeled")
        single = sum(
            regulation_cost(modeled_slice(spot[i : i + 1], m[i : i + 1]), "modeled")
            for i in range(2)
        )
        assert both == pytest.approx(single, rel=1e-12)


class TestApplyShift:
    def test_example(self):
        m = np.array([10.0, -10.0])
        out = apply_shift(m, 0, 1, 5.0)
        assert out.tolist() == [5.0, -5.0]
        assert np.abs(out).sum() == 10.0

    def test_zero_energy(self):
        m = np.array([3.0, -1.0])
        assert apply_shift(m, 0, 1, 0.0).tolist() == [3.0, -1.0]

    def test_same_hour_identity(self):
        m = np.array([3.0, -1.0])
        assert apply_shift(m, 1, 1, 2.5).tolist() == [3.0, -1.0]

    def test_conserves_signed_sum(self, rng):
        for _ in range(30):
            k = int(rng.integers(2, 10))
            m = rng.uniform(-20, 20, k)
            out = apply_shift(
                m, int(rng.integers(0, k)), int(rng.integers(0, k)), float(rng.uniform(0, 5))
            )
            assert out.sum() == pytest.approx(m.sum(), abs=1e-9)

    def test_brute_force_best_placement(self):
        # moving 5 from the up-regulated hour into the down-regulated hour is
        # the best of the two feasible placements
        m = np.array([10.0, -10.0])
        outcomes = {to: np.abs(apply_shift(m, 0, to, 5.0)).sum() for to in (0, 1)}
        assert outcomes[1] == min(outcomes.values())
        assert outcomes[1] == 10.0


class TestExpectedCost:
    def test_no_shift_equals_cost(self, rng):
        spot = rng.uniform(50, 150, 4)
        m = rng.uniform(-20, 20, 4)
        v = modeled_slice(spot, m)
        assert expected_cost(v, v.m, "modeled") == pytest.approx(
            regulation_cost(v, "modeled"), rel=1e-12
        )

    def test_shift_example_via_price_oracle(self):
        # m = [+10, -10], shift 5 from hour 0 to hour 1 -> m_bar = [+5, -5];
        # expected cost recomputed from the price model at the new volumes
        v = modeled_slice([100.0, 100.0], [10.0, -10.0])
        m_bar = apply_shift(v.m, 0, 1, 5.0)
        p_up = regulation_price(100.0, v_u=5.0)
        p_down = regulation_price(100.0, v_d=-5.0)
        assert p_up == pytest.approx(125.5, rel=1e-12)
        assert p_down == pytest.approx(66.35, rel=1e-12)
        want = 5.0 * (p_up - 100.0) + 5.0 * (100.0 - p_down)
        got = expected_cost(v, m_bar, "modeled")
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(295.75, rel=1e-12)

    def test_full_cancellation(self):
        v = modeled_slice([100.0, 100.0], [4.0, -4.0])
        assert expected_cost(v, np.zeros(2), "modeled") == 0.0


class TestForecastLoss:
    def test_zero_when_forecast_exact(self, rng):
        k = 6
        v = modeled_slice(rng.uniform(50, 150, k), rng.uniform(-20, 20, k))
        f = rng.uniform(0, 3, k)
        assert forecast_loss(f, f.copy(), v, "modeled") == 0.0

    def test_false_negative_fixture(self):
        # f=2, fhat=0, v_u=100, spot=100: deviation term 2*57.8, volume term
        # 100*|p(102)-100|
        v = modeled_slice([100.0], [100.0])
        spread = regulation_price(100.0, v_u=100.0) - 100.0
        p_new = regulation_price(100.0, v_u=102.0)
        want = 2.0 * spread + 100.0 * (p_new - 100.0)
        got = forecast_loss(np.array([2.0]), np.array([0.0]), v, "modeled")
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(5963.6, rel=1e-9)

    def test_false_positive_fixture(self):
        v = modeled_slice([100.0], [100.0])
        spread = regulation_price(100.0, v_u=100.0) - 100.0
        p_new = regulation_price(100.0, v_u=98.0)
        want = 2.0 * spread + 100.0 * (p_new - 100.0)
        got = forecast_loss(np.array([0.0]), np.array([2.0]), v, "modeled")
        assert got == pytest.approx(want, rel=1e-12)
        assert got == pytest.approx(5827.6, rel=1e-9)

    def test_zero_iff_equal_with_nonzero_spreads(self, rng):
        for _ in range(20):
            k = int(rng.integers(1, 8))
            m = rng.choice([-1.0, 1.0], k) * rng.uniform(1, 30, k)
            v = modeled_slice(rng.uniform(50, 150, k), m)
            f = rng.uniform(0.5, 3, k)
            fh = f.copy()
            j = int(rng.integers(0, k))
            fh[j] += 0.25
            assert forecast_loss(f, f.copy(), v, "modeled") == 0.0
            assert forecast_loss(f, fh, v, "modeled") > 0.0

    def test_marginal_mode_charges_price_change_only(self):
        v = modeled_slice([100.0], [100.0])
        spread = regulation_price(100.0, v_u=100.0) - 100.0
        p_new = regulation_price(100.0, v_u=102.0)
        p_old = regulation_price(100.0, v_u=100.0)
        want = 2.0 * spread + 100.0 * (p_new - p_old)
        got = forecast_loss(np.array([2.0]), np.array([0.0]), v, "modeled", loss_mode="marginal")
        assert got == pytest.approx(want, rel=1e-12)
        assert got < 200.0  # far below the literal 5963.6

    def test_balanced_hour_is_free(self):
        v = modeled_slice([100.0], [0.0])
        assert forecast_loss(np.array([2.0]), np.array([0.0]), v, "modeled") == 0.0


class TestSavings:
    def test_no_op(self):
        v = modeled_slice([100.0], [10.0])
        rep = savings(v, v.m, loss=0.0, price_mode="modeled")
        assert rep.delta_R == 0.0 and rep.net == 0.0
        assert rep.R == rep.E

    def test_full_gain(self):
        v = MarketSlice(
            spot=np.array([113.0]),
            m=np.array([200.0]),
            p_up_obs=np.array([222.43]),
            p_down_obs=np.array([113.0]),
        )
        rep = savings(v, np.zeros(1), loss=0.0, price_mode="observed")
        assert rep.R == pytest.approx(21886.0)
        assert rep.E == 0.0
        assert rep.delta_R == pytest.approx(21886.0)

    def test_negative_net(self):
        v = modeled_slice([100.0, 100.0], [10.0, -10.0])
        m_bar = apply_shift(v.m, 0, 1, 5.0)
        rep = savings(v, m_bar, loss=rep_loss(v), price_mode="modeled")
        assert rep.net == pytest.approx(rep.delta_R - rep.L)

    def test_regression_rejected(self):
        v = modeled_slice([100.0, 100.0], [5.0, -5.0])
        worse = np.array([15.0, -15.0])  # same signed sum, higher cost
        with pytest.raises(ScheduleRegressionError):
            savings(v, worse, loss=0.0, price_mode="modeled")


def rep_loss(v):
    return 150.0


class TestPriceModeConsistency:
    def test_synth_modeled_market_matches_columns(self):
        market = gen_market(days=3, seed=9, imbalance_scale=5.0, price_style="modeled")
        sl = MarketSlice.from_series(market, 0, len(market))
        observed = regulation_cost(sl, "observed")
        modeled = regulation_cost(sl, "modeled")
        assert observed == pytest.approx(modeled, rel=1e-12)

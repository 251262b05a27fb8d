import math

import numpy as np
import pytest

from csrisk.bsde import risk_measure
from csrisk.drivers import CsermDriver, EntropicDriver, LinearAmbiguousDriver, LinearDriver, ZeroDriver
from csrisk.errors import ConfigurationError, LatticeIndexError, LayoutError, ScenarioInfeasibleError
from csrisk.lattice import LatticeModel
from csrisk.scenario import (Scenario, dual_check, discount_between, extract_scenario, penalty_at,
                             scenario_density, scenario_value, subdifferential_test, tilted_discounted)

from _oracles import move_paths, path_index, scenario_price


def _entropic_hand():
    m = LatticeModel.build(1.0, 2, "path")
    X = -m.terminal_brownian()
    rho = risk_measure(m, EntropicDriver(1.0), X)
    return m, X, rho, extract_scenario(EntropicDriver(1.0), rho)


def test_extract_examples():
    m, X, rho, sc = _entropic_hand()
    assert np.all(m.at(sc.mu, 0) == -1.0) and np.all(m.at(sc.mu, 1) == -1.0)
    assert np.all(sc.beta[: m.offset(2)] == 0.0)
    zero = extract_scenario(ZeroDriver(), risk_measure(m, ZeroDriver(), X))
    assert np.all(zero.beta[:3] == 0) and np.all(zero.mu[:3] == 0)
    la = extract_scenario(LinearAmbiguousDriver(0.05, 0.1), risk_measure(m, LinearAmbiguousDriver(0.05, 0.1), -1.0))
    assert np.all(la.beta[:3] == 0.05)


def test_discount_between_examples():
    m = LatticeModel.build(1.0, 4, "node")
    flat = Scenario(m, ZeroDriver(), m.constant_field(0.05), m.constant_field(0.0))
    np.testing.assert_allclose(discount_between(flat, 0, 4), (1 + 0.05 * 0.25) ** -4)
    expo = Scenario(m, ZeroDriver(), m.constant_field(0.05), m.constant_field(0.0), convention="exponential")
    np.testing.assert_allclose(discount_between(expo, 0, 4), math.exp(-0.05), rtol=1e-15)
    assert np.all(discount_between(flat, 2, 2) == 1.0)
    none = Scenario(m, ZeroDriver(), m.constant_field(0.0), m.constant_field(0.0))
    assert np.all(discount_between(none, 0, 3) == 1.0)
    with pytest.raises(LatticeIndexError):
        discount_between(flat, 3, 1)
    with pytest.raises(ConfigurationError):
        Scenario(m, ZeroDriver(), m.constant_field(0.0), m.constant_field(0.0), convention="daily")


def test_discount_stochastic_beta_needs_path_layout():
    node = LatticeModel.build(1.0, 3, "node")
    sc = Scenario(node, ZeroDriver(), node.field_from(lambda k, B: 0.1 + 0.05 * np.abs(B)), node.constant_field(0.0))
    with pytest.raises(LayoutError):
        discount_between(sc, 0, 3)
    path = LatticeModel.build(1.0, 3, "path")
    beta = path.field_from(lambda k, B: 0.1 + 0.05 * np.abs(B))
    sc = Scenario(path, ZeroDriver(), beta, path.constant_field(0.0))
    d = discount_between(sc, 0, 3)
    for p in move_paths(3):
        expected = 1.0
        for k in range(3):
            B = math.sqrt(1 / 3) * sum(p[:k])
            expected /= 1 + (0.1 + 0.05 * abs(B)) / 3
        assert d[path_index(p)] == pytest.approx(expected, rel=1e-14)


def test_density_examples():
    m = LatticeModel.build(1.0, 3, "path")
    plain = scenario_density(Scenario(m, ZeroDriver(), m.constant_field(0.0), m.constant_field(0.0)), 0)
    assert np.all(plain.values == 1.0)
    disc = scenario_density(Scenario(m, ZeroDriver(), m.constant_field(0.05), m.constant_field(0.0),
                                     convention="exponential"), 0)
    np.testing.assert_allclose(disc.values, math.exp(-0.05), rtol=1e-14)
    one = LatticeModel.build(1.0, 1, "path")
    sc = Scenario(one, EntropicDriver(1.0), one.constant_field(0.0), one.constant_field(-1.0))
    dens = scenario_density(sc, 0)
    np.testing.assert_allclose(dens.tilt_density, [0.0, 2.0])
    assert one.block_mean(dens.tilt_density, 0)[0] == 1.0


def test_penalty_examples():
    m, X, rho, sc = _entropic_hand()
    assert abs(penalty_at(sc, 0)[0] - 0.5) <= 1e-12
    la = LinearAmbiguousDriver(0.05, 0.1)
    sc_la = extract_scenario(la, risk_measure(m, la, np.sin(m.terminal_brownian())))
    assert np.all(penalty_at(sc_la, 0) == 0.0)
    sc_zero = extract_scenario(ZeroDriver(), risk_measure(m, ZeroDriver(), X))
    assert np.all(penalty_at(sc_zero, 1) == 0.0)


def test_dual_chain_hand_instance():
    m, X, rho, sc = _entropic_hand()
    assert abs(tilted_discounted(sc, m.terminal_brownian(), 0)[0] - 1.0) <= 1e-12
    assert dual_check(sc, X, 0)[0] <= 1e-10
    for t in range(3):
        assert np.max(dual_check(sc, X, t)) <= 1e-12


@pytest.mark.parametrize("driver", [ZeroDriver(), LinearAmbiguousDriver(0.05, 0.1), EntropicDriver(0.8),
                                    CsermDriver(0.15, 1.2), LinearDriver(0.1, 0.4)], ids=lambda d: d.name)
def test_dual_gap_vanishes(driver):
    m = LatticeModel.build(1.0, 6, "path")
    X = 0.25 * np.tanh(2 * m.terminal_brownian() - 0.3)
    sc = extract_scenario(driver, risk_measure(m, driver, X))
    for t in range(7):
        assert np.max(dual_check(sc, X, t)) <= 1e-12


def test_scenario_value_matches_path_sum_oracle():
    N, T = 4, 1.0
    m = LatticeModel.build(T, N, "path")
    beta = m.field_from(lambda k, B: 0.1 + 0.1 * np.tanh(B))
    mu = m.field_from(lambda k, B: 0.4 * np.sin(B + k))
    G = m.field_from(lambda k, B: 0.2 + B * B)

    class FixedG(ZeroDriver):
        def conjugate(self, model, k, b, mm, state=None):
            return model.at(G, k)

    sc = Scenario(m, FixedG(), beta, mu)
    payoff = np.cos(m.terminal_brownian()) + np.arange(2 ** N) / 16
    values = scenario_value(sc, payoff)

    def field_at(f):
        return lambda k, pre: m.at(f, k)[path_index(pre)]

    for t in range(N + 1):
        for pre in {p[:t] for p in move_paths(N)}:
            expected = scenario_price(N, T, field_at(beta), field_at(mu),
                                      lambda path: payoff[path_index(path)], field_at(G), pre)
            assert m.at(values, t)[path_index(pre)] == pytest.approx(expected, abs=1e-13)
    # node layout, deterministic scenario, same answer as path layout
    node = LatticeModel.build(T, N, "node")
    det = Scenario(node, ZeroDriver(), node.constant_field(0.07), node.constant_field(0.3))
    detp = Scenario(m, ZeroDriver(), m.constant_field(0.07), m.constant_field(0.3))
    f = lambda B: np.exp(-B)
    assert scenario_value(det, f(node.terminal_brownian()), penalized=False)[0] == pytest.approx(
        scenario_value(detp, f(m.terminal_brownian()), penalized=False)[0], abs=1e-14)


def test_infeasible_scenarios():
    m = LatticeModel.build(1.0, 4, "path")
    with pytest.raises(ScenarioInfeasibleError):
        Scenario(m, ZeroDriver(), m.constant_field(-0.1), m.constant_field(0.0))
    sc = Scenario(m, ZeroDriver(), m.constant_field(0.0), m.constant_field(3.0))
    with pytest.raises(ScenarioInfeasibleError):
        sc.tilt()
    la = LinearAmbiguousDriver(0.05, 0.1)
    out = Scenario(m, la, m.constant_field(0.5), m.constant_field(0.0))
    with pytest.raises(ScenarioInfeasibleError, match="step 0"):
        out.penalty_rate()


@pytest.mark.parametrize("driver", [ZeroDriver(), LinearAmbiguousDriver(0.02, 0.15), EntropicDriver(1.0),
                                    CsermDriver(0.1, 1.5), LinearDriver(0.05, -0.3)], ids=lambda d: d.name)
def test_subdifferential_membership(driver):
    m = LatticeModel.build(1.0, 6, "path")
    rng = np.random.default_rng(11)
    Y = 0.3 * np.tanh(m.terminal_brownian())
    sc = extract_scenario(driver, risk_measure(m, driver, Y))
    samples = [0.3 * rng.uniform(-1, 1, 64) for _ in range(20)]
    for t in (0, 3, 6):
        assert subdifferential_test(sc, Y, samples, t) >= -1e-12
    assert subdifferential_test(sc, Y, [Y], 2) == pytest.approx(0.0, abs=1e-15)

import numpy as np
import pytest

from csrisk.drivers import (CsermDriver, CustomDriver, EntropicDriver, LinearAmbiguousDriver, LinearDriver,
                            ZeroDriver, conjugate_numeric, driver_from_config, validate_flags)
from csrisk.errors import CapabilityError, ConfigurationError
from csrisk.lattice import LatticeModel

BUILTINS = [ZeroDriver(), LinearAmbiguousDriver(0.05, 0.1), EntropicDriver(1.5), CsermDriver(0.1, 0.8),
            LinearDriver(0.07, -0.4)]


def test_evaluate_examples():
    assert ZeroDriver().evaluate(None, 0, 3.0, -2.0) == 0.0
    assert EntropicDriver(1.0).evaluate(None, 0, 0.0, 1.0) == 0.5
    assert LinearAmbiguousDriver(0.05, 0.1).evaluate(None, 0, 1.0, 0.0) == pytest.approx(-0.05)


def test_select_scenario_examples():
    b, m = EntropicDriver(2.0).select_scenario(None, 0, 0.0, 1.0)
    assert (b, m) == (0.0, -0.5)
    la = LinearAmbiguousDriver(0.05, 0.1)
    assert la.select_scenario(None, 0, -1.0, 0.0)[0] == 0.1
    assert la.select_scenario(None, 0, 0.0, 0.0)[0] == 0.05  # tie goes to r


def test_conjugate_examples():
    assert EntropicDriver(2.0).conjugate(None, 0, 0.0, 1.0) == pytest.approx(1.0)
    la = LinearAmbiguousDriver(0.05, 0.1)
    assert la.conjugate(None, 0, 0.07, 0.0) == 0.0
    assert la.conjugate(None, 0, 0.2, 0.0) == np.inf


def test_conjugate_numeric_examples():
    val = conjugate_numeric(EntropicDriver(1.0), 0, 0.0, 1.0, {"z": (-4, 4)}, (2, 100001))
    assert val == pytest.approx(0.5, abs=1e-4)
    assert conjugate_numeric(ZeroDriver(), 0, 0.0, 0.0, {"y": (-1, 1)}, 11) == 0.0
    assert conjugate_numeric(ZeroDriver(), 0, 1.0, 0.0, {"y": (-1, 1)}, 11) == 1.0
    with pytest.raises(ConfigurationError):
        conjugate_numeric(ZeroDriver(), 0, 0.0, 0.0, {"y": (1, -1)}, 11)


@pytest.mark.parametrize("driver", BUILTINS, ids=lambda d: d.name)
def test_young_fenchel_equality_at_selected_scenario(driver):
    rng = np.random.default_rng(3)
    y, z = rng.normal(size=50), rng.normal(size=50)
    b, m = driver.select_scenario(None, 0, y, z)
    lhs = driver.evaluate(None, 0, y, z) + b * y + m * z + driver.conjugate(None, 0, b, m)
    np.testing.assert_allclose(lhs, 0.0, atol=1e-12)
    # and the Fenchel inequality at other points
    y2, z2 = rng.normal(size=50), rng.normal(size=50)
    assert np.all(driver.evaluate(None, 0, y2, z2) + b * y2 + m * z2 + driver.conjugate(None, 0, b, m) >= -1e-12)


@pytest.mark.parametrize("driver", BUILTINS, ids=lambda d: d.name)
def test_closed_form_implicit_step_solves_fixed_point(driver):
    model = LatticeModel.build(1.0, 4, "node")
    rng = np.random.default_rng(0)
    e, z = rng.normal(size=3), rng.normal(size=3)
    y = driver.implicit_step(model, 2, e, z)
    np.testing.assert_allclose(y, e + driver.evaluate(model, 2, y, z) * model.delta, atol=1e-14)


def test_validate_flags_examples():
    ent = validate_flags(EntropicDriver(1.0), 200, 0)
    assert ent.measured["convex"] and ent.measured["decreasing_in_y"]
    assert not ent.measured["positively_homogeneous"]
    la = validate_flags(LinearAmbiguousDriver(0.05, 0.1), 200, 0)
    assert la.measured["positively_homogeneous"] and la.measured["subadditive"] and la.ok
    zero = validate_flags(ZeroDriver(), 50, 0)
    assert all(v for k, v in zero.measured.items() if k != "depends_on_y") and zero.ok
    for d in BUILTINS:
        assert validate_flags(d, 100, 1).ok, d.name


def test_validate_flags_catches_false_declaration():
    liar = CustomDriver(lambda k, y, z: -z * z, convex=True, lipschitz_y=0.0, lipschitz_z=10.0)
    rep = validate_flags(liar, 100, 0, scale=1.0)
    assert not rep.ok and any("convex" in v for v in rep.violations)


def test_field_parameters_need_model():
    model = LatticeModel.build(1.0, 2, "node")
    beta = model.field_from(lambda k, B: 0.1 + 0.0 * B)
    d = CsermDriver(beta, 1.0)
    assert np.all(d.evaluate(model, 1, np.ones(2), np.zeros(2)) == pytest.approx(-0.1))
    with pytest.raises(ConfigurationError):
        d.evaluate(None, 1, 1.0, 0.0)


def test_parameter_validation():
    with pytest.raises(ConfigurationError):
        LinearAmbiguousDriver(0.1, 0.05)
    with pytest.raises(ConfigurationError):
        LinearAmbiguousDriver(-0.1, 0.05)
    with pytest.raises(ConfigurationError):
        EntropicDriver(0.0)
    with pytest.raises(ConfigurationError):
        CsermDriver(-0.1, 1.0)


def test_custom_driver_fallbacks():
    d = CustomDriver(lambda k, y, z: z * z / 2.0, depends_on_y=False, box={"z": (-3, 3)}, grid_points=6001)
    b, m = d.select_scenario(None, 0, 0.0, 1.0)
    assert b == pytest.approx(0.0, abs=1e-8) and m == pytest.approx(-1.0, abs=1e-8)
    assert d.conjugate(None, 0, 0.0, -1.0) == pytest.approx(0.5, abs=1e-6)
    bare = CustomDriver(lambda k, y, z: 0.0 * z, allow_fallback=False)
    with pytest.raises(CapabilityError):
        bare.select_scenario(None, 0, 0.0, 0.0)
    with pytest.raises(CapabilityError):
        bare.conjugate(None, 0, 0.0, 0.0)


def test_driver_from_config():
    model = LatticeModel.build(1.0, 2, "node")
    assert isinstance(driver_from_config({"type": "zero"}), ZeroDriver)
    la = driver_from_config({"type": "linear_ambiguous", "r": 0.05, "R": 0.1})
    assert (la.r, la.R) == (0.05, 0.1)
    c = driver_from_config({"type": "cserm", "beta": [0.1, 0.2], "gamma": 1.0}, model)
    assert model.at(c.beta, 1).tolist() == [0.2, 0.2]
    lg = driver_from_config({"type": "linear_generic", "beta": 0.0, "lambda": 0.3})
    assert lg.name == "linear_generic"
    for bad in ({"type": "entropic"}, {"type": "nope"}, {"gamma": 1.0}, {"type": "entropic", "gamma": "x"}):
        with pytest.raises(ConfigurationError):
            driver_from_config(bad)

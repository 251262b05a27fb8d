"""Optimal scenarios (beta, mu) of a solved risk measure and the objects built on them.

A scenario turns into a discount D(i, k) = prod_{m=i}^{k-1} d_m and a tilted
measure with up-probability (1 - mu sqrt(delta)) / 2.  With the default
"implicit" convention d_m = 1 / (1 + beta_m delta), which is exactly the
factor produced by the implicit BSDE step, so

    rho_t = E_Q[D(t, N) (-X) | F_t] - E_Q[sum_k D(t, k+1) G(beta_k, mu_k) delta | F_t]

holds on the lattice to rounding.  The "exponential" convention
d_m = exp(-beta_m delta) is kept for comparison; it is only first-order close.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .bsde import risk_measure
from .errors import (ConfigurationError, LatticeIndexError, LayoutError,
                     ScenarioInfeasibleError, TiltError)
from .lattice import tilt_probabilities

DISCOUNT_CONVENTIONS = ("implicit", "exponential")


@dataclass
class Scenario:
    model: object
    driver: object
    beta: np.ndarray
    mu: np.ndarray
    source: object = None
    convention: str = "implicit"

    def __post_init__(self):
        if self.convention not in DISCOUNT_CONVENTIONS:
            raise ConfigurationError(f"discount convention must be one of {DISCOUNT_CONVENTIONS}")
        if np.any(self.beta[: self.model.offset(self.model.N)] < 0):
            raise ScenarioInfeasibleError("scenario discount rate beta must be >= 0")

    @property
    def step_discount(self):
        delta = self.model.delta
        beta = np.nan_to_num(self.beta, nan=0.0)
        if self.convention == "implicit":
            d = 1.0 / (1.0 + beta * delta)
        else:
            d = np.exp(-beta * delta)
        self.model.at(d, self.model.N)[:] = 1.0
        return d

    def tilt(self):
        try:
            return tilt_probabilities(self.model, np.nan_to_num(self.mu, nan=0.0), strict=False)
        except TiltError as exc:
            raise ScenarioInfeasibleError(f"scenario drift gives an invalid measure: {exc}") from exc

    def penalty_rate(self):
        """G(t_k, beta_k, mu_k) as a flat field (0 at step N)."""
        model = self.model
        G = np.zeros(model.size)
        for k in range(model.N):
            g = np.asarray(self.driver.conjugate(model, k, model.at(self.beta, k), model.at(self.mu, k)),
                           dtype=float)
            if not np.all(np.isfinite(g)):
                s = int(np.argmax(~np.isfinite(g)))
                raise ScenarioInfeasibleError(
                    f"conjugate is +inf along the scenario at step {k}, state {s}"
                )
            model.at(G, k)[:] = g
        return G


def extract_scenario(driver, rho_solution, convention="implicit"):
    """Subgradient selection along (rho_k, Z_k) at every step-k state, k < N."""
    model = rho_solution.model
    beta = model.blank()
    mu = model.blank()
    for k in range(model.N):
        b, m = driver.select_scenario(model, k, rho_solution.y(k), rho_solution.z(k))
        n = model.n_states(k)
        model.at(beta, k)[:] = np.broadcast_to(b, (n,))
        model.at(mu, k)[:] = np.broadcast_to(m, (n,))
    return Scenario(model, driver, beta, mu, rho_solution, convention)


def _check_range(model, i, k):
    if i > k:
        raise LatticeIndexError(f"discount indices out of order: i = {i} > k = {k}")
    model.check_step(i)
    model.check_step(k)


def discount_between(scenario, i, k):
    """D(i, k) = prod_{m=i}^{k-1} d_m, returned on the step-k states."""
    model = scenario.model
    _check_range(model, i, k)
    d = scenario.step_discount
    if model.is_path:
        out = np.empty(model.size)
        zeros = np.zeros(model.size)
        _kernels.forward_affine(out, np.ones(model.n_states(i)), d, d, zeros, zeros, i, k)
        return model.at(out, k).copy()
    if not model.is_deterministic(scenario.beta, max(k - 1, 0)):
        raise LayoutError("discounts along a stochastic beta are path-dependent; use the path layout")
    total = float(np.prod([model.at(d, m)[0] for m in range(i, k)]))
    return np.full(model.n_states(k), total)


@dataclass
class SubProbabilityDensity:
    """Per-history L(T, t) = D(t, N) * (dQ/dP given F_t)."""

    t_index: int
    values: np.ndarray
    discount: np.ndarray
    tilt_density: np.ndarray


def pathwise_arrays(scenario, t, penalty=True):
    """Leaf arrays (tilt density, D(t, N), accumulated penalty) for anchor t.

    With ``penalty=False`` the third array is None and the conjugate is never evaluated.
    """
    model = scenario.model
    if not model.is_path:
        raise LayoutError("pathwise scenario quantities need the path layout")
    model.check_step(t)
    tilt = scenario.tilt()
    d = scenario.step_discount
    zeros = np.zeros(model.size)
    ones = np.ones(model.size)
    start = np.ones(model.n_states(t))

    dens = np.empty(model.size)
    _kernels.forward_affine(dens, start, 2.0 * (1.0 - tilt.p_up), 2.0 * tilt.p_up, zeros, zeros, t, model.N)
    disc = np.empty(model.size)
    _kernels.forward_affine(disc, start, d, d, zeros, zeros, t, model.N)
    N = model.N
    if not penalty:
        return model.at(dens, N).copy(), model.at(disc, N).copy(), None
    # penalty contribution of step k weighted by D(t, k+1) = D(t, k) d_k
    G = scenario.penalty_rate()
    add = np.zeros(model.size)
    for k in range(t, model.N):
        model.at(add, k)[:] = model.at(disc, k) * model.at(d, k) * model.at(G, k) * model.delta
    pen = np.empty(model.size)
    _kernels.forward_affine(pen, np.zeros(model.n_states(t)), ones, ones, add, add, t, model.N)
    return model.at(dens, N).copy(), model.at(disc, N).copy(), model.at(pen, N).copy()


def scenario_density(scenario, t_index):
    dens, disc, _ = pathwise_arrays(scenario, t_index, penalty=False)
    return SubProbabilityDensity(t_index, dens * disc, disc, dens)


def scenario_value(scenario, payoff, penalized=True):
    """Flat field of E_Q[D(k, N) payoff - penalty_k | F_k] by backward recursion (both layouts)."""
    model = scenario.model
    payoff = np.asarray(payoff, dtype=float)
    if payoff.shape != (model.n_states(model.N),):
        raise ConfigurationError("payoff must be given on the terminal states")
    tilt = scenario.tilt()
    d = scenario.step_discount
    shift = -d * scenario.penalty_rate() * model.delta if penalized else np.zeros(model.size)
    values = model.blank()
    model.at(values, model.N)[:] = payoff
    return _kernels.backward_affine(values, tilt.p_up, d, shift, model.N, 0, model.code)


def penalty_at(scenario, t_index):
    """c_t = E_Q[sum_{k >= t} D(t, k+1) G_k delta | F_t] on the step-t states."""
    model = scenario.model
    model.check_step(t_index)
    if model.is_path:
        dens, _, pen = pathwise_arrays(scenario, t_index)
        return model.block_mean(dens * pen, t_index)
    zero = np.zeros(model.n_states(model.N))
    return -model.at(scenario_value(scenario, zero, penalized=True), t_index).copy()


def tilted_discounted(scenario, payoff, t_index):
    """E_Q[D(t, N) payoff | F_t] computed pathwise on the step-t states."""
    model = scenario.model
    dens, disc, _ = pathwise_arrays(scenario, t_index, penalty=False)
    return model.block_mean(dens * disc * np.asarray(payoff, dtype=float), t_index)


def dual_check(scenario, claim, t_index):
    """|rho_t(X) - (E_Q[D_t (-X) | F_t] - c_t)| per step-t state; ``scenario`` must come from rho(X)."""
    model = scenario.model
    if scenario.source is None:
        raise ConfigurationError("dual check needs a scenario extracted from a solved risk measure")
    claim = np.asarray(claim, dtype=float)
    dens, disc, pen = pathwise_arrays(scenario, t_index)
    dual = model.block_mean(dens * (disc * -claim - pen), t_index)
    return np.abs(scenario.source.y(t_index) - dual)


def subdifferential_test(scenario, claim_y, claims_x, t_index):
    """min over samples and states of rho_t(X) - rho_t(Y) - E_lambda[-(X - Y) | F_t]."""
    model = scenario.model
    claim_y = np.asarray(claim_y, dtype=float)
    rho_y = scenario.source.y(t_index)
    if model.is_path:
        dens, disc, _ = pathwise_arrays(scenario, t_index, penalty=False)
        weight = dens * disc
    worst = np.inf
    for x in claims_x:
        x = np.asarray(x, dtype=float)
        rho_x = risk_measure(model, scenario.driver, x).y(t_index)
        if model.is_path:
            lin = model.block_mean(weight * -(x - claim_y), t_index)
        else:
            lin = model.at(scenario_value(scenario, -(x - claim_y), penalized=False), t_index)
        worst = min(worst, float(np.min(rho_x - rho_y - lin)))
    return worst

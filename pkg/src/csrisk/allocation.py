"""Capital allocation rules Lambda_t(X, Y): sub-unit X inside the aggregate Y.

Every rule returns an :class:`AllocationResult` whose ``values`` field holds
Lambda_t at every step-t state.  The aggregate's risk rho(Y) is solved first;
its optimal scenario (beta^Y, mu^Y) then prices the sub-unit.
"""

from dataclasses import dataclass, field

import numpy as np

from .bsde import risk_measure
from .bsvie import TerminalFamily, VolterraDriver, solve_bsvie
from .drivers import CsermDriver, LinearDriver
from .errors import CapabilityError, ConfigurationError, CsRiskError, LayoutError
from .scenario import Scenario, pathwise_arrays, extract_scenario
from . import _kernels

SIGN_VARIANTS = ("corrected", "paper")
DEFAULT_AS_NODES = 16


@dataclass
class AllocationResult:
    rule: str
    model: object
    values: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    z: object = None

    def at(self, k):
        return self.model.at(self.values, k)

    @property
    def value(self):
        return float(self.values[0])


def _claim(model, claim):
    claim = np.asarray(claim, dtype=float)
    if claim.ndim == 0:
        claim = np.full(model.n_states(model.N), float(claim))
    if claim.shape != (model.n_states(model.N),):
        raise ConfigurationError(
            f"claims must be given on the {model.n_states(model.N)} terminal states, got {claim.shape}"
        )
    return claim


def aggregate_scenario(model, driver, Y, convention="implicit"):
    rho = risk_measure(model, driver, _claim(model, Y))
    return rho, extract_scenario(driver, rho, convention)


class ScenarioPricer:
    """Prices terminal payoffs under a fixed scenario: E_Q[D(k, N) payoff - penalty_k | F_k].

    The tilt, discount and penalty shift are computed once, so pricing many
    sub-units against the same aggregate costs one backward sweep each.
    """

    def __init__(self, scenario, penalized=True):
        model = scenario.model
        self.model = model
        self.scenario = scenario
        self.p_up = scenario.tilt().p_up
        self.discount = scenario.step_discount
        if penalized:
            self.shift = -self.discount * scenario.penalty_rate() * model.delta
        else:
            self.shift = np.zeros(model.size)

    def __call__(self, payoff):
        model = self.model
        values = model.blank()
        model.at(values, model.N)[:] = payoff
        return _kernels.backward_affine(values, self.p_up, self.discount, self.shift, model.N, 0, model.code)


class PathwiseSubOperator:
    """Lambda^sub_t(., Y) from the pathwise density, discount and penalty of every anchor t."""

    def __init__(self, model, driver, Y, convention="implicit"):
        if not model.is_path:
            raise LayoutError("alloc_sub_direct evaluates path densities; use the path layout")
        self.model = model
        self.rho, self.scenario = aggregate_scenario(model, driver, _claim(model, Y), convention)
        self.weights = []
        self.penalties = []
        for t in range(model.N + 1):
            dens, disc, pen = pathwise_arrays(self.scenario, t)
            self.weights.append(dens * disc)
            self.penalties.append(model.block_mean(dens * pen, t))

    def __call__(self, X):
        model = self.model
        X = _claim(model, X)
        values = model.blank()
        for t in range(model.N + 1):
            model.at(values, t)[:] = model.block_mean(self.weights[t] * -X, t) - self.penalties[t]
        return values


def alloc_sub_direct(model, driver, X, Y, convention="implicit"):
    """Lambda^sub_t = E_Q[D_t (-X) | F_t] - c_t, evaluated pathwise under the scenario of rho(Y)."""
    op = PathwiseSubOperator(model, driver, Y, convention)
    values = op(X)
    gap = float(np.max(np.abs(op(Y) - op.rho.Y)))
    return AllocationResult("sub", model, values, {"dual_gap": gap})


def _discount_field(sc, i):
    """Flat field with D(i, k) on the step-k states for k >= i."""
    model = sc.model
    out = model.blank()
    d = sc.step_discount
    if model.is_path:
        zeros = np.zeros(model.size)
        _kernels.forward_affine(out, np.ones(model.n_states(i)), d, d, zeros, zeros, i, model.N)
        return out
    if not model.is_deterministic(sc.beta, model.N - 1):
        raise LayoutError(
            "the BSVIE terminal -D_t X is path-dependent for a stochastic beta; use the path layout"
        )
    running = 1.0
    for k in range(i, model.N + 1):
        model.at(out, k)[:] = running
        running *= model.at(d, k)[0]
    return out


def sub_volterra(sc, sign_variant="corrected"):
    """Anchor driver of the subdifferential BSVIE and its discount cache.

    corrected: h(i, k, z) = -D(i, k+1) G_k - mu_k z
    paper:     h(i, k, z) = +D(i, k+1) G_k + mu_k z
    """
    if sign_variant not in SIGN_VARIANTS:
        raise ConfigurationError(f"sign variant must be one of {SIGN_VARIANTS}")
    model = sc.model
    G = sc.penalty_rate()
    d = sc.step_discount
    mu = np.nan_to_num(sc.mu, nan=0.0)
    sign = -1.0 if sign_variant == "corrected" else 1.0
    cache = {}

    def disc(i):
        if i not in cache:
            cache[i] = _discount_field(sc, i)
        return cache[i]

    def h(i, k, z):
        weight = model.at(disc(i), k) * model.at(d, k)
        return sign * (weight * model.at(G, k) + model.at(mu, k) * z)

    lip = float(np.max(np.abs(mu))) if mu.size else 0.0
    return VolterraDriver(h, lipschitz_z=lip, name=f"sub[{sign_variant}]"), disc


class SubBsvieOperator:
    """Lambda^sub(., Y) through the subdifferential BSVIE; scenario and discounts are cached."""

    def __init__(self, model, driver, Y, sign_variant="corrected", convention="implicit"):
        self.model = model
        self.rho, self.scenario = aggregate_scenario(model, driver, _claim(model, Y), convention)
        self.vdriver, self.disc = sub_volterra(self.scenario, sign_variant)

    def solve(self, X):
        model = self.model
        X = _claim(model, X)
        family = TerminalFamily(lambda i: -model.at(self.disc(i), model.N) * X)
        return solve_bsvie(model, self.vdriver, family)

    def __call__(self, X):
        return self.solve(X).Y


def alloc_sub_bsvie(model, driver, X, Y, sign_variant="corrected", compare=True, convention="implicit"):
    """Lambda^sub as the diagonal of the BSVIE with terminal -D(t_i, N) X."""
    sol = SubBsvieOperator(model, driver, Y, sign_variant, convention).solve(X)
    diagnostics = {"sign_variant": sign_variant}
    if compare and model.is_path:
        direct = alloc_sub_direct(model, driver, X, Y, convention)
        diagnostics["cross_method_gap"] = float(np.max(np.abs(direct.values - sol.Y)))
    return AllocationResult("sub_bsvie", model, sol.Y, diagnostics, z=sol)


def _gradient_scenario(model, driver, rho):
    if not driver.differentiable:
        raise CapabilityError(
            f"gradient allocation needs a differentiable driver, {driver.name!r} is not; "
            f"use alloc_sub_direct"
        )
    beta = model.blank()
    mu = model.blank()
    for k in range(model.N):
        gy, gz = driver.gradient(model, k, rho.y(k), rho.z(k))
        n = model.n_states(k)
        model.at(beta, k)[:] = np.broadcast_to(-gy, (n,))
        model.at(mu, k)[:] = np.broadcast_to(-gz, (n,))
    return Scenario(model, driver, beta, mu, rho)


def alloc_gradient(model, driver, X, Y):
    """Lambda^grad_t = E_Q[D_t (-X) | F_t] with (beta, mu) = -(dg/dy, dg/dz) along rho(Y)."""
    X = _claim(model, X)
    return AllocationResult("gradient", model, gradient_operator(model, driver, Y)(-X))


def gradient_operator(model, driver, Y):
    """Pricer of payoffs under the gradient scenario along rho(Y); apply it to -X."""
    rho = risk_measure(model, driver, _claim(model, Y))
    return ScenarioPricer(_gradient_scenario(model, driver, rho), penalized=False)


def gradient_fd_oracle(model, driver, X, Y, h=1e-3):
    """[rho_t(Y + h X) - rho_t(Y - h X)] / (2 h) as a flat field."""
    if not h > 0:
        raise ConfigurationError("finite-difference step must be positive")
    X, Y = _claim(model, X), _claim(model, Y)
    up = risk_measure(model, driver, Y + h * X).Y
    down = risk_measure(model, driver, Y - h * X).Y
    return (up - down) / (2.0 * h)


def alloc_marginal(model, driver, X, Y):
    """Lambda^M_t = rho_t(Y) - rho_t(Y - X)."""
    X, Y = _claim(model, X), _claim(model, Y)
    whole = risk_measure(model, driver, Y)
    rest = risk_measure(model, driver, Y - X)
    return AllocationResult("marginal", model, whole.Y - rest.Y)


def alloc_generalized_marginal(model, driver, X, Y, lam):
    """rho_t(Y) - rho^lam_t(Y - X), rho^lam with driver -beta^Y y + lam z."""
    X, Y = _claim(model, X), _claim(model, Y)
    rho, sc = aggregate_scenario(model, driver, Y)
    lam = model.as_field(lam)
    if not np.all(np.isfinite(lam)):
        raise ConfigurationError("lambda must be bounded")
    aux = LinearDriver(np.nan_to_num(sc.beta, nan=0.0), lam)
    rho_lam = risk_measure(model, aux, Y - X)
    return AllocationResult("generalized_marginal", model, rho.Y - rho_lam.Y)


def _gauss_legendre_unit(n):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (nodes + 1.0), 0.5 * weights


class AumannShapleyOperator:
    """Quadrature weights and scenario pricers at the nodes a_j for the aggregate Y."""

    def __init__(self, model, driver, Y, nodes=DEFAULT_AS_NODES, penalized=False):
        if nodes < 2:
            raise ConfigurationError("Aumann-Shapley quadrature needs at least 2 nodes")
        Y = _claim(model, Y)
        self.model = model
        self.nodes, self.weights = _gauss_legendre_unit(nodes)
        self.pricers = []
        for aj in self.nodes:
            try:
                _, sc = aggregate_scenario(model, driver, aj * Y)
                self.pricers.append(ScenarioPricer(sc, penalized=penalized))
            except CsRiskError as exc:
                raise type(exc)(f"Aumann-Shapley node a = {aj:.6g}: {exc}") from exc

    def __call__(self, X):
        payoff = -_claim(self.model, X)
        total = np.zeros(self.model.size)
        for wj, price in zip(self.weights, self.pricers):
            total += wj * price(payoff)
        return total


def alloc_aumann_shapley(model, driver, X, Y, nodes=DEFAULT_AS_NODES, penalized=False, residual=True):
    """Gauss-Legendre average over a in [0, 1] of the scenario value of X under rho(a Y).

    plain: E_Q^{aY}[-D^{aY}_t X | F_t]; penalized: Lambda^sub_t(X, a Y).
    The residual diagnostic compares against twice as many nodes.
    """
    values = AumannShapleyOperator(model, driver, Y, nodes, penalized)(X)
    diagnostics = {"nodes": nodes}
    if residual:
        finer = AumannShapleyOperator(model, driver, Y, 2 * nodes, penalized)(X)
        diagnostics["quadrature_residual"] = float(np.max(np.abs(finer - values)))
    rule = "penalized_aumann_shapley" if penalized else "aumann_shapley"
    return AllocationResult(rule, model, values, diagnostics)


def resolve_kappa(kappa, gamma1):
    if kappa is None or kappa == "1/g1":
        return 1.0 / gamma1
    if kappa == "2/g1":
        return 2.0 / gamma1
    try:
        value = float(kappa)
    except (TypeError, ValueError):
        raise ConfigurationError(f"kappa must be '1/g1', '2/g1' or a number, got {kappa!r}") from None
    if not value > 0:
        raise ConfigurationError(f"kappa must be positive, got {value}")
    return value


def alloc_cserm(model, X, Y, beta, gamma, gamma1, kappa=None, h=1e-3):
    """Lambda^SE_t = rho^SE_t(Y) - rho^grad_t(Y - X).

    rho^SE uses cserm(beta, gamma); rho^grad solves the linear BSDE with driver
    -beta y + kappa Z^{gamma1} z where Z^{gamma1} comes from cserm(beta, gamma1).
    kappa = 1/gamma1 linearises |z|^2 / (2 gamma1); the FD diagnostic measures the gap.
    """
    if not (gamma > 0 and gamma1 > 0):
        raise ConfigurationError("cserm needs gamma > 0 and gamma1 > 0")
    kappa = resolve_kappa(kappa, gamma1)
    X, Y = _claim(model, X), _claim(model, Y)
    beta = model.as_field(beta)
    se = CsermDriver(beta, gamma)
    se1 = CsermDriver(beta, gamma1)
    rho_se = risk_measure(model, se, Y)
    rho_1 = risk_measure(model, se1, Y)
    lam = kappa * np.nan_to_num(rho_1.Z, nan=0.0)
    rho_grad = risk_measure(model, LinearDriver(beta, lam), Y - X)
    fd = gradient_fd_oracle(model, se1, Y - X, Y, h)
    values = rho_se.Y - rho_grad.Y
    diagnostics = {
        "kappa": kappa,
        "fd_residual": float(np.max(np.abs(rho_grad.Y - fd))),
        "rho_se_root": rho_se.value,
        "rho_grad_root": rho_grad.value,
    }
    result = AllocationResult("cserm", model, values, diagnostics)
    result.parts = {"rho_se": rho_se.Y, "rho_grad": rho_grad.Y}
    return result


@dataclass
class CarContext:
    """What a custom allocation driver may look at for anchor i, step k."""

    scenario: Scenario
    rho: object
    penalty_rate: np.ndarray
    discount: object
    sub_bsvie: object

    def z_sub(self, i):
        """Flat field of Z^{Lambda^sub(Y, Y)}(i, .)."""
        return self.sub_bsvie.z(i)


def alloc_bsvie_custom(model, driver, X, Y, g_lambda, lipschitz_z=np.inf):
    """CAR as the diagonal of a BSVIE with terminal -D(t_i, N) X and a user driver.

    ``g_lambda(i, k, z, ctx)`` returns the driver on the step-k states; ``ctx`` is a
    :class:`CarContext`.  For a CAR it must reduce to the subdifferential driver
    when z equals Z^{Lambda^sub(Y, Y)}(i, k).
    """
    X, Y = _claim(model, X), _claim(model, Y)
    rho, sc = aggregate_scenario(model, driver, Y)
    vsub, disc = sub_volterra(sc)
    sub_yy = solve_bsvie(model, vsub, TerminalFamily(lambda i: -model.at(disc(i), model.N) * Y))
    ctx = CarContext(sc, rho, sc.penalty_rate(), disc, sub_yy)
    vdriver = VolterraDriver(lambda i, k, z: g_lambda(i, k, z, ctx), lipschitz_z=lipschitz_z, name="custom_car")
    sol = solve_bsvie(model, vdriver, TerminalFamily(lambda i: -model.at(disc(i), model.N) * X))
    return AllocationResult("custom_bsvie", model, sol.Y, {}, z=sol)


def subdifferential_driver(i, k, z, ctx):
    """The subdifferential BSVIE driver -D(i, k+1) G_k - mu_k z, for use in custom drivers."""
    model = ctx.scenario.model
    d = ctx.scenario.step_discount
    weight = model.at(ctx.discount(i), k) * model.at(d, k)
    return -(weight * model.at(ctx.penalty_rate, k) + model.at(ctx.scenario.mu, k) * z)



RULES = ("sub", "sub_bsvie", "gradient", "marginal", "generalized_marginal",
         "aumann_shapley", "penalized_aumann_shapley", "cserm")


def allocate(rule, model, driver, X, Y, **params):
    """Dispatch on a rule tag; ``params`` are the rule's keyword options."""
    if rule == "sub":
        if model.is_path:
            return alloc_sub_direct(model, driver, X, Y)
        return alloc_sub_bsvie(model, driver, X, Y, compare=False)
    if rule == "sub_bsvie":
        return alloc_sub_bsvie(model, driver, X, Y, **params)
    if rule == "gradient":
        return alloc_gradient(model, driver, X, Y)
    if rule == "marginal":
        return alloc_marginal(model, driver, X, Y)
    if rule == "generalized_marginal":
        return alloc_generalized_marginal(model, driver, X, Y, params.get("lambda", 0.0))
    if rule in ("aumann_shapley", "penalized_aumann_shapley"):
        return alloc_aumann_shapley(model, driver, X, Y, nodes=params.get("nodes", DEFAULT_AS_NODES),
                                    penalized=rule == "penalized_aumann_shapley",
                                    residual=params.get("residual", True))
    if rule == "cserm":
        if not isinstance(driver, CsermDriver):
            raise ConfigurationError("the cserm rule needs a cserm driver (it supplies beta and gamma)")
        if "gamma1" not in params:
            raise ConfigurationError("the cserm rule needs gamma1")
        return alloc_cserm(model, X, Y, driver.beta, driver.gamma, float(params["gamma1"]),
                           kappa=params.get("kappa"), h=params.get("h", 1e-3))
    raise ConfigurationError(f"unknown allocation rule {rule!r}; expected one of {RULES}")

"""Randomised checks of the risk-measure axioms, CAR axioms, comparison and duality.

Every check draws seeded instances on the path layout, measures the worst
violation of each property and returns a :class:`Report`.  A row is asserted
only where the property is a theorem for that rule and driver; the other rows
are measured and reported.  Violations are signed: a row passes when its worst
value is at most the tolerance.
"""

from dataclasses import dataclass, field
import hashlib

import numpy as np

from .allocation import (AumannShapleyOperator, PathwiseSubOperator, SubBsvieOperator,
                         alloc_cserm, alloc_generalized_marginal, gradient_fd_oracle,
                         gradient_operator, subdifferential_driver, CarContext,
                         aggregate_scenario, sub_volterra, DEFAULT_AS_NODES, RULES)
from .bsde import flow_consistency_check, risk_measure, solve_bsde
from .bsvie import TerminalFamily, VolterraDriver, solve_bsvie
from .drivers import (CsermDriver, Driver, EntropicDriver, LinearAmbiguousDriver, LinearDriver,
                      ZeroDriver)
from .errors import ConfigurationError, LayoutError
from .lattice import LatticeModel
from .scenario import pathwise_arrays, penalty_at, scenario_value

BUILTIN_DRIVERS = ("zero", "linear_ambiguous", "entropic", "cserm", "linear_generic")
DIFFERENTIABLE_DRIVERS = ("zero", "entropic", "cserm", "linear_generic")
SUBLINEAR_DRIVERS = ("zero", "linear_ambiguous", "linear_generic")
MAX_INSTANCE_STEPS = 12

TOL_EXACT = 1e-12
TOL_SCHEME = 1e-9
TOL_FLOW = 1e-10
TOL_CROSS = 1e-8
TOL_FD = 1e-6


@dataclass
class CheckRow:
    name: str
    worst: float = -np.inf
    tolerance: float = TOL_SCHEME
    asserted: bool = True
    samples: int = 0
    note: str = ""

    @property
    def passed(self):
        return (not self.asserted) or bool(self.worst <= self.tolerance)

    def to_dict(self):
        worst = None if not np.isfinite(self.worst) else float(self.worst)
        return {"name": self.name, "worst": worst, "tolerance": self.tolerance,
                "asserted": self.asserted, "passed": self.passed, "samples": self.samples,
                "note": self.note}


@dataclass
class Report:
    suite: str
    params: dict = field(default_factory=dict)
    rows: dict = field(default_factory=dict)

    def record(self, name, violation, tolerance=TOL_SCHEME, asserted=True, note=""):
        """Fold one measured violation into row ``name`` (worst case kept).

        Unasserted measurements go to ``name[reported]`` so one row never mixes the two.
        """
        if not asserted:
            name = f"{name}[reported]"
        row = self.rows.get(name)
        if row is None:
            row = self.rows[name] = CheckRow(name, tolerance=tolerance, asserted=asserted, note=note)
        row.worst = max(row.worst, float(violation))
        row.samples += 1
        return row

    @property
    def passed(self):
        return all(row.passed for row in self.rows.values())

    def failures(self):
        return [row for row in self.rows.values() if not row.passed]

    def row(self, name):
        return self.rows[name]

    def to_dict(self):
        return {"suite": self.suite, "params": self.params, "passed": self.passed,
                "rows": [self.rows[k].to_dict() for k in sorted(self.rows)]}

    def lines(self):
        out = []
        for name in sorted(self.rows):
            r = self.rows[name]
            status = "PASS" if r.passed else "FAIL"
            if not r.asserted:
                status = "info"
            label = name if "/" in name else f"{self.suite}/{name}"
            out.append(f"[{status}] {label}: worst={r.worst:.3e} tol={r.tolerance:.0e} "
                       f"n={r.samples}")
        return out


def merge_reports(suite, reports, params=None):
    """Concatenate reports, prefixing each row with its sub-suite name."""
    merged = Report(suite, params or {})
    for rep in reports:
        for name, row in rep.rows.items():
            key = f"{rep.suite}/{name}"
            merged.rows[key] = CheckRow(key, row.worst, row.tolerance, row.asserted, row.samples, row.note)
    return merged


# instances ---------------------------------------------------------------

@dataclass(frozen=True)
class InstanceSpec:
    """Seed plus the ranges random instances are drawn from.

    ``driver`` and ``N`` are sampled when left as None; ``bound`` defaults to
    gamma / 3 for the quadratic drivers (keeps every scenario tilt valid) and
    1 otherwise.
    """

    seed: int
    driver: str = None
    N: int = None
    n_range: tuple = (2, 8)
    T: float = 1.0
    parts: int = None
    bound: float = None


@dataclass
class Instance:
    spec: InstanceSpec
    model: LatticeModel
    driver_kind: str
    driver: Driver
    bound: float
    Y: np.ndarray
    parts: list
    X: np.ndarray
    X_alt: np.ndarray
    bump: np.ndarray
    t: int
    s: int
    m: np.ndarray
    region: np.ndarray
    comps: list
    weights: np.ndarray
    lam: np.ndarray
    gamma1: float
    alpha: float

    def cash(self):
        """m_t spread onto the terminal histories."""
        return self.model.expand(self.m, self.t)

    def pasted(self):
        """X on the event A (a step-t set), X_alt off it."""
        return np.where(self.model.expand(self.region.astype(float), self.t) > 0, self.X, self.X_alt)

    def fingerprint(self):
        h = hashlib.sha256()
        for arr in (self.Y, self.X, self.X_alt, *self.parts):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def _random_field(rng, model, lo, hi):
    out = model.blank()
    for k in range(model.N + 1):
        model.at(out, k)[:] = rng.uniform(lo, hi, model.n_states(k))
    return out


def _random_driver(rng, model, kind):
    if kind == "zero":
        return ZeroDriver(), {}
    if kind == "linear_ambiguous":
        r = _random_field(rng, model, 0.0, 0.1)
        return LinearAmbiguousDriver(r, r + _random_field(rng, model, 0.0, 0.2)), {}
    if kind == "entropic":
        gamma = rng.uniform(0.5, 2.0)
        return EntropicDriver(gamma), {"gamma": gamma}
    if kind == "cserm":
        gamma = rng.uniform(0.5, 2.0)
        return CsermDriver(_random_field(rng, model, 0.0, 0.2), gamma), {"gamma": gamma}
    if kind == "linear_generic":
        return LinearDriver(_random_field(rng, model, 0.0, 0.2), _random_field(rng, model, -1.0, 1.0)), {}
    raise ConfigurationError(f"unknown driver kind {kind!r}; expected one of {BUILTIN_DRIVERS}")


def _random_claim(rng, model, bound):
    """Bounded claim: a table, a smooth function of B_T, or a path functional."""
    n = model.n_states(model.N)
    kind = rng.integers(3)
    if kind == 0:
        vals = rng.uniform(-1.0, 1.0, n)
    elif kind == 1:
        B = model.terminal_brownian()
        a, b, c = rng.normal(size=3)
        vals = np.tanh(a * B + b * np.maximum(B - c, 0.0) + rng.normal())
    else:
        avg = sum(model.expand(model.brownian(k), k) for k in range(model.N + 1)) / (model.N + 1)
        vals = np.tanh(rng.normal() * avg + rng.normal() * model.terminal_brownian() ** 2 - rng.normal())
    return bound * vals


def random_instance(spec):
    """Deterministic instance from ``spec.seed`` on the path layout."""
    rng = np.random.default_rng(spec.seed)
    if spec.N is None:
        lo, hi = spec.n_range
        if not 1 <= lo <= hi:
            raise ConfigurationError(f"invalid step range {spec.n_range}")
        N = int(rng.integers(lo, hi + 1))
    else:
        N = int(spec.N)
    if N > MAX_INSTANCE_STEPS:
        raise LayoutError(f"random instances use the path layout and at most {MAX_INSTANCE_STEPS} steps, got {N}")
    if N < 1 or not spec.T > 0:
        raise ConfigurationError("random instances need N >= 1 and T > 0")
    model = LatticeModel.build(spec.T, N, "path")
    kind = spec.driver if spec.driver is not None else BUILTIN_DRIVERS[rng.integers(len(BUILTIN_DRIVERS))]
    driver, info = _random_driver(rng, model, kind)
    if spec.bound is not None:
        bound = float(spec.bound)
    else:
        bound = info["gamma"] / 3.0 if "gamma" in info else 1.0
    n_parts = int(spec.parts) if spec.parts is not None else int(rng.integers(2, 5))
    if not 1 <= n_parts <= 4:
        raise ConfigurationError("partition size must be between 1 and 4")

    Y = _random_claim(rng, model, bound)
    parts = [_random_claim(rng, model, bound) for _ in range(n_parts - 1)]
    parts.append(Y - sum(parts, np.zeros_like(Y)))
    X = _random_claim(rng, model, bound)
    X_alt = _random_claim(rng, model, bound)
    bump = bound * rng.uniform(0.0, 1.0, Y.size) * (rng.uniform(size=Y.size) < 0.7)
    t = int(rng.integers(0, N + 1))
    s = int(rng.integers(0, t + 1))
    m = bound * rng.uniform(0.0, 1.0, model.n_states(t))
    region = rng.uniform(size=model.n_states(t)) < 0.5
    comps = [_random_claim(rng, model, bound) for _ in range(n_parts)]
    weights = rng.dirichlet(np.ones(n_parts))
    lam = _random_field(rng, model, -1.0, 1.0)
    gamma1 = info.get("gamma", 1.0) * rng.uniform(0.5, 2.0)
    alpha = float(rng.uniform())
    return Instance(spec, model, kind, driver, bound, Y, parts, X, X_alt, bump, t, s, m, region,
                    comps, weights, lam, gamma1, alpha)


def _instance_seed(seed, index):
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def _instances(count, seed, kinds, n_range=(2, 8), **kw):
    if count < 1:
        raise ConfigurationError("count must be at least 1")
    kinds = list(kinds)
    for i in range(count):
        yield random_instance(InstanceSpec(_instance_seed(seed, i), driver=kinds[i % len(kinds)],
                                           n_range=n_range, **kw))


def _kinds(driver, allowed=BUILTIN_DRIVERS):
    if driver is None:
        return list(allowed)
    kinds = [driver] if isinstance(driver, str) else list(driver)
    for kind in kinds:
        if kind not in allowed:
            raise ConfigurationError(f"driver {kind!r} is not available here; expected one of {allowed}")
    return kinds


# risk measure axioms ----------------------------------------------------------

def check_risk_axioms(driver=None, count=100, seed=0, n_range=(2, 8)):
    """Cash-subadditivity, monotonicity, convexity, regularity, flow and normalization of rho."""
    kinds = _kinds(driver)
    rep = Report("risk", {"drivers": kinds, "count": count, "seed": seed})
    for inst in _instances(count, seed, kinds, n_range):
        model, g, t = inst.model, inst.driver, inst.t
        rho = risk_measure(model, g, inst.X)
        m = inst.cash()

        shifted = risk_measure(model, g, inst.X + m).y(t)
        base = rho.y(t)
        rep.record("cash_subadditivity", np.max(base - inst.m - shifted))
        rep.record("cash_additivity_gap", np.max(np.abs(shifted - base + inst.m)), asserted=False,
                   note="zero for cash-additive drivers, positive witnesses strict cash-subadditivity")

        lower = risk_measure(model, g, inst.X - inst.bump)
        rep.record("monotonicity", np.max(rho.Y - lower.Y))

        a = inst.alpha
        other = risk_measure(model, g, inst.X_alt)
        mix = risk_measure(model, g, a * inst.X + (1 - a) * inst.X_alt)
        rep.record("convexity", np.max(mix.Y - a * rho.Y - (1 - a) * other.Y))

        paste = risk_measure(model, g, inst.pasted()).y(t)
        expected = np.where(inst.region, rho.y(t), other.y(t))
        rep.record("regularity", np.max(np.abs(paste - expected)))

        rep.record("flow", flow_consistency_check(rho, inst.s, t), tolerance=TOL_FLOW)
        rep.record("normalization", np.max(np.abs(risk_measure(model, g, np.zeros_like(inst.X)).Y)),
                   tolerance=TOL_EXACT)
    return rep


# CAR axioms -------------------------------------------------------------------

def _allowed_kinds(rule):
    if rule == "gradient":
        return DIFFERENTIABLE_DRIVERS
    if rule == "cserm":
        return ("cserm",)
    return BUILTIN_DRIVERS


class _RuleEvaluator:
    """X -> Lambda(X, W) for a fixed aggregate W, reusing whatever can be cached."""

    def __init__(self, rule, inst, W, sign_variant="corrected", nodes=DEFAULT_AS_NODES, kappa=None):
        self.rule, self.inst, self.W = rule, inst, W
        model, g = inst.model, inst.driver
        self.diagnostics = {}
        if rule == "sub":
            self.op = PathwiseSubOperator(model, g, W)
        elif rule == "sub_bsvie":
            self.op = SubBsvieOperator(model, g, W, sign_variant)
            self.direct = PathwiseSubOperator(model, g, W)
        elif rule == "gradient":
            pricer = gradient_operator(model, g, W)
            self.op = lambda X: pricer(-X)
        elif rule in ("aumann_shapley", "penalized_aumann_shapley"):
            self.op = AumannShapleyOperator(model, g, W, nodes, rule == "penalized_aumann_shapley")
        elif rule == "marginal":
            whole = risk_measure(model, g, W).Y
            self.op = lambda X: whole - risk_measure(model, g, W - X).Y
        elif rule == "generalized_marginal":
            self.op = lambda X: alloc_generalized_marginal(model, g, X, W, inst.lam).values
        elif rule == "cserm":
            def op(X):
                res = alloc_cserm(model, X, W, g.beta, g.gamma, inst.gamma1, kappa=kappa)
                self.diagnostics = res.diagnostics
                decomposition = np.max(np.abs(res.values - (res.parts["rho_se"] - res.parts["rho_grad"])))
                self.diagnostics["decomposition"] = float(decomposition)
                return res.values
            self.op = op
        else:
            raise ConfigurationError(f"unknown allocation rule {rule!r}; expected one of {RULES}")

    def __call__(self, X):
        values = self.op(X)
        if self.rule == "sub_bsvie":
            gap = float(np.max(np.abs(values - self.direct(X))))
            self.diagnostics["cross_method_gap"] = max(self.diagnostics.get("cross_method_gap", 0.0), gap)
        return values


def check_car_axioms(rule, driver=None, count=100, seed=0, n_range=(2, 8), sign_variant="corrected",
                     nodes=DEFAULT_AS_NODES, kappa=None):
    """Measure every CAR axiom for ``rule``; assert those the rule is known to satisfy."""
    if rule not in RULES:
        raise ConfigurationError(f"unknown allocation rule {rule!r}; expected one of {RULES}")
    kinds = _kinds(driver, _allowed_kinds(rule))
    rep = Report(f"car[{rule}]", {"rule": rule, "drivers": kinds, "count": count, "seed": seed,
                                  "sign_variant": sign_variant})
    sub_rule = rule in ("sub", "sub_bsvie")
    as_rule = rule in ("aumann_shapley", "penalized_aumann_shapley")
    for inst in _instances(count, seed, kinds, n_range):
        model, g, t = inst.model, inst.driver, inst.t
        sublinear = inst.driver_kind in SUBLINEAR_DRIVERS
        lam = _RuleEvaluator(rule, inst, inst.Y, sign_variant, nodes, kappa)
        rho_Y = risk_measure(model, g, inst.Y).Y
        yy = lam(inst.Y)

        if rule == "penalized_aumann_shapley":
            rep.record("audacity", np.max(yy - rho_Y))
        else:
            rep.record("car_identity", np.max(np.abs(yy - rho_Y)),
                       asserted=rule != "gradient" or sublinear,
                       note="the gradient identity is Euler's theorem: positively homogeneous drivers only")

        lx = lam(inst.X)
        rep.record("no_undercut", np.max(lx - risk_measure(model, g, inst.X).Y), asserted=sub_rule)
        rep.record("monotonicity", np.max(lx - lam(inst.X - inst.bump)))

        zero = lam(np.zeros_like(inst.X))
        normalized = rule in ("gradient", "aumann_shapley", "marginal") or (sub_rule and sublinear)
        rep.record("normalization", np.max(np.abs(zero)), asserted=normalized,
                   note="Lambda^sub(0, Y) = -c_t(Y), zero only when the penalty vanishes")

        shifted = model.at(lam(inst.X + inst.cash()), t)
        rep.record("cash_subadditivity_1", np.max(model.at(lx, t) - inst.m - shifted),
                   asserted=sub_rule or rule in ("gradient", "aumann_shapley"))

        total = sum(lam(x) for x in inst.parts)
        rep.record("sub_allocation", np.max(total - yy), asserted=sub_rule)
        rep.record("full_allocation", np.max(np.abs(total - rho_Y)),
                   asserted=rule == "aumann_shapley" or (rule == "gradient" and sublinear))

        W = sum(a * c for a, c in zip(inst.weights, inst.comps))
        lam_w = lam if np.array_equal(W, inst.Y) else _RuleEvaluator(rule, inst, W, sign_variant, nodes, kappa)
        wc = lam_w(W) - sum(a * lam_w(c) for a, c in zip(inst.weights, inst.comps))
        rep.record("weak_convexity", np.max(wc), asserted=sub_rule)

        if model.is_path and rule in ("sub", "sub_bsvie", "gradient"):
            inner = -model.expand(model.at(lx, t), t)
            gap = np.max(np.abs(model.at(lam(inner), inst.s) - model.at(lx, inst.s)))
            rep.record("time_consistency_1_gap", gap, asserted=False,
                       note="reported only; CARs from cash-subadditive measures are not time-consistent")

        if rule == "sub_bsvie":
            rep.record(f"cross_method[{inst.driver_kind}]", lam.diagnostics["cross_method_gap"],
                       tolerance=TOL_CROSS)
        if rule == "gradient":
            fd = gradient_fd_oracle(model, g, inst.X, inst.Y)
            rep.record("gradient_vs_fd", np.max(np.abs(lx - fd)), tolerance=TOL_FD)
        if as_rule:
            finer = AumannShapleyOperator(model, g, inst.Y, 2 * nodes, rule == "penalized_aumann_shapley")
            rep.record("quadrature_residual", np.max(np.abs(finer(inst.X) - lx)), asserted=False)
        if rule == "cserm":
            rep.record("decomposition", lam.diagnostics["decomposition"], tolerance=TOL_EXACT)
            rep.record("fd_residual", lam.diagnostics["fd_residual"], tolerance=TOL_FD,
                       asserted=kappa in (None, "1/g1"))
    return rep


def check_cross_method(count=100, seed=0, sign_variant="corrected", n_range=(2, 10), driver=None):
    """Lambda^sub from the BSVIE against the pathwise formula, per builtin driver."""
    kinds = _kinds(driver)
    rep = Report("cross_method", {"drivers": kinds, "count": count, "seed": seed,
                                  "sign_variant": sign_variant})
    for inst in _instances(count, seed, kinds, n_range):
        bsvie = SubBsvieOperator(inst.model, inst.driver, inst.Y, sign_variant)
        direct = PathwiseSubOperator(inst.model, inst.driver, inst.Y)
        gap = max(float(np.max(np.abs(bsvie(x) - direct(x)))) for x in (inst.X, inst.parts[0]))
        rep.record(f"cross_method[{inst.driver_kind}]", gap, tolerance=TOL_CROSS)
    return rep


# comparison --------------------------------------------------------------------

class ShiftedDriver(Driver):
    """g(y, z) + b_k with a field b independent of (y, z); the implicit step stays closed-form."""

    def __init__(self, base, shift):
        self.base = base
        self.shift = shift
        self.name = f"{base.name}+shift"
        self.depends_on_y = base.depends_on_y
        self.lipschitz_y = base.lipschitz_y
        self.lipschitz_z = base.lipschitz_z

    def evaluate(self, model, k, y, z, state=None):
        b = model.at(self.shift, k) if state is None else model.at(self.shift, k)[state]
        return self.base.evaluate(model, k, y, z, state) + b

    def implicit_step(self, model, k, e, z):
        return self.base.implicit_step(model, k, e + model.at(self.shift, k) * model.delta, z)


def check_comparison(count=100, seed=0, n_range=(2, 8)):
    """Ordered data give ordered solutions, for BSDEs and for BSVIEs."""
    rep = Report("comparison", {"count": count, "seed": seed})
    for idx, inst in enumerate(_instances(count, seed, BUILTIN_DRIVERS, n_range)):
        model, g = inst.model, inst.driver
        rng = np.random.default_rng(_instance_seed(seed + 1, idx))
        scale = 0.05 * inst.bound
        phi1 = inst.X
        phi2 = phi1 + inst.bump
        shift = _random_field(rng, model, 0.0, scale) * (_random_field(rng, model, 0, 1) < 0.7)

        y1 = solve_bsde(model, g, phi1).Y
        y2 = solve_bsde(model, ShiftedDriver(g, shift), phi2).Y
        rep.record("bsde_ordering", np.max(y1 - y2), tolerance=TOL_EXACT)
        same = solve_bsde(model, ShiftedDriver(g, np.zeros(model.size)), phi1).Y
        rep.record("bsde_equal_data", np.max(np.abs(same - y1)), tolerance=TOL_EXACT)

        # Volterra: a y-free base driver plus anchor-dependent forcing
        base = g if not g.depends_on_y else EntropicDriver(3.0 * inst.bound)
        forcing = [_random_field(rng, model, -scale, scale) for _ in range(model.N + 1)]
        extra = [_random_field(rng, model, 0.0, scale) for _ in range(model.N + 1)]
        mix = rng.uniform(0.0, 1.0, model.N + 1)

        def h1(i, k, z):
            return base.evaluate(model, k, 0.0, z) + model.at(forcing[i], k)

        def h2(i, k, z):
            return h1(i, k, z) + model.at(extra[i], k)

        fam1 = TerminalFamily(lambda i: (1 - mix[i]) * inst.X + mix[i] * inst.X_alt)
        fam2 = TerminalFamily(lambda i: fam1(i) + mix[i] * inst.bump)
        v1 = solve_bsvie(model, VolterraDriver(h1), fam1, keep_solutions=False).Y
        v2 = solve_bsvie(model, VolterraDriver(h2), fam2, keep_solutions=False).Y
        rep.record("bsvie_ordering", np.max(v1 - v2), tolerance=TOL_EXACT)

        zero = VolterraDriver.zero()
        w1 = solve_bsvie(model, zero, fam1, keep_solutions=False).Y
        w2 = solve_bsvie(model, zero, TerminalFamily(lambda i: fam1(i) + 1.0), keep_solutions=False).Y
        rep.record("bsvie_additive_shift", np.max(np.abs(w2 - w1 - 1.0)), tolerance=TOL_EXACT)
    return rep


# duality ----------------------------------------------------------------------

def check_duality(driver=None, count=100, seed=0, n_range=(2, 8)):
    """Dual attainment, penalty sign, the penalty upper bound and subgradient membership."""
    kinds = _kinds(driver)
    rep = Report("duality", {"drivers": kinds, "count": count, "seed": seed})
    for inst in _instances(count, seed, kinds, n_range):
        model, g = inst.model, inst.driver
        rho, sc = aggregate_scenario(model, g, inst.X)
        others = [inst.X_alt, inst.Y, inst.X - inst.bump]
        rho_others = [risk_measure(model, g, x) for x in others]
        for k in range(model.N):
            b, m = model.at(sc.beta, k), model.at(sc.mu, k)
            y, z = rho.y(k), rho.z(k)
            young = g.evaluate(model, k, y, z) + b * y + m * z + g.conjugate(model, k, b, m)
            rep.record("conjugate_attainment", np.max(np.abs(young)))
        for t in range(model.N + 1):
            dens, disc, pen = pathwise_arrays(sc, t)
            c_t = model.block_mean(dens * pen, t)
            dual = model.block_mean(dens * disc * -inst.X, t) - c_t
            rep.record("dual_gap", np.max(np.abs(dual - rho.y(t))), tolerance=TOL_CROSS)
            rep.record("penalty_nonnegative", np.max(-c_t), tolerance=TOL_EXACT)
            for x, r in zip(others, rho_others):
                value = model.block_mean(dens * disc * -x, t) - c_t
                rep.record("penalty_upper_bound", np.max(value - r.y(t)), tolerance=TOL_CROSS)
                lin = model.block_mean(dens * disc * -(x - inst.X), t)
                rep.record("subdifferential_membership", np.max(-(r.y(t) - rho.y(t) - lin)))
        by_recursion = -scenario_value(sc, np.zeros_like(inst.X))
        for t in range(model.N + 1):
            rep.record("penalty_pathwise_vs_recursion",
                       np.max(np.abs(penalty_at(sc, t) - model.at(by_recursion, t))), tolerance=TOL_CROSS)
    return rep


# custom allocation drivers -----------------------------------------------------

def check_custom_car_driver(model, driver, Y, g_lambda, samples=50, seed=0, spread=None):
    """Test a user CAR driver g_lambda(i, k, z, ctx) against the sufficient conditions.

    consistency: g_lambda equals the subdifferential driver at z = Z^{Lambda^sub(Y, Y)} (required);
    the other rows test, on sampled z, zero at z = 0 (normalization), domination by the
    subdifferential driver (no-undercut), superadditivity in z (sub-allocation) and
    convexity in z (weak convexity).  Only consistency is asserted.
    """
    rng = np.random.default_rng(seed)
    Y = np.asarray(Y, dtype=float)
    rho, sc = aggregate_scenario(model, driver, Y)
    vsub, disc = sub_volterra(sc)
    sub_yy = solve_bsvie(model, vsub, TerminalFamily(lambda i: -model.at(disc(i), model.N) * Y))
    ctx = CarContext(sc, rho, sc.penalty_rate(), disc, sub_yy)
    spread = float(np.max(np.abs(Y))) / model.sqrt_delta if spread is None else spread
    rep = Report("custom_car_driver", {"samples": samples, "seed": seed})
    for i in range(model.N):
        zs_field = ctx.z_sub(i)
        for k in range(i, model.N):
            n = model.n_states(k)
            zs = model.at(zs_field, k)
            g_sub = lambda z: subdifferential_driver(i, k, z, ctx)
            g = lambda z: np.asarray(g_lambda(i, k, z, ctx), dtype=float)
            rep.record("consistency", np.max(np.abs(g(zs) - g_sub(zs))), tolerance=TOL_EXACT)
            rep.record("zero_at_origin", np.max(np.abs(g(np.zeros(n)))), asserted=False)
            for _ in range(samples):
                z1, z2 = rng.uniform(-spread, spread, (2, n))
                a = rng.uniform()
                rep.record("dominated_by_subdifferential", np.max(g(z1) - g_sub(z1)), asserted=False)
                rep.record("superadditive", np.max(g(z1) + g(z2) - g(z1 + z2)), asserted=False)
                rep.record("convex", np.max(g(a * z1 + (1 - a) * z2) - a * g(z1) - (1 - a) * g(z2)),
                           asserted=False)
    return rep


# suites used by the command line ----------------------------------------------------

SUITES = ("risk", "car", "comparison", "duality", "all")


def run_suite(suite, count=100, seed=0, sign_variant="corrected", kappa=None):
    """Run one named suite (or all of them) and return a merged report."""
    if suite not in SUITES:
        raise ConfigurationError(f"unknown suite {suite!r}; expected one of {SUITES}")
    parts = []
    if suite in ("risk", "all"):
        parts.append(check_risk_axioms(None, count, seed))
    if suite in ("car", "all"):
        parts.append(check_cross_method(count, seed, sign_variant))
        for rule in RULES:
            if rule == "sub_bsvie":
                continue
            parts.append(check_car_axioms(rule, None, count, seed, kappa=kappa))
    if suite in ("comparison", "all"):
        parts.append(check_comparison(count, seed))
    if suite in ("duality", "all"):
        parts.append(check_duality(None, count, seed))
    return merge_reports(suite, parts, {"suite": suite, "count": count, "seed": seed,
                                        "sign_variant": sign_variant,
                                        "kappa": kappa if kappa is not None else "1/g1"})

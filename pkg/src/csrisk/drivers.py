"""BSDE generators g(t_k, y, z), their optimal scenarios and Fenchel conjugates.

All methods are vectorised over the states of one step.  Parameters may be
scalars or flat lattice fields; in the latter case the ``model`` argument is
needed to slice the step-k layer (and ``state`` picks a single state).

The conjugate is G(b, m) = sup_{y,z} {-b y - m z - g(y, z)} and ``np.inf``
marks points outside its domain.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ConfigurationError


def _param(value, model, k, state=None):
    if np.ndim(value) == 0:
        return float(value)
    if model is None:
        raise ConfigurationError("driver has field-valued parameters; pass the lattice model")
    layer = model.at(value, k)
    return float(layer[state]) if state is not None else layer


def _bound(value):
    return float(np.max(np.abs(value)))


class Driver:
    """Base class; subclasses override ``evaluate`` and, where available, the rest."""

    name = "custom"
    depends_on_y = True
    convex = True
    decreasing_in_y = True
    positively_homogeneous = False
    subadditive = False
    differentiable = False
    lipschitz_y = 0.0
    lipschitz_z = np.inf

    def evaluate(self, model, k, y, z, state=None):
        raise NotImplementedError

    def select_scenario(self, model, k, y, z, state=None):
        raise CapabilityError(f"driver {self.name!r} has no scenario selector")

    def conjugate(self, model, k, b, m, state=None):
        raise CapabilityError(f"driver {self.name!r} has no closed-form conjugate")

    def gradient(self, model, k, y, z, state=None):
        """(dg/dy, dg/dz) along (y, z)."""
        raise CapabilityError(
            f"driver {self.name!r} is not differentiable; use the subdifferential allocation instead"
        )

    def implicit_step(self, model, k, e, z):
        """Closed-form root of y = e + g(t_k, y, z) delta, or None to fall back to Picard."""
        return None

    def flags(self):
        return {
            "depends_on_y": self.depends_on_y,
            "convex": self.convex,
            "decreasing_in_y": self.decreasing_in_y,
            "positively_homogeneous": self.positively_homogeneous,
            "subadditive": self.subadditive,
        }

    def describe(self):
        return {"type": self.name}


class ZeroDriver(Driver):
    name = "zero"
    depends_on_y = False
    positively_homogeneous = True
    subadditive = True
    differentiable = True
    lipschitz_z = 0.0

    def evaluate(self, model, k, y, z, state=None):
        return np.zeros(np.broadcast(y, z).shape)

    def select_scenario(self, model, k, y, z, state=None):
        shape = np.broadcast(y, z).shape
        return np.zeros(shape), np.zeros(shape)

    def conjugate(self, model, k, b, m, state=None):
        return np.where((np.asarray(b) == 0) & (np.asarray(m) == 0), 0.0, np.inf)

    def gradient(self, model, k, y, z, state=None):
        shape = np.broadcast(y, z).shape
        return np.zeros(shape), np.zeros(shape)

    def implicit_step(self, model, k, e, z):
        return np.array(e, dtype=float)


class LinearAmbiguousDriver(Driver):
    """g(y) = sup_{r <= b <= R} (-b y): discounting at an ambiguous rate."""

    name = "linear_ambiguous"
    positively_homogeneous = True
    subadditive = True
    lipschitz_z = 0.0

    def __init__(self, r, R):
        if np.min(r) < 0:
            raise ConfigurationError("linear_ambiguous needs r >= 0")
        if np.any(np.asarray(R) < np.asarray(r)):
            raise ConfigurationError("linear_ambiguous needs R >= r")
        self.r, self.R = r, R
        self.lipschitz_y = _bound(R)

    def evaluate(self, model, k, y, z, state=None):
        r, R = _param(self.r, model, k, state), _param(self.R, model, k, state)
        y = np.asarray(y, dtype=float)
        return np.maximum(-r * y, -R * y) + 0.0 * np.asarray(z)

    def select_scenario(self, model, k, y, z, state=None):
        r, R = _param(self.r, model, k, state), _param(self.R, model, k, state)
        y = np.asarray(y, dtype=float)
        beta = np.where(y < 0, R, r) + 0.0 * np.asarray(z)
        return beta, np.zeros_like(beta)

    def conjugate(self, model, k, b, m, state=None):
        r, R = _param(self.r, model, k, state), _param(self.R, model, k, state)
        b = np.asarray(b, dtype=float)
        return np.where((b >= r) & (b <= R) & (np.asarray(m) == 0), 0.0, np.inf)

    def implicit_step(self, model, k, e, z):
        r, R = _param(self.r, model, k), _param(self.R, model, k)
        d = model.delta
        return np.where(e >= 0, e / (1.0 + r * d), e / (1.0 + R * d))

    def describe(self):
        return {"type": self.name, "r": _describe_param(self.r), "R": _describe_param(self.R)}


class EntropicDriver(Driver):
    """g(z) = z^2 / (2 gamma).  Quadratic in z: Lipschitz only on bounded lattices."""

    name = "entropic"
    depends_on_y = False
    differentiable = True

    def __init__(self, gamma):
        if not gamma > 0:
            raise ConfigurationError("entropic needs gamma > 0")
        self.gamma = float(gamma)

    def evaluate(self, model, k, y, z, state=None):
        z = np.asarray(z, dtype=float)
        return z * z / (2.0 * self.gamma) + 0.0 * np.asarray(y)

    def select_scenario(self, model, k, y, z, state=None):
        mu = -np.asarray(z, dtype=float) / self.gamma + 0.0 * np.asarray(y)
        return np.zeros_like(mu), mu

    def conjugate(self, model, k, b, m, state=None):
        m = np.asarray(m, dtype=float)
        return np.where(np.asarray(b) == 0, 0.5 * self.gamma * m * m, np.inf)

    def gradient(self, model, k, y, z, state=None):
        dz = np.asarray(z, dtype=float) / self.gamma + 0.0 * np.asarray(y)
        return np.zeros_like(dz), dz

    def implicit_step(self, model, k, e, z):
        return e + z * z / (2.0 * self.gamma) * model.delta

    def describe(self):
        return {"type": self.name, "gamma": self.gamma}


class CsermDriver(Driver):
    """g(y, z) = -beta y + z^2 / (2 gamma): entropic with an ambiguous discount rate."""

    name = "cserm"
    differentiable = True

    def __init__(self, beta, gamma):
        if not gamma > 0:
            raise ConfigurationError("cserm needs gamma > 0")
        if np.min(beta) < 0 or not np.all(np.isfinite(beta)):
            raise ConfigurationError("cserm needs a bounded beta >= 0")
        self.beta, self.gamma = beta, float(gamma)
        self.lipschitz_y = _bound(beta)

    def evaluate(self, model, k, y, z, state=None):
        beta = _param(self.beta, model, k, state)
        z = np.asarray(z, dtype=float)
        return -beta * np.asarray(y, dtype=float) + z * z / (2.0 * self.gamma)

    def select_scenario(self, model, k, y, z, state=None):
        beta = _param(self.beta, model, k, state)
        mu = -np.asarray(z, dtype=float) / self.gamma + 0.0 * np.asarray(y)
        return beta + np.zeros_like(mu), mu

    def conjugate(self, model, k, b, m, state=None):
        beta = _param(self.beta, model, k, state)
        m = np.asarray(m, dtype=float)
        return np.where(np.asarray(b) == beta, 0.5 * self.gamma * m * m, np.inf)

    def gradient(self, model, k, y, z, state=None):
        beta = _param(self.beta, model, k, state)
        dz = np.asarray(z, dtype=float) / self.gamma + 0.0 * np.asarray(y)
        return -beta + np.zeros_like(dz), dz

    def implicit_step(self, model, k, e, z):
        beta = _param(self.beta, model, k)
        d = model.delta
        return (e + z * z / (2.0 * self.gamma) * d) / (1.0 + beta * d)

    def describe(self):
        return {"type": self.name, "beta": _describe_param(self.beta), "gamma": self.gamma}


class LinearDriver(Driver):
    """g(y, z) = -beta y + lam z, the auxiliary linear generator."""

    name = "linear_generic"
    positively_homogeneous = True
    subadditive = True
    differentiable = True

    def __init__(self, beta, lam):
        if np.min(beta) < 0:
            raise ConfigurationError("linear_generic needs beta >= 0")
        self.beta, self.lam = beta, lam
        self.lipschitz_y = _bound(beta)
        self.lipschitz_z = _bound(lam)

    def evaluate(self, model, k, y, z, state=None):
        beta, lam = _param(self.beta, model, k, state), _param(self.lam, model, k, state)
        return -beta * np.asarray(y, dtype=float) + lam * np.asarray(z, dtype=float)

    def select_scenario(self, model, k, y, z, state=None):
        beta, lam = _param(self.beta, model, k, state), _param(self.lam, model, k, state)
        zero = np.zeros(np.broadcast(y, z).shape)
        return beta + zero, -lam + zero

    def conjugate(self, model, k, b, m, state=None):
        beta, lam = _param(self.beta, model, k, state), _param(self.lam, model, k, state)
        inside = (np.asarray(b) == beta) & (np.asarray(m) == -lam)
        return np.where(inside, 0.0, np.inf)

    def gradient(self, model, k, y, z, state=None):
        beta, lam = _param(self.beta, model, k, state), _param(self.lam, model, k, state)
        zero = np.zeros(np.broadcast(y, z).shape)
        return -beta + zero, lam + zero

    def implicit_step(self, model, k, e, z):
        beta, lam = _param(self.beta, model, k), _param(self.lam, model, k)
        d = model.delta
        return (e + lam * z * d) / (1.0 + beta * d)

    def describe(self):
        return {"type": self.name, "beta": _describe_param(self.beta),
                "lambda": _describe_param(self.lam)}


class CustomDriver(Driver):
    """User generator ``fn(k, y, z)``.

    Without a ``selector`` the optimal scenario is taken as minus a central
    difference gradient (valid for differentiable generators); without a
    ``conjugate`` the conjugate is a grid lower bound over ``box``.
    """

    def __init__(self, fn, *, name="custom", depends_on_y=True, convex=True, decreasing_in_y=True,
                 positively_homogeneous=False, subadditive=False, lipschitz_y=0.0,
                 lipschitz_z=np.inf, selector=None, conjugate=None, box=None,
                 grid_points=401, allow_fallback=True, fd_step=1e-6):
        self.fn = fn
        self.name = name
        self.depends_on_y = depends_on_y
        self.convex = convex
        self.decreasing_in_y = decreasing_in_y
        self.positively_homogeneous = positively_homogeneous
        self.subadditive = subadditive
        self.lipschitz_y = float(lipschitz_y)
        self.lipschitz_z = float(lipschitz_z)
        self._selector = selector
        self._conjugate = conjugate
        self.box = box
        self.grid_points = grid_points
        self.allow_fallback = allow_fallback
        self.fd_step = fd_step

    def evaluate(self, model, k, y, z, state=None):
        return np.asarray(self.fn(k, y, z), dtype=float)

    def select_scenario(self, model, k, y, z, state=None):
        if self._selector is not None:
            return self._selector(k, y, z)
        if not self.allow_fallback:
            raise CapabilityError(f"driver {self.name!r} has no selector and fallback is disabled")
        gy, gz = self.gradient(model, k, y, z)
        return -gy, -gz

    def gradient(self, model, k, y, z, state=None):
        h = self.fd_step
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        gy = (self.fn(k, y + h, z) - self.fn(k, y - h, z)) / (2 * h)
        gz = (self.fn(k, y, z + h) - self.fn(k, y, z - h)) / (2 * h)
        return np.asarray(gy, dtype=float), np.asarray(gz, dtype=float)

    def conjugate(self, model, k, b, m, state=None):
        if self._conjugate is not None:
            return self._conjugate(k, b, m)
        if self.box is None:
            raise CapabilityError(f"driver {self.name!r} has no conjugate and no search box")
        b, m = np.broadcast_arrays(np.asarray(b, dtype=float), np.asarray(m, dtype=float))
        out = [conjugate_numeric(self, k, bi, mi, self.box, self.grid_points, model=model, state=state)
               for bi, mi in zip(b.ravel(), m.ravel())]
        return np.reshape(out, b.shape)


def _describe_param(value):
    if np.ndim(value) == 0:
        return float(value)
    return "field"


def _axis(box, key):
    lo, hi = box.get(key, (0.0, 0.0)) if isinstance(box, dict) else box[0 if key == "y" else 1]
    lo, hi = float(lo), float(hi)
    if hi < lo:
        raise ConfigurationError(f"empty search box on {key}: [{lo}, {hi}]")
    return lo, hi


def conjugate_numeric(driver, k, b, m, box, grid_points, model=None, state=None):
    """max over a (y, z) grid of -b y - m z - g; a lower bound of G(b, m).

    ``box`` is ``{"y": (lo, hi), "z": (lo, hi)}`` (a missing axis is pinned at 0)
    or a pair of intervals.  ``grid_points`` is per axis, an int or an (ny, nz) pair.
    """
    (ylo, yhi), (zlo, zhi) = _axis(box, "y"), _axis(box, "z")
    ny, nz = (grid_points, grid_points) if np.ndim(grid_points) == 0 else grid_points
    if ny < 2 or nz < 2:
        raise ConfigurationError("conjugate grid needs at least 2 points per axis")
    ys = np.linspace(ylo, yhi, int(ny)) if yhi > ylo else np.array([ylo])
    zs = np.linspace(zlo, zhi, int(nz)) if zhi > zlo else np.array([zlo])
    yy, zz = np.meshgrid(ys, zs, indexing="ij")
    if state is None and model is not None:
        state = 0
    vals = -b * yy - m * zz - driver.evaluate(model, k, yy, zz, state=state)
    return float(np.max(vals))


@dataclass
class FlagReport:
    driver: str
    samples: int
    measured: dict = field(default_factory=dict)
    declared: dict = field(default_factory=dict)
    lipschitz: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def validate_flags(driver, sample_count, seed, model=None, k=0, state=None, scale=2.0, tol=1e-10):
    """Sample (y, z) pairs and test the structural flags the driver declares."""
    if sample_count < 1:
        raise ConfigurationError("sample_count must be >= 1")
    if model is not None and state is None:
        state = 0
    rng = np.random.default_rng(seed)
    n = int(sample_count)

    def g(y, z):
        return driver.evaluate(model, k, y, z, state=state)

    y1, z1, y2, z2 = (scale * rng.standard_normal(n) for _ in range(4))
    alpha = rng.uniform(0.0, 3.0, n)
    gp, gq = g(y1, z1), g(y2, z2)
    fscale = 1.0 + np.abs(gp) + np.abs(gq)

    measured = {
        "convex": bool(np.all(g((y1 + y2) / 2, (z1 + z2) / 2) <= (gp + gq) / 2 + tol * fscale)),
        "decreasing_in_y": bool(np.all(g(np.maximum(y1, y2), z1) <= g(np.minimum(y1, y2), z1) + tol * fscale)),
        "positively_homogeneous": bool(np.allclose(g(alpha * y1, alpha * z1), alpha * gp, rtol=1e-10, atol=1e-10)),
        "subadditive": bool(np.all(g(y1 + y2, z1 + z2) <= gp + gq + tol * fscale)),
        "depends_on_y": bool(np.any(np.abs(g(y2, z1) - gp) > tol * fscale)),
    }

    dy = np.abs(y1 - y2)
    dz = np.abs(z1 - z2)
    lip_y = float(np.max(np.abs(g(y1, z1) - g(y2, z1)) / np.where(dy > 0, dy, np.inf)))
    lip_z = float(np.max(np.abs(g(y1, z1) - g(y1, z2)) / np.where(dz > 0, dz, np.inf)))

    report = FlagReport(driver.name, n, measured, driver.flags(), {"y": lip_y, "z": lip_z})
    for flag, claimed in report.declared.items():
        if flag == "depends_on_y":
            if not claimed and measured[flag]:
                report.violations.append("depends_on_y declared False but g varies with y")
        elif claimed and not measured[flag]:
            report.violations.append(f"{flag} declared but violated on samples")
    if lip_y > driver.lipschitz_y * (1 + 1e-9) + 1e-12:
        report.violations.append(f"Lipschitz-in-y estimate {lip_y:.6g} exceeds declared {driver.lipschitz_y:.6g}")
    if lip_z > driver.lipschitz_z * (1 + 1e-9) + 1e-12:
        report.violations.append(f"Lipschitz-in-z estimate {lip_z:.6g} exceeds declared {driver.lipschitz_z:.6g}")
    return report


def driver_from_config(cfg, model=None):
    """Build a builtin driver from ``{"type": ..., params}``; per-step lists become fields."""
    if not isinstance(cfg, dict) or "type" not in cfg:
        raise ConfigurationError("driver config must be an object with a 'type' field")
    kind = cfg["type"]

    def p(key, default=None):
        if key not in cfg:
            if default is None:
                raise ConfigurationError(f"driver {kind!r} is missing parameter {key!r}")
            return default
        value = cfg[key]
        if isinstance(value, (list, tuple)):
            if model is None:
                raise ConfigurationError("per-step driver parameters need a lattice model")
            return model.as_field(value)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigurationError(f"driver parameter {key!r} must be a number or a list")
        return float(value)

    if kind == "zero":
        return ZeroDriver()
    if kind == "linear_ambiguous":
        return LinearAmbiguousDriver(p("r"), p("R"))
    if kind == "entropic":
        return EntropicDriver(p("gamma"))
    if kind == "cserm":
        return CsermDriver(p("beta"), p("gamma"))
    if kind == "linear_generic":
        return LinearDriver(p("beta"), p("lambda"))
    raise ConfigurationError(f"unknown driver type {kind!r}")

"""Backward stochastic Volterra equations solved as a family of BSDEs.

For every anchor step i the BSDE

    eta(k; i) = phi(t_i) + sum_{m >= k} h(i, m, zeta(m; i)) delta - martingale part

is solved from N back to i, then Y(i) = eta(i; i) and Z(i, k) = zeta(k; i).
The Volterra driver may depend on z only.
"""

from dataclasses import dataclass, field

import numpy as np

from .bsde import solve_bsde
from .drivers import Driver
from .errors import ConfigurationError, CsRiskError


class VolterraDriver:
    """h(i, k, z) evaluated on all step-k states for anchor i."""

    depends_on_y = False

    def __init__(self, fn, lipschitz_z=np.inf, depends_on_y=False, name="volterra"):
        if depends_on_y:
            raise ConfigurationError("Volterra drivers may not depend on y")
        self.fn = fn
        self.lipschitz_z = float(lipschitz_z)
        self.name = name

    def __call__(self, i, k, z):
        return np.asarray(self.fn(i, k, z), dtype=float)

    @classmethod
    def zero(cls):
        return cls(lambda i, k, z: np.zeros_like(z), lipschitz_z=0.0, name="zero")

    @classmethod
    def from_driver(cls, driver, model):
        """Anchor-independent h(i, k, z) = g(t_k, z) built from a y-free driver."""
        if driver.depends_on_y:
            raise ConfigurationError("only y-independent drivers embed into a Volterra driver")
        return cls(lambda i, k, z: driver.evaluate(model, k, 0.0, z),
                   lipschitz_z=driver.lipschitz_z, name=driver.name)


class _AnchorDriver(Driver):
    depends_on_y = False

    def __init__(self, vdriver, anchor):
        self.vdriver = vdriver
        self.anchor = anchor
        self.name = f"{vdriver.name}@{anchor}"
        self.lipschitz_z = vdriver.lipschitz_z

    def evaluate(self, model, k, y, z, state=None):
        return self.vdriver(self.anchor, k, z)


class TerminalFamily:
    """Anchor index i -> terminal claim phi(t_i) at step N."""

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, i):
        return np.asarray(self.fn(i), dtype=float)

    @classmethod
    def constant(cls, claim):
        claim = np.asarray(claim, dtype=float)
        return cls(lambda i: claim)

    @classmethod
    def from_list(cls, claims):
        claims = [np.asarray(c, dtype=float) for c in claims]
        return cls(lambda i: claims[i])


@dataclass
class BsvieSolution:
    model: object
    vdriver: VolterraDriver
    family: TerminalFamily
    Y: np.ndarray
    anchors: list
    solutions: dict = field(default_factory=dict)

    def z(self, i):
        """Flat field holding Z(i, k) at steps k >= i (NaN before)."""
        if i in self.solutions:
            return self.solutions[i].Z
        return _solve_anchor(self.model, self.vdriver, self.family, i).Z

    def y(self, i):
        return self.model.at(self.Y, i)


def _solve_anchor(model, vdriver, family, i):
    try:
        return solve_bsde(model, _AnchorDriver(vdriver, i), family(i), stop_step=i)
    except CsRiskError as exc:
        raise type(exc)(f"anchor {i}: {exc}") from exc


def solve_bsvie(model, vdriver, family, order=None, keep_solutions=True):
    """Solve every anchor's BSDE and assemble the diagonal Y(i) = eta(i; i).

    ``order`` permutes the anchor loop (outputs do not depend on it);
    ``keep_solutions=False`` keeps only the diagonal and recomputes Z on demand.
    """
    anchors = list(range(model.N + 1)) if order is None else [int(i) for i in order]
    if sorted(anchors) != list(range(model.N + 1)):
        raise ConfigurationError("anchor order must be a permutation of 0..N")
    Y = model.blank()
    solutions = {}
    for i in anchors:
        sol = _solve_anchor(model, vdriver, family, i)
        model.at(Y, i)[:] = sol.y(i)
        if keep_solutions:
            solutions[i] = sol
    return BsvieSolution(model, vdriver, family, Y, sorted(anchors), solutions)


def diagonal(solution):
    """Flat field with Y(i) at every step-i state."""
    return solution.Y

"""Backward induction for Y_k = E[Y_{k+1} | F_k] + g(t_k, Y_k, Z_k) delta on the lattice.

The step is implicit in y and explicit in z: Z_k is the martingale component
of Y_{k+1}, then Y_k is the fixed point of y -> E[Y_{k+1}] + g(y, Z_k) delta.
Builtin drivers supply that fixed point in closed form; other drivers go
through Picard iteration, which contracts when C_y delta < 1.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError, StepSizeError
from .lattice import conditional_expectation, martingale_component

PICARD_TOL = 1e-12
PICARD_MAX_ITER = 100


@dataclass
class BsdeSolution:
    model: object
    driver: object
    terminal: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    terminal_step: int
    stop_step: int = 0
    picard_iterations_max: int = 0

    def y(self, k):
        return self.model.at(self.Y, k)

    def z(self, k):
        return self.model.at(self.Z, k)

    @property
    def value(self):
        """Y at the root (step 0)."""
        return float(self.Y[0])


def _check_terminal(model, terminal, step):
    terminal = np.asarray(terminal, dtype=float)
    if terminal.ndim == 0:
        terminal = np.full(model.n_states(step), float(terminal))
    if terminal.shape != (model.n_states(step),):
        raise ConfigurationError(
            f"terminal values at step {step} must have shape ({model.n_states(step)},), got {terminal.shape}"
        )
    if not np.all(np.isfinite(terminal)):
        raise ConfigurationError("terminal claim must be finite everywhere")
    return terminal


def solve_bsde(model, driver, terminal, terminal_step=None, stop_step=0,
               tol=PICARD_TOL, max_iter=PICARD_MAX_ITER):
    """Solve backward from ``terminal`` (values at ``terminal_step``, default N) to ``stop_step``."""
    end = model.N if terminal_step is None else int(terminal_step)
    model.check_step(end)
    model.check_step(stop_step)
    if stop_step > end:
        raise ConfigurationError(f"stop_step {stop_step} is after terminal_step {end}")
    terminal = _check_terminal(model, terminal, end)
    delta = model.delta
    if driver.depends_on_y and driver.lipschitz_y * delta >= 1.0:
        raise StepSizeError(
            f"implicit step does not contract: C_y * delta = {driver.lipschitz_y * delta:.4g} >= 1; "
            f"increase the number of steps"
        )

    Y = model.blank()
    Z = model.blank()
    model.at(Y, end)[:] = terminal
    worst_iter = 0
    for k in range(end - 1, stop_step - 1, -1):
        nxt = model.at(Y, k + 1)
        e = conditional_expectation(model, nxt, k)
        z = martingale_component(model, nxt, k)
        model.at(Z, k)[:] = z
        y = driver.implicit_step(model, k, e, z)
        if y is None:
            if not driver.depends_on_y:
                y = e + driver.evaluate(model, k, e, z) * delta
            else:
                y, used = _picard(model, driver, k, e, z, tol, max_iter)
                worst_iter = max(worst_iter, used)
        y = np.broadcast_to(np.asarray(y, dtype=float), e.shape)
        if not np.all(np.isfinite(y)):
            raise NumericError(f"non-finite solution value at step {k}")
        model.at(Y, k)[:] = y
    return BsdeSolution(model, driver, terminal, Y, Z, end, stop_step, worst_iter)


def _picard(model, driver, k, e, z, tol, max_iter):
    delta = model.delta
    y = e.copy()
    for it in range(1, max_iter + 1):
        new = e + driver.evaluate(model, k, y, z) * delta
        gap = np.abs(new - y)
        y = new
        if np.max(gap) <= tol * max(1.0, float(np.max(np.abs(y)))):
            return y, it
    s = int(np.argmax(gap))
    raise NumericError(
        f"Picard iteration did not converge at step {k}, state {s}: residual {gap[s]:.3e} "
        f"after {max_iter} iterations"
    )


def risk_measure(model, driver, claim):
    """rho_t(X) = Y_t of the BSDE with terminal -X."""
    claim = _check_terminal(model, claim, model.N)
    return solve_bsde(model, driver, -claim)


def flow_consistency_check(solution, s_step, t_step):
    """max |rho_s(X) - rho_s(-rho_t(X))| over step-s states."""
    if s_step > t_step:
        raise ConfigurationError(f"need s <= t, got s = {s_step}, t = {t_step}")
    model = solution.model
    if s_step < solution.stop_step or t_step > solution.terminal_step:
        raise ConfigurationError("flow check steps outside the solved range")
    again = solve_bsde(model, solution.driver, solution.y(t_step).copy(),
                       terminal_step=t_step, stop_step=s_step)
    return float(np.max(np.abs(solution.y(s_step) - again.y(s_step))))

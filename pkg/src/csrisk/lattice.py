"""Binomial scaffold for a one-dimensional Brownian motion.

Every adapted quantity is a flat float64 array holding step 0, then step 1,
..., then step N (see :mod:`csrisk._kernels` for the offsets).  Two layouts:

* ``"node"``: recombining tree, state j at step k has B = (2j - k) sqrt(delta).
* ``"path"``: full binary tree of histories, the most recent move is the
  lowest bit of the state index.  Needed for path-dependent objects
  (discount factors, densities) and capped at 20 steps.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigurationError, LatticeIndexError, LayoutError, TiltError

LAYOUTS = ("node", "path")
PATH_LAYOUT_MAX_STEPS = 20


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    @property
    def delta(self):
        return self.horizon / self.steps

    @property
    def times(self):
        return np.arange(self.steps + 1) * self.delta

    def time(self, k):
        return k * self.delta


def build_grid(T, N):
    """Uniform grid on [0, T] with N steps."""
    if isinstance(N, bool) or int(N) != N:
        raise ConfigurationError(f"number of steps must be an integer, got {N!r}")
    if not np.isfinite(T) or T <= 0:
        raise ConfigurationError(f"horizon must be positive, got {T!r}")
    if N < 1:
        raise ConfigurationError(f"number of steps must be >= 1, got {N!r}")
    return TimeGrid(float(T), int(N))


@dataclass(frozen=True)
class LatticeModel:
    grid: TimeGrid
    layout: str = "node"
    _code: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ConfigurationError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.layout == "path" and self.grid.steps > PATH_LAYOUT_MAX_STEPS:
            raise LayoutError(
                f"path layout holds 2**N histories and is capped at N = {PATH_LAYOUT_MAX_STEPS}; "
                f"got N = {self.grid.steps}"
            )
        object.__setattr__(self, "_code", _kernels.NODE if self.layout == "node" else _kernels.PATH)

    @classmethod
    def build(cls, T, N, layout="node"):
        return cls(build_grid(T, N), layout)

    @property
    def N(self):
        return self.grid.steps

    @property
    def delta(self):
        return self.grid.delta

    @property
    def sqrt_delta(self):
        return np.sqrt(self.grid.delta)

    @property
    def code(self):
        return self._code

    @property
    def is_path(self):
        return self.layout == "path"

    def offset(self, k):
        return _kernels.step_offset(k, self._code)

    def n_states(self, k):
        return _kernels.step_size(k, self._code)

    @property
    def size(self):
        return self.offset(self.N + 1)

    def check_step(self, k):
        if not 0 <= k <= self.N:
            raise LatticeIndexError(f"step {k} outside 0..{self.N}")

    def at(self, values, k):
        """View of the step-k layer of a flat field."""
        off = self.offset(k)
        return values[off:off + self.n_states(k)]

    def blank(self):
        return np.full(self.size, np.nan)

    def up_counts(self, k):
        if self.layout == "node":
            return np.arange(k + 1)
        states = np.arange(1 << k, dtype=np.int64)
        counts = np.zeros_like(states)
        for bit in range(k):
            counts += (states >> bit) & 1
        return counts

    def brownian(self, k):
        """Brownian value at every step-k state."""
        return (2 * self.up_counts(k) - k) * self.sqrt_delta

    def brownian_field(self):
        return np.concatenate([self.brownian(k) for k in range(self.N + 1)])

    def terminal_brownian(self):
        return self.brownian(self.N)

    def children(self, values_next):
        """(down, up) successor values aligned with the parent states."""
        if self.layout == "node":
            return values_next[:-1], values_next[1:]
        return values_next[0::2], values_next[1::2]

    def constant_field(self, c):
        return np.full(self.size, float(c))

    def deterministic_field(self, per_step):
        """Field equal to ``per_step[k]`` at every step-k state (length N or N+1)."""
        per_step = np.asarray(per_step, dtype=float)
        if per_step.shape not in ((self.N,), (self.N + 1,)):
            raise ConfigurationError(
                f"per-step values must have length {self.N} or {self.N + 1}, got {per_step.shape}"
            )
        if per_step.shape[0] == self.N:
            per_step = np.append(per_step, per_step[-1])
        return np.concatenate([np.full(self.n_states(k), per_step[k]) for k in range(self.N + 1)])

    def field_from(self, fn):
        """Field with value ``fn(k, B_k)`` at every step-k state."""
        out = np.empty(self.size)
        for k in range(self.N + 1):
            self.at(out, k)[:] = np.broadcast_to(fn(k, self.brownian(k)), (self.n_states(k),))
        return out

    def as_field(self, value):
        """Coerce a scalar, per-step sequence or flat field into a flat field."""
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 0:
            return self.constant_field(float(arr))
        if arr.shape == (self.size,):
            return arr
        return self.deterministic_field(arr)

    def is_deterministic(self, values, last_step=None):
        last = self.N if last_step is None else last_step
        return all(np.ptp(self.at(values, k)) == 0.0 for k in range(last + 1))

    # path-layout helpers -------------------------------------------------
    def _require_path(self, what):
        if not self.is_path:
            raise LayoutError(f"{what} needs the path layout (path-dependent quantity)")

    def expand(self, values_k, k):
        """Repeat step-k values onto the 2**N histories that extend each state."""
        self._require_path("expand")
        return np.repeat(np.asarray(values_k, dtype=float), 1 << (self.N - k))

    def block_mean(self, leaf_values, k):
        """E_P[leaf | F_k] for a path-layout terminal array."""
        self._require_path("block_mean")
        return np.asarray(leaf_values, dtype=float).reshape(1 << k, -1).mean(axis=1)

    def is_adapted(self, per_path, atol=0.0):
        """Check a (N+1, 2**N) table of per-history values for adaptedness by prefix equality."""
        self._require_path("is_adapted")
        per_path = np.asarray(per_path, dtype=float)
        for k in range(per_path.shape[0]):
            blocks = per_path[k].reshape(1 << k, -1)
            if np.max(np.abs(blocks - blocks[:, :1])) > atol:
                return False
        return True


@dataclass(frozen=True)
class MeasureTilt:
    """Per-step up-probabilities p = (1 - theta sqrt(delta)) / 2.

    Under the tilted measure a one-step increment has mean -theta * delta.
    """

    model: LatticeModel
    theta: np.ndarray
    p_up: np.ndarray


def tilt_probabilities(model, theta, strict=True):
    theta = model.as_field(theta)
    scaled = np.abs(theta) * model.sqrt_delta
    for k in range(model.N):
        layer = model.at(scaled, k)
        bad = layer >= 1.0 if strict else layer > 1.0
        if bad.any():
            s = int(np.argmax(bad))
            raise TiltError(
                f"tilt drift {float(model.at(theta, k)[s]):.6g} at step {k}, state {s} violates "
                f"|theta| sqrt(delta) {'<' if strict else '<='} 1 (delta = {model.delta})"
            )
    p_up = 0.5 * (1.0 - theta * model.sqrt_delta)
    model.at(p_up, model.N)[:] = 0.5
    return MeasureTilt(model, theta, p_up)


def conditional_expectation(model, field_next, k, tilt=None):
    """E[V_{k+1} | F_k], under the tilted measure when ``tilt`` is given."""
    if not 0 <= k < model.N:
        raise LatticeIndexError(f"conditional expectation needs 0 <= k < N, got k = {k}")
    field_next = np.asarray(field_next, dtype=float)
    if field_next.shape != (model.n_states(k + 1),):
        raise ConfigurationError(
            f"step-{k + 1} values must have shape ({model.n_states(k + 1)},), got {field_next.shape}"
        )
    down, up = model.children(field_next)
    if tilt is None:
        return 0.5 * (up + down)
    p = model.at(tilt.p_up, k)
    return p * up + (1.0 - p) * down


def martingale_component(model, field_next, k):
    """Z_k = E[V_{k+1} xi_k | F_k] / delta = (V_up - V_down) / (2 sqrt(delta))."""
    if not 0 <= k < model.N:
        raise LatticeIndexError(f"martingale component needs 0 <= k < N, got k = {k}")
    field_next = np.asarray(field_next, dtype=float)
    if field_next.shape != (model.n_states(k + 1),):
        raise ConfigurationError(
            f"step-{k + 1} values must have shape ({model.n_states(k + 1)},), got {field_next.shape}"
        )
    down, up = model.children(field_next)
    return (up - down) / (2.0 * model.sqrt_delta)


def pathwise_density(tilt, from_step=0):
    """Likelihood ratio of the tilted measure w.r.t. P on F_T given F_{from_step}, per history."""
    model = tilt.model
    model._require_path("pathwise_density")
    model.check_step(from_step)
    out = np.empty(model.size)
    _kernels.forward_affine(
        out, np.ones(model.n_states(from_step)),
        2.0 * (1.0 - tilt.p_up), 2.0 * tilt.p_up,
        np.zeros(model.size), np.zeros(model.size),
        from_step, model.N,
    )
    return model.at(out, model.N).copy()


def left_riemann_integral(model, values, i, k):
    """delta * sum_{m=i}^{k-1} values_m along each history, returned at step k."""
    if i > k:
        raise LatticeIndexError(f"integral bounds out of order: i = {i} > k = {k}")
    model.check_step(i)
    model.check_step(k)
    values = model.as_field(values)
    if model.is_path:
        out = np.empty(model.size)
        ones = np.ones(model.size)
        add = values * model.delta
        _kernels.forward_affine(out, np.zeros(model.n_states(i)), ones, ones, add, add, i, k)
        return model.at(out, k).copy()
    if not model.is_deterministic(values, max(k - 1, 0)):
        raise LayoutError("node layout integrates only fields that are deterministic in time")
    total = sum(model.at(values, m)[0] for m in range(i, k)) * model.delta
    return np.full(model.n_states(k), float(total))

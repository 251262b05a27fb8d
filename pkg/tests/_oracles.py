"""Independent reference implementations used to freeze expected values.

Nothing here calls the package's solvers: trees are walked by explicit
recursion over move tuples, implicit steps are solved by bisection, and
scenario prices are sums over enumerated paths.
"""

import itertools
import math


def move_paths(N):
    """All move tuples (+1 up, -1 down) ordered like the path layout (first move is the top bit)."""
    return [tuple(+1 if b else -1 for b in bits) for bits in itertools.product((0, 1), repeat=N)]


def path_index(prefix):
    s = 0
    for mv in prefix:
        s = 2 * s + (1 if mv > 0 else 0)
    return s


def brownian(prefix, sqrt_delta):
    return sqrt_delta * sum(prefix)


def _bisect(f, lo, hi, iters=200):
    while f(lo) > 0:
        lo -= 2 * (hi - lo) + 1
    while f(hi) < 0:
        hi += 2 * (hi - lo) + 1
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-16 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def tree_bsde(N, T, g, terminal):
    """Solve y = E[Y'] + g(k, prefix, y, z) delta on every prefix by recursion.

    ``terminal(path)`` gives the value on a full move tuple.  Returns dicts
    prefix -> y and prefix -> z.
    """
    delta = T / N
    sd = math.sqrt(delta)
    Y, Z = {}, {}

    def solve(prefix):
        if len(prefix) == N:
            Y[prefix] = float(terminal(prefix))
            return Y[prefix]
        up = solve(prefix + (1,))
        down = solve(prefix + (-1,))
        e = 0.5 * (up + down)
        z = (up - down) / (2 * sd)
        k = len(prefix)
        y = _bisect(lambda v: v - e - g(k, prefix, v, z) * delta, e - 1.0, e + 1.0)
        Y[prefix], Z[prefix] = y, z
        return y

    solve(())
    return Y, Z


def scenario_price(N, T, beta, mu, payoff, G=None, t_prefix=(), implicit=True):
    """E_Q[D(t, N) payoff - sum_k D(t, k+1) G_k delta | prefix] by summing over paths.

    ``beta``, ``mu`` and ``G`` are callables (k, prefix) -> float.
    """
    delta = T / N
    sd = math.sqrt(delta)
    t = len(t_prefix)
    total = 0.0
    for tail in itertools.product((1, -1), repeat=N - t):
        path = tuple(t_prefix) + tail
        prob, disc, pen = 1.0, 1.0, 0.0
        for k in range(t, N):
            pre = path[:k]
            p_up = 0.5 * (1 - mu(k, pre) * sd)
            prob *= p_up if path[k] > 0 else 1 - p_up
            d = 1.0 / (1.0 + beta(k, pre) * delta) if implicit else math.exp(-beta(k, pre) * delta)
            disc *= d
            if G is not None:
                pen += disc * G(k, pre) * delta
        total += prob * (disc * payoff(path) - pen)
    return total

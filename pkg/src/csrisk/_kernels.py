"""Hot lattice loops: one-step affine backward recursion and forward path products.

Both kernels come in two flavours with identical floating-point operation
order: a numba ``@njit`` loop and a per-step vectorised numpy version.  The
numba path is used when numba imports and ``CSRISK_USE_NUMBA`` is not ``0``.

Fields are stored flat, step after step.  Layout code 0 is the recombining
node layout (step k starts at k(k+1)/2 and holds k+1 states, children of
state s are s and s+1), layout code 1 is the path layout (step k starts at
2**k - 1 and holds 2**k histories, children of s are 2s and 2s+1).
"""

import os

import numpy as np

NODE = 0
PATH = 1

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CSRISK_USE_NUMBA", "1") != "0"


def step_offset(k, layout):
    if layout == NODE:
        return k * (k + 1) // 2
    return (1 << k) - 1


def step_size(k, layout):
    if layout == NODE:
        return k + 1
    return 1 << k


def backward_affine_numpy(values, p_up, scale, shift, end_step, stop_step, layout):
    """V_k = scale_k * (p_k V_up + (1 - p_k) V_down) + shift_k for k = end_step-1 .. stop_step.

    ``values`` must hold the terminal layer at ``end_step``; it is updated in place
    and returned.
    """
    for k in range(end_step - 1, stop_step - 1, -1):
        off = step_offset(k, layout)
        n = step_size(k, layout)
        nxt = step_offset(k + 1, layout)
        child = values[nxt:nxt + step_size(k + 1, layout)]
        if layout == NODE:
            down, up = child[:-1], child[1:]
        else:
            down, up = child[0::2], child[1::2]
        p = p_up[off:off + n]
        values[off:off + n] = scale[off:off + n] * (p * up + (1.0 - p) * down) + shift[off:off + n]
    return values


def forward_affine_numpy(out, init, mult_down, mult_up, add_down, add_up, start, end_step):
    """Path layout only: F_{k+1}[child] = F_k[parent] * mult + add, seeded with ``init`` at ``start``."""
    off = step_offset(start, PATH)
    out[off:off + (1 << start)] = init
    for k in range(start, end_step):
        off = step_offset(k, PATH)
        n = 1 << k
        nxt = step_offset(k + 1, PATH)
        parent = out[off:off + n]
        out[nxt:nxt + 2 * n:2] = parent * mult_down[off:off + n] + add_down[off:off + n]
        out[nxt + 1:nxt + 2 * n:2] = parent * mult_up[off:off + n] + add_up[off:off + n]
    return out


if HAVE_NUMBA:

    @njit(cache=True)
    def backward_affine_numba(values, p_up, scale, shift, end_step, stop_step, layout):
        for k in range(end_step - 1, stop_step - 1, -1):
            if layout == 0:
                off = k * (k + 1) // 2
                nxt = (k + 1) * (k + 2) // 2
                n = k + 1
            else:
                off = (1 << k) - 1
                nxt = (1 << (k + 1)) - 1
                n = 1 << k
            for s in range(n):
                if layout == 0:
                    d = nxt + s
                else:
                    d = nxt + 2 * s
                i = off + s
                p = p_up[i]
                values[i] = scale[i] * (p * values[d + 1] + (1.0 - p) * values[d]) + shift[i]
        return values

    @njit(cache=True)
    def forward_affine_numba(out, init, mult_down, mult_up, add_down, add_up, start, end_step):
        off = (1 << start) - 1
        for s in range(1 << start):
            out[off + s] = init[s]
        for k in range(start, end_step):
            off = (1 << k) - 1
            nxt = (1 << (k + 1)) - 1
            for s in range(1 << k):
                i = off + s
                v = out[i]
                out[nxt + 2 * s] = v * mult_down[i] + add_down[i]
                out[nxt + 2 * s + 1] = v * mult_up[i] + add_up[i]
        return out

else:  # pragma: no cover
    backward_affine_numba = backward_affine_numpy
    forward_affine_numba = forward_affine_numpy


def backward_affine(values, p_up, scale, shift, end_step, stop_step, layout):
    if USE_NUMBA:
        return backward_affine_numba(values, p_up, scale, shift, end_step, stop_step, layout)
    return backward_affine_numpy(values, p_up, scale, shift, end_step, stop_step, layout)


def forward_affine(out, init, mult_down, mult_up, add_down, add_up, start, end_step):
    init = np.ascontiguousarray(init, dtype=np.float64)
    if USE_NUMBA:
        return forward_affine_numba(out, init, mult_down, mult_up, add_down, add_up, start, end_step)
    return forward_affine_numpy(out, init, mult_down, mult_up, add_down, add_up, start, end_step)

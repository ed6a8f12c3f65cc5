"""Pure numpy implementations of the hot kernels.

These are the reference for the compiled versions in ``_ckernels.pyx``;
both must produce the same numbers for the same inputs.
"""

import numpy as np
from scipy.signal import lfilter


def ar1_filter(innov, rho, x_init):
    """Run ``x[j] = rho * x[j-1] + innov[j]`` along the last axis.

    ``innov`` has shape ``(m, n)``, ``rho`` and ``x_init`` shape ``(m,)``;
    ``x[-1]`` is taken to be ``x_init``.
    """
    innov = np.asarray(innov, dtype=np.float64)
    rho = np.asarray(rho, dtype=np.float64)
    x_init = np.asarray(x_init, dtype=np.float64)
    out = np.empty_like(innov)
    for r in np.unique(rho):
        rows = np.nonzero(rho == r)[0]
        zi = (r * x_init[rows])[:, None]
        out[rows], _ = lfilter([1.0], [1.0, -r], innov[rows], axis=-1, zi=zi)
    return out


def first_passage(x, t, drift, level, dt, normals, uniforms):
    """Advance drifted Brownian paths through one block of Gaussian steps.

    Paths with ``t`` already NaN-free hit times are not touched. Returns the
    updated positions, elapsed times, and hit times (NaN while still running).
    A crossing inside a step is detected with the Brownian-bridge probability
    ``exp(-2 (level - x0)(level - x1) / dt)``.
    """
    x = np.array(x, dtype=np.float64)
    t = np.array(t, dtype=np.float64)
    n_paths, n_steps = normals.shape
    hit = np.full(n_paths, np.nan)
    sq = np.sqrt(dt)
    inc = drift * dt + sq * normals
    path = np.cumsum(np.concatenate([x[:, None], inc], axis=1), axis=1)
    prev = path[:, :-1]
    cur = path[:, 1:]
    below = (prev < level) & (cur < level)
    with np.errstate(over="ignore", under="ignore"):
        p = np.where(below, np.exp(-2.0 * (level - prev) * (level - cur) / dt), 0.0)
    crossed = (cur >= level) | (uniforms < p)
    any_cross = crossed.any(axis=1)
    j = np.argmax(crossed, axis=1)
    rows = np.arange(n_paths)
    x0 = prev[rows, j]
    x1 = cur[rows, j]
    frac = np.where(x1 >= level, (level - x0) / np.where(x1 > x0, x1 - x0, 1.0), 0.5)
    hit_t = t + j * dt + frac * dt
    hit[any_cross] = hit_t[any_cross]
    x_out = np.where(any_cross, level, path[:, -1])
    t_out = np.where(any_cross, hit_t, t + n_steps * dt)
    return x_out, t_out, hit


def bilinear(values, r, c, periodic_cols):
    """Bilinear interpolation of a 2-d array at fractional indices.

    ``r`` and ``c`` are fractional row/column indices where integer values hit
    cell centers. Columns wrap when ``periodic_cols``; rows never wrap and the
    caller must keep ``0 <= r <= nrows - 1``.
    """
    values = np.asarray(values, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    nr, nc = values.shape
    r0 = np.clip(np.floor(r).astype(np.int64), 0, nr - 2)
    fr = r - r0
    c0 = np.floor(c).astype(np.int64)
    fc = c - c0
    if periodic_cols:
        c0 = np.mod(c0, nc)
        c1 = np.mod(c0 + 1, nc)
    else:
        c0 = np.clip(c0, 0, nc - 2)
        fc = c - c0
        c1 = c0 + 1
    v00 = values[r0, c0]
    v01 = values[r0, c1]
    v10 = values[r0 + 1, c0]
    v11 = values[r0 + 1, c1]
    return (1 - fr) * ((1 - fc) * v00 + fc * v01) + fr * ((1 - fc) * v10 + fc * v11)

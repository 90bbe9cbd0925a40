"""Shared numerical utilities: stencils, quadrature rules, reductions, fits.

Everything here is deterministic: quadrature nodes come from fixed rules and
all reductions use pairwise summation, so repeated runs produce bit-identical
results.
"""

import numpy as np

# Coefficients of the 4th-order centered first-derivative stencil at
# offsets (-2h, -h, +h, +2h).
_D1_COEFF = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_D1_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])

# 4th-order second derivative at offsets (-2h, -h, 0, +h, +2h).
_D2_COEFF = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_D2_OFFSETS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])

STENCIL_ORDER = 4


def displaced_points(x, h, axes=None):
    """Points needed by the first-derivative stencil around ``x``.

    Returns an array of shape (len(axes), 4, dim); row [i, j] is
    ``x + _D1_OFFSETS[j] * h * e_axes[i]``.
    """
    x = np.asarray(x, dtype=float)
    dim = x.shape[-1]
    if axes is None:
        axes = range(dim)
    axes = list(axes)
    pts = np.tile(x, (len(axes), 4, 1))
    for i, ax in enumerate(axes):
        pts[i, :, ax] += _D1_OFFSETS * h
    return pts


def stencil_d1(values, h):
    """First derivative from samples at (-2h, -h, +h, +2h).

    ``values`` may have extra trailing dimensions; the stencil axis is the
    first one.
    """
    values = np.asarray(values)
    return np.tensordot(_D1_COEFF, values, axes=(0, 0)) / h


def stencil_d2(values, h):
    """Second derivative from samples at (-2h, -h, 0, +h, +2h)."""
    values = np.asarray(values)
    return np.tensordot(_D2_COEFF, values, axes=(0, 0)) / h**2


def grad_fd(f, x, h, axes=None):
    """4th-order gradient of ``f`` (scalar or array valued) at ``x``.

    ``f`` must accept a batch of points of shape (n, dim).  The result has
    shape ``f(x).shape + (len(axes),)``.
    """
    x = np.asarray(x, dtype=float)
    dim = x.shape[-1]
    if axes is None:
        axes = list(range(dim))
    pts = displaced_points(x, h, axes).reshape(-1, dim)
    vals = np.asarray(f(pts))
    vals = vals.reshape((len(axes), 4) + vals.shape[1:])
    out = np.tensordot(_D1_COEFF, vals, axes=(0, 1)) / h  # (axes,) + value shape
    return np.moveaxis(out, 0, -1)


def richardson(coarse, fine, order=STENCIL_ORDER):
    """Richardson pair for a step halving.

    ``coarse`` was computed with step h, ``fine`` with step h/2, both with a
    scheme of the given order.  Returns (extrapolated, error_estimate) where
    the estimate bounds the error of ``fine``.
    """
    coarse = np.asarray(coarse, dtype=float)
    fine = np.asarray(fine, dtype=float)
    gain = 2.0**order - 1.0
    diff = (fine - coarse) / gain
    extrap = fine + diff
    err = float(np.max(np.abs(diff))) if diff.size else 0.0
    return extrap, err


def pairwise_sum(values, axis=None):
    """Deterministic pairwise summation.

    For 1-d input returns a float; otherwise reduces along ``axis`` (default:
    first axis).  The reduction tree depends only on the input length, which
    keeps parallel-friendly reductions reproducible run to run.
    """
    a = np.asarray(values, dtype=float)
    if axis is None:
        a = a.ravel()
        axis = 0
    else:
        a = np.moveaxis(a, axis, 0)
    n = a.shape[0]
    if n == 0:
        return 0.0 if a.ndim == 1 else np.zeros(a.shape[1:])
    while n > 1:
        half = n // 2
        head = a[: 2 * half]
        a = np.concatenate([head[0::2] + head[1::2], a[2 * half : n]], axis=0)
        n = a.shape[0]
    out = a[0]
    return float(out) if np.ndim(out) == 0 else out


def gauss_legendre(n, a=-1.0, b=1.0):
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def sphere_rule(n_polar, n_azimuth):
    """Product quadrature on the unit sphere.

    Gauss-Legendre in the polar cosine crossed with uniform midpoints in
    azimuth.  Returns (units, weights) with ``units`` of shape (N, 3) and
    weights summing to 4*pi.  Exact for spherical harmonics up to degree
    ~min(2*n_polar - 1, n_azimuth - 1).
    """
    u, wu = gauss_legendre(n_polar)  # u = cos(polar)
    phi = 2.0 * np.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
    wphi = 2.0 * np.pi / n_azimuth
    s = np.sqrt(1.0 - u**2)
    units = np.empty((n_polar, n_azimuth, 3))
    units[..., 0] = s[:, None] * np.cos(phi)[None, :]
    units[..., 1] = s[:, None] * np.sin(phi)[None, :]
    units[..., 2] = u[:, None]
    weights = np.broadcast_to(wu[:, None] * wphi, (n_polar, n_azimuth))
    return units.reshape(-1, 3), weights.reshape(-1).copy()


def radial_panels(r_min, r_max, n_panels, nodes_per_panel, geometric=True):
    """Gauss-Legendre nodes on a panelled radial interval.

    Panels are geometrically spaced by default, which resolves integrands
    with power-law tails.  Returns flat (nodes, weights).
    """
    if geometric and r_min > 0:
        edges = np.geomspace(r_min, r_max, n_panels + 1)
    else:
        edges = np.linspace(r_min, r_max, n_panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(nodes_per_panel, lo, hi)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def loglog_slope(x, y):
    """Least-squares slope of log|y| against log x."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    mask = y > 0
    if mask.sum() < 2:
        raise ValueError("need at least two nonzero samples for a slope fit")
    design = np.stack([np.ones(mask.sum()), np.log(x[mask])], axis=1)
    coeff, *_ = np.linalg.lstsq(design, np.log(y[mask]), rcond=None)
    return float(coeff[1])


def fit_constant_plus_inverse(r, values):
    """Fit values(r) = a + b/r.  Returns (a, b, max_residual)."""
    r = np.asarray(r, dtype=float)
    values = np.asarray(values, dtype=float)
    design = np.stack([np.ones_like(r), 1.0 / r], axis=1)
    coeff, *_ = np.linalg.lstsq(design, values, rcond=None)
    resid = values - design @ coeff
    return float(coeff[0]), float(coeff[1]), float(np.max(np.abs(resid)))


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, monotone in between."""
    t = np.asarray(t, dtype=float)
    below = t <= 0.0
    above = t >= 1.0
    mid = np.clip(t, 1e-12, 1.0 - 1e-12)
    a = np.exp(-1.0 / mid)
    b = np.exp(-1.0 / (1.0 - mid))
    out = a / (a + b)
    out = np.where(below, 0.0, out)
    out = np.where(above, 1.0, out)
    return out if out.ndim else float(out)


def wrap_half(x):
    """Representative of x mod 1/2 in [0, 1/2)."""
    return np.mod(x, 0.5)


def distance_to_integers(x):
    """Distance from x to the nearest integer."""
    return np.abs(x - np.round(x))


def orthonormal_complement(axis):
    """Two unit vectors completing ``axis`` to a right-handed orthonormal triple.

    Deterministic: picks the coordinate direction least aligned with the axis.
    """
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(axis)))] = 1.0
    u = seed - np.dot(seed, axis) * axis
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v

"""Diagonal abelian anti-self-dual connections with per-center charges.

Each summand is a line bundle carrying a real asymptotic parameter and one
integer charge per center.  Its connection one-form is

    a = ((H/V) (dtau + omega) - eta) / 2,

where H is the harmonic function of the summand (asymptotic parameter plus
charge over distance, summed over centers) and eta is the charge-weighted sum
of the unit monopole forms, so d(eta) = *dH.  The curvature has the closed
form  F = d(H/V) ^ (dtau + omega) / 2 - V *d(H/V) / 2,  which is exactly
anti-self-dual in the fixed orientation.  The full connection on a direct sum
is -i diag(a_j).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBundleError, StepValidationError
from .geometry import (
    _EPS3,
    _EPS4,
    NORTH,
    SOUTH,
    azimuth_gradients,
    christoffels_fd,
    coframe,
    default_step,
    frame_vectors,
    metric,
    monopole_forms,
    omega,
    pairwise_sum_last,
    riemann_fd,
)
from .numerics import (
    displaced_points,
    loglog_slope,
    stencil_d1,
)

INTEGER_TOL = 1e-9


@dataclass(frozen=True)
class LineBundle:
    """One abelian summand: asymptotic parameter and per-center charges.

    The asymptotic fiber holonomy eigenvalue of the summand is
    exp(2*pi*i*lam/l).  Charges must be integers, one per center.
    """

    lam: float
    v: tuple

    def __post_init__(self):
        v = tuple(int(c) for c in np.atleast_1d(np.asarray(self.v)).tolist()) if np.size(self.v) else ()
        for c_raw, c_int in zip(np.atleast_1d(np.asarray(self.v)).tolist(), v):
            if c_raw != c_int:
                raise ValueError("charges must be integers")
        object.__setattr__(self, "v", v)

    @property
    def m(self):
        """Total charge (sum of per-center charges)."""
        return sum(self.v)

    def is_degenerate(self, space):
        """True when lam/l is an integer, i.e. the asymptotic holonomy has an
        invariant vector.  Such bundles are constructible but rejected by
        index and Fredholm computations."""
        a = self.lam / space.l
        return abs(a - round(a)) <= INTEGER_TOL

    def charge_array(self, space):
        if len(self.v) != space.k:
            raise ValueError(f"bundle has {len(self.v)} charges but the space has {space.k} centers")
        return np.asarray(self.v, dtype=float)

    def potential(self, space, x):
        """Harmonic function of the summand, lam + sum_sigma v_sigma/r_sigma."""
        v = self.charge_array(space)
        r = space.center_distances(x)
        return self.lam + pairwise_sum_last(v / r)

    def potential_gradient(self, space, x):
        x = np.asarray(x, dtype=float)
        if space.k == 0:
            return np.zeros_like(x)
        v = self.charge_array(space)
        d = x[..., None, :] - space.centers
        r = np.linalg.norm(d, axis=-1)
        return pairwise_sum_last(-v[..., :, None] * d / r[..., None] ** 3, axis=-2)


@dataclass(frozen=True)
class InstantonBundle:
    """Ordered direct sum of line-bundle summands."""

    summands: tuple

    def __post_init__(self):
        object.__setattr__(self, "summands", tuple(self.summands))

    @property
    def n(self):
        return len(self.summands)

    def asymptotic_eigenvalue_params(self, space):
        """lam_j / l for each summand."""
        return np.array([s.lam / space.l for s in self.summands])

    def has_generic_asymptotic_holonomy(self, space, margin=INTEGER_TOL):
        """True when the asymptotic eigenvalue parameters are pairwise
        distinct mod 1."""
        a = self.asymptotic_eigenvalue_params(space)
        for i in range(len(a)):
            for j in range(i + 1, len(a)):
                d = a[i] - a[j]
                if abs(d - round(d)) <= margin:
                    return False
        return True

    def require_nondegenerate(self, space):
        for i, s in enumerate(self.summands):
            if s.is_degenerate(space):
                raise DegenerateBundleError(
                    f"summand {i} has integer asymptotic eigenvalue parameter "
                    f"lam/l = {s.lam / space.l:g}; the operation requires the "
                    "asymptotic holonomy to have no invariant vectors"
                )


def potential_ratio(space, bundle, x):
    """f = H/V for one summand, batched."""
    return bundle.potential(space, x) / space.potential(x)


def potential_ratio_gradient(space, bundle, x):
    """Gradient of H/V, computed from the analytic gradients of H and V."""
    v = space.potential(x)
    f = bundle.potential(space, x) / v
    dh = bundle.potential_gradient(space, x)
    dv = space.potential_gradient(x)
    return (dh - f[..., None] * dv) / v[..., None]


def charge_form(space, bundle, x, patch=NORTH, check_strings=True):
    """eta = sum_sigma v_sigma * (unit monopole form of center sigma)."""
    forms = monopole_forms(space, x, patch, check_strings)
    if space.k == 0:
        return np.zeros(np.asarray(x, dtype=float).shape)
    v = bundle.charge_array(space)
    return pairwise_sum_last(v[..., :, None] * forms, axis=-2)


@dataclass(frozen=True)
class ConnectionForm:
    """Connection one-form of a summand at a point.

    ``coordinate`` holds components against (dx^1, dx^2, dx^3, dtau) in the
    given patch; ``frame`` holds components in the orthonormal frame.  The
    unitary connection of the summand is -i times this real form.
    """

    coordinate: np.ndarray
    frame: np.ndarray
    patch: object


def connection_form(space, bundle, x, patch=NORTH):
    x = np.asarray(x, dtype=float)
    space.check_off_center(x)
    f = potential_ratio(space, bundle, x)
    w = omega(space, x, patch)
    eta = charge_form(space, bundle, x, patch)
    a = np.zeros(x.shape[:-1] + (4,))
    a[..., :3] = 0.5 * (f[..., None] * w - eta)
    a[..., 3] = 0.5 * f
    X = frame_vectors(space, x, patch)
    a_frame = np.einsum("...am,...m->...a", X, a)
    return ConnectionForm(coordinate=a, frame=a_frame, patch=patch)


# ---------------------------------------------------------------------------
# Curvature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvatureSample:
    """Curvature two-form of a summand in the orthonormal frame.

    For this family the sample is fiber-independent, so it equals its own
    zero Fourier mode along the fiber and the off-centralizer part vanishes
    identically.
    """

    frame: np.ndarray           # antisymmetric (4, 4)
    zero_fourier_mode: bool = True

    def norm(self):
        return float(np.sqrt(0.5 * np.sum(self.frame**2)))

    def sd_part(self, orientation=1.0):
        return 0.5 * (self.frame + hodge_star_2form(self.frame, orientation))

    def asd_part(self, orientation=1.0):
        return 0.5 * (self.frame - hodge_star_2form(self.frame, orientation))


def hodge_star_2form(f, orientation=1.0):
    """Hodge star of a two-form given by orthonormal frame components."""
    return 0.5 * orientation * np.einsum("abcd,...cd->...ab", _EPS4, f)


def curvature_frame_components(space, bundle, x):
    """Orthonormal components of the summand curvature, shape (..., 4, 4).

    Built from the flat gradient g of f = H/V:  F_{i4} = g_i/2 on the
    fiber-mixing side and F_{jk} = -g_i/2 for (i, j, k) cyclic, which makes
    the form anti-self-dual in the fixed orientation.
    """
    x = np.asarray(x, dtype=float)
    g = potential_ratio_gradient(space, bundle, x)
    F = np.zeros(x.shape[:-1] + (4, 4))
    for i in range(3):
        F[..., i, 3] = 0.5 * g[..., i]
        F[..., 3, i] = -0.5 * g[..., i]
    F[..., 1, 2] = -0.5 * g[..., 0]
    F[..., 2, 1] = 0.5 * g[..., 0]
    F[..., 2, 0] = -0.5 * g[..., 1]
    F[..., 0, 2] = 0.5 * g[..., 1]
    F[..., 0, 1] = -0.5 * g[..., 2]
    F[..., 1, 0] = 0.5 * g[..., 2]
    return F


def curvature(space, bundle, x):
    space.check_off_center(x)
    return CurvatureSample(frame=curvature_frame_components(space, bundle, x))


def bundle_curvature(space, bundle, x):
    """Per-summand curvature samples of a direct sum (the diagonal)."""
    return [curvature(space, s, x) for s in bundle.summands]


def curvature_coordinate_components(space, bundle, x, patch=NORTH):
    """Coordinate components F_{mu nu} in (x, tau) coordinates of a patch."""
    x = np.asarray(x, dtype=float)
    g = potential_ratio_gradient(space, bundle, x)
    v = space.potential(x)
    w = omega(space, x, patch, check_strings=False)
    F = np.zeros(x.shape[:-1] + (4, 4))
    fij = 0.5 * (g[..., :, None] * w[..., None, :] - g[..., None, :] * w[..., :, None])
    fij -= 0.5 * v[..., None, None] * np.einsum("ijk,...k->...ij", _EPS3, g)
    F[..., :3, :3] = fij
    F[..., :3, 3] = 0.5 * g
    F[..., 3, :3] = -0.5 * g
    return F


def curvature_fd(space, bundle, x, patch=NORTH, step=None):
    """Curvature by centered differencing of the connection form.

    Independent cross-check of the closed form: F_{mu nu} = d_mu a_nu -
    d_nu a_mu in coordinates, then converted to the orthonormal frame.
    """
    x = np.asarray(x, dtype=float)
    if step is None:
        step = default_step(space, x)
    pts = displaced_points(x, step).reshape(-1, 3)
    a = connection_form(space, bundle, pts, patch).coordinate.reshape(3, 4, 4)
    da = stencil_d1(np.moveaxis(a, 1, 0), step)  # (3, 4): d_i a_nu
    da4 = np.zeros((4, 4))
    da4[:3] = da
    F_coord = da4 - da4.T
    X = frame_vectors(space, x, patch)
    return np.einsum("am,bn,mn->ab", X, X, F_coord)


def asd_residual(sample, orientation=1.0, floor=1e-300):
    """|F + *F| / max(|F|, floor); zero for anti-self-dual forms."""
    f = sample.frame if isinstance(sample, CurvatureSample) else np.asarray(sample)
    s = f + hodge_star_2form(f, orientation)
    num = np.sqrt(0.5 * np.sum(s**2))
    den = max(np.sqrt(0.5 * np.sum(f**2)), floor)
    return float(num / den)


# ---------------------------------------------------------------------------
# Patch comparison
# ---------------------------------------------------------------------------

def patch_gauge_difference(space, bundle, x, step=None):
    """Compare the connection between the two patches at ``x``.

    After transporting components to account for the fiber-coordinate
    transition, the difference of the two patch expressions is the gradient
    of chi = sum_sigma v_sigma * (azimuth about center sigma), a closed form
    whose period around the axis is an integer multiple of 2*pi.

    Returns a dict with the corrected difference, its analytic value, the
    FD closedness residual of the difference, and the loop period over 2*pi.
    """
    x = np.asarray(x, dtype=float)
    north, south = NORTH, SOUTH
    if step is None:
        step = default_step(space, x)

    def corrected_difference(pts):
        pts = np.atleast_2d(pts)
        a_n = connection_form(space, bundle, pts, north).coordinate[..., :3]
        a_s = connection_form(space, bundle, pts, south).coordinate[..., :3]
        f = potential_ratio(space, bundle, pts)
        dphi = pairwise_sum_last(azimuth_gradients(space, pts, north), axis=-2)
        return a_n - a_s + f[..., None] * dphi

    delta = corrected_difference(x[None])[0]
    grads = azimuth_gradients(space, x[None], north)[0]
    v = bundle.charge_array(space)
    analytic = (v[:, None] * grads).sum(axis=0) if space.k else np.zeros(3)
    # closedness: d(delta) by FD
    pts = displaced_points(x, step).reshape(-1, 3)
    vals = corrected_difference(pts).reshape(3, 4, 3)
    dd = stencil_d1(np.moveaxis(vals, 1, 0), step)  # (3, 3): d_i delta_j
    curl = dd - dd.T
    # loop period about the axis through the nearest center
    axis = north.axis
    if space.k:
        idx = int(np.argmin(space.center_distances(x)))
        base = space.centers[idx]
    else:
        base = np.zeros(3)
    rel = x - base
    rho_vec = rel - np.dot(rel, axis) * axis
    rho = np.linalg.norm(rho_vec)
    n_loop = 256
    angles = 2.0 * np.pi * (np.arange(n_loop) + 0.5) / n_loop
    u1 = rho_vec / rho
    u2 = np.cross(axis, u1)
    loop = base + np.dot(rel, axis) * axis + rho * (
        np.cos(angles)[:, None] * u1 + np.sin(angles)[:, None] * u2
    )
    tangents = rho * (-np.sin(angles)[:, None] * u1 + np.cos(angles)[:, None] * u2)
    vals_loop = corrected_difference(loop)
    period = (2.0 * np.pi / n_loop) * np.einsum("ni,ni->", vals_loop, tangents)
    return {
        "difference": delta,
        "analytic": analytic,
        "max_deviation": float(np.max(np.abs(delta - analytic))),
        "closedness_residual": float(np.max(np.abs(curl))),
        "period_over_2pi": float(period / (2.0 * np.pi)),
    }


# ---------------------------------------------------------------------------
# Decay fits
# ---------------------------------------------------------------------------

def _choose_patch(ray, patch=None):
    if patch is not None:
        return patch
    # avoid the string: the north patch is singular along the negative axis
    return NORTH if np.dot(ray, NORTH.axis) >= 0 else SOUTH


def covariant_curvature_derivative(space, bundle, x, patch=NORTH, step=None):
    """(nabla F)_{lambda mu nu} in coordinates at ``x``."""
    x = np.asarray(x, dtype=float)
    if step is None:
        step = default_step(space, x)
    pts = displaced_points(x, step).reshape(-1, 3)
    f_disp = curvature_coordinate_components(space, bundle, pts, patch).reshape(3, 4, 4, 4)
    df = stencil_d1(np.moveaxis(f_disp, 1, 0), step)  # (3, 4, 4)
    df4 = np.zeros((4, 4, 4))
    df4[:3] = df
    gamma, _, _ = christoffels_fd(space, x[None], patch, step=step)
    gamma = gamma[0]
    f0 = curvature_coordinate_components(space, bundle, x[None], patch)[0]
    nabla = (
        df4
        - np.einsum("rlm,rn->lmn", gamma, f0)
        - np.einsum("rln,mr->lmn", gamma, f0)
    )
    return nabla


def curvature_gradient_norm(space, bundle, x, patch=NORTH, step=None):
    """Pointwise norm |nabla F| with form-pair contraction weights."""
    x = np.asarray(x, dtype=float)
    nabla = covariant_curvature_derivative(space, bundle, x, patch, step)
    ginv = np.linalg.inv(metric(space, x[None], patch, check=False)[0])
    sq = np.einsum(
        "la,mb,nc,lmn,abc->", ginv, ginv, ginv, nabla, nabla
    )
    return float(np.sqrt(0.5 * sq))


@dataclass(frozen=True)
class DecayFit:
    exponent_F: float
    exponent_gradF: float
    sup_r2F: float
    sup_r3gradF: float
    radii: np.ndarray
    degenerate: bool = False


def decay_fit(space, bundle, ray, r_range=(1e2, 1e4), n_samples=24, patch=None):
    """Least-squares decay exponents of |F| and |nabla F| along a ray.

    Samples log-spaced radii in ``r_range`` and fits log-log slopes; also
    reports the suprema of r^2 |F| and r^3 |nabla F| over the samples.
    Radii must sit in the asymptotic regime (at least 10x the diameter of
    the center set).
    """
    ray = np.asarray(ray, dtype=float)
    ray = ray / np.linalg.norm(ray)
    if n_samples < 4:
        raise StepValidationError("need at least 4 samples for a decay fit")
    r_lo, r_hi = r_range
    if r_lo < 10.0 * max(space.diameter(), 1e-12) and space.k > 0 and space.diameter() > 0:
        raise StepValidationError(
            f"minimum radius {r_lo:g} is not asymptotic for center diameter {space.diameter():g}"
        )
    patch = _choose_patch(ray, patch)
    radii = np.geomspace(r_lo, r_hi, n_samples)
    pts = radii[:, None] * ray
    samples = curvature_frame_components(space, bundle, pts)
    norms = np.sqrt(0.5 * np.sum(samples**2, axis=(-2, -1)))
    if np.max(norms) == 0.0:
        return DecayFit(np.nan, np.nan, 0.0, 0.0, radii, degenerate=True)
    grad_norms = np.array([
        curvature_gradient_norm(space, bundle, p, patch, step=0.01 * r)
        for p, r in zip(pts, radii)
    ])
    return DecayFit(
        exponent_F=loglog_slope(radii, norms),
        exponent_gradF=loglog_slope(radii, grad_norms),
        sup_r2F=float(np.max(radii**2 * norms)),
        sup_r3gradF=float(np.max(radii**3 * grad_norms)),
        radii=radii,
    )


# ---------------------------------------------------------------------------
# Bochner identity
# ---------------------------------------------------------------------------

def bochner_residual(space, bundle, x, patch=NORTH, step=None, richardson_pair=True):
    """Residual of the curvature Weitzenboeck identity at ``x``.

    For an abelian anti-self-dual curvature the rough Laplacian of F balances
    the Riemann action on its index pair (the commutator term is absent), so

        -g^{kl} (nabla nabla F)_{kl mu nu}  =  2 R_{acbd} F_{cd} + Ricci terms

    in the orthonormal frame.  Both sides are formed by nested centered
    differences; the returned residual is relative to the larger side's norm.
    """
    x = np.asarray(x, dtype=float)
    if step is None:
        step = default_step(space, x, fraction=0.05)
    if space.k > 0:
        min_r = float(np.min(space.center_distances(x)))
        if min_r < 10.0 * step:
            raise StepValidationError(f"step {step:g} too large at distance {min_r:g} from a center")

    def lhs_frame(h):
        pts = displaced_points(x, h).reshape(-1, 3)
        nabla_disp = np.stack([
            covariant_curvature_derivative(space, bundle, p, patch, h) for p in pts
        ]).reshape(3, 4, 4, 4, 4)
        dnabla = stencil_d1(np.moveaxis(nabla_disp, 1, 0), h)  # (3,4,4,4)
        dnabla4 = np.zeros((4, 4, 4, 4))
        dnabla4[:3] = dnabla
        gamma, g0, ginv = christoffels_fd(space, x[None], patch, step=h)
        gamma, g0, ginv = gamma[0], g0[0], ginv[0]
        nabla0 = covariant_curvature_derivative(space, bundle, x, patch, h)
        nabla2 = (
            dnabla4
            - np.einsum("rkl,rmn->klmn", gamma, nabla0)
            - np.einsum("rkm,lrn->klmn", gamma, nabla0)
            - np.einsum("rkn,lmr->klmn", gamma, nabla0)
        )
        rough = -np.einsum("kl,klmn->mn", ginv, nabla2)
        X = frame_vectors(space, x, patch)
        return np.einsum("am,bn,mn->ab", X, X, rough)

    def rhs_frame(h):
        curv = riemann_fd(space, x, patch, step=h, richardson_pair=False)
        r = curv.frame
        f = curvature_frame_components(space, bundle, x)
        ric = curv.ricci()
        w = 2.0 * np.einsum("acbd,cd->ab", r, f)
        w += np.einsum("ac,cb->ab", ric, f) - np.einsum("bc,ca->ab", ric, f)
        return w

    def residual_at(h):
        lhs = lhs_frame(h)
        rhs = rhs_frame(h)
        scale = max(np.sqrt(0.5 * np.sum(lhs**2)), np.sqrt(0.5 * np.sum(rhs**2)), 1e-300)
        return float(np.sqrt(0.5 * np.sum((lhs - rhs) ** 2)) / scale), lhs, rhs

    res, lhs, rhs = residual_at(step)
    if richardson_pair:
        res_fine, lhs, rhs = residual_at(0.5 * step)
        res = min(res, res_fine)
    return {
        "residual": res,
        "lhs_norm": float(np.sqrt(0.5 * np.sum(lhs**2))),
        "rhs_norm": float(np.sqrt(0.5 * np.sum(rhs**2))),
        "step": step,
    }

"""Gibbons-Hawking multi-center geometry.

The space is a circle bundle over R^3 (away from the centers) with metric
determined by a harmonic potential

    V(x) = l + sum_sigma 1 / |x - nu_sigma|,

a fiber one-form ``dtau + omega`` with d(omega) = *dV, and fiber coordinate
tau of period 4*pi.  Coordinates are ordered (x1, x2, x3, tau); frame index 3
is the fiber direction.  The orientation is fixed so the volume form equals
V dx^1 dx^2 dx^3 dtau, which makes the Riemann tensor anti-self-dual on its
second index pair.

All pointwise operations are pure functions of their arguments and accept
batched points of shape (..., 3).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import PointAtCenterError, RadiusValidationError, StringProximityError
from .numerics import (
    STENCIL_ORDER,
    displaced_points,
    fit_constant_plus_inverse,
    gauss_legendre,
    loglog_slope,
    orthonormal_complement,
    pairwise_sum,
    richardson,
    smooth_step,
    sphere_rule,
    stencil_d1,
)

TAU_PERIOD = 4.0 * np.pi

# Points closer than this to a center are rejected by analytic evaluations.
DEFAULT_EXCLUSION = 1e-9
# sin(polar angle) below which a point counts as sitting on the patch string.
STRING_SIN_MIN = 1e-9

# Totally antisymmetric symbol with eps[0,1,2,3] = +1.
_EPS4 = np.zeros((4, 4, 4, 4))
for _perm, _sign in (
    ((0, 1, 2, 3), 1), ((0, 2, 3, 1), 1), ((0, 3, 1, 2), 1),
    ((1, 0, 3, 2), 1), ((1, 2, 0, 3), 1), ((1, 3, 2, 0), 1),
    ((2, 0, 1, 3), 1), ((2, 1, 3, 0), 1), ((2, 3, 0, 1), 1),
    ((3, 0, 2, 1), 1), ((3, 1, 0, 2), 1), ((3, 2, 1, 0), 1),
    ((0, 1, 3, 2), -1), ((0, 2, 1, 3), -1), ((0, 3, 2, 1), -1),
    ((1, 0, 2, 3), -1), ((1, 2, 3, 0), -1), ((1, 3, 0, 2), -1),
    ((2, 0, 3, 1), -1), ((2, 1, 0, 3), -1), ((2, 3, 1, 0), -1),
    ((3, 0, 1, 2), -1), ((3, 1, 2, 0), -1), ((3, 2, 0, 1), -1),
):
    _EPS4[_perm] = _sign

_EPS3 = np.zeros((3, 3, 3))
_EPS3[0, 1, 2] = _EPS3[1, 2, 0] = _EPS3[2, 0, 1] = 1.0
_EPS3[0, 2, 1] = _EPS3[2, 1, 0] = _EPS3[1, 0, 2] = -1.0


@dataclass(frozen=True)
class GHSpace:
    """A multi-center Gibbons-Hawking background.

    Parameters
    ----------
    l : float
        Positive constant part of the potential (inverse asymptotic fiber
        length).
    centers : array_like, shape (k, 3)
        Pairwise distinct center positions.  ``k = 0`` gives the flat
        degenerate case, allowed for trivial tests only.
    """

    l: float
    centers: np.ndarray

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if centers.size == 0:
            centers = np.zeros((0, 3))
        if centers.shape[-1] != 3:
            raise ValueError("centers must be points in R^3")
        object.__setattr__(self, "centers", centers)
        if not (self.l > 0):
            raise ValueError("l must be positive")
        if self.k > 1 and self.min_separation() <= 0:
            raise ValueError("centers must be pairwise distinct")

    @property
    def k(self):
        return self.centers.shape[0]

    def min_separation(self):
        if self.k < 2:
            return np.inf
        d = self.centers[:, None, :] - self.centers[None, :, :]
        norms = np.linalg.norm(d, axis=-1)
        return float(np.min(norms[np.triu_indices(self.k, 1)]))

    def diameter(self):
        """Diameter of the center set (0 for k <= 1)."""
        if self.k < 2:
            return 0.0
        d = self.centers[:, None, :] - self.centers[None, :, :]
        return float(np.max(np.linalg.norm(d, axis=-1)))

    def center_distances(self, x):
        """|x - nu_sigma| for each center; shape x.shape[:-1] + (k,)."""
        x = np.asarray(x, dtype=float)
        if self.k == 0:
            return np.zeros(x.shape[:-1] + (0,))
        return np.linalg.norm(x[..., None, :] - self.centers, axis=-1)

    def potential(self, x):
        x = np.asarray(x, dtype=float)
        r = self.center_distances(x)
        return self.l + pairwise_sum_last(1.0 / r)

    def potential_gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self.k == 0:
            return np.zeros_like(x)
        d = x[..., None, :] - self.centers
        r = np.linalg.norm(d, axis=-1)
        return pairwise_sum_last(-d / r[..., None] ** 3, axis=-2)

    def potential_hessian(self, x):
        """Analytic second derivatives of the potential; shape (..., 3, 3)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (3, 3))
        if self.k == 0:
            return out
        d = x[..., None, :] - self.centers
        r = np.linalg.norm(d, axis=-1)
        eye = np.eye(3)
        terms = (
            3.0 * d[..., :, None] * d[..., None, :] / r[..., None, None] ** 5
            - eye / r[..., None, None] ** 3
        )
        return pairwise_sum_last(terms, axis=-3)

    def check_off_center(self, x, exclusion=DEFAULT_EXCLUSION):
        if self.k == 0:
            return
        r = self.center_distances(x)
        if np.min(r) < exclusion:
            raise PointAtCenterError(
                f"point within exclusion radius {exclusion:g} of a center "
                f"(min distance {np.min(r):.3e})"
            )


def pairwise_sum_last(values, axis=-1):
    """Pairwise-sum an array over ``axis`` keeping the other axes."""
    a = np.asarray(values, dtype=float)
    a = np.moveaxis(a, axis, 0)
    if a.shape[0] == 0:
        return np.zeros(a.shape[1:])
    while a.shape[0] > 1:
        half = a.shape[0] // 2
        head = a[: 2 * half]
        a = np.concatenate([head[0::2] + head[1::2], a[2 * half :]], axis=0)
    return a[0]


@dataclass(frozen=True)
class PatchChart:
    """Monopole gauge patch shared by every center.

    ``kind`` selects where the coordinate string of each center's monopole
    one-form sits relative to the patch axis: the ``north`` patch is regular
    at the north pole with its string on the negative axis ray, ``south`` the
    reverse.  The two patches cover the complement of the axis lines through
    the centers.
    """

    kind: str = "north"
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.kind not in ("north", "south"):
            raise ValueError("patch kind must be 'north' or 'south'")
        axis = np.asarray(self.axis, dtype=float)
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ValueError("patch axis must be nonzero")
        object.__setattr__(self, "axis", axis / norm)

    def basis(self):
        """Rows (u, v, axis) of the rotation into patch-adapted coordinates."""
        u, v = orthonormal_complement(self.axis)
        return np.stack([u, v, self.axis])

    def opposite(self):
        return PatchChart("south" if self.kind == "north" else "north", self.axis)


NORTH = PatchChart("north")
SOUTH = PatchChart("south")


def potential_and_gradient(space, x, exclusion=DEFAULT_EXCLUSION):
    """Potential and its analytic gradient at ``x`` (no differencing)."""
    space.check_off_center(x, exclusion)
    return space.potential(x), space.potential_gradient(x)


def monopole_forms(space, x, patch=NORTH, check_strings=True):
    """Unit-charge monopole one-forms about each center.

    Returns an array of shape x.shape[:-1] + (k, 3) whose sigma slice is the
    one-form with exterior derivative *d(1/r_sigma), expressed in the given
    patch.  Summed over sigma this is the fiber connection form of the space.
    """
    x = np.asarray(x, dtype=float)
    if space.k == 0:
        return np.zeros(x.shape[:-1] + (0, 3))
    q = patch.basis()
    d = x[..., None, :] - space.centers  # (..., k, 3)
    dp = d @ q.T
    r = np.linalg.norm(dp, axis=-1)
    z = dp[..., 2]
    if patch.kind == "north":
        denom = r * (r + z)  # string where z = -r
        wx, wy = dp[..., 1], -dp[..., 0]
    else:
        denom = r * (r - z)  # string where z = +r
        wx, wy = -dp[..., 1], dp[..., 0]
    if check_strings:
        rho = np.hypot(dp[..., 0], dp[..., 1])
        sin_theta = np.where(r > 0, rho / np.maximum(r, 1e-300), 0.0)
        on_bad_side = z < 0 if patch.kind == "north" else z > 0
        if np.any(on_bad_side & (sin_theta < STRING_SIN_MIN)):
            raise StringProximityError(
                f"point on the {patch.kind} patch string (sin polar < {STRING_SIN_MIN:g})"
            )
    wp = np.zeros_like(dp)
    wp[..., 0] = wx / denom
    wp[..., 1] = wy / denom
    return wp @ q


def omega(space, x, patch=NORTH, check_strings=True):
    """Total fiber connection one-form coefficients, shape (..., 3)."""
    forms = monopole_forms(space, x, patch, check_strings)
    return pairwise_sum_last(forms, axis=-2)


def azimuth_gradients(space, x, patch=NORTH):
    """Gradients of the per-center azimuthal angles, shape (..., k, 3).

    The azimuth is measured in the patch-adapted frame; these enter the patch
    transition of the fiber coordinate and the pure-gauge difference of
    connection forms between patches.
    """
    x = np.asarray(x, dtype=float)
    if space.k == 0:
        return np.zeros(x.shape[:-1] + (0, 3))
    q = patch.basis()
    dp = (x[..., None, :] - space.centers) @ q.T
    rho2 = dp[..., 0] ** 2 + dp[..., 1] ** 2
    gp = np.zeros_like(dp)
    gp[..., 0] = -dp[..., 1] / rho2
    gp[..., 1] = dp[..., 0] / rho2
    return gp @ q


def metric(space, x, patch=NORTH, check=True):
    """Coordinate metric in (x1, x2, x3, tau), shape (..., 4, 4)."""
    x = np.asarray(x, dtype=float)
    if check:
        space.check_off_center(x)
    v = space.potential(x)
    w = omega(space, x, patch, check_strings=check)
    g = np.zeros(x.shape[:-1] + (4, 4))
    eye = np.eye(3)
    g[..., :3, :3] = v[..., None, None] * eye + w[..., :, None] * w[..., None, :] / v[..., None, None]
    g[..., :3, 3] = w / v[..., None]
    g[..., 3, :3] = w / v[..., None]
    g[..., 3, 3] = 1.0 / v
    return g


def coframe(space, x, patch=NORTH):
    """Orthonormal coframe coefficients e[a, mu], shape (..., 4, 4).

    Rows 0..2 are sqrt(V) dx^i, row 3 is (dtau + omega)/sqrt(V); the metric
    is the sum of squares of the rows.
    """
    x = np.asarray(x, dtype=float)
    v = space.potential(x)
    w = omega(space, x, patch)
    s = np.sqrt(v)
    e = np.zeros(x.shape[:-1] + (4, 4))
    for i in range(3):
        e[..., i, i] = s
    e[..., 3, :3] = w / s[..., None]
    e[..., 3, 3] = 1.0 / s
    return e


def frame_vectors(space, x, patch=NORTH):
    """Orthonormal frame vectors X[a, mu] dual to :func:`coframe`."""
    x = np.asarray(x, dtype=float)
    v = space.potential(x)
    w = omega(space, x, patch)
    s = np.sqrt(v)
    X = np.zeros(x.shape[:-1] + (4, 4))
    for i in range(3):
        X[..., i, i] = 1.0 / s
    X[..., :3, 3] = -w / s[..., None]
    X[..., 3, 3] = s
    return X


@dataclass(frozen=True)
class FramePoint:
    """A point with its cached metric and orthonormal frame data."""

    x: np.ndarray
    tau: float
    patch: PatchChart
    potential: float
    potential_gradient: np.ndarray
    omega: np.ndarray
    metric: np.ndarray
    coframe: np.ndarray
    frame_vectors: np.ndarray

    @property
    def radius(self):
        return float(np.linalg.norm(self.x))

    def sqrt_det_metric(self):
        return float(np.sqrt(np.linalg.det(self.metric)))

    def frame_identity_residual(self):
        """Max deviation of sum_a e^a (x) e^a from the metric."""
        rebuilt = np.einsum("am,an->mn", self.coframe, self.coframe)
        return float(np.max(np.abs(rebuilt - self.metric)))


def metric_and_frame(space, x, tau=0.0, patch=NORTH):
    """Assemble a :class:`FramePoint` at ``(x, tau)`` in the given patch."""
    x = np.asarray(x, dtype=float)
    space.check_off_center(x)
    v, dv = potential_and_gradient(space, x)
    return FramePoint(
        x=x,
        tau=float(np.mod(tau, TAU_PERIOD)),
        patch=patch,
        potential=float(v),
        potential_gradient=dv,
        omega=omega(space, x, patch),
        metric=metric(space, x, patch),
        coframe=coframe(space, x, patch),
        frame_vectors=frame_vectors(space, x, patch),
    )


def volume_density(space, x):
    """Ratio of the volume form to dx^1 dx^2 dx^3 dtau (equals the potential)."""
    return space.potential(x)


# ---------------------------------------------------------------------------
# Curvature by finite differences
# ---------------------------------------------------------------------------

def default_step(space, x, fraction=0.02):
    """Step size for FD differentiation: a fraction of the distance to the
    nearest center (or of the base radius in the flat case)."""
    x = np.asarray(x, dtype=float)
    if space.k == 0:
        scale = max(float(np.linalg.norm(x)), 1.0)
    else:
        scale = float(np.min(space.center_distances(x)))
    return fraction * scale


def _validate_step(space, x, step):
    if step <= 0:
        raise ValueError("step must be positive")
    if space.k > 0:
        min_r = float(np.min(space.center_distances(x)))
        if min_r < 10.0 * step:
            raise PointAtCenterError(
                f"step {step:g} too large: point is {min_r:.3e} from a center "
                "(need at least 10 steps of clearance)"
            )


def christoffels_fd(space, points, patch=NORTH, step=None):
    """Christoffel symbols Gamma^rho_{mu nu} from centered metric samples.

    ``points`` has shape (n, 3); the result has shape (n, 4, 4, 4).  Fiber
    derivatives vanish identically and are not sampled.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if step is None:
        step = min(default_step(space, p) for p in points)
    disp = np.stack([displaced_points(p, step) for p in points])  # (n, 3, 4, 3)
    g_disp = metric(space, disp.reshape(-1, 3), patch, check=False)
    g_disp = g_disp.reshape(n, 3, 4, 4, 4)
    dg = stencil_d1(np.moveaxis(g_disp, 2, 0), step)  # (n, 3, 4, 4): d_i g_{mn}
    dg4 = np.zeros((n, 4, 4, 4))
    dg4[:, :3] = dg
    g0 = metric(space, points, patch, check=False)
    ginv = np.linalg.inv(g0)
    # Gamma^r_{m n} = 1/2 g^{r l} (d_m g_{l n} + d_n g_{l m} - d_l g_{m n})
    t1 = np.transpose(dg4, (0, 2, 1, 3))  # (l, m, n) ordering of d_m g_{l n}
    t2 = np.transpose(dg4, (0, 2, 3, 1))  # d_n g_{l m}
    gamma = 0.5 * np.einsum("nrl,nlmo->nrmo", ginv, t1 + t2 - dg4)
    return gamma, g0, ginv


@dataclass(frozen=True)
class CurvatureTensor4:
    """Riemann tensor in the orthonormal frame with an FD error estimate."""

    frame: np.ndarray          # R_{abcd}, shape (4, 4, 4, 4)
    fd_error: float
    step: float

    def norm(self):
        return float(np.sqrt(np.sum(self.frame**2)))

    def ricci(self):
        """Frame Ricci tensor Ric_{bd} = sum_a R_{abad}."""
        return np.einsum("abad->bd", self.frame)

    def ricci_norm(self):
        return float(np.sqrt(np.sum(self.ricci() ** 2)))

    def dual_projection(self, sign, orientation=1.0):
        """Projection of the second index pair onto (anti-)self-dual parts."""
        star = 0.5 * orientation * np.einsum("cdef,abef->abcd", _EPS4, self.frame)
        return 0.5 * (self.frame + sign * star)

    def sd_projection_norm(self, orientation=1.0):
        return float(np.sqrt(np.sum(self.dual_projection(+1, orientation) ** 2)))

    def symmetry_residual(self):
        r = self.frame
        res = max(
            np.max(np.abs(r + np.transpose(r, (1, 0, 2, 3)))),
            np.max(np.abs(r + np.transpose(r, (0, 1, 3, 2)))),
            np.max(np.abs(r - np.transpose(r, (2, 3, 0, 1)))),
        )
        return float(res)

    def first_bianchi_residual(self):
        r = self.frame
        cyc = r + np.transpose(r, (0, 2, 3, 1)) + np.transpose(r, (0, 3, 1, 2))
        return float(np.max(np.abs(cyc)))


def riemann_fd(space, x, patch=NORTH, step=None, richardson_pair=True):
    """Riemann tensor at ``x`` by nested centered differences of the metric.

    The coordinate tensor is assembled from FD Christoffel symbols and
    converted to the orthonormal frame.  With ``richardson_pair`` the
    computation runs at steps h and h/2 and reports the extrapolated tensor
    together with an error estimate.
    """
    x = np.asarray(x, dtype=float)
    if step is None:
        step = default_step(space, x)
    _validate_step(space, x, step)

    def riemann_at(h):
        pts = np.concatenate([displaced_points(x, h).reshape(-1, 3), x[None]])
        gammas, gs, _ = christoffels_fd(space, pts, patch, step=h)
        dgamma = stencil_d1(gammas[:12].reshape(3, 4, 4, 4, 4), h)  # (3,4,4,4)
        dgamma4 = np.zeros((4, 4, 4, 4))
        dgamma4[:3] = dgamma
        gamma0 = gammas[12]
        g0 = gs[12]
        # R^r_{s m n} = d_m Gamma^r_{n s} - d_n Gamma^r_{m s} + GG - GG
        r_up = (
            np.einsum("mrns->rsmn", dgamma4)
            - np.einsum("nrms->rsmn", dgamma4)
            + np.einsum("rml,lns->rsmn", gamma0, gamma0)
            - np.einsum("rnl,lms->rsmn", gamma0, gamma0)
        )
        r_down = np.einsum("lr,rsmn->lsmn", g0, r_up)
        X = frame_vectors(space, x, patch)
        return np.einsum("al,bs,cm,dn,lsmn->abcd", X, X, X, X, r_down)

    if not richardson_pair:
        return CurvatureTensor4(frame=riemann_at(step), fd_error=np.nan, step=step)
    coarse = riemann_at(step)
    fine = riemann_at(0.5 * step)
    extrap, err = richardson(coarse, fine, STENCIL_ORDER)
    return CurvatureTensor4(frame=extrap, fd_error=err, step=step)


@dataclass(frozen=True)
class HyperkahlerResiduals:
    ricci_norm: float
    sd_projection_norm: float
    riemann_norm: float

    def relative(self, floor=1e-300):
        scale = max(self.riemann_norm, floor)
        return self.ricci_norm / scale, self.sd_projection_norm / scale


def hyperkahler_residuals(curv, orientation=1.0):
    """Norms of the Ricci tensor and of the self-dual projection of the
    Riemann tensor; both vanish (to FD tolerance) in the fixed orientation."""
    return HyperkahlerResiduals(
        ricci_norm=curv.ricci_norm(),
        sd_projection_norm=curv.sd_projection_norm(orientation),
        riemann_norm=curv.norm(),
    )


# ---------------------------------------------------------------------------
# Pontryagin number by boundary flux
# ---------------------------------------------------------------------------

def curvature_density_gradient(space, x):
    """Analytic gradient of 2 |grad V|^2 / V^3 (the Laplacian of 1/V)."""
    v = space.potential(x)
    dv = space.potential_gradient(x)
    hess = space.potential_hessian(x)
    grad_sq = np.einsum("...ij,...j->...i", hess, dv) * 2.0
    dv2 = np.sum(dv * dv, axis=-1)
    return 2.0 * (
        grad_sq / v[..., None] ** 3
        - 3.0 * dv2[..., None] * dv / v[..., None] ** 4
    )


def _sphere_flux(space, center, radius, n_polar, n_azimuth):
    units, weights = sphere_rule(n_polar, n_azimuth)
    pts = center + radius * units
    grad = curvature_density_gradient(space, pts)
    vals = np.einsum("ni,ni->n", grad, units) * radius**2
    return pairwise_sum(weights * vals)


@dataclass(frozen=True)
class PontryaginResult:
    value: float
    per_center: np.ndarray
    outer_flux_term: float
    outer_decay_exponent: float
    expected: float


def pontryagin_number(space, sphere_radius=None, outer_radius=None,
                      n_polar=24, n_azimuth=48):
    """Pontryagin number of the space by boundary flux.

    The curvature invariant integrates to a total divergence of the analytic
    field 2|grad V|^2/V^3, so the number reduces to fluxes through small
    spheres about the centers (each contributing 1/12 in the limit) plus an
    outer-sphere flux that decays cubically.  Small-sphere fluxes are
    evaluated at two radii and Richardson-extrapolated to zero radius.
    """
    if space.k == 0:
        return PontryaginResult(0.0, np.zeros(0), 0.0, -np.inf, 0.0)
    sep = min(space.min_separation(), np.inf)
    if sphere_radius is None:
        sphere_radius = min(1e-4, 0.01 * sep) if np.isfinite(sep) else 1e-4
    if np.isfinite(sep) and sphere_radius >= 0.5 * sep:
        raise RadiusValidationError(
            f"sphere radius {sphere_radius:g} must be below half the minimum "
            f"center separation {sep:g}"
        )
    scale = max(space.diameter(), 1.0, float(np.max(np.abs(space.centers))) if space.k else 1.0)
    if outer_radius is None:
        outer_radius = 1e4 * scale
    if outer_radius <= 10.0 * scale:
        raise RadiusValidationError(
            f"outer radius {outer_radius:g} must exceed 10x the center-set scale {scale:g}"
        )
    prefactor = 1.0 / (96.0 * np.pi)
    per_center = []
    for center in space.centers:
        f1 = _sphere_flux(space, center, sphere_radius, n_polar, n_azimuth)
        f2 = _sphere_flux(space, center, 0.5 * sphere_radius, n_polar, n_azimuth)
        flux0 = 2.0 * f2 - f1  # flux is affine in the radius near zero
        per_center.append(-prefactor * flux0)
    per_center = np.asarray(per_center)
    origin = np.zeros(3)
    outer_fluxes = [
        prefactor * _sphere_flux(space, origin, rr, n_polar, n_azimuth)
        for rr in (outer_radius, 2.0 * outer_radius, 4.0 * outer_radius)
    ]
    try:
        exponent = loglog_slope(
            [outer_radius, 2.0 * outer_radius, 4.0 * outer_radius], outer_fluxes
        )
    except ValueError:
        exponent = -np.inf
    value = pairwise_sum(per_center) + outer_fluxes[0]
    return PontryaginResult(
        value=value,
        per_center=per_center,
        outer_flux_term=outer_fluxes[0],
        outer_decay_exponent=exponent,
        expected=space.k / 12.0,
    )


# ---------------------------------------------------------------------------
# Conformally rescaled metric near infinity
# ---------------------------------------------------------------------------

def _conformal_metric_factory(space, patch):
    """Metric of the conformally rescaled space in coordinates (y, polar,
    azimuth, tau), where the base radius is e^y.  The rescaled metric is
    exactly dy^2 + (unit sphere) + e^{-2y} V^{-2} (dtau + omega)^2."""

    def g_of(q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        y, pol, az = q[..., 0], q[..., 1], q[..., 2]
        r = np.exp(y)
        sp, cp = np.sin(pol), np.cos(pol)
        sa, ca = np.sin(az), np.cos(az)
        x = np.stack([r * sp * ca, r * sp * sa, r * cp], axis=-1)
        v = space.potential(x)
        w = omega(space, x, patch, check_strings=False)
        dx_dpol = np.stack([r * cp * ca, r * cp * sa, -r * sp], axis=-1)
        dx_daz = np.stack([-r * sp * sa, r * sp * ca, np.zeros_like(r)], axis=-1)
        w_pol = np.einsum("...i,...i->...", w, dx_dpol)
        w_az = np.einsum("...i,...i->...", w, dx_daz)
        c = np.exp(-y) / v
        fib = np.stack([np.zeros_like(r), w_pol, w_az, np.ones_like(r)], axis=-1)
        g = np.zeros(q.shape[:-1] + (4, 4))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = 1.0
        g[..., 2, 2] = sp**2
        g += c[..., None, None] ** 2 * fib[..., :, None] * fib[..., None, :]
        return g

    return g_of


def _conformal_frame_factory(space, patch):
    """Orthonormal frame vectors for the rescaled metric, as functions of
    (y, polar, azimuth): rows are d/dy, the two sphere directions corrected
    to be fiber-orthogonal, and the unit fiber vector."""

    def frames_of(q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        y, pol, az = q[..., 0], q[..., 1], q[..., 2]
        r = np.exp(y)
        sp, cp = np.sin(pol), np.cos(pol)
        sa, ca = np.sin(az), np.cos(az)
        x = np.stack([r * sp * ca, r * sp * sa, r * cp], axis=-1)
        v = space.potential(x)
        w = omega(space, x, patch, check_strings=False)
        dx_dpol = np.stack([r * cp * ca, r * cp * sa, -r * sp], axis=-1)
        dx_daz = np.stack([-r * sp * sa, r * sp * ca, np.zeros_like(r)], axis=-1)
        w_pol = np.einsum("...i,...i->...", w, dx_dpol)
        w_az = np.einsum("...i,...i->...", w, dx_daz)
        X = np.zeros(q.shape[:-1] + (4, 4))
        X[..., 0, 0] = 1.0
        X[..., 1, 1] = 1.0
        X[..., 1, 3] = -w_pol
        X[..., 2, 2] = 1.0 / sp
        X[..., 2, 3] = -w_az / sp
        X[..., 3, 3] = np.exp(y) * v
        return X

    return frames_of


_CONNECTION_TARGETS = {
    # gamma[a, b, c] = g'(e_a, nabla_{e_b} e_c); expected leading behavior.
    (0, 3, 3): lambda k, y, pol: 1.0,
    (1, 2, 2): lambda k, y, pol: -1.0 / np.tan(pol),
    (3, 1, 2): lambda k, y, pol: 0.5 * k * np.exp(-y),
    (3, 2, 1): lambda k, y, pol: -0.5 * k * np.exp(-y),
    (2, 3, 1): lambda k, y, pol: -0.5 * k * np.exp(-y),
    (2, 1, 3): lambda k, y, pol: -0.5 * k * np.exp(-y),
}


@dataclass(frozen=True)
class SpinConnectionCheck:
    gamma: np.ndarray            # (4, 4, 4), gamma[a, b, c]
    expected: dict               # (a, b, c) -> expected value
    residuals: dict              # (a, b, c) -> gamma - expected
    y: float


def conformal_spin_connection(space, y, polar=1.1, azimuth=0.7,
                              patch=NORTH, step=None, y_floor=2.0):
    """Connection coefficients of the rescaled metric at base radius e^y.

    Computes gamma[a, b, c] = g'(e_a, nabla_{e_b} e_c) by finite differences
    and reports residuals against the leading large-y behavior: the radial
    fiber coefficient tends to 1, the sphere coefficient to -cot(polar), and
    the fiber-sphere mixing coefficients to +-(k/2) e^{-y}.
    """
    if y < y_floor:
        raise RadiusValidationError(f"y={y:g} below the asymptotic floor {y_floor:g}")
    g_of = _conformal_metric_factory(space, patch)
    frames_of = _conformal_frame_factory(space, patch)
    q0 = np.array([y, polar, azimuth])
    if step is None:
        step = 1e-4
    # dg[l, m, n] = d_l g_{mn}; tau derivatives vanish.
    disp = displaced_points(q0, step).reshape(-1, 3)
    dg = stencil_d1(g_of(disp).reshape(3, 4, 4, 4), step)
    dg4 = np.zeros((4, 4, 4, 4))
    dg4[:3] = dg
    g0 = g_of(q0[None])[0]
    ginv = np.linalg.inv(g0)
    t1 = np.transpose(dg4, (1, 0, 2))
    t2 = np.transpose(dg4, (1, 2, 0))
    gamma_coord = 0.5 * np.einsum("rl,lmn->rmn", ginv, t1 + t2 - dg4)
    X0 = frames_of(q0[None])[0]
    dX = stencil_d1(frames_of(disp).reshape(3, 4, 4, 4), step)
    dX4 = np.zeros((4, 4, 4, 4))
    dX4[:3] = dX
    # nabla_{e_b} e_c: components e_b^mu (d_mu X[c]^nu + Gamma^nu_{mu kappa} X[c]^kappa)
    cov = np.einsum("bm,mcn->bcn", X0, dX4) + np.einsum(
        "bm,nmk,ck->bcn", X0, gamma_coord, X0
    )
    gamma = np.einsum("an,nl,bcl->abc", X0, g0, cov)
    expected, residuals = {}, {}
    for key, fn in _CONNECTION_TARGETS.items():
        expected[key] = float(fn(space.k, y, polar))
        residuals[key] = float(gamma[key] - expected[key])
    return SpinConnectionCheck(gamma=gamma, expected=expected, residuals=residuals, y=y)

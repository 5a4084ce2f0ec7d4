"""Neumann heat kernel on [0, 1]: dual representations, semigroup, increment functionals.

The kernel is available two ways and the two must agree:

  image sum      G_t(x, y) = (4 pi t)^(-1/2) * sum_n [ exp(-(y - x - 2n)^2 / 4t)
                                                     + exp(-(y + x - 2n)^2 / 4t) ]
  eigen series   G_t(x, y) = 1 + sum_{n>=1} 2 exp(-n^2 pi^2 t) cos(n pi x) cos(n pi y)

The image sum converges fast for small t, the eigen series for large t.  The
discrete semigroup e^{t L} acts diagonally on the DCT-II modes of a grid
function with multipliers exp(-k^2 pi^2 t).

The increment functionals at the bottom are the squared-kernel integrals
controlling space and time regularity of stochastic convolutions.  Each is a
midpoint quadrature in the xi variable of the truncated eigen series; the
time-integrated ones apply the composite midpoint rule in the substituted
variable w = sqrt(gap), which removes the (gap)^(-1/2) endpoint singularity
of the integrand.  For
mode cap K < n_quad the midpoint cosine orthogonality

  (1/n_quad) sum_q cos(n pi xi_q) cos(m pi xi_q) = delta_nm / 2   (1 <= n, m < n_quad)

makes the xi quadrature of a squared truncated series equal to its diagonal
sum exactly, so the implementation evaluates that diagonal form; it matches
the literal grid sum to rounding and the tests check this.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid import GridFunction, cell_centers, from_modes, to_modes

# Eigen series truncation rule: keep modes until exp(-K^2 pi^2 t) < MODE_TOL.
MODE_TOL = 1e-14

# Representation switch for auto evaluation.  Both representations are well
# converged near the switch point with the default truncations.
T_SWITCH = 0.01

DEFAULT_N_IMAGES = 20
DEFAULT_N_QUAD = 2048

# The time-integrated functionals have integrands ~ (gap)^(-1/2) at the moving
# endpoint and carry an appreciable share of their value at very fine xi
# scales, so they default to a larger mode budget than the single-time ones.
DEFAULT_N_QUAD_INTEGRATED = 16384
DEFAULT_N_TIME = 4096
_TIME_CHUNK = 512


def _check_time(t: float, name: str = "t") -> float:
    t = float(t)
    if not np.isfinite(t) or t <= 0.0:
        raise ValueError(f"{name} must be a finite positive time, got {t}")
    return t


def modes_for_time(t: float, n_quad: int | None = None) -> int:
    """Smallest K with exp(-K^2 pi^2 t) < MODE_TOL, capped below n_quad."""
    t = _check_time(t)
    k = int(np.ceil(np.sqrt(np.log(1.0 / MODE_TOL) / (np.pi**2 * t)))) + 1
    if n_quad is not None:
        k = min(k, n_quad - 1)
    return max(k, 1)


def kernel_image_sum(t, x, y, n_images: int = DEFAULT_N_IMAGES):
    """Neumann heat kernel via the method of images.

    Parameters
    ----------
    t : float
        Time, > 0.
    x, y : array_like
        Points in [0, 1], broadcast together.
    n_images : int
        Images n = -n_images..n_images are summed.  The tail decays like
        exp(-n^2 / t), so the default covers every t of practical interest.
    """
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ns = 2.0 * np.arange(-n_images, n_images + 1)
    d1 = y[..., None] - x[..., None] - ns
    d2 = y[..., None] + x[..., None] - ns
    total = np.exp(-(d1**2) / (4.0 * t)).sum(axis=-1) + np.exp(-(d2**2) / (4.0 * t)).sum(axis=-1)
    out = total / np.sqrt(4.0 * np.pi * t)
    return out if out.ndim else float(out)


def kernel_eigen_series(t, x, y, n_modes: int | None = None):
    """Neumann heat kernel via the cosine eigenfunction expansion."""
    t = _check_time(t)
    if n_modes is None:
        n_modes = modes_for_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = np.arange(1, n_modes + 1)
    decay = 2.0 * np.exp(-(n**2) * np.pi**2 * t)
    out = 1.0 + np.sum(decay * np.cos(n * np.pi * x[..., None]) * np.cos(n * np.pi * y[..., None]), axis=-1)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelEval:
    """Kernel evaluator with a fixed representation and truncation settings.

    representation is one of "image", "eigen", "auto"; auto switches from the
    image sum to the eigen series at t = T_SWITCH.
    """

    representation: str = "auto"
    n_images: int = DEFAULT_N_IMAGES
    n_modes: int | None = None

    def __post_init__(self):
        if self.representation not in ("image", "eigen", "auto"):
            raise ValueError(f"unknown kernel representation {self.representation!r}")
        if self.n_images < 1:
            raise ValueError("n_images must be >= 1")
        if self.n_modes is not None and self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")

    def __call__(self, t, x, y):
        if self.representation == "image":
            return kernel_image_sum(t, x, y, self.n_images)
        if self.representation == "eigen":
            return kernel_eigen_series(t, x, y, self.n_modes)
        if t < T_SWITCH:
            return kernel_image_sum(t, x, y, self.n_images)
        return kernel_eigen_series(t, x, y, self.n_modes)


def kernel_mass_defect(t: float, x, n_quad: int = DEFAULT_N_QUAD,
                       representation: str = "auto") -> float:
    """Max |h sum_q G_t(x, xi_q) - 1| over the given x values.

    Conservation of mass under Neumann boundary conditions; the quadrature is
    the literal midpoint sum so this exercises the chosen representation.
    """
    xi = cell_centers(n_quad)
    kernel = KernelEval(representation=representation)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    vals = kernel(t, x[:, None], xi[None, :])
    return float(np.max(np.abs(vals.mean(axis=-1) - 1.0)))


def semigroup_apply(u, t: float):
    """Heat semigroup e^{t Laplacian} with Neumann conditions on a grid function.

    Acts diagonally on the DCT-II modes with multipliers exp(-k^2 pi^2 t);
    t = 0 is the identity.  Accepts a GridFunction or a bare sample array
    (last axis is space) and returns the same kind.
    """
    if t < 0.0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    wrap = isinstance(u, GridFunction)
    values = u.values if wrap else np.asarray(u, dtype=float)
    n = values.shape[-1]
    k = np.arange(n)
    out = from_modes(to_modes(values) * np.exp(-(k**2) * np.pi**2 * t))
    return GridFunction(out) if wrap else out


def semigroup_apply_quadrature(u, t: float, n_images: int = DEFAULT_N_IMAGES):
    """e^{t Laplacian} u by midpoint quadrature of the image-sum kernel.

    Independent route used to cross-check the spectral application; cost is
    O(n^2) so it is for verification, not production stepping.
    """
    t = _check_time(t)
    wrap = isinstance(u, GridFunction)
    values = u.values if wrap else np.asarray(u, dtype=float)
    n = values.shape[-1]
    x = cell_centers(n)
    mat = kernel_image_sum(t, x[:, None], x[None, :], n_images) / n
    out = values @ mat.T
    return GridFunction(out) if wrap else out


def semigroup_compose_defect(u, s: float, t: float) -> float:
    """Sup-norm defect of e^{s L} e^{t L} u = e^{(s+t) L} u."""
    two_step = semigroup_apply(semigroup_apply(u, t), s)
    one_step = semigroup_apply(u, s + t)
    a = two_step.values if isinstance(two_step, GridFunction) else two_step
    b = one_step.values if isinstance(one_step, GridFunction) else one_step
    return float(np.max(np.abs(a - b)))


def gaussian_comparison_ratio(t, x, y, n_images: int = DEFAULT_N_IMAGES):
    """Ratio of G_t(x, y) to the reference Gaussian (2 pi t)^(-1/2) exp(-|x-y|^2 / 2t)."""
    t = _check_time(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ref = np.exp(-((x - y) ** 2) / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)
    return kernel_image_sum(t, x, y, n_images) / ref


def gaussian_comparison_sweep(times, n_points: int = 20,
                              n_images: int = DEFAULT_N_IMAGES) -> tuple[float, float]:
    """(inf, sup) of the Gaussian comparison ratio over a (t, x, y) lattice.

    The check is qualitative: the ratio must stay within a finite positive
    envelope on the sweep.  No universal constants are asserted.
    """
    x = cell_centers(n_points)
    lo, hi = np.inf, -np.inf
    for t in times:
        r = gaussian_comparison_ratio(t, x[:, None], x[None, :], n_images)
        lo = min(lo, float(r.min()))
        hi = max(hi, float(r.max()))
    return lo, hi


# ---------------------------------------------------------------------------
# Squared-kernel increment functionals.
# ---------------------------------------------------------------------------

class IncrementFunctional(Enum):
    """The five squared-kernel integrals controlling field regularity."""

    SPACE_INCREMENT = "space_increment"
    SPACE_INCREMENT_TIME_INTEGRATED = "space_increment_time_integrated"
    SQUARE_TAIL = "square_tail"
    TIME_INCREMENT_INTEGRATED = "time_increment_integrated"
    TIME_INCREMENT_FIXED = "time_increment_fixed"


def _diag_quadrature(const_coeff, cos_coeffs):
    # xi-midpoint quadrature of (const + sum_n c_n cos(n pi xi))^2 via
    # orthogonality; equals the literal grid sum for K < n_quad.
    return const_coeff**2 + 0.5 * np.sum(cos_coeffs**2, axis=-1)


def _quadrature_literal(const_coeff, cos_coeffs, n_quad):
    # Literal midpoint grid sum; reference path for tests.
    xi = cell_centers(n_quad)
    n = np.arange(1, cos_coeffs.shape[-1] + 1)
    field = const_coeff[..., None] + cos_coeffs @ np.cos(np.outer(n, np.pi * xi))
    return np.mean(field**2, axis=-1)


def _space_increment_integrand(times, x, y, n_quad, literal=False):
    # int (G_u(x, .) - G_u(y, .))^2 dxi for each u in times; the constant
    # modes cancel in the difference.
    times = np.asarray(times, dtype=float)
    k = modes_for_time(float(times.min()), n_quad)
    n = np.arange(1, k + 1)
    coeffs = 2.0 * np.exp(-np.outer(times, n**2 * np.pi**2)) * (
        np.cos(n * np.pi * x) - np.cos(n * np.pi * y)
    )
    const = np.zeros(len(times))
    if literal:
        return _quadrature_literal(const, coeffs, n_quad)
    return _diag_quadrature(const, coeffs)


def _square_integrand(times, x, n_quad, literal=False):
    # int G_u(x, .)^2 dxi for each u in times.
    times = np.asarray(times, dtype=float)
    k = modes_for_time(float(times.min()), n_quad)
    n = np.arange(1, k + 1)
    coeffs = 2.0 * np.exp(-np.outer(times, n**2 * np.pi**2)) * np.cos(n * np.pi * x)
    const = np.ones(len(times))
    if literal:
        return _quadrature_literal(const, coeffs, n_quad)
    return _diag_quadrature(const, coeffs)


def _time_increment_integrand(gaps_t, gaps_s, x, n_quad, literal=False):
    # int (G_{u}(x, .) - G_{v}(x, .))^2 dxi for paired times u = gaps_t,
    # v = gaps_s; constants cancel.
    gaps_t = np.asarray(gaps_t, dtype=float)
    gaps_s = np.asarray(gaps_s, dtype=float)
    k = modes_for_time(float(min(gaps_t.min(), gaps_s.min())), n_quad)
    n = np.arange(1, k + 1)
    lam = n**2 * np.pi**2
    coeffs = 2.0 * (np.exp(-np.outer(gaps_t, lam)) - np.exp(-np.outer(gaps_s, lam))) * np.cos(n * np.pi * x)
    const = np.zeros(len(gaps_t))
    if literal:
        return _quadrature_literal(const, coeffs, n_quad)
    return _diag_quadrature(const, coeffs)


def _time_integral(integrand, length: float, n_time: int) -> float:
    # int_0^length integrand(u) du with the integrand singular like u^(-1/2)
    # at u = 0.  Substituting u = w^2 gives int_0^sqrt(length) f(w^2) 2w dw
    # with a bounded integrand, evaluated by the composite midpoint rule;
    # cells are processed in chunks (the near-zero chunk needs many modes).
    wmax = np.sqrt(length)
    dw = wmax / n_time
    total = 0.0
    for start in range(0, n_time, _TIME_CHUNK):
        stop = min(start + _TIME_CHUNK, n_time)
        w = (np.arange(start, stop) + 0.5) * dw
        total += float(np.sum(integrand(w**2) * 2.0 * w))
    return total * dw


def increment_functional(quantity: IncrementFunctional, *, t: float,
                         s: float | None = None, x: float = 0.5,
                         y: float | None = None,
                         n_quad: int | None = None,
                         n_time: int = DEFAULT_N_TIME,
                         literal: bool = False) -> float:
    """Evaluate one of the squared-kernel increment integrals.

    Parameters
    ----------
    quantity : IncrementFunctional
        Which integral.
    t, s : float
        Times; s is required for the two-time quantities and must satisfy
        0 < s < t.
    x, y : float
        Space points; y is required for the space-increment quantities.
    n_quad : int, optional
        Midpoint cells in xi, which also caps the eigen modes at n_quad - 1.
        Defaults to DEFAULT_N_QUAD for the single-time quantities and
        DEFAULT_N_QUAD_INTEGRATED for the time-integrated ones (their value
        near the singular endpoint lives at fine xi scales).
    n_time : int
        Midpoint cells for the time integral (in the substituted variable).
    literal : bool
        Evaluate the xi quadrature as the explicit grid sum instead of the
        orthogonality diagonal form.  Same value; reference path.

    Returns
    -------
    float
    """
    quantity = IncrementFunctional(quantity)
    t = _check_time(t)
    if n_quad is None:
        n_quad = DEFAULT_N_QUAD if quantity in (
            IncrementFunctional.SPACE_INCREMENT,
            IncrementFunctional.TIME_INCREMENT_FIXED,
        ) else DEFAULT_N_QUAD_INTEGRATED
    if quantity in (IncrementFunctional.SPACE_INCREMENT,
                    IncrementFunctional.SPACE_INCREMENT_TIME_INTEGRATED):
        if y is None:
            raise ValueError(f"{quantity.value} needs both x and y")
    else:
        if s is None:
            raise ValueError(f"{quantity.value} needs both s and t")
        s = float(s)
        if not 0.0 < s < t:
            raise ValueError(f"{quantity.value} needs 0 < s < t, got s={s}, t={t}")

    if quantity is IncrementFunctional.SPACE_INCREMENT:
        return float(_space_increment_integrand([t], x, y, n_quad, literal)[0])

    if quantity is IncrementFunctional.SPACE_INCREMENT_TIME_INTEGRATED:
        return _time_integral(
            lambda u: _space_increment_integrand(u, x, y, n_quad, literal),
            t, n_time)

    if quantity is IncrementFunctional.SQUARE_TAIL:
        # int_s^t int G_{t-r}^2 dxi dr, gap u = t - r in (0, t - s).
        return _time_integral(
            lambda u: _square_integrand(u, x, n_quad, literal),
            t - s, n_time)

    if quantity is IncrementFunctional.TIME_INCREMENT_INTEGRATED:
        # int_0^s int (G_{t-r} - G_{s-r})^2 dxi dr, gap u = s - r in (0, s).
        return _time_integral(
            lambda u: _time_increment_integrand(t - s + u, u, x, n_quad, literal),
            s, n_time)

    # TIME_INCREMENT_FIXED
    return float(_time_increment_integrand([t], [s], x, n_quad, literal)[0])


def increment_functional_series(quantity: IncrementFunctional, *, t: float,
                                s: float | None = None, x: float = 0.5,
                                y: float | None = None,
                                n_modes: int = 200000) -> float:
    """Closed-form eigen-sum value with exact time integration.

    Independent oracle route: the xi integral by Parseval and the time
    integral in closed form per mode.  Differs from increment_functional by
    its time-quadrature error only.
    """
    quantity = IncrementFunctional(quantity)
    n = np.arange(1, n_modes + 1)
    lam = n**2 * np.pi**2

    if quantity is IncrementFunctional.SPACE_INCREMENT:
        w = (np.cos(n * np.pi * x) - np.cos(n * np.pi * y)) ** 2
        return float(np.sum(2.0 * np.exp(-2.0 * lam * t) * w))

    if quantity is IncrementFunctional.SPACE_INCREMENT_TIME_INTEGRATED:
        w = (np.cos(n * np.pi * x) - np.cos(n * np.pi * y)) ** 2
        return float(np.sum(2.0 * w * (1.0 - np.exp(-2.0 * lam * t)) / (2.0 * lam)))

    if quantity is IncrementFunctional.SQUARE_TAIL:
        w = np.cos(n * np.pi * x) ** 2
        tail = np.sum(2.0 * w * (1.0 - np.exp(-2.0 * lam * (t - s))) / (2.0 * lam))
        return float((t - s) + tail)

    if quantity is IncrementFunctional.TIME_INCREMENT_INTEGRATED:
        w = np.cos(n * np.pi * x) ** 2
        jump = (1.0 - np.exp(-lam * (t - s))) ** 2
        return float(np.sum(2.0 * w * jump * (1.0 - np.exp(-2.0 * lam * s)) / (2.0 * lam)))

    w = np.cos(n * np.pi * x) ** 2
    jump = (1.0 - np.exp(-lam * (t - s))) ** 2
    return float(np.sum(2.0 * w * np.exp(-2.0 * lam * s) * jump))


def increment_bound_shape(quantity: IncrementFunctional, *, t: float,
                          s: float | None = None, x: float = 0.5,
                          y: float | None = None) -> float:
    """The modulus each functional is bounded by, up to constants.

    space increment: |x-y|^2 / t^(3/2); its time integral: |x-y|; the three
    time-gap quantities: |t-s|^(1/2).
    """
    quantity = IncrementFunctional(quantity)
    if quantity is IncrementFunctional.SPACE_INCREMENT:
        return abs(x - y) ** 2 / t**1.5
    if quantity is IncrementFunctional.SPACE_INCREMENT_TIME_INTEGRATED:
        return abs(x - y)
    return np.sqrt(t - s)

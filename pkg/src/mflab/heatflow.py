"""Tilted-covariance profiles, Ornstein-Uhlenbeck evolution, and the
reverse-flow transport map, in total dimension at most 2.

The central object is the Gaussian-tilted measure

    mu_{t,y}(dx) propto exp(-||x - y||^2 / 2t + ||x||^2 / 2) mu(dx),

whose covariance operator norm as a function of (t, y) is what certifies
a Lipschitz transport map from the standard Gaussian.  Profiles compare
the measured operator norms against small-time and large-time reference
envelopes; the unspecified universal constants in those envelopes are
fitted from the data and only their boundedness and stability are ever
asserted.

The transport map itself is built by integrating the flow

    d/dt S_t(x) = -grad log (d mu_t / d gamma)(S_t(x)),

where mu_t is the exact Ornstein-Uhlenbeck evolution of mu, and then
inverting the monotone 1-d map S_{t_max}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .bounds import BoundInputs, heatflow_lipschitz_bound
from .errors import (
    IntegrationFailureError,
    TiltDomainError,
    UnsupportedDimensionError,
)
from .measure import (
    Axis,
    GridDensity,
    covariance_opnorm,
    normalize_from_log_potential,
    w2_distance_1d,
    _write_csv,
)
from .sampler import TargetSpec, n_particle_log_density

MIN_COVERAGE_SD = 8.0
DEFAULT_FLOW_DT = 1e-3
DEFAULT_FLOW_T_MAX = 8.0
FLOW_GAMMA_W2_TOL = 1e-4
LIPSCHITZ_WINDOW_SD = 6.0


# -- tilting ----------------------------------------------------------------


def tilted_measure(mu: GridDensity, t: float, y) -> GridDensity:
    """The Gaussian tilt of a grid density, normalized on the same grid.

    Raises :class:`TiltDomainError` when the tilted exponent peaks on the
    grid boundary or the resulting mass escapes the grid, which is how a
    non-normalizable tilt (effective convexity <= 0) manifests here.
    """
    if t <= 0:
        raise TiltDomainError("tilt time t must be positive")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != mu.dim:
        raise TiltDomainError(f"tilt center has {y.size} coords, grid is {mu.dim}-d")
    pts = mu.node_points()
    diff = pts - y
    log_u = (mu.log_density.ravel()
             - np.sum(diff * diff, axis=1) / (2.0 * t)
             + 0.5 * np.sum(pts * pts, axis=1))
    shape = mu.weights.shape
    log_u = log_u.reshape(shape)
    _check_interior_peak(log_u)
    out = normalize_from_log_potential(log_u, mu.axes)
    cov = out.coverage_in_sd()
    if cov < MIN_COVERAGE_SD:
        raise TiltDomainError(
            f"tilted mass reaches the grid edge (coverage {cov:.2f} sd < "
            f"{MIN_COVERAGE_SD}); tilt may be non-normalizable"
        )
    sds = np.sqrt(np.diag(out.covariance()))
    for sd, ax in zip(sds, mu.axes):
        if sd < 1.5 * ax.spacing:
            raise TiltDomainError(
                f"tilt width {sd:.3g} under-resolved by grid spacing "
                f"{ax.spacing:.3g}; use an adapted grid (GibbsPotential path)"
            )
    return out


def _check_interior_peak(log_u: np.ndarray):
    idx = np.unravel_index(np.argmax(log_u), log_u.shape)
    for i, n in zip(idx, log_u.shape):
        if i == 0 or i == n - 1:
            raise TiltDomainError(
                "tilted exponent peaks on the grid boundary; "
                "the tilt is not normalizable on this domain"
            )


# -- profiling ---------------------------------------------------------------


@dataclass(frozen=True)
class GibbsPotential:
    """Log density of an N-particle Gibbs measure as a callable potential.

    Profiling at very small tilt times needs grids adapted to the tilt
    width, which a fixed base grid cannot resolve; this wrapper lets the
    profiler evaluate the exact log density on per-(t, y) grids.
    """

    target: TargetSpec

    @property
    def total_dim(self) -> int:
        m = self.target.effective_model
        return self.target.n_particles * m.d

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        m = self.target.effective_model
        states = np.asarray(pts, dtype=float).reshape(
            -1, self.target.n_particles, m.d)
        return n_particle_log_density(self.target, states)

    def base_sd(self) -> float:
        m = self.target.effective_model
        return m.sigma / math.sqrt(2.0 * m.lam)


def alpha_t(inputs: BoundInputs, t: float) -> float:
    """Effective strong convexity of the tilted single-particle measures."""
    return 2.0 * inputs.lam / inputs.sigma**2 - 1.0 + 1.0 / t


def regime_threshold(inputs: BoundInputs) -> float:
    """Crossover time t* = (20 B^2/sigma^4 - 2 lam/sigma^2 + 1)^{-1}.

    When the bracket is nonpositive every t counts as the small regime
    and the threshold is +inf.
    """
    s2 = inputs.sigma**2
    denom = 20.0 * inputs.B**2 / (s2 * s2) - 2.0 * inputs.lam / s2 + 1.0
    return 1.0 / denom if denom > 0 else math.inf


def small_regime_envelope(inputs: BoundInputs, t: float, const: float = 1.0) -> float:
    """[1/sqrt(alpha_t) + const (sqrt(beta_hat d_prox)/sigma + B/sigma^2)/alpha_t]^2."""
    a_t = alpha_t(inputs, t)
    bump = (math.sqrt(inputs.beta_hat * inputs.d_prox) / inputs.sigma
            + inputs.B / inputs.sigma**2)
    return (1.0 / math.sqrt(a_t) + const * bump / a_t) ** 2


def large_regime_envelope(inputs: BoundInputs, t: float, const_lin: float = 1.0,
                          const_tail: float = 1.0) -> float:
    """[1/sqrt(alpha_t) + c1 B/(alpha_t sigma^2)]^2
    + c2 (beta_hat B^2 d_prox / alpha_t^3 sigma^6 + beta_hat B^4 / alpha_t^4 sigma^10)."""
    a_t = alpha_t(inputs, t)
    s2 = inputs.sigma**2
    head = (1.0 / math.sqrt(a_t) + const_lin * inputs.B / (a_t * s2)) ** 2
    tail = const_tail * (
        inputs.beta_hat * inputs.B**2 * inputs.d_prox / (a_t**3 * s2**3)
        + inputs.beta_hat * inputs.B**4 / (a_t**4 * s2**5)
    )
    return head + tail


@dataclass(frozen=True)
class ProfileRow:
    t: float
    y_label: str
    opnorm: float
    alpha_t: float
    small_regime_ref: float
    large_regime_ref: float
    regime: str


@dataclass
class CovarianceProfile:
    """Measured tilted-covariance operator norms with reference envelopes."""

    rows: list[ProfileRow]
    t_star: float
    a: float
    inputs: BoundInputs
    envelope_constants: dict[str, float] = field(
        default_factory=lambda: {"small": 1.0, "large_lin": 1.0, "large_tail": 1.0})

    def ts(self, y_label: str | None = None) -> np.ndarray:
        return np.array([r.t for r in self._rows(y_label)])

    def opnorms(self, y_label: str | None = None) -> np.ndarray:
        return np.array([r.opnorm for r in self._rows(y_label)])

    def _rows(self, y_label: str | None):
        if y_label is None:
            return self.rows
        return [r for r in self.rows if r.y_label == y_label]

    def y_labels(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.y_label not in seen:
                seen.append(r.y_label)
        return seen

    def fitted_small_constant(self, y_label: str | None = None) -> float:
        """Smallest constant making the small-regime envelope cover the data."""
        bump = (math.sqrt(self.inputs.beta_hat * self.inputs.d_prox)
                / self.inputs.sigma + self.inputs.B / self.inputs.sigma**2)
        if bump == 0.0:
            return 0.0
        best = 0.0
        for r in self._rows(y_label):
            if r.regime != "small":
                continue
            gap = math.sqrt(max(r.opnorm, 0.0)) - 1.0 / math.sqrt(r.alpha_t)
            best = max(best, gap * r.alpha_t / bump)
        return best

    def fitted_profile_ratio(self, y_label: str | None = None) -> float:
        """Smallest multiple of the Gaussian reference 1/(a + 1/t) that
        dominates the measured norms; the quantity whose stability across
        tilt centers expresses tilt stability."""
        return max(r.opnorm * r.alpha_t for r in self._rows(y_label))

    def fitted_small_t_remainder(self, y_label: str | None = None,
                                 skip_smallest: int = 0) -> float:
        """Smallest C with |opnorm(t)/t - 1| <= C sqrt(t) over the fitted rows."""
        rows = sorted(self._rows(y_label), key=lambda r: r.t)
        rows = rows[skip_smallest:]
        return max(
            abs(r.opnorm / r.t - 1.0) / math.sqrt(r.t) for r in rows
        )

    def to_csv(self, path):
        header = "t,y,opnorm,alpha_t,small_regime_ref,large_regime_ref,regime"
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for r in self.rows:
                fh.write(
                    f"{r.t!r},{r.y_label},{r.opnorm!r},{r.alpha_t!r},"
                    f"{r.small_regime_ref!r},{r.large_regime_ref!r},{r.regime}\n"
                )

    def plot_data(self, path, y_label: str | None = None):
        """(t, opnorm, envelopes) triples ready for external plotting."""
        rows = self._rows(y_label)
        _write_csv(
            path, "t,opnorm,small_regime_ref,large_regime_ref",
            [np.array([r.t for r in rows]),
             np.array([r.opnorm for r in rows]),
             np.array([r.small_regime_ref for r in rows]),
             np.array([r.large_regime_ref for r in rows])],
        )

    def to_svg(self, path, y_label: str | None = None):
        rows = self._rows(y_label)
        xs = np.log10([r.t for r in rows])
        series = {
            "opnorm": np.log10([r.opnorm for r in rows]),
            "small_ref": np.log10([r.small_regime_ref for r in rows]),
            "large_ref": np.log10([r.large_regime_ref for r in rows]),
        }
        write_svg_lines(path, xs, series,
                        x_label="log10 t", y_label="log10 opnorm")


def default_profile_times(inputs: BoundInputs, n: int = 40,
                          decades_around: float = 2.0) -> np.ndarray:
    """Log-spaced times around the regime threshold (or around 1 if the
    threshold is infinite)."""
    t_star = regime_threshold(inputs)
    center = t_star if math.isfinite(t_star) else 1.0
    lo = center / 10.0**decades_around
    hi = center * 10.0**decades_around
    return np.geomspace(lo, hi, n)


def covariance_profile(mu, t_list, y_list, inputs: BoundInputs,
                       envelope_constants: dict | None = None,
                       n_nodes: int | None = None) -> CovarianceProfile:
    """Operator norms of tilted covariances against both reference envelopes.

    `mu` may be a :class:`GridDensity` (tilts evaluated on its own grid)
    or a :class:`GibbsPotential` (each (t, y) gets a grid adapted to the
    tilt width, which small-t asymptotics require).
    """
    consts = envelope_constants or {}
    c_small = consts.get("small", 1.0)
    c_lin = consts.get("large_lin", 1.0)
    c_tail = consts.get("large_tail", 1.0)
    t_star = regime_threshold(inputs)
    a = 2.0 * inputs.lam / inputs.sigma**2 - 1.0
    rows = []
    for y in y_list:
        y_vec = np.atleast_1d(np.asarray(y, dtype=float))
        label = "y=" + "/".join(f"{v:g}" for v in y_vec)
        for t in t_list:
            t = float(t)
            if isinstance(mu, GridDensity):
                tilted = tilted_measure(mu, t, y_vec)
            elif isinstance(mu, GibbsPotential):
                tilted = _adapted_tilted_density(mu, t, y_vec, inputs, n_nodes)
            else:
                raise TypeError(
                    "mu must be a GridDensity or GibbsPotential, "
                    f"got {type(mu)!r}")
            _, opnorm = covariance_opnorm(tilted)
            rows.append(ProfileRow(
                t=t, y_label=label, opnorm=float(opnorm),
                alpha_t=alpha_t(inputs, t),
                small_regime_ref=small_regime_envelope(inputs, t, c_small),
                large_regime_ref=large_regime_envelope(inputs, t, c_lin, c_tail),
                regime="small" if t <= t_star else "large",
            ))
    return CovarianceProfile(
        rows=rows, t_star=t_star, a=a, inputs=inputs,
        envelope_constants={"small": c_small, "large_lin": c_lin,
                            "large_tail": c_tail},
    )


def _adapted_tilted_density(potential: GibbsPotential, t: float,
                            y: np.ndarray, inputs: BoundInputs,
                            n_nodes: int | None) -> GridDensity:
    """Tilted density on a grid centered at the tilted mode with width
    set by 1/sqrt(alpha_t)."""
    dim = potential.total_dim
    if y.size != dim:
        raise TiltDomainError(
            f"tilt center has {y.size} coords, potential is {dim}-d")
    a_t = alpha_t(inputs, t)
    if a_t <= 0:
        raise TiltDomainError(f"alpha_t = {a_t:.4g} <= 0: tilt not normalizable")
    if n_nodes is None:
        n_nodes = 2048 if dim == 1 else 192
    sd_t = 1.0 / math.sqrt(a_t)
    a = 2.0 * inputs.lam / inputs.sigma**2 - 1.0
    center_proxy = y / (1.0 + a * t)
    base_sd = potential.base_sd()

    def tilted_log(pts):
        diff = pts - y
        return (potential(pts)
                - np.sum(diff * diff, axis=1) / (2.0 * t)
                + 0.5 * np.sum(pts * pts, axis=1))

    # Coarse scan over a box that covers both the base measure and the
    # proxy tilt center, then a fine window around the located mode.
    coarse_axes = []
    for j in range(dim):
        lo = min(-10.0 * base_sd, center_proxy[j] - 10.0 * sd_t)
        hi = max(10.0 * base_sd, center_proxy[j] + 10.0 * sd_t)
        coarse_axes.append(Axis(lo, hi, 801 if dim == 1 else 121))
    coarse_pts = _grid_points(coarse_axes)
    mode = coarse_pts[int(np.argmax(tilted_log(coarse_pts)))]

    half_width = 14.0 * sd_t
    for _ in range(3):
        axes = tuple(Axis(mode[j] - half_width, mode[j] + half_width, n_nodes)
                     for j in range(dim))
        pts = _grid_points(axes)
        log_u = tilted_log(pts).reshape(tuple(ax.n for ax in axes))
        _check_interior_peak(log_u)
        out = normalize_from_log_potential(log_u, axes)
        if out.coverage_in_sd() >= MIN_COVERAGE_SD:
            return out
        mode = out.mean()
        half_width *= 2.0
    raise TiltDomainError(
        f"could not cover the tilted measure at t={t:g} within 3 widenings")


def _grid_points(axes) -> np.ndarray:
    axes = tuple(axes)
    if len(axes) == 1:
        return axes[0].nodes()[:, None]
    x, yy = np.meshgrid(axes[0].nodes(), axes[1].nodes(), indexing="ij")
    return np.column_stack([x.ravel(), yy.ravel()])


# -- Ornstein-Uhlenbeck evolution --------------------------------------------


def ou_evolve(mu: GridDensity, t: float) -> GridDensity:
    """Law of e^{-t} X + sqrt(1 - e^{-2t}) G for X ~ mu, G standard normal.

    The Gaussian kernel is applied by quadrature along each axis (the
    kernel factorizes), which realizes the exact semigroup action with no
    time stepping.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0:
        return GridDensity(mu.axes, mu.weights.copy(), mu.log_density.copy())
    bw = math.sqrt(-math.expm1(-2.0 * t))
    decay = math.exp(-t)
    for ax in mu.axes:
        if bw < 1.5 * ax.spacing:
            raise ValueError(
                f"OU kernel width {bw:.3g} under-resolved by grid spacing "
                f"{ax.spacing:.3g}; use a finer grid or larger t"
            )
    mats = [_ou_kernel_matrix(ax, decay, bw) for ax in mu.axes]
    if mu.dim == 1:
        w = mats[0] @ mu.weights
    else:
        w = mats[0] @ mu.weights @ mats[1].T
    w = np.clip(w, 0.0, None)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    out = GridDensity(mu.axes, w, logw)
    z = out.mass()
    with np.errstate(divide="ignore"):
        return GridDensity(mu.axes, out.weights / z, np.log(out.weights / z))


def _ou_kernel_matrix(ax: Axis, decay: float, bw: float) -> np.ndarray:
    x = ax.nodes()
    z = (x[:, None] - decay * x[None, :]) / bw
    kern = np.exp(-0.5 * z * z) / (bw * math.sqrt(2.0 * math.pi))
    return kern * ax.quad_weights()[None, :]


def standard_gaussian_grid(axes) -> GridDensity:
    """gamma restricted to the grid (unit-mass renormalized)."""
    axes = (axes,) if isinstance(axes, Axis) else tuple(axes)
    pts = _grid_points(axes)
    log_u = -0.5 * np.sum(pts * pts, axis=1)
    return normalize_from_log_potential(
        log_u.reshape(tuple(ax.n for ax in axes)), axes)


# -- heat-flow integral identities -------------------------------------------


def heat_flow_integral_quadrature(alpha: float, k: float) -> float:
    """Numerical value of int_0^inf e^{2t}(e^{2t}-1)^{k-2}/(alpha(e^{2t}-1)+1)^k dt.

    Uses the substitution tau = e^{2t} - 1, which maps the integrand to
    tau^{k-2} / (2 (alpha tau + 1)^k); the closed form is
    1/(2 (k-1) alpha^{k-1}).
    """
    if alpha <= 0 or k <= 1:
        raise ValueError("need alpha > 0 and k > 1")

    def integrand(tau):
        return tau ** (k - 2.0) / (2.0 * (alpha * tau + 1.0) ** k)

    head, _ = quad(integrand, 0.0, 1.0, limit=200)
    tail, _ = quad(integrand, 1.0, np.inf, limit=200)
    return head + tail


def log_term_integral_quadrature(alpha: float) -> float:
    """Numerical value of int_0^inf (1-alpha)/(alpha(e^{2t}-1)+1) dt,
    whose closed form is -(1/2) log alpha."""
    if alpha <= 0:
        raise ValueError("need alpha > 0")

    def integrand(tau):
        return (1.0 - alpha) / ((alpha * tau + 1.0) * 2.0 * (tau + 1.0))

    head, _ = quad(integrand, 0.0, 1.0, limit=200)
    tail, _ = quad(integrand, 1.0, np.inf, limit=200)
    return head + tail


# -- reverse flow map ---------------------------------------------------------


@dataclass
class FlowMap:
    """Monotone 1-d transport map from the standard Gaussian.

    `source` are gamma-side evaluation points, `mapped` their images
    T(source).  `forward_points`/`forward_images` keep the integrated
    pairs x -> S_{t_max}(x) used to build T by inversion.
    """

    source: np.ndarray
    mapped: np.ndarray
    dt: float
    t_max: float
    forward_points: np.ndarray
    forward_images: np.ndarray


def reverse_flow_map(mu: GridDensity, t_max: float = DEFAULT_FLOW_T_MAX,
                     dt: float = DEFAULT_FLOW_DT,
                     n_eval: int = 2048) -> FlowMap:
    """Integrate the score flow to the Gaussian and invert it.

    Classical 4th-order Runge-Kutta in t; the density along the way is
    advanced with a precomputed half-step Ornstein-Uhlenbeck kernel (the
    exact semigroup, so composition introduces no stepping error), and
    scores come from central differences of the log density.  Fails
    loudly if the integrated map loses monotonicity or the final density
    has not reached the Gaussian.
    """
    if mu.dim != 1:
        raise UnsupportedDimensionError("flow maps are built in 1-d only")
    if dt <= 0 or t_max <= 0:
        raise ValueError("dt and t_max must be positive")
    ax = mu.axes[0]
    x = ax.nodes()
    interior = mu.weights[1:-1]
    if np.any(interior <= 0):
        raise ValueError("mu must be strictly positive on the grid interior")

    mean = float(mu.mean()[0])
    sd = math.sqrt(float(mu.covariance()[0, 0]))
    lo = mean - 8.0 * sd
    hi = mean + 8.0 * sd
    mask = (x >= lo) & (x <= hi)
    pts = x[mask]
    s = pts.copy()

    n_steps = int(round(t_max / dt))
    half_kernel = _sparse_half_kernel(ax, dt / 2.0)
    rho = mu.weights.copy()
    score_now = _score_field(rho, x, ax.spacing)
    for _ in range(n_steps):
        rho_half = _apply_kernel(half_kernel, rho, ax)
        rho_next = _apply_kernel(half_kernel, rho_half, ax)
        score_half = _score_field(rho_half, x, ax.spacing)
        score_next = _score_field(rho_next, x, ax.spacing)

        k1 = -_interp_linear(s, x, score_now)
        k2 = -_interp_linear(s + 0.5 * dt * k1, x, score_half)
        k3 = -_interp_linear(s + 0.5 * dt * k2, x, score_half)
        k4 = -_interp_linear(s + dt * k3, x, score_next)
        s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        rho = rho_next
        score_now = score_next

    if np.any(np.diff(s) <= 0):
        raise IntegrationFailureError(
            "integrated flow is not strictly increasing; reduce dt"
        )
    with np.errstate(divide="ignore"):
        final = GridDensity(mu.axes, rho, np.log(np.clip(rho, 1e-300, None)))
    gamma = standard_gaussian_grid(mu.axes)
    w2_gap = w2_distance_1d(final, gamma)
    if w2_gap >= FLOW_GAMMA_W2_TOL:
        raise IntegrationFailureError(
            f"final density is W2 = {w2_gap:.3g} from the Gaussian; "
            f"increase t_max"
        )

    inv = PchipInterpolator(s, pts, extrapolate=False)
    src_lo = max(float(s[0]), -8.0)
    src_hi = min(float(s[-1]), 8.0)
    source = np.linspace(src_lo, src_hi, n_eval)
    mapped = inv(source)
    return FlowMap(source=source, mapped=np.asarray(mapped), dt=dt,
                   t_max=t_max, forward_points=pts, forward_images=s)


def _sparse_half_kernel(ax: Axis, tau: float) -> sparse.csr_matrix:
    decay = math.exp(-tau)
    bw = math.sqrt(-math.expm1(-2.0 * tau))
    # Trapezoid quadrature of a Gaussian kernel is spectrally accurate:
    # the aliasing error is ~2 exp(-2 pi^2 (bw/dx)^2), below 1e-19 already
    # at 1.5 nodes per bandwidth.
    if bw < 1.5 * ax.spacing:
        raise IntegrationFailureError(
            f"flow step dt too small for this grid: kernel width {bw:.3g} vs "
            f"spacing {ax.spacing:.3g}"
        )
    dense = _ou_kernel_matrix(ax, decay, bw)
    dense[dense < 1e-40] = 0.0
    return sparse.csr_matrix(dense)


def _apply_kernel(kernel: sparse.csr_matrix, rho: np.ndarray, ax: Axis) -> np.ndarray:
    out = kernel @ rho
    mass = float(np.sum(ax.quad_weights() * out))
    return out / mass


def _score_field(rho: np.ndarray, x: np.ndarray, dx: float) -> np.ndarray:
    """grad log (rho / gamma) = grad log rho + x on the grid."""
    log_rho = np.log(np.clip(rho, 1e-300, None))
    return np.gradient(log_rho, dx) + x


def _interp_linear(pos: np.ndarray, x: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Linear interpolation with linear extrapolation from the end slopes."""
    out = np.interp(pos, x, values)
    left_slope = (values[1] - values[0]) / (x[1] - x[0])
    right_slope = (values[-1] - values[-2]) / (x[-1] - x[-2])
    below = pos < x[0]
    above = pos > x[-1]
    if np.any(below):
        out[below] = values[0] + left_slope * (pos[below] - x[0])
    if np.any(above):
        out[above] = values[-1] + right_slope * (pos[above] - x[-1])
    return out


def lipschitz_estimate(flow: FlowMap) -> float:
    """Max adjacent difference ratio of T inside the central +-6 sd window."""
    src = flow.source
    mapped = flow.mapped
    window = (src >= -LIPSCHITZ_WINDOW_SD) & (src <= LIPSCHITZ_WINDOW_SD)
    s = src[window]
    m = mapped[window]
    if s.size < 2:
        raise ValueError("flow map has fewer than 2 points in the window")
    return float(np.max(np.diff(m) / np.diff(s)))


def pushforward_density(flow: FlowMap) -> GridDensity:
    """T_# gamma as a grid density on the forward integration points.

    Change of variables through the forward map: the density of T_# gamma
    at x is phi(S(x)) S'(x).
    """
    x = flow.forward_points
    s = flow.forward_images
    ds_dx = np.gradient(s, x)
    vals = np.exp(-0.5 * s * s) / math.sqrt(2.0 * math.pi) * ds_dx
    ax = Axis(float(x[0]), float(x[-1]), x.size)
    with np.errstate(divide="ignore"):
        log_u = np.log(np.clip(vals, 1e-300, None))
    return normalize_from_log_potential(log_u, (ax,))


def pushforward_w2(flow: FlowMap, mu: GridDensity) -> float:
    """W2 distance between T_# gamma and mu (both as 1-d grid densities)."""
    push = pushforward_density(flow)
    return w2_distance_1d(push, mu)


def fit_envelope_constant(ts, opnorms, a: float, k: float) -> float:
    """Smallest C with opnorm(t) <= 1/(a + 1/t) + C/(a + 1/t)^k on the data."""
    ts = np.asarray(ts, dtype=float)
    ops = np.asarray(opnorms, dtype=float)
    base = a + 1.0 / ts
    gaps = (ops - 1.0 / base) * base**k
    return float(max(0.0, gaps.max()))


def fitted_lipschitz_bound(ts, opnorms, a: float,
                           k_grid=(1.5, 2.0, 3.0, 4.0)) -> tuple[float, float, float]:
    """Best single-term envelope bound over a grid of exponents.

    Returns (bound, C, k) for the exponent whose fitted envelope gives the
    smallest Lipschitz estimate.
    """
    best = None
    for k in k_grid:
        c = fit_envelope_constant(ts, opnorms, a, k)
        bound = heatflow_lipschitz_bound(a, [(c, k)])
        if best is None or bound < best[0]:
            best = (bound, c, k)
    return best


# -- flow map serialization ----------------------------------------------------


def flow_map_to_csv(flow: FlowMap, path):
    _write_csv(path, "source,mapped",
               [flow.source, flow.mapped])


def write_svg_lines(path, xs, series: dict, width: int = 640, height: int = 420,
                    x_label: str = "", y_label: str = ""):
    """Minimal static SVG line chart; one polyline per named series."""
    xs = np.asarray(xs, dtype=float)
    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(all_y.min()), float(all_y.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 50
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"]

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>',
        f'<text x="15" y="{height / 2:.0f}" text-anchor="middle" '
        f'font-size="12" transform="rotate(-90 15 {height / 2:.0f})">'
        f'{y_label}</text>',
    ]
    for i, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        points = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
        color = colors[i % len(colors)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{points}"/>')
        parts.append(
            f'<text x="{width - pad + 4}" y="{pad + 16 * i}" font-size="11" '
            f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")

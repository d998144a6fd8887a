"""Probability measures on grids, Gaussians, and particle clouds.

Grid densities live on uniform rectangular grids in 1 or 2 dimensions and
carry their log density alongside the weights so that downstream tilting
and normalization never exponentiate large numbers.  All integrals use
trapezoid quadrature, which is positivity-preserving and, for smooth
rapidly decaying integrands on wide grids, accurate far beyond its formal
second order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    DimensionMismatchError,
    EmptyMeasureError,
    SupportViolationError,
    UnsupportedDimensionError,
)

# Grid nodes with density below this threshold contribute nothing to KL sums.
KL_SUPPORT_FLOOR = 1e-300

DEFAULT_NODES_1D = 2048
DEFAULT_NODES_2D = 256
DEFAULT_SPAN_SD = 10.0


@dataclass(frozen=True)
class Axis:
    """A uniform 1-d grid: `n` nodes from `lo` to `hi` inclusive."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ValueError("axis endpoints must be finite")
        if self.hi <= self.lo:
            raise ValueError("axis needs hi > lo")
        if self.n < 2:
            raise ValueError("axis needs at least 2 nodes")

    @property
    def spacing(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    def quad_weights(self) -> np.ndarray:
        """Trapezoid-rule weights for this axis."""
        w = np.full(self.n, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


def _as_axes(axes) -> tuple[Axis, ...]:
    if isinstance(axes, Axis):
        return (axes,)
    axes = tuple(axes)
    if not 1 <= len(axes) <= 2:
        raise UnsupportedDimensionError("grids support 1 or 2 dimensions only")
    return axes


@dataclass(frozen=True)
class GridDensity:
    """Normalized density sampled on a uniform rectangular grid.

    `weights` holds density values at the nodes (shape (n,) in 1-d,
    (n1, n2) in 2-d); `log_density` is kept alongside for numerically
    stable tilting.  Construct through :func:`normalize_from_log_potential`
    or the classmethods, which guarantee unit trapezoid mass.
    """

    axes: tuple[Axis, ...]
    weights: np.ndarray
    log_density: np.ndarray = field(repr=False)

    def __post_init__(self):
        axes = _as_axes(self.axes)
        object.__setattr__(self, "axes", axes)
        w = np.asarray(self.weights, dtype=float)
        shape = tuple(ax.n for ax in axes)
        if w.shape != shape:
            raise DimensionMismatchError(
                f"weights shape {w.shape} does not match grid shape {shape}"
            )
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("grid weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(
            self, "log_density", np.asarray(self.log_density, dtype=float)
        )

    # -- basic geometry -------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.axes)

    def nodes(self, axis: int = 0) -> np.ndarray:
        return self.axes[axis].nodes()

    def node_points(self) -> np.ndarray:
        """All grid nodes as an (M, dim) array in C order."""
        if self.dim == 1:
            return self.nodes()[:, None]
        x, y = np.meshgrid(self.nodes(0), self.nodes(1), indexing="ij")
        return np.column_stack([x.ravel(), y.ravel()])

    def quad_weights(self) -> np.ndarray:
        """Trapezoid quadrature weights, same shape as `weights`."""
        if self.dim == 1:
            return self.axes[0].quad_weights()
        return np.outer(self.axes[0].quad_weights(), self.axes[1].quad_weights())

    # -- integrals ------------------------------------------------------

    def mass(self) -> float:
        return float(np.sum(self.quad_weights() * self.weights))

    def expect(self, values: np.ndarray) -> float:
        """Integrate a function given by its values on the grid nodes."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.weights.shape:
            raise DimensionMismatchError(
                f"values shape {values.shape} != grid shape {self.weights.shape}"
            )
        return float(np.sum(self.quad_weights() * self.weights * values))

    def mean(self) -> np.ndarray:
        pts = self.node_points()
        cw = (self.quad_weights() * self.weights).ravel()
        return pts.T @ cw

    def covariance(self) -> np.ndarray:
        pts = self.node_points()
        cw = (self.quad_weights() * self.weights).ravel()
        m = pts.T @ cw
        centered = pts - m
        return (centered * cw[:, None]).T @ centered

    def same_grid(self, other: "GridDensity") -> bool:
        return self.axes == other.axes

    # -- constructors ----------------------------------------------------

    @classmethod
    def gaussian(cls, axes, mean, cov) -> "GridDensity":
        """Grid restriction of a Gaussian density, renormalized to mass 1."""
        axes = _as_axes(axes)
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        pts = _node_points(axes)
        diff = pts - mean
        prec = np.linalg.inv(cov)
        log_u = -0.5 * np.einsum("ij,jk,ik->i", diff, prec, diff)
        return normalize_from_log_potential(
            log_u.reshape(tuple(ax.n for ax in axes)), axes
        )

    # -- coverage sanity --------------------------------------------------

    def coverage_in_sd(self) -> float:
        """Smallest number of standard deviations between mean and grid edge.

        The grid-extent invariant asks for at least 8 along every axis.
        """
        m = self.mean()
        sd = np.sqrt(np.clip(np.diag(self.covariance()), 1e-300, None))
        margins = []
        for i, ax in enumerate(self.axes):
            margins.append((m[i] - ax.lo) / sd[i])
            margins.append((ax.hi - m[i]) / sd[i])
        return float(min(margins))

    # -- serialization ----------------------------------------------------

    def to_csv(self, csv_path, json_path=None):
        """Write (node, weight) rows plus a JSON header with axes metadata."""
        pts = self.node_points()
        cols = [pts[:, i] for i in range(self.dim)] + [self.weights.ravel()]
        header = ",".join([f"x{i + 1}" for i in range(self.dim)] + ["weight"])
        _write_csv(csv_path, header, cols)
        if json_path is not None:
            meta = {
                "dim": self.dim,
                "axes": [
                    {"lo": ax.lo, "hi": ax.hi, "n": ax.n} for ax in self.axes
                ],
            }
            with open(json_path, "w") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True)
                fh.write("\n")

    @classmethod
    def from_csv(cls, csv_path, json_path) -> "GridDensity":
        with open(json_path) as fh:
            meta = json.load(fh)
        axes = tuple(Axis(a["lo"], a["hi"], a["n"]) for a in meta["axes"])
        raw = np.loadtxt(csv_path, delimiter=",", skiprows=1)
        w = raw[:, -1].reshape(tuple(ax.n for ax in axes))
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        return cls(axes, w, logw)


@dataclass(frozen=True)
class GaussianMeasure:
    """Multivariate Gaussian given by mean and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        c = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if c.shape != (m.size, m.size):
            raise DimensionMismatchError("covariance shape must match mean")
        if not np.allclose(c, c.T, atol=1e-12):
            raise ValueError("covariance must be symmetric (1e-12)")
        if np.any(np.linalg.eigvalsh(c) <= 0):
            raise ValueError("covariance must be positive definite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", c)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform atomic measure on N points in R^d."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("points must be an (N, d) array with N >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("particle coordinates must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)


Measure = GridDensity | GaussianMeasure | EmpiricalMeasure


def _node_points(axes: tuple[Axis, ...]) -> np.ndarray:
    if len(axes) == 1:
        return axes[0].nodes()[:, None]
    x, y = np.meshgrid(axes[0].nodes(), axes[1].nodes(), indexing="ij")
    return np.column_stack([x.ravel(), y.ravel()])


def default_axis(mean: float = 0.0, sd: float = 1.0, n: int = DEFAULT_NODES_1D,
                 span_sd: float = DEFAULT_SPAN_SD) -> Axis:
    """Axis centered on a Gaussian proxy, extending `span_sd` deviations."""
    return Axis(mean - span_sd * sd, mean + span_sd * sd, n)


def normalize_from_log_potential(log_u, axes) -> GridDensity:
    """Build the grid density proportional to exp(log_u).

    Subtracts the maximum before exponentiating, so overflow cannot occur;
    the returned density has unit trapezoid mass.
    """
    axes = _as_axes(axes)
    log_u = np.asarray(log_u, dtype=float)
    shape = tuple(ax.n for ax in axes)
    if log_u.shape != shape:
        raise DimensionMismatchError(
            f"log potential shape {log_u.shape} != grid shape {shape}"
        )
    if np.any(np.isnan(log_u)) or np.any(log_u == np.inf):
        raise ValueError("log potential must not contain NaN or +inf")
    peak = np.max(log_u)
    if peak == -np.inf:
        raise EmptyMeasureError("log potential is -inf everywhere")
    u = np.exp(log_u - peak)
    if len(axes) == 1:
        qw = axes[0].quad_weights()
    else:
        qw = np.outer(axes[0].quad_weights(), axes[1].quad_weights())
    z = float(np.sum(qw * u))
    weights = u / z
    log_density = log_u - peak - np.log(z)
    return GridDensity(axes, weights, log_density)


def kl_divergence(p: GridDensity, q: GridDensity) -> float:
    """KL(p || q) for two densities on the same grid.

    Nodes where p < 1e-300 contribute zero.  Raises when q vanishes on
    the support of p, reporting how many nodes offend.
    """
    if not p.same_grid(q):
        raise DimensionMismatchError("KL needs both densities on one grid")
    pw = p.weights
    qw_density = q.weights
    support = pw > KL_SUPPORT_FLOOR
    bad = int(np.sum(support & (qw_density <= KL_SUPPORT_FLOOR)))
    if bad:
        raise SupportViolationError(bad)
    quad = p.quad_weights()
    ratio = np.log(pw[support]) - np.log(qw_density[support])
    return float(np.sum(quad[support] * pw[support] * ratio))


def covariance_opnorm(p: Measure, rel_tol: float = 1e-10,
                      max_iter: int = 100_000) -> tuple[np.ndarray, float]:
    """Covariance matrix and its largest eigenvalue by power iteration.

    The start vector is a fixed, slightly tilted all-ones direction so
    runs are deterministic and the iteration cannot start orthogonal to
    the leading eigenvector for the 2x2 matrices seen here.
    """
    if isinstance(p, GridDensity):
        cov = p.covariance()
    elif isinstance(p, GaussianMeasure):
        cov = p.cov.copy()
    elif isinstance(p, EmpiricalMeasure):
        pts = p.points
        centered = pts - pts.mean(axis=0)
        cov = centered.T @ centered / pts.shape[0]
    else:
        raise TypeError(f"unsupported measure type {type(p)!r}")

    d = cov.shape[0]
    if d == 1:
        return cov, float(cov[0, 0])
    v = np.ones(d) + 1e-3 * np.arange(d)
    v /= np.linalg.norm(v)
    lam = float(v @ cov @ v)
    for _ in range(max_iter):
        w = cov @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return cov, 0.0
        v = w / nw
        lam_new = float(v @ cov @ v)
        if abs(lam_new - lam) <= rel_tol * max(abs(lam_new), 1e-300):
            return cov, lam_new
        lam = lam_new
    return cov, lam


def _corrected_cdf(p: GridDensity) -> np.ndarray:
    """Cumulative trapezoid with the Euler-Maclaurin h^2/12 endpoint fix.

    The correction removes the O(h^2) pointwise error of the plain
    cumulative trapezoid, which the 1e-6 transport tolerances require.
    """
    f = p.weights
    h = p.axes[0].spacing
    cum = np.concatenate([[0.0], np.cumsum((f[1:] + f[:-1]) * 0.5 * h)])
    fp = np.gradient(f, h)
    cdf = cum - (h * h / 12.0) * (fp - fp[0])
    cdf = np.maximum.accumulate(np.clip(cdf, 0.0, None))
    total = cdf[-1]
    return cdf / total


def _quantile_interpolator(p: GridDensity):
    """Monotone (PCHIP) interpolation of the inverse CDF on the grid."""
    cdf = _corrected_cdf(p)
    x = p.nodes()
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    cdf_k, x_k = cdf[keep], x[keep]
    interp = PchipInterpolator(cdf_k, x_k, extrapolate=False)
    lo_u, hi_u = cdf_k[0], cdf_k[-1]
    lo_x, hi_x = x_k[0], x_k[-1]

    def quantile(u):
        u = np.asarray(u, dtype=float)
        out = interp(np.clip(u, lo_u, hi_u))
        out = np.where(u <= lo_u, lo_x, out)
        out = np.where(u >= hi_u, hi_x, out)
        return out

    return quantile


def w2_distance_1d(p: GridDensity, q: GridDensity) -> float:
    """Quantile-coupling 2-Wasserstein distance between 1-d grid densities.

    Uses W2^2 = E_p[(x - Q_q(F_p(x)))^2], the change of variables u = F_p(x)
    of the quantile formula, so the integrand carries the decay of p.
    """
    if p.dim != 1 or q.dim != 1:
        raise UnsupportedDimensionError("w2_distance_1d needs 1-d densities")
    if p.same_grid(q) and np.array_equal(p.weights, q.weights):
        return 0.0
    f_p = _corrected_cdf(p)
    q_q = _quantile_interpolator(q)
    x = p.nodes()
    displacement = x - q_q(f_p)
    w2sq = float(
        np.sum(p.quad_weights() * p.weights * displacement**2)
    )
    return float(np.sqrt(max(w2sq, 0.0)))


def sample_from_grid(p: GridDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF i.i.d. draws from a 1-d grid density, shape (n, 1)."""
    if p.dim != 1:
        raise UnsupportedDimensionError("grid sampling implemented in 1-d only")
    quantile = _quantile_interpolator(p)
    u = rng.random(n)
    return np.asarray(quantile(u))[:, None]


def gaussian_kl(a: GaussianMeasure, b: GaussianMeasure) -> float:
    """Closed-form KL(a || b) between Gaussians; used as a test oracle."""
    if a.dim != b.dim:
        raise DimensionMismatchError("Gaussian KL needs equal dimensions")
    d = a.dim
    prec_b = np.linalg.inv(b.cov)
    dm = b.mean - a.mean
    trace = float(np.trace(prec_b @ a.cov))
    quad = float(dm @ prec_b @ dm)
    _, logdet_a = np.linalg.slogdet(a.cov)
    _, logdet_b = np.linalg.slogdet(b.cov)
    return 0.5 * (trace + quad - d + logdet_b - logdet_a)


def _write_csv(path, header: str, columns):
    rows = np.column_stack(columns)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

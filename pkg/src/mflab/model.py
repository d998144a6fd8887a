"""Mean-field energy functionals, their variations, and derived constants.

Three interaction energies are supported:

* ``Zero`` -- no interaction; the confinement acts alone.
* ``ExampleNN`` -- prediction-loss energy of a two-layer network read as a
  measure over neurons: F0(nu) = sum_j p_j * loss(E_nu h(., z_j), y_j)
  with h a pointwise activation of an inner product.
* ``QuadraticOracle`` -- F0(nu) = (kappa/2) (<e, mean(nu)> - c)^2, the
  closed-form special case used as an algebra oracle throughout the tests.

Every operation is a pure function of an immutable spec, safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .bounds import BoundInputs
from .errors import AlreadyRescaledError, DimensionMismatchError
from .measure import EmpiricalMeasure, GaussianMeasure, GridDensity, Measure

GH_NODES = 64

WEIGHT_SUM_TOL = 1e-12


# -- losses ---------------------------------------------------------------


@dataclass(frozen=True)
class SquaredLoss:
    """Scaled squared loss, linearized outside a clipping radius.

    value = (scale/2) r^2 for |r| <= clip_radius and continues linearly
    beyond, so the derivative is globally bounded by scale * clip_radius.
    The linear continuation keeps the loss convex with curvature at most
    `scale`, which is what the smoothness constants assume; at the scales
    of the presets the clip is never active and the loss is exactly
    quadratic.
    """

    scale: float = 1.0
    clip_radius: float = 10.0

    def __post_init__(self):
        if self.scale <= 0 or self.clip_radius <= 0:
            raise ValueError("scale and clip_radius must be positive")

    @property
    def beta_ell(self) -> float:
        return self.scale

    @property
    def L_ell(self) -> float:
        return self.scale * self.clip_radius

    def value(self, yhat, y):
        r = np.asarray(yhat, dtype=float) - y
        r_abs = np.abs(r)
        quad = 0.5 * self.scale * r * r
        lin = self.scale * self.clip_radius * (r_abs - 0.5 * self.clip_radius)
        return np.where(r_abs <= self.clip_radius, quad, lin)

    def d1(self, yhat, y):
        r = np.asarray(yhat, dtype=float) - y
        return self.scale * np.clip(r, -self.clip_radius, self.clip_radius)

    def d2(self, yhat, y):
        r = np.asarray(yhat, dtype=float) - y
        return np.where(np.abs(r) <= self.clip_radius, self.scale, 0.0)


@dataclass(frozen=True)
class LogisticLoss:
    """Binary logistic loss with labels in {-1, +1}."""

    @property
    def beta_ell(self) -> float:
        return 0.25

    @property
    def L_ell(self) -> float:
        return 1.0

    def value(self, yhat, y):
        return np.logaddexp(0.0, -np.asarray(y) * np.asarray(yhat, dtype=float))

    def d1(self, yhat, y):
        y = np.asarray(y)
        return -y * expit(-y * np.asarray(yhat, dtype=float))

    def d2(self, yhat, y):
        margin = np.asarray(y) * np.asarray(yhat, dtype=float)
        return expit(margin) * expit(-margin)


# -- activations ----------------------------------------------------------


@dataclass(frozen=True)
class Activation:
    """Scalar activation with a pointwise derivative.

    For ReLU the derivative at the kink is taken to be 0; any choice in
    [0, 1] satisfies the gradient bound, and 0 keeps it tight and
    deterministic.
    """

    name: str

    def __post_init__(self):
        if self.name not in ("relu", "tanh", "identity"):
            raise ValueError(f"unknown activation {self.name!r}")

    def value(self, u):
        if self.name == "relu":
            return np.maximum(u, 0.0)
        if self.name == "tanh":
            return np.tanh(u)
        return np.asarray(u, dtype=float)

    def deriv(self, u):
        if self.name == "relu":
            return (np.asarray(u) > 0.0).astype(float)
        if self.name == "tanh":
            t = np.tanh(u)
            return 1.0 - t * t
        return np.ones_like(np.asarray(u, dtype=float))


RELU = Activation("relu")
TANH = Activation("tanh")
IDENTITY = Activation("identity")


# -- model spec -----------------------------------------------------------


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of a confined mean-field energy.

    The full energy is F(nu) = F0(nu) + (lam/2) E_nu ||.||^2 with noise
    scale `sigma`.  Construct through :func:`zero_model`,
    :func:`example_nn`, or :func:`quadratic_oracle`.
    """

    kind: str
    sigma: float
    lam: float
    d: int
    data_x: np.ndarray | None = None
    data_y: np.ndarray | None = None
    data_p: np.ndarray | None = None
    loss: SquaredLoss | LogisticLoss | None = None
    activation: Activation | None = None
    kappa: float = 0.0
    c: float = 0.0
    e: np.ndarray | None = None
    clip_radius: float = 10.0
    rescaled: bool = False

    def __post_init__(self):
        if self.sigma <= 0 or self.lam <= 0:
            raise ValueError("sigma and lam must be positive")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.kind not in ("zero", "example_nn", "quadratic_oracle"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "example_nn":
            x = np.atleast_2d(np.asarray(self.data_x, dtype=float))
            y = np.atleast_1d(np.asarray(self.data_y, dtype=float))
            p = np.atleast_1d(np.asarray(self.data_p, dtype=float))
            if x.shape[1] != self.d:
                raise DimensionMismatchError("data covariates must have d columns")
            if y.shape[0] != x.shape[0] or p.shape[0] != x.shape[0]:
                raise ValueError("data arrays must share the leading length")
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
                raise ValueError("data must be finite")
            if np.any(p < 0) or abs(p.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise ValueError("data weights must be >= 0 and sum to 1 (1e-12)")
            if isinstance(self.loss, LogisticLoss) and not np.all(np.abs(y) == 1.0):
                raise ValueError("logistic labels must be +-1")
            if self.loss is None or self.activation is None:
                raise ValueError("example_nn needs loss and activation")
            object.__setattr__(self, "data_x", x)
            object.__setattr__(self, "data_y", y)
            object.__setattr__(self, "data_p", p)
        if self.kind == "quadratic_oracle":
            e = np.atleast_1d(np.asarray(self.e, dtype=float))
            if e.shape[0] != self.d:
                raise DimensionMismatchError("direction e must live in R^d")
            if abs(np.linalg.norm(e) - 1.0) > 1e-12:
                raise ValueError("direction e must be a unit vector")
            if self.kappa < 0:
                raise ValueError("kappa must be nonnegative")
            object.__setattr__(self, "e", e)


def zero_model(sigma: float, lam: float, d: int = 1) -> ModelSpec:
    """Pure confinement: F0 = 0."""
    return ModelSpec(kind="zero", sigma=sigma, lam=lam, d=d)


def example_nn(sigma: float, lam: float, data_x, data_y, weights=None,
               loss=None, activation=RELU) -> ModelSpec:
    """Prediction-loss interaction energy over a weighted dataset."""
    data_x = np.atleast_2d(np.asarray(data_x, dtype=float))
    data_y = np.atleast_1d(np.asarray(data_y, dtype=float))
    n = data_x.shape[0]
    if weights is None:
        weights = np.full(n, 1.0 / n)
    if loss is None:
        loss = SquaredLoss()
    return ModelSpec(
        kind="example_nn", sigma=sigma, lam=lam, d=data_x.shape[1],
        data_x=data_x, data_y=data_y, data_p=np.asarray(weights, dtype=float),
        loss=loss, activation=activation,
    )


def quadratic_oracle(sigma: float, lam: float, kappa: float, c: float = 0.0,
                     e=None, d: int = 1, clip_radius: float = 10.0) -> ModelSpec:
    """F0(nu) = (kappa/2) (<e, mean(nu)> - c)^2, exactly quadratic.

    The clip radius does not alter the functional; it only sets the
    interval on which the reported Lipschitz constant L_ell is taken.
    """
    if e is None:
        e = np.zeros(d)
        e[0] = 1.0
    return ModelSpec(
        kind="quadratic_oracle", sigma=sigma, lam=lam, d=d,
        kappa=kappa, c=c, e=np.asarray(e, dtype=float), clip_radius=clip_radius,
    )


def quadratic_as_example_nn(model: ModelSpec) -> ModelSpec:
    """The ExampleNN encoding of a quadratic oracle: identity features on
    the single covariate e with label c and squared loss."""
    if model.kind != "quadratic_oracle":
        raise ValueError("expects a quadratic_oracle model")
    nn = example_nn(
        sigma=model.sigma, lam=model.lam,
        data_x=model.e[None, :], data_y=[model.c], weights=[1.0],
        loss=SquaredLoss(scale=model.kappa, clip_radius=model.clip_radius),
        activation=IDENTITY,
    )
    return replace(nn, rescaled=model.rescaled)


# -- measure plumbing ------------------------------------------------------


def _measure_dim(nu: Measure) -> int:
    return nu.dim


def _check_dim(model: ModelSpec, nu: Measure):
    if _measure_dim(nu) != model.d:
        raise DimensionMismatchError(
            f"measure dimension {_measure_dim(nu)} != model dimension {model.d}"
        )


def features(model: ModelSpec, theta: np.ndarray) -> np.ndarray:
    """Feature values h(theta, z_j) for a batch of parameters.

    theta: (M, d) array; returns (M, n_data).
    """
    pre = np.asarray(theta, dtype=float) @ model.data_x.T
    return model.activation.value(pre)


def expect_features(model: ModelSpec, nu: Measure) -> np.ndarray:
    """E_nu h(., z_j) per datum, by the quadrature matched to the measure.

    Grid densities integrate with their trapezoid rule, particle clouds
    average exactly, Gaussians use 64-node Gauss-Hermite per axis.
    """
    _check_dim(model, nu)
    if isinstance(nu, GridDensity):
        h = features(model, nu.node_points())
        cw = (nu.quad_weights() * nu.weights).ravel()
        return h.T @ cw
    if isinstance(nu, EmpiricalMeasure):
        return features(model, nu.points).mean(axis=0)
    if isinstance(nu, GaussianMeasure):
        pts, w = _gauss_hermite_points(nu)
        return features(model, pts).T @ w
    raise TypeError(f"unsupported measure type {type(nu)!r}")


def _gauss_hermite_points(nu: GaussianMeasure):
    nodes, weights = np.polynomial.hermite.hermgauss(GH_NODES)
    if nu.dim == 1:
        pts = nu.mean[0] + math.sqrt(2.0 * nu.cov[0, 0]) * nodes
        return pts[:, None], weights / math.sqrt(math.pi)
    chol = np.linalg.cholesky(nu.cov)
    xi1, xi2 = np.meshgrid(nodes, nodes, indexing="ij")
    xi = np.column_stack([xi1.ravel(), xi2.ravel()])
    pts = nu.mean + math.sqrt(2.0) * xi @ chol.T
    w = np.outer(weights, weights).ravel() / math.pi
    return pts, w


def mean_of(nu: Measure) -> np.ndarray:
    if isinstance(nu, (GridDensity, EmpiricalMeasure)):
        return nu.mean()
    if isinstance(nu, GaussianMeasure):
        return nu.mean
    raise TypeError(f"unsupported measure type {type(nu)!r}")


def expect_function(nu: Measure, f) -> float:
    """E_nu f for a vectorized callable f((M, d)) -> (M,)."""
    if isinstance(nu, GridDensity):
        vals = np.asarray(f(nu.node_points()), dtype=float)
        return float(np.sum((nu.quad_weights() * nu.weights).ravel() * vals))
    if isinstance(nu, EmpiricalMeasure):
        return float(np.mean(f(nu.points)))
    if isinstance(nu, GaussianMeasure):
        pts, w = _gauss_hermite_points(nu)
        return float(np.asarray(f(pts), dtype=float) @ w)
    raise TypeError(f"unsupported measure type {type(nu)!r}")


# -- energy and variations -------------------------------------------------


def energy(model: ModelSpec, nu: Measure) -> float:
    """Interaction energy F0(nu)."""
    _check_dim(model, nu)
    if model.kind == "zero":
        return 0.0
    if model.kind == "quadratic_oracle":
        proj = float(model.e @ mean_of(nu))
        return 0.5 * model.kappa * (proj - model.c) ** 2
    eh = expect_features(model, nu)
    return float(model.data_p @ model.loss.value(eh, model.data_y))


def first_variation(model: ModelSpec, nu: Measure, x: np.ndarray):
    """First variation dF0(nu, x); x may be (d,) or a batch (M, d)."""
    _check_dim(model, nu)
    x = np.asarray(x, dtype=float)
    scalar_in = x.ndim == 1
    xb = x[None, :] if scalar_in else x
    if xb.shape[1] != model.d:
        raise DimensionMismatchError("x must have d coordinates")
    if model.kind == "zero":
        out = np.zeros(xb.shape[0])
    elif model.kind == "quadratic_oracle":
        proj = float(model.e @ mean_of(nu))
        out = model.kappa * (proj - model.c) * (xb @ model.e)
    else:
        eh = expect_features(model, nu)
        slope = model.data_p * model.loss.d1(eh, model.data_y)
        out = features(model, xb) @ slope
    return float(out[0]) if scalar_in else out


def wasserstein_gradient(model: ModelSpec, nu: Measure, x: np.ndarray) -> np.ndarray:
    """Gradient in x of the first variation; rows bounded by B = L_h L_ell."""
    _check_dim(model, nu)
    x = np.asarray(x, dtype=float)
    scalar_in = x.ndim == 1
    xb = x[None, :] if scalar_in else x
    if xb.shape[1] != model.d:
        raise DimensionMismatchError("x must have d coordinates")
    if model.kind == "zero":
        out = np.zeros_like(xb)
    elif model.kind == "quadratic_oracle":
        proj = float(model.e @ mean_of(nu))
        out = np.tile(model.kappa * (proj - model.c) * model.e, (xb.shape[0], 1))
    else:
        eh = expect_features(model, nu)
        slope = model.data_p * model.loss.d1(eh, model.data_y)
        act_prime = model.activation.deriv(xb @ model.data_x.T)
        out = (act_prime * slope) @ model.data_x
    return out[0] if scalar_in else out


def second_variation(model: ModelSpec, nu: Measure, x: np.ndarray,
                     y: np.ndarray) -> float:
    """Second variation d2F0(nu, x, y); symmetric in (x, y)."""
    _check_dim(model, nu)
    x = np.asarray(x, dtype=float).reshape(model.d)
    y = np.asarray(y, dtype=float).reshape(model.d)
    if model.kind == "zero":
        return 0.0
    if model.kind == "quadratic_oracle":
        return float(model.kappa * (x @ model.e) * (y @ model.e))
    eh = expect_features(model, nu)
    curv = model.data_p * model.loss.d2(eh, model.data_y)
    hx = features(model, x[None, :])[0]
    hy = features(model, y[None, :])[0]
    return float(np.sum(curv * hx * hy))


def model_constants(model: ModelSpec) -> BoundInputs:
    """Smoothness constants (sigma, lam, beta_hat, B, L_h, L_ell, beta_ell, d).

    For feature models L_h = max_j ||X_j|| (the activations are
    1-Lipschitz) and beta_hat = L_h^2 beta_ell, B = L_h L_ell.
    """
    if model.kind == "zero":
        return BoundInputs(sigma=model.sigma, lam=model.lam, beta_hat=0.0,
                           B=0.0, d=model.d, rescaled=model.rescaled)
    if model.kind == "quadratic_oracle":
        loss = SquaredLoss(scale=model.kappa, clip_radius=model.clip_radius) \
            if model.kappa > 0 else None
        beta_ell = model.kappa
        l_ell = model.kappa * model.clip_radius
        l_h = float(np.linalg.norm(model.e))
    else:
        loss = model.loss
        beta_ell = loss.beta_ell
        l_ell = loss.L_ell
        l_h = float(np.max(np.linalg.norm(model.data_x, axis=1)))
    return BoundInputs(
        sigma=model.sigma, lam=model.lam,
        beta_hat=l_h * l_h * beta_ell, B=l_h * l_ell,
        L_h=l_h, L_ell=l_ell, beta_ell=beta_ell,
        d=model.d, rescaled=model.rescaled,
    )


def rescale_model(model: ModelSpec) -> ModelSpec:
    """Pushforward of the model under x -> (sqrt(lam)/sigma) x.

    After rescaling the confinement satisfies 2 lam / sigma^2 = 2, which
    makes every Gaussian tilt with t > 0 normalizable.  Rescaling twice
    is refused.
    """
    if model.rescaled:
        raise AlreadyRescaledError("model is already rescaled")
    eta = math.sqrt(model.lam) / model.sigma
    s2 = model.sigma**2
    if model.kind == "zero":
        return replace(model, lam=s2, rescaled=True)
    if model.kind == "example_nn":
        return replace(model, lam=s2, data_x=model.data_x / eta, rescaled=True)
    return replace(
        model, lam=s2, kappa=model.kappa / eta**2, c=model.c * eta,
        clip_radius=model.clip_radius * eta, rescaled=True,
    )

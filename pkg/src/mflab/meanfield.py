"""Self-consistent solvers for mean-field fixed points on grids.

The object solved for is the system of per-particle densities

    pi^i propto exp(tilt_i - (2/sigma^2) [V + dF0(pibar, .)]),

closed through their mixture pibar = (1/N) sum_i pi^i.  Untilted and
homogeneous, all pi^i coincide and the system reduces to the scalar
mean-field fixed point; with Gaussian tilts (t, y^i) each particle sees
its own quadratic reweighting.  The iteration is a damped fixed point on
pibar: pibar <- (1 - theta) pibar + theta Mean(Rebuild(pibar)), with the
damping halved whenever the residual increases.  Uniqueness holds in the
regimes exercised here but no algorithm is prescribed for it, so
nonconvergence is detected and reported rather than assumed away.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidTargetError, NonconvergenceError
from .measure import Axis, GridDensity, normalize_from_log_potential
from .model import ModelSpec, first_variation
from .sampler import TiltSpec

DEFAULT_DAMPING = 0.5
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 400


@dataclass
class ProximalGibbsSystem:
    """A converged family of per-particle densities with their mixture."""

    per_particle: list[GridDensity]
    mean_measure: GridDensity
    residual: float
    iterations: int
    alpha: float
    tilt: TiltSpec | None = None
    residual_trace: list[float] | None = None

    @property
    def n_particles(self) -> int:
        return len(self.per_particle)

    def to_dir(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        for i, p in enumerate(self.per_particle):
            p.to_csv(os.path.join(out_dir, f"particle_{i:03d}.csv"))
        self.mean_measure.to_csv(
            os.path.join(out_dir, "mean_measure.csv"),
            os.path.join(out_dir, "grid.json"),
        )
        manifest = {
            "n_particles": self.n_particles,
            "residual": self.residual,
            "iterations": self.iterations,
            "alpha": self.alpha,
            "residual_trace": self.residual_trace,
            "tilt": None if self.tilt is None else {
                "t": self.tilt.t,
                "y": self.tilt.y.tolist(),
            },
        }
        with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def target_alpha(model: ModelSpec, tilt: TiltSpec | None) -> float:
    """Effective per-particle strong convexity, 2 lam/sigma^2 (- 1 + 1/t)."""
    base = 2.0 * model.lam / model.sigma**2
    if tilt is None:
        return base
    return base - 1.0 + 1.0 / tilt.t


def default_axes(model: ModelSpec, tilt: TiltSpec | None = None,
                 n_nodes: int | None = None, span_sd: float = 10.0,
                 ) -> tuple[Axis, ...]:
    """Grid extents from the zero-interaction Gaussian proxy.

    Proxy variance 1/alpha; with tilts the proxy means y^i/(t alpha_t)
    must all be covered.  Coverage is re-validated after the solve.
    """
    alpha = target_alpha(model, tilt)
    if alpha <= 0:
        raise InvalidTargetError(f"alpha = {alpha:.4g} <= 0: tilt not normalizable")
    sd = 1.0 / math.sqrt(alpha)
    if tilt is None:
        centers = np.zeros((1, model.d))
    else:
        centers = tilt.y / (tilt.t * alpha)
    if n_nodes is None:
        n_nodes = 2048 if model.d == 1 else 256
    axes = []
    for j in range(model.d):
        lo = float(centers[:, j].min() - span_sd * sd)
        hi = float(centers[:, j].max() + span_sd * sd)
        axes.append(Axis(lo, hi, n_nodes))
    return tuple(axes)


def _log_confinement(model: ModelSpec, pts: np.ndarray) -> np.ndarray:
    sq = np.sum(pts * pts, axis=1)
    return -(model.lam / model.sigma**2) * sq


def rebuild_particle_densities(model: ModelSpec, pibar: GridDensity,
                               tilt: TiltSpec | None,
                               n_particles: int) -> list[GridDensity]:
    """Per-particle densities induced by a fixed mixture pibar.

    Untilted the particles are exchangeable, so one density is computed
    and shared; heterogeneous tilts get one rebuild each from the same
    first-variation field.
    """
    pts = pibar.node_points()
    shape = pibar.weights.shape
    base = _log_confinement(model, pts)
    base = base - (2.0 / model.sigma**2) * np.asarray(
        first_variation(model, pibar, pts), dtype=float)
    if tilt is None:
        one = normalize_from_log_potential(base.reshape(shape), pibar.axes)
        return [one] * n_particles
    out = []
    sq = np.sum(pts * pts, axis=1)
    for i in range(n_particles):
        diff = pts - tilt.y[i]
        log_u = base - np.sum(diff * diff, axis=1) / (2.0 * tilt.t) + 0.5 * sq
        out.append(normalize_from_log_potential(log_u.reshape(shape), pibar.axes))
    return out


def _mean_density(parts: list[GridDensity]) -> GridDensity:
    w = np.mean(np.stack([p.weights for p in parts]), axis=0)
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    return GridDensity(parts[0].axes, w, logw)


def solve_self_consistent(model: ModelSpec, n_particles: int = 1,
                          tilt: TiltSpec | None = None, axes=None,
                          damping: float = DEFAULT_DAMPING,
                          tol: float = DEFAULT_TOL,
                          max_iter: int = DEFAULT_MAX_ITER,
                          ) -> ProximalGibbsSystem:
    """Damped fixed-point iteration for the self-consistent system.

    Iterates pibar <- (1 - theta) pibar + theta Mean(Rebuild(pibar)) until
    the fixed-point residual sup|Mean(Rebuild(pibar)) - pibar| drops below
    `tol`, halving theta whenever the residual increases.  Raises
    :class:`NonconvergenceError` with the residual trace on failure.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    if tilt is not None and tilt.y.shape != (n_particles, model.d):
        raise InvalidTargetError(
            f"tilt centers shape {tilt.y.shape} != ({n_particles}, {model.d})"
        )
    alpha = target_alpha(model, tilt)
    if alpha <= 0:
        raise InvalidTargetError(f"alpha = {alpha:.4g} <= 0: tilt not normalizable")
    if axes is None:
        axes = default_axes(model, tilt)
    elif isinstance(axes, Axis):
        axes = (axes,)
    else:
        axes = tuple(axes)

    # Zero-interaction solution as the starting mixture.
    start_parts = rebuild_particle_densities(
        zero_like(model), _uniform_seed(axes), tilt, n_particles)
    pibar = _mean_density(start_parts)

    theta = damping
    trace: list[float] = []
    for iteration in range(1, max_iter + 1):
        parts = rebuild_particle_densities(model, pibar, tilt, n_particles)
        target = _mean_density(parts)
        residual = float(np.max(np.abs(target.weights - pibar.weights)))
        if trace and residual > trace[-1]:
            theta = max(theta / 2.0, 1.0 / 64.0)
        trace.append(residual)
        if residual < tol:
            mean_measure = target
            final_parts = rebuild_particle_densities(
                model, mean_measure, tilt, n_particles)
            sys_residual = _system_residual(model, final_parts, tilt)
            if sys_residual < tol:
                return ProximalGibbsSystem(
                    per_particle=final_parts,
                    mean_measure=_mean_density(final_parts),
                    residual=sys_residual,
                    iterations=iteration,
                    alpha=alpha,
                    tilt=tilt,
                    residual_trace=trace,
                )
        w = (1.0 - theta) * pibar.weights + theta * target.weights
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        pibar = GridDensity(pibar.axes, w, logw)
    raise NonconvergenceError(trace)


def _system_residual(model: ModelSpec, parts: list[GridDensity],
                     tilt: TiltSpec | None) -> float:
    pibar = _mean_density(parts)
    rebuilt = rebuild_particle_densities(model, pibar, tilt, len(parts))
    return max(
        float(np.max(np.abs(a.weights - b.weights)))
        for a, b in zip(parts, rebuilt)
    )


def proximal_residual(system: ProximalGibbsSystem, model: ModelSpec,
                      tilt: TiltSpec | None = None) -> float:
    """Recompute each pi^i from the stored mixture; max sup-norm gap."""
    if tilt is None:
        tilt = system.tilt
    rebuilt = rebuild_particle_densities(
        model, system.mean_measure, tilt, system.n_particles)
    return max(
        float(np.max(np.abs(a.weights - b.weights)))
        for a, b in zip(system.per_particle, rebuilt)
    )


def zero_like(model: ModelSpec) -> ModelSpec:
    """The same confinement with the interaction switched off."""
    from .model import zero_model

    return zero_model(sigma=model.sigma, lam=model.lam, d=model.d)


def _uniform_seed(axes) -> GridDensity:
    axes = axes if isinstance(axes, tuple) else tuple(axes)
    shape = tuple(ax.n for ax in axes)
    return normalize_from_log_potential(np.zeros(shape), axes)

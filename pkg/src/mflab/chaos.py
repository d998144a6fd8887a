"""KL between the N-particle Gibbs measure and its mean-field product.

The estimator uses the exact identity

    KL(mu || pi_prod) = -(2N/sigma^2) E_mu[B] - log Z,
    Z = E_pi_prod[exp(-(2N/sigma^2) B)],

where B is the Bregman divergence of the interaction energy between the
empirical measure of the particles and the mixture pibar of the
self-consistent system.  E_mu[B] comes from MALA samples of the particle
Gibbs measure (batch-means confidence interval); Z comes from i.i.d.
product-measure draws via a log-sum-exp estimator (bootstrap confidence
interval).  The closed-form upper bounds the estimate is compared against
are evaluated exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .bounds import BoundInputs, lsi_pert_bound
from .errors import CalculatorDomainError
from .meanfield import ProximalGibbsSystem, solve_self_consistent, target_alpha
from .measure import GridDensity, Measure, sample_from_grid
from .model import (
    ModelSpec,
    energy,
    expect_features,
    expect_function,
    features,
    first_variation,
    mean_of,
    model_constants,
)
from .sampler import TargetSpec, TiltSpec, mala_sample, states_to_array

BREGMAN_FLOOR = -1e-10
Z_ESS_FLOOR = 100.0
Z_ESS_WIDEN_FACTOR = 3.0


def bregman_divergence(model: ModelSpec, nu: Measure, pibar: GridDensity) -> float:
    """B(nu, pibar) = F0(nu) - F0(pibar) - <dF0(pibar), nu - pibar>.

    Nonnegative whenever F0 is convex along mixtures.
    """
    f_nu = energy(model, nu)
    f_bar = energy(model, pibar)
    if model.kind == "zero":
        return 0.0
    pts = pibar.node_points()
    fv_on_grid = np.asarray(first_variation(model, pibar, pts), dtype=float)
    e_bar = float(np.sum(
        (pibar.quad_weights() * pibar.weights).ravel() * fv_on_grid))
    if model.kind == "quadratic_oracle":
        e_nu = expect_function(
            nu, lambda p: model.kappa
            * (float(model.e @ mean_of(pibar)) - model.c) * (p @ model.e))
    else:
        eh_bar = expect_features(model, pibar)
        slope = model.data_p * model.loss.d1(eh_bar, model.data_y)
        e_nu = expect_function(nu, lambda p: features(model, p) @ slope)
    return f_nu - f_bar - (e_nu - e_bar)


def bregman_batch(model: ModelSpec, x: np.ndarray, pibar: GridDensity) -> np.ndarray:
    """Bregman divergence of each empirical measure in a batch of states.

    x has shape (S, N, d); returns (S,).  Vectorizes the same algebra as
    :func:`bregman_divergence` for the supported interaction kinds.
    """
    x = np.asarray(x, dtype=float)
    if model.kind == "zero":
        return np.zeros(x.shape[0])
    if model.kind == "quadratic_oracle":
        m_bar = float(model.e @ mean_of(pibar))
        m_nu = (x @ model.e).mean(axis=1)
        return 0.5 * model.kappa * (m_nu - m_bar) ** 2
    eh_bar = expect_features(model, pibar)
    slope = model.data_p * model.loss.d1(eh_bar, model.data_y)
    h = model.activation.value(x @ model.data_x.T)
    eh_nu = h.mean(axis=1)
    f_nu = model.loss.value(eh_nu, model.data_y) @ model.data_p
    f_bar = float(model.data_p @ model.loss.value(eh_bar, model.data_y))
    linear = (eh_nu - eh_bar) @ slope
    return f_nu - f_bar - linear


def poc_bound(inputs: BoundInputs, cbar_pi: float, alpha: float,
              variant: str = "generic") -> float:
    """Closed-form chaos bound on KL(mu^{1:N} || pi^{1:N}).

    variant="generic":    (4 beta_hat/sigma^2) min{cbar_pi d, 2d/alpha + 4B^2/(alpha^2 sigma^4)}
    variant="example_nn": (beta_hat/sigma^2)  min{cbar_pi,  2/alpha + 8B^2/(alpha^2 sigma^4)}
    """
    if alpha <= 0:
        raise CalculatorDomainError("alpha must be positive")
    if cbar_pi <= 0:
        raise CalculatorDomainError("cbar_pi must be positive")
    s2 = inputs.sigma**2
    s4 = s2 * s2
    bh = inputs.beta_hat
    b2 = inputs.B**2
    if variant == "generic":
        d = inputs.d
        return (4.0 * bh / s2) * min(
            cbar_pi * d, 2.0 * d / alpha + 4.0 * b2 / (alpha * alpha * s4))
    if variant == "example_nn":
        return (bh / s2) * min(
            cbar_pi, 2.0 / alpha + 8.0 * b2 / (alpha * alpha * s4))
    raise ValueError(f"unknown variant {variant!r}")


def poincare_constant_bound(model: ModelSpec, alpha: float) -> float:
    """Analytic Poincare upper bound for the per-particle densities.

    The interaction enters each pi^i as a (2B/sigma^2)-Lipschitz
    log-perturbation of an alpha-strongly log-concave base, so the
    Lipschitz-perturbation LSI bound applies; the chaos bound consumes an
    upper bound on the constant, so the analytic value is used, not an
    empirical estimate.
    """
    consts = model_constants(model)
    return lsi_pert_bound(alpha, 2.0 * consts.B / model.sigma**2)


@dataclass(frozen=True)
class McmcConfig:
    """Sampling effort knobs for one KL estimate."""

    n_samples: int = 16384
    n_burnin: int = 2048
    step_size0: float = 0.3
    n_pi_samples: int = 32768
    n_bootstrap: int = 256
    n_batches: int = 32


@dataclass
class ChaosReport:
    """Everything measured for one (model, N) chaos run."""

    n_particles: int
    kl_estimate: float
    kl_halfwidth: float
    bregman_mean_under_mu: float
    bregman_mu_halfwidth: float
    bregman_mean_under_pi: float
    bregman_pi_halfwidth: float
    log_z: float
    log_z_halfwidth: float
    bound_poc: float
    bound_poc_ii: float
    alpha: float
    cbar_pi: float
    scale: float
    z_importance_ess: float
    variance_step_rhs: float | None
    seed: int
    mala_acceptance: float
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def min_bregman(self) -> float:
        return self.flags.get("_min_bregman", 0.0)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "flags"}
        out["flags"] = {k: v for k, v in self.flags.items()
                        if not k.startswith("_")}
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")


def _batch_means_halfwidth(values: np.ndarray, n_batches: int) -> float:
    """95%-style half-width (2 se) for a correlated chain via batch means."""
    n = values.size
    n_batches = max(2, min(n_batches, n // 2))
    usable = (n // n_batches) * n_batches
    batches = values[:usable].reshape(n_batches, -1).mean(axis=1)
    se = float(batches.std(ddof=1)) / math.sqrt(n_batches)
    return 2.0 * se


def _variance_step_rhs(model: ModelSpec, system: ProximalGibbsSystem) -> float | None:
    """Quadrature value of sum_j p_j (beta_ell / 2N^2) sum_i var_{pi^i}(h_j)."""
    if model.kind == "zero":
        return 0.0
    if model.kind == "quadratic_oracle":
        beta_ell = model.kappa
        h_of = lambda pts: (pts @ model.e)[:, None]
        p_weights = np.array([1.0])
    else:
        beta_ell = model.loss.beta_ell
        h_of = lambda pts: features(model, pts)
        p_weights = model.data_p
    n = system.n_particles
    var_sum = np.zeros(p_weights.size)
    for p_i in system.per_particle:
        h_vals = h_of(p_i.node_points())
        cw = (p_i.quad_weights() * p_i.weights).ravel()
        mean_h = h_vals.T @ cw
        second = (h_vals * h_vals).T @ cw
        var_sum += second - mean_h**2
    return float(p_weights @ var_sum) * beta_ell / (2.0 * n * n)


def estimate_kl(model: ModelSpec, n_particles: int,
                mcmc: McmcConfig | None = None, seed: int = 0,
                tilt: TiltSpec | None = None, rescaled: bool = False,
                system: ProximalGibbsSystem | None = None,
                axes=None) -> ChaosReport:
    """Monte-Carlo estimate of KL(mu^{1:N} || pi^{1:N}) with closed-form bounds.

    Chains and i.i.d. draws use separate Philox streams of the same master
    seed, so the whole report is deterministic given (model, N, mcmc, seed).
    """
    mcmc = mcmc or McmcConfig()
    target = TargetSpec(model, n_particles, tilt=tilt, rescaled=rescaled)
    eff = target.effective_model
    if system is None:
        system = solve_self_consistent(eff, n_particles=n_particles,
                                       tilt=tilt, axes=axes)
    pibar = system.mean_measure
    scale = 2.0 * n_particles / eff.sigma**2

    states, diag = mala_sample(target, mcmc.n_samples, mcmc.n_burnin,
                               mcmc.step_size0, seed, chain_id=0)
    x_mu = states_to_array(states)
    b_mu = bregman_batch(eff, x_mu, pibar)
    mean_b_mu = float(b_mu.mean())
    hw_b_mu = _batch_means_halfwidth(b_mu, mcmc.n_batches)

    rng_pi = np.random.Generator(np.random.Philox(
        key=np.array([np.uint64(seed), np.uint64(1)])))
    cols = []
    for p_i in system.per_particle:
        cols.append(sample_from_grid(p_i, mcmc.n_pi_samples, rng_pi))
    x_pi = np.stack(cols, axis=1)  # (S, N, d=1)
    b_pi = bregman_batch(eff, x_pi, pibar)
    mean_b_pi = float(b_pi.mean())
    hw_b_pi = 2.0 * float(b_pi.std(ddof=1)) / math.sqrt(b_pi.size)

    log_w = -scale * b_pi
    log_z = float(logsumexp(log_w) - math.log(b_pi.size))
    w_shift = np.exp(log_w - log_w.max())
    z_ess = float(w_shift.sum() ** 2 / (w_shift @ w_shift))

    rng_boot = np.random.Generator(np.random.Philox(
        key=np.array([np.uint64(seed), np.uint64(2)])))
    boot = np.empty(mcmc.n_bootstrap)
    for b in range(mcmc.n_bootstrap):
        idx = rng_boot.integers(0, b_pi.size, b_pi.size)
        boot[b] = logsumexp(log_w[idx]) - math.log(b_pi.size)
    hw_log_z = 2.0 * float(boot.std(ddof=1))
    z_ess_ok = z_ess >= Z_ESS_FLOOR
    if not z_ess_ok:
        hw_log_z *= Z_ESS_WIDEN_FACTOR

    kl = -scale * mean_b_mu - log_z
    hw_kl = math.hypot(scale * hw_b_mu, hw_log_z)

    alpha = target_alpha(eff, tilt)
    cbar_pi = poincare_constant_bound(eff, alpha)
    consts = replace(model_constants(eff), N=n_particles)
    bound_generic = poc_bound(consts, cbar_pi, alpha, "generic")
    bound_nn = poc_bound(consts, cbar_pi, alpha, "example_nn")
    var_rhs = _variance_step_rhs(eff, system)

    chain_rhs = scale * mean_b_pi
    chain_slack = scale * hw_b_pi
    min_breg = float(min(b_mu.min(), b_pi.min()))
    flags = {
        "bregman_nonnegative": min_breg >= BREGMAN_FLOOR,
        "jensen_log_z": -log_z <= chain_rhs + chain_slack + hw_log_z,
        "proof_chain": kl <= chain_rhs + chain_slack + hw_kl,
        "kl_below_poc": kl <= bound_generic + 2.0 * hw_kl,
        "kl_below_poc_ii": kl <= bound_nn + 2.0 * hw_kl,
        "kl_nonnegative": kl >= -hw_kl,
        "z_ess_ok": z_ess_ok,
        "variance_step": (var_rhs is None
                          or mean_b_pi <= var_rhs + hw_b_pi),
        "_min_bregman": min_breg,
    }
    return ChaosReport(
        n_particles=n_particles,
        kl_estimate=kl, kl_halfwidth=hw_kl,
        bregman_mean_under_mu=mean_b_mu, bregman_mu_halfwidth=hw_b_mu,
        bregman_mean_under_pi=mean_b_pi, bregman_pi_halfwidth=hw_b_pi,
        log_z=log_z, log_z_halfwidth=hw_log_z,
        bound_poc=bound_generic, bound_poc_ii=bound_nn,
        alpha=alpha, cbar_pi=cbar_pi, scale=scale,
        z_importance_ess=z_ess, variance_step_rhs=var_rhs,
        seed=seed, mala_acceptance=diag.acceptance_rate,
        flags=flags,
    )


def chaos_sweep(model: ModelSpec, n_list, mcmc: McmcConfig | None = None,
                seed: int = 0, rescaled: bool = False) -> list[ChaosReport]:
    """One KL report per particle count, all from the same master seed."""
    return [
        estimate_kl(model, n, mcmc=mcmc, seed=seed + i, rescaled=rescaled)
        for i, n in enumerate(n_list)
    ]


def no_growth_in_n(reports: list[ChaosReport]) -> bool:
    """True when the estimates show no CI-significant growth along the sweep."""
    ordered = sorted(reports, key=lambda r: r.n_particles)
    for prev, cur in zip(ordered, ordered[1:]):
        slack = 2.0 * (prev.kl_halfwidth + cur.kl_halfwidth)
        if cur.kl_estimate > prev.kl_estimate + slack:
            return False
    return True


def sweep_to_csv(reports: list[ChaosReport], path, model_name: str):
    """One CSV row per (model, N, seed) with estimates, CIs, and bounds."""
    cols = {
        "n_particles": [r.n_particles for r in reports],
        "seed": [r.seed for r in reports],
        "kl_estimate": [r.kl_estimate for r in reports],
        "kl_halfwidth": [r.kl_halfwidth for r in reports],
        "bound_poc": [r.bound_poc for r in reports],
        "bound_poc_ii": [r.bound_poc_ii for r in reports],
        "log_z": [r.log_z for r in reports],
        "bregman_mean_under_mu": [r.bregman_mean_under_mu for r in reports],
        "bregman_mean_under_pi": [r.bregman_mean_under_pi for r in reports],
        "mala_acceptance": [r.mala_acceptance for r in reports],
    }
    header = "model," + ",".join(cols)
    rows = np.column_stack([np.asarray(v, dtype=float) for v in cols.values()])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(model_name + "," + ",".join(repr(float(v)) for v in row)
                     + "\n")

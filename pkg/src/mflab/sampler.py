"""MCMC for N-particle Gibbs measures and the time-discretized dynamics.

The stationary targets are sampled with MALA so that the Metropolis
correction removes all discretization bias; the only place an unadjusted
Euler-Maruyama scheme appears is :func:`mfld_simulate`, where the
discretized dynamics is itself the object of study.

Randomness comes from counter-based Philox streams keyed by
(master seed, chain id), so parallel chains reproduce independently of
scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidTargetError, SimulationDivergedError
from .model import ModelSpec, rescale_model
from .measure import _write_csv

MALA_TARGET_ACCEPTANCE = 0.574
ACCEPTANCE_OK_RANGE = (0.2, 0.8)
DIVERGENCE_GUARD = 1e6


@dataclass(frozen=True)
class TiltSpec:
    """Gaussian tilt parameters (t, y^{1:N}) for the per-particle quadratic
    reweighting exp(-||x - y^i||^2 / 2t + ||x^i||^2 / 2)."""

    t: float
    y: np.ndarray

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("tilt time t must be positive")
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if not np.all(np.isfinite(y)):
            raise ValueError("tilt centers must be finite")
        object.__setattr__(self, "y", y)


@dataclass
class ParticleState:
    """Positions of N particles in R^d plus bookkeeping."""

    x: np.ndarray
    step_count: int = 0
    rng_stream_id: int = 0

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if not np.all(np.isfinite(x)):
            raise ValueError("particle coordinates must be finite")
        self.x = x

    @property
    def n_particles(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class TargetSpec:
    """The Gibbs measure a chain targets.

    Untilted, the density is proportional to
    exp(-(2/sigma^2) [sum_i V(x^i) + N F0(rho_x)]); with a tilt the
    per-particle quadratic reweighting is added on top.  The `rescaled`
    flag applies the coordinate map x -> (sqrt(lam)/sigma) x to the model
    first, which is required for tilts to be integrable in general.
    """

    model: ModelSpec
    n_particles: int
    tilt: TiltSpec | None = None
    rescaled: bool = False

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("need at least one particle")
        eff = rescale_model(self.model) if self.rescaled else self.model
        object.__setattr__(self, "_effective_model", eff)
        if self.tilt is not None:
            y = self.tilt.y
            if y.shape != (self.n_particles, eff.d):
                raise InvalidTargetError(
                    f"tilt centers shape {y.shape} != (N, d) = "
                    f"({self.n_particles}, {eff.d})"
                )
            if self.alpha() <= 0:
                raise InvalidTargetError(
                    f"tilted target is not normalizable: alpha_t = {self.alpha():.4g} <= 0"
                )

    @property
    def effective_model(self) -> ModelSpec:
        return self._effective_model

    def alpha(self) -> float:
        """Strong convexity of the per-particle confinement:
        2 lam / sigma^2 untilted, 2 lam / sigma^2 - 1 + 1/t with a tilt."""
        m = self.effective_model
        base = 2.0 * m.lam / m.sigma**2
        if self.tilt is None:
            return base
        return base - 1.0 + 1.0 / self.tilt.t


def _batch(x: np.ndarray, n: int, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    xb = x[None] if single else x
    if xb.shape[-2:] != (n, d):
        raise InvalidTargetError(
            f"state shape {x.shape} incompatible with (N, d) = ({n}, {d})"
        )
    return xb, single


def _interaction_energy(model: ModelSpec, xb: np.ndarray) -> np.ndarray:
    """F0(rho_x) for a batch of states xb of shape (S, N, d)."""
    if model.kind == "zero":
        return np.zeros(xb.shape[0])
    if model.kind == "quadratic_oracle":
        proj = xb @ model.e
        m = proj.mean(axis=1)
        return 0.5 * model.kappa * (m - model.c) ** 2
    h = model.activation.value(xb @ model.data_x.T)
    eh = h.mean(axis=1)
    return model.loss.value(eh, model.data_y) @ model.data_p


def _interaction_gradient(model: ModelSpec, xb: np.ndarray) -> np.ndarray:
    """Rows grad_{x^i} [N F0(rho_x)] = Wasserstein gradient at x^i."""
    if model.kind == "zero":
        return np.zeros_like(xb)
    if model.kind == "quadratic_oracle":
        proj = xb @ model.e
        m = proj.mean(axis=1)
        coef = model.kappa * (m - model.c)
        return coef[:, None, None] * model.e[None, None, :]
    pre = xb @ model.data_x.T
    eh = model.activation.value(pre).mean(axis=1)
    slope = model.loss.d1(eh, model.data_y) * model.data_p
    return np.einsum("snj,sj,jk->snk", model.activation.deriv(pre), slope,
                     model.data_x)


def n_particle_log_density(target: TargetSpec, x: np.ndarray):
    """Unnormalized log density of the target at one state or a batch."""
    m = target.effective_model
    xb, single = _batch(x, target.n_particles, m.d)
    sq = np.sum(xb * xb, axis=(1, 2))
    out = -(m.lam / m.sigma**2) * sq
    out -= (2.0 * target.n_particles / m.sigma**2) * _interaction_energy(m, xb)
    if target.tilt is not None:
        diff = xb - target.tilt.y[None]
        out -= np.sum(diff * diff, axis=(1, 2)) / (2.0 * target.tilt.t)
        out += 0.5 * sq
    return float(out[0]) if single else out


def n_particle_log_density_grad(target: TargetSpec, state) -> np.ndarray:
    """Gradient of the unnormalized log density, one (N, d) row per particle."""
    x = state.x if isinstance(state, ParticleState) else state
    m = target.effective_model
    xb, single = _batch(x, target.n_particles, m.d)
    grad = -(2.0 / m.sigma**2) * (m.lam * xb + _interaction_gradient(m, xb))
    if target.tilt is not None:
        grad += -(xb - target.tilt.y[None]) / target.tilt.t + xb
    return grad[0] if single else grad


def interaction_gradient(target: TargetSpec, x: np.ndarray) -> np.ndarray:
    """The -(2/sigma^2) * Wasserstein-gradient rows alone (bound <= 2B/sigma^2)."""
    m = target.effective_model
    xb, single = _batch(x, target.n_particles, m.d)
    rows = -(2.0 / m.sigma**2) * _interaction_gradient(m, xb)
    return rows[0] if single else rows


# -- diagnostics ------------------------------------------------------------


def effective_sample_size(series: np.ndarray) -> float:
    """ESS from the autocorrelation function, truncated by Geyer's initial
    positive sequence rule."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)
    nfft = int(2 ** math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    tau = 1.0
    k = 1
    while k + 1 < n:
        pair = rho[k] + rho[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        k += 2
    return float(n / tau)


@dataclass
class MalaDiagnostics:
    acceptance_rate: float
    step_size: float
    ess: dict[str, float]
    n_samples: int
    n_burnin: int
    seed: int
    chain_id: int
    acceptance_ok: bool
    warnings: list[str] = field(default_factory=list)

    def to_json(self, path):
        payload = {
            "acceptance_rate": self.acceptance_rate,
            "step_size": self.step_size,
            "ess": self.ess,
            "n_samples": self.n_samples,
            "n_burnin": self.n_burnin,
            "seed": self.seed,
            "chain_id": self.chain_id,
            "acceptance_ok": self.acceptance_ok,
            "warnings": self.warnings,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _stream(seed: int, chain_id: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(chain_id & 0xFFFFFFFFFFFFFFFF)])
    return np.random.Generator(np.random.Philox(key=key))


def mala_sample(target: TargetSpec, n_samples: int, n_burnin: int,
                step_size: float, seed: int, chain_id: int = 0,
                ) -> tuple[list[ParticleState], MalaDiagnostics]:
    """Metropolis-adjusted Langevin chain targeting the exact density.

    The proposal is x' = x + tau * grad log p(x) + sqrt(2 tau) xi.  During
    burn-in, tau adapts on a log scale toward 57.4% acceptance by
    stochastic approximation and then freezes, so the returned samples
    come from a fixed Markov kernel.  Deterministic given (seed, chain_id).
    """
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    if n_samples < 1:
        raise ValueError("need at least one sample")
    rng = _stream(seed, chain_id)
    n, d = target.n_particles, target.effective_model.d
    m = target.effective_model

    sd0 = m.sigma / math.sqrt(2.0 * m.lam)
    x = sd0 * rng.standard_normal((n, d))
    if target.tilt is not None:
        a = target.alpha()
        x = target.tilt.y / (target.tilt.t * a) + rng.standard_normal((n, d)) / math.sqrt(a)

    log_tau = math.log(step_size)
    logp = n_particle_log_density(target, x)
    grad = n_particle_log_density_grad(target, x)

    total = n_burnin + n_samples
    out = np.empty((n_samples, n, d))
    accepted_main = 0
    for step in range(total):
        tau = math.exp(log_tau)
        noise = rng.standard_normal((n, d))
        prop = x + tau * grad + math.sqrt(2.0 * tau) * noise
        logp_prop = n_particle_log_density(target, prop)
        grad_prop = n_particle_log_density_grad(target, prop)
        fwd = prop - x - tau * grad
        bwd = x - prop - tau * grad_prop
        log_accept = (logp_prop - logp
                      + (np.sum(fwd * fwd) - np.sum(bwd * bwd)) / (4.0 * tau))
        accept = math.log(rng.random()) < log_accept
        if accept:
            x, logp, grad = prop, logp_prop, grad_prop
        if step < n_burnin:
            gain = (step + 1) ** -0.6
            log_tau += gain * ((1.0 if accept else 0.0) - MALA_TARGET_ACCEPTANCE)
        else:
            idx = step - n_burnin
            out[idx] = x
            accepted_main += int(accept)

    acc_rate = accepted_main / n_samples
    ess = {
        "mean_coordinate": effective_sample_size(out.mean(axis=(1, 2))),
        "mean_square": effective_sample_size((out * out).mean(axis=(1, 2))),
    }
    ok = ACCEPTANCE_OK_RANGE[0] <= acc_rate <= ACCEPTANCE_OK_RANGE[1]
    warnings = [] if ok else [
        f"acceptance rate {acc_rate:.3f} outside {ACCEPTANCE_OK_RANGE}"
    ]
    diag = MalaDiagnostics(
        acceptance_rate=acc_rate, step_size=math.exp(log_tau), ess=ess,
        n_samples=n_samples, n_burnin=n_burnin, seed=seed, chain_id=chain_id,
        acceptance_ok=ok, warnings=warnings,
    )
    states = [ParticleState(out[i], step_count=n_burnin + i + 1,
                            rng_stream_id=chain_id)
              for i in range(n_samples)]
    return states, diag


def states_to_array(states: list[ParticleState]) -> np.ndarray:
    """Stack a list of particle states into an (S, N, d) array."""
    return np.stack([s.x for s in states])


def mfld_simulate(model: ModelSpec, n_particles: int, horizon: float,
                  step: float, seed: int, x0: np.ndarray | None = None,
                  chain_id: int = 0) -> list[ParticleState]:
    """Euler-Maruyama discretization of the interacting-particle dynamics.

    Each particle moves by -(lam x^i + wgrad(rho_x, x^i)) h + sigma sqrt(h) xi.
    Aborts with a diagnostic if any coordinate passes 1e6.
    """
    if step <= 0 or horizon <= 0:
        raise ValueError("horizon and step must be positive")
    rng = _stream(seed, chain_id)
    n_steps = int(round(horizon / step))
    if x0 is None:
        x = np.zeros((n_particles, model.d))
    else:
        x = np.array(x0, dtype=float).reshape(n_particles, model.d)
    traj = [ParticleState(x.copy(), step_count=0, rng_stream_id=chain_id)]
    noise_scale = model.sigma * math.sqrt(step)
    for k in range(n_steps):
        drift = model.lam * x + _interaction_gradient(model, x[None])[0]
        x = x - step * drift + noise_scale * rng.standard_normal(x.shape)
        worst = float(np.max(np.abs(x)))
        if worst > DIVERGENCE_GUARD:
            raise SimulationDivergedError(k + 1, worst)
        traj.append(ParticleState(x.copy(), step_count=k + 1,
                                  rng_stream_id=chain_id))
    return traj


def trajectory_to_csv(states: list[ParticleState], path, chain_id: int = 0):
    """CSV rows (chain, step, particle, x_1[, x_2]) for states or samples."""
    d = states[0].d
    rows_chain, rows_step, rows_particle = [], [], []
    coord_cols = [[] for _ in range(d)]
    for s in states:
        for i in range(s.n_particles):
            rows_chain.append(chain_id)
            rows_step.append(s.step_count)
            rows_particle.append(i)
            for j in range(d):
                coord_cols[j].append(s.x[i, j])
    header = "chain,step,particle," + ",".join(f"x{j + 1}" for j in range(d))
    _write_csv(path, header,
               [np.asarray(rows_chain, dtype=float),
                np.asarray(rows_step, dtype=float),
                np.asarray(rows_particle, dtype=float)]
               + [np.asarray(c) for c in coord_cols])

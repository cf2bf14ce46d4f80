"""Quadratic Lyapunov pair, drift-condition checks, moment estimation and the explicit bound.

With ``V(x) = sqrt(theta) + eps |x|^2`` and the constant ``vbar = -2 eps b1 - eps theta``
the scheme satisfies

    sup_t E[exp(V(Y_t) e^{-rho t} + int_0^t 1_D(Y_floor(s)) vbar e^{-rho s} ds)] < inf

with ``rho = 2 (b2 + eps theta)``. :func:`mc_estimate` estimates the left-hand side in
log space; :func:`moment_bound_log` evaluates the explicit (astronomically large)
constant without leaving nested-log space.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .models import GalerkinSystem, ModelSpec
from .scheme import InitialGaussian, Trajectory, integral_weights, simulate_paths
from .spectral import DomainError, GalerkinState, ModeSet, project
from .timegrid import Partition

CHUNK = 250


@dataclass(frozen=True)
class LyapunovSpec:
    epsilon: float
    theta: float
    b1: float = 0.0
    b2: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0 or self.theta < 0 or self.b1 < 0 or self.b2 < 0:
            raise DomainError("need epsilon > 0 and theta, b1, b2 >= 0")

    @classmethod
    def from_model(cls, model: ModelSpec) -> "LyapunovSpec":
        return cls(model.epsilon, model.theta, model.b1, model.b2)

    @property
    def rho(self) -> float:
        return 2.0 * (self.b2 + self.epsilon * self.theta)

    @property
    def vbar(self) -> float:
        return -2.0 * self.epsilon * self.b1 - self.epsilon * self.theta

    def V_sq(self, sqnorm):
        return math.sqrt(self.theta) + self.epsilon * np.asarray(sqnorm)


def V(spec: LyapunovSpec, x: GalerkinState) -> float:
    return float(spec.V_sq(np.dot(x.coeffs, x.coeffs)))


def Vbar(spec: LyapunovSpec, x: GalerkinState | None = None) -> float:
    return spec.vbar


def generator_V(model, spec, x: GalerkinState, I: ModeSet, J: ModeSet | None = None) -> float:
    """``2 eps <x, P_I F(x)> + eps |P_I B(x) P_J|_HS^2``."""
    system = GalerkinSystem(model, I, J if J is not None else model.Q.modes)
    c = project(x, I).coeffs
    hs = system.hs_norm(c)
    return float(2 * spec.epsilon * np.dot(c, system.drift(c)) + spec.epsilon * hs * hs)


def drift_condition_terms(model, spec, x, I, J=None):
    """Each term of ``G V + 1/2 |B* grad V|^2 + vbar - rho V`` as a dict."""
    system = GalerkinSystem(model, I, J if J is not None else model.Q.modes)
    c = project(x, I).coeffs
    eps = spec.epsilon
    Bm = system.b_matrix(c)
    adj = Bm.T @ c
    terms = {
        "drift": 2 * eps * float(np.dot(c, system.drift(c))),
        "trace": eps * float(np.sum(Bm * Bm)),
        "gradient": 2 * eps * eps * float(np.dot(adj, adj)),
        "vbar": spec.vbar,
        "rhoV": -spec.rho * float(spec.V_sq(np.dot(c, c))),
    }
    terms["residual"] = math.fsum(terms.values())
    return terms


def drift_condition_residual(model, spec, x: GalerkinState, I: ModeSet, J: ModeSet | None = None) -> float:
    """``G V(x) + 1/2 |(P_I B P_J)^* grad V(x)|^2 + vbar - rho V(x)``; non-positive when the
    condition holds. Membership of ``x`` in the taming set is not required here."""
    return drift_condition_terms(model, spec, x, I, J)["residual"]


def exponent_functional(spec: LyapunovSpec, traj: Trajectory, theta: Partition | None = None):
    """Exponent ``V(Y_t) e^{-rho t} + int_0^t 1_D vbar e^{-rho s} ds`` at every node.

    Recomputed from the indicator history (not the trajectory's own accumulator);
    returns shape ``(paths, nodes)``.
    """
    times = traj.times if theta is None else theta.array
    rho = spec.rho
    w = spec.vbar * integral_weights(times, rho)
    inc = np.where(traj.inside[:, :-1], w, 0.0)
    acc = np.concatenate([np.zeros((inc.shape[0], 1)), np.cumsum(inc, axis=1)], axis=1)
    return spec.V_sq(traj.sqnorm) * np.exp(-rho * times) + acc


def quadratic_functional(spec: LyapunovSpec, traj: Trajectory):
    """``eps |Y_t|^2 / e^{rho t}``, the ``|Y|^2``-only exponent."""
    return spec.epsilon * traj.sqnorm * np.exp(-spec.rho * traj.times)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class MomentEstimate:
    """Log-domain Monte Carlo estimate of ``E[exp(functional)]`` at each node."""

    times: np.ndarray
    log_mean: np.ndarray
    ci_halfwidth: np.ndarray
    batch_log_means: np.ndarray = field(repr=False)
    paths: int
    batches: int
    seed: int
    inside_fraction: float = 1.0
    bound_loglog: float | None = None

    @property
    def sup_index(self) -> int:
        return int(np.argmax(self.log_mean))

    @property
    def sup_node_log_mean(self) -> float:
        return float(self.log_mean[self.sup_index])

    @property
    def sup_node_ci(self) -> float:
        return float(self.ci_halfwidth[self.sup_index])

    def to_json(self):
        return {
            "sup_node_log_mean": self.sup_node_log_mean,
            "sup_node_t": float(self.times[self.sup_index]),
            "sup_node_ci_halfwidth": self.sup_node_ci,
            "per_node": [
                {"t": float(t), "log_mean": float(m), "ci_halfwidth": float(h)}
                for t, m, h in zip(self.times, self.log_mean, self.ci_halfwidth)
            ],
            "paths": self.paths,
            "batches": self.batches,
            "seed": self.seed,
            "inside_fraction": self.inside_fraction,
            "bound_loglog": self.bound_loglog,
        }


def _batch_ci(batch_log_means):
    B = batch_log_means.shape[0]
    if B < 2:
        return np.full(batch_log_means.shape[1], math.nan)
    sd = np.std(batch_log_means, axis=0, ddof=1)
    return stats.t.ppf(0.975, B - 1) * sd / math.sqrt(B)


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get("SPDE_TAMED_THREADS", 1)
    threads = int(threads)
    if threads < 1:
        raise DomainError("thread count must be >= 1")
    return threads


def mc_estimate(
    model: ModelSpec,
    theta: Partition,
    I: ModeSet,
    J: ModeSet,
    xi,
    n_paths: int,
    n_batches: int = 20,
    seed: int = 0,
    threads: int | None = None,
    functional: str = "full",
    chunk: int = CHUNK,
) -> MomentEstimate:
    """Estimate ``log E[exp(functional_t)]`` at every node of ``theta``.

    Paths run in fixed-size chunks merged in path order, so results do not depend on
    ``threads``. Batch sums are accumulated as a streaming log-sum-exp with a running max shift.
    """
    if n_paths < 1 or n_batches < 1 or n_paths % n_batches:
        raise DomainError("n_paths must be a positive multiple of n_batches")
    if functional not in ("full", "quadratic"):
        raise DomainError(f"unknown functional {functional!r}")
    spec = LyapunovSpec.from_model(model)
    per_batch = n_paths // n_batches
    starts = list(range(0, n_paths, chunk))

    def run(start):
        paths = range(start, min(start + chunk, n_paths))
        traj = simulate_paths(model, theta, I, J, xi, seed, paths, keep=False)
        if functional == "full":
            f = exponent_functional(spec, traj)
        else:
            f = quadratic_functional(spec, traj)
        return start, f, float(np.mean(traj.inside[:, :-1])) if theta.steps else 1.0

    nodes = theta.steps + 1
    # running max-shift per batch: log sum exp(f) = shift + log(total)
    shift = np.full((n_batches, nodes), -np.inf)
    total = np.zeros((n_batches, nodes))
    inside = []
    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        for start, f, frac in pool.map(run, starts):
            inside.append((len(f), frac))
            idx = np.arange(start, start + len(f)) // per_batch
            for b in np.unique(idx):
                fb = f[idx == b]
                new = np.maximum(shift[b], fb.max(axis=0))
                keep = np.where(np.isfinite(shift[b]), np.exp(shift[b] - new), 0.0)
                total[b] = total[b] * keep + np.sum(np.exp(fb - new), axis=0)
                shift[b] = new
    batch_log_means = shift + np.log(total / per_batch)
    top = shift.max(axis=0)
    log_mean = top + np.log(np.sum(total * np.exp(shift - top), axis=0) / n_paths)
    frac = sum(n * f for n, f in inside) / n_paths
    return MomentEstimate(
        theta.array, log_mean, _batch_ci(batch_log_means), batch_log_means,
        n_paths, n_batches, seed, frac,
    )


def log_initial_moment(model: ModelSpec, xi, I: ModeSet | None = None) -> float:
    """``log E[exp(V(P_I xi))]`` for deterministic or Gaussian initial data."""
    spec = LyapunovSpec.from_model(model)
    if isinstance(xi, GalerkinState):
        x = xi if I is None else project(xi, I)
        return V(spec, x)
    if isinstance(xi, InitialGaussian):
        return math.sqrt(spec.theta) + xi.log_mgf_sq_norm(spec.epsilon, I)
    raise DomainError(f"unsupported initial condition {type(xi).__name__}")


# ---------------------------------------------------------------------------
# Explicit bound


@dataclass(frozen=True)
class BoundLog:
    """``log(bound / E[e^{V(Y_0)}]) = exp(exp(leading_loglog)) * exp(mesh_log)`` in pieces.

    ``leading_loglog`` is ``log(2 [720 max{T, rho, 1} c^3]^p)``, the log-log of the leading
    double exponential, and ``mesh_log = -exponent * log(min{mesh, 1})`` the log of the
    mesh power factor.
    """

    leading_loglog: float
    mesh_log: float
    exponent: float
    power: float

    @property
    def loglog(self) -> float:
        """``log log(bound / E[e^V])``; finite but may be huge."""
        x = self.leading_loglog
        if x > 700:
            return math.inf
        return math.exp(x) + self.mesh_log

    @property
    def logloglog(self) -> float:
        x = self.leading_loglog
        return x + math.log1p(self.mesh_log * math.exp(-x)) if x < 700 else x

    @property
    def leading_log10_digits(self) -> float:
        """Decimal exponent of the inner exponent ``2 K^p``."""
        return self.leading_loglog / math.log(10.0)

    def to_json(self):
        return {
            "leading_loglog": self.leading_loglog,
            "leading_log10": self.leading_log10_digits,
            "mesh_log": self.mesh_log,
            "mesh_exponent": self.exponent,
            "power": self.power,
            "logloglog": self.logloglog,
        }


def moment_bound_log(
    c: float,
    delta: float,
    varsigma: float,
    mesh: float,
    T: float,
    rho: float = 0.0,
    iota: float = 1.0,
) -> BoundLog:
    if not (c >= 1 and iota >= 1 and mesh > 0 and T > 0 and rho >= 0):
        raise DomainError("need c >= 1, iota >= 1, mesh > 0, T > 0, rho >= 0")
    exponent = varsigma + varsigma * iota + 7 * delta - 0.5
    if not (varsigma > 0 and delta >= 0 and exponent < 0):
        raise DomainError(
            f"degenerate bound: varsigma + varsigma iota + 7 delta = {exponent + 0.5} must be < 1/2"
        )
    K = 720.0 * max(T, rho, 1.0) * c**3
    p = (720.0 * c**3 * max(T, 1.0) + 7.0) * iota
    leading = math.log(2.0) + p * math.log(K)
    mesh_log = -exponent * math.log(min(mesh, 1.0))
    return BoundLog(leading, mesh_log, exponent, p)


def model_bound(model: ModelSpec, mesh: float, T: float, iota: float = 1.0) -> BoundLog:
    return moment_bound_log(model.c, model.delta, model.varsigma, mesh, T, model.rho, iota)

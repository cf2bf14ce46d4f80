"""Tamed space-time-noise discrete exponential Euler scheme.

One step from node ``t0`` to ``t1``::

    G  = P_I B(Y) P_J (W_t1 - W_t0)
    Y1 = e^{(t1-t0) A} (Y + 1_D(Y) [P_I F(Y) (t1 - t0) + G / (1 + |G|^2)])

where ``D`` is the taming set at the *global* mesh of the partition. Paths are run in
batches (leading axis = path) so that Monte Carlo estimation stays vectorized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .models import GalerkinSystem, ModelSpec
from .noise import INITIAL, NoiseStream, WienerIncrement, path_increments
from .spectral import DomainError, GalerkinState, ModeSet, project
from .timegrid import Partition


class ContractError(ValueError):
    """A precondition of the stepper is violated."""


def tame_coeffs(g):
    g = np.asarray(g, dtype=float)
    return g / (1.0 + np.sum(g * g, axis=-1, keepdims=True))


def tame(w: GalerkinState) -> GalerkinState:
    """``w / (1 + |w|^2)``; the result has norm at most 1/2."""
    return GalerkinState(w.modes, tame_coeffs(w.coeffs))


def _step_arrays(system, Y, dW, dt, threshold, form="scheme"):
    inside = system.radius(Y) <= threshold
    F = system.drift(Y)
    G = system.noise(Y, dW)
    decay = np.exp(system.eig * dt)
    ins = inside[..., None]
    if form == "scheme":
        # semigroup applied to state+drift and, separately, to the tamed noise numerator
        den = 1.0 + np.sum(G * G, axis=-1, keepdims=True)
        drift_part = decay * (Y + np.where(ins, F * dt, 0.0))
        noise_part = (decay * np.where(ins, G, 0.0)) / den
        return drift_part + noise_part, inside, G
    if form == "semigroup":
        incr = np.where(ins, F * dt + tame_coeffs(G), 0.0)
        return decay * (Y + incr), inside, G
    raise DomainError(f"unknown scheme form {form!r}")


def step(
    model: ModelSpec,
    theta: Partition,
    Y: GalerkinState,
    t0: float,
    t1: float,
    dW: WienerIncrement,
    I: ModeSet,
    J: ModeSet | None = None,
    form: str = "scheme",
) -> GalerkinState:
    """Advance ``Y`` from ``t0`` to ``t1``.

    ``t1`` may be any time in ``(t0, next node]``, which gives the scheme's
    continuous-time interpolation between nodes. ``form="semigroup"`` evaluates the
    equivalent variant with the semigroup applied after taming.
    """
    J = J if J is not None else dW.modes
    if not t1 > t0 or theta.floor_open(t1) != t0:
        raise ContractError(f"t0={t0} is not the open floor of t1={t1} in the partition")
    if dW.modes != J:
        raise ContractError("increment modes differ from J")
    if not math.isclose(dW.dt, t1 - t0, rel_tol=1e-12, abs_tol=0.0):
        raise ContractError(f"increment length {dW.dt} differs from t1 - t0 = {t1 - t0}")
    if any(v != 0.0 and m not in I for m, v in zip(Y.modes.ids, Y.coeffs)):
        raise ContractError("state is not supported on I")
    system = GalerkinSystem(model, I, J)
    y = project(Y, I).coeffs
    out, _, _ = _step_arrays(system, y, dW.values, t1 - t0, model.threshold(theta.mesh), form)
    return GalerkinState(I, out)


@dataclass
class Trajectory:
    """Node values of one or more paths.

    ``states`` has shape ``(paths, nodes, |I|)``; ``inside[p, m]`` flags whether the
    state at node ``m`` lies in the taming set; ``accumulator[p, m]`` is
    ``int_0^{t_m} 1_D(Y_floor(s)) vbar e^{-rho s} ds``; ``sqnorm[p, m] = |Y_m|_H^2``.
    """

    times: np.ndarray
    modes: ModeSet
    states: np.ndarray
    inside: np.ndarray
    accumulator: np.ndarray
    sqnorm: np.ndarray
    noise_norms: np.ndarray = field(repr=False)
    increments: np.ndarray = field(repr=False)

    def path(self, p: int) -> "Trajectory":
        sl = slice(p, p + 1)
        return Trajectory(
            self.times, self.modes, self.states[sl], self.inside[sl],
            self.accumulator[sl], self.sqnorm[sl], self.noise_norms[sl], self.increments[sl],
        )

    def state(self, m: int, p: int = 0) -> GalerkinState:
        return GalerkinState(self.modes, self.states[p, m])


def integral_weights(times, rho):
    """``int_{t_m}^{t_{m+1}} e^{-rho s} ds`` for each step."""
    t = np.asarray(times, dtype=float)
    dt = np.diff(t)
    if rho == 0:
        return dt
    return np.exp(-rho * t[:-1]) * (-np.expm1(-rho * dt)) / rho


def run_batch(system: GalerkinSystem, theta: Partition, Y0, dW, form="scheme", keep=True):
    """Simulate a batch of paths.

    ``Y0`` has shape ``(P, |I|)`` and ``dW`` shape ``(P, steps, |J|)``.
    """
    model = system.model
    times = theta.array
    M = theta.steps
    Y = np.array(Y0, dtype=float)
    P = Y.shape[0]
    threshold = model.threshold(theta.mesh)
    weights = model.vbar * integral_weights(times, model.rho)
    states = np.empty((P, M + 1, Y.shape[1])) if keep else None
    inside = np.empty((P, M + 1), dtype=bool)
    acc = np.zeros((P, M + 1))
    sq = np.empty((P, M + 1))
    gnorm = np.empty((P, M))
    sq[:, 0] = np.sum(Y * Y, axis=-1)
    if keep:
        states[:, 0] = Y
    for m in range(M):
        Y, ins, G = _step_arrays(system, Y, dW[:, m], times[m + 1] - times[m], threshold, form)
        inside[:, m] = ins
        gnorm[:, m] = np.sqrt(np.sum(G * G, axis=-1))
        acc[:, m + 1] = acc[:, m] + np.where(ins, weights[m], 0.0)
        sq[:, m + 1] = np.sum(Y * Y, axis=-1)
        if keep:
            states[:, m + 1] = Y
    inside[:, M] = system.radius(Y) <= threshold
    if not keep:
        states = Y[:, None, :]
    return Trajectory(times, system.I, states, inside, acc, sq, gnorm, dW)


def initial_states(xi, I: ModeSet, seed: int, paths) -> np.ndarray:
    """Initial coefficients ``P_I xi`` for the given path indices.

    ``xi`` is a :class:`GalerkinState` (deterministic) or an :class:`InitialGaussian`.
    """
    paths = list(paths)
    if isinstance(xi, GalerkinState):
        return np.tile(project(xi, I).coeffs, (len(paths), 1))
    return np.stack([xi.sample(I, NoiseStream(seed, p, INITIAL)) for p in paths]) if paths else np.zeros((0, len(I)))


@dataclass(frozen=True, eq=False)
class InitialGaussian:
    """Independent Gaussian coefficients ``N(mean_h, var_h)`` on a mode set."""

    modes: ModeSet
    variances: np.ndarray
    mean: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.variances, dtype=float).reshape(-1)
        if v.shape != (len(self.modes),) or np.any(v < 0):
            raise DomainError("initial variances must be non-negative, one per mode")
        object.__setattr__(self, "variances", v)
        mu = np.zeros(len(v)) if self.mean is None else np.array(self.mean, dtype=float).reshape(-1)
        if mu.shape != v.shape:
            raise DomainError("initial mean must have one entry per mode")
        object.__setattr__(self, "mean", mu)

    def sample(self, I: ModeSet, stream: NoiseStream) -> np.ndarray:
        z = stream.normals(0, len(self.modes))
        full = GalerkinState(self.modes, self.mean + np.sqrt(self.variances) * z)
        return project(full, I).coeffs

    def log_mgf_sq_norm(self, eps: float, I: ModeSet | None = None) -> float:
        """``log E[exp(eps |P_I xi|^2)]`` in closed form (non-central chi-square)."""
        keep = np.ones(len(self.modes), dtype=bool)
        if I is not None:
            keep = np.array([m in I for m in self.modes.ids])
        v, mu = self.variances[keep], self.mean[keep]
        a = 1.0 - 2.0 * eps * v
        if np.any(a <= 0):
            return math.inf
        return float(np.sum(-0.5 * np.log(a) + eps * mu * mu / a))


def path_noise(J: ModeSet, theta: Partition, seed: int, path: int) -> np.ndarray:
    return path_increments(len(J), np.diff(theta.array), NoiseStream(seed, path))


def simulate_path(
    model: ModelSpec,
    theta: Partition,
    I: ModeSet,
    J: ModeSet,
    xi,
    seed: int,
    path: int = 0,
    form: str = "scheme",
) -> Trajectory:
    """One path, fully determined by ``(model, theta, I, J, xi, seed, path)``."""
    system = GalerkinSystem(model, I, J)
    Y0 = initial_states(xi, I, seed, [path])
    dW = path_noise(J, theta, seed, path)[None]
    return run_batch(system, theta, Y0, dW, form)


def simulate_paths(model, theta, I, J, xi, seed, paths, form="scheme", keep=True) -> Trajectory:
    system = GalerkinSystem(model, I, J)
    paths = list(paths)
    Y0 = initial_states(xi, I, seed, paths)
    dW = np.stack([path_noise(J, theta, seed, p) for p in paths]) if paths else np.zeros((0, theta.steps, len(J)))
    return run_batch(system, theta, Y0, dW, form, keep)

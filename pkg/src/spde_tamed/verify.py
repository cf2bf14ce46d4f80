"""Invariant suite behind ``spde-tamed verify``.

Each check measures a residual on randomized inputs and compares it with a fixed
tolerance. ``fault`` corrupts the basis on purpose so the failure path can be
exercised: ``"eigenvalues"`` perturbs the eigenvalue table, ``"basis"`` rescales
one basis function.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .lyapunov import LyapunovSpec, drift_condition_terms
from .models import GalerkinSystem
from .scheme import _step_arrays, simulate_paths, tame_coeffs
from .spectral import GalerkinState, ModeSet, linf_constant, transform

FD_STEP = 2e-4


@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""

    def to_json(self):
        d = asdict(self)
        d["residual"] = float(d["residual"])
        return d


class FaultyBasis:
    """Delegating wrapper around a basis with one deliberate defect."""

    def __init__(self, base, fault, mode):
        if fault not in ("eigenvalues", "basis"):
            raise ValueError(f"unknown fault {fault!r}")
        self._base = base
        self._fault = fault
        self._mode = mode

    def __getattr__(self, name):
        return getattr(self._base, name)

    def eigenvalue(self, mode):
        lam = self._base.eigenvalue(mode)
        if self._fault == "eigenvalues" and mode == self._mode:
            return 1.01 * lam
        return lam

    def values(self, modes, points):
        v = self._base.values(modes, points)
        if self._fault == "basis":
            hit = np.array([m == self._mode for m in modes])
            v = np.where(hit[:, None, None], 1.01 * v, v)
        return v


# ---------------------------------------------------------------------------
# basis-level checks


def _fine_grid(basis, band):
    return basis.grid_for(max(band, 1), factor=2)


def orthonormality(basis, modes):
    ids = list(modes.ids)
    grid = _fine_grid(basis, modes.band)
    v = basis.values(ids, grid.points)
    gram = np.einsum("acp,bcp,p->ab", v, v, grid.weights)
    return float(np.max(np.abs(gram - np.eye(len(ids)))))


def _fd2(basis, ids, pts, axis):
    """Five-point second derivative of each basis function along ``axis``."""
    e = np.zeros(basis.dim)
    e[axis] = FD_STEP
    shift = lambda s: basis.values(ids, pts + s * e if basis.dim > 1 else pts + s * FD_STEP)
    return (-shift(2) + 16 * shift(1) - 30 * shift(0) + 16 * shift(-1) - shift(-2)) / (12 * FD_STEP**2)


def eigen_consistency(basis, modes):
    """Max relative gap between the eigenvalue table and finite-difference Rayleigh quotients."""
    ids = list(modes.ids)
    grid = _fine_grid(basis, modes.band)
    pts = grid.points
    h = basis.values(ids, pts)
    w = grid.weights

    def inner(a, b):
        return np.sum(a * b * w, axis=(1, 2))

    lap = sum(_fd2(basis, ids, pts, a) for a in range(basis.dim))
    eta = getattr(basis, "eta", 0.0)
    if basis.kind == "ks":
        rq = -inner(lap, lap) - inner(h, lap) - eta
    else:
        rq = inner(h, lap) - eta
    lam = np.array([basis.eigenvalue(m) for m in ids])
    return float(np.max(np.abs(rq - lam) / np.maximum(1.0, np.abs(lam))))


def derivative_rule(basis, modes, rng):
    ids = list(modes.ids)
    pts = rng.uniform(0.05, 0.95, size=(64, basis.dim)) if basis.dim > 1 else rng.uniform(0.05, 0.95, 64)
    worst = 0.0
    for a in range(basis.dim):
        e = np.zeros(basis.dim)
        e[a] = FD_STEP
        shift = lambda s: basis.values(ids, pts + s * e if basis.dim > 1 else pts + s * FD_STEP)
        fd = (-shift(2) + 8 * shift(1) - 8 * shift(-1) + shift(-2)) / (12 * FD_STEP)
        exact = basis.derivatives(ids, pts, a)
        scale = np.maximum(1.0, np.max(np.abs(exact), axis=(1, 2), keepdims=True))
        worst = max(worst, float(np.max(np.abs(fd - exact) / scale)))
    return worst


# ---------------------------------------------------------------------------
# random states


def random_coeffs(rng, modes: ModeSet, count, decay=1.0, scale=1.0):
    """Gaussian coefficients damped like ``|lambda|^(-decay/2)`` and rescaled per sample."""
    lam = np.abs(modes.eigenvalues)
    w = (lam / lam.min()) ** (-0.5 * decay)
    z = rng.standard_normal((count, len(modes))) * w
    s = scale * rng.uniform(0.05, 1.0, size=(count, 1))
    return s * z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-300)


def taming_states(system: GalerkinSystem, rng, count, h):
    """Random states inside ``D_h^I``: random directions scaled into the set."""
    threshold = system.model.threshold(h)
    d = random_coeffs(rng, system.I, count)
    d /= np.maximum(np.linalg.norm(d, axis=1, keepdims=True), 1e-300)
    lo = np.zeros(count)
    hi = np.ones(count)
    while True:
        r = system.radius(hi[:, None] * d)
        out = r <= threshold
        if not np.any(out):
            break
        hi = np.where(out, 2 * hi, hi)
        if hi.max() > 1e8:
            break
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        ok = system.radius(mid[:, None] * d) <= threshold
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    frac = rng.uniform(0.0, 1.0, size=count)
    frac[: min(count, 3)] = [0.0, 1.0, 0.5][: min(count, 3)]
    return (frac * lo)[:, None] * d


# ---------------------------------------------------------------------------
# model-level checks


def _coercivity(system, X):
    m = system.model
    F = system.drift(X)
    lhs = np.sum(X * F, axis=1)
    target = m.eta * np.sum(X * X, axis=1)
    scale = np.linalg.norm(X, axis=1) * np.linalg.norm(F, axis=1) + np.abs(target) + 1e-300
    return float(np.max(np.abs(lhs - target) / scale))


def _growth(system, X):
    F = np.linalg.norm(system.drift(X), axis=1)
    bound = system.growth_bound(X)
    return float(np.max(F - bound * (1 + 1e-12)))


def _hs(system, X):
    return float(np.max(system.hs_norm(X)) - math.sqrt(system.model.theta) * (1 + 1e-12))


def _linf(system, X):
    m = system.model
    tr = transform(system.I, _fine_grid(m.basis, 2 * system.I.band))
    v = tr.synthesize(X)
    sup = np.max(np.sqrt(np.sum(v * v, axis=1)), axis=-1)
    C = linf_constant(m.basis, m.gamma)
    return float(np.max(sup - C * system.norm(X, m.gamma) * (1 + 1e-12)))


def _lipschitz(system, X, Y):
    m = system.model
    if m.diffusion.is_additive:
        d = system.b_matrix(X) - system.b_matrix(Y)
        return float(np.max(np.abs(d)))
    C = linf_constant(m.basis, m.gamma)
    lip = m.diffusion.lipschitz(m.basis.dim)
    d = system.b_matrix(X) - system.b_matrix(Y)
    lhs = np.sqrt(np.sum(d * d, axis=(-2, -1)))
    rhs = lip * C * system.norm(X - Y, m.gamma) * math.sqrt(m.trace_q)
    return float(np.max(lhs - rhs * (1 + 1e-12)))


def _divergence(system, X):
    m = system.model
    tr = transform(system.I, _fine_grid(m.basis, system.I.band))
    div = tr.derivative(X, 0)[:, 0] + tr.derivative(X, 1)[:, 1]
    return float(np.max(np.abs(div)))


def _semigroup(system, X, rng):
    lam = system.eig
    s, t = rng.uniform(0, 0.01, 2)
    a = np.exp(lam * s) * (np.exp(lam * t) * X)
    b = np.exp(lam * (s + t)) * X
    prop = np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)
    grow = np.max(np.linalg.norm(b, axis=1) - np.linalg.norm(X, axis=1))
    return float(max(prop, grow, 0.0))


def _drift_condition(system, X):
    m = system.model
    spec = LyapunovSpec.from_model(m)
    worst = -math.inf
    for x in X:
        terms = drift_condition_terms(m, spec, GalerkinState(system.I, x), system.I, system.J)
        v = float(spec.V_sq(np.dot(x, x)))
        worst = max(worst, terms["residual"] / (1 + v))
    return worst


def _taming_factor(rng, dim, trials):
    G = rng.standard_normal((trials, dim)) * rng.lognormal(0, 2, size=(trials, 1))
    return float(np.max(np.linalg.norm(tame_coeffs(G), axis=1)))


def _path_checks(exp, rng):
    """Scheme-form agreement, indicator bookkeeping and the frozen outside step."""
    m, theta, I, J = exp.model, exp.theta, exp.I, exp.J
    system = GalerkinSystem(m, I, J)
    traj = simulate_paths(m, theta, I, J, exp.xi, exp.cfg.seed, range(4))
    h = theta.mesh
    threshold = m.threshold(h)
    forms = 0.0
    indicator = 0.0
    frozen = 0.0
    for p in range(traj.states.shape[0]):
        for k in range(theta.steps):
            Y = traj.states[p, k]
            dW = traj.increments[p, k]
            dt = theta.nodes[k + 1] - theta.nodes[k]
            a, ins, _ = _step_arrays(system, Y, dW, dt, threshold, "scheme")
            b, _, _ = _step_arrays(system, Y, dW, dt, threshold, "semigroup")
            scale = 1.0 + np.max(np.abs(a))
            forms = max(forms, float(np.max(np.abs(a - b)) / scale))
            indicator = max(indicator, float(bool(ins) != bool(traj.inside[p, k])))
            if not ins:
                frozen = max(frozen, float(np.max(np.abs(traj.states[p, k + 1] - np.exp(system.eig * dt) * Y))))
        indicator = max(indicator, float(bool(system.radius(traj.states[p, -1]) <= threshold) != bool(traj.inside[p, -1])))
    return forms, indicator, frozen


def run_suite(exp, fault=None) -> list[Check]:
    """All invariant checks for an :class:`~spde_tamed.config.Experiment`."""
    cfg = exp.cfg
    vc = cfg.verify
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    m, I, J = exp.model, exp.I, exp.J
    basis = m.basis
    checks = []

    def add(name, residual, tol, detail=""):
        checks.append(Check(name, bool(residual <= tol), residual, tol, detail))

    modes = I.union(J)
    test_basis = basis
    if fault is not None:
        target = modes.ids[len(modes) // 2]
        test_basis = FaultyBasis(basis, fault, target)
    add("orthonormality", orthonormality(test_basis, modes), 1e-12, "max |Gram - Id| on the mode set")
    add("eigenvalues", eigen_consistency(test_basis, modes), 1e-6, "eigenvalue table vs FD Rayleigh quotient")
    add("derivative_rule", derivative_rule(basis, modes, rng), 1e-6, "closed-form derivative vs FD")

    system = GalerkinSystem(m, I, J)
    X = random_coeffs(rng, I, vc.states, scale=2.0)
    X2 = random_coeffs(rng, I, vc.states, scale=2.0)
    tr = system.tr
    back = tr.analyze(tr.synthesize(X))
    add("parseval", float(np.max(np.abs(back - X))), 1e-12, "analyze(synthesize(c)) = c")
    tol_coerc = 1e-9 if m.kind == "burgers" else 1e-8
    add("coercivity", _coercivity(system, X), tol_coerc, "<x, P_I F(x)> = eta |x|^2")
    add("growth_bound", _growth(system, X), 0.0, "|P_I F(x)| <= eta|x| + C |x|_{H_gamma}^2")
    add("hs_bound", _hs(system, X), 0.0, "|P_I B(x) P_J|_HS <= sqrt(theta)")
    add("linf_embedding", _linf(system, X), 0.0, "sup |v| <= C |v|_{H_gamma}")
    add("lipschitz_B", _lipschitz(system, X, X2), 0.0, "|B(v) - B(w)|_HS <= Lip |v - w|_Linf sqrt(tr Q)")
    if basis.kind == "ns2d":
        add("divergence_free", _divergence(system, X), 1e-10, "max |div v| on the grid")
    add("semigroup", _semigroup(system, X, rng), 1e-12, "S_s S_t = S_{s+t}, |S_t x| <= |x|")
    add("taming_factor", _taming_factor(rng, len(I), vc.trials) - 0.5, 0.0, "|w / (1 + |w|^2)| <= 1/2")
    D = taming_states(system, rng, vc.taming_states, exp.theta.mesh)
    add("drift_condition", _drift_condition(system, D), 1e-8, "residual / (1 + V) on taming-set states")
    forms, indicator, frozen = _path_checks(exp, rng)
    add("scheme_forms", forms, 1e-14, "semigroup-before vs semigroup-after taming, per step")
    add("indicator", indicator, 0.0, "recorded taming indicator matches the radius rule")
    add("outside_step", frozen, 0.0, "outside D the step is the bare semigroup")
    return checks


def report(checks) -> dict:
    return {"passed": all(c.passed for c in checks), "checks": [c.to_json() for c in checks]}

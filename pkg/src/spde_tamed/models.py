"""Stochastic Burgers, Kuramoto-Sivashinsky and 2D Navier-Stokes instances.

Each model is ``dX = [A X + F(X)] dt + B(X) dW`` with
``F(w) = R(eta w - sum_i w_i d_i w)`` and the Nemytskii diffusion
``B(v) u = R(b(x, v(x)) sqrt(Q) u)``. Galerkin projections of the quadratic term are
computed pseudospectrally on grids that integrate the triple products exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .noise import CovarianceSpec
from .spectral import (
    DomainError,
    GalerkinState,
    ModeSet,
    SpectralBasis,
    hnorm_coeffs,
    make_basis,
    project,
    transform,
)

DIFFUSION_KINDS = ("additive-identity", "additive-matrix", "nemytskii-rational")

# max over y of |d/dy 1/(1+y^2)|, attained at y = 1/sqrt(3)
RATIONAL_LIPSCHITZ = 9.0 / (8.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class Diffusion:
    """Pointwise diffusion coefficient ``b(x, y)``.

    * ``additive-identity``: ``b = scale * Id``
    * ``additive-matrix``: ``b = matrix`` (constant ``d x d``)
    * ``nemytskii-rational``: ``b(x, y) = scale / (1 + |y|^2) * Id``
    """

    kind: str = "additive-identity"
    scale: float = 1.0
    matrix: tuple | None = None

    def __post_init__(self):
        if self.kind not in DIFFUSION_KINDS:
            raise DomainError(f"unknown diffusion {self.kind!r}; expected one of {DIFFUSION_KINDS}")
        if self.kind == "additive-matrix":
            if self.matrix is None:
                raise DomainError("additive-matrix diffusion needs a matrix")
            m = tuple(tuple(float(v) for v in row) for row in np.atleast_2d(self.matrix))
            object.__setattr__(self, "matrix", m)
        elif self.matrix is not None:
            raise DomainError(f"{self.kind} diffusion takes no matrix")
        if not math.isfinite(self.scale):
            raise DomainError("diffusion scale must be finite")

    @property
    def is_additive(self):
        return self.kind != "nemytskii-rational"

    def matrix_array(self, dim):
        if self.kind == "additive-matrix":
            m = np.array(self.matrix, dtype=float)
            if m.shape != (dim, dim):
                raise DomainError(f"diffusion matrix must be {dim}x{dim}, got {m.shape}")
            return m
        return self.scale * np.eye(dim)

    def sup_norm(self, dim) -> float:
        """``sup_{x,y} ||b(x,y)||`` in the spectral norm."""
        if self.kind == "additive-matrix":
            return float(np.linalg.norm(self.matrix_array(dim), 2))
        return abs(self.scale)

    def lipschitz(self, dim) -> float:
        if self.kind == "nemytskii-rational":
            return abs(self.scale) * RATIONAL_LIPSCHITZ
        return 0.0

    def apply(self, v, n):
        """``b(x, v(x)) n(x)`` for fields of shape ``(..., dim, npoints)``."""
        dim = n.shape[-2]
        if self.kind == "nemytskii-rational":
            return self.scale / (1.0 + np.sum(v * v, axis=-2, keepdims=True)) * n
        m = self.matrix_array(dim)
        if self.kind == "additive-identity":
            return self.scale * n
        return np.einsum("ij,...jp->...ip", m, n)

    def to_json(self):
        out = {"kind": self.kind}
        if self.kind == "additive-matrix":
            out["matrix"] = [list(r) for r in self.matrix]
        else:
            out["scale"] = self.scale
        return out


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """One SPDE instance with its taming parameters.

    ``c`` defaults to the smallest admissible value ``2 max{1, eps sqrt(theta), eps}``;
    ``varsigma`` defaults to ``delta``. ``noise_oversample`` sets the grid factor for
    Nemytskii noise (default 16 in 1D, 8 for Navier-Stokes).
    """

    kind: str
    Q: CovarianceSpec
    gamma: float | None = None
    eta: float = 0.0
    epsilon: float = 1.0
    delta: float = 0.05
    c: float | None = None
    diffusion: Diffusion = field(default_factory=Diffusion)
    varsigma: float | None = None
    radius: str = "hypothesis"
    drift: bool = True
    noise_oversample: int | None = None

    def __post_init__(self):
        kind = self.kind
        defaults = {"burgers": 0.5, "ks": 0.25, "ns2d": 0.75}
        if kind not in defaults:
            raise DomainError(f"unknown model kind {kind!r}")
        if self.gamma is None:
            object.__setattr__(self, "gamma", defaults[kind])
        if self.noise_oversample is None:
            # Nemytskii products are not band-limited; oversample the noise grid
            object.__setattr__(self, "noise_oversample", 8 if kind == "ns2d" else 16)
        g, eta = float(self.gamma), float(self.eta)
        if kind == "burgers" and not (g >= 0.5 and eta == 0.0):
            raise DomainError("Burgers requires gamma >= 1/2 and eta = 0")
        if kind == "ks" and not (g >= 0.25 and eta > 0):
            raise DomainError("Kuramoto-Sivashinsky requires gamma >= 1/4 and eta > 0")
        if kind == "ns2d" and not (g > 0.5 and eta > 0):
            raise DomainError("Navier-Stokes requires gamma > 1/2 and eta > 0")
        if not self.epsilon > 0:
            raise DomainError("epsilon must be positive")
        if not 0 < self.delta < 1.0 / 18.0:
            raise DomainError(f"delta must lie in (0, 1/18), got {self.delta}")
        if self.Q.modes.basis != self.basis:
            raise DomainError("covariance modes belong to a different basis")
        if self.radius not in ("hypothesis", "footnote", "intro"):
            raise DomainError(f"unknown radius rule {self.radius!r}")
        if self.radius != "hypothesis" and kind != "burgers":
            raise DomainError(f"the {self.radius} radius rule exists only for Burgers")
        self.diffusion.matrix_array(self.basis.dim)
        c_min = self.c_min
        if self.c is None:
            object.__setattr__(self, "c", c_min)
        elif self.c < c_min * (1 - 1e-12):
            raise DomainError(f"c = {self.c} below the admissible minimum {c_min}")
        if self.varsigma is None:
            object.__setattr__(self, "varsigma", self.delta)
        if not 0 < self.varsigma < (1 - 14 * self.delta) / 4:
            raise DomainError(
                f"varsigma must lie in (0, (1 - 14 delta)/4) = (0, {(1 - 14 * self.delta) / 4})"
            )

    @cached_property
    def basis(self) -> SpectralBasis:
        return make_basis(self.kind, self.eta)

    @cached_property
    def trace_q(self) -> float:
        return float(np.sum(self.Q.q)) + self.Q.tail

    @cached_property
    def theta(self) -> float:
        """``trace(Q) * sup ||b||^2``, frozen at construction."""
        return self.trace_q * self.diffusion.sup_norm(self.basis.dim) ** 2

    @property
    def c_min(self) -> float:
        e = self.epsilon
        return 2.0 * max(1.0, e * math.sqrt(self.theta), e)

    @property
    def b1(self) -> float:
        return 0.0

    @property
    def b2(self) -> float:
        return 0.0 if self.kind == "burgers" else self.eta

    @property
    def rho(self) -> float:
        return 2.0 * (self.b2 + self.epsilon * self.theta)

    @property
    def vbar(self) -> float:
        """Constant companion functional ``-2 eps b1 - eps theta``."""
        return -2.0 * self.epsilon * self.b1 - self.epsilon * self.theta

    @cached_property
    def growth_constant(self) -> float:
        """Coefficient of ``||x||_{H_gamma}^2`` in the drift growth bound."""
        g = self.gamma
        if self.kind == "burgers":
            return 1.0 / math.sqrt(3.0)
        if self.kind == "ks":
            return 5.0 * max(1.0, self.eta ** (-g))
        return 6.0 * math.sqrt(self.basis.inverse_power_sum(g))

    def threshold(self, h: float) -> float:
        """Taming threshold ``c h^(-delta)``."""
        if not h > 0:
            raise DomainError(f"mesh must be positive, got {h}")
        return self.c * h ** (-self.delta)

    def to_json(self):
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "eta": self.eta,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "c": self.c,
            "varsigma": self.varsigma,
            "radius": self.radius,
            "drift": self.drift,
            "b": self.diffusion.to_json(),
            "Q": self.Q.to_json(),
        }


class GalerkinSystem:
    """Batched kernels of one model on mode sets ``I`` (state) and ``J`` (noise).

    Coefficient arrays have shape ``(..., |I|)`` and noise increments ``(..., |J|)``.
    """

    def __init__(self, model: ModelSpec, I: ModeSet, J: ModeSet):
        basis = model.basis
        if I.basis != basis or J.basis != basis:
            raise DomainError("mode sets belong to a different basis")
        self.model = model
        self.I = I
        self.J = J
        self.eig = I.eigenvalues
        self.grid = basis.grid_for(max(I.band, 1))
        self.tr = transform(I, self.grid)
        q = np.zeros(len(J))
        for j, m in enumerate(J.ids):
            k = model.Q.modes.index.get(m)
            if k is not None:
                q[j] = model.Q.q[k]
        self.sqrt_q = np.sqrt(q)
        # direct coefficient route for scalar-multiple additive noise
        diff = model.diffusion
        self._scalar_noise = diff.kind == "additive-identity" or (
            diff.kind == "additive-matrix" and basis.dim == 1
        )
        if self._scalar_noise:
            scale = float(diff.matrix_array(basis.dim)[0, 0])
            self._scalar = scale
            self._JinI = np.array([I.index.get(m, -1) for m in J.ids], dtype=int)
        else:
            factor = model.noise_oversample if not diff.is_additive else 2
            self.noise_grid = basis.grid_for(max(I.band, J.band, 1), factor=factor)
            self.ntr_I = transform(I, self.noise_grid)
            self.ntr_J = transform(J, self.noise_grid)

    # -- norms and radius ---------------------------------------------------

    def norm(self, coeffs, r=0.0):
        return hnorm_coeffs(coeffs, self.eig, r)

    def radius(self, coeffs):
        m = self.model
        h0 = self.norm(coeffs)
        hg2 = self.norm(coeffs, m.gamma) ** 2
        if m.radius == "footnote":
            k = 2.0 * m.epsilon * max(1.0, math.sqrt(m.trace_q))
            return k + k * self.norm(coeffs, 0.5) ** 2
        if m.radius == "intro":
            # simpler Burgers threshold quantity |(-A)^{1/2} x|^2 + 1
            return 1.0 + self.norm(coeffs, 0.5) ** 2
        first = math.sqrt(m.theta) + m.epsilon * h0 * h0
        second = m.eta * h0 + m.growth_constant * hg2
        return np.maximum(first, second)

    def growth_bound(self, coeffs):
        m = self.model
        return m.eta * self.norm(coeffs) + m.growth_constant * self.norm(coeffs, m.gamma) ** 2

    def inside(self, coeffs, h):
        return self.radius(coeffs) <= self.model.threshold(h)

    # -- drift ------------------------------------------------------------------

    def drift(self, coeffs):
        """``P_I F(Y)``."""
        c = np.asarray(coeffs, dtype=float)
        if not self.model.drift:
            return np.zeros_like(c)
        tr = self.tr
        v = tr.synthesize(c)
        conv = 0.0
        for i in range(self.model.basis.dim):
            conv = conv + v[..., i : i + 1, :] * tr.derivative(c, i)
        return self.model.eta * c - tr.analyze(conv)

    # -- diffusion ---------------------------------------------------------------

    def noise(self, coeffs, dW):
        """``P_I B(Y) P_J dW``."""
        dW = np.asarray(dW, dtype=float)
        lead = np.broadcast_shapes(np.shape(coeffs)[:-1], dW.shape[:-1])
        if self._scalar_noise:
            out = np.zeros(lead + (len(self.I),))
            sel = self._JinI >= 0
            out[..., self._JinI[sel]] = self._scalar * (self.sqrt_q * dW)[..., sel]
            return out
        n = self.ntr_J.synthesize(self.sqrt_q * dW)
        if self.model.diffusion.is_additive:
            v = np.zeros(1)
        else:
            v = self.ntr_I.synthesize(coeffs)
        return self.ntr_I.analyze(self.model.diffusion.apply(v, n))

    def b_matrix(self, coeffs):
        """Matrix of ``P_I B(Y) P_J`` in the bases ``I`` x ``J``, shape ``(..., |I|, |J|)``."""
        c = np.asarray(coeffs, dtype=float)
        if self._scalar_noise:
            out = np.zeros(c.shape[:-1] + (len(self.I), len(self.J)))
            for j, i in enumerate(self._JinI):
                if i >= 0:
                    out[..., i, j] = self._scalar * self.sqrt_q[j]
            return out
        n = self._noise_fields
        if self.model.diffusion.is_additive:
            out = self.ntr_I.analyze(self.model.diffusion.apply(np.zeros(1), n))  # (|J|, |I|)
            return np.broadcast_to(out.T, c.shape[:-1] + out.T.shape).copy()
        v = self.ntr_I.synthesize(c)[..., None, :, :]
        cols = self.ntr_I.analyze(self.model.diffusion.apply(v, n))  # (..., |J|, |I|)
        return np.swapaxes(cols, -1, -2)

    @cached_property
    def _noise_fields(self):
        # each colored noise basis vector on the noise grid, (|J|, dim, G)
        return self.ntr_J.synthesize(self.sqrt_q[:, None] * np.eye(len(self.J)))

    def hs_norm(self, coeffs):
        M = self.b_matrix(coeffs)
        return np.sqrt(np.sum(M * M, axis=(-2, -1)))


# ---------------------------------------------------------------------------
# State-level operations


def _system(model, I, J=None):
    return GalerkinSystem(model, I, J if J is not None else model.Q.modes)


def drift_F(model: ModelSpec, x: GalerkinState, I: ModeSet) -> GalerkinState:
    """Galerkin drift ``P_I F(x)``; ``x`` is first restricted to ``I``."""
    y = project(x, I)
    return GalerkinState(I, _system(model, I).drift(y.coeffs))


def diffusion_B(model: ModelSpec, x: GalerkinState, w, I: ModeSet, J: ModeSet | None = None):
    """``P_I B(x) P_J w`` for noise coefficients ``w`` on ``J`` (default: the modes of Q)."""
    J = J if J is not None else model.Q.modes
    y = project(x, I)
    return GalerkinState(I, _system(model, I, J).noise(y.coeffs, np.asarray(w, dtype=float)))


def hs_norm_B(model: ModelSpec, x: GalerkinState, J: ModeSet | None = None, I: ModeSet | None = None):
    """Hilbert-Schmidt norm of ``P_I B(x) P_J``."""
    I = I if I is not None else x.modes
    y = project(x, I)
    return float(_system(model, I, J).hs_norm(y.coeffs))


def taming_radius(model: ModelSpec, x: GalerkinState) -> float:
    return float(_system(model, x.modes).radius(x.coeffs))


def in_taming_set(model: ModelSpec, x: GalerkinState, h: float, I: ModeSet) -> bool:
    """Membership of ``x`` in ``D_h^I = {x in P_I(H_gamma): r(x) <= c h^-delta}``."""
    if not h > 0:
        raise DomainError(f"mesh must be positive, got {h}")
    for m, v in zip(x.modes.ids, x.coeffs):
        if v != 0.0 and m not in I:
            return False
    return taming_radius(model, x) <= model.threshold(h)

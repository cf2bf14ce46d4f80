"""Eigenbases of the linear operator A, Galerkin states and physical-space transforms.

Three bases are provided:

* ``burgers``: ``e_n(x) = sqrt(2) sin(n pi x)`` on (0, 1), ``n >= 1``, ``lambda_n = -pi^2 n^2``.
* ``ks``: the periodic Fourier family ``1, sqrt(2) cos(2 pi n x), sqrt(2) sin(2 pi n x)`` indexed
  by a signed integer, ``lambda_k = 4 k^2 pi^2 - 16 k^4 pi^4 - eta``.
* ``ns2d``: divergence-free vector fields on the unit torus indexed by ``(k, l, s)``,
  ``lambda = -eta - 4 pi^2 (k^2 + l^2)``.

States are dense coefficient vectors over a canonically ordered :class:`ModeSet`. All
quadrature runs on uniform grids, which integrate trigonometric polynomials exactly
below the grid's Nyquist band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import zeta

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi

KINDS = ("burgers", "ks", "ns2d")


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ResolutionError(ValueError):
    """A physical grid is too coarse for the requested transform."""


# ---------------------------------------------------------------------------
# 1D trigonometric families


def _periodic(k, x):
    """phi_k(x) for the periodic family: 1, sqrt2 cos(2 pi k x) (k>0), sqrt2 sin(2 pi |k| x) (k<0)."""
    k = np.asarray(k)[..., None]
    x = np.asarray(x, dtype=float)
    arg = TWO_PI * np.abs(k) * x
    out = np.where(k > 0, SQRT2 * np.cos(arg), SQRT2 * np.sin(arg))
    return np.where(k == 0, 1.0, out)


def _periodic_deriv(k, x):
    # phi_k' = -2 pi k phi_{-k}
    k = np.asarray(k)
    return -TWO_PI * k[..., None] * _periodic(-k, x)


# ---------------------------------------------------------------------------
# Bases


class SpectralBasis:
    """Common interface of the three model bases.

    Subclasses define ``kind``, ``dim`` (spatial dimension, also the number of field
    components) and ``sup_norm`` (the sup over basis functions of the L-infinity norm).
    """

    kind: str
    dim: int
    sup_norm: float

    def validate(self, mode):
        raise NotImplementedError

    def eigenvalue(self, mode) -> float:
        raise NotImplementedError

    def sort_key(self, mode):
        raise NotImplementedError

    def frequency(self, mode) -> int:
        """Largest per-axis integer frequency of the basis function."""
        raise NotImplementedError

    def values(self, modes, points):
        """Values of basis functions at points, shape ``(len(modes), dim, npoints)``."""
        raise NotImplementedError

    def derivatives(self, modes, points, axis):
        """Closed-form ``d/dx_axis`` of basis functions, same shape as :meth:`values`."""
        raise NotImplementedError

    def modes(self, cutoff, **kwargs) -> "ModeSet":
        raise NotImplementedError

    def inverse_power_sum(self, rho: float) -> float:
        """``sum_h |lambda_h|^(-2 rho)`` over the whole (infinite) basis."""
        raise NotImplementedError

    def grid(self, n: int) -> "PhysicalGrid":
        raise NotImplementedError

    def grid_for(self, band: int, factor: int = 2) -> "PhysicalGrid":
        """Uniform grid exact for products whose band limit is ``factor * band``.

        Uses ``2 * (factor * band) + 2`` nodes per period, which keeps Galerkin
        projections of quadratic terms alias-free.
        """
        raise NotImplementedError

    def to_json(self, mode):
        return mode

    def from_json(self, value):
        return self.validate(value)

    def __eq__(self, other):
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self):
        return hash((type(self).__name__, self._key()))

    def _key(self):
        return ()


class BurgersBasis(SpectralBasis):
    kind = "burgers"
    dim = 1
    sup_norm = SQRT2

    def validate(self, mode):
        if isinstance(mode, (bool, np.bool_)) or not isinstance(mode, (int, np.integer)):
            raise DomainError(f"Burgers mode must be a positive integer, got {mode!r}")
        if mode <= 0:
            raise DomainError(f"Burgers mode must be positive, got {mode}")
        return int(mode)

    def eigenvalue(self, mode):
        n = self.validate(mode)
        return -math.pi**2 * n * n

    def sort_key(self, mode):
        return (mode,)

    def frequency(self, mode):
        return mode

    def values(self, modes, points):
        n = np.asarray(modes, dtype=float)[:, None]
        x = np.asarray(points, dtype=float).reshape(-1)
        return (SQRT2 * np.sin(math.pi * n * x))[:, None, :]

    def derivatives(self, modes, points, axis=0):
        if axis != 0:
            raise DomainError("Burgers basis is one-dimensional")
        n = np.asarray(modes, dtype=float)[:, None]
        x = np.asarray(points, dtype=float).reshape(-1)
        return (SQRT2 * math.pi * n * np.cos(math.pi * n * x))[:, None, :]

    def modes(self, cutoff):
        return ModeSet(self, range(1, int(cutoff) + 1))

    def inverse_power_sum(self, rho):
        if 4.0 * rho <= 1.0:
            raise DomainError(f"sum |lambda|^(-2 rho) diverges for Burgers at rho={rho}")
        return math.pi ** (-4.0 * rho) * float(zeta(4.0 * rho))

    def grid(self, n):
        return PhysicalGrid(self.kind, (int(n),))

    def grid_for(self, band, factor=2):
        # interior nodes j/n of [0, 1]; sine products are cosine series on the doubled period
        return self.grid(factor * band + 1)


class KSBasis(SpectralBasis):
    kind = "ks"
    dim = 1
    sup_norm = SQRT2

    def __init__(self, eta: float):
        if not eta > 0:
            raise DomainError(f"Kuramoto-Sivashinsky basis needs eta > 0, got {eta}")
        self.eta = float(eta)

    def _key(self):
        return (self.eta,)

    def __repr__(self):
        return f"KSBasis(eta={self.eta})"

    def validate(self, mode):
        if isinstance(mode, (bool, np.bool_)) or not isinstance(mode, (int, np.integer)):
            raise DomainError(f"KS mode must be an integer, got {mode!r}")
        return int(mode)

    def eigenvalue(self, mode):
        k = self.validate(mode)
        return 4.0 * k * k * math.pi**2 - 16.0 * k**4 * math.pi**4 - self.eta

    def sort_key(self, mode):
        # |lambda_k| is increasing in k^2
        return (mode * mode, mode)

    def frequency(self, mode):
        return abs(mode)

    def values(self, modes, points):
        x = np.asarray(points, dtype=float).reshape(-1)
        return _periodic(np.asarray(modes, dtype=int), x)[:, None, :]

    def derivatives(self, modes, points, axis=0):
        if axis != 0:
            raise DomainError("KS basis is one-dimensional")
        x = np.asarray(points, dtype=float).reshape(-1)
        return _periodic_deriv(np.asarray(modes, dtype=int), x)[:, None, :]

    def modes(self, cutoff, include_zero=True):
        K = int(cutoff)
        ks = [k for k in range(-K, K + 1) if include_zero or k != 0]
        return ModeSet(self, ks)

    def inverse_power_sum(self, rho):
        if 8.0 * rho <= 1.0:
            raise DomainError(f"sum |lambda|^(-2 rho) diverges for KS at rho={rho}")
        return _ks_power_sum(self.eta, float(rho))

    def grid(self, n):
        return PhysicalGrid(self.kind, (int(n),))

    def grid_for(self, band, factor=2):
        return self.grid(2 * factor * band + 2)


class NSBasis(SpectralBasis):
    """Divergence-free basis of L^2 vector fields on the unit torus.

    ``(0, 0, 0)`` and ``(0, 0, 1)`` are the constant fields ``(1, 0)`` and ``(0, 1)``;
    for ``(k, l) != (0, 0)`` the field is
    ``(l phi_k(x) phi_l(y), k phi_{-k}(x) phi_{-l}(y)) / sqrt(k^2 + l^2)``.
    """

    kind = "ns2d"
    dim = 2
    sup_norm = 2.0

    def __init__(self, eta: float):
        if not eta > 0:
            raise DomainError(f"Navier-Stokes basis needs eta > 0, got {eta}")
        self.eta = float(eta)

    def _key(self):
        return (self.eta,)

    def __repr__(self):
        return f"NSBasis(eta={self.eta})"

    def validate(self, mode):
        try:
            k, l, s = (int(v) for v in mode)
        except (TypeError, ValueError):
            raise DomainError(f"NS mode must be an integer triple (k, l, s), got {mode!r}") from None
        if s not in (0, 1) or (s == 1 and (k, l) != (0, 0)):
            raise DomainError(f"invalid NS mode {mode!r}: s = 1 only for (0, 0, 1)")
        return (k, l, s)

    def eigenvalue(self, mode):
        k, l, _ = self.validate(mode)
        return -self.eta - 4.0 * math.pi**2 * (k * k + l * l)

    def sort_key(self, mode):
        k, l, s = mode
        return (k * k + l * l, k, l, s)

    def frequency(self, mode):
        return max(abs(mode[0]), abs(mode[1]))

    def to_json(self, mode):
        return list(mode)

    def _split(self, modes):
        arr = np.asarray(modes, dtype=int).reshape(-1, 3)
        k, l, s = arr[:, 0], arr[:, 1], arr[:, 2]
        norm = np.sqrt(k * k + l * l).astype(float)
        zero = norm == 0
        norm[zero] = 1.0
        return k, l, s, norm, zero

    def values(self, modes, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        x, y = pts[:, 0], pts[:, 1]
        k, l, s, norm, zero = self._split(modes)
        h1 = l[:, None] * _periodic(k, x) * _periodic(l, y) / norm[:, None]
        h2 = k[:, None] * _periodic(-k, x) * _periodic(-l, y) / norm[:, None]
        h1 = np.where((zero & (s == 0))[:, None], 1.0, h1)
        h2 = np.where((zero & (s == 1))[:, None], 1.0, h2)
        return np.stack([h1, h2], axis=1)

    def derivatives(self, modes, points, axis):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        x, y = pts[:, 0], pts[:, 1]
        k, l, s, norm, zero = self._split(modes)
        if axis == 0:
            h1 = l[:, None] * _periodic_deriv(k, x) * _periodic(l, y)
            h2 = k[:, None] * _periodic_deriv(-k, x) * _periodic(-l, y)
        elif axis == 1:
            h1 = l[:, None] * _periodic(k, x) * _periodic_deriv(l, y)
            h2 = k[:, None] * _periodic(-k, x) * _periodic_deriv(-l, y)
        else:
            raise DomainError(f"NS basis has axes 0 and 1, got {axis}")
        # constant fields have zero derivative; numerators already vanish there
        return np.stack([h1, h2], axis=1) / norm[:, None, None]

    def modes(self, cutoff, include_mean=True):
        K = int(cutoff)
        ids = [(k, l, 0) for k in range(-K, K + 1) for l in range(-K, K + 1)]
        if include_mean:
            ids.append((0, 0, 1))
        else:
            ids.remove((0, 0, 0))
        return ModeSet(self, ids)

    def inverse_power_sum(self, rho):
        if rho <= 0.5:
            raise DomainError(f"sum |lambda|^(-2 rho) diverges for NS at rho={rho}")
        return _ns_power_sum(self.eta, float(rho))

    def grid(self, n):
        n = int(n)
        return PhysicalGrid(self.kind, (n, n))

    def grid_for(self, band, factor=2):
        return self.grid(2 * factor * band + 2)


@lru_cache(maxsize=64)
def _ks_power_sum(eta, rho, kmax=200_000):
    k = np.arange(1, kmax + 1, dtype=float)
    lam = 16.0 * math.pi**4 * k**4 - 4.0 * math.pi**2 * k**2 + eta
    head = eta ** (-2 * rho) + 2.0 * float(np.sum(lam ** (-2 * rho)))
    # tail k > kmax: integral of (16 pi^4 k^4)^(-2 rho) from kmax + 1/2
    p = 8 * rho - 1
    tail = 2.0 * (16 * math.pi**4) ** (-2 * rho) * (kmax + 0.5) ** (-p) / p
    return head + tail


@lru_cache(maxsize=64)
def _ns_power_sum(eta, rho, radius=1500):
    # lattice sum over k^2 + l^2 <= R^2, then the radial integral for the tail
    total = 2.0 * eta ** (-2 * rho)
    l = np.arange(-radius, radius + 1, dtype=float)
    for k in range(-radius, radius + 1):
        r2 = k * k + l * l
        r2 = r2[(r2 <= radius * radius) & (r2 > 0)]
        total += float(np.sum((eta + 4 * math.pi**2 * r2) ** (-2 * rho)))
    tail = (eta + 4 * math.pi**2 * radius**2) ** (1 - 2 * rho) / (4 * math.pi * (2 * rho - 1))
    return total + tail


def make_basis(kind: str, eta: float = 0.0) -> SpectralBasis:
    if kind == "burgers":
        return BurgersBasis()
    if kind == "ks":
        return KSBasis(eta)
    if kind == "ns2d":
        return NSBasis(eta)
    raise DomainError(f"unknown basis kind {kind!r}; expected one of {KINDS}")


def eigenvalue(basis: SpectralBasis, mode) -> float:
    return basis.eigenvalue(mode)


# ---------------------------------------------------------------------------
# Mode sets and states


class ModeSet:
    """A finite, canonically ordered, duplicate-free set of basis ids."""

    def __init__(self, basis: SpectralBasis, ids=()):
        ids = {basis.validate(m) for m in ids}
        self.basis = basis
        self.ids = tuple(sorted(ids, key=basis.sort_key))

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    def __contains__(self, mode):
        return mode in self.index

    def __eq__(self, other):
        return isinstance(other, ModeSet) and self.basis == other.basis and self.ids == other.ids

    def __hash__(self):
        return hash((self.basis, self.ids))

    def __repr__(self):
        return f"ModeSet({self.basis.kind}, {list(self.ids)})"

    @cached_property
    def index(self):
        return {m: i for i, m in enumerate(self.ids)}

    @cached_property
    def eigenvalues(self):
        return np.array([self.basis.eigenvalue(m) for m in self.ids], dtype=float)

    @property
    def band(self) -> int:
        return max((self.basis.frequency(m) for m in self.ids), default=0)

    def union(self, other: "ModeSet") -> "ModeSet":
        return ModeSet(self.basis, self.ids + other.ids)

    def embed(self, other: "ModeSet"):
        """Index array placing this set's modes inside ``other`` (which must contain them)."""
        try:
            return np.array([other.index[m] for m in self.ids], dtype=int)
        except KeyError as exc:
            raise DomainError(f"mode {exc.args[0]!r} missing from target mode set") from None

    def to_json(self):
        return [self.basis.to_json(m) for m in self.ids]

    @classmethod
    def from_json(cls, basis, values):
        return cls(basis, [basis.from_json(v) for v in values])


@dataclass(frozen=True, eq=False)
class GalerkinState:
    """Coefficients of ``sum_h c_h h`` over a mode set."""

    modes: ModeSet
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape != (len(self.modes),):
            raise ValueError(f"expected {len(self.modes)} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def basis(self):
        return self.modes.basis

    @classmethod
    def zeros(cls, modes):
        return cls(modes, np.zeros(len(modes)))

    @classmethod
    def from_dict(cls, basis, mapping):
        modes = ModeSet(basis, mapping.keys())
        return cls(modes, [mapping[m] for m in modes])

    def coefficient(self, mode):
        i = self.modes.index.get(self.basis.validate(mode))
        return 0.0 if i is None else float(self.coeffs[i])

    def to_dict(self):
        return dict(zip(self.modes.ids, self.coeffs.tolist()))

    def __add__(self, other):
        modes = self.modes.union(other.modes)
        c = np.zeros(len(modes))
        c[self.modes.embed(modes)] += self.coeffs
        c[other.modes.embed(modes)] += other.coeffs
        return GalerkinState(modes, c)

    def __sub__(self, other):
        return self + GalerkinState(other.modes, -other.coeffs)

    def __mul__(self, scalar):
        return GalerkinState(self.modes, scalar * self.coeffs)

    __rmul__ = __mul__


def hnorm_coeffs(coeffs, eigenvalues, r=0.0):
    """``(sum |lambda|^(2r) |c|^2)^(1/2)`` along the last axis."""
    c = np.asarray(coeffs, dtype=float)
    if r == 0:
        return np.sqrt(np.sum(c * c, axis=-1))
    w = np.abs(eigenvalues) ** (2.0 * r)
    return np.sqrt(np.sum(w * c * c, axis=-1))


def hnorm(x: GalerkinState, r: float = 0.0) -> float:
    """Norm of ``x`` in the interpolation space ``H_r`` of ``-A``."""
    return float(hnorm_coeffs(x.coeffs, x.modes.eigenvalues, r))


def project(x: GalerkinState, modes: ModeSet) -> GalerkinState:
    """Orthogonal projection ``P_I`` onto the span of ``modes``."""
    out = np.zeros(len(modes))
    for i, m in enumerate(modes.ids):
        j = x.modes.index.get(m)
        if j is not None:
            out[i] = x.coeffs[j]
    return GalerkinState(modes, out)


def semigroup_apply(x: GalerkinState, t: float) -> GalerkinState:
    """``e^{tA} x``: each coefficient scaled by ``exp(lambda_h t)``."""
    if t < 0:
        raise DomainError(f"semigroup time must be non-negative, got {t}")
    if t == 0:
        return x
    return GalerkinState(x.modes, np.exp(x.modes.eigenvalues * t) * x.coeffs)


# ---------------------------------------------------------------------------
# Grids and transforms


@dataclass(frozen=True)
class PhysicalGrid:
    """Uniform quadrature grid on (0,1)^d.

    Burgers grids use the interior nodes ``j/n, j = 1..n-1`` (basis functions vanish on
    the boundary); periodic grids use ``j/n, j = 0..n-1``. All weights equal ``1/n^d``.
    """

    kind: str
    shape: tuple

    @property
    def n(self):
        return self.shape[0]

    @cached_property
    def axes(self):
        n = self.n
        if self.kind == "burgers":
            return (np.arange(1, n) / n,)
        return tuple(np.arange(m) / m for m in self.shape)

    @cached_property
    def points(self):
        """Node coordinates, shape ``(npoints,)`` in 1D and ``(npoints, 2)`` in 2D."""
        if len(self.axes) == 1:
            return self.axes[0]
        X, Y = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def size(self):
        return len(self.points)

    @cached_property
    def weights(self):
        return np.full(self.size, 1.0 / np.prod(self.shape))

    @property
    def nyquist(self) -> int:
        """Highest per-axis frequency representable on the grid."""
        if self.kind == "burgers":
            return self.n - 1
        return (self.n - 1) // 2

    @property
    def exact_degree(self) -> int:
        """Quadrature is exact for products whose total frequency is below this."""
        return 2 * self.n if self.kind == "burgers" else self.n


class Transform:
    """Cached synthesis/analysis matrices for one (mode set, grid) pair.

    Coefficient arrays may carry leading batch axes; fields have shape
    ``(..., dim, npoints)``.
    """

    def __init__(self, modes: ModeSet, grid: PhysicalGrid):
        basis = modes.basis
        if grid.kind != basis.kind:
            raise ResolutionError(f"grid kind {grid.kind} does not match basis {basis.kind}")
        if modes.band > grid.nyquist:
            raise ResolutionError(
                f"grid with nyquist band {grid.nyquist} cannot represent modes up to {modes.band}"
            )
        self.modes = modes
        self.grid = grid
        ids = list(modes.ids)
        dim = basis.dim
        npts = grid.size
        if ids:
            vals = basis.values(ids, grid.points)
            ders = [basis.derivatives(ids, grid.points, a) for a in range(dim)]
        else:
            vals = np.zeros((0, dim, npts))
            ders = [np.zeros((0, dim, npts)) for _ in range(dim)]
        m = len(ids)
        self.synth = vals.reshape(m, dim * npts)
        self.dsynth = [d.reshape(m, dim * npts) for d in ders]
        self.anal = (vals * grid.weights).reshape(m, dim * npts).T.copy()
        self.dim = dim

    def synthesize(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        f = c @ self.synth
        return f.reshape(c.shape[:-1] + (self.dim, self.grid.size))

    def derivative(self, coeffs, axis):
        c = np.asarray(coeffs, dtype=float)
        f = c @ self.dsynth[axis]
        return f.reshape(c.shape[:-1] + (self.dim, self.grid.size))

    def analyze(self, values):
        f = np.asarray(values, dtype=float)
        lead = f.shape[:-2]
        return f.reshape(lead + (-1,)) @ self.anal


@lru_cache(maxsize=128)
def transform(modes: ModeSet, grid: PhysicalGrid) -> Transform:
    return Transform(modes, grid)


def synthesize(x: GalerkinState, grid: PhysicalGrid) -> np.ndarray:
    """Point values of ``sum c_h h`` at the grid nodes, shape ``(dim, npoints)``."""
    return transform(x.modes, grid).synthesize(x.coeffs)


def analyze(values, modes: ModeSet, grid: PhysicalGrid, band=None) -> GalerkinState:
    """Quadrature coefficients ``<h, f>`` for ``h`` in ``modes``.

    ``band`` declares the field's frequency band; when given, exactness of the
    quadrature for every product ``f h`` is checked.
    """
    tr = transform(modes, grid)
    if band is not None and band + modes.band >= grid.exact_degree:
        raise ResolutionError(
            f"grid exact below total frequency {grid.exact_degree}, "
            f"needed {band + modes.band}"
        )
    values = np.asarray(values, dtype=float).reshape(tr.dim, grid.size)
    return GalerkinState(modes, tr.analyze(values))


def evaluate(x: GalerkinState, points) -> np.ndarray:
    """Point values at arbitrary points (no grid constraints), shape ``(dim, npoints)``."""
    if not len(x.modes):
        pts = np.asarray(points, dtype=float)
        npts = pts.size if x.basis.dim == 1 else pts.reshape(-1, x.basis.dim).shape[0]
        return np.zeros((x.basis.dim, npts))
    return np.einsum("m,mcp->cp", x.coeffs, x.basis.values(list(x.modes.ids), points))


def evaluate_derivative(x: GalerkinState, points, axis=0) -> np.ndarray:
    return np.einsum("m,mcp->cp", x.coeffs, x.basis.derivatives(list(x.modes.ids), points, axis))


def linf_constant(basis: SpectralBasis, rho: float) -> float:
    """Factor ``C`` with ``||v||_Linf <= C ||v||_{H_rho}`` for the full basis."""
    return basis.sup_norm * math.sqrt(basis.inverse_power_sum(rho))


def linf_bound(x: GalerkinState, rho: float) -> float:
    """Upper bound for ``sup |v|`` from the ``H_rho`` norm."""
    return linf_constant(x.basis, rho) * hnorm(x, rho)

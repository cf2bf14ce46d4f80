"""Projected cylindrical Wiener increments and the diagonal covariance ``Q``.

Randomness comes from numpy's counter-based Philox generator keyed by
``(seed, path, purpose)``. Within a path the Gaussian for step ``m`` and mode index ``j``
is the ``m * |J| + j``-th draw, obtained by inverse-CDF from one 64-bit word, so any
increment can be regenerated on its own without replaying the path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .spectral import DomainError, ModeSet

WIENER = 0
INITIAL = 1


class NoiseStream:
    """Per-path Gaussian stream. Never shared between paths."""

    def __init__(self, seed: int, path: int, purpose: int = WIENER):
        if seed < 0 or path < 0:
            raise DomainError("seed and path index must be non-negative")
        self.seed = int(seed)
        self.path = int(path)
        self.purpose = int(purpose)
        self._key = np.random.SeedSequence([self.seed, self.path, self.purpose]).generate_state(
            2, np.uint64
        )

    def raw(self, start: int, count: int) -> np.ndarray:
        bg = np.random.Philox(key=self._key)
        block, lane = divmod(int(start), 4)
        if block:
            bg.advance(block)
        out = bg.random_raw(lane + int(count))
        return out[lane:]

    def normals(self, start: int, count: int) -> np.ndarray:
        u = ((self.raw(start, count) >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
        return ndtri(u)


@dataclass(frozen=True, eq=False)
class WienerIncrement:
    """``W^J_{t1} - W^J_{t0}``: one ``N(0, dt)`` sample per noise mode."""

    modes: ModeSet
    dt: float
    values: np.ndarray = field(repr=False)


def sample_increment(modes: ModeSet, dt: float, stream: NoiseStream, step: int = 0) -> WienerIncrement:
    if not dt > 0:
        raise DomainError(f"increment length must be positive, got {dt}")
    n = len(modes)
    z = stream.normals(step * n, n) if n else np.zeros(0)
    return WienerIncrement(modes, float(dt), np.sqrt(dt) * z)


def path_increments(n_modes: int, dts, stream: NoiseStream) -> np.ndarray:
    """All increments of a path at once, shape ``(steps, n_modes)``."""
    dts = np.asarray(dts, dtype=float)
    if n_modes == 0:
        return np.zeros((len(dts), 0))
    z = stream.normals(0, len(dts) * n_modes).reshape(len(dts), n_modes)
    return np.sqrt(dts)[:, None] * z


class CovarianceSpec:
    """Diagonal ``Q`` on the noise modes: ``Q u = q_u u``."""

    def __init__(self, modes: ModeSet, q, tail: float = 0.0, law=None):
        q = np.array(q, dtype=float).reshape(-1)
        if q.shape != (len(modes),):
            raise DomainError(f"expected {len(modes)} covariance eigenvalues, got {q.size}")
        if np.any(q < 0) or not np.all(np.isfinite(q)):
            raise DomainError("covariance eigenvalues must be finite and non-negative")
        if tail < 0:
            raise DomainError("covariance tail must be non-negative")
        q.setflags(write=False)
        self.modes = modes
        self.q = q
        self.tail = float(tail)
        self.law = law

    @property
    def sqrt_q(self):
        return np.sqrt(self.q)

    @classmethod
    def poly(cls, modes: ModeSet, rate: float, amplitude: float = 1.0, tail: float = 0.0):
        """``q_h = amplitude * max(1, |kappa_h|)^(-rate)`` with ``kappa_h`` the wavenumber."""
        kappa = np.array([_wavenumber(m) for m in modes.ids], dtype=float)
        q = amplitude * np.maximum(1.0, kappa) ** (-float(rate))
        law = {"law": "poly", "rate": rate, "amplitude": amplitude}
        return cls(modes, q, tail, law)

    def to_json(self):
        if self.law is not None:
            out = dict(self.law)
        else:
            out = {"values": self.q.tolist()}
        if self.tail:
            out["tail"] = self.tail
        return out


def _wavenumber(mode):
    if isinstance(mode, tuple):
        return float(np.hypot(mode[0], mode[1]))
    return float(abs(mode))


def apply_sqrtQ(w: WienerIncrement, Q: CovarianceSpec) -> np.ndarray:
    """Noise-space coefficients ``sqrt(Q) w`` on ``Q``'s modes (zero where ``w`` has none)."""
    out = np.zeros(len(Q.modes))
    for i, m in enumerate(Q.modes.ids):
        j = w.modes.index.get(m)
        if j is not None:
            out[i] = np.sqrt(Q.q[i]) * w.values[j]
    return out


def trace_Q(Q: CovarianceSpec) -> float:
    return float(np.sum(Q.q)) + Q.tail

"""Finite partitions of [0, T] with closed/open floor operators."""
from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .spectral import DomainError


@dataclass(frozen=True)
class Partition:
    """Strictly increasing time nodes containing ``0`` and ``T``.

    Node values are stored exactly as given; lookups compare stored values only.
    """

    nodes: tuple

    def __post_init__(self):
        nodes = tuple(float(t) for t in self.nodes)
        if len(nodes) < 2 or nodes[0] != 0.0:
            raise DomainError("a partition needs at least the nodes 0 and T")
        if any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise DomainError("partition nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, T: float, M: int) -> "Partition":
        if M < 1:
            raise DomainError(f"number of steps must be >= 1, got {M}")
        if not T > 0:
            raise DomainError(f"horizon must be positive, got {T}")
        nodes = [m * T / M for m in range(M)] + [float(T)]
        return cls(tuple(nodes))

    @property
    def T(self) -> float:
        return self.nodes[-1]

    @property
    def steps(self) -> int:
        return len(self.nodes) - 1

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.nodes)

    @property
    def mesh(self) -> float:
        """Largest gap between consecutive nodes."""
        return max(b - a for a, b in zip(self.nodes, self.nodes[1:]))

    def _check(self, t):
        if not 0.0 <= t <= self.T:
            raise DomainError(f"time {t} outside [0, {self.T}]")

    def floor_closed(self, t: float) -> float:
        """Largest node ``<= t``."""
        self._check(t)
        return self.nodes[bisect.bisect_right(self.nodes, t) - 1]

    def floor_open(self, t: float) -> float:
        """Largest node ``< t``; zero at ``t = 0``."""
        self._check(t)
        i = bisect.bisect_left(self.nodes, t)
        return self.nodes[max(i - 1, 0)]

    def to_json(self):
        return list(self.nodes)

    @classmethod
    def from_json(cls, spec) -> "Partition":
        if isinstance(spec, dict):
            if set(spec) != {"uniform"}:
                raise DomainError(f"unknown partition keys {sorted(spec)}")
            u = spec["uniform"]
            if set(u) != {"T", "M"}:
                raise DomainError("uniform partition needs exactly the keys T and M")
            return cls.uniform(float(u["T"]), int(u["M"]))
        return cls(tuple(spec))


def mesh(theta: Partition) -> float:
    return theta.mesh


def floor_closed(theta: Partition, t: float) -> float:
    return theta.floor_closed(t)


def floor_open(theta: Partition, t: float) -> float:
    return theta.floor_open(t)


uniform = Partition.uniform

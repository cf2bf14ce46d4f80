"""Experiment configuration: a single strict JSON document.

Every field except ``model.kind`` and ``seed`` has a default, and the canonical form
written by :func:`serialize` lists all of them, so a stored config fully determines
the outputs. Unknown keys are rejected.
"""
from __future__ import annotations

import json
import math
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .models import Diffusion, ModelSpec
from .noise import CovarianceSpec
from .scheme import InitialGaussian
from .spectral import DomainError, GalerkinState, ModeSet, make_basis, project
from .timegrid import Partition

DEFAULT_CUTOFF = {"burgers": 16, "ks": 8, "ns2d": 4}
U64 = 2**64 - 1


class ConfigError(ValueError):
    """Invalid configuration; the message carries dotted field paths."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, strict=True)


class DiffusionConfig(_Strict):
    kind: Literal["additive-identity", "additive-matrix", "nemytskii-rational"] = "additive-identity"
    scale: float = 1.0
    matrix: Optional[List[List[float]]] = None


class PolyLaw(_Strict):
    law: Literal["poly"] = "poly"
    rate: float = 2.0
    amplitude: float = Field(0.5, ge=0)
    tail: float = Field(0.0, ge=0)


class ValuesLaw(_Strict):
    law: Literal["values"] = "values"
    values: List[float]
    tail: float = Field(0.0, ge=0)


QConfig = Union[PolyLaw, ValuesLaw]


class ModelConfig(_Strict):
    kind: Literal["burgers", "ks", "ns2d"]
    gamma: Optional[float] = None
    eta: float = 0.0
    epsilon: float = 1.0
    delta: float = 0.05
    c: Optional[float] = None
    varsigma: Optional[float] = None
    radius: Literal["hypothesis", "footnote", "intro"] = "hypothesis"
    drift: bool = True
    b: DiffusionConfig = DiffusionConfig()
    Q: QConfig = Field(default_factory=PolyLaw, discriminator="law")


class PartitionConfig(_Strict):
    T: float = Field(1.0, gt=0)
    M: int = Field(64, ge=1)
    nodes: Optional[List[float]] = None

    @model_validator(mode="after")
    def _nodes_end_at_T(self):
        if self.nodes is not None and (len(self.nodes) < 2 or self.nodes[-1] != self.T):
            raise ValueError("explicit nodes must end at T")
        return self


class ModesConfig(_Strict):
    """``cutoff`` (``None`` = per-model default) or an explicit ``list``.

    ``mean`` adds the constant mode(s) of the KS and Navier-Stokes bases.
    """

    cutoff: Optional[int] = Field(None, ge=1)
    list: Optional[List[Union[int, List[int]]]] = None
    mean: bool = False

    @model_validator(mode="after")
    def _one_source(self):
        if self.cutoff is not None and self.list is not None:
            raise ValueError("give either cutoff or list, not both")
        return self


class GaussianInit(_Strict):
    """Independent ``N(mean_h, var_h)`` coefficients on ``I``.

    ``var_h = amplitude * max(1, |kappa_h|)^(-rate)`` unless ``variances`` is given.
    """

    kind: Literal["gaussian"] = "gaussian"
    rate: float = 2.0
    amplitude: float = Field(0.05, ge=0)
    variances: Optional[List[float]] = None
    mean: Optional[List[float]] = None


class DeterministicInit(_Strict):
    """Fixed coefficients as ``[mode, value]`` pairs; unspecified modes are zero."""

    kind: Literal["deterministic"] = "deterministic"
    coeffs: List[List[Union[int, float, List[int]]]] = []


InitConfig = Union[GaussianInit, DeterministicInit]


class SweepConfig(_Strict):
    M: List[int] = [32, 64, 128]


class VerifyConfig(_Strict):
    states: int = Field(200, ge=1)
    trials: int = Field(1000, ge=1)
    taming_states: int = Field(500, ge=1)
    fault: Optional[Literal["eigenvalues", "basis"]] = None


class ExperimentConfig(_Strict):
    model: ModelConfig
    seed: int = Field(ge=0, le=U64)
    partition: PartitionConfig = PartitionConfig()
    modes: ModesConfig = ModesConfig()
    noise_modes: Optional[ModesConfig] = None
    initial: InitConfig = Field(default_factory=GaussianInit, discriminator="kind")
    paths: int = Field(2000, ge=1)
    batches: int = Field(20, ge=1)
    threads: Optional[int] = Field(None, ge=1)
    functional: Literal["full", "quadratic"] = "full"
    form: Literal["scheme", "semigroup"] = "scheme"
    out: str = "out"
    dump_paths: int = Field(0, ge=0)
    sweep: SweepConfig = SweepConfig()
    verify: VerifyConfig = VerifyConfig()

    @model_validator(mode="after")
    def _divisible(self):
        if self.paths % self.batches:
            raise ValueError(f"paths ({self.paths}) must be a multiple of batches ({self.batches})")
        return self


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse(doc) -> ExperimentConfig:
    """Validate a JSON string or already-decoded mapping."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"<root>: invalid JSON ({exc})") from None
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical JSON: every field present, keys sorted, two-space indent."""
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def override(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy with top-level fields replaced (values are re-validated)."""
    data = cfg.model_dump(mode="json")
    data.update({k: v for k, v in changes.items() if v is not None})
    return parse(data)


# ---------------------------------------------------------------------------
# Building library objects


class Experiment:
    """Library objects resolved from a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        try:
            self._build(cfg)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def _build(self, cfg):
        mc = cfg.model
        basis = make_basis(mc.kind, mc.eta)
        self.basis = basis
        self.I = _modes(basis, cfg.modes, "modes")
        self.J = _modes(basis, cfg.noise_modes, "noise_modes") if cfg.noise_modes else self.I
        self.theta = (
            Partition(tuple(cfg.partition.nodes))
            if cfg.partition.nodes is not None
            else Partition.uniform(cfg.partition.T, cfg.partition.M)
        )
        q = mc.Q
        if q.law == "poly":
            Q = CovarianceSpec.poly(self.J, q.rate, q.amplitude, q.tail)
        else:
            if len(q.values) != len(self.J):
                raise ConfigError(f"model.Q.values: expected {len(self.J)} entries, got {len(q.values)}")
            Q = CovarianceSpec(self.J, q.values, q.tail)
        b = mc.b
        matrix = tuple(tuple(r) for r in b.matrix) if b.matrix is not None else None
        diffusion = Diffusion(b.kind, b.scale, matrix)
        self.model = ModelSpec(
            mc.kind, Q, gamma=mc.gamma, eta=mc.eta, epsilon=mc.epsilon, delta=mc.delta,
            c=mc.c, diffusion=diffusion, varsigma=mc.varsigma, radius=mc.radius, drift=mc.drift,
        )
        self.xi = _initial(cfg.initial, self.I)

    def with_steps(self, M: int) -> Partition:
        return Partition.uniform(self.theta.T, M)


def _modes(basis, mc: ModesConfig, where) -> ModeSet:
    if mc.list is not None:
        try:
            return ModeSet.from_json(basis, mc.list)
        except DomainError as exc:
            raise ConfigError(f"{where}.list: {exc}") from None
    cutoff = mc.cutoff if mc.cutoff is not None else DEFAULT_CUTOFF[basis.kind]
    if basis.kind == "burgers":
        return basis.modes(cutoff)
    if basis.kind == "ks":
        return basis.modes(cutoff, include_zero=mc.mean)
    return basis.modes(cutoff, include_mean=mc.mean)


def wavenumbers(modes: ModeSet) -> np.ndarray:
    out = []
    for m in modes.ids:
        out.append(math.hypot(m[0], m[1]) if isinstance(m, tuple) else abs(m))
    return np.maximum(1.0, np.array(out, dtype=float))


def _initial(ic, I: ModeSet):
    if ic.kind == "deterministic":
        mapping = {}
        for i, pair in enumerate(ic.coeffs):
            if len(pair) != 2:
                raise ConfigError(f"initial.coeffs.{i}: expected [mode, value]")
            try:
                mode = I.basis.from_json(pair[0])
            except DomainError as exc:
                raise ConfigError(f"initial.coeffs.{i}: {exc}") from None
            if mode not in I:
                raise ConfigError(f"initial.coeffs.{i}: mode {pair[0]!r} is not among the Galerkin modes")
            if mode in mapping:
                raise ConfigError(f"initial.coeffs.{i}: duplicate mode {pair[0]!r}")
            mapping[mode] = float(pair[1])
        if not mapping:
            return GalerkinState.zeros(I)
        return project(GalerkinState.from_dict(I.basis, mapping), I)
    if ic.variances is not None:
        if len(ic.variances) != len(I):
            raise ConfigError(f"initial.variances: expected {len(I)} entries, got {len(ic.variances)}")
        var = np.array(ic.variances, dtype=float)
    else:
        var = ic.amplitude * wavenumbers(I) ** (-ic.rate)
    if ic.mean is not None and len(ic.mean) != len(I):
        raise ConfigError(f"initial.mean: expected {len(I)} entries, got {len(ic.mean)}")
    try:
        return InitialGaussian(I, var, ic.mean)
    except DomainError as exc:
        raise ConfigError(f"initial: {exc}") from None

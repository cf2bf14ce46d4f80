import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spde_tamed.models import (
    RATIONAL_LIPSCHITZ,
    Diffusion,
    GalerkinSystem,
    ModelSpec,
    diffusion_B,
    drift_F,
    hs_norm_B,
    in_taming_set,
    taming_radius,
)
from spde_tamed.noise import CovarianceSpec
from spde_tamed.spectral import BurgersBasis, DomainError, GalerkinState, KSBasis, ModeSet, NSBasis

SQ2 = math.sqrt(2.0)


def burgers(N=8, rate=2.0, amp=0.5, **kw):
    I = BurgersBasis().modes(N)
    return ModelSpec("burgers", CovarianceSpec.poly(I, rate, amp), **kw), I


def ks(K=4, eta=1.0, **kw):
    I = KSBasis(eta).modes(K, include_zero=False)
    return ModelSpec("ks", CovarianceSpec.poly(I, 2.0, 0.1), eta=eta, **kw), I


def ns(K=2, eta=1.0, **kw):
    I = NSBasis(eta).modes(K)
    return ModelSpec("ns2d", CovarianceSpec.poly(I, 2.0, 0.1), eta=eta, gamma=0.6, **kw), I


def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


# -- drift -----------------------------------------------------------------------------


def test_burgers_single_mode_drift():
    # v = a sqrt2 sin(pi x): -v v' = -a^2 pi sin(2 pi x) = -(a^2 pi / sqrt2) e_2
    m, I = burgers(4)
    a = 0.7
    F = drift_F(m, GalerkinState.from_dict(I.basis, {1: a}), I)
    assert F.coefficient(2) == pytest.approx(-math.pi * a * a / SQ2, rel=1e-13)
    for n in (1, 3, 4):
        assert abs(F.coefficient(n)) < 1e-14


def test_burgers_drift_against_quadrature(rng):
    m, I = burgers(10)
    c = rng.standard_normal(len(I))
    x, w = gauss_legendre(400)
    n = np.arange(1, 11)[:, None]
    e = SQ2 * np.sin(math.pi * n * x)
    de = SQ2 * math.pi * n * np.cos(math.pi * n * x)
    v, dv = c @ e, c @ de
    ref = -(e * (v * dv)) @ w
    F = drift_F(m, GalerkinState(I, c), I)
    assert np.allclose(F.coeffs, ref, atol=1e-12)


def test_ks_drift_against_quadrature(rng):
    m, I = ks(5, eta=0.7)
    c = rng.standard_normal(len(I))
    x, w = gauss_legendre(400)
    e, de = [], []
    for k in I.ids:
        arg = 2 * math.pi * abs(k) * x
        if k > 0:
            e.append(SQ2 * np.cos(arg))
            de.append(-SQ2 * 2 * math.pi * k * np.sin(arg))
        else:
            e.append(SQ2 * np.sin(arg))
            de.append(SQ2 * 2 * math.pi * abs(k) * np.cos(arg))
    e, de = np.array(e), np.array(de)
    v, dv = c @ e, c @ de
    ref = 0.7 * c - (e * (v * dv)) @ w
    F = drift_F(m, GalerkinState(I, c), I)
    assert np.allclose(F.coeffs, ref, atol=1e-12)


def test_ns_drift_against_quadrature(rng):
    m, I = ns(2, eta=1.3)
    b = I.basis
    c = rng.standard_normal(len(I))
    x, w = gauss_legendre(48)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    W = np.outer(w, w).ravel()
    ids = list(I.ids)
    h = b.values(ids, pts)
    v = np.einsum("m,mcp->cp", c, h)
    dx = np.einsum("m,mcp->cp", c, b.derivatives(ids, pts, 0))
    dy = np.einsum("m,mcp->cp", c, b.derivatives(ids, pts, 1))
    conv = v[0] * dx + v[1] * dy
    ref = 1.3 * c - np.einsum("mcp,cp,p->m", h, conv, W)
    F = drift_F(m, GalerkinState(I, c), I)
    assert np.allclose(F.coeffs, ref, atol=1e-11)


@pytest.mark.parametrize("make", [burgers, ks, ns], ids=["burgers", "ks", "ns2d"])
def test_coercivity(make, rng):
    m, I = make()
    for _ in range(20):
        x = GalerkinState(I, rng.standard_normal(len(I)) * rng.uniform(0.1, 5))
        F = drift_F(m, x, I)
        lhs = float(np.dot(x.coeffs, F.coeffs))
        target = m.eta * float(np.dot(x.coeffs, x.coeffs))
        scale = np.linalg.norm(x.coeffs) * np.linalg.norm(F.coeffs) + target
        assert abs(lhs - target) <= 1e-12 * scale


def test_single_mode_burgers_drift_vanishes():
    m, _ = burgers(4)
    I = ModeSet(BurgersBasis(), [1])
    F = drift_F(m, GalerkinState(I, [3.0]), I)
    # exact projection is zero; quadrature leaves rounding only
    assert abs(F.coeffs[0]) < 1e-13


def test_drift_switch():
    m, I = burgers(4, drift=False)
    x = GalerkinState(I, [1.0, 2.0, 3.0, 4.0])
    assert np.all(drift_F(m, x, I).coeffs == 0.0)


@pytest.mark.parametrize("make", [burgers, ks, ns], ids=["burgers", "ks", "ns2d"])
@settings(max_examples=25, deadline=None)
@given(scale=st.floats(0.01, 20.0), seed=st.integers(0, 2**32 - 1))
def test_growth_bound(make, scale, seed):
    m, I = make()
    system = GalerkinSystem(m, I, I)
    c = np.random.default_rng(seed).standard_normal(len(I))
    c *= scale / np.linalg.norm(c)
    assert np.linalg.norm(system.drift(c)) <= system.growth_bound(c) * (1 + 1e-12)


# -- diffusion -------------------------------------------------------------------------------


def test_additive_identity_noise_is_diagonal(rng):
    m, I = burgers(6)
    J = BurgersBasis().modes(8)
    Q = CovarianceSpec.poly(J, 2.0, 0.5)
    m = ModelSpec("burgers", Q)
    w = rng.standard_normal(len(J))
    out = diffusion_B(m, GalerkinState.zeros(I), w, I, J)
    assert np.allclose(out.coeffs, np.sqrt(Q.q[:6]) * w[:6], rtol=1e-15)
    assert np.all(diffusion_B(m, GalerkinState.zeros(I), np.zeros(len(J)), I, J).coeffs == 0)


def test_additive_matrix_ns(rng):
    I = NSBasis(1.0).modes(1)
    Q = CovarianceSpec.poly(I, 2.0, 0.1)
    m = ModelSpec("ns2d", Q, eta=1.0, gamma=0.6, diffusion=Diffusion("additive-matrix", matrix=((2.0, 0.0), (0.0, 2.0))))
    w = rng.standard_normal(len(I))
    out = diffusion_B(m, GalerkinState.zeros(I), w, I, I)
    assert np.allclose(out.coeffs, 2 * np.sqrt(Q.q) * w, atol=1e-13)
    assert m.theta == pytest.approx(4 * m.trace_q)


def test_nemytskii_against_dense_quadrature(rng):
    m, I = burgers(8, diffusion=Diffusion("nemytskii-rational", scale=1.0))
    c = rng.standard_normal(len(I))
    c *= 1.0 / np.linalg.norm(c)
    w = rng.standard_normal(len(I))
    x, wq = gauss_legendre(800)
    n = np.arange(1, 9)[:, None]
    e = SQ2 * np.sin(math.pi * n * x)
    v = c @ e
    noise = (np.sqrt(m.Q.q) * w) @ e
    ref = e @ (wq * noise / (1 + v * v))
    out = diffusion_B(m, GalerkinState(I, c), w, I, I)
    assert np.max(np.abs(out.coeffs - ref)) < 1e-10


def test_nemytskii_linear_in_noise(rng):
    m, I = ks(3, diffusion=Diffusion("nemytskii-rational", scale=0.5))
    x = GalerkinState(I, rng.standard_normal(len(I)))
    w1, w2 = rng.standard_normal((2, len(I)))
    a = diffusion_B(m, x, w1 + 2 * w2, I, I).coeffs
    b = diffusion_B(m, x, w1, I, I).coeffs + 2 * diffusion_B(m, x, w2, I, I).coeffs
    assert np.allclose(a, b, atol=1e-14)


def test_hs_norm_additive_equals_sqrt_theta():
    for make in (burgers, ks, ns):
        m, I = make()
        assert hs_norm_B(m, GalerkinState.zeros(I), I, I) == pytest.approx(math.sqrt(m.theta), rel=1e-13)


def test_hs_norm_column_oracle(rng):
    m, I = burgers(6, diffusion=Diffusion("nemytskii-rational", scale=1.0))
    x = GalerkinState(I, rng.standard_normal(len(I)))
    cols = [diffusion_B(m, x, np.eye(len(I))[j], I, I).coeffs for j in range(len(I))]
    ref = math.sqrt(sum(float(np.dot(c, c)) for c in cols))
    assert hs_norm_B(m, x, I, I) == pytest.approx(ref, rel=1e-12)
    assert hs_norm_B(m, x, I, I) <= math.sqrt(m.theta)


def test_rational_lipschitz_constant():
    y = np.linspace(0, 5, 200001)
    assert np.max(np.abs(-2 * y / (1 + y * y) ** 2)) == pytest.approx(RATIONAL_LIPSCHITZ, rel=1e-9)


def test_diffusion_validation():
    with pytest.raises(DomainError):
        Diffusion("cubic")
    with pytest.raises(DomainError):
        Diffusion("additive-matrix")
    with pytest.raises(DomainError):
        Diffusion("additive-identity", matrix=((1.0,),))
    I = NSBasis(1.0).modes(1)
    with pytest.raises(DomainError):
        ModelSpec("ns2d", CovarianceSpec.poly(I, 2, 1), eta=1.0, diffusion=Diffusion("additive-matrix", matrix=((1.0,),)))
    assert Diffusion("additive-matrix", matrix=((3.0, 4.0), (0.0, 0.0))).sup_norm(2) == pytest.approx(5.0)


# -- model constants and validation --------------------------------------------------------------


def test_defaults_and_constants():
    m, I = burgers(8, epsilon=1.0)
    assert m.gamma == 0.5
    assert m.varsigma == m.delta
    assert m.theta == pytest.approx(0.5 * sum(n**-2.0 for n in range(1, 9)))
    assert m.c == 2.0
    assert m.rho == pytest.approx(2 * m.theta)
    assert m.vbar == pytest.approx(-m.theta)
    assert m.b2 == 0.0
    mk, _ = ks(eta=0.5)
    assert mk.b2 == 0.5 and mk.gamma == 0.25
    assert mk.growth_constant == pytest.approx(5 * 0.5**-0.25)


def test_c_min_with_large_epsilon():
    m, _ = burgers(8, epsilon=3.0)
    assert m.c == pytest.approx(2 * max(1, 3 * math.sqrt(m.theta), 3))


@pytest.mark.parametrize(
    "kw",
    [
        {"delta": 0.0},
        {"delta": 1 / 18},
        {"epsilon": 0.0},
        {"gamma": 0.4},
        {"eta": 1.0},
        {"c": 1.0},
        {"varsigma": 0.2},
        {"radius": "other"},
    ],
)
def test_burgers_validation(kw):
    with pytest.raises(DomainError):
        burgers(4, **kw)


def test_other_validation():
    with pytest.raises(DomainError):
        ModelSpec("ns2d", CovarianceSpec.poly(NSBasis(1.0).modes(1), 2, 1), eta=1.0, gamma=0.5)
    with pytest.raises(DomainError):
        ks(radius="footnote")
    with pytest.raises(DomainError):
        ks(radius="intro")
    with pytest.raises(DomainError):
        ModelSpec("heat", CovarianceSpec.poly(BurgersBasis().modes(2), 2, 1))
    with pytest.raises(DomainError):
        ModelSpec("ks", CovarianceSpec.poly(BurgersBasis().modes(2), 2, 1), eta=1.0)


# -- taming radius --------------------------------------------------------------------------------


def test_radius_at_zero():
    m, I = burgers(4)
    assert taming_radius(m, GalerkinState.zeros(I)) == pytest.approx(math.sqrt(m.theta), rel=1e-15)


def test_radius_burgers_formula(rng):
    m, I = burgers(4)
    x = GalerkinState(I, rng.standard_normal(4))
    h0 = np.linalg.norm(x.coeffs)
    hg2 = sum((math.pi * n) ** 2 * c * c for n, c in zip(range(1, 5), x.coeffs))
    ref = max(math.sqrt(m.theta) + h0 * h0, hg2 / math.sqrt(3))
    assert taming_radius(m, x) == pytest.approx(ref, rel=1e-13)


def test_footnote_radius(rng):
    m, I = burgers(4, radius="footnote")
    x = GalerkinState(I, rng.standard_normal(4))
    k = 2 * max(1, math.sqrt(m.trace_q))
    h = sum((math.pi * n) ** 2 * c * c for n, c in zip(range(1, 5), x.coeffs))
    assert taming_radius(m, x) == pytest.approx(k + k * h, rel=1e-13)


def test_intro_radius(rng):
    m, I = burgers(4, radius="intro")
    x = GalerkinState(I, rng.standard_normal(4))
    h = sum((math.pi * n) ** 2 * c * c for n, c in zip(range(1, 5), x.coeffs))
    assert taming_radius(m, x) == pytest.approx(1 + h, rel=1e-13)


def test_in_taming_set():
    m, I = burgers(4)
    h = 1 / 64
    assert in_taming_set(m, GalerkinState.zeros(I), h, I)
    assert not in_taming_set(m, GalerkinState(I, [10.0, 0, 0, 0]), h, I)
    outside = GalerkinState.from_dict(I.basis, {6: 0.01})
    assert not in_taming_set(m, outside, h, I)
    with pytest.raises(DomainError):
        in_taming_set(m, GalerkinState.zeros(I), 0.0, I)
    assert m.threshold(h) == pytest.approx(2 * 64**0.05)

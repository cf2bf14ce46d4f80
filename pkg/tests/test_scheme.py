import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spde_tamed.models import ModelSpec
from spde_tamed.noise import CovarianceSpec, NoiseStream, sample_increment
from spde_tamed.scheme import (
    ContractError,
    InitialGaussian,
    integral_weights,
    path_noise,
    simulate_path,
    simulate_paths,
    step,
    tame,
    tame_coeffs,
)
from spde_tamed.spectral import BurgersBasis, GalerkinState, KSBasis, ModeSet, semigroup_apply
from spde_tamed.timegrid import Partition, uniform


def burgers(N=8, amp=0.5, **kw):
    I = BurgersBasis().modes(N)
    return ModelSpec("burgers", CovarianceSpec.poly(I, 2.0, amp), **kw), I


# -- taming ------------------------------------------------------------------------------


@settings(max_examples=200)
@given(arrays(np.float64, 6, elements=st.floats(-1e6, 1e6)))
def test_tamed_norm_at_most_half(w):
    assert np.linalg.norm(tame_coeffs(w)) <= 0.5 + 1e-15


def test_tame_examples():
    b = BurgersBasis()
    x = GalerkinState(b.modes(2), [0.6, 0.8])
    assert np.allclose(tame(x).coeffs, [0.3, 0.4])
    assert np.all(tame(GalerkinState.zeros(b.modes(2))).coeffs == 0)


# -- single-mode OU oracle -----------------------------------------------------------------


def ou_reference(model, theta, y0, dW):
    """Closed-form tamed update for one Burgers mode (the projected drift vanishes)."""
    lam = -math.pi**2
    q = float(model.Q.q[0])
    thr = model.threshold(theta.mesh)
    ys = [y0]
    y = y0
    for m in range(theta.steps):
        dt = theta.nodes[m + 1] - theta.nodes[m]
        r = max(math.sqrt(model.theta) + model.epsilon * y * y, math.pi**2 * y * y / math.sqrt(3))
        g = math.sqrt(q) * dW[m]
        inc = g / (1 + g * g) if r <= thr else 0.0
        y = math.exp(lam * dt) * (y + inc)
        ys.append(y)
    return np.array(ys)


@pytest.mark.parametrize("y0", [0.0, 0.3, 1.5])
def test_single_mode_ou_matches_closed_form(y0):
    I = ModeSet(BurgersBasis(), [1])
    model = ModelSpec("burgers", CovarianceSpec(I, [0.8]))
    theta = uniform(1.0, 1000)
    xi = GalerkinState(I, [y0])
    traj = simulate_path(model, theta, I, I, xi, seed=4, path=0)
    dW = path_noise(I, theta, 4, 0)[:, 0]
    ref = ou_reference(model, theta, y0, dW)
    assert np.max(np.abs(traj.states[0, :, 0] - ref)) <= 1e-14


# -- formulations and the stepper ---------------------------------------------------------


@pytest.mark.parametrize("kind", ["burgers", "ks"])
def test_scheme_forms_agree(kind):
    if kind == "burgers":
        model, I = burgers(8)
    else:
        I = KSBasis(1.0).modes(4, include_zero=False)
        model = ModelSpec("ks", CovarianceSpec.poly(I, 4.0, 0.1), eta=1.0)
    xi = InitialGaussian(I, 0.002 * np.ones(len(I)))
    theta = uniform(1.0, 64)
    a = simulate_path(model, theta, I, I, xi, 3, 0, form="scheme")
    b = simulate_path(model, theta, I, I, xi, 3, 0, form="semigroup")
    assert np.max(np.abs(a.states - b.states)) <= 1e-14 * (1 + np.max(np.abs(a.states)))
    assert np.array_equal(a.inside, b.inside)


def test_step_matches_batch():
    model, I = burgers(6)
    theta = uniform(0.5, 8)
    xi = GalerkinState(I, [0.2, -0.1, 0.05, 0, 0, 0.01])
    traj = simulate_path(model, theta, I, I, xi, seed=1)
    stream = NoiseStream(1, 0)
    Y = xi
    for m in range(theta.steps):
        t0, t1 = theta.nodes[m], theta.nodes[m + 1]
        dW = sample_increment(I, t1 - t0, stream, step=m)
        Y = step(model, theta, Y, t0, t1, dW, I)
        assert np.allclose(Y.coeffs, traj.states[0, m + 1], rtol=0, atol=1e-15)


def test_dense_output_between_nodes():
    from spde_tamed.models import drift_F
    from spde_tamed.noise import WienerIncrement

    model, I = burgers(4)
    theta = uniform(1.0, 4)
    Y = GalerkinState(I, [0.1, 0.05, 0.0, 0.0])
    out = step(model, theta, Y, 0.0, 0.1, WienerIncrement(I, 0.1, np.zeros(4)), I)
    ref = np.exp(I.eigenvalues * 0.1) * (Y.coeffs + 0.1 * drift_F(model, Y, I).coeffs)
    assert np.allclose(out.coeffs, ref, rtol=1e-15, atol=1e-17)


def test_step_contracts():
    model, I = burgers(4)
    theta = uniform(1.0, 4)
    Y = GalerkinState.zeros(I)
    dW = sample_increment(I, 0.25, NoiseStream(2, 0))
    with pytest.raises(ContractError):
        step(model, theta, Y, 0.25, 0.25, dW, I)
    with pytest.raises(ContractError):
        step(model, theta, Y, 0.0, 0.5, dW, I)
    with pytest.raises(ContractError):
        step(model, theta, Y, 0.0, 0.2, dW, I)
    with pytest.raises(ContractError):
        step(model, theta, Y, 0.0, 0.25, sample_increment(BurgersBasis().modes(3), 0.25, NoiseStream(2, 0)), I, I)
    wide = GalerkinState.from_dict(I.basis, {7: 1.0})
    with pytest.raises(ContractError):
        step(model, theta, wide, 0.0, 0.25, dW, I)


def test_outside_taming_set_is_bare_semigroup():
    model, I = burgers(4)
    theta = uniform(1.0, 4)
    Y = GalerkinState(I, [5.0, 0, 0, 0])
    assert taming_outside(model, Y, theta)
    dW = sample_increment(I, 0.25, NoiseStream(2, 0))
    out = step(model, theta, Y, 0.0, 0.25, dW, I)
    assert np.array_equal(out.coeffs, semigroup_apply(Y, 0.25).coeffs)


def taming_outside(model, Y, theta):
    from spde_tamed.models import taming_radius

    return taming_radius(model, Y) > model.threshold(theta.mesh)


def test_zero_noise_zero_initial_stays_zero():
    I = BurgersBasis().modes(8)
    model = ModelSpec("burgers", CovarianceSpec(I, np.zeros(8)))
    traj = simulate_path(model, uniform(1.0, 32), I, I, GalerkinState.zeros(I), seed=0)
    assert np.all(traj.states == 0)
    assert np.all(traj.inside)


def test_nonuniform_partition_runs():
    model, I = burgers(4)
    theta = Partition((0.0, 0.1, 0.15, 0.5, 1.0))
    traj = simulate_path(model, theta, I, I, GalerkinState(I, [0.1, 0, 0, 0]), seed=0)
    assert traj.states.shape == (1, 5, 4)


# -- reproducibility ------------------------------------------------------------------------------


def test_paths_reproducible_and_independent():
    model, I = burgers(6)
    xi = InitialGaussian(I, 0.01 * np.ones(6))
    theta = uniform(1.0, 16)
    a = simulate_path(model, theta, I, I, xi, seed=9, path=2)
    b = simulate_path(model, theta, I, I, xi, seed=9, path=2)
    c = simulate_path(model, theta, I, I, xi, seed=9, path=3)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)
    # batching changes BLAS kernels, so agreement is to rounding only
    batch = simulate_paths(model, theta, I, I, xi, 9, [2, 3])
    assert np.allclose(batch.states[0], a.states[0], rtol=0, atol=1e-14)
    assert np.allclose(batch.states[1], c.states[0], rtol=0, atol=1e-14)


def test_accumulator_tracks_indicator():
    model, I = burgers(6)
    theta = uniform(1.0, 16)
    traj = simulate_path(model, theta, I, I, InitialGaussian(I, 0.5 * np.ones(6)), seed=1)
    w = model.vbar * integral_weights(theta.array, model.rho)
    ref = np.concatenate([[0.0], np.cumsum(np.where(traj.inside[0, :-1], w, 0.0))])
    assert np.allclose(traj.accumulator[0], ref, rtol=1e-14, atol=0)


def test_integral_weights_against_quadrature():
    t = np.array([0.0, 0.1, 0.35, 1.0])
    rho = 1.7
    w = integral_weights(t, rho)
    for k in range(3):
        ref = float(mpmath.quad(lambda s: mpmath.exp(-rho * s), [t[k], t[k + 1]]))
        assert w[k] == pytest.approx(ref, rel=1e-14)
    assert np.allclose(integral_weights(t, 0.0), np.diff(t))


# -- initial laws -------------------------------------------------------------------------------


def test_gaussian_mgf_against_quadrature():
    I = BurgersBasis().modes(2)
    xi = InitialGaussian(I, [0.1, 0.04], mean=[0.3, 0.0])
    eps = 1.2

    def one(mu, v):
        f = lambda z: mpmath.exp(eps * (mu + mpmath.sqrt(v) * z) ** 2 - z * z / 2) / mpmath.sqrt(2 * mpmath.pi)
        return mpmath.log(mpmath.quad(f, [-mpmath.inf, mpmath.inf]))

    ref = float(one(0.3, 0.1) + one(0.0, 0.04))
    assert xi.log_mgf_sq_norm(eps) == pytest.approx(ref, rel=1e-12)
    assert xi.log_mgf_sq_norm(eps, ModeSet(I.basis, [2])) == pytest.approx(float(one(0.0, 0.04)), rel=1e-12)
    assert InitialGaussian(I, [1.0, 1.0]).log_mgf_sq_norm(0.5) == math.inf


def test_gaussian_samples():
    I = BurgersBasis().modes(3)
    xi = InitialGaussian(I, [0.04, 0.01, 0.0], mean=[1.0, 0.0, 2.0])
    from spde_tamed.scheme import initial_states

    Y = initial_states(xi, I, 5, range(4000))
    assert np.all(Y[:, 2] == 2.0)
    assert abs(Y[:, 0].mean() - 1.0) < 3 * 0.2 / math.sqrt(4000)
    assert abs(Y[:, 1].var() - 0.01) < 3 * 0.01 * math.sqrt(2 / 4000)


def test_gaussian_validation():
    I = BurgersBasis().modes(2)
    with pytest.raises(ValueError):
        InitialGaussian(I, [0.1])
    with pytest.raises(ValueError):
        InitialGaussian(I, [0.1, -0.1])

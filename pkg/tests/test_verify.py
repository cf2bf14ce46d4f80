import pathlib

import pytest

from spde_tamed.config import Experiment, load, override
from spde_tamed.verify import report, run_suite

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


def experiment(name, **changes):
    cfg = load(CONFIGS / f"{name}.json")
    cfg = override(cfg, verify={"states": 30, "trials": 200, "taming_states": 40}, **changes)
    return Experiment(cfg)


@pytest.mark.parametrize("name", ["burgers", "ks", "ns2d", "zero"])
def test_suite_passes(name):
    checks = run_suite(experiment(name))
    failed = [(c.name, c.residual, c.tolerance) for c in checks if not c.passed]
    assert not failed
    assert report(checks)["passed"] is True


@pytest.mark.parametrize("b", ["nemytskii-rational", "additive-matrix"])
def test_suite_passes_other_diffusions(b):
    cfg = load(CONFIGS / "burgers.json")
    model = cfg.model.model_dump(mode="json")
    diffusion = {"kind": b, "scale": 0.7}
    if b == "additive-matrix":
        diffusion["matrix"] = [[0.5]]
    model.update(b=diffusion)
    cfg = override(cfg, model=model, modes={"cutoff": 8},
                   verify={"states": 30, "trials": 200, "taming_states": 40})
    assert report(run_suite(Experiment(cfg)))["passed"] is True


def test_divergence_check_present_for_ns():
    checks = {c.name: c for c in run_suite(experiment("ns2d"))}
    assert checks["divergence_free"].residual <= 1e-10
    assert "divergence_free" not in {c.name for c in run_suite(experiment("burgers"))}


@pytest.mark.parametrize("name", ["burgers", "ks", "ns2d"])
def test_eigenvalue_fault_is_detected(name):
    checks = run_suite(experiment(name), fault="eigenvalues")
    assert {c.name for c in checks if not c.passed} == {"eigenvalues"}


def test_basis_fault_is_detected():
    checks = run_suite(experiment("burgers"), fault="basis")
    failed = {c.name for c in checks if not c.passed}
    assert {"orthonormality", "eigenvalues"} <= failed


def test_report_json():
    doc = report(run_suite(experiment("zero")))
    assert set(doc) >= {"passed", "checks"}
    assert all(isinstance(c["residual"], float) for c in doc["checks"])

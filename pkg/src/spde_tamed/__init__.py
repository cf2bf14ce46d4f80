"""Tamed exponential Euler spectral Galerkin simulation of semilinear SPDEs."""
from .lyapunov import (
    BoundLog,
    LyapunovSpec,
    MomentEstimate,
    V,
    Vbar,
    drift_condition_residual,
    exponent_functional,
    generator_V,
    log_initial_moment,
    mc_estimate,
    model_bound,
    moment_bound_log,
)
from .models import (
    Diffusion,
    GalerkinSystem,
    ModelSpec,
    diffusion_B,
    drift_F,
    hs_norm_B,
    in_taming_set,
    taming_radius,
)
from .noise import CovarianceSpec, NoiseStream, WienerIncrement, sample_increment
from .scheme import (
    ContractError,
    InitialGaussian,
    Trajectory,
    simulate_path,
    simulate_paths,
    step,
    tame,
)
from .spectral import (
    BurgersBasis,
    DomainError,
    GalerkinState,
    KSBasis,
    ModeSet,
    NSBasis,
    ResolutionError,
    analyze,
    evaluate,
    hnorm,
    linf_bound,
    make_basis,
    project,
    semigroup_apply,
    synthesize,
)
from .timegrid import Partition, floor_closed, floor_open, mesh

__version__ = "0.1.0"

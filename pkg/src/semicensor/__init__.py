"""Non-homogeneous semi-Markov interval censoring of point processes."""

from .censoring import CensoringModel, Mark, MarkSample
from .exceptions import (
    ConvergenceError,
    DomainError,
    ExplosionError,
    QuadratureError,
    SamplingError,
    ValidationError,
)
from .ground import GroundModel, StepFunction
from .inference import (
    CensoringParams,
    IntervalSet,
    ModelSpec,
    fit_homogeneous,
    fit_mle,
    log_likelihood,
    sample_conditional,
)
from .kernels import GammaKernel, HarmonicExponential, WeibullKernel, kernel_from_dict
from .semimarkov import RenewalDensity, Trajectory, estimate_renewal, simulate

__version__ = "0.1.0"

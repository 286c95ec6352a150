"""MCMC for targets concentrated near an implicitly defined constraint surface.

The chain samples an augmented target: the soft (off-surface) density and
the surface density weighted by the gradient factor, glued together with
label-switching jump moves whose acceptance stays bounded away from zero as
the softness parameter shrinks.
"""

from .analysis import (
    AutocovarianceResult,
    BinRatioReport,
    DegenerateSeries,
    IactResult,
    QuadratureGrid,
    WindowNotFound,
    autocovariance,
    bin_ratio_report,
    integrated_autocorrelation_time,
    marginal_density_x1,
)
from .geometry import (
    ConstraintModel,
    RankDeficient,
    TangentFrame,
    decompose,
    gradient_factor,
    projection_jacobian,
    tangent_frame,
)
from .models import (
    DegenerateProjection,
    EllipsoidSphereModel,
    LinearModel,
    TwoSpheresModel,
    theta_coordinate,
)
from .moves import (
    Proposal,
    SamplerConfig,
    acceptance_probability,
    density_f1,
    density_f2,
    log_acceptance_ratio,
    propose_hard,
    propose_off,
    propose_on,
    propose_soft,
)
from .projection import (
    NewtonSettings,
    ProjectionResult,
    ProjectionStatus,
    newton_project,
    reverse_check_off,
    reverse_check_surface,
)
from .sampler import (
    ChainDiagnostics,
    ChainState,
    InitializationFailure,
    SampleLog,
    StepRecord,
    extract_soft_samples,
    flat_exactness_deviation,
    run,
    run_chains,
    step,
)

__version__ = "0.1.0"

"""Random object mediation analysis with kernel regressions.

Typical use::

    from roma import gaussian, select, fit, estimate_nde, infer

    sel = select(x, m, y, gaussian("euclidean"), gaussian("wasserstein"))
    f = fit(x, m, y, **sel.fit_kwargs())
    nde = estimate_nde(f, 1.0, 0.0)
    res = infer(f, 1.0, 0.0)
"""
from .errors import (
    ConfigError,
    DataError,
    DegenerateContrastError,
    DegenerateDataError,
    DegenerateSpectrumError,
    DimensionError,
    NumericalError,
    RegularizationTooSmall,
    RomaError,
    SaturatedModelError,
    TuningFailedError,
    VarianceEstimateWarning,
)
from .estimator import (
    MediationFit,
    counterfactual_mean,
    estimate_nde,
    estimate_nie,
    estimate_te,
    fit,
    predict_outcome,
    predict_phi,
    with_regularization,
)
from .inference import (
    ci_nde,
    ci_nie,
    infer,
    residual_covariances,
    test_nde,
    test_nie,
    variance_functional_x,
    variance_functional_z,
    weighted_chisq_cdf,
)
from .kernels import KernelSpec, bandwidth_grid, distance_induced, gaussian, gram, linear
from .object_spaces import (
    Composition,
    EmpiricalDistribution,
    Euclidean,
    HilbertVector,
    MetricKind,
    PointCloud,
    QuantileGrid,
    SpdMatrix,
)
from .simulation import CampaignConfig, ScenarioSpec, generate, run_campaign, true_effects
from .tuning import Selection, select

__version__ = "0.1.0"

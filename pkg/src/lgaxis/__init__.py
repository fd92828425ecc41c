"""Locate LG-mode optical axes from coincidence scans and evaluate CHSH tests.

Importing the package is cheap; numba kernels compile lazily on first use.
Set ``LGAXIS_NUMBA=0`` to run every kernel through its numpy implementation.
"""
from .chsh import (
    CANONICAL,
    ChshSettings,
    CorrelationSet,
    CountQuad,
    angle_coincidence_probability,
    correlation_from_counts,
    correlations_from_quads,
    optimal_radius,
    perp,
    predict_s,
    predicted_correlations,
    s_value,
    simulate_chsh_counts,
    visibility,
)
from .errors import (
    AmbiguousExtremumError,
    ComputationError,
    DegenerateInputError,
    FitFailureError,
    InconclusiveDisambiguationError,
    LgAxisError,
    ValidationError,
    ZeroTotalError,
)
from .estimator import (
    ExtremaReport,
    GeometryCandidate,
    GeometryFit,
    asymmetry,
    disambiguate,
    estimate_axis,
    fit_geometry,
    locate_extrema,
)
from .forward import (
    DEFAULT_DWELL,
    DEFAULT_SEED,
    NINE_POSE_SERIES,
    REFERENCE_GRID,
    EfficiencyProfile,
    ExperimentConfig,
    ScanGrid,
    ScanMap,
    analytic_map,
    coincidence_probability,
    coincidence_probability_oracle,
    efficiency,
    expected_rate,
    extremum_poses,
    min_max_distance,
    noiseless_scan,
    reference_scenario,
    pose_series_maps,
    shift_hologram_b,
    simulate_scan,
)
from .lg import (
    BeamGeometry,
    HologramPose,
    LgKet,
    SourceState,
    basis_ket,
    basis_minus,
    basis_plus,
    equal_up_to_phase,
    hologram_output_state,
    inner_product,
    phase_between,
    time_reverse,
    wrap_angle,
)

__version__ = "0.1.0"

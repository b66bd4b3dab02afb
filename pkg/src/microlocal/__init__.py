"""Traces, FBI transforms and wave-front detection for planar complex vector fields ``L = d/dt + a(x, t) d/dx``."""
from .field import (
    Bump,
    Domain,
    PlanarVectorField,
    PointClass,
    TestFunction,
    classify_point,
    detect_F0,
    field_from_dict,
    load_field,
    make_bump,
)
from .first_integral import FirstIntegral, limit_direction, residual_check, solve_series
from .trace import (
    PairingResult,
    PhiTower,
    SampledTrace,
    SolutionSampler,
    TraceFunctional,
    build_phi_tower,
    lt_phi_identity,
    pair_trace,
    uniform_bound_sweep,
)
from .fbi import (
    DecayFit,
    FbiPlan,
    FbiScan,
    WaveFrontReport,
    calibrate_inversion,
    dense_scan,
    fbi_generalized,
    fbi_inverse,
    fbi_transform,
    fit_decay,
    wavefront_report,
)
from .measures import (
    AbsContinuityVerdict,
    BoundaryMeasure,
    Staircase,
    decompose_trace,
    probe_measure,
    restrict_to_F,
    riesz_condition_check,
)
from .presets import PRESET_NAMES, Preset, h_series, preset, wk_derivative, wk_eval
from .quadrature import QuadratureError

__version__ = "0.1.0"

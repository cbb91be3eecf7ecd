"""Numerical laboratory for stationary and uniformly-rotating vortex sheets.

The package desingularizes a sheet configuration into epsilon-thin vortex
layers, solves the associated Poisson problems in mapped coordinates, and
evaluates the first-variation functional whose sign structure separates
relative equilibria from obstructed (non-radial) configurations.
"""

from .birkhoff_rott import (
    BRResidualReport,
    ConstantStrength,
    FourierStrength,
    QuadratureError,
    SemicircleStrength,
    SheetConfiguration,
    StrengthProfile,
    concentricity_residual,
    evaluate_BR,
    kernel_K2,
    one_sided_velocities,
    stationarity_residual,
)
from .elliptic import (
    MappedPoissonProblem,
    PoissonSolution,
    SolverError,
    assemble_and_solve,
    boundary_gradient_check,
    decompose_p,
    make_problem,
    talenti_check,
)
from .functional import (
    EQUILIBRIUM_CONSISTENT,
    INCONCLUSIVE,
    OBSTRUCTED,
    FunctionalReport,
    compute_I,
    positivity_decomposition,
    rigidity_verdict,
)
from .geometry import (
    Frame,
    GeometryError,
    ParamCurve,
    arc_chord_constant,
    enclosed_area,
    make_circle,
    make_fourier_curve,
    make_segment,
    pairwise_distance,
)
from .harness import (
    ConfigError,
    RunArtifact,
    ScenarioSpec,
    build_configuration,
    emit_results,
    fit_rate,
    load_bundled,
    load_scenario,
    run_scenario,
)
from .layer import (
    CertificateError,
    InjectivityCertificate,
    LayerError,
    LayerGrid,
    build_layer,
    injectivity_certificate,
    layer_area,
    layer_velocity,
    linearity_defect,
)

__version__ = "0.1.0"

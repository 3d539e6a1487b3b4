"""Lie-transform normal forms, control terms and dynamical aperture of symplectic maps."""

__version__ = "0.1.0"

from .polyalg import (  # noqa: E402
    COMPLEX,
    REAL,
    HomogeneousPoly,
    PolyVectorField,
    drop_tolerance,
    poly_arith,
    poly_norm,
    symplecticity_check,
    to_complex,
    to_real,
)
from .lie import (  # noqa: E402
    Coordinates,
    GeneratingSequence,
    TruncatedTransform,
    apply_E,
    compose_transforms,
    lie_derivative,
    transform_apply,
    transform_inverse_apply,
)
from .maps import (  # noqa: E402
    MapRepresentation,
    PolyMap,
    RotationSpec,
    extract_generators,
    henon_map,
    load_map,
    realize_map,
    rotation_apply,
)
from .normalform import (  # noqa: E402
    ControlPlan,
    NormalFormResult,
    ResonanceError,
    ResonanceInfo,
    dw_eigenvalue,
    integrable_approximant,
    normalize,
    solve_homological,
    synthesize_control,
)
from .estimates import DivisorTable, EstimateReport, divisor_sequences, estimate_report  # noqa: E402
from .dynamics import (  # noqa: E402
    ApertureResult,
    ConvergenceScan,
    GridSpec,
    LevelCurve,
    apparent_convergence_scan,
    dynamical_aperture,
    invariant_drift,
    iterate,
    level_curve,
)
from .plot import emit_plot  # noqa: E402

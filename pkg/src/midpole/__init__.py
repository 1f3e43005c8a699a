"""Pole placement by multiplicity-induced dominancy for scalar delay equations."""

from .errors import InvalidSystemError, NumericalError
from .quasipoly import (
    HorizontalStrip,
    Polynomial,
    Quasipolynomial,
    degree,
    derivative,
    evaluate,
    exclusion_strip_halfwidth,
    from_feedback,
    from_two_delay_system,
    polya_szego_bounds,
)
from .rootfinding import (
    Rectangle,
    RootCertificate,
    SpectrumResult,
    Tolerances,
    count_roots,
    find_roots,
    spectral_abscissa,
)
from .mid_design import (
    NormalizedSystem,
    OneDelayDesign,
    TwoDelayDesign,
    design_one_delay,
    design_two_delay,
    maximal_multiplicity_coefficients,
    normalize,
    normalized_Q,
    solve_multiplicity_system,
    verify_multiplicity,
)
from .branch_analysis import (
    BranchPoint,
    continue_branch,
    crossing_direction,
    crossing_lambda,
    limit_roots,
    scan_crossings,
)
from .dde_sim import (
    HistoryFunction,
    LinearTwoDelaySystem,
    PlateletModel,
    Trajectory,
    design_platelet_feedback,
    equilibrium,
    estimate_decay_rate,
    linearize_platelet,
    simulate_linear,
    simulate_platelet,
)
from .gain_opt import (
    GainBudget,
    OptimizationResult,
    conjecture_scan,
    optimize_no_delay,
    optimize_one_delay,
    optimize_two_delay_mid,
)

__version__ = "0.1.0"

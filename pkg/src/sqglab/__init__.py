"""Pseudo-spectral dissipative SQG solver with a Littlewood-Paley/Besov toolkit."""

from .evolution import (
    SchemeState,
    SimulationState,
    SolverConfig,
    local_existence_time,
    local_time_functional,
    nonlinear_term,
    run_iterative_scheme,
    run_qg,
    run_td,
    smallness_report,
    smoothing_estimate_probe,
    step_qg,
    step_td,
)
from .exceptions import (
    BlowupError,
    CFLError,
    ConfigurationError,
    DomainError,
    IncompleteLedgerError,
    SnapshotError,
    SQGLabError,
    UndefinedRatioError,
    UnsupportedMapError,
    UnsupportedScaleError,
)
from .fractional import (
    MeasurePreservingMap,
    commutator_frac_composition,
    compose_with_map,
    frac_laplacian_singular_integral,
    frac_laplacian_spectral,
    semigroup_kernel_l1,
    semigroup_spectral,
    vishik_block_transfer,
)
from .littlewood_paley import (
    BesovSpec,
    DyadicFamily,
    TimeSeriesLedger,
    bernstein_ratio,
    besov_norm,
    besov_norm_finite_difference,
    bony_decompose,
    build_family,
    decompose,
    mixed_time_norm,
)
from .spectral import (
    Grid,
    Multiplier,
    PhysicalField,
    SpectralField,
    apply_multiplier,
    forward,
    inverse,
    rescale,
    riesz_velocity,
)

__version__ = "0.1.0"

"""Fermi flow of sampled hypersurface data in model ambients, with comparison
checks, Steiner-type area formulas and explicit existence radii."""

from .ambient import Custom, CurvatureModel, JacobiSolution, PinchedSynthetic, RadialProfile, SpaceForm
from .ambient import curvature_block, jacobi_batch, jacobi_scalar, s_kappa, s_kappa_prime
from .comparison import (
    ComparisonReport,
    ViolatedAt,
    jacobi_field,
    metric_sandwich_check,
    rauch_check,
    riccati_lower_check,
    riccati_upper_check,
)
from .errors import (
    BlowUpDetected,
    FermiFlowError,
    HypothesisViolated,
    InvalidInput,
    NoBracket,
    OutOfDomain,
    OutOfRange,
    SingularMatrix,
)
from .estimates import (
    SteinerCoefficients,
    VolumeBoundInput,
    grad_bound_envelope,
    pinching_check,
    shell_volume,
    steiner_area,
    steiner_eta,
    umbilic_drift_check,
    volume_lower_bound,
)
from .existence import (
    ExistenceInput,
    ExistenceReport,
    eternal_check,
    existence_bounds,
    explicit_jacobi,
    first_zero,
    focal_vs_bound,
    m_param,
)
from .flow import (
    EtaState,
    FlowTrajectory,
    PointState,
    Status,
    Verdict,
    detect_focal,
    evolve_direct,
    evolve_eta,
    evolve_many,
    export_trajectories_csv,
    flow_area,
    focal_distance,
    point_volumes,
    power_sums,
    reconstruct,
)
from .numerics import EigDecomp, bisect_root, gen_eig_bounds, rk4_integrate, sym_eig, sym_inverse
from .surface import (
    InitialSurface,
    SurfacePoint,
    elementary_symmetric,
    pinch_constant,
    preset_surface,
    random_surface,
    read_surface_csv,
    round_sphere,
    shape_operator,
    surface_integral,
)

__version__ = "0.1.0"

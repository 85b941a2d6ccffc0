"""Fisher discriminant and trace-ratio dimension reduction with robust scatter estimates."""
from .classify import (
    ClassifierModel,
    lda_rule,
    nearest_projected_mean_predict,
    nearest_projected_mean_train,
    qda_rule,
    reduced_rank_lda_params,
    robust_projected_predict,
    robust_projected_train,
)
from .contaminate import (
    ContaminationSpec,
    PerturbationReport,
    contaminated_group_moments,
    contaminated_scatter,
    first_order_one_group,
    sample_contaminated,
    tr_perturbation_bound,
)
from .exceptions import (
    InvariantViolation,
    NonUniqueSolutionWarning,
    NumericalError,
    SingularMatrixWarning,
    ValidationError,
)
from .linalg import (
    condition_number,
    gen_eig_spd,
    orthonormalize,
    projector_distance,
    range_projection,
    subspace_angle,
)
from .moments import (
    GroupModel,
    LabeledDataset,
    ScatterPair,
    classical_scatter,
    qn_scale,
    theoretical_scatter,
)
from .reduce import Projection, TrOptions, conjecture_scan, fda, rho_profile, solve_tr, trace_ratio_value
from .robust import RobustConfig, RobustEstimate, fast_mcd, mrcd, robust_scatter
from .sim import ScenarioSpec, StudyConfig, StudyReport, build_scenario, run_study, summarize, theoretical_solutions

__version__ = "0.1.0"

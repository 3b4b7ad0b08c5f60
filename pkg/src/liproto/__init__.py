"""liproto: design toolkit for protograph LDPC codes with local irregularity.

Pipeline: protograph model and degree-distribution algebra
(``protograph``), EXIT threshold analysis (``exit``, ``jfun``,
``capacity``), degree-distribution optimization (``optimize``), lifting
to binary parity-check matrices (``lifting``, ``alist``), and BI-AWGN
Monte Carlo evaluation (``simulate``).  ``cli`` ties them together.
"""

__version__ = "0.1.0"

from .capacity import biawgn_mi, capacity_ebn0_db
from .codes import ar4ja, code_c1, code_c2, load_builtin, normalize_protograph
from .errors import (
    AuditError,
    InfeasibleError,
    InvalidProtographError,
    LiprotoError,
    SchemaError,
)
from .exit import (
    MiState,
    MiTrajectory,
    ThresholdResult,
    find_threshold,
    init_channel_mi,
    irregular_exit_run,
    pexit_run,
)
from .jfun import j_fun, j_fun_quad, j_inv
from .lifting import (
    SparsePcm,
    count_4_cycles,
    lift,
    lift_conventional,
    lift_irregular,
    remove_4_cycles,
)
from .optimize import (
    OptimizationBudget,
    OptimizationRecord,
    optimize_multi_edge,
    optimize_single_edge,
    repair,
    sample_feasible,
)
from .protograph import (
    BaseMatrix,
    EdgePerspectiveDistribution,
    IrregularProtograph,
    LocalDegreeDistribution,
    ValidationReport,
    design_rate,
    joint_realizations,
    load_protograph,
    make_regular,
    quantize_distribution,
    save_protograph,
    to_edge_perspective,
    validate,
)
from .simulate import (
    DecodeResult,
    SimPoint,
    SumProductDecoder,
    ebn0_to_sigma,
    run_sweep,
    spa_decode,
    transmit_all_zero,
)

__all__ = [
    "__version__",
    "AuditError", "InfeasibleError", "InvalidProtographError", "LiprotoError", "SchemaError",
    "BaseMatrix", "EdgePerspectiveDistribution", "IrregularProtograph",
    "LocalDegreeDistribution", "ValidationReport",
    "design_rate", "joint_realizations", "load_protograph", "make_regular",
    "quantize_distribution", "save_protograph", "to_edge_perspective", "validate",
    "ar4ja", "code_c1", "code_c2", "load_builtin", "normalize_protograph",
    "j_fun", "j_fun_quad", "j_inv",
    "biawgn_mi", "capacity_ebn0_db",
    "MiState", "MiTrajectory", "ThresholdResult",
    "find_threshold", "init_channel_mi", "irregular_exit_run", "pexit_run",
    "OptimizationBudget", "OptimizationRecord",
    "optimize_multi_edge", "optimize_single_edge", "repair", "sample_feasible",
    "SparsePcm", "count_4_cycles", "lift", "lift_conventional", "lift_irregular",
    "remove_4_cycles",
    "DecodeResult", "SimPoint", "SumProductDecoder",
    "ebn0_to_sigma", "run_sweep", "spa_decode", "transmit_all_zero",
]

"""Grid laboratory for Schrödinger-adapted weight classes, penalized maximal
operators, stopping-time decompositions and weighted norm inequalities."""

from .construct import Factorization, OmegaMaximal, RdFResult, factorize, rdf_majorant
from .czd import CZDecomposition, covering_check, decompose, verify_czd
from .grid import (
    Cube,
    DyadicLattice,
    GridFunction,
    GridSpec,
    VectorGridFunction,
    cube_average,
    integrate,
    norm,
    read_gfd,
    side_ladder,
    vector_norm_pointwise,
    write_gfd,
)
from .maximal import (
    MaximalConfig,
    maximal,
    maximal_power,
    maximal_vector,
    maximal_weighted,
    sharp_maximal,
)
from .potential import (
    CriticalRadiusField,
    Potential,
    RegularityEstimate,
    ReverseHolderReport,
    check_reverse_holder,
    critical_radius_field,
    fit_regularity,
    psi_ball,
    psi_cube_dyadic,
    regularity_violation,
)
from .verify import (
    InequalityReport,
    PairFamily,
    default_weight_suite,
    extrapolation_suite,
    kolmogorov_check,
    maximal_duality_check,
    measure_operator_norm,
    rdf_properties_check,
    sharp_domination_check,
    t_rho_apply,
    weak_type_check,
)
from .weights import (
    ApReport,
    ExponentBudget,
    Weight,
    ap_constant,
    bmo_norm,
    dual_weight,
    exponent_budget,
    product_a1_check,
)

__version__ = "0.1.0"

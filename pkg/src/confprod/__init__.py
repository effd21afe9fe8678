"""Conformal product metric toolkit.

Pointwise verification and exploration engine for metrics of the form
g = e^{2 f1} g1 + e^{2 f2} g2 on a product chart: exact jet evaluation of
closed-form expressions, closed-form connection/curvature formulas
cross-validated against an independent coordinate curvature oracle, Einstein
residual checks, a conformal splitting construction, residual checkers for
the one-dimensional-base reductions, and a Fourier-parametrized
Einstein-residual search on flat tori.
"""

from .expr import (
    CoordSplit,
    EvalDomainError,
    ExprError,
    ExprSyntaxError,
    Jet,
    ProductPoint,
    ScalarExpr,
    eval_jet,
    eval_value,
    eval_values,
    mixed_d1d2,
    parse,
    split_differential,
    to_text,
)
from .tensors import (
    BlockVector,
    OneFormValue,
    Riemann4Value,
    SingularMetricError,
    Sym2Value,
    curvature_eval,
    flat,
    form_inner,
    rel_residual,
    sharp,
)
from .oracle import (
    CurvatureReport,
    MetricField,
    christoffel,
    curvature_report,
    ricci_oracle,
    riemann_oracle,
    scalar_oracle,
)
from .product import (
    ConformalProductConfig,
    EinsteinConstant,
    HypothesisReport,
    LeeFormValue,
    NotDecomposableError,
    PreconditionError,
    SplitResult,
    SumDecomposition,
    assemble_metric,
    conformal_rescale,
    decompose_sum,
    einstein1_residual,
    einstein_residual,
    hypothesis_check,
    lc_product,
    lee_form,
    oracle_filled_classes,
    ricci_cp,
    riemann_cp,
    scalar_cp,
    theorem_split,
    weyl_compatibility_residual,
)
from .odecase import (
    Case3Config,
    Case3Residuals,
    HypothesisViolationError,
    OrderUnavailableError,
    RationalDegreeTerm,
    TERMS,
    case2_lambda_residual,
    case3_residuals,
    homogeneity_check,
    kderiv_family_residual,
)
from .search import (
    FourierParam,
    MetricDegeneracyError,
    NumericalAbortError,
    SearchConfig,
    SearchTrace,
    fourier_expr,
    minimize,
    objective,
    split_diagnostic,
)
from .scenes import (
    DEFAULT_TOLERANCES,
    Scene,
    SceneError,
    grid_points,
    load_scene,
    random_scene_dict,
    sample_points,
    scene_from_dict,
)

__version__ = "0.1.0"

"""Log-symmetric semiparametric regression for mortality rate tables.

The package models age by period death counts on the log scale with
separate location and dispersion submodels, each mixing parametric
covariates with penalized spline terms, and provides a classical
Poisson log-linear rate model for comparison. Diagnostics cover
quantile residuals, simulated envelopes, AIC-based model comparison,
and component-curve export.
"""

from .data_ingest import (
    MortalityRecord,
    ObservationCell,
    ObservationTable,
    TableMeta,
    aggregate_cells,
    apply_zero_policy,
    make_cell,
    observed_log_rate,
    parse_mortality_csv,
    read_table_csv,
    write_table_csv,
)
from .diagnostics import (
    ComparisonReport,
    EnvelopeResult,
    ModelSummary,
    all_component_curves,
    compare_models,
    export_component_curves,
    log_rate_correlation,
    simulated_envelope,
)
from .errors import (
    ComparisonError,
    DataFormatError,
    DataValidationError,
    EnvelopeError,
    EvaluationError,
    ModelError,
    NumericalError,
    RankDeficiencyError,
    SelectionError,
    SpecificationError,
    UndefinedCorrelationError,
)
from .logsym_family import (
    GeneratorSpec,
    cdf,
    dispersion_info_const,
    logpdf,
    normal_spec,
    sample,
    weight_v,
    weight_v_prime,
)
from .logsym_fit import (
    FitParams,
    LogSymFit,
    ModelSpec,
    SubmodelSpec,
    fit,
    fitted_log_rate,
    penalized_loglik,
    penalized_score,
    residuals,
    select_lambda,
    spec_with_lambdas,
)
from .poisson_glm import (
    PoissonFit,
    deviance_residuals,
    fit_poisson,
    fitted_log_rate_poisson,
    parametric_design,
)
from .specio import (
    PoissonSpec,
    dump_json,
    fit_to_dict,
    load_json,
    model_spec_to_dict,
    parse_model_spec,
    parse_truth_spec,
)
from .spline_bases import BasisBlock, SplineTerm, build_term_block, center_block
from .synthetic import SimulatedTable, TruthSpec, simulate_table, simulated_to_records

__version__ = "0.1.0"

__all__ = [
    "MortalityRecord", "ObservationCell", "ObservationTable", "TableMeta",
    "aggregate_cells", "apply_zero_policy", "make_cell", "observed_log_rate",
    "parse_mortality_csv", "read_table_csv", "write_table_csv",
    "ComparisonReport", "EnvelopeResult", "ModelSummary",
    "all_component_curves", "compare_models", "export_component_curves",
    "log_rate_correlation", "simulated_envelope",
    "ComparisonError", "DataFormatError", "DataValidationError",
    "EnvelopeError", "EvaluationError", "ModelError", "NumericalError",
    "RankDeficiencyError", "SelectionError", "SpecificationError",
    "UndefinedCorrelationError",
    "GeneratorSpec", "cdf", "dispersion_info_const", "logpdf", "normal_spec",
    "sample", "weight_v", "weight_v_prime",
    "FitParams", "LogSymFit", "ModelSpec", "SubmodelSpec", "fit",
    "fitted_log_rate", "penalized_loglik", "penalized_score", "residuals",
    "select_lambda", "spec_with_lambdas",
    "PoissonFit", "deviance_residuals", "fit_poisson",
    "fitted_log_rate_poisson", "parametric_design",
    "PoissonSpec", "dump_json", "fit_to_dict", "load_json",
    "model_spec_to_dict", "parse_model_spec", "parse_truth_spec",
    "BasisBlock", "SplineTerm", "build_term_block", "center_block",
    "SimulatedTable", "TruthSpec", "simulate_table", "simulated_to_records",
    "__version__",
]

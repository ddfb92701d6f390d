"""Column-type inference with probabilistic finite-state machines.

Each candidate type is a PFSM over strings; a column's cells are modelled as
a mixture of its type machine, a missing-value machine and an anomaly
machine.  The package scores columns, labels individual cells, and can fit
machine parameters discriminatively on labelled columns.
"""

from .pfsm import ANY, InvalidParameterError, OracleLimitError, Pfsm, PfsmError, validate
from .regex import RegexError, UnsupportedRegexError, compile_regex
from .machines import CatalogError, MachineCatalog, build_catalog, load_catalog, save_catalog
from .inference import (Column, ColumnAnnotation, InferenceError, TypeSystem, annotate,
                        column_type_posterior, infer_table, row_type_posterior)
from .training import (GradientSet, TrainConfig, TrainingBatch, TrainingError,
                       analytic_gradient, finite_difference_gradient, objective, train)
from .evaluation import (EvalReport, confusion_matrix, evaluate, jaccard, mcnemar,
                         overall_accuracy, paired_ttest, roc_auc)

__version__ = "0.1.0"

__all__ = [
    "ANY", "Pfsm", "PfsmError", "InvalidParameterError", "OracleLimitError", "validate",
    "RegexError", "UnsupportedRegexError", "compile_regex",
    "CatalogError", "MachineCatalog", "build_catalog", "load_catalog", "save_catalog",
    "Column", "ColumnAnnotation", "InferenceError", "TypeSystem", "annotate",
    "column_type_posterior", "infer_table", "row_type_posterior",
    "GradientSet", "TrainConfig", "TrainingBatch", "TrainingError", "analytic_gradient",
    "finite_difference_gradient", "objective", "train",
    "EvalReport", "confusion_matrix", "evaluate", "jaccard", "mcnemar", "overall_accuracy",
    "paired_ttest", "roc_auc",
]

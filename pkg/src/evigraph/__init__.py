"""Version control for variance theories.

Causal hypothesis DAGs, content-addressed datasets, analysis methods,
evidence tuples E(h, d, m), typed evolution edges between them, and the
frontier report saying which hypothesis/method pair the next study
should subscribe to.
"""

from .conclusions import (
    CoefficientsConclusion,
    PosteriorConclusion,
    PValueConclusion,
)
from .dag import (
    HypothesisDag,
    ModelFormula,
    adjustment_sets,
    d_separated,
    derive_formula,
    diff_dags,
    parse_dag,
    testable_implications,
)
from .data import DatasetTable, read_csv, to_csv_bytes, validate_table
from .engine import run_method
from .errors import (
    ConvergenceError,
    DagSyntaxError,
    DagValidationError,
    DataError,
    EvigraphError,
    EvolutionError,
    MethodError,
)
from .evolution import (
    Evidence,
    EvolutionEdge,
    EvolutionGraph,
    FrontierReport,
    add_evidence,
    classify_evolution,
    connect_evidence,
    frontier,
    graph_from_dict,
    graph_to_dict,
    graph_to_dot,
    validate_edge,
)
from .methods import McmcConfig, MethodSpec
from .repo import Repository
from .scenario import ScenarioConfig, generate_scenario, scenario_hypothesis
from .synthesis import (
    AgreementVerdict,
    PooledEffect,
    ReanalysisRecord,
    RevisionVerdict,
    check_agreement,
    combine_pvalues,
    evaluate_revision,
    pool_effects,
    pool_ipd,
    record_reanalysis,
)

__version__ = "0.1.0"

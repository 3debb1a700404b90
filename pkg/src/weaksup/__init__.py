"""weaksup: weak-supervision engine with rule growth and human review.

Weighted rule templates ground into a factor graph over latent labels;
loopy BP infers posteriors; a discriminative predictor trains on them via
variational EM; and the rule set grows by self-training proposals plus
budgeted reviewer queries.
"""

from .corpus import (
    Dataset,
    Instance,
    OracleRuleSet,
    SyntheticConfig,
    Vocabulary,
    build_dataset,
    generate_oracle,
    generate_synthetic,
    load_dataset,
    save_dataset,
    tokenize,
)
from .dpl import DPLConfig, DPLResult, dpl_learn, e_step, m_step_predictor, m_step_weights
from .errors import (
    BudgetExhausted,
    ConfigError,
    DataError,
    GraphSizeError,
    SessionStateError,
    TrainingDiverged,
    WeaksupError,
)
from .estimators import DPLClassifier, S4Classifier
from .eval import Metrics, evaluate
from .evidence import (
    DEFAULT_PRIOR_LAMBDA,
    DEFAULT_WEIGHT,
    W_HARD,
    AtLeastOne,
    CorefJoint,
    DistantSupervision,
    EvidenceSet,
    EvidenceTemplate,
    FeatureUnary,
    GroundedFactor,
    LabelingFunction,
    LabelingFunctionEvidence,
    Predicate,
    SimilarityJoint,
    TokenUnary,
    potential,
    template_from_json,
)
from .factor_graph import (
    BeliefState,
    BPConfig,
    FactorGraph,
    at_least_one_messages,
    build_graph,
    enumerate_exact,
    graph_to_json,
    run_bp,
    supervision_only_expectations,
)
from .predictor import (
    Adam,
    AttnEmbed,
    BowLogistic,
    SoftLabelSet,
    TrainConfig,
    build_module,
    gradient_check,
    load_module,
    save_module,
)
from .s4 import (
    FALQuery,
    S4Config,
    S4Result,
    S4Session,
    ScriptedOracle,
    answer_query,
    candidate_tokens,
    prop_fal,
    prop_sst,
    s4_run,
    score_attention,
    score_entropy,
    score_joint,
    sst_converged,
)

__version__ = "0.1.0"

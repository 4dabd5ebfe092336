"""Scoped learning: global classifiers over iid features combined with
per-locale inference over scope-limited features."""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    CorpusError,
    DimensionMismatch,
    Dims,
    Instance,
    Locale,
    apply_index,
    build_index,
    load_corpus,
    save_corpus,
    validate,
)
from .exact_oracle import OracleCapExceeded, OracleResult, exact_label_posterior, polya_log_marginal
from .global_model import (
    DiscriminativeGlobalModel,
    GenerativeGlobalModel,
    ModelBundle,
    OptimizerError,
    class_prior,
    global_posterior_discriminative,
    global_posterior_generative,
    load_model,
    save_model,
    train_maxent,
    train_naive_bayes,
)
from .scoped_discriminative import (
    LocalConditionalModel,
    cond_e_step,
    cond_em_infer,
    cond_m_step,
    conditional_log_likelihood,
    mutual_information_diagnostic,
)
from .scoped_generative import (
    InferenceConfig,
    LocalParams,
    ScopedResult,
    VariationalState,
    elbo,
    em_e_step,
    em_m_step,
    expected_log_likelihood,
    map_em_infer,
    variational_infer,
    vb_update_gamma,
    vb_update_mu,
)
from .synth import SynthSpec, SynthTruth, sample_corpus
from .evaluation import (
    PRCurve,
    ScoredPrediction,
    average_precision,
    error_reduction_at_recall,
    pr_curve,
    token_accuracy,
)

__all__ = [name for name in dir() if not name.startswith("_")]

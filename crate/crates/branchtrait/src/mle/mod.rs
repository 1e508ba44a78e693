//! Maximum-likelihood estimation of the division-rate parameter from observed
//! (parent, child) trait pairs: rate families, q evaluators, the grid search
//! with refinement, Fisher intervals and the full-tree contrast.

mod contrast;
mod evaluator;
mod family;
mod fisher;
mod likelihood;
mod search;

pub use contrast::{full_tree_contrast, ContrastOptions, ContrastPoint};
pub use evaluator::{
    AuxiliaryPlan, FnEvaluator, McEvaluator, NonparametricEvaluator, QEvaluator, QuadraticEvaluator, SpectralEvaluator,
};
pub use family::{RateFamily, RateShape};
pub use fisher::{fisher_from_scores, fisher_info_estimate, scores, FisherEstimate, FD_STEP, MAX_CONDITION, Z_95};
pub use likelihood::{log_likelihood, sum_log_q, LogLikelihood, FLOOR_WARNING_FRACTION, Q_FLOOR};
pub use search::{grid_mle, GridPlan, MleResult, RefinementLevel, TracePoint};

//! Strong-generalization evaluation: preprocessing, held-out user splits,
//! fold-in scoring and truncated ranking metrics.

mod metrics;
mod preprocess;
mod score;
mod split;

pub use metrics::{mean_and_stderr, ndcg_at_k, rank_top_k, recall_at_k, RankedList};
pub use preprocess::{preprocess, Preprocessed, RawInteraction, Subsample};
pub use score::{evaluate, score_user, EvalReport, Scorer, UserMetrics};
pub use split::{
    default_heldout_users, make_split, read_manifest, write_manifest, EvalSplit, HeldOutUser, Role,
    SplitSpec,
};

/// Cutoffs reported for every evaluation.
pub const RECALL_CUTOFFS: [usize; 2] = [20, 50];
pub const NDCG_CUTOFF: usize = 100;

//! Bayesian stochastic block model inference on multigraphs, with exact
//! description-length computation, missing-link and spurious-link
//! prediction, and an experiment harness contrasting unsupervised
//! (description-length) and supervised (link-prediction AUC) model
//! selection.
//!
//! The crate is organized along the pipeline:
//!
//! * [`graph`]: multigraph representation, edge-list ingestion, and the
//!   edge-removal perturbation process;
//! * [`partition`]: node partitions and their sufficient statistics;
//! * [`model`]: marginal likelihoods, priors, description length, and
//!   posterior odds for the plain and degree-corrected model classes;
//! * [`mcmc`]: posterior sampling over partitions and
//!   maximum-a-posteriori search;
//! * [`predict`]: posterior scores for candidate missing entries and AUC
//!   evaluation;
//! * [`planted`]: planted-partition generators with closed-form
//!   prediction baselines;
//! * [`experiment`]: replicated removal protocols, t statistics,
//!   consistency reports, and sweeps.
//!
//! The `book/` directory of the repository walks through the concepts with
//! runnable examples; every code block there runs under `cargo test --doc`.
//!
//! ```
//! use sbm::{description_length, Multigraph, ModelClass, Partition};
//!
//! let graph = Multigraph::parse_edge_list("0 1\n1 2\n2 0\n")?;
//! let partition = Partition::single_group(3);
//! let sigma = description_length(&graph, &partition, ModelClass::Sbm)?;
//! assert!(sigma > 0.0);
//! # Ok::<(), sbm::Error>(())
//! ```

pub mod error;
pub mod experiment;
pub mod graph;
pub mod math;
pub mod mcmc;
pub mod model;
pub mod partition;
pub mod planted;
pub mod predict;

pub use error::{Error, Result};
pub use graph::{Multigraph, RemovalSplit, RemovedEntry};
pub use mcmc::{
    find_map_partition, sample_posterior, seeded_stream, ChainState, GroupLimits, PosteriorSample,
    SamplerConfig, SearchConfig,
};
pub use model::{
    description_length, log_likelihood, log_prior_partition, posterior_log_odds, ModelClass,
};
pub use partition::{BlockStats, Partition};
pub use planted::{
    auc_theory_inferred, auc_theory_true_model, detectability_threshold, planted_rates,
    sample_canonical, sample_microcanonical, PlantedParams, RateMatrix, RateScorer,
};
pub use predict::{
    evaluate_auc, sample_negatives, score_averaged, score_single_point, AucResult, AveragedScorer,
    Candidate, CandidateKind, NegativeSample, PredictionScore, Scorer,
};

// The guide chapters double as doc-tests so the book can never drift from
// the API. (mdBook itself does not execute Rust blocks.)
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            pub mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(multigraphs, "../../../book/src/multigraphs.md");
    chapter!(blockmodels, "../../../book/src/blockmodels.md");
    chapter!(inference, "../../../book/src/inference.md");
    chapter!(link_prediction, "../../../book/src/link-prediction.md");
    chapter!(
        planted_partitions,
        "../../../book/src/planted-partitions.md"
    );
    chapter!(experiments, "../../../book/src/experiments.md");
    chapter!(cli, "../../../book/src/cli.md");
}

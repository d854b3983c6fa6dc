//! Marginal likelihoods, priors, and description lengths for the two model
//! classes.
//!
//! Both classes use an exactly integrable microcanonical parametrization in
//! which the block edge counts (and, for the degree-corrected variant, the
//! degree sequence) are sufficient statistics:
//!
//! * plain blockmodel: `P(A|e,b) = [prod_{r<s} e_rs! * prod_r e_rr!!] /
//!   [prod_r n_r^{e_r} * prod_{i<j} A_ij! * prod_i A_ii!!]`
//! * degree-corrected: `P(A|k,e,b) = [prod_{r<s} e_rs! * prod_r e_rr!! *
//!   prod_i k_i!] / [prod_r e_r! * prod_{i<j} A_ij! * prod_i A_ii!!]`
//!
//! with uniform priors `P(e|b) = ((B(B+1)/2, E))^-1` over block count
//! matrices, `P(k|e,b) = prod_r ((n_r, e_r))^-1` over degree sequences, and
//! the three-stage partition prior `P(b) = P(B) P(n|B) P(b|n)`. Every factor
//! sums to one over its domain, which the test suite verifies by exhaustive
//! enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Multigraph;
use crate::math::LogFactorial;
use crate::partition::{BlockStats, Partition};

/// The two model classes: the plain blockmodel and its degree-corrected
/// extension, each with the noninformative prior chain described above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    Sbm,
    Dcsbm,
}

impl ModelClass {
    pub const ALL: [ModelClass; 2] = [ModelClass::Sbm, ModelClass::Dcsbm];

    pub fn name(&self) -> &'static str {
        match self {
            ModelClass::Sbm => "sbm",
            ModelClass::Dcsbm => "dcsbm",
        }
    }
}

impl std::fmt::Display for ModelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sbm" => Ok(ModelClass::Sbm),
            "dcsbm" | "dc-sbm" => Ok(ModelClass::Dcsbm),
            other => Err(Error::validation(format!("unknown model class `{other}`"))),
        }
    }
}

/// `log2 P(A|e,b)` or `log2 P(A|k,e,b)`: the microcanonical graph likelihood
/// given the sufficient statistics, per model class.
pub fn log_likelihood_graph_term(graph: &Multigraph, stats: &BlockStats, class: ModelClass) -> f64 {
    let t = graph.tables();
    let b = stats.group_count();
    let mut log = 0.0;
    for r in 0..b {
        log += t.ldf_even(stats.edge_count(r, r));
        for s in (r + 1)..b {
            log += t.lf(stats.edge_count(r, s));
        }
    }
    match class {
        ModelClass::Sbm => {
            for r in 0..b {
                let e_r = stats.group_degree(r);
                if e_r > 0 {
                    log -= e_r as f64 * (stats.size(r) as f64).log2();
                }
            }
        }
        ModelClass::Dcsbm => {
            for &k in graph.degrees() {
                log += t.lf(k);
            }
            for r in 0..b {
                log -= t.lf(stats.group_degree(r));
            }
        }
    }
    log - graph.adjacency_log_term()
}

/// `log2 P(e|b)`: uniform prior over symmetric block count matrices with
/// `E` total edge units distributed over `B(B+1)/2` pair slots.
pub fn log_prior_edge_matrix(tables: &LogFactorial, group_count: usize, edge_count: u64) -> f64 {
    let slots = (group_count * (group_count + 1) / 2) as u64;
    -tables.lmultiset(slots, edge_count)
}

/// `log2 P(k|e,b)`: uniform prior over degree sequences compatible with the
/// group degree sums. Only the degree-corrected class pays this term.
pub fn log_prior_degrees(tables: &LogFactorial, stats: &BlockStats) -> f64 {
    let mut log = 0.0;
    for r in 0..stats.group_count() {
        log -= tables.lmultiset(stats.size(r), stats.group_degree(r));
    }
    log
}

/// `log2 P(b)` for the three-stage uniform partition prior
/// `P(b) = [1/N] * C(N-1, B-1)^-1 * prod_r n_r! / N!`.
pub fn log_prior_partition(partition: &Partition) -> f64 {
    let n = partition.node_count() as u64;
    let b = partition.group_count() as u64;
    let t = LogFactorial::with_max(n as usize + 1);
    let mut log = -(n as f64).log2() - t.lbinom(n - 1, b - 1) - t.lf(n);
    for size in partition.group_sizes() {
        log += t.lf(size);
    }
    log
}

/// Same prior evaluated from maintained statistics with a shared table.
pub(crate) fn log_prior_partition_from_stats(
    tables: &LogFactorial,
    stats: &BlockStats,
    n: u64,
) -> f64 {
    let b = stats.group_count() as u64;
    let mut log = -(n as f64).log2() - tables.lbinom(n - 1, b - 1) - tables.lf(n);
    for r in 0..stats.group_count() {
        log += tables.lf(stats.size(r));
    }
    log
}

/// `log2 P(A|b, class)`: the marginal likelihood of the graph given the
/// partition, with all continuous parameters integrated out. Always `<= 0`.
pub fn log_likelihood(graph: &Multigraph, partition: &Partition, class: ModelClass) -> Result<f64> {
    let stats = BlockStats::new(graph, partition)?;
    Ok(log_likelihood_from_stats(graph, &stats, class))
}

/// [`log_likelihood`] evaluated from precomputed sufficient statistics.
pub fn log_likelihood_from_stats(graph: &Multigraph, stats: &BlockStats, class: ModelClass) -> f64 {
    let t = graph.tables();
    let mut log = log_likelihood_graph_term(graph, stats, class)
        + log_prior_edge_matrix(t, stats.group_count(), graph.edge_count());
    if class == ModelClass::Dcsbm {
        log += log_prior_degrees(t, stats);
    }
    log
}

/// Description length `Sigma(A, b; class)` in bits:
/// `-log2 P(A|b,class) - log2 P(b)`.
pub fn description_length(
    graph: &Multigraph,
    partition: &Partition,
    class: ModelClass,
) -> Result<f64> {
    Ok(-log_likelihood(graph, partition, class)? - log_prior_partition(partition))
}

pub(crate) fn description_length_from_stats(
    graph: &Multigraph,
    stats: &BlockStats,
    class: ModelClass,
) -> f64 {
    let n = graph.node_count() as u64;
    -log_likelihood_from_stats(graph, stats, class)
        - log_prior_partition_from_stats(graph.tables(), stats, n)
}

/// `log2 Lambda` between two (partition, class) models: positive values
/// favor the first model.
pub fn posterior_log_odds(
    graph: &Multigraph,
    partition1: &Partition,
    class1: ModelClass,
    partition2: &Partition,
    class2: ModelClass,
) -> Result<f64> {
    Ok(description_length(graph, partition2, class2)?
        - description_length(graph, partition1, class1)?)
}

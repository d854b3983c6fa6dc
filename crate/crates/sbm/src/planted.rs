//! Planted-partition generators and their closed-form prediction baselines.
//!
//! The planted-partition model has `B` equal groups of `n_r` nodes and pair
//! rates
//!
//! `lambda_rs = (2<E> / (n_r n_s)) * [c delta_rs / B + (1-c)(1-delta_rs) / (B(B-1))]`
//!
//! where `c` in `[0, 1]` controls assortativity. Canonical samples place a
//! Poisson number of edge units on every pair; microcanonical samples
//! constrain each block count to its rounded expectation exactly.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::graph::Multigraph;
use crate::partition::Partition;

/// Parameters of the planted-partition ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedParams {
    pub groups: usize,
    pub group_size: usize,
    /// Assortativity `c`: 1 places all edges within groups, `1/B` is fully
    /// random placement.
    pub assortativity: f64,
    pub expected_edges: f64,
}

impl PlantedParams {
    pub fn new(
        groups: usize,
        group_size: usize,
        assortativity: f64,
        expected_edges: f64,
    ) -> Result<Self> {
        let p = PlantedParams {
            groups,
            group_size,
            assortativity,
            expected_edges,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters matching a target mean degree `<k> = 2<E> / N`.
    pub fn with_mean_degree(
        groups: usize,
        group_size: usize,
        assortativity: f64,
        mean_degree: f64,
    ) -> Result<Self> {
        let n = (groups * group_size) as f64;
        Self::new(groups, group_size, assortativity, mean_degree * n / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups < 1 || self.group_size < 1 {
            return Err(Error::validation(
                "groups and group size must be at least 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.assortativity) {
            return Err(Error::validation("assortativity must lie in [0, 1]"));
        }
        if self.groups == 1 && self.assortativity < 1.0 {
            return Err(Error::validation(
                "a single group has no between-group term: c must be 1 when B = 1",
            ));
        }
        if !self.expected_edges.is_finite() || self.expected_edges <= 0.0 {
            return Err(Error::validation("expected edge count must be positive"));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.groups * self.group_size
    }

    pub fn mean_degree(&self) -> f64 {
        2.0 * self.expected_edges / self.node_count() as f64
    }

    /// The planted assignment: consecutive blocks of `group_size` nodes.
    pub fn partition(&self) -> Partition {
        Partition::blocks(self.node_count(), self.group_size).expect("valid block sizes")
    }
}

/// Symmetric matrix of pair rates `lambda_rs`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    groups: usize,
    rates: Vec<f64>,
}

impl RateMatrix {
    pub fn from_rates(groups: usize, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != groups * groups {
            return Err(Error::validation("rate matrix dimension mismatch"));
        }
        for r in 0..groups {
            for s in 0..r {
                if rates[r * groups + s] != rates[s * groups + r] {
                    return Err(Error::validation("rate matrix must be symmetric"));
                }
            }
        }
        if rates.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::validation("rates must be finite and non-negative"));
        }
        Ok(RateMatrix { groups, rates })
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn rate(&self, r: usize, s: usize) -> f64 {
        self.rates[r * self.groups + s]
    }
}

/// Pair rates of the planted-partition ensemble.
pub fn planted_rates(params: &PlantedParams) -> Result<RateMatrix> {
    params.validate()?;
    let b = params.groups;
    let n_r = params.group_size as f64;
    let base = 2.0 * params.expected_edges / (n_r * n_r);
    let c = params.assortativity;
    let diag = base * c / b as f64;
    let off = if b > 1 {
        base * (1.0 - c) / (b as f64 * (b as f64 - 1.0))
    } else {
        0.0
    };
    let mut rates = vec![off; b * b];
    for r in 0..b {
        rates[r * b + r] = diag;
    }
    RateMatrix::from_rates(b, rates)
}

fn pair_slots(sizes: (u64, u64), same_group: bool) -> u64 {
    if same_group {
        sizes.0 * (sizes.0 - 1) / 2
    } else {
        sizes.0 * sizes.1
    }
}

/// Sample a graph with an independent Poisson edge-unit count on every node
/// pair `i < j` (no self-loops).
pub fn sample_canonical(
    rates: &RateMatrix,
    partition: &Partition,
    rng: &mut impl Rng,
) -> Result<Multigraph> {
    if rates.groups() != partition.group_count() {
        return Err(Error::validation(
            "rate matrix does not match partition group count",
        ));
    }
    let n = partition.node_count();
    let mut entries = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let lambda = rates.rate(partition.label(i), partition.label(j));
            if lambda <= 0.0 {
                continue;
            }
            let units = Poisson::new(lambda)
                .map_err(|e| Error::validation(format!("invalid rate {lambda}: {e}")))?
                .sample(rng) as u64;
            if units > 0 {
                entries.push((i, j, units));
            }
        }
    }
    Multigraph::from_entries(n, entries)
}

/// Sample a graph whose block counts equal their rounded expectations
/// exactly: every group pair `r <= s` receives `round(N_rs * lambda_rs)`
/// edge units (`N_rr = n_r (n_r - 1) / 2`), placed uniformly at random with
/// replacement over the pair's slots. Rounding is half-to-even.
pub fn sample_microcanonical(
    rates: &RateMatrix,
    partition: &Partition,
    rng: &mut impl Rng,
) -> Result<Multigraph> {
    if rates.groups() != partition.group_count() {
        return Err(Error::validation(
            "rate matrix does not match partition group count",
        ));
    }
    let b = partition.group_count();
    let sizes = partition.group_sizes();
    let n = partition.node_count();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); b];
    for node in 0..n {
        members[partition.label(node)].push(node);
    }
    let mut entries = Vec::new();
    for r in 0..b {
        for s in r..b {
            let slots = pair_slots((sizes[r], sizes[s]), r == s);
            if slots == 0 {
                continue;
            }
            let target = (slots as f64 * rates.rate(r, s)).round_ties_even() as u64;
            for _ in 0..target {
                let (i, j) = if r == s {
                    // uniform unordered pair of distinct members
                    let a = rng.random_range(0..members[r].len());
                    let mut c = rng.random_range(0..members[r].len() - 1);
                    if c >= a {
                        c += 1;
                    }
                    (members[r][a], members[r][c])
                } else {
                    (
                        members[r][rng.random_range(0..members[r].len())],
                        members[s][rng.random_range(0..members[s].len())],
                    )
                };
                entries.push((i.min(j), i.max(j), 1));
            }
        }
    }
    Multigraph::from_entries(n, entries)
}

/// Detectability threshold `c* = 1/B + (B-1) / (B sqrt(<k>))`: above it the
/// planted structure is recoverable from a single sample.
pub fn detectability_threshold(groups: usize, mean_degree: f64) -> f64 {
    let b = groups as f64;
    1.0 / b + (b - 1.0) / (b * mean_degree.sqrt())
}

fn check_theory_args(groups: usize, assortativity: f64) -> Result<()> {
    if groups < 2 {
        return Err(Error::validation(
            "closed-form AUC expressions assume B >= 2",
        ));
    }
    if !(0.0..=1.0).contains(&assortativity) {
        return Err(Error::validation("assortativity must lie in [0, 1]"));
    }
    Ok(())
}

/// Expected leave-one-out AUC when candidates are ranked by the *true*
/// generating rates: `c/2 + (B-1)/(2B)`.
pub fn auc_theory_true_model(groups: usize, assortativity: f64) -> Result<f64> {
    check_theory_args(groups, assortativity)?;
    let b = groups as f64;
    Ok(assortativity / 2.0 + (b - 1.0) / (2.0 * b))
}

/// Expected leave-one-out AUC when the block counts are re-estimated from
/// the observation with the removed edge absent: `1/(2B^2) + c(B-1)/B`.
/// Below `c = (B^2-1) / (2B(B-1))` this drops under one half: the inferred
/// model predicts worse than chance.
pub fn auc_theory_inferred(groups: usize, assortativity: f64) -> Result<f64> {
    check_theory_args(groups, assortativity)?;
    let b = groups as f64;
    Ok(1.0 / (2.0 * b * b) + assortativity * (b - 1.0) / b)
}

/// Rank candidates by their true pair rate: the oracle scorer for planted
/// ensembles. All pairs with the same group-pair type tie exactly.
pub struct RateScorer<'a> {
    rates: &'a RateMatrix,
    partition: &'a Partition,
}

impl<'a> RateScorer<'a> {
    pub fn new(rates: &'a RateMatrix, partition: &'a Partition) -> Result<Self> {
        if rates.groups() != partition.group_count() {
            return Err(Error::validation(
                "rate matrix does not match partition group count",
            ));
        }
        Ok(RateScorer { rates, partition })
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.rates
            .rate(self.partition.label(i), self.partition.label(j))
    }
}

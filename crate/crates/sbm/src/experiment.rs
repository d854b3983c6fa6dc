//! Experiment protocols: paired edge-removal replicates, model-class
//! comparisons with t statistics, leave-one-out curves on planted
//! partitions, forced-group-count sweeps, and single-point vs averaged
//! prediction.
//!
//! Every protocol derives all of its randomness from one master seed via
//! stream splitting, so replicated cells can run on any number of threads
//! and still reproduce bit-for-bit.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::{Multigraph, RemovalSplit};
use crate::mcmc::{
    find_map_partition, refine_partition, sample_posterior, seeded_stream, ChainState, GroupLimits,
    SamplerConfig, SearchConfig,
};
use crate::model::ModelClass;
use crate::planted::{
    planted_rates, sample_canonical, sample_microcanonical, PlantedParams, RateScorer,
};
use crate::predict::{evaluate_auc, sample_negatives, AveragedScorer, Candidate, Scorer};

/// Outcome of one (replicate, model class) cell of a removal experiment.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub dataset: String,
    pub class: ModelClass,
    /// Replicate index; doubles as the random stream of the cell.
    pub seed: u64,
    pub fraction: f64,
    pub sigma_bits: f64,
    /// Absent when the replicate produced no positives to rank (e.g. f = 0).
    pub auc: Option<f64>,
    pub seconds: f64,
}

/// Write records as CSV with the header
/// `dataset,class,seed,f,sigma_bits,auc,seconds`.
pub fn write_records_csv<W: Write>(mut w: W, records: &[RunRecord]) -> std::io::Result<()> {
    writeln!(w, "dataset,class,seed,f,sigma_bits,auc,seconds")?;
    for r in records {
        let auc = r.auc.map(|a| format!("{a}")).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.dataset, r.class, r.seed, r.fraction, r.sigma_bits, auc, r.seconds
        )?;
    }
    Ok(())
}

/// One-sample t test against zero mean.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TTestResult {
    pub mean: f64,
    /// Sample standard deviation (n-1 denominator).
    pub sd: f64,
    pub n: usize,
    pub t: f64,
    /// Two-sided p-value from the Student-t distribution with n-1 degrees
    /// of freedom.
    pub p: f64,
}

/// `t = mean / (sd / sqrt(n))` with the two-sided p-value.
pub fn paired_t_test(deltas: &[f64]) -> Result<TTestResult> {
    let n = deltas.len();
    if n < 2 {
        return Err(Error::validation("t test needs at least two observations"));
    }
    let mean = deltas.iter().sum::<f64>() / n as f64;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateVariance(
            "all paired differences are identical; t is undefined".into(),
        ));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::validation(format!("t distribution: {e}")))?;
    let p = 2.0 * dist.sf(t.abs());
    Ok(TTestResult { mean, sd, n, t, p })
}

/// Parameters of [`run_removal_experiment`].
#[derive(Debug, Clone)]
pub struct RemovalConfig {
    pub dataset: String,
    pub fraction: f64,
    pub replicates: usize,
    /// Negatives per positive when sampling non-edges (exhaustive if the
    /// graph has fewer).
    pub negative_factor: usize,
    pub search: SearchConfig,
    pub seed: u64,
}

impl RemovalConfig {
    pub fn new(dataset: impl Into<String>, seed: u64) -> Self {
        RemovalConfig {
            dataset: dataset.into(),
            fraction: 0.05,
            replicates: 50,
            negative_factor: 10,
            search: SearchConfig::quick(seed),
            seed,
        }
    }
}

/// Streams reserved per replicate for the removal draw, the negative draw,
/// and per-class search.
const REPLICATE_STRIDE: u64 = 64;

fn replicate_split(
    graph: &Multigraph,
    fraction: f64,
    seed: u64,
    replicate: u64,
) -> Result<RemovalSplit> {
    let mut rng = seeded_stream(seed, replicate * REPLICATE_STRIDE);
    graph.remove_edges(fraction, &mut rng)
}

/// Positive candidates of a split: one per removed adjacency entry.
fn positive_candidates(split: &RemovalSplit) -> Vec<Candidate> {
    split
        .removed
        .iter()
        .map(|r| Candidate::missing_edge(r.i, r.j))
        .collect()
}

/// Sampled negative candidates: non-links of the original (restored) graph.
fn negative_candidates(
    original: &Multigraph,
    n_positives: usize,
    factor: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<Candidate>> {
    let mut rng = seeded_stream(seed, stream);
    let want = (n_positives * factor).max(1);
    Ok(sample_negatives(original, want, &mut rng)?.candidates)
}

fn auc_over_candidates(
    scorer: &Scorer<'_>,
    positives: &[Candidate],
    negatives: &[Candidate],
) -> Result<Option<f64>> {
    if positives.is_empty() {
        return Ok(None);
    }
    let pos: Vec<f64> = positives
        .iter()
        .map(|c| scorer.score(c))
        .collect::<Result<_>>()?;
    let neg: Vec<f64> = negatives
        .iter()
        .map(|c| scorer.score(c))
        .collect::<Result<_>>()?;
    Ok(Some(evaluate_auc(&pos, &neg)?.auc))
}

/// Remove a fraction of the edges, fit each model class on the observed
/// graph, and record description length and missing-edge AUC. All classes in
/// one replicate share the identical removal split (paired design).
pub fn run_removal_experiment(
    graph: &Multigraph,
    classes: &[ModelClass],
    config: &RemovalConfig,
) -> Result<Vec<RunRecord>> {
    if config.replicates == 0 {
        return Err(Error::validation("replicates must be at least 1"));
    }
    if classes.is_empty() {
        return Err(Error::validation("at least one model class is required"));
    }
    let records: Result<Vec<Vec<RunRecord>>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|replicate| {
            let split = replicate_split(graph, config.fraction, config.seed, replicate)?;
            let positives = positive_candidates(&split);
            let original = split.restore();
            let negatives = negative_candidates(
                &original,
                positives.len(),
                config.negative_factor,
                config.seed,
                replicate * REPLICATE_STRIDE + 1,
            )?;
            let mut cell_records = Vec::with_capacity(classes.len());
            for (idx, &class) in classes.iter().enumerate() {
                let started = Instant::now();
                let mut search = config.search.clone();
                search.seed = config.seed;
                search.stream = replicate * REPLICATE_STRIDE + 2 + idx as u64;
                let (map, sigma) = find_map_partition(&split.observed, class, &search)?;
                let scorer = Scorer::new(&split.observed, &map, class)?;
                let auc = auc_over_candidates(&scorer, &positives, &negatives)?;
                cell_records.push(RunRecord {
                    dataset: config.dataset.clone(),
                    class,
                    seed: replicate,
                    fraction: config.fraction,
                    sigma_bits: sigma,
                    auc,
                    seconds: started.elapsed().as_secs_f64(),
                });
            }
            Ok(cell_records)
        })
        .collect();
    Ok(records?.into_iter().flatten().collect())
}

/// Agreement classification for one ordered model-class pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrant {
    /// The class with the smaller description length also has the higher AUC.
    Consistent,
    Inconsistent,
    /// Degenerate differences; no call can be made.
    Inconclusive,
}

/// Paired comparison of two model classes over shared replicates, oriented
/// so that `preferred` is the class with the smaller mean description
/// length.
#[derive(Debug, Clone, Serialize)]
pub struct PairComparison {
    pub preferred: ModelClass,
    pub other: ModelClass,
    pub n: usize,
    /// Mean of `sigma(preferred) - sigma(other)`; non-positive by
    /// orientation.
    pub mean_delta_sigma: f64,
    /// Mean of `auc(preferred) - auc(other)`.
    pub mean_delta_auc: f64,
    pub t_sigma: Option<f64>,
    pub p_sigma: Option<f64>,
    pub t_auc: Option<f64>,
    pub p_auc: Option<f64>,
    pub quadrant: Quadrant,
}

/// Summary over every unordered class pair present in the records.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub pairs: Vec<PairComparison>,
    /// Fraction of pairs classified consistent.
    pub consistent_fraction: f64,
}

/// Classify each model-class pair: does the description-length preference
/// agree with the AUC preference?
pub fn consistency_report(records: &[RunRecord]) -> Result<ConsistencyReport> {
    let mut classes: Vec<ModelClass> = Vec::new();
    for r in records {
        if !classes.contains(&r.class) {
            classes.push(r.class);
        }
    }
    if classes.len() < 2 {
        return Err(Error::validation(
            "consistency report needs at least two model classes",
        ));
    }
    let mut pairs = Vec::new();
    let mut consistent = 0usize;
    for a_idx in 0..classes.len() {
        for b_idx in (a_idx + 1)..classes.len() {
            let (a, b) = (classes[a_idx], classes[b_idx]);
            let mut deltas_sigma = Vec::new();
            let mut deltas_auc = Vec::new();
            for ra in records.iter().filter(|r| r.class == a) {
                let rb = records
                    .iter()
                    .find(|r| r.class == b && r.seed == ra.seed && r.dataset == ra.dataset);
                if let Some(rb) = rb {
                    if let (Some(auc_a), Some(auc_b)) = (ra.auc, rb.auc) {
                        deltas_sigma.push(ra.sigma_bits - rb.sigma_bits);
                        deltas_auc.push(auc_a - auc_b);
                    }
                }
            }
            if deltas_sigma.len() < 2 {
                return Err(Error::validation(format!(
                    "need at least two paired replicates for {a} vs {b}"
                )));
            }
            let n = deltas_sigma.len();
            let mean_sigma = deltas_sigma.iter().sum::<f64>() / n as f64;
            // Orient so the first class is the one MDL prefers.
            let (preferred, other, sign) = if mean_sigma <= 0.0 {
                (a, b, 1.0)
            } else {
                (b, a, -1.0)
            };
            let sigma_d: Vec<f64> = deltas_sigma.iter().map(|d| d * sign).collect();
            let auc_d: Vec<f64> = deltas_auc.iter().map(|d| d * sign).collect();
            let mean_delta_sigma = sigma_d.iter().sum::<f64>() / n as f64;
            let mean_delta_auc = auc_d.iter().sum::<f64>() / n as f64;
            let t_sigma = paired_t_test(&sigma_d).ok();
            let t_auc = paired_t_test(&auc_d).ok();
            let quadrant = if t_auc.is_none() || mean_delta_auc == 0.0 || mean_delta_sigma == 0.0 {
                Quadrant::Inconclusive
            } else if mean_delta_auc > 0.0 {
                Quadrant::Consistent
            } else {
                Quadrant::Inconsistent
            };
            if quadrant == Quadrant::Consistent {
                consistent += 1;
            }
            pairs.push(PairComparison {
                preferred,
                other,
                n,
                mean_delta_sigma,
                mean_delta_auc,
                t_sigma: t_sigma.map(|t| t.t),
                p_sigma: t_sigma.map(|t| t.p),
                t_auc: t_auc.map(|t| t.t),
                p_auc: t_auc.map(|t| t.p),
                quadrant,
            });
        }
    }
    let consistent_fraction = consistent as f64 / pairs.len() as f64;
    Ok(ConsistencyReport {
        pairs,
        consistent_fraction,
    })
}

/// How to score candidates in a leave-one-out experiment.
#[derive(Debug, Clone)]
pub enum LooScorer {
    /// Fixed planted partition (known a priori).
    Clamped(ModelClass),
    /// Fit the partition on each observed graph.
    Inferred(ModelClass),
    /// Rank by the true generating rates.
    TrueRates,
}

impl LooScorer {
    pub fn name(&self) -> String {
        match self {
            LooScorer::Clamped(c) => format!("{c}-clamped"),
            LooScorer::Inferred(c) => format!("{c}-inferred"),
            LooScorer::TrueRates => "true-rates".into(),
        }
    }
}

/// Parameters of [`leave_one_out_pp`].
#[derive(Debug, Clone)]
pub struct LooConfig {
    pub groups: usize,
    pub group_size: usize,
    pub mean_degree: f64,
    pub c_values: Vec<f64>,
    /// Single-edge removals per assortativity value; `None` removes every
    /// edge unit exactly once (complete leave-one-out).
    pub removals: Option<usize>,
    /// Sampled non-links ranked against each removal; `0` means every
    /// non-link.
    pub negative_cap: usize,
    pub microcanonical: bool,
    pub search: SearchConfig,
    pub seed: u64,
}

impl LooConfig {
    pub fn new(seed: u64) -> Self {
        LooConfig {
            groups: 10,
            group_size: 100,
            mean_degree: 20.0,
            c_values: vec![0.4, 0.6, 0.8],
            removals: None,
            negative_cap: 2000,
            microcanonical: true,
            search: SearchConfig::quick(seed),
            seed,
        }
    }
}

/// Mean AUC of one scorer at one assortativity value.
#[derive(Debug, Clone, Serialize)]
pub struct LooPoint {
    pub assortativity: f64,
    pub scorer: String,
    pub mean_auc: f64,
    pub removals: usize,
}

/// Leave-one-out prediction on planted-partition samples: generate one
/// sample per assortativity value, remove single edges, and rank each
/// removed edge against sampled non-links under every scorer.
pub fn leave_one_out_pp(scorers: &[LooScorer], config: &LooConfig) -> Result<Vec<LooPoint>> {
    if scorers.is_empty() {
        return Err(Error::validation("at least one scorer is required"));
    }
    let mut points = Vec::new();
    for (c_idx, &c) in config.c_values.iter().enumerate() {
        let params = PlantedParams::with_mean_degree(
            config.groups,
            config.group_size,
            c,
            config.mean_degree,
        )?;
        let rates = planted_rates(&params)?;
        let planted = params.partition();
        let mut rng = seeded_stream(config.seed, c_idx as u64 * REPLICATE_STRIDE);
        let graph = if config.microcanonical {
            sample_microcanonical(&rates, &planted, &mut rng)?
        } else {
            sample_canonical(&rates, &planted, &mut rng)?
        };
        // Removal instances: every edge unit once, or a sampled subset.
        let mut units: Vec<(usize, usize)> = Vec::new();
        for (i, j, m) in graph.pairs() {
            let count = if i == j { m / 2 } else { m };
            for _ in 0..count {
                units.push((i, j));
            }
        }
        if let Some(want) = config.removals {
            let mut pick_rng = seeded_stream(config.seed, c_idx as u64 * REPLICATE_STRIDE + 1);
            for idx in 0..want.min(units.len()) {
                let swap = pick_rng.random_range(idx..units.len());
                units.swap(idx, swap);
            }
            units.truncate(want.min(units.len()));
        }

        let removal_auc: Result<Vec<Vec<f64>>> = units
            .par_iter()
            .enumerate()
            .map(|(u_idx, &(i, j))| {
                let observed = graph.minus_unit(i, j)?;
                let positive = Candidate::missing_edge(i, j);
                // Per-removal streams live in their own 32-bit block per
                // assortativity value, so nothing overlaps.
                let stream_base = ((c_idx as u64) << 32) + u_idx as u64 * 8;
                let mut neg_rng = seeded_stream(config.seed, stream_base + 2);
                let negatives = if config.negative_cap == 0 {
                    sample_negatives(&graph, usize::MAX - 1, &mut neg_rng)?.candidates
                } else {
                    sample_negatives(&graph, config.negative_cap, &mut neg_rng)?.candidates
                };
                let mut aucs = Vec::with_capacity(scorers.len());
                for (s_idx, scorer) in scorers.iter().enumerate() {
                    let auc = match scorer {
                        LooScorer::Clamped(class) => {
                            let s = Scorer::new(&observed, &planted, *class)?;
                            let pos = vec![s.score(&positive)?];
                            let neg: Vec<f64> = negatives
                                .iter()
                                .map(|c| s.score(c))
                                .collect::<Result<_>>()?;
                            evaluate_auc(&pos, &neg)?.auc
                        }
                        LooScorer::Inferred(class) => {
                            let mut search = config.search.clone();
                            search.seed = config.seed;
                            search.stream = stream_base + 3 + s_idx as u64;
                            let (map, _) = find_map_partition(&observed, *class, &search)?;
                            let s = Scorer::new(&observed, &map, *class)?;
                            let pos = vec![s.score(&positive)?];
                            let neg: Vec<f64> = negatives
                                .iter()
                                .map(|c| s.score(c))
                                .collect::<Result<_>>()?;
                            evaluate_auc(&pos, &neg)?.auc
                        }
                        LooScorer::TrueRates => {
                            let s = RateScorer::new(&rates, &planted)?;
                            let pos = vec![s.score(i, j)];
                            let neg: Vec<f64> =
                                negatives.iter().map(|c| s.score(c.i, c.j)).collect();
                            evaluate_auc(&pos, &neg)?.auc
                        }
                    };
                    aucs.push(auc);
                }
                Ok(aucs)
            })
            .collect();
        let removal_auc = removal_auc?;
        for (s_idx, scorer) in scorers.iter().enumerate() {
            let mean = removal_auc.iter().map(|row| row[s_idx]).sum::<f64>()
                / removal_auc.len().max(1) as f64;
            points.push(LooPoint {
                assortativity: c,
                scorer: scorer.name(),
                mean_auc: mean,
                removals: removal_auc.len(),
            });
        }
    }
    Ok(points)
}

/// One cell of a forced-group-count sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub forced_groups: usize,
    pub replicate: u64,
    pub sigma_bits: f64,
    pub auc: Option<f64>,
}

/// Rebuild `partition` with exactly `target` groups: surplus groups are
/// disbanded greedily one node at a time (smallest first), missing groups
/// are seeded by randomly halving the largest groups.
fn reshape_partition(
    graph: &Multigraph,
    class: ModelClass,
    partition: &crate::partition::Partition,
    target: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<crate::partition::Partition> {
    let current = partition.group_count();
    if current == target {
        return Ok(partition.clone());
    }
    if current > target {
        let limits = GroupLimits {
            min: target,
            max: None,
        };
        let mut chain = ChainState::new(graph, class, partition, 1.0, limits, seeded_stream(0, 0))?;
        while chain.group_count() > target {
            let smallest = (0..chain.group_count())
                .min_by_key(|&g| chain.stats_size(g))
                .expect("at least one group");
            chain.evict_group(smallest)?;
        }
        return Ok(chain.partition());
    }
    let mut labels = partition.labels().to_vec();
    let mut groups = current;
    while groups < target {
        let mut sizes = vec![0usize; groups];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        let largest = (0..groups).max_by_key(|&g| sizes[g]).expect("non-empty");
        if sizes[largest] < 2 {
            return Err(Error::validation(format!(
                "cannot split groups any further to reach {target}"
            )));
        }
        let mut members: Vec<usize> = (0..labels.len())
            .filter(|&v| labels[v] as usize == largest)
            .collect();
        for idx in 0..members.len() / 2 {
            let pick = rng.random_range(idx..members.len());
            members.swap(idx, pick);
            labels[members[idx]] = groups as u32;
        }
        groups += 1;
    }
    crate::partition::Partition::from_labels(labels)
}

/// Fit with the number of groups forced to each value of `group_counts`,
/// recording description length and missing-edge AUC per replicate. Within
/// one replicate every forced count sees the identical removal split, and
/// fits are warm-started from the next larger count so that each
/// constrained search begins structurally aligned.
pub fn groups_sweep(
    graph: &Multigraph,
    class: ModelClass,
    group_counts: &[usize],
    config: &RemovalConfig,
) -> Result<Vec<SweepRecord>> {
    if group_counts.is_empty() {
        return Err(Error::validation("group count range must be non-empty"));
    }
    if let Some(&bad) = group_counts
        .iter()
        .find(|&&b| b == 0 || b > graph.node_count())
    {
        return Err(Error::validation(format!(
            "forced group count {bad} outside 1..={}",
            graph.node_count()
        )));
    }
    let mut descending: Vec<usize> = group_counts.to_vec();
    descending.sort_unstable_by(|a, b| b.cmp(a));
    descending.dedup();
    let mut records: Vec<SweepRecord> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|replicate| {
            let split = replicate_split(graph, config.fraction, config.seed, replicate)?;
            let positives = positive_candidates(&split);
            let original = split.restore();
            let negatives = negative_candidates(
                &original,
                positives.len(),
                config.negative_factor,
                config.seed,
                replicate * REPLICATE_STRIDE + 1,
            )?;
            // Sweep streams live in their own block so arbitrarily long
            // group-count ranges never collide with the per-replicate
            // removal and negative streams.
            let sweep_block = (1u64 << 40) + replicate * 4096;
            // Unconstrained base fit seeds the warm-start chain.
            let mut base_search = config.search.clone();
            base_search.seed = config.seed;
            base_search.stream = sweep_block;
            let (mut current, _) = find_map_partition(&split.observed, class, &base_search)?;
            let mut cell = Vec::with_capacity(descending.len());
            for (b_idx, &forced) in descending.iter().enumerate() {
                let mut rng = seeded_stream(config.seed, sweep_block + 1 + b_idx as u64);
                let init = reshape_partition(&split.observed, class, &current, forced, &mut rng)?;
                let mut search = config
                    .search
                    .clone()
                    .with_limits(GroupLimits::fixed(forced));
                search.seed = config.seed;
                search.anneal_sweeps = config.search.anneal_sweeps / 2;
                let (map, sigma) = refine_partition(&split.observed, class, &init, &search, rng)?;
                let scorer = Scorer::new(&split.observed, &map, class)?;
                let auc = auc_over_candidates(&scorer, &positives, &negatives)?;
                cell.push(SweepRecord {
                    forced_groups: forced,
                    replicate,
                    sigma_bits: sigma,
                    auc,
                });
                current = map;
            }
            Ok(cell)
        })
        .collect::<Result<Vec<Vec<SweepRecord>>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by_key(|r| (r.replicate, r.forced_groups));
    Ok(records)
}

/// Single-point vs posterior-averaged AUC for one replicate and class.
#[derive(Debug, Clone, Serialize)]
pub struct AveragingRecord {
    pub class: ModelClass,
    pub replicate: u64,
    pub auc_single: f64,
    pub auc_averaged: f64,
}

/// Parameters of [`averaging_comparison`].
#[derive(Debug, Clone)]
pub struct AveragingConfig {
    pub fraction: f64,
    pub replicates: usize,
    pub negative_factor: usize,
    pub n_samples: usize,
    pub sweep_interval: usize,
    pub burn_in: usize,
    /// Clamp the sampler to the fitted partition; the averaged prediction
    /// then degenerates to the single-point one.
    pub clamp: bool,
    pub search: SearchConfig,
    pub seed: u64,
}

impl AveragingConfig {
    pub fn new(seed: u64) -> Self {
        AveragingConfig {
            fraction: 0.05,
            replicates: 30,
            negative_factor: 10,
            n_samples: 40,
            sweep_interval: 5,
            burn_in: 50,
            clamp: false,
            search: SearchConfig::quick(seed),
            seed,
        }
    }
}

/// Compare single-point prediction at the fitted partition with prediction
/// averaged over posterior samples, paired over identical removal splits.
pub fn averaging_comparison(
    graph: &Multigraph,
    classes: &[ModelClass],
    config: &AveragingConfig,
) -> Result<Vec<AveragingRecord>> {
    if config.replicates == 0 || config.n_samples == 0 {
        return Err(Error::validation(
            "replicates and n_samples must be at least 1",
        ));
    }
    let records: Result<Vec<Vec<AveragingRecord>>> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|replicate| {
            let split = replicate_split(graph, config.fraction, config.seed, replicate)?;
            let positives = positive_candidates(&split);
            if positives.is_empty() {
                return Err(Error::validation(
                    "no removed edges; increase f or graph size",
                ));
            }
            let original = split.restore();
            let negatives = negative_candidates(
                &original,
                positives.len(),
                config.negative_factor,
                config.seed,
                replicate * REPLICATE_STRIDE + 1,
            )?;
            let mut cell = Vec::with_capacity(classes.len());
            for (idx, &class) in classes.iter().enumerate() {
                let mut search = config.search.clone();
                search.seed = config.seed;
                search.stream = replicate * REPLICATE_STRIDE + 2 + idx as u64;
                let (map, _) = find_map_partition(&split.observed, class, &search)?;
                let scorer = Scorer::new(&split.observed, &map, class)?;
                let auc_single = auc_over_candidates(&scorer, &positives, &negatives)?
                    .expect("positives checked non-empty");

                let mut sampler = SamplerConfig::new(
                    config.n_samples,
                    config.sweep_interval,
                    config.burn_in,
                    config.seed,
                );
                sampler.stream = replicate * REPLICATE_STRIDE + 32 + idx as u64;
                sampler.initial = Some(map.clone());
                sampler.clamp = config.clamp;
                let sample = sample_posterior(&split.observed, class, &sampler)?;
                let averaged = AveragedScorer::new(&split.observed, &sample.partitions, class)?;
                let pos: Vec<f64> = positives
                    .iter()
                    .map(|c| averaged.score(c))
                    .collect::<Result<_>>()?;
                let neg: Vec<f64> = negatives
                    .iter()
                    .map(|c| averaged.score(c))
                    .collect::<Result<_>>()?;
                let auc_averaged = evaluate_auc(&pos, &neg)?.auc;
                cell.push(AveragingRecord {
                    class,
                    replicate,
                    auc_single,
                    auc_averaged,
                });
            }
            Ok(cell)
        })
        .collect();
    Ok(records?.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planted::{auc_theory_inferred, auc_theory_true_model};

    #[test]
    fn t_test_hand_example() {
        // deltas (1, 0, 1, 0): mean 1/2, sd sqrt(1/3), t = sqrt(3).
        let r = paired_t_test(&[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((r.mean - 0.5).abs() < 1e-12);
        assert!((r.sd - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.t - 3.0f64.sqrt()).abs() < 1e-12);
        // two-sided p with 3 degrees of freedom, frozen from an independent
        // high-precision evaluation of the regularized incomplete beta.
        assert!((r.p - 0.181_690_113_816_209_35).abs() < 1e-10);
    }

    #[test]
    fn t_test_degenerate_and_sign_flip() {
        assert!(matches!(
            paired_t_test(&[0.0, 0.0, 0.0]),
            Err(Error::DegenerateVariance(_))
        ));
        assert!(paired_t_test(&[1.0]).is_err());
        let plus = paired_t_test(&[0.3, 0.7, 0.5, 0.9]).unwrap();
        let minus = paired_t_test(&[-0.3, -0.7, -0.5, -0.9]).unwrap();
        assert!((plus.t + minus.t).abs() < 1e-12);
        assert!((plus.p - minus.p).abs() < 1e-12);
    }

    /// The p-value matches a high-precision reference for the t CDF on a
    /// grid of (t, n), within 1e-10.
    #[test]
    fn t_test_p_matches_reference() {
        // (t, n, two-sided p) frozen from a 30-digit evaluation of
        // I_{df/(df+t^2)}(df/2, 1/2).
        let grid: &[(f64, usize, f64)] = &[
            (1.732_050_807_568_877_2, 4, 0.181_690_113_816_209_35),
            (0.5, 5, 0.643_329_963_181_863_3),
            (2.5, 10, 0.033_861_827_682_985_74),
            (1.0, 2, 0.5),
            (4.0, 31, 0.000_381_845_636_083_756_84),
            (0.25, 8, 0.809_765_585_847_851_9),
            (3.3, 50, 0.001_807_307_921_866_353_3),
            (2.0, 3, 0.183_503_419_072_273_97),
        ];
        for &(t, n, expect) in grid {
            let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
            let p = 2.0 * dist.sf(t);
            assert!((p - expect).abs() < 1e-10, "t={t} n={n}: {p} vs {expect}");
        }
    }

    fn synthetic_records(rows: &[(ModelClass, u64, f64, f64)]) -> Vec<RunRecord> {
        rows.iter()
            .map(|&(class, seed, sigma, auc)| RunRecord {
                dataset: "test".into(),
                class,
                seed,
                fraction: 0.05,
                sigma_bits: sigma,
                auc: Some(auc),
                seconds: 0.0,
            })
            .collect()
    }

    #[test]
    fn consistency_quadrants() {
        // sbm compresses better AND predicts better -> consistent.
        let records = synthetic_records(&[
            (ModelClass::Sbm, 0, 100.0, 0.9),
            (ModelClass::Sbm, 1, 101.0, 0.91),
            (ModelClass::Sbm, 2, 99.0, 0.89),
            (ModelClass::Dcsbm, 0, 110.0, 0.8),
            (ModelClass::Dcsbm, 1, 112.0, 0.82),
            (ModelClass::Dcsbm, 2, 108.0, 0.81),
        ]);
        let report = consistency_report(&records).unwrap();
        assert_eq!(report.pairs.len(), 1);
        let pair = &report.pairs[0];
        assert_eq!(pair.preferred, ModelClass::Sbm);
        assert_eq!(pair.quadrant, Quadrant::Consistent);
        assert!(pair.mean_delta_sigma < 0.0 && pair.mean_delta_auc > 0.0);
        assert_eq!(report.consistent_fraction, 1.0);

        // flip the AUCs -> inconsistent
        let records = synthetic_records(&[
            (ModelClass::Sbm, 0, 100.0, 0.8),
            (ModelClass::Sbm, 1, 101.0, 0.82),
            (ModelClass::Dcsbm, 0, 110.0, 0.9),
            (ModelClass::Dcsbm, 1, 112.0, 0.91),
        ]);
        let report = consistency_report(&records).unwrap();
        assert_eq!(report.pairs[0].quadrant, Quadrant::Inconsistent);
        assert_eq!(report.consistent_fraction, 0.0);
    }

    #[test]
    fn consistency_is_orientation_invariant() {
        let rows = &[
            (ModelClass::Sbm, 0, 100.0, 0.9),
            (ModelClass::Sbm, 1, 101.0, 0.91),
            (ModelClass::Dcsbm, 0, 110.0, 0.8),
            (ModelClass::Dcsbm, 1, 112.0, 0.82),
        ];
        let fwd = consistency_report(&synthetic_records(rows)).unwrap();
        let mut reversed: Vec<_> = rows.to_vec();
        reversed.reverse();
        let rev = consistency_report(&synthetic_records(&reversed)).unwrap();
        assert_eq!(fwd.consistent_fraction, rev.consistent_fraction);
        assert_eq!(fwd.pairs[0].preferred, rev.pairs[0].preferred);
        assert!((fwd.pairs[0].mean_delta_auc - rev.pairs[0].mean_delta_auc).abs() < 1e-12);
    }

    #[test]
    fn consistency_degenerate_is_inconclusive() {
        let records = synthetic_records(&[
            (ModelClass::Sbm, 0, 100.0, 0.9),
            (ModelClass::Sbm, 1, 100.0, 0.9),
            (ModelClass::Dcsbm, 0, 100.0, 0.9),
            (ModelClass::Dcsbm, 1, 100.0, 0.9),
        ]);
        let report = consistency_report(&records).unwrap();
        assert_eq!(report.pairs[0].quadrant, Quadrant::Inconclusive);
    }

    #[test]
    fn removal_with_zero_fraction_flags_missing_auc() {
        let g = Multigraph::parse_edge_list("0 1\n1 2\n2 0\n2 3\n").unwrap();
        let mut config = RemovalConfig::new("tiny", 7);
        config.fraction = 0.0;
        config.replicates = 1;
        config.search = SearchConfig {
            restarts: 2,
            anneal_sweeps: 30,
            ..SearchConfig::new(7)
        };
        let records = run_removal_experiment(&g, &[ModelClass::Sbm], &config).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].auc.is_none());
        assert!(records[0].sigma_bits > 0.0);
    }

    #[test]
    fn paired_design_shares_splits() {
        let g = Multigraph::parse_edge_list("0 1\n1 2\n2 0\n2 3\n3 4\n4 5\n5 3\n").unwrap();
        // The removal split depends only on (seed, replicate), not the class.
        let a = replicate_split(&g, 0.4, 11, 3).unwrap();
        let b = replicate_split(&g, 0.4, 11, 3).unwrap();
        assert_eq!(a.removed, b.removed);
        assert_eq!(a.observed, b.observed);
    }

    #[test]
    fn csv_format() {
        let records = synthetic_records(&[(ModelClass::Sbm, 0, 100.0, 0.9)]);
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "dataset,class,seed,f,sigma_bits,auc,seconds"
        );
        assert_eq!(lines.next().unwrap(), "test,sbm,0,0.05,100,0.9,0");
        let mut no_auc = synthetic_records(&[(ModelClass::Sbm, 0, 100.0, 0.0)]);
        no_auc[0].auc = None;
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &no_auc).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .ends_with(",,0"));
    }

    #[test]
    fn removal_experiment_is_bit_reproducible() {
        let g =
            Multigraph::parse_edge_list("0 1\n1 2\n2 0\n2 3\n3 4\n4 5\n5 3\n1 4\n0 5\n").unwrap();
        let mut config = RemovalConfig::new("tiny", 31);
        config.fraction = 0.3;
        config.replicates = 3;
        config.search = SearchConfig {
            restarts: 2,
            anneal_sweeps: 40,
            ..SearchConfig::new(31)
        };
        let a = run_removal_experiment(&g, &ModelClass::ALL, &config).unwrap();
        let b = run_removal_experiment(&g, &ModelClass::ALL, &config).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.class, y.class);
            assert_eq!(x.seed, y.seed);
            assert_eq!(
                x.sigma_bits, y.sigma_bits,
                "sigma must reproduce bit-for-bit"
            );
            assert_eq!(x.auc, y.auc, "AUC must reproduce bit-for-bit");
        }
    }

    #[test]
    fn sweep_at_one_group_is_the_direct_value() {
        let g = Multigraph::parse_edge_list("0 1\n1 2\n2 0\n2 3\n3 4\n4 5\n5 3\n").unwrap();
        let mut config = RemovalConfig::new("tiny", 13);
        config.fraction = 0.2;
        config.replicates = 3;
        config.search = SearchConfig {
            restarts: 2,
            anneal_sweeps: 30,
            ..SearchConfig::new(13)
        };
        let records = groups_sweep(&g, ModelClass::Sbm, &[1], &config).unwrap();
        for r in &records {
            // No search freedom with a single group: the recorded value is
            // the single-group description length of that replicate's
            // observed graph.
            let split = replicate_split(&g, config.fraction, config.seed, r.replicate).unwrap();
            let single = crate::partition::Partition::single_group(g.node_count());
            let direct =
                crate::model::description_length(&split.observed, &single, ModelClass::Sbm)
                    .unwrap();
            assert!((r.sigma_bits - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn clamped_averaging_degenerates_to_single_point() {
        let g =
            Multigraph::parse_edge_list("0 1\n1 2\n2 0\n2 3\n3 4\n4 5\n5 3\n1 4\n0 5\n").unwrap();
        let mut config = AveragingConfig::new(21);
        config.fraction = 0.35;
        config.replicates = 4;
        config.n_samples = 1;
        config.clamp = true;
        config.search = SearchConfig {
            restarts: 2,
            anneal_sweeps: 40,
            ..SearchConfig::new(21)
        };
        let records = averaging_comparison(&g, &[ModelClass::Sbm], &config).unwrap();
        for r in &records {
            assert_eq!(r.auc_single, r.auc_averaged, "replicate {}", r.replicate);
        }
    }

    #[test]
    fn unambiguous_posterior_averaging_is_neutral() {
        // Two disconnected 10-cliques: the posterior is dominated by the
        // two-block partition, so averaging matches the single point up to
        // Monte Carlo error.
        let mut entries = Vec::new();
        for base in [0usize, 10] {
            for i in 0..10 {
                for j in (i + 1)..10 {
                    entries.push((base + i, base + j, 1u64));
                }
            }
        }
        let g = Multigraph::from_entries(20, entries).unwrap();
        let mut config = AveragingConfig::new(33);
        config.replicates = 10;
        config.n_samples = 20;
        config.search = SearchConfig {
            restarts: 2,
            anneal_sweeps: 60,
            ..SearchConfig::new(33)
        };
        let records = averaging_comparison(&g, &[ModelClass::Sbm], &config).unwrap();
        let mean_abs_diff = records
            .iter()
            .map(|r| (r.auc_averaged - r.auc_single).abs())
            .sum::<f64>()
            / records.len() as f64;
        assert!(mean_abs_diff < 0.02, "mean |diff| = {mean_abs_diff}");
    }

    /// Small-scale leave-one-out run: the true-rate scorer sits near its
    /// closed form, and at c = 1/B it is chance exactly.
    #[test]
    fn loo_true_rates_small_scale() {
        let mut config = LooConfig::new(5);
        config.groups = 4;
        config.group_size = 25;
        config.mean_degree = 12.0;
        config.c_values = vec![0.25, 0.7];
        config.negative_cap = 500;
        let points = leave_one_out_pp(&[LooScorer::TrueRates], &config).unwrap();
        let chance = points.iter().find(|p| p.assortativity == 0.25).unwrap();
        assert!(
            (chance.mean_auc - 0.5).abs() < 1e-9,
            "c = 1/B is exactly chance (all ties)"
        );
        let strong = points.iter().find(|p| p.assortativity == 0.7).unwrap();
        let theory = auc_theory_true_model(4, 0.7).unwrap();
        assert!(
            (strong.mean_auc - theory).abs() < 0.05,
            "mean {} vs theory {theory}",
            strong.mean_auc
        );
        let _ = auc_theory_inferred(4, 0.7).unwrap();
    }
}

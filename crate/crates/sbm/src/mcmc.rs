//! Markov chain Monte Carlo over partitions, and simulated-annealing search
//! for the maximum-a-posteriori partition.
//!
//! The chain performs single-node moves with a mixed proposal: with
//! probability `epsilon` a uniformly random label among the occupied groups
//! plus one fresh label, otherwise the group of a uniformly chosen incident
//! edge endpoint. Proposal probabilities enter the Metropolis-Hastings
//! correction exactly, so detailed balance holds for every move, including
//! group births and deaths.
//!
//! States are tracked up to label permutation (the statistics do not depend
//! on labels), so the sampling target carries the `B!` label-permutation
//! multiplicity of a `B`-group class:
//!
//! `w(b) = P(A|b,C)^beta * P(b) * B!`
//!
//! At `beta = 1` sample averages converge to posterior averages over
//! labelled partitions; at `beta = 0` the chain samples the partition prior.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::Multigraph;
use crate::model::{
    description_length_from_stats, log_likelihood_from_stats, log_prior_edge_matrix,
    log_prior_partition_from_stats, ModelClass,
};
use crate::partition::{BlockStats, Partition};

/// Derive an independent random stream from a master seed. Distinct stream
/// indices never overlap, which keeps parallel replicates bit-reproducible
/// regardless of scheduling.
pub fn seeded_stream(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Limits on the number of occupied groups during sampling or search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupLimits {
    pub min: usize,
    pub max: Option<usize>,
}

impl GroupLimits {
    pub fn free() -> Self {
        GroupLimits { min: 1, max: None }
    }

    /// Exactly `b` occupied groups: fresh-label proposals are disabled and
    /// moves that would empty a group are rejected.
    pub fn fixed(b: usize) -> Self {
        GroupLimits {
            min: b,
            max: Some(b),
        }
    }

    /// At most `b` occupied groups.
    pub fn capped(b: usize) -> Self {
        GroupLimits {
            min: 1,
            max: Some(b),
        }
    }

    fn cap(&self, node_count: usize) -> usize {
        self.max.unwrap_or(node_count).min(node_count)
    }
}

impl Default for GroupLimits {
    fn default() -> Self {
        GroupLimits::free()
    }
}

/// Probability of proposing a uniformly random label instead of a
/// neighbour's label.
const EPSILON: f64 = 0.1;

/// Threshold for "strictly improving" greedy moves, guarding against
/// floating-point noise cycling.
const GREEDY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MoveTarget {
    Existing(usize),
    Fresh,
}

/// Exact change of the target factors for one single-node move.
#[derive(Debug, Clone, Copy)]
struct MoveEval {
    /// Change in `beta * log2 P(A|b,C) + log2 P(b) + log2 B!`.
    log_target_delta: f64,
    /// Change in `log2 P(A|b,C)` alone.
    log_likelihood_delta: f64,
    /// Change in `log2 P(b)` alone.
    log_prior_delta: f64,
    log_q_forward: f64,
    log_q_reverse: f64,
}

struct TargetDelta {
    likelihood: f64,
    prior: f64,
    multiplicity: f64,
}

/// One MCMC chain: a graph, a labelled partition with maintained sufficient
/// statistics, and a random stream. Exclusively owned by one thread.
pub struct ChainState<'g> {
    graph: &'g Multigraph,
    class: ModelClass,
    beta: f64,
    limits: GroupLimits,
    clamp: bool,
    labels: Vec<u32>,
    stats: BlockStats,
    rng: ChaCha8Rng,
    log_likelihood: f64,
    log_prior: f64,
    weight_buf: Vec<u64>,
    touched_buf: Vec<usize>,
}

impl<'g> ChainState<'g> {
    pub fn new(
        graph: &'g Multigraph,
        class: ModelClass,
        initial: &Partition,
        beta: f64,
        limits: GroupLimits,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        if beta < 0.0 {
            return Err(Error::validation(
                "inverse temperature must be non-negative",
            ));
        }
        let cap = limits.cap(graph.node_count());
        if initial.group_count() > cap || initial.group_count() < limits.min {
            return Err(Error::validation(format!(
                "initial partition has {} groups, outside [{}, {cap}]",
                initial.group_count(),
                limits.min
            )));
        }
        let stats = BlockStats::new(graph, initial)?;
        let mut chain = ChainState {
            graph,
            class,
            beta,
            limits,
            clamp: false,
            labels: initial.labels().to_vec(),
            stats,
            rng,
            log_likelihood: 0.0,
            log_prior: 0.0,
            weight_buf: Vec::new(),
            touched_buf: Vec::new(),
        };
        chain.refresh_log_posterior();
        Ok(chain)
    }

    /// Freeze the partition: sweeps become no-ops. Used when the partition
    /// is known a priori.
    pub fn set_clamp(&mut self, clamp: bool) {
        self.clamp = clamp;
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = beta;
    }

    pub fn group_count(&self) -> usize {
        self.stats.group_count()
    }

    /// Occupancy of `group` in the current state.
    pub fn stats_size(&self, group: usize) -> u64 {
        self.stats.size(group)
    }

    pub fn partition(&self) -> Partition {
        Partition::from_labels(self.labels.clone()).expect("chain labels are dense")
    }

    /// `log2` of the unnormalized posterior `P(A|b,C) P(b)`: the negated
    /// description length of the current state.
    pub fn log_posterior(&self) -> f64 {
        self.log_likelihood + self.log_prior
    }

    pub fn description_length(&self) -> f64 {
        -self.log_posterior()
    }

    /// Recompute the cached log-posterior from the sufficient statistics,
    /// clearing accumulated floating-point drift.
    pub fn refresh_log_posterior(&mut self) {
        self.log_likelihood = log_likelihood_from_stats(self.graph, &self.stats, self.class);
        self.log_prior = log_prior_partition_from_stats(
            self.graph.tables(),
            &self.stats,
            self.graph.node_count() as u64,
        );
    }

    /// Run one sweep of `N` random single-node proposals. Returns the number
    /// of accepted moves that changed the partition.
    pub fn sweep(&mut self) -> usize {
        if self.clamp {
            return 0;
        }
        let n = self.graph.node_count();
        let mut accepted = 0;
        for _ in 0..n {
            let node = self.rng.random_range(0..n);
            let Some(target) = self.propose(node) else {
                continue;
            };
            let Some(eval) = self.evaluate_move(node, target) else {
                continue;
            };
            let log_accept = eval.log_target_delta + eval.log_q_reverse - eval.log_q_forward;
            let accept = log_accept >= 0.0 || {
                let u: f64 = self.rng.random();
                u.ln() < log_accept * std::f64::consts::LN_2
            };
            if accept {
                self.apply_move(
                    node,
                    target,
                    eval.log_likelihood_delta,
                    eval.log_prior_delta,
                );
                accepted += 1;
            }
        }
        self.refresh_log_posterior();
        accepted
    }

    /// Draw a proposal target for `node`; `None` for structurally null
    /// proposals (same label, or a singleton moving to a fresh group).
    fn propose(&mut self, node: usize) -> Option<MoveTarget> {
        let b = self.stats.group_count();
        let cap = self.limits.cap(self.graph.node_count());
        let from = self.labels[node] as usize;
        let degree = self.graph.degree(node);
        let fresh_allowed = b < cap;
        let options = b + usize::from(fresh_allowed);
        let uniform = degree == 0 || self.rng.random::<f64>() < EPSILON;
        let target = if uniform {
            let pick = self.rng.random_range(0..options);
            if pick == b {
                MoveTarget::Fresh
            } else {
                MoveTarget::Existing(pick)
            }
        } else {
            // Uniform incident edge endpoint; self-loops point at `from`.
            let mut pick = self.rng.random_range(0..degree);
            let mut chosen = from;
            for &(nbr, weight) in self.graph.neighbors(node) {
                if pick < weight {
                    chosen = self.labels[nbr as usize] as usize;
                    break;
                }
                pick -= weight;
            }
            MoveTarget::Existing(chosen)
        };
        match target {
            MoveTarget::Existing(t) if t == from => None,
            MoveTarget::Fresh if self.stats.size(from) == 1 => None,
            t => Some(t),
        }
    }

    /// Neighbour-group weights of `node` (self-loops excluded), written into
    /// the scratch buffers. Returns the self-loop weight.
    fn scan_neighbors(&mut self, node: usize) -> u64 {
        let b = self.stats.group_count();
        if self.weight_buf.len() < b {
            self.weight_buf.resize(b, 0);
        }
        for &t in &self.touched_buf {
            self.weight_buf[t] = 0;
        }
        self.touched_buf.clear();
        let mut self_weight = 0;
        for &(nbr, weight) in self.graph.neighbors(node) {
            let nbr = nbr as usize;
            if nbr == node {
                self_weight = weight;
            } else {
                let t = self.labels[nbr] as usize;
                if self.weight_buf[t] == 0 {
                    self.touched_buf.push(t);
                }
                self.weight_buf[t] += weight;
            }
        }
        self_weight
    }

    /// Evaluate a non-null move; `None` when the move is auto-rejected for
    /// violating the group limits.
    fn evaluate_move(&mut self, node: usize, target: MoveTarget) -> Option<MoveEval> {
        let from = self.labels[node] as usize;
        let b = self.stats.group_count();
        let cap = self.limits.cap(self.graph.node_count());
        let emptying = self.stats.size(from) == 1;
        match target {
            MoveTarget::Existing(_) if emptying && b == self.limits.min => return None,
            MoveTarget::Fresh if b >= cap => return None,
            _ => {}
        }
        let degree = self.graph.degree(node);
        let self_weight = self.scan_neighbors(node);

        let (to, b_after) = match target {
            MoveTarget::Existing(t) => (t, if emptying { b - 1 } else { b }),
            MoveTarget::Fresh => (b, b + 1),
        };
        let delta = self.move_delta(from, to, b, b_after, degree, self_weight);

        // Forward proposal probability in the current state.
        let options = b + usize::from(b < cap);
        let uniform_f = if degree == 0 {
            1.0 / options as f64
        } else {
            EPSILON / options as f64
        };
        let neighbor_f = match target {
            MoveTarget::Existing(t) if degree > 0 => {
                let w = self.weight_buf.get(t).copied().unwrap_or(0)
                    + if t == from { self_weight } else { 0 };
                (1.0 - EPSILON) * w as f64 / degree as f64
            }
            _ => 0.0,
        };
        let log_q_forward = (uniform_f + neighbor_f).log2();

        // Reverse proposal probability in the post-move state. When the
        // source group dies, the reverse move re-opens a fresh group, which
        // only the uniform branch proposes.
        let options_r = b_after + usize::from(b_after < cap);
        let uniform_r = if degree == 0 {
            1.0 / options_r as f64
        } else {
            EPSILON / options_r as f64
        };
        let neighbor_r = if emptying || degree == 0 {
            0.0
        } else {
            // After the move the node's self-loops point at its new group,
            // so the weight toward `from` is the pure neighbour weight.
            let w = self.weight_buf.get(from).copied().unwrap_or(0);
            (1.0 - EPSILON) * w as f64 / degree as f64
        };
        let log_q_reverse = (uniform_r + neighbor_r).log2();

        Some(MoveEval {
            log_target_delta: self.beta * delta.likelihood + delta.prior + delta.multiplicity,
            log_likelihood_delta: delta.likelihood,
            log_prior_delta: delta.prior,
            log_q_forward,
            log_q_reverse,
        })
    }

    /// Exact change in log-likelihood, partition prior, and labelling
    /// multiplicity when the current node moves `from -> to` (`to == b`
    /// denotes a fresh group). Uses the weights prepared by
    /// [`ChainState::scan_neighbors`].
    fn move_delta(
        &self,
        from: usize,
        to: usize,
        b: usize,
        b_after: usize,
        degree: u64,
        self_weight: u64,
    ) -> TargetDelta {
        let t = self.graph.tables();
        let stats = &self.stats;
        let fresh = to == b;
        let e = |r: usize, s: usize| -> u64 {
            if fresh && (r == to || s == to) {
                0
            } else {
                stats.edge_count(r, s)
            }
        };
        let d = |g: usize| -> u64 {
            if g >= self.weight_buf.len() {
                0
            } else {
                self.weight_buf[g]
            }
        };

        let d_from = d(from);
        let d_to = d(to);
        let mut likelihood = 0.0;

        // Block-matrix terms: the from/to rows and columns change.
        let e_ff = e(from, from);
        let e_tt = e(to, to);
        let e_ft = e(from, to);
        likelihood += t.ldf_even(e_ff - 2 * d_from - self_weight) - t.ldf_even(e_ff);
        likelihood += t.ldf_even(e_tt + 2 * d_to + self_weight) - t.ldf_even(e_tt);
        likelihood += t.lf(e_ft + d_from - d_to) - t.lf(e_ft);
        for &g in &self.touched_buf {
            if g == from || g == to {
                continue;
            }
            let w = self.weight_buf[g];
            likelihood += t.lf(e(from, g) - w) - t.lf(e(from, g));
            likelihood += t.lf(e(to, g) + w) - t.lf(e(to, g));
        }

        // Size- and degree-sum-dependent terms.
        let n_from = stats.size(from);
        let n_to = if fresh { 0 } else { stats.size(to) };
        let e_from = stats.group_degree(from);
        let e_to = if fresh { 0 } else { stats.group_degree(to) };
        match self.class {
            ModelClass::Sbm => {
                let term = |e_r: u64, n_r: u64| -> f64 {
                    if e_r == 0 {
                        0.0
                    } else {
                        -(e_r as f64) * (n_r as f64).log2()
                    }
                };
                likelihood += term(e_from - degree, n_from - 1) - term(e_from, n_from);
                likelihood += term(e_to + degree, n_to + 1) - term(e_to, n_to);
            }
            ModelClass::Dcsbm => {
                likelihood += t.lf(e_from) - t.lf(e_from - degree);
                likelihood += t.lf(e_to) - t.lf(e_to + degree);
                likelihood +=
                    t.lmultiset(n_from, e_from) - t.lmultiset(n_from - 1, e_from - degree);
                likelihood += t.lmultiset(n_to, e_to) - t.lmultiset(n_to + 1, e_to + degree);
            }
        }

        // The edge-matrix prior depends on the number of groups.
        if b_after != b {
            let edges = self.graph.edge_count();
            likelihood +=
                log_prior_edge_matrix(t, b_after, edges) - log_prior_edge_matrix(t, b, edges);
        }

        // Partition prior: group sizes and the composition coefficient.
        let n_total = self.graph.node_count() as u64;
        let mut prior = t.lf(n_from - 1) - t.lf(n_from) + t.lf(n_to + 1) - t.lf(n_to);
        if b_after != b {
            prior +=
                t.lbinom(n_total - 1, b as u64 - 1) - t.lbinom(n_total - 1, b_after as u64 - 1);
        }

        let multiplicity = t.lf(b_after as u64) - t.lf(b as u64);

        TargetDelta {
            likelihood,
            prior,
            multiplicity,
        }
    }

    fn apply_move(&mut self, node: usize, target: MoveTarget, d_likelihood: f64, d_prior: f64) {
        let from = self.labels[node] as usize;
        let to = match target {
            MoveTarget::Existing(t) => t,
            MoveTarget::Fresh => self.stats.push_group(),
        };
        self.stats
            .apply_move(self.graph, &mut self.labels, node, to);
        if self.stats.size(from) == 0 {
            self.stats.swap_remove_group(&mut self.labels, from);
        }
        self.log_likelihood += d_likelihood;
        self.log_prior += d_prior;
    }

    /// One deterministic pass of steepest-descent single-node moves on the
    /// description length. Returns the number of moves applied.
    fn greedy_pass(&mut self) -> usize {
        let n = self.graph.node_count();
        let cap = self.limits.cap(n);
        let mut moved = 0;
        for node in 0..n {
            let from = self.labels[node] as usize;
            let b = self.stats.group_count();
            let degree = self.graph.degree(node);
            let self_weight = self.scan_neighbors(node);
            let emptying = self.stats.size(from) == 1;
            let mut best: Option<(f64, MoveTarget, f64, f64)> = None;
            for to in 0..=b {
                if to == from {
                    continue;
                }
                let target = if to == b {
                    MoveTarget::Fresh
                } else {
                    MoveTarget::Existing(to)
                };
                match target {
                    MoveTarget::Fresh if emptying || b >= cap => continue,
                    MoveTarget::Existing(_) if emptying && b == self.limits.min => continue,
                    _ => {}
                }
                let b_after = match target {
                    MoveTarget::Existing(_) if emptying => b - 1,
                    MoveTarget::Existing(_) => b,
                    MoveTarget::Fresh => b + 1,
                };
                let delta = self.move_delta(from, to, b, b_after, degree, self_weight);
                // Pure description-length objective; ties break toward the
                // smaller label index by scan order.
                let gain = delta.likelihood + delta.prior;
                if gain > GREEDY_TOL && best.is_none_or(|(g, _, _, _)| gain > g + GREEDY_TOL) {
                    best = Some((gain, target, delta.likelihood, delta.prior));
                }
            }
            if let Some((_, target, d_like, d_prior)) = best {
                self.apply_move(node, target, d_like, d_prior);
                moved += 1;
            }
        }
        self.refresh_log_posterior();
        moved
    }

    /// Greedy descent until no improving single-node move exists.
    pub fn greedy_until_stable(&mut self) -> usize {
        let mut total = 0;
        loop {
            let moved = self.greedy_pass();
            total += moved;
            if moved == 0 {
                return total;
            }
        }
    }

    /// Disband `group` by moving each member, one node at a time, to its
    /// best other group (the move is forced even when no target improves
    /// the description length). The emptied group is removed.
    pub fn evict_group(&mut self, group: usize) -> Result<()> {
        let b = self.stats.group_count();
        if group >= b {
            return Err(Error::validation(format!("group {group} out of range")));
        }
        if b <= self.limits.min || b == 1 {
            return Err(Error::validation("cannot evict below the group minimum"));
        }
        let members: Vec<usize> = (0..self.labels.len())
            .filter(|&v| self.labels[v] as usize == group)
            .collect();
        for node in members {
            let b = self.stats.group_count();
            let degree = self.graph.degree(node);
            let self_weight = self.scan_neighbors(node);
            let emptying = self.stats.size(group) == 1;
            let b_after = if emptying { b - 1 } else { b };
            let mut best: Option<(f64, usize, f64, f64)> = None;
            for to in 0..b {
                if to == group {
                    continue;
                }
                let delta = self.move_delta(group, to, b, b_after, degree, self_weight);
                let gain = delta.likelihood + delta.prior;
                if best.is_none_or(|(g, _, _, _)| gain > g) {
                    best = Some((gain, to, delta.likelihood, delta.prior));
                }
            }
            let (_, to, d_like, d_prior) = best.expect("at least two groups");
            self.apply_move(node, MoveTarget::Existing(to), d_like, d_prior);
        }
        self.refresh_log_posterior();
        Ok(())
    }

    fn snapshot(&self) -> ChainSnapshot {
        ChainSnapshot {
            labels: self.labels.clone(),
            stats: self.stats.clone(),
            log_likelihood: self.log_likelihood,
            log_prior: self.log_prior,
        }
    }

    fn restore(&mut self, snap: &ChainSnapshot) {
        self.labels.clone_from(&snap.labels);
        self.stats = snap.stats.clone();
        self.log_likelihood = snap.log_likelihood;
        self.log_prior = snap.log_prior;
    }

    /// Try to shed whole groups: tentatively evict each group (smallest
    /// first) followed by greedy descent, keeping the eviction whenever it
    /// lowers the description length. Repeats until no eviction helps.
    ///
    /// Single-node chains cross the barrier between a split and a merged
    /// pair of groups only with vanishing probability, so annealed states
    /// often retain spurious group fragments; this polish removes them
    /// while still being composed entirely of single-node moves.
    pub fn polish_groups(&mut self) {
        loop {
            let mut improved = false;
            let b = self.stats.group_count();
            if b <= self.limits.min || b == 1 {
                return;
            }
            let mut order: Vec<usize> = (0..b).collect();
            order.sort_by_key(|&g| self.stats.size(g));
            for group in order {
                if self.stats.group_count() <= self.limits.min.max(1) {
                    break;
                }
                if group >= self.stats.group_count() {
                    continue;
                }
                let sigma_before = self.description_length();
                let snap = self.snapshot();
                if self.evict_group(group).is_err() {
                    continue;
                }
                self.greedy_until_stable();
                if self.description_length() < sigma_before - GREEDY_TOL {
                    improved = true;
                    break;
                }
                self.restore(&snap);
            }
            if !improved {
                return;
            }
        }
    }
}

struct ChainSnapshot {
    labels: Vec<u32>,
    stats: BlockStats,
    log_likelihood: f64,
    log_prior: f64,
}

/// A posterior sample: recorded partitions with their log-posteriors.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    pub partitions: Vec<Partition>,
    pub log_posteriors: Vec<f64>,
    pub sweep_interval: usize,
    pub burn_in: usize,
}

impl PosteriorSample {
    /// A degenerate "sample" holding one fixed partition, for clamped
    /// single-point evaluation through the averaged code path.
    pub fn fixed(graph: &Multigraph, partition: Partition, class: ModelClass) -> Result<Self> {
        let sigma = crate::model::description_length(graph, &partition, class)?;
        Ok(PosteriorSample {
            partitions: vec![partition],
            log_posteriors: vec![-sigma],
            sweep_interval: 0,
            burn_in: 0,
        })
    }
}

/// Configuration for [`sample_posterior`].
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub sweep_interval: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Random stream index; lets callers run many reproducible chains from
    /// one master seed.
    pub stream: u64,
    pub limits: GroupLimits,
    /// Start from this partition (default: every node in one group).
    pub initial: Option<Partition>,
    /// Keep the initial partition fixed ("known a priori" evaluation).
    pub clamp: bool,
}

impl SamplerConfig {
    pub fn new(n_samples: usize, sweep_interval: usize, burn_in: usize, seed: u64) -> Self {
        SamplerConfig {
            n_samples,
            sweep_interval,
            burn_in,
            seed,
            stream: 0,
            limits: GroupLimits::free(),
            initial: None,
            clamp: false,
        }
    }
}

/// Sample partitions from `P(b | A, class)`: `burn_in` sweeps, then
/// `sweep_interval` sweeps before each of `n_samples` records.
/// Deterministic given the seed and stream.
pub fn sample_posterior(
    graph: &Multigraph,
    class: ModelClass,
    config: &SamplerConfig,
) -> Result<PosteriorSample> {
    if config.n_samples == 0 {
        return Err(Error::validation("n_samples must be at least 1"));
    }
    let initial = match &config.initial {
        Some(p) => p.clone(),
        None => Partition::single_group(graph.node_count()),
    };
    let rng = seeded_stream(config.seed, config.stream);
    let mut chain = ChainState::new(graph, class, &initial, 1.0, config.limits, rng)?;
    chain.set_clamp(config.clamp);
    for _ in 0..config.burn_in {
        chain.sweep();
    }
    let mut partitions = Vec::with_capacity(config.n_samples);
    let mut log_posteriors = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        for _ in 0..config.sweep_interval {
            chain.sweep();
        }
        partitions.push(chain.partition());
        log_posteriors.push(chain.log_posterior());
    }
    Ok(PosteriorSample {
        partitions,
        log_posteriors,
        sweep_interval: config.sweep_interval,
        burn_in: config.burn_in,
    })
}

/// Configuration for [`find_map_partition`] and [`refine_partition`].
#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub restarts: usize,
    pub anneal_sweeps: usize,
    /// Starting inverse temperature of the geometric annealing schedule.
    pub beta_min: f64,
    pub beta_max: f64,
    pub seed: u64,
    pub stream: u64,
    pub limits: GroupLimits,
    /// Number of groups in the random initial partition. When unset,
    /// restarts cycle through a geometric ladder of initial group counts;
    /// overparametrized starts align reliably and the eviction polish sheds
    /// the surplus groups afterwards.
    pub init_groups: Option<usize>,
    /// Run the group-eviction polish after greedy descent.
    pub group_polish: bool,
}

impl SearchConfig {
    pub fn new(seed: u64) -> Self {
        SearchConfig {
            restarts: 10,
            anneal_sweeps: 1000,
            beta_min: 1.0,
            beta_max: 10.0,
            seed,
            stream: 0,
            limits: GroupLimits::free(),
            init_groups: None,
            group_polish: true,
        }
    }

    /// Shorter schedule for replicated experiments.
    pub fn quick(seed: u64) -> Self {
        SearchConfig {
            restarts: 4,
            anneal_sweeps: 300,
            ..SearchConfig::new(seed)
        }
    }

    pub fn with_limits(mut self, limits: GroupLimits) -> Self {
        self.limits = limits;
        self
    }
}

/// Random partition with exactly `groups` occupied groups.
fn random_partition(n: usize, groups: usize, rng: &mut ChaCha8Rng) -> Partition {
    debug_assert!(groups >= 1 && groups <= n);
    let mut labels: Vec<u32> = (0..n).map(|i| (i % groups) as u32).collect();
    // Fisher-Yates keeps every group occupied while randomizing membership.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    Partition::from_labels(labels).expect("non-empty")
}

/// Initial group counts tried across restarts: a geometric ladder from 2 up
/// to about twice `sqrt(N)`.
fn init_ladder(n: usize, limits: &GroupLimits) -> Vec<usize> {
    let cap = limits.cap(n);
    let top = ((2.0 * (n as f64).sqrt()).round() as usize).clamp(2, cap);
    let mut ladder: Vec<usize> = Vec::new();
    let steps = 5usize;
    for k in 0..steps {
        let v = (2.0 * (top as f64 / 2.0).powf(k as f64 / (steps - 1) as f64)).round() as usize;
        let v = v.clamp(limits.min.max(1), cap);
        if !ladder.contains(&v) {
            ladder.push(v);
        }
    }
    if ladder.is_empty() {
        ladder.push(limits.min.max(1).min(cap));
    }
    ladder
}

/// Anneal from `initial` (geometric `beta_min -> beta_max`), then greedy
/// descent and optionally the group-eviction polish. Returns the refined
/// partition and its description length.
pub fn refine_partition(
    graph: &Multigraph,
    class: ModelClass,
    initial: &Partition,
    config: &SearchConfig,
    rng: ChaCha8Rng,
) -> Result<(Partition, f64)> {
    let mut chain = ChainState::new(graph, class, initial, config.beta_min, config.limits, rng)?;
    let sweeps = config.anneal_sweeps.max(1);
    for k in 0..config.anneal_sweeps {
        let frac = k as f64 / sweeps as f64;
        chain.set_beta(config.beta_min * (config.beta_max / config.beta_min).powf(frac));
        chain.sweep();
    }
    chain.greedy_until_stable();
    if config.group_polish {
        chain.polish_groups();
    }
    Ok((chain.partition(), chain.description_length()))
}

/// Search for the partition minimizing the description length: simulated
/// annealing followed by greedy descent, best of `restarts` independent
/// starts. The search is a best-effort heuristic; the returned value is the
/// description length of the returned partition.
pub fn find_map_partition(
    graph: &Multigraph,
    class: ModelClass,
    config: &SearchConfig,
) -> Result<(Partition, f64)> {
    if config.restarts == 0 {
        return Err(Error::validation("restarts must be at least 1"));
    }
    let n = graph.node_count();
    let cap = config.limits.cap(n);
    let ladder = match config.init_groups {
        Some(g) => vec![g.clamp(config.limits.min.max(1), cap)],
        None => init_ladder(n, &config.limits),
    };
    let mut best: Option<(Partition, f64)> = None;
    for restart in 0..config.restarts {
        let mut rng = seeded_stream(config.seed, (config.stream << 20) + restart as u64);
        let init_groups = ladder[restart % ladder.len()];
        let initial = random_partition(n, init_groups, &mut rng);
        let (partition, sigma) = refine_partition(graph, class, &initial, config, rng)?;
        if best.as_ref().is_none_or(|(_, s)| sigma < *s) {
            best = Some((partition, sigma));
        }
    }
    let (partition, sigma) = best.expect("at least one restart");
    debug_assert!(
        (sigma - description_length_from_stats(graph, &BlockStats::new(graph, &partition)?, class))
            .abs()
            < 1e-6
    );
    Ok((partition, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::description_length;
    use std::collections::HashMap;

    fn small_graph() -> Multigraph {
        Multigraph::parse_edge_list("0 1\n1 2\n2 0\n2 3\n3 4\n4 2\n0 0\n").unwrap()
    }

    /// Acceptance-ratio identity: the log argument of the Metropolis rule is
    /// exactly antisymmetric under move reversal, with deltas matching
    /// from-scratch recomputation.
    #[test]
    fn detailed_balance_on_random_states() {
        let g = small_graph();
        for class in ModelClass::ALL {
            for seed in 0..20u64 {
                let start = random_partition(g.node_count(), 3, &mut seeded_stream(seed, 7));
                let chain = ChainState::new(
                    &g,
                    class,
                    &start,
                    0.85,
                    GroupLimits::free(),
                    seeded_stream(seed, 0),
                )
                .unwrap();
                let node = (seed as usize) % g.node_count();
                let b = chain.group_count();
                for to in 0..=b {
                    let mut fwd_chain = ChainState::new(
                        &g,
                        class,
                        &start,
                        0.85,
                        GroupLimits::free(),
                        seeded_stream(seed, 1),
                    )
                    .unwrap();
                    let from = fwd_chain.labels[node] as usize;
                    let source_was_singleton = fwd_chain.stats.size(from) == 1;
                    if to == from || (to == b && source_was_singleton) {
                        continue;
                    }
                    let target = if to == b {
                        MoveTarget::Fresh
                    } else {
                        MoveTarget::Existing(to)
                    };
                    let Some(fwd) = fwd_chain.evaluate_move(node, target) else {
                        continue;
                    };

                    let before_sigma = fwd_chain.description_length();
                    let before_like = fwd_chain.log_likelihood;
                    fwd_chain.apply_move(
                        node,
                        target,
                        fwd.log_likelihood_delta,
                        fwd.log_prior_delta,
                    );
                    fwd_chain.refresh_log_posterior();
                    let exact_like = fwd_chain.log_likelihood - before_like;
                    assert!(
                        (fwd.log_likelihood_delta - exact_like).abs() < 1e-9,
                        "likelihood delta {} vs exact {}",
                        fwd.log_likelihood_delta,
                        exact_like
                    );
                    let exact_sigma_drop = before_sigma - fwd_chain.description_length();
                    assert!(
                        (fwd.log_likelihood_delta + fwd.log_prior_delta - exact_sigma_drop).abs()
                            < 1e-9
                    );

                    // Reverse the move: back to the original group, or to a
                    // fresh group if the source died.
                    let reverse_target = if source_was_singleton {
                        MoveTarget::Fresh
                    } else {
                        MoveTarget::Existing(from)
                    };
                    let rev = fwd_chain
                        .evaluate_move(node, reverse_target)
                        .expect("reversible");
                    assert!(
                        (fwd.log_target_delta + rev.log_target_delta).abs() < 1e-9,
                        "target delta not antisymmetric: {} vs {}",
                        fwd.log_target_delta,
                        rev.log_target_delta
                    );
                    let fwd_arg = fwd.log_target_delta + fwd.log_q_reverse - fwd.log_q_forward;
                    let rev_arg = rev.log_target_delta + rev.log_q_reverse - rev.log_q_forward;
                    assert!(
                        (fwd_arg + rev_arg).abs() < 1e-9,
                        "acceptance argument not antisymmetric: {fwd_arg} vs {rev_arg}"
                    );
                    assert!(
                        (fwd.log_q_forward - rev.log_q_reverse).abs() < 1e-12
                            && (fwd.log_q_reverse - rev.log_q_forward).abs() < 1e-12,
                        "proposal probabilities must swap under reversal"
                    );
                }
            }
        }
    }

    /// At beta = 0 the chain samples the partition prior: long-run class
    /// frequencies match `B! * P(b)` (chi-square test, N = 5).
    #[test]
    fn beta_zero_samples_partition_prior() {
        let g = Multigraph::parse_edge_list("0 1\n1 2\n2 3\n3 4\n4 0\n").unwrap();
        let n = 5usize;
        // Exact class masses from all surjective labellings.
        let mut exact: HashMap<Vec<u32>, f64> = HashMap::new();
        for code in 0..(n as u64).pow(n as u32) {
            let mut labels = Vec::with_capacity(n);
            let mut c = code;
            for _ in 0..n {
                labels.push((c % n as u64) as u32);
                c /= n as u64;
            }
            let b = (*labels.iter().max().unwrap() + 1) as usize;
            let mut seen = vec![false; b];
            for &l in &labels {
                seen[l as usize] = true;
            }
            if !seen.iter().all(|&s| s) {
                continue;
            }
            let p = Partition::from_labels(labels).unwrap();
            let mass = crate::model::log_prior_partition(&p).exp2();
            *exact
                .entry(p.canonical_form().labels().to_vec())
                .or_insert(0.0) += mass;
        }
        let total: f64 = exact.values().sum();
        assert!(
            (total - 1.0).abs() < 1e-9,
            "prior must normalize, got {total}"
        );
        assert_eq!(exact.len(), 52, "Bell(5) classes");

        let mut chain = ChainState::new(
            &g,
            ModelClass::Sbm,
            &Partition::single_group(n),
            0.0,
            GroupLimits::free(),
            seeded_stream(99, 0),
        )
        .unwrap();
        for _ in 0..2_000 {
            chain.sweep();
        }
        let samples = 120_000usize;
        let thin = 8usize;
        let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
        for _ in 0..samples {
            for _ in 0..thin {
                chain.sweep();
            }
            *counts
                .entry(chain.partition().canonical_form().labels().to_vec())
                .or_insert(0) += 1;
        }
        let mut chi2 = 0.0;
        for (labels, p) in &exact {
            let expect = p * samples as f64;
            let observed = counts.get(labels).copied().unwrap_or(0) as f64;
            chi2 += (observed - expect).powi(2) / expect;
        }
        // df = 51: the 1e-4 quantile is ~103; allow headroom for residual
        // autocorrelation in the thinned chain.
        assert!(chi2 < 160.0, "chi-square too large: {chi2}");
    }

    #[test]
    fn single_node_never_moves() {
        let g = Multigraph::empty(1);
        let mut chain = ChainState::new(
            &g,
            ModelClass::Sbm,
            &Partition::single_group(1),
            1.0,
            GroupLimits::free(),
            seeded_stream(3, 0),
        )
        .unwrap();
        for _ in 0..50 {
            assert_eq!(chain.sweep(), 0);
        }
        assert_eq!(chain.group_count(), 1);
    }

    #[test]
    fn sampler_degenerate_and_definitional_cases() {
        let g = small_graph();
        let cfg = SamplerConfig::new(1, 0, 0, 5);
        let sample = sample_posterior(&g, ModelClass::Sbm, &cfg).unwrap();
        assert_eq!(sample.partitions.len(), 1);
        assert_eq!(
            sample.partitions[0],
            Partition::single_group(g.node_count())
        );

        let cfg = SamplerConfig::new(8, 3, 10, 5);
        let sample = sample_posterior(&g, ModelClass::Dcsbm, &cfg).unwrap();
        for (p, lp) in sample.partitions.iter().zip(&sample.log_posteriors) {
            let sigma = description_length(&g, p, ModelClass::Dcsbm).unwrap();
            assert!((lp + sigma).abs() < 1e-9, "log-posterior must negate sigma");
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let g = small_graph();
        let cfg = SamplerConfig::new(5, 2, 20, 42);
        let a = sample_posterior(&g, ModelClass::Sbm, &cfg).unwrap();
        let b = sample_posterior(&g, ModelClass::Sbm, &cfg).unwrap();
        assert_eq!(a.partitions, b.partitions);
        assert_eq!(a.log_posteriors, b.log_posteriors);
    }

    #[test]
    fn separates_disconnected_cliques() {
        // Two disconnected 10-cliques: samples should split them apart.
        let mut entries = Vec::new();
        for base in [0usize, 10] {
            for i in 0..10 {
                for j in (i + 1)..10 {
                    entries.push((base + i, base + j, 1u64));
                }
            }
        }
        let g = Multigraph::from_entries(20, entries).unwrap();
        let mut hits = 0;
        let mut total = 0;
        for seed in 0..20u64 {
            let mut cfg = SamplerConfig::new(10, 2, 150, seed);
            cfg.initial = Some(random_partition(20, 4, &mut seeded_stream(seed, 55)));
            let sample = sample_posterior(&g, ModelClass::Sbm, &cfg).unwrap();
            for p in &sample.partitions {
                total += 1;
                let first = p.label(0);
                let split_ok = (0..10).all(|i| p.label(i) == first)
                    && (10..20).all(|i| p.label(i) != first)
                    && (11..20).all(|i| p.label(i) == p.label(10));
                if split_ok {
                    hits += 1;
                }
            }
        }
        assert!(
            hits as f64 >= 0.9 * total as f64,
            "only {hits}/{total} samples separated the cliques"
        );
    }

    #[test]
    fn map_search_matches_exhaustive_minimum() {
        // N = 6: compare against the global minimum over all labellings.
        let g = Multigraph::parse_edge_list("0 1\n1 2\n0 2\n3 4\n4 5\n3 5\n2 3\n").unwrap();
        for class in ModelClass::ALL {
            let mut best = f64::INFINITY;
            for code in 0..6u64.pow(6) {
                let mut labels = Vec::with_capacity(6);
                let mut c = code;
                for _ in 0..6 {
                    labels.push((c % 6) as u32);
                    c /= 6;
                }
                let p = Partition::from_labels(labels).unwrap();
                best = best.min(description_length(&g, &p, class).unwrap());
            }
            let cfg = SearchConfig {
                restarts: 6,
                anneal_sweeps: 150,
                ..SearchConfig::new(17)
            };
            let (map, sigma) = find_map_partition(&g, class, &cfg).unwrap();
            assert!(
                (sigma - best).abs() < 1e-9,
                "{class}: found {sigma}, global minimum {best}"
            );
            let direct = description_length(&g, &map, class).unwrap();
            assert!((direct - sigma).abs() < 1e-9);
        }
    }

    #[test]
    fn map_search_on_cliques_beats_planted() {
        let mut entries = Vec::new();
        for base in [0usize, 5] {
            for i in 0..5 {
                for j in (i + 1)..5 {
                    entries.push((base + i, base + j, 1u64));
                }
            }
        }
        let g = Multigraph::from_entries(10, entries).unwrap();
        let planted = Partition::blocks(10, 5).unwrap();
        let planted_sigma = description_length(&g, &planted, ModelClass::Sbm).unwrap();
        let cfg = SearchConfig {
            restarts: 5,
            anneal_sweeps: 120,
            ..SearchConfig::new(29)
        };
        let (_, sigma) = find_map_partition(&g, ModelClass::Sbm, &cfg).unwrap();
        assert!(sigma <= planted_sigma + 1e-9);
    }

    #[test]
    fn map_of_empty_graph_is_single_group() {
        let g = Multigraph::empty(6);
        let cfg = SearchConfig {
            restarts: 3,
            anneal_sweeps: 60,
            ..SearchConfig::new(4)
        };
        let (map, _) = find_map_partition(&g, ModelClass::Sbm, &cfg).unwrap();
        assert_eq!(map.group_count(), 1);
    }

    #[test]
    fn greedy_is_monotone() {
        let g = small_graph();
        let mut chain = ChainState::new(
            &g,
            ModelClass::Sbm,
            &random_partition(g.node_count(), 4, &mut seeded_stream(8, 1)),
            1.0,
            GroupLimits::free(),
            seeded_stream(8, 2),
        )
        .unwrap();
        let mut last = chain.description_length();
        loop {
            let moved = chain.greedy_pass();
            let now = chain.description_length();
            assert!(
                now <= last + 1e-9,
                "greedy increased sigma: {last} -> {now}"
            );
            last = now;
            if moved == 0 {
                break;
            }
        }
    }

    #[test]
    fn forced_group_count_is_respected() {
        let g = small_graph();
        let limits = GroupLimits::fixed(3);
        let mut chain = ChainState::new(
            &g,
            ModelClass::Sbm,
            &random_partition(g.node_count(), 3, &mut seeded_stream(12, 0)),
            1.0,
            limits,
            seeded_stream(12, 1),
        )
        .unwrap();
        for _ in 0..200 {
            chain.sweep();
            assert_eq!(chain.group_count(), 3);
        }
    }

    #[test]
    fn clamped_chain_never_moves() {
        let g = small_graph();
        let planted = Partition::from_labels(vec![0, 0, 0, 1, 1]).unwrap();
        let mut chain = ChainState::new(
            &g,
            ModelClass::Sbm,
            &planted,
            1.0,
            GroupLimits::free(),
            seeded_stream(2, 0),
        )
        .unwrap();
        chain.set_clamp(true);
        for _ in 0..50 {
            assert_eq!(chain.sweep(), 0);
        }
        assert_eq!(chain.partition(), planted);
    }
}

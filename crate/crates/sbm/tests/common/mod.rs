//! Exhaustive enumeration oracles shared by the integration tests.
//!
//! Everything here is brute force by construction and independent of the
//! incremental code paths it is used to check.

// Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]

use std::collections::HashMap;

use sbm::math::log_sum_exp2;
use sbm::model::{description_length, ModelClass};
use sbm::partition::Partition;
use sbm::Multigraph;

/// All canonical (first-occurrence labelled) partitions of `n` nodes with at
/// most `max_groups` groups.
pub fn enumerate_partitions(n: usize, max_groups: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut prefix: Vec<u32> = Vec::with_capacity(n);
    fn recurse(prefix: &mut Vec<u32>, n: usize, cap: usize, out: &mut Vec<Partition>) {
        if prefix.len() == n {
            out.push(Partition::from_labels(prefix.clone()).unwrap());
            return;
        }
        let next = prefix.iter().copied().max().map_or(0, |m| m + 1);
        for label in 0..=next.min(cap as u32 - 1) {
            prefix.push(label);
            recurse(prefix, n, cap, out);
            prefix.pop();
        }
    }
    recurse(&mut prefix, n, max_groups, &mut out);
    out
}

pub fn log2_factorial(n: usize) -> f64 {
    (1..=n).map(|v| (v as f64).log2()).sum()
}

/// Exact posterior over partition classes: weight `B! * 2^(-Sigma)` per
/// canonical class, normalized. Keys are canonical label vectors.
pub fn exact_class_posterior(
    graph: &Multigraph,
    class: ModelClass,
    max_groups: usize,
) -> HashMap<Vec<u32>, f64> {
    let classes = enumerate_partitions(graph.node_count(), max_groups);
    let logs: Vec<(Vec<u32>, f64)> = classes
        .iter()
        .map(|p| {
            let sigma = description_length(graph, p, class).unwrap();
            (
                p.labels().to_vec(),
                -sigma + log2_factorial(p.group_count()),
            )
        })
        .collect();
    let norm = log_sum_exp2(&logs.iter().map(|(_, w)| *w).collect::<Vec<_>>());
    logs.into_iter()
        .map(|(labels, w)| (labels, (w - norm).exp2()))
        .collect()
}

/// `log2 sum_b P(A|b,class) P(b)` over all labelled partitions (marginal
/// evidence restricted to `max_groups`).
pub fn log_marginal_evidence(graph: &Multigraph, class: ModelClass, max_groups: usize) -> f64 {
    let classes = enumerate_partitions(graph.node_count(), max_groups);
    let logs: Vec<f64> = classes
        .iter()
        .map(|p| -description_length(graph, p, class).unwrap() + log2_factorial(p.group_count()))
        .collect();
    log_sum_exp2(&logs)
}

/// All multigraphs on `n` nodes with exactly `edges` edge units (self-loops
/// included, diagonal stored doubled).
pub fn enumerate_multigraphs(n: usize, edges: u64) -> Vec<Multigraph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let mut out = Vec::new();
    let mut units = vec![0u64; pairs.len()];
    fn recurse(
        idx: usize,
        remaining: u64,
        units: &mut Vec<u64>,
        pairs: &[(usize, usize)],
        n: usize,
        out: &mut Vec<Multigraph>,
    ) {
        if idx == pairs.len() {
            if remaining == 0 {
                let entries: Vec<(usize, usize, u64)> = pairs
                    .iter()
                    .zip(units.iter())
                    .filter(|(_, &u)| u > 0)
                    .map(|(&(i, j), &u)| (i, j, u))
                    .collect();
                out.push(Multigraph::from_entries(n, entries).unwrap());
            }
            return;
        }
        for u in 0..=remaining {
            units[idx] = u;
            recurse(idx + 1, remaining - u, units, pairs, n, out);
        }
        units[idx] = 0;
    }
    recurse(0, edges, &mut units, &pairs, n, &mut out);
    out
}

/// All surjective labellings (not classes) of `n` nodes.
pub fn enumerate_labelings(n: usize) -> Vec<Partition> {
    let mut out = Vec::new();
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
        if seen.iter().all(|&s| s) {
            out.push(Partition::from_labels(labels).unwrap());
        }
    }
    out
}

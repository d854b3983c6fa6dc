//! Undirected multigraphs with the doubled-diagonal self-loop convention.
//!
//! The adjacency value `A[i][j]` counts parallel edges between `i` and `j`;
//! `A[i][i]` stores *twice* the number of self-loops at `i`, so that node
//! degrees `k_i = sum_j A[i][j]` always satisfy `sum_i k_i = 2E` without
//! special cases.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::sync::OnceLock;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::LogFactorial;

/// An immutable undirected multigraph.
#[derive(Debug)]
pub struct Multigraph {
    node_count: usize,
    /// Pair multiplicities keyed by `(i, j)` with `i <= j`; the diagonal
    /// entry holds the doubled self-loop count and is always even.
    pairs: BTreeMap<(u32, u32), u64>,
    /// Total edge units: off-diagonal multiplicities plus half the diagonal.
    edge_count: u64,
    degrees: Vec<u64>,
    /// Neighbour lists `(j, weight)`; a node with self-loops lists itself
    /// with its doubled diagonal value, so weights sum to the degree.
    adjacency: Vec<Vec<(u32, u64)>>,
    tables: OnceLock<LogFactorial>,
    adjacency_log_term: OnceLock<f64>,
}

impl Multigraph {
    /// Build a graph from `(i, j, multiplicity)` entries. Self-loop entries
    /// `(i, i, m)` add `m` loops, i.e. `2m` to the stored diagonal. Repeated
    /// entries accumulate.
    pub fn from_entries(
        node_count: usize,
        entries: impl IntoIterator<Item = (usize, usize, u64)>,
    ) -> Result<Self> {
        let mut pairs: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        let mut max_node = if node_count > 0 { node_count - 1 } else { 0 };
        for (a, b, m) in entries {
            let (i, j) = if a <= b { (a, b) } else { (b, a) };
            max_node = max_node.max(j);
            let stored = if i == j { 2 * m } else { m };
            if stored > 0 {
                *pairs.entry((i as u32, j as u32)).or_insert(0) += stored;
            }
        }
        Self::from_pair_map(max_node + 1, pairs)
    }

    fn from_pair_map(node_count: usize, pairs: BTreeMap<(u32, u32), u64>) -> Result<Self> {
        let mut degrees = vec![0u64; node_count];
        let mut adjacency = vec![Vec::new(); node_count];
        let mut edge_count = 0u64;
        for (&(i, j), &m) in &pairs {
            if m == 0 {
                continue;
            }
            let (iu, ju) = (i as usize, j as usize);
            if ju >= node_count {
                return Err(Error::validation(format!(
                    "edge endpoint {j} out of range for {node_count} nodes"
                )));
            }
            if i == j {
                debug_assert!(m % 2 == 0);
                edge_count += m / 2;
                degrees[iu] += m;
                adjacency[iu].push((i, m));
            } else {
                edge_count += m;
                degrees[iu] += m;
                degrees[ju] += m;
                adjacency[iu].push((j, m));
                adjacency[ju].push((i, m));
            }
        }
        Ok(Multigraph {
            node_count,
            pairs,
            edge_count,
            degrees,
            adjacency,
            tables: OnceLock::new(),
            adjacency_log_term: OnceLock::new(),
        })
    }

    /// Graph with `node_count` nodes and no edges.
    pub fn empty(node_count: usize) -> Self {
        Self::from_pair_map(node_count, BTreeMap::new()).expect("empty graph is valid")
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Total number of edge units `E`.
    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    /// Degree `k_i` (self-loops contribute their doubled stored value).
    pub fn degree(&self, node: usize) -> u64 {
        self.degrees[node]
    }

    pub fn degrees(&self) -> &[u64] {
        &self.degrees
    }

    /// Stored multiplicity for `(i, j)`; the diagonal reports the doubled
    /// self-loop count.
    pub fn multiplicity(&self, i: usize, j: usize) -> u64 {
        let key = if i <= j {
            (i as u32, j as u32)
        } else {
            (j as u32, i as u32)
        };
        self.pairs.get(&key).copied().unwrap_or(0)
    }

    /// Neighbour list of `(j, weight)` pairs; weights sum to `degree(i)`.
    pub fn neighbors(&self, node: usize) -> &[(u32, u64)] {
        &self.adjacency[node]
    }

    /// Occupied pairs in sorted order, diagonal doubled.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.pairs
            .iter()
            .map(|(&(i, j), &m)| (i as usize, j as usize, m))
    }

    /// Number of unordered non-adjacent pairs `i < j` (self pairs excluded).
    pub fn non_edge_count(&self) -> u64 {
        let n = self.node_count as u64;
        let total = n * (n - 1) / 2;
        let occupied = self
            .pairs
            .iter()
            .filter(|(&(i, j), &m)| i != j && m > 0)
            .count() as u64;
        total - occupied
    }

    /// Copy of this graph with one extra edge unit at `(i, j)`.
    pub fn plus_unit(&self, i: usize, j: usize) -> Result<Self> {
        self.with_unit_change(i, j, 1)
    }

    /// Copy of this graph with one edge unit removed from `(i, j)`.
    pub fn minus_unit(&self, i: usize, j: usize) -> Result<Self> {
        self.with_unit_change(i, j, -1)
    }

    fn with_unit_change(&self, i: usize, j: usize, delta: i64) -> Result<Self> {
        if i >= self.node_count || j >= self.node_count {
            return Err(Error::validation("endpoint out of range"));
        }
        let key = if i <= j {
            (i as u32, j as u32)
        } else {
            (j as u32, i as u32)
        };
        let step = if i == j { 2 * delta } else { delta };
        let mut pairs = self.pairs.clone();
        let current = pairs.get(&key).copied().unwrap_or(0) as i64;
        let next = current + step;
        if next < 0 {
            return Err(Error::validation(format!(
                "no edge unit to remove at ({i}, {j})"
            )));
        }
        if next == 0 {
            pairs.remove(&key);
        } else {
            pairs.insert(key, next as u64);
        }
        Self::from_pair_map(self.node_count, pairs)
    }

    /// Shared `log2`-factorial table sized for this graph's statistics.
    pub(crate) fn tables(&self) -> &LogFactorial {
        self.tables.get_or_init(|| {
            let needed = (2 * self.edge_count as usize + self.node_count).max(64) + 8;
            LogFactorial::with_max(needed)
        })
    }

    /// `sum_{i<j} log2(A_ij!) + sum_i log2(A_ii!!)`: the partition-independent
    /// adjacency term of the microcanonical likelihoods.
    pub(crate) fn adjacency_log_term(&self) -> f64 {
        *self.adjacency_log_term.get_or_init(|| {
            let t = self.tables();
            self.pairs
                .iter()
                .map(|(&(i, j), &m)| if i == j { t.ldf_even(m) } else { t.lf(m) })
                .sum()
        })
    }

    /// Parse edge-list text: one `i j [multiplicity]` entry per line, `#`
    /// comments, optional `N <count>` header declaring the node count. When
    /// no line references index 0 the input is taken as 1-based and shifted.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        Self::read_edge_list(text.as_bytes())
    }

    /// Streaming version of [`Multigraph::parse_edge_list`].
    pub fn read_edge_list(reader: impl BufRead) -> Result<Self> {
        let mut declared_nodes: Option<usize> = None;
        let mut raw: Vec<(u64, u64, u64)> = Vec::new();
        let mut min_index = u64::MAX;
        let mut max_index = 0u64;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields[0] == "N" {
                if fields.len() != 2 {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "header must be `N <count>`".into(),
                    });
                }
                let n = fields[1].parse::<usize>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad node count: {e}"),
                })?;
                declared_nodes = Some(n);
                continue;
            }
            if fields.len() != 2 && fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "expected `i j [multiplicity]`, found {} fields",
                        fields.len()
                    ),
                });
            }
            let parse_endpoint = |s: &str| -> Result<u64> {
                s.parse::<i64>()
                    .map_err(|e| Error::Parse {
                        line: lineno,
                        message: format!("bad endpoint `{s}`: {e}"),
                    })
                    .and_then(|v| {
                        if v < 0 {
                            Err(Error::Validation(format!(
                                "negative endpoint {v} on line {lineno}"
                            )))
                        } else {
                            Ok(v as u64)
                        }
                    })
            };
            let i = parse_endpoint(fields[0])?;
            let j = parse_endpoint(fields[1])?;
            let m = if fields.len() == 3 {
                let v = fields[2].parse::<i64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("bad multiplicity `{}`: {e}", fields[2]),
                })?;
                if v <= 0 {
                    return Err(Error::Validation(format!(
                        "multiplicity must be positive on line {lineno}, found {v}"
                    )));
                }
                v as u64
            } else {
                1
            };
            min_index = min_index.min(i).min(j);
            max_index = max_index.max(i).max(j);
            raw.push((i, j, m));
        }
        // 1-based inputs never mention node 0. With a declared node count
        // the indices are shifted only when a 0-based reading would not fit.
        let offset = match declared_nodes {
            Some(n) if !raw.is_empty() => u64::from(min_index >= 1 && max_index as usize == n),
            Some(_) => 0,
            None => u64::from(!raw.is_empty() && min_index >= 1),
        };
        let implied = if raw.is_empty() {
            0
        } else {
            (max_index - offset) as usize + 1
        };
        let node_count = match declared_nodes {
            Some(n) => {
                if n < implied {
                    return Err(Error::validation(format!(
                        "header declares {n} nodes but edges reference {implied}"
                    )));
                }
                n
            }
            None => implied,
        };
        Self::from_entries(
            node_count,
            raw.into_iter()
                .map(|(i, j, m)| ((i - offset) as usize, (j - offset) as usize, m)),
        )
    }

    /// Serialize to edge-list text: `i j` for single edges, `i j m` for
    /// parallel edges, `i i s` for `s` self-loops, preceded by an `N` header.
    pub fn to_edge_list_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "N {}", self.node_count);
        for (i, j, m) in self.pairs() {
            if m == 0 {
                continue;
            }
            if i == j {
                let _ = writeln!(out, "{} {} {}", i, j, m / 2);
            } else if m == 1 {
                let _ = writeln!(out, "{} {}", i, j);
            } else {
                let _ = writeln!(out, "{} {} {}", i, j, m);
            }
        }
        out
    }

    /// Remove each edge unit independently with probability `f`.
    pub fn remove_edges(&self, fraction: f64, rng: &mut impl Rng) -> Result<RemovalSplit> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::validation(format!(
                "removal fraction must lie in [0, 1), found {fraction}"
            )));
        }
        let mut kept: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        let mut removed: Vec<RemovedEntry> = Vec::new();
        for (&(i, j), &m) in &self.pairs {
            let units = if i == j { m / 2 } else { m };
            let mut gone = 0u64;
            for _ in 0..units {
                if rng.random::<f64>() < fraction {
                    gone += 1;
                }
            }
            let stay = units - gone;
            if stay > 0 {
                kept.insert((i, j), if i == j { 2 * stay } else { stay });
            }
            if gone > 0 {
                removed.push(RemovedEntry {
                    i: i as usize,
                    j: j as usize,
                    units: gone,
                });
            }
        }
        self.finish_split(kept, removed, fraction)
    }

    /// Remove exactly `count` edge units, uniformly without replacement.
    pub fn remove_exact(&self, count: u64, rng: &mut impl Rng) -> Result<RemovalSplit> {
        if count > self.edge_count {
            return Err(Error::validation(format!(
                "cannot remove {count} units from a graph with {} edges",
                self.edge_count
            )));
        }
        // Partial Fisher-Yates over the implicit unit list.
        let e = self.edge_count;
        let mut chosen: Vec<u64> = Vec::with_capacity(count as usize);
        let mut swapped: std::collections::HashMap<u64, u64> = std::collections::HashMap::new();
        for step in 0..count {
            let pick = rng.random_range(step..e);
            let value = swapped.get(&pick).copied().unwrap_or(pick);
            let low = swapped.get(&step).copied().unwrap_or(step);
            swapped.insert(pick, low);
            chosen.push(value);
        }
        chosen.sort_unstable();
        // Map sorted unit indices back onto pairs.
        let mut kept: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        let mut removed: Vec<RemovedEntry> = Vec::new();
        let mut cursor = 0u64;
        let mut next = chosen.iter().peekable();
        for (&(i, j), &m) in &self.pairs {
            let units = if i == j { m / 2 } else { m };
            let end = cursor + units;
            let mut gone = 0u64;
            while let Some(&&u) = next.peek() {
                if u < end {
                    gone += 1;
                    next.next();
                } else {
                    break;
                }
            }
            cursor = end;
            let stay = units - gone;
            if stay > 0 {
                kept.insert((i, j), if i == j { 2 * stay } else { stay });
            }
            if gone > 0 {
                removed.push(RemovedEntry {
                    i: i as usize,
                    j: j as usize,
                    units: gone,
                });
            }
        }
        self.finish_split(kept, removed, count as f64 / e.max(1) as f64)
    }

    fn finish_split(
        &self,
        kept: BTreeMap<(u32, u32), u64>,
        removed: Vec<RemovedEntry>,
        fraction: f64,
    ) -> Result<RemovalSplit> {
        let observed = Multigraph::from_pair_map(self.node_count, kept)?;
        let removed_count = removed.iter().map(|r| r.units).sum();
        Ok(RemovalSplit {
            observed,
            removed,
            fraction,
            removed_count,
            original_count: self.edge_count,
        })
    }
}

impl Clone for Multigraph {
    fn clone(&self) -> Self {
        Multigraph::from_pair_map(self.node_count, self.pairs.clone()).expect("clone is valid")
    }
}

impl PartialEq for Multigraph {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count && self.pairs == other.pairs
    }
}

impl Eq for Multigraph {}

/// One removed adjacency entry: `units` edge units taken from pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemovedEntry {
    pub i: usize,
    pub j: usize,
    pub units: u64,
}

/// An observed graph together with the edge units removed from the original.
#[derive(Debug, Clone)]
pub struct RemovalSplit {
    pub observed: Multigraph,
    pub removed: Vec<RemovedEntry>,
    pub fraction: f64,
    pub removed_count: u64,
    pub original_count: u64,
}

impl RemovalSplit {
    /// Re-insert the removed units, reconstructing the original graph.
    pub fn restore(&self) -> Multigraph {
        let mut entries: Vec<(usize, usize, u64)> = self
            .observed
            .pairs()
            .map(|(i, j, m)| (i, j, if i == j { m / 2 } else { m }))
            .collect();
        entries.extend(self.removed.iter().map(|r| (r.i, r.j, r.units)));
        Multigraph::from_entries(self.observed.node_count().max(1), entries)
            .expect("restored graph is valid")
    }
}

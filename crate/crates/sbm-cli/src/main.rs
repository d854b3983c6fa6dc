//! `sbm`: blockmodel inference, missing-link prediction, and model-selection
//! experiments on multigraph edge lists.

use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sbm::experiment::{
    averaging_comparison, consistency_report, groups_sweep, leave_one_out_pp, paired_t_test,
    run_removal_experiment, write_records_csv, AveragingConfig, LooConfig, LooScorer,
    RemovalConfig,
};
use sbm::mcmc::{find_map_partition, sample_posterior, seeded_stream, SamplerConfig, SearchConfig};
use sbm::model::ModelClass;
use sbm::planted::{
    auc_theory_inferred, auc_theory_true_model, detectability_threshold, planted_rates,
    sample_canonical, sample_microcanonical, PlantedParams,
};
use sbm::predict::{sample_negatives, AveragedScorer, Candidate, Scorer};
use sbm::{GroupLimits, Multigraph};

#[derive(Parser)]
#[command(
    name = "sbm",
    version,
    about = "Bayesian blockmodel inference, description-length model selection, and link prediction"
)]
struct Cli {
    /// Worker threads for replicated experiments (default: SBM_JOBS or all
    /// cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Sbm,
    Dcsbm,
}

impl From<ClassArg> for ModelClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Sbm => ModelClass::Sbm,
            ClassArg::Dcsbm => ModelClass::Dcsbm,
        }
    }
}

impl std::fmt::Display for ClassArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ClassArg::Sbm => "sbm",
            ClassArg::Dcsbm => "dcsbm",
        })
    }
}

#[derive(Args, Clone)]
struct McmcArgs {
    /// Annealing restarts.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Annealing sweeps per restart.
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    /// Initial inverse temperature of the annealing schedule.
    #[arg(long, default_value_t = 1.0)]
    beta_min: f64,
    /// Final inverse temperature of the annealing schedule.
    #[arg(long, default_value_t = 10.0)]
    beta_max: f64,
    /// Group count of the random initialization (default: a ladder of
    /// values around sqrt(N)).
    #[arg(long)]
    init_groups: Option<usize>,
    /// Disable the group-eviction polish after greedy descent.
    #[arg(long)]
    no_polish: bool,
}

impl McmcArgs {
    fn search(&self, seed: u64) -> SearchConfig {
        SearchConfig {
            restarts: self.restarts,
            anneal_sweeps: self.sweeps,
            beta_min: self.beta_min,
            beta_max: self.beta_max,
            seed,
            stream: 0,
            limits: GroupLimits::free(),
            init_groups: self.init_groups,
            group_polish: !self.no_polish,
        }
    }
}

#[derive(Args, Clone)]
struct PlantedArgs {
    /// Number of planted groups.
    #[arg(long = "B", default_value_t = 10)]
    groups: usize,
    /// Nodes per group.
    #[arg(long = "nr", default_value_t = 100)]
    group_size: usize,
    /// Assortativity c in [0, 1].
    #[arg(long = "c", default_value_t = 0.8)]
    assortativity: f64,
    /// Expected edge count <E> (overrides --avg-k when set).
    #[arg(long = "avg-E")]
    expected_edges: Option<f64>,
    /// Mean degree <k>.
    #[arg(long = "avg-k", default_value_t = 20.0)]
    mean_degree: f64,
    /// Microcanonical sample: block counts equal their rounded expectations.
    #[arg(long)]
    micro: bool,
}

impl PlantedArgs {
    fn params(&self) -> Result<PlantedParams, sbm::Error> {
        match self.expected_edges {
            Some(e) => PlantedParams::new(self.groups, self.group_size, self.assortativity, e),
            None => PlantedParams::with_mean_degree(
                self.groups,
                self.group_size,
                self.assortativity,
                self.mean_degree,
            ),
        }
    }

    fn sample(&self, seed: u64) -> Result<Multigraph, sbm::Error> {
        let params = self.params()?;
        let rates = planted_rates(&params)?;
        let partition = params.partition();
        let mut rng = seeded_stream(seed, 0);
        if self.micro {
            sample_microcanonical(&rates, &partition, &mut rng)
        } else {
            sample_canonical(&rates, &partition, &mut rng)
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit the maximum-a-posteriori partition and report it as JSON.
    Infer {
        /// Edge-list file ("-" for standard input).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long)]
        seed: u64,
        /// Force exactly this number of groups.
        #[arg(long)]
        forced_groups: Option<usize>,
        #[command(flatten)]
        mcmc: McmcArgs,
        /// Output path (default: standard output).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score candidate missing links and write a CSV ranking.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        class: ClassArg,
        #[arg(long)]
        seed: u64,
        /// Average scores over this many posterior samples instead of using
        /// the single best partition.
        #[arg(long)]
        averaged: Option<usize>,
        /// Sweeps between posterior samples.
        #[arg(long, default_value_t = 5)]
        sweep_interval: usize,
        /// Burn-in sweeps before sampling.
        #[arg(long, default_value_t = 100)]
        burn_in: usize,
        /// Keep only the top-scoring candidates (default: all non-edges).
        #[arg(long)]
        top: Option<usize>,
        #[command(flatten)]
        mcmc: McmcArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a planted-partition sample as an edge list.
    Synth {
        #[command(flatten)]
        planted: PlantedArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a replicated experiment protocol.
    Experiment {
        /// Protocol: removal (paired model comparison), leave-one-out
        /// (single-edge curves on planted samples), or averaging
        /// (single-point vs posterior-averaged prediction).
        #[arg(long, value_enum, default_value_t = Protocol::Removal)]
        protocol: Protocol,
        /// Edge-list input; a planted sample is generated when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        planted: PlantedArgs,
        /// Model classes, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [ClassArg::Sbm, ClassArg::Dcsbm])]
        classes: Vec<ClassArg>,
        /// Removed edge fraction.
        #[arg(long, default_value_t = 0.05)]
        f: f64,
        #[arg(long, default_value_t = 50)]
        replicates: usize,
        /// Negatives sampled per positive.
        #[arg(long, default_value_t = 10)]
        negative_factor: usize,
        /// Assortativity grid for leave-one-out (comma separated).
        #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.6, 0.8])]
        c_grid: Vec<f64>,
        /// Single-edge removals per c for leave-one-out (default: every
        /// edge once).
        #[arg(long)]
        removals: Option<usize>,
        /// Posterior samples per replicate for averaging.
        #[arg(long, default_value_t = 60)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        mcmc: McmcArgs,
        /// Per-replicate record CSV (removal protocol).
        #[arg(long)]
        records: Option<PathBuf>,
        /// Summary JSON (default: standard output).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Sweep a forced group count, recording description length and AUC.
    SweepB {
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        planted: PlantedArgs,
        #[arg(long, value_enum, default_value_t = ClassArg::Sbm)]
        class: ClassArg,
        #[arg(long, default_value_t = 1)]
        b_min: usize,
        #[arg(long, default_value_t = 20)]
        b_max: usize,
        #[arg(long, default_value_t = 0.05)]
        f: f64,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        #[arg(long, default_value_t = 10)]
        negative_factor: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        mcmc: McmcArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the closed-form planted-partition AUC table.
    AucTheory {
        #[arg(long = "B", default_value_t = 10)]
        groups: usize,
        /// Assortativity values (comma separated); c = 1 is always shown.
        #[arg(long = "c", value_delimiter = ',', default_values_t = [0.4, 0.6, 0.8])]
        c_values: Vec<f64>,
        /// Mean degree used for the detectability threshold line.
        #[arg(long = "avg-k", default_value_t = 20.0)]
        mean_degree: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    Removal,
    LeaveOneOut,
    Averaging,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = cli
        .jobs
        .or_else(|| std::env::var("SBM_JOBS").ok().and_then(|v| v.parse().ok()));
    if let Some(jobs) = jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("sbm: could not configure {jobs} worker threads: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sbm: {e}");
            ExitCode::FAILURE
        }
    }
}

fn read_graph(path: &PathBuf) -> Result<Multigraph, Box<dyn std::error::Error>> {
    if path.as_os_str() == "-" {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text)?;
        Ok(Multigraph::parse_edge_list(&text)?)
    } else {
        let text =
            fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Ok(Multigraph::parse_edge_list(&text)?)
    }
}

fn write_output(path: &Option<PathBuf>, content: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, content),
        None => io::stdout().write_all(content.as_bytes()),
    }
}

#[derive(Serialize)]
struct InferReport {
    class: ModelClass,
    seed: u64,
    node_count: usize,
    edge_count: u64,
    group_count: usize,
    sigma_bits: f64,
    assignment: Vec<u32>,
}

#[derive(Serialize)]
struct RemovalSummary {
    protocol: &'static str,
    dataset: String,
    fraction: f64,
    replicates: usize,
    seed: u64,
    pairs: Vec<sbm::experiment::PairComparison>,
    /// Absent when fewer than two model classes were compared.
    consistent_fraction: Option<f64>,
}

#[derive(Serialize)]
struct LooSummary {
    protocol: &'static str,
    groups: usize,
    group_size: usize,
    mean_degree: f64,
    microcanonical: bool,
    seed: u64,
    detectability_threshold: f64,
    points: Vec<sbm::experiment::LooPoint>,
}

#[derive(Serialize)]
struct AveragingSummary {
    protocol: &'static str,
    dataset: String,
    fraction: f64,
    replicates: usize,
    seed: u64,
    records: Vec<sbm::experiment::AveragingRecord>,
    gains: Vec<AveragingGain>,
}

#[derive(Serialize)]
struct AveragingGain {
    class: ModelClass,
    mean_gain: f64,
    t: Option<f64>,
    p: Option<f64>,
}

fn run(command: Command) -> Result<(), Box<dyn std::error::Error>> {
    match command {
        Command::Infer {
            input,
            class,
            seed,
            forced_groups,
            mcmc,
            output,
        } => {
            let graph = read_graph(&input)?;
            let mut search = mcmc.search(seed);
            if let Some(b) = forced_groups {
                search.limits = GroupLimits::fixed(b);
            }
            let class: ModelClass = class.into();
            let (partition, sigma) = find_map_partition(&graph, class, &search)?;
            let report = InferReport {
                class,
                seed,
                node_count: graph.node_count(),
                edge_count: graph.edge_count(),
                group_count: partition.group_count(),
                sigma_bits: sigma,
                assignment: partition.labels().to_vec(),
            };
            write_output(
                &output,
                &format!("{}\n", serde_json::to_string_pretty(&report)?),
            )?;
        }
        Command::Predict {
            input,
            class,
            seed,
            averaged,
            sweep_interval,
            burn_in,
            top,
            mcmc,
            output,
        } => {
            let graph = read_graph(&input)?;
            let class: ModelClass = class.into();
            let search = mcmc.search(seed);
            let (partition, _) = find_map_partition(&graph, class, &search)?;
            // all non-edges are candidates
            let mut rng = seeded_stream(seed, 1);
            let candidates = sample_negatives(&graph, usize::MAX - 1, &mut rng)?.candidates;
            let mut scored: Vec<(Candidate, f64)> = match averaged {
                None => {
                    let scorer = Scorer::new(&graph, &partition, class)?;
                    candidates
                        .iter()
                        .map(|c| Ok((*c, scorer.score(c)?)))
                        .collect::<Result<_, sbm::Error>>()?
                }
                Some(n_samples) => {
                    let mut cfg = SamplerConfig::new(n_samples, sweep_interval, burn_in, seed);
                    cfg.initial = Some(partition.clone());
                    cfg.stream = 2;
                    let sample = sample_posterior(&graph, class, &cfg)?;
                    let scorer = AveragedScorer::new(&graph, &sample.partitions, class)?;
                    candidates
                        .iter()
                        .map(|c| Ok((*c, scorer.score(c)?)))
                        .collect::<Result<_, sbm::Error>>()?
                }
            };
            scored.sort_by(|a, b| {
                b.1.total_cmp(&a.1)
                    .then(a.0.i.cmp(&b.0.i))
                    .then(a.0.j.cmp(&b.0.j))
            });
            if let Some(top) = top {
                scored.truncate(top);
            }
            let mut out = String::from("i,j,log_score\n");
            for (cand, score) in &scored {
                out.push_str(&format!("{},{},{}\n", cand.i, cand.j, score));
            }
            write_output(&output, &out)?;
        }
        Command::Synth {
            planted,
            seed,
            output,
        } => {
            let graph = planted.sample(seed)?;
            write_output(&output, &graph.to_edge_list_string())?;
        }
        Command::Experiment {
            protocol,
            input,
            planted,
            classes,
            f,
            replicates,
            negative_factor,
            c_grid,
            removals,
            samples,
            seed,
            mcmc,
            records,
            summary,
        } => {
            let classes: Vec<ModelClass> = classes.into_iter().map(Into::into).collect();
            let (graph, dataset) = match (&input, protocol) {
                (_, Protocol::LeaveOneOut) => (None, "pp".to_string()),
                (Some(path), _) => (
                    Some(read_graph(path)?),
                    path.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default(),
                ),
                (None, _) => {
                    let params = planted.params()?;
                    (
                        Some(planted.sample(seed ^ 0x9e37_79b9)?),
                        format!(
                            "pp-B{}-nr{}-c{}",
                            params.groups, params.group_size, params.assortativity
                        ),
                    )
                }
            };
            match protocol {
                Protocol::Removal => {
                    let graph = graph.expect("removal protocol always has a graph");
                    let mut config = RemovalConfig::new(dataset.clone(), seed);
                    config.fraction = f;
                    config.replicates = replicates;
                    config.negative_factor = negative_factor;
                    config.search = mcmc.search(seed);
                    let recs = run_removal_experiment(&graph, &classes, &config)?;
                    if let Some(path) = &records {
                        let mut buf = Vec::new();
                        write_records_csv(&mut buf, &recs)?;
                        fs::write(path, buf)?;
                    }
                    let (pairs, consistent_fraction) = if classes.len() >= 2 {
                        let report = consistency_report(&recs)?;
                        (report.pairs, Some(report.consistent_fraction))
                    } else {
                        (Vec::new(), None)
                    };
                    let out = RemovalSummary {
                        protocol: "removal",
                        dataset,
                        fraction: f,
                        replicates,
                        seed,
                        pairs,
                        consistent_fraction,
                    };
                    write_output(
                        &summary,
                        &format!("{}\n", serde_json::to_string_pretty(&out)?),
                    )?;
                }
                Protocol::LeaveOneOut => {
                    let params = planted.params()?;
                    let mut config = LooConfig::new(seed);
                    config.groups = params.groups;
                    config.group_size = params.group_size;
                    config.mean_degree = params.mean_degree();
                    config.c_values = c_grid;
                    config.removals = removals;
                    config.microcanonical = planted.micro;
                    config.search = mcmc.search(seed);
                    let mut scorers: Vec<LooScorer> =
                        classes.iter().map(|&c| LooScorer::Clamped(c)).collect();
                    scorers.push(LooScorer::TrueRates);
                    let points = leave_one_out_pp(&scorers, &config)?;
                    let out = LooSummary {
                        protocol: "leave-one-out",
                        groups: config.groups,
                        group_size: config.group_size,
                        mean_degree: config.mean_degree,
                        microcanonical: config.microcanonical,
                        seed,
                        detectability_threshold: detectability_threshold(
                            config.groups,
                            config.mean_degree,
                        ),
                        points,
                    };
                    write_output(
                        &summary,
                        &format!("{}\n", serde_json::to_string_pretty(&out)?),
                    )?;
                }
                Protocol::Averaging => {
                    let graph = graph.expect("averaging protocol always has a graph");
                    let mut config = AveragingConfig::new(seed);
                    config.fraction = f;
                    config.replicates = replicates;
                    config.negative_factor = negative_factor;
                    config.n_samples = samples;
                    config.search = mcmc.search(seed);
                    let recs = averaging_comparison(&graph, &classes, &config)?;
                    let mut gains = Vec::new();
                    for &class in &classes {
                        let diffs: Vec<f64> = recs
                            .iter()
                            .filter(|r| r.class == class)
                            .map(|r| r.auc_averaged - r.auc_single)
                            .collect();
                        let mean = diffs.iter().sum::<f64>() / diffs.len().max(1) as f64;
                        let t = paired_t_test(&diffs).ok();
                        gains.push(AveragingGain {
                            class,
                            mean_gain: mean,
                            t: t.as_ref().map(|t| t.t),
                            p: t.as_ref().map(|t| t.p),
                        });
                    }
                    let out = AveragingSummary {
                        protocol: "averaging",
                        dataset,
                        fraction: f,
                        replicates,
                        seed,
                        records: recs,
                        gains,
                    };
                    write_output(
                        &summary,
                        &format!("{}\n", serde_json::to_string_pretty(&out)?),
                    )?;
                }
            }
        }
        Command::SweepB {
            input,
            planted,
            class,
            b_min,
            b_max,
            f,
            replicates,
            negative_factor,
            seed,
            mcmc,
            output,
        } => {
            if b_min == 0 || b_min > b_max {
                return Err("group count range must satisfy 1 <= b-min <= b-max".into());
            }
            let graph = match &input {
                Some(path) => read_graph(path)?,
                None => planted.sample(seed ^ 0x9e37_79b9)?,
            };
            let mut config = RemovalConfig::new("sweep", seed);
            config.fraction = f;
            config.replicates = replicates;
            config.negative_factor = negative_factor;
            config.search = mcmc.search(seed);
            let counts: Vec<usize> = (b_min..=b_max).collect();
            let records = groups_sweep(&graph, class.into(), &counts, &config)?;
            let mut out = String::from("forced_groups,replicate,sigma_bits,auc\n");
            for r in &records {
                let auc = r.auc.map(|a| a.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    r.forced_groups, r.replicate, r.sigma_bits, auc
                ));
            }
            write_output(&output, &out)?;
        }
        Command::AucTheory {
            groups,
            c_values,
            mean_degree,
        } => {
            let mut grid = c_values;
            if !grid.contains(&1.0) {
                grid.push(1.0);
            }
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let mut out = String::new();
            out.push_str(&format!(
                "# B = {groups}, detectability threshold c* = {:.6} at <k> = {mean_degree}\n",
                detectability_threshold(groups, mean_degree)
            ));
            out.push_str("c,auc_inferred,auc_true_model\n");
            for &c in &grid {
                out.push_str(&format!(
                    "{},{},{}\n",
                    c,
                    auc_theory_inferred(groups, c)?,
                    auc_theory_true_model(groups, c)?
                ));
            }
            print!("{out}");
        }
    }
    Ok(())
}

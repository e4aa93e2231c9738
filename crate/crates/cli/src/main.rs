use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use geoap::data_io::{read_label_file, Dataset, LoadOptions, ResultDocument};
use geoap::engine::{self, IterationTrace};
use geoap::evaluation::Scores;
use geoap::harness::{self, AblationOptions, PreferenceSpec, RunSpec, SweepReport};
use geoap::{EngineConfig, Error, FeatureMetric, Mode, NeighborhoodMask, TopoDistance};

#[derive(Parser)]
#[command(name = "geoap", version, about = "Affinity propagation clustering with network constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset once and write the result document.
    Cluster {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Write a per-iteration trace (tab separated) of the final run.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Geometric runs over a grid of neighborhood thresholds.
    SweepTau {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated thresholds; defaults to the standard grid of the
        /// chosen distance.
        #[arg(long)]
        tau_grid: Option<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One calibrated run per cluster count.
    SweepK {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated cluster counts.
        #[arg(long)]
        k_list: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Geometric runs against randomly relabeled copies of the network.
    Ablation {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 100)]
        repetitions: usize,
        #[arg(long, default_value_t = 13579)]
        seed: u64,
        /// Keep the network as is in every repetition.
        #[arg(long)]
        identity: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a predicted label file against reference labels.
    Eval {
        /// `node-id label` pairs to score.
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// The first column of the feature file holds node ids.
    #[arg(long)]
    feature_ids: bool,
    /// Drop edges whose endpoints have no feature row.
    #[arg(long)]
    skip_unknown_edges: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = FeatureMetric::Euclidean)]
    feature_metric: FeatureMetric,
    #[arg(long, default_value_t = Mode::Standard)]
    mode: Mode,
    #[arg(long)]
    topo: Option<TopoDistance>,
    #[arg(long)]
    tau: Option<f64>,
    /// Shared preference; the median similarity when neither this nor
    /// --target-k is given.
    #[arg(long, conflicts_with = "target_k", allow_negative_numbers = true)]
    preference: Option<f64>,
    /// Calibrate the preference to this many clusters.
    #[arg(long)]
    target_k: Option<usize>,
    #[arg(long, default_value_t = 0.9)]
    damping: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 100)]
    conv_iter: usize,
    #[arg(long)]
    no_smoothing: bool,
}

impl DataArgs {
    fn load(&self) -> geoap::Result<Dataset> {
        Dataset::load(
            self.features.as_deref(),
            self.edges.as_deref(),
            self.labels.as_deref(),
            LoadOptions {
                feature_ids: self.feature_ids,
                skip_unknown_edges: self.skip_unknown_edges,
            },
        )
    }
}

impl RunArgs {
    fn spec(&self) -> RunSpec {
        let preference = match (self.preference, self.target_k) {
            (Some(p), _) => PreferenceSpec::Value(p),
            (None, Some(k)) => PreferenceSpec::TargetK(k),
            (None, None) => PreferenceSpec::Median,
        };
        RunSpec {
            engine: EngineConfig {
                damping: self.damping,
                max_iter: self.max_iter,
                conv_iter: self.conv_iter,
                mode: self.mode,
                smoothing: !self.no_smoothing,
            },
            feature_metric: self.feature_metric,
            topo: self.topo,
            tau: self.tau,
            preference,
        }
    }

    fn require_target(&self, command: &str) -> geoap::Result<usize> {
        self.target_k
            .ok_or_else(|| Error::InvalidArgument(format!("{command} needs --target-k")))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::TooLarge { .. } => 1,
        Error::Data { .. } | Error::Dataset(_) | Error::Io { .. } | Error::Json { .. } => 2,
        Error::Divergence { .. } | Error::NonConvergence { .. } => 3,
        Error::Calibration { .. } => 4,
    }
}

fn parse_list<T: std::str::FromStr>(flag: &str, text: &str) -> geoap::Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidArgument(format!("{flag}: cannot parse {t:?}")))
        })
        .collect()
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> geoap::Result<()> {
    let Some(path) = path else { return Ok(()) };
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(io_error(path))
}

fn print_scores(scores: &Scores) {
    let [nmi, cr, f1] = scores.percent();
    println!("NMI {nmi:.2}  CR {cr:.2}  F1 {f1:.2}");
}

fn print_sweep(report: &SweepReport) {
    println!("{:>8}  {:>4}  {:>7}  {:>7}  {:>7}", report.axis, "K", "NMI", "CR", "F1");
    for row in &report.rows {
        match (&row.scores, &row.error) {
            (Some(s), _) => {
                let [nmi, cr, f1] = s.percent();
                let k = row.clusters.map_or("-".into(), |k| k.to_string());
                println!("{:>8}  {k:>4}  {nmi:>7.2}  {cr:>7.2}  {f1:>7.2}", row.value);
            }
            (None, Some(e)) => println!("{:>8}  failed: {e}", row.value),
            (None, None) => println!("{:>8}  -", row.value),
        }
    }
    match report.optimum {
        Some(v) => println!("optimum {} = {v}", report.axis),
        None => println!("no optimum"),
    }
}

fn cluster(data: &DataArgs, run: &RunArgs, trace: Option<&Path>, output: Option<&Path>) -> geoap::Result<()> {
    let dataset = data.load()?;
    let spec = run.spec();
    let s = harness::similarity_for(&dataset, spec.feature_metric)?;
    let outcome = harness::cluster(&dataset, &s, &spec)?;
    if let Some(path) = trace {
        write_trace(&dataset, &s, &spec, outcome.preference, path)?;
    }
    let r = &outcome.result;
    println!(
        "{} clusters, preference {}, {} iterations{}",
        r.k(),
        outcome.preference,
        r.iterations,
        if r.converged { "" } else { " (not converged)" }
    );
    if let Some(scores) = &outcome.scores {
        print_scores(scores);
    }
    let doc = ResultDocument::new(spec, outcome.preference, r, &dataset)?;
    if let Some(path) = output {
        doc.write(path)?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

// Reruns the final configuration with a trace callback; runs are
// deterministic, so this reproduces the reported result.
fn write_trace(
    dataset: &Dataset,
    s: &geoap::SimilarityMatrix,
    spec: &RunSpec,
    preference: f64,
    path: &Path,
) -> geoap::Result<()> {
    let mask = match (spec.engine.mode, &dataset.graph, spec.topo, spec.tau) {
        (Mode::Geometric, Some(g), Some(kind), Some(tau)) => Some(NeighborhoodMask::build(g, kind, tau)?),
        _ => None,
    };
    let graph = mask.as_ref().and(dataset.graph.as_ref());
    let file = File::create(path).map_err(io_error(path))?;
    let mut out = BufWriter::new(file);
    let mut status = writeln!(out, "iteration\texemplars\tmax_delta");
    engine::run_traced(
        &s.with_preference(preference),
        mask.as_ref(),
        graph,
        &spec.engine,
        |t: &IterationTrace| {
            if status.is_ok() {
                status = writeln!(out, "{}\t{}\t{:e}", t.iteration, t.exemplars, t.max_delta);
            }
        },
    )?;
    status.and_then(|()| out.flush()).map_err(io_error(path))
}

fn execute(command: Command) -> geoap::Result<()> {
    match command {
        Command::Cluster {
            data,
            run,
            trace,
            output,
        } => cluster(&data, &run, trace.as_deref(), output.as_deref()),
        Command::SweepTau {
            data,
            run,
            tau_grid,
            output,
        } => {
            let target = run.require_target("sweep-tau")?;
            let kind = run
                .topo
                .ok_or_else(|| Error::InvalidArgument("sweep-tau needs --topo".into()))?;
            let grid = match tau_grid {
                Some(text) => parse_list("--tau-grid", &text)?,
                None => kind.default_grid(),
            };
            let mut spec = run.spec();
            spec.engine.mode = Mode::Geometric;
            let dataset = data.load()?;
            let s = harness::similarity_for(&dataset, spec.feature_metric)?;
            let report = harness::sweep_tau(&dataset, &s, &spec, &grid, target)?;
            print_sweep(&report);
            write_json(&report, output.as_deref())
        }
        Command::SweepK {
            data,
            run,
            k_list,
            output,
        } => {
            let ks: Vec<usize> = parse_list("--k-list", &k_list)?;
            let spec = run.spec();
            let dataset = data.load()?;
            let report = if ks.is_empty() {
                SweepReport {
                    axis: "k".into(),
                    rows: Vec::new(),
                    optimum: None,
                }
            } else {
                let s = harness::similarity_for(&dataset, spec.feature_metric)?;
                harness::sweep_k(&dataset, &s, &spec, &ks)?
            };
            print_sweep(&report);
            write_json(&report, output.as_deref())
        }
        Command::Ablation {
            data,
            run,
            repetitions,
            seed,
            identity,
            output,
        } => {
            let target_k = run.require_target("ablation")?;
            let mut spec = run.spec();
            spec.engine.mode = Mode::Geometric;
            let dataset = data.load()?;
            let s = harness::similarity_for(&dataset, spec.feature_metric)?;
            let opts = AblationOptions {
                repetitions,
                seed,
                target_k,
                identity,
            };
            let report = harness::ablation(&dataset, &s, &spec, opts)?;
            println!(
                "{} completed, {} failed (seed {})",
                report.repetitions, report.failed, report.seed
            );
            let [m_nmi, m_cr, m_f1] = report.mean.percent();
            let [s_nmi, s_cr, s_f1] = report.std.percent();
            println!("NMI {m_nmi:.2} ± {s_nmi:.2}  CR {m_cr:.2} ± {s_cr:.2}  F1 {m_f1:.2} ± {s_f1:.2}");
            write_json(&report, output.as_deref())
        }
        Command::Eval {
            predicted,
            labels,
            output,
        } => {
            let pred = read_label_file(&predicted)?;
            let truth: std::collections::HashMap<String, String> = read_label_file(&labels)?.into_iter().collect();
            let (p, t): (Vec<&str>, Vec<&str>) = pred
                .iter()
                .filter_map(|(id, l)| truth.get(id).map(|t| (l.as_str(), t.as_str())))
                .unzip();
            if p.is_empty() {
                return Err(Error::Dataset("no predicted node has a reference label".into()));
            }
            let scores = Scores::compute(&p, &t)?;
            print_scores(&scores);
            write_json(&scores, output.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! `quboml` command-line entry points.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use quboml::cluster::{self, project_2d, retrieve};
use quboml::features::{select_features, validation_ndcg, FeatureQuboSpec, Importance, Redundancy};
use quboml::instances::{
    reduction_sweep, select_instances, InstanceMethod, InstanceSpec, SweepRow,
};
use quboml::io::{parse_embeddings, parse_letor, parse_queries, InputDigest, RunManifest, Timings};
use quboml::timing::Stopwatch;
use quboml::{simulated_anneal, AnnealConfig, BinaryQuadraticProblem, Error};

pub const THREADS_ENV: &str = "QUBOML_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "quboml",
    version,
    about = "QUBO-based feature selection, instance selection and medoid refinement"
)]
struct Cli {
    /// Worker threads (falls back to QUBOML_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select k features of a LETOR ranking file
    Features(FeaturesArgs),
    /// Keep a fraction of a labeled embedding corpus, batch by batch
    Instances(InstancesArgs),
    /// Cluster document embeddings around k refined medoids
    Cluster(ClusterArgs),
    /// F1 of every selection method across retain fractions
    Sweep(SweepArgs),
    /// Sample a QUBO given as JSON
    Solve(SolveArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct AnnealArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    reads: usize,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long)]
    beta_hot: Option<f64>,
    #[arg(long)]
    beta_cold: Option<f64>,
    /// Skip the zero-temperature descent that ends each read
    #[arg(long)]
    no_polish: bool,
}

impl AnnealArgs {
    fn config(&self) -> AnnealConfig {
        AnnealConfig {
            reads: self.reads,
            sweeps: self.sweeps,
            beta_hot: self.beta_hot,
            beta_cold: self.beta_cold,
            seed: self.seed,
            polish: !self.no_polish,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutputArgs {
    /// Directory for result.json and manifest.json; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Include wall-clock times in the result (they otherwise go to the manifest only)
    #[arg(long)]
    with_timings: bool,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ImportanceArg {
    Mi,
    Pfi,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum RedundancyArg {
    Cmi,
    Cpfi,
}

#[derive(Args, Debug, Serialize)]
struct FeaturesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = ImportanceArg::Mi)]
    importance: ImportanceArg,
    #[arg(long, value_enum, default_value_t = RedundancyArg::Cmi)]
    redundancy: RedundancyArg,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 1.0)]
    redundancy_weight: f64,
    /// LETOR file for a validation nDCG@10 of a ridge ranker on the selected columns
    #[arg(long)]
    validation: Option<PathBuf>,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
enum MethodArg {
    Bcos,
    Svc,
    InstanceDeletion,
}

impl From<MethodArg> for InstanceMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Bcos => InstanceMethod::Bcos,
            MethodArg::Svc => InstanceMethod::Svc,
            MethodArg::InstanceDeletion => InstanceMethod::InstanceDeletion,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct InstancesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Bcos)]
    method: MethodArg,
    #[arg(long, default_value_t = 0.75)]
    retain: f64,
    #[arg(long, default_value_t = 80)]
    batch_size: usize,
    #[arg(long)]
    penalty: Option<f64>,
    /// Report batches without an exactly k_b-hot read as sampled
    #[arg(long)]
    no_repair: bool,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct ClusterArgs {
    #[arg(long)]
    docs: PathBuf,
    /// Query JSONL with relevant_ids, for retrieval nDCG@10
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Cluster count; chosen automatically over --k-min..=--k-max when absent
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 10)]
    k_max: usize,
    /// Also write projection.csv with 2-D principal-component coordinates
    #[arg(long)]
    projection: bool,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1.0,0.75,0.5")]
    fractions: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Bcos, MethodArg::Svc, MethodArg::InstanceDeletion])]
    methods: Vec<MethodArg>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 80)]
    batch_size: usize,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[command(flatten)]
    anneal: AnnealArgs,
    #[command(flatten)]
    output: OutputArgs,
}

/// A failed run: the message and its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) | Error::InvalidConstraint(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn write_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

const ANNEALING: &str = "simulated annealing stands in for quantum annealing on the same QUBO";
const POLISH: &str =
    "each annealing read ends with a zero-temperature single-flip and exchange descent";
const LINEAR_SVC: &str = "linear margin classifier substituted for rbf SVC";
const RIDGE_PFI: &str = "permutation importance scored with a ridge regressor on relevance grades";
const KMEDOIDS_ONLY: &str = "k-medoids is the only classical candidate stage";

fn anneal_deviations(a: &AnnealArgs) -> Vec<String> {
    let mut d = vec![ANNEALING.to_string()];
    if !a.no_polish {
        d.push(POLISH.to_string());
    }
    d
}

fn pretty<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

/// Everything a command produces besides its manifest.
struct Outcome {
    result: String,
    extra: Vec<(&'static str, String)>,
    manifest: RunManifest,
}

fn emit(output: &OutputArgs, outcome: Outcome) -> Result<(), Failure> {
    let manifest = pretty(&outcome.manifest)?;
    match &output.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| write_failure(dir, e))?;
            let files = [("result.json", outcome.result), ("manifest.json", manifest)];
            for (name, body) in files.into_iter().chain(outcome.extra) {
                let path = dir.join(name);
                fs::write(&path, body).map_err(|e| write_failure(&path, e))?;
            }
        }
        None => {
            print!("{}", outcome.result);
            eprint!("{manifest}");
        }
    }
    Ok(())
}

fn manifest<T: Serialize>(
    command: &str,
    args: &T,
    seed: u64,
    inputs: &[&Path],
) -> Result<RunManifest, Failure> {
    let config = serde_json::to_value(args).map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    let mut m = RunManifest::new(command, config, seed);
    for p in inputs {
        m.inputs.push(InputDigest::of(p)?);
    }
    Ok(m)
}

#[derive(Serialize)]
struct FeaturesResult {
    /// 0-based columns.
    selected: Vec<usize>,
    /// The same columns as 1-based LETOR feature ids.
    selected_feature_ids: Vec<usize>,
    k: usize,
    method: String,
    energy: f64,
    lambda: f64,
    feasible: bool,
    repaired: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    ndcg10_validation: Option<f64>,
    importance: Vec<f64>,
    redundancy: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_time_ms: Option<f64>,
}

fn features(a: &FeaturesArgs) -> Result<Outcome, Failure> {
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.validation.as_deref());
    let mut manifest = manifest("features", a, a.anneal.seed, &inputs)?;
    let ds = parse_letor(&a.data)?;
    let spec = FeatureQuboSpec {
        lambda: a.lambda,
        bins: a.bins,
        redundancy_weight: a.redundancy_weight,
        ..FeatureQuboSpec::new(
            match a.importance {
                ImportanceArg::Mi => Importance::Mi,
                ImportanceArg::Pfi => Importance::Pfi,
            },
            match a.redundancy {
                RedundancyArg::Cmi => Redundancy::Cmi,
                RedundancyArg::Cpfi => Redundancy::Cpfi,
            },
            a.k,
        )
    };
    let sel = select_features(&ds, &spec, &a.anneal.config())?;
    let eval = Stopwatch::start();
    let ndcg10_validation = match &a.validation {
        Some(p) => Some(validation_ndcg(
            &ds,
            &parse_letor(p)?,
            &sel.selected,
            1e-3,
            10,
        )?),
        None => None,
    };
    manifest.timings = Timings {
        build_ms: sel.build_ms,
        solve_ms: sel.solve_ms,
        eval_ms: eval.elapsed_ms(),
    };
    manifest.deviations = anneal_deviations(&a.anneal);
    if matches!(a.importance, ImportanceArg::Pfi) || matches!(a.redundancy, RedundancyArg::Cpfi) {
        manifest.deviations.push(RIDGE_PFI.into());
    }
    let result = FeaturesResult {
        selected_feature_ids: sel.selected.iter().map(|c| c + 1).collect(),
        selected: sel.selected,
        k: sel.k,
        method: sel.method,
        energy: sel.energy,
        lambda: sel.lambda,
        feasible: sel.feasible,
        repaired: sel.repaired,
        ndcg10_validation,
        importance: sel.importance,
        redundancy: sel.redundancy,
        solver_time_ms: a.output.with_timings.then_some(sel.solve_ms),
    };
    Ok(Outcome {
        result: pretty(&result)?,
        extra: Vec::new(),
        manifest,
    })
}

#[derive(Serialize)]
struct BatchOut {
    k_b: usize,
    energy: f64,
    feasible: bool,
    repaired: bool,
}

#[derive(Serialize)]
struct InstancesResult {
    kept_ids: Vec<String>,
    target_fraction: f64,
    achieved_fraction: f64,
    method: String,
    per_batch: Vec<BatchOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_time_ms: Option<f64>,
}

fn instances(a: &InstancesArgs) -> Result<Outcome, Failure> {
    let mut manifest = manifest("instances", a, a.anneal.seed, &[&a.data])?;
    let corpus = parse_embeddings(&a.data)?;
    let spec = InstanceSpec {
        method: a.method.into(),
        retain_fraction: a.retain,
        batch_size: a.batch_size,
        penalty: a.penalty,
        repair: !a.no_repair,
    };
    let sel = select_instances(&corpus, &spec, &a.anneal.config())?;
    manifest.timings = Timings {
        build_ms: sel.build_ms,
        solve_ms: sel.solve_ms,
        eval_ms: 0.0,
    };
    manifest.deviations = anneal_deviations(&a.anneal);
    if a.method == MethodArg::Svc {
        manifest.deviations.push(LINEAR_SVC.into());
    }
    let result = InstancesResult {
        kept_ids: sel.kept.iter().map(|&i| corpus.ids()[i].clone()).collect(),
        target_fraction: sel.target_fraction,
        achieved_fraction: sel.achieved_fraction,
        method: sel.method,
        per_batch: sel
            .per_batch
            .into_iter()
            .map(|b| BatchOut {
                k_b: b.k_b,
                energy: b.energy,
                feasible: b.feasible,
                repaired: b.repaired,
            })
            .collect(),
        solver_time_ms: a.output.with_timings.then_some(sel.solve_ms),
    };
    Ok(Outcome {
        result: pretty(&result)?,
        extra: Vec::new(),
        manifest,
    })
}

#[derive(Serialize)]
struct ClusterResult {
    medoid_ids: Vec<String>,
    k: usize,
    dbi: f64,
    feasible: bool,
    candidate_ids: Vec<String>,
    source_k: usize,
    energy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ndcg10_mean: Option<f64>,
    assignments: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver_time_ms: Option<f64>,
}

fn cluster(a: &ClusterArgs) -> Result<Outcome, Failure> {
    let mut inputs = vec![a.docs.as_path()];
    inputs.extend(a.queries.as_deref());
    let mut manifest = manifest("cluster", a, a.anneal.seed, &inputs)?;
    let docs = parse_embeddings(&a.docs)?;
    let points = docs.vectors();
    let r = cluster::cluster(points, a.k, a.k_min..=a.k_max, &a.anneal.config())?;
    let ids = docs.ids();
    let eval = Stopwatch::start();
    let ndcg10_mean = match &a.queries {
        Some(p) => {
            let q = parse_queries(p)?;
            let index: BTreeMap<&str, usize> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect();
            let relevant: Vec<Vec<usize>> = q
                .relevant_ids
                .iter()
                .map(|rel| {
                    rel.iter()
                        .filter_map(|id| index.get(id.as_str()).copied())
                        .collect()
                })
                .collect();
            let ranked = retrieve(&q.vectors, points, &r.medoids, &r.assignments, 10)?;
            Some(cluster::mean_ndcg(&ranked, &relevant, 10)?)
        }
        None => None,
    };
    manifest.timings = Timings {
        build_ms: r.build_ms,
        solve_ms: r.solve_ms,
        eval_ms: eval.elapsed_ms(),
    };
    manifest.deviations = anneal_deviations(&a.anneal);
    manifest.deviations.push(KMEDOIDS_ONLY.into());
    let mut extra = Vec::new();
    if a.projection {
        let xy = project_2d(points)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Failure {
            code: 2,
            message: e.to_string(),
        };
        w.write_record(["id", "x", "y", "medoid_id"])
            .map_err(csv_err)?;
        for (i, p) in xy.iter().enumerate() {
            w.write_record([
                ids[i].as_str(),
                &p[0].to_string(),
                &p[1].to_string(),
                &ids[r.assignments[i]],
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure {
            code: 2,
            message: e.to_string(),
        })?;
        extra.push((
            "projection.csv",
            String::from_utf8_lossy(&bytes).into_owned(),
        ));
    }
    let result = ClusterResult {
        medoid_ids: r.medoids.iter().map(|&m| ids[m].clone()).collect(),
        k: r.k,
        dbi: r.dbi,
        feasible: r.feasible,
        candidate_ids: r
            .candidates
            .indices
            .iter()
            .map(|&m| ids[m].clone())
            .collect(),
        source_k: r.candidates.source_k,
        energy: r.energy,
        ndcg10_mean,
        assignments: r
            .assignments
            .iter()
            .enumerate()
            .map(|(i, &m)| (ids[i].clone(), ids[m].clone()))
            .collect(),
        solver_time_ms: a.output.with_timings.then_some(r.solve_ms),
    };
    Ok(Outcome {
        result: pretty(&result)?,
        extra,
        manifest,
    })
}

fn sweep_csv(rows: &[SweepRow]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Failure {
            code: 2,
            message: e.to_string(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn sweep(a: &SweepArgs) -> Result<Outcome, Failure> {
    let mut manifest = manifest("sweep", a, a.anneal.seed, &[&a.data])?;
    let corpus = parse_embeddings(&a.data)?;
    let methods: Vec<InstanceMethod> = a.methods.iter().map(|&m| m.into()).collect();
    let base = InstanceSpec {
        batch_size: a.batch_size,
        ..InstanceSpec::new(InstanceMethod::Bcos)
    };
    let clock = Stopwatch::start();
    let rows = reduction_sweep(
        &corpus,
        &methods,
        &a.fractions,
        a.folds,
        &base,
        &a.anneal.config(),
    )?;
    manifest.timings = Timings {
        build_ms: 0.0,
        solve_ms: 0.0,
        eval_ms: clock.elapsed_ms(),
    };
    manifest.deviations = anneal_deviations(&a.anneal);
    if a.methods.contains(&MethodArg::Svc) {
        manifest.deviations.push(LINEAR_SVC.into());
    }
    let table = sweep_csv(&rows)?;
    Ok(Outcome {
        result: pretty(&rows)?,
        extra: vec![("sweep.csv", table)],
        manifest,
    })
}

#[derive(Serialize)]
struct SampleOut {
    bits: Vec<u8>,
    energy: f64,
    occurrences: usize,
}

#[derive(Serialize)]
struct SampleSetOut {
    samples: Vec<SampleOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve_time_ms: Option<f64>,
}

fn solve(a: &SolveArgs) -> Result<Outcome, Failure> {
    let mut manifest = manifest("solve", a, a.anneal.seed, &[&a.problem])?;
    let bytes = quboml::io::read_bytes(&a.problem)?;
    let problem: BinaryQuadraticProblem = serde_json::from_slice(&bytes).map_err(Error::from)?;
    let set = simulated_anneal(&problem, &a.anneal.config())?;
    manifest.timings = Timings {
        build_ms: 0.0,
        solve_ms: set.solve_time_ms,
        eval_ms: 0.0,
    };
    manifest.deviations = anneal_deviations(&a.anneal);
    let out = SampleSetOut {
        samples: set
            .samples
            .iter()
            .map(|s| SampleOut {
                bits: s.bits.bits().to_vec(),
                energy: s.energy,
                occurrences: s.occurrences,
            })
            .collect(),
        solve_time_ms: a.output.with_timings.then_some(set.solve_time_ms),
    };
    Ok(Outcome {
        result: pretty(&out)?,
        extra: Vec::new(),
        manifest,
    })
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| usage(format!("{THREADS_ENV} must be a thread count, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Features(a) => emit(&a.output, features(a)?),
        Command::Instances(a) => emit(&a.output, instances(a)?),
        Command::Cluster(a) => emit(&a.output, cluster(a)?),
        Command::Sweep(a) => emit(&a.output, sweep(a)?),
        Command::Solve(a) => emit(&a.output, solve(a)?),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match threads(cli.threads)? {
        Some(0) => Err(usage("thread count must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure {
                    code: 2,
                    message: e.to_string(),
                })?;
            pool.install(|| dispatch(&cli))
        }
        None => dispatch(&cli),
    }
}

/// Parse `argv` (program name first), run the command and return the exit
/// code: 0 on success, 1 on usage errors, 2 on data errors.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isonorm::analysis::{
    alignment_report, effective_rank, effective_rank_from_eigenvalues, error_back_map, radial_curve, radial_error,
    variance_range, RADIAL_GRID,
};
use isonorm::distill::{run_distillation, DistillConfig};
use isonorm::format::{DType, TensorFile, TENSOR_MAGIC};
use isonorm::fuse::{fuse, verify_fusion, LinearLayer};
use isonorm::hadamard::{validate, Constructor, DEFAULT_MAX_SIZE};
use isonorm::linalg::{diag_matrix, EigenSolver};
use isonorm::moments::{accumulate, eigh_matrix, eigh_with, FeatureMatrix};
use isonorm::normalize::{fit, read_manifest, FitOptions, Method, Normalizer, BUNDLE_MAGIC};
use isonorm::{Error, Result};
use isonorm_cli::csvio::{export_csv, import_csv};
use isonorm_cli::exit;
use isonorm_cli::files::{read_bytes, read_normalizer, read_tensor, write_atomic, write_tensor};
use isonorm_cli::stats_file::{read_stats, write_stats};
use ndarray::Array1;
use serde_json::{json, Value};

/// Fit, apply and analyze invertible normalizations of teacher features.
#[derive(Parser)]
#[command(name = "isonorm", version, about)]
struct Cli {
    /// Print results as JSON on stdout and errors as JSON on stderr.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a normalized Hadamard matrix of the given order.
    Hadamard(HadamardArgs),
    /// Convert a numeric CSV file to a tensor file.
    ImportCsv(ImportCsvArgs),
    /// Convert a rank 1 or 2 tensor file to CSV.
    ExportCsv(ExportCsvArgs),
    /// Estimate mean, covariance and global moments of an N × C feature tensor.
    FitStats(FitStatsArgs),
    /// Fit a normalizer from statistics written by `fit-stats`.
    Fit(FitArgs),
    /// Normalize features with a fitted normalizer.
    Apply(TransformArgs),
    /// Map normalized features back to the original space.
    Invert(TransformArgs),
    /// Error-geometry and spectrum diagnostics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Fold a normalizer's inverse into a final linear layer.
    Fuse(FuseArgs),
    /// Run the synthetic multi-teacher distillation harness.
    Simulate(SimulateArgs),
    /// Describe a tensor or normalizer file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct HadamardArgs {
    /// Matrix order.
    #[arg(long)]
    size: usize,
    /// Only print the construction recipe.
    #[arg(long)]
    plan: bool,
    /// Output tensor file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Largest order that may be built.
    #[arg(long, default_value_t = DEFAULT_MAX_SIZE)]
    max_size: usize,
}

#[derive(Args)]
struct ImportCsvArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// The first line is a header and is skipped.
    #[arg(long)]
    header: bool,
    /// Store values as f32.
    #[arg(long)]
    f32: bool,
}

#[derive(Args)]
struct ExportCsvArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write a header line `c0,c1,...`.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct FitStatsArgs {
    /// N × C feature tensor.
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON manifest; the mean and covariance are written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Rows folded into the running moments at a time.
    #[arg(long, default_value_t = 4096)]
    batch_rows: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Ql,
    Jacobi,
}

impl From<Solver> for EigenSolver {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Ql => EigenSolver::HouseholderQl,
            Solver::Jacobi => EigenSolver::Jacobi,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// One of gstd, std, pca, zca, hca, phis.
    #[arg(long)]
    method: Method,
    /// Statistics manifest written by `fit-stats`.
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Relative floor on channel deviations and eigenvalues.
    #[arg(long, default_value_t = 1e-6)]
    floor: f64,
    /// Clamp values below the floor instead of failing.
    #[arg(long)]
    clamp: bool,
    /// Keep the Hadamard matrix's row signs as constructed.
    #[arg(long)]
    no_sign_fix: bool,
    /// Symmetric eigensolver.
    #[arg(long, value_enum, default_value_t = Solver::Ql)]
    solver: Solver,
    /// Largest Hadamard order that may be built.
    #[arg(long, default_value_t = DEFAULT_MAX_SIZE)]
    hadamard_max_size: usize,
}

#[derive(Args)]
struct TransformArgs {
    /// Normalizer file written by `fit`.
    #[arg(long)]
    nrm: PathBuf,
    /// N × C tensor; f32 input produces f32 output.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Norm of the denormalized error for unit normalized errors at each angle (2 channels).
    Radial(RadialArgs),
    /// Per-channel error variance ranges in normalized and original space.
    VarRange(VarRangeArgs),
    /// Effective rank of a covariance or of a singular value list.
    Rank(RankArgs),
    /// Matching between Hadamard rows and covariance eigenvectors.
    Align(AlignArgs),
}

#[derive(Args)]
struct RadialArgs {
    /// Normalizer with 2 channels.
    #[arg(long, conflicts_with_all = ["eigenvalues", "method"])]
    nrm: Option<PathBuf>,
    /// Two eigenvalues of a diagonal covariance, e.g. `3.8356,0.0894`.
    #[arg(long, value_delimiter = ',', requires = "method")]
    eigenvalues: Option<Vec<f64>>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, default_value_t = RADIAL_GRID)]
    points: usize,
    /// CSV output `theta,radius`; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VarRangeArgs {
    #[arg(long)]
    nrm: PathBuf,
    /// N × C tensor of student errors in normalized space.
    #[arg(long)]
    errors: PathBuf,
    /// JSON report; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Use the eigenvalues of this statistics file's covariance.
    #[arg(long, conflicts_with = "singular_values")]
    stats: Option<PathBuf>,
    /// Rank-1 tensor of singular values.
    #[arg(long)]
    singular_values: Option<PathBuf>,
}

#[derive(Args)]
struct AlignArgs {
    /// Normalizer carrying an eigensystem (pca, zca, hca, phis).
    #[arg(long, conflicts_with = "stats")]
    nrm: Option<PathBuf>,
    /// Statistics file; a Hadamard matrix of matching order is constructed.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct FuseArgs {
    /// C × (D + 1) tensor: weight with the bias as the last column.
    #[arg(long)]
    layer: PathBuf,
    #[arg(long)]
    nrm: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Random probes used to check the fused layer against the two-step path.
    #[arg(long, default_value_t = 1000)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, required_unless_present = "print_config")]
    config: Option<PathBuf>,
    /// JSON report with per-teacher trajectories, variance ranges and histograms.
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
    /// Also write one `<teacher>.csv` trajectory per teacher here.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the default configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct InspectArgs {
    file: PathBuf,
}

/// What a command reports: a line of text for people and a JSON value for `--json`.
struct Outcome {
    text: String,
    json: Value,
}

impl Outcome {
    fn new(text: impl Into<String>, json: Value) -> Self {
        Outcome { text: text.into(), json }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(outcome) => {
            if cli.json {
                println!("{}", outcome.json);
            } else if !outcome.text.is_empty() {
                println!("{}", outcome.text);
            }
            ExitCode::from(exit::OK as u8)
        }
        Err(err) => {
            if cli.json {
                eprintln!("{}", exit::error_json(&err));
            } else {
                eprintln!("isonorm: {err}");
            }
            ExitCode::from(exit::code(&err) as u8)
        }
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Hadamard(a) => cmd_hadamard(a),
        Command::ImportCsv(a) => cmd_import_csv(a),
        Command::ExportCsv(a) => cmd_export_csv(a),
        Command::FitStats(a) => cmd_fit_stats(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Apply(a) => cmd_transform(a, true),
        Command::Invert(a) => cmd_transform(a, false),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_hadamard(a: HadamardArgs) -> Result<Outcome> {
    let ctor = Constructor::with_max_size(a.max_size);
    let recipe = ctor.plan(a.size)?;
    let mut json = json!({ "size": a.size, "recipe": recipe.to_string() });
    if !a.plan {
        let h = ctor.build(&recipe)?;
        let report = validate(&h);
        json["orthogonality_residual"] = json!(report.max_orthogonality_residual);
        if let Some(out) = &a.out {
            write_tensor(out, &TensorFile::from_matrix(h.entries()))?;
            json["out"] = json!(display(out));
        }
    }
    Ok(Outcome::new(recipe.to_string(), json))
}

fn cmd_import_csv(a: ImportCsvArgs) -> Result<Outcome> {
    let mut t = import_csv(&a.input, a.header)?;
    if a.f32 {
        t = TensorFile::from_matrix_f32(&t.to_matrix()?.mapv(|v| v as f32));
    }
    write_tensor(&a.out, &t)?;
    let dims = t.dims().to_vec();
    Ok(Outcome::new(format!("{:?} -> {}", dims, display(&a.out)), json!({ "dims": dims, "out": display(&a.out) })))
}

fn cmd_export_csv(a: ExportCsvArgs) -> Result<Outcome> {
    let t = read_tensor(&a.input)?;
    write_atomic(&a.out, &export_csv(&t, a.header)?)?;
    Ok(Outcome::new(String::new(), json!({ "dims": t.dims(), "out": display(&a.out) })))
}

fn features(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::new(read_tensor(path)?.to_matrix()?)
}

fn cmd_fit_stats(a: FitStatsArgs) -> Result<Outcome> {
    let data = features(&a.input)?;
    let stats = accumulate(&data, a.batch_rows)?.finalize()?;
    let manifest = write_stats(&a.out, &stats)?;
    let text = format!(
        "{} samples, {} channels, global mean {:.6}, global sigma {:.6}",
        manifest.n_samples, manifest.channels, manifest.global_mean, manifest.global_sigma
    );
    Ok(Outcome::new(text, serde_json::to_value(&manifest)?))
}

fn cmd_fit(a: FitArgs) -> Result<Outcome> {
    let stats = read_stats(&a.stats)?;
    let opts = FitOptions {
        floor: a.floor,
        clamp: a.clamp,
        sign_fix: !a.no_sign_fix,
        solver: a.solver.into(),
        hadamard_max_size: a.hadamard_max_size,
    };
    let nrm = fit(&stats, a.method, &opts)?;
    let bytes = nrm.to_bytes();
    write_atomic(&a.out, &bytes)?;
    let manifest = read_manifest(&bytes)?;
    let text = format!("{} normalizer for {} channels -> {}", manifest.method, manifest.channels, display(&a.out));
    Ok(Outcome::new(text, serde_json::to_value(&manifest)?))
}

fn cmd_transform(a: TransformArgs, forward: bool) -> Result<Outcome> {
    let nrm = read_normalizer(&a.nrm)?;
    let input = read_tensor(&a.input)?;
    let out = match input.dtype() {
        DType::F32 => {
            let x = input.to_matrix_f32()?;
            let y = if forward { nrm.apply_f32(x.view())? } else { nrm.invert_f32(x.view())? };
            TensorFile::from_matrix_f32(&y)
        }
        DType::F64 => {
            let x = input.to_matrix()?;
            let y = if forward { nrm.apply(x.view())? } else { nrm.invert(x.view())? };
            TensorFile::from_matrix(&y)
        }
    };
    write_tensor(&a.out, &out)?;
    Ok(Outcome::new(String::new(), json!({ "dims": out.dims(), "method": nrm.method().tag(), "out": display(&a.out) })))
}

fn emit(out: &Option<PathBuf>, text: String, json: Value) -> Result<Outcome> {
    match out {
        Some(path) => {
            write_atomic(path, text.as_bytes())?;
            Ok(Outcome::new(String::new(), json))
        }
        None => Ok(Outcome::new(text.trim_end().to_string(), json)),
    }
}

fn cmd_analyze(cmd: AnalyzeCommand) -> Result<Outcome> {
    match cmd {
        AnalyzeCommand::Radial(a) => {
            let curve = match (&a.nrm, &a.eigenvalues, a.method) {
                (Some(path), _, _) => radial_curve(&error_back_map(&read_normalizer(path)?), a.points)?,
                (None, Some(values), Some(method)) => {
                    let eigs = eigh_matrix(&diag_matrix(&Array1::from(values.clone())), EigenSolver::default())?;
                    radial_error(&eigs, method, a.points)?
                }
                _ => return Err(Error::InvalidArgument("give --nrm, or --eigenvalues with --method".into())),
            };
            let json = json!({
                "points": a.points,
                "max": curve.max(),
                "min": curve.min(),
                "argmax_theta": curve.thetas[curve.argmax()],
                "argmin_theta": curve.thetas[curve.argmin()],
            });
            emit(&a.out, curve.to_csv(), json)
        }
        AnalyzeCommand::VarRange(a) => {
            let nrm = read_normalizer(&a.nrm)?;
            let err = read_tensor(&a.errors)?.to_matrix()?;
            let report = serde_json::to_value(variance_range(&nrm, err.view())?)?;
            emit(&a.out, serde_json::to_string_pretty(&report)? + "\n", report)
        }
        AnalyzeCommand::Rank(a) => {
            let (source, rank, len) = match (&a.stats, &a.singular_values) {
                (Some(path), _) => {
                    let stats = read_stats(path)?;
                    let eigs = eigh_with(&stats.covariance, EigenSolver::default())?;
                    ("eigenvalues", effective_rank_from_eigenvalues(eigs.values.as_slice().expect("contiguous"))?, eigs.values.len())
                }
                (None, Some(path)) => {
                    let v = read_tensor(path)?.to_vector()?;
                    ("singular_values", effective_rank(v.as_slice().expect("contiguous"))?, v.len())
                }
                _ => return Err(Error::InvalidArgument("give --stats or --singular-values".into())),
            };
            let json = json!({ "source": source, "length": len, "effective_rank": rank });
            Ok(Outcome::new(format!("effective rank {rank:.6} of {len}"), json))
        }
        AnalyzeCommand::Align(a) => {
            let (eigs, h) = match (&a.nrm, &a.stats) {
                (Some(path), _) => {
                    let nrm: Normalizer = read_normalizer(path)?;
                    let eigs = nrm
                        .eigensystem()
                        .cloned()
                        .ok_or_else(|| Error::InvalidArgument(format!("{} normalizers carry no eigensystem", nrm.method())))?;
                    let h = match nrm.hadamard() {
                        Some(h) => h.clone(),
                        None => Constructor::default().construct(nrm.channels())?.into_entries(),
                    };
                    (eigs, h)
                }
                (None, Some(path)) => {
                    let stats = read_stats(path)?;
                    let eigs = eigh_with(&stats.covariance, EigenSolver::default())?;
                    let h = Constructor::default().construct(stats.channels())?.into_entries();
                    (eigs, h)
                }
                _ => return Err(Error::InvalidArgument("give --nrm or --stats".into())),
            };
            let report = alignment_report(&eigs, &h)?;
            let text = format!(
                "mean matched |H U^T| {:.6}, min {:.6}, {} of {} above {}",
                report.mean,
                report.min,
                report.count_above,
                eigs.channels(),
                report.threshold
            );
            Ok(Outcome::new(text, serde_json::to_value(&report)?))
        }
    }
}

fn cmd_fuse(a: FuseArgs) -> Result<Outcome> {
    let layer = LinearLayer::from_tensor(&read_tensor(&a.layer)?)?;
    let nrm = read_normalizer(&a.nrm)?;
    let fused = fuse(&layer, &nrm)?;
    let err = verify_fusion(&layer, &nrm, &fused, a.probes, a.seed)?;
    write_tensor(&a.out, &fused.layer.to_tensor())?;
    let json = json!({
        "method": fused.method.tag(),
        "outputs": fused.layer.outputs(),
        "inputs": fused.layer.inputs(),
        "max_relative_error": err,
        "out": display(&a.out),
    });
    Ok(Outcome::new(format!("fused {} layer, max relative error {err:.3e}", fused.method), json))
}

fn cmd_simulate(a: SimulateArgs) -> Result<Outcome> {
    if a.print_config {
        let cfg = serde_json::to_value(DistillConfig::default())?;
        return Ok(Outcome::new(serde_json::to_string_pretty(&cfg)?, cfg));
    }
    let (Some(config), Some(out)) = (&a.config, &a.out) else {
        return Err(Error::InvalidArgument("--config and --out are required".into()));
    };
    let mut cfg: DistillConfig = serde_json::from_slice(&read_bytes(config)?)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let report = run_distillation(&cfg)?;
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');
    write_atomic(out, &json)?;
    if let Some(dir) = &a.csv_dir {
        std::fs::create_dir_all(dir)?;
        for t in &report.teachers {
            write_atomic(&dir.join(format!("{}.csv", t.name)), t.trajectory.to_csv().as_bytes())?;
        }
    }
    let summary: Vec<Value> = report
        .teachers
        .iter()
        .map(|t| {
            json!({
                "name": t.name,
                "method": t.method,
                "normalized_mse": t.final_normalized_mse,
                "denormalized_mse": t.final_denormalized_mse,
                "normalized_variance_range": t.variance.normalized_range,
            })
        })
        .collect();
    let text = report
        .teachers
        .iter()
        .map(|t| {
            format!(
                "{:<10} {:<8} normalized mse {:.4e}  denormalized mse {:.4e}",
                t.name, t.method, t.final_normalized_mse, t.final_denormalized_mse
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::new(text, json!({ "out": display(out), "teachers": summary })))
}

fn cmd_inspect(a: InspectArgs) -> Result<Outcome> {
    let bytes = read_bytes(&a.file)?;
    if bytes.starts_with(TENSOR_MAGIC) {
        let t = TensorFile::from_bytes(&bytes)?;
        let dtype = match t.dtype() {
            DType::F32 => "f32",
            DType::F64 => "f64",
        };
        let json = json!({ "kind": "tensor", "dtype": dtype, "dims": t.dims() });
        return Ok(Outcome::new(format!("tensor {dtype} {:?}", t.dims()), json));
    }
    if bytes.starts_with(BUNDLE_MAGIC) {
        let manifest = read_manifest(&bytes)?;
        let text = serde_json::to_string_pretty(&manifest)?;
        return Ok(Outcome::new(text, json!({ "kind": "normalizer", "manifest": manifest })));
    }
    Err(Error::Format(format!("{} is neither a tensor nor a normalizer file", display(&a.file))))
}

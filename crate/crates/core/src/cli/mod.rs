//! Command line front-end. [`run_command`] parses `argv`, runs one
//! subcommand and maps errors to exit codes (1 for invalid input, 2 for
//! numerical failure) with a single `error kind=... msg=...` line on stderr.

pub mod experiment;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{fit, FitConfig};
use crate::clustering::{kmeans_partition, select_k, spectral_embedding};
use crate::error::{validation, Error, Result};
use crate::evaluation::{balance_from_groups, bic_score, clustering_error, pcee, tune_select, EvalReport, TuneCandidate, BIC_C};
use crate::fairness::FairnessPolytope;
use crate::io::{self, NumFormat};
use crate::losses::{LossKind, LossModel};
use crate::synthetic::{
    generate_ising_params, generate_precision, generate_sbm, load_ground_truth, sample_gaussian, sample_ising,
    save_ground_truth, GibbsConfig, IsingParams, PrecisionParams, SbmParams,
};
use crate::types::{DataKind, Dataset, FitResult, PartitionRelaxation};

pub const FIT_SCHEMA: &str = "fairgl.fit.v1";

#[derive(Parser, Debug)]
#[command(name = "fairgl", version, about = "Fair community detection with sparse graphical models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a block-model graph, its weights and a dataset.
    Generate(GenerateArgs),
    /// Fit a model and extract communities.
    Fit(FitArgs),
    /// Spectral clustering of a stored partition matrix.
    Cluster(ClusterArgs),
    /// Score a fit against a stored ground truth.
    Evaluate(EvaluateArgs),
    /// BIC selection over a penalty grid.
    Tune(TuneArgs),
    /// Seeds × grid × setup matrix with aggregate tables.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DataModel {
    Gaussian,
    Ising,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    p: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    h: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4")]
    zetas: Vec<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "gaussian")]
    model: DataModel,
    #[arg(long, value_delimiter = ',', default_value = "0.1,3")]
    weight_range: Vec<f64>,
    /// Random signs on the edge weights.
    #[arg(long)]
    mixed_signs: bool,
    #[arg(long, default_value_t = IsingParams::default().scale)]
    ising_scale: f64,
    #[arg(long, default_value_t = GibbsConfig::default().burn_in)]
    burn_in: usize,
    #[arg(long, default_value_t = GibbsConfig::default().thin)]
    thin: usize,
    #[arg(long, default_value = "ground_truth")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Observations, one row per sample.
    #[arg(long)]
    data: PathBuf,
    /// Single column of group ids, one per variable.
    #[arg(long)]
    demographics: Option<PathBuf>,
    /// The data file starts with a header row of node names.
    #[arg(long)]
    header: bool,
    /// Subtract column means before fitting.
    #[arg(long)]
    center: bool,
}

#[derive(Args, Debug, Clone, Default)]
struct FitOptions {
    /// JSON file with `schema`, `model`, `rho1`, `rho2` and `fit` fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<LossKind>,
    #[arg(long)]
    rho1: Option<f64>,
    #[arg(long)]
    rho2: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Pass `G(Ω)` to the Q-step without removing its mean off-diagonal.
    #[arg(long)]
    no_center_g: bool,
    /// Keep `γ` fixed apart from stagnation escalation.
    #[arg(long)]
    fixed_gamma: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    opts: FitOptions,
    #[arg(long, default_value = "fit_out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    q: PathBuf,
    /// Number of communities; chosen by eigengap when absent.
    #[arg(long)]
    k: Option<usize>,
    /// Group count, the lower end of the eigengap search.
    #[arg(long, default_value_t = 1)]
    h: usize,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "labels.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory written by `generate`.
    #[arg(long)]
    truth: PathBuf,
    /// Directory written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Data used for the fit; enables the BIC entry.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    /// Defaults to `<fit>/report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    opts: FitOptions,
    #[arg(long, value_delimiter = ',', required = true)]
    rho1_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    rho2_grid: Vec<f64>,
    #[arg(long, default_value = "tune_out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value = "experiment_out")]
    out: PathBuf,
}

/// Fit settings as stored in a config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub schema: String,
    pub model: LossKind,
    pub rho1: f64,
    pub rho2: f64,
    #[serde(default)]
    pub fit: FitConfig,
}

/// Parses and runs one command; returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=validation msg={first}");
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error kind={} msg={}", e.kind(), e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Experiment(a) => cmd_experiment(a),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Rounds to the 12 significant digits used in every output file.
fn sig12(x: f64) -> f64 {
    io::fmt_sig(x, 12).parse().unwrap_or(x)
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let zetas: [f64; 4] = a
        .zetas
        .as_slice()
        .try_into()
        .map_err(|_| validation(format!("--zetas needs 4 values, got {}", a.zetas.len())))?;
    let weight_range = match a.weight_range.as_slice() {
        &[lo, hi] => (lo, hi),
        _ => return Err(validation("--weight-range needs two values lo,hi")),
    };
    let params = SbmParams { p: a.p, k: a.k, h: a.h, zetas };
    let graph = generate_sbm(&params, a.seed)?;
    let gibbs = GibbsConfig { burn_in: a.burn_in, thin: a.thin };
    let (theta, data) = match a.model {
        DataModel::Gaussian => {
            let t = generate_precision(&graph.adjacency, &PrecisionParams { weight_range, mixed_signs: a.mixed_signs }, a.seed)?;
            let d = sample_gaussian(&t, a.n, a.seed)?;
            (t, d)
        }
        DataModel::Ising => {
            let ip = IsingParams { weight_range, scale: a.ising_scale, mixed_signs: a.mixed_signs };
            let t = generate_ising_params(&graph.adjacency, &ip, a.seed)?;
            let d = sample_ising(&t, a.n, &gibbs, a.seed)?;
            (t, d)
        }
    };
    let truth = graph.with_theta(theta, weight_range);
    let mut extra = serde_json::Map::new();
    extra.insert("n".into(), a.n.into());
    extra.insert("model".into(), serde_json::to_value(a.model).unwrap_or_default());
    extra.insert("mixed_signs".into(), a.mixed_signs.into());
    if let DataModel::Ising = a.model {
        extra.insert("ising_scale".into(), a.ising_scale.into());
        extra.insert("burn_in".into(), a.burn_in.into());
        extra.insert("thin".into(), a.thin.into());
    }
    save_ground_truth(&a.out, &truth, extra)?;
    io::write_dataset(&a.out.join("data.csv"), &data)?;
    io::write_labels_csv(&a.out.join("demographics.csv"), &truth.groups)?;
    Ok(())
}

fn load_data(d: &DataArgs, kind: DataKind) -> Result<Dataset> {
    let ds = io::read_dataset(&d.data, kind, d.header, d.demographics.as_deref())?;
    Ok(if d.center { ds.centered() } else { ds })
}

/// Config file (if any) overlaid with command line flags.
fn resolve_fit(opts: &FitOptions) -> Result<(LossModel, FitConfig)> {
    let base = match &opts.config {
        Some(p) => {
            let f: FitFile = io::read_json(p)?;
            if f.schema != FIT_SCHEMA {
                return Err(validation(format!("unknown schema {:?}, expected {FIT_SCHEMA:?}", f.schema)));
            }
            Some(f)
        }
        None => None,
    };
    let kind = opts
        .model
        .or(base.as_ref().map(|b| b.model))
        .ok_or_else(|| validation("--model is required (or a config file)"))?;
    let rho1 = opts.rho1.or(base.as_ref().map(|b| b.rho1)).unwrap_or(0.1);
    let rho2 = opts.rho2.or(base.as_ref().map(|b| b.rho2)).unwrap_or(0.05);
    let mut cfg = base.map(|b| b.fit).unwrap_or_default();
    if let Some(v) = opts.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = opts.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = opts.nu {
        cfg.nu = v;
    }
    if let Some(v) = opts.max_iter {
        cfg.max_outer_iter = v;
    }
    if opts.k.is_some() {
        cfg.k = opts.k;
    }
    if let Some(v) = opts.seed {
        cfg.seed = v;
    }
    if let Some(v) = opts.restarts {
        cfg.restarts = v;
    }
    if opts.no_center_g {
        cfg.center_g = false;
    }
    if opts.fixed_gamma {
        cfg.balance_gamma = false;
    }
    let model = LossModel::new(kind, rho1, rho2)?;
    cfg.validate()?;
    Ok((model, cfg))
}

fn polytope_for(data: &Dataset, epsilon: f64) -> Result<FairnessPolytope> {
    match data.demographics() {
        Some(g) => FairnessPolytope::from_groups(g, epsilon),
        None => Ok(FairnessPolytope::unconstrained(data.p())),
    }
}

#[derive(Serialize)]
struct FitSummary<'a> {
    schema: &'a str,
    model: LossModel,
    config: &'a FitConfig,
    converged: bool,
    iterations: usize,
    k: usize,
}

fn write_fit(dir: &Path, res: &FitResult) -> Result<()> {
    create_dir(dir)?;
    io::write_matrix_csv(&dir.join("theta.csv"), res.theta.values(), None, NumFormat::Sig12)?;
    io::write_matrix_csv(&dir.join("q.csv"), res.q.values(), None, NumFormat::Sig12)?;
    io::write_labels_csv(&dir.join("labels.csv"), &res.labels)?;
    let dp = dir.join("diagnostics.jsonl");
    let mut w = BufWriter::new(File::create(&dp).map_err(|e| io_err(&dp, e))?);
    for r in &res.diagnostics {
        let mut rec = r.clone();
        for v in [&mut rec.obj, &mut rec.primal_res, &mut rec.dq_rel, &mut rec.dtheta_rel, &mut rec.wall_ms] {
            *v = sig12(*v);
        }
        let line = serde_json::to_string(&rec).map_err(|e| Error::Parse { path: dp.clone(), msg: e.to_string() })?;
        writeln!(w, "{line}").map_err(|e| io_err(&dp, e))?;
    }
    w.flush().map_err(|e| io_err(&dp, e))?;
    let summary = FitSummary {
        schema: FIT_SCHEMA,
        model: res.model,
        config: &res.config,
        converged: res.converged,
        iterations: res.iterations(),
        k: res.k,
    };
    io::write_json(&dir.join("fit.json"), &summary)
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let (model, cfg) = resolve_fit(&a.opts)?;
    let data = load_data(&a.data, model.data_kind())?;
    let poly = polytope_for(&data, cfg.epsilon)?;
    let res = fit(&model, &data, &poly, &cfg)?;
    write_fit(&a.out, &res)
}

fn cmd_cluster(a: ClusterArgs) -> Result<()> {
    let (_, q) = io::read_matrix_csv(&a.q, false)?;
    let q = PartitionRelaxation::new(q, 1e-4)?;
    let k = match a.k {
        Some(k) => k,
        None => select_k(&q, a.h)?,
    };
    let emb = spectral_embedding(&q, k)?;
    let labels = kmeans_partition(&emb, k, a.restarts, a.seed)?;
    io::write_labels_csv(&a.out, &labels.labels)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let truth = load_ground_truth(&a.truth)?;
    let labels = io::read_labels_csv(&a.fit.join("labels.csv"), false)?;
    let (_, theta) = io::read_matrix_csv(&a.fit.join("theta.csv"), false)?;
    let mut report = EvalReport {
        ce: Some(sig12(clustering_error(&labels, &truth.communities)?)),
        balance: Some(sig12(balance_from_groups(&labels, &truth.groups)?)),
        ..Default::default()
    };
    report.pcee = match pcee(&theta, &truth.theta_true) {
        Ok(v) => Some(sig12(v)),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    if let Some(dp) = &a.data {
        let (_, q) = io::read_matrix_csv(&a.fit.join("q.csv"), false)?;
        let (_, y) = io::read_matrix_csv(dp, a.header)?;
        let ds = Dataset::new(y, DataKind::Continuous).or_else(|_| {
            let (_, y) = io::read_matrix_csv(dp, a.header)?;
            Dataset::new(y, DataKind::Binary)
        })?;
        report.bic = bic_score(&theta, &q, &ds, BIC_C).ok().map(sig12);
    }
    report.extras.insert("k".into(), labels.iter().copied().max().unwrap_or(0) as f64);
    let out = a.out.unwrap_or_else(|| a.fit.join("report.json"));
    io::write_json(&out, &report)
}

#[derive(Serialize)]
struct TuneBest {
    rho1: f64,
    rho2: f64,
    bic: f64,
}

fn cmd_tune(a: TuneArgs) -> Result<()> {
    let (model, cfg) = resolve_fit(&a.opts)?;
    let data = load_data(&a.data, model.data_kind())?;
    let poly = polytope_for(&data, cfg.epsilon)?;
    let mut points = Vec::new();
    for &r1 in &a.rho1_grid {
        for &r2 in &a.rho2_grid {
            points.push(LossModel::new(model.kind, r1, r2)?);
        }
    }
    let pool = experiment::thread_pool()?;
    let fits: Vec<(TuneCandidate, Option<FitResult>)> = pool.install(|| {
        points
            .par_iter()
            .map(|m| {
                let res = fit(m, &data, &poly, &cfg).ok();
                let bic = res.as_ref().and_then(|r| bic_score(r.theta.values(), r.q.values(), &data, BIC_C).ok());
                (TuneCandidate { rho1: m.rho1, rho2: m.rho2, bic }, res)
            })
            .collect()
    });
    create_dir(&a.out)?;
    let gp = a.out.join("grid.csv");
    let mut w = csv::Writer::from_path(&gp).map_err(|e| Error::Parse { path: gp.clone(), msg: e.to_string() })?;
    let werr = |e: csv::Error| Error::Parse { path: gp.clone(), msg: e.to_string() };
    w.write_record(["rho1", "rho2", "bic", "converged", "iterations"]).map_err(werr)?;
    for (c, r) in &fits {
        w.write_record([
            io::fmt_sig(c.rho1, 12),
            io::fmt_sig(c.rho2, 12),
            c.bic.map(|b| io::fmt_sig(b, 12)).unwrap_or_else(|| "NA".into()),
            r.as_ref().map(|r| r.converged.to_string()).unwrap_or_else(|| "failed".into()),
            r.as_ref().map(|r| r.iterations().to_string()).unwrap_or_default(),
        ])
        .map_err(werr)?;
    }
    w.flush().map_err(|e| io_err(&gp, e))?;
    let cands: Vec<TuneCandidate> = fits.iter().map(|(c, _)| *c).collect();
    let best = tune_select(&cands)?;
    io::write_json(
        &a.out.join("best.json"),
        &TuneBest { rho1: best.rho1, rho2: best.rho2, bic: sig12(best.bic.unwrap_or(f64::NAN)) },
    )
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut spec: experiment::ExperimentSpec = io::read_json(&a.config)?;
    if let Some(s) = a.seeds {
        spec.seeds = s;
    }
    spec.validate()?;
    create_dir(&a.out)?;
    io::write_json(&a.out.join("spec.json"), &spec)?;
    experiment::run_experiment(&spec, Some(&a.out))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> i32 {
        run_command(std::iter::once("fairgl").chain(args.iter().copied()))
    }

    #[test]
    fn unknown_subcommand_is_validation_error() {
        assert_eq!(run(&["frobnicate"]), 1);
        assert_eq!(run(&["generate", "--p", "5", "--k", "2", "--h", "3", "--n", "10", "--out", "/nonexistent/x"]), 1);
    }

    #[test]
    fn resolve_fit_overrides_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfgp = dir.path().join("c.json");
        let file = FitFile { schema: FIT_SCHEMA.into(), model: LossKind::Fglasso, rho1: 0.3, rho2: 0.2, fit: FitConfig { gamma: 0.5, ..Default::default() } };
        io::write_json(&cfgp, &file).unwrap();
        let opts = FitOptions { config: Some(cfgp.clone()), rho2: Some(0.7), ..Default::default() };
        let (m, c) = resolve_fit(&opts).unwrap();
        assert_eq!(m.kind, LossKind::Fglasso);
        assert_eq!((m.rho1, m.rho2), (0.3, 0.7));
        assert_eq!(c.gamma, 0.5);
        let bad = FitFile { schema: "nope".into(), ..file };
        io::write_json(&cfgp, &bad).unwrap();
        assert!(resolve_fit(&FitOptions { config: Some(cfgp), ..Default::default() }).is_err());
    }
}

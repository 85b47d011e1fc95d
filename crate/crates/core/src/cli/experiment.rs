//! Seeds × penalty-grid × setup experiment matrix with on-disk resumption
//! and a median/IQR aggregate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{fit, FitConfig};
use crate::error::{validation, Error, Result};
use crate::evaluation::{balance_from_groups, bic_score, clustering_error, pcee, BIC_C};
use crate::fairness::FairnessPolytope;
use crate::io;
use crate::losses::{LossKind, LossModel};
use crate::synthetic::{
    generate_ising_params, generate_precision, generate_sbm, sample_gaussian, sample_ising, GibbsConfig,
    IsingParams, PrecisionParams, SbmParams,
};
use crate::types::Dataset;

pub const EXPERIMENT_SCHEMA: &str = "fairgl.experiment.v1";

/// How the partition is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setup {
    /// Joint estimation without fairness constraints, then k-means.
    #[serde(rename = "II")]
    Joint,
    /// Joint estimation under the parity constraints, then k-means.
    #[serde(rename = "FII")]
    FairJoint,
}

impl Setup {
    pub fn tag(self) -> &'static str {
        match self {
            Setup::Joint => "II",
            Setup::FairJoint => "FII",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub rho1: f64,
    pub rho2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub name: String,
    pub p: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(default = "default_zetas")]
    pub zetas: [f64; 4],
    pub seeds: Vec<u64>,
    pub model: LossKind,
    pub grid: Vec<GridPoint>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_setups")]
    pub setups: Vec<Setup>,
    /// Pass the true community count to the clustering step.
    #[serde(default = "default_true")]
    pub known_k: bool,
    #[serde(default)]
    pub precision: PrecisionParams,
    #[serde(default)]
    pub ising: IsingParams,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_schema() -> String {
    EXPERIMENT_SCHEMA.into()
}
fn default_zetas() -> [f64; 4] {
    [0.1, 0.2, 0.3, 0.4]
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_setups() -> Vec<Setup> {
    vec![Setup::Joint, Setup::FairJoint]
}
fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    pub fn new(name: &str, p: usize, n: usize, k: usize, h: usize, model: LossKind) -> Self {
        Self {
            schema: default_schema(),
            name: name.into(),
            p,
            n,
            k,
            h,
            zetas: default_zetas(),
            seeds: (0..10).collect(),
            model,
            grid: vec![GridPoint { rho1: 0.05, rho2: 0.05 }],
            epsilon: default_epsilon(),
            setups: default_setups(),
            known_k: true,
            precision: PrecisionParams::default(),
            ising: IsingParams::default(),
            gibbs: GibbsConfig::default(),
            fit: FitConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(validation("experiment needs at least one seed"));
        }
        if self.grid.is_empty() {
            return Err(validation("experiment needs at least one grid point"));
        }
        if self.setups.is_empty() {
            return Err(validation("experiment needs at least one setup"));
        }
        if self.schema != EXPERIMENT_SCHEMA {
            return Err(validation(format!("unknown schema {:?}, expected {EXPERIMENT_SCHEMA:?}", self.schema)));
        }
        self.sbm().validate()?;
        for g in &self.grid {
            LossModel::new(self.model, g.rho1, g.rho2)?;
        }
        self.fit.validate()
    }

    fn sbm(&self) -> SbmParams {
        SbmParams { p: self.p, k: self.k, h: self.h, zetas: self.zetas }
    }

    /// Ground truth and data for one seed.
    pub fn instance(&self, seed: u64) -> Result<Instance> {
        let graph = generate_sbm(&self.sbm(), seed)?;
        let (theta, data) = match self.model {
            LossKind::Fbn => {
                let t = generate_ising_params(&graph.adjacency, &self.ising, seed)?;
                let d = sample_ising(&t, self.n, &self.gibbs, seed)?;
                (t, d)
            }
            _ => {
                let t = generate_precision(&graph.adjacency, &self.precision, seed)?;
                let d = sample_gaussian(&t, self.n, seed)?;
                (t, d)
            }
        };
        let data = data.with_demographics(graph.groups.clone())?;
        Ok(Instance { theta_true: theta, communities: graph.communities, groups: graph.groups, data })
    }
}

pub struct Instance {
    pub theta_true: crate::linalg::Mat,
    pub communities: Vec<usize>,
    pub groups: Vec<usize>,
    pub data: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub setup: Setup,
    pub rho1: f64,
    pub rho2: f64,
    pub seed: u64,
    pub ce: f64,
    pub pcee: Option<f64>,
    pub balance: f64,
    pub bic: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl CellResult {
    fn file_name(&self) -> String {
        cell_file_name(self.setup, &GridPoint { rho1: self.rho1, rho2: self.rho2 }, self.seed)
    }
}

fn cell_file_name(setup: Setup, g: &GridPoint, seed: u64) -> String {
    format!("{}_r1-{}_r2-{}_s{}.json", setup.tag(), io::fmt_sig(g.rho1, 12), io::fmt_sig(g.rho2, 12), seed)
}

/// Fits and scores one (setup, grid point) on a prepared instance.
pub fn run_cell(spec: &ExperimentSpec, inst: &Instance, setup: Setup, g: &GridPoint, seed: u64) -> Result<CellResult> {
    let model = LossModel::new(spec.model, g.rho1, g.rho2)?;
    let poly = match setup {
        Setup::Joint => FairnessPolytope::unconstrained(spec.p),
        Setup::FairJoint => FairnessPolytope::from_groups(&inst.groups, spec.epsilon)?,
    };
    let cfg = FitConfig {
        seed,
        epsilon: spec.epsilon,
        k: if spec.known_k { Some(spec.k) } else { spec.fit.k },
        ..spec.fit.clone()
    };
    let res = fit(&model, &inst.data, &poly, &cfg)?;
    let theta = res.theta.values();
    let bic = match spec.model {
        LossKind::Fbn => None,
        _ => bic_score(theta, res.q.values(), &inst.data, BIC_C).ok(),
    };
    Ok(CellResult {
        setup,
        rho1: g.rho1,
        rho2: g.rho2,
        seed,
        ce: clustering_error(&res.labels, &inst.communities)?,
        pcee: pcee(theta, &inst.theta_true).ok(),
        balance: balance_from_groups(&res.labels, &inst.groups)?,
        bic,
        iterations: res.iterations(),
        converged: res.converged,
    })
}

/// Rayon pool honouring `FAIRGL_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("FAIRGL_THREADS") {
        let t: usize = v
            .parse()
            .map_err(|_| validation(format!("FAIRGL_THREADS must be a positive integer, got {v:?}")))?;
        b = b.num_threads(t.max(1));
    }
    b.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))
}

/// Runs every (seed, grid point, setup) cell. With `out_dir`, finished cells
/// are stored under `cells/` and skipped on later runs. Results are sorted
/// by (setup, grid index, seed).
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let cell_dir: Option<PathBuf> = out_dir.map(|d| d.join("cells"));
    if let Some(d) = &cell_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
    }
    let pool = thread_pool()?;
    let per_seed: Vec<Result<Vec<CellResult>>> = pool.install(|| {
        spec.seeds
            .par_iter()
            .map(|&seed| {
                let mut todo = Vec::new();
                let mut done = Vec::new();
                for g in &spec.grid {
                    for &setup in &spec.setups {
                        let cached = cell_dir.as_ref().map(|d| d.join(cell_file_name(setup, g, seed)));
                        match cached.filter(|p| p.exists()) {
                            Some(p) => done.push(io::read_json::<CellResult>(&p)?),
                            None => todo.push((setup, *g)),
                        }
                    }
                }
                if !todo.is_empty() {
                    let inst = spec.instance(seed)?;
                    for (setup, g) in todo {
                        let cell = run_cell(spec, &inst, setup, &g, seed)?;
                        if let Some(d) = &cell_dir {
                            io::write_json(&d.join(cell.file_name()), &cell)?;
                        }
                        done.push(cell);
                    }
                }
                Ok(done)
            })
            .collect()
    });
    let mut all = Vec::new();
    for r in per_seed {
        all.extend(r?);
    }
    let grid_index = |c: &CellResult| spec.grid.iter().position(|g| g.rho1 == c.rho1 && g.rho2 == c.rho2).unwrap_or(usize::MAX);
    all.sort_by(|a, b| (a.setup, grid_index(a), a.seed).cmp(&(b.setup, grid_index(b), b.seed)));
    if let Some(d) = out_dir {
        write_summary(d, &all)?;
    }
    Ok(all)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub median: f64,
    pub iqr: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some(Summary {
        median: quantile(&v, 0.5),
        iqr: quantile(&v, 0.75) - quantile(&v, 0.25),
        mean,
        std: var.sqrt(),
        count: v.len(),
    })
}

pub const METRICS: [&str; 4] = ["ce", "pcee", "balance", "bic"];

fn metric(c: &CellResult, name: &str) -> Option<f64> {
    match name {
        "ce" => Some(c.ce),
        "pcee" => c.pcee,
        "balance" => Some(c.balance),
        "bic" => c.bic,
        _ => None,
    }
}

/// Per (setup, ρ₁, ρ₂) summaries of every metric, in first-seen order.
pub fn aggregate(cells: &[CellResult]) -> Vec<((Setup, f64, f64), BTreeMap<&'static str, Summary>)> {
    let mut out: Vec<((Setup, f64, f64), BTreeMap<&'static str, Summary>)> = Vec::new();
    let mut keys: Vec<(Setup, f64, f64)> = Vec::new();
    for c in cells {
        let key = (c.setup, c.rho1, c.rho2);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for key in keys {
        let group: Vec<&CellResult> = cells.iter().filter(|c| (c.setup, c.rho1, c.rho2) == key).collect();
        let mut m = BTreeMap::new();
        for name in METRICS {
            let vals: Vec<f64> = group.iter().filter_map(|c| metric(c, name)).collect();
            if let Some(s) = summarize(&vals) {
                m.insert(name, s);
            }
        }
        out.push((key, m));
    }
    out
}

/// Writes `summary.csv` (long format) and `table.txt` (median(IQR) and
/// mean(std) per setup row).
pub fn write_summary(dir: &Path, cells: &[CellResult]) -> Result<()> {
    let agg = aggregate(cells);
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Parse { path: path.clone(), msg: e.to_string() })?;
    let werr = |e: csv::Error| Error::Parse { path: path.clone(), msg: e.to_string() };
    w.write_record(["setup", "rho1", "rho2", "metric", "median", "iqr", "mean", "std", "count"]).map_err(werr)?;
    for ((setup, r1, r2), m) in &agg {
        for (name, s) in m {
            w.write_record([
                setup.tag().to_string(),
                io::fmt_sig(*r1, 12),
                io::fmt_sig(*r2, 12),
                name.to_string(),
                io::fmt_sig(s.median, 12),
                io::fmt_sig(s.iqr, 12),
                io::fmt_sig(s.mean, 12),
                io::fmt_sig(s.std, 12),
                s.count.to_string(),
            ])
            .map_err(werr)?;
        }
    }
    w.flush().map_err(|e| Error::Io { path: path.clone(), source: e })?;

    let mut t = String::new();
    let _ = writeln!(t, "{:<6} {:>8} {:>8}  {:<25} {:<25} Balance", "setup", "rho1", "rho2", "CE", "PCEE");
    for ((setup, r1, r2), m) in &agg {
        let cell = |k: &str, robust: bool| match m.get(k) {
            Some(s) if robust => format!("{:.3}({:.3})", s.median, s.iqr),
            Some(s) => format!("{:.3}({:.3})", s.mean, s.std),
            None => "-".into(),
        };
        let _ = writeln!(
            t,
            "{:<6} {:>8} {:>8}  {:<25} {:<25} {}",
            setup.tag(),
            io::fmt_sig(*r1, 6),
            io::fmt_sig(*r2, 6),
            format!("{} {}", cell("ce", true), cell("ce", false)),
            format!("{} {}", cell("pcee", true), cell("pcee", false)),
            format!("{} {}", cell("balance", true), cell("balance", false)),
        );
    }
    let _ = writeln!(t, "\neach entry: median(IQR) mean(std) over seeds");
    let tp = dir.join("table.txt");
    std::fs::write(&tp, t).map_err(|e| Error::Io { path: tp, source: e })
}

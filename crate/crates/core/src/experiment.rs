//! Seeded experiment runs and reproduction grids.
//!
//! One run = one `(config, seed)` pair: the seed drives the graph, the
//! mechanism coefficients, the intervention constants, the samples and the
//! initialization of `L̂`. The mixing matrix comes from `mixing_seed` and is
//! shared by every seed of a setting.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{EnvDataset, MixingMatrix};
use crate::design::{leave_one_out_design, separating_design, EnvironmentSet};
use crate::disentangler::{train, LossWeights, TrainConfig, TrainReport, UnmixingModel};
use crate::ica::{fit_fastica, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::metrics::{mcc_score, MccResult};
use crate::scm::{DagAdjacency, Scm};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    LeaveOneOut,
    Separating,
    /// Read from `design_file`.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScmKind {
    Linear,
    Nonlinear1,
    Nonlinear2,
}

impl ScmKind {
    /// Fixed dimension of the builtin nonlinear models.
    pub fn fixed_dim(self) -> Option<usize> {
        match self {
            ScmKind::Linear => None,
            ScmKind::Nonlinear1 | ScmKind::Nonlinear2 => Some(6),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ours,
    Fastica,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Fastica => "fastica",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub d: usize,
    pub p: f64,
    pub n_per_env: usize,
    pub seeds: Vec<u64>,
    pub design: DesignKind,
    pub design_file: Option<PathBuf>,
    pub scm: ScmKind,
    pub mixing_seed: u64,
    pub weights: LossWeights,
    pub train: TrainConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 6,
            p: 0.5,
            n_per_env: 100_000,
            seeds: (0..5).collect(),
            design: DesignKind::LeaveOneOut,
            design_file: None,
            scm: ScmKind::Linear,
            mixing_seed: 0,
            weights: LossWeights::default(),
            train: TrainConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("seed list is empty".into()));
        }
        if self.d < 2 {
            return Err(Error::InvalidArgument(format!("d must be at least 2, got {}", self.d)));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidProbability(self.p));
        }
        if let Some(fixed) = self.scm.fixed_dim() {
            if fixed != self.d {
                return Err(Error::DimensionMismatch {
                    what: "builtin SCM dimension",
                    expected: fixed,
                    found: self.d,
                });
            }
        }
        match (&self.design, &self.design_file) {
            (DesignKind::Custom, None) => {
                return Err(Error::InvalidArgument("custom design needs design_file".into()))
            }
            (DesignKind::Custom, Some(path)) if !path.exists() => {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "design file not found"),
                ))
            }
            _ => {}
        }
        self.weights.validate()?;
        self.train.validate()?;
        let n_train = crate::dataset::train_rows(self.n_per_env);
        if self.train.batch_size > n_train {
            return Err(Error::InvalidArgument(format!(
                "batch size {} exceeds {} training rows per environment",
                self.train.batch_size, n_train
            )));
        }
        Ok(())
    }

    pub fn environments(&self, seed: u64) -> Result<EnvironmentSet> {
        let envs = match self.design {
            DesignKind::LeaveOneOut => leave_one_out_design(self.d, seed)?,
            DesignKind::Separating => separating_design(self.d, seed)?,
            DesignKind::Custom => {
                let path = self.design_file.as_deref().ok_or_else(|| {
                    Error::InvalidArgument("custom design needs design_file".into())
                })?;
                EnvironmentSet::read(path)?
            }
        };
        if envs.d() != self.d {
            return Err(Error::DimensionMismatch {
                what: "design dimension",
                expected: self.d,
                found: envs.d(),
            });
        }
        Ok(envs)
    }

    pub fn build_scm(&self, seed: u64) -> Result<Scm> {
        match self.scm {
            ScmKind::Linear => Scm::sample_linear(DagAdjacency::sample_er(self.d, self.p, seed)?, seed),
            ScmKind::Nonlinear1 => Scm::builtin_nonlinear(1),
            ScmKind::Nonlinear2 => Scm::builtin_nonlinear(2),
        }
    }

    pub fn mixing(&self) -> Result<MixingMatrix> {
        MixingMatrix::sample(self.d, self.d, self.mixing_seed)
    }

    /// SCM and dataset for one seed.
    pub fn build_dataset(&self, seed: u64) -> Result<(Scm, EnvDataset)> {
        let scm = self.build_scm(seed)?;
        let envs = self.environments(seed)?;
        let data = EnvDataset::generate(&scm, &envs, &self.mixing()?, self.n_per_env, seed)?;
        Ok((scm, data))
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, ..self.train }
    }
}

/// Everything needed to regenerate a dataset bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub edges: Vec<(usize, usize)>,
    pub environments: EnvironmentSet,
    pub mixing: Vec<Vec<f64>>,
    pub mixing_condition: f64,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig, seed: u64, scm: &Scm, data: &EnvDataset) -> Self {
        let l = data.mixing().matrix();
        Manifest {
            config: config.clone(),
            seed,
            edges: scm.dag().edges(),
            environments: data.envs().clone(),
            mixing: l.row_iter().map(|r| r.iter().copied().collect()).collect(),
            mixing_condition: data.mixing().condition_number(),
        }
    }

    /// Rebuilds the dataset and checks it against the recorded graph,
    /// design and mixing.
    pub fn regenerate(&self) -> Result<EnvDataset> {
        let (scm, data) = self.config.build_dataset(self.seed)?;
        let again = Manifest::new(&self.config, self.seed, &scm, &data);
        if again.edges != self.edges
            || again.environments != self.environments
            || again.mixing != self.mixing
        {
            return Err(Error::Format("manifest does not match regenerated data".into()));
        }
        Ok(data)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn mixing_matrix(&self) -> DMatrix<f64> {
        let rows = self.mixing.len();
        let cols = self.mixing.first().map_or(0, Vec::len);
        DMatrix::from_fn(rows, cols, |i, j| self.mixing[i][j])
    }
}

/// MCC of a learned linear representation on the pooled held-out split.
pub fn evaluate_model(model: &UnmixingModel, data: &EnvDataset) -> Result<MccResult> {
    let (obs, lat) = data.pooled_test();
    mcc_score(&lat, &model.transform(&obs)?)
}

/// FastICA fit on the pooled training rows, scored on the pooled test rows.
pub fn evaluate_fastica(data: &EnvDataset, seed: u64) -> Result<MccResult> {
    let ica = fit_fastica(&data.pooled_train_observed(), data.d(), seed, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    let (obs, lat) = data.pooled_test();
    mcc_score(&lat, &ica.transform(&obs)?)
}

pub struct SeedOutcome {
    pub model: UnmixingModel,
    pub report: TrainReport,
    pub mcc: MccResult,
}

/// Trains on one seed's dataset and scores the result.
pub fn train_and_evaluate(config: &ExperimentConfig, data: &EnvDataset, seed: u64) -> Result<SeedOutcome> {
    let (model, report) = train(data, &config.weights, &config.train_config(seed))?;
    let mcc = evaluate_model(&model, data)?;
    Ok(SeedOutcome { model, report, mcc })
}

/// One line of the long-format results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub setting: String,
    pub seed: u64,
    pub method: Method,
    pub d: usize,
    pub p: f64,
    pub n: usize,
    pub mcc: Option<f64>,
    pub status: String,
}

/// Compact metric record `{seed, d, p, n, mcc, method}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seed: u64,
    pub d: usize,
    pub p: f64,
    pub n: usize,
    pub mcc: Option<f64>,
    pub method: Method,
}

impl From<&ResultRow> for MetricRow {
    fn from(r: &ResultRow) -> Self {
        MetricRow {
            seed: r.seed,
            d: r.d,
            p: r.p,
            n: r.n,
            mcc: r.mcc,
            method: r.method,
        }
    }
}

fn row(
    setting: &str,
    config: &ExperimentConfig,
    seed: u64,
    method: Method,
    res: std::result::Result<f64, String>,
) -> ResultRow {
    let (mcc, status) = match res {
        Ok(v) => (Some(v), "ok".to_string()),
        Err(e) => (None, format!("error: {e}")),
    };
    ResultRow {
        setting: setting.to_string(),
        seed,
        method,
        d: config.d,
        p: config.p,
        n: config.n_per_env,
        mcc,
        status,
    }
}

/// Runs every seed of one setting with the given methods. Failures are
/// recorded in the row status instead of aborting.
pub fn run_setting(setting: &str, config: &ExperimentConfig, methods: &[Method]) -> Vec<ResultRow> {
    let mut rows = Vec::with_capacity(config.seeds.len() * methods.len());
    for &seed in &config.seeds {
        let data = config.validate().and_then(|_| config.build_dataset(seed));
        for &method in methods {
            let res = match &data {
                Err(e) => Err(e.to_string()),
                Ok((_, data)) => match method {
                    Method::Ours => train_and_evaluate(config, data, seed).map(|o| o.mcc.score),
                    Method::Fastica => evaluate_fastica(data, seed).map(|r| r.score),
                }
                .map_err(|e| e.to_string()),
            };
            rows.push(row(setting, config, seed, method, res));
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2a,
    Fig2b,
    Fig2c,
    Table1,
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2a" => Ok(Figure::Fig2a),
            "fig2b" => Ok(Figure::Fig2b),
            "fig2c" => Ok(Figure::Fig2c),
            "table1" => Ok(Figure::Table1),
            other => Err(Error::InvalidArgument(format!("unknown grid '{other}'"))),
        }
    }
}

pub const FIG2A_DIMS: [usize; 4] = [3, 6, 10, 30];
pub const FIG2B_PROBS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
pub const FIG2C_SIZES: [usize; 4] = [10_000, 50_000, 100_000, 200_000];

/// Labelled settings of a grid, derived from `base` (which supplies seeds,
/// weights, optimizer settings and the defaults for the swept axes).
pub fn grid(figure: Figure, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
    let linear = ExperimentConfig {
        scm: ScmKind::Linear,
        design: DesignKind::LeaveOneOut,
        design_file: None,
        ..base.clone()
    };
    match figure {
        Figure::Fig2a => FIG2A_DIMS
            .iter()
            .map(|&d| (format!("d={d}"), ExperimentConfig { d, ..linear.clone() }))
            .collect(),
        Figure::Fig2b => FIG2B_PROBS
            .iter()
            .map(|&p| (format!("p={p}"), ExperimentConfig { d: 6, p, ..linear.clone() }))
            .collect(),
        Figure::Fig2c => FIG2C_SIZES
            .iter()
            .map(|&n| {
                (
                    format!("n={n}"),
                    ExperimentConfig { d: 6, n_per_env: n, ..linear.clone() },
                )
            })
            .collect(),
        Figure::Table1 => [("scm1", ScmKind::Nonlinear1), ("scm2", ScmKind::Nonlinear2)]
            .into_iter()
            .map(|(label, scm)| {
                (
                    label.to_string(),
                    ExperimentConfig { d: 6, scm, ..linear.clone() },
                )
            })
            .collect(),
    }
}

/// Runs a whole grid in deterministic (setting, seed, method) order.
pub fn run_grid(figure: Figure, base: &ExperimentConfig, methods: &[Method]) -> Vec<ResultRow> {
    grid(figure, base)
        .iter()
        .flat_map(|(label, cfg)| run_setting(label, cfg, methods))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub method: Method,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation over seeds divided by √(seeds).
    pub stderr: Option<f64>,
}

/// Mean and standard error per (setting, method), in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, Method)> = Vec::new();
    for r in rows {
        let key = (r.setting.clone(), r.method);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(setting, method)| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.setting == setting && r.method == method)
                .collect();
            let values: Vec<f64> = group.iter().filter_map(|r| r.mcc).collect();
            let (mean, stderr) = mean_stderr(&values);
            SummaryRow {
                n_ok: values.len(),
                n_failed: group.len() - values.len(),
                setting,
                method,
                mean,
                stderr,
            }
        })
        .collect()
}

pub fn mean_stderr(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let k = values.len();
    if k == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (Some(mean), Some(var.sqrt() / (k as f64).sqrt()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `setting,seed,method,d,p,n,mcc,status`.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setting", "seed", "method", "d", "p", "n", "mcc", "status"])?;
    for r in rows {
        w.write_record([
            r.setting.clone(),
            r.seed.to_string(),
            r.method.name().to_string(),
            r.d.to_string(),
            r.p.to_string(),
            r.n.to_string(),
            opt(r.mcc),
            r.status.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// `setting,method,n_ok,n_failed,mean,stderr`.
pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["setting", "method", "n_ok", "n_failed", "mean", "stderr"])?;
    for r in rows {
        w.write_record([
            r.setting.clone(),
            r.method.name().to_string(),
            r.n_ok.to_string(),
            r.n_failed.to_string(),
            opt(r.mean),
            opt(r.stderr),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Writes `<stem>.csv` and `<stem>_summary.csv` into `dir`.
pub fn write_grid_outputs(dir: &Path, stem: &str, rows: &[ResultRow]) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results = dir.join(format!("{stem}.csv"));
    let summary = dir.join(format!("{stem}_summary.csv"));
    let f = std::fs::File::create(&results).map_err(|e| Error::io(&results, e))?;
    write_results_csv(rows, f)?;
    let f = std::fs::File::create(&summary).map_err(|e| Error::io(&summary, e))?;
    write_summary_csv(&summarize(rows), f)?;
    Ok((results, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            d: 3,
            n_per_env: 400,
            seeds: vec![0, 1],
            train: TrainConfig {
                epochs: 2,
                batch_size: 100,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn grids_have_expected_axes() {
        let base = ExperimentConfig::default();
        let a = grid(Figure::Fig2a, &base);
        assert_eq!(a.iter().map(|(_, c)| c.d).collect::<Vec<_>>(), FIG2A_DIMS);
        let b = grid(Figure::Fig2b, &base);
        assert_eq!(b[0].0, "p=0");
        assert!(b.iter().all(|(_, c)| c.d == 6));
        let t = grid(Figure::Table1, &base);
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].1.scm, ScmKind::Nonlinear2);
    }

    #[test]
    fn standard_error_uses_sample_std() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((s.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[]), (None, None));
        assert_eq!(mean_stderr(&[0.5]), (Some(0.5), None));
    }

    #[test]
    fn validation_catches_bad_configs() {
        assert!(small().validate().is_ok());
        assert!(ExperimentConfig { seeds: vec![], ..small() }.validate().is_err());
        assert!(ExperimentConfig { p: 1.5, ..small() }.validate().is_err());
        assert!(ExperimentConfig { scm: ScmKind::Nonlinear1, ..small() }.validate().is_err());
        assert!(ExperimentConfig { design: DesignKind::Custom, ..small() }.validate().is_err());
        assert!(ExperimentConfig { n_per_env: 100, ..small() }.validate().is_err());
    }

    #[test]
    fn failures_are_recorded_per_row() {
        let cfg = ExperimentConfig { p: 2.0, ..small() };
        let rows = run_setting("bad", &cfg, &[Method::Ours, Method::Fastica]);
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.mcc.is_none() && r.status.starts_with("error")));
        let s = summarize(&rows);
        assert_eq!(s[0].n_failed, 2);
    }

    #[test]
    fn runs_are_byte_identical() {
        let cfg = small();
        let render = || {
            let rows = run_setting("s", &cfg, &[Method::Ours, Method::Fastica]);
            let mut buf = Vec::new();
            write_results_csv(&rows, &mut buf).unwrap();
            buf
        };
        let a = render();
        assert_eq!(a, render());
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().skip(1).all(|l| l.ends_with(",ok")));
    }

    #[test]
    fn manifest_regenerates_dataset() {
        let cfg = small();
        let (scm, data) = cfg.build_dataset(1).unwrap();
        let manifest = Manifest::new(&cfg, 1, &scm, &data);
        let back = Manifest::from_json(&manifest.to_json().unwrap()).unwrap();
        assert_eq!(back.regenerate().unwrap(), data);
        assert_eq!(&back.mixing_matrix(), data.mixing().matrix());
    }
}

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crl_core::dataset::EnvDataset;
use crl_core::design::{leave_one_out_design, separating_design, EnvironmentSet};
use crl_core::disentangler::checkpoint::Checkpoint;
use crl_core::experiment::{
    evaluate_fastica, evaluate_model, run_grid, train_and_evaluate, write_grid_outputs, Figure,
    Manifest, Method, MetricRow,
};

use config::{load_config, Overrides};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] crl_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "crl", version, about = "Causal representation learning from interventional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a multi-environment dataset and write it with a manifest.
    Generate {
        #[command(flatten)]
        common: Overrides,
        /// Rebuild from a manifest instead of a config.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Check a design for sufficient intervention coverage.
    CheckDesign {
        #[command(flatten)]
        common: Overrides,
    },
    /// Train an unmixing on a dataset; writes a checkpoint and reports.
    Train {
        #[command(flatten)]
        common: Overrides,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Score a checkpoint (or the FastICA baseline) on a dataset's test split.
    Evaluate {
        #[command(flatten)]
        common: Overrides,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, required_unless_present = "fastica")]
        checkpoint: Option<PathBuf>,
        /// Evaluate the FastICA baseline instead of a checkpoint.
        #[arg(long)]
        fastica: bool,
    },
    /// Run a reproduction grid and write results and summary CSVs.
    Reproduce {
        /// fig2a, fig2b, fig2c or table1.
        which: String,
        #[command(flatten)]
        common: Overrides,
        /// Skip the FastICA baseline.
        #[arg(long)]
        no_baseline: bool,
    },
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(crl_core::Error::from)?;
    fs::write(path, text).map_err(|e| CliError::Core(crl_core::Error::io(path, e)))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Core(crl_core::Error::io(dir, e)))
}

fn generate(common: &Overrides, manifest: Option<&Path>) -> CliResult<()> {
    let (manifest, data) = match manifest {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| crl_core::Error::io(path, e))?;
            let m = Manifest::from_json(&text)?;
            let data = m.regenerate()?;
            (m, data)
        }
        None => {
            let cfg = load_config(common)?;
            cfg.validate()?;
            let seed = cfg.seeds[0];
            let (scm, data) = cfg.build_dataset(seed)?;
            (Manifest::new(&cfg, seed, &scm, &data), data)
        }
    };
    let out = common.out.clone().unwrap_or_else(|| manifest.config.output_dir.clone());
    create_dir(&out)?;
    data.save(&out.join("dataset.crl"))?;
    data.export_csv(&out)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    println!(
        "wrote {} environments x {} rows (d = {}, {} edges) to {}",
        data.num_envs(),
        data.n_per_env(),
        data.d(),
        manifest.edges.len(),
        out.display()
    );
    Ok(())
}

fn resolve_design(common: &Overrides) -> CliResult<EnvironmentSet> {
    let cfg = load_config(common)?;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    match common.design.as_deref() {
        None | Some("leave-one-out") => Ok(leave_one_out_design(cfg.d, seed)?),
        Some("separating") => Ok(separating_design(cfg.d, seed)?),
        Some(path) => Ok(EnvironmentSet::read(Path::new(path))?),
    }
}

fn check_design(common: &Overrides) -> CliResult<()> {
    let envs = resolve_design(common)?;
    let report = envs.check_sufficient_coverage();
    println!("{} environments", envs.len());
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} indices violate the coverage condition",
            report.violations.len()
        )))
    }
}

fn manifest_beside(dataset: &Path) -> Option<Manifest> {
    let path = dataset.parent()?.join("manifest.json");
    Manifest::from_json(&fs::read_to_string(path).ok()?).ok()
}

fn train_cmd(common: &Overrides, dataset: &Path) -> CliResult<()> {
    let cfg = load_config(common)?;
    cfg.weights.validate()?;
    let data = EnvDataset::load(dataset)?;
    let seed = common.seed.unwrap_or(cfg.seeds.first().copied().unwrap_or(0));
    let outcome = train_and_evaluate(&cfg, &data, seed)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    create_dir(&out)?;
    Checkpoint::new(outcome.model, cfg.train_config(seed), cfg.weights).save(&out.join("model.ckpt"))?;
    fs::write(out.join("train_report.json"), outcome.report.to_json()?)
        .map_err(|e| crl_core::Error::io(out.join("train_report.json"), e))?;
    let csv_path = out.join("train_report.csv");
    let f = fs::File::create(&csv_path).map_err(|e| crl_core::Error::io(&csv_path, e))?;
    outcome.report.write_csv(f)?;
    println!(
        "test MCC {:.4} after {} epochs ({:.1}s); checkpoint in {}",
        outcome.mcc.score,
        outcome.report.epochs.len(),
        outcome.report.wall_time_secs,
        out.display()
    );
    Ok(())
}

fn evaluate_cmd(
    common: &Overrides,
    dataset: &Path,
    checkpoint: Option<&Path>,
    fastica: bool,
) -> CliResult<()> {
    let cfg = load_config(common)?;
    let data = EnvDataset::load(dataset)?;
    let p = manifest_beside(dataset).map_or(cfg.p, |m| m.config.p);
    let (method, result) = if fastica {
        (Method::Fastica, evaluate_fastica(&data, data.seed())?)
    } else {
        let path = checkpoint.ok_or_else(|| CliError::Config("--checkpoint is required".into()))?;
        (Method::Ours, evaluate_model(&Checkpoint::load(path)?.model, &data)?)
    };
    let row = MetricRow {
        seed: data.seed(),
        d: data.d(),
        p,
        n: data.n_per_env(),
        mcc: Some(result.score),
        method,
    };
    println!("{}", serde_json::to_string(&row).map_err(crl_core::Error::from)?);
    Ok(())
}

fn reproduce(which: &str, common: &Overrides, no_baseline: bool) -> CliResult<()> {
    let figure: Figure = which.parse()?;
    let base = load_config(common)?;
    let methods: &[Method] = if no_baseline { &[Method::Ours] } else { &[Method::Ours, Method::Fastica] };
    let rows = run_grid(figure, &base, methods);
    let out = common.out.clone().unwrap_or_else(|| base.output_dir.clone());
    let (results, summary) = write_grid_outputs(&out, which, &rows)?;
    let failed = rows.iter().filter(|r| r.mcc.is_none()).count();
    println!(
        "{} rows ({failed} failed): {} and {}",
        rows.len(),
        results.display(),
        summary.display()
    );
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate { common, manifest } => generate(&common, manifest.as_deref()),
        Command::CheckDesign { common } => check_design(&common),
        Command::Train { common, dataset } => train_cmd(&common, &dataset),
        Command::Evaluate {
            common,
            dataset,
            checkpoint,
            fastica,
        } => evaluate_cmd(&common, &dataset, checkpoint.as_deref(), fastica),
        Command::Reproduce {
            which,
            common,
            no_baseline,
        } => reproduce(&which, &common, no_baseline),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

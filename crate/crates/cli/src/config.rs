//! TOML experiment config with command-line overrides.

use std::path::PathBuf;

use clap::Args;
use crl_core::experiment::{DesignKind, ExperimentConfig, ScmKind};

use crate::{CliError, CliResult};

/// Flags shared by every subcommand. Anything given here wins over the
/// config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// TOML file with experiment settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Single seed; replaces the config's seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// leave-one-out, separating, or a path to a design JSON file.
    #[arg(long)]
    pub design: Option<String>,
    /// linear, nonlinear-1 or nonlinear-2.
    #[arg(long)]
    pub scm: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Samples per environment.
    #[arg(long)]
    pub n: Option<usize>,
}

pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(o: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = o.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if let Some(d) = o.d {
        cfg.d = d;
    }
    if let Some(p) = o.p {
        cfg.p = p;
    }
    if let Some(n) = o.n {
        cfg.n_per_env = n;
    }
    if let Some(scm) = &o.scm {
        cfg.scm = match scm.as_str() {
            "linear" => ScmKind::Linear,
            "nonlinear-1" => ScmKind::Nonlinear1,
            "nonlinear-2" => ScmKind::Nonlinear2,
            other => return Err(CliError::Config(format!("unknown scm '{other}'"))),
        };
        if let Some(fixed) = cfg.scm.fixed_dim() {
            if o.d.is_none() {
                cfg.d = fixed;
            }
        }
    }
    match o.design.as_deref() {
        None => {}
        Some("leave-one-out") => cfg.design = DesignKind::LeaveOneOut,
        Some("separating") => cfg.design = DesignKind::Separating,
        Some(path) => {
            cfg.design = DesignKind::Custom;
            cfg.design_file = Some(PathBuf::from(path));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_defaults() {
        let cfg = parse_config(
            r#"
            d = 4
            p = 0.25
            seeds = [3, 4]
            design = "separating"

            [train]
            epochs = 7

            [weights]
            lambda_diag = 2.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.d, 4);
        assert_eq!(cfg.design, DesignKind::Separating);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.batch_size, 4096);
        assert_eq!(cfg.weights.lambda_diag, 2.0);
        assert_eq!(cfg.weights.lambda_norm, 5.0);
    }

    #[test]
    fn flags_win() {
        let o = Overrides {
            seed: Some(9),
            d: Some(3),
            scm: Some("nonlinear-2".into()),
            design: Some("x.json".into()),
            ..Overrides::default()
        };
        let cfg = load_config(&o).unwrap();
        assert_eq!(cfg.seeds, vec![9]);
        assert_eq!(cfg.d, 3);
        assert_eq!(cfg.scm, ScmKind::Nonlinear2);
        assert_eq!(cfg.design, DesignKind::Custom);
        let o = Overrides { scm: Some("nonlinear-1".into()), ..Overrides::default() };
        assert_eq!(load_config(&o).unwrap().d, 6);
        assert!(parse_config("d = \"three\"").is_err());
        let o = Overrides { scm: Some("cubic".into()), ..Overrides::default() };
        assert!(load_config(&o).is_err());
    }
}

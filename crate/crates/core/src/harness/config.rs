//! Experiment configuration: presets, flat TOML files and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{sparsity_count, ScalarField, SystemDims, TrainingKind};
use crate::estimators::{OffSupportBelief, SupportRule, TurboConfig, DEFAULT_THRESHOLD};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Lse,
    LseSmp,
    GenieLse,
    Lasso,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lse => "lse",
            Self::LseSmp => "lse_smp",
            Self::GenieLse => "genie_lse",
            Self::Lasso => "lasso",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    CrlbLse,
    CrlbLseSmp,
}

impl BoundKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CrlbLse => "crlb_lse",
            Self::CrlbLseSmp => "crlb_lse_smp",
        }
    }
}

/// How the LASSO penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// Best grid value against the true channel.
    #[default]
    Oracle,
    /// Grid value nearest to `c * sigma_n * sqrt(2 ln n)`.
    Blind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig4,
    Fig5,
    Fig6,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig4" => Ok(Self::Fig4),
            "fig5" => Ok(Self::Fig5),
            "fig6" => Ok(Self::Fig6),
            other => Err(Error::config("preset", format!("unknown preset `{other}` (expected fig4, fig5 or fig6)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoConfig {
    pub lambda_mode: LambdaMode,
    pub grid_points: usize,
    /// Smallest grid value as a fraction of `lambda_max`.
    pub grid_ratio: f64,
    pub blind_c: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            lambda_mode: LambdaMode::Oracle,
            grid_points: 30,
            grid_ratio: 1e-4,
            blind_c: 1.0,
            max_iters: 2000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dims: SystemDims,
    pub sparsity_ratios: Vec<f64>,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    pub turbo: TurboConfig,
    pub estimators: Vec<EstimatorKind>,
    pub bounds: Vec<BoundKind>,
    /// Variance of each nonzero coefficient.
    pub value_var: f64,
    /// When set, each nonzero has variance `total_energy / L` instead of `value_var`,
    /// so the expected channel energy does not depend on the sparsity ratio.
    pub total_energy: Option<f64>,
    pub training_kind: TrainingKind,
    pub training_seed: u64,
    pub field: ScalarField,
    pub base_seed: u64,
    pub lasso: LassoConfig,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
    /// Record per-estimator wall time. Off by default so output is reproducible byte for byte.
    pub timing: bool,
}

const FULL_SNR_GRID: [f64; 6] = [-10.0, 0.0, 10.0, 20.0, 30.0, 40.0];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: SystemDims {
                n_r: 32,
                n_t: 64,
                t_blocks: 64,
            },
            sparsity_ratios: vec![0.007],
            snr_grid_db: FULL_SNR_GRID.to_vec(),
            trials: 200,
            turbo: TurboConfig::default(),
            estimators: vec![EstimatorKind::Lse, EstimatorKind::LseSmp],
            bounds: vec![],
            value_var: 10.0,
            total_energy: None,
            training_kind: TrainingKind::Orthogonal,
            training_seed: 0,
            field: ScalarField::Real,
            base_seed: 1,
            lasso: LassoConfig::default(),
            workers: None,
            timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self::default();
        match preset {
            Preset::Fig4 => Self {
                estimators: vec![
                    EstimatorKind::Lse,
                    EstimatorKind::LseSmp,
                    EstimatorKind::GenieLse,
                    EstimatorKind::Lasso,
                ],
                bounds: vec![BoundKind::CrlbLse, BoundKind::CrlbLseSmp],
                ..base
            },
            Preset::Fig5 => Self {
                sparsity_ratios: vec![0.8, 0.5, 0.125, 0.007],
                estimators: vec![EstimatorKind::Lse, EstimatorKind::LseSmp],
                bounds: vec![BoundKind::CrlbLseSmp],
                total_energy: Some(140.0),
                ..base
            },
            Preset::Fig6 => Self {
                sparsity_ratios: vec![0.031],
                estimators: vec![EstimatorKind::LseSmp],
                bounds: vec![BoundKind::CrlbLseSmp],
                turbo: TurboConfig {
                    max_turbo_iters: 8,
                    inner_iters: 1,
                    stop_tol: 0.0,
                    ..TurboConfig::default()
                },
                ..base
            },
        }
    }

    /// Nonzero count for a sparsity ratio under these dimensions.
    pub fn nonzeros(&self, eta: f64) -> Result<usize> {
        sparsity_count(eta, self.dims.virtual_len())
    }

    /// Per-nonzero variance for a given nonzero count.
    pub fn coefficient_var(&self, nonzeros: usize) -> f64 {
        match self.total_energy {
            Some(e) => e / nonzeros as f64,
            None => self.value_var,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.n_r == 0 {
            return Err(Error::config("n_r", "must be at least 1"));
        }
        if d.n_t == 0 {
            return Err(Error::config("n_t", "must be at least 1"));
        }
        if d.t_blocks < 2 {
            return Err(Error::config("t_blocks", "must be at least 2"));
        }
        if self.training_kind == TrainingKind::Orthogonal && d.t_blocks < d.n_t {
            return Err(Error::config("t_blocks", "orthogonal training needs t_blocks >= n_t"));
        }
        if self.sparsity_ratios.is_empty() {
            return Err(Error::config("sparsity_ratios", "must not be empty"));
        }
        for (k, &eta) in self.sparsity_ratios.iter().enumerate() {
            sparsity_count(eta, d.virtual_len())
                .map_err(|e| Error::config(format!("sparsity_ratios[{k}]"), e.to_string()))?;
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::config("snr_grid_db", "must not be empty"));
        }
        if let Some(k) = self.snr_grid_db.iter().position(|s| !s.is_finite()) {
            return Err(Error::config(format!("snr_grid_db[{k}]"), "must be finite"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.estimators.is_empty() && self.bounds.is_empty() {
            return Err(Error::config("estimators", "nothing to run: no estimators and no bounds"));
        }
        if !(self.value_var > 0.0) || !self.value_var.is_finite() {
            return Err(Error::config("value_var", "must be positive"));
        }
        if let Some(e) = self.total_energy {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::config("total_energy", "must be positive"));
            }
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "must be at least 1"));
        }
        let l = &self.lasso;
        if l.grid_points == 0 {
            return Err(Error::config("lasso_grid_points", "must be at least 1"));
        }
        if !(l.grid_ratio > 0.0 && l.grid_ratio <= 1.0) {
            return Err(Error::config("lasso_grid_ratio", "must lie in (0, 1]"));
        }
        if !(l.blind_c > 0.0) || !l.blind_c.is_finite() {
            return Err(Error::config("lasso_blind_c", "must be positive"));
        }
        if l.max_iters == 0 {
            return Err(Error::config("lasso_max_iters", "must be at least 1"));
        }
        if !(l.tol >= 0.0) {
            return Err(Error::config("lasso_tol", "must be >= 0"));
        }
        self.turbo.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::config(field.trim_start_matches("turbo."), message),
            other => other,
        })
    }

    /// Apply a parsed config file over this config.
    pub fn apply(&mut self, file: &ConfigFile) -> Result<()> {
        macro_rules! set {
            ($src:ident => $($dst:tt)+) => {
                if let Some(v) = file.$src.clone() {
                    self.$($dst)+ = v;
                }
            };
        }
        set!(n_r => dims.n_r);
        set!(n_t => dims.n_t);
        set!(t_blocks => dims.t_blocks);
        set!(sparsity_ratios => sparsity_ratios);
        set!(snr_grid_db => snr_grid_db);
        set!(trials => trials);
        set!(estimators => estimators);
        set!(bounds => bounds);
        set!(value_var => value_var);
        set!(training_kind => training_kind);
        set!(training_seed => training_seed);
        set!(field => field);
        set!(base_seed => base_seed);
        set!(timing => timing);
        set!(max_turbo_iters => turbo.max_turbo_iters);
        set!(inner_iters => turbo.inner_iters);
        set!(damping => turbo.damping);
        set!(stop_tol => turbo.stop_tol);
        set!(refresh_prior => turbo.refresh_prior);
        set!(off_support => turbo.off_support);
        set!(warm_start => turbo.warm_start);
        set!(lambda_mode => lasso.lambda_mode);
        set!(lasso_grid_points => lasso.grid_points);
        set!(lasso_grid_ratio => lasso.grid_ratio);
        set!(lasso_blind_c => lasso.blind_c);
        set!(lasso_max_iters => lasso.max_iters);
        set!(lasso_tol => lasso.tol);
        if let Some(e) = file.total_energy {
            self.total_energy = if e > 0.0 { Some(e) } else { None };
        }
        if let Some(w) = file.workers {
            self.workers = Some(w);
        }
        if file.threshold.is_some() && file.top_l.is_some() {
            return Err(Error::config("support_rule", "threshold and top_l are mutually exclusive"));
        }
        let current_threshold = match self.turbo.support_rule {
            SupportRule::Threshold(t) => t,
            SupportRule::TopL(_) => DEFAULT_THRESHOLD,
        };
        match file.support_rule.as_deref() {
            Some("top_l") => {
                let l = file
                    .top_l
                    .ok_or_else(|| Error::config("top_l", "support_rule = \"top_l\" needs top_l = <count>"))?;
                self.turbo.support_rule = SupportRule::TopL(l);
            }
            Some("threshold") => {
                if file.top_l.is_some() {
                    return Err(Error::config("top_l", "not used with support_rule = \"threshold\""));
                }
                self.turbo.support_rule = SupportRule::Threshold(file.threshold.unwrap_or(current_threshold));
            }
            Some(other) => {
                return Err(Error::config(
                    "support_rule",
                    format!("unknown rule `{other}` (expected threshold or top_l)"),
                ));
            }
            None => {
                if let Some(l) = file.top_l {
                    self.turbo.support_rule = SupportRule::TopL(l);
                } else if let Some(t) = file.threshold {
                    self.turbo.support_rule = SupportRule::Threshold(t);
                }
            }
        }
        Ok(())
    }

    /// Build from an optional preset and an optional file, then validate.
    pub fn load(preset: Option<Preset>, path: Option<&Path>) -> Result<Self> {
        let file_preset = match path {
            Some(p) => Some(ConfigFile::load(p)?),
            None => None,
        };
        let preset = match (preset, file_preset.as_ref().and_then(|f| f.preset)) {
            (Some(p), _) => Some(p),
            (None, p) => p,
        };
        let mut cfg = preset.map(Self::preset).unwrap_or_default();
        if let Some(f) = &file_preset {
            cfg.apply(f)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Flat on-disk configuration. Every key is optional and overrides the preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<Preset>,
    pub n_r: Option<usize>,
    pub n_t: Option<usize>,
    pub t_blocks: Option<usize>,
    pub sparsity_ratios: Option<Vec<f64>>,
    pub snr_grid_db: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub bounds: Option<Vec<BoundKind>>,
    pub value_var: Option<f64>,
    /// Zero or negative clears a preset's fixed total energy.
    pub total_energy: Option<f64>,
    pub training_kind: Option<TrainingKind>,
    pub training_seed: Option<u64>,
    pub field: Option<ScalarField>,
    pub base_seed: Option<u64>,
    pub workers: Option<usize>,
    pub timing: Option<bool>,
    pub max_turbo_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub damping: Option<f64>,
    pub support_rule: Option<String>,
    pub threshold: Option<f64>,
    pub top_l: Option<usize>,
    pub stop_tol: Option<f64>,
    pub refresh_prior: Option<bool>,
    pub off_support: Option<OffSupportBelief>,
    pub warm_start: Option<bool>,
    pub lambda_mode: Option<LambdaMode>,
    pub lasso_grid_points: Option<usize>,
    pub lasso_grid_ratio: Option<f64>,
    pub lasso_blind_c: Option<f64>,
    pub lasso_max_iters: Option<usize>,
    pub lasso_tol: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .filter(|_| e.message().starts_with("unknown field"))
                .unwrap_or("<file>")
                .to_string();
            Error::config(field, e.to_string().trim_end())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

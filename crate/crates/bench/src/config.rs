//! Experiment configuration: a flat TOML document, with CLI overrides
//! applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcq_core::fast::{RISKY_K_FACTOR, SAFE_K_FACTOR};
use tcq_core::{LpDelta, DEFAULT_PHI};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RateModeKind {
    Surrogate,
    LinearModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KMode {
    Safe,
    Risky,
    Analytic,
    Exact,
}

/// Which quantizer produces the indices the rate model is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitSource {
    Tcq,
    Hdq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub qp_list: Vec<i32>,
    pub sigma_list: Vec<f64>,
    /// `[width, height]` pairs.
    pub block_shapes: Vec<[usize; 2]>,
    pub blocks_per_cell: usize,
    pub seed: u64,
    pub rate_mode: RateModeKind,
    pub k_mode: KMode,
    /// Fixed factor for bound mode; overrides the safe/risky presets.
    pub k_factor: Option<f64>,
    pub lp_delta: LpDelta,
    pub pruning: bool,
    pub rice_g: u32,
    pub phi: f64,
    pub r_cbf: f64,
    pub sign_bits: f64,
    pub fit_source: FitSource,
    /// `[alpha, beta, gamma, epsilon]` used for every QP instead of an inline fit.
    pub model_params: Option<[f64; 4]>,
    /// Fit report to take per-QP parameters from.
    pub params_from: Option<PathBuf>,
    pub oracle_draws: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            qp_list: vec![22, 27, 32, 37],
            sigma_list: vec![16.0],
            block_shapes: vec![[8, 8]],
            blocks_per_cell: 1000,
            seed: 1,
            rate_mode: RateModeKind::Surrogate,
            k_mode: KMode::Safe,
            k_factor: None,
            lp_delta: LpDelta::Zero,
            pruning: false,
            rice_g: 0,
            phi: DEFAULT_PHI,
            r_cbf: 1.0,
            sign_bits: 1.0,
            fit_source: FitSource::Hdq,
            model_params: None,
            params_from: None,
            oracle_draws: 200,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rate_mode: Option<RateModeKind>,
    pub k_factor: Option<f64>,
    pub k_mode: Option<KMode>,
    pub pruning: Option<bool>,
    pub rice_g: Option<u32>,
    pub phi: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.rate_mode {
            self.rate_mode = v;
        }
        if let Some(v) = o.k_mode {
            self.k_mode = v;
            // an explicit preset wins over a factor left in the file
            if o.k_factor.is_none() {
                self.k_factor = None;
            }
        }
        if let Some(v) = o.k_factor {
            self.k_factor = Some(v);
        }
        if let Some(v) = o.pruning {
            self.pruning = v;
        }
        if let Some(v) = o.rice_g {
            self.rice_g = v;
        }
        if let Some(v) = o.phi {
            self.phi = v;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.qp_list.is_empty() || self.sigma_list.is_empty() || self.block_shapes.is_empty() {
            return bad("qp_list, sigma_list and block_shapes must be non-empty".into());
        }
        if self.blocks_per_cell == 0 {
            return bad("blocks_per_cell must be at least 1".into());
        }
        if let Some(q) = self.qp_list.iter().find(|q| !(-12..=75).contains(*q)) {
            return bad(format!("qp {q} out of range"));
        }
        if let Some(s) = self.sigma_list.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return bad(format!("sigma {s} must be positive"));
        }
        for &[w, h] in &self.block_shapes {
            tcq_core::scan::check_dims(w, h).map_err(|e| BenchError::Config(e.to_string()))?;
        }
        if self.rice_g > tcq_core::rate::MAX_RICE_PARAM {
            return bad(format!("rice_g {} above {}", self.rice_g, tcq_core::rate::MAX_RICE_PARAM));
        }
        if !(self.phi.is_finite() && self.phi >= 0.0) {
            return bad(format!("phi {} must be non-negative", self.phi));
        }
        if !(self.r_cbf >= 0.0 && self.sign_bits >= 0.0) {
            return bad("r_cbf and sign_bits must be non-negative".into());
        }
        if let Some(k) = self.k_factor {
            if !(k.is_finite() && k >= 0.0) {
                return bad(format!("k_factor {k} must be non-negative"));
            }
        }
        if let Some(p) = self.model_params {
            if p.iter().any(|v| !v.is_finite()) {
                return bad("model_params must be finite".into());
            }
        }
        Ok(())
    }

    /// Factor for bound-mode departure, `None` for the model-driven modes.
    pub fn bound_factor(&self) -> Option<f64> {
        match (self.k_factor, self.k_mode) {
            (Some(k), KMode::Safe | KMode::Risky) => Some(k),
            (None, KMode::Safe) => Some(SAFE_K_FACTOR),
            (None, KMode::Risky) => Some(RISKY_K_FACTOR),
            _ => None,
        }
    }

    /// Whether any step needs linear-model parameters.
    pub fn needs_params(&self) -> bool {
        self.rate_mode == RateModeKind::LinearModel || self.bound_factor().is_none()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = ExperimentConfig::from_toml("qp_list = [37]\nblock_shapes = [[2, 2]]\npruning = true\n").unwrap();
        assert_eq!(c.qp_list, vec![37]);
        assert!(c.pruning);
        assert_eq!(c.blocks_per_cell, 1000);
    }

    #[test]
    fn rejects_bad_documents() {
        for text in [
            "qp_list = []",
            "blocks_per_cell = 0",
            "sigma_list = [-1.0]",
            "block_shapes = [[64, 2]]",
            "unknown_key = 3",
            "rate_mode = \"cabac\"",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(BenchError::Config(_))), "{text}");
        }
    }

    #[test]
    fn overrides_win() {
        let mut c = ExperimentConfig::from_toml("k_factor = 1.5\nseed = 4").unwrap();
        assert_eq!(c.bound_factor(), Some(1.5));
        c.apply(&Overrides {
            k_mode: Some(KMode::Risky),
            seed: Some(9),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.bound_factor(), Some(RISKY_K_FACTOR));
        assert_eq!(c.seed, 9);
        c.apply(&Overrides {
            k_mode: Some(KMode::Exact),
            ..Default::default()
        })
        .unwrap();
        assert!(c.needs_params());
    }
}

use std::path::{Path, PathBuf};

use affine_rfr::mc_oracle::McConfig;
use affine_rfr::quadrature::QuadratureConfig;
use affine_rfr::transform::read_discount_file;
use affine_rfr::{fit_ell, CurveSpec, ModelConfig, PricingContext};
use serde::Deserialize;

use crate::CliError;

/// `curve` block: either a flat shift or a discount-factor file to fit.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub flat_rate: Option<f64>,
    /// CSV with columns `maturity_years,discount_factor`; relative paths are
    /// resolved against the config file's directory.
    pub discount_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub model: ModelConfig,
    pub curve: CurveConfig,
    /// Initial factor state; zeros when omitted.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub mc: McConfig,
    /// Riccati solver tolerance.
    #[serde(default)]
    pub riccati_tol: Option<f64>,
}

/// Everything a command needs once the config has been resolved.
pub struct Session {
    pub ctx: PricingContext,
    pub x0: Vec<f64>,
    pub quad: QuadratureConfig,
    pub mc: McConfig,
    /// Discount factors the curve was fitted to, if any.
    pub market: Option<Vec<(f64, f64)>>,
}

impl SessionConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: SessionConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        if let Some(f) = cfg.curve.discount_file.as_mut() {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    *f = dir.join(&*f);
                }
            }
        }
        Ok(cfg)
    }

    pub fn into_session(self) -> Result<Session, CliError> {
        let model = self.model.build().map_err(|e| CliError::Config(e.to_string()))?;
        let x0 = self.x0.unwrap_or_else(|| vec![0.0; model.dim()]);
        if x0.len() != model.dim() {
            return Err(CliError::Config(format!(
                "x0 has {} entries, the model has dimension {}",
                x0.len(),
                model.dim()
            )));
        }
        if x0[..model.m()].iter().any(|&v| v < 0.0) {
            return Err(CliError::Config("x0 must be nonnegative in the first m coordinates".into()));
        }
        let (curve, market) = match (self.curve.flat_rate, &self.curve.discount_file) {
            (Some(r), None) => (CurveSpec::flat(r), None),
            (None, Some(file)) => {
                if !file.exists() {
                    return Err(CliError::Config(format!("discount file {} does not exist", file.display())));
                }
                let market = read_discount_file(file).map_err(|e| CliError::Config(e.to_string()))?;
                (fit_ell(&model, &x0, &market)?, Some(market))
            }
            _ => {
                return Err(CliError::Config(
                    "curve needs exactly one of `flat_rate` and `discount_file`".into(),
                ))
            }
        };
        let ctx = match self.riccati_tol {
            Some(tol) => PricingContext::with_tol(model, curve, tol),
            None => PricingContext::new(model, curve),
        };
        Ok(Session {
            ctx,
            x0,
            quad: self.quadrature,
            mc: self.mc,
            market,
        })
    }
}

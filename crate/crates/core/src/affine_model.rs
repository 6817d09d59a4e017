//! Affine model specifications on `D = R_+^m x R^n`, their functional
//! characteristics `F` and `R`, and the real domain on which the jump
//! transforms are finite.
//!
//! Jump measures carry finite first moments, so the truncation function is
//! taken to be zero and any compensator is absorbed into the drift vectors.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};

/// A jump measure attached to one of the `d + 1` characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum JumpMeasure {
    Null,
    /// Exponentially distributed jumps of mean size `1 / gamma` in direction
    /// `coord` (one of the first `m` coordinates), arriving with `intensity`
    /// per unit time (per unit of `X_i` for the state-dependent measures).
    Exponential {
        intensity: f64,
        gamma: f64,
        coord: usize,
    },
}

impl JumpMeasure {
    fn transform(&self, u: &[Complex64]) -> Complex64 {
        match *self {
            JumpMeasure::Null => Complex64::new(0.0, 0.0),
            JumpMeasure::Exponential {
                intensity,
                gamma,
                coord,
            } => intensity * u[coord] / (gamma - u[coord]),
        }
    }

    fn derivative(&self, u: &[Complex64]) -> Option<(usize, Complex64)> {
        match *self {
            JumpMeasure::Null => None,
            JumpMeasure::Exponential {
                intensity,
                gamma,
                coord,
            } => {
                let den = gamma - u[coord];
                Some((coord, intensity * gamma / (den * den)))
            }
        }
    }
}

/// Catalog families understood by [`build_catalog_model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    Vasicek,
    #[serde(rename = "CIR")]
    Cir,
    #[serde(rename = "CIRExpJumps")]
    CirExpJumps,
    #[serde(rename = "TwoFactorCIROU")]
    TwoFactorCirOu,
    /// No randomness: `X` is frozen and the short rate reduces to `ell(t)`.
    Deterministic,
}

impl ModelFamily {
    pub fn all() -> [ModelFamily; 5] {
        [
            ModelFamily::Vasicek,
            ModelFamily::Cir,
            ModelFamily::CirExpJumps,
            ModelFamily::TwoFactorCirOu,
            ModelFamily::Deterministic,
        ]
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ModelFamily::Vasicek => &["kappa", "sigma"],
            ModelFamily::Cir => &["kappa", "theta", "sigma"],
            ModelFamily::CirExpJumps => &["kappa", "theta", "sigma", "jump_intensity", "gamma"],
            ModelFamily::TwoFactorCirOu => {
                &["kappa_cir", "theta_cir", "sigma_cir", "kappa_ou", "sigma_ou"]
            }
            ModelFamily::Deterministic => &[],
        }
    }
}

/// JSON form of a catalog model: `{"family": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: ModelFamily,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelConfig {
    pub fn new(family: ModelFamily, params: &[(&str, f64)]) -> Self {
        ModelConfig {
            family,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn build(&self) -> Result<AffineModelSpec> {
        build_catalog_model(self.family, &self.params)
    }
}

/// The parameter tuple `(m, n, alpha, beta, mu, Lambda)`.
///
/// `alpha[i]` is a row-major `d x d` symmetric matrix, `beta[i]` a `d`-vector,
/// for `i = 0..=d`. `R_i(u) = <alpha_i u, u> + <beta_i, u> + jumps_i(u)` and
/// the drift of `X` is `beta_0 + sum_i X_i beta_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineModelSpec {
    m: usize,
    n: usize,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    jumps: Vec<JumpMeasure>,
    lambda: Vec<f64>,
    config: Option<ModelConfig>,
}

/// Distance of a real point to the boundary of the jump-transform domain.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainProbe {
    pub point: Vec<f64>,
    pub margin: f64,
}

impl DomainProbe {
    pub fn is_interior(&self) -> bool {
        self.margin > 0.0
    }
}

impl AffineModelSpec {
    /// Assemble a model from raw parameters, checking the admissibility
    /// conditions supported by this crate (diagonal diffusion structure,
    /// exponential jumps on `R_+` coordinates).
    pub fn new(
        m: usize,
        n: usize,
        alpha: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
        jumps: Vec<JumpMeasure>,
        lambda: Vec<f64>,
    ) -> Result<Self> {
        let d = m + n;
        let bad = |msg: String| Err(PricingError::NonAdmissible(msg));
        if d == 0 {
            return bad("state dimension must be positive".into());
        }
        if alpha.len() != d + 1 || beta.len() != d + 1 || jumps.len() != d + 1 {
            return bad(format!("expected {} alpha/beta/jump entries", d + 1));
        }
        if lambda.len() != d {
            return bad(format!("Lambda must have length {d}"));
        }
        for (i, a) in alpha.iter().enumerate() {
            if a.len() != d * d {
                return bad(format!("alpha_{i} must be {d}x{d}"));
            }
            for r in 0..d {
                for c in 0..d {
                    if a[r * d + c] != a[c * d + r] {
                        return bad(format!("alpha_{i} is not symmetric"));
                    }
                }
            }
        }
        for (i, b) in beta.iter().enumerate() {
            if b.len() != d {
                return bad(format!("beta_{i} must have length {d}"));
            }
        }
        // alpha_0: only the J block may be nonzero, and it must be psd on the diagonal.
        for r in 0..d {
            for c in 0..d {
                let v = alpha[0][r * d + c];
                if (r < m || c < m) && v != 0.0 {
                    return bad("alpha_0 must vanish outside the R^n block".into());
                }
            }
            if alpha[0][r * d + r] < 0.0 {
                return bad("alpha_0 must have a nonnegative diagonal".into());
            }
        }
        for i in 1..=d {
            let a = &alpha[i];
            for r in 0..d {
                for c in 0..d {
                    let v = a[r * d + c];
                    let allowed = i <= m && r == i - 1 && c == i - 1;
                    if !allowed && v != 0.0 {
                        return bad(format!(
                            "alpha_{i} may only carry the ({i},{i}) entry for i <= m"
                        ));
                    }
                }
            }
            if i <= m && a[(i - 1) * d + (i - 1)] < 0.0 {
                return bad(format!("alpha_{i} diagonal entry must be nonnegative"));
            }
        }
        // Drift must keep R_+^m invariant.
        for k in 0..m {
            if beta[0][k] < 0.0 {
                return bad(format!("beta_0 component {} must be nonnegative", k + 1));
            }
        }
        for i in 1..=d {
            for k in 0..m {
                let v = beta[i][k];
                if i <= m {
                    if k != i - 1 && v < 0.0 {
                        return bad(format!("beta_{i},{} must be nonnegative", k + 1));
                    }
                } else if v != 0.0 {
                    return bad(format!(
                        "R^n factors cannot drive the R_+ drift (beta_{i},{})",
                        k + 1
                    ));
                }
            }
        }
        for (i, j) in jumps.iter().enumerate() {
            if let JumpMeasure::Exponential {
                intensity,
                gamma,
                coord,
            } = *j
            {
                if i > m {
                    return bad(format!("mu_{i} must vanish for R^n components"));
                }
                if coord >= m {
                    return bad("jumps must point along an R_+ coordinate".into());
                }
                if !(intensity > 0.0) || !intensity.is_finite() {
                    return bad("jump intensity must be positive".into());
                }
                if !(gamma > 0.0) || !gamma.is_finite() {
                    return bad("jump decay rate gamma must be strictly positive".into());
                }
            }
        }
        Ok(AffineModelSpec {
            m,
            n,
            alpha,
            beta,
            jumps,
            lambda,
            config: None,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dim(&self) -> usize {
        self.m + self.n
    }
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
    pub fn alpha(&self, i: usize) -> &[f64] {
        &self.alpha[i]
    }
    pub fn beta(&self, i: usize) -> &[f64] {
        &self.beta[i]
    }
    pub fn jump(&self, i: usize) -> &JumpMeasure {
        &self.jumps[i]
    }
    pub fn config(&self) -> Option<&ModelConfig> {
        self.config.as_ref()
    }
    pub fn family(&self) -> Option<ModelFamily> {
        self.config.as_ref().map(|c| c.family)
    }

    pub fn has_jumps(&self) -> bool {
        self.jumps.iter().any(|j| !matches!(j, JumpMeasure::Null))
    }

    /// True when the model has no diffusion and no jumps.
    pub fn is_degenerate(&self) -> bool {
        !self.has_jumps() && self.alpha.iter().all(|a| a.iter().all(|&v| v == 0.0))
    }

    /// Stable hash of the parameter tuple, used for cache keys.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.m.hash(&mut h);
        self.n.hash(&mut h);
        for v in self.alpha.iter().flatten() {
            v.to_bits().hash(&mut h);
        }
        for v in self.beta.iter().flatten() {
            v.to_bits().hash(&mut h);
        }
        for j in &self.jumps {
            match *j {
                JumpMeasure::Null => 0u8.hash(&mut h),
                JumpMeasure::Exponential {
                    intensity,
                    gamma,
                    coord,
                } => {
                    1u8.hash(&mut h);
                    intensity.to_bits().hash(&mut h);
                    gamma.to_bits().hash(&mut h);
                    coord.hash(&mut h);
                }
            }
        }
        for v in &self.lambda {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Margin of `y` to the boundary of the jump-transform domain:
    /// `min (gamma_i - y_i)` over active jump directions, `+inf` without jumps.
    pub fn domain_margin(&self, y: &[f64]) -> f64 {
        let mut margin = f64::INFINITY;
        for j in &self.jumps {
            if let JumpMeasure::Exponential { gamma, coord, .. } = *j {
                margin = margin.min(gamma - y[coord]);
            }
        }
        margin
    }

    fn margin_complex(&self, u: &[Complex64]) -> f64 {
        let mut margin = f64::INFINITY;
        for j in &self.jumps {
            if let JumpMeasure::Exponential { gamma, coord, .. } = *j {
                margin = margin.min(gamma - u[coord].re);
            }
        }
        margin
    }

    fn quad_lin(&self, i: usize, u: &[Complex64]) -> Complex64 {
        let d = self.dim();
        let a = &self.alpha[i];
        let b = &self.beta[i];
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..d {
            let mut row = Complex64::new(0.0, 0.0);
            for c in 0..d {
                let v = a[r * d + c];
                if v != 0.0 {
                    row += v * u[c];
                }
            }
            acc += row * u[r] + b[r] * u[r];
        }
        acc + self.jumps[i].transform(u)
    }

    /// Evaluate `F(u)` and `R(u)` together without domain checks. Callers
    /// must ensure `Re(u)` lies in the interior of the domain.
    pub(crate) fn characteristics_unchecked(&self, u: &[Complex64], r_out: &mut [Complex64]) -> Complex64 {
        for (i, r) in r_out.iter_mut().enumerate() {
            *r = self.quad_lin(i + 1, u);
        }
        self.quad_lin(0, u)
    }

    /// `F(u)` and `R(u)`, or `None` when `Re(u)` leaves the domain interior.
    pub(crate) fn characteristics(&self, u: &[Complex64], r_out: &mut [Complex64]) -> Option<Complex64> {
        if self.margin_complex(u) <= 0.0 {
            return None;
        }
        Some(self.characteristics_unchecked(u, r_out))
    }

    fn check_domain(&self, u: &[Complex64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(PricingError::InvalidInput(format!(
                "argument has length {}, model dimension is {}",
                u.len(),
                self.dim()
            )));
        }
        let margin = self.margin_complex(u);
        if margin <= 0.0 {
            return Err(PricingError::DomainViolation(format!(
                "Re(u) lies outside the interior of the jump-transform domain (margin {margin})"
            )));
        }
        Ok(())
    }

    /// Gradient of `F` and Jacobian `jac[i][j] = d R_i / d u_j`.
    pub(crate) fn derivatives_unchecked(&self, u: &[Complex64], grad_f: &mut [Complex64], jac: &mut [Complex64]) {
        let d = self.dim();
        let fill = |i: usize, out: &mut [Complex64]| {
            let a = &self.alpha[i];
            let b = &self.beta[i];
            for j in 0..d {
                let mut g = Complex64::new(b[j], 0.0);
                for c in 0..d {
                    let v = a[j * d + c];
                    if v != 0.0 {
                        g += 2.0 * v * u[c];
                    }
                }
                out[j] = g;
            }
            if let Some((c, dj)) = self.jumps[i].derivative(u) {
                out[c] += dj;
            }
        };
        fill(0, grad_f);
        for i in 0..d {
            fill(i + 1, &mut jac[i * d..(i + 1) * d]);
        }
    }
}

/// `F(u)` on `S(Y°)`.
pub fn eval_f(model: &AffineModelSpec, u: &[Complex64]) -> Result<Complex64> {
    model.check_domain(u)?;
    Ok(model.quad_lin(0, u))
}

/// `R(u) = (R_1(u), ..., R_d(u))` on `S(Y°)`.
pub fn eval_r(model: &AffineModelSpec, u: &[Complex64]) -> Result<Vec<Complex64>> {
    model.check_domain(u)?;
    Ok((1..=model.dim()).map(|i| model.quad_lin(i, u)).collect())
}

pub fn domain_contains(model: &AffineModelSpec, y: &[f64]) -> DomainProbe {
    DomainProbe {
        point: y.to_vec(),
        margin: model.domain_margin(y),
    }
}

fn param(params: &BTreeMap<String, f64>, name: &str) -> Result<f64> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| PricingError::InvalidInput(format!("missing model parameter `{name}`")))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(PricingError::NonAdmissible(format!("{name} must be positive, got {v}")))
    }
}

fn nonneg(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(PricingError::NonAdmissible(format!("{name} must be nonnegative, got {v}")))
    }
}

/// Instantiate one of the catalog families.
///
/// One-factor families accept an optional `loading` (the short-rate loading
/// `Lambda`, default 1).
pub fn build_catalog_model(
    family: ModelFamily,
    params: &BTreeMap<String, f64>,
) -> Result<AffineModelSpec> {
    let loading = params.get("loading").copied().unwrap_or(1.0);
    if !loading.is_finite() {
        return Err(PricingError::InvalidInput("loading must be finite".into()));
    }
    let allowed = family.param_names();
    for key in params.keys() {
        if key != "loading" && !allowed.contains(&key.as_str()) {
            return Err(PricingError::InvalidInput(format!(
                "unknown parameter `{key}` for {family:?}"
            )));
        }
    }
    let mut spec = match family {
        ModelFamily::Vasicek => {
            let kappa = nonneg("kappa", param(params, "kappa")?)?;
            let sigma = positive("sigma", param(params, "sigma")?)?;
            AffineModelSpec::new(
                0,
                1,
                vec![vec![0.5 * sigma * sigma], vec![0.0]],
                vec![vec![0.0], vec![-kappa]],
                vec![JumpMeasure::Null; 2],
                vec![loading],
            )?
        }
        ModelFamily::Cir | ModelFamily::CirExpJumps => {
            let kappa = nonneg("kappa", param(params, "kappa")?)?;
            let theta = nonneg("theta", param(params, "theta")?)?;
            let sigma = positive("sigma", param(params, "sigma")?)?;
            let mut jumps = vec![JumpMeasure::Null; 2];
            if family == ModelFamily::CirExpJumps {
                let intensity = positive("jump_intensity", param(params, "jump_intensity")?)?;
                let gamma = positive("gamma", param(params, "gamma")?)?;
                jumps[0] = JumpMeasure::Exponential {
                    intensity,
                    gamma,
                    coord: 0,
                };
            }
            AffineModelSpec::new(
                1,
                0,
                vec![vec![0.0], vec![0.5 * sigma * sigma]],
                vec![vec![kappa * theta], vec![-kappa]],
                jumps,
                vec![loading],
            )?
        }
        ModelFamily::TwoFactorCirOu => {
            let kc = nonneg("kappa_cir", param(params, "kappa_cir")?)?;
            let tc = nonneg("theta_cir", param(params, "theta_cir")?)?;
            let sc = positive("sigma_cir", param(params, "sigma_cir")?)?;
            let ko = nonneg("kappa_ou", param(params, "kappa_ou")?)?;
            let so = positive("sigma_ou", param(params, "sigma_ou")?)?;
            if params.contains_key("loading") {
                return Err(PricingError::InvalidInput(
                    "TwoFactorCIROU has fixed loadings (1, 1)".into(),
                ));
            }
            AffineModelSpec::new(
                1,
                1,
                vec![
                    vec![0.0, 0.0, 0.0, 0.5 * so * so],
                    vec![0.5 * sc * sc, 0.0, 0.0, 0.0],
                    vec![0.0; 4],
                ],
                vec![vec![kc * tc, 0.0], vec![-kc, 0.0], vec![0.0, -ko]],
                vec![JumpMeasure::Null; 3],
                vec![1.0, 1.0],
            )?
        }
        ModelFamily::Deterministic => AffineModelSpec::new(
            0,
            1,
            vec![vec![0.0], vec![0.0]],
            vec![vec![0.0], vec![0.0]],
            vec![JumpMeasure::Null; 2],
            vec![params.get("loading").copied().unwrap_or(0.0)],
        )?,
    };
    spec.config = Some(ModelConfig {
        family,
        params: params.clone(),
    });
    Ok(spec)
}

/// Convenience wrapper taking `(name, value)` pairs.
pub fn catalog(family: ModelFamily, params: &[(&str, f64)]) -> Result<AffineModelSpec> {
    ModelConfig::new(family, params).build()
}

impl Serialize for AffineModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.config {
            Some(c) => c.serialize(s),
            None => Err(serde::ser::Error::custom(
                "only catalog models have a JSON representation",
            )),
        }
    }
}

impl<'de> Deserialize<'de> for AffineModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let cfg = ModelConfig::deserialize(d)?;
        cfg.build().map_err(serde::de::Error::custom)
    }
}

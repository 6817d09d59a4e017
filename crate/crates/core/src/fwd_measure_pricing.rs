//! Caplets priced under the S- and T-forward measures.
//!
//! A forward-looking caplet is `P_t(S) p^S - K' P_t(T) p^T` with `p` the
//! probability that `V = <B0(T-S,1), X_S>` falls below `-A0(S,T,1) - ln K'`.
//! A backward-looking caplet is `P_t(S) q^S - K' P_t(T) q^T` with `q` the
//! probability that `Y_T - Y_S` exceeds `ln K' - L(S,T)`. The probabilities
//! come from Gil-Pelaez inversion of the forward-measure characteristic
//! functions, or in closed form when the model is Gaussian.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::fourier_pricing::{OptionKind, OptionSpec, OptionStyle, PriceResult};
use crate::quadrature::{self, QuadratureConfig};
use crate::transform::{MarketState, PricingContext};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    SForward,
    TForward,
}

/// Conditional joint characteristic function of `(<B0(T-S,1), X_S>, Y_T - Y_S)`
/// under one of the forward measures, as seen from `state`.
pub struct ForwardChf<'a> {
    ctx: &'a PricingContext,
    pub measure: Measure,
    pub t: f64,
    pub s: f64,
    pub big_t: f64,
    x: Vec<f64>,
    b0_1: Vec<C>,
    ell: f64,
    log_norm: f64,
}

impl<'a> ForwardChf<'a> {
    pub fn new(ctx: &'a PricingContext, state: &MarketState, s: f64, big_t: f64, measure: Measure) -> Result<Self> {
        state.validate(&ctx.model)?;
        if !(state.t <= s && s < big_t) {
            return Err(PricingError::InvalidInput(format!(
                "forward chf needs t <= S < T (t = {}, S = {s}, T = {big_t})",
                state.t
            )));
        }
        ctx.check_bond_assumption(big_t - state.t)?;
        let (_, b0_1) = ctx.a0b0_cached(s, big_t, C::new(1.0, 0.0))?;
        let now = MarketState::new(state.t, state.x.clone());
        let bond = match measure {
            Measure::SForward => ctx.zcb_price(&now, s)?,
            Measure::TForward => ctx.zcb_price(&now, big_t)?,
        };
        Ok(ForwardChf {
            ctx,
            measure,
            t: state.t,
            s,
            big_t,
            x: state.x.clone(),
            b0_1,
            ell: ctx.curve.integral(s, big_t),
            log_norm: -bond.ln(),
        })
    }

    /// `log E^Q[exp(i z1 V + i z2 (Y_T - Y_S)) | F_t]` for complex `z1, z2`.
    pub fn log_eval_complex(&self, z1: C, z2: C) -> Result<C> {
        let i = C::new(0.0, 1.0);
        let v = match self.measure {
            Measure::SForward => -i * z2,
            Measure::TForward => 1.0 - i * z2,
        };
        let (a0, b0) = if z2 == C::new(0.0, 0.0) && self.measure == Measure::SForward {
            (C::new(0.0, 0.0), vec![C::new(0.0, 0.0); self.ctx.dim()])
        } else {
            self.ctx.a0b0(self.s, self.big_t, v)?
        };
        let u: Vec<C> = b0.iter().zip(&self.b0_1).map(|(b, b1)| b + i * z1 * b1).collect();
        let (a1, b1) = if self.s > self.t {
            self.ctx.a1b1(self.t, self.s, &u)?
        } else {
            (C::new(0.0, 0.0), u)
        };
        let dot: C = b1.iter().zip(&self.x).map(|(b, x)| b * *x).sum();
        Ok(self.log_norm + a0 - i * z2 * self.ell + a1 + dot)
    }

    pub fn log_eval(&self, z1: f64, z2: f64) -> Result<C> {
        self.log_eval_complex(C::new(z1, 0.0), C::new(z2, 0.0))
    }

    pub fn eval(&self, z1: f64, z2: f64) -> Result<C> {
        Ok(self.log_eval(z1, z2)?.exp())
    }
}

/// Value of `forward_chf` at one point.
pub fn forward_chf(
    ctx: &PricingContext,
    state: &MarketState,
    s: f64,
    big_t: f64,
    measure: Measure,
    zeta1: f64,
    zeta2: f64,
) -> Result<C> {
    ForwardChf::new(ctx, state, s, big_t, measure)?.eval(zeta1, zeta2)
}

/// Which scalar variable a marginal inverts.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Marginal {
    State,
    Integral,
}

fn marginal_log(chf: &ForwardChf, which: Marginal, z: f64) -> Result<C> {
    match which {
        Marginal::State => chf.log_eval(z, 0.0),
        Marginal::Integral => chf.log_eval(0.0, z),
    }
}

/// Variances below this are rounding noise of the log-chf; the variable is
/// then treated as a constant.
const DEGENERATE_VARIANCE: f64 = 1e-13;

/// Mean and variance from the log-chf, `Im log phi(h) / h` and
/// `-2 Re log phi(h) / h^2`, Richardson-extrapolated in `h`.
fn moments(chf: &ForwardChf, which: Marginal) -> Result<(f64, f64)> {
    let raw = |h: f64| -> Result<(f64, f64)> {
        let l = marginal_log(chf, which, h)?;
        Ok((l.im / h, -2.0 * l.re / (h * h)))
    };
    // first pass at a small step fixes the scale of the variable
    let (m0, v0) = raw(1.0)?;
    if v0 < DEGENERATE_VARIANCE {
        return Ok((m0, 0.0));
    }
    let h = 0.2 / v0.sqrt();
    let (m1, s1) = raw(h)?;
    let (m2, s2) = raw(0.5 * h)?;
    let mean = (4.0 * m2 - m1) / 3.0;
    let var = ((4.0 * s2 - s1) / 3.0).max(0.0);
    Ok((mean, var))
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn gaussian_cdf(y: f64, mean: f64, var: f64) -> f64 {
    if var <= 1e-300 {
        if y > mean {
            1.0
        } else if y < mean {
            0.0
        } else {
            0.5
        }
    } else {
        std_normal_cdf((y - mean) / var.sqrt())
    }
}

/// Settings for the inversion integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub quad: QuadratureConfig,
    /// Absolute accuracy asked of each probability.
    pub prob_tol: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            quad: QuadratureConfig::default(),
            prob_tol: 1e-10,
        }
    }
}

struct Cdf {
    value: f64,
    nodes: usize,
    lambda_max: f64,
}

/// `P(V < y)` by Gil-Pelaez with a moment-matched Gaussian control variate.
fn cdf_gil_pelaez(chf: &ForwardChf, which: Marginal, y: f64, cfg: &InversionConfig) -> Result<Cdf> {
    let (mean, var) = moments(chf, which)?;
    let base = gaussian_cdf(y, mean, var);
    if var == 0.0 {
        return Ok(Cdf {
            value: base,
            nodes: 0,
            lambda_max: 0.0,
        });
    }
    let sd = var.sqrt();
    // zeta = s / sd, d zeta / zeta = ds / s
    let f = |s: f64| -> Result<C> {
        let z = s / sd;
        let phi = marginal_log(chf, which, z)?.exp();
        let g = C::new(-0.5 * var * z * z, mean * z).exp();
        let val = (C::new(0.0, -z * y).exp() * (phi - g)).im / s;
        Ok(C::new(val, 0.0))
    };
    let mut q = cfg.quad.clone();
    q.rel_tol = cfg.prob_tol;
    q.abs_tol = cfg.prob_tol * 1e-3;
    let r = quadrature::integrate_half_line(&f, &q, 1.0)
        .map_err(|e| PricingError::InversionFailure(e.to_string()))?;
    Ok(Cdf {
        value: base - r.value.re / PI,
        nodes: r.nodes,
        lambda_max: r.lambda_max / sd,
    })
}

fn cdf_gaussian(chf: &ForwardChf, which: Marginal, y: f64) -> Result<f64> {
    let (mean, var) = moments(chf, which)?;
    Ok(gaussian_cdf(y, mean, var))
}

struct Setup {
    p_s: f64,
    p_t: f64,
    kprime: f64,
    threshold: f64,
    which: Marginal,
}

fn setup(ctx: &PricingContext, state: &MarketState, spec: &OptionSpec) -> Result<Setup> {
    spec.validate()?;
    if state.t > spec.s {
        return Err(PricingError::InvalidInput(
            "forward-measure route covers valuation times t <= S".into(),
        ));
    }
    let now = MarketState::new(state.t, state.x.clone());
    let p_s = ctx.zcb_price(&now, spec.s)?;
    let p_t = ctx.zcb_price(&now, spec.t)?;
    let kprime = spec.kprime();
    let (threshold, which) = match spec.style {
        OptionStyle::ForwardLooking => {
            let (a0, _) = ctx.a0b0_cached(spec.s, spec.t, C::new(1.0, 0.0))?;
            (-a0.re - kprime.ln(), Marginal::State)
        }
        OptionStyle::BackwardLooking => (kprime.ln() - ctx.curve.integral(spec.s, spec.t), Marginal::Integral),
        OptionStyle::TermBasis => {
            return Err(PricingError::InvalidInput(
                "the forward-measure route has no term-basis formula".into(),
            ))
        }
    };
    Ok(Setup {
        p_s,
        p_t,
        kprime,
        threshold,
        which,
    })
}

fn combine(spec: &OptionSpec, st: &Setup, cdf_s: f64, cdf_t: f64) -> f64 {
    let caplet = match st.which {
        // P(V in I^F) = P(V < threshold)
        Marginal::State => st.p_s * cdf_s - st.kprime * st.p_t * cdf_t,
        // P(dY in I^B) = 1 - P(dY < threshold)
        Marginal::Integral => st.p_s * (1.0 - cdf_s) - st.kprime * st.p_t * (1.0 - cdf_t),
    };
    match spec.kind {
        OptionKind::Caplet => caplet,
        OptionKind::Floorlet => caplet - st.p_s + st.kprime * st.p_t,
    }
}

fn result(price: f64, nodes: usize, lambda_max: f64) -> PriceResult {
    PriceResult {
        price,
        w: 0.0,
        lambda_max,
        nodes,
        imag_residual: 0.0,
        strip: None,
        error_estimate: 0.0,
    }
}

/// Forward- or backward-looking caplet (or floorlet, through parity) by
/// inversion of the forward-measure distributions.
pub fn price_caplet_by_distribution(
    ctx: &PricingContext,
    state: &MarketState,
    spec: &OptionSpec,
    cfg: &InversionConfig,
) -> Result<PriceResult> {
    let st = setup(ctx, state, spec)?;
    let chf_s = ForwardChf::new(ctx, state, spec.s, spec.t, Measure::SForward)?;
    let chf_t = ForwardChf::new(ctx, state, spec.s, spec.t, Measure::TForward)?;
    let a = cdf_gil_pelaez(&chf_s, st.which, st.threshold, cfg)?;
    let b = cdf_gil_pelaez(&chf_t, st.which, st.threshold, cfg)?;
    Ok(result(
        combine(spec, &st, a.value, b.value),
        a.nodes + b.nodes,
        a.lambda_max.max(b.lambda_max),
    ))
}

/// Closed form for purely Gaussian models, where both scalar variables stay
/// normal under every forward measure.
pub fn price_caplet_gaussian(ctx: &PricingContext, state: &MarketState, spec: &OptionSpec) -> Result<PriceResult> {
    if ctx.model.m() > 0 {
        return Err(PricingError::NotGaussianModel(ctx.model.m()));
    }
    if ctx.model.has_jumps() {
        return Err(PricingError::InvalidInput("Gaussian closed form needs a jump-free model".into()));
    }
    let st = setup(ctx, state, spec)?;
    let chf_s = ForwardChf::new(ctx, state, spec.s, spec.t, Measure::SForward)?;
    let chf_t = ForwardChf::new(ctx, state, spec.s, spec.t, Measure::TForward)?;
    let a = cdf_gaussian(&chf_s, st.which, st.threshold)?;
    let b = cdf_gaussian(&chf_t, st.which, st.threshold)?;
    Ok(result(combine(spec, &st, a, b), 0, 0.0))
}

//! 1M and 3M RFR futures rates.
//!
//! The 3M contract settles on the compounded rate `R(S,T)`, so its rate is
//! `E[R(S,T) | F_t]`. The 1M contract settles on the arithmetic average of
//! the overnight rate, whose expectation only needs the first conditional
//! moment of `X`. That moment is computed two ways: from the `v`-derivative
//! of the Riccati flow, and from the linear drift system `(A, b)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::affine_model::AffineModelSpec;
use crate::error::{PricingError, Result};
use crate::riccati;
use crate::transform::{MarketState, PricingContext};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FuturesKind {
    #[serde(rename = "1M")]
    OneMonth,
    #[serde(rename = "3M")]
    ThreeMonth,
}

impl FuturesKind {
    pub fn label(&self) -> &'static str {
        match self {
            FuturesKind::OneMonth => "1M",
            FuturesKind::ThreeMonth => "3M",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuturesSpec {
    pub kind: FuturesKind,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
}

impl FuturesSpec {
    pub fn new(kind: FuturesKind, s: f64, t_end: f64) -> Self {
        FuturesSpec { kind, s, t_end }
    }
}

/// Linearization of the characteristics at zero: `A_ij = dR_j/du_i (0)`,
/// `b_i = dF/du_i (0)`. The conditional mean solves `m' = A m + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSystem {
    pub a_matrix: DMatrix<f64>,
    pub b_bar: DVector<f64>,
}

impl DriftSystem {
    pub fn from_model(model: &AffineModelSpec) -> Self {
        let d = model.dim();
        let zero = vec![C::new(0.0, 0.0); d];
        let mut grad = vec![C::new(0.0, 0.0); d];
        let mut jac = vec![C::new(0.0, 0.0); d * d];
        model.derivatives_unchecked(&zero, &mut grad, &mut jac);
        // jac holds dR_i/du_j row-major; A is its transpose
        let a_matrix = DMatrix::from_fn(d, d, |i, j| jac[j * d + i].re);
        let b_bar = DVector::from_fn(d, |i, _| grad[i].re);
        DriftSystem { a_matrix, b_bar }
    }

    /// `E[X_{t+tau} | X_t = x]`.
    pub fn conditional_mean(&self, x: &[f64], tau: f64) -> DVector<f64> {
        let d = self.b_bar.len();
        let e = self.augmented(None).scale(tau).exp();
        let mut z = DVector::zeros(d + 1);
        z.rows_mut(0, d).copy_from_slice(x);
        z[d] = 1.0;
        let out = e.view((0, 0), (d, d + 1)) * z;
        out
    }

    /// `int_0^tau <lambda, E[X_{t+s} | X_t = x]> ds`.
    pub fn integrated_mean(&self, x: &[f64], lambda: &[f64], tau: f64) -> f64 {
        if tau == 0.0 {
            return 0.0;
        }
        let d = self.b_bar.len();
        let e = self.augmented(Some(lambda)).scale(tau).exp();
        let mut z = DVector::zeros(d + 2);
        z.rows_mut(0, d).copy_from_slice(x);
        z[d] = 1.0;
        (e.row(d + 1) * z)[0]
    }

    /// `[[A, b, 0], [0, 0, 0], [lambda^T, 0, 0]]`; the exponential carries the
    /// `b` convolution and the time integral without inverting `A`.
    fn augmented(&self, lambda: Option<&[f64]>) -> DMatrix<f64> {
        let d = self.b_bar.len();
        let n = if lambda.is_some() { d + 2 } else { d + 1 };
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), (d, d)).copy_from(&self.a_matrix);
        m.view_mut((0, d), (d, 1)).copy_from(&self.b_bar);
        if let Some(l) = lambda {
            for j in 0..d {
                m[(d + 1, j)] = l[j];
            }
        }
        m
    }
}

fn check_window(state: &MarketState, s: f64, big_t: f64) -> Result<()> {
    if !(state.t <= s && s < big_t && big_t.is_finite()) {
        return Err(PricingError::InvalidInput(format!(
            "futures window needs t <= S < T (t = {}, S = {s}, T = {big_t})",
            state.t
        )));
    }
    Ok(())
}

/// `(e^{L(S,T)} E[e^{Y_T - Y_S} | F_t] - 1) / (T - S)`.
pub fn futures_3m(ctx: &PricingContext, state: &MarketState, s: f64, big_t: f64) -> Result<f64> {
    state.validate(&ctx.model)?;
    check_window(state, s, big_t)?;
    let d = ctx.dim();
    let zero = vec![C::new(0.0, 0.0); d];
    let probe = vec![0.0; d];
    if let riccati::Lifetime::Exits(te) = riccati::lifetime_probe(&ctx.model, &probe, 1.0, big_t - s) {
        return Err(PricingError::DomainViolation(format!(
            "(0, 1) leaves the transform domain at {te:.6} before the accrual length {}",
            big_t - s
        )));
    }
    let inner = ctx.riccati_cached(&zero, C::new(1.0, 0.0), big_t - s)?;
    let outer = if s > state.t {
        ctx.riccati(&inner.psi, C::new(0.0, 0.0), s - state.t)?
    } else {
        riccati::Terminal {
            phi: C::new(0.0, 0.0),
            psi: inner.psi.clone(),
            status: riccati::PathStatus::Complete,
            t_end: 0.0,
        }
    };
    let dot: C = outer.psi.iter().zip(&state.x).map(|(p, x)| p * *x).sum();
    let log_e = inner.phi + outer.phi + dot;
    let ell = ctx.curve.integral(s, big_t);
    Ok(((ell + log_e.re).exp_m1()) / (big_t - s))
}

/// 1M rate from the `v`-sensitivities of the Riccati flow at `(0, 0)`.
pub fn futures_1m_transform(ctx: &PricingContext, state: &MarketState, s: f64, big_t: f64) -> Result<f64> {
    state.validate(&ctx.model)?;
    check_window(state, s, big_t)?;
    let d = ctx.dim();
    let zero = vec![C::new(0.0, 0.0); d];
    let moment = |tau: f64| -> Result<f64> {
        if tau == 0.0 {
            return Ok(0.0);
        }
        let sens = riccati::solve_v_sensitivity(&ctx.model, &zero, C::new(0.0, 0.0), tau, ctx.tol)?;
        if !sens.status.is_complete() {
            return Err(PricingError::DomainViolation(format!(
                "sensitivity system did not reach {tau}: {:?}",
                sens.status
            )));
        }
        let dot: f64 = sens.psi_v.iter().zip(&state.x).map(|(p, x)| p.re * x).sum();
        Ok(sens.phi_v.re + dot)
    };
    let ey = moment(big_t - state.t)? - moment(s - state.t)?;
    Ok((ctx.curve.integral(s, big_t) + ey) / (big_t - s))
}

/// 1M rate from the drift system, `(L(S,T) + int_S^T <lambda, E[X_u | F_t]> du) / (T - S)`.
pub fn futures_1m_ode(ctx: &PricingContext, state: &MarketState, s: f64, big_t: f64) -> Result<f64> {
    state.validate(&ctx.model)?;
    check_window(state, s, big_t)?;
    let sys = DriftSystem::from_model(&ctx.model);
    let lam = ctx.model.lambda();
    let ey = sys.integrated_mean(&state.x, lam, big_t - state.t) - sys.integrated_mean(&state.x, lam, s - state.t);
    Ok((ctx.curve.integral(s, big_t) + ey) / (big_t - s))
}

/// Dispatch on the contract kind (the 1M rate uses the transform route).
pub fn futures_rate(ctx: &PricingContext, state: &MarketState, spec: &FuturesSpec) -> Result<f64> {
    match spec.kind {
        FuturesKind::ThreeMonth => futures_3m(ctx, state, spec.s, spec.t_end),
        FuturesKind::OneMonth => futures_1m_transform(ctx, state, spec.s, spec.t_end),
    }
}

/// One row of a futures strip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripRow {
    pub kind: FuturesKind,
    pub t: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub rate: f64,
}

pub fn futures_strip(ctx: &PricingContext, state: &MarketState, specs: &[FuturesSpec]) -> Result<Vec<StripRow>> {
    specs
        .iter()
        .map(|sp| {
            Ok(StripRow {
                kind: sp.kind,
                t: state.t,
                s: sp.s,
                t_end: sp.t_end,
                rate: futures_rate(ctx, state, sp)?,
            })
        })
        .collect()
}

/// CSV with header `kind,t,S,T,rate`.
pub fn write_strip_csv<W: Write>(w: W, rows: &[StripRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

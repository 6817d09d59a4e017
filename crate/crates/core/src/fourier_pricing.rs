//! Fourier prices of forward-looking, backward-looking (including in-accrual)
//! and term-basis caplets and floorlets.
//!
//! Every payoff reduces to `E[(B_t / B_S) phi(x)]` for a positive random
//! variable `x` with known transform `G(z) = E[(B_t / B_S) x^z] / K'^z`, and
//! `phi` one of `(1 - x)^+`, `(1 - x)^+ - 1`, `(x - 1)^+` depending on where
//! the damping `w = Re z` sits relative to the poles 0 and 1. The integral
//! against the kernel is split into a lognormal part, done in closed form,
//! and the remainder `G - G_0`, integrated numerically.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};
use crate::quadrature::{self, GaussLegendre, QuadratureConfig};
use crate::riccati::{self, Lifetime};
use crate::transform::{MarketState, PricingContext};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptionStyle {
    ForwardLooking,
    BackwardLooking,
    TermBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptionKind {
    Caplet,
    Floorlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub style: OptionStyle,
    pub kind: OptionKind,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "K", default)]
    pub strike: f64,
    /// Credit adjustment spread; the payoff uses the strike `K - spread`.
    #[serde(default)]
    pub spread: f64,
}

impl OptionSpec {
    pub fn new(style: OptionStyle, kind: OptionKind, s: f64, t: f64, strike: f64) -> Self {
        OptionSpec {
            style,
            kind,
            s,
            t,
            strike,
            spread: 0.0,
        }
    }

    pub fn caplet(style: OptionStyle, s: f64, t: f64, strike: f64) -> Self {
        Self::new(style, OptionKind::Caplet, s, t, strike)
    }

    pub fn floorlet(style: OptionStyle, s: f64, t: f64, strike: f64) -> Self {
        Self::new(style, OptionKind::Floorlet, s, t, strike)
    }

    pub fn with_spread(mut self, spread: f64) -> Self {
        self.spread = spread;
        self
    }

    pub fn with_kind(mut self, kind: OptionKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn tenor(&self) -> f64 {
        self.t - self.s
    }

    pub fn effective_strike(&self) -> f64 {
        self.strike - self.spread
    }

    /// `K' = 1 + (T - S)(K - spread)`; 1 for term-basis options.
    pub fn kprime(&self) -> f64 {
        match self.style {
            OptionStyle::TermBasis => 1.0,
            _ => 1.0 + self.tenor() * self.effective_strike(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s >= 0.0) || !(self.t > self.s) || !self.t.is_finite() {
            return Err(PricingError::InvalidInput(format!(
                "accrual period needs T > S >= 0 (S = {}, T = {})",
                self.s, self.t
            )));
        }
        if !(self.kprime() > 0.0) {
            return Err(PricingError::InvalidInput(format!(
                "strike {} is below -1/(T-S); 1 + (T-S)K must be positive",
                self.effective_strike()
            )));
        }
        Ok(())
    }
}

/// Certified range of damping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingStrip {
    pub w_minus: f64,
    pub w_plus: f64,
    /// `(S, T)` of the period that was probed.
    pub probed_at: (f64, f64),
}

impl DampingStrip {
    pub fn contains(&self, w: f64) -> bool {
        w > self.w_minus && w < self.w_plus
    }
}

/// Result of a pricing call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub price: f64,
    pub w: f64,
    pub lambda_max: f64,
    pub nodes: usize,
    pub imag_residual: f64,
    pub strip: Option<[f64; 2]>,
    #[serde(skip)]
    pub error_estimate: f64,
}

impl PriceResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("price result serializes")
    }
}

/// Probe resolution and search limits.
pub const STRIP_EPS: f64 = 1e-4;
pub const STRIP_RESOLUTION: f64 = 1e-3;
pub const STRIP_CAP: f64 = 16.0;

fn check_w(w: f64) -> Result<()> {
    if w == 0.0 || w == 1.0 {
        return Err(PricingError::PoleAtW(w));
    }
    if !w.is_finite() {
        return Err(PricingError::InvalidInput("damping parameter must be finite".into()));
    }
    Ok(())
}

/// `(1/2pi) K'^{w+i lambda} / ((w+i lambda)(w-1+i lambda))`.
pub fn kernel_h(w: f64, lambda: f64, kprime: f64) -> Result<C> {
    check_w(w)?;
    if !(kprime > 0.0) {
        return Err(PricingError::InvalidInput("K' must be positive".into()));
    }
    Ok(kernel_unchecked(w, lambda, kprime.ln()))
}

/// `(1/2pi) / ((w+i lambda)(w-1+i lambda))`.
pub fn kernel_k(w: f64, lambda: f64) -> Result<C> {
    kernel_h(w, lambda, 1.0)
}

#[inline]
fn kernel_unchecked(w: f64, lambda: f64, ln_kp: f64) -> C {
    let z = C::new(w, lambda);
    (z * ln_kp).exp() / (2.0 * PI * z * (z - 1.0))
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn branch_payoff(x: f64, k: f64, w: f64) -> f64 {
    if w < 0.0 {
        (k - x).max(0.0)
    } else if w < 1.0 {
        (x - k).max(0.0) - x
    } else {
        (x - k).max(0.0)
    }
}

/// Numerical value of `(1/2pi) int x^{z} k^{1-z} / (z (z-1)) d lambda`,
/// `z = w + i lambda`, for checking the payoff decomposition.
///
/// The integral is computed on `[0, Lambda]` by panel quadrature; the tail
/// beyond `Lambda` is added from its integration-by-parts expansion (or, for
/// `x = k`, in closed form).
pub fn payoff_integral_numeric(x: f64, k: f64, w: f64, quad: &QuadratureConfig) -> Result<f64> {
    check_w(w)?;
    if !(x > 0.0) || !(k > 0.0) {
        return Err(PricingError::InvalidInput("payoff integral needs x > 0 and k > 0".into()));
    }
    let a = (x / k).ln();
    let amp = k * (x / k).powf(w);
    let wm1 = w - 1.0;
    // g(l) = 1/((w+il)(w-1+il)) = 1/(w-1+il) - 1/(w+il)
    let f = |l: f64| -> Result<C> {
        let z = C::new(w, l);
        Ok((C::new(0.0, a * l)).exp() / (z * (z - 1.0)))
    };
    let cap = if a == 0.0 { 64.0 } else { (100.0 / a.abs()).max(64.0) };
    let scale = k.max(x);
    let tol_abs = quad.rel_tol * scale / amp * PI * 0.25;
    let body = quadrature::integrate_range(&f, 0.0, cap, quad, tol_abs)?;
    let tail = if a == 0.0 {
        let i = C::new(0.0, 1.0);
        i * ((C::new(wm1, cap)).ln() - (C::new(w, cap)).ln())
    } else {
        // int_L^inf e^{i a l} g(l) dl = -e^{i a L} sum_n (-1)^n g^(n)(L) / (i a)^{n+1}
        let ia = C::new(0.0, a);
        let i = C::new(0.0, 1.0);
        let p1 = C::new(wm1, cap);
        let p0 = C::new(w, cap);
        let mut acc = C::new(0.0, 0.0);
        let mut prev = f64::INFINITY;
        let mut fact = 1.0;
        let mut ipow = C::new(1.0, 0.0);
        for n in 0..60 {
            if n > 0 {
                fact *= n as f64;
                ipow *= i;
            }
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            // d^n/dl^n (c + i l)^{-1} = (-1)^n n! i^n (c + i l)^{-n-1}
            let dn = sign * fact * ipow * (p1.powi(-(n as i32) - 1) - p0.powi(-(n as i32) - 1));
            let term = sign * dn / ia.powi(n as i32 + 1);
            let mag = term.norm();
            if mag > prev {
                break;
            }
            acc += term;
            prev = mag;
            if mag < 1e-18 * acc.norm().max(1e-300) {
                break;
            }
        }
        -C::new(0.0, a * cap).exp() * acc
    };
    Ok(amp * (body.value + tail).re / PI)
}

/// Closed-form right-hand side of the decomposition, for reference.
pub fn payoff_integral_exact(x: f64, k: f64, w: f64) -> Result<f64> {
    check_w(w)?;
    Ok(branch_payoff(x, k, w))
}

/// Which transform the pricer integrates.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Flavor {
    Forward,
    Backward,
    TermBasis,
    InAccrual,
}

/// `log G(z)` for one option and valuation state.
struct TransformG<'a> {
    ctx: &'a PricingContext,
    x: &'a [f64],
    t: f64,
    s: f64,
    big_t: f64,
    flavor: Flavor,
    a0_1: C,
    b0_1: Vec<C>,
    ln_accrual: f64,
}

impl<'a> TransformG<'a> {
    fn new(ctx: &'a PricingContext, state: &'a MarketState, spec: &OptionSpec, flavor: Flavor) -> Result<Self> {
        let (a0_1, b0_1) = match flavor {
            Flavor::Forward | Flavor::TermBasis => ctx.a0b0_cached(spec.s, spec.t, C::new(1.0, 0.0))?,
            _ => (C::new(0.0, 0.0), vec![C::new(0.0, 0.0); ctx.dim()]),
        };
        let ln_accrual = match flavor {
            Flavor::InAccrual => state.accrual_factor.ok_or(PricingError::MissingAccrualFactor)?.ln(),
            _ => 0.0,
        };
        Ok(TransformG {
            ctx,
            x: &state.x,
            t: state.t,
            s: spec.s,
            big_t: spec.t,
            flavor,
            a0_1,
            b0_1,
            ln_accrual,
        })
    }

    fn dot_x(&self, b: &[C]) -> C {
        b.iter().zip(self.x).map(|(bi, xi)| bi * *xi).sum()
    }

    fn log_g(&self, z: C) -> Result<C> {
        let ctx = self.ctx;
        match self.flavor {
            Flavor::Forward => {
                let u: Vec<C> = self.b0_1.iter().map(|b| z * b).collect();
                let (a1, b1) = ctx.a1b1(self.t, self.s, &u)?;
                Ok(z * self.a0_1 + a1 + self.dot_x(&b1))
            }
            Flavor::Backward | Flavor::TermBasis => {
                let (mut a0, mut b0) = ctx.a0b0(self.s, self.big_t, z)?;
                if self.flavor == Flavor::TermBasis {
                    a0 -= z * self.a0_1;
                    for (b, b1) in b0.iter_mut().zip(&self.b0_1) {
                        *b -= z * b1;
                    }
                }
                let (a1, b1) = ctx.a1b1(self.t, self.s, &b0)?;
                Ok(a0 + a1 + self.dot_x(&b1))
            }
            Flavor::InAccrual => {
                let (a0, b0) = ctx.a0b0(self.t, self.big_t, z)?;
                Ok(a0 + self.dot_x(&b0) + (1.0 - z) * self.ln_accrual)
            }
        }
    }
}

/// `G_0(z) = c exp(alpha z + b z^2 / 2)`, matched to `log G` at `w` and
/// `w + i delta`.
#[derive(Debug, Clone, Copy)]
struct LognormalFit {
    c: f64,
    alpha: f64,
    b: f64,
}

impl LognormalFit {
    fn fit(g: &TransformG, w: f64) -> Result<Self> {
        let delta = 1.0;
        let lw = g.log_g(C::new(w, 0.0))?;
        let ld = g.log_g(C::new(w, delta))?;
        // log G comes from the Riccati flow, so its imaginary part is continuous in lambda
        let d = ld - lw;
        let b = (-2.0 * d.re / (delta * delta)).max(0.0);
        let a1 = d.im / delta;
        let alpha = a1 - b * w;
        let c = (lw.re - alpha * w - 0.5 * b * w * w).exp();
        Ok(LognormalFit { c, alpha, b })
    }

    fn eval(&self, z: C) -> C {
        self.c * (self.alpha * z + 0.5 * self.b * z * z).exp()
    }

    /// `(1/2pi) int G_0(z) K'^z / (z (z-1)) d lambda` in closed form.
    fn kernel_integral(&self, w: f64, ln_kp: f64) -> f64 {
        let mu = self.alpha + ln_kp;
        let var = self.b;
        let fwd = (mu + 0.5 * var).exp();
        let put = if var <= 1e-300 {
            (1.0 - mu.exp()).max(0.0)
        } else {
            let s = var.sqrt();
            std_normal_cdf(-mu / s) - fwd * std_normal_cdf(-mu / s - s)
        };
        let payoff = if w < 0.0 {
            put
        } else if w < 1.0 {
            put - 1.0
        } else {
            put - 1.0 + fwd
        };
        self.c * payoff
    }
}

fn probe_backward_inner(ctx: &PricingContext, t: f64, s: f64, big_t: f64, w: f64) -> Option<Vec<f64>> {
    let d = ctx.dim();
    if riccati::lifetime_probe(&ctx.model, &vec![0.0; d], -w, big_t - s) != Lifetime::InDomain {
        return None;
    }
    let (_, b0) = ctx.a0b0(s, big_t, C::new(w, 0.0)).ok()?;
    let _ = t;
    Some(b0.iter().map(|z| z.re).collect())
}

fn strip_probe(ctx: &PricingContext, flavor: Flavor, spec: &OptionSpec, t: f64, b0_1: &[f64], w: f64) -> bool {
    let model = &ctx.model;
    let horizon = (spec.s - t).max(0.0);
    match flavor {
        Flavor::Forward => {
            let u: Vec<f64> = b0_1.iter().map(|b| w * b).collect();
            riccati::lifetime_probe(model, &u, -1.0, horizon) == Lifetime::InDomain
        }
        Flavor::Backward => match probe_backward_inner(ctx, t, spec.s, spec.t, w) {
            Some(b0) => riccati::lifetime_probe(model, &b0, -1.0, horizon) == Lifetime::InDomain,
            None => false,
        },
        Flavor::TermBasis => match probe_backward_inner(ctx, t, spec.s, spec.t, w) {
            Some(b0) => {
                let u: Vec<f64> = b0.iter().zip(b0_1).map(|(b, b1)| b - w * b1).collect();
                riccati::lifetime_probe(model, &u, -1.0, horizon) == Lifetime::InDomain
            }
            None => false,
        },
        Flavor::InAccrual => {
            let d = ctx.dim();
            riccati::lifetime_probe(model, &vec![0.0; d], -w, (spec.t - t).max(0.0)) == Lifetime::InDomain
        }
    }
}

fn search_edge<P: Fn(f64) -> bool>(probe: &P, start: f64, dir: f64, cap: f64) -> Option<f64> {
    if !probe(start) {
        return None;
    }
    let mut good = start;
    let mut step = STRIP_EPS;
    loop {
        step *= 2.0;
        let cand = start + dir * step;
        if (cand - start).abs() >= cap {
            let lim = start + dir * cap;
            if probe(lim) {
                return Some(lim);
            }
            return Some(bisect(probe, good, lim));
        }
        if probe(cand) {
            good = cand;
        } else {
            return Some(bisect(probe, good, cand));
        }
    }
}

fn bisect<P: Fn(f64) -> bool>(probe: &P, mut good: f64, mut bad: f64) -> f64 {
    while (bad - good).abs() > STRIP_RESOLUTION {
        let mid = 0.5 * (good + bad);
        if probe(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

fn flavor_of(spec: &OptionSpec, in_accrual: bool) -> Flavor {
    if in_accrual {
        return Flavor::InAccrual;
    }
    match spec.style {
        OptionStyle::ForwardLooking => Flavor::Forward,
        OptionStyle::BackwardLooking => Flavor::Backward,
        OptionStyle::TermBasis => Flavor::TermBasis,
    }
}

fn strip_for(ctx: &PricingContext, spec: &OptionSpec, t: f64, flavor: Flavor) -> Result<DampingStrip> {
    spec.validate()?;
    ctx.check_bond_assumption(spec.t - t)?;
    let b0_1: Vec<f64> = match flavor {
        Flavor::Forward | Flavor::TermBasis => ctx
            .a0b0_cached(spec.s, spec.t, C::new(1.0, 0.0))?
            .1
            .iter()
            .map(|z| z.re)
            .collect(),
        _ => vec![0.0; ctx.dim()],
    };
    let probe = |w: f64| strip_probe(ctx, flavor, spec, t, &b0_1, w);
    let lower = search_edge(&probe, -STRIP_EPS, -1.0, STRIP_CAP).ok_or_else(|| {
        PricingError::NoStrip(format!(
            "w = -{STRIP_EPS} already fails the domain probe for S = {}, T = {}",
            spec.s, spec.t
        ))
    })?;
    let upper = match flavor {
        Flavor::TermBasis => 1.0,
        Flavor::InAccrual => 0.0,
        _ => search_edge(&probe, 1.0 + STRIP_EPS, 1.0, STRIP_CAP).ok_or_else(|| {
            PricingError::NoStrip(format!(
                "w = 1 + {STRIP_EPS} already fails the domain probe for S = {}, T = {}",
                spec.s, spec.t
            ))
        })?,
    };
    Ok(DampingStrip {
        w_minus: lower,
        w_plus: upper,
        probed_at: (spec.s, spec.t),
    })
}

/// Numerically certified damping strip for `spec`, probed from time `t`
/// (0 for a spot-start session).
pub fn damping_strip(ctx: &PricingContext, spec: &OptionSpec, t: f64) -> Result<DampingStrip> {
    strip_for(ctx, spec, t, flavor_of(spec, false))
}

/// Strip for valuation inside the accrual period (only `w < 0` is used).
pub fn damping_strip_in_accrual(ctx: &PricingContext, spec: &OptionSpec, t: f64) -> Result<DampingStrip> {
    strip_for(ctx, spec, t, Flavor::InAccrual)
}

/// Largest magnitude used for default damping values.
pub const DEFAULT_W_LIMIT: f64 = 2.0;

/// Default damping: half-way to the strip edge on the plain branch, clamped to
/// `[-DEFAULT_W_LIMIT, 1 + DEFAULT_W_LIMIT]`.
pub fn default_damping(strip: &DampingStrip, kind: OptionKind) -> f64 {
    match kind {
        OptionKind::Caplet => (0.5 * strip.w_minus).max(-DEFAULT_W_LIMIT),
        OptionKind::Floorlet => {
            if strip.w_plus > 1.0 {
                (0.5 * (1.0 + strip.w_plus)).min(1.0 + DEFAULT_W_LIMIT)
            } else {
                (0.5 * strip.w_minus).max(-DEFAULT_W_LIMIT)
            }
        }
    }
}

/// `f(lambda) = 2 (G - G_0)(z) K'^z / (2 pi z (z-1))` on the half line.
struct Remainder<'a> {
    g: &'a TransformG<'a>,
    fit: LognormalFit,
    w: f64,
}

impl<'a> Remainder<'a> {
    fn diff(&self, lambda: f64) -> Result<C> {
        let z = C::new(self.w, lambda);
        Ok(self.g.log_g(z)?.exp() - self.fit.eval(z))
    }
}

fn imag_residual(g: &TransformG, w: f64, ln_kp: f64) -> Result<f64> {
    let rule = GaussLegendre::cached(16);
    let mut acc = C::new(0.0, 0.0);
    for (x, wt) in rule.x.iter().zip(&rule.w) {
        for l in [0.5 * (x + 1.0), -0.5 * (x + 1.0)] {
            let z = C::new(w, l);
            acc += 0.5 * wt * g.log_g(z)?.exp() * kernel_unchecked(w, l, ln_kp);
        }
    }
    Ok(acc.im.abs())
}

struct Prepared<'a> {
    g: TransformG<'a>,
    strip: DampingStrip,
    constant: f64,
}

fn prepare<'a>(
    ctx: &'a PricingContext,
    state: &'a MarketState,
    spec: &OptionSpec,
    w: f64,
    flavor: Flavor,
) -> Result<Prepared<'a>> {
    spec.validate()?;
    state.validate(&ctx.model)?;
    check_w(w)?;
    match flavor {
        Flavor::InAccrual => {
            if !(state.t >= spec.s && state.t <= spec.t) {
                return Err(PricingError::InvalidInput(format!(
                    "in-accrual valuation needs S <= t <= T (t = {})",
                    state.t
                )));
            }
            if state.accrual_factor.is_none() {
                return Err(PricingError::MissingAccrualFactor);
            }
            if spec.kind != OptionKind::Caplet || spec.style != OptionStyle::BackwardLooking {
                return Err(PricingError::InvalidInput(
                    "in-accrual valuation covers backward-looking caplets only".into(),
                ));
            }
        }
        _ => {
            if state.t > spec.s {
                return Err(PricingError::InvalidInput(format!(
                    "valuation time {} is after the accrual start {}; use the in-accrual pricer",
                    state.t, spec.s
                )));
            }
        }
    }
    ctx.check_bond_assumption(spec.t - state.t)?;
    let strip = strip_for(ctx, spec, state.t, flavor)?;
    let out = |reason: &str| Err(PricingError::DampingOutOfStrip { w, reason: reason.into() });
    if !strip.contains(w) {
        return out(&format!("certified strip is ({}, {})", strip.w_minus, strip.w_plus));
    }
    let branch_ok = match (flavor, spec.kind) {
        (Flavor::InAccrual, _) => w < 0.0,
        (Flavor::TermBasis, _) => w < 1.0,
        (_, OptionKind::Caplet) => w < 1.0,
        (_, OptionKind::Floorlet) => w > 0.0,
    };
    if !branch_ok {
        return out("damping value lies on a branch not available for this payoff");
    }
    let g = TransformG::new(ctx, state, spec, flavor)?;
    let state_now = MarketState::new(state.t, state.x.clone());
    let constant = match (flavor, spec.kind) {
        (Flavor::InAccrual, _) => 0.0,
        (Flavor::TermBasis, OptionKind::Caplet) => {
            if w > 0.0 {
                ctx.zcb_price(&state_now, spec.s)?
            } else {
                0.0
            }
        }
        (Flavor::TermBasis, OptionKind::Floorlet) => {
            // (x - 1)^+ = (1 - x)^+ - 1 + x with E[(B_t/B_S) x] = G(1)
            let g1 = g.log_g(C::new(1.0, 0.0))?.exp().re;
            if w > 0.0 {
                g1
            } else {
                g1 - g.log_g(C::new(0.0, 0.0))?.exp().re
            }
        }
        (_, OptionKind::Caplet) => {
            if w > 0.0 {
                ctx.zcb_price(&state_now, spec.s)?
            } else {
                0.0
            }
        }
        (_, OptionKind::Floorlet) => {
            if w < 1.0 {
                spec.kprime() * ctx.zcb_price(&state_now, spec.t)?
            } else {
                0.0
            }
        }
    };
    Ok(Prepared { g, strip, constant })
}

fn run(prep: &Prepared, spec: &OptionSpec, w: f64, quad: &QuadratureConfig) -> Result<PriceResult> {
    let ln_kp = spec.kprime().ln();
    let fit = LognormalFit::fit(&prep.g, w)?;
    let closed = fit.kernel_integral(w, ln_kp);
    let rough = closed + prep.constant;
    let rem = Remainder { g: &prep.g, fit, w };
    let f = |l: f64| -> Result<C> { Ok(2.0 * rem.diff(l)? * kernel_unchecked(w, l, ln_kp)) };
    let scale = rough.abs().max(prep.constant.abs() * 1e-3).max(1e-300);
    let q = quadrature::integrate_half_line(&f, quad, scale)?;
    let price = q.value.re + closed + prep.constant;
    let resid = imag_residual(&prep.g, w, ln_kp)?;
    Ok(PriceResult {
        price,
        w,
        lambda_max: q.lambda_max,
        nodes: q.nodes,
        imag_residual: resid,
        strip: Some([prep.strip.w_minus, prep.strip.w_plus]),
        error_estimate: q.error_estimate,
    })
}

fn require_style(spec: &OptionSpec, style: OptionStyle) -> Result<()> {
    if spec.style != style {
        return Err(PricingError::InvalidInput(format!(
            "expected a {style:?} option, got {:?}",
            spec.style
        )));
    }
    Ok(())
}

pub fn price_forward_option(
    ctx: &PricingContext,
    state: &MarketState,
    spec: &OptionSpec,
    w: f64,
    quad: &QuadratureConfig,
) -> Result<PriceResult> {
    require_style(spec, OptionStyle::ForwardLooking)?;
    let prep = prepare(ctx, state, spec, w, Flavor::Forward)?;
    run(&prep, spec, w, quad)
}

pub fn price_backward_option(
    ctx: &PricingContext,
    state: &MarketState,
    spec: &OptionSpec,
    w: f64,
    quad: &QuadratureConfig,
) -> Result<PriceResult> {
    require_style(spec, OptionStyle::BackwardLooking)?;
    let prep = prepare(ctx, state, spec, w, Flavor::Backward)?;
    run(&prep, spec, w, quad)
}

/// Backward-looking caplet valued at `S <= t <= T` given `B_t / B_S`.
pub fn price_backward_in_accrual(
    ctx: &PricingContext,
    state: &MarketState,
    spec: &OptionSpec,
    w: f64,
    quad: &QuadratureConfig,
) -> Result<PriceResult> {
    require_style(spec, OptionStyle::BackwardLooking)?;
    let prep = prepare(ctx, state, spec, w, Flavor::InAccrual)?;
    run(&prep, spec, w, quad)
}

pub fn price_term_basis(
    ctx: &PricingContext,
    state: &MarketState,
    spec: &OptionSpec,
    w: f64,
    quad: &QuadratureConfig,
) -> Result<PriceResult> {
    require_style(spec, OptionStyle::TermBasis)?;
    let prep = prepare(ctx, state, spec, w, Flavor::TermBasis)?;
    run(&prep, spec, w, quad)
}

/// Dispatch on the style; `w = None` selects the default damping. Inside the
/// accrual period of a backward-looking caplet the in-accrual formula is used.
pub fn price_option(
    ctx: &PricingContext,
    state: &MarketState,
    spec: &OptionSpec,
    w: Option<f64>,
    quad: &QuadratureConfig,
) -> Result<PriceResult> {
    let in_accrual = spec.style == OptionStyle::BackwardLooking && state.t > spec.s;
    let flavor = flavor_of(spec, in_accrual);
    let w = match w {
        Some(w) => w,
        None => {
            let strip = strip_for(ctx, spec, state.t, flavor)?;
            default_damping(&strip, if in_accrual { OptionKind::Caplet } else { spec.kind })
        }
    };
    match flavor {
        Flavor::Forward => price_forward_option(ctx, state, spec, w, quad),
        Flavor::Backward => price_backward_option(ctx, state, spec, w, quad),
        Flavor::TermBasis => price_term_basis(ctx, state, spec, w, quad),
        Flavor::InAccrual => price_backward_in_accrual(ctx, state, spec, w, quad),
    }
}

/// Price a ladder of strikes on one shared set of quadrature nodes. The nodes
/// are adapted to the strike with the fastest kernel oscillation and the
/// transform is evaluated once per node.
pub fn price_strike_ladder(
    ctx: &PricingContext,
    state: &MarketState,
    spec: &OptionSpec,
    strikes: &[f64],
    w: Option<f64>,
    quad: &QuadratureConfig,
) -> Result<Vec<PriceResult>> {
    if strikes.is_empty() {
        return Ok(Vec::new());
    }
    if spec.style == OptionStyle::TermBasis {
        return Err(PricingError::InvalidInput("term-basis options carry no strike".into()));
    }
    let flavor = flavor_of(spec, false);
    let specs: Vec<OptionSpec> = strikes.iter().map(|&k| OptionSpec { strike: k, ..*spec }).collect();
    for s in &specs {
        s.validate()?;
    }
    let strip = strip_for(ctx, spec, state.t, flavor)?;
    let w = w.unwrap_or_else(|| default_damping(&strip, spec.kind));
    let pivot = specs
        .iter()
        .max_by(|a, b| a.kprime().ln().abs().partial_cmp(&b.kprime().ln().abs()).unwrap())
        .unwrap();
    let prep = prepare(ctx, state, pivot, w, flavor)?;
    let fit = LognormalFit::fit(&prep.g, w)?;
    let rem = Remainder { g: &prep.g, fit, w };
    let memo: Mutex<HashMap<u64, C>> = Mutex::new(HashMap::new());
    let ln_pivot = pivot.kprime().ln();
    let f = |l: f64| -> Result<C> {
        let d = rem.diff(l)?;
        memo.lock().insert(l.to_bits(), d);
        Ok(2.0 * d * kernel_unchecked(w, l, ln_pivot))
    };
    let closed_pivot = fit.kernel_integral(w, ln_pivot);
    let scale = (closed_pivot + prep.constant).abs().max(1e-300);
    let q = quadrature::integrate_half_line_with_rule(&f, quad, scale)?;
    let rule = q.rule.as_ref().expect("rule requested");
    let memo = memo.into_inner();
    let p_s = ctx.zcb_price(&MarketState::new(state.t, state.x.clone()), spec.s)?;
    let p_t = ctx.zcb_price(&MarketState::new(state.t, state.x.clone()), spec.t)?;
    let resid = imag_residual(&prep.g, w, ln_pivot)?;
    let mut out = Vec::with_capacity(specs.len());
    for s in &specs {
        let ln_kp = s.kprime().ln();
        let terms: Vec<C> = rule
            .iter()
            .map(|&(l, wt)| 2.0 * memo[&l.to_bits()] * kernel_unchecked(w, l, ln_kp) * wt)
            .collect();
        let numeric = quadrature::pairwise_sum(&terms).re;
        let constant = match s.kind {
            OptionKind::Caplet if w > 0.0 => p_s,
            OptionKind::Floorlet if w < 1.0 => s.kprime() * p_t,
            _ => 0.0,
        };
        out.push(PriceResult {
            price: numeric + fit.kernel_integral(w, ln_kp) + constant,
            w,
            lambda_max: q.lambda_max,
            nodes: q.nodes,
            imag_residual: resid,
            strip: Some([strip.w_minus, strip.w_plus]),
            error_estimate: q.error_estimate,
        });
    }
    Ok(out)
}

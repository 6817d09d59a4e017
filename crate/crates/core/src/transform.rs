//! Extended affine transform, bond prices and the deterministic shift.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::affine_model::AffineModelSpec;
use crate::error::{PricingError, Result};
use crate::riccati::{self, PathStatus, Terminal};

type C = Complex64;

/// Default Riccati tolerance used by pricing sessions.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Piecewise-constant shift `ell`, with value `ell[k]` on `[knots[k], knots[k+1])`
/// and `ell.last()` beyond the last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub knots: Vec<f64>,
    pub ell: Vec<f64>,
}

impl CurveSpec {
    pub fn new(knots: Vec<f64>, ell: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || ell.len() + 1 != knots.len() {
            return Err(PricingError::InvalidInput(
                "a curve needs knots t_0 < ... < t_K and K values".into(),
            ));
        }
        if knots[0] != 0.0 || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PricingError::InvalidInput(
                "curve knots must start at 0 and increase strictly".into(),
            ));
        }
        if ell.iter().any(|x| !x.is_finite()) {
            return Err(PricingError::InvalidInput("curve values must be finite".into()));
        }
        Ok(CurveSpec { knots, ell })
    }

    pub fn flat(rate: f64) -> Self {
        CurveSpec {
            knots: vec![0.0, 1.0],
            ell: vec![rate],
        }
    }

    /// Uniform parallel shift of every value.
    pub fn shifted(&self, bump: f64) -> Self {
        CurveSpec {
            knots: self.knots.clone(),
            ell: self.ell.iter().map(|x| x + bump).collect(),
        }
    }

    pub fn ell_at(&self, t: f64) -> f64 {
        let k = self.knots.partition_point(|&x| x <= t);
        self.ell[k.saturating_sub(1).min(self.ell.len() - 1)]
    }

    /// `int_0^t ell(s) ds` for `t >= 0`.
    fn primitive(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &l) in self.ell.iter().enumerate() {
            let a = self.knots[k];
            let b = if k + 1 == self.ell.len() { f64::INFINITY } else { self.knots[k + 1] };
            if t <= a {
                break;
            }
            acc += l * (t.min(b) - a);
        }
        acc
    }

    /// `L(t, T) = int_t^T ell(s) ds`.
    pub fn integral(&self, t: f64, big_t: f64) -> f64 {
        self.primitive(big_t) - self.primitive(t)
    }
}

/// Read `maturity_years,discount_factor` rows.
pub fn read_discount_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    #[derive(Deserialize)]
    struct Row {
        maturity_years: f64,
        discount_factor: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let r: Row = row?;
        out.push((r.maturity_years, r.discount_factor));
    }
    Ok(out)
}

pub fn read_discount_file(path: &Path) -> Result<Vec<(f64, f64)>> {
    read_discount_csv(std::fs::File::open(path)?)
}

pub fn write_discount_csv<W: Write>(w: W, rows: &[(f64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["maturity_years", "discount_factor"])?;
    for (t, p) in rows {
        wr.write_record([format!("{t}"), format!("{p:.17e}")])?;
    }
    wr.flush()?;
    Ok(())
}

/// Valuation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(default)]
    pub y: f64,
    /// Realized `B_t / B_S` inside an accrual period.
    #[serde(default)]
    pub accrual_factor: Option<f64>,
}

impl MarketState {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        MarketState {
            t,
            x,
            y: 0.0,
            accrual_factor: None,
        }
    }

    pub fn with_accrual(mut self, factor: f64) -> Self {
        self.accrual_factor = Some(factor);
        self
    }

    pub fn validate(&self, model: &AffineModelSpec) -> Result<()> {
        if self.x.len() != model.dim() {
            return Err(PricingError::InvalidInput(format!(
                "state has {} components, model dimension is {}",
                self.x.len(),
                model.dim()
            )));
        }
        if self.x[..model.m()].iter().any(|&v| v < 0.0) {
            return Err(PricingError::InvalidInput(
                "R_+ components of the state must be nonnegative".into(),
            ));
        }
        if !(self.t >= 0.0) {
            return Err(PricingError::InvalidInput("valuation time must be nonnegative".into()));
        }
        if let Some(a) = self.accrual_factor {
            if !(a > 0.0) {
                return Err(PricingError::InvalidInput("accrual factor must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Shorthand coefficients. `a0`/`b0` come from `coeffs_a0b0`, `a1`/`b1` from
/// `coeffs_a1b1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformCoeffs {
    pub a0: Option<C>,
    pub b0: Option<Vec<C>>,
    pub a1: Option<C>,
    pub b1: Option<Vec<C>>,
    pub valid: bool,
    pub domain_note: PathStatus,
}

type Key = (Vec<(u64, u64)>, (u64, u64), u64);

/// A pricing session: a model, a curve, a Riccati tolerance and a memo of
/// frequently used solves.
#[derive(Debug)]
pub struct PricingContext {
    pub model: AffineModelSpec,
    pub curve: CurveSpec,
    pub tol: f64,
    cache: RwLock<HashMap<Key, Terminal>>,
}

impl Clone for PricingContext {
    fn clone(&self) -> Self {
        PricingContext::with_tol(self.model.clone(), self.curve.clone(), self.tol)
    }
}

fn describe(status: &PathStatus) -> String {
    match status {
        PathStatus::Complete => "complete".into(),
        PathStatus::BlowUp(t) => format!("solution explodes near t = {t:.6}"),
        PathStatus::BoundaryHit(t) => format!("solution reaches the domain boundary near t = {t:.6}"),
    }
}

impl PricingContext {
    pub fn new(model: AffineModelSpec, curve: CurveSpec) -> Self {
        Self::with_tol(model, curve, DEFAULT_TOL)
    }

    pub fn with_tol(model: AffineModelSpec, curve: CurveSpec, tol: f64) -> Self {
        PricingContext {
            model,
            curve,
            tol,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Raw terminal values of the Riccati system (not cached). Fails with
    /// `DomainViolation` if the solution does not survive to `tau`.
    pub fn riccati(&self, u: &[C], v: C, tau: f64) -> Result<Terminal> {
        let term = riccati::solve_terminal(&self.model, u, v, tau, self.tol)?;
        if !term.status.is_complete() {
            return Err(PricingError::DomainViolation(format!(
                "Riccati solution from u = {u:?}, v = {v} does not survive to {tau}: {}",
                describe(&term.status)
            )));
        }
        Ok(term)
    }

    /// Memoized variant of [`PricingContext::riccati`].
    pub fn riccati_cached(&self, u: &[C], v: C, tau: f64) -> Result<Terminal> {
        let key: Key = (
            u.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect(),
            (v.re.to_bits(), v.im.to_bits()),
            tau.to_bits(),
        );
        if let Some(t) = self.cache.read().get(&key) {
            return Ok(t.clone());
        }
        let t = self.riccati(u, v, tau)?;
        self.cache.write().insert(key, t.clone());
        Ok(t)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().len()
    }

    fn zeros(&self) -> Vec<C> {
        vec![C::new(0.0, 0.0); self.dim()]
    }

    /// `(A0(t, T, v), B0(T - t, v))` from a fresh solve.
    pub fn a0b0(&self, t: f64, big_t: f64, v: C) -> Result<(C, Vec<C>)> {
        let tau = big_t - t;
        let term = self.riccati(&self.zeros(), -v, tau)?;
        Ok((term.phi - v * self.curve.integral(t, big_t), term.psi))
    }

    /// As [`PricingContext::a0b0`] but served from the memo.
    pub fn a0b0_cached(&self, t: f64, big_t: f64, v: C) -> Result<(C, Vec<C>)> {
        let tau = big_t - t;
        let term = self.riccati_cached(&self.zeros(), -v, tau)?;
        Ok((term.phi - v * self.curve.integral(t, big_t), term.psi))
    }

    /// `(A1(t, S, u), B1(S - t, u))`.
    pub fn a1b1(&self, t: f64, s: f64, u: &[C]) -> Result<(C, Vec<C>)> {
        let term = self.riccati(u, C::new(-1.0, 0.0), s - t)?;
        Ok((term.phi - self.curve.integral(t, s), term.psi))
    }

    pub fn a1b1_cached(&self, t: f64, s: f64, u: &[C]) -> Result<(C, Vec<C>)> {
        let term = self.riccati_cached(u, C::new(-1.0, 0.0), s - t)?;
        Ok((term.phi - self.curve.integral(t, s), term.psi))
    }

    pub fn coeffs_a0b0(&self, t: f64, big_t: f64, v: C) -> TransformCoeffs {
        match self.a0b0(t, big_t, v) {
            Ok((a, b)) => TransformCoeffs {
                a0: Some(a),
                b0: Some(b),
                a1: None,
                b1: None,
                valid: true,
                domain_note: PathStatus::Complete,
            },
            Err(_) => self.invalid_coeffs(&self.zeros(), -v, big_t - t),
        }
    }

    pub fn coeffs_a1b1(&self, t: f64, s: f64, u: &[C]) -> TransformCoeffs {
        match self.a1b1(t, s, u) {
            Ok((a, b)) => TransformCoeffs {
                a0: None,
                b0: None,
                a1: Some(a),
                b1: Some(b),
                valid: true,
                domain_note: PathStatus::Complete,
            },
            Err(_) => self.invalid_coeffs(u, C::new(-1.0, 0.0), s - t),
        }
    }

    fn invalid_coeffs(&self, u: &[C], v: C, tau: f64) -> TransformCoeffs {
        let status = riccati::solve_terminal(&self.model, u, v, tau.max(0.0), self.tol)
            .map(|t| t.status)
            .unwrap_or(PathStatus::BoundaryHit(0.0));
        TransformCoeffs {
            a0: None,
            b0: None,
            a1: None,
            b1: None,
            valid: false,
            domain_note: status,
        }
    }

    /// Check that `(0, -1)` survives to `horizon`.
    pub fn check_bond_assumption(&self, horizon: f64) -> Result<()> {
        match riccati::lifetime_probe(&self.model, &vec![0.0; self.dim()], -1.0, horizon) {
            riccati::Lifetime::InDomain => Ok(()),
            riccati::Lifetime::Exits(t) => Err(PricingError::DomainViolation(format!(
                "assumption (0,-1) in Y_T violated: the bond Riccati solution leaves the domain near {t:.6} < T = {horizon}"
            ))),
        }
    }

    fn bond_exponent(&self, state: &MarketState, big_t: f64) -> Result<f64> {
        if big_t < state.t {
            return Err(PricingError::InvalidInput(format!(
                "maturity {big_t} precedes valuation time {}",
                state.t
            )));
        }
        let (a, b) = self.a0b0_cached(state.t, big_t, C::new(1.0, 0.0)).map_err(|e| match e {
            PricingError::DomainViolation(msg) => PricingError::DomainViolation(format!(
                "assumption (0,-1) in Y_T violated for T - t = {}: {msg}",
                big_t - state.t
            )),
            other => other,
        })?;
        let mut e = a;
        for (bi, xi) in b.iter().zip(&state.x) {
            e += bi * *xi;
        }
        Ok(e.re)
    }

    /// `P_t(T) = exp(A0(t,T,1) + <B0(T-t,1), X_t>)`.
    pub fn zcb_price(&self, state: &MarketState, big_t: f64) -> Result<f64> {
        state.validate(&self.model)?;
        if big_t == state.t {
            return Ok(1.0);
        }
        Ok(self.bond_exponent(state, big_t)?.exp())
    }

    /// `E[exp(<u, X_T> + v Y_T) | F_t]`.
    pub fn affine_transform(&self, state: &MarketState, big_t: f64, u: &[C], v: C) -> Result<C> {
        state.validate(&self.model)?;
        if big_t < state.t {
            return Err(PricingError::InvalidInput("T precedes the valuation time".into()));
        }
        let term = self.riccati(u, v, big_t - state.t)?;
        let mut e = term.phi + v * state.y;
        for (p, x) in term.psi.iter().zip(&state.x) {
            e += p * *x;
        }
        Ok(e.exp())
    }

    /// `F(S, T) = (1 / P_S(T) - 1) / (T - S)` with `state.t = S`.
    pub fn forward_looking_rate(&self, state: &MarketState, big_t: f64) -> Result<f64> {
        let tau = big_t - state.t;
        if !(tau > 0.0) {
            return Err(PricingError::InvalidInput("forward rate needs T > S".into()));
        }
        let p = self.zcb_price(state, big_t)?;
        Ok((1.0 / p - 1.0) / tau)
    }
}

/// Bootstrap a piecewise-constant shift so that the model reproduces the given
/// discount factors at time 0 from the factor value `x0`.
pub fn fit_ell(model: &AffineModelSpec, x0: &[f64], market: &[(f64, f64)]) -> Result<CurveSpec> {
    fit_ell_with_tol(model, x0, market, DEFAULT_TOL)
}

pub fn fit_ell_with_tol(model: &AffineModelSpec, x0: &[f64], market: &[(f64, f64)], tol: f64) -> Result<CurveSpec> {
    if market.is_empty() {
        return Err(PricingError::FitFailure("no discount factors given".into()));
    }
    if x0.len() != model.dim() {
        return Err(PricingError::InvalidInput("initial state has the wrong dimension".into()));
    }
    let mut knots = vec![0.0];
    let mut ell = Vec::with_capacity(market.len());
    let mut prev_l = 0.0;
    let zeros = vec![C::new(0.0, 0.0); model.dim()];
    for (k, &(t, p)) in market.iter().enumerate() {
        if !(p > 0.0) || !p.is_finite() {
            return Err(PricingError::FitFailure(format!(
                "discount factor {p} at maturity {t} is not positive"
            )));
        }
        let last = *knots.last().unwrap();
        if !(t > last) {
            return Err(PricingError::FitFailure(format!(
                "maturities must increase strictly (entry {k}: {t})"
            )));
        }
        if k > 0 && p > market[k - 1].1 {
            log::warn!("discount factors increase between {} and {t}", market[k - 1].0);
        }
        let term = riccati::solve_terminal(model, &zeros, C::new(-1.0, 0.0), t, tol)?;
        if !term.status.is_complete() {
            return Err(PricingError::DomainViolation(format!(
                "assumption (0,-1) in Y_T violated for T = {t}"
            )));
        }
        let mut expo = term.phi.re;
        for (b, x) in term.psi.iter().zip(x0) {
            expo += b.re * x;
        }
        let l_total = expo - p.ln();
        ell.push((l_total - prev_l) / (t - last));
        knots.push(t);
        prev_l = l_total;
    }
    CurveSpec::new(knots, ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine_model::{catalog, ModelFamily};

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn vasicek_bond(kappa: f64, sigma: f64, x: f64, tau: f64) -> f64 {
        let b = (1.0 - (-kappa * tau).exp()) / kappa;
        let a = sigma * sigma / (2.0 * kappa * kappa) * (tau - b) - sigma * sigma * b * b / (4.0 * kappa);
        (a - b * x).exp()
    }

    #[test]
    fn curve_integral() {
        let c = CurveSpec::new(vec![0.0, 1.0, 3.0], vec![0.02, 0.04]).unwrap();
        assert!((c.integral(0.0, 1.0) - 0.02).abs() < 1e-16);
        assert!((c.integral(0.5, 2.0) - (0.01 + 0.04)).abs() < 1e-16);
        assert!((c.integral(0.0, 5.0) - (0.02 + 0.16)).abs() < 1e-15);
        assert_eq!(c.ell_at(10.0), 0.04);
        assert_eq!(c.ell_at(0.0), 0.02);
        let total = c.integral(0.3, 4.2);
        assert!((c.integral(0.3, 2.2) + c.integral(2.2, 4.2) - total).abs() < 1e-16);
    }

    #[test]
    fn deterministic_bond_and_rate() {
        let m = catalog(ModelFamily::Deterministic, &[]).unwrap();
        let ctx = PricingContext::new(m, CurveSpec::flat(0.03));
        let st = MarketState::new(0.0, vec![0.0]);
        assert!((ctx.zcb_price(&st, 2.0).unwrap() - (-0.06f64).exp()).abs() < 1e-15);
        assert_eq!(ctx.zcb_price(&st, 0.0).unwrap(), 1.0);
        let f = ctx.forward_looking_rate(&MarketState::new(1.0, vec![0.0]), 1.25).unwrap();
        assert!((f - ((0.0075f64).exp() - 1.0) / 0.25).abs() < 1e-14);
        let (a0, b0) = ctx.a0b0(0.0, 2.0, c(1.0, 0.0)).unwrap();
        assert!((a0.re + 0.06).abs() < 1e-15 && b0[0] == c(0.0, 0.0));
    }

    #[test]
    fn vasicek_bond_matches_closed_form() {
        let (kappa, sigma) = (0.1, 0.01);
        let m = catalog(ModelFamily::Vasicek, &[("kappa", kappa), ("sigma", sigma)]).unwrap();
        let ctx = PricingContext::new(m, CurveSpec::flat(0.02));
        let st = MarketState::new(0.0, vec![0.0]);
        let p = ctx.zcb_price(&st, 5.0).unwrap();
        let exact = vasicek_bond(kappa, sigma, 0.0, 5.0) * (-0.1f64).exp();
        assert!((p / exact - 1.0).abs() < 1e-8);
        let tr = ctx.affine_transform(&MarketState::new(0.0, vec![0.02]), 1.0, &[c(0.0, 0.0)], c(-1.0, 0.0)).unwrap();
        assert!((tr.re / vasicek_bond(kappa, sigma, 0.02, 1.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn transform_trivial_cases() {
        let m = catalog(ModelFamily::Cir, &[("kappa", 0.5), ("theta", 0.03), ("sigma", 0.1)]).unwrap();
        let ctx = PricingContext::new(m, CurveSpec::flat(0.0));
        let st = MarketState::new(0.0, vec![0.03]);
        assert_eq!(ctx.affine_transform(&st, 1.0, &[c(0.0, 0.0)], c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
        let t = ctx.coeffs_a0b0(0.0, 1.0, c(0.0, 0.0));
        assert_eq!(t.a0, Some(c(0.0, 0.0)));
        assert_eq!(t.b0, Some(vec![c(0.0, 0.0)]));
    }

    #[test]
    fn a1_reduces_to_a0() {
        let m = catalog(ModelFamily::Cir, &[("kappa", 0.5), ("theta", 0.03), ("sigma", 0.1)]).unwrap();
        let ctx = PricingContext::new(m, CurveSpec::flat(0.01));
        let (a1, b1) = ctx.a1b1(0.3, 2.0, &[c(0.0, 0.0)]).unwrap();
        let (a0, b0) = ctx.a0b0(0.3, 2.0, c(1.0, 0.0)).unwrap();
        assert_eq!(a1, a0);
        assert_eq!(b1, b0);
    }

    #[test]
    fn fit_round_trip() {
        let m = catalog(ModelFamily::Cir, &[("kappa", 0.5), ("theta", 0.03), ("sigma", 0.1)]).unwrap();
        let x0 = vec![0.03];
        let market: Vec<(f64, f64)> = [0.5f64, 1.0, 2.0, 5.0, 10.0].iter().map(|&t| (t, (-0.03 * t).exp())).collect();
        let curve = fit_ell(&m, &x0, &market).unwrap();
        let ctx = PricingContext::new(m, curve);
        for &(t, p) in &market {
            let q = ctx.zcb_price(&MarketState::new(0.0, x0.clone()), t).unwrap();
            assert!((q / p - 1.0).abs() < 1e-10);
        }
        let det = catalog(ModelFamily::Deterministic, &[]).unwrap();
        let cv = fit_ell(&det, &[0.0], &[(1.0, (-0.05f64).exp())]).unwrap();
        assert!((cv.ell[0] - 0.05).abs() < 1e-15);
        assert!(matches!(fit_ell(&det, &[0.0], &[(1.0, -0.1)]), Err(PricingError::FitFailure(_))));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![(0.5, 0.99), (1.0, 0.97)];
        let mut buf = Vec::new();
        write_discount_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("maturity_years,discount_factor"));
        assert_eq!(read_discount_csv(&buf[..]).unwrap(), rows);
    }
}

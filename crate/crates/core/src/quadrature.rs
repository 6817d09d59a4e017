//! Oscillatory half-line quadrature shared by the Fourier and Gil-Pelaez
//! routes.
//!
//! The default scheme covers `[0, lambda_max]` with Gauss-Legendre panels of
//! widths 1, 1, 2, 4, 8, ... Each panel is accepted when the top Legendre
//! coefficients of the sampled integrand are small, and bisected otherwise.
//! Integration stops once the next panel and the `|f(b)| b` tail bound fall
//! below the requested tolerance.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use parking_lot::Mutex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PricingError, Result};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadScheme {
    AdaptiveTruncatedTrapezoid,
    GaussLegendrePanels,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub scheme: QuadScheme,
    /// Hard cap on the truncation point.
    pub lambda_max: f64,
    pub n_nodes: usize,
    pub rel_tol: f64,
    /// Absolute floor added to the relative tolerance.
    pub abs_tol: f64,
    /// Maximal bisection depth per panel.
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            scheme: QuadScheme::GaussLegendrePanels,
            lambda_max: (1u64 << 22) as f64,
            n_nodes: 64,
            rel_tol: 1e-9,
            abs_tol: 1e-15,
            max_depth: 12,
        }
    }
}

impl QuadratureConfig {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }
}

/// Integral over `[0, lambda_max]` with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadResult {
    pub value: C,
    /// Effective truncation point.
    pub lambda_max: f64,
    pub nodes: usize,
    pub error_estimate: f64,
    pub tail_estimate: f64,
    /// Abscissae and weights actually used, when requested.
    pub rule: Option<Vec<(f64, f64)>>,
}

/// Gauss-Legendre rule on `[-1, 1]` with the rows of the discrete Legendre
/// transform needed for the error estimate.
#[derive(Debug)]
pub struct GaussLegendre {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    // tail[j][i] = (2k+1)/2 * w_i * P_k(x_i) for k = n-1-j
    tail: Vec<Vec<f64>>,
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64, f64) {
    // returns (P_n, P_{n-1}, P_n')
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, p0, dp)
}

fn legendre_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    out[0] = 1.0;
    if n >= 1 {
        out[1] = x;
    }
    for k in 2..=n {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
    out
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 8, "at least 8 nodes per panel");
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, _, dp) = legendre_with_derivative(n, z);
                let dz = p / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, _, dp) = legendre_with_derivative(n, z);
            let wi = 2.0 / ((1.0 - z * z) * dp * dp);
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = wi;
            w[n - 1 - i] = wi;
        }
        let depth = 4.min(n);
        let mut tail = vec![vec![0.0; n]; depth];
        for i in 0..n {
            let p = legendre_all(n - 1, x[i]);
            for (j, row) in tail.iter_mut().enumerate() {
                let k = n - 1 - j;
                row[i] = (2.0 * k as f64 + 1.0) / 2.0 * w[i] * p[k];
            }
        }
        GaussLegendre { x, w, tail }
    }

    /// Shared, lazily built rule with `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        cache.lock().entry(n).or_insert_with(|| Arc::new(GaussLegendre::new(n))).clone()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sum of the magnitudes of the top Legendre coefficients of the samples.
    fn tail_size(&self, vals: &[C]) -> f64 {
        self.tail
            .iter()
            .take(2)
            .map(|row| row.iter().zip(vals).map(|(r, v)| r * v).sum::<C>().norm())
            .sum()
    }
}

/// Sum in a fixed pairwise order.
pub fn pairwise_sum(v: &[C]) -> C {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

struct Panels<'a, F> {
    f: &'a F,
    rule: Arc<GaussLegendre>,
    max_depth: u32,
    evals: usize,
    keep_rule: bool,
    rule_out: Vec<(f64, f64)>,
}

impl<'a, F> Panels<'a, F>
where
    F: Fn(f64) -> Result<C> + Sync,
{
    fn eval_points(&mut self, pts: &[f64]) -> Result<Vec<C>> {
        self.evals += pts.len();
        pts.par_iter().map(|&x| (self.f)(x)).collect()
    }

    /// Adaptive integral over `[a, b]`; returns (value, error estimate).
    fn panel(&mut self, a: f64, b: f64, tol: f64, depth: u32) -> Result<(C, f64)> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let pts: Vec<f64> = self.rule.x.iter().map(|&x| mid + half * x).collect();
        let vals = self.eval_points(&pts)?;
        let weighted: Vec<C> = vals.iter().zip(&self.rule.w).map(|(v, w)| v * *w).collect();
        let value = pairwise_sum(&weighted) * half;
        let err = 2.0 * half * self.rule.tail_size(&vals);
        if err <= tol || depth >= self.max_depth {
            if self.keep_rule {
                self.rule_out
                    .extend(pts.iter().zip(&self.rule.w).map(|(&p, &w)| (p, w * half)));
            }
            return Ok((value, err));
        }
        let (l, el) = self.panel(a, mid, 0.5 * tol, depth + 1)?;
        let (r, er) = self.panel(mid, b, 0.5 * tol, depth + 1)?;
        Ok((l + r, el + er))
    }
}

/// `int_0^lambda_max f(x) dx` where `f` decays at least like `x^-2`.
///
/// `scale` is the magnitude against which `rel_tol` is applied in addition to
/// the running value of the integral.
pub fn integrate_half_line<F>(f: &F, cfg: &QuadratureConfig, scale: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<C> + Sync,
{
    integrate_half_line_impl(f, cfg, scale, false)
}

/// As [`integrate_half_line`], additionally returning the node set used.
pub fn integrate_half_line_with_rule<F>(f: &F, cfg: &QuadratureConfig, scale: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<C> + Sync,
{
    integrate_half_line_impl(f, cfg, scale, true)
}

fn integrate_half_line_impl<F>(f: &F, cfg: &QuadratureConfig, scale: f64, keep_rule: bool) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<C> + Sync,
{
    if !(cfg.rel_tol > 0.0) || !(cfg.lambda_max > 1.0) {
        return Err(PricingError::InvalidInput(
            "quadrature needs rel_tol > 0 and lambda_max > 1".into(),
        ));
    }
    match cfg.scheme {
        QuadScheme::GaussLegendrePanels => gauss_panels(f, cfg, scale, keep_rule),
        QuadScheme::AdaptiveTruncatedTrapezoid => trapezoid(f, cfg, scale, keep_rule),
    }
}

/// `int_a^b f(x) dx` to absolute tolerance `abs_tol`, using panels of doubling
/// width starting at 1 and the same adaptive bisection as the half-line rule.
pub fn integrate_range<F>(f: &F, a: f64, b: f64, cfg: &QuadratureConfig, abs_tol: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<C> + Sync,
{
    if !(b > a) {
        return Err(PricingError::InvalidInput("integration range must be nonempty".into()));
    }
    let mut edges = vec![a];
    let mut width = 1.0f64;
    while *edges.last().unwrap() < b {
        let next = (edges.last().unwrap() + width).min(b);
        edges.push(next);
        if edges.len() > 2 {
            width *= 2.0;
        }
    }
    let npanels = (edges.len() - 1) as f64;
    let mut eng = Panels {
        f,
        rule: GaussLegendre::cached(cfg.n_nodes),
        max_depth: cfg.max_depth + 8,
        evals: 0,
        keep_rule: false,
        rule_out: Vec::new(),
    };
    let mut total = C::new(0.0, 0.0);
    let mut err = 0.0;
    for p in edges.windows(2) {
        let (v, e) = eng.panel(p[0], p[1], abs_tol / npanels, 0)?;
        total += v;
        err += e;
    }
    if err > abs_tol {
        return Err(PricingError::QuadratureFailure(format!(
            "panel error estimate {err:.3e} above tolerance {abs_tol:.3e} on [{a}, {b}]"
        )));
    }
    Ok(QuadResult {
        value: total,
        lambda_max: b,
        nodes: eng.evals,
        error_estimate: err,
        tail_estimate: 0.0,
        rule: None,
    })
}

fn target(cfg: &QuadratureConfig, scale: f64, value: C) -> f64 {
    (cfg.rel_tol * scale.abs().max(value.norm())).max(cfg.abs_tol)
}

fn gauss_panels<F>(f: &F, cfg: &QuadratureConfig, scale: f64, keep_rule: bool) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<C> + Sync,
{
    let mut eng = Panels {
        f,
        rule: GaussLegendre::cached(cfg.n_nodes),
        max_depth: cfg.max_depth,
        evals: 0,
        keep_rule,
        rule_out: Vec::new(),
    };
    let mut total = C::new(0.0, 0.0);
    let mut err_total = 0.0;
    let mut a = 0.0f64;
    let mut width = 1.0f64;
    let mut first = true;
    loop {
        let b = (a + width).min(cfg.lambda_max);
        // The running value is only a rough scale before the first panel.
        let tol_now = target(cfg, scale, total);
        let (val, err) = eng.panel(a, b, 0.02 * tol_now, 0)?;
        total += val;
        err_total += err;
        let fb = f(b)?;
        eng.evals += 1;
        let tail = fb.norm() * b;
        let tol_now = target(cfg, scale, total);
        if !first && b >= 4.0 && tail <= 0.5 * tol_now && val.norm() <= tol_now {
            return finish(eng, total, b, err_total, tail, tol_now);
        }
        if b >= cfg.lambda_max {
            if tail <= 0.5 * tol_now {
                return finish(eng, total, b, err_total, tail, tol_now);
            }
            return Err(PricingError::QuadratureFailure(format!(
                "tail bound {tail:.3e} above tolerance {tol_now:.3e} at lambda_max = {b}"
            )));
        }
        if !first {
            width *= 2.0;
        }
        first = false;
        a = b;
    }
}

fn finish<F>(eng: Panels<'_, F>, total: C, b: f64, err: f64, tail: f64, tol: f64) -> Result<QuadResult> {
    if err > tol {
        return Err(PricingError::QuadratureFailure(format!(
            "panel error estimate {err:.3e} above tolerance {tol:.3e}"
        )));
    }
    Ok(QuadResult {
        value: total,
        lambda_max: b,
        nodes: eng.evals,
        error_estimate: err,
        tail_estimate: tail,
        rule: if eng.keep_rule { Some(eng.rule_out) } else { None },
    })
}

/// Truncated trapezoid `h (f(0)/2 + sum_k f(k h))` with step halving and
/// doubling truncation. Only the real part is meaningful: for integrands with
/// `f(-x) = conj(f(x))` it is the trapezoid rule on the whole line, which
/// converges geometrically, whereas the imaginary part carries the endpoint
/// error of a half-line rule.
fn trapezoid<F>(f: &F, cfg: &QuadratureConfig, scale: f64, keep_rule: bool) -> Result<QuadResult>
where
    F: Fn(f64) -> Result<C> + Sync,
{
    let mut evals = 0usize;
    let mut lmax = 16.0f64;
    let mut h = 0.25f64;
    let eval = |pts: &[f64], evals: &mut usize| -> Result<Vec<C>> {
        *evals += pts.len();
        pts.par_iter().map(|&x| f(x)).collect()
    };
    loop {
        let n = (lmax / h).round() as usize;
        let pts: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let vals = eval(&pts, &mut evals)?;
        let mut terms = vals.clone();
        terms[0] *= 0.5;
        let coarse = pairwise_sum(&terms) * h;
        // halve the step: only odd nodes are new
        let mid: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * h).collect();
        let mvals = eval(&mid, &mut evals)?;
        let fine = 0.5 * coarse + pairwise_sum(&mvals) * (0.5 * h);
        let tail = vals[n].norm() * lmax;
        let tol = target(cfg, scale, fine);
        let step_err = (fine.re - coarse.re).abs();
        if step_err <= tol && tail <= 0.5 * tol {
            let rule = keep_rule.then(|| {
                let hh = 0.5 * h;
                (0..=2 * n)
                    .map(|k| (k as f64 * hh, if k == 0 { 0.5 * hh } else { hh }))
                    .collect()
            });
            return Ok(QuadResult {
                value: fine,
                lambda_max: lmax,
                nodes: evals,
                error_estimate: step_err,
                tail_estimate: tail,
                rule,
            });
        }
        if tail > 0.5 * tol {
            lmax *= 2.0;
        }
        if step_err > tol {
            h *= 0.5;
        }
        if lmax > cfg.lambda_max || evals > 50_000_000 {
            return Err(PricingError::QuadratureFailure(format!(
                "trapezoid did not converge (tail {tail:.3e}, step error {step_err:.3e}, tolerance {tol:.3e})"
            )));
        }
    }
}

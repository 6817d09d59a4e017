//! Generalized Riccati system
//!
//! ```text
//! Phi' = F(Psi),            Phi(0) = 0
//! Psi' = R(Psi) + v Lambda, Psi(0) = u
//! ```
//!
//! integrated with an embedded Dormand-Prince 5(4) pair over complex state
//! vectors. Accepted steps keep enough data for continuous output of order 4.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::affine_model::AffineModelSpec;
use crate::error::{PricingError, Result};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Blow-up is declared once `|Psi|` exceeds this multiple of the natural
/// scale of the problem (see [`blowup_threshold`]).
pub const BLOWUP_FACTOR: f64 = 1e6;
/// Smallest admissible step relative to the horizon.
pub const MIN_STEP_FRACTION: f64 = 1e-12;
/// Domain margin below which the path is considered to have hit the boundary.
pub const BOUNDARY_MARGIN: f64 = 1e-8;
const MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PathStatus {
    Complete,
    BlowUp(f64),
    BoundaryHit(f64),
}

impl PathStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, PathStatus::Complete)
    }

    pub fn event_time(&self) -> Option<f64> {
        match *self {
            PathStatus::Complete => None,
            PathStatus::BlowUp(t) | PathStatus::BoundaryHit(t) => Some(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Lifetime {
    InDomain,
    Exits(f64),
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous-output coefficients.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step as seen by observers.
pub(crate) struct Step<'a> {
    pub t0: f64,
    pub h: f64,
    pub y1: &'a [C],
    pub f0: &'a [C],
    pub f1: &'a [C],
    pub dense: &'a [C],
}

pub(crate) struct Outcome {
    pub status: PathStatus,
    pub t: f64,
    pub y: Vec<C>,
}

fn scaled_norm(v: &[C], y: &[C], tol: f64) -> f64 {
    v.iter()
        .zip(y)
        .map(|(a, b)| a.norm() / (tol * (1.0 + b.norm())))
        .fold(0.0, f64::max)
}

/// Adaptive DOPRI5 driver. `rhs` returns `false` when a stage leaves the
/// domain of the vector field; `monitor` may stop integration after an
/// accepted step; `stops` are times the integrator must land on exactly.
pub(crate) fn integrate<R, M, O>(
    y0: &[C],
    horizon: f64,
    tol: f64,
    stops: &[f64],
    mut rhs: R,
    mut monitor: M,
    mut observer: O,
) -> Outcome
where
    R: FnMut(&[C], &mut [C]) -> bool,
    M: FnMut(f64, &[C], &[C]) -> Option<PathStatus>,
    O: FnMut(&Step),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if horizon <= 0.0 {
        return Outcome {
            status: PathStatus::Complete,
            t: 0.0,
            y,
        };
    }
    let mut k1 = vec![ZERO; n];
    let mut k2 = vec![ZERO; n];
    let mut k3 = vec![ZERO; n];
    let mut k4 = vec![ZERO; n];
    let mut k5 = vec![ZERO; n];
    let mut k6 = vec![ZERO; n];
    let mut k7 = vec![ZERO; n];
    let mut ys = vec![ZERO; n];
    let mut y1 = vec![ZERO; n];
    let mut err = vec![ZERO; n];
    let mut dense = vec![ZERO; n];

    if !rhs(&y, &mut k1) {
        return Outcome {
            status: PathStatus::BoundaryHit(0.0),
            t: 0.0,
            y,
        };
    }

    let h_min = MIN_STEP_FRACTION * horizon;
    let mut stop_iter = stops
        .iter()
        .copied()
        .filter(|&s| s > 0.0 && s < horizon)
        .collect::<Vec<_>>();
    stop_iter.sort_by(|a, b| a.partial_cmp(b).unwrap());
    stop_iter.dedup();
    stop_iter.push(horizon);
    let mut next_stop = 0usize;

    // Initial step size.
    let mut h = {
        let d0 = scaled_norm(&y, &y, tol);
        let d1 = scaled_norm(&k1, &y, tol);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(horizon);
        for i in 0..n {
            ys[i] = y[i] + h0 * k1[i];
        }
        let h1 = if rhs(&ys, &mut k2) {
            for i in 0..n {
                err[i] = (k2[i] - k1[i]) / h0;
            }
            let d2 = scaled_norm(&err, &y, tol);
            let dm = d1.max(d2);
            if dm <= 1e-15 {
                (h0 * 1e-3).max(1e-6)
            } else {
                (0.01 / dm).powf(0.2)
            }
        } else {
            h0 * 0.01
        };
        // tiny nonzero states give a vanishing d0 / d1 estimate; rejections handle a too-large start
        (100.0 * h0).min(h1).max(1e-6 * horizon).min(horizon)
    };

    let mut t = 0.0;
    let mut last_fail_domain = false;
    let mut rejected = false;
    let mut steps = 0usize;

    loop {
        let target = stop_iter[next_stop];
        let mut h_step = h;
        let mut lands = false;
        if t + h_step >= target - 1e-14 * target.max(1.0) {
            h_step = target - t;
            lands = true;
        }
        if h_step < h_min && !lands {
            let status = if last_fail_domain {
                PathStatus::BoundaryHit(t)
            } else {
                PathStatus::BlowUp(t)
            };
            return Outcome { status, t, y };
        }
        steps += 1;
        if steps > MAX_STEPS {
            return Outcome {
                status: PathStatus::BlowUp(t),
                t,
                y,
            };
        }

        let mut ok = true;
        macro_rules! stage {
            ($out:expr, $($c:expr, $k:expr),+) => {
                if ok {
                    for i in 0..n {
                        ys[i] = y[i] $(+ h_step * $c * $k[i])+;
                    }
                    ok = rhs(&ys, &mut $out);
                }
            };
        }
        stage!(k2, A21, k1);
        stage!(k3, A31, k1, A32, k2);
        stage!(k4, A41, k1, A42, k2, A43, k3);
        stage!(k5, A51, k1, A52, k2, A53, k3, A54, k4);
        stage!(k6, A61, k1, A62, k2, A63, k3, A64, k4, A65, k5);
        if ok {
            for i in 0..n {
                y1[i] = y[i]
                    + h_step * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            ok = rhs(&y1, &mut k7);
        }
        if !ok {
            last_fail_domain = true;
            rejected = true;
            h = h_step * 0.25;
            continue;
        }
        for i in 0..n {
            err[i] = h_step
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let mut e = 0.0f64;
        for i in 0..n {
            let sc = tol * (1.0 + y[i].norm().max(y1[i].norm()));
            e = e.max(err[i].norm() / sc);
        }
        if !e.is_finite() {
            last_fail_domain = false;
            rejected = true;
            h = h_step * 0.25;
            continue;
        }
        if e > 1.0 {
            last_fail_domain = false;
            rejected = true;
            h = h_step * (0.9 * e.powf(-0.2)).max(0.2);
            continue;
        }

        for i in 0..n {
            dense[i] = h_step
                * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let t_new = if lands { target } else { t + h_step };
        observer(&Step {
            t0: t,
            h: t_new - t,
            y1: &y1,
            f0: &k1,
            f1: &k7,
            dense: &dense,
        });
        t = t_new;
        std::mem::swap(&mut y, &mut y1);
        std::mem::swap(&mut k1, &mut k7);
        last_fail_domain = false;

        if let Some(status) = monitor(t, &y, &k1) {
            return Outcome { status, t, y };
        }
        if lands {
            next_stop += 1;
            if next_stop == stop_iter.len() {
                return Outcome {
                    status: PathStatus::Complete,
                    t,
                    y,
                };
            }
        }
        let mut fac = if e == 0.0 { 5.0 } else { 0.9 * e.powf(-0.2) };
        fac = fac.clamp(0.2, 5.0);
        if rejected {
            fac = fac.min(1.0);
        }
        rejected = false;
        if !lands || h_step >= h {
            h = h_step * fac;
        }
    }
}

/// Threshold on `max |Psi_i|` above which a solution counts as exploded.
pub fn blowup_threshold(model: &AffineModelSpec, u: &[C], v: C, horizon: f64) -> f64 {
    let un = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let ln = model.lambda().iter().map(|l| l.abs()).fold(0.0, f64::max);
    BLOWUP_FACTOR * (1.0 + un + v.norm() * ln * horizon.max(1.0))
}

fn riccati_rhs<'a>(model: &'a AffineModelSpec, v: C) -> impl FnMut(&[C], &mut [C]) -> bool + 'a {
    let d = model.dim();
    let lam = model.lambda().to_vec();
    move |y: &[C], out: &mut [C]| {
        let (phi_out, psi_out) = out.split_at_mut(1);
        match model.characteristics(&y[1..=d], &mut psi_out[..d]) {
            Some(f) => {
                phi_out[0] = f;
                for i in 0..d {
                    psi_out[i] += v * lam[i];
                }
                true
            }
            None => false,
        }
    }
}

fn riccati_monitor<'a>(
    model: &'a AffineModelSpec,
    threshold: f64,
) -> impl FnMut(f64, &[C], &[C]) -> Option<PathStatus> + 'a {
    let d = model.dim();
    let mut re = vec![0.0; d];
    move |t: f64, y: &[C], f: &[C]| {
        let psi = &y[1..=d];
        let norm = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if norm > threshold || !norm.is_finite() {
            let rate = f[1..=d].iter().map(|z| z.norm()).fold(0.0, f64::max);
            let t_est = if rate > 0.0 && norm.is_finite() { t + norm / rate } else { t };
            return Some(PathStatus::BlowUp(t_est));
        }
        for i in 0..d {
            re[i] = psi[i].re;
        }
        let margin = model.domain_margin(&re);
        if margin < BOUNDARY_MARGIN {
            return Some(PathStatus::BoundaryHit(t));
        }
        None
    }
}

fn check_initial(model: &AffineModelSpec, u: &[C], tol: f64) -> Result<()> {
    if u.len() != model.dim() {
        return Err(PricingError::InvalidInput(format!(
            "initial condition has length {}, model dimension is {}",
            u.len(),
            model.dim()
        )));
    }
    if !(tol > 0.0 && tol <= 1e-4) {
        return Err(PricingError::InvalidInput(format!(
            "solver tolerance must lie in (0, 1e-4], got {tol}"
        )));
    }
    let re: Vec<f64> = u.iter().map(|z| z.re).collect();
    let margin = model.domain_margin(&re);
    if margin <= 0.0 {
        return Err(PricingError::DomainViolation(format!(
            "initial condition Re(u) = {re:?} lies outside the interior of the domain"
        )));
    }
    Ok(())
}

/// Dense-output solution of the Riccati system.
#[derive(Debug, Clone)]
pub struct RiccatiPath {
    pub u0: Vec<C>,
    pub v: C,
    pub grid: Vec<f64>,
    pub phi: Vec<C>,
    /// Row-major: `psi[k * d + i]` is component `i` at grid node `k`.
    pub psi: Vec<C>,
    pub status: PathStatus,
    pub tol: f64,
    dim: usize,
    // per node state derivative and per interval continuous-output data
    deriv: Vec<C>,
    dense: Vec<C>,
}

impl RiccatiPath {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Last time covered by the path.
    pub fn end_time(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn psi_at_node(&self, k: usize) -> &[C] {
        &self.psi[k * self.dim..(k + 1) * self.dim]
    }

    pub fn terminal(&self) -> (C, Vec<C>) {
        let k = self.grid.len() - 1;
        (self.phi[k], self.psi_at_node(k).to_vec())
    }

    fn node_state(&self, k: usize) -> impl Iterator<Item = C> + '_ {
        std::iter::once(self.phi[k]).chain(self.psi_at_node(k).iter().copied())
    }

    /// Evaluate `(Phi(t), Psi(t))` for `t` in `[0, end_time]`.
    pub fn at(&self, t: f64) -> Option<(C, Vec<C>)> {
        let end = self.end_time();
        if !(0.0..=end).contains(&t) {
            return None;
        }
        let n = self.dim + 1;
        let k = match self.grid.binary_search_by(|g| g.partial_cmp(&t).unwrap()) {
            Ok(k) => {
                return Some((self.phi[k], self.psi_at_node(k).to_vec()));
            }
            Err(k) => k - 1,
        };
        let h = self.grid[k + 1] - self.grid[k];
        let th = (t - self.grid[k]) / h;
        let th1 = 1.0 - th;
        let y0: Vec<C> = self.node_state(k).collect();
        let y1: Vec<C> = self.node_state(k + 1).collect();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let f0 = self.deriv[k * n + i];
            let f1 = self.deriv[(k + 1) * n + i];
            let r2 = y1[i] - y0[i];
            let r3 = h * f0 - r2;
            let r4 = r2 - h * f1 - r3;
            let r5 = self.dense[k * n + i];
            out.push(y0[i] + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5))));
        }
        let phi = out[0];
        Some((phi, out[1..].to_vec()))
    }

    /// Dump the path as CSV: `t, phi_re, phi_im, psi1_re, psi1_im, ...`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "phi_re".into(), "phi_im".into()];
        for i in 1..=self.dim {
            header.push(format!("psi{i}_re"));
            header.push(format!("psi{i}_im"));
        }
        wr.write_record(&header)?;
        for (k, t) in self.grid.iter().enumerate() {
            let mut row = vec![format!("{t:.17e}")];
            row.push(format!("{:.17e}", self.phi[k].re));
            row.push(format!("{:.17e}", self.phi[k].im));
            for z in self.psi_at_node(k) {
                row.push(format!("{:.17e}", z.re));
                row.push(format!("{:.17e}", z.im));
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Solve over `[0, horizon]` keeping the full dense path.
pub fn solve(model: &AffineModelSpec, u: &[C], v: C, horizon: f64, tol: f64) -> Result<RiccatiPath> {
    solve_with_stops(model, u, v, horizon, tol, &[])
}

/// As [`solve`], with grid nodes forced at every time in `stops`.
pub fn solve_with_stops(
    model: &AffineModelSpec,
    u: &[C],
    v: C,
    horizon: f64,
    tol: f64,
    stops: &[f64],
) -> Result<RiccatiPath> {
    check_initial(model, u, tol)?;
    if !(horizon > 0.0) {
        return Err(PricingError::InvalidInput(format!("horizon must be positive, got {horizon}")));
    }
    let d = model.dim();
    let n = d + 1;
    let mut y0 = vec![ZERO; n];
    y0[1..].copy_from_slice(u);
    let mut grid = vec![0.0];
    let mut phi = vec![ZERO];
    let mut psi = u.to_vec();
    let mut deriv = Vec::new();
    let mut dense = Vec::new();
    let mut first = true;
    let outcome = integrate(
        &y0,
        horizon,
        tol,
        stops,
        riccati_rhs(model, v),
        riccati_monitor(model, blowup_threshold(model, u, v, horizon)),
        |s: &Step| {
            if first {
                deriv.extend_from_slice(s.f0);
                first = false;
            }
            grid.push(s.t0 + s.h);
            phi.push(s.y1[0]);
            psi.extend_from_slice(&s.y1[1..]);
            deriv.extend_from_slice(s.f1);
            dense.extend_from_slice(s.dense);
        },
    );
    if first {
        // no step was accepted; keep derivative slot for node 0
        deriv.extend(std::iter::repeat(ZERO).take(n));
    }
    Ok(RiccatiPath {
        u0: u.to_vec(),
        v,
        grid,
        phi,
        psi,
        status: outcome.status,
        tol,
        dim: d,
        deriv,
        dense,
    })
}

/// Terminal values of a solve without storing the path.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminal {
    pub phi: C,
    pub psi: Vec<C>,
    pub status: PathStatus,
    pub t_end: f64,
}

/// Integrate to `horizon` (which may be zero) and return only the end point.
pub fn solve_terminal(model: &AffineModelSpec, u: &[C], v: C, horizon: f64, tol: f64) -> Result<Terminal> {
    check_initial(model, u, tol)?;
    if horizon < 0.0 {
        return Err(PricingError::InvalidInput(format!("horizon must be nonnegative, got {horizon}")));
    }
    let d = model.dim();
    let mut y0 = vec![ZERO; d + 1];
    y0[1..].copy_from_slice(u);
    let out = integrate(
        &y0,
        horizon,
        tol,
        &[],
        riccati_rhs(model, v),
        riccati_monitor(model, blowup_threshold(model, u, v, horizon)),
        |_: &Step| {},
    );
    Ok(Terminal {
        phi: out.y[0],
        psi: out.y[1..].to_vec(),
        status: out.status,
        t_end: out.t,
    })
}

/// Default tolerance for lifetime probes.
pub const PROBE_TOL: f64 = 1e-10;

/// Does the real solution started at `(u_real, v_real)` stay inside the
/// interior domain through `horizon`?
pub fn lifetime_probe(model: &AffineModelSpec, u_real: &[f64], v_real: f64, horizon: f64) -> Lifetime {
    let u: Vec<C> = u_real.iter().map(|&x| C::new(x, 0.0)).collect();
    match solve_terminal(model, &u, C::new(v_real, 0.0), horizon.max(0.0), PROBE_TOL) {
        Ok(term) => match term.status {
            PathStatus::Complete => Lifetime::InDomain,
            PathStatus::BlowUp(t) | PathStatus::BoundaryHit(t) => Lifetime::Exits(t),
        },
        Err(_) => Lifetime::Exits(0.0),
    }
}

/// `max(|Phi(s+t) - Phi(t) - Phi(s; Psi(t))|, |Psi(s+t) - Psi(s; Psi(t))|)`.
pub fn semiflow_residual(
    model: &AffineModelSpec,
    u: &[C],
    v: C,
    s: f64,
    t: f64,
    tol: f64,
) -> Result<f64> {
    if s < 0.0 || t < 0.0 {
        return Err(PricingError::InvalidInput("semiflow times must be nonnegative".into()));
    }
    let full = solve_terminal(model, u, v, s + t, tol)?;
    let first = solve_terminal(model, u, v, t, tol)?;
    if !full.status.is_complete() || !first.status.is_complete() {
        return Err(PricingError::DomainViolation(format!(
            "semiflow times exceed the solution lifetime ({:?})",
            full.status
        )));
    }
    let second = solve_terminal(model, &first.psi, v, s, tol)?;
    if !second.status.is_complete() {
        return Err(PricingError::DomainViolation("restarted solution left the domain".into()));
    }
    let mut res = (full.phi - first.phi - second.phi).norm();
    for (a, b) in full.psi.iter().zip(&second.psi) {
        res = res.max((a - b).norm());
    }
    Ok(res)
}

/// Terminal values of `(Phi, Psi)` together with their derivatives in `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTerminal {
    pub phi: C,
    pub psi: Vec<C>,
    pub phi_v: C,
    pub psi_v: Vec<C>,
    pub status: PathStatus,
}

/// Forward sensitivity system
/// `Phi_v' = <grad F(Psi), Psi_v>`, `Psi_v' = DR(Psi) Psi_v + Lambda`.
pub fn solve_v_sensitivity(
    model: &AffineModelSpec,
    u: &[C],
    v: C,
    horizon: f64,
    tol: f64,
) -> Result<SensitivityTerminal> {
    check_initial(model, u, tol)?;
    let d = model.dim();
    let n = 2 * (d + 1);
    let mut y0 = vec![ZERO; n];
    y0[1..=d].copy_from_slice(u);
    let lam = model.lambda().to_vec();
    let mut grad = vec![ZERO; d];
    let mut jac = vec![ZERO; d * d];
    let mut base = riccati_rhs(model, v);
    let rhs = |y: &[C], out: &mut [C]| {
        if !base(&y[..=d], &mut out[..=d]) {
            return false;
        }
        let psi = &y[1..=d];
        let psi_v = &y[d + 2..];
        model.derivatives_unchecked(psi, &mut grad, &mut jac);
        let mut pv = ZERO;
        for j in 0..d {
            pv += grad[j] * psi_v[j];
        }
        out[d + 1] = pv;
        for i in 0..d {
            let mut acc = C::new(lam[i], 0.0);
            for j in 0..d {
                acc += jac[i * d + j] * psi_v[j];
            }
            out[d + 2 + i] = acc;
        }
        true
    };
    let mut inner = riccati_monitor(model, blowup_threshold(model, u, v, horizon));
    let monitor = |t: f64, y: &[C], f: &[C]| inner(t, &y[..=d], &f[..=d]);
    let out = integrate(&y0, horizon, tol, &[], rhs, monitor, |_: &Step| {});
    Ok(SensitivityTerminal {
        phi: out.y[0],
        psi: out.y[1..=d].to_vec(),
        phi_v: out.y[d + 1],
        psi_v: out.y[d + 2..].to_vec(),
        status: out.status,
    })
}

use affine_rfr::fourier_pricing::{damping_strip, price_option, OptionKind, OptionSpec, OptionStyle};
use affine_rfr::futures::{futures_1m_ode, futures_1m_transform, futures_rate, FuturesKind, FuturesSpec};
use affine_rfr::fwd_measure_pricing::{price_caplet_by_distribution, price_caplet_gaussian, InversionConfig};
use affine_rfr::mc_oracle::{mc_price, simulate, McPayoff};
use affine_rfr::riccati;
use affine_rfr::MarketState;
use clap::ValueEnum;
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::Session;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Suite {
    Parity,
    Jensen,
    WIndependence,
    Semiflow,
    McAgreement,
    Routes,
}

/// One line of the report: `value <= limit` passes.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub check: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

fn check(suite: &'static str, name: impl Into<String>, value: f64, limit: f64) -> Check {
    Check {
        suite,
        check: name.into(),
        value,
        limit,
        pass: value <= limit,
    }
}

fn grid() -> Vec<(f64, f64, f64)> {
    let mut g = Vec::new();
    for s in [0.5, 1.0, 2.0] {
        for d in [0.25, 0.5, 1.0] {
            for k in [0.02, 0.03, 0.04] {
                g.push((s, s + d, k));
            }
        }
    }
    g
}

pub fn run_suite(session: &Session, suite: Suite) -> Result<Vec<Check>, CliError> {
    match suite {
        Suite::Parity => parity(session),
        Suite::Jensen => jensen(session),
        Suite::WIndependence => w_independence(session),
        Suite::Semiflow => semiflow(session),
        Suite::McAgreement => mc_agreement(session),
        Suite::Routes => routes(session),
    }
}

fn price(session: &Session, spec: &OptionSpec) -> Result<f64, CliError> {
    let st = MarketState::new(0.0, session.x0.clone());
    Ok(price_option(&session.ctx, &st, spec, None, &session.quad)?.price)
}

fn parity(session: &Session) -> Result<Vec<Check>, CliError> {
    let st = MarketState::new(0.0, session.x0.clone());
    let mut worst = [0.0f64; 2];
    for (s, t, k) in grid() {
        let rhs = session.ctx.zcb_price(&st, s)? - (1.0 + (t - s) * k) * session.ctx.zcb_price(&st, t)?;
        for (i, style) in [OptionStyle::ForwardLooking, OptionStyle::BackwardLooking].into_iter().enumerate() {
            let c = price(session, &OptionSpec::caplet(style, s, t, k))?;
            let f = price(session, &OptionSpec::floorlet(style, s, t, k))?;
            worst[i] = worst[i].max((c - f - rhs).abs());
        }
    }
    Ok(vec![
        check("parity", "forward cap - floor vs bonds", worst[0], 1e-10),
        check("parity", "backward cap - floor vs bonds", worst[1], 1e-10),
    ])
}

fn jensen(session: &Session) -> Result<Vec<Check>, CliError> {
    let mut worst = [f64::NEG_INFINITY; 2];
    for (s, t, k) in grid() {
        for (i, kind) in [OptionKind::Caplet, OptionKind::Floorlet].into_iter().enumerate() {
            let f = price(session, &OptionSpec::new(OptionStyle::ForwardLooking, kind, s, t, k))?;
            let b = price(session, &OptionSpec::new(OptionStyle::BackwardLooking, kind, s, t, k))?;
            worst[i] = worst[i].max(f - b);
        }
    }
    // equality holds without randomness; allow rounding of the two quadratures
    let slack = 1e-12;
    Ok(vec![
        check("jensen", "max forward - backward caplet", worst[0], slack),
        check("jensen", "max forward - backward floorlet", worst[1], slack),
    ])
}

const W_CANDIDATES: [f64; 8] = [-1.5, -1.0, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75];

fn w_independence(session: &Session) -> Result<Vec<Check>, CliError> {
    let st = MarketState::new(0.0, session.x0.clone());
    let ctx = &session.ctx;
    let mut out = Vec::new();
    for style in [OptionStyle::ForwardLooking, OptionStyle::BackwardLooking, OptionStyle::TermBasis] {
        let mut worst: f64 = 0.0;
        for (s, t, k) in grid() {
            if style == OptionStyle::TermBasis && k != 0.02 {
                continue;
            }
            let spec = OptionSpec::caplet(style, s, t, if style == OptionStyle::TermBasis { 0.0 } else { k });
            let strip = damping_strip(ctx, &spec, st.t)?;
            let ws: Vec<f64> = W_CANDIDATES.into_iter().filter(|&w| strip.contains(w)).take(5).collect();
            let prices: Vec<f64> = ws
                .iter()
                .map(|&w| price_option(ctx, &st, &spec, Some(w), &session.quad).map(|r| r.price))
                .collect::<Result<_, _>>()?;
            let hi = prices.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = prices.iter().cloned().fold(f64::INFINITY, f64::min);
            let scale = hi.abs().max(lo.abs());
            if scale > 0.0 {
                worst = worst.max((hi - lo) / scale);
            }
        }
        out.push(check("w_independence", format!("{style:?} caplet relative spread"), worst, 1e-8));
    }
    Ok(out)
}

fn semiflow(session: &Session) -> Result<Vec<Check>, CliError> {
    let model = &session.ctx.model;
    let tol = session.ctx.tol;
    let mut rng = ChaCha8Rng::seed_from_u64(session.mc.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let u: Vec<C> = (0..model.dim())
            .map(|i| {
                let hi = if i < model.m() { 0.5 } else { 1.0 };
                C::new(rng.random_range(-1.0..hi), rng.random_range(-2.0..2.0))
            })
            .collect();
        let v = C::new(rng.random_range(-1.0..0.3), rng.random_range(-2.0..2.0));
        let s = rng.random_range(0.0..5.0);
        let t = rng.random_range(0.0..5.0);
        worst = worst.max(riccati::semiflow_residual(model, &u, v, s, t, tol)?);
    }
    Ok(vec![check("semiflow", "max residual over 100 draws", worst, 10.0 * tol)])
}

fn mc_agreement(session: &Session) -> Result<Vec<Check>, CliError> {
    let ctx = &session.ctx;
    let (s, t, k) = (1.0, 1.25, 0.03);
    let st = MarketState::new(0.0, session.x0.clone());
    let ens = simulate(&ctx.model, &session.x0, 0.0, &[s, t], &session.mc)?;
    let mut out = Vec::new();
    let mut push = |name: String, exact: f64, payoff: McPayoff| -> Result<(), CliError> {
        let est = mc_price(&ens, ctx, &session.x0, &payoff)?;
        let z = if est.stderr > 0.0 {
            (est.value - exact).abs() / est.stderr
        } else if (est.value - exact).abs() <= 1e-12 * exact.abs().max(1e-12) {
            0.0
        } else {
            f64::INFINITY
        };
        out.push(check("mc_agreement", format!("{name} |z|"), z, 3.0));
        Ok(())
    };
    for style in [OptionStyle::ForwardLooking, OptionStyle::BackwardLooking, OptionStyle::TermBasis] {
        let spec = OptionSpec::caplet(style, s, t, if style == OptionStyle::TermBasis { 0.0 } else { k });
        let exact = price_option(ctx, &st, &spec, None, &session.quad)?.price;
        push(format!("{style:?} caplet"), exact, McPayoff::Option(spec))?;
    }
    for kind in [FuturesKind::OneMonth, FuturesKind::ThreeMonth] {
        let spec = FuturesSpec::new(kind, s, t);
        push(format!("{} futures", kind.label()), futures_rate(ctx, &st, &spec)?, McPayoff::Futures(spec))?;
    }
    Ok(out)
}

fn routes(session: &Session) -> Result<Vec<Check>, CliError> {
    let ctx = &session.ctx;
    let st = MarketState::new(0.0, session.x0.clone());
    let mut fut: f64 = 0.0;
    for s in [0.5, 1.0, 2.0] {
        for d in [1.0 / 12.0, 0.25, 1.0] {
            let a = futures_1m_transform(ctx, &st, s, s + d)?;
            let b = futures_1m_ode(ctx, &st, s, s + d)?;
            fut = fut.max((a - b).abs());
        }
    }
    let mut out = vec![check("routes", "1M transform vs ode (absolute)", fut, 1e-10)];
    let cfg = InversionConfig {
        quad: session.quad,
        prob_tol: 1e-9,
    };
    let gaussian = ctx.model.m() == 0 && !ctx.model.has_jumps();
    let mut dist: f64 = 0.0;
    let mut gauss: f64 = 0.0;
    for (s, t, k) in [(1.0, 1.25, 0.02), (1.0, 1.25, 0.04), (2.0, 3.0, 0.03)] {
        for style in [OptionStyle::ForwardLooking, OptionStyle::BackwardLooking] {
            let spec = OptionSpec::caplet(style, s, t, k);
            let f = price_option(ctx, &st, &spec, None, &session.quad)?.price;
            let scale = f.abs().max(1e-300);
            let d = price_caplet_by_distribution(ctx, &st, &spec, &cfg)?.price;
            dist = dist.max((d - f).abs() / scale);
            if gaussian {
                let g = price_caplet_gaussian(ctx, &st, &spec)?.price;
                gauss = gauss.max((g - f).abs() / scale);
            }
        }
    }
    out.push(check("routes", "distribution vs fourier (relative)", dist, 1e-6));
    if gaussian {
        out.push(check("routes", "gaussian vs fourier (relative)", gauss, 1e-8));
    }
    Ok(out)
}

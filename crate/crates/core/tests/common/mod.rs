#![allow(dead_code)]

use affine_rfr::{catalog, fit_ell, AffineModelSpec, CurveSpec, MarketState, ModelFamily, PricingContext};

pub fn model(fam: ModelFamily) -> AffineModelSpec {
    let p: &[(&str, f64)] = match fam {
        ModelFamily::Vasicek => &[("kappa", 0.1), ("sigma", 0.01)],
        ModelFamily::Cir => &[("kappa", 0.5), ("theta", 0.03), ("sigma", 0.1)],
        ModelFamily::CirExpJumps => &[
            ("kappa", 0.5),
            ("theta", 0.03),
            ("sigma", 0.1),
            ("jump_intensity", 1.0),
            ("gamma", 50.0),
        ],
        ModelFamily::TwoFactorCirOu => &[
            ("kappa_cir", 0.5),
            ("theta_cir", 0.02),
            ("sigma_cir", 0.08),
            ("kappa_ou", 0.2),
            ("sigma_ou", 0.008),
        ],
        ModelFamily::Deterministic => &[],
    };
    catalog(fam, p).unwrap()
}

pub fn x0(fam: ModelFamily) -> Vec<f64> {
    match fam {
        ModelFamily::Vasicek => vec![0.0],
        ModelFamily::Cir | ModelFamily::CirExpJumps => vec![0.03],
        ModelFamily::TwoFactorCirOu => vec![0.02, 0.0],
        ModelFamily::Deterministic => vec![0.0],
    }
}

pub const STOCHASTIC: [ModelFamily; 4] = [
    ModelFamily::Vasicek,
    ModelFamily::Cir,
    ModelFamily::CirExpJumps,
    ModelFamily::TwoFactorCirOu,
];

/// Context with the deterministic shift fitted to a flat 3% curve.
pub fn context(fam: ModelFamily) -> PricingContext {
    let m = model(fam);
    let market: Vec<(f64, f64)> = (1..=80).map(|k| {
        let t = 0.25 * k as f64;
        (t, (-0.03 * t).exp())
    }).collect();
    let curve = fit_ell(&m, &x0(fam), &market).unwrap();
    PricingContext::new(m, curve)
}

pub fn flat_context(fam: ModelFamily, rate: f64) -> PricingContext {
    PricingContext::new(model(fam), CurveSpec::flat(rate))
}

pub fn spot(fam: ModelFamily) -> MarketState {
    MarketState::new(0.0, x0(fam))
}

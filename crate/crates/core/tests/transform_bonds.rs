mod common;

use affine_rfr::{catalog, fit_ell, CurveSpec, MarketState, ModelFamily, PricingContext, PricingError};
use common::{context, flat_context, model, spot, x0, STOCHASTIC};
use num_complex::Complex64 as C;
use proptest::prelude::*;

#[test]
fn deterministic_flat_discount() {
    let ctx = flat_context(ModelFamily::Deterministic, 0.03);
    let p = ctx.zcb_price(&MarketState::new(1.0, vec![0.0]), 3.0).unwrap();
    assert!((p - (-0.06f64).exp()).abs() < 1e-14);
    assert!((p - 0.941765).abs() < 1e-6);
    assert_eq!(ctx.zcb_price(&MarketState::new(1.0, vec![0.0]), 1.0).unwrap(), 1.0);
}

#[test]
fn vasicek_bond_closed_form() {
    let ctx = flat_context(ModelFamily::Vasicek, 0.02);
    let (k, s, tau) = (0.1f64, 0.01f64, 5.0f64);
    let b = (1.0 - (-k * tau).exp()) / k;
    let var = s * s / (k * k) * (tau - b - 0.5 * k * b * b);
    let exact = (-0.02 * tau + 0.5 * var).exp();
    let p = ctx.zcb_price(&MarketState::new(0.0, vec![0.0]), tau).unwrap();
    assert!((p / exact - 1.0).abs() < 1e-8, "{p} vs {exact}");
}

#[test]
fn cir_characteristic_function() {
    let m = model(ModelFamily::Cir);
    let ctx = PricingContext::new(m, CurveSpec::flat(0.0));
    let x = 0.03;
    let (kappa, theta, sigma, t) = (0.5f64, 0.03f64, 0.1f64, 0.5f64);
    let u = C::new(0.0, 1.0);
    // E[e^{u X_t}] for CIR: (1 - u c)^{-2 kappa theta / sigma^2} exp(u e^{-kappa t} x / (1 - u c))
    let c = sigma * sigma * (1.0 - (-kappa * t).exp()) / (2.0 * kappa);
    let d = 1.0 - u * c;
    let exact = d.powf(-2.0 * kappa * theta / (sigma * sigma)) * (u * (-kappa * t).exp() * x / d).exp();
    let got = ctx.affine_transform(&MarketState::new(0.0, vec![x]), t, &[u], C::new(0.0, 0.0)).unwrap();
    assert!((got - exact).norm() / exact.norm() < 1e-8, "{got} vs {exact}");
}

#[test]
fn transform_of_zero_is_one() {
    for fam in ModelFamily::all() {
        let ctx = context(fam);
        let z = vec![C::new(0.0, 0.0); ctx.dim()];
        let v = ctx.affine_transform(&spot(fam), 3.0, &z, C::new(0.0, 0.0)).unwrap();
        assert!((v - 1.0).norm() < 1e-14);
    }
}

#[test]
fn fit_recovers_generating_shift() {
    for fam in STOCHASTIC {
        let ctx = flat_context(fam, 0.02);
        let st = spot(fam);
        let market: Vec<(f64, f64)> = (1..=20).map(|k| {
            let t = 0.5 * k as f64;
            (t, ctx.zcb_price(&st, t).unwrap())
        }).collect();
        let curve = fit_ell(&ctx.model, &x0(fam), &market).unwrap();
        for l in &curve.ell {
            assert!((l - 0.02).abs() < 1e-10, "{fam:?}: {l}");
        }
    }
}

#[test]
fn single_knot_deterministic_fit() {
    let m = model(ModelFamily::Deterministic);
    let curve = fit_ell(&m, &[0.0], &[(1.0, (-0.05f64).exp())]).unwrap();
    assert!((curve.ell[0] - 0.05).abs() < 1e-14);
}

#[test]
fn forward_rate_cases() {
    let ctx = flat_context(ModelFamily::Deterministic, 0.03);
    let f = ctx.forward_looking_rate(&MarketState::new(1.0, vec![0.0]), 1.25).unwrap();
    assert!((f - 0.0075f64.exp_m1() / 0.25).abs() < 1e-13);

    let v = flat_context(ModelFamily::Vasicek, 0.02);
    let st = MarketState::new(1.0, vec![0.01]);
    let f = v.forward_looking_rate(&st, 1.5).unwrap();
    let p = v.zcb_price(&st, 1.5).unwrap();
    assert!((f - (1.0 / p - 1.0) / 0.5).abs() < 1e-13);
}

#[test]
fn bond_assumption_violation_is_reported() {
    let m = catalog(
        ModelFamily::CirExpJumps,
        &[("kappa", 0.5), ("theta", 0.03), ("sigma", 0.1), ("jump_intensity", 1.0), ("gamma", 0.5), ("loading", -1.0)],
    )
    .unwrap();
    let ctx = PricingContext::new(m, CurveSpec::flat(0.03));
    assert!(ctx.check_bond_assumption(0.2).is_ok());
    assert!(matches!(ctx.check_bond_assumption(5.0), Err(PricingError::DomainViolation(_))));
    assert!(matches!(
        ctx.zcb_price(&MarketState::new(0.0, vec![0.03]), 5.0),
        Err(PricingError::DomainViolation(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bond_tower_property(s in 0.1f64..3.0, d in 0.1f64..3.0) {
        // P_0(T) = E[D(0,S) P_S(T)]: the inner bond exponent becomes the initial datum
        for fam in STOCHASTIC {
            let ctx = context(fam);
            let st = spot(fam);
            let t = s + d;
            let (a0, b0) = ctx.a0b0(s, t, C::new(1.0, 0.0)).unwrap();
            let outer = ctx.affine_transform(&st, s, &b0, C::new(-1.0, 0.0)).unwrap();
            let composed = outer.re * (a0.re - ctx.curve.integral(0.0, s)).exp();
            let direct = ctx.zcb_price(&st, t).unwrap();
            prop_assert!((composed / direct - 1.0).abs() < 1e-9, "{:?}: {} vs {}", fam, composed, direct);
        }
    }

    #[test]
    fn bonds_decrease_in_maturity(t1 in 0.1f64..10.0, dt in 0.01f64..5.0) {
        for fam in STOCHASTIC {
            let ctx = context(fam);
            let st = spot(fam);
            prop_assert!(ctx.zcb_price(&st, t1 + dt).unwrap() < ctx.zcb_price(&st, t1).unwrap());
        }
    }
}

mod common;

use affine_rfr::fourier_pricing::{
    damping_strip, kernel_h, payoff_integral_numeric, price_backward_in_accrual, price_backward_option, price_option,
    price_strike_ladder, price_term_basis, OptionKind, OptionSpec, OptionStyle,
};
use affine_rfr::quadrature::QuadratureConfig;
use affine_rfr::{MarketState, ModelFamily, PricingError};
use common::{context, flat_context, spot, x0, STOCHASTIC};
use proptest::prelude::*;

fn quad() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn price(fam: ModelFamily, spec: &OptionSpec) -> f64 {
    price_option(&context(fam), &spot(fam), spec, None, &quad()).unwrap().price
}

#[test]
fn deterministic_examples() {
    let ctx = flat_context(ModelFamily::Deterministic, 0.03);
    let st = MarketState::new(0.0, vec![0.0]);
    let cap = price_option(&ctx, &st, &OptionSpec::caplet(OptionStyle::ForwardLooking, 1.0, 1.25, 0.02), None, &quad()).unwrap();
    let exact = (-0.0375f64).exp() * 0.25 * (0.0075f64.exp_m1() / 0.25 - 0.02);
    assert!((cap.price - exact).abs() < 1e-12);
    let tb = price_option(&ctx, &st, &OptionSpec::caplet(OptionStyle::TermBasis, 1.0, 1.25, 0.0), None, &quad()).unwrap();
    assert!(tb.price.abs() < 1e-14);
    let deep = price_option(&ctx, &st, &OptionSpec::caplet(OptionStyle::ForwardLooking, 1.0, 1.25, 0.5), None, &quad()).unwrap();
    assert!(deep.price.abs() < 1e-14);
}

#[test]
fn in_accrual_limits() {
    let quad = quad();
    for fam in [ModelFamily::Vasicek, ModelFamily::Cir] {
        let ctx = context(fam);
        let spec = OptionSpec::caplet(OptionStyle::BackwardLooking, 1.0, 1.5, 0.03);
        // t = S with nothing accrued is the ordinary backward caplet
        let at_s = MarketState::new(1.0, x0(fam)).with_accrual(1.0);
        let a = price_backward_in_accrual(&ctx, &at_s, &spec, -0.5, &quad).unwrap().price;
        let b = price_backward_option(&ctx, &MarketState::new(1.0, x0(fam)), &spec, -0.5, &quad).unwrap().price;
        assert!((a / b - 1.0).abs() < 1e-9, "{fam:?}: {a} vs {b}");
        // at t = T the payoff is known
        let acc = 1.02;
        let at_t = MarketState::new(1.5, x0(fam)).with_accrual(acc);
        let c = price_backward_in_accrual(&ctx, &at_t, &spec, -0.5, &quad).unwrap().price;
        let intrinsic = (acc - spec.kprime()).max(0.0);
        assert!((c - intrinsic).abs() < 1e-9, "{fam:?}: {c} vs {intrinsic}");
    }
}

#[test]
fn in_accrual_needs_factor() {
    let ctx = context(ModelFamily::Vasicek);
    let spec = OptionSpec::caplet(OptionStyle::BackwardLooking, 1.0, 1.5, 0.03);
    let st = MarketState::new(1.2, vec![0.0]);
    let r = price_backward_in_accrual(&ctx, &st, &spec, -0.5, &quad());
    assert_eq!(r.unwrap_err(), PricingError::MissingAccrualFactor);
}

#[test]
fn term_basis_cap_equals_floor() {
    // (R - F)^+ - (F - R)^+ = R - F has zero value
    for fam in STOCHASTIC {
        let ctx = context(fam);
        let st = spot(fam);
        let cap = OptionSpec::caplet(OptionStyle::TermBasis, 1.0, 1.5, 0.0);
        let c = price_term_basis(&ctx, &st, &cap, -0.5, &quad()).unwrap().price;
        let f = price_term_basis(&ctx, &st, &cap.with_kind(OptionKind::Floorlet), -0.5, &quad()).unwrap().price;
        assert!((c - f).abs() < 1e-11 * c.abs().max(1e-6), "{fam:?}: {c} vs {f}");
        assert!(c > 0.0);
    }
}

#[test]
fn isda_spread_is_a_strike_shift() {
    for style in [OptionStyle::ForwardLooking, OptionStyle::BackwardLooking] {
        let shifted = OptionSpec::caplet(style, 1.0, 1.25, 0.03).with_spread(0.0026161);
        let plain = OptionSpec::caplet(style, 1.0, 1.25, 0.03 - 0.0026161);
        let a = price(ModelFamily::Cir, &shifted);
        let b = price(ModelFamily::Cir, &plain);
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn ladder_matches_single_prices() {
    let strikes = [0.01, 0.02, 0.03, 0.04, 0.05];
    for fam in [ModelFamily::Vasicek, ModelFamily::TwoFactorCirOu] {
        let ctx = context(fam);
        let st = spot(fam);
        for style in [OptionStyle::ForwardLooking, OptionStyle::BackwardLooking] {
            let spec = OptionSpec::caplet(style, 1.0, 1.5, 0.03);
            let ladder = price_strike_ladder(&ctx, &st, &spec, &strikes, Some(-0.5), &quad()).unwrap();
            for (k, r) in strikes.iter().zip(&ladder) {
                let single = price_option(&ctx, &st, &OptionSpec { strike: *k, ..spec }, Some(-0.5), &quad()).unwrap();
                assert!((r.price / single.price - 1.0).abs() < 1e-8, "{fam:?} {style:?} K={k}");
            }
        }
    }
}

#[test]
fn ladder_rejects_term_basis() {
    let ctx = context(ModelFamily::Vasicek);
    let spec = OptionSpec::caplet(OptionStyle::TermBasis, 1.0, 1.5, 0.0);
    assert!(price_strike_ladder(&ctx, &spot(ModelFamily::Vasicek), &spec, &[0.01], None, &quad()).is_err());
}

#[test]
fn damping_errors() {
    let ctx = context(ModelFamily::Cir);
    let st = spot(ModelFamily::Cir);
    let cap = OptionSpec::caplet(OptionStyle::ForwardLooking, 1.0, 1.25, 0.03);
    assert_eq!(price_option(&ctx, &st, &cap, Some(0.0), &quad()).unwrap_err(), PricingError::PoleAtW(0.0));
    assert!(matches!(
        price_option(&ctx, &st, &cap, Some(1.5), &quad()),
        Err(PricingError::DampingOutOfStrip { .. })
    ));
    let strip = damping_strip(&ctx, &cap, 0.0).unwrap();
    assert!(strip.w_minus < -2.0 && strip.w_plus > 1.0);
    assert!(matches!(
        price_option(&ctx, &st, &cap, Some(strip.w_minus - 1.0), &quad()),
        Err(PricingError::DampingOutOfStrip { .. })
    ));
}

#[test]
fn kernel_example_values() {
    let a = kernel_h(-0.5, 0.0, 1.0).unwrap();
    let b = kernel_h(0.5, 0.0, 1.0).unwrap();
    assert!((a.re - 0.2122066).abs() < 1e-7 && a.im == 0.0);
    assert!((b.re + 0.6366198).abs() < 1e-7);
}

#[test]
fn diagnostics_are_reported() {
    let r = price_option(&context(ModelFamily::Cir), &spot(ModelFamily::Cir), &OptionSpec::caplet(OptionStyle::BackwardLooking, 1.0, 1.25, 0.03), None, &quad()).unwrap();
    assert!(r.nodes > 0 && r.lambda_max > 0.0);
    assert!(r.imag_residual.abs() < 1e-10, "{}", r.imag_residual);
    let [lo, hi] = r.strip.unwrap();
    assert!(lo < r.w && r.w < hi);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn caplets_decrease_and_floorlets_increase_in_strike(k in 0.0f64..0.06, dk in 0.001f64..0.02, s in 0.25f64..2.0) {
        for style in [OptionStyle::ForwardLooking, OptionStyle::BackwardLooking] {
            let c1 = price(ModelFamily::Vasicek, &OptionSpec::caplet(style, s, s + 0.25, k));
            let c2 = price(ModelFamily::Vasicek, &OptionSpec::caplet(style, s, s + 0.25, k + dk));
            let f1 = price(ModelFamily::Vasicek, &OptionSpec::floorlet(style, s, s + 0.25, k));
            let f2 = price(ModelFamily::Vasicek, &OptionSpec::floorlet(style, s, s + 0.25, k + dk));
            prop_assert!(c2 < c1 && f2 > f1);
            prop_assert!(c1 >= 0.0 && f1 >= 0.0);
        }
    }

    #[test]
    fn payoff_integral_self_test(x in 0.2f64..3.0, k in 0.2f64..3.0, wi in 0usize..3) {
        let w = [-0.5, 0.5, 1.5][wi];
        let q = quad();
        let num = payoff_integral_numeric(x, k, w, &q).unwrap();
        let exact = match wi {
            0 => (k - x).max(0.0),
            1 => (x - k).max(0.0) - x,
            _ => (x - k).max(0.0),
        };
        prop_assert!((num - exact).abs() <= q.rel_tol * exact.abs().max(k));
    }
}

use latentmpc::psychro::{comfort, dewpoint, humidity_ratio, pmv, ppd, rh_from_wet_bulb, wet_bulb, ComfortAssumptions, ComfortInputs};
use proptest::prelude::*;

#[test]
fn ppd_closed_form() {
    assert_eq!(ppd(0.0), 5.0);
    // 100 − 95·exp(−0.03353 − 0.2179), evaluated once by hand
    assert!((ppd(1.0) - 26.119_650_083_580_567).abs() < 1e-9);
    for k in 0..=60 {
        let v = k as f64 * 0.05;
        assert!((ppd(v) - ppd(-v)).abs() < 1e-12);
    }
}

#[test]
fn comfort_bundles_pmv_and_ppd() {
    let inputs = ComfortAssumptions::default().inputs(25.0, 0.5);
    let c = comfort(&inputs).unwrap();
    assert_eq!(c.pmv, pmv(&inputs).unwrap());
    assert_eq!(c.ppd, ppd(c.pmv));
}

#[test]
fn humid_air_feels_warmer() {
    let a = ComfortAssumptions::default();
    assert!(pmv(&a.inputs(25.0, 0.8)).unwrap() > pmv(&a.inputs(25.0, 0.3)).unwrap());
}

#[test]
fn invalid_comfort_inputs_are_rejected() {
    let bad = ComfortInputs { t_db: 24.0, t_r: 24.0, rh: 0.5, v_air: 0.1, met: -1.0, clo: 0.5 };
    assert!(pmv(&bad).is_err());
}

proptest! {
    #[test]
    fn wet_bulb_between_dewpoint_and_dry_bulb(t in 5.0f64..40.0, rh in 0.1f64..0.99) {
        let wb = wet_bulb(t, rh).unwrap();
        prop_assert!(wb <= t + 1e-9);
        prop_assert!(wb >= dewpoint(t, rh) - 1.0);
        prop_assert!((rh_from_wet_bulb(t, wb).unwrap() - rh).abs() < 1e-6);
    }

    #[test]
    fn humidity_ratio_grows_with_rh(t in 5.0f64..40.0, rh in 0.05f64..0.9) {
        prop_assert!(humidity_ratio(t, rh + 0.05) > humidity_ratio(t, rh));
    }
}

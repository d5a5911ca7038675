use lpcond::distributions::borel_pmf;
use lpcond::exact::{exact_displacement_pmf, ConditioningSpec};
use lpcond::model::{ModelKind, ModelSpec, Response, XLaw};
use lpcond::tails::{
    exponents, hash_lower_bound, n_u, tail_mc_decomposition, wilson_interval, x_tail_check,
    y_tail_bracket,
};

#[test]
fn exponent_formulas() {
    let e = exponents(0.5).unwrap();
    assert!((e.kappa - 0.193_147_18).abs() < 1e-8);
    assert!((e.alpha_proof - e.kappa * 2f64.sqrt()).abs() < 1e-15);
    assert!((e.alpha_proof - 0.27313).abs() < 5e-5);
    assert!(e.alpha_stated < 0.0 && e.alpha_stated_negative);
    assert!((e.beta_stated - (4.0 + 2f64.ln() + 2.0 * 0.5f64.ln() - 1.0)).abs() < 1e-15);
    assert!(exponents(1.0 - 1e-9).unwrap().kappa < 1e-12);
    assert!(exponents(0.0).is_err());
}

#[test]
fn borel_tail_exponent_moves_toward_kappa() {
    let r = x_tail_check(0.5, &[1, 2, 10, 50, 100, 200]).unwrap();
    assert_eq!(r.rows[0].p, 1.0);
    assert!((r.rows[1].p - 0.393_469_34).abs() < 1e-8);
    let first = (r.rows[1].exponent - r.kappa).abs();
    let last = (r.rows[5].exponent - r.kappa).abs();
    assert!(last < first);
    assert!(r
        .rows
        .iter()
        .all(|row| row.p > 0.0 && row.p <= 1.0 && row.exponent.is_finite()));
    assert!(x_tail_check(0.5, &[3, 2]).is_err());
}

#[test]
fn displacement_threshold() {
    assert_eq!(n_u(1.0), 3);
    // the shortest block reaching u has (n_u - 1)(n_u - 2)/2 >= u
    for u in 1..200u64 {
        let l = n_u(u as f64);
        assert!((l - 1) * (l - 2) / 2 >= u, "u={u}");
    }
}

#[test]
fn exact_tail_inside_bracket() {
    let r = y_tail_bracket(0.5, &[1.0, 2.0, 3.0, 5.0, 10.0, 30.0, 100.0, 1000.0], 200).unwrap();
    for row in &r.rows {
        let p = row.p_exact.expect("exact tail available");
        assert!(row.p_lower <= p && p <= row.p_upper, "{row:?}");
    }
    // l = 3 contributes P(X = 3) P(d_{3,2} >= 1) = P(X = 3)/3
    let d32 = exact_displacement_pmf(3, 2).unwrap();
    assert!((d32.prob(1) - 1.0 / 3.0).abs() < 1e-15);
    let l3 = borel_pmf(0.5, 3).unwrap() / 3.0;
    let rest = r.rows[0].p_exact.unwrap() - l3;
    assert!(rest > 0.0 && rest < r.rows[0].p_upper - borel_pmf(0.5, 3).unwrap() + 1e-15);
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(
        text.starts_with("u,p_exact,p_upper,p_lower,exp_exact,exp_upper,exp_lower,kappa_sqrt2\n")
    );
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn construction_bound_small_cases() {
    let b = hash_lower_bound(1).unwrap();
    assert_eq!((b.l, b.k), (2, 1));
    assert!((b.bound - 0.25).abs() < 1e-15);
    assert_eq!(b.exact_at_a, Some(0.0));
    let b = hash_lower_bound(2).unwrap();
    assert_eq!((b.l, b.k), (3, 1));
    assert!((b.bound - 1.0 / 9.0).abs() < 1e-15);
    let b = hash_lower_bound(4).unwrap();
    assert_eq!((b.l, b.k), (3, 2));
    assert!((b.bound - 1.0 / 18.0).abs() < 1e-15);
    for a in 1..=15 {
        let b = hash_lower_bound(a).unwrap();
        assert_eq!(b.holds_at_threshold, Some(true), "a={a}");
        assert_eq!(b.threshold, b.k * (b.l - 1 - b.k.min(b.l - 1)));
    }
    assert!(hash_lower_bound(0).is_err());
}

#[test]
fn wilson_interval_properties() {
    let (lo, hi) = wilson_interval(0, 100, 1.96);
    assert_eq!(lo, 0.0);
    assert!(hi > 0.0 && hi < 0.05);
    let (lo, hi) = wilson_interval(50, 100, 1.96);
    assert!((lo + hi - 1.0).abs() < 1e-12);
}

#[test]
fn impossible_deviation_is_exactly_zero() {
    let model = ModelSpec::new(
        ModelKind::Hashing,
        "h",
        XLaw::Borel { mu: 0.5 },
        Response::Displacement,
    )
    .unwrap();
    let cond = ConditioningSpec::new(5, 10).unwrap();
    let r = tail_mc_decomposition(&model, &cond, 100.0, 1, 1000, 256).unwrap();
    assert!(r.impossible);
    assert_eq!(r.p_hat, 0.0);
    assert_eq!(r.attempts, 0);
}

#[test]
fn small_mc_decomposition_is_reproducible() {
    let model = ModelSpec::new(
        ModelKind::Hashing,
        "h",
        XLaw::Borel { mu: 0.5 },
        Response::Displacement,
    )
    .unwrap();
    let cond = ConditioningSpec::new(20, 40).unwrap();
    let a = tail_mc_decomposition(&model, &cond, 0.5, 3, 200_000, 4096).unwrap();
    let b = tail_mc_decomposition(&model, &cond, 0.5, 3, 200_000, 4096).unwrap();
    assert_eq!(a.exceedances, b.exceedances);
    assert_eq!(a.p_hat, b.p_hat);
    assert!(a.centre_is_exact);
    assert!(a.p_low <= a.p_hat && a.p_hat <= a.p_high);
}

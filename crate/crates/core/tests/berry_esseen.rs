use lpcond::berry_esseen::{
    berry_esseen_report, constant_set, gaussian_integrals, hypothesis_audit, kolmogorov_distance,
    kolmogorov_distance_sample, predicted_moments, smoothing_integral_closed_form,
    smoothing_integral_quadrature, y_prime_transform, Bounds, C0,
};
use lpcond::exact::{exact_conditional_law, ConditioningSpec};
use lpcond::model::{ModelKind, ModelSpec, Response, XLaw, JOINT_TRUNCATION};
use lpcond::normal::{normal_cdf, normal_pdf};
use lpcond::quad::integrate_real;
use lpcond::Pmf;

fn hashing(mu: f64) -> ModelSpec {
    ModelSpec::new(
        ModelKind::Hashing,
        "hashing",
        XLaw::Borel { mu },
        Response::Displacement,
    )
    .unwrap()
}

fn occupancy(lambda: f64) -> ModelSpec {
    ModelSpec::new(
        ModelKind::Occupancy,
        "occupancy",
        XLaw::Poisson { lambda },
        Response::Indicator { k: 0 },
    )
    .unwrap()
}

fn fixtures() -> Vec<ModelSpec> {
    vec![
        occupancy(1.0),
        occupancy(2.5),
        hashing(0.3),
        hashing(0.5),
        ModelSpec::new(
            ModelKind::BoseEinstein,
            "be",
            XLaw::Geometric { p: 0.4 },
            Response::Indicator { k: 0 },
        )
        .unwrap(),
        ModelSpec::new(
            ModelKind::RandomForest,
            "forest",
            XLaw::Borel { mu: 0.4 },
            Response::Indicator { k: 1 },
        )
        .unwrap(),
    ]
}

fn cond(n: u64, m: i64) -> ConditioningSpec {
    ConditioningSpec::new(n, m).unwrap()
}

/// Mean of `Y'`, covariance with `X` and variance by direct summation over
/// the joint table.
fn direct_projection_moments(model: &ModelSpec) -> (f64, f64, f64) {
    let t = model.joint_table(JOINT_TRUNCATION).unwrap();
    let ex: f64 = t.atoms.iter().map(|a| a.p * a.x as f64).sum();
    let ey: f64 = t.atoms.iter().map(|a| a.p * a.y).sum();
    let cov: f64 = t
        .atoms
        .iter()
        .map(|a| a.p * (a.x as f64 - ex) * (a.y - ey))
        .sum();
    let vy: f64 = t.atoms.iter().map(|a| a.p * (a.y - ey).powi(2)).sum();
    (ey, cov, vy)
}

#[test]
fn projection_properties() {
    for model in fixtures() {
        let mo = model.moments().unwrap();
        let yp = y_prime_transform(&model).unwrap();
        let (ey, cov, vy) = direct_projection_moments(&yp);
        assert!(ey.abs() < 1e-10, "{}", model.label);
        assert!(cov.abs() < 1e-10, "{}", model.label);
        assert!(
            (vy - mo.sigma_y.powi(2) * (1.0 - mo.r * mo.r)).abs() < 1e-10,
            "{}",
            model.label
        );
    }
    let e = (-1f64).exp();
    let (_, _, vy) = direct_projection_moments(&y_prime_transform(&occupancy(1.0)).unwrap());
    assert!((vy - (e * (1.0 - e) - e * e)).abs() < 1e-12);
}

#[test]
fn predicted_moment_values() {
    let e = (-1f64).exp();
    let (mean, var) = predicted_moments(&occupancy(1.0), &cond(100, 100)).unwrap();
    assert!((mean - 100.0 * e).abs() < 1e-9);
    assert!((var - 100.0 * (e * (1.0 - e) - e * e)).abs() < 1e-9);
    let (mean, _) = predicted_moments(&occupancy(2.0), &cond(10, 20)).unwrap();
    assert!((mean - 10.0 * (-2f64).exp()).abs() < 1e-9);
}

#[test]
fn normal_cdf_against_quadrature() {
    assert_eq!(normal_cdf(0.0), 0.5);
    let q = 0.5 + integrate_real(normal_pdf, 0.0, 1.96, 1e-14).unwrap();
    assert!((normal_cdf(1.96) - q).abs() < 1e-12);
    assert!((normal_cdf(1.96) - 0.975_002_104_9).abs() < 1e-10);
}

#[test]
fn distance_of_simple_laws() {
    assert_eq!(
        kolmogorov_distance(&Pmf::point_mass(5), 5.0, 2.0).unwrap(),
        0.5
    );
    assert!(kolmogorov_distance(&Pmf::point_mass(5), 5.0, 0.0).is_err());
    let coin = Pmf::from_pairs([(0, 0.5), (1, 0.5)], 0.0).unwrap();
    let d = kolmogorov_distance(&coin, 0.5, 0.5).unwrap();
    assert!((d - (0.5 - normal_cdf(-1.0))).abs() < 1e-15);
    let (d, eps) = kolmogorov_distance_sample(&[0, 1, 0, 1], 0.5, 0.5, 0.05).unwrap();
    assert!((d - (0.5 - normal_cdf(-1.0))).abs() < 1e-15);
    assert!(eps > 0.0);
}

#[test]
fn occupancy_distance_scales_like_inverse_root() {
    let model = occupancy(1.0);
    let d: Vec<f64> = [100u64, 400]
        .iter()
        .map(|&n| {
            let c = cond(n, n as i64);
            let law = exact_conditional_law(&model, &c).unwrap().law;
            let (mean, var) = predicted_moments(&model, &c).unwrap();
            kolmogorov_distance(&law, mean, var.sqrt()).unwrap()
        })
        .collect();
    assert!(d[0] * 10.0 <= 1.0);
    assert!(d[1] * 20.0 <= 1.0);
    assert!(d[1] < d[0]);
}

#[test]
fn gaussian_integrals_closed_forms() {
    let g = gaussian_integrals(1.0).unwrap();
    assert!((g[0].closed_form - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    assert_eq!(g[2].closed_form, 2.0);
    for c in [0.01, 0.0742, 1.0, 4.0] {
        for g in gaussian_integrals(c).unwrap() {
            assert!(
                (g.quadrature / g.closed_form - 1.0).abs() < 1e-8,
                "c={c} {}",
                g.name
            );
        }
    }
    let a = smoothing_integral_closed_form();
    assert!((smoothing_integral_quadrature() / a - 1.0).abs() < 1e-10);
}

#[test]
fn constants_regression_fixture() {
    let b = Bounds {
        c1_tilde: 1.0,
        c1: 1.0,
        c2: 1.0,
        c3_tilde: 1.0,
        c3: 1.0,
        c4: 1.0,
        c5: 0.1,
        c5_tilde: 0.5,
        c6: 0.5,
        eta0: 1.0,
    };
    let c = constant_set(&b).unwrap();
    assert_eq!(c.c0, C0);
    assert!((c.eta - 2.0 / 9.0).abs() < 1e-15);
    assert!((c.epsilon - 2.0 / 9.0).abs() < 1e-15);
    assert_eq!(c.n0, 3);
    assert!((c.big_c1 - C0 * 2.0 * smoothing_integral_closed_form() / 0.5).abs() < 1e-6 * c.big_c1);
    assert!((c.big_c3 - 0.1 * (2.0f64 / 9.0).powi(2) / 2.0).abs() < 1e-15);
    assert!((c.c7 - (2.0 * std::f64::consts::PI).sqrt() * 0.1f64.powf(-1.5)).abs() < 1e-10);
    assert!((c.c8_third - 80.0).abs() < 1e-10);
    assert!(
        (c.big_c / 1.383_932_239_696_893e7 - 1.0).abs() < 1e-9,
        "C = {}",
        c.big_c
    );
    assert_eq!(c.n0_tilde, (4.0 * c.c8 * c.c8).ceil() as u64);
    assert!(constant_set(&Bounds { c6: 1.0, ..b }).is_err());
    assert!(constant_set(&Bounds { c2: -1.0, ..b }).is_err());
}

#[test]
fn audit_reports_model_constants() {
    let a = hypothesis_audit(&occupancy(1.0), &cond(100, 100), 1.0).unwrap();
    assert!((a.bounds.c6 - 0.7628).abs() < 1e-4);
    assert!(a.bounds.c5 > 0.0);
    assert!(a.k_offset.abs() < 1e-9);
    let a = hypothesis_audit(&hashing(0.5), &cond(2, 4), 1.0).unwrap();
    assert!((a.moments.sigma_x - 2.0).abs() < 1e-9);
}

#[test]
fn third_moment_dominates_variance() {
    for model in fixtures() {
        let mo = model.moments().unwrap();
        assert!(mo.sigma_x.powi(2) <= 4.0 * mo.rho_x, "{}", model.label);
    }
}

#[test]
fn hashing_moments_within_c7() {
    let r = berry_esseen_report(&hashing(0.5), &cond(2, 4), 1.0).unwrap();
    assert!(r.moment_gaps.mean_within_c7);
    assert!(r.moment_gaps.var_within_c8);
    assert!(r.constants.big_c.is_finite() && r.constants.big_c > 0.0);
}

#[test]
fn conditional_mean_correction_shrinks() {
    let model = hashing(0.5);
    let ey = model.moments().unwrap().mean_y;
    let gaps: Vec<f64> = (2..=8u64)
        .map(|n| {
            let law = exact_conditional_law(&model, &cond(n, 2 * n as i64))
                .unwrap()
                .law;
            (law.mean() - n as f64 * ey).abs() / n as f64
        })
        .collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

use std::path::PathBuf;

use approx::assert_relative_eq;
use mlz_core::error::Error;
use mlz_core::model::{MlzModel, Relabeling};
use mlz_core::models;
use mlz_core::propagator::{probabilities_with, residual_scan, PropagatorSettings};
use mlz_core::series::{evaluate_at, lz_exact, series_for_model};
use mlz_core::wengine::{pn_finite, pn_limit, w_n_by_recursion, w_n_finite, WSettings};

fn data(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "data", name].iter().collect();
    std::fs::read_to_string(path).unwrap()
}

fn max_abs_diff(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

#[test]
fn pn_limits_reproduce_series() {
    let settings = WSettings::new(1e-7);
    for model in [models::three_level(), models::four_state()] {
        let coeffs = series_for_model(&model).unwrap();
        for order in 2..=4 {
            let lim = pn_limit(&model, order, &settings).unwrap();
            let expected = coeffs.order(order).unwrap();
            let dev = max_abs_diff(&lim.value, expected);
            assert!(dev < 1e-5, "{} order {order}: deviation {dev:e}", model.label());
        }
    }
}

#[test]
fn lz_survival_residual_is_sixth_order() {
    let lambda = 0.8;
    let model = models::landau_zener(lambda);
    let coeffs = series_for_model(&model).unwrap();
    let settings = PropagatorSettings::new(1e-11);
    for g in [0.1, 0.15] {
        let p = probabilities_with(&model, g, &settings).unwrap();
        let exact = lz_exact(lambda, g);
        assert!(max_abs_diff(&p.values, &exact) < 1e-9);
        let ratio = (p.values[(0, 0)] - evaluate_at(&coeffs, g)[(0, 0)]) / g.powi(6);
        let x = 2.0 * (lambda * g).powi(2);
        // next Taylor term of e^{-x} relative to the leading residual
        let band = x / 4.0 + 1e-3;
        assert_relative_eq!(ratio, -4.0 / 3.0 * lambda.powi(6), max_relative = band);
    }
}

#[test]
fn propagator_is_relabel_covariant() {
    let model = models::four_state();
    let perm = [2, 0, 3, 1];
    let settings = PropagatorSettings::new(1e-9);
    let base = probabilities_with(&model, 0.35, &settings).unwrap();
    let moved = probabilities_with(&model.permuted(&perm).unwrap(), 0.35, &settings).unwrap();
    let expected = Relabeling::new(perm.to_vec()).unwrap().to_sorted(&base.values);
    assert!(max_abs_diff(&expected, &moved.values) < 1e-7);
}

#[test]
fn reversing_coupling_sign_transposes_probabilities() {
    let model = models::three_level();
    let settings = PropagatorSettings::new(1e-9);
    let plus = probabilities_with(&model, 0.3, &settings).unwrap();
    let minus = probabilities_with(&model, -0.3, &settings).unwrap();
    assert!(max_abs_diff(&plus.values.transpose(), &minus.values) < 1e-7);
    assert!(max_abs_diff(&plus.values, &minus.values) > 1e-3);
}

#[test]
fn w2_recursion_matches_closed_form() {
    let settings = WSettings::new(1e-10);
    for model in [models::three_level(), models::four_state()] {
        for t in [0.7, 2.0, 5.0] {
            for order in 1..=3 {
                let closed = w_n_finite(&model, order, t, &settings).unwrap();
                let ode = w_n_by_recursion(&model, order, t, &settings).unwrap();
                let dev = (&closed.values - &ode.values).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(dev < 1e-7, "order {order}, t = {t}: {dev:e}");
            }
        }
    }
}

#[test]
fn first_order_probability_vanishes() {
    let settings = WSettings::new(1e-10);
    let model = models::four_state();
    for t in [0.5, 3.0, 20.0] {
        let p1 = pn_finite(&model, 1, t, &settings).unwrap();
        assert!(p1.abs().max() < 1e-13);
    }
}

#[test]
fn golden_files_parse_to_reference_models() {
    let three = MlzModel::from_file_str(&data("three_level.toml")).unwrap();
    assert_eq!(three.with_label(models::three_level().label()), models::three_level());

    let four = MlzModel::from_file_str(&data("four_state_full.toml")).unwrap();
    assert_eq!(four.couplings(), models::four_state().couplings());
    assert_eq!(four.slopes(), models::four_state().slopes());
    assert_eq!(four.g(), 1.0);

    let five = MlzModel::from_file_str(&data("five_state_unsorted.toml")).unwrap();
    assert_eq!(five, models::five_state_example());
    assert!(!five.is_descending());
    let (sorted, relabel) = five.reorder_descending().unwrap();
    assert!(sorted.is_descending());
    assert_eq!(relabel.as_slice(), &[3, 4, 2, 0, 1]);
}

#[test]
fn golden_files_reject_invalid_models() {
    assert!(matches!(
        MlzModel::from_file_str(&data("bad_duplicate_slope.toml")),
        Err(Error::DuplicateSlope { first: 0, second: 2, .. })
    ));
    assert!(matches!(
        MlzModel::from_file_str(&data("bad_asymmetric.toml")),
        Err(Error::AsymmetricCoupling { .. })
    ));
    assert!(matches!(
        MlzModel::from_file_str(&data("bad_length.toml")),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(matches!(MlzModel::from_file_str("n = 2\nslopes = ["), Err(Error::Parse { .. })));
}

#[test]
fn corpus_passes_order_certification() {
    // the (3,2) entry of the three-level model has a large g^6 term, so its
    // ratio only settles below g = 0.015
    let settings = PropagatorSettings::new(1e-12);
    let gs = [0.01, 0.014, 0.02];
    for model in models::corpus() {
        let coeffs = series_for_model(&model).unwrap();
        let scan = residual_scan(&model, &gs, &coeffs, &settings).unwrap();
        let n = model.n();
        for j in 0..n {
            for k in 0..n {
                let v = scan.verdict(j, k, 0.25);
                assert!(v.passes(), "{} ({j},{k}): {v:?}", model.label());
            }
        }
    }
}

#[test]
fn even_part_of_probabilities_matches_even_series() {
    let model = models::three_level();
    let coeffs = series_for_model(&model).unwrap();
    let settings = PropagatorSettings::new(1e-11);
    let even_residual = |g: f64| {
        let plus = probabilities_with(&model, g, &settings).unwrap().values;
        let minus = probabilities_with(&model, -g, &settings).unwrap().values;
        let even = (plus + minus) * 0.5;
        let series = evaluate_at(&coeffs, g) - &coeffs.p3 * g.powi(3);
        (even - series)[(0, 1)]
    };
    // no odd powers survive: residual/g^6 is linear in g^2
    let r: Vec<f64> = [0.04, 0.08, 0.16].iter().map(|&g| even_residual(g) / g.powi(6)).collect();
    let predicted = r[1] + 4.0 * (r[1] - r[0]);
    assert!((predicted / r[2] - 1.0).abs() < 0.05, "{r:?}, predicted {predicted}");
}

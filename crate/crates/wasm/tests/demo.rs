use pvcheb_wasm::{curves, forecast, recursion};

#[test]
fn curves_are_chebyshev() {
    let c = curves(4, 5).unwrap();
    assert_eq!(c.x, [-1.0, -0.5, 0.0, 0.5, 1.0]);
    assert_eq!(c.curves[2], [1.0, -0.5, -1.0, -0.5, 1.0]);
    assert!(curves(11, 5).is_err());
    assert!(curves(3, 1).is_err());
}

#[test]
fn recursion_respects_the_bound() {
    let r = recursion(1.0, 30, 50, 4).unwrap();
    assert!(r.max_abs <= 1.0 + 1e-12);
    assert!(r.paths.iter().all(|p| p.len() == 30));
    let loose = recursion(2.5, 30, 50, 4).unwrap();
    assert!(loose.max_abs > 1.0);
    assert!(recursion(f64::NAN, 4, 1, 0).is_err());
}

#[test]
fn forecast_beats_persistence_on_fair_days() {
    let demo = forecast("fair", 0.02, 1, 4, false).unwrap();
    assert!(demo.model_mse < demo.persistence_mse);
    assert!(demo
        .series
        .iter()
        .any(|p| p.persistence_kw.is_some() && p.last_step_kw.is_some()));
    assert!(forecast("stormy", 0.02, 1, 4, false).is_err());
}

#[test]
fn mixed_preset_selects_features_for_every_weather_type() {
    let demo = forecast("mixed", 0.01, 2, 2, true).unwrap();
    assert_eq!(demo.features.len(), 3);
    assert!(demo.features.iter().all(|(_, f)| !f.is_empty()));
}

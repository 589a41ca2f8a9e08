use bernet::detection::msra::compute_thresholds;
use bernet::markov_exact::{rho_exact, RhoMethod};
use bernet::net::NetConfig;
use bernet::pseudo_tree::{phi_fit, theta_series, PhiFit, PseudoTreeConfig, ThetaMethod, ThetaSeries};

#[test]
fn fit_survives_json_round_trip() {
    let series = theta_series(&PseudoTreeConfig::planar(1, 0.25), 30, 20_000, 4).unwrap();
    let fit = phi_fit(&series).unwrap();
    let text = serde_json::to_string(&(&fit, &series)).unwrap();
    let (back, back_series): (PhiFit, ThetaSeries) = serde_json::from_str(&text).unwrap();
    assert_eq!(back, fit);
    assert!(back.sandwich_holds(&back_series, 1e-9));
}

#[test]
fn series_csv_round_trip() {
    let config = PseudoTreeConfig::planar(2, 0.15);
    let series = theta_series(&config, 12, 5000, 1).unwrap();
    let text = series.to_csv().unwrap();
    assert!(text.starts_with("k,estimate,stderr,replicates\n"));
    let back = ThetaSeries::from_csv(config, series.method, &text).unwrap();
    assert_eq!(back.entries, series.entries);
    assert_ne!(series.method, ThetaMethod::Exact);
}

#[test]
fn configs_and_records_round_trip() {
    let net = NetConfig::planar(9, 7, 2, 0.3, 5);
    let back: NetConfig = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
    assert_eq!(back, net);
    let rho = rho_exact(5, 1, 0.4f64, 1e-9, RhoMethod::Stationary).unwrap();
    let v = serde_json::to_value(&rho).unwrap();
    assert_eq!(v["method"], "stationary");
    let t = compute_thresholds(1024, None, 1.0, 1.0, 0.1, 6, 1.1).unwrap();
    let back: bernet::detection::msra::MsraThresholds = serde_json::from_value(serde_json::to_value(&t).unwrap()).unwrap();
    back.validate(1e-9).unwrap();
    assert_eq!(back, t);
}

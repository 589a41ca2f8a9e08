use clap::ArgMatches;
use serde::Serialize;
use serde_json::{json, Map, Value};

use bernet::asymptotics::{gumbel_fit, poisson_approx_across, rate_sweep, InflatingRegion};
use bernet::detection::anomaly::{AnomalyScenario, ChainSpec};
use bernet::detection::msra::{
    compute_thresholds, msra_phi_fit, msra_test, points_from_csv, sample_scene, Hypothesis, MsraThresholds,
};
use bernet::detection::track::{simulate_track, track_test, TrackMode, TrackScene, TrackSceneConfig};
use bernet::detection::{poisson_tail, Decision};
use bernet::longest_run::{length_distribution, longest_run_dp};
use bernet::markov_exact::{rho_exact, rho_table, stab_bounds, table_to_csv, RhoMethod};
use bernet::net::{generate_net, NetConfig, RowDim};
use bernet::pseudo_tree::{
    pc_bracket, phi_fit, theta_series, theta_series_exact, theta_series_naive, theta_series_splitting, PhiFit,
    PseudoTreeConfig,
};
use bernet::rng::derive;

use crate::cli::*;
use crate::config::{resolve, ConfigFile};
use crate::CliError;

/// Sub-stream of the master seed used for fitted `φ`.
const PHI_STREAM: u64 = 0x7068_6900;

pub struct Output {
    pub config: Value,
    pub csv: String,
    pub json: Map<String, Value>,
}

fn rows_csv<S: Serialize>(rows: &[S]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(bernet::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| bernet::Error::Internal(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf8"))
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    }
}

fn to_json<S: Serialize>(v: &S) -> Value {
    serde_json::to_value(v).expect("serializable")
}

pub fn run(command: &Command, matches: &ArgMatches, file: &ConfigFile, seed: u64) -> Result<Output, CliError> {
    macro_rules! go {
        ($args:expr, $f:ident) => {{
            let args = resolve($args, matches, file)?;
            let mut out = $f(&args, seed)?;
            out.config = to_json(&args);
            Ok(out)
        }};
    }
    match command {
        Command::SimulateNet(a) => go!(a, simulate_net),
        Command::LongestRun(a) => go!(a, longest_run),
        Command::Hist(a) => go!(a, hist),
        Command::Theta(a) => go!(a, theta),
        Command::Phi(a) => go!(a, phi),
        Command::Pc(a) => go!(a, pc),
        Command::RhoExact(a) => go!(a, rho),
        Command::Table1(a) => go!(a, table1),
        Command::StabBounds(a) => go!(a, stab),
        Command::PoissonApprox(a) => go!(a, poisson),
        Command::RateCheck(a) => go!(a, rate_check),
        Command::Gumbel(a) => go!(a, gumbel),
        Command::DetectAnomaly(a) => go!(a, detect_anomaly),
        Command::DetectFilament(a) => go!(a, detect_filament),
        Command::Thresholds(a) => go!(a, thresholds),
        Command::TrackSim(a) => go!(a, track_sim),
        Command::TrackTest(a) => go!(a, track_test_cmd),
    }
}

fn output(csv: String, json: Value) -> Output {
    Output { config: Value::Null, csv, json: object(json) }
}

fn net_config(a: &NetArgs, seed: u64) -> Result<NetConfig, CliError> {
    let row_dims = match (&a.dims, &a.reach) {
        (None, None) => vec![RowDim { m: a.m, c: a.c }],
        (Some(d), Some(r)) if d.len() == r.len() => d.iter().zip(r).map(|(&m, &c)| RowDim { m, c }).collect(),
        (Some(d), None) => d.iter().map(|&m| RowDim { m, c: a.c }).collect(),
        _ => return Err(CliError::Usage("--reach needs --dims of the same length".into())),
    };
    let config = NetConfig { n: a.n, row_dims, p: a.p, seed };
    config.validate()?;
    Ok(config)
}

fn coord_header(axes: usize) -> Vec<String> {
    if axes == 1 {
        vec!["col".into(), "row".into()]
    } else {
        std::iter::once("col".to_string()).chain((1..=axes).map(|a| format!("row{a}"))).collect()
    }
}

fn simulate_net(a: &NetArgs, seed: u64) -> Result<Output, CliError> {
    let config = net_config(a, seed)?;
    let net = generate_net(&config)?;
    let t = config.transverse();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(coord_header(config.row_dims.len())).map_err(bernet::Error::from)?;
    let mut nodes = Vec::new();
    for col in 0..net.n() {
        for r in 0..net.rows() {
            if net.get(col, r) {
                let coord = bernet::net::NodeCoord::from_internal(col, r, &t);
                let rec: Vec<String> =
                    std::iter::once(coord.col.to_string()).chain(coord.rows.iter().map(|x| x.to_string())).collect();
                w.write_record(&rec).map_err(bernet::Error::from)?;
                nodes.push(coord);
            }
        }
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| bernet::Error::Internal(e.to_string()))?).expect("utf8");
    Ok(output(csv, json!({ "net": config, "significant": nodes.len(), "nodes": nodes })))
}

fn longest_run(a: &NetArgs, seed: u64) -> Result<Output, CliError> {
    let config = net_config(a, seed)?;
    let net = generate_net(&config)?;
    let run = longest_run_dp(&net);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend(coord_header(config.row_dims.len()));
    w.write_record(&header).map_err(bernet::Error::from)?;
    for (i, c) in run.path.iter().enumerate() {
        let rec: Vec<String> = [(i + 1).to_string(), c.col.to_string()]
            .into_iter()
            .chain(c.rows.iter().map(|x| x.to_string()))
            .collect();
        w.write_record(&rec).map_err(bernet::Error::from)?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| bernet::Error::Internal(e.to_string()))?).expect("utf8");
    Ok(output(csv, json!({ "net": config, "length": run.length, "path": run.path })))
}

fn hist(a: &HistArgs, seed: u64) -> Result<Output, CliError> {
    let config = NetConfig::planar(a.m, a.n, a.c, a.p, seed);
    let h = length_distribution(&config, a.reps)?;
    let counts: Vec<Value> = h.counts.iter().map(|(l, c)| json!({ "length": l, "count": c })).collect();
    Ok(output(
        h.to_csv()?,
        json!({ "net": h.config, "replicates": h.replicates, "mean": h.mean(), "median": h.median(), "counts": counts }),
    ))
}

fn tree(c: &[usize], p: f64) -> Result<PseudoTreeConfig, CliError> {
    Ok(PseudoTreeConfig::new(c.to_vec(), p)?)
}

fn theta(a: &ThetaArgs, seed: u64) -> Result<Output, CliError> {
    let config = tree(&a.c, a.p)?;
    let series = match a.method {
        ThetaRoute::Auto => theta_series(&config, a.kmax, a.reps, seed)?,
        ThetaRoute::Naive => theta_series_naive(&config, a.kmax, a.reps, seed)?,
        ThetaRoute::Splitting => theta_series_splitting(&config, a.kmax, a.reps, seed)?,
        ThetaRoute::Exact => theta_series_exact(&config, a.kmax)?,
    };
    Ok(output(series.to_csv()?, json!({ "series": series })))
}

#[derive(Serialize)]
struct FitRow {
    phi_hat: f64,
    k_min: usize,
    k_max: usize,
    sigma1: f64,
    sigma2: f64,
    ratio_estimate: f64,
    d: usize,
}

impl From<&PhiFit> for FitRow {
    fn from(f: &PhiFit) -> Self {
        Self {
            phi_hat: f.phi_hat,
            k_min: f.k_window.0,
            k_max: f.k_window.1,
            sigma1: f.sigma1,
            sigma2: f.sigma2,
            ratio_estimate: f.ratio_estimate,
            d: f.d,
        }
    }
}

fn phi(a: &PhiArgs, seed: u64) -> Result<Output, CliError> {
    let config = tree(&a.c, a.p)?;
    let series = theta_series(&config, a.kmax, a.reps, seed)?;
    let fit = phi_fit(&series)?;
    Ok(output(rows_csv(&[FitRow::from(&fit)])?, json!({ "fit": fit, "series": series })))
}

/// `φ(p)` from the flag, or fitted on the pseudo-tree with connectivity `c`.
fn resolve_phi(src: &PhiSource, c: &[usize], p: f64, seed: u64) -> Result<(f64, Option<PhiFit>), CliError> {
    match src.phi {
        Some(phi) => Ok((phi, None)),
        None => {
            let series = theta_series(&tree(c, p)?, src.phi_kmax, src.phi_reps, derive(seed, PHI_STREAM))?;
            let fit = phi_fit(&series)?;
            Ok((fit.phi_hat, Some(fit)))
        }
    }
}

fn pc(a: &PcArgs, seed: u64) -> Result<Output, CliError> {
    let b = pc_bracket(&a.c, a.depth, a.threshold, a.reps, seed)?;
    Ok(output(rows_csv(&[&b])?, to_json(&b)))
}

fn method(r: RhoRoute) -> RhoMethod {
    match r {
        RhoRoute::Stationary => RhoMethod::Stationary,
        RhoRoute::RatioLimit => RhoMethod::RatioLimit,
    }
}

fn rho(a: &RhoArgs, _seed: u64) -> Result<Output, CliError> {
    let r = rho_exact(a.m, a.c, a.p, a.tol, method(a.method))?;
    Ok(output(rows_csv(&[&r])?, to_json(&r)))
}

fn table1(a: &TableArgs, _seed: u64) -> Result<Output, CliError> {
    let rows = rho_table(&a.ms, &a.ps, a.c, a.tol, method(a.method))?;
    Ok(output(table_to_csv(&rows)?, json!({ "rows": rows })))
}

#[derive(Serialize)]
struct BoundRow {
    k: usize,
    lower: f64,
    upper: f64,
}

fn stab(a: &StabArgs, _seed: u64) -> Result<Output, CliError> {
    let ks: Vec<usize> = match a.k {
        Some(k) => vec![k],
        None => (1..=a.n).collect(),
    };
    let rows = ks
        .into_iter()
        .map(|k| stab_bounds(a.m, a.n, a.c, a.p, k).map(|(lower, upper)| BoundRow { k, lower, upper }))
        .collect::<bernet::Result<Vec<_>>>()?;
    Ok(output(rows_csv(&rows)?, json!({ "bounds": rows })))
}

#[derive(Serialize)]
struct PoissonRow {
    m: usize,
    n: usize,
    theta: f64,
    theta_stderr: f64,
    approx: f64,
}

fn poisson(a: &PoissonArgs, seed: u64) -> Result<Output, CliError> {
    let (theta, stderr) = match a.theta {
        Some(t) => (t, 0.0),
        None => {
            let series = theta_series(&PseudoTreeConfig::new(vec![a.c], a.p)?, a.n, a.reps, seed)?;
            let e = series.get(a.n).copied().ok_or_else(|| bernet::Error::Internal("missing θ_n".into()))?;
            (e.estimate, e.stderr)
        }
    };
    let approx = poisson_approx_across(a.m, theta)?;
    let row = PoissonRow { m: a.m, n: a.n, theta, theta_stderr: stderr, approx };
    Ok(output(rows_csv(&[&row])?, to_json(&row)))
}

fn parse_sizes(sizes: &[String]) -> Result<Vec<(usize, usize)>, CliError> {
    sizes
        .iter()
        .map(|s| {
            let (m, n) = s.split_once(['x', 'X']).ok_or_else(|| CliError::Usage(format!("size `{s}` is not MxN")))?;
            let parse = |v: &str| v.trim().parse::<usize>().map_err(|_| CliError::Usage(format!("size `{s}` is not MxN")));
            Ok((parse(m)?, parse(n)?))
        })
        .collect()
}

fn rate_check(a: &RateArgs, seed: u64) -> Result<Output, CliError> {
    let sizes = parse_sizes(&a.sizes)?;
    let (phi_hat, fit) = resolve_phi(&a.phi, &[a.c], a.p, seed)?;
    let region = InflatingRegion::new(a.c1, a.c2, a.delta1, a.delta2, phi_hat)?;
    let table = rate_sweep(a.c, a.p, phi_hat, &sizes, a.reps, seed, Some(&region))?;
    Ok(output(
        table.to_csv()?,
        json!({ "table": table, "deviations": table.deviations(), "region": region, "phi_fit": fit }),
    ))
}

#[derive(Serialize)]
struct GumbelRow {
    m: usize,
    #[serde(rename = "C")]
    c: usize,
    p: f64,
    n: usize,
    rho: f64,
    #[serde(rename = "A1")]
    a1: f64,
    location: f64,
    ks_distance: f64,
    replicates: usize,
}

fn gumbel(a: &GumbelArgs, seed: u64) -> Result<Output, CliError> {
    let f = gumbel_fit(a.m, a.c, a.p, a.n, a.reps, seed)?;
    let row = GumbelRow {
        m: f.m,
        c: f.c,
        p: f.p,
        n: f.n,
        rho: f.rho,
        a1: f.a1,
        location: f.location(),
        ks_distance: f.ks_distance,
        replicates: f.replicates,
    };
    Ok(output(rows_csv(&[&row])?, json!({ "fit": f, "location": f.location() })))
}

#[derive(Serialize)]
struct AnomalyRow {
    type1_rate: f64,
    type2_rate: f64,
    threshold: f64,
    separation_holds: bool,
    replicates: usize,
    mean_length_h0: f64,
    mean_length_h1: f64,
    phi_p0: f64,
}

fn detect_anomaly(a: &AnomalyArgs, seed: u64) -> Result<Output, CliError> {
    let mut scenario = AnomalyScenario::across(a.m, a.n, a.c, a.p0, a.p1, seed);
    if let Some(len) = a.chain_length {
        scenario.chain = ChainSpec::RandomMonotone { length: len };
    }
    let (phi_p0, fit) = resolve_phi(&a.phi, &[a.c], a.p0, seed)?;
    let report = bernet::detection::anomaly::plant_and_test_anomaly(&scenario, phi_p0, a.reps, seed)?;
    let mut json = object(to_json(&report));
    json.insert("phi_p0".into(), json!(phi_p0));
    json.insert("phi_fit".into(), to_json(&fit));
    let row = AnomalyRow {
        type1_rate: report.type1_rate,
        type2_rate: report.type2_rate,
        threshold: report.threshold,
        separation_holds: report.separation_holds,
        replicates: report.replicates,
        mean_length_h0: report.mean_length_h0,
        mean_length_h1: report.mean_length_h1,
        phi_p0,
    };
    Ok(output(rows_csv(&[&row])?, Value::Object(json)))
}

fn threshold_record(a: &ThresholdArgs, seed: u64) -> Result<MsraThresholds, CliError> {
    let alpha = (!a.unknown_alpha).then_some(a.alpha);
    let p0 = poisson_tail(2.0, a.n_star);
    let (phi, phi_seed) = match a.phi.phi {
        Some(phi) => (phi, None),
        None => {
            let s = derive(seed, PHI_STREAM);
            (msra_phi_fit(p0, a.phi.phi_kmax, a.phi.phi_reps, s)?.0.phi_hat, Some(s))
        }
    };
    let mut t = compute_thresholds(a.n_points, alpha, a.beta, a.s, a.delta3, a.n_star, phi)?;
    t.phi_seed = phi_seed;
    t.validate(1e-9)?;
    Ok(t)
}

fn thresholds(a: &ThresholdArgs, seed: u64) -> Result<Output, CliError> {
    let t = threshold_record(a, seed)?;
    Ok(output(rows_csv(&[&t])?, json!({ "thresholds": t })))
}

#[derive(Serialize)]
struct DecisionRow {
    decision: bool,
    statistic: f64,
    threshold: f64,
    scale: Option<usize>,
    seed: u64,
}

impl From<&Decision> for DecisionRow {
    fn from(d: &Decision) -> Self {
        Self { decision: d.decision, statistic: d.statistic, threshold: d.threshold, scale: d.scale, seed: d.seed }
    }
}

fn read_thresholds(path: &std::path::Path) -> Result<MsraThresholds, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let inner = v.get("thresholds").cloned().unwrap_or(v);
    let t: MsraThresholds = serde_json::from_value(inner).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    t.validate(1e-9)?;
    Ok(t)
}

fn detect_filament(a: &FilamentArgs, seed: u64) -> Result<Output, CliError> {
    let t = match &a.thresholds {
        Some(path) => read_thresholds(path)?,
        None => threshold_record(&a.scene, seed)?,
    };
    let (points, eps) = match &a.points {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            (points_from_csv(&text)?, None)
        }
        None => {
            let eps = a.eps.unwrap_or_else(|| t.epsilon(a.eps_factor));
            let hypothesis = match a.hypothesis {
                HypothesisArg::H0 => Hypothesis::Null,
                HypothesisArg::H1 => Hypothesis::Alternative,
            };
            let s = &a.scene;
            (sample_scene(s.n_points, s.alpha, s.beta, s.s, eps, seed, hypothesis)?.points, Some(eps))
        }
    };
    let r = msra_test(&points, &t)?;
    let decision =
        Decision { decision: r.decision, statistic: r.l_max as f64, threshold: r.threshold, scale: Some(r.scale), seed };
    let mut json = object(to_json(&decision));
    json.insert("per_scale".into(), to_json(&r.per_scale));
    json.insert("eps".into(), to_json(&eps));
    json.insert("points".into(), json!(points.len()));
    json.insert("thresholds".into(), to_json(&t));
    Ok(output(rows_csv(&[DecisionRow::from(&decision)])?, Value::Object(json)))
}

fn scene_config(a: &TrackSimArgs) -> TrackSceneConfig {
    TrackSceneConfig {
        m: a.m,
        n: a.n,
        p0: a.p0,
        p1: a.p1,
        p2: a.p2,
        p3: a.p3,
        sigma: a.sigma,
        initial: a.initial.clone().unwrap_or_default(),
    }
}

fn track_sim(a: &TrackSimArgs, seed: u64) -> Result<Output, CliError> {
    let scene = simulate_track(&scene_config(a), seed)?;
    let x: Vec<Vec<u8>> = scene.x.iter().map(|row| row.iter().map(|&b| b as u8).collect()).collect();
    Ok(output(
        scene.to_csv()?,
        json!({ "scene": scene.config, "occupancy": scene.occupancy(), "x": x, "z": scene.z }),
    ))
}

fn track_test_cmd(a: &TrackTestArgs, seed: u64) -> Result<Output, CliError> {
    let (z, sigma) = match &a.input {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            (TrackScene::z_from_csv(&text)?, a.scene.sigma)
        }
        None => (simulate_track(&scene_config(&a.scene), seed)?.z, a.scene.sigma),
    };
    let (mode, fit) = match a.mode {
        TrackModeArg::Fixed => (TrackMode::FixedM, None),
        TrackModeArg::Inflating => {
            let (phi, fit) = resolve_phi(&a.phi, &[1], a.p_target, seed)?;
            (TrackMode::Inflating { phi }, fit)
        }
    };
    let r = track_test(&z, sigma, a.p_target, mode, a.delta4, seed)?;
    let mut json = object(to_json(&r.decision));
    json.insert("z_star".into(), json!(r.z_star));
    json.insert("significant_fraction".into(), json!(r.significant_fraction));
    json.insert("mode".into(), to_json(&mode));
    json.insert("phi_fit".into(), to_json(&fit));
    Ok(output(rows_csv(&[DecisionRow::from(&r.decision)])?, Value::Object(json)))
}

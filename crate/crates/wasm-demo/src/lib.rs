//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no bundler. The `*_json` functions are the native entry points.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use netconformal::conformal::{split_conformal_threshold, WeightedWalkPredictor};
use netconformal::graph_models::{sample_graphon_graph, GraphonSpec, Kernel, LatentPositions};
use netconformal::regression::ModelKind;
use netconformal::rng::seeded;
use netconformal::sampling::{random_walk_with_policy, snowball_wave, StartPolicy};
use netconformal::simulation::{gen_walk_dataset, run_walk_experiment, WalkExperimentConfig};
use netconformal::spectral::{Envelope, SpectralReport, TvStart};
use netconformal::{Graph, Result};

const WORST_CASE_LIMIT: usize = 300;
const WALK_ATTEMPTS: usize = 20;

fn kernel(name: &str, p: f64) -> std::result::Result<Kernel, String> {
    match name {
        "er" => Ok(Kernel::Constant { value: p }),
        "min" => Ok(Kernel::Min),
        "sbm" => Ok(Kernel::TwoBlock {
            cut: 0.5,
            within: p,
            between: p / 10.0,
        }),
        other => Err(format!("unknown graph model `{other}` (use er, min or sbm)")),
    }
}

fn graphon_graph(model: &str, n: usize, p: f64, seed: u64) -> std::result::Result<(Graph, Vec<f64>), String> {
    let mut rng = seeded(seed);
    let xi = LatentPositions::uniform(n, &mut rng);
    let rho = if model == "min" { p } else { 1.0 };
    let spec = GraphonSpec {
        kernel: kernel(model, p)?,
        rho,
    };
    let g = sample_graphon_graph(&spec, &xi, &mut rng).map_err(|e| e.to_string())?;
    Ok((g, xi.as_slice().to_vec()))
}

#[derive(Serialize)]
struct MixingCurve {
    n: usize,
    edges: usize,
    n_analyzed: usize,
    bipartite: bool,
    gamma: f64,
    tv: Vec<f64>,
    bound: Vec<f64>,
    envelope: Option<Envelope>,
    warnings: Vec<String>,
}

/// TV mixing curve of a random walk on a graphon graph with its spectral
/// bound and fitted envelope.
pub fn mixing_curve_json(model: &str, n: usize, p: f64, steps: usize, seed: u64) -> std::result::Result<String, String> {
    let (g, _) = graphon_graph(model, n, p, seed)?;
    let start = if n <= WORST_CASE_LIMIT {
        TvStart::WorstCase
    } else {
        TvStart::Extremes
    };
    let r = SpectralReport::compute(&g, &start, steps).map_err(|e| e.to_string())?;
    let out = MixingCurve {
        n,
        edges: g.edge_count(),
        n_analyzed: r.n_analyzed,
        bipartite: r.bipartite,
        gamma: r.gamma,
        tv: r.tv,
        bound: r.bound,
        envelope: r.envelope,
        warnings: r.warnings,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct CalibrationPoint {
    node: usize,
    degree: usize,
    score: f64,
    weight: f64,
}

#[derive(Serialize)]
struct WeightedDemo {
    calibration: Vec<CalibrationPoint>,
    weighted_threshold: Option<f64>,
    unweighted_threshold: Option<f64>,
    /// Coverage and width of both arms over `reps` replicates.
    cells: Vec<(String, f64, f64)>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn weighted_demo(n: usize, nu: f64, m: usize, alpha: f64, reps: usize, seed: u64) -> Result<WeightedDemo> {
    let mut rng = seeded(seed);
    let ds = gen_walk_dataset(n, nu, &mut rng)?;
    let mut trace = random_walk_with_policy(&ds.graph, &StartPolicy::Uniform, 2 * m, &mut rng);
    for _ in 1..WALK_ATTEMPTS {
        if trace.is_ok() {
            break;
        }
        trace = random_walk_with_policy(&ds.graph, &StartPolicy::Uniform, 2 * m, &mut rng);
    }
    let trace = trace?;
    let features = ds.x.select_columns(&[0, 1]);
    let model = ModelKind::Ols { ridge: 0.0 };
    let pred = WeightedWalkPredictor::fit(&ds, &features, &trace, alpha, &model)?;
    let cal_nodes = &trace.nodes[m + 1..];
    let weights = netconformal::conformal::node_weights(&ds.graph, cal_nodes)?;
    let calibration: Vec<CalibrationPoint> = cal_nodes
        .iter()
        .zip(weights)
        .map(|(&node, weight)| CalibrationPoint {
            node,
            degree: ds.graph.degree(node),
            score: netconformal::regression::score(&pred.model, ds.y[node], features.row(node)),
            weight,
        })
        .collect();
    let scores: Vec<f64> = calibration.iter().map(|c| c.score).collect();
    let unweighted = split_conformal_threshold(&scores, alpha)?;
    let mut cells = Vec::new();
    if reps > 0 {
        let cfg = WalkExperimentConfig {
            n,
            nu,
            m,
            alpha,
            replicates: reps,
            seed,
            uniform_baseline: 2 * m < n,
            ..WalkExperimentConfig::default()
        };
        let report = run_walk_experiment(&cfg)?;
        cells = report
            .cells
            .into_iter()
            .map(|c| (c.scheme, c.coverage, c.width))
            .collect();
    }
    Ok(WeightedDemo {
        calibration,
        weighted_threshold: finite(pred.calibration.weighted_threshold()),
        unweighted_threshold: finite(unweighted),
        cells,
    })
}

/// One random-walk sample on the latent-space population: calibration
/// scores with their importance weights, weighted against unweighted
/// thresholds, and optionally coverage over `reps` replicates.
pub fn weighted_interval_json(
    n: usize,
    nu: f64,
    m: usize,
    alpha: f64,
    reps: usize,
    seed: u64,
) -> std::result::Result<String, String> {
    let out = weighted_demo(n, nu, m, alpha, reps, seed).map_err(|e| e.to_string())?;
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Waves {
    n: usize,
    xi: Vec<f64>,
    edges: Vec<(usize, usize)>,
    seeds: Vec<usize>,
    /// Wave index of each node, `null` if not reached within `k` waves.
    wave: Vec<Option<usize>>,
    sizes: Vec<usize>,
}

/// Snowball waves `0..=k` from `n_seeds` seeds on a graphon graph.
pub fn snowball_waves_json(
    model: &str,
    n: usize,
    p: f64,
    n_seeds: usize,
    k: usize,
    seed: u64,
) -> std::result::Result<String, String> {
    let (g, xi) = graphon_graph(model, n, p, seed)?;
    if n_seeds == 0 || n_seeds > n {
        return Err(format!("need between 1 and {n} seeds"));
    }
    let step = n as f64 / n_seeds as f64;
    let seeds: Vec<usize> = (0..n_seeds).map(|i| (i as f64 * step) as usize).collect();
    let mut wave = vec![None; n];
    let mut sizes = Vec::with_capacity(k + 1);
    for t in 0..=k {
        let s = snowball_wave(&g, &seeds, t).map_err(|e| e.to_string())?;
        for &i in &s.selected {
            wave[i] = Some(t);
        }
        sizes.push(s.len());
    }
    let out = Waves {
        n,
        xi,
        edges: g.edges(),
        seeds,
        wave,
        sizes,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn mixing_curve(model: &str, n: usize, p: f64, steps: usize, seed: u32) -> std::result::Result<String, JsError> {
    mixing_curve_json(model, n, p, steps, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn weighted_interval(
    n: usize,
    nu: f64,
    m: usize,
    alpha: f64,
    reps: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    weighted_interval_json(n, nu, m, alpha, reps, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn snowball_waves(
    model: &str,
    n: usize,
    p: f64,
    n_seeds: usize,
    k: usize,
    seed: u32,
) -> std::result::Result<String, JsError> {
    snowball_waves_json(model, n, p, n_seeds, k, seed.into()).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn complete_graph_mixing() {
        let v: Value = serde_json::from_str(&mixing_curve_json("er", 5, 1.0, 10, 0).unwrap()).unwrap();
        assert!((v["gamma"].as_f64().unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(v["tv"].as_array().unwrap().len(), 11);
    }

    #[test]
    fn waves_partition_reached_nodes() {
        let v: Value =
            serde_json::from_str(&snowball_waves_json("er", 60, 0.08, 2, 3, 4).unwrap()).unwrap();
        let sizes: Vec<u64> = v["sizes"].as_array().unwrap().iter().map(|s| s.as_u64().unwrap()).collect();
        let reached = v["wave"].as_array().unwrap().iter().filter(|w| !w.is_null()).count() as u64;
        assert_eq!(sizes.iter().sum::<u64>(), reached);
        assert_eq!(sizes[0], 2);
    }

    #[test]
    fn weighted_demo_runs() {
        let v: Value =
            serde_json::from_str(&weighted_interval_json(300, 0.1, 20, 0.2, 3, 1).unwrap()).unwrap();
        assert_eq!(v["calibration"].as_array().unwrap().len(), 20);
        assert_eq!(v["cells"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn unknown_model_is_an_error() {
        assert!(mixing_curve_json("ba", 10, 0.5, 5, 0).is_err());
    }
}

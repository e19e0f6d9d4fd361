//! Self-check suites: brute-force selector invariance, exact conditional
//! exchangeability, and Monte Carlo coverage of split conformal prediction.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::conformal::{split_conformal_predict, split_conformal_threshold, FoldSplit, TestPoint};
use crate::covariates::{CovariateBundle, NetworkStatistic};
use crate::error::Result;
use crate::graph::Graph;
use crate::graph_models::NodeDataset;
use crate::linalg::Mat;
use crate::regression::ModelKind;
use crate::rng::{seeded, substream};
use crate::sampling::exchangeability::{
    check_conditional_exchangeability, enumerate_selection_laws, BinaryLaw, FiniteDgp,
    ResponseLaw,
};
use crate::sampling::{verify_invariant_selector, SelectionRule};

/// A failed check with a serialized counterexample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyFailure {
    pub case: String,
    pub counterexample: serde_json::Value,
}

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<VerifyFailure>,
    pub notes: Vec<String>,
}

impl VerifyReport {
    fn new(suite: &str) -> Self {
        Self {
            suite: suite.into(),
            passed: true,
            checks: 0,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn fail(&mut self, case: String, counterexample: serde_json::Value) {
        self.passed = false;
        self.failures.push(VerifyFailure {
            case,
            counterexample,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvarianceSuiteConfig {
    pub graphs: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub seed: u64,
    /// Add the root-including ego rule, which is not an invariant selector.
    pub inject_broken: bool,
}

impl Default for InvarianceSuiteConfig {
    fn default() -> Self {
        Self {
            graphs: 100,
            min_n: 3,
            max_n: 7,
            seed: 0,
            inject_broken: false,
        }
    }
}

fn random_graph<R: Rng + ?Sized>(n: usize, directed: bool, p: f64, rng: &mut R) -> Graph {
    let mut g = Graph::empty(n, directed);
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) && rng.random::<f64>() < p {
                g.add_edge(i, j).expect("endpoints are distinct and in range");
            }
        }
    }
    g
}

/// Definition-1 check for ego, wave and k-hop rules on random small
/// graphs, alternating undirected and directed.
pub fn run_invariance_suite(cfg: &InvarianceSuiteConfig) -> Result<VerifyReport> {
    let mut report = VerifyReport::new("invariance");
    let mut rng = seeded(cfg.seed);
    for case in 0..cfg.graphs {
        let n = rng.random_range(cfg.min_n..=cfg.max_n);
        let directed = case % 2 == 1;
        let p = rng.random_range(0.2..0.7);
        let g = random_graph(n, directed, p, &mut rng);
        let root = rng.random_range(0..n);
        let n_seeds = rng.random_range(1..=2);
        let seeds = sample(&mut rng, n, n_seeds).into_vec();
        let mut rules = vec![
            SelectionRule::Ego { root },
            SelectionRule::Wave { m0: seeds.clone(), k: 1 },
            SelectionRule::Wave { m0: seeds.clone(), k: 2 },
            SelectionRule::KHop { m0: seeds.clone(), k: 1 },
            SelectionRule::KHop { m0: seeds, k: 2 },
        ];
        if cfg.inject_broken {
            rules.push(SelectionRule::BrokenEgo { root });
        }
        for rule in rules {
            let s = rule.select(&g);
            let out = verify_invariant_selector(&g, &rule, &s)?;
            report.checks += out.permutations_checked;
            if let Some(sigma) = out.counterexample {
                report.fail(
                    format!("graph {case}"),
                    json!({
                        "n": n,
                        "directed": directed,
                        "edges": g.edges(),
                        "rule": rule,
                        "selected": s,
                        "sigma": sigma,
                    }),
                );
            }
        }
    }
    report
        .notes
        .push(format!("{} graphs, {} permutations checked", cfg.graphs, report.checks));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExchangeabilitySuiteConfig {
    pub n: usize,
    pub inject_broken: bool,
}

impl Default for ExchangeabilitySuiteConfig {
    fn default() -> Self {
        Self {
            n: 5,
            inject_broken: false,
        }
    }
}

/// The finite DGPs used by the exchangeability suite.
pub fn exchangeability_dgps(n: usize) -> Vec<(String, FiniteDgp)> {
    let third = |k| BinaryLaw::new(k, 3);
    let quarter = |k| BinaryLaw::new(k, 4);
    vec![
        (
            "erdos_renyi_undirected".into(),
            FiniteDgp::erdos_renyi(n, false, 1, 3, BinaryLaw::new(1, 2)),
        ),
        (
            "two_block_undirected".into(),
            FiniteDgp {
                n,
                directed: false,
                types: third(1),
                edges: [[third(2), third(1)], [third(1), third(2)]],
                response: ResponseLaw::Bernoulli([quarter(1), quarter(3)]),
            },
        ),
        (
            "two_type_directed".into(),
            FiniteDgp {
                n,
                directed: true,
                types: BinaryLaw::new(1, 2),
                edges: [[quarter(1), quarter(3)], [quarter(2), quarter(1)]],
                response: ResponseLaw::EqualsType,
            },
        ),
    ]
}

/// Exact conditional exchangeability of the selected subarray for ego,
/// wave and k-hop rules on each finite DGP.
pub fn run_exchangeability_suite(cfg: &ExchangeabilitySuiteConfig) -> Result<VerifyReport> {
    let mut report = VerifyReport::new("exchangeability");
    let mut rules = vec![
        SelectionRule::Ego { root: 0 },
        SelectionRule::Wave { m0: vec![0], k: 1 },
        SelectionRule::Wave { m0: vec![0], k: 2 },
        SelectionRule::KHop { m0: vec![0], k: 2 },
        SelectionRule::Wave { m0: vec![0, 1], k: 1 },
    ];
    if cfg.inject_broken {
        rules.push(SelectionRule::BrokenEgo { root: 0 });
    }
    for (name, dgp) in exchangeability_dgps(cfg.n) {
        for rule in &rules {
            let laws = enumerate_selection_laws(&dgp, rule)?;
            let out = check_conditional_exchangeability(&laws);
            report.checks += out.comparisons;
            if let Some((s, sigma, pattern)) = out.violation {
                report.fail(
                    name.clone(),
                    json!({ "rule": rule, "selected": s, "sigma": sigma, "pattern": pattern }),
                );
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSuiteConfig {
    pub alpha: f64,
    pub m: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Replicates of the end-to-end ego-network pipeline check.
    pub pipeline_replicates: usize,
}

impl Default for CoverageSuiteConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            m: 100,
            replicates: 2000,
            seed: 0,
            pipeline_replicates: 500,
        }
    }
}

/// Empirical coverage with the band it is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageCheck {
    pub coverage: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
}

impl CoverageCheck {
    pub fn passed(&self) -> bool {
        self.coverage >= self.lower && self.coverage <= self.upper
    }
}

/// Split conformal coverage on i.i.d. exponential scores, checked against
/// `[1−α, 1−α + 1/(m+1)] ± 3σ_MC`.
pub fn iid_score_coverage(alpha: f64, m: usize, replicates: usize, seed: u64) -> Result<CoverageCheck> {
    let mut hits = 0usize;
    for r in 0..replicates {
        let mut rng = substream(seed, r as u64);
        let scores: Vec<f64> = (0..m).map(|_| Exp1.sample(&mut rng)).collect();
        let test: f64 = Exp1.sample(&mut rng);
        if test <= split_conformal_threshold(&scores, alpha)? {
            hits += 1;
        }
    }
    let sigma = ((1.0 - alpha) * alpha / replicates as f64).sqrt();
    Ok(CoverageCheck {
        coverage: hits as f64 / replicates as f64,
        lower: 1.0 - alpha - 3.0 * sigma,
        upper: 1.0 - alpha + 1.0 / (m as f64 + 1.0) + 3.0 * sigma,
        replicates,
    })
}

/// End-to-end split conformal on ego networks of an exchangeable
/// population, with degree-in-`S` as a network covariate.
pub fn ego_pipeline_coverage(alpha: f64, replicates: usize, seed: u64) -> Result<CoverageCheck> {
    const N: usize = 120;
    let mut hits = 0usize;
    let mut evaluated = 0usize;
    let mut min_cal = usize::MAX;
    for r in 0..replicates {
        let mut rng = substream(seed, r as u64);
        let g = random_graph(N, false, 0.3, &mut rng);
        let x: Vec<f64> = (0..N).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|xi| 1.0 + 2.0 * xi + Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let ds = NodeDataset::new(y, Mat::column_vector(&x), g)?;
        let root = rng.random_range(0..N);
        let s = (SelectionRule::Ego { root }).select(&ds.graph);
        if s.len() < 3 {
            continue;
        }
        let cov = CovariateBundle::from_selection(&ds.graph, &s, &[NetworkStatistic::Degree])?;
        let test = TestPoint::Node {
            node: s[rng.random_range(0..s.len())],
        };
        let out = split_conformal_predict(
            &ds,
            &s,
            Some(&cov),
            test,
            &FoldSplit::Parity,
            alpha,
            &ModelKind::Ols { ridge: 0.0 },
        )?;
        min_cal = min_cal.min(out.d2.len());
        evaluated += 1;
        hits += usize::from(out.set.contains(ds.y[out.test_node]));
    }
    let sigma = ((1.0 - alpha) * alpha / evaluated as f64).sqrt();
    Ok(CoverageCheck {
        coverage: hits as f64 / evaluated as f64,
        lower: 1.0 - alpha - 3.0 * sigma,
        upper: 1.0 - alpha + 1.0 / (min_cal as f64 + 1.0) + 3.0 * sigma,
        replicates: evaluated,
    })
}

pub fn run_coverage_suite(cfg: &CoverageSuiteConfig) -> Result<VerifyReport> {
    let mut report = VerifyReport::new("coverage");
    let checks = [
        ("iid_scores", iid_score_coverage(cfg.alpha, cfg.m, cfg.replicates, cfg.seed)?),
        (
            "ego_pipeline",
            ego_pipeline_coverage(cfg.alpha, cfg.pipeline_replicates, cfg.seed)?,
        ),
    ];
    for (name, c) in checks {
        report.checks += 1;
        report.notes.push(format!(
            "{name}: coverage {:.4} over {} replicates, band [{:.4}, {:.4}]",
            c.coverage, c.replicates, c.lower, c.upper
        ));
        if !c.passed() {
            report.fail(name.into(), serde_json::to_value(c)?);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariance_suite_passes_and_detects_broken_rule() {
        let cfg = InvarianceSuiteConfig {
            graphs: 20,
            max_n: 6,
            ..Default::default()
        };
        assert!(run_invariance_suite(&cfg).unwrap().passed);
        let broken = run_invariance_suite(&InvarianceSuiteConfig {
            inject_broken: true,
            ..cfg
        })
        .unwrap();
        assert!(!broken.passed);
        assert!(broken.failures[0].counterexample["sigma"].is_array());
    }

    #[test]
    fn exchangeability_suite_on_four_nodes() {
        let r = run_exchangeability_suite(&ExchangeabilitySuiteConfig {
            n: 4,
            inject_broken: true,
        })
        .unwrap();
        assert!(!r.passed);
        assert!(r
            .failures
            .iter()
            .all(|f| f.counterexample["rule"]["kind"] == "broken_ego"));
    }

    #[test]
    fn small_coverage_run() {
        let c = iid_score_coverage(0.2, 20, 400, 3).unwrap();
        assert!(c.passed(), "{c:?}");
    }
}

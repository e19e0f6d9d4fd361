use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{
    split_conformal_predict, split_conformal_threshold, FoldSplit, PredictionSet, TestPoint,
    WeightedWalkPredictor,
};
use crate::covariates::{CovariateBundle, NetworkStatistic};
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::graph_models::{sample_fixed_out_degree_digraph, NodeDataset};
use crate::linalg::Mat;
use crate::regression::{score, ModelKind};
use crate::rng::{substream, SimRng};
use crate::sampling::{k_hop_union, random_walk_with_policy, snowball_wave, StartPolicy};

use super::datasets::{gen_sar_dataset, gen_walk_dataset, SarParams};

/// Snowball referral schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Scheme {
    /// 3 seeds; every neighbor is referred.
    AllNeighbors,
    /// 10 seeds; each node refers the 10 largest entries of its row of `P`.
    TopPropensity,
    /// 20 seeds; each node refers 5 neighbors uniformly at random.
    RandomReferral,
}

impl Scheme {
    pub fn number(self) -> u8 {
        match self {
            Scheme::AllNeighbors => 1,
            Scheme::TopPropensity => 2,
            Scheme::RandomReferral => 3,
        }
    }

    pub fn seeds(self) -> usize {
        match self {
            Scheme::AllNeighbors => 3,
            Scheme::TopPropensity => 10,
            Scheme::RandomReferral => 20,
        }
    }

    pub fn referrals(self) -> Option<usize> {
        match self {
            Scheme::AllNeighbors => None,
            Scheme::TopPropensity => Some(10),
            Scheme::RandomReferral => Some(5),
        }
    }
}

impl TryFrom<u8> for Scheme {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Scheme::AllNeighbors),
            2 => Ok(Scheme::TopPropensity),
            3 => Ok(Scheme::RandomReferral),
            _ => Err(format!("unknown referral scheme {v}; expected 1, 2 or 3")),
        }
    }
}

impl From<Scheme> for u8 {
    fn from(s: Scheme) -> u8 {
        s.number()
    }
}

/// Selected set evaluated in a snowball replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Wave1,
    Wave2,
    Hop2,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Wave1 => "wave1",
            Target::Wave2 => "wave2",
            Target::Hop2 => "hop2",
        })
    }
}

/// Regression arms of the snowball experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnowballModel {
    /// Nonparametric smoother on `X` only.
    Smoother,
    /// Least squares on `X` and an adjacency spectral embedding of `S`.
    LinearAse,
}

impl fmt::Display for SnowballModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SnowballModel::Smoother => "smoother",
            SnowballModel::LinearAse => "linear_ase",
        })
    }
}

/// How the scheme-2 referral weights are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "ranking", rename_all = "snake_case")]
pub enum PropensityRanking {
    /// Rank `ν ZᵢᵀZⱼ` itself.
    #[default]
    Deterministic,
    /// Rank `ν ZᵢᵀZⱼ + noise · η_ij` with `η_ij ~ U[0, 1]` per ordered pair.
    Perturbed { noise: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnowballExperimentConfig {
    pub population: SarParams,
    pub schemes: Vec<Scheme>,
    pub targets: Vec<Target>,
    pub models: Vec<SnowballModel>,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub ase_dim: usize,
    pub ridge: f64,
    pub scheme2_ranking: PropensityRanking,
    pub split: FoldSplit,
}

impl Default for SnowballExperimentConfig {
    fn default() -> Self {
        Self {
            population: SarParams::default(),
            schemes: vec![Scheme::AllNeighbors, Scheme::TopPropensity, Scheme::RandomReferral],
            targets: vec![Target::Wave1, Target::Wave2, Target::Hop2],
            models: vec![SnowballModel::Smoother, SnowballModel::LinearAse],
            alpha: 0.1,
            replicates: 200,
            seed: 0,
            ase_dim: 3,
            ridge: 1e-8,
            scheme2_ranking: PropensityRanking::Deterministic,
            split: FoldSplit::Parity,
        }
    }
}

impl SnowballExperimentConfig {
    /// The published scale: 2000 nodes, 500 replicates.
    pub fn paper_scale() -> Self {
        Self {
            population: SarParams {
                n: 2000,
                ..SarParams::default()
            },
            replicates: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        check_common(self.alpha, self.replicates)?;
        if self.schemes.is_empty() || self.targets.is_empty() || self.models.is_empty() {
            return Err(invalid("schemes", "schemes, targets and models must be nonempty"));
        }
        for s in &self.schemes {
            if s.seeds() > self.population.n {
                return Err(invalid("schemes", format!("scheme {} needs {} seeds", s.number(), s.seeds())));
            }
            if s.referrals().is_some_and(|r| r >= self.population.n) {
                return Err(invalid("schemes", "population too small for fixed referrals"));
            }
        }
        if self.ase_dim == 0 {
            return Err(invalid("ase_dim", "must be at least 1"));
        }
        if let PropensityRanking::Perturbed { noise } = self.scheme2_ranking {
            if !(noise > 0.0 && noise.is_finite()) {
                return Err(invalid("scheme2_ranking", "noise must be positive"));
            }
        }
        Ok(())
    }
}

fn check_common(alpha: f64, replicates: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("{alpha} is not in (0, 1)")));
    }
    if replicates == 0 {
        return Err(invalid("replicates", "must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkExperimentConfig {
    pub n: usize,
    pub nu: f64,
    /// Calibration size; the walk takes `2m` steps.
    pub m: usize,
    pub start: StartPolicy,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub ridge: f64,
    /// Also run unweighted split conformal on uniformly sampled nodes.
    pub uniform_baseline: bool,
}

impl Default for WalkExperimentConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            nu: 0.1,
            m: 50,
            start: StartPolicy::Uniform,
            alpha: 0.2,
            replicates: 200,
            seed: 0,
            ridge: 0.0,
            uniform_baseline: true,
        }
    }
}

impl WalkExperimentConfig {
    /// The published scale: 500 replicates.
    pub fn paper_scale() -> Self {
        Self {
            replicates: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_common(self.alpha, self.replicates)?;
        if self.m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if self.n < 2 {
            return Err(invalid("n", "population needs at least two nodes"));
        }
        if self.uniform_baseline && 2 * self.m + 1 > self.n {
            return Err(invalid("m", "uniform baseline needs 2m + 1 distinct nodes"));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(invalid("nu", format!("{} is not in (0, 1]", self.nu)));
        }
        Ok(())
    }

    /// Advisory messages about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if 2 * self.m + 1 > self.n {
            w.push(format!("2m + 1 = {} exceeds the population size {}", 2 * self.m + 1, self.n));
        }
        w
    }
}

/// Aggregated results for one (scheme, target, model) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scheme: String,
    pub target: String,
    pub model: String,
    pub coverage: f64,
    /// Mean width over replicates with a finite interval.
    pub width: f64,
    pub se: f64,
    pub n_reps: usize,
    pub n_skipped: usize,
    pub n_infinite: usize,
    pub mean_sample_size: f64,
    pub skip_reasons: BTreeMap<String, usize>,
}

impl CellSummary {
    fn from_outcomes(scheme: String, target: String, model: String, outcomes: &[CellOutcome]) -> Self {
        let mut covered = 0usize;
        let mut n_reps = 0usize;
        let mut n_infinite = 0usize;
        let mut width_sum = 0.0;
        let mut size_sum = 0.0;
        let mut skip_reasons = BTreeMap::new();
        for o in outcomes {
            match o {
                CellOutcome::Evaluated { covered: c, width, size } => {
                    n_reps += 1;
                    covered += usize::from(*c);
                    size_sum += *size as f64;
                    if width.is_finite() {
                        width_sum += width;
                    } else {
                        n_infinite += 1;
                    }
                }
                CellOutcome::Skipped(reason) => *skip_reasons.entry(reason.clone()).or_insert(0) += 1,
            }
        }
        let coverage = if n_reps > 0 { covered as f64 / n_reps as f64 } else { f64::NAN };
        let finite = n_reps - n_infinite;
        Self {
            scheme,
            target,
            model,
            coverage,
            width: match (n_reps, finite) {
                (0, _) => f64::NAN,
                (_, 0) => f64::INFINITY,
                _ => width_sum / finite as f64,
            },
            se: (coverage * (1.0 - coverage) / n_reps as f64).sqrt(),
            n_reps,
            n_skipped: skip_reasons.values().sum(),
            n_infinite,
            mean_sample_size: if n_reps > 0 { size_sum / n_reps as f64 } else { f64::NAN },
            skip_reasons,
        }
    }
}

/// Coverage table for an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub experiment: String,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
    pub cells: Vec<CellSummary>,
    /// Per-run counters such as resampled populations or clamped dyads.
    pub diagnostics: BTreeMap<String, f64>,
}

/// Column order of [`CoverageReport::write_csv`].
pub const COVERAGE_CSV_HEADER: &str = "scheme,target,model,coverage,width,se,n_reps,n_skipped";

impl CoverageReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{COVERAGE_CSV_HEADER}")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                c.scheme, c.target, c.model, c.coverage, c.width, c.se, c.n_reps, c.n_skipped
            )?;
        }
        Ok(())
    }

    pub fn cell(&self, scheme: &str, target: &str, model: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.target == target && c.model == model)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum CellOutcome {
    Evaluated { covered: bool, width: f64, size: usize },
    Skipped(String),
}

fn skip_reason(e: &Error) -> String {
    match e {
        Error::SampleTooSmall { .. } => "sample_too_small".into(),
        Error::EmptyFold { .. } => "empty_fold".into(),
        Error::RankDeficient { .. } => "rank_deficient".into(),
        Error::EigenNoConvergence { .. } => "eigen_no_convergence".into(),
        other => format!("error: {other}"),
    }
}

fn evaluate(set: &PredictionSet, y: f64, size: usize) -> CellOutcome {
    CellOutcome::Evaluated {
        covered: set.contains(y),
        width: set.width(),
        size,
    }
}

#[cfg(feature = "parallel")]
fn map_replicates<T: Send>(reps: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..reps).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_replicates<T>(reps: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..reps).map(f).collect()
}

struct SnowballReplicate {
    cells: Vec<CellOutcome>,
    clamp_rate: f64,
    population_retries: usize,
}

/// Referral digraph for a scheme; `None` means the population graph itself.
fn referral_graph(
    scheme: Scheme,
    cfg: &SnowballExperimentConfig,
    draw: &super::datasets::SarDraw,
    rng: &mut SimRng,
) -> Result<Option<Graph>> {
    let g = &draw.dataset.graph;
    let n = g.n();
    match scheme {
        Scheme::AllNeighbors => Ok(None),
        Scheme::TopPropensity => {
            let mut p = draw.propensities();
            if let PropensityRanking::Perturbed { noise } = cfg.scheme2_ranking {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            p[(i, j)] += noise * rng.random::<f64>();
                        }
                    }
                }
            }
            sample_fixed_out_degree_digraph(&p, 10).map(Some)
        }
        Scheme::RandomReferral => {
            let mut w = Mat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        w[(i, j)] = f64::from(u8::from(g.has_edge(i, j))) + rng.random::<f64>();
                    }
                }
            }
            sample_fixed_out_degree_digraph(&w, 5).map(Some)
        }
    }
}

fn select_target(referral: &Graph, seeds: &[usize], target: Target) -> Result<Vec<usize>> {
    Ok(match target {
        Target::Wave1 => snowball_wave(referral, seeds, 1)?.selected,
        Target::Wave2 => snowball_wave(referral, seeds, 2)?.selected,
        Target::Hop2 => k_hop_union(referral, seeds, 2)?.selected,
    })
}

fn snowball_cell(
    ds: &NodeDataset,
    selected: &[usize],
    model: SnowballModel,
    cfg: &SnowballExperimentConfig,
    rng: &mut SimRng,
) -> CellOutcome {
    let mut run = || -> Result<CellOutcome> {
        if selected.len() < 3 {
            return Err(Error::SampleTooSmall { size: selected.len() });
        }
        let test = TestPoint::Node {
            node: selected[rng.random_range(0..selected.len())],
        };
        let (cov, kind) = match model {
            SnowballModel::Smoother => (None, ModelKind::KernelSmoother { bandwidth: None }),
            SnowballModel::LinearAse => {
                let stat = NetworkStatistic::Ase { dim: cfg.ase_dim };
                (
                    Some(CovariateBundle::from_selection(&ds.graph, selected, &[stat])?),
                    ModelKind::Ols { ridge: cfg.ridge },
                )
            }
        };
        let out = split_conformal_predict(ds, selected, cov.as_ref(), test, &cfg.split, cfg.alpha, &kind)?;
        Ok(evaluate(&out.set, ds.y[out.test_node], selected.len()))
    };
    run().unwrap_or_else(|e| CellOutcome::Skipped(skip_reason(&e)))
}

const MAX_POPULATION_RETRIES: usize = 100;

fn snowball_replicate(cfg: &SnowballExperimentConfig, rep: usize) -> Result<SnowballReplicate> {
    let mut rng = substream(cfg.seed, rep as u64);
    let mut retries = 0;
    let draw = loop {
        match gen_sar_dataset(&cfg.population, &mut rng) {
            Ok(d) => break d,
            Err(Error::Singular) if retries < MAX_POPULATION_RETRIES => retries += 1,
            Err(e) => return Err(e),
        }
    };
    let ds = &draw.dataset;
    let mut cells = Vec::new();
    for &scheme in &cfg.schemes {
        let referral = referral_graph(scheme, cfg, &draw, &mut rng)?;
        let walk_graph = referral.as_ref().unwrap_or(&ds.graph);
        let seeds = sample(&mut rng, ds.n(), scheme.seeds()).into_vec();
        for &target in &cfg.targets {
            let selected = select_target(walk_graph, &seeds, target)?;
            for &model in &cfg.models {
                cells.push(snowball_cell(ds, &selected, model, cfg, &mut rng));
            }
        }
    }
    Ok(SnowballReplicate {
        cells,
        clamp_rate: draw.clamp_rate(),
        population_retries: retries,
    })
}

/// Coverage and width of split conformal prediction on snowball samples
/// from the SAR population.
pub fn run_snowball_experiment(cfg: &SnowballExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let reps = map_replicates(cfg.replicates, |r| snowball_replicate(cfg, r));
    let reps: Vec<SnowballReplicate> = reps.into_iter().collect::<Result<_>>()?;
    let mut cells = Vec::new();
    let mut idx = 0;
    for &scheme in &cfg.schemes {
        for &target in &cfg.targets {
            for &model in &cfg.models {
                let outcomes: Vec<CellOutcome> = reps.iter().map(|r| r.cells[idx].clone()).collect();
                cells.push(CellSummary::from_outcomes(
                    scheme.number().to_string(),
                    target.to_string(),
                    model.to_string(),
                    &outcomes,
                ));
                idx += 1;
            }
        }
    }
    let mut diagnostics = BTreeMap::new();
    let k = reps.len() as f64;
    diagnostics.insert("mean_clamp_rate".into(), reps.iter().map(|r| r.clamp_rate).sum::<f64>() / k);
    diagnostics.insert(
        "population_resamples".into(),
        reps.iter().map(|r| r.population_retries as f64).sum(),
    );
    Ok(CoverageReport {
        experiment: "snowball".into(),
        alpha: cfg.alpha,
        replicates: cfg.replicates,
        seed: cfg.seed,
        cells,
        diagnostics,
    })
}

struct WalkReplicate {
    weighted: CellOutcome,
    uniform: Option<CellOutcome>,
    restarts: usize,
}

const MAX_WALK_RESTARTS: usize = 1000;

fn walk_replicate(cfg: &WalkExperimentConfig, rep: usize) -> Result<WalkReplicate> {
    let mut rng = substream(cfg.seed, rep as u64);
    let ds = gen_walk_dataset(cfg.n, cfg.nu, &mut rng)?;
    let features = ds.x.select_columns(&[0, 1]);
    let model = ModelKind::Ols { ridge: cfg.ridge };
    let mut restarts = 0;
    let trace = loop {
        match random_walk_with_policy(&ds.graph, &cfg.start, 2 * cfg.m, &mut rng) {
            Ok(t) => break t,
            Err(Error::WalkStuck { .. }) if restarts < MAX_WALK_RESTARTS => restarts += 1,
            Err(e) => return Err(e),
        }
    };
    let test = rng.random_range(0..cfg.n);
    let weighted = match WeightedWalkPredictor::fit(&ds, &features, &trace, cfg.alpha, &model) {
        Ok(p) => evaluate(&p.predict_set(features.row(test)), ds.y[test], 2 * cfg.m + 1),
        Err(e) => CellOutcome::Skipped(skip_reason(&e)),
    };
    let uniform = cfg
        .uniform_baseline
        .then(|| uniform_arm(&ds, &features, cfg, &model, &mut rng));
    Ok(WalkReplicate {
        weighted,
        uniform,
        restarts,
    })
}

fn uniform_arm(
    ds: &NodeDataset,
    features: &Mat,
    cfg: &WalkExperimentConfig,
    model: &ModelKind,
    rng: &mut SimRng,
) -> CellOutcome {
    let mut run = || -> Result<CellOutcome> {
        let m = cfg.m;
        let nodes = sample(rng, cfg.n, 2 * m + 1).into_vec();
        let (train, rest) = nodes.split_at(m);
        let (cal, test) = rest.split_at(m);
        let y_train: Vec<f64> = train.iter().map(|&i| ds.y[i]).collect();
        let fitted = model.fit(&features.select_rows(train), &y_train)?;
        let scores: Vec<f64> = cal
            .iter()
            .map(|&i| score(&fitted, ds.y[i], features.row(i)))
            .collect();
        let t = test[0];
        let set = PredictionSet {
            mode: crate::conformal::ConformalMode::Split,
            threshold: split_conformal_threshold(&scores, cfg.alpha)?,
            center: fitted.predict(features.row(t)),
        };
        Ok(evaluate(&set, ds.y[t], 2 * m))
    };
    run().unwrap_or_else(|e| CellOutcome::Skipped(skip_reason(&e)))
}

/// Weighted conformal prediction on random-walk samples of the latent
/// space population, with an optional uniform-sampling baseline.
pub fn run_walk_experiment(cfg: &WalkExperimentConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    let reps = map_replicates(cfg.replicates, |r| walk_replicate(cfg, r));
    let reps: Vec<WalkReplicate> = reps.into_iter().collect::<Result<_>>()?;
    let weighted: Vec<CellOutcome> = reps.iter().map(|r| r.weighted.clone()).collect();
    let mut cells = vec![CellSummary::from_outcomes(
        "random_walk".into(),
        "population".into(),
        "ols".into(),
        &weighted,
    )];
    if cfg.uniform_baseline {
        let uniform: Vec<CellOutcome> = reps.iter().filter_map(|r| r.uniform.clone()).collect();
        cells.push(CellSummary::from_outcomes(
            "uniform".into(),
            "population".into(),
            "ols".into(),
            &uniform,
        ));
    }
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("walk_restarts".into(), reps.iter().map(|r| r.restarts as f64).sum());
    Ok(CoverageReport {
        experiment: "walk".into(),
        alpha: cfg.alpha,
        replicates: cfg.replicates,
        seed: cfg.seed,
        cells,
        diagnostics,
    })
}

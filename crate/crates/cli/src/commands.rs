use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use netconformal::conformal::{split_conformal_predict, FoldSplit, TestPoint};
use netconformal::covariates::{CovariateBundle, NetworkStatistic};
use netconformal::graph_models::{
    sample_graphon_graph, GraphonSpec, Kernel, LatentPositions, NodeDataset,
};
use netconformal::regression::ModelKind;
use netconformal::rng::{seeded, substream};
use netconformal::sampling::{random_walk_with_policy, SelectionResult, SelectionRule, StartPolicy};
use netconformal::simulation::{
    gen_sar_dataset, gen_walk_dataset, run_snowball_experiment, run_walk_experiment,
    CoverageReport, SarParams, SnowballExperimentConfig, WalkExperimentConfig,
};
use netconformal::spectral::{kernel_operator_eig_check, KernelEigRow, SpectralReport, TvStart};
use netconformal::verify::{
    run_coverage_suite, run_exchangeability_suite, run_invariance_suite, CoverageSuiteConfig,
    ExchangeabilitySuiteConfig, InvarianceSuiteConfig, VerifyReport,
};
use netconformal::{Error, Graph};

use crate::config::resolve;
use crate::manifest::Recorder;
use crate::{Cli, Command, ExperimentKind, Format, GlobalArgs, Suite};

/// Population models accepted by `generate` and `spectral`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Population {
    /// Sparse graphon `ρ w(ξᵢ, ξⱼ)` with uniform latent positions.
    Graphon { n: usize, kernel: Kernel, rho: f64 },
    /// Spatial autoregressive responses on a min-graphon RDPG.
    Sar(SarParams),
    /// Gaussian latent-space graph with nonlinear responses.
    Walk { n: usize, nu: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    pub population: Population,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            population: Population::Sar(SarParams::default()),
        }
    }
}

impl GenerateConfig {
    fn paper_scale() -> Self {
        Self {
            seed: 0,
            population: Population::Sar(SarParams {
                n: 2000,
                ..SarParams::default()
            }),
        }
    }
}

/// A drawn population: always a graph, plus node data when the model has it.
struct Drawn {
    graph: Graph,
    dataset: Option<NodeDataset>,
    latent: Option<LatentPositions>,
    kernel: Option<Kernel>,
}

const SAR_ATTEMPTS: u64 = 16;

fn draw_population(pop: &Population, seed: u64) -> Result<Drawn> {
    let mut rng = seeded(seed);
    match pop {
        Population::Graphon { n, kernel, rho } => {
            let xi = LatentPositions::uniform(*n, &mut rng);
            let spec = GraphonSpec {
                kernel: kernel.clone(),
                rho: *rho,
            };
            let graph = sample_graphon_graph(&spec, &xi, &mut rng)?;
            Ok(Drawn {
                graph,
                dataset: None,
                latent: Some(xi),
                kernel: Some(kernel.clone()),
            })
        }
        Population::Sar(params) => {
            for attempt in 0..SAR_ATTEMPTS {
                let mut rng = substream(seed, attempt);
                match gen_sar_dataset(params, &mut rng) {
                    Ok(draw) => {
                        if draw.clamped > 0 {
                            eprintln!(
                                "warning: {} edge probabilities ({:.2}%) fell outside [0, 1] and were clamped",
                                draw.clamped,
                                100.0 * draw.clamp_rate()
                            );
                        }
                        return Ok(Drawn {
                            graph: draw.dataset.graph.clone(),
                            latent: draw.dataset.latent.clone(),
                            dataset: Some(draw.dataset),
                            kernel: Some(Kernel::Min),
                        })
                    }
                    Err(Error::Singular) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
            bail!("SAR system was singular in {SAR_ATTEMPTS} consecutive draws")
        }
        Population::Walk { n, nu } => {
            let ds = gen_walk_dataset(*n, *nu, &mut rng)?;
            Ok(Drawn {
                graph: ds.graph.clone(),
                dataset: Some(ds),
                latent: None,
                kernel: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkSpec {
    #[serde(default)]
    pub start: StartPolicy,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub graph: Option<PathBuf>,
    pub directed: bool,
    /// Node count; defaults to one past the largest index in the edge list.
    pub n: Option<usize>,
    pub rule: Option<SelectionRule>,
    pub walk: Option<WalkSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub graph: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub directed: bool,
    pub rule: Option<SelectionRule>,
    pub alpha: f64,
    pub model: ModelKind,
    /// Network statistics computed on the selected subgraph.
    pub covariates: Vec<NetworkStatistic>,
    pub split: FoldSplit,
    pub test: TestPoint,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            graph: None,
            nodes: None,
            directed: false,
            rule: None,
            alpha: 0.1,
            model: ModelKind::Ols { ridge: 0.0 },
            covariates: Vec::new(),
            split: FoldSplit::Parity,
            test: TestPoint::Largest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub graph: Option<PathBuf>,
    pub population: Option<Population>,
    pub seed: u64,
    pub steps: usize,
    /// Start set of the TV curve; all nodes up to 500, else degree extremes.
    pub start: Option<TvStart>,
    /// Compare the top eigenvalues of the kernel matrix with the operator's.
    pub kernel_check: Option<usize>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            graph: None,
            population: None,
            seed: 0,
            steps: 50,
            start: None,
            kernel_check: None,
        }
    }
}

const WORST_CASE_LIMIT: usize = 500;
const SHOWN_FAILURES: usize = 5;

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match &cli.command {
        Command::Generate => generate(g),
        Command::Sample { graph } => sample(g, graph.as_deref()),
        Command::Predict { graph, nodes } => predict(g, graph.as_deref(), nodes.as_deref()),
        Command::Experiment { kind } => experiment(g, *kind),
        Command::Spectral { graph, steps } => spectral(g, graph.as_deref(), *steps),
        Command::Verify {
            suite,
            inject_broken_selector,
        } => verify(g, *suite, *inject_broken_selector),
    }
}

fn base<T>(g: &GlobalArgs, default: T, paper: Option<T>) -> Result<T> {
    match (g.paper_scale, paper) {
        (false, _) => Ok(default),
        (true, Some(p)) => Ok(p),
        (true, None) => bail!("--paper-scale has no effect on this subcommand"),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn load_graph(path: &Path, n: Option<usize>, directed: bool) -> Result<Graph> {
    Graph::read_edge_list(open(path)?, n, directed).with_context(|| path.display().to_string())
}

/// Number of data rows in a node table.
fn count_node_rows(path: &Path) -> Result<usize> {
    let mut rows = 0usize;
    for line in open(path)?.lines() {
        if !line?.trim().is_empty() {
            rows += 1;
        }
    }
    Ok(rows.saturating_sub(1))
}

fn generate(g: &GlobalArgs) -> Result<ExitCode> {
    let cfg: GenerateConfig = resolve(
        base(g, GenerateConfig::default(), Some(GenerateConfig::paper_scale()))?,
        g.config.as_deref(),
        g.seed,
    )?;
    let drawn = draw_population(&cfg.population, cfg.seed)?;
    let mut rec = Recorder::start(&g.out, "generate")?;
    rec.write("edges.csv", |w| Ok(drawn.graph.write_edge_list(w)?))?;
    rec.write("nodes.csv", |w| {
        if let Some(ds) = &drawn.dataset {
            return Ok(ds.write_nodes_csv(w)?);
        }
        use std::io::Write;
        writeln!(w, "node,xi")?;
        if let Some(xi) = &drawn.latent {
            for (i, v) in xi.as_slice().iter().enumerate() {
                writeln!(w, "{i},{v}")?;
            }
        }
        Ok(())
    })?;
    eprintln!(
        "generated {} nodes, {} edges",
        drawn.graph.n(),
        drawn.graph.edge_count()
    );
    rec.finish(&cfg, Some(cfg.seed))?;
    Ok(ExitCode::SUCCESS)
}

fn sample(g: &GlobalArgs, graph: Option<&Path>) -> Result<ExitCode> {
    let mut cfg: SampleConfig = resolve(base(g, SampleConfig::default(), None)?, g.config.as_deref(), g.seed)?;
    if let Some(p) = graph {
        cfg.graph = Some(p.to_path_buf());
    }
    let path = cfg
        .graph
        .clone()
        .ok_or_else(|| anyhow!("no graph given (use --graph or `graph` in the config)"))?;
    let graph = load_graph(&path, cfg.n, cfg.directed)?;
    let mut rec = Recorder::start(&g.out, "sample")?;
    match (&cfg.rule, &cfg.walk) {
        (Some(rule), None) => {
            rule.conditioning_set().iter().try_for_each(|&i| graph.check_node(i))?;
            let result = SelectionResult {
                rule: rule.clone(),
                selected: rule.select(&graph),
            };
            eprintln!("selected {} nodes", result.len());
            rec.write_json("selection.json", &result)?;
        }
        (None, Some(walk)) => {
            let trace = random_walk_with_policy(&graph, &walk.start, walk.steps, &mut seeded(cfg.seed))?;
            rec.write_json("trace.json", &trace)?;
        }
        _ => bail!("the sample config needs exactly one of `rule` and `walk`"),
    }
    rec.finish(&cfg, Some(cfg.seed))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PredictionOutput<'a> {
    selection: &'a SelectionResult,
    alpha: f64,
    covariates: &'a [String],
    #[serde(flatten)]
    outcome: &'a netconformal::conformal::SplitConformalOutcome,
}

fn predict(g: &GlobalArgs, graph: Option<&Path>, nodes: Option<&Path>) -> Result<ExitCode> {
    let mut cfg: PredictConfig = resolve(base(g, PredictConfig::default(), None)?, g.config.as_deref(), g.seed)?;
    if let Some(p) = graph {
        cfg.graph = Some(p.to_path_buf());
    }
    if let Some(p) = nodes {
        cfg.nodes = Some(p.to_path_buf());
    }
    let (Some(graph_path), Some(nodes_path)) = (cfg.graph.clone(), cfg.nodes.clone()) else {
        bail!("predict needs both an edge list and a node table");
    };
    let rule = cfg
        .rule
        .clone()
        .ok_or_else(|| anyhow!("no selection `rule` in the config"))?;
    if !rule.is_conformal_valid() {
        bail!("selection rule {rule:?} does not give conformal guarantees");
    }
    let n = count_node_rows(&nodes_path)?;
    let graph = load_graph(&graph_path, Some(n), cfg.directed)?;
    let ds = NodeDataset::read_nodes_csv(open(&nodes_path)?, graph)
        .with_context(|| nodes_path.display().to_string())?;
    rule.conditioning_set().iter().try_for_each(|&i| ds.graph.check_node(i))?;
    let selection = SelectionResult {
        selected: rule.select(&ds.graph),
        rule,
    };
    let cov = if cfg.covariates.is_empty() {
        None
    } else {
        Some(CovariateBundle::from_selection(&ds.graph, &selection.selected, &cfg.covariates)?)
    };
    let outcome = split_conformal_predict(
        &ds,
        &selection.selected,
        cov.as_ref(),
        cfg.test,
        &cfg.split,
        cfg.alpha,
        &cfg.model,
    )?;
    let (lo, hi) = outcome.set.interval();
    println!(
        "node {}: [{lo}, {hi}] at level {} from {} calibration scores",
        outcome.test_node,
        1.0 - cfg.alpha,
        outcome.scores.len()
    );
    let mut rec = Recorder::start(&g.out, "predict")?;
    let columns = cov.as_ref().map(|c| c.columns.clone()).unwrap_or_default();
    rec.write_json(
        "prediction.json",
        &PredictionOutput {
            selection: &selection,
            alpha: cfg.alpha,
            covariates: &columns,
            outcome: &outcome,
        },
    )?;
    if let Some(c) = &cov {
        rec.write("covariates.csv", |w| Ok(c.write_csv(w)?))?;
    }
    rec.finish(&cfg, None)?;
    Ok(ExitCode::SUCCESS)
}

fn write_report(rec: &mut Recorder, report: &CoverageReport, format: Format) -> Result<()> {
    match format {
        Format::Csv => rec.write("coverage.csv", |w| Ok(report.write_csv(w)?))?,
        Format::Json => rec.write_json("coverage.json", report)?,
    };
    Ok(())
}

fn print_cells(report: &CoverageReport) {
    for c in &report.cells {
        println!(
            "{:<14} {:<10} {:<10} coverage {:.3}  width {:.3}  reps {} skipped {}",
            c.scheme, c.target, c.model, c.coverage, c.width, c.n_reps, c.n_skipped
        );
    }
}

fn experiment(g: &GlobalArgs, kind: ExperimentKind) -> Result<ExitCode> {
    let mut rec;
    match kind {
        ExperimentKind::Snowball => {
            let cfg: SnowballExperimentConfig = resolve(
                base(
                    g,
                    SnowballExperimentConfig::default(),
                    Some(SnowballExperimentConfig::paper_scale()),
                )?,
                g.config.as_deref(),
                g.seed,
            )?;
            rec = Recorder::start(&g.out, "experiment snowball")?;
            let report = run_snowball_experiment(&cfg)?;
            print_cells(&report);
            write_report(&mut rec, &report, g.format)?;
            rec.finish(&cfg, Some(cfg.seed))?;
        }
        ExperimentKind::Walk => {
            let cfg: WalkExperimentConfig = resolve(
                base(
                    g,
                    WalkExperimentConfig::default(),
                    Some(WalkExperimentConfig::paper_scale()),
                )?,
                g.config.as_deref(),
                g.seed,
            )?;
            for w in cfg.warnings() {
                eprintln!("warning: {w}");
            }
            rec = Recorder::start(&g.out, "experiment walk")?;
            let report = run_walk_experiment(&cfg)?;
            print_cells(&report);
            write_report(&mut rec, &report, g.format)?;
            rec.finish(&cfg, Some(cfg.seed))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SpectralOutput<'a> {
    #[serde(flatten)]
    report: &'a SpectralReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_eigenvalues: Option<Vec<KernelEigRow>>,
}

fn spectral(g: &GlobalArgs, graph: Option<&Path>, steps: Option<usize>) -> Result<ExitCode> {
    let mut cfg: SpectralConfig = resolve(base(g, SpectralConfig::default(), None)?, g.config.as_deref(), g.seed)?;
    if let Some(p) = graph {
        cfg.graph = Some(p.to_path_buf());
        cfg.population = None;
    }
    if let Some(t) = steps {
        cfg.steps = t;
    }
    let drawn = match (&cfg.graph, &cfg.population) {
        (Some(path), None) => Drawn {
            graph: load_graph(path, None, false)?,
            dataset: None,
            latent: None,
            kernel: None,
        },
        (None, Some(pop)) => draw_population(pop, cfg.seed)?,
        (Some(_), Some(_)) => bail!("give either `graph` or `population`, not both"),
        (None, None) => bail!("no graph given (use --graph, or `graph` or `population` in the config)"),
    };
    let start = cfg.start.clone().unwrap_or(if drawn.graph.n() <= WORST_CASE_LIMIT {
        TvStart::WorstCase
    } else {
        TvStart::Extremes
    });
    let report = SpectralReport::compute(&drawn.graph, &start, cfg.steps)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let kernel_eigenvalues = match (cfg.kernel_check, &drawn.kernel, &drawn.latent) {
        (None, _, _) => None,
        (Some(k), Some(kernel), Some(xi)) => Some(kernel_operator_eig_check(kernel, xi, k)?),
        (Some(_), _, _) => bail!("kernel_check needs a graphon or sar population"),
    };
    println!("gamma {:.6}", report.gamma);
    if let Some(env) = &report.envelope {
        println!("envelope K_hat {:.6} gamma_hat {:.6}", env.k_hat, env.gamma_hat);
    }
    let mut rec = Recorder::start(&g.out, "spectral")?;
    rec.write_json(
        "spectral.json",
        &SpectralOutput {
            report: &report,
            kernel_eigenvalues,
        },
    )?;
    if g.format == Format::Csv {
        rec.write("tv.csv", |w| Ok(report.write_tv_csv(w)?))?;
    }
    rec.finish(&cfg, Some(cfg.seed))?;
    Ok(ExitCode::SUCCESS)
}

fn verify(g: &GlobalArgs, suite: Suite, inject: bool) -> Result<ExitCode> {
    base(g, (), None)?;
    let mut rec = Recorder::start(&g.out, format!("verify {}", suite_name(suite)))?;
    let report: VerifyReport = match suite {
        Suite::Invariance => {
            let mut cfg: InvarianceSuiteConfig =
                resolve(InvarianceSuiteConfig::default(), g.config.as_deref(), g.seed)?;
            cfg.inject_broken |= inject;
            let r = run_invariance_suite(&cfg)?;
            rec.write_json("verify_invariance.json", &r)?;
            rec.finish(&cfg, Some(cfg.seed))?;
            r
        }
        Suite::Exchangeability => {
            let mut cfg: ExchangeabilitySuiteConfig =
                resolve(ExchangeabilitySuiteConfig::default(), g.config.as_deref(), g.seed)?;
            cfg.inject_broken |= inject;
            let r = run_exchangeability_suite(&cfg)?;
            rec.write_json("verify_exchangeability.json", &r)?;
            rec.finish(&cfg, None)?;
            r
        }
        Suite::Coverage => {
            if inject {
                bail!("--inject-broken-selector applies to the invariance and exchangeability suites");
            }
            let cfg: CoverageSuiteConfig =
                resolve(CoverageSuiteConfig::default(), g.config.as_deref(), g.seed)?;
            let r = run_coverage_suite(&cfg)?;
            rec.write_json("verify_coverage.json", &r)?;
            rec.finish(&cfg, Some(cfg.seed))?;
            r
        }
    };
    for note in &report.notes {
        println!("{note}");
    }
    if report.passed {
        println!("{}: PASS ({} checks)", report.suite, report.checks);
        Ok(ExitCode::SUCCESS)
    } else {
        println!("{}: FAIL ({} of {} checks)", report.suite, report.failures.len(), report.checks);
        for f in report.failures.iter().take(SHOWN_FAILURES) {
            eprintln!("{}: {}", f.case, serde_json::to_string(&f.counterexample)?);
        }
        if report.failures.len() > SHOWN_FAILURES {
            eprintln!("... {} more in the report", report.failures.len() - SHOWN_FAILURES);
        }
        Ok(ExitCode::from(1))
    }
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Invariance => "invariance",
        Suite::Exchangeability => "exchangeability",
        Suite::Coverage => "coverage",
    }
}

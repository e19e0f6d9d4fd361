//! Data-generating processes and Monte Carlo drivers for coverage studies.

mod datasets;
mod experiments;

pub use datasets::{
    gen_sar_dataset, gen_walk_dataset, neumann_solve, solve_sar, SarDraw, SarParams, SarSolver,
    WALK_COV, WALK_MEAN,
};
pub use experiments::{
    run_snowball_experiment, run_walk_experiment, CellSummary, CoverageReport, PropensityRanking,
    Scheme, SnowballExperimentConfig, SnowballModel, Target, WalkExperimentConfig,
    COVERAGE_CSV_HEADER,
};

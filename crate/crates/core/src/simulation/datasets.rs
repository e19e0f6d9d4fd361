use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariates::{shell_weight_matrix, ShellWeights};
use crate::error::{invalid, Error, Result};
use crate::graph_models::{
    min_graphon_rdpg_positions, sample_gaussian_latent_space_graph, sample_rdpg_graph,
    LatentPositions, NodeDataset,
};
use crate::linalg::{cholesky, dot, lu_solve, Mat};

/// How the endogenous response system `(I − ρB) Y = rhs` is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SarSolver {
    /// Dense LU with partial pivoting.
    #[default]
    Dense,
    /// Neumann series `Σ (ρB)^k rhs`.
    Neumann,
}

/// Parameters of the spatial autoregressive population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SarParams {
    pub n: usize,
    /// `ν_n = nu_scale · n^{-nu_exponent}`, clamped to `[0, 1]`.
    pub nu_scale: f64,
    pub nu_exponent: f64,
    /// Embedding rank of the truncated min graphon.
    pub rank: usize,
    /// Shell weights for the neighbor-weighted response and covariate.
    pub beta: Vec<f64>,
    pub solver: SarSolver,
}

impl Default for SarParams {
    fn default() -> Self {
        Self {
            n: 500,
            nu_scale: 5.0,
            nu_exponent: 0.25,
            rank: 3,
            beta: vec![1.0],
            solver: SarSolver::Dense,
        }
    }
}

impl SarParams {
    pub fn nu(&self) -> f64 {
        (self.nu_scale * (self.n as f64).powf(-self.nu_exponent)).clamp(0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("n", "population needs at least two nodes"));
        }
        if self.rank < 3 {
            return Err(invalid("rank", "the response uses the first three latent coordinates"));
        }
        if !(self.nu_scale.is_finite() && self.nu_scale >= 0.0 && self.nu_exponent.is_finite()) {
            return Err(invalid("nu_scale", "sparsity parameters must be finite, scale nonnegative"));
        }
        ShellWeights::new(self.beta.clone())?;
        Ok(())
    }
}

/// A SAR population together with its edge probabilities.
#[derive(Debug, Clone)]
pub struct SarDraw {
    pub dataset: NodeDataset,
    /// Latent positions `Z` (`n × rank`).
    pub z: Mat,
    pub nu: f64,
    /// Dyads whose probability fell outside `[0, 1]`.
    pub clamped: usize,
    /// `‖(I − 0.5B)Y − rhs‖∞`.
    pub residual: f64,
}

impl SarDraw {
    /// Raw (unclamped) edge propensities `ν Zᵢᵀ Zⱼ`.
    pub fn propensities(&self) -> Mat {
        let n = self.z.rows();
        let mut p = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    p[(i, j)] = self.nu * dot(self.z.row(i), self.z.row(j));
                }
            }
        }
        p
    }

    pub fn clamp_rate(&self) -> f64 {
        let n = self.z.rows() as f64;
        self.clamped as f64 / (n * (n - 1.0) / 2.0)
    }
}

const SAR_AUTOREGRESSION: f64 = 0.5;
const SAR_RESIDUAL_TOL: f64 = 1e-8;

/// Solve `(I − ρB) y = rhs`.
pub fn solve_sar(b: &Mat, rho: f64, rhs: &[f64], solver: SarSolver) -> Result<Vec<f64>> {
    let n = b.rows();
    match solver {
        SarSolver::Dense => {
            let mut m = Mat::identity(n);
            for i in 0..n {
                for (v, bij) in m.row_mut(i).iter_mut().zip(b.row(i)) {
                    *v -= rho * bij;
                }
            }
            lu_solve(&m, rhs)
        }
        SarSolver::Neumann => neumann_solve(b, rho, rhs, 1e-14, 10_000),
    }
}

/// `y = Σ_k (ρB)^k rhs`, stopping once a term is below `tol · ‖rhs‖∞`.
pub fn neumann_solve(b: &Mat, rho: f64, rhs: &[f64], tol: f64, max_terms: usize) -> Result<Vec<f64>> {
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut y = rhs.to_vec();
    let mut term = rhs.to_vec();
    for _ in 0..max_terms {
        term = b.matvec(&term).into_iter().map(|v| rho * v).collect();
        let size = term.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        y.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
        if size <= tol * scale {
            return Ok(y);
        }
    }
    Err(Error::Singular)
}

fn sar_residual(b: &Mat, rho: f64, y: &[f64], rhs: &[f64]) -> f64 {
    let by = b.matvec(y);
    y.iter()
        .zip(&by)
        .zip(rhs)
        .map(|((yi, byi), r)| (yi - rho * byi - r).abs())
        .fold(0.0, f64::max)
}

/// Spatial autoregressive population on a truncated min-graphon RDPG:
/// `Y = 2 + 0.5 BY + 2 BX + 10 Z₁ + 20 Z₂ + 10 Z₃ + 4X + ε` with
/// `X = U + 4 Z₁`, `U ~ U[−2, 1]`, `ε ~ N(0, 1)`.
pub fn gen_sar_dataset<R: Rng + ?Sized>(params: &SarParams, rng: &mut R) -> Result<SarDraw> {
    params.validate()?;
    let n = params.n;
    let xi = LatentPositions::uniform(n, rng);
    let z = min_graphon_rdpg_positions(&xi, params.rank)?;
    let nu = params.nu();
    let draw = sample_rdpg_graph(&z, nu, rng)?;
    let x: Vec<f64> = (0..n)
        .map(|i| rng.random_range(-2.0..1.0) + 4.0 * z[(i, 0)])
        .collect();
    let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let beta = ShellWeights::new(params.beta.clone())?;
    let (b, _) = shell_weight_matrix(&draw.graph, &beta);
    let bx = b.matvec(&x);
    let rhs: Vec<f64> = (0..n)
        .map(|i| {
            2.0 + 2.0 * bx[i] + 10.0 * z[(i, 0)] + 20.0 * z[(i, 1)] + 10.0 * z[(i, 2)]
                + 4.0 * x[i]
                + eps[i]
        })
        .collect();
    let y = solve_sar(&b, SAR_AUTOREGRESSION, &rhs, params.solver)?;
    let residual = sar_residual(&b, SAR_AUTOREGRESSION, &y, &rhs);
    if !(residual < SAR_RESIDUAL_TOL) {
        return Err(Error::Singular);
    }
    let dataset = NodeDataset::new(y, Mat::column_vector(&x), draw.graph)?.with_latent(xi)?;
    Ok(SarDraw {
        dataset,
        z,
        nu,
        clamped: draw.clamped,
        residual,
    })
}

/// Mean of the latent-space covariates.
pub const WALK_MEAN: [f64; 3] = [1.0, 3.0, 0.0];
/// Covariance of the latent-space covariates.
pub const WALK_COV: [[f64; 3]; 3] = [[1.0, 0.6, 0.3], [0.6, 4.0, -0.4], [0.3, -0.4, 1.0]];

/// Gaussian latent-space population:
/// `Y = 3 + 8X₁ + 4 sin(4πX₂) + 3X₃ + ε`, edges `Bernoulli(ν g(X₃ᵢ, X₃ⱼ))`.
/// All three covariates are stored; models are expected to use only the
/// first two.
pub fn gen_walk_dataset<R: Rng + ?Sized>(n: usize, nu: f64, rng: &mut R) -> Result<NodeDataset> {
    if n < 2 {
        return Err(invalid("n", "population needs at least two nodes"));
    }
    let cov = Mat::from_rows(&WALK_COV.iter().map(|r| r.to_vec()).collect::<Vec<_>>())?;
    let l = cholesky(&cov)?;
    let mut x = Mat::zeros(n, 3);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let e: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        for a in 0..3 {
            x[(i, a)] = WALK_MEAN[a] + (0..=a).map(|b| l[(a, b)] * e[b]).sum::<f64>();
        }
        let eps: f64 = StandardNormal.sample(rng);
        y.push(
            3.0 + 8.0 * x[(i, 0)]
                + 4.0 * (4.0 * std::f64::consts::PI * x[(i, 1)]).sin()
                + 3.0 * x[(i, 2)]
                + eps,
        );
    }
    let graph = sample_gaussian_latent_space_graph(&x.column(2), nu, rng)?;
    NodeDataset::new(y, x, graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn empty_graph_reduces_to_exogenous_model() {
        let b = Mat::zeros(3, 3);
        let rhs = [1.0, -2.0, 3.5];
        assert_eq!(solve_sar(&b, 0.5, &rhs, SarSolver::Dense).unwrap(), rhs.to_vec());
    }

    #[test]
    fn two_node_system_by_hand() {
        // B = [[0,1],[1,0]]: (1 − 0.25) y0 = r0 + 0.5 r1
        let b = Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let y = solve_sar(&b, 0.5, &[1.0, 2.0], SarSolver::Dense).unwrap();
        assert!((y[0] - 2.0 / 0.75).abs() < 1e-10);
        assert!((y[1] - 2.5 / 0.75).abs() < 1e-10);
        let yn = solve_sar(&b, 0.5, &[1.0, 2.0], SarSolver::Neumann).unwrap();
        assert!((yn[0] - y[0]).abs() < 1e-10 && (yn[1] - y[1]).abs() < 1e-10);
    }

    #[test]
    fn sar_draw_is_consistent() {
        let params = SarParams {
            n: 120,
            ..SarParams::default()
        };
        let d = gen_sar_dataset(&params, &mut seeded(4)).unwrap();
        assert!(d.residual < 1e-8);
        assert_eq!(d.dataset.n(), 120);
        assert_eq!(d.nu, 1.0);
        let neumann = SarParams {
            solver: SarSolver::Neumann,
            ..params
        };
        let e = gen_sar_dataset(&neumann, &mut seeded(4)).unwrap();
        let diff = d.dataset.y.iter().zip(&e.dataset.y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9);
    }

    #[test]
    fn walk_dataset_shapes() {
        let ds = gen_walk_dataset(200, 0.1, &mut seeded(1)).unwrap();
        assert_eq!(ds.x.cols(), 3);
        assert!(ds.graph.edge_count() > 0);
    }
}

//! Permutation-equivariant network summaries: degrees, adjacency spectral
//! embedding, shortest-path shells and neighbor-weighted means.
//!
//! Statistics handed to the conformal step are computed only from the
//! selected subarray `(X_i, X_j, A_ij)_{i,j ∈ S}`; relabeling that subarray
//! must permute the output rows the same way.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::linalg::{symmetric_eigen, Mat};

/// Row sums of the adjacency matrix (out-degrees for directed graphs).
pub fn degrees(g: &Graph) -> Vec<usize> {
    (0..g.n()).map(|i| g.degree(i)).collect()
}

/// Adjacency spectral embedding `Û |Λ̂|^{1/2}` from the top-`d` eigenpairs
/// by magnitude.
///
/// Each eigenvector is oriented so its largest-magnitude entry is positive
/// (lowest index wins among entries of equal magnitude); this orientation
/// is part of the statistic's definition.
pub fn ase_embedding(g: &Graph, d: usize) -> Result<Mat> {
    if g.is_directed() {
        return Err(Error::DirectedGraph);
    }
    let n = g.n();
    if d == 0 || d > n {
        return Err(invalid("d", format!("embedding dimension {d} with {n} nodes")));
    }
    let eig = symmetric_eigen(&g.to_dense())?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.values[b]
            .abs()
            .total_cmp(&eig.values[a].abs())
            .then(eig.values[b].total_cmp(&eig.values[a]))
    });
    let mut z = Mat::zeros(n, d);
    for (col, &k) in order.iter().take(d).enumerate() {
        let scale = eig.values[k].abs().sqrt();
        if scale == 0.0 {
            continue;
        }
        let v = &eig.vectors[k];
        let sign = orientation(v);
        for i in 0..n {
            z[(i, col)] = sign * scale * v[i];
        }
    }
    Ok(z)
}

fn orientation(v: &[f64]) -> f64 {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * max;
    v.iter()
        .find(|x| (x.abs() - max).abs() <= tol)
        .map_or(1.0, |x| if *x < 0.0 { -1.0 } else { 1.0 })
}

/// All-pairs shortest-path (out-edge) distances by BFS from every node.
pub fn all_pairs_distances(g: &Graph) -> Vec<Vec<Option<usize>>> {
    (0..g.n()).map(|i| g.bfs_distances(i)).collect()
}

/// Shortest-path shell summaries up to `kmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellStats {
    pub kmax: usize,
    /// `counts[k-1][i]` is `D̃_i^{(k)}`, the number of nodes at distance `k`.
    pub counts: Vec<Vec<usize>>,
    /// `means[k-1]` is the `n × d` matrix of `X̃^{(k)}`; rows of empty
    /// shells are zero.
    pub means: Vec<Mat>,
    /// `defined[k-1][i]` is false where the shell is empty.
    pub defined: Vec<Vec<bool>>,
}

/// `D̃^{(k)}` and `X̃^{(k)}` for `k = 1..=kmax`. When `kmax` is `None` it is
/// the largest finite distance in the graph (at least 1).
pub fn shortest_path_stats(g: &Graph, x: &Mat, kmax: Option<usize>) -> Result<ShellStats> {
    let n = g.n();
    if x.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} covariate rows for {n} nodes",
            x.rows()
        )));
    }
    let dist = all_pairs_distances(g);
    let diameter = dist.iter().flatten().flatten().copied().max().unwrap_or(0);
    let kmax = match kmax {
        Some(0) => return Err(invalid("kmax", "must be at least 1")),
        Some(k) => k,
        None => diameter.max(1),
    };
    let p = x.cols();
    let mut counts = vec![vec![0; n]; kmax];
    let mut means = vec![Mat::zeros(n, p); kmax];
    for (i, row) in dist.iter().enumerate() {
        for (j, dj) in row.iter().enumerate() {
            if let Some(k) = *dj {
                if k >= 1 && k <= kmax {
                    counts[k - 1][i] += 1;
                    let dst = means[k - 1].row_mut(i);
                    for (acc, v) in dst.iter_mut().zip(x.row(j)) {
                        *acc += v;
                    }
                }
            }
        }
    }
    let mut defined = vec![vec![false; n]; kmax];
    for k in 0..kmax {
        for i in 0..n {
            let c = counts[k][i];
            if c > 0 {
                defined[k][i] = true;
                for v in means[k].row_mut(i) {
                    *v /= c as f64;
                }
            }
        }
    }
    Ok(ShellStats {
        kmax,
        counts,
        means,
        defined,
    })
}

/// Shell weights `β(ℓ)` by shortest-path length `ℓ ≥ 1`; lengths beyond the
/// table get weight zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellWeights(Vec<f64>);

impl ShellWeights {
    /// `weights[ℓ - 1]` is `β(ℓ)`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid("beta", format!("weight {w} must be finite and nonnegative")));
        }
        Ok(Self(weights))
    }

    /// `β(1) = 1`, zero elsewhere.
    pub fn one_hop() -> Self {
        Self(vec![1.0])
    }

    pub fn weight(&self, length: usize) -> f64 {
        if length == 0 {
            0.0
        } else {
            self.0.get(length - 1).copied().unwrap_or(0.0)
        }
    }

    fn max_length(&self) -> usize {
        self.0.len()
    }
}

/// Values with a definedness mask; undefined entries hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Masked {
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
}

/// Row-normalized shell operator `B_ij = β(d(i,j)) / Σ_j β(d(i,j))`. Rows
/// with zero total weight are zero and flagged undefined.
pub fn shell_weight_matrix(g: &Graph, beta: &ShellWeights) -> (Mat, Vec<bool>) {
    let n = g.n();
    let mut b = Mat::zeros(n, n);
    let mut defined = vec![false; n];
    if beta.max_length() == 1 {
        for i in 0..n {
            let deg = g.degree(i);
            if deg > 0 && beta.weight(1) > 0.0 {
                defined[i] = true;
                for j in g.neighbors(i) {
                    b[(i, j)] = 1.0 / deg as f64;
                }
            }
        }
        return (b, defined);
    }
    for i in 0..n {
        let dist = g.bfs_distances(i);
        let mut total = 0.0;
        for (j, dj) in dist.iter().enumerate() {
            if let Some(l) = *dj {
                let w = beta.weight(l);
                b[(i, j)] = w;
                total += w;
            }
        }
        if total > 0.0 {
            defined[i] = true;
            for v in b.row_mut(i) {
                *v /= total;
            }
        }
    }
    (b, defined)
}

/// Neighbor-weighted mean `Ỹ_i = Σ_j β(d(i,j)) v_j / Σ_j β(d(i,j))`.
pub fn neighbor_weighted_mean(g: &Graph, values: &[f64], beta: &ShellWeights) -> Result<Masked> {
    if values.len() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} nodes",
            values.len(),
            g.n()
        )));
    }
    let (b, defined) = shell_weight_matrix(g, beta);
    Ok(Masked {
        values: b.matvec(values),
        defined,
    })
}

/// The subarray `𝒰_S = (X_i, X_j, A_ij)_{i,j ∈ S}`, relabeled `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSubarray {
    pub x: Mat,
    pub graph: Graph,
}

impl NetworkSubarray {
    pub fn from_selection(x: &Mat, g: &Graph, selected: &[usize]) -> Self {
        Self {
            x: x.select_rows(selected),
            graph: g.induced(selected),
        }
    }

    /// `𝒰^σ`, with row `i` taken from row `σ(i)`.
    pub fn permuted(&self, sigma: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(sigma),
            graph: self.graph.permuted(sigma),
        }
    }

    pub fn len(&self) -> usize {
        self.graph.n()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.n() == 0
    }
}

/// How statistic outputs are compared.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Equality {
    Bitwise,
    Tolerance(f64),
}

/// True iff `ζ(𝒰^σ)` equals the rows of `ζ(𝒰)` permuted by `σ`.
pub fn check_permutation_invariance<F>(
    zeta: F,
    u: &NetworkSubarray,
    sigma: &[usize],
    equality: Equality,
) -> Result<bool>
where
    F: Fn(&NetworkSubarray) -> Result<Mat>,
{
    let k = u.len();
    let mut seen = vec![false; k];
    if sigma.len() != k || sigma.iter().any(|&s| s >= k || std::mem::replace(&mut seen[s], true)) {
        return Err(invalid("sigma", "not a permutation of the subarray indices"));
    }
    let base = zeta(u)?;
    let relabeled = zeta(&u.permuted(sigma))?;
    let expected = base.select_rows(sigma);
    if expected.cols() != relabeled.cols() || expected.rows() != relabeled.rows() {
        return Ok(false);
    }
    let same = expected
        .as_slice()
        .iter()
        .zip(relabeled.as_slice())
        .all(|(a, b)| match equality {
            Equality::Bitwise => a.to_bits() == b.to_bits(),
            Equality::Tolerance(tol) => (a - b).abs() <= tol,
        });
    Ok(same)
}

/// Network statistics available to the regression step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stat", rename_all = "snake_case")]
pub enum NetworkStatistic {
    Degree,
    Ase { dim: usize },
}

impl NetworkStatistic {
    fn compute(&self, g: &Graph) -> Result<(Mat, Vec<String>)> {
        match *self {
            NetworkStatistic::Degree => {
                let d: Vec<f64> = degrees(g).into_iter().map(|v| v as f64).collect();
                Ok((Mat::column_vector(&d), vec!["degree".into()]))
            }
            NetworkStatistic::Ase { dim } => {
                let dim = dim.min(g.n());
                let z = ase_embedding(g, dim)?;
                Ok((z, (1..=dim).map(|k| format!("ase_{k}")).collect()))
            }
        }
    }
}

/// Network covariates `ẑ` for a selected set; row `r` belongs to node
/// `nodes[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateBundle {
    pub nodes: Vec<usize>,
    pub columns: Vec<String>,
    pub zhat: Mat,
}

impl CovariateBundle {
    /// Compute `stats` on the subgraph induced by `selected` only.
    pub fn from_selection(g: &Graph, selected: &[usize], stats: &[NetworkStatistic]) -> Result<Self> {
        let sub = g.induced(selected);
        let mut zhat = Mat::zeros(selected.len(), 0);
        let mut columns = Vec::new();
        for stat in stats {
            let (m, names) = stat.compute(&sub)?;
            zhat = zhat.hstack(&m)?;
            columns.extend(names);
        }
        Ok(Self {
            nodes: selected.to_vec(),
            columns,
            zhat,
        })
    }

    /// CSV with a header row naming each column's statistic.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "node")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
        for (r, node) in self.nodes.iter().enumerate() {
            write!(w, "{node}")?;
            for v in self.zhat.row(r) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

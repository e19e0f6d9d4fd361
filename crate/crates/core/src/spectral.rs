//! Spectral and mixing diagnostics for simple random walks.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::graph_models::{Kernel, LatentPositions};
use crate::linalg::{symmetric_eigenvalues, Mat};

fn check_walkable(g: &Graph) -> Result<()> {
    if g.is_directed() {
        return Err(Error::DirectedGraph);
    }
    if g.n() == 0 {
        return Err(Error::EmptyGraph);
    }
    match (0..g.n()).find(|&i| g.degree(i) == 0) {
        Some(node) => Err(Error::IsolatedNode { node }),
        None => Ok(()),
    }
}

/// `𝒜 = D^{-1/2} A D^{-1/2}`.
pub fn normalized_adjacency(g: &Graph) -> Result<Mat> {
    check_walkable(g)?;
    let n = g.n();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / (g.degree(i) as f64).sqrt()).collect();
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        for j in g.neighbors(i) {
            a[(i, j)] = inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(a)
}

/// Full spectrum of the normalized adjacency, sorted descending.
pub fn normalized_adjacency_eigs(g: &Graph) -> Result<Vec<f64>> {
    symmetric_eigenvalues(&normalized_adjacency(g)?)
}

/// `γ = max(λ₂, |λ_min|)` from a descending spectrum.
pub fn eigengap(eigs: &[f64]) -> f64 {
    if eigs.len() < 2 {
        return 0.0;
    }
    eigs[1].max(eigs[eigs.len() - 1].abs())
}

/// `π(j) = D_j / (2|E|)`.
pub fn stationary_distribution(g: &Graph) -> Result<Vec<f64>> {
    check_walkable(g)?;
    let total: usize = (0..g.n()).map(|i| g.degree(i)).sum();
    Ok((0..g.n())
        .map(|i| g.degree(i) as f64 / total as f64)
        .collect())
}

/// Starting points for the total-variation curve.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(tag = "start", rename_all = "snake_case")]
pub enum TvStart {
    Node { node: usize },
    Nodes { nodes: Vec<usize> },
    /// Every node; `O(n · T · |E|)`.
    WorstCase,
    /// The nodes of smallest and largest degree.
    Extremes,
}

impl TvStart {
    fn resolve(&self, g: &Graph) -> Result<Vec<usize>> {
        let nodes = match self {
            TvStart::Node { node } => vec![*node],
            TvStart::Nodes { nodes } => nodes.clone(),
            TvStart::WorstCase => (0..g.n()).collect(),
            TvStart::Extremes => {
                let by_degree = |a: &usize, b: &usize| g.degree(*a).cmp(&g.degree(*b)).then(a.cmp(b));
                let lo = (0..g.n()).min_by(by_degree).unwrap_or(0);
                let hi = (0..g.n()).max_by(|a, b| by_degree(a, b).then(b.cmp(a))).unwrap_or(0);
                if lo == hi {
                    vec![lo]
                } else {
                    vec![lo, hi]
                }
            }
        };
        if nodes.is_empty() {
            return Err(invalid("start", "no start nodes given"));
        }
        nodes.iter().try_for_each(|&i| g.check_node(i))?;
        Ok(nodes)
    }
}

/// Exact `TV(t) = ½‖P^t(·|x0) − π‖₁` for `t = 0..=t_max`.
pub fn tv_from(g: &Graph, x0: usize, t_max: usize) -> Result<Vec<f64>> {
    let pi = stationary_distribution(g)?;
    g.check_node(x0)?;
    Ok(propagate(&g.adjacency_lists(), &pi, x0, t_max))
}

fn propagate(adj: &[Vec<usize>], pi: &[f64], x0: usize, t_max: usize) -> Vec<f64> {
    let n = adj.len();
    let mut p = vec![0.0; n];
    p[x0] = 1.0;
    let mut next = vec![0.0; n];
    let tv = |p: &[f64]| 0.5 * p.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum::<f64>();
    let mut out = Vec::with_capacity(t_max + 1);
    out.push(tv(&p));
    for _ in 0..t_max {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, nbrs) in adj.iter().enumerate() {
            if p[i] == 0.0 {
                continue;
            }
            let share = p[i] / nbrs.len() as f64;
            for &j in nbrs {
                next[j] += share;
            }
        }
        std::mem::swap(&mut p, &mut next);
        out.push(tv(&p));
    }
    out
}

/// Pointwise maximum of the TV curves over the resolved starts, for
/// `t = 0..=t_max`, together with the starts used.
pub fn tv_mixing_curve(g: &Graph, start: &TvStart, t_max: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let pi = stationary_distribution(g)?;
    let starts = start.resolve(g)?;
    let adj = g.adjacency_lists();
    let mut worst = vec![0.0f64; t_max + 1];
    for &x0 in &starts {
        for (w, v) in worst.iter_mut().zip(propagate(&adj, &pi, x0, t_max)) {
            *w = w.max(v);
        }
    }
    Ok((worst, starts))
}

/// `γ^t / √π_min` for `t = 0..=t_max`.
pub fn lovasz_bound(gamma: f64, pi_min: f64, t_max: usize) -> Vec<f64> {
    (0..=t_max)
        .map(|t| gamma.powi(t as i32) / pi_min.sqrt())
        .collect()
}

/// Empirical geometric envelope `TV(t) ≤ K̂ γ̂^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub k_hat: f64,
    pub gamma_hat: f64,
    /// Number of points used in the log-linear fit.
    pub points: usize,
}

/// Fit `log TV(t) ≈ log K + t log γ` by least squares over `t ≥ 1` with
/// `TV(t) > 1e-12`, then raise `K̂` until the envelope dominates those points.
pub fn fit_envelope(tv: &[f64]) -> Option<Envelope> {
    let pts: Vec<(f64, f64)> = tv
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, v)| **v > 1e-12)
        .map(|(t, v)| (t as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let slope = sxy / sxx;
    let k_hat = pts
        .iter()
        .map(|(t, l)| (l - slope * t).exp())
        .fold(0.0, f64::max);
    Some(Envelope {
        k_hat,
        gamma_hat: slope.exp(),
        points: pts.len(),
    })
}

/// Diagnostics for one graph, computed on its largest connected component.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    pub n_analyzed: usize,
    /// Original ids of the analyzed nodes when the graph is disconnected.
    pub component: Option<Vec<usize>>,
    pub isolated_nodes: Vec<usize>,
    pub bipartite: bool,
    pub eigenvalues: Vec<f64>,
    pub gamma: f64,
    pub pi: Vec<f64>,
    /// Starts of the TV curve, as ids in the analyzed component.
    pub tv_starts: Vec<usize>,
    /// `TV(t)` for `t = 0..=T`.
    pub tv: Vec<f64>,
    /// `γ^t / √π_min` over the starts, same grid.
    pub bound: Vec<f64>,
    pub bound_holds: bool,
    pub tv_non_increasing: bool,
    pub envelope: Option<Envelope>,
    pub warnings: Vec<String>,
}

impl SpectralReport {
    /// Compute the report; `start` refers to ids in the analyzed component.
    pub fn compute(g: &Graph, start: &TvStart, t_max: usize) -> Result<Self> {
        if g.is_directed() {
            return Err(Error::DirectedGraph);
        }
        let isolated_nodes: Vec<usize> = (0..g.n()).filter(|&i| g.degree(i) == 0).collect();
        let mut comps = g.components();
        let largest = comps.drain(..).next().unwrap_or_default();
        if largest.len() < 2 {
            return Err(Error::EmptyGraph);
        }
        let mut warnings = Vec::new();
        if !isolated_nodes.is_empty() {
            warnings.push(format!("{} isolated nodes excluded", isolated_nodes.len()));
        }
        let (sub, component) = if largest.len() == g.n() {
            (g.clone(), None)
        } else {
            warnings.push(format!(
                "graph is disconnected; analyzing the largest component ({} of {} nodes)",
                largest.len(),
                g.n()
            ));
            (g.induced(&largest), Some(largest))
        };
        let bipartite = sub.is_bipartite();
        if bipartite {
            warnings.push("graph is bipartite; the walk is periodic and TV does not decay".into());
        }
        let eigenvalues = normalized_adjacency_eigs(&sub)?;
        let gamma = eigengap(&eigenvalues);
        let pi = stationary_distribution(&sub)?;
        let (tv, tv_starts) = tv_mixing_curve(&sub, start, t_max)?;
        let pi_min = tv_starts.iter().map(|&i| pi[i]).fold(f64::INFINITY, f64::min);
        let bound = lovasz_bound(gamma, pi_min, t_max);
        let bound_holds = tv.iter().zip(&bound).all(|(v, b)| *v <= b + 1e-12);
        let tv_non_increasing = tv.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        let envelope = if bipartite { None } else { fit_envelope(&tv) };
        Ok(Self {
            n: g.n(),
            n_analyzed: sub.n(),
            component,
            isolated_nodes,
            bipartite,
            eigenvalues,
            gamma,
            pi,
            tv_starts,
            tv,
            bound,
            bound_holds,
            tv_non_increasing,
            envelope,
            warnings,
        })
    }

    /// CSV with header `t,tv,bound`.
    pub fn write_tv_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,tv,bound")?;
        for (t, (v, b)) in self.tv.iter().zip(&self.bound).enumerate() {
            writeln!(w, "{t},{v},{b}")?;
        }
        Ok(())
    }
}

/// One row of [`kernel_operator_eig_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelEigRow {
    pub k: usize,
    pub empirical: f64,
    pub analytic: Option<f64>,
    pub abs_error: Option<f64>,
}

/// Top-`k` eigenvalues of `[w(ξ_i, ξ_j)]/n` (zero diagonal) against the
/// analytic operator eigenvalues of `w`, where known.
pub fn kernel_operator_eig_check(
    kernel: &Kernel,
    xi: &LatentPositions,
    k: usize,
) -> Result<Vec<KernelEigRow>> {
    let n = xi.len();
    if k == 0 || k > n {
        return Err(invalid("k", format!("{k} eigenvalues requested from {n} positions")));
    }
    let x = xi.as_slice();
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = kernel.eval(x[i], x[j]) / n as f64;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let eigs = symmetric_eigenvalues(&m)?;
    let analytic = kernel.analytic_eigenvalues(k);
    Ok((0..k)
        .map(|r| {
            let a = analytic.as_ref().map(|v| v[r]);
            KernelEigRow {
                k: r + 1,
                empirical: eigs[r],
                analytic: a,
                abs_error: a.map(|a| (eigs[r] - a).abs()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::from_edges(3, false, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn complete_graph_spectrum() {
        let eigs = normalized_adjacency_eigs(&Graph::complete(5, false)).unwrap();
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!(eigs[1..].iter().all(|e| (e + 0.25).abs() < 1e-12));
        assert!((eigengap(&eigs) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_edge_is_periodic() {
        let g = Graph::from_edges(2, false, &[(0, 1)]).unwrap();
        let eigs = normalized_adjacency_eigs(&g).unwrap();
        assert!((eigs[0] - 1.0).abs() < 1e-12 && (eigs[1] + 1.0).abs() < 1e-12);
        assert!((eigengap(&eigs) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_nodes_are_rejected() {
        let g = Graph::from_edges(3, false, &[(0, 1)]).unwrap();
        assert!(matches!(normalized_adjacency_eigs(&g), Err(Error::IsolatedNode { node: 2 })));
    }

    #[test]
    fn path_stationary_law() {
        assert_eq!(stationary_distribution(&path3()).unwrap(), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn triangle_tv_by_hand() {
        let tv = tv_from(&Graph::complete(3, false), 0, 1).unwrap();
        assert!((tv[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((tv[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn report_on_disconnected_bipartite_input() {
        let g = Graph::from_edges(6, false, &[(0, 1), (1, 2), (2, 3), (4, 5)]).unwrap();
        let r = SpectralReport::compute(&g, &TvStart::WorstCase, 10).unwrap();
        assert_eq!(r.n_analyzed, 4);
        assert_eq!(r.component, Some(vec![0, 1, 2, 3]));
        assert!(r.bipartite && r.envelope.is_none());
        assert!(r.tv[10] > 0.1);
        let mut csv = Vec::new();
        r.write_tv_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("t,tv,bound\n0,"));
    }

    #[test]
    fn envelope_recovers_geometric_decay() {
        let tv: Vec<f64> = (0..20).map(|t| 0.7 * 0.5f64.powi(t)).collect();
        let e = fit_envelope(&tv).unwrap();
        assert!((e.gamma_hat - 0.5).abs() < 1e-12);
        assert!((e.k_hat - 0.7).abs() < 1e-12);
    }

    #[test]
    fn constant_kernel_is_rank_one() {
        let xi = LatentPositions::new((0..200).map(|i| i as f64 / 199.0).collect()).unwrap();
        let rows = kernel_operator_eig_check(&Kernel::Constant { value: 0.5 }, &xi, 2).unwrap();
        assert!((rows[0].empirical - 0.5 * 199.0 / 200.0).abs() < 1e-10);
        assert!(rows[1].empirical.abs() < 1e-2);
    }
}

//! Random-graph generators: sparse graphons, rank-K RDPG positions of the
//! min graphon, fixed out-degree referral digraphs and a Gaussian latent
//! space model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::linalg::Mat;

/// Latent positions `ξ_1..ξ_n`, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPositions(Vec<f64>);

impl LatentPositions {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if let Some(bad) = xi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid("xi", format!("{bad} is outside [0, 1]")));
        }
        Ok(Self(xi))
    }

    /// `n` i.i.d. Uniform[0,1] positions.
    pub fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| rng.random::<f64>()).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Symmetric kernels with a serializable description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `w(x, y) = value`.
    Constant { value: f64 },
    /// `w(x, y) = min(x, y)`.
    Min,
    /// `w(x, y) = x y`.
    Product,
    /// Two-block stochastic block model split at `cut`.
    TwoBlock {
        cut: f64,
        within: f64,
        between: f64,
    },
}

impl Kernel {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Kernel::Constant { value } => value,
            Kernel::Min => x.min(y),
            Kernel::Product => x * y,
            Kernel::TwoBlock {
                cut,
                within,
                between,
            } => {
                if (x < cut) == (y < cut) {
                    within
                } else {
                    between
                }
            }
        }
    }

    /// Closed-form operator eigenvalues, when known, largest first.
    pub fn analytic_eigenvalues(&self, k: usize) -> Option<Vec<f64>> {
        match *self {
            Kernel::Constant { value } => {
                let mut v = vec![0.0; k];
                if k > 0 {
                    v[0] = value;
                }
                Some(v)
            }
            Kernel::Min => Some((1..=k).map(min_graphon_eigenvalue).collect()),
            Kernel::Product => {
                let mut v = vec![0.0; k];
                if k > 0 {
                    v[0] = 1.0 / 3.0;
                }
                Some(v)
            }
            Kernel::TwoBlock { .. } => None,
        }
    }
}

/// A sparse graphon `ρ_n w(·,·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphonSpec {
    pub kernel: Kernel,
    pub rho: f64,
}

/// Upper-triangle dyad uniforms `η_ij`, `i < j`, row-major.
///
/// Drawn on `(0, 1]` so that a zero probability never yields an edge.
#[derive(Debug, Clone)]
pub struct DyadUniforms {
    n: usize,
    values: Vec<f64>,
}

impl DyadUniforms {
    pub fn draw<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let m = n * n.saturating_sub(1) / 2;
        Self {
            n,
            values: (0..m).map(|_| open_uniform(rng)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        // offset of row a in the packed upper triangle
        let row_start = a * (2 * self.n - a - 1) / 2;
        self.values[row_start + (b - a - 1)]
    }
}

#[inline]
fn open_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(invalid("rho", format!("{rho} is not in (0, 1]")))
    }
}

fn edge_probability(kernel: &impl Fn(f64, f64) -> f64, rho: f64, x: f64, y: f64) -> Result<f64> {
    let w = kernel(x, y);
    if !w.is_finite() || w < 0.0 {
        return Err(Error::InvalidKernelValue { x, y, value: w });
    }
    Ok((rho * w).min(1.0))
}

/// Sparse graphon graph: `A_ij = 1(η_ij ≤ ρ w(ξ_i, ξ_j) ∧ 1)` for `i < j`.
pub fn sample_graphon_graph<R: Rng + ?Sized>(
    spec: &GraphonSpec,
    xi: &LatentPositions,
    rng: &mut R,
) -> Result<Graph> {
    sample_graphon_graph_with(&|x, y| spec.kernel.eval(x, y), spec.rho, xi, rng)
}

/// As [`sample_graphon_graph`] for an arbitrary kernel closure.
pub fn sample_graphon_graph_with<R: Rng + ?Sized>(
    kernel: &impl Fn(f64, f64) -> f64,
    rho: f64,
    xi: &LatentPositions,
    rng: &mut R,
) -> Result<Graph> {
    check_rho(rho)?;
    let n = xi.len();
    if n < 2 {
        return Err(invalid("xi", "need at least two nodes"));
    }
    let x = xi.as_slice();
    let mut g = Graph::empty(n, false);
    // same draw order as DyadUniforms::draw, so the two paths couple
    for i in 0..n {
        for j in i + 1..n {
            let eta = open_uniform(rng);
            if eta <= edge_probability(kernel, rho, x[i], x[j])? {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Graphon graph driven by a pre-drawn `η` array.
pub fn graphon_graph_from_uniforms(
    spec: &GraphonSpec,
    xi: &LatentPositions,
    eta: &DyadUniforms,
) -> Result<Graph> {
    check_rho(spec.rho)?;
    let n = xi.len();
    if eta.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} latent positions but eta is for {} nodes",
            n,
            eta.n()
        )));
    }
    let x = xi.as_slice();
    let kernel = |a, b| spec.kernel.eval(a, b);
    let mut g = Graph::empty(n, false);
    for i in 0..n {
        for j in i + 1..n {
            if eta.get(i, j) <= edge_probability(&kernel, spec.rho, x[i], x[j])? {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// `k`-th operator eigenvalue of `min(x, y)` (1-based): `(2 / ((2k-1)π))²`.
pub fn min_graphon_eigenvalue(k: usize) -> f64 {
    let c = 2.0 / ((2 * k - 1) as f64 * std::f64::consts::PI);
    c * c
}

/// `k`-th eigenfunction of `min(x, y)` (1-based): `sin((2k-1)πx/2)`.
pub fn min_graphon_eigenfunction(k: usize, x: f64) -> f64 {
    ((2 * k - 1) as f64 * std::f64::consts::PI * x / 2.0).sin()
}

/// RDPG positions `Z[i][k] = √λ_k φ_k(ξ_i)` from the rank-`rank` truncation
/// of the min graphon.
pub fn min_graphon_rdpg_positions(xi: &LatentPositions, rank: usize) -> Result<Mat> {
    if rank == 0 {
        return Err(invalid("rank", "must be at least 1"));
    }
    let n = xi.len();
    let mut z = Mat::zeros(n, rank);
    for (i, &x) in xi.as_slice().iter().enumerate() {
        for k in 1..=rank {
            z[(i, k - 1)] = min_graphon_eigenvalue(k).sqrt() * min_graphon_eigenfunction(k, x);
        }
    }
    Ok(z)
}

/// Outcome of an RDPG draw, with the number of dyads whose probability
/// `ν Zᵢᵀ Zⱼ` fell outside `[0, 1]` and was clamped.
#[derive(Debug, Clone)]
pub struct RdpgDraw {
    pub graph: Graph,
    pub clamped: usize,
}

/// Undirected graph with `P(A_ij = 1) = clamp(ν Zᵢᵀ Zⱼ, 0, 1)`.
pub fn sample_rdpg_graph<R: Rng + ?Sized>(z: &Mat, nu: f64, rng: &mut R) -> Result<RdpgDraw> {
    if !(0.0..=1.0).contains(&nu) {
        return Err(invalid("nu", format!("{nu} is not in [0, 1]")));
    }
    let n = z.rows();
    let mut g = Graph::empty(n, false);
    let mut clamped = 0;
    for i in 0..n {
        for j in i + 1..n {
            let raw = nu * crate::linalg::dot(z.row(i), z.row(j));
            if !(0.0..=1.0).contains(&raw) {
                clamped += 1;
            }
            let p = raw.clamp(0.0, 1.0);
            if open_uniform(rng) <= p {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(RdpgDraw { graph: g, clamped })
}

/// Fixed out-degree referral digraph: `adj[i][j] = 1` iff `W[i][j]` ranks
/// among the `r` largest off-diagonal entries of row `i`.
pub fn sample_fixed_out_degree_digraph(weights: &Mat, r: usize) -> Result<Graph> {
    let n = weights.rows();
    if weights.cols() != n {
        return Err(Error::DimensionMismatch("referral weights must be square".into()));
    }
    if r == 0 || r >= n {
        return Err(invalid("r", format!("{r} referrals with {n} nodes")));
    }
    let mut g = Graph::empty(n, true);
    let mut order: Vec<usize> = Vec::with_capacity(n - 1);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        let row = weights.row(i);
        if let Some(j) = order.iter().find(|&&j| !row[j].is_finite()) {
            return Err(invalid("weights", format!("non-finite entry at ({i}, {j})")));
        }
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        if let Some(w) = order.windows(2).find(|w| row[w[0]] == row[w[1]]) {
            return Err(Error::TiedWeights {
                row: i,
                a: w[0].min(w[1]),
                b: w[0].max(w[1]),
            });
        }
        for &j in &order[..r] {
            g.add_edge(i, j)?;
        }
    }
    Ok(g)
}

/// Latent space kernel `g(x, y) = 0.9 exp(-(x - y)² / 4) + 0.1`.
pub fn gaussian_latent_kernel(x: f64, y: f64) -> f64 {
    0.9 * (-(x - y).powi(2) / 4.0).exp() + 0.1
}

/// Undirected graph with `P(A_ij = 1) = ν g(x_i, x_j)`.
pub fn sample_gaussian_latent_space_graph<R: Rng + ?Sized>(
    positions: &[f64],
    nu: f64,
    rng: &mut R,
) -> Result<Graph> {
    check_rho(nu).map_err(|_| invalid("nu", format!("{nu} is not in (0, 1]")))?;
    let n = positions.len();
    let mut g = Graph::empty(n, false);
    for i in 0..n {
        for j in i + 1..n {
            if open_uniform(rng) <= nu * gaussian_latent_kernel(positions[i], positions[j]) {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Per-node responses and covariates together with the observed graph.
#[derive(Debug, Clone)]
pub struct NodeDataset {
    pub y: Vec<f64>,
    /// `n × d` covariates.
    pub x: Mat,
    pub graph: Graph,
    /// Optional referral digraph used by snowball schemes.
    pub referral: Option<Graph>,
    pub latent: Option<LatentPositions>,
}

impl NodeDataset {
    pub fn new(y: Vec<f64>, x: Mat, graph: Graph) -> Result<Self> {
        let ds = Self {
            y,
            x,
            graph,
            referral: None,
            latent: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_referral(mut self, referral: Graph) -> Result<Self> {
        self.referral = Some(referral);
        self.validate()?;
        Ok(self)
    }

    pub fn with_latent(mut self, latent: LatentPositions) -> Result<Self> {
        self.latent = Some(latent);
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.y.len();
        let mut lens = vec![("x", self.x.rows()), ("graph", self.graph.n())];
        if let Some(r) = &self.referral {
            lens.push(("referral", r.n()));
        }
        if let Some(l) = &self.latent {
            lens.push(("latent", l.len()));
        }
        match lens.iter().find(|(_, len)| *len != n) {
            Some((name, len)) => Err(Error::DimensionMismatch(format!(
                "{name} has {len} entries but there are {n} responses"
            ))),
            None => Ok(()),
        }
    }

    /// Parse a node table written by [`NodeDataset::write_nodes_csv`]. Every
    /// node `0..n` must appear exactly once, in any order.
    pub fn read_nodes_csv<R: std::io::BufRead>(r: R, graph: Graph) -> Result<Self> {
        let table_err = |line: usize, reason: String| Error::NodeTable { line, reason };
        let mut lines = r.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) if l.as_ref().map_or(false, |t| t.trim().is_empty()) => continue,
                Some((_, l)) => break l?,
                None => return Err(table_err(1, "empty node table".into())),
            }
        };
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "node" || cols[1] != "y" {
            return Err(table_err(1, "header must start with `node,y`".into()));
        }
        let has_xi = cols.last() == Some(&"xi");
        let d = cols.len() - 2 - usize::from(has_xi);
        let mut rows: Vec<Option<(f64, Vec<f64>, Option<f64>)>> = vec![None; graph.n()];
        for (lineno, line) in lines {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let fields: Vec<&str> = text.split(',').map(str::trim).collect();
            if fields.len() != cols.len() {
                return Err(table_err(
                    lineno + 1,
                    format!("expected {} fields, got {}", cols.len(), fields.len()),
                ));
            }
            let node: usize = fields[0]
                .parse()
                .map_err(|_| table_err(lineno + 1, format!("bad node index `{}`", fields[0])))?;
            let nums: Vec<f64> = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| table_err(lineno + 1, "non-numeric value".into()))?;
            let slot = rows
                .get_mut(node)
                .ok_or_else(|| table_err(lineno + 1, format!("node {node} is not in the graph")))?;
            if slot.is_some() {
                return Err(table_err(lineno + 1, format!("node {node} listed twice")));
            }
            *slot = Some((nums[0], nums[1..=d].to_vec(), has_xi.then(|| nums[d + 1])));
        }
        let mut y = Vec::with_capacity(rows.len());
        let mut x = Mat::zeros(rows.len(), d);
        let mut xi = Vec::new();
        for (i, row) in rows.into_iter().enumerate() {
            let (yi, xs, l) = row.ok_or_else(|| table_err(0, format!("node {i} is missing")))?;
            y.push(yi);
            x.row_mut(i).copy_from_slice(&xs);
            xi.extend(l);
        }
        let ds = Self::new(y, x, graph)?;
        if has_xi {
            ds.with_latent(LatentPositions::new(xi)?)
        } else {
            Ok(ds)
        }
    }

    /// Node table: `node,y,x1..xd[,xi]`.
    pub fn write_nodes_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        write!(w, "node,y")?;
        for c in 1..=self.x.cols() {
            write!(w, ",x{c}")?;
        }
        if self.latent.is_some() {
            write!(w, ",xi")?;
        }
        writeln!(w)?;
        for i in 0..self.n() {
            write!(w, "{i},{}", self.y[i])?;
            for v in self.x.row(i) {
                write!(w, ",{v}")?;
            }
            if let Some(l) = &self.latent {
                write!(w, ",{}", l.as_slice()[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn node_table_round_trip() {
        let g = Graph::from_edges(3, false, &[(0, 1)]).unwrap();
        let x = Mat::from_rows(&[vec![0.5, 1.0], vec![-2.0, 0.0], vec![3.25, 1e-3]]).unwrap();
        let ds = NodeDataset::new(vec![1.0, 2.5, -0.125], x, g.clone())
            .unwrap()
            .with_latent(LatentPositions::new(vec![0.1, 0.2, 0.3]).unwrap())
            .unwrap();
        let mut buf = Vec::new();
        ds.write_nodes_csv(&mut buf).unwrap();
        let back = NodeDataset::read_nodes_csv(&buf[..], g.clone()).unwrap();
        assert_eq!(back.y, ds.y);
        assert_eq!(back.x, ds.x);
        assert_eq!(back.latent, ds.latent);
        let bad = "node,y,x1\n0,1,2\n0,1,2\n";
        assert!(matches!(
            NodeDataset::read_nodes_csv(bad.as_bytes(), g),
            Err(Error::NodeTable { line: 3, .. })
        ));
    }

    fn constant(value: f64, rho: f64) -> GraphonSpec {
        GraphonSpec {
            kernel: Kernel::Constant { value },
            rho,
        }
    }

    #[test]
    fn zero_kernel_gives_empty_graph() {
        let mut rng = seeded(1);
        let xi = LatentPositions::uniform(30, &mut rng);
        let g = sample_graphon_graph(&constant(0.0, 0.7), &xi, &mut rng).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn unit_kernel_gives_complete_graph() {
        let mut rng = seeded(2);
        let xi = LatentPositions::uniform(12, &mut rng);
        let g = sample_graphon_graph(&constant(1.0, 1.0), &xi, &mut rng).unwrap();
        assert_eq!(g, Graph::complete(12, false));
    }

    #[test]
    fn rejects_bad_kernel_values_and_rho() {
        let mut rng = seeded(3);
        let xi = LatentPositions::uniform(5, &mut rng);
        let err = sample_graphon_graph_with(&|_, _| -1.0, 0.5, &xi, &mut rng);
        assert!(matches!(err, Err(Error::InvalidKernelValue { .. })));
        let err = sample_graphon_graph_with(&|_, _| f64::NAN, 0.5, &xi, &mut rng);
        assert!(matches!(err, Err(Error::InvalidKernelValue { .. })));
        assert!(sample_graphon_graph(&constant(1.0, 0.0), &xi, &mut rng).is_err());
        assert!(LatentPositions::new(vec![0.5, 1.2]).is_err());
    }

    #[test]
    fn coupled_draw_matches_streamed_draw() {
        let spec = GraphonSpec {
            kernel: Kernel::Min,
            rho: 0.8,
        };
        let xi = LatentPositions::uniform(40, &mut seeded(4));
        let streamed = sample_graphon_graph(&spec, &xi, &mut seeded(5)).unwrap();
        let eta = DyadUniforms::draw(40, &mut seeded(5));
        let coupled = graphon_graph_from_uniforms(&spec, &xi, &eta).unwrap();
        assert_eq!(streamed, coupled);
    }

    #[test]
    fn rdpg_positions_closed_forms() {
        let xi = LatentPositions::new(vec![0.0, 1.0]).unwrap();
        let z = min_graphon_rdpg_positions(&xi, 3).unwrap();
        for k in 0..3 {
            assert_eq!(z[(0, k)], 0.0);
        }
        assert!((z[(1, 0)] - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert!(min_graphon_rdpg_positions(&xi, 0).is_err());
    }

    #[test]
    fn referral_rows_pick_largest_weights() {
        let w = Mat::from_rows(&[
            vec![0.0, 0.9, 0.2],
            vec![0.3, 0.0, 0.1],
            vec![0.5, 0.6, 0.0],
        ])
        .unwrap();
        let g = sample_fixed_out_degree_digraph(&w, 1).unwrap();
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![1]);
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![0]);
        assert_eq!(g.neighbors(2).collect::<Vec<_>>(), vec![1]);
        let all = sample_fixed_out_degree_digraph(&w, 2).unwrap();
        assert_eq!(all, Graph::complete(3, true));
    }

    #[test]
    fn referral_rejects_ties_and_bad_r() {
        let w = Mat::from_rows(&[
            vec![0.0, 0.5, 0.5],
            vec![0.3, 0.0, 0.1],
            vec![0.5, 0.6, 0.0],
        ])
        .unwrap();
        assert!(matches!(
            sample_fixed_out_degree_digraph(&w, 1),
            Err(Error::TiedWeights { row: 0, a: 1, b: 2 })
        ));
        assert!(sample_fixed_out_degree_digraph(&w, 0).is_err());
        assert!(sample_fixed_out_degree_digraph(&w, 3).is_err());
    }

    #[test]
    fn latent_kernel_limits() {
        assert_eq!(gaussian_latent_kernel(0.3, 0.3), 1.0);
        assert!((gaussian_latent_kernel(0.0, 100.0) - 0.1).abs() < 1e-15);
    }
}

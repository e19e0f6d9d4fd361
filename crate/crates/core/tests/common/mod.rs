//! Independent reference implementations used by the oracle and acceptance
//! tests. They work on plain vectors and share no code with the library.
#![allow(dead_code)]

use netconformal::conformal::{weighted_conformal_membership, CalibrationScores};
use netconformal::Graph;
use rand::Rng;

pub fn random_graph<R: Rng>(n: usize, p: f64, directed: bool, rng: &mut R) -> Graph {
    let mut g = Graph::empty(n, directed);
    for i in 0..n {
        for j in 0..n {
            if i != j && (directed || i < j) && rng.random::<f64>() < p {
                g.add_edge(i, j).unwrap();
            }
        }
    }
    g
}

pub fn dense_adjacency(g: &Graph) -> Vec<Vec<bool>> {
    (0..g.n()).map(|i| (0..g.n()).map(|j| g.has_edge(i, j)).collect()).collect()
}

/// Layers `0..=k` of a breadth-first search from the set `m0`, computed by
/// scanning the dense adjacency matrix one layer at a time.
pub fn bfs_layers(adj: &[Vec<bool>], m0: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    for &s in m0 {
        dist[s] = 0;
    }
    for t in 1..=k {
        for u in 0..n {
            if dist[u] == t - 1 {
                for v in 0..n {
                    if adj[u][v] && dist[v] == usize::MAX {
                        dist[v] = t;
                    }
                }
            }
        }
    }
    (0..=k)
        .map(|t| (0..n).filter(|&v| dist[v] == t).collect())
        .collect()
}

/// All-pairs hop distances by Floyd–Warshall.
pub fn floyd_warshall(adj: &[Vec<bool>]) -> Vec<Vec<Option<usize>>> {
    let n = adj.len();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if adj[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(|v| (v < inf).then_some(v)).collect())
        .collect()
}

/// Least squares with an intercept by Householder QR. Returns
/// `[intercept, slopes..]`.
pub fn qr_least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = x.len();
    let p = x[0].len() + 1;
    let mut a: Vec<Vec<f64>> = x
        .iter()
        .map(|row| std::iter::once(1.0).chain(row.iter().copied()).collect())
        .collect();
    let mut b = y.to_vec();
    for col in 0..p {
        let norm = (col..m).map(|i| a[i][col] * a[i][col]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[col][col] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (col..m).map(|i| a[i][col]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in col..p {
            let s: f64 = (col..m).map(|i| v[i - col] * a[i][j]).sum::<f64>() * 2.0 / vnorm2;
            for i in col..m {
                a[i][j] -= s * v[i - col];
            }
        }
        let s: f64 = (col..m).map(|i| v[i - col] * b[i]).sum::<f64>() * 2.0 / vnorm2;
        for i in col..m {
            b[i] -= s * v[i - col];
        }
    }
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| a[i][j] * beta[j]).sum();
        beta[i] = (b[i] - s) / a[i][i];
    }
    beta
}

/// The boundary of the weighted conformal set `{s : member(s)}` located by
/// bisection on the membership test alone. The set is an initial segment of
/// the half-line, so the boundary is its supremum.
pub fn bisection_threshold(cal: &CalibrationScores, hi: f64) -> f64 {
    if weighted_conformal_membership(cal, hi) {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-1.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if weighted_conformal_membership(cal, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Upper-tail critical values of the chi-squared law at level 0.001.
pub fn chi2_critical_001(df: usize) -> f64 {
    const TABLE: [f64; 12] = [
        10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124, 27.877, 29.588, 31.264, 32.909,
    ];
    TABLE[df - 1]
}

pub fn chi2_statistic(counts: &[usize], probs: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * total as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

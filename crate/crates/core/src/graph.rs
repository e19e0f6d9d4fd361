//! Dense bit-packed adjacency storage and edge-list interop.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WORD: usize = 64;

/// An observed graph on nodes `0..n` without self-loops.
///
/// `adj[i][j] = 1` means an edge (or referral) from `i` to `j`. Undirected
/// graphs keep both directions set.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    directed: bool,
    words: usize,
    bits: Vec<u64>,
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("directed", &self.directed)
            .field("edges", &self.edges())
            .finish()
    }
}

impl Graph {
    pub fn empty(n: usize, directed: bool) -> Self {
        let words = n.div_ceil(WORD).max(1);
        Self {
            n,
            directed,
            words,
            bits: vec![0; n * words],
        }
    }

    pub fn complete(n: usize, directed: bool) -> Self {
        let mut g = Self::empty(n, directed);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.set_arc(i, j, true);
                }
            }
        }
        g
    }

    /// Build from `(src, dst)` pairs. Self-loops are rejected.
    pub fn from_edges(n: usize, directed: bool, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n, directed);
        for &(i, j) in edges {
            g.add_edge(i, j)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        (self.bits[i * self.words + j / WORD] >> (j % WORD)) & 1 == 1
    }

    #[inline]
    fn set_arc(&mut self, i: usize, j: usize, on: bool) {
        let w = &mut self.bits[i * self.words + j / WORD];
        let mask = 1u64 << (j % WORD);
        if on {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    /// Insert `i -> j` (and `j -> i` when undirected).
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(crate::error::invalid("edge", format!("self-loop at node {i}")));
        }
        self.set_arc(i, j, true);
        if !self.directed {
            self.set_arc(j, i, true);
        }
        Ok(())
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.set_arc(i, j, false);
        if !self.directed {
            self.set_arc(j, i, false);
        }
    }

    pub fn check_node(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { index: i, n: self.n })
        }
    }

    /// Out-neighbors of `i` in increasing order.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let row = &self.bits[i * self.words..(i + 1) * self.words];
        row.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD + tz)
                }
            })
        })
    }

    /// Row sum of `adj` (out-degree for directed graphs).
    pub fn degree(&self, i: usize) -> usize {
        self.bits[i * self.words..(i + 1) * self.words]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    /// Number of edges; each undirected edge counts once.
    pub fn edge_count(&self) -> usize {
        let arcs: usize = self.bits.iter().map(|w| w.count_ones() as usize).sum();
        if self.directed {
            arcs
        } else {
            arcs / 2
        }
    }

    /// Edge pairs; undirected edges appear once with `src < dst`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for j in self.neighbors(i) {
                if self.directed || i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        (0..self.n).map(|i| self.neighbors(i).collect()).collect()
    }

    /// `adj` as a dense row-major 0/1 matrix.
    pub fn to_dense(&self) -> crate::linalg::Mat {
        let mut m = crate::linalg::Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in self.neighbors(i) {
                m[(i, j)] = 1.0;
            }
        }
        m
    }

    /// The relabeled graph `A^σ` with `A^σ[i][j] = A[σ(i)][σ(j)]`.
    pub fn permuted(&self, sigma: &[usize]) -> Self {
        assert_eq!(sigma.len(), self.n, "permutation length must equal n");
        let mut out = Self::empty(self.n, self.directed);
        let mut inverse = vec![0; self.n];
        for (i, &s) in sigma.iter().enumerate() {
            inverse[s] = i;
        }
        for a in 0..self.n {
            for b in self.neighbors(a) {
                out.set_arc(inverse[a], inverse[b], true);
            }
        }
        out
    }

    /// Subgraph induced by `nodes`; node `k` of the result is `nodes[k]`.
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let mut out = Self::empty(nodes.len(), self.directed);
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                if a != b && self.has_edge(i, j) {
                    out.set_arc(a, b, true);
                }
            }
        }
        out
    }

    /// Undirected view: `i ~ j` iff either arc is present.
    pub fn symmetrized(&self) -> Self {
        let mut out = self.clone();
        out.directed = false;
        for i in 0..self.n {
            for j in self.neighbors(i) {
                out.set_arc(j, i, true);
            }
        }
        out
    }

    /// Shortest-path (out-edge) distances from `src`; `None` when unreachable.
    pub fn bfs_distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connected components of the symmetrized graph, largest first
    /// (ties broken by smallest member).
    pub fn components(&self) -> Vec<Vec<usize>> {
        let sym = if self.directed {
            self.symmetrized()
        } else {
            self.clone()
        };
        let mut label = vec![usize::MAX; self.n];
        let mut comps = Vec::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = vec![s];
            label[s] = id;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for v in sym.neighbors(u) {
                    if label[v] == usize::MAX {
                        label[v] = id;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().len() == 1
    }

    /// Two-colorability of the symmetrized graph.
    pub fn is_bipartite(&self) -> bool {
        let mut color = vec![u8::MAX; self.n];
        for s in 0..self.n {
            if color[s] != u8::MAX {
                continue;
            }
            color[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for v in self.neighbors(u) {
                    if color[v] == u8::MAX {
                        color[v] = 1 - color[u];
                        queue.push_back(v);
                    } else if color[v] == color[u] {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Write the `src,dst` edge list with a header row.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "src,dst")?;
        for (i, j) in self.edges() {
            writeln!(w, "{i},{j}")?;
        }
        Ok(())
    }

    /// Parse a `src,dst` edge list (0-based, optional header, blank lines
    /// ignored). `n` defaults to one past the largest index seen.
    pub fn read_edge_list<R: BufRead>(r: R, n: Option<usize>, directed: bool) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let mut fields = text.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::EdgeList {
                    line: lineno + 1,
                    reason: format!("expected two fields, got `{text}`"),
                });
            };
            match (a.parse::<usize>(), b.parse::<usize>()) {
                (Ok(i), Ok(j)) => pairs.push((i, j, lineno + 1)),
                _ if lineno == 0 => continue,
                _ => {
                    return Err(Error::EdgeList {
                        line: lineno + 1,
                        reason: format!("non-integer node index in `{text}`"),
                    })
                }
            }
        }
        let seen = pairs.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
        let n = n.unwrap_or(seen);
        let mut g = Self::empty(n, directed);
        for (i, j, line) in pairs {
            g.add_edge(i, j).map_err(|e| Error::EdgeList {
                line,
                reason: e.to_string(),
            })?;
        }
        Ok(g)
    }
}

/// Compact serializable form used in JSON outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeListRecord {
    pub n: usize,
    pub directed: bool,
    pub edges: Vec<(usize, usize)>,
}

impl From<&Graph> for EdgeListRecord {
    fn from(g: &Graph) -> Self {
        Self {
            n: g.n(),
            directed: g.is_directed(),
            edges: g.edges(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, false, &edges).unwrap()
    }

    #[test]
    fn undirected_edges_are_symmetric() {
        let g = path(4);
        assert!(g.has_edge(1, 0) && g.has_edge(0, 1));
        assert_eq!(g.edge_count(), 3);
        assert_eq!(g.neighbors(1).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn rejects_self_loops_and_bad_indices() {
        let mut g = Graph::empty(3, false);
        assert!(g.add_edge(1, 1).is_err());
        assert!(matches!(g.add_edge(0, 3), Err(Error::NodeOutOfRange { .. })));
    }

    #[test]
    fn neighbors_cross_word_boundaries() {
        let mut g = Graph::empty(130, true);
        g.add_edge(0, 63).unwrap();
        g.add_edge(0, 64).unwrap();
        g.add_edge(0, 129).unwrap();
        assert_eq!(g.neighbors(0).collect::<Vec<_>>(), vec![63, 64, 129]);
        assert_eq!(g.degree(0), 3);
    }

    #[test]
    fn permutation_relabels_edges() {
        let g = Graph::from_edges(3, true, &[(0, 1)]).unwrap();
        // sigma maps new label i to old label sigma[i]
        let h = g.permuted(&[1, 0, 2]);
        assert!(h.has_edge(1, 0));
        assert!(!h.has_edge(0, 1));
    }

    #[test]
    fn bfs_and_components() {
        let mut g = path(4);
        g.remove_edge(1, 2);
        assert_eq!(g.bfs_distances(0), vec![Some(0), Some(1), None, None]);
        assert_eq!(g.components(), vec![vec![0, 1], vec![2, 3]]);
        assert!(path(5).is_bipartite());
        assert!(!Graph::complete(3, false).is_bipartite());
    }

    #[test]
    fn edge_list_round_trip_and_header() {
        let g = Graph::from_edges(5, false, &[(0, 1), (3, 1), (2, 4)]).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = Graph::read_edge_list(buf.as_slice(), Some(5), false).unwrap();
        assert_eq!(g, back);
        let headerless = Graph::read_edge_list("0,1\n1,2\n".as_bytes(), None, false).unwrap();
        assert_eq!(headerless.n(), 3);
        let err = Graph::read_edge_list("src,dst\n0,1\nx,2\n".as_bytes(), None, false);
        assert!(matches!(err, Err(Error::EdgeList { line: 3, .. })));
    }
}

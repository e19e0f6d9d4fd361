use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Graph;

/// Which rule produced a selection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Neighbors of `root`, root excluded.
    Ego { root: usize },
    /// Snowball wave `k` from seeds `m0`.
    Wave { m0: Vec<usize>, k: usize },
    /// Union of waves `1..=k` from seeds `m0`.
    KHop { m0: Vec<usize>, k: usize },
    /// Negative control: ego network with the root included.
    BrokenEgo { root: usize },
}

impl SelectionRule {
    /// Apply the rule to `g`. Panics on out-of-range nodes; use the
    /// dedicated functions for checked access.
    pub fn select(&self, g: &Graph) -> Vec<usize> {
        match self {
            SelectionRule::Ego { root } => ego_nodes(g, *root),
            SelectionRule::Wave { m0, k } => waves(g, m0, *k).pop().unwrap_or_default(),
            SelectionRule::KHop { m0, k } => {
                let mut all: Vec<usize> = waves(g, m0, *k).into_iter().skip(1).flatten().collect();
                all.sort_unstable();
                all
            }
            SelectionRule::BrokenEgo { root } => {
                let mut s = ego_nodes(g, *root);
                s.push(*root);
                s.sort_unstable();
                s
            }
        }
    }

    /// Nodes the selection conditions on (root or seeds).
    pub fn conditioning_set(&self) -> Vec<usize> {
        match self {
            SelectionRule::Ego { root } | SelectionRule::BrokenEgo { root } => vec![*root],
            SelectionRule::Wave { m0, .. } | SelectionRule::KHop { m0, .. } => m0.clone(),
        }
    }

    /// False for wave 0, which is the seed set itself.
    pub fn is_conformal_valid(&self) -> bool {
        match self {
            SelectionRule::Wave { k, .. } => *k >= 1,
            SelectionRule::KHop { k, .. } => *k >= 1,
            SelectionRule::Ego { .. } => true,
            SelectionRule::BrokenEgo { .. } => false,
        }
    }
}

/// A sorted set of selected node indices plus the rule that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub rule: SelectionRule,
    pub selected: Vec<usize>,
}

impl SelectionResult {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

fn ego_nodes(g: &Graph, root: usize) -> Vec<usize> {
    g.neighbors(root).filter(|&j| j != root).collect()
}

/// Waves `0..=k`; entry `t` is the sorted wave `t`.
fn waves(g: &Graph, m0: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; g.n()];
    let mut current: Vec<usize> = m0.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    for &i in &current {
        seen[i] = true;
    }
    let mut out = vec![current.clone()];
    for _ in 0..k {
        let mut next = Vec::new();
        for &i in &current {
            for j in g.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        out.push(next.clone());
        current = next;
    }
    out
}

fn check_seeds(g: &Graph, m0: &[usize]) -> Result<()> {
    if m0.is_empty() {
        return Err(invalid("m0", "seed set must be nonempty"));
    }
    m0.iter().try_for_each(|&i| g.check_node(i))
}

/// Ego selection: `S = { j : adj[root][j] = 1 }`, root excluded.
pub fn ego_select(g: &Graph, root: usize) -> Result<SelectionResult> {
    g.check_node(root)?;
    Ok(SelectionResult {
        selected: ego_nodes(g, root),
        rule: SelectionRule::Ego { root },
    })
}

/// Snowball wave `𝒲(M0, k)`. Wave 0 is `M0` itself and is tagged as not
/// conformal-valid by its rule.
pub fn snowball_wave(g: &Graph, m0: &[usize], k: usize) -> Result<SelectionResult> {
    check_seeds(g, m0)?;
    let rule = SelectionRule::Wave { m0: sorted(m0), k };
    Ok(SelectionResult {
        selected: rule.select(g),
        rule,
    })
}

/// Union of `k`-hop neighborhoods `𝒦(M0, k)`, seeds excluded.
pub fn k_hop_union(g: &Graph, m0: &[usize], k: usize) -> Result<SelectionResult> {
    check_seeds(g, m0)?;
    if k == 0 {
        return Err(invalid("k", "k-hop radius must be at least 1"));
    }
    let rule = SelectionRule::KHop { m0: sorted(m0), k };
    Ok(SelectionResult {
        selected: rule.select(g),
        rule,
    })
}

fn sorted(m0: &[usize]) -> Vec<usize> {
    m0.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let e: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, false, &e).unwrap()
    }

    #[test]
    fn ego_examples() {
        let star = Graph::from_edges(4, false, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(ego_select(&star, 0).unwrap().selected, vec![1, 2, 3]);
        let isolated = Graph::empty(3, false);
        assert!(ego_select(&isolated, 1).unwrap().is_empty());
        assert_eq!(ego_select(&path(3), 1).unwrap().selected, vec![0, 2]);
        assert!(ego_select(&path(3), 3).is_err());
    }

    #[test]
    fn wave_examples() {
        let p = path(4);
        assert_eq!(snowball_wave(&p, &[0], 1).unwrap().selected, vec![1]);
        assert_eq!(snowball_wave(&p, &[0], 2).unwrap().selected, vec![2]);
        let k = Graph::complete(5, false);
        assert_eq!(snowball_wave(&k, &[0], 1).unwrap().selected, vec![1, 2, 3, 4]);
        assert!(snowball_wave(&k, &[0], 2).unwrap().is_empty());
        let w0 = snowball_wave(&p, &[2, 0], 0).unwrap();
        assert_eq!(w0.selected, vec![0, 2]);
        assert!(!w0.rule.is_conformal_valid());
        assert!(snowball_wave(&p, &[], 1).is_err());
    }

    #[test]
    fn waves_follow_out_edges() {
        let g = Graph::from_edges(3, true, &[(1, 0), (1, 2)]).unwrap();
        assert!(snowball_wave(&g, &[0], 1).unwrap().is_empty());
        assert_eq!(snowball_wave(&g, &[1], 1).unwrap().selected, vec![0, 2]);
    }

    #[test]
    fn k_hop_examples() {
        let p = path(4);
        assert_eq!(k_hop_union(&p, &[0], 2).unwrap().selected, vec![1, 2]);
        assert_eq!(k_hop_union(&p, &[0], 10).unwrap().selected, vec![1, 2, 3]);
        assert!(k_hop_union(&p, &[0], 0).is_err());
    }

    #[test]
    fn broken_ego_includes_root() {
        let star = Graph::from_edges(4, false, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let s = SelectionRule::BrokenEgo { root: 0 }.select(&star);
        assert_eq!(s, vec![0, 1, 2, 3]);
    }
}

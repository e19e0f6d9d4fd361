//! Brute-force check of the invariant-selector property.
//!
//! A rule `𝒮` is an invariant selector when, for every `σ` that fixes the
//! complement of `S` pointwise and maps `S` onto itself,
//! `{𝒮(V^σ) = S} = {𝒮(V) = S}`. On a concrete array this is checked by
//! enumerating every such `σ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Graph;

use super::selectors::SelectionRule;

/// Largest population for which `Σ_S` is enumerated.
pub const MAX_ENUMERATION_NODES: usize = 8;

/// Result of enumerating `Σ_S` on one array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvarianceOutcome {
    pub holds: bool,
    pub permutations_checked: usize,
    /// First violating permutation as a full map `i -> σ(i)` on `0..n`.
    pub counterexample: Option<Vec<usize>>,
}

/// Lexicographic successor of `perm`; false once the last permutation has
/// been passed.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    if perm.len() < 2 {
        return false;
    }
    let Some(i) = (0..perm.len() - 1).rev().find(|&i| perm[i] < perm[i + 1]) else {
        return false;
    };
    let j = (i + 1..perm.len()).rev().find(|&j| perm[j] > perm[i]).unwrap_or(i + 1);
    perm.swap(i, j);
    perm[i + 1..].reverse();
    true
}

/// Calls `f` with every permutation of `0..k` in lexicographic order,
/// stopping early when `f` returns false.
pub fn for_each_permutation(k: usize, mut f: impl FnMut(&[usize]) -> bool) {
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        if !f(&perm) {
            return;
        }
        if !next_permutation(&mut perm) {
            return;
        }
    }
}

/// Every `σ ∈ Σ_S` on `0..n`, expressed as full maps, visited in turn.
pub fn for_each_sigma_s(n: usize, s: &[usize], mut f: impl FnMut(&[usize]) -> bool) {
    let mut sigma: Vec<usize> = (0..n).collect();
    for_each_permutation(s.len(), |p| {
        for (pos, &node) in s.iter().enumerate() {
            sigma[node] = s[p[pos]];
        }
        f(&sigma)
    });
}

/// Check `{𝒮(V^σ) = S} ⇔ {𝒮(V) = S}` for every `σ ∈ Σ_S`.
///
/// Selection rules here depend on `V` only through the graph.
pub fn verify_invariant_selector(
    g: &Graph,
    rule: &SelectionRule,
    s: &[usize],
) -> Result<InvarianceOutcome> {
    let n = g.n();
    if n > MAX_ENUMERATION_NODES {
        return Err(invalid(
            "n",
            format!("{n} nodes; enumeration is limited to {MAX_ENUMERATION_NODES}"),
        ));
    }
    let mut s_sorted = s.to_vec();
    s_sorted.sort_unstable();
    s_sorted.dedup();
    s_sorted.iter().try_for_each(|&i| g.check_node(i))?;
    rule.conditioning_set().iter().try_for_each(|&i| g.check_node(i))?;

    let base = rule.select(g) == s_sorted;
    let mut checked = 0;
    let mut counterexample = None;
    for_each_sigma_s(n, &s_sorted, |sigma| {
        checked += 1;
        let relabeled = g.permuted(sigma);
        if (rule.select(&relabeled) == s_sorted) != base {
            counterexample = Some(sigma.to_vec());
            return false;
        }
        true
    });
    Ok(InvarianceOutcome {
        holds: counterexample.is_none(),
        permutations_checked: checked,
        counterexample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_enumeration_counts() {
        let mut count = 0;
        for_each_permutation(4, |_| {
            count += 1;
            true
        });
        assert_eq!(count, 24);
        let mut seen = Vec::new();
        for_each_sigma_s(4, &[1, 3], |s| {
            seen.push(s.to_vec());
            true
        });
        assert_eq!(seen, vec![vec![0, 1, 2, 3], vec![0, 3, 2, 1]]);
    }

    #[test]
    fn ego_rule_is_invariant_on_star() {
        let star = Graph::from_edges(5, false, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let rule = SelectionRule::Ego { root: 0 };
        let out = verify_invariant_selector(&star, &rule, &[1, 2, 3, 4]).unwrap();
        assert!(out.holds);
        assert_eq!(out.permutations_checked, 24);
    }

    #[test]
    fn broken_rule_yields_root_leaf_swap() {
        let star = Graph::from_edges(4, false, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let rule = SelectionRule::BrokenEgo { root: 0 };
        let s = rule.select(&star);
        let out = verify_invariant_selector(&star, &rule, &s).unwrap();
        assert!(!out.holds);
        let sigma = out.counterexample.unwrap();
        assert_ne!(sigma[0], 0, "violating permutation must move the root");
    }

    #[test]
    fn rejects_large_populations() {
        let g = Graph::empty(9, false);
        assert!(verify_invariant_selector(&g, &SelectionRule::Ego { root: 0 }, &[]).is_err());
    }
}

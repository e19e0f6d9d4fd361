//! Exact conditional-exchangeability check on tiny finite DGPs.
//!
//! The population is `n ≤ 6` nodes with i.i.d. latent types, a response that
//! is either the type itself or a Bernoulli draw given the type, and edges
//! drawn independently given the types. Every probability is a numerator
//! over a fixed per-factor denominator, so each configuration's probability
//! is an integer over one common denominator and the conditional laws
//! of the selected subarray given `𝒮 = S` can be compared exactly.

use std::collections::HashMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::graph::Graph;

use super::invariance::for_each_permutation;
use super::selectors::SelectionRule;

/// A probability `numerator / denominator` for a binary outcome, stored as
/// the pair of outcome numerators `(p(1), p(0))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryLaw {
    pub one: u64,
    pub zero: u64,
}

impl BinaryLaw {
    pub fn new(one: u64, denominator: u64) -> Self {
        Self {
            one,
            zero: denominator - one,
        }
    }

    fn denominator(&self) -> u64 {
        self.one + self.zero
    }

    fn weight(&self, bit: bool) -> u64 {
        if bit {
            self.one
        } else {
            self.zero
        }
    }
}

/// How the observed response depends on the latent type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseLaw {
    /// `Y_i` is the type itself.
    EqualsType,
    /// `Y_i ~ Bernoulli(law[type])` independently.
    Bernoulli([BinaryLaw; 2]),
}

/// Finite-support jointly exchangeable DGP with binary latent types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteDgp {
    pub n: usize,
    pub directed: bool,
    pub types: BinaryLaw,
    /// `edges[a][b]` is the law of `A_ij` given types `(a, b)`; must be
    /// symmetric for undirected graphs.
    pub edges: [[BinaryLaw; 2]; 2],
    pub response: ResponseLaw,
}

impl FiniteDgp {
    /// Erdős–Rényi edges with probability `p_num / den`, no latent structure.
    pub fn erdos_renyi(n: usize, directed: bool, p_num: u64, den: u64, y: BinaryLaw) -> Self {
        let e = BinaryLaw::new(p_num, den);
        Self {
            n,
            directed,
            types: BinaryLaw::new(1, 2),
            edges: [[e, e], [e, e]],
            response: ResponseLaw::Bernoulli([y, y]),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > 6 {
            return Err(invalid("n", "exact enumeration supports 1..=6 nodes"));
        }
        let den = self.edges[0][0].denominator();
        if self.edges.iter().flatten().any(|l| l.denominator() != den) {
            return Err(invalid("edges", "edge laws must share a denominator"));
        }
        if !self.directed && self.edges[0][1] != self.edges[1][0] {
            return Err(invalid("edges", "undirected edge law must be symmetric"));
        }
        if let ResponseLaw::Bernoulli([a, b]) = self.response {
            if a.denominator() != b.denominator() {
                return Err(invalid("response", "response laws must share a denominator"));
            }
        }
        Ok(())
    }

    fn dyads(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| if self.directed { i != j } else { i < j })
            .collect()
    }
}

/// Observed subarray pattern over `S`: responses and the induced adjacency,
/// packed into bits (responses first, then dyads in row-major order).
pub type Pattern = u64;

/// Exact joint weights of `(𝒮 = S, pattern)` for one DGP and rule.
#[derive(Debug, Clone)]
pub struct SelectionLaws {
    directed: bool,
    /// Keyed by the selected set (sorted).
    pub by_selection: HashMap<Vec<usize>, HashMap<Pattern, u128>>,
    /// Common denominator of every weight.
    pub denominator: u128,
}

impl SelectionLaws {
    /// `P(pattern | 𝒮 = S)` in exact arithmetic.
    pub fn conditional_law(&self, s: &[usize]) -> Option<Vec<(Pattern, Ratio<u128>)>> {
        let laws = self.by_selection.get(s)?;
        let total: u128 = laws.values().sum();
        let mut out: Vec<_> = laws
            .iter()
            .map(|(&p, &w)| (p, Ratio::new(w, total)))
            .collect();
        out.sort_by_key(|(p, _)| *p);
        Some(out)
    }

    pub fn selection_probability(&self, s: &[usize]) -> Ratio<u128> {
        let w: u128 = self.by_selection.get(s).map_or(0, |m| m.values().sum());
        Ratio::new(w, self.denominator)
    }
}

fn pair_bits(k: usize, directed: bool) -> Vec<(usize, usize)> {
    (0..k)
        .flat_map(|a| (0..k).map(move |b| (a, b)))
        .filter(|&(a, b)| if directed { a != b } else { a < b })
        .collect()
}

fn encode(y: &[bool], g: &Graph, s: &[usize]) -> Pattern {
    let k = s.len();
    let mut key = 0u64;
    for (pos, &i) in s.iter().enumerate() {
        if y[i] {
            key |= 1 << pos;
        }
    }
    for (bit, (a, b)) in pair_bits(k, g.is_directed()).into_iter().enumerate() {
        if g.has_edge(s[a], s[b]) {
            key |= 1 << (k + bit);
        }
    }
    key
}

/// Apply a position permutation to a pattern: entry `(a, b)` of the result
/// is entry `(σ(a), σ(b))` of the input.
pub fn permute_pattern(key: Pattern, k: usize, directed: bool, sigma: &[usize]) -> Pattern {
    let pairs = pair_bits(k, directed);
    let index_of = |a: usize, b: usize| -> usize {
        let (a, b) = if directed || a < b { (a, b) } else { (b, a) };
        pairs.iter().position(|&p| p == (a, b)).unwrap_or(0)
    };
    let mut out = 0u64;
    for (a, &sa) in sigma.iter().enumerate().take(k) {
        if key >> sa & 1 == 1 {
            out |= 1 << a;
        }
    }
    for (bit, &(a, b)) in pairs.iter().enumerate() {
        let src = index_of(sigma[a], sigma[b]);
        if key >> (k + src) & 1 == 1 {
            out |= 1 << (k + bit);
        }
    }
    out
}

/// Enumerate the whole sample space of `dgp` and tabulate the selected
/// subarray law under `rule`.
pub fn enumerate_selection_laws(dgp: &FiniteDgp, rule: &SelectionRule) -> Result<SelectionLaws> {
    dgp.validate()?;
    let n = dgp.n;
    if rule.conditioning_set().iter().any(|&i| i >= n) {
        return Err(invalid("rule", "conditioning node outside the population"));
    }
    let dyads = dgp.dyads();
    let mut by_selection: HashMap<Vec<usize>, HashMap<Pattern, u128>> = HashMap::new();
    let mut g = Graph::empty(n, dgp.directed);
    let types: Vec<Vec<bool>> = (0..1u32 << n)
        .map(|m| (0..n).map(|i| m >> i & 1 == 1).collect())
        .collect();
    let type_weight: Vec<u128> = types
        .iter()
        .map(|t| t.iter().map(|&b| dgp.types.weight(b) as u128).product())
        .collect();

    for amask in 0..1u64 << dyads.len() {
        for (bit, &(i, j)) in dyads.iter().enumerate() {
            if amask >> bit & 1 == 1 {
                g.add_edge(i, j)?;
            } else {
                g.remove_edge(i, j);
            }
        }
        let s = rule.select(&g);
        let laws = by_selection.entry(s.clone()).or_default();
        for (t, &tw) in types.iter().zip(&type_weight) {
            if tw == 0 {
                continue;
            }
            let aw: u128 = dyads
                .iter()
                .enumerate()
                .map(|(bit, &(i, j))| {
                    dgp.edges[t[i] as usize][t[j] as usize].weight(amask >> bit & 1 == 1) as u128
                })
                .product();
            if aw == 0 {
                continue;
            }
            match &dgp.response {
                ResponseLaw::EqualsType => {
                    *laws.entry(encode(t, &g, &s)).or_default() += tw * aw;
                }
                ResponseLaw::Bernoulli(law) => {
                    for y in &types {
                        let yw: u128 = y
                            .iter()
                            .zip(t)
                            .map(|(&yi, &ti)| law[ti as usize].weight(yi) as u128)
                            .product();
                        if yw > 0 {
                            *laws.entry(encode(y, &g, &s)).or_default() += tw * aw * yw;
                        }
                    }
                }
            }
        }
    }
    let mut denominator = (dgp.types.denominator() as u128).pow(n as u32)
        * (dgp.edges[0][0].denominator() as u128).pow(dyads.len() as u32);
    if let ResponseLaw::Bernoulli([l, _]) = dgp.response {
        denominator *= (l.denominator() as u128).pow(n as u32);
    }
    by_selection.retain(|_, m| m.values().any(|&w| w > 0));
    Ok(SelectionLaws {
        directed: dgp.directed,
        by_selection,
        denominator,
    })
}

/// Summary of an exact exchangeability check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeabilityOutcome {
    pub holds: bool,
    pub selections_checked: usize,
    pub comparisons: usize,
    /// `(S, σ on positions of S, pattern)` where the laws first differ.
    pub violation: Option<(Vec<usize>, Vec<usize>, Pattern)>,
}

/// Check `ℒ(𝒱^σ | 𝒮 = S) = ℒ(𝒱 | 𝒮 = S)` for every reachable `S` and every
/// permutation of `S`, comparing exact weights.
pub fn check_conditional_exchangeability(laws: &SelectionLaws) -> ExchangeabilityOutcome {
    let mut selections: Vec<_> = laws.by_selection.keys().cloned().collect();
    selections.sort();
    let mut comparisons = 0;
    for s in &selections {
        let table = &laws.by_selection[s];
        let k = s.len();
        let mut violation = None;
        for_each_permutation(k, |sigma| {
            for (&key, &w) in table {
                comparisons += 1;
                let image = permute_pattern(key, k, laws.directed, sigma);
                if table.get(&image).copied().unwrap_or(0) != w {
                    violation = Some((s.clone(), sigma.to_vec(), key));
                    return false;
                }
            }
            true
        });
        if violation.is_some() {
            return ExchangeabilityOutcome {
                holds: false,
                selections_checked: selections.len(),
                comparisons,
                violation,
            };
        }
    }
    ExchangeabilityOutcome {
        holds: true,
        selections_checked: selections.len(),
        comparisons,
        violation: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_permutation_is_a_group_action() {
        let key: Pattern = 0b1_0110_101;
        let k = 3;
        let sigma = [1, 2, 0];
        let tau = [2, 0, 1];
        let once = permute_pattern(key, k, true, &sigma);
        assert_eq!(permute_pattern(once, k, true, &tau), key);
        assert_eq!(permute_pattern(0b110_101, k, false, &[0, 1, 2]), 0b110_101);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let dgp = FiniteDgp::erdos_renyi(4, false, 1, 3, BinaryLaw::new(1, 2));
        let laws = enumerate_selection_laws(&dgp, &SelectionRule::Ego { root: 0 }).unwrap();
        let total: Ratio<u128> = laws
            .by_selection
            .keys()
            .map(|s| laws.selection_probability(s))
            .fold(Ratio::new(0, 1), |a, b| a + b);
        assert_eq!(total, Ratio::new(1, 1));
        // the root's neighborhood is {1,2,3} with probability (1/3)^3
        assert_eq!(laws.selection_probability(&[1, 2, 3]), Ratio::new(1, 27));
    }

    #[test]
    fn ego_selection_is_conditionally_exchangeable() {
        let dgp = FiniteDgp::erdos_renyi(4, false, 1, 3, BinaryLaw::new(1, 4));
        let laws = enumerate_selection_laws(&dgp, &SelectionRule::Ego { root: 0 }).unwrap();
        assert!(check_conditional_exchangeability(&laws).holds);
    }

    #[test]
    fn broken_rule_breaks_exchangeability() {
        let dgp = FiniteDgp::erdos_renyi(4, false, 1, 3, BinaryLaw::new(1, 2));
        let laws = enumerate_selection_laws(&dgp, &SelectionRule::BrokenEgo { root: 0 }).unwrap();
        let out = check_conditional_exchangeability(&laws);
        assert!(!out.holds);
        assert!(out.violation.is_some());
    }
}

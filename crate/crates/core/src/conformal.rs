//! Split conformal prediction on a selected sample, and the weighted
//! conformal set for random-walk samples.
//!
//! Split mode fits on fold `D₁`, scores fold `D₂` with `|y − μ̂|`, and takes
//! the `⌈(1−α)(|D₂|+1)⌉`-th smallest score as the threshold `d` (infinite
//! when that rank exceeds `|D₂|`). The set is the closed interval
//! `[μ̂ − d, μ̂ + d]`.
//!
//! Weighted mode keeps the unnormalized weights `ν(j) = 2|E| / (n D_j)` of
//! the calibration half of a walk and admits `y` when
//! `(1/m) Σ ν_i 1(S̃_i ≤ s(y)) ≤ 1 − α`. Because the weighted mass is a
//! right-continuous step function, the set is `{y : s(y) < t*}` with `t*`
//! the first calibration score at which the mass exceeds `1 − α`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize, Serializer};

use crate::covariates::CovariateBundle;
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::graph_models::NodeDataset;
use crate::linalg::Mat;
use crate::regression::{score, FittedModel, ModelKind, ModelSummary};
use crate::sampling::WalkTrace;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", format!("{alpha} is not in (0, 1)")))
    }
}

// (1-α)(m+1) is often an integer up to rounding, e.g. 0.9 * 10.
const RANK_SLACK: f64 = 1e-9;

/// Rank `⌈(1−α)(1 + 1/m) m⌉` of the split threshold, or `None` when it
/// exceeds `m` (the prediction set is the whole line).
pub fn split_conformal_rank(m: usize, alpha: f64) -> Option<usize> {
    let level = (1.0 - alpha) * (m as f64 + 1.0);
    let k = ((level - RANK_SLACK).ceil() as usize).max(1);
    (k <= m).then_some(k)
}

/// Threshold `d` of split conformal prediction; `+∞` when the inflated
/// level exceeds one.
pub fn split_conformal_threshold(scores: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if scores.is_empty() {
        return Err(invalid("scores", "need at least one calibration score"));
    }
    check_scores(scores)?;
    Ok(match split_conformal_rank(scores.len(), alpha) {
        Some(k) => kth_smallest(scores, k),
        None => f64::INFINITY,
    })
}

fn check_scores(scores: &[f64]) -> Result<()> {
    match scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        Some(s) => Err(invalid("scores", format!("score {s} must be finite and nonnegative"))),
        None => Ok(()),
    }
}

fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[k - 1]
}

/// Which side of the threshold boundary belongs to the set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConformalMode {
    /// `{y : s(y) ≤ d}`.
    Split,
    /// `{y : s(y) < t*}`.
    Weighted,
}

/// Prediction interval for an absolute-residual score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionSet {
    pub mode: ConformalMode,
    pub threshold: f64,
    pub center: f64,
}

impl PredictionSet {
    pub fn interval(&self) -> (f64, f64) {
        (self.center - self.threshold, self.center + self.threshold)
    }

    pub fn contains(&self, y: f64) -> bool {
        let r = (y - self.center).abs();
        match self.mode {
            ConformalMode::Split => r <= self.threshold,
            ConformalMode::Weighted => r < self.threshold,
        }
    }

    pub fn width(&self) -> f64 {
        2.0 * self.threshold
    }

    pub fn is_unbounded(&self) -> bool {
        self.threshold.is_infinite()
    }
}

#[derive(Serialize)]
struct PredictionSetRecord {
    mode: ConformalMode,
    threshold: Option<f64>,
    interval: [Option<f64>; 2],
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl Serialize for PredictionSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let (lo, hi) = self.interval();
        PredictionSetRecord {
            mode: self.mode,
            threshold: finite(self.threshold),
            interval: [finite(lo), finite(hi)],
        }
        .serialize(s)
    }
}

/// How `S ∖ {test}` is split into the training and calibration folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "split", rename_all = "snake_case")]
pub enum FoldSplit {
    /// Even positions of the sorted remainder train, odd positions calibrate.
    Parity,
    /// Shuffle with `seed`, first half (rounded up) trains.
    Random { seed: u64 },
    /// Explicit node lists.
    Explicit { d1: Vec<usize>, d2: Vec<usize> },
}

impl Default for FoldSplit {
    fn default() -> Self {
        Self::Parity
    }
}

impl FoldSplit {
    /// Partition `rest` (sorted node ids) into `(D₁, D₂)`.
    pub fn partition(&self, rest: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
        let (d1, d2) = match self {
            FoldSplit::Parity => {
                let d1 = rest.iter().step_by(2).copied().collect();
                let d2 = rest.iter().skip(1).step_by(2).copied().collect();
                (d1, d2)
            }
            FoldSplit::Random { seed } => {
                let mut v = rest.to_vec();
                v.shuffle(&mut crate::rng::seeded(*seed));
                let cut = v.len().div_ceil(2);
                let d2 = v.split_off(cut);
                let mut d1 = v;
                d1.sort_unstable();
                let mut d2 = d2;
                d2.sort_unstable();
                (d1, d2)
            }
            FoldSplit::Explicit { d1, d2 } => {
                let mut all: Vec<usize> = d1.iter().chain(d2).copied().collect();
                all.sort_unstable();
                if all != rest {
                    return Err(invalid("split", "explicit folds must partition S without the test node"));
                }
                (d1.clone(), d2.clone())
            }
        };
        if d1.is_empty() {
            return Err(Error::EmptyFold { fold: "D1" });
        }
        if d2.is_empty() {
            return Err(Error::EmptyFold { fold: "D2" });
        }
        Ok((d1, d2))
    }
}

/// Which member of `S` is held out as the test point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum TestPoint {
    /// The largest index in `S`.
    Largest,
    Node { node: usize },
}

impl Default for TestPoint {
    fn default() -> Self {
        Self::Largest
    }
}

/// Everything produced by one split conformal run.
#[derive(Debug, Clone, Serialize)]
pub struct SplitConformalOutcome {
    pub test_node: usize,
    pub d1: Vec<usize>,
    pub d2: Vec<usize>,
    pub scores: Vec<f64>,
    pub model: ModelSummary,
    pub set: PredictionSet,
}

/// Feature rows `[x_i | ẑ_i]` for the selected nodes, in selection order.
pub fn selection_features(
    ds: &NodeDataset,
    selected: &[usize],
    cov: Option<&CovariateBundle>,
) -> Result<Mat> {
    let x = ds.x.select_rows(selected);
    match cov {
        None => Ok(x),
        Some(c) => {
            if c.nodes != selected {
                return Err(invalid(
                    "covariates",
                    "network covariates were not computed on this selection",
                ));
            }
            x.hstack(&c.zhat)
        }
    }
}

/// Split conformal prediction on the selected sample `selected` (sorted node
/// ids). Network covariates, when given, must have been computed on exactly
/// this selection.
pub fn split_conformal_predict(
    ds: &NodeDataset,
    selected: &[usize],
    cov: Option<&CovariateBundle>,
    test: TestPoint,
    split: &FoldSplit,
    alpha: f64,
    model: &ModelKind,
) -> Result<SplitConformalOutcome> {
    check_alpha(alpha)?;
    if selected.len() < 3 {
        return Err(Error::SampleTooSmall {
            size: selected.len(),
        });
    }
    if selected.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("selected", "selection must be sorted without duplicates"));
    }
    selected.iter().try_for_each(|&i| ds.graph.check_node(i))?;
    let features = selection_features(ds, selected, cov)?;
    let test_node = match test {
        TestPoint::Largest => selected[selected.len() - 1],
        TestPoint::Node { node } => node,
    };
    let test_pos = selected
        .iter()
        .position(|&i| i == test_node)
        .ok_or_else(|| invalid("test", format!("node {test_node} is not in the selection")))?;
    let rest: Vec<usize> = selected.iter().copied().filter(|&i| i != test_node).collect();
    let (d1, d2) = split.partition(&rest)?;
    let pos = |node: usize| selected.binary_search(&node).unwrap_or(0);

    let d1_pos: Vec<usize> = d1.iter().map(|&i| pos(i)).collect();
    let fitted = model.fit(
        &features.select_rows(&d1_pos),
        &d1.iter().map(|&i| ds.y[i]).collect::<Vec<_>>(),
    )?;
    let scores: Vec<f64> = d2
        .iter()
        .map(|&i| score(&fitted, ds.y[i], features.row(pos(i))))
        .collect();
    let threshold = split_conformal_threshold(&scores, alpha)?;
    let set = PredictionSet {
        mode: ConformalMode::Split,
        threshold,
        center: fitted.predict(features.row(test_pos)),
    };
    Ok(SplitConformalOutcome {
        test_node,
        d1,
        d2,
        scores,
        model: fitted.summary(),
        set,
    })
}

/// Calibration scores, optionally weighted, at level `alpha`.
///
/// Scores are kept sorted so that membership tests and the closed-form
/// threshold accumulate weights in the same order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationScores {
    scores: Vec<f64>,
    weights: Option<Vec<f64>>,
    alpha: f64,
}

impl CalibrationScores {
    pub fn unweighted(scores: Vec<f64>, alpha: f64) -> Result<Self> {
        Self::build(scores, None, alpha)
    }

    pub fn weighted(scores: Vec<f64>, weights: Vec<f64>, alpha: f64) -> Result<Self> {
        if weights.len() != scores.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} scores",
                weights.len(),
                scores.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid("weights", format!("weight {w} must be finite and nonnegative")));
        }
        Self::build(scores, Some(weights), alpha)
    }

    fn build(scores: Vec<f64>, weights: Option<Vec<f64>>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if scores.is_empty() {
            return Err(invalid("scores", "need at least one calibration score"));
        }
        check_scores(&scores)?;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        Ok(Self {
            scores: order.iter().map(|&i| scores[i]).collect(),
            weights: weights.map(|w| order.iter().map(|&i| w[i]).collect()),
            alpha,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// `Σ ν_i 1(S̃_i ≤ s)`, accumulated in score order.
    pub fn mass_at(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &si) in self.scores.iter().enumerate() {
            if si > s {
                break;
            }
            acc += self.weight(i);
        }
        acc
    }

    fn exceeds(&self, mass: f64) -> bool {
        mass / self.len() as f64 > 1.0 - self.alpha
    }

    /// Threshold `t*`: the first calibration score at which the weighted
    /// mass exceeds `1 − α`; `+∞` if it never does.
    pub fn weighted_threshold(&self) -> f64 {
        let mut acc = 0.0;
        let mut i = 0;
        while i < self.scores.len() {
            let v = self.scores[i];
            while i < self.scores.len() && self.scores[i] == v {
                acc += self.weight(i);
                i += 1;
            }
            if self.exceeds(acc) {
                return v;
            }
        }
        f64::INFINITY
    }
}

/// Membership of a query score in the weighted conformal set.
pub fn weighted_conformal_membership(cal: &CalibrationScores, s_query: f64) -> bool {
    !cal.exceeds(cal.mass_at(s_query))
}

/// Weighted conformal interval around `center`.
pub fn weighted_interval(cal: &CalibrationScores, center: f64) -> PredictionSet {
    PredictionSet {
        mode: ConformalMode::Weighted,
        threshold: cal.weighted_threshold(),
        center,
    }
}

/// Importance weights `ν(j) = 2|E| / (n D_j)` for the given nodes.
pub fn node_weights(g: &Graph, nodes: &[usize]) -> Result<Vec<f64>> {
    if g.is_directed() {
        return Err(Error::DirectedGraph);
    }
    let edges = g.edge_count();
    if edges == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = g.n() as f64;
    nodes
        .iter()
        .map(|&j| {
            g.check_node(j)?;
            match g.degree(j) {
                0 => Err(Error::IsolatedNode { node: j }),
                d => Ok(2.0 * edges as f64 / (n * d as f64)),
            }
        })
        .collect()
}

/// Split a walk of `2m` steps into the training prefix `𝒳_0..𝒳_m` and the
/// calibration suffix `𝒳_{m+1}..𝒳_{2m}`.
pub fn walk_halves(trace: &WalkTrace) -> Result<(&[usize], &[usize])> {
    let steps = trace.steps();
    if steps == 0 || steps % 2 != 0 {
        return Err(invalid("trace", format!("walk has {steps} steps; need an even positive count")));
    }
    let m = steps / 2;
    Ok((&trace.nodes[..=m], &trace.nodes[m + 1..]))
}

/// Weights `ν(𝒳_{m+i})` for the calibration half of the walk.
pub fn walk_weights(g: &Graph, trace: &WalkTrace) -> Result<Vec<f64>> {
    let (_, cal) = walk_halves(trace)?;
    node_weights(g, cal)
}

/// A model fitted on the walk's first half together with weighted
/// calibration scores from its second half.
#[derive(Debug, Clone)]
pub struct WeightedWalkPredictor {
    pub model: FittedModel,
    pub calibration: CalibrationScores,
}

impl WeightedWalkPredictor {
    /// Fit on `𝒳_0..𝒳_m` using `features` (rows indexed by node) and
    /// calibrate on `𝒳_{m+1}..𝒳_{2m}`.
    pub fn fit(
        ds: &NodeDataset,
        features: &Mat,
        trace: &WalkTrace,
        alpha: f64,
        model: &ModelKind,
    ) -> Result<Self> {
        let (train, cal) = walk_halves(trace)?;
        let y_train: Vec<f64> = train.iter().map(|&i| ds.y[i]).collect();
        let fitted = model.fit(&features.select_rows(train), &y_train)?;
        let scores: Vec<f64> = cal
            .iter()
            .map(|&i| score(&fitted, ds.y[i], features.row(i)))
            .collect();
        let weights = node_weights(&ds.graph, cal)?;
        Ok(Self {
            model: fitted,
            calibration: CalibrationScores::weighted(scores, weights, alpha)?,
        })
    }

    pub fn predict_set(&self, query: &[f64]) -> PredictionSet {
        weighted_interval(&self.calibration, self.model.predict(query))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_to_nine() -> Vec<f64> {
        (1..=9).map(f64::from).collect()
    }

    #[test]
    fn split_threshold_examples() {
        assert_eq!(split_conformal_threshold(&one_to_nine(), 0.1).unwrap(), 9.0);
        assert_eq!(split_conformal_threshold(&one_to_nine(), 0.5).unwrap(), 5.0);
        assert_eq!(split_conformal_threshold(&[3.0], 0.1).unwrap(), f64::INFINITY);
        assert!(split_conformal_threshold(&[], 0.1).is_err());
        assert!(split_conformal_threshold(&[1.0], 0.0).is_err());
        assert!(split_conformal_threshold(&[1.0], 1.0).is_err());
        assert!(split_conformal_threshold(&[-1.0], 0.5).is_err());
    }

    #[test]
    fn split_threshold_is_permutation_invariant() {
        let mut s = vec![0.3, 2.0, 1.1, 0.7, 5.0, 0.2];
        let d = split_conformal_threshold(&s, 0.3).unwrap();
        s.reverse();
        assert_eq!(split_conformal_threshold(&s, 0.3).unwrap(), d);
    }

    #[test]
    fn interval_algebra_and_json() {
        let set = PredictionSet {
            mode: ConformalMode::Split,
            threshold: 2.0,
            center: 5.0,
        };
        assert_eq!(set.interval(), (3.0, 7.0));
        assert!(set.contains(3.0) && set.contains(7.0) && !set.contains(7.01));
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"{"mode":"split","threshold":2.0,"interval":[3.0,7.0]}"#);
        let open = PredictionSet {
            threshold: f64::INFINITY,
            ..set
        };
        assert!(open.contains(1e300));
        assert_eq!(
            serde_json::to_string(&open).unwrap(),
            r#"{"mode":"split","threshold":null,"interval":[null,null]}"#
        );
    }

    #[test]
    fn weighted_membership_two_point_example() {
        let cal = CalibrationScores::weighted(vec![1.0, 3.0], vec![1.0, 1.0], 0.5).unwrap();
        assert!(weighted_conformal_membership(&cal, 2.0));
        assert!(!weighted_conformal_membership(&cal, 3.0));
        assert!(weighted_conformal_membership(&cal, 0.5));
        let set = weighted_interval(&cal, 10.0);
        assert_eq!(set.threshold, 3.0);
        assert!(set.contains(12.9) && !set.contains(13.0));
    }

    #[test]
    fn weighted_threshold_infinite_when_mass_small() {
        let cal = CalibrationScores::weighted(vec![1.0, 2.0, 3.0], vec![0.5, 0.5, 0.5], 0.2).unwrap();
        assert_eq!(cal.weighted_threshold(), f64::INFINITY);
        assert!(weighted_conformal_membership(&cal, 1e9));
    }

    #[test]
    fn weights_on_small_graphs() {
        let k = Graph::complete(5, false);
        assert_eq!(node_weights(&k, &[0, 1, 4]).unwrap(), vec![1.0; 3]);
        let p = Graph::from_edges(3, false, &[(0, 1), (1, 2)]).unwrap();
        let w = node_weights(&p, &[0, 1, 2]).unwrap();
        assert!((w[0] - 4.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(node_weights(&Graph::empty(3, false), &[0]), Err(Error::EmptyGraph)));
    }

    #[test]
    fn fold_splits() {
        let rest = [1, 4, 6, 9, 12];
        let (a, b) = FoldSplit::Parity.partition(&rest).unwrap();
        assert_eq!((a, b), (vec![1, 6, 12], vec![4, 9]));
        let (a, b) = FoldSplit::Random { seed: 3 }.partition(&rest).unwrap();
        assert_eq!(a.len(), 3);
        let mut all = [a, b].concat();
        all.sort_unstable();
        assert_eq!(all, rest);
        assert!(matches!(FoldSplit::Parity.partition(&[2]), Err(Error::EmptyFold { fold: "D2" })));
        let bad = FoldSplit::Explicit {
            d1: vec![1],
            d2: vec![4],
        };
        assert!(bad.partition(&rest).is_err());
    }
}

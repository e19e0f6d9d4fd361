use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Rule used to pick the first node of a walk. Any measurable choice is
/// allowed; these are the ones exposed to configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum StartPolicy {
    Uniform,
    Fixed { node: usize },
    /// Highest degree, lowest index on ties.
    MaxDegree,
    /// Uniform among nodes with degree strictly greater than `threshold`.
    DegreeThreshold { threshold: usize },
}

impl Default for StartPolicy {
    fn default() -> Self {
        Self::Uniform
    }
}

/// Node sequence `𝒳_0..𝒳_T` of a simple random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkTrace {
    pub start: StartPolicy,
    pub nodes: Vec<usize>,
}

impl WalkTrace {
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Pick a start node according to `policy`.
pub fn choose_walk_start<R: Rng + ?Sized>(
    g: &Graph,
    policy: &StartPolicy,
    rng: &mut R,
) -> Result<usize> {
    if g.n() == 0 {
        return Err(Error::NoQualifyingStart("graph has no nodes".into()));
    }
    match *policy {
        StartPolicy::Uniform => Ok(rng.random_range(0..g.n())),
        StartPolicy::Fixed { node } => {
            g.check_node(node)?;
            Ok(node)
        }
        StartPolicy::MaxDegree => Ok((0..g.n())
            .max_by(|&a, &b| g.degree(a).cmp(&g.degree(b)).then(b.cmp(&a)))
            .unwrap_or(0)),
        StartPolicy::DegreeThreshold { threshold } => {
            let qualifying: Vec<usize> = (0..g.n()).filter(|&i| g.degree(i) > threshold).collect();
            qualifying
                .choose(rng)
                .copied()
                .ok_or_else(|| Error::NoQualifyingStart(format!("no node has degree > {threshold}")))
        }
    }
}

/// Simple random walk of `steps` transitions from `x0`: each move is uniform
/// over the current node's neighbors.
pub fn random_walk<R: Rng + ?Sized>(
    g: &Graph,
    x0: usize,
    steps: usize,
    rng: &mut R,
) -> Result<WalkTrace> {
    random_walk_from(g, x0, steps, StartPolicy::Fixed { node: x0 }, rng)
}

pub(crate) fn random_walk_from<R: Rng + ?Sized>(
    g: &Graph,
    x0: usize,
    steps: usize,
    start: StartPolicy,
    rng: &mut R,
) -> Result<WalkTrace> {
    if g.is_directed() {
        return Err(Error::DirectedGraph);
    }
    g.check_node(x0)?;
    let lists = g.adjacency_lists();
    let mut nodes = Vec::with_capacity(steps + 1);
    nodes.push(x0);
    let mut cur = x0;
    for _ in 0..steps {
        cur = *lists[cur].choose(rng).ok_or(Error::WalkStuck { node: cur })?;
        nodes.push(cur);
    }
    Ok(WalkTrace { start, nodes })
}

/// Choose a start by `policy`, then walk.
pub fn random_walk_with_policy<R: Rng + ?Sized>(
    g: &Graph,
    policy: &StartPolicy,
    steps: usize,
    rng: &mut R,
) -> Result<WalkTrace> {
    let x0 = choose_walk_start(g, policy, rng)?;
    random_walk_from(g, x0, steps, policy.clone(), rng)
}

//! Scene subgraph selection: connecting-strength scores, per-target
//! first-order neighbour choice, cycle pruning, top-k ranking and pooling.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::SpatialSceneGraph;
use crate::nn::{axpy, dot, init_bound, sigmoid, softmax, softmax_backward, tanh_backward, tanh_in_place, uniform_vec, Linear};
use crate::ocgcn::GraphEncoding;

/// Default score threshold below which a neighbour is not offered.
pub const DEFAULT_P_CUT: f64 = 0.1;

/// Lower bound applied before taking logarithms of scores.
pub const SCORE_FLOOR: f64 = 1e-12;

/// Two-layer scorer `a = w . tanh(W s + b)` over final edge representations.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScorer {
    pub hidden: Linear,
    pub output: Vec<f64>,
}

impl EdgeScorer {
    pub fn zeros(d_hidden: usize) -> Self {
        EdgeScorer {
            hidden: Linear::zeros(d_hidden, d_hidden),
            output: vec![0.0; d_hidden],
        }
    }

    pub fn init<R: Rng>(rng: &mut R, d_hidden: usize) -> Self {
        EdgeScorer {
            hidden: Linear::init(rng, d_hidden, d_hidden),
            output: uniform_vec(rng, d_hidden, init_bound(d_hidden)),
        }
    }

    fn hidden_act(&self, edge_rep: &[f64]) -> Vec<f64> {
        let mut h = self.hidden.forward(edge_rep);
        tanh_in_place(&mut h);
        h
    }

    pub fn logit(&self, edge_rep: &[f64]) -> f64 {
        dot(&self.output, &self.hidden_act(edge_rep))
    }

    /// Accumulates parameter gradients and returns `dL/d edge_rep`.
    fn backward(&self, edge_rep: &[f64], grad_logit: f64, grads: &mut EdgeScorer) -> Vec<f64> {
        let h = self.hidden_act(edge_rep);
        axpy(grad_logit, &h, &mut grads.output);
        let gh: Vec<f64> = self.output.iter().map(|w| w * grad_logit).collect();
        let g_pre = tanh_backward(&h, &gh);
        self.hidden.backward(edge_rep, &g_pre, &mut grads.hidden)
    }

    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        crate::ocgcn::push_linear(&mut out, "scorer.hidden", &self.hidden);
        out.push(("scorer.output".to_string(), vec![self.output.len()], &self.output[..]));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![&mut self.hidden.weight, &mut self.hidden.bias, &mut self.output]
    }
}

/// Scores on the edges incident to one target, normalized by softmax.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetGroup {
    pub target: usize,
    pub neighbors: Vec<usize>,
    pub logits: Vec<f64>,
    pub scores: Vec<f64>,
}

impl TargetGroup {
    pub fn score(&self, node: usize) -> Option<f64> {
        self.neighbors
            .iter()
            .position(|&k| k == node)
            .map(|p| self.scores[p])
    }
}

/// Connecting-strength scores. Target-incident edges are softmax-normalized
/// per target; the remaining edges carry independent sigmoid scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeScores {
    /// Groups for the subject and object target, in that order.
    pub groups: [TargetGroup; 2],
    /// `(i, j)` with `i < j`, neither endpoint a target.
    pub others: Vec<((usize, usize), f64)>,
}

impl EdgeScores {
    /// Builds scores from raw logits `logit(i, j)` for directed edges.
    pub fn from_logits(graph: &SpatialSceneGraph, mut logit: impl FnMut(usize, usize) -> f64) -> Self {
        let (o1, o2) = graph.targets();
        let mut group = |t: usize| {
            let neighbors: Vec<usize> = graph.neighbors(t).collect();
            let logits: Vec<f64> = neighbors.iter().map(|&j| logit(t, j)).collect();
            TargetGroup {
                target: t,
                scores: softmax(&logits),
                neighbors,
                logits,
            }
        };
        let groups = [group(o1), group(o2)];
        let others = graph
            .edges()
            .into_iter()
            .filter(|&(i, j)| !graph.is_target(i) && !graph.is_target(j))
            .map(|(i, j)| ((i, j), sigmoid(logit(i, j))))
            .collect();
        EdgeScores { groups, others }
    }

    pub fn targets(&self) -> (usize, usize) {
        (self.groups[0].target, self.groups[1].target)
    }

    /// `a_{t, i}` for a target node `t`; `None` when `t` is not a target or
    /// the edge is absent.
    pub fn from_target(&self, t: usize, i: usize) -> Option<f64> {
        self.groups.iter().find(|g| g.target == t)?.score(i)
    }

    /// Score of any edge, reading target-incident edges from the target side
    /// (the subject's group for the target-pair edge).
    pub fn edge(&self, i: usize, j: usize) -> Option<f64> {
        self.from_target(i, j)
            .or_else(|| self.from_target(j, i))
            .or_else(|| {
                let key = (i.min(j), i.max(j));
                self.others.iter().find(|(e, _)| *e == key).map(|&(_, s)| s)
            })
    }
}

/// Scores every edge of the encoded graph from its final-layer representation.
pub fn score_edges(encoding: &GraphEncoding, scorer: &EdgeScorer, graph: &SpatialSceneGraph) -> EdgeScores {
    EdgeScores::from_logits(graph, |i, j| {
        let rep = encoding
            .final_edge(i, j)
            .expect("encoding covers every graph edge");
        scorer.logit(rep)
    })
}

/// Back-propagates gradients on the target-group scores through the softmax
/// and scorer. Returns the gradient for each directed edge's final
/// representation (indexed like `encoding.edges`).
pub fn score_backward(
    encoding: &GraphEncoding,
    scorer: &EdgeScorer,
    scores: &EdgeScores,
    grad_scores: &[Vec<f64>; 2],
    grads: &mut EdgeScorer,
) -> Vec<Vec<f64>> {
    let mut g_edges = vec![vec![0.0; encoding.d_hidden]; encoding.edges.len()];
    for (group, g) in scores.groups.iter().zip(grad_scores) {
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let g_logits = softmax_backward(&group.scores, g);
        for (&j, &gz) in group.neighbors.iter().zip(&g_logits) {
            let id = encoding.edge_id(group.target, j).expect("edge encoded");
            let rep = &encoding.edge_reps[encoding.layers()][id];
            let ge = scorer.backward(rep, gz, grads);
            for (a, b) in g_edges[id].iter_mut().zip(&ge) {
                *a += b;
            }
        }
    }
    g_edges
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SubgraphType {
    TwoHop,
    ThreeHopS,
    ThreeHopO,
    FourHop,
}

impl SubgraphType {
    pub fn label(self) -> &'static str {
        match self {
            SubgraphType::TwoHop => "2-hop",
            SubgraphType::ThreeHopS => "3-hop-s",
            SubgraphType::ThreeHopO => "3-hop-o",
            SubgraphType::FourHop => "4-hop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subgraph {
    /// Sorted node indices.
    pub nodes: Vec<usize>,
    /// Sorted undirected edges `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
    pub kind: SubgraphType,
    pub score: f64,
}

impl Subgraph {
    /// Extra node attached to the given target, if any.
    pub fn attached(&self, target: usize, other_target: usize) -> Option<usize> {
        self.edges.iter().find_map(|&(i, j)| match (i == target, j == target) {
            (true, _) if j != other_target => Some(j),
            (_, true) if i != other_target => Some(i),
            _ => None,
        })
    }

    fn same_structure(&self, other: &Subgraph) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }

    /// Checks the structural invariants: both targets present, at most four
    /// nodes, a tree of target-incident edges, one extra node per target.
    pub fn check_invariants(&self, targets: (usize, usize)) -> Result<()> {
        let (o1, o2) = targets;
        let bad = |m: &str| Err(Error::validation("subgraph", m.to_string()));
        if !self.nodes.contains(&o1) || !self.nodes.contains(&o2) {
            return bad("targets missing");
        }
        if self.nodes.len() > 4 {
            return bad("more than four nodes");
        }
        if self.edges.len() + 1 != self.nodes.len() {
            return bad("not a tree");
        }
        if !self.edges.contains(&(o1.min(o2), o1.max(o2))) {
            return bad("target-pair edge missing");
        }
        for &(i, j) in &self.edges {
            let t = |k| k == o1 || k == o2;
            if !t(i) && !t(j) {
                return bad("edge beyond first-order neighbourhood");
            }
            if !self.nodes.contains(&i) || !self.nodes.contains(&j) {
                return bad("edge endpoint outside node set");
            }
        }
        for &k in &self.nodes {
            if k == o1 || k == o2 {
                continue;
            }
            let deg = self.edges.iter().filter(|&&(i, j)| i == k || j == k).count();
            if deg != 1 {
                return bad("extra node must hang from exactly one target");
            }
        }
        let per_target = |t: usize| {
            self.edges
                .iter()
                .filter(|&&(i, j)| (i == t || j == t) && !(i.min(j) == o1.min(o2) && i.max(j) == o1.max(o2)))
                .count()
        };
        if per_target(o1) > 1 || per_target(o2) > 1 {
            return bad("a target has more than one extra neighbour");
        }
        classify_subgraph(self, targets).map(|_| ())
    }
}

fn undirected(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

pub fn classify_subgraph(sub: &Subgraph, targets: (usize, usize)) -> Result<SubgraphType> {
    let (o1, o2) = targets;
    let subject = sub.attached(o1, o2);
    let object = sub.attached(o2, o1);
    let extra = sub.nodes.len().saturating_sub(2);
    let kind = match (subject, object, extra) {
        (None, None, 0) => SubgraphType::TwoHop,
        (Some(_), None, 1) => SubgraphType::ThreeHopS,
        (None, Some(_), 1) => SubgraphType::ThreeHopO,
        (Some(a), Some(b), 2) if a != b => SubgraphType::FourHop,
        _ => {
            return Err(Error::validation(
                "subgraph",
                "structure matches no subgraph type",
            ))
        }
    };
    Ok(kind)
}

/// Sum of the member target-incident edge scores; the target-pair edge
/// contributes from both targets' groups.
pub fn subgraph_score(edges: &[(usize, usize)], scores: &EdgeScores) -> f64 {
    let (o1, o2) = scores.targets();
    let pair = undirected(o1, o2);
    let mut total = 0.0;
    for &(i, j) in edges {
        if (i, j) == pair {
            total += scores.from_target(o1, o2).unwrap_or(0.0) + scores.from_target(o2, o1).unwrap_or(0.0);
        } else if i == o1 || i == o2 {
            total += scores.from_target(i, j).unwrap_or(0.0);
        } else {
            total += scores.from_target(j, i).unwrap_or(0.0);
        }
    }
    total
}

/// Ranking order: score descending, then sorted node indices, then edges.
pub fn rank_order(a: &Subgraph, b: &Subgraph) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.nodes.cmp(&b.nodes))
        .then_with(|| a.edges.cmp(&b.edges))
}

/// Assembles the per-target picks into one subgraph. When both targets pick
/// the same neighbour, the edge with the lower score is pruned (the object
/// side loses ties).
pub fn assemble(
    targets: (usize, usize),
    subject_pick: Option<usize>,
    object_pick: Option<usize>,
    scores: &EdgeScores,
) -> Subgraph {
    let (o1, o2) = targets;
    let (mut s, mut o) = (subject_pick, object_pick);
    if let (Some(a), Some(b)) = (s, o) {
        if a == b {
            let sa = scores.from_target(o1, a).unwrap_or(0.0);
            let sb = scores.from_target(o2, b).unwrap_or(0.0);
            if sa < sb {
                s = None;
            } else {
                o = None;
            }
        }
    }
    let mut nodes = vec![o1, o2];
    let mut edges = vec![undirected(o1, o2)];
    if let Some(a) = s {
        nodes.push(a);
        edges.push(undirected(o1, a));
    }
    if let Some(b) = o {
        nodes.push(b);
        edges.push(undirected(o2, b));
    }
    nodes.sort_unstable();
    edges.sort_unstable();
    let kind = match (s, o) {
        (None, None) => SubgraphType::TwoHop,
        (Some(_), None) => SubgraphType::ThreeHopS,
        (None, Some(_)) => SubgraphType::ThreeHopO,
        (Some(_), Some(_)) => SubgraphType::FourHop,
    };
    let score = subgraph_score(&edges, scores);
    Subgraph {
        nodes,
        edges,
        kind,
        score,
    }
}

/// Non-target neighbours a target may pick, with their scores, best first.
pub fn eligible_neighbors(group: &TargetGroup, other_target: usize, p_cut: f64) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = group
        .neighbors
        .iter()
        .zip(&group.scores)
        .filter(|&(&j, &a)| j != other_target && a >= p_cut)
        .map(|(&j, &a)| (j, a))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

/// Result of the training-time selection, with the relaxed choice weights
/// that carry the gradient path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSelection {
    pub subgraph: Subgraph,
    /// Neighbour chosen by each target (the other target means no extra node).
    pub picks: [usize; 2],
    /// Relaxed one-hot weights over each target's incident edges.
    pub relaxed: [Vec<(usize, f64)>; 2],
}

fn gumbel<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    -(-u.ln()).ln()
}

/// Draws one subgraph. Each target independently perturbs the log-scores of
/// its incident edges with temperature-scaled Gumbel noise and takes the
/// argmax, which samples from the scores sharpened by `1 / temperature`.
pub fn select_subgraph_train(
    graph: &SpatialSceneGraph,
    scores: &EdgeScores,
    temperature: f64,
    seed: u64,
) -> Result<TrainSelection> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::validation("temperature", "must be positive"));
    }
    let (o1, o2) = graph.targets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = [o2, o1];
    let mut relaxed: [Vec<(usize, f64)>; 2] = [Vec::new(), Vec::new()];
    for (side, group) in scores.groups.iter().enumerate() {
        let perturbed: Vec<f64> = group
            .scores
            .iter()
            .map(|&a| a.max(SCORE_FLOOR).ln() + temperature * gumbel(&mut rng))
            .collect();
        let best = perturbed
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k)
            .expect("targets always have the pair edge");
        picks[side] = group.neighbors[best];
        let soft = softmax(&perturbed.iter().map(|y| y / temperature).collect::<Vec<_>>());
        relaxed[side] = group.neighbors.iter().copied().zip(soft).collect();
    }
    let as_extra = |pick: usize| (pick != o1 && pick != o2).then_some(pick);
    let subgraph = assemble((o1, o2), as_extra(picks[0]), as_extra(picks[1]), scores);
    Ok(TrainSelection {
        subgraph,
        picks,
        relaxed,
    })
}

/// Top-k subgraphs from every combination of per-target picks whose score
/// clears `p_cut`. The 2-hop subgraph is always a candidate.
pub fn select_subgraphs_topk(
    graph: &SpatialSceneGraph,
    scores: &EdgeScores,
    k: usize,
    p_cut: f64,
) -> Result<Vec<Subgraph>> {
    if k < 1 {
        return Err(Error::validation("k", "must be at least 1"));
    }
    let (o1, o2) = graph.targets();
    let side = |g: &TargetGroup, other| {
        let mut picks: Vec<Option<usize>> = eligible_neighbors(g, other, p_cut)
            .into_iter()
            .map(|(j, _)| Some(j))
            .collect();
        picks.push(None);
        picks
    };
    let subject = side(&scores.groups[0], o2);
    let object = side(&scores.groups[1], o1);
    let mut candidates: Vec<Subgraph> = Vec::with_capacity(subject.len() * object.len());
    for &s in &subject {
        for &o in &object {
            candidates.push(assemble((o1, o2), s, o, scores));
        }
    }
    candidates.sort_by(rank_order);
    let mut out: Vec<Subgraph> = Vec::with_capacity(k.min(candidates.len()));
    for c in candidates {
        if out.len() == k {
            break;
        }
        if !out.iter().any(|s| s.same_structure(&c)) {
            out.push(c);
        }
    }
    Ok(out)
}

/// Exhaustive enumeration of every valid subgraph, ranked like
/// [`select_subgraphs_topk`]. Tries every node set of the two targets plus up
/// to two other nodes and every edge subset over it, keeping the ones that
/// satisfy the structural rules and the `p_cut` filter.
pub fn enumerate_subgraphs_oracle(
    graph: &SpatialSceneGraph,
    scores: &EdgeScores,
    p_cut: f64,
) -> Vec<Subgraph> {
    let n = graph.node_count();
    let (o1, o2) = graph.targets();
    let others: Vec<usize> = (0..n).filter(|&k| k != o1 && k != o2).collect();
    let mut node_sets: Vec<Vec<usize>> = vec![vec![]];
    for (a, &x) in others.iter().enumerate() {
        node_sets.push(vec![x]);
        for &y in &others[a + 1..] {
            node_sets.push(vec![x, y]);
        }
    }
    let mut out = Vec::new();
    for extra in node_sets {
        let mut nodes = vec![o1, o2];
        nodes.extend(&extra);
        nodes.sort_unstable();
        let mut universe = Vec::new();
        for (a, &x) in nodes.iter().enumerate() {
            for &y in &nodes[a + 1..] {
                universe.push((x, y));
            }
        }
        for mask in 0u32..(1 << universe.len()) {
            let edges: Vec<(usize, usize)> = universe
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            if !edges.iter().all(|&(i, j)| graph.has_edge(i, j)) {
                continue;
            }
            let admitted = edges.iter().all(|&(i, j)| {
                if undirected(o1, o2) == (i, j) {
                    return true;
                }
                let (t, other) = if i == o1 || i == o2 { (i, j) } else { (j, i) };
                scores.from_target(t, other).is_some_and(|a| a >= p_cut)
            });
            if !admitted {
                continue;
            }
            let Some(kind) = tree_kind(&nodes, &edges, (o1, o2)) else {
                continue;
            };
            let score = subgraph_score(&edges, scores);
            out.push(Subgraph {
                nodes: nodes.clone(),
                edges,
                kind,
                score,
            });
        }
    }
    out.sort_by(rank_order);
    out
}

fn tree_kind(nodes: &[usize], edges: &[(usize, usize)], targets: (usize, usize)) -> Option<SubgraphType> {
    let candidate = Subgraph {
        nodes: nodes.to_vec(),
        edges: edges.to_vec(),
        kind: SubgraphType::TwoHop,
        score: 0.0,
    };
    candidate.check_invariants(targets).ok()?;
    classify_subgraph(&candidate, targets).ok()
}

/// Subgraph-weighted mean over the whole graph:
/// `r = 1/M^2 sum_i sum_j lambda_i (s_i ++ e_ij)` with
/// `lambda_i = (1[i in sub] + a_{t1,i} + a_{t2,i}) / sum_l (a_{t1,l} + a_{t2,l})`.
/// Missing edges contribute a zero edge vector.
pub fn pool_subgraph(
    encoding: &GraphEncoding,
    graph: &SpatialSceneGraph,
    sub: &Subgraph,
    scores: &EdgeScores,
) -> Vec<f64> {
    let m = graph.node_count();
    let d = encoding.d_hidden;
    let (t1, t2) = graph.targets();
    let a = |t: usize, i: usize| scores.from_target(t, i).unwrap_or(0.0);
    let denom: f64 = (0..m).map(|l| a(t1, l) + a(t2, l)).sum();
    let mut out = vec![0.0; 2 * d];
    for i in 0..m {
        let member = if sub.nodes.contains(&i) { 1.0 } else { 0.0 };
        let lambda = (member + a(t1, i) + a(t2, i)) / denom;
        let node = encoding.final_node(i);
        for j in 0..m {
            axpy(lambda, node, &mut out[..d]);
            if let Some(edge) = encoding.final_edge(i, j) {
                axpy(lambda, edge, &mut out[d..]);
            }
        }
    }
    let scale = 1.0 / (m * m) as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

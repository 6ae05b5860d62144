//! Object-centred graph convolutional encoder.
//!
//! Layer 0 embeds each node from its RoI feature plus a looked-up pose
//! embedding (orientation and size quantized into bins), and each directed
//! edge from the concatenated centroids. Every following layer aggregates
//! messages `[h_j ; e_ij ; t]` from neighbours with attention weights
//! conditioned on the target summary `t = h_o1 ++ h_o2`, then refreshes the
//! edge representations from the new endpoint states.
//!
//! Nodes without edges keep their layer-0 representation at every layer.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpatialSceneGraph;
use crate::nn::{
    add_into, axpy, dot, init_bound, softmax, softmax_backward, tanh_backward, tanh_in_place,
    uniform_vec, Linear,
};
use crate::scene::{Object3D, Scene};

/// Number of quantized pose scalars (three angles, three extents).
pub const POSE_SCALARS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcgcnConfig {
    pub d_vis: usize,
    pub d_hidden: usize,
    pub layers: usize,
    pub bins: usize,
}

impl Default for OcgcnConfig {
    fn default() -> Self {
        OcgcnConfig {
            d_vis: crate::scene::DEFAULT_VIS_DIM,
            d_hidden: 768,
            layers: 3,
            bins: 16,
        }
    }
}

impl OcgcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_hidden < 2 {
            return Err(Error::validation("d_hidden", "must be at least 2"));
        }
        if self.layers < 1 {
            return Err(Error::validation("layers", "must be at least 1"));
        }
        if self.bins < 2 {
            return Err(Error::validation("bins", "must be at least 2"));
        }
        if self.d_vis < 1 {
            return Err(Error::validation("d_vis", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-layer aggregation (`W_a`, `b`) and attention (`W_b`) weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `d_h x 4 d_h`.
    pub aggregate: Linear,
    /// Attention scoring vector over `h_j ++ e_ij` (length `2 d_h`). The
    /// target-summary block of the message is shared by every neighbour and
    /// cancels in the softmax, so it carries no weight here.
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcgcnParams {
    pub config: OcgcnConfig,
    /// One `bins x d_h` lookup table per pose scalar.
    pub pose_tables: Vec<Vec<f64>>,
    /// `d_h x (d_vis + d_h)`.
    pub node_ffn: Linear,
    /// `d_h x 6`, applied to `loc_i ++ loc_j`.
    pub edge_ffn: Linear,
    /// `d_h x 3 d_h`, applied to `h_i ++ e_ij ++ h_j` after each layer.
    pub edge_update: Linear,
    pub layers: Vec<LayerParams>,
}

impl OcgcnParams {
    pub fn zeros(config: OcgcnConfig) -> Self {
        let d = config.d_hidden;
        OcgcnParams {
            config,
            pose_tables: vec![vec![0.0; config.bins * d]; POSE_SCALARS],
            node_ffn: Linear::zeros(d, config.d_vis + d),
            edge_ffn: Linear::zeros(d, 6),
            edge_update: Linear::zeros(d, 3 * d),
            layers: (0..config.layers)
                .map(|_| LayerParams {
                    aggregate: Linear::zeros(d, 4 * d),
                    attention: vec![0.0; 2 * d],
                })
                .collect(),
        }
    }

    /// Seeded initialization; every block is uniform in `±1/sqrt(fan_in)`.
    pub fn init(seed: u64, config: OcgcnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_hidden;
        let table_bound = init_bound(POSE_SCALARS);
        Ok(OcgcnParams {
            config,
            pose_tables: (0..POSE_SCALARS)
                .map(|_| uniform_vec(&mut rng, config.bins * d, table_bound))
                .collect(),
            node_ffn: Linear::init(&mut rng, d, config.d_vis + d),
            edge_ffn: Linear::init(&mut rng, d, 6),
            edge_update: Linear::init(&mut rng, d, 3 * d),
            layers: (0..config.layers)
                .map(|_| LayerParams {
                    aggregate: Linear::init(&mut rng, d, 4 * d),
                    attention: uniform_vec(&mut rng, 2 * d, init_bound(2 * d)),
                })
                .collect(),
        })
    }

    /// Named parameter blocks with their shapes, in a fixed order.
    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let d = self.config.d_hidden;
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        for (k, t) in self.pose_tables.iter().enumerate() {
            out.push((format!("pose_table.{k}"), vec![self.config.bins, d], t));
        }
        push_linear(&mut out, "node_ffn", &self.node_ffn);
        push_linear(&mut out, "edge_ffn", &self.edge_ffn);
        push_linear(&mut out, "edge_update", &self.edge_update);
        for (l, lp) in self.layers.iter().enumerate() {
            push_linear(&mut out, &format!("layer.{l}.aggregate"), &lp.aggregate);
            out.push((format!("layer.{l}.attention"), vec![2 * d], &lp.attention));
        }
        out
    }

    /// Mutable view of the same blocks, in the order of [`Self::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = self.pose_tables.iter_mut().collect();
        for lin in [&mut self.node_ffn, &mut self.edge_ffn, &mut self.edge_update] {
            out.push(&mut lin.weight);
            out.push(&mut lin.bias);
        }
        for lp in &mut self.layers {
            out.push(&mut lp.aggregate.weight);
            out.push(&mut lp.aggregate.bias);
            out.push(&mut lp.attention);
        }
        out
    }
}

pub(crate) fn push_linear<'a>(
    out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
    name: &str,
    lin: &'a Linear,
) {
    out.push((format!("{name}.weight"), vec![lin.out_dim, lin.in_dim], &lin.weight));
    out.push((format!("{name}.bias"), vec![lin.out_dim], &lin.bias));
}

/// Bin index of each pose scalar: orientation over `[-pi, pi)`, size over
/// `(0, 1]` (larger sizes fall in the last bin).
pub fn pose_bins(obj: &Object3D, bins: usize) -> [usize; POSE_SCALARS] {
    let b = bins as f64;
    let clamp = |v: f64| (v.floor().max(0.0) as usize).min(bins - 1);
    let mut out = [0; POSE_SCALARS];
    for k in 0..3 {
        out[k] = clamp((obj.ori[k] + PI) / (2.0 * PI) * b);
        out[3 + k] = clamp((obj.size[k] * b).ceil() - 1.0);
    }
    out
}

/// Node and edge representations at every layer, plus attention weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEncoding {
    pub n: usize,
    pub targets: (usize, usize),
    pub d_hidden: usize,
    /// Directed edges; both `(i, j)` and `(j, i)` appear for each undirected edge.
    pub edges: Vec<(usize, usize)>,
    /// Per node, its neighbours with the id of the directed edge `(i, j)`.
    pub neighbors: Vec<Vec<(usize, usize)>>,
    /// `node_reps[l][i]` for layers `0..=L`.
    pub node_reps: Vec<Vec<Vec<f64>>>,
    /// `edge_reps[l][e]` for layers `0..=L`.
    pub edge_reps: Vec<Vec<Vec<f64>>>,
    /// `attention[l - 1]` is the row-major `n x n` matrix of layer `l`.
    pub attention: Vec<Vec<f64>>,
    /// Target summary computed from the final node representations.
    pub target_summary: Vec<f64>,
    pose_bins: Vec<[usize; POSE_SCALARS]>,
}

impl GraphEncoding {
    pub fn layers(&self) -> usize {
        self.attention.len()
    }

    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        self.neighbors
            .get(i)?
            .iter()
            .find(|(k, _)| *k == j)
            .map(|&(_, e)| e)
    }

    pub fn final_node(&self, i: usize) -> &[f64] {
        &self.node_reps[self.layers()][i]
    }

    pub fn final_edge(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.edge_id(i, j)
            .map(|e| self.edge_reps[self.layers()][e].as_slice())
    }
}

/// Attention row `gamma_{i, .}` of a layer in `1..=L`.
pub fn attention_row(encoding: &GraphEncoding, layer: usize, i: usize) -> Result<Vec<f64>> {
    if layer < 1 || layer > encoding.layers() {
        return Err(Error::validation(
            "layer",
            format!("must lie in 1..={}, got {layer}", encoding.layers()),
        ));
    }
    if i >= encoding.n {
        return Err(Error::validation("node", format!("index {i} out of range")));
    }
    let n = encoding.n;
    Ok(encoding.attention[layer - 1][i * n..(i + 1) * n].to_vec())
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

fn check_inputs(graph: &SpatialSceneGraph, scene: &Scene, params: &OcgcnParams) -> Result<()> {
    if graph.node_count() != scene.len() {
        return Err(Error::validation("graph", "node count differs from scene"));
    }
    if graph.targets() != scene.targets {
        return Err(Error::validation("graph", "targets differ from scene"));
    }
    if scene.vis_dim() != params.config.d_vis {
        return Err(Error::validation(
            "objects[0].vis",
            format!(
                "expected {} entries to match parameters, found {}",
                params.config.d_vis,
                scene.vis_dim()
            ),
        ));
    }
    Ok(())
}

pub fn encode_graph(
    graph: &SpatialSceneGraph,
    scene: &Scene,
    params: &OcgcnParams,
) -> Result<GraphEncoding> {
    check_inputs(graph, scene, params)?;
    let n = scene.len();
    let d = params.config.d_hidden;
    let (o1, o2) = scene.targets;

    let mut edges = Vec::new();
    let mut neighbors = vec![Vec::new(); n];
    for (i, nb) in neighbors.iter_mut().enumerate() {
        for j in graph.neighbors(i) {
            nb.push((j, edges.len()));
            edges.push((i, j));
        }
    }

    let pose_bins: Vec<_> = scene
        .objects
        .iter()
        .map(|o| pose_bins(o, params.config.bins))
        .collect();
    let h0: Vec<Vec<f64>> = scene
        .objects
        .iter()
        .zip(&pose_bins)
        .map(|(obj, bins)| {
            let mut pose = vec![0.0; d];
            for (k, &b) in bins.iter().enumerate() {
                add_into(&params.pose_tables[k][b * d..(b + 1) * d], &mut pose);
            }
            let mut h = params.node_ffn.forward(&concat(&[&obj.vis, &pose]));
            tanh_in_place(&mut h);
            h
        })
        .collect();
    let e0: Vec<Vec<f64>> = edges
        .iter()
        .map(|&(i, j)| {
            let q = concat(&[&scene.objects[i].loc, &scene.objects[j].loc]);
            let mut e = params.edge_ffn.forward(&q);
            tanh_in_place(&mut e);
            e
        })
        .collect();

    let mut node_reps = vec![h0];
    let mut edge_reps = vec![e0];
    let mut attention = Vec::with_capacity(params.layers.len());

    for lp in &params.layers {
        let h = node_reps.last().unwrap();
        let e = edge_reps.last().unwrap();
        let summary = concat(&[&h[o1], &h[o2]]);
        let mut att = vec![0.0; n * n];
        let mut h_next = Vec::with_capacity(n);
        for i in 0..n {
            let nb = &neighbors[i];
            if nb.is_empty() {
                h_next.push(node_reps[0][i].clone());
                continue;
            }
            let (gamma, xbar) = attend(lp, d, h, e, &summary, nb);
            for (&(j, _), g) in nb.iter().zip(&gamma) {
                att[i * n + j] = *g;
            }
            let mut hi = lp.aggregate.forward(&xbar);
            tanh_in_place(&mut hi);
            h_next.push(hi);
        }
        let e_next: Vec<Vec<f64>> = edges
            .iter()
            .enumerate()
            .map(|(id, &(i, j))| {
                let mut out = params
                    .edge_update
                    .forward(&concat(&[&h_next[i], &e[id], &h_next[j]]));
                tanh_in_place(&mut out);
                out
            })
            .collect();
        node_reps.push(h_next);
        edge_reps.push(e_next);
        attention.push(att);
    }

    let last = node_reps.last().unwrap();
    let target_summary = concat(&[&last[o1], &last[o2]]);
    Ok(GraphEncoding {
        n,
        targets: scene.targets,
        d_hidden: d,
        edges,
        neighbors,
        node_reps,
        edge_reps,
        attention,
        target_summary,
        pose_bins,
    })
}

/// Attention weights over `nb` and the weighted mean of the messages.
fn attend(
    lp: &LayerParams,
    d: usize,
    h: &[Vec<f64>],
    e: &[Vec<f64>],
    summary: &[f64],
    nb: &[(usize, usize)],
) -> (Vec<f64>, Vec<f64>) {
    let w = &lp.attention;
    let logits: Vec<f64> = nb
        .iter()
        .map(|&(j, id)| dot(&w[..d], &h[j]) + dot(&w[d..], &e[id]))
        .collect();
    let gamma = softmax(&logits);
    let mut xbar = vec![0.0; 4 * d];
    for (&(j, id), &g) in nb.iter().zip(&gamma) {
        axpy(g, &h[j], &mut xbar[..d]);
        axpy(g, &e[id], &mut xbar[d..2 * d]);
    }
    xbar[2 * d..].copy_from_slice(summary);
    (gamma, xbar)
}

/// Reverse pass through [`encode_graph`]. Accumulates into `grads` the
/// gradient of a scalar whose partial derivatives with respect to the final
/// node and edge representations are `grad_nodes` and `grad_edges`.
pub fn backward(
    params: &OcgcnParams,
    scene: &Scene,
    enc: &GraphEncoding,
    grad_nodes: Option<&[Vec<f64>]>,
    grad_edges: &[Vec<f64>],
    grads: &mut OcgcnParams,
) {
    let n = enc.n;
    let d = enc.d_hidden;
    let (o1, o2) = enc.targets;
    let mut g_h: Vec<Vec<f64>> = match grad_nodes {
        Some(g) => g.to_vec(),
        None => vec![vec![0.0; d]; n],
    };
    let mut g_e: Vec<Vec<f64>> = grad_edges.to_vec();
    let mut g_h0_passthrough = vec![vec![0.0; d]; n];

    for l in (1..=enc.layers()).rev() {
        let lp = &params.layers[l - 1];
        let glp = &mut grads.layers[l - 1];
        let h_prev = &enc.node_reps[l - 1];
        let e_prev = &enc.edge_reps[l - 1];
        let h_new = &enc.node_reps[l];
        let e_new = &enc.edge_reps[l];

        let mut g_e_prev = vec![vec![0.0; d]; enc.edges.len()];
        for (id, &(i, j)) in enc.edges.iter().enumerate() {
            let g_pre = tanh_backward(&e_new[id], &g_e[id]);
            let y = concat(&[&h_new[i], &e_prev[id], &h_new[j]]);
            let gy = params.edge_update.backward(&y, &g_pre, &mut grads.edge_update);
            add_into(&gy[..d], &mut g_h[i]);
            add_into(&gy[d..2 * d], &mut g_e_prev[id]);
            add_into(&gy[2 * d..], &mut g_h[j]);
        }

        let summary = concat(&[&h_prev[o1], &h_prev[o2]]);
        let mut g_h_prev = vec![vec![0.0; d]; n];
        let mut g_summary = vec![0.0; 2 * d];
        for i in 0..n {
            let nb = &enc.neighbors[i];
            if nb.is_empty() {
                add_into(&g_h[i], &mut g_h0_passthrough[i]);
                continue;
            }
            let gamma: Vec<f64> = nb.iter().map(|&(j, _)| enc.attention[l - 1][i * n + j]).collect();
            let mut xbar = vec![0.0; 4 * d];
            for (&(j, id), &g) in nb.iter().zip(&gamma) {
                axpy(g, &h_prev[j], &mut xbar[..d]);
                axpy(g, &e_prev[id], &mut xbar[d..2 * d]);
            }
            xbar[2 * d..].copy_from_slice(&summary);

            let g_agg = tanh_backward(&h_new[i], &g_h[i]);
            let g_xbar = lp.aggregate.backward(&xbar, &g_agg, &mut glp.aggregate);

            // Every message carries the same summary block and the weights sum
            // to one, so the summary gradient passes straight through.
            add_into(&g_xbar[2 * d..], &mut g_summary);
            let g_gamma: Vec<f64> = nb
                .iter()
                .map(|&(j, id)| dot(&g_xbar[..d], &h_prev[j]) + dot(&g_xbar[d..2 * d], &e_prev[id]))
                .collect();
            let g_logits = softmax_backward(&gamma, &g_gamma);
            for ((&(j, id), &g), &gz) in nb.iter().zip(&gamma).zip(&g_logits) {
                axpy(gz, &h_prev[j], &mut glp.attention[..d]);
                axpy(gz, &e_prev[id], &mut glp.attention[d..]);
                let gh = &mut g_h_prev[j];
                axpy(g, &g_xbar[..d], gh);
                axpy(gz, &lp.attention[..d], gh);
                let ge = &mut g_e_prev[id];
                axpy(g, &g_xbar[d..2 * d], ge);
                axpy(gz, &lp.attention[d..], ge);
            }
        }
        add_into(&g_summary[..d], &mut g_h_prev[o1]);
        add_into(&g_summary[d..], &mut g_h_prev[o2]);
        g_h = g_h_prev;
        g_e = g_e_prev;
    }

    for (g, extra) in g_h.iter_mut().zip(&g_h0_passthrough) {
        add_into(extra, g);
    }
    let h0 = &enc.node_reps[0];
    for (i, obj) in scene.objects.iter().enumerate() {
        if g_h[i].iter().all(|&v| v == 0.0) {
            continue;
        }
        let bins = enc.pose_bins[i];
        let mut pose = vec![0.0; d];
        for (k, &b) in bins.iter().enumerate() {
            add_into(&params.pose_tables[k][b * d..(b + 1) * d], &mut pose);
        }
        let g_pre = tanh_backward(&h0[i], &g_h[i]);
        let gx = params
            .node_ffn
            .backward(&concat(&[&obj.vis, &pose]), &g_pre, &mut grads.node_ffn);
        let g_pose = &gx[params.config.d_vis..];
        for (k, &b) in bins.iter().enumerate() {
            add_into(g_pose, &mut grads.pose_tables[k][b * d..(b + 1) * d]);
        }
    }
    let e0 = &enc.edge_reps[0];
    for (id, &(i, j)) in enc.edges.iter().enumerate() {
        let g_pre = tanh_backward(&e0[id], &g_e[id]);
        let q = concat(&[&scene.objects[i].loc, &scene.objects[j].loc]);
        params.edge_ffn.backward(&q, &g_pre, &mut grads.edge_ffn);
    }
}

//! Connecting-strength loss, gradient checking and a small AdamW training
//! loop over the encoder and scorer.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::model::{Forward, Model};
use crate::ocgcn::{backward, OcgcnConfig};
use crate::sampler::{score_backward, EdgeScores, SCORE_FLOOR};
use crate::scene::{Object3D, Scene, TAG_VOCABULARY};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-6,
            epochs: 30,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate", "must be non-negative"));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::validation("weight_decay", "must be non-negative"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::validation(name, "must lie in (0, 1)"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(Error::validation("adam_eps", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be positive"));
        }
        Ok(())
    }
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Indices of the tags that occur in the description as whole words,
/// ignoring case. Multi-word tags must match consecutive words.
pub fn extract_gt_objects(description: &str, tags: &[String]) -> BTreeSet<usize> {
    let desc = words(description);
    tags.iter()
        .enumerate()
        .filter(|(_, tag)| {
            let t = words(tag);
            !t.is_empty() && desc.windows(t.len()).any(|w| w == t.as_slice())
        })
        .map(|(i, _)| i)
        .collect()
}

/// `-sum_{i in O_g} (log a_{t1,i} + log a_{t2,i})`, skipping absent edges.
pub fn loss_connect(scores: &EdgeScores, gt: &BTreeSet<usize>) -> f64 {
    loss_connect_with_grad(scores, gt).0
}

/// Loss value and its gradient with respect to each target group's scores.
pub fn loss_connect_with_grad(scores: &EdgeScores, gt: &BTreeSet<usize>) -> (f64, [Vec<f64>; 2]) {
    let mut loss = 0.0;
    let mut grads = [
        vec![0.0; scores.groups[0].scores.len()],
        vec![0.0; scores.groups[1].scores.len()],
    ];
    for &i in gt {
        for (group, g) in scores.groups.iter().zip(grads.iter_mut()) {
            if let Some(p) = group.neighbors.iter().position(|&k| k == i) {
                let a = group.scores[p];
                loss -= a.max(SCORE_FLOOR).ln();
                if a > SCORE_FLOOR {
                    g[p] -= 1.0 / a;
                }
            }
        }
    }
    (loss, grads)
}

/// A scalar objective over model parameters with an analytic gradient.
pub trait DifferentiableLoss {
    fn value(&self, model: &Model) -> Result<f64>;
    fn value_and_grad(&self, model: &Model) -> Result<(f64, Model)>;
}

/// Objective that ignores the parameters.
pub struct ConstantLoss(pub f64);

impl DifferentiableLoss for ConstantLoss {
    fn value(&self, _: &Model) -> Result<f64> {
        Ok(self.0)
    }

    fn value_and_grad(&self, model: &Model) -> Result<(f64, Model)> {
        Ok((self.0, Model::zeros(model.config())))
    }
}

/// Connecting-strength loss of one scene.
pub struct ConnectLoss<'a> {
    pub scene: &'a Scene,
    pub gt: BTreeSet<usize>,
    pub graph: GraphConfig,
}

impl<'a> ConnectLoss<'a> {
    /// Ground-truth objects come from the scene description.
    pub fn from_description(scene: &'a Scene, graph: GraphConfig) -> Self {
        let tags: Vec<String> = scene.objects.iter().map(|o| o.tag.clone()).collect();
        let gt = scene
            .description
            .as_deref()
            .map(|d| extract_gt_objects(d, &tags))
            .unwrap_or_default();
        ConnectLoss { scene, gt, graph }
    }
}

/// Adds the gradient of the connecting loss for one forward pass into `grads`.
pub fn connect_loss_backward(model: &Model, scene: &Scene, fwd: &Forward, gt: &BTreeSet<usize>, grads: &mut Model) -> f64 {
    let (loss, g_scores) = loss_connect_with_grad(&fwd.scores, gt);
    let g_edges = score_backward(&fwd.encoding, &model.scorer, &fwd.scores, &g_scores, &mut grads.scorer);
    backward(&model.encoder, scene, &fwd.encoding, None, &g_edges, &mut grads.encoder);
    loss
}

impl DifferentiableLoss for ConnectLoss<'_> {
    fn value(&self, model: &Model) -> Result<f64> {
        let fwd = model.forward(self.scene, &self.graph)?;
        Ok(loss_connect(&fwd.scores, &self.gt))
    }

    fn value_and_grad(&self, model: &Model) -> Result<(f64, Model)> {
        let fwd = model.forward(self.scene, &self.graph)?;
        let mut grads = Model::zeros(model.config());
        let loss = connect_loss_backward(model, self.scene, &fwd, &self.gt, &mut grads);
        Ok((loss, grads))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// Largest `|g_fd - g_an| / max(|g_fd|, |g_an|, floor * max(1, |f|))`.
    pub max_rel_error: f64,
    /// Largest `|g_fd - g_an|`.
    pub max_abs_error: f64,
    /// Largest relative error with the denominator floored only at 1e-12.
    pub max_raw_rel_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub parameters: usize,
}

/// Compares the analytic gradient with central differences
/// `(f(p + eps) - f(p - eps)) / 2 eps` for every parameter.
///
/// Roundoff in the difference is about `1e-16 |f| / eps` in absolute terms,
/// so small gradients cannot be resolved to a fixed relative precision. The
/// denominator is therefore bounded below by `floor * max(1, |f|)`.
pub fn finite_diff_check(model: &Model, loss: &dyn DifferentiableLoss, eps: f64, floor: f64) -> Result<GradCheckReport> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::validation("eps", "must be positive"));
    }
    if floor.is_nan() || floor < 0.0 {
        return Err(Error::validation("floor", "must be non-negative"));
    }
    let (value, analytic) = loss.value_and_grad(model)?;
    let floor = floor * value.abs().max(1.0);
    let names: Vec<String> = model.blocks().into_iter().map(|b| b.0).collect();
    let analytic_flat: Vec<Vec<f64>> = analytic.blocks().into_iter().map(|b| b.2.to_vec()).collect();
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        max_raw_rel_error: 0.0,
        worst_block: String::new(),
        worst_index: 0,
        parameters: 0,
    };
    for (b, (name, analytic_block)) in names.iter().zip(&analytic_flat).enumerate() {
        for (k, &an) in analytic_block.iter().enumerate() {
            let orig = probe.blocks_mut()[b][k];
            probe.blocks_mut()[b][k] = orig + eps;
            let up = loss.value(&probe)?;
            probe.blocks_mut()[b][k] = orig - eps;
            let down = loss.value(&probe)?;
            probe.blocks_mut()[b][k] = orig;
            let fd = (up - down) / (2.0 * eps);
            if !fd.is_finite() || !an.is_finite() {
                return Err(Error::Numerical(format!("non-finite gradient at {name}[{k}]")));
            }
            let diff = (fd - an).abs();
            let scale = fd.abs().max(an.abs());
            let rel = diff / scale.max(floor).max(1e-12);
            report.parameters += 1;
            report.max_abs_error = report.max_abs_error.max(diff);
            report.max_raw_rel_error = report.max_raw_rel_error.max(diff / scale.max(1e-12));
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_block = name.clone();
                report.worst_index = k;
            }
        }
    }
    Ok(report)
}

/// AdamW moments, one buffer per parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(model: &Model) -> Self {
        let zeros: Vec<Vec<f64>> = model.blocks().iter().map(|b| vec![0.0; b.2.len()]).collect();
        AdamW {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    /// Decoupled weight decay followed by the bias-corrected Adam update.
    pub fn update(&mut self, model: &mut Model, grads: &Model, config: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - config.adam_beta1.powi(t);
        let c2 = 1.0 - config.adam_beta2.powi(t);
        let lr = config.learning_rate;
        let g_blocks = grads.blocks();
        for (((p, (_, _, g)), m), v) in model
            .blocks_mut()
            .into_iter()
            .zip(g_blocks)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for k in 0..p.len() {
                m[k] = config.adam_beta1 * m[k] + (1.0 - config.adam_beta1) * g[k];
                v[k] = config.adam_beta2 * v[k] + (1.0 - config.adam_beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * config.weight_decay * p[k];
                p[k] -= lr * m_hat / (v_hat.sqrt() + config.adam_eps);
            }
        }
    }
}

/// A scene with its ground-truth object set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub scene: Scene,
    pub gt: BTreeSet<usize>,
}

impl TrainExample {
    pub fn from_scene(scene: Scene) -> Self {
        let tags: Vec<String> = scene.objects.iter().map(|o| o.tag.clone()).collect();
        let gt = scene
            .description
            .as_deref()
            .map(|d| extract_gt_objects(d, &tags))
            .unwrap_or_default();
        TrainExample { scene, gt }
    }
}

/// One optimization step on the summed batch loss. Returns the loss before
/// the update.
pub fn train_step(
    model: &mut Model,
    batch: &[TrainExample],
    config: &TrainConfig,
    graph: &GraphConfig,
    state: &mut AdamW,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("batch", "must not be empty"));
    }
    let mut grads = Model::zeros(model.config());
    let mut total = 0.0;
    for ex in batch {
        let fwd = model.forward(&ex.scene, graph)?;
        total += connect_loss_backward(model, &ex.scene, &fwd, &ex.gt, &mut grads);
    }
    if !total.is_finite() {
        return Err(Error::Numerical(format!("loss is {total}")));
    }
    if grads.blocks().iter().any(|b| b.2.iter().any(|v| !v.is_finite())) {
        return Err(Error::Numerical("gradient is not finite".into()));
    }
    state.update(model, &grads, config);
    Ok(total)
}

/// Fraction of (scene, target) pairs whose highest-scored incident edge leads
/// to a ground-truth object.
pub fn argmax_accuracy(model: &Model, examples: &[TrainExample], graph: &GraphConfig) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for ex in examples {
        if ex.gt.is_empty() {
            continue;
        }
        let fwd = model.forward(&ex.scene, graph)?;
        for group in &fwd.scores.groups {
            let best = group
                .scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(k, _)| group.neighbors[k]);
            total += 1;
            if best.is_some_and(|b| ex.gt.contains(&b)) {
                hits += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}

/// Amplitude of the feature signature carried by the planted object.
const SIGNATURE: f64 = 2.0;

/// Synthetic scenes where exactly one non-target object is relevant: it alone
/// carries a fixed feature signature and it alone is named in the
/// description. Every object is confident, so all are linked to the targets.
pub fn planted_dataset(seed: u64, scenes: usize, objects: usize, d_vis: usize) -> Result<Vec<TrainExample>> {
    if !(3..=TAG_VOCABULARY.len().min(crate::scene::MAX_OBJECTS)).contains(&objects) {
        return Err(Error::validation("objects", "must lie in 3..=36"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(scenes);
    for _ in 0..scenes {
        let mut tags: Vec<&str> = TAG_VOCABULARY.to_vec();
        tags.shuffle(&mut rng);
        let mut order: Vec<usize> = (0..objects).collect();
        order.shuffle(&mut rng);
        let (o1, o2, planted) = (order[0], order[1], order[2]);
        let objs: Vec<Object3D> = (0..objects)
            .map(|i| Object3D {
                tag: tags[i].to_string(),
                confidence: rng.gen_range(0.75..=1.0),
                loc: [rng.gen(), rng.gen(), rng.gen()],
                size: [rng.gen_range(0.05..=1.0), rng.gen_range(0.05..=1.0), rng.gen_range(0.05..=1.0)],
                ori: [
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                ],
                vis: (0..d_vis)
                    .map(|k| {
                        if i == planted {
                            SIGNATURE * if k % 2 == 0 { 1.0 } else { -1.0 } + rng.gen_range(-0.1..0.1)
                        } else {
                            rng.gen_range(-1.0..1.0)
                        }
                    })
                    .collect(),
            })
            .collect();
        let scene = Scene {
            description: Some(format!("there is a {} close by", tags[planted])),
            objects: objs,
            targets: (o1, o2),
        };
        scene.validate()?;
        out.push(TrainExample::from_scene(scene));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub initial_accuracy: f64,
    pub final_accuracy: f64,
}

/// Mean loss per scene over the whole set.
pub fn dataset_loss(model: &Model, examples: &[TrainExample], graph: &GraphConfig) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += loss_connect(&model.forward(&ex.scene, graph)?.scores, &ex.gt);
    }
    Ok(total / examples.len().max(1) as f64)
}

/// Runs `steps` AdamW steps over consecutive batches of `examples`, cycling
/// through the set in order.
pub fn train_loop(
    model: &mut Model,
    examples: &[TrainExample],
    steps: usize,
    config: &TrainConfig,
    graph: &GraphConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::validation("examples", "must not be empty"));
    }
    let initial_loss = dataset_loss(model, examples, graph)?;
    let initial_accuracy = argmax_accuracy(model, examples, graph)?;
    let mut state = AdamW::new(model);
    let mut losses = Vec::with_capacity(steps);
    let b = config.batch_size.min(examples.len());
    for step in 0..steps {
        let start = (step * b) % examples.len();
        let batch: Vec<TrainExample> = (0..b)
            .map(|k| examples[(start + k) % examples.len()].clone())
            .collect();
        losses.push(train_step(model, &batch, config, graph, &mut state)?);
    }
    Ok(TrainReport {
        losses,
        initial_loss,
        final_loss: dataset_loss(model, examples, graph)?,
        initial_accuracy,
        final_accuracy: argmax_accuracy(model, examples, graph)?,
    })
}

/// Encoder dimensions used by the toy training run.
pub fn toy_config(d_vis: usize) -> OcgcnConfig {
    OcgcnConfig {
        d_vis,
        d_hidden: 16,
        layers: 3,
        bins: 16,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::EdgeScores;
    use crate::graph::SpatialSceneGraph;

    fn tags(t: &[&str]) -> Vec<String> {
        t.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ground_truth_by_whole_word() {
        let t = tags(&["books", "chair", "door"]);
        assert_eq!(
            extract_gt_objects("the books are behind the chair", &t),
            BTreeSet::from([0, 1])
        );
        assert!(extract_gt_objects("", &t).is_empty());
        assert!(extract_gt_objects("the chairs are red", &tags(&["chair"])).is_empty());
        assert_eq!(
            extract_gt_objects("A Coffee Table, by the sofa.", &tags(&["coffee table", "sofa", "table"])),
            BTreeSet::from([0, 1, 2])
        );
    }

    fn full(n: usize) -> SpatialSceneGraph {
        let mut adj = vec![true; n * n];
        for i in 0..n {
            adj[i * n + i] = false;
        }
        SpatialSceneGraph::from_adjacency(n, adj, (0, 1)).unwrap()
    }

    #[test]
    fn loss_edge_cases() {
        let g = full(3);
        let s = EdgeScores::from_logits(&g, |_, _| 0.0);
        assert_eq!(loss_connect(&s, &BTreeSet::new()), 0.0);
        let g2 = full(2);
        let s2 = EdgeScores::from_logits(&g2, |_, _| 1.0);
        // both a_{0,1} and a_{1,0} are 1; node 0 has no self edge
        assert_eq!(loss_connect(&s2, &BTreeSet::from([0, 1])), 0.0);
        let l = loss_connect(&s, &BTreeSet::from([2]));
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let m = Model::init(1, toy_config(8)).unwrap();
        let r = finite_diff_check(&m, &ConstantLoss(3.5), 1e-6, 0.0).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.parameters, m.parameter_count());
        assert!(finite_diff_check(&m, &ConstantLoss(1.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let data = planted_dataset(1, 4, 5, 8).unwrap();
        let mut m = Model::init(2, toy_config(8)).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let mut st = AdamW::new(&m);
        let loss = train_step(&mut m, &data, &cfg, &GraphConfig::default(), &mut st).unwrap();
        assert!(loss > 0.0);
        assert_eq!(m, before);
        assert!(train_step(&mut m, &[], &cfg, &GraphConfig::default(), &mut st).is_err());
    }

    #[test]
    fn planted_examples_name_one_object() {
        for ex in planted_dataset(3, 20, 6, 8).unwrap() {
            assert_eq!(ex.gt.len(), 1);
            let g = *ex.gt.iter().next().unwrap();
            assert!(!ex.scene.is_target(g));
        }
    }
}

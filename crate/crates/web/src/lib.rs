//! Browser bindings for the demo page. Each export takes plain values or a
//! scene as JSON and returns JSON text; the `*_json` functions hold the logic
//! so they can be tested natively.

use serde_json::json;
use wasm_bindgen::prelude::*;

use go3d_core::direction::{map_direction as map3, map_direction_2d, DirectionRuleSet};
use go3d_core::graph::{build_graph, GraphConfig, NearComparator};
use go3d_core::model::Model;
use go3d_core::ocgcn::OcgcnConfig;
use go3d_core::prompt::{build_prompt, triplets_from_subgraph};
use go3d_core::sampler::select_subgraphs_topk;
use go3d_core::scene::{parse_scene, synth_scene};

type Out = std::result::Result<String, String>;

fn graph_config(distance: f64, confidence: f64, near_lt: bool) -> Result<GraphConfig, String> {
    let c = GraphConfig {
        distance,
        confidence,
        near: if near_lt { NearComparator::Less } else { NearComparator::Greater },
    };
    c.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

pub fn random_scene_json(seed: u64, objects: usize) -> Out {
    synth_scene(seed, objects).map(|s| s.to_json()).map_err(|e| e.to_string())
}

pub fn map_direction_json(subject: &[f64], object: &[f64], tau: f64) -> Out {
    let rules = DirectionRuleSet::with_tau(tau).map_err(|e| e.to_string())?;
    let term = match (subject, object) {
        (&[a, b, c], &[x, y, z]) => map3(&[a, b, c], &[x, y, z], &rules),
        (&[a, b], &[x, y]) => map_direction_2d(&[a, b], &[x, y], &rules),
        _ => return Err("subject and object need the same length, 2 or 3".into()),
    }
    .map_err(|e| e.to_string())?;
    Ok(json!({ "term": term.canonical() }).to_string())
}

pub fn scene_graph_json(scene: &str, distance: f64, confidence: f64, near_lt: bool) -> Out {
    let scene = parse_scene(scene.as_bytes()).map_err(|e| e.to_string())?;
    let g = build_graph(&scene, &graph_config(distance, confidence, near_lt)?);
    let nodes: Vec<_> = scene
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| json!({"tag": o.tag, "loc": o.loc, "confidence": o.confidence, "target": scene.is_target(i)}))
        .collect();
    let edges: Vec<_> = g
        .edges()
        .into_iter()
        .map(|(i, j)| json!([i, j, format!("{:?}", g.classify_edge(i, j).expect("listed edge"))]))
        .collect();
    Ok(json!({ "nodes": nodes, "edges": edges }).to_string())
}

/// Scores the scene with an untrained model drawn from `seed` and returns the
/// top-k subgraphs with their prompts.
pub fn prompts_json(scene: &str, seed: u64, k: usize, p_cut: f64) -> Out {
    let scene = parse_scene(scene.as_bytes()).map_err(|e| e.to_string())?;
    let config = OcgcnConfig {
        d_vis: scene.vis_dim(),
        d_hidden: 16,
        layers: 3,
        bins: 16,
    };
    let model = Model::init(seed, config).map_err(|e| e.to_string())?;
    let f = model.forward(&scene, &GraphConfig::default()).map_err(|e| e.to_string())?;
    let subs = select_subgraphs_topk(&f.graph, &f.scores, k, p_cut).map_err(|e| e.to_string())?;
    let rules = DirectionRuleSet::default();
    let (t1, t2) = scene.targets;
    let mut rows = Vec::new();
    for sub in &subs {
        let trips = triplets_from_subgraph(&scene, sub, &rules).map_err(|e| e.to_string())?;
        let p = build_prompt(&scene.objects[t1].tag, &scene.objects[t2].tag, &trips);
        rows.push(json!({"kind": sub.kind.label(), "score": sub.score, "edges": sub.edges, "prompt": p.assembled}));
    }
    Ok(json!(rows).to_string())
}

fn js(r: Out) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = randomScene)]
pub fn random_scene(seed: u32, objects: usize) -> Result<String, JsError> {
    js(random_scene_json(seed as u64, objects))
}

#[wasm_bindgen(js_name = mapDirection)]
pub fn map_direction(subject: Vec<f64>, object: Vec<f64>, tau: f64) -> Result<String, JsError> {
    js(map_direction_json(&subject, &object, tau))
}

#[wasm_bindgen(js_name = sceneGraph)]
pub fn scene_graph(scene: &str, distance: f64, confidence: f64, near_lt: bool) -> Result<String, JsError> {
    js(scene_graph_json(scene, distance, confidence, near_lt))
}

#[wasm_bindgen]
pub fn prompts(scene: &str, seed: u32, k: usize, p_cut: f64) -> Result<String, JsError> {
    js(prompts_json(scene, seed as u64, k, p_cut))
}

use go3d_web::{map_direction_json, prompts_json, random_scene_json, scene_graph_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn direction_terms() {
    let v = parse(&map_direction_json(&[0.9, 0.1, 0.5], &[0.1, 0.5, 0.5], 0.2).unwrap());
    assert_eq!(v["term"], "front down");
    let v = parse(&map_direction_json(&[0.1, 0.9], &[0.5, 0.5], 0.2).unwrap());
    assert_eq!(v["term"], "up left");
    assert!(map_direction_json(&[0.1, 0.9], &[0.5, 0.5, 0.5], 0.2).is_err());
    assert!(map_direction_json(&[0.1; 3], &[0.5; 3], 0.7).is_err());
}

#[test]
fn graph_of_random_scene() {
    let scene = random_scene_json(4, 8).unwrap();
    let v = parse(&scene_graph_json(&scene, 0.2, 0.7, false).unwrap());
    assert_eq!(v["nodes"].as_array().unwrap().len(), 8);
    let targets = v["nodes"].as_array().unwrap().iter().filter(|n| n["target"] == true).count();
    assert_eq!(targets, 2);
    assert!(v["edges"].as_array().unwrap().iter().any(|e| e[2] == "TargetPair"));
    assert!(scene_graph_json(&scene, -1.0, 0.7, false).is_err());
    assert!(scene_graph_json("{}", 0.2, 0.7, false).is_err());
}

#[test]
fn prompts_are_ranked_and_well_formed() {
    let scene = random_scene_json(7, 9).unwrap();
    let rows = parse(&prompts_json(&scene, 1, 4, 0.05).unwrap());
    let rows = rows.as_array().unwrap();
    assert!(!rows.is_empty() && rows.len() <= 4);
    let scores: Vec<f64> = rows.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    for r in rows {
        let p = r["prompt"].as_str().unwrap();
        assert!(p.starts_with("<TGT> ") && p.contains("<SEP>"));
    }
    assert_eq!(prompts_json(&scene, 1, 4, 0.05), prompts_json(&scene, 1, 4, 0.05));
}

//! Scene model: detected 3D objects, the two target indices, validation and
//! the JSON scene file format.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of objects in one scene.
pub const MAX_OBJECTS: usize = 36;

/// RoI feature width of the full-size configuration.
pub const DEFAULT_VIS_DIM: usize = 2048;

/// Feature width used by [`synth_scene`].
pub const SYNTH_VIS_DIM: usize = 8;

/// Tag vocabulary for synthetic scenes.
pub const TAG_VOCABULARY: &[&str] = &[
    "table", "sofa", "chair", "bed", "lamp", "desk", "shelf", "books", "door", "window", "cabinet",
    "pillow", "blanket", "floor", "rug", "plant", "vase", "clock", "mirror", "picture", "tv",
    "counter", "sink", "toilet", "bathtub", "towel", "cup", "bottle", "laptop", "monitor",
    "keyboard", "bag", "box", "curtain", "dresser", "stool", "bench", "fridge", "oven", "fan",
];

/// One detected object with its 3D attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Object3D {
    pub tag: String,
    /// Detector score mapped to a probability.
    pub confidence: f64,
    /// Relative centroid, each component in [0, 1] once normalized.
    pub loc: [f64; 3],
    /// Length, width, height.
    pub size: [f64; 3],
    /// Rotation angles in [-pi, pi).
    pub ori: [f64; 3],
    pub vis: Vec<f64>,
}

/// A validated scene: objects plus the ordered target pair (subject, object).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub objects: Vec<Object3D>,
    pub targets: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Scene {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn vis_dim(&self) -> usize {
        self.objects.first().map_or(0, |o| o.vis.len())
    }

    pub fn is_target(&self, i: usize) -> bool {
        i == self.targets.0 || i == self.targets.1
    }

    /// Checks every scene and object invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.objects.len();
        if n == 0 {
            return Err(Error::validation("objects", "scene has no objects"));
        }
        if n > MAX_OBJECTS {
            return Err(Error::validation(
                "objects",
                format!("{n} objects exceeds N_max={MAX_OBJECTS}"),
            ));
        }
        let (a, b) = self.targets;
        if a == b {
            return Err(Error::validation("targets", "targets must be distinct"));
        }
        for (k, t) in [a, b].into_iter().enumerate() {
            if t >= n {
                return Err(Error::validation(
                    format!("targets[{k}]"),
                    format!("index {t} out of range for {n} objects"),
                ));
            }
        }
        let d_vis = self.vis_dim();
        for (i, o) in self.objects.iter().enumerate() {
            let at = |field: &str| format!("objects[{i}].{field}");
            if !(0.0..=1.0).contains(&o.confidence) {
                return Err(Error::validation(at("confidence"), "must lie in [0, 1]"));
            }
            if let Some(k) = o.loc.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::validation(
                    format!("{}[{k}]", at("loc")),
                    "must lie in [0, 1]",
                ));
            }
            if let Some(k) = o.size.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::validation(
                    format!("{}[{k}]", at("size")),
                    "must be strictly positive",
                ));
            }
            if let Some(k) = o.ori.iter().position(|v| !(-PI..PI).contains(v)) {
                return Err(Error::validation(
                    format!("{}[{k}]", at("ori")),
                    "must lie in [-pi, pi)",
                ));
            }
            if o.vis.len() != d_vis {
                return Err(Error::validation(
                    at("vis"),
                    format!("expected {d_vis} entries, found {}", o.vis.len()),
                ));
            }
            if o.vis.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(at("vis"), "entries must be finite"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let raw = RawScene::from(self);
        serde_json::to_string_pretty(&raw).expect("scene serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct RawObject {
    tag: String,
    confidence: f64,
    loc: Vec<f64>,
    size: Vec<f64>,
    ori: Vec<f64>,
    vis: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawScene {
    objects: Vec<RawObject>,
    targets: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
}

impl From<&Scene> for RawScene {
    fn from(scene: &Scene) -> Self {
        RawScene {
            objects: scene
                .objects
                .iter()
                .map(|o| RawObject {
                    tag: o.tag.clone(),
                    confidence: o.confidence,
                    loc: o.loc.to_vec(),
                    size: o.size.to_vec(),
                    ori: o.ori.to_vec(),
                    vis: o.vis.clone(),
                })
                .collect(),
            targets: vec![scene.targets.0, scene.targets.1],
            description: scene.description.clone(),
        }
    }
}

fn triple(path: String, v: &[f64]) -> Result<[f64; 3]> {
    <[f64; 3]>::try_from(v)
        .map_err(|_| Error::validation(path, format!("expected 3 entries, found {}", v.len())))
}

/// Parses and validates a scene document. Centroids outside [0, 1] are
/// rescaled with [`normalize_coords`].
pub fn parse_scene(bytes: &[u8]) -> Result<Scene> {
    let raw: RawScene = serde_json::from_slice(bytes)?;
    if raw.targets.len() != 2 {
        return Err(Error::validation(
            "targets",
            format!("expected 2 indices, found {}", raw.targets.len()),
        ));
    }
    let mut objects = Vec::with_capacity(raw.objects.len());
    for (i, o) in raw.objects.into_iter().enumerate() {
        objects.push(Object3D {
            loc: triple(format!("objects[{i}].loc"), &o.loc)?,
            size: triple(format!("objects[{i}].size"), &o.size)?,
            ori: triple(format!("objects[{i}].ori"), &o.ori)?,
            tag: o.tag,
            confidence: o.confidence,
            vis: o.vis,
        });
    }
    if let Some((i, _)) = objects
        .iter()
        .enumerate()
        .find(|(_, o)| o.loc.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::validation(format!("objects[{i}].loc"), "must be finite"));
    }
    let scene = normalize_coords(Scene {
        objects,
        targets: (raw.targets[0], raw.targets[1]),
        description: raw.description,
    });
    scene.validate()?;
    Ok(scene)
}

/// Per-axis min-max rescaling of centroids into [0, 1].
///
/// Scenes already inside the unit cube are returned unchanged. An axis on
/// which every object shares one coordinate maps to 0.5.
pub fn normalize_coords(mut scene: Scene) -> Scene {
    let inside = scene
        .objects
        .iter()
        .all(|o| o.loc.iter().all(|v| (0.0..=1.0).contains(v)));
    if inside || scene.objects.is_empty() {
        return scene;
    }
    for axis in 0..3 {
        let (lo, hi) = scene
            .objects
            .iter()
            .map(|o| o.loc[axis])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        for o in &mut scene.objects {
            o.loc[axis] = if span > 0.0 {
                ((o.loc[axis] - lo) / span).clamp(0.0, 1.0)
            } else {
                0.5
            };
        }
    }
    scene
}

/// Deterministic random scene with [`SYNTH_VIS_DIM`]-wide features.
pub fn synth_scene(seed: u64, n_objects: usize) -> Result<Scene> {
    synth_scene_with_dim(seed, n_objects, SYNTH_VIS_DIM)
}

pub fn synth_scene_with_dim(seed: u64, n_objects: usize, d_vis: usize) -> Result<Scene> {
    if !(2..=MAX_OBJECTS).contains(&n_objects) {
        return Err(Error::validation(
            "n_objects",
            format!("must lie in 2..={MAX_OBJECTS}, got {n_objects}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = (0..n_objects)
        .map(|_| Object3D {
            tag: TAG_VOCABULARY[rng.gen_range(0..TAG_VOCABULARY.len())].to_string(),
            confidence: rng.gen::<f64>(),
            loc: [rng.gen(), rng.gen(), rng.gen()],
            size: [
                1.0 - rng.gen::<f64>(),
                1.0 - rng.gen::<f64>(),
                1.0 - rng.gen::<f64>(),
            ],
            ori: [
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
                rng.gen_range(-PI..PI),
            ],
            vis: (0..d_vis).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let picked = sample(&mut rng, n_objects, 2);
    Ok(Scene {
        objects,
        targets: (picked.index(0), picked.index(1)),
        description: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(n: usize, targets: &str) -> String {
        let objs: Vec<String> = (0..n)
            .map(|i| {
                format!(
                    r#"{{"tag":"t{i}","confidence":0.9,"loc":[0.1,0.2,0.3],"size":[1,1,1],"ori":[0,0,0],"vis":[1,2]}}"#
                )
            })
            .collect();
        format!(r#"{{"objects":[{}],"targets":{targets}}}"#, objs.join(","))
    }

    #[test]
    fn parses_minimal_scene() {
        let s = parse_scene(doc(2, "[0,1]").as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.targets, (0, 1));
        assert_eq!(s.vis_dim(), 2);
    }

    #[test]
    fn rejects_equal_targets() {
        let err = parse_scene(doc(4, "[3,3]").as_bytes()).unwrap_err();
        assert!(err.to_string().contains("targets must be distinct"), "{err}");
    }

    #[test]
    fn rejects_too_many_objects() {
        let err = parse_scene(doc(37, "[0,1]").as_bytes()).unwrap_err();
        assert!(err.to_string().contains("exceeds N_max=36"), "{err}");
    }

    #[test]
    fn rejects_bad_fields_with_path() {
        let bad = doc(2, "[0,1]").replacen("\"vis\":[1,2]", "\"vis\":[1]", 1);
        let err = parse_scene(bad.as_bytes()).unwrap_err();
        // the first object fixes the scene's feature width
        assert!(err.to_string().starts_with("objects[1].vis"), "{err}");

        let bad = doc(2, "[0,1]").replacen("\"size\":[1,1,1]", "\"size\":[1,1]", 1);
        let err = parse_scene(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("objects[0].size"), "{err}");

        let bad = doc(2, "[0,1]").replacen("\"size\":[1,1,1]", "\"size\":[1,0,1]", 1);
        let err = parse_scene(bad.as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("objects[0].size[1]"), "{err}");

        let err = parse_scene(doc(2, "[0]").as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("targets"), "{err}");

        let err = parse_scene(doc(2, "[0,5]").as_bytes()).unwrap_err();
        assert!(err.to_string().starts_with("targets[1]"), "{err}");

        assert!(matches!(parse_scene(b"{not json"), Err(Error::Parse(_))));
    }

    fn with_locs(locs: &[[f64; 3]]) -> Scene {
        let mut s = synth_scene(0, locs.len().max(2)).unwrap();
        s.objects.truncate(locs.len());
        for (o, l) in s.objects.iter_mut().zip(locs) {
            o.loc = *l;
        }
        s
    }

    #[test]
    fn normalize_keeps_unit_cube() {
        let s = with_locs(&[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]);
        assert_eq!(normalize_coords(s.clone()), s);
    }

    #[test]
    fn normalize_min_max_with_degenerate_axis() {
        let s = normalize_coords(with_locs(&[[2.0, 0.0, 0.0], [6.0, 0.0, 4.0]]));
        assert_eq!(s.objects[0].loc, [0.0, 0.5, 0.0]);
        assert_eq!(s.objects[1].loc, [1.0, 0.5, 1.0]);
    }

    #[test]
    fn synth_is_deterministic_and_seed_sensitive() {
        assert_eq!(synth_scene(7, 5).unwrap(), synth_scene(7, 5).unwrap());
        assert_ne!(synth_scene(7, 5).unwrap(), synth_scene(8, 5).unwrap());
        let s = synth_scene(1, 2).unwrap();
        assert!(s.is_target(0) && s.is_target(1));
        assert!(synth_scene(1, 1).is_err());
        assert!(synth_scene(1, 37).is_err());
        for seed in 0..50 {
            synth_scene(seed, 36).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn scene_json_round_trip() {
        let mut s = synth_scene(11, 6).unwrap();
        s.description = Some("the lamp is on the desk".into());
        let back = parse_scene(s.to_json().as_bytes()).unwrap();
        assert_eq!(back, s);
    }
}

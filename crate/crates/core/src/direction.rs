//! Rule-based mapping from a pair of centroids to a spatial direction term.
//!
//! Axes follow the x-toward, y-up, z-right convention. Each axis whose
//! centroid difference exceeds `tau` contributes one word; the dominant axis
//! picks the family and the others refine it. Composed terms are spelled
//! depth, then vertical, then lateral ("front up right"); any other word
//! order is accepted as an alias.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::Scene;

pub const DEFAULT_TAU: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Axis {
    /// Toward the viewer: front/back.
    Depth,
    /// up/down.
    Vertical,
    /// right/left.
    Lateral,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Depth, Axis::Vertical, Axis::Lateral];

    fn index(self) -> usize {
        self as usize
    }

    fn word(self, positive: bool) -> &'static str {
        match (self, positive) {
            (Axis::Depth, true) => "front",
            (Axis::Depth, false) => "back",
            (Axis::Vertical, true) => "up",
            (Axis::Vertical, false) => "down",
            (Axis::Lateral, true) => "right",
            (Axis::Lateral, false) => "left",
        }
    }

    fn from_word(word: &str) -> Option<(Axis, bool)> {
        Some(match word {
            "front" => (Axis::Depth, true),
            "back" => (Axis::Depth, false),
            "up" => (Axis::Vertical, true),
            "down" => (Axis::Vertical, false),
            "right" => (Axis::Lateral, true),
            "left" => (Axis::Lateral, false),
            _ => return None,
        })
    }
}

/// One of the 27 canonical terms: a sign (or nothing) per axis. All three
/// empty is "next to".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DirectionTerm {
    /// `Some(true)` for the positive word of the axis (front, up, right).
    pub signs: [Option<bool>; 3],
}

impl DirectionTerm {
    pub const NEXT_TO: DirectionTerm = DirectionTerm { signs: [None; 3] };

    pub fn is_next_to(&self) -> bool {
        self.signs.iter().all(Option::is_none)
    }

    pub fn sign(&self, axis: Axis) -> Option<bool> {
        self.signs[axis.index()]
    }

    /// The term seen from the other object: every component flipped.
    pub fn reversed(&self) -> DirectionTerm {
        DirectionTerm {
            signs: self.signs.map(|s| s.map(|p| !p)),
        }
    }

    pub fn canonical(&self) -> String {
        if self.is_next_to() {
            return "next to".to_string();
        }
        Axis::ALL
            .iter()
            .filter_map(|&a| self.sign(a).map(|p| a.word(p)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Every accepted spelling: all orderings of the component words.
    pub fn aliases(&self) -> Vec<String> {
        if self.is_next_to() {
            return vec!["next to".to_string()];
        }
        let words: Vec<&str> = Axis::ALL
            .iter()
            .filter_map(|&a| self.sign(a).map(|p| a.word(p)))
            .collect();
        let mut out = Vec::new();
        permute(&words, &mut Vec::new(), &mut vec![false; words.len()], &mut out);
        out
    }

    /// Normalizes any alias (case and extra whitespace ignored) to its term.
    pub fn parse(text: &str) -> Option<DirectionTerm> {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower.split_whitespace().collect();
        if words == ["next", "to"] {
            return Some(DirectionTerm::NEXT_TO);
        }
        if words.is_empty() {
            return None;
        }
        let mut signs = [None; 3];
        for w in words {
            let (axis, positive) = Axis::from_word(w)?;
            if signs[axis.index()].replace(positive).is_some() {
                return None;
            }
        }
        Some(DirectionTerm { signs })
    }

    /// All 27 canonical terms.
    pub fn all() -> Vec<DirectionTerm> {
        let opts = [None, Some(true), Some(false)];
        let mut out = Vec::with_capacity(27);
        for a in opts {
            for b in opts {
                for c in opts {
                    out.push(DirectionTerm { signs: [a, b, c] });
                }
            }
        }
        out
    }
}

fn permute(words: &[&str], cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<String>) {
    if cur.len() == words.len() {
        out.push(cur.iter().map(|&k| words[k]).collect::<Vec<_>>().join(" "));
        return;
    }
    for k in 0..words.len() {
        if !used[k] {
            used[k] = true;
            cur.push(k);
            permute(words, cur, used, out);
            cur.pop();
            used[k] = false;
        }
    }
}

impl fmt::Display for DirectionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionRuleSet {
    /// Closeness threshold; a difference equal to `tau` does not count.
    pub tau: f64,
    /// Axis precedence for exact ties when choosing the dominant axis.
    pub priority: [Axis; 3],
}

impl Default for DirectionRuleSet {
    fn default() -> Self {
        DirectionRuleSet {
            tau: DEFAULT_TAU,
            priority: Axis::ALL,
        }
    }
}

impl DirectionRuleSet {
    pub fn with_tau(tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau < 0.5) {
            return Err(Error::validation("tau", "must lie in (0, 0.5)"));
        }
        Ok(DirectionRuleSet {
            tau,
            ..DirectionRuleSet::default()
        })
    }
}

fn check_unit(name: &str, v: &[f64]) -> Result<()> {
    if let Some(k) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::validation(
            format!("{name}[{k}]"),
            "must lie in [0, 1]",
        ));
    }
    Ok(())
}

/// Dominant axis of a subject/object pair, or `None` when every difference
/// is within `tau`.
pub fn dominant_axis(loc_s: &[f64; 3], loc_o: &[f64; 3], rules: &DirectionRuleSet) -> Option<Axis> {
    let delta = |a: Axis| (loc_s[a.index()] - loc_o[a.index()]).abs();
    let mut best: Option<Axis> = None;
    for &axis in &rules.priority {
        let d = delta(axis);
        if d > rules.tau && best.is_none_or(|b| d > delta(b)) {
            best = Some(axis);
        }
    }
    best
}

/// Direction term for the subject at `loc_s` relative to the object at `loc_o`.
pub fn map_direction(loc_s: &[f64; 3], loc_o: &[f64; 3], rules: &DirectionRuleSet) -> Result<DirectionTerm> {
    check_unit("loc_s", loc_s)?;
    check_unit("loc_o", loc_o)?;
    let Some(family) = dominant_axis(loc_s, loc_o, rules) else {
        return Ok(DirectionTerm::NEXT_TO);
    };
    let mut signs = [None; 3];
    signs[family.index()] = Some(loc_s[family.index()] > loc_o[family.index()]);
    for axis in Axis::ALL {
        if axis == family {
            continue;
        }
        let k = axis.index();
        if (loc_s[k] - loc_o[k]).abs() > rules.tau {
            signs[k] = Some(loc_s[k] > loc_o[k]);
        }
    }
    Ok(DirectionTerm { signs })
}

/// 2D fallback: centres are `(horizontal, vertical)` with vertical pointing
/// up. Depth is fixed at 0, so only up/down/left/right terms arise.
pub fn map_direction_2d(center_s: &[f64; 2], center_o: &[f64; 2], rules: &DirectionRuleSet) -> Result<DirectionTerm> {
    check_unit("center_s", center_s)?;
    check_unit("center_o", center_o)?;
    let lift = |c: &[f64; 2]| [0.0, c[1], c[0]];
    map_direction(&lift(center_s), &lift(center_o), rules)
}

/// Relation triplet as written in annotations: `(subject tag, relation, object tag)`.
pub type TagTriplet = (String, String, String);

/// Finds the scene object for a tag, preferring the targets.
fn resolve_tag(scene: &Scene, tag: &str) -> Option<usize> {
    let (o1, o2) = scene.targets;
    let eq = |i: usize| scene.objects[i].tag.eq_ignore_ascii_case(tag);
    [o1, o2]
        .into_iter()
        .find(|&i| eq(i))
        .or_else(|| (0..scene.len()).find(|&i| eq(i)))
}

/// Pseudo pre-training pairs: input `<OBJ> tag1 <REL> mapped <OBJ> tag2`,
/// output `tag1, rel, tag2` where `rel` is the annotated relation, replaced
/// by a random synonym with probability one half.
pub fn gen_pseudo_pairs(
    scene: &Scene,
    triplets: &[TagTriplet],
    synonyms: &BTreeMap<String, Vec<String>>,
    rules: &DirectionRuleSet,
    seed: u64,
) -> Result<Vec<(String, String)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(triplets.len());
    for (k, (subject, relation, object)) in triplets.iter().enumerate() {
        let find = |tag: &str, field: &str| {
            resolve_tag(scene, tag).ok_or_else(|| {
                Error::validation(format!("triplets[{k}].{field}"), format!("unknown tag {tag:?}"))
            })
        };
        let s = find(subject, "subject")?;
        let o = find(object, "object")?;
        let mapped = map_direction(&scene.objects[s].loc, &scene.objects[o].loc, rules)?;
        let mut rel = relation.as_str();
        let replace = rng.gen_bool(0.5);
        if let Some(list) = synonyms.get(relation).filter(|l| !l.is_empty()) {
            let pick = rng.gen_range(0..list.len());
            if replace {
                rel = &list[pick];
            }
        }
        out.push((
            format!("<OBJ> {subject} <REL> {mapped} <OBJ> {object}"),
            format!("{subject}, {rel}, {object}"),
        ));
    }
    Ok(out)
}

/// Synonym table keyed by relation, loaded from JSON (`{"near": ["close to"]}`).
pub fn parse_synonyms(bytes: &[u8]) -> Result<BTreeMap<String, Vec<String>>> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Triplets from JSON: an array of `[subject, relation, object]` arrays.
pub fn parse_triplets(bytes: &[u8]) -> Result<Vec<TagTriplet>> {
    Ok(serde_json::from_slice(bytes)?)
}

/// Canonical term for every alias spelling.
pub fn alias_table() -> HashMap<String, DirectionTerm> {
    let mut out = HashMap::new();
    for t in DirectionTerm::all() {
        for a in t.aliases() {
            out.insert(a, t);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::synth_scene;

    fn term(s: [f64; 3], o: [f64; 3]) -> String {
        map_direction(&s, &o, &DirectionRuleSet::default()).unwrap().canonical()
    }

    #[test]
    fn rule_table_rows() {
        assert_eq!(term([0.5, 0.5, 0.5], [0.1, 0.5, 0.5]), "front");
        assert_eq!(term([0.5; 3], [0.5; 3]), "next to");
        assert_eq!(term([0.5, 0.9, 0.5], [0.5, 0.1, 0.5]), "up");
        assert_eq!(term([0.9, 0.8, 0.5], [0.1, 0.3, 0.5]), "front up");
        assert_eq!(term([0.9, 0.1, 0.5], [0.1, 0.6, 0.5]), "front down");
        assert_eq!(term([0.9, 0.5, 0.9], [0.1, 0.5, 0.4]), "front right");
        assert_eq!(term([0.9, 0.5, 0.1], [0.1, 0.5, 0.4]), "front left");
        assert_eq!(term([0.9, 0.9, 0.9], [0.0, 0.3, 0.3]), "front up right");
        assert_eq!(term([0.9, 0.1, 0.1], [0.0, 0.6, 0.6]), "front down left");
        assert_eq!(term([0.1, 0.5, 0.5], [0.9, 0.5, 0.5]), "back");
        assert_eq!(term([0.5, 0.1, 0.5], [0.5, 0.9, 0.5]), "down");
        assert_eq!(term([0.5, 0.5, 0.9], [0.5, 0.5, 0.1]), "right");
        assert_eq!(term([0.5, 0.5, 0.1], [0.5, 0.5, 0.9]), "left");
        // Up family refined by the depth axis uses the same canonical spelling.
        assert_eq!(term([0.8, 1.0, 0.5], [0.5, 0.0, 0.5]), "front up");
    }

    #[test]
    fn boundary_is_not_exceeding() {
        let r = DirectionRuleSet::with_tau(0.25).unwrap();
        let t = map_direction(&[0.5, 0.5, 0.5], &[0.25, 0.5, 0.5], &r).unwrap();
        assert!(t.is_next_to());
        let t = map_direction(&[0.5, 0.5, 0.5], &[0.25, 0.5, 0.75], &r).unwrap();
        assert!(t.is_next_to());
        let t = map_direction(&[0.5, 0.5, 0.5], &[0.25, 0.5, 0.8], &r).unwrap();
        assert_eq!(t.canonical(), "left");
    }

    #[test]
    fn ties_follow_axis_priority() {
        let r = DirectionRuleSet::default();
        assert_eq!(dominant_axis(&[0.9, 0.9, 0.5], &[0.1, 0.1, 0.5], &r), Some(Axis::Depth));
        assert_eq!(dominant_axis(&[0.5, 0.9, 0.9], &[0.5, 0.1, 0.1], &r), Some(Axis::Vertical));
        assert_eq!(dominant_axis(&[0.5, 0.5, 0.5], &[0.5, 0.5, 0.5], &r), None);
    }

    #[test]
    fn rejects_out_of_range() {
        let r = DirectionRuleSet::default();
        assert!(map_direction(&[1.1, 0.0, 0.0], &[0.0; 3], &r).is_err());
        assert!(map_direction(&[0.0; 3], &[0.0, -0.1, 0.0], &r).is_err());
        assert!(DirectionRuleSet::with_tau(0.5).is_err());
        assert!(DirectionRuleSet::with_tau(0.0).is_err());
        assert!(DirectionRuleSet::with_tau(0.3).is_ok());
    }

    #[test]
    fn twenty_seven_terms_with_disjoint_aliases() {
        let all = DirectionTerm::all();
        assert_eq!(all.len(), 27);
        let table = alias_table();
        let alias_count: usize = all.iter().map(|t| t.aliases().len()).sum();
        assert_eq!(table.len(), alias_count);
        for t in &all {
            for a in t.aliases() {
                assert_eq!(DirectionTerm::parse(&a), Some(*t));
            }
        }
        assert_eq!(
            DirectionTerm::parse("left up front"),
            DirectionTerm::parse("up left front")
        );
        assert_eq!(DirectionTerm::parse("Up  Left FRONT").unwrap().canonical(), "front up left");
        assert_eq!(DirectionTerm::parse("up up"), None);
        assert_eq!(DirectionTerm::parse("near"), None);
    }

    #[test]
    fn two_d_fallback() {
        let r = DirectionRuleSet::default();
        assert!(map_direction_2d(&[0.3, 0.3], &[0.3, 0.3], &r).unwrap().is_next_to());
        assert_eq!(map_direction_2d(&[0.9, 0.5], &[0.1, 0.5], &r).unwrap().canonical(), "right");
        assert_eq!(map_direction_2d(&[0.5, 0.9], &[0.5, 0.1], &r).unwrap().canonical(), "up");
        for i in 0..=10 {
            for j in 0..=10 {
                let t = map_direction_2d(&[i as f64 / 10.0, j as f64 / 10.0], &[0.5, 0.2], &r).unwrap();
                assert_eq!(t.sign(Axis::Depth), None);
            }
        }
    }

    fn pseudo_scene() -> Scene {
        let mut s = synth_scene(4, 3).unwrap();
        s.targets = (0, 1);
        s.objects[0].tag = "table".into();
        s.objects[1].tag = "sofa".into();
        s.objects[2].tag = "lamp".into();
        s.objects[0].loc = [0.5, 0.5, 0.5];
        s.objects[1].loc = [0.55, 0.5, 0.45];
        s.objects[2].loc = [0.5, 0.9, 0.5];
        s
    }

    #[test]
    fn pseudo_pair_format() {
        let s = pseudo_scene();
        let trip = vec![("table".to_string(), "near".to_string(), "sofa".to_string())];
        let out = gen_pseudo_pairs(&s, &trip, &BTreeMap::new(), &DirectionRuleSet::default(), 3).unwrap();
        assert_eq!(
            out,
            vec![(
                "<OBJ> table <REL> next to <OBJ> sofa".to_string(),
                "table, near, sofa".to_string()
            )]
        );
        let bad = vec![("table".to_string(), "near".to_string(), "piano".to_string())];
        assert!(gen_pseudo_pairs(&s, &bad, &BTreeMap::new(), &DirectionRuleSet::default(), 3).is_err());
    }

    #[test]
    fn pseudo_pairs_deterministic_with_synonyms() {
        let s = pseudo_scene();
        let trip: Vec<TagTriplet> = (0..64)
            .map(|_| ("lamp".to_string(), "above".to_string(), "table".to_string()))
            .collect();
        let syn: BTreeMap<String, Vec<String>> =
            [("above".to_string(), vec!["over".to_string(), "on top of".to_string()])].into();
        let r = DirectionRuleSet::default();
        let a = gen_pseudo_pairs(&s, &trip, &syn, &r, 9).unwrap();
        assert_eq!(a, gen_pseudo_pairs(&s, &trip, &syn, &r, 9).unwrap());
        assert!(a.iter().all(|(i, _)| i == "<OBJ> lamp <REL> up <OBJ> table"));
        let replaced = a.iter().filter(|(_, o)| o != "lamp, above, table").count();
        assert!(replaced > 16 && replaced < 48, "{replaced}");
        assert!(a.iter().all(|(_, o)| ["lamp, above, table", "lamp, over, table", "lamp, on top of, table"].contains(&o.as_str())));
    }
}

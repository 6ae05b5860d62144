//! Target and spatial-relation prompt texts.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::direction::{map_direction, DirectionRuleSet, DirectionTerm};
use crate::error::{Error, Result};
use crate::sampler::Subgraph;
use crate::scene::Scene;

pub const TGT: &str = "<TGT>";
pub const OBJ: &str = "<OBJ>";
pub const REL: &str = "<REL>";
pub const SEP: &str = "<SEP>";

const SPECIAL: [&str; 4] = [TGT, OBJ, REL, SEP];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RelationTriplet {
    pub subject_tag: String,
    pub relation: String,
    pub object_tag: String,
}

impl RelationTriplet {
    pub fn new(subject: &str, relation: &str, object: &str) -> Self {
        RelationTriplet {
            subject_tag: subject.to_string(),
            relation: relation.to_string(),
            object_tag: object.to_string(),
        }
    }

    /// The relation as a canonical direction term, if it is one.
    pub fn direction(&self) -> Option<DirectionTerm> {
        DirectionTerm::parse(&self.relation)
    }

    fn line(&self) -> String {
        format!(
            "{OBJ} {} {REL} {} {OBJ} {}",
            self.subject_tag, self.relation, self.object_tag
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptText {
    pub target_part: String,
    pub relation_part: String,
    pub assembled: String,
}

/// One triplet per subgraph edge: the target pair first, then the subject
/// side, then the object side. A target is always the triplet subject.
pub fn triplets_from_subgraph(scene: &Scene, sub: &Subgraph, rules: &DirectionRuleSet) -> Result<Vec<RelationTriplet>> {
    let (o1, o2) = scene.targets;
    let mut ordered: Vec<(usize, usize)> = Vec::with_capacity(sub.edges.len());
    ordered.push((o1, o2));
    if let Some(n) = sub.attached(o1, o2) {
        ordered.push((o1, n));
    }
    if let Some(n) = sub.attached(o2, o1) {
        ordered.push((o2, n));
    }
    for &(i, j) in &sub.edges {
        let covered = ordered.iter().any(|&(a, b)| (a.min(b), a.max(b)) == (i, j));
        if !covered {
            // Not produced by the sampler, but keep every edge: lower index leads.
            ordered.push((i, j));
        }
    }
    ordered
        .into_iter()
        .map(|(s, o)| {
            if s >= scene.len() || o >= scene.len() {
                return Err(Error::validation("subgraph", "node outside scene"));
            }
            let (a, b) = (&scene.objects[s], &scene.objects[o]);
            let rel = map_direction(&a.loc, &b.loc, rules)?;
            Ok(RelationTriplet::new(&a.tag, &rel.canonical(), &b.tag))
        })
        .collect()
}

/// Replaces canonical relations with the first synonym listed for them.
pub fn substitute_relations(triplets: &mut [RelationTriplet], synonyms: &BTreeMap<String, Vec<String>>) {
    for t in triplets {
        if let Some(first) = synonyms.get(&t.relation).and_then(|l| l.first()) {
            t.relation = first.clone();
        }
    }
}

pub fn build_prompt(tag_1: &str, tag_2: &str, triplets: &[RelationTriplet]) -> PromptText {
    let target_part = format!("{TGT} {tag_1} {TGT} {tag_2}");
    let relation_part = triplets
        .iter()
        .map(RelationTriplet::line)
        .collect::<Vec<_>>()
        .join("\n");
    let assembled = if relation_part.is_empty() {
        format!("{target_part} {SEP}")
    } else {
        format!("{target_part} {SEP} {relation_part}")
    };
    PromptText {
        target_part,
        relation_part,
        assembled,
    }
}

fn bad(msg: &str) -> Error {
    Error::validation("prompt", msg)
}

fn field(text: &str) -> Result<String> {
    let t = text.trim();
    if t.is_empty() || SPECIAL.iter().any(|s| t.contains(s)) {
        return Err(bad("empty field or stray special token"));
    }
    Ok(t.to_string())
}

/// Inverse of [`build_prompt`]: recovers both target tags and the triplets.
pub fn parse_prompt(assembled: &str) -> Result<(String, String, Vec<RelationTriplet>)> {
    let (target_part, relation_part) = match assembled.split_once(&format!(" {SEP}")) {
        Some((t, rest)) => (t, rest.strip_prefix(' ').unwrap_or(rest)),
        None => return Err(bad("missing separator")),
    };
    let rest = target_part
        .strip_prefix(&format!("{TGT} "))
        .ok_or_else(|| bad("missing target token"))?;
    let (tag_1, tag_2) = rest
        .split_once(&format!(" {TGT} "))
        .ok_or_else(|| bad("missing second target token"))?;
    let mut triplets = Vec::new();
    if !relation_part.is_empty() {
        for line in relation_part.split('\n') {
            let rest = line
                .strip_prefix(&format!("{OBJ} "))
                .ok_or_else(|| bad("relation line must start with <OBJ>"))?;
            let (subject, rest) = rest
                .split_once(&format!(" {REL} "))
                .ok_or_else(|| bad("missing <REL>"))?;
            let (relation, object) = rest
                .split_once(&format!(" {OBJ} "))
                .ok_or_else(|| bad("missing object <OBJ>"))?;
            triplets.push(RelationTriplet::new(&field(subject)?, &field(relation)?, &field(object)?));
        }
    }
    Ok((field(tag_1)?, field(tag_2)?, triplets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::assemble;
    use crate::sampler::EdgeScores;
    use crate::graph::SpatialSceneGraph;
    use crate::scene::synth_scene;

    #[test]
    fn documented_prompt_strings() {
        let p = build_prompt("table", "sofa", &[RelationTriplet::new("table", "near", "sofa")]);
        assert_eq!(p.target_part, "<TGT> table <TGT> sofa");
        assert_eq!(p.relation_part, "<OBJ> table <REL> near <OBJ> sofa");
        assert_eq!(
            p.assembled,
            "<TGT> table <TGT> sofa <SEP> <OBJ> table <REL> near <OBJ> sofa"
        );
    }

    #[test]
    fn empty_relations_trim_separator() {
        let p = build_prompt("a", "b", &[]);
        assert_eq!(p.assembled, "<TGT> a <TGT> b <SEP>");
        assert_eq!(parse_prompt(&p.assembled).unwrap(), ("a".into(), "b".into(), vec![]));
    }

    #[test]
    fn round_trip() {
        let trips = vec![
            RelationTriplet::new("coffee table", "front up", "sofa"),
            RelationTriplet::new("sofa", "left", "bed"),
        ];
        let p = build_prompt("coffee table", "sofa", &trips);
        assert_eq!(p.relation_part.lines().count(), 2);
        assert!(!p.assembled.ends_with(' '));
        let (a, b, back) = parse_prompt(&p.assembled).unwrap();
        assert_eq!((a.as_str(), b.as_str()), ("coffee table", "sofa"));
        assert_eq!(back, trips);
        assert!(parse_prompt("<TGT> a <TGT> b").is_err());
        assert!(parse_prompt("<TGT> a <TGT> b <SEP> <OBJ> x <REL> y").is_err());
    }

    fn scene_and_graph() -> (Scene, SpatialSceneGraph) {
        let mut s = synth_scene(12, 5).unwrap();
        s.targets = (1, 3);
        let locs = [[0.5, 0.5, 0.5], [0.5, 0.5, 0.5], [0.9, 0.5, 0.5], [0.5, 0.5, 0.1], [0.5, 0.9, 0.9]];
        for (o, l) in s.objects.iter_mut().zip(locs) {
            o.loc = l;
        }
        let n = 5;
        let mut adj = vec![true; n * n];
        for i in 0..n {
            adj[i * n + i] = false;
        }
        (s, SpatialSceneGraph::from_adjacency(n, adj, (1, 3)).unwrap())
    }

    #[test]
    fn triplets_follow_edge_order() {
        let (s, g) = scene_and_graph();
        let scores = EdgeScores::from_logits(&g, |_, _| 0.0);
        let rules = DirectionRuleSet::default();
        let two = assemble((1, 3), None, None, &scores);
        let t = triplets_from_subgraph(&s, &two, &rules).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].subject_tag, s.objects[1].tag);
        assert_eq!(t[0].relation, "right");

        let four = assemble((1, 3), Some(0), Some(4), &scores);
        let t = triplets_from_subgraph(&s, &four, &rules).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[1].relation, "next to");
        assert_eq!(t[1].object_tag, s.objects[0].tag);
        assert_eq!(t[2].subject_tag, s.objects[3].tag);
        assert_eq!(t[2].relation, "down left");
    }
}

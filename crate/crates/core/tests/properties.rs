use proptest::prelude::*;

use go3d_core::direction::{map_direction, DirectionRuleSet};
use go3d_core::metrics::{bleu4, mbleu4, tokenize};
use go3d_core::prompt::{build_prompt, parse_prompt, RelationTriplet};
use go3d_core::scene::{normalize_coords, parse_scene, synth_scene};
use go3d_core::train::loss_connect;
use go3d_core::sampler::EdgeScores;
use go3d_core::graph::SpatialSceneGraph;

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["the", "lamp", "bed", "left", "of", "a", "rug", "near", "chair", "up"])
        .prop_map(str::to_string)
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(word(), 1..12).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn scene_json_round_trip(seed in 0u64..10_000, n in 2usize..20) {
        let s = synth_scene(seed, n).unwrap();
        prop_assert_eq!(parse_scene(s.to_json().as_bytes()).unwrap(), s);
    }

    #[test]
    fn normalization_is_idempotent(seed in 0u64..10_000, scale in 1.5f64..50.0, shift in -10.0f64..10.0) {
        let mut s = synth_scene(seed, 8).unwrap();
        for o in &mut s.objects {
            o.loc = o.loc.map(|v| v * scale + shift);
        }
        let once = normalize_coords(s);
        prop_assert_eq!(normalize_coords(once.clone()), once);
    }

    #[test]
    fn directions_flip_when_swapped(s in prop::array::uniform3(0.0f64..=1.0), o in prop::array::uniform3(0.0f64..=1.0)) {
        let rules = DirectionRuleSet::default();
        let ab = map_direction(&s, &o, &rules).unwrap();
        let ba = map_direction(&o, &s, &rules).unwrap();
        prop_assert_eq!(ba, ab.reversed());
    }

    #[test]
    fn directions_ignore_translation(
        s in prop::array::uniform3(0.2f64..=0.6),
        o in prop::array::uniform3(0.2f64..=0.6),
        shift in -0.15f64..0.15,
    ) {
        let rules = DirectionRuleSet::default();
        // stay clear of the threshold so rounding in the shift cannot matter
        prop_assume!((0..3).all(|k| ((s[k] - o[k]).abs() - rules.tau).abs() > 1e-9));
        let t = |v: [f64; 3]| v.map(|x| x + shift);
        prop_assert_eq!(map_direction(&t(s), &t(o), &rules).unwrap(), map_direction(&s, &o, &rules).unwrap());
    }

    #[test]
    fn bleu_in_unit_interval(c in sentence(), r in prop::collection::vec(sentence(), 1..4)) {
        let refs: Vec<&str> = r.iter().map(String::as_str).collect();
        let b = bleu4(&c, &refs).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
    }

    #[test]
    fn bleu_ignores_whitespace_layout(c in sentence(), r in sentence()) {
        let spaced = c.replace(' ', "   \t ");
        prop_assert_eq!(bleu4(&c, &[&r]).unwrap(), bleu4(&spaced, &[&r]).unwrap());
        prop_assert_eq!(tokenize(&spaced), tokenize(&c));
    }

    #[test]
    fn mbleu_ignores_order(mut s in prop::collection::vec(sentence(), 2..6), rot in 0usize..6) {
        let a: Vec<&str> = s.iter().map(String::as_str).collect();
        let before = mbleu4(&a).unwrap();
        let len = s.len();
        s.rotate_left(rot % len);
        let b: Vec<&str> = s.iter().map(String::as_str).collect();
        prop_assert!((mbleu4(&b).unwrap() - before).abs() < 1e-12);
    }

    #[test]
    fn prompts_round_trip(tags in prop::collection::vec(word(), 2..8), rels in prop::collection::vec(0usize..27, 0..4)) {
        let terms = go3d_core::direction::DirectionTerm::all();
        let trips: Vec<RelationTriplet> = rels
            .iter()
            .enumerate()
            .map(|(k, &r)| RelationTriplet::new(&tags[k % tags.len()], &terms[r].canonical(), &tags[(k + 1) % tags.len()]))
            .collect();
        let p = build_prompt(&tags[0], &tags[1], &trips);
        let (a, b, back) = parse_prompt(&p.assembled).unwrap();
        prop_assert_eq!((a, b), (tags[0].clone(), tags[1].clone()));
        prop_assert_eq!(back, trips);
    }

    #[test]
    fn connect_loss_non_negative(logits in prop::collection::vec(-5.0f64..5.0, 36), gt in prop::collection::btree_set(0usize..6, 0..6)) {
        let mut adj = vec![true; 36];
        for i in 0..6 {
            adj[i * 6 + i] = false;
        }
        let g = SpatialSceneGraph::from_adjacency(6, adj, (1, 4)).unwrap();
        let scores = EdgeScores::from_logits(&g, |i, j| logits[i * 6 + j]);
        let l = loss_connect(&scores, &gt);
        prop_assert!(l >= 0.0);
        if gt.is_empty() {
            prop_assert_eq!(l, 0.0);
        }
    }
}

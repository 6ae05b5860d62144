mod settings;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use go3d_core::direction::{
    gen_pseudo_pairs, map_direction, map_direction_2d, parse_synonyms, parse_triplets,
    DirectionRuleSet,
};
use go3d_core::graph::{build_graph, NearComparator};
use go3d_core::metrics::evaluate;
use go3d_core::model::Model;
use go3d_core::ocgcn::OcgcnConfig;
use go3d_core::prompt::{build_prompt, substitute_relations, triplets_from_subgraph};
use go3d_core::sampler::{select_subgraph_train, select_subgraphs_topk};
use go3d_core::scene::{parse_scene, synth_scene_with_dim, Scene};
use go3d_core::train::{
    finite_diff_check, planted_dataset, toy_config, train_loop, ConnectLoss, TrainExample,
};
use go3d_core::{Error, Result};

use settings::Settings;

#[derive(Parser)]
#[command(name = "go3d", version, about = "Spatial scene graphs, subgraph sampling and prompts for 3D scenes")]
struct Cli {
    /// key=value settings file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the result here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Add near-neighbour edges when dist < d instead of dist > d
    #[arg(long, global = true)]
    near_lt: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scene
    Synth {
        #[arg(long, default_value_t = 8)]
        objects: usize,
        #[arg(long, default_value_t = 8)]
        vis_dim: usize,
    },
    /// Build the spatial scene graph of a scene
    BuildGraph { scene: PathBuf },
    /// Run the graph encoder and print final representations and attention
    Encode {
        scene: PathBuf,
        /// Parameter bundle; freshly initialized from the seed when absent
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Select subgraphs around the target pair
    Sample {
        scene: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        p_cut: Option<f64>,
        /// Draw one subgraph with Gumbel noise instead of ranking
        #[arg(long)]
        train: bool,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Direction term of a subject relative to an object (3 or 2 coordinates)
    MapDirection {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        subject: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        object: Vec<f64>,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Pseudo pre-training pairs from annotated triplets
    GenPseudo {
        scene: PathBuf,
        /// JSON array of [subject, relation, object]
        #[arg(long)]
        triplets: PathBuf,
        /// JSON object mapping a relation to its synonyms
        #[arg(long)]
        synonyms: Option<PathBuf>,
    },
    /// Prompts for the top-k subgraphs of a scene
    GenPrompts {
        scene: PathBuf,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        p_cut: Option<f64>,
        /// Replace relations with their first listed synonym
        #[arg(long)]
        synonyms: Option<PathBuf>,
    },
    /// Train encoder and scorer on a planted synthetic set
    TrainToy {
        #[arg(long, default_value_t = 200)]
        scenes: usize,
        #[arg(long, default_value_t = 6)]
        objects: usize,
        #[arg(long)]
        steps: Option<usize>,
        /// Also write the trained parameter bundle here
        #[arg(long)]
        save_params: Option<PathBuf>,
    },
    /// mBLEU-4 (and BLEU-4@K with references) of line-delimited sentences
    EvalDiversity {
        candidates: PathBuf,
        #[arg(long)]
        references: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of the connecting loss
    GradCheck {
        /// Scene with a description naming the ground-truth objects; a random
        /// scene is used when absent
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Write a freshly initialized parameter bundle
    InitParams {
        #[arg(long, default_value_t = 8)]
        vis_dim: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => 2,
                _ => 1,
            })
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::validation(path.display().to_string(), e.to_string()))
}

fn load_scene(path: &Path) -> Result<Scene> {
    parse_scene(&read(path)?).map_err(|e| match e {
        Error::Validation { path: p, message } => Error::validation(format!("{}: {p}", path.display()), message),
        Error::Parse(err) => Error::validation(path.display().to_string(), err.to_string()),
        other => other,
    })
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::validation(p.display().to_string(), e.to_string())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json values serialize")
}

fn load_model(params: Option<&Path>, scene: &Scene, s: &Settings) -> Result<Model> {
    let model = match params {
        Some(p) => Model::from_json(&read(p)?)?,
        None => Model::init(
            s.seed,
            OcgcnConfig {
                d_vis: scene.vis_dim(),
                d_hidden: s.d_hidden.unwrap_or(64),
                layers: s.layers,
                bins: s.bins,
            },
        )?,
    };
    if model.config().d_vis != scene.vis_dim() {
        return Err(Error::validation(
            "params",
            format!("d_vis {} does not match the scene's {}", model.config().d_vis, scene.vis_dim()),
        ));
    }
    Ok(model)
}

fn run(cli: Cli) -> Result<()> {
    let mut s = match &cli.config {
        Some(p) => Settings::from_text(&String::from_utf8_lossy(&read(p)?))?,
        None => Settings::default(),
    };
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if cli.near_lt {
        s.graph.near = NearComparator::Less;
    }
    s.validate()?;
    let out = &cli.out;

    match cli.command {
        Command::Synth { objects, vis_dim } => {
            let scene = synth_scene_with_dim(s.seed, objects, vis_dim)?;
            emit(out, &scene.to_json())
        }
        Command::BuildGraph { scene } => {
            let scene = load_scene(&scene)?;
            let g = build_graph(&scene, &s.graph);
            let edges: Vec<_> = g
                .edges()
                .into_iter()
                .map(|(i, j)| json!([i, j, format!("{:?}", g.classify_edge(i, j).expect("edge exists"))]))
                .collect();
            emit(
                out,
                &pretty(&json!({
                    "nodes": g.node_count(),
                    "targets": [scene.targets.0, scene.targets.1],
                    "edges": edges,
                    "adjacency": g.adjacency_rows(),
                })),
            )
        }
        Command::Encode { scene, params } => {
            let scene = load_scene(&scene)?;
            let model = load_model(params.as_deref(), &scene, &s)?;
            let f = model.forward(&scene, &s.graph)?;
            let layers = f.encoding.layers();
            let n = scene.len();
            let attention: Vec<Vec<Vec<f64>>> = f
                .encoding
                .attention
                .iter()
                .map(|m| m.chunks(n).map(<[f64]>::to_vec).collect())
                .collect();
            emit(
                out,
                &pretty(&json!({
                    "nodes": f.encoding.node_reps[layers],
                    "edges": f.encoding.edges,
                    "edge_reps": f.encoding.edge_reps[layers],
                    "attention": attention,
                    "target_summary": f.encoding.target_summary,
                })),
            )
        }
        Command::Sample {
            scene,
            params,
            k,
            p_cut,
            train,
            temperature,
        } => {
            let scene = load_scene(&scene)?;
            let model = load_model(params.as_deref(), &scene, &s)?;
            let f = model.forward(&scene, &s.graph)?;
            if train {
                let sel = select_subgraph_train(&f.graph, &f.scores, temperature.unwrap_or(s.temperature), s.seed)?;
                return emit(out, &pretty(&serde_json::to_value(&sel).expect("serializable")));
            }
            let subs = select_subgraphs_topk(&f.graph, &f.scores, k.unwrap_or(s.k), p_cut.unwrap_or(s.p_cut))?;
            let rows: Vec<_> = subs
                .iter()
                .map(|g| json!({"kind": g.kind.label(), "score": g.score, "nodes": g.nodes, "edges": g.edges}))
                .collect();
            emit(out, &pretty(&json!(rows)))
        }
        Command::MapDirection { subject, object, tau } => {
            let rules = match tau {
                Some(t) => DirectionRuleSet::with_tau(t)?,
                None => s.rules,
            };
            let term = match (subject.as_slice(), object.as_slice()) {
                (&[a, b, c], &[x, y, z]) => map_direction(&[a, b, c], &[x, y, z], &rules)?,
                (&[a, b], &[x, y]) => map_direction_2d(&[a, b], &[x, y], &rules)?,
                _ => {
                    return Err(Error::validation(
                        "subject/object",
                        "give both as x,y,z or both as horizontal,vertical",
                    ))
                }
            };
            emit(out, &term.canonical())
        }
        Command::GenPseudo {
            scene,
            triplets,
            synonyms,
        } => {
            let scene = load_scene(&scene)?;
            let trips = parse_triplets(&read(&triplets)?)?;
            let syn = match synonyms {
                Some(p) => parse_synonyms(&read(&p)?)?,
                None => Default::default(),
            };
            let pairs = gen_pseudo_pairs(&scene, &trips, &syn, &s.rules, s.seed)?;
            let lines: Vec<String> = pairs
                .iter()
                .map(|(i, o)| json!({"input": i, "output": o}).to_string())
                .collect();
            emit(out, &lines.join("\n"))
        }
        Command::GenPrompts {
            scene,
            params,
            k,
            p_cut,
            synonyms,
        } => {
            let scene = load_scene(&scene)?;
            let model = load_model(params.as_deref(), &scene, &s)?;
            let syn = match synonyms {
                Some(p) => Some(parse_synonyms(&read(&p)?)?),
                None => None,
            };
            let f = model.forward(&scene, &s.graph)?;
            let subs = select_subgraphs_topk(&f.graph, &f.scores, k.unwrap_or(s.k), p_cut.unwrap_or(s.p_cut))?;
            let (t1, t2) = scene.targets;
            let mut lines = Vec::new();
            for sub in &subs {
                let mut trips = triplets_from_subgraph(&scene, sub, &s.rules)?;
                if let Some(syn) = &syn {
                    substitute_relations(&mut trips, syn);
                }
                let p = build_prompt(&scene.objects[t1].tag, &scene.objects[t2].tag, &trips);
                lines.push(json!({"kind": sub.kind.label(), "score": sub.score, "prompt": p.assembled}).to_string());
            }
            emit(out, &lines.join("\n"))
        }
        Command::TrainToy {
            scenes,
            objects,
            steps,
            save_params,
        } => {
            let data = planted_dataset(s.seed, scenes, objects, 8)?;
            let mut config = toy_config(8);
            if let Some(d) = s.d_hidden {
                config.d_hidden = d;
            }
            config.layers = s.layers;
            config.bins = s.bins;
            let mut model = Model::init(s.seed, config)?;
            let r = train_loop(&mut model, &data, steps.unwrap_or(s.steps), &s.train, &s.graph)?;
            if let Some(p) = save_params {
                fs::write(&p, model.to_json()).map_err(|e| Error::validation(p.display().to_string(), e.to_string()))?;
            }
            let every: Vec<_> = r
                .losses
                .iter()
                .enumerate()
                .filter(|(i, _)| i % 50 == 0 || i + 1 == r.losses.len())
                .map(|(i, l)| json!([i, l]))
                .collect();
            emit(
                out,
                &pretty(&json!({
                    "steps": r.losses.len(),
                    "initial_loss": r.initial_loss,
                    "final_loss": r.final_loss,
                    "initial_accuracy": r.initial_accuracy,
                    "final_accuracy": r.final_accuracy,
                    "batch_losses": every,
                })),
            )
        }
        Command::EvalDiversity {
            candidates,
            references,
        } => {
            let lines = |p: &Path| -> Result<Vec<String>> {
                Ok(String::from_utf8_lossy(&read(p)?)
                    .lines()
                    .map(str::trim)
                    .filter(|l| !l.is_empty())
                    .map(String::from)
                    .collect())
            };
            let cands = lines(&candidates)?;
            let refs = match references {
                Some(p) => lines(&p)?,
                None => Vec::new(),
            };
            let c: Vec<&str> = cands.iter().map(String::as_str).collect();
            let r: Vec<&str> = refs.iter().map(String::as_str).collect();
            let mut table = format!("{:<12} {:>8} {:>8}\n", "metric", "value", "samples");
            for m in evaluate(&c, &r)? {
                table.push_str(&format!("{:<12} {:>8.4} {:>8}\n", m.metric, m.value, m.samples));
            }
            emit(out, &table)
        }
        Command::GradCheck { scene, eps, tol } => {
            let (scene, gt) = match scene {
                Some(p) => {
                    let scene = load_scene(&p)?;
                    let gt = TrainExample::from_scene(scene.clone()).gt;
                    (scene, gt)
                }
                None => random_check_scene(s.seed)?,
            };
            let config = OcgcnConfig {
                d_vis: scene.vis_dim(),
                d_hidden: s.d_hidden.unwrap_or(8),
                layers: s.layers,
                bins: s.bins,
            };
            let model = Model::init(s.seed, config)?;
            let loss = ConnectLoss {
                scene: &scene,
                gt,
                graph: s.graph,
            };
            let r = finite_diff_check(&model, &loss, eps, s.grad_floor)?;
            emit(out, &pretty(&serde_json::to_value(&r).expect("serializable")))?;
            if r.max_rel_error >= tol {
                return Err(Error::Numerical(format!(
                    "max relative error {:e} at {}[{}] exceeds {tol:e}",
                    r.max_rel_error, r.worst_block, r.worst_index
                )));
            }
            Ok(())
        }
        Command::InitParams { vis_dim } => {
            let model = Model::init(
                s.seed,
                OcgcnConfig {
                    d_vis: vis_dim,
                    d_hidden: s.d_hidden.unwrap_or(64),
                    layers: s.layers,
                    bins: s.bins,
                },
            )?;
            emit(out, &model.to_json())
        }
    }
}

/// Six confident objects; the first non-target neighbour of each target is
/// the ground truth.
fn random_check_scene(seed: u64) -> Result<(Scene, BTreeSet<usize>)> {
    let mut scene = synth_scene_with_dim(seed, 6, 8)?;
    for o in &mut scene.objects {
        o.confidence = 0.9;
    }
    let g = build_graph(&scene, &Default::default());
    let (a, b) = scene.targets;
    let gt = [a, b]
        .into_iter()
        .filter_map(|t| (0..scene.len()).find(|&i| !scene.is_target(i) && g.has_edge(t, i)))
        .collect();
    Ok((scene, gt))
}

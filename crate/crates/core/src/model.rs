//! Encoder plus edge scorer, with the named-block parameter bundle format.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphConfig, SpatialSceneGraph};
use crate::ocgcn::{encode_graph, GraphEncoding, OcgcnConfig, OcgcnParams};
use crate::sampler::{score_edges, EdgeScorer, EdgeScores};
use crate::scene::Scene;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: OcgcnParams,
    pub scorer: EdgeScorer,
}

/// Everything the forward pass produces for one scene.
#[derive(Debug, Clone)]
pub struct Forward {
    pub graph: SpatialSceneGraph,
    pub encoding: GraphEncoding,
    pub scores: EdgeScores,
}

impl Model {
    pub fn zeros(config: OcgcnConfig) -> Self {
        Model {
            encoder: OcgcnParams::zeros(config),
            scorer: EdgeScorer::zeros(config.d_hidden),
        }
    }

    pub fn init(seed: u64, config: OcgcnConfig) -> Result<Self> {
        let encoder = OcgcnParams::init(seed, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5c0e_5c0e);
        Ok(Model {
            encoder,
            scorer: EdgeScorer::init(&mut rng, config.d_hidden),
        })
    }

    pub fn config(&self) -> OcgcnConfig {
        self.encoder.config
    }

    pub fn forward(&self, scene: &Scene, graph_config: &GraphConfig) -> Result<Forward> {
        let graph = build_graph(scene, graph_config);
        self.forward_graph(scene, graph)
    }

    pub fn forward_graph(&self, scene: &Scene, graph: SpatialSceneGraph) -> Result<Forward> {
        let encoding = encode_graph(&graph, scene, &self.encoder)?;
        let scores = score_edges(&encoding, &self.scorer, &graph);
        Ok(Forward {
            graph,
            encoding,
            scores,
        })
    }

    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = self.encoder.blocks();
        out.extend(self.scorer.blocks());
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = self.encoder.blocks_mut();
        out.extend(self.scorer.blocks_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|b| b.2.len()).sum()
    }

    pub fn to_bundle(&self) -> ParamBundle {
        ParamBundle {
            config: self.config(),
            blocks: self
                .blocks()
                .into_iter()
                .map(|(name, shape, data)| NamedBlock {
                    name,
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_bundle(bundle: &ParamBundle) -> Result<Self> {
        bundle.config.validate()?;
        let mut model = Model::zeros(bundle.config);
        let expected: Vec<(String, Vec<usize>)> = model
            .blocks()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != bundle.blocks.len() {
            return Err(Error::validation(
                "blocks",
                format!("expected {} blocks, found {}", expected.len(), bundle.blocks.len()),
            ));
        }
        let slots = model.blocks_mut();
        for ((slot, (name, shape)), block) in slots.into_iter().zip(expected).zip(&bundle.blocks) {
            let path = format!("blocks.{name}");
            if block.name != name {
                return Err(Error::validation(path, format!("found block {:?}", block.name)));
            }
            if block.shape != shape || block.data.len() != slot.len() {
                return Err(Error::validation(
                    path,
                    format!("shape {:?} does not match expected {:?}", block.shape, shape),
                ));
            }
            if block.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(path, "entries must be finite"));
            }
            slot.copy_from_slice(&block.data);
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_bundle()).expect("bundle serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Model::from_bundle(&serde_json::from_slice(bytes)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// JSON tensor bundle: the encoder configuration plus every named block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBundle {
    pub config: OcgcnConfig,
    pub blocks: Vec<NamedBlock>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> OcgcnConfig {
        OcgcnConfig {
            d_vis: 8,
            d_hidden: 4,
            layers: 2,
            bins: 4,
        }
    }

    #[test]
    fn bundle_round_trip() {
        let m = Model::init(5, cfg()).unwrap();
        let back = Model::from_json(m.to_json().as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bundle_shape_errors_name_the_block() {
        let m = Model::init(5, cfg()).unwrap();
        let mut b = m.to_bundle();
        b.blocks[7].data.pop();
        let err = Model::from_bundle(&b).unwrap_err().to_string();
        assert!(err.starts_with("blocks.node_ffn.bias"), "{err}");
        let mut b = m.to_bundle();
        b.blocks.pop();
        assert!(Model::from_bundle(&b).is_err());
    }
}

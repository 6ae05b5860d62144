//! Spatial scene graphs over detected 3D objects, an object-centric graph
//! encoder, subgraph sampling and prompt construction for spatial
//! description generation.

pub mod config;
pub mod direction;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod ocgcn;
pub mod prompt;
pub mod sampler;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use graph::{build_graph, GraphConfig, NearComparator, SpatialSceneGraph};
pub use model::Model;
pub use scene::{parse_scene, Object3D, Scene};

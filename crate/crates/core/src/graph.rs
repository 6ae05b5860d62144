//! Construction of the target-centred spatial scene graph.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::Scene;

/// How the pairwise centroid distance is compared against the threshold
/// when adding near-neighbour edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum NearComparator {
    /// Edge when `dist > d`.
    #[default]
    Greater,
    /// Edge when `dist < d`.
    Less,
}

impl NearComparator {
    fn admits(self, dist: f64, threshold: f64) -> bool {
        match self {
            NearComparator::Greater => dist > threshold,
            NearComparator::Less => dist < threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GraphConfig {
    /// Centroid distance threshold.
    pub distance: f64,
    /// Confidence below which a non-target object is treated as noise.
    pub confidence: f64,
    pub near: NearComparator,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            distance: 0.2,
            confidence: 0.7,
            near: NearComparator::Greater,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance.is_finite() && self.distance >= 0.0) {
            return Err(Error::validation("distance", "must be a non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::validation("confidence", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EdgeType {
    TargetPair,
    TargetSurrounding,
    NearNeighbor,
}

/// Symmetric 0/1 adjacency over the scene objects, centred on two targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpatialSceneGraph {
    n: usize,
    adjacency: Vec<bool>,
    targets: (usize, usize),
    /// Index of each node in the source scene.
    pub node_refs: Vec<usize>,
}

impl SpatialSceneGraph {
    /// Builds a graph from an explicit adjacency matrix (row-major, `n * n`).
    /// The matrix must be symmetric with a zero diagonal and contain the
    /// target-pair edge.
    pub fn from_adjacency(n: usize, adjacency: Vec<bool>, targets: (usize, usize)) -> Result<Self> {
        if adjacency.len() != n * n {
            return Err(Error::validation("adjacency", "expected n*n entries"));
        }
        let (a, b) = targets;
        if a == b || a >= n || b >= n {
            return Err(Error::validation("targets", "must be distinct indices below n"));
        }
        for i in 0..n {
            if adjacency[i * n + i] {
                return Err(Error::validation("adjacency", "diagonal must be zero"));
            }
            for j in 0..i {
                if adjacency[i * n + j] != adjacency[j * n + i] {
                    return Err(Error::validation("adjacency", "must be symmetric"));
                }
            }
        }
        if !adjacency[a * n + b] {
            return Err(Error::validation("adjacency", "target-pair edge missing"));
        }
        Ok(SpatialSceneGraph {
            n,
            adjacency,
            targets,
            node_refs: (0..n).collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn targets(&self) -> (usize, usize) {
        self.targets
    }

    pub fn is_target(&self, i: usize) -> bool {
        i == self.targets.0 || i == self.targets.1
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && self.adjacency[i * self.n + j]
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.adjacency[i * self.n + j])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.adjacency[i * self.n + j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Rows of the adjacency matrix as 0/1 integers.
    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.adjacency[i * self.n + j] as u8).collect())
            .collect()
    }

    pub fn classify_edge(&self, i: usize, j: usize) -> Result<EdgeType> {
        if !self.has_edge(i, j) {
            return Err(Error::validation(
                "edge",
                format!("no edge between {i} and {j}"),
            ));
        }
        let (a, b) = self.targets;
        let ends = (self.is_target(i), self.is_target(j));
        Ok(if (i == a && j == b) || (i == b && j == a) {
            EdgeType::TargetPair
        } else if ends.0 || ends.1 {
            EdgeType::TargetSurrounding
        } else {
            EdgeType::NearNeighbor
        })
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Builds the adjacency in three passes: target rows and columns, pairwise
/// distance edges, then noise removal for low-confidence non-targets. The
/// diagonal is cleared and the target-pair edge restored afterwards.
pub fn build_graph(scene: &Scene, config: &GraphConfig) -> SpatialSceneGraph {
    let n = scene.len();
    let (o1, o2) = scene.targets;
    let mut adj = vec![false; n * n];

    for t in [o1, o2] {
        for k in 0..n {
            adj[t * n + k] = true;
            adj[k * n + t] = true;
        }
    }

    for i in 0..n {
        for j in 0..n {
            let dist = distance(&scene.objects[i].loc, &scene.objects[j].loc);
            if config.near.admits(dist, config.distance) {
                adj[i * n + j] = true;
            }
        }
    }

    for (i, obj) in scene.objects.iter().enumerate() {
        if obj.confidence < config.confidence && !scene.is_target(i) {
            for k in 0..n {
                adj[i * n + k] = false;
                adj[k * n + i] = false;
            }
        }
    }

    for i in 0..n {
        adj[i * n + i] = false;
    }
    adj[o1 * n + o2] = true;
    adj[o2 * n + o1] = true;

    SpatialSceneGraph {
        n,
        adjacency: adj,
        targets: scene.targets,
        node_refs: (0..n).collect(),
    }
}

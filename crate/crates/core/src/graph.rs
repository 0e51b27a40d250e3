//! Similarity graph over grids (or regions) with Gaussian edge potentials.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fusion::EstimateTable;
use crate::gridding::{Adjacency, GridId, GridSet};

pub const GRAPH_FILE: &str = "graph.csv";

/// Density scale used when the window's densities have no spread (veh/m).
pub const FALLBACK_SIGMA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("NoEstimatedGrids:{0}")]
    NoEstimatedGrids(i64),
    #[error("InvalidSigma:{0}")]
    InvalidSigma(f64),
}

/// Density scale for the potential function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Sigma {
    /// Standard deviation of the window's node densities.
    #[default]
    Auto,
    #[serde(untagged)]
    Fixed(f64),
}

impl std::str::FromStr for Sigma {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Sigma::Auto);
        }
        s.parse::<f64>()
            .map(Sigma::Fixed)
            .map_err(|_| format!("expected a number or 'auto', got {s}"))
    }
}

/// `C = exp(-((k_i - k_j)/sigma)^2)`, kept strictly positive.
pub fn potential(k_i: f64, k_j: f64, sigma: f64) -> f64 {
    let z = (k_i - k_j) / sigma;
    (-z * z).exp().max(f64::MIN_POSITIVE)
}

/// Population standard deviation, or [`FALLBACK_SIGMA`] when it is zero.
pub fn auto_sigma(values: &[f64]) -> f64 {
    if values.is_empty() {
        return FALLBACK_SIGMA;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 0.0 {
        sd
    } else {
        FALLBACK_SIGMA
    }
}

/// Undirected weighted graph. Nodes are ordered by ascending `key`, and the
/// node order doubles as the tie-break order for region growing.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    /// Grid ids (or region ids for a region-level graph), ascending.
    pub keys: Vec<u32>,
    pub density: Vec<f64>,
    /// Road length carried by each node, used as aggregation weight.
    pub length: Vec<f64>,
    /// `(neighbor index, potential)`, neighbor indices ascending.
    pub neighbors: Vec<Vec<(usize, f64)>>,
    pub sigma: f64,
}

impl GridGraph {
    /// Builds a graph from explicit node data and undirected edges.
    pub fn from_parts(
        keys: Vec<u32>,
        density: Vec<f64>,
        length: Vec<f64>,
        edges: &[(usize, usize)],
        sigma: f64,
    ) -> Self {
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "keys must be strictly ascending");
        assert_eq!(keys.len(), density.len());
        assert_eq!(keys.len(), length.len());
        let mut neighbors = vec![Vec::new(); keys.len()];
        for &(a, b) in edges {
            if a == b {
                continue;
            }
            let c = potential(density[a], density[b], sigma);
            neighbors[a].push((b, c));
            neighbors[b].push((a, c));
        }
        for n in &mut neighbors {
            n.sort_by_key(|&(j, _)| j);
            n.dedup_by_key(|&mut (j, _)| j);
        }
        Self {
            keys,
            density,
            length,
            neighbors,
            sigma,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn index_of(&self, key: u32) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each undirected edge once, as `(i, j, potential)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, ns)| {
            ns.iter().filter(move |&&(j, _)| j > i).map(move |&(j, c)| (i, j, c))
        })
    }

    pub fn potential_between(&self, i: usize, j: usize) -> Option<f64> {
        self.neighbors[i]
            .binary_search_by_key(&j, |&(n, _)| n)
            .ok()
            .map(|k| self.neighbors[i][k].1)
    }

    /// Writes `grid_i,grid_j,potential` for every edge.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
        w.write_record(["grid_i", "grid_j", "potential"]).map_err(std::io::Error::other)?;
        for (i, j, c) in self.edges() {
            w.write_record([self.keys[i].to_string(), self.keys[j].to_string(), c.to_string()])
                .map_err(std::io::Error::other)?;
        }
        w.flush()
    }
}

/// Converts one window's estimated or imputed grids into a similarity graph
/// over rook adjacency. Unknown grids are left out.
pub fn build_graph(
    gridset: &GridSet,
    adjacency: &Adjacency,
    estimates: &EstimateTable,
    window: i64,
    sigma: Sigma,
) -> Result<GridGraph, GraphError> {
    let known: BTreeMap<GridId, f64> = estimates.densities(window);
    if known.is_empty() {
        return Err(GraphError::NoEstimatedGrids(window));
    }
    let keys: Vec<u32> = known.keys().map(|g| g.0).collect();
    let density: Vec<f64> = known.values().copied().collect();
    let length: Vec<f64> = known.keys().map(|&g| gridset.grid(g).total_link_length).collect();
    let sigma = resolve_sigma(sigma, &density)?;

    let index: BTreeMap<GridId, usize> = known.keys().enumerate().map(|(i, &g)| (g, i)).collect();
    let mut edges = Vec::new();
    for (&g, &i) in &index {
        for n in adjacency.neighbors(g) {
            if let Some(&j) = index.get(n) {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
    }
    Ok(GridGraph::from_parts(keys, density, length, &edges, sigma))
}

pub fn resolve_sigma(sigma: Sigma, densities: &[f64]) -> Result<f64, GraphError> {
    match sigma {
        Sigma::Auto => Ok(auto_sigma(densities)),
        Sigma::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
        Sigma::Fixed(s) => Err(GraphError::InvalidSigma(s)),
    }
}

//! λ-connected region growing, integrative re-growing at the region level,
//! and boundary smoothing.
//!
//! Region growing admits a neighbor `j` of a frontier node `i` whenever the
//! edge potential `C(i, j) ≥ λ`, so the grown regions are exactly the
//! connected components of the threshold graph `{edges with C ≥ λ}`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fusion::EstimateTable;
use crate::gridding::{Adjacency, GridId, GridSet};
use crate::graph::{build_graph, GraphError, GridGraph, Sigma};
use crate::ingest::{IngestError, Windowing};

pub const PARTITION_FILE: &str = "partition.csv";
pub const REGIONS_FILE: &str = "regions.csv";

/// Label used for grids left out of the graph.
pub const UNKNOWN_REGION: i64 = -1;

/// Hard cap on smoothing sweeps.
pub const MAX_SMOOTHING_SWEEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub lambda: f64,
    pub sigma: Sigma,
    pub min_region_grids: usize,
    pub max_iters: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            lambda: 0.8,
            sigma: Sigma::Auto,
            min_region_grids: 3,
            max_iters: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Priority(f64);

impl Eq for Priority {}

impl PartialOrd for Priority {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Priority {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Output of [`region_grow`]: region id per node (from 1, in discovery
/// order) and the final connectedness value `C_m` of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGrowth {
    pub labels: Vec<u32>,
    pub connectedness: Vec<f64>,
    pub region_count: u32,
}

/// Seeded region growing at threshold `lambda`.
///
/// Every node starts with `C_m = 1`. A seed is the unassigned node with the
/// largest `C_m` (lowest index on ties). The frontier is processed in order
/// of decreasing `C_m`, again lowest index first; each processed node admits
/// its unassigned neighbors `j` with `C(i, j) ≥ λ` and lowers
/// `C_j` to `min(C_j, C(i, j))`.
pub fn region_grow(graph: &GridGraph, lambda: f64) -> RegionGrowth {
    let n = graph.len();
    let mut connectedness = vec![1.0_f64; n];
    let mut labels = vec![0u32; n];
    let mut processed = vec![false; n];
    let mut region = 0u32;
    let mut assigned = 0usize;

    while assigned < n {
        let seed = (0..n)
            .filter(|&m| labels[m] == 0)
            .max_by(|&a, &b| {
                connectedness[a]
                    .total_cmp(&connectedness[b])
                    .then(b.cmp(&a))
            })
            .expect("an unassigned node remains");
        region += 1;
        labels[seed] = region;
        assigned += 1;

        let mut frontier = BinaryHeap::new();
        frontier.push((Priority(connectedness[seed]), Reverse(seed)));
        while let Some((Priority(c), Reverse(i))) = frontier.pop() {
            if processed[i] || c != connectedness[i] {
                continue;
            }
            processed[i] = true;
            for &(j, c_ij) in &graph.neighbors[i] {
                if c_ij < lambda {
                    continue;
                }
                if labels[j] == 0 {
                    labels[j] = region;
                    assigned += 1;
                } else if labels[j] != region || processed[j] || c_ij >= connectedness[j] {
                    continue;
                }
                connectedness[j] = connectedness[j].min(c_ij);
                frontier.push((Priority(connectedness[j]), Reverse(j)));
            }
        }
    }
    RegionGrowth {
        labels,
        connectedness,
        region_count: region,
    }
}

/// Renumbers labels 1.. in order of first appearance along node order.
pub fn canonical_labels(labels: &[u32]) -> Vec<u32> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len() as u32 + 1;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Length-weighted mean density of `members`; plain mean when they carry no
/// road length.
pub fn aggregate_density(graph: &GridGraph, members: impl IntoIterator<Item = usize>) -> (f64, f64) {
    let (mut lk, mut l, mut k, mut n) = (0.0, 0.0, 0.0, 0usize);
    for m in members {
        lk += graph.length[m] * graph.density[m];
        l += graph.length[m];
        k += graph.density[m];
        n += 1;
    }
    let density = if l > 0.0 { lk / l } else { k / n.max(1) as f64 };
    (density, l)
}

/// Region-level graph: one node per label, adjacent when any member grids
/// are adjacent, densities aggregated by road length.
pub fn region_graph(graph: &GridGraph, labels: &[u32]) -> GridGraph {
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let keys: Vec<u32> = members.keys().copied().collect();
    let index: BTreeMap<u32, usize> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let (density, length): (Vec<f64>, Vec<f64>) = members
        .values()
        .map(|m| aggregate_density(graph, m.iter().copied()))
        .unzip();
    let mut edges = BTreeSet::new();
    for (i, j, _) in graph.edges() {
        let (a, b) = (index[&labels[i]], index[&labels[j]]);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    let edges: Vec<(usize, usize)> = edges.into_iter().collect();
    GridGraph::from_parts(keys, density, length, &edges, graph.sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub labels: Vec<u32>,
    /// Region-level growing rounds, including the final one that changed
    /// nothing.
    pub iterations: usize,
    /// False when `max_iters` ran out before a fixed point.
    pub converged: bool,
    pub initial_regions: usize,
}

/// Grows regions on the grid graph, then repeatedly merges whole regions by
/// growing on the region-level graph until nothing merges.
pub fn integrative_grow(graph: &GridGraph, lambda: f64, max_iters: usize) -> Integration {
    let initial = region_grow(graph, lambda);
    integrate_regions(graph, &initial.labels, lambda, max_iters)
}

/// Region-level merging rounds starting from an existing labeling.
pub fn integrate_regions(graph: &GridGraph, labels: &[u32], lambda: f64, max_iters: usize) -> Integration {
    assert!(max_iters >= 1, "max_iters must be at least 1");
    let mut labels = canonical_labels(labels);
    let initial_regions = labels.iter().collect::<BTreeSet<_>>().len();
    for iteration in 1..=max_iters {
        let regions = region_graph(graph, &labels);
        let grown = region_grow(&regions, lambda);
        if grown.region_count as usize == regions.len() {
            return Integration {
                labels,
                iterations: iteration,
                converged: true,
                initial_regions,
            };
        }
        let merged: Vec<u32> = labels
            .iter()
            .map(|&l| grown.labels[regions.index_of(l).expect("label is a region key")])
            .collect();
        labels = canonical_labels(&merged);
    }
    log::warn!("integrative growing did not converge in {max_iters} iterations");
    Integration {
        labels,
        iterations: max_iters,
        converged: false,
        initial_regions,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Smoothing {
    pub labels: Vec<u32>,
    /// Sweeps run, including the final one that changed nothing.
    pub sweeps: usize,
    pub converged: bool,
}

struct RegionBook<'a> {
    graph: &'a GridGraph,
    labels: Vec<u32>,
    members: BTreeMap<u32, BTreeSet<usize>>,
}

impl<'a> RegionBook<'a> {
    fn new(graph: &'a GridGraph, labels: &[u32]) -> Self {
        let mut members: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            members.entry(l).or_default().insert(i);
        }
        Self {
            graph,
            labels: labels.to_vec(),
            members,
        }
    }

    fn density(&self, region: u32) -> f64 {
        aggregate_density(self.graph, self.members[&region].iter().copied()).0
    }

    fn neighbor_regions(&self, region: u32) -> BTreeSet<u32> {
        self.members[&region]
            .iter()
            .flat_map(|&i| self.graph.neighbors[i].iter().map(|&(j, _)| self.labels[j]))
            .filter(|&l| l != region)
            .collect()
    }

    fn merge(&mut self, from: u32, into: u32) {
        let moved = self.members.remove(&from).expect("region exists");
        for &i in &moved {
            self.labels[i] = into;
        }
        self.members.get_mut(&into).expect("target exists").extend(moved);
    }

    fn move_node(&mut self, node: usize, into: u32) {
        let from = self.labels[node];
        let source = self.members.get_mut(&from).expect("region exists");
        source.remove(&node);
        if source.is_empty() {
            self.members.remove(&from);
        }
        self.members.get_mut(&into).expect("target exists").insert(node);
        self.labels[node] = into;
    }

    /// Whether `region` stays connected after removing `node`.
    fn connected_without(&self, region: u32, node: usize) -> bool {
        let rest: Vec<usize> = self.members[&region].iter().copied().filter(|&m| m != node).collect();
        let Some(&start) = rest.first() else {
            return true;
        };
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &self.graph.neighbors[i] {
                if j != node && self.labels[j] == region && seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        seen.len() == rest.len()
    }

    /// Merges every region smaller than `min_size` into the adjacent region
    /// with the closest density. Returns whether anything changed.
    fn absorb_small(&mut self, min_size: usize) -> bool {
        let mut changed = false;
        let ids: Vec<u32> = self.members.keys().copied().collect();
        for region in ids {
            let Some(m) = self.members.get(&region) else { continue };
            if m.len() >= min_size {
                continue;
            }
            let own = self.density(region);
            let target = self
                .neighbor_regions(region)
                .into_iter()
                .map(|r| ((self.density(r) - own).abs(), r))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, target)) = target {
                self.merge(region, target);
                changed = true;
            }
        }
        changed
    }

    /// Majority filter in ascending node order. Returns whether anything moved.
    fn majority_pass(&mut self) -> bool {
        let mut changed = false;
        for i in 0..self.graph.len() {
            let own = self.labels[i];
            let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
            for &(j, _) in &self.graph.neighbors[i] {
                *counts.entry(self.labels[j]).or_default() += 1;
            }
            let own_count = counts.get(&own).copied().unwrap_or(0);
            let k_i = self.graph.density[i];
            let best = counts
                .iter()
                .filter(|&(&l, &c)| l != own && c > own_count)
                .max_by(|a, b| {
                    a.1.cmp(b.1)
                        .then_with(|| {
                            let da = (self.density(*a.0) - k_i).abs();
                            let db = (self.density(*b.0) - k_i).abs();
                            db.total_cmp(&da)
                        })
                        .then(b.0.cmp(a.0))
                })
                .map(|(&l, _)| l);
            if let Some(target) = best {
                if self.connected_without(own, i) {
                    self.move_node(i, target);
                    changed = true;
                }
            }
        }
        changed
    }
}

/// Absorbs undersized regions and applies a connectivity-preserving majority
/// filter, repeating both until a sweep changes nothing.
pub fn smooth_boundaries(graph: &GridGraph, labels: &[u32], min_region_grids: usize) -> Smoothing {
    let mut book = RegionBook::new(graph, &canonical_labels(labels));
    for sweep in 1..=MAX_SMOOTHING_SWEEPS {
        let absorbed = book.absorb_small(min_region_grids);
        let moved = book.majority_pass();
        if !absorbed && !moved {
            return Smoothing {
                labels: canonical_labels(&book.labels),
                sweeps: sweep,
                converged: true,
            };
        }
    }
    log::warn!("boundary smoothing hit the {MAX_SMOOTHING_SWEEPS}-sweep cap");
    Smoothing {
        labels: canonical_labels(&book.labels),
        sweeps: MAX_SMOOTHING_SWEEPS,
        converged: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub id: u32,
    pub members: Vec<GridId>,
    /// Road-length-weighted mean density (veh/m).
    pub density: f64,
    /// Total road length (m).
    pub length: f64,
}

/// Grid → region labeling with per-region aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Every grid of the grid set; grids outside the graph map to −1.
    pub labels: BTreeMap<GridId, i64>,
    pub regions: Vec<Region>,
}

impl Partition {
    pub fn from_node_labels(graph: &GridGraph, node_labels: &[u32], all_grids: impl IntoIterator<Item = GridId>) -> Self {
        assert_eq!(node_labels.len(), graph.len());
        let mut labels: BTreeMap<GridId, i64> = all_grids.into_iter().map(|g| (g, UNKNOWN_REGION)).collect();
        let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &l) in node_labels.iter().enumerate() {
            labels.insert(GridId(graph.keys[i]), l as i64);
            members.entry(l).or_default().push(i);
        }
        let regions = members
            .into_iter()
            .map(|(id, m)| {
                let (density, length) = aggregate_density(graph, m.iter().copied());
                Region {
                    id,
                    members: m.iter().map(|&i| GridId(graph.keys[i])).collect(),
                    density,
                    length,
                }
            })
            .collect();
        Self { labels, regions }
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    /// Labels in grid-id order, for comparisons.
    pub fn label_vec(&self) -> Vec<i64> {
        self.labels.values().copied().collect()
    }
}

/// Everything produced while partitioning one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPartition {
    pub window: i64,
    pub sigma: f64,
    /// Regions after grid-level growing.
    pub grown_regions: usize,
    pub integration: Integration,
    pub smoothing: Smoothing,
    pub partition: Partition,
}

/// Graph construction, integrative growing and smoothing for one window.
pub fn partition_window(
    gridset: &GridSet,
    adjacency: &Adjacency,
    estimates: &EstimateTable,
    window: i64,
    config: &PartitionConfig,
) -> Result<(GridGraph, WindowPartition), GraphError> {
    let graph = build_graph(gridset, adjacency, estimates, window, config.sigma)?;
    let integration = integrative_grow(&graph, config.lambda, config.max_iters);
    let smoothing = smooth_boundaries(&graph, &integration.labels, config.min_region_grids);
    let partition = Partition::from_node_labels(&graph, &smoothing.labels, gridset.ids());
    let result = WindowPartition {
        window,
        sigma: graph.sigma,
        grown_regions: integration.initial_regions,
        integration,
        smoothing,
        partition,
    };
    Ok((graph, result))
}

pub fn write_partition_csvs(
    dir: &Path,
    windowing: &Windowing,
    partitions: &BTreeMap<i64, Partition>,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(dir.join(PARTITION_FILE)).map_err(std::io::Error::other)?;
    w.write_record(["grid_id", "window_start_s", "region_id"]).map_err(std::io::Error::other)?;
    for (&window, p) in partitions {
        let start = windowing.start(window).to_string();
        for (g, l) in &p.labels {
            w.write_record([g.to_string(), start.clone(), l.to_string()])
                .map_err(std::io::Error::other)?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(REGIONS_FILE)).map_err(std::io::Error::other)?;
    w.write_record(["region_id", "window_start_s", "n_grids", "K_r", "l_r_m"])
        .map_err(std::io::Error::other)?;
    for (&window, p) in partitions {
        let start = windowing.start(window).to_string();
        for r in &p.regions {
            w.write_record([
                r.id.to_string(),
                start.clone(),
                r.members.len().to_string(),
                r.density.to_string(),
                r.length.to_string(),
            ])
            .map_err(std::io::Error::other)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `partition.csv` into per-window labelings.
pub fn read_partition_labels(
    path: &Path,
    windowing: &Windowing,
) -> Result<BTreeMap<i64, BTreeMap<GridId, i64>>, IngestError> {
    #[derive(Deserialize)]
    struct Row {
        grid_id: u32,
        window_start_s: f64,
        region_id: i64,
    }
    let file = std::fs::File::open(path).map_err(|_| IngestError::MissingFile(PARTITION_FILE.into()))?;
    let mut out: BTreeMap<i64, BTreeMap<GridId, i64>> = BTreeMap::new();
    for (k, row) in csv::Reader::from_reader(file).deserialize::<Row>().enumerate() {
        let schema = |column: &str, message: String| IngestError::SchemaError {
            file: PARTITION_FILE.into(),
            line: k as u64 + 2,
            column: column.into(),
            message,
        };
        let row = row.map_err(|e| schema("", e.to_string()))?;
        let window = windowing
            .aligned_index(row.window_start_s)
            .ok_or_else(|| schema("window_start_s", "not aligned to delta_t_s".into()))?;
        out.entry(window).or_default().insert(GridId(row.grid_id), row.region_id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(density: &[f64], sigma: f64) -> GridGraph {
        let n = density.len();
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (i - 1, i)).collect();
        GridGraph::from_parts((0..n as u32).collect(), density.to_vec(), vec![1.0; n], &edges, sigma)
    }

    fn lattice(rows: usize, cols: usize, density: impl Fn(usize, usize) -> f64, sigma: f64) -> GridGraph {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        let dens = (0..rows * cols).map(|i| density(i / cols, i % cols)).collect();
        GridGraph::from_parts((0..(rows * cols) as u32).collect(), dens, vec![1.0; rows * cols], &edges, sigma)
    }

    #[test]
    fn lambda_zero_gives_adjacency_components() {
        let g = GridGraph::from_parts(
            vec![0, 1, 2, 3, 4],
            vec![1.0, 100.0, 3.0, 4.0, 5.0],
            vec![1.0; 5],
            &[(0, 1), (2, 3)],
            1.0,
        );
        let grown = region_grow(&g, 0.0);
        assert_eq!(grown.labels, vec![1, 1, 2, 2, 3]);
    }

    #[test]
    fn lambda_above_one_gives_singletons() {
        let g = chain(&[1.0, 1.0, 1.0], 1.0);
        assert_eq!(region_grow(&g, 1.01).labels, vec![1, 2, 3]);
    }

    #[test]
    fn chain_of_three_splits_at_jump() {
        let g = chain(&[10.0, 11.0, 50.0], 5.0);
        let c12 = g.potential_between(0, 1).unwrap();
        assert!((c12 - 0.9608).abs() < 1e-4);
        assert!(g.potential_between(1, 2).unwrap() < 1e-20);
        let grown = region_grow(&g, 0.9);
        assert_eq!(grown.labels, vec![1, 1, 2]);
        assert_eq!(grown.connectedness[1], c12);
        assert_eq!(grown.connectedness[0], 1.0);
    }

    #[test]
    fn integrative_single_region_is_fixed_point() {
        let g = chain(&[1.0, 1.0, 1.0], 1.0);
        let out = integrate_regions(&g, &[1, 1, 1], 0.5, 20);
        assert_eq!(out.labels, vec![1, 1, 1]);
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
    }

    #[test]
    fn integrative_merges_identical_regions() {
        let g = chain(&[2.0, 2.0, 2.0, 2.0], 1.0);
        let out = integrate_regions(&g, &[1, 1, 2, 2], 1.0, 20);
        assert_eq!(out.labels, vec![1, 1, 1, 1]);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn integrative_three_region_line() {
        // Regions {0,1}, {2,3}, {4,5} with K_r = 10, 10.5, 50.
        let g = chain(&[10.0, 10.0, 10.5, 10.5, 50.0, 50.0], 5.0);
        let out = integrate_regions(&g, &[1, 1, 2, 2, 3, 3], 0.9, 20);
        assert_eq!(out.labels, vec![1, 1, 1, 1, 2, 2]);
        assert_eq!(out.iterations, 2);
        assert!(out.converged);
    }

    #[test]
    fn integrative_reports_non_convergence() {
        let g = chain(&[10.0, 10.0, 10.5, 10.5, 50.0, 50.0], 5.0);
        let out = integrate_regions(&g, &[1, 1, 2, 2, 3, 3], 0.9, 1);
        assert!(!out.converged);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn smoothing_leaves_clean_partition_alone() {
        let g = lattice(3, 4, |_, c| if c < 2 { 1.0 } else { 5.0 }, 1.0);
        let labels: Vec<u32> = (0..12).map(|i| if i % 4 < 2 { 1 } else { 2 }).collect();
        let out = smooth_boundaries(&g, &labels, 3);
        assert_eq!(out.labels, labels);
        assert_eq!(out.sweeps, 1);
    }

    #[test]
    fn stray_grid_relabeled_to_surrounding_region() {
        let g = lattice(3, 3, |_, _| 1.0, 1.0);
        let mut labels = vec![1u32; 9];
        labels[4] = 2;
        // Without absorption, the majority filter alone removes the stray.
        let out = smooth_boundaries(&g, &labels, 1);
        assert_eq!(out.labels, vec![1; 9]);
    }

    #[test]
    fn small_region_absorbed_by_closest_density() {
        // Row of 7: region A (K=2.0) | stray (K=2.2) | region B (K=5.0).
        let dens = [2.0, 2.0, 2.0, 2.2, 5.0, 5.0, 5.0];
        let g = chain(&dens.map(|k| k * 1e-3), 1e-3);
        let labels = [1, 1, 1, 2, 3, 3, 3];
        // Oracle: argmin |K_r − K_g| over the neighboring regions.
        let oracle = [(2.0f64, 1u32), (5.0, 3)]
            .iter()
            .min_by(|a, b| (a.0 - 2.2).abs().total_cmp(&(b.0 - 2.2).abs()))
            .unwrap()
            .1;
        assert_eq!(oracle, 1);
        let out = smooth_boundaries(&g, &labels, 3);
        assert_eq!(out.labels, vec![1, 1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn majority_move_never_disconnects_source() {
        // Node 1 bridges region 1's ends; moving it would split region 1.
        //   0 - 1 - 2
        //       |
        //       3 (region 2) with 4, 5 also region 2 around it
        let g = GridGraph::from_parts(
            (0..6).collect(),
            vec![1.0; 6],
            vec![1.0; 6],
            &[(0, 1), (1, 2), (1, 3), (1, 4), (1, 5), (3, 4), (4, 5)],
            1.0,
        );
        let labels = [1, 1, 1, 2, 2, 2];
        let out = smooth_boundaries(&g, &labels, 1);
        assert_eq!(out.labels, vec![1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn canonical_relabels_by_first_appearance() {
        assert_eq!(canonical_labels(&[7, 7, 3, 9, 3]), vec![1, 1, 2, 3, 2]);
    }

    #[test]
    fn partition_marks_missing_grids_unknown() {
        let g = GridGraph::from_parts(vec![0, 2], vec![1.0, 3.0], vec![10.0, 30.0], &[], 1.0);
        let p = Partition::from_node_labels(&g, &[1, 1], (0..3).map(GridId));
        assert_eq!(p.label_vec(), vec![1, -1, 1]);
        assert_eq!(p.regions.len(), 1);
        assert!((p.regions[0].density - 2.5).abs() < 1e-15);
        assert_eq!(p.regions[0].length, 40.0);
    }
}

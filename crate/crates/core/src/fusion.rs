//! Probe/loop-detector fusion: penetration rates and Edie-generalized
//! density, flow and speed per (grid, window).
//!
//! For one grid of contained link length `l` over a window of length `Δt`,
//! with probe travel times `t_i` and distances `d_i` inside the cell:
//!
//! * single penetration rate `p`: `T = Σt_i/p`, `D = Σd_i/p`,
//!   `K = T/(l·Δt)`, `Q = D/(l·Δt)`, `V = D/T`;
//! * several detectors: membership `φ_ij = 1` when probe `i` passes detector
//!   `j`, weights `w_ij = φ_ij / Σ_k φ_ik`, per-detector rate
//!   `p_j = Σ_i φ_ij / N_j`, grid rate `p = Σ_j Σ_i φ_ij / Σ_j N_j`, and
//!   `K = Σ_j Σ_i w_ij·t_i / (p_j·l·Δt)`.
//!
//! Each probe is thus spread over the detectors it passed, so a vehicle seen
//! by two detectors is not counted twice.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gridding::{grid_adjacency, Adjacency, Grid, GridId, GridSet};
use crate::ingest::{
    clip_trajectory, trajectory_pieces, ClippedSegment, Dataset, Detector, IngestError, Link,
    Trajectory, Windowing,
};

pub const ESTIMATES_FILE: &str = "estimates.csv";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FusionError {
    #[error("InvalidRate:{0}")]
    InvalidRate(f64),
    #[error("NoDetectorsInGrid")]
    NoDetectorsInGrid,
    #[error("AllDetectorsExcluded")]
    AllDetectorsExcluded,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Scale the time of probes that passed no detector by `1/p_grid`
    /// instead of leaving them out of the fused sum.
    pub use_grid_p_for_orphans: bool,
}

/// One probe passing one detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Crossing {
    pub vehicle: usize,
    pub detector: usize,
    pub window: i64,
}

/// Every detector passage of one trajectory, in time order.
pub fn detector_crossings(
    vehicle: usize,
    links: &[Link],
    detectors: &[Detector],
    detectors_by_link: &[Vec<usize>],
    trajectory: &Trajectory,
    windowing: &Windowing,
) -> Vec<Crossing> {
    let mut out = Vec::new();
    for piece in trajectory_pieces(links, &trajectory.points) {
        let mut hits: Vec<(f64, usize)> = detectors_by_link[piece.link]
            .iter()
            .filter_map(|&d| piece.crossing_time(detectors[d].offset).map(|tc| (tc, d)))
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.extend(hits.into_iter().map(|(tc, detector)| Crossing {
            vehicle,
            detector,
            window: windowing.index(tc),
        }));
    }
    out
}

/// Probe observations: clipped segments and detector passages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observations {
    /// Sorted by (grid, window, vehicle).
    pub segments: Vec<ClippedSegment>,
    /// Sorted by (vehicle, detector, window).
    pub crossings: Vec<Crossing>,
}

impl Observations {
    /// Clips and replays every trajectory; vehicle indices follow the slice.
    pub fn from_trajectories(
        links: &[Link],
        detectors: &[Detector],
        detectors_by_link: &[Vec<usize>],
        link_grid: &[Option<GridId>],
        trajectories: &[Trajectory],
        windowing: &Windowing,
    ) -> Self {
        let mut segments = Vec::new();
        let mut crossings = Vec::new();
        for (v, traj) in trajectories.iter().enumerate() {
            segments.extend(clip_trajectory(v, links, &traj.points, link_grid, windowing));
            crossings.extend(detector_crossings(
                v,
                links,
                detectors,
                detectors_by_link,
                traj,
                windowing,
            ));
        }
        segments.sort_by_key(|s| (s.grid, s.window, s.vehicle));
        crossings.sort();
        Self { segments, crossings }
    }

    pub fn from_dataset(dataset: &Dataset, gridset: &GridSet) -> Self {
        Self::from_trajectories(
            &dataset.links,
            &dataset.detectors,
            &dataset.detectors_by_link(),
            &gridset.link_grid,
            &dataset.trajectories,
            &dataset.windowing,
        )
    }

    /// Observations of the vehicles with `keep[vehicle] == true` only.
    pub fn restricted_to(&self, keep: &[bool]) -> Self {
        Self {
            segments: self.segments.iter().filter(|s| keep[s.vehicle]).copied().collect(),
            crossings: self.crossings.iter().filter(|c| keep[c.vehicle]).copied().collect(),
        }
    }
}

/// Binary vehicle × detector passage matrix for one (grid, window).
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    pub vehicles: Vec<usize>,
    pub detectors: Vec<usize>,
    entries: Vec<bool>,
    row_sums: Vec<usize>,
}

impl MembershipMatrix {
    pub fn from_rows(vehicles: Vec<usize>, detectors: Vec<usize>, rows: Vec<Vec<bool>>) -> Self {
        assert_eq!(rows.len(), vehicles.len());
        let mut entries = Vec::with_capacity(vehicles.len() * detectors.len());
        for row in &rows {
            assert_eq!(row.len(), detectors.len());
            entries.extend_from_slice(row);
        }
        let row_sums = rows.iter().map(|r| r.iter().filter(|&&e| e).count()).collect();
        Self {
            vehicles,
            detectors,
            entries,
            row_sums,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.vehicles.len()
    }

    pub fn n_cols(&self) -> usize {
        self.detectors.len()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.entries[row * self.detectors.len() + col]
    }

    pub fn row_sum(&self, row: usize) -> usize {
        self.row_sums[row]
    }

    pub fn col_sum(&self, col: usize) -> usize {
        (0..self.n_rows()).filter(|&r| self.get(r, col)).count()
    }
}

/// `φ_ij = 1` iff vehicle `i` passes detector `j` during `window`.
pub fn membership(
    vehicles: &[usize],
    detectors: &[usize],
    crossings: &[Crossing],
    window: i64,
) -> MembershipMatrix {
    let row_of: HashMap<usize, usize> = vehicles.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let col_of: HashMap<usize, usize> = detectors.iter().enumerate().map(|(j, &d)| (d, j)).collect();
    let mut rows = vec![vec![false; detectors.len()]; vehicles.len()];
    for c in crossings.iter().filter(|c| c.window == window) {
        if let (Some(&i), Some(&j)) = (row_of.get(&c.vehicle), col_of.get(&c.detector)) {
            rows[i][j] = true;
        }
    }
    MembershipMatrix::from_rows(vehicles.to_vec(), detectors.to_vec(), rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub vehicle: usize,
    pub weights: Vec<f64>,
}

/// `w_ij = φ_ij / Σ_k φ_ik`; rows without any passage are all zero.
pub fn weights(m: &MembershipMatrix) -> Vec<WeightRow> {
    (0..m.n_rows())
        .map(|i| {
            let hits = m.row_sum(i);
            let weights = (0..m.n_cols())
                .map(|j| if m.get(i, j) { 1.0 / hits as f64 } else { 0.0 })
                .collect();
            WeightRow {
                vehicle: m.vehicles[i],
                weights,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorStats {
    pub detector: usize,
    pub probe_passes: usize,
    pub loop_count: Option<u64>,
    /// `None` when the detector has no count or a zero count.
    pub penetration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Penetration {
    pub detectors: Vec<DetectorStats>,
    /// `None` when the included loop counts sum to zero.
    pub grid_rate: Option<f64>,
}

/// Per-detector and grid-level penetration rates.
///
/// `counts` is aligned with the matrix columns. Missing or zero counts drop
/// the detector from both sums. Rates above one (more probe passes than loop
/// counts) are clamped to one.
pub fn penetration(m: &MembershipMatrix, counts: &[Option<u64>]) -> Result<Penetration, FusionError> {
    assert_eq!(counts.len(), m.n_cols());
    if m.n_cols() == 0 {
        return Err(FusionError::NoDetectorsInGrid);
    }
    let mut passes_total = 0usize;
    let mut count_total = 0u64;
    let mut stats = Vec::with_capacity(m.n_cols());
    for (j, &count) in counts.iter().enumerate() {
        let passes = m.col_sum(j);
        let rate = match count {
            Some(n) if n > 0 => {
                passes_total += passes;
                count_total += n;
                let raw = passes as f64 / n as f64;
                if raw > 1.0 {
                    log::warn!(
                        "detector {}: {} probe passes exceed loop count {}; rate clamped to 1",
                        m.detectors[j],
                        passes,
                        n
                    );
                }
                Some(raw.min(1.0))
            }
            _ => None,
        };
        stats.push(DetectorStats {
            detector: m.detectors[j],
            probe_passes: passes,
            loop_count: count,
            penetration: rate,
        });
    }
    let grid_rate = (count_total > 0).then(|| (passes_total as f64 / count_total as f64).min(1.0));
    Ok(Penetration {
        detectors: stats,
        grid_rate,
    })
}

/// Edie quantities over one space-time cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdieEstimate {
    /// Vehicle-seconds.
    pub total_time: f64,
    /// Vehicle-meters.
    pub total_distance: f64,
    /// Vehicles per meter.
    pub density: f64,
    /// Vehicles per second.
    pub flow: f64,
    /// Meters per second; unset when no time was spent in the cell.
    pub speed: Option<f64>,
}

impl EdieEstimate {
    fn from_totals(total_time: f64, total_distance: f64, link_length: f64, delta_t: f64) -> Self {
        let area = link_length * delta_t;
        Self {
            total_time,
            total_distance,
            density: total_time / area,
            flow: total_distance / area,
            speed: (total_time > 0.0).then(|| total_distance / total_time),
        }
    }
}

/// Edie estimate from probe `(distance, time)` pairs under a single
/// penetration rate.
pub fn edie_single(
    rate: f64,
    travel: impl IntoIterator<Item = (f64, f64)>,
    link_length: f64,
    delta_t: f64,
) -> Result<EdieEstimate, FusionError> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(FusionError::InvalidRate(rate));
    }
    assert!(link_length > 0.0 && delta_t > 0.0);
    let (d_sum, t_sum) = travel
        .into_iter()
        .fold((0.0, 0.0), |(d, t), (di, ti)| (d + di, t + ti));
    Ok(EdieEstimate::from_totals(t_sum / rate, d_sum / rate, link_length, delta_t))
}

/// `Σ_j Σ_i w_ij·x_i / p_j` over detectors with a defined rate.
///
/// `values` is aligned with the matrix rows.
pub fn fused_total(
    m: &MembershipMatrix,
    weights: &[WeightRow],
    stats: &[DetectorStats],
    values: &[f64],
) -> Result<f64, FusionError> {
    assert_eq!(values.len(), m.n_rows());
    if stats.iter().all(|s| s.penetration.is_none()) {
        return Err(FusionError::AllDetectorsExcluded);
    }
    let mut total = 0.0;
    for (j, s) in stats.iter().enumerate() {
        let Some(rate) = s.penetration else { continue };
        let column: f64 = (0..m.n_rows())
            .filter(|&i| m.get(i, j))
            .map(|i| weights[i].weights[j] * values[i])
            .sum();
        if column > 0.0 {
            total += column / rate;
        }
    }
    Ok(total)
}

/// Fused density `K = Σ_j Σ_i w_ij·t_i / (p_j·l·Δt)`.
pub fn fused_density(
    m: &MembershipMatrix,
    weights: &[WeightRow],
    stats: &[DetectorStats],
    times: &[f64],
    link_length: f64,
    delta_t: f64,
) -> Result<f64, FusionError> {
    Ok(fused_total(m, weights, stats, times)? / (link_length * delta_t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateStatus {
    Estimated,
    Imputed,
    Unknown,
}

impl EstimateStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateStatus::Estimated => "estimated",
            EstimateStatus::Imputed => "imputed",
            EstimateStatus::Unknown => "unknown",
        }
    }

    /// Estimated or imputed: usable as a graph node.
    pub fn is_known(&self) -> bool {
        !matches!(self, EstimateStatus::Unknown)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionEstimate {
    pub grid: GridId,
    pub window: i64,
    pub penetration: Option<f64>,
    pub total_time: Option<f64>,
    pub total_distance: Option<f64>,
    pub density: Option<f64>,
    pub flow: Option<f64>,
    pub speed: Option<f64>,
    pub status: EstimateStatus,
}

impl FusionEstimate {
    fn unknown(grid: GridId, window: i64) -> Self {
        Self {
            grid,
            window,
            penetration: None,
            total_time: None,
            total_distance: None,
            density: None,
            flow: None,
            speed: None,
            status: EstimateStatus::Unknown,
        }
    }

    fn estimated(grid: GridId, window: i64, p: Option<f64>, e: EdieEstimate) -> Self {
        Self {
            grid,
            window,
            penetration: p,
            total_time: Some(e.total_time),
            total_distance: Some(e.total_distance),
            density: Some(e.density),
            flow: Some(e.flow),
            speed: e.speed,
            status: EstimateStatus::Estimated,
        }
    }
}

/// Estimates for every (grid, window), ordered by grid then window.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTable {
    pub windowing: Windowing,
    pub windows: Vec<i64>,
    entries: BTreeMap<(GridId, i64), FusionEstimate>,
}

impl EstimateTable {
    pub fn get(&self, grid: GridId, window: i64) -> Option<&FusionEstimate> {
        self.entries.get(&(grid, window))
    }

    pub fn iter(&self) -> impl Iterator<Item = &FusionEstimate> {
        self.entries.values()
    }

    pub fn in_window(&self, window: i64) -> impl Iterator<Item = &FusionEstimate> {
        self.entries.values().filter(move |e| e.window == window)
    }

    /// Known densities of one window keyed by grid.
    pub fn densities(&self, window: i64) -> BTreeMap<GridId, f64> {
        self.in_window(window)
            .filter(|e| e.status.is_known())
            .filter_map(|e| e.density.map(|k| (e.grid, k)))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
        w.write_record(["grid_id", "window_start_s", "p", "T", "D", "K", "Q", "V", "status"])
            .map_err(std::io::Error::other)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in self.entries.values() {
            w.write_record([
                e.grid.to_string(),
                self.windowing.start(e.window).to_string(),
                opt(e.penetration),
                opt(e.total_time),
                opt(e.total_distance),
                opt(e.density),
                opt(e.flow),
                opt(e.speed),
                e.status.as_str().to_string(),
            ])
            .map_err(std::io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, windowing: Windowing) -> Result<Self, IngestError> {
        #[derive(Deserialize)]
        struct Row {
            grid_id: u32,
            window_start_s: f64,
            p: Option<f64>,
            #[serde(rename = "T")]
            t: Option<f64>,
            #[serde(rename = "D")]
            d: Option<f64>,
            #[serde(rename = "K")]
            k: Option<f64>,
            #[serde(rename = "Q")]
            q: Option<f64>,
            #[serde(rename = "V")]
            v: Option<f64>,
            status: EstimateStatus,
        }
        let file = std::fs::File::open(path)
            .map_err(|_| IngestError::MissingFile(ESTIMATES_FILE.into()))?;
        let mut entries = BTreeMap::new();
        let mut windows = Vec::new();
        for (k, row) in csv::Reader::from_reader(file).deserialize::<Row>().enumerate() {
            let schema = |column: &str, message: String| IngestError::SchemaError {
                file: ESTIMATES_FILE.into(),
                line: k as u64 + 2,
                column: column.into(),
                message,
            };
            let row = row.map_err(|e| schema("", e.to_string()))?;
            let window = windowing
                .aligned_index(row.window_start_s)
                .ok_or_else(|| schema("window_start_s", "not aligned to delta_t_s".into()))?;
            windows.push(window);
            let grid = GridId(row.grid_id);
            entries.insert(
                (grid, window),
                FusionEstimate {
                    grid,
                    window,
                    penetration: row.p,
                    total_time: row.t,
                    total_distance: row.d,
                    density: row.k,
                    flow: row.q,
                    speed: row.v,
                    status: row.status,
                },
            );
        }
        windows.sort();
        windows.dedup();
        Ok(Self {
            windowing,
            windows,
            entries,
        })
    }
}

fn grid_detectors(dataset: &Dataset, gridset: &GridSet) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); gridset.len()];
    for (d, det) in dataset.detectors.iter().enumerate() {
        if let Some(g) = gridset.link_grid[det.link] {
            out[g.0 as usize].push(d);
        }
    }
    out
}

/// Estimates every (grid, window) from the dataset's probe trajectories and
/// loop counts, then imputes data-void grids from their neighbors.
pub fn estimate_all(dataset: &Dataset, gridset: &GridSet, config: &FusionConfig) -> EstimateTable {
    let observations = Observations::from_dataset(dataset, gridset);
    estimate_from_observations(dataset, gridset, &grid_adjacency(gridset), &observations, config)
}

/// As [`estimate_all`], with probe observations supplied by the caller.
/// Only the dataset's network, detectors and counts are read.
pub fn estimate_from_observations(
    dataset: &Dataset,
    gridset: &GridSet,
    adjacency: &Adjacency,
    observations: &Observations,
    config: &FusionConfig,
) -> EstimateTable {
    let windowing = dataset.windowing;
    let detectors_of = grid_detectors(dataset, gridset);
    let det_grid: Vec<Option<GridId>> = dataset
        .detectors
        .iter()
        .map(|d| gridset.link_grid[d.link])
        .collect();

    let windows: Vec<i64> = {
        let seg = observations.segments.iter().map(|s| s.window);
        let cnt = dataset.counts.keys().map(|&(_, w)| w);
        let all: Vec<i64> = seg.chain(cnt).collect();
        match (all.iter().min(), all.iter().max()) {
            (Some(&lo), Some(&hi)) => (lo..=hi).collect(),
            _ => Vec::new(),
        }
    };

    let mut segs_by_cell: HashMap<(GridId, i64), Vec<ClippedSegment>> = HashMap::new();
    for s in &observations.segments {
        segs_by_cell.entry((s.grid, s.window)).or_default().push(*s);
    }
    let mut crossings_by_cell: HashMap<(GridId, i64), Vec<Crossing>> = HashMap::new();
    for c in &observations.crossings {
        if let Some(g) = det_grid[c.detector] {
            crossings_by_cell.entry((g, c.window)).or_default().push(*c);
        }
    }

    let mut entries = BTreeMap::new();
    for grid in &gridset.grids {
        for &w in &windows {
            let key = (grid.id, w);
            let estimate = estimate_cell(
                grid,
                w,
                segs_by_cell.get(&key).map(Vec::as_slice).unwrap_or(&[]),
                crossings_by_cell.get(&key).map(Vec::as_slice).unwrap_or(&[]),
                &detectors_of[grid.id.0 as usize],
                &dataset.counts,
                windowing.delta_t,
                config,
            );
            entries.insert(key, estimate);
        }
    }
    impute_from_neighbors(&mut entries, gridset, adjacency);
    EstimateTable {
        windowing,
        windows,
        entries,
    }
}

#[allow(clippy::too_many_arguments)]
fn estimate_cell(
    grid: &Grid,
    window: i64,
    segments: &[ClippedSegment],
    crossings: &[Crossing],
    detectors: &[usize],
    counts: &BTreeMap<(usize, i64), u64>,
    delta_t: f64,
    config: &FusionConfig,
) -> FusionEstimate {
    let l = grid.total_link_length;
    if l <= 0.0 {
        return FusionEstimate::unknown(grid.id, window);
    }
    let records: Vec<(usize, u64)> = detectors
        .iter()
        .filter_map(|&d| counts.get(&(d, window)).map(|&n| (d, n)))
        .collect();

    let mut vehicles: Vec<usize> = segments
        .iter()
        .map(|s| s.vehicle)
        .chain(crossings.iter().map(|c| c.vehicle))
        .collect();
    vehicles.sort_unstable();
    vehicles.dedup();

    if vehicles.is_empty() {
        // Detectors that counted nobody confirm an empty cell.
        if !records.is_empty() && records.iter().all(|&(_, n)| n == 0) {
            let e = EdieEstimate::from_totals(0.0, 0.0, l, delta_t);
            return FusionEstimate::estimated(grid.id, window, None, e);
        }
        return FusionEstimate::unknown(grid.id, window);
    }

    let included: Vec<(usize, u64)> = records.into_iter().filter(|&(_, n)| n > 0).collect();
    if included.is_empty() {
        return FusionEstimate::unknown(grid.id, window);
    }
    let det_ids: Vec<usize> = included.iter().map(|&(d, _)| d).collect();
    let det_counts: Vec<Option<u64>> = included.iter().map(|&(_, n)| Some(n)).collect();

    let m = membership(&vehicles, &det_ids, crossings, window);
    let pen = penetration(&m, &det_counts).expect("at least one detector column");
    let w = weights(&m);

    let mut times = vec![0.0; vehicles.len()];
    let mut dists = vec![0.0; vehicles.len()];
    for s in segments {
        let i = vehicles.binary_search(&s.vehicle).expect("segment vehicle is a row");
        times[i] += s.time;
        dists[i] += s.distance;
    }

    let has_hits = (0..m.n_rows()).any(|i| m.row_sum(i) > 0);
    if !has_hits {
        return match pen.grid_rate {
            Some(p) if p > 0.0 => {
                let travel = dists.iter().copied().zip(times.iter().copied());
                let e = edie_single(p, travel, l, delta_t).expect("rate in (0, 1]");
                FusionEstimate::estimated(grid.id, window, Some(p), e)
            }
            _ => FusionEstimate::unknown(grid.id, window),
        };
    }

    let mut total_time = fused_total(&m, &w, &pen.detectors, &times).expect("included detectors");
    let mut total_distance = fused_total(&m, &w, &pen.detectors, &dists).expect("included detectors");
    if config.use_grid_p_for_orphans {
        let p = pen.grid_rate.expect("passes imply counts");
        for i in (0..m.n_rows()).filter(|&i| m.row_sum(i) == 0) {
            total_time += times[i] / p;
            total_distance += dists[i] / p;
        }
    }
    let e = EdieEstimate::from_totals(total_time, total_distance, l, delta_t);
    FusionEstimate::estimated(grid.id, window, pen.grid_rate, e)
}

/// One pass: unknown grids with road length take the mean density of their
/// estimated (not imputed) rook neighbors.
fn impute_from_neighbors(
    entries: &mut BTreeMap<(GridId, i64), FusionEstimate>,
    gridset: &GridSet,
    adjacency: &Adjacency,
) {
    let mut imputed = Vec::new();
    for (&(grid, window), e) in entries.iter() {
        if e.status != EstimateStatus::Unknown || gridset.grid(grid).total_link_length <= 0.0 {
            continue;
        }
        let neighbor_k: Vec<f64> = adjacency
            .neighbors(grid)
            .iter()
            .filter_map(|&n| entries.get(&(n, window)))
            .filter(|n| n.status == EstimateStatus::Estimated)
            .filter_map(|n| n.density)
            .collect();
        if !neighbor_k.is_empty() {
            let k = neighbor_k.iter().sum::<f64>() / neighbor_k.len() as f64;
            imputed.push(((grid, window), k));
        }
    }
    for (key, k) in imputed {
        let e = entries.get_mut(&key).expect("key from same map");
        e.density = Some(k);
        e.status = EstimateStatus::Imputed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridding::CellRect;

    fn matrix(rows: &[&[u8]]) -> MembershipMatrix {
        let n_cols = rows.first().map_or(0, |r| r.len());
        MembershipMatrix::from_rows(
            (0..rows.len()).collect(),
            (0..n_cols).collect(),
            rows.iter().map(|r| r.iter().map(|&x| x == 1).collect()).collect(),
        )
    }

    #[test]
    fn weights_split_evenly_over_hits() {
        let m = matrix(&[&[1, 1], &[0, 0], &[0, 1]]);
        let w = weights(&m);
        assert_eq!(w[0].weights, vec![0.5, 0.5]);
        assert_eq!(w[1].weights, vec![0.0, 0.0]);
        assert_eq!(w[2].weights, vec![0.0, 1.0]);
    }

    #[test]
    fn single_detector_rate() {
        let m = matrix(&[&[1], &[1], &[1], &[1], &[1]]);
        let pen = penetration(&m, &[Some(20)]).unwrap();
        assert_eq!(pen.detectors[0].penetration, Some(0.25));
        assert_eq!(pen.grid_rate, Some(0.25));
    }

    #[test]
    fn grid_rate_pools_detectors() {
        let mut rows = vec![vec![false, false]; 15];
        for r in rows.iter_mut().take(5) {
            r[0] = true;
        }
        for r in rows.iter_mut().skip(5) {
            r[1] = true;
        }
        let m = MembershipMatrix::from_rows((0..15).collect(), vec![0, 1], rows);
        let pen = penetration(&m, &[Some(20), Some(30)]).unwrap();
        assert_eq!(pen.grid_rate, Some(15.0 / 50.0));
        assert_eq!(pen.grid_rate, Some(0.3));
    }

    #[test]
    fn rate_clamped_when_probes_exceed_count() {
        let m = matrix(&[&[1u8] as &[u8]; 8]);
        let pen = penetration(&m, &[Some(5)]).unwrap();
        assert_eq!(pen.detectors[0].penetration, Some(1.0));
        assert_eq!(pen.grid_rate, Some(1.0));
    }

    #[test]
    fn missing_and_zero_counts_are_excluded() {
        let m = matrix(&[&[1, 0, 0]]);
        let pen = penetration(&m, &[Some(4), None, Some(0)]).unwrap();
        assert_eq!(pen.detectors[1].penetration, None);
        assert_eq!(pen.detectors[2].penetration, None);
        assert_eq!(pen.grid_rate, Some(0.25));
        let empty = MembershipMatrix::from_rows(vec![0], vec![], vec![vec![]]);
        assert_eq!(penetration(&empty, &[]), Err(FusionError::NoDetectorsInGrid));
    }

    #[test]
    fn edie_single_direct_evaluation() {
        let e = edie_single(0.5, [(500.0, 30.0), (400.0, 60.0)], 1000.0, 60.0).unwrap();
        assert_eq!(e.total_time, 180.0);
        assert_eq!(e.total_distance, 1800.0);
        assert!((e.density - 0.003).abs() < 1e-15);
        assert!((e.flow - 0.03).abs() < 1e-15);
        assert_eq!(e.speed, Some(10.0));
        // V = Σd/Σt = 900/90
        assert_eq!(e.speed.unwrap(), 900.0 / 90.0);
    }

    #[test]
    fn edie_single_full_penetration_is_raw_sum() {
        let e = edie_single(1.0, [(100.0, 10.0), (250.0, 20.0)], 500.0, 60.0).unwrap();
        assert_eq!(e.total_time, 30.0);
        assert_eq!(e.total_distance, 350.0);
    }

    #[test]
    fn edie_single_empty_and_invalid() {
        let e = edie_single(0.3, [], 100.0, 60.0).unwrap();
        assert_eq!((e.total_time, e.total_distance, e.density, e.flow), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(e.speed, None);
        assert_eq!(edie_single(0.0, [], 1.0, 1.0), Err(FusionError::InvalidRate(0.0)));
        assert_eq!(edie_single(1.5, [], 1.0, 1.0), Err(FusionError::InvalidRate(1.5)));
    }

    #[test]
    fn fused_density_single_detector_reduces_to_single_rate() {
        let m = matrix(&[&[1], &[1], &[1]]);
        let pen = penetration(&m, &[Some(12)]).unwrap();
        assert_eq!(pen.detectors[0].penetration, Some(0.25));
        let k = fused_density(&m, &weights(&m), &pen.detectors, &[10.0, 20.0, 30.0], 1000.0, 300.0).unwrap();
        assert!((k - 8e-4).abs() < 1e-18);
        let e = edie_single(0.25, [(0.0, 10.0), (0.0, 20.0), (0.0, 30.0)], 1000.0, 300.0).unwrap();
        assert!((k - e.density).abs() <= 1e-12 * e.density);
    }

    /// Literal term-by-term evaluation of the fused sum over (i, j) pairs.
    fn enumerate_fused(phi: &[&[u8]], t: &[f64], p: &[f64], l: f64, dt: f64) -> f64 {
        let mut k = 0.0;
        for (j, &pj) in p.iter().enumerate() {
            for (i, row) in phi.iter().enumerate() {
                let hits: u8 = row.iter().sum();
                if row[j] == 1 {
                    let w = row[j] as f64 / hits as f64;
                    k += w * t[i] / (pj * l * dt);
                }
            }
        }
        k
    }

    #[test]
    fn fused_density_two_detectors_matches_enumeration() {
        // Vehicle A passes both detectors (t=40), B passes detector 1 (t=20).
        let phi: [&[u8]; 2] = [&[1, 1], &[1, 0]];
        let oracle = enumerate_fused(&phi, &[40.0, 20.0], &[0.5, 0.25], 1000.0, 100.0);
        // 0.5·40/0.5 + 20/0.5 + 0.5·40/0.25 = 40 + 40 + 80 = 160 veh·s
        assert!((oracle - 160.0 / 1e5).abs() < 1e-18);

        let m = matrix(&phi);
        let stats = vec![
            DetectorStats { detector: 0, probe_passes: 2, loop_count: Some(4), penetration: Some(0.5) },
            DetectorStats { detector: 1, probe_passes: 1, loop_count: Some(4), penetration: Some(0.25) },
        ];
        let k = fused_density(&m, &weights(&m), &stats, &[40.0, 20.0], 1000.0, 100.0).unwrap();
        assert!((k - 1.6e-3).abs() < 1e-15);
    }

    #[test]
    fn fused_density_zero_probes_is_zero() {
        let m = MembershipMatrix::from_rows(vec![], vec![0], vec![]);
        let pen = penetration(&m, &[Some(10)]).unwrap();
        assert_eq!(pen.grid_rate, Some(0.0));
        let k = fused_density(&m, &weights(&m), &pen.detectors, &[], 100.0, 60.0).unwrap();
        assert_eq!(k, 0.0);
    }

    #[test]
    fn fused_density_requires_an_included_detector() {
        let m = matrix(&[&[1]]);
        let pen = penetration(&m, &[None]).unwrap();
        assert_eq!(
            fused_density(&m, &weights(&m), &pen.detectors, &[5.0], 1.0, 1.0),
            Err(FusionError::AllDetectorsExcluded)
        );
    }

    fn grid_at(id: u32, length: f64) -> Grid {
        Grid {
            id: GridId(id),
            taz: 0,
            row: 0,
            col: id as usize,
            rect: CellRect { x_min: 0.0, y_min: 0.0, x_max: 1.0, y_max: 1.0 },
            links: vec![],
            total_link_length: length,
        }
    }

    #[test]
    fn imputation_uses_mean_of_estimated_neighbors() {
        let grids: Vec<Grid> = (0..6).map(|i| grid_at(i, if i == 5 { 0.0 } else { 100.0 })).collect();
        let gridset = GridSet { grids, target_counts: vec![6], link_grid: vec![] };
        // Grid 0 surrounded by 1..=4; grid 5 has no roads.
        let adjacency = Adjacency::from_lists(vec![
            vec![GridId(1), GridId(2), GridId(3), GridId(4)],
            vec![GridId(0)],
            vec![GridId(0)],
            vec![GridId(0)],
            vec![GridId(0), GridId(5)],
            vec![GridId(4)],
        ]);
        let mut entries = BTreeMap::new();
        entries.insert((GridId(0), 0), FusionEstimate::unknown(GridId(0), 0));
        for (i, k) in [(1, 2e-3), (2, 4e-3), (3, 6e-3), (4, 8e-3)] {
            let e = EdieEstimate::from_totals(k * 100.0 * 60.0, 0.0, 100.0, 60.0);
            entries.insert((GridId(i), 0), FusionEstimate::estimated(GridId(i), 0, Some(1.0), e));
        }
        entries.insert((GridId(5), 0), FusionEstimate::unknown(GridId(5), 0));
        impute_from_neighbors(&mut entries, &gridset, &adjacency);
        let e = entries[&(GridId(0), 0)];
        assert_eq!(e.status, EstimateStatus::Imputed);
        assert!((e.density.unwrap() - 5e-3).abs() < 1e-15);
        assert_eq!(entries[&(GridId(5), 0)].status, EstimateStatus::Unknown);
    }

    #[test]
    fn imputation_needs_an_estimated_neighbor() {
        let gridset = GridSet { grids: vec![grid_at(0, 10.0), grid_at(1, 10.0)], target_counts: vec![2], link_grid: vec![] };
        let adjacency = Adjacency::from_lists(vec![vec![GridId(1)], vec![GridId(0)]]);
        let mut entries = BTreeMap::new();
        entries.insert((GridId(0), 0), FusionEstimate::unknown(GridId(0), 0));
        entries.insert((GridId(1), 0), FusionEstimate::unknown(GridId(1), 0));
        impute_from_neighbors(&mut entries, &gridset, &adjacency);
        assert!(entries.values().all(|e| e.status == EstimateStatus::Unknown));
    }
}

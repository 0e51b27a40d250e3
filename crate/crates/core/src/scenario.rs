//! Seeded synthetic scenarios with known ground truth.
//!
//! A square-cell lattice road network is populated by random-walking
//! vehicles whose link speed depends on the regime the link lies in:
//! `v = v_f · max(0.1, 1 − k_true / 0.15)`. The regime's `k_true` only
//! shapes speeds; the realized densities reported as ground truth are
//! measured from the full population with the same clipping code as the
//! estimator.
//!
//! Three independent ChaCha streams drive the walks, detector placement and
//! probe selection, so the vehicle population is the same for every probe
//! rate and detector fraction under a given seed.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::{detector_crossings, edie_single, Observations};
use crate::gridding::{build_grids, GridId, GridSet};
use crate::ingest::{
    CountRecord, Dataset, Detector, IngestConfig, IngestError, Link, Point, Taz, Trajectory,
    TrajectoryPoint, Windowing,
};

pub const TRUTH_FILE: &str = "truth.csv";

/// Jam density of the speed-density coupling (veh/m).
pub const K_JAM: f64 = 0.15;

const WALK_STREAM: u64 = 0;
const DETECTOR_STREAM: u64 = 1;
const PROBE_STREAM: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("InvalidConfig:{0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidConfig(msg.into())
}

/// A rectangle of lattice cells sharing one traffic regime. Rectangles with
/// the same `label` form one true region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regime {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    pub k_true: f64,
    pub v_f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Regime {
    fn contains(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.rows).contains(&row) && (self.col..self.col + self.cols).contains(&col)
    }

    pub fn speed(&self) -> f64 {
        self.v_f * (1.0 - self.k_true / K_JAM).max(0.1)
    }
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub rng_seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub cell_size_m: f64,
    /// Links along each cell side; 1 gives one link per cell edge.
    #[serde(default = "default_one")]
    pub links_per_cell_side: usize,
    pub regimes: Vec<Regime>,
    pub n_vehicles: usize,
    pub probe_rate: f64,
    pub detector_link_fraction: f64,
    pub horizon_s: f64,
    pub delta_t_s: f64,
    /// Number of equal-width TAZ column bands.
    #[serde(default = "default_one")]
    pub taz_columns: usize,
    /// Probability of going straight on at a node when possible.
    #[serde(default = "default_straight_bias")]
    pub straight_bias: f64,
}

fn default_straight_bias() -> f64 {
    0.5
}

impl ScenarioConfig {
    /// One regime over the whole lattice.
    pub fn uniform(seed: u64, rows: usize, cols: usize, k_true: f64, v_f: f64) -> Self {
        Self {
            rng_seed: seed,
            rows,
            cols,
            cell_size_m: 500.0,
            links_per_cell_side: 1,
            regimes: vec![Regime {
                row: 0,
                col: 0,
                rows,
                cols,
                k_true,
                v_f,
                label: None,
            }],
            n_vehicles: 1000,
            probe_rate: 1.0,
            detector_link_fraction: 1.0,
            horizon_s: 3600.0,
            delta_t_s: 300.0,
            taz_columns: 1,
            straight_bias: default_straight_bias(),
        }
    }

    /// A congested square core inside a free-flowing periphery. The core
    /// spans the middle half of the lattice in each direction.
    pub fn core_periphery(seed: u64, size: usize, core: (f64, f64), periphery: (f64, f64)) -> Self {
        let lo = size / 4;
        let hi = size - lo;
        let ring = |row, col, rows, cols| Regime {
            row,
            col,
            rows,
            cols,
            k_true: periphery.0,
            v_f: periphery.1,
            label: Some("periphery".into()),
        };
        let regimes = vec![
            ring(0, 0, lo, size),
            ring(hi, 0, size - hi, size),
            ring(lo, 0, hi - lo, lo),
            ring(lo, hi, hi - lo, size - hi),
            Regime {
                row: lo,
                col: lo,
                rows: hi - lo,
                cols: hi - lo,
                k_true: core.0,
                v_f: core.1,
                label: Some("core".into()),
            },
        ];
        Self {
            regimes,
            ..Self::uniform(seed, size, size, periphery.0, periphery.1)
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid("lattice needs at least one row and column"));
        }
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(invalid(format!("cell_size_m {}", self.cell_size_m)));
        }
        if self.links_per_cell_side == 0 {
            return Err(invalid("links_per_cell_side must be at least 1"));
        }
        if self.n_vehicles == 0 {
            return Err(invalid("n_vehicles must be at least 1"));
        }
        if !(self.probe_rate > 0.0 && self.probe_rate <= 1.0) {
            return Err(invalid(format!("probe_rate {} not in (0, 1]", self.probe_rate)));
        }
        if !(0.0..=1.0).contains(&self.detector_link_fraction) {
            return Err(invalid(format!(
                "detector_link_fraction {} not in [0, 1]",
                self.detector_link_fraction
            )));
        }
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(invalid(format!("horizon_s {}", self.horizon_s)));
        }
        if !(self.delta_t_s > 0.0 && self.delta_t_s.is_finite()) {
            return Err(invalid(format!("delta_t_s {}", self.delta_t_s)));
        }
        if !(0.0..=1.0).contains(&self.straight_bias) {
            return Err(invalid(format!("straight_bias {} not in [0, 1]", self.straight_bias)));
        }
        if self.taz_columns == 0 || !self.cols.is_multiple_of(self.taz_columns) {
            return Err(invalid(format!("taz_columns {} must divide cols {}", self.taz_columns, self.cols)));
        }
        let mut labels: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
        for (i, r) in self.regimes.iter().enumerate() {
            if r.rows == 0 || r.cols == 0 || r.row + r.rows > self.rows || r.col + r.cols > self.cols {
                return Err(invalid(format!("regime {i} outside the lattice")));
            }
            if !(r.k_true >= 0.0 && r.k_true.is_finite()) || !(r.v_f > 0.0 && r.v_f.is_finite()) {
                return Err(invalid(format!("regime {i} has k_true {} v_f {}", r.k_true, r.v_f)));
            }
            if let Some(label) = &r.label {
                let prev = labels.entry(label).or_insert((r.k_true, r.v_f));
                if *prev != (r.k_true, r.v_f) {
                    return Err(invalid(format!("regimes labeled {label} disagree")));
                }
            }
        }
        for row in 0..self.rows {
            for col in 0..self.cols {
                match self.regimes.iter().filter(|r| r.contains(row, col)).count() {
                    1 => {}
                    0 => return Err(invalid(format!("cell ({row}, {col}) has no regime"))),
                    _ => return Err(invalid(format!("cell ({row}, {col}) has overlapping regimes"))),
                }
            }
        }
        Ok(())
    }

    fn regime_at(&self, row: usize, col: usize) -> usize {
        self.regimes
            .iter()
            .position(|r| r.contains(row, col))
            .expect("validated regimes tile the lattice")
    }

    /// Region id (from 1) of every regime: one per label, one per unlabeled
    /// regime, in order of first appearance.
    fn region_ids(&self) -> Vec<i64> {
        let mut seen: BTreeMap<&str, i64> = BTreeMap::new();
        let mut next = 0;
        self.regimes
            .iter()
            .map(|r| match &r.label {
                Some(l) => *seen.entry(l).or_insert_with(|| {
                    next += 1;
                    next
                }),
                None => {
                    next += 1;
                    next
                }
            })
            .collect()
    }

    /// Minimum grid size giving one grid per lattice cell.
    pub fn cell_area(&self) -> f64 {
        self.cell_size_m * self.cell_size_m
    }

    fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            delta_t_s: self.delta_t_s,
            ..IngestConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthCell {
    pub density: f64,
    pub flow: f64,
    pub speed: Option<f64>,
}

/// Full-population Edie state per (grid, window) and the regime-based
/// region of every grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub windowing: Windowing,
    pub windows: Vec<i64>,
    pub cells: BTreeMap<(GridId, i64), TruthCell>,
    pub regions: BTreeMap<GridId, i64>,
}

impl GroundTruth {
    pub fn density(&self, grid: GridId, window: i64) -> Option<f64> {
        self.cells.get(&(grid, window)).map(|c| c.density)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
        w.write_record(["grid_id", "window_start_s", "k_true", "region_true"])
            .map_err(std::io::Error::other)?;
        for (&(g, win), cell) in &self.cells {
            w.write_record([
                g.to_string(),
                self.windowing.start(win).to_string(),
                cell.density.to_string(),
                self.regions[&g].to_string(),
            ])
            .map_err(std::io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reference labels per window from `truth.csv`.
pub fn read_truth_regions(
    path: &Path,
    windowing: &Windowing,
) -> Result<BTreeMap<i64, BTreeMap<GridId, i64>>, IngestError> {
    #[derive(Deserialize)]
    struct Row {
        grid_id: u32,
        window_start_s: f64,
        #[allow(dead_code)]
        k_true: f64,
        region_true: i64,
    }
    let file = std::fs::File::open(path).map_err(|_| IngestError::MissingFile(TRUTH_FILE.into()))?;
    let mut out: BTreeMap<i64, BTreeMap<GridId, i64>> = BTreeMap::new();
    for (k, row) in csv::Reader::from_reader(file).deserialize::<Row>().enumerate() {
        let schema = |column: &str, message: String| IngestError::SchemaError {
            file: TRUTH_FILE.into(),
            line: k as u64 + 2,
            column: column.into(),
            message,
        };
        let row = row.map_err(|e| schema("", e.to_string()))?;
        let w = windowing
            .aligned_index(row.window_start_s)
            .ok_or_else(|| schema("window_start_s", "not aligned to delta_t_s".into()))?;
        out.entry(w).or_default().insert(GridId(row.grid_id), row.region_true);
    }
    Ok(out)
}

/// A generated scenario: the probe-visible dataset plus everything hidden
/// from the estimator.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    /// Network, detectors, full-population counts and probe trajectories.
    pub dataset: Dataset,
    /// Every vehicle's trajectory, probes included.
    pub population: Vec<Trajectory>,
    /// `probes[v]` marks population vehicle `v` as a probe.
    pub probes: Vec<bool>,
    /// One grid per lattice cell.
    pub gridset: GridSet,
    pub truth: GroundTruth,
}

impl Scenario {
    /// Clipped segments and detector passages of the whole population,
    /// indexed like [`Scenario::population`].
    pub fn population_observations(&self) -> Observations {
        let d = &self.dataset;
        Observations::from_trajectories(
            &d.links,
            &d.detectors,
            &d.detectors_by_link(),
            &self.gridset.link_grid,
            &self.population,
            &d.windowing,
        )
    }

    /// Writes the five input CSVs and `truth.csv`.
    pub fn write(&self, dir: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir)?;
        self.dataset.write_csvs(dir)?;
        self.truth.write_csv(&dir.join(TRUTH_FILE))
    }
}

struct Lattice {
    links: Vec<Link>,
    /// `(link, other node)` per node.
    incident: Vec<Vec<(usize, usize)>>,
    link_nodes: Vec<(usize, usize)>,
    nx: usize,
}

impl Lattice {
    /// The node straight ahead when moving `from → at`, if inside the lattice.
    fn straight_from(&self, from: usize, at: usize) -> Option<usize> {
        let ny = self.incident.len() / self.nx;
        let (fi, fj) = ((from % self.nx) as i64, (from / self.nx) as i64);
        let (ai, aj) = ((at % self.nx) as i64, (at / self.nx) as i64);
        let (i, j) = (2 * ai - fi, 2 * aj - fj);
        (i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < ny).then(|| j as usize * self.nx + i as usize)
    }
}

fn build_lattice(config: &ScenarioConfig) -> Lattice {
    let s = config.links_per_cell_side;
    let (nx, ny) = (config.cols * s + 1, config.rows * s + 1);
    let spacing = config.cell_size_m / s as f64;
    let node = |i: usize, j: usize| j * nx + i;
    let coord = |n: usize| Point::new((n % nx) as f64 * spacing, (n / nx) as f64 * spacing);

    let mut links = Vec::new();
    let mut link_nodes = Vec::new();
    let mut incident = vec![Vec::new(); nx * ny];
    let mut add = |a: usize, b: usize| {
        let id = links.len();
        let (from, to) = (coord(a), coord(b));
        links.push(Link {
            id: format!("l{id}"),
            from,
            to,
            length: from.distance(&to),
        });
        link_nodes.push((a, b));
        incident[a].push((id, b));
        incident[b].push((id, a));
    };
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                add(node(i, j), node(i + 1, j));
            }
            if j + 1 < ny {
                add(node(i, j), node(i, j + 1));
            }
        }
    }
    Lattice {
        links,
        incident,
        link_nodes,
        nx,
    }
}

fn build_tazs(config: &ScenarioConfig) -> Vec<Taz> {
    let band = config.cols / config.taz_columns;
    let h = config.rows as f64 * config.cell_size_m;
    (0..config.taz_columns)
        .map(|k| {
            let x0 = (k * band) as f64 * config.cell_size_m;
            let x1 = ((k + 1) * band) as f64 * config.cell_size_m;
            Taz {
                id: format!("taz{}", k + 1),
                polygon: vec![
                    Point::new(x0, 0.0),
                    Point::new(x1, 0.0),
                    Point::new(x1, h),
                    Point::new(x0, h),
                ],
            }
        })
        .collect()
}

fn cell_of(config: &ScenarioConfig, p: Point) -> (usize, usize) {
    let idx = |v: f64, n: usize| ((v / config.cell_size_m).floor().max(0.0) as usize).min(n - 1);
    (idx(p.y, config.rows), idx(p.x, config.cols))
}

/// Persistent random walks of one vehicle slot over the horizon: no
/// U-turns while another link is available, straight on with probability
/// `straight_bias`.
///
/// A vehicle never enters a link whose midpoint it already passed in the
/// window its next passage would fall in, so it passes any midpoint at most
/// once per window. A vehicle with every incident link blocked ends its trip
/// at the node and a new trip starts at a random node at the same instant,
/// keeping the number of vehicles on the network constant. Trips start at
/// nodes drawn in proportion to the traversal time of their incident links,
/// which approximates the walk's equilibrium spread.
fn walk(
    rng: &mut ChaCha8Rng,
    lattice: &Lattice,
    speed: &[f64],
    horizon: f64,
    windowing: &Windowing,
    straight_bias: f64,
    start_nodes: &WeightedIndex<f64>,
) -> Vec<Vec<TrajectoryPoint>> {
    let links = &lattice.links;
    let entry_offset = |l: usize, n: usize| if lattice.link_nodes[l].0 == n { 0.0 } else { links[l].length };
    let passage_window = |l: usize, t: f64| windowing.index(t + 0.5 * (links[l].length / speed[l]));

    let mut trips = Vec::new();
    let mut t = 0.0;
    'trip: loop {
        let mut node = start_nodes.sample(rng);
        let mut points = Vec::new();
        let mut passed: Vec<(usize, i64)> = Vec::new();
        // (link arrived on, node offset on it, node it came from)
        let mut prev: Option<(usize, f64, usize)> = None;
        loop {
            let now = windowing.index(t);
            passed.retain(|&(_, w)| w >= now);
            let allowed = |l: usize| !passed.contains(&(l, passage_window(l, t)));
            let mut free: Vec<(usize, usize)> = lattice.incident[node]
                .iter()
                .copied()
                .filter(|&(l, _)| prev.is_none_or(|(back, _, _)| l != back) && allowed(l))
                .collect();
            if free.is_empty() {
                if let Some((back, _, from)) = prev {
                    if allowed(back) {
                        free.push((back, from));
                    }
                }
            }
            if free.is_empty() {
                let (arrived_on, node_offset, _) = prev.expect("a fresh trip has every link free");
                points.push(TrajectoryPoint {
                    timestamp: t,
                    link: arrived_on,
                    offset: node_offset,
                });
                trips.push(points);
                continue 'trip;
            }

            let straight = prev.and_then(|(_, _, from)| {
                let ahead = lattice.straight_from(from, node)?;
                free.iter().position(|&(_, n)| n == ahead)
            });
            let pick = match straight {
                Some(k) if free.len() == 1 => k,
                Some(k) => {
                    if rng.random_bool(straight_bias) {
                        k
                    } else {
                        let j = rng.random_range(0..free.len() - 1);
                        if j >= k {
                            j + 1
                        } else {
                            j
                        }
                    }
                }
                None => rng.random_range(0..free.len()),
            };
            let (l, next) = free[pick];
            let start = entry_offset(l, node);
            let end = links[l].length - start;
            points.push(TrajectoryPoint {
                timestamp: t,
                link: l,
                offset: start,
            });
            passed.push((l, passage_window(l, t)));
            let t_next = t + links[l].length / speed[l];
            if t_next >= horizon {
                let frac = (horizon - t) / (t_next - t);
                points.push(TrajectoryPoint {
                    timestamp: horizon,
                    link: l,
                    offset: start + (end - start) * frac,
                });
                trips.push(points);
                return trips;
            }
            prev = Some((l, end, node));
            node = next;
            t = t_next;
        }
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates a scenario. Identical configs give identical scenarios.
pub fn generate(config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let lattice = build_lattice(config);
    let tazs = build_tazs(config);
    let links = &lattice.links;
    let windowing = Windowing::new(config.delta_t_s);
    let n_windows = (config.horizon_s / config.delta_t_s).ceil() as i64;

    let speed: Vec<f64> = links
        .iter()
        .map(|l| {
            let (r, c) = cell_of(config, l.midpoint());
            config.regimes[config.regime_at(r, c)].speed()
        })
        .collect();

    let node_weights = lattice
        .incident
        .iter()
        .map(|inc| inc.iter().map(|&(l, _)| links[l].length / speed[l]).sum::<f64>());
    let start_nodes = WeightedIndex::new(node_weights).expect("lattice has links with positive length");
    let mut walk_rng = stream(config.rng_seed, WALK_STREAM);
    let population: Vec<Trajectory> = (0..config.n_vehicles)
        .flat_map(|v| {
            walk(&mut walk_rng, &lattice, &speed, config.horizon_s, &windowing, config.straight_bias, &start_nodes)
                .into_iter()
                .enumerate()
                .map(move |(k, points)| Trajectory {
                    vehicle_id: format!("v{v}.{k}"),
                    points,
                })
        })
        .collect();

    let mut det_rng = stream(config.rng_seed, DETECTOR_STREAM);
    let n_det = (config.detector_link_fraction * links.len() as f64).round() as usize;
    let mut chosen = sample(&mut det_rng, links.len(), n_det).into_vec();
    chosen.sort_unstable();
    let detectors: Vec<Detector> = chosen
        .iter()
        .enumerate()
        .map(|(k, &l)| Detector {
            id: format!("d{k}"),
            link: l,
            offset: 0.5 * links[l].length,
        })
        .collect();

    let mut probe_rng = stream(config.rng_seed, PROBE_STREAM);
    let probes: Vec<bool> = (0..population.len())
        .map(|_| probe_rng.random_bool(config.probe_rate))
        .collect();

    let mut by_link = vec![Vec::new(); links.len()];
    for (d, det) in detectors.iter().enumerate() {
        by_link[det.link].push(d);
    }
    let mut tally: BTreeMap<(usize, i64), u64> = (0..detectors.len())
        .flat_map(|d| (0..n_windows).map(move |w| ((d, w), 0)))
        .collect();
    for (v, traj) in population.iter().enumerate() {
        for c in detector_crossings(v, links, &detectors, &by_link, traj, &windowing) {
            if let Some(n) = tally.get_mut(&(c.detector, c.window)) {
                *n += 1;
            }
        }
    }
    let counts: Vec<CountRecord> = tally
        .into_iter()
        .map(|((detector, w), count)| CountRecord {
            detector,
            window_start: windowing.start(w),
            count,
        })
        .collect();

    let probe_trajectories: Vec<Trajectory> = population
        .iter()
        .zip(&probes)
        .filter(|(_, &p)| p)
        .map(|(t, _)| t.clone())
        .collect();
    let dataset = Dataset::new(
        links.clone(),
        tazs,
        detectors,
        counts,
        probe_trajectories,
        &config.ingest_config(),
    )?;

    let gridset = build_grids(&dataset.tazs, &dataset.links, config.cell_area())
        .map_err(|e| invalid(e.to_string()))?;

    let mut scenario = Scenario {
        config: config.clone(),
        dataset,
        population,
        probes,
        gridset,
        truth: GroundTruth {
            windowing,
            windows: (0..n_windows).collect(),
            cells: BTreeMap::new(),
            regions: BTreeMap::new(),
        },
    };
    scenario.truth = ground_truth(&scenario, n_windows);
    Ok(scenario)
}

fn ground_truth(scenario: &Scenario, n_windows: i64) -> GroundTruth {
    let config = &scenario.config;
    let windowing = scenario.dataset.windowing;
    let region_of = config.region_ids();
    let regions: BTreeMap<GridId, i64> = scenario
        .gridset
        .grids
        .iter()
        .map(|g| {
            let (r, c) = cell_of(config, g.centroid());
            (g.id, region_of[config.regime_at(r, c)])
        })
        .collect();

    let obs = scenario.population_observations();
    let mut travel: BTreeMap<(GridId, i64), Vec<(f64, f64)>> = BTreeMap::new();
    for s in &obs.segments {
        travel.entry((s.grid, s.window)).or_default().push((s.distance, s.time));
    }
    let mut cells = BTreeMap::new();
    for g in &scenario.gridset.grids {
        if g.total_link_length <= 0.0 {
            continue;
        }
        for w in 0..n_windows {
            let dt = travel.get(&(g.id, w)).map(Vec::as_slice).unwrap_or(&[]);
            let e = edie_single(1.0, dt.iter().copied(), g.total_link_length, windowing.delta_t)
                .expect("full population rate is valid");
            cells.insert(
                (g.id, w),
                TruthCell {
                    density: e.density,
                    flow: e.flow,
                    speed: e.speed,
                },
            );
        }
    }
    GroundTruth {
        windowing,
        windows: (0..n_windows).collect(),
        cells,
        regions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            n_vehicles: 60,
            horizon_s: 900.0,
            ..ScenarioConfig::uniform(seed, 3, 3, 0.03, 12.0)
        }
    }

    #[test]
    fn lattice_counts() {
        let mut c = small(1);
        let l = build_lattice(&c);
        assert_eq!(l.links.len(), 2 * 3 * 4);
        c.links_per_cell_side = 2;
        assert_eq!(build_lattice(&c).links.len(), 2 * 6 * 7);
    }

    #[test]
    fn regimes_must_tile() {
        let mut c = small(1);
        c.regimes[0].rows = 2;
        assert!(matches!(c.validate(), Err(ScenarioError::InvalidConfig(_))));
        let mut c = small(1);
        c.regimes.push(c.regimes[0].clone());
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::core_periphery(1, 8, (0.08, 10.0), (0.02, 15.0));
        assert!(c.validate().is_ok());
        c.regimes[0].k_true = 0.03;
        assert!(c.validate().is_err());
    }

    #[test]
    fn core_periphery_has_two_regions() {
        let c = ScenarioConfig::core_periphery(1, 8, (0.08, 10.0), (0.02, 15.0));
        assert_eq!(c.region_ids(), vec![1, 1, 1, 1, 2]);
        assert_eq!(c.regime_at(4, 4), 4);
        assert_eq!(c.regime_at(0, 7), 0);
    }

    #[test]
    fn saturated_config_probes_everyone() {
        let s = generate(&small(3)).unwrap();
        assert!(s.probes.iter().all(|&p| p));
        assert_eq!(s.dataset.trajectories.len(), s.population.len());
        assert!(s.population.len() >= 60);
        assert_eq!(s.dataset.detectors.len(), s.dataset.links.len());
        assert_eq!(s.gridset.len(), 9);
    }

    #[test]
    fn no_detectors_means_no_counts() {
        let c = ScenarioConfig {
            detector_link_fraction: 0.0,
            ..small(3)
        };
        let s = generate(&c).unwrap();
        assert!(s.dataset.detectors.is_empty());
        assert!(s.dataset.counts.is_empty());
    }

    #[test]
    fn walks_respect_horizon_and_pass_each_midpoint_once_per_window() {
        let c = small(9);
        let s = generate(&c).unwrap();
        let obs = s.population_observations();
        let mut seen = std::collections::BTreeSet::new();
        for cr in &obs.crossings {
            assert!(seen.insert((cr.vehicle, cr.detector, cr.window)), "{cr:?}");
        }
        let mut ends = BTreeMap::new();
        for traj in &s.population {
            assert!(traj.points.windows(2).all(|p| p[1].timestamp > p[0].timestamp));
            let slot = traj.vehicle_id.split('.').next().unwrap();
            ends.insert(slot, traj.points.last().unwrap().timestamp);
        }
        assert_eq!(ends.len(), c.n_vehicles);
        assert!(ends.values().all(|&t| t == c.horizon_s));
    }

    #[test]
    fn straight_ahead_inside_lattice_only() {
        let l = build_lattice(&small(1));
        // 4×4 nodes: 0 → 1 continues to 2; 2 → 3 runs off the edge.
        assert_eq!(l.straight_from(0, 1), Some(2));
        assert_eq!(l.straight_from(2, 3), None);
        assert_eq!(l.straight_from(5, 9), Some(13));
    }

    #[test]
    fn populations_do_not_depend_on_probe_rate() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&ScenarioConfig {
            probe_rate: 0.3,
            detector_link_fraction: 0.4,
            ..small(5)
        })
        .unwrap();
        assert_eq!(a.population, b.population);
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn counts_match_replay() {
        let s = generate(&ScenarioConfig {
            detector_link_fraction: 0.5,
            probe_rate: 0.5,
            ..small(11)
        })
        .unwrap();
        let obs = s.population_observations();
        let mut replay: BTreeMap<(usize, i64), u64> = BTreeMap::new();
        for c in &obs.crossings {
            *replay.entry((c.detector, c.window)).or_default() += 1;
        }
        for (key, &n) in &s.dataset.counts {
            assert_eq!(replay.get(key).copied().unwrap_or(0), n);
        }
    }
}

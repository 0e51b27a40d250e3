//! Input data model, CSV parsing and space-time clipping of map-matched
//! trajectories.
//!
//! Five CSV files make up a [`Dataset`]:
//!
//! | file               | columns                                         |
//! |--------------------|-------------------------------------------------|
//! | `network.csv`      | `link_id,from_x,from_y,to_x,to_y,length_m`      |
//! | `tazs.csv`         | `taz_id,vertex_index,x,y`                       |
//! | `detectors.csv`    | `detector_id,link_id,offset_m`                  |
//! | `counts.csv`       | `detector_id,window_start_s,count`              |
//! | `trajectories.csv` | `vehicle_id,timestamp_s,link_id,offset_m`       |
//!
//! Trajectories are assumed to be map-matched already: every point names the
//! link it lies on and its offset (meters from the link's `from` end).

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use geo::{Area, LineString, Polygon, Validation};
use serde::{Deserialize, Serialize};

use crate::gridding::GridId;

pub const NETWORK_FILE: &str = "network.csv";
pub const TAZS_FILE: &str = "tazs.csv";
pub const DETECTORS_FILE: &str = "detectors.csv";
pub const COUNTS_FILE: &str = "counts.csv";
pub const TRAJECTORIES_FILE: &str = "trajectories.csv";

/// Relative tolerance between a link's declared length and its endpoint distance.
pub const LENGTH_TOLERANCE: f64 = 0.01;

/// Two link endpoints closer than this (meters) are the same node.
pub const NODE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("MissingFile:{0}")]
    MissingFile(String),
    #[error("SchemaError:{file}:{line}:{column}:{message}")]
    SchemaError {
        file: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("DanglingReference:{kind}:{id}")]
    DanglingReference { kind: &'static str, id: String },
    #[error("NonMonotoneTimestamps:{0}")]
    NonMonotoneTimestamps(String),
    #[error("DisconnectedTrajectory:{vehicle_id}:{timestamp}")]
    DisconnectedTrajectory { vehicle_id: String, timestamp: f64 },
    #[error("ImplausibleSpeed:{vehicle_id}:{timestamp}:{speed_mps}")]
    ImplausibleSpeed {
        vehicle_id: String,
        timestamp: f64,
        speed_mps: f64,
    },
    #[error("ConfigError:{0}")]
    Config(String),
    #[error("IoError:{0}")]
    Io(#[from] std::io::Error),
}

impl IngestError {
    fn schema(file: &str, line: u64, column: &str, message: impl Into<String>) -> Self {
        IngestError::SchemaError {
            file: file.to_string(),
            line,
            column: column.to_string(),
            message: message.into(),
        }
    }
}

/// Settings that affect parsing and validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub delta_t_s: f64,
    pub v_max_sanity_mps: f64,
    /// Accept declared link lengths that differ from the endpoint distance
    /// by more than [`LENGTH_TOLERANCE`].
    pub allow_length_override: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            delta_t_s: 300.0,
            v_max_sanity_mps: 70.0,
            allow_length_override: false,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.delta_t_s.is_finite() && self.delta_t_s > 0.0) {
            return Err(IngestError::Config(format!(
                "delta_t_s must be positive, got {}",
                self.delta_t_s
            )));
        }
        if !(self.v_max_sanity_mps > 0.0) {
            return Err(IngestError::Config(format!(
                "v_max_sanity_mps must be positive, got {}",
                self.v_max_sanity_mps
            )));
        }
        Ok(())
    }
}

/// Fixed-length time windows `[w·Δt, (w+1)·Δt)` anchored at epoch zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Windowing {
    pub delta_t: f64,
}

impl Windowing {
    pub fn new(delta_t: f64) -> Self {
        assert!(delta_t > 0.0, "window length must be positive");
        Self { delta_t }
    }

    pub fn index(&self, t: f64) -> i64 {
        (t / self.delta_t).floor() as i64
    }

    pub fn start(&self, window: i64) -> f64 {
        window as f64 * self.delta_t
    }

    /// Window index for a recorded window start, if it lies on a boundary.
    pub fn aligned_index(&self, window_start: f64) -> Option<i64> {
        let w = (window_start / self.delta_t).round();
        let tol = 1e-6 * self.delta_t.max(window_start.abs()).max(1.0);
        ((w * self.delta_t - window_start).abs() <= tol).then_some(w as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn same_node(&self, other: &Point) -> bool {
        self.distance(other) <= NODE_TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub id: String,
    pub from: Point,
    pub to: Point,
    pub length: f64,
}

impl Link {
    pub fn midpoint(&self) -> Point {
        Point::new(0.5 * (self.from.x + self.to.x), 0.5 * (self.from.y + self.to.y))
    }

    pub fn euclidean_length(&self) -> f64 {
        self.from.distance(&self.to)
    }
}

/// A traffic analysis zone: a simple polygon given as an open ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Taz {
    pub id: String,
    pub polygon: Vec<Point>,
}

impl Taz {
    pub fn to_polygon(&self) -> Polygon<f64> {
        let ring: Vec<(f64, f64)> = self.polygon.iter().map(|p| (p.x, p.y)).collect();
        Polygon::new(LineString::from(ring), vec![])
    }

    pub fn area(&self) -> f64 {
        self.to_polygon().unsigned_area()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub id: String,
    pub link: usize,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub timestamp: f64,
    pub link: usize,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vehicle_id: String,
    pub points: Vec<TrajectoryPoint>,
}

/// Distance traveled and time spent by one vehicle inside one grid during
/// one time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedSegment {
    pub vehicle: usize,
    pub grid: GridId,
    pub window: i64,
    pub distance: f64,
    pub time: f64,
}

/// Cross-referenced, validated input data. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub links: Vec<Link>,
    pub tazs: Vec<Taz>,
    pub detectors: Vec<Detector>,
    /// Loop counts keyed by (detector index, window index).
    pub counts: BTreeMap<(usize, i64), u64>,
    pub trajectories: Vec<Trajectory>,
    pub windowing: Windowing,
    link_index: HashMap<String, usize>,
    detector_index: HashMap<String, usize>,
}

/// Raw count row, before window alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub detector: usize,
    pub window_start: f64,
    pub count: u64,
}

impl Dataset {
    /// Validates and cross-references in-memory inputs.
    ///
    /// Used by [`parse_inputs`] and by generators that never touch disk.
    pub fn new(
        links: Vec<Link>,
        tazs: Vec<Taz>,
        detectors: Vec<Detector>,
        counts: Vec<CountRecord>,
        trajectories: Vec<Trajectory>,
        config: &IngestConfig,
    ) -> Result<Self, IngestError> {
        config.validate()?;
        let windowing = Windowing::new(config.delta_t_s);

        let mut link_index = HashMap::with_capacity(links.len());
        for (i, link) in links.iter().enumerate() {
            validate_link(link, config, i as u64 + 2)?;
            if link_index.insert(link.id.clone(), i).is_some() {
                return Err(IngestError::schema(
                    NETWORK_FILE,
                    i as u64 + 2,
                    "link_id",
                    format!("duplicate link_id {}", link.id),
                ));
            }
        }

        for taz in &tazs {
            validate_taz(taz)?;
        }

        let mut detector_index = HashMap::with_capacity(detectors.len());
        for (i, det) in detectors.iter().enumerate() {
            let line = i as u64 + 2;
            let link = links.get(det.link).ok_or_else(|| IngestError::DanglingReference {
                kind: "link",
                id: det.link.to_string(),
            })?;
            if !(det.offset >= 0.0 && det.offset <= link.length) {
                return Err(IngestError::schema(
                    DETECTORS_FILE,
                    line,
                    "offset_m",
                    format!("offset {} outside link {} of length {}", det.offset, link.id, link.length),
                ));
            }
            if detector_index.insert(det.id.clone(), i).is_some() {
                return Err(IngestError::schema(
                    DETECTORS_FILE,
                    line,
                    "detector_id",
                    format!("duplicate detector_id {}", det.id),
                ));
            }
        }

        let mut count_map = BTreeMap::new();
        for (i, rec) in counts.iter().enumerate() {
            let line = i as u64 + 2;
            if rec.detector >= detectors.len() {
                return Err(IngestError::DanglingReference {
                    kind: "detector",
                    id: rec.detector.to_string(),
                });
            }
            let window = windowing.aligned_index(rec.window_start).ok_or_else(|| {
                IngestError::schema(
                    COUNTS_FILE,
                    line,
                    "window_start_s",
                    format!("{} is not a multiple of delta_t_s={}", rec.window_start, config.delta_t_s),
                )
            })?;
            if count_map.insert((rec.detector, window), rec.count).is_some() {
                return Err(IngestError::schema(
                    COUNTS_FILE,
                    line,
                    "window_start_s",
                    format!(
                        "duplicate record for detector {} window {}",
                        detectors[rec.detector].id, rec.window_start
                    ),
                ));
            }
        }

        let mut seen_vehicles = HashMap::new();
        for traj in &trajectories {
            if seen_vehicles.insert(traj.vehicle_id.as_str(), ()).is_some() {
                return Err(IngestError::schema(
                    TRAJECTORIES_FILE,
                    0,
                    "vehicle_id",
                    format!("vehicle {} listed twice", traj.vehicle_id),
                ));
            }
            validate_trajectory(&links, traj, config)?;
        }

        Ok(Self {
            links,
            tazs,
            detectors,
            counts: count_map,
            trajectories,
            windowing,
            link_index,
            detector_index,
        })
    }

    pub fn link_by_id(&self, id: &str) -> Option<usize> {
        self.link_index.get(id).copied()
    }

    pub fn detector_by_id(&self, id: &str) -> Option<usize> {
        self.detector_index.get(id).copied()
    }

    /// Detector indices grouped by the link they sit on, offsets ascending.
    pub fn detectors_by_link(&self) -> Vec<Vec<usize>> {
        let mut by_link = vec![Vec::new(); self.links.len()];
        for (i, det) in self.detectors.iter().enumerate() {
            by_link[det.link].push(i);
        }
        for dets in &mut by_link {
            dets.sort_by(|&a, &b| {
                self.detectors[a]
                    .offset
                    .total_cmp(&self.detectors[b].offset)
                    .then(a.cmp(&b))
            });
        }
        by_link
    }

    /// Writes the five input files into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(NETWORK_FILE)).map_err(csv_io)?;
        for link in &self.links {
            w.serialize(LinkRow {
                link_id: link.id.clone(),
                from_x: link.from.x,
                from_y: link.from.y,
                to_x: link.to.x,
                to_y: link.to.y,
                length_m: Some(link.length),
            })
            .map_err(csv_io)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join(TAZS_FILE)).map_err(csv_io)?;
        for taz in &self.tazs {
            for (k, p) in taz.polygon.iter().enumerate() {
                w.serialize(TazRow {
                    taz_id: taz.id.clone(),
                    vertex_index: k as u64,
                    x: p.x,
                    y: p.y,
                })
                .map_err(csv_io)?;
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join(DETECTORS_FILE)).map_err(csv_io)?;
        w.write_record(["detector_id", "link_id", "offset_m"]).map_err(csv_io)?;
        for det in &self.detectors {
            w.write_record([
                det.id.as_str(),
                self.links[det.link].id.as_str(),
                &det.offset.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(dir.join(COUNTS_FILE)).map_err(csv_io)?;
        w.write_record(["detector_id", "window_start_s", "count"]).map_err(csv_io)?;
        for (&(det, window), &count) in &self.counts {
            w.write_record([
                self.detectors[det].id.as_str(),
                &self.windowing.start(window).to_string(),
                &count.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;

        write_trajectories(&dir.join(TRAJECTORIES_FILE), &self.links, &self.trajectories)
    }
}

pub(crate) fn write_trajectories(
    path: &Path,
    links: &[Link],
    trajectories: &[Trajectory],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["vehicle_id", "timestamp_s", "link_id", "offset_m"]).map_err(csv_io)?;
    for traj in trajectories {
        for p in &traj.points {
            w.write_record([
                traj.vehicle_id.as_str(),
                &p.timestamp.to_string(),
                links[p.link].id.as_str(),
                &p.offset.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> IngestError {
    IngestError::Io(std::io::Error::other(e))
}

fn validate_link(link: &Link, config: &IngestConfig, line: u64) -> Result<(), IngestError> {
    let coords = [link.from.x, link.from.y, link.to.x, link.to.y];
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(IngestError::schema(NETWORK_FILE, line, "from_x", "non-finite coordinate"));
    }
    if !(link.length.is_finite() && link.length > 0.0) {
        return Err(IngestError::schema(
            NETWORK_FILE,
            line,
            "length_m",
            format!("length must be positive, got {}", link.length),
        ));
    }
    let euclid = link.euclidean_length();
    if !config.allow_length_override && (link.length - euclid).abs() > LENGTH_TOLERANCE * euclid {
        return Err(IngestError::schema(
            NETWORK_FILE,
            line,
            "length_m",
            format!(
                "length {} differs from endpoint distance {} by more than 1%",
                link.length, euclid
            ),
        ));
    }
    Ok(())
}

fn validate_taz(taz: &Taz) -> Result<(), IngestError> {
    if taz.polygon.len() < 3 {
        return Err(IngestError::schema(
            TAZS_FILE,
            0,
            "vertex_index",
            format!("taz {} has fewer than 3 vertices", taz.id),
        ));
    }
    let polygon = taz.to_polygon();
    if !(polygon.unsigned_area() > 0.0) {
        return Err(IngestError::schema(
            TAZS_FILE,
            0,
            "x",
            format!("taz {} has zero area", taz.id),
        ));
    }
    if !polygon.is_valid() {
        return Err(IngestError::schema(
            TAZS_FILE,
            0,
            "x",
            format!("taz {} is not a simple polygon", taz.id),
        ));
    }
    Ok(())
}

fn validate_trajectory(
    links: &[Link],
    traj: &Trajectory,
    config: &IngestConfig,
) -> Result<(), IngestError> {
    for p in &traj.points {
        let link = links.get(p.link).ok_or_else(|| IngestError::DanglingReference {
            kind: "link",
            id: p.link.to_string(),
        })?;
        if !p.timestamp.is_finite() {
            return Err(IngestError::schema(TRAJECTORIES_FILE, 0, "timestamp_s", "non-finite timestamp"));
        }
        if !(p.offset >= 0.0 && p.offset <= link.length) {
            return Err(IngestError::schema(
                TRAJECTORIES_FILE,
                0,
                "offset_m",
                format!(
                    "vehicle {} offset {} outside link {}",
                    traj.vehicle_id, p.offset, link.id
                ),
            ));
        }
    }
    for pair in traj.points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b.timestamp <= a.timestamp {
            return Err(IngestError::NonMonotoneTimestamps(traj.vehicle_id.clone()));
        }
        let pieces = motion_pieces(links, &a, &b).ok_or_else(|| IngestError::DisconnectedTrajectory {
            vehicle_id: traj.vehicle_id.clone(),
            timestamp: b.timestamp,
        })?;
        let distance: f64 = pieces.iter().map(MotionPiece::distance).sum();
        let speed = distance / (b.timestamp - a.timestamp);
        if speed > config.v_max_sanity_mps {
            return Err(IngestError::ImplausibleSpeed {
                vehicle_id: traj.vehicle_id.clone(),
                timestamp: b.timestamp,
                speed_mps: speed,
            });
        }
    }
    Ok(())
}

/// Paths of the five input files inside one directory.
#[derive(Debug, Clone)]
pub struct InputPaths {
    pub network: PathBuf,
    pub tazs: PathBuf,
    pub detectors: PathBuf,
    pub counts: PathBuf,
    pub trajectories: PathBuf,
}

impl InputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            network: dir.join(NETWORK_FILE),
            tazs: dir.join(TAZS_FILE),
            detectors: dir.join(DETECTORS_FILE),
            counts: dir.join(COUNTS_FILE),
            trajectories: dir.join(TRAJECTORIES_FILE),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [
            &self.network,
            &self.tazs,
            &self.detectors,
            &self.counts,
            &self.trajectories,
        ]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkRow {
    link_id: String,
    from_x: f64,
    from_y: f64,
    to_x: f64,
    to_y: f64,
    /// Blank means "use the endpoint distance".
    length_m: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TazRow {
    taz_id: String,
    vertex_index: u64,
    x: f64,
    y: f64,
}

#[derive(Debug, Deserialize)]
struct DetectorRow {
    detector_id: String,
    link_id: String,
    offset_m: f64,
}

#[derive(Debug, Deserialize)]
struct CountRow {
    detector_id: String,
    window_start_s: f64,
    count: u64,
}

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    vehicle_id: String,
    timestamp_s: f64,
    link_id: String,
    offset_m: f64,
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads every row of `path`, checking the header against `expected`.
fn read_rows<T: serde::de::DeserializeOwned>(
    path: &Path,
    expected: &[&str],
) -> Result<Vec<(u64, T)>, IngestError> {
    let label = file_label(path);
    let file = File::open(path).map_err(|_| IngestError::MissingFile(label.clone()))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::schema(&label, 1, "", e.to_string()))?
        .clone();
    for col in expected {
        if !headers.iter().any(|h| h == *col) {
            return Err(IngestError::schema(&label, 1, col, "missing column"));
        }
    }
    let mut rows = Vec::new();
    for result in reader.deserialize::<T>() {
        match result {
            Ok(row) => rows.push((rows.len() as u64 + 2, row)),
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                let column = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err
                        .field()
                        .and_then(|f| headers.get(f as usize))
                        .unwrap_or("")
                        .to_string(),
                    _ => String::new(),
                };
                return Err(IngestError::schema(&label, line, &column, e.to_string()));
            }
        }
    }
    Ok(rows)
}

/// Loads the JSON ingest settings; unknown keys are ignored so one file can
/// carry the whole pipeline configuration.
pub fn load_config(path: &Path) -> Result<IngestConfig, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|_| IngestError::MissingFile(file_label(path)))?;
    let config: IngestConfig =
        serde_json::from_str(&text).map_err(|e| IngestError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Parses and cross-references the five input files.
pub fn parse_inputs(paths: &InputPaths, config: &IngestConfig) -> Result<Dataset, IngestError> {
    for path in paths.all() {
        if !path.is_file() {
            return Err(IngestError::MissingFile(file_label(path)));
        }
    }

    let link_rows: Vec<(u64, LinkRow)> = read_rows(
        &paths.network,
        &["link_id", "from_x", "from_y", "to_x", "to_y", "length_m"],
    )?;
    let mut links = Vec::with_capacity(link_rows.len());
    let mut link_ids = HashMap::new();
    for (line, row) in link_rows {
        let from = Point::new(row.from_x, row.from_y);
        let to = Point::new(row.to_x, row.to_y);
        let length = row.length_m.unwrap_or_else(|| from.distance(&to));
        if link_ids.insert(row.link_id.clone(), links.len()).is_some() {
            return Err(IngestError::schema(
                NETWORK_FILE,
                line,
                "link_id",
                format!("duplicate link_id {}", row.link_id),
            ));
        }
        let link = Link {
            id: row.link_id,
            from,
            to,
            length,
        };
        validate_link(&link, config, line)?;
        links.push(link);
    }

    let taz_rows: Vec<(u64, TazRow)> = read_rows(&paths.tazs, &["taz_id", "vertex_index", "x", "y"])?;
    let mut taz_order: Vec<String> = Vec::new();
    let mut taz_vertices: HashMap<String, Vec<(u64, u64, Point)>> = HashMap::new();
    for (line, row) in taz_rows {
        let entry = taz_vertices.entry(row.taz_id.clone()).or_insert_with(|| {
            taz_order.push(row.taz_id.clone());
            Vec::new()
        });
        entry.push((row.vertex_index, line, Point::new(row.x, row.y)));
    }
    let mut tazs = Vec::with_capacity(taz_order.len());
    for id in taz_order {
        let mut vertices = taz_vertices.remove(&id).unwrap_or_default();
        vertices.sort_by_key(|v| v.0);
        for (k, (index, line, _)) in vertices.iter().enumerate() {
            if *index != k as u64 {
                return Err(IngestError::schema(
                    TAZS_FILE,
                    *line,
                    "vertex_index",
                    format!("taz {id} vertex indices must be 0..n without gaps"),
                ));
            }
        }
        let mut polygon: Vec<Point> = vertices.into_iter().map(|v| v.2).collect();
        if polygon.len() > 1 && polygon.first() == polygon.last() {
            polygon.pop();
        }
        tazs.push(Taz { id, polygon });
    }

    let det_rows: Vec<(u64, DetectorRow)> =
        read_rows(&paths.detectors, &["detector_id", "link_id", "offset_m"])?;
    let mut detectors = Vec::with_capacity(det_rows.len());
    let mut det_ids = HashMap::new();
    for (_, row) in det_rows {
        let link = *link_ids.get(&row.link_id).ok_or_else(|| IngestError::DanglingReference {
            kind: "link",
            id: row.link_id.clone(),
        })?;
        det_ids.insert(row.detector_id.clone(), detectors.len());
        detectors.push(Detector {
            id: row.detector_id,
            link,
            offset: row.offset_m,
        });
    }

    let count_rows: Vec<(u64, CountRow)> =
        read_rows(&paths.counts, &["detector_id", "window_start_s", "count"])?;
    let mut counts = Vec::with_capacity(count_rows.len());
    for (_, row) in count_rows {
        let detector = *det_ids.get(&row.detector_id).ok_or_else(|| IngestError::DanglingReference {
            kind: "detector",
            id: row.detector_id.clone(),
        })?;
        counts.push(CountRecord {
            detector,
            window_start: row.window_start_s,
            count: row.count,
        });
    }

    let traj_rows: Vec<(u64, TrajectoryRow)> = read_rows(
        &paths.trajectories,
        &["vehicle_id", "timestamp_s", "link_id", "offset_m"],
    )?;
    let mut vehicle_slot: HashMap<String, usize> = HashMap::new();
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (_, row) in traj_rows {
        let link = *link_ids.get(&row.link_id).ok_or_else(|| IngestError::DanglingReference {
            kind: "link",
            id: row.link_id.clone(),
        })?;
        let slot = *vehicle_slot.entry(row.vehicle_id.clone()).or_insert_with(|| {
            trajectories.push(Trajectory {
                vehicle_id: row.vehicle_id.clone(),
                points: Vec::new(),
            });
            trajectories.len() - 1
        });
        trajectories[slot].points.push(TrajectoryPoint {
            timestamp: row.timestamp_s,
            link,
            offset: row.offset_m,
        });
    }

    Dataset::new(links, tazs, detectors, counts, trajectories, config)
}

/// Straight-line motion along one link between two instants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct MotionPiece {
    pub link: usize,
    pub from_offset: f64,
    pub to_offset: f64,
    pub t0: f64,
    pub t1: f64,
}

impl MotionPiece {
    pub fn distance(&self) -> f64 {
        (self.to_offset - self.from_offset).abs()
    }

    /// Time at which this piece passes `offset`, if it does.
    ///
    /// A crossing counts when the position reaches `offset` strictly after the
    /// piece starts, so a vehicle resting exactly on a detector between two
    /// pieces is counted once.
    pub fn crossing_time(&self, offset: f64) -> Option<f64> {
        let (a, b) = (self.from_offset, self.to_offset);
        let crosses = (a < offset && offset <= b) || (b <= offset && offset < a);
        crosses.then(|| self.t0 + (offset - a) / (b - a) * (self.t1 - self.t0))
    }
}

/// Splits the motion between two consecutive points into per-link pieces.
///
/// Points on the same link give one piece. Points on links sharing a node
/// give two pieces that meet at the node, with elapsed time shared out in
/// proportion to distance. Returns `None` when the links share no node.
pub(crate) fn motion_pieces(
    links: &[Link],
    a: &TrajectoryPoint,
    b: &TrajectoryPoint,
) -> Option<Vec<MotionPiece>> {
    if a.link == b.link {
        return Some(vec![MotionPiece {
            link: a.link,
            from_offset: a.offset,
            to_offset: b.offset,
            t0: a.timestamp,
            t1: b.timestamp,
        }]);
    }
    let (la, lb) = (&links[a.link], &links[b.link]);
    let ends_a = [(la.from, 0.0), (la.to, la.length)];
    let ends_b = [(lb.from, 0.0), (lb.to, lb.length)];
    let mut best: Option<(f64, f64, f64)> = None;
    for (pa, node_a) in ends_a {
        for (pb, node_b) in ends_b {
            if pa.same_node(&pb) {
                let d = (node_a - a.offset).abs() + (b.offset - node_b).abs();
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, node_a, node_b));
                }
            }
        }
    }
    let (_, node_a, node_b) = best?;
    let da = (node_a - a.offset).abs();
    let db = (b.offset - node_b).abs();
    let total = da + db;
    let elapsed = b.timestamp - a.timestamp;
    let t_node = if total > 0.0 {
        a.timestamp + elapsed * (da / total)
    } else {
        b.timestamp
    };
    let mut pieces = Vec::with_capacity(2);
    pieces.push(MotionPiece {
        link: a.link,
        from_offset: a.offset,
        to_offset: node_a,
        t0: a.timestamp,
        t1: t_node,
    });
    if t_node < b.timestamp {
        pieces.push(MotionPiece {
            link: b.link,
            from_offset: node_b,
            to_offset: b.offset,
            t0: t_node,
            t1: b.timestamp,
        });
    }
    Some(pieces)
}

/// Every per-link motion piece of a trajectory, in time order.
pub(crate) fn trajectory_pieces(links: &[Link], points: &[TrajectoryPoint]) -> Vec<MotionPiece> {
    points
        .windows(2)
        .flat_map(|pair| {
            motion_pieces(links, &pair[0], &pair[1]).expect("trajectory validated at ingest")
        })
        .collect()
}

/// Clips one vehicle's trajectory to (grid, window) cells.
///
/// Positions are interpolated linearly in time. Each piece is split at
/// window boundaries, and a link counts wholly toward the grid in
/// `link_grid`; links without a grid are skipped. Output is one segment per
/// (grid, window), ordered by grid then window.
pub fn clip_trajectory(
    vehicle: usize,
    links: &[Link],
    points: &[TrajectoryPoint],
    link_grid: &[Option<GridId>],
    windowing: &Windowing,
) -> Vec<ClippedSegment> {
    let mut cells: BTreeMap<(GridId, i64), (f64, f64)> = BTreeMap::new();
    for piece in trajectory_pieces(links, points) {
        let Some(grid) = link_grid[piece.link] else {
            continue;
        };
        let duration = piece.t1 - piece.t0;
        let distance = piece.distance();
        let mut window = windowing.index(piece.t0);
        let mut start = piece.t0;
        while start < piece.t1 {
            let end = piece.t1.min(windowing.start(window + 1));
            if end > start {
                let share = (end - start) / duration;
                let cell = cells.entry((grid, window)).or_insert((0.0, 0.0));
                cell.0 += distance * share;
                cell.1 += end - start;
                start = end;
            }
            window += 1;
        }
    }
    cells
        .into_iter()
        .map(|((grid, window), (distance, time))| ClippedSegment {
            vehicle,
            grid,
            window,
            distance,
            time,
        })
        .collect()
}

/// Total along-link distance of a trajectory.
pub fn trajectory_distance(links: &[Link], points: &[TrajectoryPoint]) -> f64 {
    trajectory_pieces(links, points).iter().map(MotionPiece::distance).sum()
}

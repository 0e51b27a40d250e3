//! Tiling of traffic analysis zones into rectangular grids, assignment of
//! links to grids, and rook adjacency between grids.
//!
//! Each TAZ of area `A` gets `N = max(1, floor(A / min_size))` target cells.
//! Its bounding box is cut into `rows × cols` equal rectangles with
//! `rows = max(1, round(sqrt(N·h/w)))` and `cols = ceil(N / rows)`. Cells that
//! hold no link midpoint and do not overlap the TAZ interior are dropped.
//! A link belongs wholly to the cell containing its midpoint; cells are
//! half-open `[x_min, x_max) × [y_min, y_max)` except along the far edges of
//! the bounding box, which are closed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use geo::{Area, BooleanOps, Intersects, Polygon, Rect};
use serde::{Deserialize, Serialize};

use crate::ingest::{Dataset, IngestError, Link, Point, Taz};

pub const GRIDS_FILE: &str = "grids.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridId(pub u32);

impl fmt::Display for GridId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GriddingError {
    #[error("EmptyTaz:{0}")]
    EmptyTaz(String),
    #[error("InvalidMinSize:{0}")]
    InvalidMinSize(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl CellRect {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn centroid(&self) -> Point {
        Point::new(0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    fn to_polygon(self) -> Polygon<f64> {
        Rect::new((self.x_min, self.y_min), (self.x_max, self.y_max)).to_polygon()
    }

    /// Half-open containment; `closed_x`/`closed_y` close the upper edge.
    fn contains(&self, p: Point, closed_x: bool, closed_y: bool) -> bool {
        let in_x = p.x >= self.x_min && (p.x < self.x_max || (closed_x && p.x == self.x_max));
        let in_y = p.y >= self.y_min && (p.y < self.y_max || (closed_y && p.y == self.y_max));
        in_x && in_y
    }

    /// Length of the boundary segment shared with `other` (0 if none).
    fn shared_edge(&self, other: &CellRect, tol: f64) -> f64 {
        let overlap = |a0: f64, a1: f64, b0: f64, b1: f64| (a1.min(b1) - a0.max(b0)).max(0.0);
        let touch_x = (self.x_max - other.x_min).abs() <= tol || (other.x_max - self.x_min).abs() <= tol;
        let touch_y = (self.y_max - other.y_min).abs() <= tol || (other.y_max - self.y_min).abs() <= tol;
        let mut shared = 0.0_f64;
        if touch_x {
            shared = shared.max(overlap(self.y_min, self.y_max, other.y_min, other.y_max));
        }
        if touch_y {
            shared = shared.max(overlap(self.x_min, self.x_max, other.x_min, other.x_max));
        }
        shared
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub id: GridId,
    /// Index into the dataset's TAZ list.
    pub taz: usize,
    pub row: usize,
    pub col: usize,
    pub rect: CellRect,
    pub links: Vec<usize>,
    pub total_link_length: f64,
}

impl Grid {
    pub fn centroid(&self) -> Point {
        self.rect.centroid()
    }
}

/// All grids of all TAZs plus the link→grid assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSet {
    pub grids: Vec<Grid>,
    /// Target cell count `N` per TAZ, indexed like the TAZ list.
    pub target_counts: Vec<usize>,
    /// Grid owning each link, `None` when the midpoint lies in no TAZ.
    pub link_grid: Vec<Option<GridId>>,
}

impl GridSet {
    pub fn grid(&self, id: GridId) -> &Grid {
        &self.grids[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = GridId> + '_ {
        self.grids.iter().map(|g| g.id)
    }

    pub fn write_csv(&self, tazs: &[Taz], path: &Path) -> Result<(), IngestError> {
        let mut w = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
        for g in &self.grids {
            w.serialize(GridRow {
                grid_id: g.id.0,
                taz_id: tazs[g.taz].id.clone(),
                x_min: g.rect.x_min,
                y_min: g.rect.y_min,
                x_max: g.rect.x_max,
                y_max: g.rect.y_max,
                total_link_length_m: g.total_link_length,
            })
            .map_err(std::io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuilds a grid set from `grids.csv`, re-deriving link membership
    /// with the same midpoint rule used by [`build_grids`]. The recorded
    /// `total_link_length_m` must agree with the re-derived value.
    pub fn read_csv(path: &Path, dataset: &Dataset) -> Result<Self, IngestError> {
        let label = GRIDS_FILE.to_string();
        let file = std::fs::File::open(path).map_err(|_| IngestError::MissingFile(label.clone()))?;
        let mut reader = csv::Reader::from_reader(file);
        let taz_index: BTreeMap<&str, usize> =
            dataset.tazs.iter().enumerate().map(|(i, t)| (t.id.as_str(), i)).collect();
        let mut grids: Vec<Grid> = Vec::new();
        let mut recorded = Vec::new();
        for (k, row) in reader.deserialize::<GridRow>().enumerate() {
            let line = k as u64 + 2;
            let row = row.map_err(|e| IngestError::SchemaError {
                file: label.clone(),
                line,
                column: String::new(),
                message: e.to_string(),
            })?;
            if row.grid_id as usize != k {
                return Err(IngestError::SchemaError {
                    file: label.clone(),
                    line,
                    column: "grid_id".into(),
                    message: "grid ids must be 0..n in file order".into(),
                });
            }
            let taz = *taz_index
                .get(row.taz_id.as_str())
                .ok_or_else(|| IngestError::DanglingReference {
                    kind: "taz",
                    id: row.taz_id.clone(),
                })?;
            recorded.push(row.total_link_length_m);
            grids.push(Grid {
                id: GridId(row.grid_id),
                taz,
                row: 0,
                col: 0,
                rect: CellRect {
                    x_min: row.x_min,
                    y_min: row.y_min,
                    x_max: row.x_max,
                    y_max: row.y_max,
                },
                links: Vec::new(),
                total_link_length: 0.0,
            });
        }

        let mut target_counts = vec![0; dataset.tazs.len()];
        for g in &grids {
            target_counts[g.taz] += 1;
        }
        let taz_order = sorted_taz_order(&dataset.tazs);
        let polygons: Vec<Polygon<f64>> = dataset.tazs.iter().map(Taz::to_polygon).collect();
        let mut link_grid = vec![None; dataset.links.len()];
        for (li, link) in dataset.links.iter().enumerate() {
            let mid = link.midpoint();
            let Some(taz) = owning_taz(&taz_order, &polygons, mid) else {
                continue;
            };
            let members: Vec<&Grid> = grids.iter().filter(|g| g.taz == taz).collect();
            let x_far = members.iter().map(|g| g.rect.x_max).fold(f64::NEG_INFINITY, f64::max);
            let y_far = members.iter().map(|g| g.rect.y_max).fold(f64::NEG_INFINITY, f64::max);
            if let Some(g) = members
                .iter()
                .find(|g| g.rect.contains(mid, g.rect.x_max == x_far, g.rect.y_max == y_far))
            {
                link_grid[li] = Some(g.id);
            }
        }
        for (li, gid) in link_grid.iter().enumerate() {
            if let Some(gid) = gid {
                let g = &mut grids[gid.0 as usize];
                g.links.push(li);
                g.total_link_length += dataset.links[li].length;
            }
        }
        for (g, rec) in grids.iter().zip(recorded) {
            if (g.total_link_length - rec).abs() > 1e-9 * rec.abs().max(1.0) {
                return Err(IngestError::SchemaError {
                    file: label.clone(),
                    line: g.id.0 as u64 + 2,
                    column: "total_link_length_m".into(),
                    message: format!(
                        "recorded {rec} but network assigns {}",
                        g.total_link_length
                    ),
                });
            }
        }
        Ok(Self {
            grids,
            target_counts,
            link_grid,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    grid_id: u32,
    taz_id: String,
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    total_link_length_m: f64,
}

impl GridSet {
    /// Reads `grids.csv` on its own, without the network: rectangles and
    /// recorded road lengths only. TAZ indices follow first appearance and
    /// link lists stay empty, which is all partitioning and mapping need.
    pub fn read_table(path: &Path) -> Result<(Self, Vec<String>), IngestError> {
        let label = GRIDS_FILE.to_string();
        let file = std::fs::File::open(path).map_err(|_| IngestError::MissingFile(label.clone()))?;
        let mut taz_ids: Vec<String> = Vec::new();
        let mut grids = Vec::new();
        for (k, row) in csv::Reader::from_reader(file).deserialize::<GridRow>().enumerate() {
            let line = k as u64 + 2;
            let row = row.map_err(|e| IngestError::SchemaError {
                file: label.clone(),
                line,
                column: String::new(),
                message: e.to_string(),
            })?;
            if row.grid_id as usize != k {
                return Err(IngestError::SchemaError {
                    file: label.clone(),
                    line,
                    column: "grid_id".into(),
                    message: "grid ids must be 0..n in file order".into(),
                });
            }
            let taz = match taz_ids.iter().position(|t| *t == row.taz_id) {
                Some(i) => i,
                None => {
                    taz_ids.push(row.taz_id.clone());
                    taz_ids.len() - 1
                }
            };
            grids.push(Grid {
                id: GridId(row.grid_id),
                taz,
                row: 0,
                col: 0,
                rect: CellRect {
                    x_min: row.x_min,
                    y_min: row.y_min,
                    x_max: row.x_max,
                    y_max: row.y_max,
                },
                links: Vec::new(),
                total_link_length: row.total_link_length_m,
            });
        }
        let mut target_counts = vec![0; taz_ids.len()];
        for g in &grids {
            target_counts[g.taz] += 1;
        }
        let set = Self {
            grids,
            target_counts,
            link_grid: Vec::new(),
        };
        Ok((set, taz_ids))
    }
}

fn sorted_taz_order(tazs: &[Taz]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tazs.len()).collect();
    order.sort_by(|&a, &b| tazs[a].id.cmp(&tazs[b].id));
    order
}

/// First TAZ in id order whose closed polygon contains `p`.
fn owning_taz(order: &[usize], polygons: &[Polygon<f64>], p: Point) -> Option<usize> {
    let pt = geo::Point::new(p.x, p.y);
    order.iter().copied().find(|&t| polygons[t].intersects(&pt))
}

/// Rows and columns for `n` cells over a `width × height` box.
pub fn tiling_shape(n: usize, width: f64, height: f64) -> (usize, usize) {
    let rows = ((n as f64 * height / width).sqrt().round() as usize).max(1);
    let cols = n.div_ceil(rows);
    (rows, cols)
}

/// Target cell count for a TAZ of the given area.
pub fn target_count(area: f64, min_size_m2: f64) -> usize {
    ((area / min_size_m2).floor() as usize).max(1)
}

/// Tiles every TAZ and assigns links to grids.
pub fn build_grids(tazs: &[Taz], links: &[Link], min_size_m2: f64) -> Result<GridSet, GriddingError> {
    if !(min_size_m2.is_finite() && min_size_m2 > 0.0) {
        return Err(GriddingError::InvalidMinSize(min_size_m2));
    }
    let order = sorted_taz_order(tazs);
    let polygons: Vec<Polygon<f64>> = tazs.iter().map(Taz::to_polygon).collect();

    let mut taz_links: Vec<Vec<usize>> = vec![Vec::new(); tazs.len()];
    for (li, link) in links.iter().enumerate() {
        if let Some(t) = owning_taz(&order, &polygons, link.midpoint()) {
            taz_links[t].push(li);
        }
    }

    let mut target_counts = vec![0; tazs.len()];
    let mut grids = Vec::new();
    let mut link_grid = vec![None; links.len()];
    for &t in &order {
        let taz = &tazs[t];
        let (x0, y0, x1, y1) = bbox(&taz.polygon);
        let area = polygons[t].unsigned_area();
        let (width, height) = (x1 - x0, y1 - y0);
        if !(area > 0.0 && width > 0.0 && height > 0.0) {
            return Err(GriddingError::EmptyTaz(taz.id.clone()));
        }
        let n = target_count(area, min_size_m2);
        target_counts[t] = n;
        let (rows, cols) = tiling_shape(n, width, height);
        let cell_w = width / cols as f64;
        let cell_h = height / rows as f64;
        let xs: Vec<f64> = (0..=cols).map(|c| if c == cols { x1 } else { x0 + c as f64 * cell_w }).collect();
        let ys: Vec<f64> = (0..=rows).map(|r| if r == rows { y1 } else { y0 + r as f64 * cell_h }).collect();

        let mut cell_links: Vec<Vec<usize>> = vec![Vec::new(); rows * cols];
        for &li in &taz_links[t] {
            let mid = links[li].midpoint();
            let c = locate(&xs, mid.x);
            let r = locate(&ys, mid.y);
            cell_links[r * cols + c].push(li);
        }
        for r in 0..rows {
            for c in 0..cols {
                let rect = CellRect {
                    x_min: xs[c],
                    y_min: ys[r],
                    x_max: xs[c + 1],
                    y_max: ys[r + 1],
                };
                let members = std::mem::take(&mut cell_links[r * cols + c]);
                if members.is_empty() && !overlaps_interior(&rect, &polygons[t]) {
                    continue;
                }
                let id = GridId(grids.len() as u32);
                for &li in &members {
                    link_grid[li] = Some(id);
                }
                let total_link_length = members.iter().map(|&li| links[li].length).fold(0.0, |a, b| a + b);
                grids.push(Grid {
                    id,
                    taz: t,
                    row: r,
                    col: c,
                    rect,
                    links: members,
                    total_link_length,
                });
            }
        }
    }
    Ok(GridSet {
        grids,
        target_counts,
        link_grid,
    })
}

/// Index `i` with `bounds[i] <= v < bounds[i+1]`, the last interval closed.
fn locate(bounds: &[f64], v: f64) -> usize {
    let cells = bounds.len() - 1;
    let i = bounds.partition_point(|&b| b <= v);
    i.saturating_sub(1).min(cells - 1)
}

fn bbox(points: &[Point]) -> (f64, f64, f64, f64) {
    points.iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(x0, y0, x1, y1), p| (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y)),
    )
}

fn overlaps_interior(rect: &CellRect, polygon: &Polygon<f64>) -> bool {
    let cell = rect.to_polygon();
    let tol = 1e-9 * rect.width() * rect.height();
    cell.intersection(polygon).unsigned_area() > tol
}

/// Rook adjacency: neighbor lists indexed by grid id, ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<Vec<GridId>>,
}

impl Adjacency {
    pub fn neighbors(&self, id: GridId) -> &[GridId] {
        &self.neighbors[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn are_adjacent(&self, a: GridId, b: GridId) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Number of grids with at least one neighbor.
    pub fn connected_count(&self) -> usize {
        self.neighbors.iter().filter(|n| !n.is_empty()).count()
    }

    pub fn from_lists(neighbors: Vec<Vec<GridId>>) -> Self {
        let mut neighbors = neighbors;
        for n in &mut neighbors {
            n.sort();
            n.dedup();
        }
        Self { neighbors }
    }
}

/// Grids are neighbors when their rectangles share a boundary segment of
/// positive length, including across TAZ boundaries.
pub fn grid_adjacency(gridset: &GridSet) -> Adjacency {
    let n = gridset.grids.len();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        let a = &gridset.grids[i].rect;
        for j in (i + 1)..n {
            let b = &gridset.grids[j].rect;
            let scale = a.width().max(a.height()).max(b.width()).max(b.height());
            let tol = 1e-9 * scale;
            if a.shared_edge(b, tol) > tol {
                neighbors[i].push(GridId(j as u32));
                neighbors[j].push(GridId(i as u32));
            }
        }
    }
    Adjacency::from_lists(neighbors)
}

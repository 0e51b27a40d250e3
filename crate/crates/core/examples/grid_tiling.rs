//! Tile two TAZs into grids and list rook neighbors.
//!
//! ```bash
//! cargo run --example grid_tiling
//! ```

use mfdgrid::gridding::{build_grids, grid_adjacency};
use mfdgrid::ingest::{Link, Point, Taz};

fn rect(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> Taz {
    Taz {
        id: id.into(),
        polygon: vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)],
    }
}

fn main() {
    // 2 km × 2 km and 3 km × 1 km zones side by side.
    let tazs = vec![rect("west", 0.0, 0.0, 2000.0, 2000.0), rect("east", 2000.0, 0.0, 5000.0, 1000.0)];
    let links: Vec<Link> = (0..10)
        .map(|i| {
            let y = 150.0 + 180.0 * i as f64;
            let from = Point::new(100.0 + 450.0 * i as f64, y);
            let to = Point::new(from.x + 300.0, y);
            Link {
                id: format!("l{i}"),
                from,
                to,
                length: 300.0,
            }
        })
        .collect();

    let grids = build_grids(&tazs, &links, 1e6).expect("valid zones");
    let adjacency = grid_adjacency(&grids);
    for (taz, n) in tazs.iter().zip(&grids.target_counts) {
        println!("{}: N = {n}", taz.id);
    }
    for g in &grids.grids {
        let r = g.rect;
        println!(
            "grid {} ({}) [{:.0},{:.0}]-[{:.0},{:.0}] links {:?} l = {} m, neighbors {:?}",
            g.id,
            tazs[g.taz].id,
            r.x_min,
            r.y_min,
            r.x_max,
            r.y_max,
            g.links,
            g.total_link_length,
            adjacency.neighbors(g.id).iter().map(|n| n.0).collect::<Vec<_>>()
        );
    }
}

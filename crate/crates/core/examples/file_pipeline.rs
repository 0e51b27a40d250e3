//! The whole chain on CSV inputs: parse → grid → estimate → partition →
//! score → SVG. Point it at a directory written by `synthetic_scenario`
//! (or `mfdgrid generate`).
//!
//! ```bash
//! cargo run --release --example synthetic_scenario -- /tmp/scenario
//! cargo run --release --example file_pipeline -- /tmp/scenario 8100
//! ```

use std::path::PathBuf;

use mfdgrid::cli::render_svg;
use mfdgrid::fusion::{estimate_all, EstimateStatus, FusionConfig};
use mfdgrid::gridding::{build_grids, grid_adjacency};
use mfdgrid::ingest::{parse_inputs, IngestConfig, InputPaths};
use mfdgrid::metrics::{window_report, Report};
use mfdgrid::partition::{partition_window, PartitionConfig};
use mfdgrid::scenario::{read_truth_regions, TRUTH_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "scenario_out".into()));
    let min_size: f64 = args.next().map_or(Ok(8100.0), |s| s.parse())?;

    let dataset = parse_inputs(&InputPaths::in_dir(&dir), &IngestConfig::default())?;
    let grids = build_grids(&dataset.tazs, &dataset.links, min_size)?;
    let adjacency = grid_adjacency(&grids);
    let estimates = estimate_all(&dataset, &grids, &FusionConfig { use_grid_p_for_orphans: true });

    let truth = dir.join(TRUTH_FILE);
    let truth = truth.is_file().then(|| read_truth_regions(&truth, &dataset.windowing)).transpose()?;
    let lengths = grids.grids.iter().map(|g| (g.id, g.total_link_length)).collect();

    let mut windows = Vec::new();
    for &w in &estimates.windows {
        let (_, wp) = partition_window(&grids, &adjacency, &estimates, w, &PartitionConfig::default())?;
        let labels = &wp.partition.labels;
        let n_est = estimates.in_window(w).filter(|e| e.status == EstimateStatus::Estimated).count();
        let t = truth.as_ref().and_then(|t| t.get(&w));
        let start = dataset.windowing.start(w);
        windows.push(window_report(start, n_est, labels, &estimates.densities(w), &lengths, t)?);
        if w == estimates.windows[0] {
            std::fs::write(dir.join("example_map.svg"), render_svg(&grids, labels, start))?;
        }
    }
    print!("{}", Report::from_windows(windows).to_json());
    println!("map of the first window: {}", dir.join("example_map.svg").display());
    Ok(())
}

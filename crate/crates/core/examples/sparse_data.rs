//! How much is lost when only 15% of vehicles are probes and 15% of links
//! carry detectors? Compares partitions against the true regimes.
//!
//! ```bash
//! cargo run --release --example sparse_data -- 3
//! ```

use mfdgrid::fusion::{estimate_all, EstimateStatus, FusionConfig};
use mfdgrid::gridding::grid_adjacency;
use mfdgrid::metrics::ari_by_grid;
use mfdgrid::partition::{partition_window, PartitionConfig};
use mfdgrid::scenario::{generate, ScenarioConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).map_or(1, |s| s.parse().expect("seed"));
    let partition = PartitionConfig::default();
    for (rate, orphans) in [(1.0, true), (0.15, true), (0.15, false)] {
        let mut c = ScenarioConfig::core_periphery(seed, 20, (0.08, 7.0), (0.02, 15.0));
        c.n_vehicles = 5000;
        c.links_per_cell_side = 2;
        c.cell_size_m = 90.0;
        c.probe_rate = rate;
        c.detector_link_fraction = rate;
        let s = generate(&c).expect("scenario");

        let fusion = FusionConfig {
            use_grid_p_for_orphans: orphans,
        };
        let est = estimate_all(&s.dataset, &s.gridset, &fusion);
        let adjacency = grid_adjacency(&s.gridset);
        let estimated = est.iter().filter(|e| e.status == EstimateStatus::Estimated).count();

        let mut aris = Vec::new();
        let mut regions = 0;
        for &w in &est.windows {
            let (_, wp) = partition_window(&s.gridset, &adjacency, &est, w, &partition).expect("estimates present");
            aris.push(ari_by_grid(&wp.partition.labels, &s.truth.regions).expect("same grids"));
            regions += wp.partition.region_count();
        }
        println!(
            "p = f = {rate:<4} orphan scaling {:<5}  coverage {:.2}  regions/window {:.1}  ARI {:.3}",
            orphans,
            estimated as f64 / est.iter().count() as f64,
            regions as f64 / est.windows.len() as f64,
            aris.iter().sum::<f64>() / aris.len() as f64
        );
    }
}

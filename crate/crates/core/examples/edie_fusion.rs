//! Density of one grid-window from probes and two loop detectors.
//!
//! Vehicle A passes both detectors, B only the first, C neither.
//!
//! ```bash
//! cargo run --example edie_fusion
//! ```

use mfdgrid::fusion::{edie_single, fused_density, penetration, weights, MembershipMatrix};

fn main() {
    let l = 1000.0; // road length in the grid (m)
    let dt = 100.0; // window (s)
    let times = [40.0, 20.0, 30.0]; // seconds each probe spent in the grid-window
    let dists = [400.0, 300.0, 250.0];

    let m = MembershipMatrix::from_rows(
        vec![0, 1, 2],
        vec![0, 1],
        vec![vec![true, true], vec![true, false], vec![false, false]],
    );
    let w = weights(&m);
    for row in &w {
        println!("vehicle {} weights {:?}", row.vehicle, row.weights);
    }

    // Loop counts: 4 vehicles over detector 1, 4 over detector 2.
    let pen = penetration(&m, &[Some(4), Some(4)]).expect("grid has detectors");
    for d in &pen.detectors {
        println!("detector {}: {} probe passes / {:?} counted -> p = {:?}", d.detector, d.probe_passes, d.loop_count, d.penetration);
    }
    println!("grid penetration p = {:?}", pen.grid_rate);

    let k = fused_density(&m, &w, &pen.detectors, &times, l, dt).expect("detectors included");
    println!("fused K = {k:.6} veh/m (vehicle C has no detector hit and is left out)");

    // Same probes, one grid-wide rate.
    let single = edie_single(pen.grid_rate.unwrap(), dists.iter().copied().zip(times), l, dt).unwrap();
    println!(
        "single-rate Edie: T = {:.1} veh·s, D = {:.1} veh·m, K = {:.6}, Q = {:.6} veh/s, V = {:.2} m/s",
        single.total_time,
        single.total_distance,
        single.density,
        single.flow,
        single.speed.unwrap()
    );
}

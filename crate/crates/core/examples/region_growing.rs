//! λ-connected growing, integrative re-growing and boundary smoothing on a
//! 6×6 grid graph with two density blocks and some noise.
//!
//! ```bash
//! cargo run --example region_growing -- 0.8
//! ```

use mfdgrid::graph::{auto_sigma, GridGraph};
use mfdgrid::partition::{integrative_grow, region_grow, smooth_boundaries};

const N: usize = 6;

fn show(title: &str, labels: &[u32]) {
    println!("{title}");
    for row in labels.chunks(N) {
        println!("  {}", row.iter().map(|l| format!("{l:>3}")).collect::<String>());
    }
}

fn main() {
    let lambda: f64 = std::env::args().nth(1).map_or(0.8, |s| s.parse().expect("λ must be a number"));

    // Left half congested, right half free-flowing; one odd grid on each side.
    let mut k = Vec::new();
    for r in 0..N {
        for c in 0..N {
            let base = if c < N / 2 { 0.08 } else { 0.02 };
            let wobble = 0.002 * ((r * 7 + c * 3) % 5) as f64;
            k.push(base + wobble);
        }
    }
    k[2 * N + 1] = 0.03;
    k[4 * N + 4] = 0.07;

    let mut edges = Vec::new();
    for r in 0..N {
        for c in 0..N {
            let i = r * N + c;
            if c + 1 < N {
                edges.push((i, i + 1));
            }
            if r + 1 < N {
                edges.push((i, i + N));
            }
        }
    }
    let sigma = auto_sigma(&k);
    let g = GridGraph::from_parts((0..(N * N) as u32).collect(), k, vec![100.0; N * N], &edges, sigma);
    println!("σ = {sigma:.4}, λ = {lambda}");

    let grown = region_grow(&g, lambda);
    show(&format!("grown: {} regions", grown.region_count), &grown.labels);

    let merged = integrative_grow(&g, lambda, 20);
    show(
        &format!("integrated: {} iterations, converged = {}", merged.iterations, merged.converged),
        &merged.labels,
    );

    let smooth = smooth_boundaries(&g, &merged.labels, 3);
    show(&format!("smoothed: {} sweeps", smooth.sweeps), &smooth.labels);
}

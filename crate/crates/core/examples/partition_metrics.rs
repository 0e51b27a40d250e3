//! Scoring labelings: adjusted Rand index and length-weighted homogeneity.
//!
//! ```bash
//! cargo run --example partition_metrics
//! ```

use mfdgrid::metrics::{adjusted_rand_index, homogeneity};

fn main() {
    let truth = [1, 1, 1, 2, 2, 2];
    for (name, guess) in [
        ("identical", [1, 1, 1, 2, 2, 2]),
        ("renumbered", [7, 7, 7, 3, 3, 3]),
        ("one grid off", [1, 1, 2, 2, 2, 2]),
        ("crossed", [1, 2, 1, 2, 1, 2]),
    ] {
        println!("{name:>13}: ARI {:+.3}", adjusted_rand_index(&truth, &guess).unwrap());
    }

    let k = [0.010, 0.012, 0.011, 0.050, 0.048, 0.052];
    let l = [120.0, 80.0, 100.0, 100.0, 150.0, 50.0];
    for (name, labels) in [("by regime", [1i64, 1, 1, 2, 2, 2]), ("one region", [1; 6]), ("with unknown", [1, 1, -1, 2, 2, 2])] {
        let h = homogeneity(&labels, &k, &l);
        println!(
            "{name:>13}: within {:.3e}, total {:.3e}, explained {:.3}",
            h.within_variance, h.total_variance, h.between_ratio
        );
    }
}

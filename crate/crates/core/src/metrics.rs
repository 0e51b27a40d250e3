//! Partition quality: length-weighted homogeneity and agreement with a
//! reference labeling.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gridding::GridId;
use crate::partition::UNKNOWN_REGION;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("DomainMismatch:{0}")]
    DomainMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homogeneity {
    /// Length-weighted variance of grid densities around their region mean.
    pub within_variance: f64,
    /// Length-weighted variance around the overall mean.
    pub total_variance: f64,
    /// Share of the total variance explained by the regions; 1 when there is
    /// no variance to explain.
    pub between_ratio: f64,
}

/// Homogeneity of a labeling. Grids labeled [`UNKNOWN_REGION`] are ignored.
/// Falls back to unit weights when no grid carries road length.
pub fn homogeneity(labels: &[i64], density: &[f64], length: &[f64]) -> Homogeneity {
    assert!(labels.len() == density.len() && labels.len() == length.len());
    let known: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != UNKNOWN_REGION).collect();
    let unit = known.iter().all(|&i| length[i] <= 0.0);
    let w = |i: usize| if unit { 1.0 } else { length[i] };

    let mut sums: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let (mut wk, mut ws) = (0.0, 0.0);
    for &i in &known {
        let e = sums.entry(labels[i]).or_default();
        e.0 += w(i) * density[i];
        e.1 += w(i);
        wk += w(i) * density[i];
        ws += w(i);
    }
    if ws <= 0.0 {
        return Homogeneity {
            within_variance: 0.0,
            total_variance: 0.0,
            between_ratio: 1.0,
        };
    }
    let mean = wk / ws;
    let region_mean = |l: i64| {
        let (a, b) = sums[&l];
        if b > 0.0 {
            a / b
        } else {
            mean
        }
    };
    let (mut within, mut total) = (0.0, 0.0);
    for &i in &known {
        within += w(i) * (density[i] - region_mean(labels[i])).powi(2);
        total += w(i) * (density[i] - mean).powi(2);
    }
    let (within, total) = (within / ws, total / ws);
    let between_ratio = if total > 0.0 { 1.0 - within / total } else { 1.0 };
    Homogeneity {
        within_variance: within,
        total_variance: total,
        between_ratio,
    }
}

fn pairs(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
/// Returns 1 when the index is undefined (fewer than two items, or both
/// labelings trivially identical in structure).
pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::DomainMismatch(format!("{} vs {} items", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Ok(1.0);
    }
    let mut table: BTreeMap<(&A, &B), u64> = BTreeMap::new();
    let mut rows: BTreeMap<&A, u64> = BTreeMap::new();
    let mut cols: BTreeMap<&B, u64> = BTreeMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&n| pairs(n)).sum();
    let sum_a: f64 = rows.values().map(|&n| pairs(n)).sum();
    let sum_b: f64 = cols.values().map(|&n| pairs(n)).sum();
    let expected = sum_a * sum_b / pairs(a.len() as u64);
    let max = (sum_a + sum_b) / 2.0;
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// ARI over two grid labelings that must cover the same grids.
pub fn ari_by_grid(a: &BTreeMap<GridId, i64>, b: &BTreeMap<GridId, i64>) -> Result<f64, MetricsError> {
    if !a.keys().eq(b.keys()) {
        return Err(MetricsError::DomainMismatch(format!(
            "{} vs {} grids or differing ids",
            a.len(),
            b.len()
        )));
    }
    let la: Vec<i64> = a.values().copied().collect();
    let lb: Vec<i64> = b.values().copied().collect();
    adjusted_rand_index(&la, &lb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_start_s: f64,
    pub n_regions: usize,
    pub within_region_variance: f64,
    pub between_ratio: f64,
    pub ari: Option<f64>,
    /// Fraction of grids whose density was estimated (not imputed).
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n_regions: f64,
    pub within_region_variance: f64,
    pub between_ratio: f64,
    pub ari: Option<f64>,
    pub coverage: f64,
    pub windows: Vec<WindowReport>,
}

/// Scores one window's labeling. `density`/`length` hold values for the
/// labeled (known) grids; `truth`, when given, must cover every grid.
/// `n_estimated` is the number of grids with a directly estimated density.
pub fn window_report(
    window_start_s: f64,
    n_estimated: usize,
    labels: &BTreeMap<GridId, i64>,
    density: &BTreeMap<GridId, f64>,
    length: &BTreeMap<GridId, f64>,
    truth: Option<&BTreeMap<GridId, i64>>,
) -> Result<WindowReport, MetricsError> {
    let known: Vec<(GridId, i64)> = labels
        .iter()
        .filter(|(_, &l)| l != UNKNOWN_REGION)
        .map(|(&g, &l)| (g, l))
        .collect();
    let mut ls = Vec::with_capacity(known.len());
    let mut ks = Vec::with_capacity(known.len());
    let mut ws = Vec::with_capacity(known.len());
    for &(g, l) in &known {
        let k = density
            .get(&g)
            .ok_or_else(|| MetricsError::DomainMismatch(format!("no density for grid {g}")))?;
        ls.push(l);
        ks.push(*k);
        ws.push(length.get(&g).copied().unwrap_or(0.0));
    }
    let h = homogeneity(&ls, &ks, &ws);
    let ari = truth.map(|t| ari_by_grid(labels, t)).transpose()?;
    let n_regions = known.iter().map(|&(_, l)| l).collect::<std::collections::BTreeSet<_>>().len();
    Ok(WindowReport {
        window_start_s,
        n_regions,
        within_region_variance: h.within_variance,
        between_ratio: h.between_ratio,
        ari,
        coverage: if labels.is_empty() {
            0.0
        } else {
            n_estimated as f64 / labels.len() as f64
        },
    })
}

impl Report {
    /// Averages per-window scores. The ARI average is present only when every
    /// window has one.
    pub fn from_windows(windows: Vec<WindowReport>) -> Self {
        let n = windows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&WindowReport) -> f64| windows.iter().map(f).sum::<f64>() / n;
        let ari = windows
            .iter()
            .map(|w| w.ari)
            .collect::<Option<Vec<f64>>>()
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64);
        Self {
            n_regions: mean(&|w| w.n_regions as f64),
            within_region_variance: mean(&|w| w.within_region_variance),
            between_ratio: mean(&|w| w.between_ratio),
            ari,
            coverage: mean(&|w| w.coverage),
            windows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute-force pair counting: Rand-style agreement corrected by the
    // hypergeometric expectation, computed over explicit item pairs.
    fn ari_oracle(a: &[i64], b: &[i64]) -> f64 {
        let n = a.len();
        let (mut both, mut in_a, mut in_b, mut total) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                both += (sa && sb) as u8 as f64;
                in_a += sa as u8 as f64;
                in_b += sb as u8 as f64;
                total += 1.0;
            }
        }
        let expected = in_a * in_b / total;
        (both - expected) / ((in_a + in_b) / 2.0 - expected)
    }

    #[test]
    fn ari_identical_and_relabeled() {
        let a = [1, 1, 2, 2, 3];
        let b = [7, 7, 9, 9, 4];
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn ari_matches_pair_counting() {
        let a = [1, 1, 1, 2, 2, 2, 3, 3];
        let b = [1, 1, 2, 2, 2, 3, 3, 3];
        let got = adjusted_rand_index(&a, &b).unwrap();
        assert!((got - ari_oracle(&a, &b)).abs() < 1e-12);
        assert!(got < 1.0 && got > 0.0);
    }

    #[test]
    fn ari_of_crossed_pairs() {
        let a = [1, 1, 2, 2];
        let b = [1, 2, 1, 2];
        let oracle = ari_oracle(&a, &b);
        assert!((oracle + 0.5).abs() < 1e-12);
        assert!((adjusted_rand_index(&a, &b).unwrap() - oracle).abs() < 1e-12);
        assert!((adjusted_rand_index(&b, &a).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn ari_domain_mismatch() {
        assert!(matches!(
            adjusted_rand_index(&[1, 2], &[1]),
            Err(MetricsError::DomainMismatch(_))
        ));
        let a = BTreeMap::from([(GridId(0), 1), (GridId(1), 1)]);
        let b = BTreeMap::from([(GridId(0), 1), (GridId(2), 1)]);
        assert!(ari_by_grid(&a, &b).is_err());
    }

    #[test]
    fn homogeneity_of_perfect_split() {
        let h = homogeneity(&[1, 1, 2, 2], &[1.0, 1.0, 5.0, 5.0], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(h.within_variance, 0.0);
        assert_eq!(h.between_ratio, 1.0);
        // Oracle: weighted mean (1+2+15+20)/10 = 3.8.
        let total = (1.0 * 2.8f64.powi(2) + 2.0 * 2.8f64.powi(2) + 3.0 * 1.2f64.powi(2) + 4.0 * 1.2f64.powi(2)) / 10.0;
        assert!((h.total_variance - total).abs() < 1e-12);
    }

    #[test]
    fn homogeneity_two_flat_regions() {
        let k = [1e-3, 1e-3, 9e-3, 9e-3];
        let h = homogeneity(&[1, 1, 2, 2], &k, &[1.0; 4]);
        // Direct evaluation: mean 5e-3, every grid 4e-3 away from it.
        assert_eq!(h.within_variance, 0.0);
        assert!((h.total_variance - 16e-6).abs() < 1e-18);
        assert_eq!(h.between_ratio, 1.0);

        let flat = homogeneity(&[1, 2], &[3e-3, 3e-3], &[1.0, 1.0]);
        assert_eq!((flat.within_variance, flat.between_ratio), (0.0, 1.0));
        let singletons = homogeneity(&[1, 2, 3], &[1.0, 2.0, 7.0], &[1.0, 5.0, 2.0]);
        assert_eq!(singletons.within_variance, 0.0);
    }

    #[test]
    fn homogeneity_single_region_explains_nothing() {
        let h = homogeneity(&[1, 1, -1], &[1.0, 3.0, 100.0], &[1.0, 1.0, 1.0]);
        assert!((h.within_variance - 1.0).abs() < 1e-15);
        assert_eq!(h.between_ratio, 0.0);
    }

    #[test]
    fn report_averages_windows() {
        let labels = BTreeMap::from([(GridId(0), 1), (GridId(1), -1)]);
        let density = BTreeMap::from([(GridId(0), 0.01)]);
        let length = BTreeMap::from([(GridId(0), 10.0)]);
        let w = window_report(0.0, 1, &labels, &density, &length, None).unwrap();
        assert_eq!(w.coverage, 0.5);
        assert_eq!(w.n_regions, 1);
        let r = Report::from_windows(vec![w.clone(), WindowReport { coverage: 1.0, ..w }]);
        assert_eq!(r.coverage, 0.75);
        assert_eq!(r.ari, None);
        assert!(r.to_json().contains("\"between_ratio\""));
    }
}

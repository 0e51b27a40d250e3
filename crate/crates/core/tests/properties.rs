use std::collections::{BTreeMap, BTreeSet, VecDeque};

use mfdgrid::fusion::{edie_single, fused_density, penetration, weights, MembershipMatrix};
use mfdgrid::graph::{auto_sigma, potential, GridGraph};
use mfdgrid::gridding::{build_grids, grid_adjacency, GridId};
use mfdgrid::ingest::{clip_trajectory, Link, Point, Taz, TrajectoryPoint, Windowing};
use mfdgrid::metrics::{adjusted_rand_index, homogeneity};
use mfdgrid::partition::{canonical_labels, integrative_grow, region_graph, region_grow, smooth_boundaries};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// -- helpers ---------------------------------------------------------------

/// Random sparse graph with clustered densities, built from a seed.
fn graph_from_seed(seed: u64, max_nodes: usize) -> GridGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_nodes);
    let p = rng.random_range(0.05..0.5);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    let levels: Vec<f64> = (0..rng.random_range(1..4)).map(|_| rng.random_range(0.0..0.1)).collect();
    let density: Vec<f64> = (0..n)
        .map(|_| levels[rng.random_range(0..levels.len())] + rng.random_range(0.0..0.01))
        .collect();
    let sigma = auto_sigma(&density);
    GridGraph::from_parts((0..n as u32).collect(), density, vec![1.0; n], &edges, sigma)
}

fn components_at(g: &GridGraph, lambda: f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..g.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        if p[x] != x {
            let r = find(p, p[x]);
            p[x] = r;
        }
        p[x]
    }
    for (i, j, c) in g.edges() {
        if c >= lambda {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..g.len()).map(|i| find(&mut parent, i)).collect()
}

fn same_partition<A: Ord + Copy, B: Ord + Copy>(a: &[A], b: &[B]) -> bool {
    let mut ab = BTreeMap::new();
    let mut ba = BTreeMap::new();
    a.iter().zip(b).all(|(&x, &y)| *ab.entry(x).or_insert(y) == y && *ba.entry(y).or_insert(x) == x)
}

fn refines(fine: &[u32], coarse: &[u32]) -> bool {
    let mut owner = BTreeMap::new();
    fine.iter().zip(coarse).all(|(&f, &c)| *owner.entry(f).or_insert(c) == c)
}

/// Every label class is connected through graph edges.
fn regions_connected(g: &GridGraph, labels: &[u32]) -> bool {
    let mut by_label: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    by_label.values().all(|members| {
        let mut seen = BTreeSet::from([members[0]]);
        let mut queue = VecDeque::from([members[0]]);
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &g.neighbors[i] {
                if labels[j] == labels[i] && seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
        seen.len() == members.len()
    })
}

fn line_links(lengths: &[f64]) -> Vec<Link> {
    let mut x = 0.0;
    lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let l = Link {
                id: format!("l{i}"),
                from: Point::new(x, 0.0),
                to: Point::new(x + len, 0.0),
                length: len,
            };
            x += len;
            l
        })
        .collect()
}

/// A vehicle moving back and forth along a chain of links.
fn chain_trajectory(links: &[Link], moves: &[(usize, f64, f64)], t0: f64) -> Vec<TrajectoryPoint> {
    let mut t = t0;
    let mut link = 0;
    let mut pts = vec![TrajectoryPoint {
        timestamp: t,
        link,
        offset: 0.0,
    }];
    for &(step, frac, dt) in moves {
        // step: 0 stay, 1 forward, 2 back
        link = match step {
            1 if link + 1 < links.len() => link + 1,
            2 if link > 0 => link - 1,
            _ => link,
        };
        t += dt;
        pts.push(TrajectoryPoint {
            timestamp: t,
            link,
            offset: frac * links[link].length,
        });
    }
    pts
}

// -- ingest ----------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn clipping_conserves_and_refines(
        lengths in prop::collection::vec(10.0f64..2000.0, 1..6),
        moves in prop::collection::vec((0usize..3, 0.0f64..=1.0, 0.01f64..400.0), 1..25),
        t0 in 0.0f64..10_000.0,
        dt in 1.0f64..900.0,
        grid_of in prop::collection::vec(0u32..3, 6),
    ) {
        let links = line_links(&lengths);
        let pts = chain_trajectory(&links, &moves, t0);
        let link_grid: Vec<Option<GridId>> = (0..links.len()).map(|i| Some(GridId(grid_of[i]))).collect();
        let coarse = clip_trajectory(0, &links, &pts, &link_grid, &Windowing::new(dt));
        let fine = clip_trajectory(0, &links, &pts, &link_grid, &Windowing::new(dt / 2.0));

        // Oracle on a line: distance is the change in absolute position.
        let abs = |p: &TrajectoryPoint| links[p.link].from.x + p.offset;
        let d_ref: f64 = pts.windows(2).map(|w| (abs(&w[1]) - abs(&w[0])).abs()).sum();
        let t_ref = pts.last().unwrap().timestamp - t0;
        let d: f64 = coarse.iter().map(|s| s.distance).sum();
        let t: f64 = coarse.iter().map(|s| s.time).sum();
        prop_assert!((d - d_ref).abs() <= 1e-6 * d_ref.max(1e-9));
        prop_assert!((t - t_ref).abs() <= 1e-6 * t_ref);

        let mut regrouped: BTreeMap<(GridId, i64), (f64, f64)> = BTreeMap::new();
        for s in &fine {
            let e = regrouped.entry((s.grid, s.window.div_euclid(2))).or_default();
            e.0 += s.distance;
            e.1 += s.time;
        }
        let coarse_map: BTreeMap<(GridId, i64), (f64, f64)> =
            coarse.iter().map(|s| ((s.grid, s.window), (s.distance, s.time))).collect();
        // Cells with zero content may appear on one side only.
        for key in regrouped.keys().chain(coarse_map.keys()) {
            let a = regrouped.get(key).copied().unwrap_or_default();
            let b = coarse_map.get(key).copied().unwrap_or_default();
            prop_assert!((a.0 - b.0).abs() <= 1e-9 * b.0.max(1.0), "{key:?}: {a:?} vs {b:?}");
            prop_assert!((a.1 - b.1).abs() <= 1e-9 * b.1.max(1.0), "{key:?}: {a:?} vs {b:?}");
        }
    }
}

// -- fusion ----------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn weights_normalize_per_vehicle(
        rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 4), 1..12),
    ) {
        let n = rows.len();
        let m = MembershipMatrix::from_rows((0..n).collect(), (0..4).collect(), rows.clone());
        for (row, w) in rows.iter().zip(weights(&m)) {
            let s: f64 = w.weights.iter().sum();
            if row.iter().any(|&b| b) {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn single_detector_matches_single_rate(
        times in prop::collection::vec(0.1f64..500.0, 1..10),
        extra in 0u64..100,
        l in 1.0f64..5000.0,
        dt in 1.0f64..900.0,
    ) {
        let n = times.len();
        let m = MembershipMatrix::from_rows((0..n).collect(), vec![0], vec![vec![true]; n]);
        let stats = penetration(&m, &[Some(n as u64 + extra)]).unwrap();
        let p = stats.detectors[0].penetration.unwrap();
        let k = fused_density(&m, &weights(&m), &stats.detectors, &times, l, dt).unwrap();
        let reference = edie_single(p, times.iter().map(|&t| (t, t)), l, dt).unwrap().density;
        prop_assert!(((k - reference) / reference).abs() <= 1e-12);
    }

    #[test]
    fn speed_is_distance_over_time(
        travel in prop::collection::vec((0.0f64..3000.0, 0.001f64..600.0), 1..20),
        p in 0.01f64..=1.0,
        l in 1.0f64..5000.0,
        dt in 1.0f64..900.0,
    ) {
        let e = edie_single(p, travel.iter().copied(), l, dt).unwrap();
        let v = e.speed.unwrap();
        prop_assert!((v - e.total_distance / e.total_time).abs() <= 1e-12 * v.abs().max(1e-300));
        let raw: f64 = travel.iter().map(|x| x.0).sum::<f64>() / travel.iter().map(|x| x.1).sum::<f64>();
        prop_assert!((v - raw).abs() <= 1e-12 * raw.max(1e-12));
        prop_assert!(e.density >= 0.0 && e.flow >= 0.0);
    }
}

// -- graph -----------------------------------------------------------------

proptest! {
    #[test]
    fn potential_symmetric_monotone_scale_free(
        a in 0.0f64..0.2, b in 0.0f64..0.2, c in 0.0f64..0.2,
        sigma in 1e-4f64..0.1, scale in 1e-3f64..1e3,
    ) {
        prop_assert_eq!(potential(a, b, sigma), potential(b, a, sigma));
        let (p1, p2) = (potential(a, b, sigma), potential(a, c, sigma));
        prop_assert!(p1 > 0.0 && p1 <= 1.0);
        if (a - b).abs() < (a - c).abs() {
            prop_assert!(p1 >= p2);
        }
        let scaled = potential(a * scale, b * scale, sigma * scale);
        prop_assert!((scaled - p1).abs() <= 1e-12);
    }
}

// -- partition -------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn growing_equals_threshold_components(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let g = graph_from_seed(seed, 50);
        prop_assert!(same_partition(&region_grow(&g, lambda).labels, &components_at(&g, lambda)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn grouping_ignores_node_numbering(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let g = graph_from_seed(seed, 40);
        let n = g.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // Node i of `g` becomes node perm[i] of `h`.
        let mut density = vec![0.0; n];
        for i in 0..n {
            density[perm[i]] = g.density[i];
        }
        let edges: Vec<(usize, usize)> = g.edges().map(|(i, j, _)| (perm[i], perm[j])).collect();
        let h = GridGraph::from_parts((0..n as u32).collect(), density, vec![1.0; n], &edges, g.sigma);
        let lg = region_grow(&g, lambda).labels;
        let lh = region_grow(&h, lambda).labels;
        let mapped: Vec<u32> = (0..n).map(|i| lh[perm[i]]).collect();
        prop_assert!(same_partition(&lg, &mapped));
    }

    #[test]
    fn larger_lambda_refines(seed in any::<u64>(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let g = graph_from_seed(seed, 50);
        let (lo, hi) = (a.min(b), a.max(b));
        let (rl, rh) = (region_grow(&g, lo), region_grow(&g, hi));
        prop_assert!(refines(&rh.labels, &rl.labels));
        prop_assert!(rh.region_count >= rl.region_count);
    }

    #[test]
    fn integrative_growing_reaches_connected_fixed_point(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let g = graph_from_seed(seed, 40);
        let grown = region_grow(&g, lambda);
        let out = integrative_grow(&g, lambda, 50);
        prop_assert!(out.converged);
        prop_assert!(out.iterations <= out.initial_regions.max(1));
        prop_assert!(refines(&canonical_labels(&grown.labels), &out.labels));
        prop_assert!(regions_connected(&g, &out.labels));
        // Fixed point: another round at region level merges nothing.
        let regions = region_graph(&g, &out.labels);
        prop_assert_eq!(region_grow(&regions, lambda).region_count as usize, regions.len());
    }

    #[test]
    fn smoothing_keeps_regions_connected_and_large(
        seed in any::<u64>(), lambda in 0.0f64..=1.0, min_grids in 1usize..6,
    ) {
        let g = graph_from_seed(seed, 40);
        let merged = integrative_grow(&g, lambda, 50);
        let s = smooth_boundaries(&g, &merged.labels, min_grids);
        prop_assert!(s.converged && s.sweeps <= 100);
        prop_assert!(regions_connected(&g, &s.labels));
        let whole = components_at(&g, 0.0);
        let mut size: BTreeMap<u32, usize> = BTreeMap::new();
        for &l in &s.labels {
            *size.entry(l).or_default() += 1;
        }
        for (i, &l) in s.labels.iter().enumerate() {
            if size[&l] < min_grids {
                // Only a whole connected piece of the graph may stay small.
                let piece = whole.iter().filter(|&&c| c == whole[i]).count();
                prop_assert_eq!(size[&l], piece, "region {} of node {}", l, i);
            }
        }
    }
}

// -- metrics ---------------------------------------------------------------

proptest! {
    #[test]
    fn ari_symmetric_and_label_free(
        a in prop::collection::vec(0i64..4, 2..30),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<i64> = a.iter().map(|_| rng.random_range(0..4)).collect();
        let ab = adjusted_rand_index(&a, &b).unwrap();
        prop_assert!((ab - adjusted_rand_index(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&ab));
        let renamed: Vec<i64> = a.iter().map(|x| 100 - 7 * x).collect();
        prop_assert!((ab - adjusted_rand_index(&renamed, &b).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn splitting_a_region_never_raises_within_variance(
        grids in prop::collection::vec((0i64..3, 0.0f64..0.1, 0.0f64..500.0, any::<bool>()), 1..30),
    ) {
        let labels: Vec<i64> = grids.iter().map(|g| g.0).collect();
        let k: Vec<f64> = grids.iter().map(|g| g.1).collect();
        let l: Vec<f64> = grids.iter().map(|g| g.2).collect();
        // Split region 0 by the flag.
        let split: Vec<i64> = grids.iter().map(|g| if g.0 == 0 && g.3 { 10 } else { g.0 }).collect();
        let before = homogeneity(&labels, &k, &l);
        let after = homogeneity(&split, &k, &l);
        prop_assert!(after.within_variance <= before.within_variance + 1e-15);
        if before.total_variance > 0.0 {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&before.between_ratio));
        }
    }
}

// -- gridding --------------------------------------------------------------

fn rect_taz(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> Taz {
    Taz {
        id: id.into(),
        polygon: vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn grids_partition_lengths_and_adjacency_is_symmetric(
        w in 500.0f64..4000.0, h in 500.0f64..4000.0, split in 0.2f64..0.8,
        min_size in 1e5f64..2e6, seed in any::<u64>(),
    ) {
        let cut = w * split;
        let tazs = vec![rect_taz("a", 0.0, 0.0, cut, h), rect_taz("b", cut, 0.0, w, h)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let links: Vec<Link> = (0..40)
            .map(|i| {
                // Some links fall outside both TAZs.
                let from = Point::new(rng.random_range(-200.0..w + 200.0), rng.random_range(-200.0..h + 200.0));
                let to = Point::new(from.x + rng.random_range(1.0..100.0), from.y);
                Link { id: format!("l{i}"), from, to, length: to.x - from.x }
            })
            .collect();
        let set = build_grids(&tazs, &links, min_size).unwrap();
        prop_assert_eq!(set.clone(), build_grids(&tazs, &links, min_size).unwrap());

        let inside = |p: Point| p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h;
        let expected: f64 = links.iter().filter(|l| inside(l.midpoint())).map(|l| l.length).sum();
        let assigned: f64 = set.grids.iter().map(|g| g.total_link_length).sum();
        prop_assert!((assigned - expected).abs() <= 1e-9 * expected.max(1.0));

        let adj = grid_adjacency(&set);
        for g in set.ids() {
            prop_assert!(!adj.are_adjacent(g, g));
            for &n in adj.neighbors(g) {
                prop_assert!(adj.are_adjacent(n, g));
            }
        }
    }
}

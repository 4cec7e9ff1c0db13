//! Spatial grouping of electrodes.
//!
//! Electrodes are partitioned by k-means on their 3-D coordinates, with the
//! cluster count either given, chosen by the elbow rule over a wcss curve, or
//! copied from a fixed montage map. Everything is deterministic under the
//! caller's seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::signal_io::ElectrodeLayout;

const MAX_LLOYD_ITERATIONS: usize = 300;

/// A partition of channels into spatial clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster index per channel, values in `[0, n_c)`.
    pub assignment: Vec<usize>,
    /// One 3-D centroid per cluster.
    pub centroids: Vec<[f64; 3]>,
    /// Within-cluster sum of squared distances to assigned centroids.
    pub wcss: f64,
    pub n_c: usize,
    /// `(original, compacted)` cluster index pairs, recorded when a fixed map
    /// arrived with gaps and was renumbered.
    pub remap: Option<Vec<(usize, usize)>>,
}

impl ClusterAssignment {
    /// Channel count per cluster, indexed by cluster.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_c];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Channel indices of one cluster, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_c == 0 {
            return Err(Error::Validation("cluster count is zero".into()));
        }
        if self.centroids.len() != self.n_c {
            return Err(Error::Validation(format!(
                "{} centroids for {} clusters",
                self.centroids.len(),
                self.n_c
            )));
        }
        if let Some(c) = self.assignment.iter().find(|&&c| c >= self.n_c) {
            return Err(Error::Validation(format!(
                "assignment references cluster {c}, n_c = {}",
                self.n_c
            )));
        }
        let sizes = self.cluster_sizes();
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::Validation(format!("cluster {empty} is empty")));
        }
        Ok(())
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

fn check_positions(positions: &[[f64; 3]]) -> Result<()> {
    for (i, p) in positions.iter().enumerate() {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "position {i} has non-finite coordinates"
            )));
        }
    }
    Ok(())
}

/// Greedy farthest-point initial centers: the given first point, then
/// repeatedly the point maximizing distance to its nearest chosen center
/// (ties to the lowest index).
fn farthest_point_init(positions: &[[f64; 3]], k: usize, first: usize) -> Vec<[f64; 3]> {
    let mut centers = vec![positions[first]];
    let mut nearest = vec![f64::INFINITY; positions.len()];
    while centers.len() < k {
        let last = centers.last().unwrap();
        for (i, p) in positions.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, last));
        }
        let (mut best, mut best_d) = (0usize, f64::NEG_INFINITY);
        for (i, &d) in nearest.iter().enumerate() {
            if d > best_d {
                best = i;
                best_d = d;
            }
        }
        centers.push(positions[best]);
    }
    centers
}

/// Assigns each point to its nearest center, ties to the lowest cluster index.
fn assign_nearest(positions: &[[f64; 3]], centers: &[[f64; 3]]) -> Vec<usize> {
    positions
        .iter()
        .map(|p| {
            let (mut best, mut best_d) = (0usize, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = dist2(p, center);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Moves the globally farthest point (from its current centroid) into each
/// empty cluster; repeats until none remain. Returns whether anything moved.
/// A donor cluster with at least two members always exists because
/// k <= point count.
fn repair_empty(
    assignment: &mut [usize],
    positions: &[[f64; 3]],
    centers: &[[f64; 3]],
    k: usize,
) -> bool {
    let mut repaired = false;
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignment.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return repaired;
        };
        let (mut steal, mut steal_d) = (usize::MAX, f64::NEG_INFINITY);
        for (i, p) in positions.iter().enumerate() {
            if sizes[assignment[i]] < 2 {
                continue;
            }
            let d = dist2(p, &centers[assignment[i]]);
            if d > steal_d {
                steal = i;
                steal_d = d;
            }
        }
        assignment[steal] = empty;
        repaired = true;
    }
}

fn cluster_means(positions: &[[f64; 3]], assignment: &[usize], k: usize) -> Vec<[f64; 3]> {
    let mut sums = vec![[0.0f64; 3]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in positions.iter().zip(assignment) {
        for d in 0..3 {
            sums[c][d] += p[d];
        }
        counts[c] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            for v in s.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    sums
}

fn total_wcss(positions: &[[f64; 3]], assignment: &[usize], centers: &[[f64; 3]]) -> f64 {
    positions
        .iter()
        .zip(assignment)
        .map(|(p, &c)| dist2(p, &centers[c]))
        .sum()
}

fn lloyd_run(positions: &[[f64; 3]], k: usize, first: usize) -> (Vec<usize>, Vec<[f64; 3]>, f64) {
    let mut centers = farthest_point_init(positions, k, first);
    let mut assignment: Vec<usize> = Vec::new();
    let mut prev_wcss = f64::INFINITY;
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut next = assign_nearest(positions, &centers);
        let repaired = repair_empty(&mut next, positions, &centers, k);
        if next == assignment {
            break;
        }
        assignment = next;
        centers = cluster_means(positions, &assignment, k);
        let wcss = total_wcss(positions, &assignment, &centers);
        // Standard Lloyd rounds never raise the objective; a repair round may.
        debug_assert!(
            repaired || wcss <= prev_wcss * (1.0 + 1e-12) + 1e-12,
            "wcss rose {prev_wcss} -> {wcss}"
        );
        prev_wcss = wcss;
    }
    let wcss = total_wcss(positions, &assignment, &centers);
    (assignment, centers, wcss)
}

/// Number of Lloyd starts per [`kmeans`] call on large point sets.
const KMEANS_RESTARTS: usize = 8;

/// Point counts up to this bound are clustered by exhaustive partition search.
const EXACT_SEARCH_MAX: usize = 9;

/// Reassign/update rounds from a given partition to an assignment fixed
/// point. Canonicalizes ties and restores the nearest-centroid postcondition
/// without ever raising the objective.
fn polish(
    positions: &[[f64; 3]],
    k: usize,
    initial: Vec<usize>,
) -> (Vec<usize>, Vec<[f64; 3]>, f64) {
    let mut assignment = initial;
    let mut centers = cluster_means(positions, &assignment, k);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut next = assign_nearest(positions, &centers);
        repair_empty(&mut next, positions, &centers, k);
        if next == assignment {
            break;
        }
        assignment = next;
        centers = cluster_means(positions, &assignment, k);
    }
    let wcss = total_wcss(positions, &assignment, &centers);
    (assignment, centers, wcss)
}

/// Minimum-wcss partition into exactly `k` nonempty clusters by enumerating
/// set partitions in restricted-growth order (ties keep the first found,
/// which is canonical). Bell(9) is ~21k, so this is instant at the sizes
/// [`kmeans`] routes here.
fn exact_search(positions: &[[f64; 3]], k: usize) -> (Vec<usize>, Vec<[f64; 3]>, f64) {
    fn recurse(
        positions: &[[f64; 3]],
        k: usize,
        i: usize,
        blocks: usize,
        labels: &mut Vec<usize>,
        best: &mut Option<(Vec<usize>, f64)>,
    ) {
        let n = positions.len();
        if blocks + (n - i) < k {
            return;
        }
        if i == n {
            let centers = cluster_means(positions, labels, k);
            let wcss = total_wcss(positions, labels, &centers);
            if best.as_ref().is_none_or(|(_, b)| wcss < *b) {
                *best = Some((labels.clone(), wcss));
            }
            return;
        }
        for c in 0..=blocks.min(k - 1) {
            labels[i] = c;
            recurse(positions, k, i + 1, blocks.max(c + 1), labels, best);
        }
    }

    let mut labels = vec![0usize; positions.len()];
    let mut best = None;
    recurse(positions, k, 0, 0, &mut labels, &mut best);
    let (assignment, _) = best.expect("k <= n guarantees a partition");
    polish(positions, k, assignment)
}

/// k-means over 3-D points. Small sets (up to 9 points) are solved exactly by
/// exhaustive partition search; larger ones run Lloyd assignment/update
/// rounds to an assignment fixed point (at most 300 per start) from several
/// greedy farthest-point starts whose first centers sweep a seed-shuffled
/// point order, keeping the lowest-wcss result (earliest start wins ties).
/// Empty clusters are repaired by stealing the globally farthest point.
pub fn kmeans(positions: &[[f64; 3]], k: usize, seed: u64) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    if k > positions.len() {
        return Err(Error::Parameter(format!(
            "k = {k} exceeds point count {}",
            positions.len()
        )));
    }
    check_positions(positions)?;

    let n = positions.len();
    let (assignment, centroids, wcss) = if n <= EXACT_SEARCH_MAX {
        exact_search(positions, k)
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut best: Option<(Vec<usize>, Vec<[f64; 3]>, f64)> = None;
        for first in order.into_iter().take(KMEANS_RESTARTS) {
            let run = lloyd_run(positions, k, first);
            if best.as_ref().is_none_or(|b| run.2 < b.2) {
                best = Some(run);
            }
        }
        best.expect("at least one start")
    };

    let result = ClusterAssignment {
        assignment,
        centroids,
        wcss,
        n_c: k,
        remap: None,
    };
    result.validate()?;
    Ok(result)
}

/// The wcss curve and the cluster count picked from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowResult {
    pub selected_k: usize,
    /// `wcss_curve[k - 1]` is the k-means wcss at k clusters, k = 1..=k_max.
    pub wcss_curve: Vec<f64>,
}

/// Runs k-means for every k in `1..=k_max` (independently seeded, in
/// parallel) and picks the k whose curve point lies farthest from the chord
/// between the curve's endpoints; ties go to the smaller k.
pub fn elbow_select(positions: &[[f64; 3]], k_max: usize, seed: u64) -> Result<ElbowResult> {
    if k_max < 2 {
        return Err(Error::Parameter("k_max must be >= 2".into()));
    }
    if k_max > positions.len() {
        return Err(Error::Parameter(format!(
            "k_max = {k_max} exceeds point count {}",
            positions.len()
        )));
    }

    let wcss_curve: Vec<f64> = (1..=k_max)
        .into_par_iter()
        .map(|k| kmeans(positions, k, derive_seed(seed, k as u64)).map(|a| a.wcss))
        .collect::<Result<_>>()?;

    // Perpendicular distance from (k, wcss(k)) to the chord joining the
    // endpoints; the constant denominator is dropped from the comparison.
    let (x1, y1) = (1.0, wcss_curve[0]);
    let (x2, y2) = (k_max as f64, wcss_curve[k_max - 1]);
    let mut selected_k = 1;
    let mut best = f64::NEG_INFINITY;
    for (i, &w) in wcss_curve.iter().enumerate() {
        let x = (i + 1) as f64;
        let d = ((y2 - y1) * x - (x2 - x1) * w + x2 * y1 - y2 * x1).abs();
        if d > best {
            best = d;
            selected_k = i + 1;
        }
    }

    Ok(ElbowResult {
        selected_k,
        wcss_curve,
    })
}

/// Adopts the layout's fixed cluster map verbatim, renumbering gapped indices
/// to a dense `0..n_c` (the renumbering is recorded in `remap`). Centroids are
/// cluster coordinate means; wcss is computed for reporting only, so the
/// nearest-centroid property of learned clusterings is not guaranteed here.
pub fn fixed_assignment(layout: &ElectrodeLayout) -> Result<ClusterAssignment> {
    layout.validate()?;
    let Some(map) = &layout.fixed_clusters else {
        return Err(Error::Validation(
            "layout carries no fixed cluster map".into(),
        ));
    };
    if map.len() != layout.n_channels() {
        return Err(Error::Validation(format!(
            "fixed cluster map covers {} channels, layout has {}",
            map.len(),
            layout.n_channels()
        )));
    }

    let mut originals: Vec<usize> = map.clone();
    originals.sort_unstable();
    originals.dedup();
    let compact = |orig: usize| originals.binary_search(&orig).unwrap();
    let has_gaps = originals
        .iter()
        .enumerate()
        .any(|(rank, &orig)| rank != orig);

    let assignment: Vec<usize> = map.iter().map(|&c| compact(c)).collect();
    let n_c = originals.len();
    let positions = layout.positions();
    let centroids = cluster_means(&positions, &assignment, n_c);
    let wcss = total_wcss(&positions, &assignment, &centroids);

    let result = ClusterAssignment {
        assignment,
        centroids,
        wcss,
        n_c,
        remap: has_gaps.then(|| {
            originals
                .iter()
                .enumerate()
                .map(|(rank, &orig)| (orig, rank))
                .collect()
        }),
    };
    result.validate()?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{blob_layout, Electrode};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn four_points() -> Vec<[f64; 3]> {
        vec![
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0],
            [10.0, 10.0, 10.0],
            [10.0, 10.0, 11.0],
        ]
    }

    /// Brute-force optimal wcss over every assignment of points to k
    /// non-empty clusters, centroids at cluster means.
    fn exhaustive_best_wcss(positions: &[[f64; 3]], k: usize) -> f64 {
        let n = positions.len();
        let mut best = f64::INFINITY;
        let total = k.pow(n as u32);
        for code in 0..total {
            let mut assignment = Vec::with_capacity(n);
            let mut rem = code;
            for _ in 0..n {
                assignment.push(rem % k);
                rem /= k;
            }
            let mut sizes = vec![0usize; k];
            for &c in &assignment {
                sizes[c] += 1;
            }
            if sizes.contains(&0) {
                continue;
            }
            let centers = cluster_means(positions, &assignment, k);
            best = best.min(total_wcss(positions, &assignment, &centers));
        }
        best
    }

    #[test]
    fn two_obvious_pairs() {
        let a = kmeans(&four_points(), 2, 9).unwrap();
        assert_eq!(a.assignment[0], a.assignment[1]);
        assert_eq!(a.assignment[2], a.assignment[3]);
        assert_ne!(a.assignment[0], a.assignment[2]);
        assert_relative_eq!(a.wcss, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn matches_exhaustive_optimum_on_four_points() {
        let positions = four_points();
        let best = exhaustive_best_wcss(&positions, 2);
        assert_relative_eq!(best, 1.0, max_relative = 1e-12);
        let a = kmeans(&positions, 2, 9).unwrap();
        assert_relative_eq!(a.wcss, best, max_relative = 1e-12);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let a = kmeans(&four_points(), 4, 1).unwrap();
        let mut sorted = a.assignment.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3]);
        assert_eq!(a.wcss, 0.0);
    }

    #[test]
    fn k_one_centroid_is_mean() {
        let a = kmeans(&four_points(), 1, 77).unwrap();
        assert_eq!(a.n_c, 1);
        assert_relative_eq!(a.centroids[0][0], 5.0, max_relative = 1e-12);
        assert_relative_eq!(a.centroids[0][1], 5.0, max_relative = 1e-12);
        assert_relative_eq!(a.centroids[0][2], 5.5, max_relative = 1e-12);
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        assert!(matches!(
            kmeans(&four_points(), 5, 0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let layout = blob_layout(24, 4, 1.0, 12.0, 5).unwrap();
        let positions = layout.positions();
        let a = kmeans(&positions, 4, 123).unwrap();
        let b = kmeans(&positions, 4, 123).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.wcss, b.wcss);
    }

    #[test]
    fn rigid_motion_leaves_partition_alone() {
        let layout = blob_layout(20, 5, 1.0, 15.0, 8).unwrap();
        let positions = layout.positions();
        let a = kmeans(&positions, 5, 42).unwrap();

        let (s, c) = 0.7f64.sin_cos();
        let moved: Vec<[f64; 3]> = positions
            .iter()
            .map(|p| {
                let (x, y, z) = (p[0], p[1], p[2]);
                [c * x - s * y + 3.0, s * x + c * y - 7.0, z + 2.0]
            })
            .collect();
        let b = kmeans(&moved, 5, 42).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_relative_eq!(a.wcss, b.wcss, max_relative = 1e-9);
    }

    #[test]
    fn elbow_finds_five_blobs() {
        let layout = blob_layout(20, 5, 1.0, 15.0, 3).unwrap();
        let elbow = elbow_select(&layout.positions(), 10, 17).unwrap();
        assert_eq!(elbow.selected_k, 5);
        assert_eq!(elbow.wcss_curve.len(), 10);
    }

    #[test]
    fn collinear_points_yield_decreasing_curve() {
        let positions: Vec<[f64; 3]> = (0..12).map(|i| [i as f64, 0.0, 0.0]).collect();
        let elbow = elbow_select(&positions, 8, 4).unwrap();
        for w in elbow.wcss_curve.windows(2) {
            assert!(w[1] < w[0], "curve not strictly decreasing: {w:?}");
        }
        assert!((1..=8).contains(&elbow.selected_k));
    }

    #[test]
    fn elbow_rejects_bad_k_max() {
        let positions = four_points();
        assert!(elbow_select(&positions, 1, 0).is_err());
        assert!(elbow_select(&positions, 5, 0).is_err());
    }

    fn layout_with_map(map: Vec<usize>) -> ElectrodeLayout {
        let channels = (0..map.len())
            .map(|i| Electrode {
                id: format!("c{i}"),
                position: [i as f64, 0.0, 0.0],
            })
            .collect();
        ElectrodeLayout {
            channels,
            fixed_clusters: Some(map),
        }
    }

    #[test]
    fn fixed_assignment_copies_map() {
        let layout = layout_with_map(vec![0, 0, 1, 1, 2, 2]);
        let a = fixed_assignment(&layout).unwrap();
        assert_eq!(a.assignment, vec![0, 0, 1, 1, 2, 2]);
        assert_eq!(a.n_c, 3);
        assert!(a.remap.is_none());
        assert_relative_eq!(a.centroids[0][0], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn fixed_assignment_compacts_gaps() {
        let layout = layout_with_map(vec![0, 0, 2, 2]);
        let a = fixed_assignment(&layout).unwrap();
        assert_eq!(a.assignment, vec![0, 0, 1, 1]);
        assert_eq!(a.n_c, 2);
        assert_eq!(a.remap, Some(vec![(0, 0), (2, 1)]));
    }

    #[test]
    fn fixed_assignment_single_cluster_mean() {
        let layout = layout_with_map(vec![0, 0, 0, 0]);
        let a = fixed_assignment(&layout).unwrap();
        assert_eq!(a.n_c, 1);
        assert_relative_eq!(a.centroids[0][0], 1.5, max_relative = 1e-12);
        assert_relative_eq!(
            a.wcss,
            (1.5f64 * 1.5) * 2.0 + (0.5f64 * 0.5) * 2.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn fixed_assignment_requires_map() {
        let mut layout = layout_with_map(vec![0, 1]);
        layout.fixed_clusters = None;
        assert!(matches!(
            fixed_assignment(&layout),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn nine_group_montage_keeps_nine_clusters() {
        let map: Vec<usize> = (0..36).map(|i| i / 4).collect();
        let layout = layout_with_map(map);
        let a = fixed_assignment(&layout).unwrap();
        assert_eq!(a.n_c, 9);
        assert!(a.cluster_sizes().iter().all(|&s| s == 4));
    }

    proptest! {
        #[test]
        fn partition_is_well_formed(
            n in 3usize..18,
            k in 1usize..6,
            seed in 0u64..1000,
        ) {
            let k = k.min(n);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let positions: Vec<[f64; 3]> = (0..n)
                .map(|_| {
                    [
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                        rng.random_range(-5.0..5.0),
                    ]
                })
                .collect();
            let a = kmeans(&positions, k, seed).unwrap();
            a.validate().unwrap();
            prop_assert_eq!(a.assignment.len(), n);
            prop_assert_eq!(a.n_c, k);

            // Nearest-centroid property: no centroid strictly closer than the
            // assigned one.
            for (i, p) in positions.iter().enumerate() {
                let mine = dist2(p, &a.centroids[a.assignment[i]]);
                for (c, center) in a.centroids.iter().enumerate() {
                    let d = dist2(p, center);
                    prop_assert!(
                        d >= mine - 1e-9,
                        "point {i} is nearer to cluster {c}: {d} < {mine}"
                    );
                }
            }

            // Reported wcss matches a recomputation.
            let recomputed = total_wcss(&positions, &a.assignment, &a.centroids);
            prop_assert!((a.wcss - recomputed).abs() <= 1e-9 * recomputed.max(1.0));
        }
    }
}

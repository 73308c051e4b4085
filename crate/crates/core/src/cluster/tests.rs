use super::*;
use proptest::prelude::*;

fn set(points: &[&[f64]]) -> LatentSet {
    let n = points.len();
    LatentSet::new(points.iter().map(|p| p.to_vec()).collect(), vec![0; n], "t", "tap").unwrap()
}

fn cfg(clusters: usize, seed: u64) -> KMeansConfig {
    KMeansConfig {
        clusters,
        seed,
        ..KMeansConfig::default()
    }
}

fn model(centers: &[&[f64]]) -> ClusterModel {
    ClusterModel {
        centers: centers.iter().map(|c| c.to_vec()).collect(),
        assignments: Vec::new(),
        inertia: 0.0,
        traces: Vec::new(),
    }
}

/// Minimum k-means objective over every assignment of points to `k`
/// labelled groups, with each group's centroid as its center.
fn exhaustive_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut cost = 0.0;
        for g in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == g).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; dim];
            for p in &members {
                for (m, x) in mean.iter_mut().zip(p.iter()) {
                    *m += x / members.len() as f64;
                }
            }
            cost += members.iter().map(|p| sq_dist(p, &mean)).sum::<f64>();
        }
        best = best.min(cost);
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn single_cluster_is_the_centroid() {
    let m = kmeans_fit(&set(&[&[0.0, 0.0], &[2.0, 2.0]]), &cfg(1, 0)).unwrap();
    assert_eq!(m.centers, vec![vec![1.0, 1.0]]);
    assert_eq!(m.inertia, 4.0);
}

#[test]
fn two_clusters_on_a_line_match_the_exhaustive_optimum() {
    let s = set(&[&[0.0], &[1.0], &[10.0], &[11.0]]);
    let oracle = exhaustive_optimum(&s.vectors, 2);
    assert_eq!(oracle, 1.0);
    for seed in 0..10 {
        let m = kmeans_fit(&s, &cfg(2, seed)).unwrap();
        let mut c: Vec<f64> = m.centers.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, [0.5, 10.5]);
        assert_eq!(m.inertia, oracle);
    }
}

#[test]
fn errors() {
    assert!(matches!(
        kmeans_fit(&set(&[&[0.0]]), &cfg(2, 0)),
        Err(Error::TooFewPoints { points: 1, clusters: 2 })
    ));
    assert!(matches!(kmeans_fit(&set(&[&[0.0]]), &cfg(0, 0)), Err(Error::Config(_))));
    assert!(LatentSet::new(vec![vec![0.0], vec![0.0, 1.0]], vec![0, 0], "", "").is_err());
    assert!(LatentSet::new(vec![vec![0.0]], vec![0, 1], "", "").is_err());
    assert!(matches!(assign(&model(&[&[0.0, 0.0]]), &[1.0]), Err(Error::Dimension { .. })));
}

#[test]
fn duplicate_points_keep_the_cluster_count() {
    let s = set(&[&[1.0], &[1.0], &[1.0], &[5.0]]);
    let m = kmeans_fit(&s, &cfg(3, 2)).unwrap();
    assert_eq!(m.clusters(), 3);
    assert_eq!(m.inertia, 0.0);
    assert!(m.assignments.iter().all(|&a| a < 3));
}

#[test]
fn fitting_is_deterministic_per_seed() {
    let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 37 % 11) as f64, (i * 13 % 7) as f64]).collect();
    let s = LatentSet::new(pts, vec![0; 40], "", "").unwrap();
    assert_eq!(kmeans_fit(&s, &cfg(4, 9)).unwrap(), kmeans_fit(&s, &cfg(4, 9)).unwrap());
}

#[test]
fn assignment_examples() {
    let m = model(&[&[0.0, 0.0], &[4.0, 4.0]]);
    assert_eq!(assign(&m, &[1.0, 1.0]).unwrap(), 0);
    assert_eq!(assign(&m, &[4.0, 4.0]).unwrap(), 1);
    assert_eq!(assign(&m, &[2.0, 2.0]).unwrap(), 0);
}

#[test]
fn occupancy_examples() {
    let m = model(&[&[0.0], &[10.0]]);
    let occ = occupancy(&m, &set(&[&[0.0], &[0.0], &[0.0]])).unwrap();
    assert_eq!(occ.percentages, [100.0, 0.0]);
    assert!(matches!(occupancy(&m, &LatentSet::new(vec![], vec![], "", "").unwrap()), Err(Error::EmptyDataset)));
}

#[test]
fn equal_blobs_get_equal_shares() {
    let mut r = crate::rng::seeded(3);
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
    let pts: Vec<Vec<f64>> = (0..400)
        .map(|i| {
            let c = centers[i % 4];
            vec![c[0] + 0.5 * rng::normal(&mut r), c[1] + 0.5 * rng::normal(&mut r)]
        })
        .collect();
    let s = LatentSet::new(pts, vec![0; 400], "", "").unwrap();
    let m = kmeans_fit(&s, &cfg(4, 1)).unwrap();
    let occ = occupancy(&m, &s).unwrap();
    assert!((occ.percentages.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    for p in occ.percentages {
        assert!((p - 25.0).abs() <= 2.0, "{p}");
    }
}

fn points_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
    (1usize..=3, 1usize..=2).prop_flat_map(|(k, dim)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), k.max(2)..=8),
            Just(k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn never_undercuts_the_exhaustive_optimum((pts, k) in points_strategy(), seed in any::<u64>()) {
        let n = pts.len();
        let s = LatentSet::new(pts, vec![0; n], "", "").unwrap();
        let m = kmeans_fit(&s, &cfg(k, seed)).unwrap();
        let oracle = exhaustive_optimum(&s.vectors, k);
        prop_assert!(m.inertia >= oracle - 1e-9 * (1.0 + oracle));
        prop_assert!((m.inertia - inertia(&m.centers, &s.vectors, &m.assignments)).abs() <= 1e-12 * (1.0 + m.inertia));
        for trace in &m.traces {
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
        }
    }

    #[test]
    fn centers_are_assigned_to_themselves(pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..6)) {
        let m = ClusterModel { centers: pts.clone(), assignments: vec![], inertia: 0.0, traces: vec![] };
        for (i, c) in pts.iter().enumerate() {
            if pts[..i].iter().all(|p| p != c) {
                prop_assert_eq!(assign(&m, c).unwrap(), i);
            }
        }
    }
}

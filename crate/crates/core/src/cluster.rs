//! k-means++ clustering of latent vectors and occupancy tables.
//!
//! Seeding uses D² sampling; Lloyd iterations then alternate assignment and
//! mean updates until the largest center displacement drops below `tol` or
//! `max_iters` is reached. A cluster that loses all of its points is
//! re-seeded at the point farthest from its current center, so the cluster
//! count stays fixed. Distance ties go to the lowest center index.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{self, SplitMix64};
use crate::tensor::sq_dist;
use crate::{Error, Result};

/// Latent vectors of a dataset, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentSet {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Subject of each row; empty when unknown.
    pub subject_ids: Vec<u64>,
    pub source: String,
    pub tap: String,
}

impl LatentSet {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<u8>, source: impl Into<String>, tap: impl Into<String>) -> Result<Self> {
        let set = Self {
            vectors,
            labels,
            subject_ids: Vec::new(),
            source: source.into(),
            tap: tap.into(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn with_subjects(mut self, subject_ids: Vec<u64>) -> Result<Self> {
        self.subject_ids = subject_ids;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vectors.len();
        if self.labels.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: self.labels.len(),
            });
        }
        if !self.subject_ids.is_empty() && self.subject_ids.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: self.subject_ids.len(),
            });
        }
        if self.labels.iter().any(|&l| l > 1) {
            return Err(Error::Config("labels must be 0 or 1".into()));
        }
        if let Some(first) = self.vectors.first() {
            for v in &self.vectors {
                if v.len() != first.len() {
                    return Err(Error::Dimension {
                        expected: first.len(),
                        found: v.len(),
                    });
                }
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(Error::NonFinite);
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Vector length, or `None` for an empty set.
    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct KMeansConfig {
    pub clusters: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
    /// Independent seeded restarts; the lowest final inertia wins.
    pub n_init: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            clusters: 5,
            seed: 0,
            max_iters: 300,
            tol: 1e-8,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances of each vector to its assigned center.
    pub inertia: f64,
    /// Inertia after every assignment step, one list per restart.
    pub traces: Vec<Vec<f64>>,
}

impl ClusterModel {
    pub fn clusters(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }
}

/// Index of the nearest center and its squared distance; ties go to the
/// lowest index.
pub fn nearest(centers: &[Vec<f64>], v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub fn assign(model: &ClusterModel, v: &[f64]) -> Result<usize> {
    if v.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: v.len(),
        });
    }
    Ok(nearest(&model.centers, v).0)
}

/// Sum of squared distances between each vector and its assigned center.
pub fn inertia(centers: &[Vec<f64>], vectors: &[Vec<f64>], assignments: &[usize]) -> f64 {
    vectors
        .iter()
        .zip(assignments)
        .map(|(v, &a)| sq_dist(v, &centers[a]))
        .sum()
}

fn assign_all(centers: &[Vec<f64>], vectors: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    vectors.iter().map(|v| nearest(centers, v)).unzip()
}

fn seed_plus_plus(vectors: &[Vec<f64>], k: usize, r: &mut SplitMix64) -> Vec<Vec<f64>> {
    let mut centers = vec![vectors[rng::index(r, vectors.len())].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng::uniform(r, 0.0, total);
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the last increment
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            rng::index(r, vectors.len())
        };
        let c = vectors[pick].clone();
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(sq_dist(v, &c));
        }
        centers.push(c);
    }
    centers
}

fn lloyd(vectors: &[Vec<f64>], k: usize, cfg: &KMeansConfig, r: &mut SplitMix64) -> (Vec<Vec<f64>>, Vec<usize>, f64, Vec<f64>) {
    let dim = vectors[0].len();
    let mut centers = seed_plus_plus(vectors, k, r);
    let (mut assignments, mut dist) = assign_all(&centers, vectors);
    let mut trace = vec![dist.iter().sum::<f64>()];
    for _ in 0..cfg.max_iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut next = centers.clone();
        for j in 0..k {
            if counts[j] > 0 {
                next[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let (far, _) = dist
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
                next[j] = vectors[far].clone();
                counts[assignments[far]] -= 1;
                assignments[far] = j;
                counts[j] = 1;
                dist[far] = 0.0;
            }
        }
        let shift = centers
            .iter()
            .zip(&next)
            .map(|(a, b)| libm::sqrt(sq_dist(a, b)))
            .fold(0.0, f64::max);
        centers = next;
        (assignments, dist) = assign_all(&centers, vectors);
        trace.push(dist.iter().sum::<f64>());
        if shift < cfg.tol {
            break;
        }
    }
    let total = inertia(&centers, vectors, &assignments);
    (centers, assignments, total, trace)
}

pub fn kmeans_fit(latents: &LatentSet, cfg: &KMeansConfig) -> Result<ClusterModel> {
    latents.validate()?;
    if cfg.clusters == 0 || cfg.n_init == 0 {
        return Err(Error::Config("cluster count and restarts must be at least 1".into()));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::Config("tolerance must be non-negative".into()));
    }
    if latents.len() < cfg.clusters {
        return Err(Error::TooFewPoints {
            points: latents.len(),
            clusters: cfg.clusters,
        });
    }
    let mut best: Option<ClusterModel> = None;
    let mut traces = Vec::with_capacity(cfg.n_init);
    for run in 0..cfg.n_init {
        let mut r = rng::stream(cfg.seed, &[run as u64]);
        let (centers, assignments, total, trace) = lloyd(&latents.vectors, cfg.clusters, cfg, &mut r);
        traces.push(trace);
        if best.as_ref().is_none_or(|b| total < b.inertia) {
            best = Some(ClusterModel {
                centers,
                assignments,
                inertia: total,
                traces: Vec::new(),
            });
        }
    }
    let mut model = best.expect("at least one restart");
    model.traces = traces;
    Ok(model)
}

/// Share of a latent set falling into each cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy {
    pub counts: Vec<usize>,
    pub percentages: Vec<f64>,
}

pub fn occupancy(model: &ClusterModel, latents: &LatentSet) -> Result<Occupancy> {
    if latents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![0; model.clusters()];
    for v in &latents.vectors {
        counts[assign(model, v)?] += 1;
    }
    let n = latents.len() as f64;
    let percentages = counts.iter().map(|&c| 100.0 * c as f64 / n).collect();
    Ok(Occupancy { counts, percentages })
}

#[cfg(test)]
mod tests;

//! Labeled prototype sets and nearest-prototype classification.
//!
//! A prototype is a cluster center of latent vectors carrying the majority
//! label of its members. Sets built from different networks can be merged
//! into one predictor once their dimensions agree; PCA maps the larger
//! latent space onto the smaller one.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::cluster::{nearest, ClusterModel, LatentSet};
use crate::net::Accuracy;
use crate::tensor::sq_dist;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub center: Vec<f64>,
    pub label: u8,
    pub annotation: String,
    pub source: String,
    /// Fraction of the training latents assigned to this prototype.
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub network: String,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub prototypes: Vec<Prototype>,
    pub dim: usize,
    pub provenance: Vec<Provenance>,
}

impl PrototypeSet {
    pub fn new(prototypes: Vec<Prototype>, dim: usize, provenance: Vec<Provenance>) -> Result<Self> {
        let set = Self {
            prototypes,
            dim,
            provenance,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            prototypes: Vec::new(),
            dim,
            provenance: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.prototypes {
            if p.center.len() != self.dim {
                return Err(Error::Dimension {
                    expected: self.dim,
                    found: p.center.len(),
                });
            }
            if !p.center.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite);
            }
            if p.label > 1 || !(0.0..=1.0).contains(&p.support) {
                return Err(Error::Config("prototype label must be 0/1 and support in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        self.prototypes.iter().map(|p| p.center.clone()).collect()
    }

    /// A set lacking one of the labels can still classify, but never
    /// predicts the missing label.
    pub fn covers_both_labels(&self) -> bool {
        [0, 1].iter().all(|l| self.prototypes.iter().any(|p| p.label == *l))
    }
}

/// One prototype per cluster, labeled by majority vote of the latents
/// assigned to it (ties go to label 1).
pub fn build_prototypes(
    model: &ClusterModel,
    latents: &LatentSet,
    annotations: Option<&[String]>,
    network: &str,
) -> Result<PrototypeSet> {
    latents.validate()?;
    if latents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = model.dim();
    if latents.dim() != Some(dim) {
        return Err(Error::Dimension {
            expected: dim,
            found: latents.dim().unwrap_or(0),
        });
    }
    if let Some(a) = annotations {
        if a.len() != model.clusters() {
            return Err(Error::Dimension {
                expected: model.clusters(),
                found: a.len(),
            });
        }
    }
    let mut votes = vec![[0usize; 2]; model.clusters()];
    for (v, &label) in latents.vectors.iter().zip(&latents.labels) {
        votes[nearest(&model.centers, v).0][usize::from(label)] += 1;
    }
    let empty: Vec<usize> = (0..votes.len()).filter(|&i| votes[i] == [0, 0]).collect();
    if !empty.is_empty() {
        return Err(Error::EmptyClusters { clusters: empty });
    }
    let n = latents.len() as f64;
    let prototypes = model
        .centers
        .iter()
        .zip(&votes)
        .enumerate()
        .map(|(i, (c, v))| Prototype {
            center: c.clone(),
            label: u8::from(v[1] >= v[0]),
            annotation: annotations.map(|a| a[i].clone()).unwrap_or_default(),
            source: latents.source.clone(),
            support: (v[0] + v[1]) as f64 / n,
        })
        .collect();
    PrototypeSet::new(
        prototypes,
        dim,
        vec![Provenance {
            network: network.into(),
            dataset: latents.source.clone(),
        }],
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub label: u8,
    pub index: usize,
    /// Euclidean distance to the chosen prototype.
    pub distance: f64,
}

/// Nearest prototype under the same tie rule as cluster assignment.
pub fn classify(set: &PrototypeSet, v: &[f64]) -> Result<Classification> {
    if set.is_empty() {
        return Err(Error::NoPrototypes);
    }
    if v.len() != set.dim {
        return Err(Error::Dimension {
            expected: set.dim,
            found: v.len(),
        });
    }
    let mut best = (0, f64::INFINITY);
    for (i, p) in set.prototypes.iter().enumerate() {
        let d = sq_dist(&p.center, v);
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(Classification {
        label: set.prototypes[best.0].label,
        index: best.0,
        distance: libm::sqrt(best.1),
    })
}

/// Per-group prototype counts: one row per subject, or a single row when
/// grouping is off or subjects are unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub subject: Option<u64>,
    pub label: u8,
    pub counts: Vec<usize>,
    /// Column with the most samples (lowest index on ties).
    pub max_column: usize,
    /// Percent of samples whose prototype label matches their own.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyReport {
    pub rows: Vec<ReportRow>,
    pub overall: Accuracy,
}

pub fn classify_report(set: &PrototypeSet, latents: &LatentSet, group_by_subject: bool) -> Result<ClassifyReport> {
    latents.validate()?;
    if latents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let grouped = group_by_subject && !latents.subject_ids.is_empty();
    let mut keys: Vec<Option<u64>> = Vec::new();
    let mut rows: Vec<(Vec<usize>, usize, usize, u8)> = Vec::new();
    let mut overall = Accuracy::default();
    for (i, (v, &label)) in latents.vectors.iter().zip(&latents.labels).enumerate() {
        let c = classify(set, v)?;
        overall.record(label, c.label);
        let key = grouped.then(|| latents.subject_ids[i]);
        let r = match keys.iter().position(|k| *k == key) {
            Some(r) => r,
            None => {
                keys.push(key);
                rows.push((vec![0; set.len()], 0, 0, label));
                rows.len() - 1
            }
        };
        rows[r].0[c.index] += 1;
        rows[r].1 += usize::from(c.label == label);
        rows[r].2 += 1;
    }
    let rows = keys
        .into_iter()
        .zip(rows)
        .map(|(subject, (counts, correct, total, label))| {
            let max_column = counts
                .iter()
                .enumerate()
                .fold(0, |b, (i, &c)| if c > counts[b] { i } else { b });
            ReportRow {
                subject,
                label,
                counts,
                max_column,
                accuracy: 100.0 * correct as f64 / total as f64,
            }
        })
        .collect();
    Ok(ClassifyReport { rows, overall })
}

/// Linear map onto the top principal components of a latent set.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaMap {
    pub mean: Vec<f64>,
    /// `k` rows of length `M`, orthonormal.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaMap {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                found: v.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }
}

/// Relative eigenvalue size below which a direction counts as degenerate.
const RANK_TOL: f64 = 1e-10;

/// Top-`k` eigenvectors of the sample covariance (divisor `N - 1`), sorted
/// by decreasing eigenvalue. Each component's first entry larger than
/// `1e-12` in magnitude is made positive.
pub fn pca_fit(latents: &LatentSet, k: usize) -> Result<PcaMap> {
    latents.validate()?;
    let m = latents.dim().ok_or(Error::EmptyDataset)?;
    if k == 0 || k > m {
        return Err(Error::Config("PCA target dimension must lie in 1..=M".into()));
    }
    let n = latents.len();
    if n < 2 {
        return Err(Error::RankDeficient {
            requested: k,
            achievable: 0,
        });
    }
    let mut mean = vec![0.0; m];
    for v in &latents.vectors {
        for (a, x) in mean.iter_mut().zip(v) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for v in &latents.vectors {
        for i in 0..m {
            let di = v[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (v[j] - mean[j]);
            }
        }
    }
    for i in 0..m {
        for j in 0..=i {
            let c = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let achievable = order
        .iter()
        .filter(|&&i| top > 0.0 && eig.eigenvalues[i] > RANK_TOL * top)
        .count();
    if achievable < k {
        return Err(Error::RankDeficient { requested: k, achievable });
    }
    let components = order[..k]
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            if c.iter().find(|x| libm::fabs(**x) > 1e-12).is_some_and(|x| *x < 0.0) {
                c.iter_mut().for_each(|x| *x = -*x);
            }
            c
        })
        .collect();
    Ok(PcaMap {
        mean,
        components,
        explained_variance: order[..k].iter().map(|&i| eig.eigenvalues[i]).collect(),
    })
}

pub fn pca_project(map: &PcaMap, set: &PrototypeSet) -> Result<PrototypeSet> {
    let prototypes = set
        .prototypes
        .iter()
        .map(|p| {
            Ok(Prototype {
                center: map.project(&p.center)?,
                ..p.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    PrototypeSet::new(prototypes, map.k(), set.provenance.clone())
}

pub fn project_latents(map: &PcaMap, latents: &LatentSet) -> Result<LatentSet> {
    Ok(LatentSet {
        vectors: latents
            .vectors
            .iter()
            .map(|v| map.project(v))
            .collect::<Result<_>>()?,
        ..latents.clone()
    })
}

/// Union of two sets. When dimensions differ, `reconcile` must map the
/// higher-dimensional set onto the lower dimension; the lower set is never
/// lifted. An empty set is compatible with any dimension.
pub fn merge(a: &PrototypeSet, b: &PrototypeSet, reconcile: Option<&PcaMap>) -> Result<PrototypeSet> {
    let (a, b) = if a.dim == b.dim || a.is_empty() || b.is_empty() {
        (a.clone(), b.clone())
    } else {
        let (hi_is_a, lo) = if a.dim > b.dim { (true, b.dim) } else { (false, a.dim) };
        let hi_dim = a.dim.max(b.dim);
        match reconcile {
            Some(map) if map.input_dim() == hi_dim && map.k() == lo => {
                if hi_is_a {
                    (pca_project(map, a)?, b.clone())
                } else {
                    (a.clone(), pca_project(map, b)?)
                }
            }
            _ => {
                return Err(Error::Dimension {
                    expected: a.dim,
                    found: b.dim,
                })
            }
        }
    };
    let dim = if a.is_empty() { b.dim } else { a.dim };
    let mut provenance = a.provenance;
    for p in b.provenance {
        if !provenance.contains(&p) {
            provenance.push(p);
        }
    }
    let mut prototypes = a.prototypes;
    prototypes.extend(b.prototypes);
    PrototypeSet::new(prototypes, dim, provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Novelty {
    Known,
    Novel,
}

/// `Novel` when every prototype lies farther than `threshold`.
pub fn novelty_check(set: &PrototypeSet, v: &[f64], threshold: f64) -> Result<Novelty> {
    if !(threshold > 0.0) {
        return Err(Error::Config("novelty threshold must be positive".into()));
    }
    let c = classify(set, v)?;
    Ok(if c.distance > threshold {
        Novelty::Novel
    } else {
        Novelty::Known
    })
}

/// Nearest-rank `percentile` of the distances from each latent to its
/// closest prototype. With 95, at most 5% of `latents` exceed it.
pub fn calibrate_novelty(set: &PrototypeSet, latents: &LatentSet, percentile: f64) -> Result<f64> {
    if latents.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::Config("percentile must lie in (0, 100]".into()));
    }
    let mut d = latents
        .vectors
        .iter()
        .map(|v| classify(set, v).map(|c| c.distance))
        .collect::<Result<Vec<_>>>()?;
    d.sort_by(f64::total_cmp);
    let rank = libm::ceil(percentile / 100.0 * d.len() as f64) as usize;
    Ok(d[rank.clamp(1, d.len()) - 1])
}

//! Domain similarity between datasets.
//!
//! A domain is summarised by per-class feature centroids weighted by the
//! fraction of images in each class. The distance between two domains is the
//! Earth Mover's Distance between those weighted point sets, and similarity is
//! `exp(-gamma * distance)`.

pub mod io;
pub mod transport;

use std::cmp::Ordering;

use log::warn;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_GAMMA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainProfile {
    pub name: String,
    /// `[n_classes, D]`.
    pub centroids: Tensor,
    /// Per-class mass, summing to one.
    pub weights: Vec<f64>,
    pub class_names: Vec<String>,
}

impl DomainProfile {
    pub fn new(
        name: impl Into<String>,
        centroids: Tensor,
        weights: Vec<f64>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let p = DomainProfile {
            name: name.into(),
            centroids,
            weights,
            class_names,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.centroids.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let (n, _) = self.centroids.dims2()?;
        if n != self.weights.len() || n != self.class_names.len() {
            return Err(Error::shape(format!(
                "{} centroid rows, {} weights, {} class names",
                n,
                self.weights.len(),
                self.class_names.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidInput("class weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("class weights sum to {total}, not 1")));
        }
        if !self.centroids.is_finite() {
            return Err(Error::InvalidInput("centroids must be finite".into()));
        }
        Ok(())
    }
}

/// Per-class mean feature and image-count fraction. Class indices that never
/// occur are dropped and the rest renumbered in increasing order.
pub fn build_profile(
    features: &Tensor,
    labels: &[usize],
    class_names: &[String],
    name: &str,
) -> Result<DomainProfile> {
    let (n, d) = features.dims2()?;
    if labels.is_empty() {
        return Err(Error::EmptyDomain(format!("{name}: no samples")));
    }
    if labels.len() != n {
        return Err(Error::shape(format!("{n} feature rows but {} labels", labels.len())));
    }
    let n_labels = labels.iter().max().unwrap() + 1;
    let mut counts = vec![0usize; n_labels];
    let mut sums = vec![0.0; n_labels * d];
    for (row, &y) in labels.iter().enumerate() {
        counts[y] += 1;
        for (s, &v) in sums[y * d..(y + 1) * d].iter_mut().zip(features.row(row)) {
            *s += v;
        }
    }
    let present: Vec<usize> = (0..n_labels).filter(|&y| counts[y] > 0).collect();
    if present.len() < n_labels {
        warn!(
            "{name}: {} class indices have no samples; compacting labels",
            n_labels - present.len()
        );
    }
    let mut centroids = Vec::with_capacity(present.len() * d);
    let mut weights = Vec::with_capacity(present.len());
    let mut names = Vec::with_capacity(present.len());
    for &y in &present {
        let inv = 1.0 / counts[y] as f64;
        centroids.extend(sums[y * d..(y + 1) * d].iter().map(|s| s * inv));
        weights.push(counts[y] as f64 / n as f64);
        names.push(class_names.get(y).cloned().unwrap_or_else(|| format!("class{y}")));
    }
    DomainProfile::new(name, Tensor::new(vec![present.len(), d], centroids)?, weights, names)
}

/// Euclidean distances between every source and target centroid, `[m, n]`.
pub fn distance_matrix(source: &DomainProfile, target: &DomainProfile) -> Result<Tensor> {
    let (m, d) = source.centroids.dims2()?;
    let (n, dt) = target.centroids.dims2()?;
    if d != dt {
        return Err(Error::InvalidDim(format!(
            "{} has {d}-dimensional features, {} has {dt}",
            source.name, target.name
        )));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let a = source.centroids.row(i);
        for j in 0..n {
            let b = target.centroids.row(j);
            out.push(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    Tensor::new(vec![m, n], out)
}

#[derive(Debug, Clone)]
pub struct FlowPlan {
    /// Optimal flow `[m, n]`.
    pub flow: Tensor,
    /// Flow-weighted mean ground distance.
    pub cost: f64,
    /// Ground distances `[m, n]`.
    pub dist: Tensor,
}

fn normalized(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Earth Mover's Distance between two profiles with the optimal plan.
pub fn emd(source: &DomainProfile, target: &DomainProfile) -> Result<FlowPlan> {
    let dist = distance_matrix(source, target)?;
    let (ms, mt): (f64, f64) = (source.weights.iter().sum(), target.weights.iter().sum());
    if (ms - mt).abs() > 1e-6 {
        return Err(Error::Unbalanced {
            source_mass: ms,
            target_mass: mt,
        });
    }
    let t = transport::solve(&normalized(&source.weights), &normalized(&target.weights), dist.data())?;
    let cost = if t.total_flow > 0.0 {
        t.total_cost / t.total_flow
    } else {
        0.0
    };
    Ok(FlowPlan {
        flow: Tensor::new(dist.shape().to_vec(), t.flow)?,
        cost,
        dist,
    })
}

pub fn similarity(cost: f64, gamma: f64) -> Result<f64> {
    if !(cost >= 0.0) {
        return Err(Error::InvalidInput(format!("EMD cost must be non-negative, got {cost}")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be non-negative, got {gamma}")));
    }
    Ok((-gamma * cost).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedSource {
    pub name: String,
    pub cost: f64,
    pub sim: f64,
}

/// Sources ordered by decreasing similarity to the target, ties by name.
pub fn rank_sources(
    sources: &[DomainProfile],
    target: &DomainProfile,
    gamma: f64,
) -> Result<Vec<RankedSource>> {
    if sources.is_empty() {
        return Err(Error::InvalidConfig("need at least one source domain".into()));
    }
    let mut ranked = sources
        .iter()
        .map(|s| {
            let cost = emd(s, target)?.cost;
            Ok(RankedSource {
                name: s.name.clone(),
                cost,
                sim: similarity(cost, gamma)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.sim
            .partial_cmp(&a.sim)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(ranked)
}

/// The `k` source classes closest to any target class, scored by
/// `exp(-gamma * min_j d_ij)`. Ties go to the lower index.
pub fn top_k_categories(
    source: &DomainProfile,
    target: &DomainProfile,
    k: usize,
    gamma: f64,
) -> Result<Vec<usize>> {
    let m = source.num_classes();
    if k == 0 || k > m {
        return Err(Error::InvalidK { k, classes: m });
    }
    let dist = distance_matrix(source, target)?;
    let scores: Vec<f64> = (0..m)
        .map(|i| {
            let nearest = dist.row(i).iter().copied().fold(f64::INFINITY, f64::min);
            (-gamma * nearest).exp()
        })
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

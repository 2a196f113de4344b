//! Multi-domain datasets: synthetic generation with rotation as the domain
//! shift, leave-one-domain-out splitting, and deterministic mini-batch
//! sampling.
//!
//! Each dataset carries an instrumentation counter that increments whenever
//! sample data is handed out. After a training run the held-out target's
//! counter must still be zero; that is the proof no target sample leaked
//! into training.

use alloc::format;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::Error;
use crate::rng::{derive2, Rng};

const SALT_DOMAIN_STREAM: u64 = 0x11;
const SALT_BATCH_SHUFFLE: u64 = 0x12;

/// One labeled observation: features, class id, domain id.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
    pub d: usize,
}

/// Synthetic dataset family. Rotation of the whole configuration is the
/// domain shift in both families; it perturbs the marginal and the
/// class-conditional feature distributions together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// K Gaussian blobs with means equally spaced on the unit circle.
    RotatedBlobs,
    /// Two interleaved half-circles; requires exactly two classes.
    RotatedMoons,
}

/// Generator parameters for a synthetic multi-domain dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub family: Family,
    pub num_classes: usize,
    /// One source/target domain per angle.
    pub angles_deg: Vec<f64>,
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be >= 1".into()));
        }
        if self.angles_deg.len() < 2 {
            return Err(Error::Config("need at least 2 domains".into()));
        }
        for (i, a) in self.angles_deg.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Config(format!("angle {i} is not finite")));
            }
            if self.angles_deg[..i].contains(a) {
                return Err(Error::Config(format!("duplicate domain angle {a}")));
            }
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        if self.family == Family::RotatedMoons && self.num_classes != 2 {
            return Err(Error::Config("moons requires K=2".into()));
        }
        Ok(())
    }
}

/// Rotates a point by `angle_deg` counterclockwise. Angles are normalized
/// modulo 360 first, so a 360-degree rotation is exactly the identity.
pub fn rotate_xy(x: f64, y: f64, angle_deg: f64) -> (f64, f64) {
    let mut wrapped = angle_deg % 360.0;
    if wrapped < 0.0 {
        wrapped += 360.0;
    }
    let theta = wrapped * core::f64::consts::PI / 180.0;
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    (x * cos - y * sin, x * sin + y * cos)
}

/// Labeled samples grouped by a dense domain id, plus the mapping back to
/// the original ids (identity until a leave-one-out split re-indexes).
#[derive(Debug)]
pub struct DomainDataset {
    domains: Vec<Vec<Sample>>,
    domain_ids: Vec<usize>,
    num_classes: usize,
    feature_dim: usize,
    reads: AtomicU64,
}

impl Clone for DomainDataset {
    fn clone(&self) -> Self {
        DomainDataset {
            domains: self.domains.clone(),
            domain_ids: self.domain_ids.clone(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim,
            reads: AtomicU64::new(0),
        }
    }
}

impl DomainDataset {
    /// Groups samples by their domain id, which must densely cover
    /// `0..max+1` with no empty domain.
    pub fn from_samples(samples: Vec<Sample>, num_classes: usize) -> Result<Self, Error> {
        if samples.is_empty() {
            return Err(Error::Config("no samples".into()));
        }
        let feature_dim = samples[0].x.len();
        if feature_dim == 0 {
            return Err(Error::Config(
                "samples must have at least one feature".into(),
            ));
        }
        let num_domains = samples.iter().map(|s| s.d).max().unwrap() + 1;
        let mut domains: Vec<Vec<Sample>> = (0..num_domains).map(|_| Vec::new()).collect();
        for (row, s) in samples.into_iter().enumerate() {
            if s.x.len() != feature_dim {
                return Err(Error::Data {
                    row,
                    message: format!("feature length {} != {feature_dim}", s.x.len()),
                });
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data {
                    row,
                    message: "non-finite feature value".into(),
                });
            }
            if s.y >= num_classes {
                return Err(Error::Data {
                    row,
                    message: format!("label {} out of range [0, {num_classes})", s.y),
                });
            }
            domains[s.d].push(s);
        }
        if let Some(empty) = domains.iter().position(|d| d.is_empty()) {
            return Err(Error::Config(format!("domain {empty} has no samples")));
        }
        let domain_ids = (0..num_domains).collect();
        Ok(DomainDataset {
            domains,
            domain_ids,
            num_classes,
            feature_dim,
            reads: AtomicU64::new(0),
        })
    }

    pub(crate) fn from_grouped(
        domains: Vec<Vec<Sample>>,
        domain_ids: Vec<usize>,
        num_classes: usize,
        feature_dim: usize,
    ) -> Result<Self, Error> {
        if let Some(empty) = domains.iter().position(|d| d.is_empty()) {
            return Err(Error::Protocol(format!(
                "split left domain {} with no samples",
                domain_ids.get(empty).copied().unwrap_or(empty)
            )));
        }
        Ok(DomainDataset {
            domains,
            domain_ids,
            num_classes,
            feature_dim,
            reads: AtomicU64::new(0),
        })
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn total_len(&self) -> usize {
        self.domains.iter().map(|d| d.len()).sum()
    }

    pub fn domain_len(&self, dense_id: usize) -> usize {
        self.domains[dense_id].len()
    }

    /// Original domain id of each dense slot.
    pub fn domain_ids(&self) -> &[usize] {
        &self.domain_ids
    }

    /// Sample data of one domain. Counts as a read of every sample returned.
    pub fn samples(&self, dense_id: usize) -> &[Sample] {
        let s = &self.domains[dense_id];
        self.reads.fetch_add(s.len() as u64, Ordering::Relaxed);
        s
    }

    /// All samples pooled across domains in dense order. Counts every sample
    /// as read.
    pub fn pooled(&self) -> Vec<&Sample> {
        self.reads
            .fetch_add(self.total_len() as u64, Ordering::Relaxed);
        self.domains.iter().flatten().collect()
    }

    /// How many samples have been handed out since construction.
    pub fn read_count(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    /// First (domain, class) pair with no samples, if any. Training requires
    /// every class in every source domain.
    pub fn missing_class(&self) -> Option<(usize, usize)> {
        for (d, samples) in self.domains.iter().enumerate() {
            for class in 0..self.num_classes {
                if !samples.iter().any(|s| s.y == class) {
                    return Some((self.domain_ids[d], class));
                }
            }
        }
        None
    }

    /// Splits off the domain with original id `target` for evaluation. The
    /// remaining source domains are re-indexed densely; the returned datasets
    /// keep the original ids in [`DomainDataset::domain_ids`].
    pub fn leave_one_out(&self, target: usize) -> Result<(DomainDataset, DomainDataset), Error> {
        let slot = self
            .domain_ids
            .iter()
            .position(|&id| id == target)
            .ok_or_else(|| Error::Protocol(format!("unknown target domain id {target}")))?;
        if self.domains.len() < 3 {
            return Err(Error::Protocol(format!(
                "need at least 2 source domains after holding out {target}, have {}",
                self.domains.len() - 1
            )));
        }
        let mut source_domains = Vec::with_capacity(self.domains.len() - 1);
        let mut source_ids = Vec::with_capacity(self.domains.len() - 1);
        for (i, dom) in self.domains.iter().enumerate() {
            if i == slot {
                continue;
            }
            let dense = source_domains.len();
            source_domains.push(
                dom.iter()
                    .map(|s| Sample {
                        x: s.x.clone(),
                        y: s.y,
                        d: dense,
                    })
                    .collect(),
            );
            source_ids.push(self.domain_ids[i]);
        }
        let target_samples: Vec<Sample> = self.domains[slot]
            .iter()
            .map(|s| Sample {
                x: s.x.clone(),
                y: s.y,
                d: 0,
            })
            .collect();
        let sources = DomainDataset::from_grouped(
            source_domains,
            source_ids,
            self.num_classes,
            self.feature_dim,
        )?;
        let target_ds = DomainDataset::from_grouped(
            alloc::vec![target_samples],
            alloc::vec![target],
            self.num_classes,
            self.feature_dim,
        )?;
        Ok((sources, target_ds))
    }

    /// Mini-batches over a fresh per-epoch shuffle keyed by `(seed, epoch)`.
    /// Every sample appears exactly once; the final short batch is kept.
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: u64) -> Result<Batches<'_>, Error> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let flat: Vec<(usize, usize)> = self
            .domains
            .iter()
            .enumerate()
            .flat_map(|(d, dom)| (0..dom.len()).map(move |i| (d, i)))
            .collect();
        let order = epoch_permutation(flat.len(), derive2(seed, SALT_BATCH_SHUFFLE, epoch));
        Ok(Batches {
            ds: self,
            flat,
            order,
            cursor: 0,
            batch_size,
        })
    }
}

/// Deterministic permutation of `0..n` for a derived key.
pub(crate) fn epoch_permutation(n: usize, key: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(key).shuffle(&mut order);
    order
}

/// One mini-batch in matrix form: `x` is `rows x feature_dim` row-major.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Vec<f64>,
    pub y: Vec<usize>,
    pub d: Vec<usize>,
    pub rows: usize,
}

/// Iterator over one epoch's shuffled mini-batches.
pub struct Batches<'a> {
    ds: &'a DomainDataset,
    flat: Vec<(usize, usize)>,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let rows = end - self.cursor;
        let dim = self.ds.feature_dim;
        let mut x = Vec::with_capacity(rows * dim);
        let mut y = Vec::with_capacity(rows);
        let mut d = Vec::with_capacity(rows);
        for &slot in &self.order[self.cursor..end] {
            let (dom, idx) = self.flat[slot];
            let s = &self.ds.domains[dom][idx];
            x.extend_from_slice(&s.x);
            y.push(s.y);
            d.push(s.d);
        }
        self.cursor = end;
        self.ds.reads.fetch_add(rows as u64, Ordering::Relaxed);
        Some(Batch { x, y, d, rows })
    }
}

/// Generates a synthetic multi-domain dataset. Each domain draws from its
/// own seeded stream at angle zero, then the whole configuration is rotated
/// by the domain's angle, so generation is rotation-equivariant.
pub fn generate(spec: &SyntheticSpec) -> Result<DomainDataset, Error> {
    spec.validate()?;
    let mut domains = Vec::with_capacity(spec.angles_deg.len());
    for (di, &angle) in spec.angles_deg.iter().enumerate() {
        let mut rng = Rng::new(derive2(spec.seed, SALT_DOMAIN_STREAM, di as u64));
        let mut samples = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
        for class in 0..spec.num_classes {
            for _ in 0..spec.samples_per_class {
                let (bx, by) = match spec.family {
                    Family::RotatedBlobs => {
                        let phase =
                            2.0 * core::f64::consts::PI * class as f64 / spec.num_classes as f64;
                        (
                            libm::cos(phase) + spec.noise_sigma * rng.normal(),
                            libm::sin(phase) + spec.noise_sigma * rng.normal(),
                        )
                    }
                    Family::RotatedMoons => {
                        let t = rng.uniform(0.0, core::f64::consts::PI);
                        let (mx, my) = if class == 0 {
                            (libm::cos(t), libm::sin(t))
                        } else {
                            (1.0 - libm::cos(t), 0.5 - libm::sin(t))
                        };
                        (
                            mx + spec.noise_sigma * rng.normal(),
                            my + spec.noise_sigma * rng.normal(),
                        )
                    }
                };
                let (x0, x1) = rotate_xy(bx, by, angle);
                samples.push(Sample {
                    x: alloc::vec![x0, x1],
                    y: class,
                    d: di,
                });
            }
        }
        domains.push(samples);
    }
    let ids = (0..spec.angles_deg.len()).collect();
    DomainDataset::from_grouped(domains, ids, spec.num_classes, 2)
}

/// The benchmark configuration used throughout the tests: 3 blob classes,
/// 4 domains rotated up to 75 degrees, 150 samples per class per domain.
pub fn default_benchmark_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        family: Family::RotatedBlobs,
        num_classes: 3,
        angles_deg: alloc::vec![0.0, 25.0, 50.0, 75.0],
        samples_per_class: 150,
        noise_sigma: 0.25,
        seed,
    }
}

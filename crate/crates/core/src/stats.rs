//! Mini-batch and class-conditional moments of layer activations, the
//! representation-characteristic summary metrics, and PCA of representations.
//!
//! All moments use population normalization (divide by `N` or `|S_k|`):
//!
//! ```text
//! mu_i      = 1/N     sum_n          z_{i,n}
//! c_{i,j}   = 1/N     sum_n          (z_{i,n} - mu_i)(z_{j,n} - mu_j)
//! mu^k_i    = 1/|S_k| sum_{n in S_k} z_{i,n}
//! c^k_{i,j} = 1/|S_k| sum_{n in S_k} (z_{i,n} - mu^k_i)(z_{j,n} - mu^k_j)
//! ```
//!
//! with `v_i = c_{i,i}` and `v^k_i = c^k_{i,i}`. Classes absent from a batch have
//! no per-class entry.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// One layer's activations for a batch of samples (`N x I`) with true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationBatch {
    values: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl ActivationBatch {
    pub fn new(values: Matrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != values.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} activation rows",
                labels.len(),
                values.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Config(format!("label {bad} out of range for {num_classes} classes")));
        }
        Ok(Self { values, labels, num_classes })
    }

    /// Same labels, different activation values of the same shape.
    pub fn with_values(&self, values: Matrix) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::Shape(format!(
                "replacement values {:?} vs batch {:?}",
                values.shape(),
                self.values.shape()
            )));
        }
        Ok(Self { values, labels: self.labels.clone(), num_classes: self.num_classes })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of samples `N`.
    pub fn samples(&self) -> usize {
        self.values.rows()
    }

    /// Number of units `I`.
    pub fn units(&self) -> usize {
        self.values.cols()
    }
}

/// Row indices of each class (`S_k`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    members: Vec<Vec<usize>>,
}

impl ClassPartition {
    pub fn indices(&self, class: usize) -> &[usize] {
        &self.members[class]
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.members.len()
    }

    /// Classes with at least `min` members, with their index sets.
    pub fn classes_with_at_least(&self, min: usize) -> impl Iterator<Item = (usize, &[usize])> {
        self.members
            .iter()
            .enumerate()
            .filter(move |(_, m)| m.len() >= min)
            .map(|(k, m)| (k, m.as_slice()))
    }
}

pub fn partition(batch: &ActivationBatch) -> ClassPartition {
    let mut members = vec![Vec::new(); batch.num_classes];
    for (n, &label) in batch.labels.iter().enumerate() {
        members[label].push(n);
    }
    ClassPartition { members }
}

/// Mean and covariance of one class's samples in a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMoments {
    pub class: usize,
    pub count: usize,
    pub mean: Vec<f64>,
    pub cov: Matrix,
}

impl ClassMoments {
    pub fn var(&self) -> Vec<f64> {
        diagonal(&self.cov)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    /// One entry per class present in the batch, ordered by class id.
    pub per_class: Vec<ClassMoments>,
}

impl MomentSet {
    pub fn var(&self) -> Vec<f64> {
        diagonal(&self.cov)
    }

    pub fn class(&self, k: usize) -> Option<&ClassMoments> {
        self.per_class.iter().find(|c| c.class == k)
    }
}

fn diagonal(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|i| m.get(i, i)).collect()
}

/// Population mean and covariance of the given rows.
pub(crate) fn mean_and_cov(values: &Matrix) -> (Vec<f64>, Matrix) {
    let n = values.rows() as f64;
    let mean = values.col_means();
    let mut centered = values.clone();
    for r in 0..centered.rows() {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = centered.t_matmul(&centered).expect("square product of one matrix");
    let units = cov.rows();
    for i in 0..units {
        for j in i..units {
            let c = cov.get(i, j) / n;
            cov.set(i, j, c);
            cov.set(j, i, c);
        }
    }
    (mean, cov)
}

pub fn moments(batch: &ActivationBatch) -> Result<MomentSet> {
    if batch.samples() == 0 {
        return Err(Error::EmptyBatch);
    }
    let (mean, cov) = mean_and_cov(&batch.values);
    let per_class = partition(batch)
        .classes_with_at_least(1)
        .map(|(class, idx)| {
            let (mean, cov) = mean_and_cov(&batch.values.gather_rows(idx));
            ClassMoments { class, count: idx.len(), mean, cov }
        })
        .collect();
    Ok(MomentSet { mean, cov, per_class })
}

/// Summary statistics of a layer's representation.
///
/// `covariance` is the mean absolute off-diagonal covariance and `variance` the
/// mean unit variance. Correlations are mean absolute Pearson coefficients over
/// unit pairs, skipping zero-variance units; they are `None` when no pair has
/// two units with nonzero variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepCharacteristics {
    pub activation_amplitude: f64,
    pub covariance: f64,
    pub correlation: Option<f64>,
    pub cw_correlation: Option<f64>,
    pub variance: f64,
    pub n_cw_variance: f64,
}

/// Upper limit of the per-unit range used by `n_cw_variance`.
pub const NORMALIZED_RANGE: f64 = 10.0;

/// Computes the characteristics of post-ReLU activations over an evaluation set.
pub fn characteristics(post_relu: &ActivationBatch) -> Result<RepCharacteristics> {
    if post_relu.samples() == 0 {
        return Err(Error::EmptyBatch);
    }
    let values = post_relu.values();
    let units = post_relu.units();

    let (pos_sum, pos_count) = values
        .as_slice()
        .iter()
        .filter(|&&v| v > 0.0)
        .fold((0.0, 0usize), |(s, c), &v| (s + v, c + 1));
    let activation_amplitude = if pos_count == 0 { 0.0 } else { pos_sum / pos_count as f64 };

    let m = moments(post_relu)?;
    let var = m.var();
    let variance = var.iter().sum::<f64>() / units as f64;
    let covariance = if units < 2 {
        0.0
    } else {
        let mut total = 0.0;
        for i in 0..units {
            for j in (i + 1)..units {
                total += m.cov.get(i, j).abs();
            }
        }
        total / (units * (units - 1) / 2) as f64
    };
    let correlation = mean_abs_correlation(&m.cov);

    let class_corrs: Vec<f64> = m
        .per_class
        .iter()
        .filter(|c| c.count >= 2)
        .filter_map(|c| mean_abs_correlation(&c.cov))
        .collect();
    let cw_correlation = if class_corrs.is_empty() {
        None
    } else {
        Some(class_corrs.iter().sum::<f64>() / class_corrs.len() as f64)
    };

    Ok(RepCharacteristics {
        activation_amplitude,
        covariance,
        correlation,
        cw_correlation,
        variance,
        n_cw_variance: normalized_cw_variance(post_relu),
    })
}

fn mean_abs_correlation(cov: &Matrix) -> Option<f64> {
    let live: Vec<usize> = (0..cov.rows()).filter(|&i| cov.get(i, i) > 0.0).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in live.iter().enumerate() {
        for &j in &live[a + 1..] {
            let r = cov.get(i, j) / (cov.get(i, i) * cov.get(j, j)).sqrt();
            total += r.abs().min(1.0);
            pairs += 1;
        }
    }
    (pairs > 0).then(|| total / pairs as f64)
}

/// Mean per-class variance after mapping each unit's range over the batch onto
/// `[0, NORMALIZED_RANGE]`. Units with zero range map to 0.
fn normalized_cw_variance(batch: &ActivationBatch) -> f64 {
    let values = batch.values();
    let units = batch.units();
    let mut lo = vec![f64::INFINITY; units];
    let mut hi = vec![f64::NEG_INFINITY; units];
    for r in 0..values.rows() {
        for (i, &v) in values.row(r).iter().enumerate() {
            lo[i] = lo[i].min(v);
            hi[i] = hi[i].max(v);
        }
    }
    let scaled = Matrix::from_vec(
        values.rows(),
        units,
        values
            .as_slice()
            .iter()
            .enumerate()
            .map(|(idx, &v)| {
                let i = idx % units;
                let range = hi[i] - lo[i];
                if range > 0.0 {
                    (v - lo[i]) / range * NORMALIZED_RANGE
                } else {
                    0.0
                }
            })
            .collect(),
    )
    .expect("same shape as input");

    let parts = partition(batch);
    let mut total = 0.0;
    let mut classes = 0usize;
    for (_, idx) in parts.classes_with_at_least(1) {
        let rows = scaled.gather_rows(idx);
        let mean = rows.col_means();
        let n = idx.len() as f64;
        let mut var_sum = 0.0;
        for r in 0..rows.rows() {
            for (v, m) in rows.row(r).iter().zip(&mean) {
                var_sum += (v - m) * (v - m);
            }
        }
        total += var_sum / n / units as f64;
        classes += 1;
    }
    total / classes as f64
}

/// Principal components of a batch of representations.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Centered data projected onto the components, `N x components`.
    pub projection: Matrix,
    /// Unit-norm principal axes as columns, `I x components`.
    pub axes: Matrix,
    /// Variance captured by each component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// `explained_variance` as fractions of the total variance.
    pub explained_ratio: Vec<f64>,
    /// Set when fewer components than requested carry nonzero variance.
    pub rank_deficient: bool,
}

/// Relative eigenvalue cutoff below which a direction counts as empty.
const RANK_TOLERANCE: f64 = 1e-10;

pub fn pca(batch: &ActivationBatch, components: usize) -> Result<Pca> {
    let (n, units) = batch.values().shape();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if components == 0 || components > n.min(units) {
        return Err(Error::Config(format!(
            "{components} components requested from a {n}x{units} batch"
        )));
    }
    let (mean, cov) = mean_and_cov(batch.values());
    let total: f64 = diagonal(&cov).iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("batch has zero total variance".into()));
    }

    let eig = SymmetricEigen::new(DMatrix::from_row_slice(units, units, cov.as_slice()));
    let mut order: Vec<usize> = (0..units).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let kept: Vec<usize> = order
        .into_iter()
        .take(components)
        .filter(|&k| eig.eigenvalues[k] > RANK_TOLERANCE * top)
        .collect();

    let mut axes = Matrix::zeros(units, kept.len());
    for (c, &k) in kept.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        // fix the sign so the largest-magnitude coordinate is positive
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..units {
            axes.set(i, c, sign * v[i]);
        }
    }

    let mut centered = batch.values().clone();
    for r in 0..n {
        for (v, m) in centered.row_mut(r).iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let projection = centered.matmul(&axes)?;
    let explained_variance: Vec<f64> = kept.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let explained_ratio = explained_variance.iter().map(|v| v / total).collect();
    Ok(Pca {
        projection,
        axes,
        rank_deficient: kept.len() < components,
        explained_variance,
        explained_ratio,
    })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(sym: &Matrix) -> f64 {
    let n = sym.rows();
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, sym.as_slice()));
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn batch(rows: &[&[f64]], labels: &[usize], k: usize) -> ActivationBatch {
        ActivationBatch::new(Matrix::from_rows(rows).unwrap(), labels.to_vec(), k).unwrap()
    }

    /// Explicit double-loop evaluation of the moment definitions.
    fn naive_moments(z: &Matrix, idx: &[usize]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let units = z.cols();
        let n = idx.len() as f64;
        let mut mu = vec![0.0; units];
        for i in 0..units {
            for &s in idx {
                mu[i] += z.get(s, i);
            }
            mu[i] /= n;
        }
        let mut c = vec![vec![0.0; units]; units];
        for i in 0..units {
            for j in 0..units {
                for &s in idx {
                    c[i][j] += (z.get(s, i) - mu[i]) * (z.get(s, j) - mu[j]);
                }
                c[i][j] /= n;
            }
        }
        (mu, c)
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-15
    }

    #[test]
    fn partition_examples() {
        let p = partition(&batch(&[&[0.0], &[1.0], &[2.0]], &[0, 1, 0], 2));
        assert_eq!(p.indices(0), &[0, 2]);
        assert_eq!(p.indices(1), &[1]);

        let p = partition(&batch(&[&[0.0], &[1.0]], &[0, 0], 3));
        assert_eq!(p.cardinalities(), vec![2, 0, 0]);

        let p = partition(&batch(&[&[0.0], &[0.0], &[0.0], &[0.0]], &[2, 2, 1, 0], 3));
        assert_eq!(p.cardinalities(), vec![1, 1, 2]);
    }

    #[test]
    fn rejects_bad_labels() {
        let v = Matrix::zeros(2, 1);
        assert!(ActivationBatch::new(v.clone(), vec![0], 2).is_err());
        assert!(ActivationBatch::new(v, vec![0, 2], 2).is_err());
    }

    #[test]
    fn empty_batch_is_fatal() {
        let b = ActivationBatch::new(Matrix::zeros(0, 3), vec![], 2).unwrap();
        assert!(matches!(moments(&b), Err(Error::EmptyBatch)));
    }

    #[test]
    fn identical_rows_have_zero_covariance() {
        let m = moments(&batch(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]], &[0, 1, 1], 2)).unwrap();
        assert_eq!(m.cov, Matrix::zeros(2, 2));
    }

    #[test]
    fn population_variance_of_two_samples() {
        let m = moments(&batch(&[&[0.0], &[2.0]], &[0, 0], 1)).unwrap();
        assert_eq!(m.mean, vec![1.0]);
        assert_eq!(m.var(), vec![1.0]);
    }

    #[test]
    fn covariance_of_scaled_copy() {
        let m = moments(&batch(&[&[1.0, 2.0], &[3.0, 6.0], &[-2.0, -4.0]], &[0, 0, 0], 1)).unwrap();
        let v1 = m.var()[0];
        assert!(close(m.cov.get(0, 1), 2.0 * v1, 1e-14));
    }

    #[test]
    fn absent_classes_are_skipped() {
        let m = moments(&batch(&[&[1.0], &[2.0]], &[2, 2], 4)).unwrap();
        assert_eq!(m.per_class.len(), 1);
        assert_eq!(m.per_class[0].class, 2);
        assert!(m.class(0).is_none());
    }

    #[test]
    fn amplitude_of_all_zero_batch() {
        let c = characteristics(&batch(&[&[0.0, 0.0], &[0.0, 0.0]], &[0, 1], 2)).unwrap();
        assert_eq!(c.activation_amplitude, 0.0);
        assert_eq!(c.correlation, None);
        assert_eq!(c.cw_correlation, None);
        assert_eq!(c.n_cw_variance, 0.0);
    }

    #[test]
    fn perfectly_dependent_units_correlate_fully() {
        let c = characteristics(&batch(
            &[&[1.0, 3.0, 0.0], &[2.0, 5.0, 0.0], &[4.0, 9.0, 0.0]],
            &[0, 0, 0],
            1,
        ))
        .unwrap();
        // the dead third unit is excluded from the average
        assert!(close(c.correlation.unwrap(), 1.0, 1e-12));
        assert!(close(c.cw_correlation.unwrap(), 1.0, 1e-12));
        assert!(close(c.activation_amplitude, 24.0 / 6.0, 1e-15));
    }

    #[test]
    fn normalized_cw_variance_ignores_scale() {
        let b = batch(&[&[0.0, 1.0], &[2.0, 3.0], &[4.0, 1.0], &[8.0, 0.0]], &[0, 0, 1, 1], 2);
        let a = characteristics(&b).unwrap();
        let scaled = b.with_values(b.values().scale(0.01)).unwrap();
        let s = characteristics(&scaled).unwrap();
        assert!(close(a.n_cw_variance, s.n_cw_variance, 1e-12));
        assert!(s.variance < a.variance);
        // unit 0 maps to {0, 2.5, 5, 10}, unit 1 to {10/3, 10, 10/3, 0}
        let class0 = (1.25f64.powi(2) + (10.0f64 / 3.0).powi(2)) / 2.0;
        let class1 = (2.5f64.powi(2) + (5.0f64 / 3.0).powi(2)) / 2.0;
        let want = (class0 + class1) / 2.0;
        assert!(close(a.n_cw_variance, want, 1e-12), "{} vs {want}", a.n_cw_variance);
    }

    #[test]
    fn pca_of_points_on_a_line() {
        let rows: Vec<Vec<f64>> = (0..20).map(|t| {
            let t = t as f64 - 7.0;
            vec![1.0 + 2.0 * t, -t, 0.5 * t]
        }).collect();
        let b = ActivationBatch::new(Matrix::from_rows(&rows).unwrap(), vec![0; 20], 1).unwrap();
        let p = pca(&b, 1).unwrap();
        assert!(close(p.explained_ratio[0], 1.0, 1e-12));
        let p = pca(&b, 3).unwrap();
        assert!(p.rank_deficient);
        assert_eq!(p.projection.cols(), 1);
    }

    #[test]
    fn pca_projection_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..60 * 5).map(|_| rng.gen_range(-3.0..5.0)).collect();
        let b = ActivationBatch::new(Matrix::from_vec(60, 5, data).unwrap(), vec![0; 60], 1).unwrap();
        let p = pca(&b, 3).unwrap();
        assert_eq!(p.projection.shape(), (60, 3));
        for m in p.projection.col_means() {
            assert!(m.abs() < 1e-10);
        }
        assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pca_isotropic_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..10_000 * 2).map(|_| rng.sample(StandardNormal)).collect();
        let b = ActivationBatch::new(Matrix::from_vec(10_000, 2, data).unwrap(), vec![0; 10_000], 1).unwrap();
        let p = pca(&b, 2).unwrap();
        let (a, c) = (p.explained_variance[0], p.explained_variance[1]);
        assert!((a - c) / a < 0.2, "{a} vs {c}");
    }

    #[test]
    fn pca_rejects_bad_requests() {
        let b = batch(&[&[1.0, 1.0], &[1.0, 1.0]], &[0, 0], 1);
        assert!(pca(&b, 1).is_err());
        let b = batch(&[&[1.0, 0.0], &[0.0, 1.0]], &[0, 0], 1);
        assert!(pca(&b, 3).is_err());
    }

    fn arb_batch() -> impl Strategy<Value = ActivationBatch> {
        (1usize..=50, 1usize..=10, 1usize..=5).prop_flat_map(|(n, units, k)| {
            (
                proptest::collection::vec(-3.0f64..3.0, n * units),
                proptest::collection::vec(0..k, n),
            )
                .prop_map(move |(d, l)| {
                    ActivationBatch::new(Matrix::from_vec(n, units, d).unwrap(), l, k).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn moments_match_naive_loops(b in arb_batch()) {
            let m = moments(&b).unwrap();
            let all: Vec<usize> = (0..b.samples()).collect();
            let (mu, c) = naive_moments(b.values(), &all);
            for i in 0..b.units() {
                prop_assert!(close(m.mean[i], mu[i], 1e-12));
                for j in 0..b.units() {
                    prop_assert!(close(m.cov.get(i, j), c[i][j], 1e-12) || (m.cov.get(i, j) - c[i][j]).abs() < 1e-13);
                }
            }
            for cm in &m.per_class {
                let (mu, c) = naive_moments(b.values(), partition(&b).indices(cm.class));
                for i in 0..b.units() {
                    prop_assert!(close(cm.mean[i], mu[i], 1e-12));
                    for j in 0..b.units() {
                        prop_assert!((cm.cov.get(i, j) - c[i][j]).abs() < 1e-12 * (1.0 + c[i][j].abs()));
                    }
                }
            }
        }

        #[test]
        fn moment_set_invariants(b in arb_batch()) {
            let m = moments(&b).unwrap();
            let n = b.samples() as f64;
            for i in 0..b.units() {
                let recombined: f64 = m.per_class.iter().map(|c| c.count as f64 / n * c.mean[i]).sum();
                prop_assert!((recombined - m.mean[i]).abs() <= 1e-12 * (1.0 + m.mean[i].abs()));
                let within: f64 = m.per_class.iter().map(|c| c.count as f64 / n * c.var()[i]).sum();
                prop_assert!(within <= m.var()[i] + 1e-12);
                prop_assert!(m.var()[i] >= 0.0);
            }
            prop_assert_eq!(m.cov.clone(), m.cov.transpose());
            prop_assert!(min_eigenvalue(&m.cov) >= -1e-9);
        }

        #[test]
        fn moments_are_permutation_invariant(b in arb_batch(), shift in 0usize..50) {
            let n = b.samples();
            let order: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
            let labels: Vec<usize> = order.iter().map(|&i| b.labels()[i]).collect();
            let permuted = ActivationBatch::new(b.values().gather_rows(&order), labels, b.num_classes()).unwrap();
            let (m, p) = (moments(&b).unwrap(), moments(&permuted).unwrap());
            prop_assert!(m.cov.max_abs_diff(&p.cov) < 1e-12);
            for (a, c) in m.mean.iter().zip(&p.mean) {
                prop_assert!((a - c).abs() < 1e-12);
            }
        }

        #[test]
        fn scaling_scales_moments(b in arb_batch(), s in -4.0f64..4.0) {
            let scaled = b.with_values(b.values().scale(s)).unwrap();
            let (m, p) = (moments(&b).unwrap(), moments(&scaled).unwrap());
            prop_assert!(m.cov.scale(s * s).max_abs_diff(&p.cov) < 1e-11);
            for (a, c) in m.mean.iter().zip(&p.mean) {
                prop_assert!((a * s - c).abs() < 1e-12);
            }
        }

        #[test]
        fn correlations_stay_in_unit_interval(b in arb_batch()) {
            let c = characteristics(&b).unwrap();
            for r in [c.correlation, c.cw_correlation].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&r));
            }
            prop_assert!(c.n_cw_variance >= 0.0);
        }
    }
}

//! Small dense helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Columns are unit eigenvectors matching `values`.
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn min_vector(&self) -> DVector<f64> {
        self.vectors.column(0).into_owned()
    }
}

pub fn sym_eigen(a: &DMatrix<f64>) -> SortedEigen {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    // stable sort keeps ties in solver order, which is deterministic
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(a.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    SortedEigen { values, vectors }
}

/// Eigenvalues only, sorted ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    DVector::from_vec(v)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `‖A − Aᵀ‖_F`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).norm()
}

/// The `r`-th largest singular value of an `n × r` factor together with a unit
/// right-singular vector `q` (so `‖Xq‖ = σ_r`).
///
/// When `σ_r` is zero and `X` has an all-zero column, `q` is the standard basis
/// vector of the lowest such column.
pub fn smallest_right_singular(x: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let r = x.ncols();
    if let Some(k) = (0..r).find(|&k| x.column(k).iter().all(|v| *v == 0.0)) {
        let mut q = DVector::zeros(r);
        q[k] = 1.0;
        return (0.0, q);
    }
    let gram = x.transpose() * x;
    let eig = sym_eigen(&gram);
    let sigma = if x.nrows() < r { 0.0 } else { eig.min().max(0.0).sqrt() };
    (sigma, eig.min_vector())
}

/// Eigenvalues of a symmetric matrix that exceed `rel_tol · λ_max` in count.
pub fn numerical_rank_psd(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let eig = sym_eigen(m);
    let top = eig.max();
    if top <= 0.0 {
        return 0;
    }
    eig.values.iter().filter(|&&v| v > rel_tol * top).count()
}

/// `ℓ_p` norm of a vector for real `p ≥ 1`.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeded generator on a separate stream, so two consumers of one seed never
/// share draws.
pub fn seeded_rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matrix of i.i.d. standard normal entries, filled column by column.
pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// 17 significant digits, round-trippable.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_ascending() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 5.0]);
        let e = sym_eigen(&a);
        assert_eq!(e.values.as_slice(), &[-1.0, 2.0, 5.0]);
        assert!((e.min_vector()[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_direction_of_padded_factor() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        let (s, q) = smallest_right_singular(&x);
        assert_eq!(s, 0.0);
        assert_eq!(q.as_slice(), &[0.0, 1.0]);

        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.5]);
        let (s, q) = smallest_right_singular(&x);
        assert!((s - 0.5).abs() < 1e-14);
        assert!((q[1].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wide_factor_has_zero_sigma_r() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_eq!(smallest_right_singular(&x).0, 0.0);
    }

    #[test]
    fn rank_of_outer_product() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(numerical_rank_psd(&(&v * v.transpose()), 1e-10), 1);
        assert_eq!(numerical_rank_psd(&DMatrix::zeros(3, 3), 1e-10), 0);
    }

    #[test]
    fn formatting_has_17_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
